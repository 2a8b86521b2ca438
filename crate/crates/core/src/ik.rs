//! Whole-body numeric inverse kinematics and the base-error robustness score
//! used to pick goal states that tolerate base positioning error.

use std::f64::consts::PI;

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{EePoseConstraint, SATISFY_TOL_POS, SATISFY_TOL_ROT};
use crate::environment::{is_collision_metered, Environment, ObstacleView};
use crate::meter::{Meter, Work};
use crate::model::{wrap_angle, JointKind, Pose, RobotModel, BASE_DOFS, BASE_X, BASE_Y, BASE_YAW};

/// Which base DOFs the solver may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseLock {
    Free,
    /// x and y fixed; yaw free.
    Position,
    /// x, y and yaw fixed.
    Full,
}

impl BaseLock {
    fn frees(self, dof: usize) -> bool {
        match self {
            BaseLock::Free => true,
            BaseLock::Position => dof >= BASE_YAW,
            BaseLock::Full => dof >= BASE_DOFS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    pub damping: f64,
    pub max_iterations: usize,
    pub step_clamp: f64,
    /// Convergence thresholds; tighter than the acceptance slack of goal
    /// checks so that converged states always pass them.
    pub tol_pos: f64,
    pub tol_rot: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig {
            damping: 0.01,
            max_iterations: 100,
            step_clamp: 0.3,
            tol_pos: 1e-5,
            tol_rot: 1e-4,
        }
    }
}

/// Pose error twist `(linear, angular)` taking `current` to `target`.
fn pose_error(current: &Pose, target: &Pose) -> Vector6<f64> {
    let dp = target.translation.vector - current.translation.vector;
    let dr = (target.rotation * current.rotation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Geometric Jacobian columns of the end effector, one per DOF.
fn jacobian(model: &RobotModel, positions: &[f64], links: &[Pose], ee: &Pose, out: &mut Vec<Vector6<f64>>) {
    out.clear();
    let p = ee.translation.vector;
    out.push(Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    out.push(Vector6::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0));
    let base = Vector3::new(positions[BASE_X], positions[BASE_Y], 0.0);
    let lin = Vector3::z().cross(&(p - base));
    out.push(Vector6::new(lin.x, lin.y, lin.z, 0.0, 0.0, 1.0));
    for j in 0..model.joints().len() {
        let frame = &links[j + 1];
        let axis = frame.rotation * model.joint_axis(j).into_inner();
        match model.joint_kind(j) {
            JointKind::Revolute => {
                let l = axis.cross(&(p - frame.translation.vector));
                out.push(Vector6::new(l.x, l.y, l.z, axis.x, axis.y, axis.z));
            }
            JointKind::Prismatic => out.push(Vector6::new(axis.x, axis.y, axis.z, 0.0, 0.0, 0.0)),
        }
    }
}

/// Residual check recomputed from forward kinematics.
pub fn pose_residual(model: &RobotModel, positions: &[f64], target: &Pose) -> (f64, f64) {
    let ee = model.ee_pose(positions);
    let e = pose_error(&ee, target);
    (e.fixed_rows::<3>(0).norm(), e.fixed_rows::<3>(3).norm())
}

/// Damped least-squares IK from `seed`. Locked DOFs keep their seed values.
/// Returns positions within limits whose end-effector pose matches `target`
/// to the configured tolerance, or `None`.
pub fn solve_ik_numeric(
    model: &RobotModel,
    target: &Pose,
    seed: &[f64],
    lock: BaseLock,
    cfg: &IkConfig,
    meter: &Meter,
) -> Option<Vec<f64>> {
    let n = model.dof();
    let mut q = seed.to_vec();
    model.clamp_positions(&mut q);
    let mut links = Vec::with_capacity(n);
    let mut cols = Vec::with_capacity(n);
    let lambda2 = cfg.damping * cfg.damping;
    for iter in 0..=cfg.max_iterations {
        model.link_poses_into(&q, &mut links);
        let ee = model.ee_from_links(&links);
        let e = pose_error(&ee, target);
        let ep = e.fixed_rows::<3>(0).norm();
        let er = e.fixed_rows::<3>(3).norm();
        if ep <= cfg.tol_pos && er <= cfg.tol_rot {
            return Some(q);
        }
        if iter == cfg.max_iterations {
            break;
        }
        meter.charge(Work::IkIteration, 1);
        jacobian(model, &q, &links, &ee, &mut cols);
        let mut jjt = Matrix6::<f64>::identity() * lambda2;
        for (dof, c) in cols.iter().enumerate() {
            if lock.frees(dof) {
                jjt += c * c.transpose();
            }
        }
        let y = jjt.cholesky()?.solve(&e);
        let mut dq: Vec<f64> = cols
            .iter()
            .enumerate()
            .map(|(dof, c)| if lock.frees(dof) { c.dot(&y) } else { 0.0 })
            .collect();
        let biggest = dq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if biggest > cfg.step_clamp {
            let s = cfg.step_clamp / biggest;
            dq.iter_mut().for_each(|v| *v *= s);
        }
        for (qi, d) in q.iter_mut().zip(&dq) {
            *qi += d;
        }
        model.clamp_positions(&mut q);
    }
    None
}

/// Seeding and retry policy for constraint-driven IK sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkSampleConfig {
    pub retries: usize,
    /// Half-width [m] of the square around the target in which base seeds
    /// are drawn.
    pub base_seed_radius: f64,
    /// Use the model's analytic base placement heuristic when it has one.
    pub base_heuristic: bool,
    pub ik: IkConfig,
}

impl Default for IkSampleConfig {
    fn default() -> Self {
        IkSampleConfig {
            retries: 10,
            base_seed_radius: 2.0,
            base_heuristic: true,
            ik: IkConfig::default(),
        }
    }
}

/// Random whole-body seed for a target position.
fn random_seed<R: Rng + ?Sized>(model: &RobotModel, target: &Vector3<f64>, cfg: &IkSampleConfig, rng: &mut R) -> Vec<f64> {
    let mut q = vec![0.0; model.dof()];
    for (i, v) in q.iter_mut().enumerate().skip(BASE_DOFS) {
        *v = rng.random_range(model.lower()[i]..=model.upper()[i]);
    }
    let r = cfg.base_seed_radius;
    match model.base_heuristic().filter(|_| cfg.base_heuristic) {
        Some(h) => {
            // Put the target in the arm's plane, a random reach ahead of it.
            let yaw = rng.random_range(-PI..PI);
            let ahead = rng.random_range(0.3..0.65);
            let (s, c) = yaw.sin_cos();
            q[BASE_X] = target.x - c * ahead + s * h.lateral_offset;
            q[BASE_Y] = target.y - s * ahead - c * h.lateral_offset;
            q[BASE_YAW] = yaw;
        }
        None => {
            q[BASE_X] = target.x + rng.random_range(-r..=r);
            q[BASE_Y] = target.y + rng.random_range(-r..=r);
            q[BASE_YAW] = rng.random_range(-PI..PI);
        }
    }
    model.clamp_positions(&mut q);
    q
}

/// Draws a pose from `c` and solves for it from random seeds. The returned
/// state is verified against the constraint by forward kinematics.
pub fn sample_ik_from_constraint<R: Rng + ?Sized>(
    model: &RobotModel,
    c: &EePoseConstraint,
    rng: &mut R,
    cfg: &IkSampleConfig,
    meter: &Meter,
) -> Option<Vec<f64>> {
    for _ in 0..cfg.retries {
        let target = c.sample_pose(rng);
        let seed = random_seed(model, &target.translation.vector, cfg, rng);
        if let Some(q) = solve_ik_numeric(model, &target, &seed, BaseLock::Free, &cfg.ik, meter) {
            if model.within_limits(&q) && c.contains_pose(&model.ee_pose(&q), SATISFY_TOL_POS, SATISFY_TOL_ROT) {
                return Some(q);
            }
        }
    }
    None
}

/// Isotropic Gaussian model of base positioning error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseErrorModel {
    pub sigma: f64,
    /// Integration half-extent in multiples of sigma.
    pub grid_halfwidth: f64,
    /// Odd number of cells per axis.
    pub grid_n: usize,
}

impl Default for BaseErrorModel {
    fn default() -> Self {
        BaseErrorModel { sigma: 0.03, grid_halfwidth: 3.0, grid_n: 7 }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

impl BaseErrorModel {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.sigma > 0.0) || self.grid_n < 3 || self.grid_n.is_multiple_of(2) || !(self.grid_halfwidth > 0.0) {
            return Err(crate::Error::Config(
                "base error model needs sigma > 0, halfwidth > 0 and an odd grid_n >= 3".into(),
            ));
        }
        Ok(())
    }

    /// Largest base displacement any grid cell represents.
    pub fn max_offset(&self) -> f64 {
        let h = self.grid_halfwidth * self.sigma;
        let n = self.grid_n as f64;
        let center = h - h / n;
        center * std::f64::consts::SQRT_2
    }

    /// Grid cells as `(dx, dy, weight)`: cell centers and the Gaussian mass
    /// of each cell, normalized so the weights sum to one. Cells are ordered
    /// row-major from the most negative offset.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let n = self.grid_n;
        let h = self.grid_halfwidth;
        let width = 2.0 * h / n as f64;
        let mass: Vec<f64> = (0..n)
            .map(|k| {
                let a = -h + k as f64 * width;
                std_normal_cdf(a + width) - std_normal_cdf(a)
            })
            .collect();
        let total: f64 = mass.iter().sum();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let dx = (-h + (i as f64 + 0.5) * width) * self.sigma;
                let dy = (-h + (j as f64 + 0.5) * width) * self.sigma;
                out.push((dx, dy, mass[i] * mass[j] / (total * total)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustIkConfig {
    pub continuation_steps: usize,
    pub max_joint_step: f64,
    pub robust_fraction: f64,
    pub max_solutions: usize,
    pub pool_size: usize,
    /// Collision margin for continuation states.
    pub collision_margin: f64,
}

impl Default for RobustIkConfig {
    fn default() -> Self {
        RobustIkConfig {
            continuation_steps: 3,
            max_joint_step: 0.2,
            robust_fraction: 0.5,
            max_solutions: 16,
            pool_size: 16,
            collision_margin: 0.0,
        }
    }
}

impl RobustIkConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.continuation_steps == 0 || !(self.robust_fraction > 0.0 && self.robust_fraction <= 1.0) {
            return Err(crate::Error::Config(
                "robust IK needs continuation_steps >= 1 and robust_fraction in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Walks the base from `q0` to `q0 + (dx, dy)` in straight substeps while
/// holding the end effector at `target`. Returns the final state, or `None`
/// when a substep fails, jumps, leaves limits or collides.
#[allow(clippy::too_many_arguments)]
pub fn continue_ik(
    model: &RobotModel,
    q0: &[f64],
    target: &Pose,
    dx: f64,
    dy: f64,
    view: &ObstacleView,
    cfg: &RobustIkConfig,
    ik: &IkConfig,
    meter: &Meter,
) -> Option<Vec<f64>> {
    let mut prev = q0.to_vec();
    for k in 1..=cfg.continuation_steps {
        let f = k as f64 / cfg.continuation_steps as f64;
        let mut seed = prev.clone();
        seed[BASE_X] = q0[BASE_X] + f * dx;
        seed[BASE_Y] = q0[BASE_Y] + f * dy;
        if !model.within_limits(&seed) {
            return None;
        }
        let q = solve_ik_numeric(model, target, &seed, BaseLock::Position, ik, meter)?;
        let jump = q
            .iter()
            .zip(&prev)
            .enumerate()
            .skip(BASE_YAW)
            .map(|(i, (a, b))| if i == BASE_YAW { wrap_angle(a - b).abs() } else { (a - b).abs() })
            .fold(0.0, f64::max);
        if jump > cfg.max_joint_step || !model.within_limits(&q) {
            return None;
        }
        if is_collision_metered(model, &q, view, cfg.collision_margin, meter) {
            return None;
        }
        prev = q;
    }
    Some(prev)
}

/// Expected existence of a continuous IK solution under base error:
/// the Gaussian-weighted fraction of grid offsets whose continuation
/// succeeds. Cells are summed in a fixed order.
pub fn robustness(
    model: &RobotModel,
    q0: &[f64],
    env: &Environment,
    err: &BaseErrorModel,
    cfg: &RobustIkConfig,
    ik: &IkConfig,
    meter: &Meter,
) -> f64 {
    let view = env.sample_env_padded(model, q0, err.max_offset());
    if is_collision_metered(model, q0, &view, cfg.collision_margin, meter) {
        return 0.0;
    }
    let target = model.ee_pose(q0);
    let mut r = 0.0;
    for (dx, dy, w) in err.cells() {
        if continue_ik(model, q0, &target, dx, dy, &view, cfg, ik, meter).is_some() {
            r += w;
        }
    }
    r.clamp(0.0, 1.0)
}

/// Goal state with its robustness score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredState {
    pub positions: Vec<f64>,
    pub robustness: f64,
}

/// Keeps states scoring at least `fraction` of the best score, best first
/// (stable among ties), capped at `cap`.
pub fn select_robust(mut pool: Vec<ScoredState>, fraction: f64, cap: usize) -> Vec<ScoredState> {
    let best = pool.iter().map(|s| s.robustness).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Vec::new();
    }
    pool.retain(|s| s.robustness >= fraction * best);
    pool.sort_by(|a, b| b.robustness.total_cmp(&a.robustness));
    pool.truncate(cap);
    pool
}

/// Robust goal states for `c`: a pool of IK solutions, collision states
/// dropped, each scored by [`robustness`], filtered by [`select_robust`].
#[allow(clippy::too_many_arguments)]
pub fn solve_robust_ik<R: Rng + ?Sized>(
    model: &RobotModel,
    c: &EePoseConstraint,
    env: &Environment,
    rng: &mut R,
    err: &BaseErrorModel,
    cfg: &RobustIkConfig,
    sample: &IkSampleConfig,
    meter: &Meter,
) -> Vec<ScoredState> {
    let mut pool = Vec::with_capacity(cfg.pool_size);
    for _ in 0..cfg.pool_size {
        let Some(q) = sample_ik_from_constraint(model, c, rng, sample, meter) else { continue };
        let view = env.sample_env(model, &q, 0.0);
        if is_collision_metered(model, &q, &view, env.margin(), meter) {
            continue;
        }
        let robustness = robustness(model, &q, env, err, cfg, &sample.ik, meter);
        pool.push(ScoredState { positions: q, robustness });
    }
    select_robust(pool, cfg.robust_fraction, cfg.max_solutions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::TsrBounds;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(model: &RobotModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..model.dof())
            .map(|i| {
                if i == BASE_YAW {
                    rng.random_range(-PI..PI)
                } else if i < BASE_DOFS {
                    rng.random_range(-1.0..1.0)
                } else {
                    rng.random_range(model.lower()[i]..=model.upper()[i])
                }
            })
            .collect()
    }

    #[test]
    fn fixed_point_returns_seed() {
        let model = RobotModel::bundled("panda-like").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_state(&model, &mut rng);
        let meter = Meter::default();
        let out = solve_ik_numeric(&model, &model.ee_pose(&q), &q, BaseLock::Free, &IkConfig::default(), &meter).unwrap();
        assert_eq!(out, q);
        assert_eq!(meter.counts().get(Work::IkIteration), 0);
    }

    #[test]
    fn reachable_targets_converge() {
        for name in ["hsr-like", "panda-like"] {
            let model = RobotModel::bundled(name).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let meter = Meter::default();
            let mut ok = 0;
            for _ in 0..50 {
                let goal = random_state(&model, &mut rng);
                let target = model.ee_pose(&goal);
                let c = EePoseConstraint::exact(target);
                if let Some(q) = sample_ik_from_constraint(&model, &c, &mut rng, &IkSampleConfig::default(), &meter) {
                    let (ep, er) = pose_residual(&model, &q, &target);
                    assert!(ep < 1e-4 && er < 1e-3, "{name}: residual {ep} {er}");
                    assert!(model.within_limits(&q));
                    ok += 1;
                }
            }
            assert!(ok >= 40, "{name}: only {ok}/50 converged");
        }
    }

    #[test]
    fn far_target_fails() {
        let model = RobotModel::bundled("hsr-like").unwrap();
        let target = Pose::translation(100.0, 0.0, 0.5);
        let seed = vec![0.0; model.dof()];
        let meter = Meter::default();
        assert!(solve_ik_numeric(&model, &target, &seed, BaseLock::Position, &IkConfig::default(), &meter).is_none());
        let c = EePoseConstraint::exact(target);
        let cfg = IkSampleConfig { retries: 0, ..Default::default() };
        assert!(sample_ik_from_constraint(&model, &c, &mut ChaCha8Rng::seed_from_u64(0), &cfg, &meter).is_none());
    }

    #[test]
    fn locked_dofs_do_not_move() {
        let model = RobotModel::bundled("panda-like").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let meter = Meter::default();
        for _ in 0..20 {
            let q = random_state(&model, &mut rng);
            let mut seed = q.clone();
            for v in seed.iter_mut().skip(BASE_DOFS) {
                *v += 0.05;
            }
            model.clamp_positions(&mut seed);
            if let Some(out) =
                solve_ik_numeric(&model, &model.ee_pose(&q), &seed, BaseLock::Full, &IkConfig::default(), &meter)
            {
                assert_eq!(&out[..BASE_DOFS], &seed[..BASE_DOFS]);
            }
        }
    }

    #[test]
    fn cell_weights_match_gaussian_masses() {
        let err = BaseErrorModel::default();
        let cells = err.cells();
        assert_eq!(cells.len(), 49);
        let total: f64 = cells.iter().map(|c| c.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Unnormalized mass inside +-3 sigma per axis is 0.9973; the center
        // cell spans +-3/7 sigma.
        let center = cells[24];
        assert_eq!((center.0, center.1), (0.0, 0.0));
        let c1 = (std_normal_cdf(3.0 / 7.0) - std_normal_cdf(-3.0 / 7.0)) / (std_normal_cdf(3.0) - std_normal_cdf(-3.0));
        assert!((center.2 - c1 * c1).abs() < 1e-12);
        assert!((cells[0].0 + 6.0 / 7.0 * 3.0 * 0.03).abs() < 1e-12);
    }

    #[test]
    fn select_robust_threshold_and_ties() {
        let s = |r: f64, tag: f64| ScoredState { positions: vec![tag], robustness: r };
        let out = select_robust(vec![s(0.3, 0.0), s(0.9, 1.0), s(0.3, 2.0)], 0.5, 16);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].positions, vec![1.0]);
        let out = select_robust(vec![s(0.4, 0.0), s(0.4, 1.0), s(0.4, 2.0)], 0.5, 2);
        assert_eq!(out.iter().map(|x| x.positions[0]).collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert!(select_robust(vec![], 0.5, 4).is_empty());
    }

    #[test]
    fn interior_posture_in_free_space_is_fully_robust() {
        let model = RobotModel::bundled("panda-like").unwrap();
        let q0 = vec![0.0, 0.0, 0.0, 0.0, -0.3, 0.0, -2.0, 0.0, 1.8, 0.8];
        let meter = Meter::default();
        let r = robustness(
            &model,
            &q0,
            &Environment::empty(),
            &BaseErrorModel::default(),
            &RobustIkConfig::default(),
            &IkConfig::default(),
            &meter,
        );
        assert!((0.99..=1.0).contains(&r), "{r}");
    }

    #[test]
    fn robust_solutions_satisfy_and_are_free() {
        let model = RobotModel::bundled("hsr-like").unwrap();
        let target = Pose::from_parts(
            nalgebra::Translation3::new(1.0, 0.5, 0.8),
            nalgebra::UnitQuaternion::from_euler_angles(0.0, PI, 0.0),
        );
        let c = EePoseConstraint::new(target, TsrBounds { yaw: [-PI, PI], ..Default::default() }).unwrap();
        let env = Environment::empty();
        let meter = Meter::default();
        let sols = solve_robust_ik(
            &model,
            &c,
            &env,
            &mut ChaCha8Rng::seed_from_u64(8),
            &BaseErrorModel::default(),
            &RobustIkConfig::default(),
            &IkSampleConfig::default(),
            &meter,
        );
        assert!(!sols.is_empty());
        for s in &sols {
            assert!(c.contains_pose(&model.ee_pose(&s.positions), SATISFY_TOL_POS, SATISFY_TOL_ROT));
            assert!(!crate::environment::is_collision(&model, &s.positions, &env.full_view(), env.margin()));
        }
        assert!(sols.windows(2).all(|w| w[0].robustness >= w[1].robustness));
    }
}
