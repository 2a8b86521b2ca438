//! Candidate generation: straight-line and three-point waypoint paths whose
//! endpoints satisfy a goal constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{extract_ee_constraints, GoalConstraint};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::ik::{sample_ik_from_constraint, solve_robust_ik, BaseErrorModel, IkSampleConfig, RobustIkConfig};
use crate::meter::Meter;
use crate::model::{angle_diff, wrap_angle, RobotModel, BASE_DOFS, BASE_X, BASE_Y, BASE_YAW};

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateKind {
    RobustIk,
    RandomStraight,
    RandomMid,
    Carryover,
    /// Tree-search path from the baseline planner.
    Baseline,
    /// Holding still after a stop.
    Halt,
}

/// Untimed waypoint path. Planner candidates have two or three waypoints;
/// the first is the planning start state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCandidate {
    pub waypoints: Vec<Vec<f64>>,
    pub kind: CandidateKind,
}

impl PathCandidate {
    pub fn is_straight(&self) -> bool {
        self.waypoints.len() == 2
    }

    pub fn goal(&self) -> &[f64] {
        self.waypoints.last().unwrap()
    }
}

/// Joins 2 or 3 states into a candidate.
pub fn merge(points: Vec<Vec<f64>>, kind: CandidateKind) -> Result<PathCandidate> {
    if !(2..=3).contains(&points.len()) {
        return Err(Error::Arity(points.len()));
    }
    Ok(PathCandidate { waypoints: points, kind })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Maximum number of generated candidates.
    pub n_q: usize,
    /// Maximum number of straight-line candidates.
    pub n_s: usize,
    /// Midpoint position half-width [m].
    pub r_p: f64,
    /// Midpoint yaw half-width [rad].
    pub r_r: f64,
    /// Generation budget [s] on the modeled clock.
    pub to_gen: f64,
    /// Hard cap on sampling attempts, successful or not.
    pub max_attempts: usize,
    /// Seed straight-line candidates with robust IK goals.
    pub use_robust_ik: bool,
    pub ik_sample: IkSampleConfig,
    pub robust: RobustIkConfig,
    pub base_error: BaseErrorModel,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_q: 50,
            n_s: 5,
            r_p: 2.0,
            r_r: 1.5,
            to_gen: 0.1,
            max_attempts: 200,
            use_robust_ik: true,
            ik_sample: IkSampleConfig::default(),
            robust: RobustIkConfig::default(),
            base_error: BaseErrorModel::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s > self.n_q || self.n_q == 0 || !(self.r_p >= 0.0) || !(self.r_r >= 0.0) || !(self.to_gen > 0.0) {
            return Err(Error::Config("generator needs 0 < n_s <= n_q, nonnegative widths, to_gen > 0".into()));
        }
        self.robust.validate()?;
        self.base_error.validate()
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, w: f64) -> f64 {
    if w > 0.0 {
        rng.random_range(-w..=w)
    } else {
        0.0
    }
}

/// Random intermediate state: base around the midpoint, arm joints uniform.
pub fn sample_random_mid<R: Rng + ?Sized>(
    model: &RobotModel,
    q_init: &[f64],
    q_goal: &[f64],
    rng: &mut R,
    r_p: f64,
    r_r: f64,
) -> Vec<f64> {
    let mut q = vec![0.0; model.dof()];
    q[BASE_X] = 0.5 * (q_init[BASE_X] + q_goal[BASE_X]) + symmetric(rng, r_p);
    q[BASE_Y] = 0.5 * (q_init[BASE_Y] + q_goal[BASE_Y]) + symmetric(rng, r_p);
    let yaw_mid = q_init[BASE_YAW] + 0.5 * angle_diff(q_init[BASE_YAW], q_goal[BASE_YAW]);
    q[BASE_YAW] = wrap_angle(yaw_mid + symmetric(rng, r_r));
    for (i, v) in q.iter_mut().enumerate().skip(BASE_DOFS) {
        let (lo, hi) = (model.lower()[i], model.upper()[i]);
        *v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }
    model.clamp_positions(&mut q);
    q
}

/// A state satisfying `goal`. Joint goals draw constrained DOFs uniformly
/// from their intervals; unconstrained arm joints are uniform within limits
/// and unconstrained base DOFs stay where `q_init` has them.
pub fn sample_goal_state<R: Rng + ?Sized>(
    model: &RobotModel,
    goal: &GoalConstraint,
    q_init: &[f64],
    rng: &mut R,
    cfg: &IkSampleConfig,
    meter: &Meter,
) -> Option<Vec<f64>> {
    match goal {
        GoalConstraint::Ee(c) => sample_ik_from_constraint(model, c, rng, cfg, meter),
        GoalConstraint::Joint(c) => {
            let intervals = c.resolve(model).ok()?;
            let mut q = q_init.to_vec();
            for (i, v) in q.iter_mut().enumerate().skip(BASE_DOFS) {
                *v = rng.random_range(model.lower()[i]..=model.upper()[i]);
            }
            for (i, lo, hi) in intervals {
                q[i] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            }
            model.clamp_positions(&mut q);
            Some(q)
        }
    }
}

/// One random candidate for a uniformly chosen goal constraint.
pub fn sample_trajectory<R: Rng + ?Sized>(
    goals: &[GoalConstraint],
    q_init: &[f64],
    use_middle: bool,
    model: &RobotModel,
    rng: &mut R,
    cfg: &GeneratorConfig,
    meter: &Meter,
) -> Option<PathCandidate> {
    if goals.is_empty() {
        return None;
    }
    let goal = &goals[rng.random_range(0..goals.len())];
    let q_goal = sample_goal_state(model, goal, q_init, rng, &cfg.ik_sample, meter)?;
    let cand = if use_middle {
        let mid = sample_random_mid(model, q_init, &q_goal, rng, cfg.r_p, cfg.r_r);
        PathCandidate { waypoints: vec![q_init.to_vec(), mid, q_goal], kind: CandidateKind::RandomMid }
    } else {
        PathCandidate { waypoints: vec![q_init.to_vec(), q_goal], kind: CandidateKind::RandomStraight }
    };
    Some(cand)
}

/// Stream reserved for the robust IK stage; sampling slots use `0..`.
const ROBUST_STREAM: u64 = u64::MAX;

fn slot_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The candidate set of one planning loop.
///
/// Robust IK goals come first and use up the straight-line budget `n_s`
/// before random sampling fills the set to `n_q`; after `n_s` candidates
/// exist every new one gets a random midpoint. Sampling stops at `to_gen`
/// on the modeled clock. A carryover path, if given, is placed first.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    goals: &[GoalConstraint],
    q_init: &[f64],
    env: &Environment,
    model: &RobotModel,
    seed: u64,
    cfg: &GeneratorConfig,
    carryover: Option<PathCandidate>,
    meter: &Meter,
) -> Vec<PathCandidate> {
    let deadline = meter.deadline(cfg.to_gen);
    let mut cands: Vec<PathCandidate> = Vec::with_capacity(cfg.n_q + 1);
    if cfg.use_robust_ik {
        let mut rng = slot_rng(seed, ROBUST_STREAM);
        'outer: for c in extract_ee_constraints(goals) {
            if deadline.expired() {
                break;
            }
            let sols = solve_robust_ik(
                model,
                c,
                env,
                &mut rng,
                &cfg.base_error,
                &cfg.robust,
                &cfg.ik_sample,
                meter,
            );
            for s in sols {
                if cands.len() >= cfg.n_q {
                    break 'outer;
                }
                let waypoints = if cands.len() < cfg.n_s {
                    vec![q_init.to_vec(), s.positions]
                } else {
                    let mid = sample_random_mid(model, q_init, &s.positions, &mut rng, cfg.r_p, cfg.r_r);
                    vec![q_init.to_vec(), mid, s.positions]
                };
                cands.push(PathCandidate { waypoints, kind: CandidateKind::RobustIk });
            }
        }
    }
    let mut slot = 0u64;
    while cands.len() < cfg.n_q && (slot as usize) < cfg.max_attempts && !deadline.expired() {
        let mut rng = slot_rng(seed, slot);
        slot += 1;
        let use_middle = cands.len() >= cfg.n_s;
        if let Some(c) = sample_trajectory(goals, q_init, use_middle, model, &mut rng, cfg, meter) {
            cands.push(c);
        }
    }
    if let Some(mut c) = carryover {
        c.kind = CandidateKind::Carryover;
        cands.insert(0, c);
    }
    cands
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{EePoseConstraint, JointConstraint, TsrBounds};
    use crate::model::Pose;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn hsr() -> RobotModel {
        RobotModel::bundled("hsr-like").unwrap()
    }

    fn ee_goal() -> GoalConstraint {
        let target = Pose::from_parts(
            nalgebra::Translation3::new(1.5, 0.3, 0.7),
            nalgebra::UnitQuaternion::from_euler_angles(0.0, PI, 0.0),
        );
        GoalConstraint::Ee(EePoseConstraint::new(target, TsrBounds { yaw: [-PI, PI], ..Default::default() }).unwrap())
    }

    #[test]
    fn merge_arity() {
        let a = vec![0.0];
        assert!(merge(vec![a.clone(), a.clone()], CandidateKind::RandomStraight).unwrap().is_straight());
        assert_eq!(merge(vec![a.clone(), a.clone(), a.clone()], CandidateKind::RandomMid).unwrap().waypoints.len(), 3);
        assert!(matches!(merge(vec![a], CandidateKind::RandomMid), Err(Error::Arity(1))));
    }

    #[test]
    fn degenerate_mid_is_midpoint() {
        let model = hsr();
        let mut a = vec![0.0; 8];
        let mut b = vec![0.0; 8];
        a[0] = 1.0;
        b[0] = 3.0;
        b[2] = 1.0;
        let m = sample_random_mid(&model, &a, &b, &mut ChaCha8Rng::seed_from_u64(0), 0.0, 0.0);
        assert!((m[0] - 2.0).abs() < 1e-15);
        assert!((m[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mid_joints_within_limits() {
        let model = hsr();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = vec![0.0; 8];
        for _ in 0..1000 {
            let m = sample_random_mid(&model, &q, &q, &mut rng, 2.0, 1.5);
            assert!(model.within_limits(&m));
        }
    }

    #[test]
    fn zero_width_joint_goal_is_exact() {
        let model = hsr();
        let mut intervals = BTreeMap::new();
        intervals.insert("arm_lift".to_string(), [0.3, 0.3]);
        intervals.insert("arm_flex".to_string(), [-1.0, -1.0]);
        let goals = vec![GoalConstraint::Joint(JointConstraint { intervals })];
        let q = vec![0.0; 8];
        let c = sample_trajectory(&goals, &q, false, &model, &mut ChaCha8Rng::seed_from_u64(2), &GeneratorConfig::default(), &Meter::default())
            .unwrap();
        assert_eq!(c.goal()[3], 0.3);
        assert_eq!(c.goal()[4], -1.0);
    }

    #[test]
    fn straight_budget_and_goal_satisfaction() {
        let model = hsr();
        let goals = vec![ee_goal()];
        let q = vec![0.0; 8];
        let cfg = GeneratorConfig { to_gen: 10.0, ..Default::default() };
        let meter = Meter::default();
        let cands = generate(&goals, &q, &Environment::empty(), &model, 3, &cfg, None, &meter);
        assert!(cands.len() <= cfg.n_q);
        assert!(cands.iter().filter(|c| c.is_straight()).count() <= cfg.n_s);
        assert!(cands.iter().any(|c| c.kind == CandidateKind::RobustIk));
        for c in &cands {
            assert_eq!(c.waypoints[0], q);
            assert!(goals.iter().any(|g| g.satisfies(&model, c.goal())));
            assert!(c.waypoints.iter().all(|w| model.within_limits(w)));
        }
    }

    #[test]
    fn straight_only_below_threshold() {
        let model = hsr();
        let goals = vec![ee_goal()];
        let cfg = GeneratorConfig { n_q: 5, n_s: 5, use_robust_ik: false, to_gen: 10.0, ..Default::default() };
        let cands = generate(&goals, &[0.0; 8], &Environment::empty(), &model, 4, &cfg, None, &Meter::default());
        assert_eq!(cands.len(), 5);
        assert!(cands.iter().all(|c| c.is_straight()));
    }

    #[test]
    fn carryover_goes_first_and_generation_is_deterministic() {
        let model = hsr();
        let goals = vec![ee_goal()];
        let q = vec![0.0; 8];
        let cfg = GeneratorConfig { n_q: 10, to_gen: 10.0, ..Default::default() };
        let carry = PathCandidate { waypoints: vec![q.clone(), q.clone()], kind: CandidateKind::RandomMid };
        let a = generate(&goals, &q, &Environment::empty(), &model, 5, &cfg, Some(carry.clone()), &Meter::default());
        let b = generate(&goals, &q, &Environment::empty(), &model, 5, &cfg, Some(carry), &Meter::default());
        assert_eq!(a[0].kind, CandidateKind::Carryover);
        assert_eq!(a, b);
        assert!(a.len() <= cfg.n_q + 1);
    }
}
