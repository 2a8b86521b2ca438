//! Bidirectional tree search with path shortcutting, used as the comparison
//! planner and as an optional fallback when periodic planning stops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::GoalConstraint;
use crate::environment::{is_collision_metered, Environment};
use crate::error::{Error, Result};
use crate::meter::{Meter, Work};
use crate::model::{interpolate_positions, RobotModel, BASE_DOFS, BASE_X, BASE_Y, BASE_YAW};
use crate::planner::{validate_dense, PlanRequest, PlannerConfig, Validation};
use crate::timing::{time_parameterize, Trajectory};
use crate::trajgen::{sample_goal_state, CandidateKind, PathCandidate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtConfig {
    /// Largest extension per step, in weighted distance (about seconds).
    pub step: f64,
    /// Spacing of collision checks along an edge, same units.
    pub resolution: f64,
    /// Probability of steering toward a goal root instead of a random state.
    pub goal_bias: f64,
    pub max_iterations: usize,
    /// Goal states used as roots of the second tree.
    pub goal_roots: usize,
    /// Goal sampling attempts per root.
    pub goal_attempts: usize,
    pub shortcut_iterations: usize,
    /// Padding [m] of the base sampling box around start and goals.
    pub sample_margin: f64,
    /// Whole-plan retries when the timed path fails validation.
    pub attempts: usize,
}

impl Default for RrtConfig {
    fn default() -> Self {
        RrtConfig {
            step: 0.3,
            resolution: 0.05,
            goal_bias: 0.05,
            max_iterations: 4000,
            goal_roots: 4,
            goal_attempts: 10,
            shortcut_iterations: 100,
            sample_margin: 2.0,
            attempts: 3,
        }
    }
}

impl RrtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.resolution > 0.0) || self.resolution > self.step {
            return Err(Error::Config("rrt needs 0 < resolution <= step".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::Config("rrt goal_bias must lie in [0, 1]".into()));
        }
        if self.goal_roots == 0 || self.attempts == 0 || self.max_iterations == 0 {
            return Err(Error::Config("rrt goal_roots, attempts and max_iterations must be positive".into()));
        }
        Ok(())
    }
}

struct Node {
    q: Vec<f64>,
    parent: Option<usize>,
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn nearest(&self, model: &RobotModel, q: &[f64], meter: &Meter) -> usize {
        meter.charge(Work::DistanceEval, self.nodes.len() as u64);
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = model.position_distance(&n.q, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn path_to_root(&self, mut i: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.nodes[i].q.clone()];
        while let Some(p) = self.nodes[i].parent {
            out.push(self.nodes[p].q.clone());
            i = p;
        }
        out
    }
}

/// Collision and limit checks along the interpolated segment `a`-`b`,
/// excluding `a`.
pub fn edge_free(model: &RobotModel, env: &Environment, a: &[f64], b: &[f64], resolution: f64, meter: &Meter) -> bool {
    let d = model.position_distance(a, b);
    let n = (d / resolution).ceil().max(1.0) as usize;
    let mut q = vec![0.0; a.len()];
    for k in 1..=n {
        interpolate_positions(a, b, k as f64 / n as f64, &mut q);
        if !model.within_limits(&q) {
            return false;
        }
        let view = env.sample_env(model, &q, 0.0);
        if is_collision_metered(model, &q, &view, env.margin(), meter) {
            return false;
        }
    }
    true
}

fn state_free(model: &RobotModel, env: &Environment, q: &[f64], meter: &Meter) -> bool {
    model.within_limits(q) && !is_collision_metered(model, q, &env.sample_env(model, q, 0.0), env.margin(), meter)
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(
    tree: &mut Tree,
    model: &RobotModel,
    env: &Environment,
    target: &[f64],
    cfg: &RrtConfig,
    meter: &Meter,
) -> Extend {
    let near = tree.nearest(model, target, meter);
    let from = tree.nodes[near].q.clone();
    let d = model.position_distance(&from, target);
    let (q, reached) = if d <= cfg.step {
        (target.to_vec(), true)
    } else {
        let mut q = vec![0.0; from.len()];
        interpolate_positions(&from, target, cfg.step / d, &mut q);
        (q, false)
    };
    if !edge_free(model, env, &from, &q, cfg.resolution, meter) {
        return Extend::Trapped;
    }
    tree.nodes.push(Node { q, parent: Some(near) });
    let id = tree.nodes.len() - 1;
    if reached { Extend::Reached(id) } else { Extend::Advanced(id) }
}

fn connect(tree: &mut Tree, model: &RobotModel, env: &Environment, target: &[f64], cfg: &RrtConfig, meter: &Meter) -> Option<usize> {
    loop {
        match extend(tree, model, env, target, cfg, meter) {
            Extend::Reached(id) => return Some(id),
            Extend::Advanced(_) => {}
            Extend::Trapped => return None,
        }
    }
}

/// Base sampling box: start and goal bases padded by `margin`, within limits.
fn base_box(model: &RobotModel, states: &[&[f64]], margin: f64) -> [[f64; 2]; 2] {
    let mut out = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
    for q in states {
        for (k, i) in [BASE_X, BASE_Y].into_iter().enumerate() {
            out[k][0] = out[k][0].min(q[i] - margin).max(model.lower()[i]);
            out[k][1] = out[k][1].max(q[i] + margin).min(model.upper()[i]);
        }
    }
    out
}

fn random_state<R: Rng + ?Sized>(model: &RobotModel, bx: &[[f64; 2]; 2], rng: &mut R) -> Vec<f64> {
    let mut q = vec![0.0; model.dof()];
    q[BASE_X] = rng.random_range(bx[0][0]..=bx[0][1]);
    q[BASE_Y] = rng.random_range(bx[1][0]..=bx[1][1]);
    q[BASE_YAW] = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    for (i, v) in q.iter_mut().enumerate().skip(BASE_DOFS) {
        let (lo, hi) = (model.lower()[i], model.upper()[i]);
        *v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }
    q
}

/// Collision-free goal states, at most `cfg.goal_roots`.
pub fn sample_goal_roots<R: Rng + ?Sized>(
    model: &RobotModel,
    env: &Environment,
    goals: &[GoalConstraint],
    q_init: &[f64],
    rng: &mut R,
    cfg: &RrtConfig,
    sample: &crate::ik::IkSampleConfig,
    meter: &Meter,
) -> Vec<Vec<f64>> {
    let mut roots = Vec::new();
    if goals.is_empty() {
        return roots;
    }
    for _ in 0..cfg.goal_roots * cfg.goal_attempts {
        if roots.len() >= cfg.goal_roots {
            break;
        }
        let g = &goals[rng.random_range(0..goals.len())];
        if let Some(q) = sample_goal_state(model, g, q_init, rng, sample, meter) {
            if state_free(model, env, &q, meter) {
                roots.push(q);
            }
        }
    }
    roots
}

/// Bidirectional search from `q_init` to any of `roots`. Returns the
/// waypoint sequence from start to goal.
#[allow(clippy::too_many_arguments)]
pub fn rrt_connect<R: Rng + ?Sized>(
    model: &RobotModel,
    env: &Environment,
    q_init: &[f64],
    roots: &[Vec<f64>],
    rng: &mut R,
    cfg: &RrtConfig,
    meter: &Meter,
) -> Option<Vec<Vec<f64>>> {
    if roots.is_empty() || !state_free(model, env, q_init, meter) {
        return None;
    }
    let mut all: Vec<&[f64]> = vec![q_init];
    all.extend(roots.iter().map(|r| r.as_slice()));
    let bx = base_box(model, &all, cfg.sample_margin);

    let mut a = Tree { nodes: vec![Node { q: q_init.to_vec(), parent: None }] };
    let mut b = Tree { nodes: roots.iter().map(|r| Node { q: r.clone(), parent: None }).collect() };
    let mut a_is_start = true;
    for _ in 0..cfg.max_iterations {
        let q_rand = if rng.random::<f64>() < cfg.goal_bias {
            roots[rng.random_range(0..roots.len())].clone()
        } else {
            random_state(model, &bx, rng)
        };
        let new = match extend(&mut a, model, env, &q_rand, cfg, meter) {
            Extend::Trapped => None,
            Extend::Reached(id) | Extend::Advanced(id) => Some(id),
        };
        if let Some(id) = new {
            let q_new = a.nodes[id].q.clone();
            if let Some(jd) = connect(&mut b, model, env, &q_new, cfg, meter) {
                let (start_tree, start_id, goal_tree, goal_id) =
                    if a_is_start { (&a, id, &b, jd) } else { (&b, jd, &a, id) };
                let mut path = start_tree.path_to_root(start_id);
                path.reverse();
                let mut rest = goal_tree.path_to_root(goal_id);
                rest.remove(0);
                path.extend(rest);
                return Some(path);
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    None
}

/// Removes waypoints whose neighbors see each other. Random pairs alternate
/// with a sweep over consecutive triples so short paths are also tightened.
pub fn shortcut<R: Rng + ?Sized>(
    model: &RobotModel,
    env: &Environment,
    mut path: Vec<Vec<f64>>,
    rng: &mut R,
    cfg: &RrtConfig,
    meter: &Meter,
) -> Vec<Vec<f64>> {
    let mut sweep = 0usize;
    for it in 0..cfg.shortcut_iterations {
        if path.len() < 3 {
            break;
        }
        let (i, j) = if it % 2 == 0 {
            let i = rng.random_range(0..path.len() - 2);
            (i, rng.random_range(i + 2..path.len()))
        } else {
            sweep %= path.len() - 2;
            (sweep, sweep + 2)
        };
        if edge_free(model, env, &path[i], &path[j], cfg.resolution, meter) {
            path.drain(i + 1..j);
        } else if it % 2 == 1 {
            sweep += 1;
        }
    }
    path
}

/// Search, shortcut, time from rest and validate every sample. A plan
/// whose blends cut into obstacles is discarded and searched again.
pub fn plan_baseline(
    req: &PlanRequest<'_>,
    q_init: &[f64],
    cfg: &PlannerConfig,
    seed: u64,
    meter: &Meter,
) -> Option<Trajectory> {
    let model = req.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.rrt.attempts {
        let roots =
            sample_goal_roots(model, req.env, req.goals, q_init, &mut rng, &cfg.rrt, &cfg.generator.ik_sample, meter);
        let Some(path) = rrt_connect(model, req.env, q_init, &roots, &mut rng, &cfg.rrt, meter) else {
            continue;
        };
        let path = shortcut(model, req.env, path, &mut rng, &cfg.rrt, meter);
        let cand = PathCandidate { waypoints: path, kind: CandidateKind::Baseline };
        let Ok(traj) = time_parameterize(model, &cand, None, &cfg.timing) else {
            continue;
        };
        meter.charge(Work::TimingElement, traj.element_count() as u64);
        meter.charge(Work::TrajectorySample, traj.samples().len() as u64);
        if validate_dense(&traj, req.env, model, meter) == Validation::Valid {
            return Some(traj);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Aabb, EnvironmentSpec};
    use std::collections::BTreeMap;

    fn wall_env() -> Environment {
        // A wall across x = 1 with a gap at y > 1.2.
        Environment::new(EnvironmentSpec {
            boxes: vec![Aabb::new([0.9, -3.0, 0.0], [1.1, 1.2, 1.5])],
            ..EnvironmentSpec::default()
        })
        .unwrap()
    }

    fn goal_behind_wall(model: &RobotModel) -> (Vec<f64>, Vec<GoalConstraint>) {
        let q0 = vec![0.0; model.dof()];
        let mut intervals = BTreeMap::new();
        let names = model.dof_names();
        intervals.insert(names[BASE_X].clone(), [2.0, 2.0]);
        intervals.insert(names[BASE_Y].clone(), [0.0, 0.0]);
        (q0, vec![GoalConstraint::Joint(crate::constraints::JointConstraint { intervals })])
    }

    #[test]
    fn finds_path_around_wall_and_every_sample_is_free() {
        let model = RobotModel::bundled("hsr-like").unwrap();
        let env = wall_env();
        let (q0, goals) = goal_behind_wall(&model);
        let req = PlanRequest { model: &model, env: &env, goals: &goals, soft: &[] };
        let meter = Meter::default();
        let traj = plan_baseline(&req, &q0, &PlannerConfig::default(), 3, &meter).expect("plan");
        assert_eq!(validate_dense(&traj, &env, &model, &meter), Validation::Valid);
        let end = &traj.last().positions;
        assert!((end[BASE_X] - 2.0).abs() < 1e-6 && end[BASE_Y].abs() < 1e-6);
        assert!(traj.samples().iter().any(|s| s.positions[BASE_Y] > 1.2));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let model = RobotModel::bundled("hsr-like").unwrap();
        let env = wall_env();
        let (q0, goals) = goal_behind_wall(&model);
        let req = PlanRequest { model: &model, env: &env, goals: &goals, soft: &[] };
        let a = plan_baseline(&req, &q0, &PlannerConfig::default(), 9, &Meter::default()).unwrap();
        let b = plan_baseline(&req, &q0, &PlannerConfig::default(), 9, &Meter::default()).unwrap();
        assert_eq!(a.to_record(), b.to_record());
    }

    #[test]
    fn shortcut_straightens_free_space_path() {
        let model = RobotModel::bundled("hsr-like").unwrap();
        let env = Environment::empty();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let mut q = vec![0.0; model.dof()];
                q[BASE_X] = k as f64 * 0.3;
                q[BASE_Y] = if k % 2 == 0 { 0.0 } else { 0.4 };
                q
            })
            .collect();
        let out = shortcut(&model, &env, path.clone(), &mut rng, &RrtConfig::default(), &Meter::default());
        assert_eq!(out, vec![path[0].clone(), path[5].clone()]);
    }

    #[test]
    fn unreachable_goal_returns_none() {
        let model = RobotModel::bundled("hsr-like").unwrap();
        // Enclose the start.
        let env = Environment::new(EnvironmentSpec {
            boxes: vec![
                Aabb::new([-1.0, -1.0, 0.0], [1.0, -0.6, 2.0]),
                Aabb::new([-1.0, 0.6, 0.0], [1.0, 1.0, 2.0]),
                Aabb::new([-1.0, -1.0, 0.0], [-0.6, 1.0, 2.0]),
                Aabb::new([0.6, -1.0, 0.0], [1.0, 1.0, 2.0]),
            ],
            ..EnvironmentSpec::default()
        })
        .unwrap();
        let (q0, goals) = goal_behind_wall(&model);
        let req = PlanRequest { model: &model, env: &env, goals: &goals, soft: &[] };
        let cfg = PlannerConfig { rrt: RrtConfig { max_iterations: 200, attempts: 1, ..RrtConfig::default() }, ..PlannerConfig::default() };
        assert!(plan_baseline(&req, &q0, &cfg, 1, &Meter::default()).is_none());
    }
}
