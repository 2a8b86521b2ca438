//! The periodic local planner: scoring and ranking of timed candidates,
//! dense/sparse collision validation, one planning loop, and the periodic
//! driver that keeps, switches or stops the active trajectory.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{plan_baseline, RrtConfig};
use crate::constraints::{evaluate_soft, goal_reached, GoalConstraint, SoftConstraint, GOAL_POS_TOL, GOAL_ROT_TOL_DEG};
use crate::environment::{is_collision_metered, Environment};
use crate::error::{Error, Result};
use crate::meter::{Deadline, Meter, Work};
use crate::model::{RobotModel, RobotState};
use crate::timing::{time_parameterize, TimingConfig, Trajectory, TrajectoryRecord};
use crate::trajgen::{generate, CandidateKind, GeneratorConfig};

/// Planner variants compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Periodic planning with robust IK goals.
    Rlp,
    /// Periodic planning without robust IK goals.
    RlpMinus,
    /// Plan once, then execute to completion.
    RlpMm,
    /// Tree-search baseline.
    Rrt,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rlp, Method::RlpMinus, Method::RlpMm, Method::Rrt];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rlp => "rlp",
            Method::RlpMinus => "rlp-minus",
            Method::RlpMm => "rlp-mm",
            Method::Rrt => "rrt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected rlp, rlp-minus, rlp-mm or rrt)")))
    }

    /// The configuration this method runs with, derived from `base`.
    pub fn configure(self, base: &PlannerConfig) -> PlannerConfig {
        let mut cfg = base.clone();
        match self {
            Method::Rlp | Method::Rrt => {}
            Method::RlpMinus => cfg.generator.use_robust_ik = false,
            Method::RlpMm => cfg.periodic = false,
        }
        cfg
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Replanning period [s].
    pub t_p: f64,
    /// Validation budget [s] on the modeled clock.
    pub to_val: f64,
    /// Every sample up to this time is checked [s].
    pub vt_from_start: f64,
    /// Spacing of checked samples after `vt_from_start` [s].
    pub vt_interval: f64,
    /// Fixed per-loop overhead added to the generation and validation
    /// budgets when charging compute time [s].
    pub loop_overhead: f64,
    pub max_loops: usize,
    /// Consecutive stopped loops before giving up.
    pub stop_patience: usize,
    /// Replan every period; when false, plan until the first trajectory is
    /// published and execute it to completion.
    pub periodic: bool,
    /// Run the baseline planner once whenever a loop stops.
    pub fallback: bool,
    /// Simulated time limit [s].
    pub horizon: f64,
    pub goal_pos_tol: f64,
    pub goal_rot_tol_deg: f64,
    /// Speed norm below which the robot counts as at rest.
    pub rest_speed: f64,
    pub timing: TimingConfig,
    pub generator: GeneratorConfig,
    pub rrt: RrtConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            t_p: 0.25,
            to_val: 0.15,
            vt_from_start: 2.0,
            vt_interval: 0.1,
            loop_overhead: 0.05,
            max_loops: 1000,
            stop_patience: 4,
            periodic: true,
            fallback: false,
            horizon: 20.0,
            goal_pos_tol: GOAL_POS_TOL,
            goal_rot_tol_deg: GOAL_ROT_TOL_DEG,
            rest_speed: 1e-3,
            timing: TimingConfig::default(),
            generator: GeneratorConfig::default(),
            rrt: RrtConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_p > 0.0) || !(self.timing.t_s > 0.0) || !(self.vt_interval >= self.timing.t_s) {
            return Err(Error::Config("need t_p > 0, t_s > 0 and vt_interval >= t_s".into()));
        }
        if !(self.to_val > 0.0) || !(self.horizon > 0.0) || self.stop_patience == 0 {
            return Err(Error::Config("need to_val > 0, horizon > 0 and stop_patience >= 1".into()));
        }
        self.generator.validate()?;
        self.rrt.validate()
    }

    /// Largest compute time charged to the simulated clock for one loop.
    pub fn loop_budget(&self) -> f64 {
        self.generator.to_gen + self.to_val + self.loop_overhead
    }

    pub fn goal_rot_tol(&self) -> f64 {
        self.goal_rot_tol_deg.to_radians()
    }
}

/// Everything a planning call needs besides configuration.
#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    pub model: &'a RobotModel,
    pub env: &'a Environment,
    pub goals: &'a [GoalConstraint],
    pub soft: &'a [SoftConstraint],
}

/// Minus the duration plus the soft terms. Higher is better.
pub fn evaluate(traj: &Trajectory, soft: &[SoftConstraint], model: &RobotModel, env: &Environment) -> f64 {
    -traj.duration() + soft.iter().map(|c| evaluate_soft(c, model, traj, env)).sum::<f64>()
}

/// Indices of `trajs` by descending score; ties keep input order.
pub fn rank(trajs: &[Trajectory], soft: &[SoftConstraint], model: &RobotModel, env: &Environment) -> Vec<usize> {
    let scores: Vec<f64> = trajs.iter().map(|t| evaluate(t, soft, model, env)).collect();
    rank_scores(&scores)
}

/// Stable descending order of `scores`.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Result of checking one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validation {
    Valid,
    Collision { index: usize, t: f64 },
    Timeout,
}

/// Sample indices checked by [`validate`]: every sample up to
/// `vt_from_start`, then the first sample at or after each multiple of
/// `vt_interval`, and always the final sample.
pub fn check_indices(traj: &Trajectory, vt_from_start: f64, vt_interval: f64) -> Vec<usize> {
    let samples = traj.samples();
    let mut out = Vec::with_capacity(samples.len());
    let mut next_mark = ((vt_from_start / vt_interval).floor() + 1.0) * vt_interval;
    for (i, s) in samples.iter().enumerate() {
        if s.t <= vt_from_start + 1e-9 {
            out.push(i);
        } else if s.t >= next_mark - 1e-9 {
            out.push(i);
            while next_mark <= s.t + 1e-9 {
                next_mark += vt_interval;
            }
        }
    }
    let last = samples.len() - 1;
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Collision-checks the samples picked by [`check_indices`] in time order,
/// stopping at the first collision or when `deadline` passes.
pub fn validate(
    traj: &Trajectory,
    env: &Environment,
    model: &RobotModel,
    cfg: &PlannerConfig,
    deadline: Option<&Deadline<'_>>,
    meter: &Meter,
) -> Validation {
    for i in check_indices(traj, cfg.vt_from_start, cfg.vt_interval) {
        if deadline.is_some_and(|d| d.expired()) {
            return Validation::Timeout;
        }
        let s = &traj.samples()[i];
        let view = env.sample_env(model, &s.positions, s.t);
        if is_collision_metered(model, &s.positions, &view, env.margin(), meter) {
            return Validation::Collision { index: i, t: s.t };
        }
    }
    Validation::Valid
}

/// Checks every sample; used for baseline paths and tests.
pub fn validate_dense(traj: &Trajectory, env: &Environment, model: &RobotModel, meter: &Meter) -> Validation {
    for (i, s) in traj.samples().iter().enumerate() {
        let view = env.sample_env(model, &s.positions, s.t);
        if is_collision_metered(model, &s.positions, &view, env.margin(), meter) {
            return Validation::Collision { index: i, t: s.t };
        }
    }
    Validation::Valid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// A new trajectory was selected.
    Switched,
    /// The current trajectory remains the best valid one.
    Kept,
    /// No candidate passed validation.
    Stopped,
    /// The robot rests at a goal.
    Finished,
}

#[derive(Debug, Clone)]
pub struct PlanLoopResult {
    pub outcome: Outcome,
    /// The validated winner; for `Kept` it equals the carried-over tail.
    pub trajectory: Option<Arc<Trajectory>>,
    pub score: Option<f64>,
    /// Predicted state the winner starts from.
    pub q_init: RobotState,
    pub generated: usize,
    pub timed: usize,
    pub checked: usize,
    pub collided: usize,
    pub validation_timed_out: bool,
    /// Modeled compute time [s].
    pub compute_time: f64,
    /// Measured compute time [s]; informational.
    pub wall_time: f64,
}

fn is_at_rest(state: &RobotState, cfg: &PlannerConfig) -> bool {
    state.speed() < cfg.rest_speed
}

/// One planning cycle from the current state.
///
/// `current` is the active trajectory re-timed so that `t = 0` is now. The
/// new trajectory starts from the state `current` predicts one period ahead
/// (or from `q_now` without one), and the rest of `current` from there is
/// entered as the first candidate.
pub fn plan_loop(
    req: &PlanRequest<'_>,
    cfg: &PlannerConfig,
    seed: u64,
    current: Option<&Trajectory>,
    q_now: &RobotState,
    meter: &Meter,
) -> PlanLoopResult {
    let wall = Instant::now();
    let start = meter.elapsed();
    let model = req.model;
    let mut result = PlanLoopResult {
        outcome: Outcome::Stopped,
        trajectory: None,
        score: None,
        q_init: q_now.clone(),
        generated: 0,
        timed: 0,
        checked: 0,
        collided: 0,
        validation_timed_out: false,
        compute_time: 0.0,
        wall_time: 0.0,
    };
    let finish = |mut r: PlanLoopResult| {
        r.compute_time = meter.elapsed() - start;
        r.wall_time = wall.elapsed().as_secs_f64();
        r
    };

    if is_at_rest(q_now, cfg)
        && current.is_none_or(|c| c.duration() <= 0.0)
        && goal_reached(model, &q_now.positions, req.goals, cfg.goal_pos_tol, cfg.goal_rot_tol())
    {
        result.outcome = Outcome::Finished;
        return finish(result);
    }

    let (q_init, carry) = match current {
        Some(c) => (c.state_at(cfg.t_p), Some(c.tail(cfg.t_p))),
        None => (q_now.clone(), None),
    };
    result.q_init = q_init.clone();

    let cands = generate(
        req.goals,
        &q_init.positions,
        req.env,
        model,
        seed,
        &cfg.generator,
        carry.as_ref().map(|c| c.source().clone()),
        meter,
    );
    result.generated = cands.len();

    let skip = usize::from(carry.is_some());
    let timed: Vec<Option<Trajectory>> = cands[skip..]
        .par_iter()
        .map(|c| time_parameterize(model, c, Some(&q_init.velocities), &cfg.timing).ok())
        .collect();
    let mut trajs: Vec<Trajectory> = Vec::with_capacity(cands.len());
    if let Some(c) = carry {
        trajs.push(c);
    }
    trajs.extend(timed.into_iter().flatten());
    for t in &trajs {
        meter.charge(Work::TimingElement, t.element_count() as u64);
        meter.charge(Work::TrajectorySample, t.samples().len() as u64);
    }
    result.timed = trajs.len();

    let scores: Vec<f64> = trajs.iter().map(|t| evaluate(t, req.soft, model, req.env)).collect();
    let order = rank_scores(&scores);

    let deadline = meter.deadline(cfg.to_val);
    let mut winner = None;
    let mut carry_checked = false;
    for &i in &order {
        let is_carry = skip == 1 && i == 0;
        if deadline.expired() {
            result.validation_timed_out = true;
            break;
        }
        result.checked += 1;
        carry_checked |= is_carry;
        match validate(&trajs[i], req.env, model, cfg, Some(&deadline), meter) {
            Validation::Valid => {
                winner = Some(i);
                break;
            }
            Validation::Collision { .. } => result.collided += 1,
            Validation::Timeout => {
                result.validation_timed_out = true;
                break;
            }
        }
    }
    // The current trajectory is always given a chance to continue.
    if winner.is_none() && skip == 1 && !carry_checked {
        result.checked += 1;
        match validate(&trajs[0], req.env, model, cfg, None, meter) {
            Validation::Valid => winner = Some(0),
            _ => result.collided += 1,
        }
    }

    if let Some(i) = winner {
        result.outcome = if skip == 1 && i == 0 { Outcome::Kept } else { Outcome::Switched };
        result.score = Some(scores[i]);
        result.trajectory = Some(Arc::new(trajs.swap_remove(i)));
    }
    finish(result)
}

/// Consumer of published trajectories.
pub trait Executor {
    /// `traj` replaces the active trajectory from `start_time` on.
    fn publish(&mut self, start_time: f64, traj: Arc<Trajectory>);
}

/// Executor that only records what was published.
#[derive(Debug, Default, Clone)]
pub struct Recorder {
    pub published: Vec<(f64, Arc<Trajectory>)>,
}

impl Executor for Recorder {
    fn publish(&mut self, start_time: f64, traj: Arc<Trajectory>) {
        self.published.push((start_time, traj));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Finished,
    Stopped,
    Timeout,
    LoopCap,
    PlanFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub index: usize,
    /// Simulated time the loop started [s].
    pub time: f64,
    pub outcome: Outcome,
    pub winner_kind: Option<CandidateKind>,
    pub winner_waypoints: Option<usize>,
    pub score: Option<f64>,
    pub generated: usize,
    pub timed: usize,
    pub checked: usize,
    pub collided: usize,
    pub validation_timed_out: bool,
    pub compute_time: f64,
    pub charged_time: f64,
    pub overrun: bool,
    pub wall_time: f64,
    /// Index into `published` of the trajectory this loop published.
    pub published: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRecord {
    pub start_time: f64,
    pub trajectory: TrajectoryRecord,
}

/// Everything that happened in one run, enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub method: Method,
    pub loops: Vec<LoopRecord>,
    pub published: Vec<PublishedRecord>,
    pub termination: Termination,
    /// Simulated time at which planning ended [s].
    pub end_time: f64,
}

/// Seed of loop `k` derived from a run seed.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Active {
    start: f64,
    traj: Arc<Trajectory>,
}

impl Active {
    fn end(&self) -> f64 {
        self.start + self.traj.duration()
    }
}

fn record_loop(index: usize, time: f64, r: &PlanLoopResult, charged: f64, cfg: &PlannerConfig) -> LoopRecord {
    LoopRecord {
        index,
        time,
        outcome: r.outcome,
        winner_kind: r.trajectory.as_ref().map(|t| t.kind()),
        winner_waypoints: r.trajectory.as_ref().map(|t| t.source().waypoints.len()),
        score: r.score,
        generated: r.generated,
        timed: r.timed,
        checked: r.checked,
        collided: r.collided,
        validation_timed_out: r.validation_timed_out,
        compute_time: r.compute_time,
        charged_time: charged,
        overrun: r.compute_time > cfg.t_p,
        wall_time: r.wall_time,
        published: None,
    }
}

/// Runs planning loops on a simulated clock with period `t_p`, publishing
/// every newly selected trajectory to `executor`.
///
/// A trajectory chosen while moving takes effect one period after the loop
/// started, at the state the loop planned from. From rest it starts as soon
/// as its loop's charged compute time has elapsed. A stop while moving halts
/// the robot at the handoff state. The run ends when the robot rests at a
/// goal, after `stop_patience` consecutive stops, or at `horizon`.
pub fn run_periodic(
    req: &PlanRequest<'_>,
    start: &RobotState,
    cfg: &PlannerConfig,
    seed: u64,
    executor: &mut dyn Executor,
    meter: &Meter,
) -> Transcript {
    let mut transcript = Transcript {
        method: if cfg.periodic {
            if cfg.generator.use_robust_ik { Method::Rlp } else { Method::RlpMinus }
        } else {
            Method::RlpMm
        },
        loops: Vec::new(),
        published: Vec::new(),
        termination: Termination::LoopCap,
        end_time: 0.0,
    };
    let mut publish = |transcript: &mut Transcript, at: f64, traj: Arc<Trajectory>| -> usize {
        transcript.published.push(PublishedRecord { start_time: at, trajectory: traj.to_record() });
        executor.publish(at, traj);
        transcript.published.len() - 1
    };

    let mut active: Option<Active> = None;
    let mut rest = start.clone();
    let mut stops = 0usize;
    let mut t = 0.0;
    for k in 0..cfg.max_loops {
        if t >= cfg.horizon {
            transcript.termination = Termination::Timeout;
            break;
        }
        if let (false, Some(a)) = (cfg.periodic, &active) {
            // Execute the single plan to its end, then check the goal.
            t = t.max(a.end());
            let end = a.traj.last().positions.clone();
            transcript.termination =
                if goal_reached(req.model, &end, req.goals, cfg.goal_pos_tol, cfg.goal_rot_tol()) {
                    Termination::Finished
                } else {
                    Termination::Stopped
                };
            break;
        }
        let current = active.as_ref().map(|a| a.traj.tail(t - a.start));
        let q_now = match &current {
            Some(c) => c.state_at(0.0),
            None => rest.clone(),
        };
        // A trajectory that has fully played out is just the resting state.
        let current = current.filter(|c| c.duration() > 0.0);
        let r = plan_loop(req, cfg, derive_seed(seed, k as u64), current.as_ref(), &q_now, meter);
        let charged = r.compute_time.min(cfg.loop_budget());
        let mut rec = record_loop(k, t, &r, charged, cfg);
        let moving = current.is_some();
        let mut next = t + cfg.t_p;
        match r.outcome {
            Outcome::Finished => {
                transcript.loops.push(rec);
                transcript.termination = Termination::Finished;
                break;
            }
            Outcome::Switched => {
                stops = 0;
                let at = if moving { t + cfg.t_p } else { t + charged };
                let traj = r.trajectory.clone().unwrap();
                rec.published = Some(publish(&mut transcript, at, traj.clone()));
                active = Some(Active { start: at, traj });
                next = next.max(at);
            }
            Outcome::Kept => stops = 0,
            Outcome::Stopped => {
                stops += 1;
                let halt_at = if moving { t + cfg.t_p } else { t };
                let halt_state = RobotState::at_rest(r.q_init.positions.clone());
                if moving {
                    let halt = Arc::new(Trajectory::stationary(halt_state.positions.clone(), CandidateKind::Halt));
                    rec.published = Some(publish(&mut transcript, halt_at, halt.clone()));
                    active = Some(Active { start: halt_at, traj: halt });
                }
                rest = halt_state;
                if cfg.fallback {
                    let before = meter.elapsed();
                    let plan = plan_baseline(req, &rest.positions, cfg, derive_seed(seed, (k as u64) << 32 | 1), meter);
                    let spent = meter.elapsed() - before;
                    if let Some(traj) = plan {
                        let at = halt_at.max(t + charged + spent);
                        let traj = Arc::new(traj);
                        rec.published = Some(publish(&mut transcript, at, traj.clone()));
                        active = Some(Active { start: at, traj });
                        next = next.max(at);
                        stops = 0;
                    }
                }
                if stops >= cfg.stop_patience {
                    transcript.loops.push(rec);
                    transcript.termination = Termination::Stopped;
                    t = next;
                    break;
                }
            }
        }
        transcript.loops.push(rec);
        t = next;
    }
    transcript.end_time = t;
    transcript
}
