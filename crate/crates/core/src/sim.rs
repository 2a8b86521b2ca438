//! Kinematic execution of planner output with base control error, and the
//! episode metrics derived from it.
//!
//! Metrics are computed from a [`Transcript`] alone, so a serialized
//! transcript replays to the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baseline::plan_baseline;
use crate::constraints::extract_ee_constraints;
use crate::environment::is_collision;
use crate::error::{Error, Result};
use crate::ik::{continue_ik, robustness};
use crate::meter::Meter;
use crate::model::{RobotState, BASE_X, BASE_Y};
use crate::planner::{derive_seed, run_periodic, Method, PlannerConfig, PublishedRecord, Recorder, Termination, Transcript};
use crate::scenario::LoadedScenario;
use crate::timing::Trajectory;

pub use crate::constraints::goal_reached;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Execution tick [s].
    pub dt: f64,
    /// Standard deviation [m] of the constant base offset; 0 disables it.
    pub base_noise_sigma: f64,
    /// Base travel [m] over which the offset builds up from zero.
    pub noise_ramp: f64,
    pub pos_tol: f64,
    pub rot_tol_deg: f64,
    pub episode_timeout: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.02,
            base_noise_sigma: 0.0,
            noise_ramp: 0.25,
            pos_tol: crate::constraints::GOAL_POS_TOL,
            rot_tol_deg: crate::constraints::GOAL_ROT_TOL_DEG,
            episode_timeout: 20.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.pos_tol > 0.0) || !(self.rot_tol_deg > 0.0) || !(self.episode_timeout > 0.0) {
            return Err(Error::Config("sim needs dt, tolerances and timeout > 0".into()));
        }
        if !(self.base_noise_sigma >= 0.0) || !(self.noise_ramp >= 0.0) {
            return Err(Error::Config("sim noise parameters must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub completed: bool,
    /// Delay plus duration when completed, otherwise the episode timeout.
    pub motion_completion_time: f64,
    pub plan_to_motion_delay: f64,
    pub motion_duration: f64,
    /// Robustness of the final commanded state.
    pub robustness: f64,
    pub collided: bool,
    pub termination: Termination,
    pub loops: usize,
    pub overruns: usize,
    pub switches: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub transcript: Transcript,
    /// Executed state at the end, after base error and correction.
    pub final_state: Vec<f64>,
}

/// The constant base offset of an episode. It depends on the scenario seed
/// only, so every method faces the same error.
pub fn base_offset(seed: u64, sigma: f64) -> (f64, f64) {
    if sigma <= 0.0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x6e6f697365));
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    (n.sample(&mut rng), n.sample(&mut rng))
}

/// Published trajectories laid out on the episode clock; later
/// publications override earlier ones from their start time on.
pub struct Timeline {
    start: RobotState,
    segments: Vec<(f64, Trajectory)>,
}

impl Timeline {
    pub fn new(start: RobotState, published: &[PublishedRecord], t_s: f64) -> Self {
        let segments = published
            .iter()
            .map(|p| (p.start_time, Trajectory::from_record(p.trajectory.clone(), t_s)))
            .collect();
        Timeline { start, segments }
    }

    /// Time of the first publication, if any.
    pub fn first_start(&self) -> Option<f64> {
        self.segments.first().map(|s| s.0)
    }

    /// Time the last publication finishes playing.
    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |(s, t)| s + t.duration())
    }

    pub fn commanded(&self, t: f64) -> RobotState {
        let k = self.segments.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            return self.start.clone();
        }
        let (s, traj) = &self.segments[k - 1];
        traj.state_at(t - s)
    }

    pub fn final_positions(&self) -> Vec<f64> {
        self.segments.last().map_or_else(|| self.start.positions.clone(), |(_, t)| t.last().positions.clone())
    }
}

fn ramp(travel: f64, ramp: f64) -> f64 {
    if ramp <= 0.0 { 1.0 } else { (travel / ramp).min(1.0) }
}

/// Plays a transcript on the scenario and scores it.
pub fn evaluate_transcript(
    sc: &LoadedScenario,
    transcript: &Transcript,
    planner: &PlannerConfig,
    sim: &SimConfig,
) -> (EpisodeMetrics, Vec<f64>) {
    let model = &sc.model;
    let timeline = Timeline::new(sc.start.clone(), &transcript.published, planner.timing.t_s);
    let (ox, oy) = base_offset(sc.seed, sim.base_noise_sigma);
    let end = timeline.end();

    // Ground truth at every tick: commanded state plus the ramped offset.
    let mut collided = false;
    let mut travel = 0.0;
    let mut prev_xy = sc.start.base_xy();
    let ticks = (end / sim.dt).ceil() as usize;
    let mut executed = sc.start.positions.clone();
    for k in 0..=ticks {
        let t = (k as f64 * sim.dt).min(end);
        let cmd = timeline.commanded(t).positions;
        travel += (cmd[BASE_X] - prev_xy.0).hypot(cmd[BASE_Y] - prev_xy.1);
        prev_xy = (cmd[BASE_X], cmd[BASE_Y]);
        let f = ramp(travel, sim.noise_ramp);
        executed = cmd;
        executed[BASE_X] += f * ox;
        executed[BASE_Y] += f * oy;
        if !collided && is_collision(model, &executed, &sc.env.sample_env(model, &executed, t), 0.0) {
            collided = true;
        }
    }

    // With the base off target, the arm re-solves for the commanded
    // end-effector pose from where the base actually is.
    let commanded_final = timeline.final_positions();
    let rot_tol = sim.rot_tol_deg.to_radians();
    let commanded_ok = goal_reached(model, &commanded_final, &sc.goals, sim.pos_tol, rot_tol);
    let (fx, fy) = (ramp(travel, sim.noise_ramp) * ox, ramp(travel, sim.noise_ramp) * oy);
    let has_ee = !extract_ee_constraints(&sc.goals).is_empty();
    if commanded_ok && has_ee && (fx != 0.0 || fy != 0.0) {
        let view = sc.env.sample_env_padded(model, &commanded_final, fx.hypot(fy));
        let target = model.ee_pose(&commanded_final);
        let g = &planner.generator;
        if let Some(q) = continue_ik(model, &commanded_final, &target, fx, fy, &view, &g.robust, &g.ik_sample.ik, &Meter::default()) {
            executed = q;
        }
    }

    let delay = timeline.first_start().unwrap_or(sim.episode_timeout);
    let duration = if timeline.first_start().is_some() { end - delay } else { 0.0 };
    let completed = timeline.first_start().is_some()
        && delay + duration <= sim.episode_timeout
        && goal_reached(model, &executed, &sc.goals, sim.pos_tol, rot_tol);
    let g = &planner.generator;
    let r = robustness(model, &commanded_final, &sc.env, &g.base_error, &g.robust, &g.ik_sample.ik, &Meter::default());
    let metrics = EpisodeMetrics {
        completed,
        motion_completion_time: if completed { delay + duration } else { sim.episode_timeout },
        plan_to_motion_delay: delay,
        motion_duration: duration,
        robustness: r,
        collided,
        termination: transcript.termination,
        loops: transcript.loops.len(),
        overruns: transcript.loops.iter().filter(|l| l.overrun).count(),
        switches: transcript.published.len(),
    };
    (metrics, executed)
}

/// Plans with `method` on the modeled clock and scores the result.
pub fn run_episode(sc: &LoadedScenario, method: Method, planner: &PlannerConfig, sim: &SimConfig) -> Episode {
    let cfg = PlannerConfig { horizon: sim.episode_timeout, ..method.configure(planner) };
    let req = sc.request();
    let meter = Meter::default();
    let transcript = match method {
        Method::Rrt => {
            let plan = plan_baseline(&req, &sc.start.positions, &cfg, sc.seed, &meter);
            let delay = meter.elapsed();
            let published: Vec<PublishedRecord> = plan
                .filter(|_| delay < sim.episode_timeout)
                .map(|t| PublishedRecord { start_time: delay, trajectory: t.to_record() })
                .into_iter()
                .collect();
            let termination = if published.is_empty() { Termination::PlanFailed } else { Termination::Finished };
            Transcript { method, loops: Vec::new(), published, termination, end_time: delay }
        }
        _ => {
            let mut rec = Recorder::default();
            let mut t = run_periodic(&req, &sc.start, &cfg, sc.seed, &mut rec, &meter);
            t.method = method;
            t
        }
    };
    let (metrics, final_state) = evaluate_transcript(sc, &transcript, &cfg, sim);
    Episode { metrics, transcript, final_state }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{EePoseConstraint, GoalConstraint, GoalConstraintSpec};
    use crate::environment::EnvironmentSpec;
    use crate::model::RobotModel;
    use crate::scenario::Scenario;

    fn reach_scenario(seed: u64) -> LoadedScenario {
        let model = RobotModel::bundled("hsr-like").unwrap();
        let mut q = vec![0.0; model.dof()];
        q[BASE_X] = 1.0;
        q[4] = -1.2;
        q[6] = -0.4;
        let goal = GoalConstraint::Ee(EePoseConstraint::exact(model.ee_pose(&q)));
        Scenario {
            id: "reach".into(),
            model: "hsr-like".into(),
            template: None,
            seed,
            environment: EnvironmentSpec::default(),
            start: RobotState::at_rest(vec![0.0; model.dof()]),
            goals: vec![goal.to_spec()],
            soft: vec![],
        }
        .load()
        .unwrap()
    }

    #[test]
    fn empty_scene_completes_without_collision() {
        let sc = reach_scenario(1);
        let ep = run_episode(&sc, Method::Rlp, &PlannerConfig::default(), &SimConfig::default());
        let m = &ep.metrics;
        assert!(m.completed, "{m:?}");
        assert!(!m.collided);
        assert_eq!(m.motion_completion_time, m.plan_to_motion_delay + m.motion_duration);
        assert!(m.plan_to_motion_delay > 0.0 && m.plan_to_motion_delay <= PlannerConfig::default().loop_budget());
        let last = &ep.transcript.published.last().unwrap().trajectory.samples;
        assert_eq!(ep.final_state, last.last().unwrap().positions);
    }

    #[test]
    fn unreachable_goal_times_out() {
        let mut sc = reach_scenario(2);
        let model = sc.model.clone();
        let mut far = model.ee_pose(&sc.start.positions);
        far.translation.vector.z = 3.0;
        sc.goals = vec![GoalConstraint::from_spec(&GoalConstraintSpec::Ee {
            reference: crate::constraints::PoseSpec::from_pose(&far),
            bounds: Default::default(),
        })
        .unwrap()];
        let ep = run_episode(&sc, Method::Rlp, &PlannerConfig::default(), &SimConfig::default());
        assert!(!ep.metrics.completed);
        assert_eq!(ep.metrics.motion_completion_time, 20.0);
    }

    #[test]
    fn transcript_replay_reproduces_metrics() {
        let sc = reach_scenario(3);
        let sim = SimConfig { base_noise_sigma: 0.03, ..SimConfig::default() };
        let cfg = PlannerConfig::default();
        let ep = run_episode(&sc, Method::Rlp, &cfg, &sim);
        let text = serde_json::to_string(&ep.transcript).unwrap();
        let back: Transcript = serde_json::from_str(&text).unwrap();
        let (m, q) = evaluate_transcript(&sc, &back, &cfg, &sim);
        assert_eq!(m, ep.metrics);
        assert_eq!(q, ep.final_state);
    }

    #[test]
    fn offset_is_seeded_and_zero_without_noise() {
        assert_eq!(base_offset(5, 0.0), (0.0, 0.0));
        assert_eq!(base_offset(5, 0.03), base_offset(5, 0.03));
        assert_ne!(base_offset(5, 0.03), base_offset(6, 0.03));
    }
}
