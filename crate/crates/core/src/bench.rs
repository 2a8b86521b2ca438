//! Scenario generation, suite execution and result tables.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::plan_baseline;
use crate::constraints::{EePoseConstraint, GoalConstraint, TsrBounds};
use crate::environment::{is_collision, Aabb, Environment, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::meter::{CostModel, Meter};
use crate::model::{RobotModel, RobotState, BASE_X, BASE_Y, BASE_YAW};
use crate::planner::{derive_seed, Method, PlannerConfig};
use crate::scenario::{LoadedScenario, Scenario};
use crate::sim::{run_episode, EpisodeMetrics, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Tabletop,
    Shelf,
    Corridor,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Tabletop, Template::Shelf, Template::Corridor];

    pub fn name(self) -> &'static str {
        match self {
            Template::Tabletop => "tabletop",
            Template::Shelf => "shelf",
            Template::Corridor => "corridor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown template `{s}` (expected tabletop, shelf or corridor)")))
    }
}

/// Planner, simulator and generator settings of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct BenchConfig {
    pub planner: PlannerConfig,
    pub sim: SimConfig,
    pub generator: ScenarioGenConfig,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.sim.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioGenConfig {
    pub model: String,
    /// Geometry draws per scenario before it is skipped.
    pub max_retries: usize,
    /// Keep only scenarios the baseline planner solves.
    pub screen: bool,
    /// Start distance range [m] from the goal base placement.
    pub start_distance: [f64; 2],
}

impl Default for ScenarioGenConfig {
    fn default() -> Self {
        ScenarioGenConfig { model: "hsr-like".into(), max_retries: 20, screen: true, start_distance: [1.0, 2.5] }
    }
}

/// Stowed arm posture used for generated start states.
fn stowed(model: &RobotModel) -> Vec<f64> {
    let mut q = vec![0.0; model.dof()];
    if let Some(i) = model.dof_index("wrist_flex") {
        q[i] = -FRAC_PI_2;
    }
    q
}

/// Axis-aligned box given along/across ranges in a frame whose "along"
/// axis is the k-th quarter turn from +x.
fn local_box(origin: [f64; 2], k: usize, along: [f64; 2], across: [f64; 2], z: [f64; 2]) -> Aabb {
    let th = k as f64 * FRAC_PI_2;
    let (s, c) = th.sin_cos();
    let (s, c) = (s.round(), c.round());
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for a in along {
        for b in across {
            let x = origin[0] + c * a - s * b;
            let y = origin[1] + s * a + c * b;
            min = [min[0].min(x), min[1].min(y)];
            max = [max[0].max(x), max[1].max(y)];
        }
    }
    Aabb::new([min[0], min[1], z[0]], [max[0], max[1], z[1]])
}

fn local_point(origin: [f64; 2], k: usize, along: f64, across: f64) -> [f64; 2] {
    let th = k as f64 * FRAC_PI_2;
    let (s, c) = th.sin_cos();
    let (s, c) = (s.round(), c.round());
    [origin[0] + c * along - s * across, origin[1] + s * along + c * across]
}

/// Surface points of a small box, `spacing` apart.
fn object_points(min: [f64; 3], max: [f64; 3], spacing: f64) -> Vec<[f64; 3]> {
    let n = |a: f64, b: f64| (((b - a) / spacing).ceil() as usize).max(1);
    let (nx, ny, nz) = (n(min[0], max[0]), n(min[1], max[1]), n(min[2], max[2]));
    let mut out = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                let on_face = i == 0 || i == nx || j == 0 || j == ny || k == 0 || k == nz;
                if on_face {
                    out.push([
                        min[0] + (max[0] - min[0]) * i as f64 / nx as f64,
                        min[1] + (max[1] - min[1]) * j as f64 / ny as f64,
                        min[2] + (max[2] - min[2]) * k as f64 / nz as f64,
                    ]);
                }
            }
        }
    }
    out
}

fn clutter<R: Rng>(rng: &mut R, top: &Aabb, count: usize, keep_clear: [f64; 2]) -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    for _ in 0..count {
        let w = rng.random_range(0.04..0.08);
        let h = rng.random_range(0.06..0.2);
        for _ in 0..10 {
            let x = rng.random_range(top.min[0] + w..top.max[0] - w);
            let y = rng.random_range(top.min[1] + w..top.max[1] - w);
            if (x - keep_clear[0]).hypot(y - keep_clear[1]) > 0.14 {
                let z = top.max[2];
                pts.extend(object_points([x - w / 2.0, y - w / 2.0, z], [x + w / 2.0, y + w / 2.0, z + h], 0.025));
                break;
            }
        }
    }
    pts
}

#[derive(Clone, Copy)]
enum Approach {
    /// Gripper pointing down.
    TopDown,
    /// Gripper horizontal, facing heading `yaw`.
    Side { yaw: f64 },
}

/// A collision-free state whose end effector is at `target`, built from
/// the arm geometry so that the goal is known to be reachable.
fn witness<R: Rng>(
    model: &RobotModel,
    env: &Environment,
    target: [f64; 3],
    approach: Approach,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let idx = |n: &str| model.dof_index(n);
    let (lift, flex, wrist, wrist_roll) = (idx("arm_lift")?, idx("arm_flex")?, idx("wrist_flex")?, idx("wrist_roll")?);
    for _ in 0..60 {
        let mut q = vec![0.0; model.dof()];
        let (f, w, yaw) = match approach {
            Approach::TopDown => {
                let f = rng.random_range(-2.4..-1.25);
                (f, -PI - f, rng.random_range(-PI..PI))
            }
            Approach::Side { yaw } => {
                let f = rng.random_range(-1.9..-1.2);
                (f, -FRAC_PI_2 - f, yaw + rng.random_range(-0.25..0.25))
            }
        };
        q[flex] = f;
        q[wrist] = w;
        q[wrist_roll] = rng.random_range(-1.5..1.5);
        q[BASE_YAW] = yaw;
        let ee = model.ee_pose(&q).translation.vector;
        q[lift] = target[2] - ee.z;
        q[BASE_X] = target[0] - ee.x;
        q[BASE_Y] = target[1] - ee.y;
        if model.within_limits(&q) && !is_collision(model, &q, &env.full_view(), env.margin()) {
            return Some(q);
        }
    }
    None
}

/// Exact goal position; free spin about the approach axis.
fn grasp_goal(model: &RobotModel, q: &[f64]) -> GoalConstraint {
    let bounds = TsrBounds { yaw: [-PI, PI], ..TsrBounds::default() };
    GoalConstraint::Ee(EePoseConstraint::new(model.ee_pose(q), bounds).expect("valid bounds"))
}

/// A start state `distance` away from `goal_base`, facing a random heading,
/// inside the sector `heading ± spread`.
fn start_state<R: Rng>(
    model: &RobotModel,
    env: &Environment,
    goal_base: [f64; 2],
    heading: f64,
    spread: f64,
    distance: [f64; 2],
    rng: &mut R,
) -> Option<Vec<f64>> {
    for _ in 0..50 {
        let d = rng.random_range(distance[0]..=distance[1]);
        let a = heading + rng.random_range(-spread..=spread);
        let mut q = stowed(model);
        q[BASE_X] = goal_base[0] + d * a.cos();
        q[BASE_Y] = goal_base[1] + d * a.sin();
        q[BASE_YAW] = rng.random_range(-PI..PI);
        if !is_collision(model, &q, &env.full_view(), env.margin()) {
            return Some(q);
        }
    }
    None
}

struct Draft {
    spec: EnvironmentSpec,
    start: Vec<f64>,
    goal: GoalConstraint,
}

fn draft_tabletop<R: Rng>(model: &RobotModel, cfg: &ScenarioGenConfig, rng: &mut R) -> Option<Draft> {
    let (sx, sy, h) = (rng.random_range(0.6..1.2), rng.random_range(0.5..0.9), rng.random_range(0.45..0.75));
    let table = Aabb::new([-sx / 2.0, -sy / 2.0, 0.0], [sx / 2.0, sy / 2.0, h]);
    let side = rng.random_range(0..4usize);
    let (half_along, half_across) = if side % 2 == 0 { (sx / 2.0, sy / 2.0) } else { (sy / 2.0, sx / 2.0) };
    let inset = rng.random_range(0.06..0.2);
    let across = rng.random_range(-half_across + 0.1..half_across - 0.1);
    let t = local_point([0.0, 0.0], side, half_along - inset, across);
    let mut boxes = vec![table];
    // A chair or cabinet near another side of the table.
    if rng.random_bool(0.7) {
        let k = (side + rng.random_range(1..4usize)) % 4;
        let (ha, hc) = if k % 2 == 0 { (sx / 2.0, sy / 2.0) } else { (sy / 2.0, sx / 2.0) };
        let off = rng.random_range(-hc..hc);
        let gap = rng.random_range(0.05..0.3);
        boxes.push(local_box([0.0, 0.0], k, [ha + gap, ha + gap + 0.45], [off - 0.22, off + 0.22], [0.0, 0.9]));
    }
    let mut spec = EnvironmentSpec { boxes, ..EnvironmentSpec::default() };
    let count = rng.random_range(1..4usize);
    spec.points = clutter(rng, &table, count, t);
    let env = Environment::new(spec.clone()).ok()?;
    let z = h + rng.random_range(0.04..0.12);
    let q_goal = witness(model, &env, [t[0], t[1], z], Approach::TopDown, rng)?;
    let heading = side as f64 * FRAC_PI_2;
    let start = start_state(model, &env, [q_goal[BASE_X], q_goal[BASE_Y]], heading, 1.2, cfg.start_distance, rng)?;
    Some(Draft { spec, start, goal: grasp_goal(model, &q_goal) })
}

fn draft_shelf<R: Rng>(model: &RobotModel, cfg: &ScenarioGenConfig, rng: &mut R) -> Option<Draft> {
    let k = rng.random_range(0..4usize);
    let depth = rng.random_range(0.3..0.4);
    let width = rng.random_range(0.6..1.0);
    let hw = width / 2.0;
    let b1 = rng.random_range(0.3..0.45);
    let b2 = b1 + rng.random_range(0.38..0.48);
    let top = b2 + rng.random_range(0.3..0.4);
    // The shelf's open face points along +along; its back is at -depth.
    let o = [0.0, 0.0];
    let mut boxes = vec![
        local_box(o, k, [-depth - 0.02, -depth], [-hw, hw], [0.0, top]),
        local_box(o, k, [-depth, 0.0], [-hw - 0.02, -hw], [0.0, top]),
        local_box(o, k, [-depth, 0.0], [hw, hw + 0.02], [0.0, top]),
        local_box(o, k, [-depth, 0.0], [-hw, hw], [0.0, 0.05]),
        local_box(o, k, [-depth, 0.0], [-hw, hw], [b1 - 0.02, b1]),
        local_box(o, k, [-depth, 0.0], [-hw, hw], [b2 - 0.02, b2]),
        local_box(o, k, [-depth, 0.0], [-hw, hw], [top - 0.02, top]),
        // Wall behind the shelf.
        local_box(o, k, [-depth - 0.12, -depth - 0.02], [-3.0, 3.0], [0.0, 2.0]),
    ];
    if rng.random_bool(0.5) {
        let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let c0 = s * (hw + rng.random_range(0.15..0.5));
        boxes.push(local_box(o, k, [-depth, 0.1], [c0.min(c0 + s * 0.5), c0.max(c0 + s * 0.5)], [0.0, 0.8]));
    }
    let (lo, hi) = if rng.random_bool(0.5) { (b1, b2 - 0.02) } else { (0.05, b1 - 0.02) };
    let z = (lo + rng.random_range(0.1..0.16)).min(hi - 0.12);
    if !(0.35..=1.02).contains(&z) {
        return None;
    }
    let across = rng.random_range(-hw + 0.15..hw - 0.15);
    let t = local_point(o, k, -rng.random_range(0.05..0.15), across);
    let shelf_floor = Aabb::new(
        [boxes[3].min[0], boxes[3].min[1], lo],
        [boxes[3].max[0], boxes[3].max[1], lo],
    );
    let mut spec = EnvironmentSpec { boxes, ..EnvironmentSpec::default() };
    let count = rng.random_range(0..3usize);
    spec.points = clutter(rng, &shelf_floor, count, t);
    let env = Environment::new(spec.clone()).ok()?;
    let facing = k as f64 * FRAC_PI_2 + PI;
    let q_goal = witness(model, &env, [t[0], t[1], z], Approach::Side { yaw: facing }, rng)?;
    let heading = k as f64 * FRAC_PI_2;
    let start = start_state(model, &env, [q_goal[BASE_X], q_goal[BASE_Y]], heading, 1.0, cfg.start_distance, rng)?;
    Some(Draft { spec, start, goal: grasp_goal(model, &q_goal) })
}

/// Two tall blocks between start and goal leave a gap off the straight
/// line, so the robot has to detour through it before heading straight in.
fn draft_corridor<R: Rng>(model: &RobotModel, _cfg: &ScenarioGenConfig, rng: &mut R) -> Option<Draft> {
    let (sx, sy, h) = (rng.random_range(0.6..1.0), rng.random_range(0.5..0.8), rng.random_range(0.45..0.75));
    let table = Aabb::new([-sx / 2.0, -sy / 2.0, 0.0], [sx / 2.0, sy / 2.0, h]);
    let side = rng.random_range(0..4usize);
    let half_along = if side % 2 == 0 { sx / 2.0 } else { sy / 2.0 };
    let half_across = if side % 2 == 0 { sy / 2.0 } else { sx / 2.0 };
    let t = local_point([0.0, 0.0], side, half_along - rng.random_range(0.06..0.15), rng.random_range(-half_across + 0.1..half_across - 0.1));
    let env0 = Environment::new(EnvironmentSpec { boxes: vec![table], ..EnvironmentSpec::default() }).ok()?;
    let facing = side as f64 * FRAC_PI_2 + PI;
    let q_goal = witness(model, &env0, [t[0], t[1], h + rng.random_range(0.05..0.12)], Approach::Side { yaw: facing }, rng)
        .or_else(|| witness(model, &env0, [t[0], t[1], h + 0.08], Approach::TopDown, rng))?;
    let gb = [q_goal[BASE_X], q_goal[BASE_Y]];
    // Frame along the table's outward normal, rooted at the goal base.
    let d = rng.random_range(2.2..2.8);
    let mid = rng.random_range(0.9..1.2);
    let thick = rng.random_range(0.25..0.4);
    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let gap_lo = rng.random_range(0.25..0.4);
    let gap_hi = gap_lo + rng.random_range(0.9..1.2);
    let block_z = [0.0, rng.random_range(0.9..1.3)];
    let span = |a: f64, b: f64| [(s * a).min(s * b), (s * a).max(s * b)];
    let boxes = vec![
        table,
        local_box(gb, side, [mid, mid + thick], span(gap_lo - rng.random_range(0.8..1.2), gap_lo), block_z),
        local_box(gb, side, [mid, mid + thick], span(gap_hi, gap_hi + rng.random_range(0.6..1.0)), block_z),
    ];
    let spec = EnvironmentSpec { boxes, ..EnvironmentSpec::default() };
    let env = Environment::new(spec.clone()).ok()?;
    if is_collision(model, &q_goal, &env.full_view(), env.margin()) {
        return None;
    }
    let p = local_point(gb, side, d, rng.random_range(-0.3..0.3) - s * 0.2);
    let mut start = stowed(model);
    start[BASE_X] = p[0];
    start[BASE_Y] = p[1];
    start[BASE_YAW] = rng.random_range(-PI..PI);
    if is_collision(model, &start, &env.full_view(), env.margin()) {
        return None;
    }
    Some(Draft { spec, start, goal: grasp_goal(model, &q_goal) })
}

/// `n` scenarios of one template. Each is redrawn until it loads and, when
/// screening is on, until the baseline planner solves it; scenarios that
/// still fail after `max_retries` draws are skipped with a warning.
pub fn gen_scenarios(
    template: Template,
    n: usize,
    seed: u64,
    cfg: &ScenarioGenConfig,
    planner: &PlannerConfig,
) -> Result<Vec<Scenario>> {
    if n == 0 {
        return Err(Error::Config("scenario count must be at least 1".into()));
    }
    let model = RobotModel::resolve(&cfg.model)?;
    let tag = template as u64 + 1;
    let out: Vec<Option<Scenario>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sseed = derive_seed(seed, tag << 32 | i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(sseed);
            for _ in 0..cfg.max_retries {
                let draft = match template {
                    Template::Tabletop => draft_tabletop(&model, cfg, &mut rng),
                    Template::Shelf => draft_shelf(&model, cfg, &mut rng),
                    Template::Corridor => draft_corridor(&model, cfg, &mut rng),
                };
                let Some(d) = draft else { continue };
                let sc = Scenario {
                    id: format!("{}-{:03}", template.name(), i),
                    model: cfg.model.clone(),
                    template: Some(template.name().into()),
                    seed: sseed,
                    environment: d.spec,
                    start: RobotState::at_rest(d.start),
                    goals: vec![d.goal.to_spec()],
                    soft: Vec::new(),
                };
                let Ok(loaded) = sc.load() else { continue };
                if !cfg.screen || screen(&loaded, planner) {
                    return Some(sc);
                }
            }
            log::warn!("skipping {} scenario {i}: no solvable draw in {} tries", template.name(), cfg.max_retries);
            None
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Whether the baseline planner finds a validated plan.
pub fn screen(sc: &LoadedScenario, planner: &PlannerConfig) -> bool {
    plan_baseline(&sc.request(), &sc.start.positions, planner, sc.seed, &Meter::default()).is_some()
}

/// The mixed suite: templates interleaved, `n` scenarios total.
pub fn default_suite(n: usize, seed: u64, cfg: &ScenarioGenConfig, planner: &PlannerConfig) -> Result<Vec<Scenario>> {
    let per = n.div_ceil(Template::ALL.len());
    let mut by_template = Vec::new();
    for t in Template::ALL {
        by_template.push(gen_scenarios(t, per, seed, cfg, planner)?);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..per {
        for list in &by_template {
            if out.len() < n {
                if let Some(s) = list.get(i) {
                    out.push(s.clone());
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub scenario_id: String,
    pub method: Method,
    pub metrics: EpisodeMetrics,
}

/// Per-method means; times are averaged over every episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub episodes: usize,
    pub completion_rate: f64,
    pub motion_completion_time: f64,
    pub plan_to_motion_delay: f64,
    pub motion_duration: f64,
    pub robustness: f64,
    pub collision_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub rows: Vec<SuiteRow>,
    pub aggregates: Vec<Aggregate>,
}

pub fn aggregate(rows: &[SuiteRow], methods: &[Method]) -> Vec<Aggregate> {
    methods
        .iter()
        .map(|&m| {
            let sel: Vec<&EpisodeMetrics> = rows.iter().filter(|r| r.method == m).map(|r| &r.metrics).collect();
            let n = sel.len().max(1) as f64;
            let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| sel.iter().map(|x| f(x)).sum::<f64>() / n;
            Aggregate {
                method: m,
                episodes: sel.len(),
                completion_rate: mean(&|x| f64::from(u8::from(x.completed))),
                motion_completion_time: mean(&|x| x.motion_completion_time),
                plan_to_motion_delay: mean(&|x| x.plan_to_motion_delay),
                motion_duration: mean(&|x| x.motion_duration),
                robustness: mean(&|x| x.robustness),
                collision_rate: mean(&|x| f64::from(u8::from(x.collided))),
            }
        })
        .collect()
}

/// Runs every (scenario, method) episode on a pool of `threads` workers
/// (0 picks the default). Rows come out in scenario order, then method
/// order, whatever the thread count.
pub fn run_suite(
    scenarios: &[LoadedScenario],
    methods: &[Method],
    cfg: &BenchConfig,
    threads: usize,
) -> Result<SuiteResult> {
    if scenarios.is_empty() || methods.is_empty() {
        return Err(Error::Config("a suite needs at least one scenario and one method".into()));
    }
    let jobs: Vec<(usize, Method)> =
        (0..scenarios.len()).flat_map(|i| methods.iter().map(move |&m| (i, m))).collect();
    let run = || -> Vec<SuiteRow> {
        jobs.par_iter()
            .map(|&(i, m)| {
                let sc = &scenarios[i];
                let ep = run_episode(sc, m, &cfg.planner, &cfg.sim);
                log::debug!("{} {}: {:?}", sc.id, m, ep.metrics);
                SuiteRow { scenario_id: sc.id.clone(), method: m, metrics: ep.metrics }
            })
            .collect()
    };
    let rows = if threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)
    };
    let aggregates = aggregate(&rows, methods);
    Ok(SuiteResult { rows, aggregates })
}

pub const CSV_HEADER: [&str; 8] = [
    "scenario_id",
    "method",
    "completed",
    "motion_completion_time",
    "plan_to_motion_delay",
    "motion_duration",
    "robustness",
    "collided",
];

/// One row per episode, then one `aggregate` row per method whose
/// `completed` and `collided` columns hold rates.
pub fn write_csv<W: Write>(result: &SuiteResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    };
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in &result.rows {
        let m = &r.metrics;
        w.write_record([
            r.scenario_id.clone(),
            r.method.to_string(),
            u8::from(m.completed).to_string(),
            m.motion_completion_time.to_string(),
            m.plan_to_motion_delay.to_string(),
            m.motion_duration.to_string(),
            m.robustness.to_string(),
            u8::from(m.collided).to_string(),
        ])
        .map_err(io)?;
    }
    for a in &result.aggregates {
        w.write_record([
            "aggregate".to_string(),
            a.method.to_string(),
            a.completion_rate.to_string(),
            a.motion_completion_time.to_string(),
            a.plan_to_motion_delay.to_string(),
            a.motion_duration.to_string(),
            a.robustness.to_string(),
            a.collision_rate.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_all(scenarios: &[Scenario]) -> Result<Vec<LoadedScenario>> {
    scenarios.iter().map(Scenario::load).collect()
}

/// Measures the unit costs of the modeled clock on this machine. Run on a
/// release build; the defaults in [`CostModel`] come from such a run.
pub fn calibrate(seed: u64) -> Result<CostModel> {
    use crate::environment::is_collision_metered;
    use crate::ik::{solve_ik_numeric, BaseLock, IkConfig};
    use crate::meter::Work;
    use crate::timing::{time_parameterize, TimingConfig};
    use crate::trajgen::{CandidateKind, PathCandidate};
    use std::time::Instant;

    let model = RobotModel::bundled("hsr-like")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_q = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut q = vec![0.0; model.dof()];
        for (i, v) in q.iter_mut().enumerate() {
            let (lo, hi) = if i < 3 { (-1.0, 1.0) } else { (model.lower()[i], model.upper()[i]) };
            *v = rng.random_range(lo..=hi);
        }
        q
    };
    let states: Vec<Vec<f64>> = (0..2000).map(|_| random_q(&mut rng)).collect();

    // IK iterations.
    let meter = Meter::default();
    let wall = Instant::now();
    for w in states.windows(2).take(400) {
        let target = model.ee_pose(&w[0]);
        let _ = solve_ik_numeric(&model, &target, &w[1], BaseLock::Free, &IkConfig::default(), &meter);
    }
    let ik_iteration = wall.elapsed().as_secs_f64() / meter.counts().get(Work::IkIteration).max(1) as f64;

    // Collision queries: fixed part from an empty scene, per-pair part from
    // a dense cloud around the robot.
    let per_state = |env: &Environment| -> (f64, f64) {
        let meter = Meter::default();
        let wall = Instant::now();
        for q in &states {
            let view = env.sample_env(&model, q, 0.0);
            let _ = is_collision_metered(&model, q, &view, 0.0, &meter);
        }
        let n = states.len() as f64;
        (wall.elapsed().as_secs_f64() / n, meter.counts().get(Work::SphereTest) as f64 / n)
    };
    let (t_empty, _) = per_state(&Environment::empty());
    let mut pts = Vec::new();
    for i in 0..40 {
        for j in 0..40 {
            pts.extend(object_points([-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64, 0.9], [-1.95 + 0.1 * i as f64, -1.95 + 0.1 * j as f64, 0.95], 0.05));
        }
    }
    let dense = Environment::new(EnvironmentSpec { points: pts, margin: 0.0, ..EnvironmentSpec::default() })?;
    let (t_dense, tests) = per_state(&dense);
    let sphere_test = ((t_dense - t_empty) / tests.max(1.0)).max(0.0);
    let collision_state = t_empty;

    // Time parameterization: per element from short paths, per sample from
    // long ones.
    let timing = |paths: &[Vec<Vec<f64>>]| -> (f64, f64, f64) {
        let (mut elements, mut samples) = (0usize, 0usize);
        let wall = Instant::now();
        for p in paths {
            let cand = PathCandidate { waypoints: p.clone(), kind: CandidateKind::RandomMid };
            if let Ok(t) = time_parameterize(&model, &cand, None, &TimingConfig::default()) {
                elements += t.element_count();
                samples += t.samples().len();
            }
        }
        (wall.elapsed().as_secs_f64(), elements as f64, samples as f64)
    };
    let paths: Vec<Vec<Vec<f64>>> = states.chunks(3).take(300).map(|c| c.to_vec()).collect();
    let (w1, e1, s1) = timing(&paths);
    let short: Vec<Vec<Vec<f64>>> = paths
        .iter()
        .map(|p| {
            let mut a = p[0].clone();
            let b = p[0].iter().zip(&p[1]).map(|(x, y)| x + 0.01 * (y - x)).collect::<Vec<_>>();
            a[0] += 0.0;
            vec![a, b, p[0].iter().zip(&p[2]).map(|(x, y)| x + 0.02 * (y - x)).collect()]
        })
        .collect();
    let (w2, e2, s2) = timing(&short);
    // Two equations in the two unknowns.
    let det = e1 * s2 - e2 * s1;
    let (timing_element, trajectory_sample) = if det.abs() > 1e-9 {
        (((w1 * s2 - w2 * s1) / det).max(0.0), ((e1 * w2 - e2 * w1) / det).max(0.0))
    } else {
        (w1 / e1.max(1.0), 0.0)
    };

    let wall = Instant::now();
    let mut acc = 0.0;
    for a in &states {
        for b in states.iter().take(200) {
            acc += model.position_distance(a, b);
        }
    }
    std::hint::black_box(acc);
    let distance_eval = wall.elapsed().as_secs_f64() / (states.len() * 200) as f64;

    Ok(CostModel { ik_iteration, collision_state, sphere_test, timing_element, trajectory_sample, distance_eval })
}
