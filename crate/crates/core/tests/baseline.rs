use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlp_core::baseline::{edge_free, plan_baseline, rrt_connect, sample_goal_roots, shortcut, RrtConfig};
use rlp_core::constraints::{GoalConstraint, JointConstraint};
use rlp_core::environment::{is_collision, Aabb, Environment, EnvironmentSpec};
use rlp_core::ik::IkSampleConfig;
use rlp_core::meter::Meter;
use rlp_core::model::{angle_diff, RobotModel, BASE_X, BASE_Y, BASE_YAW};
use rlp_core::planner::{validate, PlanRequest, PlannerConfig, Validation};

fn hsr() -> RobotModel {
    RobotModel::bundled("hsr-like").unwrap()
}

fn stowed(model: &RobotModel) -> Vec<f64> {
    let mut q = vec![0.0; model.dof()];
    q[model.dof_index("wrist_flex").unwrap()] = -std::f64::consts::FRAC_PI_2;
    q
}

fn length(model: &RobotModel, path: &[Vec<f64>]) -> f64 {
    path.windows(2).map(|w| model.position_distance(&w[0], &w[1])).sum()
}

fn boxes_env(boxes: Vec<Aabb>) -> Environment {
    Environment::new(EnvironmentSpec { boxes, ..EnvironmentSpec::default() }).unwrap()
}

fn pillars() -> Environment {
    boxes_env(vec![
        Aabb::new([1.0, -0.4, 0.0], [1.4, 0.4, 1.2]),
        Aabb::new([2.2, 0.6, 0.0], [2.6, 1.6, 1.2]),
        Aabb::new([2.2, -1.6, 0.0], [2.6, -0.8, 1.2]),
    ])
}

/// Straight-line recheck at `res`, written independently of `edge_free`.
fn fine_free(model: &RobotModel, env: &Environment, a: &[f64], b: &[f64], res: f64) -> bool {
    let n = (model.position_distance(a, b) / res).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let s = k as f64 / n as f64;
        let q: Vec<f64> = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| if i == BASE_YAW { x + s * angle_diff(*x, *y) } else { x + s * (y - x) })
            .collect();
        !is_collision(model, &q, &env.full_view(), env.margin())
    })
}

/// Random collision-free waypoint walk of 3 to 8 waypoints.
fn random_walk(model: &RobotModel, env: &Environment, rng: &mut ChaCha8Rng, cfg: &RrtConfig) -> Vec<Vec<f64>> {
    let meter = Meter::default();
    let n = rng.random_range(3..=8);
    let mut path = vec![stowed(model)];
    while path.len() < n {
        let last = path.last().unwrap();
        let mut q = last.clone();
        q[BASE_X] += rng.random_range(-0.8..0.8);
        q[BASE_Y] += rng.random_range(-0.8..0.8);
        q[BASE_YAW] = angle_diff(0.0, q[BASE_YAW] + rng.random_range(-0.6..0.6));
        for i in 3..model.dof() {
            q[i] = (q[i] + rng.random_range(-0.3..0.3)).clamp(model.lower()[i], model.upper()[i]);
        }
        if edge_free(model, env, last, &q, cfg.resolution, &meter) {
            path.push(q);
        }
    }
    path
}

#[test]
fn shortcut_never_lengthens_or_collides() {
    let model = hsr();
    let env = pillars();
    let cfg = RrtConfig::default();
    let meter = Meter::default();
    let mut shorter = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = random_walk(&model, &env, &mut rng, &cfg);
        let before = length(&model, &path);
        let out = shortcut(&model, &env, path.clone(), &mut rng, &cfg, &meter);
        assert!(length(&model, &out) <= before + 1e-9, "seed {seed}");
        assert_eq!(out.first(), path.first());
        assert_eq!(out.last(), path.last());
        for w in out.windows(2) {
            assert!(edge_free(&model, &env, &w[0], &w[1], cfg.resolution, &meter), "seed {seed}");
        }
        shorter += usize::from(length(&model, &out) < before - 1e-9);
    }
    assert!(shorter > 500, "{shorter}");
}

#[test]
fn shortcut_edge_cases() {
    let model = hsr();
    let env = Environment::empty();
    let meter = Meter::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = stowed(&model);
    let mut b = a.clone();
    b[BASE_X] = 2.0;
    let cfg = RrtConfig::default();
    assert_eq!(shortcut(&model, &env, vec![a.clone(), b.clone()], &mut rng, &cfg, &meter), vec![a.clone(), b.clone()]);
    // Z-shaped detour.
    let mut z1 = a.clone();
    z1[BASE_Y] = 1.0;
    let mut z2 = z1.clone();
    z2[BASE_X] = 2.0;
    z2[BASE_Y] = -1.0;
    let zig = vec![a.clone(), z1, z2, b.clone()];
    let none = RrtConfig { shortcut_iterations: 0, ..cfg };
    assert_eq!(shortcut(&model, &env, zig.clone(), &mut rng, &none, &meter), zig);
    let out = shortcut(&model, &env, zig.clone(), &mut rng, &cfg, &meter);
    assert!(length(&model, &out) < length(&model, &zig) - 1e-6);
}

fn goal_at(x: f64, y: f64) -> Vec<GoalConstraint> {
    vec![GoalConstraint::Joint(JointConstraint { intervals: [("x".into(), [x, x]), ("y".into(), [y, y])].into() })]
}

#[test]
fn rrt_paths_satisfy_goals_and_pass_fine_rechecks() {
    let model = hsr();
    let env = pillars();
    let cfg = RrtConfig::default();
    let meter = Meter::default();
    let start = stowed(&model);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goals = goal_at(rng.random_range(3.2..4.0), rng.random_range(-1.5..1.5));
        let roots = sample_goal_roots(&model, &env, &goals, &start, &mut rng, &cfg, &IkSampleConfig::default(), &meter);
        assert!(!roots.is_empty());
        let path = rrt_connect(&model, &env, &start, &roots, &mut rng, &cfg, &meter).expect("solvable");
        assert_eq!(path[0], start);
        assert!(goals[0].satisfies(&model, path.last().unwrap()));
        assert!(path.iter().all(|q| model.within_limits(q)));
        for w in path.windows(2) {
            assert!(fine_free(&model, &env, &w[0], &w[1], cfg.step / 10.0), "seed {seed}");
        }
    }
}

#[test]
fn free_corridor_needs_few_waypoints_and_walled_goal_fails() {
    let model = hsr();
    let cfg = RrtConfig::default();
    let meter = Meter::default();
    let start = stowed(&model);
    let walls = boxes_env(vec![
        Aabb::new([-1.0, 0.8, 0.0], [5.0, 1.0, 1.2]),
        Aabb::new([-1.0, -1.0, 0.0], [5.0, -0.8, 1.2]),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let goals = goal_at(3.0, 0.0);
    let roots = sample_goal_roots(&model, &walls, &goals, &start, &mut rng, &cfg, &IkSampleConfig::default(), &meter);
    let path = rrt_connect(&model, &walls, &start, &roots, &mut rng, &cfg, &meter).unwrap();
    assert!(path.len() <= 36, "{}", path.len());

    // Goal inside a closed box room.
    let room = boxes_env(vec![
        Aabb::new([2.0, -1.0, 0.0], [2.1, 1.0, 1.5]),
        Aabb::new([3.9, -1.0, 0.0], [4.0, 1.0, 1.5]),
        Aabb::new([2.0, 0.9, 0.0], [4.0, 1.0, 1.5]),
        Aabb::new([2.0, -1.0, 0.0], [4.0, -0.9, 1.5]),
    ]);
    let small = RrtConfig { max_iterations: 500, ..cfg };
    let goals = goal_at(3.0, 0.0);
    let roots = sample_goal_roots(&model, &room, &goals, &start, &mut rng, &small, &IkSampleConfig::default(), &meter);
    assert!(roots.is_empty() || rrt_connect(&model, &room, &start, &roots, &mut rng, &small, &meter).is_none());
}

#[test]
fn baseline_trajectories_pass_the_validator() {
    let model = hsr();
    let env = pillars();
    let cfg = PlannerConfig::default();
    for seed in 0..5u64 {
        let goals = goal_at(3.5, -0.3 + 0.15 * seed as f64);
        let req = PlanRequest { model: &model, env: &env, goals: &goals, soft: &[] };
        let meter = Meter::default();
        let tr = plan_baseline(&req, &stowed(&model), &cfg, seed, &meter).expect("solvable");
        assert_eq!(validate(&tr, &env, &model, &cfg, None, &meter), Validation::Valid);
        assert!(goals[0].satisfies(&model, &tr.last().positions));
    }
}
