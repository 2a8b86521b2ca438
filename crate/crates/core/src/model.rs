//! Mobile-manipulator kinematic model: a planar holonomic base (x, y, yaw)
//! followed by a serial chain of revolute/prismatic joints.
//!
//! Configurations are flat vectors laid out as `[x, y, yaw, q_1, .., q_J]`.
//! Yaw is stored wrapped to `(-pi, pi]` and is always interpolated and
//! differenced along the shorter arc.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Pose = Isometry3<f64>;

pub const BASE_X: usize = 0;
pub const BASE_Y: usize = 1;
pub const BASE_YAW: usize = 2;
pub const BASE_DOFS: usize = 3;

const HSR_LIKE: &str = include_str!("../models/hsr-like.json");
const PANDA_LIKE: &str = include_str!("../models/panda-like.json");

/// Names of the robot configs shipped with the crate.
pub const BUNDLED_MODELS: [&str; 2] = ["hsr-like", "panda-like"];

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Signed shortest-arc difference `b - a`, in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(b - a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// Fixed transform from a parent link frame to a joint frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Origin {
    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: Origin,
    pub lower: f64,
    pub upper: f64,
    pub max_velocity: f64,
    pub max_acceleration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSpec {
    pub x_limits: [f64; 2],
    pub y_limits: [f64; 2],
    /// Limits for x [m/s], y [m/s] and yaw [rad/s].
    pub max_velocity: [f64; 3],
    pub max_acceleration: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionSphere {
    /// 0 is the base link; `i` is the frame after joint `i`.
    pub link: usize,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintSphere {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Seeds numeric IK with a base yaw that puts the target in the arm's
/// working plane (the arm is mounted `lateral_offset` metres to the left).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseHeuristic {
    #[serde(default)]
    pub lateral_offset: f64,
}

/// On-disk robot description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModelConfig {
    pub name: String,
    pub base: BaseSpec,
    pub joints: Vec<JointSpec>,
    pub ee_link: usize,
    #[serde(default)]
    pub ee_offset: Origin,
    #[serde(default)]
    pub collision_spheres: Vec<CollisionSphere>,
    #[serde(default)]
    pub base_footprint_spheres: Vec<FootprintSphere>,
    #[serde(default)]
    pub base_heuristic: Option<BaseHeuristic>,
}

/// Immutable kinematic model. Cheap to share behind `Arc`.
#[derive(Debug, Clone)]
pub struct RobotModel {
    config: RobotModelConfig,
    origins: Vec<Isometry3<f64>>,
    axes: Vec<Unit<Vector3<f64>>>,
    ee_offset: Isometry3<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    max_velocity: Vec<f64>,
    max_acceleration: Vec<f64>,
    weights: Vec<f64>,
    dof_names: Vec<String>,
    reach: f64,
    self_pairs: Vec<(usize, usize)>,
}

/// A robot collision sphere placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldSphere {
    pub center: Point3<f64>,
    pub radius: f64,
    pub link: usize,
}

/// Positions and velocities for every DOF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl RobotState {
    pub fn at_rest(positions: Vec<f64>) -> Self {
        let n = positions.len();
        RobotState {
            positions,
            velocities: vec![0.0; n],
        }
    }

    pub fn dof(&self) -> usize {
        self.positions.len()
    }

    pub fn speed(&self) -> f64 {
        self.velocities.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn base_xy(&self) -> (f64, f64) {
        (self.positions[BASE_X], self.positions[BASE_Y])
    }
}

impl RobotModel {
    /// Parses a JSON robot config and checks its invariants.
    pub fn load(text: &str) -> Result<Self> {
        let config: RobotModelConfig = serde_json::from_str(text)?;
        Self::from_config(config)
    }

    pub fn load_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::load(&std::fs::read_to_string(path)?)
    }

    /// One of [`BUNDLED_MODELS`].
    pub fn bundled(name: &str) -> Result<Self> {
        match name {
            "hsr-like" => Self::load(HSR_LIKE),
            "panda-like" => Self::load(PANDA_LIKE),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    /// A bundled name, or otherwise a path to a JSON config.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUNDLED_MODELS.contains(&name_or_path) {
            Self::bundled(name_or_path)
        } else {
            Self::load_file(name_or_path)
        }
    }

    pub fn from_config(config: RobotModelConfig) -> Result<Self> {
        let base = &config.base;
        for (label, lim) in [("x", base.x_limits), ("y", base.y_limits)] {
            if !(lim[0] < lim[1]) {
                return Err(Error::InvalidModel(format!(
                    "base {label}: lower limit {} must be below upper limit {}",
                    lim[0], lim[1]
                )));
            }
        }
        for (i, label) in ["x", "y", "yaw"].iter().enumerate() {
            if !(base.max_velocity[i] > 0.0) || !(base.max_acceleration[i] > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "base {label}: velocity and acceleration limits must be positive"
                )));
            }
        }
        let mut axes = Vec::with_capacity(config.joints.len());
        for joint in &config.joints {
            if !(joint.lower < joint.upper) {
                return Err(Error::InvalidModel(format!(
                    "joint `{}`: lower limit {} must be below upper limit {}",
                    joint.name, joint.lower, joint.upper
                )));
            }
            if !(joint.max_velocity > 0.0) || !(joint.max_acceleration > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "joint `{}`: velocity and acceleration limits must be positive",
                    joint.name
                )));
            }
            let axis = Vector3::from(joint.axis);
            if axis.norm() < 1e-9 {
                return Err(Error::InvalidModel(format!("joint `{}`: zero axis", joint.name)));
            }
            axes.push(Unit::new_normalize(axis));
        }
        let links = config.joints.len() + 1;
        if config.ee_link >= links {
            return Err(Error::InvalidModel(format!(
                "ee_link {} out of range (model has {links} links)",
                config.ee_link
            )));
        }
        for (i, s) in config.collision_spheres.iter().enumerate() {
            if s.link >= links {
                return Err(Error::InvalidModel(format!(
                    "collision sphere {i}: link index {} out of range",
                    s.link
                )));
            }
            if !(s.radius > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "collision sphere {i}: radius must be positive"
                )));
            }
        }
        for (i, s) in config.base_footprint_spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "base footprint sphere {i}: radius must be positive"
                )));
            }
        }

        let mut lower = vec![base.x_limits[0], base.y_limits[0], -PI];
        let mut upper = vec![base.x_limits[1], base.y_limits[1], PI];
        let mut max_velocity = base.max_velocity.to_vec();
        let mut max_acceleration = base.max_acceleration.to_vec();
        let mut dof_names = vec!["x".to_string(), "y".to_string(), "yaw".to_string()];
        for joint in &config.joints {
            lower.push(joint.lower);
            upper.push(joint.upper);
            max_velocity.push(joint.max_velocity);
            max_acceleration.push(joint.max_acceleration);
            dof_names.push(joint.name.clone());
        }
        let weights = max_velocity.iter().map(|v| 1.0 / v).collect();
        let origins: Vec<_> = config.joints.iter().map(|j| j.origin.isometry()).collect();

        // Upper bound on the distance from the base origin to any robot point.
        let mut chain_extent = vec![0.0; links];
        for (i, joint) in config.joints.iter().enumerate() {
            let travel = match joint.kind {
                JointKind::Revolute => 0.0,
                JointKind::Prismatic => joint.lower.abs().max(joint.upper.abs()),
            };
            chain_extent[i + 1] = chain_extent[i] + Vector3::from(joint.origin.xyz).norm() + travel;
        }
        let mut reach: f64 = 0.0;
        for s in &config.collision_spheres {
            reach = reach.max(chain_extent[s.link] + Vector3::from(s.center).norm() + s.radius);
        }
        for s in &config.base_footprint_spheres {
            reach = reach.max(Vector3::from(s.center).norm() + s.radius);
        }
        reach = reach.max(chain_extent[config.ee_link] + Vector3::from(config.ee_offset.xyz).norm());

        // Sphere order matches `world_spheres_into`: footprint first.
        let sphere_links: Vec<usize> = std::iter::repeat_n(0, config.base_footprint_spheres.len())
            .chain(config.collision_spheres.iter().map(|s| s.link))
            .collect();
        let mut self_pairs = Vec::new();
        for i in 0..sphere_links.len() {
            for j in i + 1..sphere_links.len() {
                if sphere_links[i].abs_diff(sphere_links[j]) >= 2 {
                    self_pairs.push((i, j));
                }
            }
        }

        Ok(RobotModel {
            ee_offset: config.ee_offset.isometry(),
            config,
            origins,
            axes,
            lower,
            upper,
            max_velocity,
            max_acceleration,
            weights,
            dof_names,
            reach,
            self_pairs,
        })
    }

    pub fn config(&self) -> &RobotModelConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    /// Total DOF count, base included.
    pub fn dof(&self) -> usize {
        BASE_DOFS + self.config.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.config.joints
    }

    pub fn dof_names(&self) -> &[String] {
        &self.dof_names
    }

    pub fn dof_index(&self, name: &str) -> Option<usize> {
        self.dof_names.iter().position(|n| n == name)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn max_velocity(&self) -> &[f64] {
        &self.max_velocity
    }

    pub fn max_acceleration(&self) -> &[f64] {
        &self.max_acceleration
    }

    /// Per-DOF weights of [`RobotModel::state_distance`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ee_link(&self) -> usize {
        self.config.ee_link
    }

    pub fn collision_spheres(&self) -> &[CollisionSphere] {
        &self.config.collision_spheres
    }

    pub fn footprint_spheres(&self) -> &[FootprintSphere] {
        &self.config.base_footprint_spheres
    }

    pub fn base_heuristic(&self) -> Option<&BaseHeuristic> {
        self.config.base_heuristic.as_ref()
    }

    /// Conservative radius around the base origin containing the whole robot.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// Sphere index pairs (into the `world_spheres_into` order) checked for
    /// self-collision: links at least two joints apart.
    pub fn self_collision_pairs(&self) -> &[(usize, usize)] {
        &self.self_pairs
    }

    /// Places footprint spheres (link 0) followed by link collision spheres.
    pub fn world_spheres_into(&self, links: &[Pose], out: &mut Vec<WorldSphere>) {
        out.clear();
        for s in &self.config.base_footprint_spheres {
            out.push(WorldSphere {
                center: links[0] * Point3::from(s.center),
                radius: s.radius,
                link: 0,
            });
        }
        for s in &self.config.collision_spheres {
            out.push(WorldSphere {
                center: links[s.link] * Point3::from(s.center),
                radius: s.radius,
                link: s.link,
            });
        }
    }

    pub fn joint_axis(&self, joint: usize) -> &Unit<Vector3<f64>> {
        &self.axes[joint]
    }

    pub fn joint_kind(&self, joint: usize) -> JointKind {
        self.config.joints[joint].kind
    }

    pub fn check_dimension(&self, len: usize) -> Result<()> {
        if len != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn check_state(&self, state: &RobotState) -> Result<()> {
        self.check_dimension(state.positions.len())?;
        self.check_dimension(state.velocities.len())
    }

    /// Link frames in world coordinates: index 0 is the base, index `i` the
    /// frame after joint `i`. `out` is cleared first.
    pub fn link_poses_into(&self, positions: &[f64], out: &mut Vec<Pose>) {
        out.clear();
        let base = Isometry3::from_parts(
            Translation3::new(positions[BASE_X], positions[BASE_Y], 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), positions[BASE_YAW]),
        );
        out.push(base);
        let mut frame = base;
        for (i, joint) in self.config.joints.iter().enumerate() {
            let q = positions[BASE_DOFS + i];
            let motion = match joint.kind {
                JointKind::Revolute => Isometry3::from_parts(
                    Translation3::identity(),
                    UnitQuaternion::from_axis_angle(&self.axes[i], q),
                ),
                JointKind::Prismatic => Isometry3::from_parts(
                    Translation3::from(self.axes[i].into_inner() * q),
                    UnitQuaternion::identity(),
                ),
            };
            frame = frame * self.origins[i] * motion;
            out.push(frame);
        }
    }

    /// World pose of every link frame.
    pub fn forward_kinematics(&self, state: &RobotState) -> Result<Vec<Pose>> {
        self.check_dimension(state.positions.len())?;
        let mut out = Vec::with_capacity(self.dof() - BASE_DOFS + 1);
        self.link_poses_into(&state.positions, &mut out);
        Ok(out)
    }

    /// End-effector pose given already computed link frames.
    pub fn ee_from_links(&self, links: &[Pose]) -> Pose {
        links[self.config.ee_link] * self.ee_offset
    }

    pub fn ee_pose(&self, positions: &[f64]) -> Pose {
        let mut links = Vec::with_capacity(self.dof() - BASE_DOFS + 1);
        self.link_poses_into(positions, &mut links);
        self.ee_from_links(&links)
    }

    /// Clamps positions into limits (yaw wrapped) and velocities into
    /// `[-v_max, v_max]`.
    pub fn clamp(&self, state: &mut RobotState) {
        self.clamp_positions(&mut state.positions);
        for (v, vmax) in state.velocities.iter_mut().zip(&self.max_velocity) {
            *v = v.clamp(-vmax, *vmax);
        }
    }

    pub fn clamp_positions(&self, positions: &mut [f64]) {
        for (i, p) in positions.iter_mut().enumerate() {
            if i == BASE_YAW {
                *p = wrap_angle(*p);
            } else {
                *p = p.clamp(self.lower[i], self.upper[i]);
            }
        }
    }

    pub fn within_limits(&self, positions: &[f64]) -> bool {
        positions.iter().enumerate().all(|(i, &p)| {
            i == BASE_YAW || (p >= self.lower[i] - 1e-12 && p <= self.upper[i] + 1e-12)
        })
    }

    /// Per-DOF linear interpolation; yaw follows the shorter arc. The result
    /// is at rest.
    pub fn interpolate(&self, a: &RobotState, b: &RobotState, s: f64) -> RobotState {
        let mut positions = vec![0.0; a.positions.len()];
        interpolate_positions(&a.positions, &b.positions, s, &mut positions);
        RobotState::at_rest(positions)
    }

    /// Weighted Euclidean distance with weights `1 / v_max`; approximates
    /// the minimum traversal time between the two configurations.
    pub fn state_distance(&self, a: &RobotState, b: &RobotState) -> f64 {
        self.position_distance(&a.positions, &b.positions)
    }

    pub fn position_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| {
                let d = if i == BASE_YAW { angle_diff(*x, *y) } else { y - x };
                let w = self.weights[i] * d;
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Writes the interpolation of `a` and `b` at `s` into `out`.
pub fn interpolate_positions(a: &[f64], b: &[f64], s: f64, out: &mut [f64]) {
    for i in 0..a.len() {
        out[i] = if i == BASE_YAW {
            wrap_angle(a[i] + s * angle_diff(a[i], b[i]))
        } else {
            (1.0 - s) * a[i] + s * b[i]
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_link_config() -> RobotModelConfig {
        RobotModelConfig {
            name: "test".into(),
            base: BaseSpec {
                x_limits: [-5.0, 5.0],
                y_limits: [-5.0, 5.0],
                max_velocity: [0.5, 0.25, 1.0],
                max_acceleration: [1.0, 1.0, 1.0],
            },
            joints: vec![
                JointSpec {
                    name: "lift".into(),
                    kind: JointKind::Prismatic,
                    axis: [0.0, 0.0, 1.0],
                    origin: Origin { xyz: [0.1, 0.0, 0.3], rpy: [0.0; 3] },
                    lower: 0.0,
                    upper: 0.5,
                    max_velocity: 0.2,
                    max_acceleration: 0.5,
                },
                JointSpec {
                    name: "shoulder".into(),
                    kind: JointKind::Revolute,
                    axis: [0.0, 0.0, 1.0],
                    origin: Origin { xyz: [0.0, 0.0, 0.1], rpy: [0.0; 3] },
                    lower: -2.0,
                    upper: 2.0,
                    max_velocity: 1.0,
                    max_acceleration: 2.0,
                },
            ],
            ee_link: 2,
            ee_offset: Origin { xyz: [0.4, 0.0, 0.0], rpy: [0.0; 3] },
            collision_spheres: vec![CollisionSphere { link: 2, center: [0.2, 0.0, 0.0], radius: 0.05 }],
            base_footprint_spheres: vec![FootprintSphere { center: [0.0, 0.0, 0.1], radius: 0.2 }],
            base_heuristic: None,
        }
    }

    #[test]
    fn bundled_models_have_expected_dof() {
        assert_eq!(RobotModel::bundled("hsr-like").unwrap().dof(), 8);
        assert_eq!(RobotModel::bundled("panda-like").unwrap().dof(), 10);
        assert!(matches!(RobotModel::bundled("nope"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn equal_limits_name_the_joint() {
        let mut cfg = two_link_config();
        cfg.joints[1].lower = 0.3;
        cfg.joints[1].upper = 0.3;
        let err = RobotModel::from_config(cfg).unwrap_err().to_string();
        assert!(err.contains("shoulder"), "{err}");
    }

    #[test]
    fn invalid_sphere_link_rejected() {
        let mut cfg = two_link_config();
        cfg.collision_spheres[0].link = 7;
        assert!(RobotModel::from_config(cfg).is_err());
    }

    #[test]
    fn parse_error_reports_position() {
        let err = RobotModel::load("{\n  \"name\": \"x\",\n  \"base\": 3\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_state_accumulates_origins() {
        let model = RobotModel::from_config(two_link_config()).unwrap();
        let ee = model.ee_pose(&[0.0; 5]);
        assert_relative_eq!(ee.translation.vector, Vector3::new(0.5, 0.0, 0.4), epsilon = 1e-12);
    }

    #[test]
    fn base_pose_rotates_and_offsets_chain() {
        let model = RobotModel::from_config(two_link_config()).unwrap();
        let ee = model.ee_pose(&[1.0, 2.0, PI / 2.0, 0.0, 0.0]);
        // Hand-multiplied: Rz(90°) maps (0.5, 0, 0.4) to (0, 0.5, 0.4).
        assert_relative_eq!(ee.translation.vector, Vector3::new(1.0, 2.5, 0.4), epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = RobotModel::from_config(two_link_config()).unwrap();
        let bad = RobotState::at_rest(vec![0.0; 3]);
        assert!(matches!(model.forward_kinematics(&bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn interpolation_endpoints_and_yaw_arc() {
        let model = RobotModel::from_config(two_link_config()).unwrap();
        let a = RobotState::at_rest(vec![0.0, 1.0, 3.0, 0.1, -1.0]);
        let b = RobotState::at_rest(vec![2.0, -1.0, -3.0, 0.3, 1.0]);
        assert_eq!(model.interpolate(&a, &b, 0.0).positions, a.positions);
        let end = model.interpolate(&a, &b, 1.0);
        for (x, y) in end.positions.iter().zip(&b.positions) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        let mid = model.interpolate(&a, &b, 0.5);
        assert_relative_eq!(mid.positions[BASE_YAW].abs(), PI, epsilon = 1e-12);
        assert_relative_eq!(mid.positions[0], 1.0);
        assert_relative_eq!(mid.positions[3], 0.2);
        assert!(mid.velocities.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn distance_single_dof() {
        let model = RobotModel::from_config(two_link_config()).unwrap();
        let a = RobotState::at_rest(vec![0.0; 5]);
        let mut b = a.clone();
        assert_eq!(model.state_distance(&a, &b), 0.0);
        b.positions[1] = 0.3;
        // weight on y is 1 / 0.25
        assert_relative_eq!(model.state_distance(&a, &b), 1.2, epsilon = 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(angle_diff(3.0, -3.0), 2.0 * PI - 6.0, epsilon = 1e-12);
    }
}
