//! Goal constraints (end-effector task space regions and joint intervals) and
//! soft constraints that score whole trajectories.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{min_clearance, Environment};
use crate::error::{Error, Result};
use crate::model::{angle_diff, Pose, RobotModel, BASE_X, BASE_Y};
use crate::timing::Trajectory;

/// Translation slack [m] when checking an end-effector region numerically.
pub const SATISFY_TOL_POS: f64 = 1e-4;
/// Rotation slack [rad] when checking an end-effector region numerically.
pub const SATISFY_TOL_ROT: f64 = 1e-3;
/// |pitch| beyond which roll/yaw extraction is treated as singular.
const PITCH_SINGULAR: f64 = FRAC_PI_2 - 0.01;

/// JSON form of a pose: translation plus either a `[w, x, y, z]` quaternion
/// or roll/pitch/yaw angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpy: Option<[f64; 3]>,
}

impl PoseSpec {
    pub fn from_pose(pose: &Pose) -> Self {
        let q = pose.rotation.quaternion();
        let t = pose.translation.vector;
        PoseSpec {
            translation: [t.x, t.y, t.z],
            rotation: Some([q.w, q.i, q.j, q.k]),
            rpy: None,
        }
    }

    pub fn to_pose(&self) -> Result<Pose> {
        let rotation = match (self.rotation, self.rpy) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("pose has both `rotation` and `rpy`".into()));
            }
            (Some([w, x, y, z]), None) => {
                let q = Quaternion::new(w, x, y, z);
                let n = q.norm();
                if !(n > 1e-6) || (n - 1.0).abs() > 1e-3 {
                    return Err(Error::Config(format!("pose quaternion has norm {n}, expected 1")));
                }
                UnitQuaternion::from_quaternion(q)
            }
            (None, Some([r, p, y])) => UnitQuaternion::from_euler_angles(r, p, y),
            (None, None) => UnitQuaternion::identity(),
        };
        let [x, y, z] = self.translation;
        Ok(Isometry3::from_parts(Translation3::new(x, y, z), rotation))
    }
}

/// Allowed displacement box: local x, y, z [m] and roll, pitch, yaw [rad].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TsrBounds {
    #[serde(default)]
    pub x: [f64; 2],
    #[serde(default)]
    pub y: [f64; 2],
    #[serde(default)]
    pub z: [f64; 2],
    #[serde(default)]
    pub roll: [f64; 2],
    #[serde(default)]
    pub pitch: [f64; 2],
    #[serde(default)]
    pub yaw: [f64; 2],
}

impl TsrBounds {
    pub fn as_array(&self) -> [[f64; 2]; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    fn rotation_symmetric(&self) -> bool {
        [self.roll, self.pitch, self.yaw].iter().all(|b| (b[0] + b[1]).abs() < 1e-12)
    }
}

/// End-effector task space region.
#[derive(Debug, Clone, PartialEq)]
pub struct EePoseConstraint {
    pub reference: Pose,
    pub bounds: TsrBounds,
}

/// Displacement of `pose` in the frame of `reference`: translation and
/// intrinsic roll/pitch/yaw of the relative rotation.
pub fn displacement(reference: &Pose, pose: &Pose) -> ([f64; 3], [f64; 3], UnitQuaternion<f64>) {
    let rel = reference.inverse() * pose;
    let t = rel.translation.vector;
    let (r, p, y) = rel.rotation.euler_angles();
    ([t.x, t.y, t.z], [r, p, y], rel.rotation)
}

impl EePoseConstraint {
    pub fn new(reference: Pose, bounds: TsrBounds) -> Result<Self> {
        for (i, b) in bounds.as_array().iter().enumerate() {
            if !(b[0] <= b[1]) {
                return Err(Error::Config(format!("ee bound {} has lower > upper", AXES[i])));
            }
        }
        Ok(EePoseConstraint { reference, bounds })
    }

    /// Exact pose goal.
    pub fn exact(reference: Pose) -> Self {
        EePoseConstraint { reference, bounds: TsrBounds::default() }
    }

    /// Region membership of a world pose with the given slack.
    pub fn contains_pose(&self, pose: &Pose, tol_pos: f64, tol_rot: f64) -> bool {
        let (t, rpy, rel) = displacement(&self.reference, pose);
        let b = self.bounds.as_array();
        for k in 0..3 {
            if t[k] < b[k][0] - tol_pos || t[k] > b[k][1] + tol_pos {
                return false;
            }
        }
        if rpy[1].abs() > PITCH_SINGULAR {
            if !self.bounds.rotation_symmetric() {
                return false;
            }
            let limit = self.bounds.roll[1].min(self.bounds.pitch[1]).min(self.bounds.yaw[1]);
            return rel.angle() <= limit + tol_rot;
        }
        for k in 0..3 {
            let lo = b[3 + k][0];
            let hi = b[3 + k][1];
            // Angles are compared on the circle around the interval center.
            let center = 0.5 * (lo + hi);
            let off = angle_diff(center, rpy[k]);
            if off.abs() > 0.5 * (hi - lo) + tol_rot {
                return false;
            }
        }
        true
    }

    /// Translation distance to the region and geodesic rotation distance to
    /// the nearest rotation inside its roll/pitch/yaw box.
    pub fn pose_error(&self, pose: &Pose) -> (f64, f64) {
        let (t, rpy, rel) = displacement(&self.reference, pose);
        let b = self.bounds.as_array();
        let mut d2 = 0.0;
        for k in 0..3 {
            let c = t[k].clamp(b[k][0], b[k][1]);
            d2 += (t[k] - c) * (t[k] - c);
        }
        let mut clamped = [0.0; 3];
        for k in 0..3 {
            let lo = b[3 + k][0];
            let hi = b[3 + k][1];
            let center = 0.5 * (lo + hi);
            let off = angle_diff(center, rpy[k]).clamp(-0.5 * (hi - lo), 0.5 * (hi - lo));
            clamped[k] = center + off;
        }
        let nearest = UnitQuaternion::from_euler_angles(clamped[0], clamped[1], clamped[2]);
        (d2.sqrt(), rel.angle_to(&nearest))
    }

    /// Uniform sample of the displacement box mapped through the reference.
    pub fn sample_pose<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose {
        let b = self.bounds.as_array();
        let mut v = [0.0; 6];
        for k in 0..6 {
            v[k] = if b[k][1] > b[k][0] { rng.random_range(b[k][0]..=b[k][1]) } else { b[k][0] };
        }
        let local = Isometry3::from_parts(
            Translation3::new(v[0], v[1], v[2]),
            UnitQuaternion::from_euler_angles(v[3], v[4], v[5]),
        );
        self.reference * local
    }

    pub fn target_position(&self) -> Vector3<f64> {
        self.reference.translation.vector
    }
}

const AXES: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

/// Intervals over named DOFs. DOFs not listed are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConstraint {
    pub intervals: BTreeMap<String, [f64; 2]>,
}

impl JointConstraint {
    /// Resolves DOF names against `model` and intersects with its limits.
    pub fn resolve(&self, model: &RobotModel) -> Result<Vec<(usize, f64, f64)>> {
        let mut out = Vec::with_capacity(self.intervals.len());
        for (name, [lo, hi]) in &self.intervals {
            let i = model
                .dof_index(name)
                .ok_or_else(|| Error::Config(format!("joint goal names unknown DOF `{name}`")))?;
            let lo = lo.max(model.lower()[i]);
            let hi = hi.min(model.upper()[i]);
            if !(lo <= hi) {
                return Err(Error::Config(format!("joint goal interval for `{name}` is empty within limits")));
            }
            out.push((i, lo, hi));
        }
        Ok(out)
    }
}

/// One goal constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalConstraint {
    Ee(EePoseConstraint),
    Joint(JointConstraint),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GoalConstraintSpec {
    Ee {
        reference: PoseSpec,
        #[serde(default)]
        bounds: TsrBounds,
    },
    Joint {
        intervals: BTreeMap<String, [f64; 2]>,
    },
}

impl GoalConstraint {
    pub fn from_spec(spec: &GoalConstraintSpec) -> Result<Self> {
        Ok(match spec {
            GoalConstraintSpec::Ee { reference, bounds } => {
                GoalConstraint::Ee(EePoseConstraint::new(reference.to_pose()?, *bounds)?)
            }
            GoalConstraintSpec::Joint { intervals } => {
                for (name, [lo, hi]) in intervals {
                    if !(lo <= hi) {
                        return Err(Error::Config(format!("joint goal `{name}` has lower > upper")));
                    }
                }
                GoalConstraint::Joint(JointConstraint { intervals: intervals.clone() })
            }
        })
    }

    pub fn to_spec(&self) -> GoalConstraintSpec {
        match self {
            GoalConstraint::Ee(c) => GoalConstraintSpec::Ee {
                reference: PoseSpec::from_pose(&c.reference),
                bounds: c.bounds,
            },
            GoalConstraint::Joint(c) => GoalConstraintSpec::Joint { intervals: c.intervals.clone() },
        }
    }

    /// Endpoint check with the default numerical slack.
    pub fn satisfies(&self, model: &RobotModel, positions: &[f64]) -> bool {
        self.satisfies_with(model, positions, SATISFY_TOL_POS, SATISFY_TOL_ROT)
    }

    pub fn satisfies_with(&self, model: &RobotModel, positions: &[f64], tol_pos: f64, tol_rot: f64) -> bool {
        match self {
            GoalConstraint::Ee(c) => c.contains_pose(&model.ee_pose(positions), tol_pos, tol_rot),
            GoalConstraint::Joint(c) => c.intervals.iter().all(|(name, [lo, hi])| match model.dof_index(name) {
                Some(i) => {
                    let v = positions[i];
                    v >= lo - tol_pos && v <= hi + tol_pos
                }
                None => false,
            }),
        }
    }
}

/// Default goal tolerances of the execution protocol.
pub const GOAL_POS_TOL: f64 = 0.01;
pub const GOAL_ROT_TOL_DEG: f64 = 15.0;

/// True iff `positions` meets some goal within the execution tolerances:
/// end-effector goals by translation distance to the region and geodesic
/// rotation distance, joint goals by interval containment with `pos_tol`
/// slack. Bounds are strict, as in "error below 0.01 m".
pub fn goal_reached(model: &RobotModel, positions: &[f64], goals: &[GoalConstraint], pos_tol: f64, rot_tol: f64) -> bool {
    let ee = model.ee_pose(positions);
    goals.iter().any(|g| match g {
        GoalConstraint::Ee(c) => {
            let (dp, dr) = c.pose_error(&ee);
            dp < pos_tol && dr < rot_tol
        }
        GoalConstraint::Joint(_) => g.satisfies_with(model, positions, pos_tol, pos_tol),
    })
}

/// The end-effector members of a goal set, order preserved.
pub fn extract_ee_constraints(goals: &[GoalConstraint]) -> Vec<&EePoseConstraint> {
    goals
        .iter()
        .filter_map(|g| match g {
            GoalConstraint::Ee(c) => Some(c),
            GoalConstraint::Joint(_) => None,
        })
        .collect()
}

/// Soft trajectory scoring terms. Higher is better for every kind.
#[derive(Debug, Clone, PartialEq)]
pub enum SoftKind {
    /// Minus the base path length [m].
    BaseDisplacement,
    /// Smallest obstacle clearance along the trajectory, clamped to `[0, cap]`.
    Clearance { cap: f64 },
    /// Minus the mean squared deviation of chosen DOFs from preferred values.
    JointPreference { preferred: BTreeMap<String, f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftConstraint {
    pub kind: SoftKind,
    pub weight: f64,
}

/// JSON form of a soft constraint; `kind` selects which extra fields apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftConstraintSpec {
    pub kind: String,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred: Option<BTreeMap<String, f64>>,
}

fn one() -> f64 {
    1.0
}

/// Default clearance cap [m].
pub const DEFAULT_CLEARANCE_CAP: f64 = 0.5;

impl SoftConstraint {
    pub fn from_spec(spec: &SoftConstraintSpec) -> Result<Self> {
        let kind = match spec.kind.as_str() {
            "base_displacement" => SoftKind::BaseDisplacement,
            "clearance" => {
                let cap = spec.cap.unwrap_or(DEFAULT_CLEARANCE_CAP);
                if !(cap >= 0.0) {
                    return Err(Error::Config("clearance cap must be nonnegative".into()));
                }
                SoftKind::Clearance { cap }
            }
            "joint_preference" => SoftKind::JointPreference {
                preferred: spec
                    .preferred
                    .clone()
                    .ok_or_else(|| Error::Config("joint_preference needs `preferred`".into()))?,
            },
            other => return Err(Error::Config(format!("unknown soft constraint kind `{other}`"))),
        };
        if !spec.weight.is_finite() {
            return Err(Error::Config("soft constraint weight must be finite".into()));
        }
        Ok(SoftConstraint { kind, weight: spec.weight })
    }

    pub fn to_spec(&self) -> SoftConstraintSpec {
        let (kind, cap, preferred) = match &self.kind {
            SoftKind::BaseDisplacement => ("base_displacement", None, None),
            SoftKind::Clearance { cap } => ("clearance", Some(*cap), None),
            SoftKind::JointPreference { preferred } => ("joint_preference", None, Some(preferred.clone())),
        };
        SoftConstraintSpec { kind: kind.into(), weight: self.weight, cap, preferred }
    }
}

/// Weighted soft score of a trajectory. The environment is only consulted
/// by the clearance kind.
pub fn evaluate_soft(c: &SoftConstraint, model: &RobotModel, traj: &Trajectory, env: &Environment) -> f64 {
    let samples = traj.samples();
    let raw = match &c.kind {
        SoftKind::BaseDisplacement => -samples
            .windows(2)
            .map(|w| {
                let a = &w[0].positions;
                let b = &w[1].positions;
                (b[BASE_X] - a[BASE_X]).hypot(b[BASE_Y] - a[BASE_Y])
            })
            .sum::<f64>(),
        SoftKind::Clearance { cap } => {
            let mut best = f64::INFINITY;
            for s in samples {
                let view = env.sample_env(model, &s.positions, s.t);
                best = best.min(min_clearance(model, &s.positions, &view));
            }
            best.clamp(0.0, *cap)
        }
        SoftKind::JointPreference { preferred } => {
            let Some(last) = samples.last() else { return 0.0 };
            let mut sum = 0.0;
            let mut n = 0usize;
            for (name, target) in preferred {
                if let Some(i) = model.dof_index(name) {
                    let d = last.positions[i] - target;
                    sum += d * d;
                    n += 1;
                }
            }
            if n == 0 { 0.0 } else { -(sum / n as f64) }
        }
    };
    c.weight * raw
}
