//! Obstacles (points and axis-aligned boxes), grasped-object spheres, and the
//! collision primitives used by trajectory validation.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meter::{Meter, Work};
use crate::model::{RobotModel, WorldSphere, BASE_X, BASE_Y};

/// Default collision margin [m].
pub const DEFAULT_MARGIN: f64 = 0.02;
/// Grid cell edge of the point index [m].
pub const GRID_CELL: f64 = 0.2;
/// Extra radius added to views beyond the environment margin, so that checks
/// with any margin up to `margin + VIEW_SLACK` see every relevant obstacle.
pub const VIEW_SLACK: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    /// Euclidean distance from `p` to the box; zero inside.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = p[k];
            let excess = if v < self.min[k] {
                self.min[k] - v
            } else if v > self.max[k] {
                v - self.max[k]
            } else {
                0.0
            };
            d2 += excess * excess;
        }
        d2.sqrt()
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn contains_xy(&self, x: f64, y: f64, inflate: f64) -> bool {
        x >= self.min[0] - inflate
            && x <= self.max[0] + inflate
            && y >= self.min[1] - inflate
            && y <= self.max[1] + inflate
    }
}

/// Sphere attached to a robot link, e.g. a grasped object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSphere {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachedObject {
    pub link: usize,
    pub spheres: Vec<LocalSphere>,
}

/// Serialized form of an [`Environment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    #[serde(default)]
    pub boxes: Vec<Aabb>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub attached_objects: Vec<AttachedObject>,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec {
            points: Vec::new(),
            boxes: Vec::new(),
            margin: DEFAULT_MARGIN,
            attached_objects: Vec::new(),
        }
    }
}

/// Uniform hash grid over obstacle points.
#[derive(Debug, Clone, Default)]
struct PointGrid {
    cells: HashMap<(i32, i32, i32), Vec<u32>>,
}

fn cell_of(p: &Point3<f64>) -> (i32, i32, i32) {
    (
        (p.x / GRID_CELL).floor() as i32,
        (p.y / GRID_CELL).floor() as i32,
        (p.z / GRID_CELL).floor() as i32,
    )
}

impl PointGrid {
    fn build(points: &[Point3<f64>]) -> Self {
        let mut cells: HashMap<_, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p)).or_default().push(i as u32);
        }
        PointGrid { cells }
    }

    /// Indices (ascending) of points within `radius` of `center`.
    fn query(&self, points: &[Point3<f64>], center: &Point3<f64>, radius: f64) -> Vec<u32> {
        let lo = cell_of(&(center - Vector3::repeat(radius)));
        let hi = cell_of(&(center + Vector3::repeat(radius)));
        let r2 = radius * radius;
        let mut out = Vec::new();
        let span = (hi.0 - lo.0 + 1) as i64 * (hi.1 - lo.1 + 1) as i64 * (hi.2 - lo.2 + 1) as i64;
        if span as usize > self.cells.len() {
            for (key, idx) in &self.cells {
                if key.0 >= lo.0 && key.0 <= hi.0 && key.1 >= lo.1 && key.1 <= hi.1 && key.2 >= lo.2 && key.2 <= hi.2 {
                    out.extend(idx.iter().copied().filter(|&i| (points[i as usize] - center).norm_squared() <= r2));
                }
            }
        } else {
            for x in lo.0..=hi.0 {
                for y in lo.1..=hi.1 {
                    for z in lo.2..=hi.2 {
                        if let Some(idx) = self.cells.get(&(x, y, z)) {
                            out.extend(idx.iter().copied().filter(|&i| (points[i as usize] - center).norm_squared() <= r2));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Static obstacle set shared by every planning stage.
#[derive(Debug, Clone)]
pub struct Environment {
    points: Vec<Point3<f64>>,
    boxes: Vec<Aabb>,
    attached: Vec<AttachedObject>,
    margin: f64,
    grid: PointGrid,
}

/// Obstacles relevant to one robot state; a conservative superset of those
/// the robot can touch.
#[derive(Debug, Clone, Default)]
pub struct ObstacleView {
    pub points: Vec<Point3<f64>>,
    pub boxes: Vec<Aabb>,
    pub attached: Vec<AttachedObject>,
}

impl ObstacleView {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.boxes.is_empty()
    }
}

impl Environment {
    pub fn empty() -> Self {
        Self::new(EnvironmentSpec::default()).expect("empty environment is valid")
    }

    pub fn new(spec: EnvironmentSpec) -> Result<Self> {
        for (i, b) in spec.boxes.iter().enumerate() {
            if (0..3).any(|k| !(b.min[k] < b.max[k])) {
                return Err(Error::Config(format!("box {i}: min must be below max on every axis")));
            }
        }
        if !(spec.margin >= 0.0) {
            return Err(Error::Config("margin must be nonnegative".into()));
        }
        let points: Vec<Point3<f64>> = spec.points.iter().map(|p| Point3::from(*p)).collect();
        let grid = PointGrid::build(&points);
        Ok(Environment {
            points,
            boxes: spec.boxes,
            attached: spec.attached_objects,
            margin: spec.margin,
            grid,
        })
    }

    pub fn to_spec(&self) -> EnvironmentSpec {
        EnvironmentSpec {
            points: self.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            boxes: self.boxes.clone(),
            margin: self.margin,
            attached_objects: self.attached.clone(),
        }
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn boxes(&self) -> &[Aabb] {
        &self.boxes
    }

    pub fn attached_objects(&self) -> &[AttachedObject] {
        &self.attached
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Copy of this environment with extra obstacles; used between loops.
    pub fn with_added(&self, points: &[[f64; 3]], boxes: &[Aabb]) -> Result<Self> {
        let mut spec = self.to_spec();
        spec.points.extend_from_slice(points);
        spec.boxes.extend_from_slice(boxes);
        Self::new(spec)
    }

    /// Point indices within `radius` of `center`, via the grid index.
    pub fn points_within(&self, center: &Point3<f64>, radius: f64) -> Vec<u32> {
        self.grid.query(&self.points, center, radius)
    }

    /// Every obstacle, unfiltered.
    pub fn full_view(&self) -> ObstacleView {
        ObstacleView {
            points: self.points.clone(),
            boxes: self.boxes.clone(),
            attached: self.attached.clone(),
        }
    }

    /// Radius around the base origin inside which obstacles can matter.
    pub fn view_radius(&self, model: &RobotModel) -> f64 {
        let attached = self
            .attached
            .iter()
            .flat_map(|a| a.spheres.iter())
            .map(|s| Vector3::from(s.center).norm() + s.radius)
            .fold(0.0, f64::max);
        model.reach() + attached + self.margin + VIEW_SLACK
    }

    /// Obstacles within the robot's bounding radius around its base at `q`.
    /// `_t` is accepted for time-varying scenes; obstacles here are static.
    pub fn sample_env(&self, model: &RobotModel, positions: &[f64], _t: f64) -> ObstacleView {
        self.sample_env_padded(model, positions, 0.0)
    }

    /// Like [`Environment::sample_env`] with the radius grown by `extra`, so
    /// that one view serves base displacements up to `extra`.
    pub fn sample_env_padded(&self, model: &RobotModel, positions: &[f64], extra: f64) -> ObstacleView {
        let center = Point3::new(positions[BASE_X], positions[BASE_Y], 0.0);
        let radius = self.view_radius(model) + extra;
        let points = self
            .points_within(&center, radius)
            .into_iter()
            .map(|i| self.points[i as usize])
            .collect();
        let boxes = self
            .boxes
            .iter()
            .filter(|b| b.distance(&center) <= radius)
            .copied()
            .collect();
        ObstacleView {
            points,
            boxes,
            attached: self.attached.clone(),
        }
    }
}

/// Robot spheres (links, base footprint, attached objects) at `positions`.
/// Attached-object spheres come last, after every model sphere.
pub fn robot_spheres(model: &RobotModel, positions: &[f64], attached: &[AttachedObject]) -> Vec<WorldSphere> {
    let mut links = Vec::with_capacity(model.dof());
    model.link_poses_into(positions, &mut links);
    let mut spheres = Vec::with_capacity(16);
    model.world_spheres_into(&links, &mut spheres);
    for obj in attached {
        for s in &obj.spheres {
            spheres.push(WorldSphere {
                center: links[obj.link] * Point3::from(s.center),
                radius: s.radius,
                link: obj.link,
            });
        }
    }
    spheres
}

fn sphere_hits_view(s: &WorldSphere, view: &ObstacleView, margin: f64) -> bool {
    let reach = s.radius + margin;
    let r2 = reach * reach;
    view.points.iter().any(|p| (p - s.center).norm_squared() <= r2)
        || view.boxes.iter().any(|b| b.distance(&s.center) <= reach)
}

/// True on self-collision between spheres of links two or more joints apart.
pub fn self_collision(model: &RobotModel, spheres: &[WorldSphere]) -> bool {
    model.self_collision_pairs().iter().any(|&(i, j)| {
        let (a, b) = (&spheres[i], &spheres[j]);
        (a.center - b.center).norm() < a.radius + b.radius
    })
}

/// True iff some robot sphere lies within `radius + margin` of an obstacle in
/// `view`, or the robot collides with itself.
pub fn is_collision(model: &RobotModel, positions: &[f64], view: &ObstacleView, margin: f64) -> bool {
    let spheres = robot_spheres(model, positions, &view.attached);
    if spheres.iter().any(|s| sphere_hits_view(s, view, margin)) {
        return true;
    }
    self_collision(model, &spheres)
}

/// [`is_collision`] that also charges the modeled clock.
pub fn is_collision_metered(
    model: &RobotModel,
    positions: &[f64],
    view: &ObstacleView,
    margin: f64,
    meter: &Meter,
) -> bool {
    let spheres = model.collision_spheres().len() + model.footprint_spheres().len();
    meter.charge(Work::CollisionState, 1);
    meter.charge(Work::SphereTest, (spheres * (view.points.len() + view.boxes.len())) as u64);
    is_collision(model, positions, view, margin)
}

/// Smallest `distance - radius` between any robot sphere and any obstacle;
/// `+inf` for an empty view.
pub fn min_clearance(model: &RobotModel, positions: &[f64], view: &ObstacleView) -> f64 {
    let spheres = robot_spheres(model, positions, &view.attached);
    let mut best = f64::INFINITY;
    for s in &spheres {
        for p in &view.points {
            best = best.min((p - s.center).norm() - s.radius);
        }
        for b in &view.boxes {
            best = best.min(b.distance(&s.center) - s.radius);
        }
    }
    best
}
