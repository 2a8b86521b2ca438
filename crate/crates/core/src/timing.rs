//! Time-optimal parameterization of waypoint paths.
//!
//! The geometric path is a polyline with circular blends at interior
//! waypoints. Each path element gets a constant bound on path speed and path
//! acceleration derived from the per-DOF limits, which makes the forward and
//! backward integration over the path parameter exact: the optimal profile is
//! a sequence of constant-acceleration phases. Sampling evaluates that profile
//! analytically.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{angle_diff, wrap_angle, RobotModel, RobotState, BASE_YAW};
use crate::trajgen::{CandidateKind, PathCandidate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    /// Sample period [s].
    pub t_s: f64,
    /// Blend tangent length as a fraction of the shorter adjacent segment.
    pub blend_fraction: f64,
    /// Largest off-tangent start velocity, as a fraction of each DOF's
    /// velocity limit, that may be dropped when projecting onto the path.
    pub residual_guard: f64,
    /// The lead-in segment is the stopping distance divided by this factor.
    pub lead_in_factor: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { t_s: 0.02, blend_fraction: 0.1, residual_guard: 0.05, lead_in_factor: 0.85 }
    }
}

/// Why a path could not be timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimingError {
    /// The start velocity cannot be absorbed, even with a lead-in segment.
    InfeasibleStart,
    /// The lead-in segment would leave the joint limits.
    LeadInOutOfLimits,
    /// Waypoints outside the joint limits or of inconsistent dimension.
    InvalidPath,
}

#[derive(Debug, Clone)]
enum Shape {
    Line { start: Vec<f64>, dir: Vec<f64> },
    /// `q(s) = c + r (-n cos(s/r) + a sin(s/r))`.
    Arc { center: Vec<f64>, n: Vec<f64>, a: Vec<f64>, r: f64 },
}

#[derive(Debug, Clone)]
struct Element {
    shape: Shape,
    s0: f64,
    len: f64,
    vmax: f64,
    amax: f64,
}

impl Element {
    fn eval(&self, s: f64, pos: &mut [f64], tangent: &mut [f64]) {
        let u = (s - self.s0).clamp(0.0, self.len);
        match &self.shape {
            Shape::Line { start, dir } => {
                for i in 0..pos.len() {
                    pos[i] = start[i] + u * dir[i];
                    tangent[i] = dir[i];
                }
            }
            Shape::Arc { center, n, a, r } => {
                let (sn, cs) = (u / r).sin_cos();
                for i in 0..pos.len() {
                    pos[i] = center[i] + r * (-n[i] * cs + a[i] * sn);
                    tangent[i] = n[i] * sn + a[i] * cs;
                }
            }
        }
    }
}

/// Constant-acceleration piece of the path-speed profile.
#[derive(Debug, Clone, Copy)]
struct Phase {
    t0: f64,
    s0: f64,
    v0: f64,
    a: f64,
    dur: f64,
}

/// Exact path-speed profile over a blended path.
#[derive(Debug, Clone)]
pub struct Profile {
    elements: Vec<Element>,
    phases: Vec<Phase>,
    duration: f64,
    length: f64,
    /// Path parameter of each original waypoint (blend midpoints at corners).
    waypoint_s: Vec<f64>,
    waypoints: Vec<Vec<f64>>,
    dof: usize,
}

impl Profile {
    fn path_state(&self, t: f64) -> (f64, f64) {
        if self.phases.is_empty() {
            return (0.0, 0.0);
        }
        let t = t.clamp(0.0, self.duration);
        let k = self.phases.partition_point(|p| p.t0 <= t).saturating_sub(1);
        let p = &self.phases[k];
        let tau = (t - p.t0).clamp(0.0, p.dur);
        let s = (p.s0 + p.v0 * tau + 0.5 * p.a * tau * tau).min(self.length);
        let v = (p.v0 + p.a * tau).max(0.0);
        (s, v)
    }

    fn state(&self, t: f64) -> (Vec<f64>, Vec<f64>, f64) {
        if t >= self.duration {
            let end = self.waypoints.last().unwrap().clone();
            return (end, vec![0.0; self.dof], self.length);
        }
        let (s, v) = self.path_state(t);
        let mut pos = self.waypoints[0].clone();
        let mut tan = vec![0.0; self.dof];
        if !self.elements.is_empty() {
            let k = self.elements.partition_point(|e| e.s0 <= s).saturating_sub(1);
            self.elements[k].eval(s, &mut pos, &mut tan);
        }
        let vel = tan.iter().map(|d| d * v).collect();
        pos[BASE_YAW] = wrap_angle(pos[BASE_YAW]);
        (pos, vel, s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

/// Time-sampled trajectory `{(q_i, t_i)}` starting at `t = 0`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    samples: Vec<Sample>,
    duration: f64,
    source: PathCandidate,
    t_s: f64,
    profile: Option<Arc<Profile>>,
    /// Start of this trajectory on the profile's clock.
    offset: f64,
}

/// Serialized trajectory: samples plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub kind: CandidateKind,
    pub waypoints: Vec<Vec<f64>>,
    pub duration: f64,
    pub samples: Vec<Sample>,
}

fn sample_times(duration: f64, t_s: f64) -> Vec<f64> {
    let mut times = Vec::with_capacity((duration / t_s) as usize + 2);
    let mut k = 0usize;
    loop {
        let t = k as f64 * t_s;
        if t >= duration - 1e-9 {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(duration);
    times
}

impl Trajectory {
    /// Builds a trajectory from explicit samples; evaluation between samples
    /// is linear. Sample times must start at 0 and increase.
    pub fn from_samples(samples: Vec<Sample>, source: PathCandidate, t_s: f64) -> Self {
        assert!(!samples.is_empty(), "trajectory needs at least one sample");
        let duration = samples.last().unwrap().t;
        Trajectory { samples, duration, source, t_s, profile: None, offset: 0.0 }
    }

    /// A single resting sample at `positions`.
    pub fn stationary(positions: Vec<f64>, kind: CandidateKind) -> Self {
        let n = positions.len();
        let source = PathCandidate { waypoints: vec![positions.clone(), positions.clone()], kind };
        Trajectory::from_samples(
            vec![Sample { t: 0.0, positions, velocities: vec![0.0; n] }],
            source,
            TimingConfig::default().t_s,
        )
    }

    fn from_profile(profile: Arc<Profile>, offset: f64, source: PathCandidate, t_s: f64) -> Self {
        let duration = (profile.duration - offset).max(0.0);
        let samples = sample_times(duration, t_s)
            .into_iter()
            .map(|t| {
                let (positions, velocities, _) = profile.state(offset + t);
                Sample { t, positions, velocities }
            })
            .collect();
        Trajectory { samples, duration, source, t_s, profile: Some(profile), offset }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn source(&self) -> &PathCandidate {
        &self.source
    }

    pub fn kind(&self) -> CandidateKind {
        self.source.kind
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().unwrap()
    }

    /// Number of path elements handled by the parameterization.
    pub fn element_count(&self) -> usize {
        self.profile.as_ref().map_or(0, |p| p.elements.len())
    }

    /// State at time `t`; past the end, the final state at rest.
    pub fn state_at(&self, t: f64) -> RobotState {
        let t = t.max(0.0);
        if t >= self.duration {
            let last = self.last();
            return RobotState { positions: last.positions.clone(), velocities: vec![0.0; last.positions.len()] };
        }
        if let Some(p) = &self.profile {
            let (positions, velocities, _) = p.state(self.offset + t);
            return RobotState { positions, velocities };
        }
        let k = self.samples.partition_point(|s| s.t <= t).saturating_sub(1);
        let a = &self.samples[k];
        let b = &self.samples[(k + 1).min(self.samples.len() - 1)];
        let f = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
        let mut positions = vec![0.0; a.positions.len()];
        crate::model::interpolate_positions(&a.positions, &b.positions, f, &mut positions);
        let velocities = a.velocities.iter().zip(&b.velocities).map(|(x, y)| x + f * (y - x)).collect();
        RobotState { positions, velocities }
    }

    /// The remainder of this trajectory after `t`, re-timed to start at 0.
    /// Its source path is the state at `t` followed by the waypoints not yet
    /// passed.
    pub fn tail(&self, t: f64) -> Trajectory {
        let t = t.clamp(0.0, self.duration);
        let start = self.state_at(t).positions;
        match &self.profile {
            Some(p) => {
                let (_, _, s_now) = p.state(self.offset + t);
                let mut waypoints = vec![start];
                for (w, &s) in p.waypoints.iter().zip(&p.waypoint_s).skip(1) {
                    if s > s_now + 1e-9 {
                        waypoints.push(w.clone());
                    }
                }
                if waypoints.len() == 1 {
                    waypoints.push(waypoints[0].clone());
                }
                let source = PathCandidate { waypoints, kind: self.source.kind };
                Trajectory::from_profile(p.clone(), self.offset + t, source, self.t_s)
            }
            None => {
                let mut samples: Vec<Sample> = Vec::new();
                let mut tt = 0.0;
                while t + tt < self.duration - 1e-9 {
                    let st = self.state_at(t + tt);
                    samples.push(Sample { t: tt, positions: st.positions, velocities: st.velocities });
                    tt += self.t_s;
                }
                let end = self.state_at(self.duration);
                samples.push(Sample { t: self.duration - t, positions: end.positions, velocities: end.velocities });
                let end_pos = samples.last().unwrap().positions.clone();
                let source = PathCandidate { waypoints: vec![start, end_pos], kind: self.source.kind };
                Trajectory::from_samples(samples, source, self.t_s)
            }
        }
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            kind: self.source.kind,
            waypoints: self.source.waypoints.clone(),
            duration: self.duration,
            samples: self.samples.clone(),
        }
    }

    pub fn from_record(record: TrajectoryRecord, t_s: f64) -> Self {
        let source = PathCandidate { waypoints: record.waypoints, kind: record.kind };
        Trajectory::from_samples(record.samples, source, t_s)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

/// Path-speed and path-acceleration bounds along a direction whose
/// per-DOF magnitudes are at most `m`.
fn limits_for(model: &RobotModel, m: &[f64], accel_share: f64) -> (f64, f64) {
    let mut v = f64::INFINITY;
    let mut a = f64::INFINITY;
    for i in 0..m.len() {
        if m[i] > 1e-12 {
            v = v.min(model.max_velocity()[i] / m[i]);
            a = a.min(accel_share * model.max_acceleration()[i] / m[i]);
        }
    }
    (v, a)
}

/// Stopping distance along unit direction `u` from speed `speed`.
fn stopping_distance(model: &RobotModel, u: &[f64], speed: f64) -> f64 {
    let m: Vec<f64> = u.iter().map(|x| x.abs()).collect();
    let (_, a) = limits_for(model, &m, 1.0);
    speed * speed / (2.0 * a)
}

struct Built {
    elements: Vec<Element>,
    /// Speed cap at each element boundary (`elements.len() + 1` entries).
    caps: Vec<f64>,
    waypoint_s: Vec<f64>,
    length: f64,
}

/// Builds the blended path through `pts` (yaw already unwrapped).
/// `orig` maps each original waypoint to its index in `pts`.
fn build_path(model: &RobotModel, pts: &[Vec<f64>], orig: &[usize], cfg: &TimingConfig) -> Built {
    let n = pts.len();
    let dof = pts[0].len();
    let seg_len: Vec<f64> = (0..n - 1).map(|i| norm(&sub(&pts[i + 1], &pts[i]))).collect();
    let dirs: Vec<Vec<f64>> = (0..n - 1).map(|i| scaled(&sub(&pts[i + 1], &pts[i]), 1.0 / seg_len[i])).collect();

    // Blend tangent length at each interior point; None marks a stop corner.
    let mut blend: Vec<Option<f64>> = vec![Some(0.0); n];
    for i in 1..n - 1 {
        let c = dot(&dirs[i - 1], &dirs[i]).clamp(-1.0, 1.0);
        let alpha = c.acos();
        blend[i] = if alpha > std::f64::consts::PI - 1e-3 {
            None
        } else if alpha < 1e-6 {
            Some(0.0)
        } else {
            Some(cfg.blend_fraction * seg_len[i - 1].min(seg_len[i]))
        };
    }

    let mut elements = Vec::new();
    let mut caps = vec![f64::INFINITY];
    let mut waypoint_s = vec![0.0; n];
    let mut s = 0.0;
    let mut push = |shape: Shape, len: f64, vmax: f64, amax: f64, cap_after: f64, s: &mut f64| {
        if len <= 1e-12 {
            return;
        }
        elements.push(Element { shape, s0: *s, len, vmax, amax });
        *s += len;
        caps.push(cap_after);
    };
    for i in 0..n - 1 {
        let start_cut = blend[i].unwrap_or(0.0);
        let end_cut = blend[i + 1].unwrap_or(0.0);
        let len = seg_len[i] - start_cut - end_cut;
        let m: Vec<f64> = dirs[i].iter().map(|x| x.abs()).collect();
        let (v, a) = limits_for(model, &m, 1.0);
        let start = pts[i].iter().zip(&dirs[i]).map(|(p, d)| p + start_cut * d).collect();
        let corner_stop = i + 1 < n - 1 && blend[i + 1].is_none();
        push(Shape::Line { start, dir: dirs[i].clone() }, len, v, a, if corner_stop { 0.0 } else { f64::INFINITY }, &mut s);
        if i + 1 < n - 1 {
            if let Some(l) = blend[i + 1].filter(|l| *l > 0.0) {
                let a_dir = &dirs[i];
                let b_dir = &dirs[i + 1];
                let c = dot(a_dir, b_dir).clamp(-1.0, 1.0);
                let alpha = c.acos();
                let r = l / (alpha / 2.0).tan();
                let perp = sub(b_dir, &scaled(a_dir, c));
                let nvec = scaled(&perp, 1.0 / norm(&perp));
                let arc_start: Vec<f64> = pts[i + 1].iter().zip(a_dir).map(|(p, d)| p - l * d).collect();
                let center: Vec<f64> = arc_start.iter().zip(&nvec).map(|(p, q)| p + r * q).collect();
                let m: Vec<f64> = (0..dof).map(|k| nvec[k].hypot(a_dir[k])).collect();
                // Half the acceleration budget goes to each of the tangential
                // and centripetal terms.
                let (v_tan, a_tan) = limits_for(model, &m, 0.5);
                let mut v_cent = f64::INFINITY;
                for k in 0..dof {
                    if m[k] > 1e-12 {
                        v_cent = v_cent.min((0.5 * model.max_acceleration()[k] * r / m[k]).sqrt());
                    }
                }
                let arc_len = r * alpha;
                let s_mid = s + 0.5 * arc_len;
                push(
                    Shape::Arc { center, n: nvec, a: a_dir.clone(), r },
                    arc_len,
                    v_tan.min(v_cent),
                    a_tan,
                    f64::INFINITY,
                    &mut s,
                );
                waypoint_s[i + 1] = s_mid;
                continue;
            }
        }
        waypoint_s[i + 1] = s;
    }
    let last = caps.len() - 1;
    caps[last] = 0.0;
    Built {
        elements,
        caps,
        waypoint_s: orig.iter().map(|&k| waypoint_s[k]).collect(),
        length: s,
    }
}

/// Optimal profile for fixed start speed `v_start`; `None` if `v_start`
/// exceeds what the path can absorb.
fn integrate(built: &Built, v_start: f64) -> Option<Vec<Phase>> {
    let els = &built.elements;
    let m = els.len();
    if m == 0 {
        return if v_start <= 1e-9 { Some(Vec::new()) } else { None };
    }
    // Boundary caps from adjacent element speed limits.
    let mut cap = built.caps.clone();
    for j in 0..=m {
        if j > 0 {
            cap[j] = cap[j].min(els[j - 1].vmax);
        }
        if j < m {
            cap[j] = cap[j].min(els[j].vmax);
        }
    }
    let mut back = vec![0.0; m + 1];
    back[m] = 0.0;
    for e in (0..m).rev() {
        back[e] = cap[e].min((back[e + 1] * back[e + 1] + 2.0 * els[e].amax * els[e].len).sqrt());
    }
    let tol = 1e-9 * (1.0 + back[0]);
    if v_start > back[0] + tol || v_start > els[0].vmax + tol {
        return None;
    }
    let mut v = vec![0.0; m + 1];
    v[0] = v_start.min(back[0]);
    for e in 0..m {
        v[e + 1] = back[e + 1].min((v[e] * v[e] + 2.0 * els[e].amax * els[e].len).sqrt());
    }
    let mut phases = Vec::with_capacity(3 * m);
    let mut t = 0.0;
    for (e, el) in els.iter().enumerate() {
        let (vi, vo, a, len) = (v[e], v[e + 1], el.amax, el.len);
        let peak = el.vmax.min(((2.0 * a * len + vi * vi + vo * vo) / 2.0).sqrt()).max(vi).max(vo);
        let d1 = ((peak * peak - vi * vi) / (2.0 * a)).max(0.0);
        let d3 = ((peak * peak - vo * vo) / (2.0 * a)).max(0.0);
        let d2 = (len - d1 - d3).max(0.0);
        let mut s = el.s0;
        let mut add = |v0: f64, acc: f64, dur: f64, dist: f64, t: &mut f64, s: &mut f64| {
            if dur > 1e-12 {
                phases.push(Phase { t0: *t, s0: *s, v0, a: acc, dur });
                *t += dur;
            }
            *s += dist;
        };
        add(vi, a, (peak - vi) / a, d1, &mut t, &mut s);
        if peak > 0.0 {
            add(peak, 0.0, d2 / peak, d2, &mut t, &mut s);
        }
        add(peak, -a, (peak - vo) / a, d3, &mut t, &mut s);
    }
    Some(phases)
}

fn make_profile(built: Built, phases: Vec<Phase>, waypoints: Vec<Vec<f64>>) -> Profile {
    let duration = phases.last().map_or(0.0, |p| p.t0 + p.dur);
    let dof = waypoints[0].len();
    Profile {
        elements: built.elements,
        phases,
        duration,
        length: built.length,
        waypoint_s: built.waypoint_s,
        waypoints,
        dof,
    }
}

/// Times `path` from `start_velocity` (rest if `None`) to rest at its end.
///
/// The start velocity is projected onto the first segment when the dropped
/// off-tangent part is small; otherwise, or when the projected speed cannot
/// be absorbed, a lead-in segment along the current velocity is inserted so
/// that the robot continues its motion and curves onto the path.
pub fn time_parameterize(
    model: &RobotModel,
    path: &PathCandidate,
    start_velocity: Option<&[f64]>,
    cfg: &TimingConfig,
) -> Result<Trajectory, TimingError> {
    let dof = model.dof();
    if path.waypoints.is_empty() || path.waypoints.iter().any(|w| w.len() != dof || !model.within_limits(w)) {
        return Err(TimingError::InvalidPath);
    }
    // Unwrap yaw so the polyline follows the shorter arcs.
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(path.waypoints.len() + 1);
    let mut orig = Vec::with_capacity(path.waypoints.len());
    for w in &path.waypoints {
        let mut p = w.clone();
        if let Some(prev) = pts.last() {
            p[BASE_YAW] = prev[BASE_YAW] + angle_diff(prev[BASE_YAW], w[BASE_YAW]);
            if norm(&sub(&p, prev)) <= 1e-12 {
                orig.push(pts.len() - 1);
                continue;
            }
        }
        orig.push(pts.len());
        pts.push(p);
    }

    let v0: Vec<f64> = start_velocity.map_or(vec![0.0; dof], |v| v.to_vec());
    let speed = norm(&v0);
    let moving = speed > 1e-9;

    let plain = |pts: &[Vec<f64>], orig: &[usize], s0: f64| -> Option<Profile> {
        if pts.len() == 1 {
            return (s0 <= 1e-9).then(|| {
                make_profile(
                    Built { elements: Vec::new(), caps: vec![0.0], waypoint_s: vec![0.0; orig.len()], length: 0.0 },
                    Vec::new(),
                    path.waypoints.clone(),
                )
            });
        }
        let built = build_path(model, pts, orig, cfg);
        let phases = integrate(&built, s0)?;
        Some(make_profile(built, phases, path.waypoints.clone()))
    };

    let mut profile = None;
    if !moving {
        profile = plain(&pts, &orig, 0.0);
    } else if pts.len() > 1 {
        let dir = scaled(&sub(&pts[1], &pts[0]), 1.0 / norm(&sub(&pts[1], &pts[0])));
        let proj = dot(&v0, &dir).max(0.0);
        let small_residual = (0..dof)
            .all(|i| (v0[i] - proj * dir[i]).abs() <= cfg.residual_guard * model.max_velocity()[i]);
        if small_residual {
            profile = plain(&pts, &orig, proj);
        }
    }
    if profile.is_none() && moving {
        let u = scaled(&v0, 1.0 / speed);
        let len = stopping_distance(model, &u, speed) / cfg.lead_in_factor;
        let lead: Vec<f64> = pts[0].iter().zip(&u).map(|(p, d)| p + len * d).collect();
        let mut check = lead.clone();
        check[BASE_YAW] = wrap_angle(check[BASE_YAW]);
        if !model.within_limits(&check) {
            return Err(TimingError::LeadInOutOfLimits);
        }
        let mut with_lead = vec![pts[0].clone(), lead];
        with_lead[1][BASE_YAW] = pts[0][BASE_YAW] + len * u[BASE_YAW];
        // Continue to the remaining points, unwrapping yaw from the lead-in.
        for p in pts.iter().skip(1) {
            let prev = with_lead.last().unwrap();
            let mut q = p.clone();
            q[BASE_YAW] = prev[BASE_YAW] + angle_diff(wrap_angle(prev[BASE_YAW]), wrap_angle(p[BASE_YAW]));
            with_lead.push(q);
        }
        if pts.len() == 1 {
            // Nothing left to reach but the start: come back to it.
            with_lead.push(pts[0].clone());
        }
        let orig_lead: Vec<usize> = orig
            .iter()
            .enumerate()
            .map(|(j, &k)| match (j, k) {
                (0, _) => 0,
                _ if pts.len() == 1 => 2,
                (_, 0) => 0,
                _ => k + 1,
            })
            .collect();
        let built = build_path(model, &with_lead, &orig_lead, cfg);
        let phases = integrate(&built, speed).ok_or(TimingError::InfeasibleStart)?;
        profile = Some(make_profile(built, phases, path.waypoints.clone()));
    }
    let profile = profile.ok_or(TimingError::InfeasibleStart)?;
    Ok(Trajectory::from_profile(Arc::new(profile), 0.0, path.clone(), cfg.t_s))
}

/// Minimum rest-to-rest time of one DOF moving `d` with limits `v`, `a`.
pub fn single_dof_min_time(d: f64, v: f64, a: f64) -> f64 {
    let d = d.abs();
    if d <= v * v / a {
        2.0 * (d / a).sqrt()
    } else {
        d / v + v / a
    }
}
