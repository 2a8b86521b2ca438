//! Modeled compute clock.
//!
//! Planner deadlines and reported planning delays are measured in modeled
//! seconds: counts of primitive operations multiplied by fixed unit costs.
//! This keeps every run bit-for-bit reproducible regardless of machine load
//! or thread count, while the unit costs (measured once on a release build)
//! keep the modeled times close to real ones.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Primitive operations the clock counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Work {
    /// One damped least-squares iteration (FK, Jacobian, 6x6 solve).
    IkIteration,
    /// One robot state collision query (fixed part).
    CollisionState,
    /// One robot sphere against one obstacle primitive.
    SphereTest,
    /// One path element handled by the time parameterization.
    TimingElement,
    /// One emitted trajectory sample.
    TrajectorySample,
    /// One weighted distance evaluation in tree search.
    DistanceEval,
}

const KINDS: usize = 6;

impl Work {
    fn index(self) -> usize {
        self as usize
    }
}

/// Seconds per unit of each [`Work`] kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub ik_iteration: f64,
    pub collision_state: f64,
    pub sphere_test: f64,
    pub timing_element: f64,
    pub trajectory_sample: f64,
    pub distance_eval: f64,
}

impl Default for CostModel {
    /// Measured with `rlp calibrate` on a release build, then frozen.
    fn default() -> Self {
        CostModel {
            ik_iteration: 1.0e-6,
            collision_state: 6.5e-7,
            sphere_test: 5.2e-9,
            timing_element: 1.2e-6,
            trajectory_sample: 2.2e-7,
            distance_eval: 1.6e-8,
        }
    }
}

impl CostModel {
    fn as_array(&self) -> [f64; KINDS] {
        [
            self.ik_iteration,
            self.collision_state,
            self.sphere_test,
            self.timing_element,
            self.trajectory_sample,
            self.distance_eval,
        ]
    }
}

/// Operation counts; comparable and serializable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorkCounts(pub [u64; KINDS]);

impl WorkCounts {
    pub fn get(&self, w: Work) -> u64 {
        self.0[w.index()]
    }

    pub fn seconds(&self, costs: &CostModel) -> f64 {
        self.0.iter().zip(costs.as_array()).map(|(&n, c)| n as f64 * c).sum()
    }

    pub fn since(&self, earlier: &WorkCounts) -> WorkCounts {
        let mut out = [0; KINDS];
        for k in 0..KINDS {
            out[k] = self.0[k] - earlier.0[k];
        }
        WorkCounts(out)
    }
}

/// Thread-safe operation counter. Totals are independent of the order in
/// which parallel workers report, so modeled time is deterministic.
#[derive(Debug)]
pub struct Meter {
    counts: [AtomicU64; KINDS],
    costs: CostModel,
    started: Instant,
}

impl Default for Meter {
    fn default() -> Self {
        Meter::new(CostModel::default())
    }
}

impl Meter {
    pub fn new(costs: CostModel) -> Self {
        Meter {
            counts: Default::default(),
            costs,
            started: Instant::now(),
        }
    }

    #[inline]
    pub fn charge(&self, w: Work, n: u64) {
        self.counts[w.index()].fetch_add(n, Ordering::Relaxed);
    }

    pub fn counts(&self) -> WorkCounts {
        let mut out = [0; KINDS];
        for (o, c) in out.iter_mut().zip(&self.counts) {
            *o = c.load(Ordering::Relaxed);
        }
        WorkCounts(out)
    }

    /// Modeled seconds since creation.
    pub fn elapsed(&self) -> f64 {
        self.counts().seconds(&self.costs)
    }

    /// Real seconds since creation; logged, never used for decisions.
    pub fn wall_elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    /// A deadline `budget` modeled seconds from now.
    pub fn deadline(&self, budget: f64) -> Deadline<'_> {
        Deadline { meter: self, at: self.elapsed() + budget }
    }
}

/// Point on the modeled clock after which work should stop.
#[derive(Debug, Clone, Copy)]
pub struct Deadline<'a> {
    meter: &'a Meter,
    at: f64,
}

impl Deadline<'_> {
    pub fn expired(&self) -> bool {
        self.meter.elapsed() > self.at
    }

    pub fn remaining(&self) -> f64 {
        self.at - self.meter.elapsed()
    }
}
