//! Scenario files: robot, obstacles, start state and goals of one planning
//! problem.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraints::{GoalConstraint, GoalConstraintSpec, SoftConstraint, SoftConstraintSpec};
use crate::environment::{is_collision, Environment, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::model::{RobotModel, RobotState};
use crate::planner::PlanRequest;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    /// Bundled model name or path to a model file.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub environment: EnvironmentSpec,
    pub start: RobotState,
    pub goals: Vec<GoalConstraintSpec>,
    #[serde(default)]
    pub soft: Vec<SoftConstraintSpec>,
}

/// A scenario with its model and constraints resolved.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub id: String,
    pub seed: u64,
    pub model: RobotModel,
    pub env: Environment,
    pub start: RobotState,
    pub goals: Vec<GoalConstraint>,
    pub soft: Vec<SoftConstraint>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Resolves the model and constraints and checks the start state.
    pub fn load(&self) -> Result<LoadedScenario> {
        let model = RobotModel::resolve(&self.model)?;
        let env = Environment::new(self.environment.clone())?;
        model.check_state(&self.start)?;
        if self.goals.is_empty() {
            return Err(Error::Config(format!("scenario `{}` has no goal constraints", self.id)));
        }
        let goals = self.goals.iter().map(GoalConstraint::from_spec).collect::<Result<Vec<_>>>()?;
        let soft = self.soft.iter().map(SoftConstraint::from_spec).collect::<Result<Vec<_>>>()?;
        if !model.within_limits(&self.start.positions) {
            return Err(Error::Config(format!("scenario `{}` starts outside joint limits", self.id)));
        }
        if is_collision(&model, &self.start.positions, &env.full_view(), 0.0) {
            return Err(Error::Config(format!("scenario `{}` starts in collision", self.id)));
        }
        Ok(LoadedScenario { id: self.id.clone(), seed: self.seed, model, env, start: self.start.clone(), goals, soft })
    }
}

impl LoadedScenario {
    pub fn request(&self) -> PlanRequest<'_> {
        PlanRequest { model: &self.model, env: &self.env, goals: &self.goals, soft: &self.soft }
    }
}
