//! The two search problems: feature-set evolution for property prediction
//! and structure evolution for property optimization.

mod dataset;
mod learn;
mod optimization;
mod prediction;
mod proposer;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{split_assignment, Dataset, Record, Split, SplitGuard, MIN_RECORDS};
pub use learn::{
    auc, fit_logistic, fit_ridge, fit_tree, rmse, train_evaluator, EvaluatorKind, EvaluatorParams, Model, Scaler,
    TreeNode,
};
pub use optimization::{apply_action, OptState, OptimizationTask};
pub use prediction::{FinalReport, PredictionTask, DEFAULT_FEATURE_CAP, FEATURE_PENALTY, PROBE_SAMPLE};
pub use proposer::{PolicyProposer, PolicyTask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("dataset has {0} usable records; at least 10 are needed")]
    TooFewRecords(usize),
    #[error("test labels are sealed until the search is finalized")]
    TestLabelsSealed,
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error("model: {0}")]
    Model(String),
    #[error("invalid molecule: {0}")]
    InvalidMolecule(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("task: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    Auc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Logp,
    Qed,
}

impl Property {
    pub fn descriptor(self) -> &'static str {
        match self {
            Property::Logp => "logp",
            Property::Qed => "qed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Prediction,
    Optimization,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Prediction => "prediction",
            TaskKind::Optimization => "optimization",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Objective {
    Prediction { metric: Metric, dataset: String },
    Optimization { property: Property, start: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub objective: Objective,
    #[serde(default = "default_evaluator")]
    pub evaluator: EvaluatorKind,
    #[serde(default)]
    pub params: EvaluatorParams,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_evaluator() -> EvaluatorKind {
    EvaluatorKind::Ridge
}

fn default_lambda() -> f64 {
    0.5
}

fn default_gamma() -> f64 {
    1.0
}

impl TaskSpec {
    pub fn optimization(property: Property, start: &str) -> Self {
        TaskSpec {
            objective: Objective::Optimization {
                property,
                start: start.to_string(),
            },
            evaluator: default_evaluator(),
            params: EvaluatorParams::default(),
            lambda: default_lambda(),
            gamma: default_gamma(),
        }
    }

    pub fn prediction_rmse(dataset: &str) -> Self {
        Self::prediction(Metric::Rmse, dataset)
    }

    pub fn prediction(metric: Metric, dataset: &str) -> Self {
        TaskSpec {
            objective: Objective::Prediction {
                metric,
                dataset: dataset.to_string(),
            },
            evaluator: match metric {
                Metric::Rmse => EvaluatorKind::Ridge,
                Metric::Auc => EvaluatorKind::Logistic,
            },
            ..Self::optimization(Property::Logp, "")
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self.objective {
            Objective::Prediction { .. } => TaskKind::Prediction,
            Objective::Optimization { .. } => TaskKind::Optimization,
        }
    }

    /// Plain-language statement used in prompts.
    pub fn describe(&self) -> String {
        match &self.objective {
            Objective::Prediction { metric, dataset } => {
                let goal = match metric {
                    Metric::Rmse => "a continuous molecular property (regression, lower validation RMSE is better)",
                    Metric::Auc => "a binary molecular label (classification, higher validation ROC AUC is better)",
                };
                format!("Predict {goal} for the molecules in {dataset} from a small set of interpretable descriptors.")
            }
            Objective::Optimization { property, start } => {
                let goal = match property {
                    Property::Logp => "increase its octanol-water partition coefficient (Crippen LogP)",
                    Property::Qed => "increase its drug-likeness (QED)",
                };
                format!("Modify the molecule {start} to {goal} while keeping its core scaffold recognisable.")
            }
        }
    }
}

/// One optimization run for [`improvement_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub start: f64,
    pub best: f64,
    pub valid: bool,
}

/// Mean improvement over all runs and the percentage of runs whose valid
/// best is strictly above the start.
pub fn improvement_stats(runs: &[RunSummary]) -> Result<(f64, f64), TaskError> {
    if runs.is_empty() {
        return Err(TaskError::Spec("no runs to summarize".into()));
    }
    let n = runs.len() as f64;
    let delta = runs.iter().map(|r| r.best - r.start).sum::<f64>() / n;
    let wins = runs.iter().filter(|r| r.valid && r.best > r.start).count() as f64;
    Ok((delta, 100.0 * wins / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stats_examples() {
        let (d, sr) = improvement_stats(&[RunSummary {
            start: -1.09,
            best: 2.51,
            valid: true,
        }])
        .unwrap();
        assert_abs_diff_eq!(d, 3.60, epsilon = 1e-12);
        assert_eq!(sr, 100.0);
        let same = RunSummary {
            start: 1.0,
            best: 1.0,
            valid: true,
        };
        assert_eq!(improvement_stats(&[same]).unwrap().1, 0.0);
        let mixed = [
            RunSummary {
                start: 0.0,
                best: 1.0,
                valid: true,
            },
            RunSummary {
                start: 0.0,
                best: -0.5,
                valid: true,
            },
        ];
        assert_eq!(improvement_stats(&mixed).unwrap(), (0.25, 50.0));
        assert!(improvement_stats(&[]).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let t = TaskSpec::optimization(Property::Qed, "CCO");
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(json["objective"]["kind"], "optimization");
        assert_eq!(json["objective"]["property"], "qed");
        let back: TaskSpec =
            serde_json::from_str(r#"{"objective": {"kind": "prediction", "metric": "auc", "dataset": "x.csv"}}"#).unwrap();
        assert_eq!(back.kind(), TaskKind::Prediction);
        assert_eq!(back.lambda, 0.5);
        assert!(t.describe().contains("CCO"));
    }
}
