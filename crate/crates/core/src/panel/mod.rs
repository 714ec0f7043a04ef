//! Panel data representation: node orderings, datasets, regimes and
//! covariate-selection strategies.

mod dataset;
mod ordering;
mod regime;
mod strategy;

pub use dataset::{validate_dataset, CsvSchema, PanelDataset, ValidationReport, Violation};
pub use ordering::{NodeOrdering, NodeRef, NodeSpec, Role};
pub use regime::{adherence_indicators, evaluate_regime, Regime, RegimeAssignment, RegimeRule};
pub use strategy::{select_covariates, CovariateStrategy, ModelTarget, StrategyKind};
