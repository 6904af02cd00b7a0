//! Mining of API call logs into per-API knowledge (parameter patterns,
//! parameter sequences, enumerations, ranges, requiredness and producer
//! dependencies) and a character-level ConvNet that predicts a call's
//! outcome before it is executed.

pub mod abstraction;
pub mod constraints;
pub mod dependency;
pub mod knowledge;
mod lcs;
pub mod log_model;
pub mod metrics;
pub mod predictor;
pub mod sequences;
pub mod simulator;

pub use abstraction::{AbstractionProfile, LengthHistogram, PartialAbstraction};
pub use constraints::{EnumState, EnumStatus, NumericRange, RequirednessStat};
pub use dependency::{ApiCatalog, DependencyEdge, RankWeights, RelevanceTable};
pub use knowledge::{ApiKnowledge, MineConfig};
pub use log_model::{ApiCallRecord, ApiSpec, OutcomeLabel, ParamSpec, ParamType};
pub use metrics::SuccessRateReport;
pub use predictor::{ConvNetModel, ModelCfg, TrainCfg, Variant};
pub use sequences::{FilterConfig, SequenceKey, SequenceStats};
pub use simulator::{generate, Scenario};
