//! Rule-guided Monte Carlo tree search over molecules and descriptor sets.
//!
//! The numeric core ([`mcts`], the learners in [`tasks`], [`theory`]) is
//! generic over the float type; the aliases below fix it to `f64`.

pub mod descriptors;
pub mod mcts;
pub mod molgraph;
pub mod policy;
pub mod ruledsl;
pub mod tasks;
pub mod theory;

pub type SearchConfigF64 = mcts::SearchConfig<f64>;
pub type RewardBreakdownF64 = mcts::RewardBreakdown<f64>;
pub type SearchTraceF64 = mcts::SearchTrace<f64>;
pub type ModelF64 = tasks::Model<f64>;
pub type CliffSpaceF64 = theory::CliffSpace<f64>;
