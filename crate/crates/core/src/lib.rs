//! Synthesis, verification, reward-scoring, and selection machinery for
//! agent-planning training data.
//!
//! The crate is organized around the stages of a planning-data pipeline:
//!
//! - [`catalog`]: normalized tool definitions plus the dependency and
//!   parameter-sharing graphs that seed plan synthesis.
//! - [`plan`]: atomic plan synthesis and the composition operators that
//!   turn atomic plans into multi-intent, conditional, or multi-turn tasks.
//! - [`quality`]: SimHash dedup, output-grammar validation, semantic audit,
//!   and distractor-tool injection.
//! - [`schedule`]: CSP-style trip/meeting/calendar instance generation,
//!   exhaustive solving, verification, and natural-language rendering.
//! - [`workflow`]: workflow DAG construction, topological ordering,
//!   validation, and the node/edge text format.
//! - [`trajectory`]: multi-turn tool-call trajectory synthesis, both
//!   golden-plan driven and open-ended long-horizon.
//! - [`reward`]: rule-based multi-task reward scoring over the five task
//!   output grammars, including the chain/graph F1 metrics.
//! - [`select`]: greedy novelty-based subset selection over embeddings.
//! - [`objectives`]: pure-function RL and MoE objective math.
//! - [`backend`]: text-generation / embedding / judge backends with
//!   deterministic local implementations and cached remote clients.

pub mod backend;
pub mod catalog;
pub mod entities;
pub mod objectives;
pub mod plan;
pub mod quality;
pub mod reward;
pub mod schedule;
pub mod select;
pub mod textutil;
pub mod trajectory;
pub mod workflow;
