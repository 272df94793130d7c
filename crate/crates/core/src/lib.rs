//! Schedules, fairness metrics, efficiency models and escrow simulation for
//! penalty-based fair multiparty computation protocols.

pub mod schedule;
pub mod fairness;
pub mod efficiency;
pub mod escrow;
pub mod cml;
pub mod btcscript;
pub mod figures;
