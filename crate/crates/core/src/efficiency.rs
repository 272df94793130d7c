//! On-chain cost model: transaction counts, rounds, script sizes, and their
//! conversion to fees and wall-clock days.
//!
//! The concrete formulas are polynomial fits pinned to published data at
//! `n ∈ {2, 3, 4, 5, 10, 15, 20, 25, 50, 55}` with two stages for the
//! multi-stage protocols.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{horizon, ProtocolKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EfficiencyError {
    #[error("no concrete {what} model for {protocol}")]
    UnsupportedProtocol { protocol: ProtocolKind, what: &'static str },
    #[error("{protocol} concrete model is only defined for {expected} stage(s), got {stages}")]
    UnsupportedStages { protocol: ProtocolKind, stages: usize, expected: usize },
    #[error("at least two parties are required, got {0}")]
    TooFewParties(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyModel {
    pub sat_per_tx: u64,
    pub usd_per_btc: f64,
    pub minutes_per_round: f64,
    pub hours_per_day: f64,
    pub lambda: u32,
    pub share_bits: u32,
    pub commit_preimage_bits: u32,
    pub commit_output_bits: u32,
}

impl Default for EfficiencyModel {
    fn default() -> Self {
        EfficiencyModel {
            sat_per_tx: 546,
            usd_per_btc: 48_000.0,
            minutes_per_round: 60.0,
            hours_per_day: 24.0,
            lambda: 80,
            share_bits: 128,
            commit_preimage_bits: 512,
            commit_output_bits: 256,
        }
    }
}

impl EfficiencyModel {
    pub fn fee_usd(&self, tx_count: u64) -> f64 {
        tx_count as f64 * self.sat_per_tx as f64 * self.usd_per_btc / 1e8
    }

    pub fn exec_days(&self, rounds: u64) -> u64 {
        let minutes_per_day = self.hours_per_day * 60.0;
        let days = (rounds as f64 * self.minutes_per_round / minutes_per_day).ceil() as u64;
        days.max(1)
    }
}

fn check(protocol: ProtocolKind, n: usize, stages: usize) -> Result<(), EfficiencyError> {
    if n < 2 {
        return Err(EfficiencyError::TooFewParties(n));
    }
    let expected = match protocol {
        ProtocolKind::LockedLadder | ProtocolKind::PlantedLadder => 2,
        p if p.is_reactive() => return Ok(()),
        _ => 1,
    };
    if stages != expected {
        return Err(EfficiencyError::UnsupportedStages { protocol, stages, expected });
    }
    Ok(())
}

fn unsupported(protocol: ProtocolKind, what: &'static str) -> EfficiencyError {
    EfficiencyError::UnsupportedProtocol { protocol, what }
}

/// Total bits of script input across the whole run.
pub fn script_bits(protocol: ProtocolKind, n: usize, stages: usize) -> Result<u64, EfficiencyError> {
    check(protocol, n, stages)?;
    let n = n as u64;
    match protocol {
        ProtocolKind::Ladder => Ok(576 * n * (n - 1)),
        ProtocolKind::MultiLock => Ok(384 * n),
        ProtocolKind::AmortizedLadder => Ok(640 * n.pow(3) - 3200),
        ProtocolKind::LockedLadder => Ok(768 * n.pow(3) - 3840),
        ProtocolKind::PlantedLadder => Ok(1536 * n * n - 384 * n),
        p => Err(unsupported(p, "script size")),
    }
}

/// Rounds from the first deposit to the last refund of the honest run.
pub fn rounds(protocol: ProtocolKind, n: usize, stages: usize) -> Result<u64, EfficiencyError> {
    if n < 2 {
        return Err(EfficiencyError::TooFewParties(n));
    }
    if stages == 0 || (stages > 1 && !protocol.is_reactive()) {
        return Err(EfficiencyError::UnsupportedStages { protocol, stages, expected: 1 });
    }
    Ok(horizon(protocol, n, stages))
}

pub fn tx_count(protocol: ProtocolKind, n: usize, stages: usize) -> Result<u64, EfficiencyError> {
    check(protocol, n, stages)?;
    let n = n as u64;
    match protocol {
        ProtocolKind::Ladder => Ok(4 * n),
        ProtocolKind::MultiLock => Ok(2 * n + 4),
        ProtocolKind::AmortizedLadder => Ok(6 * n),
        ProtocolKind::LockedLadder => Ok(4 * n * n + 4 * n - 8),
        ProtocolKind::PlantedLadder => Ok(8 * n),
        p => Err(unsupported(p, "transaction count")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub r: usize,
    pub tx_count: u64,
    pub rounds: u64,
    pub script_bits: u64,
    pub fee_usd: f64,
    pub exec_days: u64,
}

pub fn report(protocol: ProtocolKind, n: usize, stages: usize, model: &EfficiencyModel) -> Result<EfficiencyReport, EfficiencyError> {
    let tx_count = tx_count(protocol, n, stages)?;
    let rounds = rounds(protocol, n, stages)?;
    Ok(EfficiencyReport {
        protocol,
        n,
        r: stages,
        tx_count,
        rounds,
        script_bits: script_bits(protocol, n, stages)?,
        fee_usd: model.fee_usd(tx_count),
        exec_days: model.exec_days(rounds),
    })
}

/// A growth class; only the exponent of `n` matters for ratio tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Order {
    pub n_power: u32,
    pub label: &'static str,
}

const fn order(n_power: u32, label: &'static str) -> Order {
    Order { n_power, label }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Asymptotics {
    pub rounds: Order,
    pub txs: Order,
    pub script: Order,
}

/// Published complexity classes, with `m` the input size, `λ` the security
/// parameter and `r` the number of stages.
pub fn asymptotics(protocol: ProtocolKind) -> Asymptotics {
    let (rounds, txs, script) = match protocol {
        ProtocolKind::Ladder => (order(1, "O(n)"), order(1, "O(n)"), order(2, "O(n²m)")),
        ProtocolKind::CompactLadder => (order(1, "O(n)"), order(1, "O(n)"), order(1, "O(nλ)")),
        ProtocolKind::MultiLock => (order(0, "O(1)"), order(2, "O(n²)"), order(2, "O(n²m)")),
        ProtocolKind::CompactMultiLock => (order(0, "O(1)"), order(2, "O(n²)"), order(1, "O(nλ)")),
        ProtocolKind::InsuredMpc => (order(0, "O(1)"), order(1, "O(n)"), order(1, "O(nm)")),
        ProtocolKind::LockedLadder => (order(1, "O(n)"), order(2, "O(n²)"), order(2, "O(n²mr)")),
        ProtocolKind::AmortizedLadder => (order(1, "O(n)"), order(2, "O(n²)"), order(2, "O(n²mλ)")),
        ProtocolKind::PlantedLadder => (order(1, "O(n)"), order(1, "O(n)"), order(2, "O(n²mr)")),
        ProtocolKind::CompactPlantedLadder => (order(1, "O(n)"), order(1, "O(n)"), order(1, "O(nrλ)")),
    };
    Asymptotics { rounds, txs, script }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rounds,
    Txs,
    Script,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub protocol: ProtocolKind,
    pub metric: Metric,
    pub nominal: Order,
    /// `f(200) / f(100)` of the concrete model.
    pub ratio: f64,
    pub consistent: bool,
}

/// Ratio test of every concrete formula against its published class. A
/// metric is consistent when `f(2n)/f(n)` at `n = 100` lies within a factor
/// `slack` of `2^p`.
pub fn growth_checks(slack: f64) -> Vec<GrowthCheck> {
    const CONCRETE: [ProtocolKind; 5] = [
        ProtocolKind::Ladder,
        ProtocolKind::MultiLock,
        ProtocolKind::AmortizedLadder,
        ProtocolKind::LockedLadder,
        ProtocolKind::PlantedLadder,
    ];
    let mut out = Vec::new();
    for p in CONCRETE {
        let r = p.default_stages();
        let a = asymptotics(p);
        let metrics: [(Metric, Order, fn(ProtocolKind, usize, usize) -> Result<u64, EfficiencyError>); 3] = [
            (Metric::Rounds, a.rounds, rounds),
            (Metric::Txs, a.txs, tx_count),
            (Metric::Script, a.script, script_bits),
        ];
        for (metric, nominal, f) in metrics {
            let lo = f(p, 100, r).expect("concrete model") as f64;
            let hi = f(p, 200, r).expect("concrete model") as f64;
            let ratio = hi / lo;
            let target = 2f64.powi(nominal.n_power as i32);
            let consistent = ratio <= target * slack && ratio >= target / slack;
            out.push(GrowthCheck { protocol: p, metric, nominal, ratio, consistent });
        }
    }
    out
}
