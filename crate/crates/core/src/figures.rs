//! Plot-ready data series for the efficiency and cost comparisons.

use serde::Serialize;

use crate::efficiency::{self, EfficiencyError, EfficiencyModel};
use crate::fairness::{npc_all, DiscountSpec, FairnessError};
use crate::schedule::{generate_schedule, ProtocolKind, ScenarioParams, Schedule, ScheduleError};

/// Party counts on the horizontal axis of the efficiency plots.
pub const N_GRID: [usize; 10] = [2, 3, 4, 5, 10, 15, 20, 25, 50, 55];

/// Protocols with concrete efficiency models.
pub const CONCRETE: [ProtocolKind; 5] = [
    ProtocolKind::Ladder,
    ProtocolKind::MultiLock,
    ProtocolKind::AmortizedLadder,
    ProtocolKind::LockedLadder,
    ProtocolKind::PlantedLadder,
];

/// Parties sampled in the cost comparison.
pub const SAMPLED_PARTIES: [usize; 4] = [1, 10, 25, 55];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeeRow {
    pub protocol: String,
    pub n: usize,
    pub fee_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DaysRow {
    pub protocol: String,
    pub n: usize,
    pub days: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitsRow {
    pub protocol: String,
    pub n: usize,
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalRow {
    pub protocol: String,
    pub party: usize,
    pub total_q: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRow {
    pub protocol: String,
    pub party: usize,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiRow {
    pub protocol: String,
    pub party: usize,
    pub chi_bps: f64,
}

fn label(p: ProtocolKind) -> String {
    p.short_name().to_string()
}

/// The honest run plotted for each protocol: two stages for the reactive
/// ladders and one execution elsewhere.
pub fn plotted_schedule(protocol: ProtocolKind, n: usize, executions: usize) -> Result<Schedule, ScheduleError> {
    generate_schedule(
        &ScenarioParams::new(protocol, n)
            .with_stages(protocol.default_stages())
            .with_executions(if protocol == ProtocolKind::AmortizedLadder { executions } else { 1 }),
    )
}

fn grid<T>(mut f: impl FnMut(ProtocolKind, usize) -> Result<T, EfficiencyError>) -> Result<Vec<T>, EfficiencyError> {
    let mut out = Vec::new();
    for p in CONCRETE {
        for n in N_GRID {
            out.push(f(p, n)?);
        }
    }
    Ok(out)
}

pub fn fig5(model: &EfficiencyModel) -> Result<Vec<FeeRow>, EfficiencyError> {
    grid(|p, n| {
        let txs = efficiency::tx_count(p, n, p.default_stages())?;
        Ok(FeeRow { protocol: label(p), n, fee_usd: model.fee_usd(txs) })
    })
}

pub fn fig6(model: &EfficiencyModel) -> Result<Vec<DaysRow>, EfficiencyError> {
    grid(|p, n| {
        let rounds = efficiency::rounds(p, n, p.default_stages())?;
        Ok(DaysRow { protocol: label(p), n, days: model.exec_days(rounds) })
    })
}

pub fn fig7() -> Result<Vec<BitsRow>, EfficiencyError> {
    grid(|p, n| Ok(BitsRow { protocol: label(p), n, bits: efficiency::script_bits(p, n, p.default_stages())? }))
}

/// Total deposit of every party, in units of `q`.
pub fn fig8(n: usize) -> Result<Vec<TotalRow>, ScheduleError> {
    let mut out = Vec::new();
    for p in CONCRETE {
        let s = plotted_schedule(p, n, 1)?;
        for party in 1..=n {
            out.push(TotalRow { protocol: label(p), party, total_q: s.total_deposit(party)? });
        }
    }
    Ok(out)
}

/// Longest stretch each party has coins locked.
pub fn fig9(n: usize) -> Result<Vec<WindowRow>, ScheduleError> {
    let mut out = Vec::new();
    for p in CONCRETE {
        let s = plotted_schedule(p, n, 1)?;
        for party in 1..=n {
            out.push(WindowRow { protocol: label(p), party, rounds: s.max_lock_window(party)? });
        }
    }
    Ok(out)
}

/// Net present cost of the sampled parties in basis points of `q`. The
/// amortized ladder is plotted over two executions.
pub fn fig10(n: usize, spec: &DiscountSpec) -> Result<Vec<ChiRow>, FairnessError> {
    let mut out = Vec::new();
    for p in CONCRETE {
        let s = plotted_schedule(p, n, 2)?;
        let chi = npc_all(&s, spec)?;
        for party in SAMPLED_PARTIES.into_iter().filter(|&i| i <= n) {
            out.push(ChiRow { protocol: label(p), party, chi_bps: chi[party - 1] / s.q as f64 * 1e4 });
        }
    }
    Ok(out)
}
