//! Per-party deposit and refund schedules of penalty protocols.
//!
//! A schedule lists every coin movement a party makes into or out of escrow,
//! indexed by protocol round. Amounts are integer multiples of the penalty
//! unit `q`; rounds are abstract integers.

mod templates;

pub use templates::{apply_abort, generate_schedule, horizon, multilock_with_aborts};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The penalty protocols covered by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProtocolKind {
    Ladder,
    MultiLock,
    CompactLadder,
    CompactMultiLock,
    InsuredMpc,
    LockedLadder,
    PlantedLadder,
    CompactPlantedLadder,
    AmortizedLadder,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 9] = [
        ProtocolKind::Ladder,
        ProtocolKind::MultiLock,
        ProtocolKind::CompactLadder,
        ProtocolKind::CompactMultiLock,
        ProtocolKind::InsuredMpc,
        ProtocolKind::LockedLadder,
        ProtocolKind::PlantedLadder,
        ProtocolKind::CompactPlantedLadder,
        ProtocolKind::AmortizedLadder,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ProtocolKind::Ladder => "L",
            ProtocolKind::MultiLock => "ML",
            ProtocolKind::CompactLadder => "CL",
            ProtocolKind::CompactMultiLock => "CML",
            ProtocolKind::InsuredMpc => "IMPC",
            ProtocolKind::LockedLadder => "LL",
            ProtocolKind::PlantedLadder => "PL",
            ProtocolKind::CompactPlantedLadder => "CPL",
            ProtocolKind::AmortizedLadder => "AL",
        }
    }

    /// Multi-stage (reactive) protocols accept more than one stage.
    pub fn is_reactive(self) -> bool {
        matches!(
            self,
            ProtocolKind::LockedLadder | ProtocolKind::PlantedLadder | ProtocolKind::CompactPlantedLadder
        )
    }

    pub fn is_multilock_family(self) -> bool {
        matches!(
            self,
            ProtocolKind::MultiLock | ProtocolKind::CompactMultiLock | ProtocolKind::InsuredMpc
        )
    }

    pub fn is_ladder_family(self) -> bool {
        matches!(self, ProtocolKind::Ladder | ProtocolKind::CompactLadder)
    }

    pub fn default_stages(self) -> usize {
        if self.is_reactive() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol `{0}`")]
pub struct UnknownProtocol(pub String);

impl FromStr for ProtocolKind {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        let kind = match key.as_str() {
            "l" | "ladder" => ProtocolKind::Ladder,
            "ml" | "multilock" => ProtocolKind::MultiLock,
            "cl" | "compactladder" => ProtocolKind::CompactLadder,
            "cml" | "compactmultilock" => ProtocolKind::CompactMultiLock,
            "impc" | "insuredmpc" => ProtocolKind::InsuredMpc,
            "ll" | "lockedladder" => ProtocolKind::LockedLadder,
            "pl" | "plantedladder" => ProtocolKind::PlantedLadder,
            "cpl" | "compactplantedladder" => ProtocolKind::CompactPlantedLadder,
            "al" | "amortizedladder" => ProtocolKind::AmortizedLadder,
            _ => return Err(UnknownProtocol(s.to_string())),
        };
        Ok(kind)
    }
}

/// A party that stops participating from `round` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Abort {
    pub party: usize,
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub stages: usize,
    pub q: u64,
    /// Number of batched executions; only the amortized ladder accepts more than one.
    pub executions: usize,
    pub abort: Option<Abort>,
}

impl ScenarioParams {
    pub fn new(protocol: ProtocolKind, n: usize) -> Self {
        ScenarioParams {
            protocol,
            n,
            stages: protocol.default_stages(),
            q: 1,
            executions: 1,
            abort: None,
        }
    }

    pub fn with_stages(mut self, stages: usize) -> Self {
        self.stages = stages;
        self
    }

    pub fn with_q(mut self, q: u64) -> Self {
        self.q = q;
        self
    }

    pub fn with_executions(mut self, executions: usize) -> Self {
        self.executions = executions;
        self
    }

    pub fn with_abort(mut self, party: usize, round: u64) -> Self {
        self.abort = Some(Abort { party, round });
        self
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.n < 2 {
            return Err(ScheduleError::TooFewParties(self.n));
        }
        if self.q == 0 {
            return Err(ScheduleError::ZeroUnit);
        }
        if self.stages == 0 || (self.stages > 1 && !self.protocol.is_reactive()) {
            return Err(ScheduleError::UnsupportedStages {
                protocol: self.protocol,
                stages: self.stages,
            });
        }
        if self.executions == 0
            || (self.executions > 1 && self.protocol != ProtocolKind::AmortizedLadder)
        {
            return Err(ScheduleError::UnsupportedExecutions {
                protocol: self.protocol,
                executions: self.executions,
            });
        }
        if let Some(a) = self.abort {
            check_party(a.party, self.n)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("at least two parties are required, got {0}")]
    TooFewParties(usize),
    #[error("the penalty unit q must be positive")]
    ZeroUnit,
    #[error("{protocol} does not support {stages} stage(s)")]
    UnsupportedStages { protocol: ProtocolKind, stages: usize },
    #[error("{protocol} does not support {executions} execution(s)")]
    UnsupportedExecutions { protocol: ProtocolKind, executions: usize },
    #[error("party {party} is outside 1..={n}")]
    InvalidParty { party: usize, n: usize },
    #[error("{0} has no abort model")]
    UnsupportedAbort(ProtocolKind),
    #[error("no abort scenario is set")]
    MissingAbort,
}

fn check_party(party: usize, n: usize) -> Result<(), ScheduleError> {
    if party == 0 || party > n {
        Err(ScheduleError::InvalidParty { party, n })
    } else {
        Ok(())
    }
}

/// Direction of a coin movement relative to escrow. `Deposit` sorts first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlowKind {
    Deposit,
    Refund,
}

impl FlowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::Deposit => "deposit",
            FlowKind::Refund => "refund",
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One coin movement: `amount_q` units of `q` moved by `party` at `round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CashFlow {
    pub party: usize,
    pub round: u64,
    pub amount_q: u64,
    pub kind: FlowKind,
}

impl CashFlow {
    pub fn deposit(party: usize, round: u64, amount_q: u64) -> Self {
        CashFlow { party, round, amount_q, kind: FlowKind::Deposit }
    }

    pub fn refund(party: usize, round: u64, amount_q: u64) -> Self {
        CashFlow { party, round, amount_q, kind: FlowKind::Refund }
    }

    /// Refunds count positive, deposits negative.
    pub fn signed_q(&self) -> i64 {
        match self.kind {
            FlowKind::Deposit => -(self.amount_q as i64),
            FlowKind::Refund => self.amount_q as i64,
        }
    }
}

/// A canonical schedule: flows aggregated per (round, party, kind) and
/// sorted by round, then party, then kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub params: Option<ScenarioParams>,
    pub n: usize,
    pub q: u64,
    pub events: Vec<CashFlow>,
    pub total_rounds: u64,
    /// Parties that deviated from the protocol in this run.
    pub aborted: Vec<usize>,
}

impl Schedule {
    pub fn from_flows(n: usize, q: u64, flows: impl IntoIterator<Item = CashFlow>) -> Self {
        let mut acc: BTreeMap<(u64, usize, FlowKind), u64> = BTreeMap::new();
        for f in flows {
            if f.amount_q > 0 {
                *acc.entry((f.round, f.party, f.kind)).or_insert(0) += f.amount_q;
            }
        }
        let events: Vec<CashFlow> = acc
            .into_iter()
            .map(|((round, party, kind), amount_q)| CashFlow { party, round, amount_q, kind })
            .collect();
        let total_rounds = events.iter().map(|e| e.round).max().unwrap_or(0);
        Schedule { params: None, n, q, events, total_rounds, aborted: Vec::new() }
    }

    pub fn with_params(mut self, params: ScenarioParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn with_aborted(mut self, mut aborted: Vec<usize>) -> Self {
        aborted.sort_unstable();
        aborted.dedup();
        self.aborted = aborted;
        self
    }

    pub fn honest_parties(&self) -> Vec<usize> {
        (1..=self.n).filter(|p| !self.aborted.contains(p)).collect()
    }

    pub fn protocol_label(&self) -> &'static str {
        self.params.as_ref().map_or("custom", |p| p.protocol.short_name())
    }

    pub fn stages(&self) -> usize {
        self.params.as_ref().map_or(1, |p| p.stages)
    }

    fn check(&self, party: usize) -> Result<(), ScheduleError> {
        check_party(party, self.n)
    }

    pub fn events_of(&self, party: usize) -> impl Iterator<Item = &CashFlow> + '_ {
        self.events.iter().filter(move |e| e.party == party)
    }

    pub fn total_deposit(&self, party: usize) -> Result<u64, ScheduleError> {
        self.check(party)?;
        Ok(self
            .events_of(party)
            .filter(|e| e.kind == FlowKind::Deposit)
            .map(|e| e.amount_q)
            .sum())
    }

    pub fn total_refund(&self, party: usize) -> Result<u64, ScheduleError> {
        self.check(party)?;
        Ok(self
            .events_of(party)
            .filter(|e| e.kind == FlowKind::Refund)
            .map(|e| e.amount_q)
            .sum())
    }

    /// Refunds minus deposits, in units of `q`.
    pub fn net_q(&self, party: usize) -> Result<i64, ScheduleError> {
        self.check(party)?;
        Ok(self.events_of(party).map(CashFlow::signed_q).sum())
    }

    /// Cumulative coins held by the party (refunds minus deposits, in coins)
    /// at every round from 0 through the party's last event.
    pub fn balance_trace(&self, party: usize) -> Result<Vec<(u64, i64)>, ScheduleError> {
        self.check(party)?;
        let last = self.events_of(party).map(|e| e.round).max().unwrap_or(0);
        let mut per_round = vec![0i64; last as usize + 1];
        for e in self.events_of(party) {
            per_round[e.round as usize] += e.signed_q() * self.q as i64;
        }
        let mut running = 0i64;
        Ok(per_round
            .into_iter()
            .enumerate()
            .map(|(t, delta)| {
                running += delta;
                (t as u64, running)
            })
            .collect())
    }

    /// Rounds between the party's first deposit and its last refund.
    pub fn max_lock_window(&self, party: usize) -> Result<u64, ScheduleError> {
        self.check(party)?;
        let first = self
            .events_of(party)
            .filter(|e| e.kind == FlowKind::Deposit)
            .map(|e| e.round)
            .min();
        let last = self
            .events_of(party)
            .filter(|e| e.kind == FlowKind::Refund)
            .map(|e| e.round)
            .max();
        Ok(match (first, last) {
            (Some(f), Some(l)) if l > f => l - f,
            _ => 0,
        })
    }

    /// The first round at which cumulative refunds exceed cumulative deposits.
    pub fn first_conservation_violation(&self) -> Option<u64> {
        let mut deposits = 0u64;
        let mut refunds = 0u64;
        let mut i = 0;
        while i < self.events.len() {
            let round = self.events[i].round;
            while i < self.events.len() && self.events[i].round == round {
                match self.events[i].kind {
                    FlowKind::Deposit => deposits += self.events[i].amount_q,
                    FlowKind::Refund => refunds += self.events[i].amount_q,
                }
                i += 1;
            }
            if refunds > deposits {
                return Some(round);
            }
        }
        None
    }

    /// Union of two schedules over the same party set.
    pub fn concat(&self, other: &Schedule) -> Schedule {
        let n = self.n.max(other.n);
        Schedule::from_flows(n, self.q, self.events.iter().chain(other.events.iter()).copied())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["protocol", "n", "stages", "party", "round", "kind", "amount_q"])
            .expect("in-memory csv write");
        let protocol = self.protocol_label();
        let n = self.n.to_string();
        let stages = self.stages().to_string();
        for e in &self.events {
            w.write_record([
                protocol,
                n.as_str(),
                stages.as_str(),
                &e.party.to_string(),
                &e.round.to_string(),
                e.kind.as_str(),
                &e.amount_q.to_string(),
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}
