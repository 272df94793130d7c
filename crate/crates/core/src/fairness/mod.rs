//! Discounting, net present cost of participation and financial fairness.
//!
//! A coin moved at time `t` is valued `η(t)`; the net present cost of party
//! `i` is the discounted value of everything it deposited minus everything it
//! received back. A run is financially fair when every honest party bears the
//! same cost for every discount rate.

mod collateral;
mod roundrobin;

pub use collateral::{collateral_game, CollateralGame, GameOutcome, LastStrategy, FirstStrategy, Payoff};
pub use roundrobin::{round_robin_analysis, round_robin_schedule, Polynomial, RoundRobinAnalysis};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{Schedule, ScheduleError};

pub const MINUTES_PER_HOUR: f64 = 60.0;
pub const MINUTES_PER_YEAR: f64 = 365.0 * 24.0 * 60.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FairnessError {
    #[error("fairness needs at least two honest parties, got {0}")]
    InsufficientParties(usize),
    #[error("no discount specification supplied")]
    NoSpecs,
    #[error("discount rate must be finite and non-negative, got {0}")]
    NegativeRate(f64),
    #[error("minutes per round must be positive, got {0}")]
    BadRoundLength(f64),
    #[error("cannot rescale an annual rate to {0}")]
    UnsupportedUnit(TimeUnit),
    #[error("{0} non-redeeming parties is outside 0..={1}")]
    TooManyCorrupted(usize, usize),
    #[error("every round-robin gap polynomial is identically zero")]
    DegenerateFair,
    #[error("rotation count k must be at least 1")]
    ZeroRotations,
    #[error("invalid game parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Year,
    Hour,
    Minute,
    Round,
}

impl TimeUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Year => "year",
            TimeUnit::Hour => "hour",
            TimeUnit::Minute => "minute",
            TimeUnit::Round => "round",
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `Continuous` uses `η(t) = e^{−tδ}`; `Discrete` uses `η(t) = (1+δ)^{−t}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscountForm {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    pub form: DiscountForm,
    pub delta_per_unit: f64,
    pub time_unit: TimeUnit,
    pub minutes_per_round: f64,
}

impl DiscountSpec {
    pub fn continuous(delta_per_unit: f64, time_unit: TimeUnit) -> Self {
        DiscountSpec { form: DiscountForm::Continuous, delta_per_unit, time_unit, minutes_per_round: 60.0 }
    }

    pub fn discrete(rate_per_unit: f64, time_unit: TimeUnit) -> Self {
        DiscountSpec { form: DiscountForm::Discrete, delta_per_unit: rate_per_unit, time_unit, minutes_per_round: 60.0 }
    }

    /// Continuous per-minute rate derived from an annual rate in basis points.
    pub fn from_annual_bps(bps: f64) -> Self {
        let yearly = annual_bps_to_continuous(bps);
        DiscountSpec::continuous(yearly / MINUTES_PER_YEAR, TimeUnit::Minute)
    }

    pub fn with_minutes_per_round(mut self, minutes: f64) -> Self {
        self.minutes_per_round = minutes;
        self
    }

    pub fn validate(&self) -> Result<(), FairnessError> {
        if !self.delta_per_unit.is_finite() || self.delta_per_unit < 0.0 {
            return Err(FairnessError::NegativeRate(self.delta_per_unit));
        }
        if !self.minutes_per_round.is_finite() || self.minutes_per_round <= 0.0 {
            return Err(FairnessError::BadRoundLength(self.minutes_per_round));
        }
        Ok(())
    }

    /// Elapsed time of `round` expressed in this spec's unit.
    pub fn round_time(&self, round: u64) -> f64 {
        let minutes = round as f64 * self.minutes_per_round;
        match self.time_unit {
            TimeUnit::Year => minutes / MINUTES_PER_YEAR,
            TimeUnit::Hour => minutes / MINUTES_PER_HOUR,
            TimeUnit::Minute => minutes,
            TimeUnit::Round => round as f64,
        }
    }

    /// Discount factor at time `t` measured in this spec's unit.
    pub fn eta(&self, t: f64) -> f64 {
        match self.form {
            DiscountForm::Continuous => (-t * self.delta_per_unit).exp(),
            DiscountForm::Discrete => (1.0 + self.delta_per_unit).powf(-t),
        }
    }

    pub fn eta_round(&self, round: u64) -> f64 {
        self.eta(self.round_time(round))
    }
}

pub fn eta(t: f64, spec: &DiscountSpec) -> f64 {
    spec.eta(t)
}

/// Continuous annual rate equivalent to a simple annual rate of `bps`.
pub fn annual_bps_to_continuous(bps: f64) -> f64 {
    (bps / 10_000.0).ln_1p()
}

/// Converts a continuous annual rate to an hourly or per-minute rate.
pub fn rescale_rate(delta_per_year: f64, target: TimeUnit) -> Result<f64, FairnessError> {
    match target {
        TimeUnit::Year => Ok(delta_per_year),
        TimeUnit::Hour => Ok(delta_per_year / (365.0 * 24.0)),
        TimeUnit::Minute => Ok(delta_per_year / MINUTES_PER_YEAR),
        TimeUnit::Round => Err(FairnessError::UnsupportedUnit(TimeUnit::Round)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetPresentCost {
    pub party: usize,
    pub chi: f64,
}

/// `χ_i = Σ_t (d_{i,t} − r_{i,t})·η(t)` in coins.
pub fn npc(schedule: &Schedule, party: usize, spec: &DiscountSpec) -> Result<NetPresentCost, FairnessError> {
    spec.validate()?;
    if party == 0 || party > schedule.n {
        return Err(ScheduleError::InvalidParty { party, n: schedule.n }.into());
    }
    let q = schedule.q as f64;
    let chi = schedule
        .events_of(party)
        .map(|e| -(e.signed_q() as f64) * q * spec.eta_round(e.round))
        .sum();
    Ok(NetPresentCost { party, chi })
}

/// Costs of parties `1..=n`, in party order.
pub fn npc_all(schedule: &Schedule, spec: &DiscountSpec) -> Result<Vec<f64>, FairnessError> {
    (1..=schedule.n).map(|p| npc(schedule, p, spec).map(|c| c.chi)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Fair { max_gap: f64 },
    Unfair { max_gap: f64, pair: (usize, usize), spec: DiscountSpec },
}

impl Verdict {
    pub fn is_fair(&self) -> bool {
        matches!(self, Verdict::Fair { .. })
    }

    pub fn max_gap(&self) -> f64 {
        match self {
            Verdict::Fair { max_gap } | Verdict::Unfair { max_gap, .. } => *max_gap,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Fair { .. } => "Fair",
            Verdict::Unfair { .. } => "Unfair",
        }
    }
}

/// Compares every pair of honest parties under every spec. A pair violates
/// fairness when `|χ_i − χ_j| > tol·max(1, |χ_i|)`. The reported witness is
/// the first violating pair (in index order) under the spec with the largest
/// gap.
pub fn fairness_check(schedule: &Schedule, specs: &[DiscountSpec], tol: f64) -> Result<Verdict, FairnessError> {
    let honest = schedule.honest_parties();
    if honest.len() < 2 {
        return Err(FairnessError::InsufficientParties(honest.len()));
    }
    if specs.is_empty() {
        return Err(FairnessError::NoSpecs);
    }
    let mut max_gap = 0.0f64;
    let mut witness: Option<(f64, (usize, usize), DiscountSpec)> = None;
    for spec in specs {
        let chi: Vec<f64> = honest
            .iter()
            .map(|&p| npc(schedule, p, spec).map(|c| c.chi))
            .collect::<Result<_, _>>()?;
        let mut spec_gap = 0.0f64;
        let mut first_violation = None;
        for a in 0..honest.len() {
            for b in a + 1..honest.len() {
                let gap = (chi[a] - chi[b]).abs();
                spec_gap = spec_gap.max(gap);
                if first_violation.is_none() && gap > tol * chi[a].abs().max(1.0) {
                    first_violation = Some((honest[a], honest[b]));
                }
            }
        }
        max_gap = max_gap.max(spec_gap);
        if let Some(pair) = first_violation {
            if witness.as_ref().map_or(true, |(g, _, _)| spec_gap > *g) {
                witness = Some((spec_gap, pair, *spec));
            }
        }
    }
    Ok(match witness {
        None => Verdict::Fair { max_gap },
        Some((_, pair, spec)) => Verdict::Unfair { max_gap, pair, spec },
    })
}

/// Closed-form ladder costs of the honest run, party order `1..=n`.
pub fn ladder_closed_form(n: usize, q: f64, spec: &DiscountSpec) -> Vec<f64> {
    let eta = |t: usize| spec.eta_round(t as u64);
    (1..=n)
        .map(|i| {
            if i == n {
                (n - 1) as f64 * q * (eta(2) - eta(2 * n))
            } else {
                q * eta(1) + (i - 1) as f64 * q * eta(n - i + 2) - i as f64 * q * eta(n + i)
            }
        })
        .collect()
}

/// Cost of an honest multi-lock party refunded at round `t` while `s`
/// others withhold their witness and are split at round `t+1`.
pub fn multilock_closed_form(n: usize, q: f64, spec: &DiscountSpec, t: u64, s: usize) -> Result<f64, FairnessError> {
    if s > n.saturating_sub(1) {
        return Err(FairnessError::TooManyCorrupted(s, n - 1));
    }
    let d = (n - 1) as f64 * q;
    Ok(d * spec.eta_round(1) - d * spec.eta_round(t) - s as f64 * q * spec.eta_round(t + 1))
}

/// Back-of-envelope endpoint costs of a 55-party ladder run with hourly
/// rounds, using the minute rate `delta_minute`: the first party's coins are
/// out from minute 60 to minute 300, the last party's 54 coins from minute
/// 120 to minute 6600.
pub fn ladder_endpoint_estimate(d: f64, delta_minute: f64) -> (f64, f64) {
    let e = |m: f64| (-delta_minute * m).exp();
    (d * (e(60.0) - e(300.0)), 54.0 * d * (e(120.0) - e(6600.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSummary {
    pub form: DiscountForm,
    pub delta: f64,
    pub unit: TimeUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub protocol: String,
    pub n: usize,
    pub stages: usize,
    pub q: u64,
    pub discount: DiscountSummary,
    pub per_party_chi: Vec<f64>,
    pub verdict: Verdict,
    pub max_gap: f64,
}

impl FairnessReport {
    /// Costs under `spec`; the verdict also considers the extra `grid` specs.
    pub fn build(schedule: &Schedule, spec: &DiscountSpec, grid: &[DiscountSpec], tol: f64) -> Result<Self, FairnessError> {
        let per_party_chi = npc_all(schedule, spec)?;
        let mut specs = vec![*spec];
        specs.extend_from_slice(grid);
        let verdict = fairness_check(schedule, &specs, tol)?;
        Ok(FairnessReport {
            protocol: schedule.protocol_label().to_string(),
            n: schedule.n,
            stages: schedule.stages(),
            q: schedule.q,
            discount: DiscountSummary { form: spec.form, delta: spec.delta_per_unit, unit: spec.time_unit },
            per_party_chi,
            max_gap: verdict.max_gap(),
            verdict,
        })
    }
}

/// Log-spaced continuous per-round rates from `lo` to `hi`, inclusive.
pub fn rate_grid(lo: f64, hi: f64, points: usize, minutes_per_round: f64) -> Vec<DiscountSpec> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| {
            let f = if points == 1 { 0.0 } else { k as f64 / (points - 1) as f64 };
            DiscountSpec::continuous((a + f * (b - a)).exp(), TimeUnit::Minute).with_minutes_per_round(minutes_per_round)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{generate_schedule, CashFlow, ProtocolKind, ScenarioParams};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rate_conversions() {
        assert!(close(annual_bps_to_continuous(238.0), 0.0235, 1e-4));
        assert_eq!(annual_bps_to_continuous(0.0), 0.0);
        assert!(close(annual_bps_to_continuous(525.0), 1.0525f64.ln(), 1e-15));
        assert!(close(rescale_rate(0.0235, TimeUnit::Minute).unwrap(), 4.47e-8, 1e-10));
        assert!(close(rescale_rate(0.0235, TimeUnit::Hour).unwrap(), 2.68e-6, 1e-8));
        assert_eq!(rescale_rate(0.0, TimeUnit::Hour).unwrap(), 0.0);
        assert!(rescale_rate(0.1, TimeUnit::Round).is_err());
    }

    #[test]
    fn eta_values() {
        let s = DiscountSpec::continuous(0.3, TimeUnit::Hour);
        assert_eq!(s.eta(0.0), 1.0);
        let d = DiscountSpec::discrete(0.5, TimeUnit::Hour);
        assert!(close(d.eta(1.0), 0.6667, 1e-4));
        let m = DiscountSpec::continuous(4.47e-8, TimeUnit::Minute);
        assert!(close(m.eta(60.0), 0.99999732, 1e-8));
    }

    #[test]
    fn toy_example() {
        let s = Schedule::from_flows(
            2,
            50,
            [CashFlow::deposit(1, 0, 2), CashFlow::refund(1, 1, 1), CashFlow::refund(1, 2, 1)],
        );
        let spec = DiscountSpec::discrete(0.5, TimeUnit::Hour);
        let chi = npc(&s, 1, &spec).unwrap().chi;
        assert!(close(chi, 44.5, 0.1), "{chi}");
    }

    #[test]
    fn ladder_closed_form_matches_generator() {
        let spec = DiscountSpec::continuous(0.01, TimeUnit::Round);
        for n in 2..=8 {
            let s = generate_schedule(&ScenarioParams::new(ProtocolKind::Ladder, n)).unwrap();
            let direct = npc_all(&s, &spec).unwrap();
            let closed = ladder_closed_form(n, 1.0, &spec);
            for (a, b) in direct.iter().zip(&closed) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "n={n}");
            }
        }
    }

    #[test]
    fn multilock_closed_form_with_compensation() {
        let spec = DiscountSpec::continuous(0.0, TimeUnit::Round);
        assert_eq!(multilock_closed_form(3, 1.0, &spec, 2, 1).unwrap(), -1.0);
        assert_eq!(multilock_closed_form(3, 1.0, &spec, 2, 0).unwrap(), 0.0);
        assert!(multilock_closed_form(3, 1.0, &spec, 2, 3).is_err());
    }

    #[test]
    fn ladder_is_unfair_with_witness_one_two() {
        let s = generate_schedule(&ScenarioParams::new(ProtocolKind::Ladder, 4)).unwrap();
        let specs = [DiscountSpec::continuous(0.01, TimeUnit::Round)];
        match fairness_check(&s, &specs, DEFAULT_TOLERANCE).unwrap() {
            Verdict::Unfair { pair, .. } => assert_eq!(pair, (1, 2)),
            v => panic!("expected unfair, got {v:?}"),
        }
        let zero = [DiscountSpec::continuous(0.0, TimeUnit::Round)];
        assert!(fairness_check(&s, &zero, DEFAULT_TOLERANCE).unwrap().is_fair());
    }

    #[test]
    fn multilock_is_fair() {
        let s = generate_schedule(&ScenarioParams::new(ProtocolKind::MultiLock, 5)).unwrap();
        let grid = rate_grid(1e-9, 1e-2, 20, 60.0);
        assert!(fairness_check(&s, &grid, DEFAULT_TOLERANCE).unwrap().is_fair());
    }

    #[test]
    fn insufficient_parties() {
        let s = generate_schedule(&ScenarioParams::new(ProtocolKind::Ladder, 2).with_abort(2, 1)).unwrap();
        let specs = [DiscountSpec::continuous(0.01, TimeUnit::Round)];
        assert_eq!(fairness_check(&s, &specs, 1e-9), Err(FairnessError::InsufficientParties(1)));
    }

    #[test]
    fn endpoint_estimate_first_party() {
        let delta = annual_bps_to_continuous(238.0) / MINUTES_PER_YEAR;
        let (first, last) = ladder_endpoint_estimate(10_000.0, delta);
        assert!(close(first, 0.11, 0.02), "{first}");
        assert!(last > first);
    }

    #[test]
    fn report_serializes() {
        let s = generate_schedule(&ScenarioParams::new(ProtocolKind::MultiLock, 3).with_q(10_000)).unwrap();
        let r = FairnessReport::build(&s, &DiscountSpec::from_annual_bps(238.0), &[], 1e-9).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["verdict"]["verdict"], "fair");
        assert_eq!(json["discount"]["unit"], "minute");
        assert_eq!(json["per_party_chi"].as_array().unwrap().len(), 3);
    }
}
