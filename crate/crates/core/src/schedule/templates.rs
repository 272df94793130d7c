//! Flow templates for each protocol family.
//!
//! Ladder and multi-lock follow the protocol descriptions directly. The
//! locked, planted and amortized ladders are reconstructions for general n
//! that reproduce the published 4-party traces and 55-party aggregates.
//! Parties strictly between P_1 and P_n interpolate linearly between the
//! two endpoint templates.

use super::{Abort, CashFlow, ProtocolKind, ScenarioParams, Schedule, ScheduleError};

pub fn generate_schedule(params: &ScenarioParams) -> Result<Schedule, ScheduleError> {
    params.validate()?;
    let n = params.n;
    let flows = match params.protocol {
        ProtocolKind::Ladder | ProtocolKind::CompactLadder => ladder(n, params.abort),
        ProtocolKind::MultiLock | ProtocolKind::CompactMultiLock | ProtocolKind::InsuredMpc => {
            multilock(n, params.abort.as_slice())
        }
        ProtocolKind::LockedLadder => {
            reject_abort(params)?;
            locked_ladder(n, params.stages)
        }
        ProtocolKind::PlantedLadder | ProtocolKind::CompactPlantedLadder => {
            reject_abort(params)?;
            planted_ladder(n, params.stages)
        }
        ProtocolKind::AmortizedLadder => {
            reject_abort(params)?;
            amortized_ladder(n, params.executions)
        }
    };
    let aborted = params.abort.iter().map(|a| a.party).collect();
    Ok(Schedule::from_flows(n, params.q, flows)
        .with_params(params.clone())
        .with_aborted(aborted))
}

/// Same as [`generate_schedule`], but requires an abort scenario.
pub fn apply_abort(params: &ScenarioParams) -> Result<Schedule, ScheduleError> {
    if params.abort.is_none() {
        return Err(ScheduleError::MissingAbort);
    }
    generate_schedule(params)
}

/// Multi-lock family schedule with several deviating parties. Each abort is
/// applied independently: a party that quits at round 1 never locks, one
/// that quits at round 2 never redeems.
pub fn multilock_with_aborts(
    protocol: ProtocolKind,
    n: usize,
    q: u64,
    aborts: &[Abort],
) -> Result<Schedule, ScheduleError> {
    if !protocol.is_multilock_family() {
        return Err(ScheduleError::UnsupportedAbort(protocol));
    }
    let params = ScenarioParams::new(protocol, n).with_q(q);
    params.validate()?;
    for a in aborts {
        if a.party == 0 || a.party > n {
            return Err(ScheduleError::InvalidParty { party: a.party, n });
        }
    }
    let aborted = aborts.iter().map(|a| a.party).collect();
    Ok(Schedule::from_flows(n, q, multilock(n, aborts))
        .with_params(params)
        .with_aborted(aborted))
}

/// Last round with any event in the honest run.
pub fn horizon(protocol: ProtocolKind, n: usize, stages: usize) -> u64 {
    let n = n as u64;
    let r = stages as u64;
    match protocol {
        ProtocolKind::Ladder | ProtocolKind::CompactLadder => 2 * n,
        ProtocolKind::MultiLock
        | ProtocolKind::CompactMultiLock
        | ProtocolKind::InsuredMpc
        | ProtocolKind::AmortizedLadder => 2,
        ProtocolKind::LockedLadder => r * (3 * n - 2) + (r - 1) * (2 * n - 1) + 2 * n,
        ProtocolKind::PlantedLadder | ProtocolKind::CompactPlantedLadder => 2 * (r + 1) * n,
    }
}

fn reject_abort(params: &ScenarioParams) -> Result<(), ScheduleError> {
    match params.abort {
        Some(_) => Err(ScheduleError::UnsupportedAbort(params.protocol)),
        None => Ok(()),
    }
}

/// `a1 + (i-1)(an-a1)/(n-1)` rounded half up; exact at both endpoints.
pub(crate) fn interp(i: usize, a1: i64, an: i64, n: usize) -> i64 {
    let den = (n - 1) as i64;
    let num = a1 * den + (i as i64 - 1) * (an - a1);
    (2 * num + den).div_euclid(2 * den)
}

fn units(x: i64) -> u64 {
    u64::try_from(x).expect("template amounts are positive")
}

struct Lock {
    sender: usize,
    receiver: usize,
    amount: u64,
    timeout: u64,
}

fn ladder(n: usize, abort: Option<Abort>) -> Vec<CashFlow> {
    let nn = n as u64;
    let active = |party: usize, round: u64| abort.map_or(true, |a| a.party != party || round < a.round);

    // Deposit plan, grouped by round: the roof at round 1, then the ladder
    // from the top rung P_n -> P_{n-1} down to P_2 -> P_1.
    let mut plan: Vec<(u64, Vec<Lock>)> = Vec::new();
    plan.push((
        1,
        (1..n)
            .map(|j| Lock { sender: j, receiver: n, amount: 1, timeout: 2 * nn })
            .collect(),
    ));
    for i in (2..=n).rev() {
        let round = nn - i as u64 + 2;
        let lock = Lock { sender: i, receiver: i - 1, amount: (i - 1) as u64, timeout: nn + i as u64 - 1 };
        plan.push((round, vec![lock]));
    }

    let mut flows = Vec::new();
    let mut made: Vec<Lock> = Vec::new();
    let mut complete = true;
    for (round, locks) in plan {
        for lock in locks {
            if active(lock.sender, round) {
                flows.push(CashFlow::deposit(lock.sender, round, lock.amount));
                made.push(lock);
            } else {
                complete = false;
            }
        }
        if !complete {
            break;
        }
    }

    // Claims in order P_1, ..., P_n; each needs every earlier claim to have
    // been made, since it reveals the witnesses the next claim depends on.
    let mut claimed = vec![false; made.len()];
    if complete {
        for i in 1..=n {
            let round = if i < n { nn + i as u64 } else { 2 * nn };
            if !active(i, round) {
                break;
            }
            for (k, lock) in made.iter().enumerate() {
                if lock.receiver == i {
                    claimed[k] = true;
                    flows.push(CashFlow::refund(i, round, lock.amount));
                }
            }
        }
    }
    for (k, lock) in made.iter().enumerate() {
        if !claimed[k] {
            flows.push(CashFlow::refund(lock.sender, lock.timeout + 1, lock.amount));
        }
    }
    flows
}

fn multilock(n: usize, aborts: &[Abort]) -> Vec<CashFlow> {
    let quits_at = |p: usize| {
        aborts
            .iter()
            .filter(|a| a.party == p)
            .map(|a| a.round)
            .min()
            .unwrap_or(u64::MAX)
    };
    let d = (n - 1) as u64;
    let mut flows = Vec::new();
    let lockers: Vec<usize> = (1..=n).filter(|&p| quits_at(p) > 1).collect();
    if lockers.len() < n {
        for p in lockers {
            flows.push(CashFlow::deposit(p, 1, d));
            flows.push(CashFlow::refund(p, 2, d));
        }
        return flows;
    }
    for p in 1..=n {
        flows.push(CashFlow::deposit(p, 1, d));
    }
    let silent: Vec<usize> = (1..=n).filter(|&p| quits_at(p) <= 2).collect();
    for p in (1..=n).filter(|p| !silent.contains(p)) {
        flows.push(CashFlow::refund(p, 2, d));
    }
    for p in 1..=n {
        let owed = silent.iter().filter(|&&s| s != p).count() as u64;
        if owed > 0 {
            flows.push(CashFlow::refund(p, 3, owed));
        }
    }
    flows
}

fn amortized_ladder(n: usize, executions: usize) -> Vec<CashFlow> {
    let e = executions as i64;
    (1..=n)
        .flat_map(|i| {
            let a = units(e * interp(i, n as i64, 2 * (n as i64 - 1), n));
            [CashFlow::deposit(i, 1, a), CashFlow::refund(i, 2, a)]
        })
        .collect()
}

/// Stage `s` deposits occupy rounds `s*D + 1 ..= (s+1)*D` with `D = 3n-2`;
/// claim sub-phase `s` starts at `r*D + s*(2n-1)`.
fn locked_ladder(n: usize, stages: usize) -> Vec<CashFlow> {
    let nn = n as u64;
    let d = 3 * nn - 2;
    let c = stages as u64 * d;
    let per_stage = |i: usize| interp(i, n as i64, 2 * (n as i64 - 1), n);
    let mut flows = Vec::new();
    for s in 0..stages as u64 {
        let o = s * d;
        flows.push(CashFlow::deposit(n, o + 2, 1));
        flows.push(CashFlow::deposit(n, o + 3, nn - 1));
        for k in 1..nn.saturating_sub(2) {
            flows.push(CashFlow::deposit(n, o + 3 * k + 2, 1));
        }
        if n >= 3 {
            flows.push(CashFlow::deposit(n, o + d - 1, 1));
        }
        for i in 1..n {
            let ii = i as u64;
            flows.push(CashFlow::deposit(i, o + 1, 1));
            if i >= 2 {
                flows.push(CashFlow::deposit(i, o + 3 * (nn - ii) + 3, ii - 1));
            }
            flows.push(CashFlow::deposit(i, o + d, units(per_stage(i) - i as i64)));
        }
    }
    for s in 0..stages as u64 {
        let start = c + s * (2 * nn - 1);
        for k in 1..nn {
            flows.push(CashFlow::refund(n, start + 2 * k, 1));
        }
        flows.push(CashFlow::refund(n, start + 2 * nn, nn - 1));
        for i in 1..n {
            let ii = i as u64;
            let late = u64::from(s >= 1);
            flows.push(CashFlow::refund(i, start + 2 * ii - 1 + late, units(per_stage(i) - i as i64)));
            flows.push(CashFlow::refund(i, start + 2 * ii + 1, ii));
        }
    }
    flows
}

/// `r+1` deposit blocks of `n` rounds followed by `r+1` claim blocks.
fn planted_ladder(n: usize, stages: usize) -> Vec<CashFlow> {
    let nn = n as i64;
    let r = stages as i64;
    let blocks = (r + 1) as usize;
    let first_dep: Vec<i64> = (0..=r).map(|k| if k == 0 { r + 1 } else { (r + 1 - k) * nn }).collect();
    let first_wd: Vec<i64> = (0..=r).map(|k| k * nn + 1).collect();
    let last_dep: Vec<i64> = (0..=r).map(|k| (r + 1 - k) * nn - 1).collect();
    let last_wd: Vec<i64> = (0..=r).map(|k| if k < r { (k + 1) * nn } else { (r + 1) * nn - (r + 1) }).collect();
    let total_1: i64 = first_dep.iter().sum();
    let total_n: i64 = last_dep.iter().sum();

    let chunks = |i: usize, a: &[i64], b: &[i64], total: i64| -> Vec<i64> {
        let mut v: Vec<i64> = (0..blocks).map(|k| interp(i, a[k], b[k], n)).collect();
        let head: i64 = v[..blocks - 1].iter().sum();
        v[blocks - 1] = total - head;
        v
    };

    let mut flows = Vec::new();
    for i in 1..=n {
        let total = interp(i, total_1, total_n, n);
        let dep = chunks(i, &first_dep, &last_dep, total);
        let wd = chunks(i, &first_wd, &last_wd, total);
        let dep_offset = interp(i, 1, 2, n) as u64;
        let wd_offset = i as u64;
        for k in 0..blocks {
            let kk = k as u64;
            flows.push(CashFlow::deposit(i, kk * n as u64 + dep_offset, units(dep[k])));
            flows.push(CashFlow::refund(i, (blocks as u64 + kk) * n as u64 + wd_offset, units(wd[k])));
        }
    }
    flows
}
