//! Executable escrow functionalities over one shared ledger.
//!
//! The ledger owns a global round clock, per-party wallets and an escrow
//! pool. Claim-or-refund sessions move `d` coins from a sender to a receiver
//! who presents a satisfying witness by the timeout, and back to the sender
//! one round after it. Multi-lock sessions lock `d` coins from each of `n`
//! parties atomically; a party redeems its deposit by opening its predicate,
//! and every deposit still locked one round after the timeout is split evenly
//! among the other parties.

pub mod adversary;
mod replay;

pub use replay::{ladder_secret, replay_ladder};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schedule::{CashFlow, FlowKind, Schedule};

pub type PartyId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EscrowError {
    #[error("a deposit from P{sender} to P{receiver} already exists in {sid}/{ssid}")]
    DuplicateDeposit { sid: String, ssid: String, sender: PartyId, receiver: PartyId },
    #[error("session {sid}/{ssid} already exists")]
    DuplicateSession { sid: String, ssid: String },
    #[error("no session with id {0}")]
    UnknownSession(usize),
    #[error("witness does not satisfy the predicate")]
    BadWitness,
    #[error("round {round} is past the timeout {timeout}")]
    Expired { round: u64, timeout: u64 },
    #[error("round {round} is not after the timeout {timeout}")]
    NotYetRefundable { round: u64, timeout: u64 },
    #[error("session {0} is already closed")]
    AlreadyClosed(usize),
    #[error("P{0} is not the receiver of this deposit")]
    NotReceiver(PartyId),
    #[error("P{party} needs {needed} coins but holds {available}")]
    InsufficientFunds { party: PartyId, needed: u64, available: u64 },
    #[error("amounts must be positive")]
    ZeroAmount,
    #[error("P{0} is not a member of this session")]
    NotMember(PartyId),
    #[error("P{0} has already locked")]
    AlreadyLocked(PartyId),
    #[error("P{0} has already redeemed")]
    AlreadyRedeemed(PartyId),
    #[error("P{0} holds no locked deposit")]
    NotLocked(PartyId),
    #[error("operation not allowed while the session is {0}")]
    WrongPhase(&'static str),
    #[error("invalid terms: {0}")]
    InvalidTerms(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

/// Boolean predicate over witness bytes. Two circuits are equal when their
/// labels are equal.
#[derive(Clone)]
pub struct Circuit {
    label: String,
    f: Arc<dyn Fn(&[u8]) -> bool + Send + Sync>,
}

impl Circuit {
    pub fn new(label: impl Into<String>, f: impl Fn(&[u8]) -> bool + Send + Sync + 'static) -> Self {
        Circuit { label: label.into(), f: Arc::new(f) }
    }

    /// Accepts exactly the preimages of `digest` under SHA-256.
    pub fn sha256_preimage(digest: [u8; 32]) -> Self {
        Circuit::new(format!("sha256:{}", hex::encode(digest)), move |w| sha256(w) == digest)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, witness: &[u8]) -> bool {
        (self.f)(witness)
    }
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label
    }
}

impl Eq for Circuit {}

impl fmt::Debug for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Circuit({})", self.label)
    }
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrState {
    Deposited,
    Claimed,
    Refunded,
}

#[derive(Debug, Clone)]
pub struct CrSession {
    pub id: usize,
    pub sid: String,
    pub ssid: String,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub predicate: Circuit,
    pub timeout: u64,
    pub amount: u64,
    pub state: CrState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlTerms {
    pub deposit: u64,
    pub predicates: Vec<Circuit>,
    pub timeout: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MlPartyState {
    Unlocked,
    Locked,
    Redeemed,
    /// The deposit was paid out to the other parties.
    Compensated,
    /// The deposit was returned when the lock phase aborted.
    Refunded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MlPhase {
    Lock,
    Redeem,
    Aborted,
    Closed,
}

impl MlPhase {
    fn as_str(self) -> &'static str {
        match self {
            MlPhase::Lock => "lock",
            MlPhase::Redeem => "redeem",
            MlPhase::Aborted => "aborted",
            MlPhase::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlSession {
    pub id: usize,
    pub sid: String,
    pub ssid: String,
    pub parties: Vec<PartyId>,
    pub phase: MlPhase,
    pub terms: Vec<Option<MlTerms>>,
    pub states: Vec<MlPartyState>,
}

impl MlSession {
    fn position(&self, party: PartyId) -> Result<usize, EscrowError> {
        self.parties.iter().position(|&p| p == party).ok_or(EscrowError::NotMember(party))
    }

    /// The agreed terms once the lock phase succeeded.
    pub fn agreed(&self) -> Option<&MlTerms> {
        match self.phase {
            MlPhase::Redeem | MlPhase::Closed => self.terms[0].as_ref(),
            _ => None,
        }
    }

    pub fn state_of(&self, party: PartyId) -> Option<MlPartyState> {
        self.position(party).ok().map(|k| self.states[k])
    }

    /// Coins of this session currently held in escrow.
    pub fn escrowed(&self) -> u64 {
        self.states
            .iter()
            .zip(&self.terms)
            .filter(|(s, _)| **s == MlPartyState::Locked)
            .map(|(_, t)| t.as_ref().map_or(0, |t| t.deposit))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    Missing(Vec<PartyId>),
    MismatchedTerms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockOutcome {
    Locked,
    Aborted { reason: AbortReason, refunded: Vec<(PartyId, u64)> },
}

/// One state transition, for trace export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub round: u64,
    pub session: String,
    pub kind: String,
    pub party: PartyId,
    pub amount: u64,
    pub new_state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealedWitness {
    pub round: u64,
    pub session: String,
    pub party: PartyId,
    pub witness: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationViolation {
    pub round: u64,
    pub deposits: u64,
    pub refunds: u64,
}

/// First round at which cumulative refunds exceed cumulative deposits.
pub fn check_conservation(entries: &[CashFlow]) -> Result<(), ConservationViolation> {
    let mut per_round: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for e in entries {
        let slot = per_round.entry(e.round).or_default();
        match e.kind {
            FlowKind::Deposit => slot.0 += e.amount_q,
            FlowKind::Refund => slot.1 += e.amount_q,
        }
    }
    let (mut deposits, mut refunds) = (0u64, 0u64);
    for (round, (d, r)) in per_round {
        deposits += d;
        refunds += r;
        if refunds > deposits {
            return Err(ConservationViolation { round, deposits, refunds });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    round: u64,
    wallets: BTreeMap<PartyId, u64>,
    pool: u64,
    minted: u64,
    /// Coin movements with `amount_q` in coins.
    entries: Vec<CashFlow>,
    transitions: Vec<Transition>,
    revealed: Vec<RevealedWitness>,
    cr: Vec<CrSession>,
    cr_keys: HashSet<(String, String, PartyId, PartyId)>,
    ml: Vec<MlSession>,
    ml_keys: HashSet<(String, String)>,
}

impl Ledger {
    pub fn new() -> Self {
        Ledger::default()
    }

    pub fn with_wallets(wallets: impl IntoIterator<Item = (PartyId, u64)>) -> Self {
        let mut l = Ledger::new();
        for (p, c) in wallets {
            l.fund(p, c);
        }
        l
    }

    /// Credits a wallet from outside the system.
    pub fn fund(&mut self, party: PartyId, coins: u64) {
        *self.wallets.entry(party).or_insert(0) += coins;
        self.minted += coins;
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn balance(&self, party: PartyId) -> u64 {
        self.wallets.get(&party).copied().unwrap_or(0)
    }

    pub fn pool(&self) -> u64 {
        self.pool
    }

    pub fn entries(&self) -> &[CashFlow] {
        &self.entries
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn revealed_witnesses(&self) -> &[RevealedWitness] {
        &self.revealed
    }

    pub fn cr_session(&self, id: usize) -> Result<&CrSession, EscrowError> {
        self.cr.get(id).ok_or(EscrowError::UnknownSession(id))
    }

    pub fn cr_sessions(&self) -> &[CrSession] {
        &self.cr
    }

    pub fn ml_session(&self, id: usize) -> Result<&MlSession, EscrowError> {
        self.ml.get(id).ok_or(EscrowError::UnknownSession(id))
    }

    pub fn ml_sessions(&self) -> &[MlSession] {
        &self.ml
    }

    fn take(&mut self, party: PartyId, amount: u64) -> Result<(), EscrowError> {
        let available = self.balance(party);
        if available < amount {
            return Err(EscrowError::InsufficientFunds { party, needed: amount, available });
        }
        *self.wallets.entry(party).or_insert(0) -= amount;
        self.pool += amount;
        self.entries.push(CashFlow::deposit(party, self.round, amount));
        Ok(())
    }

    fn give(&mut self, party: PartyId, amount: u64) {
        debug_assert!(self.pool >= amount, "escrow pool cannot go negative");
        self.pool -= amount;
        *self.wallets.entry(party).or_insert(0) += amount;
        self.entries.push(CashFlow::refund(party, self.round, amount));
    }

    fn log(&mut self, session: String, kind: &str, party: PartyId, amount: u64, new_state: &str) {
        self.transitions.push(Transition {
            round: self.round,
            session,
            kind: kind.to_string(),
            party,
            amount,
            new_state: new_state.to_string(),
        });
    }

    pub fn cr_deposit(
        &mut self,
        sid: &str,
        ssid: &str,
        sender: PartyId,
        receiver: PartyId,
        predicate: Circuit,
        timeout: u64,
        amount: u64,
    ) -> Result<usize, EscrowError> {
        if amount == 0 {
            return Err(EscrowError::ZeroAmount);
        }
        let key = (sid.to_string(), ssid.to_string(), sender, receiver);
        if self.cr_keys.contains(&key) {
            return Err(EscrowError::DuplicateDeposit { sid: key.0, ssid: key.1, sender, receiver });
        }
        if self.round > timeout {
            return Err(EscrowError::Expired { round: self.round, timeout });
        }
        self.take(sender, amount)?;
        self.cr_keys.insert(key);
        let id = self.cr.len();
        self.cr.push(CrSession {
            id,
            sid: sid.to_string(),
            ssid: ssid.to_string(),
            sender,
            receiver,
            predicate,
            timeout,
            amount,
            state: CrState::Deposited,
        });
        self.log(format!("cr:{id}"), "deposit", sender, amount, "Deposited");
        Ok(id)
    }

    pub fn cr_claim(&mut self, id: usize, claimant: PartyId, witness: &[u8]) -> Result<u64, EscrowError> {
        let round = self.round;
        let s = self.cr.get(id).ok_or(EscrowError::UnknownSession(id))?;
        if s.state != CrState::Deposited {
            return Err(EscrowError::AlreadyClosed(id));
        }
        if claimant != s.receiver {
            return Err(EscrowError::NotReceiver(claimant));
        }
        if round > s.timeout {
            return Err(EscrowError::Expired { round, timeout: s.timeout });
        }
        if !s.predicate.eval(witness) {
            return Err(EscrowError::BadWitness);
        }
        let amount = s.amount;
        self.cr[id].state = CrState::Claimed;
        self.give(claimant, amount);
        self.revealed.push(RevealedWitness { round, session: format!("cr:{id}"), party: claimant, witness: witness.to_vec() });
        self.log(format!("cr:{id}"), "claim", claimant, amount, "Claimed");
        Ok(amount)
    }

    pub fn cr_refund(&mut self, id: usize) -> Result<u64, EscrowError> {
        let s = self.cr.get(id).ok_or(EscrowError::UnknownSession(id))?;
        if s.state != CrState::Deposited {
            return Err(EscrowError::AlreadyClosed(id));
        }
        if self.round <= s.timeout {
            return Err(EscrowError::NotYetRefundable { round: self.round, timeout: s.timeout });
        }
        let (sender, amount) = (s.sender, s.amount);
        self.cr[id].state = CrState::Refunded;
        self.give(sender, amount);
        self.log(format!("cr:{id}"), "refund", sender, amount, "Refunded");
        Ok(amount)
    }

    pub fn ml_open(&mut self, sid: &str, ssid: &str, parties: Vec<PartyId>) -> Result<usize, EscrowError> {
        let key = (sid.to_string(), ssid.to_string());
        if self.ml_keys.contains(&key) {
            return Err(EscrowError::DuplicateSession { sid: key.0, ssid: key.1 });
        }
        let distinct: HashSet<_> = parties.iter().collect();
        if parties.len() < 2 || distinct.len() != parties.len() {
            return Err(EscrowError::InvalidTerms("a multi-lock needs at least two distinct parties".into()));
        }
        self.ml_keys.insert(key);
        let id = self.ml.len();
        let n = parties.len();
        self.ml.push(MlSession {
            id,
            sid: sid.to_string(),
            ssid: ssid.to_string(),
            parties,
            phase: MlPhase::Lock,
            terms: vec![None; n],
            states: vec![MlPartyState::Unlocked; n],
        });
        Ok(id)
    }

    pub fn ml_lock(&mut self, id: usize, party: PartyId, terms: MlTerms) -> Result<(), EscrowError> {
        let s = self.ml.get(id).ok_or(EscrowError::UnknownSession(id))?;
        if s.phase != MlPhase::Lock {
            return Err(EscrowError::WrongPhase(s.phase.as_str()));
        }
        let k = s.position(party)?;
        if s.states[k] != MlPartyState::Unlocked {
            return Err(EscrowError::AlreadyLocked(party));
        }
        let n = s.parties.len() as u64;
        if terms.deposit == 0 {
            return Err(EscrowError::ZeroAmount);
        }
        if terms.deposit % (n - 1) != 0 {
            return Err(EscrowError::InvalidTerms(format!("deposit {} is not divisible by {}", terms.deposit, n - 1)));
        }
        if terms.predicates.len() as u64 != n {
            return Err(EscrowError::InvalidTerms(format!("{} predicates for {n} parties", terms.predicates.len())));
        }
        self.take(party, terms.deposit)?;
        let amount = terms.deposit;
        let s = &mut self.ml[id];
        s.terms[k] = Some(terms);
        s.states[k] = MlPartyState::Locked;
        self.log(format!("ml:{id}"), "lock", party, amount, "Locked");
        Ok(())
    }

    /// Ends the lock phase: all members locked with identical terms, or the
    /// whole session aborts and every recorded deposit is returned.
    pub fn ml_finalize(&mut self, id: usize) -> Result<LockOutcome, EscrowError> {
        let s = self.ml.get(id).ok_or(EscrowError::UnknownSession(id))?;
        if s.phase != MlPhase::Lock {
            return Err(EscrowError::WrongPhase(s.phase.as_str()));
        }
        let missing: Vec<PartyId> = s
            .parties
            .iter()
            .zip(&s.states)
            .filter(|(_, st)| **st != MlPartyState::Locked)
            .map(|(p, _)| *p)
            .collect();
        let reason = if !missing.is_empty() {
            Some(AbortReason::Missing(missing))
        } else if s.terms.windows(2).any(|w| w[0] != w[1]) {
            Some(AbortReason::MismatchedTerms)
        } else {
            None
        };
        let Some(reason) = reason else {
            self.ml[id].phase = MlPhase::Redeem;
            let first = self.ml[id].parties[0];
            self.log(format!("ml:{id}"), "locked", first, 0, "Redeem");
            return Ok(LockOutcome::Locked);
        };
        let mut refunded = Vec::new();
        for k in 0..self.ml[id].parties.len() {
            if self.ml[id].states[k] == MlPartyState::Locked {
                let party = self.ml[id].parties[k];
                let amount = self.ml[id].terms[k].as_ref().map_or(0, |t| t.deposit);
                self.ml[id].states[k] = MlPartyState::Refunded;
                self.give(party, amount);
                self.log(format!("ml:{id}"), "abort", party, amount, "Refunded");
                refunded.push((party, amount));
            }
        }
        self.ml[id].phase = MlPhase::Aborted;
        Ok(LockOutcome::Aborted { reason, refunded })
    }

    pub fn ml_redeem(&mut self, id: usize, party: PartyId, witness: &[u8]) -> Result<u64, EscrowError> {
        let round = self.round;
        let s = self.ml.get(id).ok_or(EscrowError::UnknownSession(id))?;
        if s.phase != MlPhase::Redeem {
            return Err(EscrowError::WrongPhase(s.phase.as_str()));
        }
        let k = s.position(party)?;
        let terms = s.terms[k].as_ref().expect("redeem phase implies all terms recorded");
        match s.states[k] {
            MlPartyState::Locked => {}
            MlPartyState::Redeemed => return Err(EscrowError::AlreadyRedeemed(party)),
            _ => return Err(EscrowError::NotLocked(party)),
        }
        if round > terms.timeout {
            return Err(EscrowError::Expired { round, timeout: terms.timeout });
        }
        if !terms.predicates[k].eval(witness) {
            return Err(EscrowError::BadWitness);
        }
        let amount = terms.deposit;
        self.ml[id].states[k] = MlPartyState::Redeemed;
        self.give(party, amount);
        self.revealed.push(RevealedWitness { round, session: format!("ml:{id}"), party, witness: witness.to_vec() });
        self.log(format!("ml:{id}"), "redeem", party, amount, "Redeemed");
        Ok(amount)
    }

    fn ml_compensate(&mut self, id: usize) {
        let s = &self.ml[id];
        let Some(terms) = s.agreed() else { return };
        if s.phase != MlPhase::Redeem || self.round <= terms.timeout {
            return;
        }
        let share = terms.deposit / (s.parties.len() as u64 - 1);
        let parties = s.parties.clone();
        for k in 0..parties.len() {
            if self.ml[id].states[k] != MlPartyState::Locked {
                continue;
            }
            self.ml[id].states[k] = MlPartyState::Compensated;
            for (j, &other) in parties.iter().enumerate() {
                if j != k {
                    self.give(other, share);
                    self.log(format!("ml:{id}"), "payout", other, share, "Compensated");
                }
            }
        }
        self.ml[id].phase = MlPhase::Closed;
    }

    /// Advances the clock by one round, then runs every refund and
    /// compensation that falls due.
    pub fn tick(&mut self) {
        self.round += 1;
        let due: Vec<usize> = self
            .cr
            .iter()
            .filter(|s| s.state == CrState::Deposited && s.timeout < self.round)
            .map(|s| s.id)
            .collect();
        for id in due {
            self.cr_refund(id).expect("due refunds are valid");
        }
        for id in 0..self.ml.len() {
            self.ml_compensate(id);
        }
    }

    pub fn advance_to(&mut self, round: u64) {
        while self.round < round {
            self.tick();
        }
    }

    /// Coin conservation per round, pool accounting and wallet totals.
    pub fn invariant_check(&self) -> Result<(), EscrowError> {
        if let Err(v) = check_conservation(&self.entries) {
            return Err(EscrowError::InvariantViolation(format!(
                "refunds {} exceed deposits {} at round {}",
                v.refunds, v.deposits, v.round
            )));
        }
        let deposits: u64 = self.entries.iter().filter(|e| e.kind == FlowKind::Deposit).map(|e| e.amount_q).sum();
        let refunds: u64 = self.entries.iter().filter(|e| e.kind == FlowKind::Refund).map(|e| e.amount_q).sum();
        if deposits - refunds != self.pool {
            return Err(EscrowError::InvariantViolation(format!("pool {} differs from net deposits {}", self.pool, deposits - refunds)));
        }
        let outstanding: u64 = self.cr.iter().filter(|s| s.state == CrState::Deposited).map(|s| s.amount).sum::<u64>()
            + self.ml.iter().map(MlSession::escrowed).sum::<u64>();
        if outstanding != self.pool {
            return Err(EscrowError::InvariantViolation(format!("pool {} differs from open sessions {}", self.pool, outstanding)));
        }
        let held: u64 = self.wallets.values().sum::<u64>() + self.pool;
        if held != self.minted {
            return Err(EscrowError::InvariantViolation(format!("{held} coins exist but {} were funded", self.minted)));
        }
        Ok(())
    }

    /// Per-session exclusivity of claim-or-refund outcomes and atomicity of
    /// multi-lock lock phases, checked from the transition log.
    pub fn session_audit(&self) -> Result<(), EscrowError> {
        let mut terminal: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &self.transitions {
            if t.session.starts_with("cr:") && (t.kind == "claim" || t.kind == "refund") {
                *terminal.entry(t.session.as_str()).or_default() += 1;
            }
        }
        if let Some((s, c)) = terminal.iter().find(|(_, c)| **c > 1) {
            return Err(EscrowError::InvariantViolation(format!("session {s} closed {c} times")));
        }
        for s in &self.cr {
            let closed = terminal.contains_key(format!("cr:{}", s.id).as_str());
            if closed == (s.state == CrState::Deposited) {
                return Err(EscrowError::InvariantViolation(format!("cr:{} state {:?} disagrees with its log", s.id, s.state)));
            }
        }
        for s in &self.ml {
            let ok = match s.phase {
                MlPhase::Lock => s.states.iter().all(|st| matches!(st, MlPartyState::Unlocked | MlPartyState::Locked)),
                MlPhase::Aborted => s.states.iter().all(|st| matches!(st, MlPartyState::Unlocked | MlPartyState::Refunded)),
                MlPhase::Redeem | MlPhase::Closed => s
                    .states
                    .iter()
                    .all(|st| matches!(st, MlPartyState::Locked | MlPartyState::Redeemed | MlPartyState::Compensated)),
            };
            if !ok {
                return Err(EscrowError::InvariantViolation(format!("ml:{} is {:?} with states {:?}", s.id, s.phase, s.states)));
            }
        }
        Ok(())
    }

    /// Aggregates the ledger's coin movements into a schedule in units of `q`.
    pub fn to_schedule(&self, n: usize, q: u64) -> Result<Schedule, EscrowError> {
        let mut flows = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            if e.amount_q % q != 0 {
                return Err(EscrowError::InvalidTerms(format!("{} coins is not a multiple of q = {q}", e.amount_q)));
            }
            flows.push(CashFlow { amount_q: e.amount_q / q, ..*e });
        }
        Ok(Schedule::from_flows(n, q, flows))
    }

    /// One JSON object per line, one line per transition.
    pub fn export_trace(&self) -> String {
        self.transitions
            .iter()
            .map(|t| serde_json::to_string(t).expect("transition serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Net coin change of `party` since funding.
    pub fn net_change(&self, party: PartyId) -> i64 {
        self.entries.iter().filter(|e| e.party == party).map(CashFlow::signed_q).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secret_circuit(secret: &[u8]) -> Circuit {
        Circuit::sha256_preimage(sha256(secret))
    }

    fn ml_terms(n: usize, deposit: u64, timeout: u64) -> MlTerms {
        MlTerms {
            deposit,
            predicates: (1..=n).map(|i| secret_circuit(format!("s{i}").as_bytes())).collect(),
            timeout,
        }
    }

    #[test]
    fn claim_before_timeout() {
        let mut l = Ledger::with_wallets([(1, 3), (2, 0)]);
        l.advance_to(1);
        let id = l.cr_deposit("s", "a", 1, 2, secret_circuit(b"w"), 5, 3).unwrap();
        l.advance_to(4);
        assert_eq!(l.cr_claim(id, 2, b"nope"), Err(EscrowError::BadWitness));
        assert_eq!(l.cr_session(id).unwrap().state, CrState::Deposited);
        assert_eq!(l.cr_claim(id, 2, b"w"), Ok(3));
        assert_eq!(l.balance(2), 3);
        assert_eq!(l.cr_claim(id, 2, b"w"), Err(EscrowError::AlreadyClosed(id)));
        l.invariant_check().unwrap();
        l.session_audit().unwrap();
    }

    #[test]
    fn refund_after_timeout() {
        let mut l = Ledger::with_wallets([(1, 3)]);
        let id = l.cr_deposit("s", "a", 1, 2, secret_circuit(b"w"), 5, 3).unwrap();
        assert!(matches!(l.cr_refund(id), Err(EscrowError::NotYetRefundable { .. })));
        l.advance_to(5);
        assert_eq!(l.cr_session(id).unwrap().state, CrState::Deposited);
        l.tick();
        assert_eq!(l.cr_session(id).unwrap().state, CrState::Refunded);
        assert_eq!(l.balance(1), 3);
        assert!(l.entries().contains(&CashFlow::refund(1, 6, 3)));
        assert!(matches!(l.cr_claim(id, 2, b"w"), Err(EscrowError::AlreadyClosed(_))));
    }

    #[test]
    fn expired_claim_and_duplicates() {
        let mut l = Ledger::with_wallets([(1, 10)]);
        let id = l.cr_deposit("s", "a", 1, 2, secret_circuit(b"w"), 0, 3).unwrap();
        assert!(matches!(
            l.cr_deposit("s", "a", 1, 2, secret_circuit(b"w"), 3, 1),
            Err(EscrowError::DuplicateDeposit { .. })
        ));
        l.tick();
        assert_eq!(l.cr_session(id).unwrap().state, CrState::Refunded);
        assert!(matches!(
            l.cr_deposit("s", "b", 1, 2, secret_circuit(b"w"), 3, 100),
            Err(EscrowError::InsufficientFunds { .. })
        ));
    }

    #[test]
    fn multilock_compensation() {
        let mut l = Ledger::with_wallets((1..=3).map(|p| (p, 2)));
        let id = l.ml_open("s", "x", vec![1, 2, 3]).unwrap();
        l.tick();
        for p in 1..=3 {
            l.ml_lock(id, p, ml_terms(3, 2, 2)).unwrap();
        }
        assert_eq!(l.ml_finalize(id).unwrap(), LockOutcome::Locked);
        l.tick();
        assert_eq!(l.ml_redeem(id, 1, b"s2"), Err(EscrowError::BadWitness));
        l.ml_redeem(id, 1, b"s1").unwrap();
        l.ml_redeem(id, 3, b"s3").unwrap();
        assert_eq!(l.ml_redeem(id, 3, b"s3"), Err(EscrowError::AlreadyRedeemed(3)));
        l.tick();
        assert_eq!((l.balance(1), l.balance(2), l.balance(3)), (3, 0, 3));
        assert!(l.entries().contains(&CashFlow::refund(1, 3, 1)));
        assert_eq!(l.ml_session(id).unwrap().state_of(2), Some(MlPartyState::Compensated));
        l.invariant_check().unwrap();
        l.session_audit().unwrap();
    }

    #[test]
    fn mismatched_terms_abort_with_refunds() {
        let mut l = Ledger::with_wallets([(1, 1), (2, 1)]);
        let id = l.ml_open("s", "x", vec![1, 2]).unwrap();
        l.ml_lock(id, 1, ml_terms(2, 1, 2)).unwrap();
        l.ml_lock(id, 2, ml_terms(2, 1, 3)).unwrap();
        let out = l.ml_finalize(id).unwrap();
        assert_eq!(out, LockOutcome::Aborted { reason: AbortReason::MismatchedTerms, refunded: vec![(1, 1), (2, 1)] });
        assert_eq!((l.balance(1), l.balance(2)), (1, 1));
        assert_eq!(l.ml_redeem(id, 1, b"s1"), Err(EscrowError::WrongPhase("aborted")));
    }

    #[test]
    fn honest_multilock_returns_everything() {
        let mut l = Ledger::with_wallets((1..=4).map(|p| (p, 3)));
        let id = l.ml_open("s", "x", vec![1, 2, 3, 4]).unwrap();
        for p in 1..=4 {
            l.ml_lock(id, p, ml_terms(4, 3, 1)).unwrap();
        }
        l.ml_finalize(id).unwrap();
        for p in 1..=4 {
            l.ml_redeem(id, p, format!("s{p}").as_bytes()).unwrap();
        }
        l.advance_to(5);
        for p in 1..=4 {
            assert_eq!(l.balance(p), 3);
        }
        assert_eq!(l.pool(), 0);
    }

    #[test]
    fn invalid_terms() {
        let mut l = Ledger::with_wallets([(1, 5)]);
        let id = l.ml_open("s", "x", vec![1, 2, 3]).unwrap();
        assert!(matches!(l.ml_lock(id, 1, ml_terms(3, 3, 2)), Err(EscrowError::InvalidTerms(_))));
        assert!(matches!(l.ml_lock(id, 1, ml_terms(2, 2, 2)), Err(EscrowError::InvalidTerms(_))));
        assert_eq!(l.ml_lock(id, 7, ml_terms(3, 2, 2)), Err(EscrowError::NotMember(7)));
        assert!(matches!(l.ml_open("s", "x", vec![1, 2]), Err(EscrowError::DuplicateSession { .. })));
    }

    #[test]
    fn conservation_violation_round() {
        let entries = [CashFlow::deposit(1, 1, 5), CashFlow::refund(1, 2, 5), CashFlow::refund(2, 4, 1)];
        assert_eq!(check_conservation(&entries), Err(ConservationViolation { round: 4, deposits: 5, refunds: 6 }));
        assert!(check_conservation(&entries[..2]).is_ok());
    }

    #[test]
    fn trace_export_is_json_lines() {
        let mut l = Ledger::with_wallets([(1, 3)]);
        l.cr_deposit("s", "a", 1, 2, secret_circuit(b"w"), 0, 3).unwrap();
        l.tick();
        let trace = l.export_trace();
        let lines: Vec<serde_json::Value> = trace.lines().map(|s| serde_json::from_str(s).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1]["kind"], "refund");
        assert_eq!(lines[1]["new_state"], "Refunded");
        assert_eq!(lines[1]["round"], 1);
    }
}
