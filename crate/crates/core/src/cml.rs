//! Desk-scale execution of the compact multi-lock protocol.
//!
//! A trusted dealer stands in for the unfair computation of the derived
//! function: it samples a key `κ`, splits it into n-of-n XOR shares, commits
//! to each share and encrypts the output under `κ`. Fair reconstruction then
//! runs over a multi-lock session whose predicates are the commitment
//! openings, so a party that withholds its share forfeits its deposit to the
//! others.

use std::collections::BTreeSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::escrow::{sha256, Circuit, EscrowError, Ledger, LockOutcome, MlTerms, PartyId};
use crate::schedule::Schedule;

pub const KEY_BYTES: usize = 16;
pub const ALPHA_BYTES: usize = 32;
pub const NONCE_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CmlError {
    #[error("expected {expected} shares, got {got}")]
    WrongShareCount { expected: usize, got: usize },
    #[error("expected {expected} bytes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("at most n − 1 = {max} parties may be corrupted, got {got}")]
    TooManyCorrupted { max: usize, got: usize },
    #[error("invalid run parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Escrow(#[from] EscrowError),
}

pub type Key = [u8; KEY_BYTES];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyShare {
    pub party: PartyId,
    pub of: usize,
    pub bits: Key,
}

pub fn share(key: &Key, n: usize, rng: &mut impl RngCore) -> Result<Vec<KeyShare>, CmlError> {
    if n < 2 {
        return Err(CmlError::WrongShareCount { expected: 2, got: n });
    }
    let mut last = *key;
    let mut shares = Vec::with_capacity(n);
    for party in 1..n {
        let mut bits = [0u8; KEY_BYTES];
        rng.fill_bytes(&mut bits);
        for (l, b) in last.iter_mut().zip(&bits) {
            *l ^= b;
        }
        shares.push(KeyShare { party, of: n, bits });
    }
    shares.push(KeyShare { party: n, of: n, bits: last });
    Ok(shares)
}

/// XOR of all shares; every party's share must be present exactly once.
pub fn recon(shares: &[KeyShare]) -> Result<Key, CmlError> {
    let n = shares.first().map_or(0, |s| s.of);
    let parties: BTreeSet<PartyId> = shares.iter().filter(|s| s.of == n).map(|s| s.party).collect();
    if n < 2 || shares.len() != n || parties != (1..=n).collect() {
        return Err(CmlError::WrongShareCount { expected: n.max(2), got: shares.len() });
    }
    let mut key = [0u8; KEY_BYTES];
    for s in shares {
        for (k, b) in key.iter_mut().zip(&s.bits) {
            *k ^= b;
        }
    }
    Ok(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment {
    pub digest: [u8; 32],
}

pub fn commit(share: &Key, alpha: &[u8; ALPHA_BYTES]) -> Commitment {
    Commitment { digest: sha256(&opening_bytes(share, alpha)) }
}

pub fn verify(c: &Commitment, share: &Key, alpha: &[u8; ALPHA_BYTES]) -> bool {
    commit(share, alpha) == *c
}

/// The witness that opens a commitment: `share ‖ α`.
pub fn opening_bytes(share: &Key, alpha: &[u8; ALPHA_BYTES]) -> Vec<u8> {
    let mut w = Vec::with_capacity(KEY_BYTES + ALPHA_BYTES);
    w.extend_from_slice(share);
    w.extend_from_slice(alpha);
    w
}

/// Splits a witness back into `(share, α)`.
pub fn parse_opening(w: &[u8]) -> Option<(Key, [u8; ALPHA_BYTES])> {
    if w.len() != KEY_BYTES + ALPHA_BYTES {
        return None;
    }
    let share: Key = w[..KEY_BYTES].try_into().ok()?;
    let alpha: [u8; ALPHA_BYTES] = w[KEY_BYTES..].try_into().ok()?;
    Some((share, alpha))
}

/// Redeem predicate of a party: accepts exactly an opening of `gamma`.
pub fn phi(gamma: Commitment) -> Circuit {
    Circuit::new(format!("open:{}", hex::encode(gamma.digest)), move |w| {
        parse_opening(w).is_some_and(|(s, a)| verify(&gamma, &s, &a))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputCiphertext {
    pub nonce: [u8; NONCE_BYTES],
    pub bytes: Vec<u8>,
}

fn keystream(key: &Key, nonce: &[u8; NONCE_BYTES], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut counter = 0u64;
    while out.len() < len {
        let mut block = Vec::with_capacity(2 + KEY_BYTES + NONCE_BYTES + 8);
        block.extend_from_slice(b"ks");
        block.extend_from_slice(key);
        block.extend_from_slice(nonce);
        block.extend_from_slice(&counter.to_be_bytes());
        out.extend_from_slice(&sha256(&block));
        counter += 1;
    }
    out.truncate(len);
    out
}

pub fn enc(key: &Key, y: &[u8], rng: &mut impl RngCore) -> OutputCiphertext {
    let mut nonce = [0u8; NONCE_BYTES];
    rng.fill_bytes(&mut nonce);
    let bytes = y.iter().zip(keystream(key, &nonce, y.len())).map(|(a, b)| a ^ b).collect();
    OutputCiphertext { nonce, bytes }
}

/// Decrypts an `m`-byte output.
pub fn dec(key: &Key, c: &OutputCiphertext, m: usize) -> Result<Vec<u8>, CmlError> {
    if c.bytes.len() != m {
        return Err(CmlError::LengthMismatch { expected: m, got: c.bytes.len() });
    }
    Ok(c.bytes.iter().zip(keystream(key, &c.nonce, m)).map(|(a, b)| a ^ b).collect())
}

/// What the dealer hands to one party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub party: PartyId,
    pub commitments: Vec<Commitment>,
    pub ciphertext: OutputCiphertext,
    pub share: KeyShare,
    pub alpha: [u8; ALPHA_BYTES],
}

impl Bundle {
    pub fn witness(&self) -> Vec<u8> {
        opening_bytes(&self.share.bits, &self.alpha)
    }
}

pub type Function = dyn Fn(&[Vec<u8>]) -> Vec<u8>;

/// Bytewise XOR of equal-length inputs.
pub fn xor_inputs(inputs: &[Vec<u8>]) -> Vec<u8> {
    let m = inputs.iter().map(Vec::len).max().unwrap_or(0);
    let mut y = vec![0u8; m];
    for x in inputs {
        for (a, b) in y.iter_mut().zip(x) {
            *a ^= b;
        }
    }
    y
}

pub fn dealer_eval(inputs: &[Vec<u8>], f: &Function, rng: &mut impl RngCore) -> Result<Vec<Bundle>, CmlError> {
    let n = inputs.len();
    let mut key = [0u8; KEY_BYTES];
    rng.fill_bytes(&mut key);
    let shares = share(&key, n, rng)?;
    let alphas: Vec<[u8; ALPHA_BYTES]> = (0..n)
        .map(|_| {
            let mut a = [0u8; ALPHA_BYTES];
            rng.fill_bytes(&mut a);
            a
        })
        .collect();
    let commitments: Vec<Commitment> = shares.iter().zip(&alphas).map(|(s, a)| commit(&s.bits, a)).collect();
    let ciphertext = enc(&key, &f(inputs), rng);
    Ok(shares
        .into_iter()
        .zip(alphas)
        .map(|(share, alpha)| Bundle {
            party: share.party,
            commitments: commitments.clone(),
            ciphertext: ciphertext.clone(),
            share,
            alpha,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Behavior {
    Honest,
    AbortAtLock,
    AbortAtRedeem,
    WrongWitness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryPolicy {
    pub corrupted: BTreeSet<PartyId>,
    pub behavior: Behavior,
}

impl AdversaryPolicy {
    pub fn honest() -> Self {
        AdversaryPolicy { corrupted: BTreeSet::new(), behavior: Behavior::Honest }
    }

    pub fn new(behavior: Behavior, corrupted: impl IntoIterator<Item = PartyId>) -> Self {
        AdversaryPolicy { corrupted: corrupted.into_iter().collect(), behavior }
    }

    fn acts(&self, party: PartyId, behavior: Behavior) -> bool {
        self.behavior == behavior && self.corrupted.contains(&party)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartyOutcome {
    Output(Vec<u8>),
    Compensated(u64),
    Penalized(u64),
    AbortedCleanly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmlConfig {
    pub n: usize,
    pub q: u64,
    pub timeout: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmlRun {
    pub outcomes: Vec<PartyOutcome>,
    /// Net coins gained per party over the run, party order `1..=n`.
    pub net_change: Vec<i64>,
    pub schedule: Schedule,
    /// The dealer's true output, for checking.
    pub expected_output: Vec<u8>,
    pub rejected_witnesses: Vec<PartyId>,
}

impl CmlRun {
    pub fn honest_parties<'a>(&'a self, adversary: &'a AdversaryPolicy) -> impl Iterator<Item = PartyId> + 'a {
        (1..=self.outcomes.len()).filter(move |p| !adversary.corrupted.contains(p))
    }
}

/// Runs the protocol for parties `1..=n` on `ledger`, which must already
/// hold `(n−1)q` for each of them. Locks happen at round 1, redeems at
/// round 2, compensation at `timeout + 1`.
pub fn run_cml(
    config: CmlConfig,
    inputs: &[Vec<u8>],
    f: &Function,
    adversary: &AdversaryPolicy,
    ledger: &mut Ledger,
) -> Result<CmlRun, CmlError> {
    let CmlConfig { n, q, timeout, seed } = config;
    if n < 2 || inputs.len() != n {
        return Err(CmlError::InvalidParameters(format!("{} inputs for {n} parties", inputs.len())));
    }
    if q == 0 || timeout < 2 {
        return Err(CmlError::InvalidParameters("q must be positive and the timeout at least 2".into()));
    }
    if adversary.corrupted.len() > n - 1 || adversary.corrupted.iter().any(|&p| p == 0 || p > n) {
        return Err(CmlError::TooManyCorrupted { max: n - 1, got: adversary.corrupted.len() });
    }
    if ledger.round() != 0 {
        return Err(CmlError::InvalidParameters("the ledger clock must start at round 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bundles = dealer_eval(inputs, f, &mut rng)?;
    let expected_output = f(inputs);
    let m = expected_output.len();
    let first_entry = ledger.entries().len();

    let terms = MlTerms {
        deposit: (n as u64 - 1) * q,
        predicates: bundles[0].commitments.iter().map(|&g| phi(g)).collect(),
        timeout,
    };
    let ssid = format!("run-{}-{}", seed, ledger.ml_sessions().len());
    let id = ledger.ml_open("cml", &ssid, (1..=n).collect())?;

    ledger.tick();
    for b in &bundles {
        if !adversary.acts(b.party, Behavior::AbortAtLock) {
            ledger.ml_lock(id, b.party, terms.clone())?;
        }
    }
    let locked = ledger.ml_finalize(id)?;

    let mut rejected_witnesses = Vec::new();
    let outcomes = if let LockOutcome::Aborted { .. } = locked {
        vec![PartyOutcome::AbortedCleanly; n]
    } else {
        ledger.tick();
        for b in &bundles {
            if adversary.acts(b.party, Behavior::AbortAtRedeem) {
                continue;
            }
            let w = if adversary.acts(b.party, Behavior::WrongWitness) {
                let mut w = b.witness();
                w[0] ^= 0x01;
                w
            } else {
                b.witness()
            };
            match ledger.ml_redeem(id, b.party, &w) {
                Ok(_) => {}
                Err(EscrowError::BadWitness) => rejected_witnesses.push(b.party),
                Err(e) => return Err(e.into()),
            }
        }
        let session = format!("ml:{id}");
        let opened: Vec<KeyShare> = ledger
            .revealed_witnesses()
            .iter()
            .filter(|w| w.session == session)
            .filter_map(|w| parse_opening(&w.witness).map(|(bits, _)| KeyShare { party: w.party, of: n, bits }))
            .collect();
        let withheld = n - opened.len();
        ledger.advance_to(timeout + 1);

        let output = recon(&opened).ok().map(|key| dec(&key, &bundles[0].ciphertext, m)).transpose()?;
        let s = ledger.ml_session(id)?;
        (1..=n)
            .map(|p| match (&output, s.state_of(p)) {
                (Some(y), _) => PartyOutcome::Output(y.clone()),
                (None, Some(crate::escrow::MlPartyState::Compensated)) => PartyOutcome::Penalized((n as u64 - 1) * q),
                (None, _) => PartyOutcome::Compensated(withheld as u64 * q),
            })
            .collect()
    };

    let run_entries = &ledger.entries()[first_entry..];
    let mut net_change = vec![0i64; n];
    for e in run_entries {
        net_change[e.party - 1] += e.signed_q();
    }
    let schedule = Schedule::from_flows(
        n,
        q,
        run_entries.iter().map(|e| crate::schedule::CashFlow { amount_q: e.amount_q / q, ..*e }),
    );
    Ok(CmlRun { outcomes, net_change, schedule, expected_output, rejected_witnesses })
}

/// Convenience wrapper: a fresh ledger funded with each party's deposit.
pub fn run_cml_fresh(config: CmlConfig, inputs: &[Vec<u8>], f: &Function, adversary: &AdversaryPolicy) -> Result<(CmlRun, Ledger), CmlError> {
    let mut ledger = Ledger::with_wallets((1..=config.n).map(|p| (p, (config.n as u64 - 1) * config.q)));
    let run = run_cml(config, inputs, f, adversary, &mut ledger)?;
    Ok((run, ledger))
}

/// Deterministic per-party inputs of `m` bytes.
pub fn sample_inputs(n: usize, m: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| (0..m).map(|_| rng.gen()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{generate_schedule, multilock_with_aborts, Abort, ProtocolKind, ScenarioParams};

    fn cfg(n: usize) -> CmlConfig {
        CmlConfig { n, q: 1, timeout: 2, seed: 7 }
    }

    #[test]
    fn share_roundtrip_and_zero_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let key = [0xabu8; KEY_BYTES];
        let s = share(&key, 5, &mut rng).unwrap();
        assert_eq!(recon(&s).unwrap(), key);
        assert!(matches!(recon(&s[..4]), Err(CmlError::WrongShareCount { .. })));
        let z = share(&[0u8; KEY_BYTES], 2, &mut rng).unwrap();
        assert_eq!(z[0].bits, z[1].bits);
        assert!(share(&key, 1, &mut rng).is_err());
    }

    #[test]
    fn commitment_binding_and_hiding_shape() {
        let alpha = [3u8; ALPHA_BYTES];
        let share = [9u8; KEY_BYTES];
        let c = commit(&share, &alpha);
        assert!(verify(&c, &share, &alpha));
        let mut other = share;
        other[0] ^= 1;
        assert!(!verify(&c, &other, &alpha));
        assert!(phi(c).eval(&opening_bytes(&share, &alpha)));
        assert!(!phi(c).eval(&share));
    }

    #[test]
    fn encryption_roundtrip_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = [1u8; KEY_BYTES];
        let y: Vec<u8> = (0..100).collect();
        let c = enc(&key, &y, &mut rng);
        assert_eq!(dec(&key, &c, 100).unwrap(), y);
        assert_eq!(dec(&key, &c, 99), Err(CmlError::LengthMismatch { expected: 99, got: 100 }));
        assert_ne!(dec(&[2u8; KEY_BYTES], &c, 100).unwrap(), y);
    }

    #[test]
    fn dealer_bundles_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs = sample_inputs(3, 8, 0);
        let bundles = dealer_eval(&inputs, &xor_inputs, &mut rng).unwrap();
        for b in &bundles {
            assert!(verify(&b.commitments[b.party - 1], &b.share.bits, &b.alpha));
        }
        let shares: Vec<KeyShare> = bundles.iter().map(|b| b.share.clone()).collect();
        let key = recon(&shares).unwrap();
        assert_eq!(dec(&key, &bundles[0].ciphertext, 8).unwrap(), xor_inputs(&inputs));
        let again = dealer_eval(&inputs, &xor_inputs, &mut rng).unwrap();
        assert_ne!(again[0].commitments, bundles[0].commitments);
    }

    #[test]
    fn honest_run_matches_multilock_schedule() {
        let inputs = sample_inputs(4, 8, 1);
        let (run, ledger) = run_cml_fresh(cfg(4), &inputs, &xor_inputs, &AdversaryPolicy::honest()).unwrap();
        let y = xor_inputs(&inputs);
        assert!(run.outcomes.iter().all(|o| *o == PartyOutcome::Output(y.clone())));
        let expected = generate_schedule(&ScenarioParams::new(ProtocolKind::CompactMultiLock, 4)).unwrap();
        assert_eq!(run.schedule.events, expected.events);
        ledger.invariant_check().unwrap();
    }

    #[test]
    fn redeem_abort_compensates_honest_parties() {
        let inputs = sample_inputs(3, 8, 2);
        let adv = AdversaryPolicy::new(Behavior::AbortAtRedeem, [3]);
        let (run, _) = run_cml_fresh(cfg(3), &inputs, &xor_inputs, &adv).unwrap();
        assert_eq!(run.outcomes[..2], [PartyOutcome::Compensated(1), PartyOutcome::Compensated(1)]);
        assert_eq!(run.outcomes[2], PartyOutcome::Penalized(2));
        assert_eq!(run.net_change, vec![1, 1, -2]);
        let expected = multilock_with_aborts(ProtocolKind::CompactMultiLock, 3, 1, &[Abort { party: 3, round: 2 }]).unwrap();
        assert_eq!(run.schedule.events, expected.events);
    }

    #[test]
    fn two_redeem_aborts_of_five() {
        let inputs = sample_inputs(5, 8, 3);
        let adv = AdversaryPolicy::new(Behavior::AbortAtRedeem, [2, 4]);
        let (run, _) = run_cml_fresh(cfg(5), &inputs, &xor_inputs, &adv).unwrap();
        for p in [1, 3, 5] {
            assert_eq!(run.outcomes[p - 1], PartyOutcome::Compensated(2));
            assert_eq!(run.net_change[p - 1], 2);
        }
        // Each aborter forfeits 4 and receives 1 from the other aborter.
        assert_eq!(run.net_change[1], -3);
    }

    #[test]
    fn lock_abort_is_clean() {
        let inputs = sample_inputs(4, 8, 4);
        let adv = AdversaryPolicy::new(Behavior::AbortAtLock, [1]);
        let (run, ledger) = run_cml_fresh(cfg(4), &inputs, &xor_inputs, &adv).unwrap();
        assert!(run.outcomes.iter().all(|o| *o == PartyOutcome::AbortedCleanly));
        assert!(run.net_change.iter().all(|&c| c == 0));
        assert_eq!(ledger.pool(), 0);
    }

    #[test]
    fn wrong_witness_is_non_redemption() {
        let inputs = sample_inputs(3, 8, 5);
        let adv = AdversaryPolicy::new(Behavior::WrongWitness, [2]);
        let (run, _) = run_cml_fresh(cfg(3), &inputs, &xor_inputs, &adv).unwrap();
        assert_eq!(run.rejected_witnesses, vec![2]);
        assert_eq!(run.outcomes[0], PartyOutcome::Compensated(1));
        assert_eq!(run.net_change, vec![1, -2, 1]);
    }

    #[test]
    fn later_timeout_moves_compensation() {
        let inputs = sample_inputs(3, 8, 6);
        let adv = AdversaryPolicy::new(Behavior::AbortAtRedeem, [1]);
        let config = CmlConfig { timeout: 5, ..cfg(3) };
        let (run, _) = run_cml_fresh(config, &inputs, &xor_inputs, &adv).unwrap();
        assert!(run.schedule.events.iter().any(|e| e.round == 6 && e.party == 2));
    }

    #[test]
    fn too_many_corrupted() {
        let inputs = sample_inputs(2, 8, 7);
        let adv = AdversaryPolicy::new(Behavior::AbortAtRedeem, [1, 2]);
        assert!(matches!(
            run_cml_fresh(cfg(2), &inputs, &xor_inputs, &adv),
            Err(CmlError::TooManyCorrupted { .. })
        ));
    }
}
