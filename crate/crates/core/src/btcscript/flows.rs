//! Multi-lock lock/redeem/compensate transactions, the claim-or-refund
//! script, and the transaction-malleability demonstration.

use serde::Serialize;

use super::chain::Chain;
use super::script::{encode_num, Op, Script};
use super::tx::{IdMode, Locking, Tx, TxIn, TxOut};
use super::{hash256, BtcError, KeyPair, KeyRegistry};
use crate::escrow::{self, Circuit, EscrowError, Ledger, MlTerms, PartyId};

/// Weight ceiling for one transaction.
pub const MAX_TX_WEIGHT: usize = 100_000;

/// Weight per serialized byte, as a ratio. The layout here is more compact
/// than consensus encoding; this scaling puts the ceiling between 14 and 15
/// multi-lock parties.
pub const WEIGHT_PER_BYTE: (usize, usize) = (15, 4);

/// Bytes of one signature witness `[PUSH sig]` in the witness section.
const SIG_WITNESS_BYTES: usize = 4 + 1 + 32;

pub fn weight_of(bytes: usize) -> usize {
    bytes * WEIGHT_PER_BYTE.0 / WEIGHT_PER_BYTE.1
}

/// Deterministic key, secret and commitment for multi-lock party `i`.
#[derive(Debug, Clone)]
pub struct MlParticipant {
    pub index: usize,
    pub key: KeyPair,
    pub secret: Vec<u8>,
    pub commitment: [u8; 32],
}

impl MlParticipant {
    pub fn derive(index: usize) -> Self {
        let secret = format!("ml-secret-{index}").into_bytes();
        MlParticipant { index, key: KeyPair::derive(&format!("ml-key-{index}")), commitment: hash256(&secret), secret }
    }

    pub fn payout(&self) -> Locking {
        p2pk(&self.key.public)
    }
}

pub fn p2pk(public: &[u8]) -> Locking {
    Locking::Inline(Script::new(vec![Op::Push(public.to_vec()), Op::CheckSig]))
}

/// `IF HASH256 <h_i> EQUALVERIFY <pk_i> CHECKSIG ELSE <τ> CHECKLOCKTIMEVERIFY DROP <pk_j> CHECKSIG ENDIF`
pub fn ml_output_script(h_i: &[u8; 32], pk_i: &[u8], pk_j: &[u8], tau: u64) -> Script {
    Script::new(vec![
        Op::If,
        Op::Hash256,
        Op::Push(h_i.to_vec()),
        Op::EqualVerify,
        Op::Push(pk_i.to_vec()),
        Op::CheckSig,
        Op::Else,
        Op::Push(encode_num(tau as i64)),
        Op::CheckLockTimeVerify,
        Op::Drop,
        Op::Push(pk_j.to_vec()),
        Op::CheckSig,
        Op::EndIf,
    ])
}

/// Position of output `(i, j)`, `i ≠ j`, both 1-based: `(i−1)(n−1) + pos(j)`
/// where `pos` skips `i`.
pub fn ml_output_index(n: usize, i: usize, j: usize) -> u32 {
    debug_assert!(i != j && (1..=n).contains(&i) && (1..=n).contains(&j));
    let pos = if j < i { j - 1 } else { j - 2 };
    ((i - 1) * (n - 1) + pos) as u32
}

/// Claim-or-refund script with the time lock on the refund branch only.
pub fn cr_script(h: &[u8; 32], pk_receiver: &[u8], pk_sender: &[u8], tau: u64) -> Script {
    ml_output_script(h, pk_receiver, pk_sender, tau)
}

/// The claim-or-refund script in its published order, with the time lock
/// ahead of the branch.
pub fn cr_script_as_listed(h: &[u8; 32], pk_receiver: &[u8], pk_sender: &[u8], tau: u64) -> Script {
    Script::new(vec![
        Op::Push(encode_num(tau as i64)),
        Op::CheckLockTimeVerify,
        Op::If,
        Op::Hash256,
        Op::Push(h.to_vec()),
        Op::EqualVerify,
        Op::Push(pk_receiver.to_vec()),
        Op::CheckSigVerify,
        Op::Else,
        Op::Push(pk_sender.to_vec()),
        Op::CheckSigVerify,
        Op::EndIf,
    ])
}

/// The unsigned lock transaction. Party `i` funds input `i` from
/// `funding[i−1]`, a coin holding exactly `(n−1)q`.
pub fn build_ml_lock_tx(
    n: usize,
    q: u64,
    commitments: &[[u8; 32]],
    pubkeys: &[Vec<u8>],
    funding: &[([u8; 32], u32)],
    tau: u64,
) -> Result<Tx, BtcError> {
    if n < 2 || q == 0 {
        return Err(BtcError::InvalidParameters("the lock needs n ≥ 2 and q > 0".into()));
    }
    if commitments.len() != n || pubkeys.len() != n || funding.len() != n {
        return Err(BtcError::InvalidParameters(format!("expected {n} commitments, keys and funding coins")));
    }
    let deposit = (n as u64 - 1) * q;
    let inputs = funding
        .iter()
        .map(|&(prev_txid, prev_idx)| TxIn { prev_txid, prev_idx, value: deposit, witness: Script::default() })
        .collect();
    let mut outputs = Vec::with_capacity(n * (n - 1));
    for i in 1..=n {
        for j in (1..=n).filter(|&j| j != i) {
            outputs.push(TxOut {
                idx: ml_output_index(n, i, j),
                value: q,
                locking: Locking::Inline(ml_output_script(&commitments[i - 1], &pubkeys[i - 1], &pubkeys[j - 1], tau)),
            });
        }
    }
    let tx = Tx::new(inputs, outputs, 0);
    let weight = weight_of(tx.simplified_bytes().len() + n * SIG_WITNESS_BYTES);
    if weight > MAX_TX_WEIGHT {
        return Err(BtcError::SizeLimitExceeded { weight, limit: MAX_TX_WEIGHT });
    }
    Ok(tx)
}

/// Adds every party's signature to the lock transaction.
pub fn sign_lock_tx(mut tx: Tx, keys: &[KeyPair]) -> Tx {
    let sighash = tx.sighash();
    for (input, key) in tx.inputs.iter_mut().zip(keys) {
        input.witness = Script::new(vec![Op::Push(key.sign(&sighash))]);
    }
    tx
}

fn check_party(n: usize, p: usize) -> Result<(), BtcError> {
    if (1..=n).contains(&p) {
        Ok(())
    } else {
        Err(BtcError::InvalidBranch(format!("party {p} is not in 1..={n}")))
    }
}

/// Spends the `n−1` outputs `(i, ·)` through the IF branch with witness
/// `(σ_i, key_i, 1)`.
pub fn build_redeem_tx(lock_txid: [u8; 32], n: usize, q: u64, party: &MlParticipant) -> Result<Tx, BtcError> {
    let i = party.index;
    check_party(n, i)?;
    let inputs = (1..=n)
        .filter(|&j| j != i)
        .map(|j| TxIn { prev_txid: lock_txid, prev_idx: ml_output_index(n, i, j), value: q, witness: Script::default() })
        .collect();
    let out = TxOut { idx: 0, value: (n as u64 - 1) * q, locking: party.payout() };
    let mut tx = Tx::new(inputs, vec![out], 0);
    let sig = party.key.sign(&tx.sighash());
    for input in &mut tx.inputs {
        input.witness = Script::new(vec![Op::Push(sig.clone()), Op::Push(party.secret.clone()), Op::Push(vec![1])]);
    }
    Ok(tx)
}

/// Spends outputs `(i, j)` for every `i` in `unclaimed` through the ELSE
/// branch with witness `(σ_j, 0)` and `lock_time = τ`.
pub fn build_compensate_tx(
    lock_txid: [u8; 32],
    n: usize,
    q: u64,
    party: &MlParticipant,
    unclaimed: &[usize],
    tau: u64,
) -> Result<Tx, BtcError> {
    let j = party.index;
    check_party(n, j)?;
    if unclaimed.is_empty() {
        return Err(BtcError::InvalidBranch("nothing to compensate".into()));
    }
    let mut inputs = Vec::with_capacity(unclaimed.len());
    for &i in unclaimed {
        check_party(n, i)?;
        if i == j {
            return Err(BtcError::InvalidBranch(format!("party {j} cannot compensate itself")));
        }
        inputs.push(TxIn { prev_txid: lock_txid, prev_idx: ml_output_index(n, i, j), value: q, witness: Script::default() });
    }
    let out = TxOut { idx: 0, value: unclaimed.len() as u64 * q, locking: party.payout() };
    let mut tx = Tx::new(inputs, vec![out], tau);
    let sig = party.key.sign(&tx.sighash());
    for input in &mut tx.inputs {
        input.witness = Script::new(vec![Op::Push(sig.clone()), Op::Push(Vec::new())]);
    }
    Ok(tx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MlScenario {
    Honest,
    /// The named party locks and then never redeems.
    Abort(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct MlFlowReport {
    pub n: usize,
    pub q: u64,
    pub tau: u64,
    pub initial: Vec<u64>,
    pub balances: Vec<u64>,
    pub net: Vec<i64>,
    pub lock_tx: Tx,
    pub lock_txid: [u8; 32],
    pub redeems: Vec<Tx>,
    pub compensations: Vec<Tx>,
}

/// Funds every party with `(n−1)q`, confirms the lock at height 1, redeems
/// at height 2 and compensates at height `τ+1`.
pub fn run_ml_flow(n: usize, q: u64, tau: u64, scenario: MlScenario, mode: IdMode) -> Result<MlFlowReport, BtcError> {
    if tau < 3 {
        return Err(BtcError::InvalidParameters("the timeout height must be at least 3".into()));
    }
    let aborter = match scenario {
        MlScenario::Honest => None,
        MlScenario::Abort(a) => {
            check_party(n, a).map_err(|_| BtcError::InvalidParameters(format!("abort index {a} out of range")))?;
            Some(a)
        }
    };
    let parties: Vec<MlParticipant> = (1..=n).map(MlParticipant::derive).collect();
    let mut keys = KeyRegistry::default();
    parties.iter().for_each(|p| keys.register(&p.key));
    let mut chain = Chain::new(mode, keys);
    let deposit = (n as u64).saturating_sub(1) * q;
    let funding: Vec<([u8; 32], u32)> = parties
        .iter()
        .map(|p| (chain.genesis(vec![TxOut { idx: 0, value: deposit, locking: p.payout() }]), 0))
        .collect();
    let initial: Vec<u64> = parties.iter().map(|p| chain.balance(&p.payout())).collect();

    chain.advance_to(1);
    let commitments: Vec<[u8; 32]> = parties.iter().map(|p| p.commitment).collect();
    let pubkeys: Vec<Vec<u8>> = parties.iter().map(|p| p.key.public.clone()).collect();
    let unsigned = build_ml_lock_tx(n, q, &commitments, &pubkeys, &funding, tau)?;
    let keypairs: Vec<KeyPair> = parties.iter().map(|p| p.key.clone()).collect();
    let lock_tx = sign_lock_tx(unsigned, &keypairs);
    let lock_txid = chain.submit(lock_tx.clone())?;

    chain.advance_to(2);
    let mut redeems = Vec::new();
    for p in parties.iter().filter(|p| Some(p.index) != aborter) {
        let tx = build_redeem_tx(lock_txid, n, q, p)?;
        chain.submit(tx.clone())?;
        redeems.push(tx);
    }

    chain.advance_to(tau + 1);
    let mut compensations = Vec::new();
    if let Some(a) = aborter {
        for p in parties.iter().filter(|p| p.index != a) {
            let tx = build_compensate_tx(lock_txid, n, q, p, &[a], tau)?;
            chain.submit(tx.clone())?;
            compensations.push(tx);
        }
    }
    let balances: Vec<u64> = parties.iter().map(|p| chain.balance(&p.payout())).collect();
    let net = balances.iter().zip(&initial).map(|(&b, &i)| b as i64 - i as i64).collect();
    Ok(MlFlowReport { n, q, tau, initial, balances, net, lock_tx, lock_txid, redeems, compensations })
}

/// Final wallet balances of the same scenario run on the escrow ledger's
/// multi-lock sessions.
pub fn escrow_ml_balances(n: usize, q: u64, tau: u64, scenario: MlScenario) -> Result<Vec<u64>, EscrowError> {
    let deposit = (n as u64).saturating_sub(1) * q;
    let mut ledger = Ledger::with_wallets((1..=n).map(|p| (p, deposit)));
    let secret = |p: PartyId| format!("ml-secret-{p}").into_bytes();
    ledger.advance_to(1);
    let id = ledger.ml_open("btc-compare", "ml", (1..=n).collect())?;
    let terms = MlTerms {
        deposit,
        predicates: (1..=n).map(|p| Circuit::sha256_preimage(escrow::sha256(&secret(p)))).collect(),
        timeout: tau,
    };
    for p in 1..=n {
        ledger.ml_lock(id, p, terms.clone())?;
    }
    ledger.ml_finalize(id)?;
    ledger.advance_to(2);
    for p in 1..=n {
        if scenario != MlScenario::Abort(p) {
            ledger.ml_redeem(id, p, &secret(p))?;
        }
    }
    ledger.advance_to(tau + 2);
    ledger.invariant_check()?;
    Ok((1..=n).map(|p| ledger.balance(p)).collect())
}

/// Copy of `tx` whose witness on `input` gains a `PUSH junk DROP` prefix.
/// The simplified form, and so every signature, is unchanged.
pub fn mutate_witness(tx: &Tx, input: usize) -> Tx {
    let mut out = tx.clone();
    let w = &mut out.inputs[input].witness;
    let mut ops = vec![Op::Push(b"malleated".to_vec()), Op::Drop];
    ops.append(&mut w.ops);
    w.ops = ops;
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MalleabilityCase {
    pub mode: IdMode,
    pub lock_id_before: String,
    pub lock_id_after: String,
    pub dependent_valid: bool,
    pub dependent_error: Option<String>,
    /// Whether a lock transaction with an altered simplified form and the
    /// original signatures was accepted.
    pub simplified_mutation_accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MalleabilityReport {
    pub cases: Vec<MalleabilityCase>,
}

/// Two-party lock transaction plus a compensation transaction prepared by
/// P_2 against the lock's id before it confirms. A relayer then confirms a
/// witness-mutated copy of the lock.
pub fn malleability_demo(q: u64, tau: u64) -> Result<MalleabilityReport, BtcError> {
    let n = 2;
    let parties: Vec<MlParticipant> = (1..=n).map(MlParticipant::derive).collect();
    let mut keys = KeyRegistry::default();
    parties.iter().for_each(|p| keys.register(&p.key));
    let mut cases = Vec::new();
    for mode in [IdMode::Legacy, IdMode::Segwit] {
        let mut chain = Chain::new(mode, keys.clone());
        let funding: Vec<([u8; 32], u32)> = parties
            .iter()
            .map(|p| (chain.genesis(vec![TxOut { idx: 0, value: q, locking: p.payout() }]), 0))
            .collect();
        chain.advance_to(1);
        let commitments: Vec<[u8; 32]> = parties.iter().map(|p| p.commitment).collect();
        let pubkeys: Vec<Vec<u8>> = parties.iter().map(|p| p.key.public.clone()).collect();
        let keypairs: Vec<KeyPair> = parties.iter().map(|p| p.key.clone()).collect();
        let lock = sign_lock_tx(build_ml_lock_tx(n, q, &commitments, &pubkeys, &funding, tau)?, &keypairs);
        let before = lock.txid(mode);
        let dependent = build_compensate_tx(before, n, q, &parties[1], &[1], tau)?;

        let mut altered = lock.clone();
        altered.lock_time += 1;
        let simplified_mutation_accepted = chain.validate(&altered).is_ok();

        let mutated = mutate_witness(&lock, 0);
        let after = chain.submit(mutated)?;
        chain.advance_to(tau + 1);
        let verdict = chain.validate(&dependent);
        cases.push(MalleabilityCase {
            mode,
            lock_id_before: hex::encode(before),
            lock_id_after: hex::encode(after),
            dependent_valid: verdict.is_ok(),
            dependent_error: verdict.err().map(|e| e.to_string()),
            simplified_mutation_accepted,
        });
    }
    Ok(MalleabilityReport { cases })
}
