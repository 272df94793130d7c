//! The ladder protocol executed over claim-or-refund sessions.
//!
//! Each party `P_k` holds a secret `s_k`. The rung `P_i → P_{i−1}` is
//! claimable with `s_1 ‖ … ‖ s_{i−1}` and every roof deposit with
//! `s_1 ‖ … ‖ s_n`, so each claim publishes exactly what the next claimant
//! needs.

use super::{sha256, Circuit, EscrowError, Ledger, PartyId};
use crate::schedule::Abort;

pub fn ladder_secret(party: PartyId) -> Vec<u8> {
    sha256(format!("ladder-secret-{party}").as_bytes()).to_vec()
}

fn prefix_witness(upto: PartyId) -> Vec<u8> {
    (1..=upto).flat_map(ladder_secret).collect()
}

/// Runs the ladder with coins in units of `q` and returns the final ledger.
/// A party named in `abort` takes no action from its round onwards.
pub fn replay_ladder(n: usize, q: u64, abort: Option<Abort>) -> Result<Ledger, EscrowError> {
    if n < 2 || q == 0 {
        return Err(EscrowError::InvalidTerms("the ladder needs n ≥ 2 and q > 0".into()));
    }
    let nn = n as u64;
    let active = |party: PartyId, round: u64| abort.map_or(true, |a| a.party != party || round < a.round);
    let entry = |i: usize| if i < n { i as u64 * q } else { (nn - 1) * q };
    let mut ledger = Ledger::with_wallets((1..=n).map(|i| (i, entry(i))));
    let roof_predicate = Circuit::sha256_preimage(sha256(&prefix_witness(n)));

    // Deposit phase: the roof at round 1, rung P_i → P_{i−1} at round n − i + 2.
    ledger.tick();
    let mut roofs = Vec::new();
    let mut complete = true;
    for j in 1..n {
        if active(j, 1) {
            let id = ledger.cr_deposit("ladder", &format!("roof-{j}"), j, n, roof_predicate.clone(), 2 * nn, q)?;
            roofs.push(id);
        } else {
            complete = false;
        }
    }
    let mut rungs = vec![None; n + 1];
    if complete {
        for i in (2..=n).rev() {
            ledger.advance_to(nn - i as u64 + 2);
            if !active(i, ledger.round()) {
                complete = false;
                break;
            }
            let predicate = Circuit::sha256_preimage(sha256(&prefix_witness(i - 1)));
            let id = ledger.cr_deposit(
                "ladder",
                &format!("rung-{i}"),
                i,
                i - 1,
                predicate,
                nn + i as u64 - 1,
                (i as u64 - 1) * q,
            )?;
            rungs[i] = Some(id);
        }
    }

    // Claim phase: P_i at round n + i takes the rung from P_{i+1}; P_n at 2n
    // takes the roof. Each claimant extends the last published witness.
    if complete {
        for i in 1..=n {
            let round = if i < n { nn + i as u64 } else { 2 * nn };
            ledger.advance_to(round);
            if !active(i, round) {
                break;
            }
            let mut witness = ledger.revealed_witnesses().last().map(|w| w.witness.clone()).unwrap_or_default();
            witness.extend(ladder_secret(i));
            if i < n {
                let id = rungs[i + 1].expect("complete ladder has every rung");
                ledger.cr_claim(id, i, &witness)?;
            } else {
                for &id in &roofs {
                    ledger.cr_claim(id, n, &witness)?;
                }
            }
        }
    }
    ledger.advance_to(2 * nn + 1);
    Ok(ledger)
}
