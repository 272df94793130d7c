//! Seeded random interleavings of claim-or-refund and multi-lock sessions on
//! one ledger, with adversarial parties that skip steps, present wrong
//! witnesses, replay messages and lock mismatched terms. Ledger invariants
//! and the session audit are checked after every operation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sha256, Circuit, EscrowError, Ledger, MlPhase, MlTerms, PartyId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceStats {
    pub operations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rounds: u64,
}

fn secret(session: &str, party: PartyId) -> Vec<u8> {
    format!("{session}/{party}").into_bytes()
}

fn witness_for(rng: &mut ChaCha8Rng, session: &str, party: PartyId) -> Vec<u8> {
    match rng.gen_range(0..4) {
        0 => b"garbage".to_vec(),
        1 => secret(session, party + 1),
        _ => secret(session, party),
    }
}

struct MlPlan {
    id: usize,
    name: String,
    terms: MlTerms,
}

/// One random trace of `steps` operations. Errors only on an invariant
/// violation; rejected operations are the expected outcome of adversarial
/// input and are counted.
pub fn random_trace(seed: u64, steps: usize) -> Result<TraceStats, EscrowError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_parties = rng.gen_range(2..=6usize);
    let mut ledger = Ledger::with_wallets((1..=n_parties).map(|p| (p, rng.gen_range(0..40u64))));
    let mut stats = TraceStats::default();
    let mut cr_names: Vec<(usize, String)> = Vec::new();
    let mut ml_plans: Vec<MlPlan> = Vec::new();

    for step in 0..steps {
        let outcome: Result<(), EscrowError> = match rng.gen_range(0..10) {
            0 | 1 => {
                let sender = rng.gen_range(1..=n_parties);
                let receiver = rng.gen_range(1..=n_parties);
                let name = format!("cr{}", rng.gen_range(0..steps.max(1) / 2 + 1));
                let timeout = ledger.round() + rng.gen_range(0..5);
                let predicate = Circuit::sha256_preimage(sha256(&secret(&name, receiver)));
                let amount = rng.gen_range(0..8);
                ledger
                    .cr_deposit("fuzz", &name, sender, receiver, predicate, timeout, amount)
                    .map(|id| cr_names.push((id, name)))
            }
            2 | 3 => match cr_names.choose(&mut rng) {
                Some((id, name)) => {
                    let claimant = if rng.gen_bool(0.8) {
                        ledger.cr_session(*id)?.receiver
                    } else {
                        rng.gen_range(1..=n_parties)
                    };
                    let w = witness_for(&mut rng, name, claimant);
                    ledger.cr_claim(*id, claimant, &w).map(|_| ())
                }
                None => Ok(()),
            },
            4 => match cr_names.choose(&mut rng) {
                Some((id, _)) => ledger.cr_refund(*id).map(|_| ()),
                None => Ok(()),
            },
            5 => {
                let size = rng.gen_range(2..=n_parties);
                let mut members: Vec<PartyId> = (1..=n_parties).collect();
                members.shuffle(&mut rng);
                members.truncate(size);
                let name = format!("ml{step}");
                let share = rng.gen_range(1..4u64);
                let terms = MlTerms {
                    deposit: share * (size as u64 - 1),
                    predicates: members
                        .iter()
                        .map(|&p| Circuit::sha256_preimage(sha256(&secret(&name, p))))
                        .collect(),
                    timeout: ledger.round() + rng.gen_range(0..4),
                };
                let id = ledger.ml_open("fuzz", &name, members)?;
                ml_plans.push(MlPlan { id, name, terms });
                Ok(())
            }
            6 => match ml_plans.choose(&mut rng) {
                Some(plan) => {
                    let members = ledger.ml_session(plan.id)?.parties.clone();
                    let party = *members.choose(&mut rng).expect("non-empty");
                    let mut terms = plan.terms.clone();
                    if rng.gen_bool(0.15) {
                        terms.timeout += 1;
                    }
                    ledger.ml_lock(plan.id, party, terms)
                }
                None => Ok(()),
            },
            7 => match ml_plans.choose(&mut rng) {
                Some(plan) => ledger.ml_finalize(plan.id).map(|_| ()),
                None => Ok(()),
            },
            8 => match ml_plans.choose(&mut rng) {
                Some(plan) => {
                    let s = ledger.ml_session(plan.id)?;
                    let party = *s.parties.choose(&mut rng).expect("non-empty");
                    let w = witness_for(&mut rng, &plan.name, party);
                    ledger.ml_redeem(plan.id, party, &w).map(|_| ())
                }
                None => Ok(()),
            },
            _ => {
                ledger.tick();
                Ok(())
            }
        };
        match outcome {
            Err(e @ EscrowError::InvariantViolation(_)) => return Err(e),
            Err(_) => stats.rejected += 1,
            Ok(()) => stats.accepted += 1,
        }
        stats.operations += 1;
        ledger.invariant_check()?;
        ledger.session_audit()?;
    }

    // Drain: finalize stragglers and run every timeout.
    for plan in &ml_plans {
        if ledger.ml_session(plan.id)?.phase == MlPhase::Lock {
            ledger.ml_finalize(plan.id)?;
        }
    }
    let horizon = ledger.round() + 8;
    while ledger.round() < horizon {
        ledger.tick();
        ledger.invariant_check()?;
        ledger.session_audit()?;
    }
    if ledger.pool() != 0 {
        return Err(EscrowError::InvariantViolation(format!("{} coins stuck in escrow", ledger.pool())));
    }
    stats.rounds = ledger.round();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_traces_hold_invariants() {
        for seed in 0..200 {
            let stats = random_trace(seed, 120).unwrap();
            assert_eq!(stats.operations, 120);
        }
    }

    #[test]
    fn traces_exercise_both_paths() {
        let total = (0..50).map(|s| random_trace(s, 200).unwrap()).fold((0, 0), |acc, t| (acc.0 + t.accepted, acc.1 + t.rejected));
        assert!(total.0 > 1000 && total.1 > 1000, "{total:?}");
    }

    #[test]
    fn traces_are_deterministic() {
        assert_eq!(random_trace(9, 300).unwrap(), random_trace(9, 300).unwrap());
    }
}
