//! Two-player collateral game: a first mover who commits before the outcome
//! is known and a last mover who observes the outcome before acting.
//!
//! Payoffs, with stake `S`, collateral `c` and reward `R`:
//! * first player aborts: first gets `S − c`, last gets `S + c`;
//! * both cooperate: the winner gets `R`, the loser `0`;
//! * first cooperates, last aborts: first gets `S + c`, last gets `S − c`.

use serde::{Deserialize, Serialize};

use super::FairnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameOutcome {
    /// The last player wins the computation.
    Win,
    /// The last player loses the computation.
    Lose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FirstStrategy {
    Cooperate,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LastStrategy {
    Cooperate,
    Abort,
    /// Cooperate on a win, abort on a loss.
    AbortIfUnsatisfied,
}

impl LastStrategy {
    pub const ALL: [LastStrategy; 3] = [LastStrategy::Cooperate, LastStrategy::Abort, LastStrategy::AbortIfUnsatisfied];

    fn aborts(self, outcome: GameOutcome) -> bool {
        match self {
            LastStrategy::Cooperate => false,
            LastStrategy::Abort => true,
            LastStrategy::AbortIfUnsatisfied => outcome == GameOutcome::Lose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub first: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralGame {
    pub stake: f64,
    pub collateral: f64,
    pub reward: f64,
    pub outcome: GameOutcome,
    /// Pure-action payoffs for the given outcome, rows = first player
    /// (cooperate, abort), columns = last player (cooperate, abort).
    pub table: [[Payoff; 2]; 2],
    /// Abort-if-unsatisfied beats both alternatives at every outcome where
    /// they differ, and is never worse.
    pub abort_if_unsatisfied_dominates: bool,
    /// Subgame-perfect profile of the game with the given outcome.
    pub subgame_perfect: (FirstStrategy, LastStrategy),
    /// The first player's best reply to abort-if-unsatisfied on the branch
    /// where that strategy aborts, paired with it.
    pub equilibrium: (FirstStrategy, LastStrategy),
}

pub fn payoff(stake: f64, collateral: f64, reward: f64, outcome: GameOutcome, first: FirstStrategy, last_aborts: bool) -> Payoff {
    match (first, last_aborts) {
        (FirstStrategy::Abort, _) => Payoff { first: stake - collateral, last: stake + collateral },
        (FirstStrategy::Cooperate, true) => Payoff { first: stake + collateral, last: stake - collateral },
        (FirstStrategy::Cooperate, false) => match outcome {
            GameOutcome::Win => Payoff { first: 0.0, last: reward },
            GameOutcome::Lose => Payoff { first: reward, last: 0.0 },
        },
    }
}

pub fn collateral_game(stake: f64, collateral: f64, reward: f64, outcome: GameOutcome) -> Result<CollateralGame, FairnessError> {
    if !(collateral >= 0.0 && collateral < stake) {
        return Err(FairnessError::InvalidParameters(format!("collateral {collateral} must lie in [0, stake {stake})")));
    }
    if stake >= reward {
        return Err(FairnessError::InvalidParameters(format!("stake {stake} must be below reward {reward}")));
    }
    let pay = |o, f, last_aborts| payoff(stake, collateral, reward, o, f, last_aborts);
    let table = [
        [pay(outcome, FirstStrategy::Cooperate, false), pay(outcome, FirstStrategy::Cooperate, true)],
        [pay(outcome, FirstStrategy::Abort, false), pay(outcome, FirstStrategy::Abort, true)],
    ];

    let last_value = |s: LastStrategy, o: GameOutcome| pay(o, FirstStrategy::Cooperate, s.aborts(o)).last;
    let outcomes = [GameOutcome::Win, GameOutcome::Lose];
    let abort_if_unsatisfied_dominates = [LastStrategy::Cooperate, LastStrategy::Abort].iter().all(|&other| {
        let never_worse = outcomes
            .iter()
            .all(|&o| last_value(LastStrategy::AbortIfUnsatisfied, o) >= last_value(other, o));
        let strictly_where_different = outcomes
            .iter()
            .filter(|&&o| other.aborts(o) != LastStrategy::AbortIfUnsatisfied.aborts(o))
            .all(|&o| last_value(LastStrategy::AbortIfUnsatisfied, o) > last_value(other, o));
        never_worse && strictly_where_different
    });

    let best_last = if last_value(LastStrategy::Abort, outcome) > last_value(LastStrategy::Cooperate, outcome) {
        LastStrategy::Abort
    } else {
        LastStrategy::Cooperate
    };
    let first_reply = |o: GameOutcome, last_aborts: bool| {
        if pay(o, FirstStrategy::Cooperate, last_aborts).first > pay(o, FirstStrategy::Abort, last_aborts).first {
            FirstStrategy::Cooperate
        } else {
            FirstStrategy::Abort
        }
    };
    let subgame_perfect = (first_reply(outcome, best_last == LastStrategy::Abort), best_last);
    let equilibrium = (first_reply(GameOutcome::Lose, true), LastStrategy::AbortIfUnsatisfied);

    Ok(CollateralGame {
        stake,
        collateral,
        reward,
        outcome,
        table,
        abort_if_unsatisfied_dominates,
        subgame_perfect,
        equilibrium,
    })
}
