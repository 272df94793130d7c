//! Round-robin rotation of an unfair schedule and the integer polynomials
//! whose roots in `x = e^{−δ}` are the only rates at which the rotation is
//! fair.

use serde::{Deserialize, Serialize};

use super::FairnessError;
use crate::schedule::{CashFlow, Schedule};

const GRID_POINTS: usize = 100_000;
const ROOT_TOL: f64 = 1e-12;

/// Integer polynomial, coefficient `k` multiplying `x^k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<i64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<i64>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
    }

    /// Removes every factor of `x` and `(x − 1)`, neither of which has a
    /// root inside `(0, 1)`.
    pub fn strip_boundary_factors(&self) -> Polynomial {
        let lead = self.coeffs.iter().take_while(|&&c| c == 0).count();
        let mut c: Vec<i64> = self.coeffs[lead..].to_vec();
        while c.len() > 1 && c.iter().sum::<i64>() == 0 {
            // Synthetic division by (x − 1): from the top coefficient down.
            let mut quotient = vec![0i64; c.len() - 1];
            let mut carry = 0i64;
            for k in (1..c.len()).rev() {
                carry += c[k];
                quotient[k - 1] = carry;
            }
            c = quotient;
        }
        Polynomial::new(c)
    }

    /// Sign-change roots in `(0, 1)` on a uniform grid, refined by bisection.
    pub fn roots_in_unit_interval(&self) -> Vec<f64> {
        let p = self.strip_boundary_factors();
        if p.degree().map_or(true, |d| d == 0) {
            return Vec::new();
        }
        let mut roots = Vec::new();
        let step = 1.0 / GRID_POINTS as f64;
        let mut x0 = step;
        let mut f0 = p.eval(x0);
        if f0 == 0.0 {
            roots.push(x0);
        }
        for k in 2..GRID_POINTS {
            let x1 = k as f64 * step;
            let f1 = p.eval(x1);
            if f1 == 0.0 {
                roots.push(x1);
            } else if f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
                roots.push(bisect(&p, x0, x1, f0));
            }
            x0 = x1;
            f0 = f1;
        }
        roots
    }
}

fn bisect(p: &Polynomial, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let lo_negative = f_lo < 0.0;
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let f = p.eval(mid);
        if f == 0.0 {
            return mid;
        }
        if (f < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRobinAnalysis {
    pub pair: (usize, usize),
    pub coefficients: Vec<i64>,
    pub degree_bound: u64,
    /// Roots `x ∈ (0, 1)`.
    pub roots: Vec<f64>,
    /// The per-round rates `δ = −ln x` matching `roots`.
    pub fair_rates: Vec<f64>,
    pub fair_rate_count: usize,
}

/// `k` back-to-back runs of `base`; run `ρ` is shifted by `ρ·τ` rounds and
/// party `i` plays the role of party `((i − 1 + ρ) mod n) + 1`.
pub fn round_robin_schedule(base: &Schedule, k: usize) -> Schedule {
    let n = base.n;
    let tau = base.total_rounds;
    let flows = (0..k).flat_map(|rho| {
        base.events.iter().map(move |e| {
            // Role r is played by party i with (i − 1 + ρ) mod n = r − 1.
            let party = (e.party - 1 + n - rho % n) % n + 1;
            CashFlow { party, round: e.round + rho as u64 * tau, ..*e }
        })
    });
    Schedule::from_flows(n, base.q, flows)
}

/// Gap polynomials between party 1 and every other party of the rotated
/// schedule, with coefficients `d_{1,t} − d_{j,t}` (net, in units of `q`).
pub fn round_robin_analysis(base: &Schedule, k: usize) -> Result<Vec<RoundRobinAnalysis>, FairnessError> {
    if k == 0 {
        return Err(FairnessError::ZeroRotations);
    }
    if base.n < 2 {
        return Err(FairnessError::InsufficientParties(base.n));
    }
    let rotated = round_robin_schedule(base, k);
    let len = rotated.total_rounds as usize + 1;
    let net = |party: usize| {
        let mut c = vec![0i64; len];
        for e in rotated.events_of(party) {
            c[e.round as usize] -= e.signed_q();
        }
        c
    };
    let first = net(1);
    let degree_bound = k as u64 * base.total_rounds;
    let analyses: Vec<RoundRobinAnalysis> = (2..=base.n)
        .map(|j| {
            let other = net(j);
            let poly = Polynomial::new(first.iter().zip(&other).map(|(a, b)| a - b).collect());
            let roots = poly.roots_in_unit_interval();
            let fair_rates = roots.iter().map(|x| -x.ln()).collect();
            RoundRobinAnalysis {
                pair: (1, j),
                fair_rate_count: roots.len(),
                coefficients: poly.coeffs,
                degree_bound,
                roots,
                fair_rates,
            }
        })
        .collect();
    if analyses.iter().all(|a| a.coefficients.is_empty()) {
        return Err(FairnessError::DegenerateFair);
    }
    Ok(analyses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{generate_schedule, ProtocolKind, ScenarioParams};

    fn base(p: ProtocolKind, n: usize) -> Schedule {
        generate_schedule(&ScenarioParams::new(p, n)).unwrap()
    }

    #[test]
    fn synthetic_division_removes_unit_roots() {
        // x (x − 1)^2 (2x − 1) = 2x^4 − 5x^3 + 4x^2 − x
        let p = Polynomial::new(vec![0, -1, 4, -5, 2]);
        assert_eq!(p.strip_boundary_factors(), Polynomial::new(vec![-1, 2]));
        let roots = p.roots_in_unit_interval();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 0.5).abs() < 1e-11);
    }

    #[test]
    fn multilock_rotation_is_degenerate() {
        for k in 1..=3 {
            assert_eq!(
                round_robin_analysis(&base(ProtocolKind::MultiLock, 4), k),
                Err(FairnessError::DegenerateFair)
            );
        }
    }

    #[test]
    fn rotation_preserves_totals() {
        let b = base(ProtocolKind::Ladder, 3);
        let r = round_robin_schedule(&b, 3);
        for p in 1..=3 {
            assert_eq!(r.net_q(p).unwrap(), 0);
        }
        assert_eq!(r.total_rounds, 3 * b.total_rounds);
        // In run ρ = 1, party 1 plays role 2: roof at round 1, claim of 2q at round 5.
        assert!(r.events.contains(&CashFlow::deposit(1, b.total_rounds + 1, 1)));
        assert!(r.events.contains(&CashFlow::refund(1, b.total_rounds + 5, 2)));
    }

    #[test]
    fn two_party_ladder_two_rotations() {
        // Gap polynomial: roles swap, so it factors as x(1−x)^2(1+x)(1−x^4) up to sign.
        let a = round_robin_analysis(&base(ProtocolKind::Ladder, 2), 2).unwrap();
        assert_eq!(a.len(), 1);
        let p = Polynomial::new(a[0].coefficients.clone());
        assert!(!p.is_zero());
        assert!(p.degree().unwrap() as u64 <= a[0].degree_bound);
        for x in [0.1f64, 0.37, 0.8] {
            let expected = x * (1.0 - x) * (1.0 - x) * (1.0 + x) * (1.0 - x.powi(4));
            assert!((p.eval(x).abs() - expected.abs()).abs() < 1e-12);
        }
        assert_eq!(a[0].fair_rate_count, 0);
    }
}
