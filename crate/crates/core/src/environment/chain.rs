//! Action-independent Markov chain over target cells.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::physics::Ergodicity;

const STOCHASTIC_TOL: f64 = 1e-9;
/// Total-variation values at or below this are treated as exact mixing when
/// fitting `m`; dividing roundoff by `ρ^t` would otherwise blow up.
const TV_NOISE_FLOOR: f64 = 1e-12;

/// Row-stochastic, irreducible and aperiodic transition matrix with an
/// initial distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetChain {
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl TargetChain {
    pub fn new(transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self, EnvError> {
        let n = transition.len();
        if n == 0 {
            return Err(EnvError::InvalidChain("transition matrix is empty".into()));
        }
        for (s, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(EnvError::InvalidChain(format!("row {s} has {} entries, expected {n}", row.len())));
            }
            check_distribution(row).map_err(|e| EnvError::InvalidChain(format!("row {s}: {e}")))?;
        }
        if initial.len() != n {
            return Err(EnvError::InvalidChain("initial distribution length differs from state count".into()));
        }
        check_distribution(&initial).map_err(|e| EnvError::InvalidChain(format!("initial distribution: {e}")))?;
        if !is_primitive(&transition) {
            return Err(EnvError::InvalidChain(
                "chain is not irreducible and aperiodic (no power of P is strictly positive)".into(),
            ));
        }
        let chain = Self { transition, initial };
        let unit = chain.unit_eigenvalue_count();
        if unit != 1 {
            return Err(EnvError::InvalidChain(format!("eigenvalue 1 has multiplicity {unit}")));
        }
        Ok(chain)
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.transition[s]
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(&self.transition[s], rng)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial, rng)
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |i, j| self.transition[i][j])
    }

    fn eigen_moduli(&self) -> Vec<f64> {
        let mut moduli: Vec<f64> = self.matrix().complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        moduli
    }

    fn unit_eigenvalue_count(&self) -> usize {
        let p = self.matrix();
        p.complex_eigenvalues()
            .iter()
            .filter(|z| (z.re - 1.0).abs() < 1e-9 && z.im.abs() < 1e-9)
            .count()
    }

    /// Unique `π` with `πP = π` and `Σπ = 1`.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, EnvError> {
        stationary_distribution(&self.transition)
    }

    /// Second-largest eigenvalue modulus, snapped to 0 below 1e-12.
    pub fn slem(&self) -> f64 {
        let moduli = self.eigen_moduli();
        let rho = moduli.get(1).copied().unwrap_or(0.0);
        if rho < 1e-12 {
            0.0
        } else {
            rho
        }
    }

    /// `ρ` = SLEM, `m` = smallest constant with `d_TV(P^t(s, ·), π) <= m ρ^t`
    /// for every start state and `t <= horizon`, floored at 1.
    pub fn ergodicity_certificate(&self, horizon: usize) -> Result<Ergodicity, EnvError> {
        let rho = self.slem();
        if rho >= 1.0 - 1e-12 {
            return Err(EnvError::InvalidChain(format!("second eigenvalue modulus {rho} is not below 1")));
        }
        let pi = self.stationary_distribution()?;
        let n = self.n_states();
        let mut m: f64 = 1.0;
        for start in 0..n {
            let mut dist = vec![0.0; n];
            dist[start] = 1.0;
            for t in 0..=horizon {
                let tv = total_variation(&dist, &pi);
                if tv > TV_NOISE_FLOOR {
                    let decay = rho.powi(t as i32);
                    if decay == 0.0 {
                        return Err(EnvError::InvalidChain(format!(
                            "total variation {tv:e} at t = {t} exceeds the certified rate"
                        )));
                    }
                    m = m.max(tv / decay);
                }
                dist = self.propagate(&dist);
            }
        }
        Ok(Ergodicity { m, rho })
    }

    /// One step of the forward equation `d P`.
    pub fn propagate(&self, dist: &[f64]) -> Vec<f64> {
        let n = self.n_states();
        let mut out = vec![0.0; n];
        for (s, &mass) in dist.iter().enumerate() {
            if mass != 0.0 {
                for (o, &p) in out.iter_mut().zip(&self.transition[s]) {
                    *o += mass * p;
                }
            }
        }
        out
    }

    /// `P f` for a state function `f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.transition
            .iter()
            .map(|row| row.iter().zip(f).map(|(p, v)| p * v).sum())
            .collect()
    }
}

/// `sup_A |p(A) - q(A)|` = half the L1 distance.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Stationary vector of any row-stochastic matrix whose unit eigenvalue is
/// simple. Solved by replacing one balance equation with normalization.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>, EnvError> {
    let n = transition.len();
    let a = balance_system(transition);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut pi = lu
        .solve(&b)
        .ok_or_else(|| EnvError::InvalidChain("balance equations are singular (reducible chain)".into()))?;
    // One round of iterative refinement.
    let residual = &b - &a * &pi;
    if let Some(correction) = lu.solve(&residual) {
        pi += correction;
    }
    let pi: Vec<f64> = pi.iter().copied().collect();
    if pi.iter().any(|&p| p < -1e-12 || !p.is_finite()) {
        return Err(EnvError::InvalidChain("stationary solve produced negative mass".into()));
    }
    let pi: Vec<f64> = pi.into_iter().map(|p| p.max(0.0)).collect();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let flow: f64 = (0..n).map(|i| pi[i] * transition[i][j]).sum();
        worst = worst.max((flow - pi[j]).abs());
    }
    if worst > 1e-12 {
        return Err(EnvError::InvalidChain(format!("stationary residual {worst:e} exceeds 1e-12")));
    }
    Ok(pi)
}

/// `(Pᵀ - I)` with its last row replaced by ones.
fn balance_system(transition: &[Vec<f64>]) -> DMatrix<f64> {
    let n = transition.len();
    let mut a = DMatrix::from_fn(n, n, |i, j| transition[j][i] - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    a
}

fn check_distribution(p: &[f64]) -> Result<(), String> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err("entries must be finite and nonnegative".into());
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("entries sum to {total}, expected 1"));
    }
    Ok(())
}

/// Some `P^k`, `k <= n²`, is strictly positive. Equivalent to irreducible and
/// aperiodic for a finite chain (Wielandt's bound is `(n-1)² + 1`).
fn is_primitive(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    let support: Vec<Vec<bool>> = p.iter().map(|row| row.iter().map(|&v| v > 0.0).collect()).collect();
    let mut power = support.clone();
    for _ in 0..(n * n).max(1) {
        if power.iter().all(|row| row.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if power[i][k] {
                    for j in 0..n {
                        next[i][j] |= support[k][j];
                    }
                }
            }
        }
        power = next;
    }
    false
}

pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // Roundoff can leave the cumulative sum a hair under 1.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn chain(p: Vec<Vec<f64>>) -> TargetChain {
        let n = p.len();
        TargetChain::new(p, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn symmetric_two_state_stationary() {
        let pi = chain(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).stationary_distribution().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_two_state_balance() {
        // Balance: 0.1 π0 = 0.5 π1 → π = (5/6, 1/6).
        let pi = chain(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).stationary_distribution().unwrap();
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn lazy_chain_has_same_stationary_vector() {
        let p = vec![vec![0.2, 0.7, 0.1], vec![0.3, 0.3, 0.4], vec![0.6, 0.1, 0.3]];
        let lazy: Vec<Vec<f64>> = p
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, v)| 0.5 * (v + if i == j { 1.0 } else { 0.0 })).collect())
            .collect();
        let a = chain(p).stationary_distribution().unwrap();
        let b = chain(lazy).stationary_distribution().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn reducible_and_periodic_chains_rejected() {
        let reducible = TargetChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5]);
        assert!(matches!(reducible, Err(EnvError::InvalidChain(_))));
        let periodic = TargetChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 0.5]);
        assert!(matches!(periodic, Err(EnvError::InvalidChain(_))));
        let not_stochastic = TargetChain::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]], vec![0.5, 0.5]);
        assert!(matches!(not_stochastic, Err(EnvError::InvalidChain(_))));
    }

    #[test]
    fn certificate_rank_one_chain() {
        let c = chain(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let erg = c.ergodicity_certificate(200).unwrap();
        assert_eq!(erg.rho, 0.0);
        assert_eq!(erg.m, 1.0);
    }

    #[test]
    fn certificate_symmetric_two_state() {
        // Eigenvalues of [[1-p, p], [p, 1-p]] are 1 and 1 - 2p.
        let c = chain(vec![vec![0.9, 0.1], vec![0.1, 0.9]]);
        let erg = c.ergodicity_certificate(200).unwrap();
        assert!((erg.rho - 0.8).abs() < 1e-12);
        // From a corner, d_TV(P^t, π) = 0.5 * 0.8^t, so the t = 0 term rules: m = 1.
        assert!((erg.m - 1.0).abs() < 1e-9);
    }

    #[test]
    fn certificate_lazy_three_cycle_matches_power_iteration() {
        // Lazy walk on a 3-cycle: stay 1/2, move to each neighbor 1/4.
        let p = vec![vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.25], vec![0.25, 0.25, 0.5]];
        let c = chain(p);
        // Circulant eigenvalues: 1/2 + 1/4 (ω + ω²) = 1/4 for both nontrivial modes.
        assert!((c.slem() - 0.25).abs() < 1e-12);
        let erg = c.ergodicity_certificate(200).unwrap();
        let pi = c.stationary_distribution().unwrap();
        for start in 0..3 {
            let mut d = vec![0.0; 3];
            d[start] = 1.0;
            for t in 0..60 {
                assert!(total_variation(&d, &pi) <= erg.m * erg.rho.powi(t) + 1e-12);
                d = c.propagate(&d);
            }
        }
    }

    #[test]
    fn inverse_cdf_sampler_replays_by_hand() {
        let c = chain(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let mut a = rng::environment_stream(11);
        let mut b = rng::environment_stream(11);
        let mut s = 0;
        for _ in 0..100 {
            let next = c.sample_next(s, &mut a);
            let u: f64 = b.random();
            assert_eq!(next, if u < 0.5 { 0 } else { 1 });
            s = next;
        }
    }
}
