use crate::environment::Signal;

/// Tabular `Q(s^{N_κ(i)}, a^{N_κ(i)})` for one agent and one signal.
///
/// Keys are `state * L^{|N|} + local action index`, with the lowest-numbered
/// neighbour as the least significant digit.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedQTable {
    signal: Signal,
    neighborhood: Vec<usize>,
    levels: usize,
    local_actions: usize,
    values: Vec<f64>,
}

impl TruncatedQTable {
    /// Zero-initialized table. `None` if the key space overflows.
    pub fn new(signal: Signal, neighborhood: Vec<usize>, n_states: usize, levels: usize) -> Option<Self> {
        let local_actions = (0..neighborhood.len()).try_fold(1usize, |acc, _| acc.checked_mul(levels))?;
        let size = local_actions.checked_mul(n_states)?;
        Some(Self {
            signal,
            neighborhood,
            levels,
            local_actions,
            values: vec![0.0; size],
        })
    }

    pub fn signal(&self) -> Signal {
        self.signal
    }

    pub fn neighborhood(&self) -> &[usize] {
        &self.neighborhood
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Key from a local action tuple ordered like [`Self::neighborhood`].
    pub fn key(&self, state: usize, local_actions: &[usize]) -> usize {
        debug_assert_eq!(local_actions.len(), self.neighborhood.len());
        let idx = local_actions.iter().rev().fold(0, |acc, &a| acc * self.levels + a);
        state * self.local_actions + idx
    }

    /// Key from a full joint action, reading only the neighbourhood's entries.
    pub fn key_from_joint(&self, state: usize, joint: &[usize]) -> usize {
        let idx = self.neighborhood.iter().rev().fold(0, |acc, &j| acc * self.levels + joint[j]);
        state * self.local_actions + idx
    }

    pub fn get(&self, key: usize) -> f64 {
        self.values[key]
    }

    /// `Q(key) ← (1 - ζ) Q(key) + ζ (f - μ̂ + Q(key))`, i.e.
    /// `Q(key) + ζ (f - μ̂)`. Other entries are untouched.
    pub fn update(&mut self, key: usize, f: f64, mu: f64, zeta: f64) {
        self.values[key] += zeta * (f - mu);
    }

    /// `Q(key) ← (1 - ζ) Q(key) + ζ (f - μ̂ + Q(next))`.
    pub fn update_td(&mut self, key: usize, next: usize, f: f64, mu: f64, zeta: f64) {
        let target = f - mu + self.values[next];
        self.values[key] = (1.0 - zeta) * self.values[key] + zeta * target;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> TruncatedQTable {
        TruncatedQTable::new(Signal::Reward, vec![0, 2], 2, 2).unwrap()
    }

    #[test]
    fn keys_follow_neighbourhood_order() {
        let q = table();
        assert_eq!(q.len(), 8);
        assert_eq!(q.key(1, &[1, 0]), 5);
        assert_eq!(q.key_from_joint(1, &[1, 1, 0]), 5);
        assert_eq!(q.key_from_joint(0, &[0, 1, 1]), 2);
    }

    #[test]
    fn plain_update_examples() {
        let mut q = table();
        q.values[3] = 1.0;
        q.update(3, 3.0, 1.0, 0.5);
        assert_eq!(q.get(3), 2.0);
        let before = q.clone();
        q.update(3, 10.0, 1.0, 0.0);
        assert_eq!(q, before);
        q.update(1, 4.0, 0.0, 0.5);
        q.update(6, -2.0, 0.0, 0.5);
        assert_eq!((q.get(1), q.get(6), q.get(3)), (2.0, -1.0, 2.0));
        assert_eq!(q.values().iter().filter(|v| **v != 0.0).count(), 3);
    }

    #[test]
    fn td_update_examples() {
        let mut q = table();
        q.update_td(2, 2, 1.5, 1.5, 0.3);
        assert!(q.values().iter().all(|v| *v == 0.0));

        // ζ = 1 from a fresh table with a zero bootstrap matches the plain rule.
        let mut a = table();
        let mut b = table();
        a.update_td(4, 0, 3.0, 1.0, 1.0);
        b.update(4, 3.0, 1.0, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn td_constant_signal_settles() {
        // One state, one action: the bootstrap cancels, so Q only moves while
        // μ̂ is still catching up with f. Starting μ̂ at f keeps Q at 0.
        let run = |mu0: f64| {
            let mut q = TruncatedQTable::new(Signal::Cost, vec![0], 1, 1).unwrap();
            let mut mu = mu0;
            let mut last_step = f64::INFINITY;
            for t in 0..20_000 {
                let zeta = 0.5 / (1.0 + t as f64).powf(0.6);
                mu = (1.0 - zeta) * mu + zeta * 4.0;
                let before = q.get(0);
                q.update_td(0, 0, 4.0, mu, zeta);
                last_step = (q.get(0) - before).abs();
            }
            (q.get(0), mu, last_step)
        };
        let (q, mu, _) = run(4.0);
        assert!(q.abs() < 1e-12 && (mu - 4.0).abs() < 1e-12);
        let (q, mu, step) = run(0.0);
        assert!((mu - 4.0).abs() < 1e-9);
        assert!(q.is_finite() && step < 1e-12);
    }
}
