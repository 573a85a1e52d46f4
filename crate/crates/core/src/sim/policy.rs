//! Decaying epsilon-greedy Q-learning over migration candidates, with a
//! per-node migration cap per monitoring round.

use std::collections::BTreeMap;

use rand::Rng;

use crate::cluster::NodeId;

/// Reward clamp; Q values stay within `R_MAX / (1 - gamma)`.
pub const R_MAX: f64 = 1.0;

/// One possible migration: move `task` from `source` to `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub task: usize,
    pub source: NodeId,
    pub target: NodeId,
    /// Predicted makespan reduction in seconds.
    pub gain_s: f64,
}

/// Discretized state: target load bucket.
pub type State = u8;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: BTreeMap<(State, usize), f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        QTable { values: BTreeMap::new(), alpha, gamma }
    }

    pub fn get(&self, s: State, action: usize) -> f64 {
        self.values.get(&(s, action)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, s: State, action: usize, v: f64) {
        self.values.insert((s, action), v);
    }

    pub fn best_value(&self, s: State) -> f64 {
        self.values.range((s, 0)..=(s, usize::MAX)).map(|(_, v)| *v).fold(0.0, f64::max)
    }

    /// `Q <- Q + alpha (r + gamma max Q(s') - Q)` with `r` clamped to `R_MAX`.
    pub fn update(&mut self, s: State, action: usize, reward: f64, next: State) {
        let r = reward.clamp(-R_MAX, R_MAX);
        let q = self.get(s, action);
        let target = r + self.gamma * self.best_value(next);
        self.set(s, action, q + self.alpha * (target - q));
    }

    pub fn max_abs(&self) -> f64 {
        self.values.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn bound(&self) -> f64 {
        R_MAX / (1.0 - self.gamma)
    }
}

/// Action key: the source node of a candidate.
pub fn action_of(c: &Candidate) -> usize {
    c.source.0
}

/// With probability `epsilon` a uniform candidate, otherwise the argmax of
/// `Q(state, action)` (ties by predicted gain, then by position).
pub fn epsilon_greedy_migration<R: Rng + ?Sized>(candidates: &[Candidate], q: &QTable, state: State, epsilon: f64, rng: &mut R) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Some(rng.random_range(0..candidates.len()));
    }
    let mut best = 0;
    for (k, c) in candidates.iter().enumerate().skip(1) {
        let (qc, qb) = (q.get(state, action_of(c)), q.get(state, action_of(&candidates[best])));
        if qc > qb || (qc == qb && c.gain_s > candidates[best].gain_s) {
            best = k;
        }
    }
    Some(best)
}

/// Migrations touching each node in the current round.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationCap {
    theta: u32,
    round: u64,
    used: Vec<u32>,
}

impl MigrationCap {
    pub fn new(nodes: usize, theta: u32) -> Self {
        MigrationCap { theta, round: 0, used: vec![0; nodes] }
    }

    /// Resets counts when `round` advances.
    pub fn enter_round(&mut self, round: u64) {
        if round != self.round {
            self.round = round;
            self.used.iter_mut().for_each(|u| *u = 0);
        }
    }

    pub fn allows(&self, c: &Candidate) -> bool {
        self.used[c.source.0] < self.theta && self.used[c.target.0] < self.theta
    }

    /// Records `c`; returns false (and records nothing) if the cap is hit.
    pub fn take(&mut self, c: &Candidate) -> bool {
        if !self.allows(c) {
            return false;
        }
        self.used[c.source.0] += 1;
        self.used[c.target.0] += 1;
        true
    }

    pub fn used(&self, node: NodeId) -> u32 {
        self.used[node.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn cand(task: usize, source: usize, target: usize) -> Candidate {
        Candidate { task, source: NodeId(source), target: NodeId(target), gain_s: 1.0 }
    }

    #[test]
    fn greedy_picks_dominant_entry() {
        let mut q = QTable::new(0.5, 0.9);
        q.set(0, 2, 5.0);
        let cs = [cand(0, 1, 0), cand(1, 2, 0), cand(2, 3, 0)];
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy_migration(&cs, &q, 0, 0.0, &mut rng), Some(1));
        }
        assert_eq!(epsilon_greedy_migration(&[], &q, 0, 0.0, &mut rng), None);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = QTable::new(0.5, 0.9);
        let cs: Vec<Candidate> = (0..5).map(|k| cand(k, k + 1, 0)).collect();
        let mut rng = seed::rng(42);
        let mut counts = [0u32; 5];
        let draws = 10_000;
        for _ in 0..draws {
            counts[epsilon_greedy_migration(&cs, &q, 0, 1.0, &mut rng).unwrap()] += 1;
        }
        let expected = draws as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (f64::from(c) - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 4 degrees of freedom.
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn cap_rejects_second_migration_in_round() {
        let mut cap = MigrationCap::new(4, 1);
        assert!(cap.take(&cand(0, 1, 0)));
        assert!(!cap.take(&cand(1, 1, 2)));
        assert!(!cap.take(&cand(1, 3, 0)));
        assert!(cap.take(&cand(1, 3, 2)));
        cap.enter_round(1);
        assert!(cap.take(&cand(2, 1, 0)));
        assert_eq!(cap.used(NodeId(1)), 1);
    }

    #[test]
    fn update_moves_toward_target() {
        let mut q = QTable::new(0.5, 0.0);
        q.update(1, 3, 1.0, 1);
        assert_eq!(q.get(1, 3), 0.5);
        q.update(1, 3, 50.0, 1);
        assert_eq!(q.get(1, 3), 0.75);
    }

    proptest! {
        #[test]
        fn q_values_stay_bounded(rewards in proptest::collection::vec((-100.0f64..100.0, 0u8..4, 0usize..6, 0u8..4), 1..400), gamma in 0.0f64..0.95) {
            let mut q = QTable::new(0.7, gamma);
            for (r, s, a, s2) in rewards {
                q.update(s, a, r, s2);
                prop_assert!(q.max_abs() <= q.bound() + 1e-9);
            }
        }

        #[test]
        fn cap_never_exceeded(moves in proptest::collection::vec((0usize..6, 0usize..6), 0..100), theta in 1u32..5) {
            let mut cap = MigrationCap::new(6, theta);
            for (k, (s, t)) in moves.into_iter().enumerate() {
                if s == t { continue; }
                cap.enter_round(k as u64 / 10);
                cap.take(&cand(k, s, t));
                for n in 0..6 {
                    prop_assert!(cap.used(NodeId(n)) <= theta);
                }
            }
        }
    }
}
