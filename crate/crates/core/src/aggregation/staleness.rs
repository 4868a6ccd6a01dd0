use std::collections::{BTreeMap, VecDeque};

/// Sliding window of observed staleness values with an order-statistics
/// index, so the percentile query never sorts.
#[derive(Debug, Clone)]
pub struct StalenessTracker {
    window: VecDeque<u64>,
    counts: BTreeMap<u64, usize>,
    capacity: usize,
    s_percent: f64,
    bootstrap_len: u64,
    observed_count: u64,
}

impl StalenessTracker {
    /// `capacity` is the window length W; `s_percent` lies in (0, 100].
    pub fn new(capacity: usize, s_percent: f64, bootstrap_len: u64) -> Self {
        assert!(capacity > 0, "staleness window must be non-empty");
        assert!(
            s_percent > 0.0 && s_percent <= 100.0,
            "s_percent must lie in (0, 100]"
        );
        StalenessTracker {
            window: VecDeque::with_capacity(capacity),
            counts: BTreeMap::new(),
            capacity,
            s_percent,
            bootstrap_len,
            observed_count: 0,
        }
    }

    pub fn record(&mut self, tau: u64) {
        if self.window.len() == self.capacity {
            if let Some(old) = self.window.pop_front() {
                if let Some(c) = self.counts.get_mut(&old) {
                    *c -= 1;
                    if *c == 0 {
                        self.counts.remove(&old);
                    }
                }
            }
        }
        self.window.push_back(tau);
        *self.counts.entry(tau).or_insert(0) += 1;
        self.observed_count += 1;
    }

    pub fn observed_count(&self) -> u64 {
        self.observed_count
    }

    pub fn window(&self) -> impl ExactSizeIterator<Item = u64> + '_ {
        self.window.iter().copied()
    }

    pub fn s_percent(&self) -> f64 {
        self.s_percent
    }

    pub fn is_bootstrapping(&self) -> bool {
        self.observed_count < self.bootstrap_len || self.window.is_empty()
    }

    /// Nearest-rank `s_percent`-th percentile of the window; `None` while
    /// bootstrapping.
    pub fn tau_threshold(&self) -> Option<f64> {
        if self.is_bootstrapping() {
            return None;
        }
        let rank = rank_for(self.s_percent, self.window.len());
        let mut seen = 0;
        for (&value, &count) in &self.counts {
            seen += count;
            if seen >= rank {
                return Some(value as f64);
            }
        }
        unreachable!("rank {rank} exceeds window length {}", self.window.len())
    }
}

fn rank_for(percent: f64, n: usize) -> usize {
    ((percent / 100.0 * n as f64).ceil() as usize).clamp(1, n)
}

/// Sort-based nearest-rank percentile over an arbitrary sample.
pub fn nearest_rank(values: &[f64], percent: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[rank_for(percent, sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn ring_eviction_and_counting() {
        let mut t = StalenessTracker::new(4, 99.7, 0);
        t.record(3);
        assert_eq!(t.window().collect::<Vec<_>>(), vec![3]);
        let mut t = StalenessTracker::new(4, 99.7, 0);
        for v in [1, 2, 3, 4, 9] {
            t.record(v);
        }
        assert_eq!(t.window().collect::<Vec<_>>(), vec![2, 3, 4, 9]);
        let mut t = StalenessTracker::new(10, 50.0, 0);
        for i in 0..1000 {
            t.record(i % 7);
        }
        assert_eq!(t.observed_count(), 1000);
    }

    #[test]
    fn percentile_examples() {
        let mut t = StalenessTracker::new(1000, 99.7, 0);
        t.record(5);
        assert_eq!(t.tau_threshold(), Some(5.0));
        let mut t = StalenessTracker::new(1000, 50.0, 0);
        (1..=100).for_each(|v| t.record(v));
        assert_eq!(t.tau_threshold(), Some(50.0));
    }

    #[test]
    fn not_ready_during_bootstrap() {
        let mut t = StalenessTracker::new(100, 90.0, 3);
        assert_eq!(t.tau_threshold(), None);
        t.record(1);
        t.record(2);
        assert!(t.is_bootstrapping());
        assert_eq!(t.tau_threshold(), None);
        t.record(3);
        assert_eq!(t.tau_threshold(), Some(3.0));
    }

    #[test]
    fn d1_tail_percentile_sits_near_mu_plus_three_sigma() {
        let normal: Normal<f64> = Normal::new(6.0, 2.0).unwrap();
        let mut r = rng::stream(5, "d1");
        let mut t = StalenessTracker::new(1000, 99.7, 0);
        for _ in 0..1000 {
            t.record(normal.sample(&mut r).max(0.0).round() as u64);
        }
        let thres = t.tau_threshold().unwrap();
        assert!((thres - 12.0).abs() <= 1.0, "{thres}");
    }

    #[test]
    fn streaming_matches_sort_oracle() {
        let mut r = rng::stream(9, "oracle");
        let mut t = StalenessTracker::new(64, 87.5, 0);
        for _ in 0..500 {
            t.record(r.random_range(0..40));
            let window: Vec<f64> = t.window().map(|v| v as f64).collect();
            assert_eq!(t.tau_threshold(), nearest_rank(&window, 87.5));
        }
    }
}
