//! Single-target ranking metrics and call-frequency curves.
//!
//! With one relevant item per user, the ideal DCG is 1, so NDCG@K is
//! `1 / log2(rank + 1)` for a hit and 0 otherwise. Ranks are 1-based.

use alloc::vec::Vec;

/// 1 when the target is ranked within the top `k`.
pub fn hit_rate_at_k(rank: Option<usize>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    match rank {
        Some(r) if r >= 1 && r <= k => 1.0,
        _ => 0.0,
    }
}

pub fn ndcg_at_k(rank: Option<usize>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    match rank {
        Some(r) if r >= 1 && r <= k => 1.0 / libm::log2(r as f64 + 1.0),
        _ => 0.0,
    }
}

/// 1-based position of `target` in `ranked`.
pub fn rank_of<T: PartialEq>(ranked: &[T], target: &T) -> Option<usize> {
    ranked.iter().position(|x| x == target).map(|i| i + 1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RankingMetrics {
    pub hr10: f64,
    pub hr20: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
    pub users: usize,
}

/// Running sums; merging is associative, so partial results from parallel
/// workers can be combined in any grouping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSums {
    pub hr10: f64,
    pub hr20: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
    pub users: usize,
}

impl MetricSums {
    pub fn add(&mut self, rank: Option<usize>) {
        self.hr10 += hit_rate_at_k(rank, 10);
        self.hr20 += hit_rate_at_k(rank, 20);
        self.ndcg10 += ndcg_at_k(rank, 10);
        self.ndcg20 += ndcg_at_k(rank, 20);
        self.users += 1;
    }

    pub fn merge(self, other: MetricSums) -> MetricSums {
        MetricSums {
            hr10: self.hr10 + other.hr10,
            hr20: self.hr20 + other.hr20,
            ndcg10: self.ndcg10 + other.ndcg10,
            ndcg20: self.ndcg20 + other.ndcg20,
            users: self.users + other.users,
        }
    }

    pub fn mean(&self) -> RankingMetrics {
        if self.users == 0 {
            return RankingMetrics::default();
        }
        let n = self.users as f64;
        RankingMetrics {
            hr10: self.hr10 / n,
            hr20: self.hr20 / n,
            ndcg10: self.ndcg10 / n,
            ndcg20: self.ndcg20 / n,
            users: self.users,
        }
    }
}

pub fn mean_metrics(ranks: &[Option<usize>]) -> RankingMetrics {
    let mut s = MetricSums::default();
    for &r in ranks {
        s.add(r);
    }
    s.mean()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub bucket: usize,
    pub calls_per_interaction: f64,
}

/// Mean calls per interaction over consecutive buckets of `bucket_size`
/// sessions. The last bucket may be shorter.
pub fn lcf_curve(calls_per_session: &[u64], bucket_size: usize) -> Vec<CurvePoint> {
    assert!(bucket_size >= 1, "bucket size must be at least 1");
    calls_per_session
        .chunks(bucket_size)
        .enumerate()
        .map(|(i, c)| CurvePoint {
            bucket: i,
            calls_per_interaction: c.iter().sum::<u64>() as f64 / c.len() as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hit_rate_cases() {
        assert_eq!(hit_rate_at_k(Some(1), 10), 1.0);
        assert_eq!(hit_rate_at_k(Some(11), 10), 0.0);
        assert_eq!(mean_metrics(&[Some(1), Some(5), Some(12), None]).hr10, 0.5);
    }

    #[test]
    fn ndcg_cases() {
        assert_eq!(ndcg_at_k(Some(1), 10), 1.0);
        assert!((ndcg_at_k(Some(2), 10) - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert_eq!(ndcg_at_k(Some(11), 10), 0.0);
    }

    #[test]
    fn curve_buckets() {
        let c = lcf_curve(&[2, 2, 1, 0, 0], 2);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].calls_per_interaction, 2.0);
        assert_eq!(c[1].calls_per_interaction, 0.5);
        assert_eq!(c[2].calls_per_interaction, 0.0);
        assert!(lcf_curve(&vec![0; 10], 5).iter().all(|p| p.calls_per_interaction == 0.0));
    }
}
