//! Diversity measures over repeated list answers.
//!
//! For one (prompt, condition) the lists from every successful repetition are
//! concatenated into a multiset. From it we read the number of distinct items
//! and the plug-in entropy in bits; across prompts we build frequency-rank
//! curves, histograms of distinct counts, table aggregates and paired t-tests.

mod special;
mod ttest;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{ln_beta, ln_gamma, reg_inc_beta, student_t_sf};
pub use ttest::{paired_t_test, TTestResult};

use crate::run_orchestrator::ResponseRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no input")]
    EmptyInput,
    #[error("records mix prompts or conditions: {0}")]
    MixedRecords(String),
    #[error("length mismatch: baseline has {baseline}, treatment has {treatment}")]
    LengthMismatch { baseline: usize, treatment: usize },
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired differences have zero variance")]
    DegenerateVariance,
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDf(u64),
    #[error("bin width must be positive")]
    InvalidBinWidth,
}

/// Item tallies for one (prompt, condition).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub prompt_id: String,
    pub condition: String,
    pub total: u64,
    pub counts: BTreeMap<String, u64>,
}

impl FrequencyTable {
    pub fn new(prompt_id: &str, condition: &str) -> Self {
        Self {
            prompt_id: prompt_id.to_string(),
            condition: condition.to_string(),
            total: 0,
            counts: BTreeMap::new(),
        }
    }

    /// Adds one answer list. Repeated items within the list each count.
    pub fn add_list<S: AsRef<str>>(&mut self, items: &[S]) {
        for it in items {
            *self.counts.entry(it.as_ref().to_string()).or_insert(0) += 1;
            self.total += 1;
        }
    }

    /// Counts in descending order, ties broken by ascending item.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(k, &c)| (k.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// Tallies the items of every successful record. All records must share one
/// prompt id and condition.
pub fn build_frequency_table(records: &[ResponseRecord]) -> Result<FrequencyTable, StatsError> {
    let first = records.first().ok_or(StatsError::EmptyInput)?;
    let mut table = FrequencyTable::new(&first.prompt_id, &first.condition);
    for r in records {
        if r.prompt_id != first.prompt_id || r.condition != first.condition {
            return Err(StatsError::MixedRecords(format!(
                "{}/{} vs {}/{}",
                first.prompt_id, first.condition, r.prompt_id, r.condition
            )));
        }
        if r.parse_status.is_success() {
            table.add_list(&r.items);
        }
    }
    if table.total == 0 {
        return Err(StatsError::EmptyInput);
    }
    Ok(table)
}

pub fn count_unique(table: &FrequencyTable) -> usize {
    table.counts.len()
}

/// Plug-in entropy −Σ p log2 p with p = count / total.
pub fn entropy_bits(table: &FrequencyTable) -> f64 {
    if table.total == 0 {
        return 0.0;
    }
    let total = table.total as f64;
    let h: f64 = table
        .counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // A single item gives -1 * log2(1) = -0.0.
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    pub prompt_id: String,
    pub condition: String,
    pub unique_count: usize,
    pub entropy_bits: f64,
}

impl DiversityStats {
    pub fn from_table(table: &FrequencyTable) -> Self {
        Self {
            prompt_id: table.prompt_id.clone(),
            condition: table.condition.clone(),
            unique_count: count_unique(table),
            entropy_bits: entropy_bits(table),
        }
    }
}

/// Mean frequency at each 1-based rank across prompts, padding prompts with
/// fewer distinct items with zeros.
pub fn frequency_rank_curve(tables: &[FrequencyTable]) -> Result<Vec<(usize, f64)>, StatsError> {
    if tables.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let max_rank = tables.iter().map(count_unique).max().unwrap_or(0);
    let mut sums = vec![0u64; max_rank];
    for t in tables {
        for (slot, (_, c)) in sums.iter_mut().zip(t.ranked()) {
            *slot += c;
        }
    }
    let n = tables.len() as f64;
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, s)| (i + 1, s as f64 / n))
        .collect())
}

/// Histogram with bins `[j*w, (j+1)*w)`, reported from the lowest to the
/// highest occupied bin inclusive.
pub fn unique_count_histogram(
    counts: &[u64],
    bin_width: u64,
) -> Result<Vec<(u64, u64)>, StatsError> {
    if bin_width == 0 {
        return Err(StatsError::InvalidBinWidth);
    }
    let lo = counts.iter().min().ok_or(StatsError::EmptyInput)? / bin_width;
    let hi = counts.iter().max().ok_or(StatsError::EmptyInput)? / bin_width;
    let mut freq = vec![0u64; (hi - lo + 1) as usize];
    for &c in counts {
        freq[(c / bin_width - lo) as usize] += 1;
    }
    Ok(freq
        .into_iter()
        .enumerate()
        .map(|(i, f)| ((lo + i as u64) * bin_width, f))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_entropy: f64,
    pub median_count: f64,
}

pub fn aggregate(stats: &[DiversityStats]) -> Result<Aggregate, StatsError> {
    if stats.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mean_entropy = stats.iter().map(|s| s.entropy_bits).sum::<f64>() / stats.len() as f64;
    let counts: Vec<u64> = stats.iter().map(|s| s.unique_count as u64).collect();
    Ok(Aggregate {
        mean_entropy,
        median_count: median(&counts).expect("non-empty"),
    })
}

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] as f64 + v[mid] as f64) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(pairs: &[(&str, u64)]) -> FrequencyTable {
        let mut t = FrequencyTable::new("p", "regular");
        for &(k, c) in pairs {
            t.counts.insert(k.to_string(), c);
            t.total += c;
        }
        t
    }

    fn lists(xs: &[&[&str]]) -> FrequencyTable {
        let mut t = FrequencyTable::new("p", "regular");
        for l in xs {
            t.add_list(l);
        }
        t
    }

    #[test]
    fn tally_concatenates() {
        let t = lists(&[&["a", "b"], &["a", "c"]]);
        assert_eq!(t.total, 4);
        assert_eq!(t.counts, table(&[("a", 2), ("b", 1), ("c", 1)]).counts);
        let t = lists(&[&["a", "a"]]);
        assert_eq!(t.total, 2);
        assert_eq!(t.counts["a"], 2);
    }

    #[test]
    fn empty_records_rejected() {
        assert_eq!(build_frequency_table(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_unique(&table(&[("a", 2), ("b", 1), ("c", 1)])), 3);
        assert_eq!(count_unique(&table(&[("a", 999)])), 1);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy_bits(&table(&[("a", 2), ("b", 1), ("c", 1)])) - 1.5).abs() < 1e-12);
        let uniform: Vec<(String, u64)> = (0..8).map(|i| (format!("x{i}"), 1)).collect();
        let uniform: Vec<(&str, u64)> = uniform.iter().map(|(k, c)| (k.as_str(), *c)).collect();
        assert!((entropy_bits(&table(&uniform)) - 3.0).abs() < 1e-12);
        assert_eq!(entropy_bits(&table(&[("a", 5)])), 0.0);
    }

    #[test]
    fn rank_curve_examples() {
        let one = frequency_rank_curve(&[table(&[("a", 5), ("b", 3), ("c", 2)])]).unwrap();
        assert_eq!(one, vec![(1, 5.0), (2, 3.0), (3, 2.0)]);
        let two = frequency_rank_curve(&[
            table(&[("a", 5), ("b", 3), ("c", 2)]),
            table(&[("x", 4), ("y", 4)]),
        ])
        .unwrap();
        assert_eq!(two, vec![(1, 4.5), (2, 3.5), (3, 1.0)]);
        assert_eq!(frequency_rank_curve(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn ranked_breaks_ties_by_item() {
        let t = table(&[("b", 2), ("a", 2), ("c", 5)]);
        assert_eq!(t.ranked(), vec![("c", 5), ("a", 2), ("b", 2)]);
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(
            unique_count_histogram(&[18, 22, 35], 10).unwrap(),
            vec![(10, 1), (20, 1), (30, 1)]
        );
        assert_eq!(
            unique_count_histogram(&[5, 5, 5], 10).unwrap(),
            vec![(0, 3)]
        );
        assert_eq!(
            unique_count_histogram(&[9, 10], 10).unwrap(),
            vec![(0, 1), (10, 1)]
        );
        assert_eq!(
            unique_count_histogram(&[3, 27], 10).unwrap(),
            vec![(0, 1), (10, 0), (20, 1)]
        );
        assert_eq!(unique_count_histogram(&[], 10), Err(StatsError::EmptyInput));
        assert_eq!(
            unique_count_histogram(&[1], 0),
            Err(StatsError::InvalidBinWidth)
        );
    }

    fn stat(entropy: f64, count: usize) -> DiversityStats {
        DiversityStats {
            prompt_id: "p".into(),
            condition: "regular".into(),
            unique_count: count,
            entropy_bits: entropy,
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[stat(3.0, 22), stat(5.0, 22)]).unwrap();
        assert_eq!(a.mean_entropy, 4.0);
        assert_eq!(a.median_count, 22.0);
        let a = aggregate(&[stat(1.0, 22), stat(1.0, 30), stat(1.0, 32)]).unwrap();
        assert_eq!(a.median_count, 30.0);
        let a = aggregate(&[stat(1.0, 20), stat(1.0, 30)]).unwrap();
        assert_eq!(a.median_count, 25.0);
        assert_eq!(aggregate(&[]), Err(StatsError::EmptyInput));
    }

    /// Entropy summed over the explicit multiset: every occurrence of x
    /// contributes −log2(p(x)) / total.
    fn multiset_entropy(items: &[u8]) -> f64 {
        let n = items.len() as f64;
        items
            .iter()
            .map(|x| {
                let c = items.iter().filter(|y| *y == x).count() as f64;
                -(c / n).log2() / n
            })
            .sum()
    }

    proptest! {
        #[test]
        fn entropy_matches_multiset_oracle(items in proptest::collection::vec(0u8..6, 1..=20)) {
            let mut t = FrequencyTable::new("p", "c");
            let labels: Vec<String> = items.iter().map(|i| format!("i{i}")).collect();
            t.add_list(&labels);
            prop_assert!((entropy_bits(&t) - multiset_entropy(&items)).abs() < 1e-12);
        }

        #[test]
        fn entropy_bounds(counts in proptest::collection::vec(1u64..50, 1..30)) {
            let pairs: Vec<(String, u64)> = counts.iter().enumerate().map(|(i, &c)| (format!("x{i}"), c)).collect();
            let pairs: Vec<(&str, u64)> = pairs.iter().map(|(k, c)| (k.as_str(), *c)).collect();
            let t = table(&pairs);
            let h = entropy_bits(&t);
            let upper = (count_unique(&t) as f64).log2();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= upper + 1e-12);
            let uniform = counts.iter().all(|&c| c == counts[0]);
            if uniform {
                prop_assert!((h - upper).abs() < 1e-12);
            } else {
                prop_assert!(h < upper - 1e-12);
            }
            prop_assert_eq!(h == 0.0, count_unique(&t) == 1);
        }

        #[test]
        fn adding_lists_never_shrinks_support(
            a in proptest::collection::vec(proptest::collection::vec(0u8..20, 1..5), 1..5),
            b in proptest::collection::vec(proptest::collection::vec(0u8..20, 1..5), 0..5),
        ) {
            let mut t = FrequencyTable::new("p", "c");
            for l in &a {
                t.add_list(&l.iter().map(|x| x.to_string()).collect::<Vec<_>>());
            }
            let before = count_unique(&t);
            for l in &b {
                t.add_list(&l.iter().map(|x| x.to_string()).collect::<Vec<_>>());
            }
            prop_assert!(count_unique(&t) >= before);
            prop_assert_eq!(t.counts.values().sum::<u64>(), t.total);
        }

        #[test]
        fn rank_curve_sums_to_mean_total(
            tables in proptest::collection::vec(proptest::collection::vec(1u64..20, 1..15), 1..8)
        ) {
            let tables: Vec<FrequencyTable> = tables.iter().map(|cs| {
                let mut t = FrequencyTable::new("p", "c");
                for (i, &c) in cs.iter().enumerate() {
                    t.counts.insert(format!("x{i}"), c);
                    t.total += c;
                }
                t
            }).collect();
            let curve = frequency_rank_curve(&tables).unwrap();
            let sum: f64 = curve.iter().map(|(_, f)| f).sum();
            let mean_total = tables.iter().map(|t| t.total as f64).sum::<f64>() / tables.len() as f64;
            prop_assert!((sum - mean_total).abs() < 1e-9);
            prop_assert!(curve.windows(2).all(|w| w[0].1 >= w[1].1));
        }

        #[test]
        fn histogram_counts_everything(counts in proptest::collection::vec(0u64..500, 1..50), w in 1u64..40) {
            let h = unique_count_histogram(&counts, w).unwrap();
            prop_assert_eq!(h.iter().map(|(_, f)| f).sum::<u64>(), counts.len() as u64);
            prop_assert!(h.windows(2).all(|p| p[1].0 == p[0].0 + w));
        }
    }
}
