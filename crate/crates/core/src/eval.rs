//! Evaluation: description-length compression, precision/recall against
//! labeled pattern occurrences, Hoyer sparsity and runtime benchmarking.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;

use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::model::Summary;

/// Description lengths of a summarized series, all in sample units except
/// the pointers (one unit per correctly-associated window).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DescriptionLengths {
    /// Samples in the raw series.
    pub series_samples: usize,
    /// Summed length of patterns that correctly cover at least one window.
    pub pattern_samples: usize,
    /// One pointer per correctly-associated window.
    pub pointer_units: usize,
    /// Summed length of incorrectly-associated windows.
    pub penalty_samples: usize,
}

/// What "correctly associated" means for a window.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    /// Ground-truth labels, one per window (`None` = no strict majority).
    Labels(&'a [Option<usize>]),
    /// A window is correct when its reconstruction MSE is at most this.
    MseThreshold(f64),
}

/// Greedy maximum-overlap pairing of learned patterns with ground-truth
/// patterns.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Matching {
    /// (learned pattern id, ground-truth pattern id), in pairing order.
    pub pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn truth_for(&self, learned: usize) -> Option<usize> {
        self.pairs.iter().find(|(l, _)| *l == learned).map(|(_, t)| *t)
    }

    pub fn learned_for(&self, truth: usize) -> Option<usize> {
        self.pairs.iter().find(|(_, t)| *t == truth).map(|(l, _)| *l)
    }
}

fn check_window_count(summary: &Summary, labels: &[Option<usize>]) -> Result<()> {
    if summary.assignments.len() != labels.len() {
        return Err(Error::Input(format!(
            "summary has {} windows but {} labels were given",
            summary.assignments.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Pair learned patterns with ground-truth patterns by repeatedly taking
/// the pair sharing the most windows; each side is used at most once and
/// ties break toward the lowest indices. Pairs never share zero windows.
pub fn match_patterns(summary: &Summary, labels: &[Option<usize>]) -> Result<Matching> {
    check_window_count(summary, labels)?;
    let mut overlap: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (assignment, label) in summary.assignments.iter().zip(labels) {
        if let Some(truth) = label {
            *overlap.entry((assignment.pattern_id, *truth)).or_insert(0) += 1;
        }
    }
    let mut pairs = Vec::new();
    let mut used_learned = BTreeSet::new();
    let mut used_truth = BTreeSet::new();
    loop {
        let best = overlap
            .iter()
            .filter(|((l, t), _)| !used_learned.contains(l) && !used_truth.contains(t))
            // max count first, then lowest (learned, truth); BTreeMap
            // iteration order makes the min_by pick deterministic
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(&key, _)| key);
        match best {
            Some((l, t)) => {
                pairs.push((l, t));
                used_learned.insert(l);
                used_truth.insert(t);
            }
            None => break,
        }
    }
    Ok(Matching { pairs })
}

/// Window-level precision and pattern-level recall after matching.
///
/// Precision is the fraction of windows whose assigned pattern maps to the
/// window's label; recall is the fraction of distinct ground-truth patterns
/// that received a match.
pub fn precision_recall(summary: &Summary, labels: &[Option<usize>]) -> Result<(f64, f64)> {
    check_window_count(summary, labels)?;
    let matching = match_patterns(summary, labels)?;
    let total = summary.assignments.len();
    let correct = summary
        .assignments
        .iter()
        .zip(labels)
        .filter(|(a, label)| {
            matches!(label, Some(l) if matching.truth_for(a.pattern_id) == Some(*l))
        })
        .count();
    let truths: BTreeSet<usize> = labels.iter().flatten().cloned().collect();
    if truths.is_empty() {
        return Err(Error::Input("no labeled windows to evaluate against".into()));
    }
    let matched = truths.iter().filter(|t| matching.learned_for(**t).is_some()).count();
    Ok((correct as f64 / total as f64, matched as f64 / truths.len() as f64))
}

/// Description lengths of a summary. A pattern is only charged when it
/// correctly covers at least one window; every incorrectly-associated
/// window costs its full length.
pub fn description_lengths(
    series: &TimeSeries,
    summary: &Summary,
    reference: Reference<'_>,
) -> Result<DescriptionLengths> {
    let m = summary.window_len;
    let correct: Vec<bool> = match reference {
        Reference::Labels(labels) => {
            check_window_count(summary, labels)?;
            let matching = match_patterns(summary, labels)?;
            summary
                .assignments
                .iter()
                .zip(labels)
                .map(|(a, label)| {
                    matches!(label, Some(l) if matching.truth_for(a.pattern_id) == Some(*l))
                })
                .collect()
        }
        Reference::MseThreshold(tau) => {
            if !tau.is_finite() || tau < 0.0 {
                return Err(Error::Config(format!(
                    "MSE threshold must be non-negative and finite, got {tau}"
                )));
            }
            summary.assignments.iter().map(|a| a.recon_mse <= tau).collect()
        }
    };
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut pointers = 0usize;
    let mut wrong = 0usize;
    for (assignment, &ok) in summary.assignments.iter().zip(&correct) {
        if ok {
            used.insert(assignment.pattern_id);
            pointers += 1;
        } else {
            wrong += 1;
        }
    }
    Ok(DescriptionLengths {
        series_samples: series.len(),
        pattern_samples: m * used.len(),
        pointer_units: pointers,
        penalty_samples: m * wrong,
    })
}

/// The compression ratio: raw length over patterns + pointers + penalty.
/// Higher is better.
pub fn compression(dl: &DescriptionLengths) -> Result<f64> {
    let denominator = dl.pattern_samples + dl.pointer_units + dl.penalty_samples;
    if denominator == 0 {
        return Err(Error::Contract(
            "compression undefined: patterns, pointers and penalty are all zero".into(),
        ));
    }
    Ok(dl.series_samples as f64 / denominator as f64)
}

/// The 95th percentile of per-window reconstruction MSE; the default
/// correctness threshold when no labels exist.
pub fn default_mse_threshold(summary: &Summary) -> f64 {
    let mut mses: Vec<f64> = summary.assignments.iter().map(|a| a.recon_mse).collect();
    if mses.is_empty() {
        return 0.0;
    }
    mses.sort_by(|a, b| a.partial_cmp(b).expect("finite MSE"));
    let idx = ((mses.len() as f64) * 0.95).ceil() as usize;
    mses[idx.saturating_sub(1).min(mses.len() - 1)]
}

/// Mean Hoyer sparsity of the rows of an n x d matrix, after normalizing
/// each column to unit standard deviation (columns with std below 1e-12
/// pass through unscaled). 1 means every row is one-hot, 0 means uniform.
pub fn hoyer_sparsity(rows: &[Vec<f64>]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::Contract(format!(
            "hoyer_sparsity needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if d < 2 {
        return Err(Error::Contract(format!(
            "hoyer_sparsity needs at least 2 columns, got {d}"
        )));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension("hoyer_sparsity: ragged rows".into()));
    }
    let n = rows.len() as f64;
    let mut scale = vec![1.0; d];
    for (j, s) in scale.iter_mut().enumerate() {
        let mean: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var: f64 = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std >= 1e-12 {
            *s = 1.0 / std;
        }
    }
    let sqrt_d = (d as f64).sqrt();
    let mut total = 0.0;
    for row in rows {
        let l1: f64 = row.iter().zip(&scale).map(|(v, s)| (v * s).abs()).sum();
        let l2: f64 = row.iter().zip(&scale).map(|(v, s)| (v * s) * (v * s)).sum::<f64>().sqrt();
        if l2 > 0.0 {
            total += (sqrt_d - l1 / l2) / (sqrt_d - 1.0);
        }
    }
    Ok(total / n)
}

/// One evaluated run, serialized to CSV and JSON by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub seed: u64,
    pub compression: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub matching: Matching,
    pub description_lengths: DescriptionLengths,
}

/// CSV with one row per seed plus an aggregate mean/std row when several
/// seeds are present.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("dataset,seed,compression,precision,recall\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.dataset,
            r.seed,
            r.compression,
            fmt_opt(r.precision),
            fmt_opt(r.recall)
        ));
    }
    if reports.len() > 1 {
        let mean_std = |values: Vec<f64>| -> String {
            if values.is_empty() {
                return String::new();
            }
            let n = values.len() as f64;
            let mean: f64 = values.iter().sum::<f64>() / n;
            let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            format!("{:.4}±{:.4}", mean, var.sqrt())
        };
        let dataset = &reports[0].dataset;
        out.push_str(&format!(
            "{dataset},aggregate,{},{},{}\n",
            mean_std(reports.iter().map(|r| r.compression).collect()),
            mean_std(reports.iter().filter_map(|r| r.precision).collect()),
            mean_std(reports.iter().filter_map(|r| r.recall).collect()),
        ));
    }
    out
}

/// Wall-clock timings for one benchmarked input size.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub median_seconds: f64,
    pub runs: Vec<f64>,
}

/// Time a training routine over increasing input sizes; the reported
/// figure per size is the median of `repeats` runs.
pub fn bench_runtime<G, T>(
    mut generator: G,
    sizes: &[usize],
    mut trainer: T,
    repeats: usize,
) -> Result<Vec<BenchRow>>
where
    G: FnMut(usize) -> Result<TimeSeries>,
    T: FnMut(&TimeSeries) -> Result<()>,
{
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("bench sizes must be strictly increasing".into()));
    }
    if repeats == 0 {
        return Err(Error::Contract("bench needs at least one repeat".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let series = generator(size)?;
        let mut runs = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            trainer(&series)?;
            runs.push(start.elapsed().as_secs_f64());
        }
        let mut sorted = runs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
        };
        rows.push(BenchRow { size, median_seconds: median, runs });
    }
    Ok(rows)
}

pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("size,median_seconds,runs\n");
    for r in rows {
        let raw: Vec<String> = r.runs.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&format!("{},{:.6},{}\n", r.size, r.median_seconds, raw.join(";")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Summary, WindowAssignment};

    /// Hand-built summary: one window per (pattern_id, label) pair.
    fn summary_from(assigned: &[usize], labels: &[Option<usize>], m: usize, series_len: usize, k: usize) -> (Summary, Vec<Option<usize>>) {
        let assignments = assigned
            .iter()
            .enumerate()
            .map(|(index, &pattern_id)| WindowAssignment {
                index,
                start: index * m,
                pattern_id,
                score: 1.0,
                recon_mse: 0.0,
                label: labels[index],
            })
            .collect();
        (
            Summary {
                n_patterns: k,
                window_len: m,
                series_len,
                remainder: series_len - assigned.len() * m,
                assignments,
            },
            labels.to_vec(),
        )
    }

    fn series_of_len(n: usize) -> TimeSeries {
        TimeSeries::new(vec![0.0; n], None, "test").unwrap()
    }

    #[test]
    fn identity_assignment_matches_identically() {
        let labels: Vec<Option<usize>> = (0..8).map(|i| Some(i % 2)).collect();
        let assigned: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let (summary, labels) = summary_from(&assigned, &labels, 10, 80, 2);
        let matching = match_patterns(&summary, &labels).unwrap();
        assert_eq!(matching.pairs, vec![(0, 0), (1, 1)]);
        let (p, r) = precision_recall(&summary, &labels).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
    }

    #[test]
    fn disjoint_blocks_match_pairwise() {
        // Learned A covers windows 0..5, B covers 5..10; labels X then Y.
        let assigned: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let labels: Vec<Option<usize>> = (0..10).map(|i| Some(usize::from(i >= 5))).collect();
        let (summary, labels) = summary_from(&assigned, &labels, 10, 100, 2);
        let matching = match_patterns(&summary, &labels).unwrap();
        assert_eq!(matching.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_matching_prefers_larger_overlap() {
        // A covers {1,2,3,6}, B covers {4,5}; X = {1,2,3}, Y = {4,5,6}.
        let assigned = vec![0, 0, 0, 1, 1, 0];
        let labels = vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)];
        let (summary, labels) = summary_from(&assigned, &labels, 10, 60, 2);
        let matching = match_patterns(&summary, &labels).unwrap();
        // A<->X (overlap 3), then B<->Y (overlap 2).
        assert_eq!(matching.pairs, vec![(0, 0), (1, 1)]);

        // Exhaustive check over all one-to-one matchings confirms greedy
        // picks the best total overlap here.
        let overlaps = [[3usize, 1], [0, 2]]; // [learned][truth]
        let totals = [
            overlaps[0][0] + overlaps[1][1], // A-X, B-Y = 5
            overlaps[0][1] + overlaps[1][0], // A-Y, B-X = 1
        ];
        assert!(totals[0] > totals[1]);
    }

    #[test]
    fn matching_rejects_count_mismatch() {
        let (summary, _) = summary_from(&[0, 1], &[Some(0), Some(1)], 10, 20, 2);
        assert!(matches!(
            match_patterns(&summary, &[Some(0)]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn recall_counts_unmatched_truth_patterns() {
        // 4 truths, 4 learned; learned 0..2 perfectly cover truths 0..2,
        // truth 3's windows are misassigned to learned 0 (already used).
        let mut assigned = Vec::new();
        let mut labels = Vec::new();
        for truth in 0..3 {
            for _ in 0..4 {
                assigned.push(truth);
                labels.push(Some(truth));
            }
        }
        for _ in 0..4 {
            assigned.push(0); // truth 3 windows land on learned 0
            labels.push(Some(3));
        }
        let (summary, labels) = summary_from(&assigned, &labels, 10, 160, 4);
        let (p, r) = precision_recall(&summary, &labels).unwrap();
        assert_eq!(r, 0.75);
        assert_eq!(p, 12.0 / 16.0);
    }

    #[test]
    fn precision_is_a_simple_fraction() {
        // 10 windows, 7 correct after matching.
        let assigned = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let labels = vec![
            Some(0), Some(0), Some(0), Some(0), Some(0), Some(0), Some(0),
            Some(0), Some(0), Some(0),
        ];
        let (summary, labels) = summary_from(&assigned, &labels, 10, 100, 2);
        let (p, _) = precision_recall(&summary, &labels).unwrap();
        assert!((p - 0.7).abs() < 1e-12);
    }

    #[test]
    fn worked_example_description_lengths() {
        // Length-1000 series, two patterns of length 100, five occurrences
        // each, all correct.
        let assigned: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let labels: Vec<Option<usize>> = (0..10).map(|i| Some(i % 2)).collect();
        let (summary, labels) = summary_from(&assigned, &labels, 100, 1000, 2);
        let series = series_of_len(1000);
        let dl = description_lengths(&series, &summary, Reference::Labels(&labels)).unwrap();
        assert_eq!(
            dl,
            DescriptionLengths {
                series_samples: 1000,
                pattern_samples: 200,
                pointer_units: 10,
                penalty_samples: 0
            }
        );
        let c = compression(&dl).unwrap();
        assert_eq!(c, 1000.0 / 210.0);
        assert!((c - 4.7619).abs() < 1e-4);
    }

    #[test]
    fn degenerate_summary_has_full_penalty() {
        // Every window unlabeled (no strict majority): no window can be
        // correct, so no pattern is charged and every window is penalty.
        let assigned = vec![0, 0, 0, 0];
        let labels_all_wrong = vec![None, None, None, None];
        let (summary, labels) = summary_from(&assigned, &labels_all_wrong, 100, 400, 4);
        let series = series_of_len(400);
        let dl =
            description_lengths(&series, &summary, Reference::Labels(&labels)).unwrap();
        assert_eq!(dl.pattern_samples, 0);
        assert_eq!(dl.pointer_units, 0);
        assert_eq!(dl.penalty_samples, 400);
        assert_eq!(compression(&dl).unwrap(), 1.0);
    }

    #[test]
    fn hand_constructed_penalty_case() {
        // 400-sample series, 4 windows, one misassigned.
        let assigned = vec![0, 1, 2, 0];
        let labels = vec![Some(0), Some(1), Some(2), Some(3)];
        let (summary, labels) = summary_from(&assigned, &labels, 100, 400, 4);
        let series = series_of_len(400);
        let dl = description_lengths(&series, &summary, Reference::Labels(&labels)).unwrap();
        assert_eq!(dl.pointer_units, 3);
        assert_eq!(dl.penalty_samples, 100);
        assert_eq!(dl.pattern_samples, 300);
    }

    #[test]
    fn mse_threshold_reference() {
        let (mut summary, _) = {
            let assigned = vec![0, 0, 1, 1];
            let labels = vec![None; 4];
            summary_from(&assigned, &labels, 10, 40, 2)
        };
        summary.assignments[0].recon_mse = 0.1;
        summary.assignments[1].recon_mse = 0.2;
        summary.assignments[2].recon_mse = 5.0;
        summary.assignments[3].recon_mse = 0.05;
        let series = series_of_len(40);
        let dl = description_lengths(&series, &summary, Reference::MseThreshold(0.5)).unwrap();
        assert_eq!(dl.pointer_units, 3);
        assert_eq!(dl.penalty_samples, 10);
        // patterns 0 and 1 both correctly cover something
        assert_eq!(dl.pattern_samples, 20);

        let tau = default_mse_threshold(&summary);
        assert_eq!(tau, 5.0);
    }

    #[test]
    fn compression_rejects_zero_denominator() {
        let dl = DescriptionLengths {
            series_samples: 100,
            pattern_samples: 0,
            pointer_units: 0,
            penalty_samples: 0,
        };
        assert!(matches!(compression(&dl), Err(Error::Contract(_))));
    }

    #[test]
    fn compression_grows_with_repetition() {
        // Repeating the series r times with the same patterns multiplies
        // series length and pointers by r while patterns stay fixed.
        let mut last = 0.0;
        for r in [1usize, 2, 4, 8] {
            let windows = 10 * r;
            let assigned: Vec<usize> = (0..windows).map(|i| i % 2).collect();
            let labels: Vec<Option<usize>> = (0..windows).map(|i| Some(i % 2)).collect();
            let (summary, labels) = summary_from(&assigned, &labels, 100, 1000 * r, 2);
            let series = series_of_len(1000 * r);
            let dl = description_lengths(&series, &summary, Reference::Labels(&labels)).unwrap();
            assert_eq!(dl.pattern_samples, 200);
            assert_eq!(dl.pointer_units, 10 * r);
            let c = compression(&dl).unwrap();
            assert!(c > last, "compression should grow: {c} after {last}");
            last = c;
        }
        // Limit: series length per window / one pointer unit = 100.
        assert!(last < 100.0);
    }

    #[test]
    fn precision_recall_invariant_under_relabeling() {
        let assigned = vec![0, 0, 1, 1, 2, 2];
        let labels = vec![Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)];
        let (summary, labels_plain) = summary_from(&assigned, &labels, 10, 60, 3);
        let (p1, r1) = precision_recall(&summary, &labels_plain).unwrap();
        // permute label ids 0->2, 1->0, 2->1
        let permuted: Vec<Option<usize>> =
            labels.iter().map(|l| l.map(|v| [2, 0, 1][v])).collect();
        let (p2, r2) = precision_recall(&summary, &permuted).unwrap();
        assert_eq!((p1, r1), (p2, r2));
    }

    #[test]
    fn pointer_penalty_partition_invariant() {
        let assigned = vec![0, 1, 0, 1, 0];
        let labels = vec![Some(0), Some(1), Some(1), Some(0), None];
        let (summary, labels) = summary_from(&assigned, &labels, 10, 50, 2);
        let series = series_of_len(50);
        let dl = description_lengths(&series, &summary, Reference::Labels(&labels)).unwrap();
        assert_eq!(
            dl.pointer_units + dl.penalty_samples / summary.window_len,
            summary.assignments.len()
        );
    }

    #[test]
    fn hoyer_sparsity_extremes() {
        // One-hot rows: maximal sparsity.
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        assert!((hoyer_sparsity(&rows).unwrap() - 1.0).abs() < 1e-12);

        // Identical uniform rows: zero-std columns pass through, dense rows.
        let rows = vec![vec![0.7; 4]; 3];
        assert!(hoyer_sparsity(&rows).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hoyer_sparsity_direct_formula() {
        // Two rows whose columns all have unit population std, so the
        // normalization passes them through unchanged. The first row is the
        // reference case [3,1,0,0] scoring (2 - 4/sqrt(10)) / 1.
        let rows = vec![vec![3.0, 1.0, 0.0, 0.0], vec![5.0, 3.0, 2.0, 2.0]];
        let s1 = 2.0 - 4.0 / 10.0_f64.sqrt();
        assert!((s1 - 0.735).abs() < 1e-3);
        let s2 = 2.0 - 12.0 / 42.0_f64.sqrt();
        let got = hoyer_sparsity(&rows).unwrap();
        assert!((got - (s1 + s2) / 2.0).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn hoyer_sparsity_permutation_invariance() {
        let rows = vec![
            vec![0.9, 0.05, 0.03, 0.02],
            vec![0.1, 0.7, 0.1, 0.1],
            vec![0.2, 0.2, 0.5, 0.1],
        ];
        let base = hoyer_sparsity(&rows).unwrap();
        // permute rows
        let mut rp = rows.clone();
        rp.swap(0, 2);
        assert!((hoyer_sparsity(&rp).unwrap() - base).abs() < 1e-12);
        // permute columns
        let cp: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[2], r[0], r[3], r[1]]).collect();
        assert!((hoyer_sparsity(&cp).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn hoyer_sparsity_rejects_narrow_input() {
        assert!(matches!(hoyer_sparsity(&[vec![1.0], vec![2.0]]), Err(Error::Contract(_))));
        assert!(matches!(hoyer_sparsity(&[vec![1.0, 2.0]]), Err(Error::Contract(_))));
    }

    #[test]
    fn bench_runtime_contract() {
        let gen = |size: usize| TimeSeries::new(vec![0.0; size], None, "bench");
        let rows = bench_runtime(gen, &[10, 20, 40], |_| Ok(()), 3).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_eq!(r.runs.len(), 3);
            let mut sorted = r.runs.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(r.median_seconds, sorted[1]);
        }
        assert!(bench_runtime(gen, &[10, 10], |_| Ok(()), 1).is_err());
    }

    #[test]
    fn report_csv_has_aggregate_row() {
        let report = |seed: u64, c: f64| EvalReport {
            dataset: "sy4".into(),
            seed,
            compression: c,
            precision: Some(1.0),
            recall: Some(1.0),
            matching: Matching::default(),
            description_lengths: DescriptionLengths {
                series_samples: 100,
                pattern_samples: 10,
                pointer_units: 5,
                penalty_samples: 0,
            },
        };
        let csv = reports_to_csv(&[report(1, 8.0), report(2, 6.0)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("dataset,seed,"));
        assert!(lines[3].contains("aggregate"));
        assert!(lines[3].contains("7.0000±1.0000"));
    }
}
