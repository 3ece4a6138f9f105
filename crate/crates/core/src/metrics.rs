//! Clustering quality metrics: optimal-assignment accuracy and normalized
//! mutual information. Both are invariant under relabeling of either
//! argument.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Subspace clustering accuracy: the maximum fraction of agreeing points
/// over all one-to-one matchings between predicted and true cluster ids,
/// found by optimal assignment on the contingency table.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let contingency = contingency_table(pred, truth)?;
    let matched = assignment_max(&contingency);
    Ok(matched as f64 / pred.len() as f64)
}

/// Normalized mutual information I(pred; truth)/sqrt(H(pred)·H(truth))
/// with natural-log entropies from empirical joint counts.
///
/// Two single-cluster partitions are identical, hence 1.0; if exactly one
/// side has zero entropy the partitions differ in the other variable,
/// hence 0.0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len() as f64;

    // Compact both label sets to first-occurrence ids so that counts and
    // summation order depend only on the partition structure; relabeling
    // either argument then cannot change the result, not even in the last
    // bit.
    let pred_ids = compact_ids(pred);
    let truth_ids = compact_ids(truth);
    let (kp, kt) = (pred_ids.len(), truth_ids.len());
    let mut pred_counts = vec![0.0f64; kp];
    let mut truth_counts = vec![0.0f64; kt];
    let mut joint_counts = vec![vec![0.0f64; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        let (pi, ti) = (pred_ids[&p], truth_ids[&t]);
        pred_counts[pi] += 1.0;
        truth_counts[ti] += 1.0;
        joint_counts[pi][ti] += 1.0;
    }

    let entropy = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .map(|&c| {
                let p = c / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_pred = entropy(&pred_counts);
    let h_truth = entropy(&truth_counts);

    if h_pred == 0.0 && h_truth == 0.0 {
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    // A bijective contingency (one nonzero cell per row and column) means
    // the partitions are identical up to relabeling; exactly 1 by I = H.
    let cells = joint_counts
        .iter()
        .flat_map(|row| row.iter())
        .filter(|&&c| c > 0.0)
        .count();
    if cells == kp && cells == kt {
        return Ok(1.0);
    }

    let mut mutual_information = 0.0;
    for (pi, row) in joint_counts.iter().enumerate() {
        for (ti, &c) in row.iter().enumerate() {
            if c > 0.0 {
                let p_joint = c / n;
                let p_p = pred_counts[pi] / n;
                let p_t = truth_counts[ti] / n;
                mutual_information += p_joint * (p_joint / (p_p * p_t)).ln();
            }
        }
    }

    Ok((mutual_information / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0))
}

/// Square contingency table between compacted pred/truth cluster ids,
/// zero-padded to max(k_pred, k_truth) so the assignment is one-to-one in
/// both directions.
fn contingency_table(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<usize>>> {
    check_lengths(pred, truth)?;
    let pred_ids = compact_ids(pred);
    let truth_ids = compact_ids(truth);
    let k = pred_ids.len().max(truth_ids.len());
    let mut table = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        table[pred_ids[&p]][truth_ids[&t]] += 1;
    }
    Ok(table)
}

fn compact_ids(labels: &[usize]) -> HashMap<usize, usize> {
    let mut ids = HashMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    ids
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Usage("label vectors must be non-empty".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Usage(format!(
            "label vectors differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Maximum total agreement over one-to-one row/column matchings, by the
/// Hungarian algorithm with potentials on the negated table.
fn assignment_max(table: &[Vec<usize>]) -> usize {
    let n = table.len();
    if n == 0 {
        return 0;
    }
    // Minimize cost = max_entry − agreement.
    let top = table
        .iter()
        .flat_map(|row| row.iter())
        .copied()
        .max()
        .unwrap_or(0) as i64;

    let mut row_potential = vec![0i64; n + 1];
    let mut col_potential = vec![0i64; n + 1];
    // matched_row[j] = row currently assigned to column j (0 = none).
    let mut matched_row = vec![0usize; n + 1];
    let mut previous_col = vec![0usize; n + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut current_col = 0usize;
        let mut min_slack = vec![i64::MAX; n + 1];
        let mut visited = vec![false; n + 1];

        loop {
            visited[current_col] = true;
            let active_row = matched_row[current_col];
            let mut best_delta = i64::MAX;
            let mut next_col = 0usize;
            for col in 1..=n {
                if visited[col] {
                    continue;
                }
                let cost = top - table[active_row - 1][col - 1] as i64;
                let slack = cost - row_potential[active_row] - col_potential[col];
                if slack < min_slack[col] {
                    min_slack[col] = slack;
                    previous_col[col] = current_col;
                }
                if min_slack[col] < best_delta {
                    best_delta = min_slack[col];
                    next_col = col;
                }
            }
            for col in 0..=n {
                if visited[col] {
                    row_potential[matched_row[col]] += best_delta;
                    col_potential[col] -= best_delta;
                } else {
                    min_slack[col] -= best_delta;
                }
            }
            current_col = next_col;
            if matched_row[current_col] == 0 {
                break;
            }
        }

        // Augment along the alternating path.
        while current_col != 0 {
            let prev = previous_col[current_col];
            matched_row[current_col] = matched_row[prev];
            current_col = prev;
        }
    }

    (1..=n)
        .map(|col| {
            let row = matched_row[col];
            if row == 0 {
                0
            } else {
                table[row - 1][col - 1]
            }
        })
        .sum()
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accuracy_of_equal_labelings_is_one() {
        let labels = [0, 1, 2, 1, 0];
        assert_eq!(accuracy(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_is_relabeling_invariant() {
        assert_eq!(accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_picks_the_best_matching() {
        // Best matching maps pred 0→truth 1 and pred 1→truth 0: 3/5.
        let pred = [0, 0, 1, 1, 1];
        let truth = [0, 1, 1, 0, 0];
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.6);
    }

    #[test]
    fn accuracy_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.gen_range(2..30);
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            assert_eq!(
                accuracy(&pred, &truth).unwrap(),
                accuracy(&truth, &pred).unwrap()
            );
        }
    }

    #[test]
    fn accuracy_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let kp = rng.gen_range(1..=6);
            let kt = rng.gen_range(1..=6);
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kp)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kt)).collect();
            let fast = accuracy(&pred, &truth).unwrap();
            let slow = test_support::accuracy_exhaustive(&pred, &truth);
            assert!(
                (fast - slow).abs() < 1e-12,
                "hungarian {fast} vs exhaustive {slow} on pred={pred:?} truth={truth:?}"
            );
        }
    }

    #[test]
    fn accuracy_rejects_length_mismatch() {
        assert!(matches!(
            accuracy(&[0, 1], &[0, 1, 2]),
            Err(Error::Usage(_))
        ));
        assert!(matches!(accuracy(&[], &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn nmi_of_identical_partitions_is_one() {
        assert_eq!(nmi(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
        // Relabeled but identical as a partition.
        assert_eq!(nmi(&[5, 5, 9, 9], &[1, 1, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_of_independent_partition_is_zero() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn nmi_single_cluster_edge_cases() {
        assert_eq!(nmi(&[0, 0, 0], &[7, 7, 7]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 1, 2], &[4, 4, 4]).unwrap(), 0.0);
    }

    #[test]
    fn nmi_of_random_independent_labels_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 10_000;
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let value = nmi(&pred, &truth).unwrap();
        assert!(value <= 0.1, "independent labels should give near-zero NMI, got {value}");
    }

    #[test]
    fn nmi_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.gen_range(2..50);
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            let value = nmi(&pred, &truth).unwrap();
            assert!((0.0..=1.0).contains(&value));
            let relabeled: Vec<usize> = pred.iter().map(|&p| 10 - p).collect();
            assert!((nmi(&relabeled, &truth).unwrap() - value).abs() < 1e-12);
        }
    }
}
