//! Non-iid data partitioning: per-class client proportions drawn from a
//! Dirichlet distribution, with a repair pass so every client ends up with
//! at least one sample.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 50;

/// Assigns every sample index to exactly one client. Per-class proportions
/// come from `Dirichlet(alpha)`; smaller alpha means more skew. The result
/// is exhaustive, disjoint, deterministic under the seed, and leaves no
/// client empty.
pub fn dirichlet_partition(
    labels: &[usize],
    num_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if num_clients == 0 {
        return Err(Error::config("num_clients must be positive"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    if num_clients > labels.len() {
        return Err(Error::config(format!(
            "cannot split {} samples across {num_clients} clients",
            labels.len()
        )));
    }

    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (idx, &label) in labels.iter().enumerate() {
        by_class[label].push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::config(format!("invalid Dirichlet alpha {alpha}: {e}")))?;

    let mut assignment = Vec::new();
    for _ in 0..MAX_ATTEMPTS {
        assignment = vec![Vec::new(); num_clients];
        for class_indices in by_class.iter().filter(|c| !c.is_empty()) {
            let mut rows = class_indices.clone();
            rows.shuffle(&mut rng);

            // Dirichlet draw via normalized Gamma samples.
            let mut props: Vec<f64> = (0..num_clients).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = props.iter().sum();
            if total <= 0.0 || !total.is_finite() {
                // Tiny alpha can underflow every Gamma sample; dump the
                // whole class on one random client instead.
                props = vec![0.0; num_clients];
                props[rng.random_range(0..num_clients)] = 1.0;
            } else {
                for p in props.iter_mut() {
                    *p /= total;
                }
            }

            let counts = largest_remainder(&props, rows.len());
            let mut cursor = 0;
            for (client, &count) in counts.iter().enumerate() {
                assignment[client].extend_from_slice(&rows[cursor..cursor + count]);
                cursor += count;
            }
        }
        if assignment.iter().all(|c| !c.is_empty()) {
            break;
        }
    }

    // Repair pass: move single samples from the richest clients to any that
    // came up empty. Deterministic; only reachable for extreme skew.
    loop {
        let Some(empty) = assignment.iter().position(|c| c.is_empty()) else {
            break;
        };
        let richest = (0..num_clients)
            .max_by_key(|&c| assignment[c].len())
            .expect("at least one client");
        if assignment[richest].len() <= 1 {
            return Err(Error::config(format!(
                "cannot give every one of {num_clients} clients a sample"
            )));
        }
        let moved = assignment[richest].pop().expect("richest client has samples");
        assignment[empty].push(moved);
    }

    for client in assignment.iter_mut() {
        client.sort_unstable();
    }
    Ok(assignment)
}

/// Integer apportionment of `total` by proportions: floor quotas plus
/// leftovers to the largest fractional parts (ties to lower indices).
fn largest_remainder(props: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = props.iter().map(|p| (p * total as f64) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = props[a] * total as f64 - counts[a] as f64;
        let fb = props[b] * total as f64 - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in 0..total.saturating_sub(assigned) {
        counts[order[i % props.len()]] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced_labels(classes: usize, per_class: usize) -> Vec<usize> {
        (0..classes * per_class).map(|i| i % classes).collect()
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint() {
        let labels = balanced_labels(10, 100);
        let parts = dirichlet_partition(&labels, 10, 0.1, 42).unwrap();
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..labels.len()).collect();
        assert_eq!(all, expected);
        assert!(parts.iter().all(|c| !c.is_empty()));
    }

    #[test]
    fn partition_is_deterministic() {
        let labels = balanced_labels(5, 40);
        let a = dirichlet_partition(&labels, 7, 0.1, 11).unwrap();
        let b = dirichlet_partition(&labels, 7, 0.1, 11).unwrap();
        assert_eq!(a, b);
        let c = dirichlet_partition(&labels, 7, 0.1, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn huge_alpha_approaches_uniform_class_histograms() {
        // 10 clients x 10 classes x 10k samples at alpha = 1e6: every
        // client's class histogram should be near-uniform (TV < 0.05).
        let labels = balanced_labels(10, 1000);
        let parts = dirichlet_partition(&labels, 10, 1e6, 7).unwrap();
        for client in &parts {
            let mut hist = [0.0f64; 10];
            for &idx in client {
                hist[labels[idx]] += 1.0;
            }
            let total: f64 = hist.iter().sum();
            let tv: f64 = hist
                .iter()
                .map(|h| (h / total - 0.1).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.05, "client histogram too skewed: tv = {tv}");
        }
    }

    #[test]
    fn low_alpha_produces_skew() {
        let labels = balanced_labels(10, 100);
        let parts = dirichlet_partition(&labels, 10, 0.1, 3).unwrap();
        // At alpha = 0.1 most clients should be dominated by few classes.
        let mut dominated = 0;
        for client in &parts {
            let mut hist = [0usize; 10];
            for &idx in client {
                hist[labels[idx]] += 1;
            }
            let max = *hist.iter().max().unwrap();
            if max as f64 >= client.len() as f64 * 0.5 {
                dominated += 1;
            }
        }
        assert!(dominated >= 5, "expected skewed clients, got {dominated}");
    }

    #[test]
    fn more_clients_than_samples_is_rejected() {
        let labels = vec![0, 1, 0];
        assert!(dirichlet_partition(&labels, 4, 0.1, 0).is_err());
    }

    #[test]
    fn every_client_gets_a_sample_even_under_extreme_skew() {
        let labels = vec![0; 12];
        let parts = dirichlet_partition(&labels, 12, 1e-3, 5).unwrap();
        assert!(parts.iter().all(|c| c.len() == 1));
    }
}
