//! Aggregation algebra over randomized cases: all-ones masks reproduce the
//! arithmetic mean, unselected tensors pass through bit-identically, and a
//! sole selector transfers its tensor exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedel_core::federation::{aggregate, ClientUpdate};
use fedel_core::model::ParameterStore;
use fedel_core::select::SelectionMask;

fn random_store(rng: &mut ChaCha8Rng, lens: &[usize], head_len: usize) -> ParameterStore {
    ParameterStore {
        tensors: lens
            .iter()
            .map(|&len| (0..len).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect(),
        heads: vec![(0..head_len).map(|_| rng.random_range(-1.0..1.0)).collect()],
    }
}

#[test]
fn five_hundred_randomized_aggregation_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa66);
    for case in 0..500 {
        let num_tensors = rng.random_range(1..=6);
        let lens: Vec<usize> = (0..num_tensors)
            .map(|_| rng.random_range(1..=8))
            .collect();
        let head_len = rng.random_range(1..=4);
        let num_clients = rng.random_range(1..=5);

        let prev = random_store(&mut rng, &lens, head_len);
        let mut updates: Vec<ClientUpdate> = (0..num_clients)
            .map(|_| {
                let mut mask = SelectionMask::empty(num_tensors);
                for id in 0..num_tensors {
                    if rng.random_bool(0.5) {
                        mask.select(id);
                    }
                }
                ClientUpdate {
                    params: random_store(&mut rng, &lens, head_len),
                    mask,
                    trained_heads: if rng.random_bool(0.5) { vec![0] } else { vec![] },
                }
            })
            .collect();

        // Force one all-ones client sometimes so the mean path is exercised.
        if case % 3 == 0 {
            for u in updates.iter_mut() {
                u.mask = SelectionMask::all_ones(num_tensors);
            }
        }

        let out = aggregate(&updates, &prev, true).unwrap();

        for k in 0..num_tensors {
            let selecting: Vec<&ClientUpdate> = updates
                .iter()
                .filter(|u| u.mask.is_selected(k))
                .collect();
            match selecting.len() {
                0 => {
                    // Bit-identical pass-through.
                    for (a, b) in out.tensors[k].iter().zip(&prev.tensors[k]) {
                        assert_eq!(a.to_bits(), b.to_bits(), "case {case} tensor {k}");
                    }
                }
                1 => {
                    for (a, b) in out.tensors[k].iter().zip(&selecting[0].params.tensors[k]) {
                        assert_eq!(a.to_bits(), b.to_bits(), "case {case} tensor {k}");
                    }
                }
                n => {
                    for (i, a) in out.tensors[k].iter().enumerate() {
                        let mean: f64 = selecting
                            .iter()
                            .map(|u| u.params.tensors[k][i])
                            .sum::<f64>()
                            / n as f64;
                        let scale = mean.abs().max(1.0);
                        assert!(
                            (a - mean).abs() <= 1e-12 * scale,
                            "case {case} tensor {k}[{i}]: {a} vs mean {mean}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn all_ones_masks_give_exact_arithmetic_mean_of_all_clients() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbeb);
    for _ in 0..100 {
        let lens = vec![rng.random_range(1..=16)];
        let prev = random_store(&mut rng, &lens, 2);
        let clients: Vec<ClientUpdate> = (0..rng.random_range(1..=8))
            .map(|_| ClientUpdate {
                params: random_store(&mut rng, &lens, 2),
                mask: SelectionMask::all_ones(1),
                trained_heads: vec![0],
            })
            .collect();
        let out = aggregate(&clients, &prev, true).unwrap();
        for i in 0..lens[0] {
            let mean: f64 = clients
                .iter()
                .map(|c| c.params.tensors[0][i])
                .sum::<f64>()
                / clients.len() as f64;
            assert!((out.tensors[0][i] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        }
    }
}
