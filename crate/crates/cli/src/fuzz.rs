//! Random-instance fuzzing of the selection solver against the exhaustive
//! oracle. Mismatches are dumped as replayable JSON.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fedel_core::select::{brute_force_select, mask_objective, select_tensors, ImportanceVector};
use fedel_core::timing::TensorTiming;
use fedel_core::window::{BlockPartition, Window};

use crate::CliError;

/// Everything needed to replay one fuzz instance.
#[derive(Debug, Serialize, Deserialize)]
pub struct FuzzInstance {
    pub seed: u64,
    pub trial: u64,
    pub t_g: Vec<f64>,
    pub t_w: Vec<f64>,
    pub importance: Vec<f64>,
    pub block_ranges: Vec<(usize, usize)>,
    pub window_end: usize,
    pub window_front: usize,
    pub budget: f64,
}

fn random_instance(rng: &mut ChaCha8Rng, max_tensors: usize, seed: u64, trial: u64) -> FuzzInstance {
    let num_tensors = rng.random_range(1..=max_tensors);
    let t_g: Vec<f64> = (0..num_tensors)
        .map(|_| rng.random_range(0.0..0.05))
        .collect();
    let t_w: Vec<f64> = (0..num_tensors)
        .map(|_| rng.random_range(0.0..0.05))
        .collect();
    let importance: Vec<f64> = (0..num_tensors).map(|_| rng.random_range(0.0..4.0)).collect();

    let mut block_ranges = Vec::new();
    let mut first = 0;
    while first < num_tensors {
        let len = rng.random_range(1..=num_tensors - first);
        block_ranges.push((first, first + len - 1));
        first += len;
    }
    let window_end = rng.random_range(0..block_ranges.len());
    let window_front = rng.random_range(window_end..block_ranges.len());

    let worst: f64 = t_w.iter().sum::<f64>() + t_g.iter().skip(1).sum::<f64>();
    let budget = rng.random_range(0.0..worst * 1.2 + 0.01);
    FuzzInstance {
        seed,
        trial,
        t_g,
        t_w,
        importance,
        block_ranges,
        window_end,
        window_front,
        budget,
    }
}

/// Runs one instance through both solvers; returns the two objectives.
pub fn run_instance(inst: &FuzzInstance) -> Result<(f64, f64), CliError> {
    let timing = TensorTiming {
        t_g: inst.t_g.clone(),
        t_w: inst.t_w.clone(),
        t_fw_block: vec![0.0; inst.block_ranges.len()],
        t_fw_head: vec![0.0; inst.block_ranges.len()],
    };
    let importance = ImportanceVector::new(inst.importance.clone())
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let partition = BlockPartition::new(inst.block_ranges.clone())
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let window = Window::new(inst.window_end, inst.window_front);
    let dp = select_tensors(&importance, &timing, &window, &partition, inst.budget)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let oracle = brute_force_select(&importance, &timing, &window, &partition, inst.budget)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    Ok((
        mask_objective(&dp.mask, &importance),
        mask_objective(&oracle.mask, &importance),
    ))
}

pub fn cmd_fuzz_selector(
    trials: u64,
    max_tensors: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if max_tensors == 0 || max_tensors > 20 {
        return Err(CliError::Usage(format!(
            "max-tensors must be in 1..=20 (the oracle is exhaustive), got {max_tensors}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let inst = random_instance(&mut rng, max_tensors, seed, trial);
        let (dp_objective, oracle_objective) = run_instance(&inst)?;
        if dp_objective != oracle_objective {
            std::fs::create_dir_all(out).map_err(|e| CliError::Failure(e.to_string()))?;
            let path = out.join(format!("fuzz-counterexample-{trial}.json"));
            let json = serde_json::to_string_pretty(&inst)
                .map_err(|e| CliError::Failure(e.to_string()))?;
            std::fs::write(&path, json + "\n").map_err(|e| CliError::Failure(e.to_string()))?;
            return Err(CliError::Failure(format!(
                "objective mismatch on trial {trial}: solver {dp_objective} vs oracle \
                 {oracle_objective}; instance dumped to {}",
                path.display()
            )));
        }
    }
    println!("fuzz-selector: {trials} trials, max {max_tensors} tensors, seed {seed}: all objectives match");
    Ok(())
}
