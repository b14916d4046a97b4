use fedel_core::federation::*;
use fedel_core::*;

struct Task { lr: f64, decay: f64, sigma: f64, mean: f64, samples: usize, tau: usize, batch: usize }

fn base_cfg(seed: u64, t: &Task) -> RunConfig {
    RunConfig {
        t_th: TThSpec::FastestFull,
        beta: 0.6, rounds: 300, num_clients: 10, dirichlet_alpha: 0.1, seed,
        variant: Variant::FedEl, normalize_importance: true, aggregate_heads: true, rollback: true,
        lr: t.lr, lr_decay: t.decay, local_iters: t.tau, batch_size: t.batch,
        device_speed_factors: vec![1.0,1.0,1.0,1.0,1.0,0.5,0.5,0.5,0.5,0.5],
        model: ModelShape { input_dim: 16, num_classes: 10, block_widths: vec![96, 64, 48, 32, 32, 24], bias: true },
        dataset: DatasetConfig::Gaussian { classes: 10, dims: 16, samples: t.samples, noise_sigma: t.sigma, mean_scale: t.mean },
        timing: TimingConfig { per_param_seconds: 1e-5, ..Default::default() },
        eval_fraction: 0.2, sweep: None,
    }
}

fn time_to(records: &[RoundRecord], target: f64) -> Option<f64> {
    records.iter().find(|r| r.accuracy >= target).map(|r| r.wall_clock_seconds)
}

fn main() {
    let t0 = std::time::Instant::now();
    let tasks = [
        ("O", Task { lr: 0.25, decay: 0.992, sigma: 0.8, mean: 1.5, samples: 6000, tau: 3, batch: 64 }),
        ("P", Task { lr: 0.30, decay: 0.99, sigma: 0.8, mean: 1.5, samples: 6000, tau: 3, batch: 64 }),
        ("Q", Task { lr: 0.20, decay: 0.994, sigma: 0.7, mean: 1.5, samples: 6000, tau: 3, batch: 64 }),
    ];
    for (name, task) in &tasks {
        println!("--- task {name}");
        let (mut pf, mut pe, mut pt) = (0.0, 0.0, 0.0);
        for seed in [1u64, 2, 3] {
            let mut line = format!("  seed {seed}:");
            let mut fa = None; let mut fe = None;
            for variant in [Variant::FedAvgFull, Variant::FedEl, Variant::ElasticTrainerOnly] {
                let mut cfg = base_cfg(seed, task);
                cfg.variant = variant;
                let dataset = build_dataset(&cfg).unwrap();
                match run_training(&cfg, &dataset) {
                    Ok(records) => {
                        let acc = records.last().unwrap().accuracy;
                        line += &format!(" {:?} {:.3}(r150 {:.3})", variant, acc, records[149].accuracy);
                        match variant {
                            Variant::FedAvgFull => { pf += acc; fa = Some(records); }
                            Variant::FedEl => { pe += acc; fe = Some(records); }
                            _ => pt += acc,
                        }
                    }
                    Err(e) => { line += &format!(" {:?} DIVERGED({e})", variant); }
                }
            }
            if let (Some(fa), Some(fe)) = (fa, fe) {
                let target = 0.9 * fa.last().unwrap().accuracy;
                let sp = match (time_to(&fa, target), time_to(&fe, target)) {
                    (Some(b), Some(t)) => format!("{:.2}x", b / t), _ => "n/a".into(),
                };
                line += &format!(" | speedup {sp}");
            }
            println!("{line}  [{:.0}s]", t0.elapsed().as_secs_f64());
        }
        println!("  means: fedavg {:.3} fedel {:.3} et {:.3} | parity {:+.1}pp, et gap {:+.1}pp",
            pf/3.0, pe/3.0, pt/3.0, (pe-pf)/3.0*100.0, (pe-pt)/3.0*100.0);
    }
}
