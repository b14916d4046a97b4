use fedel_core::diagnostics::rollback_study;
use fedel_core::federation::*;
use fedel_core::timing::{DeviceProfile, TimingSynthesis};
use fedel_core::federation::seeds::{derive_seed, stream};
use fedel_core::*;

fn main() {
    let t0 = std::time::Instant::now();
    let spread2 = vec![1.0,1.0,1.0,1.0,1.0,1.0,1.0,1.0,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5];
    let ratio = 2.0;
    for (beta, alpha, frac) in [
        (0.42f64, 10.0f64, 1.0f64), (0.38, 10.0, 1.0), (0.4, 20.0, 1.0), (0.4, 5.0, 1.0),
    ] {
        let mut oks = 0;
        let mut lines = Vec::new();
        for seed in [1u64, 2, 3] {
            let mut cfg = RunConfig {
                t_th: TThSpec::FastestFull,
                beta, rounds: 50, num_clients: spread2.len(), dirichlet_alpha: alpha, seed,
                variant: Variant::FedEl, normalize_importance: true, aggregate_heads: true, rollback: true,
                lr: 0.1, lr_decay: 0.995, local_iters: 3, batch_size: 64,
                device_speed_factors: spread2.clone(),
                model: ModelShape { input_dim: 16, num_classes: 10, block_widths: vec![32; 12], bias: true },
                dataset: DatasetConfig::Gaussian { classes: 10, dims: 16, samples: 3000, noise_sigma: 0.8, mean_scale: 1.5 },
                timing: TimingConfig { per_param_seconds: 1e-5, grad_update_ratio: ratio, ..Default::default() },
                eval_fraction: 0.2, sweep: None,
            };
            if frac != 1.0 {
                let model = ChainModel::build(cfg.model.clone()).unwrap();
                let base = TimingSynthesis { per_param_seconds: 1e-5, jitter_frac: 0.05, grad_update_ratio: ratio }
                    .synthesize(&model, DeviceProfile { speed_factor: 1.0 }, derive_seed(cfg.seed, &[stream::TIMING]));
                cfg.t_th = TThSpec::Seconds(base.scaled(0.5).full_iteration_seconds() * frac);
            }
            let dataset = build_dataset(&cfg).unwrap();
            let s = rollback_study(&cfg, 50, &dataset).unwrap();
            let ok = s.rollback.mean < s.no_rollback.mean;
            if ok { oks += 1; }
            lines.push(format!("    seed {seed}: roll {:.2}±{:.2} vs hold {:.2}±{:.2} {}",
                s.rollback.mean, s.rollback.std, s.no_rollback.mean, s.no_rollback.std,
                if ok { "OK" } else { "WRONG" }));
        }
        println!("beta {beta} alpha {alpha} frac {frac}: {oks}/3 [{:.0}s]", t0.elapsed().as_secs_f64());
        for l in lines { println!("{l}"); }
    }
}
