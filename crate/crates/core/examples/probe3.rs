use fedel_core::federation::*;
use fedel_core::timing::{DeviceProfile, TimingSynthesis};
use fedel_core::federation::seeds::{derive_seed, stream};
use fedel_core::*;

fn main() {
    let mut spread = Vec::new();
    for f in [1.0, 0.5, 1.0/3.0, 0.25] {
        for _ in 0..6 { spread.push(f); }
    }
    let ratio = 2.0;
    let mut cfg = RunConfig {
        t_th: TThSpec::FastestFull,
        beta: 0.6, rounds: 24, num_clients: spread.len(), dirichlet_alpha: 0.1, seed: 3,
        variant: Variant::FedEl, normalize_importance: true, aggregate_heads: true, rollback: true,
        lr: 0.2, lr_decay: 0.992, local_iters: 3, batch_size: 64,
        device_speed_factors: spread,
        model: ModelShape { input_dim: 16, num_classes: 10, block_widths: vec![32; 12], bias: true },
        dataset: DatasetConfig::Gaussian { classes: 10, dims: 16, samples: 3000, noise_sigma: 0.8, mean_scale: 1.5 },
        timing: TimingConfig { per_param_seconds: 1e-5, grad_update_ratio: ratio, ..Default::default() },
        eval_fraction: 0.2, sweep: None,
    };
    let model = ChainModel::build(cfg.model.clone()).unwrap();
    let base = TimingSynthesis { per_param_seconds: 1e-5, jitter_frac: 0.05, grad_update_ratio: ratio }
        .synthesize(&model, DeviceProfile { speed_factor: 1.0 }, derive_seed(cfg.seed, &[stream::TIMING]));
    cfg.t_th = TThSpec::Seconds(base.scaled(0.25).full_iteration_seconds() * 0.5);
    let dataset = build_dataset(&cfg).unwrap();
    let records = run_training(&cfg, &dataset).unwrap();
    for r in &records {
        let mut counts = vec![0usize; 24];
        for c in &r.clients {
            for (id, &b) in c.mask.iter().enumerate() { if b == 1 { counts[id] += b as usize; } }
        }
        let sole = counts.iter().filter(|&&c| c == 1).count();
        let s_sel = counts.iter().filter(|&&c| c > 0).count();
        // one representative window per class
        let wins: Vec<String> = [0, 6, 12, 18].iter()
            .map(|&i| format!("{}..{}", r.clients[i].window.end_edge, r.clients[i].window.front_edge)).collect();
        let sel_per_class: Vec<usize> = [0, 6, 12, 18].iter()
            .map(|&i| r.clients[i].mask.iter().filter(|&&b| b == 1).count()).collect();
        println!("r{:2} o1 {:6.2} sole {:2} S {:2} | wins {:?} sel {:?}", r.round, r.o1, sole, s_sel, wins, sel_per_class);
    }
}
