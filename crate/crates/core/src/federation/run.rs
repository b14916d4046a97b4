//! End-to-end orchestration: non-iid partitioning, per-client windowed
//! training under a shared runtime budget, simulated wall-clock accounting
//! with a synchronous barrier, and masked global aggregation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{gamma_n, o1_term, o1_weighted};
use crate::error::{Error, Result};
use crate::importance::{adjust, global_importance, local_importance};
use crate::model::{sgd_step, Batch, ChainModel, ParameterStore};
use crate::select::{backward_time, select_tensors, ImportanceVector, SelectionMask};
use crate::timing::{block_times, DeviceProfile, TensorTiming, TimingSynthesis};
use crate::window::{advance_front, initial_window, slide, SlideVariant, Window};

use super::aggregate::{aggregate, ClientUpdate};
use super::config::{ClientConfig, DatasetConfig, RunConfig, TThSpec, Variant};
use super::data::Dataset;
use super::partition::dirichlet_partition;
use super::record::{checksum, ClientRoundRecord, RoundRecord};

use super::seeds::{derive_seed, stream};

/// Builds the dataset a configuration describes (seeded from the run seed
/// for the synthetic task).
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetConfig::Gaussian {
            classes,
            dims,
            samples,
            noise_sigma,
            mean_scale,
        } => Ok(Dataset::gaussian_mixture(
            *classes,
            *dims,
            *samples,
            *noise_sigma,
            *mean_scale,
            derive_seed(cfg.seed, &[stream::DATASET]),
        )),
        DatasetConfig::Csv { path } => Dataset::from_csv_path(path),
    }
}

struct ClientState {
    cfg: ClientConfig,
    timing: TensorTiming,
    block_times: Vec<f64>,
    window: Option<Window>,
    last_mask: SelectionMask,
    /// Per-client heads when head aggregation is disabled.
    local_heads: Option<Vec<Vec<f64>>>,
}

struct ClientOutcome {
    update: ClientUpdate,
    record: ClientRoundRecord,
    seconds: f64,
}

/// Driver for one configured run. [`run_training`] is the plain-function
/// entry point; the struct is public so tests and the CLI can step rounds
/// and inspect state.
pub struct Trainer {
    cfg: RunConfig,
    t_th: f64,
    model: ChainModel,
    dataset: Dataset,
    eval_batch: Option<Batch>,
    base_timing: TensorTiming,
    clients: Vec<ClientState>,
    global: ParameterStore,
    prev_global: ParameterStore,
    wall_clock: f64,
    round: usize,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, dataset: &Dataset) -> Result<Trainer> {
        cfg.validate()?;
        if dataset.dims != cfg.model.input_dim {
            return Err(Error::config(format!(
                "dataset has {} dims, model expects {}",
                dataset.dims, cfg.model.input_dim
            )));
        }
        if dataset.num_classes > cfg.model.num_classes {
            return Err(Error::config(format!(
                "dataset has {} classes, model supports {}",
                dataset.num_classes, cfg.model.num_classes
            )));
        }

        let mut model = ChainModel::build(cfg.model.clone())?;
        model.init_uniform(derive_seed(cfg.seed, &[stream::INIT]));

        let base_timing = match &cfg.timing.profile_path {
            Some(path) => {
                let timing = TensorTiming::from_json(&std::fs::read_to_string(path)?)?;
                timing.validate(model.partition())?;
                timing
            }
            None => TimingSynthesis {
                per_param_seconds: cfg.timing.per_param_seconds,
                jitter_frac: cfg.timing.jitter_frac,
                grad_update_ratio: cfg.timing.grad_update_ratio,
            }
            .synthesize(
                &model,
                DeviceProfile { speed_factor: 1.0 },
                derive_seed(cfg.seed, &[stream::TIMING]),
            ),
        };

        let (train_rows, eval_rows) =
            dataset.split_eval(cfg.eval_fraction, derive_seed(cfg.seed, &[stream::SPLIT]));
        let eval_batch = if eval_rows.is_empty() {
            None
        } else {
            Some(dataset.batch_of(&eval_rows)?)
        };

        let train_labels: Vec<usize> = train_rows.iter().map(|&i| dataset.labels[i]).collect();
        let parts = dirichlet_partition(
            &train_labels,
            cfg.num_clients,
            cfg.dirichlet_alpha,
            derive_seed(cfg.seed, &[stream::PARTITION]),
        )?;

        let mut clients = Vec::with_capacity(cfg.num_clients);
        for (client_id, positions) in parts.into_iter().enumerate() {
            let device = cfg.device_for(client_id);
            let timing = base_timing.scaled(device.speed_factor);
            let bt = block_times(&timing, model.partition())?;
            let data_indices: Vec<usize> = positions.iter().map(|&p| train_rows[p]).collect();
            clients.push(ClientState {
                cfg: ClientConfig {
                    client_id,
                    device,
                    lr: cfg.lr,
                    local_iters: cfg.local_iters,
                    data_indices,
                },
                timing,
                block_times: bt,
                window: None,
                last_mask: SelectionMask::empty(model.num_tensors()),
                local_heads: if cfg.aggregate_heads {
                    None
                } else {
                    Some(model.params.heads.clone())
                },
            });
        }

        let t_th = match cfg.t_th {
            TThSpec::Seconds(s) => s,
            TThSpec::FastestFull => clients
                .iter()
                .map(|c| c.timing.full_iteration_seconds())
                .fold(f64::INFINITY, f64::min),
        };
        if !(t_th > 0.0 && t_th.is_finite()) {
            return Err(Error::config(format!("resolved t_th {t_th} is not positive")));
        }

        let global = model.params.clone();
        let prev_global = global.clone();
        Ok(Trainer {
            cfg: cfg.clone(),
            t_th,
            model,
            dataset: dataset.clone(),
            eval_batch,
            base_timing,
            clients,
            global,
            prev_global,
            wall_clock: 0.0,
            round: 0,
        })
    }

    pub fn t_th(&self) -> f64 {
        self.t_th
    }

    pub fn base_timing(&self) -> &TensorTiming {
        &self.base_timing
    }

    pub fn global_params(&self) -> &ParameterStore {
        &self.global
    }

    pub fn client_timing(&self, client_id: usize) -> &TensorTiming {
        &self.clients[client_id].timing
    }

    /// Runs one synchronous round and returns its record.
    pub fn step(&mut self) -> Result<RoundRecord> {
        let round = self.round;
        let mut outcomes = Vec::with_capacity(self.clients.len());
        for client in self.clients.iter_mut() {
            let outcome = client_round(
                &self.model,
                &self.cfg,
                self.t_th,
                &self.dataset,
                client,
                &self.global,
                &self.prev_global,
                round,
            )
            .map_err(|e| Error::Client {
                round: round + 1,
                client_id: client.cfg.client_id,
                source: Box::new(e),
            })?;
            outcomes.push(outcome);
        }

        // Synchronous barrier: the round costs as much as its slowest client.
        let round_seconds = outcomes
            .iter()
            .map(|o| o.seconds)
            .fold(0.0f64, f64::max);
        self.wall_clock += round_seconds;

        let masks: Vec<SelectionMask> =
            outcomes.iter().map(|o| o.update.mask.clone()).collect();
        let gammas: Vec<Option<f64>> = (0..masks.len()).map(|n| gamma_n(&masks, n)).collect();
        let o1 = o1_term(&masks, self.model.num_tensors());
        let param_weights: Vec<f64> = self
            .model
            .specs()
            .iter()
            .map(|s| s.param_count as f64)
            .collect();
        let o1_pw = o1_weighted(&masks, &param_weights);
        let present: Vec<f64> = gammas.iter().flatten().copied().collect();
        let mean_gamma = if present.is_empty() {
            None
        } else {
            Some(present.iter().sum::<f64>() / present.len() as f64)
        };

        let updates: Vec<ClientUpdate> = outcomes.iter().map(|o| o.update.clone()).collect();
        let new_global = aggregate(&updates, &self.global, self.cfg.aggregate_heads)?;
        if !new_global.all_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite global parameters after aggregation in round {}",
                round + 1
            )));
        }
        self.prev_global = std::mem::replace(&mut self.global, new_global);

        let (eval_loss, accuracy) = self.evaluate_global()?;

        let mut clients: Vec<ClientRoundRecord> =
            outcomes.into_iter().map(|o| o.record).collect();
        for (record, gamma) in clients.iter_mut().zip(gammas) {
            record.gamma = gamma;
        }

        self.round += 1;
        Ok(RoundRecord {
            round: self.round,
            wall_clock_seconds: self.wall_clock,
            accuracy,
            eval_loss,
            checksum: checksum(&self.global),
            o1,
            o1_param_weighted: o1_pw,
            mean_gamma,
            clients,
        })
    }

    fn evaluate_global(&mut self) -> Result<(f64, f64)> {
        let Some(eval_batch) = &self.eval_batch else {
            return Ok((0.0, 0.0));
        };
        if self.cfg.aggregate_heads {
            self.model.params = self.global.clone();
            self.model.evaluate(eval_batch)
        } else {
            // Local-only heads: report the mean over clients of global
            // backbone plus that client's own heads.
            let mut loss = 0.0;
            let mut acc = 0.0;
            for client in &self.clients {
                self.model.params = self.global.clone();
                if let Some(heads) = &client.local_heads {
                    self.model.params.heads = heads.clone();
                }
                let (l, a) = self.model.evaluate(eval_batch)?;
                loss += l;
                acc += a;
            }
            let n = self.clients.len() as f64;
            Ok((loss / n, acc / n))
        }
    }
}

/// Runs the configured number of rounds.
pub fn run_training(cfg: &RunConfig, dataset: &Dataset) -> Result<Vec<RoundRecord>> {
    let mut trainer = Trainer::new(cfg, dataset)?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        records.push(trainer.step()?);
    }
    Ok(records)
}

fn draw_batch(
    dataset: &Dataset,
    rows: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    let indices: Vec<usize> = (0..batch_size)
        .map(|_| rows[rng.random_range(0..rows.len())])
        .collect();
    dataset.batch_of(&indices)
}

#[allow(clippy::too_many_arguments)]
fn client_round(
    template: &ChainModel,
    cfg: &RunConfig,
    t_th: f64,
    dataset: &Dataset,
    client: &mut ClientState,
    global: &ParameterStore,
    prev_global: &ParameterStore,
    round: usize,
) -> Result<ClientOutcome> {
    let n = client.cfg.client_id;
    // eta(t): base rate with per-round decay.
    let lr = client.cfg.lr * cfg.lr_decay.powi(round as i32);
    let num_tensors = template.num_tensors();
    let last_block = template.num_blocks() - 1;
    let whole_model = Window::new(0, last_block);
    let partition = template.partition();

    let mut model = template.clone();
    model.params = global.clone();
    if let Some(heads) = &client.local_heads {
        model.params.heads = heads.clone();
    }

    // Importance first, on the freshly received global model.
    let (imp_local, imp_global, imp_blended) = if cfg.variant == Variant::FedAvgFull {
        let zeros = ImportanceVector::zeros(num_tensors);
        (zeros.clone(), zeros.clone(), zeros)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &[stream::IMPORTANCE_BATCH, n as u64, round as u64],
        ));
        let batch = draw_batch(dataset, &client.cfg.data_indices, cfg.batch_size, &mut rng)?;
        let local = local_importance(&model, &batch, lr, &whole_model)?;
        if cfg.variant == Variant::ElasticTrainerOnly {
            // The plain elastic baseline has no global adjustment.
            let blended = local.clone();
            (local, ImportanceVector::zeros(num_tensors), blended)
        } else {
            let global_imp = if round == 0 {
                ImportanceVector::zeros(num_tensors)
            } else {
                global_importance(global, prev_global, lr)?
            };
            let blended = adjust(&local, &global_imp, cfg.beta, cfg.normalize_importance)?;
            (local, global_imp, blended)
        }
    };

    // Window for this round.
    let window = match cfg.variant {
        Variant::FedAvgFull | Variant::ElasticTrainerOnly => whole_model,
        Variant::FedEl | Variant::FedElC => match client.window {
            None => initial_window(&client.block_times, t_th),
            Some(prev) => {
                if cfg.rollback {
                    let sv = if cfg.variant == Variant::FedEl {
                        SlideVariant::FedEl
                    } else {
                        SlideVariant::FedElC
                    };
                    slide(prev, &client.last_mask, &client.block_times, t_th, partition, sv)
                } else if prev.front_edge == last_block {
                    // No rollback: march to the end once, then hold.
                    prev
                } else {
                    advance_front(prev, &client.block_times, t_th)
                }
            }
        },
    };

    let t_fw_eff = client.timing.forward_seconds(window.front_edge);
    let budget = t_th - t_fw_eff;

    let (mask, negative_budget) = if cfg.variant == Variant::FedAvgFull {
        (SelectionMask::all_ones(num_tensors), false)
    } else {
        let selection = select_tensors(&imp_blended, &client.timing, &window, partition, budget)?;
        (selection.mask, selection.negative_budget)
    };

    // Local SGD under the mask.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.seed,
        &[stream::TRAIN_BATCH, n as u64, round as u64],
    ));
    let mut loss_sum = 0.0;
    for _ in 0..client.cfg.local_iters {
        let batch = draw_batch(dataset, &client.cfg.data_indices, cfg.batch_size, &mut rng)?;
        let cache = model.forward_to_exit(&batch, window.front_edge)?;
        let grads = model.backward_masked(&cache, &mask, &window)?;
        loss_sum += grads.loss;
        sgd_step(&mut model.params, &grads, lr, &mask)?;
    }
    let loss = loss_sum / client.cfg.local_iters as f64;
    if !model.params.all_finite() {
        return Err(Error::Evaluation("non-finite parameters after local training".into()));
    }

    let last_tensor = partition.range(window.front_edge).1;
    let bwd = backward_time(&client.timing, &mask, last_tensor)?;
    let seconds = client.cfg.local_iters as f64 * (t_fw_eff + bwd);

    client.window = Some(window);
    client.last_mask = mask.clone();
    if client.local_heads.is_some() {
        client.local_heads = Some(model.params.heads.clone());
    }

    let record = ClientRoundRecord {
        client_id: n,
        window,
        mask: mask.bits().to_vec(),
        compute_seconds: seconds,
        loss,
        gamma: None,
        negative_budget,
        importance_local: imp_local.values,
        importance_global: imp_global.values,
        importance_blended: imp_blended.values,
    };
    Ok(ClientOutcome {
        update: ClientUpdate {
            params: model.params,
            mask,
            trained_heads: vec![window.front_edge],
        },
        record,
        seconds,
    })
}
