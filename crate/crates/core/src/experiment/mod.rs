//! Paired training runs across regularization modes, λ grid search and the
//! artifacts they produce.
//!
//! Every run in one experiment shares the data split, the initial weights
//! (same seed) and one frozen matrix of noise draws, so the modes differ only
//! in their regularization. Validation noise at level η is `η·range⊙u` with
//! the same `u` for every η and every epoch.

mod contour;
mod report;

pub use contour::{contour_csv, contour_grid, contour_node, ContourNode};
pub use report::{curves_csv, format_sig, report_table, sweep_csv, Table};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NoiseDraw, NoiseDraws, NoiseSpec};
use crate::error::{Error, Result};
use crate::linalg::SpectralEstimate;
use crate::network::{lipschitz_upper_bound, ModelFile, Network};
use crate::optimizer::{evaluate, TrainConfig, Trainer};
use crate::regularization::RegularizationMode;
use crate::{seeded_rng, RngStream};

/// Noise levels used for validation by default.
pub const DEFAULT_ETA_LEVELS: [f64; 4] = [0.0, 0.2, 0.4, 0.6];
/// Default λ grid.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-2, 1e-1, 1.0, 10.0, 1e2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Optimizer settings; `mode` is replaced per run and `seed` drives
    /// initialization, shuffling and noise.
    pub train: TrainConfig,
    pub hidden_layers: Vec<usize>,
    pub eta_levels: Vec<f64>,
    pub symmetric_noise: bool,
    pub noise_draw: NoiseDraw,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            hidden_layers: vec![20, 20, 20],
            eta_levels: DEFAULT_ETA_LEVELS.to_vec(),
            symmetric_noise: false,
            noise_draw: NoiseDraw::PerFeature,
        }
    }
}

impl ExperimentConfig {
    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(1))
            .collect()
    }

    fn noise_spec(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            eta: 0.0,
            seed,
            symmetric: self.symmetric_noise,
            draw: self.noise_draw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta_levels.is_empty() {
            return Err(Error::Config("at least one noise level is required".into()));
        }
        if let Some(eta) = self.eta_levels.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::Config(format!("noise levels must be finite and non-negative, got {eta}")));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Loss and MAE on the whole training set after the epoch's updates.
    pub train_loss: f64,
    pub train_mae: f64,
    /// Batch-weighted running averages collected during the epoch.
    pub running_loss: f64,
    pub running_mae: f64,
    pub objective: f64,
    /// Validation MAE for each entry of the report's `eta_levels`.
    pub val_mae: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: RegularizationMode,
    pub seed: u64,
    pub eta_levels: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Final spectral norm of every weight matrix.
    pub layer_norms: Vec<f64>,
    /// Product of `layer_norms` (times the activation constants, all 1).
    pub lipschitz_bound: f64,
    /// Final validation MAE without noise.
    pub clean_val_mae: f64,
    pub config: TrainConfig,
    pub wall_time_secs: f64,
    pub model: ModelFile,
}

impl TrainReport {
    pub fn final_epoch(&self) -> &EpochRecord {
        self.epochs.last().expect("a report has at least one epoch")
    }

    /// Final validation MAE at noise level `eta`, if it was evaluated.
    pub fn final_val_mae(&self, eta: f64) -> Option<f64> {
        let i = self.eta_levels.iter().position(|&e| (e - eta).abs() < 1e-12)?;
        Some(self.final_epoch().val_mae[i])
    }

    pub fn network(&self) -> Result<Network> {
        Network::try_from(self.model.clone())
    }
}

/// Trains one network per mode on `dataset`'s training rows and tracks
/// validation MAE on the test rows at every noise level, epoch by epoch.
/// Runs execute in parallel on the current rayon pool; the output order
/// follows `modes`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    modes: &[RegularizationMode],
) -> Result<Vec<TrainReport>> {
    if modes.is_empty() {
        return Err(Error::Config("no regularization modes selected".into()));
    }
    modes
        .par_iter()
        .map(|&mode| train_single(cfg, dataset, mode, cfg.train.seed))
        .collect()
}

/// Trains a single `(mode, seed)` cell.
pub fn train_single(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    mode: RegularizationMode,
    seed: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    let started = Instant::now();
    let split = dataset
        .split_indices()
        .ok_or_else(|| Error::Config("dataset must be split before training".into()))?;
    let train = dataset.train_samples()?;
    let tcfg = TrainConfig {
        mode,
        seed,
        ..cfg.train.clone()
    };
    tcfg.validate(train.len())?;

    let draws = NoiseDraws::generate(split.test.len(), dataset.n_features(), &cfg.noise_spec(seed));
    let val_sets = cfg
        .eta_levels
        .iter()
        .map(|&eta| dataset.noisy_samples(&split.test, eta, &draws))
        .collect::<Result<Vec<_>>>()?;
    let clean = dataset.test_samples()?;

    let mut net = Network::init(&cfg.widths(dataset.n_features()), &mut seeded_rng(seed, RngStream::Init))?;
    let mut trainer = Trainer::new(&net, tcfg.clone());
    let mut epochs = Vec::with_capacity(tcfg.epochs);
    for epoch in 1..=tcfg.epochs {
        let running = trainer.train_epoch(&mut net, &train)?;
        let fit = evaluate(&net, &train)?;
        let val_mae = val_sets
            .iter()
            .map(|s| evaluate(&net, s).map(|m| m.mae))
            .collect::<Result<Vec<_>>>()?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: fit.loss,
            train_mae: fit.mae,
            running_loss: running.loss,
            running_mae: running.mae,
            objective: running.objective,
            val_mae,
        });
    }

    let estimates = trainer.spectral_estimates(&net)?;
    warn_unconverged(&estimates);
    let lipschitz_bound = lipschitz_upper_bound(&net, &estimates)?;
    Ok(TrainReport {
        mode,
        seed,
        eta_levels: cfg.eta_levels.clone(),
        epochs,
        layer_norms: estimates.iter().map(|e| e.sigma).collect(),
        lipschitz_bound,
        clean_val_mae: evaluate(&net, &clean)?.mae,
        config: tcfg,
        wall_time_secs: started.elapsed().as_secs_f64(),
        model: ModelFile::from(&net),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// `None` for modes without a λ.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mode: RegularizationMode,
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cells: Vec<SweepCell>,
    /// Mean final clean validation MAE per grid entry (one entry for modes
    /// without λ).
    pub selection_metric: Vec<f64>,
    pub selected_lambda: Option<f64>,
}

impl SweepResult {
    /// Cells trained with the given λ.
    pub fn cells_for(&self, lambda: Option<f64>) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(move |c| c.lambda == lambda)
    }

    /// The mode with the selected λ filled in.
    pub fn selected_mode(&self) -> RegularizationMode {
        match self.selected_lambda {
            Some(l) => self.mode.with_lambda(l),
            None => self.mode,
        }
    }

    /// Reports of every seed at the selected λ.
    pub fn selected_reports(&self) -> Vec<&TrainReport> {
        self.cells_for(self.selected_lambda).map(|c| &c.report).collect()
    }

    /// Median over seeds of the final `L̂` for each λ, in grid order.
    pub fn median_bound_by_lambda(&self) -> Vec<f64> {
        self.grid_entries()
            .into_iter()
            .map(|l| median(self.cells_for(l).map(|c| c.report.lipschitz_bound).collect()))
            .collect()
    }

    fn grid_entries(&self) -> Vec<Option<f64>> {
        if self.mode.is_spectral() {
            self.lambda_grid.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }
}

/// Trains every `(λ, seed)` combination and selects the λ with the lowest
/// mean final clean validation MAE across seeds (ties go to the earlier grid
/// entry). Modes without λ train each seed once.
pub fn grid_search(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    mode: RegularizationMode,
    lambda_grid: &[f64],
    seeds: &[u64],
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::Config("grid search needs at least one seed".into()));
    }
    if mode.is_spectral() && lambda_grid.is_empty() {
        return Err(Error::Config("grid search needs at least one λ".into()));
    }
    let mut result = SweepResult {
        mode,
        lambda_grid: lambda_grid.to_vec(),
        seeds: seeds.to_vec(),
        cells: Vec::new(),
        selection_metric: Vec::new(),
        selected_lambda: None,
    };
    let entries = result.grid_entries();
    for l in entries.iter().flatten() {
        mode.with_lambda(*l).validate()?;
    }
    let jobs: Vec<(Option<f64>, u64)> = entries
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    result.cells = jobs
        .par_iter()
        .map(|&(lambda, seed)| {
            let m = lambda.map_or(mode, |l| mode.with_lambda(l));
            train_single(cfg, dataset, m, seed).map(|report| SweepCell { lambda, seed, report })
        })
        .collect::<Result<Vec<_>>>()?;

    result.selection_metric = entries
        .iter()
        .map(|&l| {
            let v: Vec<f64> = result.cells_for(l).map(|c| c.report.clean_val_mae).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let best = result
        .selection_metric
        .iter()
        .enumerate()
        .fold(0, |best, (i, &m)| if m < result.selection_metric[best] { i } else { best });
    result.selected_lambda = entries[best];
    Ok(result)
}

/// Metrics of a trained network on one subset of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: usize,
    pub clean_mae: f64,
    pub clean_loss: f64,
    pub eta_levels: Vec<f64>,
    /// MAE at each noise level, all levels scaling one frozen set of draws.
    pub noisy_mae: Vec<f64>,
    pub layer_norms: Vec<f64>,
    pub lipschitz_bound: f64,
}

/// Evaluates `net` on `rows` of `dataset` without noise and at every level in
/// `eta_levels`. The dataset must carry bounds (split or applied
/// preprocessing).
pub fn evaluate_model(
    net: &Network,
    dataset: &Dataset,
    rows: &[usize],
    eta_levels: &[f64],
    noise: &NoiseSpec,
    power: &crate::linalg::PowerIteration,
) -> Result<Evaluation> {
    if net.input_dim() != dataset.n_features() {
        return Err(Error::Validation(format!(
            "model expects {} input features but the dataset has {}",
            net.input_dim(),
            dataset.n_features()
        )));
    }
    if rows.is_empty() {
        return Err(Error::Config("no rows to evaluate".into()));
    }
    let clean = evaluate(net, &dataset.samples(rows)?)?;
    let draws = NoiseDraws::generate(rows.len(), dataset.n_features(), noise);
    let noisy_mae = eta_levels
        .iter()
        .map(|&eta| evaluate(net, &dataset.noisy_samples(rows, eta, &draws)?).map(|m| m.mae))
        .collect::<Result<Vec<_>>>()?;
    let mut tracker = crate::regularization::SpectralTracker::new(*power);
    let estimates = tracker.refresh(net, &mut seeded_rng(noise.seed, RngStream::Training))?;
    warn_unconverged(&estimates);
    Ok(Evaluation {
        rows: rows.len(),
        clean_mae: clean.mae,
        clean_loss: clean.loss,
        eta_levels: eta_levels.to_vec(),
        noisy_mae,
        layer_norms: estimates.iter().map(|e| e.sigma).collect(),
        lipschitz_bound: lipschitz_upper_bound(net, &estimates)?,
    })
}

fn warn_unconverged(estimates: &[SpectralEstimate]) {
    for (l, e) in estimates.iter().enumerate().filter(|(_, e)| !e.converged) {
        log::warn!("spectral norm of layer {} did not converge after {} iterations; L̂ may be underestimated", l + 1, e.iterations);
    }
}

/// Median of a non-empty list (mean of the two middle values for even
/// lengths).
pub fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty(), "median of an empty list");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// The report whose final `L̂` is the median over seeds (the lower middle for
/// even counts). Used for single-column summaries of multi-seed runs.
pub fn representative<'a>(reports: &[&'a TrainReport]) -> Option<&'a TrainReport> {
    let mut sorted: Vec<&TrainReport> = reports.to_vec();
    sorted.sort_by(|a, b| a.lipschitz_bound.total_cmp(&b.lipschitz_bound));
    sorted.get((sorted.len().max(1) - 1) / 2).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn synthetic(n: usize) -> Dataset {
        let mut rng = seeded_rng(99, RngStream::Noise);
        use rand::Rng;
        let x: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = (0..n).map(|i| x[3 * i] - 0.5 * x[3 * i + 1] + 3.0).collect();
        Dataset::new(Matrix::new(n, 3, x).unwrap(), y, vec!["a".into(), "b".into(), "c".into()], "y".into())
            .unwrap()
            .split(0.8, 5)
            .unwrap()
            .standardize()
            .unwrap()
    }

    fn quick() -> ExperimentConfig {
        ExperimentConfig {
            train: TrainConfig {
                epochs: 3,
                batch_size: 10,
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
            hidden_layers: vec![6, 6],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_mode_single_epoch() {
        let cfg = ExperimentConfig {
            train: TrainConfig { epochs: 1, ..quick().train },
            ..quick()
        };
        let reports = run_experiment(&cfg, &synthetic(60), &[RegularizationMode::NoReg]).unwrap();
        assert_eq!(reports.len(), 1);
        let r = &reports[0];
        assert_eq!(r.epochs.len(), 1);
        let product: f64 = r.layer_norms.iter().product();
        assert!((r.lipschitz_bound - product).abs() <= 1e-9 * product);
    }

    #[test]
    fn zero_eta_matches_clean_validation() {
        let cfg = ExperimentConfig {
            eta_levels: vec![0.0],
            ..quick()
        };
        let ds = synthetic(60);
        let r = &run_experiment(&cfg, &ds, &[RegularizationMode::NoReg]).unwrap()[0];
        assert_eq!(r.final_val_mae(0.0).unwrap(), r.clean_val_mae);
        let net = r.network().unwrap();
        assert_eq!(evaluate(&net, &ds.test_samples().unwrap()).unwrap().mae, r.clean_val_mae);
    }

    #[test]
    fn modes_share_initialization() {
        let cfg = ExperimentConfig {
            train: TrainConfig {
                learning_rate: 0.0,
                ..quick().train
            },
            ..quick()
        };
        let modes = [
            RegularizationMode::NoReg,
            RegularizationMode::LipschitzProduct { lambda: 1.0 },
            RegularizationMode::MaxNorm { cap: 10.0 },
        ];
        let reports = run_experiment(&cfg, &synthetic(60), &modes).unwrap();
        for r in &reports[1..] {
            assert_eq!(r.model, reports[0].model);
            assert_eq!(r.epochs[0].val_mae, reports[0].epochs[0].val_mae);
        }
        assert_eq!(reports.iter().map(|r| r.mode).collect::<Vec<_>>(), modes);
    }

    #[test]
    fn one_point_grid_selects_it() {
        let mode = RegularizationMode::LayerSum { lambda: 1.0 };
        let sweep = grid_search(&quick(), &synthetic(60), mode, &[3.0], &[1, 2]).unwrap();
        assert_eq!(sweep.selected_lambda, Some(3.0));
        assert_eq!(sweep.cells.len(), 2);
        assert_eq!(sweep.selected_mode(), RegularizationMode::LayerSum { lambda: 3.0 });
    }

    #[test]
    fn selection_is_argmin_of_metric() {
        let mode = RegularizationMode::LipschitzProduct { lambda: 1.0 };
        let grid = DEFAULT_LAMBDA_GRID;
        let sweep = grid_search(&quick(), &synthetic(60), mode, &grid, &[1]).unwrap();
        assert_eq!(sweep.selection_metric.len(), grid.len());
        let min = sweep.selection_metric.iter().cloned().fold(f64::INFINITY, f64::min);
        let idx = sweep.selection_metric.iter().position(|&m| m == min).unwrap();
        assert_eq!(sweep.selected_lambda, Some(grid[idx]));
    }

    #[test]
    fn non_spectral_grid_ignores_lambda() {
        let sweep = grid_search(&quick(), &synthetic(60), RegularizationMode::NoReg, &DEFAULT_LAMBDA_GRID, &[1, 2, 3]).unwrap();
        assert_eq!(sweep.cells.len(), 3);
        assert_eq!(sweep.selected_lambda, None);
        assert_eq!(sweep.selected_reports().len(), 3);
        assert_eq!(sweep.median_bound_by_lambda().len(), 1);
    }

    #[test]
    fn evaluation_matches_training_record() {
        let ds = synthetic(60);
        let r = &run_experiment(&quick(), &ds, &[RegularizationMode::NoReg]).unwrap()[0];
        let net = r.network().unwrap();
        let train_rows = ds.split_indices().unwrap().train.clone();
        let eval = evaluate_model(&net, &ds, &train_rows, &[0.0, 0.3], &NoiseSpec::new(0.0, 4), &Default::default()).unwrap();
        assert!((eval.clean_mae - r.final_epoch().train_mae).abs() < 1e-9);
        assert_eq!(eval.noisy_mae[0], eval.clean_mae);
        assert!((eval.lipschitz_bound - r.lipschitz_bound).abs() < 1e-6 * r.lipschitz_bound);
        let wrong = Network::init(&[5, 2, 1], &mut seeded_rng(0, RngStream::Init)).unwrap();
        match evaluate_model(&wrong, &ds, &train_rows, &[0.0], &NoiseSpec::new(0.0, 4), &Default::default()) {
            Err(Error::Validation(msg)) => assert!(msg.contains('5') && msg.contains('3'), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn median_and_representative() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = synthetic(60);
        assert!(run_experiment(&quick(), &ds, &[]).is_err());
        let cfg = ExperimentConfig {
            eta_levels: vec![],
            ..quick()
        };
        assert!(run_experiment(&cfg, &ds, &[RegularizationMode::NoReg]).is_err());
        assert!(grid_search(&quick(), &ds, RegularizationMode::NoReg, &[1.0], &[]).is_err());
        let lip = RegularizationMode::LipschitzProduct { lambda: 1.0 };
        assert!(grid_search(&quick(), &ds, lip, &[], &[1]).is_err());
        assert!(grid_search(&quick(), &ds, lip, &[-1.0], &[1]).is_err());
    }
}
