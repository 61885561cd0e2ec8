use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lipreg::data::{load_csv, Dataset, NoiseDraw, NoiseSpec, Preprocessing, TargetColumn};
use lipreg::experiment::{
    contour_csv, contour_grid, curves_csv, evaluate_model, format_sig, grid_search, median, report_table,
    representative, run_experiment, sweep_csv, ExperimentConfig, SweepResult, TrainReport,
};
use lipreg::fsutil::write_atomic;
use lipreg::linalg::PowerIteration;
use lipreg::network::{load_model, save_model, Network};
use lipreg::optimizer::TrainConfig;
use lipreg::regularization::RegularizationMode;

use crate::args::{Command, ContourArgs, EvaluateArgs, ModeArg, ReportArgs, Subset, SweepArgs, TrainArgs};
use crate::{read_input, required, required_path, CliError, CliResult};

/// Contents of `report.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub config: Command,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selection: Vec<Selection>,
    pub reports: Vec<TrainReport>,
}

/// Outcome of the λ search for one mode.
#[derive(Debug, Serialize, Deserialize)]
pub struct Selection {
    pub mode: RegularizationMode,
    pub selected_lambda: Option<f64>,
    /// Mean final clean validation MAE per grid entry.
    pub selection_metric: Vec<f64>,
    pub median_lipschitz_bound: Vec<f64>,
    /// Median final validation MAE at each noise level for the selected λ.
    pub median_val_mae: Vec<f64>,
}

pub fn run(command: Command) -> CliResult<()> {
    let jobs = match &command {
        Command::Train(a) => a.jobs,
        Command::Sweep(a) => a.run.jobs,
        _ => None,
    };
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?
            .install(|| dispatch(command)),
        None => dispatch(command),
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match &command {
        Command::Train(a) => train(&command, a),
        Command::Sweep(a) => sweep(&command, a),
        Command::Evaluate(a) => evaluate(&command, a),
        Command::Contour(a) => contour(&command, a),
        Command::Report(a) => report(&command, a),
    }
}

/// Configuration errors found before any training are usage errors.
fn usage(e: lipreg::Error) -> CliError {
    match e {
        lipreg::Error::Config(msg) => CliError::Usage(msg),
        other => CliError::Run(other),
    }
}

fn prepare_output(command: &Command) -> CliResult<PathBuf> {
    let dir = command.output_dir().clone();
    std::fs::create_dir_all(&dir).map_err(|e| lipreg::Error::io(&dir, e))?;
    write_json(&dir.join("config_used.json"), command)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn resolve_modes(a: &TrainArgs) -> CliResult<Vec<RegularizationMode>> {
    if a.mode.is_empty() {
        return Err(CliError::Usage("--mode needs at least one value".into()));
    }
    let mut seen: Vec<ModeArg> = Vec::new();
    for m in &a.mode {
        if seen.contains(m) {
            return Err(CliError::Usage(format!("--mode lists {m:?} more than once").to_lowercase()));
        }
        seen.push(*m);
    }
    let modes: Vec<RegularizationMode> = a.mode.iter().map(|m| m.resolve(a.lambda, a.max_norm_cap)).collect();
    for m in &modes {
        m.validate().map_err(usage)?;
    }
    Ok(modes)
}

fn experiment_config(a: &TrainArgs) -> ExperimentConfig {
    ExperimentConfig {
        train: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            mode: RegularizationMode::NoReg,
            seed: a.seed,
            shuffle: !a.no_shuffle,
            power_iteration: PowerIteration {
                tol: a.power_tol,
                max_iter: a.power_max_iter,
            },
        },
        hidden_layers: a.hidden.clone(),
        eta_levels: a.eta.clone(),
        symmetric_noise: a.symmetric_noise,
        noise_draw: if a.scalar_noise { NoiseDraw::Scalar } else { NoiseDraw::PerFeature },
    }
}

fn load_dataset(a: &TrainArgs) -> CliResult<Dataset> {
    let path = required_path(&a.dataset, "--dataset")?;
    let target: TargetColumn = required(&a.target, "--target")?.parse().expect("infallible");
    if !(a.split > 0.0 && a.split < 1.0) {
        return Err(CliError::Usage(format!("--split must lie in (0, 1), got {}", a.split)));
    }
    let ds = load_csv(&path, &target)?.split(a.split, a.split_seed).map_err(usage)?;
    Ok(if a.no_standardize { ds } else { ds.standardize()? })
}

/// Loads the data and checks every setting; nothing is trained yet.
fn prepare_run(a: &TrainArgs) -> CliResult<(Dataset, ExperimentConfig, Vec<RegularizationMode>)> {
    let modes = resolve_modes(a)?;
    let cfg = experiment_config(a);
    cfg.validate().map_err(usage)?;
    let ds = load_dataset(a)?;
    let train_len = ds.split_indices().map_or(0, |s| s.train.len());
    cfg.train.validate(train_len).map_err(usage)?;
    Ok((ds, cfg, modes))
}

fn model_file_name(mode: &RegularizationMode) -> String {
    format!("model_{}.json", mode.name())
}

fn write_table(dir: &Path, reports: &[&TrainReport]) -> CliResult<String> {
    let table = report_table(reports)?;
    write_text(&dir.join("table.csv"), &table.to_csv())?;
    let text = table.to_text();
    write_text(&dir.join("table.txt"), &text)?;
    Ok(text)
}

fn train(command: &Command, a: &TrainArgs) -> CliResult<()> {
    let (ds, cfg, modes) = prepare_run(a)?;
    let dir = prepare_output(command)?;
    write_json(&dir.join("preprocessing.json"), &ds.preprocessing()?)?;

    let reports = run_experiment(&cfg, &ds, &modes)?;
    for r in &reports {
        save_model(&r.network()?, &dir.join(model_file_name(&r.mode)))?;
    }
    let refs: Vec<&TrainReport> = reports.iter().collect();
    write_text(&dir.join("curves.csv"), &curves_csv(&refs)?)?;
    let table = write_table(&dir, &refs)?;
    let mut out = table;
    for r in &reports {
        let _ = write!(out, "{:<14} val MAE", r.mode.label());
        for (eta, mae) in r.eta_levels.iter().zip(&r.final_epoch().val_mae) {
            let _ = write!(out, "  η={eta}: {}", format_sig(*mae, 6));
        }
        out.push('\n');
    }
    print!("{out}");
    write_json(
        &dir.join("report.json"),
        &RunReport {
            config: command.clone(),
            selection: Vec::new(),
            reports,
        },
    )
}

fn sweep(command: &Command, a: &SweepArgs) -> CliResult<()> {
    let (ds, cfg, modes) = prepare_run(&a.run)?;
    if a.seeds.is_empty() {
        return Err(CliError::Usage("--seeds needs at least one value".into()));
    }
    if a.lambda_grid.is_empty() {
        return Err(CliError::Usage("--lambda-grid needs at least one value".into()));
    }
    for &l in &a.lambda_grid {
        RegularizationMode::LipschitzProduct { lambda: l }.validate().map_err(usage)?;
    }
    let r = a.contour_range;
    let nodes = contour_grid((-r, r), (-r, r), a.contour_resolution).map_err(usage)?;
    let dir = prepare_output(command)?;
    write_json(&dir.join("preprocessing.json"), &ds.preprocessing()?)?;
    write_text(&dir.join("contour.csv"), &contour_csv(&nodes))?;

    let sweeps: Vec<SweepResult> = modes
        .par_iter()
        .map(|&m| grid_search(&cfg, &ds, m, &a.lambda_grid, &a.seeds))
        .collect::<lipreg::Result<_>>()?;
    write_text(&dir.join("sweep.csv"), &sweep_csv(&sweeps))?;

    let mut selection = Vec::with_capacity(sweeps.len());
    let mut representatives = Vec::with_capacity(sweeps.len());
    let mut summary = String::new();
    for s in &sweeps {
        let chosen = s.selected_reports();
        let median_val_mae: Vec<f64> = (0..cfg.eta_levels.len())
            .map(|k| median(chosen.iter().map(|r| r.final_epoch().val_mae[k]).collect()))
            .collect();
        let _ = write!(summary, "{:<14}", s.mode.label());
        if let Some(l) = s.selected_lambda {
            let _ = write!(summary, " λ={l}");
        }
        let _ = write!(summary, "  median val MAE");
        for (eta, mae) in cfg.eta_levels.iter().zip(&median_val_mae) {
            let _ = write!(summary, "  η={eta}: {}", format_sig(*mae, 6));
        }
        summary.push('\n');
        selection.push(Selection {
            mode: s.selected_mode(),
            selected_lambda: s.selected_lambda,
            selection_metric: s.selection_metric.clone(),
            median_lipschitz_bound: s.median_bound_by_lambda(),
            median_val_mae,
        });
        let rep = representative(&chosen).expect("at least one seed");
        save_model(&rep.network()?, &dir.join(model_file_name(&rep.mode)))?;
        representatives.push(rep);
    }
    let reports: Vec<TrainReport> = sweeps
        .iter()
        .flat_map(|s| s.selected_reports().into_iter().cloned())
        .collect();
    write_text(&dir.join("curves.csv"), &curves_csv(&reports.iter().collect::<Vec<_>>())?)?;
    let table = write_table(&dir, &representatives)?;
    print!("{table}{summary}");
    write_json(
        &dir.join("report.json"),
        &RunReport {
            config: command.clone(),
            selection,
            reports,
        },
    )
}

fn evaluate(command: &Command, a: &EvaluateArgs) -> CliResult<()> {
    let model_path = required_path(&a.model, "--model")?;
    let data_path = required_path(&a.dataset, "--dataset")?;
    let target: TargetColumn = required(&a.target, "--target")?.parse().expect("infallible");
    let pre_path = match &a.preprocessing {
        Some(p) => p.clone(),
        None => model_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("preprocessing.json"),
    };
    if !pre_path.is_file() {
        return Err(CliError::Usage(format!(
            "preprocessing file not found: {} (pass --preprocessing)",
            pre_path.display()
        )));
    }
    if let Some(eta) = a.eta.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(CliError::Usage(format!("noise levels must be finite and non-negative, got {eta}")));
    }
    let pre: Preprocessing = serde_json::from_str(&read_input(&pre_path)?).map_err(|e| lipreg::Error::Parse {
        path: pre_path.clone(),
        message: e.to_string(),
    })?;
    let net: Network = load_model(&model_path)?;
    let ds = load_csv(&data_path, &target)?;
    if net.input_dim() != ds.n_features() {
        return Err(lipreg::Error::Validation(format!(
            "model {} expects {} input features but dataset {} has {}",
            model_path.display(),
            net.input_dim(),
            data_path.display(),
            ds.n_features()
        ))
        .into());
    }
    let ds = ds.apply_preprocessing(&pre)?;
    let split = ds.split_indices().expect("preprocessing carries a split");
    let rows: Vec<usize> = match a.subset {
        Subset::All => (0..ds.len()).collect(),
        Subset::Train => split.train.clone(),
        Subset::Test => split.test.clone(),
    };
    let noise = NoiseSpec {
        eta: 0.0,
        seed: a.noise_seed,
        symmetric: a.symmetric_noise,
        draw: if a.scalar_noise { NoiseDraw::Scalar } else { NoiseDraw::PerFeature },
    };
    let dir = prepare_output(command)?;
    let ev = evaluate_model(&net, &ds, &rows, &a.eta, &noise, &PowerIteration::default())?;

    let mut csv = format!("quantity,value\nrows,{}\n", ev.rows);
    let mut text = format!("{:<12} {}\n", "rows", ev.rows);
    let mut add = |label: String, v: f64| {
        let _ = writeln!(csv, "{label},{v}");
        let _ = writeln!(text, "{label:<12} {}", format_sig(v, 6));
    };
    add("clean_mae".into(), ev.clean_mae);
    add("clean_loss".into(), ev.clean_loss);
    for (eta, mae) in ev.eta_levels.iter().zip(&ev.noisy_mae) {
        add(format!("mae@{eta}"), *mae);
    }
    for (l, s) in ev.layer_norms.iter().enumerate() {
        add(format!("||W_{}||", l + 1), *s);
    }
    add("L_hat".into(), ev.lipschitz_bound);
    print!("{text}");
    write_text(&dir.join("evaluation.csv"), &csv)
}

fn contour(command: &Command, a: &ContourArgs) -> CliResult<()> {
    let r = a.range;
    if !(r.is_finite() && r > 0.0) {
        return Err(CliError::Usage(format!("--range must be positive, got {r}")));
    }
    let nodes = contour_grid((-r, r), (-r, r), a.resolution).map_err(usage)?;
    let dir = prepare_output(command)?;
    write_text(&dir.join("contour.csv"), &contour_csv(&nodes))?;
    let square = nodes.iter().filter(|n| n.in_square).count();
    let product = nodes.iter().filter(|n| n.in_product).count();
    println!(
        "{} nodes, {square} in |W1|,|W2| <= 1, {product} in |W1|·|W2| <= 1",
        nodes.len()
    );
    Ok(())
}

fn report(command: &Command, a: &ReportArgs) -> CliResult<()> {
    let input = required_path(&a.input, "--input")?;
    let run: RunReport = serde_json::from_str(&read_input(&input)?).map_err(|e| lipreg::Error::Parse {
        path: input.clone(),
        message: e.to_string(),
    })?;
    if run.reports.is_empty() {
        return Err(lipreg::Error::Schema {
            path: input,
            message: "no reports".into(),
        }
        .into());
    }
    // One column per mode; multi-seed runs use the median-L̂ seed.
    let mut groups: Vec<Vec<&TrainReport>> = Vec::new();
    for r in &run.reports {
        match groups.iter_mut().find(|g| g[0].mode.name() == r.mode.name()) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    let columns: Vec<&TrainReport> = groups
        .iter()
        .map(|g| representative(g).expect("non-empty group"))
        .collect();
    let dir = prepare_output(command)?;
    print!("{}", write_table(&dir, &columns)?);
    Ok(())
}
