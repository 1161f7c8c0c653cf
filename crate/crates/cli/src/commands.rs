//! The seven commands. Each one loads its inputs, delegates the real
//! work to the core crate, writes artifacts under the output directory,
//! and finishes with a manifest naming everything it read and wrote.

use crate::config::{self, ResolvedConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, Manifest, PlanLogMeta, PlanLogRow, PredictionsMeta, PredictionsRow, FORMAT_VERSION};
use hwm_core::diagnostics::{compare_models, MetricsReport, Provenance, Series};
use hwm_core::learning::{evaluate_rollout_error, parameters, train, DynamicsKind, TrainedModel};
use hwm_core::planning::{mpc_run, EvalSpace, PlanModel, PointMassPlanModel, UtilitySpec};
use hwm_core::worlds::{generate_dataset, make_world, Dataset, WorldKind};
use ndarray::s;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Everything a command needs beyond its own flags: the resolved
/// configuration, its canonical echo and hash, and the output directory
/// (already created).
pub struct RunContext {
    pub cfg: ResolvedConfig,
    pub cfg_toml: String,
    pub cfg_sha: String,
    pub out_dir: PathBuf,
    pub config_path: Option<PathBuf>,
    pub plot: bool,
}

/// Resolves the configuration and output directory. Output location
/// precedence: `--out` flag, then `HWM_OUT_DIR`, then `[output] dir`.
pub fn load_context(
    config_path: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    plot: bool,
) -> Result<RunContext> {
    let doc = match config_path {
        Some(p) => formats::read_file(p)?,
        None => String::new(),
    };
    let cfg = config::resolve(&doc, seed)?;
    let cfg_toml = cfg.to_toml_string();
    let cfg_sha = formats::sha256_hex(cfg_toml.as_bytes());
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("HWM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::io(out_dir.display().to_string(), e))?;
    Ok(RunContext {
        cfg,
        cfg_toml,
        cfg_sha,
        out_dir,
        config_path: config_path.map(Path::to_path_buf),
        plot,
    })
}

impl RunContext {
    /// Writes the resolved-config echo and the manifest, then reports
    /// every artifact path on stdout. Called last so the manifest only
    /// ever describes files that exist.
    fn finish(&self, command: &str, inputs: &[&Path], mut artifacts: Vec<String>) -> Result<()> {
        formats::write_file(&self.out_dir.join("resolved_config.toml"), &self.cfg_toml)?;
        artifacts.push("resolved_config.toml".into());
        let mut input_map = BTreeMap::new();
        if let Some(p) = &self.config_path {
            input_map.insert(p.display().to_string(), formats::sha256_file(p)?);
        }
        for p in inputs {
            input_map.insert(p.display().to_string(), formats::sha256_file(p)?);
        }
        formats::write_manifest(
            &self.out_dir,
            &Manifest {
                format_version: FORMAT_VERSION,
                command: command.into(),
                inputs: input_map,
                config_sha256: self.cfg_sha.clone(),
                artifacts: artifacts.clone(),
                seed: self.cfg.seed,
            },
        )?;
        artifacts.push("manifest.json".into());
        artifacts.sort();
        for a in artifacts {
            println!("wrote {}", self.out_dir.join(a).display());
        }
        Ok(())
    }

    fn maybe_svg(&self, stem: &str, group: &[&Series], title: &str, artifacts: &mut Vec<String>) -> Result<()> {
        if self.plot {
            let name = format!("{stem}.svg");
            formats::write_svg(&self.out_dir.join(&name), group, title)?;
            artifacts.push(name);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// generate

pub fn generate(ctx: &RunContext) -> Result<()> {
    let w = &ctx.cfg.world;
    let world = make_world(&w.spec)?;
    let ds = generate_dataset(&world, w.trajectories, w.horizon, w.dt, &w.policy, ctx.cfg.seed)?;
    formats::write_dataset(&ctx.out_dir.join("dataset.jsonl"), &ds, Some(&ctx.cfg))?;
    ctx.finish("generate", &[], vec!["dataset.jsonl".into()])
}

// ---------------------------------------------------------------------------
// train

pub fn train_cmd(ctx: &RunContext, dataset: &Path, kind: DynamicsKind) -> Result<()> {
    let ds = formats::read_dataset(dataset)?;
    if (ds.dt - ctx.cfg.model.dt).abs() > 1e-12 {
        return Err(CliError::Invalid(format!(
            "model.dt = {} but `{}` was sampled at dt = {}; the model must step at the dataset's interval",
            ctx.cfg.model.dt,
            dataset.display(),
            ds.dt
        )));
    }
    let (ck, log) = train(kind, &ctx.cfg.model, &ctx.cfg.train, &ds)?;
    formats::write_checkpoint(&ctx.out_dir.join("checkpoint.json"), &ck, Some(&ctx.cfg))?;
    formats::write_training_log(&ctx.out_dir.join("training_log.csv"), &log.records)?;
    // Timing goes to stderr, never into an artifact: artifacts must be
    // byte-identical across reruns, wall clocks are not.
    eprintln!(
        "trained {:?} for {} steps in {:.1}s",
        kind, ctx.cfg.train.steps, log.wall_clock_secs
    );
    if let Some(fl) = &ck.final_losses {
        eprintln!(
            "final losses: prediction {:.3e}, residual {:.3e}, latent {:.3e}, total {:.3e}",
            fl.prediction, fl.residual, fl.latent, fl.total
        );
    }
    ctx.finish(
        "train",
        &[dataset],
        vec!["checkpoint.json".into(), "training_log.csv".into()],
    )
}

// ---------------------------------------------------------------------------
// rollout

/// Default evaluation horizons: a sparse sweep up to what the dataset
/// can score, given that the first `window` observations are consumed
/// before the first prediction.
fn pick_horizons(user: Option<Vec<usize>>, ds: &Dataset, window: usize) -> Result<Vec<usize>> {
    let max_feasible = (ds.horizon() + 1).saturating_sub(window);
    if max_feasible == 0 {
        return Err(CliError::Invalid(format!(
            "trajectories have {} steps, too short to score a window-{window} model",
            ds.horizon()
        )));
    }
    match user {
        Some(hs) => {
            if hs.is_empty() {
                return Err(CliError::Invalid("--horizons must name at least one horizon".into()));
            }
            for &h in &hs {
                if h == 0 || h > max_feasible {
                    return Err(CliError::Invalid(format!(
                        "horizon {h} is not scorable here (valid range: 1..={max_feasible})"
                    )));
                }
            }
            Ok(hs)
        }
        None => Ok([1usize, 2, 5, 10, 20, 50, 100, 200, 500, 1000]
            .into_iter()
            .filter(|&h| h <= max_feasible)
            .collect()),
    }
}

fn rollout_error_series(horizons: &[usize], mean: &[f64], name: &str) -> Series {
    Series {
        name: name.into(),
        x_label: "horizon (steps)".into(),
        y_label: "mean squared observation error".into(),
        x: horizons.iter().map(|&h| h as f64).collect(),
        y: mean.to_vec(),
    }
}

/// Open-loop predictions from each trajectory's first window, decoded to
/// observation space, stopping early where a rollout leaves the finite
/// range.
fn build_predictions(
    model: &TrainedModel,
    ds: &Dataset,
    steps: usize,
) -> Result<(PredictionsMeta, Vec<PredictionsRow>)> {
    let k = model.window();
    let mut rows = Vec::with_capacity(ds.trajectories.len());
    for traj in &ds.trajectories {
        let window = traj.observations.slice(s![0..k, ..]);
        let z0 = model.encode_window(window)?;
        let mut z = z0.as_slice().to_vec();
        let mut pred: Vec<Vec<f64>> = Vec::new();
        let mut diverged_at = None;
        for h in 1..=steps {
            let a = traj.actions.row(k - 2 + h);
            let next = match model.predict_latent(&z, a) {
                Ok(zn) if zn.iter().all(|v| v.is_finite()) => zn,
                _ => {
                    diverged_at = Some(k - 1 + h);
                    break;
                }
            };
            z = next;
            match model.decode_raw(&z) {
                Ok(o) if o.iter().all(|v| v.is_finite()) => pred.push(o),
                _ => {
                    diverged_at = Some(k - 1 + h);
                    break;
                }
            }
        }
        let got = pred.len();
        let obs = traj
            .observations
            .slice(s![k..k + got, ..])
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        rows.push(PredictionsRow {
            pred,
            obs,
            diverged_at,
        });
    }
    Ok((
        PredictionsMeta {
            format_version: FORMAT_VERSION,
            model_kind: kind_name(model),
            dataset_seed: ds.seed,
            dt: ds.dt,
            start_step: k,
            steps,
        },
        rows,
    ))
}

fn kind_name(model: &TrainedModel) -> String {
    match model.kind() {
        DynamicsKind::PortHamiltonian => "port_hamiltonian".into(),
        DynamicsKind::Baseline => "baseline".into(),
    }
}

pub fn rollout(
    ctx: &RunContext,
    checkpoint: &Path,
    dataset: &Path,
    horizons: Option<Vec<usize>>,
) -> Result<()> {
    let ck = formats::read_checkpoint(checkpoint)?;
    let ds = formats::read_dataset(dataset)?;
    let horizons = pick_horizons(horizons, &ds, ck.model.window())?;
    let max_h = *horizons.iter().max().unwrap();

    let errs = evaluate_rollout_error(&ck.model, &ds, &horizons)?;
    let (meta, rows) = build_predictions(&ck.model, &ds, max_h)?;
    formats::write_predictions(&ctx.out_dir.join("predictions.jsonl"), &meta, &rows)?;

    let mut report = MetricsReport {
        provenance: Provenance {
            checkpoints: vec![checkpoint.display().to_string()],
            datasets: vec![dataset.display().to_string()],
            seeds: vec![ck.train_seed, ck.dataset_seed, ds.seed],
        },
        ..MetricsReport::default()
    };
    report
        .scalars
        .insert("error_at_max_horizon".into(), *errs.mean.last().unwrap());
    report
        .series
        .push(rollout_error_series(&horizons, &errs.mean, "rollout_error"));
    formats::write_report(&ctx.out_dir.join("summary.json"), &report, Some(&ctx.cfg))?;
    formats::write_series_csv(&ctx.out_dir.join("rollout_error.csv"), &report.series[0])?;

    let mut artifacts = vec![
        "predictions.jsonl".into(),
        "summary.json".into(),
        "rollout_error.csv".into(),
    ];
    ctx.maybe_svg(
        "rollout_error",
        &[&report.series[0]],
        "open-loop rollout error",
        &mut artifacts,
    )?;
    ctx.finish("rollout", &[checkpoint, dataset], artifacts)
}

// ---------------------------------------------------------------------------
// diagnose

/// Mean norm of the learned correction term against the mean norm of the
/// structured field, over every window the dataset can encode, at zero
/// action. Small means the physics-shaped part carries the dynamics.
fn residual_ratio(model: &TrainedModel, ds: &Dataset) -> Result<Option<f64>> {
    let TrainedModel::PortHamiltonian(m) = model else {
        return Ok(None);
    };
    let k = m.config.window;
    let a0 = vec![0.0; m.dynamics.action_dim];
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut sum_res, mut sum_struct, mut n) = (0.0, 0.0, 0u64);
    for traj in &ds.trajectories {
        for t0 in (k - 1)..=ds.horizon() {
            let window = traj.observations.slice(s![t0 + 1 - k..t0 + 1, ..]);
            let z = model.encode_window(window)?;
            sum_res += l2(&m.dynamics.residual_field(z.as_slice(), &a0)?);
            sum_struct += l2(&m.dynamics.structured_part(z.as_slice())?);
            n += 1;
        }
    }
    if n == 0 || sum_struct == 0.0 {
        return Ok(None);
    }
    Ok(Some(sum_res / sum_struct))
}

/// Learned energy along the model's own open-loop orbit, relative to the
/// starting value. A structured model that has learned a conservative
/// system should hold this flat; divergence is marked and truncates.
fn latent_energy_drift(model: &TrainedModel, ds: &Dataset, steps: usize) -> Result<Option<Series>> {
    let k = model.window();
    let traj = &ds.trajectories[0];
    let z0 = model.encode_window(traj.observations.slice(s![0..k, ..]))?;
    let mut z = z0.as_slice().to_vec();
    let Some(e0) = model.energy(&z) else {
        return Ok(None);
    };
    let mut x = vec![0.0];
    let mut y = vec![0.0];
    for h in 1..=steps {
        let a = traj.actions.row(k - 2 + h);
        match model.predict_latent(&z, a) {
            Ok(zn) if zn.iter().all(|v| v.is_finite()) => z = zn,
            _ => {
                x.push(h as f64);
                y.push(f64::INFINITY);
                break;
            }
        }
        x.push(h as f64);
        match model.energy(&z) {
            Some(e) if e.is_finite() => y.push(e - e0),
            _ => {
                y.push(f64::INFINITY);
                break;
            }
        }
    }
    Ok(Some(Series {
        name: "latent_energy_drift".into(),
        x_label: "step".into(),
        y_label: "H(z_k) - H(z_0)".into(),
        x,
        y,
    }))
}

pub fn diagnose(ctx: &RunContext, checkpoint: &Path, dataset: &Path) -> Result<()> {
    let ck = formats::read_checkpoint(checkpoint)?;
    let ds = formats::read_dataset(dataset)?;
    let horizons = pick_horizons(None, &ds, ck.model.window())?;
    let max_h = *horizons.iter().max().unwrap();

    let errs = evaluate_rollout_error(&ck.model, &ds, &horizons)?;
    let mut report = MetricsReport {
        provenance: Provenance {
            checkpoints: vec![checkpoint.display().to_string()],
            datasets: vec![dataset.display().to_string()],
            seeds: vec![ck.train_seed, ck.dataset_seed, ds.seed],
        },
        ..MetricsReport::default()
    };
    report
        .scalars
        .insert("param_count".into(), parameters(&ck.model).len() as f64);
    report
        .scalars
        .insert("error_at_max_horizon".into(), *errs.mean.last().unwrap());
    if let Some(fl) = &ck.final_losses {
        report.scalars.insert("final_prediction_loss".into(), fl.prediction);
        report.scalars.insert("final_residual_loss".into(), fl.residual);
        report.scalars.insert("final_latent_loss".into(), fl.latent);
        report.scalars.insert("final_total_loss".into(), fl.total);
    }
    if let Some(ratio) = residual_ratio(&ck.model, &ds)? {
        report.scalars.insert("residual_to_structured_ratio".into(), ratio);
    }
    report
        .series
        .push(rollout_error_series(&horizons, &errs.mean, "rollout_error"));
    if let Some(drift) = latent_energy_drift(&ck.model, &ds, max_h)? {
        report.series.push(drift);
    }

    formats::write_report(&ctx.out_dir.join("summary.json"), &report, Some(&ctx.cfg))?;
    let mut artifacts = vec!["summary.json".into()];
    for s in &report.series {
        let name = format!("{}.csv", s.name);
        formats::write_series_csv(&ctx.out_dir.join(&name), s)?;
        artifacts.push(name);
        ctx.maybe_svg(&s.name, &[s], &s.name, &mut artifacts)?;
    }
    ctx.finish("diagnose", &[checkpoint, dataset], artifacts)
}

// ---------------------------------------------------------------------------
// compare

pub fn compare(
    ctx: &RunContext,
    checkpoint: &Path,
    baseline: &Path,
    dataset: &Path,
    train_data: Option<&Path>,
    horizons: Option<Vec<usize>>,
    sizes: Option<Vec<usize>>,
) -> Result<()> {
    let hwm = formats::read_checkpoint(checkpoint)?;
    let base = formats::read_checkpoint(baseline)?;
    let held = formats::read_dataset(dataset)?;
    let train_ds = train_data.map(formats::read_dataset).transpose()?;

    let window = hwm.model.window().max(base.model.window());
    let horizons = pick_horizons(horizons, &held, window)?;
    let sizes = match (&train_ds, sizes) {
        (None, None) => Vec::new(),
        (None, Some(_)) => {
            return Err(CliError::Invalid(
                "--sizes needs --train-data (retraining on nested subsets requires the training set)"
                    .into(),
            ))
        }
        (Some(t), user) => {
            let n = t.trajectories.len();
            match user {
                Some(list) => {
                    for &s in &list {
                        if s == 0 || s > n {
                            return Err(CliError::Invalid(format!(
                                "--sizes entry {s} is outside the training set (1..={n})"
                            )));
                        }
                    }
                    list
                }
                None => [5usize, 10, 25, 50].into_iter().filter(|&s| s <= n).collect(),
            }
        }
    };

    let mut report = compare_models(&hwm, &base, &held, &horizons, &sizes, train_ds.as_ref())?;
    report.provenance.checkpoints =
        vec![checkpoint.display().to_string(), baseline.display().to_string()];
    report.provenance.datasets = {
        let mut d = vec![dataset.display().to_string()];
        if let Some(p) = train_data {
            d.push(p.display().to_string());
        }
        d
    };

    formats::write_report(&ctx.out_dir.join("summary.json"), &report, Some(&ctx.cfg))?;
    let mut artifacts = vec!["summary.json".into()];
    for s in &report.series {
        let name = format!("{}.csv", s.name);
        formats::write_series_csv(&ctx.out_dir.join(&name), s)?;
        artifacts.push(name);
    }
    let rollout_pair: Vec<&Series> = report
        .series
        .iter()
        .filter(|s| s.name.ends_with("rollout_error"))
        .collect();
    if !rollout_pair.is_empty() {
        ctx.maybe_svg(
            "rollout_error",
            &rollout_pair,
            "open-loop error vs horizon",
            &mut artifacts,
        )?;
    }
    let efficiency_pair: Vec<&Series> = report
        .series
        .iter()
        .filter(|s| s.name.ends_with("data_efficiency"))
        .collect();
    if !efficiency_pair.is_empty() {
        ctx.maybe_svg(
            "data_efficiency",
            &efficiency_pair,
            "held-out error vs training set size",
            &mut artifacts,
        )?;
    }

    let inputs: Vec<&Path> = match train_data {
        Some(t) => vec![checkpoint, baseline, dataset, t],
        None => vec![checkpoint, baseline, dataset],
    };
    ctx.finish("compare", &inputs, artifacts)
}

// ---------------------------------------------------------------------------
// plan

pub fn plan_cmd(ctx: &RunContext, checkpoint: Option<&Path>) -> Result<()> {
    let world = make_world(&ctx.cfg.world.spec)?;
    let model: Box<dyn PlanModel> = match checkpoint {
        Some(p) => Box::new(formats::read_checkpoint(p)?.model),
        None if matches!(ctx.cfg.world.spec.kind, WorldKind::DoubleIntegrator) => {
            Box::new(PointMassPlanModel { dt: ctx.cfg.model.dt })
        }
        None => {
            return Err(CliError::Invalid(format!(
                "plan needs --checkpoint for this world ({}); a built-in planning model exists only for double_integrator",
                world_kind_name(&ctx.cfg.world.spec.kind)
            )))
        }
    };
    let planner = ctx.cfg.plan.planner_config();
    let utility = ctx.cfg.plan.utility_spec();
    let steps = ctx.cfg.plan.mpc_steps;
    let run = mpc_run(&world, model.as_ref(), &utility, &planner, steps, planner.seed)?;

    let rows: Vec<PlanLogRow> = (0..steps)
        .map(|k| PlanLogRow {
            step: k,
            state: run.states[k].as_slice().to_vec(),
            obs: run.observations.row(k).to_vec(),
            action: run.executed.row(k).to_vec(),
            best_utility: run.plans[k].best_utility,
        })
        .collect();
    let meta = PlanLogMeta {
        format_version: FORMAT_VERSION,
        world: ctx.cfg.world.spec.clone(),
        method: ctx.cfg.plan.method.clone(),
        plan_horizon: ctx.cfg.plan.horizon,
        mpc_steps: steps,
        seed: planner.seed,
        config: Some(
            serde_json::to_value(&ctx.cfg)
                .map_err(|e| CliError::Invalid(format!("config echo failed: {e}")))?,
        ),
    };
    formats::write_plan_log(&ctx.out_dir.join("plan_log.jsonl"), &meta, &rows)?;

    let final_state = run.states.last().unwrap().as_slice().to_vec();
    let mut report = MetricsReport {
        provenance: Provenance {
            checkpoints: checkpoint.iter().map(|p| p.display().to_string()).collect(),
            datasets: vec![],
            seeds: vec![planner.seed],
        },
        ..MetricsReport::default()
    };
    report.scalars.insert("steps_executed".into(), steps as f64);
    if let Some(last) = run.plans.last() {
        report.scalars.insert("final_best_utility".into(), last.best_utility);
    }
    if let UtilitySpec::GoalQuadratic { goal, space: EvalSpace::Latent, .. } = &utility {
        if goal.len() == final_state.len() {
            let d2: f64 = goal
                .iter()
                .zip(&final_state)
                .map(|(g, x)| (x - g) * (x - g))
                .sum();
            report.scalars.insert("final_goal_distance".into(), d2.sqrt());
        }
    }

    let step_x: Vec<f64> = (0..steps).map(|k| k as f64).collect();
    report.series.push(Series {
        name: "best_utility".into(),
        x_label: "step".into(),
        y_label: "utility of the selected plan".into(),
        x: step_x.clone(),
        y: rows.iter().map(|r| r.best_utility).collect(),
    });
    let state_dim = final_state.len();
    for i in 0..state_dim {
        report.series.push(Series {
            name: format!("state_{i}"),
            x_label: "step".into(),
            y_label: format!("state[{i}]"),
            x: (0..=steps).map(|k| k as f64).collect(),
            y: run.states.iter().map(|z| z.as_slice()[i]).collect(),
        });
    }
    for j in 0..world.action_dim {
        report.series.push(Series {
            name: format!("action_{j}"),
            x_label: "step".into(),
            y_label: format!("action[{j}]"),
            x: step_x.clone(),
            y: rows.iter().map(|r| r.action[j]).collect(),
        });
    }

    formats::write_report(&ctx.out_dir.join("summary.json"), &report, Some(&ctx.cfg))?;
    let mut artifacts = vec!["plan_log.jsonl".into(), "summary.json".into()];
    for s in &report.series {
        let name = format!("{}.csv", s.name);
        formats::write_series_csv(&ctx.out_dir.join(&name), s)?;
        artifacts.push(name);
    }
    let states: Vec<&Series> = report
        .series
        .iter()
        .filter(|s| s.name.starts_with("state_"))
        .collect();
    ctx.maybe_svg("plan_states", &states, "closed-loop state", &mut artifacts)?;
    let actions: Vec<&Series> = report
        .series
        .iter()
        .filter(|s| s.name.starts_with("action_"))
        .collect();
    if !actions.is_empty() {
        ctx.maybe_svg("plan_actions", &actions, "executed actions", &mut artifacts)?;
    }

    let inputs: Vec<&Path> = checkpoint.into_iter().collect();
    ctx.finish("plan", &inputs, artifacts)
}

fn world_kind_name(kind: &WorldKind) -> &'static str {
    match kind {
        WorldKind::Pendulum { .. } => "pendulum",
        WorldKind::SpringChain { .. } => "spring_chain",
        WorldKind::TwoBody { .. } => "two_body",
        WorldKind::DampedDrivenOscillator { .. } => "damped_driven_oscillator",
        WorldKind::DoubleIntegrator => "double_integrator",
    }
}

// ---------------------------------------------------------------------------
// validate

/// Resolves and prints; writes nothing anywhere.
pub fn validate_cmd(config_path: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let doc = match config_path {
        Some(p) => formats::read_file(p)?,
        None => String::new(),
    };
    let cfg = config::resolve(&doc, seed)?;
    print!("{}", cfg.to_toml_string());
    Ok(())
}
