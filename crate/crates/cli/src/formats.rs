//! Every file the toolchain reads or writes: JSONL datasets, JSON
//! checkpoints, CSV series, JSON metric reports, SVG plots, JSONL plan
//! logs, and the per-run manifest.
//!
//! Two rules hold throughout. First, floats are written as decimal with
//! 17 significant digits, which is exactly enough to identify every
//! double — so read ∘ write is the identity and identical data produces
//! byte-identical files. Second, the only non-finite value any format
//! carries is `+∞` as a divergence marker, spelled `"diverged"`; JSON
//! would otherwise silently turn infinities into `null`.

use crate::config::ResolvedConfig;
use crate::error::{CliError, Result};
use hwm_core::diagnostics::{MetricsReport, Provenance, Series};
use hwm_core::learning::{
    init_model, parameter_layout, parameters, set_parameters, Checkpoint, DynamicsKind,
    LossBreakdown, LossRecord, ModelConfig, TrainConfig, TrainedModel,
};
use hwm_core::phase::{ActionSequence, FlatState};
use hwm_core::planning::PlanModel;
use hwm_core::worlds::{Dataset, ObsTrajectory, WorldSpec};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// 17-significant-digit JSON

/// JSON formatter that writes every float as `d.dddddddddddddddde±x`.
/// 17 significant digits round-trip every IEEE double exactly.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: std::io::Write + ?Sized,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes with the 17-digit float convention. The caller must ensure
/// the value holds no non-finite floats (serde_json would write `null`);
/// formats with legal infinities map them to `"diverged"` first.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Invalid(format!("serialization failed: {e}")))?;
    String::from_utf8(out).map_err(|e| CliError::Invalid(format!("non-UTF8 serialization: {e}")))
}

// ---------------------------------------------------------------------------
// Small file helpers

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn array_of(rows: &[Vec<f64>], ncols: usize, what: &str) -> std::result::Result<Array2<f64>, String> {
    let mut flat = Vec::with_capacity(rows.len() * ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(format!(
                "{what}: row {i} has {} entries, expected {ncols}",
                row.len()
            ));
        }
        flat.extend_from_slice(row);
    }
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| format!("{what}: {e}"))
}

// ---------------------------------------------------------------------------
// Dataset: JSON lines

/// First line of a dataset file. The `config` echo is carried for
/// humans and manifests; readers do not interpret it.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    format_version: u32,
    world: WorldSpec,
    seed: u64,
    dt: f64,
    trajectories: usize,
    /// Steps per trajectory; every trajectory records `horizon + 1` rows.
    horizon: usize,
    obs_dim: usize,
    action_dim: usize,
    obs_mean: Vec<f64>,
    obs_std: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajRow {
    obs: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    truth: Vec<Vec<f64>>,
}

pub fn write_dataset(path: &Path, ds: &Dataset, config: Option<&ResolvedConfig>) -> Result<()> {
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        world: ds.spec.clone(),
        seed: ds.seed,
        dt: ds.dt,
        trajectories: ds.trajectories.len(),
        horizon: ds.horizon(),
        obs_dim: ds.obs_dim(),
        action_dim: ds.action_dim(),
        obs_mean: ds.obs_mean.clone(),
        obs_std: ds.obs_std.clone(),
        config: config
            .map(|c| serde_json::to_value(c))
            .transpose()
            .map_err(|e| CliError::Invalid(format!("config echo failed: {e}")))?,
    };
    let mut out = to_json_17(&meta)?;
    out.push('\n');
    for traj in &ds.trajectories {
        let row = TrajRow {
            obs: rows_of(&traj.observations),
            act: rows_of(traj.actions.as_array()),
            truth: traj.truth.iter().map(|z| z.as_slice().to_vec()).collect(),
        };
        out.push_str(&to_json_17(&row)?);
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(CliError::format(path.display(), "empty dataset file"));
    };
    let meta: DatasetMeta = serde_json::from_str(first)
        .map_err(|e| CliError::format(path.display(), format!("line 1: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(CliError::format(
            path.display(),
            format!("format_version {} not supported (expected {FORMAT_VERSION})", meta.format_version),
        ));
    }
    if meta.obs_mean.len() != meta.obs_dim || meta.obs_std.len() != meta.obs_dim {
        return Err(CliError::format(
            path.display(),
            "normalization stats do not match obs_dim",
        ));
    }

    let mut trajectories = Vec::with_capacity(meta.trajectories);
    for (lineno, line) in lines {
        let row: TrajRow = serde_json::from_str(line)
            .map_err(|e| CliError::format(path.display(), format!("line {}: {e}", lineno + 1)))?;
        let bad = |msg: String| CliError::format(path.display(), format!("line {}: {msg}", lineno + 1));
        if row.obs.len() != meta.horizon + 1 {
            return Err(bad(format!(
                "expected {} observation rows, found {}",
                meta.horizon + 1,
                row.obs.len()
            )));
        }
        if row.act.len() != meta.horizon {
            return Err(bad(format!(
                "expected {} action rows, found {}",
                meta.horizon,
                row.act.len()
            )));
        }
        let observations = array_of(&row.obs, meta.obs_dim, "obs").map_err(&bad)?;
        let act = array_of(&row.act, meta.action_dim, "act").map_err(&bad)?;
        let actions = ActionSequence::new(act, meta.dt).map_err(|e| bad(e.to_string()))?;
        let mut truth = Vec::with_capacity(row.truth.len());
        for state in row.truth {
            truth.push(FlatState::new(state).map_err(|e| bad(e.to_string()))?);
        }
        if truth.len() != meta.horizon + 1 {
            return Err(bad(format!(
                "expected {} truth rows, found {}",
                meta.horizon + 1,
                truth.len()
            )));
        }
        trajectories.push(ObsTrajectory {
            observations,
            actions,
            truth,
        });
    }
    if trajectories.len() != meta.trajectories {
        return Err(CliError::format(
            path.display(),
            format!(
                "metadata promises {} trajectories, file holds {}",
                meta.trajectories,
                trajectories.len()
            ),
        ));
    }
    // Stats come from the file, not a recomputation, so a read-back
    // dataset is bit-identical to what was written.
    Ok(Dataset {
        spec: meta.world,
        seed: meta.seed,
        dt: meta.dt,
        trajectories,
        obs_mean: meta.obs_mean,
        obs_std: meta.obs_std,
    })
}

// ---------------------------------------------------------------------------
// Checkpoint: one JSON document with named parameter blocks

#[derive(Debug, Serialize, Deserialize)]
struct ParamBlock {
    shape: Vec<usize>,
    /// Row-major entries; length is the product of `shape`.
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeedLineage {
    train: u64,
    dataset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct NormStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    kind: String,
    model: ModelConfig,
    train: TrainConfig,
    obs_dim: usize,
    action_dim: usize,
    norm_stats: NormStats,
    params: BTreeMap<String, ParamBlock>,
    seeds: SeedLineage,
    final_losses: Option<LossBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

fn model_norm_stats(model: &TrainedModel) -> (&[f64], &[f64]) {
    match model {
        TrainedModel::PortHamiltonian(m) => (&m.obs_mean, &m.obs_std),
        TrainedModel::Baseline(b) => (&b.obs_mean, &b.obs_std),
    }
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint, config: Option<&ResolvedConfig>) -> Result<()> {
    let kind = match ck.model.kind() {
        DynamicsKind::PortHamiltonian => "port_hamiltonian",
        DynamicsKind::Baseline => "baseline",
    };
    let (mean, std) = model_norm_stats(&ck.model);
    let layout = parameter_layout(&ck.model);
    let flat = parameters(&ck.model);
    let mut params = BTreeMap::new();
    let mut cursor = 0;
    for (name, shape) in &layout {
        let len: usize = shape.iter().product();
        params.insert(
            name.clone(),
            ParamBlock {
                shape: shape.clone(),
                values: flat[cursor..cursor + len].to_vec(),
            },
        );
        cursor += len;
    }
    debug_assert_eq!(cursor, flat.len());

    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        kind: kind.into(),
        model: ck.model.config().clone(),
        train: ck.train_config.clone(),
        obs_dim: mean.len(),
        action_dim: ck.model.action_dim(),
        norm_stats: NormStats {
            mean: mean.to_vec(),
            std: std.to_vec(),
        },
        params,
        seeds: SeedLineage {
            train: ck.train_seed,
            dataset: ck.dataset_seed,
        },
        final_losses: ck.final_losses,
        config: config
            .map(|c| serde_json::to_value(c))
            .transpose()
            .map_err(|e| CliError::Invalid(format!("config echo failed: {e}")))?,
    };
    let mut out = to_json_17(&file)?;
    out.push('\n');
    write_file(path, &out)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = read_file(path)?;
    let cf: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| CliError::format(path.display(), e.to_string()))?;
    if cf.format_version != FORMAT_VERSION {
        return Err(CliError::format(
            path.display(),
            format!("format_version {} not supported (expected {FORMAT_VERSION})", cf.format_version),
        ));
    }
    let kind = match cf.kind.as_str() {
        "port_hamiltonian" => DynamicsKind::PortHamiltonian,
        "baseline" => DynamicsKind::Baseline,
        other => {
            return Err(CliError::format(
                path.display(),
                format!("unknown model kind `{other}`"),
            ))
        }
    };
    cf.model
        .validate()
        .map_err(|e| CliError::format(path.display(), format!("model config: {e}")))?;

    // Rebuild the architecture exactly as training initialized it, then
    // overwrite every weight from the named blocks.
    let mut model = init_model(
        kind,
        &cf.model,
        cf.obs_dim,
        cf.action_dim,
        cf.norm_stats.mean.clone(),
        cf.norm_stats.std.clone(),
        cf.seeds.train,
    )?;
    let layout = parameter_layout(&model);
    if cf.params.len() != layout.len() {
        let known: Vec<&String> = layout.iter().map(|(n, _)| n).collect();
        let extras: Vec<&String> = cf
            .params
            .keys()
            .filter(|k| !known.contains(k))
            .collect();
        return Err(CliError::format(
            path.display(),
            format!(
                "expected {} parameter blocks, found {} (unexpected: {extras:?})",
                layout.len(),
                cf.params.len()
            ),
        ));
    }
    let mut theta = Vec::new();
    for (name, shape) in &layout {
        let Some(block) = cf.params.get(name) else {
            return Err(CliError::format(
                path.display(),
                format!("missing parameter block `{name}`"),
            ));
        };
        if &block.shape != shape {
            return Err(CliError::format(
                path.display(),
                format!(
                    "parameter block `{name}` has shape {:?}, expected {shape:?}",
                    block.shape
                ),
            ));
        }
        let len: usize = shape.iter().product();
        if block.values.len() != len {
            return Err(CliError::format(
                path.display(),
                format!(
                    "parameter block `{name}` has {} values, expected {len}",
                    block.values.len()
                ),
            ));
        }
        if !block.values.iter().all(|v| v.is_finite()) {
            return Err(CliError::format(
                path.display(),
                format!("non-finite value in parameter block `{name}`"),
            ));
        }
        theta.extend_from_slice(&block.values);
    }
    set_parameters(&mut model, &theta);

    Ok(Checkpoint {
        version: cf.format_version,
        model,
        train_config: cf.train,
        final_losses: cf.final_losses,
        train_seed: cf.seeds.train,
        dataset_seed: cf.seeds.dataset,
    })
}

// ---------------------------------------------------------------------------
// Series CSV

const DIVERGED: &str = "diverged";

fn csv_safe(label: &str) -> Result<()> {
    if label.contains(',') || label.contains('\n') || label.contains('"') {
        return Err(CliError::Invalid(format!(
            "label `{label}` cannot appear in a CSV header"
        )));
    }
    Ok(())
}

pub fn write_series_csv(path: &Path, s: &Series) -> Result<()> {
    csv_safe(&s.name)?;
    csv_safe(&s.x_label)?;
    csv_safe(&s.y_label)?;
    let mut out = format!("{},{},{}\n", s.name, s.x_label, s.y_label);
    for (x, y) in s.x.iter().zip(&s.y) {
        if y.is_finite() {
            out.push_str(&format!("{x:.16e},{y:.16e}\n"));
        } else {
            out.push_str(&format!("{x:.16e},{DIVERGED}\n"));
        }
    }
    write_file(path, &out)
}

pub fn read_series_csv(path: &Path) -> Result<Series> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return Err(CliError::format(path.display(), "empty CSV"));
    };
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 3 {
        return Err(CliError::format(
            path.display(),
            format!("header has {} fields, expected 3 (name, x label, y label)", fields.len()),
        ));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 2 {
            return Err(CliError::format(
                path.display(),
                format!("line {}: expected 2 cells, found {}", i + 2, cells.len()),
            ));
        }
        let xv: f64 = cells[0]
            .trim()
            .parse()
            .map_err(|e| CliError::format(path.display(), format!("line {}: {e}", i + 2)))?;
        let yv: f64 = if cells[1].trim() == DIVERGED {
            f64::INFINITY
        } else {
            cells[1]
                .trim()
                .parse()
                .map_err(|e| CliError::format(path.display(), format!("line {}: {e}", i + 2)))?
        };
        x.push(xv);
        y.push(yv);
    }
    Ok(Series {
        name: fields[0].to_string(),
        x_label: fields[1].to_string(),
        y_label: fields[2].to_string(),
        x,
        y,
    })
}

// ---------------------------------------------------------------------------
// Metrics report: summary JSON

fn num_or_diverged(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::Value::from(v)
    } else {
        serde_json::Value::String(DIVERGED.into())
    }
}

fn value_to_f64(v: &serde_json::Value, what: &str) -> std::result::Result<f64, String> {
    match v {
        serde_json::Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| format!("{what}: number out of f64 range")),
        serde_json::Value::String(s) if s == DIVERGED => Ok(f64::INFINITY),
        other => Err(format!("{what}: expected a number or \"{DIVERGED}\", found {other}")),
    }
}

pub fn report_to_json(report: &MetricsReport, config: Option<&ResolvedConfig>) -> Result<String> {
    report.validate()?;
    let mut scalars = serde_json::Map::new();
    for (k, v) in &report.scalars {
        scalars.insert(k.clone(), num_or_diverged(*v));
    }
    let series: Vec<serde_json::Value> = report
        .series
        .iter()
        .map(|s| {
            serde_json::json!({
                "name": s.name,
                "x_label": s.x_label,
                "y_label": s.y_label,
                "x": s.x,
                "y": s.y.iter().map(|v| num_or_diverged(*v)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut doc = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "scalars": scalars,
        "series": series,
        "provenance": {
            "checkpoints": report.provenance.checkpoints,
            "datasets": report.provenance.datasets,
            "seeds": report.provenance.seeds,
        },
    });
    if let Some(c) = config {
        doc["config"] = serde_json::to_value(c)
            .map_err(|e| CliError::Invalid(format!("config echo failed: {e}")))?;
    }
    let mut out = to_json_17(&doc)?;
    out.push('\n');
    Ok(out)
}

pub fn write_report(path: &Path, report: &MetricsReport, config: Option<&ResolvedConfig>) -> Result<()> {
    write_file(path, &report_to_json(report, config)?)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = read_file(path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::format(path.display(), e.to_string()))?;
    let bad = |msg: String| CliError::format(path.display(), msg);

    let mut scalars = BTreeMap::new();
    if let Some(obj) = doc.get("scalars").and_then(|v| v.as_object()) {
        for (k, v) in obj {
            scalars.insert(k.clone(), value_to_f64(v, &format!("scalars.{k}")).map_err(&bad)?);
        }
    }
    let mut series = Vec::new();
    if let Some(arr) = doc.get("series").and_then(|v| v.as_array()) {
        for (i, s) in arr.iter().enumerate() {
            let get_str = |key: &str| -> std::result::Result<String, String> {
                s.get(key)
                    .and_then(|v| v.as_str())
                    .map(str::to_string)
                    .ok_or_else(|| format!("series[{i}].{key}: missing or not a string"))
            };
            let xs = s
                .get("x")
                .and_then(|v| v.as_array())
                .ok_or_else(|| bad(format!("series[{i}].x: missing or not an array")))?;
            let ys = s
                .get("y")
                .and_then(|v| v.as_array())
                .ok_or_else(|| bad(format!("series[{i}].y: missing or not an array")))?;
            let x: Vec<f64> = xs
                .iter()
                .enumerate()
                .map(|(j, v)| value_to_f64(v, &format!("series[{i}].x[{j}]")))
                .collect::<std::result::Result<_, _>>()
                .map_err(&bad)?;
            let y: Vec<f64> = ys
                .iter()
                .enumerate()
                .map(|(j, v)| value_to_f64(v, &format!("series[{i}].y[{j}]")))
                .collect::<std::result::Result<_, _>>()
                .map_err(&bad)?;
            series.push(Series {
                name: get_str("name").map_err(&bad)?,
                x_label: get_str("x_label").map_err(&bad)?,
                y_label: get_str("y_label").map_err(&bad)?,
                x,
                y,
            });
        }
    }
    let prov = doc.get("provenance").cloned().unwrap_or_default();
    let provenance = Provenance {
        checkpoints: serde_json::from_value(prov.get("checkpoints").cloned().unwrap_or_default())
            .unwrap_or_default(),
        datasets: serde_json::from_value(prov.get("datasets").cloned().unwrap_or_default())
            .unwrap_or_default(),
        seeds: serde_json::from_value(prov.get("seeds").cloned().unwrap_or_default())
            .unwrap_or_default(),
    };
    let report = MetricsReport {
        scalars,
        series,
        provenance,
    };
    report
        .validate()
        .map_err(|e| CliError::format(path.display(), e.to_string()))?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Training log CSV

pub fn write_training_log(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut out = String::from("step,prediction,residual,latent,total\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.step, r.prediction, r.residual, r.latent, r.total
        ));
    }
    write_file(path, &out)
}

pub fn read_training_log(path: &Path) -> Result<Vec<LossRecord>> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("step,prediction,residual,latent,total") => {}
        _ => return Err(CliError::format(path.display(), "missing training-log header")),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(CliError::format(
                path.display(),
                format!("line {}: expected 5 cells", i + 2),
            ));
        }
        let parse = |j: usize| -> Result<f64> {
            cells[j]
                .trim()
                .parse()
                .map_err(|e| CliError::format(path.display(), format!("line {}: {e}", i + 2)))
        };
        records.push(LossRecord {
            step: cells[0]
                .trim()
                .parse()
                .map_err(|e| CliError::format(path.display(), format!("line {}: {e}", i + 2)))?,
            prediction: parse(1)?,
            residual: parse(2)?,
            latent: parse(3)?,
            total: parse(4)?,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Plan log: JSON lines

/// Utilities can legitimately be `−∞` (a candidate whose rollout failed
/// scores as bad as possible), so this field serializes non-finite values
/// as strings instead of letting JSON degrade them to `null`.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(ser)
        } else if *v == f64::INFINITY {
            "inf".serialize(ser)
        } else if *v == f64::NEG_INFINITY {
            "-inf".serialize(ser)
        } else {
            Err(serde::ser::Error::custom("NaN is never written"))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("unexpected value `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLogMeta {
    pub format_version: u32,
    pub world: WorldSpec,
    pub method: String,
    pub plan_horizon: usize,
    pub mpc_steps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// One closed-loop step: where the system truly was, what the planner
/// saw, what it executed, and how good it believed its plan to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLogRow {
    pub step: usize,
    pub state: Vec<f64>,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    #[serde(with = "lenient_f64")]
    pub best_utility: f64,
}

pub fn write_plan_log(path: &Path, meta: &PlanLogMeta, rows: &[PlanLogRow]) -> Result<()> {
    let mut out = to_json_17(meta)?;
    out.push('\n');
    for row in rows {
        out.push_str(&to_json_17(row)?);
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_plan_log(path: &Path) -> Result<(PlanLogMeta, Vec<PlanLogRow>)> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(CliError::format(path.display(), "empty plan log"));
    };
    let meta: PlanLogMeta = serde_json::from_str(first)
        .map_err(|e| CliError::format(path.display(), format!("line 1: {e}")))?;
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        rows.push(
            serde_json::from_str(line)
                .map_err(|e| CliError::format(path.display(), format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok((meta, rows))
}

// ---------------------------------------------------------------------------
// Rollout predictions: JSON lines

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionsMeta {
    pub format_version: u32,
    pub model_kind: String,
    pub dataset_seed: u64,
    pub dt: f64,
    /// Index of the first predicted row within the source trajectory.
    pub start_step: usize,
    pub steps: usize,
}

/// Open-loop predictions for one source trajectory, aligned with the
/// recorded observations over the same index range. A rollout that left
/// the finite range reports where, and its rows stop there.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionsRow {
    pub pred: Vec<Vec<f64>>,
    pub obs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged_at: Option<usize>,
}

pub fn write_predictions(path: &Path, meta: &PredictionsMeta, rows: &[PredictionsRow]) -> Result<()> {
    let mut out = to_json_17(meta)?;
    out.push('\n');
    for row in rows {
        out.push_str(&to_json_17(row)?);
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_predictions(path: &Path) -> Result<(PredictionsMeta, Vec<PredictionsRow>)> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(CliError::format(path.display(), "empty predictions file"));
    };
    let meta: PredictionsMeta = serde_json::from_str(first)
        .map_err(|e| CliError::format(path.display(), format!("line 1: {e}")))?;
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        rows.push(
            serde_json::from_str(line)
                .map_err(|e| CliError::format(path.display(), format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok((meta, rows))
}

// ---------------------------------------------------------------------------
// SVG line plots

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (0.01..10000.0).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// A minimal line plot: shared axes, one polyline per series, legend in
/// the corner. Non-finite points break the line rather than plotting.
pub fn write_svg(path: &Path, group: &[&Series], title: &str) -> Result<()> {
    let (w, h) = (640.0, 400.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 55.0);
    let (px0, px1) = (ml, w - mr);
    let (py0, py1) = (mt, h - mb);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in group {
        for (&x, &y) in s.x.iter().zip(&s.y) {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let span = |v: &[f64]| -> (f64, f64) {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (xlo, xhi) = span(&xs);
    let (ylo, yhi) = span(&ys);
    let sx = |x: f64| px0 + (x - xlo) / (xhi - xlo) * (px1 - px0);
    let sy = |y: f64| py1 - (y - ylo) / (yhi - ylo) * (py1 - py0);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n\
         <text x=\"{tx}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" fill=\"#222\">{title}</text>\n",
        tx = w / 2.0,
        title = xml_escape(title),
    );
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{px0}\" y1=\"{py1}\" x2=\"{px1}\" y2=\"{py1}\" stroke=\"#555\"/>\n\
         <line x1=\"{px0}\" y1=\"{py0}\" x2=\"{px0}\" y2=\"{py1}\" stroke=\"#555\"/>\n"
    ));
    // Extreme tick labels.
    svg.push_str(&format!(
        "<text x=\"{px0}\" y=\"{ty}\" text-anchor=\"middle\" fill=\"#555\">{}</text>\n\
         <text x=\"{px1}\" y=\"{ty}\" text-anchor=\"middle\" fill=\"#555\">{}</text>\n",
        fmt_tick(xlo),
        fmt_tick(xhi),
        ty = py1 + 18.0,
    ));
    svg.push_str(&format!(
        "<text x=\"{tx}\" y=\"{y1}\" text-anchor=\"end\" fill=\"#555\">{}</text>\n\
         <text x=\"{tx}\" y=\"{y0}\" text-anchor=\"end\" fill=\"#555\">{}</text>\n",
        fmt_tick(ylo),
        fmt_tick(yhi),
        tx = px0 - 6.0,
        y1 = py1 + 4.0,
        y0 = py0 + 4.0,
    ));
    // Axis titles from the first series.
    if let Some(first) = group.first() {
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{by}\" text-anchor=\"middle\" fill=\"#333\">{}</text>\n\
             <text x=\"18\" y=\"{cy}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {cy})\" fill=\"#333\">{}</text>\n",
            xml_escape(&first.x_label),
            xml_escape(&first.y_label),
            cx = (px0 + px1) / 2.0,
            by = h - 14.0,
            cy = (py0 + py1) / 2.0,
        ));
    }
    // Curves.
    for (i, s) in group.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut segment = String::new();
        let flush = |seg: &mut String, svg: &mut String| {
            if seg.matches(' ').count() >= 1 {
                svg.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                    seg.trim_end()
                ));
            }
            seg.clear();
        };
        for (&x, &y) in s.x.iter().zip(&s.y) {
            if x.is_finite() && y.is_finite() {
                segment.push_str(&format!("{:.2},{:.2} ", sx(x), sy(y)));
            } else {
                flush(&mut segment, &mut svg);
            }
        }
        flush(&mut segment, &mut svg);
        // Legend entry.
        let ly = py0 + 16.0 * i as f64 + 4.0;
        svg.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{ry}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n\
             <text x=\"{tx}\" y=\"{ly}\" fill=\"#333\">{}</text>\n",
            xml_escape(&s.name),
            lx = px1 - 170.0,
            ry = ly - 4.0,
            tx = px1 - 152.0,
        ));
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// ---------------------------------------------------------------------------
// Manifest

/// What a run did: the files it read (with their digests), the hash of
/// the resolved configuration, and the artifacts it produced. Two runs
/// with identical inputs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub command: String,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of the canonical resolved-configuration document.
    pub config_sha256: String,
    /// Files this run wrote into the output directory, sorted.
    pub artifacts: Vec<String>,
    pub seed: u64,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let mut m = manifest.clone();
    m.artifacts.sort();
    let path = dir.join("manifest.json");
    let mut out = to_json_17(&m)?;
    out.push('\n');
    write_file(&path, &out)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path.display(), e.to_string()))
}
