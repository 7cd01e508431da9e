//! JSON experiment configuration: schema, loading, presets and conversion
//! into library types. Matrices are arrays of rows.

use std::path::{Path, PathBuf};

use pareto_filter::closedloop::{vehicle_preset, PlantWithInput, TradeoffMode};
use pareto_filter::filterdesign::SystemModel;
use pareto_filter::matops::{spectral_radius, Matrix, Vector};
use pareto_filter::montecarlo::{MixtureComponent, NoiseModel};
use pareto_filter::presets::{example1, vehicle};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Tradeoff,
    Design,
    Simulate,
    Sweep,
    ClosedloopTradeoff,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Tradeoff => "tradeoff",
            Experiment::Design => "design",
            Experiment::Simulate => "simulate",
            Experiment::Sweep => "sweep",
            Experiment::ClosedloopTradeoff => "closedloop-tradeoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub system: SystemBlock,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

/// Plant matrices. `B` is needed only by the closed-loop experiments;
/// `Sigma0` defaults to `Q` and `Ts` to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(rename = "Sigma0", default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<Rows>,
    #[serde(rename = "Ts", default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Closed-loop mode or `all`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(rename = "Wx", default, skip_serializing_if = "Option::is_none")]
    pub wx: Option<Rows>,
    #[serde(rename = "Wu", default, skip_serializing_if = "Option::is_none")]
    pub wu: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_robust: Option<f64>,
    #[serde(rename = "R_adverse", default, skip_serializing_if = "Option::is_none")]
    pub r_adverse: Option<Rows>,
    /// Measurement-noise variance multipliers for the tracking comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    /// `demo-course` or `none`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adverse: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Mixture,
    Empirical,
}

/// `gaussian` takes `cov`, `mixture` takes `components`, `empirical` takes
/// `path` (a headerless CSV, one sample per row, relative to the config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<ComponentSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Rows,
}

/// A loaded config plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = if path.is_empty() || path == "." {
            inner.to_string()
        } else {
            format!("{path}: {inner}")
        };
        // well-formed JSON that does not fit the schema is a validation error
        if serde_json::from_str::<serde_json::Value>(text).is_ok() {
            CliError::validation(message)
        } else {
            CliError::parse(message)
        }
    })
}

pub fn load_config(path: &Path) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read config {}: {e}", path.display())))?;
    let config = parse_config(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base_dir })
}

/// Indented JSON with arrays of numbers kept on one line.
pub fn to_json(config: &ExperimentConfig) -> String {
    fn scalar_array(v: &serde_json::Value) -> bool {
        match v {
            serde_json::Value::Array(items) => {
                items.iter().all(|x| x.is_number() || scalar_array(x))
            }
            _ => false,
        }
    }
    fn write(v: &serde_json::Value, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent + 1);
        match v {
            serde_json::Value::Object(map) if !map.is_empty() => {
                out.push_str("{\n");
                for (i, (k, x)) in map.iter().enumerate() {
                    out.push_str(&format!("{pad}{}: ", serde_json::Value::String(k.clone())));
                    write(x, indent + 1, out);
                    out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
                }
                out.push_str(&"  ".repeat(indent));
                out.push('}');
            }
            serde_json::Value::Array(items) if !items.is_empty() && !scalar_array(v) => {
                out.push_str("[\n");
                for (i, x) in items.iter().enumerate() {
                    out.push_str(&pad);
                    write(x, indent + 1, out);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let value = serde_json::to_value(config).expect("config serializes");
    let mut out = String::new();
    write(&value, 0, &mut out);
    out
}

fn rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn mixture_spec(model: &NoiseModel) -> NoiseSpec {
    let components = model
        .components()
        .expect("mixture model")
        .iter()
        .map(|c| ComponentSpec {
            weight: c.weight,
            mean: c.mean.iter().copied().collect(),
            cov: rows(&c.covariance),
        })
        .collect();
    NoiseSpec {
        kind: NoiseKind::Mixture,
        cov: None,
        components: Some(components),
        path: None,
    }
}

pub const PRESETS: [&str; 2] = ["example1", "vehicle"];

/// Built-in parameter sets. The vehicle preset carries the closed-loop
/// weights, the robust multiplier, the adverse covariance, two-cluster
/// mixture noise models and the tracking scale grid.
pub fn preset(name: &str, experiment: Experiment) -> CliResult<ExperimentConfig> {
    match name {
        "example1" => {
            let sys = example1();
            Ok(ExperimentConfig {
                experiment,
                system: SystemBlock {
                    a: rows(sys.a()),
                    b: None,
                    c: rows(sys.c()),
                    q: rows(sys.q()),
                    r: rows(sys.r()),
                    sigma0: Some(rows(sys.sigma0())),
                    ts: None,
                },
                parameters: Parameters::default(),
                output_path: None,
            })
        }
        "vehicle" => {
            let plant = vehicle_preset(vehicle::SAMPLING_TIME)?;
            let r_adverse = vehicle::adverse_measurement_covariance();
            let nominal = NoiseModel::moment_matched_mixture(plant.r(), 1.0)?;
            let adverse = NoiseModel::moment_matched_mixture(&r_adverse, 1.35)?;
            let scales = (0..10).map(|i| 1.0 + 24.0 * i as f64 / 9.0).collect();
            Ok(ExperimentConfig {
                experiment,
                system: SystemBlock {
                    a: rows(plant.a()),
                    b: Some(rows(plant.b())),
                    c: rows(plant.c()),
                    q: rows(plant.q()),
                    r: rows(plant.r()),
                    sigma0: Some(rows(plant.sigma0())),
                    ts: Some(plant.ts()),
                },
                parameters: Parameters {
                    wx: Some(rows(&vehicle::state_weight())),
                    wu: Some(rows(&vehicle::input_weight())),
                    lambda_robust: Some(vehicle::LAMBDA_ROBUST),
                    r_adverse: Some(rows(&r_adverse)),
                    noise: Some(NoiseBlock {
                        nominal: Some(mixture_spec(&nominal)),
                        adverse: Some(mixture_spec(&adverse)),
                    }),
                    scales: Some(scales),
                    reference: Some("demo-course".into()),
                    ..Parameters::default()
                },
                output_path: None,
            })
        }
        other => Err(CliError::validation(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}

/// Convert an array of rows, checking that it is rectangular, nonempty and
/// finite.
pub fn matrix(path: &str, data: &Rows) -> CliResult<Matrix> {
    let Some(first) = data.first() else {
        return Err(CliError::validation(format!("{path}: matrix has no rows")));
    };
    let cols = first.len();
    if cols == 0 {
        return Err(CliError::validation(format!("{path}[0]: row is empty")));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != cols {
            return Err(CliError::validation(format!(
                "{path}[{i}]: row has {} entries, expected {cols}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(CliError::validation(format!(
                "{path}[{i}][{j}]: entry is not finite"
            )));
        }
    }
    Ok(Matrix::from_fn(data.len(), cols, |i, j| data[i][j]))
}

pub fn shaped(path: &str, data: &Rows, rows: usize, cols: usize) -> CliResult<Matrix> {
    let m = matrix(path, data)?;
    if m.shape() != (rows, cols) {
        return Err(CliError::validation(format!(
            "{path}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

struct Dense {
    a: Matrix,
    c: Matrix,
    q: Matrix,
    r: Matrix,
    sigma0: Matrix,
}

fn dense(block: &SystemBlock) -> CliResult<Dense> {
    let a = matrix("system.A", &block.a)?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CliError::validation(format!(
            "system.A: must be square, got {n}x{}",
            a.ncols()
        )));
    }
    let c = matrix("system.C", &block.c)?;
    if c.ncols() != n {
        return Err(CliError::validation(format!(
            "system.C: expected {n} columns (one per state), got {}",
            c.ncols()
        )));
    }
    let m = c.nrows();
    let q = shaped("system.Q", &block.q, n, n)?;
    let r = shaped("system.R", &block.r, m, m)?;
    let sigma0 = match &block.sigma0 {
        Some(s) => shaped("system.Sigma0", s, n, n)?,
        None => q.clone(),
    };
    Ok(Dense { a, c, q, r, sigma0 })
}

/// Estimation model. Open-loop unstable dynamics are accepted when
/// detectable.
pub fn system_model(block: &SystemBlock) -> CliResult<SystemModel> {
    let d = dense(block)?;
    let model = if spectral_radius(&d.a)? < 1.0 {
        SystemModel::new(d.a, d.c, d.q, d.r, d.sigma0)?
    } else {
        SystemModel::with_unstable_dynamics(d.a, d.c, d.q, d.r, d.sigma0)?
    };
    Ok(model)
}

pub fn plant(block: &SystemBlock) -> CliResult<PlantWithInput> {
    let b = block
        .b
        .as_ref()
        .ok_or_else(|| CliError::validation("system.B: required by closed-loop experiments"))?;
    let d = dense(block)?;
    let b = matrix("system.B", b)?;
    if b.nrows() != d.a.nrows() {
        return Err(CliError::validation(format!(
            "system.B: expected {} rows (one per state), got {}",
            d.a.nrows(),
            b.nrows()
        )));
    }
    let ts = block.ts.unwrap_or(1.0);
    Ok(PlantWithInput::new(d.a, b, d.c, d.q, d.r, d.sigma0, ts)?)
}

pub fn weights(params: &Parameters, plant: &PlantWithInput) -> CliResult<(Matrix, Matrix)> {
    let n = plant.state_dim();
    let p = plant.input_dim();
    let wx = params
        .wx
        .as_ref()
        .ok_or_else(|| CliError::validation("parameters.Wx: required"))?;
    let wu = params
        .wu
        .as_ref()
        .ok_or_else(|| CliError::validation("parameters.Wu: required"))?;
    Ok((
        shaped("parameters.Wx", wx, n, n)?,
        shaped("parameters.Wu", wu, p, p)?,
    ))
}

/// `None` selects every mode.
pub fn modes(params: &Parameters) -> CliResult<Vec<TradeoffMode>> {
    match params.mode.as_deref() {
        None | Some("all") => Ok(TradeoffMode::ALL.to_vec()),
        Some(s) => s
            .parse::<TradeoffMode>()
            .map(|m| vec![m])
            .map_err(|_| CliError::validation(format!(
                "parameters.mode: unknown mode {s:?}; expected all, optimize-both, fix-L-lqr or fix-K-kalman"
            ))),
    }
}

fn read_table(path: &Path, field: &str) -> CliResult<Vec<Vector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| {
            CliError::validation(format!("{field}: cannot read {}: {e}", path.display()))
        })?;
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| CliError::validation(format!("{field}: {}: {e}", path.display())))?;
        let values = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| {
                CliError::validation(format!("{field}: {} row {i}: {e}", path.display()))
            })?;
        samples.push(Vector::from_vec(values));
    }
    Ok(samples)
}

pub fn noise_model(
    field: &str,
    spec: &NoiseSpec,
    dim: usize,
    base_dir: &Path,
) -> CliResult<NoiseModel> {
    let unexpected = |name: &str, present: bool| -> CliResult<()> {
        if present {
            Err(CliError::validation(format!(
                "{field}.{name}: not allowed for kind {:?}",
                spec.kind
            )))
        } else {
            Ok(())
        }
    };
    let model = match spec.kind {
        NoiseKind::Gaussian => {
            unexpected("components", spec.components.is_some())?;
            unexpected("path", spec.path.is_some())?;
            let cov = spec
                .cov
                .as_ref()
                .ok_or_else(|| CliError::validation(format!("{field}.cov: required")))?;
            NoiseModel::gaussian(shaped(&format!("{field}.cov"), cov, dim, dim)?)?
        }
        NoiseKind::Mixture => {
            unexpected("cov", spec.cov.is_some())?;
            unexpected("path", spec.path.is_some())?;
            let comps = spec
                .components
                .as_ref()
                .ok_or_else(|| CliError::validation(format!("{field}.components: required")))?;
            let mut parsed = Vec::with_capacity(comps.len());
            for (i, c) in comps.iter().enumerate() {
                let at = format!("{field}.components[{i}]");
                if c.mean.len() != dim {
                    return Err(CliError::validation(format!(
                        "{at}.mean: expected {dim} entries, got {}",
                        c.mean.len()
                    )));
                }
                parsed.push(MixtureComponent {
                    weight: c.weight,
                    mean: Vector::from_column_slice(&c.mean),
                    covariance: shaped(&format!("{at}.cov"), &c.cov, dim, dim)?,
                });
            }
            NoiseModel::mixture(parsed)
                .map_err(|e| CliError::validation(format!("{field}: {e}")))?
        }
        NoiseKind::Empirical => {
            unexpected("cov", spec.cov.is_some())?;
            unexpected("components", spec.components.is_some())?;
            let rel = spec
                .path
                .as_ref()
                .ok_or_else(|| CliError::validation(format!("{field}.path: required")))?;
            let samples = read_table(&base_dir.join(rel), &format!("{field}.path"))?;
            let model = NoiseModel::empirical(samples)
                .map_err(|e| CliError::validation(format!("{field}: {e}")))?;
            if model.dim() != dim {
                return Err(CliError::validation(format!(
                    "{field}: samples have {} entries, expected {dim}",
                    model.dim()
                )));
            }
            model
        }
    };
    Ok(model)
}
