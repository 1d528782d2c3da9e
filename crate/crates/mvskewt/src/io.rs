//! Serialization of datasets, parameters, fit results, and simulation
//! summaries. Everything is JSON (plus a CSV view of the summary table):
//! desk-scale data stays human-inspectable, matrices are row-major flat
//! arrays, and floats round-trip bit-exactly through the shortest-decimal
//! encodings both serde_json and Display produce.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ecm::FitResult;
use crate::mvst::{Dataset, MvstParams};
use crate::util::cholesky_spd;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid parameters: {0}")]
    Validation(#[from] crate::Error),
}

pub type FormatResult<T> = std::result::Result<T, FormatError>;

fn read_to_string(path: &Path) -> FormatResult<String> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(path: &Path, contents: &str) -> FormatResult<()> {
    fs::write(path, contents).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str, path: &Path) -> FormatResult<T> {
    serde_json::from_str(text).map_err(|source| FormatError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    out.push('\n');
    out
}

/// Row-major flattening of a matrix.
fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn check_finite(values: &[f64], what: &str) -> FormatResult<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite(format!(
            "{what} contains a non-finite value"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset: {"n": int, "p": int, "N": int, "data": [[row-major reals], ...]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    n: usize,
    p: usize,
    #[serde(rename = "N")]
    count: usize,
    data: Vec<Vec<f64>>,
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> FormatResult<()> {
    let (n, p) = dataset.dims();
    let doc = DatasetJson {
        n,
        p,
        count: dataset.len(),
        data: dataset.observations().iter().map(to_row_major).collect(),
    };
    write_string(path, &to_json_pretty(&doc))
}

pub fn read_dataset(path: &Path) -> FormatResult<Dataset> {
    let text = read_to_string(path)?;
    let doc: DatasetJson = parse_json(&text, path)?;
    if doc.n == 0 || doc.p == 0 {
        return Err(FormatError::Schema("dimensions must be positive".into()));
    }
    if doc.data.is_empty() {
        return Err(FormatError::Schema("empty observation list".into()));
    }
    if doc.data.len() != doc.count {
        return Err(FormatError::Schema(format!(
            "N = {} but {} observations present",
            doc.count,
            doc.data.len()
        )));
    }
    let mut observations = Vec::with_capacity(doc.data.len());
    for (i, row) in doc.data.iter().enumerate() {
        if row.len() != doc.n * doc.p {
            return Err(FormatError::Dimension(format!(
                "observation {i} has {} entries, expected {}",
                row.len(),
                doc.n * doc.p
            )));
        }
        check_finite(row, &format!("observation {i}"))?;
        observations.push(DMatrix::from_row_slice(doc.n, doc.p, row));
    }
    Dataset::new((doc.n, doc.p), observations).map_err(FormatError::from)
}

// ---------------------------------------------------------------------------
// Parameters: {"M": [...], "A": [...], "Sigma": [...], "Psi": [...], "nu": x}
// Dimensions are recovered from the scale matrix lengths.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    #[serde(rename = "M")]
    location: Vec<f64>,
    #[serde(rename = "A")]
    skewness: Vec<f64>,
    #[serde(rename = "Sigma")]
    row_scale: Vec<f64>,
    #[serde(rename = "Psi")]
    col_scale: Vec<f64>,
    nu: f64,
}

pub fn write_params(path: &Path, params: &MvstParams) -> FormatResult<()> {
    write_string(path, &params_to_json_string(params))
}

pub(crate) fn params_to_json_string(params: &MvstParams) -> String {
    to_json_pretty(&ParamsJson {
        location: to_row_major(&params.location),
        skewness: to_row_major(&params.skewness),
        row_scale: to_row_major(&params.row_scale),
        col_scale: to_row_major(&params.col_scale),
        nu: params.dof,
    })
}

fn params_from_json(doc: &ParamsJson) -> FormatResult<MvstParams> {
    let n = (doc.row_scale.len() as f64).sqrt().round() as usize;
    let p = (doc.col_scale.len() as f64).sqrt().round() as usize;
    if n * n != doc.row_scale.len() || n == 0 {
        return Err(FormatError::Schema(format!(
            "Sigma has {} entries, not a positive square",
            doc.row_scale.len()
        )));
    }
    if p * p != doc.col_scale.len() || p == 0 {
        return Err(FormatError::Schema(format!(
            "Psi has {} entries, not a positive square",
            doc.col_scale.len()
        )));
    }
    if doc.location.len() != n * p {
        return Err(FormatError::Dimension(format!(
            "M has {} entries, expected {}",
            doc.location.len(),
            n * p
        )));
    }
    if doc.skewness.len() != n * p {
        return Err(FormatError::Dimension(format!(
            "A has {} entries, expected {}",
            doc.skewness.len(),
            n * p
        )));
    }
    for (name, values) in [
        ("M", &doc.location),
        ("A", &doc.skewness),
        ("Sigma", &doc.row_scale),
        ("Psi", &doc.col_scale),
    ] {
        check_finite(values, name)?;
    }
    if !doc.nu.is_finite() {
        return Err(FormatError::NonFinite("nu".into()));
    }
    let params = MvstParams::new(
        DMatrix::from_row_slice(n, p, &doc.location),
        DMatrix::from_row_slice(n, p, &doc.skewness),
        DMatrix::from_row_slice(n, n, &doc.row_scale),
        DMatrix::from_row_slice(p, p, &doc.col_scale),
        doc.nu,
    )?;
    // SPD check up front so a bad file fails at read time, not mid-fit.
    cholesky_spd(&params.row_scale, "Sigma")?;
    cholesky_spd(&params.col_scale, "Psi")?;
    Ok(params)
}

pub fn read_params(path: &Path) -> FormatResult<MvstParams> {
    let text = read_to_string(path)?;
    let doc: ParamsJson = parse_json(&text, path)?;
    params_from_json(&doc)
}

// ---------------------------------------------------------------------------
// Simulation config
// ---------------------------------------------------------------------------

/// Configuration of one replicated simulation study.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: MvstParams,
    pub observations_per_dataset: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub output_dir: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SimConfigJson {
    params: ParamsJson,
    #[serde(rename = "N")]
    observations_per_dataset: usize,
    replicates: usize,
    base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<String>,
}

pub fn read_sim_config(path: &Path) -> FormatResult<SimConfig> {
    let text = read_to_string(path)?;
    let doc: SimConfigJson = parse_json(&text, path)?;
    if doc.replicates < 1 {
        return Err(FormatError::Schema("replicates must be >= 1".into()));
    }
    if doc.observations_per_dataset < 2 {
        return Err(FormatError::Schema("N must be >= 2".into()));
    }
    Ok(SimConfig {
        params: params_from_json(&doc.params)?,
        observations_per_dataset: doc.observations_per_dataset,
        replicates: doc.replicates,
        base_seed: doc.base_seed,
        output_dir: doc.output_dir,
    })
}

pub fn write_sim_config(path: &Path, config: &SimConfig) -> FormatResult<()> {
    let doc = SimConfigJson {
        params: ParamsJson {
            location: to_row_major(&config.params.location),
            skewness: to_row_major(&config.params.skewness),
            row_scale: to_row_major(&config.params.row_scale),
            col_scale: to_row_major(&config.params.col_scale),
            nu: config.params.dof,
        },
        observations_per_dataset: config.observations_per_dataset,
        replicates: config.replicates,
        base_seed: config.base_seed,
        output_dir: config.output_dir.clone(),
    };
    write_string(path, &to_json_pretty(&doc))
}

// ---------------------------------------------------------------------------
// Fit configuration (all fields optional; defaults from FitConfig::default)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Default)]
struct FitConfigJson {
    max_iterations: Option<usize>,
    epsilon: Option<f64>,
    nu_low: Option<f64>,
    nu_high: Option<f64>,
    seed: Option<u64>,
    /// Optional explicit starting parameters; moment initialization otherwise.
    init_params: Option<ParamsJson>,
}

pub fn read_fit_config(path: &Path) -> FormatResult<crate::ecm::FitConfig> {
    let text = read_to_string(path)?;
    let doc: FitConfigJson = parse_json(&text, path)?;
    let defaults = crate::ecm::FitConfig::default();
    let init = match &doc.init_params {
        Some(p) => crate::ecm::InitStrategy::Provided(params_from_json(p)?),
        None => crate::ecm::InitStrategy::Moment,
    };
    Ok(crate::ecm::FitConfig {
        max_iterations: doc.max_iterations.unwrap_or(defaults.max_iterations),
        epsilon: doc.epsilon.unwrap_or(defaults.epsilon),
        nu_bounds: (
            doc.nu_low.unwrap_or(defaults.nu_bounds.0),
            doc.nu_high.unwrap_or(defaults.nu_bounds.1),
        ),
        seed: doc.seed.unwrap_or(defaults.seed),
        init,
    })
}

// ---------------------------------------------------------------------------
// Fit result
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FitResultJson {
    params: ParamsJson,
    loglik_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    aitken_history: Vec<f64>,
}

pub fn write_fit_result(path: &Path, result: &FitResult) -> FormatResult<()> {
    let doc = FitResultJson {
        params: ParamsJson {
            location: to_row_major(&result.params.location),
            skewness: to_row_major(&result.params.skewness),
            row_scale: to_row_major(&result.params.row_scale),
            col_scale: to_row_major(&result.params.col_scale),
            nu: result.params.dof,
        },
        loglik_trace: result.loglik_trace.clone(),
        iterations: result.iterations,
        converged: result.converged,
        aitken_history: result.aitken_history.clone(),
    };
    write_string(path, &to_json_pretty(&doc))
}

pub fn read_fit_result(path: &Path) -> FormatResult<FitResult> {
    let text = read_to_string(path)?;
    let doc: FitResultJson = parse_json(&text, path)?;
    Ok(FitResult {
        params: params_from_json(&doc.params)?,
        loglik_trace: doc.loglik_trace,
        iterations: doc.iterations,
        converged: doc.converged,
        aitken_history: doc.aitken_history,
    })
}

// ---------------------------------------------------------------------------
// Summary table
// ---------------------------------------------------------------------------

/// Component-wise means and standard deviations of the estimated parameters
/// over replicates, including the identifiability-free Kronecker product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    pub location_mean: Vec<f64>,
    pub location_sd: Vec<f64>,
    pub skewness_mean: Vec<f64>,
    pub skewness_sd: Vec<f64>,
    pub row_scale_mean: Vec<f64>,
    pub row_scale_sd: Vec<f64>,
    pub col_scale_mean: Vec<f64>,
    pub col_scale_sd: Vec<f64>,
    pub kronecker_mean: Vec<f64>,
    pub kronecker_sd: Vec<f64>,
    pub nu_mean: f64,
    pub nu_sd: f64,
    pub nu_estimates: Vec<f64>,
}

fn mean_sd_componentwise(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let r = samples.len();
    let k = samples[0].len();
    let mut mean = vec![0.0; k];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= r as f64;
    }
    let mut sd = vec![0.0; k];
    if r > 1 {
        for s in samples {
            for ((d, v), m) in sd.iter_mut().zip(s).zip(&mean) {
                *d += (v - m) * (v - m);
            }
        }
        for d in &mut sd {
            *d = (*d / (r - 1) as f64).sqrt();
        }
    }
    (mean, sd)
}

impl SummaryTable {
    /// Aggregates a set of (already scale-normalized) per-replicate estimates.
    pub fn from_estimates(estimates: &[MvstParams]) -> FormatResult<Self> {
        let first = estimates
            .first()
            .ok_or_else(|| FormatError::Schema("no successful replicates to summarize".into()))?;
        let (n, p) = first.dims();
        let collect = |f: &dyn Fn(&MvstParams) -> Vec<f64>| -> Vec<Vec<f64>> {
            estimates.iter().map(f).collect()
        };
        let (location_mean, location_sd) =
            mean_sd_componentwise(&collect(&|e| to_row_major(&e.location)));
        let (skewness_mean, skewness_sd) =
            mean_sd_componentwise(&collect(&|e| to_row_major(&e.skewness)));
        let (row_scale_mean, row_scale_sd) =
            mean_sd_componentwise(&collect(&|e| to_row_major(&e.row_scale)));
        let (col_scale_mean, col_scale_sd) =
            mean_sd_componentwise(&collect(&|e| to_row_major(&e.col_scale)));
        let (kronecker_mean, kronecker_sd) = mean_sd_componentwise(&collect(&|e| {
            to_row_major(&e.col_scale.kronecker(&e.row_scale))
        }));
        let nu_estimates: Vec<f64> = estimates.iter().map(|e| e.dof).collect();
        let (nu_mean_v, nu_sd_v) =
            mean_sd_componentwise(&nu_estimates.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        Ok(Self {
            n,
            p,
            replicates: estimates.len(),
            location_mean,
            location_sd,
            skewness_mean,
            skewness_sd,
            row_scale_mean,
            row_scale_sd,
            col_scale_mean,
            col_scale_sd,
            kronecker_mean,
            kronecker_sd,
            nu_mean: nu_mean_v[0],
            nu_sd: nu_sd_v[0],
            nu_estimates,
        })
    }
}

pub fn write_summary_json(path: &Path, table: &SummaryTable) -> FormatResult<()> {
    write_string(path, &to_json_pretty(table))
}

pub fn read_summary_json(path: &Path) -> FormatResult<SummaryTable> {
    let text = read_to_string(path)?;
    parse_json(&text, path)
}

/// CSV view: one row per parameter component, columns
/// (parameter, row, col, mean, sd). The Kronecker product appears under the
/// parameter name "PsiKronSigma"; nu is a single (0, 0) row.
pub fn summary_to_csv(table: &SummaryTable) -> String {
    let mut out = String::from("parameter,row,col,mean,sd\n");
    let mut block = |name: &str, rows: usize, cols: usize, mean: &[f64], sd: &[f64]| {
        for r in 0..rows {
            for c in 0..cols {
                let k = r * cols + c;
                out.push_str(&format!("{name},{r},{c},{},{}\n", mean[k], sd[k]));
            }
        }
    };
    block("M", table.n, table.p, &table.location_mean, &table.location_sd);
    block("A", table.n, table.p, &table.skewness_mean, &table.skewness_sd);
    block(
        "Sigma",
        table.n,
        table.n,
        &table.row_scale_mean,
        &table.row_scale_sd,
    );
    block(
        "Psi",
        table.p,
        table.p,
        &table.col_scale_mean,
        &table.col_scale_sd,
    );
    let np = table.n * table.p;
    block(
        "PsiKronSigma",
        np,
        np,
        &table.kronecker_mean,
        &table.kronecker_sd,
    );
    block("nu", 1, 1, &[table.nu_mean], &[table.nu_sd]);
    out
}

pub fn write_summary_csv(path: &Path, table: &SummaryTable) -> FormatResult<()> {
    write_string(path, &summary_to_csv(table))
}
