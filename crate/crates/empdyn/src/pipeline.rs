//! The subcommands. Each stage reads its inputs from files, writes its
//! outputs into the output directory, and returns the warnings it recorded.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use empdyn_core::dataset::{make_grid, EvalGrid, Interval, SparseDataset};
use empdyn_core::diagnostics::{Diagnostics, Warning};
use empdyn_core::dynamics::{
    DynamicsEstimate, FloorCounts, IdentityCheck, Subdomain, DEFAULT_FLOOR_FRAC,
};
use empdyn_core::eigenbasis::{decompose_moments, EigenSystem};
use empdyn_core::pace::{
    drift_score_extremes, drift_scores, fit_subject, ComponentExtremes, PaceOptions, SubjectFit,
};
use empdyn_core::simulate::{sample_dataset, TruthRecord, TruthSpec};
use empdyn_core::smoothing::{estimate_moments, select_bandwidths, MomentEstimates, SmoothConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Bandwidths, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, Meta};

pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const MOMENTS_FILE: &str = "moments.csv";
pub const COV_FILE: &str = "G.csv";
pub const DCOV_FILE: &str = "dG.csv";
pub const EIGEN_FILE: &str = "eigensystem.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DYNAMICS_FILE: &str = "dynamics.csv";
pub const GZ_FILE: &str = "gz.csv";
pub const DRIFT_EIGEN_FILE: &str = "drift_eig.csv";
pub const SUBDOMAINS_FILE: &str = "subdomains.json";
pub const SUBJECTS_DIR: &str = "subjects";
pub const SCORES_FILE: &str = "scores.json";
pub const EXTREMES_FILE: &str = "extremes.json";
pub const REPORT_FILE: &str = "report.json";

fn meta(cfg: &RunConfig) -> Meta {
    Meta::new(cfg.hash(), cfg.seed)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub meta: Meta,
    pub truth: TruthRecord,
}

/// Samples `cfg.n` subjects from the truth specification at `cfg.spec`.
/// The run seed replaces the seed stored in the specification.
pub fn simulate(cfg: &RunConfig) -> CliResult<Diagnostics> {
    cfg.validate()?;
    let spec_path = cfg
        .spec
        .as_deref()
        .ok_or_else(|| CliError::Config("simulate needs --spec".into()))?;
    let n = cfg
        .n
        .ok_or_else(|| CliError::Config("simulate needs --n".into()))?;
    let mut spec: TruthSpec = io::read_json(spec_path)?;
    spec.seed = cfg.seed;
    spec.validate()
        .map_err(|e| CliError::parse(spec_path, e.to_string()))?;
    let (data, truth) = sample_dataset(&spec, n).map_err(CliError::stage("simulate"))?;
    ensure_dir(&cfg.output_dir)?;
    let meta = meta(cfg);
    io::write_dataset(&out_path(cfg, DATA_FILE), &meta, &data)?;
    io::write_json(&out_path(cfg, TRUTH_FILE), &TruthFile { meta, truth })?;
    Ok(Diagnostics::new())
}

/// Reads `cfg.input`, applying the domain restriction and log transform.
pub fn load_input(cfg: &RunConfig, diag: &mut Diagnostics) -> CliResult<SparseDataset> {
    let path = cfg
        .input
        .as_deref()
        .ok_or_else(|| CliError::Config("missing --input".into()))?;
    let (data, dropped) = io::load_csv(path, cfg.domain_override())?;
    if dropped > 0 {
        diag.push(Warning::RowsDropped { count: dropped });
    }
    if !cfg.log_values {
        return Ok(data);
    }
    data.map_values(f64::ln)
        .map_err(|e| CliError::parse(path, format!("log transform: {e}")))
}

/// Smoothed moments and their truncated eigensystem.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub smoothing: SmoothConfig,
    pub moments: MomentEstimates,
    pub eig: EigenSystem,
}

pub fn smoothing_config(
    data: &SparseDataset,
    grid: &EvalGrid,
    cfg: &RunConfig,
    diag: &mut Diagnostics,
) -> SmoothConfig {
    match cfg.bandwidths {
        Bandwidths::Auto => select_bandwidths(data, grid, cfg.kernel, diag),
        Bandwidths::Fixed([h0, h1, g0, g1]) => {
            SmoothConfig::fixed(h0, h1, g0, g1).with_kernel(cfg.kernel)
        }
    }
}

/// The population-level estimation behind `fit`, without any file IO.
pub fn fit_dataset(
    data: &SparseDataset,
    cfg: &RunConfig,
    diag: &mut Diagnostics,
) -> CliResult<FitResult> {
    let grid = make_grid(data.domain(), cfg.grid_size).map_err(CliError::stage("grid"))?;
    let smoothing = smoothing_config(data, &grid, cfg, diag);
    let moments =
        estimate_moments(data, &grid, &smoothing, diag).map_err(CliError::stage("smoothing"))?;
    let eig = decompose_moments(&moments, cfg.truncation()?, diag)
        .map_err(CliError::stage("eigenbasis"))?;
    Ok(FitResult {
        smoothing,
        moments,
        eig,
    })
}

/// The dynamics estimate behind `dynamics`, without any file IO.
pub fn dynamics_of(
    eig: &EigenSystem,
    cfg: &RunConfig,
    diag: &mut Diagnostics,
) -> CliResult<DynamicsEstimate> {
    DynamicsEstimate::estimate(eig, DEFAULT_FLOOR_FRAC, cfg.truncation()?, diag)
        .map_err(CliError::stage("dynamics"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub meta: Meta,
    pub config: RunConfig,
    pub subjects: usize,
    pub observations: usize,
    pub dropped_rows: usize,
    pub domain: Interval,
    pub grid_size: usize,
    pub bandwidths: SmoothConfig,
    pub sigma2: f64,
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub fve: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub spacings: Vec<f64>,
    pub trace: f64,
    pub warnings: Diagnostics,
}

fn numbered(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

pub fn fit(cfg: &RunConfig) -> CliResult<Diagnostics> {
    cfg.validate()?;
    let mut diag = Diagnostics::new();
    let data = load_input(cfg, &mut diag)?;
    let dropped_rows = diag
        .warnings()
        .iter()
        .map(|w| match w {
            Warning::RowsDropped { count } => *count,
            _ => 0,
        })
        .sum();
    let FitResult {
        smoothing,
        moments,
        eig,
    } = fit_dataset(&data, cfg, &mut diag)?;

    ensure_dir(&cfg.output_dir)?;
    let meta = meta(cfg);
    let grid = &moments.grid;
    io::write_columns(
        &out_path(cfg, MOMENTS_FILE),
        &meta,
        grid,
        &[("mu".into(), &moments.mu), ("dmu".into(), &moments.dmu)],
    )?;
    io::write_matrix(&out_path(cfg, COV_FILE), &meta, grid, &moments.cov)?;
    io::write_matrix(&out_path(cfg, DCOV_FILE), &meta, grid, &moments.dcov)?;
    let dphis = eig.derivatives().map_err(CliError::stage("eigenbasis"))?;
    let names: Vec<String> = numbered("phi", eig.k())
        .into_iter()
        .chain(numbered("dphi", eig.k()))
        .collect();
    let columns: Vec<(String, &[f64])> = names
        .into_iter()
        .zip(eig.phis.iter().chain(dphis).map(Vec::as_slice))
        .collect();
    io::write_columns(&out_path(cfg, EIGEN_FILE), &meta, grid, &columns)?;

    let summary = FitSummary {
        meta,
        config: cfg.hashed(),
        subjects: data.len(),
        observations: data.total_observations(),
        dropped_rows,
        domain: data.domain(),
        grid_size: grid.len(),
        bandwidths: smoothing,
        sigma2: moments.sigma2,
        k: eig.k(),
        lambdas: eig.lambdas.clone(),
        fve: eig.fve.clone(),
        spectrum: eig.spectrum.clone(),
        spacings: eig.spacings(),
        trace: eig.trace,
        warnings: diag.clone(),
    };
    io::write_json(&out_path(cfg, SUMMARY_FILE), &summary)?;
    Ok(diag)
}

/// Everything `fit` wrote, read back from `dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitArtifacts {
    pub summary: FitSummary,
    pub moments: MomentEstimates,
    pub eig: EigenSystem,
}

fn grid_column(path: &Path, columns: &[Vec<f64>], grid: &EvalGrid) -> CliResult<()> {
    if columns.first().map(Vec::as_slice) != Some(grid.points()) {
        return Err(CliError::parse(path, "t column does not match the fitted grid"));
    }
    Ok(())
}

pub fn load_fit(dir: &Path) -> CliResult<FitArtifacts> {
    let summary_path = dir.join(SUMMARY_FILE);
    let summary: FitSummary = io::read_json(&summary_path)?;
    let grid = make_grid(summary.domain, summary.grid_size)
        .map_err(|e| CliError::parse(&summary_path, e.to_string()))?;

    let path = dir.join(MOMENTS_FILE);
    let (_, mut cols) = io::read_columns(&path)?;
    grid_column(&path, &cols, &grid)?;
    if cols.len() != 3 {
        return Err(CliError::parse(&path, "expected columns t,mu,dmu"));
    }
    let dmu = cols.pop().unwrap_or_default();
    let mu = cols.pop().unwrap_or_default();
    let moments = MomentEstimates {
        cov: io::read_matrix(&dir.join(COV_FILE), &grid)?,
        dcov: io::read_matrix(&dir.join(DCOV_FILE), &grid)?,
        grid: grid.clone(),
        mu,
        dmu,
        sigma2: summary.sigma2,
    };

    let path = dir.join(EIGEN_FILE);
    let (_, mut cols) = io::read_columns(&path)?;
    grid_column(&path, &cols, &grid)?;
    let k = summary.k;
    if cols.len() != 1 + 2 * k {
        return Err(CliError::parse(&path, format!("expected {k} eigenfunctions and derivatives")));
    }
    let dphis = cols.split_off(1 + k);
    let phis = cols.split_off(1);
    let eig = EigenSystem {
        grid,
        lambdas: summary.lambdas.clone(),
        phis,
        dphis: Some(dphis),
        fve: summary.fve.clone(),
        spectrum: summary.spectrum.clone(),
        trace: summary.trace,
    };
    Ok(FitArtifacts {
        summary,
        moments,
        eig,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub rho: Vec<f64>,
    pub fve: Vec<f64>,
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub intervals: Vec<Subdomain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub meta: Meta,
    pub config: RunConfig,
    pub k: usize,
    pub fve: Vec<f64>,
    pub floors: FloorCounts,
    pub identities: IdentityCheck,
    /// `null` when the drift covariance vanishes.
    pub drift: Option<DriftSummary>,
    pub subdomains: Vec<ThresholdReport>,
    pub warnings: Diagnostics,
}

pub fn dynamics(cfg: &RunConfig) -> CliResult<Diagnostics> {
    cfg.validate()?;
    let fitted = load_fit(&cfg.output_dir)?;
    let mut diag = Diagnostics::new();
    let dynamics = dynamics_of(&fitted.eig, cfg, &mut diag)?;
    let subdomains = cfg
        .r2_thresholds
        .iter()
        .map(|&threshold| {
            Ok(ThresholdReport {
                threshold,
                intervals: dynamics.subdomains(threshold).map_err(CliError::stage("dynamics"))?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let meta = meta(cfg);
    let grid = &dynamics.grid;
    io::write_columns(
        &out_path(cfg, DYNAMICS_FILE),
        &meta,
        grid,
        &[
            ("beta".into(), &dynamics.beta),
            ("varX".into(), &dynamics.var_x),
            ("varDX".into(), &dynamics.var_dx),
            ("V".into(), &dynamics.v),
            ("R2".into(), &dynamics.r2),
        ],
    )?;
    io::write_matrix(&out_path(cfg, GZ_FILE), &meta, grid, &dynamics.gz)?;
    let psis = dynamics.drift_eig.as_ref().map_or(&[][..], |d| &d.phis[..]);
    let columns: Vec<(String, &[f64])> = numbered("psi", psis.len())
        .into_iter()
        .zip(psis.iter().map(Vec::as_slice))
        .collect();
    io::write_columns(&out_path(cfg, DRIFT_EIGEN_FILE), &meta, grid, &columns)?;

    let summary = DynamicsSummary {
        meta,
        config: cfg.hashed(),
        k: fitted.eig.k(),
        fve: fitted.eig.fve.clone(),
        floors: dynamics.floors,
        identities: dynamics.identities(),
        drift: dynamics.drift_eig.as_ref().map(|d| DriftSummary {
            rho: d.lambdas.clone(),
            fve: d.fve.clone(),
            trace: d.trace,
        }),
        subdomains,
        warnings: diag.clone(),
    };
    io::write_json(&out_path(cfg, SUBDOMAINS_FILE), &summary)?;
    Ok(diag)
}

/// β̂ and the drift eigensystem written by `dynamics`.
fn load_dynamics(dir: &Path, grid: &EvalGrid) -> CliResult<(Vec<f64>, Option<EigenSystem>)> {
    let path = dir.join(DYNAMICS_FILE);
    let (header, cols) = io::read_columns(&path)?;
    grid_column(&path, &cols, grid)?;
    let beta = header
        .iter()
        .position(|h| h == "beta")
        .map(|i| cols[i].clone())
        .ok_or_else(|| CliError::parse(&path, "no beta column"))?;

    let summary_path = dir.join(SUBDOMAINS_FILE);
    let summary: DynamicsSummary = io::read_json(&summary_path)?;
    let Some(drift) = summary.drift else {
        return Ok((beta, None));
    };
    let path = dir.join(DRIFT_EIGEN_FILE);
    let (_, mut cols) = io::read_columns(&path)?;
    grid_column(&path, &cols, grid)?;
    if cols.len() != 1 + drift.rho.len() {
        return Err(CliError::parse(&path, "drift eigenfunctions do not match subdomains.json"));
    }
    let psis = cols.split_off(1);
    let eig = EigenSystem {
        grid: grid.clone(),
        spectrum: drift.rho.clone(),
        lambdas: drift.rho,
        phis: psis,
        dphis: None,
        fve: drift.fve,
        trace: drift.trace,
    };
    Ok((beta, Some(eig)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScores {
    pub id: String,
    /// Path of the fitted curves, relative to the output directory.
    pub file: String,
    pub scores: Vec<f64>,
    /// Projections of the fitted drift path on the drift eigenfunctions.
    pub drift_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    pub meta: Meta,
    pub k: usize,
    pub subjects: Vec<SubjectScores>,
    pub warnings: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremesFile {
    pub meta: Meta,
    pub top: usize,
    pub components: Vec<ComponentExtremes>,
}

/// Distinct file names for the subject ids, in order.
fn subject_files(ids: &[&str]) -> Vec<String> {
    let mut used = BTreeSet::new();
    ids.iter()
        .map(|id| {
            let base = io::sanitize_id(id);
            let mut name = format!("{base}.csv");
            let mut n = 1;
            while !used.insert(name.to_ascii_lowercase()) {
                n += 1;
                name = format!("{base}-{n}.csv");
            }
            name
        })
        .collect()
}

pub fn pace(cfg: &RunConfig) -> CliResult<Diagnostics> {
    cfg.validate()?;
    let mut diag = Diagnostics::new();
    let fitted = load_fit(&cfg.output_dir)?;
    let (beta, drift_eig) = load_dynamics(&cfg.output_dir, &fitted.eig.grid)?;
    let data = load_input(cfg, &mut diag)?;
    let opts = PaceOptions {
        sigma_floor: cfg.sigma_floor,
    };

    let mut fits: Vec<SubjectFit> = Vec::new();
    for subject in data.subjects() {
        match fit_subject(subject, &fitted.moments, &fitted.eig, &beta, opts) {
            Ok(f) => fits.push(f),
            Err(e) => diag.push(Warning::SubjectFailed {
                subject: subject.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if fits.is_empty() {
        return Err(CliError::AllSubjectsFailed { count: data.len() });
    }

    let meta = meta(cfg);
    let dir = out_path(cfg, SUBJECTS_DIR);
    ensure_dir(&dir)?;
    let ids: Vec<&str> = fits.iter().map(|f| f.id.as_str()).collect();
    let files = subject_files(&ids);
    let grid = &fitted.eig.grid;
    let header: Vec<String> = ["subject_id", "t", "xhat", "dxhat", "zhat"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for (fit, file) in fits.iter().zip(&files) {
        let rows = grid.points().iter().enumerate().map(|(i, &t)| {
            vec![
                fit.id.clone(),
                io::fmt_f64(t),
                io::fmt_f64(fit.xhat[i]),
                io::fmt_f64(fit.dxhat[i]),
                io::fmt_f64(fit.zhat[i]),
            ]
        });
        io::write_table(&dir.join(file), &meta, &header, rows)?;
    }

    let projected = match &drift_eig {
        Some(d) => drift_scores(&fits, d),
        None => vec![Vec::new(); fits.len()],
    };
    let subjects = fits
        .iter()
        .zip(&files)
        .zip(projected)
        .map(|((f, file), drift_scores)| SubjectScores {
            id: f.id.clone(),
            file: format!("{SUBJECTS_DIR}/{file}"),
            scores: f.scores.clone(),
            drift_scores,
        })
        .collect();
    io::write_json(
        &out_path(cfg, SCORES_FILE),
        &ScoresFile {
            meta: meta.clone(),
            k: fitted.eig.k(),
            subjects,
            warnings: diag.clone(),
        },
    )?;
    let components = drift_eig
        .as_ref()
        .map(|d| drift_score_extremes(&fits, d, cfg.top))
        .unwrap_or_default();
    io::write_json(
        &out_path(cfg, EXTREMES_FILE),
        &ExtremesFile {
            meta,
            top: cfg.top,
            components,
        },
    )?;
    Ok(diag)
}

/// Bundles the JSON summaries present in the output directory.
pub fn report(cfg: &RunConfig) -> CliResult<Diagnostics> {
    cfg.validate()?;
    let read = |name: &str| -> CliResult<Value> {
        let path = out_path(cfg, name);
        if path.exists() {
            io::read_json(&path)
        } else {
            Ok(Value::Null)
        }
    };
    let fit = read(SUMMARY_FILE)?;
    if fit.is_null() {
        return Err(CliError::io(
            out_path(cfg, SUMMARY_FILE),
            std::io::Error::new(std::io::ErrorKind::NotFound, "run `fit` first"),
        ));
    }
    let report = serde_json::json!({
        "meta": meta(cfg),
        "fit": fit,
        "dynamics": read(SUBDOMAINS_FILE)?,
        "scores": read(SCORES_FILE)?,
        "extremes": read(EXTREMES_FILE)?,
    });
    io::write_json(&out_path(cfg, REPORT_FILE), &report)?;
    Ok(Diagnostics::new())
}
