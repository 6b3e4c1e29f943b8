//! Monte-Carlo campaigns, the timing study, and table emission.
//!
//! A campaign is described by a small structured config (TOML on disk):
//! which coefficient model and defect variant, the mesh resolutions, the
//! patch width, a probability grid, a sample count, and a seed.  The
//! drivers here sweep the grid, draw defect realizations
//! deterministically from derived seeds, push every sample through both
//! the offline-online combination and the per-sample reference solver,
//! and aggregate root-mean-square errors per probability.  Results are
//! emitted as CSV plus a JSON run manifest (config digest, package
//! version, wall time) so a finished run documents itself.
//!
//! Everything is sequential and bitwise reproducible: sample `i` of
//! probability-grid entry `q` always uses `derive_seed(seed, q, i)`, and
//! rows are accumulated in grid order.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficient::{
    derive_seed, realize, realize_patch, sample_defects, DefectSample, DefectVariant,
    PeriodicModel,
};
use crate::corrector::CorrectorWorkspace;
use crate::error::{Error, Result};
use crate::indicator::{compute_sb_with, indicator_et};
use crate::interpolation::InterpKind;
use crate::mesh::{build_mesh, patch, NestedMesh};
use crate::offline::{build_offline, default_forcing};
use crate::online::{assemble_global, combine_local, solve_coarse, upscale};
use crate::reference::{coarse_l2_norm, pglod_solve, relative_errors};

// ---------------------------------------------------------------------------
// Campaign configuration.

fn default_dim() -> usize {
    2
}

fn default_outputs() -> Vec<String> {
    vec!["errors".to_string()]
}

/// One campaign: coefficient model, mesh resolutions, probability grid,
/// sample count, and seed.
///
/// The key schema mirrors the on-disk TOML: `model`, `variant`,
/// `beta_tilde`, `alpha`, `beta`, `d`, `nH`, `refinement`, `nEps`, `m`,
/// `p_grid`, `m_samp`, `seed`, `outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Base microstructure: `"checkerboard"` or `"inclusions"`.
    pub model: String,
    /// Optional defect variant on the inclusion model: `"value"`,
    /// `"fill"`, `"shift"`, or `"lshape"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Replacement inclusion value; required with `variant = "value"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_tilde: Option<f64>,
    /// Lower spectral bound of the coefficient.
    pub alpha: f64,
    /// Upper spectral bound of the coefficient.
    pub beta: f64,
    /// Spatial dimension (defaults to 2).
    #[serde(default = "default_dim")]
    pub d: usize,
    /// Coarse elements per axis.
    #[serde(rename = "nH")]
    pub n_h: usize,
    /// Fine elements per coarse element per axis.
    pub refinement: usize,
    /// Defect cells per axis.
    #[serde(rename = "nEps")]
    pub n_eps: usize,
    /// Patch width in coarse layers.
    pub m: usize,
    /// Defect probabilities to sweep.
    pub p_grid: Vec<f64>,
    /// Samples per probability.
    pub m_samp: usize,
    /// Campaign seed; all per-sample seeds derive from it.
    pub seed: u64,
    /// Which tables this campaign is meant to produce
    /// (`errors`, `baseline`, `indicator`, `timing`).
    #[serde(default = "default_outputs")]
    pub outputs: Vec<String>,
}

impl CampaignConfig {
    /// Parses a TOML config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: CampaignConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the cross-field constraints the type system cannot.
    pub fn validate(&self) -> Result<()> {
        match self.model.as_str() {
            "checkerboard" | "inclusions" => {}
            other => {
                return Err(Error::config(format!(
                    "unknown coefficient model \"{other}\" (expected checkerboard or inclusions)"
                )))
            }
        }
        if let Some(v) = &self.variant {
            if !matches!(v.as_str(), "value" | "fill" | "shift" | "lshape") {
                return Err(Error::config(format!(
                    "unknown defect variant \"{v}\" (expected value, fill, shift, or lshape)"
                )));
            }
            if (v == "value") != self.beta_tilde.is_some() {
                return Err(Error::config(
                    "beta_tilde must be given exactly when variant = \"value\"".to_string(),
                ));
            }
        } else if self.beta_tilde.is_some() {
            return Err(Error::config(
                "beta_tilde must be given exactly when variant = \"value\"".to_string(),
            ));
        }
        if self.m_samp == 0 {
            return Err(Error::config("m_samp must be at least 1".to_string()));
        }
        if self.p_grid.is_empty() {
            return Err(Error::config("p_grid must not be empty".to_string()));
        }
        for &p in &self.p_grid {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("probability {p} outside [0, 1]")));
            }
        }
        for o in &self.outputs {
            if !matches!(o.as_str(), "errors" | "baseline" | "indicator" | "timing") {
                return Err(Error::config(format!("unknown output table \"{o}\"")));
            }
        }
        // Mesh divisibility is re-checked by the mesh constructor; doing
        // it here gives config-shaped errors before any heavy work.
        self.mesh()?;
        Ok(())
    }

    /// Builds the nested mesh of this campaign.
    pub fn mesh(&self) -> Result<NestedMesh> {
        build_mesh(self.d, self.n_h, self.refinement, self.n_eps)
    }

    /// Instantiates the coefficient model at probability `p`.
    ///
    /// The cell pattern is resolved at exactly the fine resolution
    /// (`nH·refinement/nEps` subcells per axis), so realizations match
    /// the mesh element by element.
    pub fn model(&self, p: f64) -> Result<PeriodicModel> {
        let cell_div = self.n_h * self.refinement / self.n_eps;
        let base = match self.model.as_str() {
            "checkerboard" => {
                PeriodicModel::checkerboard(self.d, self.alpha, self.beta, cell_div, p)?
            }
            "inclusions" => {
                PeriodicModel::inclusions(self.d, self.alpha, self.beta, cell_div, p)?
            }
            other => {
                return Err(Error::config(format!(
                    "unknown coefficient model \"{other}\""
                )))
            }
        };
        match self.variant.as_deref() {
            None => Ok(base),
            Some("value") => {
                let beta_tilde = self.beta_tilde.ok_or_else(|| {
                    Error::config("variant \"value\" needs beta_tilde".to_string())
                })?;
                crate::coefficient::defect_variant(&base, DefectVariant::Value { beta_tilde })
            }
            Some("fill") => crate::coefficient::defect_variant(&base, DefectVariant::Fill),
            Some("shift") => crate::coefficient::defect_variant(&base, DefectVariant::Shift),
            Some("lshape") => crate::coefficient::defect_variant(&base, DefectVariant::Lshape),
            Some(other) => Err(Error::config(format!("unknown defect variant \"{other}\""))),
        }
    }

    /// Interpolation flavor: nodal in one dimension, element-averaged
    /// otherwise.
    pub fn kind(&self) -> InterpKind {
        if self.d == 1 {
            InterpKind::Nodal1d
        } else {
            InterpKind::AveragedL2
        }
    }
}

// ---------------------------------------------------------------------------
// Error campaigns.

/// One aggregated row of an error campaign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    /// Defect probability.
    pub p: f64,
    /// RMS over samples of the relative coarse `L²` error.
    pub rms_rel_l2: f64,
    /// RMS over samples of the relative upscaled `H¹` seminorm error.
    pub rms_rel_h1: f64,
    /// Samples aggregated into this row.
    pub m_samp: usize,
    /// Campaign seed the rows derive from.
    pub seed: u64,
}

/// Error tables of one campaign: the offline-online combination and the
/// frozen defect-free solution, each against the same per-sample
/// references.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignTables {
    /// Offline-online combination vs per-sample reference.
    pub online: Vec<ErrorRow>,
    /// Defect-free solution vs per-sample reference.
    pub baseline: Vec<ErrorRow>,
}

fn annotate_sample(p: f64, i: usize, seed: u64) -> impl Fn(Error) -> Error {
    move |e| {
        Error::data(format!(
            "sample {i} (seed {seed:#018x}) at p = {p}: {e}"
        ))
    }
}

/// Shared driver for [`run_mc`], [`run_deterministic_baseline`], and
/// [`run_mc_and_baseline`]: every requested comparison reuses the same
/// per-sample reference solutions, which dominate the cost.
fn error_campaign(
    cfg: &CampaignConfig,
    want_online: bool,
    want_baseline: bool,
) -> Result<CampaignTables> {
    cfg.validate()?;
    let mesh = cfg.mesh()?;
    let kind = cfg.kind();
    let f = default_forcing(cfg.d);
    let db = if want_online {
        Some(build_offline(&cfg.model(0.0)?, &mesh, cfg.m, kind, f)?)
    } else {
        None
    };
    let frozen = if want_baseline {
        let clean = DefectSample {
            bits: vec![false; mesh.defect_cells()],
            seed: 0,
        };
        let field = realize(&cfg.model(0.0)?, &clean, &mesh)?;
        Some(pglod_solve(&field, &mesh, cfg.m, kind, f)?)
    } else {
        None
    };
    let mut online = Vec::new();
    let mut baseline = Vec::new();
    for (q, &p) in cfg.p_grid.iter().enumerate() {
        let model = cfg.model(p)?;
        let mut sum_online = (0.0, 0.0);
        let mut sum_base = (0.0, 0.0);
        for i in 0..cfg.m_samp {
            let seed = derive_seed(cfg.seed, q as u64, i as u64);
            let wrap = annotate_sample(p, i, seed);
            let sample = sample_defects(&model, &mesh, seed);
            let field = realize(&model, &sample, &mesh).map_err(&wrap)?;
            let reference = pglod_solve(&field, &mesh, cfg.m, kind, f).map_err(&wrap)?;
            if let Some(db) = &db {
                let mut system = assemble_global(db, &sample, &mesh).map_err(&wrap)?;
                let coarse = solve_coarse(&mut system).map_err(&wrap)?;
                let up = upscale(db, &sample, &coarse).map_err(&wrap)?;
                let (l2, h1) = relative_errors(&mesh, &reference, &coarse, &up.fine_values)
                    .map_err(&wrap)?;
                sum_online.0 += l2 * l2;
                sum_online.1 += h1 * h1;
            }
            if let Some(frozen) = &frozen {
                let (l2, h1) =
                    relative_errors(&mesh, &reference, &frozen.coarse, &frozen.upscaled)
                        .map_err(&wrap)?;
                sum_base.0 += l2 * l2;
                sum_base.1 += h1 * h1;
            }
        }
        let inv = 1.0 / cfg.m_samp as f64;
        if want_online {
            online.push(ErrorRow {
                p,
                rms_rel_l2: (sum_online.0 * inv).sqrt(),
                rms_rel_h1: (sum_online.1 * inv).sqrt(),
                m_samp: cfg.m_samp,
                seed: cfg.seed,
            });
        }
        if want_baseline {
            baseline.push(ErrorRow {
                p,
                rms_rel_l2: (sum_base.0 * inv).sqrt(),
                rms_rel_h1: (sum_base.1 * inv).sqrt(),
                m_samp: cfg.m_samp,
                seed: cfg.seed,
            });
        }
    }
    Ok(CampaignTables { online, baseline })
}

/// Monte-Carlo error campaign: per probability, the RMS relative errors
/// of the offline-online solution against a fresh per-sample reference
/// solve.
pub fn run_mc(cfg: &CampaignConfig) -> Result<Vec<ErrorRow>> {
    Ok(error_campaign(cfg, true, false)?.online)
}

/// Same campaign, but the compared solution is the frozen defect-free
/// one: what ignoring the defects entirely would cost.
pub fn run_deterministic_baseline(cfg: &CampaignConfig) -> Result<Vec<ErrorRow>> {
    Ok(error_campaign(cfg, false, true)?.baseline)
}

/// Both tables over one shared reference sweep (the references dominate
/// the cost, so combining the runs is nearly twice as fast as running
/// them separately).
pub fn run_mc_and_baseline(cfg: &CampaignConfig) -> Result<CampaignTables> {
    error_campaign(cfg, true, true)
}

// ---------------------------------------------------------------------------
// Indicator study.

/// One aggregated row of the indicator study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorRow {
    /// Defect probability.
    pub p: f64,
    /// RMS of the per-sample indicator on the monitored element.
    pub rms_et: f64,
    /// RMS absolute coarse `L²` distance between the combined and
    /// reference solutions.
    pub rms_abs_l2: f64,
    /// RMS relative coarse `L²` error.
    pub rms_rel_l2: f64,
    /// RMS relative upscaled `H¹` seminorm error.
    pub rms_rel_h1: f64,
    /// Samples aggregated into this row.
    pub m_samp: usize,
    /// Campaign seed.
    pub seed: u64,
}

/// Indicator campaign: per probability and sample, evaluates the error
/// indicator on one monitored element (element 0 — by translation
/// invariance every element is statistically identical) next to the
/// actual solution errors of the offline-online combination.
pub fn run_indicator_study(cfg: &CampaignConfig) -> Result<Vec<IndicatorRow>> {
    cfg.validate()?;
    let mesh = cfg.mesh()?;
    let kind = cfg.kind();
    let f = default_forcing(cfg.d);
    let db = build_offline(&cfg.model(0.0)?, &mesh, cfg.m, kind, f)?;
    let monitored = patch(&mesh, 0, cfg.m);
    let workspace = CorrectorWorkspace::new(&mesh, &monitored, kind)?;
    let mut rows = Vec::with_capacity(cfg.p_grid.len());
    for (q, &p) in cfg.p_grid.iter().enumerate() {
        let model = cfg.model(p)?;
        let mut sum_et = 0.0;
        let mut sum_abs = 0.0;
        let mut sum_rel = (0.0, 0.0);
        for i in 0..cfg.m_samp {
            let seed = derive_seed(cfg.seed, q as u64, i as u64);
            let wrap = annotate_sample(p, i, seed);
            let sample = sample_defects(&model, &mesh, seed);
            let a_patch = realize_patch(&model, &sample, &mesh, &monitored).map_err(&wrap)?;
            let mu = crate::coefficient::extract_mu(
                &sample,
                &mesh,
                &db.reference_cells,
                &monitored,
            );
            let sb = compute_sb_with(&workspace, &a_patch, &db, &mu).map_err(&wrap)?;
            sum_et += indicator_et(&sb).map_err(&wrap)?.powi(2);

            let field = realize(&model, &sample, &mesh).map_err(&wrap)?;
            let reference = pglod_solve(&field, &mesh, cfg.m, kind, f).map_err(&wrap)?;
            let mut system = assemble_global(&db, &sample, &mesh).map_err(&wrap)?;
            let coarse = solve_coarse(&mut system).map_err(&wrap)?;
            let up = upscale(&db, &sample, &coarse).map_err(&wrap)?;
            let diff: Vec<f64> = reference
                .coarse
                .iter()
                .zip(&coarse)
                .map(|(a, b)| a - b)
                .collect();
            sum_abs += coarse_l2_norm(&mesh, &diff).powi(2);
            let (l2, h1) =
                relative_errors(&mesh, &reference, &coarse, &up.fine_values).map_err(&wrap)?;
            sum_rel.0 += l2 * l2;
            sum_rel.1 += h1 * h1;
        }
        let inv = 1.0 / cfg.m_samp as f64;
        rows.push(IndicatorRow {
            p,
            rms_et: (sum_et * inv).sqrt(),
            rms_abs_l2: (sum_abs * inv).sqrt(),
            rms_rel_l2: (sum_rel.0 * inv).sqrt(),
            rms_rel_h1: (sum_rel.1 * inv).sqrt(),
            m_samp: cfg.m_samp,
            seed: cfg.seed,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Timing study.

/// Wall-clock measurements of the offline-online split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    /// Median time for one corrector solve plus local stiffness assembly.
    pub t_stiff: f64,
    /// Median time for one μ-combination of precomputed local matrices.
    pub t_comb: f64,
    /// Wall time of the whole offline database build.
    pub t_offline_total: f64,
    /// Median online time per sample (combine, assemble, solve, upscale).
    pub t_online_per_sample: f64,
    /// Median time for one from-scratch per-sample reference solve.
    pub t_naive_per_sample: f64,
    /// Samples after which offline + online beats from-scratch solves:
    /// `(N+1)·t_stiff / (nH^d · (t_stiff − t_comb))`.
    pub break_even_samples: f64,
    /// Repetitions behind each median.
    pub repetitions: usize,
    /// Offline coefficients in the database (defect count + 1).
    pub n_offline_coefficients: usize,
    /// Coarse elements per sample.
    pub n_elements: usize,
}

fn median(mut times: Vec<f64>) -> f64 {
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

/// Measures the offline-online cost split on one campaign configuration.
///
/// Micro-measurements (`t_stiff`, `t_comb`) run one warm-up plus
/// `repetitions` timed repetitions and report the median; `t_comb`
/// averages a small inner loop per repetition because a single
/// combination sits near the clock resolution.  The probability used for
/// the sampled defect pattern is the first grid entry.
pub fn run_timing(cfg: &CampaignConfig) -> Result<TimingReport> {
    cfg.validate()?;
    const REPS: usize = 5;
    const COMB_INNER: usize = 32;
    let mesh = cfg.mesh()?;
    let kind = cfg.kind();
    let f = default_forcing(cfg.d);
    let start = Instant::now();
    let db = build_offline(&cfg.model(0.0)?, &mesh, cfg.m, kind, f)?;
    let t_offline_total = start.elapsed().as_secs_f64();

    let model = cfg.model(cfg.p_grid[0])?;
    let seed = derive_seed(cfg.seed, 0, 0);
    let sample = sample_defects(&model, &mesh, seed);
    let field = realize(&model, &sample, &mesh)?;
    let monitored = patch(&mesh, 0, cfg.m);
    let mut workspace = CorrectorWorkspace::new(&mesh, &monitored, kind)?;
    let a_patch: Vec<f64> = monitored
        .fine_elements
        .iter()
        .map(|&e| field.values[e])
        .collect();
    let a_patch = crate::coefficient::CoefficientField { values: a_patch };
    let mu = crate::coefficient::extract_mu(&sample, &mesh, &db.reference_cells, &monitored);

    let mut t_stiff = Vec::with_capacity(REPS);
    for rep in 0..=REPS {
        let t0 = Instant::now();
        let basis = workspace.solve_basis(&a_patch)?;
        let local = workspace.local_stiffness(&a_patch, &basis)?;
        let dt = t0.elapsed().as_secs_f64();
        // Keep the results alive so the work cannot be elided.
        std::hint::black_box((&basis, &local));
        if rep > 0 {
            t_stiff.push(dt);
        }
    }
    let t_stiff = median(t_stiff);

    let mut t_comb = Vec::with_capacity(REPS);
    for rep in 0..=REPS {
        let t0 = Instant::now();
        for _ in 0..COMB_INNER {
            std::hint::black_box(combine_local(&db, &mu)?);
        }
        let dt = t0.elapsed().as_secs_f64() / COMB_INNER as f64;
        if rep > 0 {
            t_comb.push(dt);
        }
    }
    let t_comb = median(t_comb);

    let mut t_online = Vec::with_capacity(REPS);
    for rep in 0..=REPS {
        let t0 = Instant::now();
        let mut system = assemble_global(&db, &sample, &mesh)?;
        let coarse = solve_coarse(&mut system)?;
        let up = upscale(&db, &sample, &coarse)?;
        let dt = t0.elapsed().as_secs_f64();
        std::hint::black_box(&up);
        if rep > 0 {
            t_online.push(dt);
        }
    }
    let t_online_per_sample = median(t_online);

    let mut t_naive = Vec::with_capacity(REPS);
    for rep in 0..=REPS {
        let t0 = Instant::now();
        let reference = pglod_solve(&field, &mesh, cfg.m, kind, f)?;
        let dt = t0.elapsed().as_secs_f64();
        std::hint::black_box(&reference);
        if rep > 0 {
            t_naive.push(dt);
        }
    }
    let t_naive_per_sample = median(t_naive);

    let n_coeff = db.coefficients.len();
    let n_elements = mesh.coarse_elems();
    let break_even_samples =
        n_coeff as f64 * t_stiff / (n_elements as f64 * (t_stiff - t_comb));
    Ok(TimingReport {
        t_stiff,
        t_comb,
        t_offline_total,
        t_online_per_sample,
        t_naive_per_sample,
        break_even_samples,
        repetitions: REPS,
        n_offline_coefficients: n_coeff,
        n_elements,
    })
}

// ---------------------------------------------------------------------------
// Table and manifest emission.

/// Least-squares slope of `ln y` against `ln x`.
///
/// All points need positive coordinates and at least two distinct
/// abscissae.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::data(format!(
            "slope fit needs at least two points, got {}",
            points.len()
        )));
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        if x <= 0.0 || y <= 0.0 {
            return Err(Error::data(format!(
                "slope fit needs positive coordinates, got ({x}, {y})"
            )));
        }
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let n = points.len() as f64;
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::data(
            "slope fit needs at least two distinct abscissae".to_string(),
        ));
    }
    Ok((n * sxy - sx * sy) / denom)
}

/// Writes one CSV table; every value is formatted with the shortest
/// round-tripping representation, so files are bitwise reproducible for
/// a given config and seed.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// CSV rows of an error table (`p,rmsRelL2,rmsRelH1,mSamp,seed`).
pub fn error_csv_rows(rows: &[ErrorRow]) -> (&'static str, Vec<Vec<String>>) {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.p.to_string(),
                r.rms_rel_l2.to_string(),
                r.rms_rel_h1.to_string(),
                r.m_samp.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    ("p,rmsRelL2,rmsRelH1,mSamp,seed", body)
}

/// CSV rows of an indicator table
/// (`p,rmsEt,rmsAbsL2,rmsRelL2,rmsRelH1,mSamp,seed`).
pub fn indicator_csv_rows(rows: &[IndicatorRow]) -> (&'static str, Vec<Vec<String>>) {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.p.to_string(),
                r.rms_et.to_string(),
                r.rms_abs_l2.to_string(),
                r.rms_rel_l2.to_string(),
                r.rms_rel_h1.to_string(),
                r.m_samp.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    ("p,rmsEt,rmsAbsL2,rmsRelL2,rmsRelH1,mSamp,seed", body)
}

/// CSV rows of the one-dimensional deviation study
/// (`p,H,rmsHarm,rmsRelL2,maxSlack,violations,mSamp,seed`).
pub fn oned_csv_rows(
    rows: &[crate::oned::StudyRow],
    m_samp: usize,
    seed: u64,
) -> (&'static str, Vec<Vec<String>>) {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.p.to_string(),
                (1.0 / r.n_coarse as f64).to_string(),
                r.rms_deviation.to_string(),
                r.rms_rel_l2.to_string(),
                r.max_slack.to_string(),
                r.violations.len().to_string(),
                m_samp.to_string(),
                seed.to_string(),
            ]
        })
        .collect();
    (
        "p,H,rmsHarm,rmsRelL2,maxSlack,violations,mSamp,seed",
        body,
    )
}

/// Provenance record written next to every table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the run.
    pub command: String,
    /// SHA-256 of the canonical serialized config.
    pub config_sha256: String,
    /// Package name.
    pub package: String,
    /// Package version.
    pub version: String,
    /// Campaign seed.
    pub seed: u64,
    /// Total wall time of the run in seconds.
    pub wall_seconds: f64,
    /// Files the run wrote, relative to the output directory.
    pub outputs: Vec<String>,
}

/// Hex SHA-256 digest of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Builds the manifest for a finished run.  The digest covers the
/// canonical re-serialization of the config, so it identifies the
/// effective settings rather than the file's formatting.
pub fn manifest_for<C: Serialize>(
    command: &str,
    config: &C,
    seed: u64,
    wall_seconds: f64,
    outputs: Vec<String>,
) -> Result<RunManifest> {
    let canonical = toml::to_string(config)
        .map_err(|e| Error::data(format!("config serialization failed: {e}")))?;
    Ok(RunManifest {
        command: command.to_string(),
        config_sha256: sha256_hex(canonical.as_bytes()),
        package: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        wall_seconds,
        outputs,
    })
}

/// Hardware and platform facts recorded next to timing numbers, which
/// are meaningless without them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineContext {
    /// Operating system family.
    pub os: String,
    /// CPU architecture.
    pub arch: String,
    /// CPU model string, when the platform exposes one.
    pub cpu: String,
    /// Logical cores visible to the process.
    pub logical_cores: usize,
}

/// Collects the machine context of the current host.
pub fn machine_context() -> MachineContext {
    let cpu = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".to_string());
    MachineContext {
        os: std::env::consts::OS.to_string(),
        arch: std::env::consts::ARCH.to_string(),
        cpu,
        logical_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Writes a manifest as pretty JSON.
pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::data(format!("manifest serialization failed: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
