//! Configuration, dispatch and persistence for the command-line runner.
//!
//! A run is described by a TOML document with a `kind` key selecting the
//! experiment and a flat parameter set validated against that kind's
//! preconditions before anything is computed. Results are written as CSV
//! tables plus a JSON summary into a per-run directory, created atomically
//! (staged under a temporary name, renamed on success) together with a
//! manifest that fingerprints the config. Numeric outputs depend only on
//! (config, seed), never on wall-clock or thread count.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cutoff::CutoffSpec;
use crate::dynamics::{couple_and_compare, simulate, Integrator, RecordOptions, SimConfig};
use crate::error::{Result, SnsError};
use crate::lab::{
    bel_gradient, blowup_mc, crn_central_difference, feller_modulus, series1, trilinear_check,
    weight_bound_check, BlowupParams, TestFunctional,
};
use crate::noise::{sample_z_path, sup_norm_tail_mc, uniform_grid, NoiseSpec};
use crate::rng::stream_rng;
use crate::spectral::field::{random_field, ModeSet};
use crate::spectral::io::field_to_json;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "TORUS_SNS_OUTPUT";

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn de_err(e: impl std::fmt::Display) -> SnsError {
    SnsError::Config(e.to_string())
}

// ---------------------------------------------------------------------------
// parameter blocks, one per experiment kind

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_modes: u32,
    pub alpha0: f64,
    pub c0: f64,
    #[serde(default)]
    pub cutoff: Option<CutoffWindow>,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default)]
    pub linear_only: bool,
    #[serde(default = "default_record_alphas")]
    pub record_alphas: Vec<f64>,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    pub x_amplitude: f64,
    pub x_decay: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffWindow {
    pub alpha: f64,
    pub r: f64,
}

fn default_integrator() -> Integrator {
    Integrator::ExponentialEuler
}

fn default_record_alphas() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleParams {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_modes: u32,
    pub alpha0: f64,
    pub c0: f64,
    pub alpha: f64,
    pub r: f64,
    pub n_seeds: u64,
    pub x_decay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsParams {
    pub nu: f64,
    pub n_modes: u32,
    pub alpha0: f64,
    pub c0: f64,
    pub beta: f64,
    pub eps: f64,
    pub k_values: Vec<f64>,
    pub samples: u64,
    #[serde(default = "default_refine")]
    pub refine: usize,
    /// also run at eps/2 to check slope stability
    #[serde(default)]
    pub halve_eps: bool,
}

fn default_refine() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfigParams {
    pub nu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_modes: u32,
    pub alpha0: f64,
    pub c0: f64,
    pub alpha: f64,
    pub r: f64,
    pub samples: usize,
    pub t_grid: Vec<f64>,
    pub x_decay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitiesParams {
    pub triples: Vec<[f64; 3]>,
    pub trials: usize,
    pub n_values: Vec<u32>,
    #[serde(default = "default_series1_alphas")]
    pub series1_alphas: Vec<f64>,
    #[serde(default = "default_series1_k0")]
    pub series1_k0: u32,
    pub weight_tuples: usize,
}

fn default_series1_alphas() -> Vec<f64> {
    vec![0.0, -3.0, -4.0]
}

fn default_series1_k0() -> u32 {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FellerParams {
    pub nu: f64,
    pub dt: f64,
    pub t: f64,
    pub n_modes: u32,
    pub alpha0: f64,
    pub c0: f64,
    pub alpha: f64,
    #[serde(default)]
    pub cutoff: Option<CutoffWindow>,
    pub functional: TestFunctional,
    pub h_values: Vec<f64>,
    pub samples: usize,
    pub x_amplitude: f64,
    pub x_decay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BelParams {
    pub nu: f64,
    pub dt: f64,
    pub t: f64,
    pub n_modes: u32,
    pub alpha0: f64,
    pub c0: f64,
    pub alpha: f64,
    pub r: f64,
    pub functional: TestFunctional,
    pub samples: usize,
    /// step of the central-difference oracle; 0 disables the comparison
    #[serde(default)]
    pub fd_eps: f64,
    pub x_amplitude: f64,
    pub x_decay: f64,
    #[serde(default)]
    pub linear_only: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Params {
    Simulate(SimulateParams),
    Couple(CoupleParams),
    Tails(TailsParams),
    Blowup(BlowupConfigParams),
    Inequalities(InequalitiesParams),
    Feller(FellerParams),
    Bel(BelParams),
}

impl Params {
    pub fn kind(&self) -> &'static str {
        match self {
            Params::Simulate(_) => "simulate",
            Params::Couple(_) => "couple",
            Params::Tails(_) => "tails",
            Params::Blowup(_) => "blowup",
            Params::Inequalities(_) => "inequalities",
            Params::Feller(_) => "feller",
            Params::Bel(_) => "bel",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// run directory name; defaults to `<kind>-<fingerprint prefix>`
    pub output: Option<String>,
    #[serde(flatten)]
    pub params: Params,
}

/// A named precondition failure.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub key: String,
    pub reason: String,
}

fn diag(key: &str, reason: impl Into<String>) -> Diagnostic {
    Diagnostic {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn check_window(alpha: f64, alpha0: f64, out: &mut Vec<Diagnostic>) {
    if !(alpha > 0.5 && alpha < 1.0 + 2.0 * alpha0) {
        out.push(diag(
            "alpha",
            format!(
                "must lie in (1/2, {}) for alpha0 = {alpha0}",
                1.0 + 2.0 * alpha0
            ),
        ));
    }
}

fn check_positive(name: &str, v: f64, out: &mut Vec<Diagnostic>) {
    if !(v > 0.0) {
        out.push(diag(name, "must be positive"));
    }
}

impl ExperimentConfig {
    /// All precondition violations for this config, empty when valid.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        match &self.params {
            Params::Simulate(p) => {
                check_positive("nu", p.nu, &mut d);
                check_positive("dt", p.dt, &mut d);
                check_positive("t_end", p.t_end, &mut d);
                check_positive("alpha0", p.alpha0, &mut d);
                if p.n_modes < 1 {
                    d.push(diag("n_modes", "must be at least 1"));
                }
                if let Some(c) = &p.cutoff {
                    check_window(c.alpha, p.alpha0, &mut d);
                    if c.r < 1.0 {
                        d.push(diag("cutoff.r", "must be at least 1"));
                    }
                }
            }
            Params::Couple(p) => {
                check_positive("nu", p.nu, &mut d);
                check_positive("dt", p.dt, &mut d);
                check_positive("t_end", p.t_end, &mut d);
                check_positive("alpha0", p.alpha0, &mut d);
                check_window(p.alpha, p.alpha0, &mut d);
                if p.r < 1.0 {
                    d.push(diag("r", "must be at least 1"));
                }
                if p.n_seeds == 0 {
                    d.push(diag("n_seeds", "must be at least 1"));
                }
            }
            Params::Tails(p) => {
                check_positive("nu", p.nu, &mut d);
                check_positive("eps", p.eps, &mut d);
                check_positive("alpha0", p.alpha0, &mut d);
                if p.k_values.is_empty() {
                    d.push(diag("k_values", "must not be empty"));
                }
                if p.samples == 0 {
                    d.push(diag("samples", "must be at least 1"));
                }
            }
            Params::Blowup(p) => {
                check_positive("nu", p.nu, &mut d);
                check_positive("dt", p.dt, &mut d);
                check_positive("horizon", p.horizon, &mut d);
                check_positive("alpha0", p.alpha0, &mut d);
                check_window(p.alpha, p.alpha0, &mut d);
                if (p.alpha - 1.5).abs() < 1e-12 {
                    d.push(diag(
                        "alpha",
                        "the 3/2 borderline exponent is not supported",
                    ));
                }
                if p.r < 1.0 {
                    d.push(diag("r", "must be at least 1"));
                }
                if p.t_grid.iter().any(|&t| t <= 0.0 || t > p.horizon) {
                    d.push(diag("t_grid", "times must lie in (0, horizon]"));
                }
            }
            Params::Inequalities(p) => {
                if p.triples.is_empty() {
                    d.push(diag("triples", "must not be empty"));
                }
                if p.trials == 0 {
                    d.push(diag("trials", "must be at least 1"));
                }
                if p.n_values.is_empty() {
                    d.push(diag("n_values", "must not be empty"));
                }
            }
            Params::Feller(p) => {
                check_positive("nu", p.nu, &mut d);
                check_positive("dt", p.dt, &mut d);
                check_positive("t", p.t, &mut d);
                check_positive("alpha0", p.alpha0, &mut d);
                check_window(p.alpha, p.alpha0, &mut d);
                if let Err(e) = p.functional.validate() {
                    d.push(diag("functional", e.to_string()));
                }
                if p.h_values.is_empty() {
                    d.push(diag("h_values", "must not be empty"));
                }
            }
            Params::Bel(p) => {
                check_positive("nu", p.nu, &mut d);
                check_positive("dt", p.dt, &mut d);
                check_positive("t", p.t, &mut d);
                check_positive("alpha0", p.alpha0, &mut d);
                check_positive("c0", p.c0, &mut d);
                check_window(p.alpha, p.alpha0, &mut d);
                if p.r < 1.0 {
                    d.push(diag("r", "must be at least 1"));
                }
                if let Err(e) = p.functional.validate() {
                    d.push(diag("functional", e.to_string()));
                }
            }
        }
        d
    }

    /// Canonical TOML rendering used for fingerprinting and round-trips.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(de_err)
    }

    pub fn fingerprint(&self) -> Result<String> {
        let text = self.to_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(hex::encode(hasher.finalize()))
    }
}

/// Parses and validates a config document; all violations are reported at
/// once, each naming the offending key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(de_err)?;
    parse_config_table(table)
}

fn parse_config_table(mut table: toml::Table) -> Result<ExperimentConfig> {
    let kind = match table.remove("kind") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(SnsError::Config("key `kind` must be a string".into())),
        None => return Err(SnsError::Config("missing key `kind`".into())),
    };
    let seed = match table.remove("seed") {
        Some(toml::Value::Integer(s)) if s >= 0 => s as u64,
        Some(_) => {
            return Err(SnsError::Config(
                "key `seed` must be a non-negative integer".into(),
            ))
        }
        None => return Err(SnsError::Config("missing key `seed`".into())),
    };
    let output = match table.remove("output") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(SnsError::Config("key `output` must be a string".into())),
        None => None,
    };
    let rest = toml::Value::Table(table);
    let params = match kind.as_str() {
        "simulate" => Params::Simulate(rest.try_into().map_err(de_err)?),
        "couple" => Params::Couple(rest.try_into().map_err(de_err)?),
        "tails" => Params::Tails(rest.try_into().map_err(de_err)?),
        "blowup" => Params::Blowup(rest.try_into().map_err(de_err)?),
        "inequalities" => Params::Inequalities(rest.try_into().map_err(de_err)?),
        "feller" => Params::Feller(rest.try_into().map_err(de_err)?),
        "bel" => Params::Bel(rest.try_into().map_err(de_err)?),
        other => {
            return Err(SnsError::Config(format!(
                "unknown experiment kind `{other}` (expected one of: {})",
                KINDS.join(", ")
            )))
        }
    };
    let config = ExperimentConfig {
        seed,
        output,
        params,
    };
    let diags = config.diagnostics();
    if !diags.is_empty() {
        let lines: Vec<String> = diags
            .iter()
            .map(|d| format!("{}: {}", d.key, d.reason))
            .collect();
        return Err(SnsError::Config(lines.join("; ")));
    }
    Ok(config)
}

/// Applies `key=value` overrides (dotted keys allowed) on top of a config
/// document, then re-validates.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text.parse().map_err(de_err)?;
    for ov in overrides {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| SnsError::Config(format!("override `{ov}` is not key=value")))?;
        let parsed = if let Ok(i) = value.parse::<i64>() {
            toml::Value::Integer(i)
        } else if let Ok(f) = value.parse::<f64>() {
            toml::Value::Float(f)
        } else if let Ok(b) = value.parse::<bool>() {
            toml::Value::Boolean(b)
        } else {
            toml::Value::String(value.to_string())
        };
        let mut cursor = &mut table;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            cursor = cursor
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| SnsError::Config(format!("`{part}` is not a table")))?;
        }
        cursor.insert(parts[parts.len() - 1].to_string(), parsed);
    }
    parse_config_table(table)
}

// ---------------------------------------------------------------------------
// registry

pub const KINDS: [&str; 7] = [
    "simulate",
    "couple",
    "tails",
    "blowup",
    "inequalities",
    "feller",
    "bel",
];

/// One-line summary per experiment kind.
pub fn list_experiments() -> Vec<(&'static str, &'static str)> {
    vec![
        ("simulate", "integrate one trajectory and record norms, energy ledger terms and snapshots"),
        ("couple", "run the cut-off and free systems on one driving path and compare up to the stopping time"),
        ("tails", "Monte Carlo tail of the running sup of the driving process, with a Gaussian-shape slope fit"),
        ("blowup", "stopping-time statistics against the algebraic safe horizon in R, with inclusion check"),
        ("inequalities", "lattice sweeps for the trilinear estimate, the convolution series and the weight-function bound"),
        ("feller", "semigroup continuity modulus under displacement halving with common random numbers"),
        ("bel", "probabilistic gradient of the regularized semigroup versus a central-difference oracle"),
    ]
}

/// Longer help text for one kind.
pub fn describe(kind: &str) -> Result<&'static str> {
    match kind {
        "simulate" => Ok("Integrates v = u - z pathwise with an exponential integrator, the driving \
            process sampled exactly per step. Optional norm cut-off on the nonlinearity; records \
            Sobolev norms, the kinetic/dissipation/work ledger and field snapshots. Checks covered: \
            divergence preservation, the pathwise energy balance, and first-exit detection."),
        "couple" => Ok("Runs the cut-off and the free system against the same driving path from the \
            same start inside the ball. Below the radius the cut-off factor is exactly 1, so the \
            two discrete trajectories must coincide up to the stopping time; the post-exit gap is \
            reported but unconstrained."),
        "tails" => Ok("Estimates P[sup_{s<=eps} ||z(s)||_beta >= K] over a threshold sweep and fits \
            log p against K^2/eps. A Gaussian-type tail shows as a negative slope that is stable \
            when eps is halved; Wilson intervals accompany every point."),
        "blowup" => Ok("Samples the first exit time tau of the cut-off solution started at norm R/3. \
            On paths whose driving sup stays below R/3, tau must exceed c' R^{-4/((2 alpha - 1) ^ 2)}; \
            the run fits the largest such c', re-counts violations (zero by construction), and \
            tabulates P[tau <= T] against R^2/T."),
        "inequalities" => Ok("Brute-force constants: the trilinear advection bound \
            <B(u,v),w> <= c ||u||_a ||v||_b ||w||_{c+1} maximized over random fields across lattice \
            cutoffs; exact lattice sums for the two convolution series; and the Beta/Gamma bound on \
            the mild-formulation weight integral checked by de-singularized quadrature."),
        "feller" => Ok("Tabulates |P_t phi(x+h) - P_t phi(x)| against ||h|| log(e/||h||) under \
            displacement halving, with both starts driven by common random numbers. A bounded ratio \
            across halvings is the discrete signature of the log-Lipschitz continuity modulus."),
        "bel" => Ok("Estimates the directional derivative of the cut-off semigroup as \
            (1/t) E[phi(u_t) * Ito-sum of <Q^{-1/2} tangent, dW>], reusing the Gaussian increments \
            that generated the driving path, and compares against common-random-number central \
            differences."),
        other => Err(SnsError::Config(format!("unknown experiment kind `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// manifest + runner

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub kind: String,
    pub fingerprint: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub aborted: Option<String>,
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

struct RunDir {
    staging: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.staging.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| SnsError::Serde(e.to_string()))
}

/// Runs a validated config and writes its outputs under `root`, atomically.
/// Returns the manifest; the run directory is `root/<name>` where `name` is
/// the config's `output` field or `<kind>-<fingerprint prefix>`.
pub fn run_experiment(config: &ExperimentConfig, root: &Path) -> Result<RunManifest> {
    let diags = config.diagnostics();
    if !diags.is_empty() {
        return Err(SnsError::Config(
            diags
                .iter()
                .map(|d| format!("{}: {}", d.key, d.reason))
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    let fingerprint = config.fingerprint()?;
    let name = config
        .output
        .clone()
        .unwrap_or_else(|| format!("{}-{}", config.params.kind(), &fingerprint[..12]));
    let final_dir = root.join(&name);
    let staging = root.join(format!(".staging-{}-{}", name, std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let started = chrono::Utc::now().to_rfc3339();

    let mut dir = RunDir {
        staging: staging.clone(),
        outputs: Vec::new(),
    };
    dir.write("config.toml", &config.to_toml()?)?;
    let run_result = dispatch(config, &mut dir);
    let aborted = match &run_result {
        Ok(()) => None,
        Err(SnsError::NumericAbort(msg)) => Some(msg.clone()),
        Err(_) => {
            let _ = fs::remove_dir_all(&staging);
            run_result?;
            unreachable!()
        }
    };
    let finished = chrono::Utc::now().to_rfc3339();
    let manifest = RunManifest {
        version: TOOL_VERSION.to_string(),
        kind: config.params.kind().to_string(),
        fingerprint,
        seed: config.seed,
        started,
        finished,
        outputs: dir.outputs.clone(),
        aborted,
    };
    fs::write(staging.join("manifest.json"), json_pretty(&manifest)?)?;
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir)?;
    }
    fs::rename(&staging, &final_dir)?;
    Ok(manifest)
}

fn dispatch(config: &ExperimentConfig, dir: &mut RunDir) -> Result<()> {
    match &config.params {
        Params::Simulate(p) => run_simulate(config.seed, p, dir),
        Params::Couple(p) => run_couple(config.seed, p, dir),
        Params::Tails(p) => run_tails(config.seed, p, dir),
        Params::Blowup(p) => run_blowup(config.seed, p, dir),
        Params::Inequalities(p) => run_inequalities(config.seed, p, dir),
        Params::Feller(p) => run_feller(config.seed, p, dir),
        Params::Bel(p) => run_bel(config.seed, p, dir),
    }
}

fn csv_from_rows<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| SnsError::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SnsError::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SnsError::Serde(e.to_string()))
}

fn run_simulate(seed: u64, p: &SimulateParams, dir: &mut RunDir) -> Result<()> {
    let modes = ModeSet::new(p.n_modes);
    let noise = NoiseSpec::new(p.alpha0, p.c0)?;
    let cutoff = match &p.cutoff {
        Some(w) => Some(CutoffSpec::new(w.alpha, w.r, p.alpha0)?),
        None => None,
    };
    let cfg = SimConfig {
        nu: p.nu,
        dt: p.dt,
        t_end: p.t_end,
        n_modes: p.n_modes,
        integrator: p.integrator,
        seed,
        linear_only: p.linear_only,
    };
    cfg.validate()?;
    let x = random_field(&modes, p.x_decay, p.x_amplitude, &mut stream_rng(seed, 0));
    let refine = match p.integrator {
        Integrator::ExponentialEuler => 1,
        Integrator::ExponentialMidpoint => 2,
    };
    let grid = uniform_grid(p.dt / refine as f64, cfg.steps() * refine);
    let z = sample_z_path(&modes, &grid, p.nu, &noise, &mut stream_rng(seed, 1))?;
    let mut alphas = p.record_alphas.clone();
    if let Some(c) = &cutoff {
        if !alphas.contains(&c.alpha) {
            alphas.push(c.alpha);
        }
    }
    let opts = RecordOptions {
        alphas: alphas.clone(),
        snapshot_every: p.snapshot_every,
    };
    let rec = simulate(&x, &cfg, cutoff.as_ref(), &z, &opts)?;

    // hand-rolled CSV: the norm columns depend on the requested indices
    let mut csv_text = String::from("t");
    for a in &alphas {
        csv_text.push_str(&format!(",u_norm_{a}"));
    }
    csv_text.push_str(",v_h,v_v,work\n");
    for (i, &t) in rec.times.iter().enumerate() {
        csv_text.push_str(&format!("{t}"));
        for series in &rec.u_norms {
            csv_text.push_str(&format!(",{}", series[i]));
        }
        csv_text.push_str(&format!(",{},{},{}\n", rec.v_h[i], rec.v_v[i], rec.work[i]));
    }
    dir.write("norms.csv", &csv_text)?;
    for (step, field) in &rec.snapshots {
        dir.write(&format!("field-{step:06}.json"), &field_to_json(field)?)?;
    }
    #[derive(Serialize)]
    struct Summary {
        tau: Option<f64>,
        aborted: bool,
        steps: usize,
        max_divergence_rel: f64,
    }
    let summary = Summary {
        tau: rec.tau,
        aborted: rec.aborted,
        steps: rec.times.len() - 1,
        max_divergence_rel: rec.final_v.max_divergence_rel(),
    };
    dir.write("summary.json", &json_pretty(&summary)?)?;
    if rec.aborted {
        return Err(SnsError::NumericAbort("trajectory diverged".into()));
    }
    Ok(())
}

fn run_couple(seed: u64, p: &CoupleParams, dir: &mut RunDir) -> Result<()> {
    let modes = ModeSet::new(p.n_modes);
    let noise = NoiseSpec::new(p.alpha0, p.c0)?;
    let cutoff = CutoffSpec::new(p.alpha, p.r, p.alpha0)?;
    let cfg = SimConfig {
        nu: p.nu,
        dt: p.dt,
        t_end: p.t_end,
        n_modes: p.n_modes,
        integrator: Integrator::ExponentialEuler,
        seed,
        linear_only: false,
    };
    cfg.validate()?;
    #[derive(Serialize)]
    struct Row {
        seed_stream: u64,
        tau: Option<f64>,
        sup_pre_tau: f64,
        sup_post_tau: f64,
        local_tol: f64,
        free_aborted: bool,
    }
    let mut rows = Vec::new();
    for s in 0..p.n_seeds {
        let x = random_field(&modes, p.x_decay, 1.0, &mut stream_rng(seed, 2 * s));
        let x = x.scaled((p.r / 3.0) / x.sobolev_norm(p.alpha));
        let grid = uniform_grid(p.dt, cfg.steps());
        let z = sample_z_path(
            &modes,
            &grid,
            p.nu,
            &noise,
            &mut stream_rng(seed, 2 * s + 1),
        )?;
        let rep = couple_and_compare(&x, &cfg, &cutoff, &z)?;
        rows.push(Row {
            seed_stream: s,
            tau: rep.tau,
            sup_pre_tau: rep.sup_pre_tau,
            sup_post_tau: rep.sup_post_tau,
            local_tol: rep.local_tol,
            free_aborted: rep.free_aborted,
        });
    }
    dir.write("couple.csv", &csv_from_rows(&rows)?)?;
    #[derive(Serialize)]
    struct Summary {
        n_seeds: u64,
        max_sup_pre_tau: f64,
        local_tol: f64,
        pass: bool,
    }
    let max_pre = rows.iter().map(|r| r.sup_pre_tau).fold(0.0, f64::max);
    let tol = rows.first().map(|r| r.local_tol).unwrap_or(0.0);
    let summary = Summary {
        n_seeds: p.n_seeds,
        max_sup_pre_tau: max_pre,
        local_tol: tol,
        pass: max_pre <= 10.0 * tol,
    };
    dir.write("summary.json", &json_pretty(&summary)?)?;
    Ok(())
}

fn run_tails(seed: u64, p: &TailsParams, dir: &mut RunDir) -> Result<()> {
    let modes = ModeSet::new(p.n_modes);
    let noise = NoiseSpec::new(p.alpha0, p.c0)?;
    let mut all_rows = Vec::new();
    let mut fits = Vec::new();
    let eps_values = if p.halve_eps {
        vec![p.eps, p.eps / 2.0]
    } else {
        vec![p.eps]
    };
    for (i, &eps) in eps_values.iter().enumerate() {
        let res = sup_norm_tail_mc(
            &modes,
            &noise,
            p.beta,
            eps,
            &p.k_values,
            p.samples,
            p.nu,
            p.refine,
            seed.wrapping_add(i as u64 * 1_000_003),
        )?;
        all_rows.extend(res.rows);
        fits.push(res.fit);
    }
    dir.write("tails.csv", &csv_from_rows(&all_rows)?)?;
    dir.write("summary.json", &json_pretty(&fits)?)?;
    Ok(())
}

fn run_blowup(seed: u64, p: &BlowupConfigParams, dir: &mut RunDir) -> Result<()> {
    let modes = ModeSet::new(p.n_modes);
    let params = BlowupParams {
        cutoff: CutoffSpec::new(p.alpha, p.r, p.alpha0)?,
        noise: NoiseSpec::new(p.alpha0, p.c0)?,
        nu: p.nu,
        dt: p.dt,
        horizon: p.horizon,
        samples: p.samples,
        seed,
    };
    let x = random_field(&modes, p.x_decay, 1.0, &mut stream_rng(seed, u64::MAX));
    let x = x.scaled((p.r / 3.0) / x.sobolev_norm(p.alpha));
    let res = blowup_mc(&x, &params, &p.t_grid)?;
    dir.write("blowup.csv", &csv_from_rows(&res.rows)?)?;
    dir.write("summary.json", &json_pretty(&res)?)?;
    Ok(())
}

fn run_inequalities(seed: u64, p: &InequalitiesParams, dir: &mut RunDir) -> Result<()> {
    let mut reports = Vec::new();
    for triple in &p.triples {
        for &n in &p.n_values {
            reports.push(trilinear_check(
                triple[0], triple[1], triple[2], p.trials, n, seed,
            )?);
        }
    }
    dir.write("trilinear.csv", &csv_from_rows(&reports)?)?;

    #[derive(Serialize)]
    struct SeriesRow {
        alpha: f64,
        k0: u32,
        sum: f64,
        bound_ratio: f64,
    }
    let mut series_rows = Vec::new();
    for &alpha in &p.series1_alphas {
        let mut k0 = 1u32;
        while k0 <= p.series1_k0 {
            series_rows.push(SeriesRow {
                alpha,
                k0,
                sum: series1(alpha, k0),
                bound_ratio: crate::lab::series1_bound_ratio(alpha, k0),
            });
            k0 *= 2;
        }
    }
    dir.write("series1.csv", &csv_from_rows(&series_rows)?)?;

    use rand::Rng;
    let mut rng = stream_rng(seed, 999);
    let t_grid: Vec<f64> = (1..=100).map(|i| i as f64 * 0.1).collect();
    let mut weight_reports = Vec::new();
    for _ in 0..p.weight_tuples {
        let x = rng.gen_range(0.05..0.9);
        let y = rng.gen_range(0.05..0.9);
        let delta = rng.gen_range(0.2..3.0);
        let eta = rng.gen_range(0.2..3.0);
        weight_reports.push(weight_bound_check(x, y, delta, eta, &t_grid)?);
    }
    dir.write("weight.csv", &csv_from_rows(&weight_reports)?)?;

    #[derive(Serialize)]
    struct Summary {
        trilinear_all_admissible_bounded: bool,
        weight_all_pass: bool,
    }
    let summary = Summary {
        trilinear_all_admissible_bounded: reports.iter().all(|r| r.empirical_constant.is_finite()),
        weight_all_pass: weight_reports.iter().all(|r| r.pass),
    };
    dir.write("summary.json", &json_pretty(&summary)?)?;
    Ok(())
}

fn run_feller(seed: u64, p: &FellerParams, dir: &mut RunDir) -> Result<()> {
    let modes = ModeSet::new(p.n_modes);
    let noise = NoiseSpec::new(p.alpha0, p.c0)?;
    let cutoff = match &p.cutoff {
        Some(w) => Some(CutoffSpec::new(w.alpha, w.r, p.alpha0)?),
        None => None,
    };
    let cfg = SimConfig {
        nu: p.nu,
        dt: p.dt,
        t_end: p.t,
        n_modes: p.n_modes,
        integrator: Integrator::ExponentialEuler,
        seed,
        linear_only: false,
    };
    cfg.validate()?;
    let x = random_field(
        &modes,
        p.x_decay,
        p.x_amplitude,
        &mut stream_rng(seed, u64::MAX),
    );
    let dir_field = random_field(&modes, p.x_decay, 1.0, &mut stream_rng(seed, u64::MAX - 1));
    let rows = feller_modulus(
        &p.functional,
        &x,
        &dir_field,
        &p.h_values,
        &cfg,
        cutoff.as_ref(),
        &noise,
        p.alpha,
        p.samples,
        seed,
    )?;
    dir.write("modulus.csv", &csv_from_rows(&rows)?)?;
    #[derive(Serialize)]
    struct Summary {
        max_ratio: f64,
        first_ratio: f64,
    }
    let summary = Summary {
        max_ratio: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
        first_ratio: rows.first().map(|r| r.ratio).unwrap_or(0.0),
    };
    dir.write("summary.json", &json_pretty(&summary)?)?;
    Ok(())
}

fn run_bel(seed: u64, p: &BelParams, dir: &mut RunDir) -> Result<()> {
    let modes = ModeSet::new(p.n_modes);
    let noise = NoiseSpec::new(p.alpha0, p.c0)?;
    let cutoff = CutoffSpec::new(p.alpha, p.r, p.alpha0)?;
    let cfg = SimConfig {
        nu: p.nu,
        dt: p.dt,
        t_end: p.t,
        n_modes: p.n_modes,
        integrator: Integrator::ExponentialEuler,
        seed,
        linear_only: p.linear_only,
    };
    cfg.validate()?;
    let x = random_field(
        &modes,
        p.x_decay,
        p.x_amplitude,
        &mut stream_rng(seed, u64::MAX),
    );
    let h = random_field(&modes, p.x_decay, 1.0, &mut stream_rng(seed, u64::MAX - 1));
    let bel = bel_gradient(
        &p.functional,
        &x,
        &h,
        &cfg,
        &cutoff,
        &noise,
        p.samples,
        seed,
    )?;
    #[derive(Serialize)]
    struct Summary {
        bel_value: f64,
        bel_se: f64,
        fd_value: Option<f64>,
        fd_se: Option<f64>,
        combined_se: Option<f64>,
        within_three_se: Option<bool>,
    }
    let mut summary = Summary {
        bel_value: bel.value,
        bel_se: bel.se,
        fd_value: None,
        fd_se: None,
        combined_se: None,
        within_three_se: None,
    };
    if p.fd_eps > 0.0 {
        let fd = crn_central_difference(
            &p.functional,
            &x,
            &h,
            p.fd_eps,
            &cfg,
            &cutoff,
            &noise,
            p.samples,
            seed,
        )?;
        let combined = (bel.se * bel.se + fd.se * fd.se).sqrt();
        summary.fd_value = Some(fd.value);
        summary.fd_se = Some(fd.se);
        summary.combined_se = Some(combined);
        summary.within_three_se = Some((bel.value - fd.value).abs() <= 3.0 * combined);
    }
    dir.write("summary.json", &json_pretty(&summary)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_SIMULATE: &str = r#"
kind = "simulate"
seed = 3
nu = 1.0
dt = 0.05
t_end = 0.2
n_modes = 2
alpha0 = 0.25
c0 = 0.4
x_amplitude = 0.3
x_decay = 1.0
"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(MINIMAL_SIMULATE).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg.to_toml().unwrap(), back.to_toml().unwrap());
        assert_eq!(cfg.fingerprint().unwrap(), back.fingerprint().unwrap());
    }

    #[test]
    fn out_of_window_alpha_is_rejected_by_name() {
        let text = format!("{MINIMAL_SIMULATE}\n[cutoff]\nalpha = 0.4\nr = 5.0\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL_SIMULATE}\nfoo = 1\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
    }

    #[test]
    fn overrides_apply_dotted_paths() {
        let text = format!("{MINIMAL_SIMULATE}\n[cutoff]\nalpha = 1.2\nr = 5.0\n");
        let cfg =
            parse_config_with_overrides(&text, &["cutoff.r=7.0".to_string(), "seed=9".to_string()])
                .unwrap();
        assert_eq!(cfg.seed, 9);
        match &cfg.params {
            Params::Simulate(p) => assert_eq!(p.cutoff.as_ref().unwrap().r, 7.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn fingerprint_tracks_every_field() {
        let a = parse_config(MINIMAL_SIMULATE).unwrap();
        let b = parse_config_with_overrides(MINIMAL_SIMULATE, &["dt=0.025".to_string()]).unwrap();
        assert_ne!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    }

    #[test]
    fn registry_covers_all_kinds() {
        let listed: Vec<&str> = list_experiments().iter().map(|(k, _)| *k).collect();
        for k in KINDS {
            assert!(listed.contains(&k));
            assert!(describe(k).is_ok());
        }
        assert!(describe("nope").is_err());
    }

    #[test]
    fn simulate_run_is_deterministic_and_atomic() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = parse_config(MINIMAL_SIMULATE).unwrap();
        let m1 = run_experiment(&cfg, tmp.path()).unwrap();
        let dir1 = tmp
            .path()
            .join(format!("simulate-{}", &m1.fingerprint[..12]));
        let norms1 = fs::read(dir1.join("norms.csv")).unwrap();
        let m2 = run_experiment(&cfg, tmp.path()).unwrap();
        assert_eq!(m1.fingerprint, m2.fingerprint);
        let norms2 = fs::read(dir1.join("norms.csv")).unwrap();
        assert_eq!(norms1, norms2);
        // no staging leftovers
        let leftovers: Vec<_> = fs::read_dir(tmp.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with(".staging"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
