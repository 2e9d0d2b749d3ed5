//! Experiment driver behind the `torus-kam` binary: one JSON config in,
//! JSON/CSV reports out, exit codes by failure class.
//!
//! Exit codes: `0` success, `1` configuration/input errors (including a
//! failed commutation check), `2` resonance, `3` no convergence or other
//! numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::automorphy::ConstantFactor;
use crate::diophantine::{self, DiophantineFit};
use crate::error::{Error, Result};
use crate::instance::{self, Instance, InstanceShape};
use crate::kam::{self, KamParams, KamReport, OverflowPolicy};
use crate::lattice::{DomainSpec, Lattice};
use crate::linalg::{self, c, CMatrix};
use crate::series::LinearDeck;

#[derive(Debug, Parser)]
#[command(name = "torus-kam", version, about = "Linearize commuting deck transformations near a complex torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON input (an experiment config; a constant factor for `trivialize`;
    /// a linearize report for `report`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the main output (defaults to the config's output paths,
    /// then stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `instance.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress logging.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate (or load) an instance and run the Newton/KAM iteration.
    Linearize,
    /// Non-resonance scan, Diophantine fit and splitting check of the deck.
    CheckDiophantine,
    /// Trivialize a constant factor of automorphy over the cylinder.
    Trivialize,
    /// Generate an instance and write it as JSON.
    GenInstance,
    /// Re-render the CSV table and a summary from a linearize report.
    Report,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    /// `n × d` vertical multipliers as `[re, im]` pairs.
    #[serde(default, with = "opt_matrix", skip_serializing_if = "Option::is_none")]
    pub mu: Option<CMatrix>,
    /// All `2n` generator images of a Hermitian flat bundle.
    #[serde(default, with = "opt_matrix_vec", skip_serializing_if = "Option::is_none")]
    pub hermitian: Option<Vec<CMatrix>>,
    /// Rank for random real multipliers when neither of the above is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceMode {
    #[default]
    Conjugated,
    PlantedResonance,
    CustomFile,
}

fn default_pert_norm() -> f64 {
    1e-3
}
fn default_q_max() -> u32 {
    16
}
fn default_p_max() -> u32 {
    12
}
fn default_terms() -> usize {
    2
}
fn default_n_scan() -> u32 {
    12
}
fn default_tau() -> f64 {
    2.0
}
fn default_q0() -> u32 {
    1
}
fn default_k_max() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default)]
    pub mode: InstanceMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pert_norm")]
    pub pert_norm: f64,
    #[serde(rename = "Q_max", default = "default_q_max")]
    pub q_max: u32,
    #[serde(rename = "P_max", default = "default_p_max")]
    pub p_max: u32,
    #[serde(default = "default_terms")]
    pub terms_per_component: usize,
    /// Instance JSON for `custom-file` mode (relative to the config file).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Planted `P` (default `e_1`) and vertical index `j` (default 0).
    #[serde(rename = "planted_P", default, skip_serializing_if = "Option::is_none")]
    pub planted_p: Option<Vec<i32>>,
    #[serde(default)]
    pub planted_j: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiophConfig {
    #[serde(rename = "N_scan", default = "default_n_scan")]
    pub n_scan: u32,
    #[serde(default = "default_tau")]
    pub tau_exp: f64,
}

impl Default for DiophConfig {
    fn default() -> Self {
        DiophConfig { n_scan: default_n_scan(), tau_exp: default_tau() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KamConfig {
    pub delta0: f64,
    pub eps0: f64,
    pub r0: f64,
    /// Defaults to `3(tau_exp + n + d)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_exp: Option<f64>,
    #[serde(default = "default_q0")]
    pub q0: u32,
    #[serde(rename = "K_max", default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub overflow_policy: OverflowPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commute_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    /// Where to write the composite map `Φ − Id` as series JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: Lattice,
    #[serde(default)]
    pub bundle: BundleConfig,
    pub instance: InstanceConfig,
    #[serde(default)]
    pub dioph: DiophConfig,
    pub kam: KamConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory the config was read from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

mod opt_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Option<CMatrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
        a.as_ref().map(linalg::matrix_to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<CMatrix>, D::Error> {
        Option::<Vec<Vec<[f64; 2]>>>::deserialize(d)?
            .map(|r| linalg::matrix_from_rows(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

mod opt_matrix_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Option<Vec<CMatrix>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        a.as_ref().map(|v| v.iter().map(linalg::matrix_to_rows).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<CMatrix>>, D::Error> {
        Option::<Vec<Vec<Vec<[f64; 2]>>>>::deserialize(d)?
            .map(|v| v.iter().map(|m| linalg::matrix_from_rows(m).map_err(serde::de::Error::custom)).collect())
            .transpose()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.kam.eps0, self.kam.r0)
    }

    pub fn shape(&self) -> Result<InstanceShape> {
        let i = &self.instance;
        if !(i.pert_norm >= 0.0) || i.terms_per_component == 0 {
            return Err(Error::Config("need pert_norm >= 0 and terms_per_component >= 1".into()));
        }
        Ok(InstanceShape {
            q_max: i.q_max,
            p_max: i.p_max,
            pert_norm: i.pert_norm,
            terms_per_component: i.terms_per_component,
            dom: self.domain()?,
        })
    }

    /// Vertical multipliers: explicit, from a Hermitian flat bundle, or drawn
    /// (real, in `[0.5, 2]`) from the instance seed.
    pub fn vertical_multipliers(&self, rng: &mut ChaCha8Rng) -> Result<CMatrix> {
        let n = self.lattice.n();
        let b = &self.bundle;
        match (&b.mu, &b.hermitian) {
            (Some(_), Some(_)) => Err(Error::Config("bundle: give either mu or hermitian, not both".into())),
            (Some(mu), None) => {
                if mu.nrows() != n || mu.ncols() == 0 {
                    return Err(Error::Config(format!("bundle.mu must be {n} x d")));
                }
                Ok(mu.clone())
            }
            (None, Some(rho)) => {
                let factor = ConstantFactor::new(self.lattice.clone(), rho.clone())?;
                let frame = factor.trivialize_over_cylinder()?.factor.hermitian_frame()?;
                Ok(frame.mu.map(|x| c(x, 0.0)))
            }
            (None, None) => {
                let d = b.d.ok_or_else(|| Error::Config("bundle needs mu, hermitian or d".into()))?;
                Ok(instance::random_real_mu(n, d, rng))
            }
        }
    }

    pub fn kam_params(&self, fit: &DiophantineFit, n: usize, d: usize) -> KamParams {
        let k = &self.kam;
        let mut p = KamParams::new(k.delta0, k.eps0, k.r0, fit, n, d);
        if let Some(mu) = k.mu_exp {
            p.mu_exp = mu;
        }
        p.q0 = k.q0;
        p.k_max = k.k_max;
        p.overflow_policy = k.overflow_policy;
        if let Some(t) = k.commute_tol {
            p.commute_tol = t;
        }
        p
    }
}

/// Builds the instance the config describes. Same config and seed give a
/// bit-identical instance.
pub fn gen_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.instance.seed);
    let n = cfg.lattice.n();
    match cfg.instance.mode {
        InstanceMode::CustomFile => {
            let file = cfg.instance.file.as_ref().ok_or_else(|| Error::Config("custom-file mode needs instance.file".into()))?;
            let text = fs::read_to_string(cfg.resolve(file))?;
            let inst: Instance = serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid instance file: {e}")))?;
            if linalg::rel_diff(inst.system.lattice().e_prime(), cfg.lattice.e_prime()) > 1e-12 {
                return Err(Error::Config("instance file lattice differs from the config lattice".into()));
            }
            Ok(inst)
        }
        InstanceMode::Conjugated => {
            let mu = cfg.vertical_multipliers(&mut rng)?;
            instance::conjugated(cfg.lattice.clone(), mu, &cfg.shape()?, &mut rng)
        }
        InstanceMode::PlantedResonance => {
            let mu = cfg.vertical_multipliers(&mut rng)?;
            let p = cfg.instance.planted_p.clone().unwrap_or_else(|| (0..n).map(|k| (k == 0) as i32).collect());
            instance::planted(cfg.lattice.clone(), mu, &p, cfg.instance.planted_j, &cfg.shape()?)
        }
    }
}

/// Exit code for a failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ResonantDivisor { .. } | Error::ResonantInput { .. } => 2,
        Error::NoConvergence { .. }
        | Error::NumericalBreakdown(_)
        | Error::SingularMatrix { .. }
        | Error::NotSingleEigenvalue { .. }
        | Error::PBandOverflow { .. } => 3,
        _ => 1,
    }
}

/// Machine-readable error object: `{"error": {"kind", "message", ...}}`.
pub fn error_object(e: &Error) -> Value {
    let kind = match e {
        Error::SingularLattice { .. } => "singular_lattice",
        Error::NotCommuting { .. } => "not_commuting",
        Error::NumericalBreakdown(_) => "numerical_breakdown",
        Error::SingularMatrix { .. } => "singular_matrix",
        Error::NotSingleEigenvalue { .. } => "not_single_eigenvalue",
        Error::ZeroHCoordinate(_) => "zero_h_coordinate",
        Error::PBandOverflow { .. } => "p_band_overflow",
        Error::ResonantInput { .. } => "resonant_input",
        Error::NotUnimodular { .. } => "not_unimodular",
        Error::ResonantDivisor { .. } => "resonant_divisor",
        Error::IncompatibleRhs { .. } => "incompatible_rhs",
        Error::InvalidParams(_) => "invalid_params",
        Error::CommutationDefectTooLarge { .. } => "commutation_defect_too_large",
        Error::NoConvergence { .. } => "no_convergence",
        Error::Shape(_) => "shape",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    let mut obj = json!({ "kind": kind, "message": e.to_string(), "exit_code": exit_code(e) });
    let extra = match e {
        Error::ResonantDivisor { p, q, target, value } => json!({ "witness": { "P": p, "Q": q, "target": target, "value": value } }),
        Error::ResonantInput { p, q, target } => json!({ "witness": { "P": p, "Q": q, "target": target } }),
        Error::IncompatibleRhs { p, q } => json!({ "witness": { "P": p, "Q": q } }),
        Error::CommutationDefectTooLarge { i, j, defect, tolerance } => {
            json!({ "generators": [i, j], "defect": defect, "tolerance": tolerance })
        }
        Error::NoConvergence { steps, residual, report } => json!({ "steps": steps, "residual": residual, "report": report }),
        Error::PBandOverflow { dropped_mass } => json!({ "dropped_mass": dropped_mass }),
        _ => json!({}),
    };
    if let (Some(o), Value::Object(x)) = (obj.as_object_mut(), extra) {
        o.extend(x);
    }
    json!({ "error": obj })
}

/// What a command produced: the JSON document and any side files.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub document: Value,
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn emit(target: Option<&Path>, v: &Value) -> Result<()> {
    match target {
        Some(p) => write_json(p, v),
        None => stdout_text(&format!("{}\n", serde_json::to_string_pretty(v)?)),
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn stdout_text(s: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(s.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = args.seed {
        cfg.instance.seed = s;
    }
    Ok(cfg)
}

fn instance_summary(cfg: &ExperimentConfig, inst: &Instance) -> Value {
    json!({
        "mode": cfg.instance.mode,
        "seed": cfg.instance.seed,
        "n": inst.system.n(),
        "d": inst.system.d(),
        "Q_max": inst.system.q_max(),
        "P_max": inst.system.p_max(),
        "initial_v_min": inst.system.v_min(),
        "planted": inst.planted,
    })
}

/// Runs `linearize`, returning the report document (or the error together
/// with whatever partial document exists).
pub fn linearize(cfg: &ExperimentConfig) -> std::result::Result<(Value, KamReport, crate::series::TaylorLaurentSeries), (Error, Value)> {
    let start = Instant::now();
    let mut doc = json!({});
    let fail = |e: Error, mut doc: Value| {
        doc["status"] = json!("failed");
        doc["error"] = error_object(&e)["error"].clone();
        (e, doc)
    };
    let inst = match gen_instance(cfg) {
        Ok(i) => i,
        Err(e) => return Err(fail(e, doc)),
    };
    doc["instance"] = instance_summary(cfg, &inst);
    let sys = &inst.system;
    let fit = match diophantine::diophantine_fit(sys.linear(), cfg.dioph.n_scan, cfg.dioph.tau_exp) {
        Ok(f) => f,
        Err(e) => return Err(fail(e, doc)),
    };
    doc["dioph"] = json!(fit);
    let params = cfg.kam_params(&fit, sys.n(), sys.d());
    doc["params"] = json!(params);
    let (phi, report) = match kam::run(sys, &params) {
        Ok(x) => x,
        Err(e) => return Err(fail(e, doc)),
    };
    let dom = report.final_domain_original;
    let sampled = kam::sampled_pointwise_defect(&phi, sys, dom, 100, 0).unwrap_or(f64::NAN);
    doc["status"] = json!("converged");
    doc["kam"] = json!(report);
    doc["verify"] = json!({
        "conjugacy_defect": report.conjugacy_defect,
        "sampled_pointwise_defect": sampled,
        "domain": dom,
    });
    if let Some(g) = &inst.phi_true {
        let diff = phi.sub(g).map(|d| {
            d.terms().iter().flat_map(|(_, z)| z.iter().map(|x| x.norm())).fold(0.0, f64::max)
        });
        doc["phi_true_max_coeff_diff"] = json!(diff.ok());
    }
    doc["metadata"] = json!({ "elapsed_seconds": start.elapsed().as_secs_f64() });
    Ok((doc, report, phi))
}

fn cmd_linearize(args: &CommonArgs) -> Result<Outcome> {
    let cfg = load_config(args)?;
    let report_path = args.out.clone().or(cfg.output.report_path.as_ref().map(|p| cfg.resolve(p)));
    match linearize(&cfg) {
        Ok((doc, report, phi)) => {
            emit(report_path.as_deref(), &doc)?;
            if let Some(p) = &cfg.output.csv_path {
                fs::write(cfg.resolve(p), report.to_csv())?;
            }
            if let Some(p) = &cfg.output.phi_path {
                write_json(&cfg.resolve(p), &serde_json::to_value(&phi)?)?;
            }
            log::info!("converged in {} rows, dilation {:e}", report.rows.len(), report.dilation);
            Ok(Outcome { code: 0, document: doc })
        }
        Err((e, doc)) => {
            if let (Error::NoConvergence { report, .. }, Some(p)) = (&e, &cfg.output.csv_path) {
                fs::write(cfg.resolve(p), report.to_csv())?;
            }
            emit(report_path.as_deref(), &doc)?;
            log::error!("{e}");
            Ok(Outcome { code: exit_code(&e), document: doc })
        }
    }
}

fn cmd_check_diophantine(args: &CommonArgs) -> Result<Outcome> {
    let cfg = load_config(args)?;
    let inst = gen_instance(&cfg)?;
    let deck: &LinearDeck = inst.system.linear();
    let scan = diophantine::nonresonance_scan(deck, cfg.dioph.n_scan);
    let fit = diophantine::diophantine_fit(deck, cfg.dioph.n_scan, cfg.dioph.tau_exp);
    let split = diophantine::splitting_divisor_check(deck, cfg.dioph.n_scan, cfg.dioph.tau_exp);
    let ok = scan.ok && fit.is_ok();
    let doc = json!({
        "nonresonant": ok,
        "scan": scan,
        "fit": fit.as_ref().ok(),
        "fit_error": fit.as_ref().err().map(error_object),
        "splitting": split,
    });
    emit(args.out.as_deref(), &doc)?;
    Ok(Outcome { code: if ok { 0 } else { 2 }, document: doc })
}

fn cmd_trivialize(args: &CommonArgs) -> Result<Outcome> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let text = fs::read_to_string(path)?;
    let factor: ConstantFactor = serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid constant factor: {e}")))?;
    let triv = factor.trivialize_over_cylinder()?;
    let n = factor.lattice().n();
    let d = factor.rank();
    let id = CMatrix::identity(d, d);
    let horizontal_defect = triv.factor.generators()[..n].iter().map(|m| linalg::norm_inf(&(m - &id))).fold(0.0, f64::max);
    let frame = triv.factor.hermitian_frame().ok();
    let doc = json!({
        "logs": triv.logs.iter().map(linalg::matrix_to_rows).collect::<Vec<_>>(),
        "trivialized": triv.factor,
        "horizontal_defect": horizontal_defect,
        "hermitian_mu": frame.as_ref().map(|f| (0..f.mu.nrows()).map(|j| f.mu.row(j).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>()),
    });
    emit(args.out.as_deref(), &doc)?;
    Ok(Outcome { code: 0, document: doc })
}

fn cmd_gen_instance(args: &CommonArgs) -> Result<Outcome> {
    let cfg = load_config(args)?;
    let inst = gen_instance(&cfg)?;
    let doc = serde_json::to_value(&inst)?;
    emit(args.out.as_deref(), &doc)?;
    Ok(Outcome { code: 0, document: doc })
}

fn cmd_report(args: &CommonArgs) -> Result<Outcome> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config("--config <report.json> is required".into()))?;
    let doc: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let kam_doc = doc
        .get("kam")
        .or_else(|| doc.pointer("/error/report"))
        .ok_or_else(|| Error::Config("document has no KAM report".into()))?;
    let report: KamReport = serde_json::from_value(kam_doc.clone())?;
    let csv = report.to_csv();
    match &args.out {
        Some(p) => fs::write(p, &csv)?,
        None => stdout_text(&csv)?,
    }
    let last = report.rows.last();
    let summary = json!({
        "converged": report.converged,
        "rows": report.rows.len(),
        "final_residual": last.map(|r| r.residual_bound),
        "final_v_min": last.map(|r| r.residual_vmin),
        "dilation": report.dilation,
        "conjugacy_defect": report.conjugacy_defect,
    });
    if !args.quiet {
        eprintln!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(Outcome { code: 0, document: summary })
}

/// Runs one command. Failures before any output exist are reported as an
/// error object on stdout.
pub fn execute(cli: &Cli) -> Outcome {
    let res = match cli.command {
        Command::Linearize => cmd_linearize(&cli.common),
        Command::CheckDiophantine => cmd_check_diophantine(&cli.common),
        Command::Trivialize => cmd_trivialize(&cli.common),
        Command::GenInstance => cmd_gen_instance(&cli.common),
        Command::Report => cmd_report(&cli.common),
    };
    res.unwrap_or_else(|e| {
        let doc = error_object(&e);
        let _ = stdout_text(&format!("{}\n", serde_json::to_string_pretty(&doc).unwrap_or_default()));
        Outcome { code: exit_code(&e), document: doc }
    })
}
