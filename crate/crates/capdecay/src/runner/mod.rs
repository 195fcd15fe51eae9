//! Config-driven experiment pipeline: one JSON description in, a
//! deterministic bundle of CSV and JSON reports out.
//!
//! A run walks a fixed stage order: geometry, capacity, spectral,
//! profiles, estimates, pde, verify.  Failures are captured per stage
//! and the bundle is written anyway; the manifest records what is
//! missing.  Only an invalid config or filesystem trouble aborts the
//! run as a whole.
//!
//! Identical configs and seeds produce byte-identical bundles.

use crate::capacity::{
    check_capacity_laws, cone_condition, random_law_cases, ConeConditionReport, LawReport,
    LawTolerances,
};
use crate::error::{Error, Result};
use crate::estimates::{
    bound_curve, capacity_lambda, f_catalog, lambda_variant, CatalogOutcome, CatalogParams,
    DecayShape, EstimateOptions, EstimateReport, EstimateVerdict, ExampleId, Family, TheoremId,
    VariantOptions,
};
use crate::fit::fit_loglog;
use crate::geometry::{DomainKind, DomainSpec};
use crate::pde::{
    measure_m, solve as solve_pde, verify_bound, BoundVerdict, BoundaryData, DecayMeasurement,
    MarginRow, ProblemInstance, SolveOptions, VerifyOptions,
};
use crate::profiles::{
    build_shell_ladder, d_profile_from, geometric_ladder, nearly, q_profile_from,
    shell_diam_profile_from, Coefficient, ExponentConfig, Profile, ShellProfileOptions,
};
use crate::spectral::{lambda_profile, LambdaProfileOptions};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Version of the config schema accepted by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// The exponent pair of the equation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub alpha: f64,
}

/// Method parameters shared by the profile builders and estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Method {
    /// Shell aspect: rung `r` covers `(r/theta, r*theta)`.
    pub theta: f64,
    /// Capacity-ratio threshold of the essential inner diameter.
    pub epsilon: f64,
    /// Relative radius of the capacity ladders around boundary points.
    pub delta: f64,
    /// Additive margin for the integrability index rules.
    pub nu_margin: f64,
    /// Decay constants swept by the linear-absorption bounds; the
    /// strongest resulting bound is kept.
    pub k_grid: Vec<f64>,
}

impl Default for Method {
    fn default() -> Self {
        Method {
            theta: 2.0,
            epsilon: 0.1,
            delta: 0.1,
            nu_margin: 1.0,
            k_grid: vec![1.0],
        }
    }
}

/// Radius ladder description; rungs are spaced geometrically.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub rungs: usize,
}

/// Grid resolutions of the individual stages.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// Cells around the full circle in the section meshes.
    pub angular_cells: usize,
    /// Shell grids: cells per rung radius; `None` picks a default by
    /// dimension.
    pub shell_cells: Option<usize>,
    /// Annular condensers: cells per unit radius.
    pub condenser_cells: usize,
    /// Dirichlet solver: cells per outer radius.
    pub pde_cells: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            angular_cells: 256,
            shell_cells: None,
            condenser_cells: 20,
            pde_cells: 48,
        }
    }
}

/// Request for the Dirichlet cross-check; presence enables the stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeCheck {
    pub boundary: BoundaryData,
    /// Constant subsolution forcing, `>= 0`.
    pub forcing: f64,
}

impl Default for PdeCheck {
    fn default() -> Self {
        PdeCheck {
            boundary: BoundaryData::FirstHarmonic,
            forcing: 0.0,
        }
    }
}

/// Request for the randomized capacity-law suite.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawSuite {
    pub cases: usize,
}

impl Default for LawSuite {
    fn default() -> Self {
        LawSuite { cases: 12 }
    }
}

/// One experiment: a domain, an equation, and the reports to produce.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub domain: DomainSpec,
    pub coefficient: Coefficient,
    pub exponents: Exponents,
    #[serde(default)]
    pub method: Method,
    pub ladder: LadderSpec,
    #[serde(default)]
    pub resolution: Resolution,
    /// Bound ids to evaluate; empty gives a profiles-only bundle.
    #[serde(default)]
    pub theorems: Vec<TheoremId>,
    #[serde(default)]
    pub pde: Option<PdeCheck>,
    #[serde(default)]
    pub capacity_laws: Option<LawSuite>,
    /// Default output directory; a caller-supplied one wins.
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    /// Full config validation; everything a run needs is checked here,
    /// so a validated config only fails on numerics or filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}; this build reads {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.name.trim().is_empty() {
            return Err(Error::Config("experiment name must not be empty".into()));
        }
        if matches!(self.domain.kind, DomainKind::CustomOracle(_)) {
            return Err(Error::Config(
                "custom domain oracles cannot be bundled; use the library API directly".into(),
            ));
        }
        if matches!(self.coefficient, Coefficient::CustomOracle(_)) {
            return Err(Error::Config(
                "custom coefficient oracles cannot be bundled; use the library API directly".into(),
            ));
        }
        self.domain.validate()?;
        self.coefficient.validate()?;
        self.exponent_config().validate()?;
        let LadderSpec { r_min, r_max, rungs } = self.ladder;
        if rungs < 2 {
            return Err(Error::Config(format!("ladder needs at least 2 rungs, got {rungs}")));
        }
        if !(r_min > 0.0 && r_min < r_max && r_max < self.domain.outer_radius) {
            return Err(Error::Config(format!(
                "ladder [{r_min}, {r_max}] must sit strictly inside (0, {})",
                self.domain.outer_radius
            )));
        }
        if self.method.k_grid.is_empty() {
            return Err(Error::Config("k_grid must not be empty".into()));
        }
        for &k in &self.method.k_grid {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::Config(format!("k_grid entries must be positive, got {k}")));
            }
        }
        let res = self.resolution;
        if res.angular_cells < 8 || res.condenser_cells < 8 || res.pde_cells < 8 {
            return Err(Error::Config(
                "resolutions must be at least 8 cells (angular, condenser, pde)".into(),
            ));
        }
        if let Some(c) = res.shell_cells {
            if c < 4 {
                return Err(Error::Config(format!("shell_cells must be at least 4, got {c}")));
            }
        }
        for (i, id) in self.theorems.iter().enumerate() {
            if self.theorems[..i].contains(id) {
                return Err(Error::Config(format!("duplicate theorem id {id}")));
            }
        }
        if let Some(pde) = &self.pde {
            if self.domain.n != 2 {
                return Err(Error::Config(format!(
                    "the pde cross-check is planar; domain has n = {}",
                    self.domain.n
                )));
            }
            if !(pde.forcing >= 0.0) || !pde.forcing.is_finite() {
                return Err(Error::Config(format!(
                    "pde forcing must be a nonnegative number, got {}",
                    pde.forcing
                )));
            }
        }
        if let Some(laws) = &self.capacity_laws {
            if laws.cases == 0 {
                return Err(Error::Config("capacity_laws.cases must be positive".into()));
            }
        }
        Ok(())
    }

    fn exponent_config(&self) -> ExponentConfig {
        ExponentConfig {
            p: self.exponents.p,
            alpha: self.exponents.alpha,
            theta: self.method.theta,
            eps: self.method.epsilon,
            delta: self.method.delta,
            nu_margin: self.method.nu_margin,
        }
    }
}

/// Per-stage record in the bundle manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    /// Bundle-relative paths written by the stage.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Skipped { reason: String },
    Failed { error: String },
}

/// Index of one produced bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    /// True when no stage failed (skipped stages are fine).
    pub fn is_complete(&self) -> bool {
        !self.stages.iter().any(|s| matches!(s.status, StageStatus::Failed { .. }))
    }

    pub fn failed_stages(&self) -> Vec<&StageRecord> {
        self.stages
            .iter()
            .filter(|s| matches!(s.status, StageStatus::Failed { .. }))
            .collect()
    }
}

/// Handle to a finished (possibly partial) bundle.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

enum StageOutcome {
    Done(Vec<String>),
    Skipped(String),
}

enum IdOutcome {
    Report(Box<EstimateReport>),
    Failed(String),
}

struct IdResult {
    id: TheoremId,
    outcome: IdOutcome,
}

#[derive(Default)]
struct PipelineState {
    ladder: Vec<f64>,
    cone: Option<ConeConditionReport>,
    laws: Option<LawReport>,
    lambda: Option<Profile>,
    lambda_variant: Option<Profile>,
    lambda_capacity: Option<Profile>,
    diam: Option<Profile>,
    thinness: Option<Profile>,
    q: Option<Profile>,
    estimates: Vec<IdResult>,
    measurement: Option<DecayMeasurement>,
    verdicts: Vec<(TheoremId, BoundVerdict)>,
}

fn write_text(out_dir: &Path, rel: &str, text: &str) -> Result<()> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(out_dir: &Path, rel: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(out_dir, rel, &text)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Runs the full pipeline into `out_dir` and writes the manifest last.
///
/// The seed only feeds the randomized capacity-law suite; every other
/// stage is deterministic by construction.
pub fn run(config: &ExperimentConfig, out_dir: &Path, seed: u64) -> Result<RunBundle> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    write_json(out_dir, "config.json", config)?;
    let mut state = PipelineState {
        ladder: geometric_ladder(config.ladder.r_min, config.ladder.r_max, config.ladder.rungs)?,
        ..PipelineState::default()
    };
    let mut stages = Vec::new();
    let record = |stages: &mut Vec<StageRecord>, name: &str, r: Result<StageOutcome>| {
        let (status, outputs) = match r {
            Ok(StageOutcome::Done(outputs)) => (StageStatus::Completed, outputs),
            Ok(StageOutcome::Skipped(reason)) => (StageStatus::Skipped { reason }, Vec::new()),
            Err(e) => (StageStatus::Failed { error: e.to_string() }, Vec::new()),
        };
        stages.push(StageRecord { stage: name.into(), status, outputs });
    };

    let r = stage_geometry(config, &state, out_dir);
    record(&mut stages, "geometry", r);
    let r = stage_capacity(config, &mut state, out_dir, seed);
    record(&mut stages, "capacity", r);
    let r = stage_spectral(config, &mut state, out_dir);
    record(&mut stages, "spectral", r);
    let r = stage_profiles(config, &mut state, out_dir);
    record(&mut stages, "profiles", r);
    let r = stage_estimates(config, &mut state, out_dir);
    record(&mut stages, "estimates", r);
    let r = stage_pde(config, &mut state, out_dir);
    record(&mut stages, "pde", r);
    let r = stage_verify(&mut state, out_dir);
    record(&mut stages, "verify", r);

    write_text(out_dir, "summary.txt", &summary_text(config, &state))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        name: config.name.clone(),
        seed,
        stages,
    };
    write_json(out_dir, "manifest.json", &manifest)?;
    Ok(RunBundle { out_dir: out_dir.to_path_buf(), manifest })
}

#[derive(Serialize)]
struct GeometrySummary<'a> {
    domain: &'a DomainSpec,
    ladder: &'a [f64],
}

fn stage_geometry(
    config: &ExperimentConfig,
    state: &PipelineState,
    out_dir: &Path,
) -> Result<StageOutcome> {
    write_json(
        out_dir,
        "geometry.json",
        &GeometrySummary { domain: &config.domain, ladder: &state.ladder },
    )?;
    Ok(StageOutcome::Done(vec!["geometry.json".into()]))
}

/// Normalized-capacity floor of the interior thickness check, relative
/// to the ball-in-ball reference at matching resolution.
const CONE_THRESHOLD: f64 = 0.05;

fn stage_capacity(
    config: &ExperimentConfig,
    state: &mut PipelineState,
    out_dir: &Path,
    seed: u64,
) -> Result<StageOutcome> {
    let need_cone = config.theorems.iter().any(|id| id.needs_cone_condition());
    let need_cap_lambda = config.theorems.iter().any(|id| id.uses_capacity_lambda());
    if !need_cone && !need_cap_lambda && config.capacity_laws.is_none() {
        return Ok(StageOutcome::Skipped("no capacity inputs requested".into()));
    }
    let mut outputs = Vec::new();
    let cfg = config.exponent_config();
    if need_cone {
        let report = cone_condition(
            &config.domain,
            cfg.theta,
            cfg.p,
            &state.ladder,
            config.resolution.condenser_cells,
            CONE_THRESHOLD,
        )?;
        write_json(out_dir, "cone_condition.json", &report)?;
        outputs.push("cone_condition.json".into());
        state.cone = Some(report);
    }
    if need_cap_lambda {
        state.lambda_capacity = Some(capacity_lambda(
            &config.domain,
            &cfg,
            &state.ladder,
            config.resolution.condenser_cells,
        )?);
    }
    if let Some(laws) = &config.capacity_laws {
        let cases = random_law_cases(laws.cases, seed);
        let report = check_capacity_laws(&cases, &LawTolerances::default())?;
        write_json(out_dir, "capacity_laws.json", &report)?;
        outputs.push("capacity_laws.json".into());
        state.laws = Some(report);
    }
    Ok(StageOutcome::Done(outputs))
}

fn stage_spectral(
    config: &ExperimentConfig,
    state: &mut PipelineState,
    out_dir: &Path,
) -> Result<StageOutcome> {
    let mut opts = LambdaProfileOptions::default();
    opts.h_ang = 2.0 * std::f64::consts::PI / config.resolution.angular_cells as f64;
    let lambda = lambda_profile(
        &config.domain,
        config.exponents.p,
        config.method.theta,
        &state.ladder,
        &opts,
    )?;
    let mut csv = String::from("r,lambda\n");
    for (k, &r) in lambda.ladder.iter().enumerate() {
        csv.push_str(&r.to_string());
        csv.push(',');
        csv.push_str(&cell(lambda.value(k)));
        csv.push('\n');
    }
    write_text(out_dir, "spectral.csv", &csv)?;
    state.lambda = Some(lambda);
    if config.theorems.iter().any(|id| id.uses_variant_lambda()) {
        let cfg = config.exponent_config();
        let mut vopts = VariantOptions::new(config.domain.n);
        vopts.cells_per_unit = config.resolution.condenser_cells;
        state.lambda_variant =
            Some(lambda_variant(&config.domain, &cfg, &state.ladder, &vopts)?);
    }
    Ok(StageOutcome::Done(vec!["spectral.csv".into()]))
}

fn stage_profiles(
    config: &ExperimentConfig,
    state: &mut PipelineState,
    out_dir: &Path,
) -> Result<StageOutcome> {
    let cfg = config.exponent_config();
    let mut sopts = ShellProfileOptions::new(config.domain.n);
    if let Some(c) = config.resolution.shell_cells {
        sopts.cells_per_radius = c;
    }
    let shells = build_shell_ladder(&config.domain, &cfg, &state.ladder, &sopts)?;
    state.diam = Some(shell_diam_profile_from(&shells));
    state.thinness = Some(d_profile_from(&shells));
    state.q = Some(q_profile_from(&config.domain, &config.coefficient, &cfg, &shells, &sopts)?);
    write_text(out_dir, "profiles.csv", &profiles_csv(state))?;
    Ok(StageOutcome::Done(vec!["profiles.csv".into()]))
}

fn profiles_csv(state: &PipelineState) -> String {
    let mut cols: Vec<(&str, &Profile)> = Vec::new();
    if let Some(p) = &state.lambda {
        cols.push(("lambda", p));
    }
    if let Some(p) = &state.lambda_variant {
        cols.push(("lambda_variant", p));
    }
    if let Some(p) = &state.lambda_capacity {
        cols.push(("lambda_capacity", p));
    }
    if let Some(p) = &state.diam {
        cols.push(("diam", p));
    }
    if let Some(p) = &state.thinness {
        cols.push(("thinness", p));
    }
    if let Some(p) = &state.q {
        cols.push(("q", p));
    }
    let mut out = String::from("r");
    for (name, _) in &cols {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (k, &r) in state.ladder.iter().enumerate() {
        out.push_str(&r.to_string());
        for (_, p) in &cols {
            out.push(',');
            out.push_str(&cell(p.value(k)));
        }
        out.push('\n');
    }
    out
}

fn stage_estimates(
    config: &ExperimentConfig,
    state: &mut PipelineState,
    out_dir: &Path,
) -> Result<StageOutcome> {
    if config.theorems.is_empty() {
        return Ok(StageOutcome::Skipped("no bounds requested".into()));
    }
    let q = state
        .q
        .as_ref()
        .ok_or_else(|| Error::ProfileIncomplete("the profiles stage did not produce q".into()))?;
    let cfg = config.exponent_config();
    let big_r = *state.ladder.last().expect("validated ladder is nonempty");
    let mut outputs = Vec::new();
    let mut results = Vec::new();
    for &id in &config.theorems {
        let lambda = if id.uses_capacity_lambda() {
            state.lambda_capacity.as_ref()
        } else if id.uses_variant_lambda() {
            state.lambda_variant.as_ref()
        } else {
            state.lambda.as_ref()
        };
        let bundle = crate::estimates::ProfileBundle {
            lambda,
            q,
            thinness: state.thinness.as_ref(),
        };
        let base = EstimateOptions::new(1.0, big_r);
        let evaluated = match id.family() {
            Family::GradAlpha => bound_curve(id, &cfg, &bundle, state.cone.as_ref(), &base),
            Family::Linear => {
                let mut best: Option<EstimateReport> = None;
                let mut first_err: Option<Error> = None;
                for &k in &config.method.k_grid {
                    let mut opts = base;
                    opts.k = k;
                    match bound_curve(id, &cfg, &bundle, state.cone.as_ref(), &opts) {
                        Ok(rep) => {
                            best = Some(match best.take() {
                                None => rep,
                                Some(b) => stronger_report(b, rep),
                            });
                        }
                        Err(e) => {
                            if first_err.is_none() {
                                first_err = Some(e);
                            }
                        }
                    }
                }
                match (best, first_err) {
                    (Some(rep), _) => Ok(rep),
                    (None, Some(e)) => Err(e),
                    (None, None) => unreachable!("k_grid validated nonempty"),
                }
            }
        };
        let outcome = match evaluated {
            Ok(report) => {
                let rel = format!("estimates/{}.json", id.label());
                write_json(out_dir, &rel, &report)?;
                outputs.push(rel);
                IdOutcome::Report(Box::new(report))
            }
            Err(e) => IdOutcome::Failed(e.to_string()),
        };
        results.push(IdResult { id, outcome });
    }
    state.estimates = results;
    Ok(StageOutcome::Done(outputs))
}

/// Prefers evaluated reports, then the larger total integral (the
/// stronger bound at the smallest rung).
fn stronger_report(a: EstimateReport, b: EstimateReport) -> EstimateReport {
    let score = |r: &EstimateReport| match r.verdict {
        EstimateVerdict::Evaluated => r.rungs.first().map(|p| p.integral).unwrap_or(0.0),
        EstimateVerdict::Refused { .. } => f64::NEG_INFINITY,
    };
    if score(&b) > score(&a) {
        b
    } else {
        a
    }
}

fn stage_pde(
    config: &ExperimentConfig,
    state: &mut PipelineState,
    out_dir: &Path,
) -> Result<StageOutcome> {
    let Some(check) = &config.pde else {
        return Ok(StageOutcome::Skipped("not requested".into()));
    };
    let mut inst = ProblemInstance::new(
        config.domain.clone(),
        config.exponents.p,
        config.exponents.alpha,
        config.coefficient.clone(),
        check.boundary.clone(),
    )?;
    inst.forcing = check.forcing;
    inst.validate()?;
    let mut sopts = SolveOptions::default();
    sopts.cells_per_radius = config.resolution.pde_cells;
    let sol = solve_pde(&inst, &sopts)?;
    let meas = measure_m(&sol, &state.ladder)?;
    write_text(out_dir, "solution.csv", &sol.csv())?;
    write_text(out_dir, "measured.csv", &meas.csv())?;
    state.measurement = Some(meas);
    Ok(StageOutcome::Done(vec!["solution.csv".into(), "measured.csv".into()]))
}

fn verdict_rows(v: &BoundVerdict) -> &[MarginRow] {
    match v {
        BoundVerdict::Dominates { rows, .. } | BoundVerdict::Violated { rows, .. } => rows,
        BoundVerdict::Refused { .. } => &[],
    }
}

fn stage_verify(state: &mut PipelineState, out_dir: &Path) -> Result<StageOutcome> {
    let Some(meas) = &state.measurement else {
        return Ok(StageOutcome::Skipped("no pde measurement to verify against".into()));
    };
    let evaluated: Vec<(TheoremId, &EstimateReport)> = state
        .estimates
        .iter()
        .filter_map(|r| match &r.outcome {
            IdOutcome::Report(rep) => Some((r.id, rep.as_ref())),
            IdOutcome::Failed(_) => None,
        })
        .collect();
    if evaluated.is_empty() {
        return Ok(StageOutcome::Skipped("no bound curves to verify".into()));
    }
    let mut outputs = Vec::new();
    let mut verdicts = Vec::new();
    for (id, report) in &evaluated {
        let verdict = verify_bound(meas, report, &VerifyOptions::default());
        let rel = format!("verify/{}.json", id.label());
        write_json(out_dir, &rel, &verdict)?;
        outputs.push(rel);
        verdicts.push((*id, verdict));
    }
    let mut csv = String::from("r,measured");
    for (id, _) in &verdicts {
        csv.push(',');
        csv.push_str(&format!("{}_bound", id.label()));
    }
    csv.push('\n');
    for row in &meas.rows {
        csv.push_str(&row.r.to_string());
        csv.push(',');
        csv.push_str(&cell(row.m));
        for (_, verdict) in &verdicts {
            let bound = verdict_rows(verdict)
                .iter()
                .find(|m| (m.r - row.r).abs() <= 1e-9 * m.r.max(row.r))
                .map(|m| m.bound);
            csv.push(',');
            csv.push_str(&cell(bound));
        }
        csv.push('\n');
    }
    write_text(out_dir, "bound_vs_measured.csv", &csv)?;
    outputs.push("bound_vs_measured.csv".into());
    state.verdicts = verdicts;
    Ok(StageOutcome::Done(outputs))
}

fn kind_label(kind: &DomainKind) -> String {
    match kind {
        DomainKind::ConeComplement { k1 } => format!("cone_complement(k1 = {k1})"),
        DomainKind::PowerCusp { k1, s } => format!("power_cusp(k1 = {k1}, s = {s})"),
        DomainKind::Sector { opening } => format!("sector(opening = {opening})"),
        DomainKind::Annulus => "annulus".into(),
        DomainKind::CustomOracle(_) => "custom".into(),
    }
}

fn shape_label(shape: DecayShape) -> String {
    match shape {
        DecayShape::Log => "log(1/r)".into(),
        DecayShape::PowerOfLog { exponent } => format!("log(1/r)^{exponent}"),
        DecayShape::LogLog => "log log(1/r)".into(),
        DecayShape::Power { exponent } => format!("r^{exponent}"),
    }
}

/// The example family matching this config, if any.
fn example_for(config: &ExperimentConfig) -> Option<(ExampleId, CatalogParams)> {
    let linear = nearly(config.exponents.alpha, config.exponents.p - 1.0);
    let (id, s) = match &config.domain.kind {
        DomainKind::ConeComplement { .. } if !linear => (ExampleId::E21, None),
        DomainKind::PowerCusp { s, .. } if !linear => (ExampleId::E22, Some(*s)),
        DomainKind::PowerCusp { s, .. } => (ExampleId::E23, Some(*s)),
        _ => return None,
    };
    let (l, sigma) = match &config.coefficient {
        Coefficient::Zero => (0.0, None),
        Coefficient::PowerLaw { l, .. } => (*l, None),
        Coefficient::PowerLog { l, sigma, .. } => (*l, Some(*sigma)),
        Coefficient::CustomOracle(_) => return None,
    };
    Some((
        id,
        CatalogParams {
            p: config.exponents.p,
            alpha: config.exponents.alpha,
            n: config.domain.n,
            s,
            l,
            sigma,
        },
    ))
}

fn catalog_line(config: &ExperimentConfig, ladder: &[f64]) -> String {
    let Some((id, params)) = example_for(config) else {
        return "catalog: no matching example family".into();
    };
    match f_catalog(id, &params) {
        Err(e) => format!("catalog: {} rejected the parameters ({e})", id.label()),
        Ok(CatalogOutcome::NoGuarantee { reason }) => {
            format!("catalog: {} claims no guarantee ({reason})", id.label())
        }
        Ok(CatalogOutcome::Covered { shape, branch }) => {
            let rs: Vec<f64> = ladder.iter().copied().filter(|r| *r < 0.99).collect();
            let slope = if rs.len() >= 2 {
                let ys: Vec<f64> = rs.iter().map(|&r| shape.eval(r)).collect();
                fit_loglog(&rs, &ys).map(|f| f.slope)
            } else {
                None
            };
            let slope = slope.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
            format!(
                "catalog: {} covered, f = {}, branch: {branch}, f-slope over ladder = {slope}",
                id.label(),
                shape_label(shape)
            )
        }
    }
}

fn divergence_label(report: &EstimateReport) -> String {
    use crate::estimates::DivergenceVerdict::*;
    match report.divergence.verdict {
        Divergent if report.divergence.log_log_tail => "divergent (log-log)".into(),
        Divergent => "divergent".into(),
        Convergent => "convergent".into(),
        Unresolved => "unresolved".into(),
    }
}

fn dominance_label(id: TheoremId, state: &PipelineState) -> String {
    let Some((_, verdict)) = state.verdicts.iter().find(|(v, _)| *v == id) else {
        return "unverified".into();
    };
    match verdict {
        BoundVerdict::Dominates { trivial: true, .. } => "dominates (trivially)".into(),
        BoundVerdict::Dominates { c_cal, .. } => format!("dominates (c_cal = {c_cal:.4})"),
        BoundVerdict::Violated { first_violation, .. } => {
            format!("violated at r = {first_violation}")
        }
        BoundVerdict::Refused { reason } => format!("refused: {reason}"),
    }
}

/// Log-log slope of the bound integral over its positive rungs.
fn integral_slope(report: &EstimateReport) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = report
        .rungs
        .iter()
        .filter(|b| b.integral > 0.0)
        .map(|b| (b.r, b.integral))
        .unzip();
    fit_loglog(&xs, &ys).map(|f| f.slope)
}

fn summary_text(config: &ExperimentConfig, state: &PipelineState) -> String {
    let mut out = String::new();
    out.push_str(&format!("experiment: {}\n", config.name));
    out.push_str(&format!(
        "domain: {} (n = {}, R = {})\n",
        kind_label(&config.domain.kind),
        config.domain.n,
        config.domain.outer_radius
    ));
    let linear = nearly(config.exponents.alpha, config.exponents.p - 1.0);
    let regime = if linear {
        "alpha = p - 1 (linear absorption)"
    } else {
        "p - 1 < alpha <= p (gradient absorption)"
    };
    out.push_str(&format!(
        "regime: {regime}, p = {}, alpha = {}\n",
        config.exponents.p, config.exponents.alpha
    ));
    out.push_str(&format!(
        "ladder: {} rungs in [{}, {}]\n",
        config.ladder.rungs, config.ladder.r_min, config.ladder.r_max
    ));
    out.push_str(&catalog_line(config, &state.ladder));
    out.push('\n');
    if let Some(cone) = &state.cone {
        out.push_str(&format!(
            "cone condition: {:?} (normalized min {:.4}, threshold {})\n",
            cone.verdict, cone.normalized_min, cone.threshold
        ));
    }
    if let Some(laws) = &state.laws {
        out.push_str(&format!(
            "capacity laws: {} cases, {} checks, {} violations\n",
            laws.cases,
            laws.checks,
            laws.violations.len()
        ));
    }
    if let Some(meas) = &state.measurement {
        match meas.fitted_exponent {
            Some(slope) => out.push_str(&format!("measured M slope: {slope:.4}\n")),
            None => out.push_str("measured M slope: no fit\n"),
        }
    }
    if !state.estimates.is_empty() {
        out.push('\n');
        out.push_str(&format!(
            "{:<7} {:<24} {:<20} {:<10} {}\n",
            "id", "status", "divergence", "f-slope", "dominance"
        ));
        for result in &state.estimates {
            let id = result.id.label();
            match &result.outcome {
                IdOutcome::Failed(msg) => {
                    out.push_str(&format!("{id:<7} error: {msg}\n"));
                }
                IdOutcome::Report(report) => {
                    let status = match &report.verdict {
                        EstimateVerdict::Evaluated => match report.k {
                            Some(k) => format!("evaluated (k = {k})"),
                            None => "evaluated".into(),
                        },
                        EstimateVerdict::Refused { reason } => format!("refused: {reason}"),
                    };
                    let slope = integral_slope(report)
                        .map(|s| format!("{s:.4}"))
                        .unwrap_or_else(|| "-".into());
                    out.push_str(&format!(
                        "{:<7} {:<24} {:<20} {:<10} {}\n",
                        id,
                        status,
                        divergence_label(report),
                        slope,
                        dominance_label(result.id, state)
                    ));
                }
            }
        }
    }
    out
}

/// Rung-wise ratios between two bundles sharing a ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareColumn {
    pub name: String,
    /// `a / b` per rung; missing where either side is absent or the
    /// denominator vanishes.
    pub ratios: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub ladder: Vec<f64>,
    pub columns: Vec<CompareColumn>,
}

impl CompareReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("r");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
            out.push_str("_ratio");
        }
        out.push('\n');
        for (k, &r) in self.ladder.iter().enumerate() {
            out.push_str(&r.to_string());
            for c in &self.columns {
                out.push(',');
                out.push_str(&cell(c.ratios[k]));
            }
            out.push('\n');
        }
        out
    }
}

struct Table {
    ladder: Vec<f64>,
    columns: Vec<(String, Vec<Option<f64>>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Precondition(format!("{} is empty", path.display())))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.first() != Some(&"r") {
        return Err(Error::Precondition(format!(
            "{} must start with an r column",
            path.display()
        )));
    }
    let mut ladder = Vec::new();
    let mut columns: Vec<(String, Vec<Option<f64>>)> =
        names[1..].iter().map(|n| (n.to_string(), Vec::new())).collect();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::Precondition(format!(
                "{} has a ragged row: {line}",
                path.display()
            )));
        }
        let r: f64 = cells[0]
            .parse()
            .map_err(|_| Error::Precondition(format!("bad radius cell '{}'", cells[0])))?;
        ladder.push(r);
        for (k, cell) in cells[1..].iter().enumerate() {
            let v = if cell.is_empty() { None } else { cell.parse::<f64>().ok() };
            columns[k].1.push(v);
        }
    }
    Ok(Table { ladder, columns })
}

fn same_ladder(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()))
}

fn ratio_columns(a: &Table, b: &Table, out: &mut Vec<CompareColumn>) {
    for (name, va) in &a.columns {
        let Some((_, vb)) = b.columns.iter().find(|(n, _)| n == name) else {
            continue;
        };
        let ratios = va
            .iter()
            .zip(vb)
            .map(|(x, y)| match (x, y) {
                (Some(x), Some(y)) if *y != 0.0 => Some(x / y),
                _ => None,
            })
            .collect();
        out.push(CompareColumn { name: name.clone(), ratios });
    }
}

/// Rung-wise ratio table between two bundles, for sensitivity studies
/// of the method parameters.  Refuses bundles with differing ladders.
pub fn compare(a_dir: &Path, b_dir: &Path) -> Result<CompareReport> {
    let a = read_table(&a_dir.join("profiles.csv"))?;
    let b = read_table(&b_dir.join("profiles.csv"))?;
    if !same_ladder(&a.ladder, &b.ladder) {
        return Err(Error::Precondition(
            "bundles do not share a profile ladder; ratios are not comparable".into(),
        ));
    }
    let mut columns = Vec::new();
    ratio_columns(&a, &b, &mut columns);
    let ba = a_dir.join("bound_vs_measured.csv");
    let bb = b_dir.join("bound_vs_measured.csv");
    if ba.is_file() && bb.is_file() {
        let ta = read_table(&ba)?;
        let tb = read_table(&bb)?;
        if !same_ladder(&ta.ladder, &tb.ladder) {
            return Err(Error::Precondition(
                "bundles do not share a measurement ladder; ratios are not comparable".into(),
            ));
        }
        ratio_columns(&ta, &tb, &mut columns);
    }
    Ok(CompareReport { ladder: a.ladder, columns })
}

const BUNDLED: [(&str, &str); 3] = [
    ("example-2.1", include_str!("../../../../configs/example-2.1.json")),
    ("example-2.2", include_str!("../../../../configs/example-2.2.json")),
    ("example-2.3", include_str!("../../../../configs/example-2.3.json")),
];

/// Names of the configs compiled into the binary.
pub fn list_bundled_examples() -> Vec<&'static str> {
    BUNDLED.iter().map(|(name, _)| *name).collect()
}

/// Loads and validates one bundled config by name.
pub fn bundled_config(name: &str) -> Result<ExperimentConfig> {
    let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) else {
        return Err(Error::Config(format!(
            "unknown bundled example '{name}'; available: {}",
            list_bundled_examples().join(", ")
        )));
    };
    let config: ExperimentConfig = serde_json::from_str(text)?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn smoke_config(theorems: Vec<TheoremId>, pde: bool) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: "smoke".into(),
            domain: DomainSpec::sector(PI / 2.0, 1.0, 2).unwrap(),
            coefficient: Coefficient::Zero,
            exponents: Exponents { p: 2.0, alpha: 1.5 },
            method: Method::default(),
            ladder: LadderSpec { r_min: 0.02, r_max: 0.4, rungs: 8 },
            resolution: Resolution {
                angular_cells: 128,
                shell_cells: Some(10),
                condenser_cells: 16,
                pde_cells: 16,
            },
            theorems,
            pde: pde.then(PdeCheck::default),
            capacity_laws: None,
            out_dir: None,
        }
    }

    fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    files.push((rel, fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    fn status_of<'a>(manifest: &'a Manifest, stage: &str) -> &'a StageStatus {
        &manifest.stages.iter().find(|s| s.stage == stage).unwrap().status
    }

    #[test]
    fn bundled_configs_parse_and_validate() {
        let names = list_bundled_examples();
        assert_eq!(names, vec!["example-2.1", "example-2.2", "example-2.3"]);
        for name in names {
            let config = bundled_config(name).unwrap();
            assert_eq!(config.name, name);
        }
        assert!(matches!(bundled_config("example-9.9"), Err(Error::Config(_))));
    }

    #[test]
    fn config_rejections() {
        let mut config = smoke_config(vec![], false);
        config.schema_version = 99;
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let mut config = smoke_config(vec![], false);
        config.ladder.r_max = 1.5;
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let mut config = smoke_config(vec![], false);
        config.domain = DomainSpec::power_cusp(1.0, 2.0, 1.0, 3).unwrap();
        config.pde = Some(PdeCheck::default());
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let mut config = smoke_config(vec![TheoremId::T21, TheoremId::T21], false);
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        config.theorems = vec![TheoremId::T21];
        config.method.k_grid = vec![];
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let stray = r#"{
            "schema_version": 1,
            "name": "x",
            "domain": {"kind": "annulus", "R": 1.0, "n": 2},
            "coefficient": {"kind": "zero"},
            "exponents": {"p": 2.0, "alpha": 2.0},
            "ladder": {"r_min": 0.1, "r_max": 0.4, "rungs": 4},
            "surprise": true
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(stray).is_err());
    }

    #[test]
    fn profiles_only_bundle_for_empty_theorem_list() {
        let dir = tempfile::tempdir().unwrap();
        let config = smoke_config(vec![], false);
        let bundle = run(&config, dir.path(), 0).unwrap();
        assert!(bundle.manifest.is_complete());
        assert!(matches!(status_of(&bundle.manifest, "geometry"), StageStatus::Completed));
        assert!(matches!(status_of(&bundle.manifest, "capacity"), StageStatus::Skipped { .. }));
        assert!(matches!(status_of(&bundle.manifest, "spectral"), StageStatus::Completed));
        assert!(matches!(status_of(&bundle.manifest, "profiles"), StageStatus::Completed));
        assert!(matches!(status_of(&bundle.manifest, "estimates"), StageStatus::Skipped { .. }));
        assert!(matches!(status_of(&bundle.manifest, "pde"), StageStatus::Skipped { .. }));
        assert!(matches!(status_of(&bundle.manifest, "verify"), StageStatus::Skipped { .. }));
        for name in ["config.json", "geometry.json", "spectral.csv", "profiles.csv", "summary.txt", "manifest.json"] {
            assert!(dir.path().join(name).is_file(), "missing {name}");
        }
        assert!(!dir.path().join("bound_vs_measured.csv").exists());
        let profiles = fs::read_to_string(dir.path().join("profiles.csv")).unwrap();
        assert!(profiles.starts_with("r,lambda,diam,thinness,q\n"), "{profiles}");
        assert_eq!(profiles.lines().count(), 9);
    }

    #[test]
    fn sector_run_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let config = smoke_config(vec![TheoremId::T21, TheoremId::C21], true);
        let bundle = run(&config, dir.path(), 0).unwrap();
        assert!(bundle.manifest.is_complete(), "{:?}", bundle.manifest.failed_stages());
        for name in [
            "cone_condition.json",
            "estimates/T2.1.json",
            "estimates/C2.1.json",
            "verify/T2.1.json",
            "verify/C2.1.json",
            "solution.csv",
            "measured.csv",
            "bound_vs_measured.csv",
        ] {
            let ok = dir.path().join(name).is_file();
            // T2.1 and C2.1 need no thickness check, so that file must
            // not exist; everything else must.
            if name == "cone_condition.json" {
                assert!(!ok, "unexpected {name}");
            } else {
                assert!(ok, "missing {name}");
            }
        }
        let rep: EstimateReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("estimates/T2.1.json")).unwrap())
                .unwrap();
        assert_eq!(rep.verdict, EstimateVerdict::Evaluated);
        let verdict: BoundVerdict =
            serde_json::from_str(&fs::read_to_string(dir.path().join("verify/T2.1.json")).unwrap())
                .unwrap();
        assert!(!matches!(verdict, BoundVerdict::Refused { .. }), "{verdict:?}");
        let csv = fs::read_to_string(dir.path().join("bound_vs_measured.csv")).unwrap();
        assert!(csv.starts_with("r,measured,T2.1_bound,C2.1_bound\n"), "{csv}");
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("T2.1"), "{summary}");
        assert!(summary.contains("C2.1"), "{summary}");
        assert!(summary.contains("measured M slope"), "{summary}");
    }

    #[test]
    fn requested_ids_outside_the_regime_are_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        // alpha = 1.5 is in the gradient regime, so the linear-family
        // T2.6 must show up as a refusal line, not kill the stage.
        let config = smoke_config(vec![TheoremId::T21, TheoremId::T26], false);
        let bundle = run(&config, dir.path(), 0).unwrap();
        assert!(bundle.manifest.is_complete(), "{:?}", bundle.manifest.failed_stages());
        assert!(dir.path().join("estimates/T2.1.json").is_file());
        assert!(!dir.path().join("estimates/T2.6.json").exists());
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("T2.6    error:"), "{summary}");
    }

    #[test]
    fn linear_family_sweeps_the_k_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = smoke_config(vec![TheoremId::T26], false);
        config.exponents.alpha = 1.0;
        config.method.k_grid = vec![0.5, 2.0];
        let bundle = run(&config, dir.path(), 0).unwrap();
        assert!(bundle.manifest.is_complete(), "{:?}", bundle.manifest.failed_stages());
        let rep: EstimateReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("estimates/T2.6.json")).unwrap())
                .unwrap();
        assert_eq!(rep.verdict, EstimateVerdict::Evaluated);
        // q = 0 for a zero coefficient, so both k give the same curve
        // and the sweep keeps the first.
        assert_eq!(rep.k, Some(0.5));
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let config = smoke_config(vec![TheoremId::T21], true);
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        run(&config, da.path(), 7).unwrap();
        run(&config, db.path(), 7).unwrap();
        let fa = read_dir_files(da.path());
        let fb = read_dir_files(db.path());
        assert_eq!(fa.len(), fb.len());
        for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
            assert_eq!(na, nb);
            assert_eq!(ba, bb, "{na} differs between runs");
        }
    }

    #[test]
    fn compare_reports_unit_ratios_and_refuses_mismatches() {
        let config = smoke_config(vec![], false);
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        run(&config, da.path(), 0).unwrap();
        run(&config, db.path(), 0).unwrap();
        let report = compare(da.path(), db.path()).unwrap();
        assert_eq!(report.ladder.len(), 8);
        assert!(!report.columns.is_empty());
        for col in &report.columns {
            for ratio in col.ratios.iter().flatten() {
                assert_eq!(*ratio, 1.0, "column {} deviates", col.name);
            }
        }
        let csv = report.csv();
        assert!(csv.starts_with("r,lambda_ratio"), "{csv}");

        let dc = tempfile::tempdir().unwrap();
        fs::write(dc.path().join("profiles.csv"), "r,lambda\n0.5,2.0\n").unwrap();
        assert!(matches!(
            compare(da.path(), dc.path()),
            Err(Error::Precondition(_))
        ));
    }
}
