//! One function per subcommand. Each writes its reports and returns whether
//! every quantitative check passed.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use serde::Serialize;

use parreg_core::coeffs::{self, ParabolicityCertificate};
use parreg_core::estimates::{self, EstimateReport};
use parreg_core::field::Field;
use parreg_core::grid::GridSpec;
use parreg_core::linalg::Matrix;
use parreg_core::ou::{self, OuProblem, Profile};
use parreg_core::spectral::{self, OracleMode};
use parreg_core::stochastic;
use parreg_core::Error;

use crate::config::{Config, SourceSpec};
use crate::report::{self, Cell};

/// Relative agreement required between the spectral solver and the
/// space-domain oracle at probe points.
pub const ORACLE_REL_TOL: f64 = 1e-3;
/// Residual level required of the drift solver.
pub const OU_RESIDUAL_TOL: f64 = 2e-2;
/// Allowed drift of elliptic ratios under refinement and dilation.
pub const ELLIPTIC_TOL: f64 = 0.05;

pub struct Context {
    pub config: Config,
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Context {
    fn json<T: Serialize>(&self, default: &str, report: &T) -> Result<PathBuf> {
        report::write_json(&self.out_dir, &self.config.output_name("json", default), report)
    }

    fn csv(&self, default: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<PathBuf> {
        report::write_csv(&self.out_dir, &self.config.output_name("csv", default), header, rows)
    }

    fn field(&self, default: &str, field: &Field) -> Result<()> {
        if self.config.write_field.unwrap_or(false) {
            field.write_to(self.out_dir.join(self.config.output_name("field", default)))?;
        }
        Ok(())
    }

    fn single_source(&self, grid: &GridSpec) -> Result<Field> {
        let spec = self.config.require(&self.config.source, "source")?;
        if Config::source_is_random(spec) {
            bail!("invalid config: key 'source' must describe a single field for this command");
        }
        let mut v = self.config.build_sources(spec, grid, &self.base_dir)?;
        Ok(v.remove(0))
    }
}

fn certificate_times(cfg: &Config) -> Result<Vec<f64>> {
    let s = cfg.require(&cfg.certify_times, "certify_times")?;
    if s.count < 2 || !(s.t_max > s.t_min) {
        bail!("invalid config: key 'certify_times' needs count >= 2 and t_max > t_min");
    }
    Ok(coeffs::linspace(s.t_min, s.t_max, s.count))
}

#[derive(Serialize)]
struct CertifyReport {
    command: &'static str,
    p0: usize,
    lambda: f64,
    /// Time at which the pointwise constant is smallest.
    argmin_time: f64,
    samples: usize,
    pass: bool,
}

pub fn certify(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let path = cfg.build_path(&ctx.base_dir)?;
    let p0 = cfg.p0(path.dim());
    let times = certificate_times(cfg)?;
    let cert: ParabolicityCertificate = coeffs::certify_parabolicity(&path, p0, &times)?;
    let argmin_time = cert
        .t_samples
        .iter()
        .fold((f64::NAN, f64::INFINITY), |acc, &(t, l)| if l < acc.1 { (t, l) } else { acc })
        .0;
    let report = CertifyReport {
        command: "certify",
        p0,
        lambda: cert.lambda,
        argmin_time,
        samples: times.len(),
        pass: cert.pass,
    };
    ctx.json("certify.json", &report)?;
    Ok(report.pass)
}

fn node_index(value: f64, origin: f64, step: f64, count: usize, what: &str) -> Result<usize> {
    let pos = (value - origin) / step;
    let k = pos.round();
    if (pos - k).abs() > 1e-9 || k < 0.0 || k as usize >= count {
        bail!("invalid config: key 'probes': {what} = {value} is not a grid node");
    }
    Ok(k as usize)
}

#[derive(Serialize)]
struct ProbeReport {
    t: f64,
    x: Vec<f64>,
    spectral: f64,
    space_oracle: f64,
    oracle_rel_diff: f64,
    oracle_pass: bool,
    mc_estimate: Option<f64>,
    mc_stderr: Option<f64>,
    mc_z: Option<f64>,
    mc_pass: Option<bool>,
}

#[derive(Serialize)]
struct SolveReport {
    command: &'static str,
    relative_residual: f64,
    max_abs_u: f64,
    samples: Option<usize>,
    seed: Option<u64>,
    probes: Vec<ProbeReport>,
    pass: bool,
}

pub fn solve(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let path = cfg.build_path(&ctx.base_dir)?;
    let grid = cfg.build_grid()?;
    let f = ctx.single_source(&grid)?;
    let u = spectral::solve_duhamel(&path, &f)?;
    let r = spectral::residual(&u, &f, &path)?;
    let mut probes = Vec::new();
    let samples = cfg.samples;
    let seed = if samples.is_some() { Some(cfg.seed()?) } else { cfg.seed };
    for (n, probe) in cfg.probes.clone().unwrap_or_default().iter().enumerate() {
        if probe.x.len() != grid.dim() {
            bail!("invalid config: key 'probes': point dimension {} != {}", probe.x.len(), grid.dim());
        }
        let k = node_index(probe.t, grid.t_min, grid.dt, grid.nt, "t")?;
        let node: Vec<usize> = (0..grid.dim())
            .map(|a| {
                let sp = &grid.space;
                node_index(probe.x[a], -sp.half_widths[a], sp.spacing(a), sp.points[a], "x")
            })
            .collect::<Result<_>>()?;
        let spectral_value = u.slice(k)[grid.space.ravel(&node)];
        let oracle = spectral::space_oracle_at(&path, &f, k, &node, OracleMode::Degenerate)?;
        let oracle_rel_diff = if oracle == 0.0 {
            if spectral_value == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (spectral_value - oracle).abs() / oracle.abs()
        };
        let (mut mc_estimate, mut mc_stderr, mut mc_z, mut mc_pass) = (None, None, None, None);
        if let (Some(n_samples), Some(seed)) = (samples, seed) {
            let probe_seed = parreg_core::rng::StreamRng::family_seed(seed, n as u64);
            let (est, se) = stochastic::mc_solve(&path, &f, probe.t, &probe.x, n_samples, probe_seed)?;
            let diff = (est - spectral_value).abs();
            let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
            mc_estimate = Some(est);
            mc_stderr = Some(se);
            mc_z = Some(z);
            mc_pass = Some(z <= 3.0);
        }
        probes.push(ProbeReport {
            t: probe.t,
            x: probe.x.clone(),
            spectral: spectral_value,
            space_oracle: oracle,
            oracle_rel_diff,
            oracle_pass: oracle_rel_diff <= ORACLE_REL_TOL,
            mc_estimate,
            mc_stderr,
            mc_z,
            mc_pass,
        });
    }
    let pass = probes.iter().all(|p| p.oracle_pass && p.mc_pass != Some(false));
    let report = SolveReport {
        command: "solve",
        relative_residual: spectral::relative_residual(&r, &f),
        max_abs_u: u.max_abs(),
        samples,
        seed,
        probes,
        pass,
    };
    ctx.field("u.field", &u)?;
    ctx.json("solve.json", &report)?;
    Ok(pass)
}

fn build_all_sources(ctx: &Context, grid: &GridSpec) -> Result<Vec<(String, Field)>> {
    let cfg = &ctx.config;
    let mut specs: Vec<SourceSpec> = vec![cfg.require(&cfg.source, "source")?.clone()];
    specs.extend(cfg.extra_sources.clone().unwrap_or_default());
    let mut out = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        let fields = cfg.build_sources(spec, grid, &ctx.base_dir)?;
        let label = match spec {
            SourceSpec::Zero => "zero",
            SourceSpec::Gaussian { .. } => "gaussian",
            SourceSpec::BumpGaussian { .. } => "bump-gaussian",
            SourceSpec::Family { .. } => "family",
            SourceSpec::NearExtremal { .. } => "near-extremal",
            SourceSpec::File { .. } => "file",
        };
        let many = fields.len() > 1;
        for (m, f) in fields.into_iter().enumerate() {
            let name = if many { format!("{s}:{label}[{m}]") } else { format!("{s}:{label}") };
            out.push((name, f));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct LabelledReport {
    source: String,
    #[serde(flatten)]
    report: EstimateReport,
}

#[derive(Serialize)]
struct PairSummary {
    i: usize,
    j: usize,
    sup_ratio: f64,
    argmax: String,
    bound: Option<f64>,
    pass: Option<bool>,
}

#[derive(Serialize)]
struct EstimateSummary {
    command: &'static str,
    p: f64,
    p0: usize,
    seed: Option<u64>,
    sources: usize,
    pairs: Vec<PairSummary>,
    reports: Vec<LabelledReport>,
    pass: bool,
}

pub fn estimate(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let path = cfg.build_path(&ctx.base_dir)?;
    let grid = cfg.build_grid()?;
    let p = cfg.p();
    let p0 = cfg.p0(grid.dim());
    let sources = build_all_sources(ctx, &grid)?;
    let fields: Vec<Field> = sources.iter().map(|(_, f)| f.clone()).collect();
    let mut reports = Vec::new();
    let mut pairs = Vec::new();
    for (i, j) in cfg.pairs(p0) {
        let fam = estimates::family_estimate(&path, &fields, p, i, j, p0)?;
        pairs.push(PairSummary {
            i,
            j,
            sup_ratio: fam.sup_ratio,
            argmax: sources[fam.argmax].0.clone(),
            bound: fam.reports[0].bound,
            pass: fam.reports.iter().map(|r| r.pass).collect::<Option<Vec<bool>>>().map(|v| v.iter().all(|&b| b)),
        });
        for (k, r) in fam.reports.into_iter().enumerate() {
            reports.push(LabelledReport {
                source: sources[k].0.clone(),
                report: r,
            });
        }
    }
    let pass = reports.iter().all(|r| r.report.pass != Some(false));
    let rows: Vec<Vec<Cell>> = reports
        .iter()
        .map(|r| {
            let e = &r.report;
            vec![
                Cell::Float(e.p),
                Cell::Int(e.i),
                Cell::Int(e.j),
                Cell::Float(e.lambda),
                Cell::Float(e.ratio),
                Cell::OptFloat(e.bound),
                Cell::OptBool(e.pass),
            ]
        })
        .collect();
    let summary = EstimateSummary {
        command: "estimate",
        p,
        p0,
        seed: cfg.seed,
        sources: sources.len(),
        pairs,
        reports,
        pass,
    };
    ctx.json("estimate.json", &summary)?;
    ctx.csv("estimate.csv", &["p", "i", "j", "lambda", "ratio", "bound", "pass"], &rows)?;
    Ok(pass)
}

#[derive(Serialize)]
struct SweepSummary {
    command: &'static str,
    seed: Option<u64>,
    members: usize,
    #[serde(flatten)]
    table: estimates::SweepTable,
}

pub fn sweep_lambda(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let path = cfg.build_path(&ctx.base_dir)?;
    let grid = cfg.build_grid()?;
    let p0 = cfg.p0(grid.dim());
    let (i, j) = cfg.pairs(p0).first().copied().ok_or_else(|| anyhow!("invalid config: key 'pairs' is empty"))?;
    let lambdas = cfg.lambdas.clone().unwrap_or_else(|| vec![0.25, 1.0, 4.0]);
    let family: Vec<Field> = build_all_sources(ctx, &grid)?.into_iter().map(|(_, f)| f).collect();
    let table = estimates::sweep_lambda(&path, &lambdas, &family, cfg.p(), i, j, p0)?;
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| vec![Cell::Float(r.lambda), Cell::Float(r.sup_ratio), Cell::Float(r.scaled), Cell::Float(r.deviation)])
        .collect();
    let pass = table.pass;
    let summary = SweepSummary {
        command: "sweep-lambda",
        seed: cfg.seed,
        members: family.len(),
        table,
    };
    ctx.json("sweep-lambda.json", &summary)?;
    ctx.csv("sweep-lambda.csv", &["lambda", "sup_ratio", "scaled", "deviation"], &rows)?;
    Ok(pass)
}

#[derive(Serialize)]
struct McSummary {
    command: &'static str,
    seed: u64,
    interval: [f64; 2],
    #[serde(flatten)]
    report: stochastic::McReport,
}

pub fn mc_validate(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let seed = cfg.seed()?;
    let integrand = cfg.build_integrand()?;
    let (a, b) = integrand.interval();
    let n = cfg.samples.unwrap_or(100_000);
    if n < 1000 {
        bail!("invalid config: key 'samples' must be at least 1000");
    }
    let report = stochastic::mc_law_check(&integrand, a, b, n, seed)?;
    let pass = report.pass && report.char_pass;
    ctx.json(
        "mc-validate.json",
        &McSummary {
            command: "mc-validate",
            seed,
            interval: [a, b],
            report,
        },
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct OuRun {
    points: Vec<usize>,
    dt: f64,
    relative_residual: f64,
}

#[derive(Serialize)]
struct OuReport {
    command: &'static str,
    invariance: bool,
    hypothesis_violated: bool,
    message: Option<String>,
    block_coupling: f64,
    eta: f64,
    omega: f64,
    m1_factor: f64,
    lambda: Option<f64>,
    reduced_lambda: Option<f64>,
    reduced_lambda_floor: Option<f64>,
    f_norm: Option<f64>,
    moved_source_norm: Option<f64>,
    /// `exp((T/p) |Tr A|)`.
    jacobian_factor: f64,
    runs: Vec<OuRun>,
    residual_ratio: Option<f64>,
    pass: bool,
}

pub fn ou_solve(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let path = cfg.build_path(&ctx.base_dir)?;
    let a = cfg.build_a(path.dim())?;
    let horizon = *cfg.require(&cfg.horizon, "horizon")?;
    let p0 = cfg.p0(path.dim());
    let p = cfg.p();
    estimates::check_exponent(p)?;
    let problem = OuProblem::new(a.clone(), path.clone(), horizon, p0)?;
    let growth = ou::growth_constants(&a, horizon)?;
    let mut report = OuReport {
        command: "ou-solve",
        invariance: ou::check_invariance(&a, p0)?,
        hypothesis_violated: false,
        message: None,
        block_coupling: ou::block_coupling(&a, p0),
        eta: growth.eta,
        omega: growth.omega,
        m1_factor: estimates::m1_factor(&a, horizon, p, &growth),
        lambda: None,
        reduced_lambda: None,
        reduced_lambda_floor: None,
        f_norm: None,
        moved_source_norm: None,
        jacobian_factor: (horizon / p * a.trace().abs()).exp(),
        runs: Vec::new(),
        residual_ratio: None,
        pass: false,
    };
    let reduced = match ou::reduce_coefficients(&problem) {
        Ok(r) => r,
        Err(e @ Error::HypothesisViolated { .. }) => {
            report.hypothesis_violated = true;
            report.message = Some(e.to_string());
            ctx.json("ou-solve.json", &report)?;
            eprintln!("error: {e}");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    let times = certificate_times(cfg)?;
    let lambda = coeffs::certify_parabolicity(&path, p0, &times)?.lambda;
    let reduced_lambda = coeffs::certify_parabolicity(&reduced, p0, &times)?.lambda;
    report.lambda = Some(lambda);
    report.reduced_lambda = Some(reduced_lambda);
    report.reduced_lambda_floor = Some(lambda * growth.eta.powi(-2) * (-2.0 * horizon * growth.omega).exp());

    let grid = cfg.build_grid()?;
    let mut grids = vec![grid.clone()];
    if cfg.refine.unwrap_or(false) {
        grids.push(grid.refined(2, 2));
    }
    for (n, g) in grids.iter().enumerate() {
        let f = ctx.single_source(g)?;
        let sol = ou::solve_ou_detailed(&problem, &f)?;
        let r = ou::ou_residual(&sol.u, &f, &problem)?;
        if n == 0 {
            report.f_norm = Some(estimates::lp_norm(&f, p)?);
            report.moved_source_norm = Some(estimates::lp_norm(&sol.source_v, p)?);
            ctx.field("u.field", &sol.u)?;
        }
        report.runs.push(OuRun {
            points: g.space.points.clone(),
            dt: g.dt,
            relative_residual: spectral::relative_residual(&r, &f),
        });
    }
    let base = report.runs[0].relative_residual;
    let mut pass = base <= OU_RESIDUAL_TOL;
    if let Some(fine) = report.runs.get(1) {
        let ratio = fine.relative_residual / base;
        report.residual_ratio = Some(ratio);
        pass &= ratio <= 0.5;
    }
    report.pass = pass;
    ctx.json("ou-solve.json", &report)?;
    Ok(pass)
}

#[derive(Serialize)]
struct ScalingRow {
    lambda: f64,
    ratio: f64,
    /// `lambda * ratio(lambda) / ratio(1) - 1`.
    deviation: f64,
}

#[derive(Serialize)]
struct EllipticPair {
    base: ou::EllipticReport,
    refined_ratio: Option<f64>,
    refinement_change: Option<f64>,
    scaling: Vec<ScalingRow>,
    pass: bool,
}

#[derive(Serialize)]
struct EllipticSummary {
    command: &'static str,
    profile: String,
    drift_free: bool,
    pairs: Vec<EllipticPair>,
    pass: bool,
}

pub fn elliptic_check(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let space = cfg.build_space()?;
    let d = space.dim();
    let q = match &cfg.q {
        Some(rows) => crate::config::matrix_from(rows, "q")?,
        None => Matrix::identity(d, d),
    };
    let a = cfg.build_a(d)?;
    let profile = Profile::named(cfg.profile.as_deref().unwrap_or("raised-cosine"))?;
    let p = cfg.p();
    let w = cfg.build_w(&space)?;
    let drift_free = a.iter().all(|&v| v == 0.0);
    let lambdas = cfg.lambdas.clone().unwrap_or_else(|| vec![0.25, 4.0]);
    let mut pairs = Vec::new();
    for (i, j) in cfg.pairs(d) {
        let (_, base) = ou::elliptic_lift(&w, &profile, &q, &a, p, i, j)?;
        let mut pass = base.ratio.is_finite();
        let (mut refined_ratio, mut refinement_change) = (None, None);
        if cfg.refine.unwrap_or(true) {
            let fine_space = space.refined(2);
            let fine_w = cfg.build_w(&fine_space)?;
            let (_, fine) = ou::elliptic_lift(&fine_w, &profile, &q, &a, p, i, j)?;
            let change = relative_change(fine.ratio, base.ratio);
            refined_ratio = Some(fine.ratio);
            refinement_change = Some(change);
            pass &= change <= ELLIPTIC_TOL;
        }
        let mut scaling = Vec::new();
        for &lambda in &lambdas {
            if !(lambda > 0.0) {
                bail!("invalid config: key 'lambdas' must be positive");
            }
            let dilated_space = space.dilated(lambda.sqrt());
            let dilated = parreg_core::field::SpaceField::new(dilated_space, w.values().to_vec())?;
            let (_, r) = ou::elliptic_lift(&dilated, &profile, &(&q * lambda), &a, p, i, j)?;
            let deviation = relative_change(lambda * r.ratio, base.ratio);
            if drift_free {
                pass &= deviation <= ELLIPTIC_TOL;
            }
            scaling.push(ScalingRow {
                lambda,
                ratio: r.ratio,
                deviation,
            });
        }
        pairs.push(EllipticPair {
            base,
            refined_ratio,
            refinement_change,
            scaling,
            pass,
        });
    }
    let pass = pairs.iter().all(|p| p.pass);
    ctx.json(
        "elliptic-check.json",
        &EllipticSummary {
            command: "elliptic-check",
            profile: profile.name().to_string(),
            drift_free,
            pairs,
            pass,
        },
    )?;
    Ok(pass)
}

fn relative_change(new: f64, old: f64) -> f64 {
    if old == 0.0 {
        if new == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (new - old).abs() / old.abs()
    }
}

pub fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
