use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sigmak::analysis::{
    end_count_limit, fit_quadratic_coefficient, harnack_ratio_grid, harnack_ratio_radial, inverted, omega,
    volume_ratio, volume_ratio_profile, EndCount, HarnackReport,
};
use sigmak::conformal::RadialSamples;
use sigmak::radial::{
    classify_singularity, default_radii, envelope_viscosity_check, radial_envelope, ClassifyConfig, EnvelopeMethod,
    GridField, RadialProfile, ViscosityReport,
};
use sigmak::solver::{
    continuation_supercritical, newton_solve, solve_eigenvalue, solve_v_gauge, Domain, FoldMarker, ProblemFile,
    RadialProblem, Solution, Termination,
};
use sigmak::symfunc::{in_gamma_k, in_gamma_k_closure, in_sigma_delta, sigma_all, ConeParams, EigenTuple};
use sigmak::verify::{run_suite, VerifyConfig, VerifyReport};

use crate::manifest::{print_stdout, Outputs, RunManifest};

/// A check ran to completion and reported failure (exit code 1).
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

/// Malformed command-line input (exit code 3).
#[derive(Debug)]
pub struct BadInput(pub String);

impl std::fmt::Display for BadInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bad input: {}", self.0)
    }
}

impl std::error::Error for BadInput {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    BadInput(msg.into()).into()
}

pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("'{t}' is not a number"))))
        .collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

// ---------------------------------------------------------------- sigma

#[derive(Serialize)]
struct SigmaRow {
    lambda: Vec<f64>,
    /// `σ_1..σ_k`.
    sigma: Vec<f64>,
    in_gamma_k: bool,
    in_gamma_k_closure: bool,
    delta: Option<f64>,
    in_sigma_delta: Option<bool>,
}

#[derive(Serialize)]
struct SigmaSummary {
    k: usize,
    results: Vec<SigmaRow>,
}

pub struct SigmaArgs {
    pub lambda: Option<String>,
    pub csv: Option<PathBuf>,
    pub k: usize,
    pub json: bool,
    pub out: Option<PathBuf>,
}

pub fn sigma(args: SigmaArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sigma");
    let tuples: Vec<Vec<f64>> = match (&args.lambda, &args.csv) {
        (Some(l), None) => vec![parse_list(l)?],
        (None, Some(p)) => {
            manifest.inputs.push(p.clone());
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(parse_list)
                .collect::<Result<_>>()?
        }
        _ => return Err(bad("give exactly one of --lambda or --csv")),
    };
    let k = args.k;
    let mut rows = Vec::new();
    for l in tuples {
        let t = EigenTuple::new(l.clone()).map_err(|e| bad(e.to_string()))?;
        if k < 1 || k > t.len() {
            return Err(bad(format!("k = {k} must lie in 1..={}", t.len())));
        }
        let delta = (k >= 2).then(|| (t.len() - k) as f64 / (t.len() * (k - 1)) as f64);
        rows.push(SigmaRow {
            sigma: sigma_all(&l, k)[1..].to_vec(),
            in_gamma_k: in_gamma_k(&t, k, 0.0),
            in_gamma_k_closure: in_gamma_k_closure(&t, k, 0.0),
            in_sigma_delta: delta.map(|d| in_sigma_delta(&t, d)).transpose()?,
            delta,
            lambda: l,
        });
    }
    let mut out = Outputs::new(args.out.as_deref(), manifest)?;
    if !args.json {
        let mut text = String::new();
        for row in &rows {
            let list: Vec<String> = row.lambda.iter().map(f64::to_string).collect();
            text += &format!("lambda = ({})\n", list.join(", "));
            for (j, s) in row.sigma.iter().enumerate() {
                text += &format!("  sigma_{} = {s}\n", j + 1);
            }
            text += &format!("  in Gamma_{k}: {}\n", row.in_gamma_k);
            text += &format!("  in closure of Gamma_{k}: {}\n", row.in_gamma_k_closure);
            if let (Some(d), Some(m)) = (row.delta, row.in_sigma_delta) {
                text += &format!("  in Sigma_delta (delta = {d}): {m}\n");
            }
        }
        print_stdout(text.trim_end())?;
        out.quiet = true;
    }
    out.summary(&SigmaSummary { k, results: rows })
}

// ---------------------------------------------------------------- classify

pub fn classify(profile: &Path, n: usize, k: usize, eps_class: Option<f64>, out_dir: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("classify");
    manifest.inputs.push(profile.to_path_buf());
    let cone = ConeParams::new(n, k)?;
    let p = RadialProfile::read_csv(open(profile)?, cone)?;
    let mut cfg = ClassifyConfig::default();
    if let Some(e) = eps_class {
        cfg.eps_class = e;
    }
    let report = classify_singularity(&p, &cfg)?;
    Outputs::new(out_dir, manifest)?.summary(&report)
}

// ---------------------------------------------------------------- solve

fn load_problem(path: &Path, manifest: &mut RunManifest) -> Result<ProblemFile> {
    manifest.config = Some(path.to_path_buf());
    read_json(path)
}

#[derive(Serialize)]
struct SolveSummary {
    mode: &'static str,
    converged: bool,
    iterations: usize,
    residual_norm: f64,
    residual_history: Vec<f64>,
    terminal_order: Option<f64>,
    theta: Option<f64>,
    theta_sequence: Option<Vec<(f64, f64)>>,
    extrapolation_change: Option<f64>,
    grid_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SolveGauge {
    W,
    V,
}

pub fn solve(problem: &Path, gauge: SolveGauge, grid: Option<usize>, out_dir: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("solve");
    let file = load_problem(problem, &mut manifest)?;
    let (prob, mut cfg, _) = RadialProblem::from_file(&file)?;
    if let Some(n) = grid {
        cfg.n_grid = n;
        cfg.validate()?;
    }
    let n = prob.cone.n();
    let eigen = prob.domain == Domain::SphereConstant && prob.p == prob.cone.k() as f64;
    let (mode, sol, extra): (_, Solution, _) = if eigen {
        let res = solve_eigenvalue(&prob, &cfg)?;
        ("eigenvalue", res.solution, Some((res.theta, res.sequence, res.extrapolation_change)))
    } else if gauge == SolveGauge::V {
        ("v_gauge", solve_v_gauge(&prob, &cfg, None)?, None)
    } else {
        ("w_gauge", newton_solve(&prob, &cfg, None)?, None)
    };
    let mut out = Outputs::new(out_dir, manifest)?;
    out.csv("solution.csv", |f| sol.write_csv(n, f))?;
    let (theta, theta_sequence, extrapolation_change) = match extra {
        Some((t, s, c)) => (Some(t), Some(s), Some(c)),
        None => (None, None, None),
    };
    out.summary(&SolveSummary {
        mode,
        converged: true,
        iterations: sol.iterations,
        residual_norm: sol.residual_norm(),
        residual_history: sol.history.clone(),
        terminal_order: sol.terminal_order,
        theta,
        theta_sequence,
        extrapolation_change,
        grid_points: sol.r.len(),
    })
}

// ---------------------------------------------------------------- continue

#[derive(Serialize)]
struct ContinueSummary {
    t_star: Option<f64>,
    v_star: Option<f64>,
    folds: Vec<FoldMarker>,
    termination: Termination,
    points: usize,
    /// Constant solutions at `t = 1`, sorted.
    solutions_at_t1: Vec<f64>,
}

pub fn continuation(problem: &Path, out_dir: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("continue");
    let file = load_problem(problem, &mut manifest)?;
    let (prob, _, cfg) = RadialProblem::from_file(&file)?;
    let res = continuation_supercritical(&prob, &cfg)?;
    let mut out = Outputs::new(out_dir, manifest)?;
    out.csv("branch.csv", |f| res.branch.write_csv(f))?;
    let fold = res.branch.folds.first();
    out.summary(&ContinueSummary {
        t_star: fold.map(|f| f.t),
        v_star: fold.map(|f| f.x[0]),
        folds: res.branch.folds.clone(),
        termination: res.branch.termination,
        points: res.branch.points.len(),
        solutions_at_t1: res.solutions_at(1.0)?,
    })
}

// ---------------------------------------------------------------- envelope

#[derive(Serialize)]
struct EnvelopeSummary {
    center: Vec<f64>,
    method: EnvelopeMethod,
    radii: usize,
    check: ViscosityReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Interpolated,
    NodeMax,
}

pub struct EnvelopeArgs {
    pub grid: PathBuf,
    pub center: Option<String>,
    pub n: usize,
    pub k: usize,
    pub method: Method,
    pub tau: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn envelope(args: EnvelopeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("envelope");
    manifest.inputs.push(args.grid.clone());
    let cone = ConeParams::new(args.n, args.k)?;
    let f = GridField::load(&args.grid)?;
    let center = match &args.center {
        Some(c) => parse_list(c)?,
        None => f.origin().iter().zip(f.upper()).map(|(a, b)| 0.5 * (a + b)).collect(),
    };
    let method = match args.method {
        Method::Interpolated => EnvelopeMethod::Interpolated,
        Method::NodeMax => EnvelopeMethod::NodeMax,
    };
    let radii = default_radii(&f, &center, method)?;
    let e = radial_envelope(&f, &center, &radii, method)?;
    let check = envelope_viscosity_check(&e, cone, args.tau)?;
    let mut out = Outputs::new(args.out.as_deref(), manifest)?;
    out.csv("envelope.csv", |w| e.write_csv(w))?;
    let passed = check.passed;
    let violations = check.violations.len();
    out.summary(&EnvelopeSummary { center, method, radii: radii.len(), check })?;
    if !passed {
        return Err(VerificationFailed(format!("{violations} envelope inequality violations")).into());
    }
    Ok(())
}

// ---------------------------------------------------------------- harnack

pub struct HarnackArgs {
    pub chi: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub n: usize,
    pub k: usize,
    pub origin: Option<f64>,
    pub min_separation: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn harnack(args: HarnackArgs) -> Result<()> {
    let mut manifest = RunManifest::new("harnack");
    let cone = ConeParams::new(args.n, args.k)?;
    let report: HarnackReport = match (&args.chi, &args.grid) {
        (Some(p), None) => {
            manifest.inputs.push(p.clone());
            let samples = RadialSamples::read_csv(open(p)?, "chi")?;
            harnack_ratio_radial(&samples, cone, args.origin)?
        }
        (None, Some(p)) => {
            manifest.inputs.push(p.clone());
            harnack_ratio_grid(&GridField::load(p)?, cone, args.min_separation)?
        }
        _ => return Err(bad("give exactly one of --chi or --grid")),
    };
    Outputs::new(args.out.as_deref(), manifest)?.summary(&report)
}

// ---------------------------------------------------------------- volume

/// Conformal factor `w` of `g = e^{-2w} g_e` for the volume command.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FactorSpec {
    /// Unit round sphere in stereographic coordinates, `w = ln((1+ρ²)/2)`.
    RoundSphere,
    Flat,
    /// `w = 2 ln ρ + offset`.
    Fundamental {
        #[serde(default)]
        offset: f64,
    },
    /// Profile CSV (`r, w[, dw, d2w]`), relative to the metric file.
    Profile {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct MetricFile {
    pub n: usize,
    pub factor: FactorSpec,
    /// Replace `w` by `ŵ(ρ) = w(1/ρ) - 2 ln ρ` (inversion about the unit sphere).
    #[serde(default)]
    pub invert: bool,
    pub s_max: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Upper radius for the quadratic fit of `Q`.
    #[serde(default)]
    pub fit_s_max: Option<f64>,
    #[serde(default = "default_slope")]
    pub end_slope_threshold: f64,
}

fn default_count() -> usize {
    100
}

fn default_slope() -> f64 {
    1e-3
}

#[derive(Serialize)]
struct VolumeSummary {
    n: usize,
    omega_over_n: f64,
    q_first: f64,
    q_last: f64,
    max_relative_increase: f64,
    non_increasing: bool,
    quadratic_coefficient: Option<f64>,
    quartic_coefficient: Option<f64>,
    end_count: Option<EndCount>,
}

pub fn volume(metric: &Path, out_dir: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("volume");
    manifest.config = Some(metric.to_path_buf());
    let m: MetricFile = read_json(metric)?;
    if m.s_max.is_nan() || m.s_max <= 0.0 || m.count < 3 {
        return Err(bad("need s_max > 0 and count >= 3"));
    }
    let s: Vec<f64> = (1..=m.count).map(|i| m.s_max * i as f64 / m.count as f64).collect();
    let curve = match &m.factor {
        FactorSpec::Profile { path } => {
            if m.invert {
                return Err(bad("invert is not supported for sampled profiles"));
            }
            let full = metric.parent().unwrap_or(Path::new(".")).join(path);
            manifest.inputs.push(full.clone());
            let p = RadialProfile::read_csv(open(&full)?, ConeParams::new(m.n, m.n)?)?;
            volume_ratio_profile(&p, &s)?
        }
        spec => {
            let w: Box<dyn Fn(f64) -> f64> = match *spec {
                FactorSpec::RoundSphere => Box::new(|r: f64| ((1.0 + r * r) / 2.0).ln()),
                FactorSpec::Flat => Box::new(|_| 0.0),
                FactorSpec::Fundamental { offset } => Box::new(move |r: f64| 2.0 * r.ln() + offset),
                FactorSpec::Profile { .. } => unreachable!(),
            };
            if m.invert {
                volume_ratio(m.n, inverted(w), &s)?
            } else {
                volume_ratio(m.n, w, &s)?
            }
        }
    };
    let fit = m.fit_s_max.map(|smax| fit_quadratic_coefficient(&curve, smax)).transpose()?;
    let end_count = end_count_limit(&curve, m.end_slope_threshold).ok();
    let mut out = Outputs::new(out_dir, manifest)?;
    out.csv("volume.csv", |f| curve.write_csv(f))?;
    let inc = curve.max_relative_increase();
    out.summary(&VolumeSummary {
        n: m.n,
        omega_over_n: omega(m.n) / m.n as f64,
        q_first: curve.q[0],
        q_last: *curve.q.last().unwrap(),
        max_relative_increase: inc,
        non_increasing: inc <= 1e-6,
        quadratic_coefficient: fit.map(|f| f.0),
        quartic_coefficient: fit.map(|f| f.1),
        end_count,
    })
}

// ---------------------------------------------------------------- verify

pub fn verify(seed: u64, scale: f64, out_dir: Option<&Path>) -> Result<()> {
    if scale.is_nan() || scale <= 0.0 {
        bail!(BadInput("--scale must be positive".into()));
    }
    let mut manifest = RunManifest::new("verify");
    manifest.seed = Some(seed);
    let report: VerifyReport = run_suite(&VerifyConfig { seed, scale });
    print_stdout(report.table().trim_end())?;
    let mut out = Outputs::new(out_dir, manifest)?;
    out.quiet = true;
    out.summary(&report)?;
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(VerificationFailed(failed.join(", ")).into());
    }
    Ok(())
}
