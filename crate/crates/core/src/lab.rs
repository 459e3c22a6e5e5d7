//! Experiment runner behind the `steklov-lab` binary.
//!
//! Every command resolves its parameters into an [`ExperimentSpec`], runs, and returns a
//! [`Report`] holding summary values, a CSV table whose first line is `# <spec as JSON>`,
//! and the list of invariants that failed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::eigen::{robin_ball_eigenvalue, steklov_lambda};
use crate::error::{Error, Result};
use crate::functionals::{
    gamma, penalty_terms, rayleigh_upper_bound, stability_gap, weighted_volume, PenaltyConfig,
    GAP_EQUALITY_TOL,
};
use crate::shape::{ShapeFile, StarShape, PROJECTION_TOL};
use crate::special::{
    ball_radius, g2_prime, hn, hn_derivative, hn_reduced, lambda_ball, stability_coefficient,
    unit_ball_volume, BesselOrder, RadialWeight,
};
use crate::sphere::{
    make_grid, Mode, SphereGrid, DEFAULT_CIRCLE_RESOLUTION, DEFAULT_SPHERE_RESOLUTION,
};

/// Relative slack for "≤" comparisons between independently rounded quantities.
pub const COMPARE_SLACK: f64 = 1e-12;
/// Gauss–Green agreement required of bulk and boundary volumes.
pub const GAUSS_GREEN_TOL: f64 = 1e-8;
/// Tolerance on the Robin residual and the Steklov bridge.
pub const ROBIN_TOL: f64 = 1e-10;
/// Spread allowed in gap/ε² across the stability scan.
pub const QUADRATIC_SPREAD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// λ, γ, P and V of the ball of measure ω
    Ball,
    /// Positivity scan of H_n and of the stability coefficient for n = 2..=N
    HnScan,
    /// gap/ε² for v = εY_2 at ε, ε/2, ε/4
    StabilityScan,
    /// Random projected perturbations at fixed ε
    Perturb,
    /// Greedy coefficient ascent on V/P − λ(Ω♯)
    Search,
    /// Trefftz eigenvalue of a planar shape
    Trefftz,
    /// Terms of the penalized functional J
    Penalty,
    /// Robin eigenvalue of the ball and the Steklov bridge
    Robin,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// Optional parameters as given on the command line or in a JSON config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Params {
    pub n: Option<usize>,
    pub omega: Option<f64>,
    pub eps: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
    pub modes: Option<usize>,
    pub delta: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub shape: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub radius: Option<f64>,
    pub s_max: Option<f64>,
    pub steps: Option<usize>,
    pub budget: Option<usize>,
    pub no_project: Option<bool>,
    pub allow_degree1: Option<bool>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($self:ident, $base:ident, $($f:ident),*) => {
        Params { $($f: $self.$f.or($base.$f)),* }
    };
}

impl Params {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Values set here win; unset ones fall back to `base`.
    pub fn over(self, base: Params) -> Params {
        overlay!(
            self,
            base,
            n,
            omega,
            eps,
            trials,
            seed,
            resolution,
            modes,
            delta,
            lambda1,
            lambda2,
            lambda3,
            shape,
            alpha,
            radius,
            s_max,
            steps,
            budget,
            no_project,
            allow_degree1,
            out
        )
    }

    /// Fill defaults for `command` and validate.
    pub fn resolve(&self, command: Command) -> Result<ExperimentSpec> {
        let n = self
            .n
            .unwrap_or(if command == Command::HnScan { 10 } else { 2 });
        if n < 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        let needs_grid = !matches!(command, Command::Ball | Command::HnScan | Command::Robin);
        if needs_grid && n > 3 {
            return Err(Error::UnsupportedDimension(n));
        }
        if command == Command::Trefftz && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        let omega = self.omega.unwrap_or_else(|| unit_ball_volume(n));
        let spec = ExperimentSpec {
            command,
            n,
            omega,
            eps: self.eps.unwrap_or(0.05),
            trials: self.trials.unwrap_or(100),
            seed: self.seed.unwrap_or(42),
            resolution: self.resolution.unwrap_or(if n == 2 {
                DEFAULT_CIRCLE_RESOLUTION
            } else {
                DEFAULT_SPHERE_RESOLUTION
            }),
            modes: self.modes.unwrap_or(16),
            delta: self.delta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            shape: self.shape.clone(),
            alpha: self.alpha.unwrap_or(-1.0),
            radius: self.radius.unwrap_or_else(|| ball_radius(n, omega)),
            s_max: self.s_max.unwrap_or(50.0),
            steps: self.steps.unwrap_or(5000),
            budget: self.budget.unwrap_or(2000),
            project: !self.no_project.unwrap_or(false),
            allow_degree1: self.allow_degree1.unwrap_or(false),
            out: self.out.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Fully resolved parameters of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub n: usize,
    pub omega: f64,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    pub resolution: usize,
    pub modes: usize,
    pub delta: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub shape: Option<PathBuf>,
    pub alpha: f64,
    pub radius: f64,
    pub s_max: f64,
    pub steps: usize,
    pub budget: usize,
    pub project: bool,
    pub allow_degree1: bool,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} = {v} is out of range")));
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("omega", self.omega);
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return bad("eps", self.eps);
        }
        if self.command == Command::Perturb && self.eps > 0.1 {
            return bad("eps (perturb allows at most 0.1)", self.eps);
        }
        if self.radius.is_nan() || self.radius <= 0.0 {
            return bad("radius", self.radius);
        }
        if self.s_max.is_nan() || self.s_max <= 0.0 {
            return bad("s-max", self.s_max);
        }
        if self.command == Command::Robin && (self.alpha.is_nan() || self.alpha > 0.0) {
            return bad("alpha", self.alpha);
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        Ok(())
    }

    pub fn penalty_config(&self) -> PenaltyConfig {
        let d = PenaltyConfig::defaults(self.n, self.omega);
        PenaltyConfig {
            delta: self.delta.unwrap_or(d.delta),
            lambda1: self.lambda1.unwrap_or(d.lambda1),
            lambda2: self.lambda2.unwrap_or(d.lambda2),
            lambda3: self.lambda3.unwrap_or(d.lambda3),
            omega: self.omega,
        }
    }

    fn grid(&self) -> Result<Arc<SphereGrid>> {
        Ok(Arc::new(make_grid(self.n, self.resolution)?))
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Result of one run.
#[derive(Clone, Debug)]
pub struct Report {
    pub spec: ExperimentSpec,
    /// Ordered key/value summary.
    pub summary: Vec<(String, Value)>,
    /// CSV text including the JSON header line.
    pub csv: String,
    /// Descriptions of violated invariants; empty when the run passes.
    pub failures: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.csv)?;
        Ok(())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "command: {}", self.spec.command)?;
        for (k, v) in &self.summary {
            writeln!(f, "{k}: {v}")?;
        }
        if self.passed() {
            writeln!(f, "invariants: pass")
        } else {
            for msg in &self.failures {
                writeln!(f, "FAIL: {msg}")?;
            }
            writeln!(f, "invariants: fail ({})", self.failures.len())
        }
    }
}

struct Builder {
    summary: Vec<(String, Value)>,
    failures: Vec<String>,
}

impl Builder {
    fn new() -> Self {
        Self {
            summary: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.push((key.to_string(), value.into()));
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(msg());
        }
    }

    fn finish<T: Serialize>(self, spec: &ExperimentSpec, rows: &[T]) -> Result<Report> {
        Ok(Report {
            spec: spec.clone(),
            summary: self.summary,
            csv: to_csv(spec, rows)?,
            failures: self.failures,
        })
    }
}

fn to_csv<T: Serialize>(spec: &ExperimentSpec, rows: &[T]) -> Result<String> {
    let mut out = format!("# {}\n", serde_json::to_string(spec)?);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv: {e}")))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

/// Run the command described by `spec`.
pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    match spec.command {
        Command::Ball => run_ball(spec),
        Command::HnScan => run_hn_scan(spec),
        Command::StabilityScan => run_stability_scan(spec),
        Command::Perturb => run_perturb(spec),
        Command::Search => run_search(spec),
        Command::Trefftz => run_trefftz(spec),
        Command::Penalty => run_penalty(spec),
        Command::Robin => run_robin(spec),
    }
}

#[derive(Serialize)]
struct BallRow {
    n: usize,
    omega: f64,
    rho: f64,
    lambda: f64,
    gamma: f64,
    perimeter: f64,
    volume: f64,
    lambda_double_radius: f64,
}

pub fn run_ball(spec: &ExperimentSpec) -> Result<Report> {
    let n = spec.n;
    let rho = ball_radius(n, spec.omega);
    let w = RadialWeight::new(n, rho)?;
    let area = n as f64 * unit_ball_volume(n);
    let scale = rho.powi(n as i32 - 1) * area;
    let row = BallRow {
        n,
        omega: spec.omega,
        rho,
        lambda: lambda_ball(n, rho),
        gamma: gamma(n, spec.omega),
        perimeter: scale * w.h_derivatives(1.0)[0],
        volume: scale * w.f_derivatives(1.0)[0],
        lambda_double_radius: lambda_ball(n, 2.0 * rho),
    };
    let mut b = Builder::new();
    b.put("rho", row.rho);
    b.put("lambda", row.lambda);
    b.put("gamma", row.gamma);
    b.put("perimeter", row.perimeter);
    b.put("volume", row.volume);
    b.put("lambda_double_radius", row.lambda_double_radius);
    b.check(row.lambda > 0.0, || {
        format!("lambda = {} is not positive", row.lambda)
    });
    b.check(
        (row.gamma * row.lambda - 1.0).abs() <= COMPARE_SLACK,
        || "gamma is not 1/lambda".into(),
    );
    b.check(
        (row.volume / row.perimeter - row.lambda).abs() <= COMPARE_SLACK * row.lambda,
        || {
            format!(
                "V/P = {} differs from lambda = {}",
                row.volume / row.perimeter,
                row.lambda
            )
        },
    );
    b.check(row.lambda_double_radius > row.lambda, || {
        "lambda is not increasing in the radius".into()
    });
    b.finish(spec, &[row])
}

#[derive(Serialize)]
struct ScanRow {
    n: usize,
    kind: &'static str,
    x: f64,
    value: f64,
    /// s H_n' − H_n for n ≥ 3, G'(s) for n = 2; empty on stability rows.
    derivative_check: Option<f64>,
}

pub fn run_hn_scan(spec: &ExperimentSpec) -> Result<Report> {
    let dims: Vec<usize> = (2..=spec.n).collect();
    let steps = spec.steps;
    let rows: Vec<Vec<ScanRow>> = dims
        .par_iter()
        .map(|&n| {
            let mut rows = Vec::with_capacity(steps + 100);
            for k in 1..=steps {
                let s = spec.s_max * k as f64 / steps as f64;
                let h = hn(n, s);
                let check = if n == 2 {
                    g2_prime(s)
                } else {
                    s * hn_derivative(n, s) - h
                };
                rows.push(ScanRow {
                    n,
                    kind: "hn",
                    x: s,
                    value: h,
                    derivative_check: Some(check),
                });
            }
            for k in 0..100 {
                let rho = 0.1 + 9.9 * k as f64 / 99.0;
                rows.push(ScanRow {
                    n,
                    kind: "stability",
                    x: rho,
                    value: stability_coefficient(n, rho),
                    derivative_check: None,
                });
            }
            rows
        })
        .collect();
    let rows: Vec<ScanRow> = rows.into_iter().flatten().collect();

    let mut b = Builder::new();
    let min_of = |kind: &str| {
        rows.iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.value)
            .fold(f64::INFINITY, f64::min)
    };
    let min_h = min_of("hn");
    let min_c = min_of("stability");
    b.put("dimensions", json!(dims));
    b.put("points_per_dimension", steps);
    b.put("min_hn", min_h);
    b.put("min_stability_coefficient", min_c);
    b.check(min_h > 0.0, || {
        format!("H_n has a non-positive sample: {min_h}")
    });
    b.check(min_c > 0.0, || {
        format!("stability coefficient has a non-positive sample: {min_c}")
    });
    for r in rows.iter().filter(|r| r.kind == "hn") {
        let c = r.derivative_check.unwrap_or(0.0);
        if r.n == 2 {
            b.check(c > 0.0, || format!("G'({}) = {c} is not positive", r.x));
        } else {
            b.check(c >= -1e-8, || {
                format!("s H'_{}(s) < H_{}(s) at s = {}", r.n, r.n, r.x)
            });
        }
    }
    // small-s behaviour: s^{-2ν} H_n(s) → (2ν+3)/(2^ν Γ(ν+1))²
    let mut worst: f64 = 0.0;
    for &n in &dims {
        let nu = BesselOrder::for_dimension(n).value();
        let lim = (2.0 * nu + 3.0) / (2f64.powf(nu) * crate::special::gamma_half(n as u32)).powi(2);
        worst = worst.max((hn_reduced(n, 1e-6) / lim - 1.0).abs());
    }
    b.put("small_s_relative_error", worst);
    b.check(worst < 1e-6, || format!("small-s limit off by {worst}"));
    b.finish(spec, &rows)
}

#[derive(Serialize)]
struct StabilityRow {
    eps: f64,
    gap: f64,
    gap_over_eps2: f64,
    ratio: f64,
    lambda_ball: f64,
}

pub fn run_stability_scan(spec: &ExperimentSpec) -> Result<Report> {
    let grid = spec.grid()?;
    let lam = lambda_ball(spec.n, ball_radius(spec.n, spec.omega));
    let mut rows = Vec::new();
    for e in [spec.eps / 4.0, spec.eps / 2.0, spec.eps] {
        let s = StarShape::from_modes(Arc::clone(&grid), spec.omega, &[(Mode::new(2, 0), e)])?
            .project_to_constraints(PROJECTION_TOL)?;
        let gap = stability_gap(&s);
        rows.push(StabilityRow {
            eps: e,
            gap,
            gap_over_eps2: gap / (e * e),
            ratio: rayleigh_upper_bound(&s),
            lambda_ball: lam,
        });
    }
    let mut b = Builder::new();
    let scaled: Vec<f64> = rows.iter().map(|r| r.gap_over_eps2).collect();
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo.abs();
    b.put("gap_over_eps2", json!(scaled));
    b.put("relative_spread", spread);
    b.check(spec.eps > 0.0, || {
        "eps must be positive for the scan".into()
    });
    b.check(rows.iter().all(|r| r.gap > 0.0), || {
        "gap is not positive".into()
    });
    b.check(spread < QUADRATIC_SPREAD, || {
        format!("gap/eps^2 varies by {spread}")
    });
    b.finish(spec, &rows)
}

/// One random projected perturbation and the quantities measured on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub status: String,
    pub eps_sup: Option<f64>,
    pub l2_sq: Option<f64>,
    pub h1_sq: Option<f64>,
    pub ratio: Option<f64>,
    pub lambda_ball: f64,
    pub gap: Option<f64>,
    pub lambda_trefftz: Option<f64>,
    pub j: Option<f64>,
    pub gauss_green: Option<f64>,
    pub ratio_ok: bool,
    pub trefftz_ok: bool,
    pub gauss_green_ok: bool,
    pub j_ok: bool,
}

impl TrialRecord {
    fn is_ball(&self) -> bool {
        self.l2_sq == Some(0.0)
    }

    /// gap/∫v², undefined for the ball.
    pub fn k_estimate(&self) -> Option<f64> {
        match (self.gap, self.l2_sq) {
            (Some(g), Some(l)) if l > 0.0 => Some(g / l),
            _ => None,
        }
    }

    /// ‖Dv‖²/‖v‖², undefined for the ball.
    pub fn poincare_ratio(&self) -> Option<f64> {
        match (self.h1_sq, self.l2_sq) {
            (Some(h), Some(l)) if l > 0.0 => Some(h / l),
            _ => None,
        }
    }

    /// Flags as implied by the stored numbers.
    pub fn recomputed_flags(&self) -> (bool, bool, bool, bool) {
        let ratio_ok = self
            .ratio
            .is_none_or(|r| r <= self.lambda_ball * (1.0 + COMPARE_SLACK));
        let trefftz_ok = match (self.lambda_trefftz, self.ratio) {
            (Some(t), Some(r)) => t <= r * (1.0 + COMPARE_SLACK),
            _ => true,
        };
        let gauss_green_ok = self.gauss_green.is_none_or(|d| d <= GAUSS_GREEN_TOL);
        let j_ok = match self.j {
            Some(j) if self.is_ball() => j.abs() <= GAP_EQUALITY_TOL,
            Some(j) => j > 0.0,
            None => true,
        };
        (ratio_ok, trefftz_ok, gauss_green_ok, j_ok)
    }

    fn set_flags(&mut self) {
        (
            self.ratio_ok,
            self.trefftz_ok,
            self.gauss_green_ok,
            self.j_ok,
        ) = self.recomputed_flags();
    }
}

/// Summary of a perturbation batch, computable from its records alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub trials: usize,
    pub projection_failures: usize,
    pub ratio_violations: usize,
    pub trefftz_violations: usize,
    pub gauss_green_failures: usize,
    pub j_failures: usize,
    pub k_empirical: Option<f64>,
    pub poincare_min: Option<f64>,
    pub max_ratio: Option<f64>,
    pub max_gauss_green: Option<f64>,
}

impl PerturbSummary {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let min = |it: &mut dyn Iterator<Item = f64>| {
            it.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
        };
        let max = |it: &mut dyn Iterator<Item = f64>| {
            it.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
        };
        Self {
            trials: records.len(),
            projection_failures: records.iter().filter(|r| r.status != "ok").count(),
            ratio_violations: records.iter().filter(|r| !r.ratio_ok).count(),
            trefftz_violations: records.iter().filter(|r| !r.trefftz_ok).count(),
            gauss_green_failures: records.iter().filter(|r| !r.gauss_green_ok).count(),
            j_failures: records.iter().filter(|r| !r.j_ok).count(),
            k_empirical: min(&mut records.iter().filter_map(TrialRecord::k_estimate)),
            poincare_min: min(&mut records.iter().filter_map(TrialRecord::poincare_ratio)),
            max_ratio: max(&mut records.iter().filter_map(|r| r.ratio)),
            max_gauss_green: max(&mut records.iter().filter_map(|r| r.gauss_green)),
        }
    }
}

/// Draw, project and evaluate one trial.
pub fn evaluate_trial(spec: &ExperimentSpec, grid: &Arc<SphereGrid>, trial: usize) -> TrialRecord {
    let lam = lambda_ball(spec.n, ball_radius(spec.n, spec.omega));
    let mut rec = TrialRecord {
        trial,
        status: "ok".into(),
        eps_sup: None,
        l2_sq: None,
        h1_sq: None,
        ratio: None,
        lambda_ball: lam,
        gap: None,
        lambda_trefftz: None,
        j: None,
        gauss_green: None,
        ratio_ok: true,
        trefftz_ok: true,
        gauss_green_ok: true,
        j_ok: true,
    };
    let mut rng = spec.rng(trial as u64);
    let shape = StarShape::random_perturbation(Arc::clone(grid), spec.omega, spec.eps, 2, &mut rng)
        .and_then(|s| s.project_to_constraints(PROJECTION_TOL));
    let shape = match shape {
        Ok(s) => s,
        Err(e) => {
            rec.status = format!("projection failed: {e}");
            return rec;
        }
    };
    let outcome = (|| -> Result<()> {
        let norms = shape.sobolev_norms();
        rec.eps_sup = Some(shape.eps_sup());
        rec.l2_sq = Some(norms.l2_sq);
        rec.h1_sq = Some(norms.h1_seminorm_sq);
        rec.ratio = Some(rayleigh_upper_bound(&shape));
        rec.gap = Some(stability_gap(&shape));
        rec.gauss_green = Some(weighted_volume(&shape)?.gauss_green_defect());
        rec.j = Some(penalty_terms(&shape, &spec.penalty_config())?.total);
        if spec.n == 2 {
            rec.lambda_trefftz = Some(steklov_lambda(&shape, spec.modes)?.lambda);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.status = format!("evaluation failed: {e}");
    }
    rec.set_flags();
    rec
}

pub fn run_perturb(spec: &ExperimentSpec) -> Result<Report> {
    let grid = spec.grid()?;
    let records: Vec<TrialRecord> = (0..spec.trials)
        .into_par_iter()
        .map(|t| evaluate_trial(spec, &grid, t))
        .collect();
    let s = PerturbSummary::from_records(&records);
    let mut b = Builder::new();
    b.put("trials", s.trials);
    b.put("projection_failures", s.projection_failures);
    b.put("ratio_violations", s.ratio_violations);
    b.put("trefftz_violations", s.trefftz_violations);
    b.put("gauss_green_failures", s.gauss_green_failures);
    b.put("j_failures", s.j_failures);
    b.put("k_empirical", json!(s.k_empirical));
    b.put("poincare_min", json!(s.poincare_min));
    b.put("max_ratio", json!(s.max_ratio));
    b.put(
        "lambda_ball",
        lambda_ball(spec.n, ball_radius(spec.n, spec.omega)),
    );
    b.check(s.ratio_violations == 0, || {
        format!(
            "{} shapes with V/P above the ball value",
            s.ratio_violations
        )
    });
    b.check(s.trefftz_violations == 0, || {
        format!(
            "{} shapes with Trefftz value above V/P",
            s.trefftz_violations
        )
    });
    b.check(s.gauss_green_failures == 0, || {
        format!("{} Gauss-Green mismatches", s.gauss_green_failures)
    });
    b.check(s.j_failures == 0, || {
        format!("{} shapes with J not positive", s.j_failures)
    });
    b.check(s.k_empirical.is_none_or(|k| k > 0.0), || {
        format!("empirical K = {:?}", s.k_empirical)
    });
    b.finish(spec, &records)
}

#[derive(Serialize)]
struct SearchRow {
    restart: usize,
    evaluation: usize,
    objective: f64,
    ratio: f64,
    lambda_sharp: f64,
    eps_sup: f64,
}

const SEARCH_RESTARTS: usize = 4;

/// Accepted rows, best (objective, ratio, λ♯) and whether acceptance stayed monotone.
type RestartOutcome = (Vec<SearchRow>, Option<(f64, f64, f64)>, bool);

struct Candidate {
    shape: StarShape,
    ratio: f64,
    lambda_sharp: f64,
}

impl Candidate {
    fn objective(&self) -> f64 {
        self.ratio - self.lambda_sharp
    }
}

fn search_candidate(spec: &ExperimentSpec, shape: StarShape) -> Option<Candidate> {
    let shape = if spec.project {
        shape.project_to_constraints(PROJECTION_TOL).ok()?
    } else {
        shape
    };
    if shape.eps_sup() > spec.eps {
        return None;
    }
    let lambda_sharp = lambda_ball(spec.n, ball_radius(spec.n, shape.measure()));
    Some(Candidate {
        ratio: rayleigh_upper_bound(&shape),
        lambda_sharp,
        shape,
    })
}

pub fn run_search(spec: &ExperimentSpec) -> Result<Report> {
    let grid = spec.grid()?;
    let top = grid.shape_band_limit().min(spec.modes.max(2));
    let min_degree = if spec.allow_degree1 { 1 } else { 2 };
    let per_restart = (spec.budget / SEARCH_RESTARTS).max(1);
    let searchable: Vec<Mode> = crate::sphere::modes(spec.n, top)
        .into_iter()
        .filter(|m| m.degree >= min_degree)
        .collect();

    let runs: Vec<RestartOutcome> = (0..SEARCH_RESTARTS)
        .into_par_iter()
        .map(|restart| {
            let mut rows = Vec::new();
            let mut rng = spec.rng(restart as u64);
            let mut evals = 0;
            let mut start = None;
            let mut scale = 0.9;
            while start.is_none() && evals < per_restart {
                evals += 1;
                start = StarShape::random_perturbation(
                    Arc::clone(&grid),
                    spec.omega,
                    spec.eps * scale,
                    min_degree,
                    &mut rng,
                )
                .ok()
                .map(|s| s.with_coefficients(s.coefficients().with_max_degree(top)))
                .and_then(Result::ok)
                .and_then(|s| search_candidate(spec, s));
                scale *= 0.7;
            }
            let Some(mut best) = start else {
                return (rows, None, true);
            };
            rows.push(SearchRow {
                restart,
                evaluation: evals,
                objective: best.objective(),
                ratio: best.ratio,
                lambda_sharp: best.lambda_sharp,
                eps_sup: best.shape.eps_sup(),
            });
            let mut step = 0.25 * spec.eps;
            let mut monotone = true;
            while evals < per_restart && step > 1e-6 * spec.eps {
                let mut improved = false;
                for &mode in &searchable {
                    for sign in [1.0, -1.0] {
                        if evals >= per_restart {
                            break;
                        }
                        evals += 1;
                        let mut c = best.shape.coefficients().clone();
                        let delta = sign * step / (1.0 + mode.degree as f64);
                        if c.set(mode, c.get(mode) + delta).is_err() {
                            continue;
                        }
                        let Some(cand) = best
                            .shape
                            .with_coefficients(c)
                            .ok()
                            .and_then(|s| search_candidate(spec, s))
                        else {
                            continue;
                        };
                        if cand.objective() > best.objective() {
                            monotone &= cand.objective()
                                > rows.last().map_or(f64::NEG_INFINITY, |r| r.objective);
                            best = cand;
                            improved = true;
                            rows.push(SearchRow {
                                restart,
                                evaluation: evals,
                                objective: best.objective(),
                                ratio: best.ratio,
                                lambda_sharp: best.lambda_sharp,
                                eps_sup: best.shape.eps_sup(),
                            });
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            (
                rows,
                Some((best.objective(), best.ratio, best.lambda_sharp)),
                monotone,
            )
        })
        .collect();

    let mut rows = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    let mut monotone = true;
    for (r, b, m) in runs {
        rows.extend(r);
        monotone &= m;
        if let Some(b) = b {
            if best.is_none_or(|cur| b.0 > cur.0) {
                best = Some(b);
            }
        }
    }
    let mut b = Builder::new();
    b.put("restarts", SEARCH_RESTARTS);
    b.put("accepted_steps", rows.len());
    b.put("project", spec.project);
    b.put("allow_degree1", spec.allow_degree1);
    match best {
        Some((obj, ratio, lam)) => {
            b.put("best_ratio", ratio);
            b.put("lambda_sharp", lam);
            b.put("margin", -obj);
            if spec.project {
                b.check(-obj > 0.0, || {
                    format!("search found V/P above the ball value by {}", obj)
                });
            }
        }
        None => b.check(false, || "no admissible starting shape found".into()),
    }
    b.check(monotone, || {
        "accepted objectives were not increasing".into()
    });
    b.finish(spec, &rows)
}

fn load_shape(spec: &ExperimentSpec, grid: Arc<SphereGrid>) -> Result<StarShape> {
    match &spec.shape {
        Some(path) => {
            let file = ShapeFile::read(path)?;
            if file.n != spec.n {
                return Err(Error::Config(format!(
                    "shape file has n = {} but --n is {}",
                    file.n, spec.n
                )));
            }
            file.to_shape(grid)
        }
        None => StarShape::ball(grid, spec.omega),
    }
}

#[derive(Serialize)]
struct TrefftzRow {
    modes: usize,
    lambda: f64,
}

pub fn run_trefftz(spec: &ExperimentSpec) -> Result<Report> {
    let grid = spec.grid()?;
    let shape = match &spec.shape {
        Some(_) => load_shape(spec, grid)?,
        None => StarShape::from_modes(grid, spec.omega, &[(Mode::new(2, 0), spec.eps)])?
            .project_to_constraints(PROJECTION_TOL)?,
    };
    let res = steklov_lambda(&shape, spec.modes)?;
    let ratio = rayleigh_upper_bound(&shape);
    let lam = lambda_ball(2, ball_radius(2, shape.measure()));
    let rows: Vec<TrefftzRow> = res
        .history
        .iter()
        .enumerate()
        .map(|(m, &l)| TrefftzRow {
            modes: m,
            lambda: l,
        })
        .collect();
    let mut b = Builder::new();
    b.put("lambda_trefftz", res.lambda);
    b.put("modes", res.modes_used);
    b.put("residual", res.residual);
    b.put("asymmetry", res.asymmetry);
    b.put("monotone", res.monotone_flag);
    b.put("ratio", ratio);
    b.put("lambda_sharp", lam);
    b.check(res.monotone_flag, || "Ritz values increased with M".into());
    b.check(res.lambda <= ratio * (1.0 + COMPARE_SLACK), || {
        format!("Trefftz value {} above V/P {ratio}", res.lambda)
    });
    if shape.is_ball() {
        b.check((res.lambda - lam).abs() <= 1e-10, || {
            format!("disk value {} differs from {lam}", res.lambda)
        });
    }
    b.finish(spec, &rows)
}

#[derive(Serialize)]
struct PenaltyRow {
    j0: f64,
    barycenter: f64,
    measure: f64,
    annulus: f64,
    total: f64,
    ball_total: f64,
}

pub fn run_penalty(spec: &ExperimentSpec) -> Result<Report> {
    let grid = spec.grid()?;
    let shape = load_shape(spec, Arc::clone(&grid))?;
    let cfg = spec.penalty_config();
    let t = penalty_terms(&shape, &cfg)?;
    let ball = penalty_terms(&StarShape::ball(grid, spec.omega)?, &cfg)?;
    let mut b = Builder::new();
    b.put("delta", cfg.delta);
    b.put("lambda1", cfg.lambda1);
    b.put("lambda2", cfg.lambda2);
    b.put("lambda3", cfg.lambda3);
    b.put("j0", t.j0);
    b.put("barycenter_term", t.barycenter);
    b.put("measure_term", t.measure);
    b.put("annulus_term", t.annulus);
    b.put("j", t.total);
    b.put("ball_j", ball.total);
    b.check(ball.total.abs() <= GAP_EQUALITY_TOL, || {
        format!("J(ball) = {}", ball.total)
    });
    b.check(
        t.barycenter >= 0.0 && t.measure >= 0.0 && t.annulus >= 0.0,
        || "negative penalty term".into(),
    );
    if shape.is_ball() && (shape.omega() - spec.omega).abs() <= COMPARE_SLACK * spec.omega {
        b.check(t.total.abs() <= GAP_EQUALITY_TOL, || {
            format!("J = {} for the ball", t.total)
        });
    } else {
        b.check(t.total > 0.0, || {
            format!("J = {} is not positive for a non-ball shape", t.total)
        });
    }
    b.finish(
        spec,
        &[PenaltyRow {
            j0: t.j0,
            barycenter: t.barycenter,
            measure: t.measure,
            annulus: t.annulus,
            total: t.total,
            ball_total: ball.total,
        }],
    )
}

#[derive(Serialize)]
struct RobinRow {
    alpha: f64,
    kappa: f64,
    lambda: f64,
    residual: f64,
    bridge: f64,
}

pub fn run_robin(spec: &ExperimentSpec) -> Result<Report> {
    let mut rows = Vec::new();
    for alpha in [spec.alpha, 2.0 * spec.alpha] {
        let r = robin_ball_eigenvalue(spec.n, spec.radius, alpha)?;
        rows.push(RobinRow {
            alpha,
            kappa: r.kappa,
            lambda: r.lambda,
            residual: r.residual,
            bridge: r.bridge,
        });
    }
    let mut b = Builder::new();
    b.put("kappa", rows[0].kappa);
    b.put("lambda", rows[0].lambda);
    b.put("residual", rows[0].residual);
    b.put("bridge", rows[0].bridge);
    b.put("lambda_doubled_alpha", rows[1].lambda);
    for r in &rows {
        b.check(r.residual.abs() <= ROBIN_TOL, || {
            format!("residual {} at alpha = {}", r.residual, r.alpha)
        });
        b.check(r.bridge.abs() <= ROBIN_TOL, || {
            format!("bridge {} at alpha = {}", r.bridge, r.alpha)
        });
    }
    if spec.alpha < 0.0 {
        b.check(rows[1].lambda.abs() > rows[0].lambda.abs(), || {
            "|lambda| did not grow with |alpha|".into()
        });
    } else {
        b.check(rows[0].lambda == 0.0, || {
            "alpha = 0 must give lambda = 0".into()
        });
    }
    b.finish(spec, &rows)
}
