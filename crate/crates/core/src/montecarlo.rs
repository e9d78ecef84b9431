//! Replicated simulate-and-estimate experiments.
//!
//! Every replicate draws its own random stream from the design seed, so the
//! report does not depend on how replicates are scheduled across threads:
//! per-replicate results are collected in replicate order and reduced
//! sequentially.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::KeyValues;
use crate::data::Side;
use crate::dgp::DgpSpec;
use crate::error::{Error, Result};
use crate::estimator::FitConfig;
use crate::format::num;
use crate::inference::{InferenceConfig, InferenceFit, Mode};
use crate::kernel::{self, KernelSpec};
use crate::normal;

/// Share of failed replicates above which a cell is flagged degenerate.
pub const DEGENERATE_SHARE: f64 = 0.10;

/// How bandwidths are chosen for each sample size.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    /// `h = c n^{-exponent}`.
    Rate { c: f64, exponent: f64 },
    /// The same bandwidths at every sample size.
    List(Vec<f64>),
}

impl BandwidthRule {
    pub fn bandwidths(&self, n: usize) -> Vec<f64> {
        match self {
            BandwidthRule::Rate { c, exponent } => vec![c * (n as f64).powf(-exponent)],
            BandwidthRule::List(hs) => hs.clone(),
        }
    }
}

/// A full experiment: design, grid of cells, estimator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub dgp: DgpSpec,
    pub sample_sizes: Vec<usize>,
    pub bandwidths: BandwidthRule,
    pub order: usize,
    pub deriv: usize,
    pub kernel: KernelSpec,
    pub pilot_order: usize,
    /// Pilot bandwidth as a multiple of `h`.
    pub pilot_ratio: f64,
    pub alpha: f64,
    pub replications: usize,
    pub eval_times: Vec<f64>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.replications < 2 {
            return Err(Error::Domain(format!("need at least 2 replications, got {}", self.replications)));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::Domain("sample sizes must be a nonempty list of positive integers".into()));
        }
        if self.eval_times.is_empty() {
            return Err(Error::Domain("eval_times must not be empty".into()));
        }
        if let Some(t) = self.eval_times.iter().find(|t| !(**t >= 0.0 && **t <= self.dgp.horizon)) {
            return Err(Error::Domain(format!("evaluation time {t} outside [0, {}]", self.dgp.horizon)));
        }
        if !(self.pilot_ratio >= 1.0 && self.pilot_ratio.is_finite()) {
            return Err(Error::Domain(format!("pilot_ratio must be at least 1, got {}", self.pilot_ratio)));
        }
        match &self.bandwidths {
            BandwidthRule::Rate { c, exponent } if !(*c > 0.0 && c.is_finite() && exponent.is_finite()) => {
                return Err(Error::Domain("bandwidth rule needs a positive constant and finite exponent".into()));
            }
            BandwidthRule::List(hs) if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) => {
                return Err(Error::Domain("bandwidths must be a nonempty list of positive values".into()));
            }
            _ => {}
        }
        for &n in &self.sample_sizes {
            for h in self.bandwidths.bandwidths(n) {
                self.inference(h)?;
            }
        }
        Ok(())
    }

    /// Inference settings for bandwidth `h`.
    pub fn inference(&self, h: f64) -> Result<InferenceConfig> {
        let fit = FitConfig::new(self.order, self.deriv, h, self.kernel.clone())?;
        let cfg = InferenceConfig {
            fit,
            pilot_order: self.pilot_order,
            pilot_bandwidth: self.pilot_ratio * h,
            alpha: self.alpha,
            mode: Mode::RobustBc,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a plan from `key = value` text. Design keys are those of
    /// [`DgpSpec::take_from`]; the rest are
    /// `sample_sizes`, `bandwidths` or `bandwidth_c` (+ `bandwidth_exponent`),
    /// `p`, `nu`, `kernel`, `q`, `pilot_ratio`, `alpha`, `replications` and
    /// `eval_times`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let dgp = DgpSpec::take_from(&mut kv)?;
        let order: usize = kv.take_or("p", 1)?;
        let deriv: usize = kv.take_or("nu", 0)?;
        let kernel: KernelSpec = match kv.take_str("kernel") {
            Some(s) => s.parse()?,
            None => KernelSpec::triangular(),
        };
        let sample_sizes = kv.take_list("sample_sizes")?.ok_or_else(|| Error::Config("missing required key 'sample_sizes'".into()))?;
        let list: Option<Vec<f64>> = kv.take_list("bandwidths")?;
        let c: Option<f64> = kv.take("bandwidth_c")?;
        let exponent: Option<f64> = kv.take("bandwidth_exponent")?;
        let bandwidths = match (list, c) {
            (Some(_), Some(_)) => return Err(Error::Config("give either 'bandwidths' or 'bandwidth_c', not both".into())),
            (Some(hs), None) if exponent.is_none() => BandwidthRule::List(hs),
            (Some(_), None) => return Err(Error::Config("'bandwidth_exponent' requires 'bandwidth_c'".into())),
            (None, Some(c)) => BandwidthRule::Rate { c, exponent: exponent.unwrap_or(1.0 / (2 * order + 3) as f64) },
            (None, None) => return Err(Error::Config("missing 'bandwidths' or 'bandwidth_c'".into())),
        };
        let plan = Self {
            sample_sizes,
            bandwidths,
            pilot_order: kv.take_or("q", order + 1)?,
            pilot_ratio: kv.take_or("pilot_ratio", 2.0)?,
            alpha: kv.take_or("alpha", 0.05)?,
            replications: kv.require("replications")?,
            eval_times: kv.take_list("eval_times")?.unwrap_or_else(|| vec![dgp.horizon]),
            order,
            deriv,
            kernel,
            dgp,
        };
        kv.finish()?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Fully resolved settings as `(key, value)` pairs.
    pub fn settings(&self) -> Vec<(&'static str, String)> {
        let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
        let mut out = self.dgp.settings();
        out.push(("sample_sizes", self.sample_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")));
        match &self.bandwidths {
            BandwidthRule::Rate { c, exponent } => {
                out.push(("bandwidth_c", num(*c)));
                out.push(("bandwidth_exponent", num(*exponent)));
            }
            BandwidthRule::List(hs) => out.push(("bandwidths", join(hs))),
        }
        out.extend([
            ("p", self.order.to_string()),
            ("nu", self.deriv.to_string()),
            ("kernel", self.kernel.name().to_string()),
            ("q", self.pilot_order.to_string()),
            ("pilot_ratio", num(self.pilot_ratio)),
            ("alpha", num(self.alpha)),
            ("replications", self.replications.to_string()),
            ("eval_times", join(&self.eval_times)),
        ]);
        out
    }

    fn cells(&self) -> Vec<(usize, usize, f64)> {
        let mut cells = Vec::new();
        for (k, &n) in self.sample_sizes.iter().enumerate() {
            for h in self.bandwidths.bandwidths(n) {
                cells.push((k, n, h));
            }
        }
        cells
    }
}

/// Estimates from one replicate at one evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PointOutcome {
    theta: f64,
    theta_bc: f64,
    var_conventional: f64,
    var_robust: f64,
    /// `(nu!)^2 e_nu' V_g e_nu` per side.
    side_var: [f64; 2],
    j_fraction: f64,
}

fn replicate_outcome(plan: &ExperimentPlan, n: usize, stream: u64, configs: &[InferenceConfig]) -> Vec<Option<Vec<PointOutcome>>> {
    let ds = match plan.dgp.simulate_replicate(n, stream) {
        Ok(ds) => ds,
        Err(_) => return vec![None; configs.len()],
    };
    let nu_fact = kernel::factorial(plan.deriv);
    configs
        .iter()
        .map(|cfg| {
            let fit = InferenceFit::new(&ds, cfg).ok()?;
            if fit.pilot_degenerate() {
                return None;
            }
            plan.eval_times
                .iter()
                .map(|&t| {
                    let j_fraction = fit.main().j_fraction(t);
                    if j_fraction == 0.0 {
                        return None;
                    }
                    let side = |g: Side| nu_fact * nu_fact * fit.variance_path(g, t)[(plan.deriv, plan.deriv)];
                    Some(PointOutcome {
                        theta: fit.theta(t),
                        theta_bc: fit.bias_corrected(t).ok()?,
                        var_conventional: fit.theta_variance(t),
                        var_robust: fit.robust_variance(t).ok()?,
                        side_var: [side(Side::Control), side(Side::Treated)],
                        j_fraction,
                    })
                })
                .collect()
        })
        .collect()
}

/// Summary of one `(n, h, t)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n: usize,
    pub h: f64,
    pub b: f64,
    pub t: f64,
    pub replications: usize,
    pub failed: usize,
    pub degenerate: bool,
    /// What `Theta^{(nu)}` estimates: `∫ {abar_1^{(nu)} - abar_0^{(nu)}}`.
    pub target: f64,
    /// `Theta(t, z0)` from the structural hazards.
    pub theta_causal: f64,
    pub theta_risk: f64,
    pub mean_theta: f64,
    pub mean_bias: f64,
    pub mc_se: f64,
    pub emp_var: f64,
    pub mean_var: f64,
    pub mean_var_robust: f64,
    pub mean_theta_bc: f64,
    pub bias_bc: f64,
    pub mc_se_bc: f64,
    pub emp_var_bc: f64,
    pub coverage_raw: f64,
    pub coverage_bc: f64,
    pub coverage_robust: f64,
    /// Central 95% range of the coverage estimate if the true rate were
    /// `1 - alpha`.
    pub coverage_band: (f64, f64),
    pub mean_j_fraction: f64,
    pub leading_bias: f64,
    /// Mean of `(nu!)^2 e_nu' V_g e_nu`, `[control, treated]`.
    pub mean_side_var: [f64; 2],
    /// Limits of the same quantities.
    pub oracle_side_var: [f64; 2],
}

impl CellSummary {
    fn metrics(&self) -> Vec<(&'static str, String)> {
        vec![
            ("replications", self.replications.to_string()),
            ("failed", self.failed.to_string()),
            ("degenerate", (self.degenerate as u8).to_string()),
            ("target", num(self.target)),
            ("theta_causal", num(self.theta_causal)),
            ("theta_risk", num(self.theta_risk)),
            ("mean_theta", num(self.mean_theta)),
            ("mean_bias", num(self.mean_bias)),
            ("mc_se", num(self.mc_se)),
            ("emp_var", num(self.emp_var)),
            ("mean_var", num(self.mean_var)),
            ("mean_var_robust", num(self.mean_var_robust)),
            ("mean_theta_bc", num(self.mean_theta_bc)),
            ("bias_bc", num(self.bias_bc)),
            ("mc_se_bc", num(self.mc_se_bc)),
            ("emp_var_bc", num(self.emp_var_bc)),
            ("coverage_raw", num(self.coverage_raw)),
            ("coverage_bc", num(self.coverage_bc)),
            ("coverage_robust", num(self.coverage_robust)),
            ("coverage_band_lo", num(self.coverage_band.0)),
            ("coverage_band_hi", num(self.coverage_band.1)),
            ("mean_j_fraction", num(self.mean_j_fraction)),
            ("leading_bias", num(self.leading_bias)),
            ("mean_side_var_control", num(self.mean_side_var[0])),
            ("mean_side_var_treated", num(self.mean_side_var[1])),
            ("oracle_side_var_control", num(self.oracle_side_var[0])),
            ("oracle_side_var_treated", num(self.oracle_side_var[1])),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct MCReport {
    pub plan: ExperimentPlan,
    pub cells: Vec<CellSummary>,
    /// Wall-clock time of the run; not part of the CSV output.
    pub elapsed: Duration,
}

impl MCReport {
    /// Cells for sample size `n` at time `t`, in bandwidth order.
    pub fn select(&self, n: usize, t: f64) -> Vec<&CellSummary> {
        self.cells.iter().filter(|c| c.n == n && c.t == t).collect()
    }

    /// Tidy CSV: one row per cell and metric, after a `#` header echoing the
    /// resolved plan.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in self.plan.settings() {
            writeln!(out, "# {k} = {v}")?;
        }
        writeln!(out, "n,h,b,t,metric,value")?;
        for c in &self.cells {
            for (metric, value) in c.metrics() {
                writeln!(out, "{},{},{},{},{metric},{value}", c.n, num(c.h), num(c.b), num(c.t))?;
            }
        }
        Ok(())
    }
}

/// Central 95% range of an empirical coverage over `r` Bernoulli(`p`) draws.
pub fn binomial_band(p: f64, r: usize) -> (f64, f64) {
    let half = normal::two_sided_critical(0.05) * (p * (1.0 - p) / r as f64).sqrt();
    (p - half, p + half)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn summarize(plan: &ExperimentPlan, n: usize, cfg: &InferenceConfig, t: f64, outcomes: &[Option<PointOutcome>]) -> Result<CellSummary> {
    let ok: Vec<PointOutcome> = outcomes.iter().flatten().copied().collect();
    let failed = outcomes.len() - ok.len();
    let h = cfg.fit.bandwidth;
    let target = plan.dgp.target(t, plan.deriv)?;
    let (theta_causal, theta_risk) = plan.dgp.true_theta(t);
    let z = normal::two_sided_critical(plan.alpha);
    let covers = |center: f64, var: f64| ((center - target).abs() <= z * var.max(0.0).sqrt()) as u8 as f64;
    let col = |f: &dyn Fn(&PointOutcome) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
    let theta = col(&|o| o.theta);
    let theta_bc = col(&|o| o.theta_bc);
    let r = ok.len().max(1) as f64;
    Ok(CellSummary {
        n,
        h,
        b: cfg.pilot_bandwidth,
        t,
        replications: ok.len(),
        failed,
        degenerate: failed as f64 > DEGENERATE_SHARE * outcomes.len() as f64,
        target,
        theta_causal,
        theta_risk,
        mean_theta: mean(&theta),
        mean_bias: mean(&theta) - target,
        mc_se: (sample_var(&theta) / r).sqrt(),
        emp_var: sample_var(&theta),
        mean_var: mean(&col(&|o| o.var_conventional)),
        mean_var_robust: mean(&col(&|o| o.var_robust)),
        mean_theta_bc: mean(&theta_bc),
        bias_bc: mean(&theta_bc) - target,
        mc_se_bc: (sample_var(&theta_bc) / r).sqrt(),
        emp_var_bc: sample_var(&theta_bc),
        coverage_raw: mean(&col(&|o| covers(o.theta, o.var_conventional))),
        coverage_bc: mean(&col(&|o| covers(o.theta_bc, o.var_conventional))),
        coverage_robust: mean(&col(&|o| covers(o.theta_bc, o.var_robust))),
        coverage_band: binomial_band(1.0 - plan.alpha, ok.len().max(1)),
        mean_j_fraction: mean(&col(&|o| o.j_fraction)),
        leading_bias: plan.dgp.leading_bias(&plan.kernel, plan.order, plan.deriv, h, t)?,
        mean_side_var: [mean(&col(&|o| o.side_var[0])), mean(&col(&|o| o.side_var[1]))],
        oracle_side_var: [
            plan.dgp.limiting_side_variance(Side::Control, &plan.kernel, plan.order, plan.deriv, t)?,
            plan.dgp.limiting_side_variance(Side::Treated, &plan.kernel, plan.order, plan.deriv, t)?,
        ],
    })
}

/// Runs the plan on the current rayon pool.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<MCReport> {
    plan.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    for (k, &n) in plan.sample_sizes.iter().enumerate() {
        let configs = plan
            .bandwidths
            .bandwidths(n)
            .into_iter()
            .map(|h| plan.inference(h))
            .collect::<Result<Vec<_>>>()?;
        // Replicate streams are disjoint across sample sizes.
        let base = (k as u64) << 32;
        let per_rep: Vec<Vec<Option<Vec<PointOutcome>>>> = (0..plan.replications as u64)
            .into_par_iter()
            .map(|r| replicate_outcome(plan, n, base + r, &configs))
            .collect();
        for (c, cfg) in configs.iter().enumerate() {
            for (i, &t) in plan.eval_times.iter().enumerate() {
                let outcomes: Vec<Option<PointOutcome>> =
                    per_rep.iter().map(|rep| rep[c].as_ref().map(|pts| pts[i])).collect();
                cells.push(summarize(plan, n, cfg, t, &outcomes)?);
            }
        }
    }
    debug_assert_eq!(cells.len(), plan.cells().len() * plan.eval_times.len());
    Ok(MCReport { plan: plan.clone(), cells, elapsed: start.elapsed() })
}

/// Runs the plan on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(plan: &ExperimentPlan, threads: usize) -> Result<MCReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_experiment(plan))
}

/// Least-squares fit of `log |mean bias|` on `log h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRate {
    pub slope: f64,
    pub se: f64,
    /// `p + 1 - nu`.
    pub expected: f64,
    pub points: Vec<(f64, f64)>,
}

/// Fits the bias rate over the bandwidths of the largest sample size at time
/// `t`. Fails as inconclusive when no cell's mean bias exceeds two Monte
/// Carlo standard errors.
pub fn bias_rate_check(report: &MCReport, p: usize, nu: usize, t: f64) -> Result<BiasRate> {
    let n = *report.plan.sample_sizes.iter().max().ok_or_else(|| Error::Domain("report has no sample sizes".into()))?;
    let cells = report.select(n, t);
    if cells.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 bandwidths at n = {n}, found {}", cells.len())));
    }
    if cells.iter().all(|c| c.mean_bias.abs() <= 2.0 * c.mc_se) {
        return Err(Error::Inconclusive("mean bias is within 2 Monte Carlo standard errors of zero at every bandwidth".into()));
    }
    let points: Vec<(f64, f64)> = cells.iter().map(|c| (c.h.ln(), c.mean_bias.abs().ln())).collect();
    let (slope, se) = ols_slope(&points);
    Ok(BiasRate { slope, se, expected: (p + 1 - nu) as f64, points })
}

/// Slope and its standard error for a simple linear regression.
pub fn ols_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = if points.len() > 2 { (ssr / (k - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::Hazard;

    fn smoke_plan() -> ExperimentPlan {
        ExperimentPlan::parse(
            "c0 = 1\nd0 = 0.5\nc2 = 1\ncensoring_rate = 0.3\nseed = 9\n\
             sample_sizes = 300\nbandwidths = 0.5, 0.8\nreplications = 4\neval_times = 0.5, 1\n",
        )
        .unwrap()
    }

    #[test]
    fn plan_parsing_and_defaults() {
        let plan = smoke_plan();
        assert_eq!(plan.pilot_order, 2);
        assert_eq!(plan.pilot_ratio, 2.0);
        assert_eq!(plan.dgp.baseline, Hazard { k0: 1.0, k2: 1.0, ..Hazard::default() });
        let rate = ExperimentPlan::parse("sample_sizes = 1024\nbandwidth_c = 0.8\nreplications = 2\n").unwrap();
        assert_eq!(rate.bandwidths, BandwidthRule::Rate { c: 0.8, exponent: 0.2 });
        assert!((rate.bandwidths.bandwidths(1024)[0] - 0.2).abs() < 1e-15);
        assert!(ExperimentPlan::parse("sample_sizes = 10\nbandwidths = 0.5\nreplications = 1\n").is_err());
        assert!(ExperimentPlan::parse("sample_sizes = 10\nreplications = 3\n").is_err());
        assert!(ExperimentPlan::parse("sample_sizes = 10\nbandwidths = 0.5\nreplications = 3\nextra = 1\n").is_err());
        let text: String = plan.settings().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(ExperimentPlan::parse(&text).unwrap(), plan);
    }

    #[test]
    fn smoke_report_is_finite_and_deterministic() {
        let plan = smoke_plan();
        let a = run_experiment_with_threads(&plan, 1).unwrap();
        let b = run_experiment_with_threads(&plan, 3).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.cells.len(), 4);
        for c in &a.cells {
            assert_eq!(c.replications + c.failed, 4);
            assert!(c.mean_theta.is_finite() && c.emp_var.is_finite());
            assert!((0.0..=1.0).contains(&c.coverage_robust));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn binomial_band_matches_normal_approximation() {
        let (lo, hi) = binomial_band(0.95, 1000);
        assert!((lo - 0.9365).abs() < 5e-4 && (hi - 0.9635).abs() < 5e-4);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let pts = [(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)];
        let (s, se) = ols_slope(&pts);
        assert!((s - 2.0).abs() < 1e-15);
        assert!(se.abs() < 1e-12);
    }

    #[test]
    fn bias_rate_needs_three_bandwidths() {
        let report = run_experiment(&smoke_plan()).unwrap();
        assert!(matches!(bias_rate_check(&report, 1, 0, 1.0), Err(Error::Domain(_))));
    }
}
