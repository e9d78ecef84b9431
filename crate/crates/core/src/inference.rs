//! Variance estimation, bias correction and pointwise confidence intervals.
//!
//! The variance of `Theta^{(nu)}(t)` is estimated from the optional variation
//! of the two sides' estimation martingales,
//!
//! ```text
//! Var[Theta^{(nu)}(t)] ≈ (nu!)^2 e_nu' {V_0(t) + V_1(t)} e_nu / (n h^{2 nu + 1})
//! V_g(t) = (h/n) Σ_i 1{X_i=g} K_h(Z_i - z0)^2 ∫_0^t J Gamma^{-1} r r' Gamma^{-1} dN_i
//! ```
//!
//! Bias correction subtracts `h^{p+1-nu} s_g c_nu A^{(p+1)}_{g,q}(t, b)`, where
//! the pilot derivative comes from an order-`q` fit with bandwidth `b >= h`,
//! `c_nu` is [`kernel::bias_constant`] and `s_g` is `+1` on the treated side
//! and [`kernel::left_bias_sign`] on the control side. The robust variance
//! accounts for the pilot's own noise and its covariation with the main fit.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::{event_schedule, Side, SurvivalDataset};
use crate::error::{Error, Result};
use crate::estimator::{FitConfig, ThetaFit};
use crate::kernel::{self, MAX_ORDER};
use crate::normal;

/// Which interval to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Centered at the raw estimate with the conventional variance.
    Undersmoothed,
    /// Centered at the bias-corrected estimate, conventional variance.
    ConventionalBc,
    /// Centered at the bias-corrected estimate, robust variance.
    RobustBc,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Undersmoothed => "raw",
            Mode::ConventionalBc => "bc",
            Mode::RobustBc => "robust",
        }
    }

    pub const ALL: [Mode; 3] = [Mode::Undersmoothed, Mode::ConventionalBc, Mode::RobustBc];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "undersmoothed" => Ok(Mode::Undersmoothed),
            "bc" | "conventional" | "conventional-bc" => Ok(Mode::ConventionalBc),
            "robust" | "robust-bc" => Ok(Mode::RobustBc),
            other => Err(Error::Domain(format!("unknown mode '{other}' (expected raw, bc or robust)"))),
        }
    }
}

/// Main fit plus the pilot used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub fit: FitConfig,
    /// Pilot polynomial order `q >= p + 1`.
    pub pilot_order: usize,
    /// Pilot bandwidth `b >= h`.
    pub pilot_bandwidth: f64,
    pub alpha: f64,
    pub mode: Mode,
}

impl InferenceConfig {
    /// Defaults: `q = p + 1`, `b = 2h`, `alpha = 0.05`, robust intervals.
    pub fn new(fit: FitConfig) -> Result<Self> {
        let cfg = Self {
            pilot_order: fit.order + 1,
            pilot_bandwidth: 2.0 * fit.bandwidth,
            fit,
            alpha: 0.05,
            mode: Mode::RobustBc,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        let (p, q) = (self.fit.order, self.pilot_order);
        if q < p + 1 {
            return Err(Error::Domain(format!("pilot order {q} must be at least p + 1 = {}", p + 1)));
        }
        if q > MAX_ORDER {
            return Err(Error::Domain(format!("pilot order {q} exceeds maximum {MAX_ORDER}")));
        }
        if !(self.pilot_bandwidth.is_finite() && self.pilot_bandwidth >= self.fit.bandwidth) {
            return Err(Error::Domain(format!(
                "pilot bandwidth {} must be finite and at least h = {}",
                self.pilot_bandwidth, self.fit.bandwidth
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    /// `rho = h / b`.
    pub fn rho(&self) -> f64 {
        self.fit.bandwidth / self.pilot_bandwidth
    }

    /// The pilot fit: order `q`, bandwidth `b`, derivative `p + 1`.
    pub fn pilot_config(&self) -> Result<FitConfig> {
        let mut cfg = self.fit.with_order_bandwidth(self.pilot_order, self.pilot_bandwidth)?;
        cfg.deriv = self.fit.order + 1;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Side-specific pieces of the robust variance, each already scaled by
/// `(nu!)^2 / (n h^{2 nu + 1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustParts {
    /// `e_nu' V_g e_nu`.
    pub conventional: f64,
    /// `c^2 e_{p+1}' V^{(q,b)}_g e_{p+1}`, before the `rho^{2p+3}` weight.
    pub pilot: f64,
    /// `s_g c e_nu' C_g e_{p+1}`, before the `-2 rho^{p+2}` weight.
    pub cross: f64,
}

impl RobustParts {
    pub fn combine(&self, rho: f64, p: usize) -> f64 {
        self.conventional + rho.powi(2 * p as i32 + 3) * self.pilot - 2.0 * rho.powi(p as i32 + 2) * self.cross
    }
}

/// Main and pilot fits on one dataset, queried at arbitrary times.
#[derive(Debug, Clone)]
pub struct InferenceFit {
    config: InferenceConfig,
    main: ThetaFit,
    pilot: ThetaFit,
    /// `Gamma_p^{-1} vartheta_{p,p+1}` of the kernel.
    bias_direction: DVector<f64>,
    n: usize,
}

impl InferenceFit {
    pub fn new(ds: &SurvivalDataset, config: &InferenceConfig) -> Result<Self> {
        config.validate()?;
        let schedule = event_schedule(ds);
        let main = ThetaFit::with_schedule(ds, &schedule, &config.fit)?;
        let pilot = ThetaFit::with_schedule(ds, &schedule, &config.pilot_config()?)?;
        let bias_direction = kernel::bias_vector(&config.fit.kernel, config.fit.order)?;
        Ok(Self { config: config.clone(), main, pilot, bias_direction, n: ds.len() })
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    pub fn main(&self) -> &ThetaFit {
        &self.main
    }

    pub fn pilot(&self) -> &ThetaFit {
        &self.pilot
    }

    pub fn theta(&self, t: f64) -> f64 {
        self.main.theta(t)
    }

    fn scale(&self) -> f64 {
        let f = &self.config.fit;
        if self.n == 0 {
            return 0.0;
        }
        let nu_fact = kernel::factorial(f.deriv);
        nu_fact * nu_fact / (self.n as f64 * f.bandwidth.powi(2 * f.deriv as i32 + 1))
    }

    fn side_sign(&self, g: Side) -> f64 {
        match g {
            Side::Treated => 1.0,
            Side::Control => kernel::left_bias_sign(self.config.fit.order, self.config.fit.deriv),
        }
    }

    /// `e_nu' Gamma_p^{-1} vartheta_{p,p+1}`.
    fn bias_coefficient(&self) -> f64 {
        self.bias_direction[self.config.fit.deriv]
    }

    /// `V_{g,p,n}(t, h)`.
    pub fn variance_path(&self, g: Side, t: f64) -> DMatrix<f64> {
        self.main.side(g).variance(t)
    }

    /// Estimated variance of `A^{(nu)}_g(t)`.
    pub fn side_variance(&self, g: Side, t: f64) -> f64 {
        let nu = self.config.fit.deriv;
        self.scale() * self.variance_path(g, t)[(nu, nu)]
    }

    /// Estimated variance of `Theta^{(nu)}(t)`.
    pub fn theta_variance(&self, t: f64) -> f64 {
        Side::BOTH.iter().map(|&g| self.side_variance(g, t)).sum()
    }

    /// True when the pilot has in-window events but never an invertible
    /// design at any of them.
    pub fn pilot_degenerate(&self) -> bool {
        self.pilot.has_events() && self.pilot.j_fraction(f64::INFINITY) == 0.0
    }

    fn check_pilot(&self) -> Result<()> {
        if self.pilot_degenerate() {
            Err(Error::DegeneratePilot { bandwidth: self.config.pilot_bandwidth })
        } else {
            Ok(())
        }
    }

    /// Estimated leading bias of `A^{(nu)}_g(t)`.
    pub fn side_bias(&self, g: Side, t: f64) -> Result<f64> {
        self.check_pilot()?;
        let f = &self.config.fit;
        let c = kernel::bias_constant(&f.kernel, f.order, f.deriv)?;
        let hpow = f.bandwidth.powi((f.order + 1 - f.deriv) as i32);
        Ok(hpow * self.side_sign(g) * c * self.pilot.side(g).derivative(t))
    }

    /// `Theta^{bc}(t)`.
    pub fn bias_corrected(&self, t: f64) -> Result<f64> {
        Ok(self.theta(t) - self.side_bias(Side::Treated, t)? + self.side_bias(Side::Control, t)?)
    }

    /// Empirical cross-covariation `C_g(t)` between the order-`p` fit at `h`
    /// and the order-`q` fit at `b`, a `(p+1) x (q+1)` matrix.
    pub fn cross_covariation(&self, g: Side, t: f64) -> DMatrix<f64> {
        let (p, q) = (self.config.fit.order, self.config.pilot_order);
        let mut out = DMatrix::zeros(p + 1, q + 1);
        if self.n == 0 {
            return out;
        }
        let main: HashMap<usize, (f64, &DVector<f64>)> = self
            .main
            .side(g)
            .jumps
            .iter()
            .take_while(|j| j.time <= t)
            .flat_map(|j| j.events.iter().map(|e| (e.record, (e.weight, &e.solved))))
            .collect();
        let scale = self.config.pilot_bandwidth / self.n as f64;
        for jump in self.pilot.side(g).jumps.iter().take_while(|j| j.time <= t) {
            for e in &jump.events {
                if let Some((wh, a)) = main.get(&e.record) {
                    out.ger(scale * wh * e.weight, a, &e.solved, 1.0);
                }
            }
        }
        out
    }

    /// The three scaled pieces of the robust variance on side `g`.
    pub fn robust_parts(&self, g: Side, t: f64) -> RobustParts {
        let f = &self.config.fit;
        let (nu, p1) = (f.deriv, f.order + 1);
        let scale = self.scale();
        let c = self.bias_coefficient();
        let pilot_v = self.pilot.side(g).variance(t);
        RobustParts {
            conventional: scale * self.variance_path(g, t)[(nu, nu)],
            pilot: scale * c * c * pilot_v[(p1, p1)],
            cross: scale * self.side_sign(g) * c * self.cross_covariation(g, t)[(nu, p1)],
        }
    }

    /// Robust variance of `Theta^{bc}(t)` with an explicit `rho`; `rho = 0`
    /// recovers the conventional variance.
    pub fn robust_variance_at(&self, t: f64, rho: f64) -> f64 {
        let p = self.config.fit.order;
        Side::BOTH.iter().map(|&g| self.robust_parts(g, t).combine(rho, p)).sum()
    }

    /// Robust variance of `Theta^{bc}(t)` at the configured `rho = h / b`.
    pub fn robust_variance(&self, t: f64) -> Result<f64> {
        self.check_pilot()?;
        Ok(self.robust_variance_at(t, self.config.rho()))
    }

    /// Intervals on `grid` for the configured mode.
    pub fn band(&self, grid: &[f64]) -> Result<EffectEstimate> {
        let mode = self.config.mode;
        if mode != Mode::Undersmoothed {
            self.check_pilot()?;
        }
        let z = normal::two_sided_critical(self.config.alpha);
        let mut est = EffectEstimate {
            mode,
            alpha: self.config.alpha,
            grid: grid.to_vec(),
            window_sizes: [self.main.control.window_size(), self.main.treated.window_size()],
            ..EffectEstimate::default()
        };
        let pilot_ok = !self.pilot_degenerate();
        for &t in grid {
            let theta = self.theta(t);
            let var_c = self.theta_variance(t);
            let (theta_bc, var_r) = if pilot_ok {
                (self.bias_corrected(t)?, self.robust_variance_at(t, self.config.rho()))
            } else {
                (f64::NAN, f64::NAN)
            };
            let (center, var) = match mode {
                Mode::Undersmoothed => (theta, var_c),
                Mode::ConventionalBc => (theta_bc, var_c),
                Mode::RobustBc => (theta_bc, var_r),
            };
            let half = z * var.max(0.0).sqrt();
            est.theta.push(theta);
            est.theta_bc.push(theta_bc);
            est.var_conventional.push(var_c);
            est.var_robust.push(var_r);
            est.ci_lo.push(center - half);
            est.ci_hi.push(center + half);
            est.j_fraction.push(self.main.j_fraction(t));
            est.width_conventional.push(2.0 * z * var_c.max(0.0).sqrt());
            est.width_robust.push(2.0 * z * var_r.max(0.0).sqrt());
        }
        Ok(est)
    }
}

/// Estimates, variances and intervals on a time grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EffectEstimate {
    pub mode: Mode,
    pub alpha: f64,
    pub grid: Vec<f64>,
    pub theta: Vec<f64>,
    /// NaN in undersmoothed mode when the pilot fit is degenerate.
    pub theta_bc: Vec<f64>,
    pub var_conventional: Vec<f64>,
    pub var_robust: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub j_fraction: Vec<f64>,
    /// In-window records per side, `[control, treated]`.
    pub window_sizes: [usize; 2],
    pub width_conventional: Vec<f64>,
    pub width_robust: Vec<f64>,
}

impl Default for Mode {
    fn default() -> Self {
        Mode::RobustBc
    }
}

impl EffectEstimate {
    /// Center of the interval at grid index `k`.
    pub fn center(&self, k: usize) -> f64 {
        match self.mode {
            Mode::Undersmoothed => self.theta[k],
            _ => self.theta_bc[k],
        }
    }
}

/// `V_{g,p,n}(t, h)`.
pub fn variance_path(ds: &SurvivalDataset, side: Side, cfg: &FitConfig, t: f64) -> Result<DMatrix<f64>> {
    Ok(crate::estimator::fit_side(ds, side, cfg)?.variance(t))
}

/// Estimated variance of `Theta^{(nu)}(t, h)`.
pub fn theta_variance(ds: &SurvivalDataset, cfg: &FitConfig, t: f64) -> Result<f64> {
    let fit = ThetaFit::new(ds, cfg)?;
    if ds.is_empty() {
        return Ok(0.0);
    }
    let nu = cfg.deriv;
    let nu_fact = kernel::factorial(nu);
    let scale = nu_fact * nu_fact / (ds.len() as f64 * cfg.bandwidth.powi(2 * nu as i32 + 1));
    Ok(Side::BOTH.iter().map(|&g| scale * fit.side(g).variance(t)[(nu, nu)]).sum())
}

pub fn bias_corrected_theta(ds: &SurvivalDataset, icfg: &InferenceConfig, t: f64) -> Result<f64> {
    InferenceFit::new(ds, icfg)?.bias_corrected(t)
}

pub fn cross_covariation(ds: &SurvivalDataset, side: Side, icfg: &InferenceConfig, t: f64) -> Result<DMatrix<f64>> {
    Ok(InferenceFit::new(ds, icfg)?.cross_covariation(side, t))
}

pub fn robust_variance(ds: &SurvivalDataset, icfg: &InferenceConfig, t: f64) -> Result<f64> {
    InferenceFit::new(ds, icfg)?.robust_variance(t)
}

pub fn confidence_band(ds: &SurvivalDataset, icfg: &InferenceConfig, grid: &[f64]) -> Result<EffectEstimate> {
    InferenceFit::new(ds, icfg)?.band(grid)
}

/// `h = c n^{-1/(2p+3)}`, the rate of the MSE-optimal bandwidth for an
/// order-`p` fit.
pub fn rate_bandwidth(c: f64, n: usize, p: usize) -> f64 {
    c * (n as f64).powf(-1.0 / (2 * p + 3) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::kernel::KernelSpec;

    fn rec(time: f64, event: bool, forcing: f64) -> Record {
        Record { time, event, forcing }
    }

    fn sample() -> SurvivalDataset {
        let mut records = Vec::new();
        let mut state = 12345_u64;
        for i in 0..120 {
            state = (state * 9301 + 49297) % 233280;
            let z = 2.0 * state as f64 / 233280.0 - 1.0;
            let t = 0.05 + ((i * 37) % 97) as f64 / 40.0;
            records.push(rec(t, i % 4 != 0, z));
        }
        SurvivalDataset::new(records, 0.0, 2.0).unwrap()
    }

    fn icfg(p: usize, h: f64, b: f64) -> InferenceConfig {
        let fit = FitConfig::new(p, 0, h, KernelSpec::triangular()).unwrap();
        InferenceConfig { pilot_bandwidth: b, ..InferenceConfig::new(fit).unwrap() }
    }

    #[test]
    fn config_validation() {
        let fit = FitConfig::new(1, 0, 0.5, KernelSpec::uniform()).unwrap();
        let base = InferenceConfig::new(fit).unwrap();
        assert_eq!(base.pilot_order, 2);
        assert_eq!(base.pilot_bandwidth, 1.0);
        assert_eq!(base.rho(), 0.5);
        assert!(InferenceConfig { pilot_order: 1, ..base.clone() }.validate().is_err());
        assert!(InferenceConfig { pilot_bandwidth: 0.4, ..base.clone() }.validate().is_err());
        assert!(InferenceConfig { alpha: 0.0, ..base.clone() }.validate().is_err());
        assert!(InferenceConfig { pilot_order: 5, ..base }.validate().is_err());
        assert_eq!("robust".parse::<Mode>().unwrap(), Mode::RobustBc);
        assert!("other".parse::<Mode>().is_err());
    }

    #[test]
    fn single_event_nelson_aalen_variance() {
        // Three treated subjects in the window, one control; p = 0 uniform.
        let h = 0.5;
        let ds = SurvivalDataset::new(
            vec![rec(1.0, true, 0.1), rec(2.0, false, 0.2), rec(3.0, false, 0.3), rec(4.0, false, -0.1)],
            0.0,
            5.0,
        )
        .unwrap();
        let cfg = FitConfig::new(0, 0, h, KernelSpec::uniform()).unwrap();
        let v = variance_path(&ds, Side::Treated, &cfg, 5.0).unwrap();
        let n = 4.0;
        assert!((v[(0, 0)] - n * h / 9.0).abs() < 1e-14);
        assert!((theta_variance(&ds, &cfg, 5.0).unwrap() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn no_events_gives_zero_variance() {
        let ds = SurvivalDataset::new(vec![rec(1.0, false, 0.1), rec(1.0, false, -0.1)], 0.0, 2.0).unwrap();
        let cfg = FitConfig::new(1, 0, 1.0, KernelSpec::uniform()).unwrap();
        assert_eq!(theta_variance(&ds, &cfg, 2.0).unwrap(), 0.0);
        let ic = InferenceConfig::new(cfg).unwrap();
        let fit = InferenceFit::new(&ds, &ic).unwrap();
        assert_eq!(fit.cross_covariation(Side::Treated, 2.0), DMatrix::zeros(2, 3));
        assert_eq!(fit.bias_corrected(2.0).unwrap(), fit.theta(2.0));
    }

    #[test]
    fn cross_covariation_reduces_to_variance() {
        let ds = sample();
        let fit = FitConfig::new(1, 0, 0.6, KernelSpec::triangular()).unwrap();
        let ic = InferenceConfig { pilot_order: 1, pilot_bandwidth: 0.6, ..InferenceConfig::new(fit).unwrap() };
        // q = p is outside the valid pilot range; build the fits directly.
        let inf = InferenceFit {
            main: ThetaFit::new(&ds, &ic.fit).unwrap(),
            pilot: ThetaFit::new(&ds, &ic.fit).unwrap(),
            bias_direction: kernel::bias_vector(&ic.fit.kernel, 1).unwrap(),
            n: ds.len(),
            config: ic,
        };
        for g in Side::BOTH {
            for t in [0.5, 1.0, 2.0] {
                let c = inf.cross_covariation(g, t);
                let v = inf.variance_path(g, t);
                assert!((c - v).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn robust_variance_matches_squared_influence() {
        let ds = sample();
        let ic = icfg(1, 0.5, 0.9);
        let inf = InferenceFit::new(&ds, &ic).unwrap();
        let rho = ic.rho();
        let c = inf.bias_coefficient();
        let n = ds.len() as f64;
        let t = 1.5;
        let mut direct = 0.0;
        for g in Side::BOTH {
            let s = inf.side_sign(g);
            let main: HashMap<usize, f64> = inf
                .main
                .side(g)
                .jumps
                .iter()
                .filter(|j| j.time <= t)
                .flat_map(|j| j.events.iter().map(|e| (e.record, e.weight * e.solved[0])))
                .collect();
            let pilot: HashMap<usize, f64> = inf
                .pilot
                .side(g)
                .jumps
                .iter()
                .filter(|j| j.time <= t)
                .flat_map(|j| j.events.iter().map(|e| (e.record, e.weight * e.solved[2])))
                .collect();
            let mut keys: Vec<_> = main.keys().chain(pilot.keys()).copied().collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let a = main.get(&k).copied().unwrap_or(0.0);
                let b = pilot.get(&k).copied().unwrap_or(0.0);
                let term = a - rho.powi(2) * s * c * b;
                direct += term * term / (n * n);
            }
        }
        let robust = inf.robust_variance(t).unwrap();
        assert!((robust - direct).abs() < 1e-12 * direct.max(1.0), "{robust} vs {direct}");
        assert!(robust >= 0.0);
    }

    #[test]
    fn rho_zero_recovers_conventional() {
        let ds = sample();
        let inf = InferenceFit::new(&ds, &icfg(1, 0.5, 1.0)).unwrap();
        for t in [0.3, 1.0, 2.0] {
            assert!((inf.robust_variance_at(t, 0.0) - inf.theta_variance(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_correction_uses_kernel_constant() {
        let ds = sample();
        let fit = FitConfig::new(1, 0, 0.5, KernelSpec::uniform()).unwrap();
        let ic = InferenceConfig::new(fit).unwrap();
        let inf = InferenceFit::new(&ds, &ic).unwrap();
        let t = 1.7;
        let h2 = 0.25;
        let expected = inf.theta(t) + h2 / 12.0 * (inf.pilot.treated.derivative(t) - inf.pilot.control.derivative(t));
        assert!((inf.bias_corrected(t).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn band_properties() {
        let ds = sample();
        let mut ic = icfg(1, 0.5, 1.0);
        let grid = [0.5, 1.0, 2.0];
        for mode in Mode::ALL {
            ic.mode = mode;
            let est = confidence_band(&ds, &ic, &grid).unwrap();
            for k in 0..grid.len() {
                assert!(est.ci_lo[k] <= est.center(k) && est.center(k) <= est.ci_hi[k]);
                assert!(est.var_conventional[k] >= 0.0 && est.var_robust[k] >= 0.0);
            }
        }
        ic.alpha = 1.0;
        let est = confidence_band(&ds, &ic, &grid).unwrap();
        for k in 0..grid.len() {
            assert_eq!(est.ci_lo[k], est.ci_hi[k]);
        }
    }

    #[test]
    fn variance_path_increases() {
        let ds = sample();
        let cfg = FitConfig::new(2, 0, 0.8, KernelSpec::epanechnikov()).unwrap();
        let fit = ThetaFit::new(&ds, &cfg).unwrap();
        for g in Side::BOTH {
            let mut prev = DMatrix::zeros(3, 3);
            for k in 0..=20 {
                let v = fit.side(g).variance(k as f64 * 0.1);
                let eig = (&v - &prev).symmetric_eigenvalues();
                assert!(eig.min() >= -1e-12);
                assert!(v.clone().symmetric_eigenvalues().min() >= -1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn degenerate_pilot_is_reported() {
        // Two records per side: a cubic pilot can never be fitted.
        let ds = SurvivalDataset::new(
            vec![rec(1.0, true, 0.1), rec(2.0, true, 0.3), rec(1.5, true, -0.1), rec(2.5, true, -0.3)],
            0.0,
            3.0,
        )
        .unwrap();
        let fit = FitConfig::new(0, 0, 0.5, KernelSpec::uniform()).unwrap();
        let ic = InferenceConfig { pilot_order: 3, ..InferenceConfig::new(fit).unwrap() };
        assert!(matches!(bias_corrected_theta(&ds, &ic, 3.0), Err(Error::DegeneratePilot { .. })));
        let raw = InferenceConfig { mode: Mode::Undersmoothed, ..ic };
        let est = confidence_band(&ds, &raw, &[3.0]).unwrap();
        assert!(est.theta_bc[0].is_nan());
        assert!(est.theta[0].is_finite());
    }

    #[test]
    fn rate_bandwidth_exponent() {
        assert!((rate_bandwidth(0.8, 1024, 1) - 0.8 / 4.0).abs() < 1e-15);
    }
}
