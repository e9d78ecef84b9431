//! Simulation designs with closed-form ground truth.
//!
//! With `x = z - z0`, the baseline and effect are
//!
//! ```text
//! a0(t, z) = c0 + c1 x + c2 x^2 + ct t
//! d(t, z)  = d0 + d1 x + d2 x^2 + dt t
//! ```
//!
//! and a mean-one gamma frailty `U` with variance `theta` acts either on the
//! baseline only (`alpha_0 = U a0`, `alpha_1 = U a0 + d`) or on both hazards
//! (`alpha_1 = U (a0 + d)`). Censoring is exponential and independent of
//! `(U, lifetime)` given `Z`.
//!
//! Given `Z = z`, the population hazard among subjects still at risk is
//! `abar_g = a_g / (1 + theta A_g)` for the frailty-carrying part, with
//! `A_g = ∫ a_g`, plus `d` when the effect is frailty-free. Everything the
//! estimators target follows from this in closed form.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::config::KeyValues;
use crate::data::{Record, Side, SurvivalDataset};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec, MomentConstants, MAX_ORDER};
use crate::quadrature;

const ORACLE_TOL: f64 = 1e-12;

/// Largest censoring probability `H(tau)` a design may have.
pub const MAX_CENSORING_AT_HORIZON: f64 = 0.99;

/// Which hazards carry the frailty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrailtyOn {
    Baseline,
    Both,
}

impl FromStr for FrailtyOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(FrailtyOn::Baseline),
            "both" => Ok(FrailtyOn::Both),
            other => Err(Error::Config(format!("unknown frailty target '{other}' (expected baseline or both)"))),
        }
    }
}

impl fmt::Display for FrailtyOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrailtyOn::Baseline => "baseline",
            FrailtyOn::Both => "both",
        })
    }
}

/// Density of the forcing variable, symmetric about the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingShape {
    Uniform,
    Triangular,
}

impl FromStr for ForcingShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(ForcingShape::Uniform),
            "triangular" => Ok(ForcingShape::Triangular),
            other => Err(Error::Config(format!("unknown forcing density '{other}' (expected uniform or triangular)"))),
        }
    }
}

impl fmt::Display for ForcingShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForcingShape::Uniform => "uniform",
            ForcingShape::Triangular => "triangular",
        })
    }
}

/// `k0 + k1 x + k2 x^2 + kt t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hazard {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub kt: f64,
}

impl Hazard {
    pub fn constant(k0: f64) -> Self {
        Self { k0, ..Self::default() }
    }

    pub fn at(&self, t: f64, x: f64) -> f64 {
        self.k0 + self.k1 * x + self.k2 * x * x + self.kt * t
    }

    /// `∫_0^t` of the hazard.
    pub fn cumulative(&self, t: f64, x: f64) -> f64 {
        (self.k0 + self.k1 * x + self.k2 * x * x) * t + 0.5 * self.kt * t * t
    }

    fn plus(&self, o: &Hazard) -> Hazard {
        Hazard { k0: self.k0 + o.k0, k1: self.k1 + o.k1, k2: self.k2 + o.k2, kt: self.kt + o.kt }
    }

    fn scaled(&self, u: f64) -> Hazard {
        Hazard { k0: u * self.k0, k1: u * self.k1, k2: u * self.k2, kt: u * self.kt }
    }

    /// Taylor coefficients in `x` of the hazard at time `t`.
    fn series(&self, t: f64, len: usize) -> Vec<f64> {
        let mut s = vec![0.0; len];
        for (k, v) in [self.k0 + self.kt * t, self.k1, self.k2].into_iter().enumerate().take(len) {
            s[k] = v;
        }
        s
    }

    fn cumulative_series(&self, t: f64, len: usize) -> Vec<f64> {
        let mut s = vec![0.0; len];
        for (k, v) in [self.k0 * t + 0.5 * self.kt * t * t, self.k1 * t, self.k2 * t].into_iter().enumerate().take(len) {
            s[k] = v;
        }
        s
    }

    /// Minimum over `[0, tau] x [-w, w]`.
    fn minimum(&self, tau: f64, w: f64) -> f64 {
        let mut xs = vec![-w, w];
        if self.k2 != 0.0 {
            let v = -self.k1 / (2.0 * self.k2);
            if v.abs() <= w {
                xs.push(v);
            }
        }
        [0.0, tau]
            .iter()
            .flat_map(|&t| xs.iter().map(move |&x| self.at(t, x)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A complete simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub cutoff: f64,
    pub horizon: f64,
    /// Baseline `a0`.
    pub baseline: Hazard,
    /// Treatment effect `d`.
    pub effect: Hazard,
    /// Frailty variance `theta >= 0`.
    pub frailty_var: f64,
    pub frailty_on: FrailtyOn,
    pub forcing: ForcingShape,
    /// Half-width `w` of the forcing support `[z0 - w, z0 + w]`.
    pub half_width: f64,
    /// Exponential censoring rate; `0` disables censoring.
    pub censoring_rate: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            cutoff: 0.0,
            horizon: 1.0,
            baseline: Hazard::constant(1.0),
            effect: Hazard::constant(0.5),
            frailty_var: 0.0,
            frailty_on: FrailtyOn::Baseline,
            forcing: ForcingShape::Uniform,
            half_width: 1.0,
            censoring_rate: 0.2,
            seed: 1,
        }
    }
}

/// One simulated subject before censoring and truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentDraw {
    pub forcing: f64,
    pub frailty: f64,
    pub lifetime: f64,
    pub censoring: f64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.cutoff,
            self.baseline.k0,
            self.baseline.k1,
            self.baseline.k2,
            self.baseline.kt,
            self.effect.k0,
            self.effect.k1,
            self.effect.k2,
            self.effect.kt,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("design coefficients and cutoff must be finite".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::Domain(format!("half_width must be positive, got {}", self.half_width)));
        }
        if !(self.frailty_var.is_finite() && self.frailty_var >= 0.0) {
            return Err(Error::Domain(format!("frailty_var must be nonnegative, got {}", self.frailty_var)));
        }
        if !(self.censoring_rate.is_finite() && self.censoring_rate >= 0.0) {
            return Err(Error::Domain(format!("censoring_rate must be nonnegative, got {}", self.censoring_rate)));
        }
        let h_tau = self.censoring_cdf(self.horizon);
        if h_tau >= MAX_CENSORING_AT_HORIZON {
            return Err(Error::Domain(format!(
                "censoring probability by the horizon is {h_tau:.4}, must stay below {MAX_CENSORING_AT_HORIZON}"
            )));
        }
        let (tau, w) = (self.horizon, self.half_width);
        if self.baseline.minimum(tau, w) < 0.0 {
            return Err(Error::Domain("baseline hazard is negative somewhere on the design support".into()));
        }
        let treated_min = self.baseline.plus(&self.effect).minimum(tau, w);
        let effect_min = self.effect.minimum(tau, w);
        let frailty_free_effect = self.frailty_var > 0.0 && self.frailty_on == FrailtyOn::Baseline;
        if treated_min < 0.0 || (frailty_free_effect && effect_min < 0.0) {
            return Err(Error::Domain("treated hazard is negative for some frailty value on the design support".into()));
        }
        Ok(())
    }

    /// Reads a design from `key = value` pairs, leaving unrelated keys in
    /// place. Missing keys take the [`Default`] values.
    pub fn take_from(kv: &mut KeyValues) -> Result<Self> {
        let d = Self::default();
        let spec = Self {
            cutoff: kv.take_or("cutoff", d.cutoff)?,
            horizon: kv.take_or("horizon", d.horizon)?,
            baseline: Hazard {
                k0: kv.take_or("c0", d.baseline.k0)?,
                k1: kv.take_or("c1", d.baseline.k1)?,
                k2: kv.take_or("c2", d.baseline.k2)?,
                kt: kv.take_or("ct", d.baseline.kt)?,
            },
            effect: Hazard {
                k0: kv.take_or("d0", d.effect.k0)?,
                k1: kv.take_or("d1", d.effect.k1)?,
                k2: kv.take_or("d2", d.effect.k2)?,
                kt: kv.take_or("dt", d.effect.kt)?,
            },
            frailty_var: kv.take_or("frailty_var", d.frailty_var)?,
            frailty_on: match kv.take_str("frailty_on") {
                Some(s) => s.parse()?,
                None => d.frailty_on,
            },
            forcing: match kv.take_str("forcing") {
                Some(s) => s.parse()?,
                None => d.forcing,
            },
            half_width: kv.take_or("half_width", d.half_width)?,
            censoring_rate: kv.take_or("censoring_rate", d.censoring_rate)?,
            seed: kv.take_or("seed", d.seed)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses a complete design file; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let spec = Self::take_from(&mut kv)?;
        kv.finish()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Fully resolved settings as `(key, value)` pairs, in the file syntax.
    pub fn settings(&self) -> Vec<(&'static str, String)> {
        let num = crate::format::num;
        vec![
            ("cutoff", num(self.cutoff)),
            ("horizon", num(self.horizon)),
            ("c0", num(self.baseline.k0)),
            ("c1", num(self.baseline.k1)),
            ("c2", num(self.baseline.k2)),
            ("ct", num(self.baseline.kt)),
            ("d0", num(self.effect.k0)),
            ("d1", num(self.effect.k1)),
            ("d2", num(self.effect.k2)),
            ("dt", num(self.effect.kt)),
            ("frailty_var", num(self.frailty_var)),
            ("frailty_on", self.frailty_on.to_string()),
            ("forcing", self.forcing.to_string()),
            ("half_width", num(self.half_width)),
            ("censoring_rate", num(self.censoring_rate)),
            ("seed", self.seed.to_string()),
        ]
    }

    /// `f_Z(z)`.
    pub fn forcing_density(&self, z: f64) -> f64 {
        let (x, w) = (z - self.cutoff, self.half_width);
        if x.abs() > w {
            return 0.0;
        }
        match self.forcing {
            ForcingShape::Uniform => 0.5 / w,
            ForcingShape::Triangular => (w - x.abs()) / (w * w),
        }
    }

    /// `H(t)`, the censoring distribution function.
    pub fn censoring_cdf(&self, t: f64) -> f64 {
        -(-self.censoring_rate * t).exp_m1()
    }

    fn treated_frailty_part(&self) -> Hazard {
        match self.frailty_on {
            FrailtyOn::Baseline => self.baseline,
            FrailtyOn::Both => self.baseline.plus(&self.effect),
        }
    }

    /// The frailty-carrying hazard `a_g` and the frailty-free addition.
    fn parts(&self, g: Side) -> (Hazard, Option<Hazard>) {
        match (g, self.frailty_on) {
            (Side::Control, _) => (self.baseline, None),
            (Side::Treated, FrailtyOn::Baseline) => (self.baseline, Some(self.effect)),
            (Side::Treated, FrailtyOn::Both) => (self.treated_frailty_part(), None),
        }
    }

    /// `alpha_g(t, z, u)`.
    pub fn hazard(&self, g: Side, t: f64, z: f64, u: f64) -> f64 {
        let x = z - self.cutoff;
        let (a, extra) = self.parts(g);
        u * a.at(t, x) + extra.map_or(0.0, |d| d.at(t, x))
    }

    /// `abar_g(t, z)`, the hazard averaged over the subjects still at risk.
    pub fn conditional_hazard_bar(&self, g: Side, t: f64, z: f64) -> f64 {
        let x = z - self.cutoff;
        let (a, extra) = self.parts(g);
        a.at(t, x) / (1.0 + self.frailty_var * a.cumulative(t, x)) + extra.map_or(0.0, |d| d.at(t, x))
    }

    /// `∫_0^t abar_g(s, z) ds`.
    pub fn cumulative_hazard_bar(&self, g: Side, t: f64, z: f64) -> f64 {
        let x = z - self.cutoff;
        let (a, extra) = self.parts(g);
        let big_a = a.cumulative(t, x);
        let frail = if self.frailty_var > 0.0 {
            (self.frailty_var * big_a).ln_1p() / self.frailty_var
        } else {
            big_a
        };
        frail + extra.map_or(0.0, |d| d.cumulative(t, x))
    }

    /// `Sbar_g(t, z)`, the lifetime survival function given `Z = z`.
    pub fn survival_bar(&self, g: Side, t: f64, z: f64) -> f64 {
        (-self.cumulative_hazard_bar(g, t, z)).exp()
    }

    /// `y_g(t, z) = {1 - H(t)} Sbar_g(t, z)`.
    pub fn at_risk_probability(&self, g: Side, t: f64, z: f64) -> f64 {
        (-self.censoring_rate * t).exp() * self.survival_bar(g, t, z)
    }

    /// `(Theta(t, z0), Theta_risk(t, z0))`.
    pub fn true_theta(&self, t: f64) -> (f64, f64) {
        let theta = self.effect.cumulative(t, 0.0);
        let risk = self.cumulative_hazard_bar(Side::Treated, t, self.cutoff)
            - self.cumulative_hazard_bar(Side::Control, t, self.cutoff);
        (theta, risk)
    }

    /// Taylor coefficients in `x = z - z0` of `abar_g(t, z0 + x)` up to
    /// degree `len - 1`.
    fn hazard_bar_series(&self, g: Side, t: f64, len: usize) -> Vec<f64> {
        let (a, extra) = self.parts(g);
        let num = a.series(t, len);
        let mut den: Vec<f64> = a.cumulative_series(t, len).iter().map(|v| self.frailty_var * v).collect();
        den[0] += 1.0;
        let mut q = vec![0.0; len];
        for k in 0..len {
            let acc: f64 = (1..=k).map(|j| den[j] * q[k - j]).sum();
            q[k] = (num[k] - acc) / den[0];
        }
        if let Some(d) = extra {
            for (qk, dk) in q.iter_mut().zip(d.series(t, len)) {
                *qk += dk;
            }
        }
        q
    }

    /// `d^k/dz^k abar_g(t, z)` at the cutoff.
    pub fn hazard_bar_derivative(&self, g: Side, t: f64, k: usize) -> f64 {
        kernel::factorial(k) * self.hazard_bar_series(g, t, k + 1)[k]
    }

    /// `∫_0^t d^k/dz^k abar_g(s, z0) ds`.
    pub fn integrated_derivative(&self, g: Side, t: f64, k: usize) -> Result<f64> {
        if k == 0 {
            return Ok(self.cumulative_hazard_bar(g, t, self.cutoff));
        }
        quadrature::integrate(|s| self.hazard_bar_derivative(g, s, k), 0.0, t, ORACLE_TOL)
    }

    /// The quantity `Theta^{(nu)}` estimates: `∫_0^t {abar_1^{(nu)} - abar_0^{(nu)}}(s, z0) ds`.
    pub fn target(&self, t: f64, nu: usize) -> Result<f64> {
        Ok(self.integrated_derivative(Side::Treated, t, nu)? - self.integrated_derivative(Side::Control, t, nu)?)
    }

    /// Leading bias of `Theta^{(nu)}_p(t, h)`:
    /// `h^{p+1-nu} c_nu ∫ {abar_1^{(p+1)} - s_0 abar_0^{(p+1)}}`.
    pub fn leading_bias(&self, kernel: &KernelSpec, p: usize, nu: usize, h: f64, t: f64) -> Result<f64> {
        if p > MAX_ORDER || nu > p {
            return Err(Error::Domain(format!("need nu <= p <= {MAX_ORDER}, got p={p}, nu={nu}")));
        }
        let c = kernel::bias_constant(kernel, p, nu)?;
        let s0 = kernel::left_bias_sign(p, nu);
        let right = self.integrated_derivative(Side::Treated, t, p + 1)?;
        let left = self.integrated_derivative(Side::Control, t, p + 1)?;
        Ok(h.powi((p + 1 - nu) as i32) * c * (right - s0 * left))
    }

    /// `(1/f_Z(z0)) ∫_0^t abar_g(s, z0) / y_g(s, z0) ds`.
    pub fn variance_integral(&self, g: Side, t: f64) -> Result<f64> {
        let z0 = self.cutoff;
        let integral = quadrature::integrate(
            |s| self.conditional_hazard_bar(g, s, z0) / self.at_risk_probability(g, s, z0),
            0.0,
            t,
            ORACLE_TOL,
        )?;
        Ok(integral / self.forcing_density(z0))
    }

    /// Limit of `(nu!)^2 e_nu' V_{g,p,n}(t, h) e_nu` on side `g`.
    pub fn limiting_side_variance(&self, g: Side, kernel: &KernelSpec, p: usize, nu: usize, t: f64) -> Result<f64> {
        if nu > p {
            return Err(Error::Domain(format!("derivative order {nu} exceeds order {p}")));
        }
        let sandwich = MomentConstants::new(kernel, p)?.sandwich()?;
        let f = kernel::factorial(nu);
        Ok(f * f * sandwich[(nu, nu)] * self.variance_integral(g, t)?)
    }

    /// Sum of [`Self::limiting_side_variance`] over both sides; divided by
    /// `n h^{2 nu + 1}` it approximates the variance of `Theta^{(nu)}(t)`.
    pub fn limiting_variance_oracle(&self, kernel: &KernelSpec, p: usize, nu: usize, t: f64) -> Result<f64> {
        Ok(self.limiting_side_variance(Side::Control, kernel, p, nu, t)?
            + self.limiting_side_variance(Side::Treated, kernel, p, nu, t)?)
    }

    /// Lifetime solving `Lambda(T) = e` for the subject's cumulative hazard
    /// `Lambda(t) = alpha t + beta t^2 / 2`; infinite when no root exists.
    pub fn lifetime(&self, z: f64, u: f64, e: f64) -> f64 {
        let g = Side::of(z, self.cutoff);
        let x = z - self.cutoff;
        let (a, extra) = self.parts(g);
        let total = a.scaled(u).plus(&extra.unwrap_or_default());
        let alpha = total.at(0.0, x);
        let beta = total.kt;
        debug_assert!(alpha >= 0.0 && alpha + beta * self.horizon >= -1e-12, "negative hazard at z={z}, u={u}");
        if beta == 0.0 {
            return if alpha > 0.0 { e / alpha } else { f64::INFINITY };
        }
        let disc = alpha * alpha + 2.0 * beta * e;
        if disc < 0.0 {
            return f64::INFINITY;
        }
        let denom = alpha + disc.sqrt();
        if denom > 0.0 {
            2.0 * e / denom
        } else {
            f64::INFINITY
        }
    }

    fn draw_forcing<R: Rng>(&self, rng: &mut R) -> f64 {
        let w = self.half_width;
        let x = match self.forcing {
            ForcingShape::Uniform => w * (2.0 * rng.random::<f64>() - 1.0),
            ForcingShape::Triangular => w * (rng.random::<f64>() + rng.random::<f64>() - 1.0),
        };
        self.cutoff + x
    }

    fn draw_latent<R: Rng>(&self, rng: &mut R, frailty: Option<&Gamma<f64>>) -> LatentDraw {
        let forcing = self.draw_forcing(rng);
        let frailty = frailty.map_or(1.0, |d| d.sample(rng));
        let e: f64 = Exp1.sample(rng);
        let lifetime = self.lifetime(forcing, frailty, e);
        let censoring = if self.censoring_rate > 0.0 {
            let c: f64 = Exp1.sample(rng);
            c / self.censoring_rate
        } else {
            f64::INFINITY
        };
        LatentDraw { forcing, frailty, lifetime, censoring }
    }

    fn frailty_distribution(&self) -> Result<Option<Gamma<f64>>> {
        if self.frailty_var == 0.0 {
            return Ok(None);
        }
        Gamma::new(1.0 / self.frailty_var, self.frailty_var)
            .map(Some)
            .map_err(|e| Error::Domain(format!("frailty distribution: {e}")))
    }

    /// Random source of replicate `r`: the spec's seed selects the key and
    /// `r` the stream, so replicates are independent and order-free.
    pub fn rng(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate);
        rng
    }

    /// Subjects with their latent frailty, lifetime and censoring time.
    pub fn simulate_latent(&self, n: usize, replicate: u64) -> Result<Vec<LatentDraw>> {
        self.validate()?;
        let frailty = self.frailty_distribution()?;
        let mut rng = self.rng(replicate);
        Ok((0..n).map(|_| self.draw_latent(&mut rng, frailty.as_ref())).collect())
    }

    /// Replicate `r` of an `n`-subject dataset.
    pub fn simulate_replicate(&self, n: usize, replicate: u64) -> Result<SurvivalDataset> {
        let records = self
            .simulate_latent(n, replicate)?
            .into_iter()
            .map(|d| {
                let time = d.lifetime.min(d.censoring);
                if time > self.horizon {
                    Record { time: self.horizon, event: false, forcing: d.forcing }
                } else {
                    Record { time, event: d.lifetime <= d.censoring, forcing: d.forcing }
                }
            })
            .collect();
        SurvivalDataset::new(records, self.cutoff, self.horizon)
    }

    /// The dataset for the spec's own seed (replicate 0).
    pub fn simulate(&self, n: usize) -> Result<SurvivalDataset> {
        self.simulate_replicate(n, 0)
    }
}

/// Free-function form of [`DgpSpec::simulate`].
pub fn simulate(spec: &DgpSpec, n: usize) -> Result<SurvivalDataset> {
    spec.simulate(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> DgpSpec {
        DgpSpec {
            baseline: Hazard { k0: 1.0, k1: 0.3, k2: 0.8, kt: 0.2 },
            effect: Hazard { k0: 0.5, k1: -0.2, k2: 0.4, kt: 0.1 },
            frailty_var: 0.7,
            ..DgpSpec::default()
        }
    }

    #[test]
    fn validation() {
        assert!(DgpSpec::default().validate().is_ok());
        let neg = DgpSpec { baseline: Hazard { k0: 0.1, k1: 1.0, ..Hazard::default() }, ..DgpSpec::default() };
        assert!(neg.validate().is_err());
        let frail_neg_effect = DgpSpec { effect: Hazard::constant(-0.2), frailty_var: 0.5, ..DgpSpec::default() };
        assert!(frail_neg_effect.validate().is_err());
        assert!(DgpSpec { frailty_var: 0.0, ..frail_neg_effect.clone() }.validate().is_ok());
        assert!(DgpSpec { frailty_on: FrailtyOn::Both, ..frail_neg_effect }.validate().is_ok());
        let heavy = DgpSpec { censoring_rate: 10.0, ..DgpSpec::default() };
        assert!(heavy.validate().is_err());
    }

    #[test]
    fn config_round_trip() {
        let spec = quadratic();
        let text: String = spec.settings().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(DgpSpec::parse(&text).unwrap(), spec);
        assert!(DgpSpec::parse("bogus = 1").is_err());
        assert!(DgpSpec::parse("forcing = cauchy").is_err());
    }

    #[test]
    fn no_frailty_bar_equals_hazard() {
        let spec = DgpSpec { frailty_var: 0.0, ..quadratic() };
        for g in Side::BOTH {
            for (t, z) in [(0.0, 0.2), (0.5, -0.4), (1.0, 0.9)] {
                assert_eq!(spec.conditional_hazard_bar(g, t, z), spec.hazard(g, t, z, 1.0));
            }
        }
    }

    #[test]
    fn bar_at_time_zero_is_baseline() {
        let spec = quadratic();
        assert_eq!(spec.conditional_hazard_bar(Side::Control, 0.0, 0.3), spec.baseline.at(0.0, 0.3));
    }

    #[test]
    fn cumulative_bar_differentiates_to_bar() {
        for frailty_on in [FrailtyOn::Baseline, FrailtyOn::Both] {
            let spec = DgpSpec { frailty_on, ..quadratic() };
            for g in Side::BOTH {
                let (t, z, eps) = (0.6, 0.25, 1e-5);
                let fd = (spec.cumulative_hazard_bar(g, t + eps, z) - spec.cumulative_hazard_bar(g, t - eps, z)) / (2.0 * eps);
                assert!((fd - spec.conditional_hazard_bar(g, t, z)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn series_derivatives_match_finite_differences() {
        let spec = DgpSpec { frailty_on: FrailtyOn::Both, ..quadratic() };
        let (t, eps) = (0.7, 1e-3);
        for g in Side::BOTH {
            let f = |x: f64| spec.conditional_hazard_bar(g, t, spec.cutoff + x);
            let d1 = (f(eps) - f(-eps)) / (2.0 * eps);
            let d2 = (f(eps) - 2.0 * f(0.0) + f(-eps)) / (eps * eps);
            assert!((spec.hazard_bar_derivative(g, t, 0) - f(0.0)).abs() < 1e-14);
            assert!((spec.hazard_bar_derivative(g, t, 1) - d1).abs() < 1e-6);
            assert!((spec.hazard_bar_derivative(g, t, 2) - d2).abs() < 1e-4);
        }
    }

    #[test]
    fn estimands_without_frailty_coincide() {
        let spec = DgpSpec { frailty_var: 0.0, ..quadratic() };
        let (a, b) = spec.true_theta(0.8);
        assert!((a - b).abs() < 1e-14);
        assert!((a - (0.5 * 0.8 + 0.05 * 0.64)).abs() < 1e-14);
        assert_eq!(spec.true_theta(0.0), (0.0, 0.0));
    }

    #[test]
    fn baseline_frailty_keeps_risk_estimand() {
        let (a, b) = quadratic().true_theta(1.0);
        assert!((a - b).abs() < 1e-13);
        let both = DgpSpec { frailty_on: FrailtyOn::Both, ..quadratic() };
        let (a, b) = both.true_theta(1.0);
        assert!(b < a);
    }

    #[test]
    fn constant_hazard_variance_integral() {
        let c = 1.5;
        let spec = DgpSpec {
            baseline: Hazard::constant(c),
            effect: Hazard::default(),
            censoring_rate: 0.0,
            ..DgpSpec::default()
        };
        let t = 0.9;
        let expected = ((c * t).exp() - 1.0) * 2.0;
        assert!((spec.variance_integral(Side::Control, t).unwrap() - expected).abs() < 1e-10);
        assert_eq!(spec.limiting_variance_oracle(&KernelSpec::uniform(), 1, 0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn lifetime_inverts_cumulative_hazard() {
        let spec = quadratic();
        for (z, u, e) in [(0.3, 0.5, 0.7), (-0.6, 2.0, 0.1), (0.0, 1.0, 3.0)] {
            let t = spec.lifetime(z, u, e);
            let g = Side::of(z, spec.cutoff);
            let x = z - spec.cutoff;
            let (a, extra) = spec.parts(g);
            let lam = u * a.cumulative(t, x) + extra.map_or(0.0, |d| d.cumulative(t, x));
            assert!((lam - e).abs() < 1e-12);
        }
        let zero = DgpSpec { baseline: Hazard::default(), effect: Hazard::default(), ..DgpSpec::default() };
        assert_eq!(zero.lifetime(-0.5, 1.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn seeded_replicates_are_reproducible() {
        let spec = quadratic();
        let a = spec.simulate_replicate(200, 3).unwrap();
        let b = spec.simulate_replicate(200, 3).unwrap();
        let c = spec.simulate_replicate(200, 4).unwrap();
        assert_eq!(a.records(), b.records());
        assert_ne!(a.records(), c.records());
        assert!(spec.simulate(0).unwrap().is_empty());
    }

    #[test]
    fn forcing_density_integrates_to_one() {
        for forcing in [ForcingShape::Uniform, ForcingShape::Triangular] {
            let spec = DgpSpec { forcing, half_width: 0.7, cutoff: 0.2, ..DgpSpec::default() };
            let v = quadrature::integrate_with_breaks(|z| spec.forcing_density(z), &[-0.5, 0.2, 0.9], 1e-12).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
