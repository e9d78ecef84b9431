//! Covariate-localised local-polynomial Aalen estimator.
//!
//! On each side `g` of the cutoff, the increment of the coefficient path at an
//! event time `t` is
//!
//! ```text
//! dB_g(t) = J(t) H_p(h) Gamma_g(t)^{-1} (1/n) Σ_i 1{X_i=g} K_h(Z_i - z0) r_p((Z_i - z0)/h) dN_i(t)
//! Gamma_g(t) = (1/n) Σ_i 1{X_i=g} K_h(Z_i - z0) Y_i(t) r_p(.) r_p(.)'
//! ```
//!
//! with `Y_i(t) = 1{T_i >= t}` and `J(t)` the indicator that both sides'
//! `Gamma` are numerically positive definite. Component `nu` of `nu! B_g(t)`
//! estimates `∫_0^t d^nu/dz^nu alpha_g(s, z0) ds`.

use nalgebra::{DMatrix, DVector};

use crate::data::{event_schedule, EventSchedule, Side, SurvivalDataset};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec, MAX_ORDER};
use crate::linalg::{self, DEFAULT_RIDGE_GUARD};

/// Order, derivative, bandwidth and kernel of one local-polynomial fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Polynomial order `p`.
    pub order: usize,
    /// Derivative order `nu`.
    pub deriv: usize,
    /// Bandwidth `h`.
    pub bandwidth: f64,
    pub kernel: KernelSpec,
    /// Condition-number ceiling above which a design matrix is treated as
    /// singular.
    pub ridge_guard: f64,
}

impl FitConfig {
    pub fn new(order: usize, deriv: usize, bandwidth: f64, kernel: KernelSpec) -> Result<Self> {
        let cfg = Self { order, deriv, bandwidth, kernel, ridge_guard: DEFAULT_RIDGE_GUARD };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if self.order > MAX_ORDER {
            return Err(Error::Domain(format!("order {} exceeds maximum {MAX_ORDER}", self.order)));
        }
        if self.deriv > self.order {
            return Err(Error::Domain(format!("derivative {} exceeds order {}", self.deriv, self.order)));
        }
        if !(self.ridge_guard > 1.0) {
            return Err(Error::Domain(format!("ridge guard must exceed 1, got {}", self.ridge_guard)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.order + 1
    }

    /// Same kernel and guard, different order and bandwidth (derivative
    /// order reset to zero).
    pub fn with_order_bandwidth(&self, order: usize, bandwidth: f64) -> Result<Self> {
        let cfg = Self { order, deriv: 0, bandwidth, ..self.clone() };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Kernel weight and rescaled basis vector of record `i` under `cfg`, or
/// `None` when the record lies outside the window or on the other side.
pub(crate) fn local_weight(ds: &SurvivalDataset, i: usize, side: Side, cfg: &FitConfig) -> Option<(f64, DVector<f64>)> {
    if ds.side(i) != side {
        return None;
    }
    let dz = ds.records()[i].forcing - ds.cutoff();
    let w = cfg.kernel.scaled(dz, cfg.bandwidth);
    (w > 0.0).then(|| (w, kernel::poly_basis(dz / cfg.bandwidth, cfg.order)))
}

/// `Gamma_{g,p,n}(t, h)` by direct summation over the sample.
pub fn design_matrix(ds: &SurvivalDataset, t: f64, side: Side, cfg: &FitConfig) -> DMatrix<f64> {
    let d = cfg.dim();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..ds.len() {
        if ds.records()[i].time < t {
            continue;
        }
        if let Some((w, r)) = local_weight(ds, i, side, cfg) {
            m.ger(w, &r, &r, 1.0);
        }
    }
    if !ds.is_empty() {
        m /= ds.len() as f64;
    }
    m
}

/// `J_{n,h}(t)`: both sides' design matrices are numerically positive
/// definite.
pub fn j_flag(ds: &SurvivalDataset, t: f64, cfg: &FitConfig) -> bool {
    Side::BOTH
        .iter()
        .all(|&g| linalg::is_numerically_pd(&design_matrix(ds, t, g, cfg), cfg.ridge_guard))
}

/// Risk-set design matrices of one side for every `t`, from suffix sums over
/// the in-window records sorted by observed time.
pub(crate) struct RiskSetMoments {
    times: Vec<f64>,
    suffix: Vec<DMatrix<f64>>,
    inv_n: f64,
}

impl RiskSetMoments {
    pub(crate) fn new(ds: &SurvivalDataset, side: Side, cfg: &FitConfig) -> Self {
        let mut members: Vec<(f64, f64, DVector<f64>)> = (0..ds.len())
            .filter_map(|i| local_weight(ds, i, side, cfg).map(|(w, r)| (ds.records()[i].time, w, r)))
            .collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d = cfg.dim();
        let mut suffix = vec![DMatrix::zeros(d, d); members.len() + 1];
        for k in (0..members.len()).rev() {
            let (_, w, r) = &members[k];
            let mut next = suffix[k + 1].clone();
            next.ger(*w, r, r, 1.0);
            suffix[k] = next;
        }
        let inv_n = if ds.is_empty() { 0.0 } else { 1.0 / ds.len() as f64 };
        Self { times: members.into_iter().map(|m| m.0).collect(), suffix, inv_n }
    }

    pub(crate) fn gamma(&self, t: f64) -> DMatrix<f64> {
        let k = self.times.partition_point(|&s| s < t);
        &self.suffix[k] * self.inv_n
    }

    pub(crate) fn window_size(&self) -> usize {
        self.times.len()
    }
}

/// Right-continuous step function with vector-valued jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate {
    dim: usize,
    jump_times: Vec<f64>,
    increments: Vec<DVector<f64>>,
    j_flags: Vec<bool>,
    cumulative: Vec<DVector<f64>>,
}

impl StepEstimate {
    fn new(dim: usize, jump_times: Vec<f64>, increments: Vec<DVector<f64>>, j_flags: Vec<bool>) -> Self {
        let mut running = DVector::zeros(dim);
        let cumulative = increments
            .iter()
            .map(|inc| {
                running += inc;
                running.clone()
            })
            .collect();
        Self { dim, jump_times, increments, j_flags, cumulative }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn increments(&self) -> &[DVector<f64>] {
        &self.increments
    }

    /// `J_{n,h}` at each jump.
    pub fn j_flags(&self) -> &[bool] {
        &self.j_flags
    }

    /// Sum of increments at jump times `<= t`.
    pub fn cumulative(&self, t: f64) -> DVector<f64> {
        match self.jump_times.partition_point(|&s| s <= t) {
            0 => DVector::zeros(self.dim),
            k => self.cumulative[k - 1].clone(),
        }
    }
}

/// Per-event solve `Gamma_g(t)^{-1} r_p(u_i)` at one jump time.
#[derive(Debug, Clone)]
pub(crate) struct EventSolve {
    pub record: usize,
    pub weight: f64,
    pub solved: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct JumpSolve {
    pub time: f64,
    pub j: bool,
    /// Empty when `j` is false or the factorization failed.
    pub events: Vec<EventSolve>,
}

/// A fitted side: the coefficient path together with the per-event solves
/// that the variance estimators reuse.
#[derive(Debug, Clone)]
pub struct SideFit {
    side: Side,
    config: FitConfig,
    n: usize,
    window_size: usize,
    pub(crate) jumps: Vec<JumpSolve>,
    path: StepEstimate,
    variance: Vec<DMatrix<f64>>,
    solve_failures: usize,
}

impl SideFit {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn path(&self) -> &StepEstimate {
        &self.path
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// Records of this side with positive kernel weight.
    pub fn window_size(&self) -> usize {
        self.window_size
    }

    /// Jumps where `J = 1` but the Cholesky factorization still failed.
    pub fn solve_failures(&self) -> usize {
        self.solve_failures
    }

    /// `nu! e_nu' B_g(t)` for the configured `nu`.
    pub fn derivative(&self, t: f64) -> f64 {
        derivative_estimate(&self.path, &self.config, t)
    }

    /// `V_{g,p,n}(t, h)`, accumulated from event times `<= t`.
    pub fn variance(&self, t: f64) -> DMatrix<f64> {
        let d = self.config.dim();
        match self.path.jump_times.partition_point(|&s| s <= t) {
            0 => DMatrix::zeros(d, d),
            k => self.variance[k - 1].clone(),
        }
    }
}

/// Fit one side of the cutoff.
pub fn fit_side(ds: &SurvivalDataset, side: Side, cfg: &FitConfig) -> Result<SideFit> {
    fit_side_with(ds, &event_schedule(ds), side, cfg)
}

pub(crate) fn fit_side_with(
    ds: &SurvivalDataset,
    schedule: &EventSchedule,
    side: Side,
    cfg: &FitConfig,
) -> Result<SideFit> {
    cfg.validate()?;
    let n = ds.len();
    let own = RiskSetMoments::new(ds, side, cfg);
    let other = RiskSetMoments::new(ds, side.other(), cfg);
    let rescale = kernel::rescale_matrix(cfg.bandwidth, cfg.order)?;
    let d = cfg.dim();
    let inv_n = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let var_scale = cfg.bandwidth * inv_n;

    let mut jumps = Vec::new();
    let mut times = Vec::new();
    let mut increments = Vec::new();
    let mut flags = Vec::new();
    let mut variance = Vec::new();
    let mut running_var = DMatrix::zeros(d, d);
    let mut solve_failures = 0;

    for entry in &schedule.entries {
        let local: Vec<(usize, f64, DVector<f64>)> = entry
            .events(side)
            .iter()
            .filter_map(|&i| local_weight(ds, i, side, cfg).map(|(w, r)| (i, w, r)))
            .collect();
        if local.is_empty() {
            continue;
        }
        let t = entry.time;
        let gamma = own.gamma(t);
        let j = linalg::is_numerically_pd(&gamma, cfg.ridge_guard)
            && linalg::is_numerically_pd(&other.gamma(t), cfg.ridge_guard);

        let mut raw = DVector::zeros(d);
        let mut events = Vec::new();
        if j {
            match gamma.cholesky() {
                Some(chol) => {
                    for (record, weight, r) in local {
                        let solved = chol.solve(&r);
                        raw.axpy(weight * inv_n, &solved, 1.0);
                        running_var.ger(var_scale * weight * weight, &solved, &solved, 1.0);
                        events.push(EventSolve { record, weight, solved });
                    }
                }
                None => solve_failures += 1,
            }
        }
        times.push(t);
        increments.push(&rescale * raw);
        flags.push(j);
        variance.push(running_var.clone());
        jumps.push(JumpSolve { time: t, j, events });
    }

    Ok(SideFit {
        side,
        config: cfg.clone(),
        n,
        window_size: own.window_size(),
        jumps,
        path: StepEstimate::new(d, times, increments, flags),
        variance,
        solve_failures,
    })
}

/// Coefficient path `B_{g,p}(., h)` of one side.
pub fn fit_path(ds: &SurvivalDataset, side: Side, cfg: &FitConfig) -> Result<StepEstimate> {
    Ok(fit_side(ds, side, cfg)?.path)
}

/// `A^{(nu)}_{g,p}(t, h) = nu! e_nu' B_{g,p}(t, h)`.
pub fn derivative_estimate(path: &StepEstimate, cfg: &FitConfig, t: f64) -> f64 {
    kernel::factorial(cfg.deriv) * path.cumulative(t)[cfg.deriv]
}

/// Both sides fitted with a shared configuration.
#[derive(Debug, Clone)]
pub struct ThetaFit {
    pub control: SideFit,
    pub treated: SideFit,
    // (time, J) at every event time with an in-window event on either side.
    j_path: Vec<(f64, bool)>,
}

impl ThetaFit {
    pub fn new(ds: &SurvivalDataset, cfg: &FitConfig) -> Result<Self> {
        Self::with_schedule(ds, &event_schedule(ds), cfg)
    }

    pub(crate) fn with_schedule(ds: &SurvivalDataset, schedule: &EventSchedule, cfg: &FitConfig) -> Result<Self> {
        let control = fit_side_with(ds, schedule, Side::Control, cfg)?;
        let treated = fit_side_with(ds, schedule, Side::Treated, cfg)?;
        let mut j_path: Vec<(f64, bool)> = control
            .jumps
            .iter()
            .chain(&treated.jumps)
            .map(|j| (j.time, j.j))
            .collect();
        j_path.sort_by(|a, b| a.0.total_cmp(&b.0));
        j_path.dedup_by(|a, b| a.0 == b.0);
        Ok(Self { control, treated, j_path })
    }

    pub fn side(&self, g: Side) -> &SideFit {
        match g {
            Side::Control => &self.control,
            Side::Treated => &self.treated,
        }
    }

    /// `Theta^{(nu)}_p(t, h) = A_1(t) - A_0(t)`.
    pub fn theta(&self, t: f64) -> f64 {
        self.treated.derivative(t) - self.control.derivative(t)
    }

    /// Share of in-window event times `<= t` at which `J = 1`; equal to 1
    /// when there are none.
    pub fn j_fraction(&self, t: f64) -> f64 {
        let upto = self.j_path.partition_point(|&(s, _)| s <= t);
        if upto == 0 {
            return 1.0;
        }
        self.j_path[..upto].iter().filter(|(_, j)| *j).count() as f64 / upto as f64
    }

    /// Whether any in-window event time exists at all.
    pub fn has_events(&self) -> bool {
        !self.j_path.is_empty()
    }
}

/// `Theta^{(nu)}_p(t, h)`.
pub fn theta_estimate(ds: &SurvivalDataset, cfg: &FitConfig, t: f64) -> Result<f64> {
    Ok(ThetaFit::new(ds, cfg)?.theta(t))
}
