//! Boundary kernels and the kernel-only constants of the local-polynomial
//! theory.
//!
//! A kernel is given one-sidedly as `k` on `[0, kappa]`; the two-sided kernel
//! is `K(u) = k(|u|)`, and `K_h(u) = K(u / h) / h`. All moment integrals run
//! over the right half-line, i.e. over `[0, kappa]`.
//!
//! | constant | entry |
//! |---|---|
//! | `Gamma_p` | `∫ K(u) u^(i+j) du` |
//! | `vartheta_{p,q}` | `∫ K(u) u^(q+i) du` |
//! | `Psi_p` | `∫ K(u)^2 u^(i+j) du` |
//! | `Psi_{p,q}(rho)` | `rho^j ∫ K(u) K(rho u) u^(i+j) du` |
//!
//! Built-in families are polynomials on `[0, 1]` and get exact closed forms;
//! tabulated kernels fall back to adaptive quadrature.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature;

/// Highest supported local polynomial order.
pub const MAX_ORDER: usize = 4;

/// Default absolute tolerance for quadrature-based constants.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Uniform,
    Triangular,
    Epanechnikov,
    Tabulated,
}

/// One-sided kernel `k` on `[0, kappa]`.
#[derive(Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    kappa: f64,
    // Values of k on an equispaced grid over [0, kappa]; linear in between.
    table: Option<Arc<[f64]>>,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("family", &self.family)
            .field("kappa", &self.kappa)
            .field("table_len", &self.table.as_ref().map(|t| t.len()))
            .finish()
    }
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.kappa == other.kappa && self.table == other.table
    }
}

impl KernelSpec {
    pub fn uniform() -> Self {
        Self { family: KernelFamily::Uniform, kappa: 1.0, table: None }
    }

    pub fn triangular() -> Self {
        Self { family: KernelFamily::Triangular, kappa: 1.0, table: None }
    }

    pub fn epanechnikov() -> Self {
        Self { family: KernelFamily::Epanechnikov, kappa: 1.0, table: None }
    }

    /// Piecewise-linear kernel through `values` placed on an equispaced grid
    /// over `[0, kappa]`. Needs at least two nonnegative finite values with a
    /// positive integral.
    pub fn tabulated(kappa: f64, values: Vec<f64>) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Domain(format!("kernel support endpoint must be positive, got {kappa}")));
        }
        if values.len() < 2 {
            return Err(Error::Domain("tabulated kernel needs at least two values".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("tabulated kernel values must be finite and nonnegative".into()));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::Domain("tabulated kernel is identically zero".into()));
        }
        Ok(Self { family: KernelFamily::Tabulated, kappa, table: Some(values.into()) })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Right endpoint of the support.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Uniform => "uniform",
            KernelFamily::Triangular => "triangular",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Tabulated => "tabulated",
        }
    }

    /// One-sided kernel `k(u)`; zero outside `[0, kappa]`.
    pub fn one_sided(&self, u: f64) -> f64 {
        if !(0.0..=self.kappa).contains(&u) {
            return 0.0;
        }
        match self.family {
            KernelFamily::Uniform => 1.0,
            KernelFamily::Triangular => 1.0 - u,
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelFamily::Tabulated => {
                let table = self.table.as_deref().expect("tabulated kernel has a table");
                let cells = (table.len() - 1) as f64;
                let x = u / self.kappa * cells;
                let i = (x.floor() as usize).min(table.len() - 2);
                let frac = x - i as f64;
                table[i] * (1.0 - frac) + table[i + 1] * frac
            }
        }
    }

    /// Two-sided kernel `K(u) = k(-u) 1{u<0} + k(u) 1{u>=0}`.
    pub fn two_sided(&self, u: f64) -> f64 {
        self.one_sided(u.abs())
    }

    /// `K_h(u) = K(u / h) / h`.
    pub fn scaled(&self, u: f64, h: f64) -> f64 {
        self.two_sided(u / h) / h
    }

    /// Coefficients of `k` as a polynomial on its support, for built-in
    /// families.
    fn polynomial(&self) -> Option<Vec<f64>> {
        match self.family {
            KernelFamily::Uniform => Some(vec![1.0]),
            KernelFamily::Triangular => Some(vec![1.0, -1.0]),
            KernelFamily::Epanechnikov => Some(vec![0.75, 0.0, -0.75]),
            KernelFamily::Tabulated => None,
        }
    }

    /// Points where the kernel may fail to be smooth, including the ends.
    fn breakpoints(&self, scale: f64) -> Vec<f64> {
        match &self.table {
            Some(t) => {
                let cells = t.len() - 1;
                (0..=cells).map(|i| self.kappa * i as f64 / cells as f64 * scale).collect()
            }
            None => vec![0.0, self.kappa * scale],
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "rectangular" => Ok(Self::uniform()),
            "triangular" => Ok(Self::triangular()),
            "epanechnikov" => Ok(Self::epanechnikov()),
            other => Err(Error::Domain(format!(
                "unknown kernel '{other}' (expected uniform, triangular or epanechnikov)"
            ))),
        }
    }
}

/// How kernel constants are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
}

/// `r_p(x) = (1, x, ..., x^p)`.
pub fn poly_basis(x: f64, p: usize) -> DVector<f64> {
    let mut r = DVector::zeros(p + 1);
    let mut v = 1.0;
    for i in 0..=p {
        r[i] = v;
        v *= x;
    }
    r
}

/// `H_p(h) = diag(1, 1/h, ..., 1/h^p)`.
pub fn rescale_matrix(h: f64, p: usize) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_fn(p + 1, |i, _| h.powi(-(i as i32)))))
}

/// `H_p(-1)`, the sign flip that maps right-of-cutoff constants to the left.
pub fn mirror_matrix(p: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(p + 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }))
}

fn check_order(p: usize) -> Result<()> {
    if p > MAX_ORDER {
        return Err(Error::Domain(format!("polynomial order {p} exceeds the supported maximum {MAX_ORDER}")));
    }
    Ok(())
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `∫_0^kappa c(u) u^m du` for a polynomial `c`.
fn poly_moment(coeffs: &[f64], m: usize, kappa: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * kappa.powi((k + m + 1) as i32) / (k + m + 1) as f64)
        .sum()
}

/// A scalar moment `∫ weight(u) u^m du` over the kernel support, where the
/// weight is one of the kernel products below.
#[derive(Clone, Copy)]
enum Weight {
    K,
    KSquared,
    KCross(f64),
}

fn moment(kernel: &KernelSpec, weight: Weight, m: usize, method: Method, tol: f64) -> Result<f64> {
    match (method, kernel.polynomial()) {
        (Method::ClosedForm, Some(c)) => {
            let w = match weight {
                Weight::K => c,
                Weight::KSquared => poly_mul(&c, &c),
                Weight::KCross(rho) => {
                    let scaled: Vec<f64> = c.iter().enumerate().map(|(k, v)| v * rho.powi(k as i32)).collect();
                    poly_mul(&c, &scaled)
                }
            };
            Ok(poly_moment(&w, m, kernel.kappa))
        }
        _ => {
            let f = |u: f64| {
                let k = kernel.one_sided(u);
                let w = match weight {
                    Weight::K => k,
                    Weight::KSquared => k * k,
                    Weight::KCross(rho) => k * kernel.one_sided(rho * u),
                };
                w * u.powi(m as i32)
            };
            let mut breaks = kernel.breakpoints(1.0);
            if let Weight::KCross(rho) = weight {
                if rho > 0.0 {
                    breaks.extend(kernel.breakpoints(1.0 / rho).into_iter().filter(|b| *b < kernel.kappa));
                    breaks.sort_by(f64::total_cmp);
                    breaks.dedup();
                }
            }
            quadrature::integrate_with_breaks(f, &breaks, tol)
        }
    }
}

fn default_method(kernel: &KernelSpec) -> Method {
    if kernel.polynomial().is_some() {
        Method::ClosedForm
    } else {
        Method::Quadrature
    }
}

/// `Gamma_p`, closed form for built-in kernels.
pub fn gamma_matrix(kernel: &KernelSpec, p: usize) -> Result<DMatrix<f64>> {
    gamma_matrix_with(kernel, p, default_method(kernel), DEFAULT_QUAD_TOL)
}

pub fn gamma_matrix_with(kernel: &KernelSpec, p: usize, method: Method, tol: f64) -> Result<DMatrix<f64>> {
    check_order(p)?;
    hankel(p, |m| moment(kernel, Weight::K, m, method, tol))
}

/// `vartheta_{p,q}`.
pub fn vartheta_vector(kernel: &KernelSpec, p: usize, q: usize) -> Result<DVector<f64>> {
    vartheta_vector_with(kernel, p, q, default_method(kernel), DEFAULT_QUAD_TOL)
}

pub fn vartheta_vector_with(kernel: &KernelSpec, p: usize, q: usize, method: Method, tol: f64) -> Result<DVector<f64>> {
    check_order(p)?;
    let mut v = DVector::zeros(p + 1);
    for i in 0..=p {
        v[i] = moment(kernel, Weight::K, q + i, method, tol)?;
    }
    Ok(v)
}

/// `Psi_p`.
pub fn psi_matrix(kernel: &KernelSpec, p: usize) -> Result<DMatrix<f64>> {
    psi_matrix_with(kernel, p, default_method(kernel), DEFAULT_QUAD_TOL)
}

pub fn psi_matrix_with(kernel: &KernelSpec, p: usize, method: Method, tol: f64) -> Result<DMatrix<f64>> {
    check_order(p)?;
    hankel(p, |m| moment(kernel, Weight::KSquared, m, method, tol))
}

/// `Psi_{p,q}(rho)`, a `(p+1) x (q+1)` matrix; requires `0 <= rho <= 1`.
pub fn psi_cross_matrix(kernel: &KernelSpec, p: usize, q: usize, rho: f64) -> Result<DMatrix<f64>> {
    psi_cross_matrix_with(kernel, p, q, rho, default_method(kernel), DEFAULT_QUAD_TOL)
}

pub fn psi_cross_matrix_with(
    kernel: &KernelSpec,
    p: usize,
    q: usize,
    rho: f64,
    method: Method,
    tol: f64,
) -> Result<DMatrix<f64>> {
    check_order(p)?;
    check_order(q)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("bandwidth ratio rho must lie in [0, 1], got {rho}")));
    }
    let moments = (0..=p + q)
        .map(|m| moment(kernel, Weight::KCross(rho), m, method, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(p + 1, q + 1, |i, j| rho.powi(j as i32) * moments[i + j]))
}

fn hankel(p: usize, mut m: impl FnMut(usize) -> Result<f64>) -> Result<DMatrix<f64>> {
    let moments = (0..=2 * p).map(&mut m).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(p + 1, p + 1, |i, j| moments[i + j]))
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `Gamma_p^{-1} vartheta_{p,p+1}`, the leading-bias direction of a
/// right-of-cutoff fit.
pub fn bias_vector(kernel: &KernelSpec, p: usize) -> Result<DVector<f64>> {
    let gamma = gamma_matrix(kernel, p)?;
    let theta = vartheta_vector(kernel, p, p + 1)?;
    linalg::spd_solve(&gamma, &theta).ok_or_else(|| Error::Singular(format!("Gamma_{p} for {} kernel", kernel.name())))
}

/// `nu! e_nu' Gamma_p^{-1} vartheta_{p,p+1} / (p+1)!`: the factor that turns
/// `h^{p+1-nu} ∫ alpha^{(p+1)}` into the leading bias of the order-`nu`
/// derivative estimate right of the cutoff.
pub fn bias_constant(kernel: &KernelSpec, p: usize, nu: usize) -> Result<f64> {
    if nu > p {
        return Err(Error::Domain(format!("derivative order {nu} exceeds polynomial order {p}")));
    }
    let b = bias_vector(kernel, p)?;
    Ok(factorial(nu) * b[nu] / factorial(p + 1))
}

/// Sign relating the left-of-cutoff leading bias to the right-of-cutoff one:
/// mirroring the kernel through `H_p(-1)` multiplies the order-`nu` bias
/// component by `(-1)^{p+1+nu}`.
pub fn left_bias_sign(p: usize, nu: usize) -> f64 {
    if (p + 1 + nu) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Kernel constants for one polynomial order.
#[derive(Debug, Clone)]
pub struct MomentConstants {
    pub p: usize,
    pub gamma: DMatrix<f64>,
    /// `vartheta_{p,q}` for `q = 0..=p+1`.
    pub vartheta: BTreeMap<usize, DVector<f64>>,
    pub psi: DMatrix<f64>,
    pub method: Method,
    pub quad_tol: f64,
}

impl MomentConstants {
    pub fn new(kernel: &KernelSpec, p: usize) -> Result<Self> {
        Self::with_method(kernel, p, default_method(kernel), DEFAULT_QUAD_TOL)
    }

    pub fn with_method(kernel: &KernelSpec, p: usize, method: Method, quad_tol: f64) -> Result<Self> {
        let gamma = gamma_matrix_with(kernel, p, method, quad_tol)?;
        let psi = psi_matrix_with(kernel, p, method, quad_tol)?;
        let vartheta = (0..=p + 1)
            .map(|q| vartheta_vector_with(kernel, p, q, method, quad_tol).map(|v| (q, v)))
            .collect::<Result<_>>()?;
        Ok(Self { p, gamma, vartheta, psi, method, quad_tol })
    }

    /// `Gamma_p^{-1} Psi_p Gamma_p^{-1}`, the kernel factor of the limiting
    /// variance.
    pub fn sandwich(&self) -> Result<DMatrix<f64>> {
        let inv = linalg::spd_inverse(&self.gamma).ok_or_else(|| Error::Singular(format!("Gamma_{}", self.p)))?;
        Ok(&inv * &self.psi * &inv)
    }
}
