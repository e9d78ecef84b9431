//! Adaptive Gauss-Kronrod (G10/K21) quadrature on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_460,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_958_109_831,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, ..., 9).
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

const MAX_DEPTH: usize = 48;

/// Single 21-point Kronrod rule on `[a, b]`; returns the estimate and the
/// Kronrod-minus-Gauss error estimate.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol` by recursive
/// bisection. Fails with [`Error::Quadrature`] if subdivision bottoms out.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (value, err) = recurse(&f, a, b, tol, 0);
    if err > floor(tol, value) {
        return Err(Error::Quadrature { achieved: err, requested: tol });
    }
    Ok(value)
}

/// As [`integrate`], splitting first at the given interior breakpoints.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> Result<f64> {
    if breaks.len() < 2 {
        return Ok(0.0);
    }
    let pieces = (breaks.len() - 1) as f64;
    let mut total = 0.0;
    let mut achieved = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = recurse(&f, w[0], w[1], tol / pieces, 0);
        total += v;
        achieved += e;
    }
    if achieved > floor(tol, total) {
        return Err(Error::Quadrature { achieved, requested: tol });
    }
    Ok(total)
}

// 50 * eps * |value| bounds the achievable error for large integrals.
fn floor(tol: f64, value: f64) -> f64 {
    tol.max(50.0 * f64::EPSILON * value.abs())
}

fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> (f64, f64) {
    let (value, err) = gk21(f, a, b);
    if err <= floor(tol, value) || depth >= MAX_DEPTH {
        return (value, err);
    }
    let mid = 0.5 * (a + b);
    let (l, el) = recurse(f, a, mid, 0.5 * tol, depth + 1);
    let (r, er) = recurse(f, mid, b, 0.5 * tol, depth + 1);
    (l + r, el + er)
}
