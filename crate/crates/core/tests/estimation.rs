use proptest::prelude::*;
use rdsurv::data::Side;
use rdsurv::estimator::{design_matrix, fit_path, j_flag};
use rdsurv::inference::{confidence_band, InferenceConfig, Mode};
use rdsurv::{FitConfig, KernelSpec, Record, SurvivalDataset, ThetaFit};

fn dataset(rows: &[(f64, bool, f64)], cutoff: f64) -> SurvivalDataset {
    let records = rows.iter().map(|&(time, event, forcing)| Record { time, event, forcing }).collect();
    SurvivalDataset::new(records, cutoff, 10.0).unwrap()
}

fn rows_strategy() -> impl Strategy<Value = Vec<(f64, bool, f64)>> {
    prop::collection::vec((0.05f64..5.0, any::<bool>(), -1.0f64..1.0), 20..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimates_are_invariant_to_shifting_the_forcing_variable(
        rows in rows_strategy(),
        shift in -3.0f64..3.0,
        p in 0usize..=2,
        h in 0.4f64..1.5,
    ) {
        let ds = dataset(&rows, 0.0);
        let moved = ds.shifted(shift);
        let cfg = FitConfig::new(p, 0, h, KernelSpec::triangular()).unwrap();
        let a = ThetaFit::new(&ds, &cfg).unwrap();
        let b = ThetaFit::new(&moved, &cfg).unwrap();
        for t in [0.5, 1.0, 2.5, 10.0] {
            prop_assert!((a.theta(t) - b.theta(t)).abs() <= 1e-8 * a.theta(t).abs().max(1.0));
            prop_assert_eq!(a.j_fraction(t), b.j_fraction(t));
        }
    }

    #[test]
    fn j_flags_agree_with_design_matrices(rows in rows_strategy(), p in 0usize..=2, h in 0.3f64..1.5) {
        let ds = dataset(&rows, 0.0);
        let cfg = FitConfig::new(p, 0, h, KernelSpec::uniform()).unwrap();
        for g in Side::BOTH {
            let path = fit_path(&ds, g, &cfg).unwrap();
            for (k, &t) in path.jump_times().iter().enumerate() {
                prop_assert_eq!(path.j_flags()[k], j_flag(&ds, t, &cfg));
                if !path.j_flags()[k] {
                    prop_assert!(path.increments()[k].iter().all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn intervals_contain_their_center(rows in rows_strategy(), h in 0.5f64..1.5) {
        let ds = dataset(&rows, 0.0);
        for mode in Mode::ALL {
            let mut icfg = InferenceConfig::new(FitConfig::new(1, 0, h, KernelSpec::triangular()).unwrap()).unwrap();
            icfg.mode = mode;
            if let Ok(est) = confidence_band(&ds, &icfg, &[1.0, 3.0]) {
                for k in 0..est.grid.len() {
                    let c = est.center(k);
                    if c.is_finite() {
                        prop_assert!(est.ci_lo[k] <= c && c <= est.ci_hi[k]);
                    }
                }
            }
        }
    }
}

/// Weighted least squares of event indicators at one jump, solved through
/// the normal equations on the raw basis.
fn wls_increment(ds: &SurvivalDataset, g: Side, t: f64, h: f64) -> [f64; 2] {
    let (mut s0, mut s1, mut s2, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in ds.records() {
        let x = r.forcing - ds.cutoff();
        if Side::of(r.forcing, ds.cutoff()) != g || r.time < t || x.abs() > h {
            continue;
        }
        let w = (1.0 - x.abs() / h) / h;
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        if r.event && r.time == t {
            b0 += w;
            b1 += w * x;
        }
    }
    let det = s0 * s2 - s1 * s1;
    [(s2 * b0 - s1 * b1) / det, (s0 * b1 - s1 * b0) / det]
}

#[test]
fn local_linear_increments_match_weighted_least_squares() {
    let rows: Vec<(f64, bool, f64)> = (0..80)
        .map(|i| {
            let z = -1.0 + 2.0 * ((i * 37) % 80) as f64 / 79.0;
            let t = 0.1 + ((i * 53) % 97) as f64 / 20.0;
            (t, i % 3 != 0, z)
        })
        .collect();
    let ds = dataset(&rows, 0.05);
    let h = 0.8;
    let cfg = FitConfig::new(1, 0, h, KernelSpec::triangular()).unwrap();
    for g in Side::BOTH {
        let path = fit_path(&ds, g, &cfg).unwrap();
        assert!(!path.jump_times().is_empty());
        assert!(path.j_flags().iter().filter(|&&j| j).count() > 10);
        for (k, &t) in path.jump_times().iter().enumerate() {
            if !path.j_flags()[k] {
                assert!(path.increments()[k].iter().all(|&x| x == 0.0));
                continue;
            }
            let oracle = wls_increment(&ds, g, t, h);
            let got = &path.increments()[k];
            for i in 0..2 {
                assert!((got[i] - oracle[i]).abs() < 1e-10, "side {g:?}, t {t}: {} vs {}", got[i], oracle[i]);
            }
        }
    }
}

#[test]
fn design_matrix_shrinks_as_subjects_leave_the_risk_set() {
    let ds = dataset(&[(1.0, true, 0.1), (2.0, false, 0.3), (3.0, true, 0.6), (4.0, true, -0.2)], 0.0);
    let cfg = FitConfig::new(1, 0, 1.0, KernelSpec::uniform()).unwrap();
    let traces: Vec<f64> = [0.5, 1.5, 2.5, 3.5].iter().map(|&t| design_matrix(&ds, t, Side::Treated, &cfg).trace()).collect();
    assert!(traces.windows(2).all(|w| w[0] > w[1]));
    assert_eq!(design_matrix(&ds, 3.5, Side::Treated, &cfg).trace(), 0.0);
}
