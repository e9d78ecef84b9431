use std::fmt::Write as _;
use std::path::Path;

use log::info;
use nalgebra::{DMatrix, DVector};
use rdsurv::data::{self, CsvSchema};
use rdsurv::dgp::DgpSpec;
use rdsurv::format::num;
use rdsurv::inference::{InferenceConfig, InferenceFit};
use rdsurv::kernel;
use rdsurv::montecarlo::{self, ExperimentPlan};
use rdsurv::{FitConfig, SurvivalDataset, ThetaFit};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::{DataArgs, EstimateArgs, FitArgs, GlobalArgs, InferArgs, KernelConstantsArgs, MonteCarloArgs, SimulateArgs};

fn rounded(x: f64) -> f64 {
    num(x).parse().unwrap_or(x)
}

fn matrix_json(m: &DMatrix<f64>) -> serde_json::Value {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| rounded(m[(i, j)])).collect::<Vec<_>>()).collect()
}

fn vector_json(v: &DVector<f64>) -> serde_json::Value {
    v.iter().map(|&x| rounded(x)).collect()
}

pub fn kernel_constants(a: &KernelConstantsArgs) -> CliResult<String> {
    let q = a.q.unwrap_or(a.p + 1);
    if !(a.rho > 0.0 && a.rho <= 1.0) {
        return Err(CliError::Usage(format!("--rho must lie in (0, 1], got {}", a.rho)));
    }
    let k = &a.kernel;
    let value = json!({
        "kernel": k.name(),
        "p": a.p,
        "q": q,
        "nu": a.nu,
        "rho": a.rho,
        "gamma": matrix_json(&kernel::gamma_matrix(k, a.p)?),
        "vartheta": vector_json(&kernel::vartheta_vector(k, a.p, q)?),
        "psi": matrix_json(&kernel::psi_matrix(k, a.p)?),
        "psi_cross": matrix_json(&kernel::psi_cross_matrix(k, a.p, q, a.rho)?),
        "bias_constant": rounded(kernel::bias_constant(k, a.p, a.nu)?),
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn command_header(out: &mut String, command: &str) {
    let _ = writeln!(out, "# rdsurv {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# command = {command}");
}

pub fn simulate(a: &SimulateArgs, g: &GlobalArgs) -> CliResult<String> {
    let mut spec = DgpSpec::read(&a.spec)?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let ds = spec.simulate_replicate(a.n, a.replicate)?;
    info!("simulated {} records, side counts {:?}", ds.len(), ds.side_counts());

    let mut out = String::new();
    command_header(&mut out, "simulate");
    let _ = writeln!(out, "# n = {}", a.n);
    let _ = writeln!(out, "# replicate = {}", a.replicate);
    for (k, v) in spec.settings() {
        if k != "cutoff" && k != "horizon" {
            let _ = writeln!(out, "# {k} = {v}");
        }
    }
    let mut body = Vec::new();
    data::write_csv(&ds, &mut body)?;
    out.push_str(&String::from_utf8(body).expect("CSV output is UTF-8"));
    Ok(out)
}

/// Reads `# key = value` lines at the top of a data file.
fn metadata(path: &Path, key: &str) -> CliResult<Option<f64>> {
    let text = std::fs::read_to_string(path)?;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let Some((k, v)) = line.trim_start_matches('#').split_once('=') else { continue };
        if k.trim() == key {
            let v = v.trim();
            return v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("metadata '{key} = {v}' in {} is not a number", path.display())));
        }
    }
    Ok(None)
}

fn load(a: &DataArgs) -> CliResult<SurvivalDataset> {
    let resolve = |given: Option<f64>, key: &str| -> CliResult<f64> {
        match given {
            Some(v) => Ok(v),
            None => metadata(&a.input, key)?.ok_or_else(|| {
                CliError::Usage(format!("--{key} is required ({} has no '# {key} =' line)", a.input.display()))
            }),
        }
    };
    if !a.input.exists() {
        return Err(CliError::Usage(format!("--input {} does not exist", a.input.display())));
    }
    let cutoff = resolve(a.cutoff, "cutoff")?;
    let horizon = resolve(a.horizon, "horizon")?;
    let ds = data::ingest_csv(&a.input, &CsvSchema::new(cutoff, horizon))?;
    info!("loaded {} records from {}", ds.len(), a.input.display());
    Ok(ds)
}

fn fit_config(f: &FitArgs) -> CliResult<FitConfig> {
    Ok(FitConfig::new(f.p, f.nu, f.h, f.kernel.clone())?)
}

fn grid(f: &FitArgs, ds: &SurvivalDataset) -> CliResult<Vec<f64>> {
    if f.grid.is_empty() {
        return Ok(vec![ds.horizon()]);
    }
    if let Some(&t) = f.grid.iter().find(|&&t| !(0.0..=ds.horizon()).contains(&t)) {
        return Err(CliError::Usage(format!("grid time {t} is outside [0, {}]", num(ds.horizon()))));
    }
    Ok(f.grid.clone())
}

fn data_header(out: &mut String, command: &str, a: &DataArgs, ds: &SurvivalDataset, f: &FitArgs) {
    command_header(out, command);
    let _ = writeln!(out, "# input = {}", a.input.display());
    let _ = writeln!(out, "# cutoff = {}", num(ds.cutoff()));
    let _ = writeln!(out, "# horizon = {}", num(ds.horizon()));
    let [n0, n1] = ds.side_counts();
    let _ = writeln!(out, "# n = {}", ds.len());
    let _ = writeln!(out, "# n_control = {n0}");
    let _ = writeln!(out, "# n_treated = {n1}");
    let _ = writeln!(out, "# kernel = {}", f.kernel.name());
    let _ = writeln!(out, "# p = {}", f.p);
    let _ = writeln!(out, "# nu = {}", f.nu);
    let _ = writeln!(out, "# h = {}", num(f.h));
}

pub fn estimate(a: &EstimateArgs) -> CliResult<String> {
    let ds = load(&a.data)?;
    let cfg = fit_config(&a.fit)?;
    let grid = grid(&a.fit, &ds)?;
    let fit = ThetaFit::new(&ds, &cfg)?;

    let mut out = String::new();
    data_header(&mut out, "estimate", &a.data, &ds, &a.fit);
    out.push_str("t,theta_hat,a_control,a_treated,j_fraction\n");
    for &t in &grid {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(t),
            num(fit.theta(t)),
            num(fit.control.derivative(t)),
            num(fit.treated.derivative(t)),
            num(fit.j_fraction(t)),
        );
    }
    Ok(out)
}

pub fn infer(a: &InferArgs) -> CliResult<String> {
    let ds = load(&a.data)?;
    let mut icfg = InferenceConfig::new(fit_config(&a.fit)?)?;
    if let Some(q) = a.q {
        icfg.pilot_order = q;
    }
    if let Some(b) = a.b {
        icfg.pilot_bandwidth = b;
    }
    icfg.alpha = a.alpha;
    icfg.mode = a.mode;
    icfg.validate()?;
    let grid = grid(&a.fit, &ds)?;
    let est = InferenceFit::new(&ds, &icfg)?.band(&grid)?;

    let mut out = String::new();
    data_header(&mut out, "infer", &a.data, &ds, &a.fit);
    let _ = writeln!(out, "# q = {}", icfg.pilot_order);
    let _ = writeln!(out, "# b = {}", num(icfg.pilot_bandwidth));
    let _ = writeln!(out, "# alpha = {}", num(icfg.alpha));
    let _ = writeln!(out, "# mode = {}", icfg.mode);
    let _ = writeln!(out, "# window_control = {}", est.window_sizes[0]);
    let _ = writeln!(out, "# window_treated = {}", est.window_sizes[1]);
    out.push_str("t,theta,theta_bc,se_conventional,se_robust,ci_lo,ci_hi,j_fraction\n");
    for k in 0..grid.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            num(est.grid[k]),
            num(est.theta[k]),
            num(est.theta_bc[k]),
            num(est.var_conventional[k].max(0.0).sqrt()),
            num(est.var_robust[k].max(0.0).sqrt()),
            num(est.ci_lo[k]),
            num(est.ci_hi[k]),
            num(est.j_fraction[k]),
        );
    }
    Ok(out)
}

pub fn montecarlo(a: &MonteCarloArgs, g: &GlobalArgs) -> CliResult<String> {
    let mut plan = ExperimentPlan::read(&a.plan)?;
    if let Some(seed) = g.seed {
        plan.dgp.seed = seed;
    }
    plan.validate()?;
    let report = match g.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => montecarlo::run_experiment_with_threads(&plan, t)?,
        None => montecarlo::run_experiment(&plan)?,
    };
    info!("montecarlo finished in {:.1} s", report.elapsed.as_secs_f64());

    let mut out = String::new();
    command_header(&mut out, "montecarlo");
    let mut body = Vec::new();
    report.write_csv(&mut body)?;
    out.push_str(&String::from_utf8(body).expect("CSV output is UTF-8"));
    Ok(out)
}
