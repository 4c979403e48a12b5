use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use linsys_core::engine::{run_ensemble_with, write_trajectory_csv, EnsembleConfig};
use linsys_core::feynman_kac::{fk3_estimate, oracle_two_point, Fk3Estimator, Fk3Options};
use linsys_core::kernel::{kernel_moments, validate_kernel};
use linsys_core::stats::{
    clt_check, covariance_limit_check, covariance_reference, default_battery, martingale_check, overlap_decay_check,
    CheckResult, CltOptions, CltProbe,
};
use linsys_core::walk::{bcpp_critical_lambda, green, green_solver, survival_criterion, walk_from_kernel};
use linsys_core::{Kernel, Site, FORMAT_VERSION};

use crate::config::RunConfig;
use crate::{CliError, Command};

#[derive(Serialize)]
struct Report<'a> {
    format_version: &'static str,
    command: &'static str,
    tool_version: &'static str,
    config: &'a RunConfig,
    result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<&'a [CheckResult]>,
    passed: bool,
}

struct Artifacts<'a> {
    dir: &'a Path,
    command: &'static str,
}

impl Artifacts<'_> {
    fn path(&self, configured: &Option<String>, ext: &str) -> std::path::PathBuf {
        match configured {
            Some(name) => self.dir.join(name),
            None => self.dir.join(format!("{}.{ext}", self.command)),
        }
    }

    fn report(&self, cfg: &RunConfig, result: Value, checks: Option<&[CheckResult]>) -> Result<bool, CliError> {
        let passed = checks.is_none_or(|c| c.iter().all(|r| !r.is_failure()));
        let report = Report {
            format_version: FORMAT_VERSION,
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            result,
            checks,
            passed,
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        let path = self.path(&cfg.outputs.json, "json");
        std::fs::write(&path, format!("{text}\n")).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if let Some(checks) = checks {
            for c in checks {
                say(&c.line());
            }
        }
        say(&text);
        Ok(passed)
    }

    fn csv(&self, cfg: &RunConfig) -> Result<BufWriter<File>, CliError> {
        let path = self.path(&cfg.outputs.csv, "csv");
        let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn site_map(values: &BTreeMap<Site, f64>) -> BTreeMap<String, f64> {
    values.iter().map(|(s, v)| (s.to_string(), *v)).collect()
}

fn unit(d: usize, k: i32) -> Vec<i32> {
    let mut v = vec![0; d];
    if d > 0 {
        v[0] = k;
    }
    v
}

fn fk3_options(cfg: &RunConfig) -> Fk3Options {
    Fk3Options {
        sampler: cfg.sampler.clone().unwrap_or_else(|| "auto".into()),
        h_radius: cfg.radius,
        ..Fk3Options::default()
    }
}

pub fn dispatch(command: &Command, mut cfg: RunConfig, dir: &Path) -> Result<bool, CliError> {
    let out = Artifacts { dir, command: command.name() };
    let kernel = cfg.kernel()?;
    let d = kernel.dim();
    match command {
        Command::Simulate(_) => simulate(&mut cfg, kernel, &out),
        Command::Green(_) => {
            cfg.method.get_or_insert_with(|| "fourier_quadrature".into());
            let offsets = cfg.offset_sites(&[unit(d, 0), unit(d, 1)])?;
            let walk = walk_from_kernel(&kernel, true)?;
            let solver = green_solver(cfg.method.as_deref().unwrap(), d, cfg.resolution)?;
            let kappa2 = kernel_moments(&kernel).kappa2;
            let table = green(&walk, kappa2, &offsets, solver.as_ref())?;
            let result = json!({
                "g": site_map(&table.values),
                "pi_d": table.pi_d,
                "criterion": table.criterion_value,
                "h": site_map(&table.h_values),
                "error_estimate": table.error_estimate,
                "method": table.method,
                "resolution": table.resolution,
                "levels": table.levels,
            });
            out.report(&cfg, result, None)
        }
        Command::Criterion(_) => {
            cfg.method.get_or_insert_with(|| "fourier_quadrature".into());
            let solver = green_solver(cfg.method.as_deref().unwrap(), d, cfg.resolution)?;
            let c = survival_criterion(&kernel, solver.as_ref())?;
            say(&format!(
                "criterion kappa2 G(0)/2 = {:.6} ({})",
                c.value,
                if c.satisfied { "satisfied" } else { "not satisfied" }
            ));
            let mut result = serde_json::to_value(&c).expect("serializes");
            if cfg.bcpp.is_some() {
                result["bcpp_critical_lambda"] = json!(bcpp_critical_lambda(d, solver.as_ref())?);
            }
            out.report(&cfg, result, None)
        }
        Command::OracleTwoPoint(_) => {
            let radius = *cfg.radius.get_or_insert(6);
            let times = cfg.grid_or(&[0.5]);
            cfg.t_grid = times.clone();
            let sol = oracle_two_point(&kernel, &cfg.initial_sites()?, &times, radius)?;
            let mut w = out.csv(&cfg)?;
            use std::io::Write;
            let io = |e: std::io::Error| CliError::Io(e.to_string());
            writeln!(w, "t,x,xt,value").map_err(io)?;
            for (k, t) in sol.times.iter().enumerate() {
                for x in &sol.sites {
                    for y in &sol.sites {
                        writeln!(w, "{t},\"{x}\",\"{y}\",{:e}", sol.value(k, x, y)).map_err(io)?;
                    }
                }
            }
            w.flush().map_err(io)?;
            let diagonal: Vec<f64> = (0..times.len()).map(|k| sol.contract(k, &|x, y| if x == y { 1.0 } else { 0.0 })).collect();
            let total: Vec<f64> = (0..times.len()).map(|k| sol.contract(k, &|_, _| 1.0)).collect();
            let result = json!({
                "times": sol.times,
                "states": sol.sites.len() * sol.sites.len(),
                "sum_x u(t,x,x)": diagonal,
                "sum_x,x~ u(t,x,x~)": total,
                "boundary_fraction": sol.boundary_fraction,
                "warnings": sol.warnings,
                "steps": sol.steps,
            });
            out.report(&cfg, result, None)
        }
        Command::Fk3(_) => {
            let times = cfg.grid_or(&[10.0]);
            cfg.t_grid = times.clone();
            let samples = *cfg.samples.get_or_insert(100_000);
            let observable = cfg.observable.get_or_insert_with(|| "one".into()).clone();
            let f: Box<dyn Fn(&Site) -> f64 + Sync> = match observable.as_str() {
                "one" => Box::new(|_| 1.0),
                "delta0" => Box::new(|s: &Site| if s.is_origin() { 1.0 } else { 0.0 }),
                other => return Err(CliError::Config(format!("observable must be \"one\" or \"delta0\", got \"{other}\""))),
            };
            let opts = fk3_options(&cfg);
            cfg.sampler = Some(opts.sampler.clone());
            let initial = cfg.initial_sites()?;
            let mut rows = Vec::new();
            for (i, t) in times.iter().enumerate() {
                let e = fk3_estimate(&kernel, &initial, *t, f.as_ref(), samples, linsys_core::rng::child_seed(cfg.seed, i as u64), opts.clone())?;
                rows.push(json!({"t": t, "estimate": e}));
            }
            out.report(&cfg, json!({ "estimates": rows }), None)
        }
        Command::VerifyClt(_) => {
            let times = cfg.grid_or(&[10.0, 30.0]);
            cfg.t_grid = times.clone();
            let replicas = *cfg.replicas.get_or_insert(20_000);
            let m = kernel_moments(&kernel);
            let battery = default_battery(&m);
            let probe = CltProbe { battery: battery.clone(), drift: m.drift.clone() };
            let mut ec = EnsembleConfig::new(Arc::new(kernel), cfg.initial_sites()?, times, replicas, cfg.seed);
            ec.dual = cfg.dual;
            ec.max_occupied = cfg.max_occupied;
            let summary = run_ensemble_with(&ec, &[&probe])?.summary;
            let mut opts = CltOptions::default();
            if let Some(r) = cfg.tolerances.rel {
                opts.rel_tolerance = r;
            }
            if let Some(k) = cfg.tolerances.k {
                opts.k = k;
            }
            if let Some(v) = cfg.tolerances.variance_shrink {
                opts.variance_shrink = v;
            }
            let checks = clt_check(&summary, &battery, &m.gaussian_cov, &opts)?;
            let result = json!({
                "gaussian_covariance": m.gaussian_cov,
                "drift": m.drift,
                "survival_fraction": summary.times.iter().map(|t| t.survival_fraction).collect::<Vec<_>>(),
                "proxies": {
                    "conditioning": "survival at the largest grid time",
                    "convergence_in_probability": "variance of each statistic shrinks between the first and last grid time"
                },
                "options": opts,
            });
            out.report(&cfg, result, Some(&checks))
        }
        Command::VerifyCov(_) => verify_cov(&mut cfg, &kernel, &out),
        Command::VerifyOverlap(_) => {
            let times = cfg.grid_or(&[5.0, 10.0, 20.0, 40.0]);
            cfg.t_grid = times.clone();
            let samples = *cfg.samples.get_or_insert(100_000);
            let slack = *cfg.tolerances.slack.get_or_insert(1.5);
            let w = *cfg.tolerances.slope_window.get_or_insert([-2.0, -1.2]);
            let opts = fk3_options(&cfg);
            let r = overlap_decay_check(&kernel, opts, &cfg.initial_sites()?, &times, samples, cfg.seed, slack, (w[0], w[1]))?;
            let result = json!({
                "points": r.points,
                "slope": r.slope,
                "operationalization": "t^(d/2)-scaled overlap bounded by slack times its first value, log-log slope inside the window",
            });
            out.report(&cfg, result, Some(&r.checks))
        }
        Command::VerifyMartingale(_) => {
            let times = cfg.grid_or(&[1.0, 5.0, 10.0]);
            cfg.t_grid = times.clone();
            let replicas = *cfg.replicas.get_or_insert(10_000);
            let kappa1 = kernel_moments(&kernel).kappa1;
            let mut ec = EnsembleConfig::new(Arc::new(kernel), cfg.initial_sites()?, times, replicas, cfg.seed);
            ec.dual = cfg.dual;
            ec.max_occupied = cfg.max_occupied;
            let summary = run_ensemble_with(&ec, &[])?.summary;
            let mut checks = martingale_check(&summary, kappa1, true);
            checks.extend(martingale_check(&summary, kappa1, false).into_iter().map(|c| c.informational()));
            let result = json!({
                "update_rule": summary.metadata.update_rule,
                "truncated": summary.truncated,
                "negative_control": "un-normalized mass, reported only",
            });
            out.report(&cfg, result, Some(&checks))
        }
        Command::ValidateKernel(_) => {
            let report = validate_kernel(&kernel);
            let m = kernel_moments(&kernel);
            let passed = report.all_passed();
            let check = CheckResult::with_verdict("kernel conditions", passed as u8 as f64, 1.0, 0.0, 0.0, 0.0, passed);
            let result = json!({ "report": report, "all_passed": passed, "moments": m });
            out.report(&cfg, result, Some(&[check]))
        }
    }
}

fn simulate(cfg: &mut RunConfig, kernel: Kernel, out: &Artifacts) -> Result<bool, CliError> {
    let times = cfg.grid_or(&[1.0, 5.0, 10.0]);
    cfg.t_grid = times.clone();
    let replicas = *cfg.replicas.get_or_insert(1000);
    let dim = kernel.dim();
    let mut ec = EnsembleConfig::new(Arc::new(kernel), cfg.initial_sites()?, times, replicas, cfg.seed);
    ec.dual = cfg.dual;
    ec.max_occupied = cfg.max_occupied;
    ec.keep_records = true;
    let output = run_ensemble_with(&ec, &[])?;
    write_trajectory_csv(out.csv(cfg)?, dim, &output.records)?;
    let result = serde_json::to_value(&output.summary).expect("summary serializes");
    out.report(cfg, result, None)
}

fn verify_cov(cfg: &mut RunConfig, kernel: &Kernel, out: &Artifacts) -> Result<bool, CliError> {
    let d = kernel.dim();
    let offsets = cfg.offset_sites(&[unit(d, 0), unit(d, 1), unit(d, 5)])?;
    cfg.offsets = offsets.iter().map(|s| s.coords().to_vec()).collect();
    let t = cfg.grid_or(&[30.0])[0];
    cfg.t_grid = vec![t];
    let samples = *cfg.samples.get_or_insert(100_000);
    let rel = *cfg.tolerances.rel.get_or_insert(0.1);
    cfg.method.get_or_insert_with(|| "fourier_quadrature".into());
    let solver = green_solver(cfg.method.as_deref().unwrap(), d, cfg.resolution)?;
    let kappa2 = kernel_moments(kernel).kappa2;
    let table = green(&walk_from_kernel(kernel, true)?, kappa2, &offsets, solver.as_ref())?;
    if table.criterion_value >= 1.0 {
        return Err(linsys_core::Error::DivergentH(table.criterion_value).into());
    }
    let estimator = Fk3Estimator::new(kernel, fk3_options(cfg))?;
    cfg.sampler = Some(estimator.sampler_name().to_string());
    let mut checks = Vec::new();
    let mut limits = Vec::new();
    for (i, u) in offsets.iter().enumerate() {
        let reference = covariance_reference(kappa2, table.values[u], table.g0);
        let (c, lim) = covariance_limit_check(
            &estimator,
            *u,
            reference,
            t,
            samples,
            linsys_core::rng::child_seed(cfg.seed, i as u64),
            rel,
        )?;
        checks.push(c);
        limits.push(json!({"offset": u.to_string(), "reference": reference, "limit": lim}));
    }
    let result = json!({ "g0": table.g0, "kappa2": kappa2, "limits": limits });
    out.report(cfg, result, Some(&checks))
}

