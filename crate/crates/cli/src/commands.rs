use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use gpstrat::conditions::{audit_all, check_condition_vi, Condition, ConditionReport, ExponentSet};
use gpstrat::constants::{c_h, c_k, core_series_s, eta_fn};
use gpstrat::kernels::{Family, GridSpec, Regime};
use gpstrat::limitlaw::{sample_limit, Sign};
use gpstrat::mc::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentResult};
use gpstrat::numeric::derive_seed;
use gpstrat::sampler::FactorCache;
use gpstrat::stats::{moments, EmpiricalDistribution};
use gpstrat::variation::{self, TestFunction};
use gpstrat::{CovarianceKernel, Error};

use crate::args::*;
use crate::config::ExperimentFile;
use crate::emit::{emit, opt_real, real, write_csv, Output};
use crate::CliError;

type CmdResult = Result<bool, CliError>;

pub fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Constants(a) => constants(a),
        Command::Audit(a) => audit(a),
        Command::Functionals(a) => functionals(a),
        Command::Limitlaw(a) => limitlaw(a),
        Command::Experiment(a) => experiment(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn finish(out: &Output, common: &CommonArgs, default: Format, pass: bool) -> CmdResult {
    emit(out, common.format.unwrap_or(default), common.output.as_deref())?;
    Ok(pass)
}

fn cache(common: &CommonArgs) -> Result<FactorCache, CliError> {
    Ok(match &common.cache_dir {
        Some(dir) => FactorCache::with_dir(dir)?,
        None => FactorCache::new(),
    })
}

fn test_function(spec: &str) -> Result<TestFunction, CliError> {
    spec.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn constants(a: ConstantsArgs) -> CmdResult {
    let s = core_series_s(a.tol)?;
    let mut out = Output::new("constants", &["constant", "K", "value", "truncation_m", "tail_bound"]);
    out.set("tol", a.tol);
    out.set("series_s", s);
    let mut entries = Vec::new();
    let family = a.process.family();
    if family != Some(Family::Sfbm) {
        let k = match family {
            Some(Family::Fbm) | None => a.process.k.unwrap_or(1.0),
            _ => a.process.k.ok_or_else(|| CliError::Usage("--K is required for this family".into()))?,
        };
        if family == Some(Family::Fbm) && k != 1.0 {
            return Err(CliError::Usage("fbm has K = 1".into()));
        }
        let v = c_k(k, a.tol)?;
        entries.push(("C_K", Some(k), v));
    }
    if family.is_none() || family == Some(Family::Sfbm) {
        entries.push(("C_h", None, c_h(a.tol)?));
    }
    for (name, k, v) in &entries {
        out.row(vec![
            name.to_string(),
            opt_real(*k),
            real(v.value),
            v.truncation_m.to_string(),
            real(v.tail_bound),
        ]);
    }
    out.set(
        "constants",
        entries
            .iter()
            .map(|(name, k, v)| {
                json!({
                    "constant": name,
                    "K": k,
                    "value": v.value,
                    "truncation_m": v.truncation_m,
                    "tail_bound": v.tail_bound,
                })
            })
            .collect::<Vec<_>>(),
    );
    finish(&out, &a.common, Format::Json, true)
}

const REPORT_HEADER: [&str; 11] = [
    "condition",
    "exponent",
    "sup_ratio",
    "coarse_sup_ratio",
    "growth",
    "s",
    "t",
    "r",
    "grid_resolution",
    "coarse_resolution",
    "pass",
];

fn report_row(r: &ConditionReport) -> Vec<String> {
    vec![
        r.condition.to_string(),
        opt_real(r.exponent),
        real(r.sup_ratio),
        real(r.coarse_sup_ratio),
        real(r.growth),
        real(r.argmax_point.s),
        real(r.argmax_point.t),
        opt_real(r.argmax_point.r),
        r.grid_resolution.to_string(),
        r.coarse_resolution.to_string(),
        r.pass.to_string(),
    ]
}

fn audit(a: AuditArgs) -> CmdResult {
    let kernel = a.process.kernel()?;
    let mut exps = ExponentSet::for_kernel(&kernel);
    if let Some(v) = a.theta {
        exps.theta = v;
    }
    if let Some(v) = a.nu {
        exps.nu = v;
    }
    if let Some(v) = a.lambda {
        exps.lambda = v;
    }
    if let Some(v) = a.gamma {
        exps.gamma = v;
    }
    let condition = match (&a.condition, a.all) {
        (None, false) => return Err(CliError::Usage("give --condition or --all".into())),
        (Some(c), _) => Some(c.parse::<Condition>().map_err(|e| CliError::Usage(e.to_string()))?),
        (None, true) => None,
    };
    if condition == Some(Condition::VI) {
        let report = check_condition_vi(&kernel, a.t, &a.n_list)?;
        let mut out = Output::new("audit", &["n", "value", "distance", "prediction"]);
        for row in &report.rows {
            out.row(vec![row.n.to_string(), real(row.value), real(row.distance), real(report.prediction)]);
        }
        out.set("kernel", kernel);
        out.set("condition", Condition::VI);
        out.set("report", &report);
        out.set("pass", report.pass);
        return finish(&out, &a.common, Format::Json, report.pass);
    }
    let reports = match condition {
        None => audit_all(&kernel, a.horizon, a.res, &exps)?,
        Some(c) => vec![single_condition(&kernel, c, a.horizon, a.res, &exps)?],
    };
    let pass = reports.iter().all(|r| r.pass);
    let mut out = Output::new("audit", &REPORT_HEADER);
    for r in &reports {
        out.row(report_row(r));
    }
    out.set("kernel", kernel);
    out.set("horizon", a.horizon);
    out.set("exponents", exps);
    out.set("reports", &reports);
    out.set("pass", pass);
    finish(&out, &a.common, Format::Json, pass)
}

fn single_condition(
    kernel: &CovarianceKernel,
    c: Condition,
    horizon: f64,
    res: usize,
    e: &ExponentSet,
) -> Result<ConditionReport, CliError> {
    use gpstrat::conditions::*;
    Ok(match c {
        Condition::I => check_condition_i(kernel, horizon, res)?,
        Condition::II => check_condition_ii(kernel, horizon, res, e.theta)?,
        Condition::III => check_condition_iii(kernel, horizon, res, e.nu)?,
        Condition::IV => check_condition_iv(kernel, horizon, res, e.lambda)?,
        Condition::V => check_condition_v(kernel, horizon, res, e.gamma)?,
        Condition::VI => unreachable!("handled by the caller"),
    })
}

const FUNCTIONALS: [&str; 8] = [
    "x_t",
    "delta_f",
    "phi_n",
    "third_order_sum",
    "fifth_order_sum",
    "y_n_term",
    "cubic_variation",
    "taylor_remainder_sum",
];

fn functionals(a: FunctionalsArgs) -> CmdResult {
    let kernel = a.process.kernel()?;
    let f = test_function(&a.f)?;
    if a.paths < 2 {
        return Err(CliError::Usage("--paths must be at least 2".into()));
    }
    let grid = GridSpec::new(a.n, a.horizon)?;
    grid.index_of(a.t)?;
    let factor = cache(&a.common)?.get(&kernel, &grid)?;
    let rows: Vec<[f64; 8]> = (0..a.paths)
        .into_par_iter()
        .map(|i| {
            let path = factor.sample_path(derive_seed(a.common.seed(), 0, i as u64));
            let x_t = path.value_at(a.t)?;
            Ok([
                x_t,
                f.f(x_t) - f.f(path.values[0]),
                variation::phi_n(&path, &f, a.t)?,
                variation::third_order_sum(&path, &f, a.t)?,
                variation::fifth_order_sum(&path, &f, a.t)?,
                variation::y_n_term(&kernel, &path, &f, a.t)?,
                variation::cubic_variation(&path, a.t)?,
                variation::taylor_remainder_sum(&path, &f, a.t)?,
            ])
        })
        .collect::<Result<_, Error>>()?;

    if let Some(dump) = &a.dump_paths {
        let mut header = vec!["path".to_string(), "seed".to_string()];
        header.extend(FUNCTIONALS.iter().map(|s| s.to_string()));
        let body: Vec<Vec<String>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut cells = vec![i.to_string(), derive_seed(a.common.seed(), 0, i as u64).to_string()];
                cells.extend(r.iter().map(|v| real(*v)));
                cells
            })
            .collect();
        write_plot(dump, &header, &body)?;
    }

    let columns: Vec<(&str, fn(&EmpiricalDistribution) -> f64)> = {
        let all: [(&str, fn(&EmpiricalDistribution) -> f64); 5] = [
            ("mean", |d| d.mean),
            ("std_error", |d| d.std_error_of_mean()),
            ("var", |d| d.var),
            ("skew", |d| d.skew),
            ("ex_kurtosis", |d| d.ex_kurtosis),
        ];
        let keep: &[&str] = match a.stat {
            Stat::Mean => &["mean", "std_error"],
            Stat::Var => &["var"],
            Stat::Skew => &["skew"],
            Stat::Kurtosis => &["ex_kurtosis"],
            Stat::All => &["mean", "std_error", "var", "skew", "ex_kurtosis"],
        };
        all.into_iter().filter(|(k, _)| keep.contains(k)).collect()
    };
    let mut header = vec!["functional"];
    header.extend(columns.iter().map(|(k, _)| *k));
    let mut out = Output::new("functionals", &header);
    let mut summaries = serde_json::Map::new();
    for (c, name) in FUNCTIONALS.iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let d = moments(&values)?;
        let mut cells = vec![name.to_string()];
        let mut obj = serde_json::Map::new();
        for (k, get) in &columns {
            cells.push(real(get(&d)));
            obj.insert(k.to_string(), json!(get(&d)));
        }
        out.row(cells);
        summaries.insert(name.to_string(), serde_json::Value::Object(obj));
    }
    out.set("kernel", kernel);
    out.set("n", a.n);
    out.set("T", a.horizon);
    out.set("t", a.t);
    out.set("f", &f);
    out.set("paths", a.paths);
    out.set("seed", a.common.seed());
    out.set("functionals", summaries);
    finish(&out, &a.common, Format::Json, true)
}

fn limitlaw(a: LimitlawArgs) -> CmdResult {
    let kernel = a.process.kernel()?;
    if kernel.regime() != Regime::Critical {
        return Err(Error::UnsupportedRegime(format!(
            "{kernel} is {:?}: the limit law has a correction term only at criticality (HK = 1/6 or h = 1/3)",
            kernel.regime()
        ))
        .into());
    }
    let f = test_function(&a.f)?;
    let sign = match a.sign.to_ascii_lowercase().as_str() {
        "plus" | "+" => Sign::Plus,
        "minus" | "-" => Sign::Minus,
        other => return Err(CliError::Usage(format!("sign must be plus or minus, got '{other}'"))),
    };
    let eta = eta_fn(&kernel, 1e-12)?;
    let grid = GridSpec::new(a.n, a.t)?;
    let factor = cache(&a.common)?.get(&kernel, &grid)?;
    let samples = (0..a.paths)
        .into_par_iter()
        .map(|i| sample_limit(&factor, &f, a.t, &eta, derive_seed(a.common.seed(), 0, i as u64), sign))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut out = Output::new("limitlaw", &["x_t", "correction", "rhs"]);
    for s in &samples {
        out.row(vec![real(s.x_t), real(s.correction), real(s.rhs)]);
    }
    out.set("kernel", kernel);
    out.set("n", a.n);
    out.set("t", a.t);
    out.set("f", &f);
    out.set("eta", eta);
    out.set("sign", sign);
    out.set("seed", a.common.seed());
    out.set("samples", &samples);
    finish(&out, &a.common, Format::Csv, true)
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let file = match &a.config {
        Some(p) => ExperimentFile::load(p)?,
        None => ExperimentFile::default(),
    };
    let kind_text = a
        .experiment
        .clone()
        .or(file.experiment.clone())
        .ok_or_else(|| CliError::Usage("experiment kind is required".into()))?;
    let kind: ExperimentKind = kind_text.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let family = match a.process.process {
        Some(f) => f,
        None => file
            .process
            .as_deref()
            .ok_or_else(|| CliError::Usage("process is required".into()))?
            .parse()
            .map_err(|e: Error| CliError::Usage(e.to_string()))?,
    };
    let pick = |flag: Option<f64>, fromfile: &Option<crate::config::Real>| -> Result<Option<f64>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => fromfile.as_ref().map(|r| r.value()).transpose(),
        }
    };
    let kernel = CovarianceKernel::from_parts(
        family,
        pick(a.process.hurst, &file.hurst)?,
        pick(a.process.k, &file.k)?,
        pick(a.process.h, &file.h)?,
    )?;
    let f = test_function(a.f.as_deref().or(file.f.as_deref()).unwrap_or("x3"))?;
    let mut cfg = ExperimentConfig::new(kind, kernel, f);
    if let Some(n) = a.n_list.clone().or(file.n_list.clone()) {
        cfg.n_list = n;
    }
    if let Some(t) = &a.t_list {
        cfg.t_list = t.clone();
    } else if let Some(t) = &file.t_list {
        cfg.t_list = t.iter().map(|r| r.value()).collect::<Result<_, _>>()?;
    }
    if let Some(p) = a.paths.or(file.paths) {
        cfg.paths = p;
    }
    cfg.seed = a.common.seed.or(file.seed).unwrap_or(0);
    cfg.ks_threshold = pick(a.ks_threshold, &file.ks_threshold)?;
    if let Some(v) = pick(a.vanishing_ratio, &file.vanishing_ratio)? {
        cfg.vanishing_ratio = v;
    }
    Ok(cfg)
}

/// One row per `n`, one column per (statistic, t).
fn plot_table(result: &ExperimentResult) -> (Vec<String>, Vec<Vec<String>>) {
    let keys: &[&str] = match result.experiment {
        ExperimentKind::WeakLimit => &["ks_d"],
        ExperimentKind::Vanishing => &["correction_var"],
        ExperimentKind::Scaling => &["fifth_order_ms", "y_n_mean_abs"],
        ExperimentKind::EtaConvergence => &["eta_empirical", "eta_predicted"],
    };
    let mut header = vec!["n".to_string()];
    for k in keys {
        for t in &result.t_list {
            header.push(format!("{k}@t={t}"));
        }
    }
    let rows = result
        .n_list
        .iter()
        .map(|&n| {
            let mut row = vec![n.to_string()];
            for k in keys {
                for &t in &result.t_list {
                    row.push(opt_real(result.stat(Some(n), t, k)));
                }
            }
            row
        })
        .collect();
    (header, rows)
}

fn experiment(a: ExperimentArgs) -> CmdResult {
    let cfg = experiment_config(&a)?;
    let result = run_experiment(&cfg, &cache(&a.common)?)?;
    let mut out = Output::new("experiment", &["experiment", "n", "t", "statistic", "value"]);
    for c in &result.cells {
        for (k, v) in &c.stats {
            out.row(vec![
                cfg.experiment.to_string(),
                c.n.map(|n| n.to_string()).unwrap_or_default(),
                real(c.t),
                k.clone(),
                real(*v),
            ]);
        }
    }
    for v in &result.verdicts {
        let t = v.t.map(real).unwrap_or_default();
        for (suffix, value) in [
            ("statistic", real(v.statistic)),
            ("threshold", real(v.threshold)),
            ("pass", (v.pass as u8).to_string()),
        ] {
            out.row(vec![
                cfg.experiment.to_string(),
                String::new(),
                t.clone(),
                format!("verdict.{}.{suffix}", v.name),
                value,
            ]);
        }
    }
    if let Some(p) = &a.plot {
        let (header, rows) = plot_table(&result);
        write_plot(p, &header, &rows)?;
    }
    out.set("config", &cfg);
    out.set("result", &result);
    out.set("pass", result.pass);
    finish(&out, &a.common, Format::Json, result.pass)
}

fn write_plot(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let file = std::fs::File::create(path)?;
    write_csv(header, rows, file)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let kernel = a.process.kernel()?;
    let grid = GridSpec::new(a.n, a.horizon)?;
    let factor = cache(&a.common)?.get(&kernel, &grid)?;
    let path = factor.sample_path(a.common.seed());
    let times: Vec<f64> = (0..path.values.len()).map(|j| grid.time(j)).collect();
    let mut out = Output::new("simulate", &["t", "x"]);
    for (t, x) in times.iter().zip(&path.values) {
        out.row(vec![real(*t), real(*x)]);
    }
    out.set("kernel", kernel);
    out.set("n", a.n);
    out.set("T", a.horizon);
    out.set("seed", a.common.seed());
    out.set("jitter", factor.jitter_used());
    out.set("t", times);
    out.set("x", &path.values);
    finish(&out, &a.common, Format::Csv, true)
}
