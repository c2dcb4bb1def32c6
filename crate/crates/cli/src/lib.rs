//! Command-line studies for MLMC variance-function metamodeling: configuration,
//! macro-replication drivers and CSV artifacts.
//!
//! Exit codes: 0 success, 1 model failure or I/O error, 2 configuration error,
//! 3 level cap reached before the stopping criterion fired.

pub mod config;
pub mod output;
pub mod studies;

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;
use mlmc_varfn_core::benchmarks::{by_name, ISHIGAMI_SOBOL_INDICES};
use mlmc_varfn_core::procedures::{MlmcConfig, RunReport};
use mlmc_varfn_core::Error as CoreError;

use config::{read_config_file, Cli, Command, CommandArgs, StudyConfig};
use output::{num, prepare_dir, write_meta, CsvOut};
use studies::{compare_smc, rep_seed, sobol_summary, sweep, SobolStudy, Study};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::LevelCapReached { .. } => 3,
                CoreError::ModelFailure { .. } => 1,
                CoreError::InvalidParameter { .. }
                | CoreError::BudgetTooSmall { .. }
                | CoreError::InvalidDomain(_)
                | CoreError::UnsupportedDimension { .. } => 2,
                _ => 1,
            },
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Messages go to stdout / stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Config(_) = e {
                eprintln!("run `mlmc-varfn <command> --help` for usage");
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let (command, args) = match cli.command {
        CommandArgs::Target(a) => (Command::Target, a),
        CommandArgs::Budget(a) => (Command::Budget, a),
        CommandArgs::Sweep(a) => (Command::Sweep, a),
        CommandArgs::Sobol(a) => (Command::Sobol, a),
        CommandArgs::CompareSmc(a) => (Command::CompareSmc, a),
    };
    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => Default::default(),
    };
    let cfg = StudyConfig::resolve(command, args, &file)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(&cfg))
}

pub fn execute(cfg: &StudyConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Sobol => {
            prepare_dir(&cfg.out, cfg.force)?;
            cmd_sobol(cfg)
        }
        _ => {
            let bench = by_name(&cfg.model)
                .ok_or_else(|| CliError::Config(format!("unknown model `{}`", cfg.model)))?;
            let study = Study::new(&bench, mlmc_config(cfg), cfg.pred_points, cfg.seed)?;
            if let Command::Budget = cfg.command {
                // reject a budget below the level-0 cost before touching the disk
                let n0 = study.base.growth()?.size(0) as u64;
                let t = cfg.budget.unwrap_or(0);
                if t < n0 * study.base.m0 as u64 {
                    return Err(CoreError::BudgetTooSmall {
                        budget: t,
                        required: n0 * study.base.m0 as u64,
                    }
                    .into());
                }
            }
            prepare_dir(&cfg.out, cfg.force)?;
            match cfg.command {
                Command::Target => {
                    let reports = study.target(cfg.eps2.expect("validated"), cfg.macro_reps)?;
                    write_runs(cfg, &study, &reports)
                }
                Command::Budget => {
                    let reports =
                        study.budget(cfg.budget.expect("validated"), cfg.a, cfg.macro_reps)?;
                    write_runs(cfg, &study, &reports)
                }
                Command::Sweep => cmd_sweep(cfg, &study),
                Command::CompareSmc => cmd_compare(cfg, &study),
                Command::Sobol => unreachable!(),
            }
        }
    }
}

pub fn mlmc_config(cfg: &StudyConfig) -> MlmcConfig {
    MlmcConfig {
        n_base: cfg.n_base,
        bootstrap_replicates: cfg.b,
        shared_bootstrap_indices: !cfg.independent_bootstrap,
        max_level: cfg.max_level,
        ..MlmcConfig::new(cfg.alpha, cfg.gamma, cfg.s, cfg.m0, cfg.seed)
    }
}

fn x_headers(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("x_{k}")).collect()
}

fn write_surface(
    path: &Path,
    points: mlmc_varfn_core::Points<'_>,
    values: &[f64],
) -> Result<(), CliError> {
    let xs = x_headers(points.dim());
    let mut header = vec!["point_index"];
    header.extend(xs.iter().map(String::as_str));
    header.push("v_hat");
    let mut w = CsvOut::create(path, "surface", &header)?;
    for (i, (p, v)) in points.iter().zip(values).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.iter().map(|x| num(*x)));
        row.push(num(*v));
        w.row(row)?;
    }
    w.finish()?;
    Ok(())
}

fn write_trace(path: &Path, report: &RunReport) -> Result<(), CliError> {
    let mut w = CsvOut::create(
        path,
        "trace",
        &["iter", "action", "level", "delta_reps", "d2", "V", "cost"],
    )?;
    for t in &report.trace {
        w.row([
            t.iteration.to_string(),
            t.action.as_str().to_string(),
            t.level.to_string(),
            t.delta_replications.to_string(),
            num(t.d2),
            num(t.v),
            t.cost.to_string(),
        ])?;
    }
    w.finish()?;
    Ok(())
}

/// Finest design of a run; `level` is the level at which each point entered.
fn write_design(path: &Path, report: &RunReport) -> Result<(), CliError> {
    let Some(finest) = report.metamodel.levels.last() else {
        return Ok(());
    };
    let sizes: Vec<usize> = report
        .metamodel
        .levels
        .iter()
        .map(|l| l.design.len())
        .collect();
    let xs = x_headers(finest.design.dim());
    let mut header = vec!["point_index", "level"];
    header.extend(xs.iter().map(String::as_str));
    let mut w = CsvOut::create(path, "design", &header)?;
    for (i, p) in finest.design.iter().enumerate() {
        let level = sizes.iter().position(|&n| i < n).unwrap_or(0);
        let mut row = vec![i.to_string(), level.to_string()];
        row.extend(p.iter().map(|x| num(*x)));
        w.row(row)?;
    }
    w.finish()?;
    Ok(())
}

fn write_runs(cfg: &StudyConfig, study: &Study<'_>, reports: &[RunReport]) -> Result<(), CliError> {
    let mut meta = cfg.metadata();
    let mut summary = CsvOut::create(
        cfg.out.join("summary.csv"),
        "summary",
        &["macro_rep", "cost", "mise", "seed", "levels", "termination"],
    )?;
    for (r, report) in reports.iter().enumerate() {
        let seed = rep_seed(cfg.seed, r);
        write_trace(&cfg.out.join(format!("trace_{r:04}.csv")), report)?;
        write_surface(
            &cfg.out.join(format!("surface_{r:04}.csv")),
            study.prediction.points(),
            &report.surface.values,
        )?;
        write_design(&cfg.out.join(format!("design_{r:04}.csv")), report)?;
        summary.row([
            r.to_string(),
            report.cost().to_string(),
            num(study.ise(&report.surface.values)),
            seed.to_string(),
            (report.finest_level() + 1).to_string(),
            report.termination.as_str().to_string(),
        ])?;
        meta.push((format!("rep.{r}.seed"), seed.to_string()));
        meta.push((
            format!("rep.{r}.termination"),
            report.termination.as_str().into(),
        ));
    }
    summary.finish()?;
    let mean_cost = reports.iter().map(|r| r.cost() as f64).sum::<f64>() / reports.len() as f64;
    meta.push(("mean_cost".into(), num(mean_cost)));
    if reports.len() >= 2 {
        let m = study.mise(reports)?;
        meta.push(("mise".into(), num(m.value)));
        meta.push(("mise_bias_part".into(), num(m.bias_part)));
        meta.push(("mise_variance_part".into(), num(m.variance_part)));
    }
    write_meta(cfg.out.join("run.meta"), &meta)?;
    println!(
        "{}: {} macro-rep(s), mean cost {mean_cost:.0}, output in {}",
        cfg.command.as_str(),
        reports.len(),
        cfg.out.display()
    );
    Ok(())
}

fn cmd_sweep(cfg: &StudyConfig, study: &Study<'_>) -> Result<(), CliError> {
    let res = sweep(study, &cfg.eps, cfg.macro_reps)?;
    let mut w = CsvOut::create(
        cfg.out.join("sweep.csv"),
        "sweep",
        &[
            "eps",
            "method",
            "mean_cost",
            "eps2",
            "ratio",
            "mean_pilot_cost",
        ],
    )?;
    let mut reps = CsvOut::create(
        cfg.out.join("sweep_reps.csv"),
        "sweep_reps",
        &[
            "eps",
            "macro_rep",
            "mlmc_cost",
            "mlmc_ise",
            "levels",
            "smc_replications",
            "smc_cost",
            "smc_pilot_cost",
        ],
    )?;
    for p in &res.points {
        let ratio = num(p.ratio());
        w.row([
            num(p.eps),
            "mlmc".into(),
            num(p.mean_mlmc_cost()),
            num(p.eps2),
            ratio.clone(),
            "0".into(),
        ])?;
        w.row([
            num(p.eps),
            "smc".into(),
            num(p.mean_smc_cost()),
            num(p.eps2),
            ratio,
            num(p.mean_pilot_cost()),
        ])?;
        for (r, x) in p.reps.iter().enumerate() {
            reps.row([
                num(p.eps),
                r.to_string(),
                x.mlmc_cost.to_string(),
                num(x.mlmc_ise),
                (x.finest_level + 1).to_string(),
                x.smc.replications.to_string(),
                x.smc.cost.to_string(),
                x.smc.pilot_cost.to_string(),
            ])?;
        }
    }
    w.finish()?;
    reps.finish()?;
    let mut meta = cfg.metadata();
    meta.push(("slope_regressor".into(), "log10(eps2)".into()));
    meta.push(("slope_mlmc".into(), num(res.mlmc_fit.slope)));
    meta.push(("slope_mlmc_r2".into(), num(res.mlmc_fit.r2)));
    meta.push(("slope_smc".into(), num(res.smc_fit.slope)));
    meta.push(("slope_smc_r2".into(), num(res.smc_fit.r2)));
    write_meta(cfg.out.join("run.meta"), &meta)?;
    println!(
        "sweep: MLMC slope {:.3}, SMC slope {:.3}, ratios [{}]",
        res.mlmc_fit.slope,
        res.smc_fit.slope,
        res.points
            .iter()
            .map(|p| format!("{:.2}", p.ratio()))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn cmd_compare(cfg: &StudyConfig, study: &Study<'_>) -> Result<(), CliError> {
    let eps2 = cfg.eps2.expect("validated");
    let reps = compare_smc(study, eps2, cfg.macro_reps)?;
    let mut w = CsvOut::create(
        cfg.out.join("compare.csv"),
        "compare",
        &["macro_rep", "method", "cost", "mise"],
    )?;
    for (r, c) in reps.iter().enumerate() {
        w.row([
            r.to_string(),
            "mlmc".into(),
            c.mlmc.cost().to_string(),
            num(study.ise(&c.mlmc.surface.values)),
        ])?;
        w.row([
            r.to_string(),
            "smc".into(),
            c.smc.cost.to_string(),
            num(study.ise(&c.smc_surface.values)),
        ])?;
    }
    w.finish()?;
    let mut meta = cfg.metadata();
    let n = reps.len() as f64;
    let mlmc_cost = reps.iter().map(|c| c.mlmc.cost() as f64).sum::<f64>() / n;
    let smc_cost = reps.iter().map(|c| c.smc.cost as f64).sum::<f64>() / n;
    meta.push(("mean_cost_mlmc".into(), num(mlmc_cost)));
    meta.push(("mean_cost_smc".into(), num(smc_cost)));
    meta.push((
        "mean_pilot_cost_smc".into(),
        num(reps.iter().map(|c| c.smc.pilot_cost as f64).sum::<f64>() / n),
    ));
    meta.push(("ratio".into(), num(smc_cost / mlmc_cost)));
    if reps.len() >= 2 {
        let mlmc: Vec<Vec<f64>> = reps.iter().map(|c| c.mlmc.surface.values.clone()).collect();
        let smc: Vec<Vec<f64>> = reps.iter().map(|c| c.smc_surface.values.clone()).collect();
        let empirical = mlmc_varfn_core::analysis::empirical_mise;
        meta.push((
            "mise_mlmc".into(),
            num(empirical(&mlmc, &study.truth)?.value),
        ));
        meta.push(("mise_smc".into(), num(empirical(&smc, &study.truth)?.value)));
    }
    write_meta(cfg.out.join("run.meta"), &meta)?;
    println!("compare-smc: mean cost MLMC {mlmc_cost:.0}, SMC {smc_cost:.0}");
    Ok(())
}

fn cmd_sobol(cfg: &StudyConfig) -> Result<(), CliError> {
    let mut study = SobolStudy::new(cfg.seed);
    study.pred_points = cfg.pred_points;
    let t = &mut study.template;
    t.mlmc = MlmcConfig {
        seed: 0,
        ..mlmc_config(cfg)
    };
    t.a = cfg.a;
    if let Some(b) = cfg.budget {
        t.budget = b;
    }
    let estimates = study.run(cfg.macro_reps)?;
    let mut w = CsvOut::create(
        cfg.out.join("sobol.csv"),
        "sobol",
        &["macro_rep", "s1", "s2", "s3"],
    )?;
    for (r, e) in estimates.iter().enumerate() {
        w.row([
            r.to_string(),
            num(e[0].index),
            num(e[1].index),
            num(e[2].index),
        ])?;
    }
    w.finish()?;
    let mut meta = cfg.metadata();
    meta.push(("budget_metamodel".into(), study.template.budget.to_string()));
    meta.push((
        "outer_points".into(),
        study.template.outer_points.to_string(),
    ));
    meta.push((
        "unconditional_outputs".into(),
        study.template.unconditional_outputs.to_string(),
    ));
    let negative = estimates.iter().flatten().filter(|e| e.negative).count();
    meta.push(("negative_estimates".into(), negative.to_string()));
    let summary = sobol_summary(&estimates);
    let with_mse = estimates.len() > 1;
    let header: &[&str] = if with_mse {
        &["index", "reference", "mean", "mse"]
    } else {
        &["index", "reference", "mean"]
    };
    let mut s = CsvOut::create(cfg.out.join("sobol_summary.csv"), "sobol_summary", header)?;
    for (i, (m, mse)) in summary.iter().enumerate() {
        let mut row = vec![
            format!("S{}", i + 1),
            num(ISHIGAMI_SOBOL_INDICES[i]),
            num(*m),
        ];
        if with_mse {
            row.push(num(*mse));
        }
        s.row(row)?;
    }
    s.finish()?;
    write_meta(cfg.out.join("run.meta"), &meta)?;
    println!(
        "sobol: means S1 {:.4}, S2 {:.4}, S3 {:.4} over {} macro-rep(s)",
        summary[0].0,
        summary[1].0,
        summary[2].0,
        estimates.len()
    );
    Ok(())
}
