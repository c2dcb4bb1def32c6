//! Study configuration: command-line flags layered over an optional flat
//! `key = value` file layered over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::CliError;

/// Macro-replication defaults for full-scale studies; `--desk` divides them by 5.
pub const COST_STUDY_REPS: usize = 100;
pub const SOBOL_STUDY_REPS: usize = 1000;
pub const DESK_DIVISOR: usize = 5;

#[derive(Debug, Parser)]
#[command(
    name = "mlmc-varfn",
    version,
    about = "MLMC metamodeling of simulation variance functions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Run the target-accuracy procedure.
    Target(CommonArgs),
    /// Run the fixed-budget procedure.
    Budget(CommonArgs),
    /// Cost sweep over several accuracy targets, MLMC against single-level.
    Sweep(CommonArgs),
    /// First-order Sobol' indices of the Ishigami function.
    Sobol(CommonArgs),
    /// MLMC and single-level estimators at one accuracy target.
    CompareSmc(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat `key = value` configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// Master seed; macro-replication r uses derive_seed(seed, r).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (must not exist unless --force).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub macro_reps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub m0: Option<usize>,
    /// Replications added per step of the fixed-budget procedure.
    #[arg(long = "A", id = "a")]
    pub a: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long = "B", id = "b")]
    pub b: Option<usize>,
    #[arg(long)]
    pub pred_points: Option<usize>,
    #[arg(long)]
    pub n_base: Option<usize>,
    #[arg(long)]
    pub max_level: Option<usize>,
    /// Target MISE.
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Total budget in model evaluations.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Comma-separated accuracy levels `eps` for `sweep`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eps: Option<Vec<f64>>,
    /// Comma-separated `log10(eps)` values for `sweep`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        conflicts_with = "eps"
    )]
    pub log10_eps: Option<Vec<f64>>,
    /// Resample each design point independently in the bootstrap instead of
    /// resampling whole replications.
    #[arg(long)]
    pub independent_bootstrap: bool,
    /// Desk-scale preset (fewer macro-replications).
    #[arg(long)]
    pub desk: bool,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Target,
    Budget,
    Sweep,
    Sobol,
    CompareSmc,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Target => "target",
            Command::Budget => "budget",
            Command::Sweep => "sweep",
            Command::Sobol => "sobol",
            Command::CompareSmc => "compare-smc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub command: Command,
    pub model: String,
    pub seed: u64,
    pub out: PathBuf,
    pub macro_reps: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub s: f64,
    pub m0: usize,
    pub a: usize,
    pub b: usize,
    pub pred_points: usize,
    pub n_base: Option<usize>,
    pub max_level: usize,
    pub eps2: Option<f64>,
    pub budget: Option<u64>,
    /// Accuracy levels `eps` (not squared) for the sweep.
    pub eps: Vec<f64>,
    pub independent_bootstrap: bool,
    pub desk: bool,
    pub force: bool,
    pub threads: Option<usize>,
}

const KEYS: &[&str] = &[
    "model",
    "seed",
    "out",
    "macro_reps",
    "alpha",
    "gamma",
    "s",
    "m0",
    "a",
    "b",
    "pred_points",
    "n_base",
    "max_level",
    "eps2",
    "budget",
    "eps",
    "log10_eps",
    "independent_bootstrap",
    "desk",
    "force",
    "threads",
];

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped;
/// keys may use `-` or `_`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("config line {}: expected key = value", n + 1))
        })?;
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "config line {}: unknown key `{}`",
                n + 1,
                k.trim()
            )));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

struct Layers<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layers<'_> {
    fn get<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("config key `{key}`: cannot parse `{v}`"))),
        }
    }

    fn flag(&self, cli: bool, key: &str) -> Result<bool, CliError> {
        Ok(cli || self.get::<bool>(None, key)?.unwrap_or(false))
    }

    fn list(&self, cli: Option<Vec<f64>>, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| {
                    CliError::Config(format!("config key `{key}`: cannot parse list `{v}`"))
                }),
        }
    }
}

fn default_model(command: Command) -> Option<&'static str> {
    match command {
        Command::Sobol => Some("ishigami"),
        _ => None,
    }
}

impl StudyConfig {
    /// Resolves flags over `file` over defaults and validates the result.
    pub fn resolve(
        command: Command,
        args: CommonArgs,
        file: &BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let layers = Layers { file };
        let missing = |what: &str| CliError::Config(format!("missing required --{what}"));

        let model = layers
            .get(args.model, "model")?
            .or_else(|| default_model(command).map(String::from))
            .ok_or_else(|| missing("model"))?;
        let defaults = if command == Command::Sobol {
            if model != "ishigami" {
                return Err(CliError::Config(format!(
                    "sobol supports --model ishigami, got `{model}`"
                )));
            }
            // alpha = gamma = s = 2, M0 = 4
            mlmc_varfn_core::benchmarks::Defaults {
                alpha: 2.0,
                gamma: 2.0,
                s: 2.0,
                m0: 4,
            }
        } else {
            mlmc_varfn_core::benchmarks::by_name(&model)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown model `{model}` (known: {})",
                        mlmc_varfn_core::benchmarks::NAMES.join(", ")
                    ))
                })?
                .defaults
        };

        let desk = layers.flag(args.desk, "desk")?;
        let reps_default = match command {
            Command::Target | Command::Budget => 1,
            Command::Sweep | Command::CompareSmc => COST_STUDY_REPS,
            Command::Sobol => SOBOL_STUDY_REPS,
        };
        let reps_default = if desk && reps_default > 1 {
            reps_default / DESK_DIVISOR
        } else {
            reps_default
        };

        let eps = match layers.list(args.eps, "eps")? {
            Some(e) => e,
            None => layers
                .list(args.log10_eps, "log10_eps")?
                .map(|l| l.into_iter().map(|x| 10f64.powf(x)).collect())
                .unwrap_or_default(),
        };

        let cfg = StudyConfig {
            command,
            seed: layers
                .get(args.seed, "seed")?
                .ok_or_else(|| missing("seed"))?,
            out: layers.get(args.out, "out")?.ok_or_else(|| missing("out"))?,
            macro_reps: layers
                .get(args.macro_reps, "macro_reps")?
                .unwrap_or(reps_default),
            alpha: layers.get(args.alpha, "alpha")?.unwrap_or(defaults.alpha),
            gamma: layers.get(args.gamma, "gamma")?.unwrap_or(defaults.gamma),
            s: layers.get(args.s, "s")?.unwrap_or(defaults.s),
            m0: layers.get(args.m0, "m0")?.unwrap_or(defaults.m0),
            a: layers.get(args.a, "a")?.unwrap_or(2),
            b: layers
                .get(args.b, "b")?
                .unwrap_or(mlmc_varfn_core::bootstrap::DEFAULT_REPLICATES),
            pred_points: layers.get(args.pred_points, "pred_points")?.unwrap_or(256),
            n_base: layers.get(args.n_base, "n_base")?,
            max_level: layers.get(args.max_level, "max_level")?.unwrap_or(12),
            eps2: layers.get(args.eps2, "eps2")?,
            budget: layers.get(args.budget, "budget")?,
            eps,
            independent_bootstrap: layers
                .flag(args.independent_bootstrap, "independent_bootstrap")?,
            desk,
            force: layers.flag(args.force, "force")?,
            threads: layers.get(args.threads, "threads")?,
            model,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("--alpha must be positive, got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("--gamma must be positive, got {}", self.gamma));
        }
        if !(self.s > 1.0 && self.s.is_finite()) {
            return bad(format!("--s must exceed 1, got {}", self.s));
        }
        if self.m0 < 2 {
            return bad(format!("--m0 must be at least 2, got {}", self.m0));
        }
        if self.a < 1 {
            return bad("--A must be at least 1".into());
        }
        if self.b < 2 {
            return bad(format!("--B must be at least 2, got {}", self.b));
        }
        if self.pred_points < 1 {
            return bad("--pred-points must be at least 1".into());
        }
        if self.macro_reps < 1 {
            return bad("--macro-reps must be at least 1".into());
        }
        if self.n_base == Some(0) {
            return bad("--n-base must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("--threads must be at least 1".into());
        }
        if let Some(e) = self.eps2 {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("--eps2 must be positive, got {e}"));
            }
        }
        match self.command {
            Command::Target | Command::CompareSmc if self.eps2.is_none() => {
                bad("missing required --eps2".into())
            }
            Command::Budget if self.budget.is_none() => bad("missing required --budget".into()),
            Command::Sweep => {
                if self.eps.len() < 2 {
                    return bad("sweep needs at least 2 values in --eps or --log10-eps".into());
                }
                if self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return bad("sweep accuracy levels must be positive".into());
                }
                let mut sorted = self.eps.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return bad("sweep accuracy levels must be distinct".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Flat `key=value` description of every resolved parameter.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let opt = |o: Option<String>| o.unwrap_or_else(|| "default".into());
        vec![
            ("command".into(), self.command.as_str().into()),
            ("model".into(), self.model.clone()),
            ("seed".into(), self.seed.to_string()),
            ("macro_reps".into(), self.macro_reps.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("s".into(), self.s.to_string()),
            ("m0".into(), self.m0.to_string()),
            ("a".into(), self.a.to_string()),
            ("b".into(), self.b.to_string()),
            ("pred_points".into(), self.pred_points.to_string()),
            ("n_base".into(), opt(self.n_base.map(|n| n.to_string()))),
            ("max_level".into(), self.max_level.to_string()),
            ("eps2".into(), opt(self.eps2.map(|e| e.to_string()))),
            ("budget".into(), opt(self.budget.map(|b| b.to_string()))),
            (
                "eps".into(),
                self.eps
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "independent_bootstrap".into(),
                self.independent_bootstrap.to_string(),
            ),
            ("desk".into(), self.desk.to_string()),
            (
                "seed_rule".into(),
                "rep r uses mix64(seed ^ mix64(r))".into(),
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> CommonArgs {
        CommonArgs {
            model: Some("ivp".into()),
            seed: Some(1),
            out: Some("o".into()),
            eps2: Some(1e-3),
            ..Default::default()
        }
    }

    #[test]
    fn parses_flat_text() {
        let m = parse_config_text("# c\n\nalpha = 2.5\nmacro-reps=3\n").unwrap();
        assert_eq!(m["alpha"], "2.5");
        assert_eq!(m["macro_reps"], "3");
        assert!(parse_config_text("nonsense").is_err());
        assert!(parse_config_text("colour = red").is_err());
    }

    #[test]
    fn precedence_is_flag_file_default() {
        let file = parse_config_text("alpha = 2.5\ngamma = 3\n").unwrap();
        let a = CommonArgs {
            alpha: Some(1.25),
            ..args()
        };
        let c = StudyConfig::resolve(Command::Target, a, &file).unwrap();
        assert_eq!(c.alpha, 1.25);
        assert_eq!(c.gamma, 3.0);
        assert_eq!(c.s, 2.0);
        assert_eq!(c.m0, 4);
    }

    #[test]
    fn missing_values_are_config_errors() {
        let empty = BTreeMap::new();
        let a = CommonArgs {
            eps2: None,
            ..args()
        };
        assert!(matches!(
            StudyConfig::resolve(Command::Target, a, &empty),
            Err(CliError::Config(_))
        ));
        let a = CommonArgs {
            seed: None,
            ..args()
        };
        assert!(StudyConfig::resolve(Command::Target, a, &empty).is_err());
        let a = CommonArgs {
            eps: Some(vec![0.1]),
            ..args()
        };
        assert!(StudyConfig::resolve(Command::Sweep, a, &empty).is_err());
        let a = CommonArgs {
            model: Some("nope".into()),
            ..args()
        };
        assert!(StudyConfig::resolve(Command::Target, a, &empty).is_err());
    }

    #[test]
    fn desk_divides_study_reps() {
        let empty = BTreeMap::new();
        let a = CommonArgs {
            log10_eps: Some(vec![-1.0, -1.5]),
            desk: true,
            ..args()
        };
        let c = StudyConfig::resolve(Command::Sweep, a, &empty).unwrap();
        assert_eq!(c.macro_reps, 20);
        assert!((c.eps[1] - 10f64.powf(-1.5)).abs() < 1e-15);
        let a = CommonArgs {
            model: None,
            desk: true,
            ..args()
        };
        assert_eq!(
            StudyConfig::resolve(Command::Sobol, a, &empty)
                .unwrap()
                .macro_reps,
            200
        );
    }
}
