//! Experiment files.
//!
//! An experiment names one analysis command and supplies its flags, grouped
//! for readability:
//!
//! ```toml
//! analysis = "fpe1d"
//! output = "runs/probe"
//! seed = 7
//!
//! [forcing]
//! p0 = -0.5
//! p2 = 2.0
//!
//! [solver]
//! nx = 1601
//! ```
//!
//! Keys in `[forcing]`, `[solver]` and `[args]` are the long
//! flags of the command (underscores and dashes are interchangeable). Every
//! key is checked before anything runs and all problems are reported
//! together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser};
use serde::{Deserialize, Serialize};

use super::{dispatch, Cli, Context, Report};
use crate::error::{Error, Result};

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RunArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Print the equivalent command line and stop.
    #[arg(long)]
    #[serde(default)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Command to run, e.g. `critical-curve` or `fpe1d`.
    pub analysis: String,
    /// Passed as `--system`.
    pub system: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub years: Option<bool>,
    pub budget_secs: Option<f64>,
    #[serde(default)]
    pub forcing: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pub solver: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pub args: BTreeMap<String, toml::Value>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Equivalent command line, after checking every key against the flags
    /// the command accepts.
    pub fn to_args(&self) -> Result<Vec<String>> {
        let root = Cli::command();
        let cmd = root
            .get_subcommands()
            .find(|c| c.get_name() == self.analysis && c.get_name() != "run");
        let Some(cmd) = cmd else {
            let names: Vec<&str> = root
                .get_subcommands()
                .map(|c| c.get_name())
                .filter(|n| *n != "run" && *n != "help")
                .collect();
            return Err(Error::Validation(vec![format!(
                "unknown analysis {:?}; expected one of {}",
                self.analysis,
                names.join(", ")
            )]));
        };
        let flags: Vec<(String, bool)> = cmd
            .get_arguments()
            .filter_map(|a| {
                let takes_value = a.get_action().takes_values();
                a.get_long().map(|l| (l.to_string(), takes_value))
            })
            .collect();
        let lookup = |key: &str| -> Option<(String, bool)> {
            let k = key.replace('_', "-");
            flags.iter().find(|(f, _)| f.eq_ignore_ascii_case(&k)).cloned()
        };

        let mut problems = Vec::new();
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        let mut out = vec!["tipping-kit".to_string()];
        if let Some(o) = &self.output {
            out.push(format!("--out={}", o.display()));
        }
        if self.years == Some(true) {
            out.push("--years".into());
        }
        if let Some(b) = self.budget_secs {
            out.push(format!("--budget-secs={b}"));
        }
        out.push(self.analysis.clone());

        let mut entries: Vec<(String, String, toml::Value)> = Vec::new();
        if let Some(s) = &self.system {
            entries.push(("top level".into(), "system".into(), toml::Value::String(s.clone())));
        }
        if let Some(s) = self.seed {
            entries.push(("top level".into(), "seed".into(), toml::Value::Integer(s as i64)));
        }
        for (table, map) in [("forcing", &self.forcing), ("solver", &self.solver), ("args", &self.args)] {
            for (k, v) in map {
                entries.push((table.into(), k.clone(), v.clone()));
            }
        }
        for (table, key, value) in entries {
            let Some((flag, takes_value)) = lookup(&key) else {
                problems.push(format!("{table}: {} does not accept {key:?}", self.analysis));
                continue;
            };
            if let Some(prev) = seen.insert(flag.clone(), table.clone()) {
                problems.push(format!("{key:?} given twice ({prev} and {table})"));
                continue;
            }
            match (takes_value, &value) {
                (false, toml::Value::Boolean(true)) => out.push(format!("--{flag}")),
                (false, toml::Value::Boolean(false)) => {}
                (false, _) => problems.push(format!("{table}.{key} is a switch and must be true or false")),
                (true, toml::Value::String(s)) => out.push(format!("--{flag}={s}")),
                (true, toml::Value::Integer(i)) => out.push(format!("--{flag}={i}")),
                (true, toml::Value::Float(x)) => out.push(format!("--{flag}={x}")),
                (true, toml::Value::Boolean(b)) => out.push(format!("--{flag}={b}")),
                (true, _) => problems.push(format!("{table}.{key} must be a string, number or boolean")),
            }
        }
        if problems.is_empty() {
            Ok(out)
        } else {
            Err(Error::Validation(problems))
        }
    }
}

pub fn run(a: &RunArgs, ctx: &Context) -> Result<Report> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let args = cfg.to_args()?;
    let cli = Cli::try_parse_from(&args).map_err(|e| Error::Validation(vec![e.render().to_string().trim().to_string()]))?;
    if a.dry_run {
        return Ok(Report {
            summary: args[1..].join(" "),
            files: Vec::new(),
        });
    }
    let inner = Context {
        out: cfg.output.clone().unwrap_or_else(|| ctx.out.clone()),
        years: cli.global.years || ctx.years,
        budget: cli.global.budget_secs.map(std::time::Duration::from_secs_f64).or(ctx.budget),
    };
    dispatch(cli.command, &inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_tables_to_flags() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            analysis = "fpe1d"
            [forcing]
            p0 = -0.5
            p2 = 2
            [solver]
            x_bd = 10.0
            refine = true
            "#,
        )
        .unwrap();
        let args = cfg.to_args().unwrap();
        assert_eq!(args[1], "fpe1d");
        assert!(args.contains(&"--p0=-0.5".to_string()));
        assert!(args.contains(&"--x-bd=10".to_string()));
        assert!(args.contains(&"--refine".to_string()));
    }

    #[test]
    fn lists_every_bad_key() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            analysis = "criterion"
            seed = 3
            [forcing]
            R = 0.01
            bogus = 1
            [args]
            r = 0.02
            "#,
        )
        .unwrap();
        match cfg.to_args() {
            Err(Error::Validation(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_analysis_is_rejected() {
        let cfg = ExperimentConfig {
            analysis: "run".into(),
            ..Default::default()
        };
        assert!(cfg.to_args().unwrap_err().is_validation());
    }
}
