use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csa_core::experiment::gradsuite::{gradcheck_suite, Mutation};
use csa_core::experiment::runner::{corruption_preview, Overrides};
use csa_core::experiment::{ExperimentConfig, Preset};
use csa_core::train::Alignment;

/// Train and evaluate models with contrastive semantic alignment.
#[derive(Debug, Parser)]
#[command(name = "csa", version)]
struct Cli {
    /// Log per-epoch progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the preset named in the config file.
    Train {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Aligned runs at each gamma against a shared baseline.
    SweepGamma {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Paired runs at fractions of the configured epoch budget.
    EpochBudget {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Alignment variants against the plain baseline.
    Ablate {
        config: PathBuf,
        /// csa, sa-only, supcon or none; comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        variant: Vec<Alignment>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Finite-difference check of every loss operation.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inject a known gradient defect (flip-separation-grad).
        #[arg(long)]
        mutation: Option<Mutation>,
    },
    /// Print corruption parameters and their mean squared pixel change on
    /// the configured test set.
    CorruptPreview { config: PathBuf },
}

fn study(config: PathBuf, overrides: Overrides, seeds: Option<Vec<u64>>) -> Result<String, csa_core::Error> {
    let mut cfg = ExperimentConfig::load(&config)?;
    overrides.apply(&mut cfg);
    if let Some(s) = seeds {
        if cfg.study.preset == Preset::Single {
            cfg.train.seed = s[0];
        }
        cfg.study.seeds = s;
    }
    let out = csa_core::experiment::runner::run_experiment(&cfg)?;
    Ok(format!("{}artifacts in {}\n", out.summary, out.directory.display()))
}

fn run(cli: Cli) -> Result<ExitCode, csa_core::Error> {
    let text = match cli.command {
        Command::Train { config, seeds } => study(config, Overrides::default(), seeds)?,
        Command::SweepGamma { config, gammas, seeds } => {
            let o = Overrides {
                preset: Some(Preset::GammaSweep),
                gammas: Some(gammas),
                ..Overrides::default()
            };
            study(config, o, seeds)?
        }
        Command::EpochBudget {
            config,
            fractions,
            seeds,
        } => {
            let o = Overrides {
                preset: Some(Preset::EpochBudget),
                fractions: Some(fractions),
                ..Overrides::default()
            };
            study(config, o, seeds)?
        }
        Command::Ablate { config, variant, seeds } => {
            let o = Overrides {
                preset: Some(Preset::Ablation),
                variants: Some(variant),
                ..Overrides::default()
            };
            study(config, o, seeds)?
        }
        Command::Gradcheck {
            instances,
            seed,
            mutation,
        } => {
            let report = gradcheck_suite(instances, seed, mutation)?;
            print!("{}", report.render());
            return Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            });
        }
        Command::CorruptPreview { config } => corruption_preview(&ExperimentConfig::load(&config)?)?,
    };
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_lists_and_variants() {
        let cli = Cli::parse_from(["csa", "ablate", "x.toml", "--variant", "sa-only,supcon"]);
        match cli.command {
            Command::Ablate { variant, .. } => assert_eq!(variant, vec![Alignment::SaOnly, Alignment::Supcon]),
            other => panic!("unexpected {other:?}"),
        }
        let cli = Cli::parse_from(["csa", "sweep-gamma", "x.toml", "--gammas", "0.1,0.25"]);
        assert!(matches!(cli.command, Command::SweepGamma { ref gammas, .. } if gammas == &[0.1, 0.25]));
        assert!(Cli::try_parse_from(["csa", "ablate", "x.toml", "--variant", "bogus"]).is_err());
    }
}
