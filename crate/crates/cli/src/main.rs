use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sabtv_core::harness::{self, ExperimentConfig, SweepParameter};

/// Stochastic push-pull gradient tracking experiments.
#[derive(Parser)]
#[command(name = "sabtv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm over all seeds and write traces.
    Run(Common),
    /// Repeat the run for several values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// alpha, sigma, n or extra_edges.
        #[arg(long)]
        param: SweepParameter,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Compute the theory constants, step-size bound and certificate.
    Certify(Common),
    /// Load the configured IDX split and write it as CSV.
    Ingest(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Step-size override.
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated seed override.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory; defaults to experiment.output_dir, then
    /// $SABTV_OUT_ROOT/<name>, then runs/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(a) = self.alpha {
            cfg.run.alpha = Some(a);
        }
        if let Some(s) = &self.seeds {
            cfg.experiment.seeds = s.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig, suffix: &str) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        let stem = self
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        let name = if suffix.is_empty() { stem } else { format!("{stem}-{suffix}") };
        cfg.output_dir(&name)
    }
}

fn show(dir: &Path) {
    println!("output: {}", dir.display());
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let out = c.out_dir(&cfg, "");
            let r = harness::run_experiment(&cfg, &out)?;
            show(&out);
            let last = r.final_row();
            println!(
                "algorithm={} alpha={} ({}) iterations={} seeds={}",
                r.algorithm.name(),
                r.alpha,
                r.alpha_source.name(),
                r.iterations,
                r.seeds.len()
            );
            println!(
                "final epoch={} residual={:e} consensus_error={:e}",
                last.epoch, last.residual.0, last.consensus_error.0
            );
            if let Some((acc, se)) = last.accuracy {
                println!("final accuracy={acc:.4} (se {se:.4})");
            }
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = common.load()?;
            let out = common.out_dir(&cfg, &format!("sweep-{}", param.name()));
            let rows = harness::sweep(&cfg, param, &values, &out)?;
            show(&out);
            println!("{:>14} {:>14} {:>14}", param.name(), "plateau", "se");
            for r in rows {
                println!("{:>14} {:>14.6e} {:>14.6e}", r.value, r.residual.0, r.residual.1);
            }
        }
        Command::Certify(c) => {
            let cfg = c.load()?;
            let out = c.out_dir(&cfg, "certify");
            let report = harness::certify(&cfg, &out)?;
            show(&out);
            println!(
                "status={} alpha={:e} alpha_bound={:e} rho={} certificate={}",
                if report.passes() { "pass" } else { "fail" },
                report.alpha,
                report.alpha_bound,
                report.rho,
                report.certificate.holds()
            );
            match report.steady_state {
                Some(v) => println!("steady_state=[{:e}, {:e}, {:e}]", v[0], v[1], v[2]),
                None => println!("steady_state=undefined"),
            }
        }
        Command::Ingest(c) => {
            let cfg = c.load()?;
            if !cfg.problem.is_logistic() {
                bail!("ingest needs a logistic problem");
            }
            let out = c.out_dir(&cfg, "ingest");
            let split = harness::ingest(&cfg, &out)?;
            show(&out);
            println!(
                "train={} test={} features={} (round trip verified)",
                split.train.len(),
                split.test.len(),
                split.train.dim()
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use sabtv_core::harness::OUT_ROOT_ENV;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn default_out_dir_uses_config_stem() {
        let c = Common {
            config: PathBuf::from("configs/smoke.toml"),
            alpha: None,
            seeds: None,
            out: None,
        };
        let cfg = ExperimentConfig::from_toml(
            "[problem]\nkind = \"quadratic\"\nn = 2\ndim = 1\ncondition_number = 1.0\nseed = 0\n\
             [schedule]\nkind = \"static\"\n[run]\nalgorithm = \"cgd\"\niterations = 1\n\
             [experiment]\nseeds = [0]\noutput_dir = \"/x/y\"\n",
        )
        .unwrap();
        assert_eq!(c.out_dir(&cfg, "certify"), PathBuf::from("/x/y"));
        let mut cfg = cfg;
        cfg.experiment.output_dir = None;
        if std::env::var_os(OUT_ROOT_ENV).is_none() {
            assert_eq!(c.out_dir(&cfg, "certify"), PathBuf::from("runs/smoke-certify"));
        }
    }
}
