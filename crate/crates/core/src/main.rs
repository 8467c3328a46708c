use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ipred::config::{load_config, ScenarioConfig};
use ipred::harness::{
    experiment_outage_sweep, experiment_prediction_trace, experiment_tune_kernel, replay, RunManifest, RunOptions,
    MANIFEST_FILE,
};

#[derive(Parser)]
#[command(name = "ipred", version, about = "Interference prediction and proactive allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prior and sliding-window posterior panels on a short trace.
    PredictTrace(Common),
    /// Achieved vs. target outage for GPR, moving average and genie.
    OutageSweep {
        #[command(flatten)]
        common: Common,
        /// Also write per-slot CSVs for every (predictor, target) pair.
        #[arg(long)]
        slot_csv: bool,
    },
    /// Log-marginal-likelihood grid report for the first window.
    TuneKernel(Common),
    /// Re-run the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Allocated slots per episode.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Allocate against the upper 95 % interference bound.
    #[arg(long)]
    conservative: bool,
    /// Draw Bernoulli decoding failures as well.
    #[arg(long)]
    empirical: bool,
}

impl Common {
    fn scenario(&self) -> ipred::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(n) = self.slots {
            cfg.n_slots = n;
        }
        cfg.conservative |= self.conservative;
        cfg.empirical |= self.empirical;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report(m: &RunManifest, out: &Path) {
    for o in &m.outputs {
        println!("wrote {}", out.join(o).display());
    }
    println!("wrote {} ({:.2} s)", out.join(MANIFEST_FILE).display(), m.duration_secs);
}

fn run(cli: Cli) -> ipred::Result<()> {
    match cli.command {
        Command::PredictTrace(c) => {
            let cfg = c.scenario()?;
            let out = experiment_prediction_trace(&cfg, &c.out)?;
            for (k, b) in out.blocks.iter().enumerate() {
                println!(
                    "block {}: train {}..{} predict {}..{} sigma_f {:.4} ell {:.4}",
                    k + 1,
                    b.train_slots[0],
                    b.train_slots[b.train_slots.len() - 1],
                    b.predict_slots[0],
                    b.predict_slots[b.predict_slots.len() - 1],
                    b.kernel.output_scale,
                    b.kernel.length_scale
                );
            }
            report(&out.manifest, &c.out);
        }
        Command::OutageSweep { common, slot_csv } => {
            let cfg = common.scenario()?;
            let (m, rows) = experiment_outage_sweep(&cfg, RunOptions { slot_csv }, &common.out)?;
            println!("{:<8} {:>10} {:>12} {:>12} {:>10}", "pred", "target", "analytic", "empirical", "mean_R");
            for r in &rows {
                let emp = r
                    .result
                    .achieved_outage_empirical
                    .map(|e| format!("{e:.3e}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:<8} {:>10.1e} {:>12.3e} {:>12} {:>10.2}",
                    r.predictor, r.target, r.result.achieved_outage_analytic, emp, r.result.mean_channel_uses
                );
            }
            report(&m, &common.out);
        }
        Command::TuneKernel(c) => {
            let cfg = c.scenario()?;
            let (m, r) = experiment_tune_kernel(&cfg, &c.out)?;
            println!(
                "slots {}..{}: sigma_f = {:.6}, ell = {:.6}, log marginal likelihood = {:.6}",
                r.first_slot, r.last_slot, r.best.output_scale, r.best.length_scale, r.best_score
            );
            report(&m, &c.out);
        }
        Command::Replay { manifest, out } => {
            let m = replay(&manifest, &out)?;
            report(&m, &out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
