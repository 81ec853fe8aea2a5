use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dreamlane::config::RunConfig;
use dreamlane::error::Result;
use dreamlane::stages;

#[derive(Parser)]
#[command(
    name = "dreamlane",
    about = "Latent-imagination trajectory planning pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes, anchor trajectories, and per-scene vocabularies.
    GenData(StageArgs),
    /// Train the shortcut-forcing world model on anchor and vocabulary rollouts.
    TrainWm(StageArgs),
    /// Label every vocabulary entry with oracle reward tables.
    Label(StageArgs),
    /// Train the dense reward model on imagined latents against labels.
    TrainRm(StageArgs),
    /// Behavior-cloning warmup followed by GRPO policy optimization.
    TrainRl(StageArgs),
    /// Closed-loop oracle evaluation and the imagination latency report.
    Eval(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Euler step count used for imagination rollouts.
    #[arg(long, value_parser = ["1", "4", "16"])]
    steps: Option<String>,
    /// Override the GRPO candidate sampler.
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Vocab,
    Random,
}

impl StageArgs {
    fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(steps) = &self.steps {
            // One knob for every stage that integrates the flow field; only
            // the running stage reads its own field.
            let steps: usize = steps.parse().expect("value_parser admits 1|4|16");
            cfg.rm.imagine_steps = steps;
            cfg.rl.steps = steps;
            cfg.eval.steps = steps;
        }
        if let Some(sampler) = self.sampler {
            cfg.rl.sampler = match sampler {
                SamplerArg::Vocab => "vocab".into(),
                SamplerArg::Random => "random".into(),
            };
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::GenData(a) => stages::gen_data::run(&a.load_config()?),
        Command::TrainWm(a) => stages::train_wm::run(&a.load_config()?),
        Command::Label(a) => stages::label::run(&a.load_config()?),
        Command::TrainRm(a) => stages::train_rm::run(&a.load_config()?),
        Command::TrainRl(a) => stages::train_rl::run(&a.load_config()?),
        Command::Eval(a) => stages::eval::run(&a.load_config()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Single machine-readable line on stderr; humans get the same
            // message inside it.
            eprintln!(
                "{}",
                serde_json::json!({"error": e.kind(), "message": e.to_string()})
            );
            ExitCode::FAILURE
        }
    }
}
