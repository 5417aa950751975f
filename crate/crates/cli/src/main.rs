use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use vqa3d_cli::pipeline::{Noise, PipelineVariant};
use vqa3d_cli::{cmd_ablate, cmd_answer, cmd_eval, cmd_gen, cmd_parse, RunOptions};
use vqa3d_reason::Family;

#[derive(Debug, Parser)]
#[command(name = "vqa3d", version, about = "Synthetic 3D-aware VQA: generate, parse, answer, evaluate")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    #[arg(long, global = true, env = "VQA3D_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, env = "VQA3D_SCENES", default_value_t = 100)]
    scenes: usize,
    /// Foreground feature noise.
    #[arg(long, global = true, env = "VQA3D_NOISE_FG", default_value_t = Noise::default().sigma_fg)]
    noise_fg: f64,
    /// Background feature noise.
    #[arg(long, global = true, env = "VQA3D_NOISE_BG", default_value_t = Noise::default().sigma_bg)]
    noise_bg: f64,
    /// Attribute label flip probability.
    #[arg(long, global = true, env = "VQA3D_NOISE_ATTR", default_value_t = Noise::default().attribute_flip)]
    noise_attr: f64,
    /// Comma-separated question families.
    #[arg(long, global = true, env = "VQA3D_FAMILIES", value_delimiter = ',', default_value = "part,pose,occlusion,occlusion+part")]
    families: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "VQA3D_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long, global = true, env = "VQA3D_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenes and questions.
    Gen,
    /// Build scene representations from observations.
    Parse {
        #[arg(long, env = "VQA3D_VARIANT", default_value = "full")]
        variant: String,
    },
    /// Execute the questions on the representations.
    Answer,
    /// Score predictions against the answer keys.
    Eval,
    /// Compare parser variants end to end.
    Ablate {
        #[arg(
            long,
            env = "VQA3D_VARIANTS",
            value_delimiter = ',',
            default_value = "full,oracle-representation,no-greedy,no-3d-nms,no-post-filter"
        )]
        variants: Vec<String>,
    },
}

fn options(g: &Global) -> Result<RunOptions> {
    let families = g
        .families
        .iter()
        .map(|f| {
            Family::from_name(f.trim()).with_context(|| {
                let names: Vec<_> = Family::ALL.iter().map(|f| f.name()).collect();
                format!("unknown family `{f}`; valid families: {}", names.join(", "))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let noise = Noise {
        sigma_fg: g.noise_fg,
        sigma_bg: g.noise_bg,
        attribute_flip: g.noise_attr,
    };
    noise.validate()?;
    Ok(RunOptions {
        seed: g.seed,
        scenes: g.scenes,
        noise,
        families,
        out: g.out.clone(),
    })
}

fn run(cli: Cli) -> Result<()> {
    if cli.global.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.workers)
            .build_global()
            .context("configuring worker threads")?;
    }
    let opts = options(&cli.global)?;
    match cli.command {
        Command::Gen => {
            let q = cmd_gen(&opts)?;
            println!(
                "generated {} scenes and {} questions into {}",
                opts.scenes,
                q.questions.len(),
                opts.out.display()
            );
        }
        Command::Parse { variant } => {
            let variant: PipelineVariant = variant.parse()?;
            let reps = cmd_parse(&opts, variant)?;
            let objects: usize = reps.scenes.iter().map(|s| s.representation.n_objects()).sum();
            println!("parsed {} scenes ({objects} objects) with {variant}", reps.scenes.len());
        }
        Command::Answer => {
            let preds = cmd_answer(&opts)?;
            println!("answered {} questions", preds.predictions.len());
        }
        Command::Eval => {
            let r = cmd_eval(&opts)?;
            println!("{}: accuracy {:.4} on {} questions", r.label, r.accuracy.unwrap_or(0.0), r.total);
            for f in &r.families {
                println!("  {:<15} {:.4} ({} questions)", f.family.name(), f.accuracy.unwrap_or(0.0), f.total);
            }
        }
        Command::Ablate { variants } => {
            let variants = variants.iter().map(|v| v.trim().parse()).collect::<Result<Vec<PipelineVariant>>>()?;
            let a = cmd_ablate(&opts, &variants)?;
            for r in &a.rows {
                println!(
                    "{:<22} accuracy {:.4} delta {:+.4}",
                    r.variant,
                    r.accuracy.unwrap_or(0.0),
                    r.delta.unwrap_or(0.0)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
