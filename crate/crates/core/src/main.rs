use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::builder::PossibleValuesParser;
use clap::{Parser, Subcommand};

use logogen::color::{self, ColorClass};
use logogen::dataset;
use logogen::evaluation::{evaluate_generation, EVAL_PER_CLASS};
use logogen::service::{self, AppState, GenerateRequest, CKPT_ENV, DEFAULT_PORT, MAX_COUNT};
use logogen::training::{self, resolve_checkpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "logogen", version, about = "Color-conditioned logo generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label every icon of a corpus with its dominant colors.
    Label {
        /// PNG directory or packed icons.bin/icons.json container.
        input: PathBuf,
        /// Label CSV to write.
        output: PathBuf,
    },
    /// Train from a key = value config file.
    Train { config: PathBuf },
    /// Sample logos of one class from a checkpoint.
    Generate {
        #[arg(long, value_parser = PossibleValuesParser::new(ColorClass::names()))]
        class: String,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=MAX_COUNT as i64))]
        count: u16,
        /// Latent seed; a fresh one is drawn and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Checkpoint file, or a run directory with a `latest` marker.
        #[arg(long, env = CKPT_ENV)]
        ckpt: PathBuf,
    },
    /// Score class conditioning of a checkpoint and write a JSON report.
    Evaluate {
        #[arg(long, env = CKPT_ENV)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = EVAL_PER_CLASS as u32, value_parser = clap::value_parser!(u32).range(1..))]
        n_per_class: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the generation API.
    Serve {
        #[arg(long, env = CKPT_ENV)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn label(input: &Path, output: &Path) -> anyhow::Result<()> {
    let icons = dataset::load_icons(input).with_context(|| format!("reading {}", input.display()))?;
    let corpus = dataset::build_corpus(icons, color::label_rgb)?;
    corpus.write_labels_csv(output)?;
    println!("labeled {} icons -> {}", corpus.len(), output.display());
    for (class, n) in corpus.histogram.iter() {
        println!("{class:>8} {n}");
    }
    Ok(())
}

fn train(config: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = TrainConfig::parse(&text)?;
    let corpus = training::load_corpus(&cfg.data)?;
    println!("corpus: {} icons", corpus.len());
    let out = training::train(&cfg, &corpus)?;
    let c = out.bundle.counters;
    println!("done: {} generator steps, {} critic steps, {} epochs", c.generator_steps, c.critic_steps, c.epoch);
    if let Some(last) = out.checkpoints.last() {
        println!("checkpoint: {}", last.display());
    }
    Ok(())
}

fn generate(class: &str, count: usize, seed: Option<u64>, out: &Path, ckpt: &Path) -> anyhow::Result<()> {
    let state = AppState::load(&resolve_checkpoint(ckpt)?)?;
    let req = GenerateRequest { class: class.parse()?, count, seed };
    let g = service::handle_generate(&req, &state.bundle.generator)?;
    std::fs::create_dir_all(out)?;
    for (i, png) in g.images.iter().enumerate() {
        std::fs::write(out.join(format!("{class}_{}_{i:03}.png", g.seed_used)), png)?;
    }
    if count > 1 {
        std::fs::write(out.join(format!("{class}_{}_grid.png", g.seed_used)), &g.grid)?;
    }
    println!("seed {}: wrote {count} image(s) to {}", g.seed_used, out.display());
    Ok(())
}

fn evaluate(ckpt: &Path, out: &Path, n_per_class: usize, seed: u64) -> anyhow::Result<()> {
    let state = AppState::load(&resolve_checkpoint(ckpt)?)?;
    let report = evaluate_generation(&state.bundle, n_per_class, seed, Some(state.checkpoint_id.clone()))?;
    std::fs::write(out, report.to_json())?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "precision {} recall {} f1 {} -> {}",
        fmt(report.average.precision),
        fmt(report.average.recall),
        fmt(report.average.f1),
        out.display()
    );
    Ok(())
}

fn serve(ckpt: &Path, host: IpAddr, port: u16) -> anyhow::Result<()> {
    let state = AppState::load(&resolve_checkpoint(ckpt)?)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(state, SocketAddr::new(host, port)))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Label { input, output } => label(input, output),
        Command::Train { config } => train(config),
        Command::Generate { class, count, seed, out, ckpt } => generate(class, *count as usize, *seed, out, ckpt),
        Command::Evaluate { ckpt, out, n_per_class, seed } => evaluate(ckpt, out, *n_per_class as usize, *seed),
        Command::Serve { ckpt, port, host } => serve(ckpt, *host, *port),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
