// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end for the depthlens toolkit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use depthlens::harness::{
    crosscheck, emit_report, load_assets, primary_outputs, run_experiment_with, ExperimentConfig, ModelSource, Modes,
    PatchConfig, ReferenceBundle, RunManifest, ASSETS_ENV, LOGIT_TOLERANCE,
};
use depthlens::kinship::{generate_dataset, write_jsonl, GenConfig, RelationFilter};
use depthlens::model::ToyConfig;
use depthlens::patching::{Cells, Direction, MutationMode};
use depthlens::Exec;

#[derive(Parser)]
#[command(name = "depthlens", version, about = "Depth-use analysis on k-hop kinship prompts")]
struct Cli {
    /// Asset root; relative model and tokenizer paths are looked up here.
    #[arg(long, global = true, env = ASSETS_ENV)]
    assets: Option<PathBuf>,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a story dataset.
    Gen(GenArgs),
    /// Logit-lens profiles (and optional metrics) for a story file.
    Lens(LensArgs),
    /// Counterfactual patching for a story file.
    Patch(PatchArgs),
    /// Plot data and summary for a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Full experiment from a JSON config, followed by the report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a small random model directory.
    Toy(ToyArgs),
    /// Compare token ids and final logits against a reference bundle.
    Crosscheck(CrosscheckArgs),
}

#[derive(Args)]
struct CrosscheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    #[arg(long)]
    bundle: PathBuf,
    /// Per-prompt diffs as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Hop counts: `2..10` (inclusive) or a list such as `3,5,7`.
    #[arg(long, default_value = "2..10", value_parser = parse_hops)]
    hops: HopList,
    #[arg(long, default_value_t = 100)]
    per_hop: usize,
    #[arg(long, default_value_t = 4)]
    max_siblings: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only brother/sister facts (base stories for siblings-only patching).
    #[arg(long)]
    siblings_only: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Tokenizer directory; defaults to the model directory, then `gpt2`
    /// under the asset root.
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LensArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Also record attention onto each relation token.
    #[arg(long)]
    attention: bool,
    /// Also record residual-update metrics.
    #[arg(long)]
    metrics: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Siblings,
    Allrels,
}

#[derive(Clone, Copy, ValueEnum)]
enum CellsArg {
    Full,
    Columns,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Forward,
    Reverse,
    Both,
}

#[derive(Args)]
struct PatchArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[arg(long, value_enum, default_value = "siblings")]
    mode: ModeArg,
    /// Target number of flipping pairs per hop count.
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, value_enum, default_value = "columns")]
    cells: CellsArg,
    #[arg(long, value_enum, default_value = "both")]
    direction: DirectionArg,
    /// Also record attention onto the replaced token.
    #[arg(long)]
    attention: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Gpt2,
    Neox,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, value_enum, default_value = "gpt2")]
    arch: ArchArg,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 50257)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight scale; larger values give sharper, more input-sensitive outputs.
    #[arg(long)]
    init_std: Option<f32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone)]
struct HopList(Vec<usize>);

fn parse_hops(s: &str) -> Result<HopList, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a.trim().parse().map_err(|_| format!("bad hop range `{s}`"))?;
        let hi: usize = b
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|_| format!("bad hop range `{s}`"))?;
        if lo > hi {
            return Err(format!("empty hop range `{s}`"));
        }
        return Ok(HopList((lo..=hi).collect()));
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad hop count `{x}`")))
        .collect::<Result<_, _>>()
        .map(HopList)
}

fn exec(cli: &Cli) -> Exec {
    if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn run_and_report(config: &ExperimentConfig, exec: Exec) -> Result<()> {
    let manifest = run_experiment_with(config, exec)?;
    report(&manifest)
}

fn report(manifest: &RunManifest) -> Result<()> {
    let bundle = emit_report(manifest)?;
    for s in &manifest.shortfall {
        println!("hops={}: only {}/{} flipping pairs", s.hops, s.found, s.target);
    }
    for c in &bundle.checks {
        println!("{}", c.line());
    }
    println!("report written to {}", bundle.dir.display());
    Ok(())
}

fn model_config(args: &ModelArgs, modes: Modes) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSource::Dir(args.model.clone()),
        tokenizer: args.tokenizer.clone(),
        data: Some(args.data.clone()),
        modes,
        out_dir: args.out.clone(),
        ..ExperimentConfig::default()
    }
}

fn write_toy(args: &ToyArgs) -> Result<()> {
    let mut cfg = match args.arch {
        ArchArg::Gpt2 => ToyConfig::gpt2(args.layers, args.d_model, args.vocab, args.seed),
        ArchArg::Neox => ToyConfig::gpt_neox(args.layers, args.d_model, args.vocab, args.seed),
    };
    if let Some(std) = args.init_std {
        cfg.init_std = std;
    }
    cfg.write(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn gen(args: &GenArgs, exec: Exec) -> Result<()> {
    let cfg = GenConfig {
        hops: args.hops.0.clone(),
        per_hop: args.per_hop,
        max_siblings: args.max_siblings,
        seed: args.seed,
        filter: if args.siblings_only {
            RelationFilter::SiblingsOnly
        } else {
            RelationFilter::All
        },
    };
    if args.hops.0.iter().any(|&h| h > 10) && args.max_siblings < 6 {
        bail!("stories longer than 10 hops need --max-siblings 6 or more");
    }
    let stories = generate_dataset(&cfg, exec)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("stories.jsonl");
    write_jsonl(&path, &stories)?;
    println!("wrote {} stories to {}", stories.len(), path.display());
    Ok(())
}

fn check_bundle(args: &CrosscheckArgs, exec: Exec) -> Result<()> {
    let bundle = ReferenceBundle::read(&args.bundle)?;
    let config = ExperimentConfig {
        model: ModelSource::Dir(args.model.clone()),
        tokenizer: args.tokenizer.clone(),
        ..ExperimentConfig::default()
    };
    let assets = load_assets(&config, exec)?;
    let outputs = primary_outputs(&assets.model, &assets.tokenizer, &bundle.prompts, exec)?;
    let report = crosscheck(&bundle, &outputs)?;
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    for d in report.failures() {
        println!(
            "prompt {}: ids {}, max-abs {:.3e}, top-1 {} vs {}",
            d.index,
            if d.ids_equal { "equal" } else { "differ" },
            d.max_abs,
            d.top1_reference,
            d.top1_primary
        );
    }
    let worst = report.diffs.iter().map(|d| d.max_abs).fold(0f32, f32::max);
    let failed = report.failures().count();
    println!(
        "{} {}/{} prompts agree (worst max-abs {worst:.3e}, tolerance {LOGIT_TOLERANCE:e})",
        if report.pass { "PASS" } else { "FAIL" },
        report.diffs.len() - failed,
        report.diffs.len()
    );
    if !report.pass {
        bail!("{failed} prompts disagree with the reference");
    }
    Ok(())
}

fn load_config(path: &Path, out: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg =
        ExperimentConfig::from_json_file(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(out) = out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their causes in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(root) = &cli.assets {
        std::env::set_var(ASSETS_ENV, root);
    }
    let exec = exec(&cli);
    match &cli.command {
        Command::Gen(args) => gen(args, exec),
        Command::Lens(args) => {
            let modes = Modes {
                lens: true,
                patch: false,
                metrics: args.metrics,
                attention: args.attention,
            };
            run_and_report(&model_config(&args.common, modes), exec)
        }
        Command::Patch(args) => {
            let modes = Modes {
                lens: false,
                patch: true,
                metrics: false,
                attention: args.attention,
            };
            let mut cfg = model_config(&args.common, modes);
            cfg.patch = PatchConfig {
                mode: match args.mode {
                    ModeArg::Siblings => MutationMode::SiblingsOnly,
                    ModeArg::Allrels => MutationMode::AllRelations,
                },
                n_target: args.n,
                cells: match args.cells {
                    CellsArg::Full => Cells::Full,
                    CellsArg::Columns => Cells::Columns,
                },
                hops: None,
                directions: match args.direction {
                    DirectionArg::Forward => vec![Direction::Forward],
                    DirectionArg::Reverse => vec![Direction::Reverse],
                    DirectionArg::Both => Direction::BOTH.to_vec(),
                },
            };
            run_and_report(&cfg, exec)
        }
        Command::Report { run } => report(&RunManifest::read(run)?),
        Command::Run { config, out } => run_and_report(&load_config(config, out.as_ref())?, exec),
        Command::Toy(args) => write_toy(args),
        Command::Crosscheck(args) => check_bundle(args, exec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hop_syntax() {
        assert_eq!(parse_hops("2..10").unwrap().0, (2..=10).collect::<Vec<_>>());
        assert_eq!(parse_hops("2..=4").unwrap().0, vec![2, 3, 4]);
        assert_eq!(parse_hops("3,5,7").unwrap().0, vec![3, 5, 7]);
        assert!(parse_hops("5..2").is_err());
        assert!(parse_hops("x").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
