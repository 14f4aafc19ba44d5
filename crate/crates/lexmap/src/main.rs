//! Command-line front end: synthesize families, train mapping sets,
//! evaluate them, and translate words.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 runtime
//! training/evaluation failure.

use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lexmap::error::Error;
use lexmap::pipeline::{
    cmd_evaluate, cmd_train, cmd_translate, parse_config_file, parse_lang_list, EvalRequest,
    RunConfig, TranslateRequest,
};
use lexmap::synth::{generate_family, ClusterSpec};

#[derive(Parser)]
#[command(name = "lexmap", version, about = "Multilingual word embedding alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a multilingual mapping set from monolingual embeddings.
    Train(TrainArgs),
    /// Evaluate a checkpoint on word translation and word similarity.
    Evaluate(EvalArgs),
    /// Translate words read from stdin.
    Translate(TranslateArgs),
    /// Generate a synthetic language family with gold dictionaries.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated code=path embedding list, e.g. en=en.vec,de=de.vec
    #[arg(long)]
    langs: Option<String>,
    /// Target language code (its space becomes the shared space).
    #[arg(long)]
    target: Option<String>,
    /// multilingual | pivot | direct | supervised-procrustes
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_vocab: Option<usize>,
    /// Stop after adversarial training (no refinement stage).
    #[arg(long)]
    skip_mpsr: bool,
    /// Write the induced pseudo-dictionaries as TSV.
    #[arg(long)]
    dump_lexica: bool,
    /// code=path training dictionaries for supervised-procrustes mode.
    #[arg(long)]
    train_dict: Option<String>,
    /// Extra key=value overrides (repeatable), e.g. --set mat.epochs=3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated code=path embedding list.
    #[arg(long)]
    langs: String,
    /// Word-translation dictionary, src-tgt=path (repeatable).
    #[arg(long = "dict", value_name = "SRC-TGT=PATH")]
    dicts: Vec<String>,
    /// Similarity dataset, l1-l2=path (repeatable).
    #[arg(long = "similarity", value_name = "L1-L2=PATH")]
    similarity: Vec<String>,
    /// Precision cutoffs, comma-separated.
    #[arg(long, default_value = "1,5")]
    k: String,
    #[arg(long, default_value_t = 10)]
    csls_n: usize,
    #[arg(long, default_value_t = 200_000)]
    max_vocab: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    src: String,
    #[arg(long)]
    tgt: String,
    #[arg(long)]
    src_embeddings: PathBuf,
    #[arg(long)]
    tgt_embeddings: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    csls_n: usize,
    #[arg(long, default_value_t = 200_000)]
    max_vocab: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    n_langs: usize,
    #[arg(long, default_value_t = 2000)]
    vocab: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Comma-separated indices of languages sharing a cluster rotation.
    #[arg(long)]
    cluster_members: Option<String>,
    #[arg(long, default_value_t = 0.85)]
    cluster_tightness: f64,
    /// Output directory for embeddings and gold dictionaries.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Bad configuration or malformed input files are usage errors (exit 2);
/// failures inside training or evaluation are runtime errors (exit 3).
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Argument(_) | Error::Parse { .. } => 2,
        _ => 3,
    }
}

fn run_train(args: &TrainArgs) -> Result<(), Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        parse_config_file(path, &mut cfg)?;
    }
    if let Some(langs) = &args.langs {
        cfg.apply("langs", langs)?;
    }
    if let Some(target) = &args.target {
        cfg.apply("target", target)?;
    }
    if let Some(mode) = &args.mode {
        cfg.apply("mode", mode)?;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.mat.seed = seed;
        cfg.mpsr.seed = seed;
    }
    if let Some(mv) = args.max_vocab {
        cfg.max_vocab = mv;
    }
    if args.skip_mpsr {
        cfg.skip_mpsr = true;
    }
    if args.dump_lexica {
        cfg.dump_lexica = true;
    }
    if let Some(dicts) = &args.train_dict {
        cfg.train_dicts = parse_lang_list(dicts)?;
    }
    for kv in &args.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("--set needs KEY=VALUE, got {kv:?}")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    cfg.validate()?;

    let summary = cmd_train(&cfg)?;
    if let Some(ckpt) = &summary.checkpoint {
        println!("checkpoint: {}", ckpt.display());
    }
    for p in &summary.pair_checkpoints {
        println!("pair checkpoint: {}", p.display());
    }
    if let Some(val) = summary.best_val {
        println!("best validation score: {val:.6}");
    }
    Ok(())
}

fn parse_pair_spec(spec: &str) -> Result<(String, String, PathBuf), Error> {
    let (pair, path) = spec
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("expected SRC-TGT=PATH, got {spec:?}")))?;
    let (src, tgt) = pair
        .split_once('-')
        .ok_or_else(|| Error::Argument(format!("expected SRC-TGT=PATH, got {spec:?}")))?;
    Ok((src.to_string(), tgt.to_string(), PathBuf::from(path)))
}

fn run_evaluate(args: &EvalArgs) -> Result<(), Error> {
    let langs = parse_lang_list(&args.langs)?;
    let mut dictionaries = Vec::new();
    for d in &args.dicts {
        dictionaries.push(parse_pair_spec(d)?);
    }
    let mut similarity = Vec::new();
    for s in &args.similarity {
        similarity.push(parse_pair_spec(s)?);
    }
    let k_list: Vec<usize> = args
        .k
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Argument(format!("bad k value {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    let req = EvalRequest {
        checkpoint: args.checkpoint.clone(),
        langs,
        max_vocab: args.max_vocab,
        dictionaries,
        similarity,
        k_list,
        csls_n: args.csls_n,
        out_dir: args.out_dir.clone(),
    };
    let outcome = cmd_evaluate(&req)?;
    if !outcome.word_translation_table.is_empty() {
        println!("Word translation (precision@{}):", args.k);
        println!("{}", outcome.word_translation_table);
    }
    if !outcome.clws_table.is_empty() {
        println!("Cross-lingual word similarity (Spearman rho):");
        println!("{}", outcome.clws_table);
    }
    Ok(())
}

fn run_translate(args: &TranslateArgs) -> Result<(), Error> {
    for path in [&args.checkpoint, &args.src_embeddings, &args.tgt_embeddings] {
        if !path.exists() {
            return Err(Error::Argument(format!("file not found: {}", path.display())));
        }
    }
    let req = TranslateRequest {
        checkpoint: args.checkpoint.clone(),
        src: args.src.clone(),
        tgt: args.tgt.clone(),
        src_embeddings: args.src_embeddings.clone(),
        tgt_embeddings: args.tgt_embeddings.clone(),
        max_vocab: args.max_vocab,
        k: args.k,
        csls_n: args.csls_n,
    };
    let stdin = std::io::stdin();
    let mut reader = BufReader::new(stdin.lock());
    let stdout = std::io::stdout();
    let mut writer = stdout.lock();
    cmd_translate(&req, &mut reader, &mut writer)?;
    writer.flush().ok();
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<(), Error> {
    let cluster = match &args.cluster_members {
        Some(members) => {
            let members: Result<Vec<usize>, _> = members
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.trim().parse::<usize>())
                .collect();
            let members = members.map_err(|_| Error::Argument("bad cluster member list".into()))?;
            Some(ClusterSpec {
                members,
                tightness: args.cluster_tightness,
            })
        }
        None => None,
    };
    let family = generate_family(
        args.n_langs,
        args.vocab,
        args.dim,
        args.sigma,
        args.seed,
        cluster.as_ref(),
    )?;
    let paths = family.export(&args.out_dir, true)?;
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Translate(args) => run_translate(args),
        Command::Synth(args) => run_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
