//! Command-line front end: `gen`, `validate`, `retrieve`, `train`, `eval`.
//!
//! Exit codes: 0 success, 1 runtime or integrity error, 2 usage error.
//! Configuration precedence is flags, then `--config` file, then defaults,
//! and every run prints the effective configuration it resolved.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};

use hysum::config::{load_file_config, FileConfig};
use hysum::format::{
    load_corpus, load_heads, load_queries, save_corpus, save_heads, save_queries,
    validate_references, LoadedCorpus,
};
use hysum::report;
use hysum::synth::{generate_synthetic, ChannelSignal, SyntheticSpec};
use hysum_core::embed::EmbedderSpec;
use hysum_core::harness::{evaluate, run_ablation, GridAxes, Query};
use hysum_core::heads::ProjectionHeads;
use hysum_core::kernels::{FusionConfig, FusionMode};
use hysum_core::rank::{
    embed_query, retrieve_detailed, score_channel, ChannelKind, ChannelMask, CorpusItem,
};
use hysum_core::train::{
    train_heads, ContrastiveBatch, LossMode, OptimizerKind, TrainConfig, TrainPair,
};

#[derive(Parser)]
#[command(
    name = "hysum",
    version,
    about = "Hypothetical-summary retrieval: three summary channels per item, \
             coarse-to-fine scoring, per-channel top-K union"
)]
struct Cli {
    /// Key = value configuration file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for generation and head initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus and query set.
    Gen(GenArgs),
    /// Load corpus (and optionally query) files and check every invariant.
    Validate(ValidateArgs),
    /// Rank corpus items against one query.
    Retrieve(RetrieveArgs),
    /// Train the word-level projection heads and write them to disk.
    Train(TrainArgs),
    /// Evaluate retrieval metrics, optionally sweeping an ablation axis.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output corpus file.
    #[arg(long, value_name = "PATH", default_value = "corpus.hysum")]
    corpus: PathBuf,
    /// Output query file.
    #[arg(long, value_name = "PATH", default_value = "queries.hysum")]
    queries: PathBuf,
    /// Number of corpus items.
    #[arg(long, default_value_t = 200)]
    size: usize,
    /// Gold items per query.
    #[arg(long, default_value_t = 5)]
    relevant: usize,
    /// Synthetic vocabulary size, split across object/detail/filler pools.
    #[arg(long, default_value_t = 600)]
    vocab: usize,
    /// Probability that a gold item's image-question channel carries the
    /// query's object tokens.
    #[arg(long, default_value_t = 0.9)]
    signal_qm: f64,
    /// Same for the scene-question channel.
    #[arg(long, default_value_t = 0.9)]
    signal_qd: f64,
    /// Same for the description channel (detail tokens).
    #[arg(long, default_value_t = 0.6)]
    signal_d: f64,
    /// Embedder dimension.
    #[arg(long)]
    dimension: Option<usize>,
    /// Also write cached embeddings into the corpus file.
    #[arg(long)]
    with_embeddings: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    queries: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Query text.
    #[arg(long)]
    query: String,
    /// Trained heads file; identity heads when absent.
    #[arg(long, value_name = "PATH")]
    heads: Option<PathBuf>,
    /// Per-channel top-K.
    #[arg(long)]
    k: Option<usize>,
    /// Channels to use: "all", or kinds joined with + (image_question,
    /// scene_question, description; aliases qm, qd, d).
    #[arg(long)]
    mask: Option<String>,
    /// Fusion mode: log-on-sentence, log-on-word, plain-sum,
    /// sentence-only, word-only, log-both.
    #[arg(long)]
    fusion: Option<String>,
    /// Clamp floor for log arguments.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Print word/sentence/fused components per candidate and channel.
    #[arg(long)]
    explain: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    queries: Option<PathBuf>,
    /// Output path for the trained heads.
    #[arg(long, value_name = "PATH")]
    heads_out: Option<PathBuf>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// adamw | sgd
    #[arg(long)]
    optimizer: Option<String>,
    /// as-written | standard-infonce
    #[arg(long)]
    loss_mode: Option<String>,
    /// How each query's positive item is chosen: gold | top1.
    #[arg(long)]
    positive: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    queries: Option<PathBuf>,
    /// Trained heads file; identity heads when absent.
    #[arg(long, value_name = "PATH")]
    heads: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sweep one axis over the same corpus and heads: channel | fusion | k.
    #[arg(long)]
    grid: Option<String>,
    /// Inclusive K range for --grid k, e.g. 1..10.
    #[arg(long, value_name = "A..B")]
    k_range: Option<String>,
    /// Also print one record per query (single-cell eval only).
    #[arg(long)]
    per_query: bool,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_config = match &cli.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file_config.seed).unwrap_or(7);
    match cli.command {
        Command::Gen(args) => cmd_gen(args, &file_config, seed),
        Command::Validate(args) => cmd_validate(args, &file_config),
        Command::Retrieve(args) => cmd_retrieve(args, &file_config, seed),
        Command::Train(args) => cmd_train(args, &file_config, seed),
        Command::Eval(args) => cmd_eval(args, &file_config, seed),
    }
}

/// Missing required value after flag/config merge: a usage error, exit 2.
fn require<T>(value: Option<T>, flag: &str) -> T {
    match value {
        Some(v) => v,
        None => Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                format!("{flag} must be given on the command line or in the config file"),
            )
            .exit(),
    }
}

fn usage_error(message: String) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::InvalidValue, message)
        .exit()
}

fn parse_mask(s: &str) -> ChannelMask {
    ChannelMask::parse(s)
        .unwrap_or_else(|| usage_error(format!("invalid channel mask '{s}'")))
}

fn parse_fusion(s: &str) -> FusionMode {
    FusionMode::parse(s).unwrap_or_else(|| usage_error(format!("invalid fusion mode '{s}'")))
}

fn parse_optimizer(s: &str) -> OptimizerKind {
    OptimizerKind::parse(s).unwrap_or_else(|| usage_error(format!("invalid optimizer '{s}'")))
}

fn parse_loss_mode(s: &str) -> LossMode {
    LossMode::parse(s).unwrap_or_else(|| usage_error(format!("invalid loss mode '{s}'")))
}

fn parse_k(k: usize) -> usize {
    if k == 0 {
        usage_error("--k must be at least 1".to_string());
    }
    k
}

fn parse_epsilon(epsilon: f64) -> f64 {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        usage_error(format!("--epsilon must lie in (0, 1), got {epsilon}"));
    }
    epsilon
}

/// Inclusive "A..B" range.
fn parse_k_range(s: &str) -> Vec<usize> {
    fn bad(s: &str) -> ! {
        usage_error(format!("invalid K range '{s}' (expected A..B with 1 <= A <= B)"))
    }
    let Some((lo, hi)) = s.split_once("..") else {
        bad(s);
    };
    let (Ok(lo), Ok(hi)) = (lo.parse::<usize>(), hi.parse::<usize>()) else {
        bad(s);
    };
    if lo == 0 || hi < lo {
        bad(s);
    }
    (lo..=hi).collect()
}

fn load_corpus_checked(path: &Path) -> Result<LoadedCorpus> {
    let corpus = load_corpus(path)?;
    Ok(corpus)
}

fn resolve_heads(path: Option<&Path>, dimension: usize) -> Result<(ProjectionHeads, String)> {
    match path {
        Some(path) => {
            let heads = load_heads(path)?;
            if heads.dim != dimension {
                return Err(anyhow!(
                    "heads dimension {} does not match corpus embedder dimension {}",
                    heads.dim,
                    dimension
                ));
            }
            Ok((heads, path.display().to_string()))
        }
        None => Ok((ProjectionHeads::identity(dimension), "identity".to_string())),
    }
}

fn cmd_gen(args: GenArgs, file_config: &FileConfig, seed: u64) -> Result<()> {
    let dimension = args
        .dimension
        .or(file_config.dimension)
        .unwrap_or(EmbedderSpec::DEFAULT_DIMENSION);
    let spec = SyntheticSpec {
        seed,
        corpus_size: args.size,
        relevant_per_query: args.relevant,
        vocabulary_size: args.vocab,
        signal: ChannelSignal {
            image_question: args.signal_qm,
            scene_question: args.signal_qd,
            description: args.signal_d,
        },
        embedder: EmbedderSpec::toy(dimension),
    };
    println!(
        "# config: corpus={} queries={} seed={} size={} relevant={} vocab={} \
         signal-qm={} signal-qd={} signal-d={} dimension={} with-embeddings={}",
        args.corpus.display(),
        args.queries.display(),
        seed,
        spec.corpus_size,
        spec.relevant_per_query,
        spec.vocabulary_size,
        spec.signal.image_question,
        spec.signal.scene_question,
        spec.signal.description,
        dimension,
        args.with_embeddings,
    );
    let data = generate_synthetic(&spec)?;
    save_corpus(&args.corpus, &data.embedder, &data.items, args.with_embeddings)?;
    save_queries(&args.queries, &data.queries)?;
    println!(
        "wrote {} items to {} and {} queries to {}",
        data.items.len(),
        args.corpus.display(),
        data.queries.len(),
        args.queries.display()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs, file_config: &FileConfig) -> Result<()> {
    let corpus_path = require(
        args.corpus.or(file_config.corpus.as_ref().map(PathBuf::from)),
        "--corpus",
    );
    let queries_path = args
        .queries
        .or(file_config.queries.as_ref().map(PathBuf::from));
    println!(
        "# config: corpus={} queries={}",
        corpus_path.display(),
        queries_path
            .as_ref()
            .map_or("-".to_string(), |p| p.display().to_string())
    );
    let corpus = load_corpus_checked(&corpus_path)?;
    println!(
        "corpus OK: {} items, embedder {} d={} ({})",
        corpus.items.len(),
        corpus.embedder.name,
        corpus.embedder.dimension,
        corpus.embedder.tokenizer.label()
    );
    if let Some(path) = queries_path {
        let queries = load_queries(&path)?;
        validate_references(&corpus.items, &queries)?;
        println!("queries OK: {} queries, every gold id resolves", queries.len());
    }
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs, file_config: &FileConfig, seed: u64) -> Result<()> {
    let corpus_path = require(
        args.corpus.or(file_config.corpus.as_ref().map(PathBuf::from)),
        "--corpus",
    );
    let heads_path = args
        .heads
        .or(file_config.heads.as_ref().map(PathBuf::from));
    let k = parse_k(args.k.or(file_config.k).unwrap_or(5));
    let mask = parse_mask(
        &args
            .mask
            .or_else(|| file_config.mask.clone())
            .unwrap_or_else(|| "all".to_string()),
    );
    let mode = parse_fusion(
        &args
            .fusion
            .or_else(|| file_config.fusion.clone())
            .unwrap_or_else(|| FusionMode::LogOnSentence.label().to_string()),
    );
    let epsilon = parse_epsilon(
        args.epsilon
            .or(file_config.epsilon)
            .unwrap_or(FusionConfig::DEFAULT_EPSILON),
    );
    let cfg = FusionConfig { mode, epsilon };

    let corpus = load_corpus_checked(&corpus_path)?;
    let (heads, heads_label) = resolve_heads(heads_path.as_deref(), corpus.embedder.dimension)?;

    println!(
        "# config: corpus={} heads={} k={} mask={} fusion={} epsilon={} seed={}",
        corpus_path.display(),
        heads_label,
        k,
        mask,
        mode,
        epsilon,
        seed
    );
    println!("# query: {}", args.query);

    let query = embed_query(&args.query, &corpus.embedder);
    let outcome = retrieve_detailed(&query, &corpus.items, &heads, &cfg, k, mask)?;

    let explain: BTreeMap<ChannelKind, BTreeMap<String, (f64, f64, f64)>> = if args.explain {
        let mut per_channel = BTreeMap::new();
        for kind in mask.enabled() {
            let scores = score_channel(&query, &corpus.items, kind, &heads, &cfg)?;
            per_channel.insert(
                kind,
                scores
                    .into_iter()
                    .map(|s| (s.item_id, (s.word_score, s.sentence_score, s.fused_score)))
                    .collect(),
            );
        }
        per_channel
    } else {
        BTreeMap::new()
    };

    println!("# retrieved {} candidates", outcome.candidates.len());
    println!("{:<6}{:<12}{:<12}channels", "rank", "item_id", "score");
    for (rank, entry) in outcome.candidates.entries.iter().enumerate() {
        let channels: Vec<&str> = entry.channels.iter().map(|k| k.label()).collect();
        println!(
            "{:<6}{:<12}{:<12.6}{}",
            rank + 1,
            entry.item_id,
            entry.score,
            channels.join("+")
        );
        if args.explain {
            for (kind, scores) in &explain {
                if let Some((word, sentence, fused)) = scores.get(&entry.item_id) {
                    println!(
                        "      {:<16} word={word:.6} sentence={sentence:.6} fused={fused:.6}",
                        kind.label()
                    );
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PositiveRule {
    Gold,
    Top1,
}

impl PositiveRule {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "gold" => Some(PositiveRule::Gold),
            "top1" => Some(PositiveRule::Top1),
            _ => None,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            PositiveRule::Gold => "gold",
            PositiveRule::Top1 => "top1",
        }
    }
}

/// Builds the contrastive training set: one pair per (query, positive).
/// Features are mean-pooled raw token embeddings; the positive side uses
/// the item's image-question channel, the channel the loss aligns with.
fn build_training_pairs(
    corpus: &LoadedCorpus,
    queries: &[Query],
    rule: PositiveRule,
    init_heads: &ProjectionHeads,
) -> Result<Vec<TrainPair>> {
    let by_id: BTreeMap<&str, &CorpusItem> = corpus
        .items
        .iter()
        .map(|i| (i.item_id.as_str(), i))
        .collect();
    let mut pairs = Vec::new();
    for query in queries {
        let embedded = embed_query(&query.text, &corpus.embedder);
        let positives: Vec<&CorpusItem> = match rule {
            PositiveRule::Gold => query
                .relevant
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| anyhow!("query '{}' references unknown item '{id}'", query.query_id))
                })
                .collect::<Result<_>>()?,
            PositiveRule::Top1 => {
                let set = hysum_core::rank::retrieve(
                    &embedded,
                    &corpus.items,
                    init_heads,
                    &FusionConfig::default(),
                    1,
                    ChannelMask::all(),
                )?;
                let top = set
                    .entries
                    .first()
                    .ok_or_else(|| anyhow!("retrieval returned no candidates"))?;
                vec![by_id[top.item_id.as_str()]]
            }
        };
        for item in positives {
            let summary = item
                .channel(ChannelKind::ImageQuestion)
                .ok_or_else(|| anyhow!("item '{}' lacks an image-question channel", item.item_id))?;
            let (query_feature, summary_feature) =
                ContrastiveBatch::pair_from_tokens(&embedded.tokens, &summary.tokens);
            pairs.push(TrainPair {
                query_feature,
                summary_feature,
            });
        }
    }
    Ok(pairs)
}

fn cmd_train(args: TrainArgs, file_config: &FileConfig, seed: u64) -> Result<()> {
    let corpus_path = require(
        args.corpus.or(file_config.corpus.as_ref().map(PathBuf::from)),
        "--corpus",
    );
    let queries_path = require(
        args.queries
            .or(file_config.queries.as_ref().map(PathBuf::from)),
        "--queries",
    );
    let heads_out = require(
        args.heads_out
            .or(file_config.heads.as_ref().map(PathBuf::from)),
        "--heads-out",
    );
    let learning_rate = args.lr.or(file_config.learning_rate).unwrap_or(1e-4);
    let epochs = args.epochs.or(file_config.epochs).unwrap_or(20);
    let batch_size = args.batch_size.or(file_config.batch_size).unwrap_or(100);
    let optimizer = parse_optimizer(
        &args
            .optimizer
            .or_else(|| file_config.optimizer.clone())
            .unwrap_or_else(|| OptimizerKind::AdamW.label().to_string()),
    );
    let loss_mode = parse_loss_mode(
        &args
            .loss_mode
            .or_else(|| file_config.loss_mode.clone())
            .unwrap_or_else(|| LossMode::AsWritten.label().to_string()),
    );
    let positive = args
        .positive
        .or_else(|| file_config.positive.clone())
        .unwrap_or_else(|| "gold".to_string());
    let positive = PositiveRule::parse(&positive)
        .unwrap_or_else(|| usage_error(format!("invalid positive rule '{positive}'")));
    if learning_rate < 0.0 || !learning_rate.is_finite() {
        usage_error(format!("--lr must be a finite non-negative number, got {learning_rate}"));
    }
    if epochs == 0 {
        usage_error("--epochs must be at least 1".to_string());
    }
    if batch_size == 0 {
        usage_error("--batch-size must be at least 1".to_string());
    }

    println!(
        "# config: corpus={} queries={} heads-out={} lr={} epochs={} batch-size={} \
         optimizer={} loss-mode={} positive={} seed={}",
        corpus_path.display(),
        queries_path.display(),
        heads_out.display(),
        learning_rate,
        epochs,
        batch_size,
        optimizer,
        loss_mode,
        positive.label(),
        seed
    );

    let corpus = load_corpus_checked(&corpus_path)?;
    let queries = load_queries(&queries_path)?;
    validate_references(&corpus.items, &queries)?;

    let init_heads = ProjectionHeads::seeded(corpus.embedder.dimension, seed);
    let pairs = build_training_pairs(&corpus, &queries, positive, &init_heads)?;
    println!("# training pairs: {}", pairs.len());

    let cfg = TrainConfig {
        learning_rate,
        batch_size,
        epochs,
        optimizer,
        loss_mode,
        seed,
    };
    let outcome = train_heads(&pairs, &cfg).context("training failed")?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {}/{} mean-loss {:.6}", epoch + 1, epochs, loss);
    }
    save_heads(&heads_out, &outcome.heads)?;
    println!("wrote heads to {}", heads_out.display());
    Ok(())
}

fn channel_grid_masks() -> Vec<ChannelMask> {
    vec![
        ChannelMask::single(ChannelKind::ImageQuestion),
        ChannelMask::single(ChannelKind::SceneQuestion),
        ChannelMask::single(ChannelKind::Description),
        ChannelMask::of(&[ChannelKind::ImageQuestion, ChannelKind::SceneQuestion]),
        ChannelMask::all(),
    ]
}

fn cmd_eval(args: EvalArgs, file_config: &FileConfig, seed: u64) -> Result<()> {
    let corpus_path = require(
        args.corpus.or(file_config.corpus.as_ref().map(PathBuf::from)),
        "--corpus",
    );
    let queries_path = require(
        args.queries
            .or(file_config.queries.as_ref().map(PathBuf::from)),
        "--queries",
    );
    let heads_path = args
        .heads
        .or(file_config.heads.as_ref().map(PathBuf::from));
    let k = parse_k(args.k.or(file_config.k).unwrap_or(5));
    let mask = parse_mask(
        &args
            .mask
            .or_else(|| file_config.mask.clone())
            .unwrap_or_else(|| "all".to_string()),
    );
    let mode = parse_fusion(
        &args
            .fusion
            .or_else(|| file_config.fusion.clone())
            .unwrap_or_else(|| FusionMode::LogOnSentence.label().to_string()),
    );
    let epsilon = parse_epsilon(
        args.epsilon
            .or(file_config.epsilon)
            .unwrap_or(FusionConfig::DEFAULT_EPSILON),
    );

    let axes = match args.grid.as_deref() {
        None => GridAxes::single(mask, mode, k),
        Some("channel") => GridAxes {
            masks: channel_grid_masks(),
            modes: vec![mode],
            ks: vec![k],
        },
        Some("fusion") => GridAxes {
            masks: vec![mask],
            modes: FusionMode::ALL.to_vec(),
            ks: vec![k],
        },
        Some("k") => GridAxes {
            masks: vec![mask],
            modes: vec![mode],
            ks: parse_k_range(args.k_range.as_deref().unwrap_or("1..10")),
        },
        Some(other) => usage_error(format!(
            "invalid grid axis '{other}' (expected channel, fusion, or k)"
        )),
    };

    let corpus = load_corpus_checked(&corpus_path)?;
    let queries = load_queries(&queries_path)?;
    validate_references(&corpus.items, &queries)?;
    let (heads, heads_label) = resolve_heads(heads_path.as_deref(), corpus.embedder.dimension)?;

    println!(
        "# config: corpus={} queries={} heads={} k={} mask={} fusion={} epsilon={} grid={} seed={}",
        corpus_path.display(),
        queries_path.display(),
        heads_label,
        k,
        mask,
        mode,
        epsilon,
        args.grid.as_deref().unwrap_or("-"),
        seed
    );
    for line in report::header_lines() {
        println!("{line}");
    }

    if args.grid.is_none() {
        let cfg = FusionConfig { mode, epsilon };
        let result = evaluate(&corpus.items, &queries, &heads, &corpus.embedder, &cfg, mask, k)?;
        let records = report::report_records(&result);
        if args.per_query {
            for record in &records {
                println!("{record}");
            }
        } else {
            println!("{}", records[0]);
        }
        let grid = hysum_core::harness::AblationGrid {
            cells: vec![hysum_core::harness::GridCell {
                mask,
                mode,
                k,
                report: result,
            }],
        };
        print!("{}", report::grid_table(&grid));
    } else {
        let grid = run_ablation(&corpus.items, &queries, &heads, &corpus.embedder, &axes, epsilon)?;
        for record in report::grid_records(&grid) {
            println!("{record}");
        }
        print!("{}", report::grid_table(&grid));
    }
    Ok(())
}
