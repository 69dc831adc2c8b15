use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(
    name = "triplere",
    version,
    about = "Knowledge graph embeddings: TransE, PairRE, TripleRE and NodePiece"
)]
pub struct Cli {
    /// Worker threads for evaluation; 1 gives bitwise-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Select anchors and write the entity tokenization as JSON.
    Tokenize(TokenizeArgs),
    /// Train a model and write checkpoints, a metrics log and a run manifest.
    Train(TrainArgs),
    /// Rank a split with a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Score one triple given by names.
    Score(ScoreArgs),
    /// Count trainable parameters without allocating them.
    Params(ParamsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PatternArg {
    Random,
    InversePairs,
    Symmetric,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TripleFormatArg {
    TsvNames,
    TsvIds,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProtocolArg {
    FilteredFull,
    RawFull,
    Sampled,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SidesArg {
    Head,
    Tail,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OutputFormat {
    Json,
    Table,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset directory (train.tsv, valid.tsv, test.tsv and optional vocabularies).
    #[arg(long, env = "TRIPLERE_DATA")]
    pub data: PathBuf,

    #[arg(long, value_enum, default_value = "tsv-names")]
    pub triple_format: TripleFormatArg,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub entities: usize,
    #[arg(long)]
    pub relations: usize,
    #[arg(long)]
    pub triples: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub pattern: PatternArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Held-out fraction, split evenly between valid and test.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Run configuration keys. Each flag overrides the same key of `--config`.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, value_parser = ["transe", "pairre", "triplere", "triplere_v1", "triplere_v2"])]
    pub model: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub norm: Option<u8>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["table", "nodepiece"])]
    pub entity_mode: Option<String>,
    #[arg(long)]
    pub regularization: Option<f64>,
    #[arg(long, value_parser = ["raw", "filtered"])]
    pub negative_mode: Option<String>,
    #[arg(long)]
    pub eval_interval: Option<u64>,
    #[arg(long)]
    pub eval_candidates: Option<usize>,
    #[arg(long)]
    pub renormalize: Option<bool>,
    #[arg(long)]
    pub anchors: Option<usize>,
    #[arg(long, value_parser = ["degree", "random", "mixed"])]
    pub strategy: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d_atom: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = ["relu", "gelu"])]
    pub activation: Option<String>,
    #[arg(long, value_parser = ["anchor", "anchor_rm", "anchor_r"])]
    pub encoding: Option<String>,
    #[arg(long)]
    pub max_distance: Option<u32>,
}

impl ConfigArgs {
    /// The flags that were given, keyed like the config file.
    pub fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(key.to_owned(), v);
            }
        };
        put("model", self.model.as_ref().map(|v| json!(v)));
        put("dim", self.dim.map(|v| json!(v)));
        put("norm", self.norm.map(|v| json!(v)));
        put("u", self.u.map(|v| json!(v)));
        put("gamma", self.gamma.map(|v| json!(v)));
        put("batch-size", self.batch_size.map(|v| json!(v)));
        put("negatives", self.negatives.map(|v| json!(v)));
        put("temperature", self.temperature.map(|v| json!(v)));
        put("lr", self.lr.map(|v| json!(v)));
        put("steps", self.steps.map(|v| json!(v)));
        put("seed", self.seed.map(|v| json!(v)));
        put("entity-mode", self.entity_mode.as_ref().map(|v| json!(v)));
        put("regularization", self.regularization.map(|v| json!(v)));
        put("negative-mode", self.negative_mode.as_ref().map(|v| json!(v)));
        put("eval-interval", self.eval_interval.map(|v| json!(v)));
        put("eval-candidates", self.eval_candidates.map(|v| json!(v)));
        put("renormalize", self.renormalize.map(|v| json!(v)));
        put("anchors", self.anchors.map(|v| json!(v)));
        put("strategy", self.strategy.as_ref().map(|v| json!(v)));
        put("k", self.k.map(|v| json!(v)));
        put("m", self.m.map(|v| json!(v)));
        put("d-atom", self.d_atom.map(|v| json!(v)));
        put("hidden", self.hidden.map(|v| json!(v)));
        put("activation", self.activation.as_ref().map(|v| json!(v)));
        put("encoding", self.encoding.as_ref().map(|v| json!(v)));
        put("max-distance", self.max_distance.map(|v| json!(v)));
        m
    }
}

#[derive(Args, Debug)]
pub struct TokenizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory for checkpoints, metrics and the manifest.
    #[arg(long, default_value = "runs/latest")]
    pub out: PathBuf,
    /// Continue from a checkpoint; only `--steps` may change the run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "filtered-full")]
    pub protocol: ProtocolArg,
    /// Negatives per query for the sampled protocol.
    #[arg(long, default_value_t = 500)]
    pub candidates: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub sides: SidesArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub head: String,
    #[arg(long)]
    pub relation: String,
    #[arg(long)]
    pub tail: String,
    /// Also score this many random head or tail corruptions that do not
    /// form a known triple.
    #[arg(long)]
    pub corruptions: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    #[arg(long)]
    pub entities: u64,
    #[arg(long)]
    pub relations: u64,
    #[command(flatten)]
    pub config: ConfigArgs,
}
