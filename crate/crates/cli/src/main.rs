mod commands;
mod failure;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use failure::{Failure, EXIT_INVALID};
use phonostream::eval::ScoreNorm;
use phonostream::lm::Preset;
use phonostream::Transformation;

#[derive(Debug, Parser)]
#[command(name = "phonostream", version, about = "Phoneme-stream corpora, tokenizers, language models and minimal-pair evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert orthographic lines to phoneme strings.
    Phonemize(PhonemizeArgs),
    /// Clean and split raw text into train.txt and valid.txt.
    PrepareCorpus(PrepareArgs),
    /// Train a character or BPE tokenizer.
    TrainTokenizer(TrainTokenizerArgs),
    /// Encode a corpus into fixed-length training blocks.
    Tokenize(TokenizeArgs),
    /// Train a language model on tokenized blocks.
    TrainLm(TrainLmArgs),
    /// Score a minimal-pair file with a checkpoint.
    Eval(EvalArgs),
    /// Compute the effect of one transformation over eight result files.
    Ablate(AblateArgs),
    /// Sample sentences and minimal pairs from a probabilistic grammar.
    ToyGrammar(ToyGrammarArgs),
    /// Write the bundled inventory, lexicon, rules, cleaning patterns and grammar.
    Assets(AssetsArgs),
    /// Repeat a run from its .run.json record.
    Rerun(RerunArgs),
}

#[derive(Debug, Args, Serialize)]
struct PhonemizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    inventory: PathBuf,
    #[arg(long, default_value = "en-US")]
    accent: String,
    /// Worker threads [default: all cores]
    #[arg(long, env = "PHONOSTREAM_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct PrepareArgs {
    /// Raw text files, one utterance per line.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    validation_fraction: f64,
    /// Cleaning pattern file [default: bundled]
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long, env = "PHONOSTREAM_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("kind").required(true).args(["char", "bpe"])))]
struct TrainTokenizerArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// One token per phoneme or character.
    #[arg(long)]
    char: bool,
    /// Byte-pair merges up to --vocab-size.
    #[arg(long, requires = "vocab_size")]
    bpe: bool,
    #[arg(long, conflicts_with = "char")]
    vocab_size: Option<usize>,
    /// Drop word boundaries before tokenizing.
    #[arg(long)]
    strip_boundaries: bool,
    /// The corpus holds phoneme strings.
    #[arg(long)]
    phonemic: bool,
}

#[derive(Debug, Args, Serialize)]
struct TokenizeArgs {
    #[arg(long)]
    tokenizer: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Block store output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    context: usize,
}

#[derive(Debug, Args, Serialize)]
struct TrainLmArgs {
    #[arg(long)]
    blocks: PathBuf,
    /// Validation blocks [default: the training blocks]
    #[arg(long)]
    valid_blocks: Option<PathBuf>,
    #[arg(long)]
    tokenizer: PathBuf,
    #[arg(long, default_value_t = Preset::Desk)]
    #[serde(serialize_with = "as_display")]
    preset: Preset,
    /// Override the preset's step count; warmup and checkpoint interval scale with it.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for checkpoints, log.csv and run.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    tokenizer: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    append_boundary: bool,
    #[arg(long, default_value_t = ScoreNorm::None)]
    #[serde(serialize_with = "as_display")]
    normalize: ScoreNorm,
    /// Also write per-pair scores to this CSV.
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long, env = "PHONOSTREAM_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct AblateArgs {
    /// The eight results CSVs written by `eval`.
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    #[serde(serialize_with = "as_display")]
    transformation: Transformation,
    /// Subtasks to leave out, comma-separated.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ToyGrammarArgs {
    /// Grammar file [default: bundled]
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    sentences: usize,
    #[arg(long, default_value_t = 200)]
    pairs_per_subtask: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_corpus: PathBuf,
    #[arg(long)]
    out_pairs: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AssetsArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct RerunArgs {
    record: PathBuf,
}

fn as_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn run(args: Vec<String>) -> failure::Result<()> {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            return Err(Failure::invalid(e.render().to_string().trim_end()));
        }
    };
    let rest = &args[1..];
    match cli.command {
        Command::Phonemize(a) => commands::phonemize(a, rest),
        Command::PrepareCorpus(a) => commands::prepare_corpus(a, rest),
        Command::TrainTokenizer(a) => commands::train_tokenizer(a, rest),
        Command::Tokenize(a) => commands::tokenize(a, rest),
        Command::TrainLm(a) => commands::train_lm(a, rest),
        Command::Eval(a) => commands::eval(a, rest),
        Command::Ablate(a) => commands::ablate(a, rest),
        Command::ToyGrammar(a) => commands::toy_grammar(a, rest),
        Command::Assets(a) => commands::assets(a),
        Command::Rerun(a) => {
            let rec = record::RunRecord::load(&a.record)?;
            if rec.args.first().map(String::as_str) == Some("rerun") {
                return Err(Failure::invalid("a rerun record cannot point at another rerun"));
            }
            std::env::set_current_dir(&rec.cwd).map_err(|e| Failure::from(e).context(rec.cwd.display()))?;
            let mut argv = vec![args[0].clone()];
            argv.extend(rec.args);
            run(argv)
        }
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(if f.code == 0 { EXIT_INVALID } else { f.code })
        }
    }
}
