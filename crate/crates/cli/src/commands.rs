use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use phonostream::corpus::{prepare_corpus as prepare, read_lines, token_stream, BlockStore, Cleaner, PrepareOptions, DEFAULT_PATTERNS};
use phonostream::eval::{ablation_effect, filter_subtasks, load_pairs, write_pairs, BenchmarkScores, EvalConfig, Evaluator};
use phonostream::grammar::{Grammar, TOY_GRAMMAR};
use phonostream::lm::{train_with_checkpoints, Checkpoint, Gpt, LmError, LogRow, TrainConfig};
use phonostream::phonemizer::{CorpusOptions, EN_US_INVENTORY, EN_US_LEXICON, EN_US_RULES};
use phonostream::tokenizer::PAD_ID;
use phonostream::{Phonemizer, Tokenizer, TransformFlags};

use crate::failure::{Failure, Result};
use crate::record::{beside, RunRecord};
use crate::{AblateArgs, AssetsArgs, EvalArgs, PhonemizeArgs, PrepareArgs, ToyGrammarArgs, TrainLmArgs, TrainTokenizerArgs, TokenizeArgs};

fn resolve_jobs(jobs: Option<usize>) -> Result<usize> {
    match jobs {
        Some(0) => Err(Failure::invalid("--jobs must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::from(e).context(path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::from(e).context(path.display()))
}

fn at<T, E: Into<Failure>>(path: &Path, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| e.into().context(path.display()))
}

fn load_tokenizer(path: &Path) -> Result<Tokenizer> {
    at(path, Tokenizer::load(path))
}

pub fn phonemize(a: PhonemizeArgs, argv: &[String]) -> Result<()> {
    let jobs = resolve_jobs(a.jobs)?;
    let phonemizer = Phonemizer::load(&a.inventory, &a.lexicon, &a.rules, &a.accent)?;
    let options = CorpusOptions {
        jobs,
        ..CorpusOptions::default()
    };
    let mut out = create(&a.out)?;
    let stats = phonemizer.phonemize_corpus(open(&a.input)?, &mut out, &options)?;
    out.flush()?;
    RunRecord::new("phonemize", argv, json!({ "args": a, "jobs": jobs, "stats": stats })).save(&beside(&a.out))?;
    println!("{stats}");
    Ok(())
}

pub fn prepare_corpus(a: PrepareArgs, argv: &[String]) -> Result<()> {
    let jobs = resolve_jobs(a.jobs)?;
    let cleaner = match &a.patterns {
        Some(p) => at(p, Cleaner::load(p))?,
        None => Cleaner::parse(DEFAULT_PATTERNS)?,
    };
    let opts = PrepareOptions {
        validation_fraction: a.validation_fraction,
        jobs,
        ..PrepareOptions::default()
    };
    let manifest = prepare(&a.inputs, &a.out_dir, &cleaner, &opts)?;
    RunRecord::new("prepare-corpus", argv, json!({ "args": a, "jobs": jobs })).save(&a.out_dir.join("run.json"))?;
    let dropped: u64 = manifest.sources.iter().map(|s| s.dropped as u64).sum();
    println!(
        "train={} valid={} dropped={dropped}",
        manifest.split.train_lines, manifest.split.validation_lines
    );
    Ok(())
}

pub fn train_tokenizer(a: TrainTokenizerArgs, argv: &[String]) -> Result<()> {
    let flags = TransformFlags::new(a.char, a.strip_boundaries, a.phonemic);
    let lines = at(&a.corpus, read_lines(&a.corpus))?;
    let tok = Tokenizer::train(&lines, flags, a.vocab_size.unwrap_or(0))?;
    at(&a.out, tok.save(&a.out))?;
    RunRecord::new(
        "train-tokenizer",
        argv,
        json!({ "args": a, "flags": flags, "vocab_size": tok.vocab_size(), "digest": tok.digest() }),
    )
    .save(&beside(&a.out))?;
    println!("flags={flags} vocab_size={} digest={}", tok.vocab_size(), tok.digest());
    Ok(())
}

pub fn tokenize(a: TokenizeArgs, argv: &[String]) -> Result<()> {
    let tok = load_tokenizer(&a.tokenizer)?;
    let lines = at(&a.input, read_lines(&a.input))?;
    let store = BlockStore::from_stream(&token_stream(&tok, &lines), a.context, PAD_ID)?;
    at(&a.out, store.save(&a.out))?;
    RunRecord::new(
        "tokenize",
        argv,
        json!({ "args": a, "tokenizer_digest": tok.digest(), "blocks": store.len(), "tokens": store.token_count() }),
    )
    .save(&beside(&a.out))?;
    println!("blocks={} tokens={} last_pad={}", store.len(), store.token_count(), store.pad_count(store.len() - 1));
    Ok(())
}

fn scaled(value: usize, num: usize, den: usize) -> usize {
    ((value as u128 * num as u128) / den as u128) as usize
}

fn resolve_train_config(a: &TrainLmArgs) -> TrainConfig {
    let mut cfg = a.preset.train(a.seed);
    if let Some(steps) = a.steps {
        let preset_steps = cfg.max_steps;
        cfg.max_steps = steps;
        cfg.warmup_steps = scaled(cfg.warmup_steps, steps, preset_steps);
        cfg.checkpoint_interval = scaled(cfg.checkpoint_interval, steps, preset_steps).max(1);
    }
    if let Some(x) = a.lr {
        cfg.learning_rate = x;
    }
    if let Some(x) = a.batch_size {
        cfg.batch_size = x;
    }
    if let Some(x) = a.warmup {
        cfg.warmup_steps = x;
    }
    if let Some(x) = a.checkpoint_interval {
        cfg.checkpoint_interval = x;
    }
    if let Some(x) = a.weight_decay {
        cfg.weight_decay = x;
    }
    cfg
}

pub fn train_lm(a: TrainLmArgs, argv: &[String]) -> Result<()> {
    let tok = load_tokenizer(&a.tokenizer)?;
    let train_blocks = at(&a.blocks, BlockStore::load(&a.blocks))?;
    let valid_blocks = match &a.valid_blocks {
        Some(p) => at(p, BlockStore::load(p))?,
        None => train_blocks.clone(),
    };
    let mut model_cfg = a.preset.model(tok.vocab_size());
    if let Some(p) = a.dropout {
        model_cfg.dropout = p;
    }
    for (name, store) in [("training", &train_blocks), ("validation", &valid_blocks)] {
        if store.context() > model_cfg.context {
            return Err(Failure::invalid(format!(
                "{name} blocks have context {} but the {} preset allows {}",
                store.context(),
                a.preset,
                model_cfg.context
            )));
        }
        if store.max_id().is_some_and(|m| m as usize >= tok.vocab_size()) {
            return Err(Failure::invalid(format!(
                "{name} blocks use ids beyond the tokenizer vocabulary of {}",
                tok.vocab_size()
            )));
        }
    }
    let train_cfg = resolve_train_config(&a);
    train_cfg.validate()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::from(e).context(a.out.display()))?;

    let digest = tok.digest();
    let mut model = Gpt::<f32>::init(model_cfg.clone(), a.seed)?;
    let mut log = create(&a.out.join("log.csv"))?;
    writeln!(log, "{}", LogRow::CSV_HEADER)?;
    let mut log_err: Option<std::io::Error> = None;
    let mut on_row = |row: &LogRow| {
        if log_err.is_none() {
            if let Err(e) = writeln!(log, "{row}") {
                log_err = Some(e);
            }
        }
        if row.val_ppl.is_some() {
            eprintln!("step {} loss {:.4} val_ppl {:.4}", row.step, row.loss, row.val_ppl.unwrap_or(f64::NAN));
        }
    };
    let out_dir = a.out.clone();
    let mut on_checkpoint = |ck: &Checkpoint| -> std::result::Result<(), LmError> {
        let mut ck = ck.clone();
        ck.tokenizer_digest = digest.clone();
        ck.save(&out_dir.join(format!("step_{:07}.ckpt", ck.step)))
    };
    let outcome = train_with_checkpoints(&mut model, &train_blocks, &valid_blocks, &train_cfg, &mut on_row, &mut on_checkpoint)?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    log.flush()?;
    let mut best = outcome.best.clone();
    best.tokenizer_digest = digest.clone();
    let best_path = a.out.join("best.ckpt");
    at(&best_path, best.save(&best_path))?;
    RunRecord::new(
        "train-lm",
        argv,
        json!({
            "args": a,
            "model": model_cfg,
            "train": train_cfg,
            "tokenizer_digest": digest,
            "checkpoints": outcome.checkpoints,
            "best_step": best.step,
        }),
    )
    .save(&a.out.join("run.json"))?;
    println!(
        "best_step={} val_ppl={} final_loss={}",
        best.step,
        best.validation_perplexity,
        outcome.losses().last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn eval(a: EvalArgs, argv: &[String]) -> Result<()> {
    let jobs = resolve_jobs(a.jobs)?;
    let tok = load_tokenizer(&a.tokenizer)?;
    let ckpt = at(&a.checkpoint, Checkpoint::load(&a.checkpoint))?;
    if ckpt.tokenizer_digest != tok.digest() {
        return Err(Failure::invalid(format!(
            "tokenizer digest mismatch: checkpoint was trained with {:?}, --tokenizer is {}",
            ckpt.tokenizer_digest,
            tok.digest()
        )));
    }
    let model: Gpt<f32> = ckpt.model()?;
    let pairs = load_pairs(&a.pairs)?;
    let config = EvalConfig {
        append_terminal_boundary: a.append_boundary,
        normalize: a.normalize,
        ..EvalConfig::for_tokenizer(&tok)
    };
    let evaluator = Evaluator::new(&model, &tok, config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::io(e.to_string()))?;
    let run = pool.install(|| evaluator.run(&pairs))?;
    at(&a.out, run.scores.save(&a.out))?;
    if let Some(path) = &a.instances {
        let mut w = create(path)?;
        writeln!(w, "index,subtask,good_score,bad_score,correct,truncated")?;
        for (i, (p, s)) in pairs.iter().zip(&run.instances).enumerate() {
            writeln!(w, "{i},{},{},{},{},{}", p.subtask, s.good, s.bad, s.correct, s.truncated)?;
        }
        w.flush()?;
    }
    let truncated: usize = run.scores.subtasks.iter().map(|s| s.truncated).sum();
    RunRecord::new(
        "eval",
        argv,
        json!({
            "args": a,
            "jobs": jobs,
            "config": config,
            "flags": tok.flags(),
            "tokenizer_digest": tok.digest(),
            "checkpoint_step": ckpt.step,
            "truncated_pairs": truncated,
        }),
    )
    .save(&beside(&a.out))?;
    println!(
        "flags={} pairs={} subtasks={} macro={} truncated={truncated}",
        tok.flags(),
        pairs.len(),
        run.scores.subtasks.len(),
        run.scores.macro_score()
    );
    Ok(())
}

pub fn ablate(a: AblateArgs, argv: &[String]) -> Result<()> {
    let runs = a
        .runs
        .iter()
        .map(|p| at(p, BenchmarkScores::load(p)))
        .collect::<Result<Vec<_>>>()?;
    let exclude: BTreeSet<String> = a.exclude.iter().filter(|s| !s.is_empty()).cloned().collect();
    let report = if exclude.is_empty() {
        ablation_effect(&runs, a.transformation)?
    } else {
        let filtered = filter_subtasks(&runs, &exclude, a.transformation)?;
        let path = a.out.with_extension("filter.csv");
        let mut w = create(&path)?;
        filtered.write_csv(&mut w)?;
        w.flush()?;
        println!(
            "unfiltered mean={} filtered mean={} reduction={}",
            filtered.before.mean,
            filtered.after.mean,
            filtered.effect_reduction()
        );
        filtered.after
    };
    let mut w = create(&a.out)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    RunRecord::new("ablate", argv, json!({ "args": a, "runs": runs.iter().map(|r| r.flags).collect::<Vec<_>>() }))
        .save(&beside(&a.out))?;
    let p = report.t_test.p().map_or("degenerate".to_string(), |p| p.to_string());
    println!(
        "transformation={} mean={} min={} max={} p={p}",
        report.transformation, report.mean, report.min, report.max
    );
    Ok(())
}

pub fn toy_grammar(a: ToyGrammarArgs, argv: &[String]) -> Result<()> {
    let grammar = match &a.grammar {
        Some(p) => at(p, Grammar::load(p))?,
        None => Grammar::toy(),
    };
    let sentences = grammar.sentences(a.sentences, a.seed)?;
    let mut w = create(&a.out_corpus)?;
    for s in &sentences {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    let pairs = grammar.minimal_pairs(&[], a.pairs_per_subtask, a.seed.wrapping_add(1))?;
    let mut w = create(&a.out_pairs)?;
    write_pairs(&pairs, &mut w)?;
    w.flush()?;
    RunRecord::new("toy-grammar", argv, json!({ "args": a, "subtasks": grammar.subtasks() })).save(&beside(&a.out_corpus))?;
    println!("sentences={} pairs={}", sentences.len(), pairs.len());
    Ok(())
}

pub fn assets(a: AssetsArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::from(e).context(a.out.display()))?;
    let files: [(&str, &str); 5] = [
        ("inventory.txt", EN_US_INVENTORY),
        ("lexicon.tsv", EN_US_LEXICON),
        ("rules.txt", EN_US_RULES),
        ("cleaning_patterns.txt", DEFAULT_PATTERNS),
        ("toy_grammar.txt", TOY_GRAMMAR),
    ];
    for (name, text) in files {
        let path: PathBuf = a.out.join(name);
        std::fs::write(&path, text).map_err(|e| Failure::from(e).context(path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_override_scales_schedule() {
        assert_eq!(scaled(250, 600, 5000), 30);
        assert_eq!(scaled(1000, 600, 5000), 120);
        assert_eq!(scaled(1000, 5000, 5000), 1000);
    }

    #[test]
    fn zero_jobs_is_invalid() {
        assert_eq!(resolve_jobs(Some(0)).unwrap_err().code, crate::failure::EXIT_INVALID);
        assert_eq!(resolve_jobs(Some(3)).unwrap(), 3);
    }
}
