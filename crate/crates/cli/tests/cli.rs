use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phonostream::eval::BenchmarkScores;
use phonostream::TransformFlags;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_phonostream"));
    c.env_remove("PHONOSTREAM_JOBS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn phonostream")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Assets {
    dir: tempfile::TempDir,
}

impl Assets {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok(&["assets", "--out", p(dir.path())]);
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn phonemize(&self, input: &Path, out: &Path, jobs: &str) -> String {
        ok(&[
            "phonemize",
            "--in",
            p(input),
            "--out",
            p(out),
            "--lexicon",
            p(&self.path("lexicon.tsv")),
            "--rules",
            p(&self.path("rules.txt")),
            "--inventory",
            p(&self.path("inventory.txt")),
            "--jobs",
            jobs,
        ])
    }
}

#[test]
fn phonemize_reports_stats_and_is_parallel_invariant() {
    let a = Assets::new();
    let input = a.path("in.txt");
    std::fs::write(&input, "What a conundrum!\nThe dog runs.\nI have 3 cats.\n").unwrap();
    let out1 = a.path("out1.txt");
    let stdout = a.phonemize(&input, &out1, "1");
    assert!(stdout.contains("lines=3"), "{stdout}");
    let first = std::fs::read_to_string(&out1).unwrap();
    assert_eq!(first.lines().next().unwrap(), "w ʌ t WORD_BOUNDARY ʌ WORD_BOUNDARY k ə n ʌ n d ɹ ə m");
    assert!(a.path("out1.txt.run.json").exists());

    let big = a.path("big.txt");
    let line = "The quick brown fox jumps over 12 lazy dogs.\n";
    std::fs::write(&big, line.repeat(5000)).unwrap();
    let (o1, o8) = (a.path("b1.txt"), a.path("b8.txt"));
    a.phonemize(&big, &o1, "1");
    a.phonemize(&big, &o8, "8");
    assert_eq!(std::fs::read(&o1).unwrap(), std::fs::read(&o8).unwrap());
}

#[test]
fn usage_errors_exit_1_and_io_errors_exit_2() {
    let a = Assets::new();
    let out = run(&["phonemize", "--in", "x", "--out", "y", "--rules", "r", "--inventory", "i"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--lexicon") && err.contains("Usage"), "{err}");

    assert_eq!(run(&["phonemize", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));

    let missing = a.path("missing.txt");
    let out = run(&[
        "phonemize",
        "--in",
        p(&missing),
        "--out",
        p(&a.path("o.txt")),
        "--lexicon",
        p(&a.path("lexicon.tsv")),
        "--rules",
        p(&a.path("rules.txt")),
        "--inventory",
        p(&a.path("inventory.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let bad_lexicon = a.path("bad.tsv");
    std::fs::write(&bad_lexicon, "cat\tk æ Q\n").unwrap();
    let input = a.path("in.txt");
    std::fs::write(&input, "cat\n").unwrap();
    let out = run(&[
        "phonemize",
        "--in",
        p(&input),
        "--out",
        p(&a.path("o.txt")),
        "--lexicon",
        p(&bad_lexicon),
        "--rules",
        p(&a.path("rules.txt")),
        "--inventory",
        p(&a.path("inventory.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn train_tokenizer_modes() {
    let a = Assets::new();
    let ortho = a.path("ortho.txt");
    std::fs::write(&ortho, "the dog runs\nthe cats sleep\nwhat a conundrum\n").unwrap();
    let phon = a.path("phon.txt");
    a.phonemize(&ortho, &phon, "1");
    let symbols: BTreeSet<String> = std::fs::read_to_string(&phon)
        .unwrap()
        .split_whitespace()
        .filter(|s| *s != "WORD_BOUNDARY")
        .map(str::to_string)
        .collect();

    let tok = a.path("tok.json");
    let stdout = ok(&["train-tokenizer", "--corpus", p(&phon), "--out", p(&tok), "--char", "--phonemic"]);
    assert!(stdout.contains(&format!("vocab_size={}", symbols.len() + 3 + 1)), "{stdout}");
    let stdout = ok(&[
        "train-tokenizer",
        "--corpus",
        p(&phon),
        "--out",
        p(&tok),
        "--char",
        "--phonemic",
        "--strip-boundaries",
    ]);
    assert!(stdout.contains(&format!("vocab_size={}", symbols.len() + 3)), "{stdout}");

    let stdout = ok(&["train-tokenizer", "--corpus", p(&ortho), "--out", p(&tok), "--bpe", "--vocab-size", "64"]);
    let size: usize = stdout
        .split_whitespace()
        .find_map(|f| f.strip_prefix("vocab_size="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(size <= 64);

    for bad in [
        vec!["--char", "--bpe", "--vocab-size", "64"],
        vec!["--char", "--vocab-size", "64"],
        vec!["--bpe"],
        vec![],
    ] {
        let mut args = vec!["train-tokenizer", "--corpus", p(&ortho), "--out", p(&tok)];
        args.extend(bad.iter().copied());
        assert_eq!(run(&args).status.code(), Some(1), "{bad:?}");
    }
}

#[test]
fn outputs_are_reproducible_and_rerunnable() {
    let a = Assets::new();
    let corpus = a.path("c.txt");
    let pairs = a.path("p.tsv");
    ok(&[
        "toy-grammar",
        "--sentences",
        "300",
        "--pairs-per-subtask",
        "5",
        "--seed",
        "4",
        "--out-corpus",
        p(&corpus),
        "--out-pairs",
        p(&pairs),
    ]);
    let (t1, t2) = (a.path("t1.json"), a.path("t2.json"));
    for t in [&t1, &t2] {
        ok(&["train-tokenizer", "--corpus", p(&corpus), "--out", p(t), "--bpe", "--vocab-size", "80"]);
    }
    assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());

    let first = std::fs::read(&t1).unwrap();
    std::fs::remove_file(&t1).unwrap();
    ok(&["rerun", p(&a.path("t1.json.run.json"))]);
    assert_eq!(std::fs::read(&t1).unwrap(), first);

    let record: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path("t1.json.run.json")).unwrap()).unwrap();
    assert_eq!(record["command"], "train-tokenizer");
    assert_eq!(record["resolved"]["args"]["vocab_size"], 80);
}

fn write_results(dir: &Path, skip: Option<TransformFlags>) -> Vec<String> {
    let mut paths = Vec::new();
    for (i, f) in TransformFlags::all().into_iter().enumerate() {
        if Some(f) == skip {
            continue;
        }
        let correct = if f.phonemic { 40 } else { 50 } + i;
        let s = BenchmarkScores::from_counts(f, [("a", correct, 64), ("b", 30, 64)]);
        let path = dir.join(format!("r{i}.csv"));
        s.save(&path).unwrap();
        paths.push(path.to_str().unwrap().to_string());
    }
    paths
}

#[test]
fn ablate_reports_and_names_missing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablation.csv");
    let runs = write_results(dir.path(), None);
    let mut args = vec!["ablate", "--transformation", "phonemic", "--out", p(&out), "--runs"];
    args.extend(runs.iter().map(String::as_str));
    let stdout = ok(&args);
    assert!(stdout.contains("transformation=phonemic"), "{stdout}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 10);
    for key in ["mean", "min", "max", "t", "p"] {
        assert!(csv.contains(&format!("phonemic,{key},")), "{csv}");
    }

    args.extend(["--exclude", "b"]);
    ok(&args);
    assert!(dir.path().join("ablation.filter.csv").exists());

    let missing = TransformFlags::new(true, false, true);
    let dir7 = tempfile::tempdir().unwrap();
    let runs = write_results(dir7.path(), Some(missing));
    let mut args = vec!["ablate", "--transformation", "character", "--out", p(&out), "--runs"];
    args.extend(runs.iter().map(String::as_str));
    let res = run(&args);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(&missing.to_string()), "{err}");
}

fn accuracy(csv: &Path, subtask: &str) -> f64 {
    let text = std::fs::read_to_string(csv).unwrap();
    let row = text.lines().find(|l| l.split(',').nth(1) == Some(subtask)).unwrap();
    row.split(',').nth(4).unwrap().parse().unwrap()
}

#[test]
fn desk_pipeline_end_to_end() {
    let a = Assets::new();
    let d = |n: &str| a.path(n);
    ok(&[
        "toy-grammar",
        "--sentences",
        "3000",
        "--pairs-per-subtask",
        "40",
        "--seed",
        "1",
        "--out-corpus",
        p(&d("toy.txt")),
        "--out-pairs",
        p(&d("pairs.tsv")),
    ]);
    a.phonemize(&d("toy.txt"), &d("toy.phon"), "2");
    ok(&[
        "train-tokenizer",
        "--corpus",
        p(&d("toy.phon")),
        "--out",
        p(&d("tok.json")),
        "--char",
        "--phonemic",
        "--strip-boundaries",
    ]);
    let stdout = ok(&["tokenize", "--tokenizer", p(&d("tok.json")), "--in", p(&d("toy.phon")), "--out", p(&d("blocks.bin"))]);
    assert!(stdout.starts_with("blocks="), "{stdout}");
    ok(&[
        "train-lm",
        "--blocks",
        p(&d("blocks.bin")),
        "--tokenizer",
        p(&d("tok.json")),
        "--preset",
        "desk",
        "--steps",
        "600",
        "--seed",
        "3",
        "--out",
        p(&d("run")),
    ]);
    for f in ["best.ckpt", "log.csv", "run.json", "step_0000600.ckpt"] {
        assert!(d("run").join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(d("run").join("log.csv")).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("step,")).count(), 600);

    let ckpt = d("run").join("best.ckpt");
    for flag in ["false", "true"] {
        ok(&[
            "eval",
            "--checkpoint",
            p(&ckpt),
            "--tokenizer",
            p(&d("tok.json")),
            "--pairs",
            p(&d("pairs.tsv")),
            &format!("--append-boundary={flag}"),
            "--out",
            p(&d(&format!("eval_{flag}.csv"))),
        ]);
    }
    let without = accuracy(&d("eval_false.csv"), "incomplete_sentence");
    let with = accuracy(&d("eval_true.csv"), "incomplete_sentence");
    assert!(with > without, "with {with} without {without}");
    assert!(accuracy(&d("eval_true.csv"), "MACRO") > accuracy(&d("eval_false.csv"), "MACRO"));

    ok(&[
        "train-tokenizer",
        "--corpus",
        p(&d("toy.phon")),
        "--out",
        p(&d("other.json")),
        "--char",
        "--phonemic",
    ]);
    let res = run(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--tokenizer",
        p(&d("other.json")),
        "--pairs",
        p(&d("pairs.tsv")),
        "--out",
        p(&d("x.csv")),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    let digest = |path: &Path| phonostream::Tokenizer::load(path).unwrap().digest();
    assert!(err.contains(&digest(&d("tok.json"))) && err.contains(&digest(&d("other.json"))), "{err}");
}
