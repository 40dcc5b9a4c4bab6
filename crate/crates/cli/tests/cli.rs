use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qa_core::data::write_corpus;
use qa_core::synthetic::{generate_synthetic, SyntheticConfig};
use tempfile::TempDir;

fn qa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qa"))
        .args(args)
        .env_remove("QA_SEED")
        .output()
        .expect("run qa")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let task = generate_synthetic(
            &SyntheticConfig {
                train_questions: 40,
                valid_questions: 10,
                test_questions: 10,
                ..SyntheticConfig::default()
            },
            4,
        );
        write_corpus(&dir.path().join("train.jsonl"), &task.train).unwrap();
        write_corpus(&dir.path().join("valid.jsonl"), &task.valid).unwrap();
        write_corpus(&dir.path().join("test.jsonl"), &task.test).unwrap();
        fs::write(dir.path().join("synonyms.txt"), task.dict.to_text()).unwrap();
        fs::write(
            dir.path().join("small.cfg"),
            "# tiny model\nH=8\nD=8\nbatch_size=10\nepochs=2\nmax_retrieved=5\n",
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (cfg, train, valid, syn, out) = (
            self.arg("small.cfg"),
            self.arg("train.jsonl"),
            self.arg("valid.jsonl"),
            self.arg("synonyms.txt"),
            self.arg(out),
        );
        let mut args = vec![
            "--config", &cfg, "-q", "train", "--train-corpus", &train, "--valid-corpus", &valid,
            "--synonyms", &syn, "--output-dir", &out,
        ];
        args.extend_from_slice(extra);
        qa(&args)
    }
}

fn checkpoint(dir: &Path) -> String {
    dir.join("best.ckpt").to_string_lossy().into_owned()
}

#[test]
fn missing_corpus_names_the_key() {
    let f = Fixture::new();
    let missing = f.arg("nope.jsonl");
    let out = qa(&["train", "--train-corpus", &missing, "--output-dir", &f.arg("out")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("train_corpus"), "{}", stderr(&out));
    assert!(!f.path("out").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let out = qa(&["--set", "hiden=3", "oracle-check", "--cases", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("hiden"));
}

#[test]
fn oracle_check_passes() {
    let out = qa(&["oracle-check", "--cases", "50", "--max-len", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn gradcheck_on_a_small_model_passes() {
    let out = qa(&["--set", "H=4", "--set", "D=3", "--set", "decoder=softmax_prev", "gradcheck", "--max-per-tensor", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}{}", stdout(&out), stderr(&out));
}

#[test]
fn train_evaluate_predict_round_trip() {
    let f = Fixture::new();
    let out = f.train("run", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let run = f.path("run");
    for name in ["run.cfg", "epochs.tsv", "best.ckpt", "best.ckpt.meta", "best.ckpt.vocab", "last.ckpt"] {
        assert!(run.join(name).exists(), "{name}");
    }
    let log = fs::read_to_string(run.join("epochs.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch\tloss"));
    assert!(fs::read_to_string(run.join("run.cfg")).unwrap().contains("H=8"));

    let ckpt = checkpoint(&run);
    let test = f.arg("test.jsonl");
    let syn = f.arg("synonyms.txt");
    let out = qa(&[
        "evaluate", "--checkpoint", &ckpt, "--test-corpus", &test, "--synonyms", &syn, "--setting", "retrieved",
        "--match", "fuzzy",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout(&out);
    let header = report.lines().next().unwrap();
    for col in ["|C|", "|A|", "|Q|", "P", "R", "F1"] {
        assert!(header.split_whitespace().any(|c| c == col), "{header}");
    }
    let row = report.lines().nth(1).unwrap();
    assert!(row.starts_with("retrieved") && row.contains("fuzzy"), "{row}");
    assert_eq!(report.lines().count(), 2);

    let preds = f.arg("preds.tsv");
    let out = qa(&["predict", "--checkpoint", &ckpt, "--input", &test, "--output", &preds]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let lines = fs::read_to_string(&preds).unwrap();
    assert_eq!(lines.lines().count(), 10);
    assert!(lines.lines().all(|l| l.starts_with("test")));
}

#[test]
fn architecture_override_against_checkpoint_is_rejected() {
    let f = Fixture::new();
    assert_eq!(f.train("run", &[]).status.code(), Some(0));
    let ckpt = checkpoint(&f.path("run"));
    let test = f.arg("test.jsonl");
    let out = qa(&["--set", "H=16", "evaluate", "--checkpoint", &ckpt, "--test-corpus", &test]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("H: 16 vs 8"), "{}", stderr(&out));
}

#[test]
fn seed_precedence_env_then_set() {
    let f = Fixture::new();
    let cfg = f.arg("small.cfg");
    let echo = |env: Option<&str>, set: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_qa"));
        cmd.env_remove("QA_SEED");
        if let Some(v) = env {
            cmd.env("QA_SEED", v);
        }
        cmd.args(["--config", &cfg]).args(set).args(["oracle-check", "--cases", "1"]);
        let out = cmd.output().unwrap();
        stderr(&out)
            .lines()
            .find_map(|l| l.strip_prefix("# seed=").map(String::from))
            .unwrap()
    };
    assert_eq!(echo(None, &[]), "1");
    assert_eq!(echo(Some("9"), &[]), "9");
    assert_eq!(echo(Some("9"), &["--set", "seed=3"]), "3");
}

#[test]
fn identical_runs_write_identical_logs() {
    let f = Fixture::new();
    assert_eq!(f.train("a", &[]).status.code(), Some(0));
    assert_eq!(f.train("b", &[]).status.code(), Some(0));
    let timeless = |d: &str| -> Vec<String> {
        fs::read_to_string(f.path(d).join("epochs.tsv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once('\t').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(timeless("a"), timeless("b"));
    let bytes = |d: &str| fs::read(f.path(d).join("last.ckpt")).unwrap();
    assert_eq!(bytes("a"), bytes("b"));
}
