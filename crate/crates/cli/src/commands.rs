use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use qa_core::checkpoint::Checkpoint;
use qa_core::data::{load_corpus, load_embedding_file, QaInstance, SynonymDict};
use qa_core::decoder::oracle::oracle_suite;
use qa_core::decoder::NUM_LABELS;
use qa_core::eval::{evaluate, metrics_report, predict, write_predictions, EvalOptions, Evaluation, MatchMode, Setting};
use qa_core::model::toy_gradient_check;
use qa_core::numeric::GradCheckConfig;
use qa_core::train::{corpus_view, dict_view, train, TrainInputs, EPOCH_LOG_HEADER};
use qa_core::config::ARCHITECTURE_KEYS;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn load(path: &Path, require_answers: bool) -> CliResult<Vec<QaInstance>> {
    let report = load_corpus(path, false, require_answers)?;
    if report.instances.is_empty() {
        return Err(CliError::Data(format!("{}: no usable records", path.display())));
    }
    if !report.errors.is_empty() {
        log::warn!("{}: skipped {} malformed lines", path.display(), report.errors.len());
    }
    Ok(report.instances)
}

fn load_dict(path: Option<&Path>) -> CliResult<SynonymDict> {
    Ok(match path {
        Some(p) => SynonymDict::load(p)?,
        None => SynonymDict::new(),
    })
}

pub fn run_train(s: &Settings, threads: usize) -> CliResult<()> {
    let train_path = s.existing("train_corpus", "--train-corpus")?;
    let valid_path = s.optional_existing("valid_corpus")?;
    let emb_path = s.optional_existing("embeddings")?;
    let syn_path = s.optional_existing("synonyms")?;
    let out_dir = s.required("output_dir", "--output-dir")?;
    if out_dir.exists() && !out_dir.is_dir() {
        return Err(CliError::Config(format!("output_dir: {} is not a directory", out_dir.display())));
    }
    s.model.validate()?;

    let train_set = load(&train_path, true)?;
    let valid_set = match &valid_path {
        Some(p) => load(p, true)?,
        None => Vec::new(),
    };
    let dict = load_dict(syn_path.as_deref())?;
    let table = emb_path.as_deref().map(load_embedding_file).transpose()?;
    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    let cfg_path = out_dir.join("run.cfg");
    fs::write(&cfg_path, s.echo()).map_err(|e| io_err(&cfg_path, e))?;

    let log_path = out_dir.join("epochs.tsv");
    let mut log_file = BufWriter::new(File::create(&log_path).map_err(|e| io_err(&log_path, e))?);
    writeln!(log_file, "{EPOCH_LOG_HEADER}").map_err(|e| io_err(&log_path, e))?;
    println!("{EPOCH_LOG_HEADER}");
    let mut write_err = None;
    let outcome = train(
        TrainInputs {
            train: &train_set,
            valid: &valid_set,
            dict: &dict,
            embeddings: table.as_ref(),
        },
        &s.model,
        threads,
        &mut |rec| {
            println!("{rec}");
            if let Err(e) = writeln!(log_file, "{rec}").and_then(|_| log_file.flush()) {
                write_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(io_err(&log_path, e));
    }
    outcome.best.save(&out_dir.join("best.ckpt"))?;
    outcome.last.save(&out_dir.join("last.ckpt"))?;
    println!(
        "best epoch {} (validation strict F1 {:.4}); checkpoints in {}",
        outcome.best.epoch,
        outcome.best.validation_f1,
        out_dir.display()
    );
    Ok(())
}

/// Loads the checkpoint, rejects explicit architecture settings that
/// disagree with it, and overlays the remaining explicit settings.
fn load_model(s: &Settings) -> CliResult<(Checkpoint, qa_core::TrainConfig)> {
    let path = s.existing("checkpoint", "--checkpoint")?;
    let ck = Checkpoint::load(&path)?;
    let mut cfg = ck.config.clone();
    for key in &s.explicit {
        if let Some(v) = s.model.get(key) {
            cfg.set(key, &v)?;
        }
    }
    ck.check_config(&cfg)?;
    for key in ARCHITECTURE_KEYS {
        if let Some(v) = ck.config.get(key) {
            cfg.set(key, &v)?;
        }
    }
    Ok((ck, cfg))
}

pub fn parse_settings(value: &str) -> CliResult<Vec<Setting>> {
    if value == "all" {
        Ok(Setting::ALL.to_vec())
    } else {
        Ok(vec![value.parse()?])
    }
}

pub fn parse_modes(value: &str) -> CliResult<Vec<MatchMode>> {
    if value == "all" {
        Ok(MatchMode::ALL.to_vec())
    } else {
        Ok(vec![value.parse()?])
    }
}

pub fn run_evaluate(s: &Settings, threads: usize, settings: &[Setting], modes: &[MatchMode]) -> CliResult<()> {
    let test_path = s.existing("test_corpus", "--test-corpus")?;
    let syn_path = s.optional_existing("synonyms")?;
    let pred_path = match s.paths.get("predictions") {
        Some(_) if settings.len() > 1 => {
            return Err(CliError::Config("predictions needs a single --setting".into()));
        }
        Some(_) => Some(s.writable("predictions", "--predictions")?),
        None => None,
    };
    let (ck, cfg) = load_model(s)?;
    let model = ck.to_model()?;
    let corpus = load(&test_path, true)?;
    let dict = load_dict(syn_path.as_deref())?;
    let corpus = corpus_view(&corpus, cfg.char_mode);
    let dict = dict_view(&dict, cfg.char_mode);
    let mut evals: Vec<Evaluation> = Vec::new();
    for &setting in settings {
        let opts = EvalOptions {
            setting,
            max_retrieved: cfg.max_retrieved,
            seed: cfg.seed,
            threads,
        };
        evals.push(evaluate(&corpus, &model, &ck.vocab, &dict, &opts)?);
    }
    print!("{}", metrics_report(&evals.iter().collect::<Vec<_>>(), modes));
    if let Some(p) = pred_path {
        let f = File::create(&p).map_err(|e| io_err(&p, e))?;
        write_predictions(BufWriter::new(f), &evals[0].records).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

pub fn run_predict(s: &Settings, threads: usize, setting: Setting) -> CliResult<()> {
    let test_path = s.existing("test_corpus", "--input")?;
    let syn_path = s.optional_existing("synonyms")?;
    let out = s.writable("predictions", "--output")?;
    let (ck, cfg) = load_model(s)?;
    let model = ck.to_model()?;
    let corpus = load(&test_path, false)?;
    let dict = load_dict(syn_path.as_deref())?;
    let corpus = corpus_view(&corpus, cfg.char_mode);
    let dict = dict_view(&dict, cfg.char_mode);
    let opts = EvalOptions {
        setting,
        max_retrieved: cfg.max_retrieved,
        seed: cfg.seed,
        threads,
    };
    let records = predict(&corpus, &model, &ck.vocab, &dict, &opts)?;
    let f = File::create(&out).map_err(|e| io_err(&out, e))?;
    write_predictions(BufWriter::new(f), &records).map_err(|e| io_err(&out, e))?;
    let answered = records.iter().filter(|r| r.answer.is_some()).count();
    println!("{answered} of {} questions answered; predictions in {}", records.len(), out.display());
    Ok(())
}

pub fn run_gradcheck(s: &Settings, max_per_tensor: Option<usize>) -> CliResult<()> {
    s.model.validate()?;
    let check = GradCheckConfig {
        max_per_tensor,
        seed: s.model.seed,
        ..GradCheckConfig::default()
    };
    let report = toy_gradient_check(&s.model, &check)?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|t| t.name.as_str()).collect();
        Err(CliError::CheckFailed(format!("gradient mismatch in {}", names.join(", "))))
    }
}

pub fn run_oracle_check(cases: usize, max_len: usize, seed: u64) -> CliResult<()> {
    if max_len == 0 || max_len > 8 {
        return Err(CliError::Config("--max-len must be between 1 and 8".into()));
    }
    let report = oracle_suite(cases, NUM_LABELS, max_len, seed, 1e-9);
    for f in &report.failures {
        println!("FAIL {f}");
    }
    println!(
        "{} lattices (M <= {max_len}, L = {NUM_LABELS}); max relative error {:.3e}",
        report.cases, report.max_rel_error
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("{} discrepancies", report.failures.len())))
    }
}
