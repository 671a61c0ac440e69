//! End-to-end runs of the `figrec` binary over temp directories.

use std::path::Path;
use std::process::{Command, Output};

use figrec_core::data::Dataset;
use figrec_core::eval::EvalReport;

fn figrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_figrec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// A small corpus used by several tests.
fn simulate(dir: &Path, dances: usize, seed: u64) {
    let out = figrec(&[
        "simulate",
        "--dances",
        &dances.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
}

#[test]
fn simulate_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    simulate(&a, 2, 7);
    simulate(&b, 2, 7);
    for name in [
        "samples.json",
        "labels.csv",
        "index.csv",
        "logs/dance-000.csv",
    ] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    // manifest exists and names the outputs
    let manifest = read(&a.join("manifest.json"));
    assert!(manifest.contains("\"subcommand\": \"simulate\""));
    assert!(manifest.contains("samples.json"));
}

#[test]
fn ingest_matches_ready_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    simulate(&corpus, 2, 11);
    let out_json = tmp.path().join("ingested.json");
    let out = figrec(&[
        "ingest",
        "--index",
        corpus.join("index.csv").to_str().unwrap(),
        "--labels",
        corpus.join("labels.csv").to_str().unwrap(),
        "--extension",
        "0",
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let ingested = Dataset::from_json(&read(&out_json)).unwrap();
    let ready = Dataset::from_json(&read(&corpus.join("samples.json"))).unwrap();
    assert_eq!(ingested.dances().len(), ready.dances().len());
    for (a, b) in ingested.dances().iter().zip(ready.dances()) {
        assert_eq!(a.id, b.id);
        for (fa, fb) in a.figures.iter().zip(&b.figures) {
            assert_eq!(fa.label(), fb.label());
            for (x, y) in fa.flat().iter().zip(fb.flat()) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn single_log_ingest_counts_figures() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    simulate(&corpus, 1, 3);
    // figure count from the index
    let index = read(&corpus.join("index.csv"));
    let n_figures: usize = index
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();
    let out_json = tmp.path().join("one.json");
    let out = figrec(&[
        "ingest",
        "--log",
        corpus.join("logs/dance-000.csv").to_str().unwrap(),
        "--tempo",
        "28.5",
        "--intro",
        "10",
        "--figures",
        &n_figures.to_string(),
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let ds = Dataset::from_json(&read(&out_json)).unwrap();
    assert_eq!(ds.dances()[0].figures.len(), n_figures);
    assert_eq!(ds.dances()[0].id, "dance-000");
}

#[test]
fn ingest_missing_file_exits_3() {
    let out = figrec(&[
        "ingest",
        "--log",
        "/nonexistent/log.csv",
        "--tempo",
        "28.5",
        "--intro",
        "10",
        "--figures",
        "2",
        "--out",
        "/tmp/unused.json",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_flag_exits_2() {
    let out = figrec(&["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_oracle_reports_perfect_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    simulate(&corpus, 14, 21);
    let report_dir = tmp.path().join("report");
    let out = figrec(&[
        "eval",
        "--samples",
        corpus.join("samples.json").to_str().unwrap(),
        "--classifier",
        "oracle",
        "--folds",
        "7",
        "--seed",
        "21",
        "--emit-posteriors",
        "--emit-corrections",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let report = EvalReport::from_json(&read(&report_dir.join("report.json"))).unwrap();
    assert_eq!(report.mean_raw_accuracy, 1.0);
    assert_eq!(report.mean_corrected_accuracy, 1.0);
    assert!(report_dir.join("confusion_raw.csv").exists());
    assert!(report_dir.join("posteriors.csv").exists());
    assert!(report_dir.join("corrections.csv").exists());

    // report re-renders from the saved JSON
    let rerender = tmp.path().join("rerender");
    let out = figrec(&[
        "report",
        "--report",
        report_dir.join("report.json").to_str().unwrap(),
        "--out",
        rerender.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert_eq!(
        read(&report_dir.join("report.txt")),
        read(&rerender.join("report.txt"))
    );
}

#[test]
fn train_nn_predict_correct_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    simulate(&corpus, 2, 5);
    let model = tmp.path().join("model.json");
    let posteriors = tmp.path().join("posteriors.csv");
    let out = figrec(&[
        "train-nn",
        "--samples",
        corpus.join("samples.json").to_str().unwrap(),
        "--depth",
        "1",
        "--width",
        "8",
        "--epochs",
        "2",
        "--seed",
        "1",
        "--out",
        model.to_str().unwrap(),
        "--predict",
        corpus.join("samples.json").to_str().unwrap(),
        "--posteriors-out",
        posteriors.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(model.exists());
    let corrections = tmp.path().join("corrections.csv");
    let out = figrec(&[
        "correct",
        "--posteriors",
        posteriors.to_str().unwrap(),
        "--unbiased",
        "--out",
        corrections.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let body = read(&corrections);
    assert!(body.starts_with("dance_id,position,raw,corrected,changed\n"));
    // one row per figure plus header
    let ready = Dataset::from_json(&read(&corpus.join("samples.json"))).unwrap();
    assert_eq!(body.lines().count(), 1 + ready.n_figures());
}

#[test]
fn train_hmm_writes_model_and_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    simulate(&corpus, 3, 9);
    let model = tmp.path().join("ghmm.json");
    let matrix = tmp.path().join("trained.json");
    let out = figrec(&[
        "train-hmm",
        "--samples",
        corpus.join("samples.json").to_str().unwrap(),
        "--max-iters",
        "5",
        "--out",
        model.to_str().unwrap(),
        "--transitions-out",
        matrix.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(figrec_core::ghmm::FigureHmm::from_json(&read(&model)).is_ok());
    assert!(figrec_core::transitions::TransitionMatrix::from_json(&read(&matrix)).is_ok());
}

#[test]
fn correct_applies_whisk_example() {
    // Position 0 splits 0.6/0.4 between W and LCC; position 1 is RCC.
    // Row W only allows PC, so the correction re-reads position 0 as LCC.
    let tmp = tempfile::tempdir().unwrap();
    let posteriors = tmp.path().join("posteriors.csv");
    let mut csv =
        String::from("dance_id,position,BL,BW,CTR,DR,LCC,N1,N2,NST,OC,PC,R1,R2,RC,RCC,W,Weave\n");
    csv.push_str("d,0,0,0,0,0,0.4,0,0,0,0,0,0,0,0,0,0.6,0\n");
    csv.push_str("d,1,0,0,0,0,0,0,0,0,0,0,0,0,0,1,0,0\n");
    std::fs::write(&posteriors, csv).unwrap();
    let corrections = tmp.path().join("corrections.csv");
    let out = figrec(&[
        "correct",
        "--posteriors",
        posteriors.to_str().unwrap(),
        "--unbiased",
        "--out",
        corrections.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let body = read(&corrections);
    let mut lines = body.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "d,0,W,LCC,true");
    assert_eq!(lines.next().unwrap(), "d,1,RCC,RCC,false");
}

#[test]
fn correct_rejects_bad_posterior_sum_with_row() {
    let tmp = tempfile::tempdir().unwrap();
    let posteriors = tmp.path().join("posteriors.csv");
    let mut csv =
        String::from("dance_id,position,BL,BW,CTR,DR,LCC,N1,N2,NST,OC,PC,R1,R2,RC,RCC,W,Weave\n");
    csv.push_str(
        "d,0,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05,0.05\n",
    );
    std::fs::write(&posteriors, csv).unwrap();
    let out = figrec(&[
        "correct",
        "--posteriors",
        posteriors.to_str().unwrap(),
        "--unbiased",
        "--out",
        tmp.path().join("c.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn config_missing_template_names_the_label() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("broken.toml");
    // Drop the DR template section from the default config.
    let full = figrec_core::synth::DEFAULT_CONFIG_TOML;
    let start = full.find("[templates.DR]").unwrap();
    let end = full[start..].find("\n\n").unwrap() + start;
    let broken = format!("{}{}", &full[..start], &full[end + 2..]);
    std::fs::write(&cfg, broken).unwrap();
    let out = figrec(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("DR"), "stderr: {stderr}");
}

#[test]
fn fixed_length_config_yields_fixed_label_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("short.toml");
    let patched = figrec_core::synth::DEFAULT_CONFIG_TOML
        .replace("length_min = 40", "length_min = 5")
        .replace("length_max = 60", "length_max = 5");
    std::fs::write(&cfg, patched).unwrap();
    let dir = tmp.path().join("out");
    let out = figrec(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--dances",
        "3",
        "--seed",
        "4",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let labels = read(&dir.join("labels.csv"));
    let mut counts = std::collections::HashMap::new();
    for line in labels.lines().skip(1) {
        let id = line.split(',').next().unwrap().to_string();
        *counts.entry(id).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 3);
    assert!(counts.values().all(|&c| c == 5));
}

#[test]
fn env_config_dir_supplies_the_default() {
    let tmp = tempfile::tempdir().unwrap();
    let cfgdir = tmp.path().join("cfg");
    std::fs::create_dir_all(&cfgdir).unwrap();
    let patched = figrec_core::synth::DEFAULT_CONFIG_TOML
        .replace("length_min = 40", "length_min = 3")
        .replace("length_max = 60", "length_max = 3");
    std::fs::write(cfgdir.join("default_synth.toml"), patched).unwrap();
    let dir = tmp.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_figrec"))
        .env("FIGREC_CONFIG_DIR", &cfgdir)
        .args([
            "simulate",
            "--dances",
            "1",
            "--seed",
            "6",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert_ok(&out);
    let labels = read(&dir.join("labels.csv"));
    assert_eq!(labels.lines().count(), 1 + 3, "3 figures per dance");
}

#[test]
fn write_default_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("synth.toml");
    let out = figrec(&["simulate", "--write-default-config", cfg.to_str().unwrap()]);
    assert_ok(&out);
    let dir = tmp.path().join("out");
    let out = figrec(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--dances",
        "1",
        "--seed",
        "2",
        "--identical",
        "LCC=W",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(dir.join("samples.json").exists());
}
