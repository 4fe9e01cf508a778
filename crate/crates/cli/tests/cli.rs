use std::path::Path;
use std::process::{Command, Output};

fn nae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nae"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("one JSON object on stdout")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn corpus_train_separate_eval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let made = stdout_json(&nae(&[
        "make-corpus",
        "--out",
        p(&corpus),
        "--seed",
        "3",
        "--speakers",
        "2",
        "--clips",
        "3",
        "--seconds",
        "0.3",
    ]));
    assert_eq!(made["speakers"], 2);
    assert!(corpus.join("spk01/clip02.wav").exists());

    for spk in ["spk00", "spk01"] {
        let model = dir.path().join(format!("{spk}.naem"));
        let out = stdout_json(&nae(&[
            "train",
            p(&corpus.join(spk).join("clip00.wav")),
            p(&corpus.join(spk).join("clip01.wav")),
            "--method",
            "nmf",
            "--rank",
            "8",
            "--iterations",
            "100",
            "--out",
            p(&model),
        ]));
        assert_eq!(out["method"], "nmf");
        assert!(model.exists());
    }

    // The held-out clips summed at equal weight act as the mixture.
    let a = nae_core::dsp::read_wav(corpus.join("spk00/clip02.wav")).unwrap();
    let b = nae_core::dsp::read_wav(corpus.join("spk01/clip02.wav")).unwrap();
    let mix = nae_core::dsp::make_mixture(&a, &b, 0.0).unwrap();
    let mix_path = dir.path().join("mix.wav");
    let ref_b = dir.path().join("ref_b.wav");
    nae_core::dsp::write_wav(&mix_path, &mix.mixture, nae_core::dsp::WavFormat::Float32).unwrap();
    nae_core::dsp::write_wav(&ref_b, &mix.source2, nae_core::dsp::WavFormat::Float32).unwrap();

    let out_dir = dir.path().join("sep");
    let sep = stdout_json(&nae(&[
        "separate",
        p(&mix_path),
        "--model",
        p(&dir.path().join("spk00.naem")),
        "--model",
        p(&dir.path().join("spk01.naem")),
        "--out-dir",
        p(&out_dir),
        "--format",
        "float32",
        "--iterations",
        "100",
    ]));
    assert_eq!(sep["sources"].as_array().unwrap().len(), 2);

    let eval = stdout_json(&nae(&[
        "eval",
        "--estimate",
        p(&out_dir.join("source0.wav")),
        "--estimate",
        p(&out_dir.join("source1.wav")),
        "--reference",
        p(&corpus.join("spk00/clip02.wav")),
        "--reference",
        p(&ref_b),
        "--filter-len",
        "64",
    ]));
    let sdr = eval["sdr"].as_array().unwrap();
    assert_eq!(sdr.len(), 2);
    assert!(sdr.iter().all(|v| v.as_f64().unwrap() > 5.0), "{eval}");
}

#[test]
fn toy_writes_wave_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("toy.wav");
    let out = stdout_json(&nae(&["toy", "--out", p(&wav), "--seed", "1"]));
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out["truth"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!(truth["sequence"], serde_json::json!([0, 1, 3, 2, 3]));
    assert_eq!(truth["templates"].as_array().unwrap().len(), 257);
    assert_eq!(truth["gates"].as_array().unwrap().len(), 4);
    assert_eq!(nae_core::dsp::read_wav(&wav).unwrap().duration_secs(), 2.5);
}

#[test]
fn experiment_requires_seed() {
    let out = nae(&["experiment", "--corpus", "nowhere"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn experiment_runs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    stdout_json(&nae(&[
        "make-corpus",
        "--out",
        p(&corpus),
        "--seed",
        "1",
        "--speakers",
        "3",
        "--clips",
        "2",
        "--seconds",
        "0.25",
    ]));
    let results = dir.path().join("out");
    let args = [
        "experiment",
        "--seed",
        "4",
        "--corpus",
        p(&corpus),
        "--output-dir",
        p(&results),
        "--n-mixtures",
        "2",
        "--methods",
        "nmf,nae-shallow",
        "--ranks",
        "4",
        "--train-iterations",
        "30",
        "--fit-iterations",
        "30",
        "--filter-len",
        "32",
    ];
    let first = stdout_json(&nae(&args));
    assert_eq!(first["rows"], 8);
    assert_eq!(first["computed_cells"], 4);
    let csv = std::fs::read(results.join("results.csv")).unwrap();

    let again = stdout_json(&nae(&args));
    assert_eq!(again["computed_cells"], 0);
    assert_eq!(std::fs::read(results.join("results.csv")).unwrap(), csv);

    // Same output directory, different settings.
    let mut changed = args.to_vec();
    *changed.last_mut().unwrap() = "64";
    let clash = nae(&changed);
    assert!(!clash.status.success());
    let line: serde_json::Value = serde_json::from_slice(clash.stderr.trim_ascii()).unwrap();
    assert_eq!(line["error"], "invalid_argument");
}

#[test]
fn failures_emit_one_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = nae(&["experiment", "--seed", "1", "--corpus", p(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(line["error"], "corpus_layout");
    assert!(line["message"].as_str().unwrap().contains("missing"));
}
