//! End-to-end contract tests for the command-line surface: exit codes,
//! file formats, determinism, and validation messages.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpmkl::io;
use lpmkl::kernel::{rbf_kernel, KernelMatrix};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpmkl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small separable instance written as kernel + label files.
fn write_instance(dir: &Path) -> (Vec<PathBuf>, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 16;
    let mut x = Array2::<f64>::zeros((n, 2));
    let mut y = Vec::new();
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        x[[i, 0]] = 1.5 * label + 0.3 * rng.gen_range(-1.0..1.0);
        x[[i, 1]] = rng.gen_range(-1.0..1.0);
        y.push(label);
    }
    let k1 = rbf_kernel(x.view(), 1.0, "narrow").unwrap();
    let k2 = rbf_kernel(x.view(), 8.0, "wide").unwrap();
    let k1_path = dir.join("k1.km");
    let k2_path = dir.join("k2.kmb");
    io::write_kernel_text(&k1_path, &k1).unwrap();
    io::write_kernel_binary(&k2_path, &k2).unwrap();
    let y_path = dir.join("y.txt");
    io::write_labels(&y_path, &y).unwrap();
    (vec![k1_path, k2_path], y_path)
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in [
        "train",
        "predict",
        "toygen",
        "sweep",
        "bounds",
        "align",
        "normalize",
    ] {
        let out = run(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub} --help failed: {}", stderr(&out));
    }
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn train_smoke_and_p_validation() {
    let dir = TempDir::new().unwrap();
    let (kernels, labels) = write_instance(dir.path());
    let model_path = dir.path().join("model.mkl");
    let report_path = dir.path().join("report.json");
    let manifest_path = dir.path().join("manifest.json");
    let out = bin()
        .args(["train", "--p", "2", "--C", "1", "--mode", "interleaved"])
        .arg("--kernels")
        .args(&kernels)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(&model_path)
        .arg("--report")
        .arg(&report_path)
        .arg("--manifest")
        .arg(&manifest_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(model_path.exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["final_gap"].as_f64().unwrap() <= 1e-3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["p"], "2");

    // p = inf routes to the unweighted-sum mode
    let inf_model = dir.path().join("model_inf.mkl");
    let out = bin()
        .args(["train", "--p", "inf"])
        .arg("--kernels")
        .args(&kernels)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(&inf_model)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let model = io::read_model(&inf_model).unwrap();
    assert!(model.theta.iter().all(|&t| t == 1.0));

    // p below one is a validation failure
    let out = bin()
        .args(["train", "--p", "0.5"])
        .arg("--kernels")
        .args(&kernels)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(dir.path().join("never.mkl"))
        .output()
        .unwrap();
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("p must be"), "{}", stderr(&out));
}

#[test]
fn train_nonconvergence_exits_two_with_best_iterate() {
    let dir = TempDir::new().unwrap();
    let (kernels, labels) = write_instance(dir.path());
    let model_path = dir.path().join("model.mkl");
    let out = bin()
        .args([
            "train",
            "--p",
            "2",
            "--mode",
            "wrapper",
            "--max-outer",
            "1",
            "--epsilon-mkl",
            "1e-14",
        ])
        .arg("--kernels")
        .args(&kernels)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(&model_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(model_path.exists(), "best iterate must still be written");
}

#[test]
fn predict_reproduces_training_labels() {
    let dir = TempDir::new().unwrap();
    let (kernels, labels) = write_instance(dir.path());
    let model_path = dir.path().join("model.mkl");
    let out = bin()
        .args(["train", "--p", "2", "--epsilon-svm", "1e-5"])
        .arg("--kernels")
        .args(&kernels)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(&model_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // self-prediction: the training kernel rows double as test rows
    let rows1 = io::read_kernel_text(&dir.path().join("k1.km")).unwrap();
    let rows2 = io::read_kernel_binary(&dir.path().join("k2.kmb")).unwrap();
    let rows1_path = dir.path().join("t1.krm");
    let rows2_path = dir.path().join("t2.krm");
    io::write_kernel_rows_text(&rows1_path, &rows1.values().to_owned(), "t1").unwrap();
    io::write_kernel_rows_text(&rows2_path, &rows2.values().to_owned(), "t2").unwrap();
    let pred_path = dir.path().join("pred.csv");
    let out = bin()
        .args(["predict"])
        .arg("--model")
        .arg(&model_path)
        .arg("--test-kernels")
        .arg(&rows1_path)
        .arg(&rows2_path)
        .arg("--out")
        .arg(&pred_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(&pred_path).unwrap();
    let y = io::read_labels(&dir.path().join("y.txt")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "decision,label");
    assert_eq!(lines.len() - 1, y.len(), "one output row per test point");
    for (line, yi) in lines[1..].iter().zip(&y) {
        let label: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(label, *yi);
    }

    // one rows file per kernel is mandatory
    let out = bin()
        .args(["predict"])
        .arg("--model")
        .arg(&model_path)
        .arg("--test-kernels")
        .arg(&rows1_path)
        .arg("--out")
        .arg(dir.path().join("p2.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);

    // a missing file is a failure naming the path
    let missing = dir.path().join("absent.krm");
    let out = bin()
        .args(["predict"])
        .arg("--model")
        .arg(&model_path)
        .arg("--test-kernels")
        .arg(&rows1_path)
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("p3.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("absent"), "{}", stderr(&out));
}

#[test]
fn toygen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = bin()
            .args(["toygen", "--d", "6", "--informative", "2", "--n", "20", "--seed", "7"])
            .arg("--out")
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.csv");
    let out = bin()
        .args(["toygen", "--d", "6", "--informative", "2", "--n", "20", "--seed", "8"])
        .arg("--out")
        .arg(&c)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn bounds_prints_the_reference_value() {
    let out = run(&["bounds", "--M", "2", "--R", "1", "--n", "100", "--p", "1"]);
    assert_eq!(code(&out), 0);
    let printed: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((printed - 0.16859).abs() <= 5e-5, "printed {printed}");

    // grids produce CSV with one row per combination
    let out = run(&[
        "bounds", "--M", "2,4", "--R", "1", "--n", "100,400", "--p", "1,2,inf",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 3);
    assert!(lines[0].starts_with("p,M,n,R,rademacher_bound"));

    // invalid inputs fail
    assert_eq!(code(&run(&["bounds", "--M", "1", "--n", "100", "--p", "1"])), 1);
    assert_eq!(
        code(&run(&[
            "bounds", "--M", "2", "--n", "100", "--p", "1", "--L", "1", "--delta", "2"
        ])),
        1
    );
}

#[test]
fn align_emits_unit_diagonal_csv() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Array2::from_shape_fn((8, 2), |_| rng.gen_range(-1.0..1.0));
    let a = rbf_kernel(x.view(), 1.0, "a").unwrap();
    let b = rbf_kernel(x.view(), 5.0, "b").unwrap();
    let a_path = dir.path().join("a.km");
    let b_path = dir.path().join("b.km");
    io::write_kernel_text(&a_path, &a).unwrap();
    io::write_kernel_text(&b_path, &b).unwrap();
    let out_path = dir.path().join("align.csv");
    let out = bin()
        .args(["align", "--normalize", "spherical"])
        .arg("--kernels")
        .arg(&a_path)
        .arg(&b_path)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "a,b");
    let parse_row = |line: &str| -> Vec<f64> {
        line.split(',').map(|v| v.parse().unwrap()).collect()
    };
    let r1 = parse_row(lines[1]);
    let r2 = parse_row(lines[2]);
    assert_eq!(r1[0], 1.0);
    assert_eq!(r2[1], 1.0);
    assert!((r1[1] - r2[0]).abs() < 1e-15, "symmetric");
}

#[test]
fn normalize_subcommand_round_trips() {
    let dir = TempDir::new().unwrap();
    let k = KernelMatrix::new(ndarray::array![[4.0, 2.0], [2.0, 9.0]], "k").unwrap();
    let in_path = dir.path().join("in.km");
    io::write_kernel_text(&in_path, &k).unwrap();
    let out_path = dir.path().join("out.km");
    let out = bin()
        .args(["normalize", "--method", "spherical"])
        .arg("--kernel")
        .arg(&in_path)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result = io::read_kernel_text(&out_path).unwrap();
    assert_eq!(result.get(0, 0), 1.0);
    assert_eq!(result.get(1, 1), 1.0);
    assert!((result.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);

    let out = bin()
        .args(["normalize", "--method", "bogus"])
        .arg("--kernel")
        .arg(&in_path)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_with_tiny_config_runs_and_reports() {
    let dir = TempDir::new().unwrap();
    let config = serde_json::json!({
        "scenarios": [{
            "d": 4,
            "theta_true": [1, 0, 0, 0],
            "rho": 1.75,
            "n_train": 20,
            "n_validate": 50,
            "n_test": 50,
            "seed": 3,
            "repetitions": 2
        }],
        "ps": ["1", "inf"],
        "c_grid": [0.1, 1.0],
        "mode": "interleaved",
        "block_size": 1,
        "epsilon_svm": 1e-3,
        "epsilon_mkl": 1e-3,
        "max_outer": 500,
        "seed": 3
    });
    let config_path = dir.path().join("sweep.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out_path = dir.path().join("report.csv");
    let out = bin()
        .args(["sweep", "--jobs", "2"])
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scenario_nu,p,C_selected,test_error,test_error_stderr,model_error,model_error_stderr,repetitions"
    );
    assert_eq!(lines.len(), 3, "one row per (scenario, p)");
}
