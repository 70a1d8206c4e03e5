use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ersvm_core::Model;
use ndarray::Array2;
use tempfile::TempDir;

fn ersvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ersvm")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 40 samples of a noisy sine in one feature, CSV with the label last.
fn sine_csv(dir: &TempDir) -> PathBuf {
    let rows: String = (0..40)
        .map(|i| {
            let x = i as f64 / 39.0;
            let wiggle = 0.1 * ((i * 7 % 11) as f64 / 11.0 - 0.5);
            format!("{x},{}\n", (2.0 * std::f64::consts::PI * x).sin() + wiggle)
        })
        .collect();
    write(dir, "sine.csv", &rows)
}

fn plane_csv(dir: &TempDir) -> PathBuf {
    let rows: String = (0..30)
        .map(|i| {
            let (a, b) = (i as f64 / 29.0, ((i * 13) % 30) as f64 / 29.0);
            format!("{a},{b},{}\n", a - 0.5 * b)
        })
        .collect();
    write(dir, "plane.csv", &rows)
}

#[test]
fn single_sample_train_has_unit_coefficient_and_zero_gap() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "one.csv", "0.0,3.0\n");
    let model = dir.path().join("one.model");
    let out = ersvm(&[
        "train",
        "-d",
        s(&data),
        "-m",
        s(&model),
        "--tau",
        "0.5",
        "--cost",
        "0.5",
        "--no-scale",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("gap\t0\n"), "{}", stdout(&out));
    assert!(stdout(&out).contains("termination\tconverged"));
    let model = Model::load(&model).unwrap();
    assert_eq!(model.coefficients(), &[1.0]);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let data = sine_csv(&dir);
    let model = dir.path().join("m");
    let base = ["train", "-d", s(&data), "-m", s(&model)];
    let run = |extra: &[&str]| ersvm(&[&base[..], extra].concat());
    assert_eq!(code(&run(&["--lambda", "0.1", "--cost", "2"])), 1);
    assert_eq!(code(&run(&["--tau", "1.0"])), 1);
    assert_eq!(code(&run(&["--solver", "1d", "--wss", "wss2"])), 1);
    assert_eq!(code(&run(&["--solver", "2d", "--wss", "scan"])), 1);
    assert_eq!(code(&ersvm(&["train"])), 1);
    assert_eq!(code(&ersvm(&["--help"])), 0);
    assert_eq!(code(&ersvm(&["--version"])), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m");
    let missing = dir.path().join("absent.csv");
    assert_eq!(code(&ersvm(&["train", "-d", s(&missing), "-m", s(&model)])), 2);
    let bad = write(&dir, "bad.csv", "1.0,2.0\n1.0,oops\n");
    let out = ersvm(&["train", "-d", s(&bad), "-m", s(&model)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn iteration_cap_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let data = sine_csv(&dir);
    let model = dir.path().join("m");
    let out = ersvm(&[
        "train",
        "-d",
        s(&data),
        "-m",
        s(&model),
        "--lambda",
        "1e-4",
        "--gamma",
        "3",
        "--max-iter",
        "1",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stdout(&out).contains("termination\titeration-cap"));
}

#[test]
fn predictions_match_in_process_model() {
    let dir = TempDir::new().unwrap();
    let data = plane_csv(&dir);
    let model_path = dir.path().join("plane.model");
    let out = ersvm(&[
        "train",
        "-d",
        s(&data),
        "-m",
        s(&model_path),
        "--lambda",
        "1e-3",
        "--gamma",
        "2",
        "--tau",
        "0.3",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let points = write(&dir, "points.csv", "0.1,0.2\n0.5,0.5\n0.9,0.05\n");
    let out = ersvm(&["predict", "-m", s(&model_path), "-d", s(&points)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed: Vec<f64> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    let model = Model::load(&model_path).unwrap();
    let x = Array2::from_shape_vec((3, 2), vec![0.1, 0.2, 0.5, 0.5, 0.9, 0.05]).unwrap();
    let expected = model.predict_batch(&x, false).unwrap();
    assert_eq!(printed.len(), 3);
    for (p, e) in printed.iter().zip(&expected) {
        assert!((p - e).abs() <= 1e-12, "{p} vs {e}");
    }

    let empty = write(&dir, "empty.csv", "");
    let out = ersvm(&["predict", "-m", s(&model_path), "-d", s(&empty)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());

    let wide = write(&dir, "wide.csv", "0.1,0.2,0.3\n");
    let out = ersvm(&["predict", "-m", s(&model_path), "-d", s(&wide)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("expected 2, found 3"), "{}", stderr(&out));
}

#[test]
fn cv_is_deterministic_and_honors_grid_overrides() {
    let dir = TempDir::new().unwrap();
    let data = sine_csv(&dir);
    let model = dir.path().join("cv.model");
    let args = [
        "cv",
        "-d",
        s(&data),
        "-m",
        s(&model),
        "--folds",
        "5",
        "--seed",
        "7",
        "--grid-lambdas",
        "3",
        "--grid-gammas",
        "2",
        "--no-timing",
        "--threads",
        "1",
    ];
    let first = ersvm(&args);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let second = ersvm(&args);
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(stdout(&first).lines().count(), 1 + 3 * 2);
    assert!(!stdout(&first).lines().next().unwrap().contains("seconds"));
    assert!(Model::load(&model).is_ok());

    let single = ersvm(&[
        "cv",
        "-d",
        s(&data),
        "--grid-lambdas",
        "1",
        "--grid-gammas",
        "1",
        "--folds",
        "3",
        "--test-fraction",
        "0.25",
    ]);
    assert_eq!(code(&single), 0, "{}", stderr(&single));
    assert_eq!(stdout(&single).lines().count(), 2);
    assert!(stderr(&single).contains("test risk"));
}

#[test]
fn bench_emits_one_row_per_configuration() {
    let dir = TempDir::new().unwrap();
    let data = sine_csv(&dir);
    let out = ersvm(&[
        "bench",
        "-d",
        s(&data),
        "--wss-list",
        "wss1,wss2",
        "--grid-lambdas",
        "2",
        "--grid-gammas",
        "2",
        "--folds",
        "3",
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("wss1") && rows[1].contains("wss2"));
}

#[test]
fn curves_have_one_column_per_tau_and_transform_x() {
    let dir = TempDir::new().unwrap();
    let rows: String = (0..17).map(|i| format!("{i},{}\n", (i as f64).sqrt() * 0.5)).collect();
    let data = write(&dir, "sq.csv", &rows);
    let out = ersvm(&[
        "curves",
        "-d",
        s(&data),
        "--taus",
        "0.25,0.5,0.75",
        "--lambda",
        "1e-3",
        "--gamma",
        "2",
        "--resolution",
        "5",
        "--sqrt-x",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split('\t').count(), 4);
    let xs: Vec<f64> = lines.map(|l| l.split('\t').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
}
