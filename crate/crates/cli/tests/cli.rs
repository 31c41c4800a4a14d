use std::path::Path;
use std::process::{Command, Output};

fn curvirom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvirom"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find(|l| l.starts_with(key))
        .and_then(|l| l.split_whitespace().nth(key.split_whitespace().count()))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
        .parse()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn mesh_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // flat top and bottom: a rectangle, relaxed to tolerance
    let o = curvirom(&["--out", out, "mesh", "--params", "120,20,20,20,20", "--dims", "9x17"]);
    ok(&o);
    assert!(value(&stdout(&o), "loss") <= 1e-8);

    let o = curvirom(&["--out", out, "mesh", "--params", "125,13,15,35,50", "--dims", "32x128", "--file", "m.csv"]);
    ok(&o);
    let s = stdout(&o);
    assert!(value(&s, "loss") <= 1e-8);
    assert!(value(&s, "min jacobian") > 0.0);
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 32 * 128);

    let o = curvirom(&["--strict", "--out", out, "mesh", "--params", "160,13,15,35,50"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("x1"));
}

#[test]
fn params_file_and_solve() {
    let dir = tempfile::tempdir().unwrap();
    let pfile = dir.path().join("p.toml");
    std::fs::write(&pfile, "x1 = 130\ny1 = 12\ny2 = 10\ny3 = 30\ny4 = 40\n").unwrap();
    let o = curvirom(&[
        "--out",
        dir.path().to_str().unwrap(),
        "solve",
        "--params-file",
        pfile.to_str().unwrap(),
        "--dims",
        "12x40",
    ]);
    ok(&o);
    let vtk = std::fs::read_to_string(dir.path().join("solution.vtk")).unwrap();
    assert!(vtk.contains("DIMENSIONS 40 12 1"));
    assert!(vtk.contains("SCALARS temperature double 1"));
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "levels = 2\nnot_a_key = 1\n").unwrap();
    let o = curvirom(&["--config", cfg.to_str().unwrap(), "mesh", "--params", "125,13,15,35,50"]);
    assert!(!o.status.success());
    let o = curvirom(&["mesh", "--params", "1,2,3"]);
    assert!(!o.status.success());
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let grid = ["--levels", "2", "--base-dims", "5x9", "--seed", "11"];
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = grid.to_vec();
        args.extend_from_slice(extra);
        curvirom(&args)
    };

    ok(&run(&["--out", &d("ds"), "generate-dataset", "--samples", "14"]));
    ok(&run(&["--out", &d("ds2"), "--threads", "2", "generate-dataset", "--samples", "14"]));
    assert_eq!(file_bytes(Path::new(&d("ds"))), file_bytes(Path::new(&d("ds2"))));

    let o = run(&["--out", &d("sur"), "train", "--dataset", &d("ds")]);
    ok(&o);
    assert!(stdout(&o).contains("train/test 10/4"));

    let o = run(&["--out", &d("ev"), "evaluate", "--dataset", &d("ds"), "--surrogate", &d("sur")]);
    ok(&o);
    let s = stdout(&o);
    assert!(value(&s, "samples") == 4.0);
    assert!(value(&s, "MRE") < 1.0, "{s}");
    let csv = std::fs::read_to_string(dir.path().join("ev/evaluation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let o = run(&["--out", &d("ev2"), "evaluate", "--dataset", &d("ds"), "--predictions", &d("ds2")]);
    ok(&o);
    assert!(stdout(&o).contains("MAE      0.0000 K"));

    let o = run(&["--out", &d("pr"), "predict", "--surrogate", &d("sur"), "--params", "x1=152, y1=13, y2=15, y3=35, y4=50"]);
    ok(&o);
    assert!(stdout(&o).contains("outside the training bounds"));
    let vtk = std::fs::read_to_string(dir.path().join("pr/prediction.vtk")).unwrap();
    assert!(vtk.contains("DIMENSIONS 18 10 1"));

    let o = run(&["--out", &d("ex"), "export", "--dataset", &d("ds"), "--id", "2", "--surrogate", &d("sur")]);
    ok(&o);
    assert!(dir.path().join("ex/sample_00002_truth.vtk").exists());
    assert!(dir.path().join("ex/sample_00002_pred.vtk").exists());
}
