use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bbgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbgc"))
        .args(args)
        .output()
        .expect("spawn bbgc")
}

fn ok(args: &[&str]) -> Output {
    let out = bbgc(args);
    assert!(
        out.status.success(),
        "bbgc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy() -> (PathBuf, PathBuf) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data");
    (dir.join("toy_50x6.csv"), dir.join("toy_50x6.schema"))
}

fn simulated(dir: &Path, n: &str, p: &str) -> PathBuf {
    let out = dir.join("sim");
    ok(&[
        "simulate",
        "--n",
        n,
        "--p",
        p,
        "--seed",
        "3",
        "--out-dir",
        s(&out),
    ]);
    out
}

#[test]
fn simulate_writes_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path(), "120", "6");
    let data = fs::read_to_string(sim.join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 121);
    assert_eq!(data.lines().next().unwrap().split(',').count(), 6);
    let r = fs::read_to_string(sim.join("r_true.csv")).unwrap();
    assert_eq!(r.lines().count(), 7);
    assert!(r.lines().nth(1).unwrap().starts_with("1,0.25,"));
    let schema = fs::read_to_string(sim.join("data.schema")).unwrap();
    assert!(schema.starts_with("x1,ordinal,"));
}

#[test]
fn simulate_defaults_to_fifteen_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["simulate", "--n", "30", "--out-dir", s(&out)]);
    let r = fs::read_to_string(out.join("r_true.csv")).unwrap();
    assert_eq!(r.lines().count(), 16);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bbgc(&["simulate", "--p", "14", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = bbgc(&["benchmark", "--methods", "bbgc,magic"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("Usage")
            || String::from_utf8_lossy(&out.stderr).contains("--help")
    );
    let out = bbgc(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (_, schema) = toy();
    let missing = dir.path().join("nope.csv");
    let out = bbgc(&[
        "impute",
        "--input",
        s(&missing),
        "--schema",
        s(&schema),
        "--out",
        s(&dir.path().join("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mean_on_complete_file_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path(), "40", "6");
    let out = dir.path().join("imp.csv");
    ok(&[
        "impute",
        "--method",
        "mean",
        "--input",
        s(&sim.join("data.csv")),
        "--schema",
        s(&sim.join("data.schema")),
        "--out",
        s(&out),
    ]);
    assert_eq!(
        fs::read(out).unwrap(),
        fs::read(sim.join("data.csv")).unwrap()
    );
}

#[test]
fn ampute_then_impute_with_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path(), "150", "6");
    let (data, schema) = (sim.join("data.csv"), sim.join("data.schema"));
    let masked = dir.path().join("masked.csv");
    let mask = dir.path().join("mask.csv");
    ok(&[
        "ampute",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--out",
        s(&masked),
        "--rate",
        "0.2",
        "--seed",
        "9",
        "--mask",
        s(&mask),
    ]);
    let na = fs::read_to_string(&masked).unwrap().matches("NA").count();
    assert_eq!(na, 180);
    let zeros: usize = fs::read_to_string(&mask)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').filter(|&c| c == "0").count())
        .sum();
    assert_eq!(zeros, 180);

    let report = dir.path().join("report.json");
    let imputed = dir.path().join("imputed.csv");
    let out = ok(&[
        "impute",
        "--input",
        s(&masked),
        "--schema",
        s(&schema),
        "--out",
        s(&imputed),
        "--method",
        "bbgc",
        "--m",
        "3",
        "--iters",
        "40",
        "--burnin",
        "10",
        "--truth",
        s(&data),
        "--report",
        s(&report),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("NRMSE "));
    assert_eq!(
        fs::read_to_string(&imputed).unwrap().matches("NA").count(),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["config"]["chain"]["m_marginal_draws"], 3);
    assert_eq!(v["config"]["chain"]["iters_per_draw"], 40);
    assert_eq!(v["config"]["chain"]["burn_in"], 10);
    assert_eq!(v["n_missing"], 180);
    assert!(v["nrmse"].as_f64().unwrap() > 0.0);
    assert_eq!(v["bbgc"]["diagnostics"].as_array().unwrap().len(), 3);
}

#[test]
fn mar_amputation_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = toy();
    let out = dir.path().join("m.csv");
    ok(&[
        "ampute",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--count",
        "50",
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap().matches("NA").count(), 58);
    let sim = simulated(dir.path(), "200", "6");
    ok(&[
        "ampute",
        "--input",
        s(&sim.join("data.csv")),
        "--schema",
        s(&sim.join("data.schema")),
        "--out",
        s(&out),
        "--mechanism",
        "mar",
        "--rate",
        "0.3",
        "--anchors",
        "0,2",
    ]);
    let text = fs::read_to_string(&out).unwrap();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_ne!(f[0], "NA");
        assert_ne!(f[2], "NA");
    }
    let both = bbgc(&[
        "ampute",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--count",
        "5",
        "--rate",
        "0.1",
    ]);
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn impute_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = toy();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "impute",
            "--input",
            s(&data),
            "--schema",
            s(&schema),
            "--out",
            s(&out),
            "--m",
            "4",
            "--seed",
            "5",
        ]);
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = toy();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "input = {}\nschema = {}\nm = 2\niters = 30\nburnin = 10\nseed = 8\n",
            s(&data),
            s(&schema)
        ),
    )
    .unwrap();
    let report = dir.path().join("r.json");
    ok(&[
        "--config",
        s(&cfg),
        "impute",
        "--out",
        s(&dir.path().join("o.csv")),
        "--iters",
        "20",
        "--report",
        s(&report),
    ]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["config"]["chain"]["m_marginal_draws"], 2);
    assert_eq!(v["config"]["chain"]["iters_per_draw"], 20);
    assert_eq!(v["config"]["chain"]["thin"], 2);
    assert_eq!(v["config"]["seed"], 8);
    fs::write(&cfg, "iters = lots\n").unwrap();
    let out = bbgc(&["--config", s(&cfg), "impute"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_grid_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let report = dir.path().join(format!("{name}.json"));
        let stdout = ok(&[
            "benchmark",
            "--n",
            "80",
            "--p",
            "6",
            "--mechanisms",
            "mcar,mar",
            "--rates",
            "0.1,0.3",
            "--methods",
            "bbgc,mean,knn",
            "--reps",
            "2",
            "--m",
            "2",
            "--iters",
            "30",
            "--burnin",
            "10",
            "--out",
            s(&out),
            "--report",
            s(&report),
        ]);
        assert!(String::from_utf8_lossy(&stdout.stdout).contains("MAR 30%"));
        (fs::read(out).unwrap(), fs::read(report).unwrap())
    };
    let (a, ra) = run("a.csv");
    let (b, rb) = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
    let va: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    let vb: serde_json::Value = serde_json::from_slice(&rb).unwrap();
    assert_eq!(va["reports"], vb["reports"]);
    assert_eq!(va["config"]["benchmark"]["replications"], 2);
}

#[test]
fn benchmark_on_toy_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = toy();
    let out = dir.path().join("toy.csv");
    ok(&[
        "benchmark",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--rates",
        "0.1",
        "--reps",
        "1",
        "--m",
        "2",
        "--iters",
        "30",
        "--burnin",
        "10",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("method,mechanism,rate,nrmse_mean,nrmse_sd,sd_defined,replications\n"));
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains(",false,1"));
}

#[test]
fn coverage_writes_bands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cov");
    ok(&[
        "coverage",
        "--n",
        "300",
        "--level",
        "0.99",
        "--draws",
        "200",
        "--out-dir",
        s(&out),
    ]);
    let csv = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert!(csv.starts_with("# level=0.99\n"));
    for line in csv.lines().skip(2) {
        let c: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
    for f in ["band_x1.csv", "band_x6.csv", "band_x11.csv"] {
        let band = fs::read_to_string(out.join(f)).unwrap();
        assert!(band.contains("t,lower,upper,ecdf"));
    }
}
