use std::path::Path;
use std::process::{Command, Output};

const FAST: &str = r#"
[system]
omega0 = 1.0
tunneling = 0.4

[[bath]]
family = "discrete"
modes = [[1.3, 0.12]]
temperature = 0.6667
counted = true

[[bath]]
family = "discrete"
modes = [[1.9, 0.1]]
temperature = 1.1

[numerics]
n_max = 2
n_max_cap = 4
dt = 0.01
t_end = 1.0
t_end_cap = 1.0

[mode]
kind = "transient"
relation_order = 0

[output]
stride = 10
checkpoint = true
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fcs-heom"));
    for key in ["FCSHEOM_CONFIG", "FCSHEOM_MODE", "FCSHEOM_NMAX", "FCSHEOM_DT", "FCSHEOM_TMAX", "FCSHEOM_OUT", "FCSHEOM_WORKERS", "FCSHEOM_SEED"] {
        c.env_remove(key);
    }
    c
}

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn transient_run_writes_tables_and_sidecars() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), FAST, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let names = files(&tmp.path().join("out"));
    for want in ["cumulants_two_point.csv", "cumulants_two_point.meta.json", "cumulants_single.csv", "basis.json", "checkpoint.bin"] {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/cumulants_two_point.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    assert!(meta["convergence"].is_string() || meta["convergence"].is_object());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(a.path(), FAST, &[]).status.success());
    assert!(run(b.path(), FAST, &["--workers", "2"]).status.success());
    for name in files(&a.path().join("out")) {
        let x = std::fs::read(a.path().join("out").join(&name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(&name)).unwrap();
        if name.ends_with(".meta.json") {
            // Sidecars record the worker count; everything else must match.
            let strip = |v: &[u8]| {
                let mut j: serde_json::Value = serde_json::from_slice(v).unwrap();
                j["run"].as_object_mut().map(|o| o.remove("workers"));
                j
            };
            assert_eq!(strip(&x), strip(&y), "{name}");
        } else {
            assert!(x == y, "{name} differs");
        }
    }
}

#[test]
fn parse_error_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &FAST.replace("tunneling = 0.4", "tunneling = 0.4\nbogus = 1"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());
    let o = run(tmp.path(), "[system", &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_error_exits_3_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &FAST.replace("dt = 0.01", "dt = -0.01"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!tmp.path().join("out").exists());
    let o = run(tmp.path(), &FAST.replace("counted = true", ""), &[]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(tmp.path(), FAST, &["--workers", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unconverged_depth_exits_5_and_still_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = FAST.replace("n_max_cap = 4", "n_max_cap = 2").replace("n_max = 2", "n_max = 1\nn_max_step = 1\nconvergence_tol = 1e-12");
    let o = run(tmp.path(), &text, &[]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("out/cumulants_two_point.csv").exists());
}

#[test]
fn environment_overrides_flags_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, FAST).unwrap();
    let out = tmp.path().join("envout");
    let o = bin()
        .arg("run")
        .env("FCSHEOM_CONFIG", &cfg)
        .env("FCSHEOM_OUT", &out)
        .env("FCSHEOM_TMAX", "0.5")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("cumulants_two_point.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last - 0.5).abs() < 1e-12);
}

#[test]
fn compare_subcommand_reports_pass_and_fail() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), FAST, &[]).status.success());
    let table = tmp.path().join("out/cumulants_two_point.csv");
    let same = bin().arg("compare").arg(&table).arg(&table).output().unwrap();
    assert_eq!(same.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&same.stdout).contains("PASS"));

    let csv = std::fs::read_to_string(&table).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let other = tmp.path().join("other.csv");
    let mut lines = csv.lines();
    let mut text = format!("{}\n", lines.next().unwrap());
    for l in lines {
        let mut cells: Vec<String> = l.split(',').map(String::from).collect();
        let k = header.iter().position(|h| *h == "cumulant_1").unwrap();
        if let Ok(v) = cells[k].parse::<f64>() {
            cells[k] = format!("{:.12e}", v * 1.5 + 1.0);
        }
        text += &(cells.join(",") + "\n");
    }
    std::fs::write(&other, text).unwrap();
    let diff = bin().arg("compare").arg(&table).arg(&other).output().unwrap();
    assert_eq!(diff.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&diff.stdout).contains("FAIL"));

    let cols = bin().args(["compare", "--columns", "moment_1,cumulant_1"]).arg(&table).output().unwrap();
    assert_eq!(cols.status.code(), Some(0), "{}", String::from_utf8_lossy(&cols.stderr));
}
