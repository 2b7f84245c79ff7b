//! The `eitsim` binary end to end on fast runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eitsim::io::{column, load_config, read_csv, read_series};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn eitsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eitsim")).args(args).output().expect("spawn eitsim")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn templates_load_back() {
    for kind in ["landau", "landau-offset", "qho", "null-uniform"] {
        let out = eitsim(&["template", "--kind", kind]);
        assert!(out.status.success(), "{kind}");
        load_config(&text(&out.stdout)).unwrap_or_else(|e| panic!("{kind}: {e}"));
    }
}

#[test]
fn broken_configs_exit_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let good = std::fs::read_to_string(configs().join("fig3.cfg")).unwrap();
    let cases = [
        (good.replace("gamma_hz = 1e6", "gamma_hz = 1e6 m"), "gamma_hz"),
        (format!("{good}\nscenario.spin = 1\n"), "scenario.spin"),
        (good.replace("grid.nx = 91", ""), "grid.nx"),
        (format!("{good}\ngrid.ny = 11\n"), "grid.ny"),
        (good.replace("scenario.kind = landau", "scenario.kind = ring"), "scenario.kind"),
    ];
    for (k, (body, key)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{k}.cfg"));
        std::fs::write(&path, body).unwrap();
        let out = eitsim(&["run", "--config", path.to_str().unwrap(), "--solver", "effective"]);
        assert_eq!(out.status.code(), Some(1), "{key}");
        assert!(text(&out.stderr).contains(key), "{key}: {}", text(&out.stderr));
    }
}

#[test]
fn missing_inputs_are_io_errors() {
    assert_eq!(eitsim(&["constants", "--config", "/nonexistent/x.cfg"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let out = eitsim(&["analyze", "--series", dir.path().to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    assert_eq!(eitsim(&["run"]).status.code(), Some(1));
}

#[test]
fn constants_of_the_trap_config() {
    let out = eitsim(&["constants", "--config", configs().join("fig5.cfg").to_str().unwrap()]);
    assert!(out.status.success());
    let s = text(&out.stdout);
    let value = |name: &str| -> f64 {
        let line = s.lines().find(|l| l.split_whitespace().next() == Some(name)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!((value("m") / 1.2736e-32 - 1.0).abs() < 1e-3);
    assert!((value("l_E") / 0.6434e-3 - 1.0).abs() < 1e-3);
    assert!((value("eta") / 5e10 - 1.0).abs() < 1e-12);
}

/// Runs the effective solver, compares the result with itself and with a
/// series on a different grid.
#[test]
fn effective_runs_and_compare_gate() {
    let dir = tempfile::tempdir().unwrap();
    let qho = dir.path().join("qho");
    let out = eitsim(&[
        "run",
        "--config",
        configs().join("fig5.cfg").to_str().unwrap(),
        "--solver",
        "effective",
        "--out",
        qho.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let series = read_series(&qho.join("effective")).unwrap();
    assert!(series.len() > 50);
    let (h, rows) = read_csv(&qho.join("effective/diagnostics.csv")).unwrap();
    // probabilities are normalised at drive onset and only lose weight after it
    let t = column(&h, &rows, "t").unwrap();
    let p0 = column(&h, &rows, "P_0").unwrap();
    let after: Vec<f64> = t.iter().zip(&p0).filter(|(t, _)| **t > 0.2625e-3).map(|(_, p)| *p).collect();
    assert!(after[0] > 0.97 && after.iter().all(|p| *p <= 1.0), "{after:?}");
    assert!(qho.join("effective/summary.txt").exists());

    let q = qho.join("effective");
    let same = eitsim(&["compare", "--a", q.to_str().unwrap(), "--b", q.to_str().unwrap(), "--min-overlap", "0.999"]);
    assert_eq!(same.status.code(), Some(0), "{}", text(&same.stderr));
    let (h, rows) = read_csv(&q.join("overlap.csv")).unwrap();
    assert!(column(&h, &rows, "overlap").unwrap().iter().all(|o| (o - 1.0).abs() < 1e-12));

    let landau = dir.path().join("landau");
    let out = eitsim(&[
        "run",
        "--config",
        configs().join("fig3.cfg").to_str().unwrap(),
        "--solver",
        "effective",
        "--out",
        landau.to_str().unwrap(),
        "--set",
        "grid.t_end_s=0.5e-3",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let l = landau.join("effective");
    let mixed = eitsim(&["compare", "--a", l.to_str().unwrap(), "--b", q.to_str().unwrap()]);
    assert!(!mixed.status.success());

    let again = eitsim(&["analyze", "--series", l.to_str().unwrap(), "--config", landau.join("config.cfg").to_str().unwrap()]);
    assert!(again.status.success(), "{}", text(&again.stderr));
    assert!(text(&again.stdout).contains("strip position"));
}
