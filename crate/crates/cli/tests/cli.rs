use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uqkit::dataserver::read_table;
use uqkit::heatmodel::{make_model, ModelSettings, ModelVariant};
use uqkit::Model;
use uqkit_cli::config::{Action, KEYS};

fn uqkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("UQKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn studies() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../studies")
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Every file below `dir`, relative to it, sorted.
fn tree(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_of_every_subcommand_lists_its_keys() {
    let dir = tempfile::tempdir().unwrap();
    for action in Action::ALL {
        let o = uqkit(&[action.name(), "--help"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", action.name());
        let text = String::from_utf8_lossy(&o.stdout);
        for kd in KEYS.iter().filter(|kd| action.sections().contains(&kd.section)) {
            let line = format!("    {:<16} {}", kd.key, kd.doc);
            assert!(
                text.contains(&line),
                "{} --help lacks {}.{}",
                action.name(),
                kd.section,
                kd.key
            );
        }
    }
    assert_eq!(uqkit(&["validate", "--help"], dir.path()).status.code(), Some(0));
    assert_eq!(uqkit(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn every_bundled_study_validates() {
    let mut n = 0;
    for entry in fs::read_dir(studies()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "ini") {
            let o = uqkit(&["validate", "--config", p.to_str().unwrap()], &studies());
            assert_eq!(
                o.status.code(),
                Some(0),
                "{}: {}",
                p.display(),
                String::from_utf8_lossy(&o.stdout)
            );
            n += 1;
        }
    }
    assert!(n >= 10);
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(
        &cfg,
        "[inputs]\nx = Normal(1)\n[design]\nmethod = lhs\nn = 10\nseed = 1\n",
    )
    .unwrap();
    let o = uqkit(&["sample", "--config", "bad.ini"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("inputs.x"), "{}", stderr(&o));

    let v = uqkit(&["validate", "--config", "bad.ini"], dir.path());
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stdout).contains("inputs.x"));

    fs::write(
        &cfg,
        "[inputs]\nx = Uniform(0, 1)\n[design]\nmethod = lhs\nn = 10\nseed = 1\n[bogus]\na = 1\n",
    )
    .unwrap();
    let o = uqkit(&["sample", "--config", "bad.ini"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));

    let o = uqkit(&["sample"], dir.path());
    assert_eq!(o.status.code(), Some(1), "missing required flag");
    let o = uqkit(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1), "unknown subcommand");
}

#[test]
fn runtime_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // A negative thickness is outside the model domain.
    fs::write(
        dir.path().join("points.dat"),
        "#COLUMNS: e lambda c_rho rho\n-0.01 0.25 1300 2200\n",
    )
    .unwrap();
    let o = uqkit(
        &[
            "model",
            "--variant",
            "gauge_physical",
            "--in",
            "points.dat",
            "--out",
            "y.dat",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!dir.path().join("y.dat").exists());
}

#[test]
fn io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = uqkit(&["sample", "--config", "missing.ini"], dir.path());
    assert_eq!(o.status.code(), Some(3));

    let o = uqkit(&["model", "--variant", "gauge_xt", "--in", "missing.dat"], dir.path());
    assert_eq!(o.status.code(), Some(3));

    // The output directory cannot be created below a regular file.
    fs::write(dir.path().join("blocker"), "").unwrap();
    let cfg =
        "[inputs]\nx = Uniform(0, 1)\n[design]\nmethod = lhs\nn = 5\nseed = 1\n[output]\ndirectory = blocker/out\n";
    fs::write(dir.path().join("s.ini"), cfg).unwrap();
    let o = uqkit(&["sample", "--config", "s.ini"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn model_flags_append_an_output_column() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("points.dat"), "#COLUMNS: x_ds t_ds\n0 0\n0.5 1\n1 10\n").unwrap();
    let o = uqkit(
        &[
            "model",
            "--variant",
            "gauge_xt",
            "--in",
            "points.dat",
            "--out",
            "res/theta.dat",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_table(dir.path().join("res/theta.dat")).unwrap();
    assert_eq!(t.names(), vec!["x_ds", "t_ds", "theta"]);
    let model = make_model(ModelVariant::GaugeXt, ModelSettings::default()).unwrap();
    for (row, y) in t
        .rows_of(&["x_ds", "t_ds"])
        .unwrap()
        .iter()
        .zip(t.column("theta").unwrap())
    {
        assert_eq!(model.call(row).unwrap(), *y);
    }
    assert_eq!(
        tree(dir.path()),
        vec![PathBuf::from("points.dat"), PathBuf::from("res/theta.dat")]
    );
}

#[test]
fn propagate_writes_one_summary_row_per_depth_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fs::read_to_string(studies().join("propagate.ini")).unwrap();
    fs::write(dir.path().join("p.ini"), cfg).unwrap();
    let o = uqkit(&["propagate", "--config", "p.ini"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out/propagate");
    let summary = read_table(out.join("summary.dat")).unwrap();
    assert_eq!(summary.n_rows(), 44);
    assert_eq!(read_table(out.join("evaluations.dat")).unwrap().n_rows(), 4400);
    let (time, std) = (summary.column("time").unwrap(), summary.column("std").unwrap());
    for (t, s) in time.iter().zip(std) {
        assert_eq!(*t == 0.0, *s == 0.0, "spread vanishes exactly at t = 0");
    }
    let mean = summary.column("mean").unwrap();
    assert!(mean.iter().all(|m| (0.0..=1.0).contains(m)));
}

#[test]
fn nothing_is_written_outside_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["sample.ini", "sobol.ini", "calibrate.ini", "reference.dat"] {
        fs::copy(studies().join(name), dir.path().join(name)).unwrap();
    }
    for (action, cfg) in [
        ("sample", "sample.ini"),
        ("sensitivity", "sobol.ini"),
        ("calibrate", "calibrate.ini"),
    ] {
        let o = uqkit(&[action, "--config", cfg], dir.path());
        assert_eq!(o.status.code(), Some(0), "{action}: {}", stderr(&o));
    }
    for f in tree(dir.path()) {
        assert!(
            f.starts_with("out")
                || f.extension().is_some_and(|e| e == "ini" || e == "dat") && f.parent() == Some(Path::new("")),
            "{}",
            f.display()
        );
    }
}

#[test]
fn sensitivity_method_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(studies().join("morris.ini"), dir.path().join("m.ini")).unwrap();
    let o = uqkit(
        &[
            "sensitivity",
            "--config",
            "m.ini",
            "--method",
            "fast",
            "--out",
            "fast.dat",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_table(dir.path().join("out/morris/fast.dat")).unwrap();
    assert!(t.names().contains(&"s_of_variance"));
    assert_eq!(t.n_rows(), 5);
    // The ignored input carries no variance.
    assert!(t.column("s").unwrap()[4].abs() < 1e-3);
}

/// Compares the output of each bundled study with the reference copy under
/// tests/golden. Run with UQKIT_BLESS=1 to refresh the references.
#[test]
fn golden_outputs_are_reproduced() {
    let cases = [
        ("sample", "sample.ini", "out/sample"),
        ("model", "model.ini", "out/model"),
        ("sensitivity", "fast.ini", "out/fast"),
        ("sensitivity", "morris.ini", "out/morris"),
        ("calibrate", "calibrate.ini", "out/calibrate"),
        ("ego", "ego.ini", "out/ego"),
        ("surrogate", "surrogate_pc.ini", "out/surrogate_pc"),
    ];
    let bless = std::env::var_os("UQKIT_BLESS").is_some();
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(studies()).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    for (action, cfg, out) in cases {
        let o = uqkit(&[action, "--config", cfg], dir.path());
        assert_eq!(o.status.code(), Some(0), "{cfg}: {}", stderr(&o));
        let produced = dir.path().join(out);
        let reference = golden().join(cfg.trim_end_matches(".ini"));
        for f in tree(&produced) {
            let bytes = fs::read(produced.join(&f)).unwrap();
            if bless {
                fs::create_dir_all(&reference).unwrap();
                fs::write(reference.join(&f), &bytes).unwrap();
            } else {
                let want = fs::read(reference.join(&f))
                    .unwrap_or_else(|_| panic!("no golden file for {cfg}: {}", f.display()));
                assert!(want == bytes, "{cfg}: {} differs from its golden copy", f.display());
            }
        }
        if !bless {
            assert_eq!(tree(&produced), tree(&reference), "{cfg}: file set");
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(studies().join("surrogate_ann.ini"), dir.path().join("a.ini")).unwrap();
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let o = Command::new(env!("CARGO_BIN_EXE_uqkit"))
            .args([
                "surrogate",
                "--config",
                "a.ini",
                "--out",
                &format!("t{threads}/metrics.dat"),
            ])
            .env("UQKIT_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let d = dir.path().join(format!("t{threads}"));
        runs.push(
            tree(&d)
                .into_iter()
                .map(|f| fs::read(d.join(f)).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(runs[0], runs[1]);
}
