use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geoshoot_cli::parse_config;
use geoshoot_cli::run::CSV_HEADER;

fn geoshoot(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geoshoot"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("GEOSHOOT_")) {
        cmd.env_remove(k);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn identical_images_exit_zero_with_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = geoshoot(
        &["--phantom", "circle:circle", "--grid", "32x32", "--bands", "8", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = read(&out.join("band_8/convergence.csv"));
    let mse = column(&csv, "mse_rel");
    assert_eq!(mse, vec![0.0]);
}

#[test]
fn circle_to_c_mse_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = geoshoot(&["--phantom", "circle:c-shape", "--out", out.to_str().unwrap()], &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let mse = column(&read(&out.join("band_16/convergence.csv")), "mse_rel");
    assert_eq!(mse.len(), 11);
    for w in mse.windows(2) {
        assert!(w[1] <= w[0], "{mse:?}");
    }
    // The first Gauss-Newton step removes at least 30% of the mismatch.
    assert!(mse[1] <= 70.0, "{mse:?}");
}

#[test]
fn band_sweep_writes_one_directory_per_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = geoshoot(
        &["--phantom", "circle:c-shape", "--grid", "64x64", "--bands", "8,16,32", "--iters", "2", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("config.toml").is_file());
    let mut keys = None;
    for b in [8, 16, 32] {
        let d = out.join(format!("band_{b}"));
        for f in ["config.toml", "convergence.csv", "warped.img", "displacement.fld", "initial_velocity.txt", "summary.txt"] {
            assert!(d.join(f).is_file(), "{}/{f}", d.display());
        }
        assert_eq!(read(&d.join("convergence.csv")).lines().next(), Some(CSV_HEADER));
        let summary = read(&d.join("summary.txt"));
        let k: Vec<String> = summary.lines().map(|l| l.split('=').next().unwrap().to_string()).collect();
        assert!(summary.contains(&format!("band={b}\n")));
        match &keys {
            None => keys = Some(k),
            Some(first) => assert_eq!(first, &k),
        }
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let r = geoshoot(&["--config", &fixture("override.toml"), "--out", a.to_str().unwrap()], &[]);
    assert!(r.status.success());
    let echoed = a.join("band_8/config.toml");
    let r = geoshoot(&["--config", echoed.to_str().unwrap(), "--out", b.to_str().unwrap()], &[]);
    assert!(r.status.success());
    assert_eq!(read(&a.join("band_8/convergence.csv")), read(&b.join("band_8/convergence.csv")));
}

#[test]
fn flags_override_env_which_overrides_the_file() {
    let file = fixture("override.toml");
    let env = |pairs: &[(&str, &str)]| pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<Vec<_>>();
    let cfg = parse_config(["geoshoot", "--config", &file], env(&[])).unwrap();
    assert_eq!((cfg.sigma, cfg.alpha, cfg.nt), (0.5, 2.0, 6));
    let cfg = parse_config(["geoshoot", "--config", &file], env(&[("GEOSHOOT_SIGMA", "0.25"), ("GEOSHOOT_NT", "4")])).unwrap();
    assert_eq!((cfg.sigma, cfg.alpha, cfg.nt), (0.25, 2.0, 4));
    let cfg = parse_config(
        ["geoshoot", "--config", &file, "--sigma", "2", "--alpha", "1"],
        env(&[("GEOSHOOT_SIGMA", "0.25")]),
    )
    .unwrap();
    assert_eq!((cfg.sigma, cfg.alpha, cfg.nt), (2.0, 1.0, 6));
}

#[test]
fn env_override_reaches_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = geoshoot(&["--config", &fixture("override.toml"), "--out", out.to_str().unwrap()], &[("GEOSHOOT_SIGMA", "0.125")]);
    assert!(r.status.success());
    assert!(read(&out.join("config.toml")).contains("sigma = 0.125"));
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "phantom = \"circle:c-shape\"\nbandz = [8]\n").unwrap();
    let o = dir.path().join("o");
    let o = o.to_str().unwrap();
    let cases: Vec<(Vec<&str>, Vec<(&str, &str)>)> = vec![
        (vec!["--config", bad.to_str().unwrap(), "--out", o], vec![]),
        (vec!["--phantom", "circle:c-shape", "--grid", "32x32", "--bands", "64", "--out", o], vec![]),
        (vec!["--phantom", "circle:c-shape", "--variant", "state", "--variant", "deformation", "--out", o], vec![]),
        (vec!["--phantom", "circle:c-shape", "--out", o], vec![("GEOSHOOT_BANDZ", "8")]),
    ];
    for (args, env) in cases {
        let r = geoshoot(&args, &env);
        assert_eq!(r.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(!r.stderr.is_empty());
    }
    let r = geoshoot(&["--config", bad.to_str().unwrap(), "--out", o], &[]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("bands"), "valid keys are listed");
}

#[test]
fn unreadable_image_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.img");
    let m = missing.to_str().unwrap();
    let r = geoshoot(&["--source", m, "--target", m, "--out", dir.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(r.status.code(), Some(2), "missing inputs are rejected up front");
    let corrupt = dir.path().join("corrupt.img");
    fs::write(&corrupt, b"not an image").unwrap();
    let c = corrupt.to_str().unwrap();
    let r = geoshoot(&["--source", c, "--target", c, "--out", dir.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(r.status.code(), Some(1), "{}", String::from_utf8_lossy(&r.stderr));
}

fn table(stdout: &[u8]) -> Vec<Vec<String>> {
    String::from_utf8_lossy(stdout)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

#[test]
fn complexity_report_counts_scale_with_band_and_steps() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let base = ["--phantom", "circle:c-shape", "--grid", "32x32", "--bands", "8,16", "--complexity-report", "--out", o.to_str().unwrap()];
    let run = |nt: &str| {
        let mut args = base.to_vec();
        args.extend(["--nt", nt]);
        let r = geoshoot(&args, &[]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        table(&r.stdout)
    };
    let t8 = run("8");
    let t4 = run("4");
    assert_eq!(t8.len(), 4);
    let num = |row: &Vec<String>, i: usize| row[i].parse::<u64>().unwrap();
    // Rows: (8, state), (8, deformation), (16, state), (16, deformation).
    for i in 0..2 {
        assert_eq!(num(&t8[i + 2], 2), 4 * num(&t8[i], 2), "velocity scales as B^2");
        assert_eq!(num(&t8[i + 2], 5), 4 * num(&t8[i], 5), "costates scale as B^2");
    }
    assert!(num(&t8[1], 7) < num(&t8[0], 7), "deformation stores fewer grid scalars");
    // Stored velocity fields: F = 4 nt + 1 at nt = 8 and (F - 1) / 2 + 1 at nt = 4.
    let per_field = 2 * 8 * 8;
    let f = num(&t8[0], 2) / per_field;
    assert_eq!(f, 33);
    assert_eq!(num(&t4[0], 2) / per_field, (f - 1) / 2 + 1);
}
