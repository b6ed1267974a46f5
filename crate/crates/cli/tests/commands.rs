use std::path::Path;
use std::process::Command;

use krflow_cli::output::Table;

fn krflow(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_krflow"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KRFLOW_OUT")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMALL: [&str; 10] = ["--n", "1", "--N", "8", "--t-end", "0.5", "--dt-out", "0.25", "-q", "--c-v=20"];

fn args<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

#[test]
fn misspelled_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "gird_N = 16\n").unwrap();
    let (code, _, err) = krflow(&["run", "-c", "c.toml"], dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("gird_N"), "{err}");
}

#[test]
fn missing_scenario_and_bad_grid_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(krflow(&["run", "-q"], dir.path()).0, 2);
    let (code, _, err) = krflow(&args(&["run", "--scenario", "ke_fixed_point", "--N", "7"], &SMALL[..2]), dir.path());
    assert_eq!(code, 2, "{err}");
    assert_eq!(krflow(&["run", "--scenario", "nope", "-q"], dir.path()).0, 2);
}

#[test]
fn run_writes_series_summary_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    // N = 8 under-resolves the gradient identity of this potential
    let (code, _, err) = krflow(
        &args(
            &["run", "--scenario", "generic_ample", "--out", "g", "--checkpoint-every", "1", "--N", "16"],
            &[&SMALL[..2], &SMALL[4..]].concat(),
        ),
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("g");
    let text = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(text.starts_with("# krflow series v1"));
    let t = Table::read(&out.join("series.csv")).unwrap();
    assert_eq!(t.header[0], "t");
    assert_eq!(t.column("t").unwrap(), vec![Some(0.0), Some(0.25), Some(0.5)]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["config"]["grid"]["N"], 16);
    assert!(summary["certificates"].as_array().unwrap().len() > 5);
    for f in ["snap_0001.krfl", "snap_0003.krfl", "final.krfl"] {
        assert!(out.join("checkpoints").join(f).exists(), "{f}");
    }
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_krflow"))
        .args(args(&["run", "--scenario", "ke_fixed_point", "--out", "ke"], &SMALL))
        .current_dir(dir.path())
        .env("KRFLOW_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(root.join("ke/summary.json").exists());
}

#[test]
fn verify_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = krflow(
        &args(&["run", "--scenario", "ke_fixed_point", "--out", "ke", "--checkpoint-every", "1"], &SMALL),
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let ck = dir.path().join("ke/checkpoints");
    let a = ck.join("snap_0002.krfl");
    let b = ck.join("snap_0003.krfl");
    let (code, stdout, err) = krflow(
        &[
            "verify",
            a.to_str().unwrap(),
            b.to_str().unwrap(),
            "--scenario",
            "ke_fixed_point",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("skipped"), "{stdout}");

    let mut bytes = std::fs::read(&a).unwrap();
    bytes[0] = b'Z';
    let bad = dir.path().join("bad.krfl");
    std::fs::write(&bad, bytes).unwrap();
    let (code, _, err) = krflow(&["verify", bad.to_str().unwrap(), "--scenario", "ke_fixed_point"], dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("magic"), "{err}");
}

#[test]
fn sweep_writes_ratios_and_rejects_empty_values() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = krflow(&["sweep", "--scenario", "homogeneous", "--axis", "dt", "--values"], dir.path());
    assert_eq!(code, 2);
    let (code, _, err) = krflow(
        &args(
            &["sweep", "--scenario", "homogeneous", "--axis", "dt", "--values", "0.1,0.05", "--out", "sw"],
            &["--n", "1", "--N", "8", "--t-end", "1", "--dt-out", "0.5"],
        ),
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let t = Table::read(&dir.path().join("sw/sweep.csv")).unwrap();
    let ratio = t.column("ratio_oracle_error").unwrap();
    assert_eq!(ratio[0], None);
    let r = ratio[1].unwrap();
    assert!((14.0..18.0).contains(&r), "{r}");
    assert!(dir.path().join("sw/dt_0.05/series.csv").exists());
}

#[test]
fn solver_failure_exits_3_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    // one snapshot interval, so the huge fixed step is not clipped; it destroys
    // positivity even after the allowed halving
    std::fs::write(
        dir.path().join("c.toml"),
        "[scenario]\nname = \"generic_ample\"\nn = 1\n[grid]\nN = 32\n[time]\nt_end = 30.0\n\
         times = [0.0, 30.0]\n[integrator]\nfixed_dt = 50.0\nmax_halvings = 1\n",
    )
    .unwrap();
    let (code, _, err) = krflow(&["run", "-c", "c.toml", "--out", "f", "-q"], dir.path());
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("last_good.krfl"), "{err}");
    assert!(dir.path().join("f/checkpoints/last_good.krfl").exists());
}
