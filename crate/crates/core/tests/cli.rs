use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qswarm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qswarm"))
        .args(args)
        .env("QSWARM_OUT", out)
        .output()
        .expect("binary runs")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qswarm-it-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const PACKET: &str = "\
mode = \"stochastic\"
lattice.dims = [48]
init.kind = \"gaussian\"
init.width = 4.0
init.samples = 200000
step.dt = 0.25
run.duration = 5.0
run.frame_every = 10
";

#[test]
fn run_then_compare_modes() {
    let dir = workdir("run");
    let cfg = dir.join("packet.toml");
    std::fs::write(&cfg, PACKET).unwrap();
    let stoch = dir.join("stoch");
    let o = qswarm(&["run", cfg.to_str().unwrap(), "--seed", "3", "--threads", "2"], &stoch);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("FRAMES: 3"), "{report}");

    let oracle = dir.join("oracle");
    let o = qswarm(&["run", cfg.to_str().unwrap(), "--mode", "oracle", "--out", oracle.to_str().unwrap()], &dir);
    assert!(o.status.success());
    let a = stoch.join("frame_00002.txt");
    let b = oracle.join("frame_00002.txt");
    let o = qswarm(&["compare", a.to_str().unwrap(), b.to_str().unwrap()], &dir);
    let text = String::from_utf8(o.stdout).unwrap();
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("DENSITY_ERROR: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 0.05, "{text}");
}

#[test]
fn same_seed_same_frames() {
    let dir = workdir("seed");
    let cfg = dir.join("packet.toml");
    std::fs::write(&cfg, PACKET).unwrap();
    for (sub, threads) in [("a", "1"), ("b", "4")] {
        let o = qswarm(&["run", cfg.to_str().unwrap(), "--seed", "5", "--threads", threads], &dir.join(sub));
        assert!(o.status.success());
    }
    let fa = std::fs::read(dir.join("a/frame_00002.txt")).unwrap();
    let fb = std::fs::read(dir.join("b/frame_00002.txt")).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn config_errors_name_the_line() {
    let dir = workdir("bad");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, format!("{PACKET}step.dtt = 0.1\n")).unwrap();
    let o = qswarm(&["run", cfg.to_str().unwrap()], &dir);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 9"), "{err}");
}

#[test]
fn born_test_writes_a_measurement_log() {
    let dir = workdir("born");
    let cfg = dir.join("born.toml");
    std::fs::write(&cfg, "lattice.dims = [8]\ninit.kind = \"gaussian\"\ninit.width = 2.0\ninit.samples = 100000\n").unwrap();
    let o = qswarm(&["born-test", cfg.to_str().unwrap(), "--draws", "5000"], &dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(dir.join("meas.log")).unwrap();
    assert_eq!(log.lines().count(), 5000);
    assert!(log.lines().all(|l| l.starts_with("MEAS ")));
}
