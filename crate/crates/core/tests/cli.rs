use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const NET: &str = r#"
schema_version = 1
name = "tiny"
source = "test"

[input]
channels = 3
width = 10
height = 10
density = 1.0

[[layers]]
name = "conv1"
in_channels = 3
out_channels = 8
width = 10
height = 10
filter = 3
pad = 1
weight_density = 0.5
activation_density = 1.0

[[layers]]
name = "conv2"
in_channels = 8
out_channels = 8
width = 10
height = 10
filter = 3
pad = 1
weight_density = 0.4
activation_density = 0.5
"#;

fn scnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scnn")).args(args).output().unwrap()
}

fn write_net(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("net.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), NET);
    let out = dir.path().join("out");
    let o = scnn(&["run", "-n", net.to_str().unwrap(), "-o", out.to_str().unwrap(), "--variants", "scnn,dcnn,oracle"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("tiny_layers.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.lines().any(|l| l.starts_with("tiny,1,total,scnn,")));
    assert!(out.join("tiny_layers.txt").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("2 layers match"));
}

#[test]
fn validate_and_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), NET);
    let out = dir.path().join("out");
    let o = scnn(&["validate", "-n", net.to_str().unwrap(), "--seed", "1,2"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("2 layers match the reference").count(), 2);

    let o = scnn(&["capacity", "-n", net.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 of 2 layers need DRAM tiling"));
}

#[test]
fn sweeps_run_from_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), NET);
    let cfg = dir.path().join("cfg.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "schema_version = 1\ndensity_points = [1.0, 0.5]\npe_grids = [[1, 1], [2, 2]]\ntotal_multipliers = 64\noutput_dir = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    for cmd in ["sweep-density", "sweep-pe"] {
        let o = scnn(&[cmd, "-n", net.to_str().unwrap(), "-c", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join("tiny_density.csv").exists());
    assert!(out.join("tiny_pe.csv").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write_net(dir.path(), &NET.replace("in_channels = 8", "in_channels = 7"));
    let o = scnn(&["run", "-n", broken.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = scnn(&["run", "-n", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());

    let net = write_net(dir.path(), NET);
    let o = scnn(&["run", "-n", net.to_str().unwrap(), "--variants", "tpu"]);
    assert!(!o.status.success());
}
