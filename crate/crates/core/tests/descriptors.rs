use std::path::PathBuf;

use scnn::simulator::ArchConfig;
use scnn::workloads::{load_config, load_network, ExperimentConfig};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/networks").join(name)
}

#[test]
fn shipped_descriptors_load() {
    for (file, layers) in [("alexnet.toml", 5), ("googlenet.toml", 54), ("vggnet.toml", 13)] {
        let net = load_network(data(file)).unwrap();
        assert_eq!(net.layers.len(), layers, "{file}");
        println!("{file}: {} multiplies", net.dense_multiplies().unwrap());
    }
}

#[test]
fn alexnet_largest_weights() {
    let net = load_network(data("alexnet.toml")).unwrap();
    let mb = net.max_weight_bytes().unwrap() as f64 / (1024.0 * 1024.0);
    assert!((mb - 1.73).abs() / 1.73 < 0.05, "{mb}");
}

#[test]
fn default_config_matches_builtin_defaults() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml");
    let cfg = load_config(path).unwrap();
    assert_eq!(cfg.arch, ArchConfig::default());
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_network(data("nope.toml")).unwrap_err();
    assert!(matches!(err, scnn::Error::Io { .. }));
}
