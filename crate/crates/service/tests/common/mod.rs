#![allow(dead_code)]

use std::path::{Path, PathBuf};

use crm_active::config::RunConfig;
use crm_active::dataset::DatasetFormat;
use crm_active::synth::{generate_synthetic, SynthSpec};

pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_clusters: 3,
        samples_per_cluster: 20,
        vocab_size: 5,
        feature_dim: 2,
        label_noise: 0.0,
        seed,
        blob_std: 1.0,
        center_spread: 8.0,
        test_size: Some(12),
        initial_labeled: Some(8),
    }
}

pub fn small_config() -> RunConfig {
    RunConfig {
        batch_size: 4,
        annotation_length: 2,
        retrieval_depth: 3,
        cv_folds: 3,
        ..RunConfig::default()
    }
}

/// Writes the small synthetic dataset to `dir/name` and returns its path.
pub fn write_small_dataset(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let path = dir.join(name);
    generate_synthetic(&small_spec(seed))
        .unwrap()
        .save(&path, DatasetFormat::from_path(&path))
        .unwrap();
    path
}

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crm_active::dataset::Dataset;
use crm_active::engine::{Session, SessionState, Strategy};

/// Minimal HTTP/1.1 client: returns status code and body.
pub fn http(
    addr: &str,
    method: &str,
    path: &str,
    body: Option<&str>,
) -> std::io::Result<(u16, String)> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw)?;
    let status = raw
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let body = raw
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    Ok((status, body))
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

/// Starts `crm-active serve` and waits until it answers.
pub fn spawn_server(bin: &str, data_dir: &Path, addr: &str) -> Child {
    let child = Command::new(bin)
        .args(["serve", "--bind", addr, "--data-dir"])
        .arg(data_dir)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn server");
    let deadline = Instant::now() + Duration::from_secs(30);
    while Instant::now() < deadline {
        if http(addr, "GET", "/sessions", None).is_ok() {
            return child;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    panic!("server at {addr} did not come up");
}

/// Names of the `SessionState` fields that differ between `a` and `b`.
pub fn differing_fields(a: &SessionState, b: &SessionState) -> Vec<&'static str> {
    let mut out = Vec::new();
    macro_rules! cmp {
        ($($f:ident),*) => {$(if a.$f != b.$f { out.push(stringify!($f)); })*};
    }
    cmp!(
        config,
        strategy,
        status,
        round,
        known,
        labeled,
        unlabeled,
        clusters,
        gamma,
        model,
        history,
        labeling_order,
        pending,
        scores,
        splits
    );
    out
}

/// A session driven directly, without journal or HTTP.
pub fn reference_session(dataset_path: &Path, config: RunConfig) -> Session {
    let ds = Dataset::load(dataset_path, DatasetFormat::from_path(dataset_path)).unwrap();
    Session::start(Arc::new(ds), config, Strategy::CrmActive).unwrap()
}
