//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod common;
#[path = "../../core/tests/support/oracles.rs"]
mod oracles;
#[path = "../../core/tests/support/properties.rs"]
mod properties;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crm_active::dataset::{Dataset, DatasetFormat, LabelSet};
use crm_active::engine::{run_baseline_random, run_session, GroundTruthOracle, RoundMetrics};
use crm_active::kernels::{
    bernoulli_kernel, combined_kernel, gaussian_kernel, KernelParams, LabeledPoint,
};
use crm_active::synth::{generate_synthetic, SynthSpec};
use crm_active::RunConfig;
use crm_active_service::store::SessionStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn kernel_suite() -> Outcome {
    let ls = |b: &[u8]| LabelSet::from_bits(b.iter().map(|v| *v == 1).collect());
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let b1 = bernoulli_kernel(&ls(&[1]), &ls(&[1]), &[0.9]).map_err(|e| e.to_string())?;
    let b2 = bernoulli_kernel(&ls(&[1]), &ls(&[0]), &[0.9]).map_err(|e| e.to_string())?;
    let b3 =
        bernoulli_kernel(&ls(&[0, 0]), &ls(&[0, 0]), &[0.5, 0.5]).map_err(|e| e.to_string())?;
    ensure(
        close(b1, 0.81) && close(b2, 0.09) && close(b3, 0.0625),
        || format!("bernoulli examples gave {b1}, {b2}, {b3}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let dims = rng.gen_range(1..=6);
        let concepts = rng.gen_range(1..=8);
        let sigma = rng.gen_range(0.1..5.0);
        let x: Vec<f64> = (0..dims).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let y: Vec<f64> = (0..dims).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let la = LabelSet::from_bits((0..concepts).map(|_| rng.gen_bool(0.4)).collect());
        let lb = LabelSet::from_bits((0..concepts).map(|_| rng.gen_bool(0.4)).collect());
        let gamma: Vec<f64> = (0..concepts).map(|_| rng.gen_range(0.01..0.99)).collect();
        let params = KernelParams::new(sigma, gamma.clone()).unwrap();
        let a = LabeledPoint {
            features: &x,
            labels: &la,
        };
        let b = LabeledPoint {
            features: &y,
            labels: &lb,
        };

        let g = (
            gaussian_kernel(&x, &y, sigma).unwrap(),
            gaussian_kernel(&y, &x, sigma).unwrap(),
        );
        let be = (
            bernoulli_kernel(&la, &lb, &gamma).unwrap(),
            bernoulli_kernel(&lb, &la, &gamma).unwrap(),
        );
        let c = (
            combined_kernel(a, b, &params).unwrap(),
            combined_kernel(b, a, &params).unwrap(),
        );
        ensure(g.0 == g.1 && be.0 == be.1 && c.0 == c.1, || {
            format!("trial {trial}: asymmetric")
        })?;
        ensure(
            (0.0..=1.0).contains(&g.0) && be.0 > 0.0 && be.0 < 1.0 && (0.0..1.0).contains(&c.0),
            || format!("trial {trial}: out of range ({g:?}, {be:?}, {c:?})"),
        )?;
        ensure(gaussian_kernel(&x, &x, sigma).unwrap() == 1.0, || {
            format!("trial {trial}: K(x,x) != 1")
        })?;
    }
    let mut worst = f64::INFINITY;
    for seed in 0..200 {
        worst = worst.min(properties::gram_min_eigenvalue(seed, 10));
    }
    ensure(worst >= -1e-9, || format!("Gram min eigenvalue {worst:e}"))?;
    Ok(format!(
        "1000 random triples, 200 Gram sets (min eigenvalue {worst:.3e})"
    ))
}

fn oracle_equivalence() -> Outcome {
    let failures = oracles::run_all(100);
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!(
        "{} operations x 100 trials within 1e-9 relative",
        oracles::CHECKS.len()
    ))
}

fn posterior_normalization() -> Outcome {
    let (dev, in_range) = properties::posterior_sum_deviation(3, 20, 1000);
    ensure(in_range && dev <= 1e-9, || {
        format!("max |sum - 1| = {dev:e}, in range: {in_range}")
    })?;
    Ok(format!("1000 queries, max |sum - 1| = {dev:.2e}"))
}

fn partition_preservation() -> Outcome {
    for seed in 0..500 {
        properties::partition_sequence(seed).map_err(|e| format!("sequence {seed}: {e}"))?;
    }
    Ok("500 sequences".into())
}

fn xmeans_recovery() -> Outcome {
    let three = (0..100)
        .filter(|&s| properties::xmeans_trial(s, 3, 10.0) == 3)
        .count();
    let one = (0..100)
        .filter(|&s| properties::xmeans_trial(s, 1, 10.0) == 1)
        .count();
    ensure(three >= 95 && one >= 95, || {
        format!("K=3 in {three}/100, K=1 in {one}/100")
    })?;
    Ok(format!("K=3 in {three}/100, K=1 in {one}/100"))
}

fn benchmark_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_clusters: 6,
        samples_per_cluster: 40,
        vocab_size: 8,
        feature_dim: 4,
        label_noise: 0.05,
        seed,
        blob_std: 1.0,
        center_spread: 8.0,
        test_size: Some(48),
        initial_labeled: Some(24),
    }
}

fn benchmark_config(seed: u64) -> RunConfig {
    RunConfig {
        batch_size: 20,
        seed,
        ..RunConfig::default()
    }
}

fn mean_ap(history: &[RoundMetrics]) -> f64 {
    history.iter().map(|m| m.annotation_ap).sum::<f64>() / history.len() as f64
}

/// Labeled count at the first round whose AP reaches 95% of the final AP.
fn labels_to_95(history: &[RoundMetrics]) -> usize {
    let target = 0.95 * history.last().unwrap().annotation_ap;
    history
        .iter()
        .find(|m| m.annotation_ap >= target)
        .map(|m| m.labeled_count)
        .unwrap()
}

fn learning_curve() -> Outcome {
    let mut beats = 0;
    let mut early = 0;
    let mut notes = Vec::new();
    for seed in 1..=3u64 {
        let ds = Arc::new(generate_synthetic(&benchmark_spec(seed)).map_err(|e| e.to_string())?);
        let config = benchmark_config(seed);
        let crm = run_session(ds.clone(), config.clone(), &mut GroundTruthOracle)
            .map_err(|e| e.to_string())?;
        let random =
            run_baseline_random(ds, config, &[seed * 10 + 1, seed * 10 + 2, seed * 10 + 3])
                .map_err(|e| e.to_string())?;
        let (c, r) = (mean_ap(&crm.history), mean_ap(&random.averaged));
        let total = crm.history.last().unwrap().labeled_count;
        let needed = labels_to_95(&crm.history);
        beats += usize::from(c >= r);
        early += usize::from(needed as f64 <= 0.6 * total as f64);
        notes.push(format!(
            "seed {seed}: {c:.4} vs {r:.4}, 95% at {needed}/{total}"
        ));
    }
    let summary = format!(
        "beats random {beats}/3, early {early}/3 [{}]",
        notes.join("; ")
    );
    ensure(beats >= 2 && early >= 2, || summary.clone())?;
    Ok(summary)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crm-active")
}

fn cli_run(dataset: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(bin())
        .arg("run")
        .arg("--dataset")
        .arg(dataset)
        .arg("--out-dir")
        .arg(out)
        .args(["--seed", "7"])
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("run exited with {status}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = dir.path().join("bench.json");
    generate_synthetic(&benchmark_spec(7))
        .and_then(|d| d.save(&ds, DatasetFormat::Json))
        .map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli_run(&ds, &a)?;
    cli_run(&ds, &b)?;
    for file in ["metrics.csv", "per_concept.csv", "labeling_order.json"] {
        let x = fs::read(a.join(file)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(file)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{file} differs"))?;
    }
    Ok("metrics.csv, per_concept.csv, labeling_order.json byte-identical".into())
}

fn json(body: &str) -> Result<serde_json::Value, String> {
    serde_json::from_str(body).map_err(|e| format!("{e}: {body}"))
}

fn call(
    addr: &str,
    method: &str,
    path: &str,
    body: Option<&str>,
) -> Result<serde_json::Value, String> {
    let (status, text) = common::http(addr, method, path, body).map_err(|e| e.to_string())?;
    ensure((200..300).contains(&status), || {
        format!("{method} {path}: {status} {text}")
    })?;
    json(&text)
}

fn crash_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds_path = common::write_small_dataset(dir.path(), "ds.json", 21);
    let dataset = Dataset::load(&ds_path, DatasetFormat::Json).map_err(|e| e.to_string())?;
    let truth = |id: &str| {
        let s = &dataset.samples()[dataset.index_of(id).unwrap()];
        dataset.concept_names(s.labels.as_ref().unwrap())
    };
    let data = dir.path().join("data");
    let addr = format!("127.0.0.1:{}", common::free_port());
    let mut server = common::spawn_server(bin(), &data, &addr);
    let mut reference = common::reference_session(&ds_path, common::small_config());

    let result = (|| -> Result<String, String> {
        let create =
            serde_json::json!({ "dataset_path": ds_path, "config": common::small_config() });
        let info = call(&addr, "POST", "/sessions", Some(&create.to_string()))?;
        let id = info["session_id"]
            .as_str()
            .ok_or("no session id")?
            .to_string();
        // One complete round, then part of the second batch.
        for round in 0..2 {
            let batch = call(&addr, "GET", &format!("/sessions/{id}/batch"), None)?;
            reference.issue_batch().map_err(|e| e.to_string())?;
            let items = batch["samples"].as_array().ok_or("no samples")?;
            let take = if round == 0 {
                items.len()
            } else {
                items.len() / 2
            };
            for item in &items[..take] {
                let sid = item["id"].as_str().ok_or("no id")?;
                let concepts = truth(sid);
                let body = serde_json::json!({ "sample_id": sid, "concepts": concepts });
                call(
                    &addr,
                    "POST",
                    &format!("/sessions/{id}/labels"),
                    Some(&body.to_string()),
                )?;
                let labels = dataset.label_set(&concepts).map_err(|e| e.to_string())?;
                reference
                    .submit_label(dataset.index_of(sid).unwrap(), labels)
                    .map_err(|e| e.to_string())?;
            }
            if round == 0 {
                call(&addr, "POST", &format!("/sessions/{id}/advance"), None)?;
                reference.advance().map_err(|e| e.to_string())?;
            }
        }
        Ok(id)
    })();
    // SIGKILL: no chance to flush or shut down cleanly.
    server.kill().map_err(|e| e.to_string())?;
    server.wait().map_err(|e| e.to_string())?;
    let id = result?;

    let store = SessionStore::open(&data).map_err(|e| e.to_string())?;
    ensure(store.failures().is_empty(), || {
        format!("{:?}", store.failures())
    })?;
    let recovered = store.snapshot(&id).map_err(|e| e.to_string())?;
    let diff = common::differing_fields(&recovered, reference.state());
    ensure(diff.is_empty(), || {
        format!("fields differ after replay: {diff:?}")
    })?;
    let submitted = recovered.pending.as_ref().map_or(0, |p| p.submitted.len());
    Ok(format!(
        "killed mid-batch at round {}, {submitted} labels pending; all fields equal",
        recovered.round + 1
    ))
}

const CRITERIA: [Criterion; 8] = [
    Criterion {
        name: "kernel suite",
        budget: Duration::from_secs(5),
        run: kernel_suite,
    },
    Criterion {
        name: "oracle equivalence",
        budget: Duration::from_secs(30),
        run: oracle_equivalence,
    },
    Criterion {
        name: "posterior normalization",
        budget: Duration::MAX,
        run: posterior_normalization,
    },
    Criterion {
        name: "partition preservation",
        budget: Duration::MAX,
        run: partition_preservation,
    },
    Criterion {
        name: "x-means recovery",
        budget: Duration::from_secs(60),
        run: xmeans_recovery,
    },
    Criterion {
        name: "learning curve",
        budget: Duration::from_secs(300),
        run: learning_curve,
    },
    Criterion {
        name: "determinism",
        budget: Duration::MAX,
        run: determinism,
    },
    Criterion {
        name: "crash recovery",
        budget: Duration::MAX,
        run: crash_recovery,
    },
];

fn main() {
    let mut failed = 0;
    for c in &CRITERIA {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run)
            .unwrap_or_else(|_| Err("panicked".into()))
            .and_then(|detail| {
                let took = start.elapsed();
                ensure(took <= c.budget, || {
                    format!("took {took:.1?}, budget {:?}", c.budget)
                })?;
                Ok(detail)
            });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("[PASS] {} ({took:.2?}): {detail}", c.name),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {} ({took:.2?}): {why}", c.name);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        CRITERIA.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
