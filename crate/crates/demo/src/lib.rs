//! Browser demo. Every export takes a JSON parameter object and returns a
//! JSON string; the same operations are plain Rust functions for native
//! use and testing.

use std::sync::Arc;

use crm_active::clustering::{ClusterState, PointView};
use crm_active::engine::{run_baseline_random, run_session, GroundTruthOracle, RoundMetrics};
use crm_active::kernels::{gaussian_kernel, median_bandwidth};
use crm_active::selection::{density, density_table, diversity, select_batch, InfoScore};
use crm_active::synth::{generate_synthetic, SynthSpec};
use crm_active::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct BlobParams {
    pub blobs: usize,
    pub per_blob: usize,
    pub std: f64,
    /// Centers are drawn from `[-spread, spread]^2`.
    pub spread: f64,
    pub seed: u64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            blobs: 3,
            per_blob: 20,
            std: 1.0,
            spread: 12.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterView {
    pub points: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub representatives: Vec<usize>,
    pub k: usize,
    /// `(K, BIC)` for every candidate K.
    pub bic: Vec<(usize, f64)>,
}

fn blob_points(p: &BlobParams) -> Result<Vec<Vec<f64>>, String> {
    if p.blobs == 0 || p.per_blob == 0 {
        return Err("blobs and per_blob must be positive".into());
    }
    let noise = Normal::new(0.0, p.std).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut points = Vec::with_capacity(p.blobs * p.per_blob);
    for _ in 0..p.blobs {
        let c = [
            rng.gen_range(-p.spread..=p.spread),
            rng.gen_range(-p.spread..=p.spread),
        ];
        for _ in 0..p.per_blob {
            points.push(vec![
                c[0] + noise.sample(&mut rng),
                c[1] + noise.sample(&mut rng),
            ]);
        }
    }
    Ok(points)
}

fn cluster(points: &[Vec<f64>], seed: u64) -> Result<(ClusterState, Vec<(usize, f64)>), String> {
    let ids: Vec<String> = (0..points.len()).map(|i| format!("p{i:04}")).collect();
    let labels = vec![None; points.len()];
    let view = PointView {
        ids: &ids,
        features: points,
        labels: &labels,
    };
    let universe: Vec<usize> = (0..points.len()).collect();
    let k_max = (points.len() as f64).sqrt().ceil() as usize;
    let (state, result) = ClusterState::initial(&view, &universe, &[], 1, k_max, 5, seed)
        .map_err(|e| e.to_string())?;
    Ok((state, result.bic_by_k))
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

/// Gaussian blobs in the plane, clustered by X-Means.
pub fn cluster_blobs(p: &BlobParams) -> Result<ClusterView, String> {
    let points = blob_points(p)?;
    let (state, bic) = cluster(&points, p.seed)?;
    let mut assignment = vec![0; points.len()];
    for (pos, c) in state.clusters.iter().enumerate() {
        for &m in &c.members {
            assignment[m] = pos;
        }
    }
    Ok(ClusterView {
        points: points.iter().map(|v| pair(v)).collect(),
        assignment,
        centroids: state.clusters.iter().map(|c| pair(&c.centroid)).collect(),
        representatives: state.representatives(),
        k: state.len(),
        bic,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct ScoreParams {
    #[serde(flatten)]
    pub blobs: BlobParams,
    pub w_density: f64,
    pub w_diversity: f64,
    pub batch: usize,
    /// Cells per side of the field grid.
    pub grid: usize,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            blobs: BlobParams::default(),
            w_density: 0.5,
            w_diversity: 0.5,
            batch: 5,
            grid: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointScore {
    pub den: f64,
    pub div: f64,
    pub info: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreView {
    pub clusters: ClusterView,
    pub sigma: f64,
    pub scores: Vec<PointScore>,
    pub selected: Vec<usize>,
    /// Bounding box `[x0, y0, x1, y1]` of the grid.
    pub bounds: [f64; 4],
    /// Row-major weighted score of each grid cell center, as if a sample sat
    /// there and joined its nearest cluster.
    pub field: Vec<f64>,
}

/// Density and diversity of every point, the batch they select, and the
/// same score over a grid covering the points.
pub fn score_field(p: &ScoreParams) -> Result<ScoreView, String> {
    if p.grid == 0 {
        return Err("grid must be positive".into());
    }
    let clusters = cluster_blobs(&p.blobs)?;
    let points: Vec<Vec<f64>> = clusters.points.iter().map(|v| v.to_vec()).collect();
    let (state, _) = cluster(&points, p.blobs.seed)?;
    let refs: Vec<&[f64]> = points.iter().map(|v| v.as_slice()).collect();
    let sigma = median_bandwidth(&refs, p.blobs.seed);
    let table = density_table(&state, &points, sigma).map_err(|e| e.to_string())?;
    let reps: Vec<&[f64]> = state
        .representatives()
        .into_iter()
        .map(|r| refs[r])
        .collect();
    let weigh = |den: f64, div: f64| p.w_density * den + p.w_diversity * div;

    let mut scores = Vec::with_capacity(points.len());
    let mut infos = Vec::with_capacity(points.len());
    for (i, x) in refs.iter().enumerate() {
        let den = density(i, &table).map_err(|e| e.to_string())?;
        let div = diversity(x, &reps, sigma).map_err(|e| e.to_string())?;
        let info = weigh(den, div);
        scores.push(PointScore { den, div, info });
        infos.push(InfoScore {
            sample_id: format!("p{i:04}"),
            sample: i,
            unct: 0.0,
            den,
            div,
            info,
        });
    }
    let selected = select_batch(&infos, p.batch);

    let pad = 2.0 * p.blobs.std;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for v in &points {
        x0 = x0.min(v[0] - pad);
        y0 = y0.min(v[1] - pad);
        x1 = x1.max(v[0] + pad);
        y1 = y1.max(v[1] + pad);
    }
    let mut field = Vec::with_capacity(p.grid * p.grid);
    for row in 0..p.grid {
        for col in 0..p.grid {
            let q = [
                x0 + (col as f64 + 0.5) * (x1 - x0) / p.grid as f64,
                y0 + (row as f64 + 0.5) * (y1 - y0) / p.grid as f64,
            ];
            let near = state
                .clusters
                .iter()
                .min_by(|a, b| dist2(&q, &a.centroid).total_cmp(&dist2(&q, &b.centroid)))
                .expect("at least one cluster");
            let mut kde = 0.0;
            for &m in &near.members {
                kde += gaussian_kernel(&q, refs[m], sigma).map_err(|e| e.to_string())?;
            }
            let den = (kde / near.size() as f64 / table.global_max).min(1.0);
            let div = diversity(&q, &reps, sigma).map_err(|e| e.to_string())?;
            field.push(weigh(den, div));
        }
    }
    Ok(ScoreView {
        clusters,
        sigma,
        scores,
        selected,
        bounds: [x0, y0, x1, y1],
        field,
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct CurveParams {
    pub clusters: usize,
    pub per_cluster: usize,
    pub vocab: usize,
    pub dim: usize,
    pub noise: f64,
    pub batch: usize,
    pub seed: u64,
    pub random_runs: u64,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            clusters: 6,
            per_cluster: 40,
            vocab: 8,
            dim: 4,
            noise: 0.05,
            batch: 20,
            seed: 1,
            random_runs: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub labeled: usize,
    pub annotation_ap: f64,
    pub retrieval_ap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveView {
    pub active: Vec<CurvePoint>,
    /// Mean over `random_runs` random-selection runs.
    pub random: Vec<CurvePoint>,
}

fn points(history: &[RoundMetrics]) -> Vec<CurvePoint> {
    history
        .iter()
        .map(|m| CurvePoint {
            labeled: m.labeled_count,
            annotation_ap: m.annotation_ap,
            retrieval_ap: m.retrieval_ap,
        })
        .collect()
}

/// Active selection against random selection on a synthetic dataset.
pub fn learning_curve(p: &CurveParams) -> Result<CurveView, String> {
    let n = p.clusters * p.per_cluster;
    let spec = SynthSpec {
        n_clusters: p.clusters,
        samples_per_cluster: p.per_cluster,
        vocab_size: p.vocab,
        feature_dim: p.dim,
        label_noise: p.noise,
        seed: p.seed,
        test_size: Some(n / 5),
        initial_labeled: Some((n / 10).max(p.vocab)),
        ..SynthSpec::default()
    };
    let ds = Arc::new(generate_synthetic(&spec).map_err(|e| e.to_string())?);
    let config = RunConfig {
        batch_size: p.batch,
        seed: p.seed,
        ..RunConfig::default()
    };
    let active = run_session(ds.clone(), config.clone(), &mut GroundTruthOracle)
        .map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (1..=p.random_runs.max(1))
        .map(|r| p.seed * 10 + r)
        .collect();
    let random = run_baseline_random(ds, config, &seeds).map_err(|e| e.to_string())?;
    Ok(CurveView {
        active: points(&active.history),
        random: points(&random.averaged),
    })
}

fn call<P, R>(params: &str, f: impl FnOnce(&P) -> Result<R, String>) -> Result<String, JsError>
where
    P: for<'de> Deserialize<'de> + Default,
    R: Serialize,
{
    let p: P = if params.trim().is_empty() {
        P::default()
    } else {
        serde_json::from_str(params).map_err(|e| JsError::new(&e.to_string()))?
    };
    let out = f(&p).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&out).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = clusterBlobs)]
pub fn cluster_blobs_js(params: &str) -> Result<String, JsError> {
    call(params, cluster_blobs)
}

#[wasm_bindgen(js_name = scoreField)]
pub fn score_field_js(params: &str) -> Result<String, JsError> {
    call(params, score_field)
}

#[wasm_bindgen(js_name = learningCurve)]
pub fn learning_curve_js(params: &str) -> Result<String, JsError> {
    call(params, learning_curve)
}
