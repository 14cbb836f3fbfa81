//! Gaussian, Bernoulli-product and combined kernels.
//!
//! Each kernel has a `log_` variant. Callers that sum kernels (entropy,
//! density) work with the log values and a max-shift; with a few dozen
//! concepts the Bernoulli product underflows long before it is summed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabelSet;
use crate::error::{Error, Result};
use crate::math::squared_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma: f64,
    /// Concept occurrence probabilities, each in (0, 1).
    pub gamma: Vec<f64>,
}

impl KernelParams {
    pub fn new(sigma: f64, gamma: Vec<f64>) -> Result<Self> {
        check_sigma(sigma)?;
        check_gamma(&gamma)?;
        Ok(KernelParams { sigma, gamma })
    }
}

/// A labeled point as seen by the combined kernel.
#[derive(Debug, Clone, Copy)]
pub struct LabeledPoint<'a> {
    pub features: &'a [f64],
    pub labels: &'a LabelSet,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )))
    }
}

fn check_gamma(gamma: &[f64]) -> Result<()> {
    match gamma.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        Some(g) => Err(Error::InvalidParameter(format!(
            "concept probability {g} outside (0, 1)"
        ))),
        None => Ok(()),
    }
}

pub fn log_gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(x.len(), y.len()));
    }
    check_sigma(sigma)?;
    Ok(-squared_distance(x, y) / (2.0 * sigma * sigma))
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    log_gaussian_kernel(x, y, sigma).map(f64::exp)
}

pub fn log_bernoulli_kernel(y: &LabelSet, y2: &LabelSet, gamma: &[f64]) -> Result<f64> {
    if y.len() != gamma.len() {
        return Err(Error::dims(gamma.len(), y.len()));
    }
    if y2.len() != gamma.len() {
        return Err(Error::dims(gamma.len(), y2.len()));
    }
    check_gamma(gamma)?;
    Ok(gamma
        .iter()
        .enumerate()
        .map(|(d, &g)| {
            let factor = |on: bool| if on { g.ln() } else { (1.0 - g).ln() };
            factor(y.contains(d)) + factor(y2.contains(d))
        })
        .sum())
}

/// Bernoulli product kernel over concept indicator vectors:
/// `prod_d g^y g^y' (1-g)^(1-y) (1-g)^(1-y')`.
pub fn bernoulli_kernel(y: &LabelSet, y2: &LabelSet, gamma: &[f64]) -> Result<f64> {
    log_bernoulli_kernel(y, y2, gamma).map(f64::exp)
}

pub fn log_combined_kernel(
    a: LabeledPoint<'_>,
    b: LabeledPoint<'_>,
    params: &KernelParams,
) -> Result<f64> {
    Ok(log_bernoulli_kernel(a.labels, b.labels, &params.gamma)?
        + log_gaussian_kernel(a.features, b.features, params.sigma)?)
}

/// Product of the Bernoulli label kernel and the Gaussian feature kernel.
pub fn combined_kernel(
    a: LabeledPoint<'_>,
    b: LabeledPoint<'_>,
    params: &KernelParams,
) -> Result<f64> {
    log_combined_kernel(a, b, params).map(f64::exp)
}

/// Same as [`combined_kernel`] but for `Option` labels; an unlabeled operand
/// is an error.
pub fn combined_kernel_opt(
    a: (&[f64], Option<&LabelSet>),
    b: (&[f64], Option<&LabelSet>),
    params: &KernelParams,
) -> Result<f64> {
    let (Some(la), Some(lb)) = (a.1, b.1) else {
        return Err(Error::Precondition(
            "combined kernel requires labeled samples".into(),
        ));
    };
    combined_kernel(
        LabeledPoint {
            features: a.0,
            labels: la,
        },
        LabeledPoint {
            features: b.0,
            labels: lb,
        },
        params,
    )
}

/// Laplace-smoothed concept frequencies: `(count_d + 1) / (n + 2)`.
pub fn estimate_gamma<'a, I>(labeled: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a LabelSet>,
{
    let mut counts: Vec<usize> = Vec::new();
    let mut n = 0usize;
    for labels in labeled {
        if n == 0 {
            counts = vec![0; labels.len()];
        } else if labels.len() != counts.len() {
            return Err(Error::dims(counts.len(), labels.len()));
        }
        for d in labels.positives() {
            counts[d] += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Precondition(
            "cannot estimate concept probabilities from an empty set".into(),
        ));
    }
    Ok(counts
        .into_iter()
        .map(|c| (c as f64 + 1.0) / (n as f64 + 2.0))
        .collect())
}

/// Median Euclidean distance over up to 1,000 random pairs of `points`.
///
/// Falls back to 1.0 when fewer than two points are given or every sampled
/// pair coincides.
pub fn median_bandwidth(points: &[&[f64]], seed: u64) -> f64 {
    const PAIRS: usize = 1000;
    let n = points.len();
    if n < 2 {
        return 1.0;
    }
    let mut dists: Vec<f64> = if n * (n - 1) / 2 <= PAIRS {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| squared_distance(points[i], points[j]).sqrt())
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..PAIRS)
            .map(|_| {
                let i = rng.gen_range(0..n);
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                squared_distance(points[i], points[j]).sqrt()
            })
            .collect()
    };
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}
