//! Quadratic weighted kappa and percentile-bootstrap confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Paired ordinal ratings on a `0..n_levels` scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingPair {
    predicted: Vec<u32>,
    gold: Vec<u32>,
    n_levels: usize,
}

impl RatingPair {
    pub fn new(predicted: Vec<u32>, gold: Vec<u32>, n_levels: usize) -> Result<Self> {
        if n_levels < 2 {
            return Err(Error::TooFewLevels(n_levels));
        }
        if predicted.len() != gold.len() {
            return Err(Error::LengthMismatch {
                predicted: predicted.len(),
                gold: gold.len(),
            });
        }
        if predicted.is_empty() {
            return Err(Error::EmptyRatings);
        }
        if let Some(&v) = predicted
            .iter()
            .chain(gold.iter())
            .find(|&&v| v as usize >= n_levels)
        {
            return Err(Error::RatingOutOfRange {
                value: i64::from(v),
                levels: n_levels,
            });
        }
        Ok(Self {
            predicted,
            gold,
            n_levels,
        })
    }

    pub fn predicted(&self) -> &[u32] {
        &self.predicted
    }

    pub fn gold(&self) -> &[u32] {
        &self.gold
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    fn resample(&self, indices: &[usize]) -> RatingPair {
        RatingPair {
            predicted: indices.iter().map(|&i| self.predicted[i]).collect(),
            gold: indices.iter().map(|&i| self.gold[i]).collect(),
            n_levels: self.n_levels,
        }
    }
}

/// Result of the weighted-disagreement ratio, with the degenerate case marked.
struct Kappa {
    value: f64,
    degenerate: bool,
}

fn kappa_matrix(pair: &RatingPair) -> Kappa {
    let n = pair.n_levels;
    let total = pair.len() as f64;
    let mut observed = vec![0.0f64; n * n];
    let mut hist_pred = vec![0.0f64; n];
    let mut hist_gold = vec![0.0f64; n];
    for (&p, &g) in pair.predicted.iter().zip(&pair.gold) {
        observed[p as usize * n + g as usize] += 1.0;
        hist_pred[p as usize] += 1.0;
        hist_gold[g as usize] += 1.0;
    }
    let scale = ((n - 1) * (n - 1)) as f64;
    let mut weighted_observed = 0.0;
    let mut weighted_expected = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = i as f64 - j as f64;
            let w = d * d / scale;
            weighted_observed += w * observed[i * n + j] / total;
            weighted_expected += w * (hist_pred[i] / total) * (hist_gold[j] / total);
        }
    }
    if weighted_expected == 0.0 {
        return Kappa {
            value: if weighted_observed == 0.0 { 1.0 } else { -1.0 },
            degenerate: true,
        };
    }
    Kappa {
        value: 1.0 - weighted_observed / weighted_expected,
        degenerate: false,
    }
}

/// Quadratic weighted kappa from the observed joint distribution and the
/// outer product of the marginals, with weights `(i - j)^2 / (N - 1)^2`.
///
/// When both vectors are constant and equal the expected disagreement is
/// zero; that case returns 1.0.
pub fn qwk(pair: &RatingPair) -> f64 {
    kappa_matrix(pair).value
}

/// Independent route to the same statistic: the ratio of the mean squared
/// difference over matched pairs to the mean over all cross pairs.
pub fn qwk_oracle(pair: &RatingPair) -> f64 {
    let n = pair.len() as i64;
    let mut matched: i64 = 0;
    for (&p, &g) in pair.predicted.iter().zip(&pair.gold) {
        let d = i64::from(p) - i64::from(g);
        matched += d * d;
    }
    let mut cross: i64 = 0;
    for &p in &pair.predicted {
        for &g in &pair.gold {
            let d = i64::from(p) - i64::from(g);
            cross += d * d;
        }
    }
    if cross == 0 {
        return if matched == 0 { 1.0 } else { -1.0 };
    }
    // matched/n divided by cross/n^2
    1.0 - (matched as f64 * n as f64) / cross as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub ci_low: f64,
    pub ci_high: f64,
    pub degenerate_resamples: usize,
}

/// Derives a reproducible per-group seed from the run seed and a group key.
pub fn group_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Every resampled kappa, in draw order.
pub fn bootstrap_distribution(
    pair: &RatingPair,
    iters: usize,
    seed: u64,
) -> Result<(Vec<f64>, usize)> {
    if iters == 0 {
        return Err(Error::InvalidBootstrap(
            "iterations must be at least 1".into(),
        ));
    }
    let n = pair.len();
    let bound = u32::try_from(n)
        .map_err(|_| Error::InvalidBootstrap("too many essays for resampling".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(iters);
    let mut degenerate = 0usize;
    let mut indices = vec![0usize; n];
    for _ in 0..iters {
        for slot in indices.iter_mut() {
            // u32 draws keep the stream identical on 32- and 64-bit targets
            *slot = rng.gen_range(0..bound) as usize;
        }
        let k = kappa_matrix(&pair.resample(&indices));
        if k.degenerate {
            degenerate += 1;
        }
        values.push(k.value);
    }
    Ok((values, degenerate))
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
    }
}

/// Percentile bootstrap CI with paired resampling of essays.
pub fn bootstrap_ci(pair: &RatingPair, iters: usize, seed: u64, alpha: f64) -> Result<BootstrapCi> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidBootstrap(format!(
            "alpha {alpha} not in (0, 1)"
        )));
    }
    let (mut values, degenerate) = bootstrap_distribution(pair, iters, seed)?;
    values.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        ci_low: percentile(&values, alpha / 2.0),
        ci_high: percentile(&values, 1.0 - alpha / 2.0),
        degenerate_resamples: degenerate,
    })
}

/// Agreement of one (model, level, trait) group with gold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub model: String,
    pub level: crate::prompt::Level,
    pub trait_or_total: String,
    pub qwk: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_essays: usize,
    pub bootstrap_iters: usize,
    pub seed: u64,
    pub degenerate_resamples: usize,
}
