//! Kernel and information statistics: HSIC and MMD permutation tests,
//! Hellinger distance, histogram mutual information, and the k-NN
//! time-dependency score.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{sq_dist, variance, SampleMatrix, ShapeError};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("need at least {needed} permutations, got {got}")]
    PermutationCount { needed: usize, got: usize },
    #[error("histograms have {0} and {1} bins")]
    BinMismatch(usize, usize),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

pub const MIN_HSIC_SAMPLES: usize = 4;
pub const MIN_HSIC_TEST_SAMPLES: usize = 8;
pub const MIN_PERMUTATIONS: usize = 50;
pub const MIN_MI_SAMPLES: usize = 20;
pub const DEFAULT_PERMUTATIONS: usize = 200;

/// Outcome of a permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

/// Symmetric kernel matrix together with the bandwidth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
    bandwidth: f64,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `H K H` with `H = I - 11ᵀ/n`.
    pub fn centered(&self) -> Vec<f64> {
        let n = self.n;
        let nf = n as f64;
        let row_means: Vec<f64> = self
            .entries
            .chunks_exact(n)
            .map(|r| r.iter().sum::<f64>() / nf)
            .collect();
        let total = row_means.iter().sum::<f64>() / nf;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                // K is symmetric, so column means equal row means.
                out[i * n + j] = self.entries[i * n + j] - row_means[i] - row_means[j] + total;
            }
        }
        out
    }
}

fn pairwise_sq_dists(x: &SampleMatrix) -> Vec<f64> {
    let n = x.n_rows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(x.row(i), x.row(j));
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

fn median_from_sq(sq: &[f64], n: usize) -> f64 {
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| sq[i * n + j].sqrt())
        .collect();
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        *dists.select_nth_unstable_by(mid, f64::total_cmp).1
    } else {
        let upper = *dists.select_nth_unstable_by(mid, f64::total_cmp).1;
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Median pairwise Euclidean distance; 1 when the median is zero.
pub fn median_heuristic(x: &SampleMatrix) -> f64 {
    median_from_sq(&pairwise_sq_dists(x), x.n_rows())
}

fn gram_from_sq(sq: Vec<f64>, n: usize, bandwidth: f64) -> GramMatrix {
    let scale = -1.0 / (2.0 * bandwidth * bandwidth);
    let entries = sq.into_iter().map(|d| (d * scale).exp()).collect();
    GramMatrix {
        n,
        entries,
        bandwidth,
    }
}

pub fn rbf_gram(x: &SampleMatrix, bandwidth: f64) -> Result<GramMatrix, StatsError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(StatsError::Bandwidth(bandwidth));
    }
    Ok(gram_from_sq(pairwise_sq_dists(x), x.n_rows(), bandwidth))
}

/// RBF Gram matrix with the median-heuristic bandwidth.
pub fn rbf_gram_median(x: &SampleMatrix) -> GramMatrix {
    let n = x.n_rows();
    let sq = pairwise_sq_dists(x);
    let bw = median_from_sq(&sq, n);
    gram_from_sq(sq, n, bw)
}

/// Min-max normalization to `[0, 1]`; a constant vector maps to zeros.
pub fn normalize_times(t: &[f64]) -> Vec<f64> {
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        t.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; t.len()]
    }
}

fn time_gram(t: &[f64]) -> GramMatrix {
    let col = SampleMatrix::column(&normalize_times(t)).expect("times are finite and non-empty");
    rbf_gram_median(&col)
}

fn check_pair(x: &SampleMatrix, t: &[f64], needed: usize) -> Result<(), StatsError> {
    if x.n_rows() != t.len() {
        return Err(ShapeError::Mismatch(format!("{} samples vs {} times", x.n_rows(), t.len())).into());
    }
    if x.n_rows() < needed {
        return Err(StatsError::TooFewSamples {
            needed,
            got: x.n_rows(),
        });
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(ShapeError::NonFinite { row: 0, col: 0 }.into());
    }
    Ok(())
}

/// Biased HSIC `(1/n²) tr(K H L H)` of two Gram matrices of equal size.
pub fn hsic_from_grams(k: &GramMatrix, l: &GramMatrix) -> f64 {
    assert_eq!(k.n, l.n, "gram matrices must have equal size");
    let n = k.n as f64;
    let kc = k.centered();
    kc.iter().zip(&l.entries).map(|(a, b)| a * b).sum::<f64>() / (n * n)
}

/// Biased HSIC between samples and their timestamps.
///
/// Both kernels are Gaussian with median-heuristic bandwidths; timestamps
/// are min-max normalized first.
pub fn hsic(x: &SampleMatrix, t: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, t, MIN_HSIC_SAMPLES)?;
    Ok(hsic_from_grams(&rbf_gram_median(x), &time_gram(t)))
}

/// Precomputed centered data kernel and time kernel for repeated
/// evaluation of the HSIC statistic under permutations of time.
struct HsicPermuter {
    n: usize,
    kc: Vec<f64>,
    l: Vec<f64>,
    observed: f64,
}

impl HsicPermuter {
    fn new(x: &SampleMatrix, t: &[f64]) -> Self {
        Self::from_gram(&rbf_gram_median(x), t)
    }

    fn from_gram(k: &GramMatrix, t: &[f64]) -> Self {
        let l = time_gram(t);
        let n = k.n;
        let kc = k.centered();
        let observed =
            kc.iter().zip(&l.entries).map(|(a, b)| a * b).sum::<f64>() / (n * n) as f64;
        Self {
            n,
            kc,
            l: l.entries,
            observed,
        }
    }

    fn permuted(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            let krow = &self.kc[i * n..(i + 1) * n];
            let lrow = &self.l[perm[i] * n..(perm[i] + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += krow[j] * lrow[perm[j]];
            }
            total += acc;
        }
        total / (n * n) as f64
    }

    fn exceeds(&self, value: f64) -> bool {
        value >= self.observed - 1e-12 * self.observed.abs().max(1e-12)
    }
}

fn check_permutations(n_perm: usize) -> Result<(), StatsError> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(StatsError::PermutationCount {
            needed: MIN_PERMUTATIONS,
            got: n_perm,
        });
    }
    Ok(())
}

/// HSIC independence test between samples and time with a permutation null.
///
/// `p = (1 + #{π : HSIC(x, π t) ≥ HSIC(x, t)}) / (1 + n_perm)`.
pub fn hsic_test(
    x: &SampleMatrix,
    t: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<TestResult, StatsError> {
    check_pair(x, t, MIN_HSIC_TEST_SAMPLES)?;
    check_permutations(n_perm)?;
    let permuter = HsicPermuter::new(x, t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..x.n_rows()).collect();
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if permuter.exceeds(permuter.permuted(&perm)) {
            exceed += 1;
        }
    }
    Ok(TestResult {
        statistic: permuter.observed,
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        n_permutations: n_perm,
    })
}

/// Decides whether [`hsic_test`] with the same arguments would give
/// `p_value < alpha`, stopping as soon as the answer is fixed.
///
/// Under independence the loop usually stops after a handful of
/// permutations; a rejection always evaluates all `n_perm` of them.
pub fn hsic_test_rejects(
    x: &SampleMatrix,
    t: &[f64],
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<bool, StatsError> {
    check_pair(x, t, MIN_HSIC_TEST_SAMPLES)?;
    check_permutations(n_perm)?;
    Ok(permuter_rejects(&HsicPermuter::new(x, t), n_perm, alpha, seed))
}

/// [`hsic_test_rejects`] with a caller-supplied data Gram matrix.
pub fn hsic_gram_test_rejects(
    k: &GramMatrix,
    t: &[f64],
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<bool, StatsError> {
    if k.n != t.len() {
        return Err(ShapeError::Mismatch(format!("{} samples vs {} times", k.n, t.len())).into());
    }
    if k.n < MIN_HSIC_TEST_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: MIN_HSIC_TEST_SAMPLES,
            got: k.n,
        });
    }
    check_permutations(n_perm)?;
    Ok(permuter_rejects(&HsicPermuter::from_gram(k, t), n_perm, alpha, seed))
}

fn permuter_rejects(permuter: &HsicPermuter, n_perm: usize, alpha: f64, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..permuter.n).collect();
    let denom = (1 + n_perm) as f64;
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if permuter.exceeds(permuter.permuted(&perm)) {
            exceed += 1;
            if (1 + exceed) as f64 / denom >= alpha {
                return false;
            }
        }
    }
    (1 + exceed) as f64 / denom < alpha
}

/// Columns shifted to zero mean and scaled to unit variance; constant
/// columns are only centered.
pub fn standardize_columns(x: &SampleMatrix) -> SampleMatrix {
    let (n, d) = (x.n_rows(), x.n_cols());
    let means = x.column_means();
    let scales: Vec<f64> = (0..d)
        .map(|j| {
            let v = variance(&x.col_values(j));
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let data = x
        .rows()
        .flat_map(|r| r.iter().enumerate().map(|(j, v)| (v - means[j]) / scales[j]).collect::<Vec<_>>())
        .collect();
    SampleMatrix::from_vec(n, d, data).expect("same shape as input")
}

fn mmd2_from_gram(k: &[f64], n: usize, labels: &[bool]) -> f64 {
    let (mut kxx, mut kyy, mut kxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let row = &k[i * n..(i + 1) * n];
        for j in 0..n {
            match (labels[i], labels[j]) {
                (false, false) => kxx += row[j],
                (true, true) => kyy += row[j],
                _ => kxy += row[j],
            }
        }
    }
    let m = labels.iter().filter(|&&l| !l).count() as f64;
    let p = n as f64 - m;
    // kxy counts both (x,y) and (y,x) pairs.
    kxx / (m * m) + kyy / (p * p) - kxy / (m * p)
}

/// Kernel two-sample test: biased MMD² with a shared median-heuristic
/// Gaussian kernel on the pooled sample and a label-permutation null.
pub fn mmd2_test(
    x: &SampleMatrix,
    y: &SampleMatrix,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult, StatsError> {
    for s in [x, y] {
        if s.n_rows() < MIN_HSIC_SAMPLES {
            return Err(StatsError::TooFewSamples {
                needed: MIN_HSIC_SAMPLES,
                got: s.n_rows(),
            });
        }
    }
    if x.n_cols() != y.n_cols() {
        return Err(ShapeError::Mismatch(format!("{} vs {} features", x.n_cols(), y.n_cols())).into());
    }
    check_permutations(n_perm)?;
    let mut pooled_data = x.as_slice().to_vec();
    pooled_data.extend_from_slice(y.as_slice());
    let n = x.n_rows() + y.n_rows();
    let pooled = SampleMatrix::from_vec(n, x.n_cols(), pooled_data)?;
    let gram = rbf_gram_median(&pooled);
    let mut labels: Vec<bool> = (0..n).map(|i| i >= x.n_rows()).collect();
    let observed = mmd2_from_gram(&gram.entries, n, &labels);
    let tol = 1e-12 * observed.abs().max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        labels.shuffle(&mut rng);
        if mmd2_from_gram(&gram.entries, n, &labels) >= observed - tol {
            exceed += 1;
        }
    }
    Ok(TestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        n_permutations: n_perm,
    })
}

/// Normalized equal-width histogram of `values` over `[lo, hi]`.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins.max(1)];
    let bins = h.len();
    let span = hi - lo;
    for &v in values {
        let b = if span > 0.0 {
            (((v - lo) / span) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize
        } else {
            0
        };
        h[b] += 1.0;
    }
    let total = values.len().max(1) as f64;
    h.iter_mut().for_each(|c| *c /= total);
    h
}

/// Hellinger distance `sqrt(½ Σ (√h1 − √h2)²)` between normalized histograms.
pub fn hellinger(h1: &[f64], h2: &[f64]) -> Result<f64, StatsError> {
    if h1.len() != h2.len() {
        return Err(StatsError::BinMismatch(h1.len(), h2.len()));
    }
    let s: f64 = h1
        .iter()
        .zip(h2)
        .map(|(a, b)| (a.max(0.0).sqrt() - b.max(0.0).sqrt()).powi(2))
        .sum();
    Ok((0.5 * s).sqrt().min(1.0))
}

fn bin_index(values: &[f64], bins: usize) -> Vec<usize> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                (((v - lo) / span * bins as f64) as usize).min(bins - 1)
            } else {
                0
            }
        })
        .collect()
}

fn plugin_mi(sb: &[usize], tb: &[usize], bins: usize) -> f64 {
    let n = sb.len() as f64;
    let mut joint = vec![0usize; bins * bins];
    let mut ms = vec![0usize; bins];
    let mut mt = vec![0usize; bins];
    for (&a, &b) in sb.iter().zip(tb) {
        joint[a * bins + b] += 1;
        ms[a] += 1;
        mt[b] += 1;
    }
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (ms[a] as f64 * mt[b] as f64)).ln();
            }
        }
    }
    mi
}

/// Number of shuffled pairings averaged to estimate the plug-in bias.
const MI_BIAS_SHUFFLES: usize = 8;

/// Histogram mutual information (nats) between a scalar series and time.
///
/// Plug-in estimate on a `⌈√n⌉ × ⌈√n⌉` equal-width grid, minus the mean
/// plug-in value over seeded shuffles of the pairing, clamped at zero.
pub fn mutual_information(s: &[f64], t: &[f64]) -> Result<f64, StatsError> {
    if s.len() != t.len() {
        return Err(ShapeError::Mismatch(format!("{} vs {} values", s.len(), t.len())).into());
    }
    if s.len() < MIN_MI_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: MIN_MI_SAMPLES,
            got: s.len(),
        });
    }
    let n = s.len();
    let bins = (n as f64).sqrt().ceil() as usize;
    let sb = bin_index(s, bins);
    let mut tb = bin_index(t, bins);
    let raw = plugin_mi(&sb, &tb, bins);
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut bias = 0.0;
    for _ in 0..MI_BIAS_SHUFFLES {
        tb.shuffle(&mut rng);
        bias += plugin_mi(&sb, &tb, bins);
    }
    Ok((raw - bias / MI_BIAS_SHUFFLES as f64).max(0.0))
}

pub const DEFAULT_KNN: usize = 5;

/// Clipped leave-one-out R² of a k-NN regression predicting time from the
/// samples. Higher means stronger dependence on time.
///
/// Neighbours tied with the k-th distance are all averaged, so the result
/// does not depend on row order.
pub fn time_dependency_score(x: &SampleMatrix, t: &[f64], k: usize) -> Result<f64, StatsError> {
    if x.n_rows() != t.len() {
        return Err(ShapeError::Mismatch(format!("{} samples vs {} times", x.n_rows(), t.len())).into());
    }
    let n = x.n_rows();
    if k == 0 || n <= k {
        return Err(StatsError::TooFewSamples { needed: k + 1, got: n });
    }
    let var = variance(t);
    if var <= 0.0 {
        return Ok(0.0);
    }
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let mut sse = 0.0;
    for i in 0..n {
        dists.clear();
        let xi = x.row(i);
        dists.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(xi, x.row(j)), j)),
        );
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
        let radius = kth.0;
        let tie_tol = 1e-12 * radius.max(1e-300);
        let (mut sum, mut count) = (0.0, 0usize);
        for &(d, j) in &dists {
            if d <= radius + tie_tol {
                sum += t[j];
                count += 1;
            }
        }
        let pred = sum / count as f64;
        sse += (t[i] - pred).powi(2);
    }
    let mse = sse / n as f64;
    Ok((1.0 - mse / var).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> SampleMatrix {
        let data = (0..n * d)
            .map(|_| StandardNormal.sample(rng))
            .map(|v: f64| v + shift)
            .collect();
        SampleMatrix::from_vec(n, d, data).unwrap()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn gram_examples() {
        let same = SampleMatrix::from_rows(&[[1.0, 2.0]; 3]).unwrap();
        let g = rbf_gram(&same, 0.7).unwrap();
        assert!(g.entries().iter().all(|&v| v == 1.0));

        let bw = 0.5;
        let pair = SampleMatrix::from_rows(&[[0.0], [bw * 2f64.sqrt()]]).unwrap();
        let g = rbf_gram(&pair, bw).unwrap();
        assert!((g.get(0, 1) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(g.get(0, 0), 1.0);

        let pts = SampleMatrix::column(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(median_heuristic(&pts), 1.0);
        assert_eq!(rbf_gram(&pts, 0.0), Err(StatsError::Bandwidth(0.0)));
        assert_eq!(rbf_gram(&pts, -1.0), Err(StatsError::Bandwidth(-1.0)));
    }

    #[test]
    fn median_falls_back_on_constant_data() {
        let c = SampleMatrix::column(&[3.0; 5]).unwrap();
        assert_eq!(median_heuristic(&c), 1.0);
        let even = SampleMatrix::column(&[0.0, 1.0, 3.0]).unwrap();
        // distances 1, 2, 3
        assert_eq!(median_heuristic(&even), 2.0);
        let four = SampleMatrix::column(&[0.0, 1.0, 3.0, 7.0]).unwrap();
        // distances 1, 3, 7, 2, 6, 4 -> median (3 + 4) / 2
        assert_eq!(median_heuristic(&four), 3.5);
    }

    #[test]
    fn hsic_examples() {
        let t = grid(20);
        let constant = SampleMatrix::column(&[2.0; 20]).unwrap();
        assert!(hsic(&constant, &t).unwrap().abs() < 1e-12);

        // Frozen from a direct numpy evaluation of tr(KHLH)/n² with
        // median-heuristic bandwidths on x = t = (0, 1/7, ..., 1).
        let t8: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let x = SampleMatrix::column(&t8).unwrap();
        let v = hsic(&x, &t8).unwrap();
        assert!((v - 0.071_879_778_450_411_96).abs() < 1e-12, "{v}");

        let small = SampleMatrix::column(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            hsic(&small, &[0.0, 1.0, 2.0]),
            Err(StatsError::TooFewSamples { needed: 4, got: 3 })
        );
    }

    #[test]
    fn hsic_symmetry_and_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = normal_matrix(&mut rng, 30, 2, 0.0);
        let tcol = normal_matrix(&mut rng, 30, 1, 0.0);
        let k = rbf_gram_median(&x);
        let l = rbf_gram_median(&tcol);
        assert!((hsic_from_grams(&k, &l) - hsic_from_grams(&l, &k)).abs() < 1e-10);

        let t: Vec<f64> = tcol.col_values(0);
        let mut idx: Vec<usize> = (0..30).collect();
        idx.shuffle(&mut rng);
        let xp = x.select_rows(&idx);
        let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        assert!((hsic(&x, &t).unwrap() - hsic(&xp, &tp).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn hsic_independent_statistic_inside_null_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = grid(200);
        let mut inside = 0;
        for trial in 0..100 {
            let x = normal_matrix(&mut rng, 200, 1, 0.0);
            let observed = hsic(&x, &t).unwrap();
            let permuter = HsicPermuter::new(&x, &t);
            let mut prng = ChaCha8Rng::seed_from_u64(trial);
            let mut perm: Vec<usize> = (0..200).collect();
            let mut null: Vec<f64> = (0..99)
                .map(|_| {
                    perm.shuffle(&mut prng);
                    permuter.permuted(&perm)
                })
                .collect();
            null.sort_by(f64::total_cmp);
            if observed >= null[2] && observed <= null[96] {
                inside += 1;
            }
        }
        assert!(inside >= 90, "{inside}");
    }

    #[test]
    fn hsic_test_detects_perfect_dependence() {
        let t = grid(50);
        let x = SampleMatrix::column(&t).unwrap();
        let r = hsic_test(&x, &t, 200, 1).unwrap();
        assert!(r.p_value <= 0.01, "{r:?}");
        assert!(hsic_test_rejects(&x, &t, 200, 0.01, 1).unwrap());

        let constant = SampleMatrix::column(&[1.0; 50]).unwrap();
        let r = hsic_test(&constant, &t, 100, 1).unwrap();
        assert!(r.p_value >= 0.5);
        assert!(!hsic_test_rejects(&constant, &t, 100, 0.05, 1).unwrap());
    }

    #[test]
    fn hsic_test_argument_errors() {
        let t = grid(7);
        let x = SampleMatrix::column(&t).unwrap();
        assert!(matches!(hsic_test(&x, &t, 100, 0), Err(StatsError::TooFewSamples { .. })));
        let t = grid(10);
        let x = SampleMatrix::column(&t).unwrap();
        assert_eq!(
            hsic_test(&x, &t, 49, 0),
            Err(StatsError::PermutationCount { needed: 50, got: 49 })
        );
    }

    #[test]
    fn early_stopping_matches_full_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = grid(40);
        for trial in 0..60 {
            let shift = if trial % 2 == 0 { 0.0 } else { 0.02 * trial as f64 };
            let data: Vec<f64> = t
                .iter()
                .map(|&ti| { let z: f64 = StandardNormal.sample(&mut rng); shift * ti * 10.0 + z })
                .collect();
            let x = SampleMatrix::column(&data).unwrap();
            for alpha in [0.01, 0.05, 0.2] {
                let full = hsic_test(&x, &t, 100, trial).unwrap();
                let fast = hsic_test_rejects(&x, &t, 100, alpha, trial).unwrap();
                assert_eq!(full.p_value < alpha, fast, "trial {trial} alpha {alpha}");
            }
        }
    }

    #[test]
    fn hsic_test_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let t = grid(30);
        let trials = 500;
        let mut rejections = 0;
        for trial in 0..trials {
            let x = normal_matrix(&mut rng, 30, 1, 0.0);
            if hsic_test_rejects(&x, &t, 100, 0.05, trial).unwrap() {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / trials as f64;
        assert!((rate - 0.05).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn mmd_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = normal_matrix(&mut rng, 30, 2, 0.0);
        let r = mmd2_test(&x, &x, 100, 0).unwrap();
        assert!(r.statistic.abs() < 1e-12);

        let a = normal_matrix(&mut rng, 100, 1, 0.0);
        let b = normal_matrix(&mut rng, 100, 1, 3.0);
        let r = mmd2_test(&a, &b, 200, 1).unwrap();
        assert!(r.p_value <= 0.01, "{r:?}");

        let swapped = mmd2_test(&b, &a, 200, 1).unwrap();
        assert!((swapped.statistic - r.statistic).abs() < 1e-12);
    }

    #[test]
    fn mmd_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trials = 500;
        let mut rejections = 0;
        for trial in 0..trials {
            let a = normal_matrix(&mut rng, 20, 1, 0.0);
            let b = normal_matrix(&mut rng, 20, 1, 0.0);
            if mmd2_test(&a, &b, 100, trial).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / trials as f64;
        assert!((rate - 0.05).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn hellinger_examples() {
        let h = [0.2, 0.3, 0.5];
        assert_eq!(hellinger(&h, &h).unwrap(), 0.0);
        assert!((hellinger(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]).unwrap() - 1.0).abs() < 1e-12);
        // sqrt(½((√0.5 − 1)² + 0.5)) evaluated by hand.
        let v = hellinger(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((v - 0.541_196_100_146_197).abs() < 1e-12, "{v}");
        assert_eq!(hellinger(&[1.0], &[0.5, 0.5]), Err(StatsError::BinMismatch(1, 2)));
    }

    #[test]
    fn hellinger_is_a_metric_on_random_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draw = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        for _ in 0..500 {
            let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let ab = hellinger(&a, &b).unwrap();
            assert!((ab - hellinger(&b, &a).unwrap()).abs() < 1e-15);
            assert!(ab <= hellinger(&a, &c).unwrap() + hellinger(&c, &b).unwrap() + 1e-10);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.0, 0.1, 0.5, 0.9, 1.0], 2, 0.0, 1.0);
        assert_eq!(h, vec![0.4, 0.6]);
        assert_eq!(histogram(&[2.0, 2.0], 3, 2.0, 2.0), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn mutual_information_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = grid(1000);
        let noise: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let independent = mutual_information(&noise, &t).unwrap();
        assert!(independent <= 0.1, "{independent}");

        let same = mutual_information(&t, &t).unwrap();
        assert!(same >= 1.5, "{same}");

        assert_eq!(mutual_information(&[4.0; 50], &grid(50)).unwrap(), 0.0);
        assert!(matches!(
            mutual_information(&[1.0; 10], &grid(10)),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn dependency_score_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = grid(1000);
        let x = SampleMatrix::column(&t).unwrap();
        assert!(time_dependency_score(&x, &t, 5).unwrap() >= 0.95);

        let noise = normal_matrix(&mut rng, 1000, 2, 0.0);
        assert!(time_dependency_score(&noise, &t, 5).unwrap() <= 0.1);

        let zeros = SampleMatrix::from_vec(100, 2, vec![0.0; 200]).unwrap();
        assert_eq!(time_dependency_score(&zeros, &grid(100), 5).unwrap(), 0.0);

        assert!(matches!(
            time_dependency_score(&x.select_rows(&[0, 1, 2]), &t[..3], 5),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn dependency_score_affine_time_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 300;
        let t = grid(n);
        let data: Vec<f64> = t
            .iter()
            .flat_map(|&ti| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [ti * 3.0 + a, b]
            })
            .collect();
        let x = SampleMatrix::from_vec(n, 2, data).unwrap();
        let base = time_dependency_score(&x, &t, 5).unwrap();
        let rescaled: Vec<f64> = t.iter().map(|v| 250.0 * v - 17.0).collect();
        assert!((base - time_dependency_score(&x, &rescaled, 5).unwrap()).abs() < 1e-10);
    }
}
