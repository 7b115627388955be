use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DecomposeError, Decomposition};
use crate::matrix::{sq_dist, SampleMatrix};
use crate::sample::{feature_matrix, timestamps, TimedSample};

pub const KCURVE_MAX_ROUNDS: usize = 50;
pub const RIDGE: f64 = 1e-6;
const KMEANS_MAX_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KcurveConfig {
    pub k: usize,
    pub n_chunks: usize,
    /// Zero keeps every curve constant, which turns the fit into k-means.
    pub prototypes_per_curve: usize,
}

impl Default for KcurveConfig {
    fn default() -> Self {
        Self {
            k: 20,
            n_chunks: 20,
            prototypes_per_curve: 10,
        }
    }
}

/// Mean curve `μ(t) = bias + Σ_j w_j exp(−(t − c_j)² / 2h²)`.
///
/// Outside the time range it was fitted on, the curve is held at its value
/// on the nearest end of that range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfCurve {
    pub domain: [f64; 2],
    pub centers: Vec<f64>,
    pub width: f64,
    /// One row of `d` outputs per center.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl RbfCurve {
    fn constant(value: Vec<f64>) -> Self {
        Self {
            domain: [0.0, 0.0],
            centers: Vec::new(),
            width: 1.0,
            weights: Vec::new(),
            bias: value,
        }
    }

    fn activations(centers: &[f64], width: f64, t: f64) -> impl Iterator<Item = f64> + '_ {
        centers.iter().map(move |c| (-(t - c).powi(2) / (2.0 * width * width)).exp())
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        if self.centers.is_empty() {
            return;
        }
        let t = t.clamp(self.domain[0], self.domain[1]);
        for (phi, w) in Self::activations(&self.centers, self.width, t).zip(&self.weights) {
            for (o, wj) in out.iter_mut().zip(w) {
                *o += phi * wj;
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.bias.len()];
        self.eval_into(t, &mut out);
        out
    }

    fn penalty(&self) -> f64 {
        RIDGE * self.weights.iter().flatten().map(|w| w * w).sum::<f64>()
    }
}

/// `k` mean curves in feature space, indexed by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveModel {
    pub k: usize,
    pub dim: usize,
    pub curves: Vec<RbfCurve>,
    /// Curve index of each training sample.
    pub assignment: Vec<usize>,
    /// Ridge-penalized objective after every refit, one list per chunk.
    pub objective_trace: Vec<Vec<f64>>,
    /// Curves that lost all their samples and were re-seeded.
    pub reseeds: usize,
    /// Set when some chunk hit the round limit before assignments settled.
    pub convergence_warning: Option<String>,
}

impl CurveModel {
    /// Index of the curve closest to `x` at time `t` (lowest index on ties).
    pub fn nearest(&self, x: &[f64], t: f64) -> usize {
        nearest(&self.curves, x, t, &mut vec![0.0; self.dim]).0
    }
}

fn nearest(curves: &[RbfCurve], x: &[f64], t: f64, buf: &mut [f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in curves.iter().enumerate() {
        c.eval_into(t, buf);
        let d = sq_dist(x, buf);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn prototype_layout(p: usize, lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let range = hi - lo;
    match p {
        0 => (Vec::new(), 1.0),
        1 => (vec![(lo + hi) / 2.0], if range > 0.0 { range } else { 1.0 }),
        _ if range <= 0.0 => (vec![lo], 1.0),
        _ => {
            let spacing = range / (p - 1) as f64;
            ((0..p).map(|j| lo + spacing * j as f64).collect(), spacing)
        }
    }
}

/// Ridge fit of one curve to its assigned samples.
fn refit(x: &SampleMatrix, t: &[f64], members: &[usize], domain: [f64; 2], centers: &[f64], width: f64) -> RbfCurve {
    let d = x.n_cols();
    let p = centers.len();
    let mut gram = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut rhs = DMatrix::<f64>::zeros(p + 1, d);
    let mut phi = DVector::<f64>::zeros(p + 1);
    for &i in members {
        for (slot, a) in phi.iter_mut().zip(RbfCurve::activations(centers, width, t[i])) {
            *slot = a;
        }
        phi[p] = 1.0;
        gram.ger(1.0, &phi, &phi, 1.0);
        let row = x.row(i);
        for j in 0..=p {
            for (c, v) in row.iter().enumerate() {
                rhs[(j, c)] += phi[j] * v;
            }
        }
    }
    for j in 0..p {
        gram[(j, j)] += RIDGE;
    }
    let sol = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).unwrap_or_else(|| DMatrix::zeros(p + 1, d)),
    };
    RbfCurve {
        domain,
        centers: centers.to_vec(),
        width,
        weights: (0..p).map(|j| sol.row(j).iter().copied().collect()).collect(),
        bias: sol.row(p).iter().copied().collect(),
    }
}

/// k-means++ seeding followed by Lloyd rounds.
fn kmeans(x: &SampleMatrix, rows: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = vec![x.row(rows[rng.random_range(0..rows.len())]).to_vec()];
    let mut dist: Vec<f64> = rows.iter().map(|&i| sq_dist(x.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            dist.iter()
                .position(|&w| {
                    u -= w;
                    u < 0.0
                })
                .unwrap_or(rows.len() - 1)
        } else {
            rng.random_range(0..rows.len())
        };
        let c = x.row(rows[pick]).to_vec();
        for (dv, &i) in dist.iter_mut().zip(rows) {
            *dv = dv.min(sq_dist(x.row(i), &c));
        }
        centers.push(c);
    }
    let d = x.n_cols();
    let mut labels = vec![usize::MAX; rows.len()];
    for _ in 0..KMEANS_MAX_ROUNDS {
        let mut changed = false;
        for (l, &i) in labels.iter_mut().zip(rows) {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(x.row(i), &centers[a]).total_cmp(&sq_dist(x.row(i), &centers[b])))
                .unwrap();
            changed |= *l != best;
            *l = best;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (&l, &i) in labels.iter().zip(rows) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    centers
}

/// Fits `k` time-dependent mean curves.
///
/// Curves start as constant k-means centers of the first chunk. Chunks are
/// then added one at a time; after each addition, samples seen so far are
/// assigned to their nearest curve and every curve is refit to its samples,
/// until the assignment settles or the round limit is hit. Prototype
/// centers span the time range observed so far.
pub fn kcurve_fit(samples: &[TimedSample], cfg: &KcurveConfig, seed: u64) -> Result<CurveModel, DecomposeError> {
    let KcurveConfig {
        k,
        n_chunks,
        prototypes_per_curve: p,
    } = *cfg;
    if k == 0 || n_chunks == 0 {
        return Err(DecomposeError::Invalid("k and n_chunks must be at least 1".into()));
    }
    let needed = (k * p.max(1) * 3).max(k);
    if samples.len() < needed {
        return Err(DecomposeError::TooFewSamples {
            needed,
            got: samples.len(),
        });
    }
    if n_chunks > samples.len() {
        return Err(DecomposeError::Invalid(format!(
            "{n_chunks} chunks for {} samples",
            samples.len()
        )));
    }
    let x = feature_matrix(samples)?;
    let t = timestamps(samples);
    let (n, d) = (x.n_rows(), x.n_cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let first_end = n / n_chunks;
    let first: Vec<usize> = (0..first_end.max(k)).collect();
    let mut curves: Vec<RbfCurve> = kmeans(&x, &first, k, &mut rng).into_iter().map(RbfCurve::constant).collect();

    let mut assignment: Vec<usize> = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n_chunks);
    let mut reseeds = 0;
    let mut warning = None;
    let mut buf = vec![0.0; d];
    let mut dists: Vec<f64> = Vec::with_capacity(n);
    for chunk in 0..n_chunks {
        let end = if chunk + 1 == n_chunks { n } else { (chunk + 1) * n / n_chunks };
        let (lo, hi) = t[..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (centers, width) = prototype_layout(p, lo, hi);
        assignment.resize(end, usize::MAX);
        dists.resize(end, 0.0);
        let mut objectives = Vec::new();
        let mut settled = false;
        for _ in 0..KCURVE_MAX_ROUNDS {
            let mut changed = false;
            for i in 0..end {
                let (best, dist) = nearest(&curves, x.row(i), t[i], &mut buf);
                changed |= assignment[i] != best;
                assignment[i] = best;
                dists[i] = dist;
            }
            if !changed && !objectives.is_empty() {
                settled = true;
                break;
            }
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &a) in assignment.iter().enumerate() {
                members[a].push(i);
            }
            for (c, m) in members.iter().enumerate() {
                if m.is_empty() {
                    // Restart at the worst-fitted sample.
                    let far = (0..end).max_by(|&a, &b| dists[a].total_cmp(&dists[b])).unwrap();
                    curves[c] = RbfCurve::constant(x.row(far).to_vec());
                    dists[far] = 0.0;
                    reseeds += 1;
                } else {
                    curves[c] = refit(&x, &t, m, [lo, hi], &centers, width);
                }
            }
            let objective = (0..end)
                .map(|i| {
                    curves[assignment[i]].eval_into(t[i], &mut buf);
                    sq_dist(x.row(i), &buf)
                })
                .sum::<f64>()
                + curves.iter().map(RbfCurve::penalty).sum::<f64>();
            objectives.push(objective);
        }
        if !settled && warning.is_none() {
            warning = Some(format!(
                "chunk {chunk} still reassigning samples after {KCURVE_MAX_ROUNDS} rounds"
            ));
        }
        trace.push(objectives);
    }
    Ok(CurveModel {
        k,
        dim: d,
        curves,
        assignment,
        objective_trace: trace,
        reseeds,
        convergence_warning: warning,
    })
}

/// `X_D(x, t) = μ_i(t)` for the curve `i` nearest to each sample.
pub fn kcurve_transform(model: &CurveModel, samples: &[TimedSample]) -> Result<Decomposition, DecomposeError> {
    let x = feature_matrix(samples)?;
    if x.n_cols() != model.dim {
        return Err(DecomposeError::Dimension {
            expected: model.dim,
            got: x.n_cols(),
        });
    }
    let mut buf = vec![0.0; model.dim];
    let mut data = Vec::with_capacity(x.n_rows() * model.dim);
    for (row, s) in x.rows().zip(samples) {
        let (best, _) = nearest(&model.curves, row, s.timestamp, &mut buf);
        data.extend(model.curves[best].eval(s.timestamp));
    }
    let x_d = SampleMatrix::from_vec(x.n_rows(), model.dim, data)?;
    Decomposition::from_drift(&x, x_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg(k: usize, n_chunks: usize, p: usize) -> KcurveConfig {
        KcurveConfig {
            k,
            n_chunks,
            prototypes_per_curve: p,
        }
    }

    #[test]
    fn single_curve_tracks_linear_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigma = 0.1;
        let n = 1000;
        let samples: Vec<TimedSample> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let z: f64 = StandardNormal.sample(&mut rng);
                TimedSample::new(vec![t + sigma * z], t)
            })
            .collect();
        let model = kcurve_fit(&samples, &cfg(1, 5, 10), 1).unwrap();
        let per_prototype = n as f64 / 10.0;
        let bound = 5.0 * sigma / per_prototype.sqrt();
        for i in 0..=100 {
            let t = i as f64 / 100.0 * 0.999;
            let dev = (model.curves[0].eval(t)[0] - t).abs();
            assert!(dev <= bound, "t={t}: {dev} > {bound}");
        }
    }

    fn bands(seed: u64, n: usize) -> Vec<TimedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let y = if i % 2 == 0 { 0.0 } else { 10.0 };
                TimedSample::new(vec![i as f64 / n as f64, y + 0.3 * z], i as f64 / n as f64)
            })
            .collect()
    }

    #[test]
    fn parallel_bands_are_separated() {
        let samples = bands(2, 600);
        let model = kcurve_fit(&samples, &cfg(2, 4, 5), 2).unwrap();
        let mut levels: Vec<f64> = model.curves.iter().map(|c| c.eval(0.5)[1]).collect();
        levels.sort_by(f64::total_cmp);
        assert!(levels[0].abs() < 0.5 && (levels[1] - 10.0).abs() < 0.5, "{levels:?}");
        let low = model.nearest(&[0.5, 0.0], 0.5);
        let pure = (0..samples.len())
            .filter(|&i| (model.assignment[i] == low) == (i % 2 == 0))
            .count();
        assert!(pure as f64 >= 0.99 * samples.len() as f64);
    }

    #[test]
    fn constant_curves_reduce_to_kmeans() {
        let samples = bands(3, 300);
        let model = kcurve_fit(&samples, &cfg(2, 1, 0), 3).unwrap();
        let x = feature_matrix(&samples).unwrap();
        // Each constant curve sits at the mean of its cluster, and every sample
        // is at its nearest center: a Lloyd fixed point.
        for (c, curve) in model.curves.iter().enumerate() {
            let members: Vec<usize> = (0..samples.len()).filter(|&i| model.assignment[i] == c).collect();
            let mean = x.select_rows(&members).column_means();
            for (a, b) in curve.bias.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(model.nearest(&s.features, s.timestamp), model.assignment[i]);
        }
    }

    #[test]
    fn objective_never_increases_within_a_chunk() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<TimedSample> = (0..800)
            .map(|i| {
                let t = i as f64 / 800.0;
                let z: f64 = StandardNormal.sample(&mut rng);
                let arm = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                TimedSample::new(vec![arm * (6.0 * t).sin() + 0.2 * z, t], t)
            })
            .collect();
        let model = kcurve_fit(&samples, &cfg(3, 8, 6), 4).unwrap();
        for chunk in &model.objective_trace {
            for w in chunk.windows(2) {
                assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0), "{chunk:?}");
            }
        }
    }

    #[test]
    fn samples_on_their_curve_have_zero_residual() {
        let samples = bands(5, 300);
        let model = kcurve_fit(&samples, &cfg(2, 3, 4), 5).unwrap();
        let on_curve: Vec<TimedSample> = [0.1, 0.4, 0.9]
            .iter()
            .map(|&t| TimedSample::new(model.curves[0].eval(t), t))
            .collect();
        let dec = kcurve_transform(&model, &on_curve).unwrap();
        assert!(dec.residual.as_slice().iter().all(|v| v.abs() < 1e-12));
        let wrong = vec![TimedSample::new(vec![0.0], 0.0)];
        assert!(matches!(kcurve_transform(&model, &wrong), Err(DecomposeError::Dimension { .. })));
    }

    #[test]
    fn model_round_trips_through_json() {
        let model = kcurve_fit(&bands(6, 300), &cfg(2, 2, 3), 6).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: CurveModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn argument_checks() {
        let s = bands(7, 50);
        assert!(matches!(kcurve_fit(&s, &cfg(4, 2, 10), 0), Err(DecomposeError::TooFewSamples { .. })));
        assert!(matches!(kcurve_fit(&s, &cfg(0, 2, 1), 0), Err(DecomposeError::Invalid(_))));
        assert!(matches!(kcurve_fit(&s, &cfg(1, 60, 1), 0), Err(DecomposeError::Invalid(_))));
    }
}
