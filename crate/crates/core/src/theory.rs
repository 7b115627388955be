//! Exact decision procedures for drift on finite time and data spaces.
//!
//! A [`FiniteDriftProcess`] is a row-stochastic matrix `kernel[t][x] = p_t({x})`
//! together with a time distribution `P_T`. On finite spaces every notion of
//! drift (plain drift, proper drift, model drift via alternating sets, a
//! change point, dependence between data and time) reduces to a finite
//! comparison, so the procedures below decide them by brute force.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for equality of probabilities.
pub const PROB_TOL: f64 = 1e-12;

/// Largest time space the subset enumeration accepts.
pub const MAX_ENUMERATED_TIMES: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("kernel is empty")]
    Empty,
    #[error("kernel has {rows} rows but the time distribution has {times} entries")]
    ShapeMismatch { rows: usize, times: usize },
    #[error("kernel row {row} has {got} entries, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("row {row} is not a probability vector (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("time distribution is not a probability vector (sum {sum})")]
    BadTimeDistribution { sum: f64 },
    #[error("time set has zero mass")]
    NullSet,
    #[error("time index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("subset enumeration is capped at {MAX_ENUMERATED_TIMES} time points, got {0}")]
    TooManyTimes(usize),
}

fn is_probability_vector(v: &[f64]) -> Result<(), f64> {
    let sum: f64 = v.iter().sum();
    let in_range = v.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p));
    if in_range && (sum - 1.0).abs() <= PROB_TOL {
        Ok(())
    } else {
        Err(sum)
    }
}

fn approx_eq(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// A Markov kernel from a finite time space to a finite data space, paired
/// with a distribution over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDriftProcess {
    kernel: Vec<Vec<f64>>,
    #[serde(rename = "P_T")]
    time_dist: Vec<f64>,
}

/// Joint law `p_t ⊗ P_T` as a `|T| × |X|` table.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub table: Vec<Vec<f64>>,
}

/// A set of time indices together with its mass under `P_T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSubset {
    members: BTreeSet<usize>,
}

impl TimeSubset {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        Self {
            members: members.into_iter().collect(),
        }
    }

    fn from_mask(mask: u32, n: usize) -> Self {
        Self::new((0..n).filter(|i| mask & (1 << i) != 0))
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.members.contains(&t)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn union(&self, other: &TimeSubset) -> TimeSubset {
        Self::new(self.members.union(&other.members).copied())
    }

    pub fn is_disjoint(&self, other: &TimeSubset) -> bool {
        self.members.is_disjoint(&other.members)
    }

    /// Complement within `{0, .., n-1}`.
    pub fn complement(&self, n: usize) -> TimeSubset {
        Self::new((0..n).filter(|t| !self.members.contains(t)))
    }

    pub fn mass(&self, proc: &FiniteDriftProcess) -> f64 {
        self.members.iter().map(|&t| proc.time_dist[t]).sum()
    }
}

impl JointDistribution {
    /// Marginal over the data space.
    pub fn data_marginal(&self) -> Vec<f64> {
        let width = self.table.first().map_or(0, Vec::len);
        let mut out = vec![0.0; width];
        for row in &self.table {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// Marginal over time.
    pub fn time_marginal(&self) -> Vec<f64> {
        self.table.iter().map(|row| row.iter().sum()).collect()
    }

    /// True when the table equals the outer product of its marginals.
    pub fn is_product(&self, tol: f64) -> bool {
        let px = self.data_marginal();
        let pt = self.time_marginal();
        self.table
            .iter()
            .zip(&pt)
            .all(|(row, &w)| row.iter().zip(&px).all(|(&j, &m)| (j - w * m).abs() <= tol))
    }

    /// Mutual information between data and time in nats.
    pub fn mutual_information(&self) -> f64 {
        let px = self.data_marginal();
        let pt = self.time_marginal();
        let mut mi = 0.0;
        for (row, &w) in self.table.iter().zip(&pt) {
            for (&j, &m) in row.iter().zip(&px) {
                if j > 0.0 {
                    mi += j * (j / (w * m)).ln();
                }
            }
        }
        mi.max(0.0)
    }
}

impl FiniteDriftProcess {
    pub fn new(time_dist: Vec<f64>, kernel: Vec<Vec<f64>>) -> Result<Self, TheoryError> {
        let proc = Self { kernel, time_dist };
        proc.validate()?;
        Ok(proc)
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        if self.kernel.is_empty() || self.kernel[0].is_empty() {
            return Err(TheoryError::Empty);
        }
        if self.kernel.len() != self.time_dist.len() {
            return Err(TheoryError::ShapeMismatch {
                rows: self.kernel.len(),
                times: self.time_dist.len(),
            });
        }
        let width = self.kernel[0].len();
        for (row, probs) in self.kernel.iter().enumerate() {
            if probs.len() != width {
                return Err(TheoryError::RaggedRow {
                    row,
                    got: probs.len(),
                    expected: width,
                });
            }
            is_probability_vector(probs).map_err(|sum| TheoryError::NotStochastic { row, sum })?;
        }
        is_probability_vector(&self.time_dist)
            .map_err(|sum| TheoryError::BadTimeDistribution { sum })
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let proc: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        proc.validate().map_err(|e| e.to_string())?;
        Ok(proc)
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn time_dist(&self) -> &[f64] {
        &self.time_dist
    }

    pub fn n_times(&self) -> usize {
        self.time_dist.len()
    }

    pub fn n_values(&self) -> usize {
        self.kernel[0].len()
    }

    fn non_null_times(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_times()).filter(|&t| self.time_dist[t] > 0.0)
    }

    pub fn joint(&self) -> JointDistribution {
        joint_of(self)
    }
}

pub fn joint_of(proc: &FiniteDriftProcess) -> JointDistribution {
    let table = proc
        .kernel
        .iter()
        .zip(&proc.time_dist)
        .map(|(row, &w)| row.iter().map(|p| w * p).collect())
        .collect();
    JointDistribution { table }
}

/// Drift: two non-null time points carry different distributions.
///
/// For finite `T`, `(P_T × P_T)`-almost-sure equality of `p_t` and `p_s` is
/// equality on every pair of non-null indices.
pub fn has_drift(proc: &FiniteDriftProcess) -> bool {
    let support: Vec<usize> = proc.non_null_times().collect();
    support.iter().enumerate().any(|(i, &t)| {
        support[i + 1..]
            .iter()
            .any(|&s| !approx_eq(&proc.kernel[t], &proc.kernel[s], PROB_TOL))
    })
}

/// The time-marginal `P_X = Σ_t P_T(t) p_t` when the process is constant.
pub fn constant_part(proc: &FiniteDriftProcess) -> Option<Vec<f64>> {
    let all = TimeSubset::new(0..proc.n_times());
    let px = model_over(proc, &all).ok()?;
    proc.non_null_times()
        .all(|t| approx_eq(&proc.kernel[t], &px, PROB_TOL))
        .then_some(px)
}

/// The time-invariant model `p_A` of the process over the time set `A`.
pub fn model_over(proc: &FiniteDriftProcess, a: &TimeSubset) -> Result<Vec<f64>, TheoryError> {
    if let Some(t) = a.members().find(|&t| t >= proc.n_times()) {
        return Err(TheoryError::IndexOutOfRange(t));
    }
    let mass = a.mass(proc);
    if mass <= 0.0 {
        return Err(TheoryError::NullSet);
    }
    let mut out = vec![0.0; proc.n_values()];
    for t in a.members() {
        let w = proc.time_dist[t] / mass;
        for (o, p) in out.iter_mut().zip(&proc.kernel[t]) {
            *o += w * p;
        }
    }
    Ok(out)
}

/// Proper drift: the joint law differs from the product of its marginals.
pub fn has_proper_drift(proc: &FiniteDriftProcess) -> bool {
    !joint_of(proc).is_product(PROB_TOL)
}

/// Searches every time subset `A` for a pair of alternating sets, i.e.
/// non-null `A` and `A^C` with `p_A ≠ p_{A^C}`.
pub fn find_alternating_pair(
    proc: &FiniteDriftProcess,
) -> Result<Option<(TimeSubset, TimeSubset)>, TheoryError> {
    let n = proc.n_times();
    if n > MAX_ENUMERATED_TIMES {
        return Err(TheoryError::TooManyTimes(n));
    }
    for mask in 1..(1u32 << n) - 1 {
        let a = TimeSubset::from_mask(mask, n);
        let b = a.complement(n);
        let (Ok(pa), Ok(pb)) = (model_over(proc, &a), model_over(proc, &b)) else {
            continue;
        };
        if !approx_eq(&pa, &pb, PROB_TOL) {
            return Ok(Some((a, b)));
        }
    }
    Ok(None)
}

/// Total variation distance between two distributions on the same space.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// A time threshold `t0` whose models `p_{t<t0}` and `p_{t≥t0}` differ.
///
/// Among all thresholds with both halves non-null and differing models, the
/// one with the largest total variation gap is returned (earliest on ties).
pub fn change_point(proc: &FiniteDriftProcess) -> Option<usize> {
    let n = proc.n_times();
    let mut best: Option<(usize, f64)> = None;
    for t0 in 1..n {
        let before = model_over(proc, &TimeSubset::new(0..t0));
        let after = model_over(proc, &TimeSubset::new(t0..n));
        let (Ok(pa), Ok(pb)) = (before, after) else {
            continue;
        };
        if approx_eq(&pa, &pb, PROB_TOL) {
            continue;
        }
        let gap = total_variation(&pa, &pb);
        if best.is_none_or(|(_, g)| gap > g + PROB_TOL) {
            best = Some((t0, gap));
        }
    }
    best.map(|(t0, _)| t0)
}

/// Dependency drift: data and time are dependent under the joint law.
///
/// Decided through conditionals: `X` is independent of `T` iff
/// `P(X | T = t)` equals the data marginal for every non-null `t`.
pub fn has_dependency_drift(proc: &FiniteDriftProcess) -> bool {
    let joint = joint_of(proc);
    let px = joint.data_marginal();
    joint
        .table
        .iter()
        .zip(joint.time_marginal())
        .filter(|(_, w)| *w > 0.0)
        .any(|(row, w)| {
            let conditional: Vec<f64> = row.iter().map(|j| j / w).collect();
            !approx_eq(&conditional, &px, PROB_TOL)
        })
}

/// Shape of a randomly generated process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Every row drawn independently.
    Free,
    /// One row shared by all time points.
    Constant,
    /// Rows drawn from a pool of two distributions, so models of unions can coincide.
    Pooled,
}

fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / sum).collect()
}

/// Draws a random process with flat-Dirichlet rows and time distribution.
/// Half of the instances get one time coordinate zeroed to create a null set.
pub fn random_process<R: Rng + ?Sized>(
    rng: &mut R,
    n_times: usize,
    n_values: usize,
    kind: InstanceKind,
) -> FiniteDriftProcess {
    let mut time_dist = flat_dirichlet(rng, n_times);
    if n_times > 1 && rng.random_bool(0.5) {
        let zero = rng.random_range(0..n_times);
        time_dist[zero] = 0.0;
        let sum: f64 = time_dist.iter().sum();
        time_dist.iter_mut().for_each(|p| *p /= sum);
    }
    let kernel = match kind {
        InstanceKind::Free => (0..n_times).map(|_| flat_dirichlet(rng, n_values)).collect(),
        InstanceKind::Constant => vec![flat_dirichlet(rng, n_values); n_times],
        InstanceKind::Pooled => {
            let pool = [flat_dirichlet(rng, n_values), flat_dirichlet(rng, n_values)];
            (0..n_times)
                .map(|_| pool[rng.random_range(0..2)].clone())
                .collect()
        }
    };
    FiniteDriftProcess { kernel, time_dist }
}

/// Outcome of one named property over a batch of instances.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Runs the randomized equivalence suite over `instances` processes with
/// `|T|, |X| ≤ max_dim`.
pub fn equivalence_suite<R: Rng + ?Sized>(
    rng: &mut R,
    instances: usize,
    max_dim: usize,
) -> Vec<PropertyReport> {
    let names = [
        "drift iff not constant",
        "proper drift iff alternating sets",
        "proper drift iff change point",
        "proper drift iff dependency drift",
        "finite time: drift iff proper drift",
        "proper drift implies drift",
        "model covering",
        "Bayes merge of disjoint models",
    ];
    let mut reports: Vec<PropertyReport> = names
        .iter()
        .map(|&name| PropertyReport {
            name,
            checked: 0,
            violations: 0,
        })
        .collect();
    let mut record = |idx: usize, ok: bool| {
        reports[idx].checked += 1;
        if !ok {
            reports[idx].violations += 1;
        }
    };

    for i in 0..instances {
        let kind = match i % 3 {
            0 => InstanceKind::Free,
            1 => InstanceKind::Constant,
            _ => InstanceKind::Pooled,
        };
        let n_times = rng.random_range(1..=max_dim);
        let n_values = rng.random_range(1..=max_dim);
        let proc = random_process(rng, n_times, n_values, kind);

        let drift = has_drift(&proc);
        let proper = has_proper_drift(&proc);
        let alternating = find_alternating_pair(&proc)
            .expect("max_dim is within the enumeration cap")
            .is_some();
        let cut = change_point(&proc).is_some();
        let dependent = has_dependency_drift(&proc);

        record(0, drift == constant_part(&proc).is_none());
        record(1, proper == alternating);
        record(2, proper == cut);
        record(3, proper == dependent);
        record(4, drift == proper);
        record(5, !proper || drift);

        for (ok_cover, ok_merge) in disjoint_set_checks(&proc) {
            if let Some(ok) = ok_cover {
                record(6, ok);
            }
            record(7, ok_merge);
        }
    }
    reports
}

/// For every pair and triple of disjoint non-null time sets, checks the
/// Bayes merge `p_{A∪B} = (P(A)p_A + P(B)p_B)/(P(A)+P(B))` and, where its
/// premise holds, the model covering implication.
fn disjoint_set_checks(proc: &FiniteDriftProcess) -> Vec<(Option<bool>, bool)> {
    let n = proc.n_times();
    let full = 1u32 << n;
    let mut out = Vec::new();
    let non_null = |mask: u32| TimeSubset::from_mask(mask, n).mass(proc) > 0.0;
    for a in 1..full {
        if !non_null(a) {
            continue;
        }
        for b in 1..full {
            if a & b != 0 || !non_null(b) {
                continue;
            }
            let sa = TimeSubset::from_mask(a, n);
            let sb = TimeSubset::from_mask(b, n);
            let pa = model_over(proc, &sa).unwrap();
            let pb = model_over(proc, &sb).unwrap();
            let (ma, mb) = (sa.mass(proc), sb.mass(proc));
            let merged: Vec<f64> = pa
                .iter()
                .zip(&pb)
                .map(|(x, y)| (ma * x + mb * y) / (ma + mb))
                .collect();
            let direct = model_over(proc, &sa.union(&sb)).unwrap();
            let merge_ok = approx_eq(&merged, &direct, PROB_TOL);

            // Triples: C drawn from the remaining indices.
            let rest = (full - 1) & !(a | b);
            let mut c = rest;
            let mut cover = None;
            while c != 0 {
                if non_null(c) {
                    let sc = TimeSubset::from_mask(c, n);
                    let pc = model_over(proc, &sc).unwrap();
                    let p_bc = model_over(proc, &sb.union(&sc)).unwrap();
                    let p_ac = model_over(proc, &sa.union(&sc)).unwrap();
                    if approx_eq(&pa, &p_bc, 1e-10) && approx_eq(&p_ac, &pb, 1e-10) {
                        let ok = approx_eq(&pa, &pb, 1e-10) && approx_eq(&pb, &pc, 1e-10);
                        cover = Some(cover.unwrap_or(true) && ok);
                    }
                }
                c = (c - 1) & rest;
            }
            out.push((cover, merge_ok));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn proc(pt: &[f64], rows: &[&[f64]]) -> FiniteDriftProcess {
        FiniteDriftProcess::new(pt.to_vec(), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn joint_is_entrywise_product() {
        let p = proc(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(joint_of(&p).table, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);

        let p = proc(&[1.0, 0.0], &[&[0.3, 0.7], &[0.9, 0.1]]);
        assert_eq!(joint_of(&p).table[1], vec![0.0, 0.0]);

        let p = proc(&[0.25, 0.75], &[&[0.4, 0.6], &[0.4, 0.6]]);
        let j = joint_of(&p);
        let expected = [[0.1, 0.15], [0.3, 0.45]];
        for (row, exp) in j.table.iter().zip(expected) {
            for (a, b) in row.iter().zip(exp) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        assert!(approx_eq(&j.time_marginal(), &[0.25, 0.75], 1e-15));
    }

    #[test]
    fn drift_ignores_null_times() {
        assert!(!has_drift(&proc(&[0.5, 0.5], &[&[0.4, 0.6], &[0.4, 0.6]])));
        assert!(has_drift(&proc(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]])));
        assert!(!has_drift(&proc(&[1.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]])));
    }

    #[test]
    fn constant_part_uses_non_null_support() {
        let c = constant_part(&proc(&[0.5, 0.5], &[&[0.4, 0.6], &[0.4, 0.6]])).unwrap();
        assert!(approx_eq(&c, &[0.4, 0.6], 1e-15));
        assert!(constant_part(&proc(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]])).is_none());
        let c = constant_part(&proc(&[1.0, 0.0], &[&[0.4, 0.6], &[0.0, 1.0]])).unwrap();
        assert!(approx_eq(&c, &[0.4, 0.6], 1e-15));
    }

    #[test]
    fn model_over_subsets() {
        let p = proc(
            &[0.2, 0.3, 0.5],
            &[&[0.1, 0.9], &[0.5, 0.5], &[0.8, 0.2]],
        );
        let all = model_over(&p, &TimeSubset::new(0..3)).unwrap();
        // 0.2*0.1 + 0.3*0.5 + 0.5*0.8 = 0.57
        assert!(approx_eq(&all, &[0.57, 0.43], 1e-15));
        let single = model_over(&p, &TimeSubset::new([1])).unwrap();
        assert!(approx_eq(&single, &[0.5, 0.5], 1e-15));

        let a = TimeSubset::new([0]);
        let b = TimeSubset::new([2]);
        let (pa, pb) = (model_over(&p, &a).unwrap(), model_over(&p, &b).unwrap());
        let (ma, mb) = (a.mass(&p), b.mass(&p));
        let merged: Vec<f64> = pa
            .iter()
            .zip(&pb)
            .map(|(x, y)| (ma * x + mb * y) / (ma + mb))
            .collect();
        assert!(approx_eq(&merged, &model_over(&p, &a.union(&b)).unwrap(), 1e-12));
    }

    #[test]
    fn model_over_null_set_fails() {
        let p = proc(&[1.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(model_over(&p, &TimeSubset::new([1])), Err(TheoryError::NullSet));
        assert_eq!(model_over(&p, &TimeSubset::new([])), Err(TheoryError::NullSet));
        assert_eq!(
            model_over(&p, &TimeSubset::new([4])),
            Err(TheoryError::IndexOutOfRange(4))
        );
    }

    #[test]
    fn proper_drift_examples() {
        assert!(!has_proper_drift(&proc(&[0.3, 0.7], &[&[0.4, 0.6], &[0.4, 0.6]])));
        // Outer product of marginals (0.5,0.5)x(0.5,0.5) is 0.25 everywhere,
        // the joint is diag(0.5,0.5).
        assert!(has_proper_drift(&proc(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]])));
        assert!(!has_proper_drift(&proc(&[1.0, 0.0], &[&[0.2, 0.8], &[0.9, 0.1]])));
    }

    #[test]
    fn alternating_pairs() {
        let c = proc(&[0.5, 0.5], &[&[0.4, 0.6], &[0.4, 0.6]]);
        assert_eq!(find_alternating_pair(&c).unwrap(), None);

        let p = proc(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let (a, b) = find_alternating_pair(&p).unwrap().unwrap();
        assert_eq!(a, TimeSubset::new([0]));
        assert_eq!(b, TimeSubset::new([1]));

        let third = proc(
            &[0.3, 0.3, 0.4],
            &[&[0.5, 0.5], &[0.5, 0.5], &[0.1, 0.9]],
        );
        let a = TimeSubset::new([2]);
        let pa = model_over(&third, &a).unwrap();
        let pc = model_over(&third, &a.complement(3)).unwrap();
        assert!(!approx_eq(&pa, &pc, PROB_TOL));
        let (found, rest) = find_alternating_pair(&third).unwrap().unwrap();
        assert_eq!(found.complement(3), rest);
    }

    #[test]
    fn enumeration_is_capped() {
        let n = MAX_ENUMERATED_TIMES + 1;
        let p = FiniteDriftProcess::new(vec![1.0 / n as f64; n], vec![vec![1.0]; n]);
        // Equal weights of 1/13 do not sum to exactly one in floating point,
        // but the validation tolerance absorbs that.
        let p = p.unwrap();
        assert_eq!(find_alternating_pair(&p), Err(TheoryError::TooManyTimes(n)));
    }

    #[test]
    fn change_points() {
        let c = proc(&[0.5, 0.5], &[&[0.4, 0.6], &[0.4, 0.6]]);
        assert_eq!(change_point(&c), None);
        let abrupt = proc(
            &[0.25; 4],
            &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]],
        );
        assert_eq!(change_point(&abrupt), Some(2));
        let third = 1.0 / 3.0;
        let bump = FiniteDriftProcess::new(
            vec![third, third, 1.0 - 2.0 * third],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        // t0 = 1: (1,0) vs (0.5,0.5); t0 = 2: (0.5,0.5) vs (1,0). Both differ.
        assert_eq!(change_point(&bump), Some(1));
    }

    #[test]
    fn dependency_drift_examples() {
        assert!(!has_dependency_drift(&proc(&[0.5, 0.5], &[&[0.4, 0.6], &[0.4, 0.6]])));
        let p = proc(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(has_dependency_drift(&p));
        assert!((joint_of(&p).mutual_information() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_processes() {
        assert!(matches!(
            FiniteDriftProcess::new(vec![0.5, 0.5], vec![vec![0.5, 0.6], vec![1.0, 0.0]]),
            Err(TheoryError::NotStochastic { row: 0, .. })
        ));
        assert!(matches!(
            FiniteDriftProcess::new(vec![0.5, 0.6], vec![vec![1.0], vec![1.0]]),
            Err(TheoryError::BadTimeDistribution { .. })
        ));
        assert!(matches!(
            FiniteDriftProcess::new(vec![1.0], vec![vec![1.0], vec![1.0]]),
            Err(TheoryError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn json_fixture_round_trip() {
        let p = FiniteDriftProcess::from_json(r#"{"P_T": [0.5, 0.5], "kernel": [[1, 0], [0, 1]]}"#)
            .unwrap();
        assert!(has_proper_drift(&p));
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(FiniteDriftProcess::from_json(&text).unwrap(), p);
        assert!(FiniteDriftProcess::from_json(r#"{"P_T": [1.0], "kernel": [[0.5]]}"#).is_err());
    }

    #[test]
    fn random_suite_has_no_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reports = equivalence_suite(&mut rng, 300, 5);
        for r in &reports {
            assert!(r.passed(), "{} violated {} times", r.name, r.violations);
            assert!(r.checked > 0, "{} never exercised", r.name);
        }
    }

    #[test]
    fn generator_exercises_both_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [0usize; 2];
        let mut null_sets = 0;
        for i in 0..200 {
            let kind = [InstanceKind::Free, InstanceKind::Constant][i % 2];
            let p = random_process(&mut rng, 4, 3, kind);
            p.validate().unwrap();
            seen[has_proper_drift(&p) as usize] += 1;
            null_sets += p.time_dist().iter().any(|&w| w == 0.0) as usize;
        }
        assert!(seen[0] > 50 && seen[1] > 50, "{seen:?}");
        assert!(null_sets > 60 && null_sets < 140);
    }
}
