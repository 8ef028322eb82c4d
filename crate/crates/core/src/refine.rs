//! Dataset refinement: choose which active points to keep so the surface
//! satisfies the task constraints, preferring well-supported points. The
//! binary program is searched with CMA-ES plus a margin that keeps every
//! binary coordinate explorable.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintAux, ConstraintSet};
use crate::contact::{DataPoint, DatasetPair};
use crate::error::{contract, Result};
use crate::gp::KernelParams;
use crate::gpis::Gpis;
use crate::linalg::symmetric_eigen;
use crate::normal::inv_norm_cdf;
use crate::scalar::Real;

/// Penalty added to the objective when the constraints are violated.
pub const VIOLATION_PENALTY: f64 = 10.0;

/// `c = softmax_j(Σ_i K(D̄_j, D_i))`.
pub fn compute_weights<T: Real>(
    memory: &[Vec<T>],
    active: &[Vec<T>],
    params: &KernelParams<T>,
) -> Result<Vec<T>> {
    if active.is_empty() {
        return Err(contract("weights need a non-empty active set"));
    }
    let sums: Vec<T> = active
        .iter()
        .map(|a| memory.iter().map(|d| params.covariance_between(a, d)).sum())
        .collect();
    Ok(softmax(&sums))
}

pub fn softmax<T: Real>(v: &[T]) -> Vec<T> {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = v.iter().map(|x| (*x - max).exp()).collect();
    let total: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / total).collect()
}

type Feasibility<'a> = dyn Fn(&[bool]) -> Result<bool> + Sync + 'a;

/// The binary program over `ω ∈ {0,1}^{|D̄|}`: maximize `cᵀω` subject to
/// the feasibility predicate, with `fixed` entries pinned to 1.
pub struct RefinementProblem<'a, T> {
    weights: Vec<T>,
    fixed: Vec<bool>,
    feasible: Box<Feasibility<'a>>,
}

impl<'a, T: Real> RefinementProblem<'a, T> {
    pub fn new(
        weights: Vec<T>,
        fixed: Vec<bool>,
        feasible: impl Fn(&[bool]) -> Result<bool> + Sync + 'a,
    ) -> Result<Self> {
        if weights.len() != fixed.len() {
            return Err(contract("weights and fixed mask differ in length"));
        }
        Ok(Self {
            weights,
            fixed,
            feasible: Box::new(feasible),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    /// Indices that the optimizer is free to toggle.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|i| !self.fixed[*i]).collect()
    }

    pub fn score(&self, omega: &[bool]) -> T {
        self.weights
            .iter()
            .zip(omega)
            .filter(|(_, w)| **w)
            .map(|(c, _)| *c)
            .sum()
    }

    pub fn is_feasible(&self, omega: &[bool]) -> Result<bool> {
        self.check(omega)?;
        (self.feasible)(omega)
    }

    fn check(&self, omega: &[bool]) -> Result<()> {
        if omega.len() != self.len() {
            return Err(contract("ω length does not match the problem"));
        }
        if omega.iter().zip(&self.fixed).any(|(w, f)| *f && !*w) {
            return Err(contract("ω clears a fixed entry"));
        }
        Ok(())
    }

    /// `φ(ω) = −cᵀω + 10·(1 − h_all(ω))`.
    pub fn phi(&self, omega: &[bool]) -> Result<T> {
        let h = self.is_feasible(omega)?;
        Ok(self.objective(omega, h))
    }

    fn objective(&self, omega: &[bool], feasible: bool) -> T {
        let penalty = if feasible {
            T::zero()
        } else {
            T::of(VIOLATION_PENALTY)
        };
        -self.score(omega) + penalty
    }
}

/// Result of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmawmOutcome<T> {
    pub omega: Vec<bool>,
    /// `φ(ω*)`.
    pub phi: T,
    pub found_feasible: bool,
    pub generations: usize,
    /// Distinct binary candidates whose feasibility was evaluated.
    pub evaluations: usize,
}

/// Strategy parameters of a (μ/μ_w, λ)-CMA-ES with cumulative step-size
/// adaptation.
struct Strategy {
    dim: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(dim: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((mu as f64) + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu =
            (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Self {
            dim,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Mutable search distribution.
#[derive(Debug, Clone)]
pub struct CmawmState {
    pub mean: Vec<f64>,
    pub sigma: f64,
    /// Row-major covariance.
    pub cov: Vec<f64>,
    /// Minimum probability of sampling either binary value per coordinate.
    pub margin: f64,
    p_sigma: Vec<f64>,
    p_c: Vec<f64>,
}

pub const INITIAL_MEAN: f64 = 0.5;
pub const INITIAL_SIGMA: f64 = 0.25;
pub const THRESHOLD: f64 = 0.5;
const EIGEN_FLOOR: f64 = 1e-10;

impl CmawmState {
    pub fn new(dim: usize, population: usize) -> Self {
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = 1.0;
        }
        Self {
            mean: vec![INITIAL_MEAN; dim],
            sigma: INITIAL_SIGMA,
            cov,
            margin: 1.0 / (population * dim.max(1)) as f64,
            p_sigma: vec![0.0; dim],
            p_c: vec![0.0; dim],
        }
    }

    /// Probability that coordinate `i` samples the binary value opposite to
    /// the one its mean encodes.
    pub fn minority_probability(&self, i: usize) -> f64 {
        let n = self.mean.len();
        let sd = self.sigma * self.cov[i * n + i].sqrt();
        crate::normal::norm_cdf(-(self.mean[i] - THRESHOLD).abs() / sd)
    }

    /// Pulls each mean coordinate toward the threshold until the minority
    /// value keeps probability at least `margin`.
    fn apply_margin(&mut self) {
        let n = self.mean.len();
        let q = inv_norm_cdf(1.0 - self.margin).expect("margin lies in (0, 0.5)");
        for i in 0..n {
            let limit = q * self.sigma * self.cov[i * n + i].sqrt();
            let d = self.mean[i] - THRESHOLD;
            if d.abs() > limit {
                self.mean[i] = THRESHOLD + d.signum() * limit;
            }
        }
    }
}

/// Eigen-decomposition `C = B diag(D²) Bᵀ` with eigenvalues floored.
fn decompose(cov: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let (vals, vecs) = symmetric_eigen(cov, n);
    let d = vals.iter().map(|v| v.max(EIGEN_FLOOR).sqrt()).collect();
    (d, vecs)
}

fn binarize(problem_len: usize, free: &[usize], x: &[f64]) -> Vec<bool> {
    let mut omega = vec![true; problem_len];
    for (k, i) in free.iter().enumerate() {
        omega[*i] = x[k] > THRESHOLD;
    }
    omega
}

/// Searches for the feasible `ω` with the largest `cᵀω`. The all-ones
/// vector is checked first since it is the unconstrained optimum, and the
/// all-free-removed vector seeds the incumbent. The best feasible sample is
/// finally polished by single re-insertions and pairwise exchanges.
pub fn run_cmawm<T: Real>(
    problem: &RefinementProblem<'_, T>,
    generations: usize,
    population: usize,
    seed: u64,
) -> Result<CmawmOutcome<T>> {
    if generations < 1 {
        return Err(contract("need at least one generation"));
    }
    if population < 4 {
        return Err(contract("population must be at least 4"));
    }
    let ones = vec![true; problem.len()];
    let mut cache: HashMap<Vec<bool>, bool> = HashMap::new();
    let ones_ok = problem.is_feasible(&ones)?;
    cache.insert(ones.clone(), ones_ok);
    if ones_ok {
        return Ok(CmawmOutcome {
            phi: problem.objective(&ones, true),
            omega: ones,
            found_feasible: true,
            generations: 0,
            evaluations: 1,
        });
    }
    let free = problem.free_indices();
    let n = free.len();
    let mut best: Option<(Vec<bool>, T)> = None;
    if n == 0 {
        return Ok(CmawmOutcome {
            phi: problem.objective(&ones, false),
            omega: ones,
            found_feasible: false,
            generations: 0,
            evaluations: 1,
        });
    }

    // removing every free point is the other natural corner of the search
    let zeros = binarize(problem.len(), &free, &vec![0.0; n]);
    let zeros_ok = problem.is_feasible(&zeros)?;
    cache.insert(zeros.clone(), zeros_ok);
    if zeros_ok {
        best = Some((zeros.clone(), problem.score(&zeros)));
    }

    let strategy = Strategy::new(n, population);
    let mut state = CmawmState::new(n, population);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = 0;
    for generation in 0..generations {
        used = generation + 1;
        let (d, b) = decompose(&state.cov, n);
        let mut zs = Vec::with_capacity(population);
        let mut xs = Vec::with_capacity(population);
        for _ in 0..population {
            let z: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut y = vec![0.0; n];
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = (0..n).map(|c| b[r * n + c] * d[c] * z[c]).sum();
            }
            let x: Vec<f64> = state
                .mean
                .iter()
                .zip(&y)
                .map(|(m, yi)| m + state.sigma * yi)
                .collect();
            zs.push(y);
            xs.push(x);
        }
        let candidates: Vec<Vec<bool>> = xs
            .iter()
            .map(|x| binarize(problem.len(), &free, x))
            .collect();

        let mut pending: Vec<Vec<bool>> = Vec::new();
        for c in &candidates {
            if !cache.contains_key(c) && !pending.contains(c) {
                pending.push(c.clone());
            }
        }
        let results: Vec<Result<bool>> =
            pending.par_iter().map(|c| (problem.feasible)(c)).collect();
        for (c, r) in pending.into_iter().zip(results) {
            cache.insert(c, r?);
        }

        let mut phis = Vec::with_capacity(population);
        for c in &candidates {
            let feasible = cache[c];
            if feasible {
                let s = problem.score(c);
                if best.as_ref().is_none_or(|(_, bs)| s > *bs) {
                    best = Some((c.clone(), s));
                }
            }
            phis.push(problem.objective(c, feasible).as_f64());
        }

        let mut order: Vec<usize> = (0..population).collect();
        order.sort_by(|a, b| phis[*a].total_cmp(&phis[*b]));
        update(&strategy, &mut state, &order, &zs, (&d, &b), generation + 1);
        state.apply_margin();
    }

    if let Some((omega, score)) = best.as_mut() {
        let mut eval = |w: &[bool]| -> Result<bool> {
            if let Some(v) = cache.get(w) {
                return Ok(*v);
            }
            let v = (problem.feasible)(w)?;
            cache.insert(w.to_vec(), v);
            Ok(v)
        };
        polish(problem, &free, omega, population, &mut eval)?;
        *score = problem.score(omega);
    }

    Ok(match best {
        Some((omega, _)) => CmawmOutcome {
            phi: problem.objective(&omega, true),
            omega,
            found_feasible: true,
            generations: used,
            evaluations: cache.len(),
        },
        None => CmawmOutcome {
            phi: problem.objective(&ones, false),
            omega: ones,
            found_feasible: false,
            generations: used,
            evaluations: cache.len(),
        },
    })
}

/// Local improvement of a feasible `ω`: re-insert removed points heaviest
/// first, then try exchanging a removed point for a lighter kept one (at
/// most `swap_budget` exchange evaluations), then re-insert once more.
fn polish<T: Real>(
    problem: &RefinementProblem<'_, T>,
    free: &[usize],
    omega: &mut [bool],
    swap_budget: usize,
    eval: &mut impl FnMut(&[bool]) -> Result<bool>,
) -> Result<()> {
    let weight = |i: &usize| problem.weights[*i].as_f64();
    let reinsert =
        |omega: &mut [bool], eval: &mut dyn FnMut(&[bool]) -> Result<bool>| -> Result<()> {
            let mut removed: Vec<usize> = free.iter().copied().filter(|i| !omega[*i]).collect();
            removed.sort_by(|a, b| weight(b).total_cmp(&weight(a)));
            for i in removed {
                omega[i] = true;
                if !eval(omega)? {
                    omega[i] = false;
                }
            }
            Ok(())
        };
    reinsert(omega, eval)?;
    let mut budget = swap_budget;
    let mut removed: Vec<usize> = free.iter().copied().filter(|i| !omega[*i]).collect();
    removed.sort_by(|a, b| weight(b).total_cmp(&weight(a)));
    'outer: for i in removed {
        let mut kept: Vec<usize> = free
            .iter()
            .copied()
            .filter(|j| omega[*j] && weight(j) < weight(&i))
            .collect();
        kept.sort_by(|a, b| weight(a).total_cmp(&weight(b)));
        for j in kept {
            if budget == 0 {
                break 'outer;
            }
            budget -= 1;
            omega[i] = true;
            omega[j] = false;
            if eval(omega)? {
                continue 'outer;
            }
            omega[i] = false;
            omega[j] = true;
        }
    }
    reinsert(omega, eval)
}

/// Recombination, evolution paths, step size and covariance update.
/// `steps[k]` is `(x_k − m)/σ` for sample `k`.
fn update(
    s: &Strategy,
    state: &mut CmawmState,
    order: &[usize],
    steps: &[Vec<f64>],
    (d, b): (&[f64], &[f64]),
    generation: usize,
) {
    let n = s.dim;
    let mut y_w = vec![0.0; n];
    for (w, k) in s.weights.iter().zip(order.iter().take(s.mu)) {
        for (acc, v) in y_w.iter_mut().zip(&steps[*k]) {
            *acc += w * v;
        }
    }
    for (m, y) in state.mean.iter_mut().zip(&y_w) {
        *m += state.sigma * y;
    }

    // C^{-1/2} y_w through the eigenbasis used for sampling
    let mut proj = vec![0.0; n];
    for c in 0..n {
        let dot: f64 = (0..n).map(|r| b[r * n + c] * y_w[r]).sum();
        proj[c] = dot / d[c];
    }
    let mut inv_sqrt_y = vec![0.0; n];
    for (r, v) in inv_sqrt_y.iter_mut().enumerate() {
        *v = (0..n).map(|c| b[r * n + c] * proj[c]).sum();
    }
    let cs = s.c_sigma;
    let norm_factor = (cs * (2.0 - cs) * s.mu_eff).sqrt();
    for (p, v) in state.p_sigma.iter_mut().zip(&inv_sqrt_y) {
        *p = (1.0 - cs) * *p + norm_factor * v;
    }
    let ps_norm = state.p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h_sigma = ps_norm / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt() / s.chi_n
        < 1.4 + 2.0 / (n as f64 + 1.0);
    let cc = s.c_c;
    let hs = if h_sigma { 1.0 } else { 0.0 };
    let pc_factor = (cc * (2.0 - cc) * s.mu_eff).sqrt();
    for (p, y) in state.p_c.iter_mut().zip(&y_w) {
        *p = (1.0 - cc) * *p + hs * pc_factor * y;
    }
    let delta = (1.0 - hs) * cc * (2.0 - cc);
    let decay = 1.0 - s.c_1 - s.c_mu;
    for i in 0..n {
        for j in 0..n {
            let mut rank_mu = 0.0;
            for (w, k) in s.weights.iter().zip(order.iter().take(s.mu)) {
                rank_mu += w * steps[*k][i] * steps[*k][j];
            }
            let idx = i * n + j;
            state.cov[idx] = decay * state.cov[idx]
                + s.c_1 * (state.p_c[i] * state.p_c[j] + delta * state.cov[idx])
                + s.c_mu * rank_mu;
        }
    }
    state.sigma *= ((cs / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();
}

/// Structured record of one refinement call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRecord<T> {
    pub step: usize,
    pub active_before: usize,
    pub active_after_purge: usize,
    pub active_after: usize,
    pub free_variables: usize,
    pub generations: usize,
    pub found_feasible: bool,
    pub phi: T,
    pub removed: Vec<DataPoint<T>>,
}

/// Refinement budget and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub generations: usize,
    pub population: usize,
    pub seed: u64,
}

/// Purges local-minimum data, then removes the active interior points
/// selected by the optimizer. Memory keeps everything except the purged
/// local-minimum entries.
pub fn refine_contacts<T: Real>(
    dp: &mut DatasetPair<T>,
    base: &Gpis<T>,
    constraints: &ConstraintSet<T>,
    aux: &ConstraintAux<T>,
    cfg: RefineConfig,
) -> Result<RefinementRecord<T>> {
    let active_before = dp.active().len();
    dp.purge_local_minima();
    let active_after_purge = dp.active().len();
    let mut record = RefinementRecord {
        step: 0,
        active_before,
        active_after_purge,
        active_after: active_after_purge,
        free_variables: 0,
        generations: 0,
        found_feasible: false,
        phi: T::zero(),
        removed: Vec::new(),
    };
    if dp.active().is_empty() {
        return Ok(record);
    }
    let memory: Vec<Vec<T>> = dp.memory().iter().map(|d| d.point.clone()).collect();
    let active_points: Vec<Vec<T>> = dp.active().iter().map(|d| d.point.clone()).collect();
    let weights = compute_weights(&memory, &active_points, base.params())?;
    let fixed: Vec<bool> = dp
        .active()
        .iter()
        .map(|d| !d.is_interior() || d.is_goal_seed())
        .collect();
    let train = dp.active_training_set();
    let problem = RefinementProblem::new(weights, fixed, |omega: &[bool]| {
        constraints.h_all(base, &train, omega, aux)
    })?;
    record.free_variables = problem.free_indices().len();
    let out = run_cmawm(&problem, cfg.generations, cfg.population, cfg.seed)?;
    record.generations = out.generations;
    record.found_feasible = out.found_feasible;
    record.phi = out.phi;
    if out.found_feasible {
        record.removed = dp.retain_active(&out.omega)?;
    }
    record.active_after = dp.active().len();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_softmax_of_kernel_sums() {
        let p = KernelParams::new(0.5, 1.0, 1e-4).unwrap();
        let one = compute_weights(&[vec![0.0, 0.0]], &[vec![1.0, 1.0]], &p).unwrap();
        assert_eq!(one, vec![1.0]);
        let sym: Vec<f64> =
            compute_weights(&[vec![0.0, 0.0]], &[vec![1.0, 0.0], vec![-1.0, 0.0]], &p).unwrap();
        assert!((sym[0] - 0.5).abs() < 1e-15 && (sym[1] - 0.5).abs() < 1e-15);
        assert!(compute_weights::<f64>(&[], &[], &p).is_err());
    }

    #[test]
    fn phi_arithmetic() {
        let c = vec![0.25, 0.25, 0.5];
        let fixed = vec![true, false, false];
        let ok = RefinementProblem::new(c.clone(), fixed.clone(), |_: &[bool]| Ok(true)).unwrap();
        assert_eq!(ok.phi(&[true, true, true]).unwrap(), -1.0);
        assert_eq!(ok.phi(&[true, false, false]).unwrap(), -0.25);
        let bad = RefinementProblem::new(c, fixed, |_: &[bool]| Ok(false)).unwrap();
        assert_eq!(bad.phi(&[true, true, true]).unwrap(), 9.0);
        assert!(bad.phi(&[false, true, true]).is_err());
    }

    #[test]
    fn all_ones_when_unconstrained() {
        let p =
            RefinementProblem::new(vec![0.2; 5], vec![false; 5], |_: &[bool]| Ok(true)).unwrap();
        let out = run_cmawm(&p, 25, 20, 1).unwrap();
        assert!(out.found_feasible);
        assert!(out.omega.iter().all(|w| *w));
        assert_eq!(out.phi, -1.0);
    }

    #[test]
    fn infeasible_returns_ones() {
        let p =
            RefinementProblem::new(vec![0.2; 5], vec![false; 5], |_: &[bool]| Ok(false)).unwrap();
        let out = run_cmawm(&p, 5, 8, 1).unwrap();
        assert!(!out.found_feasible);
        assert!(out.omega.iter().all(|w| *w));
        assert_eq!(out.generations, 5);
    }

    #[test]
    fn margin_keeps_coordinates_explorable() {
        let mut s = CmawmState::new(4, 20);
        s.mean = vec![5.0, -3.0, 0.5, 0.6];
        s.apply_margin();
        for i in 0..4 {
            assert!(s.minority_probability(i) >= s.margin - 1e-12);
        }
        assert_eq!(s.mean[2], 0.5);
        assert_eq!(s.mean[3], 0.6);
    }

    #[test]
    fn deterministic_given_seed() {
        let c: Vec<f64> = softmax(&[0.3, 1.0, 0.2, 0.9, 0.5, 0.1]);
        let p = RefinementProblem::new(c, vec![false; 6], |w: &[bool]| {
            Ok(w.iter().filter(|x| **x).count() <= 3)
        })
        .unwrap();
        let a = run_cmawm(&p, 10, 12, 42).unwrap();
        let b = run_cmawm(&p, 10, 12, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.found_feasible);
        assert!((a.phi + p.score(&a.omega)).abs() < 1e-15);
    }
}
