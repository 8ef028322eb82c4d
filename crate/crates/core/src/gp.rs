//! Exact Gaussian-process regression with a Matérn-3/2 kernel.
//!
//! The prior mean is zero. Hyperparameters are handled in log space when
//! fitted so positivity is automatic.

use crate::error::{contract, Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::{dist, Real};

/// Matérn kernel hyperparameters. The smoothness is fixed at ν = 3/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams<T> {
    lengthscale: T,
    outputscale: T,
    noise: T,
}

impl<T: Real> KernelParams<T> {
    /// Smoothness of the Matérn family member used throughout.
    pub const NU: f64 = 1.5;

    pub fn new(lengthscale: T, outputscale: T, noise: T) -> Result<Self> {
        if !(lengthscale > T::zero()) || !lengthscale.is_finite() {
            return Err(contract(format!(
                "lengthscale must be > 0, got {lengthscale}"
            )));
        }
        if !(outputscale > T::zero()) || !outputscale.is_finite() {
            return Err(contract(format!(
                "outputscale must be > 0, got {outputscale}"
            )));
        }
        if !(noise >= T::zero()) || !noise.is_finite() {
            return Err(contract(format!("noise must be >= 0, got {noise}")));
        }
        Ok(Self {
            lengthscale,
            outputscale,
            noise,
        })
    }

    /// ℓ = 0.1, σ_f² = 1, σ_n² = 1e-4.
    pub fn default_surface() -> Self {
        Self {
            lengthscale: T::of(0.1),
            outputscale: T::one(),
            noise: T::of(1e-4),
        }
    }

    pub fn lengthscale(&self) -> T {
        self.lengthscale
    }

    pub fn outputscale(&self) -> T {
        self.outputscale
    }

    pub fn noise(&self) -> T {
        self.noise
    }

    fn to_log(self) -> [T; 3] {
        [
            self.lengthscale.ln(),
            self.outputscale.ln(),
            self.noise.max(T::min_positive_value()).ln(),
        ]
    }

    fn from_log(theta: [T; 3]) -> Option<Self> {
        let p = Self {
            lengthscale: theta[0].exp(),
            outputscale: theta[1].exp(),
            noise: theta[2].exp(),
        };
        (p.lengthscale > T::zero()
            && p.outputscale > T::zero()
            && p.lengthscale.is_finite()
            && p.outputscale.is_finite()
            && p.noise.is_finite())
        .then_some(p)
    }

    /// Kernel value at distance `r` without argument checking.
    #[inline]
    pub fn covariance(&self, r: T) -> T {
        let a = T::of(3f64.sqrt()) * r / self.lengthscale;
        self.outputscale * (T::one() + a) * (-a).exp()
    }

    #[inline]
    pub fn covariance_between(&self, x: &[T], y: &[T]) -> T {
        self.covariance(dist(x, y))
    }
}

/// k(r) = σ_f² (1 + √3 r/ℓ) exp(−√3 r/ℓ).
pub fn matern32<T: Real>(r: T, p: &KernelParams<T>) -> Result<T> {
    if !(r >= T::zero()) {
        return Err(contract(format!("kernel distance must be >= 0, got {r}")));
    }
    Ok(p.covariance(r))
}

/// Labeled points in R^d, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    dim: usize,
    points: Vec<T>,
    labels: Vec<T>,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_points(dim: usize, points: &[Vec<T>], labels: &[T]) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(contract("points and labels differ in length"));
        }
        let mut set = Self::new(dim);
        for (p, y) in points.iter().zip(labels) {
            set.push(p, *y)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, point: &[T], label: T) -> Result<()> {
        if point.len() != self.dim {
            return Err(contract(format!(
                "point of dimension {} pushed into a {}-dimensional set",
                point.len(),
                self.dim
            )));
        }
        self.points.extend_from_slice(point);
        self.labels.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> T {
        self.labels[i]
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.points
            .chunks_exact(self.dim.max(1))
            .zip(self.labels.iter().copied())
    }

    /// Keeps entries whose mask bit is true.
    pub fn subset(&self, keep: &[bool]) -> Self {
        let mut out = Self::new(self.dim);
        for ((p, y), k) in self.iter().zip(keep) {
            if *k {
                out.points.extend_from_slice(p);
                out.labels.push(y);
            }
        }
        out
    }

    fn gram(&self, p: &KernelParams<T>, with_noise: bool) -> Vec<T> {
        let m = self.len();
        let mut k = vec![T::zero(); m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = p.covariance_between(self.point(i), self.point(j));
                k[i * m + j] = v;
                k[j * m + i] = v;
            }
            if with_noise {
                k[i * m + i] += p.noise;
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorStats<T> {
    pub mean: T,
    pub variance: T,
}

/// A GP conditioned on a training set: the Gram factor and weights are
/// computed once and reused for every query.
#[derive(Debug, Clone)]
pub struct GpModel<T> {
    train: TrainingSet<T>,
    params: KernelParams<T>,
    chol: Option<Cholesky<T>>,
    alpha: Vec<T>,
}

impl<T: Real> GpModel<T> {
    pub fn new(train: TrainingSet<T>, params: KernelParams<T>) -> Result<Self> {
        if train.is_empty() {
            return Ok(Self {
                train,
                params,
                chol: None,
                alpha: Vec::new(),
            });
        }
        let m = train.len();
        let k = train.gram(&params, true);
        let chol = Cholesky::factor(&k, m)?;
        let alpha = chol.solve(train.labels());
        Ok(Self {
            train,
            params,
            chol: Some(chol),
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn train(&self) -> &TrainingSet<T> {
        &self.train
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.train.dim() {
            return Err(contract(format!(
                "query of dimension {} against a {}-dimensional GP",
                x.len(),
                self.train.dim()
            )));
        }
        Ok(())
    }

    fn cross(&self, x: &[T]) -> Vec<T> {
        self.train
            .iter()
            .map(|(p, _)| self.params.covariance_between(p, x))
            .collect()
    }

    /// Posterior mean only; O(m).
    pub fn mean(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        Ok(self.mean_unchecked(x))
    }

    #[inline]
    pub(crate) fn mean_unchecked(&self, x: &[T]) -> T {
        let mut mu = T::zero();
        for ((p, _), a) in self.train.iter().zip(&self.alpha) {
            mu += self.params.covariance_between(p, x) * *a;
        }
        mu
    }

    /// Posterior mean and variance; variance is clamped at zero.
    pub fn posterior(&self, x: &[T]) -> Result<PosteriorStats<T>> {
        self.check_dim(x)?;
        Ok(self.posterior_unchecked(x))
    }

    pub(crate) fn posterior_unchecked(&self, x: &[T]) -> PosteriorStats<T> {
        let prior = self.params.outputscale;
        let Some(chol) = &self.chol else {
            return PosteriorStats {
                mean: T::zero(),
                variance: prior,
            };
        };
        let mut v = self.cross(x);
        let mean = v.iter().zip(&self.alpha).map(|(k, a)| *k * *a).sum();
        chol.forward_in_place(&mut v);
        let explained: T = v.iter().map(|x| *x * *x).sum();
        PosteriorStats {
            mean,
            variance: (prior - explained).max(T::zero()),
        }
    }
}

/// One-shot posterior query.
pub fn gp_posterior<T: Real>(
    train: &TrainingSet<T>,
    p: &KernelParams<T>,
    query: &[T],
) -> Result<PosteriorStats<T>> {
    GpModel::new(train.clone(), *p)?.posterior(query)
}

/// Log marginal likelihood and its gradient with respect to
/// (log ℓ, log σ_f², log σ_n²).
pub fn log_marginal_likelihood<T: Real>(
    train: &TrainingSet<T>,
    p: &KernelParams<T>,
) -> Result<(T, [T; 3])> {
    if train.is_empty() {
        return Err(contract("log marginal likelihood needs at least one point"));
    }
    let m = train.len();
    let ky = train.gram(p, true);
    let chol = Cholesky::factor(&ky, m)?;
    let alpha = chol.solve(train.labels());
    let half = T::of(0.5);
    let fit: T = train
        .labels()
        .iter()
        .zip(&alpha)
        .map(|(y, a)| *y * *a)
        .sum();
    let value = -half * fit - half * chol.log_det() - half * T::of_usize(m) * T::TAU().ln();

    // dL/dθ = ½ tr((ααᵀ − K_y⁻¹) ∂K_y/∂θ)
    let inv = chol.inverse();
    let sqrt3 = T::of(3f64.sqrt());
    let mut g = [T::zero(); 3];
    for i in 0..m {
        for j in 0..m {
            let w = alpha[i] * alpha[j] - inv[i * m + j];
            let r = dist(train.point(i), train.point(j));
            let a = sqrt3 * r / p.lengthscale;
            let e = (-a).exp();
            g[0] += w * p.outputscale * a * a * e;
            g[1] += w * p.outputscale * (T::one() + a) * e;
            if i == j {
                g[2] += w * p.noise;
            }
        }
    }
    for gi in &mut g {
        *gi *= half;
    }
    Ok((value, g))
}

/// Gradient-ascent settings for hyperparameter fitting in log space.
#[derive(Debug, Clone, Copy)]
pub struct HyperFit<T> {
    pub steps: usize,
    pub learning_rate: T,
    /// When false σ_n² is held at its initial value.
    pub fit_noise: bool,
    pub max_halvings: usize,
    /// Optional clamp on ℓ.
    pub lengthscale_bounds: Option<(T, T)>,
}

impl<T: Real> HyperFit<T> {
    pub fn new(steps: usize, learning_rate: T) -> Self {
        Self {
            steps,
            learning_rate,
            fit_noise: true,
            max_halvings: 10,
            lengthscale_bounds: None,
        }
    }

    /// Runs the ascent and returns the final parameters with the LML value
    /// after every accepted step (the first entry is the starting LML).
    pub fn run(&self, train: &TrainingSet<T>, p0: KernelParams<T>) -> (KernelParams<T>, Vec<T>) {
        let mut current = p0;
        let mut history = Vec::new();
        if self.steps == 0 || train.is_empty() {
            return (current, history);
        }
        let Ok((mut value, mut grad)) = log_marginal_likelihood(train, &current) else {
            return (current, history);
        };
        if !value.is_finite() {
            return (current, history);
        }
        history.push(value);
        'outer: for _ in 0..self.steps {
            let theta = current.to_log();
            let mut step = self.learning_rate;
            for _ in 0..=self.max_halvings {
                let mut next = theta;
                for k in 0..3 {
                    if k == 2 && !self.fit_noise {
                        continue;
                    }
                    next[k] += step * grad[k];
                }
                if let Some((lo, hi)) = self.lengthscale_bounds {
                    next[0] = next[0].max(lo.ln()).min(hi.ln());
                }
                let mut candidate = match KernelParams::from_log(next) {
                    Some(c) => c,
                    None => break 'outer,
                };
                if !self.fit_noise {
                    candidate.noise = current.noise;
                }
                match log_marginal_likelihood(train, &candidate) {
                    Ok((v, g)) if v.is_finite() => {
                        if v >= value {
                            current = candidate;
                            value = v;
                            grad = g;
                            history.push(v);
                            continue 'outer;
                        }
                    }
                    // an unfactorable proposal is treated as an overshoot
                    Err(Error::Solver(_)) => {}
                    Ok(_) | Err(_) => break 'outer,
                }
                step *= T::of(0.5);
            }
            // no improving step within the halving budget
            break;
        }
        (current, history)
    }
}

/// Gradient ascent on the log marginal likelihood over all three
/// hyperparameters.
pub fn fit_hyperparams<T: Real>(
    train: &TrainingSet<T>,
    p0: KernelParams<T>,
    steps: usize,
    lr: T,
) -> KernelParams<T> {
    HyperFit::new(steps, lr).run(train, p0).0
}
