//! The environment estimate: a GP implicit surface over the active dataset.
//!
//! Sign convention: negative mean is interior, positive is exterior, and the
//! zero level set is the estimated obstacle boundary. A mean of exactly zero
//! counts as occupied.

use std::fmt;
use std::sync::Arc;

use crate::error::{contract, Result};
use crate::gp::{GpModel, KernelParams, PosteriorStats, TrainingSet};
use crate::grid::{GridSpec, OccupancyGrid};
use crate::normal::inv_norm_cdf;
use crate::scalar::{dist2, Real};

/// Points closer than this are treated as the same training point.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

/// Mean reported for points the sensor sees as free space.
pub const FREE_SPACE_MEAN: f64 = 1.0;

/// Answers whether a point is visibly in free space.
pub trait FreeSpaceOracle<T>: Send + Sync {
    fn visibly_free(&self, x: &[T]) -> bool;
}

/// Read-only view of an obstacle estimate, as consumed by the controller.
pub trait SurfaceEstimate<T: Real>: Sync {
    /// Post-processed mean.
    fn mean(&self, x: &[T]) -> T;

    /// Posterior variance before any post-processing.
    fn raw_variance(&self, x: &[T]) -> T;

    fn mean_and_raw_variance(&self, x: &[T]) -> (T, T) {
        (self.mean(x), self.raw_variance(x))
    }
}

/// Immutable GPIS; every update returns a new value.
#[derive(Clone)]
pub struct Gpis<T> {
    model: GpModel<T>,
    goal_seeds: Vec<Vec<T>>,
    oracle: Option<Arc<dyn FreeSpaceOracle<T>>>,
}

impl<T: Real> fmt::Debug for Gpis<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gpis")
            .field("points", &self.model.train().len())
            .field("params", self.model.params())
            .field("goal_seeds", &self.goal_seeds.len())
            .field("oracle", &self.oracle.is_some())
            .finish()
    }
}

impl<T: Real> Gpis<T> {
    /// An empty surface (prior everywhere).
    pub fn new(dim: usize, params: KernelParams<T>) -> Self {
        Self {
            model: GpModel::new(TrainingSet::new(dim), params).expect("empty GP always factors"),
            goal_seeds: Vec::new(),
            oracle: None,
        }
    }

    pub fn with_oracle(mut self, oracle: Option<Arc<dyn FreeSpaceOracle<T>>>) -> Self {
        self.oracle = oracle;
        self
    }

    /// The same surface configuration conditioned on a different active set.
    /// The goal seeds are carried along as bookkeeping; callers pass sets that
    /// already contain them.
    pub fn conditioned_on(&self, active: TrainingSet<T>) -> Result<Self> {
        self.conditioned_on_with(active, *self.model.params())
    }

    pub fn conditioned_on_with(
        &self,
        active: TrainingSet<T>,
        params: KernelParams<T>,
    ) -> Result<Self> {
        Ok(Self {
            model: GpModel::new(active, params)?,
            goal_seeds: self.goal_seeds.clone(),
            oracle: self.oracle.clone(),
        })
    }

    /// Adds each goal point with label +1. Re-seeding an existing point
    /// overwrites its label instead of duplicating it.
    pub fn seed_with_goal(&self, goals: &[Vec<T>]) -> Result<Self> {
        if goals.is_empty() {
            return Err(contract("goal set must be non-empty"));
        }
        let dim = self.dim();
        let tol = T::of(DEDUP_TOLERANCE);
        let mut points: Vec<Vec<T>> = self.active().iter().map(|(p, _)| p.to_vec()).collect();
        let mut labels: Vec<T> = self.active().labels().to_vec();
        let mut seeds = self.goal_seeds.clone();
        for g in goals {
            if g.len() != dim {
                return Err(contract("goal point dimension mismatch"));
            }
            match points.iter().position(|p| dist2(p, g) <= tol * tol) {
                Some(i) => labels[i] = T::one(),
                None => {
                    points.push(g.clone());
                    labels.push(T::one());
                }
            }
            if !seeds.iter().any(|s| dist2(s, g) <= tol * tol) {
                seeds.push(g.clone());
            }
        }
        let train = TrainingSet::from_points(dim, &points, &labels)?;
        Ok(Self {
            model: GpModel::new(train, *self.params())?,
            goal_seeds: seeds,
            oracle: self.oracle.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.model.train().dim()
    }

    pub fn params(&self) -> &KernelParams<T> {
        self.model.params()
    }

    pub fn active(&self) -> &TrainingSet<T> {
        self.model.train()
    }

    pub fn goal_seeds(&self) -> &[Vec<T>] {
        &self.goal_seeds
    }

    pub fn oracle(&self) -> Option<&Arc<dyn FreeSpaceOracle<T>>> {
        self.oracle.as_ref()
    }

    fn visibly_free(&self, x: &[T]) -> bool {
        self.oracle.as_ref().is_some_and(|o| o.visibly_free(x))
    }

    /// Posterior without the free-space override.
    pub fn raw_predict(&self, x: &[T]) -> Result<PosteriorStats<T>> {
        self.model.posterior(x)
    }

    /// Posterior with the free-space override: visibly free points report a
    /// mean of +1, variance untouched.
    pub fn predict(&self, x: &[T]) -> Result<PosteriorStats<T>> {
        let mut s = self.model.posterior(x)?;
        if self.visibly_free(x) {
            s.mean = T::of(FREE_SPACE_MEAN);
        }
        Ok(s)
    }

    /// Post-processed mean only.
    pub fn predict_mean(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(contract("query dimension mismatch"));
        }
        Ok(self.mean_unchecked(x))
    }

    #[inline]
    fn mean_unchecked(&self, x: &[T]) -> T {
        if self.visibly_free(x) {
            T::of(FREE_SPACE_MEAN)
        } else {
            self.model.mean_unchecked(x)
        }
    }

    /// Lower confidence bound μ + Φ⁻¹(ζ)·σ using the post-processed mean.
    pub fn lcb(&self, x: &[T], zeta: T) -> Result<T> {
        let q = inv_norm_cdf(zeta)?;
        let s = self.predict(x)?;
        Ok(s.mean + q * s.variance.sqrt())
    }

    /// Cell is occupied iff the post-processed mean at its center is ≤ 0.
    pub fn occupancy_grid(&self, spec: &GridSpec<T>) -> Result<OccupancyGrid<T>> {
        if spec.dim() != self.dim() {
            return Err(contract("grid dimension mismatch"));
        }
        Ok(OccupancyGrid::from_fn(spec, |c| {
            self.mean_unchecked(c) <= T::zero()
        }))
    }

    /// Whether the mean at `x` classifies it as occupied.
    pub fn is_occupied(&self, x: &[T]) -> bool {
        self.mean_unchecked(x) <= T::zero()
    }
}

impl<T: Real> SurfaceEstimate<T> for Gpis<T> {
    fn mean(&self, x: &[T]) -> T {
        self.mean_unchecked(x)
    }

    fn raw_variance(&self, x: &[T]) -> T {
        self.model.posterior_unchecked(x).variance
    }

    fn mean_and_raw_variance(&self, x: &[T]) -> (T, T) {
        let s = self.model.posterior_unchecked(x);
        let mean = if self.visibly_free(x) {
            T::of(FREE_SPACE_MEAN)
        } else {
            s.mean
        };
        (mean, s.variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Bounds;

    struct HalfPlane;
    impl FreeSpaceOracle<f64> for HalfPlane {
        fn visibly_free(&self, x: &[f64]) -> bool {
            x[0] < 0.0
        }
    }

    fn params(noise: f64) -> KernelParams<f64> {
        KernelParams::new(0.1, 1.0, noise).unwrap()
    }

    fn gpis_with(points: &[(Vec<f64>, f64)], noise: f64) -> Gpis<f64> {
        let pts: Vec<Vec<f64>> = points.iter().map(|p| p.0.clone()).collect();
        let labels: Vec<f64> = points.iter().map(|p| p.1).collect();
        Gpis::new(2, params(noise))
            .conditioned_on(TrainingSet::from_points(2, &pts, &labels).unwrap())
            .unwrap()
    }

    #[test]
    fn goal_seeding() {
        let g = Gpis::new(2, params(1e-8))
            .seed_with_goal(&[vec![0.0, 0.0]])
            .unwrap();
        assert_eq!(g.active().len(), 1);
        assert_eq!(g.active().label(0), 1.0);
        assert!(g.predict(&[0.0, 0.0]).unwrap().mean > 0.9);
        let again = g.seed_with_goal(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(again.active().len(), 1);
        assert_eq!(again.goal_seeds().len(), 1);
        assert!(g.seed_with_goal(&[]).is_err());
    }

    #[test]
    fn override_replaces_mean_only() {
        let g = gpis_with(&[(vec![-0.05, 0.0], -1.0), (vec![0.05, 0.0], -1.0)], 1e-4);
        let raw = g.raw_predict(&[-0.02, 0.01]).unwrap();
        assert!(raw.mean < 0.0);
        let with = g.clone().with_oracle(Some(Arc::new(HalfPlane)));
        let s = with.predict(&[-0.02, 0.01]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, raw.variance);
        // not visible: unchanged
        assert_eq!(
            with.predict(&[0.02, 0.01]).unwrap(),
            g.raw_predict(&[0.02, 0.01]).unwrap()
        );
    }

    #[test]
    fn empty_gpis_is_prior_and_fully_occupied() {
        let g = Gpis::new(2, params(1e-4));
        let s = g.predict(&[0.3, 0.3]).unwrap();
        assert_eq!((s.mean, s.variance), (0.0, 1.0));
        let spec =
            GridSpec::new(Bounds::new(vec![0.0, 0.0], vec![0.4, 0.4]).unwrap(), 0.1).unwrap();
        assert!(g.occupancy_grid(&spec).unwrap().cells.iter().all(|c| *c));
    }

    #[test]
    fn exterior_points_free_their_cells() {
        let spec =
            GridSpec::new(Bounds::new(vec![0.0, 0.0], vec![0.3, 0.3]).unwrap(), 0.1).unwrap();
        let pts: Vec<(Vec<f64>, f64)> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (spec_center(i, j), 1.0)))
            .collect();
        let g = gpis_with(&pts, 1e-4);
        assert!(g.occupancy_grid(&spec).unwrap().cells.iter().all(|c| !*c));
    }

    fn spec_center(i: usize, j: usize) -> Vec<f64> {
        vec![0.05 + 0.1 * i as f64, 0.05 + 0.1 * j as f64]
    }

    #[test]
    fn interior_point_occupies_center_cell() {
        let spec =
            GridSpec::new(Bounds::new(vec![0.0, 0.0], vec![0.3, 0.3]).unwrap(), 0.1).unwrap();
        let g = gpis_with(&[(vec![0.15, 0.15], -1.0)], 1e-4);
        let grid = g.occupancy_grid(&spec).unwrap();
        assert!(grid.get(&[1, 1]));
    }

    #[test]
    fn lcb_reference_values() {
        let g = gpis_with(&[(vec![0.0, 0.0], 0.4)], 1e-4);
        let x = [0.03, 0.0];
        let s = g.predict(&x).unwrap();
        assert_eq!(g.lcb(&x, 0.5).unwrap(), s.mean);
        let l = g.lcb(&x, 0.4).unwrap();
        assert!((l - (s.mean - 0.2533471031 * s.variance.sqrt())).abs() < 1e-9);
        assert!(g.lcb(&x, 0.0).is_err());
        assert!(g.lcb(&x, 1.0).is_err());
        // monotone in zeta
        let mut prev = f64::NEG_INFINITY;
        for k in 1..20 {
            let v = g.lcb(&x, k as f64 / 20.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn sign_semantics() {
        let g = gpis_with(&[(vec![0.0, 0.0], -1.0), (vec![0.2, 0.0], 1.0)], 1e-8);
        assert!(g.predict(&[0.0, 0.0]).unwrap().mean < 0.0);
        assert!(g.predict(&[0.2, 0.0]).unwrap().mean > 0.0);
    }

    #[test]
    fn surface_estimate_matches_predict() {
        let g = gpis_with(&[(vec![0.0, 0.0], -1.0), (vec![0.1, 0.0], 0.5)], 1e-4)
            .with_oracle(Some(Arc::new(HalfPlane)));
        for x in [[-0.05, 0.01], [0.04, -0.02]] {
            let s = g.predict(&x).unwrap();
            let (m, v) = g.mean_and_raw_variance(&x);
            assert_eq!((m, v), (s.mean, s.variance));
            assert_eq!(SurfaceEstimate::mean(&g, &x), s.mean);
        }
    }
}
