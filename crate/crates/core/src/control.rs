//! Sampling-based model predictive control over the estimated surface.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::gpis::SurfaceEstimate;
use crate::scalar::{dist, norm, Real};
use crate::state::StateSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights<T> {
    /// Action regularization.
    pub alpha: T,
    /// Exploration.
    pub beta: T,
    /// Collision.
    pub collision: T,
    /// Goal basin depth.
    pub eta: T,
    /// Success radius.
    pub r_g: T,
}

impl<T: Real> CostWeights<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.collision, self.eta, self.r_g];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(contract("cost weights must be finite"));
        }
        if self.collision < T::zero() || self.eta < T::zero() || !(self.r_g > T::zero()) {
            return Err(contract("need C ≥ 0, η ≥ 0 and r_g > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MppiConfig<T> {
    pub lambda: T,
    pub samples: usize,
    pub horizon: usize,
    /// Diagonal of the control-noise covariance.
    pub noise: Vec<T>,
    pub u_min: Vec<T>,
    pub u_max: Vec<T>,
}

impl<T: Real> MppiConfig<T> {
    pub fn control_dim(&self) -> usize {
        self.noise.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || self.samples == 0 || self.horizon == 0 {
            return Err(contract(
                "need λ > 0, at least one sample and a horizon ≥ 1",
            ));
        }
        let m = self.noise.len();
        if m == 0 || self.u_min.len() != m || self.u_max.len() != m {
            return Err(contract(
                "noise and bounds must share the control dimension",
            ));
        }
        if self.noise.iter().any(|s| !(*s > T::zero())) {
            return Err(contract("noise variances must be positive"));
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| lo > hi) {
            return Err(contract("control lower bound exceeds upper bound"));
        }
        Ok(())
    }

    pub fn clamp(&self, u: &mut [T]) {
        for ((v, lo), hi) in u.iter_mut().zip(&self.u_min).zip(&self.u_max) {
            *v = v.max(*lo).min(*hi);
        }
    }

    pub fn zero_sequence(&self) -> Vec<Vec<T>> {
        vec![vec![T::zero(); self.control_dim()]; self.horizon]
    }
}

/// `states[t+1] = f(states[t], controls[t])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<StateSet<T>>,
    pub controls: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn rollout<F>(x0: &StateSet<T>, controls: Vec<Vec<T>>, f: &F) -> Self
    where
        F: Fn(&StateSet<T>, &[T]) -> StateSet<T> + ?Sized,
    {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for u in &controls {
            let next = f(states.last().expect("non-empty"), u);
            states.push(next);
        }
        Self { states, controls }
    }
}

/// Goal points for a subset of the components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSet<T> {
    pub entries: Vec<(usize, Vec<T>)>,
}

impl<T: Real> GoalSet<T> {
    pub fn single(component: usize, point: Vec<T>) -> Self {
        Self {
            entries: vec![(component, point)],
        }
    }

    pub fn points(&self) -> Vec<Vec<T>> {
        self.entries.iter().map(|(_, p)| p.clone()).collect()
    }

    /// All goal components within `r_g` of their goals (false with no goals).
    pub fn reached(&self, x: &StateSet<T>, r_g: T) -> bool {
        !self.entries.is_empty()
            && self
                .entries
                .iter()
                .all(|(i, g)| dist(x.component(*i), g) < r_g)
    }
}

/// `Σ_{t=1..T} (−η·𝟙[all goal components within r_g] + Σ_i d(G_i, X_t^i))`.
pub fn goal_cost<T: Real>(
    traj: &Trajectory<T>,
    goals: &GoalSet<T>,
    w: &CostWeights<T>,
    d_x: impl Fn(&[T], &[T]) -> T,
) -> T {
    let mut total = T::zero();
    if goals.entries.is_empty() {
        return total;
    }
    for x in &traj.states[1..] {
        let mut inside = true;
        for (i, g) in &goals.entries {
            let d = d_x(g, x.component(*i));
            inside &= d < w.r_g;
            total += d;
        }
        if inside {
            total -= w.eta;
        }
    }
    total
}

/// `Σ_t ‖u_t‖₂`.
pub fn action_cost<T: Real>(traj: &Trajectory<T>) -> T {
    traj.controls.iter().map(|u| norm(u)).sum()
}

/// Number of rollout points the surface classifies as occupied.
pub fn collision_cost<T: Real, S: SurfaceEstimate<T> + ?Sized>(
    traj: &Trajectory<T>,
    surface: &S,
) -> T {
    let mut hits = 0usize;
    for x in &traj.states[1..] {
        hits += x
            .components()
            .filter(|c| surface.mean(c) <= T::zero())
            .count();
    }
    T::of_usize(hits)
}

/// `−Σ_t σ²(x_t^s)` with the raw posterior variance.
pub fn exploration_cost<T: Real, S: SurfaceEstimate<T> + ?Sized>(
    traj: &Trajectory<T>,
    surface: &S,
    s: usize,
) -> T {
    -traj.states[1..]
        .iter()
        .map(|x| surface.raw_variance(x.component(s)))
        .sum::<T>()
}

/// Argmin of the post-processed mean over components, lowest index on ties.
pub fn select_component<T: Real, S: SurfaceEstimate<T> + ?Sized>(
    surface: &S,
    x: &StateSet<T>,
) -> usize {
    let mut best = 0;
    let mut best_mean = T::infinity();
    for (i, c) in x.components().enumerate() {
        let m = surface.mean(c);
        if m < best_mean {
            best = i;
            best_mean = m;
        }
    }
    best
}

/// The four cost terms of one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTerms<T> {
    pub goal: T,
    pub action: T,
    pub collision: T,
    pub exploration: T,
}

impl<T: Real> CostTerms<T> {
    pub fn total(&self, w: &CostWeights<T>) -> T {
        self.goal + w.alpha * self.action + w.collision * self.collision + w.beta * self.exploration
    }
}

/// All four terms in one pass over the trajectory.
pub fn trajectory_costs<T: Real, S: SurfaceEstimate<T> + ?Sized>(
    traj: &Trajectory<T>,
    surface: &S,
    goals: &GoalSet<T>,
    w: &CostWeights<T>,
    s: usize,
) -> CostTerms<T> {
    let mut collision = 0usize;
    let mut exploration = T::zero();
    for x in &traj.states[1..] {
        for (i, c) in x.components().enumerate() {
            let mean = if i == s {
                let (m, v) = surface.mean_and_raw_variance(c);
                exploration -= v;
                m
            } else {
                surface.mean(c)
            };
            if mean <= T::zero() {
                collision += 1;
            }
        }
    }
    CostTerms {
        goal: goal_cost(traj, goals, w, |a, b| dist(a, b)),
        action: action_cost(traj),
        collision: T::of_usize(collision),
        exploration,
    }
}

/// Result of one planning step.
#[derive(Debug, Clone, PartialEq)]
pub struct MppiOutput<T> {
    pub action: Vec<T>,
    /// Weighted sequence shifted by one, last step repeated.
    pub nominal: Vec<Vec<T>>,
    pub weights: Vec<T>,
    pub costs: Vec<T>,
}

/// Normalized importance weights `exp(−(J_k − min J)/λ)`. Infinite costs
/// get zero weight.
pub fn mppi_weights<T: Real>(costs: &[T], lambda: T) -> Result<Vec<T>> {
    let min = costs.iter().copied().fold(T::infinity(), T::min);
    if !min.is_finite() {
        return Err(Error::Solver("every rollout has non-finite cost".into()));
    }
    let raw: Vec<T> = costs
        .iter()
        .map(|j| {
            if j.is_finite() {
                (-(*j - min) / lambda).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// One MPPI update. Noise is drawn sequentially from `rng`; rollouts run in
/// parallel and are reduced in sample order, so the result does not depend
/// on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn mppi_step<T, F, S, R>(
    x: &StateSet<T>,
    nominal: &[Vec<T>],
    f: &F,
    surface: &S,
    goals: &GoalSet<T>,
    w: &CostWeights<T>,
    cfg: &MppiConfig<T>,
    s: usize,
    rng: &mut R,
) -> Result<MppiOutput<T>>
where
    T: Real,
    F: Fn(&StateSet<T>, &[T]) -> StateSet<T> + Sync + ?Sized,
    S: SurfaceEstimate<T> + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    w.validate()?;
    if nominal.len() != cfg.horizon || nominal.iter().any(|u| u.len() != cfg.control_dim()) {
        return Err(contract(
            "nominal sequence does not match horizon and control dimension",
        ));
    }
    if s >= x.len() {
        return Err(contract("exploration component out of range"));
    }
    let std: Vec<T> = cfg.noise.iter().map(|v| v.sqrt()).collect();
    let mut samples = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let seq: Vec<Vec<T>> = nominal
            .iter()
            .map(|u| {
                let mut v: Vec<T> = u
                    .iter()
                    .zip(&std)
                    .map(|(ui, sd)| *ui + *sd * T::of(rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                cfg.clamp(&mut v);
                v
            })
            .collect();
        samples.push(seq);
    }
    let costs: Vec<T> = samples
        .par_iter()
        .map(|seq| {
            let traj = Trajectory::rollout(x, seq.clone(), f);
            if traj.states.iter().any(|st| !st.is_finite()) {
                return T::infinity();
            }
            let j = trajectory_costs(&traj, surface, goals, w, s).total(w);
            if j.is_finite() {
                j
            } else {
                T::infinity()
            }
        })
        .collect();
    let weights = mppi_weights(&costs, cfg.lambda)?;
    let mut avg = cfg.zero_sequence();
    for (seq, wk) in samples.iter().zip(&weights) {
        if *wk == T::zero() {
            continue;
        }
        for (a, u) in avg.iter_mut().zip(seq) {
            for (ai, ui) in a.iter_mut().zip(u) {
                *ai += *wk * *ui;
            }
        }
    }
    let action = avg[0].clone();
    let mut shifted: Vec<Vec<T>> = avg[1..].to_vec();
    shifted.push(avg.last().expect("horizon ≥ 1").clone());
    Ok(MppiOutput {
        action,
        nominal: shifted,
        weights,
        costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{KernelParams, TrainingSet};
    use crate::gpis::{FreeSpaceOracle, Gpis};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn integrator(x: &StateSet<f64>, u: &[f64]) -> StateSet<f64> {
        let mut y = x.clone();
        for i in 0..y.len() {
            for (v, du) in y.component_mut(i).iter_mut().zip(u) {
                *v += du;
            }
        }
        y
    }

    fn weights() -> CostWeights<f64> {
        CostWeights {
            alpha: 0.5,
            beta: 1.0,
            collision: 10.0,
            eta: 5.0,
            r_g: 0.1,
        }
    }

    struct AllFree;
    impl FreeSpaceOracle<f64> for AllFree {
        fn visibly_free(&self, _: &[f64]) -> bool {
            true
        }
    }

    #[test]
    fn goal_cost_cases() {
        let x = StateSet::point(&[1.0, 0.0]);
        let traj = Trajectory::rollout(&x, vec![vec![0.0, 0.0]; 4], &integrator);
        let at_goal = GoalSet::single(0, vec![1.0, 0.0]);
        assert_eq!(goal_cost(&traj, &at_goal, &weights(), dist), -20.0);
        let far = GoalSet::single(0, vec![0.0, 0.0]);
        assert_eq!(goal_cost(&traj, &far, &weights(), dist), 4.0);
        let none = GoalSet { entries: vec![] };
        assert_eq!(goal_cost(&traj, &none, &weights(), dist), 0.0);
    }

    #[test]
    fn action_cost_cases() {
        let x = StateSet::point(&[0.0, 0.0]);
        let t = Trajectory::rollout(&x, vec![vec![3.0, 4.0], vec![0.0, 0.0]], &integrator);
        assert_eq!(action_cost(&t), 5.0);
        let t2 = Trajectory::rollout(&x, vec![vec![6.0, 8.0], vec![0.0, 0.0]], &integrator);
        assert_eq!(action_cost(&t2), 10.0);
    }

    #[test]
    fn collision_and_exploration_on_empty_surface() {
        let p = KernelParams::new(0.1, 2.0, 1e-4).unwrap();
        let g = Gpis::new(2, p);
        let x = StateSet::from_components(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let t = Trajectory::rollout(&x, vec![vec![0.1, 0.0]; 3], &integrator);
        assert_eq!(collision_cost(&t, &g), 6.0);
        assert_eq!(exploration_cost(&t, &g, 1), -6.0);
        let free = g.clone().with_oracle(Some(Arc::new(AllFree)));
        assert_eq!(collision_cost(&t, &free), 0.0);
    }

    #[test]
    fn component_selection() {
        let p = KernelParams::new(0.1, 1.0, 1e-8).unwrap();
        let g = Gpis::new(2, p)
            .conditioned_on(
                TrainingSet::from_points(2, &[vec![0.0, 0.0], vec![2.0, 0.0]], &[1.0, -1.0])
                    .unwrap(),
            )
            .unwrap();
        let x =
            StateSet::from_components(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(select_component(&g, &x), 2);
        let free = g.with_oracle(Some(Arc::new(AllFree)));
        assert_eq!(select_component(&free, &x), 0);
    }

    #[test]
    fn weights_normalized_and_shift_invariant() {
        let c = [3.0, 1.0, 2.5, f64::INFINITY];
        let a = mppi_weights(&c, 0.7).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a[3], 0.0);
        let shifted: Vec<f64> = c.iter().map(|v| v + 100.0).collect();
        let b = mppi_weights(&shifted, 0.7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(mppi_weights(&[f64::INFINITY], 1.0).is_err());
    }

    fn cfg(samples: usize, noise: f64) -> MppiConfig<f64> {
        MppiConfig {
            lambda: 0.01,
            samples,
            horizon: 5,
            noise: vec![noise; 2],
            u_min: vec![-0.05; 2],
            u_max: vec![0.05; 2],
        }
    }

    #[test]
    fn single_sample_tiny_noise_keeps_nominal() {
        let g = Gpis::new(2, KernelParams::default_surface()).with_oracle(Some(Arc::new(AllFree)));
        let nominal = vec![vec![0.01, -0.02]; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = mppi_step(
            &StateSet::point(&[0.0, 0.0]),
            &nominal,
            &integrator,
            &g,
            &GoalSet::single(0, vec![1.0, 0.0]),
            &weights(),
            &cfg(1, 1e-24),
            0,
            &mut rng,
        )
        .unwrap();
        assert!((out.action[0] - 0.01).abs() < 1e-10 && (out.action[1] + 0.02).abs() < 1e-10);
        assert_eq!(out.nominal.len(), 5);
    }

    #[test]
    fn moves_toward_goal_in_free_space() {
        let g = Gpis::new(2, KernelParams::default_surface()).with_oracle(Some(Arc::new(AllFree)));
        let mut w = weights();
        w.beta = 0.0;
        let mut good = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = mppi_step(
                &StateSet::point(&[0.0, 0.0]),
                &cfg(64, 0.01).zero_sequence(),
                &integrator,
                &g,
                &GoalSet::single(0, vec![1.0, 0.0]),
                &w,
                &cfg(64, 0.01),
                0,
                &mut rng,
            )
            .unwrap();
            if out.action[0] > 0.0 {
                good += 1;
            }
        }
        assert!(good >= 95, "{good}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let g = Gpis::new(2, KernelParams::default_surface())
            .conditioned_on(TrainingSet::from_points(2, &[vec![0.3, 0.0]], &[-1.0]).unwrap())
            .unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                mppi_step(
                    &StateSet::point(&[0.0, 0.0]),
                    &cfg(50, 0.01).zero_sequence(),
                    &integrator,
                    &g,
                    &GoalSet::single(0, vec![1.0, 0.0]),
                    &weights(),
                    &cfg(50, 0.01),
                    0,
                    &mut rng,
                )
                .unwrap()
            })
        };
        assert_eq!(run(1), run(3));
    }
}
