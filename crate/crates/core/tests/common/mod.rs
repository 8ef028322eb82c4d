#![allow(dead_code)]

use contact_gpis::constraints::{ConstraintAux, ConstraintSet, ConstraintSpec};
use contact_gpis::contact::{DatasetPair, LabelBatch};
use contact_gpis::gp::KernelParams;
use contact_gpis::gpis::Gpis;
use contact_gpis::grid::{flat_index, Bounds, GridSpec, OccupancyGrid};
use contact_gpis::refine::softmax;
use contact_gpis::state::StateSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> OccupancyGrid<f64> {
    OccupancyGrid {
        origin: vec![0.0, 0.0],
        resolution: 1.0,
        shape: vec![w, h],
        cells: (0..w * h).map(|_| rng.random_bool(density)).collect(),
    }
}

/// Depth-first 8-connected flood fill with an explicit stack; 0 marks
/// occupied cells.
pub fn flood_fill(grid: &OccupancyGrid<f64>) -> Vec<u32> {
    let (w, h) = (grid.shape[0] as isize, grid.shape[1] as isize);
    let mut labels = vec![0u32; (w * h) as usize];
    let idx = |x: isize, y: isize| flat_index(&[x as usize, y as usize], &grid.shape);
    let mut next = 0;
    for x0 in 0..w {
        for y0 in 0..h {
            if grid.cells[idx(x0, y0)] || labels[idx(x0, y0)] != 0 {
                continue;
            }
            next += 1;
            let mut stack = vec![(x0, y0)];
            while let Some((x, y)) = stack.pop() {
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let i = idx(x, y);
                if grid.cells[i] || labels[i] != 0 {
                    continue;
                }
                labels[i] = next;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if dx != 0 || dy != 0 {
                            stack.push((x + dx, y + dy));
                        }
                    }
                }
            }
        }
    }
    labels
}

/// Equal up to renaming of the nonzero labels.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            if (*x == 0) != (*y == 0) {
                return false;
            }
            *ab.entry(*x).or_insert(*y) == *y && *ba.entry(*y).or_insert(*x) == *x
        })
}

pub const GOAL: [f64; 2] = [0.5, 0.5];
pub const START: [f64; 2] = [0.08, 0.08];

pub fn unit_grid(res: f64) -> GridSpec<f64> {
    GridSpec::new(Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), res).unwrap()
}

fn add(dp: &mut DatasetPair<f64>, pts: &[Vec<f64>], label: f64, local_min: bool) {
    let n = pts.len();
    let x = StateSet::from_components(pts).unwrap();
    let interior = label < 0.0;
    let batch = LabelBatch {
        y: vec![label.max(0.0); n],
        y_hat: vec![label; n],
        keep_obs: vec![!interior; n],
        keep_pred: vec![interior; n],
        contact_obs: vec![!interior && !local_min; n],
    };
    dp.update(&batch, &x, &x, local_min).unwrap();
}

/// Interior points on a jittered circle around the goal, exterior points
/// on a lattice outside it and a small circle inside it, the goal seeded,
/// and optionally some local-minimum entries.
pub fn ring_problem(
    rng: &mut ChaCha8Rng,
    local_min_points: usize,
) -> (
    DatasetPair<f64>,
    Gpis<f64>,
    ConstraintSet<f64>,
    ConstraintAux<f64>,
) {
    let n = 20;
    let ring: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let a = (k as f64 + rng.random_range(-0.2..0.2)) / n as f64 * std::f64::consts::TAU;
            let r = 0.2 + rng.random_range(-0.01..0.01);
            vec![GOAL[0] + r * a.cos(), GOAL[1] + r * a.sin()]
        })
        .collect();
    let mut free = Vec::new();
    for i in 0..13 {
        for j in 0..13 {
            let p = vec![0.02 + 0.08 * i as f64, 0.02 + 0.08 * j as f64];
            if (p[0] - GOAL[0]).hypot(p[1] - GOAL[1]) > 0.29 {
                free.push(p);
            }
        }
    }
    for k in 0..6 {
        let a = k as f64 / 6.0 * std::f64::consts::TAU;
        free.push(vec![GOAL[0] + 0.1 * a.cos(), GOAL[1] + 0.1 * a.sin()]);
    }
    free.push(START.to_vec());
    let mut dp = DatasetPair::new(2);
    dp.seed_goals(&[GOAL.to_vec()]).unwrap();
    add(&mut dp, &free, 1.0, false);
    add(&mut dp, &ring, -1.0, false);
    if local_min_points > 0 {
        let pts: Vec<Vec<f64>> = (0..local_min_points)
            .map(|_| vec![rng.random_range(0.0..0.25), rng.random_range(0.0..0.25)])
            .collect();
        add(&mut dp, &pts, 1.0, true);
    }
    let base = Gpis::new(2, KernelParams::new(0.06, 1.0, 1e-4).unwrap());
    let constraints = ConstraintSet::new(vec![ConstraintSpec::PathExists {
        grid: unit_grid(0.02),
        component: Some(0),
    }])
    .unwrap();
    let aux = ConstraintAux {
        state: StateSet::point(&START),
        goals: vec![GOAL.to_vec()],
    };
    (dp, base, constraints, aux)
}

/// A random instance: weights, fixed mask and a few clause-style
/// constraints over the free indices.
pub struct Instance {
    pub weights: Vec<f64>,
    pub fixed: Vec<bool>,
    pub at_most: Vec<(Vec<usize>, usize)>,
    pub conflicts: Vec<(usize, usize)>,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let len = rng.random_range(6..=16);
        let raw: Vec<f64> = (0..len)
            .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let weights = softmax(&raw);
        let mut fixed: Vec<bool> = (0..len).map(|_| rng.random_bool(0.25)).collect();
        while fixed.iter().filter(|f| !**f).count() > 12 {
            let i = rng.random_range(0..len);
            fixed[i] = true;
        }
        let free: Vec<usize> = (0..len).filter(|i| !fixed[*i]).collect();
        let mut at_most = Vec::new();
        let mut conflicts = Vec::new();
        if free.len() >= 2 {
            for _ in 0..rng.random_range(1..=2) {
                let size = rng.random_range(2..=free.len().min(6));
                let mut set: Vec<usize> = Vec::new();
                while set.len() < size {
                    let i = free[rng.random_range(0..free.len())];
                    if !set.contains(&i) {
                        set.push(i);
                    }
                }
                let k = rng.random_range(0..size);
                at_most.push((set, k));
            }
            for _ in 0..rng.random_range(0..=2) {
                let a = free[rng.random_range(0..free.len())];
                let b = free[rng.random_range(0..free.len())];
                if a != b {
                    conflicts.push((a, b));
                }
            }
        }
        Self {
            weights,
            fixed,
            at_most,
            conflicts,
        }
    }

    pub fn feasible(&self, w: &[bool]) -> bool {
        self.at_most
            .iter()
            .all(|(s, k)| s.iter().filter(|i| w[**i]).count() <= *k)
            && self.conflicts.iter().all(|(a, b)| !(w[*a] && w[*b]))
    }

    pub fn brute_force(&self) -> Option<f64> {
        let free: Vec<usize> = (0..self.weights.len())
            .filter(|i| !self.fixed[*i])
            .collect();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << free.len()) {
            let mut w = vec![true; self.weights.len()];
            for (b, i) in free.iter().enumerate() {
                w[*i] = mask & (1 << b) != 0;
            }
            if self.feasible(&w) {
                let s: f64 = self
                    .weights
                    .iter()
                    .zip(&w)
                    .filter(|(_, x)| **x)
                    .map(|(c, _)| c)
                    .sum();
                if best.is_none_or(|b| s > b) {
                    best = Some(s);
                }
            }
        }
        best
    }
}
