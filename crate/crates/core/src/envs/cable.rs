//! Quasi-static chain cable solved with position-based dynamics.

use serde::{Deserialize, Serialize};

use super::geometry::{Collide, World};

/// Allowed relative segment-length error after a step.
pub const MAX_STRAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableModel {
    /// Number of chain points.
    pub k: usize,
    pub rest: f64,
    /// Indices moved directly by the control.
    pub gripped: Vec<usize>,
    pub iterations: usize,
}

impl CableModel {
    pub fn new(k: usize, rest: f64) -> Self {
        Self {
            k,
            rest,
            gripped: vec![0],
            iterations: 20,
        }
    }

    /// Both end points move with the control.
    pub fn gripped_at_both_ends(mut self) -> Self {
        self.gripped = if self.k > 1 {
            vec![0, self.k - 1]
        } else {
            vec![0]
        };
        self
    }

    /// Points evenly spaced at the rest length from `start` along `dir`.
    pub fn straight(&self, start: [f64; 2], dir: [f64; 2]) -> Vec<[f64; 2]> {
        let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        (0..self.k)
            .map(|i| {
                let s = i as f64 * self.rest / n;
                [start[0] + s * dir[0], start[1] + s * dir[1]]
            })
            .collect()
    }

    pub fn max_strain(&self, pts: &[[f64; 2]]) -> f64 {
        pts.windows(2)
            .map(|w| {
                (((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt() - self.rest)
                    .abs()
                    / self.rest
            })
            .fold(0.0, f64::max)
    }

    /// Moves the gripped points by `u` and relaxes the chain. When the
    /// relaxed chain is strained beyond [`MAX_STRAIN`] the gripper motion is
    /// halved until it is not (down to no motion).
    pub fn step(
        &self,
        world: &World,
        prev: &[[f64; 2]],
        u: [f64; 2],
        which: Collide,
    ) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        for _ in 0..6 {
            let out = self.relax(world, prev, [u[0] * scale, u[1] * scale], which);
            if self.max_strain(&out) <= MAX_STRAIN {
                return out;
            }
            scale *= 0.5;
        }
        self.relax(world, prev, [0.0, 0.0], which)
    }

    fn relax(
        &self,
        world: &World,
        prev: &[[f64; 2]],
        u: [f64; 2],
        which: Collide,
    ) -> Vec<[f64; 2]> {
        let mut p = prev.to_vec();
        let pinned: Vec<bool> = (0..p.len()).map(|i| self.gripped.contains(&i)).collect();
        for &g in &self.gripped {
            p[g] = world.slide(prev[g], u, which);
        }
        // with several grippers the free points are carried along first
        if self.gripped.len() > 1 {
            let m = self.gripped.len() as f64;
            let carry = [0, 1].map(|a| {
                self.gripped
                    .iter()
                    .map(|&g| p[g][a] - prev[g][a])
                    .sum::<f64>()
                    / m
            });
            for i in 0..p.len() {
                if !pinned[i] {
                    p[i] = world.push_out(
                        [prev[i][0] + carry[0], prev[i][1] + carry[1]],
                        prev[i],
                        which,
                    );
                }
            }
        }
        for _ in 0..self.iterations {
            for i in 0..p.len().saturating_sub(1) {
                let j = i + 1;
                let wi = if pinned[i] { 0.0 } else { 1.0 };
                let wj = if pinned[j] { 0.0 } else { 1.0 };
                if wi + wj == 0.0 {
                    continue;
                }
                let d = [p[j][0] - p[i][0], p[j][1] - p[i][1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if len < 1e-12 {
                    continue;
                }
                let c = (len - self.rest) / len / (wi + wj);
                for a in 0..2 {
                    p[i][a] += wi * c * d[a];
                    p[j][a] -= wj * c * d[a];
                }
            }
            for i in 0..p.len() {
                if !pinned[i] {
                    p[i] = world.push_out(p[i], prev[i], which);
                }
            }
        }
        p
    }
}
