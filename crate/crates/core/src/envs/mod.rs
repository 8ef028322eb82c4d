//! Planar ground-truth worlds and their nominal models: a point peg and a
//! gripped chain cable, both moving among axis-aligned boxes.

pub mod cable;
pub mod geometry;
pub mod scene;

use serde::{Deserialize, Serialize};

use crate::state::StateSet;
pub use cable::CableModel;
pub use geometry::{render_depth, Aabb, Collide, World, CONTACT_GAP};
pub use scene::{make_scene, parse_scene, Family, Scene};

/// How the grasped object responds to a control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Body {
    /// A single point translated by the control.
    Peg,
    Cable(CableModel),
}

/// A ground-truth world with its current state.
#[derive(Debug, Clone)]
pub struct Env {
    pub world: World,
    pub body: Body,
    state: StateSet<f64>,
}

fn points_of(x: &StateSet<f64>) -> Vec<[f64; 2]> {
    x.components().map(|c| [c[0], c[1]]).collect()
}

fn state_of(pts: &[[f64; 2]]) -> StateSet<f64> {
    StateSet::new(2, pts.iter().flat_map(|p| p.iter().copied()).collect())
        .expect("non-empty planar state")
}

impl Env {
    pub fn new(world: World, body: Body, state: StateSet<f64>) -> Self {
        Self { world, body, state }
    }

    pub fn state(&self) -> &StateSet<f64> {
        &self.state
    }

    pub fn control_dim(&self) -> usize {
        2
    }

    /// Physics against the chosen obstacle set.
    pub fn transition(&self, x: &StateSet<f64>, u: &[f64], which: Collide) -> StateSet<f64> {
        let u = [u[0], u[1]];
        match &self.body {
            Body::Peg => {
                let p = x.component(0);
                state_of(&[self.world.slide([p[0], p[1]], u, which)])
            }
            Body::Cable(m) => state_of(&m.step(&self.world, &points_of(x), u, which)),
        }
    }

    /// Advances the true state.
    pub fn step_truth(&mut self, u: &[f64]) -> StateSet<f64> {
        self.state = self.transition(&self.state, u, Collide::All);
        self.state.clone()
    }

    /// The nominal model: the peg is a free integrator, the cable sees only
    /// observable obstacles.
    pub fn nominal(&self, x: &StateSet<f64>, u: &[f64]) -> StateSet<f64> {
        let which = match self.body {
            Body::Peg => Collide::Nothing,
            Body::Cable(_) => Collide::ObservableOnly,
        };
        self.transition(x, u, which)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peg_nominal_ignores_obstacles() {
        let world =
            World::new([-1.0, -1.0], [1.0, 1.0]).with_box(Aabb::new([0.1, -1.0], [0.2, 1.0], true));
        let env = Env::new(world, Body::Peg, StateSet::point(&[0.05, 0.0]));
        let x = env.state().clone();
        let pred = env.nominal(&x, &[0.1, 0.0]);
        assert!((pred.component(0)[0] - 0.15).abs() < 1e-15);
        let truth = env.transition(&x, &[0.1, 0.0], Collide::All);
        assert!((truth.component(0)[0] - (0.1 - CONTACT_GAP)).abs() < 1e-12);
    }

    #[test]
    fn cable_nominal_equals_truth_with_observable_geometry() {
        let world = World::new([-1.0, -1.0], [1.0, 1.0]).with_box(Aabb::new(
            [-0.5, 0.05],
            [0.5, 0.1],
            true,
        ));
        let m = CableModel::new(6, 0.04);
        let x = state_of(&m.straight([0.0, 0.0], [1.0, 0.0]));
        let env = Env::new(world, Body::Cable(m), x.clone());
        for u in [[0.0, 0.02], [0.01, 0.01], [-0.02, 0.0]] {
            let a = env.nominal(&x, &u);
            let b = env.transition(&x, &u, Collide::All);
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
