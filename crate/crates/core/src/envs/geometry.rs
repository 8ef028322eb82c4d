//! Axis-aligned planar worlds, sliding contact and ray casting.

use serde::{Deserialize, Serialize};

use crate::contact::{Camera, DepthData};

/// Clearance kept between a point and any obstacle face.
pub const CONTACT_GAP: f64 = 1e-3;

const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Whether the nominal model knows about this obstacle.
    pub observable: bool,
}

impl Aabb {
    pub fn new(lo: [f64; 2], hi: [f64; 2], observable: bool) -> Self {
        Self { lo, hi, observable }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        (0..2).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    /// Strictly inside the box grown by `pad` on every side.
    pub fn contains_padded(&self, p: &[f64], pad: f64) -> bool {
        (0..2).all(|a| p[a] > self.lo[a] - pad + EDGE_EPS && p[a] < self.hi[a] + pad - EDGE_EPS)
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    /// Entry parameter of the ray `o + t·d`, `t ≥ 0`, or `None` on a miss.
    pub fn ray_hit(&self, o: [f64; 2], d: [f64; 2]) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for a in 0..2 {
            if d[a].abs() < 1e-300 {
                if o[a] < self.lo[a] || o[a] > self.hi[a] {
                    return None;
                }
            } else {
                let ta = (self.lo[a] - o[a]) / d[a];
                let tb = (self.hi[a] - o[a]) / d[a];
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        (t0 <= t1).then_some(t0)
    }
}

/// Obstacles plus the workspace box, whose walls act as observable
/// obstacles for motion but are never rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub obstacles: Vec<Aabb>,
}

/// Which obstacles a motion query collides with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collide {
    All,
    ObservableOnly,
    Nothing,
}

impl World {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self {
            lo,
            hi,
            obstacles: Vec::new(),
        }
    }

    pub fn with_box(mut self, b: Aabb) -> Self {
        self.obstacles.push(b);
        self
    }

    fn active(&self, which: Collide) -> impl Iterator<Item = &Aabb> {
        self.obstacles.iter().filter(move |b| match which {
            Collide::All => true,
            Collide::ObservableOnly => b.observable,
            Collide::Nothing => false,
        })
    }

    /// Inside an obstacle of the given set (boundary included).
    pub fn occupied(&self, p: &[f64], which: Collide) -> bool {
        self.active(which).any(|b| b.contains(p))
    }

    /// Ground-truth occupancy including the region outside the workspace.
    pub fn blocked(&self, p: &[f64]) -> bool {
        p[0] < self.lo[0]
            || p[0] > self.hi[0]
            || p[1] < self.lo[1]
            || p[1] > self.hi[1]
            || self.occupied(p, Collide::All)
    }

    /// Moves `p` by `u`, first along x then along y, each stopping
    /// `CONTACT_GAP` short of the first face it would cross.
    pub fn slide(&self, p: [f64; 2], u: [f64; 2], which: Collide) -> [f64; 2] {
        let mut q = p;
        for axis in 0..2 {
            q[axis] = self.sweep(q, axis, u[axis], which);
        }
        q
    }

    fn sweep(&self, p: [f64; 2], axis: usize, delta: f64, which: Collide) -> f64 {
        if delta == 0.0 {
            return p[axis];
        }
        let other = 1 - axis;
        let mut target = p[axis] + delta;
        if which != Collide::Nothing {
            target = if delta > 0.0 {
                target.min((self.hi[axis] - CONTACT_GAP).max(p[axis]))
            } else {
                target.max((self.lo[axis] + CONTACT_GAP).min(p[axis]))
            };
        }
        for b in self.active(which) {
            let lo_o = b.lo[other] - CONTACT_GAP;
            let hi_o = b.hi[other] + CONTACT_GAP;
            if !(p[other] > lo_o + EDGE_EPS && p[other] < hi_o - EDGE_EPS) {
                continue;
            }
            if delta > 0.0 {
                let face = b.lo[axis] - CONTACT_GAP;
                if p[axis] <= face + EDGE_EPS && target > face {
                    target = face.max(p[axis]);
                }
            } else {
                let face = b.hi[axis] + CONTACT_GAP;
                if p[axis] >= face - EDGE_EPS && target < face {
                    target = face.min(p[axis]);
                }
            }
        }
        target
    }

    /// Moves a point that ended up within `CONTACT_GAP` of an obstacle back
    /// out. The exit face is chosen among those facing `prev` (where the
    /// point came from), falling back to the nearest face.
    pub fn push_out(&self, p: [f64; 2], prev: [f64; 2], which: Collide) -> [f64; 2] {
        let mut q = p;
        for _ in 0..4 {
            let mut moved = false;
            for b in self.active(which) {
                if !b.contains_padded(&q, CONTACT_GAP) {
                    continue;
                }
                let faces = [
                    (0, b.lo[0] - CONTACT_GAP, prev[0] <= b.lo[0]),
                    (0, b.hi[0] + CONTACT_GAP, prev[0] >= b.hi[0]),
                    (1, b.lo[1] - CONTACT_GAP, prev[1] <= b.lo[1]),
                    (1, b.hi[1] + CONTACT_GAP, prev[1] >= b.hi[1]),
                ];
                let pick = |facing: bool| {
                    faces
                        .iter()
                        .filter(|f| !facing || f.2)
                        .min_by(|a, c| (q[a.0] - a.1).abs().total_cmp(&(q[c.0] - c.1).abs()))
                        .copied()
                };
                let (axis, value, _) = pick(true).or_else(|| pick(false)).expect("four faces");
                q[axis] = value;
                moved = true;
            }
            if which != Collide::Nothing {
                for a in 0..2 {
                    q[a] = q[a].clamp(self.lo[a] + CONTACT_GAP, self.hi[a] - CONTACT_GAP);
                }
            }
            if !moved {
                break;
            }
        }
        q
    }
}

/// Casts one ray per pixel against every obstacle (hidden ones included:
/// they are hidden only when something else occludes them). Depth is the
/// camera-frame depth of the first hit, `inf` on a miss.
pub fn render_depth(world: &World, cam: &Camera<f64>) -> DepthData<f64> {
    let o = cam.position();
    let z = (0..cam.width())
        .map(|px| {
            let d = cam.pixel_ray(px);
            world
                .obstacles
                .iter()
                .filter_map(|b| b.ray_hit(o, d))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    DepthData::from_depth(cam, z)
}
