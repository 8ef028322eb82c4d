//! Task constraints on the estimated surface: free-space path existence on
//! an occupancy grid and uncertainty-aware non-penetration.

use std::collections::VecDeque;

use crate::error::{contract, Result};
use crate::gp::TrainingSet;
use crate::gpis::{Gpis, SurfaceEstimate};
use crate::grid::{flat_index, unflatten, GridSpec, OccupancyGrid};
use crate::normal::inv_norm_cdf;
use crate::scalar::Real;
use crate::state::StateSet;

/// Free-cell component labels; `0` marks an occupied cell and free
/// components are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    pub shape: Vec<usize>,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl ComponentLabels {
    pub fn get(&self, cell: &[usize]) -> u32 {
        self.labels[flat_index(cell, &self.shape)]
    }
}

/// All offsets in {-1,0,1}^d except the origin (8 in 2D, 26 in 3D).
pub fn neighbor_offsets(d: usize) -> Vec<Vec<isize>> {
    let total = 3usize.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as isize - 1;
                    k /= 3;
                    o
                })
                .collect::<Vec<_>>()
        })
        .filter(|o| o.iter().any(|v| *v != 0))
        .collect()
}

fn neighbors<'a>(
    cell: &'a [usize],
    shape: &'a [usize],
    offsets: &'a [Vec<isize>],
) -> impl Iterator<Item = usize> + 'a {
    offsets.iter().filter_map(move |o| {
        let mut idx = 0;
        let mut stride = 1;
        for ((c, s), d) in cell.iter().zip(shape).zip(o) {
            let v = *c as isize + d;
            if v < 0 || v >= *s as isize {
                return None;
            }
            idx += v as usize * stride;
            stride *= s;
        }
        Some(idx)
    })
}

/// Labels free cells by connectivity (8-neighbour in 2D, 26 in 3D).
pub fn connected_components<T: Real>(grid: &OccupancyGrid<T>) -> ComponentLabels {
    let shape = grid.shape.clone();
    let offsets = neighbor_offsets(shape.len());
    let mut labels = vec![0u32; grid.cells.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..grid.cells.len() {
        if grid.cells[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let cell = unflatten(idx, &shape);
            for n in neighbors(&cell, &shape, &offsets) {
                if !grid.cells[n] && labels[n] == 0 {
                    labels[n] = count;
                    queue.push_back(n);
                }
            }
        }
    }
    ComponentLabels {
        shape,
        labels,
        count: count as usize,
    }
}

/// Whether the cell containing `start` and the cells containing every
/// target lie in one free component of the surface's occupancy grid. Cells
/// are classified lazily during a breadth-first search from `start`, which
/// gives the same answer as labelling the whole grid.
pub fn path_exists<T: Real, S: SurfaceEstimate<T> + ?Sized>(
    surface: &S,
    start: &[T],
    targets: &[Vec<T>],
    spec: &GridSpec<T>,
) -> bool {
    const UNKNOWN: u8 = 0;
    const FREE: u8 = 1;
    const OCCUPIED: u8 = 2;
    let shape = spec.shape();
    let total: usize = shape.iter().product();
    let mut state = vec![UNKNOWN; total];
    let classify = |idx: usize, state: &mut Vec<u8>| -> bool {
        if state[idx] == UNKNOWN {
            let c = spec.center(&unflatten(idx, &shape));
            state[idx] = if surface.mean(&c) <= T::zero() {
                OCCUPIED
            } else {
                FREE
            };
        }
        state[idx] == FREE
    };
    let start_idx = flat_index(&spec.cell_of(start, &shape), &shape);
    let mut remaining: Vec<usize> = targets
        .iter()
        .map(|g| flat_index(&spec.cell_of(g, &shape), &shape))
        .collect();
    if !classify(start_idx, &mut state) {
        return false;
    }
    for t in &remaining {
        if !classify(*t, &mut state) {
            return false;
        }
    }
    remaining.retain(|t| *t != start_idx);
    if remaining.is_empty() {
        return true;
    }
    let offsets = neighbor_offsets(shape.len());
    let mut seen = vec![false; total];
    seen[start_idx] = true;
    let mut queue = VecDeque::from([start_idx]);
    while let Some(idx) = queue.pop_front() {
        let cell = unflatten(idx, &shape);
        for n in neighbors(&cell, &shape, &offsets) {
            if seen[n] {
                continue;
            }
            seen[n] = true;
            if classify(n, &mut state) {
                remaining.retain(|t| *t != n);
                if remaining.is_empty() {
                    return true;
                }
                queue.push_back(n);
            }
        }
    }
    false
}

/// False iff some component has `μ + Φ⁻¹(ζ)σ ≤ 0`.
pub fn no_penetration<T: Real>(surface: &Gpis<T>, x: &StateSet<T>, zeta: T) -> Result<bool> {
    let q = inv_norm_cdf(zeta)?;
    for c in x.components() {
        let (mu, var) = surface.mean_and_raw_variance(c);
        if mu + q * var.sqrt() <= T::zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One member of the constraint set.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec<T> {
    /// A free path from the tracked component (all components when `None`)
    /// to every goal point.
    PathExists {
        grid: GridSpec<T>,
        component: Option<usize>,
    },
    /// Every component's lower confidence bound stays positive.
    NoPenetration { zeta: T },
}

/// Auxiliary arguments shared by all constraints.
#[derive(Debug, Clone)]
pub struct ConstraintAux<T> {
    pub state: StateSet<T>,
    pub goals: Vec<Vec<T>>,
}

/// The conjunction `h_all`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet<T> {
    specs: Vec<ConstraintSpec<T>>,
}

impl<T: Real> ConstraintSet<T> {
    pub fn new(specs: Vec<ConstraintSpec<T>>) -> Result<Self> {
        if specs.is_empty() {
            return Err(contract(
                "constraint set must contain at least one constraint",
            ));
        }
        for s in &specs {
            if let ConstraintSpec::NoPenetration { zeta } = s {
                if !(*zeta > T::zero() && *zeta < T::one()) {
                    return Err(contract("ζ must lie in (0, 1)"));
                }
            }
        }
        Ok(Self { specs })
    }

    pub fn specs(&self) -> &[ConstraintSpec<T>] {
        &self.specs
    }

    /// Evaluates every constraint against an already-built surface.
    pub fn satisfied(&self, surface: &Gpis<T>, aux: &ConstraintAux<T>) -> Result<bool> {
        for spec in &self.specs {
            let ok = match spec {
                ConstraintSpec::PathExists { grid, component } => {
                    let comps: Vec<usize> = match component {
                        Some(i) => {
                            if *i >= aux.state.len() {
                                return Err(contract("tracked component out of range"));
                            }
                            vec![*i]
                        }
                        None => (0..aux.state.len()).collect(),
                    };
                    comps
                        .into_iter()
                        .all(|i| path_exists(surface, aux.state.component(i), &aux.goals, grid))
                }
                ConstraintSpec::NoPenetration { zeta } => {
                    no_penetration(surface, &aux.state, *zeta)?
                }
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `h_all(D̄, ω)`: the constraints evaluated on a surface conditioned only
    /// on the entries of `active` with `ω = 1`, with the kernel and oracle
    /// of `base`.
    pub fn h_all(
        &self,
        base: &Gpis<T>,
        active: &TrainingSet<T>,
        omega: &[bool],
        aux: &ConstraintAux<T>,
    ) -> Result<bool> {
        if omega.len() != active.len() {
            return Err(contract("ω length does not match the active set"));
        }
        let surface = base.conditioned_on(active.subset(omega))?;
        self.satisfied(&surface, aux)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelParams;
    use crate::grid::Bounds;

    fn grid_from(rows: &[&str]) -> OccupancyGrid<f64> {
        let h = rows.len();
        let w = rows[0].len();
        let mut cells = vec![false; w * h];
        for (y, r) in rows.iter().enumerate() {
            for (x, ch) in r.chars().enumerate() {
                cells[flat_index(&[x, y], &[w, h])] = ch == '#';
            }
        }
        OccupancyGrid {
            origin: vec![0.0, 0.0],
            resolution: 1.0,
            shape: vec![w, h],
            cells,
        }
    }

    #[test]
    fn offsets_count() {
        assert_eq!(neighbor_offsets(2).len(), 8);
        assert_eq!(neighbor_offsets(3).len(), 26);
    }

    #[test]
    fn components_basic() {
        let g = grid_from(&["....", "....", "....", "...."]);
        let c = connected_components(&g);
        assert_eq!(c.count, 1);
        assert!(c.labels.iter().all(|l| *l == 1));
        let g = grid_from(&["..#..", "..#..", "..#.."]);
        assert_eq!(connected_components(&g).count, 2);
        // diagonal gap is passable with 8-connectivity
        let g = grid_from(&["#.", ".#"]);
        assert_eq!(connected_components(&g).count, 1);
    }

    #[test]
    fn components_3d() {
        let mut cells = vec![false; 27];
        // wall at z = 1
        for x in 0..3 {
            for y in 0..3 {
                cells[flat_index(&[x, y, 1], &[3, 3, 3])] = true;
            }
        }
        let g = OccupancyGrid {
            origin: vec![0.0; 3],
            resolution: 1.0,
            shape: vec![3, 3, 3],
            cells,
        };
        assert_eq!(connected_components(&g).count, 2);
    }

    fn ring_surface(open: bool) -> Gpis<f64> {
        let p = KernelParams::new(0.05, 1.0, 1e-6).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let n = 24;
        for k in 0..n {
            let a = k as f64 / n as f64 * std::f64::consts::TAU;
            if open && k == 0 {
                continue;
            }
            pts.push(vec![0.5 + 0.2 * a.cos(), 0.5 + 0.2 * a.sin()]);
            labels.push(-1.0);
        }
        pts.push(vec![0.5, 0.5]);
        labels.push(1.0);
        pts.push(vec![0.05, 0.05]);
        labels.push(1.0);
        Gpis::new(2, p)
            .conditioned_on(TrainingSet::from_points(2, &pts, &labels).unwrap())
            .unwrap()
    }

    fn unit_spec(res: f64) -> GridSpec<f64> {
        GridSpec::new(Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), res).unwrap()
    }

    #[test]
    fn lazy_search_matches_full_labelling() {
        let spec = unit_spec(0.02);
        for open in [false, true] {
            let s = ring_surface(open);
            let start = [0.05, 0.05];
            let goal = vec![0.5, 0.5];
            let grid = s.occupancy_grid(&spec).unwrap();
            let labels = connected_components(&grid);
            let shape = spec.shape();
            let a = labels.get(&spec.cell_of(&start, &shape));
            let b = labels.get(&spec.cell_of(&goal, &shape));
            let full = a != 0 && a == b;
            assert_eq!(path_exists(&s, &start, &[goal], &spec), full);
        }
    }

    #[test]
    fn occupied_endpoint_violates() {
        let p = KernelParams::new(0.1, 1.0, 1e-6).unwrap();
        let s = Gpis::new(2, p);
        // empty prior: everything is occupied
        assert!(!path_exists(
            &s,
            &[0.1, 0.1],
            &[vec![0.9, 0.9]],
            &unit_spec(0.1)
        ));
    }

    #[test]
    fn penetration_check() {
        let p = KernelParams::new(0.1, 1.0, 1e-8).unwrap();
        let s = Gpis::new(2, p)
            .conditioned_on(TrainingSet::from_points(2, &[vec![0.0, 0.0]], &[-1.0]).unwrap())
            .unwrap();
        let x = StateSet::from_components(&[vec![0.0, 0.0]]).unwrap();
        assert!(!no_penetration(&s, &x, 0.5).unwrap());
        let far = StateSet::from_components(&[vec![5.0, 5.0]]).unwrap();
        // prior mean 0 counts as penetration
        assert!(!no_penetration(&s, &far, 0.5).unwrap());
        assert!(no_penetration(&s, &x, 1.5).is_err());
    }

    #[test]
    fn conjunction() {
        let spec = unit_spec(0.02);
        let s = ring_surface(false);
        let aux = ConstraintAux {
            state: StateSet::from_components(&[vec![0.5, 0.5]]).unwrap(),
            goals: vec![vec![0.5, 0.5]],
        };
        let path = ConstraintSpec::PathExists {
            grid: spec,
            component: Some(0),
        };
        let set = ConstraintSet::new(vec![path.clone()]).unwrap();
        assert!(set.satisfied(&s, &aux).unwrap());
        // goal seed interior label 1 is positive; state at the ring is not
        let aux_bad = ConstraintAux {
            state: StateSet::from_components(&[vec![0.7, 0.5]]).unwrap(),
            goals: vec![vec![0.5, 0.5]],
        };
        let both =
            ConstraintSet::new(vec![path, ConstraintSpec::NoPenetration { zeta: 0.5 }]).unwrap();
        assert!(!both.satisfied(&s, &aux_bad).unwrap());
        assert!(ConstraintSet::<f64>::new(vec![]).is_err());
    }
}
