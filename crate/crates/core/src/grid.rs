//! Axis-aligned boxes, regular grids, and boolean occupancy grids with a
//! plain-text serialization.

use std::fmt::Write as _;

use crate::error::{contract, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(contract("bounds corners differ in dimension"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(contract("bounds must have lo < hi on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// A regular cell-centered grid covering a box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    pub bounds: Bounds<T>,
    pub resolution: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(bounds: Bounds<T>, resolution: T) -> Result<Self> {
        if !(resolution > T::zero()) {
            return Err(contract(format!(
                "grid resolution must be > 0, got {resolution}"
            )));
        }
        Ok(Self { bounds, resolution })
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn origin(&self) -> &[T] {
        &self.bounds.lo
    }

    /// Cells per axis; enough to cover the box.
    pub fn shape(&self) -> Vec<usize> {
        self.bounds
            .lo
            .iter()
            .zip(&self.bounds.hi)
            .map(|(a, b)| {
                let cells = ((*b - *a) / self.resolution - T::of(1e-9)).ceil();
                cells.to_usize().unwrap_or(1).max(1)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the cell containing `x`, clamped to the grid.
    pub fn cell_of(&self, x: &[T], shape: &[usize]) -> Vec<usize> {
        x.iter()
            .zip(self.origin())
            .zip(shape)
            .map(|((v, o), n)| {
                let i = ((*v - *o) / self.resolution).floor();
                let i = i.to_i64().unwrap_or(0).clamp(0, *n as i64 - 1);
                i as usize
            })
            .collect()
    }

    pub fn center(&self, cell: &[usize]) -> Vec<T> {
        cell.iter()
            .zip(self.origin())
            .map(|(i, o)| *o + (T::of_usize(*i) + T::of(0.5)) * self.resolution)
            .collect()
    }
}

/// Flat index with axis 0 fastest.
pub fn flat_index(cell: &[usize], shape: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (i, n) in cell.iter().zip(shape) {
        idx += i * stride;
        stride *= n;
    }
    idx
}

pub fn unflatten(mut idx: usize, shape: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .map(|n| {
            let i = idx % n;
            idx /= n;
            i
        })
        .collect()
}

/// Boolean occupancy over a cell-centered grid; `true` = occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid<T> {
    pub origin: Vec<T>,
    pub resolution: T,
    pub shape: Vec<usize>,
    pub cells: Vec<bool>,
}

impl<T: Real> OccupancyGrid<T> {
    pub fn from_fn(spec: &GridSpec<T>, mut occupied: impl FnMut(&[T]) -> bool) -> Self {
        let shape = spec.shape();
        let total = shape.iter().product();
        let cells = (0..total)
            .map(|idx| occupied(&spec.center(&unflatten(idx, &shape))))
            .collect();
        Self {
            origin: spec.origin().to_vec(),
            resolution: spec.resolution,
            shape,
            cells,
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, cell: &[usize]) -> bool {
        self.cells[flat_index(cell, &self.shape)]
    }

    pub fn center(&self, cell: &[usize]) -> Vec<T> {
        cell.iter()
            .zip(&self.origin)
            .map(|(i, o)| *o + (T::of_usize(*i) + T::of(0.5)) * self.resolution)
            .collect()
    }

    /// Header `d resolution origin… shape…`, then rows of `0`/`1` (axis 0
    /// along a row, axis 1 down the rows). 3D grids repeat one such block
    /// per axis-2 slice, separated by blank lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write!(out, "{} {}", self.dim(), self.resolution).unwrap();
        for o in &self.origin {
            write!(out, " {o}").unwrap();
        }
        for n in &self.shape {
            write!(out, " {n}").unwrap();
        }
        out.push('\n');
        let nx = self.shape[0];
        let ny = self.shape.get(1).copied().unwrap_or(1);
        let nz = self.shape.get(2).copied().unwrap_or(1);
        for k in 0..nz {
            if k > 0 {
                out.push('\n');
            }
            for j in 0..ny {
                for i in 0..nx {
                    let occ = self.cells[i + nx * (j + ny * k)];
                    out.push(if occ { '1' } else { '0' });
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty grid file".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse {
            line: 1,
            msg: msg.to_string(),
        };
        let d: usize = fields
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing dimension"))?;
        if !(1..=3).contains(&d) || fields.len() != 2 + 2 * d {
            return Err(bad(
                "header must be `d resolution origin… shape…` with d in 1..=3",
            ));
        }
        let num = |s: &str| s.parse::<f64>().map(T::of).map_err(|_| bad("bad number"));
        let resolution = num(fields[1])?;
        let origin = fields[2..2 + d]
            .iter()
            .map(|s| num(s))
            .collect::<Result<Vec<_>>>()?;
        let shape = fields[2 + d..]
            .iter()
            .map(|s| s.parse::<usize>().map_err(|_| bad("bad shape")))
            .collect::<Result<Vec<_>>>()?;
        let nx = shape[0];
        let mut cells = Vec::with_capacity(shape.iter().product());
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if line.len() != nx {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: format!("expected {nx} cells"),
                });
            }
            for ch in line.chars() {
                match ch {
                    '0' => cells.push(false),
                    '1' => cells.push(true),
                    _ => {
                        return Err(Error::Parse {
                            line: ln + 1,
                            msg: format!("bad cell {ch:?}"),
                        })
                    }
                }
            }
        }
        if cells.len() != shape.iter().product::<usize>() {
            return Err(bad("cell count does not match shape"));
        }
        Ok(Self {
            origin,
            resolution,
            shape,
            cells,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_covers_bounds() {
        let spec =
            GridSpec::new(Bounds::new(vec![0.0, 0.0], vec![1.0, 0.55]).unwrap(), 0.1).unwrap();
        assert_eq!(spec.shape(), vec![10, 6]);
        assert_eq!(spec.cell_of(&[0.99, 0.549], &spec.shape()), vec![9, 5]);
        assert_eq!(spec.cell_of(&[-5.0, 5.0], &spec.shape()), vec![0, 5]);
        let c: Vec<f64> = spec.center(&[0, 0]);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn flat_index_round_trip() {
        let shape = [3, 4, 5];
        for idx in 0..60 {
            assert_eq!(flat_index(&unflatten(idx, &shape), &shape), idx);
        }
    }

    #[test]
    fn text_round_trip_2d_and_3d() {
        for shape in [vec![5usize, 3], vec![2, 3, 4]] {
            let spec = GridSpec::new(
                Bounds::new(
                    vec![0.0; shape.len()],
                    shape.iter().map(|n| *n as f64 * 0.5).collect(),
                )
                .unwrap(),
                0.5,
            )
            .unwrap();
            let mut k = 0;
            let grid = OccupancyGrid::from_fn(&spec, |_| {
                k += 1;
                k % 3 == 0
            });
            let back = OccupancyGrid::from_text(&grid.to_text()).unwrap();
            assert_eq!(back, grid);
        }
    }

    #[test]
    fn malformed_text_rejected() {
        assert!(OccupancyGrid::<f64>::from_text("").is_err());
        assert!(OccupancyGrid::<f64>::from_text("2 0.1 0 0 2 2\n01\n0x\n").is_err());
        assert!(OccupancyGrid::<f64>::from_text("2 0.1 0 0 2 2\n01\n").is_err());
    }
}
