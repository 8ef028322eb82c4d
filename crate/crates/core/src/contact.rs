//! Contact inference: labels from nominal-dynamics discrepancy, visual
//! cleaning of those labels, controller local-minimum detection, and the
//! memory/active dataset bookkeeping that parameterizes the surface.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::gp::TrainingSet;
use crate::gpis::{FreeSpaceOracle, DEDUP_TOLERANCE};
use crate::scalar::{dist, dist2, Real};
use crate::state::StateSet;

/// Predicted displacements below this carry no contact signal.
pub const EPS_DENOMINATOR: f64 = 1e-6;
/// A point must be this much closer than the sensed surface to count as visible.
pub const EPS_VISIBLE: f64 = 1e-4;

/// One observed step together with the nominal model's prediction for it.
#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub prev: StateSet<T>,
    pub control: Vec<T>,
    pub next: StateSet<T>,
    pub predicted: StateSet<T>,
}

impl<T: Real> Transition<T> {
    pub fn new(
        prev: StateSet<T>,
        control: Vec<T>,
        next: StateSet<T>,
        predicted: StateSet<T>,
    ) -> Result<Self> {
        if !prev.same_shape(&next) || !prev.same_shape(&predicted) {
            return Err(contract("transition states differ in shape"));
        }
        Ok(Self {
            prev,
            control,
            next,
            predicted,
        })
    }
}

/// Per-component labels for the observed (`y`) and predicted (`y_hat`)
/// next states plus the keep decisions made by [`pre_process`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBatch<T> {
    pub y: Vec<T>,
    pub y_hat: Vec<T>,
    pub keep_obs: Vec<bool>,
    pub keep_pred: Vec<bool>,
    /// Observed points kept as contact evidence (as opposed to being kept
    /// only because of a local minimum).
    pub contact_obs: Vec<bool>,
}

impl<T: Real> LabelBatch<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `Y = min(d(X_t, X_{t+1}) / d(X_t, X̂_{t+1}), 1)`, `Ŷ = 2Y − 1`. When the
/// predicted displacement is below [`EPS_DENOMINATOR`], `Y = 1`.
pub fn gen_labels<T: Real>(t: &Transition<T>, d_x: impl Fn(&[T], &[T]) -> T) -> LabelBatch<T> {
    let n = t.prev.len();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let den = d_x(t.prev.component(i), t.predicted.component(i));
        let label = if den < T::of(EPS_DENOMINATOR) {
            T::one()
        } else {
            (d_x(t.prev.component(i), t.next.component(i)) / den).min(T::one())
        };
        y.push(label);
    }
    let y_hat = y.iter().map(|v| T::of(2.0) * *v - T::one()).collect();
    LabelBatch {
        y,
        y_hat,
        keep_obs: vec![false; n],
        keep_pred: vec![false; n],
        contact_obs: vec![false; n],
    }
}

/// Static pinhole camera in the plane producing a single row of depth pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T> {
    position: [T; 2],
    yaw: T,
    focal: T,
    principal: T,
    width: usize,
}

impl<T: Real> Camera<T> {
    /// `fov` is the full horizontal field of view in radians.
    pub fn new(position: [T; 2], yaw: T, fov: T, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(contract("camera needs at least one pixel"));
        }
        if !(fov > T::zero() && fov < T::PI()) {
            return Err(contract("field of view must be in (0, π)"));
        }
        let principal = T::of_usize(width) * T::of(0.5);
        let focal = principal / (fov * T::of(0.5)).tan();
        Ok(Self {
            position,
            yaw,
            focal,
            principal,
            width,
        })
    }

    pub fn position(&self) -> [T; 2] {
        self.position
    }

    pub fn yaw(&self) -> T {
        self.yaw
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn focal(&self) -> T {
        self.focal
    }

    pub fn fov(&self) -> T {
        T::of(2.0) * (self.principal / self.focal).atan()
    }

    fn forward(&self) -> [T; 2] {
        [self.yaw.cos(), self.yaw.sin()]
    }

    fn lateral(&self) -> [T; 2] {
        [self.yaw.sin(), -self.yaw.cos()]
    }

    /// Pixel index and camera-frame depth of `x`, or `None` when the point is
    /// behind the camera or outside the image.
    pub fn project(&self, x: &[T]) -> Option<(usize, T)> {
        let d = [x[0] - self.position[0], x[1] - self.position[1]];
        let f = self.forward();
        let l = self.lateral();
        let z = d[0] * f[0] + d[1] * f[1];
        if !(z > T::zero()) {
            return None;
        }
        let lat = d[0] * l[0] + d[1] * l[1];
        let u = self.principal + self.focal * lat / z;
        if !(u >= T::zero()) || u >= T::of_usize(self.width) {
            return None;
        }
        Some((u.floor().to_usize()?.min(self.width - 1), z))
    }

    /// Direction through the center of `pixel`, scaled to unit depth, so
    /// `position + depth · ray` is the point at that depth.
    pub fn pixel_ray(&self, pixel: usize) -> [T; 2] {
        let u = T::of_usize(pixel) + T::of(0.5);
        let s = (u - self.principal) / self.focal;
        let f = self.forward();
        let l = self.lateral();
        [f[0] + s * l[0], f[1] + s * l[1]]
    }

    /// Back-projection of a pixel at depth `z`.
    pub fn back_project(&self, pixel: usize, z: T) -> [T; 2] {
        let r = self.pixel_ray(pixel);
        [self.position[0] + z * r[0], self.position[1] + z * r[1]]
    }
}

/// Depth row `z` (camera-frame depth per pixel, `inf` for no return) and
/// the point cloud of its finite returns.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthData<T> {
    pub z: Vec<T>,
    pub points: Vec<[T; 2]>,
}

impl<T: Real> DepthData<T> {
    pub fn from_depth(camera: &Camera<T>, z: Vec<T>) -> Self {
        let points = z
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| camera.back_project(i, *v))
            .collect();
        Self { z, points }
    }

    /// Minimum distance from `x` to the cloud (`inf` when empty).
    pub fn distance_to_cloud(&self, x: &[T]) -> T {
        self.points
            .iter()
            .map(|p| dist2(p, x))
            .fold(T::infinity(), T::min)
            .sqrt()
    }

    /// Header `width d`, one line of depths, then one cloud point per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} 2\n", self.z.len());
        let depths: Vec<String> = self
            .z
            .iter()
            .map(|v| {
                if v.is_finite() {
                    format!("{v}")
                } else {
                    "inf".to_string()
                }
            })
            .collect();
        out.push_str(&depths.join(" "));
        out.push('\n');
        for p in &self.points {
            writeln!(out, "{} {}", p[0], p[1]).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        if header.len() != 2 {
            return Err(bad(1, "expected header `width d`"));
        }
        let width: usize = header[0].parse().map_err(|_| bad(1, "bad width"))?;
        if header[1] != "2" {
            return Err(bad(1, "only planar depth data is supported"));
        }
        let parse = |s: &str, line: usize| -> Result<T> {
            if s == "inf" {
                Ok(T::infinity())
            } else {
                s.parse::<f64>()
                    .map(T::of)
                    .map_err(|_| bad(line, "bad number"))
            }
        };
        let z = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|s| parse(s, 2))
            .collect::<Result<Vec<_>>>()?;
        if z.len() != width {
            return Err(bad(2, "depth row length does not match width"));
        }
        let mut points = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<T> = line
                .split_whitespace()
                .map(|s| parse(s, k + 3))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(bad(k + 3, "cloud point needs 2 coordinates"));
            }
            points.push([v[0], v[1]]);
        }
        Ok(Self { z, points })
    }
}

/// True iff `x` projects into the image and lies in front of the sensed
/// surface by more than [`EPS_VISIBLE`].
pub fn visible<T: Real>(x: &[T], cam: &Camera<T>, depth: &DepthData<T>) -> bool {
    match cam.project(x) {
        Some((u, z)) => z < depth.z[u] - T::of(EPS_VISIBLE),
        None => false,
    }
}

/// Camera plus depth data, usable as the surface's free-space oracle.
#[derive(Debug, Clone)]
pub struct Vision<T> {
    pub camera: Camera<T>,
    pub depth: DepthData<T>,
}

impl<T: Real> FreeSpaceOracle<T> for Vision<T> {
    fn visibly_free(&self, x: &[T]) -> bool {
        visible(x, &self.camera, &self.depth)
    }
}

/// Visual label cleaning. Visible components away from the cloud become
/// exterior (`Y = 1`) and are dropped; visible components within `r_c` of
/// the cloud become surface points (`Y = 0`) and are kept. Predicted points
/// are kept only for non-visible components with `Ŷ < 0`. Without vision
/// every component counts as not visible.
pub fn pre_process<T: Real>(
    batch: &LabelBatch<T>,
    next: &StateSet<T>,
    vision: Option<&Vision<T>>,
    r_c: T,
    local_min: bool,
) -> Result<LabelBatch<T>> {
    if !(r_c > T::zero()) {
        return Err(contract("contact radius must be > 0"));
    }
    if batch.len() != next.len() {
        return Err(contract("label batch and state differ in length"));
    }
    let mut out = batch.clone();
    for i in 0..next.len() {
        let x = next.component(i);
        let (v, c) = match vision {
            Some(vis) => {
                let v = visible(x, &vis.camera, &vis.depth);
                (v, v && vis.depth.distance_to_cloud(x) < r_c)
            }
            None => (false, false),
        };
        if v && !c {
            out.y[i] = T::one();
        }
        if v && c {
            out.y[i] = T::zero();
        }
        let interior = !(v && !c) && batch.y_hat[i] < T::zero();
        out.contact_obs[i] = (v && c) || interior;
        out.keep_obs[i] = out.contact_obs[i] || local_min;
        out.keep_pred[i] = interior;
    }
    Ok(out)
}

/// `(1/T_m)·(1/n)·Σ d(X_{t+1}^i, X_s^i) < d_min`.
pub fn is_local_minimum<T: Real>(
    saved: &StateSet<T>,
    current: &StateSet<T>,
    period: usize,
    d_min: T,
) -> bool {
    current.mean_component_distance(saved) / T::of_usize(period.max(1)) < d_min
}

/// Periodic stall check against the state saved at the previous check.
#[derive(Debug, Clone)]
pub struct LocalMinimumDetector<T> {
    saved: StateSet<T>,
    period: usize,
    threshold: T,
    since_check: usize,
}

impl<T: Real> LocalMinimumDetector<T> {
    pub fn new(initial: StateSet<T>, period: usize, threshold: T) -> Result<Self> {
        if period == 0 {
            return Err(contract("local minimum period must be >= 1"));
        }
        Ok(Self {
            saved: initial,
            period,
            threshold,
            since_check: 0,
        })
    }

    /// Called once per step with the newly observed state. Returns whether a
    /// check happened this step and its outcome.
    pub fn observe(&mut self, next: &StateSet<T>) -> Option<bool> {
        self.since_check += 1;
        if self.since_check < self.period {
            return None;
        }
        self.since_check = 0;
        let stalled = is_local_minimum(&self.saved, next, self.period, self.threshold);
        self.saved = next.clone();
        Some(stalled)
    }

    pub fn saved(&self) -> &StateSet<T> {
        &self.saved
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Observed,
    Predicted,
    GoalSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint<T> {
    pub point: Vec<T>,
    pub label: T,
    pub source: Source,
    /// Added while the controller was stalled.
    pub local_min: bool,
}

impl<T: Real> DataPoint<T> {
    pub fn is_interior(&self) -> bool {
        self.label < T::zero()
    }

    pub fn is_goal_seed(&self) -> bool {
        self.source == Source::GoalSeed
    }
}

/// The memory dataset `D` and the active subset `D̄` that conditions the
/// surface. Mask bits live on each entry as `local_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPair<T> {
    dim: usize,
    /// New points closer than this to a stored point of the same source
    /// replace it.
    spacing: T,
    memory: Vec<DataPoint<T>>,
    active: Vec<DataPoint<T>>,
}

fn find<T: Real>(list: &[DataPoint<T>], p: &[T]) -> Option<usize> {
    let tol = T::of(DEDUP_TOLERANCE);
    list.iter().position(|d| dist2(&d.point, p) <= tol * tol)
}

fn find_near<T: Real>(list: &[DataPoint<T>], entry: &DataPoint<T>, spacing: T) -> Option<usize> {
    let tol = spacing.max(T::of(DEDUP_TOLERANCE));
    find(list, &entry.point).or_else(|| {
        list.iter()
            .position(|d| d.source == entry.source && dist2(&d.point, &entry.point) < tol * tol)
    })
}

/// Insert or overwrite. Goal seeds are never overwritten, and contact
/// evidence is never downgraded to local-minimum evidence.
fn upsert<T: Real>(list: &mut Vec<DataPoint<T>>, entry: DataPoint<T>, spacing: T) -> bool {
    match find_near(list, &entry, spacing) {
        Some(i) => {
            let old = &mut list[i];
            if old.is_goal_seed() || (!old.local_min && entry.local_min) {
                return false;
            }
            *old = entry;
            false
        }
        None => {
            list.push(entry);
            true
        }
    }
}

impl<T: Real> DatasetPair<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            spacing: T::of(DEDUP_TOLERANCE),
            memory: Vec::new(),
            active: Vec::new(),
        }
    }

    /// New active points replace active points of the same source within
    /// `spacing`. Memory only merges exact duplicates.
    pub fn with_spacing(mut self, spacing: T) -> Self {
        self.spacing = spacing.max(T::of(DEDUP_TOLERANCE));
        self
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn memory(&self) -> &[DataPoint<T>] {
        &self.memory
    }

    pub fn active(&self) -> &[DataPoint<T>] {
        &self.active
    }

    /// `M`.
    pub fn memory_mask(&self) -> Vec<bool> {
        self.memory.iter().map(|d| d.local_min).collect()
    }

    /// `M̄`.
    pub fn active_mask(&self) -> Vec<bool> {
        self.active.iter().map(|d| d.local_min).collect()
    }

    /// Goal points with label +1 into both sets, flagged non-removable.
    pub fn seed_goals(&mut self, goals: &[Vec<T>]) -> Result<()> {
        for g in goals {
            if g.len() != self.dim {
                return Err(contract("goal dimension mismatch"));
            }
            let entry = DataPoint {
                point: g.clone(),
                label: T::one(),
                source: Source::GoalSeed,
                local_min: false,
            };
            // seeds win over anything already stored at that location
            for list in [&mut self.memory, &mut self.active] {
                match find(list, g) {
                    Some(i) => list[i] = entry.clone(),
                    None => list.push(entry.clone()),
                }
            }
        }
        Ok(())
    }

    fn insert(&mut self, entry: DataPoint<T>) {
        upsert(&mut self.active, entry.clone(), self.spacing);
        upsert(&mut self.memory, entry, T::zero());
    }

    /// Appends the kept observed and predicted points of a cleaned batch.
    /// During a local minimum every observed component is added (masked)
    /// unless it already qualifies as contact evidence; predicted points are
    /// never added because of a local minimum.
    pub fn update(
        &mut self,
        batch: &LabelBatch<T>,
        next: &StateSet<T>,
        predicted: &StateSet<T>,
        local_min: bool,
    ) -> Result<()> {
        if next.dim() != self.dim || predicted.dim() != self.dim {
            return Err(contract("state dimension does not match dataset"));
        }
        if batch.len() != next.len() || !next.same_shape(predicted) {
            return Err(contract("batch and states differ in length"));
        }
        for i in 0..next.len() {
            if batch.contact_obs[i] {
                self.insert(DataPoint {
                    point: next.component(i).to_vec(),
                    label: batch.y[i],
                    source: Source::Observed,
                    local_min: false,
                });
            } else if local_min {
                self.insert(DataPoint {
                    point: next.component(i).to_vec(),
                    label: batch.y[i],
                    source: Source::Observed,
                    local_min: true,
                });
            }
            if batch.keep_pred[i] {
                self.insert(DataPoint {
                    point: predicted.component(i).to_vec(),
                    label: batch.y_hat[i],
                    source: Source::Predicted,
                    local_min: false,
                });
            }
        }
        Ok(())
    }

    /// Drops every local-minimum entry from both sets.
    pub fn purge_local_minima(&mut self) {
        self.memory.retain(|d| !d.local_min);
        self.active.retain(|d| !d.local_min);
    }

    /// Removes active entries whose `keep` bit is false. Goal seeds are
    /// always kept; memory is untouched.
    pub fn retain_active(&mut self, keep: &[bool]) -> Result<Vec<DataPoint<T>>> {
        if keep.len() != self.active.len() {
            return Err(contract("keep vector length does not match active set"));
        }
        let mut removed = Vec::new();
        let mut kept = Vec::with_capacity(self.active.len());
        for (d, k) in self.active.drain(..).zip(keep) {
            if *k || d.is_goal_seed() {
                kept.push(d);
            } else {
                removed.push(d);
            }
        }
        self.active = kept;
        Ok(removed)
    }

    pub fn active_training_set(&self) -> TrainingSet<T> {
        training_set(self.dim, self.active.iter())
    }

    pub fn memory_training_set(&self) -> TrainingSet<T> {
        training_set(self.dim, self.memory.iter())
    }

    /// Every unmasked active entry has an identical memory entry.
    pub fn memory_covers_active(&self) -> bool {
        self.active
            .iter()
            .filter(|d| !d.local_min)
            .all(|d| find(&self.memory, &d.point).is_some_and(|i| self.memory[i] == *d))
    }

    /// Whether an identical entry is stored in memory.
    pub fn in_memory(&self, d: &DataPoint<T>) -> bool {
        find(&self.memory, &d.point).is_some_and(|i| self.memory[i] == *d)
    }
}

fn training_set<'a, T: Real>(
    dim: usize,
    it: impl Iterator<Item = &'a DataPoint<T>>,
) -> TrainingSet<T> {
    let mut set = TrainingSet::new(dim);
    for d in it {
        set.push(&d.point, d.label)
            .expect("dataset points share the dataset dimension");
    }
    set
}

/// Euclidean component distance.
pub fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    dist(a, b)
}
