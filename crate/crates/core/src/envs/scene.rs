//! Built-in scenes and the plain-text scene format.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cable::CableModel;
use super::geometry::{Aabb, World};
use super::{state_of, Body, Env};
use crate::contact::Camera;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Peg,
    Cable,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Peg => "peg",
            Family::Cable => "cable",
        }
    }
}

/// Static planar camera (angles in degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub position: [f64; 2],
    pub yaw_deg: f64,
    pub fov_deg: f64,
    pub pixels: usize,
}

impl CameraSpec {
    pub fn build(&self) -> Result<Camera<f64>> {
        Camera::new(
            self.position,
            self.yaw_deg.to_radians(),
            self.fov_deg.to_radians(),
            self.pixels,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub family: Family,
    pub world: World,
    pub start: Vec<[f64; 2]>,
    pub goal: [f64; 2],
    /// Component that has to reach the goal.
    pub goal_component: usize,
    pub r_g: f64,
    pub camera: Option<CameraSpec>,
    pub cable: Option<CableModel>,
    /// Per-axis control bound.
    pub max_step: f64,
}

impl Scene {
    pub fn env(&self) -> Env {
        let body = match &self.cable {
            Some(m) => Body::Cable(m.clone()),
            None => Body::Peg,
        };
        Env::new(self.world.clone(), body, state_of(&self.start))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene {}: {m}", self.name)));
        if self.start.is_empty() {
            return bad("no start state");
        }
        if self.goal_component >= self.start.len() {
            return bad("goal component out of range");
        }
        if !(self.r_g > 0.0) || !(self.max_step > 0.0) {
            return bad("r_g and max_step must be positive");
        }
        if self.family == Family::Cable && self.cable.is_none() {
            return bad("cable scene without a cable line");
        }
        for b in &self.world.obstacles {
            if (0..2).any(|a| {
                b.lo[a] < self.world.lo[a] || b.hi[a] > self.world.hi[a] || b.lo[a] >= b.hi[a]
            }) {
                return bad("obstacle outside the workspace or empty");
            }
            if b.contains(&self.goal) {
                return bad("goal inside an obstacle");
            }
        }
        if let Some(c) = &self.camera {
            if self.world.obstacles.iter().any(|b| b.contains(&c.position)) {
                return bad("camera inside an obstacle");
            }
            c.build()?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "scene {}", self.name).unwrap();
        writeln!(out, "family {}", self.family.name()).unwrap();
        writeln!(
            out,
            "workspace {} {} {} {}",
            self.world.lo[0], self.world.lo[1], self.world.hi[0], self.world.hi[1]
        )
        .unwrap();
        for b in &self.world.obstacles {
            writeln!(
                out,
                "box {} {} {} {} {}",
                b.lo[0],
                b.lo[1],
                b.hi[0],
                b.hi[1],
                u8::from(b.observable)
            )
            .unwrap();
        }
        writeln!(out, "goal {} {} {}", self.goal[0], self.goal[1], self.r_g).unwrap();
        writeln!(out, "goal_component {}", self.goal_component).unwrap();
        match &self.cable {
            Some(m) => {
                let a = self.start[0];
                let b = self.start[1];
                writeln!(out, "cable {} {} {}", m.k, m.rest, m.gripped.len()).unwrap();
                writeln!(out, "start {} {} {} {}", a[0], a[1], b[0], b[1]).unwrap();
            }
            None => writeln!(out, "start {} {}", self.start[0][0], self.start[0][1]).unwrap(),
        }
        if let Some(c) = &self.camera {
            writeln!(
                out,
                "camera {} {} {} {} {}",
                c.position[0], c.position[1], c.yaw_deg, c.fov_deg, c.pixels
            )
            .unwrap();
        }
        writeln!(out, "max_step {}", self.max_step).unwrap();
        out
    }
}

fn hidden(lo: [f64; 2], hi: [f64; 2]) -> Aabb {
    Aabb::new(lo, hi, false)
}

fn peg_scene(name: &str, boxes: Vec<Aabb>, goal: [f64; 2]) -> Scene {
    let mut world = World::new([-0.3, -0.3], [0.3, 0.3]);
    world.obstacles = boxes;
    Scene {
        name: name.to_string(),
        family: Family::Peg,
        world,
        start: vec![[0.0, -0.2]],
        goal,
        goal_component: 0,
        r_g: 0.02,
        camera: None,
        cable: None,
        max_step: 0.03,
    }
}

/// Cable with `k` points, held at both ends, lying under a hidden bar; an
/// observable barrier hides the region above the cable from the camera.
/// The goal for the middle point lies above the bar.
pub fn cable_hook(k: usize) -> Scene {
    let world = World::new([-0.5, 0.0], [0.5, 0.7])
        .with_box(hidden([-0.05, 0.3], [0.5, 0.34]))
        .with_box(Aabb::new([-0.08, 0.29], [-0.06, 0.35], true));
    let model = CableModel::new(k, 0.28 / (k.max(2) - 1) as f64).gripped_at_both_ends();
    let start = model.straight([0.0, 0.22], [1.0, 0.0]);
    Scene {
        name: "cable_hook".to_string(),
        family: Family::Cable,
        world,
        start,
        goal: [0.14, 0.45],
        goal_component: k / 2,
        r_g: 0.04,
        camera: Some(CameraSpec {
            position: [-0.65, 0.32],
            yaw_deg: 0.0,
            fov_deg: 90.0,
            pixels: 64,
        }),
        cable: Some(model),
        max_step: 0.02,
    }
}

/// `peg_u`, `peg_i`, `peg_t` or `cable_hook` (eight cable points).
pub fn make_scene(name: &str) -> Result<Scene> {
    let scene = match name {
        "peg_u" => peg_scene(
            name,
            vec![
                hidden([-0.08, 0.0], [0.08, 0.02]),
                hidden([-0.08, 0.02], [-0.06, 0.14]),
                hidden([0.06, 0.02], [0.08, 0.14]),
            ],
            [0.0, 0.06],
        ),
        "peg_i" => peg_scene(name, vec![hidden([-0.15, 0.0], [0.15, 0.02])], [0.0, 0.12]),
        "peg_t" => peg_scene(
            name,
            vec![
                hidden([-0.15, 0.04], [0.15, 0.06]),
                hidden([-0.01, -0.1], [0.01, 0.04]),
            ],
            [0.0, 0.15],
        ),
        "cable_hook" => cable_hook(8),
        other => return Err(Error::Config(format!("unknown scene `{other}`"))),
    };
    scene.validate()?;
    Ok(scene)
}

/// Parses the line format written by [`Scene::to_text`]. Blank lines and
/// `#` comments are ignored.
pub fn parse_scene(text: &str) -> Result<Scene> {
    let mut name = "custom".to_string();
    let mut family = None;
    let mut lo = [-1.0, -1.0];
    let mut hi = [1.0, 1.0];
    let mut boxes = Vec::new();
    let mut goal = None;
    let mut goal_component = None;
    let mut start: Option<Vec<f64>> = None;
    let mut camera = None;
    let mut cable = None;
    let mut max_step = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        let rest: Vec<&str> = parts.collect();
        let bad = |msg: &str| Error::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let nums = |n: usize| -> Result<Vec<f64>> {
            if rest.len() != n {
                return Err(bad(&format!("`{key}` expects {n} values")));
            }
            rest.iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| bad(&format!("bad number `{s}`")))
                })
                .collect()
        };
        match key {
            "scene" => name = rest.join(" "),
            "family" => {
                family = Some(match rest.first().copied() {
                    Some("peg") => Family::Peg,
                    Some("cable") => Family::Cable,
                    _ => return Err(bad("family must be peg or cable")),
                })
            }
            "workspace" => {
                let v = nums(4)?;
                lo = [v[0], v[1]];
                hi = [v[2], v[3]];
            }
            "box" => {
                let v = nums(5)?;
                if v[4] != 0.0 && v[4] != 1.0 {
                    return Err(bad("observable flag must be 0 or 1"));
                }
                boxes.push(Aabb::new([v[0], v[1]], [v[2], v[3]], v[4] == 1.0));
            }
            "goal" => {
                let v = nums(3)?;
                goal = Some(([v[0], v[1]], v[2]));
            }
            "goal_component" => goal_component = Some(nums(1)?[0] as usize),
            "start" => {
                if rest.len() != 2 && rest.len() != 4 {
                    return Err(bad("start expects 2 or 4 values"));
                }
                start = Some(nums(rest.len())?);
            }
            "camera" => {
                let v = nums(5)?;
                camera = Some(CameraSpec {
                    position: [v[0], v[1]],
                    yaw_deg: v[2],
                    fov_deg: v[3],
                    pixels: v[4] as usize,
                });
            }
            "cable" => {
                let v = if rest.len() == 2 { nums(2)? } else { nums(3)? };
                if v[0] < 2.0 || v[0].fract() != 0.0 || !(v[1] > 0.0) {
                    return Err(bad(
                        "cable needs at least 2 points and a positive rest length",
                    ));
                }
                let m = CableModel::new(v[0] as usize, v[1]);
                cable = Some(match v.get(2).copied() {
                    None | Some(1.0) => m,
                    Some(2.0) => m.gripped_at_both_ends(),
                    Some(_) => return Err(bad("gripped end count must be 1 or 2")),
                });
            }
            "max_step" => max_step = Some(nums(1)?[0]),
            other => return Err(bad(&format!("unknown key `{other}`"))),
        }
    }
    let missing = |what: &str| Error::Config(format!("scene file lacks `{what}`"));
    let family = family.unwrap_or(if cable.is_some() {
        Family::Cable
    } else {
        Family::Peg
    });
    let (goal, r_g) = goal.ok_or_else(|| missing("goal"))?;
    let start_vals = start.ok_or_else(|| missing("start"))?;
    let start_pts = match (&cable, start_vals.len()) {
        (Some(m), 4) => m.straight(
            [start_vals[0], start_vals[1]],
            [start_vals[2] - start_vals[0], start_vals[3] - start_vals[1]],
        ),
        (None, 2) => vec![[start_vals[0], start_vals[1]]],
        _ => {
            return Err(Error::Config(
                "start must be `x y` for a peg and `x0 y0 x1 y1` for a cable".into(),
            ))
        }
    };
    let k = start_pts.len();
    let mut world = World::new(lo, hi);
    world.obstacles = boxes;
    let scene = Scene {
        name,
        family,
        world,
        start: start_pts,
        goal,
        goal_component: goal_component.unwrap_or(k / 2),
        r_g,
        camera,
        cable,
        max_step: max_step.unwrap_or(match family {
            Family::Peg => 0.03,
            Family::Cable => 0.02,
        }),
    };
    scene.validate()?;
    Ok(scene)
}
