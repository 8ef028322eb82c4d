//! Episode configuration with per-family defaults and `key = value` text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::envs::{make_scene, Family};
use crate::error::{Error, Result};

/// Everything an episode needs besides the scene geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub scene: String,
    pub seed: u64,
    /// MPPI temperature.
    pub lambda: f64,
    pub samples: usize,
    pub horizon: usize,
    /// Diagonal control-noise variance.
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub collision: f64,
    pub d_min: f64,
    pub t_m: usize,
    pub t_e: usize,
    pub t_fit: usize,
    pub r_g: f64,
    pub r_c: f64,
    pub t_cma: usize,
    pub population: usize,
    pub zeta: f64,
    pub max_steps: usize,
    pub vision: bool,
    pub refinement: bool,
    pub local_min: bool,
    /// False runs the non-adaptive baseline: no surface learning, collision
    /// checks against observed geometry only.
    pub adaptive: bool,
    pub lengthscale: f64,
    pub outputscale: f64,
    pub noise: f64,
    pub fit_steps: usize,
    pub fit_lr: f64,
    pub lengthscale_min: f64,
    pub lengthscale_max: f64,
    /// Occupancy-grid cell size; `0` means `r_g / 2`.
    pub grid_resolution: f64,
    /// Minimum spacing between active points of the same source.
    pub spacing: f64,
    /// Std of Gaussian noise on the observed state.
    pub state_noise: f64,
    /// Per-axis control bound; `0` uses the scene's.
    pub u_max: f64,
}

/// Keys accepted by [`EpisodeConfig::set`].
pub const KEYS: &[&str] = &[
    "scene",
    "seed",
    "lambda",
    "K",
    "T",
    "sigma",
    "alpha",
    "beta",
    "eta",
    "C",
    "d_min",
    "T_m",
    "T_e",
    "T_fit",
    "r_g",
    "r_c",
    "T_CMA",
    "N",
    "zeta",
    "max_steps",
    "vision",
    "refinement",
    "local_min",
    "adaptive",
    "lengthscale",
    "outputscale",
    "noise",
    "fit_steps",
    "fit_lr",
    "lengthscale_min",
    "lengthscale_max",
    "grid_resolution",
    "spacing",
    "state_noise",
    "u_max",
];

impl EpisodeConfig {
    /// Parameter defaults for a scene family.
    pub fn defaults(family: Family) -> Self {
        match family {
            Family::Peg => Self {
                scene: "peg_u".into(),
                seed: 0,
                lambda: 0.01,
                samples: 500,
                horizon: 15,
                sigma: 0.2,
                alpha: 0.59,
                beta: 0.996,
                eta: 11.03,
                collision: 15.88,
                d_min: 0.01,
                t_m: 5,
                t_e: 1,
                t_fit: 3,
                r_g: 0.02,
                r_c: 0.01,
                t_cma: 25,
                population: 20,
                zeta: 0.5,
                max_steps: 750,
                vision: false,
                refinement: true,
                local_min: true,
                adaptive: true,
                lengthscale: 0.1,
                outputscale: 1.0,
                noise: 1e-4,
                fit_steps: 5,
                fit_lr: 0.05,
                lengthscale_min: 0.02,
                lengthscale_max: 0.3,
                grid_resolution: 0.0,
                spacing: 0.005,
                state_noise: 0.0,
                u_max: 0.0,
            },
            Family::Cable => Self {
                scene: "cable_hook".into(),
                lambda: 0.167,
                samples: 72,
                horizon: 8,
                sigma: 0.004,
                alpha: 0.627,
                beta: 0.995,
                eta: 100.0,
                collision: 10000.0,
                d_min: 0.01,
                t_m: 3,
                t_e: 3,
                t_fit: 2,
                r_g: 0.04,
                r_c: 0.01,
                zeta: 0.4,
                max_steps: 200,
                vision: true,
                t_cma: 25,
                population: 50,
                lengthscale: 0.06,
                lengthscale_max: 0.08,
                ..Self::defaults(Family::Peg)
            },
        }
    }

    /// Family defaults for a built-in scene.
    pub fn for_scene(name: &str) -> Result<Self> {
        let scene = make_scene(name)?;
        Ok(Self {
            scene: name.to_string(),
            ..Self::defaults(scene.family)
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Overrides one key. Keys follow the parameter table names (`K`, `T`,
    /// `C`, `T_m`, `N`, ...).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = || Error::Config(format!("bad value `{value}` for `{key}`"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let u = || value.parse::<usize>().map_err(|_| bad());
        let b = || match value {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(bad()),
        };
        match key.trim() {
            "scene" => self.scene = value.to_string(),
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "lambda" => self.lambda = f()?,
            "K" => self.samples = u()?,
            "T" => self.horizon = u()?,
            "sigma" => self.sigma = f()?,
            "alpha" => self.alpha = f()?,
            "beta" => self.beta = f()?,
            "eta" => self.eta = f()?,
            "C" => self.collision = f()?,
            "d_min" => self.d_min = f()?,
            "T_m" => self.t_m = u()?,
            "T_e" => self.t_e = u()?,
            "T_fit" => self.t_fit = u()?,
            "r_g" => self.r_g = f()?,
            "r_c" => self.r_c = f()?,
            "T_CMA" => self.t_cma = u()?,
            "N" => self.population = u()?,
            "zeta" => self.zeta = f()?,
            "max_steps" => self.max_steps = u()?,
            "vision" => self.vision = b()?,
            "refinement" => self.refinement = b()?,
            "local_min" => self.local_min = b()?,
            "adaptive" => self.adaptive = b()?,
            "lengthscale" => self.lengthscale = f()?,
            "outputscale" => self.outputscale = f()?,
            "noise" => self.noise = f()?,
            "fit_steps" => self.fit_steps = u()?,
            "fit_lr" => self.fit_lr = f()?,
            "lengthscale_min" => self.lengthscale_min = f()?,
            "lengthscale_max" => self.lengthscale_max = f()?,
            "grid_resolution" => self.grid_resolution = f()?,
            "spacing" => self.spacing = f()?,
            "state_noise" => self.state_noise = f()?,
            "u_max" => self.u_max = f()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        self.set(k, v)
    }

    /// Parses `key = value` lines on top of the defaults of the family of
    /// the file's `scene` (peg defaults when absent).
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match pairs.iter().find(|(_, k, _)| k == "scene") {
            Some((_, _, name)) => Self::for_scene(name)?,
            None => Self::defaults(Family::Peg),
        };
        for (line, k, v) in pairs {
            cfg.set(&k, &v).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "scene" => self.scene.clone(),
            "seed" => self.seed.to_string(),
            "lambda" => self.lambda.to_string(),
            "K" => self.samples.to_string(),
            "T" => self.horizon.to_string(),
            "sigma" => self.sigma.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "eta" => self.eta.to_string(),
            "C" => self.collision.to_string(),
            "d_min" => self.d_min.to_string(),
            "T_m" => self.t_m.to_string(),
            "T_e" => self.t_e.to_string(),
            "T_fit" => self.t_fit.to_string(),
            "r_g" => self.r_g.to_string(),
            "r_c" => self.r_c.to_string(),
            "T_CMA" => self.t_cma.to_string(),
            "N" => self.population.to_string(),
            "zeta" => self.zeta.to_string(),
            "max_steps" => self.max_steps.to_string(),
            "vision" => self.vision.to_string(),
            "refinement" => self.refinement.to_string(),
            "local_min" => self.local_min.to_string(),
            "adaptive" => self.adaptive.to_string(),
            "lengthscale" => self.lengthscale.to_string(),
            "outputscale" => self.outputscale.to_string(),
            "noise" => self.noise.to_string(),
            "fit_steps" => self.fit_steps.to_string(),
            "fit_lr" => self.fit_lr.to_string(),
            "lengthscale_min" => self.lengthscale_min.to_string(),
            "lengthscale_max" => self.lengthscale_max.to_string(),
            "grid_resolution" => self.grid_resolution.to_string(),
            "spacing" => self.spacing.to_string(),
            "state_noise" => self.state_noise.to_string(),
            "u_max" => self.u_max.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.samples == 0 || self.horizon == 0 || self.population < 2 {
            return bad("K, T must be positive and N at least 2");
        }
        if self.t_m == 0 || self.t_e == 0 || self.t_fit == 0 {
            return bad("T_m, T_e and T_fit must be positive");
        }
        if !(self.lambda > 0.0 && self.sigma > 0.0 && self.r_g > 0.0 && self.r_c > 0.0) {
            return bad("lambda, sigma, r_g and r_c must be positive");
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad("zeta must lie in (0, 1)");
        }
        if !(self.lengthscale > 0.0 && self.outputscale > 0.0 && self.noise >= 0.0) {
            return bad("kernel parameters out of range");
        }
        if !(self.lengthscale_min > 0.0 && self.lengthscale_min <= self.lengthscale_max) {
            return bad("lengthscale bounds out of order");
        }
        if self.grid_resolution < 0.0
            || self.spacing < 0.0
            || self.state_noise < 0.0
            || self.u_max < 0.0
        {
            return bad("grid_resolution, spacing, state_noise and u_max must be non-negative");
        }
        Ok(())
    }

    pub fn grid_resolution(&self) -> f64 {
        if self.grid_resolution > 0.0 {
            self.grid_resolution
        } else {
            self.r_g / 2.0
        }
    }
}
