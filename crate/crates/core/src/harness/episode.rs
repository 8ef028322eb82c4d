//! The high-level control loop.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::EpisodeConfig;
use crate::constraints::{ConstraintAux, ConstraintSet, ConstraintSpec};
use crate::contact::{
    euclidean, gen_labels, pre_process, DatasetPair, LocalMinimumDetector, Transition, Vision,
};
use crate::control::{mppi_step, select_component, CostWeights, GoalSet, MppiConfig};
use crate::envs::{render_depth, Collide, Env, Family, Scene, World};
use crate::error::{Error, Result};
use crate::gp::{HyperFit, KernelParams};
use crate::gpis::{FreeSpaceOracle, Gpis, SurfaceEstimate};
use crate::grid::{Bounds, GridSpec, OccupancyGrid};
use crate::refine::{refine_contacts, RefineConfig, RefinementRecord};
use crate::scalar::dist;
use crate::state::StateSet;

/// Independent random streams derived from the episode seed.
pub mod stream {
    pub const MPPI: u64 = 1;
    pub const CMA: u64 = 2;
    pub const ENV: u64 = 3;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Known geometry only: inside an observable obstacle is −1, everything
/// else +1, with no uncertainty. Used by the non-adaptive baseline.
#[derive(Debug, Clone)]
pub struct ObservedGeometry {
    pub world: World,
}

impl SurfaceEstimate<f64> for ObservedGeometry {
    fn mean(&self, x: &[f64]) -> f64 {
        if self.world.occupied(x, Collide::ObservableOnly) {
            -1.0
        } else {
            1.0
        }
    }

    fn raw_variance(&self, _: &[f64]) -> f64 {
        0.0
    }
}

/// Compact refinement summary for the step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementEvent {
    pub active_before: usize,
    pub active_after: usize,
    pub free_variables: usize,
    pub generations: usize,
    pub found_feasible: bool,
    pub phi: f64,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Vec<f64>,
    /// Observed state after the step.
    pub state: Vec<[f64; 2]>,
    /// Exploration component used for planning.
    pub component: usize,
    pub labels_added: usize,
    pub local_min_checked: bool,
    pub local_min: bool,
    pub memory: usize,
    pub active: usize,
    pub constraints_ok: Option<bool>,
    pub refinement: Option<RefinementEvent>,
    pub lengthscale: f64,
    pub goal_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub config: EpisodeConfig,
    pub scene: Option<Scene>,
    pub success: bool,
    pub steps: usize,
    pub error: Option<String>,
    pub start: Vec<[f64; 2]>,
    pub log: Vec<StepRecord>,
    pub refinements: Vec<RefinementRecord<f64>>,
    pub dataset: DatasetPair<f64>,
    /// Final occupancy grid in the plain-text grid format.
    pub grid: String,
    pub wall_clock_s: f64,
}

impl EpisodeReport {
    /// Positions of every component over time, starting state first.
    pub fn trajectory(&self) -> Vec<Vec<[f64; 2]>> {
        std::iter::once(self.start.clone())
            .chain(self.log.iter().map(|r| r.state.clone()))
            .collect()
    }

    /// One JSON record per step.
    pub fn step_log_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.log {
            out.push_str(&serde_json::to_string(r).expect("step records serialize"));
            out.push('\n');
        }
        out
    }
}

fn points_of(x: &StateSet<f64>) -> Vec<[f64; 2]> {
    x.components().map(|c| [c[0], c[1]]).collect()
}

fn kernel(cfg: &EpisodeConfig) -> Result<KernelParams<f64>> {
    KernelParams::new(cfg.lengthscale, cfg.outputscale, cfg.noise)
}

/// The constraint set used for a scene family: path existence for the peg
/// tasks, uncertainty-aware non-penetration for the cable.
pub fn constraints_for(scene: &Scene, cfg: &EpisodeConfig) -> Result<ConstraintSet<f64>> {
    let spec = match scene.family {
        Family::Peg => ConstraintSpec::PathExists {
            grid: grid_spec(scene, cfg)?,
            component: Some(scene.goal_component),
        },
        Family::Cable => ConstraintSpec::NoPenetration { zeta: cfg.zeta },
    };
    ConstraintSet::new(vec![spec])
}

pub fn grid_spec(scene: &Scene, cfg: &EpisodeConfig) -> Result<GridSpec<f64>> {
    GridSpec::new(
        Bounds::new(scene.world.lo.to_vec(), scene.world.hi.to_vec())?,
        cfg.grid_resolution(),
    )
}

struct Runner<'a> {
    cfg: &'a EpisodeConfig,
    scene: &'a Scene,
    env: Env,
    goals: GoalSet<f64>,
    weights: CostWeights<f64>,
    mppi: MppiConfig<f64>,
    constraints: ConstraintSet<f64>,
    base: Gpis<f64>,
    surface: Gpis<f64>,
    baseline: ObservedGeometry,
    dp: DatasetPair<f64>,
    vision: Option<Vision<f64>>,
    params: KernelParams<f64>,
    mppi_rng: ChaCha8Rng,
    cma_rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
    log: Vec<StepRecord>,
    refinements: Vec<RefinementRecord<f64>>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a EpisodeConfig, scene: &'a Scene) -> Result<Self> {
        cfg.validate()?;
        let env = scene.env();
        let goals = GoalSet::single(scene.goal_component, scene.goal.to_vec());
        let weights = CostWeights {
            alpha: cfg.alpha,
            beta: cfg.beta,
            collision: cfg.collision,
            eta: cfg.eta,
            r_g: cfg.r_g,
        };
        weights.validate()?;
        let bound = if cfg.u_max > 0.0 {
            cfg.u_max
        } else {
            scene.max_step
        };
        let dim = env.control_dim();
        let mppi = MppiConfig {
            lambda: cfg.lambda,
            samples: cfg.samples,
            horizon: cfg.horizon,
            noise: vec![cfg.sigma; dim],
            u_min: vec![-bound; dim],
            u_max: vec![bound; dim],
        };
        mppi.validate()?;
        let vision = match (&scene.camera, cfg.vision) {
            (Some(c), true) => {
                let camera = c.build()?;
                let depth = render_depth(&scene.world, &camera);
                Some(Vision { camera, depth })
            }
            _ => None,
        };
        let params = kernel(cfg)?;
        let oracle = vision
            .clone()
            .map(|v| Arc::new(v) as Arc<dyn FreeSpaceOracle<f64>>);
        let base = Gpis::new(2, params).with_oracle(oracle);
        let mut dp = DatasetPair::new(2).with_spacing(cfg.spacing);
        dp.seed_goals(&goals.points())?;
        let surface = base.conditioned_on(dp.active_training_set())?;
        Ok(Self {
            cfg,
            scene,
            env,
            goals,
            weights,
            mppi,
            constraints: constraints_for(scene, cfg)?,
            base,
            surface,
            baseline: ObservedGeometry {
                world: scene.world.clone(),
            },
            dp,
            vision,
            params,
            mppi_rng: stream_rng(cfg.seed, stream::MPPI),
            cma_rng: stream_rng(cfg.seed, stream::CMA),
            env_rng: stream_rng(cfg.seed, stream::ENV),
            log: Vec::new(),
            refinements: Vec::new(),
        })
    }

    fn observe(&mut self, truth: &StateSet<f64>) -> StateSet<f64> {
        if self.cfg.state_noise <= 0.0 {
            return truth.clone();
        }
        let mut x = truth.clone();
        let sd = self.cfg.state_noise;
        let n = x.len();
        for i in 0..n {
            for v in x.component_mut(i) {
                *v += sd * self.env_rng.sample::<f64, _>(StandardNormal);
            }
        }
        x
    }

    fn recondition(&mut self) -> Result<()> {
        self.surface = self
            .base
            .conditioned_on_with(self.dp.active_training_set(), self.params)?;
        Ok(())
    }

    fn run(&mut self) -> Result<(bool, usize)> {
        let mut x = self.observe(&self.env.state().clone());
        let mut nominal = self.mppi.zero_sequence();
        let mut detector = LocalMinimumDetector::new(x.clone(), self.cfg.t_m, self.cfg.d_min)?;
        let mut s = 0;
        if self.goals.reached(&x, self.cfg.r_g) {
            return Ok((true, 0));
        }
        for t in 0..self.cfg.max_steps {
            let step = t + 1;
            if t % self.cfg.t_e == 0 {
                s = if self.cfg.adaptive {
                    select_component(&self.surface, &x)
                } else {
                    select_component(&self.baseline, &x)
                };
            }
            let env = &self.env;
            let f = |xs: &StateSet<f64>, u: &[f64]| env.nominal(xs, u);
            let out = if self.cfg.adaptive {
                mppi_step(
                    &x,
                    &nominal,
                    &f,
                    &self.surface,
                    &self.goals,
                    &self.weights,
                    &self.mppi,
                    s,
                    &mut self.mppi_rng,
                )?
            } else {
                mppi_step(
                    &x,
                    &nominal,
                    &f,
                    &self.baseline,
                    &self.goals,
                    &self.weights,
                    &self.mppi,
                    s,
                    &mut self.mppi_rng,
                )?
            };
            nominal = out.nominal;
            let u = out.action;
            let truth = self.env.step_truth(&u);
            let next = self.observe(&truth);
            let predicted = self.env.nominal(&x, &u);

            let mut record = StepRecord {
                step,
                action: u.clone(),
                state: points_of(&next),
                component: s,
                labels_added: 0,
                local_min_checked: false,
                local_min: false,
                memory: self.dp.memory().len(),
                active: self.dp.active().len(),
                constraints_ok: None,
                refinement: None,
                lengthscale: self.params.lengthscale(),
                goal_distance: self
                    .goals
                    .entries
                    .iter()
                    .map(|(i, g)| dist(next.component(*i), g))
                    .fold(0.0, f64::max),
            };

            if self.cfg.adaptive {
                let transition =
                    Transition::new(x.clone(), u.clone(), next.clone(), predicted.clone())?;
                let batch = gen_labels(&transition, euclidean);
                let check = detector.observe(&next);
                record.local_min_checked = check.is_some();
                let local_min = self.cfg.local_min && check.unwrap_or(false);
                record.local_min = local_min;
                let cleaned =
                    pre_process(&batch, &next, self.vision.as_ref(), self.cfg.r_c, local_min)?;
                record.labels_added = cleaned
                    .keep_obs
                    .iter()
                    .chain(&cleaned.keep_pred)
                    .filter(|k| **k)
                    .count();
                self.dp.update(&cleaned, &next, &predicted, local_min)?;
                self.recondition()?;

                let aux = ConstraintAux {
                    state: next.clone(),
                    goals: self.goals.points(),
                };
                let ok = self.constraints.satisfied(&self.surface, &aux)?;
                record.constraints_ok = Some(ok);
                if !ok && self.cfg.refinement {
                    let seed = self.cma_rng.next_u64();
                    let rc = RefineConfig {
                        generations: self.cfg.t_cma,
                        population: self.cfg.population,
                        seed,
                    };
                    let mut rec =
                        refine_contacts(&mut self.dp, &self.surface, &self.constraints, &aux, rc)?;
                    rec.step = step;
                    record.refinement = Some(RefinementEvent {
                        active_before: rec.active_before,
                        active_after: rec.active_after,
                        free_variables: rec.free_variables,
                        generations: rec.generations,
                        found_feasible: rec.found_feasible,
                        phi: rec.phi,
                        removed: rec.removed.len(),
                    });
                    self.refinements.push(rec);
                    self.recondition()?;
                }
                if step % self.cfg.t_fit == 0 && self.cfg.fit_steps > 0 {
                    let fit = HyperFit {
                        steps: self.cfg.fit_steps,
                        learning_rate: self.cfg.fit_lr,
                        fit_noise: false,
                        max_halvings: 10,
                        lengthscale_bounds: Some((
                            self.cfg.lengthscale_min,
                            self.cfg.lengthscale_max,
                        )),
                    };
                    self.params = fit.run(&self.dp.active_training_set(), self.params).0;
                    self.recondition()?;
                }
                record.memory = self.dp.memory().len();
                record.active = self.dp.active().len();
                record.lengthscale = self.params.lengthscale();
            }
            self.log.push(record);
            x = next;
            if self.goals.reached(&x, self.cfg.r_g) {
                return Ok((true, step));
            }
        }
        Ok((false, self.cfg.max_steps))
    }

    fn final_grid(&self) -> Result<OccupancyGrid<f64>> {
        let spec = grid_spec(self.scene, self.cfg)?;
        Ok(if self.cfg.adaptive {
            self.surface.occupancy_grid(&spec)?
        } else {
            OccupancyGrid::from_fn(&spec, |c| self.baseline.mean(c) <= 0.0)
        })
    }
}

/// Runs one episode on an explicit scene.
pub fn run_episode_in(cfg: &EpisodeConfig, scene: &Scene) -> EpisodeReport {
    let clock = Instant::now();
    let mut report = EpisodeReport {
        config: cfg.clone(),
        scene: Some(scene.clone()),
        success: false,
        steps: 0,
        error: None,
        start: scene.start.clone(),
        log: Vec::new(),
        refinements: Vec::new(),
        dataset: DatasetPair::new(2),
        grid: String::new(),
        wall_clock_s: 0.0,
    };
    match Runner::new(cfg, scene) {
        Ok(mut runner) => {
            match runner.run() {
                Ok((success, steps)) => {
                    report.success = success;
                    report.steps = steps;
                }
                Err(e) => {
                    report.steps = runner.log.len();
                    report.error = Some(e.to_string());
                }
            }
            match runner.final_grid() {
                Ok(g) => report.grid = g.to_text(),
                Err(e) => report.error = report.error.or(Some(e.to_string())),
            }
            report.log = runner.log;
            report.refinements = runner.refinements;
            report.dataset = runner.dp;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report.wall_clock_s = clock.elapsed().as_secs_f64();
    report
}

/// Runs one episode on the built-in scene named in the config.
pub fn run_episode(cfg: &EpisodeConfig) -> EpisodeReport {
    match crate::envs::make_scene(&cfg.scene) {
        Ok(scene) => run_episode_in(cfg, &scene),
        Err(e) => failed(cfg, e),
    }
}

fn failed(cfg: &EpisodeConfig, e: Error) -> EpisodeReport {
    EpisodeReport {
        config: cfg.clone(),
        scene: None,
        success: false,
        steps: 0,
        error: Some(e.to_string()),
        start: Vec::new(),
        log: Vec::new(),
        refinements: Vec::new(),
        dataset: DatasetPair::new(2),
        grid: String::new(),
        wall_clock_s: 0.0,
    }
}
