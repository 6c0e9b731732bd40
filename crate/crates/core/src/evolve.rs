//! Per-instance level-set evolution inside an annotated box.

use rayon::prelude::*;

use crate::chanvese::{
    combined_gradient_with_means, combined_objective_with_means, frozen_means, EnergyBreakdown, ObjectiveInputs,
    ObjectiveWeights,
};
use crate::error::{Error, Result};
use crate::grid::{normalize, sigmoid_field, BBox, BinaryMask, Grid, LevelSetField, SoftMask};
use crate::lcm::{affinity_for, propagate};
use crate::treefilter::structural_features;

/// Fraction of the box size added on every side to form the evolution window.
pub const WINDOW_MARGIN: f64 = 0.1;
/// Consecutive small-change steps required to declare convergence.
pub const CONVERGENCE_PATIENCE: usize = 5;
const MAX_BACKTRACKS: usize = 60;
const INIT_CLAMP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub mu_lcm: f64,
    /// Initial step size.
    pub dt: f64,
    /// Largest step the line search may grow to.
    pub dt_max: f64,
    pub max_steps: usize,
    /// Propagation steps of the consistency target.
    pub k: usize,
    pub dilation: usize,
    pub eta: f64,
    pub sigma_tf: f64,
    /// Relative energy change below which a step counts as stalled.
    pub tol: f64,
    pub threshold: f64,
    /// Iterates are projected onto `[-phi_bound, phi_bound]`.
    pub phi_bound: f64,
    /// Integrate the data terms over the whole window instead of the box.
    pub data_on_window: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-4,
            lambda1: 0.05,
            lambda2: 5.0,
            alpha: 3.0,
            mu_lcm: 0.1,
            dt: 1.0,
            dt_max: 8192.0,
            max_steps: 300,
            k: 10,
            dilation: 3,
            eta: 1.0,
            sigma_tf: 0.1,
            tol: 1e-6,
            threshold: 0.5,
            phi_bound: 6.0,
            data_on_window: false,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("gamma", self.gamma),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("alpha", self.alpha),
            ("mu_lcm", self.mu_lcm),
            ("eta", self.eta),
            ("tol", self.tol),
        ];
        for (name, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dt_max.is_finite() && self.dt_max >= self.dt) {
            return Err(Error::Config(format!(
                "dt_max must be at least dt, got {}",
                self.dt_max
            )));
        }
        if !(self.phi_bound.is_finite() && self.phi_bound >= INIT_CLAMP) {
            return Err(Error::Config(format!(
                "phi_bound must be at least {INIT_CLAMP}, got {}",
                self.phi_bound
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if self.dilation == 0 {
            return Err(Error::Config("dilation must be at least 1".into()));
        }
        if !(self.sigma_tf.is_finite() && self.sigma_tf > 0.0) {
            return Err(Error::Config(format!(
                "sigma_tf must be positive, got {}",
                self.sigma_tf
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            gamma: self.gamma,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            alpha: self.alpha,
            mu_lcm: self.mu_lcm,
        }
    }
}

/// One accepted descent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    /// Energy before the step, under this step's frozen means and target.
    pub energy_before: f64,
    /// Energy of the accepted iterate under the same frozen quantities.
    pub energy: EnergyBreakdown,
    pub dt: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvolutionTrace {
    pub steps: Vec<TraceStep>,
    /// Step index at which the convergence test fired.
    pub converged_at: Option<usize>,
}

impl EvolutionTrace {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    /// Full-image binary mask, always inside the annotated box.
    pub mask: BinaryMask,
    /// Soft mask over the evolution window.
    pub soft: SoftMask,
    pub window: BBox,
    pub trace: EvolutionTrace,
}

/// Evolution failure, carrying the trace up to the failing step.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionFailure {
    pub error: Error,
    pub trace: EvolutionTrace,
}

impl std::fmt::Display for EvolutionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} steps", self.error, self.trace.steps.len())
    }
}

impl std::error::Error for EvolutionFailure {}

impl From<Error> for EvolutionFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            trace: EvolutionTrace::default(),
        }
    }
}

/// Clamped Chebyshev signed distance to the box boundary, positive inside.
///
/// Pixels on the box's outermost ring get +1, the ring just outside gets -1.
pub fn init_levelset(bbox: BBox, window: BBox) -> Result<LevelSetField> {
    if !window.contains_box(&bbox) {
        return Err(Error::ShapeMismatch(format!("{bbox:?} is not inside {window:?}")));
    }
    LevelSetField::from_fn(window, |ly, lx| {
        let (x, y) = ((lx + window.x0) as isize, (ly + window.y0) as isize);
        let (x0, y0, x1, y1) = (bbox.x0 as isize, bbox.y0 as isize, bbox.x1 as isize, bbox.y1 as isize);
        let d = if bbox.contains(x as usize, y as usize) {
            (x - x0 + 1).min(x1 - x).min(y - y0 + 1).min(y1 - y)
        } else {
            -(x0 - x).max(x - (x1 - 1)).max(y0 - y).max(y - (y1 - 1))
        };
        (d as f64).clamp(-INIT_CLAMP, INIT_CLAMP)
    })
}

/// Data prepared once per instance.
struct Prepared {
    window: BBox,
    data_region: BBox,
    image: Grid,
    features: Option<Grid>,
    affinity: crate::lcm::AffinityField,
}

fn prepare(image: &Grid, features: Option<&Grid>, bbox: BBox, config: &EvolutionConfig) -> Result<Prepared> {
    bbox.check_within(image.width(), image.height())?;
    let window = bbox.dilate(WINDOW_MARGIN, image.width(), image.height());
    let box_local = bbox.relative_to(&window);
    let image_win = normalize(&image.crop(window)?, box_local)?;

    let features_win = match features {
        Some(f) if config.lambda2 != 0.0 => {
            if (f.height(), f.width()) != (image.height(), image.width()) {
                return Err(Error::ShapeMismatch(format!(
                    "features are {}x{} but the image is {}x{}",
                    f.height(),
                    f.width(),
                    image.height(),
                    image.width()
                )));
            }
            let raw = f.crop(window)?;
            let structural = structural_features(&image_win, Some(&raw), config.sigma_tf)?;
            Some(normalize(&structural, box_local)?)
        }
        _ => None,
    };

    let data_region = if config.data_on_window { window } else { bbox };
    let local = data_region.relative_to(&window);
    let image_data = image_win.crop(local)?;
    let affinity = affinity_for(&image_data, config.dilation, config.eta);
    let features_data = features_win.map(|f| f.crop(local)).transpose()?;
    Ok(Prepared {
        window,
        data_region,
        image: image_data,
        features: features_data,
        affinity,
    })
}

/// Evolve the level set of one annotated box and extract its mask.
pub fn evolve_instance(
    image: &Grid,
    features: Option<&Grid>,
    bbox: BBox,
    config: &EvolutionConfig,
) -> std::result::Result<InstanceResult, EvolutionFailure> {
    config.validate()?;
    let prep = prepare(image, features, bbox, config)?;
    let weights = config.weights();
    let mut phi = init_levelset(bbox, prep.window)?;
    // Without data outside the box the margin only feeds the projection term; hold it at background.
    let free = BinaryMask::from_box(
        prep.window.height(),
        prep.window.width(),
        prep.data_region.relative_to(&prep.window),
    );
    if !config.data_on_window {
        let pinned = phi
            .values()
            .iter()
            .zip(free.bits())
            .map(|(&v, &f)| if f != 0 { v } else { -config.phi_bound })
            .collect();
        phi = phi.with_values(pinned);
    }
    let mut trace = EvolutionTrace::default();
    let fail = |error: Error, trace: &EvolutionTrace| EvolutionFailure {
        error,
        trace: trace.clone(),
    };

    let mut dt = config.dt;
    let mut stalled = 0;
    for step in 0..config.max_steps {
        let target = match config.mu_lcm != 0.0 {
            true => Some(propagate(
                &phi.crop(prep.data_region).map_err(|e| fail(e, &trace))?,
                &prep.affinity,
                config.k,
            )),
            false => None,
        };
        let inputs = ObjectiveInputs {
            image: &prep.image,
            features: prep.features.as_ref(),
            data_region: prep.data_region,
            gt_box: bbox,
            lcm_target: target.as_ref(),
        };
        let means = frozen_means(&phi, &inputs, &weights).map_err(|e| fail(e, &trace))?;
        let before = combined_objective_with_means(&phi, &inputs, &weights, &means).map_err(|e| fail(e, &trace))?;
        let grad = combined_gradient_with_means(&phi, &inputs, &weights, &means).map_err(|e| fail(e, &trace))?;

        let mut trial = dt;
        let mut backtracks = 0;
        let accepted = loop {
            let bound = config.phi_bound;
            let candidate: Vec<f64> = phi
                .values()
                .iter()
                .zip(&grad)
                .zip(free.bits())
                .map(|((p, g), &f)| {
                    if f != 0 {
                        (p - trial * g).clamp(-bound, bound)
                    } else {
                        *p
                    }
                })
                .collect();
            let candidate = phi.with_values(candidate);
            let e =
                combined_objective_with_means(&candidate, &inputs, &weights, &means).map_err(|e| fail(e, &trace))?;
            if e.total <= before.total {
                break Some((candidate, e));
            }
            backtracks += 1;
            if backtracks > MAX_BACKTRACKS {
                break None;
            }
            trial /= 2.0;
        };

        let Some((next, energy)) = accepted else {
            // no descent direction left at any representable step
            trace.converged_at = Some(step);
            break;
        };
        trace.steps.push(TraceStep {
            step,
            energy_before: before.total,
            energy,
            dt: trial,
            backtracks,
        });
        phi = next;
        dt = (trial * 2.0).min(config.dt_max);

        let change = (before.total - energy.total) / before.total.abs().max(f64::MIN_POSITIVE);
        if change < config.tol {
            stalled += 1;
            if stalled >= CONVERGENCE_PATIENCE {
                trace.converged_at = Some(step);
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let soft = sigmoid_field(&phi);
    let window = prep.window;
    let mut mask = BinaryMask::zeros(image.height(), image.width());
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            if soft.get(y - window.y0, x - window.x0) > config.threshold {
                mask.set(y, x, true);
            }
        }
    }
    Ok(InstanceResult {
        mask,
        soft,
        window,
        trace,
    })
}

/// Evolve every box independently; results keep the order of `boxes`.
///
/// `jobs` bounds the worker threads (1 runs serially). Output does not depend on it.
pub fn segment_image(
    image: &Grid,
    boxes: &[BBox],
    features: Option<&Grid>,
    config: &EvolutionConfig,
    jobs: usize,
) -> Vec<std::result::Result<InstanceResult, EvolutionFailure>> {
    if jobs <= 1 || boxes.len() <= 1 {
        return boxes
            .iter()
            .map(|&b| evolve_instance(image, features, b, config))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| {
        boxes
            .par_iter()
            .map(|&b| evolve_instance(image, features, b, config))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_values() {
        let bbox = BBox::new(10, 10, 30, 30);
        let window = BBox::new(0, 0, 40, 40);
        let phi = init_levelset(bbox, window).unwrap();
        assert_eq!(phi.get(20, 20), 3.0);
        assert_eq!(phi.get(0, 0), -3.0);
        assert_eq!(phi.get(20, 10), 1.0);
        assert_eq!(phi.get(20, 29), 1.0);
        assert_eq!(phi.get(20, 9), -1.0);
        assert_eq!(phi.get(11, 20), 2.0);
        assert!(init_levelset(window, bbox).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::default().validate().is_ok());
        let bad = EvolutionConfig {
            threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EvolutionConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EvolutionConfig {
            lambda1: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn invalid_box_is_rejected() {
        let img = Grid::filled(8, 8, 1, 0.0).unwrap();
        let r = evolve_instance(&img, None, BBox::new(3, 3, 3, 6), &EvolutionConfig::default());
        assert!(matches!(
            r,
            Err(EvolutionFailure {
                error: Error::InvalidBox { .. },
                ..
            })
        ));
    }

    #[test]
    fn empty_annotation_list() {
        let img = Grid::filled(8, 8, 1, 0.0).unwrap();
        assert!(segment_image(&img, &[], None, &EvolutionConfig::default(), 4).is_empty());
    }
}
