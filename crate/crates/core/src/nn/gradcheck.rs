//! Reverse-mode gradients against central finite differences.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NodeId, ParamId, ParamSet, Tape};
use crate::{Error, Result};

/// Scalar loss recorded on a tape from the given parameters.
pub trait Objective {
    fn loss(&self, tape: &mut Tape<f64>, params: &ParamSet) -> Result<NodeId>;
}

impl<F> Objective for F
where
    F: Fn(&mut Tape<f64>, &ParamSet) -> Result<NodeId>,
{
    fn loss(&self, tape: &mut Tape<f64>, params: &ParamSet) -> Result<NodeId> {
        self(tape, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub num_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            num_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords: Vec<CoordCheck>,
    /// Coordinates passed over because a `±eps` step moved some ReLU input
    /// across zero, where finite differences do not estimate the gradient.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&CoordCheck> {
        self.coords
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a − b| / max(1e−8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Compares gradients on `min(num_coords, total)` parameter coordinates drawn
/// uniformly without replacement. Evaluation runs in `f64` from the stored
/// `f32` values. A coordinate whose `±eps` evaluations change the ReLU
/// activation pattern is skipped and another is drawn in its place.
pub fn grad_check(
    objective: &impl Objective,
    params: &ParamSet,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(cfg.eps > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let total = params.num_scalars();
    if total == 0 {
        return Err(Error::arg("model has no parameters"));
    }
    let mut tape = Tape::new();
    let root = objective.loss(&mut tape, params)?;
    let grads = tape.backward(root)?;

    let mut offsets = Vec::with_capacity(params.len());
    let mut acc = 0;
    for (_, t) in params.iter() {
        offsets.push(acc);
        acc += t.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let wanted = cfg.num_coords.min(total);
    let picks = sample(&mut rng, total, total.min(wanted.saturating_mul(4))).into_vec();
    let base_mask = tape.relu_mask();

    let eval = |id: ParamId, index: usize, delta: f64| -> Result<(f64, bool)> {
        let mut t = Tape::with_perturbation(id, index, delta);
        let root = objective.loss(&mut t, params)?;
        Ok((t.scalar(root), t.relu_mask() == base_mask))
    };

    let mut coords = Vec::with_capacity(wanted);
    let mut skipped_kinks = 0;
    let mut max_rel_error: f64 = 0.0;
    for flat in picks {
        if coords.len() == wanted {
            break;
        }
        let p = offsets.partition_point(|&o| o <= flat) - 1;
        let id = params.ids().nth(p).expect("offset table covers every parameter");
        let index = flat - offsets[p];
        let analytic = grads.param(id).map_or(0.0, |g| g[index]);
        let (up, same_up) = eval(id, index, cfg.eps)?;
        let (down, same_down) = eval(id, index, -cfg.eps)?;
        if !(same_up && same_down) {
            skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * cfg.eps);
        if !numeric.is_finite() || !analytic.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", params.name(id))));
        }
        let rel_error = relative_error(analytic, numeric);
        max_rel_error = max_rel_error.max(rel_error);
        coords.push(CoordCheck {
            param: String::from(params.name(id)),
            index,
            analytic,
            numeric,
            rel_error,
        });
    }
    if coords.len() < wanted {
        return Err(Error::NonFinite(format!(
            "only {} of {wanted} coordinates avoid ReLU kinks",
            coords.len()
        )));
    }
    Ok(GradCheckReport {
        max_rel_error,
        coords,
        skipped_kinks,
    })
}
