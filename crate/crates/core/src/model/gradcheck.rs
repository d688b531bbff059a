//! Central finite-difference check of the analytic loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::SegModel;
use super::ModelError;
use crate::dataset::SegSample;
use crate::scalar::Scalar;

/// Below this magnitude on both sides a coordinate counts as agreeing.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateCheck {
    pub param: String,
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub coords: Vec<CoordinateCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passing(&self) -> usize {
        self.coords.iter().filter(|c| c.rel_error <= self.tolerance).count()
    }

    pub fn pass_fraction(&self) -> f64 {
        self.passing() as f64 / self.coords.len().max(1) as f64
    }

    pub fn worst(&self) -> f64 {
        self.coords.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|)`, zero when both are below [`ABS_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < ABS_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compares the analytic gradient of the sample loss with central
/// differences at `n_coords` scalar coordinates drawn uniformly over all
/// parameters. The model is restored before returning.
pub fn check_gradients<T: Scalar>(
    model: &mut SegModel<T>,
    sample: &SegSample<T>,
    n_coords: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = model.loss_and_grads(sample)?;
    let sizes: Vec<usize> = model.params().iter().map(|p| p.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = T::of(step);
    let mut coords = Vec::with_capacity(n_coords);
    for _ in 0..n_coords {
        let mut k = rng.random_range(0..total);
        let mut p = 0;
        while k >= sizes[p] {
            k -= sizes[p];
            p += 1;
        }
        let orig = model.params().get(p).value.data()[k];
        model.params_mut().value_mut(p).data_mut()[k] = orig + h;
        let plus = model.loss(sample)?.total.as_f64();
        model.params_mut().value_mut(p).data_mut()[k] = orig - h;
        let minus = model.loss(sample)?.total.as_f64();
        model.params_mut().value_mut(p).data_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads[p].as_ref().map_or(0.0, |g| g.data()[k].as_f64());
        coords.push(CoordinateCheck {
            param: model.params().get(p).name.clone(),
            offset: k,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(GradCheckReport { coords, tolerance })
}
