//! Gradient clipping, AdamW with decoupled weight decay, and dynamic loss
//! scaling for reduced-precision steps.

use crate::model::ParameterSet;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

use super::schedule::layer_lr_multiplier;
use super::TrainError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Global L2 norm over every gradient, accumulated in `f64`.
pub fn global_norm<T: Scalar>(grads: &[Matrix<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| {
            let v = v.as_f64();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipReport {
    pub pre_norm: f64,
    /// Factor applied to every gradient (1 when inside the ball).
    pub scale: f64,
}

/// Rescales all gradients jointly so their global norm is at most `max_norm`.
pub fn clip_gradients<T: Scalar>(grads: &mut [Matrix<T>], max_norm: f64) -> Result<ClipReport, TrainError> {
    if grads.iter().any(|g| !g.all_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    let pre_norm = global_norm(grads);
    if !pre_norm.is_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    let scale = if pre_norm > max_norm { max_norm / pre_norm } else { 1.0 };
    if scale != 1.0 {
        let s = T::of(scale);
        grads.iter_mut().for_each(|g| g.scale_in_place(s));
    }
    Ok(ClipReport { pre_norm, scale })
}

/// Per-parameter learning-rate multiplier and weight-decay coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamHyper {
    pub lr_scale: f64,
    pub weight_decay: f64,
}

/// Layer-decayed learning-rate scales; decay only where the group allows it.
pub fn param_hypers<T: Scalar>(
    params: &ParameterSet<T>,
    depth: usize,
    layer_decay: f64,
    weight_decay: f64,
) -> Vec<ParamHyper> {
    params
        .iter()
        .map(|p| ParamHyper {
            lr_scale: layer_lr_multiplier(p.group.layer, depth, layer_decay),
            weight_decay: if p.group.weight_decay { weight_decay } else { 0.0 },
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct AdamW<T> {
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let m: Vec<Matrix<T>> = shapes.into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn for_params(params: &ParameterSet<T>) -> Self {
        Self::new(params.iter().map(|p| p.value.shape()))
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every tensor in `values`: decoupled decay
    /// `p ← p·(1 − lr·wd)` followed by the bias-corrected Adam step, both
    /// at the tensor's scaled learning rate.
    pub fn step_values<'a>(
        &mut self,
        values: impl IntoIterator<Item = &'a mut Matrix<T>>,
        grads: &[Matrix<T>],
        lr: f64,
        hypers: &[ParamHyper],
    ) -> Result<(), TrainError>
    where
        T: 'a,
    {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let (b1, b2, eps) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2), T::of(ADAM_EPS));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (i, p) in values.into_iter().enumerate() {
            let h = &hypers[i];
            let lr_i = lr * h.lr_scale;
            let decay = T::of(1.0 - lr_i * h.weight_decay);
            let step = T::of(lr_i / bc1);
            let inv_bc2 = T::of(1.0 / bc2);
            let (m, v, g) = (self.m[i].data_mut(), self.v[i].data_mut(), grads[i].data());
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
                *w = *w * decay - step * m[k] / ((v[k] * inv_bc2).sqrt() + eps);
            }
            if !p.all_finite() {
                return Err(TrainError::NonFiniteUpdate);
            }
        }
        Ok(())
    }

    pub fn step(
        &mut self,
        params: &mut ParameterSet<T>,
        grads: &[Matrix<T>],
        lr: f64,
        hypers: &[ParamHyper],
    ) -> Result<(), TrainError> {
        self.step_values(params.values_mut(), grads, lr, hypers)
    }
}

/// Dynamic loss scale: halve on overflow, double after a run of clean steps.
#[derive(Clone, Debug, PartialEq)]
pub struct LossScaler {
    pub scale: f64,
    pub growth_interval: u32,
    clean_steps: u32,
}

impl Default for LossScaler {
    fn default() -> Self {
        Self {
            scale: 65536.0,
            growth_interval: 200,
            clean_steps: 0,
        }
    }
}

impl LossScaler {
    /// Records a step outcome; returns whether its gradients may be applied.
    pub fn update(&mut self, grads_finite: bool) -> bool {
        if grads_finite {
            self.clean_steps += 1;
            if self.clean_steps >= self.growth_interval {
                self.scale *= 2.0;
                self.clean_steps = 0;
            }
        } else {
            self.scale = (self.scale / 2.0).max(1.0);
            self.clean_steps = 0;
        }
        grads_finite
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_examples() {
        let mut g = vec![Matrix::from_vec(1, 2, vec![1.2f64, 1.6])];
        let r = clip_gradients(&mut g, 5.0).unwrap();
        assert_eq!(r.scale, 1.0);
        assert_eq!(g[0].data(), &[1.2, 1.6]);
        let mut g = vec![Matrix::from_vec(1, 1, vec![6.0f64]), Matrix::from_vec(1, 1, vec![8.0])];
        let r = clip_gradients(&mut g, 5.0).unwrap();
        assert_eq!(r.pre_norm, 10.0);
        assert_eq!(r.scale, 0.5);
        assert_eq!(global_norm(&g), 5.0);
    }

    #[test]
    fn clip_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let scale = rng.random_range(0.01..3.0);
            let mut g: Vec<Matrix<f64>> = (0..rng.random_range(1..6))
                .map(|_| {
                    Matrix::from_fn(rng.random_range(1..8), rng.random_range(1..8), |_, _| {
                        rng.random_range(-scale..scale)
                    })
                })
                .collect();
            let pre = global_norm(&g);
            clip_gradients(&mut g, 5.0).unwrap();
            assert!((global_norm(&g) - pre.min(5.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut g = vec![Matrix::from_vec(1, 2, vec![1.0f64, f64::NAN])];
        assert!(matches!(clip_gradients(&mut g, 5.0), Err(TrainError::NonFiniteGradient)));
    }

    fn hyper(wd: f64) -> Vec<ParamHyper> {
        vec![ParamHyper {
            lr_scale: 1.0,
            weight_decay: wd,
        }]
    }

    #[test]
    fn zero_gradient_updates() {
        let mut p = [Matrix::from_vec(1, 3, vec![1.0f64, -2.0, 0.5])];
        let g = vec![Matrix::zeros(1, 3)];
        let mut opt = AdamW::new([(1, 3)]);
        opt.step_values(p.iter_mut(), &g, 1e-3, &hyper(0.0)).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0, 0.5]);
        let lr = 1e-2;
        opt.step_values(p.iter_mut(), &g, lr, &hyper(0.05)).unwrap();
        let f = 1.0 - 0.05 * lr;
        assert_eq!(p[0].data(), &[1.0 * f, -2.0 * f, 0.5 * f]);
    }

    #[test]
    fn quadratic_descends() {
        // f(x) = (x - 3)^2 from x = 0.
        let mut p = [Matrix::from_vec(1, 1, vec![0.0f64])];
        let mut opt = AdamW::new([(1, 1)]);
        let f = |x: f64| (x - 3.0) * (x - 3.0);
        let mut vals = vec![f(0.0)];
        for _ in 0..10 {
            let x = p[0].get(0, 0);
            let g = vec![Matrix::from_vec(1, 1, vec![2.0 * (x - 3.0)])];
            opt.step_values(p.iter_mut(), &g, 0.1, &hyper(0.0)).unwrap();
            vals.push(f(p[0].get(0, 0)));
        }
        for w in vals[2..].windows(2) {
            assert!(w[1] < w[0], "{vals:?}");
        }
    }

    #[test]
    fn scaler_backs_off_and_grows() {
        let mut s = LossScaler {
            scale: 8.0,
            growth_interval: 2,
            clean_steps: 0,
        };
        assert!(!s.update(false));
        assert_eq!(s.scale, 4.0);
        assert!(s.update(true));
        assert!(s.update(true));
        assert_eq!(s.scale, 8.0);
    }
}
