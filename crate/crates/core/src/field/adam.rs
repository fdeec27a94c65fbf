use serde::{Deserialize, Serialize};

use super::{FieldGradient, VoxelField};
use crate::geometry::Vec3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.99),
            eps: T::lit(1e-8),
        }
    }
}

/// First and second moments for every pre-activation parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    pub step: u64,
    pub m: FieldGradient<T>,
    pub v: FieldGradient<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(field: &VoxelField<T>, config: AdamConfig<T>) -> Self {
        Self {
            config,
            step: 0,
            m: FieldGradient::zeros_like(field),
            v: FieldGradient::zeros_like(field),
        }
    }

    /// One bias-corrected Adam step on every raw density and color value.
    pub fn apply_update(&mut self, field: &mut VoxelField<T>, grad: &FieldGradient<T>, lr: T) {
        assert_eq!(grad.d_density.len(), field.vertex_count(), "gradient shape mismatch");
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let one = T::one();
        let t = self.step.min(i32::MAX as u64) as i32;
        let bc1 = one - beta1.powi(t);
        let bc2 = one - beta2.powi(t);
        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = beta1 * *m + (one - beta1) * g;
            *v = beta2 * *v + (one - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for i in 0..field.vertex_count() {
            update(
                &mut field.density[i],
                grad.d_density[i],
                &mut self.m.d_density[i],
                &mut self.v.d_density[i],
            );
            let (c, gc) = (&mut field.color[i], grad.d_color[i]);
            let (mc, vc): (&mut Vec3<T>, &mut Vec3<T>) = (&mut self.m.d_color[i], &mut self.v.d_color[i]);
            for ch in 0..3 {
                update(&mut c[ch], gc[ch], &mut mc[ch], &mut vc[ch]);
            }
        }
    }
}
