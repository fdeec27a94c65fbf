use serde::{Deserialize, Serialize};

use super::{FieldError, VoxelField};
use crate::geometry::{Aabb, Vec3};
use crate::scalar::{inverse_softplus, Real};

/// Post-activation density written where no bias applies.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Which box length normalizes the object-centric falloff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxExtent {
    /// Half side lengths: `s_sigma = 1` inscribes the box exactly.
    #[default]
    Half,
    /// Full side lengths.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBiasConfig<T> {
    /// Peak density.
    pub lambda_sigma: T,
    /// Dimensionless radius (uni-sphere: standard deviation in world units).
    pub s_sigma: T,
    pub extent: BoxExtent,
}

impl<T: Real> Default for DensityBiasConfig<T> {
    fn default() -> Self {
        Self {
            lambda_sigma: T::lit(10.0),
            s_sigma: T::lit(0.5),
            extent: BoxExtent::Half,
        }
    }
}

impl<T: Real> DensityBiasConfig<T> {
    /// Gaussian blob `lambda * exp(-|x|^2 / (2 s^2))` at the origin.
    pub fn uni_sphere_density(&self, x: Vec3<T>) -> T {
        let s = self.s_sigma;
        self.lambda_sigma * (-x.norm_squared() / (T::lit(2.0) * s * s)).exp()
    }

    /// Linear falloff `lambda * (1 - ||(x - c) / l|| / s)` for one box,
    /// unclamped.
    pub fn box_density(&self, x: Vec3<T>, bbox: &Aabb<T>) -> T {
        let l = match self.extent {
            BoxExtent::Half => bbox.half_extent(),
            BoxExtent::Full => bbox.size(),
        };
        let r = (x - bbox.center()).div_elem(l).norm();
        self.lambda_sigma * (T::one() - r / self.s_sigma)
    }

    /// Max of the per-box falloffs, clamped at zero.
    pub fn object_centric_density(&self, x: Vec3<T>, boxes: &[Aabb<T>]) -> T {
        boxes
            .iter()
            .map(|b| self.box_density(x, b))
            .fold(T::zero(), |m, v| m.max(v))
    }
}

impl<T: Real> VoxelField<T> {
    fn bake_density(&mut self, sigma_at: impl Fn(Vec3<T>) -> T) {
        let floor = T::lit(SIGMA_FLOOR);
        for idx in 0..self.vertex_count() {
            let sigma = sigma_at(self.vertex_position(idx)).max(floor);
            self.density[idx] = inverse_softplus(sigma);
            self.color[idx] = Vec3::zero();
        }
    }

    /// Bakes the centered Gaussian blob into the density grid and resets
    /// color to mid-gray.
    pub fn init_uni_sphere_bias(&mut self, cfg: &DensityBiasConfig<T>) {
        self.bake_density(|x| cfg.uni_sphere_density(x));
    }

    /// Bakes one ellipsoidal falloff per box (max over boxes) into the
    /// density grid and resets color to mid-gray.
    pub fn init_object_centric_bias(
        &mut self,
        boxes: &[Aabb<T>],
        cfg: &DensityBiasConfig<T>,
    ) -> Result<(), FieldError> {
        if boxes.is_empty() {
            return Err(FieldError::NoBoxes);
        }
        self.bake_density(|x| cfg.object_centric_density(x, boxes));
        Ok(())
    }

    /// Placement variant: raises density to the object-centric bias only at
    /// vertices inside some box, keeping existing content elsewhere.
    pub fn add_object_centric_bias(&mut self, boxes: &[Aabb<T>], cfg: &DensityBiasConfig<T>) -> Result<(), FieldError> {
        if boxes.is_empty() {
            return Err(FieldError::NoBoxes);
        }
        for idx in 0..self.vertex_count() {
            let p = self.vertex_position(idx);
            if !boxes.iter().any(|b| b.contains(p)) {
                continue;
            }
            let sigma = cfg.object_centric_density(p, boxes);
            if sigma > T::lit(SIGMA_FLOOR) {
                self.density[idx] = self.density[idx].max(inverse_softplus(sigma));
            }
        }
        Ok(())
    }
}
