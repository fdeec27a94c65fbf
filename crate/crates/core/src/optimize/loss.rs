use crate::geometry::Vec3;
use crate::render::RenderedImage;
use crate::scalar::Real;

use super::OptimizeError;

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean absolute RGB error between `inv` and `reference`, with its
/// cotangent `sign(inv - reference) / (3 * pixels)`.
pub fn reconstruction_loss<T: Real>(
    inv: &RenderedImage<T>,
    reference: &RenderedImage<T>,
) -> Result<(T, Vec<Vec3<T>>), OptimizeError> {
    if inv.width != reference.width || inv.height != reference.height {
        return Err(OptimizeError::ImageShape {
            expected: (reference.width, reference.height),
            got: (inv.width, inv.height),
        });
    }
    let n = T::count(3 * inv.pixel_count().max(1));
    let mut total = T::zero();
    let cotangent = inv
        .rgb
        .iter()
        .zip(&reference.rgb)
        .map(|(a, b)| {
            let d = *a - *b;
            total += d.x.abs() + d.y.abs() + d.z.abs();
            d.map(|v| sign(v) / n)
        })
        .collect();
    Ok((total / n, cotangent))
}
