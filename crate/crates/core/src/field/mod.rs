//! Trainable radiance field: a dense voxel grid of pre-activation density
//! and color over the `[-1, 1]^3` world cube.
//!
//! Density goes through softplus and color through a sigmoid *after*
//! trilinear interpolation, so post-activation values are always valid.

mod adam;
mod bias;
pub mod checkpoint;

pub use adam::{AdamConfig, AdamState};
pub use bias::{BoxExtent, DensityBiasConfig, SIGMA_FLOOR};

use crate::geometry::Vec3;
use crate::scalar::{inverse_softplus, logit, sigmoid, softplus, Real};

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("object-centric bias needs at least one box")]
    NoBoxes,
    #[error("field resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("grid length {got} does not match resolution {resolution} (expected {expected})")]
    Shape {
        resolution: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in field grid at index {0}")]
    NonFinite(usize),
}

/// Density and color at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample<T> {
    pub sigma: T,
    pub color: Vec3<T>,
}

impl<T: Real> FieldSample<T> {
    /// `(0, black)`: what gated and clipped lookups return.
    pub fn empty() -> Self {
        Self {
            sigma: T::zero(),
            color: Vec3::zero(),
        }
    }
}

/// Anything the renderer can query for density and color.
pub trait RadianceField<T: Real>: Sync {
    /// `d` is the viewing direction.
    fn query(&self, x: Vec3<T>, d: Vec3<T>) -> FieldSample<T>;
}

/// Eight interpolation corners and their trilinear weights.
#[derive(Clone, Copy, Debug)]
pub struct Stencil<T> {
    pub index: [usize; 8],
    pub weight: [T; 8],
}

/// One vertex's share of an incoming cotangent, in pre-activation space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradContribution<T> {
    pub index: usize,
    pub d_density: T,
    pub d_color: Vec3<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelField<T> {
    resolution: usize,
    density: Vec<T>,
    color: Vec<Vec3<T>>,
}

impl<T: Real> VoxelField<T> {
    /// Field whose post-activation density is [`SIGMA_FLOOR`] everywhere,
    /// with mid-gray color.
    pub fn empty(resolution: usize) -> Self {
        assert!(resolution >= 2, "field resolution must be at least 2");
        let n = resolution * resolution * resolution;
        Self {
            resolution,
            density: vec![inverse_softplus(T::lit(SIGMA_FLOOR)); n],
            color: vec![Vec3::zero(); n],
        }
    }

    pub fn from_raw(resolution: usize, density: Vec<T>, color: Vec<Vec3<T>>) -> Result<Self, FieldError> {
        if resolution < 2 {
            return Err(FieldError::Resolution(resolution));
        }
        let expected = resolution * resolution * resolution;
        for got in [density.len(), color.len()] {
            if got != expected {
                return Err(FieldError::Shape {
                    resolution,
                    expected,
                    got,
                });
            }
        }
        if let Some(i) = density.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        if let Some(i) = color.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self {
            resolution,
            density,
            color,
        })
    }

    /// Builds a field by evaluating post-activation `(sigma, color)` at every vertex.
    ///
    /// `sigma` is floored at [`SIGMA_FLOOR`]; colors are clamped into `(0, 1)`.
    pub fn from_fn(resolution: usize, f: impl Fn(Vec3<T>) -> (T, Vec3<T>)) -> Self {
        let mut field = Self::empty(resolution);
        for idx in 0..field.vertex_count() {
            let (sigma, color) = f(field.vertex_position(idx));
            field.density[idx] = inverse_softplus(sigma.max(T::lit(SIGMA_FLOOR)));
            field.color[idx] = color_to_raw(color);
        }
        field
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn vertex_count(&self) -> usize {
        self.density.len()
    }

    pub fn raw_density(&self) -> &[T] {
        &self.density
    }

    pub fn raw_density_mut(&mut self) -> &mut [T] {
        &mut self.density
    }

    pub fn raw_color(&self) -> &[Vec3<T>] {
        &self.color
    }

    pub fn raw_color_mut(&mut self) -> &mut [Vec3<T>] {
        &mut self.color
    }

    /// Vertex spacing in world units.
    pub fn spacing(&self) -> T {
        T::lit(2.0) / T::count(self.resolution - 1)
    }

    pub fn vertex_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn vertex_position(&self, idx: usize) -> Vec3<T> {
        let r = self.resolution;
        let (i, j, k) = (idx % r, (idx / r) % r, idx / (r * r));
        let h = self.spacing();
        Vec3::new(
            T::count(i) * h - T::one(),
            T::count(j) * h - T::one(),
            T::count(k) * h - T::one(),
        )
    }

    /// Post-activation density stored at a vertex.
    pub fn vertex_sigma(&self, idx: usize) -> T {
        softplus(self.density[idx])
    }

    pub fn set_vertex(&mut self, idx: usize, sigma: T, color: Vec3<T>) {
        self.density[idx] = inverse_softplus(sigma.max(T::lit(SIGMA_FLOOR)));
        self.color[idx] = color_to_raw(color);
    }

    /// Trilinear stencil for `x`, or `None` outside `[-1, 1]^3`.
    pub fn stencil(&self, x: Vec3<T>) -> Option<Stencil<T>> {
        let one = T::one();
        if !(0..3).all(|a| x[a] >= -one && x[a] <= one) {
            return None;
        }
        let r = self.resolution;
        let scale = T::count(r - 1) * T::lit(0.5);
        let mut base = [0usize; 3];
        let mut frac = [T::zero(); 3];
        for a in 0..3 {
            let u = (x[a] + one) * scale;
            let cell = u.floor().to_usize().unwrap_or(0).min(r - 2);
            base[a] = cell;
            frac[a] = u - T::count(cell);
        }
        let mut index = [0usize; 8];
        let mut weight = [T::zero(); 8];
        for corner in 0..8 {
            let (di, dj, dk) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            index[corner] = self.vertex_index(base[0] + di, base[1] + dj, base[2] + dk);
            let wx = if di == 1 { frac[0] } else { one - frac[0] };
            let wy = if dj == 1 { frac[1] } else { one - frac[1] };
            let wz = if dk == 1 { frac[2] } else { one - frac[2] };
            weight[corner] = wx * wy * wz;
        }
        Some(Stencil { index, weight })
    }

    fn interpolate_raw(&self, s: &Stencil<T>) -> (T, Vec3<T>) {
        let mut d = T::zero();
        let mut c = Vec3::zero();
        for corner in 0..8 {
            let w = s.weight[corner];
            d += self.density[s.index[corner]] * w;
            c += self.color[s.index[corner]] * w;
        }
        (d, c)
    }

    /// Per-vertex shares of the cotangents `(d_sigma, d_color)` at `x`,
    /// chained through the activations. Empty outside the grid.
    pub fn gradient_contributions(&self, x: Vec3<T>, d_sigma: T, d_color: Vec3<T>, out: &mut Vec<GradContribution<T>>) {
        let Some(s) = self.stencil(x) else {
            return;
        };
        let (raw_d, raw_c) = self.interpolate_raw(&s);
        // softplus' = sigmoid, sigmoid' = s (1 - s)
        let g_density = d_sigma * sigmoid(raw_d);
        let g_color = Vec3::new(
            d_color.x * sigmoid_derivative(raw_c.x),
            d_color.y * sigmoid_derivative(raw_c.y),
            d_color.z * sigmoid_derivative(raw_c.z),
        );
        for corner in 0..8 {
            let w = s.weight[corner];
            out.push(GradContribution {
                index: s.index[corner],
                d_density: g_density * w,
                d_color: g_color * w,
            });
        }
    }

    /// Adjoint of [`RadianceField::query`]: adds the cotangent's pull-back
    /// into `grad`. Out-of-grid points are a no-op.
    pub fn accumulate_gradient(&self, grad: &mut FieldGradient<T>, x: Vec3<T>, d_sigma: T, d_color: Vec3<T>) {
        let mut buf = Vec::with_capacity(8);
        self.gradient_contributions(x, d_sigma, d_color, &mut buf);
        grad.add_contributions(&buf);
    }

    /// Raises density to at least `sigma` and sets `color` at vertices
    /// inside the ellipsoid `||(p - center) / radii|| <= 1`.
    pub fn paint_ellipsoid(&mut self, center: Vec3<T>, radii: Vec3<T>, sigma: T, color: Vec3<T>) {
        let raw_sigma = inverse_softplus(sigma.max(T::lit(SIGMA_FLOOR)));
        let raw_color = color_to_raw(color);
        for idx in 0..self.vertex_count() {
            let p = self.vertex_position(idx);
            if (p - center).div_elem(radii).norm() <= T::one() {
                self.density[idx] = self.density[idx].max(raw_sigma);
                self.color[idx] = raw_color;
            }
        }
    }
}

impl<T: Real> RadianceField<T> for VoxelField<T> {
    /// View-independent: `d` is ignored.
    fn query(&self, x: Vec3<T>, _d: Vec3<T>) -> FieldSample<T> {
        match self.stencil(x) {
            None => FieldSample::empty(),
            Some(s) => {
                let (d, c) = self.interpolate_raw(&s);
                FieldSample {
                    sigma: softplus(d),
                    color: c.map(sigmoid),
                }
            }
        }
    }
}

fn sigmoid_derivative<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() - s)
}

fn color_to_raw<T: Real>(c: Vec3<T>) -> Vec3<T> {
    let lo = T::lit(1e-6);
    let hi = T::one() - lo;
    c.map(|v| logit(v.max(lo).min(hi)))
}

/// Gradient buffer congruent to a [`VoxelField`]'s pre-activation grids.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGradient<T> {
    pub d_density: Vec<T>,
    pub d_color: Vec<Vec3<T>>,
}

impl<T: Real> FieldGradient<T> {
    pub fn zeros_like(field: &VoxelField<T>) -> Self {
        Self::zeros(field.vertex_count())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            d_density: vec![T::zero(); n],
            d_color: vec![Vec3::zero(); n],
        }
    }

    pub fn clear(&mut self) {
        self.d_density.iter_mut().for_each(|v| *v = T::zero());
        self.d_color.iter_mut().for_each(|v| *v = Vec3::zero());
    }

    /// Adds contributions in slice order.
    pub fn add_contributions(&mut self, contributions: &[GradContribution<T>]) {
        for c in contributions {
            self.d_density[c.index] += c.d_density;
            self.d_color[c.index] += c.d_color;
        }
    }

    pub fn norm(&self) -> T {
        let d: T = self.d_density.iter().map(|v| *v * *v).sum();
        let c: T = self.d_color.iter().map(|v| v.norm_squared()).sum();
        (d + c).sqrt()
    }

    pub fn max_abs(&self) -> T {
        let d = self.d_density.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        self.d_color
            .iter()
            .fold(d, |m, v| m.max(v.x.abs()).max(v.y.abs()).max(v.z.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(res: usize, seed: u64) -> VoxelField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = res * res * res;
        let density = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let color = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        VoxelField::from_raw(res, density, color).unwrap()
    }

    #[test]
    fn uniform_raw_density_interpolates_to_softplus() {
        let mut f = VoxelField::<f64>::empty(4);
        f.raw_density_mut().iter_mut().for_each(|v| *v = 0.7);
        let s = f.query(Vec3::lit(0.13, -0.4, 0.77), Vec3::lit(1.0, 0.0, 0.0));
        assert!((s.sigma - softplus(0.7)).abs() < 1e-15);
        assert_eq!(s.color, Vec3::splat(0.5));
    }

    #[test]
    fn outside_grid_is_empty() {
        let f = random_field(4, 1);
        assert_eq!(f.query(Vec3::lit(10.0, 10.0, 10.0), Vec3::zero()), FieldSample::empty());
        assert_eq!(
            f.query(Vec3::lit(0.0, 1.0000001, 0.0), Vec3::zero()),
            FieldSample::empty()
        );
    }

    #[test]
    fn vertex_query_uses_vertex_values() {
        let f = random_field(5, 2);
        for idx in [0, 17, 62, f.vertex_count() - 1] {
            let p = f.vertex_position(idx);
            let s = f.query(p, Vec3::zero());
            assert!((s.sigma - softplus(f.raw_density()[idx])).abs() < 1e-12);
            let c = f.raw_color()[idx].map(sigmoid);
            assert!((s.color - c).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_cotangent_leaves_gradient_unchanged() {
        let f = random_field(4, 3);
        let mut g = FieldGradient::zeros_like(&f);
        f.accumulate_gradient(&mut g, Vec3::lit(0.1, 0.2, 0.3), 0.0, Vec3::zero());
        assert!(g.is_zero());
    }

    #[test]
    fn vertex_cotangent_lands_on_one_vertex() {
        let f = random_field(4, 4);
        let idx = f.vertex_index(1, 2, 1);
        let mut g = FieldGradient::zeros_like(&f);
        f.accumulate_gradient(&mut g, f.vertex_position(idx), 1.0, Vec3::splat(1.0));
        for (i, v) in g.d_density.iter().enumerate() {
            if i == idx {
                assert!((*v - sigmoid(f.raw_density()[idx])).abs() < 1e-15);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn out_of_grid_gradient_is_noop() {
        let f = random_field(4, 5);
        let mut g = FieldGradient::zeros_like(&f);
        f.accumulate_gradient(&mut g, Vec3::lit(2.0, 0.0, 0.0), 1.0, Vec3::splat(1.0));
        assert!(g.is_zero());
    }

    #[test]
    fn gradient_matches_central_differences() {
        // <cotangent, query(x)> differentiated w.r.t. every raw parameter.
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let mut f = random_field(3, 100 + trial);
            let x = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let ds: f64 = rng.random_range(-1.0..1.0);
            let dc = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let mut g = FieldGradient::zeros_like(&f);
            f.accumulate_gradient(&mut g, x, ds, dc);
            let objective = |f: &VoxelField<f64>| {
                let s = f.query(x, Vec3::zero());
                ds * s.sigma + dc.dot(s.color)
            };
            for i in 0..f.vertex_count() {
                let orig = f.raw_density()[i];
                f.raw_density_mut()[i] = orig + h;
                let up = objective(&f);
                f.raw_density_mut()[i] = orig - h;
                let down = objective(&f);
                f.raw_density_mut()[i] = orig;
                let fd = (up - down) / (2.0 * h);
                check(fd, g.d_density[i]);
                for ch in 0..3 {
                    let orig = f.raw_color()[i][ch];
                    f.raw_color_mut()[i][ch] = orig + h;
                    let up = objective(&f);
                    f.raw_color_mut()[i][ch] = orig - h;
                    let down = objective(&f);
                    f.raw_color_mut()[i][ch] = orig;
                    check((up - down) / (2.0 * h), g.d_color[i][ch]);
                }
            }
        }

        fn check(fd: f64, analytic: f64) {
            let err = (fd - analytic).abs();
            assert!(
                err <= 1e-3 * fd.abs().max(analytic.abs()) + 1e-9,
                "fd {fd} analytic {analytic}"
            );
        }
    }

    #[test]
    fn query_is_lipschitz() {
        let f = random_field(6, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Raw values lie in [-3, 3]; activations are 1-Lipschitz.
        let bound = 6.0 * 3.0f64.sqrt() * (f.resolution() - 1) as f64 / 2.0;
        for _ in 0..2000 {
            let x = Vec3::new(
                rng.random_range(-0.99..0.99),
                rng.random_range(-0.99..0.99),
                rng.random_range(-0.99..0.99),
            );
            let delta = Vec3::new(
                rng.random_range(-1e-3..1e-3),
                rng.random_range(-1e-3..1e-3),
                rng.random_range(-1e-3..1e-3),
            );
            let a = f.query(x, Vec3::zero());
            let b = f.query(x + delta, Vec3::zero());
            assert!((a.sigma - b.sigma).abs() <= bound * delta.norm() + 1e-12);
            assert!((a.color - b.color).norm() <= 3f64.sqrt() * bound * delta.norm() + 1e-12);
        }
    }

    #[test]
    fn from_raw_checks_shape() {
        assert!(matches!(
            VoxelField::<f64>::from_raw(3, vec![0.0; 26], vec![Vec3::zero(); 27]),
            Err(FieldError::Shape { .. })
        ));
        assert!(matches!(
            VoxelField::<f64>::from_raw(3, vec![f64::NAN; 27], vec![Vec3::zero(); 27]),
            Err(FieldError::NonFinite(0))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let mut f = VoxelField::<f32>::empty(8);
        f.paint_ellipsoid(Vec3::zero(), Vec3::splat(0.5), 5.0, Vec3::lit(1.0, 0.0, 0.0));
        let s = f.query(Vec3::zero(), Vec3::zero());
        assert!(s.sigma > 4.0 && s.color.x > 0.99);
    }
}
