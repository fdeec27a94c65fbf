use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::scalar::Real;

/// How the transmittance prefix before sample `i` is accumulated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmittanceMode {
    /// `T_i = exp(-sum_{j<i} sigma_j delta_j)`.
    #[default]
    Exclusive,
    /// `T_i = exp(-sum_{j<=i} sigma_j delta_j)`; weights no longer sum to one.
    Inclusive,
}

/// One shaded sample along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    pub delta: T,
    pub sigma: T,
    pub color: Vec3<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Composited<T> {
    pub color: Vec3<T>,
    pub opacity: T,
    /// Transmittance past the last sample.
    pub transmittance: T,
}

/// Per-sample compositing weights `T_i (1 - exp(-sigma_i delta_i))` and the
/// final transmittance.
pub fn compositing_weights<T: Real>(samples: &[Sample<T>], mode: TransmittanceMode) -> (Vec<T>, T) {
    let mut weights = Vec::with_capacity(samples.len());
    let mut optical_depth = T::zero();
    for s in samples {
        let tau = s.sigma * s.delta;
        let alpha = -(-tau).exp_m1();
        let prefix = match mode {
            TransmittanceMode::Exclusive => optical_depth,
            TransmittanceMode::Inclusive => optical_depth + tau,
        };
        weights.push((-prefix).exp() * alpha);
        optical_depth += tau;
    }
    (weights, (-optical_depth).exp())
}

/// Alpha-composites samples front to back over `background`.
pub fn composite<T: Real>(samples: &[Sample<T>], background: Vec3<T>, mode: TransmittanceMode) -> Composited<T> {
    let (weights, transmittance) = compositing_weights(samples, mode);
    let mut color = Vec3::zero();
    for (s, w) in samples.iter().zip(&weights) {
        color += s.color * *w;
    }
    if samples.is_empty() {
        return Composited {
            color: background,
            opacity: T::zero(),
            transmittance: T::one(),
        };
    }
    Composited {
        color: color + background * transmittance,
        opacity: T::one() - transmittance,
        transmittance,
    }
}

/// Adjoint of [`composite`]: for a cotangent on the output color, returns
/// `(d_sigma, d_color)` per sample.
pub fn composite_backward<T: Real>(
    samples: &[Sample<T>],
    background: Vec3<T>,
    mode: TransmittanceMode,
    d_out: Vec3<T>,
) -> Vec<(T, Vec3<T>)> {
    let n = samples.len();
    let (weights, t_final) = compositing_weights(samples, mode);
    // Exclusive transmittance after each sample: T_{i+1}.
    let mut t_next = Vec::with_capacity(n);
    let mut optical_depth = T::zero();
    for s in samples {
        optical_depth += s.sigma * s.delta;
        t_next.push((-optical_depth).exp());
    }
    let mut out = vec![(T::zero(), Vec3::zero()); n];
    // sum over later samples of w_i <g, c_i>, plus the background term.
    let mut tail = t_final * d_out.dot(background);
    for k in (0..n).rev() {
        let s = &samples[k];
        let gc = d_out.dot(s.color);
        let own = match mode {
            TransmittanceMode::Exclusive => t_next[k],
            TransmittanceMode::Inclusive => t_next[k] * (T::lit(2.0) * (-(s.sigma * s.delta)).exp() - T::one()),
        };
        out[k] = (s.delta * (own * gc - tail), d_out * weights[k]);
        tail += weights[k] * gc;
    }
    out
}
