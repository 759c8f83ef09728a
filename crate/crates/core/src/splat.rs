//! Gaussian splat primitives and the closed-form density they define.
//!
//! Storage follows the 3DGS file conventions: scales are stored as natural
//! logarithms, opacity as a logit, rotation as a (w, x, y, z) quaternion.
//! Activations (`exp`, logistic sigmoid) are applied on access.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Quat, Vec3};
use crate::scalar::{sigmoid, Real};

/// Quaternions whose norm is within this distance of one are kept verbatim.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSplat<T> {
    pub position: Vec3<T>,
    pub log_scale: Vec3<T>,
    pub rotation: Quat<T>,
    pub opacity_logit: T,
    pub colour_dc: [T; 3],
    /// Higher-order SH coefficients, carried through untouched.
    pub colour_rest: Vec<T>,
}

impl<T: Real> GaussianSplat<T> {
    /// Isotropic, identity-rotated splat; handy for synthetic data and tests.
    pub fn isotropic(position: Vec3<T>, scale: T, opacity: T) -> Self {
        Self {
            position,
            log_scale: Vec3::splat(scale.ln()),
            rotation: Quat::identity(),
            opacity_logit: crate::scalar::logit(opacity),
            colour_dc: [T::zero(); 3],
            colour_rest: Vec::new(),
        }
    }

    /// Activated per-axis standard deviations, `exp(log_scale)`.
    pub fn scale(&self) -> Vec3<T> {
        self.log_scale.map(|s| s.exp())
    }

    /// Activated opacity in (0, 1).
    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    pub fn rotation_matrix(&self) -> Mat3<T> {
        self.rotation.normalized().to_matrix()
    }

    /// Σ = R · diag(s²) · Rᵀ.
    pub fn covariance(&self) -> Mat3<T> {
        let r = self.rotation_matrix();
        let s = self.scale();
        r.mul_mat(&Mat3::diagonal(Vec3::new(s.x * s.x, s.y * s.y, s.z * s.z)))
            .mul_mat(&r.transpose())
    }

    /// Σ⁻¹ assembled from the factorization, which stays accurate for
    /// strongly anisotropic splats where a generic inverse would not.
    pub fn precision(&self) -> Mat3<T> {
        let r = self.rotation_matrix();
        let inv = self.log_scale.map(|l| (-(l + l)).exp());
        r.mul_mat(&Mat3::diagonal(inv)).mul_mat(&r.transpose())
    }

    /// (x−μ)ᵀ Σ⁻¹ (x−μ).
    pub fn mahalanobis_squared(&self, x: Vec3<T>) -> T {
        let d = x - self.position;
        d.dot(self.precision().mul_vec(d))
    }

    /// Unnormalized Gaussian density `exp(-½ (x−μ)ᵀ Σ⁻¹ (x−μ))`.
    pub fn density_at(&self, x: Vec3<T>) -> T {
        (-T::lit(0.5) * self.mahalanobis_squared(x)).exp()
    }

    /// ∇ₓ log G(x) = −Σ⁻¹ (x−μ).
    pub fn log_density_gradient(&self, x: Vec3<T>) -> Vec3<T> {
        -self.precision().mul_vec(x - self.position)
    }

    /// Ratio of largest to smallest activated scale (≥ 1).
    pub fn anisotropy_ratio(&self) -> T {
        let s = self.scale();
        s.max_component() / s.min_component()
    }

    pub fn max_scale(&self) -> T {
        self.scale().max_component()
    }

    pub fn cast<U: Real>(&self) -> GaussianSplat<U> {
        let c = |v: T| U::lit(v.as_f64());
        GaussianSplat {
            position: self.position.cast(),
            log_scale: self.log_scale.cast(),
            rotation: Quat::new(
                c(self.rotation.w),
                c(self.rotation.x),
                c(self.rotation.y),
                c(self.rotation.z),
            ),
            opacity_logit: c(self.opacity_logit),
            colour_dc: self.colour_dc.map(c),
            colour_rest: self.colour_rest.iter().map(|&v| c(v)).collect(),
        }
    }

    /// Renormalizes the rotation when its norm drifts from one.
    pub(crate) fn normalize_rotation(&mut self) {
        let n = self.rotation.norm();
        if (n.as_f64() - 1.0).abs() > QUAT_NORM_TOLERANCE {
            self.rotation = self.rotation.normalized();
        }
    }
}

/// Ordered collection of splats. Indices are stable identities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplatCloud<T> {
    pub splats: Vec<GaussianSplat<T>>,
    pub source_path: Option<String>,
}

impl<T: Real> SplatCloud<T> {
    /// Builds a cloud, rejecting non-finite positions, zero-norm rotations
    /// and ragged higher-order colour arrays.
    pub fn new(mut splats: Vec<GaussianSplat<T>>) -> Result<Self> {
        let rest_len = splats.first().map_or(0, |s| s.colour_rest.len());
        for (i, s) in splats.iter_mut().enumerate() {
            if !s.position.is_finite() {
                return Err(Error::Validation(format!(
                    "splat {i} has non-finite position {:?}",
                    s.position
                )));
            }
            if !s.log_scale.is_finite() || !s.opacity_logit.is_finite() {
                return Err(Error::Validation(format!("splat {i} has non-finite scale or opacity")));
            }
            let n = s.rotation.norm();
            if !(n > T::zero()) || !n.is_finite() {
                return Err(Error::Validation(format!(
                    "splat {i} has a degenerate rotation quaternion"
                )));
            }
            if s.colour_rest.len() != rest_len {
                return Err(Error::Validation(format!(
                    "splat {i} has {} higher-order colour coefficients, expected {rest_len}",
                    s.colour_rest.len()
                )));
            }
            s.normalize_rotation();
        }
        Ok(Self {
            splats,
            source_path: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            splats: Vec::new(),
            source_path: None,
        }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GaussianSplat<T>> {
        self.splats.iter()
    }

    pub fn positions(&self) -> Vec<Vec3<T>> {
        self.splats.iter().map(|s| s.position).collect()
    }

    /// Number of higher-order colour coefficients per splat.
    pub fn rest_len(&self) -> usize {
        self.splats.first().map_or(0, |s| s.colour_rest.len())
    }

    /// Subset in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            splats: indices.iter().map(|&i| self.splats[i].clone()).collect(),
            source_path: self.source_path.clone(),
        }
    }

    /// Subset of splats whose flag is set, order preserved.
    pub fn filter_mask(&self, keep: &[bool]) -> Self {
        debug_assert_eq!(keep.len(), self.len());
        Self {
            splats: self
                .splats
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(s, _)| s.clone())
                .collect(),
            source_path: self.source_path.clone(),
        }
    }

    /// Axis-aligned bounds of the splat centres; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = self.splats.first()?.position;
        Some(self.splats.iter().fold((first, first), |(lo, hi), s| {
            (lo.component_min(s.position), hi.component_max(s.position))
        }))
    }

    pub fn cast<U: Real>(&self) -> SplatCloud<U> {
        SplatCloud {
            splats: self.splats.iter().map(|s| s.cast()).collect(),
            source_path: self.source_path.clone(),
        }
    }
}

impl<T> std::ops::Index<usize> for SplatCloud<T> {
    type Output = GaussianSplat<T>;
    fn index(&self, i: usize) -> &GaussianSplat<T> {
        &self.splats[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splat(scales: [f64; 3], rot: Quat<f64>) -> GaussianSplat<f64> {
        GaussianSplat {
            position: Vec3::zero(),
            log_scale: Vec3::from_array(scales.map(f64::ln)),
            rotation: rot,
            opacity_logit: 0.0,
            colour_dc: [0.0; 3],
            colour_rest: vec![],
        }
    }

    #[test]
    fn covariance_diagonal_closed_form() {
        let s = splat([1.0, 2.0, 3.0], Quat::identity());
        let expect = Mat3::diagonal(Vec3::new(1.0, 4.0, 9.0));
        assert!(s.covariance().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn covariance_quarter_turn_permutes_axes() {
        let q = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let s = splat([1.0, 2.0, 1.0], q);
        let expect = Mat3::diagonal(Vec3::new(4.0, 1.0, 1.0));
        assert!(s.covariance().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn density_closed_forms() {
        let iso = splat([1.0, 1.0, 1.0], Quat::identity());
        assert_eq!(iso.density_at(Vec3::zero()), 1.0);
        assert!((iso.density_at(Vec3::new(1.0, 0.0, 0.0)) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((iso.density_at(Vec3::new(1.0, 0.0, 0.0)) - 0.60653).abs() < 1e-5);

        let diag = splat([1.0, 2.0, 3.0], Quat::identity());
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert!((diag.mahalanobis_squared(x) - 3.0).abs() < 1e-12);
        assert!((diag.density_at(x) - 0.22313).abs() < 1e-5);
    }

    #[test]
    fn anisotropy_examples() {
        let iso = splat([0.01; 3], Quat::identity());
        assert!((iso.anisotropy_ratio() - 1.0).abs() < 1e-12);
        let needle = splat([0.001, 0.001, 0.1], Quat::identity());
        assert!((needle.anisotropy_ratio() - 100.0).abs() < 1e-9);
        let permuted = splat([0.1, 0.001, 0.001], Quat::identity());
        assert_eq!(needle.anisotropy_ratio(), permuted.anisotropy_ratio());
    }

    #[test]
    fn nan_position_is_rejected_with_index() {
        let mut bad = splat([1.0; 3], Quat::identity());
        bad.position.y = f64::NAN;
        let err = SplatCloud::new(vec![splat([1.0; 3], Quat::identity()), bad]).unwrap_err();
        assert!(err.to_string().contains("splat 1"), "{err}");
    }

    #[test]
    fn rotation_is_normalized_on_construction() {
        let s = splat([1.0; 3], Quat::new(2.0, 0.0, 0.0, 0.0));
        let cloud = SplatCloud::new(vec![s]).unwrap();
        assert!((cloud[0].rotation.norm() - 1.0).abs() < 1e-12);
    }
}
