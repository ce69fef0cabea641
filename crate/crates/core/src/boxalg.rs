//! Smoothed ("gumbel") box algebra.
//!
//! A box is a pair of corners `(min, max)` in `[0, 1]^D`. Boxes built from
//! parameters go through sigmoid squashes so the corners are always ordered
//! and inside the unit cube; boxes produced by smooth intersection can be
//! inverted (`min > max` in some dimension), which is how an empty
//! intersection is represented. Volumes are computed in log space with
//! softplus-smoothed side lengths, so every quantity here is finite and
//! differentiable, including for disjoint boxes.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Temperatures and numeric floors for the smoothed operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxAlgebraConfig {
    pub dim: usize,
    /// Softplus temperature applied to side lengths.
    pub vol_temp: f64,
    /// Log-sum-exp temperature for smooth max/min in intersections.
    pub int_temp: f64,
    /// Floor inside residual logarithms.
    pub log_eps: f64,
}

impl Default for BoxAlgebraConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            vol_temp: 0.1,
            int_temp: 0.01,
            log_eps: 1e-10,
        }
    }
}

impl BoxAlgebraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("box dim must be positive".into()));
        }
        if !(self.vol_temp > 0.0 && self.vol_temp.is_finite()) {
            return Err(Error::Config("vol_temp must be positive".into()));
        }
        if !(self.int_temp > 0.0 && self.int_temp.is_finite()) {
            return Err(Error::Config("int_temp must be positive".into()));
        }
        if !(self.log_eps > 0.0 && self.log_eps <= 1e-6) {
            return Err(Error::Config("log_eps must lie in (0, 1e-6]".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scalar kernels. The differentiable tape uses these same functions so the
// in-graph and out-of-graph box math cannot drift apart.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(softplus(x))`, finite for every finite `x`.
#[inline]
pub fn log_softplus(x: f64) -> f64 {
    if x < -30.0 {
        // softplus(x) = e^x (1 - e^x / 2 + ...)
        x + (-0.5 * x.exp()).ln_1p()
    } else {
        softplus(x).ln()
    }
}

/// Derivative of [`log_softplus`].
#[inline]
pub fn log_softplus_grad(x: f64) -> f64 {
    if x < -30.0 {
        1.0 - 0.5 * x.exp()
    } else {
        sigmoid(x) / softplus(x)
    }
}

/// `t · softplus(x / t)`.
#[inline]
pub fn softplus_temp(x: f64, t: f64) -> f64 {
    t * softplus(x / t)
}

/// Log of a softplus-smoothed side length.
#[inline]
pub fn log_side(side: f64, vol_temp: f64) -> f64 {
    vol_temp.ln() + log_softplus(side / vol_temp)
}

/// Derivative of [`log_side`] with respect to `side`.
#[inline]
pub fn log_side_grad(side: f64, vol_temp: f64) -> f64 {
    log_softplus_grad(side / vol_temp) / vol_temp
}

/// `t · ln(e^{a/t} + e^{b/t})`. Returns the value and `d/da` (`d/db` is
/// `1 - d/da`).
#[inline]
pub fn smooth_max(a: f64, b: f64, t: f64) -> (f64, f64) {
    let hi = a.max(b);
    let gap = (a - b).abs() / t;
    let value = hi + t * (-gap).exp().ln_1p();
    (value, sigmoid((a - b) / t))
}

/// `-t · ln(e^{-a/t} + e^{-b/t})`. Returns the value and `d/da`.
#[inline]
pub fn smooth_min(a: f64, b: f64, t: f64) -> (f64, f64) {
    let lo = a.min(b);
    let gap = (a - b).abs() / t;
    let value = lo - t * (-gap).exp().ln_1p();
    (value, sigmoid((b - a) / t))
}

/// Inverse of [`sigmoid`] with the argument clamped away from 0 and 1.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

// ---------------------------------------------------------------------------

/// An axis-aligned box given by its corners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxEmbed {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Corners from unconstrained parameters:
/// `min = σ(p_min)`, `max = min + σ(p_size) · (1 - min)`.
#[inline]
pub fn corners_from_params(p_min: f64, p_size: f64) -> (f64, f64) {
    let lo = sigmoid(p_min);
    (lo, lo + sigmoid(p_size) * (1.0 - lo))
}

/// Parameters whose corners are `(lo, hi)`, clamped into the reachable range.
#[inline]
pub fn params_from_corners(lo: f64, hi: f64) -> (f64, f64) {
    let lo = lo.clamp(0.0, 1.0);
    let hi = hi.clamp(lo, 1.0);
    let room = 1.0 - lo;
    let frac = if room > 0.0 { (hi - lo) / room } else { 0.0 };
    (logit(lo), logit(frac))
}

impl BoxEmbed {
    /// Builds a box from unconstrained `(params_min, params_size)`.
    pub fn from_params(params_min: &[f64], params_size: &[f64]) -> Result<Self> {
        check_dim(params_min.len(), params_size.len())?;
        let (min, max) = params_min
            .iter()
            .zip(params_size)
            .map(|(&a, &b)| corners_from_params(a, b))
            .unzip();
        Ok(Self { min, max })
    }

    /// Builds a box directly from corners. No ordering check: smooth
    /// intersections of disjoint boxes are inverted.
    pub fn from_corners(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        check_dim(min.len(), max.len())?;
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Recovers parameters that reproduce these corners (up to clamping at
    /// the cube faces).
    pub fn to_params(&self) -> (Vec<f64>, Vec<f64>) {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(&lo, &hi)| params_from_corners(lo, hi))
            .unzip()
    }

    pub fn side_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.min.iter().zip(&self.max).map(|(lo, hi)| hi - lo)
    }
}

/// Product of side lengths; inverted sides count as zero.
pub fn hard_volume(b: &BoxEmbed) -> f64 {
    b.side_lengths().map(|s| s.max(0.0)).product()
}

/// Sum of log softplus-smoothed side lengths.
pub fn gumbel_log_volume(b: &BoxEmbed, cfg: &BoxAlgebraConfig) -> f64 {
    b.side_lengths().map(|s| log_side(s, cfg.vol_temp)).sum()
}

/// Smooth intersection: smooth max of lower corners, smooth min of upper.
pub fn intersect(a: &BoxEmbed, b: &BoxEmbed, cfg: &BoxAlgebraConfig) -> Result<BoxEmbed> {
    check_dim(a.dim(), b.dim())?;
    let t = cfg.int_temp;
    let min = a
        .min
        .iter()
        .zip(&b.min)
        .map(|(&x, &y)| smooth_max(x, y, t).0)
        .collect();
    let max = a
        .max
        .iter()
        .zip(&b.max)
        .map(|(&x, &y)| smooth_min(x, y, t).0)
        .collect();
    Ok(BoxEmbed { min, max })
}

/// Hard union: coordinate-wise min of lower corners and max of upper.
pub fn union_box(a: &BoxEmbed, b: &BoxEmbed) -> Result<BoxEmbed> {
    check_dim(a.dim(), b.dim())?;
    Ok(BoxEmbed {
        min: a.min.iter().zip(&b.min).map(|(x, y)| x.min(*y)).collect(),
        max: a.max.iter().zip(&b.max).map(|(x, y)| x.max(*y)).collect(),
    })
}

/// Coordinate-wise mean of the members' corners.
pub fn soft_union(boxes: &[BoxEmbed]) -> Result<BoxEmbed> {
    let first = boxes
        .first()
        .ok_or_else(|| Error::Precondition("soft_union of an empty set".into()))?;
    let dim = first.dim();
    let mut min = vec![0.0; dim];
    let mut max = vec![0.0; dim];
    for b in boxes {
        check_dim(dim, b.dim())?;
        for i in 0..dim {
            min[i] += b.min[i];
            max[i] += b.max[i];
        }
    }
    let n = boxes.len() as f64;
    min.iter_mut().for_each(|v| *v /= n);
    max.iter_mut().for_each(|v| *v /= n);
    Ok(BoxEmbed { min, max })
}

/// Log-volume of the smooth intersection of `a` and `b`, computed without
/// materializing the intersection box. Symmetric in its arguments bit for
/// bit.
fn log_intersection_volume(a: &BoxEmbed, b: &BoxEmbed, cfg: &BoxAlgebraConfig) -> f64 {
    assert_eq!(a.dim(), b.dim(), "box dimension mismatch");
    let t = cfg.int_temp;
    (0..a.dim())
        .map(|i| {
            let lo = smooth_max(a.min[i], b.min[i], t).0;
            let hi = smooth_min(a.max[i], b.max[i], t).0;
            log_side(hi - lo, cfg.vol_temp)
        })
        .sum()
}

/// Log symmetric affinity: log-volume of the intersection.
///
/// Panics if the boxes differ in dimension.
pub fn sym_affinity(a: &BoxEmbed, b: &BoxEmbed, cfg: &BoxAlgebraConfig) -> f64 {
    log_intersection_volume(a, b, cfg)
}

/// Log of the intersection volume divided by both operand volumes.
pub fn norm_sym_affinity(a: &BoxEmbed, b: &BoxEmbed, cfg: &BoxAlgebraConfig) -> f64 {
    // Sum the operand volumes first so the result is exactly symmetric.
    let vols = gumbel_log_volume(a, cfg) + gumbel_log_volume(b, cfg);
    sym_affinity(a, b, cfg) - vols
}

/// Log of the fraction of `parent`'s volume covered by its intersection
/// with `child`.
pub fn asym_containment(child: &BoxEmbed, parent: &BoxEmbed, cfg: &BoxAlgebraConfig) -> f64 {
    sym_affinity(child, parent, cfg) - gumbel_log_volume(parent, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(dim: usize) -> BoxAlgebraConfig {
        BoxAlgebraConfig {
            dim,
            ..Default::default()
        }
    }

    fn corners(min: &[f64], max: &[f64]) -> BoxEmbed {
        BoxEmbed::from_corners(min.to_vec(), max.to_vec()).unwrap()
    }

    #[test]
    fn zero_params_give_midpoints() {
        let b = BoxEmbed::from_params(&[0.0; 4], &[0.0; 4]).unwrap();
        for i in 0..4 {
            assert_eq!(b.min[i], 0.5);
            assert_eq!(b.max[i], 0.75);
        }
    }

    #[test]
    fn saturated_params_fill_cube() {
        let b = BoxEmbed::from_params(&[-800.0, -50.0], &[800.0, 50.0]).unwrap();
        assert_abs_diff_eq!(b.min[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max[0], 1.0, epsilon = 1e-12);
        assert!(b.min[1] < 1e-20 && b.max[1] >= 1.0 - 1e-15);
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        assert!(matches!(
            BoxEmbed::from_params(&[0.0; 3], &[0.0; 2]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn params_round_trip_through_corners() {
        let b = BoxEmbed::from_params(&[0.3, -1.2, 2.0], &[-2.0, 0.5, 1.0]).unwrap();
        let (pm, ps) = b.to_params();
        let back = BoxEmbed::from_params(&pm, &ps).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(b.min[i], back.min[i], epsilon = 1e-12);
            assert_abs_diff_eq!(b.max[i], back.max[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn hard_volume_examples() {
        assert_eq!(hard_volume(&corners(&[0.0; 3], &[1.0; 3])), 1.0);
        assert_abs_diff_eq!(
            hard_volume(&corners(&[0.2, 0.2], &[0.6, 0.7])),
            0.2,
            epsilon = 1e-15
        );
        assert_eq!(hard_volume(&corners(&[0.4, 0.1], &[0.4, 0.9])), 0.0);
    }

    #[test]
    fn log_volume_approaches_hard_volume_for_wide_sides() {
        let c = BoxAlgebraConfig {
            dim: 3,
            vol_temp: 1e-3,
            ..Default::default()
        };
        // every side is 100 temperatures long
        let b = corners(&[0.1, 0.2, 0.3], &[0.2, 0.3, 0.4]);
        let hard = hard_volume(&b).ln();
        let soft = gumbel_log_volume(&b, &c);
        assert!(((soft - hard) / hard).abs() < 0.01);
    }

    #[test]
    fn degenerate_box_log_volume_closed_form() {
        let c = cfg(5);
        let b = corners(&[0.3; 5], &[0.3; 5]);
        let expected = 5.0 * softplus_temp(0.0, c.vol_temp).ln();
        assert_abs_diff_eq!(gumbel_log_volume(&b, &c), expected, epsilon = 1e-12);
    }

    #[test]
    fn longer_side_has_larger_volume() {
        let c = cfg(2);
        let a = corners(&[0.1, 0.1], &[0.4, 0.4]);
        let b = corners(&[0.1, 0.1], &[0.4, 0.6]);
        assert!(gumbel_log_volume(&b, &c) > gumbel_log_volume(&a, &c));
    }

    #[test]
    fn self_intersection_within_smoothing() {
        let c = cfg(3);
        let a = corners(&[0.1, 0.3, 0.5], &[0.4, 0.9, 0.6]);
        let i = intersect(&a, &a, &c).unwrap();
        let tol = c.int_temp * 2f64.ln() + 1e-12;
        for d in 0..3 {
            assert!((i.min[d] - a.min[d]).abs() <= tol);
            assert!((i.max[d] - a.max[d]).abs() <= tol);
        }
    }

    #[test]
    fn nested_intersection_matches_inner_box() {
        let c = BoxAlgebraConfig {
            dim: 2,
            int_temp: 1e-3,
            ..Default::default()
        };
        let inner = corners(&[0.3, 0.4], &[0.5, 0.6]);
        let outer = corners(&[0.1, 0.1], &[0.9, 0.9]);
        let i = intersect(&inner, &outer, &c).unwrap();
        for d in 0..2 {
            // hard max/min oracle
            let lo = inner.min[d].max(outer.min[d]);
            let hi = inner.max[d].min(outer.max[d]);
            assert!((i.min[d] - lo).abs() / lo < 0.01);
            assert!((i.max[d] - hi).abs() / hi < 0.01);
        }
    }

    #[test]
    fn disjoint_intersection_has_negligible_volume() {
        let c = BoxAlgebraConfig {
            dim: 2,
            vol_temp: 0.01,
            int_temp: 0.001,
            ..Default::default()
        };
        let a = corners(&[0.0, 0.0], &[0.2, 0.2]);
        let b = corners(&[0.6, 0.6], &[0.9, 0.9]);
        let i = intersect(&a, &b, &c).unwrap();
        assert!(gumbel_log_volume(&i, &c).exp() < 1e-6);
        assert!(gumbel_log_volume(&i, &c).is_finite());
    }

    #[test]
    fn union_examples() {
        let a = corners(&[0.0, 0.0], &[0.3, 0.3]);
        let b = corners(&[0.5, 0.5], &[0.8, 0.8]);
        assert_eq!(union_box(&a, &a).unwrap(), a);
        assert_eq!(union_box(&a, &b).unwrap(), corners(&[0.0, 0.0], &[0.8, 0.8]));
        assert_eq!(union_box(&a, &b).unwrap(), union_box(&b, &a).unwrap());
        assert!(union_box(&a, &corners(&[0.0], &[1.0])).is_err());
    }

    #[test]
    fn soft_union_examples() {
        let a = corners(&[0.1, 0.2], &[0.5, 0.6]);
        let b = corners(&[0.3, 0.0], &[0.7, 0.9]);
        assert_eq!(soft_union(std::slice::from_ref(&a)).unwrap(), a);
        let s = soft_union(&[a.clone(), b.clone()]).unwrap();
        assert_abs_diff_eq!(s.min[0], 0.2, epsilon = 1e-15);
        let u = union_box(&a, &b).unwrap();
        for d in 0..2 {
            assert!(s.min[d] >= u.min[d] && s.max[d] <= u.max[d]);
        }
        assert!(matches!(soft_union(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn self_affinity_close_to_own_volume() {
        let c = cfg(3);
        let a = corners(&[0.1, 0.3, 0.5], &[0.4, 0.9, 0.6]);
        let own = gumbel_log_volume(&a, &c);
        let s = sym_affinity(&a, &a, &c);
        // The smooth self-intersection shrinks each side by at most
        // 2·int_temp·ln 2; volume is monotone, so the shrunken hard-corner
        // box bounds the deficit.
        let shrink = 2.0 * c.int_temp * 2f64.ln();
        let shrunk = corners(
            &a.min.iter().map(|v| v + shrink / 2.0).collect::<Vec<_>>(),
            &a.max.iter().map(|v| v - shrink / 2.0).collect::<Vec<_>>(),
        );
        assert!(s <= own);
        assert!(s >= gumbel_log_volume(&shrunk, &c) - 1e-12);
    }

    #[test]
    fn far_disjoint_affinity_below_each_volume() {
        let c = cfg(2);
        let a = corners(&[0.0, 0.0], &[0.2, 0.2]);
        let b = corners(&[0.7, 0.7], &[0.95, 0.95]);
        let s = sym_affinity(&a, &b, &c);
        assert!(s < gumbel_log_volume(&a, &c));
        assert!(s < gumbel_log_volume(&b, &c));
    }

    #[test]
    fn norm_affinity_of_self_is_minus_volume() {
        let c = BoxAlgebraConfig {
            dim: 2,
            vol_temp: 1e-4,
            int_temp: 1e-4,
            ..Default::default()
        };
        let a = corners(&[0.2, 0.3], &[0.6, 0.8]);
        let v = hard_volume(&a);
        assert_abs_diff_eq!(norm_sym_affinity(&a, &a, &c), -v.ln(), epsilon = 1e-2);
    }

    #[test]
    fn norm_affinity_decreases_when_other_box_grows_away() {
        let c = cfg(2);
        let a = corners(&[0.1, 0.1], &[0.4, 0.4]);
        let b = corners(&[0.3, 0.3], &[0.6, 0.6]);
        // grow b away from a: the overlap region stays put
        let b_big = corners(&[0.3, 0.3], &[0.9, 0.9]);
        assert!(norm_sym_affinity(&a, &b_big, &c) < norm_sym_affinity(&a, &b, &c));
    }

    #[test]
    fn containment_examples() {
        let c = BoxAlgebraConfig {
            dim: 2,
            vol_temp: 1e-4,
            int_temp: 1e-4,
            ..Default::default()
        };
        let child = corners(&[0.3, 0.3], &[0.4, 0.5]);
        let parent = corners(&[0.1, 0.1], &[0.8, 0.9]);
        assert_abs_diff_eq!(asym_containment(&parent, &parent, &c), 0.0, epsilon = 1e-2);
        assert_abs_diff_eq!(asym_containment(&parent, &child, &c), 0.0, epsilon = 1e-2);
        let oracle = (hard_volume(&child) / hard_volume(&parent)).ln();
        let got = asym_containment(&child, &parent, &c);
        assert!(got < 0.0);
        assert!((got - oracle).abs() / oracle.abs() < 1e-2);
    }
}
