//! Tension field, p(·)-tension in trace and expanded form, and the bitension.

use serde::Serialize;

use crate::dual::{jet, values, Dual, Real};
use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::Mat;
use crate::jacobi;
use crate::maps::{exponent_at, hs_norm_sq_generic, ExponentField, SmoothMap};
use crate::section::Section;

/// `|dφ|` below this counts as a rank-degenerate point.
pub const EPS_RANK: f64 = 1e-9;
/// Margin on the exponent used by the degenerate-point rules.
pub const EPS_P: f64 = 1e-6;

/// Geometric data of a map at one point, generic over the scalar type.
pub(crate) struct Local<T> {
    pub y: Vec<T>,
    pub cols: Vec<Vec<T>>,
    pub ginv: Mat<T>,
    pub gamma: Vec<Mat<T>>,
    pub u2: T,
}

pub(crate) fn local<T: Real>(map: &SmoothMap, x: &[T]) -> Result<Local<T>> {
    let (y, cols) = map.jacobian_columns(x)?;
    let frame = map.domain().frame(x)?;
    let u2 = hs_norm_sq_generic(map, &frame.ginv, &y, &cols);
    Ok(Local {
        y,
        cols,
        ginv: frame.ginv,
        gamma: frame.gamma,
        u2,
    })
}

/// `u^{p(x) − shift}` from `u² = |dφ|²`; exactly one when the exponent is
/// the constant `shift`.
pub(crate) fn weight<T: Real>(p: &ExponentField, x: &[T], u2: T, shift: f64) -> T {
    if p.as_constant() == Some(shift) {
        return T::one();
    }
    u2.powr((p.eval(x) - shift) * 0.5)
}

/// Applies the degenerate-point rule at a plain point.
///
/// Returns `Ok(true)` when the quantity is defined as zero there, `Ok(false)`
/// for a regular point.
pub(crate) fn degenerate_zero(
    map: &SmoothMap,
    p: &ExponentField,
    x: &[f64],
    threshold: f64,
) -> Result<bool> {
    let pv = exponent_at(p, x)?;
    let l = local(map, x)?;
    let u = l.u2.max(0.0).sqrt();
    if u > EPS_RANK {
        return Ok(false);
    }
    if pv > threshold + EPS_P {
        return Ok(true);
    }
    if threshold == 2.0 && p.as_constant() == Some(2.0) {
        return Ok(false);
    }
    Err(Error::DegeneratePoint {
        point: x.to_vec(),
        norm: u,
        exponent: pv,
    })
}

/// `g^{ij}[∇^φ_{∂_i}S_j − Γ^k_{ij} S_k]` for a one-form `S` given by its
/// values and raw partials (`ds[i][j]` is `∂_i S_j`).
pub(crate) fn trace_covariant<T: Real>(
    map: &SmoothMap,
    l: &Local<T>,
    s: &[Vec<T>],
    ds: &[Vec<Vec<T>>],
) -> Vec<T> {
    let frame = map.target().frame(&l.y);
    let k = l.y.len();
    let m = l.cols.len();
    let mut out = vec![T::zero(); k];
    for i in 0..m {
        for j in 0..m {
            let gij = l.ginv[i][j];
            let cov = frame.covariant(&l.cols[i], &s[j], &ds[i][j]);
            for c in 0..k {
                let mut v = cov[c];
                for (kk, sk) in s.iter().enumerate() {
                    v -= l.gamma[kk][i][j] * sk[c];
                }
                out[c] += gij * v;
            }
        }
    }
    out
}

/// Splits a flat jet output into `count` vectors of length `k`.
pub(crate) fn unflatten<T: Copy>(flat: &[T], count: usize, k: usize) -> Vec<Vec<T>> {
    (0..count).map(|j| flat[j * k..(j + 1) * k].to_vec()).collect()
}

/// `trace_g ∇(weight · dφ)` with `weight = u^{p−2}` (or one for `p = None`).
fn rescaled_trace<T: Real>(map: &SmoothMap, p: Option<&ExponentField>, x: &[T]) -> Result<Vec<T>> {
    let k = map.target().coords();
    let m = x.len();
    let j = jet(
        |z: &[Dual<T>]| {
            let l = local(map, z)?;
            let w = match p {
                Some(p) => weight(p, z, l.u2, 2.0),
                None => Dual::one(),
            };
            let mut out = l.y.clone();
            for col in &l.cols {
                out.extend(col.iter().copied());
            }
            for col in &l.cols {
                out.extend(col.iter().map(|&a| a * w));
            }
            Ok(out)
        },
        x,
    )?;
    let y = j.value[..k].to_vec();
    let cols = unflatten(&j.value[k..], m, k);
    let s = unflatten(&j.value[k + m * k..], m, k);
    let ds: Vec<Vec<Vec<T>>> = j
        .partials
        .iter()
        .map(|row| unflatten(&row[k + m * k..], m, k))
        .collect();
    let frame = map.domain().frame(x)?;
    let l = Local {
        y,
        cols,
        ginv: frame.ginv,
        gamma: frame.gamma,
        u2: T::zero(),
    };
    Ok(trace_covariant(map, &l, &s, &ds))
}

/// Trace-form `τ_p` at any scalar level; applies the degenerate rule at the
/// plain value of `x`.
pub fn p_tension_trace_generic<T: Real>(map: &SmoothMap, p: &ExponentField, x: &[T]) -> Result<Vec<T>> {
    if degenerate_zero(map, p, &values(x), 2.0)? {
        return Ok(vec![T::zero(); map.target().coords()]);
    }
    rescaled_trace(map, Some(p), x)
}

/// `τ(φ) = trace_g ∇dφ`.
pub fn tension_at(map: &SmoothMap, x: &[f64]) -> Result<Vec<f64>> {
    map.check_point(x)?;
    rescaled_trace(map, None, x)
}

/// `τ_p(φ) = trace_g ∇(|dφ|^{p−2} dφ)`, differentiating the rescaled
/// differential directly.
pub fn p_tension_trace_at(map: &SmoothMap, p: &ExponentField, x: &[f64]) -> Result<Vec<f64>> {
    map.check_point(x)?;
    p_tension_trace_generic(map, p, x)
}

/// `grad^M |dφ|^{p(x)−2}`, including the `ln|dφ| · grad p` term.
pub fn grad_hs_power_at(map: &SmoothMap, p: &ExponentField, x: &[f64]) -> Result<Vec<f64>> {
    map.check_point(x)?;
    let m = x.len();
    if degenerate_zero(map, p, x, 2.0)? {
        return Ok(vec![0.0; m]);
    }
    let j = jet(
        |z: &[Dual<f64>]| {
            let l = local(map, z)?;
            Ok(vec![weight(p, z, l.u2, 2.0)])
        },
        x,
    )?;
    let frame = map.domain().frame(x)?;
    Ok((0..m)
        .map(|i| (0..m).map(|k| frame.ginv[i][k] * j.partials[k][0]).sum())
        .collect())
}

/// `τ_p(φ) = |dφ|^{p−2} τ(φ) + dφ(grad^M |dφ|^{p−2})`.
pub fn p_tension_expanded_at(map: &SmoothMap, p: &ExponentField, x: &[f64]) -> Result<Vec<f64>> {
    map.check_point(x)?;
    let k = map.target().coords();
    if degenerate_zero(map, p, x, 2.0)? {
        return Ok(vec![0.0; k]);
    }
    let l = local(map, x)?;
    let w = weight(p, x, l.u2, 2.0);
    let tau = tension_at(map, x)?;
    let grad = grad_hs_power_at(map, p, x)?;
    let mut out: Vec<f64> = tau.iter().map(|t| w * t).collect();
    for (gi, col) in grad.iter().zip(&l.cols) {
        for c in 0..k {
            out[c] += gi * col[c];
        }
    }
    Ok(out)
}

/// `τ_{2,p}(φ) = J_p(τ_p(φ))`.
pub fn bitension_at(map: &std::sync::Arc<SmoothMap>, p: &ExponentField, x: &[f64]) -> Result<Vec<f64>> {
    map.check_point(x)?;
    if map.is_structurally_constant() {
        exponent_at(p, x)?;
        return Ok(vec![0.0; map.target().coords()]);
    }
    let section = Section::p_tension(map.clone(), p.clone());
    jacobi::jacobi_apply(map, p, &section, x)
}

/// Trace-form `τ_p` from central finite differences only: the map's
/// derivatives and the derivative of the rescaled differential are both
/// differenced, with no dual numbers or analytic providers involved.
pub fn p_tension_fd(map: &SmoothMap, p: &ExponentField, x: &[f64]) -> Result<Vec<f64>> {
    map.check_point(x)?;
    let k = map.target().coords();
    let m = x.len();
    if degenerate_zero(map, p, x, 2.0)? {
        return Ok(vec![0.0; k]);
    }
    let rescaled = |z: &[f64]| -> Vec<f64> {
        let y = map.eval(z);
        let cols = fd::jacobian(|q| map.eval(q), z);
        let frame = match map.domain().frame(z) {
            Ok(f) => f,
            Err(_) => return vec![f64::NAN; m * k],
        };
        let u2 = hs_norm_sq_generic(map, &frame.ginv, &y, &cols);
        let w = weight(p, z, u2, 2.0);
        cols.iter().flat_map(|c| c.iter().map(move |a| a * w)).collect()
    };
    let s = unflatten(&rescaled(x), m, k);
    let ds: Vec<Vec<Vec<f64>>> = fd::jacobian_with(rescaled, x, fd::SECOND_STEP)
        .iter()
        .map(|row| unflatten(row, m, k))
        .collect();
    let y = map.eval(x);
    let cols = fd::jacobian(|q| map.eval(q), x);
    let frame = map.domain().frame(x)?;
    let l = Local {
        y,
        cols,
        ginv: frame.ginv,
        gamma: frame.gamma,
        u2: 0.0,
    };
    Ok(trace_covariant(map, &l, &s, &ds))
}

#[derive(Clone, Debug, Serialize)]
pub struct TensionReport {
    pub point: Vec<f64>,
    pub tau: Vec<f64>,
    pub tau_p_trace: Vec<f64>,
    pub tau_p_expanded: Vec<f64>,
    /// `|trace − expanded|` in `h`.
    pub residual: f64,
    pub degenerate: bool,
}

pub fn tension_report(map: &SmoothMap, p: &ExponentField, x: &[f64]) -> Result<TensionReport> {
    map.check_point(x)?;
    let tau = tension_at(map, x)?;
    let trace = p_tension_trace_at(map, p, x)?;
    let expanded = p_tension_expanded_at(map, p, x)?;
    let l = local(map, x)?;
    let d: Vec<f64> = trace.iter().zip(&expanded).map(|(a, b)| a - b).collect();
    let residual = map.target().frame(&l.y).inner(&d, &d).sqrt();
    Ok(TensionReport {
        point: x.to_vec(),
        tau,
        tau_p_trace: trace,
        tau_p_expanded: expanded,
        residual,
        degenerate: l.u2.max(0.0).sqrt() < EPS_RANK,
    })
}

/// Norm of a target vector at the map value, in `h`.
pub fn target_norm(map: &SmoothMap, x: &[f64], v: &[f64]) -> f64 {
    let y = map.eval(x);
    map.target().frame(&y).inner(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dot, MetricChart, TargetSpace};
    use crate::maps::{catalog_build, CatalogParams, MapKind, Region};
    use crate::rng;

    fn params(n: usize, c: f64) -> CatalogParams {
        CatalogParams {
            n: Some(n),
            c: Some(c),
            ..Default::default()
        }
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    #[test]
    fn affine_map_has_zero_tension() {
        let e = catalog_build(
            "affine",
            &CatalogParams {
                matrix: Some(vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![0.0, 3.0]]),
                offset: Some(vec![1.0, 0.0, 0.0]),
                p: Some(3.0),
                ..Default::default()
            },
        )
        .unwrap();
        let x = [0.3, -0.2];
        assert!(max_abs(&tension_at(&e.map, &x).unwrap()) < 1e-14);
        assert!(max_abs(&p_tension_trace_at(&e.map, &e.exponent, &x).unwrap()) < 1e-13);
        assert!(max_abs(&bitension_at(&e.map, &e.exponent, &x).unwrap()) < 1e-12);
    }

    #[test]
    fn radial_map_is_harmonic() {
        let e = catalog_build("radial", &params(3, 0.0)).unwrap();
        let x = [0.4, -1.1, 0.7];
        assert!(max_abs(&tension_at(&e.map, &x).unwrap()) < 1e-12);
        assert!(max_abs(&p_tension_trace_at(&e.map, &e.exponent, &[0.0, 0.0, 3.0]).unwrap()) < 1e-12);
    }

    #[test]
    fn cylinder_tension_values() {
        let e = catalog_build("cylinder", &CatalogParams::default()).unwrap();
        let x = [2.5f64, 1.0, 0.3];
        let rho = x[0].hypot(x[1]);
        let tau = tension_at(&e.map, &x).unwrap();
        assert!((tau[0] - 1.0 / rho).abs() < 1e-13 && tau[1].abs() < 1e-13);
        let g = grad_hs_power_at(&e.map, &e.exponent, &x).unwrap();
        let expect = [x[0] / (2.0 * rho), x[1] / (2.0 * rho), 0.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        for f in [p_tension_trace_at, p_tension_expanded_at] {
            let t = f(&e.map, &e.exponent, &x).unwrap();
            assert!((t[0] - 1.0).abs() < 1e-12 && t[1].abs() < 1e-12);
        }
    }

    #[test]
    fn inversion_grad_power_closed_form() {
        let e = catalog_build("inversion", &params(3, 1.0)).unwrap();
        let x = [2.0, 0.0, 0.0];
        let g = grad_hs_power_at(&e.map, &e.exponent, &x).unwrap();
        let r2 = dot(&x, &x);
        let u2 = 3.0 / (r2 * r2);
        let p = exponent_at(&e.exponent, &x).unwrap();
        let w = u2.powf((p - 2.0) / 2.0);
        let oracle = fd::gradient(
            |z| {
                let r2 = dot(z, z);
                (3.0 / (r2 * r2)).powf((e.exponent.eval(z) - 2.0) / 2.0)
            },
            &x,
        );
        for i in 0..3 {
            let closed = -2.0 * w * x[i] / r2;
            assert!((g[i] - closed).abs() < 1e-12, "{g:?}");
            assert!((g[i] - oracle[i]).abs() < 1e-8);
        }
        assert!(max_abs(&p_tension_trace_at(&e.map, &e.exponent, &x).unwrap()) < 1e-13);
    }

    #[test]
    fn fd_only_tension_agrees_with_dual_backend() {
        let e = catalog_build("cylinder", &CatalogParams::default()).unwrap();
        let x = [2.5, -1.0, 0.3];
        let a = p_tension_fd(&e.map, &e.exponent, &x).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-5 && a[1].abs() < 1e-5, "{a:?}");
    }

    #[test]
    fn p_equal_two_reduces_to_tension() {
        let e = catalog_build("radial", &params(3, 0.0)).unwrap();
        let two = ExponentField::constant(2.0);
        let map = SmoothMap::new(
            "inv",
            MetricChart::euclidean(3),
            TargetSpace::euclidean(3),
            MapKind::Inversion,
            Region::NormSqAbove { bound: 0.5 },
        )
        .unwrap();
        for m in [&*e.map, &map] {
            let x = [0.9, 0.3, -0.6];
            let a = tension_at(m, &x).unwrap();
            let b = p_tension_trace_at(m, &two, &x).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_maps_are_annihilated() {
        let e = catalog_build(
            "constant",
            &CatalogParams {
                n: Some(2),
                value: Some(vec![0.0, 0.6, 0.8]),
                normalized: true,
                p: Some(3.0),
                ..Default::default()
            },
        )
        .unwrap();
        let x = [0.1, 0.2];
        assert_eq!(tension_at(&e.map, &x).unwrap(), vec![0.0; 3]);
        assert_eq!(p_tension_trace_at(&e.map, &e.exponent, &x).unwrap(), vec![0.0; 3]);
        assert_eq!(bitension_at(&e.map, &e.exponent, &x).unwrap(), vec![0.0; 3]);
        let two = ExponentField::constant(2.0);
        assert_eq!(p_tension_trace_at(&e.map, &two, &x).unwrap(), vec![0.0; 3]);
        let var = ExponentField::Affine {
            offset: 2.0,
            slope: vec![1.0, 0.0],
        };
        assert!(matches!(
            p_tension_trace_at(&e.map, &var, &[0.0, 0.0]),
            Err(Error::DegeneratePoint { .. })
        ));
    }

    #[test]
    fn sphere_tension_is_tangent() {
        let e = catalog_build(
            "affine",
            &CatalogParams {
                matrix: Some(vec![vec![1.0, 0.3], vec![-0.2, 1.0], vec![0.5, 0.5]]),
                offset: Some(vec![0.0, 0.0, 1.0]),
                normalized: true,
                ..Default::default()
            },
        )
        .unwrap();
        let p = ExponentField::Affine {
            offset: 2.5,
            slope: vec![0.2, 0.1],
        };
        let mut rng = rng::seeded(1);
        for _ in 0..20 {
            let x = e.sample(&mut rng).unwrap();
            let y = e.map.eval(&x);
            let t = p_tension_trace_at(&e.map, &p, &x).unwrap();
            let s = p_tension_expanded_at(&e.map, &p, &x).unwrap();
            assert!(dot(&t, &y).abs() < 1e-12);
            let d: Vec<f64> = t.iter().zip(&s).map(|(a, b)| a - b).collect();
            assert!(max_abs(&d) <= 1e-9 * (1.0 + max_abs(&t)));
        }
    }

    #[test]
    fn cylinder_bitension_vanishes() {
        let e = catalog_build("cylinder", &CatalogParams::default()).unwrap();
        let b = bitension_at(&e.map, &e.exponent, &[2.5, 1.0, 0.3]).unwrap();
        assert!(max_abs(&b) < 1e-9, "{b:?}");
    }
}
