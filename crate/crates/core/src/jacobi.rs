//! Pullback connection, the generalized Jacobi operator, the index form and
//! the sphere trace identity.

use std::sync::Arc;

use serde::Serialize;

use crate::dual::{jet, Dual};
use crate::error::{Error, Result};
use crate::geometry::Mat;
use crate::maps::{exponent_at, ExponentField, SmoothMap};
use crate::quadrature::{integrate_vec, Domain};
use crate::section::{Section, SectionKind};
use crate::tension::{local, p_tension_trace_at, trace_covariant, unflatten, weight, Local, EPS_P, EPS_RANK};

/// Tolerance on `|τ_p|` for the sphere trace identity's harmonicity guard.
pub const HARMONIC_GUARD: f64 = 1e-5;

/// `∇^φ_{∂_i} v` for every `i` at `x`, plus the section value.
fn covariant_all(map: &SmoothMap, v: &Section, x: &[f64]) -> Result<(Vec<f64>, Mat<f64>, Local<f64>)> {
    let (val, dv) = v.jet(x)?;
    let l = local(map, x)?;
    let frame = map.target().frame(&l.y);
    let nabla = (0..x.len())
        .map(|i| frame.covariant(&l.cols[i], &val, &dv[i]))
        .collect();
    Ok((val, nabla, l))
}

pub fn pullback_derivative(v: &Section, x: &[f64], i: usize) -> Result<Vec<f64>> {
    v.base.check_point(x)?;
    if i >= x.len() {
        return Err(Error::Dimension(format!("direction {i} out of range")));
    }
    let (_, nabla, _) = covariant_all(&v.base, v, x)?;
    Ok(nabla[i].clone())
}

/// `⟨∇^φ v, dφ⟩ = g^{ij} h(∇^φ_{∂_i} v, dφ(∂_j))`.
pub fn section_pairing(v: &Section, x: &[f64]) -> Result<f64> {
    v.base.check_point(x)?;
    let (_, nabla, l) = covariant_all(&v.base, v, x)?;
    let frame = v.base.target().frame(&l.y);
    let m = x.len();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += l.ginv[i][j] * frame.inner(&nabla[i], &l.cols[j]);
        }
    }
    Ok(s)
}

/// The three summands of `J_p(v)`.
#[derive(Clone, Debug, Serialize)]
pub struct JacobiTerms {
    /// `−u^{p−2} trace_g R(v, dφ)dφ`.
    pub curvature: Vec<f64>,
    /// `−trace_g ∇(u^{p−2} ∇^φ v)`.
    pub rough: Vec<f64>,
    /// `−trace_g ∇((p−2) u^{p−4} ⟨∇^φ v, dφ⟩ dφ)`.
    pub coupling: Vec<f64>,
}

impl JacobiTerms {
    pub fn total(&self) -> Vec<f64> {
        self.curvature
            .iter()
            .zip(&self.rough)
            .zip(&self.coupling)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }

    fn zero(k: usize) -> Self {
        Self {
            curvature: vec![0.0; k],
            rough: vec![0.0; k],
            coupling: vec![0.0; k],
        }
    }
}

/// Degenerate-point rule for the second-order quantities. `Ok(true)` means
/// the quantity is zero at `x`.
fn jacobi_degenerate(map: &SmoothMap, p: &ExponentField, v: &Section, x: &[f64], threshold: f64) -> Result<bool> {
    let pv = exponent_at(p, x)?;
    let l = local(map, x)?;
    let u = l.u2.max(0.0).sqrt();
    if u > EPS_RANK || p.as_constant() == Some(2.0) {
        return Ok(false);
    }
    if pv > threshold + EPS_P || v.is_structurally_zero() {
        return Ok(true);
    }
    Err(Error::DegeneratePoint {
        point: x.to_vec(),
        norm: u,
        exponent: pv,
    })
}

fn coupling_coefficient<T: crate::dual::Real>(p: &ExponentField, x: &[T], u2: T) -> T {
    if p.as_constant() == Some(2.0) {
        return T::zero();
    }
    (p.eval(x) - 2.0) * weight(p, x, u2, 4.0)
}

pub fn jacobi_terms(map: &SmoothMap, p: &ExponentField, v: &Section, x: &[f64]) -> Result<JacobiTerms> {
    map.check_point(x)?;
    let k = map.target().coords();
    let m = x.len();
    if v.is_structurally_zero() {
        exponent_at(p, x)?;
        return Ok(JacobiTerms::zero(k));
    }
    if jacobi_degenerate(map, p, v, x, 4.0)? {
        return Ok(JacobiTerms::zero(k));
    }
    let j = jet(
        |z: &[Dual<f64>]| {
            let (val, dv) = v.jet(z)?;
            let l = local(map, z)?;
            let frame = map.target().frame(&l.y);
            let nabla: Vec<Vec<Dual<f64>>> = (0..m)
                .map(|i| frame.covariant(&l.cols[i], &val, &dv[i]))
                .collect();
            let w = weight(p, z, l.u2, 2.0);
            let mut c = Dual::constant(0.0);
            for i in 0..m {
                for jj in 0..m {
                    c += l.ginv[i][jj] * frame.inner(&nabla[i], &l.cols[jj]);
                }
            }
            let coef = coupling_coefficient(p, z, l.u2) * c;
            let mut out = Vec::with_capacity(2 * m * k);
            for n in &nabla {
                out.extend(n.iter().map(|&a| a * w));
            }
            for col in &l.cols {
                out.extend(col.iter().map(|&a| a * coef));
            }
            Ok(out)
        },
        x,
    )?;
    let a = unflatten(&j.value[..m * k], m, k);
    let b = unflatten(&j.value[m * k..], m, k);
    let da: Vec<Vec<Vec<f64>>> = j.partials.iter().map(|r| unflatten(&r[..m * k], m, k)).collect();
    let db: Vec<Vec<Vec<f64>>> = j.partials.iter().map(|r| unflatten(&r[m * k..], m, k)).collect();
    let l = local(map, x)?;
    let val = v.eval(x)?;
    let frame = map.target().frame(&l.y);
    let w = weight(p, x, l.u2, 2.0);
    let mut curvature = vec![0.0; k];
    for i in 0..m {
        for jj in 0..m {
            let r = frame.curvature(&val, &l.cols[i], &l.cols[jj]);
            for c in 0..k {
                curvature[c] -= w * l.ginv[i][jj] * r[c];
            }
        }
    }
    let neg = |t: Vec<f64>| t.into_iter().map(|a| -a).collect::<Vec<f64>>();
    Ok(JacobiTerms {
        curvature,
        rough: neg(trace_covariant(map, &l, &a, &da)),
        coupling: neg(trace_covariant(map, &l, &b, &db)),
    })
}

/// `J_p(v)` at `x`.
pub fn jacobi_apply(map: &SmoothMap, p: &ExponentField, v: &Section, x: &[f64]) -> Result<Vec<f64>> {
    Ok(jacobi_terms(map, p, v, x)?.total())
}

/// The three pointwise summands of the index density.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct IndexTerms {
    /// `−u^{p−2} Σ g^{ij} h(v, R(v, dφ_i)dφ_j)`.
    pub curvature: f64,
    /// `u^{p−2} |∇^φ v|²`.
    pub gradient: f64,
    /// `(p−2) u^{p−4} ⟨∇^φ v, dφ⟩²`.
    pub coupling: f64,
}

impl IndexTerms {
    pub fn total(&self) -> f64 {
        self.curvature + self.gradient + self.coupling
    }
}

pub fn index_terms_at(map: &SmoothMap, p: &ExponentField, v: &Section, x: &[f64]) -> Result<IndexTerms> {
    map.check_point(x)?;
    if v.is_structurally_zero() {
        exponent_at(p, x)?;
        return Ok(IndexTerms::default());
    }
    if jacobi_degenerate(map, p, v, x, 2.0)? {
        return Ok(IndexTerms::default());
    }
    let (val, nabla, l) = covariant_all(map, v, x)?;
    let frame = map.target().frame(&l.y);
    let m = x.len();
    let w = weight(p, x, l.u2, 2.0);
    let (mut curv, mut grad, mut c) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let g = l.ginv[i][j];
            curv -= g * frame.inner(&val, &frame.curvature(&val, &l.cols[i], &l.cols[j]));
            grad += g * frame.inner(&nabla[i], &nabla[j]);
            c += g * frame.inner(&nabla[i], &l.cols[j]);
        }
    }
    Ok(IndexTerms {
        curvature: w * curv,
        gradient: w * grad,
        coupling: coupling_coefficient(p, x, l.u2) * c * c,
    })
}

pub fn index_integrand_at(map: &SmoothMap, p: &ExponentField, v: &Section, x: &[f64]) -> Result<f64> {
    Ok(index_terms_at(map, p, v, x)?.total())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IndexResult {
    pub value: f64,
    pub curvature: f64,
    pub gradient: f64,
    pub coupling: f64,
}

/// Whether `v` vanishes on a neighbourhood of `x` by construction.
fn vanishes_near(v: &Section, x: &[f64]) -> bool {
    match &v.kind {
        SectionKind::Direction(d) => d.is_zero() || d.bump.as_ref().is_some_and(|b| b.eval(x) == 0.0),
        _ => false,
    }
}

/// `I(v, v)` on `domain`, summand by summand.
pub fn index_form(map: &SmoothMap, p: &ExponentField, v: &Section, domain: &Domain) -> Result<IndexResult> {
    let r = integrate_vec(
        |x| {
            if vanishes_near(v, x) {
                return Ok(vec![0.0; 3]);
            }
            let t = index_terms_at(map, p, v, x)?;
            Ok(vec![t.curvature, t.gradient, t.coupling])
        },
        3,
        domain,
        map.domain(),
    )?;
    Ok(IndexResult {
        value: r[0] + r[1] + r[2],
        curvature: r[0],
        gradient: r[1],
        coupling: r[2],
    })
}

/// `∫_D h(w, J_p v) v_g`.
pub fn pairing_integral(map: &SmoothMap, p: &ExponentField, v: &Section, w: &Section, domain: &Domain) -> Result<f64> {
    Ok(integrate_vec(
        |x| {
            if vanishes_near(v, x) || vanishes_near(w, x) {
                return Ok(vec![0.0]);
            }
            let jv = jacobi_apply(map, p, v, x)?;
            let wx = w.eval(x)?;
            let y = map.eval(x);
            Ok(vec![map.target().frame(&y).inner(&wx, &jv)])
        },
        1,
        domain,
        map.domain(),
    )?[0])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SphereIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `Σ_α h(J_p(v_α∘φ), v_α∘φ)` against `(p − n)|dφ|^p` for a p(·)-harmonic
/// sphere-valued map, over the standard ambient basis `α`.
pub fn sphere_trace_identity(map: &Arc<SmoothMap>, p: &ExponentField, x: &[f64]) -> Result<SphereIdentity> {
    if !map.target().is_sphere() {
        return Err(Error::InvalidParams("the trace identity needs a sphere target".into()));
    }
    map.check_point(x)?;
    let pv = exponent_at(p, x)?;
    if map.is_structurally_constant() {
        return Ok(SphereIdentity {
            lhs: 0.0,
            rhs: 0.0,
            residual: 0.0,
        });
    }
    let tau = p_tension_trace_at(map, p, x)?;
    let y = map.eval(x);
    let frame = map.target().frame(&y);
    let t = frame.inner(&tau, &tau).sqrt();
    if t > HARMONIC_GUARD {
        return Err(Error::NotPHarmonic {
            residual: t,
            tolerance: HARMONIC_GUARD,
        });
    }
    let k = map.target().coords();
    let mut lhs = 0.0;
    for a in 0..k {
        let mut alpha = vec![0.0; k];
        alpha[a] = 1.0;
        let v = Section::conformal(map.clone(), alpha)?;
        let jv = jacobi_apply(map, p, &v, x)?;
        lhs += frame.inner(&jv, &v.eval(x)?);
    }
    let l = local(map.as_ref(), x)?;
    let n = map.target().dim() as f64;
    let rhs = (pv - n) * l.u2.max(0.0).powf(0.5 * pv);
    Ok(SphereIdentity {
        lhs,
        rhs,
        residual: lhs - rhs,
    })
}
