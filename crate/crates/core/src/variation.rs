//! Deformation families and finite-difference checks of the variation
//! formulas.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jacobi::pairing_integral;
use crate::maps::{DeformationRule, ExponentField, MapKind, SmoothMap};
use crate::quadrature::{bienergy_p, energy_p, integrate, Domain};
use crate::section::{DirectionField, Section};
use crate::tension::{bitension_at, p_tension_trace_at};

pub const DEFAULT_DELTA_FIRST: f64 = 1e-3;
pub const DEFAULT_DELTA_SECOND: f64 = 3e-3;
pub const DEFAULT_T_MAX: f64 = 1e-1;
/// Sup of `|τ_p|` over the domain below which a map counts as p(·)-harmonic.
pub const HARMONIC_TOLERANCE: f64 = 1e-5;

/// `φ_{t,s}` generated by directions `v` and (optionally) `w`.
#[derive(Clone, Debug)]
pub struct DeformationFamily {
    pub base: Arc<SmoothMap>,
    pub v: DirectionField,
    pub w: Option<DirectionField>,
    pub rule: DeformationRule,
    pub t_max: f64,
}

impl DeformationFamily {
    pub fn new(base: Arc<SmoothMap>, v: DirectionField, w: Option<DirectionField>, rule: DeformationRule) -> Result<Self> {
        let k = base.target().coords();
        for f in std::iter::once(&v).chain(w.as_ref()) {
            if f.raw.coords() != k {
                return Err(Error::Dimension(format!(
                    "direction has {} components, target needs {k}",
                    f.raw.coords()
                )));
            }
        }
        Ok(Self {
            base,
            v,
            w,
            rule,
            t_max: DEFAULT_T_MAX,
        })
    }
}

/// The member `φ_{t,s}`; `deform(f, 0, 0)` is the base map itself.
pub fn deform(family: &DeformationFamily, t: f64, s: f64) -> Result<Arc<SmoothMap>> {
    if t.abs() > family.t_max || s.abs() > family.t_max {
        return Err(Error::InvalidParams(format!(
            "deformation parameters must satisfy |t|, |s| ≤ {}",
            family.t_max
        )));
    }
    if t == 0.0 && s == 0.0 {
        return Ok(family.base.clone());
    }
    let base = &family.base;
    let map = SmoothMap::new(
        format!("{}+deformation", base.name()),
        base.domain().clone(),
        base.target().clone(),
        MapKind::Deformed {
            base: base.clone(),
            v: family.v.clone(),
            w: family.w.clone(),
            t,
            s,
            rule: family.rule,
        },
        base.region().clone(),
    )?;
    Ok(Arc::new(map))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VariationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
}

impl VariationCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            rel_error: (lhs - rhs).abs() / (1.0 + rhs.abs()),
        }
    }
}

fn richardson(d: impl Fn(f64) -> Result<f64>, delta: f64) -> Result<f64> {
    let coarse = d(delta)?;
    let fine = d(0.5 * delta)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Richardson-extrapolated central difference of `t ↦ functional(φ_t)`.
fn first_derivative(
    family: &DeformationFamily,
    delta: f64,
    functional: impl Fn(&SmoothMap) -> Result<f64> + Sync,
) -> Result<f64> {
    richardson(
        |h| {
            let (a, b) = rayon::join(
                || functional(&*deform(family, h, 0.0)?),
                || functional(&*deform(family, -h, 0.0)?),
            );
            Ok((a? - b?) / (2.0 * h))
        },
        delta,
    )
}

/// `d/dt E_p(φ_t)|₀` against `−∫ h(v, τ_p(φ)) v_g`.
pub fn first_variation_check(
    map: &Arc<SmoothMap>,
    p: &ExponentField,
    v: &DirectionField,
    domain: &Domain,
    rule: DeformationRule,
    delta: f64,
) -> Result<VariationCheck> {
    let family = DeformationFamily::new(map.clone(), v.clone(), None, rule)?;
    let lhs = first_derivative(&family, delta, |m| energy_p(m, p, domain))?;
    let section = Section::direction(map.clone(), v.clone())?;
    let rhs = -integrate(
        |x| {
            let vx = section.eval_at(x)?;
            if vx.iter().all(|&a| a == 0.0) {
                return Ok(0.0);
            }
            let t = p_tension_trace_at(map, p, x)?;
            let y = map.eval(x);
            Ok(map.target().frame(&y).inner(&vx, &t))
        },
        domain,
        map.domain(),
    )?;
    Ok(VariationCheck::new(lhs, rhs))
}

/// Sup of `|τ_p|_h` over the quadrature nodes of `domain`.
pub fn sup_p_tension(map: &SmoothMap, p: &ExponentField, domain: &Domain) -> Result<f64> {
    use rayon::prelude::*;
    let rule = domain.rule()?;
    let norms: Vec<f64> = rule
        .nodes
        .par_iter()
        .map(|x| {
            let t = p_tension_trace_at(map, p, x)?;
            let y = map.eval(x);
            Ok(map.target().frame(&y).inner(&t, &t).sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// `∂²/∂t∂s E_p(φ_{t,s})|₀` against `∫ h(J_p v, w) v_g`, for p(·)-harmonic `φ`.
pub fn second_variation_check(
    map: &Arc<SmoothMap>,
    p: &ExponentField,
    v: &DirectionField,
    w: &DirectionField,
    domain: &Domain,
    rule: DeformationRule,
    delta: f64,
) -> Result<VariationCheck> {
    let sup = sup_p_tension(map, p, domain)?;
    if sup > HARMONIC_TOLERANCE {
        return Err(Error::NotPHarmonic {
            residual: sup,
            tolerance: HARMONIC_TOLERANCE,
        });
    }
    let family = DeformationFamily::new(map.clone(), v.clone(), Some(w.clone()), rule)?;
    let energy = |t: f64, s: f64| energy_p(&*deform(&family, t, s)?, p, domain);
    let lhs = richardson(
        |h| {
            let ((pp, pm), (mp, mm)) = rayon::join(
                || rayon::join(|| energy(h, h), || energy(h, -h)),
                || rayon::join(|| energy(-h, h), || energy(-h, -h)),
            );
            Ok((pp? - pm? - mp? + mm?) / (4.0 * h * h))
        },
        delta,
    )?;
    let sv = Section::direction(map.clone(), v.clone())?;
    let sw = Section::direction(map.clone(), w.clone())?;
    let rhs = pairing_integral(map, p, &sv, &sw, domain)?;
    Ok(VariationCheck::new(lhs, rhs))
}

/// `d/dt E_{2,p}(φ_t)|₀` against `−∫ h(v, τ_{2,p}(φ)) v_g`.
pub fn first_variation_bienergy_check(
    map: &Arc<SmoothMap>,
    p: &ExponentField,
    v: &DirectionField,
    domain: &Domain,
    rule: DeformationRule,
    delta: f64,
) -> Result<VariationCheck> {
    let family = DeformationFamily::new(map.clone(), v.clone(), None, rule)?;
    let lhs = first_derivative(&family, delta, |m| bienergy_p(m, p, domain))?;
    let section = Section::direction(map.clone(), v.clone())?;
    let rhs = -integrate(
        |x| {
            let vx = section.eval_at(x)?;
            if vx.iter().all(|&a| a == 0.0) {
                return Ok(0.0);
            }
            let b = bitension_at(map, p, x)?;
            let y = map.eval(x);
            Ok(map.target().frame(&y).inner(&vx, &b))
        },
        domain,
        map.domain(),
    )?;
    Ok(VariationCheck::new(lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{jet, Dual};
    use crate::maps::{catalog_build, CatalogParams};
    use crate::section::{Bump, RawField};

    #[test]
    fn zero_parameters_give_the_base_map() {
        let e = catalog_build("radial", &CatalogParams { n: Some(3), ..Default::default() }).unwrap();
        let f = DeformationFamily::new(
            e.map.clone(),
            DirectionField::new(RawField::Constant { value: vec![1.0, 0.0, 0.0] }, None),
            None,
            DeformationRule::Geodesic,
        )
        .unwrap();
        assert!(Arc::ptr_eq(&deform(&f, 0.0, 0.0).unwrap(), &e.map));
        assert!(deform(&f, 0.2, 0.0).is_err());
    }

    #[test]
    fn euclidean_translation() {
        let e = catalog_build("identity", &CatalogParams { n: Some(2), ..Default::default() }).unwrap();
        let f = DeformationFamily::new(
            e.map.clone(),
            DirectionField::new(RawField::Constant { value: vec![1.0, -2.0] }, None),
            None,
            DeformationRule::Additive,
        )
        .unwrap();
        let m = deform(&f, 0.01, 0.0).unwrap();
        let y = m.eval(&[0.3, 0.4]);
        assert!((y[0] - 0.31).abs() < 1e-15 && (y[1] - 0.38).abs() < 1e-15);
    }

    #[test]
    fn initial_velocity_is_the_direction() {
        let e = catalog_build("radial", &CatalogParams { n: Some(3), ..Default::default() }).unwrap();
        let v = DirectionField::new(RawField::Constant { value: vec![0.2, 1.0, -0.5] }, None);
        let x = [0.4, 1.0, -0.3];
        let expect = v.eval(&x, &e.map.eval(&x), true);
        for rule in [DeformationRule::Geodesic, DeformationRule::Additive] {
            let f = DeformationFamily::new(e.map.clone(), v.clone(), None, rule).unwrap();
            let fd = crate::fd::derivative_vec(|t| deform(&f, t, 0.0).unwrap().eval(&x), 0.0);
            for (a, b) in fd.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        // exact derivative through the dual backend
        let f = DeformationFamily::new(e.map.clone(), v, None, DeformationRule::Geodesic).unwrap();
        let j = jet(
            |t: &[Dual<f64>]| {
                let y: Vec<Dual<f64>> = crate::dual::lift(&e.map.eval(&x));
                let d: Vec<Dual<f64>> = f.v.eval(&crate::dual::lift(&x), &y, true).into_iter().map(|a| a * t[0]).collect();
                Ok(crate::geometry::sphere_exp_generic(&y, &d, Dual::constant(1.0)))
            },
            &[0.0],
        )
        .unwrap();
        for (a, b) in j.partials[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_direction_gives_zero_variations() {
        let e = catalog_build("identity", &CatalogParams { n: Some(2), p: Some(3.0), ..Default::default() }).unwrap();
        let d = Domain::cube(0.0, 1.0, 2, 16);
        let z = DirectionField::zero(2);
        let c = first_variation_check(&e.map, &e.exponent, &z, &d, DeformationRule::Additive, 1e-3).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    }

    #[test]
    fn first_variation_of_cylinder() {
        let e = catalog_build("cylinder", &CatalogParams::default()).unwrap();
        let d = Domain::Annular {
            r_low: 2.0,
            r_high: 3.0,
            z: Some([0.0, 1.0]),
            resolution: vec![16, 96, 16],
        };
        let bump = Bump::new(vec![2.5, 0.0, 0.5], vec![0.4, 0.5, 0.4]).unwrap();
        let v = DirectionField::new(RawField::Constant { value: vec![1.0, 0.0] }, Some(bump));
        let c = first_variation_check(&e.map, &e.exponent, &v, &d, DeformationRule::Additive, 1e-3).unwrap();
        assert!(c.rel_error < 1e-4, "{c:?}");
    }
}
