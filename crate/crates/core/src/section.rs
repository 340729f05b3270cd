//! Vector fields along maps: the variation directions `v, w` and the
//! arguments of the Jacobi operator.
//!
//! A [`DirectionField`] needs only the base point and the map value there,
//! so deformed maps can carry one without referring back to differentiated
//! quantities. A [`Section`] adds the fields that are built from derivatives
//! of the map itself (its differential, its p(·)-tension).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dual::{consts, jet, Dual, Real};
use crate::error::{Error, Result};
use crate::geometry::{conformal_field_generic, dot, Mat};
use crate::maps::{ExponentField, SmoothMap};
use crate::quadrature::Domain;
use crate::tension;

/// Exponent `K` of the one-dimensional profile `(1 − t²)^K`.
pub const BUMP_POWER: i32 = 8;

/// Product of one-dimensional bumps `ψ(t) = (1 − t²)^K`, `t = (x_i − c_i)/r_i`,
/// supported in the open box `|x_i − c_i| < r_i` and `C^{K−1}` across its
/// edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if center.len() != radius.len() || radius.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::InvalidParams(
                "bump needs matching center/radius with positive radii".into(),
            ));
        }
        Ok(Self { center, radius })
    }

    /// The largest bump whose support keeps a collar of `collar_cells` grid
    /// cells inside a box domain.
    pub fn inside(domain: &Domain, collar_cells: f64) -> Result<Self> {
        let (lower, upper, cells) = domain.box_cells().ok_or_else(|| {
            Error::InvalidParams("a collar bump needs a box domain".into())
        })?;
        let center: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
        let radius: Vec<f64> = lower
            .iter()
            .zip(&upper)
            .zip(&cells)
            .map(|((a, b), h)| 0.5 * (b - a) - collar_cells * h)
            .collect();
        Self::new(center, radius)
    }

    pub fn eval<T: Real>(&self, x: &[T]) -> T {
        let mut out = T::one();
        for ((xi, c), r) in x.iter().zip(&self.center).zip(&self.radius) {
            let t = (*xi - *c) / *r;
            let q = t * t;
            if q.value() >= 1.0 {
                return T::zero();
            }
            out *= (T::one() - q).powi(BUMP_POWER);
        }
        out
    }

    /// Whether the closed support lies inside `[lower + collar, upper − collar]`.
    pub fn within(&self, lower: &[f64], upper: &[f64], collar: &[f64]) -> bool {
        self.center
            .iter()
            .zip(&self.radius)
            .enumerate()
            .all(|(i, (c, r))| c - r >= lower[i] + collar[i] - 1e-12 && c + r <= upper[i] - collar[i] + 1e-12)
    }
}

/// Raw target-coordinate vector fields of the domain point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RawField {
    Zero { coords: usize },
    Constant { value: Vec<f64> },
    /// `A x + b`.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// Component `c` is `amplitude_c · sin(frequency_c · x + phase_c)`.
    Trig {
        amplitude: Vec<f64>,
        frequency: Vec<Vec<f64>>,
        phase: Vec<f64>,
    },
}

impl RawField {
    pub fn coords(&self) -> usize {
        match self {
            RawField::Zero { coords } => *coords,
            RawField::Constant { value } => value.len(),
            RawField::Affine { offset, .. } => offset.len(),
            RawField::Trig { amplitude, .. } => amplitude.len(),
        }
    }

    pub fn eval<T: Real>(&self, x: &[T]) -> Vec<T> {
        match self {
            RawField::Zero { coords } => vec![T::zero(); *coords],
            RawField::Constant { value } => consts(value),
            RawField::Affine { matrix, offset } => matrix
                .iter()
                .zip(offset)
                .map(|(row, b)| {
                    let mut s = T::cst(*b);
                    for (a, xi) in row.iter().zip(x) {
                        s += *xi * *a;
                    }
                    s
                })
                .collect(),
            RawField::Trig {
                amplitude,
                frequency,
                phase,
            } => amplitude
                .iter()
                .zip(frequency)
                .zip(phase)
                .map(|((a, k), ph)| {
                    let mut arg = T::cst(*ph);
                    for (ki, xi) in k.iter().zip(x) {
                        arg += *xi * *ki;
                    }
                    arg.sin() * *a
                })
                .collect(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            RawField::Zero { .. } => true,
            RawField::Constant { value } => value.iter().all(|&v| v == 0.0),
            RawField::Affine { matrix, offset } => {
                offset.iter().all(|&v| v == 0.0) && matrix.iter().flatten().all(|&v| v == 0.0)
            }
            RawField::Trig { amplitude, .. } => amplitude.iter().all(|&v| v == 0.0),
        }
    }
}

/// `bump(x) · P_{φ(x)} raw(x)`, where `P` projects onto the tangent space of
/// the sphere (identity for other targets).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionField {
    pub raw: RawField,
    #[serde(default)]
    pub bump: Option<Bump>,
}

impl DirectionField {
    pub fn new(raw: RawField, bump: Option<Bump>) -> Self {
        Self { raw, bump }
    }

    pub fn zero(coords: usize) -> Self {
        Self::new(RawField::Zero { coords }, None)
    }

    /// Value at `x`, given the map value `y = φ(x)`.
    pub fn eval<T: Real>(&self, x: &[T], y: &[T], sphere: bool) -> Vec<T> {
        let raw = self.raw.eval(x);
        let mut v = if sphere {
            conformal_field_generic(&raw, y)
        } else {
            raw
        };
        if let Some(b) = &self.bump {
            let s = b.eval(x);
            for c in v.iter_mut() {
                *c *= s;
            }
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        self.raw.is_zero()
    }
}

#[derive(Clone, Debug)]
pub enum SectionKind {
    Direction(DirectionField),
    /// `dφ(∂_j)`.
    Differential(usize),
    /// `τ_p(φ)`, the trace form.
    PTension(ExponentField),
}

/// A vector field `v ∈ Γ(φ^{-1}TN)` along a base map.
#[derive(Clone, Debug)]
pub struct Section {
    pub base: Arc<SmoothMap>,
    pub kind: SectionKind,
}

impl Section {
    pub fn direction(base: Arc<SmoothMap>, field: DirectionField) -> Result<Self> {
        if field.raw.coords() != base.target().coords() {
            return Err(Error::Dimension(format!(
                "section has {} components, target needs {}",
                field.raw.coords(),
                base.target().coords()
            )));
        }
        Ok(Self {
            base,
            kind: SectionKind::Direction(field),
        })
    }

    pub fn zero(base: Arc<SmoothMap>) -> Self {
        let k = base.target().coords();
        Self {
            base,
            kind: SectionKind::Direction(DirectionField::zero(k)),
        }
    }

    /// Conformal gradient field `v_α ∘ φ` of a sphere-valued map.
    pub fn conformal(base: Arc<SmoothMap>, alpha: Vec<f64>) -> Result<Self> {
        if !base.target().is_sphere() {
            return Err(Error::InvalidParams(
                "conformal fields are defined for sphere targets".into(),
            ));
        }
        Self::direction(base, DirectionField::new(RawField::Constant { value: alpha }, None))
    }

    pub fn p_tension(base: Arc<SmoothMap>, p: ExponentField) -> Self {
        Self {
            base,
            kind: SectionKind::PTension(p),
        }
    }

    pub fn differential(base: Arc<SmoothMap>, j: usize) -> Self {
        Self {
            base,
            kind: SectionKind::Differential(j),
        }
    }

    pub fn is_structurally_zero(&self) -> bool {
        match &self.kind {
            SectionKind::Direction(d) => d.is_zero(),
            _ => false,
        }
    }

    pub fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.kind {
            SectionKind::Direction(d) => {
                let y = self.base.eval(x);
                Ok(d.eval(x, &y, self.base.target().is_sphere()))
            }
            SectionKind::Differential(j) => {
                let (_, cols) = self.base.jacobian_columns(x)?;
                Ok(cols[*j].clone())
            }
            SectionKind::PTension(p) => tension::p_tension_trace_generic(&self.base, p, x),
        }
    }

    /// Value and raw partials `∂_i v` (not covariant).
    pub fn jet<T: Real>(&self, x: &[T]) -> Result<(Vec<T>, Mat<T>)> {
        let j = jet(|y: &[Dual<T>]| self.eval(y), x)?;
        Ok((j.value, j.partials))
    }

    pub fn eval_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.base.check_point(x)?;
        self.eval(x)
    }
}

/// Tangency defect `|⟨v(x), φ(x)⟩|` (zero for non-sphere targets).
pub fn tangency_defect(section: &Section, x: &[f64]) -> Result<f64> {
    if !section.base.target().is_sphere() {
        return Ok(0.0);
    }
    let v = section.eval_at(x)?;
    Ok(dot(&v, &section.base.eval(x)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_supported_in_its_box_and_peaks_at_center() {
        let b = Bump::new(vec![0.0, 1.0], vec![1.0, 0.5]).unwrap();
        assert_eq!(b.eval(&[0.0, 1.0]), 1.0);
        assert_eq!(b.eval(&[1.0, 1.0]), 0.0);
        assert_eq!(b.eval(&[0.2, 1.6]), 0.0);
        assert!(b.eval(&[0.99, 1.0]) < 1e-13);
    }

    #[test]
    fn bump_derivatives_vanish_at_support_edge() {
        let b = Bump::new(vec![0.0], vec![1.0]).unwrap();
        let d = jet(
            |y: &[Dual<Dual<f64>>]| Ok(vec![b.eval(y)]),
            &[Dual::new(1.0, 1.0)],
        )
        .unwrap();
        assert_eq!(d.partials[0][0].re, 0.0);
        assert_eq!(d.partials[0][0].eps, 0.0);
        let near = jet(|y: &[Dual<f64>]| Ok(vec![b.eval(y)]), &[0.999]).unwrap();
        assert!(near.partials[0][0].abs() < 1e-16);
    }

    #[test]
    fn sphere_directions_are_tangent() {
        let f = DirectionField::new(
            RawField::Constant {
                value: vec![1.0, 2.0, 3.0],
            },
            None,
        );
        let y = [0.0, 0.6, 0.8];
        let v = f.eval(&[0.0, 0.0], &y, true);
        assert!(dot(&v, &y).abs() < 1e-15);
    }
}
