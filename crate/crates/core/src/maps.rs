//! Smooth maps in coordinates, exponent fields and the map catalog.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{consts, jet, values, Dual, Real};
use crate::error::{Error, Result};
use crate::geometry::{dot, sphere_exp_generic, Mat, MetricChart, TargetSpace};
use crate::rng;
use crate::section::DirectionField;

/// Agreement required between analytic jacobians and the dual backend.
pub const PROVIDER_TOLERANCE: f64 = 1e-8;

/// Admissible-domain predicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    Everywhere,
    /// `‖x‖² > bound`.
    NormSqAbove { bound: f64 },
    /// `‖x‖ > bound`.
    NormAbove { bound: f64 },
    /// `√(x₁² + x₂²) > bound`.
    CylinderRadiusAbove { bound: f64 },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Everywhere => true,
            Region::NormSqAbove { bound } => dot(x, x) > *bound,
            Region::NormAbove { bound } => dot(x, x).sqrt() > *bound,
            Region::CylinderRadiusAbove { bound } => x[0].hypot(x[1]) > *bound,
        }
    }
}

/// How a deformation combines the base map with its directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeformationRule {
    /// `φ + t v + s w` (renormalised onto the sphere for sphere targets).
    Additive,
    /// `exp_φ(t v + s w)` on the sphere; additive elsewhere.
    Geodesic,
}

#[derive(Clone, Debug)]
pub enum MapKind {
    Identity,
    Constant {
        value: Vec<f64>,
    },
    /// `A x + b` with `A` given as rows.
    Affine {
        matrix: Mat<f64>,
        offset: Vec<f64>,
    },
    /// `b + A x + ½ xᵀQ_c x` per component `c`.
    Quadratic {
        linear: Mat<f64>,
        quadratic: Vec<Mat<f64>>,
        offset: Vec<f64>,
    },
    /// `x / ‖x‖²`.
    Inversion,
    /// `x / ‖x‖`.
    Radial,
    /// `(√(x₁²+x₂²), x₃)`.
    Cylinder,
    /// `F / |F|` for an inner Euclidean-valued map `F`.
    Normalized(Box<MapKind>),
    Deformed {
        base: Arc<SmoothMap>,
        v: DirectionField,
        w: Option<DirectionField>,
        t: f64,
        s: f64,
        rule: DeformationRule,
    },
}

impl MapKind {
    fn eval<T: Real>(&self, x: &[T]) -> Vec<T> {
        match self {
            MapKind::Identity => x.to_vec(),
            MapKind::Constant { value } => consts(value),
            MapKind::Affine { matrix, offset } => affine(matrix, offset, x),
            MapKind::Quadratic {
                linear,
                quadratic,
                offset,
            } => {
                let mut out = affine(linear, offset, x);
                for (c, q) in quadratic.iter().enumerate() {
                    let mut s = T::zero();
                    for (i, row) in q.iter().enumerate() {
                        for (j, a) in row.iter().enumerate() {
                            s += x[i] * x[j] * *a;
                        }
                    }
                    out[c] += s * 0.5;
                }
                out
            }
            MapKind::Inversion => {
                let r2 = dot(x, x);
                x.iter().map(|&a| a / r2).collect()
            }
            MapKind::Radial => {
                let r = dot(x, x).sqrt();
                x.iter().map(|&a| a / r).collect()
            }
            MapKind::Cylinder => vec![(x[0] * x[0] + x[1] * x[1]).sqrt(), x[2]],
            MapKind::Normalized(inner) => {
                let f = inner.eval(x);
                let r = dot(&f, &f).sqrt();
                f.into_iter().map(|a| a / r).collect()
            }
            MapKind::Deformed {
                base,
                v,
                w,
                t,
                s,
                rule,
            } => {
                let y = base.eval(x);
                let sphere = base.target().is_sphere();
                let mut d: Vec<T> = v.eval(x, &y, sphere).into_iter().map(|a| a * *t).collect();
                if let Some(w) = w {
                    for (a, b) in d.iter_mut().zip(w.eval(x, &y, sphere)) {
                        *a += b * *s;
                    }
                }
                if sphere && *rule == DeformationRule::Geodesic {
                    return sphere_exp_generic(&y, &d, T::one());
                }
                let out: Vec<T> = y.iter().zip(&d).map(|(&a, &b)| a + b).collect();
                if sphere {
                    let r = dot(&out, &out).sqrt();
                    out.into_iter().map(|a| a / r).collect()
                } else {
                    out
                }
            }
        }
    }

    /// Analytic columns `∂_i φ`, when this kind has them.
    fn jacobian<T: Real>(&self, x: &[T], y: &[T]) -> Option<Vec<Vec<T>>> {
        let m = x.len();
        let unit = |i: usize, k: usize| -> Vec<T> {
            (0..k).map(|c| T::cst(if c == i { 1.0 } else { 0.0 })).collect()
        };
        match self {
            MapKind::Identity => Some((0..m).map(|i| unit(i, m)).collect()),
            MapKind::Constant { value } => Some(vec![vec![T::zero(); value.len()]; m]),
            MapKind::Affine { matrix, .. } => Some(
                (0..m)
                    .map(|i| matrix.iter().map(|row| T::cst(row[i])).collect())
                    .collect(),
            ),
            MapKind::Quadratic {
                linear, quadratic, ..
            } => Some(
                (0..m)
                    .map(|i| {
                        linear
                            .iter()
                            .zip(quadratic)
                            .map(|(row, q)| {
                                let mut s = T::cst(row[i]);
                                for (j, xj) in x.iter().enumerate() {
                                    s += *xj * q[i][j];
                                }
                                s
                            })
                            .collect()
                    })
                    .collect(),
            ),
            MapKind::Inversion => {
                let r2 = dot(x, x);
                let r4 = r2 * r2;
                Some(
                    (0..m)
                        .map(|i| {
                            (0..m)
                                .map(|c| {
                                    let d = if c == i { T::one() / r2 } else { T::zero() };
                                    d - x[c] * x[i] * 2.0 / r4
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            MapKind::Radial => {
                let r = dot(x, x).sqrt();
                Some(
                    (0..m)
                        .map(|i| {
                            (0..m)
                                .map(|c| {
                                    let d = if c == i { T::one() } else { T::zero() };
                                    (d - y[c] * y[i]) / r
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            MapKind::Cylinder => {
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                Some(vec![
                    vec![x[0] / rho, T::zero()],
                    vec![x[1] / rho, T::zero()],
                    vec![T::zero(), T::one()],
                ])
            }
            MapKind::Normalized(inner) => {
                let f = inner.eval(x);
                let df = inner.jacobian(x, &f)?;
                let r = dot(&f, &f).sqrt();
                Some(
                    df.into_iter()
                        .map(|col| {
                            let c = dot(&col, y);
                            col.iter().zip(y).map(|(&a, &b)| (a - c * b) / r).collect()
                        })
                        .collect(),
                )
            }
            MapKind::Deformed { .. } => None,
        }
    }

    fn has_jacobian(&self) -> bool {
        match self {
            MapKind::Deformed { .. } => false,
            MapKind::Normalized(inner) => inner.has_jacobian(),
            _ => true,
        }
    }
}

fn affine<T: Real>(matrix: &Mat<f64>, offset: &[f64], x: &[T]) -> Vec<T> {
    matrix
        .iter()
        .zip(offset)
        .map(|(row, b)| {
            let mut s = T::cst(*b);
            for (a, xi) in row.iter().zip(x) {
                s += *xi * *a;
            }
            s
        })
        .collect()
}

/// A map `φ: (M, g) → (N, h)` in coordinates.
#[derive(Clone, Debug)]
pub struct SmoothMap {
    name: String,
    domain: MetricChart,
    target: TargetSpace,
    kind: MapKind,
    region: Region,
    use_providers: bool,
}

/// Output components of a map kind, when fixed by its parameters.
fn output_dim(kind: &MapKind, m: usize) -> Result<Option<usize>> {
Ok(match kind {
        MapKind::Identity => Some(m),
        MapKind::Constant { value } => Some(value.len()),
        MapKind::Affine { matrix, offset } => {
            if matrix.len() != offset.len() || matrix.iter().any(|r| r.len() != m) {
                return Err(Error::Dimension("affine matrix must be k×m".into()));
            }
            Some(offset.len())
        }
        MapKind::Quadratic {
            linear,
            quadratic,
            offset,
        } => {
            if linear.len() != offset.len()
                || quadratic.len() != offset.len()
                || linear.iter().any(|r| r.len() != m)
                || quadratic
                    .iter()
                    .any(|q| q.len() != m || q.iter().any(|r| r.len() != m))
            {
                return Err(Error::Dimension("quadratic map coefficients must be k×m and k×m×m".into()));
            }
            Some(offset.len())
        }
        MapKind::Inversion | MapKind::Radial => Some(m),
        MapKind::Cylinder => {
            if m != 3 {
                return Err(Error::Dimension("cylinder map needs a 3-dimensional domain".into()));
            }
            Some(2)
        }
        MapKind::Normalized(inner) => output_dim(inner, m)?,
        MapKind::Deformed { .. } => None,
    })
}

/// Symmetrizes quadratic coefficients, including inside a normalization.
fn symmetrized(kind: MapKind, m: usize) -> MapKind {
    match kind {
        MapKind::Quadratic {
            linear,
            quadratic,
            offset,
        } => MapKind::Quadratic {
            linear,
            quadratic: quadratic
                .into_iter()
                .map(|q| {
                    (0..m)
                        .map(|i| (0..m).map(|j| 0.5 * (q[i][j] + q[j][i])).collect())
                        .collect()
                })
                .collect(),
            offset,
        },
        MapKind::Normalized(inner) => MapKind::Normalized(Box::new(symmetrized(*inner, m))),
        other => other,
    }
}

impl SmoothMap {
    pub fn new(
        name: impl Into<String>,
        domain: MetricChart,
        target: TargetSpace,
        kind: MapKind,
        region: Region,
    ) -> Result<Self> {
        let m = domain.dim();
        let k = target.coords();
        let out_dim = output_dim(&kind, m)?;
        if let Some(o) = out_dim {
            if o != k {
                return Err(Error::Dimension(format!(
                    "map `{}` has {o} components but the target needs {k}",
                    name.into()
                )));
            }
        }
        let sphere_valued = matches!(kind, MapKind::Radial | MapKind::Normalized(_));
        if sphere_valued != target.is_sphere() && !matches!(kind, MapKind::Deformed { .. }) {
            if target.is_sphere() && matches!(kind, MapKind::Constant { .. }) {
                // constant maps onto a sphere point are allowed
            } else {
                return Err(Error::InvalidParams(
                    "sphere targets need a normalised (or constant) map".into(),
                ));
            }
        }
        let kind = symmetrized(kind, m);
        Ok(Self {
            name: name.into(),
            domain,
            target,
            kind,
            region,
            use_providers: true,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &MetricChart {
        &self.domain
    }

    pub fn target(&self) -> &TargetSpace {
        &self.target
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Disables analytic providers so every derivative comes from the backend.
    pub fn without_providers(mut self) -> Self {
        self.use_providers = false;
        self
    }

    pub fn has_providers(&self) -> bool {
        self.use_providers && self.kind.has_jacobian()
    }

    pub fn is_structurally_constant(&self) -> bool {
        match &self.kind {
            MapKind::Constant { .. } => true,
            MapKind::Affine { matrix, .. } => matrix.iter().flatten().all(|&a| a == 0.0),
            _ => false,
        }
    }

    pub fn eval<T: Real>(&self, x: &[T]) -> Vec<T> {
        self.kind.eval(x)
    }

    /// Map value and the columns `∂_i φ`, analytic when available.
    pub fn jacobian_columns<T: Real>(&self, x: &[T]) -> Result<(Vec<T>, Vec<Vec<T>>)> {
        if self.use_providers {
            let y = self.kind.eval(x);
            if let Some(cols) = self.kind.jacobian(x, &y) {
                return Ok((y, cols));
            }
        }
        self.backend_jacobian(x)
    }

    /// Columns from the dual backend only.
    pub fn backend_jacobian<T: Real>(&self, x: &[T]) -> Result<(Vec<T>, Vec<Vec<T>>)> {
        let j = jet(|y: &[Dual<T>]| Ok(self.kind.eval(y)), x)?;
        Ok((j.value, j.partials))
    }

    /// Membership in the admissible domain (chart patch and map predicate).
    pub fn admissible(&self, x: &[f64]) -> bool {
        x.len() == self.domain.dim()
            && self.domain.contains(x)
            && self.region.contains(x)
            && self.value_defined(x)
    }

    fn value_defined(&self, x: &[f64]) -> bool {
        match &self.kind {
            MapKind::Inversion | MapKind::Radial => dot(x, x) > 0.0,
            MapKind::Cylinder => x[0].hypot(x[1]) > 0.0,
            MapKind::Normalized(inner) => {
                let f = inner.eval(x);
                dot(&f, &f) > 0.0
            }
            MapKind::Deformed { base, .. } => {
                base.admissible(x) && {
                    let y = self.kind.eval(x);
                    y.iter().all(|v| v.is_finite()) && self.target.contains(&y)
                }
            }
            _ => true,
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        self.domain.check_point(x)?;
        if !self.region.contains(x) || !self.value_defined(x) {
            if let MapKind::Deformed { base, .. } = &self.kind {
                if base.admissible(x) {
                    return Err(Error::OutOfRange { point: x.to_vec() });
                }
            }
            return Err(Error::OutOfDomain {
                point: x.to_vec(),
                reason: format!("outside the admissible domain of `{}`", self.name),
            });
        }
        Ok(())
    }

    /// Compares analytic columns with the backend at `samples` random
    /// admissible points of `[lower, upper]`.
    pub fn verify_providers(
        &self,
        rng: &mut impl Rng,
        lower: &[f64],
        upper: &[f64],
        samples: usize,
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        if !self.has_providers() {
            return Ok(worst);
        }
        for _ in 0..samples {
            let x = rng::sample_where(rng, lower, upper, |p| self.admissible(p))?;
            let (_, a) = self.jacobian_columns(&x)?;
            let (_, b) = self.backend_jacobian(&x)?;
            for (ca, cb) in a.iter().zip(&b) {
                for (p, q) in ca.iter().zip(cb) {
                    let d = (p - q).abs() / (1.0 + q.abs());
                    if d > PROVIDER_TOLERANCE {
                        return Err(Error::ProviderMismatch {
                            point: x,
                            discrepancy: d,
                        });
                    }
                    worst = worst.max(d);
                }
            }
        }
        Ok(worst)
    }
}

/// `dφ` at `x` as a `k × m` matrix (rows are target coordinates).
pub fn differential_at(map: &SmoothMap, x: &[f64]) -> Result<Mat<f64>> {
    map.check_point(x)?;
    let (_, cols) = map.jacobian_columns(x)?;
    let k = map.target().coords();
    Ok((0..k)
        .map(|c| cols.iter().map(|col| col[c]).collect())
        .collect())
}

/// `|dφ|² = g^{ij} h(∂_iφ, ∂_jφ)`, generic over the scalar type.
pub fn hs_norm_sq_generic<T: Real>(map: &SmoothMap, ginv: &Mat<T>, y: &[T], cols: &[Vec<T>]) -> T {
    let frame = map.target().frame(y);
    let mut s = T::zero();
    for (i, ci) in cols.iter().enumerate() {
        for (j, cj) in cols.iter().enumerate() {
            s += ginv[i][j] * frame.inner(ci, cj);
        }
    }
    s
}

pub fn hs_norm_sq(map: &SmoothMap, x: &[f64]) -> Result<f64> {
    map.check_point(x)?;
    let frame = map.domain().frame(x)?;
    let (y, cols) = map.jacobian_columns(x)?;
    Ok(hs_norm_sq_generic(map, &frame.ginv, &y, &cols))
}

/// `s ↦ F(s)` profiles for radial exponents `p(x) = F(‖x‖²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum RadialProfile {
    /// `F(s) = 2 + s/(1+s)`, with values in `[2, 3)`.
    Saturating,
    /// `F(s) = base + scale·s/(1+s)`.
    Scaled { base: f64, scale: f64 },
}

impl RadialProfile {
    fn eval<T: Real>(&self, s: T) -> T {
        match self {
            RadialProfile::Saturating => s / (s + 1.0) + 2.0,
            RadialProfile::Scaled { base, scale } => s / (s + 1.0) * *scale + *base,
        }
    }
}

/// The exponent `p(x) ≥ 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExponentField {
    Constant { value: f64 },
    /// `offset + slope·x`.
    Affine { offset: f64, slope: Vec<f64> },
    /// `n + c / (2 ln‖x‖² − ln n)`.
    Inversion { n: usize, c: f64 },
    /// `F(‖x‖²)`.
    Radial {
        #[serde(flatten)]
        profile: RadialProfile,
    },
    /// `ln(x₁² + x₂²) / ln 2`.
    Cylinder,
}

impl ExponentField {
    pub fn constant(value: f64) -> Self {
        ExponentField::Constant { value }
    }

    pub fn eval<T: Real>(&self, x: &[T]) -> T {
        match self {
            ExponentField::Constant { value } => T::cst(*value),
            ExponentField::Affine { offset, slope } => {
                let mut p = T::cst(*offset);
                for (a, xi) in slope.iter().zip(x) {
                    p += *xi * *a;
                }
                p
            }
            ExponentField::Inversion { n, c } => {
                let n = *n as f64;
                (dot(x, x).ln() * 2.0 - n.ln()).powi(-1) * *c + n
            }
            ExponentField::Radial { profile } => profile.eval(dot(x, x)),
            ExponentField::Cylinder => (x[0] * x[0] + x[1] * x[1]).ln() / 2f64.ln(),
        }
    }

    /// `Some(p)` when the exponent is a constant function.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ExponentField::Constant { value } => Some(*value),
            ExponentField::Affine { offset, slope } if slope.iter().all(|&a| a == 0.0) => {
                Some(*offset)
            }
            ExponentField::Inversion { n, c } if *c == 0.0 => Some(*n as f64),
            _ => None,
        }
    }
}

/// `p(x)`, checked against the floor `p ≥ 2`.
pub fn exponent_at(p: &ExponentField, x: &[f64]) -> Result<f64> {
    let v = p.eval(x);
    if !(v >= 2.0) {
        return Err(Error::Inadmissible {
            point: x.to_vec(),
            value: v,
        });
    }
    Ok(v)
}

/// `grad^M p = g^{ij} ∂_j p`.
pub fn grad_exponent_at(p: &ExponentField, chart: &MetricChart, x: &[f64]) -> Result<Vec<f64>> {
    exponent_at(p, x)?;
    chart.check_point(x)?;
    let j = jet(|y: &[Dual<f64>]| Ok(vec![p.eval(y)]), x)?;
    let frame = chart.frame(x)?;
    let m = x.len();
    Ok((0..m)
        .map(|i| (0..m).map(|k| frame.ginv[i][k] * j.partials[k][0]).sum())
        .collect())
}

/// Parameters accepted by [`catalog_build`]; unused fields are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogParams {
    /// Dimension of the domain (and of Euclidean targets for inversion).
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub c: Option<f64>,
    /// Target dimension when it differs from the domain.
    #[serde(default)]
    pub target_dim: Option<usize>,
    #[serde(default)]
    pub value: Option<Vec<f64>>,
    #[serde(default)]
    pub matrix: Option<Mat<f64>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub quadratic: Option<Vec<Mat<f64>>>,
    /// Constant exponent for entries without a prescribed exponent.
    #[serde(default)]
    pub p: Option<f64>,
    /// Radial exponent profile; defaults to [`RadialProfile::Saturating`].
    #[serde(default)]
    pub profile: Option<RadialProfile>,
    /// Project onto the sphere (`F/|F|`) for affine and quadratic maps.
    #[serde(default)]
    pub normalized: bool,
}

/// A documented analytic fact about a catalog map.
#[derive(Clone, Debug, Serialize)]
pub struct Fact {
    pub statement: String,
    pub provenance: &'static str,
}

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: String,
    pub map: Arc<SmoothMap>,
    pub exponent: ExponentField,
    /// Box for rejection sampling of admissible points.
    pub sample_lower: Vec<f64>,
    pub sample_upper: Vec<f64>,
    pub facts: Vec<Fact>,
}

impl CatalogEntry {
    pub fn admissible(&self, x: &[f64]) -> bool {
        self.map.admissible(x)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Vec<f64>> {
        rng::sample_where(rng, &self.sample_lower, &self.sample_upper, |x| {
            self.map.admissible(x)
        })
    }
}

pub const CATALOG_NAMES: &[&str] = &[
    "identity",
    "constant",
    "affine",
    "quadratic",
    "inversion",
    "radial",
    "cylinder",
];

/// Builds a catalog map with its exponent and checks its analytic providers.
pub fn catalog_build(name: &str, params: &CatalogParams) -> Result<CatalogEntry> {
    let need_n = || {
        params
            .n
            .ok_or_else(|| Error::InvalidParams(format!("`{name}` needs parameter n")))
    };
    let constant_p = || ExponentField::constant(params.p.unwrap_or(2.0));
    let entry = match name {
        "identity" => {
            let n = need_n()?;
            let map = SmoothMap::new(
                "identity",
                MetricChart::euclidean(n),
                TargetSpace::euclidean(n),
                MapKind::Identity,
                Region::Everywhere,
            )?;
            CatalogEntry {
                name: name.into(),
                map: Arc::new(map),
                exponent: constant_p(),
                sample_lower: vec![-1.0; n],
                sample_upper: vec![1.0; n],
                facts: vec![Fact {
                    statement: format!("|dφ|² = {n}"),
                    provenance: "closed form",
                }],
            }
        }
        "constant" => {
            let n = need_n()?;
            let value = params
                .value
                .clone()
                .ok_or_else(|| Error::InvalidParams("`constant` needs `value`".into()))?;
            let target = if params.normalized {
                TargetSpace::sphere(value.len() - 1)
            } else {
                TargetSpace::euclidean(value.len())
            };
            let map = SmoothMap::new(
                "constant",
                MetricChart::euclidean(n),
                target,
                MapKind::Constant { value },
                Region::Everywhere,
            )?;
            CatalogEntry {
                name: name.into(),
                map: Arc::new(map),
                exponent: constant_p(),
                sample_lower: vec![-1.0; n],
                sample_upper: vec![1.0; n],
                facts: vec![Fact {
                    statement: "dφ = 0".into(),
                    provenance: "closed form",
                }],
            }
        }
        "affine" | "quadratic" => {
            let matrix = params
                .matrix
                .clone()
                .ok_or_else(|| Error::InvalidParams(format!("`{name}` needs `matrix`")))?;
            let k = matrix.len();
            let m = matrix.first().map(|r| r.len()).unwrap_or(0);
            let offset = params.offset.clone().unwrap_or_else(|| vec![0.0; k]);
            let inner = if name == "affine" {
                MapKind::Affine { matrix, offset }
            } else {
                MapKind::Quadratic {
                    linear: matrix,
                    quadratic: params
                        .quadratic
                        .clone()
                        .ok_or_else(|| Error::InvalidParams("`quadratic` needs `quadratic`".into()))?,
                    offset,
                }
            };
            let (kind, target) = if params.normalized {
                (MapKind::Normalized(Box::new(inner)), TargetSpace::sphere(k - 1))
            } else {
                (inner, TargetSpace::euclidean(k))
            };
            let map = SmoothMap::new(name, MetricChart::euclidean(m), target, kind, Region::Everywhere)?;
            CatalogEntry {
                name: name.into(),
                map: Arc::new(map),
                exponent: constant_p(),
                sample_lower: vec![-1.0; m],
                sample_upper: vec![1.0; m],
                facts: vec![],
            }
        }
        "inversion" => {
            let n = need_n()?;
            let c = params.c.unwrap_or(0.0);
            if !(c >= 0.0) {
                return Err(Error::InvalidParams("inversion needs c ≥ 0".into()));
            }
            if n < 2 {
                return Err(Error::InvalidParams("inversion needs n ≥ 2".into()));
            }
            let bound = (n as f64).sqrt();
            let map = SmoothMap::new(
                "inversion",
                MetricChart::euclidean(n),
                TargetSpace::euclidean(n),
                MapKind::Inversion,
                Region::NormSqAbove { bound },
            )?;
            CatalogEntry {
                name: name.into(),
                map: Arc::new(map),
                exponent: ExponentField::Inversion { n, c },
                sample_lower: vec![-3.0; n],
                sample_upper: vec![3.0; n],
                facts: vec![
                    Fact {
                        statement: format!("|dφ|(x) = √{n}/‖x‖²"),
                        provenance: "worked example",
                    },
                    Fact {
                        statement: "τ_p(φ) = 0 on ‖x‖² > √n".into(),
                        provenance: "worked example",
                    },
                ],
            }
        }
        "radial" => {
            let n = need_n()?;
            if n < 2 {
                return Err(Error::InvalidParams("radial needs n ≥ 2".into()));
            }
            let map = SmoothMap::new(
                "radial",
                MetricChart::euclidean(n),
                TargetSpace::sphere(n - 1),
                MapKind::Radial,
                Region::NormAbove { bound: 0.0 },
            )?;
            CatalogEntry {
                name: name.into(),
                map: Arc::new(map),
                exponent: ExponentField::Radial {
                    profile: params.profile.clone().unwrap_or(RadialProfile::Saturating),
                },
                sample_lower: vec![-3.0; n],
                sample_upper: vec![3.0; n],
                facts: vec![
                    Fact {
                        statement: format!("|dφ|(x) = √{}/‖x‖", n - 1),
                        provenance: "worked example",
                    },
                    Fact {
                        statement: "τ_p(φ) = 0 for p(x) = F(‖x‖²)".into(),
                        provenance: "worked example",
                    },
                ],
            }
        }
        "cylinder" => {
            let map = SmoothMap::new(
                "cylinder",
                MetricChart::euclidean(3),
                TargetSpace::euclidean(2),
                MapKind::Cylinder,
                Region::CylinderRadiusAbove { bound: 2.0 },
            )?;
            CatalogEntry {
                name: name.into(),
                map: Arc::new(map),
                exponent: ExponentField::Cylinder,
                sample_lower: vec![-4.0, -4.0, -1.0],
                sample_upper: vec![4.0, 4.0, 1.0],
                facts: vec![
                    Fact {
                        statement: "|dφ|² = 2".into(),
                        provenance: "closed form",
                    },
                    Fact {
                        statement: "τ_p(φ) = (1, 0); τ_{2,p}(φ) = 0".into(),
                        provenance: "worked example",
                    },
                ],
            }
        }
        other => return Err(Error::UnknownCatalog(other.to_string())),
    };
    let mut rng = rng::seeded(rng::DEFAULT_SEED);
    entry
        .map
        .verify_providers(&mut rng, &entry.sample_lower, &entry.sample_upper, 50)?;
    Ok(entry)
}

/// Columns of the differential, for debugging output.
pub fn columns_to_f64<T: Real>(cols: &[Vec<T>]) -> Mat<f64> {
    cols.iter().map(|c| values(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn identity_and_constant_differentials() {
        let id = catalog_build("identity", &CatalogParams { n: Some(3), ..Default::default() }).unwrap();
        let d = differential_at(&id.map, &[0.1, 0.2, 0.3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let c = catalog_build(
            "constant",
            &CatalogParams {
                n: Some(2),
                value: Some(vec![1.0, 2.0, 3.0]),
                ..Default::default()
            },
        )
        .unwrap();
        let d = differential_at(&c.map, &[0.1, 0.2]).unwrap();
        assert!(d.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(hs_norm_sq(&c.map, &[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn inversion_differential_matches_finite_differences() {
        let e = catalog_build("inversion", &CatalogParams { n: Some(3), c: Some(1.0), ..Default::default() }).unwrap();
        let x = [2.0, 0.0, 0.0];
        let d = differential_at(&e.map, &x).unwrap();
        let oracle = fd::jacobian(|y| e.map.eval(y), &x);
        for c in 0..3 {
            for i in 0..3 {
                assert!((d[c][i] - oracle[i][c]).abs() < 1e-9);
            }
        }
        // (1/‖x‖²)(I − 2xxᵀ/‖x‖²) at x = (2,0,0) is diag(−1/4, 1/4, 1/4).
        assert!(close(d[0][0], -0.25, 1e-15));
        assert!(close(d[1][1], 0.25, 1e-15));
        assert!(close(d[2][2], 0.25, 1e-15));
    }

    #[test]
    fn hs_norms_of_the_examples() {
        let inv = catalog_build("inversion", &CatalogParams { n: Some(3), c: Some(1.0), ..Default::default() }).unwrap();
        assert!(close(hs_norm_sq(&inv.map, &[2.0, 0.0, 0.0]).unwrap(), 3.0 / 16.0, 1e-15));
        let rad = catalog_build("radial", &CatalogParams { n: Some(3), ..Default::default() }).unwrap();
        assert!(close(hs_norm_sq(&rad.map, &[0.0, 2.0, 0.0]).unwrap(), 0.5, 1e-15));
        let cyl = catalog_build("cylinder", &CatalogParams::default()).unwrap();
        let mut rng = rng::seeded(3);
        for _ in 0..20 {
            let x = cyl.sample(&mut rng).unwrap();
            assert!(close(hs_norm_sq(&cyl.map, &x).unwrap(), 2.0, 1e-14));
            let oracle = fd::jacobian(|y| cyl.map.eval(y), &x);
            let fd_norm: f64 = oracle.iter().flatten().map(|v| v * v).sum();
            assert!(close(fd_norm, 2.0, 1e-8));
        }
    }

    #[test]
    fn catalog_norm_formulas_at_random_points() {
        let mut rng = rng::seeded(17);
        for n in [3, 4] {
            let inv = catalog_build("inversion", &CatalogParams { n: Some(n), c: Some(1.0), ..Default::default() }).unwrap();
            let rad = catalog_build("radial", &CatalogParams { n: Some(n), ..Default::default() }).unwrap();
            for _ in 0..100 {
                let x = inv.sample(&mut rng).unwrap();
                let r2 = dot(&x, &x);
                let u = hs_norm_sq(&inv.map, &x).unwrap().sqrt();
                assert!(close(u, (n as f64).sqrt() / r2, 1e-9));
                let x = rad.sample(&mut rng).unwrap();
                let u = hs_norm_sq(&rad.map, &x).unwrap().sqrt();
                assert!(close(u, ((n - 1) as f64).sqrt() / dot(&x, &x).sqrt(), 1e-9));
            }
        }
    }

    #[test]
    fn exponent_values() {
        assert_eq!(grad_exponent_at(&ExponentField::constant(3.0), &MetricChart::euclidean(2), &[0.3, 0.1]).unwrap(), vec![0.0, 0.0]);
        let p = ExponentField::Inversion { n: 3, c: 1.0 };
        let v = exponent_at(&p, &[2.0, 0.0, 0.0]).unwrap();
        assert!(close(v, 3.0 + 1.0 / (2.0 * 4f64.ln() - 3f64.ln()), 1e-15));
        assert!((v - 3.597_379_975).abs() < 1e-9);
        let cyl = exponent_at(&ExponentField::Cylinder, &[4.0, 0.0, 0.3]).unwrap();
        assert!(close(cyl, 4.0, 1e-15));
        assert!(matches!(
            exponent_at(&ExponentField::constant(1.5), &[0.0]),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn grad_exponent_is_index_raised() {
        let chart = MetricChart::constant(vec![vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = ExponentField::Affine {
            offset: 3.0,
            slope: vec![2.0, 1.0],
        };
        let g = grad_exponent_at(&p, &chart, &[0.1, 0.1]).unwrap();
        assert!(close(g[0], 0.5, 1e-15) && close(g[1], 1.0, 1e-15));
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(
            catalog_build("helix", &CatalogParams::default()),
            Err(Error::UnknownCatalog(_))
        ));
        assert!(matches!(
            catalog_build("inversion", &CatalogParams { n: Some(3), c: Some(-1.0), ..Default::default() }),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn radial_entry_is_sphere_valued_with_admissible_exponent() {
        let e = catalog_build("radial", &CatalogParams { n: Some(4), ..Default::default() }).unwrap();
        assert_eq!(e.map.target(), &TargetSpace::sphere(3));
        let mut rng = rng::seeded(5);
        for _ in 0..100 {
            let x = e.sample(&mut rng).unwrap();
            let y = e.map.eval(&x);
            assert!((dot(&y, &y) - 1.0).abs() <= 1e-10);
            let p = exponent_at(&e.exponent, &x).unwrap();
            assert!((2.0..3.0).contains(&p));
        }
    }

    #[test]
    fn cylinder_domain_predicate() {
        let e = catalog_build("cylinder", &CatalogParams::default()).unwrap();
        assert!(e.admissible(&[2.5, 0.0, 7.0]));
        assert!(!e.admissible(&[1.0, 1.0, 0.0]));
        assert!(matches!(
            differential_at(&e.map, &[1.0, 1.0, 0.0]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn normalized_quadratic_providers_agree_with_backend() {
        let e = catalog_build(
            "quadratic",
            &CatalogParams {
                matrix: Some(vec![vec![1.0, 0.2], vec![-0.3, 1.0], vec![0.1, 0.1]]),
                offset: Some(vec![0.1, 0.0, 1.0]),
                quadratic: Some(vec![
                    vec![vec![0.5, 0.1], vec![0.1, -0.2]],
                    vec![vec![0.0, 0.3], vec![0.3, 0.4]],
                    vec![vec![-0.1, 0.0], vec![0.0, 0.2]],
                ]),
                normalized: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(e.map.target().is_sphere());
        let mut rng = rng::seeded(9);
        let worst = e.map.verify_providers(&mut rng, &[-1.0, -1.0], &[1.0, 1.0], 50).unwrap();
        assert!(worst <= PROVIDER_TOLERANCE);
    }

    #[test]
    fn normalized_quadratic_symmetrizes_coefficients() {
        let e = catalog_build(
            "quadratic",
            &CatalogParams {
                matrix: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]),
                quadratic: Some(vec![
                    vec![vec![0.0, 2.0], vec![0.0, 0.0]],
                    vec![vec![0.0, 0.0], vec![-1.0, 0.0]],
                    vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                ]),
                offset: Some(vec![0.0, 0.0, 2.0]),
                normalized: true,
                ..Default::default()
            },
        );
        assert!(e.is_ok(), "{e:?}");
    }
}
