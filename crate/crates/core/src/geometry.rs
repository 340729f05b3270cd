//! Charts of the domain manifold, target spaces, connections and curvature.
//!
//! Domain charts evaluate their metric on any [`Real`], so Christoffel
//! symbols and volume densities can themselves be differentiated by the
//! nested dual backend. Targets are either flat, the unit sphere embedded in
//! the next Euclidean space, or a conformal chart of a space form.

use serde::{Deserialize, Serialize};

use crate::dual::{jet, values, Dual, Real};
use crate::error::{Error, Result};

pub type Mat<T> = Vec<Vec<T>>;

/// Relative pivot floor for positive-definiteness checks.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Tangency tolerance for sphere inputs.
pub const TANGENCY_TOLERANCE: f64 = 1e-10;
/// Unit-length tolerance for points on the sphere.
pub const SPHERE_TOLERANCE: f64 = 1e-10;

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn identity<T: Real>(m: usize) -> Mat<T> {
    (0..m)
        .map(|i| (0..m).map(|j| T::cst(if i == j { 1.0 } else { 0.0 })).collect())
        .collect()
}

/// Inverse and determinant by Gauss–Jordan elimination with partial pivoting
/// on the innermost values.
pub fn invert<T: Real>(a: &Mat<T>) -> (Mat<T>, T) {
    let m = a.len();
    let mut work = a.clone();
    let mut inv = identity::<T>(m);
    let mut det = T::one();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&r, &s| {
                work[r][col]
                    .value()
                    .abs()
                    .total_cmp(&work[s][col].value().abs())
            })
            .unwrap_or(col);
        if pivot != col {
            work.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let p = work[col][col];
        det *= p;
        for j in 0..m {
            work[col][j] = work[col][j] / p;
            inv[col][j] = inv[col][j] / p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = work[r][col];
            for j in 0..m {
                let wc = work[col][j];
                let ic = inv[col][j];
                work[r][j] -= f * wc;
                inv[r][j] -= f * ic;
            }
        }
    }
    (inv, det)
}

/// Cholesky pivots of a symmetric matrix; `None` once a pivot is not positive.
fn cholesky_pivots(a: &Mat<f64>) -> Option<Vec<f64>> {
    let m = a.len();
    let mut l = vec![vec![0.0; m]; m];
    let mut pivots = Vec::with_capacity(m);
    for j in 0..m {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        pivots.push(d);
        let dj = d.sqrt();
        l[j][j] = dj;
        for i in j + 1..m {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / dj;
        }
    }
    Some(pivots)
}

/// Checks the smallest Cholesky pivot against [`PIVOT_TOLERANCE`] times the largest.
pub fn check_positive_definite(g: &Mat<f64>, x: &[f64]) -> Result<()> {
    let fail = |ratio| Error::DegenerateMetric {
        point: x.to_vec(),
        ratio,
    };
    let pivots = cholesky_pivots(g).ok_or_else(|| fail(0.0))?;
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > PIVOT_TOLERANCE * max {
        Ok(())
    } else {
        Err(fail(min / max))
    }
}

/// Log of a conformal factor: the metric is `e^{2f} δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "factor", rename_all = "kebab-case")]
pub enum ConformalFactor {
    /// `f(x) = slope·x + offset`.
    Exponential { slope: Vec<f64>, offset: f64 },
    /// Stereographic model of the space form of curvature `kappa`:
    /// `e^{2f} = 4 / (1 + κ|x|²)²`.
    SpaceForm { kappa: f64 },
}

impl ConformalFactor {
    pub fn log_factor<T: Real>(&self, x: &[T]) -> T {
        match self {
            ConformalFactor::Exponential { slope, offset } => {
                let mut f = T::cst(*offset);
                for (a, xi) in slope.iter().zip(x) {
                    f += *xi * *a;
                }
                f
            }
            ConformalFactor::SpaceForm { kappa } => {
                let r2 = dot(x, x);
                T::cst(2f64.ln()) - (r2 * *kappa + 1.0).ln()
            }
        }
    }

    pub fn grad_log_factor<T: Real>(&self, x: &[T]) -> Vec<T> {
        match self {
            ConformalFactor::Exponential { slope, .. } => {
                slope.iter().map(|&a| T::cst(a)).collect()
            }
            ConformalFactor::SpaceForm { kappa } => {
                let denom = dot(x, x) * *kappa + 1.0;
                x.iter().map(|&xi| xi * (-2.0 * kappa) / denom).collect()
            }
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self {
            ConformalFactor::Exponential { .. } => true,
            ConformalFactor::SpaceForm { kappa } => 1.0 + kappa * dot(x, x) > 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    Euclidean,
    ConformalFactor,
    General,
}

/// A coordinate chart `(M, g)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricChart {
    Euclidean { dim: usize },
    /// Constant symmetric metric coefficients.
    Constant { matrix: Vec<Vec<f64>> },
    Conformal {
        dim: usize,
        #[serde(flatten)]
        factor: ConformalFactor,
    },
    /// Polar coordinates `(r, θ)` of the flat plane: `diag(1, r²)`.
    Polar,
    /// `g_ij = δ_ij + a·s_i(x)s_j(x)`, `s_i(x) = sin(x_{i+1} + i)`: a
    /// position-dependent metric with off-diagonal terms.
    Perturbed { dim: usize, amplitude: f64 },
}

impl MetricChart {
    pub fn euclidean(dim: usize) -> Self {
        MetricChart::Euclidean { dim }
    }

    /// Constant metric from coefficients; the input is symmetrised.
    pub fn constant(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let m = matrix.len();
        if matrix.iter().any(|r| r.len() != m) || m == 0 {
            return Err(Error::Dimension("metric must be a square matrix".into()));
        }
        let sym: Mat<f64> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| 0.5 * (matrix[i][j] + matrix[j][i]))
                    .collect()
            })
            .collect();
        check_positive_definite(&sym, &vec![0.0; m])?;
        Ok(MetricChart::Constant { matrix: sym })
    }

    pub fn conformal(dim: usize, factor: ConformalFactor) -> Self {
        MetricChart::Conformal { dim, factor }
    }

    /// Poincaré-ball style chart of the space form of curvature `kappa`.
    pub fn space_form(dim: usize, kappa: f64) -> Self {
        MetricChart::Conformal {
            dim,
            factor: ConformalFactor::SpaceForm { kappa },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricChart::Euclidean { dim }
            | MetricChart::Conformal { dim, .. }
            | MetricChart::Perturbed { dim, .. } => *dim,
            MetricChart::Constant { matrix } => matrix.len(),
            MetricChart::Polar => 2,
        }
    }

    pub fn kind(&self) -> ChartKind {
        match self {
            MetricChart::Euclidean { .. } => ChartKind::Euclidean,
            MetricChart::Conformal { .. } => ChartKind::ConformalFactor,
            _ => ChartKind::General,
        }
    }

    /// Whether `x` lies in the coordinate patch on which the metric is defined.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            MetricChart::Conformal { factor, .. } => factor.contains(x),
            MetricChart::Polar => x[0] > 0.0,
            _ => true,
        }
    }

    /// Metric coefficients `g_ij(x)`.
    pub fn metric<T: Real>(&self, x: &[T]) -> Mat<T> {
        let m = self.dim();
        match self {
            MetricChart::Euclidean { .. } => identity(m),
            MetricChart::Constant { matrix } => matrix
                .iter()
                .map(|r| r.iter().map(|&v| T::cst(v)).collect())
                .collect(),
            MetricChart::Conformal { factor, .. } => {
                let e = (factor.log_factor(x) * 2.0).exp();
                (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| if i == j { e } else { T::zero() })
                            .collect()
                    })
                    .collect()
            }
            MetricChart::Polar => vec![
                vec![T::one(), T::zero()],
                vec![T::zero(), x[0] * x[0]],
            ],
            MetricChart::Perturbed { amplitude, .. } => {
                let s: Vec<T> = (0..m).map(|i| (x[(i + 1) % m] + i as f64).sin()).collect();
                (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| {
                                let d = if i == j { 1.0 } else { 0.0 };
                                s[i] * s[j] * *amplitude + d
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }

    /// Christoffel symbols `Γ^k_{ij}` indexed `[k][i][j]`.
    pub fn christoffels<T: Real>(&self, x: &[T]) -> Result<Vec<Mat<T>>> {
        let m = self.dim();
        match self {
            MetricChart::Euclidean { .. } | MetricChart::Constant { .. } => {
                Ok(vec![vec![vec![T::zero(); m]; m]; m])
            }
            MetricChart::Conformal { factor, .. } => {
                let df = factor.grad_log_factor(x);
                Ok(conformal_christoffels(&df))
            }
            _ => self.christoffels_from_metric(x),
        }
    }

    /// `½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)` by differentiating the
    /// metric coefficients directly. Used for general charts and as the
    /// reference for the closed-form shortcuts.
    pub fn christoffels_from_metric<T: Real>(&self, x: &[T]) -> Result<Vec<Mat<T>>> {
        let m = self.dim();
        let j = jet(
            |y: &[Dual<T>]| Ok(self.metric(y).into_iter().flatten().collect()),
            x,
        )?;
        let dg = |l: usize, a: usize, b: usize| j.partials[l][a * m + b];
        let (ginv, _) = invert(&self.metric(x));
        let mut gamma = vec![vec![vec![T::zero(); m]; m]; m];
        for k in 0..m {
            for a in 0..m {
                for b in 0..m {
                    let mut s = T::zero();
                    for l in 0..m {
                        s += ginv[k][l] * (dg(a, b, l) + dg(b, a, l) - dg(l, a, b));
                    }
                    gamma[k][a][b] = s * 0.5;
                }
            }
        }
        Ok(gamma)
    }

    /// `sqrt(det g)`.
    pub fn volume_density<T: Real>(&self, x: &[T]) -> Result<T> {
        match self {
            MetricChart::Euclidean { .. } => Ok(T::one()),
            MetricChart::Conformal { dim, factor } => {
                Ok((factor.log_factor(x) * (*dim as f64)).exp())
            }
            _ => {
                let (_, det) = invert(&self.metric(x));
                if det.value() <= 0.0 {
                    return Err(Error::DegenerateMetric {
                        point: values(x),
                        ratio: det.value(),
                    });
                }
                Ok(det.sqrt())
            }
        }
    }

    /// Metric, its inverse and Christoffel symbols at one point.
    pub fn frame<T: Real>(&self, x: &[T]) -> Result<ChartFrame<T>> {
        let g = self.metric(x);
        let ginv = match self {
            MetricChart::Euclidean { .. } => identity(self.dim()),
            MetricChart::Conformal { factor, .. } => {
                let e = (factor.log_factor(x) * -2.0).exp();
                let m = self.dim();
                (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| if i == j { e } else { T::zero() })
                            .collect()
                    })
                    .collect()
            }
            _ => invert(&g).0,
        };
        let gamma = self.christoffels(x)?;
        Ok(ChartFrame { g, ginv, gamma })
    }

    /// Validates that `x` is in the patch and the metric is positive definite there.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, chart has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.contains(x) {
            return Err(Error::OutOfDomain {
                point: x.to_vec(),
                reason: "outside the coordinate patch of the chart".into(),
            });
        }
        check_positive_definite(&self.metric(x), x)
    }
}

fn conformal_christoffels<T: Real>(df: &[T]) -> Vec<Mat<T>> {
    let m = df.len();
    let mut gamma = vec![vec![vec![T::zero(); m]; m]; m];
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                let mut s = T::zero();
                if k == i {
                    s += df[j];
                }
                if k == j {
                    s += df[i];
                }
                if i == j {
                    s -= df[k];
                }
                gamma[k][i][j] = s;
            }
        }
    }
    gamma
}

/// Metric data of a chart at one point.
#[derive(Clone, Debug)]
pub struct ChartFrame<T> {
    pub g: Mat<T>,
    pub ginv: Mat<T>,
    pub gamma: Vec<Mat<T>>,
}

/// Public `christoffels_at`: checks the point first.
pub fn christoffels_at(chart: &MetricChart, x: &[f64]) -> Result<Vec<Mat<f64>>> {
    chart.check_point(x)?;
    chart.christoffels(x)
}

pub fn volume_density(chart: &MetricChart, x: &[f64]) -> Result<f64> {
    chart.check_point(x)?;
    chart.volume_density(x)
}

/// The codomain `(N, h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpace {
    Euclidean { dim: usize },
    /// Unit sphere `S^dim` in `R^{dim+1}`; values are ambient coordinates.
    Sphere { dim: usize },
    /// Conformal chart of the space form of constant curvature `kappa`.
    SpaceForm { dim: usize, kappa: f64 },
}

impl TargetSpace {
    pub fn euclidean(dim: usize) -> Self {
        TargetSpace::Euclidean { dim }
    }

    pub fn sphere(dim: usize) -> Self {
        TargetSpace::Sphere { dim }
    }

    pub fn space_form(dim: usize, kappa: f64) -> Self {
        TargetSpace::SpaceForm { dim, kappa }
    }

    /// Intrinsic dimension `n`.
    pub fn dim(&self) -> usize {
        match self {
            TargetSpace::Euclidean { dim }
            | TargetSpace::Sphere { dim }
            | TargetSpace::SpaceForm { dim, .. } => *dim,
        }
    }

    /// Length of coordinate vectors: `n + 1` for the sphere, `n` otherwise.
    pub fn coords(&self) -> usize {
        match self {
            TargetSpace::Sphere { dim } => dim + 1,
            _ => self.dim(),
        }
    }

    /// Sectional curvature (zero for flat targets).
    pub fn curvature(&self) -> f64 {
        match self {
            TargetSpace::Euclidean { .. } => 0.0,
            TargetSpace::Sphere { .. } => 1.0,
            TargetSpace::SpaceForm { kappa, .. } => *kappa,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, TargetSpace::Sphere { .. })
    }

    pub fn chart(&self) -> Option<MetricChart> {
        match self {
            TargetSpace::SpaceForm { dim, kappa } => Some(MetricChart::space_form(*dim, *kappa)),
            _ => None,
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            TargetSpace::Euclidean { .. } => true,
            TargetSpace::Sphere { .. } => (dot(y, y) - 1.0).abs() <= SPHERE_TOLERANCE,
            TargetSpace::SpaceForm { kappa, .. } => 1.0 + kappa * dot(y, y) > 0.0,
        }
    }

    /// Connection and metric data at `y`.
    pub fn frame<T: Real>(&self, y: &[T]) -> TargetFrame<T> {
        match self {
            TargetSpace::SpaceForm { kappa, .. } => {
                let factor = ConformalFactor::SpaceForm { kappa: *kappa };
                let scale = (factor.log_factor(y) * 2.0).exp();
                let gamma = conformal_christoffels(&factor.grad_log_factor(y));
                TargetFrame {
                    target: self.clone(),
                    y: y.to_vec(),
                    scale,
                    gamma: Some(gamma),
                }
            }
            _ => TargetFrame {
                target: self.clone(),
                y: y.to_vec(),
                scale: T::one(),
                gamma: None,
            },
        }
    }
}

/// Target geometry frozen at a point `y`.
#[derive(Clone, Debug)]
pub struct TargetFrame<T> {
    target: TargetSpace,
    pub y: Vec<T>,
    /// Conformal scale of `h` at `y` (one for Euclidean and sphere targets).
    pub scale: T,
    gamma: Option<Vec<Mat<T>>>,
}

impl<T: Real> TargetFrame<T> {
    /// `h_y(a, b)`.
    pub fn inner(&self, a: &[T], b: &[T]) -> T {
        dot(a, b) * self.scale
    }

    /// Orthogonal projection onto `T_y S^n`; identity on other targets.
    pub fn project(&self, v: &[T]) -> Vec<T> {
        if self.target.is_sphere() {
            let c = dot(v, &self.y);
            v.iter().zip(&self.y).map(|(&a, &b)| a - c * b).collect()
        } else {
            v.to_vec()
        }
    }

    /// Covariant derivative `∇^φ_{∂_i} V` from the raw partial `∂_i V`,
    /// the map derivative `∂_i φ` and the value `V`.
    pub fn covariant(&self, dphi_i: &[T], v: &[T], dv_i: &[T]) -> Vec<T> {
        match (&self.target, &self.gamma) {
            (TargetSpace::Sphere { .. }, _) => self.project(dv_i),
            (_, Some(gamma)) => {
                let n = v.len();
                (0..n)
                    .map(|c| {
                        let mut s = dv_i[c];
                        for a in 0..n {
                            for b in 0..n {
                                s += gamma[c][a][b] * dphi_i[a] * v[b];
                            }
                        }
                        s
                    })
                    .collect()
            }
            _ => dv_i.to_vec(),
        }
    }

    /// `R(X,Y)Z = κ(h(Y,Z)X − h(X,Z)Y)`.
    pub fn curvature(&self, x: &[T], y: &[T], z: &[T]) -> Vec<T> {
        let kappa = self.target.curvature();
        if kappa == 0.0 {
            return vec![T::zero(); x.len()];
        }
        let yz = self.inner(y, z);
        let xz = self.inner(x, z);
        x.iter()
            .zip(y)
            .map(|(&a, &b)| (yz * a - xz * b) * kappa)
            .collect()
    }
}

fn check_on_sphere(y: &[f64]) -> Result<()> {
    let defect = (dot(y, y) - 1.0).abs();
    if defect > SPHERE_TOLERANCE {
        return Err(Error::OutOfDomain {
            point: y.to_vec(),
            reason: format!("not on the unit sphere (||y|²−1| = {defect:e})"),
        });
    }
    Ok(())
}

/// Curvature operator of `target` at `y`, with tangency checks on the sphere.
pub fn curvature_at(
    target: &TargetSpace,
    y: &[f64],
    x: &[f64],
    yv: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let k = target.coords();
    if [y, x, yv, z].iter().any(|v| v.len() != k) {
        return Err(Error::Dimension(format!("target vectors must have {k} coordinates")));
    }
    if target.is_sphere() {
        check_on_sphere(y)?;
        for v in [x, yv, z] {
            let defect = dot(v, y).abs();
            if defect > TANGENCY_TOLERANCE {
                return Err(Error::NotTangent {
                    point: y.to_vec(),
                    defect,
                });
            }
        }
    }
    Ok(target.frame(y).curvature(x, yv, z))
}

/// Gradient on the sphere of `λ(y) = ⟨α, y⟩`: `α − ⟨α,y⟩y`.
pub fn conformal_field_generic<T: Real>(alpha: &[T], y: &[T]) -> Vec<T> {
    let l = dot(alpha, y);
    alpha.iter().zip(y).map(|(&a, &b)| a - l * b).collect()
}

pub fn conformal_field(alpha: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != y.len() {
        return Err(Error::Dimension("α and y must share the ambient dimension".into()));
    }
    check_on_sphere(y)?;
    Ok(conformal_field_generic(alpha, y))
}

/// `cos(|v|)` and `sin(|v|)/|v|` as functions of `q = |v|²`, smooth through `q = 0`.
fn cos_sinc_sq<T: Real>(q: T) -> (T, T) {
    if q.value() < 1e-6 {
        // Taylor series through q³; truncation below 1e-24.
        let c = T::one() - q * 0.5 + q * q / 24.0 - q * q * q / 720.0;
        let s = T::one() - q / 6.0 + q * q / 120.0 - q * q * q / 5040.0;
        (c, s)
    } else {
        let a = q.sqrt();
        (a.cos(), a.sin() / a)
    }
}

/// Geodesic `exp_y(t v)` on the unit sphere, renormalised.
pub fn sphere_exp_generic<T: Real>(y: &[T], v: &[T], t: T) -> Vec<T> {
    let tv: Vec<T> = v.iter().map(|&a| a * t).collect();
    let (c, s) = cos_sinc_sq(dot(&tv, &tv));
    let out: Vec<T> = y
        .iter()
        .zip(&tv)
        .map(|(&a, &b)| a * c + b * s)
        .collect();
    let n = dot(&out, &out).sqrt();
    out.into_iter().map(|a| a / n).collect()
}

pub fn sphere_exp(y: &[f64], v: &[f64], t: f64) -> Result<Vec<f64>> {
    if y.len() != v.len() {
        return Err(Error::Dimension("y and v must share the ambient dimension".into()));
    }
    check_on_sphere(y)?;
    let defect = dot(v, y).abs();
    if defect > TANGENCY_TOLERANCE * (1.0 + norm(v)) {
        return Err(Error::NotTangent {
            point: y.to_vec(),
            defect,
        });
    }
    if norm(v) * t.abs() <= 1e-14 {
        return Ok(y.to_vec());
    }
    Ok(sphere_exp_generic(y, v, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::lift;
    use crate::fd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn euclidean_christoffels_vanish() {
        let g = christoffels_at(&MetricChart::euclidean(3), &[0.3, -1.0, 2.0]).unwrap();
        assert!(g.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn conformal_plane_christoffels() {
        let chart = MetricChart::conformal(
            2,
            ConformalFactor::Exponential {
                slope: vec![1.0, 0.0],
                offset: 0.0,
            },
        );
        let x = [0.4, -0.7];
        let g = christoffels_at(&chart, &x).unwrap();
        // Γ^1_11 = 1, Γ^1_22 = −1, Γ^2_12 = Γ^2_21 = 1, everything else 0.
        let expected = [
            [[1.0, 0.0], [0.0, -1.0]],
            [[0.0, 1.0], [1.0, 0.0]],
        ];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(close(g[k][i][j], expected[k][i][j], 1e-14), "{k}{i}{j}");
                }
            }
        }
        // Finite differences of g through the textbook formula agree.
        let fdg = fd_christoffels(&chart, &x);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(close(g[k][i][j], fdg[k][i][j], 1e-8));
                }
            }
        }
    }

    fn fd_christoffels(chart: &MetricChart, x: &[f64]) -> Vec<Mat<f64>> {
        let m = chart.dim();
        let dg = fd::jacobian(|y| chart.metric(y).into_iter().flatten().collect(), x);
        let (ginv, _) = invert(&chart.metric(x));
        let d = |l: usize, a: usize, b: usize| dg[l][a * m + b];
        (0..m)
            .map(|k| {
                (0..m)
                    .map(|a| {
                        (0..m)
                            .map(|b| {
                                0.5 * (0..m)
                                    .map(|l| ginv[k][l] * (d(a, b, l) + d(b, a, l) - d(l, a, b)))
                                    .sum::<f64>()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn poincare_ball_christoffels_vanish_at_origin() {
        let chart = MetricChart::space_form(2, -1.0);
        let g = christoffels_at(&chart, &[0.0, 0.0]).unwrap();
        assert!(g.iter().flatten().flatten().all(|v| v.abs() < 1e-15));
        let fdg = fd_christoffels(&chart, &[0.0, 0.0]);
        assert!(fdg.iter().flatten().flatten().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn polar_chart_christoffels() {
        let g = christoffels_at(&MetricChart::Polar, &[2.0, 0.3]).unwrap();
        assert!(close(g[0][1][1], -2.0, 1e-14));
        assert!(close(g[1][0][1], 0.5, 1e-14));
        assert!(close(g[1][1][0], 0.5, 1e-14));
        assert!(close(g[0][0][0], 0.0, 1e-14));
    }

    #[test]
    fn volume_densities() {
        assert_eq!(volume_density(&MetricChart::euclidean(4), &[1.0; 4]).unwrap(), 1.0);
        let c = MetricChart::constant(vec![vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        assert!(close(volume_density(&c, &[0.1, 0.2]).unwrap(), 6.0, 1e-14));
        let conf = MetricChart::conformal(
            3,
            ConformalFactor::Exponential {
                slope: vec![0.5, -0.2, 0.1],
                offset: 0.3,
            },
        );
        let x = [0.2, 1.0, -0.4];
        let f = 0.5 * 0.2 - 0.2 + 0.1 * -0.4 + 0.3;
        assert!(close(volume_density(&conf, &x).unwrap(), (3.0 * f).exp(), 1e-14));
        // The general determinant route agrees with the shortcut.
        let (_, det) = invert(&conf.metric(&x));
        assert!(close(det.sqrt(), (3.0 * f).exp(), 1e-13));
    }

    #[test]
    fn constant_metric_is_symmetrised_and_checked() {
        let c = MetricChart::constant(vec![vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let g = c.metric::<f64>(&[0.0, 0.0]);
        assert_eq!(g[0][1], g[1][0]);
        assert!(matches!(
            MetricChart::constant(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(Error::DegenerateMetric { .. })
        ));
    }

    fn random_chart_points(rng: &mut ChaCha8Rng) -> Vec<(MetricChart, Vec<f64>)> {
        let mut out = Vec::new();
        for _ in 0..100 {
            let x2: Vec<f64> = (0..2).map(|_| rng.gen_range(0.5..2.0)).collect();
            let x3: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            out.push((MetricChart::Polar, x2.clone()));
            out.push((
                MetricChart::Perturbed {
                    dim: 3,
                    amplitude: 0.4,
                },
                x3.clone(),
            ));
            out.push((MetricChart::space_form(3, -1.0), x3.clone()));
            out.push((
                MetricChart::conformal(
                    2,
                    ConformalFactor::Exponential {
                        slope: vec![0.3, -0.8],
                        offset: 0.1,
                    },
                ),
                x2,
            ));
        }
        out
    }

    #[test]
    fn christoffel_symmetry_and_metric_compatibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (chart, x) in random_chart_points(&mut rng) {
            let m = chart.dim();
            let gamma = christoffels_at(&chart, &x).unwrap();
            let general = chart.christoffels_from_metric(&x).unwrap();
            let g = chart.metric(&x);
            let dg = fd::jacobian(|y| chart.metric(y).into_iter().flatten().collect(), &x);
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        assert!((gamma[k][i][j] - gamma[k][j][i]).abs() <= 1e-10);
                        assert!((gamma[k][i][j] - general[k][i][j]).abs() <= 1e-10);
                    }
                }
            }
            // ∂_k g_ij = g_lj Γ^l_ki + g_il Γ^l_kj
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let rhs: f64 = (0..m)
                            .map(|l| g[l][j] * gamma[l][k][i] + g[i][l] * gamma[l][k][j])
                            .sum();
                        assert!((dg[k][i * m + j] - rhs).abs() <= 1e-6, "{chart:?} {x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn curvature_examples() {
        let e = curvature_at(
            &TargetSpace::euclidean(2),
            &[0.3, 0.1],
            &[1.0, 2.0],
            &[0.0, 1.0],
            &[3.0, 0.0],
        )
        .unwrap();
        assert_eq!(e, vec![0.0, 0.0]);
        let s = curvature_at(
            &TargetSpace::sphere(2),
            &[0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0],
        )
        .unwrap();
        assert_eq!(s, vec![1.0, 0.0, 0.0]);
        let h = curvature_at(
            &TargetSpace::space_form(2, -1.0),
            &[0.0, 0.0],
            &[0.5, 0.0],
            &[0.0, 0.5],
            &[0.0, 0.5],
        )
        .unwrap();
        // h = 4δ at the origin, so the orthonormal triple is (e1/2, e2/2, e2/2).
        assert!(close(h[0], -0.5, 1e-15) && h[1] == 0.0);
        assert!(matches!(
            curvature_at(
                &TargetSpace::sphere(2),
                &[0.0, 0.0, 1.0],
                &[0.0, 0.0, 1.0],
                &[0.0, 1.0, 0.0],
                &[0.0, 1.0, 0.0],
            ),
            Err(Error::NotTangent { .. })
        ));
    }

    fn random_unit(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        v.into_iter().map(|a| a / n).collect()
    }

    fn random_tangent(rng: &mut ChaCha8Rng, y: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        conformal_field_generic(&v, y)
    }

    #[test]
    fn sphere_curvature_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..5 {
            let target = TargetSpace::sphere(n);
            for _ in 0..50 {
                let y = random_unit(&mut rng, n + 1);
                let v = random_tangent(&mut rng, &y);
                let xs: Vec<Vec<f64>> = (0..3).map(|_| random_tangent(&mut rng, &y)).collect();
                let lhs: f64 = xs
                    .iter()
                    .map(|xi| dot(&curvature_at(&target, &y, &v, xi, xi).unwrap(), &v))
                    .sum();
                let hs: f64 = xs.iter().map(|xi| dot(xi, xi)).sum();
                let rhs = hs * dot(&v, &v) - xs.iter().map(|xi| dot(xi, &v).powi(2)).sum::<f64>();
                assert!((lhs - rhs).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn conformal_field_examples() {
        assert_eq!(
            conformal_field(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        assert_eq!(
            conformal_field(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            conformal_field(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn conformal_field_is_a_concircular_field() {
        // Projected directional derivative of y ↦ α − ⟨α,y⟩y along X is −⟨α,y⟩X.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let y = random_unit(&mut rng, 4);
            let alpha: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = random_tangent(&mut rng, &y);
            let d = fd::derivative_vec(
                |t| {
                    let yt: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a + t * b).collect();
                    conformal_field_generic(&alpha, &yt)
                },
                0.0,
            );
            let c = dot(&d, &y);
            let lambda = dot(&alpha, &y);
            for i in 0..4 {
                let projected = d[i] - c * y[i];
                assert!((projected + lambda * x[i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn sphere_exp_examples() {
        let y = [1.0, 0.0, 0.0];
        assert_eq!(sphere_exp(&y, &[0.0, 0.3, 0.0], 0.0).unwrap(), y.to_vec());
        assert_eq!(sphere_exp(&y, &[0.0, 0.0, 0.0], 5.0).unwrap(), y.to_vec());
        let q = sphere_exp(&y, &[0.0, std::f64::consts::FRAC_PI_2, 0.0], 1.0).unwrap();
        assert!(close(q[0], 0.0, 1e-12) && close(q[1], 1.0, 1e-12) && close(q[2], 0.0, 1e-12));
    }

    #[test]
    fn sphere_exp_initial_velocity_through_zero() {
        // Smooth at v = 0: derivative in t at t = 0 equals v.
        let y = [0.0, 0.6, 0.8];
        let v = [1.0, 0.32, -0.24];
        let d = jet(
            |t: &[Dual<f64>]| {
                let yl = lift(&y);
                let vl = lift(&v);
                Ok(sphere_exp_generic(&yl, &vl, t[0]))
            },
            &[0.0],
        )
        .unwrap();
        for i in 0..3 {
            assert!(close(d.partials[0][i], v[i], 1e-14));
        }
    }
}
