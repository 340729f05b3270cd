//! Composite midpoint quadrature on compact domains and the two energies.
//!
//! Box domains keep only cells that lie entirely inside an optional radial
//! shell. Annular domains use the midpoint rule in polar (or cylindrical)
//! coordinates, which integrates the radial Jacobian exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MetricChart;
use crate::maps::{ExponentField, SmoothMap};
use crate::tension::{local, p_tension_trace_at};

/// Default absolute-plus-relative tolerance for integrals at the default
/// resolutions: `QUAD_TOL · (1 + |I|)`.
pub const QUAD_TOL: f64 = 1e-6;
pub const DEFAULT_RESOLUTION: usize = 32;
pub const DEFAULT_RESOLUTION_1D: usize = 256;

/// Radial exclusion applied to the cells of a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shell {
    /// `r_low < ‖x‖ < r_high`.
    Ball { r_low: f64, r_high: f64 },
    /// `r_low < √(x₁² + x₂²) < r_high`.
    Cylinder { r_low: f64, r_high: f64 },
}

impl Shell {
    fn bounds(&self) -> (f64, f64, usize) {
        match self {
            Shell::Ball { r_low, r_high } => (*r_low, *r_high, usize::MAX),
            Shell::Cylinder { r_low, r_high } => (*r_low, *r_high, 2),
        }
    }

    /// Whether the whole cell `[lo, hi]` lies inside the shell.
    fn keeps(&self, lo: &[f64], hi: &[f64]) -> bool {
        let (r_low, r_high, axes) = self.bounds();
        let axes = axes.min(lo.len());
        let (mut near, mut far) = (0.0, 0.0);
        for i in 0..axes {
            let d = if lo[i] > 0.0 {
                lo[i]
            } else if hi[i] < 0.0 {
                -hi[i]
            } else {
                0.0
            };
            near += d * d;
            far += lo[i].abs().max(hi[i].abs()).powi(2);
        }
        near.sqrt() > r_low && far.sqrt() < r_high
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        resolution: Vec<usize>,
        #[serde(default)]
        shell: Option<Shell>,
    },
    /// `{r_low < ρ < r_high}` in the plane, times `z ∈ [z₀, z₁]` when given.
    /// Resolution is `[N_r, N_θ]` or `[N_r, N_θ, N_z]`.
    Annular {
        r_low: f64,
        r_high: f64,
        #[serde(default)]
        z: Option<[f64; 2]>,
        resolution: Vec<usize>,
    },
}

/// Nodes and Lebesgue weights of the composite midpoint rule.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn volume(&self) -> f64 {
        pairwise_sum(&self.weights)
    }
}

fn multi_indices(res: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = res.iter().product();
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; res.len()];
        for (d, n) in res.iter().enumerate().rev() {
            idx[d] = flat % n;
            flat /= n;
        }
        idx
    })
}

impl Domain {
    pub fn cube(lower: f64, upper: f64, dim: usize, n: usize) -> Self {
        Domain::Box {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
            resolution: vec![n; dim],
            shell: None,
        }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Self {
        Domain::Box {
            lower,
            upper,
            resolution,
            shell: None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Annular { z, .. } => 2 + usize::from(z.is_some()),
        }
    }

    /// The same domain with every resolution multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut d = self.clone();
        match &mut d {
            Domain::Box { resolution, .. } | Domain::Annular { resolution, .. } => {
                resolution.iter_mut().for_each(|n| *n *= factor)
            }
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Box {
                lower,
                upper,
                resolution,
                ..
            } => {
                if lower.len() != upper.len() || lower.len() != resolution.len() || lower.is_empty() {
                    return Err(Error::Dimension("box bounds and resolution must share a length".into()));
                }
                if lower.iter().zip(upper).any(|(a, b)| !(b > a)) {
                    return Err(Error::InvalidParams("box needs upper > lower on every axis".into()));
                }
            }
            Domain::Annular {
                r_low,
                r_high,
                z,
                resolution,
            } => {
                if !(*r_low >= 0.0 && r_high > r_low) {
                    return Err(Error::InvalidParams("annulus needs 0 ≤ r_low < r_high".into()));
                }
                if let Some([a, b]) = z {
                    if !(b > a) {
                        return Err(Error::InvalidParams("annulus needs z₁ > z₀".into()));
                    }
                }
                if resolution.len() != self.dim() {
                    return Err(Error::Dimension(format!(
                        "annular domain needs {} resolutions",
                        self.dim()
                    )));
                }
            }
        }
        let res = match self {
            Domain::Box { resolution, .. } | Domain::Annular { resolution, .. } => resolution,
        };
        if res.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParams("resolutions must be positive".into()));
        }
        Ok(())
    }

    /// Box bounds and cell widths (box domains only).
    pub fn box_cells(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        match self {
            Domain::Box {
                lower,
                upper,
                resolution,
                ..
            } => {
                let h = lower
                    .iter()
                    .zip(upper)
                    .zip(resolution)
                    .map(|((a, b), n)| (b - a) / *n as f64)
                    .collect();
                Some((lower.clone(), upper.clone(), h))
            }
            Domain::Annular { .. } => None,
        }
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        self.validate()?;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        match self {
            Domain::Box {
                lower,
                resolution,
                shell,
                ..
            } => {
                let (_, _, h) = self.box_cells().expect("box");
                let vol: f64 = h.iter().product();
                for idx in multi_indices(resolution) {
                    let lo: Vec<f64> = idx.iter().enumerate().map(|(d, &i)| lower[d] + i as f64 * h[d]).collect();
                    let hi: Vec<f64> = lo.iter().zip(&h).map(|(a, w)| a + w).collect();
                    if let Some(s) = shell {
                        if !s.keeps(&lo, &hi) {
                            continue;
                        }
                    }
                    nodes.push(lo.iter().zip(&h).map(|(a, w)| a + 0.5 * w).collect());
                    weights.push(vol);
                }
            }
            Domain::Annular {
                r_low,
                r_high,
                z,
                resolution,
            } => {
                let dr = (r_high - r_low) / resolution[0] as f64;
                let dt = std::f64::consts::TAU / resolution[1] as f64;
                let dz = z.map(|[a, b]| (b - a) / resolution[2] as f64).unwrap_or(1.0);
                for idx in multi_indices(resolution) {
                    let r = r_low + (idx[0] as f64 + 0.5) * dr;
                    let t = (idx[1] as f64 + 0.5) * dt;
                    let mut x = vec![r * t.cos(), r * t.sin()];
                    if let Some([a, _]) = z {
                        x.push(a + (idx[2] as f64 + 0.5) * dz);
                    }
                    nodes.push(x);
                    weights.push(r * dr * dt * dz);
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyDomain);
        }
        Ok(QuadratureRule { nodes, weights })
    }
}

/// Pairwise (tree) summation in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Integrates a vector-valued `f` of length `len` against `v_g`.
pub fn integrate_vec<F>(f: F, len: usize, domain: &Domain, chart: &MetricChart) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if chart.dim() != domain.dim() {
        return Err(Error::Dimension(format!(
            "chart has dimension {} but the domain has {}",
            chart.dim(),
            domain.dim()
        )));
    }
    let rule = domain.rule()?;
    let terms: Vec<Vec<f64>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(x, w)| {
            let vals = f(x)?;
            if vals.iter().all(|&v| v == 0.0) {
                return Ok(vals);
            }
            let dv = chart.volume_density(x)? * w;
            Ok(vals.into_iter().map(|v| v * dv).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..len)
        .map(|c| {
            let col: Vec<f64> = terms.iter().map(|t| t[c]).collect();
            pairwise_sum(&col)
        })
        .collect())
}

/// `Σ_k f(x_k) · √det g(x_k) · |cell_k|`.
pub fn integrate<F>(f: F, domain: &Domain, chart: &MetricChart) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    Ok(integrate_vec(|x| Ok(vec![f(x)?]), 1, domain, chart)?[0])
}

/// `E_p(φ; D) = ∫_D |dφ|^{p(x)} / p(x) v_g`.
pub fn energy_p(map: &SmoothMap, p: &ExponentField, domain: &Domain) -> Result<f64> {
    integrate(
        |x| {
            map.check_point(x)?;
            let pv = crate::maps::exponent_at(p, x)?;
            let l = local(map, x)?;
            Ok(l.u2.max(0.0).powf(0.5 * pv) / pv)
        },
        domain,
        map.domain(),
    )
}

/// `E_{2,p}(φ; D) = ½ ∫_D |τ_p(φ)|² v_g`.
pub fn bienergy_p(map: &SmoothMap, p: &ExponentField, domain: &Domain) -> Result<f64> {
    integrate(
        |x| {
            let t = p_tension_trace_at(map, p, x)?;
            let y = map.eval(x);
            Ok(0.5 * map.target().frame(&y).inner(&t, &t))
        },
        domain,
        map.domain(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConformalFactor;
    use crate::maps::{catalog_build, CatalogParams};

    #[test]
    fn unit_box_volume() {
        let d = Domain::cube(0.0, 1.0, 2, 32);
        let v = integrate(|_| Ok(1.0), &d, &MetricChart::euclidean(2)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let flat = MetricChart::conformal(
            2,
            ConformalFactor::Exponential {
                slope: vec![0.0, 0.0],
                offset: 0.0,
            },
        );
        let v = integrate(|_| Ok(1.0), &d, &flat).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn midpoint_error_bound() {
        let d = Domain::cube(0.0, 1.0, 1, 64);
        let v = integrate(|x| Ok(x[0] * x[0]), &d, &MetricChart::euclidean(1)).unwrap();
        assert!((v - 1.0 / 3.0).abs() <= 2.0 / (24.0 * 64.0 * 64.0));
        // The midpoint error for x² is exactly −h²/12 on [0,1].
        assert!((v - 1.0 / 3.0 + 1.0 / (12.0 * 64.0 * 64.0)).abs() < 1e-15);
    }

    #[test]
    fn shell_drops_cells_and_annulus_is_exact_in_r() {
        let d = Domain::Box {
            lower: vec![-4.0, -4.0],
            upper: vec![4.0, 4.0],
            resolution: vec![64, 64],
            shell: Some(Shell::Ball { r_low: 2.0, r_high: 4.0 }),
        };
        let rule = d.rule().unwrap();
        assert!(rule.nodes.iter().all(|x| {
            let r = x[0].hypot(x[1]);
            r > 2.0 && r < 4.0
        }));
        assert!(rule.volume() < 12.0 * std::f64::consts::PI);
        let a = Domain::Annular {
            r_low: 2.0,
            r_high: 3.0,
            z: Some([0.0, 1.0]),
            resolution: vec![4, 8, 2],
        };
        let v = integrate(|_| Ok(1.0), &a, &MetricChart::euclidean(3)).unwrap();
        assert!((v - 5.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn empty_domain_is_an_error() {
        let d = Domain::Box {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            resolution: vec![4, 4],
            shell: Some(Shell::Ball { r_low: 5.0, r_high: 6.0 }),
        };
        assert!(matches!(d.rule(), Err(Error::EmptyDomain)));
    }

    #[test]
    fn identity_energies() {
        let two = catalog_build("identity", &CatalogParams { n: Some(2), p: Some(4.0), ..Default::default() }).unwrap();
        let e = energy_p(&two.map, &two.exponent, &Domain::cube(0.0, 1.0, 2, 32)).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        let three = catalog_build("identity", &CatalogParams { n: Some(3), ..Default::default() }).unwrap();
        let e = energy_p(&three.map, &three.exponent, &Domain::cube(0.0, 1.0, 3, 8)).unwrap();
        assert!((e - 1.5).abs() < 1e-12);
        let b = bienergy_p(&three.map, &three.exponent, &Domain::cube(0.0, 1.0, 3, 4)).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn reduction_is_deterministic_across_pools() {
        let d = Domain::cube(0.0, 1.0, 2, 48);
        let f = |x: &[f64]| Ok((x[0] * 3.0).sin() * (x[1] + 0.1).ln());
        let a = integrate(f, &d, &MetricChart::euclidean(2)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| integrate(f, &d, &MetricChart::euclidean(2)).unwrap());
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
