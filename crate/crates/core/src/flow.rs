//! Gradient flow for p(·)-harmonic maps on node grids.
//!
//! The discrete energy sums, over grid cells, `u²^{p/2}/p · √det g · |cell|`
//! with `u²` built from edge differences and `p`, `g` frozen at the cell
//! centre. The discrete p(·)-tension at a node is minus the gradient of that
//! energy divided by the lumped nodal volume, projected onto the sphere's
//! tangent space for sphere targets. It is a second-order approximation of
//! `τ_p` and an exact descent direction of the discrete energy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, MetricChart, TargetSpace};
use crate::maps::{exponent_at, ExponentField, SmoothMap};
use crate::quadrature::{pairwise_sum, Domain};

/// Nodes of a box grid, with optional periodic axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cells per axis.
    pub cells: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl Grid {
    pub fn from_domain(domain: &Domain, periodic: Vec<bool>) -> Result<Self> {
        let (lower, upper, cells) = match domain {
            Domain::Box {
                lower,
                upper,
                resolution,
                shell: None,
            } => (lower.clone(), upper.clone(), resolution.clone()),
            _ => {
                return Err(Error::InvalidParams(
                    "flow grids need a box domain without a shell".into(),
                ))
            }
        };
        domain.validate()?;
        if periodic.len() != lower.len() {
            return Err(Error::Dimension("one periodic flag per axis".into()));
        }
        let g = Self {
            lower,
            upper,
            cells,
            periodic,
        };
        for (axis, n) in g.node_counts().into_iter().enumerate() {
            if n < 5 {
                return Err(Error::GridTooCoarse { axis, nodes: n });
            }
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|d| (self.upper[d] - self.lower[d]) / self.cells[d] as f64)
            .collect()
    }

    /// Distinct nodes per axis (a periodic axis does not repeat its end).
    pub fn node_counts(&self) -> Vec<usize> {
        self.cells
            .iter()
            .zip(&self.periodic)
            .map(|(n, p)| if *p { *n } else { n + 1 })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.node_counts().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flat(&self, idx: &[usize]) -> usize {
        let counts = self.node_counts();
        idx.iter().zip(&counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    fn unflat(&self, mut f: usize) -> Vec<usize> {
        let counts = self.node_counts();
        let mut idx = vec![0; counts.len()];
        for (d, n) in counts.iter().enumerate().rev() {
            idx[d] = f % n;
            f /= n;
        }
        idx
    }

    pub fn node(&self, f: usize) -> Vec<f64> {
        let h = self.spacing();
        self.unflat(f)
            .iter()
            .enumerate()
            .map(|(d, &i)| self.lower[d] + i as f64 * h[d])
            .collect()
    }

    pub fn is_boundary(&self, f: usize) -> bool {
        self.unflat(f)
            .iter()
            .enumerate()
            .any(|(d, &i)| !self.periodic[d] && (i == 0 || i == self.cells[d]))
    }

    /// Corner nodes of cell `c` (bit `d` of the corner index selects the
    /// upper node along axis `d`) and the cell centre.
    fn cell(&self, c: usize) -> (Vec<usize>, Vec<f64>) {
        let m = self.dim();
        let mut idx = vec![0; m];
        let mut f = c;
        for d in (0..m).rev() {
            idx[d] = f % self.cells[d];
            f /= self.cells[d];
        }
        let h = self.spacing();
        let counts = self.node_counts();
        let corners = (0..1usize << m)
            .map(|q| {
                let node: Vec<usize> = (0..m)
                    .map(|d| {
                        let i = idx[d] + ((q >> d) & 1);
                        if self.periodic[d] {
                            i % counts[d]
                        } else {
                            i
                        }
                    })
                    .collect();
                self.flat(&node)
            })
            .collect();
        let centre = (0..m)
            .map(|d| self.lower[d] + (idx[d] as f64 + 0.5) * h[d])
            .collect();
        (corners, centre)
    }

    fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }
}

/// Node values of a map on a grid, with fixed (Dirichlet) boundary nodes.
#[derive(Clone, Debug, Serialize)]
pub struct GridMap {
    pub grid: Grid,
    #[serde(skip)]
    pub chart: MetricChart,
    pub target: TargetSpace,
    pub values: Vec<Vec<f64>>,
    pub boundary: Vec<bool>,
}

impl GridMap {
    pub fn from_fn(
        chart: MetricChart,
        target: TargetSpace,
        grid: Grid,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        if chart.dim() != grid.dim() {
            return Err(Error::Dimension("chart and grid dimensions differ".into()));
        }
        if matches!(target, TargetSpace::SpaceForm { .. }) {
            return Err(Error::InvalidParams(
                "the flow supports Euclidean and sphere targets".into(),
            ));
        }
        let k = target.coords();
        let mut values = Vec::with_capacity(grid.len());
        let mut boundary = Vec::with_capacity(grid.len());
        for n in 0..grid.len() {
            let x = grid.node(n);
            chart.check_point(&x)?;
            let mut y = f(&x);
            if y.len() != k {
                return Err(Error::Dimension(format!("node values need {k} components")));
            }
            if target.is_sphere() {
                let r = dot(&y, &y).sqrt();
                y.iter_mut().for_each(|a| *a /= r);
            }
            values.push(y);
            boundary.push(grid.is_boundary(n));
        }
        Ok(Self {
            grid,
            chart,
            target,
            values,
            boundary,
        })
    }

    /// Samples a smooth map at the grid nodes.
    pub fn sample(map: &SmoothMap, grid: Grid) -> Result<Self> {
        for n in 0..grid.len() {
            map.check_point(&grid.node(n))?;
        }
        Self::from_fn(map.domain().clone(), map.target().clone(), grid, |x| map.eval(x))
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn cell_geometry(&self, p: &ExponentField, centre: &[f64]) -> Result<(f64, Vec<Vec<f64>>, f64)> {
        let pv = exponent_at(p, centre)?;
        let frame = self.chart.frame(centre)?;
        let vol = self.chart.volume_density(centre)? * self.grid.spacing().iter().product::<f64>();
        Ok((pv, frame.ginv, vol))
    }

    /// Edge differences `D_i^e` of a cell: `diffs[i][e]`, where `e` runs
    /// over the corners with bit `i` clear.
    fn edge_differences(&self, corners: &[usize]) -> Vec<Vec<Vec<f64>>> {
        let m = self.dim();
        let h = self.grid.spacing();
        (0..m)
            .map(|i| {
                (0..corners.len())
                    .filter(|q| (q >> i) & 1 == 0)
                    .map(|q| {
                        let a = &self.values[corners[q]];
                        let b = &self.values[corners[q | (1 << i)]];
                        b.iter().zip(a).map(|(x, y)| (x - y) / h[i]).collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn cell_u2(ginv: &[Vec<f64>], diffs: &[Vec<Vec<f64>>]) -> (f64, Vec<Vec<f64>>) {
        let m = diffs.len();
        let means: Vec<Vec<f64>> = diffs
            .iter()
            .map(|es| {
                let n = es.len() as f64;
                (0..es[0].len()).map(|c| es.iter().map(|e| e[c]).sum::<f64>() / n).collect()
            })
            .collect();
        let mut u2 = 0.0;
        for i in 0..m {
            let n = diffs[i].len() as f64;
            u2 += ginv[i][i] * diffs[i].iter().map(|e| dot(e, e)).sum::<f64>() / n;
            for j in 0..m {
                if j != i {
                    u2 += ginv[i][j] * dot(&means[i], &means[j]);
                }
            }
        }
        (u2, means)
    }

    /// The discrete p(·)-energy.
    pub fn energy(&self, p: &ExponentField) -> Result<f64> {
        let terms: Vec<f64> = (0..self.grid.cell_count())
            .into_par_iter()
            .map(|c| {
                let (corners, centre) = self.grid.cell(c);
                let (pv, ginv, vol) = self.cell_geometry(p, &centre)?;
                let (u2, _) = Self::cell_u2(&ginv, &self.edge_differences(&corners));
                Ok(u2.max(0.0).powf(0.5 * pv) / pv * vol)
            })
            .collect::<Result<_>>()?;
        Ok(pairwise_sum(&terms))
    }

    /// Gradient of [`GridMap::energy`] with respect to every node value,
    /// and the lumped nodal volumes.
    fn energy_gradient(&self, p: &ExponentField) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let m = self.dim();
        let k = self.target.coords();
        let h = self.grid.spacing();
        let contributions: Vec<(Vec<usize>, Vec<Vec<f64>>, f64)> = (0..self.grid.cell_count())
            .into_par_iter()
            .map(|c| {
                let (corners, centre) = self.grid.cell(c);
                let (pv, ginv, vol) = self.cell_geometry(p, &centre)?;
                let diffs = self.edge_differences(&corners);
                let (u2, means) = Self::cell_u2(&ginv, &diffs);
                let a = if pv == 2.0 {
                    0.5 * vol
                } else {
                    0.5 * u2.max(0.0).powf(0.5 * (pv - 2.0)) * vol
                };
                let n_e = diffs[0].len() as f64;
                let grads = (0..corners.len())
                    .map(|q| {
                        let mut g = vec![0.0; k];
                        for i in 0..m {
                            let s = if (q >> i) & 1 == 1 { 1.0 } else { -1.0 } / (h[i] * n_e);
                            let base = q & !(1 << i);
                            let e = (0..base).filter(|r| (r >> i) & 1 == 0).count();
                            for c in 0..k {
                                let mut t = 2.0 * ginv[i][i] * diffs[i][e][c];
                                for j in 0..m {
                                    if j != i {
                                        t += 2.0 * ginv[i][j] * means[j][c];
                                    }
                                }
                                g[c] += a * s * t;
                            }
                        }
                        g
                    })
                    .collect();
                Ok((corners, grads, vol / (1usize << m) as f64))
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![vec![0.0; k]; self.values.len()];
        let mut mass = vec![0.0; self.values.len()];
        for (corners, grads, share) in contributions {
            for (node, g) in corners.iter().zip(grads) {
                for c in 0..k {
                    grad[*node][c] += g[c];
                }
                mass[*node] += share;
            }
        }
        Ok((grad, mass))
    }

    /// Discrete `τ_p` at every node (zero at boundary nodes).
    pub fn p_tension(&self, p: &ExponentField) -> Result<Vec<Vec<f64>>> {
        Ok(self.tension_and_mass(p)?.0)
    }

    fn tension_and_mass(&self, p: &ExponentField) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let (grad, mass) = self.energy_gradient(p)?;
        let tau = grad
            .iter()
            .zip(&mass)
            .enumerate()
            .map(|(n, (g, w))| {
                if self.boundary[n] {
                    return vec![0.0; g.len()];
                }
                let t: Vec<f64> = g.iter().map(|a| -a / w).collect();
                if self.target.is_sphere() {
                    let y = &self.values[n];
                    let c = dot(&t, y);
                    t.iter().zip(y).map(|(a, b)| a - c * b).collect()
                } else {
                    t
                }
            })
            .collect();
        Ok((tau, mass))
    }

    /// `retract(φ + η τ)` on interior nodes.
    fn stepped(&self, tau: &[Vec<f64>], eta: f64) -> Self {
        let mut next = self.clone();
        for (n, v) in next.values.iter_mut().enumerate() {
            if self.boundary[n] {
                continue;
            }
            for (a, t) in v.iter_mut().zip(&tau[n]) {
                *a += eta * t;
            }
            if self.target.is_sphere() {
                let r = dot(v, v).sqrt();
                v.iter_mut().for_each(|a| *a /= r);
            }
        }
        next
    }
}

/// `discrete_p_tension` as a free function.
pub fn discrete_p_tension(gm: &GridMap, p: &ExponentField) -> Result<Vec<Vec<f64>>> {
    gm.p_tension(p)
}

fn sup_norm(tau: &[Vec<f64>]) -> f64 {
    tau.iter().map(|t| dot(t, t).sqrt()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Stop when the sup-norm of the discrete tension is at most this.
    pub tol: f64,
    pub max_iters: usize,
    pub armijo: f64,
    pub max_halvings: usize,
    /// Initial step; `0.5·Δx²` (smallest spacing) when absent.
    pub initial_step: Option<f64>,
    /// Consecutive accepted steps before the step doubles.
    pub grow_after: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 5000,
            armijo: 1e-4,
            max_halvings: 40,
            initial_step: None,
            grow_after: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowRecord {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub converged: bool,
}

impl FlowTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &FlowRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn iterations(&self) -> usize {
        self.accepted().count().saturating_sub(1)
    }
}

/// Steepest descent along the discrete tension with a backtracking
/// (Armijo) line search. The first record is the initial state.
pub fn flow_run(gm0: &GridMap, p: &ExponentField, config: &FlowConfig) -> Result<(GridMap, FlowTrace)> {
    let mut gm = gm0.clone();
    let mut energy = gm.energy(p)?;
    if !energy.is_finite() {
        return Err(Error::InvalidParams("initial energy is not finite".into()));
    }
    let hmin = gm.grid.spacing().into_iter().fold(f64::INFINITY, f64::min);
    let mut eta = config.initial_step.unwrap_or(0.5 * hmin * hmin);
    let mut trace = FlowTrace::default();
    let (mut tau, mut mass) = gm.tension_and_mass(p)?;
    let mut residual = sup_norm(&tau);
    trace.records.push(FlowRecord {
        iter: 0,
        energy,
        residual,
        step: 0.0,
        accepted: true,
    });
    let mut streak = 0;
    for iter in 1..=config.max_iters {
        if residual <= config.tol {
            trace.converged = true;
            return Ok((gm, trace));
        }
        let slope: f64 = tau.iter().zip(&mass).map(|(t, w)| w * dot(t, t)).sum();
        let mut halvings = 0;
        loop {
            let trial = gm.stepped(&tau, eta);
            let e = trial.energy(p)?;
            let accepted = e < energy && e <= energy - config.armijo * eta * slope;
            if accepted {
                gm = trial;
                energy = e;
                (tau, mass) = gm.tension_and_mass(p)?;
                residual = sup_norm(&tau);
                trace.records.push(FlowRecord {
                    iter,
                    energy,
                    residual,
                    step: eta,
                    accepted: true,
                });
                streak += 1;
                if streak >= config.grow_after {
                    eta *= 2.0;
                    streak = 0;
                }
                break;
            }
            trace.records.push(FlowRecord {
                iter,
                energy: e,
                residual,
                step: eta,
                accepted: false,
            });
            streak = 0;
            eta *= 0.5;
            halvings += 1;
            if halvings >= config.max_halvings {
                return Err(Error::Stagnation {
                    iteration: iter,
                    halvings,
                    trace: Box::new(trace),
                });
            }
        }
    }
    trace.converged = residual <= config.tol;
    Ok((gm, trace))
}
