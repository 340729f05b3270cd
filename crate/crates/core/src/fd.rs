//! Central finite differences on plain `f64` functions.
//!
//! This is the independent oracle for the dual-number backend: nothing here
//! touches [`crate::dual`]. First derivatives use the step
//! `FIRST_STEP·max(1,|x|)`, second derivatives `SECOND_STEP·max(1,|x|)`.

pub const FIRST_STEP: f64 = 6e-6;
pub const SECOND_STEP: f64 = 2e-4;

fn step(base: f64, x: f64) -> f64 {
    base * x.abs().max(1.0)
}

pub fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = step(FIRST_STEP, x);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn derivative_vec(f: impl Fn(f64) -> Vec<f64>, x: f64) -> Vec<f64> {
    let h = step(FIRST_STEP, x);
    let (a, b) = (f(x + h), f(x - h));
    a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect()
}

/// Central difference with an explicit step.
pub fn derivative_vec_with(f: impl Fn(f64) -> Vec<f64>, x: f64, h: f64) -> Vec<f64> {
    let (a, b) = (f(x + h), f(x - h));
    a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect()
}

/// `jac[i][c] = ∂_i f^c`.
pub fn jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<Vec<f64>> {
    jacobian_with(f, x, FIRST_STEP)
}

pub fn jacobian_with(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], base: f64) -> Vec<Vec<f64>> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(base, x[i]);
            y[i] = x[i] + h;
            let a = f(&y);
            y[i] = x[i] - h;
            let b = f(&y);
            y[i] = x[i];
            a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect()
        })
        .collect()
}

pub fn gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    jacobian(|y| vec![f(y)], x)
        .into_iter()
        .map(|r| r[0])
        .collect()
}

/// `hess[i][j][c] = ∂_i∂_j f^c` with the second-order step.
pub fn hessian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let m = x.len();
    let f0 = f(x);
    let mut y = x.to_vec();
    let mut out = vec![vec![Vec::new(); m]; m];
    for i in 0..m {
        let hi = step(SECOND_STEP, x[i]);
        y[i] = x[i] + hi;
        let p = f(&y);
        y[i] = x[i] - hi;
        let q = f(&y);
        y[i] = x[i];
        out[i][i] = (0..f0.len())
            .map(|c| (p[c] - 2.0 * f0[c] + q[c]) / (hi * hi))
            .collect();
        for j in 0..i {
            let hj = step(SECOND_STEP, x[j]);
            let mut eval = |si: f64, sj: f64| {
                y[i] = x[i] + si * hi;
                y[j] = x[j] + sj * hj;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let (pp, pm, mp, mm) = (eval(1.0, 1.0), eval(1.0, -1.0), eval(-1.0, 1.0), eval(-1.0, -1.0));
            let v: Vec<f64> = (0..f0.len())
                .map(|c| (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * hi * hj))
                .collect();
            out[i][j] = v.clone();
            out[j][i] = v;
        }
    }
    out
}
