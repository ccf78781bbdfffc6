use nalgebra::DMatrix;

use crate::linalg::solve_f64;

use super::NumericError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50, max_halvings: 8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton on `F(x) = 0` with step halving on residual increase.
pub fn newton(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>, NumericError>,
    jac: &dyn Fn(&[f64]) -> Result<DMatrix<f64>, NumericError>,
    x0: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonResult, NumericError> {
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut res = norm(&r);
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(NewtonResult { x, iterations: it, residual: res });
        }
        let j = jac(&x)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = solve_f64(&j, &neg).ok_or(NumericError::SingularJacobian)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(x, s)| x + lambda * s).collect();
            if let Ok(rt) = f(&trial) {
                let rn = norm(&rt);
                if rn.is_finite() && rn < res {
                    accepted = Some((trial, rt, rn));
                    break;
                }
            }
            lambda /= 2.0;
        }
        let Some((xn, rn, resn)) = accepted else {
            return Err(NumericError::NewtonDiverged { iterations: it + 1, residual: res });
        };
        x = xn;
        r = rn;
        res = resn;
    }
    if res <= opts.tol {
        Ok(NewtonResult { x, iterations: opts.max_iter, residual: res })
    } else {
        Err(NumericError::NewtonDiverged { iterations: opts.max_iter, residual: res })
    }
}
