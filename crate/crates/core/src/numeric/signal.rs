use std::collections::BTreeMap;

use crate::symbolic::{Expr, SymbolId};

use super::NumericError;

/// Finite-difference weights for the `order`-th derivative at `x0` from
/// samples at `nodes` (Fornberg's recursion).
pub fn fornberg_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Derivative of the given order at every sample of a uniform grid.
/// Central stencils in the interior, one-sided near the ends; the stencil
/// width is `order + 4` (fourth-order accurate for `order ≤ 2`).
pub fn fd_derivatives(samples: &[f64], dt: f64, order: usize) -> Result<Vec<f64>, NumericError> {
    if order == 0 {
        return Ok(samples.to_vec());
    }
    let width = order + 4 + (order + 4 + 1) % 2;
    if samples.len() < width {
        return Err(NumericError::Invalid(format!(
            "need at least {width} samples for derivative order {order}, got {}",
            samples.len()
        )));
    }
    let half = width / 2;
    let last = samples.len() - 1;
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let out = (0..samples.len())
        .map(|i| {
            let start = i.saturating_sub(half).min(last + 1 - width);
            let rel = i - start;
            let w = cache.entry(rel).or_insert_with(|| {
                let nodes: Vec<f64> = (0..width).map(|k| k as f64 - rel as f64).collect();
                fornberg_weights(0.0, &nodes, order)
            });
            w.iter().zip(&samples[start..start + width]).map(|(w, s)| w * s).sum::<f64>() / dt.powi(order as i32)
        })
        .collect();
    Ok(out)
}

/// Flat-output signal, given either as closed-form expressions in a time
/// symbol or as uniformly sampled values.
#[derive(Clone, Debug)]
pub enum FlatSignal {
    Symbolic { time: SymbolId, components: Vec<Expr> },
    Sampled { t0: f64, dt: f64, values: Vec<Vec<f64>> },
}

impl FlatSignal {
    pub fn n_components(&self) -> usize {
        match self {
            FlatSignal::Symbolic { components, .. } => components.len(),
            FlatSignal::Sampled { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    /// `derivative(j, d, t)` for closed-form signals.
    pub fn eval_derivative(&self, j: usize, order: usize, t: f64) -> Result<f64, NumericError> {
        match self {
            FlatSignal::Symbolic { time, components } => {
                let mut e = components[j].clone();
                for _ in 0..order {
                    e = e.diff(*time).map_err(|err| NumericError::Invalid(err.to_string()))?;
                }
                let b = BTreeMap::from([(*time, t)]);
                Ok(e.evaluate_float(&b)?)
            }
            FlatSignal::Sampled { .. } => Err(NumericError::Invalid("sampled signal has no closed form".into())),
        }
    }

    /// Per-grid-point jets `[component][order]` up to `max_order` on the grid
    /// `t0 + i·dt`, `i < len`.
    pub fn jets(&self, max_order: usize, grid: Option<(f64, f64, usize)>) -> Result<Vec<Vec<Vec<f64>>>, NumericError> {
        match self {
            FlatSignal::Symbolic { time, components } => {
                let (t0, dt, len) = grid.ok_or(NumericError::Invalid("closed-form signal needs a grid".into()))?;
                let mut derivs: Vec<Vec<_>> = Vec::new();
                for c in components {
                    let mut row = vec![c.clone()];
                    for d in 0..max_order {
                        let next = row[d].diff(*time).map_err(|e| NumericError::Invalid(e.to_string()))?;
                        row.push(next);
                    }
                    derivs.push(row.iter().map(Expr::compile).collect::<Vec<_>>());
                }
                let mut buf = vec![0.0; time.index() + 1];
                (0..len)
                    .map(|i| {
                        buf[time.index()] = t0 + i as f64 * dt;
                        derivs
                            .iter()
                            .map(|row| row.iter().map(|p| p.eval(&buf).map_err(NumericError::from)).collect())
                            .collect()
                    })
                    .collect()
            }
            FlatSignal::Sampled { values, dt, .. } => {
                let n = self.n_components();
                let mut cols = Vec::with_capacity(n);
                for j in 0..n {
                    let series: Vec<f64> = values.iter().map(|v| v[j]).collect();
                    let per_order = (0..=max_order)
                        .map(|d| fd_derivatives(&series, *dt, d))
                        .collect::<Result<Vec<_>, _>>()?;
                    cols.push(per_order);
                }
                Ok((0..values.len()).map(|i| cols.iter().map(|c| c.iter().map(|d| d[i]).collect()).collect()).collect())
            }
        }
    }
}
