use std::collections::BTreeMap;

use crate::geometry::VectorField;
use crate::linalg::rank_f64;
use crate::symbolic::SymbolId;

use super::ode::{flow, CompiledField};
use super::NumericError;

const FLOW_STEP: f64 = 1e-3;
const MAX_FLIGHT: f64 = 50.0;

/// First integrals of one vector field near a base point: the coordinates
/// of the point where the flow through `x` meets a transversal hyperplane.
#[derive(Clone, Debug)]
pub struct FlowBox {
    field: CompiledField,
    buf: Vec<f64>,
    base: Vec<f64>,
    normal: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Gram–Schmidt of the standard basis against `normal`, keeping the `n-1`
/// coordinate directions least aligned with it.
fn complement(normal: &[f64]) -> Vec<Vec<f64>> {
    let n = normal.len();
    let mut skip: Vec<usize> = (0..n).collect();
    skip.sort_by(|&a, &b| normal[b].abs().total_cmp(&normal[a].abs()));
    let dropped = skip[0];
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in (0..n).filter(|&i| i != dropped) {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let p = dot(&e, normal);
        e.iter_mut().zip(normal).for_each(|(x, nv)| *x -= p * nv);
        for b in &out {
            let p = dot(&e, b);
            e.iter_mut().zip(b).for_each(|(x, bv)| *x -= p * bv);
        }
        normalize(&mut e);
        out.push(e);
    }
    out
}

/// Builds flow-box integrals of `f` around `base` (frame coordinates plus
/// any parameter bindings). The transversal defaults to the hyperplane
/// through the base point orthogonal to `f(base)`; `transversal` may give
/// `n-1` spanning directions instead.
pub fn flow_box_integrals(
    f: &VectorField,
    base: &BTreeMap<SymbolId, f64>,
    transversal: Option<&[Vec<f64>]>,
) -> Result<FlowBox, NumericError> {
    let field = CompiledField::new(f);
    let n = field.dim();
    let width = field.width().max(base.keys().map(|k| k.index() + 1).max().unwrap_or(0));
    let mut buf = vec![0.0; width];
    for (k, v) in base {
        buf[k.index()] = *v;
    }
    let p: Vec<f64> = f
        .frame()
        .coords()
        .iter()
        .map(|c| base.get(c).copied().ok_or(NumericError::Invalid(format!("coordinate {c} unbound"))))
        .collect::<Result<_, _>>()?;
    let mut v = field.eval_at(&mut buf, &p)?;
    if normalize(&mut v) < 1e-12 {
        return Err(NumericError::Invalid("field vanishes at the base point".into()));
    }
    let (normal, basis) = match transversal {
        None => {
            let basis = complement(&v);
            (v, basis)
        }
        Some(dirs) => {
            if dirs.len() + 1 != n || dirs.iter().any(|d| d.len() != n) {
                return Err(NumericError::Invalid(format!("transversal needs {} directions of length {n}", n - 1)));
            }
            let mut with_f = dirs.to_vec();
            with_f.push(v.clone());
            if rank_f64(&with_f, 1e-9) < n {
                return Err(NumericError::Invalid("field is tangent to the transversal".into()));
            }
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for d in dirs {
                let mut e = d.clone();
                for b in &basis {
                    let p = dot(&e, b);
                    e.iter_mut().zip(b).for_each(|(x, bv)| *x -= p * bv);
                }
                normalize(&mut e);
                basis.push(e);
            }
            let mut normal = v.clone();
            for b in &basis {
                let p = dot(&normal, b);
                normal.iter_mut().zip(b).for_each(|(x, bv)| *x -= p * bv);
            }
            normalize(&mut normal);
            (normal, basis)
        }
    };
    Ok(FlowBox { field, buf, base: p, normal, basis })
}

impl FlowBox {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn offset(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.base).zip(&self.normal).map(|((y, p), n)| (y - p) * n).sum()
    }

    /// Time `s` with `Φ_s(x)` on the transversal, and the hit point.
    fn hit(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), NumericError> {
        let g0 = self.offset(x);
        if g0.abs() < 1e-14 {
            return Ok((0.0, x.to_vec()));
        }
        let fx = self.field.eval_at(&mut self.buf, x)?;
        let rate = dot(&fx, &self.normal);
        let guess = if rate.abs() > 1e-12 { -g0 / rate } else { -g0.signum() * 0.1 };
        let eval = |s: f64, this: &mut Self| -> Result<(f64, Vec<f64>), NumericError> {
            let y = flow(&this.field, &mut this.buf, x, s, FLOW_STEP)?;
            Ok((this.offset(&y), y))
        };
        let (mut a, mut ga) = (0.0, g0);
        let mut b = guess;
        let (mut gb, mut yb) = eval(b, self)?;
        let mut grow = 0;
        while ga.signum() == gb.signum() && gb.abs() > 1e-14 {
            grow += 1;
            if grow > 40 || b.abs() > MAX_FLIGHT {
                return Err(NumericError::NoTransversalHit);
            }
            a = b;
            ga = gb;
            b *= 2.0;
            (gb, yb) = eval(b, self)?;
        }
        for _ in 0..100 {
            if gb.abs() < 1e-14 || (b - a).abs() < 1e-15 {
                break;
            }
            let c = b - gb * (b - a) / (gb - ga);
            let (gc, yc) = eval(c, self)?;
            if gc.signum() != gb.signum() {
                a = b;
                ga = gb;
            } else {
                ga /= 2.0;
            }
            b = c;
            gb = gc;
            yb = yc;
        }
        Ok((b, yb))
    }

    /// Values of the `n-1` integrals at `x`.
    pub fn eval(&mut self, x: &[f64]) -> Result<Vec<f64>, NumericError> {
        let (_, y) = self.hit(x)?;
        Ok(self.basis.iter().map(|b| dot(&y, b)).collect())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::Frame;
    use crate::symbolic::{parse_expr, SymbolTable};

    #[test]
    fn straight_flow() {
        let t = Arc::new(SymbolTable::free(&["x1", "x2", "x3"]).unwrap());
        let frame = Frame::new(vec![SymbolId(0), SymbolId(1), SymbolId(2)]);
        let p = |s: &str| parse_expr(s, &t).unwrap();
        let f = VectorField::new(frame, vec![p("0"), p("0"), p("1")]).unwrap();
        let base = BTreeMap::from([(SymbolId(0), 1.0), (SymbolId(1), 1.0), (SymbolId(2), 0.0)]);
        let mut fb = flow_box_integrals(&f, &base, None).unwrap();
        let h = fb.eval(&[0.3, -0.2, 0.7]).unwrap();
        assert!((h[0] - 0.3).abs() < 1e-10 && (h[1] + 0.2).abs() < 1e-10, "{h:?}");
    }

    #[test]
    fn rotation_invariant() {
        let t = Arc::new(SymbolTable::free(&["x", "y"]).unwrap());
        let frame = Frame::new(vec![SymbolId(0), SymbolId(1)]);
        let p = |s: &str| parse_expr(s, &t).unwrap();
        let f = VectorField::new(frame, vec![p("-y"), p("x")]).unwrap();
        let base = BTreeMap::from([(SymbolId(0), 1.0), (SymbolId(1), 0.0)]);
        let mut fb = flow_box_integrals(&f, &base, None).unwrap();
        let a = fb.eval(&[0.9, 0.1]).unwrap()[0];
        let r = (0.81f64 + 0.01).sqrt();
        assert!((a - r).abs() < 1e-9, "{a} vs {r}");
        let b = fb.eval(&[r * 0.3f64.cos(), -r * 0.3f64.sin()]).unwrap()[0];
        assert!((a - b).abs() < 1e-9);
    }
}
