//! Polynomial-ansatz search for functions annihilated by a set of vector fields.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::geometry::{lie_derivative, FieldMatrix, Frame, VectorField};
use crate::linalg;
use crate::sampling::{Point, Sampler};
use crate::symbolic::{EvalError, Expr, Rational, SymbolId};

/// Monomials of total degree `1..=degree` in `vars`, highest degree first.
pub fn monomials(vars: &[SymbolId], degree: u32) -> Vec<Expr> {
    let mut out = Vec::new();
    for d in (1..=degree).rev() {
        let mut exps = Vec::new();
        exponents(vars.len(), d, &mut vec![0; vars.len()], 0, &mut exps);
        for e in exps {
            let mut m = Expr::one();
            for (v, k) in vars.iter().zip(&e) {
                if *k > 0 {
                    m = &m * &Expr::var(*v).powi(*k as i32).expect("positive power");
                }
            }
            out.push(m);
        }
    }
    out
}

fn exponents(n: usize, left: u32, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == n {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        exponents(n, left - k, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

/// Polynomials in `vars` of degree at most `degree` with `L_f p = 0` for every
/// `f` in `fields`, as a reduced basis ordered by degree. Linear constraints
/// come from exact evaluation at sample points; every returned polynomial is
/// then checked symbolically.
pub fn annihilators(fields: &[VectorField], vars: &[SymbolId], degree: u32, sampler: &Sampler) -> Result<Vec<Expr>> {
    if fields.is_empty() || vars.is_empty() {
        return Ok(Vec::new());
    }
    let monos = monomials(vars, degree);
    let derived: Vec<Vec<Expr>> = fields
        .iter()
        .map(|f| monos.iter().map(|m| lie_derivative(f, m)).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<_, _>>()?;
    let ids: Vec<SymbolId> = derived
        .iter()
        .flatten()
        .flat_map(Expr::free_symbols)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let needed = monos.len() + 4;
    for pt in sampler.points(&ids, &Point::new()) {
        if rows.len() >= needed * fields.len() {
            break;
        }
        for row in &derived {
            match row.iter().map(|e| e.evaluate(&pt)).collect::<std::result::Result<Vec<_>, _>>() {
                Ok(r) => rows.push(r),
                Err(EvalError::Transcendental(f)) => {
                    return Err(Error::Unsupported(format!("ansatz needs exact evaluation, found {}", f.name())))
                }
                Err(_) => {}
            }
        }
    }
    let keep = linalg::independent_rows_mod_p(&rows);
    let rows: Vec<Vec<Rational>> = keep.into_iter().map(|i| rows[i].clone()).collect();
    let mut basis = linalg::nullspace(&rows, monos.len());
    if basis.is_empty() {
        return Ok(Vec::new());
    }
    linalg::rref(&mut basis);
    let mut out = Vec::new();
    for v in basis.iter().filter(|v| v.iter().any(|c| !c.is_zero())) {
        let v = linalg::primitive(v);
        let mut p = Expr::zero();
        for (c, m) in v.iter().zip(&monos) {
            if !c.is_zero() {
                p = &p + &(&Expr::rational(c.clone()) * m);
            }
        }
        let annihilated = fields.iter().all(|f| {
            lie_derivative(f, &p).is_ok_and(|l| l.is_zero() || sampler.is_zero(&l))
        });
        if annihilated {
            out.push(p);
        }
    }
    out.sort_by_key(|p| (p.total_degree().unwrap_or(u32::MAX), p.complexity()));
    Ok(out)
}

/// Gradient of `h` over `frame`.
pub fn gradient(frame: &Frame, h: &Expr) -> Result<VectorField> {
    let comps = frame.coords().iter().map(|c| h.diff(*c)).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(VectorField::new(frame.clone(), comps)?)
}

/// Greedy selection (in order) of functions whose differentials are
/// independent, with `point` coordinates fixed and the rest sampled.
pub fn select_independent(frame: &Frame, funcs: &[Expr], want: usize, point: &Point, sampler: &Sampler) -> Result<Vec<Expr>> {
    let mut chosen: Vec<VectorField> = Vec::new();
    let mut out = Vec::new();
    for f in funcs {
        if out.len() == want {
            break;
        }
        let mut trial = chosen.clone();
        trial.push(gradient(frame, f)?);
        let r = FieldMatrix::new(frame.clone(), trial.clone())?.generic_rank_with(sampler, point)?;
        if r > chosen.len() {
            chosen = trial;
            out.push(f.clone());
        }
    }
    Ok(out)
}
