//! Exact and floating-point linear algebra on small dense matrices.
//!
//! Matrices are row-major `Vec<Vec<_>>`. Exact rank uses fraction-free
//! (Bareiss) elimination on integer rows obtained by clearing denominators.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::sampling::Point;
use crate::symbolic::{EvalError, Expr, RatFun, Rational, SymbolicError};

/// Relative singular-value cutoff used for float ranks.
const FLOAT_TOL: f64 = 1e-9;

fn integer_row(row: &[Rational]) -> Vec<BigInt> {
    let lcm = row.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    row.iter().map(|c| c.numer() * (&lcm / c.denom())).collect()
}

/// Rank over ℚ by fraction-free Gaussian elimination.
pub fn rank(rows: &[Vec<Rational>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows.iter().map(|r| integer_row(r)).collect();
    bareiss_rank(&mut m)
}

fn bareiss_rank(m: &mut [Vec<BigInt>]) -> usize {
    let n_rows = m.len();
    let n_cols = m.first().map_or(0, Vec::len);
    let mut prev = BigInt::one();
    let mut r = 0;
    for c in 0..n_cols {
        if r == n_rows {
            break;
        }
        let Some(p) = (r..n_rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        for i in r + 1..n_rows {
            for j in c + 1..n_cols {
                let v = (&m[r][c] * &m[i][j] - &m[i][c] * &m[r][j]) / &prev;
                m[i][j] = v;
            }
            m[i][c] = BigInt::zero();
        }
        prev = m[r][c].clone();
        r += 1;
    }
    r
}

/// Exact determinant of a square rational matrix.
pub fn det(rows: &[Vec<Rational>]) -> Rational {
    let n = rows.len();
    let mut a: Vec<Vec<Rational>> = rows.to_vec();
    let mut d = Rational::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else {
            return Rational::zero();
        };
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        let piv = a[c][c].clone();
        d *= &piv;
        for i in c + 1..n {
            if a[i][c].is_zero() {
                continue;
            }
            let f = &a[i][c] / &piv;
            for j in c..n {
                let v = &a[c][j] * &f;
                a[i][j] -= v;
            }
        }
    }
    d
}

/// Reduced row echelon form; returns the pivot columns.
pub fn rref(rows: &mut [Vec<Rational>]) -> Vec<usize> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    let mut m: Vec<Vec<BigInt>> = rows.iter().map(|r| integer_row(r)).collect();
    let mut pivots = Vec::new();
    let mut prev = BigInt::one();
    let mut r = 0;
    for c in 0..n_cols {
        if r == n_rows {
            break;
        }
        let Some(p) = (r..n_rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let (head, tail) = m.split_at_mut(r);
        let (pivot_row, rest) = tail.split_first_mut().expect("pivot row");
        let piv = pivot_row[c].clone();
        for row in head.iter_mut().chain(rest.iter_mut()) {
            let f = row[c].clone();
            for j in 0..n_cols {
                let v = &piv * &row[j] - &f * &pivot_row[j];
                row[j] = v / &prev;
            }
        }
        prev = piv;
        pivots.push(c);
        r += 1;
    }
    for (i, row) in rows.iter_mut().enumerate() {
        match pivots.get(i) {
            Some(&c) => {
                let d = m[i][c].clone();
                for (v, x) in row.iter_mut().zip(&m[i]) {
                    *v = Rational::new(x.clone(), d.clone());
                }
            }
            None => row.iter_mut().for_each(|v| *v = Rational::zero()),
        }
    }
    pivots
}

/// Basis of the right nullspace `{v | A v = 0}`.
pub fn nullspace(rows: &[Vec<Rational>], n_cols: usize) -> Vec<Vec<Rational>> {
    let mut a = rows.to_vec();
    let pivots = rref(&mut a);
    let free: Vec<usize> = (0..n_cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Rational::zero(); n_cols];
            v[f] = Rational::one();
            for (r, &p) in pivots.iter().enumerate() {
                v[p] = -a[r][f].clone();
            }
            v
        })
        .collect()
}

const PRIME: u64 = (1 << 61) - 1;

fn mod_p(c: &Rational) -> Option<u64> {
    let p = BigInt::from(PRIME);
    let reduce = |x: &BigInt| -> u64 { x.mod_floor(&p).try_into().expect("reduced below p") };
    let d = reduce(c.denom());
    if d == 0 {
        return None;
    }
    Some(mul_mod(reduce(c.numer()), pow_mod(d, PRIME - 2)))
}

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % PRIME as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b);
        }
        b = mul_mod(b, b);
        e >>= 1;
    }
    r
}

/// Indices of rows that are independent modulo a 61-bit prime, chosen
/// greedily; such rows are independent over ℚ.
pub fn independent_rows_mod_p(rows: &[Vec<Rational>]) -> Vec<usize> {
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let Some(mut v) = row.iter().map(mod_p).collect::<Option<Vec<u64>>>() else { continue };
        for (piv, b) in &basis {
            let c = v[*piv];
            if c != 0 {
                for (x, y) in v.iter_mut().zip(b) {
                    *x = (*x + PRIME - mul_mod(c, *y)) % PRIME;
                }
            }
        }
        if let Some(piv) = v.iter().position(|x| *x != 0) {
            let inv = pow_mod(v[piv], PRIME - 2);
            for x in v.iter_mut() {
                *x = mul_mod(*x, inv);
            }
            for (_, b) in basis.iter_mut() {
                let c = b[piv];
                if c != 0 {
                    for (x, y) in b.iter_mut().zip(&v) {
                        *x = (*x + PRIME - mul_mod(c, *y)) % PRIME;
                    }
                }
            }
            basis.push((piv, v));
            out.push(i);
        }
    }
    out
}

/// Scales a rational vector to coprime integers with a positive last nonzero entry.
pub fn primitive(v: &[Rational]) -> Vec<Rational> {
    let ints = integer_row(v);
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() {
        return v.to_vec();
    }
    let sign = match ints.iter().rev().find(|x| !x.is_zero()) {
        Some(x) if x.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    ints.into_iter().map(|x| Rational::from_integer(x / &g * &sign)).collect()
}

/// Indices of a maximal linearly independent subset of `vectors`, chosen
/// greedily in the given order.
pub fn greedy_independent(vectors: &[Vec<Rational>]) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut basis: Vec<Vec<Rational>> = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let mut trial = basis.clone();
        trial.push(v.clone());
        if rank(&trial) > basis.len() {
            basis = trial;
            chosen.push(i);
        }
    }
    chosen
}

/// Solves `A x = b` for square invertible `A`.
pub fn solve(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.len();
    let mut aug: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let piv = rref(&mut aug);
    if piv.len() < n || piv.iter().any(|&p| p >= n) {
        return None;
    }
    Some(aug.into_iter().map(|r| r[n].clone()).collect())
}

/// Determinant of a square matrix of expressions, by fraction-free elimination
/// over rational functions.
pub fn det_symbolic(rows: &[Vec<Expr>]) -> Result<Expr, SymbolicError> {
    let n = rows.len();
    let mut m: Vec<Vec<RatFun>> =
        rows.iter().map(|r| r.iter().map(Expr::to_ratfun).collect::<Result<_, _>>()).collect::<Result<_, _>>()?;
    let mut prev = RatFun::one();
    let mut sign = false;
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !m[i][c].is_zero()) else {
            return Ok(Expr::zero());
        };
        if p != c {
            m.swap(p, c);
            sign = !sign;
        }
        for i in c + 1..n {
            for j in c + 1..n {
                let v = m[c][c].mul(&m[i][j]).sub(&m[i][c].mul(&m[c][j])).div(&prev)?;
                m[i][j] = v;
            }
            m[i][c] = RatFun::zero();
        }
        prev = m[c][c].clone();
    }
    let d = if n == 0 { RatFun::one() } else { m[n - 1][n - 1].clone() };
    Ok(if sign { d.neg() } else { d }.to_expr())
}

/// Rank of a matrix of expressions at a point: exact unless an entry is
/// transcendental, in which case float SVD is used.
pub fn rank_at(rows: &[Vec<Expr>], point: &Point) -> Result<usize, EvalError> {
    if rows.iter().flatten().any(Expr::has_transcendental) {
        let m = rows
            .iter()
            .map(|r| r.iter().map(|e| e.evaluate_float(point)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(rank_f64(&m, FLOAT_TOL));
    }
    let m = rows
        .iter()
        .map(|r| r.iter().map(|e| e.evaluate(point)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rank(&m))
}

pub fn to_dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Numerical rank by SVD with a relative tolerance.
pub fn rank_f64(rows: &[Vec<f64>], rel_tol: f64) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let sv = to_dmatrix(rows).svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub fn solve_f64(a: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let rhs = nalgebra::DVector::from_column_slice(b);
    a.clone().lu().solve(&rhs).map(|x| x.iter().copied().collect())
}
