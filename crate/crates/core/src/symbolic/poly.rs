//! Sparse multivariate polynomials and rational functions over ℚ whose
//! indeterminates ("atoms") are symbols or applications of elementary
//! functions to canonical expressions.
//!
//! This is the normal form behind [`Expr::canonical`](super::Expr::canonical):
//! every expression is converted to `num / den`, reduced, and converted back.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use super::{Expr, Func, Rational, SymbolId, SymbolicError};

/// Indeterminate of a polynomial. Symbols sort before function applications.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Atom {
    Var(SymbolId),
    Apply(Func, Box<Expr>),
}

impl Atom {
    fn contains(&self, v: SymbolId) -> bool {
        match self {
            Atom::Var(s) => *s == v,
            Atom::Apply(_, arg) => arg.contains_symbol(v),
        }
    }

    pub(crate) fn to_expr(&self) -> Expr {
        match self {
            Atom::Var(s) => Expr::Var(*s),
            Atom::Apply(f, arg) => Expr::Apply(*f, arg.clone()),
        }
    }
}

/// Power product, atoms strictly increasing, exponents ≥ 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub(crate) struct Monomial(pub(crate) Vec<(Atom, u32)>);

impl Monomial {
    pub(crate) fn one() -> Self {
        Monomial(Vec::new())
    }

    pub(crate) fn atom(a: Atom) -> Self {
        Monomial(vec![(a, 1)])
    }

    pub(crate) fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub(crate) fn exponent(&self, a: &Atom) -> u32 {
        self.0.iter().find(|(b, _)| b == a).map(|(_, e)| *e).unwrap_or(0)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// `self / other` if it is a monomial.
    fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut j = 0;
        for (a, e) in &self.0 {
            if j < other.0.len() && other.0[j].0 < *a {
                return None;
            }
            if j < other.0.len() && other.0[j].0 == *a {
                let f = other.0[j].1;
                j += 1;
                match e.cmp(&f) {
                    Ordering::Less => return None,
                    Ordering::Equal => {}
                    Ordering::Greater => out.push((a.clone(), e - f)),
                }
            } else {
                out.push((a.clone(), *e));
            }
        }
        if j < other.0.len() {
            return None;
        }
        Some(Monomial(out))
    }

    fn gcd(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::new();
        for (a, e) in &self.0 {
            let f = other.exponent(a);
            if f > 0 {
                out.push((a.clone(), (*e).min(f)));
            }
        }
        Monomial(out)
    }

    /// Removes one power of `a` (which must be present) and returns the exponent it had.
    fn lower(&self, a: &Atom) -> (u32, Monomial) {
        let mut out = Vec::with_capacity(self.0.len());
        let mut exp = 0;
        for (b, e) in &self.0 {
            if b == a {
                exp = *e;
                if *e > 1 {
                    out.push((b.clone(), e - 1));
                }
            } else {
                out.push((b.clone(), *e));
            }
        }
        (exp, Monomial(out))
    }
}

/// Graded lexicographic order: higher total degree is greater; ties broken
/// lexicographically with the smallest atom as the most significant.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a, e) = &self.0[i];
            let (b, f) = &other.0[j];
            match a.cmp(b) {
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
                Ordering::Equal => match e.cmp(f) {
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                    }
                    o => return o,
                },
            }
        }
        (self.0.len() - i).cmp(&(other.0.len() - j))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub(crate) struct Poly {
    pub(crate) terms: BTreeMap<Monomial, Rational>,
}

const DIVISION_STEP_LIMIT: usize = 20_000;

impl Poly {
    pub(crate) fn zero() -> Self {
        Poly::default()
    }

    pub(crate) fn constant(c: Rational) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub(crate) fn one() -> Self {
        Poly::constant(Rational::one())
    }

    pub(crate) fn atom(a: Atom) -> Self {
        let mut p = Poly::zero();
        p.terms.insert(Monomial::atom(a), Rational::one());
        p
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub(crate) fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.as_constant().is_some_and(|c| c.is_one())
    }

    pub(crate) fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub(crate) fn leading(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().next_back()
    }

    pub(crate) fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                *existing += c;
                if existing.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub(crate) fn add(&self, other: &Poly) -> Poly {
        let (mut out, rest) = if self.terms.len() >= other.terms.len() {
            (self.clone(), other)
        } else {
            (other.clone(), self)
        };
        for (m, c) in &rest.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub(crate) fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub(crate) fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }

    pub(crate) fn scale(&self, k: &Rational) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    fn mul_term(&self, m: &Monomial, c: &Rational) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(n, d)| (n.mul(m), d * c)).collect(),
        }
    }

    pub(crate) fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        if let Some(c) = self.as_constant() {
            return other.scale(&c);
        }
        if let Some(c) = other.as_constant() {
            return self.scale(&c);
        }
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            for (n, d) in &other.terms {
                out.add_term(m.mul(n), c * d);
            }
        }
        out
    }

    pub(crate) fn pow(&self, e: u32) -> Poly {
        let mut result = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    pub(crate) fn monomial_gcd(&self) -> Monomial {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return Monomial::one();
        };
        let mut g = first.clone();
        for m in it {
            if g.is_one() {
                break;
            }
            g = g.gcd(m);
        }
        g
    }

    fn div_monomial(&self, m: &Monomial) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(n, c)| (n.div(m).expect("monomial divides every term"), c.clone()))
                .collect(),
        }
    }

    /// Exact quotient `self / d`, if `d` divides `self` in the polynomial ring.
    pub(crate) fn div_exact(&self, d: &Poly) -> Option<Poly> {
        let (lm, lc) = d.leading()?;
        let mut rem = self.clone();
        let mut quot = Poly::zero();
        for _ in 0..DIVISION_STEP_LIMIT {
            let Some((rm, rc)) = rem.leading() else {
                return Some(quot);
            };
            let qm = rm.div(lm)?;
            let qc = rc / lc;
            rem = rem.sub(&d.mul_term(&qm, &qc));
            quot.add_term(qm, qc);
        }
        None
    }

    pub(crate) fn contains_symbol(&self, v: SymbolId) -> bool {
        self.terms.keys().any(|m| m.0.iter().any(|(a, _)| a.contains(v)))
    }

    /// Coefficients of `self` viewed as a polynomial in the symbol `v`, which
    /// must only occur as a plain atom. Returns `None` if `v` sits inside a
    /// function application.
    pub(crate) fn coefficients_in(&self, v: SymbolId) -> Option<Vec<Poly>> {
        let atom = Atom::Var(v);
        let mut out: Vec<Poly> = Vec::new();
        for (m, c) in &self.terms {
            let mut rest = Vec::new();
            let mut e = 0;
            for (a, k) in &m.0 {
                if *a == atom {
                    e = *k;
                } else {
                    if a.contains(v) {
                        return None;
                    }
                    rest.push((a.clone(), *k));
                }
            }
            let e = e as usize;
            if out.len() <= e {
                out.resize(e + 1, Poly::zero());
            }
            out[e].add_term(Monomial(rest), c.clone());
        }
        Some(out)
    }

    pub(crate) fn derivative(&self, v: SymbolId) -> Result<RatFun, SymbolicError> {
        let var = Atom::Var(v);
        let mut plain = Poly::zero();
        let mut chained = RatFun::zero();
        for (m, c) in &self.terms {
            for (a, _) in &m.0 {
                if !a.contains(v) {
                    continue;
                }
                let (e, lowered) = m.lower(a);
                let coeff = c * Rational::from_integer(e.into());
                if *a == var {
                    plain.add_term(lowered, coeff);
                } else {
                    let inner = atom_derivative(a, v)?;
                    let term = RatFun::from_poly(Poly::zero().tap_add_term(lowered, coeff));
                    chained = chained.add(&term.mul(&inner));
                }
            }
        }
        Ok(RatFun::from_poly(plain).add(&chained))
    }

    fn tap_add_term(mut self, m: Monomial, c: Rational) -> Poly {
        self.add_term(m, c);
        self
    }

    /// Canonical expression tree, leading term first.
    pub(crate) fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = self
            .terms
            .iter()
            .rev()
            .map(|(m, c)| {
                let mut factors: Vec<Expr> = m
                    .0
                    .iter()
                    .map(|(a, e)| {
                        let base = a.to_expr();
                        if *e == 1 {
                            base
                        } else {
                            Expr::Power(Box::new(base), *e as i32)
                        }
                    })
                    .collect();
                if factors.is_empty() {
                    return Expr::Const(c.clone());
                }
                if !c.is_one() {
                    factors.insert(0, Expr::Const(c.clone()));
                }
                if factors.len() == 1 {
                    factors.pop().unwrap()
                } else {
                    Expr::Product(factors)
                }
            })
            .collect();
        match terms.len() {
            0 => Expr::Const(Rational::zero()),
            1 => terms.pop().unwrap(),
            _ => Expr::Sum(terms),
        }
    }
}

/// `∂a/∂v` for a function-application atom (chain rule).
fn atom_derivative(a: &Atom, v: SymbolId) -> Result<RatFun, SymbolicError> {
    match a {
        Atom::Var(s) => Ok(if *s == v { RatFun::one() } else { RatFun::zero() }),
        Atom::Apply(f, arg) => {
            let inner = RatFun::from_expr(arg)?;
            let d_inner = inner.derivative(v)?;
            if d_inner.is_zero() {
                return Ok(RatFun::zero());
            }
            let outer = match f {
                Func::Sin => RatFun::apply(Func::Cos, arg)?,
                Func::Cos => RatFun::apply(Func::Sin, arg)?.neg(),
                Func::Exp => RatFun::apply(Func::Exp, arg)?,
                Func::Ln => RatFun::one().div(&inner)?,
                Func::Sqrt => {
                    let two_root = RatFun::apply(Func::Sqrt, arg)?.scale(&Rational::from_integer(2.into()));
                    RatFun::one().div(&two_root)?
                }
            };
            Ok(outer.mul(&d_inner))
        }
    }
}

/// Reduced quotient of polynomials. `den` is never zero; it is `1` or has
/// leading coefficient 1, and common monomial factors are cancelled.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct RatFun {
    pub(crate) num: Poly,
    pub(crate) den: Poly,
}

impl RatFun {
    pub(crate) fn zero() -> Self {
        RatFun { num: Poly::zero(), den: Poly::one() }
    }

    pub(crate) fn one() -> Self {
        RatFun { num: Poly::one(), den: Poly::one() }
    }

    pub(crate) fn constant(c: Rational) -> Self {
        RatFun { num: Poly::constant(c), den: Poly::one() }
    }

    pub(crate) fn from_poly(p: Poly) -> Self {
        RatFun { num: p, den: Poly::one() }
    }

    pub(crate) fn var(v: SymbolId) -> Self {
        RatFun::from_poly(Poly::atom(Atom::Var(v)))
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub(crate) fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    pub(crate) fn as_constant(&self) -> Option<Rational> {
        if self.den.is_one() {
            self.num.as_constant()
        } else {
            None
        }
    }

    /// Builds `num / den` in reduced form.
    pub(crate) fn new(num: Poly, den: Poly) -> Result<Self, SymbolicError> {
        if den.is_zero() {
            return Err(SymbolicError::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(RatFun::zero());
        }
        if let Some(c) = den.as_constant() {
            return Ok(RatFun::from_poly(num.scale(&c.recip())));
        }
        let g = num.monomial_gcd().gcd(&den.monomial_gcd());
        let (num, den) = if g.is_one() {
            (num, den)
        } else {
            (num.div_monomial(&g), den.div_monomial(&g))
        };
        if let Some(c) = den.as_constant() {
            return Ok(RatFun::from_poly(num.scale(&c.recip())));
        }
        if let Some(q) = num.div_exact(&den) {
            return Ok(RatFun::from_poly(q));
        }
        let (num, den) = match den.div_exact(&num) {
            Some(q) => (Poly::one(), q),
            None => (num, den),
        };
        if let Some(c) = den.as_constant() {
            return Ok(RatFun::from_poly(num.scale(&c.recip())));
        }
        let lc = den.leading().map(|(_, c)| c.clone()).expect("nonzero denominator");
        if lc.is_one() {
            Ok(RatFun { num, den })
        } else {
            let inv = lc.recip();
            Ok(RatFun { num: num.scale(&inv), den: den.scale(&inv) })
        }
    }

    pub(crate) fn add(&self, other: &RatFun) -> RatFun {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den == other.den {
            if self.den.is_one() {
                return RatFun::from_poly(self.num.add(&other.num));
            }
            return RatFun::new(self.num.add(&other.num), self.den.clone()).expect("nonzero denominator");
        }
        let num = self.num.mul(&other.den).add(&other.num.mul(&self.den));
        RatFun::new(num, self.den.mul(&other.den)).expect("nonzero denominator")
    }

    pub(crate) fn neg(&self) -> RatFun {
        RatFun { num: self.num.neg(), den: self.den.clone() }
    }

    pub(crate) fn sub(&self, other: &RatFun) -> RatFun {
        self.add(&other.neg())
    }

    pub(crate) fn scale(&self, k: &Rational) -> RatFun {
        if k.is_zero() {
            return RatFun::zero();
        }
        RatFun { num: self.num.scale(k), den: self.den.clone() }
    }

    pub(crate) fn mul(&self, other: &RatFun) -> RatFun {
        if self.is_zero() || other.is_zero() {
            return RatFun::zero();
        }
        if self.den.is_one() && other.den.is_one() {
            return RatFun::from_poly(self.num.mul(&other.num));
        }
        RatFun::new(self.num.mul(&other.num), self.den.mul(&other.den)).expect("nonzero denominator")
    }

    pub(crate) fn recip(&self) -> Result<RatFun, SymbolicError> {
        RatFun::new(self.den.clone(), self.num.clone())
    }

    pub(crate) fn div(&self, other: &RatFun) -> Result<RatFun, SymbolicError> {
        if other.is_zero() {
            return Err(SymbolicError::DivisionByZero);
        }
        if self.is_zero() {
            return Ok(RatFun::zero());
        }
        RatFun::new(self.num.mul(&other.den), self.den.mul(&other.num))
    }

    pub(crate) fn powi(&self, e: i32) -> Result<RatFun, SymbolicError> {
        if e >= 0 {
            let e = e as u32;
            if self.den.is_one() {
                return Ok(RatFun::from_poly(self.num.pow(e)));
            }
            RatFun::new(self.num.pow(e), self.den.pow(e))
        } else {
            self.recip()?.powi(-e)
        }
    }

    /// `f(arg)` with constant folding at the trivial arguments 0 and 1.
    pub(crate) fn apply(f: Func, arg: &Expr) -> Result<RatFun, SymbolicError> {
        let inner = RatFun::from_expr(arg)?;
        if let Some(c) = inner.as_constant() {
            if c.is_zero() {
                match f {
                    Func::Sin | Func::Sqrt => return Ok(RatFun::zero()),
                    Func::Cos | Func::Exp => return Ok(RatFun::one()),
                    Func::Ln => {}
                }
            } else if c.is_one() {
                match f {
                    Func::Ln => return Ok(RatFun::zero()),
                    Func::Sqrt => return Ok(RatFun::one()),
                    _ => {}
                }
            }
        }
        Ok(RatFun::from_poly(Poly::atom(Atom::Apply(f, Box::new(inner.to_expr())))))
    }

    pub(crate) fn from_expr(e: &Expr) -> Result<RatFun, SymbolicError> {
        Ok(match e {
            Expr::Const(c) => RatFun::constant(c.clone()),
            Expr::Var(v) => RatFun::var(*v),
            Expr::Sum(ts) => {
                let mut acc = RatFun::zero();
                for t in ts {
                    acc = acc.add(&RatFun::from_expr(t)?);
                }
                acc
            }
            Expr::Product(fs) => {
                let mut acc = RatFun::one();
                for f in fs {
                    acc = acc.mul(&RatFun::from_expr(f)?);
                }
                acc
            }
            Expr::Power(b, k) => RatFun::from_expr(b)?.powi(*k)?,
            Expr::Quotient(n, d) => RatFun::from_expr(n)?.div(&RatFun::from_expr(d)?)?,
            Expr::Apply(f, arg) => RatFun::apply(*f, arg)?,
        })
    }

    pub(crate) fn to_expr(&self) -> Expr {
        let num = self.num.to_expr();
        if self.den.is_one() {
            num
        } else {
            Expr::Quotient(Box::new(num), Box::new(self.den.to_expr()))
        }
    }

    pub(crate) fn derivative(&self, v: SymbolId) -> Result<RatFun, SymbolicError> {
        let dn = self.num.derivative(v)?;
        if self.den.is_one() {
            return Ok(dn);
        }
        if !self.den.contains_symbol(v) {
            return dn.mul(&RatFun::from_poly(self.den.clone())).div(&RatFun::from_poly(self.den.mul(&self.den)));
        }
        let dd = self.den.derivative(v)?;
        let den = RatFun::from_poly(self.den.clone());
        let num = RatFun::from_poly(self.num.clone());
        let top = dn.mul(&den).sub(&num.mul(&dd));
        top.div(&den.mul(&den))
    }

    pub(crate) fn contains_symbol(&self, v: SymbolId) -> bool {
        self.num.contains_symbol(v) || self.den.contains_symbol(v)
    }

    pub(crate) fn has_sign_negative_leading(&self) -> bool {
        self.num.leading().is_some_and(|(_, c)| c.is_negative())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: u32) -> Poly {
        Poly::atom(Atom::Var(SymbolId(i)))
    }

    fn r(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn graded_lex_order() {
        let m = |v: &[(u32, u32)]| Monomial(v.iter().map(|&(i, e)| (Atom::Var(SymbolId(i)), e)).collect());
        // x0*x2 > x1^2 > x1*x2 > x0 > 1
        assert!(m(&[(0, 1), (2, 1)]) > m(&[(1, 2)]));
        assert!(m(&[(1, 2)]) > m(&[(1, 1), (2, 1)]));
        assert!(m(&[(1, 1), (2, 1)]) > m(&[(0, 1)]));
        assert!(m(&[(0, 1)]) > Monomial::one());
    }

    #[test]
    fn exact_division() {
        // (x0^2 - x1^2) / (x0 - x1) = x0 + x1
        let num = x(0).mul(&x(0)).sub(&x(1).mul(&x(1)));
        let den = x(0).sub(&x(1));
        assert_eq!(num.div_exact(&den), Some(x(0).add(&x(1))));
        assert_eq!(x(0).add(&Poly::one()).div_exact(&x(1)), None);
    }

    #[test]
    fn ratfun_cancels_common_factor() {
        let num = x(0).mul(&x(1)).add(&x(0));
        let den = x(1).add(&Poly::one());
        let q = RatFun::new(num, den).unwrap();
        assert_eq!(q, RatFun::from_poly(x(0)));
        let q = RatFun::new(x(0).scale(&r(2)), x(0).mul(&x(1)).scale(&r(4))).unwrap();
        assert_eq!(q.num, Poly::constant(Rational::new(1.into(), 2.into())));
        assert_eq!(q.den, x(1));
    }

    #[test]
    fn zero_denominator_rejected() {
        assert_eq!(RatFun::new(x(0), Poly::zero()), Err(SymbolicError::DivisionByZero));
    }
}
