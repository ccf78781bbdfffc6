//! Exact symbolic scalar expressions over ℚ.
//!
//! An [`Expr`] is a plain tree. Expressions produced by this crate (parsing,
//! arithmetic, differentiation) are in *canonical form*: a reduced rational
//! function whose polynomial parts are sums of terms sorted in graded
//! lexicographic order, so structural equality decides equality of rational
//! functions in the symbols and elementary-function atoms.

mod eval;
mod parse;
mod poly;
mod render;
mod symbols;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Zero};

pub use eval::{Bindings, CompiledExpr, EvalError, FloatBindings};
pub use parse::{parse_expr, parse_raw, ParseError, ParseErrorKind};
pub use render::Rendered;
pub use symbols::{SymbolId, SymbolKind, SymbolTable, SymbolTableError};

pub(crate) use poly::RatFun;

/// Arbitrary-precision rational, always in lowest terms with positive denominator.
pub type Rational = num_rational::BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SymbolicError {
    #[error("division by zero")]
    DivisionByZero,
}

/// Whitelisted elementary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Sin, Func::Cos, Func::Exp, Func::Ln, Func::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply_f64(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(Rational),
    Var(SymbolId),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Box<Expr>, i32),
    Quotient(Box<Expr>, Box<Expr>),
    Apply(Func, Box<Expr>),
}

impl Default for Expr {
    fn default() -> Self {
        Expr::zero()
    }
}

impl From<Rational> for Expr {
    fn from(c: Rational) -> Self {
        Expr::Const(c)
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::Const(int(n))
    }
}

impl From<SymbolId> for Expr {
    fn from(v: SymbolId) -> Self {
        Expr::Var(v)
    }
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(Rational::zero())
    }

    pub fn one() -> Expr {
        Expr::Const(Rational::one())
    }

    pub fn int(n: i64) -> Expr {
        Expr::Const(int(n))
    }

    pub fn rational(c: Rational) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: SymbolId) -> Expr {
        Expr::Var(v)
    }

    /// Canonical `f(arg)`, folding `sin 0`, `cos 0`, `exp 0`, `ln 1`, `sqrt 0`, `sqrt 1`.
    pub fn apply(f: Func, arg: Expr) -> Result<Expr, SymbolicError> {
        Ok(RatFun::apply(f, &arg)?.to_expr())
    }

    /// True only for the canonical zero `Const(0)`.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_one())
    }

    pub fn as_constant(&self) -> Option<&Rational> {
        match self {
            Expr::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn canonical(&self) -> Result<Expr, SymbolicError> {
        Ok(RatFun::from_expr(self)?.to_expr())
    }

    pub(crate) fn to_ratfun(&self) -> Result<RatFun, SymbolicError> {
        RatFun::from_expr(self)
    }

    fn combine(&self, other: &Expr, op: impl Fn(&RatFun, &RatFun) -> RatFun, raw: impl Fn(Expr, Expr) -> Expr) -> Expr {
        match (RatFun::from_expr(self), RatFun::from_expr(other)) {
            (Ok(a), Ok(b)) => op(&a, &b).to_expr(),
            _ => raw(self.clone(), other.clone()),
        }
    }

    /// Canonical quotient; fails when `other` is identically zero.
    pub fn checked_div(&self, other: &Expr) -> Result<Expr, SymbolicError> {
        Ok(RatFun::from_expr(self)?.div(&RatFun::from_expr(other)?)?.to_expr())
    }

    pub fn powi(&self, e: i32) -> Result<Expr, SymbolicError> {
        Ok(RatFun::from_expr(self)?.powi(e)?.to_expr())
    }

    /// Exact partial derivative, canonical, chain rule through elementary functions.
    pub fn diff(&self, v: SymbolId) -> Result<Expr, SymbolicError> {
        Ok(RatFun::from_expr(self)?.derivative(v)?.to_expr())
    }

    /// Simultaneous substitution of symbols by expressions, then canonicalization.
    pub fn substitute(&self, map: &BTreeMap<SymbolId, Expr>) -> Result<Expr, SymbolicError> {
        self.substitute_raw(map).canonical()
    }

    fn substitute_raw(&self, map: &BTreeMap<SymbolId, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Expr::Sum(ts) => Expr::Sum(ts.iter().map(|t| t.substitute_raw(map)).collect()),
            Expr::Product(fs) => Expr::Product(fs.iter().map(|t| t.substitute_raw(map)).collect()),
            Expr::Power(b, e) => Expr::Power(Box::new(b.substitute_raw(map)), *e),
            Expr::Quotient(n, d) => Expr::Quotient(Box::new(n.substitute_raw(map)), Box::new(d.substitute_raw(map))),
            Expr::Apply(f, a) => Expr::Apply(*f, Box::new(a.substitute_raw(map))),
        }
    }

    /// Children of a node, in order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => Vec::new(),
            Expr::Sum(v) | Expr::Product(v) => v.iter().collect(),
            Expr::Power(b, _) | Expr::Apply(_, b) => vec![b],
            Expr::Quotient(n, d) => vec![n, d],
        }
    }

    pub fn free_symbols(&self) -> BTreeSet<SymbolId> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<SymbolId>) {
        if let Expr::Var(v) = self {
            out.insert(*v);
        }
        for c in self.children() {
            c.collect_symbols(out);
        }
    }

    pub fn contains_symbol(&self, v: SymbolId) -> bool {
        match self {
            Expr::Var(s) => *s == v,
            _ => self.children().into_iter().any(|c| c.contains_symbol(v)),
        }
    }

    pub fn has_transcendental(&self) -> bool {
        matches!(self, Expr::Apply(..)) || self.children().into_iter().any(Expr::has_transcendental)
    }

    pub fn is_polynomial(&self) -> bool {
        !self.has_transcendental() && RatFun::from_expr(self).is_ok_and(|r| r.is_polynomial())
    }

    /// Total degree of a polynomial expression (`None` for rational or transcendental ones).
    pub fn total_degree(&self) -> Option<u32> {
        if self.has_transcendental() {
            return None;
        }
        let r = RatFun::from_expr(self).ok()?;
        r.is_polynomial().then(|| r.num.degree())
    }

    /// Heuristic size used for "smallest first" tie-breaking.
    pub fn complexity(&self) -> usize {
        1 + self.children().into_iter().map(Expr::complexity).sum::<usize>()
    }

    /// Coefficients of the expression as a polynomial in `v` (lowest power
    /// first), when `v` occurs polynomially in the numerator and not at all
    /// in the denominator.
    pub fn coefficients_in(&self, v: SymbolId) -> Option<Vec<Expr>> {
        let r = RatFun::from_expr(self).ok()?;
        if r.den.contains_symbol(v) {
            return None;
        }
        let den = RatFun::from_poly(r.den.clone());
        let coeffs = r.num.coefficients_in(v)?;
        coeffs
            .into_iter()
            .map(|c| RatFun::from_poly(c).div(&den).ok().map(|q| q.to_expr()))
            .collect()
    }

    /// Whether the leading coefficient of the canonical numerator is negative.
    pub fn has_negative_lead(&self) -> bool {
        RatFun::from_expr(self).is_ok_and(|r| r.has_sign_negative_leading())
    }

    /// Canonical numerator and denominator.
    pub fn numer_denom(&self) -> Result<(Expr, Expr), SymbolicError> {
        let r = RatFun::from_expr(self)?;
        Ok((r.num.to_expr(), r.den.to_expr()))
    }

    /// Same expression scaled so its canonical numerator has leading coefficient 1.
    pub fn monic(&self) -> Result<Expr, SymbolicError> {
        let r = RatFun::from_expr(self)?;
        match r.num.leading() {
            Some((_, c)) => Ok(RatFun::new(r.num.scale(&c.recip()), r.den.clone())?.to_expr()),
            None => Ok(self.clone()),
        }
    }

    /// Factors of the canonical numerator that are powers of single atoms
    /// (symbols or function applications), plus the remaining cofactor.
    pub fn monomial_factors(&self) -> Result<(Vec<(Expr, u32)>, Expr), SymbolicError> {
        let r = RatFun::from_expr(self)?;
        let g = r.num.monomial_gcd();
        let factors = g.0.iter().map(|(a, e)| (a.to_expr(), *e)).collect();
        let cof = RatFun::from_expr(&Expr::Quotient(Box::new(r.num.to_expr()), Box::new(poly_monomial_expr(&g))))?;
        Ok((factors, cof.to_expr()))
    }

    pub fn display<'a>(&'a self, table: &'a SymbolTable) -> Rendered<'a> {
        Rendered::new(self, table)
    }

    pub fn render(&self, table: &SymbolTable) -> String {
        self.display(table).to_string()
    }
}

fn poly_monomial_expr(m: &poly::Monomial) -> Expr {
    if m.is_one() {
        return Expr::one();
    }
    Expr::Product(
        m.0.iter()
            .map(|(a, e)| if *e == 1 { a.to_expr() } else { Expr::Power(Box::new(a.to_expr()), *e as i32) })
            .collect(),
    )
}

impl Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        self.combine(rhs, RatFun::add, |a, b| Expr::Sum(vec![a, b]))
    }
}

impl Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        self.combine(rhs, RatFun::sub, |a, b| Expr::Sum(vec![a, Expr::Product(vec![Expr::int(-1), b])]))
    }
}

impl Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        self.combine(rhs, RatFun::mul, |a, b| Expr::Product(vec![a, b]))
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match RatFun::from_expr(self) {
            Ok(r) => r.neg().to_expr(),
            Err(_) => Expr::Product(vec![Expr::int(-1), self.clone()]),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                (&self).$m(rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        let mut acc = RatFun::zero();
        let mut raw = Vec::new();
        for e in iter {
            match RatFun::from_expr(&e) {
                Ok(r) => acc = acc.add(&r),
                Err(_) => raw.push(e),
            }
        }
        if raw.is_empty() {
            acc.to_expr()
        } else {
            raw.push(acc.to_expr());
            Expr::Sum(raw)
        }
    }
}

/// Symbolic zero test without sampling: canonical form is `0`.
pub fn is_canonical_zero(e: &Expr) -> bool {
    RatFun::from_expr(e).is_ok_and(|r| r.is_zero())
}
