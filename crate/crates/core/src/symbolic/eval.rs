use std::collections::{BTreeMap, HashMap};

use num_traits::{ToPrimitive, Zero};

use super::{Expr, Func, Rational, SymbolId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero at the evaluation point")]
    DivisionByZero,
    #[error("`{0}` cannot be evaluated exactly; use float evaluation")]
    Transcendental(Func),
    #[error("symbol {0} is not bound")]
    Unbound(SymbolId),
    #[error("non-finite value")]
    NonFinite,
}

/// Exact values for symbols.
pub trait Bindings {
    fn value(&self, id: SymbolId) -> Option<Rational>;
}

/// Floating-point values for symbols.
pub trait FloatBindings {
    fn value_f64(&self, id: SymbolId) -> Option<f64>;
}

impl Bindings for BTreeMap<SymbolId, Rational> {
    fn value(&self, id: SymbolId) -> Option<Rational> {
        self.get(&id).cloned()
    }
}

impl Bindings for HashMap<SymbolId, Rational> {
    fn value(&self, id: SymbolId) -> Option<Rational> {
        self.get(&id).cloned()
    }
}

/// Dense binding indexed by symbol id.
impl Bindings for [Rational] {
    fn value(&self, id: SymbolId) -> Option<Rational> {
        self.get(id.index()).cloned()
    }
}

impl Bindings for Vec<Rational> {
    fn value(&self, id: SymbolId) -> Option<Rational> {
        self.as_slice().value(id)
    }
}

impl FloatBindings for BTreeMap<SymbolId, f64> {
    fn value_f64(&self, id: SymbolId) -> Option<f64> {
        self.get(&id).copied()
    }
}

impl FloatBindings for HashMap<SymbolId, f64> {
    fn value_f64(&self, id: SymbolId) -> Option<f64> {
        self.get(&id).copied()
    }
}

impl FloatBindings for [f64] {
    fn value_f64(&self, id: SymbolId) -> Option<f64> {
        self.get(id.index()).copied()
    }
}

impl FloatBindings for Vec<f64> {
    fn value_f64(&self, id: SymbolId) -> Option<f64> {
        self.as_slice().value_f64(id)
    }
}

impl FloatBindings for BTreeMap<SymbolId, Rational> {
    fn value_f64(&self, id: SymbolId) -> Option<f64> {
        self.get(&id).and_then(ToPrimitive::to_f64)
    }
}

fn rational_pow(base: Rational, e: i32) -> Result<Rational, EvalError> {
    if e < 0 && base.is_zero() {
        return Err(EvalError::DivisionByZero);
    }
    Ok(num_traits::Pow::pow(base, e))
}

impl Expr {
    /// Exact value of the tree as written (no simplification first, so
    /// `x/x` at `x = 0` is a division by zero).
    pub fn evaluate<B: Bindings + ?Sized>(&self, point: &B) -> Result<Rational, EvalError> {
        Ok(match self {
            Expr::Const(c) => c.clone(),
            Expr::Var(v) => point.value(*v).ok_or(EvalError::Unbound(*v))?,
            Expr::Sum(ts) => {
                let mut acc = Rational::zero();
                for t in ts {
                    acc += t.evaluate(point)?;
                }
                acc
            }
            Expr::Product(fs) => {
                let mut acc = Rational::from_integer(1.into());
                for f in fs {
                    acc *= f.evaluate(point)?;
                }
                acc
            }
            Expr::Power(b, e) => rational_pow(b.evaluate(point)?, *e)?,
            Expr::Quotient(n, d) => {
                let d = d.evaluate(point)?;
                if d.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                n.evaluate(point)? / d
            }
            Expr::Apply(f, _) => return Err(EvalError::Transcendental(*f)),
        })
    }

    pub fn evaluate_float<B: FloatBindings + ?Sized>(&self, point: &B) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => c.to_f64().ok_or(EvalError::NonFinite)?,
            Expr::Var(v) => point.value_f64(*v).ok_or(EvalError::Unbound(*v))?,
            Expr::Sum(ts) => {
                let mut acc = 0.0;
                for t in ts {
                    acc += t.evaluate_float(point)?;
                }
                acc
            }
            Expr::Product(fs) => {
                let mut acc = 1.0;
                for f in fs {
                    acc *= f.evaluate_float(point)?;
                }
                acc
            }
            Expr::Power(b, e) => {
                let b = b.evaluate_float(point)?;
                if *e < 0 && b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                b.powi(*e)
            }
            Expr::Quotient(n, d) => {
                let d = d.evaluate_float(point)?;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                n.evaluate_float(point)? / d
            }
            Expr::Apply(f, a) => f.apply_f64(a.evaluate_float(point)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Float evaluation when the expression has elementary-function nodes,
    /// exact otherwise.
    pub fn evaluate_auto<B: Bindings + FloatBindings + ?Sized>(&self, point: &B) -> Result<f64, EvalError> {
        if self.has_transcendental() {
            self.evaluate_float(point)
        } else {
            self.evaluate(point)?.to_f64().ok_or(EvalError::NonFinite)
        }
    }

    pub fn compile(&self) -> CompiledExpr {
        CompiledExpr::new(self)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Sum(usize),
    Product(usize),
    Power(i32),
    Div,
    Apply(Func),
}

/// Postfix float program for fast repeated evaluation against dense slices
/// indexed by symbol id.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    ops: Vec<Op>,
}

impl CompiledExpr {
    fn new(e: &Expr) -> Self {
        let mut ops = Vec::new();
        Self::emit(e, &mut ops);
        CompiledExpr { ops }
    }

    fn emit(e: &Expr, ops: &mut Vec<Op>) {
        match e {
            Expr::Const(c) => ops.push(Op::Const(c.to_f64().unwrap_or(f64::NAN))),
            Expr::Var(v) => ops.push(Op::Var(v.index())),
            Expr::Sum(ts) => {
                ts.iter().for_each(|t| Self::emit(t, ops));
                ops.push(Op::Sum(ts.len()));
            }
            Expr::Product(fs) => {
                fs.iter().for_each(|t| Self::emit(t, ops));
                ops.push(Op::Product(fs.len()));
            }
            Expr::Power(b, k) => {
                Self::emit(b, ops);
                ops.push(Op::Power(*k));
            }
            Expr::Quotient(n, d) => {
                Self::emit(n, ops);
                Self::emit(d, ops);
                ops.push(Op::Div);
            }
            Expr::Apply(f, a) => {
                Self::emit(a, ops);
                ops.push(Op::Apply(*f));
            }
        }
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        let mut stack: Vec<f64> = Vec::with_capacity(16);
        for op in &self.ops {
            match op {
                Op::Const(c) => stack.push(*c),
                Op::Var(i) => stack.push(*values.get(*i).ok_or(EvalError::Unbound(SymbolId(*i as u32)))?),
                Op::Sum(n) => {
                    let at = stack.len() - n;
                    let s = stack.drain(at..).sum();
                    stack.push(s);
                }
                Op::Product(n) => {
                    let at = stack.len() - n;
                    let p = stack.drain(at..).product();
                    stack.push(p);
                }
                Op::Power(k) => {
                    let b = stack.pop().unwrap();
                    if *k < 0 && b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    stack.push(b.powi(*k));
                }
                Op::Div => {
                    let d = stack.pop().unwrap();
                    let n = stack.pop().unwrap();
                    if d == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    stack.push(n / d);
                }
                Op::Apply(f) => {
                    let a = stack.pop().unwrap();
                    stack.push(f.apply_f64(a));
                }
            }
        }
        let v = stack.pop().unwrap_or(0.0);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_expr, parse_raw, rat, SymbolTable};
    use super::*;

    #[test]
    fn exact_values() {
        let t = SymbolTable::new(&["x1", "x2", "x3", "x4"], &["u1"], 0, 0, 0).unwrap();
        let e = parse_expr("2*x2*x4 - x3^2", &t).unwrap();
        let pt = BTreeMap::from([(t.state(1), rat(1, 1)), (t.state(2), rat(2, 1)), (t.state(3), rat(3, 1))]);
        assert_eq!(e.evaluate(&pt), Ok(rat(2, 1)));
        assert_eq!(Expr::Const(rat(5, 3)).evaluate(&BTreeMap::new()), Ok(rat(5, 3)));
    }

    #[test]
    fn x_over_x_at_zero() {
        let t = SymbolTable::free(&["x"]).unwrap();
        let zero = BTreeMap::from([(SymbolId(0), rat(0, 1))]);
        let raw = parse_raw("x/x", &t).unwrap();
        assert_eq!(raw.evaluate(&zero), Err(EvalError::DivisionByZero));
        assert_eq!(raw.canonical().unwrap().evaluate(&zero), Ok(rat(1, 1)));
    }

    #[test]
    fn float_values() {
        let t = SymbolTable::free(&["x", "y1", "y1_d1", "y2"]).unwrap();
        let at = |v: &[f64]| v.to_vec();
        assert_eq!(parse_expr("sin(x)", &t).unwrap().evaluate_float(&at(&[0.0, 0.0, 0.0, 0.0])), Ok(0.0));
        let e = parse_raw("exp(0) + x", &t).unwrap();
        assert_eq!(e.evaluate_float(&at(&[1.0, 0.0, 0.0, 0.0])), Ok(2.0));
        let u1 = parse_expr("(y1_d1 - y2)/y1", &t).unwrap();
        assert_eq!(u1.evaluate_float(&at(&[0.0, 2.0, 3.0, 1.0])), Ok(1.0));
        assert_eq!(u1.compile().eval(&[0.0, 2.0, 3.0, 1.0]), Ok(1.0));
        assert_eq!(
            parse_raw("ln(x)", &t).unwrap().evaluate_float(&at(&[-1.0, 0.0, 0.0, 0.0])),
            Err(EvalError::NonFinite)
        );
        assert_eq!(
            parse_raw("ln(x)", &t).unwrap().evaluate(&BTreeMap::from([(SymbolId(0), rat(1, 1))])),
            Err(EvalError::Transcendental(Func::Ln))
        );
    }
}
