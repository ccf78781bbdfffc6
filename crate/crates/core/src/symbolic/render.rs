use std::fmt::{self, Write};

use num_traits::{One, Signed};

use super::{Expr, Rational, SymbolTable};

/// Text rendering of an expression in the input grammar, so that
/// `parse_expr(render(e))` reproduces a canonical `e`.
pub struct Rendered<'a> {
    expr: &'a Expr,
    table: &'a SymbolTable,
}

impl<'a> Rendered<'a> {
    pub(super) fn new(expr: &'a Expr, table: &'a SymbolTable) -> Self {
        Rendered { expr, table }
    }
}

impl fmt::Display for Rendered<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, self.table)
    }
}

fn write_const(f: &mut impl Write, c: &Rational) -> fmt::Result {
    if c.denom().is_one() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

/// A term that prints with a leading minus sign.
fn is_negative_term(e: &Expr) -> bool {
    match e {
        Expr::Const(c) => c.is_negative(),
        Expr::Product(fs) => matches!(fs.first(), Some(Expr::Const(c)) if c.is_negative()),
        Expr::Quotient(n, _) => is_negative_term(n),
        _ => false,
    }
}

fn negate_term(e: &Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Product(fs) => {
            let Some(Expr::Const(c)) = fs.first() else { unreachable!() };
            let c = -c;
            let mut rest: Vec<Expr> = fs[1..].to_vec();
            if !c.is_one() {
                rest.insert(0, Expr::Const(c));
            }
            if rest.len() == 1 {
                rest.pop().unwrap()
            } else {
                Expr::Product(rest)
            }
        }
        Expr::Quotient(n, d) => Expr::Quotient(Box::new(negate_term(n)), d.clone()),
        _ => unreachable!(),
    }
}

fn is_simple(e: &Expr) -> bool {
    match e {
        Expr::Var(_) | Expr::Apply(..) => true,
        Expr::Const(c) => c.denom().is_one() && !c.is_negative(),
        _ => false,
    }
}

fn write_expr(f: &mut impl Write, e: &Expr, t: &SymbolTable) -> fmt::Result {
    match e {
        Expr::Const(c) => write_const(f, c),
        Expr::Var(v) => f.write_str(t.name(*v)),
        Expr::Sum(ts) => {
            if ts.is_empty() {
                return f.write_str("0");
            }
            write_expr(f, &ts[0], t)?;
            for term in &ts[1..] {
                if is_negative_term(term) {
                    f.write_str(" - ")?;
                    write_expr(f, &negate_term(term), t)?;
                } else {
                    f.write_str(" + ")?;
                    write_expr(f, term, t)?;
                }
            }
            Ok(())
        }
        Expr::Product(fs) => {
            if fs.is_empty() {
                return f.write_str("1");
            }
            let mut rest = &fs[..];
            if let Some(Expr::Const(c)) = fs.first() {
                if fs.len() > 1 && (*c == -Rational::one()) {
                    f.write_char('-')?;
                    rest = &fs[1..];
                } else {
                    write_const(f, c)?;
                    rest = &fs[1..];
                    if !rest.is_empty() {
                        f.write_char('*')?;
                    }
                }
            }
            for (i, factor) in rest.iter().enumerate() {
                if i > 0 {
                    f.write_char('*')?;
                }
                match factor {
                    Expr::Sum(_) | Expr::Quotient(..) | Expr::Product(_) => {
                        f.write_char('(')?;
                        write_expr(f, factor, t)?;
                        f.write_char(')')?;
                    }
                    Expr::Const(c) if c.is_negative() || !c.denom().is_one() => {
                        f.write_char('(')?;
                        write_const(f, c)?;
                        f.write_char(')')?;
                    }
                    _ => write_expr(f, factor, t)?,
                }
            }
            Ok(())
        }
        Expr::Power(b, k) => {
            if is_simple(b) {
                write_expr(f, b, t)?;
            } else {
                f.write_char('(')?;
                write_expr(f, b, t)?;
                f.write_char(')')?;
            }
            write!(f, "^{k}")
        }
        Expr::Quotient(n, d) => {
            match n.as_ref() {
                Expr::Sum(_) | Expr::Quotient(..) => {
                    f.write_char('(')?;
                    write_expr(f, n, t)?;
                    f.write_char(')')?;
                }
                _ => write_expr(f, n, t)?,
            }
            f.write_char('/')?;
            if is_simple(d) || matches!(d.as_ref(), Expr::Power(b, k) if *k >= 0 && is_simple(b)) {
                write_expr(f, d, t)
            } else {
                f.write_char('(')?;
                write_expr(f, d, t)?;
                f.write_char(')')
            }
        }
        Expr::Apply(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a, t)?;
            f.write_char(')')
        }
    }
}
