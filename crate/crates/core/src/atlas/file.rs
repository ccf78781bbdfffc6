//! Line-oriented system definition files.
//!
//! ```text
//! system example1
//! states x1 x2 x3
//! controls u1 u2
//! f0 = [x2, x3, 0]
//! f1 = [x1, 0, 0]
//! f2 = [0, 0, 1]
//! point regular: x=1,0,0, u=0,0
//! candidate psi: k=2, psi=[x1, x2]
//! candidate z: a=[2], b=[1]
//! ```
//!
//! `#` starts a comment. Point coordinates are rationals (`-3`, `1/2`, `0.25`).
//! A degenerate candidate may carry `phi=[…]` to fix the `φ_{i,0}`.

use std::sync::Arc;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::geometry::ControlAffineSystem;
use crate::sampling::Point;
use crate::symbolic::{parse_expr, Expr, Rational, SymbolTable};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedPoint {
    pub name: String,
    pub x: Vec<Rational>,
    pub u: Vec<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CandidateSpec {
    Generic { k: usize, psi: Vec<Expr> },
    Degenerate { a: Vec<usize>, b: Vec<usize>, phi: Option<Vec<Expr>> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedCandidate {
    pub name: String,
    pub spec: CandidateSpec,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemFile {
    pub name: String,
    pub states: Vec<String>,
    pub controls: Vec<String>,
    pub drift: Vec<Expr>,
    pub fields: Vec<Vec<Expr>>,
    pub points: Vec<NamedPoint>,
    pub candidates: Vec<NamedCandidate>,
    table: Arc<SymbolTable>,
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax { line, message: message.into() }
}

/// Splits on commas outside parentheses and brackets.
pub(crate) fn split_top(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = text[start..].trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last);
    }
    out
}

fn bracketed(text: &str, line: usize) -> Result<&str> {
    let t = text.trim();
    t.strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| syntax(line, format!("expected a bracketed list, found `{t}`")))
}

fn expr_list(text: &str, table: &SymbolTable, line: usize) -> Result<Vec<Expr>> {
    let inner = bracketed(text, line)?;
    split_top(inner)
        .into_iter()
        .map(|s| parse_expr(s, table).map_err(|e| syntax(line, format!("in `{s}`: {e}"))))
        .collect()
}

fn index_list(text: &str, line: usize) -> Result<Vec<usize>> {
    let inner = bracketed(text, line)?;
    split_top(inner)
        .into_iter()
        .map(|s| s.parse().map_err(|_| syntax(line, format!("expected a control index, found `{s}`"))))
        .collect()
}

/// Rational literal: integer, `p/q` or decimal, with optional sign.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let e = parse_expr(text.trim(), &SymbolTable::free(&[] as &[&str]).ok()?).ok()?;
    e.as_constant().cloned()
}

pub fn parse_rational_list(text: &str) -> Option<Vec<Rational>> {
    text.split(',').map(parse_rational).collect()
}

pub fn render_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn render_list(v: &[Rational]) -> String {
    v.iter().map(render_rational).collect::<Vec<_>>().join(",")
}

/// `key=value` pairs separated by top-level commas.
fn key_values(body: &str, line: usize) -> Result<Vec<(String, String)>> {
    split_top(body)
        .into_iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| syntax(line, format!("expected key=value, found `{kv}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn parse_point(name: &str, body: &str, n: usize, m: usize, line: usize) -> Result<NamedPoint> {
    let body = body.trim();
    let rest = body.strip_prefix("x=").ok_or_else(|| syntax(line, "point must start with x="))?;
    let (xs, us) = match rest.find("u=") {
        Some(i) => (rest[..i].trim().trim_end_matches(',').trim(), Some(rest[i + 2..].trim())),
        None => (rest.trim(), None),
    };
    let x = parse_rational_list(xs).ok_or_else(|| syntax(line, format!("bad state values `{xs}`")))?;
    let u = match us {
        Some(us) => parse_rational_list(us).ok_or_else(|| syntax(line, format!("bad input values `{us}`")))?,
        None => vec![Rational::zero(); m],
    };
    if x.len() != n || u.len() != m {
        return Err(syntax(line, format!("point `{name}` needs {n} state and {m} input values")));
    }
    Ok(NamedPoint { name: name.to_string(), x, u })
}

fn parse_candidate(name: &str, body: &str, table: &SymbolTable, line: usize) -> Result<NamedCandidate> {
    let kv = key_values(body, line)?;
    let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    if let Some(unknown) = kv.iter().find(|(k, _)| !["k", "psi", "a", "b", "phi"].contains(&k.as_str())) {
        return Err(syntax(line, format!("unknown candidate key `{}`", unknown.0)));
    }
    let spec = match (get("k"), get("psi"), get("a"), get("b")) {
        (Some(k), Some(psi), None, None) => CandidateSpec::Generic {
            k: k.parse().map_err(|_| syntax(line, format!("bad index `{k}`")))?,
            psi: expr_list(psi, table, line)?,
        },
        (None, None, Some(a), Some(b)) => CandidateSpec::Degenerate {
            a: index_list(a, line)?,
            b: index_list(b, line)?,
            phi: get("phi").map(|p| expr_list(p, table, line)).transpose()?,
        },
        _ => return Err(syntax(line, "candidate needs either k and psi, or a and b")),
    };
    Ok(NamedCandidate { name: name.to_string(), spec })
}

fn named<'a>(rest: &'a str, line: usize) -> Result<(&'a str, &'a str)> {
    let (name, body) = rest.split_once(':').ok_or_else(|| syntax(line, "expected `<name>: …`"))?;
    let name = name.trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(syntax(line, format!("bad name `{name}`")));
    }
    Ok((name, body))
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<SystemFile> {
        let mut name = None;
        let mut states: Option<Vec<String>> = None;
        let mut controls: Option<Vec<String>> = None;
        let mut table: Option<Arc<SymbolTable>> = None;
        let mut fields: Vec<Option<(usize, Vec<Expr>)>> = Vec::new();
        let mut drift = None;
        let mut points = Vec::new();
        let mut candidates = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (head, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
            let rest = rest.trim();
            match head {
                "system" => {
                    if rest.is_empty() || rest.contains(char::is_whitespace) {
                        return Err(syntax(line, "expected `system <name>`"));
                    }
                    name = Some(rest.to_string());
                }
                "states" | "controls" => {
                    if table.is_some() {
                        return Err(syntax(line, format!("`{head}` must come before field definitions")));
                    }
                    let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                    if names.is_empty() {
                        return Err(syntax(line, format!("`{head}` needs at least one name")));
                    }
                    if head == "states" { states = Some(names) } else { controls = Some(names) }
                }
                "point" | "candidate" => {
                    let t = table.clone().ok_or_else(|| syntax(line, format!("`{head}` before states and controls")))?;
                    let (nm, body) = named(rest, line)?;
                    if head == "point" {
                        if points.iter().any(|p: &NamedPoint| p.name == nm) {
                            return Err(syntax(line, format!("duplicate point `{nm}`")));
                        }
                        points.push(parse_point(nm, body, t.n_states(), t.n_controls(), line)?);
                    } else {
                        if candidates.iter().any(|c: &NamedCandidate| c.name == nm) {
                            return Err(syntax(line, format!("duplicate candidate `{nm}`")));
                        }
                        candidates.push(parse_candidate(nm, body, &t, line)?);
                    }
                }
                h if h.starts_with('f') && h[1..].parse::<usize>().is_ok() => {
                    let idx: usize = h[1..].parse().expect("checked");
                    if table.is_none() {
                        let (s, c) = match (&states, &controls) {
                            (Some(s), Some(c)) => (s, c),
                            _ => return Err(syntax(line, "field defined before states and controls")),
                        };
                        let t = SymbolTable::new(s, c, 0, 0, 0).map_err(|e| syntax(line, e.to_string()))?;
                        table = Some(Arc::new(t));
                        fields = vec![None; c.len()];
                    }
                    let t = table.clone().expect("table built");
                    let body = rest.strip_prefix('=').ok_or_else(|| syntax(line, format!("expected `{h} = [ … ]`")))?;
                    let comps = expr_list(body, &t, line)?;
                    if comps.len() != t.n_states() {
                        return Err(syntax(line, format!("`{h}` has {} entries, expected {}", comps.len(), t.n_states())));
                    }
                    if idx == 0 {
                        if drift.is_some() {
                            return Err(syntax(line, "f0 defined twice"));
                        }
                        drift = Some(comps);
                    } else {
                        let slot = fields
                            .get_mut(idx - 1)
                            .ok_or_else(|| syntax(line, format!("`{h}` has no matching control")))?;
                        if slot.is_some() {
                            return Err(syntax(line, format!("`{h}` defined twice")));
                        }
                        *slot = Some((line, comps));
                    }
                }
                _ => return Err(syntax(line, format!("unknown directive `{head}`"))),
            }
        }
        let last = text.lines().count().max(1);
        let name = name.ok_or_else(|| syntax(last, "missing `system <name>`"))?;
        let table = table.ok_or_else(|| syntax(last, "no fields defined"))?;
        let drift = drift.ok_or_else(|| syntax(last, "missing f0"))?;
        let fields = fields
            .into_iter()
            .enumerate()
            .map(|(j, f)| f.map(|(_, c)| c).ok_or_else(|| syntax(last, format!("missing f{}", j + 1))))
            .collect::<Result<Vec<_>>>()?;
        let sf = SystemFile {
            name,
            states: states.expect("table built"),
            controls: controls.expect("table built"),
            drift,
            fields,
            points,
            candidates,
            table,
        };
        sf.system()?;
        Ok(sf)
    }

    pub fn render(&self) -> String {
        let t = &self.table;
        let list = |v: &[Expr]| format!("[{}]", v.iter().map(|e| e.render(t)).collect::<Vec<_>>().join(", "));
        let idx = |v: &[usize]| format!("[{}]", v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", "));
        let mut out = format!("system {}\nstates {}\ncontrols {}\n", self.name, self.states.join(" "), self.controls.join(" "));
        out += &format!("f0 = {}\n", list(&self.drift));
        for (j, f) in self.fields.iter().enumerate() {
            out += &format!("f{} = {}\n", j + 1, list(f));
        }
        for p in &self.points {
            out += &format!("point {}: x={}, u={}\n", p.name, render_list(&p.x), render_list(&p.u));
        }
        for c in &self.candidates {
            match &c.spec {
                CandidateSpec::Generic { k, psi } => out += &format!("candidate {}: k={}, psi={}\n", c.name, k, list(psi)),
                CandidateSpec::Degenerate { a, b, phi } => {
                    out += &format!("candidate {}: a={}, b={}", c.name, idx(a), idx(b));
                    if let Some(phi) = phi {
                        out += &format!(", phi={}", list(phi));
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn table(&self) -> &Arc<SymbolTable> {
        &self.table
    }

    pub fn system(&self) -> Result<ControlAffineSystem> {
        Ok(ControlAffineSystem::new(&self.name, self.table.clone(), self.drift.clone(), self.fields.clone())?)
    }

    pub fn point(&self, name: &str) -> Option<&NamedPoint> {
        self.points.iter().find(|p| p.name == name)
    }

    pub fn point_map(&self, p: &NamedPoint) -> Point {
        self.table.states().into_iter().zip(p.x.iter().cloned()).chain(self.table.controls().into_iter().zip(p.u.iter().cloned())).collect()
    }

    pub fn parse_exprs(&self, text: &str) -> Result<Vec<Expr>> {
        let body = text.trim();
        let body = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')).unwrap_or(body);
        split_top(body).into_iter().map(|s| Ok(parse_expr(s, &self.table)?)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::rat;

    const EX: &str = "system demo\nstates x1 x2\ncontrols u1\nf0 = [x2, 0]  # drift\nf1 = [0, 1]\n\npoint p: x=1/2,-3, u=0.25\ncandidate c: k=1, psi=[x1]\ncandidate d: a=[1], b=[], phi=[x1]\n";

    #[test]
    fn parses_and_round_trips() {
        let sf = SystemFile::parse(EX).unwrap();
        assert_eq!(sf.points[0].x, vec![rat(1, 2), rat(-3, 1)]);
        assert_eq!(sf.points[0].u, vec![rat(1, 4)]);
        assert_eq!(sf.candidates.len(), 2);
        let again = SystemFile::parse(&sf.render()).unwrap();
        assert_eq!(again, sf);
    }

    #[test]
    fn errors_carry_lines() {
        let bad = EX.replace("f1 = [0, 1]", "f1 = [0, y]");
        assert!(matches!(SystemFile::parse(&bad), Err(Error::Syntax { line: 5, .. })));
        let short = EX.replace("f1 = [0, 1]", "f1 = [0]");
        assert!(matches!(SystemFile::parse(&short), Err(Error::Syntax { line: 5, .. })));
        let missing = EX.replace("f1 = [0, 1]\n", "");
        assert!(matches!(SystemFile::parse(&missing), Err(Error::Syntax { .. })));
        let pt = EX.replace("x=1/2,-3", "x=1/2");
        assert!(matches!(SystemFile::parse(&pt), Err(Error::Syntax { line: 7, .. })));
    }
}
