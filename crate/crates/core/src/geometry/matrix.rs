use std::collections::BTreeSet;

use num_traits::ToPrimitive;

use crate::linalg;
use crate::sampling::{Point, Sampler};
use crate::symbolic::{EvalError, Expr, Rational, SymbolId};

use super::{Frame, GeometryError, VectorField};

/// Relative singular-value cutoff for ranks of matrices with transcendental entries.
pub const FLOAT_RANK_TOL: f64 = 1e-9;

/// Matrix whose columns are vector fields over a common frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldMatrix {
    frame: Frame,
    columns: Vec<VectorField>,
}

/// Numeric value of a field matrix at a point, stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub enum Evaluated {
    Exact(Vec<Vec<Rational>>),
    Float(Vec<Vec<f64>>),
}

impl Evaluated {
    pub fn rank(&self) -> usize {
        match self {
            Evaluated::Exact(cols) => linalg::rank(cols),
            Evaluated::Float(cols) => linalg::rank_f64(cols, FLOAT_RANK_TOL),
        }
    }

    pub fn columns_f64(&self) -> Vec<Vec<f64>> {
        match self {
            Evaluated::Exact(cols) => {
                cols.iter().map(|c| c.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()).collect()
            }
            Evaluated::Float(cols) => cols.clone(),
        }
    }

    /// Indices of a maximal independent subset of columns, taken greedily in `order`.
    pub fn independent_columns(&self, order: &[usize]) -> Vec<usize> {
        match self {
            Evaluated::Exact(cols) => {
                let picked: Vec<Vec<Rational>> = order.iter().map(|&i| cols[i].clone()).collect();
                linalg::greedy_independent(&picked).into_iter().map(|k| order[k]).collect()
            }
            Evaluated::Float(cols) => {
                let mut chosen: Vec<usize> = Vec::new();
                for &i in order {
                    let mut trial: Vec<Vec<f64>> = chosen.iter().map(|&c| cols[c].clone()).collect();
                    trial.push(cols[i].clone());
                    if linalg::rank_f64(&trial, FLOAT_RANK_TOL) > chosen.len() {
                        chosen.push(i);
                    }
                }
                chosen
            }
        }
    }
}

impl FieldMatrix {
    pub fn new(frame: Frame, columns: Vec<VectorField>) -> Result<Self, GeometryError> {
        if columns.iter().any(|c| c.frame() != &frame) {
            return Err(GeometryError::FrameMismatch);
        }
        Ok(FieldMatrix { frame, columns })
    }

    pub fn from_columns(columns: Vec<VectorField>) -> Result<Self, GeometryError> {
        let frame = columns.first().ok_or(GeometryError::Empty)?.frame().clone();
        FieldMatrix::new(frame, columns)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn columns(&self) -> &[VectorField] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.frame.dim()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> &Expr {
        self.columns[col].component(row)
    }

    /// Row-major entries.
    pub fn rows(&self) -> Vec<Vec<Expr>> {
        (0..self.n_rows()).map(|r| self.columns.iter().map(|c| c.component(r).clone()).collect()).collect()
    }

    pub fn free_symbols(&self) -> BTreeSet<SymbolId> {
        self.columns.iter().flat_map(|c| c.components().iter().flat_map(Expr::free_symbols)).collect()
    }

    fn has_transcendental(&self) -> bool {
        self.columns.iter().any(|c| c.components().iter().any(Expr::has_transcendental))
    }

    pub fn evaluate(&self, point: &Point) -> Result<Evaluated, EvalError> {
        if self.has_transcendental() {
            let cols = self
                .columns
                .iter()
                .map(|c| c.components().iter().map(|e| e.evaluate_float(point)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(Evaluated::Float(cols));
        }
        let cols = self
            .columns
            .iter()
            .map(|c| c.components().iter().map(|e| e.evaluate(point)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Evaluated::Exact(cols))
    }

    /// Exact rank at a point (float SVD rank when entries are transcendental).
    pub fn rank_at_point(&self, point: &Point) -> Result<usize, EvalError> {
        if self.columns.is_empty() {
            return Ok(0);
        }
        Ok(self.evaluate(point)?.rank())
    }

    /// Maximum rank over deterministic sample points; coordinates in `fixed`
    /// are held at their values.
    pub fn generic_rank_with(&self, sampler: &Sampler, fixed: &Point) -> Result<usize, GeometryError> {
        if self.columns.is_empty() {
            return Ok(0);
        }
        let full = self.n_rows().min(self.n_cols());
        let ids: Vec<SymbolId> = self.free_symbols().into_iter().filter(|s| !fixed.contains_key(s)).collect();
        if ids.is_empty() {
            return self.rank_at_point(fixed).map_err(|_| GeometryError::AllSamplesFailed);
        }
        let mut best = None;
        let mut ok = 0;
        for pt in sampler.points(&ids, fixed) {
            let Ok(r) = self.rank_at_point(&pt) else { continue };
            best = Some(best.map_or(r, |b: usize| b.max(r)));
            ok += 1;
            if r == full || ok >= sampler.samples {
                break;
            }
        }
        best.ok_or(GeometryError::AllSamplesFailed)
    }

    pub fn generic_rank(&self, sampler: &Sampler) -> Result<usize, GeometryError> {
        self.generic_rank_with(sampler, &Point::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{int, parse_expr, SymbolTable};

    #[test]
    fn ranks_of_example_one_controls() {
        let t = SymbolTable::new(&["x1", "x2", "x3"], &["u1", "u2"], 0, 0, 0).unwrap();
        let frame = Frame::new(t.states());
        let p = |s: &str| parse_expr(s, &t).unwrap();
        let f1 = VectorField::new(frame.clone(), vec![p("x1"), p("0"), p("0")]).unwrap();
        let f2 = VectorField::new(frame.clone(), vec![p("0"), p("0"), p("1")]).unwrap();
        let g = FieldMatrix::new(frame.clone(), vec![f1, f2]).unwrap();
        let at = |x1: i64| Point::from([(t.state(0), int(x1)), (t.state(1), int(0)), (t.state(2), int(0))]);
        assert_eq!(g.rank_at_point(&at(1)).unwrap(), 2);
        assert_eq!(g.rank_at_point(&at(0)).unwrap(), 1);
        assert_eq!(g.generic_rank(&Sampler::default()).unwrap(), 2);
        let z = FieldMatrix::new(frame.clone(), vec![VectorField::zero(frame)]).unwrap();
        assert_eq!(z.generic_rank(&Sampler::default()).unwrap(), 0);
        assert_eq!(z.rank_at_point(&at(1)).unwrap(), 0);
    }

    #[test]
    fn float_path_for_transcendental_entries() {
        let t = SymbolTable::free(&["x", "y"]).unwrap();
        let frame = Frame::new(vec![SymbolId(0), SymbolId(1)]);
        let p = |s: &str| parse_expr(s, &t).unwrap();
        let a = VectorField::new(frame.clone(), vec![p("cos(y)"), p("sin(y)")]).unwrap();
        let b = VectorField::new(frame.clone(), vec![p("-sin(y)"), p("cos(y)")]).unwrap();
        let m = FieldMatrix::new(frame, vec![a.clone(), b]).unwrap();
        assert_eq!(m.generic_rank(&Sampler::default()).unwrap(), 2);
        let pt = Point::from([(SymbolId(0), int(0)), (SymbolId(1), int(0))]);
        assert_eq!(m.rank_at_point(&pt).unwrap(), 2);
    }
}
