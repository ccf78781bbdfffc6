use std::fmt;
use std::sync::Arc;

use crate::symbolic::{Expr, RatFun, SymbolId, SymbolTable, SymbolicError};

use super::GeometryError;

/// Ordered coordinates a vector field is expressed in.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame(Arc<Vec<SymbolId>>);

impl Frame {
    pub fn new(coords: Vec<SymbolId>) -> Self {
        Frame(Arc::new(coords))
    }

    pub fn coords(&self) -> &[SymbolId] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn position(&self, id: SymbolId) -> Option<usize> {
        self.0.iter().position(|c| *c == id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VectorField {
    frame: Frame,
    comps: Vec<Expr>,
}

impl VectorField {
    pub fn new(frame: Frame, comps: Vec<Expr>) -> Result<Self, GeometryError> {
        if comps.len() != frame.dim() {
            return Err(GeometryError::Arity { expected: frame.dim(), found: comps.len() });
        }
        Ok(VectorField { frame, comps })
    }

    pub fn zero(frame: Frame) -> Self {
        let comps = vec![Expr::zero(); frame.dim()];
        VectorField { frame, comps }
    }

    /// `∂/∂x_i` for the `i`-th coordinate.
    pub fn coordinate(frame: Frame, i: usize) -> Self {
        let mut v = VectorField::zero(frame);
        v.comps[i] = Expr::one();
        v
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &Expr {
        &self.comps[i]
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Expr::is_zero)
    }

    fn same_frame(&self, other: &VectorField) -> Result<(), GeometryError> {
        if self.frame == other.frame {
            Ok(())
        } else {
            Err(GeometryError::FrameMismatch)
        }
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField, GeometryError> {
        self.same_frame(other)?;
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect();
        Ok(VectorField { frame: self.frame.clone(), comps })
    }

    pub fn scale(&self, k: &Expr) -> VectorField {
        VectorField { frame: self.frame.clone(), comps: self.comps.iter().map(|c| k * c).collect() }
    }

    pub fn neg(&self) -> VectorField {
        VectorField { frame: self.frame.clone(), comps: self.comps.iter().map(|c| -c).collect() }
    }

    /// Same components embedded into a larger frame (extra coordinates get zero).
    pub fn embed(&self, frame: &Frame) -> Result<VectorField, GeometryError> {
        let mut comps = vec![Expr::zero(); frame.dim()];
        for (c, e) in self.frame.coords().iter().zip(&self.comps) {
            let i = frame.position(*c).ok_or(GeometryError::FrameMismatch)?;
            comps[i] = e.clone();
        }
        Ok(VectorField { frame: frame.clone(), comps })
    }

    /// Components restricted to a sub-frame (other components dropped).
    pub fn project(&self, frame: &Frame) -> Result<VectorField, GeometryError> {
        let comps = frame
            .coords()
            .iter()
            .map(|c| self.frame.position(*c).map(|i| self.comps[i].clone()).ok_or(GeometryError::FrameMismatch))
            .collect::<Result<_, _>>()?;
        Ok(VectorField { frame: frame.clone(), comps })
    }

    /// Substitutes symbols in every component.
    pub fn substitute(
        &self,
        map: &std::collections::BTreeMap<SymbolId, Expr>,
    ) -> Result<VectorField, SymbolicError> {
        let comps = self.comps.iter().map(|c| c.substitute(map)).collect::<Result<_, _>>()?;
        Ok(VectorField { frame: self.frame.clone(), comps })
    }

    pub fn display<'a>(&'a self, table: &'a SymbolTable) -> FieldDisplay<'a> {
        FieldDisplay { field: self, table }
    }

    /// Sum of degrees of the components (rational components count high);
    /// used as a "smallest first" ordering key.
    pub fn weight(&self) -> usize {
        self.comps.iter().map(|c| c.total_degree().map_or(c.complexity() + 100, |d| d as usize)).sum()
    }

    fn ratfuns(&self) -> Result<Vec<RatFun>, SymbolicError> {
        self.comps.iter().map(Expr::to_ratfun).collect()
    }
}

pub struct FieldDisplay<'a> {
    field: &'a VectorField,
    table: &'a SymbolTable,
}

impl fmt::Display for FieldDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.field.comps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", c.display(self.table))?;
        }
        f.write_str("]")
    }
}

/// `L_a h = Σ_j a_j ∂h/∂x_j`.
pub fn lie_derivative(a: &VectorField, h: &Expr) -> Result<Expr, GeometryError> {
    let hr = h.to_ratfun()?;
    let mut acc = RatFun::zero();
    for (c, aj) in a.frame.coords().iter().zip(&a.comps) {
        if aj.is_zero() || !hr.contains_symbol(*c) {
            continue;
        }
        acc = acc.add(&aj.to_ratfun()?.mul(&hr.derivative(*c)?));
    }
    Ok(acc.to_expr())
}

/// `[a, b] = (∂b/∂x) a − (∂a/∂x) b`.
pub fn lie_bracket(a: &VectorField, b: &VectorField) -> Result<VectorField, GeometryError> {
    a.same_frame(b)?;
    let ar = a.ratfuns()?;
    let br = b.ratfuns()?;
    let coords = a.frame.coords();
    let mut comps = Vec::with_capacity(coords.len());
    for i in 0..coords.len() {
        let mut acc = RatFun::zero();
        for (j, c) in coords.iter().enumerate() {
            if !ar[j].is_zero() && br[i].contains_symbol(*c) {
                acc = acc.add(&br[i].derivative(*c)?.mul(&ar[j]));
            }
            if !br[j].is_zero() && ar[i].contains_symbol(*c) {
                acc = acc.sub(&ar[i].derivative(*c)?.mul(&br[j]));
            }
        }
        comps.push(acc.to_expr());
    }
    Ok(VectorField { frame: a.frame.clone(), comps })
}

/// `ad^k_eta gamma`.
pub fn ad_power(eta: &VectorField, gamma: &VectorField, k: usize) -> Result<VectorField, GeometryError> {
    eta.same_frame(gamma)?;
    let mut out = gamma.clone();
    for _ in 0..k {
        out = lie_bracket(eta, &out)?;
    }
    Ok(out)
}
