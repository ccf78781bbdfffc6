use std::sync::Arc;

use crate::sampling::Sampler;
use crate::symbolic::{Expr, SymbolId, SymbolTable};

use super::{ad_power, FieldMatrix, Frame, GeometryError, VectorField};

/// `ẋ = f₀(x) + Σ uᵢ fᵢ(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlAffineSystem {
    name: String,
    table: Arc<SymbolTable>,
    frame: Frame,
    drift: VectorField,
    controls: Vec<VectorField>,
    warnings: Vec<String>,
}

impl ControlAffineSystem {
    /// Builds a system whose state frame is `table.states()` and whose
    /// control symbols are `table.controls()`.
    pub fn new(
        name: impl Into<String>,
        table: Arc<SymbolTable>,
        drift: Vec<Expr>,
        controls: Vec<Vec<Expr>>,
    ) -> Result<Self, GeometryError> {
        let n = table.n_states();
        if n < 2 {
            return Err(GeometryError::Invalid(format!("need at least 2 states, got {n}")));
        }
        if controls.is_empty() {
            return Err(GeometryError::Invalid("need at least one control field".into()));
        }
        if controls.len() != table.n_controls() {
            return Err(GeometryError::Arity { expected: table.n_controls(), found: controls.len() });
        }
        if controls.len() > n - 1 {
            return Err(GeometryError::Invalid(format!("at most {} controls allowed, got {}", n - 1, controls.len())));
        }
        let frame = Frame::new(table.states());
        let state_ids = table.states();
        let only_states = |e: &Expr| e.free_symbols().iter().all(|s| state_ids.contains(s));
        if !drift.iter().chain(controls.iter().flatten()).all(only_states) {
            return Err(GeometryError::Invalid("vector field components may only depend on states".into()));
        }
        let drift = VectorField::new(frame.clone(), drift)?;
        let controls = controls
            .into_iter()
            .map(|c| VectorField::new(frame.clone(), c))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sys = ControlAffineSystem { name: name.into(), table, frame, drift, controls, warnings: Vec::new() };
        let m = sys.controls.len();
        if sys.control_matrix().generic_rank(&Sampler::default()).unwrap_or(0) < m {
            sys.warnings.push(format!("control fields are not generically independent (generic rank < {m})"));
        }
        Ok(sys)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn table(&self) -> &Arc<SymbolTable> {
        &self.table
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn n(&self) -> usize {
        self.frame.dim()
    }

    pub fn m(&self) -> usize {
        self.controls.len()
    }

    pub fn drift(&self) -> &VectorField {
        &self.drift
    }

    pub fn controls(&self) -> &[VectorField] {
        &self.controls
    }

    /// `f_i` with a 1-based index (`0` is the drift).
    pub fn field(&self, i: usize) -> &VectorField {
        if i == 0 {
            &self.drift
        } else {
            &self.controls[i - 1]
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn state_ids(&self) -> Vec<SymbolId> {
        self.table.states()
    }

    pub fn control_ids(&self) -> Vec<SymbolId> {
        self.table.controls()
    }

    /// Same system over a symbol table with control jets up to `order`
    /// (and `n_outputs` flat-output jets up to `output_order`). Existing ids are preserved.
    pub fn with_jets(&self, order: usize, n_outputs: usize, output_order: usize) -> Result<Self, GeometryError> {
        let names = |ids: Vec<SymbolId>| ids.into_iter().map(|i| self.table.name(i).to_string()).collect::<Vec<_>>();
        let table = SymbolTable::new(&names(self.table.states()), &names(self.table.controls()), order, n_outputs, output_order)
            .map_err(|e| GeometryError::Invalid(e.to_string()))?;
        Ok(ControlAffineSystem { table: Arc::new(table), ..self.clone() })
    }

    /// `G = (f₁, …, f_m)`.
    pub fn control_matrix(&self) -> FieldMatrix {
        FieldMatrix::new(self.frame.clone(), self.controls.clone()).expect("controls share the state frame")
    }

    /// `g = f₀ + Σ uᵢ fᵢ` for the given input expressions.
    pub fn g(&self, u: &[Expr]) -> Result<VectorField, GeometryError> {
        if u.len() != self.m() {
            return Err(GeometryError::Arity { expected: self.m(), found: u.len() });
        }
        let mut g = self.drift.clone();
        for (ui, fi) in u.iter().zip(&self.controls) {
            if !ui.is_zero() {
                g = g.add(&fi.scale(ui))?;
            }
        }
        Ok(g)
    }

    /// `g` with the control symbols themselves as inputs.
    pub fn g_symbolic(&self) -> VectorField {
        let u: Vec<Expr> = self.control_ids().into_iter().map(Expr::Var).collect();
        self.g(&u).expect("arity matches")
    }
}

/// `g(x, u) = f₀(x) + Σ uᵢ fᵢ(x)`.
pub fn system_field_g(sys: &ControlAffineSystem, u: &[Expr]) -> Result<VectorField, GeometryError> {
    sys.g(u)
}

/// `(G, −ad_g G, …, (−1)^k ad_g^k G)`, block `j` holding `(−1)^j ad_g^j fᵢ` for each control.
pub fn wronskian_matrix(sys: &ControlAffineSystem, u: &[Expr], k: usize) -> Result<FieldMatrix, GeometryError> {
    let g = sys.g(u)?;
    let mut cols = Vec::with_capacity((k + 1) * sys.m());
    let mut block: Vec<VectorField> = sys.controls().to_vec();
    for j in 0..=k {
        if j > 0 {
            block = block.iter().map(|c| ad_power(&g, c, 1).map(|b| b.neg())).collect::<Result<_, _>>()?;
        }
        cols.extend(block.iter().cloned());
    }
    FieldMatrix::new(sys.frame().clone(), cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Point;
    use crate::symbolic::{int, parse_expr};

    pub(crate) fn example_one() -> ControlAffineSystem {
        let t = Arc::new(SymbolTable::new(&["x1", "x2", "x3"], &["u1", "u2"], 0, 0, 0).unwrap());
        let p = |s: &str| parse_expr(s, &t).unwrap();
        ControlAffineSystem::new(
            "example1",
            t.clone(),
            vec![p("x2"), p("x3"), p("0")],
            vec![vec![p("x1"), p("0"), p("0")], vec![p("0"), p("0"), p("1")]],
        )
        .unwrap()
    }

    #[test]
    fn g_field() {
        let sys = example_one();
        let t = sys.table().clone();
        let p = |s: &str| parse_expr(s, &t).unwrap();
        assert_eq!(sys.g_symbolic().components(), &[p("x1*u1 + x2"), p("x3"), p("u2")]);
        assert_eq!(&sys.g(&[Expr::zero(), Expr::zero()]).unwrap(), sys.drift());
        assert!(sys.g(&[Expr::zero()]).is_err());
        assert!(sys.warnings().is_empty());
    }

    #[test]
    fn wronskian_rank_example_one() {
        let sys = example_one();
        let u: Vec<Expr> = sys.control_ids().into_iter().map(Expr::Var).collect();
        let w0 = wronskian_matrix(&sys, &u, 0).unwrap();
        assert_eq!(w0, sys.control_matrix());
        let w1 = wronskian_matrix(&sys, &u, 1).unwrap();
        assert_eq!(w1.n_cols(), 4);
        let t = sys.table();
        let pt: Point = [(t.state(0), 1), (t.state(1), 0), (t.state(2), 0), (t.control(0), 0), (t.control(1), 0)]
            .into_iter()
            .map(|(s, v)| (s, int(v)))
            .collect();
        assert_eq!(w1.rank_at_point(&pt).unwrap(), 3);
    }

    #[test]
    fn rejects_state_dependence_on_controls() {
        let t = Arc::new(SymbolTable::new(&["x1", "x2"], &["u1"], 0, 0, 0).unwrap());
        let p = |s: &str| parse_expr(s, &t).unwrap();
        assert!(ControlAffineSystem::new("bad", t.clone(), vec![p("u1"), p("0")], vec![vec![p("1"), p("0")]]).is_err());
        let dep = ControlAffineSystem::new("dep", t.clone(), vec![p("0"), p("0")], vec![vec![p("0"), p("0")]]).unwrap();
        assert_eq!(dep.warnings().len(), 1);
    }
}
