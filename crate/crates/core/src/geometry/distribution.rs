use crate::sampling::{Point, Sampler};

use super::{lie_bracket, FieldMatrix, Frame, GeometryError, VectorField};

/// Span of a finite set of vector fields over a common frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distribution {
    frame: Frame,
    generators: Vec<VectorField>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMode<'a> {
    Generic,
    AtPoint(&'a Point),
}

/// Outcome of an involutivity test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Involutivity {
    Involutive,
    /// `[generators[i], generators[j]]` leaves the distribution.
    NotInvolutive { i: usize, j: usize, bracket: VectorField },
    /// Rank at the point differs from the generic rank.
    Indeterminate { rank_at_point: usize, generic_rank: usize },
}

impl Involutivity {
    pub fn is_involutive(&self) -> bool {
        matches!(self, Involutivity::Involutive)
    }
}

impl Distribution {
    pub fn new(generators: Vec<VectorField>) -> Result<Self, GeometryError> {
        let frame = generators.first().ok_or(GeometryError::Empty)?.frame().clone();
        Distribution::with_frame(frame, generators)
    }

    /// Distribution over `frame`, allowing an empty generator list (rank 0).
    pub fn with_frame(frame: Frame, generators: Vec<VectorField>) -> Result<Self, GeometryError> {
        if generators.iter().any(|g| g.frame() != &frame) {
            return Err(GeometryError::FrameMismatch);
        }
        Ok(Distribution { frame, generators })
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn generators(&self) -> &[VectorField] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn push(&mut self, v: VectorField) -> Result<(), GeometryError> {
        if v.frame() != &self.frame {
            return Err(GeometryError::FrameMismatch);
        }
        self.generators.push(v);
        Ok(())
    }

    pub fn matrix(&self) -> FieldMatrix {
        FieldMatrix::new(self.frame.clone(), self.generators.clone()).expect("generators share the frame")
    }

    pub fn rank(&self, mode: RankMode<'_>, sampler: &Sampler) -> Result<usize, GeometryError> {
        let m = self.matrix();
        match mode {
            RankMode::Generic => m.generic_rank(sampler),
            RankMode::AtPoint(p) => Ok(m.rank_at_point(p)?),
        }
    }

    pub fn generic_rank(&self, sampler: &Sampler) -> Result<usize, GeometryError> {
        self.matrix().generic_rank(sampler)
    }

    /// Generators ordered by ascending weight, ties by position.
    fn by_weight(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.generators.len()).collect();
        order.sort_by_key(|&i| (self.generators[i].weight(), i));
        order
    }

    /// Indices of a basis: greedy column pivoting in smallest-weight-first
    /// order, at `point` or at the first sample point realizing the generic rank.
    pub fn basis(&self, mode: RankMode<'_>, sampler: &Sampler) -> Result<Vec<usize>, GeometryError> {
        if self.generators.is_empty() {
            return Ok(Vec::new());
        }
        let m = self.matrix();
        let order = self.by_weight();
        match mode {
            RankMode::AtPoint(p) => Ok(m.evaluate(p)?.independent_columns(&order)),
            RankMode::Generic => {
                let r = m.generic_rank(sampler)?;
                let ids: Vec<_> = m.free_symbols().into_iter().collect();
                for pt in sampler.points(&ids, &Point::new()) {
                    if let Ok(ev) = m.evaluate(&pt) {
                        if ev.rank() == r {
                            return Ok(ev.independent_columns(&order));
                        }
                    }
                }
                Err(GeometryError::AllSamplesFailed)
            }
        }
    }
}

/// Whether every bracket of basis generators stays in the distribution.
///
/// At a point, the rank there must equal the generic rank, otherwise the
/// verdict is [`Involutivity::Indeterminate`].
pub fn is_involutive(d: &Distribution, mode: RankMode<'_>, sampler: &Sampler) -> Result<Involutivity, GeometryError> {
    if d.is_empty() {
        return Ok(Involutivity::Involutive);
    }
    let generic = d.generic_rank(sampler)?;
    if let RankMode::AtPoint(_) = mode {
        let here = d.rank(mode, sampler)?;
        if here != generic {
            return Ok(Involutivity::Indeterminate { rank_at_point: here, generic_rank: generic });
        }
    }
    if generic == 0 {
        return Ok(Involutivity::Involutive);
    }
    let basis = d.basis(mode, sampler)?;
    let r = basis.len();
    let gens = d.generators();
    for (a, &p) in basis.iter().enumerate() {
        for &q in &basis[a + 1..] {
            let (i, j) = (p.min(q), p.max(q));
            let bracket = lie_bracket(&gens[i], &gens[j])?;
            if bracket.is_zero() {
                continue;
            }
            let mut cols: Vec<VectorField> = basis.iter().map(|&k| gens[k].clone()).collect();
            cols.push(bracket.clone());
            let m = FieldMatrix::new(d.frame().clone(), cols)?;
            let rank = match mode {
                RankMode::Generic => m.generic_rank(sampler)?,
                RankMode::AtPoint(pt) => m.rank_at_point(pt)?,
            };
            if rank > r {
                return Ok(Involutivity::NotInvolutive { i, j, bracket });
            }
        }
    }
    Ok(Involutivity::Involutive)
}

/// Adjoins brackets until the generic rank (and the rank at `point`, if
/// given) stops growing. Only brackets that raise one of these ranks are kept.
pub fn involutive_closure(d: &Distribution, max_steps: usize, sampler: &Sampler) -> Result<Distribution, GeometryError> {
    involutive_closure_at(d, max_steps, sampler, None)
}

pub fn involutive_closure_at(
    d: &Distribution,
    max_steps: usize,
    sampler: &Sampler,
    point: Option<&Point>,
) -> Result<Distribution, GeometryError> {
    let mut out = d.clone();
    for _ in 0..max_steps {
        let (next, grew) = bracket_round(&out, sampler, point)?;
        if !grew {
            return Ok(next);
        }
        out = next;
    }
    match bracket_round(&out, sampler, point)? {
        (next, false) => Ok(next),
        _ => Err(GeometryError::ClosureBudget(max_steps)),
    }
}

/// One round of pairwise brackets among the current generators, keeping those
/// that raise the generic rank or the rank at `point`. Returns whether any was kept.
pub fn bracket_round(
    d: &Distribution,
    sampler: &Sampler,
    point: Option<&Point>,
) -> Result<(Distribution, bool), GeometryError> {
    let mut out = d.clone();
    if out.is_empty() {
        return Ok((out, false));
    }
    let full = out.frame().dim();
    let mut rank = out.generic_rank(sampler)?;
    let mut rank_pt = match point {
        Some(p) => out.rank(RankMode::AtPoint(p), sampler)?,
        None => 0,
    };
    let n = out.len();
    let mut grew = false;
    for i in 0..n {
        for j in i + 1..n {
            if rank == full && point.is_none_or(|_| rank_pt == full) {
                return Ok((out, grew));
            }
            let b = lie_bracket(&d.generators[i], &d.generators[j])?;
            if b.is_zero() {
                continue;
            }
            let mut trial = out.clone();
            trial.push(b)?;
            let r = trial.generic_rank(sampler)?;
            let rp = match point {
                Some(p) => trial.rank(RankMode::AtPoint(p), sampler)?,
                None => 0,
            };
            if r > rank || rp > rank_pt {
                out = trial;
                rank = r;
                rank_pt = rp;
                grew = true;
            }
        }
    }
    Ok((out, grew))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{int, parse_expr, SymbolTable};

    fn fields(t: &SymbolTable, frame: &Frame, comps: &[&[&str]]) -> Vec<VectorField> {
        comps
            .iter()
            .map(|c| VectorField::new(frame.clone(), c.iter().map(|s| parse_expr(s, t).unwrap()).collect()).unwrap())
            .collect()
    }

    #[test]
    fn example_two_gamma_a_not_involutive() {
        let t = SymbolTable::new(&["x1", "x2", "x3", "x4"], &["u1", "u2", "u3"], 0, 0, 0).unwrap();
        let frame = Frame::new(t.states());
        let d = Distribution::new(fields(&t, &frame, &[&["1", "x3", "x4", "0"], &["0", "0", "0", "1"]])).unwrap();
        let pt = Point::from([(t.state(0), int(0)), (t.state(1), int(1)), (t.state(2), int(1)), (t.state(3), int(1))]);
        let s = Sampler::default();
        let v = is_involutive(&d, RankMode::AtPoint(&pt), &s).unwrap();
        let expected = fields(&t, &frame, &[&["0", "0", "-1", "0"]]).pop().unwrap();
        assert_eq!(v, Involutivity::NotInvolutive { i: 0, j: 1, bracket: expected.clone() });
        assert!(!is_involutive(&d, RankMode::Generic, &s).unwrap().is_involutive());
        let (one, grew) = bracket_round(&d, &s, None).unwrap();
        assert!(grew);
        assert_eq!(one.generators()[2], expected);
        assert_eq!(one.generic_rank(&s).unwrap(), 3);
        let c = involutive_closure(&d, 4, &s).unwrap();
        assert_eq!(c.generic_rank(&s).unwrap(), 4);
        assert_eq!(involutive_closure(&d, 1, &s), Err(GeometryError::ClosureBudget(1)));
    }

    #[test]
    fn coordinate_fields_and_example_three_span() {
        let t = SymbolTable::new(&["x1", "x2", "x3", "x4", "x5", "x6"], &["u1"], 0, 0, 0).unwrap();
        let frame = Frame::new(t.states());
        let s = Sampler::default();
        let coords = Distribution::new(vec![VectorField::coordinate(frame.clone(), 0), VectorField::coordinate(frame.clone(), 1)]).unwrap();
        assert!(is_involutive(&coords, RankMode::Generic, &s).unwrap().is_involutive());
        let g1 = Distribution::new(fields(
            &t,
            &frame,
            &[
                &["0", "0", "0", "0", "0", "1"],
                &["0", "0", "0", "0", "1", "0"],
                &["0", "0", "0", "1", "0", "0"],
                &["0", "0", "x5", "0", "0", "0"],
            ],
        ))
        .unwrap();
        assert!(is_involutive(&g1, RankMode::Generic, &s).unwrap().is_involutive());
        let pt: Point = t.states().into_iter().map(|x| (x, int(1))).collect();
        assert!(is_involutive(&g1, RankMode::AtPoint(&pt), &s).unwrap().is_involutive());
        let mut pt0 = pt.clone();
        pt0.insert(t.state(4), int(0));
        assert!(matches!(is_involutive(&g1, RankMode::AtPoint(&pt0), &s).unwrap(), Involutivity::Indeterminate { .. }));
    }

    #[test]
    fn closure_adds_missing_direction() {
        let t = SymbolTable::new(&["x1", "x2"], &["u1"], 0, 0, 0).unwrap();
        let frame = Frame::new(t.states());
        let s = Sampler::default();
        let d = Distribution::new(fields(&t, &frame, &[&["1", "0"], &["0", "x1"]])).unwrap();
        let c = involutive_closure(&d, 3, &s).unwrap();
        assert_eq!(c.generic_rank(&s).unwrap(), 2);
        let origin = Point::from([(t.state(0), int(0)), (t.state(1), int(0))]);
        let c = involutive_closure_at(&d, 3, &s, Some(&origin)).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.rank(RankMode::AtPoint(&origin), &s).unwrap(), 2);
        let empty = Distribution::with_frame(frame, Vec::new()).unwrap();
        assert!(is_involutive(&empty, RankMode::Generic, &s).unwrap().is_involutive());
    }
}
