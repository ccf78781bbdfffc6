//! Γ-accessibility and strong accessibility rank conditions, the generic
//! first-order condition `rank{f₁,…,f_m,[g,f_k]} = n`, and point classification.

use serde::Serialize;

use crate::geometry::{
    ad_power, bracket_round, lie_bracket, ControlAffineSystem, Distribution, FieldMatrix, GeometryError, VectorField,
};
use crate::sampling::{Point, Sampler};
use crate::symbolic::{Expr, Rational, SymbolId};

/// How a tower construction ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TowerOutcome {
    /// Rank `n` reached at the point.
    FullRank,
    /// No new bracket raised either rank: the tower is stationary below `n`.
    Stabilized,
    /// The level budget ran out first.
    BudgetExhausted,
}

/// Nested distributions `T₀ ⊂ T₁ ⊂ …` with per-level ranks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tower {
    pub levels: Vec<Distribution>,
    pub generic_ranks: Vec<usize>,
    /// Rank with the point's coordinates fixed (any unbound symbols sampled).
    pub point_ranks: Vec<usize>,
    /// First level whose rank at the point equals the frame dimension.
    pub k_star: Option<usize>,
    pub outcome: TowerOutcome,
    /// Brackets dropped because they raised neither rank.
    pub pruned: usize,
}

pub type GammaTower = Tower;
pub type DTower = Tower;

impl Tower {
    pub fn final_point_rank(&self) -> usize {
        *self.point_ranks.last().unwrap_or(&0)
    }
}

/// Point binding states to `x` and controls to `u`.
pub fn state_control_point(sys: &ControlAffineSystem, x: &[Rational], u: &[Rational]) -> Result<Point, GeometryError> {
    if x.len() != sys.n() {
        return Err(GeometryError::Arity { expected: sys.n(), found: x.len() });
    }
    if u.len() != sys.m() {
        return Err(GeometryError::Arity { expected: sys.m(), found: u.len() });
    }
    Ok(sys.state_ids().into_iter().zip(x.iter().cloned()).chain(sys.control_ids().into_iter().zip(u.iter().cloned())).collect())
}

pub(crate) struct TowerSpec<'a> {
    pub initial: Vec<VectorField>,
    pub step: &'a dyn Fn(&VectorField) -> Result<VectorField, GeometryError>,
    pub close: bool,
    pub budget: usize,
    /// Coordinates held fixed for point ranks.
    pub point: &'a Point,
    /// Ranks are reported in these coordinates; every generator must have
    /// zero components elsewhere.
    pub full_dim: usize,
}

fn ranks(d: &Distribution, sampler: &Sampler, point: &Point) -> Result<(usize, usize), GeometryError> {
    let m = d.matrix();
    Ok((m.generic_rank(sampler)?, m.generic_rank_with(sampler, point)?))
}

/// Shared level-by-level construction: each level brackets only the newest
/// generators (the frontier) and keeps results that raise the generic rank
/// or the rank at the point.
pub(crate) fn build_tower(spec: TowerSpec<'_>, sampler: &Sampler) -> Result<Tower, GeometryError> {
    let frame = spec.initial.first().ok_or(GeometryError::Empty)?.frame().clone();
    let mut current = Distribution::with_frame(frame, spec.initial.clone())?;
    let mut frontier: Vec<VectorField> = spec.initial.clone();
    let mut pruned = 0;
    let (mut rank, mut rank_pt) = ranks(&current, sampler, spec.point)?;
    let mut tower = Tower {
        levels: vec![current.clone()],
        generic_ranks: vec![rank],
        point_ranks: vec![rank_pt],
        k_star: None,
        outcome: TowerOutcome::BudgetExhausted,
        pruned: 0,
    };
    for level in 0..=spec.budget {
        if rank_pt == spec.full_dim {
            tower.k_star = Some(level);
            tower.outcome = TowerOutcome::FullRank;
            break;
        }
        if level == spec.budget {
            break;
        }
        let mut closed_any = false;
        if spec.close {
            let before = current.len();
            let (closed, grew) = close(&current, sampler, spec.point, spec.full_dim)?;
            frontier.extend(closed.generators()[before..].iter().cloned());
            current = closed;
            closed_any = grew;
            (rank, rank_pt) = ranks(&current, sampler, spec.point)?;
        }
        let mut next = Vec::new();
        for v in &frontier {
            let b = (spec.step)(v)?;
            if b.is_zero() {
                pruned += 1;
                continue;
            }
            let mut trial = current.clone();
            trial.push(b.clone())?;
            let (r, rp) = ranks(&trial, sampler, spec.point)?;
            if r > rank || rp > rank_pt {
                current = trial;
                rank = r;
                rank_pt = rp;
                next.push(b);
            } else {
                pruned += 1;
            }
        }
        tower.levels.push(current.clone());
        tower.generic_ranks.push(rank);
        tower.point_ranks.push(rank_pt);
        if next.is_empty() && !closed_any && rank_pt < spec.full_dim {
            tower.outcome = TowerOutcome::Stabilized;
            break;
        }
        frontier = next;
    }
    tower.pruned = pruned;
    Ok(tower)
}

/// Involutive closure keeping brackets that raise the generic or point rank.
fn close(d: &Distribution, sampler: &Sampler, point: &Point, full_dim: usize) -> Result<(Distribution, bool), GeometryError> {
    let mut out = d.clone();
    let mut any = false;
    for _ in 0..=full_dim {
        let (g, p) = ranks(&out, sampler, point)?;
        if g == full_dim && p == full_dim {
            break;
        }
        let (next, grew) = bracket_round(&out, sampler, Some(point))?;
        if !grew {
            break;
        }
        any = true;
        out = next;
    }
    Ok((out, any))
}

/// Outcome of the generic first-order test at a point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GenericCondition {
    /// Smallest index `k` with `rank{f₁,…,f_m,[g,f_k]} = n` at the point.
    pub holds_with_k: Option<usize>,
    /// `(k, rank)` for every index tested.
    pub ranks: Vec<(usize, usize)>,
    /// Whether the drift index `k = 0` was included (nonstandard).
    pub drift_included: bool,
}

/// Tests `rank{f₁,…,f_m,[g,f_k]}(x,u) = n` for `k = 1..m`, plus `k = 0`
/// (the drift) first when `include_drift` is set. `[g,f_k]` is computed with
/// symbolic `u` and evaluated at the point.
pub fn check_generic_condition(
    sys: &ControlAffineSystem,
    point: &Point,
    include_drift: bool,
) -> Result<GenericCondition, GeometryError> {
    let g = sys.g_symbolic();
    let start = if include_drift { 0 } else { 1 };
    let mut ranks = Vec::new();
    let mut holds = None;
    for k in start..=sys.m() {
        let bracket = lie_bracket(&g, sys.field(k))?;
        let mut cols = sys.controls().to_vec();
        cols.push(bracket);
        let r = FieldMatrix::new(sys.frame().clone(), cols)?.rank_at_point(point)?;
        ranks.push((k, r));
        if r == sys.n() && holds.is_none() {
            holds = Some(k);
            break;
        }
    }
    Ok(GenericCondition { holds_with_k: holds, ranks, drift_included: include_drift })
}

/// Default level budget `2n`.
pub fn default_budget(sys: &ControlAffineSystem) -> usize {
    2 * sys.n()
}

/// `Γ₀ = span{f₁,…,f_m}`, `Γ_{k+1} = Γ_k + ad_g Γ_k` with `u` symbolic,
/// ranks evaluated at `(x, u)`.
pub fn gamma_accessibility(
    sys: &ControlAffineSystem,
    point: &Point,
    budget: usize,
    sampler: &Sampler,
) -> Result<GammaTower, GeometryError> {
    let g = sys.g_symbolic();
    let step = |v: &VectorField| ad_power(&g, v, 1);
    build_tower(
        TowerSpec { initial: sys.controls().to_vec(), step: &step, close: false, budget, point, full_dim: sys.n() },
        sampler,
    )
}

/// `𝒟₀ = Γ₀`, `𝒟_{k+1} = 𝒟̄_k + ad_{f₀} 𝒟̄_k` with involutive closures between steps.
pub fn strong_accessibility(
    sys: &ControlAffineSystem,
    point: &Point,
    budget: usize,
    sampler: &Sampler,
) -> Result<DTower, GeometryError> {
    let f0 = sys.drift().clone();
    let step = |v: &VectorField| ad_power(&f0, v, 1);
    build_tower(
        TowerSpec { initial: sys.controls().to_vec(), step: &step, close: true, budget, point, full_dim: sys.n() },
        sampler,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum PointClass {
    /// The generic condition holds with index `k`.
    InOmega0 { k: usize },
    /// Γ-accessibility holds (first full-rank level `k_star`) but the generic condition fails.
    InOmegaOnly { k_star: usize },
    /// The Γ tower is stationary below `n`: a candidate intrinsic singularity (not flat here).
    OutsideOmega { rank: usize },
    Indeterminate,
}

impl PointClass {
    pub fn label(&self) -> String {
        match self {
            PointClass::InOmega0 { k } => format!("InOmega0(k={k})"),
            PointClass::InOmegaOnly { k_star } => format!("InOmegaOnly(k*={k_star})"),
            PointClass::OutsideOmega { rank } => format!("OutsideOmega(rank={rank})"),
            PointClass::Indeterminate => "Indeterminate".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub class: PointClass,
    pub generic: GenericCondition,
    pub gamma: GammaTower,
}

pub fn classify_point(
    sys: &ControlAffineSystem,
    point: &Point,
    budget: usize,
    sampler: &Sampler,
) -> Result<Classification, GeometryError> {
    let generic = check_generic_condition(sys, point, false)?;
    let gamma = gamma_accessibility(sys, point, budget, sampler)?;
    let class = if let Some(k) = generic.holds_with_k {
        PointClass::InOmega0 { k }
    } else {
        match (gamma.outcome, gamma.k_star) {
            (TowerOutcome::FullRank, Some(k_star)) => PointClass::InOmegaOnly { k_star },
            (TowerOutcome::Stabilized, _) => PointClass::OutsideOmega { rank: gamma.final_point_rank() },
            _ => PointClass::Indeterminate,
        }
    };
    Ok(Classification { class, generic, gamma })
}

/// Symbols of the system's state and control coordinates, used when sampling points.
pub fn state_control_ids(sys: &ControlAffineSystem) -> Vec<SymbolId> {
    let mut ids = sys.state_ids();
    ids.extend(sys.control_ids());
    ids
}

/// `g` with the inputs fixed to the point's control values.
pub fn g_at_inputs(sys: &ControlAffineSystem, point: &Point) -> Result<VectorField, GeometryError> {
    let u: Vec<Expr> = sys
        .control_ids()
        .into_iter()
        .map(|c| point.get(&c).cloned().map(Expr::Const).unwrap_or(Expr::Var(c)))
        .collect();
    sys.g(&u)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::symbolic::{int, parse_expr, SymbolTable};

    fn system(states: &[&str], controls: &[&str], f0: &[&str], fs: &[&[&str]]) -> ControlAffineSystem {
        let t = Arc::new(SymbolTable::new(states, controls, 0, 0, 0).unwrap());
        let p = |s: &str| parse_expr(s, &t).unwrap();
        ControlAffineSystem::new(
            "test",
            t.clone(),
            f0.iter().map(|s| p(s)).collect(),
            fs.iter().map(|f| f.iter().map(|s| p(s)).collect()).collect(),
        )
        .unwrap()
    }

    fn ex1() -> ControlAffineSystem {
        system(&["x1", "x2", "x3"], &["u1", "u2"], &["x2", "x3", "0"], &[&["x1", "0", "0"], &["0", "0", "1"]])
    }

    fn pt(sys: &ControlAffineSystem, x: &[i64], u: &[i64]) -> Point {
        let x: Vec<_> = x.iter().map(|&v| int(v)).collect();
        let u: Vec<_> = u.iter().map(|&v| int(v)).collect();
        state_control_point(sys, &x, &u).unwrap()
    }

    #[test]
    fn example_one_generic_condition() {
        let sys = ex1();
        let c = check_generic_condition(&sys, &pt(&sys, &[1, 0, 0], &[0, 0]), false).unwrap();
        assert_eq!(c.holds_with_k, Some(2));
        let c = check_generic_condition(&sys, &pt(&sys, &[0, 1, 1], &[2, -1]), false).unwrap();
        assert_eq!(c.holds_with_k, None);
    }

    #[test]
    fn example_one_classification() {
        let sys = ex1();
        let s = Sampler::default();
        let c = classify_point(&sys, &pt(&sys, &[1, 0, 0], &[0, 0]), 6, &s).unwrap();
        assert_eq!(c.class, PointClass::InOmega0 { k: 2 });
        assert_eq!(c.gamma.k_star, Some(1));
        let c = classify_point(&sys, &pt(&sys, &[0, 1, 0], &[0, 0]), 6, &s).unwrap();
        assert_eq!(c.class, PointClass::InOmegaOnly { k_star: 1 });
        let c = classify_point(&sys, &pt(&sys, &[0, 0, 0], &[0, 0]), 6, &s).unwrap();
        assert_eq!(c.class, PointClass::InOmegaOnly { k_star: 2 });
    }

    #[test]
    fn non_accessible_system_is_outside_omega() {
        let sys = system(&["x1", "x2"], &["u1"], &["0", "x2"], &[&["1", "0"]]);
        let s = Sampler::default();
        let c = classify_point(&sys, &pt(&sys, &[1, 1], &[1]), 4, &s).unwrap();
        assert_eq!(c.class, PointClass::OutsideOmega { rank: 1 });
        assert_eq!(c.gamma.outcome, TowerOutcome::Stabilized);
    }

    #[test]
    fn strong_accessibility_of_driftless_example_two() {
        let sys = system(
            &["x1", "x2", "x3", "x4"],
            &["u1", "u2", "u3"],
            &["0", "0", "0", "0"],
            &[&["1", "x3", "x4", "0"], &["0", "0", "0", "1"], &["0", "0", "x1", "0"]],
        );
        let s = Sampler::default();
        let d = strong_accessibility(&sys, &pt(&sys, &[1, 1, 1, 1], &[1, 0, 0]), 8, &s).unwrap();
        assert_eq!(d.generic_ranks.last(), Some(&4));
        assert_eq!(d.outcome, TowerOutcome::FullRank);
        let d = strong_accessibility(&ex1(), &pt(&ex1(), &[1, 0, 0], &[0, 0]), 6, &s).unwrap();
        assert_eq!(d.final_point_rank(), 3);
    }
}
