//! Flat outputs at points where the control fields lose rank: the `a`/`b`
//! split, the extended drift `F₀ᵇ` on a truncated jet frame, the `Γᵃ` tower,
//! Brunovský indices, the `Δ` matrix and flat-output assembly.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::accessibility::{build_tower, Tower, TowerOutcome, TowerSpec};
use crate::ansatz;
use crate::error::{Error, Result};
use crate::geometry::{
    ad_power, is_involutive, lie_bracket, lie_derivative, ControlAffineSystem, Distribution, FieldMatrix, Frame,
    Involutivity, RankMode, VectorField,
};
use crate::linalg;
use crate::numeric::{integrate, newton, FlatSignal, NewtonOptions, NumericError, Trajectory};
use crate::sampling::{Point, Sampler};
use crate::symbolic::{int, rat, CompiledExpr, Expr, Rational, SymbolId};

/// Partition of the control indices (1-based) into `a`, independent at the
/// point, and `b`, treated as part of the drift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegenerateSplit {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// `n − |a|`.
    pub p: usize,
}

impl DegenerateSplit {
    pub fn label(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        format!("a={{{}}},b={{{}}}", list(&self.a), list(&self.b))
    }
}

/// Greedy column pivoting of `f₁(x₀), …, f_m(x₀)`: independent columns go to `a`.
/// An explicit `(a, b)` override is validated instead.
pub fn choose_split(
    sys: &ControlAffineSystem,
    point: &Point,
    over: Option<(Vec<usize>, Vec<usize>)>,
) -> Result<DegenerateSplit> {
    let m = sys.m();
    let n = sys.n();
    if let Some((a, b)) = over {
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        if all != (1..=m).collect::<Vec<_>>() {
            return Err(Error::Invalid(format!("split must partition the control indices 1..={m}")));
        }
        if a.is_empty() || a.len() + 1 >= n {
            return Err(Error::Invalid("split needs 1 ≤ |a| ≤ n−2".into()));
        }
        let p = n - a.len();
        return Ok(DegenerateSplit { a, b, p });
    }
    let ev = sys.control_matrix().evaluate(point)?;
    let order: Vec<usize> = (0..m).collect();
    let a: Vec<usize> = ev.independent_columns(&order).into_iter().map(|i| i + 1).collect();
    if a.is_empty() {
        return Err(Error::Invalid("all control fields vanish at the point".into()));
    }
    if a.len() == m {
        return Err(Error::Invalid("control fields are independent at the point; use the generic route".into()));
    }
    if a.len() + 1 >= n {
        return Err(Error::Invalid("rank drop leaves p = 1; the degenerate route needs p > 1".into()));
    }
    let b = (1..=m).filter(|i| !a.contains(i)).collect();
    Ok(DegenerateSplit { p: n - a.len(), a, b })
}

/// State coordinates plus `u_b^{(0..=K)}`; `u_b^{(K+1)}` is an inert symbol.
#[derive(Clone, Debug)]
pub struct ExtendedFrame {
    pub system: ControlAffineSystem,
    pub frame: Frame,
    pub state_frame: Frame,
    pub order: usize,
    /// `jets[i][k]` is `u_{b_i}^{(k)}`, `k ≤ K`.
    pub jets: Vec<Vec<SymbolId>>,
    pub terminal: Vec<SymbolId>,
}

impl ExtendedFrame {
    pub fn jet_ids(&self) -> Vec<SymbolId> {
        self.jets.iter().flatten().copied().collect()
    }

    fn is_jet(&self, id: SymbolId) -> bool {
        self.jets.iter().flatten().chain(&self.terminal).any(|j| *j == id)
    }
}

/// `F₀ᵇ = f₀ + u_b f_b + Σ_k u_b^{(k+1)} ∂/∂u_b^{(k)}`, truncated at order `K`.
pub fn build_extended_drift(sys: &ControlAffineSystem, split: &DegenerateSplit, order: usize) -> Result<(ExtendedFrame, VectorField)> {
    let system = sys.with_jets(order + 1, 0, 0)?;
    let table = system.table().clone();
    let jets: Vec<Vec<SymbolId>> =
        split.b.iter().map(|&b| (0..=order).map(|k| table.jet(b - 1, k).expect("jet order")).collect()).collect();
    let terminal: Vec<SymbolId> = split.b.iter().map(|&b| table.jet(b - 1, order + 1).expect("terminal jet")).collect();
    let mut coords = system.state_ids();
    coords.extend(jets.iter().flatten());
    let frame = Frame::new(coords);
    let mut state_part = system.drift().clone();
    for &b in &split.b {
        state_part = state_part.add(&system.field(b).scale(&Expr::var(table.control(b - 1))))?;
    }
    let mut comps: Vec<Expr> = state_part.components().to_vec();
    for (i, row) in jets.iter().enumerate() {
        for k in 0..=order {
            comps.push(Expr::var(if k < order { row[k + 1] } else { terminal[i] }));
        }
    }
    let state_frame = system.frame().clone();
    let f0b = VectorField::new(frame.clone(), comps)?;
    Ok((ExtendedFrame { system, frame, state_frame, order, jets, terminal }, f0b))
}

/// `k_i = #{j | r_j ≥ i}` for `i = 1..=r₀`.
pub fn brunovsky_indices(rank_jumps: &[usize]) -> Result<Vec<usize>> {
    if rank_jumps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Invalid(format!("rank jumps {rank_jumps:?} are not non-increasing")));
    }
    let r0 = rank_jumps.first().copied().unwrap_or(0);
    Ok((1..=r0).map(|i| rank_jumps.iter().filter(|&&r| r >= i).count()).collect())
}

/// The `Γᵃ` tower with its checks.
#[derive(Clone, Debug)]
pub struct GammaATower {
    pub tower: Tower,
    /// Ranks at the working point, level by level.
    pub ranks: Vec<usize>,
    pub rank_jumps: Vec<usize>,
    pub indices: Vec<usize>,
    pub involutivity: Vec<Involutivity>,
    /// Every level's rank is the same at all sampled points of the box.
    pub constant_dimension: bool,
    /// No generator has a component along a jet coordinate.
    pub state_tangent: bool,
    pub working_point: Point,
}

impl GammaATower {
    pub fn full_rank(&self) -> bool {
        self.tower.outcome == TowerOutcome::FullRank
    }
}

fn witness_label(split: &DegenerateSplit, i: usize, j: usize, d: &Distribution, ext: &ExtendedFrame) -> String {
    let name = |k: usize| {
        if k < split.a.len() {
            format!("f{}", split.a[k])
        } else {
            d.generators()[k].display(ext.system.table()).to_string()
        }
    };
    format!("{}, {}", name(i), name(j))
}

/// Point binding `x₀` (and `u_b` when given) with the remaining jets sampled.
pub fn working_point(ext: &ExtendedFrame, point: &Point, sampler: &Sampler) -> Point {
    let mut fixed: Point = ext.system.state_ids().into_iter().filter_map(|s| point.get(&s).map(|v| (s, v.clone()))).collect();
    for row in &ext.jets {
        if let Some(v) = point.get(&row[0]) {
            fixed.insert(row[0], v.clone());
        }
    }
    let mut ids = ext.jet_ids();
    ids.extend(&ext.terminal);
    sampler.point(0, &ids, &fixed)
}

#[allow(clippy::too_many_arguments)]
pub fn gamma_a_tower(
    sys: &ControlAffineSystem,
    split: &DegenerateSplit,
    ext: &ExtendedFrame,
    f0b: &VectorField,
    point: &Point,
    budget: usize,
    radius: &Rational,
    sampler: &Sampler,
) -> Result<GammaATower> {
    if budget < split.p {
        return Err(Error::Invalid(format!("budget {budget} is below p = {}", split.p)));
    }
    let w = working_point(ext, point, sampler);
    let initial: Vec<VectorField> =
        split.a.iter().map(|&i| sys.field(i).embed(&ext.frame)).collect::<std::result::Result<_, _>>()?;
    let step = |v: &VectorField| ad_power(f0b, v, 1);
    let tower = build_tower(
        TowerSpec { initial, step: &step, close: false, budget, point: &w, full_dim: sys.n() },
        sampler,
    )?;
    let state_tangent = tower.levels.iter().flat_map(|l| l.generators()).all(|g| {
        ext.frame.coords().iter().zip(g.components()).all(|(c, e)| !ext.is_jet(*c) || e.is_zero())
    });
    let ranks = tower.point_ranks.clone();
    let rank_jumps: Vec<usize> = ranks.iter().enumerate().map(|(j, r)| if j == 0 { *r } else { r - ranks[j - 1] }).collect();
    let mut involutivity = Vec::new();
    for (level, d) in tower.levels.iter().enumerate() {
        let v = is_involutive(d, RankMode::AtPoint(&w), sampler)?;
        if let Involutivity::NotInvolutive { i, j, .. } = &v {
            return Err(Error::NotInvolutive { level, witness: witness_label(split, *i, *j, d, ext) });
        }
        involutivity.push(v);
    }
    let mut constant_dimension = true;
    let state_ids = sys.state_ids();
    let center: Point = state_ids.iter().filter_map(|s| w.get(s).map(|v| (*s, v.clone()))).collect();
    let mut ids = state_ids.clone();
    ids.extend(ext.jet_ids());
    ids.extend(&ext.terminal);
    for idx in 0..sampler.samples {
        let q = sampler.box_point(idx, &ids, &center, radius);
        for (d, r) in tower.levels.iter().zip(&ranks) {
            if let Ok(rq) = d.matrix().rank_at_point(&q) {
                if rq != *r {
                    constant_dimension = false;
                }
            }
        }
    }
    let indices = if tower.outcome == TowerOutcome::FullRank { brunovsky_indices(&rank_jumps)? } else { Vec::new() };
    Ok(GammaATower { tower, ranks, rank_jumps, indices, involutivity, constant_dimension, state_tangent, working_point: w })
}

/// `Δᵃ₀ = Γᵃ₀`, `Δᵃ_{k+1} = Δᵃ_k + ad_{f₀}Δᵃ_k + [Γᵇ₀, Δᵃ_k]` over the state
/// frame; generic ranks with the point's state coordinates fixed.
pub fn delta_a_tower(
    sys: &ControlAffineSystem,
    split: &DegenerateSplit,
    point: &Point,
    levels: usize,
    sampler: &Sampler,
) -> Result<Vec<usize>> {
    let fixed: Point = sys.state_ids().into_iter().filter_map(|s| point.get(&s).map(|v| (s, v.clone()))).collect();
    let mut gens: Vec<VectorField> = split.a.iter().map(|&i| sys.field(i).clone()).collect();
    let mut frontier = gens.clone();
    let rank = |g: &[VectorField]| FieldMatrix::new(sys.frame().clone(), g.to_vec())?.generic_rank_with(sampler, &fixed);
    let mut ranks = vec![rank(&gens)?];
    for _ in 0..levels {
        let mut next = Vec::new();
        for v in &frontier {
            let mut cands = vec![lie_bracket(sys.drift(), v)?];
            for &b in &split.b {
                cands.push(lie_bracket(sys.field(b), v)?);
            }
            for c in cands {
                let mut trial = gens.clone();
                trial.push(c.clone());
                if rank(&trial)? > rank(&gens)? {
                    gens = trial;
                    next.push(c);
                }
            }
        }
        ranks.push(rank(&gens)?);
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(ranks)
}

/// Level `j` of the tower as the fields `ad^i_{F₀ᵇ} f_a`, `i ≤ j`, unpruned.
fn ad_fields(sys: &ControlAffineSystem, split: &DegenerateSplit, ext: &ExtendedFrame, f0b: &VectorField, upto: usize) -> Result<Vec<Vec<VectorField>>> {
    let mut out = Vec::new();
    for &a in &split.a {
        let mut row = vec![sys.field(a).embed(&ext.frame)?];
        for i in 0..upto {
            row.push(ad_power(f0b, &row[i], 1)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// `Δ_{i,j} = L_{ad^{k_j−1} f_{a_i}} φ_{j,0}`.
pub fn delta_matrix(
    sys: &ControlAffineSystem,
    split: &DegenerateSplit,
    ext: &ExtendedFrame,
    f0b: &VectorField,
    indices: &[usize],
    phi0: &[Expr],
) -> Result<Vec<Vec<Expr>>> {
    let top = indices.iter().copied().max().unwrap_or(1);
    let ads = ad_fields(sys, split, ext, f0b, top.saturating_sub(1))?;
    let mut rows = Vec::new();
    for row in &ads {
        let mut r = Vec::new();
        for (j, phi) in phi0.iter().enumerate() {
            r.push(lie_derivative(&row[indices[j] - 1], phi)?);
        }
        rows.push(r);
    }
    Ok(rows)
}

/// Each `φ_{i,0}` annihilates `Γᵃ_{k_i−2}` (all `ad^j f_a`, `j ≤ k_i−2`) and
/// may depend on `u_b` jets up to order `k_i−3`. Candidates are chosen greedily
/// so that their state differentials are independent at the working point,
/// and `Δ` must be invertible there.
#[allow(clippy::too_many_arguments)]
pub fn find_phi0(
    sys: &ControlAffineSystem,
    split: &DegenerateSplit,
    ext: &ExtendedFrame,
    f0b: &VectorField,
    tower: &GammaATower,
    degree_bound: u32,
    candidates: Option<&[Expr]>,
    sampler: &Sampler,
) -> Result<Vec<Expr>> {
    let want = split.a.len();
    if tower.indices.len() != want {
        return Err(Error::Invalid("the Γᵃ tower did not reach full rank".into()));
    }
    let top = tower.indices[0];
    let ads = ad_fields(sys, split, ext, f0b, top.saturating_sub(1))?;
    let annihilated = |ki: usize| -> Vec<VectorField> {
        if ki < 2 {
            return Vec::new();
        }
        ads.iter().flat_map(|row| row[..=ki - 2].iter().cloned()).collect()
    };
    let w = &tower.working_point;
    let mut chosen: Vec<Expr> = Vec::new();
    let mut grads: Vec<VectorField> = Vec::new();
    let mut pools: BTreeMap<(usize, u32, usize), Vec<Expr>> = BTreeMap::new();
    for (i, &ki) in tower.indices.iter().enumerate() {
        let fields = annihilated(ki);
        let mut try_pick = |pool: &[Expr]| -> Result<bool> {
            for h in pool {
                let mut trial = grads.clone();
                trial.push(ansatz::gradient(&ext.state_frame, h)?);
                let r = FieldMatrix::new(ext.state_frame.clone(), trial.clone())?.rank_at_point(w).unwrap_or(0);
                if r > grads.len() {
                    grads = trial;
                    chosen.push(h.clone());
                    return Ok(true);
                }
            }
            Ok(false)
        };
        let mut picked = false;
        match candidates {
            Some(c) => {
                let h = c.get(i).ok_or_else(|| Error::Invalid(format!("expected {want} candidates")))?.clone();
                let ok = fields.iter().all(|f| lie_derivative(f, &h).is_ok_and(|l| l.is_zero() || sampler.is_zero(&l)));
                if !ok {
                    return Err(Error::Invalid(format!("candidate {} does not annihilate Γᵃ_{}", i + 1, ki.saturating_sub(2))));
                }
                picked = try_pick(&[h])?;
            }
            None => {
                let mut var_sets = vec![sys.state_ids()];
                if ki >= 3 {
                    let mut v = sys.state_ids();
                    for row in &ext.jets {
                        v.extend(&row[..=(ki - 3).min(ext.order)]);
                    }
                    var_sets.push(v);
                }
                'search: for d in 1..=degree_bound {
                    for (s, vars) in var_sets.iter().enumerate() {
                        let key = (ki, d, s);
                        if !pools.contains_key(&key) {
                            pools.insert(key, search_pool(&fields, vars, d, sampler)?);
                        }
                        if try_pick(&pools[&key])? {
                            picked = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        if !picked {
            return Err(Error::Invalid(format!("no independent φ_{},0 found up to degree {degree_bound}", i + 1)));
        }
    }
    let delta = delta_matrix(sys, split, ext, f0b, &tower.indices, &chosen)?;
    if linalg::rank_at(&delta, w)? < want {
        return Err(Error::Invalid("Δ is singular at the working point".into()));
    }
    Ok(chosen)
}

fn search_pool(fields: &[VectorField], vars: &[SymbolId], degree: u32, sampler: &Sampler) -> Result<Vec<Expr>> {
    if fields.is_empty() {
        return Ok(vars.iter().map(|v| Expr::var(*v)).collect());
    }
    match ansatz::annihilators(fields, vars, degree, sampler) {
        Ok(p) => Ok(p),
        Err(Error::Unsupported(_)) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

/// `(z₁, …, z_{n−p}, u_b)` with the chains `φ_{i,j} = L^j_{F₀ᵇ} φ_{i,0}`.
#[derive(Clone, Debug)]
pub struct DegenerateFlatOutput {
    pub split: DegenerateSplit,
    pub indices: Vec<usize>,
    pub phi0: Vec<Expr>,
    /// `chains[i][j] = φ_{i,j}`, `j = 0..=k_i` (the last entry is `L^{k_i}_{F₀ᵇ} φ_{i,0}`).
    pub chains: Vec<Vec<Expr>>,
    pub delta: Vec<Vec<Expr>>,
    pub ub: Vec<SymbolId>,
}

pub fn assemble_flat_output(
    sys: &ControlAffineSystem,
    split: &DegenerateSplit,
    ext: &ExtendedFrame,
    f0b: &VectorField,
    indices: &[usize],
    phi0: &[Expr],
) -> Result<DegenerateFlatOutput> {
    let mut chains = Vec::new();
    for (phi, &k) in phi0.iter().zip(indices) {
        let mut row = vec![phi.clone()];
        for j in 0..k {
            row.push(lie_derivative(f0b, &row[j])?);
        }
        chains.push(row);
    }
    let delta = delta_matrix(sys, split, ext, f0b, indices, phi0)?;
    let ub = split.b.iter().map(|&b| ext.system.table().control(b - 1)).collect();
    Ok(DegenerateFlatOutput { split: split.clone(), indices: indices.to_vec(), phi0: phi0.to_vec(), chains, delta, ub })
}

/// Symbolic checks of an assembled degenerate flat output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegenerateVerification {
    /// `ua_free[i][k−1]`: `z_i^{(k)}` along the full dynamics is `u_a`-free, `k = 1..k_i−1`.
    pub ua_free: Vec<Vec<bool>>,
    /// `z_i^{(k)} = L^k_{F₀ᵇ} φ_{i,0}` for `k ≤ k_i−1`.
    pub chain_matches: bool,
    /// `∂z_i^{(k_i)}/∂u_{a_l} = (−1)^{k_i−1} Δ_{l,i}`.
    pub coefficient_matches_delta: bool,
    /// `L_{ad^{j−l} f_a} φ_{i,l} = 0` for `0 ≤ l ≤ j ≤ k_i−2` and
    /// `L_{ad^j f_a} φ_{i,0} = (−1)^j L_{f_a} L^j φ_{i,0}`.
    pub bracket_identities: bool,
    pub delta_rank: usize,
    /// Rank of `∂(φ_{i,j})_{j<k_i}/∂x` at the working point.
    pub diffeomorphism_rank: usize,
    pub verified: bool,
}

pub fn verify_degenerate_flat_output(
    sys: &ControlAffineSystem,
    ext: &ExtendedFrame,
    f0b: &VectorField,
    dfo: &DegenerateFlatOutput,
    working_point: &Point,
    sampler: &Sampler,
) -> Result<DegenerateVerification> {
    let split = &dfo.split;
    let table = ext.system.table().clone();
    let ua: Vec<SymbolId> = split.a.iter().map(|&a| table.control(a - 1)).collect();
    let mut full = f0b.clone();
    for (&a, &u) in split.a.iter().zip(&ua) {
        full = full.add(&sys.field(a).embed(&ext.frame)?.scale(&Expr::var(u)))?;
    }
    let zero = |e: &Expr| e.is_zero() || sampler.is_zero(e);
    let mut ua_free = Vec::new();
    let mut chain_matches = true;
    let mut coefficient_matches_delta = true;
    for (i, (&k, chain)) in dfo.indices.iter().zip(&dfo.chains).enumerate() {
        let mut z = chain[0].clone();
        let mut row = Vec::new();
        for order in 1..=k {
            z = lie_derivative(&full, &z)?;
            if order < k {
                row.push(ua.iter().all(|u| !z.contains_symbol(*u)));
                chain_matches &= zero(&(&z - &chain[order]));
            } else {
                let sign = if (k - 1) % 2 == 0 { Expr::one() } else { Expr::int(-1) };
                for (l, u) in ua.iter().enumerate() {
                    let c = z.diff(*u)?;
                    coefficient_matches_delta &= zero(&(&c - &(&sign * &dfo.delta[l][i])));
                }
            }
        }
        ua_free.push(row);
    }
    let ads = ad_fields(sys, split, ext, f0b, dfo.indices.iter().copied().max().unwrap_or(1))?;
    let mut bracket_identities = true;
    for (k, chain) in dfo.indices.iter().zip(&dfo.chains) {
        for j in 0..k.saturating_sub(1) {
            for row in &ads {
                for l in 0..=j {
                    bracket_identities &= zero(&lie_derivative(&row[j - l], &chain[l])?);
                }
                let lhs = lie_derivative(&row[j], &chain[0])?;
                let rhs = lie_derivative(&row[0], &chain[j])?;
                let rhs = if j % 2 == 0 { rhs } else { -&rhs };
                bracket_identities &= zero(&(&lhs - &rhs));
            }
        }
    }
    let delta_rank = linalg::rank_at(&dfo.delta, working_point)?;
    let phis: Vec<Expr> = dfo.indices.iter().zip(&dfo.chains).flat_map(|(k, c)| c[..*k].iter().cloned()).collect();
    let grads = phis.iter().map(|h| ansatz::gradient(&ext.state_frame, h)).collect::<Result<Vec<_>>>()?;
    let diffeomorphism_rank = FieldMatrix::new(ext.state_frame.clone(), grads)?.rank_at_point(working_point)?;
    let verified = ua_free.iter().flatten().all(|b| *b)
        && chain_matches
        && coefficient_matches_delta
        && bracket_identities
        && delta_rank == split.a.len()
        && diffeomorphism_rank == sys.n();
    Ok(DegenerateVerification {
        ua_free,
        chain_matches,
        coefficient_matches_delta,
        bracket_identities,
        delta_rank,
        diffeomorphism_rank,
        verified,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegenerateOptions {
    pub split: Option<(Vec<usize>, Vec<usize>)>,
    /// Jet truncation `K`; defaults to `2p−2`.
    pub order: Option<usize>,
    /// Tower level budget; defaults to `p`.
    pub budget: Option<usize>,
    pub degree_bound: u32,
    /// Half-width of the box used for the constant-dimension check.
    pub radius: Rational,
    pub candidates: Option<Vec<Expr>>,
}

impl Default for DegenerateOptions {
    fn default() -> Self {
        DegenerateOptions { split: None, order: None, budget: None, degree_bound: 3, radius: rat(1, 10), candidates: None }
    }
}

/// Whole degenerate pipeline at one point.
#[derive(Clone, Debug)]
pub struct DegenerateAnalysis {
    pub split: DegenerateSplit,
    pub ext: ExtendedFrame,
    pub f0b: VectorField,
    pub tower: GammaATower,
    pub delta_a_ranks: Vec<usize>,
    pub output: Option<DegenerateFlatOutput>,
    pub verification: Option<DegenerateVerification>,
}

impl DegenerateAnalysis {
    pub fn verified(&self) -> bool {
        self.verification.as_ref().is_some_and(|v| v.verified)
            && self.tower.full_rank()
            && self.tower.constant_dimension
            && self.tower.state_tangent
    }
}

pub fn analyze_degenerate(
    sys: &ControlAffineSystem,
    point: &Point,
    opts: &DegenerateOptions,
    sampler: &Sampler,
) -> Result<DegenerateAnalysis> {
    let split = choose_split(sys, point, opts.split.clone())?;
    let order = opts.order.unwrap_or(2 * split.p - 2);
    if order < 2 * split.p - 2 {
        return Err(Error::Invalid(format!("jet order {order} is below 2p−2 = {}", 2 * split.p - 2)));
    }
    let (ext, f0b) = build_extended_drift(sys, &split, order)?;
    let budget = opts.budget.unwrap_or(split.p);
    let tower = gamma_a_tower(sys, &split, &ext, &f0b, point, budget, &opts.radius, sampler)?;
    let delta_a_ranks = delta_a_tower(sys, &split, &tower.working_point, tower.ranks.len().saturating_sub(1), sampler)?;
    if !tower.full_rank() {
        return Ok(DegenerateAnalysis { split, ext, f0b, tower, delta_a_ranks, output: None, verification: None });
    }
    let phi0 = find_phi0(sys, &split, &ext, &f0b, &tower, opts.degree_bound, opts.candidates.as_deref(), sampler)?;
    let output = assemble_flat_output(sys, &split, &ext, &f0b, &tower.indices, &phi0)?;
    let verification = verify_degenerate_flat_output(sys, &ext, &f0b, &output, &tower.working_point, sampler)?;
    Ok(DegenerateAnalysis { split, ext, f0b, tower, delta_a_ranks, output: Some(output), verification: Some(verification) })
}

/// States and inputs recovered from `(z, u_b)` samples, plus the forward check.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateRoundTrip {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub trajectory: Trajectory,
    pub max_residual: f64,
    /// Max-norm gap between `φ_{i,0}` along the simulated trajectory and `z`.
    pub max_error: f64,
}

/// Prescribes `signal = (z₁, …, z_{n−p}, u_b)` (closed form), recovers
/// `(x, u_a)` on the half-step grid, simulates and compares `z`.
pub fn degenerate_round_trip(
    sys: &ControlAffineSystem,
    analysis: &DegenerateAnalysis,
    signal: &FlatSignal,
    t_span: (f64, f64),
    dt: f64,
    guess: Option<&[f64]>,
) -> Result<DegenerateRoundTrip> {
    let out = analysis.output.as_ref().ok_or_else(|| Error::Invalid("no flat output was assembled".into()))?;
    let ext = &analysis.ext;
    let n = sys.n();
    let na = out.split.a.len();
    let nb = out.split.b.len();
    if signal.n_components() != na + nb {
        return Err(Error::Invalid(format!("signal needs {} components", na + nb)));
    }
    let kmax = out.indices.iter().copied().max().unwrap_or(1);
    let jet_depth = ext.order + 1;
    let steps = ((t_span.1 - t_span.0) / dt).round() as usize;
    let grid = (t_span.0, dt / 2.0, 2 * steps + 1);
    let jets = match signal {
        FlatSignal::Symbolic { .. } => signal.jets(kmax.max(jet_depth), Some(grid))?,
        FlatSignal::Sampled { .. } => return Err(Error::Unsupported("degenerate round trip needs a closed-form signal".into())),
    };
    let width = ext.system.table().len();
    let states = sys.state_ids();
    let eqs: Vec<(CompiledExpr, usize, usize)> = out
        .chains
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..out.indices[i]).map(move |j| (c[j].compile(), i, j)))
        .collect();
    let jac: Vec<Vec<CompiledExpr>> = out
        .chains
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..out.indices[i]).map(move |j| c[j].clone()))
        .map(|e| states.iter().map(|s| e.diff(*s).map(|d| d.compile())).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<_, _>>()?;
    let top: Vec<CompiledExpr> = out.chains.iter().zip(&out.indices).map(|(c, k)| c[*k].compile()).collect();
    let coeff: Vec<Vec<CompiledExpr>> = out
        .chains
        .iter()
        .zip(&out.indices)
        .map(|(c, k)| {
            out.split
                .a
                .iter()
                .map(|&a| lie_derivative(sys.field(a), &c[k - 1].clone()).map(|e| e.compile()))
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut buf = vec![0.0; width];
    let bind_jets = |buf: &mut Vec<f64>, s: usize| {
        for (bi, row) in ext.jets.iter().enumerate() {
            for (ord, id) in row.iter().chain(std::iter::once(&ext.terminal[bi])).enumerate() {
                buf[id.index()] = jets[s][na + bi][ord];
            }
        }
    };
    let mut x = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        Some(g) => return Err(Error::Invalid(format!("initial guess has {} entries, expected {n}", g.len()))),
        None => states.iter().map(|s| analysis.tower.working_point.get(s).and_then(|v| num_traits::ToPrimitive::to_f64(v)).unwrap_or(0.0)).collect(),
    };
    let mut prev: Option<Vec<f64>> = None;
    let (mut times, mut xs, mut us, mut max_residual) = (Vec::new(), Vec::new(), Vec::new(), 0.0f64);
    for s in 0..jets.len() {
        let t = grid.0 + s as f64 * grid.1;
        bind_jets(&mut buf, s);
        let base = buf.clone();
        let load = |v: &[f64]| {
            let mut b = base.clone();
            for (id, val) in states.iter().zip(v) {
                b[id.index()] = *val;
            }
            b
        };
        let f = |v: &[f64]| -> std::result::Result<Vec<f64>, NumericError> {
            let b = load(v);
            eqs.iter().map(|(c, i, j)| Ok(c.eval(&b)? - jets[s][*i][*j])).collect()
        };
        let jf = |v: &[f64]| -> std::result::Result<DMatrix<f64>, NumericError> {
            let b = load(v);
            let vals = jac.iter().flat_map(|r| r.iter().map(|c| c.eval(&b))).collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(DMatrix::from_row_slice(jac.len(), n, &vals))
        };
        let res = newton(&f, &jf, &x, NewtonOptions::default()).map_err(|reason| Error::RecoveryFailed { t, reason })?;
        max_residual = max_residual.max(res.residual);
        let b = load(&res.x);
        let c = DMatrix::from_fn(na, na, |r, col| coeff[r][col].eval(&b).unwrap_or(f64::NAN));
        let rhs: Vec<f64> = (0..na)
            .map(|r| Ok(jets[s][r][out.indices[r]] - top[r].eval(&b)?))
            .collect::<std::result::Result<_, NumericError>>()?;
        let uav = linalg::solve_f64(&c, &rhs).ok_or(Error::RecoveryFailed { t, reason: NumericError::SingularJacobian })?;
        let mut u = vec![0.0; sys.m()];
        for (k, &a) in out.split.a.iter().enumerate() {
            u[a - 1] = uav[k];
        }
        for (k, &bidx) in out.split.b.iter().enumerate() {
            u[bidx - 1] = jets[s][na + k][0];
        }
        times.push(t);
        us.push(u);
        x = match &prev {
            Some(p) => res.x.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect(),
            None => res.x.clone(),
        };
        prev = Some(res.x.clone());
        xs.push(res.x);
    }
    let inputs = us.clone();
    let half = dt / 2.0;
    let u_of = move |t: f64| {
        let i = (((t - t_span.0) / half).round().max(0.0) as usize).min(inputs.len() - 1);
        inputs[i].clone()
    };
    let trajectory = integrate(sys, &xs[0], &u_of, t_span, dt)?;
    let phis: Vec<CompiledExpr> = out.phi0.iter().map(Expr::compile).collect();
    let mut max_error = 0.0f64;
    for (i, xv) in trajectory.states.iter().enumerate() {
        bind_jets(&mut buf, 2 * i);
        for (id, v) in states.iter().zip(xv) {
            buf[id.index()] = *v;
        }
        for (r, c) in phis.iter().enumerate() {
            let v = c.eval(&buf).map_err(NumericError::from)?;
            max_error = max_error.max((v - jets[2 * i][r][0]).abs());
        }
    }
    Ok(DegenerateRoundTrip { times, states: xs, inputs: us, trajectory, max_residual, max_error })
}

/// Integer point helper for tests and the CLI: states to `x`, controls to `u`.
pub fn rational_point(sys: &ControlAffineSystem, x: &[i64], u: &[i64]) -> Point {
    let mut p: BTreeMap<SymbolId, Rational> = sys.state_ids().into_iter().zip(x.iter().map(|v| int(*v))).collect();
    p.extend(sys.control_ids().into_iter().zip(u.iter().map(|v| int(*v))));
    p
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::symbolic::{parse_expr, SymbolTable};

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

    fn ex2() -> ControlAffineSystem {
        system(
            &["x1", "x2", "x3", "x4"],
            &["u1", "u2", "u3"],
            &["0", "0", "0", "0"],
            &[&["1", "x3", "x4", "0"], &["0", "0", "0", "1"], &["0", "0", "x1", "0"]],
        )
    }

    fn ex3() -> ControlAffineSystem {
        system(
            &["x1", "x2", "x3", "x4", "x5", "x6"],
            &["u1", "u2", "u3"],
            &["x5", "x3*x5", "x4*x5", "0", "x6", "0"],
            &[&["0", "0", "0", "0", "0", "1"], &["0", "0", "0", "1", "0", "0"], &["0", "0", "x1", "0", "0", "0"]],
        )
    }

    #[test]
    fn indices_from_jumps() {
        assert_eq!(brunovsky_indices(&[2, 1]).unwrap(), vec![2, 1]);
        assert_eq!(brunovsky_indices(&[1, 1, 1]).unwrap(), vec![3]);
        assert_eq!(brunovsky_indices(&[2, 2, 2]).unwrap(), vec![3, 3]);
        assert!(brunovsky_indices(&[1, 2]).is_err());
    }

    #[test]
    fn splits() {
        let s = ex1();
        let sp = choose_split(&s, &rational_point(&s, &[0, 1, 0], &[1, 0]), None).unwrap();
        assert_eq!((sp.a.clone(), sp.b.clone(), sp.p), (vec![2], vec![1], 2));
        assert!(choose_split(&s, &rational_point(&s, &[1, 1, 0], &[1, 0]), None).is_err());
        let s = ex3();
        let sp = choose_split(&s, &rational_point(&s, &[0, 1, 1, 1, 1, 1], &[0, 0, 0]), None).unwrap();
        assert_eq!((sp.a, sp.b, sp.p), (vec![1, 2], vec![3], 4));
    }

    #[test]
    fn extended_drift_example_one() {
        let s = ex1();
        let sp = choose_split(&s, &rational_point(&s, &[0, 1, 0], &[1, 0]), None).unwrap();
        let (ext, f) = build_extended_drift(&s, &sp, 2).unwrap();
        let t = ext.system.table().clone();
        let q = |e: &str| parse_expr(e, &t).unwrap();
        assert_eq!(
            f.components(),
            &[q("x2 + x1*u1"), q("x3"), q("0"), q("u1_d1"), q("u1_d2"), q("u1_d3")]
        );
        assert_eq!(ext.terminal, vec![t.lookup("u1_d3").unwrap()]);
        let empty = DegenerateSplit { a: vec![1, 2], b: vec![], p: 1 };
        let (_, f) = build_extended_drift(&s, &empty, 0).unwrap();
        assert_eq!(f.components(), s.drift().components());
    }

    #[test]
    fn example_one_pipeline() {
        let s = ex1();
        let sampler = Sampler::default();
        let a = analyze_degenerate(&s, &rational_point(&s, &[0, 1, 0], &[1, 0]), &DegenerateOptions::default(), &sampler)
            .unwrap();
        assert_eq!(a.tower.ranks, vec![1, 2, 3]);
        assert_eq!(a.tower.rank_jumps, vec![1, 1, 1]);
        assert_eq!(a.tower.indices, vec![3]);
        assert!(a.tower.state_tangent && a.tower.constant_dimension);
        let out = a.output.as_ref().unwrap();
        assert_eq!(out.phi0, vec![parse_expr("x1", s.table()).unwrap()]);
        assert_eq!(out.ub, vec![s.table().control(0)]);
        let v = a.verification.as_ref().unwrap();
        assert_eq!(v.ua_free, vec![vec![true, true]]);
        assert!(v.verified, "{v:?}");
        for (g, d) in a.tower.ranks.iter().zip(&a.delta_a_ranks) {
            assert!(g <= d);
        }
    }

    #[test]
    fn example_two_not_involutive() {
        let s = ex2();
        let err = analyze_degenerate(&s, &rational_point(&s, &[0, 1, 1, 1], &[1, 0, 0]), &DegenerateOptions::default(), &Sampler::default())
            .unwrap_err();
        assert_eq!(err, Error::NotInvolutive { level: 0, witness: "f1, f2".into() });
    }

    #[test]
    fn example_three_pipeline() {
        let s = ex3();
        let sampler = Sampler::default();
        let a = analyze_degenerate(&s, &rational_point(&s, &[0, 1, 1, 1, 1, 1], &[0, 0, 0]), &DegenerateOptions::default(), &sampler)
            .unwrap();
        assert_eq!(a.tower.ranks, vec![2, 4, 6]);
        assert_eq!(a.tower.indices, vec![3, 3]);
        let out = a.output.as_ref().unwrap();
        let q = |e: &str| parse_expr(e, a.ext.system.table()).unwrap();
        assert_eq!(out.phi0, vec![q("x1"), q("x2")]);
        assert_eq!(out.delta, vec![vec![q("1"), q("x3")], vec![q("0"), q("x5^2")]]);
        let v = a.verification.as_ref().unwrap();
        assert_eq!(v.ua_free, vec![vec![true, true], vec![true, true]]);
        assert!(v.verified, "{v:?}");
    }

    #[test]
    fn example_one_round_trip() {
        let s = ex1();
        let sampler = Sampler::default();
        let a = analyze_degenerate(&s, &rational_point(&s, &[0, 1, 0], &[1, 0]), &DegenerateOptions::default(), &sampler)
            .unwrap();
        let tt = Arc::new(SymbolTable::free(&["t"]).unwrap());
        let q = |e: &str| parse_expr(e, &tt).unwrap();
        let sig = FlatSignal::Symbolic { time: SymbolId(0), components: vec![q("1/10*sin(t)"), q("1 + 1/10*t")] };
        let rt = degenerate_round_trip(&s, &a, &sig, (0.0, 1.0), 1e-3, None).unwrap();
        assert!(rt.max_error < 1e-5, "{}", rt.max_error);
        assert!(rt.max_residual < 1e-9);
    }

    #[test]
    fn example_three_round_trip() {
        let s = ex3();
        let sampler = Sampler::default();
        let a = analyze_degenerate(&s, &rational_point(&s, &[0, 1, 1, 1, 1, 1], &[0, 0, 0]), &DegenerateOptions::default(), &sampler)
            .unwrap();
        let tt = Arc::new(SymbolTable::free(&["t"]).unwrap());
        let q = |e: &str| parse_expr(e, &tt).unwrap();
        let sig = FlatSignal::Symbolic {
            time: SymbolId(0),
            components: vec![q("t + 1/10*sin(t)"), q("1 + 1/2*t^2"), q("3/10*cos(t)")],
        };
        let rt = degenerate_round_trip(&s, &a, &sig, (0.0, 1.0), 1e-3, Some(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!(rt.max_error < 1e-4, "{}", rt.max_error);
    }

    #[test]
    fn truncation_order_does_not_matter() {
        let s = ex3();
        let sampler = Sampler::default();
        let pt = rational_point(&s, &[0, 1, 1, 1, 1, 1], &[0, 0, 0]);
        let a = analyze_degenerate(&s, &pt, &DegenerateOptions::default(), &sampler).unwrap();
        let b = analyze_degenerate(&s, &pt, &DegenerateOptions { order: Some(8), ..Default::default() }, &sampler).unwrap();
        assert_eq!(a.ext.order + 2, b.ext.order);
        assert_eq!(a.tower.ranks, b.tower.ranks);
        assert_eq!(a.tower.indices, b.tower.indices);
        let (oa, ob) = (a.output.unwrap(), b.output.unwrap());
        assert_eq!(oa.phi0, ob.phi0);
        assert_eq!(oa.delta, ob.delta);
        for (ca, cb) in oa.chains.iter().zip(&ob.chains) {
            assert_eq!(ca[..ca.len() - 1], cb[..cb.len() - 1]);
        }
    }
}
