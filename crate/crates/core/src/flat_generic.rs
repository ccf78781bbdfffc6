//! Flat outputs at generic points from `n−1` first integrals of a control
//! field `f_k`: candidate verification, the `M`/`N` Jacobian tests, input
//! recovery (symbolic and Newton) and the extended-system linearization check.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_traits::ToPrimitive;

use crate::ansatz;
use crate::error::{Error, Result};
use crate::geometry::{
    is_involutive, lie_bracket, lie_derivative, ControlAffineSystem, Distribution, Frame, Involutivity, RankMode,
    VectorField,
};
use crate::linalg;
use crate::numeric::{flow_box_integrals, integrate, newton, FlatSignal, FlowBox, NewtonOptions, Trajectory};
use crate::sampling::{Point, Sampler};
use crate::symbolic::{CompiledExpr, Expr, SymbolId, SymbolTable};

/// `n−1` functions of the state proposed as first integrals of `f_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatOutputCandidate {
    /// 1-based control index.
    pub k: usize,
    pub components: Vec<Expr>,
}

/// Per-component verdicts of `L_{f_k} ψ_{0,i} = 0` plus the rank of `Dψ₀`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegralCheck {
    pub residuals: Vec<Expr>,
    pub passes: Vec<bool>,
    pub jacobian_rank: usize,
    pub independent: bool,
}

impl IntegralCheck {
    pub fn all_pass(&self) -> bool {
        self.independent && self.passes.iter().all(|p| *p)
    }
}

fn validate(sys: &ControlAffineSystem, k: usize, psi: &[Expr]) -> Result<()> {
    if k == 0 || k > sys.m() {
        return Err(Error::Invalid(format!("control index {k} out of range 1..={}", sys.m())));
    }
    if psi.len() + 1 != sys.n() {
        return Err(Error::Invalid(format!("expected {} components, found {}", sys.n() - 1, psi.len())));
    }
    let states = sys.state_ids();
    if psi.iter().flat_map(Expr::free_symbols).any(|s| !states.contains(&s)) {
        return Err(Error::Invalid("candidate components must depend on the state only".into()));
    }
    Ok(())
}

fn jacobian(funcs: &[Expr], vars: &[SymbolId]) -> Result<Vec<Vec<Expr>>> {
    Ok(funcs
        .iter()
        .map(|f| vars.iter().map(|v| f.diff(*v)).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<_, _>>()?)
}

fn vanishes(e: &Expr, sampler: &Sampler) -> bool {
    e.is_zero() || sampler.is_zero(e)
}

pub fn verify_first_integrals(
    sys: &ControlAffineSystem,
    k: usize,
    psi: &[Expr],
    point: &Point,
    sampler: &Sampler,
) -> Result<IntegralCheck> {
    validate(sys, k, psi)?;
    let fk = sys.field(k);
    let residuals = psi.iter().map(|h| lie_derivative(fk, h)).collect::<std::result::Result<Vec<_>, _>>()?;
    let passes = residuals.iter().map(|r| vanishes(r, sampler)).collect();
    let jacobian_rank = linalg::rank_at(&jacobian(psi, &sys.state_ids())?, point)?;
    Ok(IntegralCheck { residuals, passes, jacobian_rank, independent: jacobian_rank + 1 == sys.n() })
}

/// `ψ₁ = L_g ψ₀`; the `u_k` terms must cancel.
pub fn build_psi1(sys: &ControlAffineSystem, k: usize, psi: &[Expr]) -> Result<Vec<Expr>> {
    validate(sys, k, psi)?;
    let g = sys.g_symbolic();
    let uk = sys.table().control(k - 1);
    let out = psi.iter().map(|h| lie_derivative(&g, h)).collect::<std::result::Result<Vec<_>, _>>()?;
    if let Some(i) = out.iter().position(|e| e.contains_symbol(uk)) {
        return Err(Error::Inconsistent(format!("ψ₁,{} depends on the distinguished input", i + 1)));
    }
    Ok(out)
}

/// `ψ₀`, `ψ₁` and `ψ₂` over a symbol table carrying first control jets and
/// flat-output jets `y_i, ẏ_i, ÿ_i`.
#[derive(Clone, Debug)]
pub struct PsiChain {
    pub system: ControlAffineSystem,
    pub k: usize,
    pub psi0: Vec<Expr>,
    pub psi1: Vec<Expr>,
    pub psi2: Vec<Expr>,
    has_outputs: bool,
}

fn jet_system(sys: &ControlAffineSystem, n_outputs: usize, output_order: usize) -> Result<(ControlAffineSystem, bool)> {
    let order = sys.table().jet_order().max(output_order.saturating_sub(1)).max(1);
    match sys.with_jets(order, n_outputs, output_order) {
        Ok(s) => Ok((s, true)),
        Err(_) => Ok((sys.with_jets(order, 0, 0)?, false)),
    }
}

pub fn psi_chain(sys: &ControlAffineSystem, k: usize, psi: &[Expr]) -> Result<PsiChain> {
    let psi1 = build_psi1(sys, k, psi)?;
    let (system, has_outputs) = jet_system(sys, sys.n() - 1, 2)?;
    let g = system.g_symbolic();
    let table = system.table().clone();
    let mut psi2 = Vec::with_capacity(psi1.len());
    for h in &psi1 {
        let mut e = lie_derivative(&g, h)?;
        for j in (0..system.m()).filter(|&j| j + 1 != k) {
            let dot = table.jet(j, 1).expect("first jets present");
            e = &e + &(&Expr::var(dot) * &h.diff(table.control(j))?);
        }
        psi2.push(e);
    }
    Ok(PsiChain { system, k, psi0: psi.to_vec(), psi1, psi2, has_outputs })
}

impl PsiChain {
    pub fn table(&self) -> &Arc<SymbolTable> {
        self.system.table()
    }

    pub fn uk(&self) -> SymbolId {
        self.table().control(self.k - 1)
    }

    /// Inputs other than `u_k`, in control order.
    pub fn uhat(&self) -> Vec<SymbolId> {
        (0..self.system.m()).filter(|&j| j + 1 != self.k).map(|j| self.table().control(j)).collect()
    }

    pub fn uhat_dot(&self) -> Vec<SymbolId> {
        (0..self.system.m()).filter(|&j| j + 1 != self.k).map(|j| self.table().jet(j, 1).expect("first jets")).collect()
    }

    /// `(x, û, u_k, û̇)`, the unknowns of `ψ̄ = (ψ₀, ψ₁, ψ₂)`.
    pub fn unknowns(&self) -> Vec<SymbolId> {
        let mut v = self.system.state_ids();
        v.extend(self.uhat());
        v.push(self.uk());
        v.extend(self.uhat_dot());
        v
    }

    /// Jacobian of `(ψ₀, ψ₁)` with respect to `(x, û)`.
    pub fn m_matrix(&self) -> Result<Vec<Vec<Expr>>> {
        let mut vars = self.system.state_ids();
        vars.extend(self.uhat());
        let funcs: Vec<Expr> = self.psi0.iter().chain(&self.psi1).cloned().collect();
        jacobian(&funcs, &vars)
    }

    /// Jacobian of `(ψ₀, ψ₁, ψ₂)` with respect to `(x, û, u_k, û̇)`.
    pub fn n_matrix(&self) -> Result<Vec<Vec<Expr>>> {
        jacobian(&self.all(), &self.unknowns())
    }

    fn all(&self) -> Vec<Expr> {
        self.psi0.iter().chain(&self.psi1).chain(&self.psi2).cloned().collect()
    }

    /// Flat-output jet symbol `y_i^{(order)}`, when the table has room for it.
    pub fn output(&self, i: usize, order: usize) -> Option<SymbolId> {
        if !self.has_outputs {
            return None;
        }
        self.table().output(i, order)
    }

    /// `∂ψ₂/∂u_k`.
    pub fn psi2_uk(&self) -> Result<Vec<Expr>> {
        Ok(self.psi2.iter().map(|e| e.diff(self.uk())).collect::<std::result::Result<_, _>>()?)
    }

    /// `−L_{[g,f_k]} ψ₀`.
    pub fn bracket_block(&self) -> Result<Vec<Expr>> {
        let br = lie_bracket(&self.system.g_symbolic(), self.system.field(self.k))?;
        self.psi0.iter().map(|h| Ok(-&lie_derivative(&br, h)?)).collect()
    }
}

/// Ranks of `M` and `N` at a point, and the `∂ψ₂/∂u_k` block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MnReport {
    pub m_rank: usize,
    pub m_dim: usize,
    pub n_rank: usize,
    pub n_dim: usize,
    /// `−L_{[g,f_k]} ψ₀`.
    pub uk_block: Vec<Expr>,
    pub uk_block_nonzero: bool,
    /// `∂ψ₂/∂u_k = −L_{[g,f_k]} ψ₀` holds identically.
    pub uk_identity: bool,
}

impl MnReport {
    pub fn m_full(&self) -> bool {
        self.m_rank == self.m_dim
    }

    pub fn n_invertible(&self) -> bool {
        self.n_rank == self.n_dim
    }
}

/// Point completed with zeros for unbound `û̇` entries.
fn with_jets_bound(chain: &PsiChain, point: &Point) -> Point {
    let mut pt = point.clone();
    for d in chain.uhat_dot() {
        pt.entry(d).or_insert_with(|| crate::symbolic::int(0));
    }
    pt
}

/// `M` and `N` at `point` (binding `x`, `u` and optionally the `û̇` jets,
/// which default to zero).
pub fn check_m_n_invertibility(
    sys: &ControlAffineSystem,
    k: usize,
    psi: &[Expr],
    point: &Point,
    sampler: &Sampler,
) -> Result<MnReport> {
    let chain = psi_chain(sys, k, psi)?;
    mn_report(&chain, point, sampler)
}

fn mn_report(chain: &PsiChain, point: &Point, sampler: &Sampler) -> Result<MnReport> {
    let pt = with_jets_bound(chain, point);
    let n = chain.system.n();
    let m_rank = linalg::rank_at(&chain.m_matrix()?, &pt)?;
    let n_rank = linalg::rank_at(&chain.n_matrix()?, &pt)?;
    let uk_block = chain.bracket_block()?;
    let uk_identity = chain.psi2_uk()?.iter().zip(&uk_block).all(|(a, b)| vanishes(&(a - b), sampler));
    let uk_block_nonzero = uk_block
        .iter()
        .map(|e| e.evaluate_float(&pt))
        .collect::<std::result::Result<Vec<_>, _>>()?
        .iter()
        .any(|v| v.abs() > 1e-12);
    Ok(MnReport { m_rank, m_dim: 2 * n - 2, n_rank, n_dim: 3 * n - 3, uk_block, uk_block_nonzero, uk_identity })
}

/// Closed-form expressions for `(x, û, u_k, û̇)` in terms of `y, ẏ, ÿ`, as
/// far as the equations `ψ_l = y^{(l)}` can be solved by successive
/// elimination of variables that enter affinely.
#[derive(Clone, Debug)]
pub struct SymbolicRecovery {
    pub table: Arc<SymbolTable>,
    pub solved: BTreeMap<SymbolId, Expr>,
    /// All states and inputs were expressed through the flat output alone.
    pub complete: bool,
}

impl SymbolicRecovery {
    pub fn get(&self, id: SymbolId) -> Option<&Expr> {
        self.solved.get(&id)
    }
}

pub fn recover_inputs_symbolic(
    sys: &ControlAffineSystem,
    k: usize,
    psi: &[Expr],
    sampler: &Sampler,
) -> Result<SymbolicRecovery> {
    let chain = psi_chain(sys, k, psi)?;
    symbolic_recovery(&chain, sampler)
}

fn symbolic_recovery(chain: &PsiChain, sampler: &Sampler) -> Result<SymbolicRecovery> {
    let table = chain.table().clone();
    let unknowns = chain.unknowns();
    let mut solved: BTreeMap<SymbolId, Expr> = BTreeMap::new();
    if !chain.has_outputs {
        return Ok(SymbolicRecovery { table, solved, complete: false });
    }
    let levels = [&chain.psi0, &chain.psi1, &chain.psi2];
    let mut eqs: Vec<Option<Expr>> = Vec::new();
    for (l, funcs) in levels.iter().enumerate() {
        for (i, f) in funcs.iter().enumerate() {
            let y = chain.output(i, l).expect("output jets present");
            eqs.push(Some(f - &Expr::var(y)));
        }
    }
    loop {
        let open: Vec<SymbolId> = unknowns.iter().copied().filter(|u| !solved.contains_key(u)).collect();
        let mut best: Option<(usize, usize, usize, SymbolId, Expr)> = None;
        for (ei, eq) in eqs.iter().enumerate() {
            let Some(eq) = eq else { continue };
            let present: Vec<SymbolId> = open.iter().copied().filter(|u| eq.contains_symbol(*u)).collect();
            for &v in &present {
                let Some(c) = eq.coefficients_in(v) else { continue };
                if c.len() != 2 || c[1].is_zero() || present.iter().any(|u| c[1].contains_symbol(*u)) {
                    continue;
                }
                let Ok(sol) = (-&c[0]).checked_div(&c[1]) else { continue };
                let key = (present.len(), sol.complexity());
                if best.as_ref().is_none_or(|b| key < (b.0, b.1)) {
                    best = Some((key.0, key.1, ei, v, sol));
                }
            }
        }
        let Some((_, _, ei, v, sol)) = best else { break };
        eqs[ei] = None;
        let sub = BTreeMap::from([(v, sol.clone())]);
        for e in eqs.iter_mut().flatten() {
            *e = e.substitute(&sub)?;
        }
        for s in solved.values_mut() {
            *s = s.substitute(&sub)?;
        }
        solved.insert(v, sol);
    }
    let mut needed = chain.system.state_ids();
    needed.extend(chain.system.control_ids());
    let complete = needed.iter().all(|v| solved.get(v).is_some_and(|e| unknowns.iter().all(|u| !e.contains_symbol(*u))))
        && eqs.iter().flatten().all(|e| {
            unknowns.iter().any(|u| e.contains_symbol(*u)) || vanishes(e, sampler)
        });
    Ok(SymbolicRecovery { table, solved, complete })
}

/// States and inputs recovered from flat-output samples.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericRecovery {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Inputs in control order.
    pub inputs: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

impl NumericRecovery {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Solves `ψ̄(x, û, u_k, û̇) = (z, ż, z̈)` by damped Newton at each grid
/// sample, continuing from the previous solution. `guess` is either the full
/// unknown vector `(x, û, u_k, û̇)` or `(x, u)`; without it the closed-form
/// recovery is used when complete.
pub fn recover_inputs_numeric(
    sys: &ControlAffineSystem,
    k: usize,
    psi: &[Expr],
    signal: &FlatSignal,
    grid: (f64, f64, usize),
    guess: Option<&[f64]>,
    sampler: &Sampler,
) -> Result<NumericRecovery> {
    let chain = psi_chain(sys, k, psi)?;
    numeric_recovery(&chain, signal, grid, guess, sampler)
}

fn numeric_recovery(
    chain: &PsiChain,
    signal: &FlatSignal,
    grid: (f64, f64, usize),
    guess: Option<&[f64]>,
    sampler: &Sampler,
) -> Result<NumericRecovery> {
    let n = chain.system.n();
    let m = chain.system.m();
    if signal.n_components() != n - 1 {
        return Err(Error::Invalid(format!("signal has {} components, expected {}", signal.n_components(), n - 1)));
    }
    let unknowns = chain.unknowns();
    let width = chain.table().len();
    let funcs: Vec<CompiledExpr> = chain.all().iter().map(Expr::compile).collect();
    let jac: Vec<Vec<CompiledExpr>> = chain.n_matrix()?.iter().map(|r| r.iter().map(Expr::compile).collect()).collect();
    let jets = match signal {
        FlatSignal::Symbolic { .. } => signal.jets(2, Some(grid))?,
        FlatSignal::Sampled { .. } => signal.jets(2, None)?,
    };
    let (t0, dt, _) = grid;
    let target = |s: usize| -> Vec<f64> { (0..3).flat_map(|l| jets[s].iter().map(move |c| c[l])).collect() };
    let load = |v: &[f64]| {
        let mut buf = vec![0.0; width];
        for (id, x) in unknowns.iter().zip(v) {
            buf[id.index()] = *x;
        }
        buf
    };
    let mut x0 = match guess {
        Some(g) if g.len() == unknowns.len() => g.to_vec(),
        Some(g) if g.len() == n + m => {
            let mut v = g[..n].to_vec();
            v.extend((0..m).filter(|&j| j + 1 != chain.k).map(|j| g[n + j]));
            v.push(g[n + chain.k - 1]);
            v.extend(std::iter::repeat_n(0.0, m - 1));
            v
        }
        Some(g) => return Err(Error::Invalid(format!("initial guess has {} entries", g.len()))),
        None => closed_form_guess(chain, &jets[0], sampler)?,
    };
    let mut prev: Option<Vec<f64>> = None;
    let mut out = NumericRecovery { times: Vec::new(), states: Vec::new(), inputs: Vec::new(), residuals: Vec::new() };
    for s in 0..jets.len() {
        let z = target(s);
        let f = |v: &[f64]| -> std::result::Result<Vec<f64>, crate::numeric::NumericError> {
            let buf = load(v);
            funcs.iter().zip(&z).map(|(c, zi)| Ok(c.eval(&buf)? - zi)).collect()
        };
        let j = |v: &[f64]| -> std::result::Result<DMatrix<f64>, crate::numeric::NumericError> {
            let buf = load(v);
            let vals = jac.iter().flat_map(|r| r.iter().map(|c| c.eval(&buf))).collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(DMatrix::from_row_slice(jac.len(), unknowns.len(), &vals))
        };
        let res = newton(&f, &j, &x0, NewtonOptions::default())
            .map_err(|reason| Error::RecoveryFailed { t: t0 + s as f64 * dt, reason })?;
        let v = res.x;
        let mut u = vec![0.0; m];
        for (pos, j) in (0..m).filter(|&j| j + 1 != chain.k).enumerate() {
            u[j] = v[n + pos];
        }
        u[chain.k - 1] = v[n + m - 1];
        out.times.push(t0 + s as f64 * dt);
        out.states.push(v[..n].to_vec());
        out.inputs.push(u);
        out.residuals.push(res.residual);
        x0 = match &prev {
            Some(p) => v.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect(),
            None => v.clone(),
        };
        prev = Some(v);
    }
    Ok(out)
}

fn closed_form_guess(chain: &PsiChain, jet0: &[Vec<f64>], sampler: &Sampler) -> Result<Vec<f64>> {
    let rec = symbolic_recovery(chain, sampler)?;
    if !rec.complete {
        return Err(Error::Invalid("no closed-form recovery available; an initial guess is required".into()));
    }
    let mut bind: BTreeMap<SymbolId, f64> = BTreeMap::new();
    for (i, comp) in jet0.iter().enumerate() {
        for (l, v) in comp.iter().enumerate().take(3) {
            bind.insert(chain.output(i, l).expect("outputs"), *v);
        }
    }
    chain
        .unknowns()
        .iter()
        .map(|u| match rec.get(*u) {
            Some(e) => Ok(e.evaluate_float(&bind).unwrap_or(0.0)),
            None => Ok(0.0),
        })
        .collect()
}

/// Recovery followed by forward simulation under the recovered inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip {
    pub recovery: NumericRecovery,
    pub trajectory: Trajectory,
    /// Max-norm gap between `ψ₀` along the simulated trajectory and the signal.
    pub max_error: f64,
}

/// Recovers inputs on a half-step grid so each RK4 stage sees an exact
/// input sample, simulates from the recovered initial state, and compares.
#[allow(clippy::too_many_arguments)]
pub fn round_trip(
    sys: &ControlAffineSystem,
    k: usize,
    psi: &[Expr],
    signal: &FlatSignal,
    t_span: (f64, f64),
    dt: f64,
    guess: Option<&[f64]>,
    sampler: &Sampler,
) -> Result<RoundTrip> {
    let chain = psi_chain(sys, k, psi)?;
    let steps = ((t_span.1 - t_span.0) / dt).round() as usize;
    let grid = (t_span.0, dt / 2.0, 2 * steps + 1);
    if let FlatSignal::Sampled { dt: sdt, values, .. } = signal {
        if (sdt - dt / 2.0).abs() > 1e-12 * dt || values.len() != grid.2 {
            return Err(Error::Invalid("sampled signal must be given on the half-step grid".into()));
        }
    }
    let recovery = numeric_recovery(&chain, signal, grid, guess, sampler)?;
    let inputs = recovery.inputs.clone();
    let half = dt / 2.0;
    let u_of = move |t: f64| {
        let i = (((t - t_span.0) / half).round().max(0.0) as usize).min(inputs.len() - 1);
        inputs[i].clone()
    };
    let trajectory = integrate(sys, &recovery.states[0], &u_of, t_span, dt)?;
    let psi_c: Vec<CompiledExpr> = psi.iter().map(Expr::compile).collect();
    let width = sys.table().len();
    let jets = match signal {
        FlatSignal::Symbolic { .. } => signal.jets(0, Some(grid))?,
        FlatSignal::Sampled { .. } => signal.jets(0, None)?,
    };
    let mut max_error: f64 = 0.0;
    for (i, x) in trajectory.states.iter().enumerate() {
        let mut buf = vec![0.0; width];
        for (id, v) in sys.state_ids().iter().zip(x) {
            buf[id.index()] = *v;
        }
        for (c, comp) in psi_c.iter().zip(&jets[2 * i]) {
            max_error = max_error.max((c.eval(&buf).map_err(crate::numeric::NumericError::from)? - comp[0]).abs());
        }
    }
    Ok(RoundTrip { recovery, trajectory, max_error })
}

/// Result of the first-integral search for `f_k`.
#[derive(Clone, Debug)]
pub struct FirstIntegralSearch {
    /// Polynomial first integrals with independent differentials at the point.
    pub symbolic: Vec<Expr>,
    /// Numeric flow-box integrals, built when the ansatz found fewer than `n−1`.
    pub flow_box: Option<FlowBox>,
    pub complete: bool,
}

pub fn search_first_integrals(
    sys: &ControlAffineSystem,
    k: usize,
    point: &Point,
    degree_bound: u32,
    sampler: &Sampler,
) -> Result<FirstIntegralSearch> {
    if k == 0 || k > sys.m() {
        return Err(Error::Invalid(format!("control index {k} out of range 1..={}", sys.m())));
    }
    if degree_bound == 0 {
        return Err(Error::Invalid("degree bound must be at least 1".into()));
    }
    let fk = sys.field(k);
    let at = fk.components().iter().map(|c| c.evaluate_float(point)).collect::<std::result::Result<Vec<_>, _>>()?;
    if at.iter().all(|v| v.abs() < 1e-14) {
        return Err(Error::Invalid(format!("f{k} vanishes at the point")));
    }
    let states = sys.state_ids();
    let found = match ansatz::annihilators(std::slice::from_ref(fk), &states, degree_bound, sampler) {
        Ok(f) => f,
        Err(Error::Unsupported(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    let want = sys.n() - 1;
    let symbolic = ansatz::select_independent(sys.frame(), &found, want, point, sampler)?;
    let complete = symbolic.len() == want;
    let flow_box = if complete {
        None
    } else {
        let base: BTreeMap<SymbolId, f64> =
            point.iter().filter_map(|(id, v)| v.to_f64().map(|f| (*id, f))).collect();
        Some(flow_box_integrals(fk, &base, None)?)
    };
    Ok(FirstIntegralSearch { symbolic, flow_box, complete })
}

/// `G₀` / `G₁` test on the extended system with state `(x, û)`, drift
/// `f₀ + Σ_{i≠k} uᵢfᵢ` and controls `∂/∂uᵢ (i≠k)` and `f_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackLinearization {
    pub g0: Involutivity,
    pub g1: Involutivity,
    pub g1_rank: usize,
    pub target_rank: usize,
}

impl FeedbackLinearization {
    pub fn passes(&self) -> bool {
        self.g0.is_involutive() && self.g1.is_involutive() && self.g1_rank == self.target_rank
    }
}

pub fn feedback_linearization_check(
    sys: &ControlAffineSystem,
    k: usize,
    point: &Point,
    sampler: &Sampler,
) -> Result<FeedbackLinearization> {
    if k == 0 || k > sys.m() {
        return Err(Error::Invalid(format!("control index {k} out of range 1..={}", sys.m())));
    }
    let table = sys.table();
    let uhat: Vec<SymbolId> = (0..sys.m()).filter(|&j| j + 1 != k).map(|j| table.control(j)).collect();
    let mut coords = sys.state_ids();
    coords.extend(&uhat);
    let frame = Frame::new(coords);
    let mut drift = sys.drift().clone();
    for (j, f) in sys.controls().iter().enumerate().filter(|(j, _)| j + 1 != k) {
        drift = drift.add(&f.scale(&Expr::var(table.control(j))))?;
    }
    let drift = drift.embed(&frame)?;
    let mut g0: Vec<VectorField> = (0..uhat.len()).map(|i| VectorField::coordinate(frame.clone(), sys.n() + i)).collect();
    g0.push(sys.field(k).embed(&frame)?);
    let mut g1 = g0.clone();
    for v in &g0 {
        g1.push(lie_bracket(&drift, v)?);
    }
    let d0 = Distribution::with_frame(frame.clone(), g0)?;
    let d1 = Distribution::with_frame(frame, g1)?;
    let mode = RankMode::AtPoint(point);
    Ok(FeedbackLinearization {
        g0: is_involutive(&d0, mode, sampler)?,
        g1: is_involutive(&d1, mode, sampler)?,
        g1_rank: d1.rank(mode, sampler)?,
        target_rank: 2 * sys.n() - 2,
    })
}

/// Every generic-route check for one candidate at one point.
#[derive(Clone, Debug)]
pub struct GenericVerification {
    pub k: usize,
    pub integrals: IntegralCheck,
    pub chain: Option<PsiChain>,
    pub mn: Option<MnReport>,
    pub recovery: Option<SymbolicRecovery>,
    pub verified: bool,
}

impl GenericVerification {
    pub fn verdict(&self) -> &'static str {
        if self.verified {
            "flat-output-verified"
        } else {
            "flat-output-rejected"
        }
    }
}

pub fn verify_generic_flat_output(
    sys: &ControlAffineSystem,
    candidate: &FlatOutputCandidate,
    point: &Point,
    sampler: &Sampler,
) -> Result<GenericVerification> {
    let k = candidate.k;
    let integrals = verify_first_integrals(sys, k, &candidate.components, point, sampler)?;
    if !integrals.all_pass() {
        return Ok(GenericVerification { k, integrals, chain: None, mn: None, recovery: None, verified: false });
    }
    let chain = psi_chain(sys, k, &candidate.components)?;
    let mn = mn_report(&chain, point, sampler)?;
    let recovery = symbolic_recovery(&chain, sampler)?;
    let verified = mn.m_full() && mn.n_invertible() && mn.uk_identity && mn.uk_block_nonzero;
    Ok(GenericVerification { k, integrals, chain: Some(chain), mn: Some(mn), recovery: Some(recovery), verified })
}
