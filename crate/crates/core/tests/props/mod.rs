//! Randomized properties shared by the `properties` tests and the acceptance run.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use flatlas::accessibility::{gamma_accessibility, state_control_point, strong_accessibility};
use flatlas::flat_degenerate::{analyze_degenerate, rational_point, DegenerateOptions};
use flatlas::geometry::{lie_bracket, lie_derivative, wronskian_matrix, ControlAffineSystem, Frame, VectorField};
use flatlas::numeric::{bracket_fd_oracle, flow_box_integrals, CompiledField};
use flatlas::sampling::Sampler;
use flatlas::symbolic::{int, parse_expr, rat, Expr, SymbolId, SymbolTable};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

pub const SEED: u64 = 0x5EED;
pub const CASES: u32 = 64;

pub fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(SEED),
        failure_persistence: None,
        max_global_rejects: 4096,
        ..Config::default()
    })
}

type Term = (i64, u32, u32, u32);

fn poly(max_terms: usize, max_deg: u32) -> impl Strategy<Value = Vec<Term>> {
    prop::collection::vec((-3i64..=3, 0..=max_deg, 0..=max_deg, 0..=max_deg), 0..=max_terms)
        .prop_map(move |ts| ts.into_iter().filter(|(_, a, b, c)| a + b + c <= max_deg).collect())
}

fn render(terms: &[Term]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    terms
        .iter()
        .map(|(c, a, b, d)| {
            let mut s = format!("({c})");
            for (v, e) in [("x1", a), ("x2", b), ("x3", d)] {
                if *e > 0 {
                    s += &format!("*{v}^{e}");
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn field_terms(max_deg: u32) -> impl Strategy<Value = [Vec<Term>; 3]> {
    [poly(3, max_deg), poly(3, max_deg), poly(3, max_deg)]
}

struct Space {
    table: Arc<SymbolTable>,
    frame: Frame,
}

impl Space {
    fn new() -> Self {
        let table = Arc::new(SymbolTable::free(&["x1", "x2", "x3"]).unwrap());
        Space { table, frame: Frame::new(vec![SymbolId(0), SymbolId(1), SymbolId(2)]) }
    }

    fn expr(&self, terms: &[Term]) -> Expr {
        parse_expr(&render(terms), &self.table).unwrap()
    }

    fn field(&self, t: &[Vec<Term>; 3]) -> VectorField {
        VectorField::new(self.frame.clone(), t.iter().map(|c| self.expr(c)).collect()).unwrap()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn finish<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

pub fn bracket_algebra() -> Result<(), String> {
    let strat = (field_terms(2), field_terms(2), field_terms(2), -5i64..=5, 1i64..=4);
    finish(runner().run(&strat, |(a, b, c, p, q)| {
        let s = Space::new();
        let (a, b, c) = (s.field(&a), s.field(&b), s.field(&c));
        let ab = lie_bracket(&a, &b).unwrap();
        let ba = lie_bracket(&b, &a).unwrap();
        check(ab.add(&ba).unwrap().is_zero(), || "antisymmetry".into())?;

        let k = Expr::rational(rat(p, q));
        let lhs = lie_bracket(&a.add(&c.scale(&k)).unwrap(), &b).unwrap();
        let rhs = ab.add(&lie_bracket(&c, &b).unwrap().scale(&k)).unwrap();
        check(lhs == rhs, || "linearity in the first slot".into())?;
        let lhs = lie_bracket(&a, &b.add(&c.scale(&k)).unwrap()).unwrap();
        let rhs = ab.add(&lie_bracket(&a, &c).unwrap().scale(&k)).unwrap();
        check(lhs == rhs, || "linearity in the second slot".into())?;

        let j = lie_bracket(&a, &lie_bracket(&b, &c).unwrap())
            .unwrap()
            .add(&lie_bracket(&b, &lie_bracket(&c, &a).unwrap()).unwrap())
            .unwrap()
            .add(&lie_bracket(&c, &ab).unwrap())
            .unwrap();
        check(j.is_zero(), || "jacobi".into())
    }))
}

pub fn leibniz() -> Result<(), String> {
    let strat = (field_terms(2), field_terms(2), poly(4, 3), poly(3, 2));
    finish(runner().run(&strat, |(a, b, h, g)| {
        let s = Space::new();
        let (a, b, h, g) = (s.field(&a), s.field(&b), s.expr(&h), s.expr(&g));
        let ab = lie_bracket(&a, &b).unwrap();
        let lhs = lie_derivative(&ab, &h).unwrap();
        let rhs = &lie_derivative(&a, &lie_derivative(&b, &h).unwrap()).unwrap()
            - &lie_derivative(&b, &lie_derivative(&a, &h).unwrap()).unwrap();
        check(lhs == rhs, || "L_[a,b] = [L_a, L_b]".into())?;
        let lhs = lie_derivative(&a, &(&h * &g)).unwrap();
        let rhs = &(&h * &lie_derivative(&a, &g).unwrap()) + &(&g * &lie_derivative(&a, &h).unwrap());
        check(lhs == rhs, || "product rule".into())
    }))
}

fn linear_system(a: &[i64], b: &[i64], m: usize) -> ControlAffineSystem {
    let controls: Vec<String> = (1..=m).map(|i| format!("u{i}")).collect();
    let t = Arc::new(SymbolTable::new(&["x1", "x2", "x3"], &controls, 0, 0, 0).unwrap());
    let p = |s: String| parse_expr(&s, &t).unwrap();
    let drift = (0..3).map(|r| p(format!("({})*x1 + ({})*x2 + ({})*x3", a[3 * r], a[3 * r + 1], a[3 * r + 2]))).collect();
    let fields = (0..m).map(|c| (0..3).map(|r| p(b[r * 2 + c].to_string())).collect()).collect();
    ControlAffineSystem::new("linear", t.clone(), drift, fields).unwrap()
}

pub fn kalman() -> Result<(), String> {
    let strat = (
        prop::collection::vec(-3i64..=3, 9),
        prop::collection::vec(-3i64..=3, 6),
        1usize..=2,
        0usize..=3,
    );
    finish(runner().run(&strat, |(a, b, m, k)| {
        let sys = linear_system(&a, &b, m);
        let u: Vec<Expr> = sys.control_ids().into_iter().map(Expr::Var).collect();
        let w = wronskian_matrix(&sys, &u, k).unwrap();
        let mut block: Vec<Vec<i64>> = (0..m).map(|c| (0..3).map(|r| b[r * 2 + c]).collect()).collect();
        for j in 0..=k {
            for (i, col) in block.iter().enumerate() {
                for (r, v) in col.iter().enumerate() {
                    let e = w.entry(r, j * m + i);
                    check(*e == Expr::int(*v), || format!("entry ({r}, {j}, {i}): {e:?} vs {v}"))?;
                }
            }
            block = block.iter().map(|c| (0..3).map(|r| (0..3).map(|s| a[3 * r + s] * c[s]).sum()).collect()).collect();
        }
        Ok(())
    }))
}

fn nonlinear_system(drift: &[Vec<Term>; 3], fields: &[[Vec<Term>; 3]]) -> ControlAffineSystem {
    let controls: Vec<String> = (1..=fields.len()).map(|i| format!("u{i}")).collect();
    let t = Arc::new(SymbolTable::new(&["x1", "x2", "x3"], &controls, 0, 0, 0).unwrap());
    let p = |terms: &Vec<Term>| parse_expr(&render(terms), &t).unwrap();
    ControlAffineSystem::new(
        "random",
        t.clone(),
        drift.iter().map(p).collect(),
        fields.iter().map(|f| f.iter().map(p).collect()).collect(),
    )
    .unwrap()
}

fn system_strategy() -> impl Strategy<Value = ([Vec<Term>; 3], Vec<[Vec<Term>; 3]>, Vec<i64>, Vec<i64>)> {
    (1usize..=2).prop_flat_map(|m| {
        (
            field_terms(2),
            prop::collection::vec(field_terms(1), m),
            prop::collection::vec(-2i64..=2, 3),
            prop::collection::vec(-2i64..=2, m),
        )
    })
}

const TOWER_BUDGET: usize = 4;

pub fn lemma_one() -> Result<(), String> {
    let sampler = Sampler::default();
    finish(runner().run(&system_strategy(), |(f0, fs, x, u)| {
        let sys = nonlinear_system(&f0, &fs);
        let point = state_control_point(&sys, &x.iter().map(|v| int(*v)).collect::<Vec<_>>(), &u.iter().map(|v| int(*v)).collect::<Vec<_>>())
            .unwrap();
        let tower = gamma_accessibility(&sys, &point, TOWER_BUDGET, &sampler).unwrap();
        prop_assume!(tower.point_ranks == tower.generic_ranks);
        let level = tower.k_star.unwrap_or(tower.point_ranks.len() - 1);
        let us: Vec<Expr> = sys.control_ids().into_iter().map(Expr::Var).collect();
        let w = wronskian_matrix(&sys, &us, level).unwrap();
        let rank = w.rank_at_point(&point).unwrap();
        check((rank == sys.n()) == tower.k_star.is_some(), || {
            format!("tower {:?} vs rank G_{level} = {rank}", tower.point_ranks)
        })
    }))
}

pub fn gamma_in_d() -> Result<(), String> {
    let sampler = Sampler::default();
    finish(runner().run(&system_strategy(), |(f0, fs, x, u)| {
        let sys = nonlinear_system(&f0, &fs);
        let point = state_control_point(&sys, &x.iter().map(|v| int(*v)).collect::<Vec<_>>(), &u.iter().map(|v| int(*v)).collect::<Vec<_>>())
            .unwrap();
        let gamma = gamma_accessibility(&sys, &point, TOWER_BUDGET, &sampler).unwrap();
        let d = strong_accessibility(&sys, &point, TOWER_BUDGET, &sampler).unwrap();
        for (i, (g, dd)) in gamma.point_ranks.iter().zip(&d.point_ranks).enumerate() {
            check(g <= dd, || format!("level {i}: {g} > {dd}"))?;
        }
        Ok(())
    }))
}

pub fn fd_oracle() -> Result<(), String> {
    let strat = (field_terms(2), field_terms(2), prop::collection::vec(-10i64..=10, 3));
    finish(runner().run(&strat, |(a, b, x)| {
        let s = Space::new();
        let (a, b) = (s.field(&a), s.field(&b));
        let pt: BTreeMap<SymbolId, f64> = (0..3).map(|i| (SymbolId(i as u32), x[i] as f64 / 10.0)).collect();
        let est = bracket_fd_oracle(&a, &b, &pt, 1e-3).unwrap();
        let exact = lie_bracket(&a, &b).unwrap();
        for (c, e) in exact.components().iter().zip(&est) {
            let v = c.evaluate_float(&pt).unwrap();
            check((v - e).abs() < 1e-4, || format!("{v} vs {e}"))?;
        }
        Ok(())
    }))
}

pub fn flow_box() -> Result<(), String> {
    let offsets = prop::collection::vec(prop::collection::vec(-50i64..=50, 3), 20);
    let strat = (field_terms(2), prop::collection::vec(-5i64..=5, 3), offsets);
    finish(runner().run(&strat, |(mut f, base, offsets)| {
        f[0].push((4, 0, 0, 0));
        let s = Space::new();
        let f = s.field(&f);
        let base: BTreeMap<SymbolId, f64> = (0..3).map(|i| (SymbolId(i as u32), base[i] as f64 / 10.0)).collect();
        let compiled = CompiledField::new(&f);
        let at = |x: &[f64]| compiled.eval(x).unwrap();
        let p0: Vec<f64> = base.values().copied().collect();
        prop_assume!(at(&p0).iter().map(|v| v * v).sum::<f64>().sqrt() > 0.5);
        let mut fb = flow_box_integrals(&f, &base, None).unwrap();
        let eps = 1e-4;
        for o in offsets {
            let x: Vec<f64> = p0.iter().zip(&o).map(|(p, d)| p + *d as f64 / 1000.0).collect();
            let v = at(&x);
            let fwd: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + eps * v).collect();
            let back: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x - eps * v).collect();
            let (hf, hb) = (fb.eval(&fwd).unwrap(), fb.eval(&back).unwrap());
            for (a, b) in hf.iter().zip(&hb) {
                let d = (a - b) / (2.0 * eps);
                check(d.abs() < 1e-5, || format!("directional derivative {d} at {x:?}"))?;
            }
        }
        Ok(())
    }))
}

fn example(states: &[&str], controls: &[&str], f0: &[&str], fs: &[&[&str]]) -> ControlAffineSystem {
    let t = Arc::new(SymbolTable::new(states, controls, 0, 0, 0).unwrap());
    let p = |s: &str| parse_expr(s, &t).unwrap();
    ControlAffineSystem::new(
        "example",
        t.clone(),
        f0.iter().map(|s| p(s)).collect(),
        fs.iter().map(|f| f.iter().map(|s| p(s)).collect()).collect(),
    )
    .unwrap()
}

pub fn example_one() -> ControlAffineSystem {
    example(&["x1", "x2", "x3"], &["u1", "u2"], &["x2", "x3", "0"], &[&["x1", "0", "0"], &["0", "0", "1"]])
}

pub fn example_two() -> ControlAffineSystem {
    example(
        &["x1", "x2", "x3", "x4"],
        &["u1", "u2", "u3"],
        &["0", "0", "0", "0"],
        &[&["1", "x3", "x4", "0"], &["0", "0", "0", "1"], &["0", "0", "x1", "0"]],
    )
}

pub fn example_three() -> ControlAffineSystem {
    example(
        &["x1", "x2", "x3", "x4", "x5", "x6"],
        &["u1", "u2", "u3"],
        &["x5", "x3*x5", "x4*x5", "0", "x6", "0"],
        &[&["0", "0", "0", "0", "0", "1"], &["0", "0", "0", "1", "0", "0"], &["0", "0", "x1", "0", "0", "0"]],
    )
}

fn truncation(sys: &ControlAffineSystem, x: Vec<i64>, u: Vec<i64>, extra: usize) -> Result<(), TestCaseError> {
    let sampler = Sampler::default();
    let pt = rational_point(sys, &x, &u);
    let a = analyze_degenerate(sys, &pt, &DegenerateOptions::default(), &sampler).unwrap();
    let order = Some(a.ext.order + extra);
    let b = analyze_degenerate(sys, &pt, &DegenerateOptions { order, ..Default::default() }, &sampler).unwrap();
    check(a.tower.ranks == b.tower.ranks, || format!("ranks {:?} vs {:?}", a.tower.ranks, b.tower.ranks))?;
    check(a.tower.indices == b.tower.indices, || "indices".into())?;
    let (oa, ob) = (a.output.unwrap(), b.output.unwrap());
    check(oa.phi0 == ob.phi0 && oa.delta == ob.delta, || "phi0 or delta".into())?;
    for (ca, cb) in oa.chains.iter().zip(&ob.chains) {
        check(ca[..ca.len() - 1] == cb[..cb.len() - 1], || "chains".into())?;
    }
    Ok(())
}

pub fn truncation_example_one() -> Result<(), String> {
    let sys = example_one();
    let strat = (prop::collection::vec(-3i64..=3, 2), prop::collection::vec(-3i64..=3, 2), 1usize..=4);
    finish(runner().run(&strat, |(x, u, extra)| truncation(&sys, vec![0, x[0], x[1]], u, extra)))
}

pub fn truncation_example_three() -> Result<(), String> {
    let sys = example_three();
    let nonzero = prop_oneof![-3i64..=-1, 1i64..=3];
    let strat = (prop::collection::vec(-3i64..=3, 4), nonzero, prop::collection::vec(-3i64..=3, 3), 1usize..=4);
    finish(runner().run(&strat, |(x, x5, u, extra)| truncation(&sys, vec![0, x[0], x[1], x[2], x5, x[3]], u, extra)))
}

/// Name and runner of every property suite.
pub const SUITES: &[(&str, fn() -> Result<(), String>)] = &[
    ("bracket antisymmetry, bilinearity and Jacobi", bracket_algebra),
    ("Leibniz rule", leibniz),
    ("Wronskian equals Kalman matrix for linear systems", kalman),
    ("tower rank n iff rank of G at k* is n", lemma_one),
    ("rank Gamma_k <= rank D_k", gamma_in_d),
    ("flow-commutator oracle vs symbolic bracket", fd_oracle),
    ("flow-box integrals are invariant", flow_box),
    ("truncation independence, example 1", truncation_example_one),
    ("truncation independence, example 3", truncation_example_three),
];
