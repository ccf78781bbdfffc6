//! Acceptance run: one PASS/FAIL line per criterion, each with its time limit.

mod props;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use flatlas::accessibility::{check_generic_condition, classify_point, default_budget, state_control_ids, PointClass};
use flatlas::flat_degenerate::{analyze_degenerate, degenerate_round_trip, rational_point, DegenerateOptions};
use flatlas::flat_generic::{recover_inputs_symbolic, verify_first_integrals};
use flatlas::geometry::{lie_bracket, lie_derivative, ControlAffineSystem};
use flatlas::numeric::FlatSignal;
use flatlas::sampling::{Point, Sampler};
use flatlas::symbolic::{int, parse_expr, Expr, SymbolId, SymbolTable};
use flatlas::Error;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exprs(sys: &ControlAffineSystem, src: &[&str]) -> Vec<Expr> {
    src.iter().map(|s| parse_expr(s, sys.table()).unwrap()).collect()
}

fn time_signal(components: &[&str]) -> FlatSignal {
    let t = Arc::new(SymbolTable::free(&["t"]).unwrap());
    FlatSignal::Symbolic { time: SymbolId(0), components: components.iter().map(|c| parse_expr(c, &t).unwrap()).collect() }
}

/// `count` sampled state/input points with `fixed` bindings that satisfy `keep`.
fn sampled_points(sys: &ControlAffineSystem, fixed: &Point, count: usize, keep: impl Fn(&Point) -> bool) -> Vec<Point> {
    let sampler = Sampler::with_seed(props::SEED);
    let ids = state_control_ids(sys);
    (0..).map(|i| sampler.point(i, &ids, fixed)).filter(keep).take(count).collect()
}

fn criterion_1() -> Outcome {
    let sys = props::example_one();
    let sampler = Sampler::default();
    let bracket = lie_bracket(sys.drift(), sys.field(2)).map_err(|e| e.to_string())?;
    ensure(bracket.components() == exprs(&sys, &["0", "-1", "0"]).as_slice(), || "[f0, f2] is not (0, -1, 0)".into())?;

    let x1 = sys.table().state(0);
    let off = sampled_points(&sys, &Point::new(), 10, |p| p[&x1] != int(0));
    let on = sampled_points(&sys, &Point::from([(x1, int(0))]), 10, |_| true);
    for p in &off {
        let c = check_generic_condition(&sys, p, false).map_err(|e| e.to_string())?;
        ensure(c.holds_with_k == Some(2), || format!("generic condition {:?} at x1 != 0", c.holds_with_k))?;
    }
    for p in &on {
        let c = check_generic_condition(&sys, p, false).map_err(|e| e.to_string())?;
        ensure(c.holds_with_k.is_none(), || format!("generic condition {:?} at x1 = 0", c.holds_with_k))?;
    }

    let psi = exprs(&sys, &["x1", "x2"]);
    let chk = verify_first_integrals(&sys, 2, &psi, &off[0], &sampler).map_err(|e| e.to_string())?;
    ensure(chk.all_pass(), || "psi = (x1, x2) fails the first-integral check".into())?;

    let rec = recover_inputs_symbolic(&sys, 2, &psi, &sampler).map_err(|e| e.to_string())?;
    let u1 = rec.get(rec.table.control(0)).ok_or("u1 not recovered")?.canonical().map_err(|e| e.to_string())?;
    let want = parse_expr("(y1_d1 - y2)/y1", &rec.table).unwrap().canonical().map_err(|e| e.to_string())?;
    ensure(u1 == want, || format!("u1 = {}", u1.render(&rec.table)))?;
    Ok(format!("[f0,f2] = (0,-1,0); k=2 at {} points with x1 != 0, none at {} with x1 = 0; u1 = {}", off.len(), on.len(), u1.render(&rec.table)))
}

fn criterion_2() -> Outcome {
    let sys = props::example_one();
    let sampler = Sampler::default();
    let a = analyze_degenerate(&sys, &rational_point(&sys, &[0, 1, 0], &[1, 0]), &DegenerateOptions::default(), &sampler)
        .map_err(|e| e.to_string())?;
    ensure(a.tower.ranks == [1, 2, 3], || format!("tower ranks {:?}", a.tower.ranks))?;
    ensure(a.tower.indices == [3], || format!("indices {:?}", a.tower.indices))?;
    let out = a.output.as_ref().ok_or("no flat output")?;
    ensure(out.phi0 == exprs(&sys, &["x1"]) && out.ub == [sys.table().control(0)], || "flat output is not (x1, u1)".into())?;
    ensure(a.verified(), || "degenerate output not verified".into())?;
    let sig = time_signal(&["1/10*sin(t)", "1 + 1/10*t"]);
    let rt = degenerate_round_trip(&sys, &a, &sig, (0.0, 1.0), 1e-3, None).map_err(|e| e.to_string())?;
    ensure(rt.max_error < 1e-5, || format!("round-trip error {:e}", rt.max_error))?;
    Ok(format!("ranks (1,2,3), indices (3), output (x1, u1), round-trip error {:.2e} < 1e-5", rt.max_error))
}

fn criterion_3() -> Outcome {
    let sys = props::example_two();
    for (k, psi) in [(1, ["2*x2*x4 - x3^2", "x1*x4 - x3", "x4"]), (3, ["x1", "x2", "x4"])] {
        for h in exprs(&sys, &psi) {
            let r = lie_derivative(sys.field(k), &h).map_err(|e| e.to_string())?;
            ensure(r.is_zero(), || format!("L_f{k} {} = {}", h.render(sys.table()), r.render(sys.table())))?;
        }
    }
    let err = analyze_degenerate(&sys, &rational_point(&sys, &[0, 1, 1, 1], &[1, 1, 1]), &DegenerateOptions::default(), &Sampler::default())
        .err()
        .ok_or("degenerate pipeline did not abort at x1 = 0")?;
    match &err {
        Error::NotInvolutive { witness, .. } if witness == "f1, f2" => {}
        e => return Err(format!("unexpected outcome: {e}")),
    }
    Ok(format!("all six integrals exact; abort: {err}"))
}

fn criterion_4() -> Outcome {
    let sys = props::example_three();
    let sampler = Sampler::default();
    let (x1, x5) = (sys.table().state(0), sys.table().state(4));
    let points = sampled_points(&sys, &Point::from([(x1, int(0))]), 5, |p| p[&x5] != int(0));
    for p in &points {
        let a = analyze_degenerate(&sys, p, &DegenerateOptions::default(), &sampler).map_err(|e| e.to_string())?;
        ensure(a.tower.ranks == [2, 4, 6], || format!("tower ranks {:?}", a.tower.ranks))?;
    }
    let a = analyze_degenerate(&sys, &rational_point(&sys, &[0, 1, 1, 1, 1, 1], &[0, 0, 0]), &DegenerateOptions::default(), &sampler)
        .map_err(|e| e.to_string())?;
    ensure(a.tower.indices == [3, 3], || format!("indices {:?}", a.tower.indices))?;
    let out = a.output.as_ref().ok_or("no flat output")?;
    ensure(out.phi0 == exprs(&sys, &["x1", "x2"]) && out.ub == [sys.table().control(2)], || "flat output is not (x1, x2, u3)".into())?;
    let v = a.verification.as_ref().ok_or("no verification")?;
    ensure(v.ua_free == [[true, true], [true, true]], || format!("u_a-freeness {:?}", v.ua_free))?;
    ensure(v.verified, || "degenerate output not verified".into())?;
    let sig = time_signal(&["t + 1/10*sin(t)", "1 + 1/2*t^2", "3/10*cos(t)"]);
    let rt = degenerate_round_trip(&sys, &a, &sig, (0.0, 1.0), 1e-3, Some(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0])).map_err(|e| e.to_string())?;
    ensure(rt.max_error < 1e-4, || format!("round-trip error {:e}", rt.max_error))?;
    Ok(format!(
        "ranks (2,4,6) at {} sampled points, indices (3,3), output (x1, x2, u3), first and second derivatives u_a-free, round-trip error {:.2e} < 1e-4",
        points.len(),
        rt.max_error
    ))
}

fn criterion_5() -> Outcome {
    let mut failed = Vec::new();
    for (name, suite) in props::SUITES {
        let start = Instant::now();
        let result = suite();
        println!("    {} {name} ({} cases, {:.2} s)", if result.is_ok() { "ok  " } else { "FAIL" }, props::CASES, start.elapsed().as_secs_f64());
        if let Err(e) = result {
            failed.push(format!("{name}: {e}"));
        }
    }
    if failed.is_empty() {
        Ok(format!("{} suites, {} cases each, seed {:#x}", props::SUITES.len(), props::CASES, props::SEED))
    } else {
        Err(failed.join("; "))
    }
}

fn criterion_6() -> Outcome {
    let t = Arc::new(SymbolTable::new(&["x1", "x2"], &["u1"], 0, 0, 0).unwrap());
    let p = |s: &str| parse_expr(s, &t).unwrap();
    let sys = ControlAffineSystem::new("negative", t.clone(), vec![p("0"), p("x2")], vec![vec![p("1"), p("0")]]).unwrap();
    let sampler = Sampler::default();
    let mut points = sampled_points(&sys, &Point::new(), 10, |_| true);
    points.push(BTreeMap::from([(t.state(0), int(0)), (t.state(1), int(0)), (t.control(0), int(0))]));
    for pt in &points {
        let c = classify_point(&sys, pt, default_budget(&sys), &sampler).map_err(|e| e.to_string())?;
        ensure(matches!(c.class, PointClass::OutsideOmega { rank: 1 }), || format!("classified {}", c.class.label()))?;
    }
    Ok(format!("OutsideOmega(rank=1) at {} points", points.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 6] = [
        ("example 1, generic route", criterion_1, 5),
        ("example 1, degenerate route", criterion_2, 10),
        ("example 2, first integrals and involutivity abort", criterion_3, 5),
        ("example 3, degenerate route", criterion_4, 20),
        ("property suites", criterion_5, 180),
        ("negative control", criterion_6, 5),
    ];
    let mut all = true;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*limit);
        let pass = outcome.is_ok() && in_time;
        all &= pass;
        let detail = match outcome {
            Ok(d) => d,
            Err(e) => e,
        };
        println!(
            "criterion {} {} {name}: {detail} ({:.2} s, limit {limit} s{})",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", exceeded" }
        );
    }
    if !all {
        std::process::exit(1);
    }
}
