use std::collections::BTreeMap;

use crate::geometry::{ControlAffineSystem, VectorField};
use crate::symbolic::{CompiledExpr, SymbolId};

use super::NumericError;

pub const DEFAULT_DT: f64 = 1e-3;

/// Vector field compiled for float evaluation against a dense value buffer
/// indexed by symbol id.
#[derive(Clone, Debug)]
pub struct CompiledField {
    comps: Vec<CompiledExpr>,
    coords: Vec<usize>,
    width: usize,
}

impl CompiledField {
    pub fn new(v: &VectorField) -> Self {
        let coords: Vec<usize> = v.frame().coords().iter().map(|c| c.index()).collect();
        let width = v
            .components()
            .iter()
            .flat_map(|c| c.free_symbols())
            .map(|s| s.index() + 1)
            .chain(coords.iter().map(|c| c + 1))
            .max()
            .unwrap_or(0);
        CompiledField { comps: v.components().iter().map(|c| c.compile()).collect(), coords, width }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Buffer width needed to hold every referenced symbol.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn eval(&self, values: &[f64]) -> Result<Vec<f64>, NumericError> {
        self.comps.iter().map(|c| c.eval(values).map_err(NumericError::from)).collect()
    }

    /// Evaluates with frame coordinates `x` written into `buf`.
    pub fn eval_at(&self, buf: &mut [f64], x: &[f64]) -> Result<Vec<f64>, NumericError> {
        for (c, v) in self.coords.iter().zip(x) {
            buf[*c] = *v;
        }
        self.eval(buf)
    }
}

/// `f₀ + Σ uᵢ fᵢ` compiled once.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    drift: CompiledField,
    controls: Vec<CompiledField>,
    width: usize,
}

impl CompiledSystem {
    pub fn new(sys: &ControlAffineSystem) -> Self {
        let drift = CompiledField::new(sys.drift());
        let controls: Vec<CompiledField> = sys.controls().iter().map(CompiledField::new).collect();
        let width = controls.iter().map(CompiledField::width).chain([drift.width()]).max().unwrap_or(0);
        CompiledSystem { drift, controls, width }
    }

    pub fn n(&self) -> usize {
        self.drift.dim()
    }

    pub fn m(&self) -> usize {
        self.controls.len()
    }

    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, NumericError> {
        let mut buf = vec![0.0; self.width.max(x.len())];
        let mut out = self.drift.eval_at(&mut buf, x)?;
        for (ui, f) in u.iter().zip(&self.controls) {
            if *ui == 0.0 {
                continue;
            }
            let fx = f.eval_at(&mut buf, x)?;
            for (o, v) in out.iter_mut().zip(fx) {
                *o += ui * v;
            }
        }
        Ok(out)
    }
}

/// Uniformly sampled state and input history.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// One classical Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step(
    f: &mut dyn FnMut(f64, &[f64]) -> Result<Vec<f64>, NumericError>,
    t: f64,
    x: &[f64],
    dt: f64,
) -> Result<Vec<f64>, NumericError> {
    let axpy = |a: &[f64], k: &[f64], s: f64| a.iter().zip(k).map(|(a, k)| a + s * k).collect::<Vec<_>>();
    let k1 = f(t, x)?;
    let k2 = f(t + dt / 2.0, &axpy(x, &k1, dt / 2.0))?;
    let k3 = f(t + dt / 2.0, &axpy(x, &k2, dt / 2.0))?;
    let k4 = f(t + dt, &axpy(x, &k3, dt))?;
    Ok((0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Fixed-step RK4 of the system under `u_signal` on `[t0, t_end]`.
pub fn integrate(
    sys: &ControlAffineSystem,
    x0: &[f64],
    u_signal: &dyn Fn(f64) -> Vec<f64>,
    t_span: (f64, f64),
    dt: f64,
) -> Result<Trajectory, NumericError> {
    if !(dt > 0.0) {
        return Err(NumericError::Invalid("dt must be positive".into()));
    }
    if x0.len() != sys.n() {
        return Err(NumericError::Invalid(format!("initial state has {} entries, expected {}", x0.len(), sys.n())));
    }
    let cs = CompiledSystem::new(sys);
    let (t0, t1) = t_span;
    let steps = ((t1 - t0) / dt).round().max(0.0) as usize;
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    states.push(x.clone());
    inputs.push(u_signal(t0));
    let mut rhs = |t: f64, x: &[f64]| cs.rhs(x, &u_signal(t));
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        x = rk4_step(&mut rhs, t, &x, dt)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NumericError::NonFinite(t + dt));
        }
        states.push(x.clone());
        inputs.push(u_signal(t + dt));
    }
    Ok(Trajectory { t0, dt, states, inputs })
}

/// Flow of a compiled field for time `s` from `x`, RK4 with steps of at most `max_step`.
pub fn flow(field: &CompiledField, buf: &mut [f64], x: &[f64], s: f64, max_step: f64) -> Result<Vec<f64>, NumericError> {
    let steps = ((s.abs() / max_step).ceil() as usize).max(1);
    let h = s / steps as f64;
    let mut y = x.to_vec();
    for _ in 0..steps {
        let mut rhs = |_t: f64, z: &[f64]| field.eval_at(buf, z);
        y = rk4_step(&mut rhs, 0.0, &y, h)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NumericError::FlowEscaped);
        }
    }
    Ok(y)
}

/// Flow-commutator estimate of `[a, b]` at `point`. `E(h) = (C(h) + C(−h)) / (2h²)`
/// with `C(h) = Φᵇ₋ₕ Φᵃ₋ₕ Φᵇₕ Φᵃₕ (p) − p` is even in `h`; one Richardson
/// step `(4E(h/2) − E(h)) / 3` removes the `h²` term.
///
/// `point` binds the frame coordinates and any parameters (e.g. inputs).
pub fn bracket_fd_oracle(
    a: &VectorField,
    b: &VectorField,
    point: &BTreeMap<SymbolId, f64>,
    h: f64,
) -> Result<Vec<f64>, NumericError> {
    if !(h > 0.0) {
        return Err(NumericError::Invalid("h must be positive".into()));
    }
    if a.frame() != b.frame() {
        return Err(NumericError::Invalid("fields over different frames".into()));
    }
    let ca = CompiledField::new(a);
    let cb = CompiledField::new(b);
    let width = ca.width().max(cb.width()).max(point.keys().map(|k| k.index() + 1).max().unwrap_or(0));
    let mut buf = vec![0.0; width];
    for (k, v) in point {
        buf[k.index()] = *v;
    }
    let p: Vec<f64> = a
        .frame()
        .coords()
        .iter()
        .map(|c| point.get(c).copied().ok_or(NumericError::Invalid(format!("coordinate {c} unbound"))))
        .collect::<Result<_, _>>()?;
    let sub = h / 8.0;
    let mut commutator = |s: f64| -> Result<Vec<f64>, NumericError> {
        let q = flow(&ca, &mut buf, &p, s, sub)?;
        let q = flow(&cb, &mut buf, &q, s, sub)?;
        let q = flow(&ca, &mut buf, &q, -s, sub)?;
        let q = flow(&cb, &mut buf, &q, -s, sub)?;
        Ok(q.iter().zip(&p).map(|(q, p)| q - p).collect())
    };
    let mut estimate = |h: f64| -> Result<Vec<f64>, NumericError> {
        let plus = commutator(h)?;
        let minus = commutator(-h)?;
        Ok(plus.iter().zip(&minus).map(|(a, b)| (a + b) / (2.0 * h * h)).collect())
    };
    let coarse = estimate(h)?;
    let fine = estimate(h / 2.0)?;
    Ok(fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{lie_bracket, Frame};
    use crate::symbolic::{parse_expr, SymbolTable};

    fn ex1() -> ControlAffineSystem {
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
    fn exponential_growth() {
        let t = Arc::new(SymbolTable::new(&["x1", "x2"], &["u1"], 0, 0, 0).unwrap());
        let p = |s: &str| parse_expr(s, &t).unwrap();
        let sys = ControlAffineSystem::new("exp", t.clone(), vec![p("x1"), p("0")], vec![vec![p("0"), p("1")]]).unwrap();
        let traj = integrate(&sys, &[1.0, 0.0], &|_| vec![0.0], (0.0, 1.0), 1e-3).unwrap();
        assert!((traj.last_state()[0] - std::f64::consts::E).abs() < 1e-8);
        assert_eq!(traj.last_state()[1], 0.0);
        let err = |dt: f64| {
            let tr = integrate(&sys, &[1.0, 0.0], &|_| vec![0.0], (0.0, 1.0), dt).unwrap();
            (tr.last_state()[0] - std::f64::consts::E).abs()
        };
        assert!(err(0.1) / err(0.05) >= 14.0);
    }

    #[test]
    fn example_one_closed_form() {
        let sys = ex1();
        let traj = integrate(&sys, &[1.0, 0.0, 0.0], &|_| vec![0.0, 1.0], (0.0, 1.0), 1e-3).unwrap();
        let x = traj.last_state();
        assert!((x[2] - 1.0).abs() < 1e-12);
        assert!((x[1] - 0.5).abs() < 1e-12);
        assert!((x[0] - (1.0 + 1.0 / 6.0)).abs() < 1e-12);
        assert_eq!(traj.len(), 1001);
    }

    #[test]
    fn fd_bracket_matches_symbolic() {
        let sys = ex1();
        let f0 = sys.drift();
        let f2 = &sys.controls()[1];
        let t = sys.table();
        let pt: BTreeMap<_, _> = t.states().into_iter().map(|s| (s, 1.0)).collect();
        let est = bracket_fd_oracle(f0, f2, &pt, 1e-3).unwrap();
        let exact = [0.0, -1.0, 0.0];
        for (e, x) in est.iter().zip(exact) {
            assert!((e - x).abs() < 1e-4, "{est:?}");
        }
        let frame = Frame::new(t.states());
        let c1 = VectorField::coordinate(frame.clone(), 0);
        let c2 = VectorField::coordinate(frame, 1);
        let est = bracket_fd_oracle(&c1, &c2, &pt, 1e-3).unwrap();
        assert!(est.iter().all(|v| v.abs() < 1e-6));
        assert!(lie_bracket(&c1, &c2).unwrap().is_zero());
    }
}
