use std::fmt::Write;

use serde::Serialize;

use super::chart::ChartRecord;

pub const UNDETERMINED_WARNING: &str = "flatness undetermined by generic test; degenerate route attempted";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GenericReport {
    pub candidate: String,
    pub k: usize,
    pub psi: Vec<String>,
    pub integrals_pass: Vec<bool>,
    pub jacobian_rank: usize,
    pub m_rank: Option<(usize, usize)>,
    pub n_rank: Option<(usize, usize)>,
    pub recovered: Vec<(String, String)>,
    pub recovery_complete: bool,
    pub verdict: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DegenerateReport {
    pub candidate: String,
    pub split: String,
    pub p: usize,
    pub jet_order: usize,
    pub tower_ranks: Vec<usize>,
    pub rank_jumps: Vec<usize>,
    pub brunovsky_indices: Vec<usize>,
    pub delta_a_ranks: Vec<usize>,
    pub constant_dimension: bool,
    pub phi0: Vec<String>,
    pub flat_output: Vec<String>,
    pub delta: Vec<Vec<String>>,
    pub ua_free: Vec<Vec<bool>>,
    pub verdict: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PointReport {
    pub name: String,
    pub x: Vec<String>,
    pub u: Vec<String>,
    pub class: Option<String>,
    pub generic_condition: Vec<(usize, usize)>,
    pub gamma_ranks: Vec<usize>,
    pub gamma_outcome: Option<String>,
    pub generic: Vec<GenericReport>,
    pub degenerate: Vec<DegenerateReport>,
    pub coverage: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketEntry {
    pub pair: String,
    pub value: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub chart: String,
    pub signal: Vec<String>,
    pub t_end: f64,
    pub dt: f64,
    pub max_error: f64,
    pub tolerance: f64,
    pub initial_state: Vec<f64>,
    pub final_state: Vec<f64>,
}

/// Everything one command produced; `passed` drives the exit code.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub command: String,
    pub system: String,
    pub seed: u64,
    pub points: Vec<PointReport>,
    pub brackets: Vec<BracketEntry>,
    pub charts: Vec<ChartRecord>,
    pub simulation: Option<SimulationReport>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl AnalysisReport {
    pub fn new(command: &str, system: &str, seed: u64) -> Self {
        AnalysisReport {
            command: command.to_string(),
            system: system.to_string(),
            seed,
            points: Vec::new(),
            brackets: Vec::new(),
            charts: Vec::new(),
            simulation: None,
            warnings: Vec::new(),
            passed: true,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => render_text(self),
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
        }
    }
}

fn list<T: std::fmt::Display>(v: &[T]) -> String {
    format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
}

fn render_text(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "flatlas report");
    let _ = writeln!(s, "command: {}", r.command);
    let _ = writeln!(s, "system: {}", r.system);
    let _ = writeln!(s, "seed: {:#x}", r.seed);
    if r.points.is_empty() && r.brackets.is_empty() && r.simulation.is_none() {
        let _ = writeln!(s, "no points analyzed");
    }
    for b in &r.brackets {
        let _ = writeln!(s, "{} = {}", b.pair, list(&b.value));
    }
    for p in &r.points {
        let _ = writeln!(s, "point {}: x={} u={}", p.name, list(&p.x), list(&p.u));
        if let Some(c) = &p.class {
            let _ = writeln!(s, "  class: {c}");
        }
        if !p.generic_condition.is_empty() {
            let ranks: Vec<String> = p.generic_condition.iter().map(|(k, r)| format!("k={k}:{r}")).collect();
            let _ = writeln!(s, "  generic_condition_ranks: {}", list(&ranks));
        }
        if let Some(o) = &p.gamma_outcome {
            let _ = writeln!(s, "  gamma_ranks: {} ({o})", list(&p.gamma_ranks));
        }
        for w in &p.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
        for g in &p.generic {
            let _ = writeln!(s, "  generic {} (k={}): {}", g.candidate, g.k, g.verdict);
            let _ = writeln!(s, "    psi: {}", list(&g.psi));
            let _ = writeln!(s, "    first_integrals: {} (jacobian rank {})", list(&g.integrals_pass), g.jacobian_rank);
            if let (Some((mr, md)), Some((nr, nd))) = (g.m_rank, g.n_rank) {
                let _ = writeln!(s, "    m_rank: {mr}/{md}");
                let _ = writeln!(s, "    n_rank: {nr}/{nd}");
            }
            for (v, e) in &g.recovered {
                let _ = writeln!(s, "    {v} = {e}");
            }
            if let Some(e) = &g.error {
                let _ = writeln!(s, "    error: {e}");
            }
        }
        for d in &p.degenerate {
            let _ = writeln!(s, "  degenerate {} ({}): {}", d.candidate, d.split, d.verdict);
            if let Some(e) = &d.error {
                let _ = writeln!(s, "    abort: {e}");
                continue;
            }
            let _ = writeln!(s, "    p: {}, jet_order: {}", d.p, d.jet_order);
            let _ = writeln!(s, "    tower_ranks: {}", list(&d.tower_ranks));
            let _ = writeln!(s, "    rank_jumps: {}", list(&d.rank_jumps));
            let _ = writeln!(s, "    brunovsky_indices: {}", list(&d.brunovsky_indices));
            let _ = writeln!(s, "    delta_a_ranks: {}", list(&d.delta_a_ranks));
            let _ = writeln!(s, "    constant_dimension: {}", d.constant_dimension);
            if !d.phi0.is_empty() {
                let _ = writeln!(s, "    phi0: {}", list(&d.phi0));
                let _ = writeln!(s, "    flat_output: {}", list(&d.flat_output));
                let rows: Vec<String> = d.delta.iter().map(|r| list(r)).collect();
                let _ = writeln!(s, "    delta: {}", list(&rows));
                let free: Vec<String> = d.ua_free.iter().map(|r| list(r)).collect();
                let _ = writeln!(s, "    ua_free: {}", list(&free));
            }
        }
        if let Some(c) = &p.coverage {
            let _ = writeln!(s, "  coverage: {c}");
        }
    }
    for c in &r.charts {
        let _ = writeln!(
            s,
            "chart {}: {} at {}, output {}, domain {{{}}}, {}",
            c.id,
            c.route.label(),
            c.anchor,
            list(&c.flat_output),
            c.domain.join("; "),
            if c.verified { "verified" } else { "unverified" }
        );
    }
    if let Some(sim) = &r.simulation {
        let _ = writeln!(s, "simulate chart {}: signal {}", sim.chart, list(&sim.signal));
        let _ = writeln!(s, "  t_end: {}, dt: {}", sim.t_end, sim.dt);
        let floats = |v: &[f64]| list(&v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>());
        let _ = writeln!(s, "  initial_state: {}", floats(&sim.initial_state));
        let _ = writeln!(s, "  final_state: {}", floats(&sim.final_state));
        let _ = writeln!(s, "  max_error: {:e} (tolerance {:e})", sim.max_error, sim.tolerance);
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(s, "result: {}", if r.passed { "pass" } else { "fail" });
    s
}
