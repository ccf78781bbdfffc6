use num_traits::Signed;
use serde::Serialize;

use crate::error::Result;
use crate::flat_degenerate::DegenerateOptions;
use crate::sampling::{Point, Sampler};
use crate::symbolic::{Expr, Rational, SymbolId, SymbolTable};

use super::file::render_rational;

/// How a chart's flat output was obtained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum Route {
    Generic { k: usize },
    Degenerate { split: String },
}

impl Route {
    pub fn label(&self) -> String {
        match self {
            Route::Generic { k } => format!("generic(k={k})"),
            Route::Degenerate { split } => format!("degenerate({split})"),
        }
    }
}

/// Box `|x_i − c_i| ≤ r` over the state coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateBox {
    pub coords: Vec<SymbolId>,
    pub center: Vec<Rational>,
    pub radius: Rational,
}

/// What is needed to rerun a chart's construction.
#[derive(Clone, Debug, PartialEq)]
pub enum ChartSource {
    Generic { k: usize, psi: Vec<Expr>, guess: Vec<f64> },
    Degenerate { point: Point, options: DegenerateOptions },
}

/// A flat output with the predicates describing where it was certified.
/// Charts with overlapping domains are recorded as compatible; no transition
/// maps are computed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartRecord {
    pub id: String,
    pub anchor: String,
    pub route: Route,
    pub flat_output: Vec<String>,
    pub domain: Vec<String>,
    pub verified: bool,
    #[serde(skip)]
    pub nonzero: Vec<Expr>,
    #[serde(skip)]
    pub state_box: Option<StateBox>,
    #[serde(skip)]
    pub source: Option<ChartSource>,
}

impl ChartRecord {
    pub fn new(anchor: &str, route: Route, flat_output: Vec<String>, nonzero: Vec<Expr>, state_box: Option<StateBox>, table: &SymbolTable) -> Self {
        let mut domain: Vec<String> = nonzero.iter().map(|e| format!("{} ≠ 0", e.render(table))).collect();
        if let Some(b) = &state_box {
            let center = b.center.iter().map(render_rational).collect::<Vec<_>>().join(", ");
            domain.push(format!("box radius {} around x=({center})", render_rational(&b.radius)));
        }
        ChartRecord { id: String::new(), anchor: anchor.to_string(), route, flat_output, domain, verified: true, nonzero, state_box, source: None }
    }

    pub fn with_generic_source(mut self, k: usize, psi: &[Expr], guess: Vec<f64>) -> Self {
        self.source = Some(ChartSource::Generic { k, psi: psi.to_vec(), guess });
        self
    }

    pub fn with_degenerate_source(mut self, point: Point, options: DegenerateOptions) -> Self {
        self.source = Some(ChartSource::Degenerate { point, options });
        self
    }

    /// Membership at `point`; symbols the point leaves unbound (input jets)
    /// are treated generically.
    pub fn contains(&self, point: &Point, sampler: &Sampler) -> bool {
        if let Some(b) = &self.state_box {
            let inside = b.coords.iter().zip(&b.center).all(|(c, c0)| match point.get(c) {
                Some(v) => {
                    let d: Rational = v - c0;
                    d.abs() <= b.radius
                }
                None => false,
            });
            if !inside {
                return false;
            }
        }
        self.nonzero.iter().all(|e| !sampler.is_zero_with(e, point))
    }
}

/// Registry of verified charts.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Atlas {
    pub charts: Vec<ChartRecord>,
}

impl Atlas {
    /// Adds a verified chart and returns its id; unverified charts are refused.
    pub fn insert(&mut self, mut chart: ChartRecord) -> Option<String> {
        if !chart.verified {
            return None;
        }
        chart.id = format!("C{}", self.charts.len() + 1);
        let id = chart.id.clone();
        self.charts.push(chart);
        Some(id)
    }

    pub fn get(&self, id: &str) -> Option<&ChartRecord> {
        self.charts.iter().find(|c| c.id == id)
    }

    pub fn covering(&self, point: &Point, sampler: &Sampler) -> Vec<String> {
        self.charts.iter().filter(|c| c.contains(point, sampler)).map(|c| c.id.clone()).collect()
    }
}

/// Non-vanishing predicates for `e ≠ 0`: one per atom of its monomial content
/// plus the remaining cofactor when non-constant.
pub fn nonzero_predicates(e: &Expr) -> Result<Vec<Expr>> {
    let (atoms, cofactor) = e.monomial_factors()?;
    let mut out: Vec<Expr> = atoms.into_iter().map(|(a, _)| a).collect();
    if cofactor.as_constant().is_none() {
        out.push(cofactor.monic()?);
    }
    Ok(out)
}
