use num_traits::{ToPrimitive, Zero};

use crate::accessibility::{classify_point, default_budget, PointClass};
use crate::error::{Error, Result};
use crate::flat_degenerate::{analyze_degenerate, degenerate_round_trip, DegenerateOptions};
use crate::flat_generic::{round_trip, search_first_integrals, verify_generic_flat_output, FlatOutputCandidate};
use crate::geometry::{lie_bracket, ControlAffineSystem};
use crate::linalg;
use crate::numeric::FlatSignal;
use crate::sampling::{Point, Sampler};
use crate::symbolic::{parse_expr, Expr, Rational, SymbolId, SymbolTable};

use super::chart::{nonzero_predicates, Atlas, ChartRecord, Route, StateBox};
use super::file::{parse_rational_list, render_rational, split_top, CandidateSpec, SystemFile};
use super::report::{AnalysisReport, BracketEntry, DegenerateReport, GenericReport, PointReport, SimulationReport, UNDETERMINED_WARNING};

/// Polynomial degree bound used when no candidate is supplied.
pub const ANSATZ_DEGREE: u32 = 3;

/// A loaded system with the sampler every command shares.
#[derive(Clone, Debug)]
pub struct Session {
    pub file: SystemFile,
    pub system: ControlAffineSystem,
    pub sampler: Sampler,
}

/// A degenerate-route request: optional split override and `φ_{i,0}`.
#[derive(Clone, Debug, Default)]
pub struct DegenerateRequest {
    pub name: String,
    pub split: Option<(Vec<usize>, Vec<usize>)>,
    pub phi: Option<Vec<Expr>>,
    pub order: Option<usize>,
}

impl Session {
    pub fn new(file: SystemFile, seed: u64) -> Result<Self> {
        let system = file.system()?;
        Ok(Session { file, system, sampler: Sampler::with_seed(seed) })
    }

    fn report(&self, command: &str) -> AnalysisReport {
        AnalysisReport::new(command, &self.file.name, self.sampler.seed)
    }

    /// A point named in the file, or `x=…` and optional `u=…` tokens.
    pub fn resolve_point(&self, tokens: &[String]) -> Result<(String, Point)> {
        if let [name] = tokens {
            if !name.contains('=') {
                let p = self.file.point(name).ok_or_else(|| Error::Invalid(format!("unknown point `{name}`")))?;
                return Ok((p.name.clone(), self.file.point_map(p)));
            }
        }
        let (n, m) = (self.system.n(), self.system.m());
        let mut x = None;
        let mut u = vec![Rational::zero(); m];
        for tok in tokens.iter().flat_map(|t| t.split_whitespace()) {
            let tok = tok.trim_end_matches(',');
            let values = |s: &str| parse_rational_list(s).ok_or_else(|| Error::Invalid(format!("bad point values `{s}`")));
            if let Some(v) = tok.strip_prefix("x=") {
                x = Some(values(v)?);
            } else if let Some(v) = tok.strip_prefix("u=") {
                u = values(v)?;
            } else {
                return Err(Error::Invalid(format!("bad point token `{tok}`")));
            }
        }
        let x = x.ok_or_else(|| Error::Invalid("point needs x=…".into()))?;
        if x.len() != n || u.len() != m {
            return Err(Error::Invalid(format!("point needs {n} state and {m} input values")));
        }
        let pt = self.system.state_ids().into_iter().zip(x).chain(self.system.control_ids().into_iter().zip(u)).collect();
        Ok(("cli".to_string(), pt))
    }

    fn point_header(&self, name: &str, pt: &Point) -> PointReport {
        let get = |ids: Vec<SymbolId>| ids.iter().map(|i| pt.get(i).map(render_rational).unwrap_or_else(|| "?".into())).collect();
        PointReport { name: name.to_string(), x: get(self.system.state_ids()), u: get(self.system.control_ids()), ..Default::default() }
    }

    fn classified(&self, name: &str, pt: &Point) -> Result<(PointReport, PointClass)> {
        let mut rep = self.point_header(name, pt);
        let c = classify_point(&self.system, pt, default_budget(&self.system), &self.sampler)?;
        rep.class = Some(c.class.label());
        rep.generic_condition = c.generic.ranks.clone();
        rep.gamma_ranks = c.gamma.point_ranks.clone();
        rep.gamma_outcome = Some(format!("{:?}", c.gamma.outcome));
        Ok((rep, c.class))
    }

    pub fn classify(&self, points: &[(String, Point)]) -> Result<AnalysisReport> {
        let mut r = self.report("classify");
        for (name, pt) in points {
            r.points.push(self.classified(name, pt)?.0);
        }
        Ok(r)
    }

    pub fn brackets(&self) -> Result<AnalysisReport> {
        let mut r = self.report("brackets");
        let fields: Vec<_> = std::iter::once(self.system.drift()).chain(self.system.controls()).collect();
        for i in 0..fields.len() {
            for j in i + 1..fields.len() {
                let b = lie_bracket(fields[i], fields[j])?;
                r.brackets.push(BracketEntry {
                    pair: format!("[f{i}, f{j}]"),
                    value: b.components().iter().map(|e| e.render(self.system.table())).collect(),
                });
            }
        }
        Ok(r)
    }

    fn generic_at(&self, name: &str, pt: &Point, label: &str, k: usize, psi: &[Expr]) -> (GenericReport, Option<ChartRecord>) {
        let t = self.system.table();
        let mut g = GenericReport {
            candidate: label.to_string(),
            k,
            psi: psi.iter().map(|e| e.render(t)).collect(),
            verdict: "flat-output-rejected".into(),
            ..Default::default()
        };
        let v = match verify_generic_flat_output(&self.system, &FlatOutputCandidate { k, components: psi.to_vec() }, pt, &self.sampler) {
            Ok(v) => v,
            Err(e) => {
                g.error = Some(e.to_string());
                return (g, None);
            }
        };
        g.integrals_pass = v.integrals.passes.clone();
        g.jacobian_rank = v.integrals.jacobian_rank;
        g.verdict = v.verdict().to_string();
        if let Some(mn) = &v.mn {
            g.m_rank = Some((mn.m_rank, mn.m_dim));
            g.n_rank = Some((mn.n_rank, mn.n_dim));
        }
        if let (Some(rec), Some(chain)) = (&v.recovery, &v.chain) {
            let ct = chain.table();
            g.recovered = chain.unknowns().into_iter().filter_map(|id| rec.get(id).map(|e| (ct.name(id).to_string(), e.render(ct)))).collect();
            g.recovery_complete = rec.complete;
        }
        if !v.verified {
            return (g, None);
        }
        let chain = v.chain.as_ref().expect("verified chain");
        let nonzero = match chain.n_matrix().and_then(|n| Ok(linalg::det_symbolic(&n)?)).and_then(|d| nonzero_predicates(&d)) {
            Ok(p) => p,
            Err(e) => {
                g.error = Some(format!("domain: {e}"));
                Vec::new()
            }
        };
        let chart = ChartRecord::new(name, Route::Generic { k }, g.psi.clone(), nonzero, None, chain.table());
        (g, Some(chart.with_generic_source(k, psi, self.guess(pt))))
    }

    fn guess(&self, pt: &Point) -> Vec<f64> {
        self.system
            .state_ids()
            .into_iter()
            .chain(self.system.control_ids())
            .map(|i| pt.get(&i).and_then(ToPrimitive::to_f64).unwrap_or(0.0))
            .collect()
    }

    fn generic_candidates(&self, k: Option<usize>) -> Vec<(String, usize, Vec<Expr>)> {
        self.file
            .candidates
            .iter()
            .filter_map(|c| match &c.spec {
                CandidateSpec::Generic { k: ck, psi } if k.is_none_or(|k| k == *ck) => Some((c.name.clone(), *ck, psi.clone())),
                _ => None,
            })
            .collect()
    }

    fn ansatz_candidate(&self, pt: &Point, k: usize) -> std::result::Result<(String, usize, Vec<Expr>), String> {
        match search_first_integrals(&self.system, k, pt, ANSATZ_DEGREE, &self.sampler) {
            Ok(s) if s.complete => Ok(("ansatz".into(), k, s.symbolic)),
            Ok(_) => Err(format!(
                "no {} independent polynomial first integrals of f{k} up to degree {ANSATZ_DEGREE}; only flow-box integrals are available",
                self.system.n() - 1
            )),
            Err(e) => Err(e.to_string()),
        }
    }

    pub fn flat_generic(&self, name: &str, pt: &Point, k: Option<usize>, psi: Option<Vec<Expr>>) -> Result<AnalysisReport> {
        let mut r = self.report("flat-generic");
        let (mut rep, class) = self.classified(name, pt)?;
        let k_eff = k.or(match class {
            PointClass::InOmega0 { k } => Some(k),
            _ => None,
        });
        let mut cands = match psi {
            Some(psi) => {
                let k = k_eff.ok_or_else(|| Error::Invalid("--k is required when the generic condition fails".into()))?;
                vec![("cli".to_string(), k, psi)]
            }
            None => self.generic_candidates(k),
        };
        if cands.is_empty() {
            match k_eff.map(|k| self.ansatz_candidate(pt, k)) {
                Some(Ok(c)) => cands.push(c),
                Some(Err(msg)) => rep.warnings.push(msg),
                None => rep.warnings.push("generic condition fails at the point and no --k was given".into()),
            }
        }
        for (label, k, psi) in &cands {
            let (g, chart) = self.generic_at(name, pt, label, *k, psi);
            r.passed &= chart.is_some();
            rep.generic.push(g);
        }
        r.passed &= !cands.is_empty();
        r.points.push(rep);
        Ok(r)
    }

    fn degenerate_at(&self, name: &str, pt: &Point, req: &DegenerateRequest) -> (DegenerateReport, Option<ChartRecord>) {
        let mut d = DegenerateReport { candidate: req.name.clone(), verdict: "flat-output-rejected".into(), ..Default::default() };
        d.split = match &req.split {
            Some((a, b)) => format!("a={a:?},b={b:?}"),
            None => "split chosen at the point".into(),
        };
        let opts = DegenerateOptions { split: req.split.clone(), order: req.order, candidates: req.phi.clone(), ..Default::default() };
        let a = match analyze_degenerate(&self.system, pt, &opts, &self.sampler) {
            Ok(a) => a,
            Err(e) => {
                d.verdict = "aborted".into();
                d.error = Some(e.to_string());
                return (d, None);
            }
        };
        let t = a.ext.system.table();
        d.split = a.split.label();
        d.p = a.split.p;
        d.jet_order = a.ext.order;
        d.tower_ranks = a.tower.ranks.clone();
        d.rank_jumps = a.tower.rank_jumps.clone();
        d.brunovsky_indices = a.tower.indices.clone();
        d.delta_a_ranks = a.delta_a_ranks.clone();
        d.constant_dimension = a.tower.constant_dimension;
        if let Some(out) = &a.output {
            d.phi0 = out.phi0.iter().map(|e| e.render(t)).collect();
            d.flat_output = d.phi0.iter().cloned().chain(out.ub.iter().map(|u| t.name(*u).to_string())).collect();
            d.delta = out.delta.iter().map(|r| r.iter().map(|e| e.render(t)).collect()).collect();
        }
        if let Some(v) = &a.verification {
            d.ua_free = v.ua_free.clone();
        }
        if !a.verified() {
            return (d, None);
        }
        d.verdict = "flat-output-verified".into();
        let out = a.output.as_ref().expect("verified output");
        let nonzero = match linalg::det_symbolic(&out.delta).map_err(Error::from).and_then(|e| nonzero_predicates(&e)) {
            Ok(p) => p,
            Err(e) => {
                d.error = Some(format!("domain: {e}"));
                Vec::new()
            }
        };
        let states = self.system.state_ids();
        let state_box = StateBox {
            coords: states.clone(),
            center: states.iter().map(|s| pt.get(s).cloned().unwrap_or_else(Rational::zero)).collect(),
            radius: opts.radius.clone(),
        };
        let chart = ChartRecord::new(name, Route::Degenerate { split: d.split.clone() }, d.flat_output.clone(), nonzero, Some(state_box), t);
        (d, Some(chart.with_degenerate_source(pt.clone(), opts)))
    }

    pub fn flat_degenerate(&self, name: &str, pt: &Point, req: &DegenerateRequest) -> Result<AnalysisReport> {
        let mut r = self.report("flat-degenerate");
        let (mut rep, _) = self.classified(name, pt)?;
        let (d, chart) = self.degenerate_at(name, pt, req);
        r.passed = chart.is_some();
        rep.degenerate.push(d);
        r.points.push(rep);
        Ok(r)
    }

    fn degenerate_requests(&self) -> Vec<DegenerateRequest> {
        let reqs: Vec<DegenerateRequest> = self
            .file
            .candidates
            .iter()
            .filter_map(|c| match &c.spec {
                CandidateSpec::Degenerate { a, b, phi } => Some(DegenerateRequest {
                    name: c.name.clone(),
                    split: Some((a.clone(), b.clone())),
                    phi: phi.clone(),
                    order: None,
                }),
                _ => None,
            })
            .collect();
        if reqs.is_empty() {
            vec![DegenerateRequest { name: "auto".into(), ..Default::default() }]
        } else {
            reqs
        }
    }

    /// Both routes over every named point; verified charts enter the atlas.
    pub fn atlas(&self) -> Result<(AnalysisReport, Atlas)> {
        let mut r = self.report("atlas");
        let mut atlas = Atlas::default();
        let mut classes = Vec::new();
        for p in &self.file.points {
            let pt = self.file.point_map(p);
            let (mut rep, class) = self.classified(&p.name, &pt)?;
            match class {
                PointClass::InOmega0 { k } => {
                    let mut cands = self.generic_candidates(None);
                    if cands.is_empty() {
                        match self.ansatz_candidate(&pt, k) {
                            Ok(c) => cands.push(c),
                            Err(msg) => rep.warnings.push(msg),
                        }
                    }
                    for (label, ck, psi) in &cands {
                        let (g, chart) = self.generic_at(&p.name, &pt, label, *ck, psi);
                        if let Some(c) = chart {
                            atlas.insert(c);
                        }
                        rep.generic.push(g);
                    }
                }
                PointClass::OutsideOmega { .. } => {
                    rep.warnings.push("Γ-accessibility fails: not flat at this point".into());
                }
                PointClass::InOmegaOnly { .. } | PointClass::Indeterminate => {
                    rep.warnings.push(UNDETERMINED_WARNING.into());
                    for req in self.degenerate_requests() {
                        let (d, chart) = self.degenerate_at(&p.name, &pt, &req);
                        if let Some(c) = chart {
                            atlas.insert(c);
                        }
                        rep.degenerate.push(d);
                    }
                }
            }
            classes.push((pt, class));
            r.points.push(rep);
        }
        for (rep, (pt, class)) in r.points.iter_mut().zip(&classes) {
            let cover = atlas.covering(pt, &self.sampler);
            rep.coverage = Some(if cover.is_empty() {
                r.passed = false;
                "candidate intrinsic singularity (no chart found)".to_string()
            } else if matches!(class, PointClass::InOmega0 { .. }) {
                format!("regular (charts {})", cover.join(", "))
            } else {
                format!("apparent singularity (charts {})", cover.join(", "))
            });
        }
        r.charts = atlas.charts.clone();
        Ok((r, atlas))
    }

    /// Rebuilds the atlas, then runs the numeric round trip of one chart
    /// under the closed-form signal `components` (functions of `t`).
    pub fn simulate(&self, chart_id: &str, components: &[String], t_end: f64, dt: f64, tol: f64) -> Result<AnalysisReport> {
        let (_, atlas) = self.atlas()?;
        let chart = atlas.get(chart_id).ok_or_else(|| Error::Invalid(format!("unknown chart `{chart_id}`")))?;
        let tt = SymbolTable::free(&["t"]).map_err(|e| Error::Invalid(e.to_string()))?;
        let exprs = components.iter().map(|c| Ok(parse_expr(c, &tt)?)).collect::<Result<Vec<_>>>()?;
        let signal = FlatSignal::Symbolic { time: SymbolId(0), components: exprs };
        let mut r = self.report("simulate");
        let (max_error, x0, x1) = match &chart.source {
            Some(super::chart::ChartSource::Generic { k, psi, guess }) => {
                let rt = round_trip(&self.system, *k, psi, &signal, (0.0, t_end), dt, Some(guess), &self.sampler)?;
                (rt.max_error, rt.trajectory.states[0].clone(), rt.trajectory.last_state().to_vec())
            }
            Some(super::chart::ChartSource::Degenerate { point, options }) => {
                let a = analyze_degenerate(&self.system, point, options, &self.sampler)?;
                let guess: Vec<f64> =
                    self.system.state_ids().iter().map(|s| point.get(s).and_then(ToPrimitive::to_f64).unwrap_or(0.0)).collect();
                let rt = degenerate_round_trip(&self.system, &a, &signal, (0.0, t_end), dt, Some(&guess))?;
                (rt.max_error, rt.trajectory.states[0].clone(), rt.trajectory.last_state().to_vec())
            }
            None => return Err(Error::Invalid(format!("chart `{chart_id}` has no construction data"))),
        };
        r.passed = max_error < tol;
        r.simulation = Some(SimulationReport {
            chart: chart_id.to_string(),
            signal: components.to_vec(),
            t_end,
            dt,
            max_error,
            tolerance: tol,
            initial_state: x0,
            final_state: x1,
        });
        Ok(r)
    }
}

/// `a=1,2,b=3` (also `a=[1,2],b=[3]` or `a=1,2;b=3`).
pub fn parse_split(text: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let bad = || Error::Invalid(format!("bad split `{text}`; expected a=…,b=…"));
    let t = text.replace(['[', ']', ' '], "");
    let rest = t.strip_prefix("a=").ok_or_else(bad)?;
    let i = rest.find("b=").ok_or_else(bad)?;
    let ints = |s: &str| -> Result<Vec<usize>> {
        s.split([',', ';']).filter(|p| !p.is_empty()).map(|p| p.parse().map_err(|_| bad())).collect()
    };
    Ok((ints(&rest[..i])?, ints(&rest[i + 2..])?))
}

/// Splits a comma-separated expression list (commas inside parentheses kept).
pub fn split_list(text: &str) -> Vec<String> {
    let body = text.trim();
    let body = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')).unwrap_or(body);
    split_top(body).into_iter().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_syntax() {
        assert_eq!(parse_split("a=1,2,b=3").unwrap(), (vec![1, 2], vec![3]));
        assert_eq!(parse_split("a=[2], b=[1]").unwrap(), (vec![2], vec![1]));
        assert!(parse_split("b=1").is_err());
        assert_eq!(split_list("[0.1*sin(t), 1 + t]"), vec!["0.1*sin(t)", "1 + t"]);
    }
}
