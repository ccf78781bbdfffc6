//! System files, analysis sessions behind the command line, reports and the
//! chart registry.

mod chart;
mod file;
mod report;
mod session;

pub use chart::{nonzero_predicates, Atlas, ChartRecord, ChartSource, Route, StateBox};
pub use file::{parse_rational, parse_rational_list, render_rational, CandidateSpec, NamedCandidate, NamedPoint, SystemFile};
pub use report::{
    AnalysisReport, BracketEntry, DegenerateReport, Format, GenericReport, PointReport, SimulationReport, UNDETERMINED_WARNING,
};
pub use session::{parse_split, split_list, DegenerateRequest, Session, ANSATZ_DEGREE};

/// The bundled example systems as `(file name, contents)`.
pub const CORPUS: [(&str, &str); 3] = [
    ("example1.sys", include_str!("../../corpus/example1.sys")),
    ("example2.sys", include_str!("../../corpus/example2.sys")),
    ("example3.sys", include_str!("../../corpus/example3.sys")),
];

pub fn corpus(name: &str) -> Option<SystemFile> {
    let key = name.strip_suffix(".sys").unwrap_or(name);
    CORPUS.iter().find(|(n, _)| n.strip_suffix(".sys") == Some(key)).map(|(_, text)| SystemFile::parse(text).expect("bundled file parses"))
}
