use flatlas::atlas::{corpus, Format, Session, SystemFile, CORPUS, UNDETERMINED_WARNING};
use flatlas::sampling::DEFAULT_SEED;

fn session(name: &str) -> Session {
    Session::new(corpus(name).unwrap(), DEFAULT_SEED).unwrap()
}

#[test]
fn corpus_round_trips_through_render() {
    for (name, text) in CORPUS {
        let sf = SystemFile::parse(text).unwrap();
        assert_eq!(SystemFile::parse(&sf.render()).unwrap(), sf, "{name}");
    }
}

#[test]
fn example_one_atlas() {
    let (r, atlas) = session("example1").atlas().unwrap();
    let text = r.render(Format::Text);
    assert!(r.passed);
    assert_eq!(atlas.charts.len(), 2);
    assert_eq!(atlas.charts[0].flat_output, vec!["x1", "x2"]);
    assert_eq!(atlas.charts[0].domain, vec!["x1 ≠ 0"]);
    assert_eq!(atlas.charts[1].flat_output, vec!["x1", "u1"]);
    assert!(atlas.charts.iter().all(|c| c.verified));
    assert!(text.contains(UNDETERMINED_WARNING));
    assert!(text.contains("apparent singularity (charts C2)"));
}

#[test]
fn example_two_atlas() {
    let (r, _) = session("example2").atlas().unwrap();
    let text = r.render(Format::Text);
    assert!(!r.passed);
    assert!(text.contains("not involutive"));
}

#[test]
fn example_three_atlas() {
    let (r, atlas) = session("example3").atlas().unwrap();
    let text = r.render(Format::Text);
    assert!(r.passed);
    assert!(text.contains("brunovsky_indices: [3, 3]"));
    assert_eq!(atlas.charts[0].flat_output, vec!["x1", "x2", "u3"]);
    let json: serde_json::Value = serde_json::from_str(&r.render(Format::Json)).unwrap();
    assert_eq!(json["points"][0]["degenerate"][0]["brunovsky_indices"], serde_json::json!([3, 3]));
}
