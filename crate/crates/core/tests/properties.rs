mod props;

#[test]
fn bracket_algebra() {
    props::bracket_algebra().unwrap();
}

#[test]
fn leibniz() {
    props::leibniz().unwrap();
}

#[test]
fn kalman() {
    props::kalman().unwrap();
}

#[test]
fn tower_rank_matches_wronskian() {
    props::lemma_one().unwrap();
}

#[test]
fn gamma_tower_inside_d_tower() {
    props::gamma_in_d().unwrap();
}

#[test]
fn fd_oracle() {
    props::fd_oracle().unwrap();
}

#[test]
fn flow_box() {
    props::flow_box().unwrap();
}

#[test]
fn truncation_example_one() {
    props::truncation_example_one().unwrap();
}

#[test]
fn truncation_example_three() {
    props::truncation_example_three().unwrap();
}
