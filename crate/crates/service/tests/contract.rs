use orcaclass_oracles::contract::contract_suite;

#[test]
fn endpoint_examples_hold_against_a_live_instance() {
    let dir = tempfile::tempdir().unwrap();
    let report = contract_suite(dir.path());
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    assert!(report.passes(), "{:#?}", report.failures());
    assert!(report.checks.len() >= 20);
}
