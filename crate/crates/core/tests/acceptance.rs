use floquet_holonomy::acceptance::{run_acceptance, self_check, AcceptanceOptions};

#[test]
fn all_criteria_pass_at_default_settings() {
    let report = self_check();
    for line in report.summary_lines() {
        println!("{line}");
    }
    println!("{report}");
    assert_eq!(report.outcomes.len(), 12);
    let failed: Vec<u32> = report.outcomes.iter().filter(|o| !o.passed()).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn inverted_transport_sign_breaks_abelian_consistency() {
    let report = run_acceptance(AcceptanceOptions { invert_transport_sign: true, ..Default::default() });
    let abelian = report.criterion(5).unwrap();
    assert!(!abelian.passed());
    assert!(abelian.checks.iter().any(|c| c.name.starts_with("|arg u(T)") && !c.passed));
    // the state phases themselves do not use the transport
    assert!(abelian.checks.iter().filter(|c| c.name.starts_with("closure")).all(|c| c.passed));
    assert_eq!(report.exit_code(), 1);
}

#[test]
fn coarse_grid_keeps_orders_but_misses_tight_bounds() {
    let report = run_acceptance(AcceptanceOptions { steps: 16, ..Default::default() });
    for line in report.summary_lines() {
        println!("{line}");
    }
    assert!(report.criterion(2).unwrap().passed());
    assert!(!report.criterion(1).unwrap().passed());
    assert!(!report.criterion(3).unwrap().passed());
    assert_eq!(report.exit_code(), 1);
}
