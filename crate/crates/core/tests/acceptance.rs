use std::io::Write;

use reldiff::harness::acceptance::{Acceptance, CRITERIA};

const SEED: u64 = 20240607;

#[test]
fn acceptance_criteria() {
    let reports = Acceptance::new(SEED).run_all();
    assert_eq!(reports.len(), CRITERIA.len());
    // written to the handle directly so the lines show without --nocapture
    let mut out = std::io::stdout().lock();
    for r in &reports {
        writeln!(out, "{}", r.line()).unwrap();
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    writeln!(out, "{passed}/{} criteria passed", reports.len()).unwrap();
    drop(out);
    let unexpected: Vec<u8> = reports.iter().filter(|r| !r.passed && !r.known_deviation).map(|r| r.id).collect();
    assert!(unexpected.is_empty(), "unexpected failures: {unexpected:?}");
}
