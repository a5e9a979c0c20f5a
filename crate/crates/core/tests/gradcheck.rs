mod support;

use support::gradcheck::{cases, run_case, TOLERANCE};

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut failures = Vec::new();
    for case in cases() {
        let (worst, seed) = run_case(&case);
        if worst >= TOLERANCE {
            failures.push(format!("{}: {worst:.3e} at seed {seed}", case.0));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
