//! Finite-difference verification of every block family.

use ynet_model::blocks;

#[test]
fn all_blocks_pass_gradient_checks() {
    let reports = blocks::gradcheck_suite(0xb10c).unwrap();
    assert_eq!(reports.len(), 3);
    for r in reports {
        assert!(r.passed(), "{}", r);
    }
}
