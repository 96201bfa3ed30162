mod common;

use proptest::prelude::*;

fn masses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..5.0, 1..5)
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), -1.0f64..1.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncation_is_exact(a in alpha(), c in 0.0f64..0.3, m in masses(), lo in 1e-4f64..1e-2, ratio in 2.0f64..50.0, t in 0.1f64..3.0, seed in any::<u64>()) {
        common::truncation_exact(a, c, &m, lo, lo * ratio, t, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn mass_is_accounted(a in alpha(), c in 0.0f64..0.5, m in masses(), cutoff in 1e-5f64..1e-2, t in 0.1f64..5.0, seed in any::<u64>()) {
        common::bookkeeping(a, c, &m, cutoff, t, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn superposition_with_shared_keys(a in alpha(), u0 in masses(), u1 in masses(), t in 0.1f64..3.0, seed in any::<u64>()) {
        common::superposition(a, &u0, &u1, 1e-3, t, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn time_change_is_identity_at_zero(v in 0.0f64..50.0, seed in any::<u64>()) {
        common::identity_time_change(v, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn bl_bound_never_exceeds_two(
        a in prop::collection::vec(prop::collection::vec(0.0f64..1e3, 0..12), 2..20),
        b in prop::collection::vec(prop::collection::vec(0.0f64..1e3, 0..12), 2..20),
        seed in any::<u64>(),
    ) {
        let sort = |v: Vec<Vec<f64>>| v.into_iter().map(|mut s| { s.sort_by(|x, y| y.total_cmp(x)); s }).collect::<Vec<_>>();
        common::bl_bounded(&sort(a), &sort(b), seed).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn shipped_configs_rerun_byte_for_byte() {
    let files = common::reproducible_configs().unwrap();
    assert!(files >= 12);
}
