#[path = "support/locality.rs"]
mod locality;

use proptest::prelude::*;

#[test]
fn out_of_field_perturbations_leave_rows_unchanged() {
    let mut checked = 0;
    for seed in 0..locality::GRAPHS {
        checked += locality::check_graph(seed).unwrap();
    }
    // Most draws have nodes outside every field.
    assert!(checked > 200, "only {checked} checks ran");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn locality_holds_on_arbitrary_graphs(seed in 1000u64..1_000_000) {
        prop_assert!(locality::check_graph(seed).is_ok());
    }
}
