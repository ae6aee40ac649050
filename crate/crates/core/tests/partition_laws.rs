mod support;

use proptest::prelude::*;
use support::laws::*;

fn cases() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn covariate_and_concept_partition_exactly(c in split_case()) {
        split_law(&c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn prior_respects_label_bound_and_pool(c in prior_case()) {
        prior_law(&c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn unbalanced_sizes_exact((sizes, spare, seed) in unbalanced_case()) {
        unbalanced_law(&sizes, spare, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn quality_counts_exact((sizes, n, e, seed) in quality_case()) {
        quality_law(&sizes, n, e, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn gaussian_noise_rounds_and_clamps((pixels, sigma, seed) in gaussian_case()) {
        gaussian_law(&pixels, sigma, seed).map_err(TestCaseError::fail)?;
    }
}
