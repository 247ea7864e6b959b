mod common;

use common::oracles::conv_case;

#[test]
fn lowered_convolution_matches_direct_loops_on_100_instances() {
    for seed in 0..100 {
        let err = conv_case(seed);
        assert!(err <= 1e-5, "instance {seed}: max abs err {err:e}");
    }
}
