use chromspin::ensemble::odmr_scan_with;
use chromspin::params::{load_config, RunConfig, ZeemanConvention};
use chromspin::sequences::{ProtocolId, ProtocolSpec, SweepGrid};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_json_round_trip(
        field in -300.0f64..300.0,
        temp in 2.0f64..40.0,
        seed in any::<u64>(),
        reps in 1u64..1_000_000,
        proto in 0usize..ProtocolId::ALL.len(),
        shift in any::<bool>(),
        pump in 1e-4f64..1e-1,
        points in 2usize..400,
    ) {
        let mut c = RunConfig::default();
        c.field_gauss = field;
        c.temperature_k = temp;
        c.detection.rng_seed = seed;
        c.detection.repetitions = reps;
        c.defect.pump_rate_per_us = pump;
        c.zeeman_convention = if shift { ZeemanConvention::Shift } else { ZeemanConvention::Separation };
        let id = ProtocolId::ALL[proto];
        c.protocol = ProtocolSpec::new(id);
        if !id.is_continuous_wave() {
            c.protocol.sweep = Some(SweepGrid::linear(0.0, 10.0, points));
        }
        let back = load_config(&c.to_json()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash(), c.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn odmr_non_negative(field in 0.0f64..30.0, rabi in 1e-5f64..0.3) {
        let mut c = RunConfig::default();
        c.field_gauss = field;
        c.protocol.settings.odmr_rabi_mhz = rabi;
        let d = c.defect.zero_field_splitting_mhz;
        let axis: Vec<f64> = (0..41).map(|i| d - 60.0 + 3.0 * i as f64).collect();
        let s = odmr_scan_with(&c, &axis).unwrap();
        prop_assert!(s.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }
}
