use chromspin::ensemble::{hole_recovery_scan_with, odmr_scan_with, ple_spectrum, EnsembleSpec, Spectrum};
use chromspin::fitting::{fit_with_guesses, FitData, FitModel, ModelId};
use chromspin::params::RunConfig;
use chromspin::sequences::{
    build_protocol, run_built, run_protocol, ProtocolId, ProtocolSpec, Segment, SweepGrid, SweepResult,
};

fn noiseless(id: ProtocolId) -> RunConfig {
    let mut c = RunConfig::default();
    c.detection.shot_noise = false;
    c.protocol = ProtocolSpec::new(id);
    c
}

fn with_grid(mut c: RunConfig, lo: f64, hi: f64, n: usize) -> RunConfig {
    c.protocol.sweep = Some(SweepGrid::linear(lo, hi, n));
    c
}

fn trace<'a>(r: &'a SweepResult, label: &str) -> &'a [f64] {
    &r.trace(label).unwrap().mean_counts
}

fn lorentz_center(s: &Spectrum) -> f64 {
    let base = s.values[0];
    let k = (0..s.values.len())
        .max_by(|a, b| (s.values[*a] - base).abs().total_cmp(&(s.values[*b] - base).abs()))
        .unwrap();
    let d = FitData::unweighted(s.axis.clone(), s.values.clone()).unwrap();
    let f = fit_with_guesses(&FitModel::new(ModelId::Lorentzian), &d, &[s.values[k] - base, s.axis[k], 2.0, base]).unwrap();
    f.values[1]
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn spectra_are_non_negative() {
    let cfg = RunConfig::default();
    let ple = ple_spectrum(&cfg.defect, &EnsembleSpec::from_config(&cfg), &grid(-25.0, 20.0, 91)).unwrap();
    let d = cfg.defect.zero_field_splitting_mhz;
    let mut zero = cfg.clone();
    zero.field_gauss = 0.0;
    let hole = hole_recovery_scan_with(&zero, &grid(d - 100.0, d + 100.0, 41)).unwrap();
    let odmr = odmr_scan_with(&cfg, &grid(d - 10.0, d + 10.0, 81)).unwrap();
    for s in [&ple, &hole, &odmr] {
        assert!(s.values.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn peak_centers_converged_in_sampling() {
    let cfg = RunConfig::default();
    let d = cfg.defect.zero_field_splitting_mhz;
    let mut zero = cfg.clone();
    zero.field_gauss = 0.0;
    let h1 = lorentz_center(&hole_recovery_scan_with(&zero, &grid(d - 100.0, d + 100.0, 51)).unwrap());
    let h2 = lorentz_center(&hole_recovery_scan_with(&zero, &grid(d - 100.0, d + 100.0, 101)).unwrap());
    assert!((h1 - h2).abs() < 0.005 * 31.0, "{h1} {h2}");

    // one ODMR line, isolated at a large field
    let mut far = cfg.clone();
    far.field_gauss = 20.0;
    let l = chromspin::spin::ground_levels(&far.defect, far.field_gauss, far.zeeman_convention);
    let o1 = lorentz_center(&odmr_scan_with(&far, &grid(l.f_plus - 5.0, l.f_plus + 5.0, 51)).unwrap());
    let o2 = lorentz_center(&odmr_scan_with(&far, &grid(l.f_plus - 5.0, l.f_plus + 5.0, 101)).unwrap());
    assert!((o1 - o2).abs() < 0.005 * 1.32, "{o1} {o2}");
}

#[test]
fn rabi_at_zero_length_ignores_the_drive() {
    let a = run_protocol(&with_grid(noiseless(ProtocolId::Rabi), 0.0, 1.0, 3)).unwrap();
    let mut c = with_grid(noiseless(ProtocolId::Rabi), 0.0, 1.0, 3);
    c.defect.rabi_freq_mhz = 0.37;
    let b = run_protocol(&c).unwrap();
    assert!((a.mean_counts[0] / b.mean_counts[0] - 1.0).abs() < 1e-9);
    assert!((a.mean_counts[1] - b.mean_counts[1]).abs() > 1.0);
}

#[test]
fn ramsey_fringe_follows_detuning() {
    for det in [3.0, 5.0, 8.0] {
        let mut c = noiseless(ProtocolId::Ramsey);
        c.protocol.settings.ramsey_detuning_mhz = det;
        let r = run_protocol(&c).unwrap();
        let d = FitData::new(r.values.clone(), r.mean_counts.clone(), r.sigma.clone()).unwrap();
        let mean = d.y.iter().sum::<f64>() / d.len() as f64;
        let f = fit_with_guesses(&FitModel::new(ModelId::RamseyModel), &d, &[d.y[0] - mean, 0.3, det, 0.0, mean]).unwrap();
        assert!((f.values[2].abs() / det - 1.0).abs() < 0.01, "{det}: {:?}", f.values);
    }
}

#[test]
fn echo_difference_cancels_common_mode() {
    let r = run_protocol(&with_grid(noiseless(ProtocolId::HahnEcho), 0.0, 100.0, 21)).unwrap();
    let (p, m) = (trace(&r, "plus_x"), trace(&r, "minus_x"));
    for i in 0..r.values.len() {
        assert!((r.mean_counts[i] - (p[i] - m[i])).abs() < 1e-9 * p[i]);
    }
    // full contrast at zero free evolution
    let top = r.mean_counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(top, r.mean_counts[0]);
    assert!(r.mean_counts[0] > 0.0);
}

#[test]
fn inversion_contrast_is_largest_without_wait() {
    let r = run_protocol(&with_grid(noiseless(ProtocolId::T1Inversion), 0.0, 4e6, 9)).unwrap();
    let c0 = r.mean_counts[0].abs();
    assert!(r.mean_counts.iter().all(|v| v.abs() <= c0 * (1.0 + 1e-12)));
}

#[test]
fn two_pi_pulse_is_the_identity() {
    let cfg = with_grid(noiseless(ProtocolId::T1Inversion), 0.0, 1000.0, 3);
    let built = build_protocol(&cfg.protocol, &cfg).unwrap();
    let full = run_built(&cfg, &built).unwrap();
    // same timing, no drive
    let mut bare = built.clone();
    for s in bare.primary.iter_mut() {
        for g in s.segments.iter_mut() {
            if let Segment::Mw { rabi_mhz, .. } = g {
                *rabi_mhz = 0.0;
            }
        }
    }
    bare.reference = None;
    bare.reference_label = None;
    let none = run_built(&cfg, &bare).unwrap();
    for (a, b) in trace(&full, "two_pi").iter().zip(&none.mean_counts) {
        assert!((a / b - 1.0).abs() < 1e-6, "{a} {b}");
    }
}

#[test]
fn polarization_contrast_never_decreases() {
    let r = run_protocol(&noiseless(ProtocolId::PolarizationBuildup)).unwrap();
    let (c, _) = r.contrast_percent("no_pi", "pi", false).unwrap();
    for w in c.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{c:?}");
    }
}

#[test]
fn shorter_probe_keeps_contrast() {
    let mut prev_counts = f64::INFINITY;
    let mut prev_contrast = f64::NEG_INFINITY;
    for probe in [50.0, 10.0, 1.0] {
        let mut c = with_grid(noiseless(ProtocolId::PolarizationBuildup), 500.0, 4000.0, 3);
        c.protocol.settings.probe_us = probe;
        let r = run_protocol(&c).unwrap();
        let (con, _) = r.contrast_percent("no_pi", "pi", false).unwrap();
        let counts = trace(&r, "pi")[2];
        assert!(counts < prev_counts, "probe {probe}");
        assert!(con[2] >= prev_contrast - 1e-9, "probe {probe}: {con:?}");
        prev_counts = counts;
        prev_contrast = con[2];
    }
}

#[test]
fn seeded_pipeline_is_bit_reproducible() {
    let mut c = RunConfig::default();
    c.protocol = ProtocolSpec::new(ProtocolId::HahnEcho).with_sweep(SweepGrid::linear(1.0, 50.0, 11));
    let a = run_protocol(&c).unwrap();
    let b = run_protocol(&c).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    c.detection.rng_seed ^= 1;
    assert_ne!(a.sampled_counts, run_protocol(&c).unwrap().sampled_counts);
}
