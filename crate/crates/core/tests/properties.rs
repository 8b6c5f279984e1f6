//! Randomized invariants over the public library surface.

use nlc_core::cdc::{apply_fir, apply_fir_fde, CdcFilter, FdeConfig};
use nlc_core::channel::{ssfm_propagate, LinkParams};
use nlc_core::metrics::{ber_from_q2, q2_from_ber};
use nlc_core::model::pa_activation;
use nlc_core::signal::{fft_in_place, ifft_in_place, max_abs_diff, ComplexSignal};
use nlc_core::training::{mse_loss, phase_derotate};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_roundtrip_preserves_samples(x in complex_vec(1..300)) {
        let mut y = x.clone();
        fft_in_place(&mut y).unwrap();
        ifft_in_place(&mut y).unwrap();
        prop_assert!(max_abs_diff(&x, &y) < 1e-12);
    }

    #[test]
    fn lossless_propagation_conserves_energy(
        x in complex_vec(64..256),
        steps in 1usize..8,
        gamma in 0.0f64..5.0,
    ) {
        let link = LinkParams { alpha: 0.0, gamma, ..LinkParams::default() };
        let s = ComplexSignal::new(x, 64e9).unwrap();
        let out = ssfm_propagate(&s, &link, 80.0, steps).unwrap();
        prop_assert!((out.energy() - s.energy()).abs() <= 1e-10 * s.energy());
    }

    #[test]
    fn fde_agrees_with_tde_for_any_block_size(
        x in complex_vec(512..1024),
        half in complex_vec(1..20),
        log2_fft in 6u32..10,
    ) {
        let f = CdcFilter::new(half, 80.0, 64e9).unwrap();
        let n_fft = 1usize << log2_fft;
        prop_assume!(n_fft > f.len());
        let s = ComplexSignal::new(x, 64e9).unwrap();
        let tde = apply_fir(&s, &f).unwrap();
        let fde = apply_fir_fde(&s, &f, &FdeConfig::new(n_fft)).unwrap();
        prop_assert!(max_abs_diff(tde.samples(), fde.samples()) < 1e-9);
    }

    #[test]
    fn pa_activation_is_a_pure_rotation(
        x in complex_vec(16..128),
        taps in prop::collection::vec(-2.0f64..2.0, 1..6),
    ) {
        prop_assume!(2 * taps.len() - 1 <= x.len());
        let y = pa_activation(&x, &taps);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn derotation_never_increases_error(
        reference in complex_vec(8..64),
        noise in complex_vec(64..65),
        phase in -3.1f64..3.1,
    ) {
        let rx: Vec<Complex64> = reference
            .iter()
            .zip(&noise)
            .map(|(r, n)| r * Complex64::from_polar(1.0, phase) + 0.2 * n)
            .collect();
        let before = mse_loss(&rx, &reference).unwrap();
        let after = mse_loss(&phase_derotate(&rx, &reference).unwrap().symbols, &reference).unwrap();
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn q2_and_ber_are_inverse_and_monotone(a in 1.0f64..25.0, b in 1.0f64..25.0) {
        prop_assert!((q2_from_ber(ber_from_q2(a)).unwrap() - a).abs() < 1e-9);
        if a < b {
            prop_assert!(ber_from_q2(a) > ber_from_q2(b));
        }
    }
}
