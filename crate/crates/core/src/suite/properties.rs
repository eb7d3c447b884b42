//! Randomised invariants over the public API.

use crate::activations::{
    adaa_snakebeta, adaa_snakebeta_grad, snakebeta, ActivationKind, ActivationSpec, ActivationStream, BaseActivation,
};
use crate::config::{parse_configs, serialize_configs, NamedConfig};
use crate::filters::{
    convolve, design_fir, downsample_filtered, frequency_response, upsample_filtered, zero_interlace,
    FilterDesignSpec,
};
use crate::metrics::{ahr, ahr_bands, estimate_spectrum, fold_frequency, AhrContext};
use crate::signal::{gen_bandlimited, AudioBuffer, TestSignalSpec, Waveform};
use crate::upsamplers::{
    conv_transpose_with, image_frequencies, interp_upsample, upsample, ConvTransposeWeights, InterpMode,
    UpsamplerKind, UpsamplerSpec,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn sine(freq: f64, amp: f64, len: usize, rate: u32) -> AudioBuffer {
    let v = (0..len)
        .map(|n| amp * (2.0 * PI * freq * n as f64 / rate as f64).sin())
        .collect();
    AudioBuffer::new(v, rate).unwrap()
}

fn leaky(x: &AudioBuffer) -> AudioBuffer {
    let v = x.samples().iter().map(|&s| if s > 0.0 { s } else { 0.1 * s }).collect();
    AudioBuffer::new(v, x.sample_rate()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn adaa_equal_samples_reduce_to_snakebeta(x in -50.0..50.0f64, alpha in 0.1..10.0f64, beta in 0.1..10.0f64) {
        prop_assert!((adaa_snakebeta(x, x, alpha, beta) - snakebeta(x, alpha, beta)).abs() <= 1e-12 * (1.0 + x.abs()));
    }

    #[test]
    fn adaa_gradient_is_bounded(xt in -20.0..20.0f64, xp in -20.0..20.0f64, alpha in 0.1..10.0f64, beta in 0.1..10.0f64) {
        let (lo, hi) = ((beta - alpha) / (2.0 * beta), (beta + alpha) / (2.0 * beta));
        let (a, b) = adaa_snakebeta_grad(xt, xp, alpha, beta);
        for g in [a, b] {
            prop_assert!(g >= lo && g <= hi, "{g} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn adaa_output_is_bounded(xt in -20.0..20.0f64, xp in -20.0..20.0f64, alpha in 0.1..10.0f64, beta in 0.1..10.0f64) {
        let y = adaa_snakebeta(xt, xp, alpha, beta);
        prop_assert!(y.abs() <= xt.abs().max(xp.abs()) + 1.0 / beta + 1e-12);
    }

    #[test]
    fn fold_lands_in_baseband(f in 0.0..1.0e6f64) {
        let g = fold_frequency(f, 44_100.0);
        prop_assert!((0.0..=22_050.0).contains(&g));
        // Folding is periodic in the sample rate and symmetric about zero.
        prop_assert!((fold_frequency(f + 44_100.0, 44_100.0) - g).abs() < 1e-6);
    }

    #[test]
    fn image_and_harmonic_sets_are_disjoint(f0 in 50.0..5000.0f64, factor in 2usize..5, k_max in 1usize..40) {
        let tol = 2.0;
        let images = image_frequencies(f0, factor, 22_050, k_max, tol);
        for img in &images {
            prop_assert!(*img > 0.0 && *img <= factor as f64 * 11_025.0);
            for k in (1..=k_max).map(|k| k as f64 * f0).take_while(|&h| h < 11_025.0) {
                prop_assert!((img - k).abs() >= tol);
            }
        }
    }

    #[test]
    fn activation_bands_are_disjoint(f0 in 100.0..4000.0f64) {
        let hw = 1.0;
        let (h, a) = ahr_bands(f0, &AhrContext::activation(), 44_100, hw);
        for x in &a {
            prop_assert!(h.iter().all(|y| (x - y).abs() >= 2.0 * hw));
        }
    }

    #[test]
    fn stream_is_block_size_independent(split in 1usize..255, kind in 0usize..4) {
        let kind = [
            ActivationKind::AdaaSnakeBeta,
            ActivationKind::AdaaGeneric(BaseActivation::Elu { a: 1.0 }),
            ActivationKind::SnakeBeta,
            ActivationKind::LeakyRelu { slope: 0.1 },
        ][kind];
        let spec = ActivationSpec::new(kind, 1);
        let x: Vec<f64> = (0..256).map(|n| (n as f64 * 0.37).sin() * 1.3).collect();
        let whole = ActivationStream::new(&spec).process(&x);
        let mut s = ActivationStream::new(&spec);
        let mut parts = s.process(&x[..split]);
        parts.extend(s.process(&x[split..]));
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn config_round_trips(alpha in 0.01..10.0f64, beta in 0.01..10.0f64, c in 0usize..4, seed in any::<u64>(), factor in 2usize..9) {
        let mut a = ActivationSpec::new(ActivationKind::AdaaSnakeBeta, [1, 2, 4, 8][c]);
        a.alpha = alpha;
        a.beta = beta;
        let u = UpsamplerSpec { seed, noise_prior: seed % 2 == 0, ..UpsamplerSpec::new(UpsamplerKind::AntiAliasedResample, factor) };
        let configs = vec![NamedConfig::activation("a", a), NamedConfig::upsampler("u", u)];
        prop_assert_eq!(parse_configs(&serialize_configs(&configs)).unwrap(), configs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lowpass_designs_are_linear_phase(cutoff in 0.1..0.9f64, tw in 0.02..0.1f64, atten in 40.0..110.0f64) {
        prop_assume!(cutoff - tw / 2.0 > 0.0 && cutoff + tw / 2.0 < 1.0);
        let h = design_fir(&FilterDesignSpec::lowpass(cutoff, tw, atten)).unwrap();
        prop_assert!(h.is_symmetric(1e-12));
        prop_assert!((20.0 * h.dc_gain().log10()).abs() <= 0.1);
        // Stopband ripple from a direct DTFT past the transition band.
        let stop = cutoff + tw / 2.0;
        let worst = (0..400)
            .map(|i| stop + (1.0 - stop) * i as f64 / 399.0)
            .map(|w| {
                let (re, im) = h.taps().iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &t)| {
                    let ph = PI * w * n as f64;
                    (re + t * ph.cos(), im - t * ph.sin())
                });
                20.0 * (re * re + im * im).sqrt().log10()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(worst <= -(atten - 3.0), "stopband {worst} dB for {atten} dB design");
    }

    #[test]
    fn convolution_energy_is_bounded(seed in any::<u64>()) {
        let h = design_fir(&FilterDesignSpec::lowpass(0.4, 0.1, 60.0)).unwrap();
        let mut state = seed | 1;
        let x: Vec<f64> = (0..2048)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state as f64 / u64::MAX as f64) * 2.0 - 1.0
            })
            .collect();
        let x = AudioBuffer::new(x, 8000).unwrap();
        let y = convolve(&x, &h);
        let max_gain = frequency_response(&h, 2048)
            .unwrap()
            .iter()
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        let ex: f64 = x.samples().iter().map(|v| v * v).sum();
        let ey: f64 = y.samples().iter().map(|v| v * v).sum();
        prop_assert!(ey <= ex * max_gain * max_gain * 1.001);
    }

    #[test]
    fn upsamplers_scale_length_and_rate(len in 1usize..300, factor in 2usize..6, kind in 0usize..4) {
        let kind = UpsamplerKind::ALL[kind];
        let x = sine(100.0, 0.5, len, 8000);
        let y = upsample(&x, &x, &UpsamplerSpec::new(kind, factor)).unwrap();
        prop_assert_eq!(y.len(), factor * len);
        prop_assert_eq!(y.sample_rate(), factor as u32 * 8000);
    }

    #[test]
    fn transposed_conv_and_interpolation_are_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in any::<u64>(), factor in 2usize..5) {
        let x = sine(310.0, 1.0, 200, 8000);
        let z = sine(1170.0, 0.7, 200, 8000);
        let mix = AudioBuffer::new(
            x.samples().iter().zip(z.samples()).map(|(p, q)| a * p + b * q).collect(),
            8000,
        )
        .unwrap();
        let mut w = ConvTransposeWeights::from_seed(seed, 2 * factor);
        w.bias = 0.0;
        type Op<'a> = Box<dyn Fn(&AudioBuffer) -> AudioBuffer + 'a>;
        let ops: Vec<Op> = vec![
            Box::new(|s| conv_transpose_with(s, factor, &w).unwrap()),
            Box::new(|s| interp_upsample(s, InterpMode::Linear, factor).unwrap()),
            Box::new(|s| interp_upsample(s, InterpMode::Nearest, factor).unwrap()),
        ];
        for op in &ops {
            let (fx, fz, fm) = (op(&x), op(&z), op(&mix));
            for i in 0..fm.len() {
                let expect = a * fx.samples()[i] + b * fz.samples()[i];
                prop_assert!((fm.samples()[i] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn resampling_round_trip_keeps_band_limited_signals(f in 50.0..3200.0f64, factor in 2usize..5) {
        // Content below 0.4 of the base Nyquist sits well inside the passband.
        let x = sine(f, 0.8, 6000, 8000);
        let spec = FilterDesignSpec::resampling(factor);
        let y = downsample_filtered(&upsample_filtered(&x, factor, &spec).unwrap(), factor, &spec).unwrap();
        let edge = 600;
        let (mut sig, mut err) = (0.0, 0.0);
        for i in edge..x.len() - edge {
            sig += x.samples()[i].powi(2);
            err += (x.samples()[i] - y.samples()[i]).powi(2);
        }
        prop_assert!(10.0 * (sig / err).log10() >= 80.0);
    }

    #[test]
    fn zero_interlace_mirrors_spectrum(f in 200.0..3800.0f64) {
        let x = sine(f, 1.0, 8192, 8000);
        let y = zero_interlace(&x, 2).unwrap();
        let s = estimate_spectrum(&y).unwrap();
        let hw = s.band_half_width();
        let peak = |c: f64| crate::metrics::band_energy(&s, c, hw);
        let (a, b) = (peak(f), peak(8000.0 - f));
        prop_assert!((a / b - 1.0).abs() < 0.01, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ahr_ignores_output_gain(g in 0.001..1000.0f64, f in 200.0..2000.0f64) {
        let y = leaky(&sine(f, 0.9, 44_100, 44_100));
        let scaled = y.scaled(g);
        let (a, b) = (ahr(&y, f, &AhrContext::activation()).unwrap(), ahr(&scaled, f, &AhrContext::activation()).unwrap());
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn ahr_ignores_polarity_and_time_reversal(f in 200.0..2000.0f64) {
        // Symmetric trimming and a symmetric window leave |X| unchanged
        // under both maps. A delay, by contrast, is not an invariance: it
        // rotates the relative phase of neighbouring components and their
        // interference shifts band energies.
        let y = leaky(&sine(f, 0.9, 44_100, 44_100));
        let ctx = AhrContext::activation();
        let base = ahr(&y, f, &ctx).unwrap();
        let negated = y.scaled(-1.0);
        let mut v = y.samples().to_vec();
        v.reverse();
        let reversed = AudioBuffer::new(v, 44_100).unwrap();
        prop_assert_eq!(ahr(&negated, f, &ctx).unwrap(), base);
        let r = ahr(&reversed, f, &ctx).unwrap();
        prop_assert!((r - base).abs() < 1e-9, "{r} vs {base}");
    }

    #[test]
    fn added_noise_never_lowers_ahr(level_db in -100.0..-40.0f64, f in 200.0..2000.0f64) {
        let y = leaky(&sine(f, 0.9, 44_100, 44_100));
        let amp = 10f64.powf(level_db / 20.0);
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let noisy: Vec<f64> = y
            .samples()
            .iter()
            .map(|&s| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                s + amp * ((state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
            })
            .collect();
        let noisy = AudioBuffer::new(noisy, 44_100).unwrap();
        let ctx = AhrContext::activation();
        prop_assert!(ahr(&noisy, f, &ctx).unwrap() >= ahr(&y, f, &ctx).unwrap() - 0.01);
    }

    #[test]
    fn generation_is_deterministic_and_capped(k in 0usize..3, f0 in 261.0..3952.0f64) {
        let spec = TestSignalSpec::from_freq(Waveform::ALL[k], f0, 1.0, 44_100);
        let a = gen_bandlimited(&spec).unwrap();
        prop_assert_eq!(&a, &gen_bandlimited(&spec).unwrap());
        prop_assert!(a.peak() <= spec.amplitude + 1e-12);
    }
}

#[test]
fn resampled_sine_matches_analytic_resampling() {
    let x = sine(1000.0, 1.0, 22_050, 22_050);
    let y = upsample_filtered(&x, 2, &FilterDesignSpec::resampling(2)).unwrap();
    let r = sine(1000.0, 1.0, 44_100, 44_100);
    let range = 4000..40_000;
    let dot: f64 = range.clone().map(|i| y.samples()[i] * r.samples()[i]).sum();
    let ny: f64 = range.clone().map(|i| y.samples()[i].powi(2)).sum();
    let nr: f64 = range.map(|i| r.samples()[i].powi(2)).sum();
    assert!(dot / (ny * nr).sqrt() >= 0.9999);
}

#[test]
fn linear_response_has_nulls_at_multiples_of_two_pi_over_n() {
    for n in [2usize, 4] {
        let h = crate::filters::interp_kernel(crate::filters::InterpKind::Linear, n).unwrap();
        let resp = frequency_response(&h, 4097).unwrap();
        for m in 1..=n / 2 {
            let target = 2.0 * m as f64 / n as f64;
            let (_, c) = resp
                .iter()
                .min_by(|a, b| (a.0 - target).abs().total_cmp(&(b.0 - target).abs()))
                .unwrap();
            assert!(c.norm() < 1e-9, "N={n} null at {target}: {}", c.norm());
        }
        let mags: Vec<f64> = resp
            .iter()
            .take_while(|(w, _)| *w <= 2.0 / n as f64)
            .map(|(_, c)| c.norm())
            .collect();
        assert!(mags.windows(2).all(|p| p[1] <= p[0] + 1e-12));
    }
}
