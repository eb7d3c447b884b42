//! Worked examples for each module, checked against independent oracles.

use std::f64::consts::PI;

use crate::activations::{apply_activation, ActivationKind, ActivationSpec, BaseActivation};
use crate::bench;
use crate::filters::{
    convolve, design_fir, downsample_filtered, frequency_response, upsample_filtered, FilterDesignSpec, FirKernel,
};
use crate::metrics::{
    ahr, band_energy, estimate_spectrum, spectrogram, spectrogram_export, stft_frame_count, AhrContext,
};
use crate::signal::{
    build_benchmark, gen_bandlimited, gen_sweep, sweep_frequency_at, harmonic_cap, AudioBuffer, TestSignalSpec, Waveform, BENCH_PEAK,
};
use crate::upsamplers::{
    aa_resample_upsample, interp_upsample, probe_layer, InterpMode, UpsamplerKind, UpsamplerSpec,
};

fn sine(freq: f64, amp: f64, len: usize, rate: u32) -> AudioBuffer {
    let v = (0..len)
        .map(|n| amp * (2.0 * PI * freq * n as f64 / rate as f64).sin())
        .collect();
    AudioBuffer::new(v, rate).unwrap()
}

/// Single-bin DFT magnitude at `freq` over an integer number of periods.
fn goertzel_amp(x: &[f64], freq: f64, rate: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq * n as f64 / rate;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / x.len() as f64
}

fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

#[test]
fn benchmark_layout() {
    let bench = build_benchmark().unwrap();
    assert_eq!(bench.len(), 144);
    assert!(bench.iter().all(|s| s.buffer.len() == 220_500));
    assert!(bench.iter().all(|s| s.buffer.peak() <= BENCH_PEAK + 1e-12));
    assert!(bench.iter().all(|s| s.buffer.peak() <= 0.8913));
    assert!(bench
        .windows(2)
        .all(|w| (w[0].spec.waveform, w[0].spec.f0_hz) < (w[1].spec.waveform, w[1].spec.f0_hz)));
}

#[test]
fn sawtooth_partials_follow_fourier_law() {
    // 200 Hz at 44.1 kHz: one second holds exactly 200 periods.
    let spec = TestSignalSpec::from_freq(Waveform::Sawtooth, 200.0, 1.0, 44_100);
    let x = gen_bandlimited(&spec).unwrap();
    let cap = harmonic_cap(44_100, x.len());
    let scale = goertzel_amp(x.samples(), 200.0, 44_100.0) / (2.0 / PI);
    let mut k = 1;
    while k as f64 * 200.0 < cap {
        let expect = 2.0 / PI / k as f64;
        let got = goertzel_amp(x.samples(), k as f64 * 200.0, 44_100.0) / scale;
        assert!((got / expect - 1.0).abs() < 0.005, "k={k}: {got} vs {expect}");
        k += 1;
    }
    let a1 = goertzel_amp(x.samples(), 200.0, 44_100.0);
    let a2 = goertzel_amp(x.samples(), 400.0, 44_100.0);
    assert!((a2 / a1 - 0.5).abs() < 1e-9);
}

#[test]
fn triangle_has_no_even_harmonics_and_nothing_above_cap() {
    for w in Waveform::ALL {
        let spec = TestSignalSpec::from_midi(w, 60, 5.0, 44_100);
        let x = gen_bandlimited(&spec).unwrap();
        let s = estimate_spectrum(&x).unwrap();
        let cap = harmonic_cap(44_100, x.len());
        let above: f64 = s
            .bin_freqs()
            .zip(&s.powers)
            .filter(|(f, _)| *f > cap + s.band_half_width())
            .map(|(_, p)| p)
            .sum();
        assert!(db(above / s.total_power()) < -100.0, "{w}");
        if w == Waveform::Triangle {
            let hw = s.band_half_width();
            let fund = band_energy(&s, spec.f0_hz, hw);
            for k in [2.0, 4.0, 6.0, 8.0] {
                assert!(db(band_energy(&s, k * spec.f0_hz, hw) / fund) < -100.0);
            }
        }
    }
}

#[test]
fn sweep_ridge_rises_monotonically() {
    let x = gen_sweep(20.0, 20_000.0, 4.0, 44_100).unwrap();
    let sg = spectrogram(&x, 1024, 256).unwrap();
    let mut last = 0usize;
    // Skip frames whose ridge sits within a few bins of DC, where the
    // negative-frequency image competes for the peak.
    let centre = |f: usize| (f * 256 + 512) as f64 / 44_100.0;
    for f in sg
        .interior_frames()
        .filter(|&f| sweep_frequency_at(20.0, 20_000.0, 4.0, centre(f)) > 10.0 * sg.bin_hz())
    {
        let peak = (0..sg.n_bins)
            .max_by(|&a, &b| sg.power_at(f, a).total_cmp(&sg.power_at(f, b)))
            .unwrap();
        assert!(peak >= last, "frame {f}: bin {peak} < {last}");
        last = peak;
    }
    assert!(last as f64 * sg.bin_hz() > 15_000.0);
}

#[test]
fn filter_design_examples() {
    let h = design_fir(&FilterDesignSpec::lowpass(0.5, 0.05, 80.0)).unwrap();
    let at = |h: &FirKernel, w: f64| {
        let (re, im) = h.taps().iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &t)| {
            (re + t * (PI * w * n as f64).cos(), im - t * (PI * w * n as f64).sin())
        });
        20.0 * (re * re + im * im).sqrt().log10()
    };
    assert!(at(&h, 0.575) <= -77.0);
    let hp = design_fir(&FilterDesignSpec::highpass(0.5, 0.05, 80.0)).unwrap();
    assert!(at(&hp, 0.0) <= -77.0);
    assert!(design_fir(&FilterDesignSpec::lowpass(0.5, 0.0, 80.0)).is_err());

    // The resampling filter keeps its stopband past the transition band.
    let d = bench::response_kernel(bench::ResponseKind::Designed, 2).unwrap();
    let spec = FilterDesignSpec::resampling(2);
    let edge = spec.cutoff + spec.transition_width / 2.0;
    let worst = frequency_response(&d, 8192)
        .unwrap()
        .into_iter()
        .filter(|(w, _)| *w >= edge)
        .map(|(_, c)| 20.0 * c.norm().log10())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= -97.0, "{worst}");
}

#[test]
fn white_noise_spectrum_is_shaped_by_filter() {
    // Averaged periodograms of input and output; their ratio follows |H|².
    let h = design_fir(&FilterDesignSpec::lowpass(0.5, 0.1, 60.0)).unwrap();
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let v: Vec<f64> = (0..1 << 16)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let x = AudioBuffer::new(v, 48_000).unwrap();
    let y = convolve(&x, &h);
    let seg = 1024;
    let welch = |s: &[f64], bin: usize| {
        s.chunks_exact(seg)
            .map(|c| {
                let (re, im) = c.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &v)| {
                    let ph = 2.0 * PI * (bin * n) as f64 / seg as f64;
                    (re + v * ph.cos(), im - v * ph.sin())
                });
                re * re + im * im
            })
            .sum::<f64>()
    };
    for bin in [32usize, 96, 160, 224] {
        let w = 2.0 * bin as f64 / seg as f64;
        let expect = frequency_response(&h, seg / 2 + 1).unwrap()[bin].1.norm_sqr();
        let got = welch(y.samples(), bin) / welch(x.samples(), bin);
        assert!((got / expect - 1.0).abs() < 0.05, "ω={w}: {got} vs {expect}");
    }
}

#[test]
fn resampling_examples() {
    let ones = AudioBuffer::new(vec![1.0; 4000], 22_050).unwrap();
    let spec = FilterDesignSpec::resampling(2);
    let up = upsample_filtered(&ones, 2, &spec).unwrap();
    let tail = up.len() / 4;
    assert!(up.samples()[tail..up.len() - tail].iter().all(|v| (v - 1.0).abs() <= 0.01));
    let down = downsample_filtered(&ones, 2, &spec).unwrap();
    let tail = down.len() / 4;
    assert!(down.samples()[tail..down.len() - tail].iter().all(|v| (v - 1.0).abs() <= 0.01));

    let x = sine(1000.0, 1.0, 5 * 22_050, 22_050);
    let y = upsample_filtered(&x, 2, &spec).unwrap();
    assert_eq!(y.sample_rate(), 44_100);
    let s = estimate_spectrum(&y).unwrap();
    let hw = s.band_half_width();
    let ratio = band_energy(&s, 21_050.0, hw) / band_energy(&s, 1000.0, hw);
    assert!(db(ratio) <= -77.0, "{}", db(ratio));
}

#[test]
fn interpolation_leaves_images_that_resampling_removes() {
    let x = sine(1000.0, 1.0, 5 * 22_050, 22_050);
    let image_db = |y: &AudioBuffer| {
        let s = estimate_spectrum(y).unwrap();
        let hw = s.band_half_width();
        db(band_energy(&s, 21_050.0, hw) / band_energy(&s, 1000.0, hw))
    };
    let linear = interp_upsample(&x, InterpMode::Linear, 2).unwrap();
    // Closed form: the linear kernel's gain at the image relative to 1 kHz.
    let fejer = |w: f64| (1.0 / 2.0) * ((w).sin() / (w / 2.0).sin()).powi(2);
    let w_img = 2.0 * PI * 21_050.0 / 44_100.0;
    let w_sig = 2.0 * PI * 1000.0 / 44_100.0;
    let predicted = 20.0 * (fejer(w_img) / fejer(w_sig)).log10();
    let measured = image_db(&linear);
    assert!((measured - predicted).abs() < 0.5, "{measured} vs {predicted}");
    assert!(measured > -77.0);

    let spec = UpsamplerSpec::new(UpsamplerKind::AntiAliasedResample, 2);
    let aa = aa_resample_upsample(&x, &x, &spec).unwrap();
    assert!(image_db(&aa) <= -77.0);
}

#[test]
fn resampling_layer_examples() {
    let spec = UpsamplerSpec::new(UpsamplerKind::AntiAliasedResample, 2);
    let c = AudioBuffer::new(vec![0.7; 4000], 22_050).unwrap();
    let y = aa_resample_upsample(&c, &c, &spec).unwrap();
    let tail = y.len() / 4;
    assert!(y.samples()[tail..y.len() - tail].iter().all(|v| (v - 0.7).abs() <= 0.01));

    // Prior on, silent main input: energy lands in the upper band only.
    let prior_spec = UpsamplerSpec {
        noise_prior: true,
        seed: 3,
        ..spec
    };
    let silence = AudioBuffer::silence(5 * 22_050, 22_050).unwrap();
    let src = gen_bandlimited(&TestSignalSpec::from_midi(Waveform::Sawtooth, 60, 5.0, 22_050)).unwrap();
    let y = aa_resample_upsample(&silence, &src, &prior_spec).unwrap();
    let s = estimate_spectrum(&y).unwrap();
    let low: f64 = s
        .bin_freqs()
        .zip(&s.powers)
        .filter(|(f, _)| *f < 11_025.0 * 0.95)
        .map(|(_, p)| p)
        .sum();
    assert!(s.total_power() > 0.0);
    assert!(db(low / s.total_power()) < -60.0, "{}", db(low / s.total_power()));
}

#[test]
fn tonal_probe_examples() {
    let aa = probe_layer(&UpsamplerSpec::new(UpsamplerKind::AntiAliasedResample, 2), 0.5, 22_050).unwrap();
    assert!(aa.stride_line_db <= -80.0);
    let ct = probe_layer(
        &UpsamplerSpec {
            seed: 1,
            ..UpsamplerSpec::new(UpsamplerKind::ConvTranspose, 2)
        },
        0.5,
        22_050,
    )
    .unwrap();
    assert!(ct.stride_line_db >= -20.0, "{}", ct.stride_line_db);
    let zero = probe_layer(&UpsamplerSpec::new(UpsamplerKind::LinearInterp, 2), 0.0, 22_050).unwrap();
    assert_eq!(zero.stride_line_db, -120.0);
}

#[test]
fn activation_examples() {
    let x = sine(441.0, 0.8, 44_100, 44_100);
    for c in [1, 2, 4] {
        let spec = ActivationSpec::new(ActivationKind::LeakyRelu { slope: 1.0 }, c);
        let y = apply_activation(&x, &spec).unwrap();
        let edge = 2000;
        let (mut sig, mut err) = (0.0, 0.0);
        for i in edge..x.len() - edge {
            sig += x.samples()[i].powi(2);
            err += (x.samples()[i] - y.samples()[i]).powi(2);
        }
        assert!(db(sig / err) >= 80.0, "c={c}");
    }

    // ReLU through generic ADAA: mean of the output is A/π.
    let amp = 0.8;
    let x = sine(100.0, amp, 44_100, 44_100);
    let relu = ActivationSpec::new(ActivationKind::AdaaGeneric(BaseActivation::LeakyRelu { slope: 0.0 }), 1);
    let y = apply_activation(&x, &relu).unwrap();
    let mean = y.samples().iter().sum::<f64>() / y.len() as f64;
    assert!((mean - amp / PI).abs() < 1e-3 * amp, "{mean}");
}

#[test]
fn oversampling_reduces_snakebeta_aliasing_on_benchmark_sines() {
    for note in [60, 84, 107] {
        let spec = TestSignalSpec::from_midi(Waveform::Sine, note, 5.0, 44_100);
        let x = gen_bandlimited(&spec).unwrap();
        let a = |c| {
            let y = apply_activation(&x, &ActivationSpec::new(ActivationKind::SnakeBeta, c)).unwrap();
            ahr(&y, spec.f0_hz, &AhrContext::activation()).unwrap()
        };
        assert!(a(2) <= a(1), "note {note}");
    }
}

#[test]
fn spectrogram_examples() {
    assert_eq!(stft_frame_count(176_400, 1024, 256), (176_400 - 1024usize).div_ceil(256) + 1);
    let x = gen_sweep(20.0, 20_000.0, 4.0, 44_100).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sg = spectrogram_export(&x, 1024, 256, dir.path().join("sweep")).unwrap();
    assert_eq!((sg.n_bins, sg.n_frames), (513, stft_frame_count(176_400, 1024, 256)));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 514);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), sg.n_frames + 1);

    let quiet = spectrogram_export(&AudioBuffer::silence(8192, 44_100).unwrap(), 1024, 256, dir.path().join("q")).unwrap();
    let pgm = std::fs::read(dir.path().join("q.pgm")).unwrap();
    let header = format!("P5\n{} {}\n255\n", quiet.n_frames, quiet.n_bins);
    assert!(pgm.starts_with(header.as_bytes()));
    assert!(pgm[header.len()..].iter().all(|&p| p == 0));
}

#[test]
fn sweep_panels() {
    let panels = bench::run_sweep(&bench::default_sweep_panels(), None).unwrap();
    let get = |n: &str| panels.iter().find(|p| p.name == n).unwrap().off_ridge;
    // A linear system adds nothing off the ridge.
    assert!(get("no_activation").peak_db <= -100.0);
    // At equal oversampling the ADAA form aliases less.
    for (adaa, plain) in [("adaa_snakebeta_o1", "snakebeta_o1"), ("adaa_snakebeta_o2", "snakebeta_o2")] {
        assert!(get(adaa).energy_db < get(plain).energy_db);
        assert!(get(adaa).peak_db < get(plain).peak_db);
    }
}
