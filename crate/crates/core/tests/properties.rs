//! Invariants checked over random inputs.

use kkdre::channel::{apply_cd, measure_cspr, photodiode, FiberSpec, PdSpec};
use kkdre::dre::{
    design_shaping_filter, dre_quantize, filtered_error_energy, quantize_uniform, DreConfig, QuantizerSpec,
};
use kkdre::metrics::{ber, gmi_ngmi};
use kkdre::signal::{filter_frequency, hilbert};
use kkdre::txdsp::{add_cw_tone, generate_bits, map_qam, normalize_rails, ConstellationMap, ToneSpec};
use kkdre::Waveform;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FS: f64 = 100e9;

fn cgauss(n: usize, var: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, (var / 2.0).sqrt()).unwrap();
    (0..n)
        .map(|_| Complex64::new(d.sample(&mut rng), d.sample(&mut rng)))
        .collect()
}

fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dre_dominates_rounding(
        x in prop::collection::vec(-1.3f64..1.3, 1..64),
        bits in 1u32..=8,
        edge in 2e9f64..45e9,
        taps in prop::sample::select(vec![1usize, 3, 5, 7, 9]),
        n_soft in 1usize..=4,
        beam in 1usize..=12,
    ) {
        let q = QuantizerSpec::new(bits).unwrap();
        let h = design_shaping_filter(edge, FS, taps).unwrap();
        let cfg = DreConfig { n_soft: n_soft.min(q.n_levels()), beam_width: beam };
        let y = dre_quantize(&x, &q, &h, &cfg).unwrap();
        let plain = quantize_uniform(&x, &q);
        prop_assert!(filtered_error_energy(&x, &y, &h.taps) <= filtered_error_energy(&x, &plain, &h.taps));
        let lv = q.levels();
        prop_assert!(y.iter().all(|v| lv.contains(v)));
        prop_assert_eq!(y.len(), x.len());
    }

    #[test]
    fn wider_beam_never_costs_more(
        x in prop::collection::vec(-1.0f64..1.0, 1..48),
        bits in 2u32..=5,
        k in 1usize..=8,
    ) {
        let q = QuantizerSpec::new(bits).unwrap();
        let h = design_shaping_filter(15.9e9, FS, 5).unwrap();
        let cost = |w| {
            let y = dre_quantize(&x, &q, &h, &DreConfig { n_soft: 3, beam_width: w }).unwrap();
            filtered_error_energy(&x, &y, &h.taps)
        };
        prop_assert!(cost(2 * k) <= cost(k));
    }

    #[test]
    fn hilbert_and_filtering_are_linear(
        seed in any::<u64>(),
        n in 16usize..600,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let v = cgauss(n, 1.0, seed);
        let x: Vec<f64> = v.iter().map(|c| c.re).collect();
        let y: Vec<f64> = v.iter().map(|c| c.im).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (hx, hy, hm) = (hilbert(&x).unwrap(), hilbert(&y).unwrap(), hilbert(&mix).unwrap());
        let scale = hm.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            prop_assert!((a * hx[i] + b * hy[i] - hm[i]).abs() <= 1e-12 * scale.max(1.0) * 10.0);
        }

        let wx = Waveform::new(v.clone(), FS).unwrap();
        let wy = Waveform::new(v.iter().map(|c| c * Complex64::new(0.3, 0.9)).collect(), FS).unwrap();
        let wm = Waveform::new(
            wx.samples().iter().zip(wy.samples()).map(|(p, q)| a * p + b * q).collect(),
            FS,
        )
        .unwrap();
        let h = |f: f64| Complex64::from_polar(1.0 / (1.0 + (f / 20e9).powi(4)), f / 5e10);
        let (fx, fy, fm) = (
            filter_frequency(&wx, h).unwrap(),
            filter_frequency(&wy, h).unwrap(),
            filter_frequency(&wm, h).unwrap(),
        );
        let scale = max_norm(fm.samples()).max(1.0);
        for i in 0..n {
            let d = a * fx.samples()[i] + b * fy.samples()[i] - fm.samples()[i];
            prop_assert!(d.norm() <= 1e-11 * scale);
        }
    }

    #[test]
    fn dispersion_preserves_energy(
        seed in any::<u64>(),
        n in 8usize..4000,
        km in 0.0f64..200.0,
        d in -30.0f64..30.0,
    ) {
        let w = Waveform::new(cgauss(n, 1.0, seed), FS).unwrap();
        let fiber = FiberSpec { length_km: km, dispersion_ps_nm_km: d, ..FiberSpec::default() };
        let out = apply_cd(&w, &fiber).unwrap();
        prop_assert!((out.power() - w.power()).abs() <= 1e-9 * w.power());
    }

    #[test]
    fn photocurrent_is_phase_blind(seed in any::<u64>(), n in 8usize..2000, theta in -7.0f64..7.0, quarter in 0u32..4) {
        let w = Waveform::new(cgauss(n, 1.0, seed), FS).unwrap();
        let dc = PdSpec { ac_coupled: false, ..PdSpec::default() };
        let i0 = photodiode(&w, &dc).unwrap().current;
        prop_assert!(i0.samples().iter().all(|&v| v >= 0.0));

        // quarter turns only swap and negate rails: bit-identical current
        let j = Complex64::new(0.0, 1.0).powu(quarter);
        let turned = w.with_samples(w.samples().iter().map(|x| x * j).collect());
        let i1 = photodiode(&turned, &dc).unwrap().current;
        prop_assert_eq!(i0.samples(), i1.samples());

        let rot = Complex64::from_polar(1.0, theta);
        let turned = w.with_samples(w.samples().iter().map(|x| x * rot).collect());
        let i2 = photodiode(&turned, &dc).unwrap().current;
        for (a, b) in i0.samples().iter().zip(i2.samples()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>(), n in 1usize..500, gain in 1e-3f64..1e3, quarter in 0u32..4) {
        let w = Waveform::new(cgauss(n, gain, seed), FS).unwrap();
        let (once, s1) = normalize_rails(&w).unwrap();
        let (twice, s2) = normalize_rails(&once).unwrap();
        prop_assert_eq!(s2, 1.0);
        prop_assert_eq!(once.samples(), twice.samples());
        let peak = once.samples().iter().fold(0.0f64, |m, x| m.max(x.re.abs()).max(x.im.abs()));
        prop_assert!((peak - 1.0).abs() < 1e-12);
        let j = Complex64::new(0.0, 1.0).powu(quarter);
        let turned = w.with_samples(w.samples().iter().map(|x| x * j).collect());
        prop_assert_eq!(normalize_rails(&turned).unwrap().1, s1);
    }

    #[test]
    fn gmi_stays_in_bounds(seed in any::<u64>(), m in prop::sample::select(vec![2usize, 4, 6]), snr_db in -10.0f64..40.0) {
        let map = ConstellationMap::qam(m).unwrap();
        let n = 2000;
        let bits = generate_bits(seed, m * n);
        let s = map_qam(&bits, &map).unwrap();
        let noise = cgauss(n, 10f64.powf(-snr_db / 10.0), seed ^ 0x5555);
        let y: Vec<Complex64> = s.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let (gmi, ngmi) = gmi_ngmi(&y, &bits, &map).unwrap();
        prop_assert!(gmi <= m as f64 && gmi >= -0.01 * m as f64);
        prop_assert!((-0.01..=1.0).contains(&ngmi));
        let b = ber(&y, &bits, &map).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tone_round_trip(seed in any::<u64>(), cspr in 0.0f64..20.0, bin in 1400usize..2000) {
        let n = 8192;
        // band-limited signal below 10 GHz, tone above it on the frame grid
        let w = Waveform::new(cgauss(n, 1.0, seed), FS).unwrap();
        let w = filter_frequency(&w, |f| Complex64::new(if f.abs() < 10e9 { 1.0 } else { 0.0 }, 0.0)).unwrap();
        let offset = FS * bin as f64 / n as f64;
        let t = add_cw_tone(&w, &ToneSpec { offset_hz: offset, cspr_db: cspr }, 10e9).unwrap();
        let got = measure_cspr(&t, offset).unwrap();
        prop_assert!((got - cspr).abs() < 0.05, "{} vs {}", got, cspr);
    }

    #[test]
    fn gray_bit_errors_track_symbol_errors(seed in any::<u64>()) {
        let map = ConstellationMap::qam(6).unwrap();
        let n = 40_000;
        let bits = generate_bits(seed, 6 * n);
        let s = map_qam(&bits, &map).unwrap();
        // 22 dB: almost every symbol error lands on a nearest neighbour
        let noise = cgauss(n, 10f64.powf(-2.2), seed.wrapping_add(1));
        let y: Vec<Complex64> = s.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let p = map.points();
        let dmin = p
            .iter()
            .enumerate()
            .flat_map(|(i, a)| p[..i].iter().map(move |b| (a - b).norm()))
            .fold(f64::INFINITY, f64::min);
        let mut symbol_errors = 0usize;
        for (k, r) in y.iter().enumerate() {
            let sent = map.label_of(&bits[6 * k..6 * k + 6]);
            let got = map.nearest(*r);
            if got != sent {
                symbol_errors += 1;
                if (p[got] - p[sent]).norm() < dmin * 1.001 {
                    prop_assert_eq!((got ^ sent).count_ones(), 1);
                }
            }
        }
        let bit_errors = (ber(&y, &bits, &map).unwrap() * (6 * n) as f64).round() as usize;
        // diagonal errors flip two bits; they are rare at this SNR
        prop_assert!(bit_errors as f64 <= 1.05 * symbol_errors as f64, "{} bits vs {} symbols", bit_errors, symbol_errors);
    }
}
