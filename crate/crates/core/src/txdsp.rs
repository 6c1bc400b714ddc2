//! Transmit-side DSP: bits, Gray-mapped square QAM, RRC pulse shaping, the
//! digitally added carrier tone and full-scale conditioning for the DAC.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{self, RrcSpec, Waveform};

/// Bits are stored one per byte, each 0 or 1.
pub type Bit = u8;

/// Square QAM constellation with a fixed Gray labeling.
///
/// Label bits are read most significant first. For an `m`-bit label the
/// first bit picks the sign of I (0 = positive), the second the sign of Q,
/// and the remaining bits alternate I, Q, I, Q ... and encode the magnitude
/// `1, 3, 5, ...` with a binary-reflected Gray code. The magnitude code is
/// shared by both signs, so the labeling mirrors across each axis
/// (quadrant-recursive) and horizontally or vertically adjacent points
/// always differ in exactly one bit.
///
/// | label bits (64-QAM) | meaning                         |
/// |---------------------|---------------------------------|
/// | b0                  | I sign                          |
/// | b1                  | Q sign                          |
/// | b2 b4               | I magnitude: 00→1 01→3 11→5 10→7 |
/// | b3 b5               | Q magnitude: same code          |
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationMap {
    order_m: usize,
    points: Vec<Complex64>,
}

impl ConstellationMap {
    /// Gray-labeled square QAM with `order_m` bits per symbol (2, 4 or 6),
    /// scaled to unit mean energy.
    pub fn qam(order_m: usize) -> Result<Self> {
        if !matches!(order_m, 2 | 4 | 6) {
            return Err(Error::InvalidParameter(format!(
                "QAM order must be 2, 4 or 6 bits per symbol, got {order_m}"
            )));
        }
        let per_axis = order_m / 2;
        let m_axis = 1usize << per_axis;
        // mean energy of the ±1, ±3, ... grid: 2 (M - 1) / 3 with M = m_axis²
        let norm = (2.0 * ((m_axis * m_axis) as f64 - 1.0) / 3.0).sqrt().recip();
        let points = (0..1usize << order_m)
            .map(|label| {
                let bit = |i: usize| (label >> (order_m - 1 - i)) & 1;
                let (mut i_mag, mut q_mag) = (0usize, 0usize);
                for j in 1..per_axis {
                    i_mag = (i_mag << 1) | bit(2 * j);
                    q_mag = (q_mag << 1) | bit(2 * j + 1);
                }
                let level = |gray: usize, sign: usize| {
                    let mag = (2 * gray_decode(gray) + 1) as f64;
                    if sign == 0 {
                        mag
                    } else {
                        -mag
                    }
                };
                Complex64::new(level(i_mag, bit(0)), level(q_mag, bit(1))) * norm
            })
            .collect();
        Ok(ConstellationMap { order_m, points })
    }

    pub fn order_m(&self) -> usize {
        self.order_m
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Bit `i` (0 = most significant) of `label`.
    pub fn label_bit(&self, label: usize, i: usize) -> Bit {
        ((label >> (self.order_m - 1 - i)) & 1) as Bit
    }

    /// Label of the point closest to `y`.
    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Label formed by `order_m` consecutive bits.
    pub fn label_of(&self, bits: &[Bit]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Deterministic pseudo-random bits from `seed`.
pub fn generate_bits(seed: u64, n_bits: usize) -> Vec<Bit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_bits);
    while out.len() < n_bits {
        let word: u64 = rng.random();
        let take = (n_bits - out.len()).min(64);
        out.extend((0..take).map(|i| ((word >> i) & 1) as Bit));
    }
    out
}

/// Maps consecutive `order_m`-bit groups to constellation points.
pub fn map_qam(bits: &[Bit], map: &ConstellationMap) -> Result<Vec<Complex64>> {
    let m = map.order_m();
    if !bits.len().is_multiple_of(m) {
        return Err(Error::LengthNotDivisible {
            len: bits.len(),
            order: m,
        });
    }
    Ok(bits
        .chunks_exact(m)
        .map(|c| map.points()[map.label_of(c)])
        .collect())
}

/// RRC pulse shaping of a periodic symbol frame.
///
/// The frame is upsampled to `baud * sps` and filtered with the exact RRC
/// amplitude response in the frequency domain, so the output is one period
/// of the infinitely repeated shaped sequence. The filter gain is `sps`,
/// which gives unit mean power for unit-energy symbols, and the cascade with
/// [`crate::kkrx::matched_filter_downsample`] returns the symbols with unit
/// gain at the symbol instants.
pub fn pulse_shape(symbols: &[Complex64], rrc: &RrcSpec, baud_hz: f64) -> Result<Waveform> {
    rrc.validate()?;
    if symbols.is_empty() {
        return Err(Error::EmptySymbols);
    }
    if !(baud_hz > 0.0) {
        return Err(Error::NonPositiveRate(baud_hz));
    }
    let sps = rrc.samples_per_symbol;
    let n_sym = symbols.len();
    let n = n_sym * sps;
    let fs = baud_hz * sps as f64;

    let mut sym_spec = symbols.to_vec();
    signal::fft_in_place(&mut sym_spec);
    let gain = sps as f64;
    let mut spec: Vec<Complex64> = (0..n)
        .map(|k| {
            let f = signal::bin_freq(k, n, fs);
            sym_spec[k % n_sym] * (gain * signal::rrc_amplitude(f, baud_hz, rrc.rolloff_beta))
        })
        .collect();
    signal::ifft_in_place(&mut spec);
    Waveform::new(spec, fs)
}

/// The digitally added carrier.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ToneSpec {
    pub offset_hz: f64,
    pub cspr_db: f64,
}

impl Default for ToneSpec {
    fn default() -> Self {
        ToneSpec {
            offset_hz: 13.9e9,
            cspr_db: 8.7,
        }
    }
}

impl ToneSpec {
    /// Checks that the tone sits outside the signal band of half-width
    /// `signal_half_band_hz` and below the Nyquist frequency.
    pub fn validate(&self, signal_half_band_hz: f64, sample_rate_hz: f64) -> Result<()> {
        let nyquist = sample_rate_hz / 2.0;
        if self.offset_hz.abs() >= nyquist {
            return Err(Error::ToneAboveNyquist {
                offset_hz: self.offset_hz,
                nyquist_hz: nyquist,
            });
        }
        if self.offset_hz <= signal_half_band_hz {
            return Err(Error::ToneInsideSignalBand {
                offset_hz: self.offset_hz,
                half_band_hz: signal_half_band_hz,
            });
        }
        Ok(())
    }

    /// Carrier-to-signal power ratio as a linear factor.
    pub fn cspr_linear(&self) -> f64 {
        10f64.powf(self.cspr_db / 10.0)
    }
}

/// Adds `A exp(j2π f t)` with `A² = power(w) · CSPR`.
///
/// `signal_half_band_hz` is the one-sided occupied bandwidth of `w`, used to
/// reject tones that would land inside the signal.
pub fn add_cw_tone(w: &Waveform, tone: &ToneSpec, signal_half_band_hz: f64) -> Result<Waveform> {
    w.non_empty()?;
    tone.validate(signal_half_band_hz, w.sample_rate_hz())?;
    let amp = (w.power() * tone.cspr_linear()).sqrt();
    let step = 2.0 * std::f64::consts::PI * tone.offset_hz / w.sample_rate_hz();
    Ok(w.with_samples(
        w.samples()
            .iter()
            .enumerate()
            .map(|(n, &x)| x + Complex64::from_polar(amp, step * n as f64))
            .collect(),
    ))
}

/// Scales both rails by one factor so that `max(|Re|, |Im|) = 1`.
/// Returns the scaled waveform and the factor applied.
pub fn normalize_rails(w: &Waveform) -> Result<(Waveform, f64)> {
    w.non_empty()?;
    let peak = w
        .samples()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.re.abs()).max(x.im.abs()));
    if peak == 0.0 {
        return Err(Error::AllZeroWaveform);
    }
    if peak == 1.0 {
        return Ok((w.clone(), 1.0));
    }
    // divide rather than multiply by 1/peak so the peak rail lands on 1.0
    let samples = w.samples().iter().map(|x| x / peak).collect();
    Ok((w.with_samples(samples), 1.0 / peak))
}

/// Full transmit frame up to the DAC input.
#[derive(Debug, Clone)]
pub struct TxFrame {
    pub bits: Vec<Bit>,
    pub symbols: Vec<Complex64>,
    /// Signal plus tone, peak-normalized.
    pub waveform: Waveform,
    pub scale_applied: f64,
    /// Tone frequency actually used (snapped to the frame grid).
    pub tone_offset_hz: f64,
}

/// Parameters for [`build_frame`].
#[derive(Debug, Clone)]
pub struct FrameSpec {
    pub order_m: usize,
    pub n_symbols: usize,
    pub baud_hz: f64,
    pub rrc: RrcSpec,
    pub tone: ToneSpec,
    pub seed: u64,
}

/// Bits → QAM → RRC → tone → rail normalization.
///
/// The tone offset is moved to the nearest frequency with an integer number
/// of cycles per frame so the frame stays periodic.
pub fn build_frame(spec: &FrameSpec) -> Result<TxFrame> {
    let map = ConstellationMap::qam(spec.order_m)?;
    let bits = generate_bits(spec.seed, spec.order_m * spec.n_symbols);
    let symbols = map_qam(&bits, &map)?;
    let shaped = pulse_shape(&symbols, &spec.rrc, spec.baud_hz)?;
    let offset = signal::snap_to_frame_grid(spec.tone.offset_hz, shaped.len(), shaped.sample_rate_hz());
    let tone = ToneSpec {
        offset_hz: offset,
        cspr_db: spec.tone.cspr_db,
    };
    let half_band = spec.rrc.occupied_bandwidth_hz(spec.baud_hz) / 2.0;
    let with_tone = add_cw_tone(&shaped, &tone, half_band)?;
    let (waveform, scale_applied) = normalize_rails(&with_tone)?;
    Ok(TxFrame {
        bits,
        symbols,
        waveform,
        scale_applied,
        tone_offset_hz: offset,
    })
}
