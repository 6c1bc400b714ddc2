//! Signal quality: SNR/EVM, hard-decision BER, and bitwise GMI.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::txdsp::{Bit, ConstellationMap};

/// NGMI above which the FEC is assumed to decode error-free.
pub const FEC_NGMI_THRESHOLD: f64 = 0.92;

/// Reported SNR when the fitted error is exactly zero.
pub const SNR_SENTINEL_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub snr_db: f64,
    pub evm_pct: f64,
    pub ber: f64,
    pub gmi_bits: f64,
    pub ngmi: f64,
    pub n_symbols: usize,
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::EmptySymbols);
    }
    Ok(())
}

/// SNR and EVM after removing the least-squares complex gain `c` of the
/// model `eq ≈ c·ref`; the error is `eq/c - ref`.
pub fn snr_evm(eq_syms: &[Complex64], ref_syms: &[Complex64]) -> Result<(f64, f64)> {
    check_len(eq_syms.len(), ref_syms.len())?;
    let cross: Complex64 = eq_syms.iter().zip(ref_syms).map(|(y, x)| y * x.conj()).sum();
    let ref_power: f64 = ref_syms.iter().map(|x| x.norm_sqr()).sum();
    if ref_power == 0.0 {
        return Err(Error::NoSignalPower);
    }
    let c = cross / ref_power;
    if !(c.norm() > 0.0) || !c.norm().is_finite() {
        return Err(Error::NoSignalPower);
    }
    let inv = 1.0 / c;
    let mut err = KahanSum::default();
    for (y, x) in eq_syms.iter().zip(ref_syms) {
        err.add((y * inv - x).norm_sqr());
    }
    let ratio = err.value().max(0.0) / ref_power;
    let evm = ratio.sqrt() * 100.0;
    if ratio <= 10f64.powf(-SNR_SENTINEL_DB / 10.0) {
        return Ok((SNR_SENTINEL_DB, evm));
    }
    Ok((-10.0 * ratio.log10(), evm))
}

/// Hard-decision bit error ratio with nearest-point demapping.
pub fn ber(eq_syms: &[Complex64], tx_bits: &[Bit], map: &ConstellationMap) -> Result<f64> {
    let m = map.order_m();
    check_len(eq_syms.len() * m, tx_bits.len())?;
    let mut errors = 0usize;
    for (k, &y) in eq_syms.iter().enumerate() {
        let label = map.nearest(y);
        for i in 0..m {
            if map.label_bit(label, i) != tx_bits[k * m + i] {
                errors += 1;
            }
        }
    }
    Ok(errors as f64 / tx_bits.len() as f64)
}

/// Bitwise GMI (bits per symbol) and NGMI = GMI/m.
///
/// The received symbols are first scaled by the least-squares gain onto the
/// transmitted points, and the circular Gaussian variance is the ML estimate
/// against those known points. Bit metrics use the exact sum over the
/// constellation subsets, evaluated with log-sum-exp.
pub fn gmi_ngmi(eq_syms: &[Complex64], tx_bits: &[Bit], map: &ConstellationMap) -> Result<(f64, f64)> {
    let m = map.order_m();
    check_len(eq_syms.len() * m, tx_bits.len())?;
    let points = map.points();
    let tx: Vec<Complex64> = (0..eq_syms.len())
        .map(|k| points[map.label_of(&tx_bits[k * m..(k + 1) * m])])
        .collect();

    let cross: Complex64 = eq_syms.iter().zip(&tx).map(|(y, x)| y * x.conj()).sum();
    let tx_power: f64 = tx.iter().map(|x| x.norm_sqr()).sum();
    let gain = cross / tx_power;
    if !(gain.norm() > 0.0) {
        return Err(Error::DegenerateVariance(0.0));
    }
    let y: Vec<Complex64> = eq_syms.iter().map(|v| v / gain).collect();
    let mut var = KahanSum::default();
    for (a, b) in y.iter().zip(&tx) {
        var.add((a - b).norm_sqr());
    }
    let sigma2 = var.value() / y.len() as f64;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        if sigma2 == 0.0 {
            return Ok((m as f64, 1.0));
        }
        return Err(Error::DegenerateVariance(sigma2));
    }

    let n_pts = points.len();
    let mut metric = vec![0.0; n_pts];
    let mut loss = KahanSum::default();
    for (k, &yk) in y.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for (j, p) in points.iter().enumerate() {
            metric[j] = -(yk - p).norm_sqr() / sigma2;
            best = best.max(metric[j]);
        }
        let mut total = 0.0;
        let mut per_bit = [0.0f64; 16];
        let bits = &tx_bits[k * m..(k + 1) * m];
        for (j, &mj) in metric.iter().enumerate() {
            let e = (mj - best).exp();
            total += e;
            for (i, pb) in per_bit.iter_mut().enumerate().take(m) {
                if map.label_bit(j, i) == bits[i] {
                    *pb += e;
                }
            }
        }
        for pb in per_bit.iter().take(m) {
            loss.add((total / pb).log2());
        }
    }
    let gmi = m as f64 - loss.value() / y.len() as f64;
    let gmi = gmi.min(m as f64);
    Ok((gmi, gmi / m as f64))
}

/// All metrics in one go.
pub fn evaluate(
    eq_syms: &[Complex64],
    tx_symbols: &[Complex64],
    tx_bits: &[Bit],
    map: &ConstellationMap,
) -> Result<MetricReport> {
    let (snr_db, evm_pct) = snr_evm(eq_syms, tx_symbols)?;
    let ber = ber(eq_syms, tx_bits, map)?;
    let (gmi_bits, ngmi) = gmi_ngmi(eq_syms, tx_bits, map)?;
    Ok(MetricReport {
        snr_db,
        evm_pct,
        ber,
        gmi_bits,
        ngmi,
        n_symbols: eq_syms.len(),
    })
}
