use super::{Result, SignalError, Waveform};

const HALF_TAPS: isize = 16;
const KAISER_BETA: f64 = 8.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(offset: f64) -> f64 {
    let r = offset / HALF_TAPS as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

const TABLE_RES: usize = 512;

/// Windowed-sinc kernel sampled every `1 / TABLE_RES` input samples over `[0, HALF_TAPS]`.
fn kernel_table(cutoff: f64) -> Vec<f64> {
    let n = HALF_TAPS as usize * TABLE_RES + 2;
    (0..n)
        .map(|i| {
            let d = i as f64 / TABLE_RES as f64;
            cutoff * sinc(cutoff * d) * kaiser(d)
        })
        .collect()
}

fn lookup(table: &[f64], d: f64) -> f64 {
    let pos = d.abs() * TABLE_RES as f64;
    let i = pos.floor() as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    if frac == 0.0 {
        table[i]
    } else {
        table[i] + (table[i + 1] - table[i]) * frac
    }
}

/// Kaiser-windowed sinc resampling (32 taps, beta 8) to `round(len * factor)` samples.
///
/// The sample rate field is left unchanged, so played back at the original
/// rate the result is slower (`factor > 1`) or faster (`factor < 1`).
pub fn resample(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(0.1..=10.0).contains(&factor) || !factor.is_finite() {
        return Err(SignalError::FactorOutOfRange(factor));
    }
    let out_len = ((w.len() as f64 * factor).round() as usize).max(1);
    let table = kernel_table(factor.min(1.0));
    let n = w.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let x = j as f64 / factor;
        let base = x.floor() as isize;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in (base - HALF_TAPS + 1)..=(base + HALF_TAPS) {
            let h = lookup(&table, x - k as f64);
            norm += h;
            if (0..n).contains(&k) {
                acc += h * w.samples[k as usize] as f64;
            }
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    Ok(Waveform::from_f64(&out, w.sample_rate))
}
