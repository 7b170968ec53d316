//! IIR band-pass design in zero-pole-gain form, realized as cascaded
//! second-order sections.
//!
//! Chebyshev Type II prototypes are normalized so the stopband edge sits at
//! 1 rad/s; the band-pass edges passed to the transform are therefore the
//! stopband edges, `low - margin` and `high + margin`. Butterworth
//! prototypes are normalized at the -3 dB point, so their edges are the
//! passband edges themselves.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Band-pass design request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs: f64,
    pub order: usize,
    pub stop_atten_db: f64,
    pub stop_margin_hz: f64,
}

impl FilterSpec {
    pub const ORDER: usize = 4;
    pub const STOP_ATTEN_DB: f64 = 40.0;
    pub const STOP_MARGIN_HZ: f64 = 2.0;

    /// A band with the default order, attenuation and stopband margin.
    pub fn band(low_hz: f64, high_hz: f64, fs: f64) -> Self {
        Self {
            low_hz,
            high_hz,
            fs,
            order: Self::ORDER,
            stop_atten_db: Self::STOP_ATTEN_DB,
            stop_margin_hz: Self::STOP_MARGIN_HZ,
        }
    }

    pub fn stop_edges(&self) -> (f64, f64) {
        (
            self.low_hz - self.stop_margin_hz,
            self.high_hz + self.stop_margin_hz,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let nyq = self.fs / 2.0;
        if !(self.fs > 0.0) {
            return Err(Error::Design(format!(
                "sampling rate {} must be positive",
                self.fs
            )));
        }
        if !(0.0 < self.low_hz && self.low_hz < self.high_hz && self.high_hz < nyq) {
            return Err(Error::Design(format!(
                "need 0 < low < high < fs/2, got {}..{} Hz at fs={}",
                self.low_hz, self.high_hz, self.fs
            )));
        }
        if self.order < 2 {
            return Err(Error::Design(format!("order {} must be >= 2", self.order)));
        }
        if !(self.stop_atten_db > 0.0) {
            return Err(Error::Design(
                "stopband attenuation must be positive".into(),
            ));
        }
        let (s1, s2) = self.stop_edges();
        if !(s1 > 0.0 && s2 < nyq) {
            return Err(Error::Design(format!(
                "stopband edges {s1}..{s2} Hz fall outside (0, {nyq}) Hz; \
                 passband is too close to DC or Nyquist for a {} Hz margin",
                self.stop_margin_hz
            )));
        }
        Ok(())
    }
}

/// One biquad, `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Section {
    fn response(&self, zinv: Complex64) -> Complex64 {
        let z2 = zinv * zinv;
        (self.b0 + zinv * self.b1 + z2 * self.b2) / (1.0 + zinv * self.a1 + z2 * self.a2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        quadratic_roots(self.a1, self.a2)
    }
}

/// Cascade of second-order sections with an overall gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos {
    pub sections: Vec<Section>,
    pub gain: f64,
}

impl Sos {
    pub fn frequency_response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / fs);
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| {
                acc * s.response(zinv)
            })
    }

    /// Single-pass magnitude in dB.
    pub fn magnitude_db(&self, freq_hz: f64, fs: f64) -> f64 {
        20.0 * self.frequency_response(freq_hz, fs).norm().log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0 - 1e-9)
    }

    /// Sections with the overall gain folded into the first one.
    pub fn folded(&self) -> Vec<Section> {
        let mut out = self.sections.clone();
        if let Some(s) = out.first_mut() {
            s.b0 *= self.gain;
            s.b1 *= self.gain;
            s.b2 *= self.gain;
        }
        out
    }
}

fn quadratic_roots(b: f64, c: f64) -> [Complex64; 2] {
    let disc = Complex64::new(b * b - 4.0 * c, 0.0).sqrt();
    [(-b + disc) / 2.0, (-b - disc) / 2.0]
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

/// Analog Chebyshev Type II low-pass prototype, stopband edge at 1 rad/s.
fn cheby2_prototype(order: usize, atten_db: f64) -> Zpk {
    let n = order as f64;
    let eps = 1.0 / (10f64.powf(0.1 * atten_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n;
    let mut zeros = Vec::new();
    let mut poles = Vec::new();
    for k in 0..order {
        let m = -(n - 1.0) + 2.0 * k as f64;
        // zeros on the imaginary axis; the middle index of an odd order
        // has its zero at infinity
        if m != 0.0 {
            let s = (m * PI / (2.0 * n)).sin();
            zeros.push(Complex64::new(0.0, 1.0 / s).conj() * -1.0);
        }
        let base = -Complex64::from_polar(1.0, PI * m / (2.0 * n));
        let p = Complex64::new(mu.sinh() * base.re, mu.cosh() * base.im);
        poles.push(1.0 / p);
    }
    let num: Complex64 = poles.iter().map(|p| -p).product();
    let den: Complex64 = zeros.iter().map(|z| -z).product();
    Zpk {
        zeros,
        poles,
        gain: (num / den).re,
    }
}

/// Analog Butterworth low-pass prototype, -3 dB at 1 rad/s.
fn butter_prototype(order: usize) -> Zpk {
    let n = order as f64;
    let poles = (0..order)
        .map(|k| {
            let m = -(n - 1.0) + 2.0 * k as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n))
        })
        .collect();
    Zpk {
        zeros: Vec::new(),
        poles,
        gain: 1.0,
    }
}

/// Low-pass to band-pass substitution `s -> (s^2 + w0^2) / (s * bw)`.
fn lowpass_to_bandpass(lp: Zpk, w0: f64, bw: f64) -> Zpk {
    let degree = lp.poles.len() - lp.zeros.len();
    let map = |r: &Complex64| {
        let h = r * (bw / 2.0);
        let d = (h * h - w0 * w0).sqrt();
        [h + d, h - d]
    };
    let mut zeros: Vec<Complex64> = lp.zeros.iter().flat_map(map).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    let poles = lp.poles.iter().flat_map(map).collect();
    Zpk {
        zeros,
        poles,
        gain: lp.gain * bw.powi(degree as i32),
    }
}

fn bilinear(a: Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let degree = a.poles.len() - a.zeros.len();
    let map = |r: &Complex64| (fs2 + r) / (fs2 - r);
    let mut zeros: Vec<Complex64> = a.zeros.iter().map(map).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), degree));
    let num: Complex64 = a.zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = a.poles.iter().map(|p| fs2 - p).product();
    Zpk {
        zeros,
        poles: a.poles.iter().map(map).collect(),
        gain: a.gain * (num / den).re,
    }
}

fn prewarp(f_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f_hz / fs).tan()
}

/// Groups roots into conjugate pairs (complex) or matched real pairs
/// (smallest with largest). Assumes an even count.
fn root_pairs(roots: &[Complex64]) -> Vec<[Complex64; 2]> {
    const TOL: f64 = 1e-10;
    let mut pairs: Vec<[Complex64; 2]> = roots
        .iter()
        .filter(|r| r.im > TOL)
        .map(|r| [*r, r.conj()])
        .collect();
    let mut real: Vec<f64> = roots
        .iter()
        .filter(|r| r.im.abs() <= TOL)
        .map(|r| r.re)
        .collect();
    real.sort_by(f64::total_cmp);
    while real.len() >= 2 {
        let lo = real.remove(0);
        let hi = real.pop().unwrap();
        pairs.push([Complex64::new(lo, 0.0), Complex64::new(hi, 0.0)]);
    }
    pairs
}

fn to_sos(d: Zpk) -> Result<Sos> {
    if !d.poles.len().is_multiple_of(2) || d.zeros.len() != d.poles.len() {
        return Err(Error::Design(format!(
            "cannot split {} zeros / {} poles into biquads",
            d.zeros.len(),
            d.poles.len()
        )));
    }
    let mut pole_pairs = root_pairs(&d.poles);
    let mut zero_pairs = root_pairs(&d.zeros);
    if pole_pairs.len() * 2 != d.poles.len() || zero_pairs.len() * 2 != d.zeros.len() {
        return Err(Error::Design("unpaired complex roots".into()));
    }
    // poles nearest the unit circle claim the nearest zeros first and end
    // up in the last section
    pole_pairs.sort_by(|a, b| b[0].norm().total_cmp(&a[0].norm()));
    let mut sections = Vec::with_capacity(pole_pairs.len());
    for pp in &pole_pairs {
        let (idx, _) = zero_pairs
            .iter()
            .enumerate()
            .map(|(i, zp)| (i, (zp[0] - pp[0]).norm().min((zp[1] - pp[0]).norm())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("zero pairs remain");
        let zp = zero_pairs.swap_remove(idx);
        sections.push(Section {
            b0: 1.0,
            b1: -(zp[0] + zp[1]).re,
            b2: (zp[0] * zp[1]).re,
            a1: -(pp[0] + pp[1]).re,
            a2: (pp[0] * pp[1]).re,
        });
    }
    sections.reverse();
    Ok(Sos {
        sections,
        gain: d.gain,
    })
}

/// Chebyshev Type II band-pass: monotone passband, equiripple stopband at
/// `-stop_atten_db` beyond `low - margin` and `high + margin`.
pub fn design_cheby2_bandpass(spec: &FilterSpec) -> Result<Sos> {
    spec.validate()?;
    let (s1, s2) = spec.stop_edges();
    let (w1, w2) = (prewarp(s1, spec.fs), prewarp(s2, spec.fs));
    let analog = lowpass_to_bandpass(
        cheby2_prototype(spec.order, spec.stop_atten_db),
        (w1 * w2).sqrt(),
        w2 - w1,
    );
    let sos = to_sos(bilinear(analog, spec.fs))?;
    if !sos.is_stable() {
        return Err(Error::Design(format!(
            "design for {}..{} Hz is numerically unstable",
            spec.low_hz, spec.high_hz
        )));
    }
    Ok(sos)
}

/// Butterworth band-pass with -3 dB points at `low_hz` and `high_hz`.
pub fn design_butter_bandpass(low_hz: f64, high_hz: f64, fs: f64, order: usize) -> Result<Sos> {
    if !(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::Design(format!(
            "need 0 < low < high < fs/2, got {low_hz}..{high_hz} Hz at fs={fs}"
        )));
    }
    if order == 0 {
        return Err(Error::Design("order must be >= 1".into()));
    }
    let (w1, w2) = (prewarp(low_hz, fs), prewarp(high_hz, fs));
    let analog = lowpass_to_bandpass(butter_prototype(order), (w1 * w2).sqrt(), w2 - w1);
    let sos = to_sos(bilinear(analog, fs))?;
    if !sos.is_stable() {
        return Err(Error::Design(format!(
            "design for {low_hz}..{high_hz} Hz is unstable"
        )));
    }
    Ok(sos)
}
