//! Cascade filtering and forward-backward (zero-phase) application.

use super::design::{Section, Sos};
use crate::error::{Error, Result};

/// Steady-state transposed direct-form II state of one section under a
/// unit-step input.
fn step_state(s: &Section) -> [f64; 2] {
    let den = 1.0 + s.a1 + s.a2;
    let y = (s.b0 + s.b1 + s.b2) / den;
    let z2 = s.b2 - s.a2 * y;
    let z1 = s.b1 - s.a1 * y + z2;
    [z1, z2]
}

/// Runs the cascade in place. `init` scales each section's step state; with
/// `None` the filter starts at rest.
fn run(sections: &[Section], x: &mut [f64], init: Option<f64>) {
    // each section's step state is relative to a unit step at its own input,
    // which is the DC gain of everything before it
    let mut dc = 1.0;
    for s in sections {
        let [mut z1, mut z2] = match init {
            Some(x0) => {
                let [a, b] = step_state(s);
                [a * x0 * dc, b * x0 * dc]
            }
            None => [0.0, 0.0],
        };
        dc *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        for v in x.iter_mut() {
            let xi = *v;
            let y = s.b0 * xi + z1;
            z1 = s.b1 * xi - s.a1 * y + z2;
            z2 = s.b2 * xi - s.a2 * y;
            *v = y;
        }
    }
}

/// Causal single-pass filtering from rest.
pub fn sosfilt(sos: &Sos, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    run(&sos.folded(), &mut y, None);
    y
}

/// Edge padding applied on each side by [`filtfilt`].
pub fn pad_len(sos: &Sos) -> usize {
    3 * 2 * sos.sections.len()
}

/// One forward pass, reverse, second pass, reverse, each pass starting from
/// the steady state matching its first sample.
fn forward_backward(sections: &[Section], x: &mut [f64]) {
    let x0 = x[0];
    run(sections, x, Some(x0));
    x.reverse();
    let y0 = x[0];
    run(sections, x, Some(y0));
    x.reverse();
}

/// Zero-phase filtering with odd-reflection padding of [`pad_len`] samples.
///
/// The result is the mean of the forward-backward and backward-forward
/// orderings. With poles this close to the unit circle the edge transients
/// outlast the padding, and a single ordering would make the output depend
/// on the direction of time; averaging both makes the operator commute
/// exactly with time reversal.
pub fn filtfilt(sos: &Sos, x: &[f64]) -> Result<Vec<f64>> {
    let pad = pad_len(sos);
    if x.len() <= pad {
        return Err(Error::SignalTooShort {
            len: x.len(),
            min: pad + 1,
        });
    }
    let n = x.len();
    let (first, last) = (x[0], x[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    let sections = sos.folded();
    let mut rev: Vec<f64> = ext.iter().rev().copied().collect();
    forward_backward(&sections, &mut ext);
    forward_backward(&sections, &mut rev);
    Ok(ext[pad..pad + n]
        .iter()
        .zip(rev[pad..pad + n].iter().rev())
        .map(|(a, b)| 0.5 * (a + b))
        .collect())
}
