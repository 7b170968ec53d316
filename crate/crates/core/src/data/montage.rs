//! Hemisphere checks using the 10-20 convention: odd electrode numbers sit
//! over the left hemisphere, even numbers over the right, `z` on the midline.

use crate::error::{Error, Result};

pub const MUSE_MONTAGE: [&str; 4] = ["TP9", "AF7", "AF8", "TP10"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Midline,
}

/// Side of a 10-20 style name such as `AF7`, `TP10` or `Cz`; `None` when the
/// name does not follow the convention.
pub fn side_of(name: &str) -> Option<Side> {
    let letters: String = name
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    let rest = &name[letters.len()..];
    if letters.is_empty() {
        return None;
    }
    if rest.is_empty() {
        return letters.ends_with(['z', 'Z']).then_some(Side::Midline);
    }
    let n: u32 = rest.parse().ok()?;
    if n == 0 {
        return None;
    }
    Some(if n % 2 == 1 { Side::Left } else { Side::Right })
}

/// Splits the montage at its midpoint and checks every recognized name
/// against its block.
pub fn validate_montage<S: AsRef<str>>(names: &[S]) -> Result<(Vec<String>, Vec<String>)> {
    let mut names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
    if names.is_empty() || !names.len().is_multiple_of(2) {
        return Err(Error::Validation(format!(
            "montage needs an even, nonzero channel count, got {}",
            names.len()
        )));
    }
    // the hemisphere kernel pairs channels by position, so a permuted MUSE
    // montage would silently pair the wrong electrodes
    let is_muse_set = names.len() == MUSE_MONTAGE.len()
        && MUSE_MONTAGE.iter().all(|m| names.iter().any(|n| n == m));
    if is_muse_set && names.iter().zip(MUSE_MONTAGE).any(|(n, m)| n != m) {
        return Err(Error::Validation(format!(
            "channel order {names:?} must be reordered to {MUSE_MONTAGE:?} (left hemisphere first then right)"
        )));
    }
    let half = names.len() / 2;
    let mut offending = Vec::new();
    let mut unrecognized = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let want = if i < half { Side::Left } else { Side::Right };
        match side_of(name) {
            Some(s) if s == want => {}
            Some(_) => offending.push(name.clone()),
            None => unrecognized.push(name.clone()),
        }
    }
    if !offending.is_empty() {
        let mut left: Vec<&String> = names
            .iter()
            .filter(|n| side_of(n) == Some(Side::Left))
            .collect();
        let right: Vec<&String> = names
            .iter()
            .filter(|n| side_of(n) == Some(Side::Right))
            .collect();
        left.extend(right);
        return Err(Error::Validation(format!(
            "channels {offending:?} are in the wrong hemisphere block; expected left \
             hemisphere first then right, e.g. {left:?}"
        )));
    }
    if !unrecognized.is_empty() {
        log::warn!("channels {unrecognized:?} not in 10-20 form; splitting at the midpoint");
    }
    let right = names.split_off(half);
    Ok((names, right))
}
