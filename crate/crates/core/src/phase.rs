//! Small helpers for angles on the circle.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (−π, π].
#[inline]
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Mean of `e^{iθ}` over the angles, returned as (magnitude, argument).
pub fn circular_mean<I>(angles: I) -> (f64, f64)
where
    I: IntoIterator<Item = f64>,
{
    let (mut re, mut im, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        let (s, c) = a.sin_cos();
        re += c;
        im += s;
        n += 1;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let (re, im) = (re / n as f64, im / n as f64);
    (re.hypot(im), im.atan2(re))
}

/// Nearest-branch unwrapping of a sampled angle sequence.
pub fn unwrap(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let prev = angles[i - 1];
            offset += wrap(a - prev) - (a - prev);
        }
        out.push(a + offset);
    }
    out
}
