//! Frame-level spectral statistics on a magnitude spectrum.
//!
//! All three return 0 Hz for an all-zero frame.

pub const DEFAULT_ROLLOFF: f64 = 0.85;

/// Magnitude-weighted mean frequency.
pub fn spectral_centroid(frame: &[f64], bin_freqs: &[f64]) -> f64 {
    debug_assert_eq!(frame.len(), bin_freqs.len());
    let total: f64 = frame.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    frame.iter().zip(bin_freqs).map(|(s, f)| s * f).sum::<f64>() / total
}

/// Magnitude-weighted standard deviation of frequency around `centroid`.
pub fn spectral_bandwidth(frame: &[f64], bin_freqs: &[f64], centroid: f64) -> f64 {
    debug_assert_eq!(frame.len(), bin_freqs.len());
    let total: f64 = frame.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let spread: f64 = frame
        .iter()
        .zip(bin_freqs)
        .map(|(s, f)| s * (f - centroid).powi(2))
        .sum();
    (spread / total).sqrt()
}

/// Lowest bin frequency at which cumulative energy (squared magnitude)
/// reaches `fraction` of the total.
pub fn spectral_rolloff(frame: &[f64], bin_freqs: &[f64], fraction: f64) -> f64 {
    debug_assert_eq!(frame.len(), bin_freqs.len());
    debug_assert!(fraction > 0.0 && fraction <= 1.0);
    let total: f64 = frame.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let threshold = fraction * total;
    let mut cumulative = 0.0;
    for (s, &f) in frame.iter().zip(bin_freqs) {
        cumulative += s * s;
        if cumulative >= threshold {
            return f;
        }
    }
    // Unreachable for fraction <= 1 since the running sum ends at `total`.
    *bin_freqs.last().unwrap_or(&0.0)
}
