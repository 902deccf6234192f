use serde::{Deserialize, Serialize};

use super::GravityError;
use crate::model::{haversine_km, Trajectory};

pub const MIN_FIT_SAMPLES: usize = 100;
pub const FIT_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    pub samples: usize,
    pub bins_used: usize,
}

/// Distances between consecutive points of each trajectory.
pub fn displacements(trajectories: &[Trajectory]) -> Vec<f64> {
    trajectories
        .iter()
        .flat_map(|t| t.points.windows(2).map(|w| haversine_km(w[0].location, w[1].location)))
        .collect()
}

/// Fits `density(r) ∝ r^-exponent` to displacements in `(min_km, max_km]`.
///
/// Displacements are binned into log-spaced annuli; each bin's count is divided by its annulus
/// area and regressed in log-log space against the bin's geometric midpoint. Empty bins are
/// dropped. The slope is negated.
pub fn fit_decay_exponent(
    displacements_km: &[f64],
    min_km: f64,
    max_km: f64,
) -> Result<ExponentFit, GravityError> {
    if !(min_km > 0.0 && max_km > min_km) {
        return Err(GravityError::Fit(format!("invalid range ({min_km}, {max_km}]")));
    }
    let samples: Vec<f64> = displacements_km.iter().copied().filter(|&d| d > min_km && d <= max_km).collect();
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(GravityError::Fit(format!(
            "{} displacement(s) in ({min_km}, {max_km}] km; at least {MIN_FIT_SAMPLES} needed",
            samples.len()
        )));
    }
    let (la, lb) = (min_km.ln(), max_km.ln());
    let step = (lb - la) / FIT_BINS as f64;
    let edge = |k: usize| (la + step * k as f64).exp();
    let mut counts = [0usize; FIT_BINS];
    for d in &samples {
        let k = (((d.ln() - la) / step).ceil() as usize).clamp(1, FIT_BINS) - 1;
        counts[k] += 1;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (a, b) = (edge(k), edge(k + 1));
        let density = c as f64 / (std::f64::consts::PI * (b * b - a * a));
        xs.push((a * b).sqrt().ln());
        ys.push(density.ln());
    }
    if xs.len() < 3 {
        return Err(GravityError::Fit(format!("only {} non-empty distance bins", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(ExponentFit { exponent: -slope, stderr, samples: samples.len(), bins_used: xs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Inverse-CDF draws with planar density ∝ r^-beta on [a, b], i.e. radial pdf ∝ r^(1-beta).
    pub(crate) fn power_law_sample(beta: f64, a: f64, b: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2.0 - beta;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if k.abs() < 1e-12 {
                    (a.ln() + u * (b.ln() - a.ln())).exp()
                } else {
                    (a.powf(k) + u * (b.powf(k) - a.powf(k))).powf(1.0 / k)
                }
            })
            .collect()
    }

    #[test]
    fn recovers_two_and_a_half() {
        let d = power_law_sample(2.5, 0.1, 10.0, 10_000, 11);
        let f = fit_decay_exponent(&d, 0.1, 10.0).unwrap();
        assert!((f.exponent - 2.5).abs() < 0.1, "{f:?}");
        assert!(f.stderr < 0.1);
    }

    #[test]
    fn recovers_one() {
        let d = power_law_sample(1.0, 0.1, 10.0, 10_000, 12);
        let f = fit_decay_exponent(&d, 0.1, 10.0).unwrap();
        assert!((f.exponent - 1.0).abs() < 0.1, "{f:?}");
    }

    #[test]
    fn ten_samples_is_an_error() {
        let d = power_law_sample(2.5, 0.1, 10.0, 10, 1);
        assert!(matches!(fit_decay_exponent(&d, 0.1, 10.0), Err(GravityError::Fit(_))));
    }

    #[test]
    fn out_of_range_samples_ignored() {
        let mut d = power_law_sample(2.0, 0.1, 10.0, 5000, 4);
        d.extend([0.0, 0.05, 50.0, 1000.0]);
        let f = fit_decay_exponent(&d, 0.1, 10.0).unwrap();
        assert_eq!(f.samples, 5000);
        assert!((f.exponent - 2.0).abs() < 0.1);
    }
}
