//! Start–stop delay histograms with detector timing jitter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TomographyError;

/// Histograms wider than this many bins are refused.
const MAX_BINS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramParams {
    pub true_delay_ns: f64,
    /// 1σ timing jitter.
    pub jitter_ps: f64,
    pub n_events: usize,
    pub bin_width_ps: f64,
    /// Electronics and extra-path delay, calibrated and removed from the result.
    #[serde(default)]
    pub systemic_offset_ns: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: f64,
    /// Start of bin 0.
    pub origin_ns: f64,
    pub bins: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn bin_start_ns(&self, k: usize) -> f64 {
        self.origin_ns + k as f64 * self.bin_width_ps * 1e-3
    }

    pub fn bin_center_ns(&self, k: usize) -> f64 {
        self.origin_ns + (k as f64 + 0.5) * self.bin_width_ps * 1e-3
    }

    /// Merges `factor` adjacent bins; the last bin may absorb fewer.
    pub fn rebin(&self, factor: usize) -> Histogram {
        let factor = factor.max(1);
        Histogram {
            bin_width_ps: self.bin_width_ps * factor as f64,
            origin_ns: self.origin_ns,
            bins: self.bins.chunks(factor).map(|c| c.iter().sum()).collect(),
        }
    }

    /// `(bin_start_ns, count)` pairs.
    pub fn rows(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.bins.iter().enumerate().map(|(k, &n)| (self.bin_start_ns(k), n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMethod {
    GaussianFit,
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    /// Offset-corrected delay.
    pub delay_ns: f64,
    /// Standard error of `delay_ns`.
    pub uncertainty_ns: f64,
    /// Fitted (or sample) width.
    pub sigma_ps: f64,
    pub method: PeakMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramResult {
    /// Binned in the offset-corrected frame.
    pub histogram: Histogram,
    pub peak: PeakEstimate,
}

/// Draws `n_events` arrival-time differences from
/// `Normal(true_delay + offset, jitter)`, removes the offset and bins them on a
/// grid aligned to multiples of the bin width; the peak comes from a Gaussian
/// fit over ±5σ around the tallest bin.
pub fn coincidence_histogram(params: &HistogramParams) -> Result<HistogramResult, TomographyError> {
    let p = params;
    let finite = p.true_delay_ns.is_finite() && p.systemic_offset_ns.is_finite();
    if !finite || !(p.jitter_ps >= 0.0) || !(p.bin_width_ps > 0.0) || p.n_events == 0 {
        return Err(TomographyError::InvalidParameter(format!("{p:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let sigma_ns = p.jitter_ps * 1e-3;
    let raw: Vec<f64> = (0..p.n_events)
        .map(|_| p.true_delay_ns + p.systemic_offset_ns + sigma_ns * normal.sample(&mut rng))
        .collect();
    let times: Vec<f64> = raw.iter().map(|t| t - p.systemic_offset_ns).collect();

    let width_ns = p.bin_width_ps * 1e-3;
    let index = |t: f64| (t / width_ns).floor();
    let lo = times.iter().map(|&t| index(t)).fold(f64::INFINITY, f64::min);
    let hi = times.iter().map(|&t| index(t)).fold(f64::NEG_INFINITY, f64::max);
    let n_bins = hi - lo + 1.0;
    if !(n_bins <= MAX_BINS as f64) {
        return Err(TomographyError::InvalidParameter(format!(
            "{n_bins} bins needed; widen the bins"
        )));
    }
    let mut bins = vec![0u64; n_bins as usize];
    for &t in &times {
        bins[(index(t) - lo) as usize] += 1;
    }
    let histogram = Histogram {
        bin_width_ps: p.bin_width_ps,
        origin_ns: lo * width_ns,
        bins,
    };
    let peak = gaussian_peak(&histogram, p.jitter_ps).unwrap_or_else(|| centroid(&times));
    Ok(HistogramResult { histogram, peak })
}

/// Weighted least-squares parabola through `ln(count)` over the ±5σ window.
fn gaussian_peak(h: &Histogram, jitter_ps: f64) -> Option<PeakEstimate> {
    let (kmax, _) = h.bins.iter().enumerate().max_by_key(|&(k, &n)| (n, std::cmp::Reverse(k)))?;
    let half = (5.0 * jitter_ps / h.bin_width_ps).ceil() as usize;
    let from = kmax.saturating_sub(half);
    let to = (kmax + half).min(h.bins.len() - 1);
    let x0 = h.bin_center_ns(kmax);
    // normal equations for ln n ≈ a + b·x + c·x², weight n (Poisson variance of ln n)
    let mut s = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    let mut used = 0usize;
    let mut window_events = 0u64;
    for k in from..=to {
        let n = h.bins[k];
        window_events += n;
        if n == 0 {
            continue;
        }
        used += 1;
        let x = h.bin_center_ns(k) - x0;
        let w = n as f64;
        let y = w.ln();
        let phi = [1.0, x, x * x];
        for i in 0..3 {
            r[i] += w * phi[i] * y;
            for j in 0..3 {
                s[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    if used < 3 {
        return None;
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| s[i][j]);
    let coef = m.lu().solve(&nalgebra::Vector3::from(r))?;
    let (b, c2) = (coef[1], coef[2]);
    if !(c2 < 0.0) {
        return None;
    }
    let sigma = (-0.5 / c2).sqrt();
    let mu = -b / (2.0 * c2);
    if !mu.is_finite() || mu.abs() > (half as f64 + 1.0) * h.bin_width_ps * 1e-3 {
        return None;
    }
    Some(PeakEstimate {
        delay_ns: x0 + mu,
        uncertainty_ns: sigma / (window_events as f64).sqrt(),
        sigma_ps: sigma * 1e3,
        method: PeakMethod::GaussianFit,
    })
}

fn centroid(times: &[f64]) -> PeakEstimate {
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    PeakEstimate {
        delay_ns: mean,
        uncertainty_ns: (var / n).sqrt(),
        sigma_ps: var.sqrt() * 1e3,
        method: PeakMethod::Centroid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(delay: f64, jitter: f64, n: usize) -> HistogramParams {
        HistogramParams {
            true_delay_ns: delay,
            jitter_ps: jitter,
            n_events: n,
            bin_width_ps: 50.0,
            systemic_offset_ns: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn zero_jitter_fills_one_bin() {
        let r = coincidence_histogram(&params(36.2, 0.0, 1000)).unwrap();
        assert_eq!(r.histogram.bins, vec![1000]);
        let start = r.histogram.bin_start_ns(0);
        assert!(start <= 36.2 && 36.2 < start + 0.05);
        assert!((r.peak.delay_ns - 36.2).abs() < 1e-9);
        assert_eq!(r.peak.method, PeakMethod::Centroid);
    }

    #[test]
    fn peak_within_three_standard_errors() {
        let r = coincidence_histogram(&params(687.0, 450.0, 100_000)).unwrap();
        let se = 0.450 / (1e5f64).sqrt();
        assert_eq!(r.peak.method, PeakMethod::GaussianFit);
        assert!((r.peak.delay_ns - 687.0).abs() < 3.0 * se, "{:?}", r.peak);
        assert!((r.peak.sigma_ps - 450.0).abs() < 10.0);
        assert!((r.peak.uncertainty_ns / se - 1.0).abs() < 0.05);
    }

    #[test]
    fn offset_is_removed() {
        let a = coincidence_histogram(&params(351.0, 450.0, 20_000)).unwrap();
        let mut p = params(351.0, 450.0, 20_000);
        p.systemic_offset_ns = 5.0;
        let b = coincidence_histogram(&p).unwrap();
        assert!((a.peak.delay_ns - b.peak.delay_ns).abs() < 1e-9);
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = coincidence_histogram(&params(36.0, 450.0, 5000)).unwrap();
        let b = coincidence_histogram(&params(36.0, 450.0, 5000)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(coincidence_histogram(&params(36.0, 450.0, 0)).is_err());
        let mut p = params(36.0, 450.0, 10);
        p.bin_width_ps = 0.0;
        assert!(coincidence_histogram(&p).is_err());
        p.bin_width_ps = 1e-9;
        p.jitter_ps = 1e6;
        assert!(coincidence_histogram(&p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rebinning_conserves_counts(seed in 0u64..1000, factor in 1usize..20, n in 1usize..3000) {
            let mut p = params(100.0, 300.0, n);
            p.seed = seed;
            let h = coincidence_histogram(&p).unwrap().histogram;
            let coarse = h.rebin(factor);
            prop_assert_eq!(coarse.total(), n as u64);
            prop_assert_eq!(coarse.bins.len(), h.bins.len().div_ceil(factor));
            prop_assert_eq!(coarse.origin_ns, h.origin_ns);
        }
    }
}
