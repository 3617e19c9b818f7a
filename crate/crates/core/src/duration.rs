//! Effective sample counts for correlated enrollment segments.
//!
//! Consecutive segments of one speaker share channel conditions, so `N`
//! segments carry less information than `N` independent draws. With a lag
//! correlation `r` between successive segments the effective count is given
//! exactly by [`neff_discrete`]; [`neff_continuous`] is the approximation the
//! clustering engine uses because it is defined for soft (real-valued) counts.

use crate::error::{Error, Result};

pub const DEFAULT_CORRELATION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationConfig {
    /// Correlation between successive segments, in `[0, 1]`.
    pub r: f64,
    /// Target segment count per file. `None` leaves counts unscaled.
    pub n0: Option<f64>,
}

impl Default for DurationConfig {
    fn default() -> Self {
        Self {
            r: DEFAULT_CORRELATION,
            n0: None,
        }
    }
}

impl DurationConfig {
    pub fn validate(&self) -> Result<()> {
        check_correlation(self.r)?;
        if let Some(n0) = self.n0 {
            if !(n0 > 0.0) || !n0.is_finite() {
                return Err(Error::InvalidConfig(format!("n0 must be positive, got {n0}")));
            }
        }
        Ok(())
    }

    /// Effective count for a soft cluster count: scale by the file length
    /// first, then apply the correlation correction.
    pub fn effective_count(&self, soft_count: f64, file_total: f64) -> Result<f64> {
        let scaled = scale_count(soft_count, self, file_total)?;
        neff_continuous(scaled, self.r)
    }
}

fn check_correlation(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::InvalidCorrelation(r))
    }
}

/// `N / (1 + 2 Σ_{j=1}^{N-1} ((N-j)/N) r^j)`.
pub fn neff_discrete(n: u64, r: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidCount(n as f64));
    }
    check_correlation(r)?;
    let nf = n as f64;
    let mut sum = 0.0;
    let mut rj = 1.0;
    for j in 1..n {
        rj *= r;
        if rj == 0.0 {
            break;
        }
        sum += (nf - j as f64) / nf * rj;
    }
    Ok(nf / (1.0 + 2.0 * sum))
}

/// Large-`N` limit `((1 - r) / (1 + r)) N`.
pub fn neff_limit(n: u64, r: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidCount(n as f64));
    }
    check_correlation(r)?;
    Ok((1.0 - r) / (1.0 + r) * n as f64)
}

/// `min(N, ((1 - r) N + 2r) / (1 + r))`, defined for any real `N >= 0`.
pub fn neff_continuous(n: f64, r: f64) -> Result<f64> {
    check_correlation(r)?;
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::InvalidCount(n));
    }
    Ok(n.min(((1.0 - r) * n + 2.0 * r) / (1.0 + r)))
}

/// Scales an observed count by `min(1, N0 / file_total)`.
pub fn scale_count(n: f64, cfg: &DurationConfig, file_total: f64) -> Result<f64> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::InvalidCount(n));
    }
    if !(file_total > 0.0) || n > file_total * (1.0 + 1e-9) {
        return Err(Error::InvalidCount(file_total));
    }
    match cfg.n0 {
        Some(n0) if file_total > n0 => Ok(n * (n0 / file_total)),
        _ => Ok(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_endpoints() {
        assert_eq!(neff_discrete(5, 0.0).unwrap(), 5.0);
        assert!((neff_discrete(5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(neff_discrete(1, 0.9).unwrap(), 1.0);
    }

    #[test]
    fn limit_endpoints() {
        assert_eq!(neff_limit(100, 0.0).unwrap(), 100.0);
        assert_eq!(neff_limit(100, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn continuous_small_counts_match_discrete() {
        for &r in &[0.0, 0.1, 0.5, 0.9, 1.0] {
            assert!((neff_continuous(1.0, r).unwrap() - 1.0).abs() < 1e-15);
            let two = neff_continuous(2.0, r).unwrap();
            assert!((two - 2.0 / (1.0 + r)).abs() < 1e-15);
            assert!((two - neff_discrete(2, r).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn continuous_accepts_soft_counts() {
        assert_eq!(neff_continuous(0.0, 0.9).unwrap(), 0.0);
        assert_eq!(neff_continuous(0.4, 0.9).unwrap(), 0.4);
        let v = neff_continuous(7.5, 0.9).unwrap();
        assert!((v - (0.1 * 7.5 + 1.8) / 1.9).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(neff_discrete(0, 0.5), Err(Error::InvalidCount(_))));
        assert!(matches!(neff_discrete(3, 1.5), Err(Error::InvalidCorrelation(_))));
        assert!(matches!(neff_limit(3, -0.1), Err(Error::InvalidCorrelation(_))));
        assert!(matches!(neff_continuous(3.0, 2.0), Err(Error::InvalidCorrelation(_))));
        assert!(matches!(neff_continuous(-1.0, 0.2), Err(Error::InvalidCount(_))));
        let cfg = DurationConfig::default();
        assert!(matches!(scale_count(-1.0, &cfg, 10.0), Err(Error::InvalidCount(_))));
        assert!(matches!(scale_count(11.0, &cfg, 10.0), Err(Error::InvalidCount(_))));
    }

    #[test]
    fn scale_count_examples() {
        let unbounded = DurationConfig { r: 0.9, n0: None };
        assert_eq!(scale_count(10.0, &unbounded, 200.0).unwrap(), 10.0);
        let bounded = DurationConfig { r: 0.9, n0: Some(25.0) };
        assert_eq!(scale_count(10.0, &bounded, 25.0).unwrap(), 10.0);
        assert_eq!(scale_count(10.0, &bounded, 100.0).unwrap(), 2.5);
    }

    #[test]
    fn scale_count_is_linear_and_never_increases() {
        let cfg = DurationConfig { r: 0.9, n0: Some(30.0) };
        for total in [5.0, 30.0, 31.0, 500.0] {
            let unit = scale_count(1.0, &cfg, total).unwrap();
            for n in [0.0, 0.5, 1.0, 3.0, 5.0] {
                let s = scale_count(n, &cfg, total).unwrap();
                assert!(s <= n);
                assert!((s - n * unit).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn effective_count_scales_before_correcting() {
        let cfg = DurationConfig { r: 0.5, n0: Some(25.0) };
        let got = cfg.effective_count(10.0, 100.0).unwrap();
        assert!((got - neff_continuous(2.5, 0.5).unwrap()).abs() < 1e-15);
    }
}
