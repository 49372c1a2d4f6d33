//! Flash ADC: a bank of current comparators against fixed references.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u8,
    /// 2^bits − 1 strictly increasing reference currents (A).
    pub references: Vec<f64>,
    /// Standard deviation of each comparator's input-referred offset (A).
    pub comparator_offset_sigma: f64,
}

/// Comparators in an n-bit flash converter.
pub fn comparator_count(bits: u8) -> usize {
    (1usize << bits) - 1
}

impl AdcConfig {
    pub fn new(bits: u8, references: Vec<f64>) -> Result<Self> {
        let cfg = AdcConfig { bits, references, comparator_offset_sigma: 0.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits) {
            return Err(Error::InvalidParams(format!("ADC bits {} out of range", self.bits)));
        }
        if self.references.len() != comparator_count(self.bits) {
            return Err(Error::InvalidParams(format!(
                "{}-bit ADC needs {} references, got {}",
                self.bits,
                comparator_count(self.bits),
                self.references.len()
            )));
        }
        if self.references.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParams("ADC references must be strictly increasing".into()));
        }
        if !(self.comparator_offset_sigma >= 0.0) {
            return Err(Error::InvalidParams("comparator offset sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn full_scale_code(&self) -> u32 {
        self.references.len() as u32
    }
}

/// Midpoint references between consecutive nominal levels.
///
/// Extra levels beyond the converter's range saturate at full scale; if there
/// are too few levels the remaining references continue upward at the last
/// level spacing.
pub fn design_references(levels: &[f64], bits: u8) -> Result<AdcConfig> {
    let bounds: Vec<(f64, f64)> = levels.iter().map(|&l| (l, l)).collect();
    design_references_from_bounds(&bounds, bits)
}

/// Midpoint references between level intervals: reference j sits halfway
/// between the upper edge of level j and the lower edge of level j + 1.
pub fn design_references_from_bounds(bounds: &[(f64, f64)], bits: u8) -> Result<AdcConfig> {
    if !(1..=16).contains(&bits) {
        return Err(Error::InvalidParams(format!("ADC bits {bits} out of range")));
    }
    if bounds.len() < 2 {
        return Err(Error::DegenerateRange(format!("{} level(s) given", bounds.len())));
    }
    if bounds.iter().any(|&(lo, hi)| !(lo <= hi)) {
        return Err(Error::DegenerateRange("level interval with min > max".into()));
    }
    for (j, w) in bounds.windows(2).enumerate() {
        if !(w[0].1 < w[1].0) {
            return Err(Error::DegenerateRange(format!(
                "levels {j} and {} overlap or are not ascending ({:e} >= {:e})",
                j + 1,
                w[0].1,
                w[1].0
            )));
        }
    }
    let n = comparator_count(bits);
    let mut references: Vec<f64> =
        bounds.windows(2).take(n).map(|w| 0.5 * (w[0].1 + w[1].0)).collect();
    let last = bounds.len() - 1;
    let step = bounds[last].0 - bounds[last - 1].1;
    while references.len() < n {
        let prev = *references.last().expect("at least one midpoint");
        references.push(prev + step);
    }
    AdcConfig::new(bits, references)
}

/// Number of references strictly below the input; a tie counts as not above.
pub fn flash_convert(i_in: f64, cfg: &AdcConfig) -> u32 {
    cfg.references.partition_point(|&r| r < i_in) as u32
}

/// Thermometer code: comparator j fires when the input exceeds reference j.
pub fn thermometer(i_in: f64, cfg: &AdcConfig) -> Vec<bool> {
    cfg.references.iter().map(|&r| i_in > r).collect()
}

/// Conversion with an independent Gaussian offset on every comparator.
pub fn flash_convert_noisy<R: Rng + ?Sized>(i_in: f64, cfg: &AdcConfig, rng: &mut R) -> u32 {
    if cfg.comparator_offset_sigma == 0.0 {
        return flash_convert(i_in, cfg);
    }
    let noise = Normal::new(0.0, cfg.comparator_offset_sigma).expect("validated sigma");
    cfg.references.iter().filter(|&&r| i_in > r + noise.sample(rng)).count() as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints() {
        let levels: Vec<f64> = (0..8).map(|i| 2e-6 * i as f64).collect();
        let cfg = design_references(&levels, 3).unwrap();
        let want = [1e-6, 3e-6, 5e-6, 7e-6, 9e-6, 11e-6, 13e-6];
        for (a, b) in cfg.references.iter().zip(want) {
            assert!((a - b).abs() < 1e-18);
        }
        let cfg = design_references(&[0.0, 1e-6], 1).unwrap();
        assert_eq!(cfg.references, vec![0.5e-6]);
    }

    #[test]
    fn degenerate() {
        assert!(design_references(&[1e-6], 3).is_err());
        assert!(design_references(&[1e-6, 1e-6], 1).is_err());
    }

    #[test]
    fn clamp_and_pad() {
        let levels: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let cfg = design_references(&levels, 3).unwrap();
        assert_eq!(cfg.references.len(), 7);
        assert_eq!(flash_convert(8.0, &cfg), 7);
        let cfg = design_references(&[0.0, 1.0, 2.0], 3).unwrap();
        assert_eq!(cfg.references, vec![0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5]);
    }

    #[test]
    fn conversion_edges() {
        let cfg = AdcConfig::new(2, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(flash_convert(0.2, &cfg), 0);
        assert_eq!(flash_convert(1.0, &cfg), 0);
        assert_eq!(flash_convert(1.0000001, &cfg), 1);
        assert_eq!(flash_convert(9.0, &cfg), 3);
        assert_eq!(thermometer(2.5, &cfg), vec![true, true, false]);
    }
}
