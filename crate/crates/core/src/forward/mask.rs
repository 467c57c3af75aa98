use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{rng_for, tag};

/// Fraction of columns in the always-sampled low-frequency band.
pub const CENTER_FRACTION: f64 = 0.08;

/// Cartesian sampling pattern that keeps or drops whole phase-encode columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    columns: Vec<bool>,
}

impl SamplingMask {
    pub fn from_columns(height: usize, columns: Vec<bool>) -> Result<Self> {
        if height == 0 || columns.is_empty() {
            return Err(Error::invalid("mask must have nonzero size"));
        }
        Ok(SamplingMask {
            height,
            width: columns.len(),
            columns,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        SamplingMask {
            height,
            width,
            columns: vec![true; width],
        }
    }

    /// Rebuilds a mask from a full boolean plane; fails unless every column is
    /// uniformly on or off.
    pub fn from_plane(height: usize, width: usize, plane: &[bool]) -> Result<Self> {
        if plane.len() != height * width || height == 0 || width == 0 {
            return Err(Error::invalid("mask plane does not match its shape"));
        }
        let columns: Vec<bool> = (0..width).map(|c| plane[c]).collect();
        for r in 0..height {
            for c in 0..width {
                if plane[r * width + c] != columns[c] {
                    return Err(Error::invalid(format!("mask column {c} is not uniformly sampled")));
                }
            }
        }
        Ok(SamplingMask { height, width, columns })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn columns(&self) -> &[bool] {
        &self.columns
    }

    pub fn is_sampled(&self, _row: usize, col: usize) -> bool {
        self.columns[col]
    }

    pub fn sampled_columns(&self) -> usize {
        self.columns.iter().filter(|&&c| c).count()
    }

    pub fn to_plane(&self) -> Vec<bool> {
        (0..self.height).flat_map(|_| self.columns.iter().copied()).collect()
    }
}

/// Half-open range of the fully sampled center band.
pub fn center_band(width: usize, selected: usize) -> std::ops::Range<usize> {
    let n = ((CENTER_FRACTION * width as f64).round() as usize).clamp(1, selected.max(1));
    let start = width / 2 - n / 2;
    start..start + n
}

/// 1D variable-density column mask.
///
/// Selects exactly `round(width / acceleration)` columns: a centered band of
/// 8% of the columns, plus columns drawn without replacement with probability
/// weight `(1 - d / (width/2 + 1))²`, `d` the distance to the center column.
pub fn make_vardens_mask(shape: (usize, usize), acceleration: f64, seed: u64) -> Result<SamplingMask> {
    let (height, width) = shape;
    if height == 0 || width == 0 {
        return Err(Error::invalid("mask shape must be nonzero"));
    }
    if !acceleration.is_finite() || acceleration < 1.0 {
        return Err(Error::invalid(format!(
            "acceleration factor must be at least 1, got {acceleration}"
        )));
    }
    if acceleration > width as f64 {
        return Err(Error::invalid(format!(
            "acceleration factor {acceleration} exceeds the {width} available columns"
        )));
    }

    let total = ((width as f64 / acceleration).round() as usize).clamp(1, width);
    let mut columns = vec![false; width];
    let band = center_band(width, total);
    for c in band.clone() {
        columns[c] = true;
    }

    let remaining = total - band.len();
    if remaining > 0 {
        // Efraimidis–Spirakis weighted sampling: keep the largest ln(u)/w.
        let mut rng = rng_for(seed, &[tag::MASK]);
        let center = (width / 2) as f64;
        let reach = width as f64 / 2.0 + 1.0;
        let mut keyed: Vec<(f64, usize)> = (0..width)
            .filter(|c| !band.contains(c))
            .map(|c| {
                let d = (c as f64 - center).abs();
                let weight = (1.0 - d / reach).powi(2);
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                (u.ln() / weight, c)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, c) in keyed.iter().take(remaining) {
            columns[c] = true;
        }
    }

    Ok(SamplingMask { height, width, columns })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_acceleration_samples_everything() {
        let m = make_vardens_mask((16, 20), 1.0, 3).unwrap();
        assert!(m.columns().iter().all(|&c| c));
    }

    #[test]
    fn four_fold_on_320_columns() {
        let m = make_vardens_mask((320, 320), 4.0, 11).unwrap();
        let n = m.sampled_columns();
        assert!((79..=81).contains(&n), "{n}");
        let band = center_band(320, n);
        assert_eq!(band.len(), 26);
        assert!(band.clone().all(|c| m.columns()[c]));
        assert_eq!(band.start, 160 - 13);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_vardens_mask((32, 64), 4.0, 5).unwrap();
        let b = make_vardens_mask((32, 64), 4.0, 5).unwrap();
        let c = make_vardens_mask((32, 64), 4.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn density_decays_away_from_center() {
        let width = 128;
        let mut inner = 0usize;
        let mut outer = 0usize;
        for seed in 0..200 {
            let m = make_vardens_mask((8, width), 4.0, seed).unwrap();
            for (c, &on) in m.columns().iter().enumerate() {
                let d = (c as i64 - 64).unsigned_abs() as usize;
                if on && (10..30).contains(&d) {
                    inner += 1;
                }
                if on && (40..60).contains(&d) {
                    outer += 1;
                }
            }
        }
        assert!(inner > 2 * outer, "inner {inner} outer {outer}");
    }

    #[test]
    fn count_within_one_column_for_many_factors() {
        for &(w, r) in &[(32usize, 4.0), (33, 3.0), (64, 2.5), (10, 10.0), (7, 1.5)] {
            let m = make_vardens_mask((4, w), r, 1).unwrap();
            let target = w as f64 / r;
            assert!((m.sampled_columns() as f64 - target).abs() <= 1.0, "{w} {r}");
        }
    }

    #[test]
    fn invalid_factors_rejected() {
        assert!(make_vardens_mask((8, 8), 0.5, 0).is_err());
        assert!(make_vardens_mask((8, 8), 9.0, 0).is_err());
        assert!(make_vardens_mask((8, 8), f64::NAN, 0).is_err());
    }

    #[test]
    fn plane_round_trip_and_column_check() {
        let m = make_vardens_mask((6, 12), 3.0, 2).unwrap();
        let plane = m.to_plane();
        assert_eq!(SamplingMask::from_plane(6, 12, &plane).unwrap(), m);
        let mut broken = plane;
        broken[13] = !broken[13];
        assert!(SamplingMask::from_plane(6, 12, &broken).is_err());
    }
}
