use crate::error::{Error, Result};
use crate::panel::{is_missing, Panel};

/// Tail fractions clipped on each side before z-scoring, e.g. `(0.01, 0.01)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WinsorLimits {
    pub lower: f64,
    pub upper: f64,
}

impl WinsorLimits {
    pub const NONE: WinsorLimits = WinsorLimits { lower: 0.0, upper: 0.0 };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        for v in [lower, upper] {
            if !(0.0..0.5).contains(&v) {
                return Err(Error::invalid(format!("winsor limit {v} outside [0, 0.5)")));
            }
        }
        Ok(WinsorLimits { lower, upper })
    }
}

impl Default for WinsorLimits {
    fn default() -> Self {
        WinsorLimits {
            lower: 0.01,
            upper: 0.01,
        }
    }
}

/// Clips the lowest `lower` and highest `upper` fractions of `values`
/// (by count) to the nearest retained order statistic.
pub fn winsorize(values: &mut [f64], limits: WinsorLimits) {
    let n = values.len();
    if n == 0 {
        return;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo_idx = (limits.lower * n as f64) as usize;
    let hi_idx = n - (limits.upper * n as f64) as usize;
    if lo_idx >= hi_idx {
        return;
    }
    let (floor, cap) = (sorted[lo_idx], sorted[hi_idx - 1]);
    for v in values.iter_mut() {
        *v = v.clamp(floor, cap);
    }
}

/// Population z-scores in place; a (numerically) constant slice becomes zeros.
pub fn zscore(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

/// Per date: winsorize, demean and scale the defined cross-section.
pub fn standardize_cross_section(factor: &Panel, limits: WinsorLimits) -> Result<Panel> {
    WinsorLimits::new(limits.lower, limits.upper)?;
    let mut out = factor.clone();
    for t in 0..factor.n_dates() {
        let idx: Vec<usize> = (0..factor.n_symbols())
            .filter(|&j| !is_missing(factor.get(t, j)))
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mut vals: Vec<f64> = idx.iter().map(|&j| factor.get(t, j)).collect();
        winsorize(&mut vals, limits);
        zscore(&mut vals);
        for (&j, v) in idx.iter().zip(vals) {
            out.set(t, j, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn one_row(vals: &[f64]) -> Panel {
        let symbols = (0..vals.len()).map(|i| format!("S{i}")).collect();
        let cols: Vec<Vec<f64>> = vals.iter().map(|v| vec![*v]).collect();
        Panel::from_columns(vec![NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()], symbols, &cols).unwrap()
    }

    #[test]
    fn hand_z_scores() {
        let z = standardize_cross_section(&one_row(&[1.0, 2.0, 3.0]), WinsorLimits::NONE).unwrap();
        let expected = (1.5f64).sqrt();
        assert!((z.get(0, 0) + expected).abs() < 1e-12);
        assert_eq!(z.get(0, 1), 0.0);
        assert!((z.get(0, 2) - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_cross_section_is_zero() {
        let z = standardize_cross_section(&one_row(&[0.1, 0.1, 0.1]), WinsorLimits::NONE).unwrap();
        assert!(z.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn all_missing_passes_through() {
        let p = one_row(&[f64::NAN, f64::NAN]);
        assert_eq!(standardize_cross_section(&p, WinsorLimits::default()).unwrap(), p);
    }

    #[test]
    fn idempotent_without_winsorization() {
        let p = one_row(&[3.0, -1.0, 7.5, 2.0, 0.25]);
        let once = standardize_cross_section(&p, WinsorLimits::NONE).unwrap();
        let twice = standardize_cross_section(&once, WinsorLimits::NONE).unwrap();
        for j in 0..5 {
            assert!((once.get(0, j) - twice.get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn winsorize_clips_tails_by_count() {
        let mut v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        v[9] = 1000.0;
        winsorize(&mut v, WinsorLimits::new(0.1, 0.1).unwrap());
        assert_eq!(v[0], 1.0);
        assert_eq!(v[9], 8.0);
    }

    #[test]
    fn rejects_bad_limits() {
        assert!(WinsorLimits::new(0.5, 0.0).is_err());
        assert!(WinsorLimits::new(-0.1, 0.0).is_err());
    }
}
