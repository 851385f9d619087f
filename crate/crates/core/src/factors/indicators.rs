//! Technical indicators over a single symbol's daily series.
//!
//! Every function is causal: the value at index `t` reads inputs at indices
//! `<= t` only. Missing inputs (`NaN`) are never filled; a window that
//! touches a missing value yields a missing output, and recursive
//! indicators restart after a gap.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::panel::{is_missing, MISSING};

fn check_period(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid(format!("{what} must be at least 1")));
    }
    Ok(())
}

fn check_lengths(lens: &[usize]) -> Result<usize> {
    let first = lens[0];
    for &l in &lens[1..] {
        if l != first {
            return Err(Error::LengthMismatch {
                expected: first,
                found: l,
            });
        }
    }
    Ok(first)
}

/// Maximal runs of indices where `valid` holds.
pub(crate) fn segments(valid: impl Iterator<Item = bool>) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    let mut len = 0;
    for (i, ok) in valid.enumerate() {
        len = i + 1;
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..len);
    }
    out
}

/// Applies `f` to every window of `n` consecutive, fully defined values.
pub(crate) fn rolling<F>(series: &[f64], n: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut out = vec![MISSING; series.len()];
    if n == 0 {
        return out;
    }
    for seg in segments(series.iter().map(|v| !is_missing(*v))) {
        if seg.len() < n {
            continue;
        }
        for t in seg.start + n - 1..seg.end {
            out[t] = f(&series[t + 1 - n..=t]);
        }
    }
    out
}

pub fn rolling_sum(series: &[f64], n: usize) -> Result<Vec<f64>> {
    check_period(n, "window")?;
    Ok(rolling(series, n, |w| w.iter().sum()))
}

pub fn rolling_mean(series: &[f64], n: usize) -> Result<Vec<f64>> {
    check_period(n, "window")?;
    Ok(rolling(series, n, |w| w.iter().sum::<f64>() / w.len() as f64))
}

/// Exponential moving average with `alpha = 2 / (n + 1)`, seeded by the
/// simple mean of the first `n` values of each gap-free run.
pub fn ema(series: &[f64], n: usize) -> Result<Vec<f64>> {
    check_period(n, "EMA period")?;
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = vec![MISSING; series.len()];
    for seg in segments(series.iter().map(|v| !is_missing(*v))) {
        if seg.len() < n {
            continue;
        }
        let seed_end = seg.start + n;
        let mut prev = series[seg.start..seed_end].iter().sum::<f64>() / n as f64;
        out[seed_end - 1] = prev;
        for t in seed_end..seg.end {
            prev += alpha * (series[t] - prev);
            out[t] = prev;
        }
    }
    Ok(out)
}

/// Wilder smoothing: seeded with the mean of the first `n` values, then
/// `(prev * (n - 1) + x) / n`.
fn wilder(series: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![MISSING; series.len()];
    let nf = n as f64;
    for seg in segments(series.iter().map(|v| !is_missing(*v))) {
        if seg.len() < n {
            continue;
        }
        let seed_end = seg.start + n;
        let mut prev = series[seg.start..seed_end].iter().sum::<f64>() / nf;
        out[seed_end - 1] = prev;
        for t in seed_end..seg.end {
            prev = (prev * (nf - 1.0) + series[t]) / nf;
            out[t] = prev;
        }
    }
    out
}

/// `max(H - L, |H - C_prev|, |L - C_prev|)`; missing on the first bar.
pub fn true_range(high: &[f64], low: &[f64], close: &[f64]) -> Result<Vec<f64>> {
    let len = check_lengths(&[high.len(), low.len(), close.len()])?;
    let mut out = vec![MISSING; len];
    for t in 1..len {
        let prev = close[t - 1];
        let (h, l) = (high[t], low[t]);
        if is_missing(prev) || is_missing(h) || is_missing(l) {
            continue;
        }
        out[t] = (h - l).max((h - prev).abs()).max((l - prev).abs());
    }
    Ok(out)
}

/// Average true range: the `n`-period simple mean of the true range.
pub fn atr(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Result<Vec<f64>> {
    check_period(n, "ATR period")?;
    let tr = true_range(high, low, close)?;
    rolling_mean(&tr, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdxLines {
    pub plus_di: Vec<f64>,
    pub minus_di: Vec<f64>,
    pub dx: Vec<f64>,
    pub adx: Vec<f64>,
}

/// Directional movement system with Wilder smoothing.
///
/// When the smoothed true range is zero both DI lines are 0, and when
/// `+DI + -DI = 0` the DX is 0.
pub fn adx(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Result<AdxLines> {
    check_period(n, "ADX period")?;
    let len = check_lengths(&[high.len(), low.len(), close.len()])?;
    let tr = true_range(high, low, close)?;
    let mut plus_dm = vec![MISSING; len];
    let mut minus_dm = vec![MISSING; len];
    for t in 1..len {
        if is_missing(tr[t]) || is_missing(high[t - 1]) || is_missing(low[t - 1]) {
            continue;
        }
        let up = high[t] - high[t - 1];
        let down = low[t - 1] - low[t];
        plus_dm[t] = if up > down && up > 0.0 { up } else { 0.0 };
        minus_dm[t] = if down > up && down > 0.0 { down } else { 0.0 };
    }
    let s_tr = wilder(&tr, n);
    let s_plus = wilder(&plus_dm, n);
    let s_minus = wilder(&minus_dm, n);

    let mut plus_di = vec![MISSING; len];
    let mut minus_di = vec![MISSING; len];
    let mut dx = vec![MISSING; len];
    for t in 0..len {
        if is_missing(s_tr[t]) {
            continue;
        }
        let (p, m) = if s_tr[t] > 0.0 {
            (100.0 * (s_plus[t] / s_tr[t]), 100.0 * (s_minus[t] / s_tr[t]))
        } else {
            (0.0, 0.0)
        };
        plus_di[t] = p;
        minus_di[t] = m;
        let sum = p + m;
        dx[t] = if sum.abs() > 0.0 {
            100.0 * ((p - m).abs() / sum.abs())
        } else {
            0.0
        };
    }
    let adx = wilder(&dx, n);
    Ok(AdxLines {
        plus_di,
        minus_di,
        dx,
        adx,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacdLines {
    /// Fast EMA minus slow EMA; identical to the MACD line.
    pub apo: Vec<f64>,
    pub ppo: Vec<f64>,
    pub ppo_signal: Vec<f64>,
    pub ppo_histogram: Vec<f64>,
    pub macd: Vec<f64>,
    pub macd_signal: Vec<f64>,
}

pub fn apo_ppo_macd(close: &[f64], fast: usize, slow: usize, signal: usize) -> Result<MacdLines> {
    check_period(fast, "fast period")?;
    check_period(signal, "signal period")?;
    if fast >= slow {
        return Err(Error::invalid(format!(
            "fast period {fast} must be shorter than slow period {slow}"
        )));
    }
    let f = ema(close, fast)?;
    let s = ema(close, slow)?;
    let apo: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a - b).collect();
    let ppo: Vec<f64> = f
        .iter()
        .zip(&s)
        .map(|(a, b)| if *b == 0.0 { MISSING } else { 100.0 * (a - b) / b })
        .collect();
    let macd_signal = ema(&apo, signal)?;
    let ppo_signal = ema(&ppo, signal)?;
    let ppo_histogram = ppo.iter().zip(&ppo_signal).map(|(a, b)| a - b).collect();
    Ok(MacdLines {
        macd: apo.clone(),
        apo,
        ppo,
        ppo_signal,
        ppo_histogram,
        macd_signal,
    })
}

/// Chande momentum oscillator over the last `n` close-to-close moves.
/// A flat window reads 0.
pub fn cmo(close: &[f64], n: usize) -> Result<Vec<f64>> {
    check_period(n, "CMO period")?;
    Ok(rolling(close, n + 1, |w| {
        let (mut up, mut down) = (0.0, 0.0);
        for pair in w.windows(2) {
            let d = pair[1] - pair[0];
            if d > 0.0 {
                up += d;
            } else {
                down -= d;
            }
        }
        if up + down == 0.0 {
            0.0
        } else {
            100.0 * ((up - down) / (up + down))
        }
    }))
}

/// Williams %R in `[-100, 0]`; 0 when the window's high equals its low.
pub fn williams_r(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Result<Vec<f64>> {
    check_period(n, "Williams %R period")?;
    let len = check_lengths(&[high.len(), low.len(), close.len()])?;
    let mut out = vec![MISSING; len];
    let valid = (0..len).map(|t| !(is_missing(high[t]) || is_missing(low[t]) || is_missing(close[t])));
    for seg in segments(valid) {
        if seg.len() < n {
            continue;
        }
        for t in seg.start + n - 1..seg.end {
            let w = t + 1 - n..t + 1;
            let hh = high[w.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ll = low[w].iter().copied().fold(f64::INFINITY, f64::min);
            out[t] = if hh == ll {
                0.0
            } else {
                -100.0 * ((hh - close[t]) / (hh - ll))
            };
        }
    }
    Ok(out)
}

/// Money flow index over `n` typical-price changes.
///
/// No negative flow reads 100, no positive flow reads 0, and a window with
/// neither (a flat typical price) reads 50.
pub fn mfi(high: &[f64], low: &[f64], close: &[f64], volume: &[f64], n: usize) -> Result<Vec<f64>> {
    check_period(n, "MFI period")?;
    let len = check_lengths(&[high.len(), low.len(), close.len(), volume.len()])?;
    let typical: Vec<f64> = (0..len).map(|t| (high[t] + low[t] + close[t]) / 3.0).collect();
    let mut out = vec![MISSING; len];
    let valid = (0..len).map(|t| !(is_missing(typical[t]) || is_missing(volume[t])));
    for seg in segments(valid) {
        if seg.len() < n + 1 {
            continue;
        }
        for t in seg.start + n..seg.end {
            let (mut pos, mut neg) = (0.0, 0.0);
            for i in t + 1 - n..=t {
                let flow = typical[i] * volume[i];
                if typical[i] > typical[i - 1] {
                    pos += flow;
                } else if typical[i] < typical[i - 1] {
                    neg += flow;
                }
            }
            out[t] = match (pos > 0.0, neg > 0.0) {
                (false, false) => 50.0,
                (_, false) => 100.0,
                (false, true) => 0.0,
                (true, true) => 100.0 - 100.0 / (1.0 + pos / neg),
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdLines {
    /// Per-bar money flow volume.
    pub cmfv: Vec<f64>,
    /// Running accumulation/distribution line, restarted after gaps.
    pub ad: Vec<f64>,
}

pub fn accumulation_distribution(high: &[f64], low: &[f64], close: &[f64], volume: &[f64]) -> Result<AdLines> {
    let len = check_lengths(&[high.len(), low.len(), close.len(), volume.len()])?;
    let cmfv: Vec<f64> = (0..len)
        .map(|t| {
            let (h, l, c, v) = (high[t], low[t], close[t], volume[t]);
            if h == l {
                if is_missing(c) || is_missing(v) {
                    MISSING
                } else {
                    0.0
                }
            } else {
                ((c - l) - (h - c)) / (h - l) * v
            }
        })
        .collect();
    let mut ad = vec![MISSING; len];
    for seg in segments(cmfv.iter().map(|v| !is_missing(*v))) {
        let mut acc = 0.0;
        for t in seg {
            acc += cmfv[t];
            ad[t] = acc;
        }
    }
    Ok(AdLines { cmfv, ad })
}

/// Rolling sum of per-bar money flow volume.
pub fn money_flow_volume(cmfv: &[f64], window: usize) -> Result<Vec<f64>> {
    rolling_sum(cmfv, window)
}

/// Rolling `Cov(asset, market) / Var(market)` over `n` observations.
pub fn beta(asset: &[f64], market: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("beta window must be at least 2"));
    }
    let len = check_lengths(&[asset.len(), market.len()])?;
    let mut out = vec![MISSING; len];
    let valid = (0..len).map(|t| !(is_missing(asset[t]) || is_missing(market[t])));
    for seg in segments(valid) {
        if seg.len() < n {
            continue;
        }
        for t in seg.start + n - 1..seg.end {
            let w = t + 1 - n..t + 1;
            out[t] = ols_slope(&market[w.clone()], &asset[w]).unwrap_or(MISSING);
        }
    }
    Ok(out)
}

/// Least-squares slope of `y` on `x`; `None` when `x` has no variance.
pub(crate) fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if sxx <= 1e-24 * scale * scale * n || sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

pub fn medprice(high: &[f64], low: &[f64]) -> Result<Vec<f64>> {
    check_lengths(&[high.len(), low.len()])?;
    Ok(high.iter().zip(low).map(|(h, l)| (h + l) / 2.0).collect())
}

/// Percent change over `window` sessions: `(P_t - P_{t-w}) / P_{t-w} * 100`.
pub fn rate_of_return(close: &[f64], window: usize) -> Result<Vec<f64>> {
    check_period(window, "return window")?;
    Ok((0..close.len())
        .map(|t| {
            if t < window {
                return MISSING;
            }
            let prior = close[t - window];
            if prior == 0.0 {
                MISSING
            } else {
                (close[t] - prior) / prior * 100.0
            }
        })
        .collect())
}

/// Long-horizon return measured against the current price:
/// `(P_t - P_{t-offset}) / P_t * 100`.
pub fn returns_long_horizon(close: &[f64], offset: usize) -> Result<Vec<f64>> {
    check_period(offset, "return offset")?;
    Ok((0..close.len())
        .map(|t| {
            if t < offset || close[t] == 0.0 {
                return MISSING;
            }
            (close[t] - close[t - offset]) / close[t] * 100.0
        })
        .collect())
}

/// Least-squares slope of price against session index over `window` bars.
pub fn trendline(close: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::invalid("trendline window must be at least 2"));
    }
    let x: Vec<f64> = (0..window).map(|i| i as f64).collect();
    Ok(rolling(close, window, |w| {
        ols_slope(&x, w).expect("index axis has variance")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn defined(v: &[f64]) -> Vec<f64> {
        v.iter().copied().filter(|x| !x.is_nan()).collect()
    }

    #[test]
    fn ema_constant_is_fixed_point() {
        let out = ema(&[4.0; 10], 3).unwrap();
        assert!(out[..2].iter().all(|v| v.is_nan()));
        assert!(defined(&out).iter().all(|v| *v == 4.0));
    }

    #[test]
    fn ema_hand_recursion() {
        let out = ema(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!(out[0].is_nan());
        assert_relative_eq!(out[1], 1.5, max_relative = 1e-12);
        assert_relative_eq!(out[2], 2.5, max_relative = 1e-12);
    }

    #[test]
    fn ema_period_one_is_identity() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(ema(&x, 1).unwrap(), x.to_vec());
    }

    #[test]
    fn ema_short_series_all_missing() {
        assert!(ema(&[1.0, 2.0], 3).unwrap().iter().all(|v| v.is_nan()));
        assert!(ema(&[1.0], 0).is_err());
    }

    #[test]
    fn ema_restarts_after_gap() {
        let out = ema(&[1.0, 1.0, f64::NAN, 5.0, 7.0], 2).unwrap();
        assert_eq!(out[1], 1.0);
        assert!(out[2].is_nan() && out[3].is_nan());
        assert_eq!(out[4], 6.0);
    }

    #[test]
    fn atr_flat_is_zero() {
        let p = [5.0; 20];
        let out = atr(&p, &p, &p, 14).unwrap();
        assert!(defined(&out).iter().all(|v| *v == 0.0));
        assert_eq!(defined(&out).len(), 20 - 14);
    }

    #[test]
    fn true_range_one_step() {
        let tr = true_range(&[10.0, 10.0], &[9.0, 8.0], &[9.0, 9.5]).unwrap();
        assert_eq!(tr[1], 2.0);
    }

    #[test]
    fn atr_period_one_is_true_range() {
        let h = [10.0, 11.0, 12.5, 11.0];
        let l = [9.0, 9.5, 10.0, 9.0];
        let c = [9.5, 10.5, 12.0, 9.5];
        let tr = true_range(&h, &l, &c).unwrap();
        let a = atr(&h, &l, &c, 1).unwrap();
        assert!(a[0].is_nan());
        assert_eq!(&a[1..], &tr[1..]);
    }

    #[test]
    fn atr_rejects_misaligned() {
        assert!(atr(&[1.0, 2.0], &[1.0], &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn adx_flat_is_zero() {
        let p = [10.0; 40];
        let lines = adx(&p, &p, &p, 14).unwrap();
        assert!(defined(&lines.dx).iter().all(|v| *v == 0.0));
        assert!(defined(&lines.adx).iter().all(|v| *v == 0.0));
        assert!(!defined(&lines.adx).is_empty());
    }

    #[test]
    fn adx_rising_highs_flat_lows() {
        let h: Vec<f64> = (0..20).map(|t| 10.0 + t as f64).collect();
        let l = vec![5.0; 20];
        let c: Vec<f64> = h.iter().zip(&l).map(|(a, b)| (a + b) / 2.0).collect();
        let lines = adx(&h, &l, &c, 5).unwrap();
        let t = 10;
        assert_eq!(lines.minus_di[t], 0.0);
        assert!(lines.plus_di[t] > 0.0);
        assert_relative_eq!(lines.dx[t], 100.0, max_relative = 1e-12);
        assert_relative_eq!(lines.adx[19], 100.0, max_relative = 1e-12);
    }

    #[test]
    fn adx_seeding_positions() {
        let h: Vec<f64> = (0..40).map(|t| 10.0 + (t as f64 * 0.7).sin()).collect();
        let l: Vec<f64> = h.iter().map(|v| v - 1.0).collect();
        let c: Vec<f64> = h.iter().map(|v| v - 0.4).collect();
        let lines = adx(&h, &l, &c, 14).unwrap();
        // DM starts at 1, smoothed DI at 14, ADX after 14 DX values at 27.
        assert!(lines.dx[13].is_nan() && !lines.dx[14].is_nan());
        assert!(lines.adx[26].is_nan() && !lines.adx[27].is_nan());
    }

    #[test]
    fn macd_constant_is_zero() {
        let lines = apo_ppo_macd(&[50.0; 60], 12, 26, 9).unwrap();
        assert!(defined(&lines.apo).iter().all(|v| *v == 0.0));
        assert!(defined(&lines.ppo).iter().all(|v| *v == 0.0));
        assert!(defined(&lines.macd_signal).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn macd_ramp_is_positive() {
        let ramp: Vec<f64> = (0..40).map(|t| 10.0 + t as f64).collect();
        let lines = apo_ppo_macd(&ramp, 12, 26, 9).unwrap();
        let d = defined(&lines.apo);
        assert_eq!(d.len(), 40 - 25);
        assert!(d.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn macd_requires_fast_below_slow() {
        assert!(apo_ppo_macd(&[1.0; 30], 12, 12, 9).is_err());
    }

    #[test]
    fn cmo_examples() {
        assert_eq!(cmo(&[1.0, 2.0, 3.0, 4.0], 3).unwrap()[3], 100.0);
        let out = cmo(&[1.0, 2.0, 1.0, 2.0], 3).unwrap();
        assert_relative_eq!(out[3], 100.0 / 3.0, max_relative = 1e-12);
        assert_eq!(cmo(&[2.0; 4], 3).unwrap()[3], 0.0);
    }

    #[test]
    fn williams_r_examples() {
        let h = [10.0, 12.0, 11.0];
        let l = [8.0, 9.0, 10.0];
        assert_eq!(williams_r(&h, &l, &[9.0, 10.0, 12.0], 3).unwrap()[2], 0.0);
        assert_eq!(williams_r(&h, &l, &[9.0, 10.0, 8.0], 3).unwrap()[2], -100.0);
        assert_eq!(williams_r(&h, &l, &[9.0, 10.0, 10.0], 3).unwrap()[2], -50.0);
        let flat = [5.0; 3];
        assert_eq!(williams_r(&flat, &flat, &flat, 3).unwrap()[2], 0.0);
    }

    #[test]
    fn mfi_examples() {
        let v = [100.0; 4];
        let up = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mfi(&up, &up, &up, &v, 3).unwrap()[3], 100.0);
        let down = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(mfi(&down, &down, &down, &v, 3).unwrap()[3], 0.0);
        // One up-move and one down-move carrying equal money flow.
        let p = [2.0, 3.0, 2.0];
        let vol = [1.0, 2.0, 3.0];
        assert_relative_eq!(mfi(&p, &p, &p, &vol, 2).unwrap()[2], 50.0, max_relative = 1e-12);
    }

    #[test]
    fn ad_examples() {
        let lines = accumulation_distribution(
            &[10.0, 10.0, 10.0],
            &[8.0, 8.0, 10.0],
            &[10.0, 8.0, 10.0],
            &[100.0, 50.0, 70.0],
        )
        .unwrap();
        assert_eq!(lines.cmfv, vec![100.0, -50.0, 0.0]);
        assert_eq!(lines.ad, vec![100.0, 50.0, 50.0]);
    }

    #[test]
    fn beta_examples() {
        let m: Vec<f64> = (0..30).map(|t| ((t * 7919) % 13) as f64 / 100.0 - 0.06).collect();
        let b = beta(&m, &m, 10).unwrap();
        assert!(defined(&b).iter().all(|v| (v - 1.0).abs() < 1e-12));
        let a2: Vec<f64> = m.iter().map(|v| 2.0 * v).collect();
        let b2 = beta(&a2, &m, 10).unwrap();
        assert!(defined(&b2).iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(beta(&m, &m, 1).is_err());
        assert!(beta(&m, &[0.01; 30], 5).unwrap().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn medprice_examples() {
        assert_eq!(medprice(&[10.0, 7.0], &[8.0, 7.0]).unwrap(), vec![9.0, 7.0]);
    }

    #[test]
    fn returns_examples() {
        let p = [100.0, 105.0, 110.0];
        assert_relative_eq!(rate_of_return(&p, 2).unwrap()[2], 10.0, max_relative = 1e-12);
        assert!(rate_of_return(&[0.0, 1.0], 1).unwrap()[1].is_nan());
        let long = returns_long_horizon(&p, 2).unwrap();
        assert_relative_eq!(long[2], 10.0 / 110.0 * 100.0, max_relative = 1e-12);
    }

    #[test]
    fn trendline_recovers_slope() {
        let line: Vec<f64> = (0..10).map(|t| 3.0 + 0.75 * t as f64).collect();
        let out = trendline(&line, 10).unwrap();
        assert_relative_eq!(out[9], 0.75, max_relative = 1e-12);
    }

    #[test]
    fn segments_split_on_gaps() {
        let s = segments([true, true, false, true].into_iter());
        assert_eq!(s, vec![0..2, 3..4]);
    }
}
