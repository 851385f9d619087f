use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub date: NaiveDate,
    pub symbol: String,
    /// Signed share count: positive buys, negative sells.
    pub shares: i64,
    pub price: f64,
    pub commission: f64,
}

/// Cash, signed share counts per symbol and the prices they are marked at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub date: NaiveDate,
    pub cash: f64,
    pub symbols: Vec<String>,
    pub shares: Vec<i64>,
    /// Last price each position was valued at.
    pub marks: Vec<f64>,
    pub equity: f64,
    pub gross_leverage: f64,
}

impl PortfolioState {
    pub fn new(date: NaiveDate, cash: f64, symbols: Vec<String>) -> Self {
        let n = symbols.len();
        PortfolioState {
            date,
            cash,
            symbols,
            shares: vec![0; n],
            marks: vec![0.0; n],
            equity: cash,
            gross_leverage: 0.0,
        }
    }

    pub fn long_value(&self) -> f64 {
        self.positions()
            .filter(|(_, s, _)| *s > 0)
            .map(|(_, s, m)| s as f64 * m)
            .sum()
    }

    pub fn short_value(&self) -> f64 {
        self.positions()
            .filter(|(_, s, _)| *s < 0)
            .map(|(_, s, m)| s as f64 * m)
            .sum()
    }

    /// Number of symbols with a non-zero position.
    pub fn holdings(&self) -> usize {
        self.shares.iter().filter(|s| **s != 0).count()
    }

    /// (index, shares, mark) of every open position.
    pub fn positions(&self) -> impl Iterator<Item = (usize, i64, f64)> + '_ {
        self.shares
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != 0)
            .map(|(j, s)| (j, *s, self.marks[j]))
    }

    /// Revalues every position whose price is given (non-NaN) and restores
    /// the equity identity.
    pub fn mark(&mut self, date: NaiveDate, prices: impl Iterator<Item = f64>) {
        for (m, p) in self.marks.iter_mut().zip(prices) {
            if p.is_finite() && p > 0.0 {
                *m = p;
            }
        }
        self.date = date;
        self.revalue();
    }

    pub(crate) fn revalue(&mut self) {
        let (mut net, mut gross) = (0.0, 0.0);
        for (_, s, m) in self.positions() {
            let v = s as f64 * m;
            net += v;
            gross += v.abs();
        }
        self.equity = self.cash + net;
        self.gross_leverage = if self.equity > 0.0 {
            gross / self.equity
        } else {
            f64::INFINITY
        };
    }
}

/// Applies fills in order: cash falls by `shares × price + commission`,
/// positions change and are marked at the fill price.
///
/// Fails with the updated state's equity when it ends non-positive.
pub fn apply_fills(mut state: PortfolioState, fills: &[Fill]) -> Result<PortfolioState> {
    for f in fills {
        if !(f.price > 0.0) || !f.price.is_finite() {
            return Err(Error::invalid(format!(
                "fill price {} for {} is not positive",
                f.price, f.symbol
            )));
        }
        let j = state
            .symbols
            .iter()
            .position(|s| *s == f.symbol)
            .ok_or_else(|| Error::invalid(format!("fill for unknown symbol {}", f.symbol)))?;
        state.cash -= f.shares as f64 * f.price + f.commission;
        state.shares[j] += f.shares;
        state.marks[j] = f.price;
        state.date = f.date;
    }
    state.revalue();
    if state.equity <= 0.0 {
        return Err(Error::Degenerate(format!(
            "bankrupt on {}: equity {}",
            state.date, state.equity
        )));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 3, day).unwrap()
    }

    fn fill(day: u32, shares: i64, price: f64, commission: f64) -> Fill {
        Fill {
            date: d(day),
            symbol: "A".into(),
            shares,
            price,
            commission,
        }
    }

    fn fresh(cash: f64) -> PortfolioState {
        PortfolioState::new(d(1), cash, vec!["A".into()])
    }

    #[test]
    fn buy_with_commission() {
        let s = apply_fills(fresh(10_000.0), &[fill(1, 100, 50.0, 100.0)]).unwrap();
        assert_eq!(s.cash, 10_000.0 - 5100.0);
        assert_eq!(s.shares[0], 100);
        assert_eq!(s.equity, 9_900.0);
    }

    #[test]
    fn round_trip_costs_two_commissions() {
        let s = apply_fills(fresh(10_000.0), &[fill(1, 100, 50.0, 1.0), fill(2, -100, 50.0, 1.0)]).unwrap();
        assert_eq!(s.cash, 10_000.0 - 2.0);
        assert_eq!(s.holdings(), 0);
    }

    #[test]
    fn short_then_cover_profit() {
        let s = apply_fills(fresh(10_000.0), &[fill(1, -100, 50.0, 0.0), fill(2, 100, 45.0, 0.0)]).unwrap();
        assert_eq!(s.equity - 10_000.0, 500.0);
    }

    #[test]
    fn long_only_gain() {
        let mut s = apply_fills(fresh(1_000.0), &[fill(1, 10, 100.0, 0.0)]).unwrap();
        s.mark(d(2), [110.0].into_iter());
        assert!((s.equity / 1_000.0 - 1.10).abs() < 1e-15);
        assert!((s.gross_leverage - 1100.0 / 1100.0).abs() < 1e-15);
    }

    #[test]
    fn bankruptcy_is_an_error() {
        let s = apply_fills(fresh(100.0), &[fill(1, -10, 10.0, 0.0)]).unwrap();
        let mut s2 = s.clone();
        s2.mark(d(2), [25.0].into_iter());
        assert!(s2.equity < 0.0);
        assert!(apply_fills(s2, &[fill(2, 10, 25.0, 0.0)]).is_err());
        assert!(apply_fills(s, &[fill(2, 1, 0.0, 0.0)]).is_err());
    }
}
