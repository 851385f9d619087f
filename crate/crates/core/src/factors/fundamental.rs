//! Ratios built from as-of joined fundamentals.

use std::collections::BTreeMap;

use crate::market_data::{FundamentalField as F, Fundamentals};
use crate::panel::{is_missing, Panel, MISSING};

/// Which fundamental ratio to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FundamentalRatio {
    AssetToEquity,
    CapexToCashflow,
    /// Percent change of total assets over `lag` sessions.
    AssetGrowth {
        lag: usize,
    },
    Ebit,
    EbitToAssets,
    EbitdaYield,
    Roic,
    OcfToAssets,
    OperatingRatio,
    EarningsQuality,
}

impl FundamentalRatio {
    pub fn dependencies(self) -> Vec<F> {
        match self {
            FundamentalRatio::AssetToEquity => vec![F::TotalAssets, F::ShareholdersEquity],
            FundamentalRatio::CapexToCashflow => vec![F::OperatingCashFlow, F::CapitalExpenditure],
            FundamentalRatio::AssetGrowth { .. } => vec![F::TotalAssets],
            FundamentalRatio::Ebit => vec![
                F::Revenue,
                F::Cogs,
                F::OperatingExpenses,
                F::NetIncome,
                F::Interest,
                F::Taxes,
            ],
            FundamentalRatio::EbitToAssets => {
                let mut d = FundamentalRatio::Ebit.dependencies();
                d.push(F::TotalAssets);
                d
            }
            FundamentalRatio::EbitdaYield => vec![F::Ebitda, F::SharesOutstanding],
            FundamentalRatio::Roic => vec![F::Nopat, F::InvestedCapital],
            FundamentalRatio::OcfToAssets => vec![F::OperatingCashFlow, F::TotalAssets],
            FundamentalRatio::OperatingRatio => {
                vec![F::OperatingExpenses, F::Cogs, F::Revenue]
            }
            FundamentalRatio::EarningsQuality => vec![F::OperatingCashFlow, F::NetIncome],
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if is_missing(num) || is_missing(den) || den == 0.0 {
        MISSING
    } else {
        num / den
    }
}

/// Lazily as-of joins fundamentals fields onto the price grid.
pub struct FundamentalInputs<'a> {
    fundamentals: &'a Fundamentals,
    close: &'a Panel,
    cache: BTreeMap<F, Panel>,
}

impl<'a> FundamentalInputs<'a> {
    pub fn new(fundamentals: &'a Fundamentals, close: &'a Panel) -> Self {
        FundamentalInputs {
            fundamentals,
            close,
            cache: BTreeMap::new(),
        }
    }

    fn field(&mut self, field: F) -> &Panel {
        let (fundamentals, close) = (self.fundamentals, self.close);
        self.cache
            .entry(field)
            .or_insert_with(|| fundamentals.as_of_panel(field, close.dates(), close.symbols()))
    }

    fn combine<G: Fn(&[f64]) -> f64>(&mut self, fields: &[F], g: G) -> Panel {
        let panels: Vec<Panel> = fields.iter().map(|f| self.field(*f).clone()).collect();
        let mut out = self.close.missing_like();
        let mut args = vec![0.0; fields.len()];
        for t in 0..out.n_dates() {
            for j in 0..out.n_symbols() {
                for (k, p) in panels.iter().enumerate() {
                    args[k] = p.get(t, j);
                }
                out.set(t, j, g(&args));
            }
        }
        out
    }

    /// `R - COGS - OE`, falling back to `NI + I + T` where any of the
    /// primary inputs is absent.
    fn ebit(&mut self) -> Panel {
        self.combine(
            &[
                F::Revenue,
                F::Cogs,
                F::OperatingExpenses,
                F::NetIncome,
                F::Interest,
                F::Taxes,
            ],
            |a| {
                let primary = a[0] - a[1] - a[2];
                if !is_missing(primary) {
                    primary
                } else {
                    a[3] + a[4] + a[5]
                }
            },
        )
    }

    pub fn compute(&mut self, which: FundamentalRatio) -> Panel {
        match which {
            FundamentalRatio::AssetToEquity => {
                self.combine(&[F::TotalAssets, F::ShareholdersEquity], |a| ratio(a[0], a[1]))
            }
            FundamentalRatio::CapexToCashflow => {
                self.combine(&[F::OperatingCashFlow, F::CapitalExpenditure], |a| ratio(a[0], a[1]))
            }
            FundamentalRatio::AssetGrowth { lag } => {
                let assets = self.field(F::TotalAssets).clone();
                let mut out = assets.missing_like();
                for t in lag..assets.n_dates() {
                    for j in 0..assets.n_symbols() {
                        let prior = assets.get(t - lag, j);
                        let g = ratio(assets.get(t, j) - prior, prior) * 100.0;
                        out.set(t, j, g);
                    }
                }
                out
            }
            FundamentalRatio::Ebit => self.ebit(),
            FundamentalRatio::EbitToAssets => {
                let ebit = self.ebit();
                let assets = self.field(F::TotalAssets);
                ebit.zip_map(assets, ratio).expect("same grid")
            }
            FundamentalRatio::EbitdaYield => {
                let close = self.close.clone();
                let shares = self.field(F::SharesOutstanding).clone();
                let market_value = close.zip_map(&shares, |c, s| c * s).expect("same grid");
                self.field(F::Ebitda).zip_map(&market_value, ratio).expect("same grid")
            }
            FundamentalRatio::Roic => self.combine(&[F::Nopat, F::InvestedCapital], |a| ratio(a[0], a[1])),
            FundamentalRatio::OcfToAssets => {
                self.combine(&[F::OperatingCashFlow, F::TotalAssets], |a| ratio(a[0], a[1]))
            }
            FundamentalRatio::OperatingRatio => self.combine(&[F::OperatingExpenses, F::Cogs, F::Revenue], |a| {
                ratio(a[0] + a[1], a[2])
            }),
            FundamentalRatio::EarningsQuality => {
                self.combine(&[F::OperatingCashFlow, F::NetIncome], |a| ratio(a[0], a[1]))
            }
        }
    }
}

/// Computes `ratios` over the close panel's grid.
pub fn fundamental_factors(
    fundamentals: &Fundamentals,
    close: &Panel,
    ratios: &[(String, FundamentalRatio)],
) -> Vec<(String, Panel)> {
    let mut inputs = FundamentalInputs::new(fundamentals, close);
    ratios
        .iter()
        .map(|(name, r)| (name.clone(), inputs.compute(*r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::FundamentalsRow;
    use chrono::NaiveDate;

    fn grid(days: u32) -> Panel {
        let dates = (1..=days)
            .map(|d| NaiveDate::from_ymd_opt(2020, 1, d).unwrap())
            .collect::<Vec<_>>();
        let n = dates.len();
        Panel::from_columns(dates, vec!["A".into()], &[vec![10.0; n]]).unwrap()
    }

    fn fund(rows: &[(u32, F, f64)]) -> Fundamentals {
        let mut f = Fundamentals::default();
        for (d, field, v) in rows {
            f.insert(FundamentalsRow {
                date: NaiveDate::from_ymd_opt(2020, 1, *d).unwrap(),
                symbol: "A".into(),
                field: *field,
                value: *v,
            });
        }
        f
    }

    #[test]
    fn ebit_from_revenue_lines() {
        let f = fund(&[
            (1, F::Revenue, 100.0),
            (1, F::Cogs, 40.0),
            (1, F::OperatingExpenses, 20.0),
        ]);
        let close = grid(2);
        let e = FundamentalInputs::new(&f, &close).compute(FundamentalRatio::Ebit);
        assert_eq!(e.get(1, 0), 40.0);
    }

    #[test]
    fn ebit_falls_back_to_income_lines() {
        let f = fund(&[(1, F::NetIncome, 25.0), (1, F::Interest, 5.0), (1, F::Taxes, 10.0)]);
        let close = grid(1);
        let e = FundamentalInputs::new(&f, &close).compute(FundamentalRatio::Ebit);
        assert_eq!(e.get(0, 0), 40.0);
    }

    #[test]
    fn roic_plug_in() {
        let f = fund(&[(1, F::Nopat, 10.0), (1, F::InvestedCapital, 100.0)]);
        let close = grid(1);
        let r = FundamentalInputs::new(&f, &close).compute(FundamentalRatio::Roic);
        assert_eq!(r.get(0, 0), 0.1);
    }

    #[test]
    fn asset_growth_is_current_minus_prior_over_prior() {
        let f = fund(&[(1, F::TotalAssets, 100.0), (4, F::TotalAssets, 150.0)]);
        let close = grid(5);
        let g = FundamentalInputs::new(&f, &close).compute(FundamentalRatio::AssetGrowth { lag: 3 });
        assert!(g.get(2, 0).is_nan());
        assert_eq!(g.get(3, 0), 50.0);
        assert_eq!(g.get(4, 0), 50.0);
    }

    #[test]
    fn zero_denominator_and_absent_fields_are_missing() {
        let f = fund(&[(1, F::TotalAssets, 100.0), (1, F::ShareholdersEquity, 0.0)]);
        let close = grid(1);
        let mut inputs = FundamentalInputs::new(&f, &close);
        assert!(inputs.compute(FundamentalRatio::AssetToEquity).get(0, 0).is_nan());
        assert!(inputs.compute(FundamentalRatio::EbitdaYield).get(0, 0).is_nan());
    }

    #[test]
    fn ebitda_yield_uses_market_value() {
        let f = fund(&[(1, F::Ebitda, 50.0), (1, F::SharesOutstanding, 100.0)]);
        let close = grid(1);
        let y = FundamentalInputs::new(&f, &close).compute(FundamentalRatio::EbitdaYield);
        assert_eq!(y.get(0, 0), 0.05);
    }

    #[test]
    fn operating_ratio_and_quality() {
        let f = fund(&[
            (1, F::Revenue, 200.0),
            (1, F::Cogs, 80.0),
            (1, F::OperatingExpenses, 40.0),
            (1, F::OperatingCashFlow, 30.0),
            (1, F::NetIncome, 20.0),
        ]);
        let close = grid(1);
        let mut inputs = FundamentalInputs::new(&f, &close);
        assert_eq!(inputs.compute(FundamentalRatio::OperatingRatio).get(0, 0), 0.6);
        assert_eq!(inputs.compute(FundamentalRatio::EarningsQuality).get(0, 0), 1.5);
    }
}
