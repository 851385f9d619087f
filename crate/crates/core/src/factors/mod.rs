//! Factor registry and panel-wide factor computation.
//!
//! The default registry carries 28 technical and fundamental factors with
//! frozen parameters. [`compute_factors`] evaluates a registry over a
//! [`BarSet`] (and optional fundamentals) into a [`FactorMatrix`].

pub mod fundamental;
pub mod indicators;
pub mod standardize;

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{BarSet, Fundamentals, Universe};
use crate::panel::{is_missing, Panel, MISSING};

pub use fundamental::{fundamental_factors, FundamentalRatio};
pub use indicators::*;
pub use standardize::{standardize_cross_section, WinsorLimits};

/// What a registry entry computes, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorKind {
    Adx { period: usize },
    Apo { fast: usize, slow: usize },
    Atr { period: usize },
    AccumulationDistribution,
    Beta { window: usize },
    Cmo { period: usize },
    Macd { fast: usize, slow: usize },
    MacdSignal { fast: usize, slow: usize, signal: usize },
    MedPrice,
    Mfi { period: usize },
    Ppo { fast: usize, slow: usize },
    WilliamsR { period: usize },
    RateOfReturn { window: usize },
    LongHorizonReturn { offset: usize },
    MeanReversion { window: usize },
    Trendline { window: usize },
    VolumeSum { window: usize },
    MoneyFlowVolume { window: usize },
    Fundamental { ratio: FundamentalRatio },
}

impl FactorKind {
    pub fn params(&self) -> Vec<(&'static str, usize)> {
        match *self {
            FactorKind::Adx { period }
            | FactorKind::Atr { period }
            | FactorKind::Cmo { period }
            | FactorKind::Mfi { period }
            | FactorKind::WilliamsR { period } => vec![("period", period)],
            FactorKind::Apo { fast, slow } | FactorKind::Macd { fast, slow } | FactorKind::Ppo { fast, slow } => {
                vec![("fast", fast), ("slow", slow)]
            }
            FactorKind::MacdSignal { fast, slow, signal } => {
                vec![("fast", fast), ("slow", slow), ("signal", signal)]
            }
            FactorKind::Beta { window }
            | FactorKind::RateOfReturn { window }
            | FactorKind::MeanReversion { window }
            | FactorKind::Trendline { window }
            | FactorKind::VolumeSum { window }
            | FactorKind::MoneyFlowVolume { window } => vec![("window", window)],
            FactorKind::LongHorizonReturn { offset } => vec![("offset", offset)],
            FactorKind::Fundamental {
                ratio: FundamentalRatio::AssetGrowth { lag },
            } => vec![("lag", lag)],
            FactorKind::AccumulationDistribution | FactorKind::MedPrice | FactorKind::Fundamental { .. } => vec![],
        }
    }

    pub fn dependencies(&self) -> Vec<String> {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        match self {
            FactorKind::Adx { .. } | FactorKind::Atr { .. } | FactorKind::WilliamsR { .. } => {
                s(&["high", "low", "close"])
            }
            FactorKind::AccumulationDistribution | FactorKind::Mfi { .. } | FactorKind::MoneyFlowVolume { .. } => {
                s(&["high", "low", "close", "volume"])
            }
            FactorKind::Beta { .. } => s(&["close", "market_return"]),
            FactorKind::MedPrice => s(&["high", "low"]),
            FactorKind::VolumeSum { .. } => s(&["volume"]),
            FactorKind::Apo { .. }
            | FactorKind::Cmo { .. }
            | FactorKind::Macd { .. }
            | FactorKind::MacdSignal { .. }
            | FactorKind::Ppo { .. }
            | FactorKind::RateOfReturn { .. }
            | FactorKind::LongHorizonReturn { .. }
            | FactorKind::MeanReversion { .. }
            | FactorKind::Trendline { .. } => s(&["close"]),
            FactorKind::Fundamental { ratio } => {
                let mut d: Vec<String> = ratio.dependencies().iter().map(|f| f.to_string()).collect();
                if matches!(ratio, FundamentalRatio::EbitdaYield) {
                    d.push("close".into());
                }
                d
            }
        }
    }

    /// Longest trailing window the factor reads, in sessions.
    pub fn lookback(&self) -> usize {
        match *self {
            FactorKind::MacdSignal { slow, signal, .. } => slow + signal - 1,
            FactorKind::Adx { period } => 2 * period,
            _ => self.params().iter().map(|(_, v)| *v).max().unwrap_or(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FactorKind,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, kind: FactorKind) -> Self {
        FactorSpec {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered, name-unique list of factor specifications.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorRegistry {
    specs: Vec<FactorSpec>,
}

impl FactorRegistry {
    pub fn new(specs: Vec<FactorSpec>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for spec in &specs {
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::invalid(format!("duplicate factor name `{}`", spec.name)));
            }
            for (param, v) in spec.kind.params() {
                if v == 0 {
                    return Err(Error::invalid(format!(
                        "factor `{}`: {param} must be at least 1",
                        spec.name
                    )));
                }
            }
            match spec.kind {
                FactorKind::Apo { fast, slow }
                | FactorKind::Macd { fast, slow }
                | FactorKind::Ppo { fast, slow }
                | FactorKind::MacdSignal { fast, slow, .. }
                    if fast >= slow =>
                {
                    return Err(Error::invalid(format!(
                        "factor `{}`: fast period must be below slow period",
                        spec.name
                    )));
                }
                FactorKind::Beta { window } | FactorKind::Trendline { window } if window < 2 => {
                    return Err(Error::invalid(format!(
                        "factor `{}`: window must be at least 2",
                        spec.name
                    )));
                }
                _ => {}
            }
        }
        Ok(FactorRegistry { specs })
    }

    pub fn specs(&self) -> &[FactorSpec] {
        &self.specs
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&FactorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Registry restricted to `names`, keeping registry order.
    pub fn subset(&self, names: &[&str]) -> Result<FactorRegistry> {
        for n in names {
            if self.get(n).is_none() {
                return Err(Error::invalid(format!("unknown factor `{n}`")));
            }
        }
        FactorRegistry::new(
            self.specs
                .iter()
                .filter(|s| names.contains(&s.name.as_str()))
                .cloned()
                .collect(),
        )
    }

    pub fn max_lookback(&self) -> usize {
        self.specs.iter().map(|s| s.kind.lookback()).max().unwrap_or(0)
    }
}

impl Default for FactorRegistry {
    fn default() -> Self {
        use FactorKind::*;
        use FundamentalRatio as R;
        let specs = vec![
            FactorSpec::new("adx", Adx { period: 14 }),
            FactorSpec::new("apo", Apo { fast: 12, slow: 26 }),
            FactorSpec::new("atr", Atr { period: 14 }),
            FactorSpec::new("ad", AccumulationDistribution),
            FactorSpec::new("beta", Beta { window: 63 }),
            FactorSpec::new("cmo", Cmo { period: 14 }),
            FactorSpec::new("macd", Macd { fast: 12, slow: 26 }),
            FactorSpec::new(
                "macd_signal",
                MacdSignal {
                    fast: 12,
                    slow: 26,
                    signal: 9,
                },
            ),
            FactorSpec::new("medprice", MedPrice),
            FactorSpec::new("mfi", Mfi { period: 14 }),
            FactorSpec::new("ppo", Ppo { fast: 12, slow: 26 }),
            FactorSpec::new("williams_r", WilliamsR { period: 10 }),
            FactorSpec::new("returns_1m", RateOfReturn { window: 21 }),
            FactorSpec::new("returns_3m", RateOfReturn { window: 63 }),
            FactorSpec::new("returns_39w", LongHorizonReturn { offset: 215 }),
            FactorSpec::new("mean_reversion_1m", MeanReversion { window: 21 }),
            FactorSpec::new("trendline", Trendline { window: 21 }),
            FactorSpec::new("volume_22d", VolumeSum { window: 22 }),
            FactorSpec::new("money_flow_volume", MoneyFlowVolume { window: 21 }),
            FactorSpec::new(
                "asset_to_equity",
                Fundamental {
                    ratio: R::AssetToEquity,
                },
            ),
            FactorSpec::new(
                "capex_to_cashflow",
                Fundamental {
                    ratio: R::CapexToCashflow,
                },
            ),
            FactorSpec::new(
                "asset_growth_3m",
                Fundamental {
                    ratio: R::AssetGrowth { lag: 63 },
                },
            ),
            FactorSpec::new("ebit_to_assets", Fundamental { ratio: R::EbitToAssets }),
            FactorSpec::new("ebitda_yield", Fundamental { ratio: R::EbitdaYield }),
            FactorSpec::new("roic", Fundamental { ratio: R::Roic }),
            FactorSpec::new("ocf_to_assets", Fundamental { ratio: R::OcfToAssets }),
            FactorSpec::new(
                "operating_ratio",
                Fundamental {
                    ratio: R::OperatingRatio,
                },
            ),
            FactorSpec::new(
                "earnings_quality",
                Fundamental {
                    ratio: R::EarningsQuality,
                },
            ),
        ];
        FactorRegistry::new(specs).expect("default registry is valid")
    }
}

/// One panel per factor, all on the same date × symbol grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    names: Vec<String>,
    panels: Vec<Panel>,
}

impl FactorMatrix {
    pub fn new(entries: Vec<(String, Panel)>) -> Result<Self> {
        let (names, panels): (Vec<String>, Vec<Panel>) = entries.into_iter().unzip();
        if let Some(first) = panels.first() {
            if panels.iter().any(|p| !p.same_axes(first)) {
                return Err(Error::Malformed("factor panels must share date and symbol axes".into()));
            }
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Malformed("duplicate factor names".into()));
        }
        Ok(FactorMatrix { names, panels })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn panel(&self, i: usize) -> &Panel {
        &self.panels[i]
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn get(&self, name: &str) -> Option<&Panel> {
        self.names.iter().position(|n| n == name).map(|i| &self.panels[i])
    }

    pub fn dates(&self) -> &[chrono::NaiveDate] {
        self.panels.first().map(|p| p.dates()).unwrap_or(&[])
    }

    pub fn symbols(&self) -> &[String] {
        self.panels.first().map(|p| p.symbols()).unwrap_or(&[])
    }

    /// Masks cells outside `universe` (when given), then z-scores every
    /// factor cross-sectionally.
    pub fn standardized(&self, universe: Option<&Universe>, limits: WinsorLimits) -> Result<FactorMatrix> {
        let mut panels = Vec::with_capacity(self.len());
        for p in &self.panels {
            let mut masked = p.clone();
            if let Some(u) = universe {
                for t in 0..masked.n_dates() {
                    for j in 0..masked.n_symbols() {
                        if !u.contains(t, j) {
                            masked.set(t, j, MISSING);
                        }
                    }
                }
            }
            panels.push(standardize_cross_section(&masked, limits)?);
        }
        Ok(FactorMatrix {
            names: self.names.clone(),
            panels,
        })
    }

    /// Long format `date,symbol,factor,value`, defined cells only.
    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "symbol", "factor", "value"])?;
        let dates = self.dates().to_vec();
        let symbols = self.symbols().to_vec();
        for (t, date) in dates.iter().enumerate() {
            let ds = date.to_string();
            for (j, sym) in symbols.iter().enumerate() {
                for (name, p) in self.names.iter().zip(&self.panels) {
                    let v = p.get(t, j);
                    if !is_missing(v) {
                        w.write_record([ds.as_str(), sym, name, &v.to_string()])?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::io("<factor writer>", e))?;
        Ok(())
    }
}

/// Equal-weighted mean of the symbols' close-to-close returns per date.
pub fn market_returns(close: &Panel) -> Vec<f64> {
    let mut out = vec![MISSING; close.n_dates()];
    for t in 1..close.n_dates() {
        let (mut sum, mut n) = (0.0, 0usize);
        for j in 0..close.n_symbols() {
            let (a, b) = (close.get(t - 1, j), close.get(t, j));
            if !is_missing(a) && !is_missing(b) && a != 0.0 {
                sum += b / a - 1.0;
                n += 1;
            }
        }
        if n > 0 {
            out[t] = sum / n as f64;
        }
    }
    out
}

/// Simple returns of one series; missing at the first index.
pub fn simple_returns(series: &[f64]) -> Vec<f64> {
    let mut out = vec![MISSING; series.len()];
    for t in 1..series.len() {
        if series[t - 1] != 0.0 {
            out[t] = series[t] / series[t - 1] - 1.0;
        }
    }
    out
}

/// Cross-sectional z-score of the trailing `window`-session return.
pub fn mean_reversion(close: &Panel, window: usize) -> Result<Panel> {
    let trailing = {
        let mut err = None;
        let p = close.map_columns(|c| match rate_of_return(c, window) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                vec![MISSING; c.len()]
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        p
    };
    standardize_cross_section(&trailing, WinsorLimits::NONE)
}

fn per_symbol<F>(bars: &BarSet, mut f: F) -> Result<Panel>
where
    F: FnMut(&[f64], &[f64], &[f64], &[f64], &[f64], usize) -> Result<Vec<f64>>,
{
    let mut cols = Vec::with_capacity(bars.symbols().len());
    for j in 0..bars.symbols().len() {
        cols.push(f(
            &bars.open.column(j),
            &bars.high.column(j),
            &bars.low.column(j),
            &bars.close.column(j),
            &bars.volume.column(j),
            j,
        )?);
    }
    Panel::from_columns(bars.dates().to_vec(), bars.symbols().to_vec(), &cols)
}

fn technical(bars: &BarSet, kind: FactorKind, market: &[f64]) -> Result<Panel> {
    use FactorKind::*;
    match kind {
        Adx { period } => per_symbol(bars, |_, h, l, c, _, _| Ok(adx(h, l, c, period)?.adx)),
        Apo { fast, slow } | Macd { fast, slow } => {
            per_symbol(bars, |_, _, _, c, _, _| Ok(apo_ppo_macd(c, fast, slow, 1)?.apo))
        }
        Ppo { fast, slow } => per_symbol(bars, |_, _, _, c, _, _| Ok(apo_ppo_macd(c, fast, slow, 1)?.ppo)),
        MacdSignal { fast, slow, signal } => per_symbol(bars, |_, _, _, c, _, _| {
            Ok(apo_ppo_macd(c, fast, slow, signal)?.macd_signal)
        }),
        Atr { period } => per_symbol(bars, |_, h, l, c, _, _| atr(h, l, c, period)),
        AccumulationDistribution => per_symbol(bars, |_, h, l, c, v, _| Ok(accumulation_distribution(h, l, c, v)?.ad)),
        MoneyFlowVolume { window } => per_symbol(bars, |_, h, l, c, v, _| {
            money_flow_volume(&accumulation_distribution(h, l, c, v)?.cmfv, window)
        }),
        Beta { window } => per_symbol(bars, |_, _, _, c, _, _| beta(&simple_returns(c), market, window)),
        Cmo { period } => per_symbol(bars, |_, _, _, c, _, _| cmo(c, period)),
        MedPrice => per_symbol(bars, |_, h, l, _, _, _| medprice(h, l)),
        Mfi { period } => per_symbol(bars, |_, h, l, c, v, _| mfi(h, l, c, v, period)),
        WilliamsR { period } => per_symbol(bars, |_, h, l, c, _, _| williams_r(h, l, c, period)),
        RateOfReturn { window } => per_symbol(bars, |_, _, _, c, _, _| rate_of_return(c, window)),
        LongHorizonReturn { offset } => per_symbol(bars, |_, _, _, c, _, _| returns_long_horizon(c, offset)),
        MeanReversion { window } => mean_reversion(&bars.close, window),
        Trendline { window } => per_symbol(bars, |_, _, _, c, _, _| trendline(c, window)),
        VolumeSum { window } => per_symbol(bars, |_, _, _, _, v, _| rolling_sum(v, window)),
        Fundamental { .. } => unreachable!("fundamental factors are handled separately"),
    }
}

/// Evaluates every registry entry. Fundamental factors are all-missing when
/// no fundamentals are supplied.
pub fn compute_factors(
    bars: &BarSet,
    fundamentals: Option<&Fundamentals>,
    registry: &FactorRegistry,
) -> Result<FactorMatrix> {
    let market = market_returns(&bars.close);
    let empty = Fundamentals::default();
    let mut inputs = fundamental::FundamentalInputs::new(fundamentals.unwrap_or(&empty), &bars.close);
    let mut entries = Vec::with_capacity(registry.len());
    for spec in registry.specs() {
        let panel = match spec.kind {
            FactorKind::Fundamental { ratio } => inputs.compute(ratio),
            kind => technical(bars, kind, &market)?,
        };
        entries.push((spec.name.clone(), panel));
    }
    FactorMatrix::new(entries)
}
