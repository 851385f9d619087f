//! Seeded synthetic market with a planted cross-sectional signal.
//!
//! Each symbol carries a latent score `z` following a persistent AR(1).
//! The idiosyncratic part of the close-to-close return on day `t` is
//! `sigma·(s·z[t-1] + sqrt(1 - s²)·e)`, so `s` (the signal strength) is the
//! correlation between today's score and tomorrow's idiosyncratic return.
//! Overnight gaps carry noise only. Weekly fundamentals are built so that
//! several ratios (cash flow to assets, ROIC, EBIT to assets, operating
//! ratio) are noisy views of `z`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{BarSet, FundamentalField as F, Fundamentals, FundamentalsRow};
use crate::panel::Panel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_symbols: usize,
    pub n_days: usize,
    pub signal_strength: f64,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    /// AR(1) coefficient of the latent score.
    #[serde(default = "default_persistence")]
    pub persistence: f64,
    /// Daily idiosyncratic volatility.
    #[serde(default = "default_idio_vol")]
    pub idio_vol: f64,
    /// Daily volatility of the common market factor.
    #[serde(default = "default_market_vol")]
    pub market_vol: f64,
    /// Standard deviation of the noise added to `z` in each fundamental view.
    #[serde(default = "default_view_noise")]
    pub view_noise: f64,
    /// Sessions between fundamentals publications.
    #[serde(default = "default_publish_every")]
    pub publish_every: usize,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date")
}
fn default_persistence() -> f64 {
    0.95
}
fn default_idio_vol() -> f64 {
    0.02
}
fn default_market_vol() -> f64 {
    0.01
}
fn default_view_noise() -> f64 {
    1.0
}
fn default_publish_every() -> usize {
    5
}

impl SynthConfig {
    pub fn new(n_symbols: usize, n_days: usize, signal_strength: f64, seed: u64) -> Self {
        SynthConfig {
            n_symbols,
            n_days,
            signal_strength,
            seed,
            start: default_start(),
            persistence: default_persistence(),
            idio_vol: default_idio_vol(),
            market_vol: default_market_vol(),
            view_noise: default_view_noise(),
            publish_every: default_publish_every(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_symbols < 10 {
            return Err(Error::invalid("synthetic market needs at least 10 symbols"));
        }
        if self.n_days < 300 {
            return Err(Error::invalid("synthetic market needs at least 300 days"));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::invalid("signal strength must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(Error::invalid("persistence must be in [0, 1)"));
        }
        if !(self.idio_vol > 0.0 && self.market_vol >= 0.0 && self.view_noise >= 0.0) {
            return Err(Error::invalid("volatilities must be positive"));
        }
        if self.publish_every == 0 {
            return Err(Error::invalid("publish_every must be at least 1"));
        }
        Ok(())
    }
}

/// Weekday calendar of `n` sessions starting on or after `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMarket {
    pub bars: BarSet,
    pub fundamentals: Fundamentals,
    /// Latent score known at each date's close.
    pub latent: Panel,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthMarket> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, k) = (cfg.n_days, cfg.n_symbols);
    let dates = business_days(cfg.start, n);
    let symbols: Vec<String> = (0..k).map(|j| format!("S{j:03}")).collect();
    let s = cfg.signal_strength;
    let resid = (1.0 - s * s).sqrt();
    let innov = (1.0 - cfg.persistence * cfg.persistence).sqrt();

    let grid = vec![vec![0.0; n]; k];
    let (mut open, mut high, mut low) = (grid.clone(), grid.clone(), grid.clone());
    let (mut close, mut volume, mut latent) = (grid.clone(), grid.clone(), grid);

    let mut z: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
    let mut price: Vec<f64> = (0..k).map(|_| rng.gen_range(20.0..200.0)).collect();
    let base_volume: Vec<f64> = (0..k).map(|_| rng.gen_range(11.0..14.0)).collect();
    let assets: Vec<f64> = (0..k).map(|_| 1e3 * (1.0 + 9.0 * rng.gen::<f64>())).collect();
    let shares: Vec<f64> = (0..k).map(|j| (assets[j] * 1e4 / price[j]).round()).collect();
    let mut fundamentals = Fundamentals::default();

    for t in 0..n {
        let market = if t == 0 {
            0.0
        } else {
            0.0002 + cfg.market_vol * normal(&mut rng)
        };
        for j in 0..k {
            let prev = price[j];
            let (o, c) = if t == 0 {
                (prev, prev)
            } else {
                let idio = cfg.idio_vol * (s * z[j] + resid * normal(&mut rng));
                let ret = (market + idio).max(-0.5);
                let c = prev * (1.0 + ret);
                let gap = 0.25 * cfg.idio_vol * normal(&mut rng);
                (prev * gap.exp(), c)
            };
            let wick = 0.3 * cfg.idio_vol;
            let h = o.max(c) * (1.0 + wick * normal(&mut rng).abs());
            let l = o.min(c) * (1.0 - wick * normal(&mut rng).abs()).max(0.5);
            let v = (base_volume[j] + 0.3 * normal(&mut rng)).exp().round();
            open[j][t] = round4(o);
            close[j][t] = round4(c);
            high[j][t] = round4(h);
            low[j][t] = round4(l);
            volume[j][t] = v;
            price[j] = c;
        }
        // The latent score moves after the day's returns are realised.
        for zj in z.iter_mut() {
            *zj = cfg.persistence * *zj + innov * normal(&mut rng);
        }
        for j in 0..k {
            latent[j][t] = z[j];
        }
        if t % cfg.publish_every == 0 {
            for j in 0..k {
                publish(
                    &mut fundamentals,
                    &mut rng,
                    cfg,
                    dates[t],
                    &symbols[j],
                    z[j],
                    assets[j],
                    shares[j],
                );
            }
        }
    }

    let panel = |c: &[Vec<f64>]| Panel::from_columns(dates.clone(), symbols.clone(), c);
    Ok(SynthMarket {
        bars: BarSet {
            open: panel(&open)?,
            high: panel(&high)?,
            low: panel(&low)?,
            close: panel(&close)?,
            volume: panel(&volume)?,
        },
        fundamentals,
        latent: panel(&latent)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn publish(
    out: &mut Fundamentals,
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    date: NaiveDate,
    symbol: &str,
    z: f64,
    assets: f64,
    shares: f64,
) {
    let mut view = || z + cfg.view_noise * normal(rng);
    let a = assets * (1.0 + 0.01 * view());
    let ocf = a * (0.06 + 0.02 * view());
    let invested = 0.6 * a;
    let nopat = invested * (0.08 + 0.02 * view());
    let revenue = 0.5 * a;
    let cogs = 0.3 * revenue;
    let opex = revenue * (0.5 - 0.05 * view());
    let ebit = revenue - cogs - opex;
    let interest = 0.01 * a;
    let taxes = 0.2 * (ebit - interest).max(0.0);
    let net_income = ebit - interest - taxes;
    let equity = 0.5 * a;
    let capex = 0.03 * a;
    let ebitda = ebit + 0.02 * a;
    let values = [
        (F::TotalAssets, a),
        (F::TotalLiabilities, a - equity),
        (F::ShareholdersEquity, equity),
        (F::OperatingCashFlow, ocf),
        (F::CapitalExpenditure, capex),
        (F::Revenue, revenue),
        (F::Cogs, cogs),
        (F::OperatingExpenses, opex),
        (F::NetIncome, net_income),
        (F::Interest, interest),
        (F::Taxes, taxes),
        (F::Nopat, nopat),
        (F::InvestedCapital, invested),
        (F::Ebitda, ebitda),
        (F::SharesOutstanding, shares),
    ];
    for (field, value) in values {
        out.insert(FundamentalsRow {
            date,
            symbol: symbol.to_string(),
            field,
            value: round4(value),
        });
    }
}

impl SynthMarket {
    /// Writes `bars.csv`, `fundamentals.csv` and `latent.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            fs::File::create(&p).map_err(|e| Error::io(p, e))
        };
        self.bars.write_csv(create("bars.csv")?)?;
        self.fundamentals.write_csv(create("fundamentals.csv")?)?;
        write_latent(&self.latent, create("latent.csv")?)?;
        Ok(())
    }
}

/// `date,symbol,latent`
pub fn write_latent<W: std::io::Write>(latent: &Panel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "symbol", "latent"])?;
    for (t, d) in latent.dates().iter().enumerate() {
        for (j, s) in latent.symbols().iter().enumerate() {
            w.write_record([d.to_string(), s.clone(), latent.get(t, j).to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<latent writer>", e))?;
    Ok(())
}

/// Reads a `date,symbol,latent` file back into a panel.
pub fn read_latent(path: &Path) -> Result<Panel> {
    let mut r = csv::Reader::from_path(path)?;
    let mut cells: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let date = crate::market_data::parse_date(&rec[0]).map_err(Error::Malformed)?;
        let v: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::Malformed(format!("bad latent value `{}`", &rec[2])))?;
        cells.insert((date, rec[1].to_string()), v);
    }
    let mut dates: Vec<NaiveDate> = cells.keys().map(|(d, _)| *d).collect();
    dates.dedup();
    let mut symbols: Vec<String> = cells.keys().map(|(_, s)| s.clone()).collect();
    symbols.sort();
    symbols.dedup();
    let mut p = Panel::missing(dates, symbols)?;
    for ((d, s), v) in cells {
        let (t, j) = (p.date_index(d).unwrap(), p.symbol_index(&s).unwrap());
        p.set(t, j, v);
    }
    Ok(p)
}
