//! Daily bar and fundamentals ingestion, and tradable-universe construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{is_missing, Panel, MISSING};

/// One daily OHLCV observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Checks price positivity, integral non-negative volume and the
    /// high/low envelope.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be a positive finite price, got {v}"));
            }
        }
        if !(self.volume.is_finite() && self.volume >= 0.0 && self.volume.fract() == 0.0) {
            return Err(format!("volume must be a non-negative integer, got {}", self.volume));
        }
        if self.low > self.high {
            return Err(format!("low {} above high {}", self.low, self.high));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} above min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }
}

/// Column names used to read a bar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarSchema {
    pub date: String,
    pub symbol: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
}

impl Default for BarSchema {
    fn default() -> Self {
        BarSchema {
            date: "date".into(),
            symbol: "symbol".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
        }
    }
}

/// Row-level outcome of an ingestion pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub duplicates: usize,
    pub diagnostics: Vec<String>,
}

/// Aligned OHLCV panels for a set of symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSet {
    pub open: Panel,
    pub high: Panel,
    pub low: Panel,
    pub close: Panel,
    pub volume: Panel,
}

impl BarSet {
    /// Builds panels from bars keyed by `(date, symbol)`; axes are the
    /// sorted union of dates and symbols.
    pub fn from_bars(bars: &BTreeMap<(NaiveDate, String), Bar>) -> Result<BarSet> {
        let dates: Vec<NaiveDate> = bars
            .keys()
            .map(|(d, _)| *d)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let symbols: Vec<String> = bars
            .keys()
            .map(|(_, s)| s.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let empty = Panel::missing(dates.clone(), symbols.clone())?;
        let mut set = BarSet {
            open: empty.clone(),
            high: empty.clone(),
            low: empty.clone(),
            close: empty.clone(),
            volume: empty,
        };
        let sym_index: BTreeMap<&str, usize> = symbols.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
        let mut t = 0;
        for ((date, symbol), bar) in bars {
            while dates[t] != *date {
                t += 1;
            }
            let j = sym_index[symbol.as_str()];
            set.open.set(t, j, bar.open);
            set.high.set(t, j, bar.high);
            set.low.set(t, j, bar.low);
            set.close.set(t, j, bar.close);
            set.volume.set(t, j, bar.volume);
        }
        Ok(set)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        self.close.dates()
    }

    pub fn symbols(&self) -> &[String] {
        self.close.symbols()
    }

    pub fn bar(&self, t: usize, j: usize) -> Option<Bar> {
        let close = self.close.get(t, j);
        if is_missing(close) {
            return None;
        }
        Some(Bar {
            date: self.dates()[t],
            open: self.open.get(t, j),
            high: self.high.get(t, j),
            low: self.low.get(t, j),
            close,
            volume: self.volume.get(t, j),
        })
    }

    pub fn dollar_volume(&self) -> Panel {
        self.close
            .zip_map(&self.volume, |c, v| c * v)
            .expect("bar panels share axes")
    }

    /// Writes every present bar in `date,symbol,open,high,low,close,volume`
    /// order, sorted by date then symbol.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "symbol", "open", "high", "low", "close", "volume"])?;
        for t in 0..self.dates().len() {
            for (j, sym) in self.symbols().iter().enumerate() {
                if let Some(bar) = self.bar(t, j) {
                    w.write_record([
                        bar.date.to_string(),
                        sym.clone(),
                        bar.open.to_string(),
                        bar.high.to_string(),
                        bar.low.to_string(),
                        bar.close.to_string(),
                        format!("{}", bar.volume as u64),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<bars writer>", e))?;
        Ok(())
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Malformed(format!("missing required column `{name}`")))
}

pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

fn parse_num(s: &str, what: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("bad {what} `{s}`"))
}

/// Reads a bar CSV.
///
/// Structural problems (unreadable file, missing columns) are hard errors;
/// rows that fail to parse or violate [`Bar::validate`] are skipped and
/// counted. Duplicate `(date, symbol)` rows keep the last occurrence.
pub fn ingest_bars(path: impl AsRef<Path>, schema: &BarSchema) -> Result<(BarSet, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_bars_from_reader(file, schema)
}

pub fn ingest_bars_from_reader<R: Read>(reader: R, schema: &BarSchema) -> Result<(BarSet, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = [
        header_index(&headers, &schema.date)?,
        header_index(&headers, &schema.symbol)?,
        header_index(&headers, &schema.open)?,
        header_index(&headers, &schema.high)?,
        header_index(&headers, &schema.low)?,
        header_index(&headers, &schema.close)?,
        header_index(&headers, &schema.volume)?,
    ];

    let mut report = IngestReport::default();
    let mut bars: BTreeMap<(NaiveDate, String), Bar> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.rejected += 1;
                report.diagnostics.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let parsed = (|| -> std::result::Result<(String, Bar), String> {
            let field = |k: usize| rec.get(cols[k]).ok_or_else(|| "short row".to_string());
            let date = parse_date(field(0)?)?;
            let symbol = field(1)?.trim().to_string();
            if symbol.is_empty() {
                return Err("empty symbol".into());
            }
            let bar = Bar {
                date,
                open: parse_num(field(2)?, "open")?,
                high: parse_num(field(3)?, "high")?,
                low: parse_num(field(4)?, "low")?,
                close: parse_num(field(5)?, "close")?,
                volume: parse_num(field(6)?, "volume")?,
            };
            bar.validate()?;
            Ok((symbol, bar))
        })();
        match parsed {
            Ok((symbol, bar)) => {
                if bars.insert((bar.date, symbol.clone()), bar).is_some() {
                    report.duplicates += 1;
                    report.diagnostics.push(format!(
                        "line {line}: duplicate bar for {symbol} on {}, keeping the later row",
                        bar.date
                    ));
                }
            }
            Err(msg) => {
                report.rejected += 1;
                report.diagnostics.push(format!("line {line}: {msg}"));
            }
        }
    }
    report.accepted = bars.len();
    Ok((BarSet::from_bars(&bars)?, report))
}

/// The closed set of fundamentals fields understood by the factor library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FundamentalField {
    TotalAssets,
    TotalLiabilities,
    ShareholdersEquity,
    OperatingCashFlow,
    CapitalExpenditure,
    Revenue,
    Cogs,
    OperatingExpenses,
    NetIncome,
    Interest,
    Taxes,
    Nopat,
    InvestedCapital,
    Ebitda,
    SharesOutstanding,
}

impl FundamentalField {
    pub const ALL: [FundamentalField; 15] = [
        FundamentalField::TotalAssets,
        FundamentalField::TotalLiabilities,
        FundamentalField::ShareholdersEquity,
        FundamentalField::OperatingCashFlow,
        FundamentalField::CapitalExpenditure,
        FundamentalField::Revenue,
        FundamentalField::Cogs,
        FundamentalField::OperatingExpenses,
        FundamentalField::NetIncome,
        FundamentalField::Interest,
        FundamentalField::Taxes,
        FundamentalField::Nopat,
        FundamentalField::InvestedCapital,
        FundamentalField::Ebitda,
        FundamentalField::SharesOutstanding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FundamentalField::TotalAssets => "total_assets",
            FundamentalField::TotalLiabilities => "total_liabilities",
            FundamentalField::ShareholdersEquity => "shareholders_equity",
            FundamentalField::OperatingCashFlow => "operating_cash_flow",
            FundamentalField::CapitalExpenditure => "capital_expenditure",
            FundamentalField::Revenue => "revenue",
            FundamentalField::Cogs => "cogs",
            FundamentalField::OperatingExpenses => "operating_expenses",
            FundamentalField::NetIncome => "net_income",
            FundamentalField::Interest => "interest",
            FundamentalField::Taxes => "taxes",
            FundamentalField::Nopat => "nopat",
            FundamentalField::InvestedCapital => "invested_capital",
            FundamentalField::Ebitda => "ebitda",
            FundamentalField::SharesOutstanding => "shares_outstanding",
        }
    }
}

impl fmt::Display for FundamentalField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FundamentalField {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FundamentalField::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| format!("unknown fundamentals field `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalsRow {
    pub date: NaiveDate,
    pub symbol: String,
    pub field: FundamentalField,
    pub value: f64,
}

/// Point-in-time fundamentals, one dated history per `(symbol, field)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fundamentals {
    series: BTreeMap<(String, FundamentalField), BTreeMap<NaiveDate, f64>>,
}

/// An `A = L + SE` mismatch found by [`Fundamentals::validate_balance_sheet`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceSheetMismatch {
    pub date: NaiveDate,
    pub symbol: String,
    pub assets: f64,
    pub liabilities_plus_equity: f64,
}

impl Fundamentals {
    /// Inserts a row, returning `true` if it replaced an existing value.
    pub fn insert(&mut self, row: FundamentalsRow) -> bool {
        self.series
            .entry((row.symbol, row.field))
            .or_default()
            .insert(row.date, row.value)
            .is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = FundamentalsRow> + '_ {
        self.series.iter().flat_map(|((sym, field), hist)| {
            hist.iter().map(move |(d, v)| FundamentalsRow {
                date: *d,
                symbol: sym.clone(),
                field: *field,
                value: *v,
            })
        })
    }

    /// Latest value dated on or before `date`.
    pub fn as_of(&self, symbol: &str, field: FundamentalField, date: NaiveDate) -> Option<f64> {
        self.series
            .get(&(symbol.to_string(), field))
            .and_then(|h| h.range(..=date).next_back().map(|(_, v)| *v))
    }

    /// As-of join of one field onto a date × symbol grid.
    pub fn as_of_panel(&self, field: FundamentalField, dates: &[NaiveDate], symbols: &[String]) -> Panel {
        let mut panel = Panel::missing(dates.to_vec(), symbols.to_vec()).expect("axes come from a panel");
        for (j, sym) in symbols.iter().enumerate() {
            let Some(hist) = self.series.get(&(sym.clone(), field)) else {
                continue;
            };
            let mut it = hist.iter().peekable();
            let mut current = MISSING;
            for (t, date) in dates.iter().enumerate() {
                while let Some((d, v)) = it.peek() {
                    if *d <= date {
                        current = **v;
                        it.next();
                    } else {
                        break;
                    }
                }
                panel.set(t, j, current);
            }
        }
        panel
    }

    /// Reports snapshots where total assets differ from liabilities plus
    /// equity by more than `rel_tol` relative. Mismatches are flagged only.
    pub fn validate_balance_sheet(&self, rel_tol: f64) -> Vec<BalanceSheetMismatch> {
        let mut out = Vec::new();
        for ((sym, field), hist) in &self.series {
            if *field != FundamentalField::TotalAssets {
                continue;
            }
            for (date, assets) in hist {
                let l = self.as_of(sym, FundamentalField::TotalLiabilities, *date);
                let e = self.as_of(sym, FundamentalField::ShareholdersEquity, *date);
                if let (Some(l), Some(e)) = (l, e) {
                    let rhs = l + e;
                    if (assets - rhs).abs() > rel_tol * assets.abs().max(rhs.abs()) {
                        out.push(BalanceSheetMismatch {
                            date: *date,
                            symbol: sym.clone(),
                            assets: *assets,
                            liabilities_plus_equity: rhs,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "symbol", "field", "value"])?;
        let mut rows: Vec<FundamentalsRow> = self.rows().collect();
        rows.sort_by(|a, b| (a.date, &a.symbol, a.field).cmp(&(b.date, &b.symbol, b.field)));
        for r in rows {
            w.write_record([r.date.to_string(), r.symbol, r.field.to_string(), r.value.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<fundamentals writer>", e))?;
        Ok(())
    }
}

/// Reads a long-format `date,symbol,field,value` fundamentals CSV.
pub fn ingest_fundamentals(path: impl AsRef<Path>) -> Result<(Fundamentals, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_fundamentals_from_reader(file)
}

pub fn ingest_fundamentals_from_reader<R: Read>(reader: R) -> Result<(Fundamentals, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = [
        header_index(&headers, "date")?,
        header_index(&headers, "symbol")?,
        header_index(&headers, "field")?,
        header_index(&headers, "value")?,
    ];
    let mut report = IngestReport::default();
    let mut out = Fundamentals::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.rejected += 1;
                report.diagnostics.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let parsed = (|| -> std::result::Result<FundamentalsRow, String> {
            let field = |k: usize| rec.get(cols[k]).ok_or_else(|| "short row".to_string());
            let value = parse_num(field(3)?, "value")?;
            if !value.is_finite() {
                return Err(format!("non-finite value {value}"));
            }
            Ok(FundamentalsRow {
                date: parse_date(field(0)?)?,
                symbol: field(1)?.trim().to_string(),
                field: field(2)?.parse()?,
                value,
            })
        })();
        match parsed {
            Ok(row) => {
                let desc = format!("{} {} {}", row.symbol, row.field, row.date);
                if out.insert(row) {
                    report.duplicates += 1;
                    report
                        .diagnostics
                        .push(format!("line {line}: duplicate {desc}, keeping the later row"));
                }
            }
            Err(msg) => {
                report.rejected += 1;
                report.diagnostics.push(format!("line {line}: {msg}"));
            }
        }
    }
    report.accepted = report.rows_read - report.rejected - report.duplicates;
    Ok((out, report))
}

/// How often universe membership is re-ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refresh {
    Daily,
    #[default]
    Monthly,
}

/// Per-date set of admitted symbols (indices into `symbols`, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    members: Vec<Vec<usize>>,
    target: usize,
}

impl Universe {
    /// Every symbol admitted on every date.
    pub fn full(dates: &[NaiveDate], symbols: &[String]) -> Universe {
        Universe {
            dates: dates.to_vec(),
            symbols: symbols.to_vec(),
            members: vec![(0..symbols.len()).collect(); dates.len()],
            target: symbols.len(),
        }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn members(&self, t: usize) -> &[usize] {
        &self.members[t]
    }

    pub fn contains(&self, t: usize, j: usize) -> bool {
        self.members[t].binary_search(&j).is_ok()
    }

    pub fn member_symbols(&self, t: usize) -> Vec<&str> {
        self.members[t].iter().map(|&j| self.symbols[j].as_str()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "symbol"])?;
        for (t, date) in self.dates.iter().enumerate() {
            for &j in &self.members[t] {
                w.write_record([date.to_string(), self.symbols[j].clone()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<universe writer>", e))?;
        Ok(())
    }
}

/// Top-`n` symbols by trailing mean dollar volume, re-ranked every date.
pub fn build_universe(dollar_volume: &Panel, n: usize, lookback: usize) -> Result<Universe> {
    build_universe_with(dollar_volume, n, lookback, Refresh::Daily)
}

/// Top-`n` symbols by trailing `lookback`-day mean dollar volume.
///
/// Dates with fewer than `lookback` sessions of history admit nobody. With
/// [`Refresh::Monthly`] the ranking is recomputed on the first eligible
/// session of each calendar month and carried forward; on every date only
/// ranked symbols that actually traded are admitted.
pub fn build_universe_with(dollar_volume: &Panel, n: usize, lookback: usize, refresh: Refresh) -> Result<Universe> {
    if n == 0 {
        return Err(Error::invalid("universe size must be at least 1"));
    }
    if lookback == 0 {
        return Err(Error::invalid("universe lookback must be at least 1"));
    }
    let dates = dollar_volume.dates();
    let n_sym = dollar_volume.n_symbols();
    let values = dollar_volume.values();
    let mut members = vec![Vec::new(); dates.len()];
    let mut ranked: Vec<usize> = Vec::new();
    let mut last_rank_month: Option<(i32, u32)> = None;

    for t in 0..dates.len() {
        if t + 1 < lookback {
            continue;
        }
        let month = (dates[t].year(), dates[t].month());
        let rerank = match refresh {
            Refresh::Daily => true,
            Refresh::Monthly => last_rank_month != Some(month),
        };
        if rerank {
            let mut scored: Vec<(f64, usize)> = (0..n_sym)
                .filter(|&j| !is_missing(values[[t, j]]))
                .filter_map(|j| {
                    let window = (t + 1 - lookback..=t)
                        .map(|s| values[[s, j]])
                        .filter(|v| !is_missing(*v));
                    let (sum, count) = window.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                    (count > 0).then(|| (sum / count as f64, j))
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            ranked = scored.into_iter().take(n).map(|(_, j)| j).collect();
            ranked.sort_unstable();
            last_rank_month = Some(month);
        }
        members[t] = ranked
            .iter()
            .copied()
            .filter(|&j| !is_missing(values[[t, j]]))
            .collect();
    }

    Ok(Universe {
        dates: dates.to_vec(),
        symbols: dollar_volume.symbols().to_vec(),
        members,
        target: n,
    })
}
