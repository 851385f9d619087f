//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails. Runs without the test harness, one criterion at a
//! time, so each wall time is measured without other tests competing for
//! the CPU.

use std::time::Instant;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lsq::analytics::{aggregate_returns, beta_decomposition, compound, max_drawdown, sharpe, Period, TRADING_DAYS};
use lsq::backtest::{
    prepare, run_backtest, run_backtest_through, BacktestConfig, BacktestResult, EnsembleScorer, LatentScorer, Prepared,
};
use lsq::classifiers::boost::stump_weight;
use lsq::classifiers::tree::Node;
use lsq::classifiers::{fit_tag, ClassifierConfig, ModelParams, Rows, TreeParams, ALGORITHM_TAGS};
use lsq::compare::{compare, latest_window, CompareConfig};
use lsq::dataset::{build_training_window, Class};
use lsq::ensemble::{write_conviction, EnsembleSpec};
use lsq::factors::fundamental::{FundamentalInputs, FundamentalRatio};
use lsq::factors::indicators::*;
use lsq::factors::standardize::{winsorize, zscore, WinsorLimits};
use lsq::market_data::{FundamentalField, FundamentalsRow};
use lsq::synth::{business_days, generate, SynthConfig, SynthMarket};
use lsq::{is_missing, FactorRegistry, Fundamentals, Panel};
use lsq_cli::commands;
use lsq_cli::config::RunConfig;

/// Failures collected by one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Equal, or within 1e-9 relative of the expected value.
    fn close(&mut self, name: &str, got: f64, want: f64) {
        let ok = got == want || (got - want).abs() <= 1e-9 * want.abs();
        self.check(ok, format!("{name}: got {got}, want {want}"));
    }
}

fn line(id: usize, title: &str, c: &Checks, secs: f64, limit: Option<f64>) -> bool {
    let in_time = limit.is_none_or(|l| secs < l);
    let pass = c.failures.is_empty() && in_time;
    let mut detail = c.notes.join("; ");
    if !in_time {
        detail = format!("over the {} s limit; {detail}", limit.unwrap());
    }
    if !c.failures.is_empty() {
        detail = format!(
            "{} failed check(s): {}; {detail}",
            c.failures.len(),
            c.failures.join(" | ")
        );
    }
    println!(
        "criterion {id}: {} [{title}] ({secs:.1} s) {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

// ---------------------------------------------------------------- 1

fn fuzz_bars(n: usize, seed: u64) -> [Vec<f64>; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut h, mut l, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut p = 50.0;
    for i in 0..n {
        // Flat stretches and zero-volume bars exercise the degenerate branches.
        let flat = (i / 50) % 7 == 3;
        if !flat {
            p *= (0.02 * rng.sample::<f64, _>(StandardNormal)).exp();
        }
        let up = if flat { 0.0 } else { rng.gen_range(0.0..0.03) };
        let down = if flat { 0.0 } else { rng.gen_range(0.0..0.03) };
        h.push(p * (1.0 + up));
        l.push(p * (1.0 - down));
        c.push(if flat { p } else { p * (1.0 + rng.gen_range(-down..=up)) });
        v.push(if rng.gen_bool(0.05) {
            0.0
        } else {
            rng.gen_range(1e3..1e6f64).round()
        });
    }
    [h, l, c, v]
}

fn fund_example(rows: &[(FundamentalField, f64)], days: usize) -> (Fundamentals, Panel) {
    let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let mut f = Fundamentals::default();
    for (field, value) in rows {
        f.insert(FundamentalsRow {
            date: d0,
            symbol: "A".into(),
            field: *field,
            value: *value,
        });
    }
    let dates = business_days(d0, days);
    let close = Panel::from_columns(dates, vec!["A".into()], &[vec![10.0; days]]).unwrap();
    (f, close)
}

fn criterion_1(c: &mut Checks) {
    use FundamentalField as F;
    // Hand-worked values.
    let e = ema(&[1.0, 2.0, 3.0], 2).unwrap();
    c.check(e[0].is_nan(), "ema warm-up");
    c.close("ema[1]", e[1], 1.5);
    c.close("ema[2]", e[2], 2.5);
    c.close("rolling_mean", rolling_mean(&[1.0, 2.0, 6.0], 3).unwrap()[2], 3.0);
    c.close("rolling_sum", rolling_sum(&[1.0, 2.0, 6.0], 2).unwrap()[2], 8.0);

    let h = [10.0, 11.0, 12.5, 11.0, 12.0];
    let l = [9.0, 9.5, 10.0, 9.0, 10.0];
    let cl = [9.5, 10.5, 12.0, 9.5, 11.5];
    let tr = true_range(&h, &l, &cl).unwrap();
    for (t, want) in [(1, 1.5), (2, 2.5), (3, 3.0), (4, 2.5)] {
        c.close(&format!("true range[{t}]"), tr[t], want);
    }
    let a = atr(&h, &l, &cl, 2).unwrap();
    c.close("atr[2]", a[2], 2.0);
    c.close("atr[3]", a[3], 2.75);
    // +DM = 1, 1.5, 0, 1 and -DM = 0, 0, 1, 0 from t = 1; Wilder n = 2.
    let d = adx(&h, &l, &cl, 2).unwrap();
    c.close("+DI[2]", d.plus_di[2], 62.5);
    c.close("+DI[3]", d.plus_di[3], 25.0);
    c.close("+DI[4]", d.plus_di[4], 32.5);
    c.close("-DI[3]", d.minus_di[3], 20.0);
    c.close("-DI[4]", d.minus_di[4], 10.0);
    c.close("DX[2]", d.dx[2], 100.0);
    c.close("DX[3]", d.dx[3], 100.0 * 5.0 / 45.0);
    c.close("DX[4]", d.dx[4], 100.0 * 22.5 / 42.5);
    let adx3 = (100.0 + 100.0 / 9.0) / 2.0;
    c.close("ADX[3]", d.adx[3], adx3);
    c.close("ADX[4]", d.adx[4], (adx3 + 100.0 * 22.5 / 42.5) / 2.0);

    let m = apo_ppo_macd(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, 3, 2).unwrap();
    c.close("apo[4]", m.apo[4], 0.5);
    c.close("macd[2]", m.macd[2], 0.5);
    c.close("ppo[2]", m.ppo[2], 25.0);
    c.close("ppo[3]", m.ppo[3], 50.0 / 3.0);
    c.close("macd signal[4]", m.macd_signal[4], 0.5);
    let sig3 = (25.0 + 50.0 / 3.0) / 2.0;
    let sig4 = sig3 + 2.0 / 3.0 * (12.5 - sig3);
    c.close("ppo signal[4]", m.ppo_signal[4], sig4);
    c.close("ppo histogram[4]", m.ppo_histogram[4], 12.5 - sig4);

    c.close("cmo up", cmo(&[1.0, 2.0, 3.0, 4.0], 3).unwrap()[3], 100.0);
    c.close("cmo mixed", cmo(&[1.0, 2.0, 1.0, 2.0], 3).unwrap()[3], 100.0 / 3.0);
    let (wh, wl) = ([10.0, 12.0, 11.0], [8.0, 9.0, 10.0]);
    c.close(
        "williams top",
        williams_r(&wh, &wl, &[9.0, 10.0, 12.0], 3).unwrap()[2],
        0.0,
    );
    c.close(
        "williams mid",
        williams_r(&wh, &wl, &[9.0, 10.0, 10.0], 3).unwrap()[2],
        -50.0,
    );
    c.close(
        "williams bottom",
        williams_r(&wh, &wl, &[9.0, 10.0, 8.0], 3).unwrap()[2],
        -100.0,
    );
    // Positive flow 3 x 2, negative flow 2 x 4.
    let p = [2.0, 3.0, 2.0];
    c.close(
        "mfi",
        mfi(&p, &p, &p, &[1.0, 2.0, 4.0], 2).unwrap()[2],
        100.0 - 100.0 / (1.0 + 6.0 / 8.0),
    );
    let ad = accumulation_distribution(
        &[10.0, 10.0, 10.0],
        &[8.0, 8.0, 10.0],
        &[10.0, 8.0, 10.0],
        &[100.0, 50.0, 70.0],
    )
    .unwrap();
    for (t, (mf, line)) in [(100.0, 100.0), (-50.0, 50.0), (0.0, 50.0)].into_iter().enumerate() {
        c.close(&format!("cmfv[{t}]"), ad.cmfv[t], mf);
        c.close(&format!("ad[{t}]"), ad.ad[t], line);
    }
    c.close("money flow volume", money_flow_volume(&ad.cmfv, 2).unwrap()[2], -50.0);
    c.close("beta", beta(&[2.0, 1.0, 6.0], &[1.0, 2.0, 3.0], 3).unwrap()[2], 2.0);
    c.close("medprice", medprice(&[10.0], &[8.0]).unwrap()[0], 9.0);
    let pr = [100.0, 105.0, 110.0];
    c.close("rate of return", rate_of_return(&pr, 2).unwrap()[2], 10.0);
    c.close(
        "long-horizon return",
        returns_long_horizon(&pr, 2).unwrap()[2],
        10.0 / 110.0 * 100.0,
    );
    let line: Vec<f64> = (0..10).map(|t| 3.0 + 0.75 * t as f64).collect();
    c.close("trendline", trendline(&line, 10).unwrap()[9], 0.75);

    let mut z = [1.0, 2.0, 3.0, 4.0];
    zscore(&mut z);
    c.close("zscore[0]", z[0], -1.5 / 1.25f64.sqrt());
    c.close("zscore[3]", z[3], 1.5 / 1.25f64.sqrt());
    let mut w: Vec<f64> = (1..=10).map(f64::from).collect();
    winsorize(&mut w, WinsorLimits::new(0.1, 0.2).unwrap());
    c.check(
        w[0] == 2.0 && w[9] == 8.0 && w[8] == 8.0 && w[7] == 8.0 && w[1] == 2.0,
        format!("winsorize {w:?}"),
    );

    let ratio = |rows: &[(F, f64)], r: FundamentalRatio| {
        let (f, close) = fund_example(rows, 1);
        FundamentalInputs::new(&f, &close).compute(r).get(0, 0)
    };
    c.close(
        "ebit (revenue)",
        ratio(
            &[(F::Revenue, 100.0), (F::Cogs, 40.0), (F::OperatingExpenses, 20.0)],
            FundamentalRatio::Ebit,
        ),
        40.0,
    );
    c.close(
        "ebit (income)",
        ratio(
            &[(F::NetIncome, 25.0), (F::Interest, 5.0), (F::Taxes, 10.0)],
            FundamentalRatio::Ebit,
        ),
        40.0,
    );
    c.close(
        "roic",
        ratio(&[(F::Nopat, 10.0), (F::InvestedCapital, 100.0)], FundamentalRatio::Roic),
        0.1,
    );
    c.close(
        "ebitda yield",
        ratio(
            &[(F::Ebitda, 50.0), (F::SharesOutstanding, 100.0)],
            FundamentalRatio::EbitdaYield,
        ),
        0.05,
    );
    c.close(
        "asset to equity",
        ratio(
            &[(F::TotalAssets, 300.0), (F::ShareholdersEquity, 120.0)],
            FundamentalRatio::AssetToEquity,
        ),
        2.5,
    );
    let ops = [
        (F::Revenue, 200.0),
        (F::Cogs, 80.0),
        (F::OperatingExpenses, 40.0),
        (F::OperatingCashFlow, 30.0),
        (F::NetIncome, 20.0),
    ];
    c.close("operating ratio", ratio(&ops, FundamentalRatio::OperatingRatio), 0.6);
    c.close("earnings quality", ratio(&ops, FundamentalRatio::EarningsQuality), 1.5);

    // Ranges over fuzzed bars.
    let mut defined = 0usize;
    for seed in 0..3 {
        let [h, l, cl, v] = fuzz_bars(10_000, seed);
        let d = adx(&h, &l, &cl, 14).unwrap();
        let series: [(&str, Vec<f64>, f64, f64); 8] = [
            ("+DI", d.plus_di, 0.0, 100.0),
            ("-DI", d.minus_di, 0.0, 100.0),
            ("DX", d.dx, 0.0, 100.0),
            ("ADX", d.adx, 0.0, 100.0),
            ("CMO", cmo(&cl, 14).unwrap(), -100.0, 100.0),
            ("Williams %R", williams_r(&h, &l, &cl, 14).unwrap(), -100.0, 0.0),
            ("MFI", mfi(&h, &l, &cl, &v, 14).unwrap(), 0.0, 100.0),
            ("ATR", atr(&h, &l, &cl, 14).unwrap(), 0.0, f64::INFINITY),
        ];
        for (name, xs, lo, hi) in series {
            let vals: Vec<f64> = xs.into_iter().filter(|x| !is_missing(*x)).collect();
            c.check(
                vals.len() > 9_900,
                format!("{name}: only {} defined values", vals.len()),
            );
            let bad = vals.iter().filter(|x| !(**x >= lo && **x <= hi)).count();
            c.check(
                bad == 0,
                format!("{name} seed {seed}: {bad} values outside [{lo}, {hi}]"),
            );
            defined += vals.len();
        }
    }
    c.note(format!("{defined} fuzzed indicator values in range"));
}

// ---------------------------------------------------------------- 2

fn gauss(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

fn entropy_bits(counts: &[f64; 3]) -> f64 {
    let n: f64 = counts.iter().sum();
    -counts
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| (c / n) * (c / n).log2())
        .sum::<f64>()
}

/// Best entropy reduction over every feature and every midpoint between
/// adjacent distinct values.
fn brute_force_gain(x: &[f64], y: &[Class], k: usize) -> f64 {
    let n = y.len();
    let count = |keep: &dyn Fn(usize) -> bool| {
        let mut c = [0.0; 3];
        for i in (0..n).filter(|&i| keep(i)) {
            c[(y[i] + 1) as usize] += 1.0;
        }
        c
    };
    let parent = entropy_bits(&count(&|_| true));
    let mut best = 0.0f64;
    for f in 0..k {
        let mut vals: Vec<f64> = (0..n).map(|i| x[i * k + f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let thr = 0.5 * (pair[0] + pair[1]);
            let left = count(&|i| x[i * k + f] <= thr);
            let right = count(&|i| x[i * k + f] > thr);
            let (nl, nr) = (left.iter().sum::<f64>(), right.iter().sum::<f64>());
            let gain = parent - nl / n as f64 * entropy_bits(&left) - nr / n as f64 * entropy_bits(&right);
            best = best.max(gain);
        }
    }
    best
}

fn blobs(n: usize, dim: usize, seed: u64) -> (Vec<f64>, Vec<Class>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (Vec::with_capacity(n * dim), Vec::with_capacity(n));
    for i in 0..n {
        let angle = std::f64::consts::TAU * (i % 3) as f64 / 3.0;
        for d in 0..dim {
            let centre = 4.0 * if d % 2 == 0 { angle.cos() } else { angle.sin() };
            x.push(centre + 0.8 * rng.sample::<f64, _>(StandardNormal));
        }
        y.push((i % 3) as Class - 1);
    }
    (x, y)
}

fn criterion_2(c: &mut Checks) {
    // Six points: class means 2 and 6, population variance 2/3, smoothing
    // 1e-9 times the pooled variance 28/6.
    let (m, _) = fit_tag(
        "gaussian_nb",
        &Rows::new(&[1.0, 2.0, 3.0, 5.0, 6.0, 7.0], 1).unwrap(),
        &[-1, -1, -1, 1, 1, 1],
    )
    .unwrap();
    let v = 2.0 / 3.0 + 1e-9 * 28.0 / 6.0;
    for q in [0.0, 2.5, 4.0, 4.1, 6.5] {
        let (a, b) = (gauss(q, 2.0, v), gauss(q, 6.0, v));
        let got = m.class_scores(&[q]);
        c.close(&format!("GNB P(-1 | {q})"), got[0], a / (a + b));
        c.close(&format!("GNB P(+1 | {q})"), got[1], b / (a + b));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let stump = ClassifierConfig::DecisionTree(TreeParams {
        max_depth: 1,
        min_leaf: 1,
    });
    let (mut splits, mut leaves) = (0, 0);
    for case in 0..500 {
        let n = rng.gen_range(2..=10);
        let k = rng.gen_range(1..=3);
        let x: Vec<f64> = (0..n * k).map(|_| rng.gen_range(0..6) as f64).collect();
        let y: Vec<Class> = (0..n).map(|_| rng.gen_range(-1..=1)).collect();
        let (model, _) = stump.fit(&Rows::new(&x, k).unwrap(), &y).unwrap();
        let ModelParams::Tree(tree) = &model.params else {
            c.check(false, "decision_tree did not return a tree");
            return;
        };
        let best = brute_force_gain(&x, &y, k);
        match &tree.nodes[0] {
            Node::Split {
                feature,
                threshold,
                gain,
                ..
            } => {
                splits += 1;
                c.check(
                    (gain - best).abs() <= 1e-12,
                    format!("case {case}: tree gain {gain}, brute force {best}"),
                );
                // Recompute the stored split's gain independently.
                let xs: Vec<f64> = (0..n).map(|i| x[i * k + feature]).collect();
                let realised = brute_force_gain(&xs, &y, 1);
                let mut vals = xs.clone();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                let is_mid = vals.windows(2).any(|p| 0.5 * (p[0] + p[1]) == *threshold);
                c.check(is_mid, format!("case {case}: threshold {threshold} is not a midpoint"));
                c.check(
                    realised + 1e-12 >= best,
                    format!("case {case}: stored feature cannot reach {best}"),
                );
            }
            Node::Leaf(_) => {
                leaves += 1;
                c.check(
                    best <= 1e-12,
                    format!("case {case}: leaf although a split gains {best}"),
                );
            }
        }
    }
    c.note(format!(
        "tree matched brute force on {splits} split and {leaves} leaf datasets"
    ));

    let w = stump_weight(0.1);
    c.check((w - 0.5 * 9f64.ln()).abs() <= 1e-12, format!("AdaBoost weight {w}"));

    let (x, y) = blobs(500, 4, 1);
    let (xt, yt) = blobs(500, 4, 2);
    let (rows, test) = (Rows::new(&x, 4).unwrap(), Rows::new(&xt, 4).unwrap());
    let mut worst = 1.0f64;
    for tag in ALGORITHM_TAGS {
        let (model, _) = fit_tag(tag, &rows, &y).unwrap();
        let pred = model.predict(&test).unwrap();
        let acc = pred.iter().zip(&yt).filter(|(a, b)| a == b).count() as f64 / yt.len() as f64;
        c.check(acc >= 0.95, format!("{tag}: blob accuracy {acc:.3}"));
        worst = worst.min(acc);
    }
    c.note(format!(
        "worst blob accuracy over {} classifiers {worst:.3}",
        ALGORITHM_TAGS.len()
    ));
}

// ---------------------------------------------------------------- 3

fn criterion_3(c: &mut Checks) {
    let market = generate(&SynthConfig::new(30, 320, 0.4, 3)).unwrap();
    let cfg = BacktestConfig {
        window: 60,
        n_long: 5,
        n_short: 5,
        ..BacktestConfig::default()
    };
    let asof = 280;
    let mut bars = market.bars.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for p in [
        &mut bars.open,
        &mut bars.high,
        &mut bars.low,
        &mut bars.close,
        &mut bars.volume,
    ] {
        for t in asof + 1..p.n_dates() {
            for j in 0..p.n_symbols() {
                p.set(t, j, rng.gen_range(1.0..1e4));
            }
        }
    }
    let asof_date = market.bars.dates()[asof];
    let mut fundamentals = Fundamentals::default();
    for mut row in market.fundamentals.rows() {
        if row.date > asof_date {
            row.value = -3.0 * row.value + 1.0;
        }
        fundamentals.insert(row);
    }
    let registry = FactorRegistry::default();
    let clean = prepare(&market.bars, Some(&market.fundamentals), &registry, &cfg).unwrap();
    let dirty = prepare(&bars, Some(&fundamentals), &registry, &cfg).unwrap();

    let opts = cfg.window_options();
    let csv_of = |p: &Prepared| {
        let w = build_training_window(&p.factors, &p.labels, Some(&p.universe), asof, cfg.window, &opts).unwrap();
        let mut out = Vec::new();
        w.write_csv(&mut out).unwrap();
        (w.n_rows(), out)
    };
    let ((rows, w1), (_, w2)) = (csv_of(&clean), csv_of(&dirty));
    c.check(w1 == w2, "training window bytes differ");

    let decide = |p: &Prepared| {
        let spec = EnsembleSpec::preset("best").unwrap();
        let r = run_backtest_through(p, &cfg, &mut EnsembleScorer::new(spec, &cfg), asof).unwrap();
        let d = r.decisions.last().unwrap().clone();
        let mut conv = csv::Writer::from_writer(Vec::new());
        write_conviction(&mut conv, &d.conviction, &d.positions).unwrap();
        (
            d.t,
            conv.into_inner().unwrap(),
            format!("{:?}", d.orders),
            format!("{:?}", d.targets),
        )
    };
    let (a, b) = (decide(&clean), decide(&dirty));
    c.check(a.0 == asof, format!("last decision at {} not {asof}", a.0));
    c.check(a.1 == b.1, "conviction bytes differ");
    c.check(a.2 == b.2, "orders differ");
    c.check(a.3 == b.3, "targets differ");
    c.check(!a.2.is_empty() && a.2 != "[]", "no orders to compare");
    c.note(format!("{rows} window rows, {} conviction bytes, identical", a.1.len()));
}

// ---------------------------------------------------------------- 4

struct SignalRun {
    market: SynthMarket,
    prepared: Prepared,
    cfg: BacktestConfig,
    result: BacktestResult,
    secs: f64,
}

fn signal_run() -> SignalRun {
    let t0 = Instant::now();
    let market = generate(&SynthConfig::new(100, 750, 0.5, 7)).unwrap();
    let cfg = BacktestConfig::default();
    let prepared = prepare(
        &market.bars,
        Some(&market.fundamentals),
        &FactorRegistry::default(),
        &cfg,
    )
    .unwrap();
    let mut scorer = EnsembleScorer::new(EnsembleSpec::preset("best").unwrap(), &cfg);
    let result = run_backtest(&prepared, &cfg, &mut scorer).unwrap();
    SignalRun {
        market,
        prepared,
        cfg,
        result,
        secs: t0.elapsed().as_secs_f64(),
    }
}

fn criterion_4(c: &mut Checks, run: &SignalRun) {
    let r = &run.result;
    let bars = &run.prepared.bars;
    let dates = bars.dates();
    // Independent replay of the fill ledger, marked at each close.
    let k = bars.symbols().len();
    let mut cash = run.cfg.initial_capital;
    let mut shares = vec![0i64; k];
    let mut last = vec![0.0f64; k];
    let mut fills = r.fills.iter().peekable();
    let mut worst = 0.0f64;
    for p in &r.equity {
        let t = dates.iter().position(|d| *d == p.date).unwrap();
        while let Some(f) = fills.next_if(|f| f.date <= p.date) {
            let j = bars.symbols().iter().position(|s| *s == f.symbol).unwrap();
            cash -= f.shares as f64 * f.price + f.commission;
            shares[j] += f.shares;
            last[j] = f.price;
        }
        let mut net = 0.0;
        for j in 0..k {
            let px = bars.close.get(t, j);
            if px.is_finite() && px > 0.0 {
                last[j] = px;
            }
            net += shares[j] as f64 * last[j];
        }
        let replay = cash + net;
        let rel = (replay - p.equity).abs() / p.equity.abs();
        worst = worst.max(rel);
        let parts = (p.cash + p.long_value + p.short_value - p.equity).abs() / p.equity.abs();
        c.check(
            parts <= 1e-6,
            format!("{}: cash + long + short off by {parts:e}", p.date),
        );
    }
    c.check(worst <= 1e-6, format!("replayed equity off by {worst:e} relative"));
    c.check(r.equity.len() > 400, format!("only {} marks", r.equity.len()));

    let filled: Vec<_> = r.rebalances.iter().filter(|m| m.fully_filled).collect();
    let (lo, hi) = filled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), m| {
        (a.min(m.gross_leverage), b.max(m.gross_leverage))
    });
    for m in &filled {
        c.check(
            (0.96..=1.05).contains(&m.gross_leverage),
            format!("{}: gross leverage {}", m.filled, m.gross_leverage),
        );
    }
    c.check(
        filled.len() > 400,
        format!("only {} fully filled rebalances", filled.len()),
    );
    let max_hold = r
        .equity
        .iter()
        .map(|p| p.holdings)
        .chain(r.rebalances.iter().map(|m| m.holdings))
        .max()
        .unwrap_or(0);
    c.check(max_hold <= 500, format!("{max_hold} holdings"));
    c.note(format!(
        "{} marks, worst replay error {worst:.1e}, {} fully filled rebalances with leverage {lo:.4}..{hi:.4}, max holdings {max_hold}",
        r.equity.len(),
        filled.len()
    ));
}

// ---------------------------------------------------------------- 5

fn criterion_5(c: &mut Checks) {
    let market = generate(&SynthConfig::new(200, 1000, 0.3, 7)).unwrap();
    let bt = BacktestConfig::default();
    let p = prepare(
        &market.bars,
        Some(&market.fundamentals),
        &FactorRegistry::default(),
        &bt,
    )
    .unwrap();
    let cfg = CompareConfig {
        window: 750,
        ..CompareConfig::default()
    };
    let window = latest_window(&p, cfg.window, &bt.window_options()).unwrap();
    let spec = EnsembleSpec::preset("best").unwrap();
    let tags = spec.tags();
    let rows = compare(&window, &tags, &[("best".into(), spec.clone())], &cfg).unwrap();
    let members: Vec<_> = rows.iter().filter(|r| r.kind == "algorithm").collect();
    let ens = rows.iter().find(|r| r.kind == "ensemble").unwrap();
    let tb = ens.top_bottom_accuracy.unwrap_or(f64::NAN);
    let best = members
        .iter()
        .map(|r| r.overall_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    c.check(members.len() == 4, format!("{} members", members.len()));
    for r in &members {
        c.check(
            tb > r.overall_accuracy,
            format!(
                "{} overall {:.4} >= ensemble top-and-bottom {tb:.4}",
                r.name, r.overall_accuracy
            ),
        );
    }
    c.check(
        tb - best >= 0.05,
        format!("margin {:.2} points below 5", 100.0 * (tb - best)),
    );
    let listing: Vec<String> = members
        .iter()
        .map(|r| format!("{} {:.4}", r.name, r.overall_accuracy))
        .collect();
    c.note(format!(
        "{}; ensemble top-and-bottom {tb:.4} on {} names (overall {:.4}), margin {:.1} points",
        listing.join(", "),
        ens.top_bottom_count,
        ens.overall_accuracy,
        100.0 * (tb - best)
    ));
}

// ---------------------------------------------------------------- 6

fn criterion_6(c: &mut Checks, run: &SignalRun) {
    let r = &run.result;
    let daily = r.daily_returns();
    let s = sharpe(&daily, 0.0, TRADING_DAYS).unwrap();
    let mdd = max_drawdown(&r.equity_values()).unwrap();
    let total = r.total_return();
    c.check(total > 0.0, format!("total return {total}"));
    c.check(s > 1.0, format!("Sharpe {s}"));
    c.check(mdd > -0.2, format!("max drawdown {mdd}"));

    let oracle = run_backtest(
        &run.prepared,
        &run.cfg,
        &mut LatentScorer {
            latent: run.market.latent.clone(),
        },
    )
    .unwrap();
    let capture = daily.iter().sum::<f64>() / oracle.daily_returns().iter().sum::<f64>();
    let compounded = total / oracle.total_return();
    c.check(capture >= 0.3, format!("captures {capture:.3} of the oracle"));

    // No signal: same pipeline, long history so the Sharpe estimate is tight.
    let null_market = generate(&SynthConfig::new(16, 4200, 0.0, 7)).unwrap();
    let cfg = BacktestConfig::default().frictionless();
    let p = prepare(
        &null_market.bars,
        Some(&null_market.fundamentals),
        &FactorRegistry::default(),
        &cfg,
    )
    .unwrap();
    let null = run_backtest(
        &p,
        &cfg,
        &mut EnsembleScorer::new(EnsembleSpec::preset("best").unwrap(), &cfg),
    )
    .unwrap();
    let null_daily = null.daily_returns();
    let null_sharpe = sharpe(&null_daily, 0.0, TRADING_DAYS).unwrap();
    c.check(null_sharpe.abs() < 0.5, format!("null Sharpe {null_sharpe}"));
    c.note(format!(
        "signal: return {:.1}%, Sharpe {s:.2}, max drawdown {:.2}%, captures {:.1}% of the oracle's summed daily returns (compounded ratio {:.1}%); null: Sharpe {null_sharpe:+.3} over {} sessions",
        100.0 * total,
        100.0 * mdd,
        100.0 * capture,
        100.0 * compounded,
        null_daily.len()
    ));
}

// ---------------------------------------------------------------- 7

fn normals(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn criterion_7(c: &mut Checks) {
    let b = normals(800, 0.0003, 0.01, 1);
    let e = normals(800, 0.0, 0.004, 2);
    let p: Vec<f64> = b.iter().zip(&e).map(|(x, e)| 0.7 * x + e + 0.0002).collect();
    let d = beta_decomposition(&p, &b).unwrap();
    let worst = d
        .common
        .iter()
        .zip(&d.specific)
        .zip(&p)
        .map(|((c, s), r)| (c + s - r).abs())
        .fold(0.0, f64::max);
    c.check(worst <= 1e-12, format!("common + specific off by {worst:e}"));

    let curve: Vec<f64> = (0..500).map(|i| 100.0 + 0.5 * i as f64).collect();
    let mdd = max_drawdown(&curve).unwrap();
    c.check(mdd == 0.0, format!("monotone MDD {mdd}"));

    let r = normals(750, 0.001, 0.01, 5);
    let s = sharpe(&r, 0.0, TRADING_DAYS).unwrap();
    for k in [0.1, 3.0, 250.0] {
        let t = sharpe(&r.iter().map(|x| k * x).collect::<Vec<_>>(), 0.0, TRADING_DAYS).unwrap();
        c.check((s - t).abs() <= 1e-10 * s.abs(), format!("Sharpe x{k}: {t} vs {s}"));
    }

    let dates = business_days(NaiveDate::from_ymd_opt(2019, 12, 30).unwrap(), 700);
    let r = normals(700, 0.0004, 0.012, 6);
    let total = compound(&r);
    for period in [Period::Weekly, Period::Monthly] {
        let agg = aggregate_returns(&dates, &r, period).unwrap();
        let chained = compound(&agg.iter().map(|x| x.ret).collect::<Vec<_>>());
        c.check(
            (chained - total).abs() <= 1e-10 * (1.0 + total.abs()),
            format!("{period:?}: {chained} vs {total}"),
        );
    }
    c.note(format!("decomposition residual {worst:.1e}, beta {:.3}", d.beta));
}

// ---------------------------------------------------------------- 8

fn criterion_8(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    generate(&SynthConfig::new(20, 300, 0.5, 11))
        .unwrap()
        .write(dir.path())
        .unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = RunConfig::for_data(dir.path().join("bars.csv"), Some(dir.path().join("fundamentals.csv")));
        cfg.seed = 11;
        cfg.backtest.window = 60;
        cfg.backtest.n_long = 5;
        cfg.backtest.n_short = 5;
        cfg.output_dir = dir.path().join(name);
        cfg.finish().unwrap();
        let out = commands::backtest(&cfg).unwrap();
        let read = |f: &str| std::fs::read(out.dir.join(f)).unwrap();
        files.push((read("tearsheet.json"), read("fills.csv")));
    }
    c.check(files[0].0 == files[1].0, "tearsheet.json differs");
    c.check(files[0].1 == files[1].1, "fills.csv differs");
    c.check(files[0].1.len() > 1000, "fills.csv is nearly empty");
    c.note(format!(
        "tearsheet.json {} bytes, fills.csv {} bytes, identical",
        files[0].0.len(),
        files[0].1.len()
    ));
}

fn timed(id: usize, title: &str, limit: Option<f64>, f: impl FnOnce(&mut Checks)) -> bool {
    let t0 = Instant::now();
    let mut c = Checks::default();
    f(&mut c);
    line(id, title, &c, t0.elapsed().as_secs_f64(), limit)
}

fn main() {
    let mut passed = vec![
        timed(1, "indicator oracles", Some(10.0), criterion_1),
        timed(2, "classifier oracles", Some(30.0), criterion_2),
        timed(3, "no look-ahead", None, criterion_3),
    ];
    let run = signal_run();
    passed.push(timed(4, "accounting and leverage", None, |c| criterion_4(c, &run)));
    passed.push(timed(5, "ensemble top-and-bottom accuracy", Some(120.0), criterion_5));
    // The shared run's cost is charged to criterion 6, which has a limit.
    let t0 = Instant::now();
    let mut c6 = Checks::default();
    criterion_6(&mut c6, &run);
    passed.push(line(
        6,
        "profitability and no false alpha",
        &c6,
        run.secs + t0.elapsed().as_secs_f64(),
        Some(300.0),
    ));
    passed.push(timed(7, "analytics identities", None, criterion_7));
    passed.push(timed(8, "determinism", None, criterion_8));

    let failed: Vec<usize> = passed
        .iter()
        .enumerate()
        .filter(|(_, p)| !**p)
        .map(|(i, _)| i + 1)
        .collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
