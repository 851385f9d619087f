use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lsq::analytics::*;
use lsq::synth::business_days;
use lsq::Panel;

fn normals(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[test]
fn common_plus_specific_is_total() {
    let b = normals(800, 0.0003, 0.01, 1);
    let noise = normals(800, 0.0, 0.004, 2);
    let p: Vec<f64> = b.iter().zip(&noise).map(|(x, e)| 0.7 * x + e + 0.0002).collect();
    let d = beta_decomposition(&p, &b).unwrap();
    for ((c, s), r) in d.common.iter().zip(&d.specific).zip(&p) {
        assert!((c + s - r).abs() <= 1e-12);
    }
    assert!((d.beta - 0.7).abs() < 0.05);
}

#[test]
fn orthogonal_portfolio_has_no_beta() {
    let b = normals(2000, 0.0, 0.01, 3);
    let p = normals(2000, 0.0005, 0.01, 4);
    let d = beta_decomposition(&p, &b).unwrap();
    assert!(d.beta.abs() < 0.1);
    let specific = compound(&d.specific);
    let total = compound(&p);
    assert!((specific - total).abs() < 0.2 * total.abs().max(0.1));
}

#[test]
fn monotone_curve_has_no_drawdown() {
    let curve: Vec<f64> = (0..500).map(|i| 100.0 + i as f64 * 0.5).collect();
    assert_eq!(max_drawdown(&curve).unwrap(), 0.0);
}

#[test]
fn sharpe_is_scale_invariant() {
    let r = normals(750, 0.001, 0.01, 5);
    let s = sharpe(&r, 0.0, TRADING_DAYS).unwrap();
    for k in [0.1, 3.0, 250.0] {
        let scaled: Vec<f64> = r.iter().map(|x| k * x).collect();
        let t = sharpe(&scaled, 0.0, TRADING_DAYS).unwrap();
        assert!((s - t).abs() <= 1e-10 * s.abs(), "{s} vs {t}");
    }
}

#[test]
fn period_compounding_matches_daily() {
    let dates = business_days(NaiveDate::from_ymd_opt(2019, 12, 30).unwrap(), 700);
    let r = normals(700, 0.0004, 0.012, 6);
    let total = compound(&r);
    for period in [Period::Weekly, Period::Monthly] {
        let agg = aggregate_returns(&dates, &r, period).unwrap();
        let chained = compound(&agg.iter().map(|p| p.ret).collect::<Vec<_>>());
        assert!((chained - total).abs() <= 1e-10 * (1.0 + total.abs()), "{period:?}");
    }
}

#[test]
fn reversing_the_factor_swaps_quantiles() {
    let (n, k) = (80, 25);
    let dates = business_days(NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(), n);
    let symbols: Vec<String> = (0..k).map(|j| format!("S{j}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut close = vec![vec![0.0; n]; k];
    let mut factor = vec![vec![0.0; n]; k];
    for j in 0..k {
        close[j][0] = 50.0;
        for t in 0..n {
            if t > 0 {
                close[j][t] = close[j][t - 1] * (1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal));
            }
            factor[j][t] = rng.gen::<f64>();
        }
    }
    let neg: Vec<Vec<f64>> = factor.iter().map(|c| c.iter().map(|v| -v).collect()).collect();
    let p = |c: &[Vec<f64>]| Panel::from_columns(dates.clone(), symbols.clone(), c).unwrap();
    let a = quantile_report(&p(&factor), &p(&close), 5, &[1, 5]).unwrap();
    let b = quantile_report(&p(&neg), &p(&close), 5, &[1, 5]).unwrap();
    for h in [1, 5] {
        for q in 1..=5 {
            let (x, y) = (a.stat(q, h).unwrap(), b.stat(6 - q, h).unwrap());
            assert_eq!(x.count, y.count);
            assert!((x.mean - y.mean).abs() < 1e-15);
        }
    }
}
