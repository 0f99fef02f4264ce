//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use arrival_core::{Label, ResponseRecord, SurveyDataset, TimePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(time, label)` with `None` for item nonresponse.
pub type Row = (f64, Option<u8>);

pub fn dataset(rows: &[Row], n: u64, tau: f64) -> SurveyDataset {
    let records = rows
        .iter()
        .map(|&(t, x)| {
            let t = TimePoint::new(t).unwrap();
            match x {
                Some(x) => ResponseRecord::labeled(t, Label::from_indicator(x).unwrap()),
                None => ResponseRecord::item_nonresponse(t),
            }
        })
        .collect();
    SurveyDataset::new(records, n, TimePoint::new(tau).unwrap())
}

pub fn rows_of(d: &SurveyDataset) -> Vec<Row> {
    d.timed()
        .map(|(t, r)| (t.days(), r.observed_label().map(Label::indicator)))
        .collect()
}

fn stratum(t: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| c <= t).count()
}

/// Per-stratum log partial likelihood by walking the arrivals one at a time.
/// `None` if an observed arrival has probability zero.
pub fn naive_loglik_by_stratum(
    rows: &[Row],
    n: u64,
    pi: f64,
    rho: &[f64],
    cuts: &[f64],
) -> Option<Vec<f64>> {
    let mut out = vec![0.0; cuts.len() + 1];
    let (mut gone, mut ones, mut zeros) = (0.0, 0.0, 0.0);
    for &(t, x) in rows {
        match x {
            None => gone += 1.0,
            Some(x) => {
                let left = n as f64 - gone;
                let n1 = left * pi - ones;
                let n0 = left * (1.0 - pi) - zeros;
                if n1 < 0.0 || n0 < 0.0 {
                    return None;
                }
                let k = stratum(t, cuts);
                let p1 = rho[k] * n1 / (n0 + rho[k] * n1);
                let p = if x == 1 { p1 } else { 1.0 - p1 };
                if !(p > 0.0) {
                    return None;
                }
                out[k] += p.ln();
                if x == 1 {
                    ones += 1.0;
                } else {
                    zeros += 1.0;
                }
            }
        }
    }
    Some(out)
}

pub fn naive_loglik(rows: &[Row], n: u64, pi: f64, rho: &[f64], cuts: &[f64]) -> Option<f64> {
    naive_loglik_by_stratum(rows, n, pi, rho, cuts).map(|v| v.iter().sum())
}

/// Range of `π` keeping every risk count at least `margin`.
pub fn safe_pi_range(rows: &[Row], n: u64, margin: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (mut gone, mut ones, mut zeros) = (0.0, 0.0, 0.0);
    for &(_, x) in rows {
        match x {
            None => gone += 1.0,
            Some(x) => {
                let left = n as f64 - gone;
                lo = lo.max((ones + margin) / left);
                hi = hi.min(1.0 - (zeros + margin) / left);
                if x == 1 {
                    ones += 1.0;
                } else {
                    zeros += 1.0;
                }
            }
        }
    }
    (lo, hi)
}

/// Range of `π` searched by the optimizer: the arriving label keeps at
/// least half a member at risk, the other label stays nonnegative.
pub fn optimizer_pi_range(rows: &[Row], n: u64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (mut gone, mut ones, mut zeros) = (0.0, 0.0, 0.0);
    for &(_, x) in rows {
        match x {
            None => gone += 1.0,
            Some(x) => {
                let left = n as f64 - gone;
                let own = if x == 1 { 0.5 } else { 0.0 };
                lo = lo.max((ones + own) / left);
                hi = hi.min(1.0 - (zeros + 0.5 - own) / left);
                if x == 1 {
                    ones += 1.0;
                } else {
                    zeros += 1.0;
                }
            }
        }
    }
    (lo, hi)
}

/// Random small dataset: strictly increasing times on `[0, tau)`, some
/// unlabeled arrivals, and a population a little larger than the sample.
pub fn random_rows(rng: &mut ChaCha8Rng, tau: f64) -> (Vec<Row>, u64) {
    let m = rng.random_range(4..=30);
    let mut times: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * tau).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let rows: Vec<Row> = times
        .into_iter()
        .map(|t| {
            let x = if rng.random::<f64>() < 0.15 {
                None
            } else {
                Some(u8::from(rng.random::<f64>() < 0.4))
            };
            (t, x)
        })
        .collect();
    let n = rows.len() as u64 + rng.random_range(3..25);
    (rows, n)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derivative of `f` at `x` by central differences with one Richardson step.
pub fn richardson(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Best point of a two-stage grid: step `0.01` in `π` and `log ρ`, then
/// `0.001` around the coarse optimum. Strata are maximised separately for
/// each `π`, which is valid because they share nothing but `π`.
pub struct GridOptimum {
    pub pi: f64,
    pub log_rho: Vec<f64>,
    pub loglik: f64,
}

fn best_log_rho(
    rows: &[Row],
    n: u64,
    pi: f64,
    cuts: &[f64],
    k: usize,
    grid: impl Iterator<Item = f64>,
) -> (f64, f64) {
    let mut rho = vec![1.0; cuts.len() + 1];
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for b in grid {
        rho[k] = b.exp();
        if let Some(v) = naive_loglik_by_stratum(rows, n, pi, &rho, cuts) {
            if v[k] > best.1 {
                best = (b, v[k]);
            }
        }
    }
    best
}

fn profile_at(
    rows: &[Row],
    n: u64,
    pi: f64,
    cuts: &[f64],
    around: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let mut log_rho = Vec::new();
    let mut total = 0.0;
    for k in 0..=cuts.len() {
        let (b, v) = match around {
            None => best_log_rho(
                rows,
                n,
                pi,
                cuts,
                k,
                (-400..=400).map(|j| f64::from(j) * 0.01),
            ),
            Some(c) => {
                let coarse = best_log_rho(
                    rows,
                    n,
                    pi,
                    cuts,
                    k,
                    (-30..=30).map(|j| c[k] + f64::from(j) * 0.01),
                );
                best_log_rho(
                    rows,
                    n,
                    pi,
                    cuts,
                    k,
                    (-10..=10).map(|j| coarse.0 + f64::from(j) * 0.001),
                )
            }
        };
        log_rho.push(b);
        total += v;
    }
    (log_rho, total)
}

/// Grid maximiser of each `log ρ_k` with `π` held fixed.
pub fn grid_profile(rows: &[Row], n: u64, pi: f64, cuts: &[f64]) -> (Vec<f64>, f64) {
    let (coarse, _) = profile_at(rows, n, pi, cuts, None);
    profile_at(rows, n, pi, cuts, Some(&coarse))
}

pub fn grid_search(rows: &[Row], n: u64, cuts: &[f64], lo: f64, hi: f64) -> GridOptimum {
    let mut best = GridOptimum {
        pi: f64::NAN,
        log_rho: Vec::new(),
        loglik: f64::NEG_INFINITY,
    };
    let consider = |pi: f64, around: Option<&[f64]>, best: &mut GridOptimum| {
        let (log_rho, v) = profile_at(rows, n, pi, cuts, around);
        if v > best.loglik {
            *best = GridOptimum {
                pi,
                log_rho,
                loglik: v,
            };
        }
    };
    let mut p = lo;
    while p < hi {
        consider(p, None, &mut best);
        p += 0.01;
    }
    consider(hi, None, &mut best);

    let centre = best.pi;
    let coarse_rho = best.log_rho.clone();
    for j in -10..=10 {
        let p = (centre + f64::from(j) * 0.001).clamp(lo, hi);
        consider(p, Some(&coarse_rho), &mut best);
    }
    best
}
