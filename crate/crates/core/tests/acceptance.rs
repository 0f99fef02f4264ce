//! Acceptance suite: one line per criterion, nonzero exit if any fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod oracles;

use std::time::Instant;

use arrival_core::comparators::*;
use arrival_core::likelihood::PartialLikelihood;
use arrival_core::simulator::*;
use arrival_core::study::{run_mc_study, McStudyConfig};
use arrival_core::*;
use oracles::*;
use rand::Rng;

const SEED: u64 = 20220531;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn scenario_data() -> SurveyDataset {
    simulate_survey(&ScenarioConfig::fevs_like(100_000, SEED))
        .unwrap()
        .dataset
}

fn partition_for(d: &SurveyDataset, spec: &str) -> HazardPartition {
    resolve_partition(
        &spec.parse().unwrap(),
        d.censor_time.days(),
        d.calendar.as_ref(),
    )
    .unwrap()
}

fn recovery(d: &SurveyDataset) -> Outcome {
    let part = partition_for(d, "constant");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let start = Instant::now();
    let r = pool.install(|| fit(d, &part, &FitConfig::default()));
    let secs = start.elapsed().as_secs_f64();
    match r {
        Ok(r) => {
            let pi_ok = within(r.pi_hat, 0.2, 3.0 * r.pi_se);
            let rho_ok = within(r.rho_hat[0], 2.0, 3.0 * r.rho_se[0]);
            outcome(
                pi_ok && rho_ok && secs < 10.0,
                format!(
                    "pi_hat {:.4} (se {:.4}), rho_hat {:.3} (se {:.3}), {secs:.3}s",
                    r.pi_hat, r.pi_se, r.rho_hat[0], r.rho_se[0]
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn proportion_drift(d: &SurveyDataset) -> Outcome {
    let s = daily_proportion_series(d);
    let first = s
        .proportions
        .first()
        .and_then(|r| r.proportion)
        .unwrap_or(f64::NAN);
    let last = s
        .proportions
        .last()
        .and_then(|r| r.proportion)
        .unwrap_or(f64::NAN);
    let p = sample_proportion(d).unwrap().estimate;
    outcome(
        within(first, 0.35, 0.02) && within(last, 0.27, 0.02) && within(p, 0.31, 0.01),
        format!("first day {first:.4}, last day {last:.4}, sample proportion {p:.4}"),
    )
}

fn ratio_diagnostic(d: &SurveyDataset) -> Outcome {
    let at = |pi| log_ratio_trend(&hazard_ratio_series(d, pi)?);
    match (at(0.2), at(0.34)) {
        (Ok(a), Ok(b)) => outcome(
            !a.significant && b.significant && b.slope < 0.0,
            format!(
                "pi 0.20: slope {:.5} p {:.3}; pi 0.34: slope {:.5} p {:.2e}",
                a.slope, a.p_value, b.slope, b.p_value
            ),
        ),
        (a, b) => outcome(false, format!("{a:?} {b:?}")),
    }
}

fn collider() -> Outcome {
    let pop = simulate_collider_population(&ColliderSpec::supervisor_collider()).unwrap();
    let t = pop.stratum_table();
    let sample = t.pooled().unwrap().estimate;
    let post = poststratify(&t).unwrap().estimate;
    let truth = pop.true_proportion();
    outcome(
        within(sample, 0.47, 1e-12) && within(post, 0.35, 1e-12) && within(truth, 0.5, 1e-12),
        format!("sample {sample}, poststratified {post}, truth {truth}"),
    )
}

fn supervisor_arithmetic() -> Outcome {
    let row = |name: &str, interest, reference| StratumRow {
        name: name.to_string(),
        population_share: 0.5,
        interest,
        reference,
    };
    let t = StratumTable::new(vec![
        row("supervisor", 80, 20),
        row("non-supervisor", 20, 80),
    ])
    .unwrap();
    let e = poststratify(&t).unwrap().estimate;
    outcome(e == 0.5, format!("poststratified {e}"))
}

fn extrapolation() -> Outcome {
    let proportions = (0..42u32)
        .map(|day| {
            let p = 0.35 - 0.08 * (f64::from(day) + 0.5) / 42.0;
            let interest = (p * 10_000.0).round() as u64;
            DailyProportion {
                day,
                class: None,
                interest,
                reference: 10_000 - interest,
                proportion: Some(interest as f64 / 10_000.0),
                se: None,
            }
        })
        .collect();
    let s = DiagnosticsSeries {
        proportions,
        ..Default::default()
    };
    match extrapolate_trend(&s, 126.0) {
        Ok(e) => outcome(within(e, 0.23, 0.005), format!("extrapolated {e:.4}")),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn derivative_oracles() -> Outcome {
    let tau = 10.0;
    let mut r = rng(SEED);
    let (mut checked, mut worst_score, mut worst_hess, mut offdiag_ok) =
        (0, 0.0_f64, 0.0_f64, true);
    while checked < 60 {
        let (rows, n) = random_rows(&mut r, tau);
        let k = r.random_range(1..=3usize);
        let cuts: Vec<f64> = (1..k).map(|j| tau * j as f64 / k as f64).collect();
        let part = HazardPartition::from_breakpoints(&cuts, tau).unwrap();
        let d = dataset(&rows, n, tau);
        let Ok(lik) = PartialLikelihood::new(&d, &part) else {
            continue;
        };
        let (lo, hi) = safe_pi_range(&rows, n, 1.0);
        if !(lo < hi) {
            continue;
        }
        let pi = lo + r.random::<f64>() * (hi - lo);
        let rho: Vec<f64> = (0..k).map(|_| r.random_range(-1.0f64..1.0).exp()).collect();
        let params = ModelParams::new(pi, rho.clone()).unwrap();
        let ev = lik.evaluate(&params).unwrap();
        let h = 1e-4 * pi.min(1.0 - pi).min(pi - lo + 1e-3).min(hi - pi + 1e-3);
        let ll = |p: f64, rho: &[f64]| naive_loglik(&rows, n, p, rho, &cuts).unwrap();
        let sc = |p: f64, rho: Vec<f64>| lik.evaluate(&ModelParams { pi: p, rho }).unwrap().score;
        let with = |j: usize, x: f64| {
            let mut v = rho.clone();
            v[j] = x;
            v
        };

        worst_score = worst_score.max(rel_err(ev.score[0], richardson(|p| ll(p, &rho), pi, h)));
        worst_hess = worst_hess.max(rel_err(
            ev.hessian.pi_pi,
            richardson(|p| sc(p, rho.clone())[0], pi, h),
        ));
        for j in 0..k {
            let hj = 1e-4 * rho[j];
            worst_score = worst_score.max(rel_err(
                ev.score[1 + j],
                richardson(|x| ll(pi, &with(j, x)), rho[j], hj),
            ));
            worst_hess = worst_hess.max(rel_err(
                ev.hessian.pi_rho[j],
                richardson(|p| sc(p, rho.clone())[1 + j], pi, h),
            ));
            worst_hess = worst_hess.max(rel_err(
                ev.hessian.rho_rho[j],
                richardson(|x| sc(pi, with(j, x))[1 + j], rho[j], hj),
            ));
            for i in 0..k {
                if i != j {
                    let fd = richardson(|x| sc(pi, with(j, x))[1 + i], rho[j], hj);
                    offdiag_ok &= fd == 0.0 && ev.hessian.to_dense()[(1 + i, 1 + j)] == 0.0;
                }
            }
        }
        checked += 1;
    }
    outcome(
        worst_score < 1e-5 && worst_hess < 1e-4 && offdiag_ok,
        format!(
            "{checked} datasets, worst score rel err {worst_score:.1e}, worst hessian rel err {worst_hess:.1e}, rho-rho off-diagonals zero: {offdiag_ok}"
        ),
    )
}

fn grid_oracle() -> Outcome {
    let n = 50;
    let (mut agreed, mut tried, mut worst) = (0, 0, 0.0_f64);
    let mut seed = SEED;
    while agreed < 20 && tried < 80 {
        seed += 1;
        tried += 1;
        let k = 1 + (tried % 2);
        let cfg = ScenarioConfig {
            population_size: n,
            true_pi: 0.4,
            hazard: HazardSpec::constant(0.05, 2.5),
            censor_time: 30.0,
            item_response_rate: 0.9,
            rng_seed: seed,
            calendar: None,
        };
        let d = simulate_survey(&cfg).unwrap().dataset;
        let cuts: Vec<f64> = if k == 2 { vec![8.0] } else { vec![] };
        let part = HazardPartition::from_breakpoints(&cuts, 30.0).unwrap();
        let Ok(r) = fit(&d, &part, &FitConfig::default()) else {
            continue;
        };
        let rows = rows_of(&d);
        let (lo, hi) = optimizer_pi_range(&rows, n);
        let g = grid_search(&rows, n, &cuts, lo, hi);
        let (rho_at_fit, _) = grid_profile(&rows, n, r.pi_hat, &cuts);
        let mut gap = (r.pi_hat - g.pi).abs();
        for (f, o) in r.rho_hat.iter().zip(&rho_at_fit) {
            gap = gap.max((f.ln() - o).abs());
        }
        let ll_ok = r.loglik_at_max >= g.loglik - 1e-9;
        worst = worst.max(if ll_ok { gap } else { f64::INFINITY });
        agreed += 1;
    }
    outcome(
        agreed >= 20 && worst <= 1e-3 + 1e-9,
        format!(
            "{agreed} fits compared ({tried} simulated), largest gap {worst:.1e} against cell 1e-3"
        ),
    )
}

fn calibration() -> Outcome {
    let cfg = McStudyConfig {
        scenario: ScenarioConfig::fevs_like(100_000, SEED),
        partition: PartitionSpec::Constant,
        replicates: 200,
        base_seed: SEED,
        fit: FitConfig::default(),
    };
    match run_mc_study(&cfg) {
        Ok(s) => outcome(
            s.fits_ok == 200
                && (0.90..=0.99).contains(&s.coverage)
                && (0.75..=1.25).contains(&s.sd_ratio),
            format!(
                "{} of {} fits, coverage {:.3}, SD(pi_hat)/mean(se) {:.3}, bias {:.4}",
                s.fits_ok, s.replicates, s.coverage, s.sd_ratio, s.bias
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn weak_identification(d: &SurveyDataset) -> Outcome {
    let daily = partition_for(d, "every-1-weekdays");
    let k = daily.n_strata();
    let fine = fit(d, &daily, &FitConfig::default());
    let coarse = fit(d, &partition_for(d, "constant"), &FitConfig::default());
    match (fine, coarse) {
        (Ok(a), Ok(b)) => outcome(
            a.weak_identification_warning.is_some() && b.weak_identification_warning.is_none(),
            format!(
                "K={k}: warned {}; K=1: warned {}",
                a.weak_identification_warning.is_some(),
                b.weak_identification_warning.is_some()
            ),
        ),
        (a, b) => outcome(false, format!("{:?} / {:?}", a.err(), b.err())),
    }
}

fn degenerate() -> Outcome {
    let full = ScenarioConfig {
        population_size: 5_000,
        true_pi: 0.3,
        hazard: HazardSpec::constant(0.05, 2.0),
        censor_time: f64::INFINITY,
        item_response_rate: 1.0,
        rng_seed: SEED,
        calendar: None,
    };
    full.validate().unwrap();
    let sim = simulate_survey(&full).unwrap();
    let tau = sim.dataset.censor_time.days();
    let a = fit(
        &sim.dataset,
        &HazardPartition::constant(tau),
        &FitConfig::default(),
    );

    let flat = ScenarioConfig::weekly_survey(100_000, SEED, 0.2, 1.0, 0.33);
    let d = simulate_survey(&flat).unwrap().dataset;
    let b = fit(&d, &HazardPartition::constant(42.0), &FitConfig::default());
    let p = sample_proportion(&d).unwrap().estimate;
    match (a, b) {
        (Ok(a), Ok(b)) => outcome(
            within(a.pi_hat, sim.truth.true_pi, 1e-8) && within(b.pi_hat, p, 3.0 * b.pi_se),
            format!(
                "fully observed: pi_hat {} vs truth {}; rho=1: pi_hat {:.4} (se {:.4}) vs sample {p:.4}",
                a.pi_hat, sim.truth.true_pi, b.pi_hat, b.pi_se
            ),
        ),
        (a, b) => outcome(false, format!("{:?} / {:?}", a.err(), b.err())),
    }
}

type Check<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let d = scenario_data();
    let criteria: Vec<Check> = vec![
        ("recovery", Box::new(|| recovery(&d))),
        ("proportion drift", Box::new(|| proportion_drift(&d))),
        ("hazard-ratio diagnostic", Box::new(|| ratio_diagnostic(&d))),
        ("collider table", Box::new(collider)),
        ("supervisor arithmetic", Box::new(supervisor_arithmetic)),
        ("extrapolation", Box::new(extrapolation)),
        ("derivative oracles", Box::new(derivative_oracles)),
        ("grid oracle", Box::new(grid_oracle)),
        ("statistical calibration", Box::new(calibration)),
        ("weak identification", Box::new(|| weak_identification(&d))),
        ("degenerate exactness", Box::new(degenerate)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<24} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
