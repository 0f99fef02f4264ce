use std::time::Instant;

use arrival_core::comparators::{
    daily_proportion_series, extrapolate_trend, hazard_ratio_series_with, log_ratio_trend,
    poststratify, response_horizon, sample_proportion, DayFilter, Estimate, StratumTable,
};
use arrival_core::likelihood::PartialLikelihood;
use arrival_core::simulator::simulate_survey;
use arrival_core::study::{run_mc_study, McStudyConfig};
use arrival_core::{
    break_ties, fit, resolve_partition, FitResult, HazardPartition, ModelParams, SurveyDataset,
};

use crate::config::{Command, RunConfig};
use crate::error::Result;
use crate::io;
use crate::report::{Comparators, DataSummary, Diagnostics, Report, Timing};

/// Execute the configured command and write any requested side outputs.
/// The report itself is returned, not written.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.fit.tie_seed = cfg.seed;
    cfg.fit.validate()?;
    let cfg = &cfg;
    let mut report = Report::new(cfg.clone());
    match cfg.command {
        Command::Fit => run_fit(cfg, &mut report)?,
        Command::Simulate => run_simulate(cfg, &mut report)?,
        Command::Diagnose => run_diagnose(cfg, &mut report)?,
        Command::Compare => run_compare(cfg, &mut report)?,
        Command::McStudy => run_mc(cfg, &mut report)?,
    }
    report.timing = Some(Timing {
        elapsed_seconds: start.elapsed().as_secs_f64(),
    });
    Ok(report)
}

fn load(cfg: &RunConfig, report: &mut Report) -> Result<(SurveyDataset, HazardPartition)> {
    let tau = cfg.censor_time()?;
    let mut d = io::read_responses(cfg.input()?, cfg.population_size()?, tau)?;
    if let Some(path) = &cfg.calendar {
        d.calendar = Some(io::read_calendar(path)?);
    }
    let partition = resolve_partition(&cfg.partition, tau, d.calendar.as_ref())?;
    report.data = Some(DataSummary {
        population_size: d.population_size,
        censor_time: tau,
        n_responded: d.n_responded(),
        n_labeled: d.n_labeled(),
    });
    Ok((d, partition))
}

fn do_fit(
    cfg: &RunConfig,
    d: &SurveyDataset,
    partition: &HazardPartition,
    report: &mut Report,
) -> Result<FitResult> {
    let r = fit(d, partition, &cfg.fit)?;
    report.warnings.extend(r.warnings.iter().cloned());
    report
        .warnings
        .extend(r.weak_identification_warning.iter().cloned());
    if cfg.likelihood_debug {
        let lik = PartialLikelihood::new(&break_ties(d, cfg.fit.tie_seed), partition)?;
        let params = ModelParams {
            pi: r.pi_hat,
            rho: r.rho_hat.clone(),
        };
        let mut ev = lik.evaluate(&params)?;
        ev.per_event_terms = Some(lik.per_event_terms(&params)?);
        report.likelihood = Some(ev);
    }
    report.fit = Some(r.clone());
    Ok(r)
}

fn run_fit(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (d, partition) = load(cfg, report)?;
    do_fit(cfg, &d, &partition, report)?;
    Ok(())
}

fn run_simulate(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let scenario = cfg.scenario(cfg.seed)?;
    let sim = simulate_survey(&scenario)?;
    if let Some(path) = &cfg.data_out {
        io::write_responses(path, &sim.dataset)?;
        io::write_json(&path.with_extension("truth.json"), &sim.truth)?;
        if let Some(cal) = &sim.dataset.calendar {
            io::write_calendar(&path.with_extension("calendar.csv"), cal)?;
        }
    }
    report.data = Some(DataSummary {
        population_size: sim.dataset.population_size,
        censor_time: sim.dataset.censor_time.days(),
        n_responded: sim.dataset.n_responded(),
        n_labeled: sim.dataset.n_labeled(),
    });
    report.simulation = Some(sim.truth);
    Ok(())
}

fn run_diagnose(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (d, partition) = load(cfg, report)?;
    let (fitted, assumed_pi) = match (do_fit(cfg, &d, &partition, report), cfg.diagnose.assumed_pi)
    {
        (Ok(r), assumed) => {
            let pi = assumed.unwrap_or(r.pi_hat);
            (Some(r), pi)
        }
        (Err(e), Some(pi)) => {
            report.warnings.push(format!("fit failed: {e}"));
            (None, pi)
        }
        (Err(e), None) => return Err(e),
    };
    let filter = if cfg.diagnose.include_non_weekdays {
        DayFilter::AllDays
    } else {
        DayFilter::WeekdaysOnly
    };
    let daily = daily_proportion_series(&d);
    let hazard_ratio = hazard_ratio_series_with(&d, assumed_pi, filter)?;
    let log_ratio_trend = match log_ratio_trend(&hazard_ratio) {
        Ok(t) => Some(t),
        Err(e) => {
            report.warnings.push(format!("trend test skipped: {e}"));
            None
        }
    };
    if let Some(path) = &cfg.series_csv {
        let mut rows = daily.tidy_rows();
        rows.extend(hazard_ratio.tidy_rows());
        io::write_series_csv(path, &rows)?;
    }
    report.diagnostics = Some(Diagnostics {
        daily,
        hazard_ratio,
        log_ratio_trend,
        estimate_band: fitted.map(|r| (r.pi_hat - 2.0 * r.pi_se, r.pi_hat + 2.0 * r.pi_se)),
    });
    Ok(())
}

fn run_compare(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (d, partition) = load(cfg, report)?;
    let poststratified = if cfg.compare.strata.is_empty() {
        None
    } else {
        Some(poststratify(&StratumTable::new(
            cfg.compare.strata.clone(),
        )?)?)
    };
    let horizon = match cfg.compare.horizon {
        Some(h) => h,
        None => response_horizon(&d)?,
    };
    let extrapolated = match extrapolate_trend(&daily_proportion_series(&d), horizon) {
        Ok(e) => Some(e),
        Err(e) => {
            report.warnings.push(format!("extrapolation skipped: {e}"));
            None
        }
    };
    let fitted = match do_fit(cfg, &d, &partition, report) {
        Ok(r) => Some(Estimate {
            estimate: r.pi_hat,
            se: r.pi_se,
        }),
        Err(e) => {
            report.warnings.push(format!("fit failed: {e}"));
            None
        }
    };
    report.comparators = Some(Comparators {
        sample_proportion: sample_proportion(&d)?,
        poststratified,
        extrapolation_horizon: horizon,
        extrapolated,
        fitted,
    });
    Ok(())
}

fn run_mc(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let study = McStudyConfig {
        scenario: cfg.scenario(cfg.seed)?,
        partition: cfg.partition.clone(),
        replicates: cfg.mc_study.replicates,
        base_seed: cfg.seed,
        fit: cfg.fit.clone(),
    };
    let summary = run_mc_study(&study)?;
    let failed = summary.replicates - summary.fits_ok;
    if failed > 0 {
        report.warnings.push(format!(
            "{failed} of {} replicates failed to fit",
            summary.replicates
        ));
    }
    report.mc_study = Some(summary);
    Ok(())
}
