//! Seeded Monte Carlo campaigns over random reconfigurations.
//!
//! Trial `k` draws everything from ChaCha8 seeded with the campaign seed on
//! stream `k`, so trials are independent of execution order and of how many
//! workers run them. Every strategy is evaluated on the same draw.

use std::io::Write;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::catalog::{median, HaloCatalog};
use crate::cr3bp::{Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};
use crate::kd::SolverConfig;
use crate::relative::RelativeState;
use crate::scenario::{plan_transfer, McConfig, PlantEvalSpec, StrategyOverride, StrategySpec, TruthSpec};
use crate::sim::{propagate_truth, run_metrics, RunMetrics};
use crate::stm::StmStrategy;

/// One sampled reconfiguration, nondimensional.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSample {
    pub trial: usize,
    pub family: String,
    /// Flat row index into the catalog.
    pub catalog_index: usize,
    pub chief0: SynodicState,
    pub deputy0: RelativeState,
    pub deputy_f: RelativeState,
    pub window: f64,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Log-uniform magnitude with a uniformly random sign.
fn signed_log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = log_uniform(rng, lo, hi);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Draws trial `trial` of the campaign.
pub fn sample_trial(cfg: &McConfig, catalog: &HaloCatalog, sys: &Cr3bpSystem, trial: usize) -> Result<TrialSample> {
    if catalog.is_empty() {
        return Err(Error::InvalidInput("halo catalog is empty".into()));
    }
    let mut rng = trial_rng(cfg.seed, trial);
    let catalog_index = rng.random_range(0..catalog.len());
    let (family, chief) = catalog.get(catalog_index).expect("index drawn within catalog");
    let relative = |rng: &mut ChaCha8Rng| {
        let rho = Vector3::from_fn(|_, _| signed_log_uniform(rng, cfg.position_min_km, cfg.position_max_km));
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * cfg.velocity_std_kmps);
        RelativeState::new(rho, v, 0.0).nondimensional(sys)
    };
    let deputy0 = relative(&mut rng);
    let deputy_f = relative(&mut rng);
    let window = log_uniform(&mut rng, cfg.window_min_tu, cfg.window_max_tu);
    Ok(TrialSample {
        trial,
        family: family.to_string(),
        catalog_index,
        chief0: SynodicState { t: 0.0, ..*chief },
        deputy0: RelativeState { t: 0.0, ..deputy0 },
        deputy_f: RelativeState { t: window, ..deputy_f },
        window,
    })
}

/// Resolves a campaign strategy name. A bare `matrix-exponential` uses the
/// campaign's exponential step.
pub fn campaign_strategy(name: &str, me_step_s: f64, sys: &Cr3bpSystem) -> Result<StmStrategy> {
    let over: StrategyOverride = name.parse()?;
    let base = StrategySpec::MatrixExponential { step_minutes: me_step_s / 60.0, plant_eval: PlantEvalSpec::SegmentStart };
    base.overridden_by(&over).resolve(sys)
}

/// Result of one strategy on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub strategy: String,
    pub metrics: Option<RunMetrics>,
    pub n_impulses: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub sample: TrialSample,
    pub outcomes: Vec<StrategyOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub seed: u64,
    pub strategies: Vec<String>,
    pub trials: Vec<TrialResult>,
}

/// Order statistics of one metric over the successful trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        Some(Self {
            median: median(values),
            mean: values.iter().sum::<f64>() / n,
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            count: values.len(),
        })
    }
}

/// Metrics that are pure functions of the campaign inputs.
pub const ACCURACY_METRICS: [(&str, fn(&RunMetrics) -> f64); 4] = [
    ("final_position_error_km", |m| m.final_position_error_km),
    ("final_position_error_pct", |m| m.final_error_pct),
    ("cost_mps", |m| m.cost_mps),
    ("final_rms_error_km", |m| m.final_rms_error_km),
];

/// Wall-clock metrics, which vary from run to run.
pub const RUNTIME_METRICS: [(&str, fn(&RunMetrics) -> f64); 2] = [
    ("stm_runtime_s", |m| m.stm_runtime_s),
    ("solver_runtime_s", |m| m.solver_runtime_s),
];

impl Campaign {
    /// Values of `metric` for `strategy` over trials where it succeeded.
    pub fn values(&self, strategy: &str, metric: fn(&RunMetrics) -> f64) -> Vec<f64> {
        self.trials
            .iter()
            .filter_map(|t| t.outcomes.iter().find(|o| o.strategy == strategy))
            .filter_map(|o| o.metrics.as_ref().map(metric))
            .collect()
    }

    pub fn stats(&self, strategy: &str, metric: fn(&RunMetrics) -> f64) -> Option<Stats> {
        Stats::of(&self.values(strategy, metric))
    }

    pub fn failures(&self, strategy: &str) -> usize {
        self.trials
            .iter()
            .filter_map(|t| t.outcomes.iter().find(|o| o.strategy == strategy))
            .filter(|o| o.metrics.is_none())
            .count()
    }

    /// One row per trial and strategy, without runtimes.
    pub fn write_trials_csv<W: Write>(&self, w: W, sys: &Cr3bpSystem) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "trial",
            "family",
            "catalog_index",
            "window_hours",
            "strategy",
            "status",
            "n_impulses",
            "cost_mps",
            "final_position_error_km",
            "final_position_error_pct",
            "final_rms_error_km",
        ])?;
        for t in &self.trials {
            for o in &t.outcomes {
                let mut rec = vec![
                    t.sample.trial.to_string(),
                    t.sample.family.clone(),
                    t.sample.catalog_index.to_string(),
                    format!("{:.16e}", sys.tu_to_hours(t.sample.window)),
                    o.strategy.clone(),
                ];
                match (&o.metrics, &o.error) {
                    (Some(m), _) => {
                        rec.push("ok".into());
                        rec.push(o.n_impulses.to_string());
                        rec.extend(
                            [m.cost_mps, m.final_position_error_km, m.final_error_pct, m.final_rms_error_km]
                                .iter()
                                .map(|v| format!("{v:.16e}")),
                        );
                    }
                    (None, e) => {
                        rec.push(format!("failed: {}", e.as_deref().unwrap_or("unknown")));
                        rec.extend(std::iter::repeat_n(String::new(), 5));
                    }
                }
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    fn write_stats_csv<W: Write>(&self, w: W, metrics: &[(&str, fn(&RunMetrics) -> f64)]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["metric".to_string(), "statistic".to_string()];
        header.extend(self.strategies.iter().cloned());
        wr.write_record(&header)?;
        for (name, f) in metrics {
            let stats: Vec<Option<Stats>> = self.strategies.iter().map(|s| self.stats(s, *f)).collect();
            for (label, pick) in [
                ("median", (|s: &Stats| s.median) as fn(&Stats) -> f64),
                ("mean", |s| s.mean),
                ("max", |s| s.max),
                ("min", |s| s.min),
            ] {
                let mut rec = vec![name.to_string(), label.to_string()];
                rec.extend(stats.iter().map(|s| s.as_ref().map_or(String::new(), |s| format!("{:.16e}", pick(s)))));
                wr.write_record(&rec)?;
            }
        }
        let mut rec = vec!["trials".to_string(), "succeeded".to_string()];
        rec.extend(self.strategies.iter().map(|s| (self.trials.len() - self.failures(s)).to_string()));
        wr.write_record(&rec)?;
        wr.flush()?;
        Ok(())
    }

    /// Table of median/mean/max/min of the accuracy and cost metrics.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_stats_csv(w, &ACCURACY_METRICS)
    }

    /// Same layout for the STM and solver runtimes.
    pub fn write_runtime_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_stats_csv(w, &RUNTIME_METRICS)
    }
}

fn run_trial(
    sample: TrialSample,
    strategies: &[(String, StmStrategy)],
    cfg: &McConfig,
    solver: &SolverConfig,
    truth: &TruthSpec,
    sys: &Cr3bpSystem,
) -> TrialResult {
    let tf = sample.window;
    let ballistic = propagate_truth(sys, &sample.chief0, &sample.deputy0, &[], tf, truth.tol, &[]);
    let outcomes = strategies
        .iter()
        .map(|(name, strategy)| {
            let run = || -> Result<(RunMetrics, usize)> {
                let ballistic = ballistic.as_ref().map_err(|e| Error::InvalidInput(e.to_string()))?;
                let out = plan_transfer(
                    sys,
                    &sample.chief0,
                    &sample.deputy0,
                    &sample.deputy_f,
                    tf,
                    cfg.n_grid_steps,
                    strategy,
                    solver,
                    truth.chief_tol,
                )?;
                let log = propagate_truth(sys, &sample.chief0, &sample.deputy0, &out.plan.impulses, tf, truth.tol, &[])?;
                let m = run_metrics(
                    out.plan.cost_mps(sys),
                    &log.final_deputy(),
                    &ballistic.final_deputy(),
                    &sample.deputy_f,
                    sys,
                )
                .with_runtimes(&out.report);
                Ok((m, out.plan.impulses.len()))
            };
            match run() {
                Ok((m, n)) => StrategyOutcome { strategy: name.clone(), metrics: Some(m), n_impulses: n, error: None },
                Err(e) => StrategyOutcome { strategy: name.clone(), metrics: None, n_impulses: 0, error: Some(e.to_string()) },
            }
        })
        .collect();
    TrialResult { sample, outcomes }
}

/// Runs the campaign on `workers` threads (0 uses all cores). Failed
/// strategy runs are recorded and the campaign continues.
pub fn monte_carlo(
    cfg: &McConfig,
    solver: &SolverConfig,
    truth: &TruthSpec,
    sys: &Cr3bpSystem,
    catalog: &HaloCatalog,
    workers: usize,
) -> Result<Campaign> {
    cfg.validate()?;
    solver.validate()?;
    let strategies = cfg
        .strategies
        .iter()
        .map(|s| Ok((s.clone(), campaign_strategy(s, cfg.me_step_s, sys)?)))
        .collect::<Result<Vec<_>>>()?;
    let samples = (0..cfg.n_trials)
        .map(|k| sample_trial(cfg, catalog, sys, k))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let trials = pool.install(|| {
        samples
            .into_par_iter()
            .map(|s| run_trial(s, &strategies, cfg, solver, truth, sys))
            .collect()
    });
    Ok(Campaign { seed: cfg.seed, strategies: cfg.strategies.clone(), trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> McConfig {
        McConfig {
            n_trials: 3,
            n_grid_steps: 60,
            window_min_tu: 0.2,
            window_max_tu: 0.5,
            me_step_s: 600.0,
            ..McConfig::default()
        }
    }

    #[test]
    fn samples_follow_the_configured_ranges() {
        let sys = Cr3bpSystem::earth_moon();
        let cat = HaloCatalog::bundled(&sys).unwrap();
        let cfg = McConfig::default();
        for k in 0..200 {
            let s = sample_trial(&cfg, &cat, &sys, k).unwrap();
            assert!(s.window >= cfg.window_min_tu && s.window <= cfg.window_max_tu);
            for x in s.deputy0.rho.iter().chain(s.deputy_f.rho.iter()) {
                let km = x.abs() * sys.du;
                assert!(km >= cfg.position_min_km * (1.0 - 1e-12) && km <= cfg.position_max_km * (1.0 + 1e-12));
            }
            assert_eq!(cat.get(s.catalog_index).unwrap().0, s.family);
            assert_eq!(s.deputy_f.t, s.window);
        }
    }

    #[test]
    fn log_uniform_decades_are_equally_likely() {
        let mut rng = trial_rng(1, 0);
        let n = 100_000;
        let below: usize = (0..n).filter(|_| log_uniform(&mut rng, 0.1, 1000.0) < 1.0).count();
        // one decade of four
        let p = below as f64 / n as f64;
        assert!((p - 0.25).abs() < 0.01, "{p}");
    }

    #[test]
    fn trials_are_order_independent() {
        let sys = Cr3bpSystem::earth_moon();
        let cat = HaloCatalog::bundled(&sys).unwrap();
        let cfg = McConfig::default();
        let a = sample_trial(&cfg, &cat, &sys, 5).unwrap();
        let _ = sample_trial(&cfg, &cat, &sys, 4).unwrap();
        let b = sample_trial(&cfg, &cat, &sys, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_trial(&cfg, &cat, &sys, 6).unwrap();
        assert_ne!(a.catalog_index as f64 + a.window, c.catalog_index as f64 + c.window);
    }

    #[test]
    fn strategy_names_resolve() {
        let sys = Cr3bpSystem::earth_moon();
        let me = campaign_strategy("matrix-exponential", 60.0, &sys).unwrap();
        assert_eq!(me, StmStrategy::matrix_exponential(sys.seconds_to_tu(60.0)));
        assert_eq!(campaign_strategy("ni", 60.0, &sys).unwrap(), StmStrategy::numerical_integration(1e-12));
        assert_eq!(campaign_strategy("ya", 60.0, &sys).unwrap(), StmStrategy::YamanakaAnkersen);
        assert!(campaign_strategy("bogus", 60.0, &sys).is_err());
    }

    #[test]
    fn campaign_is_reproducible_across_worker_counts() {
        let sys = Cr3bpSystem::earth_moon();
        let cat = HaloCatalog::bundled(&sys).unwrap();
        let cfg = small_cfg();
        let a = monte_carlo(&cfg, &SolverConfig::default(), &TruthSpec::default(), &sys, &cat, 1).unwrap();
        let b = monte_carlo(&cfg, &SolverConfig::default(), &TruthSpec::default(), &sys, &cat, 3).unwrap();
        let csv = |c: &Campaign| {
            let mut t = Vec::new();
            c.write_trials_csv(&mut t, &sys).unwrap();
            c.write_summary_csv(&mut t).unwrap();
            t
        };
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.trials.len(), 3);
        for t in &a.trials {
            for o in &t.outcomes {
                assert!(o.metrics.is_some(), "trial {} {}: {:?}", t.sample.trial, o.strategy, o.error);
            }
        }
    }

    #[test]
    fn single_trial_stats_collapse() {
        let sys = Cr3bpSystem::earth_moon();
        let cat = HaloCatalog::bundled(&sys).unwrap();
        let cfg = McConfig { n_trials: 1, strategies: vec!["ni".into()], ..small_cfg() };
        let c = monte_carlo(&cfg, &SolverConfig::default(), &TruthSpec::default(), &sys, &cat, 1).unwrap();
        for (_, f) in ACCURACY_METRICS {
            let s = c.stats("ni", f).unwrap();
            assert_eq!(s.count, 1);
            assert!(s.median == s.mean && s.mean == s.max && s.max == s.min);
        }
    }

    #[test]
    fn stats_of_known_values() {
        let s = Stats::of(&[3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
        assert_eq!((s.median, s.mean, s.max, s.min), (3.0, 2.8, 5.0, 1.0));
        assert_eq!(Stats::of(&[2.0, 4.0]).unwrap().median, 3.0);
        assert!(Stats::of(&[]).is_none());
    }
}
