//! Seed-for-seed comparison of the passive and dual controllers. Every
//! controller sees the same disturbance stream for a given seed.

use crate::closed_loop::{run_closed_loop, ClosedLoopTrace, Controller};
use crate::config::{Experiment, Offline};

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub controller: Controller,
    pub seed: u64,
    pub completed: bool,
    /// Closed-loop cost over the completed steps.
    pub cost: f64,
    pub steps: usize,
    /// Largest support value of the last parameter set over its row
    /// directions.
    pub final_radius: f64,
    /// Failure label and step, if the run was cut short.
    pub failure: Option<(String, usize)>,
}

impl RunSummary {
    pub fn of(trace: &ClosedLoopTrace) -> Self {
        RunSummary {
            controller: trace.controller,
            seed: trace.seed,
            completed: trace.completed(),
            cost: trace.cost(),
            steps: trace.steps.len(),
            final_radius: trace.sets.last().map_or(f64::NAN, |s| s.rhs().max()),
            failure: trace.failure.as_ref().map(|f| (f.kind.label().to_string(), f.k)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerStats {
    pub controller: Controller,
    pub runs: usize,
    pub completed: usize,
    /// Over completed runs only; NaN when none completed.
    pub mean: f64,
    pub median: f64,
    /// `100·(passive mean − mean)/passive mean`, over seeds where both
    /// completed.
    pub reduction_percent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub runs: Vec<RunSummary>,
    pub stats: Vec<ControllerStats>,
}

impl ComparisonReport {
    pub fn stats_for(&self, c: Controller) -> Option<&ControllerStats> {
        self.stats.iter().find(|s| s.controller == c)
    }

    pub fn cost(&self, c: Controller, seed: u64) -> Option<f64> {
        self.runs
            .iter()
            .find(|r| r.controller == c && r.seed == seed && r.completed)
            .map(|r| r.cost)
    }
}

/// The passive controller followed by one dual controller per configured
/// `N̂`.
pub fn controllers(exp: &Experiment) -> Vec<Controller> {
    let mut out = vec![Controller::Passive];
    out.extend(exp.n_hat().iter().map(|&n_hat| Controller::Dual { n_hat }));
    out
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Summaries and statistics for a finished set of runs.
pub fn summarize(runs: Vec<RunSummary>, controllers: &[Controller]) -> ComparisonReport {
    let stats = controllers
        .iter()
        .map(|&c| {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.controller == c).collect();
            let costs: Vec<f64> = mine.iter().filter(|r| r.completed).map(|r| r.cost).collect();
            let reduction_percent = (c != Controller::Passive).then(|| {
                let (mut ours, mut theirs) = (Vec::new(), Vec::new());
                for r in mine.iter().filter(|r| r.completed) {
                    if let Some(p) = runs
                        .iter()
                        .find(|p| p.controller == Controller::Passive && p.seed == r.seed && p.completed)
                    {
                        ours.push(r.cost);
                        theirs.push(p.cost);
                    }
                }
                let base = mean(&theirs);
                100.0 * (base - mean(&ours)) / base
            });
            ControllerStats {
                controller: c,
                runs: mine.len(),
                completed: costs.len(),
                mean: mean(&costs),
                median: median(&costs),
                reduction_percent: reduction_percent.filter(|r| r.is_finite()),
            }
        })
        .collect();
    ComparisonReport { runs, stats }
}

/// Runs every controller on every seed, calling `on_run` after each run.
pub fn compare(
    exp: &Experiment,
    offline: &Offline,
    seeds: &[u64],
    mut on_run: impl FnMut(&ClosedLoopTrace),
) -> ComparisonReport {
    let cs = controllers(exp);
    let mut runs = Vec::with_capacity(seeds.len() * cs.len());
    for &seed in seeds {
        for &c in &cs {
            let trace = run_closed_loop(exp, offline, c, seed);
            on_run(&trace);
            runs.push(RunSummary::of(&trace));
        }
    }
    summarize(runs, &cs)
}
