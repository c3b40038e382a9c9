//! Success statistics and report types.

use serde::{Deserialize, Serialize};

use crate::policy::SearchEventKind;

/// Mean of per-run success rates (percent).
pub fn mean(rates: &[f64]) -> f64 {
    if rates.is_empty() {
        return 0.0;
    }
    rates.iter().sum::<f64>() / rates.len() as f64
}

/// Population standard deviation of per-run success rates.
pub fn population_std(rates: &[f64]) -> f64 {
    if rates.is_empty() {
        return 0.0;
    }
    let m = mean(rates);
    (rates.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rates.len() as f64).sqrt()
}

/// Search counts by trigger kind, summed over all episodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub initial: u64,
    pub divergence: u64,
    pub time: u64,
    pub trajectory_end: u64,
}

impl EventCounts {
    pub fn record(&mut self, kind: SearchEventKind) {
        match kind {
            SearchEventKind::Initial => self.initial += 1,
            SearchEventKind::Divergence => self.divergence += 1,
            SearchEventKind::Time => self.time += 1,
            SearchEventKind::TrajectoryEnd => self.trajectory_end += 1,
        }
    }

    pub fn merge(&mut self, other: &EventCounts) {
        self.initial += other.initial;
        self.divergence += other.divergence;
        self.time += other.time;
        self.trajectory_end += other.trajectory_end;
    }
}

/// Outcome of one evaluation seed across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Success per run, index = run.
    pub successes: Vec<bool>,
}

/// The result of a batch evaluation: per-run success rates plus the
/// aggregate statistics reported as mean +/- std.
///
/// Wall-clock timings are printed, never serialized, so identical configs
/// produce byte-identical report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub policy: String,
    pub max_steps: u64,
    pub divergence_factor: f64,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub runs_per_seed: u32,
    pub max_episode_steps: u64,
    pub success_consecutive: u64,
    /// Percent success per run, over the seed list.
    pub per_run_rates: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    pub per_seed: Vec<SeedOutcome>,
    pub event_counts: EventCounts,
    #[serde(skip)]
    pub index_build_secs: f64,
    #[serde(skip)]
    pub episodes_secs: f64,
}

impl SuccessReport {
    /// `mean +/- std` with two decimals, the headline statistic.
    pub fn summary_line(&self) -> String {
        format!("{} success: {:.2} +/- {:.2} %", self.policy, self.mean, self.std_dev)
    }

    pub fn render_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "policy            : {}", self.policy);
        let _ = writeln!(
            out,
            "config            : max_steps={} divergence_factor={} epsilon={}",
            self.max_steps, self.divergence_factor, self.epsilon
        );
        let _ = writeln!(
            out,
            "episodes          : {} seeds x {} runs, {} steps each, K={}",
            self.seeds.len(),
            self.runs_per_seed,
            self.max_episode_steps,
            self.success_consecutive
        );
        let rates: Vec<String> = self.per_run_rates.iter().map(|r| format!("{r:.2}")).collect();
        let _ = writeln!(out, "per-run success % : [{}]", rates.join(", "));
        let _ = writeln!(out, "mean +/- std      : {:.2} +/- {:.2} %", self.mean, self.std_dev);
        let _ = writeln!(
            out,
            "searches          : initial={} divergence={} time={} trajectory_end={}",
            self.event_counts.initial,
            self.event_counts.divergence,
            self.event_counts.time,
            self.event_counts.trajectory_end
        );
        out
    }
}

/// One cell of the max-steps sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxStepsCell {
    pub max_steps: u64,
    pub per_run_rates: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

/// One cell of the divergence-factor sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCell {
    pub divergence_factor: f64,
    pub per_run_rates: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

/// The two one-dimensional sweeps of the ablation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub fixed_seed: u64,
    pub episodes_per_run: u32,
    pub runs: u32,
    pub max_episode_steps: u64,
    /// Cells varying max_steps at the default divergence factor.
    pub max_steps_sweep: Vec<MaxStepsCell>,
    /// Cells varying the divergence factor at the default max_steps.
    pub divergence_sweep: Vec<DivergenceCell>,
}

impl AblationReport {
    pub fn render_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "ablation: fixed_seed={} {} runs x {} episodes",
            self.fixed_seed, self.runs, self.episodes_per_run
        );
        let _ = writeln!(out, "max_steps sweep:");
        for cell in &self.max_steps_sweep {
            let _ = writeln!(
                out,
                "  n={:<5} {:6.2} +/- {:5.2} %",
                cell.max_steps, cell.mean, cell.std_dev
            );
        }
        let _ = writeln!(out, "divergence_factor sweep:");
        for cell in &self.divergence_sweep {
            let _ = writeln!(
                out,
                "  f={:<5} {:6.2} +/- {:5.2} %",
                cell.divergence_factor, cell.mean, cell.std_dev
            );
        }
        out
    }
}
