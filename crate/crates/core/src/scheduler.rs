//! Task-adaptive curriculum: per-task statistics, calibration, smoothing and
//! sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::TaskType;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskStats {
    pub n: f64,
    pub s: f64,
    pub s_sched: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub a0: f64,
    pub n0: f64,
    pub delta: f64,
    pub tau_numeric: f64,
    pub tau_default: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            a0: 0.35,
            n0: 2.0,
            delta: 0.05,
            tau_numeric: 0.50,
            tau_default: 1.00,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SchedulerError {
    #[error("feasible task set is empty")]
    EmptyFeasibleSet,
    #[error("invalid scheduler config: {0}")]
    InvalidConfig(String),
    #[error("accuracy {0} outside [0, 1]")]
    AccuracyOutOfRange(f64),
    #[error("duplicate weight {0} is below 1")]
    WeightTooSmall(f64),
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let bad = |m: &str| Err(SchedulerError::InvalidConfig(m.to_string()));
        if !(self.a0 > 0.0 && self.a0 < 1.0) {
            return bad("a0 must lie in (0, 1)");
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return bad("n0 must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.tau_numeric > 0.0 && self.tau_default > 0.0) {
            return bad("tau values must be positive");
        }
        Ok(())
    }

    pub fn tau(&self, task: TaskType) -> f64 {
        if task.is_numeric() {
            self.tau_numeric
        } else {
            self.tau_default
        }
    }

    /// Difficulty-normalized accuracy, clipped to [0, 1].
    pub fn calibrate(&self, accuracy: f64, task: TaskType) -> f64 {
        (accuracy / self.tau(task)).clamp(0.0, 1.0)
    }

    pub fn smoothed_accuracy(&self, stats: &TaskStats) -> f64 {
        (stats.s_sched + self.a0 * self.n0) / (stats.n + self.n0)
    }
}

pub fn calibrate(accuracy: f64, task: TaskType) -> f64 {
    SchedulerConfig::default().calibrate(accuracy, task)
}

/// Per-task statistics for one run or session.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchedulerState {
    pub stats: BTreeMap<TaskType, TaskStats>,
}

impl SchedulerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, task: TaskType) -> TaskStats {
        self.stats.get(&task).copied().unwrap_or_default()
    }

    pub fn smoothed_accuracy(&self, task: TaskType, cfg: &SchedulerConfig) -> f64 {
        cfg.smoothed_accuracy(&self.get(task))
    }

    /// Sampling probabilities over the feasible set, in canonical task order.
    pub fn sampling_distribution(
        &self,
        feasible: &BTreeSet<TaskType>,
        cfg: &SchedulerConfig,
    ) -> Result<Vec<(TaskType, f64)>, SchedulerError> {
        if feasible.is_empty() {
            return Err(SchedulerError::EmptyFeasibleSet);
        }
        let weights: Vec<(TaskType, f64)> = feasible
            .iter()
            .map(|&t| (t, cfg.delta.max(1.0 - self.smoothed_accuracy(t, cfg))))
            .collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        Ok(weights.into_iter().map(|(t, w)| (t, w / total)).collect())
    }

    /// Adds one weighted observation. Retained-invalid questions count
    /// towards n only.
    pub fn update(
        &mut self,
        task: TaskType,
        raw_accuracy: f64,
        duplicate_weight: f64,
        retained_invalid: bool,
        cfg: &SchedulerConfig,
    ) -> Result<(), SchedulerError> {
        if !(0.0..=1.0).contains(&raw_accuracy) {
            return Err(SchedulerError::AccuracyOutOfRange(raw_accuracy));
        }
        if !(duplicate_weight >= 1.0) {
            return Err(SchedulerError::WeightTooSmall(duplicate_weight));
        }
        let entry = self.stats.entry(task).or_default();
        entry.n += duplicate_weight;
        if !retained_invalid {
            entry.s += duplicate_weight * raw_accuracy;
            entry.s_sched += duplicate_weight * cfg.calibrate(raw_accuracy, task);
        }
        Ok(())
    }

    /// Draws one task by inverse-CDF over the canonical order.
    pub fn sample_task<R: Rng + ?Sized>(
        &self,
        feasible: &BTreeSet<TaskType>,
        cfg: &SchedulerConfig,
        rng: &mut R,
    ) -> Result<TaskType, SchedulerError> {
        let dist = self.sampling_distribution(feasible, cfg)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (t, p) in &dist {
            acc += p;
            if u < acc {
                return Ok(*t);
            }
        }
        Ok(dist.last().map(|(t, _)| *t).expect("non-empty distribution"))
    }

    /// Line-delimited snapshot: header then `task\tn\ts\ts_sched` per task.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::from("task\tn\ts\ts_sched\n");
        for (t, st) in &self.stats {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", t.id(), st.n, st.s, st.s_sched);
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, SnapshotError> {
        let mut state = SchedulerState::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("task\t")) {
                continue;
            }
            let bad = || SnapshotError::Malformed(i + 1, line.to_string());
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad());
            }
            let task: TaskType = cols[0].parse().map_err(|_| bad())?;
            let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0);
            let (Some(n), Some(s), Some(s_sched)) = (num(cols[1]), num(cols[2]), num(cols[3])) else {
                return Err(bad());
            };
            if s > n || s_sched > n {
                return Err(bad());
            }
            state.stats.insert(task, TaskStats { n, s, s_sched });
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        std::fs::write(path, self.to_snapshot()).map_err(|e| SnapshotError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let text = std::fs::read_to_string(path).map_err(|e| SnapshotError::Io(e.to_string()))?;
        Self::from_snapshot(&text)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SnapshotError {
    #[error("snapshot line {0} is malformed: {1}")]
    Malformed(usize, String),
    #[error("snapshot io: {0}")]
    Io(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use TaskType::*;

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate(0.4, ObjectSize), 0.8);
        assert_eq!(calibrate(0.7, ObjectCounting), 1.0);
        assert_eq!(calibrate(0.7, RelativeDirection), 0.7);
    }

    #[test]
    fn smoothing_examples() {
        let cfg = SchedulerConfig::default();
        assert_eq!(cfg.smoothed_accuracy(&TaskStats::default()), 0.35);
        let st = TaskStats { n: 8.0, s: 8.0, s_sched: 8.0 };
        assert!((cfg.smoothed_accuracy(&st) - 0.87).abs() < 1e-12);
    }

    #[test]
    fn two_task_distribution() {
        let cfg = SchedulerConfig::default();
        let mut st = SchedulerState::new();
        // ā = (s + 0.7) / (n + 2) = 0.95 with n = 11, s = 11.65.
        st.stats.insert(ObjectSize, TaskStats { n: 11.0, s: 11.65, s_sched: 11.65 });
        let feasible: BTreeSet<_> = [ObjectCounting, ObjectSize].into();
        let d = st.sampling_distribution(&feasible, &cfg).unwrap();
        assert!((d[0].1 - 0.65 / 0.70).abs() < 1e-12);
        assert!((d[1].1 - 0.05 / 0.70).abs() < 1e-12);
    }

    #[test]
    fn empty_and_singleton() {
        let cfg = SchedulerConfig::default();
        let st = SchedulerState::new();
        assert_eq!(
            st.sampling_distribution(&BTreeSet::new(), &cfg),
            Err(SchedulerError::EmptyFeasibleSet)
        );
        let one: BTreeSet<_> = [DepthOrder].into();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(st.sample_task(&one, &cfg, &mut rng).unwrap(), DepthOrder);
        }
    }

    #[test]
    fn retained_invalid_counts_weight_only() {
        let cfg = SchedulerConfig::default();
        let mut st = SchedulerState::new();
        st.update(RoomSize, 1.0, 2.0, true, &cfg).unwrap();
        assert_eq!(st.get(RoomSize), TaskStats { n: 2.0, s: 0.0, s_sched: 0.0 });
        st.update(RoomSize, 1.0, 3.0, false, &cfg).unwrap();
        assert_eq!(st.get(RoomSize), TaskStats { n: 5.0, s: 3.0, s_sched: 3.0 });
        assert!(st.update(RoomSize, 1.5, 1.0, false, &cfg).is_err());
        assert!(st.update(RoomSize, 0.5, 0.0, false, &cfg).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let cfg = SchedulerConfig::default();
        let mut st = SchedulerState::new();
        st.update(ObjectSize, 0.3, 3.0, false, &cfg).unwrap();
        st.update(CameraMotion, 0.0, 1.0, true, &cfg).unwrap();
        let back = SchedulerState::from_snapshot(&st.to_snapshot()).unwrap();
        assert_eq!(back, st);
        assert!(SchedulerState::from_snapshot("object_size\t1\t2\t0\n").is_err());
    }
}
