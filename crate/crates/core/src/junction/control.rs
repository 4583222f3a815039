use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant junction control `Π(t)` on `[0, T]`.
///
/// `values[k]` holds on `[breakpoints[k], breakpoints[k+1])`; the last value
/// is held for `t ≥ T`. Control vectors are measured in the Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl ControlSchedule {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self { breakpoints, values };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(horizon: f64, value: Vec<f64>) -> Self {
        Self { breakpoints: vec![0.0, horizon], values: vec![value] }
    }

    /// `m` equal intervals on `[0, horizon]`.
    pub fn uniform(horizon: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.len();
        let breakpoints = (0..=m).map(|k| horizon * k as f64 / m.max(1) as f64).collect();
        Self::new(breakpoints, values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.breakpoints.len() != self.values.len() + 1 {
            return Err(Error::InvalidScenario(
                "control needs one value per breakpoint interval".into(),
            ));
        }
        if self.breakpoints[0] != 0.0 {
            return Err(Error::InvalidScenario("control must start at t = 0".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidScenario("control breakpoints must increase".into()));
        }
        let n = self.values[0].len();
        if n == 0 || self.values.iter().any(|v| v.len() != n || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidScenario("control values must be finite vectors of equal length".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    fn index_at(&self, t: f64) -> usize {
        // right-continuous lookup
        let k = self.breakpoints.partition_point(|&b| b <= t);
        k.saturating_sub(1).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.index_at(t)]
    }

    /// First breakpoint strictly after `t`, excluding the horizon.
    pub fn next_switch_after(&self, t: f64) -> Option<f64> {
        let last = self.breakpoints.len() - 1;
        self.breakpoints[1..last].iter().copied().find(|&b| b > t)
    }

    /// `TV(Π)` on `[0, T]`.
    pub fn tv(&self) -> f64 {
        self.values.windows(2).map(|w| dist2(&w[0], &w[1])).sum()
    }

    /// Total variation of the remaining trace `𝒯_t Π`.
    pub fn tv_after(&self, t: f64) -> f64 {
        let last = self.breakpoints.len() - 1;
        (1..last)
            .filter(|&k| self.breakpoints[k] > t)
            .map(|k| dist2(&self.values[k - 1], &self.values[k]))
            .sum()
    }

    /// Largest Euclidean norm over the interval values.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| norm2(v)).fold(0.0, f64::max)
    }

    /// `∫_{t0}^{t1} ‖Π − Π̃‖ dt`, exact for piecewise-constant data.
    pub fn l1_distance(&self, other: &ControlSchedule, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .filter(|&b| b > t0 && b < t1)
            .collect();
        cuts.push(t0);
        cuts.push(t1);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        cuts.windows(2)
            .map(|w| (w[1] - w[0]) * dist2(self.value_at(w[0]), other.value_at(w[0])))
            .sum()
    }

    /// `∫_0^T f(Π(t)) dt`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| (w[1] - w[0]) * f(v))
            .sum()
    }

    /// Right translation `s ↦ Π(t + s)`, restricted to `[0, T − t]`.
    pub fn translated(&self, t: f64) -> ControlSchedule {
        let horizon = (self.horizon() - t).max(0.0);
        let k0 = self.index_at(t);
        let mut breakpoints = vec![0.0];
        let mut values = vec![self.values[k0].clone()];
        for k in k0 + 1..self.values.len() {
            let b = self.breakpoints[k] - t;
            if b >= horizon {
                break;
            }
            breakpoints.push(b);
            values.push(self.values[k].clone());
        }
        breakpoints.push(if horizon > 0.0 { horizon } else { f64::MIN_POSITIVE });
        ControlSchedule { breakpoints, values }
    }

    /// Copy with the horizon moved to `horizon`, keeping values in place.
    pub fn with_horizon(&self, horizon: f64) -> Result<ControlSchedule> {
        let mut breakpoints: Vec<f64> = self.breakpoints.iter().copied().filter(|&b| b < horizon).collect();
        let values = self.values[..breakpoints.len()].to_vec();
        breakpoints.push(horizon);
        ControlSchedule::new(breakpoints, values)
    }
}
