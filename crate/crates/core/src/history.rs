use std::collections::BTreeMap;

use crate::error::{MhdError, Result};

/// Center-point time series of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeHistory {
    pub times: Vec<f64>,
    pub u_center: Vec<f64>,
    pub b_center: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl ProbeHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append a sample; times must increase strictly.
    pub fn push(&mut self, t: f64, u: f64, b: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(MhdError::DegenerateHistory(format!("time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        self.u_center.push(u);
        self.b_center.push(b);
        Ok(())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    /// Samples with `t >= t0`.
    pub fn window(&self, t0: f64) -> (Vec<f64>, Vec<f64>) {
        self.times
            .iter()
            .zip(&self.u_center)
            .filter(|(t, _)| **t >= t0)
            .map(|(t, u)| (*t, *u))
            .unzip()
    }

    /// Times of the interior local maxima of `u_center`.
    pub fn local_maxima(&self) -> Vec<f64> {
        let u = &self.u_center;
        (1..u.len().saturating_sub(1))
            .filter(|&i| u[i] > u[i - 1] && u[i] >= u[i + 1])
            .map(|i| self.times[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_must_increase() {
        let mut h = ProbeHistory::new();
        h.push(0.0, 0.0, 0.0).unwrap();
        h.push(0.1, 1.0, 0.0).unwrap();
        assert!(h.push(0.1, 1.0, 0.0).is_err());
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn maxima_and_window() {
        let mut h = ProbeHistory::new();
        for i in 0..100 {
            let t = i as f64 * 0.01;
            h.push(t, (2.0 * std::f64::consts::PI * t).sin(), 0.0).unwrap();
        }
        let m = h.local_maxima();
        assert_eq!(m.len(), 1);
        assert!((m[0] - 0.25).abs() < 0.011);
        assert_eq!(h.window(0.5).0.len(), 50);
    }
}
