//! Verification reports and the thresholds that judge them.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Not judged: too little data or a purely descriptive statistic.
    Info,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }
}

/// One judged statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub check: String,
    pub statistic: String,
    pub estimate: f64,
    pub ci: Option<(f64, f64)>,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub verdict: Verdict,
    pub sample_sizes: Vec<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Entry {
    pub fn new(check: &str, statistic: &str, estimate: f64, verdict: Verdict) -> Self {
        Entry {
            check: check.into(),
            statistic: statistic.into(),
            estimate,
            ci: None,
            target: None,
            tolerance: None,
            verdict,
            sample_sizes: Vec::new(),
            seed: 0,
            note: None,
        }
    }

    pub fn ci(mut self, lo: f64, hi: f64) -> Self {
        self.ci = Some((lo, hi));
        self
    }

    pub fn target(mut self, target: f64, tolerance: f64) -> Self {
        self.target = Some(target);
        self.tolerance = Some(tolerance);
        self
    }

    pub fn sizes(mut self, sizes: &[usize]) -> Self {
        self.sample_sizes = sizes.to_vec();
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// A list of entries from one run, all under one seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub entries: Vec<Entry>,
}

impl VerificationReport {
    pub fn new(seed: u64) -> Self {
        VerificationReport { seed, entries: Vec::new() }
    }

    pub fn push(&mut self, mut e: Entry) {
        e.seed = self.seed;
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        for e in other.entries {
            self.push(e);
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| e.verdict == Verdict::Fail)
    }

    /// No entry failed.
    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn find(&self, check: &str, statistic: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.check == check && e.statistic == statistic)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per entry; empty cells for missing fields.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("check,statistic,estimate,ci_lo,ci_hi,target,tolerance,verdict,sample_sizes,seed\n");
        for e in &self.entries {
            let sizes: Vec<String> = e.sample_sizes.iter().map(|n| n.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                e.check,
                e.statistic,
                e.estimate,
                opt(e.ci.map(|c| c.0)),
                opt(e.ci.map(|c| c.1)),
                opt(e.target),
                opt(e.tolerance),
                e.verdict.as_str(),
                sizes.join(";"),
                e.seed
            ));
        }
        out
    }
}

/// Every threshold used by the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Family-wise level of the fixed-point KS test.
    pub ks_level: f64,
    /// The exponential imposter must reach a Bonferroni p-value below this.
    pub imposter_p: f64,
    /// Hill `k = n^hill_exponent`.
    pub hill_exponent: f64,
    pub hill_sweep: Vec<f64>,
    /// Absolute tolerance on the tail index.
    pub hill_tol: f64,
    /// Relative tolerance on the tail constant.
    pub tail_constant_tol: f64,
    pub tail_quantiles: Vec<f64>,
    /// Only this quantile is judged; the others are reported as info.
    pub tail_gate_quantile: f64,
    pub min_tail_exceedances: usize,
    pub angular_bins: usize,
    pub angular_quantile: f64,
    pub angular_tv: f64,
    pub angular_min_exceedances: usize,
    /// Relative tolerance of `Z_n/W_n` around `K`.
    pub disintegration_tol: f64,
    /// Ratio CI half-width, relative to `K`, above which the verdict is info.
    pub disintegration_max_ci: f64,
    /// `D(r𝟙)` must lie in `[K·lo, K·hi]`.
    pub regularity_band: (f64, f64),
    /// Multiple of the combined CI allowed in LT inequalities.
    pub inequality_z: f64,
    pub inequality_floor: f64,
    /// CI multiplier for agreement checks.
    pub z: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            ks_level: 0.01,
            imposter_p: 1e-4,
            hill_exponent: 2.0 / 3.0,
            hill_sweep: vec![0.5, 2.0 / 3.0, 0.75],
            hill_tol: 0.1,
            tail_constant_tol: 0.3,
            tail_quantiles: vec![0.99, 0.999],
            tail_gate_quantile: 0.999,
            min_tail_exceedances: 20,
            angular_bins: 16,
            angular_quantile: 0.99,
            angular_tv: 0.15,
            angular_min_exceedances: 200,
            disintegration_tol: 0.2,
            disintegration_max_ci: 0.5,
            regularity_band: (0.5, 2.0),
            inequality_z: 3.0,
            inequality_floor: 1e-12,
            z: 3.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_inherit_the_seed() {
        let mut r = VerificationReport::new(42);
        r.push(Entry::new("a", "x", 1.0, Verdict::Pass).sizes(&[10]));
        r.push(Entry::new("a", "y", 2.0, Verdict::Info));
        assert!(r.entries.iter().all(|e| e.seed == 42));
        assert!(r.passed());
        r.push(Entry::new("b", "z", 0.0, Verdict::Fail).target(1.0, 0.1));
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let mut r = VerificationReport::new(7);
        r.push(Entry::new("hill", "alpha_hat", 0.51, Verdict::Pass).ci(0.49, 0.53).target(0.5, 0.1).sizes(&[100_000]));
        let back: VerificationReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "hill,alpha_hat,0.51,0.49,0.53,0.5,0.1,pass,100000,7");
    }

    #[test]
    fn thresholds_fill_defaults() {
        let t: Thresholds = serde_json::from_str(r#"{"hill_tol": 0.05}"#).unwrap();
        assert_eq!(t.hill_tol, 0.05);
        assert_eq!(t.angular_bins, 16);
    }
}
