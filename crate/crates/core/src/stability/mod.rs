//! Checkable stability criteria and Monte Carlo diagnostics: stationary
//! distributions of the linearized chain, the linearized stability sum and
//! its scalar sharp counterpart, moment and almost-sure exponents, the
//! converse Lyapunov function, and tightness, coupling and
//! distribution-convergence evidence.

mod criteria;
mod distribution;
mod eigen;
mod estimators;
mod stationary;

use serde::Serialize;

pub use criteria::{criterion_cor34, scalar_sharp_exponent, CriterionValue, RegimeTerms, Verdict};
pub use distribution::{
    check_p1, check_p2, distribution_convergence, ks_distance, ks_threshold, sample_distance, Comparison,
    DistanceEntry, DistanceTable, P1Table, P2Diagnostics, RegimeSample, SampleDistance, KS_LEVEL,
};
pub use eigen::{lambda_max_sym, symmetric_eigenvalues};
pub use estimators::{
    empirical_lyapunov, estimate_as_exponent, estimate_moment_exponent, ExponentEstimate, ExponentKind,
    LyapunovEntry, LyapunovTable, BOOTSTRAP_RESAMPLES,
};
pub use stationary::{closed_classes, is_irreducible, stationary_distribution, StationaryDistribution, EDGE_THRESHOLD};

use crate::engine::SimConfig;
use crate::generator::ScanReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Decay evidence from an exponent estimate: the whole interval below zero.
pub fn exponent_verdict(e: &ExponentEstimate) -> Verdict {
    if e.ci_high < 0.0 {
        Verdict::StableEvidence
    } else if e.ci_low > 0.0 {
        Verdict::UnstableEvidence
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictEntry {
    pub analysis: String,
    pub verdict: Verdict,
    /// Report field the verdict rests on, and its value.
    pub basis: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisFailure {
    pub analysis: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sharp_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_exponent: Option<ExponentEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub as_exponent: Option<ExponentEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_scan: Option<ScanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1: Option<P1Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2: Option<P2Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistanceTable>,
    pub verdicts: Vec<VerdictEntry>,
    pub failures: Vec<AnalysisFailure>,
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            model: model.into(),
            ..Self::default()
        }
    }

    pub fn verdict(&mut self, analysis: &str, verdict: Verdict, basis: &str, value: f64) {
        self.verdicts.push(VerdictEntry {
            analysis: analysis.into(),
            verdict,
            basis: basis.into(),
            value,
        });
    }

    pub fn failure(&mut self, analysis: &str, error: impl std::fmt::Display) {
        self.failures.push(AnalysisFailure {
            analysis: analysis.into(),
            error: error.to_string(),
        });
    }

    /// Records the criterion and its verdict.
    pub fn set_criterion(&mut self, c: CriterionValue) {
        self.verdict("criterion", c.verdict, "criterion.value", c.value);
        self.criterion = Some(c);
    }

    pub fn set_moment_exponent(&mut self, e: ExponentEstimate) {
        self.verdict("moment_exponent", exponent_verdict(&e), "moment_exponent.ci_high", e.ci_high);
        self.moment_exponent = Some(e);
    }

    pub fn set_as_exponent(&mut self, e: ExponentEstimate) {
        self.verdict("as_exponent", exponent_verdict(&e), "as_exponent.ci_high", e.ci_high);
        self.as_exponent = Some(e);
    }

    /// A grid without violations is evidence, never proof.
    pub fn set_lyapunov_scan(&mut self, s: ScanReport) {
        let v = if s.violation_fraction == 0.0 {
            Verdict::StableEvidence
        } else {
            Verdict::Inconclusive
        };
        self.verdict("lyapunov_scan", v, "lyapunov_scan.violation_fraction", s.violation_fraction);
        self.lyapunov_scan = Some(s);
    }

    pub fn set_p2(&mut self, p: P2Diagnostics) {
        if let Some(rate) = p.diff_sq_rate {
            let v = if rate < 0.0 {
                Verdict::StableEvidence
            } else {
                Verdict::Inconclusive
            };
            self.verdict("p2", v, "p2.diff_sq_rate", rate);
        }
        self.p2 = Some(p);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests;
