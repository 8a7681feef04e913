use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CaseKind, CaseResult};
use crate::config::EvalSection;

pub const AXIS_NAMES: [&str; 5] = ["accuracy", "speed", "costEffectiveness", "riskTolerance", "languageProficiency"];

/// One report axis. `None` means unscored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub raw: Option<f64>,
    pub score: Option<f64>,
}

impl Axis {
    fn scored(raw: f64, score: f64) -> Self {
        Axis {
            raw: Some(raw),
            score: Some(score.clamp(0.0, 1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub accuracy: Axis,
    /// Raw value is mean end-to-end latency in milliseconds.
    pub speed: Axis,
    /// Raw value is mean cost per case.
    pub cost_effectiveness: Axis,
    pub risk_tolerance: Axis,
    pub language_proficiency: Axis,
}

impl Metrics {
    pub fn axes(&self) -> [(&'static str, Axis); 5] {
        [
            (AXIS_NAMES[0], self.accuracy),
            (AXIS_NAMES[1], self.speed),
            (AXIS_NAMES[2], self.cost_effectiveness),
            (AXIS_NAMES[3], self.risk_tolerance),
            (AXIS_NAMES[4], self.language_proficiency),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub metrics: Metrics,
    pub total_cost: f64,
    /// Share of wrong transfer cases; `None` when the suite has none.
    pub transactional_error_rate: Option<f64>,
    pub faq_error_rate: Option<f64>,
    pub case_results: Vec<CaseResult>,
}

fn error_rate(results: &[CaseResult], kind: CaseKind) -> Option<f64> {
    let of_kind: Vec<&CaseResult> = results.iter().filter(|r| r.kind == kind).collect();
    if of_kind.is_empty() {
        return None;
    }
    Some(of_kind.iter().filter(|r| !r.correct).count() as f64 / of_kind.len() as f64)
}

impl EvalReport {
    /// Speed scores `min(1, target / mean latency)`; cost scores
    /// `min(1, reference cost / mean cost)`, so a free run scores 1.
    pub fn from_results(case_results: Vec<CaseResult>, settings: &EvalSection) -> Self {
        let total = case_results.len();
        let correct = case_results.iter().filter(|r| r.correct).count();
        let n = total.max(1) as f64;
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        let mean_latency = case_results.iter().map(|r| r.latency_ms).sum::<f64>() / n;
        let total_cost: f64 = case_results.iter().map(|r| r.cost).sum();
        let mean_cost = total_cost / n;
        let speed = if mean_latency <= 0.0 {
            1.0
        } else {
            settings.target_latency_ms as f64 / mean_latency
        };
        let cost = if mean_cost <= 0.0 {
            1.0
        } else {
            settings.reference_cost_per_case / mean_cost
        };
        EvalReport {
            total,
            correct,
            metrics: Metrics {
                accuracy: Axis::scored(accuracy, accuracy),
                speed: Axis::scored(mean_latency, speed),
                cost_effectiveness: Axis::scored(mean_cost, cost),
                risk_tolerance: Axis::default(),
                language_proficiency: Axis::default(),
            },
            total_cost,
            transactional_error_rate: error_rate(&case_results, CaseKind::Transfer),
            faq_error_rate: error_rate(&case_results, CaseKind::Faq),
            case_results,
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy.score.unwrap_or(0.0)
    }

    pub fn apply_rubric(&mut self, rubric: &Rubric) {
        if let Some(r) = rubric.risk_tolerance {
            self.metrics.risk_tolerance = Axis::scored(r, r);
        }
        if let Some(l) = rubric.language_proficiency {
            self.metrics.language_proficiency = Axis::scored(l, l);
        }
    }
}

/// Human-rated scores in [0, 1] supplied from a file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Rubric {
    pub risk_tolerance: Option<f64>,
    pub language_proficiency: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RubricError {
    #[error("cannot read rubric file: {0}")]
    Io(#[from] std::io::Error),
    #[error("rubric file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("rubric score {0} is outside [0, 1]")]
    OutOfRange(f64),
}

impl Rubric {
    pub fn from_json(text: &str) -> Result<Self, RubricError> {
        let r: Rubric = serde_json::from_str(text)?;
        for v in [r.risk_tolerance, r.language_proficiency].into_iter().flatten() {
            if !(0.0..=1.0).contains(&v) {
                return Err(RubricError::OutOfRange(v));
            }
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, RubricError> {
        Rubric::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateOutcome {
    pub failures: Vec<String>,
}

impl GateOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Error-rate thresholds for transfer and FAQ cases.
pub fn gate(report: &EvalReport, settings: &EvalSection) -> GateOutcome {
    let mut failures = Vec::new();
    let checks = [
        ("transactional", report.transactional_error_rate, settings.max_transactional_error_rate),
        ("FAQ", report.faq_error_rate, settings.max_faq_error_rate),
    ];
    for (name, rate, max) in checks {
        if let Some(rate) = rate.filter(|r| *r > max) {
            failures.push(format!(
                "{name} error rate {:.2}% exceeds {:.2}%",
                rate * 100.0,
                max * 100.0
            ));
        }
    }
    GateOutcome { failures }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
    RadarData,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            "radarData" => Ok(ReportFormat::RadarData),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::RadarData => {
            let axes: Vec<_> = report
                .metrics
                .axes()
                .iter()
                .map(|(name, a)| json!({"axis": name, "value": a.score}))
                .collect();
            serde_json::to_string_pretty(&json!({ "axes": axes })).expect("radar data serializes")
        }
        ReportFormat::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{:<21}{:>14}{:>8}", "metric", "raw", "score");
            for (name, axis) in report.metrics.axes() {
                let raw = match name {
                    "accuracy" => format!("{}/{}", report.correct, report.total),
                    "speed" => axis.raw.map_or("n/a".into(), |r| format!("{r:.2} ms")),
                    "costEffectiveness" => fmt_opt(axis.raw, 6),
                    _ => fmt_opt(axis.raw, 3),
                };
                let _ = writeln!(s, "{name:<21}{raw:>14}{:>8}", fmt_opt(axis.score, 3));
            }
            let _ = writeln!(
                s,
                "transactional errors: {}  FAQ errors: {}",
                fmt_opt(report.transactional_error_rate.map(|r| r * 100.0), 2) + "%",
                fmt_opt(report.faq_error_rate.map(|r| r * 100.0), 2) + "%"
            );
            for r in report.case_results.iter().filter(|r| !r.correct) {
                let _ = writeln!(s, "FAILED {}: {}", r.case_id, r.detail.as_deref().unwrap_or(""));
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(kind: CaseKind, correct: bool) -> CaseResult {
        CaseResult {
            case_id: "c".into(),
            kind,
            correct,
            detail: None,
            latency_ms: 2.0,
            prompt_tokens: 10,
            completion_tokens: 5,
            cost: 0.0,
        }
    }

    fn all_ones() -> EvalReport {
        let mut r = EvalReport::from_results(vec![result(CaseKind::Intent, true)], &EvalSection::default());
        r.apply_rubric(&Rubric {
            risk_tolerance: Some(1.0),
            language_proficiency: Some(1.0),
        });
        r
    }

    #[test]
    fn radar_of_perfect_report_is_five_ones() {
        let v: serde_json::Value = serde_json::from_str(&emit_report(&all_ones(), ReportFormat::RadarData)).unwrap();
        let values: Vec<f64> = v["axes"].as_array().unwrap().iter().map(|a| a["value"].as_f64().unwrap()).collect();
        assert_eq!(values, vec![1.0; 5]);
    }

    #[test]
    fn json_round_trips() {
        let mut r = EvalReport::from_results(
            vec![result(CaseKind::Transfer, true), result(CaseKind::Faq, false)],
            &EvalSection::default(),
        );
        r.case_results[0].latency_ms = 0.1 + 0.2;
        let back: EvalReport = serde_json::from_str(&emit_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn table_marks_unscored_axes() {
        let r = EvalReport::from_results(vec![result(CaseKind::Intent, true)], &EvalSection::default());
        let t = emit_report(&r, ReportFormat::Table);
        for axis in ["riskTolerance", "languageProficiency"] {
            let line = t.lines().find(|l| l.starts_with(axis)).unwrap();
            assert_eq!(line.matches("n/a").count(), 2, "{line}");
        }
    }

    #[test]
    fn zero_price_scores_full_cost_effectiveness() {
        let r = EvalReport::from_results(vec![result(CaseKind::Intent, true)], &EvalSection::default());
        assert_eq!(r.metrics.cost_effectiveness.score, Some(1.0));
    }

    #[test]
    fn rubric_rejects_out_of_range() {
        assert!(matches!(Rubric::from_json(r#"{"riskTolerance": 1.5}"#), Err(RubricError::OutOfRange(_))));
        assert!(Rubric::from_json(r#"{"riskTolerance": 0.5, "tone": 1}"#).is_err());
    }

    #[test]
    fn gate_is_strictly_greater() {
        let s = EvalSection {
            max_transactional_error_rate: 0.5,
            ..EvalSection::default()
        };
        let r = EvalReport::from_results(
            vec![result(CaseKind::Transfer, true), result(CaseKind::Transfer, false)],
            &s,
        );
        assert!(gate(&r, &s).passed());
        let r = EvalReport::from_results(vec![result(CaseKind::Transfer, false)], &s);
        assert!(!gate(&r, &s).passed());
    }
}
