//! Threshold and rate-of-change alarms on scalar telemetry channels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::netemu::clock::Micros;
use crate::robot::{TelemetryKind, TelemetryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "abs_delta>")]
    AbsDeltaGt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyRule {
    pub id: String,
    #[serde(default)]
    pub kind: Option<TelemetryKind>,
    pub field: String,
    pub op: RuleOp,
    pub threshold: f64,
    #[serde(default)]
    pub window_s: f64,
}

impl AnomalyRule {
    pub fn validate(&self) -> Result<(), String> {
        if !self.threshold.is_finite() {
            return Err(format!("rule {}: threshold must be finite", self.id));
        }
        if self.op == RuleOp::AbsDeltaGt && !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(format!("rule {}: delta rules need window_s > 0", self.id));
        }
        Ok(())
    }

    pub fn load_all(text: &str) -> Result<Vec<AnomalyRule>, String> {
        let rules: Vec<AnomalyRule> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for r in &rules {
            r.validate()?;
        }
        Ok(rules)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub rule_id: String,
    pub source: String,
    pub at_us: Micros,
    /// Value the predicate held for: the reading, or the absolute change for
    /// delta rules.
    pub observed: f64,
    pub reading: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RuleEngine {
    rules: Vec<AnomalyRule>,
    last: BTreeMap<(usize, String), (Micros, f64)>,
    /// Records a rule applied to but which lacked its channel.
    pub skipped: u64,
}

impl RuleEngine {
    pub fn new(rules: Vec<AnomalyRule>) -> Result<Self, String> {
        for r in &rules {
            r.validate()?;
        }
        Ok(Self {
            rules,
            ..Self::default()
        })
    }

    pub fn rules(&self) -> &[AnomalyRule] {
        &self.rules
    }

    pub fn evaluate(&mut self, record: &TelemetryRecord) -> Vec<Alarm> {
        let mut out = Vec::new();
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.kind.is_some_and(|k| k != record.kind) {
                continue;
            }
            let Some(v) = record.channel(&rule.field) else {
                self.skipped += 1;
                continue;
            };
            let t = record.timestamp_us;
            let observed = match rule.op {
                RuleOp::Gt => (v > rule.threshold).then_some(v),
                RuleOp::Lt => (v < rule.threshold).then_some(v),
                RuleOp::AbsDeltaGt => {
                    let window_us = (rule.window_s * 1e6) as Micros;
                    let prev = self.last.insert((i, record.source.clone()), (t, v));
                    prev.filter(|&(pt, _)| t >= pt && t - pt <= window_us)
                        .map(|(_, pv)| (v - pv).abs())
                        .filter(|d| *d > rule.threshold)
                }
            };
            if let Some(observed) = observed {
                out.push(Alarm {
                    rule_id: rule.id.clone(),
                    source: record.source.clone(),
                    at_us: t,
                    observed,
                    reading: v,
                });
            }
        }
        out
    }
}
