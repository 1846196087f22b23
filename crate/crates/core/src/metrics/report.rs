//! Experiment reports, raw sample CSV, and report comparison.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::experiment::{box_stats, ratios, run_experiment_raw, ExperimentError, ExperimentSpec, MetricSample, RunData};
use super::packet::PacketAccounting;
use super::stats::BoxStats;
use crate::netemu::config::NetConfig;

pub const LATENCY_DEFINITION: &str =
    "transmission_latency_ms = (response received - request sent) - server processing, i.e. upload + download";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub spec: ExperimentSpec,
    pub box_stats: BTreeMap<String, BoxStats>,
    pub accounting: PacketAccounting,
    pub per: Option<f64>,
    pub pdr: Option<f64>,
    pub dropped: usize,
    pub samples_path: Option<String>,
    pub latency_definition: String,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Wall-clock data; the only part of a report allowed to differ between
    /// identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub started_unix_ms: u64,
    pub wall_clock_ms: f64,
}

impl Report {
    pub fn from_run(spec: &ExperimentSpec, data: &RunData, samples_path: Option<String>) -> Self {
        let (per, pdr) = ratios(&data.accounting);
        let mut notes = Vec::new();
        if data.uncalibrated {
            notes.push(format!(
                "link profile `{}` uses placeholder delays with no measured reference",
                spec.network
            ));
        }
        if data.dropped > 0 {
            notes.push(format!("{} transfers dropped and excluded from latency statistics", data.dropped));
        }
        Self {
            spec: spec.clone(),
            box_stats: box_stats(&data.samples),
            accounting: data.accounting,
            per,
            pdr,
            dropped: data.dropped,
            samples_path,
            latency_definition: LATENCY_DEFINITION.into(),
            notes,
            meta: None,
        }
    }

    pub fn stats(&self, metric: &str) -> Option<&BoxStats> {
        self.box_stats.get(metric)
    }

    /// Pretty JSON with the wall-clock block removed.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.meta = None;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn run_experiment(spec: &ExperimentSpec, cfg: &NetConfig) -> Result<(Report, RunData), ExperimentError> {
    let data = run_experiment_raw(spec, cfg)?;
    Ok((Report::from_run(spec, &data, None), data))
}

/// Columns: run,kind,network,deployment,payload_bytes,value_ms
pub fn write_samples_csv<W: Write>(w: W, samples: &[MetricSample]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in samples {
        wr.serialize(s)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(r: R) -> csv::Result<Vec<MetricSample>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("reports are not comparable: {0}")]
pub struct IncompatibleReports(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a_median: f64,
    pub b_median: f64,
    pub median_delta: f64,
    /// `a_median / b_median`; `None` when `b_median` is zero.
    pub median_ratio: Option<f64>,
    pub a_mean: f64,
    pub b_mean: f64,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub metrics: Vec<MetricDelta>,
    pub per_delta: Option<f64>,
    pub pdr_delta: Option<f64>,
}

fn label(r: &Report) -> String {
    format!("{}/{}", r.spec.network, r.spec.deployment)
}

/// Per-metric deltas `a - b` and median ratios `a / b`.
pub fn compare(a: &Report, b: &Report) -> Result<Comparison, IncompatibleReports> {
    if a.spec.payload != b.spec.payload {
        return Err(IncompatibleReports(format!(
            "payload models differ: {:?} vs {:?}",
            a.spec.payload, b.spec.payload
        )));
    }
    if a.spec.mtu != b.spec.mtu {
        return Err(IncompatibleReports(format!("MTU differs: {} vs {}", a.spec.mtu, b.spec.mtu)));
    }
    let metrics = a
        .box_stats
        .iter()
        .filter_map(|(k, x)| {
            let y = b.box_stats.get(k)?;
            Some(MetricDelta {
                metric: k.clone(),
                a_median: x.median,
                b_median: y.median,
                median_delta: x.median - y.median,
                median_ratio: (y.median != 0.0).then(|| x.median / y.median),
                a_mean: x.mean,
                b_mean: y.mean,
                mean_delta: x.mean - y.mean,
            })
        })
        .collect();
    let diff = |p: Option<f64>, q: Option<f64>| Some(p? - q?);
    Ok(Comparison {
        a: label(a),
        b: label(b),
        metrics,
        per_delta: diff(a.per, b.per),
        pdr_delta: diff(a.pdr, b.pdr),
    })
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut s = format!("A = {}  B = {}\n", self.a, self.b);
        s += &format!(
            "{:<26}{:>12}{:>12}{:>12}{:>10}{:>12}\n",
            "metric", "A median", "B median", "delta", "A/B", "mean delta"
        );
        for m in &self.metrics {
            let ratio = m.median_ratio.map_or("-".to_string(), |r| format!("{r:.3}"));
            s += &format!(
                "{:<26}{:>12.3}{:>12.3}{:>12.3}{:>10}{:>12.3}\n",
                m.metric, m.a_median, m.b_median, m.median_delta, ratio, m.mean_delta
            );
        }
        if let (Some(per), Some(pdr)) = (self.per_delta, self.pdr_delta) {
            s += &format!("PER delta {per:.6}  PDR delta {pdr:.6}\n");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::experiment::MetricKind;
    use crate::netemu::DeploymentKind;

    fn small(net: &str) -> Report {
        let spec = ExperimentSpec::new(net, DeploymentKind::Orchestrated, 30, 7);
        run_experiment(&spec, &NetConfig::builtin()).unwrap().0
    }

    #[test]
    fn self_compare_is_zero() {
        let r = small("5g_sa");
        let c = compare(&r, &r).unwrap();
        assert!(!c.metrics.is_empty());
        for m in &c.metrics {
            assert_eq!(m.median_delta, 0.0);
            assert_eq!(m.mean_delta, 0.0);
            assert_eq!(m.median_ratio, Some(1.0));
        }
        assert_eq!(c.per_delta, Some(0.0));
        assert!(c.to_table().contains("transmission_latency_ms"));
    }

    #[test]
    fn payload_mismatch_rejected() {
        let a = small("lte");
        let mut b = a.clone();
        b.spec.payload.mean_bytes = 1_000;
        assert!(compare(&a, &b).is_err());
    }

    #[test]
    fn json_round_trip_and_meta_stripped() {
        let mut r = small("lte");
        r.meta = Some(RunMeta {
            started_unix_ms: 1,
            wall_clock_ms: 2.0,
        });
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
        assert!(!r.canonical_json().contains("wall_clock_ms"));
    }

    #[test]
    fn csv_layout() {
        let s = vec![MetricSample {
            run: 3,
            kind: MetricKind::ProcessingMs,
            network: "lte".into(),
            deployment: "function".into(),
            payload_bytes: 100,
            value_ms: 1.5,
        }];
        let mut out = Vec::new();
        write_samples_csv(&mut out, &s).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert_eq!(
            text,
            "run,kind,network,deployment,payload_bytes,value_ms\n3,processing_ms,lte,function,100,1.5\n"
        );
        assert_eq!(read_samples_csv(&out[..]).unwrap(), s);
    }
}
