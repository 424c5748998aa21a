//! Selection quality metrics and bucketed evaluation reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{PointCloud, SelectionRecord};
use crate::error::{Error, Result};
use crate::geometry::cylinder_selection;
use crate::network::Network;
use crate::predict::predict_selection;

/// True positives, false positives and false negatives of a selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn sorted_unique(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn confusion(selected: &[usize], target: &[usize]) -> Confusion {
    let s = sorted_unique(selected);
    let t = sorted_unique(target);
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < s.len() && j < t.len() {
        match s[i].cmp(&t[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                tp += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Confusion {
        tp,
        fp: s.len() - tp,
        fn_: t.len() - tp,
    }
}

impl Confusion {
    /// `1 - |S ∩ T| / |S ∪ T|`; 0 when both sets are empty.
    pub fn jaccard_distance(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            0.0
        } else {
            1.0 - self.tp as f64 / union as f64
        }
    }

    /// `2TP / (2TP + FP + FN)`; 1 when both sets are empty.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn jaccard_distance(selected: &[usize], target: &[usize]) -> f64 {
    confusion(selected, target).jaccard_distance()
}

pub fn f1_score(selected: &[usize], target: &[usize]) -> f64 {
    confusion(selected, target).f1()
}

/// A selection method under evaluation.
#[derive(Clone, Copy, Debug)]
pub enum Method<'a> {
    Cylinder,
    Network(&'a Network<f32>),
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cylinder => "cylinder",
            Method::Network(_) => "lassonet",
        }
    }

    pub fn select(&self, cloud: &PointCloud, record: &SelectionRecord) -> Result<Vec<usize>> {
        match self {
            Method::Cylinder => Ok(cylinder_selection(&cloud.points, &record.camera, &record.lasso)),
            Method::Network(net) => Ok(predict_selection(&cloud.points, &record.camera, &record.lasso, net)?.selected),
        }
    }
}

/// How records are grouped for aggregate statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct BucketScheme {
    /// Upper-exclusive part-count edges; empty means one bucket per count.
    pub part_edges: Vec<usize>,
    /// Upper-exclusive target-fraction edges; empty means five equal
    /// ranges spanning the observed fractions.
    pub fraction_edges: Vec<f64>,
}

impl BucketScheme {
    /// Fixed fraction buckets `[0,1%), [1,2%), [2,3%), [3,4%), [4%,∞)`.
    pub fn percent_fractions() -> Self {
        BucketScheme {
            part_edges: Vec::new(),
            fraction_edges: vec![0.01, 0.02, 0.03, 0.04],
        }
    }

    fn part_bucket(&self, parts: usize) -> String {
        if self.part_edges.is_empty() {
            return parts.to_string();
        }
        let mut lo = 0;
        for &e in &self.part_edges {
            if parts < e {
                return format!("[{lo},{e})");
            }
            lo = e;
        }
        format!("[{lo},inf)")
    }
}

fn fraction_bucket(edges: &[f64], f: f64) -> String {
    let mut lo = 0.0;
    for &e in edges {
        if f < e {
            return format!("[{lo},{e})");
        }
        lo = e;
    }
    format!("[{lo},inf)")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub record_id: String,
    pub cloud_id: String,
    pub method: String,
    pub d_j: f64,
    pub f1: f64,
    pub latency_ms: f64,
    pub parts: usize,
    pub target_fraction: f64,
    pub parts_bucket: String,
    pub fraction_bucket: String,
    pub selected: usize,
    pub target: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    /// `all`, `parts` or `target_fraction`.
    pub grouping: String,
    pub bucket: String,
    pub count: usize,
    pub mean_d_j: f64,
    pub sd_d_j: f64,
    pub mean_f1: f64,
    pub sd_f1: f64,
    pub mean_latency_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<RecordResult>,
    pub aggregates: Vec<Aggregate>,
    pub failures: usize,
}

/// Mean and sample standard deviation (0 below two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run `method` on every record and collect metrics against the targets.
/// Per-record failures are reported in the result rather than aborting.
pub fn evaluate(
    method: Method<'_>,
    records: &[&SelectionRecord],
    clouds: &HashMap<String, PointCloud>,
    scheme: &BucketScheme,
) -> EvalReport {
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        let mut row = RecordResult {
            record_id: rec.id.clone(),
            cloud_id: rec.cloud_id.clone(),
            method: method.name().to_string(),
            d_j: 1.0,
            f1: 0.0,
            latency_ms: 0.0,
            parts: 0,
            target_fraction: 0.0,
            parts_bucket: String::new(),
            fraction_bucket: String::new(),
            selected: 0,
            target: 0,
            error: None,
        };
        let outcome = (|| -> Result<()> {
            let cloud = clouds
                .get(&rec.cloud_id)
                .ok_or_else(|| Error::UnknownCloud(rec.cloud_id.clone()))?;
            let target = rec.target_indices(cloud)?;
            row.parts = cloud.num_parts();
            row.target = target.len();
            row.target_fraction = target.len() as f64 / cloud.len() as f64;
            let start = Instant::now();
            let selected = method.select(cloud, rec)?;
            row.latency_ms = start.elapsed().as_secs_f64() * 1e3;
            let c = confusion(&selected, &target);
            row.selected = selected.len();
            row.d_j = c.jaccard_distance();
            row.f1 = c.f1();
            Ok(())
        })();
        if let Err(e) = outcome {
            row.error = Some(format!("{}: {e}", e.kind()));
        }
        row.parts_bucket = scheme.part_bucket(row.parts);
        rows.push(row);
    }
    let mut report = EvalReport {
        records: rows,
        aggregates: Vec::new(),
        failures: 0,
    };
    report.finish(scheme);
    report
}

impl EvalReport {
    /// Combine reports of several methods over the same records.
    pub fn merge(reports: Vec<EvalReport>, scheme: &BucketScheme) -> EvalReport {
        let mut out = EvalReport::default();
        for r in reports {
            out.records.extend(r.records);
        }
        out.finish(scheme);
        out
    }

    fn finish(&mut self, scheme: &BucketScheme) {
        let edges = if scheme.fraction_edges.is_empty() {
            let ok = self.records.iter().filter(|r| r.error.is_none());
            let (lo, hi) = ok.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.target_fraction), hi.max(r.target_fraction))
            });
            if lo.is_finite() && hi > lo {
                (1..5).map(|k| lo + (hi - lo) * k as f64 / 5.0).collect()
            } else {
                Vec::new()
            }
        } else {
            scheme.fraction_edges.clone()
        };
        for r in &mut self.records {
            r.fraction_bucket = fraction_bucket(&edges, r.target_fraction);
        }
        self.failures = self.records.iter().filter(|r| r.error.is_some()).count();
        let mut groups: BTreeMap<(String, String, String), Vec<&RecordResult>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.error.is_none()) {
            groups
                .entry((r.method.clone(), "all".into(), "all".into()))
                .or_default()
                .push(r);
            groups
                .entry((r.method.clone(), "parts".into(), r.parts_bucket.clone()))
                .or_default()
                .push(r);
            groups
                .entry((r.method.clone(), "target_fraction".into(), r.fraction_bucket.clone()))
                .or_default()
                .push(r);
        }
        self.aggregates = groups
            .into_iter()
            .map(|((method, grouping, bucket), rs)| {
                let dj: Vec<f64> = rs.iter().map(|r| r.d_j).collect();
                let f1: Vec<f64> = rs.iter().map(|r| r.f1).collect();
                let lat: Vec<f64> = rs.iter().map(|r| r.latency_ms).collect();
                let (mean_d_j, sd_d_j) = mean_sd(&dj);
                let (mean_f1, sd_f1) = mean_sd(&f1);
                Aggregate {
                    method,
                    grouping,
                    bucket,
                    count: rs.len(),
                    mean_d_j,
                    sd_d_j,
                    mean_f1,
                    sd_f1,
                    mean_latency_ms: mean_sd(&lat).0,
                }
            })
            .collect();
    }

    /// Overall mean d_J of one method over successful records.
    pub fn mean_d_j(&self, method: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.grouping == "all")
            .map(|a| a.mean_d_j)
    }

    /// One tab-separated row per record.
    pub fn table(&self) -> String {
        let mut s = String::from(
            "record_id\tcloud_id\tmethod\td_j\tf1\tlatency_ms\tparts\ttarget_fraction\tparts_bucket\tfraction_bucket\tselected\ttarget\terror\n",
        );
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.record_id,
                r.cloud_id,
                r.method,
                r.d_j,
                r.f1,
                r.latency_ms,
                r.parts,
                r.target_fraction,
                r.parts_bucket,
                r.fraction_bucket,
                r.selected,
                r.target,
                r.error.as_deref().unwrap_or("")
            );
        }
        s
    }

    /// Bucket → mean d_J per method, for plotting.
    pub fn plot_data(&self) -> String {
        let mut s = String::from("grouping\tbucket\tmethod\tcount\tmean_d_j\tsd_d_j\n");
        for a in self.aggregates.iter().filter(|a| a.grouping != "all") {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                a.grouping, a.bucket, a.method, a.count, a.mean_d_j, a.sd_d_j
            );
        }
        s
    }

    /// Write `records.tsv`, `summary.json` and `plot.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("records.tsv", self.table())?;
        let summary = serde_json::json!({
            "failures": self.failures,
            "aggregates": self.aggregates,
        });
        put("summary.json", serde_json::to_string_pretty(&summary)?)?;
        put("plot.tsv", self.plot_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        assert_eq!(jaccard_distance(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(jaccard_distance(&[1], &[2]), 1.0);
        assert_eq!(jaccard_distance(&[1, 2, 3], &[2, 3, 4]), 0.5);
        assert_eq!(jaccard_distance(&[], &[]), 0.0);
        assert_eq!(f1_score(&[4, 5], &[4, 5]), 1.0);
        assert_eq!(f1_score(&[1, 2], &[2, 3]), 0.5);
        assert_eq!(f1_score(&[], &[7]), 0.0);
        assert_eq!(f1_score(&[], &[]), 1.0);
    }

    #[test]
    fn mean_and_sd() {
        assert_eq!(mean_sd(&[]), (0.0, 0.0));
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn buckets() {
        let s = BucketScheme {
            part_edges: vec![10, 20],
            fraction_edges: vec![],
        };
        assert_eq!(s.part_bucket(3), "[0,10)");
        assert_eq!(s.part_bucket(25), "[20,inf)");
        assert_eq!(BucketScheme::default().part_bucket(4), "4");
        let p = BucketScheme::percent_fractions();
        assert_eq!(fraction_bucket(&p.fraction_edges, 0.015), "[0.01,0.02)");
        assert_eq!(fraction_bucket(&p.fraction_edges, 0.5), "[0.04,inf)");
    }
}
