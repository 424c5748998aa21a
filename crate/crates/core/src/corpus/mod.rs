//! Point clouds, selection records, their file formats and the record
//! cleaning rule.
//!
//! Cloud files are plain text:
//!
//! ```text
//! # lasso-cloud v1
//! id scene-0001
//! points 3
//! parts 2
//! exclude 1
//! 0.5 1.25 -3 0
//! ...
//! ```
//!
//! followed by one `x y z label` line per point. Coordinates use the shortest
//! decimal form that parses back to the same `f64`, so files round-trip
//! bit-exactly. Records are JSON objects (see [`SelectionRecord`]).

mod annotate;
mod generate;
mod scene;

pub use annotate::{convex_hull, synthesize_annotation, AnnotatorConfig};
pub(crate) use generate::mix;
pub use generate::{
    generate_corpus, split_by_cloud, Corpus, CorpusSpec, GenerationStats, Manifest, ManifestCloud, ManifestRecord,
    Split,
};
pub use scene::{generate_scene, LayoutFamily, SceneSpec};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cylinder_selection, CameraPose, Lasso, Point3};

pub const CLOUD_HEADER: &str = "# lasso-cloud v1";

/// Minimum fraction of target points the lasso must capture.
pub const MIN_COVERAGE: f64 = 0.70;
/// Maximum fraction of non-target points among the lassoed points.
pub const MAX_NON_TARGET_FRACTION: f64 = 0.80;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub id: String,
    pub points: Vec<Point3>,
    pub labels: Vec<u32>,
    /// Part labels never used as selection targets (structure, noise).
    pub excluded_labels: Vec<u32>,
}

impl PointCloud {
    pub fn new(
        id: impl Into<String>,
        points: Vec<Point3>,
        labels: Vec<u32>,
        excluded_labels: Vec<u32>,
    ) -> Result<Self> {
        let id = id.into();
        if points.is_empty() {
            return Err(Error::InvalidSpec(format!("cloud {id} has no points")));
        }
        if points.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: labels.len(),
            });
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidSpec(format!("cloud {id}: point {i} is not finite")));
        }
        let parts = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; parts];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidSpec(format!("cloud {id}: part labels skip {missing}")));
        }
        if excluded_labels.iter().any(|&l| l as usize >= parts) {
            return Err(Error::InvalidSpec(format!("cloud {id}: excluded label out of range")));
        }
        Ok(PointCloud {
            id,
            points,
            labels,
            excluded_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_parts(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// Parts that may serve as selection targets.
    pub fn target_parts(&self) -> Vec<u32> {
        (0..self.num_parts() as u32)
            .filter(|l| !self.excluded_labels.contains(l))
            .collect()
    }

    pub fn part_indices(&self, part: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == part).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * 48 + 128);
        let _ = writeln!(s, "{CLOUD_HEADER}");
        let _ = writeln!(s, "id {}", self.id);
        let _ = writeln!(s, "points {}", self.len());
        let _ = writeln!(s, "parts {}", self.num_parts());
        if !self.excluded_labels.is_empty() {
            let ex: Vec<String> = self.excluded_labels.iter().map(u32::to_string).collect();
            let _ = writeln!(s, "exclude {}", ex.join(" "));
        }
        for (p, l) in self.points.iter().zip(&self.labels) {
            let _ = writeln!(s, "{} {} {} {}", p.x, p.y, p.z, l);
        }
        s
    }

    /// Parse the text format; `origin` names the source in diagnostics.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut id = None;
        let mut count = None;
        let mut parts = None;
        let mut excluded = Vec::new();
        match lines.next() {
            Some((_, l)) if l == CLOUD_HEADER => {}
            Some((n, _)) => return Err(Error::parse(origin, n, format!("expected header {CLOUD_HEADER:?}"))),
            None => return Err(Error::parse(origin, 1, "empty file")),
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let first = fields.next().unwrap_or_default();
            let rest: Vec<&str> = fields.collect();
            let header_value = |rest: &[&str]| -> Result<usize> {
                match rest {
                    [v] => v
                        .parse()
                        .map_err(|_| Error::parse(origin, n, format!("invalid count {v:?}"))),
                    _ => Err(Error::parse(origin, n, "expected a single value")),
                }
            };
            match first {
                "id" if points.is_empty() => {
                    if rest.len() != 1 {
                        return Err(Error::parse(origin, n, "id must be a single token"));
                    }
                    id = Some(rest[0].to_string());
                }
                "points" if points.is_empty() => count = Some(header_value(&rest)?),
                "parts" if points.is_empty() => parts = Some(header_value(&rest)?),
                "exclude" if points.is_empty() => {
                    for v in rest {
                        excluded.push(
                            v.parse()
                                .map_err(|_| Error::parse(origin, n, format!("invalid label {v:?}")))?,
                        );
                    }
                }
                _ => {
                    if rest.len() != 3 {
                        return Err(Error::parse(
                            origin,
                            n,
                            format!("expected `x y z label`, got {} fields", rest.len() + 1),
                        ));
                    }
                    let coord = |v: &str, name: &str| -> Result<f64> {
                        match v.parse::<f64>() {
                            Ok(x) if x.is_finite() => Ok(x),
                            _ => Err(Error::parse(origin, n, format!("invalid {name} coordinate {v:?}"))),
                        }
                    };
                    let p = Point3::new(coord(first, "x")?, coord(rest[0], "y")?, coord(rest[1], "z")?);
                    let l: u32 = rest[2]
                        .parse()
                        .map_err(|_| Error::parse(origin, n, format!("invalid label {:?}", rest[2])))?;
                    points.push(p);
                    labels.push(l);
                }
            }
        }
        let id = id.ok_or_else(|| Error::parse(origin, 1, "missing id line"))?;
        if let Some(c) = count {
            if c != points.len() {
                return Err(Error::parse(
                    origin,
                    0,
                    format!("header declares {c} points, found {}", points.len()),
                ));
            }
        }
        let cloud =
            PointCloud::new(id, points, labels, excluded).map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        if let Some(p) = parts {
            if p != cloud.num_parts() {
                return Err(Error::parse(
                    origin,
                    0,
                    format!("header declares {p} parts, found {}", cloud.num_parts()),
                ));
            }
        }
        Ok(cloud)
    }
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PointCloud::from_text(&text, &path.display().to_string())
}

pub fn store_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    write_file(path, &cloud.to_text())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// What the annotator meant to select.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Part(u32),
    Indices(Vec<usize>),
}

/// One annotated lasso interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub id: String,
    pub cloud_id: String,
    pub target: Target,
    pub camera: CameraPose,
    pub lasso: Lasso,
    pub annotator: String,
}

impl SelectionRecord {
    /// Ascending target indices within `cloud`.
    pub fn target_indices(&self, cloud: &PointCloud) -> Result<Vec<usize>> {
        match &self.target {
            Target::Part(p) => Ok(cloud.part_indices(*p)),
            Target::Indices(ix) => {
                if let Some(&bad) = ix.iter().find(|&&i| i >= cloud.len()) {
                    return Err(Error::InvalidSpec(format!(
                        "record {} targets index {bad} of a {}-point cloud",
                        self.id,
                        cloud.len()
                    )));
                }
                let mut v = ix.clone();
                v.sort_unstable();
                v.dedup();
                Ok(v)
            }
        }
    }

    pub fn target_mask(&self, cloud: &PointCloud) -> Result<Vec<bool>> {
        let mut mask = vec![false; cloud.len()];
        for i in self.target_indices(cloud)? {
            mask[i] = true;
        }
        Ok(mask)
    }
}

pub fn store_record(record: &SelectionRecord, path: &Path) -> Result<()> {
    write_file(path, &serde_json::to_string_pretty(record)?)
}

pub fn load_record(path: &Path) -> Result<SelectionRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display(), e.line(), e.to_string()))
}

/// Lasso quality of a record, measured with the cylinder selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoQuality {
    pub coverage: f64,
    pub non_target_fraction: f64,
}

impl LassoQuality {
    pub fn passes(&self) -> bool {
        self.coverage >= MIN_COVERAGE && self.non_target_fraction <= MAX_NON_TARGET_FRACTION
    }
}

pub fn lasso_quality(cloud: &PointCloud, target: &[bool], camera: &CameraPose, lasso: &Lasso) -> LassoQuality {
    let lassoed = cylinder_selection(&cloud.points, camera, lasso);
    let total_target = target.iter().filter(|&&t| t).count();
    let hit = lassoed.iter().filter(|&&i| target[i]).count();
    let coverage = if total_target == 0 {
        0.0
    } else {
        hit as f64 / total_target as f64
    };
    let non_target_fraction = if lassoed.is_empty() {
        0.0
    } else {
        (lassoed.len() - hit) as f64 / lassoed.len() as f64
    };
    LassoQuality {
        coverage,
        non_target_fraction,
    }
}

/// Keep records whose lasso covers at least 70% of the target and whose
/// lassoed set is at most 80% non-target.
pub fn clean_records(
    records: &[SelectionRecord],
    clouds: &HashMap<String, PointCloud>,
) -> Result<Vec<SelectionRecord>> {
    let mut kept = Vec::new();
    for r in records {
        let cloud = clouds
            .get(&r.cloud_id)
            .ok_or_else(|| Error::UnknownCloud(r.cloud_id.clone()))?;
        let mask = r.target_mask(cloud)?;
        if lasso_quality(cloud, &mask, &r.camera, &r.lasso).passes() {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}
