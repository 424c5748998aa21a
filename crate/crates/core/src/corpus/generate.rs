//! Synthetic corpus generation, the corpus manifest and loading.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    clean_records, generate_scene, load_cloud, load_record, store_cloud, store_record, write_file, AnnotatorConfig,
    LayoutFamily, PointCloud, SceneSpec, SelectionRecord,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "lasso-corpus";

/// Distribution of generated scenes and annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub points_min: usize,
    pub points_max: usize,
    pub parts_min: usize,
    pub parts_max: usize,
    pub layouts: Vec<LayoutFamily>,
    pub room_probability: f64,
    pub max_walls: usize,
    pub floor_fraction: f64,
    pub wall_fraction: f64,
    pub noise_probability: f64,
    pub noise_fraction: f64,
    pub records_per_cloud: usize,
    pub attempts_per_record: usize,
    pub split_ratio: f64,
    pub annotator: AnnotatorConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            points_min: 2_000,
            points_max: 20_000,
            parts_min: 3,
            parts_max: 8,
            layouts: LayoutFamily::ALL.to_vec(),
            room_probability: 0.9,
            max_walls: 2,
            floor_fraction: 0.3,
            wall_fraction: 0.15,
            noise_probability: 0.6,
            noise_fraction: 0.04,
            records_per_cloud: 3,
            attempts_per_record: 3,
            split_ratio: 0.9,
            annotator: AnnotatorConfig::default(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.points_min == 0 || self.points_min > self.points_max {
            return bad("need 0 < points_min <= points_max");
        }
        if self.parts_min < 1 || self.parts_min > self.parts_max {
            return bad("need 1 <= parts_min <= parts_max");
        }
        if self.layouts.is_empty() {
            return bad("no layout families");
        }
        for p in [self.room_probability, self.noise_probability] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        let share = self.floor_fraction + self.max_walls as f64 * self.wall_fraction + self.noise_fraction;
        if self.floor_fraction < 0.0 || self.wall_fraction < 0.0 || self.noise_fraction < 0.0 || share >= 0.9 {
            return bad("structure and noise fractions must leave room for objects");
        }
        if self.records_per_cloud == 0 || self.attempts_per_record == 0 {
            return bad("records_per_cloud and attempts_per_record must be positive");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: CorpusSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Draw one scene's part layout.
    pub fn sample_scene(&self, rng: &mut ChaCha8Rng) -> SceneSpec {
        let (lo, hi) = (self.points_min as f64, self.points_max as f64);
        let total = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp().round() as usize;
        let parts = rng.gen_range(self.parts_min..=self.parts_max);
        let layout = self.layouts[rng.gen_range(0..self.layouts.len())];
        let room = rng.gen_bool(self.room_probability);
        let noise = rng.gen_bool(self.noise_probability);
        // Keep at least two objects whenever the part budget allows.
        let min_objects = parts.clamp(1, 2);
        let mut spare = parts - min_objects;
        let floor = room && spare >= 1;
        spare -= floor as usize;
        let noise = noise && spare >= 1;
        spare -= noise as usize;
        let walls = if floor {
            rng.gen_range(0..=self.max_walls.min(spare))
        } else {
            0
        };
        let objects = parts - floor as usize - noise as usize - walls;

        let vary = |rng: &mut ChaCha8Rng, frac: f64| ((total as f64) * frac * rng.gen_range(0.7..1.3)).round() as usize;
        let floor_points = if floor {
            vary(rng, self.floor_fraction).max(1)
        } else {
            0
        };
        let wall_points: Vec<usize> = (0..walls).map(|_| vary(rng, self.wall_fraction).max(1)).collect();
        let noise_points = if noise {
            vary(rng, self.noise_fraction).max(1)
        } else {
            0
        };
        let used = floor_points + wall_points.iter().sum::<usize>() + noise_points;
        let budget = total.saturating_sub(used).max(objects * 50);
        let weights: Vec<f64> = (0..objects).map(|_| rng.gen_range(0.5..1.5)).collect();
        let wsum: f64 = weights.iter().sum();
        let mut object_points: Vec<usize> = weights
            .iter()
            .map(|w| ((budget as f64) * w / wsum).floor().max(50.0) as usize)
            .collect();
        let assigned: usize = object_points.iter().sum();
        if assigned < budget {
            object_points[0] += budget - assigned;
        }
        SceneSpec {
            layout,
            object_points,
            floor_points,
            wall_points,
            noise_points,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCloud {
    pub id: String,
    pub file: String,
    pub points: usize,
    pub parts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub file: String,
    pub cloud_id: String,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub scenes: usize,
    /// Annotation attempts, including ones without a usable view.
    pub attempts: usize,
    pub no_valid_view: usize,
    pub synthesized: usize,
    pub kept: usize,
}

impl GenerationStats {
    /// Fraction of annotation attempts that produced a record passing cleaning.
    pub fn pass_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.kept as f64 / self.attempts as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub corpus_id: String,
    pub seed: u64,
    pub clouds: Vec<ManifestCloud>,
    pub records: Vec<ManifestRecord>,
    #[serde(default)]
    pub stats: Option<GenerationStats>,
    #[serde(default)]
    pub spec: Option<CorpusSpec>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display(), e.line(), e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::parse(
                path.display(),
                1,
                format!("unknown manifest format {:?}", m.format),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(self)?)
    }
}

/// Deterministic by-cloud split: `round(ratio * clouds)` clouds go to training.
pub fn split_by_cloud(cloud_ids: &[String], ratio: f64, seed: u64) -> Result<BTreeMap<String, Split>> {
    let mut ids: Vec<&String> = cloud_ids.iter().collect();
    ids.sort();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::TooFewClouds(ids.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train = ((ratio * ids.len() as f64).round() as usize).min(ids.len());
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), if i < train { Split::Train } else { Split::Test }))
        .collect())
}

pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // SplitMix64 finalizer over the combined inputs.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate `count` scenes with their annotations into `out`, keep the
/// records that pass cleaning and write the manifest.
pub fn generate_corpus(spec: &CorpusSpec, count: usize, seed: u64, out: &Path) -> Result<Manifest> {
    spec.validate()?;
    let mut clouds = HashMap::new();
    let mut manifest_clouds = Vec::with_capacity(count);
    let mut records = Vec::new();
    let mut stats = GenerationStats {
        scenes: count,
        ..Default::default()
    };
    for i in 0..count {
        let scene_seed = mix(seed, i as u64, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let scene = spec.sample_scene(&mut rng);
        let mut cloud = generate_scene(&scene, scene_seed)?;
        cloud.id = format!("scene-{i:05}");
        let mut targets = cloud.target_parts();
        targets.shuffle(&mut rng);
        for r in 0..spec.records_per_cloud {
            let part = targets[r % targets.len()];
            for attempt in 0..spec.attempts_per_record {
                stats.attempts += 1;
                let ann_seed = mix(scene_seed, r as u64 + 1, attempt as u64 + 1);
                match super::synthesize_annotation(&cloud, part, ann_seed, &spec.annotator) {
                    Ok(mut rec) => {
                        rec.id = format!("{}-r{r}", cloud.id);
                        records.push(rec);
                        stats.synthesized += 1;
                        break;
                    }
                    Err(Error::NoValidView(_)) => stats.no_valid_view += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        let file = format!("clouds/{}.txt", cloud.id);
        store_cloud(&cloud, &out.join(&file))?;
        manifest_clouds.push(ManifestCloud {
            id: cloud.id.clone(),
            file,
            points: cloud.len(),
            parts: cloud.num_parts(),
        });
        clouds.insert(cloud.id.clone(), cloud);
    }
    let kept = clean_records(&records, &clouds)?;
    stats.kept = kept.len();
    let ids: Vec<String> = manifest_clouds.iter().map(|c| c.id.clone()).collect();
    let split = if ids.len() >= 2 {
        split_by_cloud(&ids, spec.split_ratio, seed)?
    } else {
        ids.iter().map(|id| (id.clone(), Split::Train)).collect()
    };
    let mut manifest_records = Vec::with_capacity(kept.len());
    for rec in &kept {
        let file = format!("records/{}.json", rec.id);
        store_record(rec, &out.join(&file))?;
        manifest_records.push(ManifestRecord {
            id: rec.id.clone(),
            file,
            cloud_id: rec.cloud_id.clone(),
            split: split[&rec.cloud_id],
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        corpus_id: format!("synthetic-{seed:x}-{count}"),
        seed,
        clouds: manifest_clouds,
        records: manifest_records,
        stats: Some(stats),
        spec: Some(spec.clone()),
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// A loaded corpus: manifest, clouds by id and records in manifest order.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub clouds: HashMap<String, PointCloud>,
    pub records: Vec<SelectionRecord>,
}

impl Corpus {
    pub fn load(dir: &Path) -> Result<Corpus> {
        let manifest = Manifest::load(dir)?;
        let mut clouds = HashMap::new();
        for c in &manifest.clouds {
            let cloud = load_cloud(&dir.join(&c.file))?;
            if cloud.id != c.id {
                return Err(Error::parse(
                    &c.file,
                    2,
                    format!("cloud id {:?} does not match manifest id {:?}", cloud.id, c.id),
                ));
            }
            clouds.insert(c.id.clone(), cloud);
        }
        let mut records = Vec::with_capacity(manifest.records.len());
        for r in &manifest.records {
            let rec = load_record(&dir.join(&r.file))?;
            if !clouds.contains_key(&rec.cloud_id) {
                return Err(Error::UnknownCloud(rec.cloud_id));
            }
            records.push(rec);
        }
        Ok(Corpus {
            root: dir.to_path_buf(),
            manifest,
            clouds,
            records,
        })
    }

    pub fn corpus_id(&self) -> &str {
        &self.manifest.corpus_id
    }

    pub fn split_of(&self, record_index: usize) -> Split {
        self.manifest.records[record_index].split
    }

    /// Records of one split, in manifest order.
    pub fn records_in(&self, split: Split) -> Vec<&SelectionRecord> {
        self.records
            .iter()
            .zip(&self.manifest.records)
            .filter(|(_, m)| m.split == split)
            .map(|(r, _)| r)
            .collect()
    }

    /// Drop records failing the cleaning rule and rewrite the manifest.
    /// Returns `(kept, dropped)`.
    pub fn clean(&mut self) -> Result<(usize, usize)> {
        let kept = clean_records(&self.records, &self.clouds)?;
        let keep: std::collections::HashSet<&str> = kept.iter().map(|r| r.id.as_str()).collect();
        let before = self.records.len();
        let mut manifest_records = Vec::new();
        let mut records = Vec::new();
        for (r, m) in self.records.iter().zip(&self.manifest.records) {
            if keep.contains(r.id.as_str()) {
                records.push(r.clone());
                manifest_records.push(m.clone());
            }
        }
        self.records = records;
        self.manifest.records = manifest_records;
        self.manifest.save(&self.root)?;
        Ok((self.records.len(), before - self.records.len()))
    }
}
