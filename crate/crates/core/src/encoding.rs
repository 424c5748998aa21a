//! Interaction encoding, intention filtering and farthest-point partitioning.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{centroid, cylinder_selection, project_to_screen, to_camera_space, CameraPose, Lasso, Point3};

/// Expansion factor applied to the lasso bounding box by [`intention_filter`].
pub const INTENTION_BOX_FACTOR: f64 = 1.2;

/// Default maximum number of points per network partition.
pub const DEFAULT_PARTITION_THRESHOLD: usize = 20_480;

/// A cloud point in camera space, tagged with its naive-selection flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodedPoint {
    pub cam: Point3,
    /// 1 if the point projects inside the lasso, else 0.
    pub w: u8,
    pub source_index: usize,
}

/// Translation and uniform scale mapping a partition into the unit ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub centroid: Point3,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, p: Point3) -> Point3 {
        p.sub(self.centroid).scale(1.0 / self.scale)
    }
}

/// The network's input unit: at most `thre` encoded points.
#[derive(Clone, Debug)]
pub struct EncodedPartition {
    pub points: Vec<EncodedPoint>,
    pub normalization: Normalization,
}

impl EncodedPartition {
    /// Build a partition and compute its centroid/max-radius normalization.
    pub fn new(points: Vec<EncodedPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let cams: Vec<Point3> = points.iter().map(|p| p.cam).collect();
        let c = centroid(&cams);
        let radius = cams.iter().map(|p| p.dist2(c)).fold(0.0f64, f64::max).sqrt();
        let scale = if radius > 0.0 { radius } else { 1.0 };
        Ok(EncodedPartition {
            points,
            normalization: Normalization { centroid: c, scale },
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Normalized camera coordinates.
    pub fn positions(&self) -> Vec<Point3> {
        self.points.iter().map(|p| self.normalization.apply(p.cam)).collect()
    }

    /// Row-major `n × 4` network input: normalized (x, y, z) and raw `w`.
    pub fn features(&self) -> Vec<[f64; 4]> {
        self.points
            .iter()
            .map(|p| {
                let q = self.normalization.apply(p.cam);
                [q.x, q.y, q.z, p.w as f64]
            })
            .collect()
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.source_index).collect()
    }
}

/// Transform the cloud to camera space and flag points inside the lasso frustum.
pub fn encode_interaction(points: &[Point3], camera: &CameraPose, lasso: &Lasso) -> Vec<EncodedPoint> {
    let cam = to_camera_space(points, camera);
    let mut w = vec![0u8; points.len()];
    for i in cylinder_selection(points, camera, lasso) {
        w[i] = 1;
    }
    cam.into_iter()
        .zip(w)
        .enumerate()
        .map(|(i, (cam, w))| EncodedPoint {
            cam,
            w,
            source_index: i,
        })
        .collect()
}

/// Result of [`intention_filter`].
#[derive(Clone, Debug)]
pub struct Filtered {
    pub retained: Vec<EncodedPoint>,
    pub discarded: Vec<usize>,
}

/// Keep points whose projection lies inside the lasso bounding box scaled by
/// 1.2 about its center. Points behind the camera are discarded.
pub fn intention_filter(encoded: &[EncodedPoint], camera: &CameraPose, lasso: &Lasso) -> Result<Filtered> {
    let area = lasso.bbox().expanded(INTENTION_BOX_FACTOR);
    let mut retained = Vec::new();
    let mut discarded = Vec::new();
    for p in encoded {
        let keep = match project_to_screen(p.cam, camera).screen() {
            Some(s) => area.contains(s),
            None => false,
        };
        if keep {
            retained.push(*p);
        } else {
            discarded.push(p.source_index);
        }
    }
    if retained.is_empty() {
        return Err(Error::EmptyIntentionArea);
    }
    Ok(Filtered { retained, discarded })
}

fn lex_cmp(a: Point3, b: Point3) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// `true` if candidate `(d, p, i)` beats the incumbent under "largest distance,
/// then lexicographically smallest point, then smallest index".
#[inline]
fn beats(d: f64, p: Point3, i: usize, best_d: f64, best_p: Point3, best_i: usize) -> bool {
    if d != best_d {
        return d > best_d;
    }
    match lex_cmp(p, best_p) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => i < best_i,
    }
}

/// Greedy farthest point sampling.
///
/// The seed is the point farthest from the centroid; every later pick
/// maximizes the minimum distance to the points already picked. Ties go to the
/// lexicographically smallest `(x, y, z)` and then to the smallest index.
/// Returns `k` indices in pick order.
pub fn fps_sample(points: &[Point3], k: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let c = centroid(points);
    let mut seed = 0;
    let mut seed_d = points[0].dist2(c);
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = p.dist2(c);
        if beats(d, *p, i, seed_d, points[seed], seed) {
            seed = i;
            seed_d = d;
        }
    }

    let mut picked = Vec::with_capacity(k);
    picked.push(seed);
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let zs: Vec<f64> = points.iter().map(|p| p.z).collect();
    // Picked points hold -inf so they never win again.
    let mut min_d = vec![f64::INFINITY; n];
    min_d[seed] = f64::NEG_INFINITY;
    let mut last = points[seed];
    while picked.len() < k {
        // Lane-wise maxima let the update loop vectorize.
        let mut lanes = [f64::NEG_INFINITY; 8];
        for ((m, x), (y, z)) in min_d
            .chunks_mut(8)
            .zip(xs.chunks(8))
            .zip(ys.chunks(8).zip(zs.chunks(8)))
        {
            for l in 0..m.len() {
                let (dx, dy, dz) = (x[l] - last.x, y[l] - last.y, z[l] - last.z);
                let d = dx * dx + dy * dy + dz * dz;
                let v = if d < m[l] { d } else { m[l] };
                m[l] = v;
                lanes[l] = if v > lanes[l] { v } else { lanes[l] };
            }
        }
        let max_d = lanes.iter().fold(f64::NEG_INFINITY, |a, &b| if b > a { b } else { a });
        let mut best = usize::MAX;
        for (i, &d) in min_d.iter().enumerate() {
            if d == max_d && (best == usize::MAX || beats(d, points[i], i, max_d, points[best], best)) {
                best = i;
            }
        }
        min_d[best] = f64::NEG_INFINITY;
        picked.push(best);
        last = points[best];
    }
    Ok(picked)
}

/// Split retained points into partitions of at most `thre` points.
///
/// At or below the threshold everything forms one partition. Otherwise FPS
/// repeatedly extracts `min(thre, remaining)` points into a new partition.
pub fn partition(retained: &[EncodedPoint], thre: usize) -> Result<Vec<EncodedPartition>> {
    if retained.is_empty() {
        return Err(Error::EmptyInput);
    }
    if thre == 0 {
        return Err(Error::InvalidK {
            k: 0,
            n: retained.len(),
        });
    }
    if retained.len() <= thre {
        return Ok(vec![EncodedPartition::new(retained.to_vec())?]);
    }
    let mut remaining: Vec<EncodedPoint> = retained.to_vec();
    let mut parts = Vec::new();
    while !remaining.is_empty() {
        let k = thre.min(remaining.len());
        if k == remaining.len() {
            parts.push(EncodedPartition::new(std::mem::take(&mut remaining))?);
            break;
        }
        let cams: Vec<Point3> = remaining.iter().map(|p| p.cam).collect();
        let picks = fps_sample(&cams, k)?;
        let mut chosen = vec![false; remaining.len()];
        for &i in &picks {
            chosen[i] = true;
        }
        let members = picks.iter().map(|&i| remaining[i]).collect();
        parts.push(EncodedPartition::new(members)?);
        remaining = remaining
            .into_iter()
            .zip(chosen)
            .filter_map(|(p, c)| (!c).then_some(p))
            .collect();
    }
    Ok(parts)
}

/// Full encoding front half: encode, filter, partition.
pub fn encode_and_partition(
    points: &[Point3],
    camera: &CameraPose,
    lasso: &Lasso,
    thre: usize,
) -> Result<(Vec<EncodedPartition>, Vec<usize>)> {
    let encoded = encode_interaction(points, camera, lasso);
    let filtered = intention_filter(&encoded, camera, lasso)?;
    let parts = partition(&filtered.retained, thre)?;
    Ok((parts, filtered.discarded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Projection};

    fn row() -> (Vec<Point3>, CameraPose) {
        let cam = CameraPose::identity(1000, 1000);
        let f = 1.0 / 30f64.to_radians().tan();
        let pts = (1..=5)
            .map(|k| Point3::new(((100.0 * k as f64) / 500.0 - 1.0) * 10.0 / f, 0.0, -10.0))
            .collect();
        (pts, cam)
    }

    fn rect(u0: f64, v0: f64, u1: f64, v1: f64) -> Lasso {
        Lasso::new(vec![
            Point2::new(u0, v0),
            Point2::new(u1, v0),
            Point2::new(u1, v1),
            Point2::new(u0, v1),
        ])
        .unwrap()
    }

    fn pt(source_index: usize, cam: Point3) -> EncodedPoint {
        EncodedPoint {
            cam,
            w: 0,
            source_index,
        }
    }

    #[test]
    fn encode_flags_match_cylinder() {
        let (pts, cam) = row();
        let enc = encode_interaction(&pts, &cam, &rect(150.0, 400.0, 450.0, 600.0));
        assert_eq!(enc.iter().map(|e| e.w).collect::<Vec<_>>(), vec![0, 1, 1, 1, 0]);
        let all = encode_interaction(&pts, &cam, &rect(0.0, 0.0, 1000.0, 1000.0));
        assert!(all.iter().all(|e| e.w == 1));
        let none = encode_interaction(&pts, &cam, &rect(0.0, 0.0, 10.0, 10.0));
        assert!(none.iter().all(|e| e.w == 0));
    }

    /// Camera-space point that projects to pixel (u, v) on a 1000×1000 identity camera.
    fn at_pixel(u: f64, v: f64) -> Point3 {
        let f = 1.0 / 30f64.to_radians().tan();
        let d = 10.0;
        Point3::new((u / 500.0 - 1.0) * d / f, (1.0 - v / 500.0) * d / f, -d)
    }

    #[test]
    fn intention_box_is_expanded() {
        let cam = CameraPose::identity(1000, 1000);
        let lasso = rect(10.0, 10.0, 20.0, 20.0);
        let enc = vec![
            pt(0, at_pixel(15.0, 15.0)),
            pt(1, at_pixel(8.0, 15.0)),
            pt(2, at_pixel(20.9, 9.1)),
            pt(3, Point3::new(0.0, 0.0, 3.0)),
        ];
        match project_to_screen(enc[2].cam, &cam) {
            Projection::Screen(s) => assert!((s.u - 20.9).abs() < 1e-9),
            Projection::BehindCamera => unreachable!(),
        }
        let f = intention_filter(&enc, &cam, &lasso).unwrap();
        assert_eq!(
            f.retained.iter().map(|p| p.source_index).collect::<Vec<_>>(),
            vec![0, 2]
        );
        assert_eq!(f.discarded, vec![1, 3]);
        assert!(matches!(
            intention_filter(&enc[1..2], &cam, &lasso),
            Err(Error::EmptyIntentionArea)
        ));
    }

    #[test]
    fn fps_examples() {
        let pts: Vec<Point3> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(fps_sample(&pts, 1).unwrap(), vec![0]);
        assert_eq!(fps_sample(&pts, 2).unwrap(), vec![0, 3]);
        let mut all = fps_sample(&pts, 4).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(matches!(fps_sample(&pts, 0), Err(Error::InvalidK { .. })));
        assert!(matches!(fps_sample(&pts, 5), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn partition_below_threshold_and_degenerate_scale() {
        let pts: Vec<EncodedPoint> = (0..100).map(|i| pt(i, Point3::new(i as f64, 1.0, -2.0))).collect();
        let parts = partition(&pts, DEFAULT_PARTITION_THRESHOLD).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].len(), 100);

        let single = partition(&pts[..1], 4).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].normalization.scale, 1.0);
        assert!(matches!(partition(&[], 4), Err(Error::EmptyInput)));
    }

    #[test]
    fn partition_is_disjoint_cover_and_normalized() {
        let pts: Vec<EncodedPoint> = (0..57)
            .map(|i| {
                let t = i as f64 * 0.37;
                pt(i, Point3::new(t.sin() * 3.0, t.cos() * 2.0, -5.0 - t))
            })
            .collect();
        let parts = partition(&pts, 20).unwrap();
        assert_eq!(parts.iter().map(|p| p.len()).collect::<Vec<_>>(), vec![20, 20, 17]);
        let mut ids: Vec<usize> = parts.iter().flat_map(|p| p.source_indices()).collect();
        ids.sort();
        assert_eq!(ids, (0..57).collect::<Vec<_>>());
        for p in &parts {
            for q in p.positions() {
                assert!(q.norm() <= 1.0 + 1e-9);
            }
        }
    }
}
