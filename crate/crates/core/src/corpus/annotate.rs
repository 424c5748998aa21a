//! Synthetic annotator: pick a view where the target part is mostly visible and draw
//! a loose hand-style lasso around its projection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lasso_quality, PointCloud, SelectionRecord, Target};
use crate::error::{Error, Result};
use crate::geometry::{
    centroid, normalize_lasso, project_to_screen, CameraPose, Lasso, Point2, Point3, DEFAULT_FOV_Y_DEGREES,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    /// Candidate cameras on the view sphere around the target.
    pub views: usize,
    pub viewport_w: u32,
    pub viewport_h: u32,
    /// Fraction of the vertical half field of view the target radius spans.
    pub fill: f64,
    /// Hull dilation about its centroid, as a fraction.
    pub dilation: f64,
    /// Maximum vertex jitter as a fraction of the hull diameter.
    pub jitter: f64,
    /// Screen cell size of the occlusion buffer, in pixels.
    pub occlusion_cell: f64,
    /// Views whose unoccluded target fraction reaches this are tried in
    /// random order; the rest follow, most visible first.
    pub min_visibility: f64,
    /// Camera elevation band above the target, in degrees.
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            views: 64,
            viewport_w: 1024,
            viewport_h: 768,
            fill: 0.6,
            dilation: 0.1,
            jitter: 0.02,
            occlusion_cell: 8.0,
            min_visibility: 0.6,
            elevation_min_deg: 5.0,
            elevation_max_deg: 50.0,
        }
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
}

/// Convex hull by the monotone chain; collinear points are dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.u.total_cmp(&b.u).then(a.v.total_cmp(&b.v)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Fibonacci spiral restricted to the band `y in [y_lo, y_hi]` of the unit sphere.
fn fibonacci_direction(i: usize, n: usize, phase: f64, y_lo: f64, y_hi: f64) -> Point3 {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let y = y_hi - (y_hi - y_lo) * (i as f64 + 0.5) / n as f64;
    let r = (1.0 - y * y).max(0.0).sqrt();
    let phi = i as f64 * golden + phase;
    Point3::new(r * phi.cos(), y, r * phi.sin())
}

struct View {
    camera: CameraPose,
    visibility: f64,
    hull: Vec<Point2>,
}

fn evaluate_view(cloud: &PointCloud, target: &[bool], camera: CameraPose, cfg: &AnnotatorConfig) -> Option<View> {
    let (w, h) = camera.viewport();
    let cell = cfg.occlusion_cell;
    let cols = (w as f64 / cell).ceil() as usize + 1;
    let rows = (h as f64 / cell).ceil() as usize + 1;
    let cell_of = |s: Point2| -> Option<usize> {
        if s.u < 0.0 || s.v < 0.0 || s.u >= w as f64 || s.v >= h as f64 {
            return None;
        }
        Some((s.v / cell) as usize * cols + (s.u / cell) as usize)
    };
    let mut depth = vec![f64::INFINITY; cols * rows];
    let mut screen = Vec::with_capacity(cloud.len());
    for (i, &p) in cloud.points.iter().enumerate() {
        let c = camera.transform(p);
        let s = project_to_screen(c, &camera).screen();
        screen.push(s.map(|s| (s, -c.z)));
        if let (false, Some(s)) = (target[i], s) {
            if let Some(k) = cell_of(s) {
                depth[k] = depth[k].min(-c.z);
            }
        }
    }
    let total = target.iter().filter(|&&t| t).count();
    let mut visible = 0usize;
    let mut projected = Vec::new();
    for (i, s) in screen.iter().enumerate() {
        if !target[i] {
            continue;
        }
        if let Some((s, d)) = *s {
            projected.push(s);
            if cell_of(s).is_some_and(|k| d < depth[k]) {
                visible += 1;
            }
        }
    }
    let hull = convex_hull(&projected);
    Lasso::new(hull.clone()).ok()?;
    Some(View {
        camera,
        visibility: visible as f64 / total.max(1) as f64,
        hull,
    })
}

fn draw_lasso(hull: &[Point2], cfg: &AnnotatorConfig, rng: &mut ChaCha8Rng) -> Result<Lasso> {
    let n = hull.len() as f64;
    let cu = hull.iter().map(|p| p.u).sum::<f64>() / n;
    let cv = hull.iter().map(|p| p.v).sum::<f64>() / n;
    let grow = 1.0 + cfg.dilation;
    let dilated: Vec<Point2> = hull
        .iter()
        .map(|p| Point2::new(cu + (p.u - cu) * grow, cv + (p.v - cv) * grow))
        .collect();
    let mut diam2: f64 = 0.0;
    for a in &dilated {
        for b in &dilated {
            diam2 = diam2.max((a.u - b.u).powi(2) + (a.v - b.v).powi(2));
        }
    }
    let diam = diam2.sqrt();
    let spacing = (diam / 40.0).max(2.0);
    let mut stroke = Vec::new();
    for (i, &a) in dilated.iter().enumerate() {
        let b = dilated[(i + 1) % dilated.len()];
        let len = ((b.u - a.u).powi(2) + (b.v - a.v).powi(2)).sqrt();
        let steps = (len / spacing).ceil().max(1.0) as usize;
        for s in 0..steps {
            let t = s as f64 / steps as f64;
            stroke.push(Point2::new(a.u + (b.u - a.u) * t, a.v + (b.v - a.v) * t));
        }
    }
    let max_jitter = cfg.jitter * diam;
    for p in stroke.iter_mut() {
        let r = rng.gen::<f64>() * max_jitter;
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        p.u += r * theta.cos();
        p.v += r * theta.sin();
    }
    normalize_lasso(&stroke)
}

/// Annotate `target_part` of `cloud`; deterministic in `(cloud, part, seed, cfg)`.
pub fn synthesize_annotation(
    cloud: &PointCloud,
    target_part: u32,
    seed: u64,
    cfg: &AnnotatorConfig,
) -> Result<SelectionRecord> {
    let mask: Vec<bool> = cloud.labels.iter().map(|&l| l == target_part).collect();
    let members: Vec<Point3> = cloud
        .points
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p)
        .collect();
    if members.is_empty() {
        return Err(Error::InvalidSpec(format!(
            "part {target_part} of {} is empty",
            cloud.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = centroid(&members);
    let radius = members.iter().map(|p| p.dist2(c)).fold(0.0, f64::max).sqrt().max(1e-3);
    let half_fov = (DEFAULT_FOV_Y_DEGREES / 2.0).to_radians();
    let distance = radius / (cfg.fill * half_fov).sin();
    let phase = rng.gen::<f64>() * std::f64::consts::TAU;

    let y_lo = cfg.elevation_min_deg.to_radians().sin();
    let y_hi = cfg.elevation_max_deg.to_radians().sin();
    let mut views: Vec<(usize, View)> = Vec::with_capacity(cfg.views);
    for i in 0..cfg.views {
        let d = fibonacci_direction(i, cfg.views, phase, y_lo, y_hi);
        let up = if d.y.abs() > 0.95 {
            Point3::new(0.0, 0.0, 1.0)
        } else {
            Point3::new(0.0, 1.0, 0.0)
        };
        let Ok(camera) = CameraPose::look_at(c.add(d.scale(distance)), c, up, cfg.viewport_w, cfg.viewport_h) else {
            continue;
        };
        if let Some(v) = evaluate_view(cloud, &mask, camera, cfg) {
            views.push((i, v));
        }
    }
    let (mut good, mut rest): (Vec<_>, Vec<_>) =
        views.into_iter().partition(|(_, v)| v.visibility >= cfg.min_visibility);
    good.shuffle(&mut rng);
    rest.sort_by(|a, b| b.1.visibility.total_cmp(&a.1.visibility).then(a.0.cmp(&b.0)));
    good.extend(rest);
    let views = good;
    for (i, view) in views {
        let Ok(lasso) = draw_lasso(&view.hull, cfg, &mut rng) else {
            continue;
        };
        if lasso_quality(cloud, &mask, &view.camera, &lasso).passes() {
            return Ok(SelectionRecord {
                id: format!("{}-p{}-v{}-{:08x}", cloud.id, target_part, i, seed as u32),
                cloud_id: cloud.id.clone(),
                target: Target::Part(target_part),
                camera: view.camera,
                lasso,
                annotator: "synthetic".into(),
            });
        }
    }
    Err(Error::NoValidView(target_part))
}
