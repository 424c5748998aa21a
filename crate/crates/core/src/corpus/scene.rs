//! Procedural labeled scenes: objects (Gaussian clusters, box shells, tori)
//! optionally standing in a room with a floor, walls and background noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutFamily {
    Clusters,
    Boxes,
    Rings,
    Mixed,
}

impl LayoutFamily {
    pub const ALL: [LayoutFamily; 4] = [
        LayoutFamily::Clusters,
        LayoutFamily::Boxes,
        LayoutFamily::Rings,
        LayoutFamily::Mixed,
    ];
}

/// Part sizes of one scene. Labels are assigned objects first, then floor,
/// walls and noise; everything but the objects is excluded from targeting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub layout: LayoutFamily,
    pub object_points: Vec<usize>,
    #[serde(default)]
    pub floor_points: usize,
    #[serde(default)]
    pub wall_points: Vec<usize>,
    #[serde(default)]
    pub noise_points: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.object_points.is_empty() {
            return bad("a scene needs at least one object");
        }
        if self.object_points.contains(&0) || self.wall_points.contains(&0) {
            return bad("every part needs at least one point");
        }
        if self.wall_points.len() > 2 {
            return bad("at most two walls");
        }
        if !self.wall_points.is_empty() && self.floor_points == 0 {
            return bad("walls need a floor");
        }
        Ok(())
    }

    pub fn total_points(&self) -> usize {
        self.object_points.iter().sum::<usize>()
            + self.floor_points
            + self.wall_points.iter().sum::<usize>()
            + self.noise_points
    }

    pub fn num_parts(&self) -> usize {
        self.object_points.len()
            + (self.floor_points > 0) as usize
            + self.wall_points.len()
            + (self.noise_points > 0) as usize
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Cluster { sigma: [f64; 3] },
    Box { half: [f64; 3] },
    Ring { major: f64, minor: f64 },
}

impl Shape {
    fn bound(&self) -> f64 {
        match *self {
            Shape::Cluster { sigma } => 2.5 * sigma.iter().cloned().fold(0.0, f64::max),
            Shape::Box { half } => (half[0] * half[0] + half[1] * half[1] + half[2] * half[2]).sqrt(),
            Shape::Ring { major, minor } => major + minor,
        }
    }
}

type Rot = [[f64; 3]; 3];

fn apply(r: &Rot, p: [f64; 3]) -> Point3 {
    Point3::new(
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
    )
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rot {
    // Uniform unit quaternion.
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
        b * (tau * u3).cos(),
    );
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Local-frame samples of a shape centered at the origin.
fn sample_shape(shape: Shape, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|_| match shape {
            Shape::Cluster { sigma } => loop {
                let p = [normal(rng) * sigma[0], normal(rng) * sigma[1], normal(rng) * sigma[2]];
                let r2: f64 = (0..3).map(|a| (p[a] / sigma[a]).powi(2)).sum();
                if r2 <= 2.5 * 2.5 {
                    break p;
                }
            },
            Shape::Box { half } => {
                let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let total: f64 = areas.iter().sum();
                let pick = rng.gen::<f64>() * total;
                let axis = if pick < areas[0] {
                    0
                } else if pick < areas[0] + areas[1] {
                    1
                } else {
                    2
                };
                let mut p = [0.0; 3];
                for a in 0..3 {
                    p[a] = if a == axis {
                        if rng.gen_bool(0.5) {
                            half[a]
                        } else {
                            -half[a]
                        }
                    } else {
                        rng.gen_range(-half[a]..=half[a])
                    };
                }
                p
            }
            Shape::Ring { major, minor } => {
                // Area-weighted sampling of the torus surface.
                let (u, v) = loop {
                    let u = rng.gen::<f64>() * tau;
                    let v = rng.gen::<f64>() * tau;
                    let accept = (major + minor * v.cos()) / (major + minor);
                    if rng.gen::<f64>() <= accept {
                        break (u, v);
                    }
                };
                let ring = major + minor * v.cos();
                [ring * u.cos(), ring * u.sin(), minor * v.sin()]
            }
        })
        .collect()
}

fn random_shape(family: LayoutFamily, rng: &mut ChaCha8Rng) -> Shape {
    let family = match family {
        LayoutFamily::Mixed => [LayoutFamily::Clusters, LayoutFamily::Boxes, LayoutFamily::Rings][rng.gen_range(0..3)],
        f => f,
    };
    let s = rng.gen_range(0.25..0.6);
    match family {
        LayoutFamily::Clusters => Shape::Cluster {
            sigma: [0, 1, 2].map(|_| s * rng.gen_range(0.25..0.45)),
        },
        LayoutFamily::Boxes => Shape::Box {
            half: [0, 1, 2].map(|_| s * rng.gen_range(0.4..1.0)),
        },
        _ => Shape::Ring {
            major: s,
            minor: s * rng.gen_range(0.12..0.25),
        },
    }
}

/// One or two linked parts placed as a unit.
struct Placed {
    parts: Vec<(Shape, Rot, Point3)>,
    bound: f64,
}

fn build_groups(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Placed> {
    let mut groups = Vec::new();
    let m = spec.object_points.len();
    let mut i = 0;
    while i < m {
        let shape = random_shape(spec.layout, rng);
        let rot = random_rotation(rng);
        if let (Shape::Ring { major, minor }, true) = (shape, i + 1 < m && rng.gen_bool(0.5)) {
            // Interlocking pair: the second ring's circle passes through the
            // first ring's hole; centerlines stay `major` apart everywhere.
            let e1 = apply(&rot, [1.0, 0.0, 0.0]);
            let n = apply(&rot, [0.0, 0.0, 1.0]);
            let b_normal = e1.cross(n).normalized();
            // Columns e1, n, b_normal map the local ring plane onto span(e1, n).
            let rot_b = [
                [e1.x, n.x, b_normal.x],
                [e1.y, n.y, b_normal.y],
                [e1.z, n.z, b_normal.z],
            ];
            let minor_b = major * rng.gen_range(0.12..0.25);
            let half = e1.scale(major / 2.0);
            let a_off = half.scale(-1.0);
            let b_off = half;
            groups.push(Placed {
                parts: vec![
                    (shape, rot, a_off),
                    (Shape::Ring { major, minor: minor_b }, rot_b, b_off),
                ],
                bound: 1.5 * major + minor.max(minor_b),
            });
            i += 2;
        } else {
            groups.push(Placed {
                parts: vec![(shape, rot, Point3::default())],
                bound: shape.bound(),
            });
            i += 1;
        }
    }
    groups
}

/// Generate a labeled scene; deterministic in `(spec, seed)`.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = build_groups(spec, &mut rng);
    let room = spec.floor_points > 0;
    let (half_w, half_d, height) = if room {
        (
            rng.gen_range(2.0..3.0),
            rng.gen_range(2.0..3.0),
            rng.gen_range(2.2..3.0),
        )
    } else {
        let side = 0.75 * (groups.len() as f64).sqrt() + 0.75;
        (side, side, 0.0)
    };

    let mut centers: Vec<(Point3, f64)> = Vec::new();
    let gap = 0.05;
    for g in &groups {
        let scale_bound = g.bound;
        let mut placed = None;
        for attempt in 0..400 {
            // Widen the region if the scene is crowded.
            let grow = 1.0 + attempt as f64 / 100.0;
            let lim_x = (half_w * grow - scale_bound - gap).max(0.0);
            let lim_z = (half_d * grow - scale_bound - gap).max(0.0);
            let x = rng.gen_range(-lim_x..=lim_x);
            let z = rng.gen_range(-lim_z..=lim_z);
            let y = if room {
                let lift = if rng.gen_bool(0.3) {
                    rng.gen_range(0.0..0.8)
                } else {
                    0.0
                };
                scale_bound + gap + lift
            } else {
                let lim_y = (half_w * grow - scale_bound - gap).max(0.0);
                rng.gen_range(-lim_y..=lim_y)
            };
            let c = Point3::new(x, y, z);
            if centers.iter().all(|&(o, r)| o.dist2(c).sqrt() >= r + scale_bound + gap) {
                placed = Some(c);
                break;
            }
        }
        let c = placed.unwrap_or_else(|| {
            // Stack above everything placed so far.
            let top = centers.iter().map(|&(o, r)| o.y + r).fold(0.0, f64::max);
            Point3::new(0.0, top + scale_bound + gap, 0.0)
        });
        centers.push((c, scale_bound));
    }

    let mut points = Vec::with_capacity(spec.total_points());
    let mut labels = Vec::with_capacity(spec.total_points());
    let mut label = 0u32;
    let mut counts = spec.object_points.iter();
    for (g, &(center, _)) in groups.iter().zip(&centers) {
        for &(shape, rot, offset) in &g.parts {
            let n = *counts.next().expect("one count per part");
            for p in sample_shape(shape, n, &mut rng) {
                points.push(apply(&rot, p).add(offset).add(center));
                labels.push(label);
            }
            label += 1;
        }
    }

    let mut excluded = Vec::new();
    if room {
        let jitter = |rng: &mut ChaCha8Rng| normal(rng) * 0.005;
        excluded.push(label);
        for _ in 0..spec.floor_points {
            let p = Point3::new(
                rng.gen_range(-half_w..half_w),
                jitter(&mut rng),
                rng.gen_range(-half_d..half_d),
            );
            points.push(p);
            labels.push(label);
        }
        label += 1;
        for (w, &n) in spec.wall_points.iter().enumerate() {
            excluded.push(label);
            for _ in 0..n {
                let y = rng.gen_range(0.0..height);
                let p = if w == 0 {
                    Point3::new(rng.gen_range(-half_w..half_w), y, -half_d + jitter(&mut rng))
                } else {
                    Point3::new(-half_w + jitter(&mut rng), y, rng.gen_range(-half_d..half_d))
                };
                points.push(p);
                labels.push(label);
            }
            label += 1;
        }
    }
    if spec.noise_points > 0 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &points {
            for (a, v) in p.to_array().into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        excluded.push(label);
        for _ in 0..spec.noise_points {
            let c = [0, 1, 2].map(|a| {
                let pad = 0.05 * (hi[a] - lo[a]);
                rng.gen_range(lo[a] - pad..=hi[a] + pad)
            });
            points.push(Point3::new(c[0], c[1], c[2]));
            labels.push(label);
        }
    }
    PointCloud::new(format!("scene-{seed:016x}"), points, labels, excluded)
}
