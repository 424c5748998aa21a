//! Parameter-free part of the network: centroid selection, grouping and
//! interpolation weights. Depends only on point positions, so it can be
//! computed once per partition and reused across epochs.

use crate::encoding::fps_sample;
use crate::geometry::Point3;

/// Grouping of one abstraction level `j → j + 1`.
#[derive(Clone, Debug)]
pub struct Level {
    /// Indices (into level-`j` points) of the level-`j+1` centroids.
    pub centroids: Vec<usize>,
    /// Points per group; `min(group_size, n_j)`.
    pub group_size: usize,
    /// `centroids.len() * group_size` member indices into level-`j` points.
    pub members: Vec<u32>,
    /// Member position relative to its group centroid, per member row.
    pub relative: Vec<[f64; 3]>,
    /// For every level-`j` point: up to three nearest centroids and their
    /// normalized inverse-square-distance weights (unused slots have weight 0).
    pub interp_index: Vec<[u32; 3]>,
    pub interp_weight: Vec<[f64; 3]>,
    /// Fewer level-`j` points than `group_size`: a single group of everything.
    pub degenerate: bool,
}

/// Positions at every level plus the grouping between consecutive levels.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub positions: Vec<Vec<Point3>>,
    pub levels: Vec<Level>,
}

#[inline]
fn closer(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Uniform bucket grid for exact k-nearest-neighbor queries.
///
/// Results are identical to a brute-force scan ordered by (distance, index).
struct Grid<'a> {
    points: &'a [Point3],
    origin: Point3,
    cell: f64,
    dims: [usize; 3],
    start: Vec<u32>,
    items: Vec<u32>,
}

const POINTS_PER_CELL: f64 = 4.0;
const MAX_CELLS_PER_AXIS: usize = 128;

impl<'a> Grid<'a> {
    fn new(points: &'a [Point3]) -> Grid<'a> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for (a, v) in p.to_array().into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(0.0)).collect();
        let longest = ext.iter().cloned().fold(0.0, f64::max);
        let target_cells = (points.len() as f64 / POINTS_PER_CELL).max(1.0);
        // Flat or collinear sets: size cells from the extents that exist.
        let floor = longest * 1e-3;
        let vol: f64 = ext.iter().map(|&e| e.max(floor)).product();
        let mut cell = (vol / target_cells).cbrt();
        if !(cell > 0.0 && cell.is_finite()) {
            cell = 1.0;
        }
        cell = cell.max(longest / MAX_CELLS_PER_AXIS as f64);
        let dims = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).min(MAX_CELLS_PER_AXIS));
        let origin = Point3::new(lo[0], lo[1], lo[2]);
        let mut grid = Grid {
            points,
            origin,
            cell,
            dims,
            start: Vec::new(),
            items: Vec::new(),
        };
        let total = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.home(*p))).collect();
        let mut start = vec![0u32; total + 1];
        for &k in &keys {
            start[k + 1] += 1;
        }
        for c in 0..total {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid.start = start;
        grid.items = items;
        grid
    }

    fn home(&self, p: Point3) -> [usize; 3] {
        let q = p.sub(self.origin).to_array();
        [0, 1, 2].map(|a| {
            let c = (q[a] / self.cell).floor();
            if c <= 0.0 {
                0
            } else {
                (c as usize).min(self.dims[a] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Lower bound on the distance from `q` to any cell outside the cube of
    /// radius `r` around `home`; infinite once the cube covers the grid.
    fn outside_bound(&self, q: Point3, home: [usize; 3], r: usize) -> f64 {
        let q = q.sub(self.origin).to_array();
        let mut bound = f64::INFINITY;
        for a in 0..3 {
            if home[a] > r {
                let face = (home[a] - r) as f64 * self.cell;
                bound = bound.min((q[a] - face).max(0.0));
            }
            if home[a] + r + 1 < self.dims[a] {
                let face = (home[a] + r + 1) as f64 * self.cell;
                bound = bound.min((face - q[a]).max(0.0));
            }
        }
        bound
    }

    /// The `k` nearest points to `q`, ordered by (distance², index).
    fn nearest(&self, q: Point3, k: usize, best: &mut Vec<(f64, u32)>) {
        best.clear();
        let home = self.home(q);
        let k = k.min(self.points.len());
        let mut r = 0usize;
        loop {
            let lo = home.map(|c| c.saturating_sub(r));
            let hi = [0, 1, 2].map(|a| (home[a] + r).min(self.dims[a] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let ring = x.abs_diff(home[0]).max(y.abs_diff(home[1])).max(z.abs_diff(home[2]));
                        if ring != r {
                            continue;
                        }
                        let c = self.flat([x, y, z]);
                        for &i in &self.items[self.start[c] as usize..self.start[c + 1] as usize] {
                            let cand = (self.points[i as usize].dist2(q), i);
                            if best.len() < k {
                                let pos = best.partition_point(|&b| closer(b, cand));
                                best.insert(pos, cand);
                            } else if closer(cand, best[k - 1]) {
                                best.pop();
                                let pos = best.partition_point(|&b| closer(b, cand));
                                best.insert(pos, cand);
                            }
                        }
                    }
                }
            }
            let bound = self.outside_bound(q, home, r);
            if bound.is_infinite() || (best.len() == k && best[k - 1].0 < bound * bound) {
                return;
            }
            r += 1;
        }
    }
}

/// Inverse-distance-squared weights over the three nearest centroids.
fn interpolation(nearest: &[(f64, u32)]) -> ([u32; 3], [f64; 3]) {
    let mut idx = [0u32; 3];
    let mut w = [0.0f64; 3];
    if nearest[0].0 == 0.0 {
        idx[0] = nearest[0].1;
        w[0] = 1.0;
        return (idx, w);
    }
    let mut total = 0.0;
    for (s, &(d, i)) in nearest.iter().take(3).enumerate() {
        idx[s] = i;
        w[s] = 1.0 / d;
        total += w[s];
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    (idx, w)
}

impl Hierarchy {
    pub fn build(points: &[Point3], group_size: usize, levels: usize) -> Hierarchy {
        let mut positions = vec![points.to_vec()];
        let mut plans = Vec::with_capacity(levels);
        let mut buf = Vec::new();
        for _ in 0..levels {
            let cur = positions.last().expect("level present");
            let n = cur.len();
            let degenerate = n < group_size;
            let gs = group_size.min(n);
            let m = n.div_ceil(group_size);
            let centroids = fps_sample(cur, m).expect("1 <= m <= n");
            let next: Vec<Point3> = centroids.iter().map(|&c| cur[c]).collect();
            let mut members = Vec::with_capacity(m * gs);
            let mut relative = Vec::with_capacity(m * gs);
            let grid = Grid::new(cur);
            for &c in &centroids {
                let center = cur[c];
                grid.nearest(center, gs, &mut buf);
                for &(_, i) in buf.iter() {
                    members.push(i);
                    relative.push(cur[i as usize].sub(center).to_array());
                }
            }
            let centroid_grid = Grid::new(&next);
            let (interp_index, interp_weight) = cur
                .iter()
                .map(|p| {
                    centroid_grid.nearest(*p, 3, &mut buf);
                    interpolation(&buf)
                })
                .unzip();
            plans.push(Level {
                centroids,
                group_size: gs,
                members,
                relative,
                interp_index,
                interp_weight,
                degenerate,
            });
            positions.push(next);
        }
        Hierarchy {
            positions,
            levels: plans,
        }
    }
}
