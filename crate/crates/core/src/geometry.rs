//! Geometric kernels: lasso normalization, world→camera transforms, screen
//! projection, point-in-polygon and the cylinder-selection baseline.
//!
//! Conventions used by every persisted file and wire format:
//!
//! * camera space is right-handed, camera at the origin looking along −z;
//! * screen space has its origin at the top-left corner, +u to the right,
//!   +v downwards, in pixels;
//! * view matrices are stored row-major and map world to camera space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in 3D object or camera space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[allow(clippy::should_implement_trait)]
impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist2(self, o: Point3) -> f64 {
        let d = self.sub(o);
        d.dot(d)
    }

    pub fn normalized(self) -> Point3 {
        self.scale(1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

/// Centroid of a non-empty point list.
pub fn centroid(points: &[Point3]) -> Point3 {
    let mut acc = Point3::default();
    for p in points {
        acc = acc.add(*p);
    }
    acc.scale(1.0 / points.len() as f64)
}

/// A point in screen space (pixels, top-left origin).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub u: f64,
    pub v: f64,
}

impl Point2 {
    pub const fn new(u: f64, v: f64) -> Self {
        Point2 { u, v }
    }

    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.u - o.u, self.v - o.v)
    }

    fn cross(self, o: Point2) -> f64 {
        self.u * o.v - self.v * o.u
    }

    fn dot(self, o: Point2) -> f64 {
        self.u * o.u + self.v * o.v
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2::new(a[0], a[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.u, p.v]
    }
}

/// Axis-aligned rectangle in screen space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn contains(&self, p: Point2) -> bool {
        p.u >= self.min.u && p.u <= self.max.u && p.v >= self.min.v && p.v <= self.max.v
    }

    /// Scale width and height independently by `factor` about the center.
    pub fn expanded(&self, factor: f64) -> Rect {
        let cu = 0.5 * (self.min.u + self.max.u);
        let cv = 0.5 * (self.min.v + self.max.v);
        let hu = 0.5 * (self.max.u - self.min.u) * factor;
        let hv = 0.5 * (self.max.v - self.min.v) * factor;
        Rect {
            min: Point2::new(cu - hu, cv - hv),
            max: Point2::new(cu + hu, cv + hv),
        }
    }
}

pub const DEFAULT_FOV_Y_DEGREES: f64 = 60.0;
pub const DEFAULT_NEAR: f64 = 0.01;
pub const DEFAULT_FAR: f64 = 1000.0;

/// Viewpoint: a rigid world→camera transform plus perspective parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRaw", into = "CameraRaw")]
pub struct CameraPose {
    view: [[f64; 4]; 4],
    fov_y_degrees: f64,
    aspect: f64,
    near: f64,
    far: f64,
    viewport_w: u32,
    viewport_h: u32,
}

/// Wire form of [`CameraPose`]; `aspect` defaults to `viewport_w / viewport_h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRaw {
    /// 16 reals, row-major, world → camera.
    pub view_matrix: Vec<f64>,
    #[serde(default = "default_fov")]
    pub fov_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<f64>,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_far")]
    pub far: f64,
    pub viewport_w: u32,
    pub viewport_h: u32,
}

fn default_fov() -> f64 {
    DEFAULT_FOV_Y_DEGREES
}
fn default_near() -> f64 {
    DEFAULT_NEAR
}
fn default_far() -> f64 {
    DEFAULT_FAR
}

impl TryFrom<CameraRaw> for CameraPose {
    type Error = Error;

    fn try_from(raw: CameraRaw) -> Result<Self> {
        if raw.view_matrix.len() != 16 {
            return Err(Error::InvalidCamera(format!(
                "view_matrix must have 16 entries, got {}",
                raw.view_matrix.len()
            )));
        }
        let mut view = [[0.0; 4]; 4];
        for (i, v) in raw.view_matrix.iter().enumerate() {
            view[i / 4][i % 4] = *v;
        }
        let aspect = raw
            .aspect
            .unwrap_or(raw.viewport_w as f64 / raw.viewport_h.max(1) as f64);
        CameraPose::new(
            view,
            raw.fov_y,
            aspect,
            raw.near,
            raw.far,
            raw.viewport_w,
            raw.viewport_h,
        )
    }
}

impl From<CameraPose> for CameraRaw {
    fn from(c: CameraPose) -> Self {
        CameraRaw {
            view_matrix: c.view.iter().flatten().copied().collect(),
            fov_y: c.fov_y_degrees,
            aspect: Some(c.aspect),
            near: c.near,
            far: c.far,
            viewport_w: c.viewport_w,
            viewport_h: c.viewport_h,
        }
    }
}

/// Outcome of projecting a camera-space point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    Screen(Point2),
    BehindCamera,
}

impl Projection {
    pub fn screen(self) -> Option<Point2> {
        match self {
            Projection::Screen(p) => Some(p),
            Projection::BehindCamera => None,
        }
    }
}

impl CameraPose {
    pub fn new(
        view: [[f64; 4]; 4],
        fov_y_degrees: f64,
        aspect: f64,
        near: f64,
        far: f64,
        viewport_w: u32,
        viewport_h: u32,
    ) -> Result<Self> {
        let cam = CameraPose {
            view,
            fov_y_degrees,
            aspect,
            near,
            far,
            viewport_w,
            viewport_h,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target` with the default 60° field of view.
    pub fn look_at(eye: Point3, target: Point3, up: Point3, viewport_w: u32, viewport_h: u32) -> Result<Self> {
        let f = target.sub(eye);
        if f.norm() == 0.0 {
            return Err(Error::InvalidCamera("eye and target coincide".into()));
        }
        let f = f.normalized();
        let s = f.cross(up);
        if s.norm() < 1e-12 {
            return Err(Error::InvalidCamera("up vector parallel to view direction".into()));
        }
        let s = s.normalized();
        let u = s.cross(f);
        let view = [
            [s.x, s.y, s.z, -s.dot(eye)],
            [u.x, u.y, u.z, -u.dot(eye)],
            [-f.x, -f.y, -f.z, f.dot(eye)],
            [0.0, 0.0, 0.0, 1.0],
        ];
        CameraPose::new(
            view,
            DEFAULT_FOV_Y_DEGREES,
            viewport_w as f64 / viewport_h.max(1) as f64,
            DEFAULT_NEAR,
            DEFAULT_FAR,
            viewport_w,
            viewport_h,
        )
    }

    /// Identity view (camera at world origin looking along −z).
    pub fn identity(viewport_w: u32, viewport_h: u32) -> Self {
        let mut view = [[0.0; 4]; 4];
        for (i, row) in view.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        CameraPose::new(
            view,
            DEFAULT_FOV_Y_DEGREES,
            viewport_w as f64 / viewport_h as f64,
            DEFAULT_NEAR,
            DEFAULT_FAR,
            viewport_w,
            viewport_h,
        )
        .expect("identity camera is valid")
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCamera(m));
        if self.view.iter().flatten().any(|v| !v.is_finite()) {
            return bad("view matrix has non-finite entries".into());
        }
        let b = self.view[3];
        if b[0] != 0.0 || b[1] != 0.0 || b[2] != 0.0 || (b[3] - 1.0).abs() > 1e-12 {
            return bad("view matrix bottom row must be [0, 0, 0, 1]".into());
        }
        let r = |i: usize, j: usize| self.view[i][j];
        let det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) - r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0))
            + r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
        if (det - 1.0).abs() > 1e-6 {
            return bad(format!("view rotation determinant {det} is not 1"));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r(i, k) * r(j, k)).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return bad("view rotation is not orthonormal".into());
                }
            }
        }
        if !(self.fov_y_degrees > 0.0 && self.fov_y_degrees < 180.0) {
            return bad(format!("fov_y {} outside (0, 180)", self.fov_y_degrees));
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return bad(format!("aspect {} must be positive", self.aspect));
        }
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return bad(format!("need 0 < near < far, got near={} far={}", self.near, self.far));
        }
        if self.viewport_w == 0 || self.viewport_h == 0 {
            return bad("viewport must be non-empty".into());
        }
        Ok(())
    }

    pub fn view_matrix(&self) -> &[[f64; 4]; 4] {
        &self.view
    }
    pub fn fov_y_degrees(&self) -> f64 {
        self.fov_y_degrees
    }
    pub fn aspect(&self) -> f64 {
        self.aspect
    }
    pub fn near(&self) -> f64 {
        self.near
    }
    pub fn far(&self) -> f64 {
        self.far
    }
    pub fn viewport(&self) -> (u32, u32) {
        (self.viewport_w, self.viewport_h)
    }

    /// Camera position in world coordinates.
    pub fn eye(&self) -> Point3 {
        // eye = -Rᵀ t
        let r = &self.view;
        let t = Point3::new(r[0][3], r[1][3], r[2][3]);
        Point3::new(
            -(r[0][0] * t.x + r[1][0] * t.y + r[2][0] * t.z),
            -(r[0][1] * t.x + r[1][1] * t.y + r[2][1] * t.z),
            -(r[0][2] * t.x + r[1][2] * t.y + r[2][2] * t.z),
        )
    }

    pub fn transform(&self, p: Point3) -> Point3 {
        let m = &self.view;
        Point3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3],
        )
    }
}

/// Map world-space points to camera space, preserving order and length.
pub fn to_camera_space(points: &[Point3], camera: &CameraPose) -> Vec<Point3> {
    points.iter().map(|p| camera.transform(*p)).collect()
}

/// Perspective-project a camera-space point into pixel coordinates.
///
/// Points with `z >= -near` are reported as [`Projection::BehindCamera`].
/// There is no far-plane clipping: the selection frustum extends to infinity.
pub fn project_to_screen(p_cam: Point3, camera: &CameraPose) -> Projection {
    if p_cam.z >= -camera.near {
        return Projection::BehindCamera;
    }
    let f = 1.0 / (camera.fov_y_degrees.to_radians() * 0.5).tan();
    let depth = -p_cam.z;
    let ndc_x = f / camera.aspect * p_cam.x / depth;
    let ndc_y = f * p_cam.y / depth;
    let u = (ndc_x + 1.0) * 0.5 * camera.viewport_w as f64;
    let v = (1.0 - ndc_y) * 0.5 * camera.viewport_h as f64;
    Projection::Screen(Point2::new(u, v))
}

/// Closed, non-self-intersecting polygon in screen space. The closing edge from
/// the last vertex back to the first is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Lasso {
    vertices: Vec<Point2>,
}

impl TryFrom<Vec<Point2>> for Lasso {
    type Error = Error;

    fn try_from(vertices: Vec<Point2>) -> Result<Self> {
        Lasso::new(vertices)
    }
}

impl From<Lasso> for Vec<Point2> {
    fn from(l: Lasso) -> Self {
        l.vertices
    }
}

impl Lasso {
    /// Validate an already-closed simple polygon.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegenerateStroke(format!(
                "lasso needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.u.is_finite() || !p.v.is_finite()) {
            return Err(Error::DegenerateStroke("non-finite lasso vertex".into()));
        }
        if !crossings(&vertices).is_empty() {
            return Err(Error::DegenerateStroke("lasso self-intersects".into()));
        }
        if is_zero_area(&vertices) {
            return Err(Error::DegenerateStroke("lasso encloses zero area".into()));
        }
        Ok(Lasso { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn bbox(&self) -> Rect {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            min.u = min.u.min(p.u);
            min.v = min.v.min(p.v);
            max.u = max.u.max(p.u);
            max.v = max.v.max(p.v);
        }
        Rect { min, max }
    }
}

/// Shoelace signed area of a closed polygon.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.u * b.v - b.u * a.v;
    }
    0.5 * acc
}

fn is_zero_area(poly: &[Point2]) -> bool {
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for p in poly {
        lo.u = lo.u.min(p.u);
        lo.v = lo.v.min(p.v);
        hi.u = hi.u.max(p.u);
        hi.v = hi.v.max(p.v);
    }
    let diag2 = (hi.u - lo.u).powi(2) + (hi.v - lo.v).powi(2);
    signed_area(poly).abs() <= 1e-12 * diag2
}

/// Intersection of edge `a` (a0→a1) and edge `b` (b0→b1) with both parameters
/// in the half-open range [0, 1). Parallel edges never intersect.
fn edge_intersection(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> Option<(f64, f64, Point2)> {
    let r = a1.sub(a0);
    let s = b1.sub(b0);
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let qp = b0.sub(a0);
    let t = qp.cross(s) / denom;
    let w = qp.cross(r) / denom;
    if (0.0..1.0).contains(&t) && (0.0..1.0).contains(&w) {
        Some((t, w, Point2::new(a0.u + t * r.u, a0.v + t * r.v)))
    } else {
        None
    }
}

/// Crossings between non-adjacent edges of the closed polygon, as
/// `(edge_i, t_i, edge_j, t_j, point)` with `i < j`.
fn crossings(poly: &[Point2]) -> Vec<(usize, f64, usize, f64, Point2)> {
    let n = poly.len();
    let mut out = Vec::new();
    if n < 4 {
        return out;
    }
    for i in 0..n {
        let (a0, a1) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (b0, b1) = (poly[j], poly[(j + 1) % n]);
            if let Some((t, w, p)) = edge_intersection(a0, a1, b0, b1) {
                out.push((i, t, j, w, p));
            }
        }
    }
    out
}

fn dedup_closed(points: &mut Vec<Point2>) {
    points.dedup();
    while points.len() > 1 && points.first() == points.last() {
        points.pop();
    }
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Vertex,
    Crossing(usize),
}

/// Close a freehand stroke into a simple lasso.
///
/// An open stroke is closed by joining its end to its start. If the closed
/// stroke self-intersects, the result is the simple loop (starting and ending
/// at a crossing) with the largest enclosed area; ties go to the loop that
/// starts earliest along the stroke.
pub fn normalize_lasso(stroke: &[Point2]) -> Result<Lasso> {
    let mut pts: Vec<Point2> = stroke.to_vec();
    if pts.iter().any(|p| !p.u.is_finite() || !p.v.is_finite()) {
        return Err(Error::DegenerateStroke("non-finite stroke point".into()));
    }
    dedup_closed(&mut pts);
    let mut distinct = pts.clone();
    distinct.sort_by(|a, b| a.u.total_cmp(&b.u).then(a.v.total_cmp(&b.v)));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateStroke(format!(
            "stroke has {} distinct points, need 3",
            distinct.len()
        )));
    }

    let hits = crossings(&pts);
    if hits.is_empty() {
        if is_zero_area(&pts) {
            return Err(Error::DegenerateStroke("stroke encloses zero area".into()));
        }
        return Lasso::new(pts);
    }

    // Refine the closed path with crossing nodes inserted along each edge.
    let n = pts.len();
    let mut per_edge: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
    let mut crossing_points = Vec::with_capacity(hits.len());
    for (id, (i, t, j, w, p)) in hits.iter().enumerate() {
        per_edge[*i].push((*t, id));
        per_edge[*j].push((*w, id));
        crossing_points.push(*p);
    }
    let mut seq: Vec<(Node, Point2)> = Vec::with_capacity(n + 2 * hits.len());
    for (e, list) in per_edge.iter_mut().enumerate() {
        seq.push((Node::Vertex, pts[e]));
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, id) in list.iter() {
            seq.push((Node::Crossing(*id), crossing_points[*id]));
        }
    }
    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); hits.len()];
    for (pos, (node, _)) in seq.iter().enumerate() {
        if let Node::Crossing(id) = node {
            positions[*id].push(pos);
        }
    }

    let len = seq.len();
    let mut best: Option<(f64, usize, Vec<Point2>)> = None;
    for pos in &positions {
        let (p, q) = (pos[0], pos[1]);
        // Inner loop p..q and the complementary loop q..p wrapping around.
        for (start, span) in [(p, q - p), (q, len - q + p)] {
            let nodes: Vec<usize> = (0..span).map(|k| (start + k) % len).collect();
            if !loop_is_simple(&seq, &nodes) {
                continue;
            }
            let mut poly: Vec<Point2> = nodes.iter().map(|&k| seq[k].1).collect();
            dedup_closed(&mut poly);
            if poly.len() < 3 || is_zero_area(&poly) {
                continue;
            }
            let area = signed_area(&poly).abs();
            let better = match &best {
                None => true,
                Some((ba, bs, _)) => area > *ba || (area == *ba && start < *bs),
            };
            if better {
                best = Some((area, start, poly));
            }
        }
    }
    match best {
        Some((_, _, poly)) => Lasso::new(poly),
        None => Err(Error::DegenerateStroke("no simple closed loop in stroke".into())),
    }
}

/// A loop is simple iff no crossing id is visited twice along it.
fn loop_is_simple(seq: &[(Node, Point2)], nodes: &[usize]) -> bool {
    let mut seen = std::collections::HashSet::new();
    for &k in &nodes[1..] {
        if let Node::Crossing(id) = seq[k].0 {
            if !seen.insert(id) {
                return false;
            }
        }
    }
    // The start crossing must not reappear inside the loop either.
    if let Node::Crossing(id) = seq[nodes[0]].0 {
        if seen.contains(&id) {
            return false;
        }
    }
    true
}

const BOUNDARY_EPS: f64 = 1e-9;

fn on_segment(q: Point2, a: Point2, b: Point2) -> bool {
    let ab = b.sub(a);
    let aq = q.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return aq.dot(aq).sqrt() <= BOUNDARY_EPS;
    }
    let t = (aq.dot(ab) / len2).clamp(0.0, 1.0);
    let closest = Point2::new(a.u + t * ab.u, a.v + t * ab.v);
    let d = q.sub(closest);
    d.dot(d).sqrt() <= BOUNDARY_EPS
}

/// Even-odd crossing test; points on the boundary count as inside.
pub fn point_in_polygon(q: Point2, lasso: &Lasso) -> bool {
    let poly = lasso.vertices();
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if on_segment(q, a, b) {
            return true;
        }
        if (a.v > q.v) != (b.v > q.v) {
            let u_cross = (b.u - a.u) * (q.v - a.v) / (b.v - a.v) + a.u;
            if q.u < u_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Baseline selection: every point in front of the camera whose projection
/// falls inside the lasso. Returns ascending indices.
pub fn cylinder_selection(points: &[Point3], camera: &CameraPose, lasso: &Lasso) -> Vec<usize> {
    let bbox = lasso.bbox();
    points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let s = project_to_screen(camera.transform(*p), camera).screen()?;
            (bbox.contains(s) && point_in_polygon(s, lasso)).then_some(i)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2(u: f64, v: f64) -> Point2 {
        Point2::new(u, v)
    }

    fn square10() -> Lasso {
        Lasso::new(vec![p2(0.0, 0.0), p2(10.0, 0.0), p2(10.0, 10.0), p2(0.0, 10.0)]).unwrap()
    }

    #[test]
    fn open_stroke_is_closed() {
        let l = normalize_lasso(&[p2(0.0, 0.0), p2(10.0, 0.0), p2(10.0, 10.0)]).unwrap();
        assert_eq!(l.vertices(), &[p2(0.0, 0.0), p2(10.0, 0.0), p2(10.0, 10.0)]);
    }

    #[test]
    fn simple_square_unchanged() {
        let s = square10();
        assert_eq!(normalize_lasso(s.vertices()).unwrap(), s);
    }

    #[test]
    fn self_intersecting_stroke_keeps_largest_loop() {
        let l = normalize_lasso(&[p2(0.0, 0.0), p2(8.0, 8.0), p2(0.0, 8.0), p2(4.0, 0.0)]).unwrap();
        let v = l.vertices();
        assert_eq!(v.len(), 3);
        assert!((v[0].u - 8.0 / 3.0).abs() < 1e-12 && (v[0].v - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(&v[1..], &[p2(8.0, 8.0), p2(0.0, 8.0)]);
        assert!((l.area() - 64.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_strokes_rejected() {
        assert!(matches!(
            normalize_lasso(&[p2(0.0, 0.0), p2(1.0, 1.0)]),
            Err(Error::DegenerateStroke(_))
        ));
        assert!(matches!(
            normalize_lasso(&[p2(0.0, 0.0), p2(1.0, 1.0), p2(1.0, 1.0), p2(0.0, 0.0)]),
            Err(Error::DegenerateStroke(_))
        ));
        assert!(matches!(
            normalize_lasso(&[p2(0.0, 0.0), p2(1.0, 1.0), p2(2.0, 2.0)]),
            Err(Error::DegenerateStroke(_))
        ));
    }

    #[test]
    fn figure_eight_with_two_crossings() {
        // A stroke that crosses itself twice: the big middle lobe wins.
        let stroke = [
            p2(0.0, 0.0),
            p2(10.0, 4.0),
            p2(20.0, 0.0),
            p2(20.0, 10.0),
            p2(10.0, 6.0),
            p2(0.0, 10.0),
            p2(-1.0, 5.0),
            p2(30.0, 5.0),
        ];
        let l = normalize_lasso(&stroke).unwrap();
        assert!(Lasso::new(l.vertices().to_vec()).is_ok());
        let again = normalize_lasso(l.vertices()).unwrap();
        assert_eq!(again, l);
    }

    #[test]
    fn camera_at_z5_maps_origin() {
        let cam = CameraPose::look_at(
            Point3::new(0.0, 0.0, 5.0),
            Point3::default(),
            Point3::new(0.0, 1.0, 0.0),
            1000,
            1000,
        )
        .unwrap();
        let out = to_camera_space(&[Point3::default()], &cam);
        assert!(out[0].dist2(Point3::new(0.0, 0.0, -5.0)) < 1e-24);
        assert!(cam.eye().dist2(Point3::new(0.0, 0.0, 5.0)) < 1e-24);
    }

    #[test]
    fn identity_and_rotation_transforms() {
        let id = CameraPose::identity(100, 100);
        assert_eq!(
            to_camera_space(&[Point3::new(1.0, 2.0, 3.0)], &id)[0],
            Point3::new(1.0, 2.0, 3.0)
        );

        // Rotation by -90° about y sends +x to +z.
        let view = [
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let cam = CameraPose::new(view, 60.0, 1.0, 0.1, 100.0, 100, 100).unwrap();
        assert_eq!(cam.transform(Point3::new(1.0, 0.0, 0.0)), Point3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn rejects_non_rigid_view() {
        let mut view = [[0.0; 4]; 4];
        view[0][0] = 2.0;
        view[1][1] = 1.0;
        view[2][2] = 1.0;
        view[3][3] = 1.0;
        assert!(matches!(
            CameraPose::new(view, 60.0, 1.0, 0.1, 10.0, 10, 10),
            Err(Error::InvalidCamera(_))
        ));
        let id = CameraPose::identity(10, 10);
        assert!(CameraPose::new(*id.view_matrix(), 180.0, 1.0, 0.1, 10.0, 10, 10).is_err());
        assert!(CameraPose::new(*id.view_matrix(), 60.0, 1.0, 1.0, 0.5, 10, 10).is_err());
    }

    #[test]
    fn projection_cases() {
        let cam = CameraPose::identity(1000, 1000);
        let d = 7.0;
        assert_eq!(
            project_to_screen(Point3::new(0.0, 0.0, -d), &cam),
            Projection::Screen(p2(500.0, 500.0))
        );
        let top = project_to_screen(Point3::new(0.0, d * 30f64.to_radians().tan(), -d), &cam)
            .screen()
            .unwrap();
        assert!((top.u - 500.0).abs() < 1e-9 && top.v.abs() < 1e-9);
        assert_eq!(
            project_to_screen(Point3::new(0.0, 0.0, 1.0), &cam),
            Projection::BehindCamera
        );
        assert_eq!(
            project_to_screen(Point3::new(0.0, 0.0, -0.005), &cam),
            Projection::BehindCamera
        );
    }

    #[test]
    fn point_in_polygon_cases() {
        let sq = square10();
        assert!(point_in_polygon(p2(5.0, 5.0), &sq));
        assert!(!point_in_polygon(p2(15.0, 5.0), &sq));
        assert!(point_in_polygon(p2(10.0, 5.0), &sq));
        assert!(point_in_polygon(p2(0.0, 0.0), &sq));
        let concave = Lasso::new(vec![
            p2(0.0, 0.0),
            p2(10.0, 0.0),
            p2(10.0, 10.0),
            p2(5.0, 2.0),
            p2(0.0, 10.0),
        ])
        .unwrap();
        assert!(point_in_polygon(p2(6.0, 1.0), &concave));
        assert!(!point_in_polygon(p2(5.0, 6.0), &concave));
    }

    /// Camera + points such that point i projects to u = 100 * (i + 1), v = 500.
    pub(crate) fn row_fixture() -> (Vec<Point3>, CameraPose) {
        let cam = CameraPose::identity(1000, 1000);
        let f = 1.0 / 30f64.to_radians().tan();
        let d = 10.0;
        let pts = (1..=5)
            .map(|k| {
                let ndc = (100.0 * k as f64) / 500.0 - 1.0;
                Point3::new(ndc * d / f, 0.0, -d)
            })
            .collect();
        (pts, cam)
    }

    #[test]
    fn cylinder_selection_cases() {
        let (pts, cam) = row_fixture();
        let rect = Lasso::new(vec![
            p2(150.0, 400.0),
            p2(450.0, 400.0),
            p2(450.0, 600.0),
            p2(150.0, 600.0),
        ])
        .unwrap();
        assert_eq!(cylinder_selection(&pts, &cam, &rect), vec![1, 2, 3]);
        let all = Lasso::new(vec![p2(0.0, 0.0), p2(1000.0, 0.0), p2(1000.0, 1000.0), p2(0.0, 1000.0)]).unwrap();
        assert_eq!(cylinder_selection(&pts, &cam, &all), vec![0, 1, 2, 3, 4]);
        let none = Lasso::new(vec![p2(0.0, 0.0), p2(50.0, 0.0), p2(50.0, 50.0)]).unwrap();
        assert!(cylinder_selection(&pts, &cam, &none).is_empty());
        let mut behind = pts.clone();
        behind.push(Point3::new(0.0, 0.0, 5.0));
        assert_eq!(cylinder_selection(&behind, &cam, &all), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn camera_serde_defaults_aspect() {
        let json = r#"{"view_matrix":[1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1],"fov_y":60,"near":0.1,"far":100,"viewport_w":800,"viewport_h":400}"#;
        let cam: CameraPose = serde_json::from_str(json).unwrap();
        assert_eq!(cam.aspect(), 2.0);
        let back: CameraPose = serde_json::from_str(&serde_json::to_string(&cam).unwrap()).unwrap();
        assert_eq!(back, cam);
        let bad = r#"{"view_matrix":[1,0,0],"viewport_w":8,"viewport_h":4}"#;
        assert!(serde_json::from_str::<CameraPose>(bad).is_err());
    }
}
