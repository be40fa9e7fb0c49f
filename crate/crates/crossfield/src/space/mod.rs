//! Concrete compact metric spaces, points in canonical chart coordinates,
//! and the intrinsic distance. Finite samples, the Hausdorff metric and
//! fields of compact sets live in the submodules.

mod field;
mod sample;

pub use field::{
    ball, check_semicontinuity, field_intersect, inscribed_radius, net,
    one_parameter_neighborhoods, transpose_field, FieldOfCompactSets, Regularity,
    SemicontinuityReport,
};
pub use sample::{hausdorff, one_sided_excess, CompactSample};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Dedup threshold for point identity.
pub const POINT_DEDUP: f64 = 1e-12;

/// Which concrete space a point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceTag {
    Circle,
    Torus,
    Suspension,
    Graph,
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpaceTag::Circle => "circle",
            SpaceTag::Torus => "flat-torus",
            SpaceTag::Suspension => "cat-suspension",
            SpaceTag::Graph => "metric-graph",
        };
        f.write_str(s)
    }
}

/// A position in a concrete space: up to three chart coordinates plus the
/// space kind. Interpretation per kind: angle for the circle, two reals mod
/// periods for the torus, (v1, v2, s) for the suspension, (edge id, offset)
/// for the graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub(crate) coords: [f64; 3],
    pub(crate) tag: SpaceTag,
}

impl Point {
    pub fn circle(theta: f64) -> Point {
        Point { coords: [theta, 0.0, 0.0], tag: SpaceTag::Circle }
    }
    pub fn torus(x: f64, y: f64) -> Point {
        Point { coords: [x, y, 0.0], tag: SpaceTag::Torus }
    }
    pub fn suspension(v1: f64, v2: f64, s: f64) -> Point {
        Point { coords: [v1, v2, s], tag: SpaceTag::Suspension }
    }
    pub fn graph(edge: usize, offset: f64) -> Point {
        Point { coords: [edge as f64, offset, 0.0], tag: SpaceTag::Graph }
    }

    pub fn coords(&self) -> &[f64] {
        match self.tag {
            SpaceTag::Circle => &self.coords[..1],
            SpaceTag::Torus | SpaceTag::Graph => &self.coords[..2],
            SpaceTag::Suspension => &self.coords[..3],
        }
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    /// Quantized key for memoization maps.
    pub(crate) fn key(&self) -> [i64; 3] {
        let q = |c: f64| (c * 1e9).round() as i64;
        [q(self.coords[0]), q(self.coords[1]), q(self.coords[2])]
    }
}

/// Hyperbolic chart data of the suspension fiber: eigenvalue, eigenbasis and
/// the chart-to-eigenbasis transform. The fiber norm at height `t` weighs the
/// unstable component by `lambda^t` and the stable one by `lambda^-t`, which
/// makes the gluing an isometry.
#[derive(Clone, Debug)]
pub struct SuspensionGeometry {
    pub matrix: [[i64; 2]; 2],
    pub inverse: [[i64; 2]; 2],
    pub lambda: f64,
    pub log_lambda: f64,
    pub unstable: [f64; 2],
    pub stable: [f64; 2],
    /// Rows of the inverse of [unstable | stable]: chart delta -> (a, b).
    pub to_eigen: [[f64; 2]; 2],
}

impl SuspensionGeometry {
    fn build(matrix: [[i64; 2]; 2]) -> Result<SuspensionGeometry> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        let tr = matrix[0][0] + matrix[1][1];
        if det != 1 {
            return Err(Error::Precondition(format!(
                "suspension matrix must have determinant 1, got {det}"
            )));
        }
        if tr <= 2 {
            return Err(Error::Precondition(format!(
                "suspension matrix must be hyperbolic with trace > 2, got trace {tr}"
            )));
        }
        let trf = tr as f64;
        let lambda = 0.5 * (trf + (trf * trf - 4.0).sqrt());
        let a = [
            [matrix[0][0] as f64, matrix[0][1] as f64],
            [matrix[1][0] as f64, matrix[1][1] as f64],
        ];
        let eigvec = |ev: f64| -> [f64; 2] {
            // Pick the better conditioned of the two null-space expressions.
            let v1 = [a[0][1], ev - a[0][0]];
            let v2 = [ev - a[1][1], a[1][0]];
            let n1 = v1[0].hypot(v1[1]);
            let n2 = v2[0].hypot(v2[1]);
            let v = if n1 >= n2 { v1 } else { v2 };
            let n = v[0].hypot(v[1]);
            [v[0] / n, v[1] / n]
        };
        let unstable = eigvec(lambda);
        let stable = eigvec(1.0 / lambda);
        let det_e = unstable[0] * stable[1] - stable[0] * unstable[1];
        if det_e.abs() < 1e-9 {
            return Err(Error::Precondition("degenerate eigenbasis".into()));
        }
        let to_eigen = [
            [stable[1] / det_e, -stable[0] / det_e],
            [-unstable[1] / det_e, unstable[0] / det_e],
        ];
        let inverse = [
            [matrix[1][1], -matrix[0][1]],
            [-matrix[1][0], matrix[0][0]],
        ];
        Ok(SuspensionGeometry {
            matrix,
            inverse,
            lambda,
            log_lambda: lambda.ln(),
            unstable,
            stable,
            to_eigen,
        })
    }

    /// Apply the gluing matrix (or its inverse for k < 0) to fiber
    /// coordinates, reducing mod 1 after every application so entries stay
    /// small and exact.
    pub fn apply_power(&self, v: [f64; 2], k: i64) -> [f64; 2] {
        let m = if k >= 0 { self.matrix } else { self.inverse };
        let mut out = v;
        for _ in 0..k.abs() {
            let x = m[0][0] as f64 * out[0] + m[0][1] as f64 * out[1];
            let y = m[1][0] as f64 * out[0] + m[1][1] as f64 * out[1];
            out = [wrap_unit(x), wrap_unit(y)];
        }
        out
    }

    /// Eigen coordinates (a, b) of a chart fiber difference.
    #[inline]
    pub fn eigen_coords(&self, d: [f64; 2]) -> (f64, f64) {
        (
            self.to_eigen[0][0] * d[0] + self.to_eigen[0][1] * d[1],
            self.to_eigen[1][0] * d[0] + self.to_eigen[1][1] * d[1],
        )
    }
}

/// Graph with weighted edges; points live on edges.
#[derive(Clone, Debug)]
pub struct MetricGraph {
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize, f64)>,
    apsp: Vec<f64>,
}

impl MetricGraph {
    fn build(vertex_count: usize, edges: Vec<(usize, usize, f64)>) -> Result<MetricGraph> {
        if vertex_count == 0 || edges.is_empty() {
            return Err(Error::Precondition("graph needs vertices and edges".into()));
        }
        for &(u, v, len) in &edges {
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::Precondition(format!("edge ({u},{v}) out of range")));
            }
            if !(len > 0.0) {
                return Err(Error::Precondition("edge lengths must be positive".into()));
            }
        }
        let n = vertex_count;
        let mut apsp = vec![f64::INFINITY; n * n];
        for i in 0..n {
            apsp[i * n + i] = 0.0;
        }
        for &(u, v, len) in &edges {
            if len < apsp[u * n + v] {
                apsp[u * n + v] = len;
                apsp[v * n + u] = len;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = apsp[i * n + k] + apsp[k * n + j];
                    if via < apsp[i * n + j] {
                        apsp[i * n + j] = via;
                    }
                }
            }
        }
        if apsp.iter().any(|d| !d.is_finite()) {
            return Err(Error::Precondition("graph must be connected".into()));
        }
        Ok(MetricGraph { vertex_count, edges, apsp })
    }

    #[inline]
    fn vdist(&self, u: usize, v: usize) -> f64 {
        self.apsp[u * self.vertex_count + v]
    }
}

/// The space kinds supported by the library.
#[derive(Clone, Debug)]
pub enum SpaceKind {
    Circle { circumference: f64 },
    FlatTorus2 { periods: [f64; 2] },
    CatSuspension(SuspensionGeometry),
    GraphMetric(MetricGraph),
}

struct SpaceInner {
    kind: SpaceKind,
    diameter: f64,
}

/// A compact metric space descriptor. Cheap to clone.
#[derive(Clone)]
pub struct MetricSpace(Arc<SpaceInner>);

impl fmt::Debug for MetricSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MetricSpace({}, diam={})", self.tag(), self.diameter())
    }
}

#[inline]
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
fn wrap_period(x: f64, p: f64) -> f64 {
    let r = x.rem_euclid(p);
    if r >= p {
        0.0
    } else {
        r
    }
}

/// Distance on a circle of the given circumference between canonical angles.
#[inline]
fn circle_dist(a: f64, b: f64, c: f64) -> f64 {
    let d = (a - b).abs();
    d.min(c - d)
}

impl MetricSpace {
    pub fn circle(circumference: f64) -> Result<MetricSpace> {
        if !(circumference > 0.0) {
            return Err(Error::Precondition("circumference must be positive".into()));
        }
        Ok(MetricSpace(Arc::new(SpaceInner {
            kind: SpaceKind::Circle { circumference },
            diameter: circumference / 2.0,
        })))
    }

    pub fn flat_torus(p1: f64, p2: f64) -> Result<MetricSpace> {
        if !(p1 > 0.0 && p2 > 0.0) {
            return Err(Error::Precondition("torus periods must be positive".into()));
        }
        Ok(MetricSpace(Arc::new(SpaceInner {
            kind: SpaceKind::FlatTorus2 { periods: [p1, p2] },
            diameter: (p1 / 2.0).hypot(p2 / 2.0),
        })))
    }

    pub fn cat_suspension(matrix: [[i64; 2]; 2]) -> Result<MetricSpace> {
        let geom = SuspensionGeometry::build(matrix)?;
        let mut space = MetricSpace(Arc::new(SpaceInner {
            kind: SpaceKind::CatSuspension(geom),
            diameter: 1.0, // placeholder while estimating
        }));
        let diam = space.estimate_diameter(9);
        let inner = Arc::get_mut(&mut space.0).expect("sole owner");
        inner.diameter = diam;
        Ok(space)
    }

    pub fn graph(vertex_count: usize, edges: Vec<(usize, usize, f64)>) -> Result<MetricSpace> {
        let graph = MetricGraph::build(vertex_count, edges)?;
        let mut space = MetricSpace(Arc::new(SpaceInner {
            kind: SpaceKind::GraphMetric(graph),
            diameter: 1.0,
        }));
        let diam = space.estimate_diameter(5);
        let inner = Arc::get_mut(&mut space.0).expect("sole owner");
        inner.diameter = diam;
        Ok(space)
    }

    fn estimate_diameter(&self, per_axis: usize) -> f64 {
        let pts = self.coarse_grid(per_axis);
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max(self.dist(&pts[i], &pts[j]).unwrap_or(0.0));
            }
        }
        best
    }

    /// Plain chart grid used internally (diameter estimates).
    fn coarse_grid(&self, per_axis: usize) -> Vec<Point> {
        let mut out = Vec::new();
        match self.kind() {
            SpaceKind::Circle { circumference } => {
                for i in 0..per_axis {
                    out.push(Point::circle(i as f64 * circumference / per_axis as f64));
                }
            }
            SpaceKind::FlatTorus2 { periods } => {
                for i in 0..per_axis {
                    for j in 0..per_axis {
                        out.push(Point::torus(
                            i as f64 * periods[0] / per_axis as f64,
                            j as f64 * periods[1] / per_axis as f64,
                        ));
                    }
                }
            }
            SpaceKind::CatSuspension(_) => {
                for i in 0..per_axis {
                    for j in 0..per_axis {
                        for k in 0..per_axis {
                            out.push(Point::suspension(
                                i as f64 / per_axis as f64,
                                j as f64 / per_axis as f64,
                                k as f64 / per_axis as f64,
                            ));
                        }
                    }
                }
            }
            SpaceKind::GraphMetric(g) => {
                for (e, &(_, _, len)) in g.edges.iter().enumerate() {
                    for i in 0..=per_axis {
                        out.push(Point::graph(e, len * i as f64 / per_axis as f64));
                    }
                }
            }
        }
        out
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.0.kind
    }

    pub fn tag(&self) -> SpaceTag {
        match self.0.kind {
            SpaceKind::Circle { .. } => SpaceTag::Circle,
            SpaceKind::FlatTorus2 { .. } => SpaceTag::Torus,
            SpaceKind::CatSuspension(_) => SpaceTag::Suspension,
            SpaceKind::GraphMetric(_) => SpaceTag::Graph,
        }
    }

    /// Cached intrinsic diameter.
    pub fn diameter(&self) -> f64 {
        self.0.diameter
    }

    pub fn chart_dim(&self) -> usize {
        match self.tag() {
            SpaceTag::Circle => 1,
            SpaceTag::Torus | SpaceTag::Graph => 2,
            SpaceTag::Suspension => 3,
        }
    }

    pub fn suspension_geometry(&self) -> Option<&SuspensionGeometry> {
        match self.kind() {
            SpaceKind::CatSuspension(g) => Some(g),
            _ => None,
        }
    }

    pub(crate) fn check_tag(&self, p: &Point) -> Result<()> {
        if p.tag != self.tag() {
            return Err(Error::SpaceMismatch {
                expected: self.tag().to_string(),
                found: p.tag.to_string(),
            });
        }
        Ok(())
    }

    /// Canonical fundamental-domain form of a point; idempotent.
    pub fn canonicalize(&self, p: &Point) -> Result<Point> {
        self.check_tag(p)?;
        let c = p.coords;
        Ok(match self.kind() {
            SpaceKind::Circle { circumference } => {
                Point::circle(wrap_period(c[0], *circumference))
            }
            SpaceKind::FlatTorus2 { periods } => {
                Point::torus(wrap_period(c[0], periods[0]), wrap_period(c[1], periods[1]))
            }
            SpaceKind::CatSuspension(geom) => {
                let mut k = c[2].floor();
                let mut s = c[2] - k;
                // The remainder can round up to exactly 1.0 for heights a
                // hair below an integer; that is one more crossing, not a
                // fiber-preserving wrap.
                if s >= 1.0 {
                    k += 1.0;
                    s = 0.0;
                }
                if k.abs() > 64.0 {
                    return Err(Error::Resource(format!(
                        "suspension height {} too far from the fundamental domain",
                        c[2]
                    )));
                }
                let v = geom.apply_power([wrap_unit(c[0]), wrap_unit(c[1])], k as i64);
                Point::suspension(v[0], v[1], s)
            }
            SpaceKind::GraphMetric(g) => {
                let e = c[0] as usize;
                if e >= g.edges.len() {
                    return Err(Error::Domain(format!("edge index {e} out of range")));
                }
                let len = g.edges[e].2;
                Point::graph(e, c[1].clamp(0.0, len))
            }
        })
    }

    /// Intrinsic distance. Exact for the circle, the flat torus and the
    /// graph; for the suspension it is the gluing-invariant chart metric
    /// minimized over the adjacent deck representatives, exact at local
    /// scale (the scale all section constructions operate at).
    pub fn dist(&self, p: &Point, q: &Point) -> Result<f64> {
        let p = self.canonicalize(p)?;
        let q = self.canonicalize(q)?;
        Ok(match self.kind() {
            SpaceKind::Circle { circumference } => {
                circle_dist(p.coords[0], q.coords[0], *circumference)
            }
            SpaceKind::FlatTorus2 { periods } => {
                let d0 = circle_dist(p.coords[0], q.coords[0], periods[0]);
                let d1 = circle_dist(p.coords[1], q.coords[1], periods[1]);
                d0.hypot(d1)
            }
            SpaceKind::CatSuspension(geom) => suspension_dist(geom, &p, &q),
            SpaceKind::GraphMetric(g) => graph_dist(g, &p, &q),
        })
    }
}

/// Chart-invariant candidate distance between two suspension lifts.
///
/// `t` is the mean height; the fiber difference is weighted `lambda^t` along
/// the unstable eigendirection and `lambda^-t` along the stable one, so the
/// value does not change when the gluing is applied to both arguments.
#[inline]
fn lifted_candidate(geom: &SuspensionGeometry, pv: [f64; 2], ps: f64, qv: [f64; 2], qs: f64) -> f64 {
    let ds = ps - qs;
    let t = 0.5 * (ps + qs);
    let wu = (t * geom.log_lambda).exp();
    let ws = 1.0 / wu;
    let mut best = f64::INFINITY;
    for m0 in -1..=1 {
        for m1 in -1..=1 {
            let d = [pv[0] - qv[0] + m0 as f64, pv[1] - qv[1] + m1 as f64];
            let (a, b) = geom.eigen_coords(d);
            let fa = a * wu;
            let fb = b * ws;
            let cand = (fa * fa + fb * fb + ds * ds).sqrt();
            if cand < best {
                best = cand;
            }
        }
    }
    best
}

fn suspension_dist(geom: &SuspensionGeometry, p: &Point, q: &Point) -> f64 {
    let pv = [p.coords[0], p.coords[1]];
    let qv = [q.coords[0], q.coords[1]];
    let ps = p.coords[2];
    let qs = q.coords[2];
    let mut best = f64::INFINITY;
    for k in -1i64..=1 {
        // Compare p against the deck translate of q and, symmetrically, the
        // deck translate of p against q; the candidate set is then invariant
        // under swapping the arguments, which keeps the distance exactly
        // symmetric.
        let qkv = geom.apply_power(qv, k);
        best = best.min(lifted_candidate(geom, pv, ps, qkv, qs - k as f64));
        let pkv = geom.apply_power(pv, k);
        best = best.min(lifted_candidate(geom, pkv, ps - k as f64, qv, qs));
    }
    best
}

fn graph_dist(g: &MetricGraph, p: &Point, q: &Point) -> f64 {
    let (ep, op) = (p.coords[0] as usize, p.coords[1]);
    let (eq, oq) = (q.coords[0] as usize, q.coords[1]);
    let (pu, pv, plen) = g.edges[ep];
    let (qu, qv, qlen) = g.edges[eq];
    let mut best = f64::INFINITY;
    if ep == eq {
        best = (op - oq).abs();
    }
    // Through the endpoints of both edges.
    let p_ends = [(pu, op), (pv, plen - op)];
    let q_ends = [(qu, oq), (qv, qlen - oq)];
    for &(a, da) in &p_ends {
        for &(b, db) in &q_ends {
            let via = da + g.vdist(a, b) + db;
            if via < best {
                best = via;
            }
        }
    }
    best
}
