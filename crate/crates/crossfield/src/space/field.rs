//! Ball and net samplers plus generic fields of compact sets: lazy maps
//! from points to finite samples with intersection, transposition and a
//! sampled semicontinuity check.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::space::{CompactSample, MetricSpace, Point, SpaceKind};

/// ε-net of the closed ball B_r(x) at the requested resolution; contains x.
pub fn ball(space: &MetricSpace, x: &Point, r: f64, resolution: f64) -> Result<CompactSample> {
    if !(resolution > 0.0) {
        return Err(Error::Precondition("ball resolution must be positive".into()));
    }
    if r < 0.0 {
        return Err(Error::Precondition("ball radius must be nonnegative".into()));
    }
    let x = space.canonicalize(x)?;
    if r == 0.0 {
        return CompactSample::new(space, vec![x], resolution);
    }
    let mut pts = vec![x];
    match space.kind() {
        SpaceKind::Circle { .. } => {
            let n = (r / resolution).ceil().max(1.0) as i64;
            let step = r / n as f64;
            for i in -n..=n {
                if i != 0 {
                    pts.push(Point::circle(x.coords[0] + i as f64 * step));
                }
            }
        }
        SpaceKind::FlatTorus2 { .. } => {
            // Grid offsets inside the disc; ring cells are pulled onto the
            // boundary so the closed ball keeps full coverage.
            let h = resolution / std::f64::consts::SQRT_2;
            let n = (r / h).ceil() as i64;
            for i in -n..=n {
                for j in -n..=n {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let (mut dx, mut dy) = (i as f64 * h, j as f64 * h);
                    let rho = dx.hypot(dy);
                    if rho > r {
                        if rho > r + h * std::f64::consts::SQRT_2 {
                            continue;
                        }
                        dx *= r / rho;
                        dy *= r / rho;
                    }
                    pts.push(Point::torus(x.coords[0] + dx, x.coords[1] + dy));
                }
            }
        }
        SpaceKind::CatSuspension(geom) => {
            // Height slices; per slice a grid in the eigen frame scaled at
            // the mean height, where the invariant fiber norm is Euclidean.
            let hs = resolution * 0.9;
            let ns = (r / hs).ceil() as i64;
            let h2 = resolution * 0.6;
            for is in -ns..=ns {
                let sigma = (is as f64 * hs).clamp(-r, r);
                let rs2 = r * r - sigma * sigma;
                if rs2 < 0.0 {
                    continue;
                }
                let r_slice = rs2.sqrt();
                let t = x.coords[2] + 0.5 * sigma;
                let wu = (t * geom.log_lambda).exp();
                let n2 = (r_slice / h2).ceil() as i64;
                for ia in -n2..=n2 {
                    for ib in -n2..=n2 {
                        if is == 0 && ia == 0 && ib == 0 {
                            continue;
                        }
                        let (mut a, mut b) = (ia as f64 * h2, ib as f64 * h2);
                        let rho = a.hypot(b);
                        if rho > r_slice {
                            if rho > r_slice + h2 * std::f64::consts::SQRT_2 || rho == 0.0 {
                                continue;
                            }
                            a *= r_slice / rho;
                            b *= r_slice / rho;
                        }
                        // chart delta with invariant norm hypot(a, b) at height t
                        let ca = a / wu;
                        let cb = b * wu;
                        let d = [
                            ca * geom.unstable[0] + cb * geom.stable[0],
                            ca * geom.unstable[1] + cb * geom.stable[1],
                        ];
                        pts.push(Point::suspension(
                            x.coords[0] + d[0],
                            x.coords[1] + d[1],
                            x.coords[2] + sigma,
                        ));
                    }
                }
            }
        }
        SpaceKind::GraphMetric(_) => {
            let whole = net(space, resolution)?;
            for p in whole.points() {
                if space.dist(&x, p)? <= r {
                    pts.push(*p);
                }
            }
        }
    }
    CompactSample::new(space, pts, resolution)
}

/// ε-net of the whole space: a uniform chart grid, deterministic for fixed
/// resolution.
pub fn net(space: &MetricSpace, resolution: f64) -> Result<CompactSample> {
    if !(resolution > 0.0) {
        return Err(Error::Precondition("net resolution must be positive".into()));
    }
    if resolution < 1e-6 * space.diameter() {
        return Err(Error::Resource(format!(
            "net resolution {resolution} below 1e-6 x diameter {}",
            space.diameter()
        )));
    }
    let mut pts = Vec::new();
    match space.kind() {
        SpaceKind::Circle { circumference } => {
            let n = (circumference / resolution).ceil().max(1.0) as usize;
            for i in 0..n {
                pts.push(Point::circle(i as f64 * circumference / n as f64));
            }
        }
        SpaceKind::FlatTorus2 { periods } => {
            let n0 = (periods[0] / resolution).ceil().max(1.0) as usize;
            let n1 = (periods[1] / resolution).ceil().max(1.0) as usize;
            for i in 0..n0 {
                for j in 0..n1 {
                    pts.push(Point::torus(
                        i as f64 * periods[0] / n0 as f64,
                        j as f64 * periods[1] / n1 as f64,
                    ));
                }
            }
        }
        SpaceKind::CatSuspension(_) => {
            let n = (1.0 / resolution).ceil().max(1.0) as usize;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        pts.push(Point::suspension(
                            i as f64 / n as f64,
                            j as f64 / n as f64,
                            k as f64 / n as f64,
                        ));
                    }
                }
            }
        }
        SpaceKind::GraphMetric(g) => {
            for (e, &(_, _, len)) in g.edges.iter().enumerate() {
                let n = (len / resolution).ceil().max(1.0) as usize;
                for i in 0..=n {
                    pts.push(Point::graph(e, len * i as f64 / n as f64));
                }
            }
        }
    }
    CompactSample::new(space, pts, resolution)
}

/// One-parameter neighborhood N_r(x): the geodesic ball of radius
/// r x diameter. N_0(x) = {x}, N_1(x) covers the space.
pub fn one_parameter_neighborhoods(
    space: &MetricSpace,
    r: f64,
    x: &Point,
    resolution: f64,
) -> Result<CompactSample> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Precondition(format!("parameter r={r} outside [0,1]")));
    }
    ball(space, x, r * space.diameter(), resolution)
}

/// Declared regularity class of a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularity {
    Semicontinuous,
    Continuous,
    Unknown,
}

type EvalFn = dyn Fn(&Point) -> Result<CompactSample> + Send + Sync;
type ContainsFn = dyn Fn(&Point, &Point, f64) -> Result<bool> + Send + Sync;

enum FieldKind {
    Null,
    Total,
    Ball { radius: f64 },
    Custom { eval: Arc<EvalFn>, contains: Option<Arc<ContainsFn>> },
    Intersect { lhs: Box<FieldOfCompactSets>, rhs: Box<FieldOfCompactSets>, tolerance: f64 },
    Transpose {
        inner: Box<FieldOfCompactSets>,
        domain: CompactSample,
        tolerance: f64,
        // inner nets over the domain, filled on first use
        cache: OnceLock<Vec<CompactSample>>,
    },
}

/// A lazy map from points to compact samples with a declared regularity
/// class. Evaluation is pure; transposition memoizes the inner nets.
pub struct FieldOfCompactSets {
    space: MetricSpace,
    kind: FieldKind,
    resolution: f64,
    pub base_point_included: bool,
    pub regularity: Regularity,
}

impl FieldOfCompactSets {
    /// The null field x -> {x}.
    pub fn null(space: MetricSpace, resolution: f64) -> FieldOfCompactSets {
        FieldOfCompactSets {
            space,
            kind: FieldKind::Null,
            resolution,
            base_point_included: true,
            regularity: Regularity::Continuous,
        }
    }

    /// The total field x -> X.
    pub fn total(space: MetricSpace, resolution: f64) -> FieldOfCompactSets {
        FieldOfCompactSets {
            space,
            kind: FieldKind::Total,
            resolution,
            base_point_included: true,
            regularity: Regularity::Continuous,
        }
    }

    /// The ball field x -> B_radius(x).
    pub fn ball_field(space: MetricSpace, radius: f64, resolution: f64) -> FieldOfCompactSets {
        FieldOfCompactSets {
            space,
            kind: FieldKind::Ball { radius },
            resolution,
            base_point_included: true,
            regularity: Regularity::Continuous,
        }
    }

    pub fn custom(
        space: MetricSpace,
        resolution: f64,
        regularity: Regularity,
        eval: Arc<EvalFn>,
    ) -> FieldOfCompactSets {
        FieldOfCompactSets {
            space,
            kind: FieldKind::Custom { eval, contains: None },
            resolution,
            base_point_included: true,
            regularity,
        }
    }

    pub fn custom_with_membership(
        space: MetricSpace,
        resolution: f64,
        regularity: Regularity,
        eval: Arc<EvalFn>,
        contains: Arc<ContainsFn>,
    ) -> FieldOfCompactSets {
        FieldOfCompactSets {
            space,
            kind: FieldKind::Custom { eval, contains: Some(contains) },
            resolution,
            base_point_included: true,
            regularity,
        }
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn ball_radius(&self) -> Option<f64> {
        match self.kind {
            FieldKind::Ball { radius } => Some(radius),
            _ => None,
        }
    }

    /// Evaluates the field at a point. Deterministic for equal canonical
    /// inputs.
    pub fn evaluate(&self, x: &Point) -> Result<CompactSample> {
        let x = self.space.canonicalize(x)?;
        match &self.kind {
            FieldKind::Null => CompactSample::new(&self.space, vec![x], self.resolution),
            FieldKind::Total => net(&self.space, self.resolution),
            FieldKind::Ball { radius } => ball(&self.space, &x, *radius, self.resolution),
            FieldKind::Custom { eval, .. } => eval(&x),
            FieldKind::Intersect { lhs, rhs, tolerance } => {
                let a = lhs.evaluate(&x)?;
                let b = rhs.evaluate(&x)?;
                let mut matched = Vec::new();
                for p in a.points() {
                    if b.contains(&self.space, p, *tolerance)? {
                        matched.push(*p);
                    }
                }
                for q in b.points() {
                    if a.contains(&self.space, q, *tolerance)? {
                        matched.push(*q);
                    }
                }
                if matched.is_empty() {
                    return Err(Error::EmptyIntersection { at: x });
                }
                if self.base_point_included {
                    matched.push(x);
                }
                CompactSample::new(&self.space, matched, self.resolution)
            }
            FieldKind::Transpose { inner, domain, tolerance, cache } => {
                let nets = self.transpose_nets(inner, domain, cache)?;
                let mut pts = Vec::new();
                for (y, hy) in domain.points().iter().zip(nets.iter()) {
                    if hy.contains(&self.space, &x, *tolerance)? {
                        pts.push(*y);
                    }
                }
                if inner.base_point_included {
                    pts.push(x);
                }
                if pts.is_empty() {
                    return Err(Error::EmptyIntersection { at: x });
                }
                CompactSample::new(&self.space, pts, self.resolution.max(*tolerance))
            }
        }
    }

    fn transpose_nets<'a>(
        &self,
        inner: &FieldOfCompactSets,
        domain: &CompactSample,
        cache: &'a OnceLock<Vec<CompactSample>>,
    ) -> Result<&'a Vec<CompactSample>> {
        if let Some(nets) = cache.get() {
            return Ok(nets);
        }
        let mut nets = Vec::with_capacity(domain.len());
        for y in domain.points() {
            nets.push(inner.evaluate(y)?);
        }
        Ok(cache.get_or_init(|| nets))
    }

    /// Membership test with fast paths for the analytic field kinds.
    pub fn contains(&self, x: &Point, y: &Point, tol: f64) -> Result<bool> {
        match &self.kind {
            FieldKind::Null => Ok(self.space.dist(x, y)? <= tol),
            FieldKind::Total => Ok(true),
            FieldKind::Ball { radius } => Ok(self.space.dist(x, y)? <= radius + tol),
            FieldKind::Custom { contains: Some(c), .. } => c(x, y, tol),
            FieldKind::Transpose { inner, .. } => inner.contains(y, x, tol),
            _ => {
                let sample = self.evaluate(x)?;
                sample.contains(&self.space, y, tol)
            }
        }
    }
}

/// Pointwise intersection of two fields at the given matching tolerance.
pub fn field_intersect(
    h1: FieldOfCompactSets,
    h2: FieldOfCompactSets,
    tolerance: f64,
) -> Result<FieldOfCompactSets> {
    if h1.space.tag() != h2.space.tag() {
        return Err(Error::SpaceMismatch {
            expected: h1.space.tag().to_string(),
            found: h2.space.tag().to_string(),
        });
    }
    let regularity = match (h1.regularity, h2.regularity) {
        (Regularity::Unknown, _) | (_, Regularity::Unknown) => Regularity::Unknown,
        _ => Regularity::Semicontinuous,
    };
    Ok(FieldOfCompactSets {
        space: h1.space.clone(),
        resolution: h1.resolution.max(h2.resolution),
        base_point_included: h1.base_point_included && h2.base_point_included,
        regularity,
        kind: FieldKind::Intersect { lhs: Box::new(h1), rhs: Box::new(h2), tolerance },
    })
}

/// Sampled transpose h^T(x) = {y in domain : x in h(y) at tolerance}.
pub fn transpose_field(
    h: FieldOfCompactSets,
    domain: CompactSample,
    tolerance: f64,
) -> FieldOfCompactSets {
    FieldOfCompactSets {
        space: h.space.clone(),
        resolution: h.resolution.max(tolerance),
        base_point_included: h.base_point_included,
        regularity: h.regularity,
        kind: FieldKind::Transpose {
            inner: Box::new(h),
            domain,
            tolerance,
            cache: OnceLock::new(),
        },
    }
}

/// Sampled semicontinuity certificate.
#[derive(Debug, Clone)]
pub struct SemicontinuityReport {
    pub max_excess: f64,
    pub worst_pair: Option<(Point, Point)>,
    pub pairs_checked: usize,
}

/// For each pair x, y in the domain with d(x, y) < probe_radius, measures
/// the one-sided excess sup_{z in h(y)} d(z, h(x)). Small excess certifies
/// the sampled semicontinuity modulus.
pub fn check_semicontinuity(
    h: &FieldOfCompactSets,
    domain: &CompactSample,
    probe_radius: f64,
) -> Result<SemicontinuityReport> {
    if domain.is_empty() {
        return Err(Error::Precondition("semicontinuity domain must be non-empty".into()));
    }
    let space = h.space.clone();
    let nets: Vec<CompactSample> =
        domain.points().iter().map(|p| h.evaluate(p)).collect::<Result<_>>()?;
    let mut report =
        SemicontinuityReport { max_excess: 0.0, worst_pair: None, pairs_checked: 0 };
    for (i, x) in domain.points().iter().enumerate() {
        for (j, y) in domain.points().iter().enumerate() {
            if i == j {
                continue;
            }
            let d = space.dist(x, y)?;
            if d >= probe_radius || d == 0.0 {
                continue;
            }
            report.pairs_checked += 1;
            let excess = crate::space::one_sided_excess(&space, &nets[j], &nets[i])?;
            if excess > report.max_excess {
                report.max_excess = excess;
                report.worst_pair = Some((*x, *y));
            }
        }
    }
    Ok(report)
}

/// Largest grid radius r such that B_r(x) is contained in `target` at the
/// given tolerance; 0.0 if even the smallest grid value fails.
pub fn inscribed_radius(
    space: &MetricSpace,
    x: &Point,
    target: &CompactSample,
    grid: &[f64],
    resolution: f64,
) -> Result<f64> {
    let mut best = 0.0f64;
    let mut radii: Vec<f64> = grid.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &r in &radii {
        let b = ball(space, x, r, resolution)?;
        let excess = crate::space::one_sided_excess(space, &b, target)?;
        if excess <= 2.0 * resolution {
            best = r;
        } else {
            break;
        }
    }
    Ok(best)
}
