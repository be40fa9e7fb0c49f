//! The sectional flow and its diagnostics: tracking companion points
//! through moving sections, stable and unstable sets at finite horizon,
//! diameter decay, window bounds for tracked continua, limit sets, and
//! stable-point / wandering verdicts.
//!
//! Every verdict here is "at horizon T": infinite-time statements are
//! approximated by their monotone finite-horizon surrogates and labeled
//! so in the reports.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowDescriptor;
use crate::numerics::{bracket_root, linear_slope, ROOT_MAX_ITER, ROOT_TOL};
use crate::sections::{section_slice, SectionField};
use crate::space::{CompactSample, Point};

/// Tracking outcome of one companion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrackStatus {
    Tracked,
    EscapedAt(f64),
}

/// A companion tracked through the moving sections of a base orbit:
/// h(0) = 0 and the companion at parameter t is phi_{h(t)}(y), kept on the
/// section of phi_t(x).
#[derive(Clone, Debug)]
pub struct SectionalTrajectory {
    pub base: Point,
    pub companion: Point,
    /// (t, h(t), companion position), sampled at the step grid.
    pub samples: Vec<(f64, f64, Point)>,
    pub status: TrackStatus,
}

impl SectionalTrajectory {
    pub fn tracked(&self) -> bool {
        matches!(self.status, TrackStatus::Tracked)
    }

    pub fn final_h(&self) -> f64 {
        self.samples.last().map(|s| s.1).unwrap_or(0.0)
    }

    /// h is strictly increasing along the grid for a monotone field; the
    /// defect reports the worst backward step if any.
    pub fn monotonicity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in self.samples.windows(2) {
            worst = worst.max(w[0].1 - w[1].1);
        }
        worst
    }
}

/// Default step: an eighth of the section time, which keeps consecutive
/// flow boxes overlapping.
pub fn default_dt(section: &SectionField) -> f64 {
    section.tau / 8.0
}

struct StepOutcome {
    h: f64,
    companion: Point,
}

/// One projection step: advance the base, slide the companion onto the new
/// section. The root is bracketed around the hint (the previous step) and
/// falls back to the full window. Roots and landings use the section's own
/// (forward) flow; a reversed tracking flow simply produces negative
/// roots, which is how backward reparametrizations come out.
fn project_step(
    section: &SectionField,
    base_next: &Point,
    companion: &Point,
    hint: f64,
    eps: f64,
) -> Result<Option<StepOutcome>> {
    let flow = section.flow();
    let form = section.form();
    let tau = section.tau;
    let along = form.along_orbit(base_next, companion, -tau, tau)?;
    let eval = |t: f64| along.eval(t);
    let slack = (2.0 * hint.abs()).max(tau / 4.0).min(tau);
    let mut root = None;
    let (lo, hi) = ((hint - slack).max(-tau), (hint + slack).min(tau));
    if lo < hi {
        if let (Ok(glo), Ok(ghi)) = (eval(lo), eval(hi)) {
            if glo == 0.0 {
                root = Some(lo);
            } else if ghi == 0.0 {
                root = Some(hi);
            } else if glo.signum() != ghi.signum() {
                let mut f = |t: f64| eval(t);
                root = bracket_root(&mut f, lo, hi, ROOT_TOL, ROOT_MAX_ITER).ok();
            }
        }
    }
    if root.is_none() {
        match (eval(-tau), eval(tau)) {
            (Ok(glo), Ok(ghi)) if glo.signum() != ghi.signum() => {
                let mut f = |t: f64| eval(t);
                root = bracket_root(&mut f, -tau, tau, ROOT_TOL, ROOT_MAX_ITER).ok();
            }
            _ => {}
        }
    }
    let Some(t) = root else { return Ok(None) };
    let landed = flow.evolve(companion, t)?;
    let d = flow.space().dist(base_next, &landed)?;
    if d > eps + section.resolution {
        return Ok(None);
    }
    Ok(Some(StepOutcome { h: t, companion: landed }))
}

/// Tracks the sectional flow of (x, y) to horizon `T` with step `dt`.
/// Escape (leaving the flow box or the eps-section by more than the
/// resolution) is a status, not an error.
pub fn sectional_flow(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    y: &Point,
    horizon: f64,
    dt: f64,
) -> Result<SectionalTrajectory> {
    track(flow, section, x, y, horizon, dt, true)
}

fn track(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    y: &Point,
    horizon: f64,
    dt: f64,
    record: bool,
) -> Result<SectionalTrajectory> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::Precondition("tracking needs dt > 0 and a nonnegative horizon".into()));
    }
    let guard = if section.gamma > 0.0 { section.gamma / 2.0 } else { section.tau / 2.0 };
    if dt * flow.max_speed() > guard + 1e-12 {
        return Err(Error::Precondition(format!(
            "step dt={dt} too large for the flow-box margin {guard}"
        )));
    }
    let space = flow.space();
    let x = space.canonicalize(x)?;
    let y = space.canonicalize(y)?;
    let eps = section.rho;
    let mut samples = Vec::new();
    if record {
        samples.push((0.0, 0.0, y));
    }
    let mut companion = y;
    let mut h = 0.0;
    let mut t = 0.0;
    // roots come out in the section's forward time; a reversed tracking
    // flow yields negative steps
    let dir = if flow.is_reversed() != section.flow().is_reversed() { -1.0 } else { 1.0 };
    let mut hint = dir * dt;
    while t < horizon - 1e-12 {
        let step = dt.min(horizon - t);
        t += step;
        let base = flow.evolve(&x, t)?;
        match project_step(section, &base, &companion, hint * step / dt, eps)? {
            Some(out) => {
                h += out.h;
                hint = out.h;
                companion = out.companion;
                if record {
                    samples.push((t, h, companion));
                }
            }
            None => {
                if !record {
                    samples.push((t, h, companion));
                }
                return Ok(SectionalTrajectory {
                    base: x,
                    companion: y,
                    samples,
                    status: TrackStatus::EscapedAt(t),
                });
            }
        }
    }
    if !record {
        samples.push((t.max(0.0), h, companion));
    }
    Ok(SectionalTrajectory { base: x, companion: y, samples, status: TrackStatus::Tracked })
}

/// Cheap variant: final state only.
fn track_light(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    y: &Point,
    horizon: f64,
    dt: f64,
) -> Result<SectionalTrajectory> {
    track(flow, section, x, y, horizon, dt, false)
}

/// A sampled finite-horizon stable set.
#[derive(Clone, Debug)]
pub struct StableSetSample {
    pub base: Point,
    pub horizon: f64,
    pub eps: f64,
    pub members: CompactSample,
    /// Final reparametrization value per member, aligned with `members`.
    pub final_h: Vec<f64>,
}

/// Builds the horizon-T stable set of `x`: seeds the eps-section net,
/// keeps the companions that track to the horizon, then extends the
/// surviving set by continuation so the output is a net of it at the
/// requested resolution. (Under exponential divergence the surviving set
/// is far thinner than any seeding grid, so plain grid survivors would be
/// scattered; the continuation walks along the surviving directions.)
pub fn stable_set(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    eps: f64,
    horizon: f64,
    resolution: f64,
) -> Result<StableSetSample> {
    let space = flow.space();
    let x = space.canonicalize(x)?;
    let dt = section.tau / 3.0;
    let slice = section_slice(section, eps).with_resolution(resolution.max(eps / 8.0));
    let seeds = slice.evaluate(&x)?;
    let tracking = section_slice(section, eps);

    let outcomes: Vec<(Point, Option<f64>)> = seeds
        .points()
        .par_iter()
        .map(|y| {
            let traj = track_light(flow, &tracking, &x, y, horizon, dt)?;
            Ok((*y, traj.tracked().then(|| traj.final_h())))
        })
        .collect::<Result<_>>()?;

    let mut members: Vec<Point> = Vec::new();
    let mut final_h: Vec<f64> = Vec::new();
    for (y, h) in &outcomes {
        if let Some(h) = h {
            members.push(*y);
            final_h.push(*h);
        }
    }
    if !members.iter().any(|p| space.dist(p, &x).unwrap_or(1.0) < 1e-9) {
        members.insert(0, x);
        final_h.insert(0, horizon);
    }

    // Continuation along surviving directions from the base point.
    let marched = march_surviving_curve(flow, &tracking, &x, eps, horizon, dt, resolution)?;
    for (p, h) in marched {
        let mut known = false;
        for q in &members {
            if space.dist(&p, q)? < resolution / 2.0 {
                known = true;
                break;
            }
        }
        if !known {
            members.push(p);
            final_h.push(h);
        }
    }

    let members = CompactSample::new(space, members, resolution)?;
    Ok(StableSetSample { base: x, horizon, eps, members, final_h })
}

/// Walks along the section away from the base point, at each step
/// correcting transversally toward the direction that survives tracking
/// longest; stops once no nearby section point survives to the horizon.
fn march_surviving_curve(
    flow: &FlowDescriptor,
    tracking: &SectionField,
    x: &Point,
    eps: f64,
    horizon: f64,
    dt: f64,
    resolution: f64,
) -> Result<Vec<(Point, f64)>> {
    let space = flow.space();
    let frame = flow.transversal_frame(x)?;
    if frame.is_empty() {
        return Ok(Vec::new());
    }
    // slide a chart offset from the base point onto the section
    let slide = |p: &Point, off: &[f64; 3]| -> Result<Option<Point>> {
        let cand = flow.offset_point(p, off)?;
        match tracking.fiber_offset(x, &cand) {
            Ok(t) => {
                let landed = tracking.flow().evolve(&cand, t)?;
                if space.dist(x, &landed)? <= eps {
                    Ok(Some(landed))
                } else {
                    Ok(None)
                }
            }
            Err(Error::DomainEscape { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let escape_time = |p: &Point| -> Result<(f64, f64)> {
        let traj = track_light(flow, tracking, x, p, horizon, dt)?;
        match traj.status {
            TrackStatus::Tracked => Ok((horizon, traj.final_h())),
            TrackStatus::EscapedAt(t) => Ok((t, traj.final_h())),
        }
    };
    let mut out: Vec<(Point, f64)> = Vec::new();
    let mut rays: Vec<[f64; 3]> = Vec::new();
    for e in &frame {
        rays.push(*e);
        rays.push([-e[0], -e[1], -e[2]]);
    }
    let step = resolution.max(eps / 64.0);
    let max_steps = (1.5 * eps / step).ceil() as usize;
    for ray in rays {
        let mut cur = *x;
        let mut dir = ray;
        for _ in 0..max_steps {
            let off = [dir[0] * step, dir[1] * step, dir[2] * step];
            let Some(guess) = slide(&cur, &off)? else { break };
            // fast path: the straight guess survives
            let (t_guess, h_guess) = escape_time(&guess)?;
            let accepted = if t_guess >= horizon - 1e-9 {
                Some((guess, h_guess))
            } else {
                // transversal correction: search the frame direction most
                // orthogonal to the ray for a surviving neighbor
                let normal = pick_normal(&frame, &dir);
                let mut best: Option<(Point, f64, f64)> = None;
                let n_probe = 8;
                for i in -n_probe..=n_probe {
                    let w = i as f64 * step / n_probe as f64;
                    let off2 = [
                        off[0] + normal[0] * w,
                        off[1] + normal[1] * w,
                        off[2] + normal[2] * w,
                    ];
                    if let Some(p) = slide(&cur, &off2)? {
                        let (te, he) = escape_time(&p)?;
                        if best.as_ref().map_or(true, |b| te > b.1) {
                            best = Some((p, te, he));
                        }
                        if te >= horizon - 1e-9 {
                            break;
                        }
                    }
                }
                match best {
                    Some((p, te, he)) if te >= horizon - 1e-9 => Some((p, he)),
                    _ => None,
                }
            };
            match accepted {
                Some((p, h)) => {
                    // update the marching direction toward the accepted point
                    let mut d = [0.0f64; 3];
                    for i in 0..3 {
                        d[i] = p.coords[i] - cur.coords[i];
                        // chart wrap: stay on the short representative
                        if d[i] > 0.5 {
                            d[i] -= 1.0;
                        }
                        if d[i] < -0.5 {
                            d[i] += 1.0;
                        }
                    }
                    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    if n > 1e-12 {
                        dir = [d[0] / n, d[1] / n, d[2] / n];
                    }
                    cur = p;
                    out.push((p, h));
                }
                None => break,
            }
        }
    }
    Ok(out)
}

fn pick_normal(frame: &[[f64; 3]], dir: &[f64; 3]) -> [f64; 3] {
    let mut best = frame[0];
    let mut best_dot = f64::INFINITY;
    for e in frame {
        let norm_e = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt().max(1e-300);
        let dot = (e[0] * dir[0] + e[1] * dir[1] + e[2] * dir[2]).abs() / norm_e;
        if dot < best_dot {
            best_dot = dot;
            best = *e;
        }
    }
    best
}

/// Diameter of the tracked images of the stable set at each grid horizon.
/// Returns (T, diameter) pairs plus the fitted log-diameter slope over the
/// positive entries.
#[derive(Clone, Debug)]
pub struct DecayCurve {
    pub points: Vec<(f64, f64)>,
    pub log_slope: Option<f64>,
}

pub fn diam_decay(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    delta: f64,
    t_grid: &[f64],
) -> Result<DecayCurve> {
    if t_grid.is_empty() {
        return Err(Error::Precondition("decay grid must be non-empty".into()));
    }
    let t_max = t_grid.iter().cloned().fold(0.0f64, f64::max);
    let space = flow.space();
    let set = stable_set(flow, section, x, delta, t_max, section.resolution)?;
    let dt = section.tau / 3.0;
    let tracking = section_slice(section, delta);
    let trajs: Vec<SectionalTrajectory> = set
        .members
        .points()
        .par_iter()
        .map(|y| sectional_flow(flow, &tracking, x, y, t_max, dt))
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut companions = Vec::new();
        for traj in &trajs {
            if !traj.tracked() {
                continue;
            }
            // nearest recorded sample at or before t
            if let Some((_, _, p)) =
                traj.samples.iter().take_while(|s| s.0 <= t + 1e-9).last()
            {
                companions.push(*p);
            }
        }
        let mut diam = 0.0f64;
        for i in 0..companions.len() {
            for j in (i + 1)..companions.len() {
                diam = diam.max(space.dist(&companions[i], &companions[j])?);
            }
        }
        points.push((t, diam));
    }
    let log_points: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, d)| *d > 1e-12)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    Ok(DecayCurve { points, log_slope: linear_slope(&log_points) })
}

/// Window bound for a tracked continuum: if both endpoint diameters are
/// small the whole window should stay bounded.
#[derive(Clone, Debug)]
pub struct KatoWindowReport {
    pub initial_diameter: f64,
    pub final_diameter: f64,
    pub max_intermediate_diameter: f64,
    pub endpoints_small: bool,
    pub window_bounded: bool,
    pub escapes: usize,
}

pub fn kato_window(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    continuum: &CompactSample,
    window: f64,
    delta: f64,
    epsilon: f64,
) -> Result<KatoWindowReport> {
    let space = flow.space();
    let x = space.canonicalize(x)?;
    if !continuum.contains(space, &x, continuum.resolution() * 2.0)? {
        return Err(Error::Precondition("continuum must pass through the base point".into()));
    }
    let dt = section.tau / 3.0;
    let trajs: Vec<SectionalTrajectory> = continuum
        .points()
        .par_iter()
        .map(|y| sectional_flow(flow, section, &x, y, window, dt))
        .collect::<Result<_>>()?;
    let escapes = trajs.iter().filter(|t| !t.tracked()).count();
    let n_steps = trajs.iter().map(|t| t.samples.len()).min().unwrap_or(0);
    let mut max_diam = 0.0f64;
    let mut initial = 0.0f64;
    let mut final_d = 0.0f64;
    for k in 0..n_steps {
        let pts: Vec<Point> = trajs
            .iter()
            .filter(|t| t.tracked())
            .filter_map(|t| t.samples.get(k).map(|s| s.2))
            .collect();
        let mut d = 0.0f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                d = d.max(space.dist(&pts[i], &pts[j])?);
            }
        }
        if k == 0 {
            initial = d;
        }
        if k == n_steps - 1 {
            final_d = d;
        }
        max_diam = max_diam.max(d);
    }
    let endpoints_small = initial <= delta && final_d <= delta && escapes == 0;
    Ok(KatoWindowReport {
        initial_diameter: initial,
        final_diameter: final_d,
        max_intermediate_diameter: max_diam,
        endpoints_small,
        window_bounded: max_diam <= epsilon,
        escapes,
    })
}

/// Finite-horizon limit set: the orbit segment past the burn-in, thinned
/// to the resolution.
pub fn limit_set(
    flow: &FlowDescriptor,
    x: &Point,
    t_max: f64,
    burn_in: f64,
    resolution: f64,
) -> Result<CompactSample> {
    if !(t_max > burn_in) {
        return Err(Error::Precondition("limit set needs t_max > burn_in".into()));
    }
    let space = flow.space();
    let dt = resolution / (2.0 * flow.max_speed().max(1e-9));
    let mut pts = Vec::new();
    let mut t = burn_in;
    while t <= t_max {
        pts.push(flow.evolve(x, t)?);
        t += dt;
    }
    CompactSample::new(space, pts, resolution)?.thin(space, resolution)
}

/// Stable-point verdict at a horizon.
#[derive(Clone, Debug)]
pub struct StablePointReport {
    pub base: Point,
    pub horizon: f64,
    pub eps: f64,
    /// Largest grid delta whose whole section net tracked inside the
    /// eps-section to the horizon; 0 when none did.
    pub delta_star: f64,
    pub stable: bool,
    /// Final companion distances shrank below a tenth of the initial ones.
    pub asymptotic: bool,
}

pub fn stable_point_check(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    eps: f64,
    delta_grid: &[f64],
    horizon: f64,
) -> Result<StablePointReport> {
    let space = flow.space();
    let x = space.canonicalize(x)?;
    let dt = section.tau / 3.0;
    let tracking = section_slice(section, eps);
    let mut grid: Vec<f64> = delta_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut delta_star = 0.0;
    let mut asymptotic = false;
    for &delta in &grid {
        let seeds = section_slice(section, delta)
            .with_resolution((delta / 5.0).max(section.resolution))
            .evaluate(&x)?;
        let results: Vec<(bool, f64, f64)> = seeds
            .points()
            .par_iter()
            .map(|y| {
                let d0 = space.dist(&x, y)?;
                let traj = track_light(flow, &tracking, &x, y, horizon, dt)?;
                if !traj.tracked() {
                    return Ok((false, d0, f64::INFINITY));
                }
                let (t, _, p) = traj.samples.last().unwrap();
                let base_t = flow.evolve(&x, *t)?;
                Ok((true, d0, space.dist(&base_t, &p)?))
            })
            .collect::<Result<_>>()?;
        if results.iter().all(|(ok, _, _)| *ok) {
            delta_star = delta;
            asymptotic = results
                .iter()
                .filter(|(_, d0, _)| *d0 > section.resolution)
                .all(|(_, d0, df)| *df < 0.1 * d0);
        } else {
            break;
        }
    }
    Ok(StablePointReport {
        base: x,
        horizon,
        eps,
        delta_star,
        stable: delta_star > 0.0,
        asymptotic,
    })
}

/// Wandering verdict at a horizon: scans for returns of the tracked
/// section into the starting one.
#[derive(Clone, Debug)]
pub struct WanderingReport {
    pub base: Point,
    pub horizon: f64,
    pub radius: f64,
    pub first_return: Option<f64>,
    pub wandering_at_horizon: bool,
}

pub fn wandering_check(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    radius: f64,
    horizon: f64,
) -> Result<WanderingReport> {
    let space = flow.space();
    let x = space.canonicalize(x)?;
    let slice = section_slice(section, radius)
        .with_resolution((radius / 4.0).max(section.resolution));
    let seeds = slice.evaluate(&x)?;
    let dt = section.tau / 2.0;
    let t_min = if section.eps_mono > 0.0 { section.eps_mono } else { 2.0 * section.tau };
    let res = section.resolution;
    let mut first_return: Option<f64> = None;
    'outer: for y in seeds.points() {
        // follow the orbit of the seed and test re-entry into the slice
        let mut t = t_min;
        while t <= horizon {
            let moved = flow.evolve(y, t)?;
            if space.dist(&moved, &x)? <= radius + res && slice.contains(&x, &moved, res)? {
                first_return = Some(match first_return {
                    Some(f) => f.min(t),
                    None => t,
                });
                break 'outer;
            }
            t += dt;
        }
    }
    Ok(WanderingReport {
        base: x,
        horizon,
        radius,
        first_return,
        wandering_at_horizon: first_return.is_none(),
    })
}

/// Connected-component verdict for the stable set through a point.
#[derive(Clone, Debug)]
pub struct ContinuumReport {
    pub base: Point,
    pub eps: f64,
    pub horizon: f64,
    pub component: CompactSample,
    pub diameter: f64,
    pub nontrivial: bool,
}

/// Extracts the net-adjacency connected component of the stable set
/// through `x` (adjacency at twice the resolution) and compares its
/// diameter against `delta`.
pub fn nontrivial_stable_continuum(
    flow: &FlowDescriptor,
    section: &SectionField,
    x: &Point,
    eps: f64,
    delta: f64,
    horizon: f64,
) -> Result<ContinuumReport> {
    let space = flow.space();
    let x = space.canonicalize(x)?;
    let set = stable_set(flow, section, &x, eps, horizon, section.resolution)?;
    let pts = set.members.points();
    let adj = 2.0 * section.resolution;
    // BFS from the base point over the adjacency graph
    let start = (0..pts.len())
        .min_by(|&i, &j| {
            let di = space.dist(&pts[i], &x).unwrap_or(f64::INFINITY);
            let dj = space.dist(&pts[j], &x).unwrap_or(f64::INFINITY);
            di.partial_cmp(&dj).unwrap()
        })
        .unwrap_or(0);
    let mut seen = vec![false; pts.len()];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        for j in 0..pts.len() {
            if !seen[j] && space.dist(&pts[i], &pts[j])? <= adj {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    let comp_pts: Vec<Point> =
        pts.iter().zip(seen.iter()).filter(|(_, s)| **s).map(|(p, _)| *p).collect();
    let component = CompactSample::new(space, comp_pts, set.members.resolution())?;
    let diameter = component.diameter(space)?;
    Ok(ContinuumReport {
        base: x,
        eps,
        horizon,
        component,
        diameter,
        nontrivial: diameter >= delta,
    })
}
