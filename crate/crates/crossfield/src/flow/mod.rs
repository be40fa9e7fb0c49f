//! Flow evaluation for the built-in analytic flows and generic ODE flows,
//! with regularity certification and trajectory sampling.

mod ode;
mod profile;

pub use ode::{rk4_flow, rk4_step, VectorField};
pub use profile::OrbitProfile;

use crate::error::{Error, Result};
use crate::space::{net, MetricSpace, Point, SpaceKind, SpaceTag};

/// The flow kinds supported by the library.
#[derive(Clone, Debug)]
pub enum FlowKind {
    /// Constant-speed rotation of the circle.
    CircleRotation { speed: f64 },
    /// Straight-line flow on the flat torus along a unit direction.
    TorusLinear { direction: [f64; 2] },
    /// Unit vertical speed on the suspension; the gluing matrix acts at
    /// integer height crossings.
    CatSuspensionFlow,
    /// Generic ODE flow with fixed-step 4th-order integration.
    Ode { field: VectorField, step: f64 },
}

/// A flow on one of the concrete spaces. Cheap to clone; `inverse` yields
/// the time-reversed flow.
#[derive(Clone, Debug)]
pub struct FlowDescriptor {
    space: MetricSpace,
    kind: FlowKind,
    reversed: bool,
    max_speed: f64,
}

impl FlowDescriptor {
    pub fn circle_rotation(space: MetricSpace, speed: f64) -> Result<FlowDescriptor> {
        if space.tag() != SpaceTag::Circle {
            return Err(Error::Precondition("circle rotation needs a circle space".into()));
        }
        Ok(FlowDescriptor {
            space,
            kind: FlowKind::CircleRotation { speed },
            reversed: false,
            max_speed: speed.abs(),
        })
    }

    pub fn torus_linear(space: MetricSpace, direction: [f64; 2]) -> Result<FlowDescriptor> {
        if space.tag() != SpaceTag::Torus {
            return Err(Error::Precondition("linear flow needs a torus space".into()));
        }
        let n = direction[0].hypot(direction[1]);
        if !(n > 0.0) {
            return Err(Error::Precondition("flow direction must be nonzero".into()));
        }
        let direction = [direction[0] / n, direction[1] / n];
        Ok(FlowDescriptor {
            space,
            kind: FlowKind::TorusLinear { direction },
            reversed: false,
            max_speed: 1.0,
        })
    }

    pub fn cat_suspension(space: MetricSpace) -> Result<FlowDescriptor> {
        if space.tag() != SpaceTag::Suspension {
            return Err(Error::Precondition("suspension flow needs a suspension space".into()));
        }
        Ok(FlowDescriptor {
            space,
            kind: FlowKind::CatSuspensionFlow,
            reversed: false,
            max_speed: 1.0,
        })
    }

    pub fn ode(space: MetricSpace, field: VectorField, step: f64) -> Result<FlowDescriptor> {
        if !(step > 0.0) {
            return Err(Error::Precondition("integrator step must be positive".into()));
        }
        let max_speed = field.max_speed_bound().max(1e-12);
        Ok(FlowDescriptor {
            space,
            kind: FlowKind::Ode { field, step },
            reversed: false,
            max_speed,
        })
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// Upper bound for the metric speed of the flow.
    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    /// The inverse flow: evolve(x, t) of the result equals evolve(x, -t).
    pub fn inverse(&self) -> FlowDescriptor {
        let mut f = self.clone();
        f.reversed = !f.reversed;
        f
    }

    /// Evaluates the flow map at time `t`, returning a canonical point.
    pub fn evolve(&self, x: &Point, t: f64) -> Result<Point> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("non-finite flow time {t}")));
        }
        let x = self.space.canonicalize(x)?;
        if t == 0.0 {
            return Ok(x);
        }
        let te = if self.reversed { -t } else { t };
        match (&self.kind, self.space.kind()) {
            (FlowKind::CircleRotation { speed }, SpaceKind::Circle { .. }) => {
                self.space.canonicalize(&Point::circle(x.coords[0] + speed * te))
            }
            (FlowKind::TorusLinear { direction }, SpaceKind::FlatTorus2 { .. }) => {
                self.space.canonicalize(&Point::torus(
                    x.coords[0] + direction[0] * te,
                    x.coords[1] + direction[1] * te,
                ))
            }
            (FlowKind::CatSuspensionFlow, SpaceKind::CatSuspension(_)) => self
                .space
                .canonicalize(&Point::suspension(x.coords[0], x.coords[1], x.coords[2] + te)),
            (FlowKind::Ode { field, step }, _) => {
                let end = rk4_flow(field, &self.space, &x, te, *step);
                self.space.canonicalize(&end)
            }
            _ => Err(Error::Precondition("flow kind does not match space kind".into())),
        }
    }

    /// Unit-speed chart velocity direction at a point (used to build
    /// transversal frames).
    pub fn chart_direction(&self, x: &Point) -> Result<[f64; 3]> {
        let x = self.space.canonicalize(x)?;
        let sign = if self.reversed { -1.0 } else { 1.0 };
        let v = match &self.kind {
            FlowKind::CircleRotation { speed } => [speed.signum() * sign, 0.0, 0.0],
            FlowKind::TorusLinear { direction } => [sign * direction[0], sign * direction[1], 0.0],
            FlowKind::CatSuspensionFlow => [0.0, 0.0, sign],
            FlowKind::Ode { field, .. } => {
                let f = field.eval(&self.space, &x.coords);
                let n = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt().max(1e-300);
                [sign * f[0] / n, sign * f[1] / n, sign * f[2] / n]
            }
        };
        Ok(v)
    }

    /// Chart vectors spanning the directions transverse to the flow at `x`,
    /// scaled to unit metric length. Empty on the circle, where sections
    /// are single fibers.
    pub fn transversal_frame(&self, x: &Point) -> Result<Vec<[f64; 3]>> {
        let x = self.space.canonicalize(x)?;
        match (&self.kind, self.space.kind()) {
            (FlowKind::CircleRotation { .. }, _) => Ok(vec![]),
            (FlowKind::TorusLinear { direction }, _) => {
                Ok(vec![[-direction[1], direction[0], 0.0]])
            }
            (FlowKind::CatSuspensionFlow, SpaceKind::CatSuspension(geom)) => {
                // Eigen directions scaled so a unit coefficient has unit
                // invariant norm at the height of x.
                let w = (x.coords[2] * geom.log_lambda).exp();
                Ok(vec![
                    [geom.unstable[0] / w, geom.unstable[1] / w, 0.0],
                    [geom.stable[0] * w, geom.stable[1] * w, 0.0],
                ])
            }
            (FlowKind::Ode { .. }, SpaceKind::FlatTorus2 { .. }) => {
                let d = self.chart_direction(&x)?;
                Ok(vec![[-d[1], d[0], 0.0]])
            }
            (FlowKind::Ode { .. }, SpaceKind::Circle { .. }) => Ok(vec![]),
            _ => Err(Error::Precondition("no transversal frame for this flow/space".into())),
        }
    }

    /// Offsets a point by chart displacement `delta`.
    pub fn offset_point(&self, x: &Point, delta: &[f64; 3]) -> Result<Point> {
        let x = self.space.canonicalize(x)?;
        self.space.canonicalize(&Point {
            coords: [x.coords[0] + delta[0], x.coords[1] + delta[1], x.coords[2] + delta[2]],
            tag: x.tag,
        })
    }
}

/// Certificate that the flow moves every point of a certifying net by at
/// least `separation` at time `t_hat`.
#[derive(Clone, Debug)]
pub struct RegularityCertificate {
    pub t_hat: f64,
    pub separation: f64,
    pub resolution: f64,
}

/// Scans the time grid and picks the time maximizing the minimal
/// displacement over a net. Fails when no grid time clears twice the net
/// resolution, which signals an equilibrium or a too-coarse grid.
pub fn certify_regularity(
    flow: &FlowDescriptor,
    net_resolution: f64,
    t_grid: &[f64],
) -> Result<RegularityCertificate> {
    if t_grid.is_empty() {
        return Err(Error::Precondition("regularity time grid must be non-empty".into()));
    }
    let sample = net(flow.space(), net_resolution)?;
    let mut best: Option<(f64, f64)> = None;
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::Precondition("regularity grid times must be positive".into()));
        }
        let mut a = f64::INFINITY;
        for x in sample.points() {
            let y = flow.evolve(x, t)?;
            let d = flow.space().dist(x, &y)?;
            if d < a {
                a = d;
            }
        }
        if best.map_or(true, |(_, ba)| a > ba) {
            best = Some((t, a));
        }
    }
    let (t_hat, separation) = best.unwrap();
    if separation <= 2.0 * net_resolution {
        return Err(Error::NotCertified(format!(
            "best separation {separation:.3e} at t={t_hat} does not clear 2 x resolution {net_resolution:.3e}"
        )));
    }
    Ok(RegularityCertificate { t_hat, separation, resolution: net_resolution })
}

/// Uniform time samples of the orbit segment, endpoints included.
pub fn trajectory_segment(
    flow: &FlowDescriptor,
    x: &Point,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Vec<(f64, Point)>> {
    if steps == 0 {
        return Err(Error::Precondition("trajectory needs at least one step".into()));
    }
    let mut out = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = t0 + (t1 - t0) * i as f64 / steps as f64;
        out.push((t, flow.evolve(x, t)?));
    }
    Ok(out)
}

/// Smallest observed return time of the flow over a coarse net: the first
/// grid time at least `t_min` where some net point comes back within
/// `threshold` of itself. Returns `None` when nothing returns before the
/// horizon, which is all the better for section time windows.
pub fn min_return_time(
    flow: &FlowDescriptor,
    net_resolution: f64,
    threshold: f64,
    t_min: f64,
    horizon: f64,
    dt: f64,
) -> Result<Option<f64>> {
    let sample = net(flow.space(), net_resolution)?;
    let mut best: Option<f64> = None;
    for x in sample.points() {
        let mut t = t_min;
        while t <= horizon {
            if best.map_or(false, |b| t >= b) {
                break;
            }
            let y = flow.evolve(x, t)?;
            if flow.space().dist(x, &y)? < threshold {
                best = Some(t);
                break;
            }
            t += dt;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_flow(speed: f64) -> FlowDescriptor {
        FlowDescriptor::circle_rotation(MetricSpace::circle(1.0).unwrap(), speed).unwrap()
    }

    fn torus_flow(d: [f64; 2]) -> FlowDescriptor {
        FlowDescriptor::torus_linear(MetricSpace::flat_torus(1.0, 1.0).unwrap(), d).unwrap()
    }

    fn cat_flow() -> FlowDescriptor {
        FlowDescriptor::cat_suspension(MetricSpace::cat_suspension([[2, 1], [1, 1]]).unwrap())
            .unwrap()
    }

    #[test]
    fn evolve_identity_at_zero() {
        let f = circle_flow(1.0);
        let x = Point::circle(0.37);
        assert_eq!(f.evolve(&x, 0.0).unwrap(), x);
    }

    #[test]
    fn circle_rotation_wraps() {
        let f = circle_flow(1.0);
        let y = f.evolve(&Point::circle(0.3), 0.9).unwrap();
        assert!((y.coords()[0] - 0.2).abs() < 1e-12, "got {:?}", y);
    }

    #[test]
    fn cat_suspension_applies_gluing() {
        let f = cat_flow();
        let y = f.evolve(&Point::suspension(0.1, 0.2, 0.5), 0.7).unwrap();
        // one crossing: A(0.1, 0.2) = (0.4, 0.3), remaining height 0.2
        assert!((y.coords()[0] - 0.4).abs() < 1e-12);
        assert!((y.coords()[1] - 0.3).abs() < 1e-12);
        assert!((y.coords()[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn group_law_analytic_flows() {
        for f in [circle_flow(1.0), torus_flow([0.8, 0.6]), cat_flow()] {
            let x = match f.space().tag() {
                SpaceTag::Circle => Point::circle(0.21),
                SpaceTag::Torus => Point::torus(0.21, 0.68),
                _ => Point::suspension(0.21, 0.68, 0.43),
            };
            for (s, t) in [(0.3, 0.4), (-0.7, 1.2), (2.3, -0.9)] {
                let a = f.evolve(&f.evolve(&x, t).unwrap(), s).unwrap();
                let b = f.evolve(&x, s + t).unwrap();
                let d = f.space().dist(&a, &b).unwrap();
                assert!(d < 1e-9, "group law defect {d} for s={s}, t={t}");
            }
        }
    }

    #[test]
    fn inverse_flow_reverses_time() {
        let f = circle_flow(1.0);
        let inv = f.inverse();
        let y = inv.evolve(&Point::circle(0.0), 0.3).unwrap();
        assert!((y.coords()[0] - 0.7).abs() < 1e-12);
        // involution
        let again = inv.inverse();
        let a = again.evolve(&Point::circle(0.1), 0.25).unwrap();
        let b = f.evolve(&Point::circle(0.1), 0.25).unwrap();
        assert_eq!(a, b);
        // torus inverse matches reversed direction
        let t = torus_flow([1.0, 0.0]);
        let ti = t.inverse();
        let tr = torus_flow([-1.0, 0.0]);
        let p = Point::torus(0.2, 0.9);
        let a = ti.evolve(&p, 0.4).unwrap();
        let b = tr.evolve(&p, 0.4).unwrap();
        assert!(t.space().dist(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn analytic_flows_are_isometries() {
        for f in [circle_flow(1.0), torus_flow([0.6, 0.8])] {
            let (x, y) = match f.space().tag() {
                SpaceTag::Circle => (Point::circle(0.1), Point::circle(0.42)),
                _ => (Point::torus(0.1, 0.2), Point::torus(0.35, 0.8)),
            };
            let d0 = f.space().dist(&x, &y).unwrap();
            for t in [0.17, 1.3, -2.1] {
                let dt = f
                    .space()
                    .dist(&f.evolve(&x, t).unwrap(), &f.evolve(&y, t).unwrap())
                    .unwrap();
                assert!((dt - d0).abs() < 1e-9, "isometry defect {}", (dt - d0).abs());
            }
        }
    }

    #[test]
    fn certify_regularity_examples() {
        let f = circle_flow(1.0);
        let cert = certify_regularity(&f, 0.05, &[0.25]).unwrap();
        assert_eq!(cert.t_hat, 0.25);
        assert!((cert.separation - 0.25).abs() < 1e-12);

        let t = torus_flow([1.0, 0.0]);
        let cert = certify_regularity(&t, 0.05, &[0.25]).unwrap();
        assert!((cert.separation - 0.25).abs() < 1e-12);

        let frozen = circle_flow(0.0);
        assert!(matches!(
            certify_regularity(&frozen, 0.05, &[0.25, 0.5]),
            Err(Error::NotCertified(_))
        ));
    }

    #[test]
    fn certificate_survives_finer_net() {
        let f = cat_flow();
        let cert = certify_regularity(&f, 0.1, &[0.25]).unwrap();
        let finer = net(f.space(), 0.05).unwrap();
        for x in finer.points() {
            let d = f.space().dist(x, &f.evolve(x, cert.t_hat).unwrap()).unwrap();
            assert!(d >= cert.separation - 2.0 * 0.05 - 1e-9);
        }
    }

    #[test]
    fn trajectory_segment_matches_group_law() {
        let f = circle_flow(1.0);
        let x = Point::circle(0.0);
        let seg = trajectory_segment(&f, &x, 0.0, 0.5, 2).unwrap();
        assert_eq!(seg.len(), 3);
        assert!((seg[1].1.coords()[0] - 0.25).abs() < 1e-12);
        assert!((seg[2].1.coords()[0] - 0.5).abs() < 1e-12);
        let seg = trajectory_segment(&f, &x, 0.0, 1.0, 4).unwrap();
        let composed = f.evolve(&f.evolve(&x, 0.5).unwrap(), 0.25).unwrap();
        assert!(f.space().dist(&seg[3].1, &composed).unwrap() < 1e-12);
    }

    #[test]
    fn ode_flow_tracks_analytic_twin() {
        let space = MetricSpace::flat_torus(1.0, 1.0).unwrap();
        let step = 0.01;
        let f = FlowDescriptor::ode(
            space.clone(),
            VectorField::TorusConstant { velocity: [0.6, 0.8] },
            step,
        )
        .unwrap();
        let twin = FlowDescriptor::torus_linear(space.clone(), [0.6, 0.8]).unwrap();
        let x = Point::torus(0.1, 0.9);
        for t in [0.3, 1.7, -0.9] {
            let a = f.evolve(&x, t).unwrap();
            let b = twin.evolve(&x, t).unwrap();
            assert!(space.dist(&a, &b).unwrap() < 1e-10);
        }
        // group-law defect bounded by 10 x step^4 per unit time
        let (s, t) = (0.7, 0.4);
        let a = f.evolve(&f.evolve(&x, t).unwrap(), s).unwrap();
        let b = f.evolve(&x, s + t).unwrap();
        let bound = 10.0 * step.powi(4) * (s.abs() + t.abs() + (s + t).abs());
        assert!(space.dist(&a, &b).unwrap() <= bound.max(1e-12));
    }

    #[test]
    fn ode_shear_field_integrates() {
        let space = MetricSpace::flat_torus(1.0, 1.0).unwrap();
        let f = FlowDescriptor::ode(
            space.clone(),
            VectorField::TorusShear { base: [1.0, 0.3], wobble: 0.4 },
            0.005,
        )
        .unwrap();
        // halving the step changes the endpoint by O(step^4)
        let g = FlowDescriptor::ode(
            space.clone(),
            VectorField::TorusShear { base: [1.0, 0.3], wobble: 0.4 },
            0.0025,
        )
        .unwrap();
        let x = Point::torus(0.0, 0.0);
        let a = f.evolve(&x, 2.0).unwrap();
        let b = g.evolve(&x, 2.0).unwrap();
        assert!(space.dist(&a, &b).unwrap() < 1e-8);
    }

    #[test]
    fn min_return_time_of_periodic_rotation() {
        let f = circle_flow(1.0);
        let r = min_return_time(&f, 0.1, 0.05, 0.5, 2.0, 0.01).unwrap();
        let t = r.expect("rotation is periodic");
        assert!((t - 1.0).abs() < 0.06, "got {t}");
        // irrational torus direction: no return within a short horizon
        let t = torus_flow([0.8506508083520399, 0.5257311121191336]);
        let r = min_return_time(&t, 0.2, 0.05, 0.5, 3.0, 0.02).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn non_finite_time_rejected() {
        let f = circle_flow(1.0);
        assert!(f.evolve(&Point::circle(0.0), f64::NAN).is_err());
    }
}
