//! Distance-along-orbit profiles: for a fixed anchor point and a fixed
//! moving point, evaluates s -> dist(anchor, evolve(moving, s)) with
//! per-flow precomputed coefficients. Form quadratures and root finds
//! evaluate these profiles thousands of times, so the per-call cost
//! matters; the profiles also expose the kink locations of the integrand
//! (cut-locus and gluing crossings) for segmented quadrature.

use crate::error::{Error, Result};
use crate::flow::{rk4_flow, FlowDescriptor, FlowKind};
use crate::space::{Point, SpaceKind, SuspensionGeometry};

pub struct OrbitProfile {
    inner: ProfileInner,
}

enum ProfileInner {
    Circle {
        circumference: f64,
        offset: f64,
        vel: f64,
    },
    Torus {
        periods: [f64; 2],
        offset: [f64; 2],
        vel: [f64; 2],
    },
    Suspension(Box<SuspensionProfile>),
    Generic(GenericProfile),
}

struct Branch {
    /// lambda^(2 t(0)) for this representative pair.
    lam2t0: f64,
    /// Height difference at s = 0.
    ds0: f64,
    /// (alpha^2, beta^2) eigen components for the nine wrap candidates.
    fibers: [(f64, f64); 9],
}

struct SuspensionProfile {
    log_lambda: f64,
    sign: f64,
    moving_height: f64,
    km_min: i64,
    km_count: usize,
    /// Branches indexed by (ka + 1) * km_count + (km - km_min).
    branches: Vec<Branch>,
}

struct GenericProfile {
    flow: FlowDescriptor,
    anchor: Point,
    s_min: f64,
    step: f64,
    states: Vec<Point>,
}

#[inline]
fn wrap_half(d: f64, p: f64) -> f64 {
    d - p * (d / p).round()
}

impl OrbitProfile {
    pub fn new(
        flow: &FlowDescriptor,
        anchor: &Point,
        moving: &Point,
        s_min: f64,
        s_max: f64,
    ) -> Result<OrbitProfile> {
        let space = flow.space();
        let anchor = space.canonicalize(anchor)?;
        let moving = space.canonicalize(moving)?;
        let sign = if flow.is_reversed() { -1.0 } else { 1.0 };
        let inner = match (flow.kind(), space.kind()) {
            (FlowKind::CircleRotation { speed }, SpaceKind::Circle { circumference }) => {
                ProfileInner::Circle {
                    circumference: *circumference,
                    offset: moving.coords()[0] - anchor.coords()[0],
                    vel: sign * speed,
                }
            }
            (FlowKind::TorusLinear { direction }, SpaceKind::FlatTorus2 { periods }) => {
                ProfileInner::Torus {
                    periods: *periods,
                    offset: [
                        moving.coords()[0] - anchor.coords()[0],
                        moving.coords()[1] - anchor.coords()[1],
                    ],
                    vel: [sign * direction[0], sign * direction[1]],
                }
            }
            (FlowKind::CatSuspensionFlow, SpaceKind::CatSuspension(geom)) => {
                ProfileInner::Suspension(Box::new(SuspensionProfile::build(
                    geom, &anchor, &moving, sign, s_min, s_max,
                )))
            }
            (FlowKind::Ode { step, .. }, _) => {
                let span = (s_max - s_min).max(*step);
                let n = (span / step).ceil() as usize;
                let mut states = Vec::with_capacity(n + 1);
                let mut cur = flow.evolve(&moving, s_min)?;
                states.push(cur);
                if let FlowKind::Ode { field, .. } = flow.kind() {
                    for _ in 0..n {
                        cur = space.canonicalize(&rk4_flow(field, space, &cur, sign * step, *step))?;
                        states.push(cur);
                    }
                }
                ProfileInner::Generic(GenericProfile {
                    flow: flow.clone(),
                    anchor,
                    s_min,
                    step: *step,
                    states,
                })
            }
            _ => return Err(Error::Precondition("flow kind does not match space".into())),
        };
        Ok(OrbitProfile { inner })
    }

    /// dist(anchor, evolve(moving, s)).
    pub fn eval(&self, s: f64) -> f64 {
        match &self.inner {
            ProfileInner::Circle { circumference, offset, vel } => {
                wrap_half(offset + vel * s, *circumference).abs()
            }
            ProfileInner::Torus { periods, offset, vel } => {
                let d0 = wrap_half(offset[0] + vel[0] * s, periods[0]);
                let d1 = wrap_half(offset[1] + vel[1] * s, periods[1]);
                d0.hypot(d1)
            }
            ProfileInner::Suspension(p) => p.eval(s),
            ProfileInner::Generic(p) => p.eval(s),
        }
    }

    /// Pushes the kink locations of `eval` inside `[a, b]` (wrap and gluing
    /// crossings) onto `out`.
    pub fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut push_linear_crossings = |offset: f64, vel: f64, half: f64| {
            if vel == 0.0 {
                return;
            }
            // solutions of offset + vel*s = k*half
            let k_lo = ((offset + vel * lo) / half).floor() as i64 - 1;
            let k_hi = ((offset + vel * hi) / half).ceil() as i64 + 1;
            let (k_lo, k_hi) = if k_lo <= k_hi { (k_lo, k_hi) } else { (k_hi, k_lo) };
            for k in k_lo..=k_hi {
                let s = (k as f64 * half - offset) / vel;
                if s > lo && s < hi {
                    out.push(s);
                }
            }
        };
        match &self.inner {
            ProfileInner::Circle { circumference, offset, vel } => {
                push_linear_crossings(*offset, *vel, circumference / 2.0);
            }
            ProfileInner::Torus { periods, offset, vel } => {
                push_linear_crossings(offset[0], vel[0], periods[0] / 2.0);
                push_linear_crossings(offset[1], vel[1], periods[1] / 2.0);
            }
            ProfileInner::Suspension(p) => {
                // gluing crossings and height-difference kinks
                push_linear_crossings(p.moving_height, p.sign, 0.5);
                for ka in -1i64..=1 {
                    for km in p.km_min..(p.km_min + p.km_count as i64) {
                        let b = &p.branches[p.index(ka, km)];
                        // ds(s) = ds0 - sign*s crossing 0
                        if p.sign != 0.0 {
                            let s = b.ds0 / p.sign;
                            if s > lo && s < hi {
                                out.push(s);
                            }
                        }
                    }
                }
            }
            ProfileInner::Generic(_) => {}
        }
    }
}

impl SuspensionProfile {
    fn build(
        geom: &SuspensionGeometry,
        anchor: &Point,
        moving: &Point,
        sign: f64,
        s_min: f64,
        s_max: f64,
    ) -> SuspensionProfile {
        let va = [anchor.coords()[0], anchor.coords()[1]];
        let sa = anchor.coords()[2];
        let w = [moving.coords()[0], moving.coords()[1]];
        let u = moving.coords()[2];
        let h_lo = u + sign * s_min;
        let h_hi = u + sign * s_max;
        let km_min = h_lo.min(h_hi).floor() as i64 - 1;
        let km_max = h_lo.max(h_hi).floor() as i64 + 1;
        let km_count = (km_max - km_min + 1) as usize;
        let mut branches = Vec::with_capacity(3 * km_count);
        for ka in -1i64..=1 {
            let a_rep = geom.apply_power(va, ka);
            let a_level = sa - ka as f64;
            for km in km_min..=km_max {
                let m_rep = geom.apply_power(w, km);
                let m_level0 = u - km as f64;
                let two_t0 = a_level + m_level0;
                let lam2t0 = (two_t0 * geom.log_lambda).exp();
                let mut fibers = [(0.0, 0.0); 9];
                let mut idx = 0;
                for m0 in -1..=1 {
                    for m1 in -1..=1 {
                        let d = [a_rep[0] - m_rep[0] + m0 as f64, a_rep[1] - m_rep[1] + m1 as f64];
                        let (al, be) = geom.eigen_coords(d);
                        fibers[idx] = (al * al, be * be);
                        idx += 1;
                    }
                }
                branches.push(Branch { lam2t0, ds0: a_level - m_level0, fibers });
            }
        }
        SuspensionProfile {
            log_lambda: geom.log_lambda,
            sign,
            moving_height: u,
            km_min,
            km_count,
            branches,
        }
    }

    #[inline]
    fn index(&self, ka: i64, km: i64) -> usize {
        ((ka + 1) as usize) * self.km_count + (km - self.km_min) as usize
    }

    fn eval(&self, s: f64) -> f64 {
        let e = (self.sign * s * self.log_lambda).exp();
        let h = self.moving_height + self.sign * s;
        let j = h.floor() as i64;
        let j = j.clamp(self.km_min + 1, self.km_min + self.km_count as i64 - 2);
        let mut best2 = f64::INFINITY;
        // the candidate pairs the quotient distance inspects: the moving
        // point against deck translates of the anchor and vice versa
        let slots = [(0i64, j - 1), (0, j), (0, j + 1), (-1, j), (1, j)];
        for &(ka, km) in &slots {
            let b = &self.branches[self.index(ka, km)];
            let ds = b.ds0 - self.sign * s;
            let ds2 = ds * ds;
            if ds2 >= best2 {
                continue;
            }
            let lam2t = b.lam2t0 * e;
            for &(a2, b2) in &b.fibers {
                let cand = a2 * lam2t + b2 / lam2t + ds2;
                if cand < best2 {
                    best2 = cand;
                }
            }
        }
        best2.sqrt()
    }
}

impl GenericProfile {
    fn eval(&self, s: f64) -> f64 {
        let space = self.flow.space();
        let rel = s - self.s_min;
        let i = ((rel / self.step).floor().max(0.0) as usize).min(self.states.len() - 1);
        let rem = rel - i as f64 * self.step;
        let base = &self.states[i];
        let p = if rem.abs() > 1e-15 {
            match self.flow.kind() {
                FlowKind::Ode { field, step } => {
                    let sign = if self.flow.is_reversed() { -1.0 } else { 1.0 };
                    rk4_flow(field, space, base, sign * rem, *step)
                }
                _ => *base,
            }
        } else {
            *base
        };
        space
            .dist(&self.anchor, &p)
            .unwrap_or(f64::INFINITY)
    }
}
