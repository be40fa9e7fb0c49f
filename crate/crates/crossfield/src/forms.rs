//! Topological 1-forms on neighborhood domains: the distance pairing, the
//! Whitney-style integrated form with its analytic flow derivative, time
//! forms read off a section kernel by monotone root finding, the
//! monotonizing form, transposition and antisymmetrization.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::flow::{FlowDescriptor, OrbitProfile};
use crate::numerics::{bracket_root, simpson_adaptive, QUAD_TOL, ROOT_MAX_ITER, ROOT_TOL};
use crate::space::{FieldOfCompactSets, Point};

/// How a form reports its flow derivative.
#[derive(Clone, Copy, Debug)]
pub enum DerivSpec {
    /// Central finite difference with the form's default step.
    FiniteDifference,
    /// base(x, evolve(y, t_hat)) - base(x, y): derivative of an integrated
    /// form whose defining integral telescopes along the flow.
    WhitneyAnalytic,
    /// Exactly 1: a time form shifts additively along the flow.
    ConstUnit,
    /// A known constant (the transposed monotonizing form has derivative
    /// t_hat everywhere).
    Const(f64),
    /// Difference of the two sides of an antisymmetrized form.
    Split,
}

struct TimeParams {
    window: f64,
    scan_step: f64,
    land_radius: f64,
}

enum FormKind {
    /// v_x(y) = dist(x, y).
    Dist,
    /// omega_x(y) = int_0^that base_x(phi_s y) ds - int_0^that base_x(phi_s x) ds.
    Whitney {
        base: OneForm,
        t_hat: f64,
        self_cache: Mutex<HashMap<[i64; 3], f64>>,
    },
    /// omega_x(y) = the unique admissible t with phi_{-t}(y) in ker(scalar)_x.
    Time { scalar: OneForm, params: TimeParams },
    /// omega^T_x(y) = omega_y(x).
    Transpose { inner: OneForm },
    /// lhs - lhs^T evaluated as lhs(x, y) - lhs(y, x).
    AntiSym { lhs: OneForm },
}

/// A topological 1-form: a scalar pairing omega_x(y) tied to a flow, with a
/// derivative evaluator and a declared domain field. Cheap to clone; all
/// evaluation is pure (the Whitney self-integral is memoized internally).
#[derive(Clone)]
pub struct OneForm {
    flow: FlowDescriptor,
    kind: Arc<FormKind>,
    domain: Arc<FieldOfCompactSets>,
    deriv: DerivSpec,
    pub panels: usize,
    pub fd_dt: f64,
}

impl std::fmt::Debug for OneForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match &*self.kind {
            FormKind::Dist => "dist",
            FormKind::Whitney { .. } => "whitney",
            FormKind::Time { .. } => "time",
            FormKind::Transpose { .. } => "transpose",
            FormKind::AntiSym { .. } => "antisym",
        };
        write!(f, "OneForm({name})")
    }
}

/// The base pairing v_x(y) = dist(x, y) on the whole space.
pub fn dist_form(flow: &FlowDescriptor) -> OneForm {
    let space = flow.space().clone();
    let resolution = space.diameter() / 64.0;
    OneForm {
        flow: flow.clone(),
        kind: Arc::new(FormKind::Dist),
        domain: Arc::new(FieldOfCompactSets::total(space, resolution)),
        deriv: DerivSpec::FiniteDifference,
        panels: 8,
        fd_dt: 1e-4 / flow.max_speed().max(1e-9),
    }
}

/// Integrated form with analytic derivative
/// base(x, evolve(y, t_hat)) - base(x, y). With the default distance base
/// this is the construction that turns a regularity certificate into a
/// cross-section kernel.
pub fn whitney_form(flow: &FlowDescriptor, base: Option<OneForm>, t_hat: f64) -> Result<OneForm> {
    if !(t_hat > 0.0) {
        return Err(Error::Precondition("whitney form needs a positive time".into()));
    }
    let base = base.unwrap_or_else(|| dist_form(flow));
    let domain = base.domain.clone();
    Ok(OneForm {
        flow: flow.clone(),
        kind: Arc::new(FormKind::Whitney {
            base,
            t_hat,
            self_cache: Mutex::new(HashMap::new()),
        }),
        domain,
        deriv: DerivSpec::WhitneyAnalytic,
        panels: 8,
        fd_dt: 1e-4 / flow.max_speed().max(1e-9),
    })
}

/// Central-difference flow derivative of a form; the oracle the analytic
/// derivatives are checked against.
pub fn form_derivative(
    flow: &FlowDescriptor,
    form: &OneForm,
    x: &Point,
    y: &Point,
    dt: f64,
) -> Result<f64> {
    let fwd = form.value(x, &flow.evolve(y, dt)?)?;
    let bwd = form.value(x, &flow.evolve(y, -dt)?)?;
    Ok((fwd - bwd) / (2.0 * dt))
}

/// Transpose form omega^T_x(y) = omega_y(x). Transposing twice returns the
/// original form.
pub fn transpose_form(form: &OneForm) -> OneForm {
    if let FormKind::Transpose { inner } = &*form.kind {
        return inner.clone();
    }
    OneForm {
        flow: form.flow.clone(),
        kind: Arc::new(FormKind::Transpose { inner: form.clone() }),
        domain: form.domain.clone(),
        deriv: DerivSpec::FiniteDifference,
        panels: form.panels,
        fd_dt: form.fd_dt,
    }
}

/// The monotonizing form built from a unit-derivative form:
/// v_x(y) = int_0^that omega^T_x(phi_s y) ds - int_0^that omega^T_x(phi_s x) ds.
/// The subtracted self-integral centers the form so v_x(x) = 0 exactly.
pub fn monotonizing_form(flow: &FlowDescriptor, omega: &OneForm, t_hat: f64) -> Result<OneForm> {
    // The construction needs unit derivative; probe it on the diagonal.
    let probe = flow.space().canonicalize(&crate::space::net(flow.space(), flow.space().diameter() / 2.0)?.points()[0])?;
    let d = form_derivative(flow, omega, &probe, &probe, omega.fd_dt)?;
    if (d - 1.0).abs() > 1e-6 {
        return Err(Error::Precondition(format!(
            "monotonizing form needs unit derivative, probe gave {d}"
        )));
    }
    let mut v = whitney_form(flow, Some(transpose_form(omega)), t_hat)?;
    v.panels = 4;
    Ok(v)
}

/// Antisymmetrization omega = v - v^T, evaluated so that
/// omega(x, y) + omega(y, x) is exactly zero in floating point.
pub fn antisymmetrize(v: &OneForm) -> OneForm {
    OneForm {
        flow: v.flow.clone(),
        kind: Arc::new(FormKind::AntiSym { lhs: v.clone() }),
        domain: v.domain.clone(),
        deriv: DerivSpec::Split,
        panels: v.panels,
        fd_dt: v.fd_dt,
    }
}

impl OneForm {
    pub fn flow(&self) -> &FlowDescriptor {
        &self.flow
    }

    pub fn domain_field(&self) -> &FieldOfCompactSets {
        &self.domain
    }

    pub fn with_derivative_spec(mut self, deriv: DerivSpec) -> OneForm {
        self.deriv = deriv;
        self
    }

    pub fn with_panels(mut self, panels: usize) -> OneForm {
        self.panels = panels;
        self
    }

    /// Builds the time form over a section kernel: the value at (x, y) is
    /// the unique t in the window with phi_{-t}(y) on the kernel of
    /// `scalar` at x, landing within `land_radius` of x.
    pub fn time_from_scalar(
        flow: &FlowDescriptor,
        scalar: OneForm,
        window: f64,
        scan_step: f64,
        land_radius: f64,
    ) -> OneForm {
        let domain = scalar.domain.clone();
        OneForm {
            flow: flow.clone(),
            kind: Arc::new(FormKind::Time {
                scalar,
                params: TimeParams { window, scan_step, land_radius },
            }),
            domain,
            deriv: DerivSpec::ConstUnit,
            panels: 8,
            fd_dt: 1e-4 / flow.max_speed().max(1e-9),
        }
    }

    pub fn time_window(&self) -> Option<f64> {
        match &*self.kind {
            FormKind::Time { params, .. } => Some(params.window),
            _ => None,
        }
    }

    /// omega_x(y).
    pub fn value(&self, x: &Point, y: &Point) -> Result<f64> {
        let space = self.flow.space();
        let x = space.canonicalize(x)?;
        let y = space.canonicalize(y)?;
        match &*self.kind {
            FormKind::Dist => space.dist(&x, &y),
            FormKind::Whitney { base, t_hat, self_cache } => {
                let iy = whitney_integral(&self.flow, base, &x, &y, 0.0, *t_hat, self.panels)?;
                let ix = {
                    let key = x.key();
                    let cached = self_cache.lock().unwrap().get(&key).copied();
                    match cached {
                        Some(v) => v,
                        None => {
                            let v = whitney_integral(
                                &self.flow, base, &x, &x, 0.0, *t_hat, self.panels,
                            )?;
                            self_cache.lock().unwrap().insert(key, v);
                            v
                        }
                    }
                };
                Ok(iy - ix)
            }
            FormKind::Time { scalar, params } => {
                time_root(&self.flow, scalar, params, &x, &y, None)
            }
            FormKind::Transpose { inner } => inner.value(&y, &x),
            FormKind::AntiSym { lhs } => Ok(lhs.value(&x, &y)? - lhs.value(&y, &x)?),
        }
    }

    /// Time-form evaluation with a root hint (continuation along a known
    /// branch); other kinds ignore the hint.
    pub fn value_with_hint(&self, x: &Point, y: &Point, hint: Option<f64>) -> Result<f64> {
        match &*self.kind {
            FormKind::Time { scalar, params } => {
                let space = self.flow.space();
                let x = space.canonicalize(x)?;
                let y = space.canonicalize(y)?;
                time_root(&self.flow, scalar, params, &x, &y, hint)
            }
            _ => self.value(x, y),
        }
    }

    /// Flow derivative of the form at (x, y).
    pub fn derivative(&self, x: &Point, y: &Point) -> Result<f64> {
        match self.deriv {
            DerivSpec::FiniteDifference => form_derivative(&self.flow, self, x, y, self.fd_dt),
            DerivSpec::WhitneyAnalytic => match &*self.kind {
                FormKind::Whitney { base, t_hat, .. } => {
                    let ahead = self.flow.evolve(y, *t_hat)?;
                    Ok(base.value(x, &ahead)? - base.value(x, y)?)
                }
                _ => form_derivative(&self.flow, self, x, y, self.fd_dt),
            },
            DerivSpec::ConstUnit => Ok(1.0),
            DerivSpec::Const(c) => Ok(c),
            DerivSpec::Split => match &*self.kind {
                FormKind::AntiSym { lhs } => {
                    let dl = lhs.derivative(x, y)?;
                    let dr = transpose_form(lhs).derivative(x, y)?;
                    Ok(dl - dr)
                }
                _ => form_derivative(&self.flow, self, x, y, self.fd_dt),
            },
        }
    }

    /// Evaluator of w -> omega_x(evolve(y, w)) with per-pair precomputation.
    pub fn along_orbit(&self, x: &Point, y: &Point, lo: f64, hi: f64) -> Result<FormAlongOrbit> {
        let space = self.flow.space();
        let x = space.canonicalize(x)?;
        let y = space.canonicalize(y)?;
        match &*self.kind {
            FormKind::Whitney { base, t_hat, self_cache } => {
                if matches!(&*base.kind, FormKind::Dist) {
                    let profile = OrbitProfile::new(&self.flow, &x, &y, lo, hi + *t_hat)?;
                    let self_int = {
                        let key = x.key();
                        let cached = self_cache.lock().unwrap().get(&key).copied();
                        match cached {
                            Some(v) => v,
                            None => {
                                let v = whitney_integral(
                                    &self.flow, base, &x, &x, 0.0, *t_hat, self.panels,
                                )?;
                                self_cache.lock().unwrap().insert(key, v);
                                v
                            }
                        }
                    };
                    return Ok(FormAlongOrbit::WhitneyDist {
                        profile,
                        t_hat: *t_hat,
                        self_int,
                        panels: self.panels,
                    });
                }
                Ok(FormAlongOrbit::Generic { form: self.clone(), x, y })
            }
            _ => Ok(FormAlongOrbit::Generic { form: self.clone(), x, y }),
        }
    }
}

/// int_shift^{shift+t_hat} base_x(phi_s(y)) ds with kink-aware Simpson.
fn whitney_integral(
    flow: &FlowDescriptor,
    base: &OneForm,
    x: &Point,
    y: &Point,
    shift: f64,
    t_hat: f64,
    panels: usize,
) -> Result<f64> {
    let lo = shift;
    let hi = shift + t_hat;
    if matches!(&*base.kind, FormKind::Dist) {
        let profile = OrbitProfile::new(flow, x, y, lo, hi)?;
        let mut cuts = Vec::new();
        profile.breakpoints(lo, hi, &mut cuts);
        let mut f = |s: f64| Ok(profile.eval(s));
        return simpson_adaptive(&mut f, lo, hi, panels, QUAD_TOL, &cuts);
    }
    // Transposed time forms are the expensive inner loop of the
    // monotonizing construction; thread root hints through the nodes so
    // each quadrature node costs a couple of scalar root iterations.
    if let FormKind::Transpose { inner } = &*base.kind {
        if matches!(&*inner.kind, FormKind::Time { .. }) {
            let solved: RefCell<Vec<(f64, f64)>> = RefCell::new(Vec::new());
            let mut f = |s: f64| -> Result<f64> {
                let node = flow.evolve(y, s)?;
                let hint = {
                    let sv = solved.borrow();
                    sv.iter()
                        .min_by(|a, b| {
                            (a.0 - s).abs().partial_cmp(&(b.0 - s).abs()).unwrap()
                        })
                        .map(|&(s0, r0)| r0 - (s - s0))
                };
                let root = inner.value_with_hint(&node, x, hint)?;
                solved.borrow_mut().push((s, root));
                Ok(root)
            };
            return simpson_adaptive(&mut f, lo, hi, panels, QUAD_TOL.max(1e-8), &[]);
        }
    }
    let mut f = |s: f64| base.value(x, &flow.evolve(y, s)?);
    simpson_adaptive(&mut f, lo, hi, panels, QUAD_TOL, &[])
}

/// Finds the admissible root of t -> scalar_x(phi_{-t}(y)).
///
/// The scalar is monotone along the flow near its kernel, so every
/// crossing is simple; candidates are screened by the landing check
/// dist(x, phi_{-t}(y)) <= land_radius, which rejects the spurious kernel
/// sheet the integrated form carries one period behind the base point.
fn time_root(
    flow: &FlowDescriptor,
    scalar: &OneForm,
    params: &TimeParams,
    x: &Point,
    y: &Point,
    hint: Option<f64>,
) -> Result<f64> {
    let along = scalar.along_orbit(x, y, -params.window, params.window)?;
    let g = |t: f64| -> Result<f64> { along.eval(-t) };
    let space = flow.space();

    let accept = |t: f64| -> Result<Option<f64>> {
        let landed = flow.evolve(y, -t)?;
        if space.dist(x, &landed)? <= params.land_radius {
            Ok(Some(t))
        } else {
            Ok(None)
        }
    };

    if let Some(h) = hint {
        let lo = (h - params.scan_step).max(-params.window);
        let hi = (h + params.scan_step).min(params.window);
        if lo < hi {
            let (glo, ghi) = (g(lo)?, g(hi)?);
            if glo == 0.0 {
                if let Some(t) = accept(lo)? {
                    return Ok(t);
                }
            }
            if ghi == 0.0 {
                if let Some(t) = accept(hi)? {
                    return Ok(t);
                }
            }
            if glo.signum() != ghi.signum() {
                let mut f = |t: f64| g(t);
                let root = bracket_root(&mut f, lo, hi, ROOT_TOL, ROOT_MAX_ITER)?;
                if let Some(t) = accept(root)? {
                    return Ok(t);
                }
            }
        }
    }

    // Full scan of the window for sign changes, nearest-to-zero first.
    let n = (2.0 * params.window / params.scan_step).ceil().max(2.0) as usize;
    let mut ts = Vec::with_capacity(n + 1);
    let mut vals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = -params.window + 2.0 * params.window * i as f64 / n as f64;
        ts.push(t);
        vals.push(g(t)?);
    }
    let mut brackets: Vec<usize> = (0..n)
        .filter(|&i| vals[i] == 0.0 || vals[i].signum() != vals[i + 1].signum())
        .collect();
    brackets.sort_by(|&i, &j| {
        let ci = 0.5 * (ts[i] + ts[i + 1]).abs();
        let cj = 0.5 * (ts[j] + ts[j + 1]).abs();
        ci.partial_cmp(&cj).unwrap()
    });
    for i in brackets {
        let root = if vals[i] == 0.0 {
            ts[i]
        } else {
            let mut f = |t: f64| g(t);
            match bracket_root(&mut f, ts[i], ts[i + 1], ROOT_TOL, ROOT_MAX_ITER) {
                Ok(r) => r,
                Err(_) => continue,
            }
        };
        if let Some(t) = accept(root)? {
            return Ok(t);
        }
    }
    Err(Error::DomainEscape { base: *x, arg: *y, time: params.window })
}

/// Evaluator of w -> omega_x(evolve(y, w)) for a fixed pair.
pub enum FormAlongOrbit {
    WhitneyDist { profile: OrbitProfile, t_hat: f64, self_int: f64, panels: usize },
    Generic { form: OneForm, x: Point, y: Point },
}

impl FormAlongOrbit {
    pub fn eval(&self, w: f64) -> Result<f64> {
        match self {
            FormAlongOrbit::WhitneyDist { profile, t_hat, self_int, panels } => {
                let lo = w;
                let hi = w + t_hat;
                let mut cuts = Vec::new();
                profile.breakpoints(lo, hi, &mut cuts);
                let mut f = |s: f64| Ok(profile.eval(s));
                let iy = simpson_adaptive(&mut f, lo, hi, *panels, QUAD_TOL, &cuts)?;
                Ok(iy - self_int)
            }
            FormAlongOrbit::Generic { form, x, y } => {
                let moved = form.flow.evolve(y, w)?;
                form.value(x, &moved)
            }
        }
    }
}

/// Scans a ball around each domain point for the smallest analytic
/// derivative of the form; used to certify the derivative floor that
/// kernel root finding relies on. Probes outside the form's domain are
/// skipped; the returned fraction reports how much of the ball was
/// actually reachable.
pub fn derivative_floor(
    form: &OneForm,
    domain: &[Point],
    radius: f64,
    probes_per_point: usize,
) -> Result<(f64, f64)> {
    let flow = &form.flow;
    let space = flow.space();
    let mut floor = f64::INFINITY;
    let mut total = 0usize;
    let mut reached = 0usize;
    for x in domain {
        let b = crate::space::ball(space, x, radius, radius / (probes_per_point as f64).max(2.0))?;
        for y in b.points() {
            total += 1;
            match form.derivative(x, y) {
                Ok(d) => {
                    reached += 1;
                    if d.abs() < floor {
                        floor = d.abs();
                    }
                }
                Err(Error::DomainEscape { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if reached == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((floor, reached as f64 / total as f64))
}
