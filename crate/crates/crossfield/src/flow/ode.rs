//! Named vector fields and the fixed-step classical 4th-order integrator
//! used by generic ODE flows.

use crate::space::{MetricSpace, Point};

/// Built-in vector fields for ODE-driven flows. Fields are evaluated in
/// chart coordinates and must be periodic with respect to the chart
/// identifications.
#[derive(Clone, Debug)]
pub enum VectorField {
    /// Constant angular speed on a circle.
    CircleUniform { speed: f64 },
    /// Constant translation on the flat torus.
    TorusConstant { velocity: [f64; 2] },
    /// Translation whose first component wobbles with the second
    /// coordinate; regular whenever |wobble| < |base_1|.
    TorusShear { base: [f64; 2], wobble: f64 },
}

impl VectorField {
    pub fn eval(&self, _space: &MetricSpace, coords: &[f64; 3]) -> [f64; 3] {
        match self {
            VectorField::CircleUniform { speed } => [*speed, 0.0, 0.0],
            VectorField::TorusConstant { velocity } => [velocity[0], velocity[1], 0.0],
            VectorField::TorusShear { base, wobble } => {
                let w = wobble * (2.0 * std::f64::consts::PI * coords[1]).sin();
                [base[0] + w, base[1], 0.0]
            }
        }
    }

    pub fn max_speed_bound(&self) -> f64 {
        match self {
            VectorField::CircleUniform { speed } => speed.abs(),
            VectorField::TorusConstant { velocity } => velocity[0].hypot(velocity[1]),
            VectorField::TorusShear { base, wobble } => {
                (base[0].abs() + wobble.abs()).hypot(base[1])
            }
        }
    }
}

/// One classical RK4 step of size `h` in chart coordinates.
pub fn rk4_step(field: &VectorField, space: &MetricSpace, x: &Point, h: f64) -> Point {
    let eval_at = |coords: [f64; 3]| -> [f64; 3] {
        let p = Point { coords, tag: x.tag() };
        // Fields are chart-periodic, so evaluating on the canonical
        // representative is safe and keeps trig arguments small.
        let canon = space.canonicalize(&p).unwrap_or(p);
        field.eval(space, &canon.coords)
    };
    let c0 = x.coords;
    let k1 = eval_at(c0);
    let mid1 = [c0[0] + 0.5 * h * k1[0], c0[1] + 0.5 * h * k1[1], c0[2] + 0.5 * h * k1[2]];
    let k2 = eval_at(mid1);
    let mid2 = [c0[0] + 0.5 * h * k2[0], c0[1] + 0.5 * h * k2[1], c0[2] + 0.5 * h * k2[2]];
    let k3 = eval_at(mid2);
    let end = [c0[0] + h * k3[0], c0[1] + h * k3[1], c0[2] + h * k3[2]];
    let k4 = eval_at(end);
    let mut out = c0;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Point { coords: out, tag: x.tag() }
}

/// Integrates for time `t` (either sign) with fixed step `h` and a final
/// partial step.
pub fn rk4_flow(field: &VectorField, space: &MetricSpace, x: &Point, t: f64, h: f64) -> Point {
    let dir = t.signum();
    let total = t.abs();
    let n = (total / h).floor() as usize;
    let mut cur = *x;
    for _ in 0..n {
        cur = rk4_step(field, space, &cur, dir * h);
    }
    let rem = total - n as f64 * h;
    if rem > 0.0 {
        cur = rk4_step(field, space, &cur, dir * rem);
    }
    cur
}
