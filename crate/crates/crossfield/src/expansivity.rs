//! Expansivity diagnostics built on the sectional flow: the stable/
//! unstable intersection criterion, positive expansivity, and the
//! consistency demonstration relating stable points, expansivity and the
//! topology of the space.

use std::fmt;

use crate::dynamics::{sectional_flow, stable_point_check, stable_set, StableSetSample};
use crate::error::Result;
use crate::flow::FlowDescriptor;
use crate::sections::{section_slice, SectionField};
use crate::space::{CompactSample, Point, SpaceTag};

/// Outcome of an expansivity scan at a horizon.
#[derive(Clone, Debug)]
pub enum ExpansivityVerdict {
    /// Every sampled stable/unstable intersection collapses to the base
    /// point at this delta.
    ExpansiveAtHorizon(f64),
    /// A concrete companion that stays in both the forward and the
    /// backward sections without being the base point.
    NotExpansive { witness_base: Point, witness: Point },
    Inconclusive,
}

/// Per-delta worst intersection data plus the verdict.
#[derive(Clone, Debug)]
pub struct ExpansivityReport {
    pub horizon: f64,
    pub resolution: f64,
    /// (delta, worst intersection diameter over the sampled domain)
    pub per_delta: Vec<(f64, f64)>,
    pub verdict: ExpansivityVerdict,
}

impl fmt::Display for ExpansivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "expansivity scan at horizon {}", self.horizon)?;
        for (d, w) in &self.per_delta {
            writeln!(f, "  delta={d}: worst intersection diameter {w:.4}")?;
        }
        match &self.verdict {
            ExpansivityVerdict::ExpansiveAtHorizon(d) => {
                write!(f, "  verdict: expansive at horizon (delta = {d})")
            }
            ExpansivityVerdict::NotExpansive { witness_base, witness } => write!(
                f,
                "  verdict: not expansive (witness {:?} near base {:?})",
                witness.coords(),
                witness_base.coords()
            ),
            ExpansivityVerdict::Inconclusive => write!(f, "  verdict: inconclusive"),
        }
    }
}

/// Members of the forward stable set that belong to the backward one:
/// proximity at twice the resolution screens the candidates, and
/// backward tracking to the horizon confirms actual membership (two
/// transverse segments are mutually close near their crossing without
/// sharing points).
fn intersect_sets(
    flow: &FlowDescriptor,
    section: &SectionField,
    base: &Point,
    ws: &StableSetSample,
    wu: &StableSetSample,
    delta: f64,
    horizon: f64,
    tol: f64,
) -> Result<Vec<Point>> {
    let space = flow.space();
    let inverse = flow.inverse();
    let tracking = section_slice(section, delta);
    let dt = section.tau / 3.0;
    let mut out = Vec::new();
    for p in ws.members.points() {
        if !wu.members.contains(space, p, tol)? {
            continue;
        }
        // the base point is in both sets by definition; everything else
        // must earn its membership by tracking backward
        if space.dist(p, base)? <= section.resolution / 2.0 {
            out.push(*p);
            continue;
        }
        let back = sectional_flow(&inverse, &tracking, base, p, horizon, dt)?;
        if back.tracked() {
            out.push(*p);
        }
    }
    Ok(out)
}

/// Scans the delta grid: for each sampled base point the stable set of the
/// flow is intersected with the stable set of the inverse flow (the
/// unstable set). Expansive at horizon when every intersection stays at
/// the base point; a surviving far companion is returned as a replayable
/// witness.
pub fn expansive_scan(
    flow: &FlowDescriptor,
    section: &SectionField,
    domain: &CompactSample,
    delta_grid: &[f64],
    horizon: f64,
) -> Result<ExpansivityReport> {
    let space = flow.space();
    let res = section.resolution;
    let inverse = flow.inverse();
    let mut per_delta = Vec::new();
    let mut witness: Option<(Point, Point)> = None;
    let mut best_expansive: Option<f64> = None;
    let mut grid: Vec<f64> = delta_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &delta in &grid {
        let mut worst = 0.0f64;
        for x in domain.points() {
            let ws = stable_set(flow, section, x, delta, horizon, res)?;
            let wu = stable_set(&inverse, section, x, delta, horizon, res)?;
            let inter = intersect_sets(flow, section, x, &ws, &wu, delta, horizon, 2.0 * res)?;
            let mut diam = 0.0f64;
            for i in 0..inter.len() {
                for j in (i + 1)..inter.len() {
                    diam = diam.max(space.dist(&inter[i], &inter[j])?);
                }
            }
            if diam > worst {
                worst = diam;
            }
            if diam > 2.0 * res && witness.is_none() {
                // pick the farthest intersection member as the witness
                let far = inter
                    .iter()
                    .max_by(|p, q| {
                        let dp = space.dist(p, x).unwrap_or(0.0);
                        let dq = space.dist(q, x).unwrap_or(0.0);
                        dp.partial_cmp(&dq).unwrap()
                    })
                    .copied();
                if let Some(w) = far {
                    if space.dist(&w, x)? > 2.0 * res {
                        witness = Some((*x, w));
                    }
                }
            }
        }
        per_delta.push((delta, worst));
        if worst <= 2.0 * res {
            best_expansive = Some(delta);
        }
    }
    let verdict = if let Some((witness_base, w)) = witness {
        ExpansivityVerdict::NotExpansive { witness_base, witness: w }
    } else if let Some(d) = best_expansive {
        ExpansivityVerdict::ExpansiveAtHorizon(d)
    } else {
        ExpansivityVerdict::Inconclusive
    };
    Ok(ExpansivityReport { horizon, resolution: res, per_delta, verdict })
}

/// Replays a witness through the sectional flow in both time directions;
/// valid when both directions track to the horizon.
pub fn replay_witness(
    flow: &FlowDescriptor,
    section: &SectionField,
    base: &Point,
    witness: &Point,
    delta: f64,
    horizon: f64,
) -> Result<bool> {
    let tracking = section_slice(section, delta);
    let dt = section.tau / 3.0;
    let fwd = sectional_flow(flow, &tracking, base, witness, horizon, dt)?;
    let bwd = sectional_flow(&flow.inverse(), &tracking, base, witness, horizon, dt)?;
    Ok(fwd.tracked() && bwd.tracked())
}

/// Positive-expansivity check: the forward stable sets must be trivial.
#[derive(Clone, Debug)]
pub struct PositiveExpansivityReport {
    pub delta: f64,
    pub horizon: f64,
    pub worst_diameter: f64,
    pub positive_expansive_at_horizon: bool,
    /// The topological criterion: this holds exactly on circle spaces.
    pub space_is_circle: bool,
    pub consistent_with_topology: bool,
}

pub fn positive_expansive_check(
    flow: &FlowDescriptor,
    section: &SectionField,
    domain: &CompactSample,
    delta: f64,
    horizon: f64,
) -> Result<PositiveExpansivityReport> {
    let res = section.resolution;
    let mut worst = 0.0f64;
    for x in domain.points() {
        let ws = stable_set(flow, section, x, delta, horizon, res)?;
        let diam = ws.members.diameter(flow.space())?;
        if diam > worst {
            worst = diam;
        }
    }
    let positive = worst <= 2.0 * res;
    let is_circle = flow.space().tag() == SpaceTag::Circle;
    Ok(PositiveExpansivityReport {
        delta,
        horizon,
        worst_diameter: worst,
        positive_expansive_at_horizon: positive,
        space_is_circle: is_circle,
        consistent_with_topology: positive == is_circle,
    })
}

/// Narrative consistency report: stable points and expansivity cannot
/// coexist on a space with planar local structure (the circle being the
/// trivial exemption).
#[derive(Clone, Debug)]
pub struct ObstructionReport {
    pub space: SpaceTag,
    pub any_stable_point: bool,
    pub expansive_at_horizon: bool,
    pub planar_sections: bool,
    pub consistent: bool,
    pub lines: Vec<String>,
}

impl fmt::Display for ObstructionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

pub fn planar_obstruction_demo(
    flow: &FlowDescriptor,
    section: &SectionField,
    domain: &CompactSample,
    eps: f64,
    horizon: f64,
) -> Result<ObstructionReport> {
    let space_tag = flow.space().tag();
    let res = section.resolution;
    // stable points over the sampled domain
    let grid = [eps / 4.0, eps / 2.0];
    let mut any_stable = false;
    for x in domain.points() {
        let rep = stable_point_check(flow, section, x, eps, &grid, horizon)?;
        if rep.stable {
            any_stable = true;
            break;
        }
    }
    let scan = expansive_scan(flow, section, domain, &[eps / 2.0], horizon)?;
    let expansive = matches!(scan.verdict, ExpansivityVerdict::ExpansiveAtHorizon(_));
    // two-dimensional spaces carry arc-like sections; the suspension is
    // three-dimensional, the circle has point sections
    let planar = space_tag == SpaceTag::Torus;
    let trivial_continuum = space_tag == SpaceTag::Circle;
    let consistent = if trivial_continuum {
        true // the circle may be both stable and expansive
    } else if planar {
        !(expansive && any_stable) && !expansive
    } else {
        !(expansive && any_stable)
    };
    let mut lines = Vec::new();
    lines.push(format!("space: {space_tag}, horizon {horizon}, eps {eps}, resolution {res}"));
    lines.push(format!(
        "stable points found: {any_stable}; expansive at horizon: {expansive}"
    ));
    if planar {
        lines.push(
            "arc-like sections on a surface force interior stable points, so an expansive \
             verdict cannot coexist with them"
                .into(),
        );
    }
    if trivial_continuum {
        lines.push("circle spaces may combine stability with expansivity".into());
    }
    lines.push(format!("verdicts consistent: {consistent}"));
    Ok(ObstructionReport {
        space: space_tag,
        any_stable_point: any_stable,
        expansive_at_horizon: expansive,
        planar_sections: planar,
        consistent,
        lines,
    })
}
