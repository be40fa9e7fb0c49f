//! Plain key-value configuration: `section.key = value` lines with `#`
//! comments. Space and flow descriptors round-trip through this format;
//! the scenario runner layers its parameters on top.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowDescriptor, VectorField};
use crate::space::{MetricSpace, SpaceKind};

/// Parsed key-value file with typed getters.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<KeyValues> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `section.key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() || !key.contains('.') {
                return Err(Error::Config(format!(
                    "line {}: keys take the form `section.key`",
                    lineno + 1
                )));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(KeyValues { entries })
    }

    pub fn read_file(path: &Path) -> Result<KeyValues> {
        let text = std::fs::read_to_string(path)?;
        KeyValues::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        v.parse().map_err(|e| Error::Config(format!("key `{key}`: {e}")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|e| Error::Config(format!("key `{key}`: {e}"))),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|e| Error::Config(format!("key `{key}`: {e}"))),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|e| Error::Config(format!("key `{key}`: {e}"))),
            None => Ok(default),
        }
    }

    pub fn bool_opt(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(v) => Err(Error::Config(format!("key `{key}`: expected true/false, got `{v}`"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.require(key)?;
        v.split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::Config(format!("key `{key}`: {e}"))))
            .collect()
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            Some(_) => self.f64_list(key),
            None => Ok(default.to_vec()),
        }
    }

    pub fn str_list_or(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.get(key) {
            Some(v) => v.split_whitespace().map(|s| s.to_string()).collect(),
            None => default.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Canonical text form: sorted keys, one per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Builds a metric space from `space.*` keys.
pub fn space_from_config(kv: &KeyValues) -> Result<MetricSpace> {
    match kv.require("space.kind")? {
        "circle" => MetricSpace::circle(kv.f64_or("space.circumference", 1.0)?),
        "flat-torus" => {
            let p = kv.f64_list_or("space.periods", &[1.0, 1.0])?;
            if p.len() != 2 {
                return Err(Error::Config("space.periods needs two values".into()));
            }
            MetricSpace::flat_torus(p[0], p[1])
        }
        "cat-suspension" => {
            let m = kv
                .f64_list_or("space.matrix", &[2.0, 1.0, 1.0, 1.0])?
                .iter()
                .map(|v| *v as i64)
                .collect::<Vec<_>>();
            if m.len() != 4 {
                return Err(Error::Config("space.matrix needs four integers".into()));
            }
            MetricSpace::cat_suspension([[m[0], m[1]], [m[2], m[3]]])
        }
        "graph" => {
            let n = kv.usize_or("space.vertices", 0)?;
            let flat = kv.f64_list("space.edges")?;
            if flat.len() % 3 != 0 {
                return Err(Error::Config(
                    "space.edges is a flat list of (from to length) triples".into(),
                ));
            }
            let edges = flat
                .chunks(3)
                .map(|c| (c[0] as usize, c[1] as usize, c[2]))
                .collect();
            MetricSpace::graph(n, edges)
        }
        other => Err(Error::Config(format!("unknown space.kind `{other}`"))),
    }
}

/// Builds a flow from `flow.*` keys over the given space.
pub fn flow_from_config(kv: &KeyValues, space: MetricSpace) -> Result<FlowDescriptor> {
    match kv.require("flow.kind")? {
        "rotation" => FlowDescriptor::circle_rotation(space, kv.f64_or("flow.speed", 1.0)?),
        "linear" => {
            let d = kv.f64_list("flow.direction")?;
            if d.len() != 2 {
                return Err(Error::Config("flow.direction needs two values".into()));
            }
            FlowDescriptor::torus_linear(space, [d[0], d[1]])
        }
        "suspension" => FlowDescriptor::cat_suspension(space),
        "ode" => {
            let step = kv.f64_or("flow.step", 0.01)?;
            let field = match kv.require("flow.field")? {
                "circle-uniform" => {
                    VectorField::CircleUniform { speed: kv.f64_or("flow.speed", 1.0)? }
                }
                "torus-constant" => {
                    let v = kv.f64_list("flow.velocity")?;
                    if v.len() != 2 {
                        return Err(Error::Config("flow.velocity needs two values".into()));
                    }
                    VectorField::TorusConstant { velocity: [v[0], v[1]] }
                }
                "torus-shear" => {
                    let v = kv.f64_list("flow.velocity")?;
                    if v.len() != 2 {
                        return Err(Error::Config("flow.velocity needs two values".into()));
                    }
                    VectorField::TorusShear {
                        base: [v[0], v[1]],
                        wobble: kv.f64_or("flow.wobble", 0.0)?,
                    }
                }
                other => return Err(Error::Config(format!("unknown flow.field `{other}`"))),
            };
            FlowDescriptor::ode(space, field, step)
        }
        other => Err(Error::Config(format!("unknown flow.kind `{other}`"))),
    }
}

/// Serializes a space back to config lines.
pub fn space_to_config(space: &MetricSpace, kv: &mut KeyValues) {
    match space.kind() {
        SpaceKind::Circle { circumference } => {
            kv.set("space.kind", "circle");
            kv.set("space.circumference", circumference);
        }
        SpaceKind::FlatTorus2 { periods } => {
            kv.set("space.kind", "flat-torus");
            kv.set("space.periods", format!("{} {}", periods[0], periods[1]));
        }
        SpaceKind::CatSuspension(g) => {
            kv.set("space.kind", "cat-suspension");
            kv.set(
                "space.matrix",
                format!("{} {} {} {}", g.matrix[0][0], g.matrix[0][1], g.matrix[1][0], g.matrix[1][1]),
            );
        }
        SpaceKind::GraphMetric(g) => {
            kv.set("space.kind", "graph");
            kv.set("space.vertices", g.vertex_count);
            let flat: Vec<String> = g
                .edges
                .iter()
                .map(|(u, v, l)| format!("{u} {v} {l}"))
                .collect();
            kv.set("space.edges", flat.join(" "));
        }
    }
}

/// Validated scenario parameters for the runner.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub kv: KeyValues,
    pub space: MetricSpace,
    pub flow: FlowDescriptor,
    pub t_grid: Vec<f64>,
    pub resolution: f64,
    pub cert_points: usize,
    pub tracking_resolution: f64,
    pub tracking_field: String,
    pub domain_points: usize,
    pub seed: u64,
    pub diagnostics: Vec<String>,
    pub horizon_stable: f64,
    pub horizon_expansive: f64,
    pub horizon_decay: f64,
    pub delta_grid: Vec<f64>,
    pub decay_grid: Vec<f64>,
    pub expect_positive_expansive: Option<bool>,
    pub expect_expansive: Option<bool>,
    pub expect_stable_points: Option<bool>,
}

impl ScenarioConfig {
    pub fn from_kv(kv: KeyValues) -> Result<ScenarioConfig> {
        let space = space_from_config(&kv)?;
        let flow = flow_from_config(&kv, space.clone())?;
        let t_grid = kv.f64_list_or("pipeline.t-grid", &[0.25])?;
        if t_grid.is_empty() || t_grid.iter().any(|t| *t <= 0.0) {
            return Err(Error::Config("pipeline.t-grid must be non-empty and positive".into()));
        }
        let resolution = kv.f64_or("pipeline.resolution", 0.02)?;
        if resolution <= 0.0 {
            return Err(Error::Config("pipeline.resolution must be positive".into()));
        }
        let delta_grid = kv.f64_list_or("grids.delta", &[resolution * 2.0, resolution * 4.0])?;
        if delta_grid.is_empty() || delta_grid.iter().any(|d| *d <= 0.0) {
            return Err(Error::Config("grids.delta must be non-empty and positive".into()));
        }
        let decay_grid =
            kv.f64_list_or("grids.decay-t", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?;
        if decay_grid.is_empty() || decay_grid.iter().any(|d| *d <= 0.0) {
            return Err(Error::Config("grids.decay-t must be non-empty and positive".into()));
        }
        let cfg = ScenarioConfig {
            space,
            flow,
            t_grid,
            resolution,
            cert_points: kv.usize_or("pipeline.cert-points", 8)?,
            tracking_resolution: kv.f64_or("tracking.resolution", resolution)?,
            tracking_field: kv.get("tracking.field").unwrap_or("whitney").to_string(),
            domain_points: kv.usize_or("run.domain-points", 4)?,
            seed: kv.u64_or("run.seed", 42)?,
            diagnostics: kv.str_list_or("run.diagnostics", &["sections", "stables", "expansivity"]),
            horizon_stable: kv.f64_or("horizons.stable", 4.0)?,
            horizon_expansive: kv.f64_or("horizons.expansive", 6.0)?,
            horizon_decay: kv.f64_or("horizons.decay", 6.0)?,
            delta_grid,
            decay_grid,
            expect_positive_expansive: kv.bool_opt("expect.positive-expansive")?,
            expect_expansive: kv.bool_opt("expect.expansive")?,
            expect_stable_points: kv.bool_opt("expect.stable-points")?,
            kv,
        };
        if !["whitney", "pipeline"].contains(&cfg.tracking_field.as_str()) {
            return Err(Error::Config(format!(
                "tracking.field must be whitney or pipeline, got `{}`",
                cfg.tracking_field
            )));
        }
        Ok(cfg)
    }

    /// Canonical resolved form (sorted keys) for the output manifest.
    pub fn resolved(&self) -> KeyValues {
        let mut kv = self.kv.clone();
        space_to_config(&self.space, &mut kv);
        kv.set("pipeline.resolution", self.resolution);
        kv.set("pipeline.cert-points", self.cert_points);
        kv.set("run.seed", self.seed);
        kv.set("run.domain-points", self.domain_points);
        kv.set("tracking.field", &self.tracking_field);
        kv.set("tracking.resolution", self.tracking_resolution);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_getters() {
        let kv = KeyValues::parse(
            "# comment\nspace.kind = circle\nspace.circumference = 2.0\nrun.seed = 7\n",
        )
        .unwrap();
        assert_eq!(kv.get("space.kind"), Some("circle"));
        assert_eq!(kv.f64("space.circumference").unwrap(), 2.0);
        assert_eq!(kv.u64_or("run.seed", 0).unwrap(), 7);
        assert!(kv.f64("missing.key").is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("just a line\n").is_err());
        assert!(KeyValues::parse("nodot = 3\n").is_err());
    }

    #[test]
    fn space_round_trip() {
        for text in [
            "space.kind = circle\nspace.circumference = 1.5\n",
            "space.kind = flat-torus\nspace.periods = 1.0 2.0\n",
            "space.kind = cat-suspension\nspace.matrix = 2 1 1 1\n",
        ] {
            let kv = KeyValues::parse(text).unwrap();
            let space = space_from_config(&kv).unwrap();
            let mut out = KeyValues::default();
            space_to_config(&space, &mut out);
            let again = space_from_config(&out).unwrap();
            assert_eq!(space.tag(), again.tag());
            assert!((space.diameter() - again.diameter()).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_defaults_and_validation() {
        let kv = KeyValues::parse(
            "space.kind = circle\nflow.kind = rotation\nflow.speed = 1.0\n",
        )
        .unwrap();
        let cfg = ScenarioConfig::from_kv(kv).unwrap();
        assert_eq!(cfg.t_grid, vec![0.25]);
        assert_eq!(cfg.seed, 42);

        let bad = KeyValues::parse(
            "space.kind = circle\nflow.kind = rotation\npipeline.t-grid = -1\n",
        )
        .unwrap();
        assert!(ScenarioConfig::from_kv(bad).is_err());
    }
}
