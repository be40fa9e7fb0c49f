//! Finite ε-net samples standing for compact subsets, and the Hausdorff
//! distance between them.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::space::{MetricSpace, Point, POINT_DEDUP};

/// A finite ε-net for a compact subset: every point of the intended set lies
/// within `resolution` of some listed point.
#[derive(Clone, Debug)]
pub struct CompactSample {
    points: Vec<Point>,
    resolution: f64,
}

impl CompactSample {
    /// Builds a sample, canonicalizing and deduplicating near-identical
    /// points (chart distance below 1e-12).
    pub fn new(space: &MetricSpace, points: Vec<Point>, resolution: f64) -> Result<CompactSample> {
        if points.is_empty() {
            return Err(Error::Domain("compact sample must be non-empty".into()));
        }
        if !(resolution > 0.0) {
            return Err(Error::Domain("sample resolution must be positive".into()));
        }
        let mut canon = Vec::with_capacity(points.len());
        for p in &points {
            canon.push(space.canonicalize(p)?);
        }
        let deduped = dedup_points(canon, POINT_DEDUP);
        Ok(CompactSample { points: deduped, resolution })
    }

    /// Wraps already-canonical points without re-validation; used for
    /// stride subsampling of existing samples.
    pub(crate) fn from_canonical(points: Vec<Point>, resolution: f64) -> CompactSample {
        CompactSample { points, resolution }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from a point to the sampled set.
    pub fn dist_to(&self, space: &MetricSpace, x: &Point) -> Result<f64> {
        let mut best = f64::INFINITY;
        for p in &self.points {
            let d = space.dist(x, p)?;
            if d < best {
                best = d;
            }
        }
        Ok(best)
    }

    /// Membership at the given tolerance.
    pub fn contains(&self, space: &MetricSpace, x: &Point, tol: f64) -> Result<bool> {
        for p in &self.points {
            if space.dist(x, p)? <= tol {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Max pairwise distance over the net.
    pub fn diameter(&self, space: &MetricSpace) -> Result<f64> {
        let mut best = 0.0f64;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                let d = space.dist(&self.points[i], &self.points[j])?;
                if d > best {
                    best = d;
                }
            }
        }
        Ok(best)
    }

    /// Greedy thinning to the requested resolution, keeping earlier points.
    pub fn thin(&self, space: &MetricSpace, resolution: f64) -> Result<CompactSample> {
        let mut kept: Vec<Point> = Vec::new();
        for p in &self.points {
            let mut close = false;
            for q in &kept {
                if space.dist(p, q)? < resolution {
                    close = true;
                    break;
                }
            }
            if !close {
                kept.push(*p);
            }
        }
        CompactSample::new(space, kept, resolution.max(self.resolution))
    }

    /// Writes one point per row, chart coordinates as comma-separated
    /// columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.points {
            let cols: Vec<String> = p.coords().iter().map(|c| format!("{c:.17}")).collect();
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a sample written by [`write_csv`]. Rows must carry as many
    /// columns as the space has chart coordinates.
    pub fn read_csv<R: std::io::Read>(
        space: &MetricSpace,
        r: R,
        resolution: f64,
    ) -> Result<CompactSample> {
        let dim = space.chart_dim();
        let mut pts = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("row {}: {e}", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            if cols.len() != dim {
                return Err(Error::Config(format!(
                    "row {}: expected {dim} columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let mut coords = [0.0; 3];
            coords[..dim].copy_from_slice(&cols);
            pts.push(Point { coords, tag: space.tag() });
        }
        CompactSample::new(space, pts, resolution)
    }

    pub fn read_csv_file(space: &MetricSpace, path: &Path, resolution: f64) -> Result<CompactSample> {
        let f = std::fs::File::open(path)?;
        CompactSample::read_csv(space, f, resolution)
    }
}

/// Quantized-key dedup: near-identical chart coordinates collapse to the
/// first representative.
fn dedup_points(points: Vec<Point>, tol: f64) -> Vec<Point> {
    let mut seen: HashMap<[i64; 3], ()> = HashMap::with_capacity(points.len());
    let mut out = Vec::with_capacity(points.len());
    let q = 1.0 / tol;
    for p in points {
        let key = [
            (p.coords[0] * q).round() as i64,
            (p.coords[1] * q).round() as i64,
            (p.coords[2] * q).round() as i64,
        ];
        if seen.insert(key, ()).is_none() {
            out.push(p);
        }
    }
    out
}

/// One-sided excess sup_{k in K} d(k, L); the scan short-circuits once a
/// partner below the running maximum is found, which cannot change the
/// result.
pub fn one_sided_excess(space: &MetricSpace, from: &CompactSample, to: &CompactSample) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in from.points() {
        let mut kmin = f64::INFINITY;
        for l in to.points() {
            let d = space.dist(k, l)?;
            if d < kmin {
                kmin = d;
                if kmin <= worst {
                    break;
                }
            }
        }
        if kmin > worst {
            worst = kmin;
        }
    }
    Ok(worst)
}

/// Hausdorff distance between two finite samples, exact on the nets.
pub fn hausdorff(space: &MetricSpace, k: &CompactSample, l: &CompactSample) -> Result<f64> {
    if k.is_empty() || l.is_empty() {
        return Err(Error::Domain("hausdorff distance needs non-empty samples".into()));
    }
    let a = one_sided_excess(space, k, l)?;
    let b = one_sided_excess(space, l, k)?;
    Ok(a.max(b))
}

#[cfg(test)]
pub(crate) fn hausdorff_brute(
    space: &MetricSpace,
    k: &CompactSample,
    l: &CompactSample,
) -> Result<f64> {
    let side = |from: &CompactSample, to: &CompactSample| -> Result<f64> {
        let mut worst = 0.0f64;
        for p in from.points() {
            let mut m = f64::INFINITY;
            for q in to.points() {
                m = m.min(space.dist(p, q)?);
            }
            worst = worst.max(m);
        }
        Ok(worst)
    };
    Ok(side(k, l)?.max(side(l, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> MetricSpace {
        MetricSpace::circle(1.0).unwrap()
    }

    fn sample(s: &MetricSpace, pts: &[f64]) -> CompactSample {
        CompactSample::new(s, pts.iter().map(|&t| Point::circle(t)).collect(), 0.01).unwrap()
    }

    #[test]
    fn hausdorff_identity() {
        let s = circle();
        let k = sample(&s, &[0.0, 0.5]);
        assert_eq!(hausdorff(&s, &k, &k).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_hand_cases() {
        let s = circle();
        // K = {0.0, 0.5}, L = {0.25}: sup over K of d(., L) = 0.25,
        // sup over L = 0.25 -> 0.25.
        let k = sample(&s, &[0.0, 0.5]);
        let l = sample(&s, &[0.25]);
        assert!((hausdorff(&s, &k, &l).unwrap() - 0.25).abs() < 1e-15);
        // K = {0.0}, L = {0.0, 0.3} -> 0.3 (one-sided from L).
        let k = sample(&s, &[0.0]);
        let l = sample(&s, &[0.0, 0.3]);
        assert!((hausdorff(&s, &k, &l).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_metric_axioms_on_sampled_sets() {
        let s = circle();
        let sets = [
            sample(&s, &[0.0, 0.1, 0.2]),
            sample(&s, &[0.5, 0.6]),
            sample(&s, &[0.05, 0.45, 0.85]),
        ];
        for a in &sets {
            assert_eq!(hausdorff(&s, a, a).unwrap(), 0.0);
            for b in &sets {
                let ab = hausdorff(&s, a, b).unwrap();
                let ba = hausdorff(&s, b, a).unwrap();
                assert_eq!(ab, ba);
                for c in &sets {
                    let ac = hausdorff(&s, a, c).unwrap();
                    let bc = hausdorff(&s, b, c).unwrap();
                    assert!(ac <= ab + bc + 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_sample_is_rejected() {
        let s = circle();
        assert!(CompactSample::new(&s, vec![], 0.1).is_err());
    }

    #[test]
    fn near_duplicates_collapse() {
        let s = circle();
        let k = CompactSample::new(
            &s,
            vec![Point::circle(0.2), Point::circle(0.2 + 1e-14)],
            0.1,
        )
        .unwrap();
        assert_eq!(k.len(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let s = MetricSpace::flat_torus(1.0, 1.0).unwrap();
        let k = CompactSample::new(
            &s,
            vec![Point::torus(0.125, 0.75), Point::torus(0.5, 0.0625)],
            0.05,
        )
        .unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let back = CompactSample::read_csv(&s, buf.as_slice(), 0.05).unwrap();
        assert_eq!(back.len(), k.len());
        for (p, q) in k.points().iter().zip(back.points()) {
            assert!(s.dist(p, q).unwrap() < 1e-15);
        }
    }
}
