//! Scenario execution: runs the certification pipeline and the requested
//! diagnostics, writing deterministic reports plus a hashed manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crossfield::config::ScenarioConfig;
use crossfield::dynamics::{
    diam_decay, limit_set, nontrivial_stable_continuum, stable_point_check, wandering_check,
};
use crossfield::error::{Error, Result};
use crossfield::expansivity::{
    expansive_scan, planar_obstruction_demo, positive_expansive_check, ExpansivityVerdict,
};
use crossfield::flow::certify_regularity;
use crossfield::numerics::splitmix64;
use crossfield::sections::{
    build_sections_with, build_whitney_sections, PipelineOptions, SectionField,
};
use crossfield::space::{net, CompactSample, Point};

/// Exit status of a scenario run.
pub enum RunOutcome {
    Ok,
    ExpectationMismatch(Vec<String>),
}

pub struct RunArtifacts {
    pub outcome: RunOutcome,
    pub files: Vec<(String, String)>, // (name, description)
}

fn seeded_subsample(
    space: &crossfield::space::MetricSpace,
    sample: &CompactSample,
    cap: usize,
    seed: u64,
) -> Result<CompactSample> {
    if sample.len() <= cap.max(1) {
        return Ok(sample.clone());
    }
    let stride = sample.len().div_ceil(cap.max(1));
    let mut state = seed;
    let offset = (splitmix64(&mut state) as usize) % stride;
    let pts: Vec<Point> = sample
        .points()
        .iter()
        .skip(offset)
        .step_by(stride)
        .copied()
        .collect();
    CompactSample::new(space, pts, sample.resolution())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn coords_line(p: &Point) -> String {
    p.coords().iter().map(|c| format!("{c:.17}")).collect::<Vec<_>>().join(",")
}

/// Runs one scenario into `out_dir`, returning the produced files and the
/// expectation outcome. Pipeline precondition failures propagate as
/// errors (the caller maps them to exit code 3).
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut mismatches: Vec<String> = Vec::new();

    // resolved configuration
    write_file(out_dir, "config_resolved.cfg", &cfg.resolved().render())?;
    files.push(("config_resolved.cfg".into(), "resolved scenario parameters".into()));

    let flow = &cfg.flow;
    let space = &cfg.space;

    // regularity certificate
    let cert_res = cfg.resolution.max(space.diameter() / 16.0);
    let cert = certify_regularity(flow, cert_res, &cfg.t_grid)?;
    {
        let mut s = String::new();
        let _ = writeln!(s, "# regularity certificate: minimal displacement over the net");
        let _ = writeln!(s, "t_hat = {}", cert.t_hat);
        let _ = writeln!(s, "separation = {}", cert.separation);
        let _ = writeln!(s, "net_resolution = {}", cert.resolution);
        write_file(out_dir, "certificate.txt", &s)?;
        files.push(("certificate.txt".into(), "flow regularity certificate".into()));
    }

    // construction pipeline
    let opts = PipelineOptions { cert_points: cfg.cert_points, ..PipelineOptions::default() };
    let (pipeline_field, report) = build_sections_with(flow, cfg.resolution, &cfg.t_grid, &opts)?;
    {
        let mut s = String::new();
        let _ = writeln!(s, "# certified parameters of the monotone symmetric section field");
        let _ = writeln!(s, "t_hat = {}", report.t_hat);
        let _ = writeln!(s, "separation = {}", report.separation);
        let _ = writeln!(s, "tau = {}", report.tau);
        let _ = writeln!(s, "rho1 = {}", report.rho1);
        let _ = writeln!(s, "rho = {}", report.rho);
        let _ = writeln!(s, "gamma = {}", report.gamma);
        let _ = writeln!(s, "eps_mono = {}", report.eps_mono);
        let _ = writeln!(s, "symmetry_defect = {}", report.symmetry_defect);
        let _ = writeln!(s, "cert_points = {}", report.cert_points);
        write_file(out_dir, "sections.cfg", &s)?;
        files.push(("sections.cfg".into(), "section field parameters and validator margins".into()));
    }

    // tracking field for the dynamics diagnostics
    let whitney = build_whitney_sections(flow, cfg.tracking_resolution, &cfg.t_grid)?;
    let tracking: &SectionField =
        if cfg.tracking_field == "pipeline" { &pipeline_field } else { &whitney };

    // sampled domain for the diagnostics
    let domain_net = net(space, cert_res)?;
    let domain = seeded_subsample(space, &domain_net, cfg.domain_points, cfg.seed)?;

    for diag in &cfg.diagnostics {
        match diag.as_str() {
            "sections" => {
                let mut s = String::new();
                let _ = writeln!(s, "# per-point section nets; block header names the base point");
                for x in domain.points() {
                    let netx = pipeline_field.evaluate(x)?;
                    let _ = writeln!(s, "# base = {}", coords_line(x));
                    for p in netx.points() {
                        let _ = writeln!(s, "{}", coords_line(p));
                    }
                }
                write_file(out_dir, "sections.csv", &s)?;
                files.push(("sections.csv".into(), "sampled section nets over the diagnostic domain".into()));
            }
            "stables" => {
                let mut s = String::new();
                let _ = writeln!(
                    s,
                    "# stable-point verdicts at horizon {} (largest delta whose net tracks inside the eps-section)",
                    cfg.horizon_stable
                );
                let eps = cfg.delta_grid.iter().cloned().fold(0.0f64, f64::max);
                let grid: Vec<f64> = cfg.delta_grid.clone();
                let mut any_stable = false;
                for x in domain.points() {
                    let rep =
                        stable_point_check(flow, tracking, x, eps, &grid, cfg.horizon_stable)?;
                    any_stable |= rep.stable;
                    let _ = writeln!(
                        s,
                        "base={} delta_star={} stable={} asymptotic={} horizon={}",
                        coords_line(x),
                        rep.delta_star,
                        rep.stable,
                        rep.asymptotic,
                        rep.horizon
                    );
                }
                write_file(out_dir, "stables.txt", &s)?;
                files.push(("stables.txt".into(), "stable-point verdicts at finite horizon".into()));
                if let Some(expect) = cfg.expect_stable_points {
                    if expect != any_stable {
                        mismatches.push(format!(
                            "stable points: expected {expect}, observed {any_stable}"
                        ));
                    }
                }
            }
            "decay" => {
                let x = domain.points()[0];
                let delta = cfg.delta_grid.iter().cloned().fold(0.0f64, f64::max);
                let curve = diam_decay(flow, tracking, &x, delta, &cfg.decay_grid)?;
                let mut s = String::new();
                let _ = writeln!(s, "# tracked stable-set diameter per horizon; columns: T,diameter");
                for (t, d) in &curve.points {
                    let _ = writeln!(s, "{t},{d:.17}");
                }
                if let Some(slope) = curve.log_slope {
                    let _ = writeln!(s, "# log-diameter slope = {slope}");
                }
                write_file(out_dir, "decay.csv", &s)?;
                files.push(("decay.csv".into(), "stable-set diameter decay curve".into()));
            }
            "expansivity" => {
                let scan =
                    expansive_scan(flow, tracking, &domain, &cfg.delta_grid, cfg.horizon_expansive)?;
                let delta = cfg.delta_grid.iter().cloned().fold(0.0f64, f64::max);
                let pos = positive_expansive_check(
                    flow,
                    tracking,
                    &domain,
                    delta,
                    cfg.horizon_expansive,
                )?;
                let mut s = String::new();
                for (d, w) in &scan.per_delta {
                    let _ = writeln!(s, "delta={d} worst_intersection_diameter={w:.17}");
                }
                let expansive = matches!(scan.verdict, ExpansivityVerdict::ExpansiveAtHorizon(_));
                match &scan.verdict {
                    ExpansivityVerdict::ExpansiveAtHorizon(d) => {
                        let _ = writeln!(s, "verdict=expansive-at-horizon delta={d}");
                    }
                    ExpansivityVerdict::NotExpansive { witness_base, witness } => {
                        let _ = writeln!(
                            s,
                            "verdict=not-expansive witness_base={} witness={}",
                            coords_line(witness_base),
                            coords_line(witness)
                        );
                    }
                    ExpansivityVerdict::Inconclusive => {
                        let _ = writeln!(s, "verdict=inconclusive");
                    }
                }
                let _ = writeln!(
                    s,
                    "positive_expansive={} worst_stable_diameter={:.17} consistent_with_space={}",
                    pos.positive_expansive_at_horizon, pos.worst_diameter, pos.consistent_with_topology
                );
                let _ = writeln!(s, "# human summary");
                let _ = writeln!(s, "# {}", format!("{scan}").replace('\n', "\n# "));
                write_file(out_dir, "expansivity.txt", &s)?;
                files.push(("expansivity.txt".into(), "expansivity scan and positive-expansivity check".into()));
                if let Some(expect) = cfg.expect_expansive {
                    if expect != expansive {
                        mismatches
                            .push(format!("expansive: expected {expect}, observed {expansive}"));
                    }
                }
                if let Some(expect) = cfg.expect_positive_expansive {
                    if expect != pos.positive_expansive_at_horizon {
                        mismatches.push(format!(
                            "positive expansive: expected {expect}, observed {}",
                            pos.positive_expansive_at_horizon
                        ));
                    }
                }
            }
            "demo" => {
                let eps = cfg.delta_grid.iter().cloned().fold(0.0f64, f64::max);
                let rep =
                    planar_obstruction_demo(flow, tracking, &domain, eps, cfg.horizon_stable)?;
                let mut s = String::new();
                let _ = writeln!(s, "# consistency of stable-point and expansivity verdicts");
                let _ = write!(s, "{rep}");
                write_file(out_dir, "demo.txt", &s)?;
                files.push(("demo.txt".into(), "stable-point versus expansivity consistency narrative".into()));
            }
            "continuum" => {
                let eps = cfg.delta_grid.iter().cloned().fold(0.0f64, f64::max);
                let x = domain.points()[0];
                let rep = nontrivial_stable_continuum(
                    flow,
                    tracking,
                    &x,
                    eps,
                    eps / 2.0,
                    cfg.horizon_stable,
                )?;
                let mut s = String::new();
                let _ = writeln!(
                    s,
                    "# connected stable component through the base point; diameter vs {}",
                    eps / 2.0
                );
                let _ = writeln!(
                    s,
                    "base={} diameter={} nontrivial={}",
                    coords_line(&rep.base),
                    rep.diameter,
                    rep.nontrivial
                );
                for p in rep.component.points() {
                    let _ = writeln!(s, "{}", coords_line(p));
                }
                write_file(out_dir, "continuum.txt", &s)?;
                files.push(("continuum.txt".into(), "stable continuum through a sampled point".into()));
            }
            "wandering" => {
                let mut s = String::new();
                let _ = writeln!(s, "# orbit-return scan of the section through each base point");
                let radius = cfg.delta_grid.iter().cloned().fold(0.0f64, f64::max);
                for x in domain.points() {
                    let rep =
                        wandering_check(flow, tracking, x, radius, cfg.horizon_expansive)?;
                    let _ = writeln!(
                        s,
                        "base={} wandering={} first_return={:?}",
                        coords_line(x),
                        rep.wandering_at_horizon,
                        rep.first_return
                    );
                }
                write_file(out_dir, "wandering.txt", &s)?;
                files.push(("wandering.txt".into(), "wandering verdicts at finite horizon".into()));
            }
            "limits" => {
                let x = domain.points()[0];
                let ls = limit_set(flow, &x, cfg.horizon_expansive * 4.0, 0.0, cfg.resolution * 2.0)?;
                let mut s = String::new();
                let _ = writeln!(s, "# finite-horizon forward limit set of the first domain point");
                for p in ls.points() {
                    let _ = writeln!(s, "{}", coords_line(p));
                }
                write_file(out_dir, "limits.csv", &s)?;
                files.push(("limits.csv".into(), "finite-horizon limit set sample".into()));
            }
            other => {
                return Err(Error::Config(format!("unknown diagnostic `{other}`")));
            }
        }
    }

    // manifest with content hashes
    let mut manifest = String::new();
    let _ = writeln!(manifest, "# scenario output manifest: file, content hash, diagnostic");
    for (name, desc) in &files {
        let bytes = fs::read(out_dir.join(name))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hex::encode(hasher.finalize());
        let _ = writeln!(manifest, "{name} sha256={digest} {desc}");
    }
    write_file(out_dir, "manifest.txt", &manifest)?;

    let outcome = if mismatches.is_empty() {
        RunOutcome::Ok
    } else {
        RunOutcome::ExpectationMismatch(mismatches)
    };
    Ok(RunArtifacts { outcome, files })
}

pub fn scenario_out_dir(base: &Path, name: &str) -> PathBuf {
    base.join(name)
}
