//! Verification batteries: Monte-Carlo checks of the distributional
//! identities against their closed forms, with deterministic sub-seeds per
//! replicate so results do not depend on the thread count.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{
    apex_intensity, decomposed_moment_reports, decomposition_check, decomposition_grid, empirical_typical_cell_moments,
    harvest_replicate, harvest_window_in, normalization_alpha, Decomposition, HarvestOptions, TypicalCellSpec,
};
use crate::density::{check_admissible, DensityModel};
use crate::error::{Error, Result};
use crate::geometry::{build_regular_triangulation, pow};
use crate::ppp::{generate_two_pass, weight_floor, Aabb, GenerateOptions, PppSampler, SimulationWindow, BIAS_BUDGET};
use crate::rng::{self, tag};
use crate::stats::{jackknife_ratio, ks_critical, ks_statistic, MomentReport};
use crate::tessellation::{intersect_with_flat, laguerre_1d, laguerre_diagram_from_dual, Flat};

/// z-score threshold for moment reports.
pub const Z_THRESHOLD: f64 = 3.0;
/// Level of the two-sample KS tests.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Battery {
    Intensity,
    Admissible,
    Sectional,
    Moments,
    Decomposition,
}

impl std::str::FromStr for Battery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intensity" => Ok(Battery::Intensity),
            "admissible" => Ok(Battery::Admissible),
            "sectional" => Ok(Battery::Sectional),
            "moments" => Ok(Battery::Moments),
            "decomposition" => Ok(Battery::Decomposition),
            other => Err(Error::Config(format!(
                "unknown battery `{other}` (expected intensity, admissible, sectional, moments or decomposition)"
            ))),
        }
    }
}

/// A pass/fail diagnostic that is not a moment comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub battery: Battery,
    pub model_hash: String,
    pub seed: u64,
    pub reports: Vec<MomentReport>,
    pub checks: Vec<Check>,
}

impl BatteryReport {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.passes(Z_THRESHOLD)) && self.checks.iter().all(|c| c.pass)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = out;
        writeln!(w, "label,estimate,std_error,target,z_score,n_samples,method,pass")?;
        for r in &self.reports {
            writeln!(
                w,
                "\"{}\",{},{},{},{},{},{},{}",
                r.label,
                r.estimate,
                r.std_error,
                r.target,
                r.z_score,
                r.n_samples,
                r.method,
                r.passes(Z_THRESHOLD)
            )?;
        }
        Ok(())
    }

    /// One line per report and check, then the overall verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.reports {
            let verdict = if r.passes(Z_THRESHOLD) { "PASS" } else { "FAIL" };
            s += &format!(
                "{verdict} {}: estimate {:.6} ± {:.6}, target {:.6}, z = {:.2}\n",
                r.label, r.estimate, r.std_error, r.target, r.z_score
            );
        }
        for c in &self.checks {
            s += &format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s += &format!("{:?}: {}\n", self.battery, if self.pass() { "PASS" } else { "FAIL" });
        s
    }
}

/// Counts of sites below `Π_{(0,t)}` over independent realizations, against
/// `γπ^{d/2} I^{d/2+1} f(t)`.
pub fn intensity_battery(f: &DensityModel, gamma: f64, d: usize, ts: &[f64], replicates: usize, seed: u64) -> Result<Vec<MomentReport>> {
    if ts.is_empty() || replicates < 2 {
        return Err(Error::Config("intensity battery needs levels and at least two replicates".into()));
    }
    let t_max = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inner = Aabb::centered(d, 1e-6)?;
    let floor = weight_floor(f, gamma, &inner, t_max, BIAS_BUDGET)?;
    let window = SimulationWindow::layered(inner, t_max, floor)?;
    let sampler = PppSampler::new(f, gamma, &window)?;
    let origin = vec![0.0; d];
    let counts: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let sample = sampler.sample(rng::sub_seed(seed, &[r as u64]))?;
            Ok(ts.iter().map(|&t| sample.points.iter().filter(|p| pow(&origin, p) <= t).count() as f64).collect())
        })
        .collect::<Result<_>>()?;
    ts.iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = counts.iter().map(|c| c[k]).collect();
            let (m, se) = crate::stats::mean_se(&xs);
            let target = crate::ppp::expected_count_below_paraboloid(f, gamma, d, t)?;
            Ok(MomentReport::new(format!("count below paraboloid t = {t:.6}"), m, se, target, replicates as u64, "ppp"))
        })
        .collect()
}

pub fn admissible_battery(f: &DensityModel, d: usize) -> Result<Check> {
    let r = check_admissible(f, d)?;
    let detail = format!(
        "F1 {} on {} points{}{}",
        if r.f1_ok() { "holds" } else { "fails" },
        r.f1.len(),
        r.f2.as_ref().map(|f2| format!(", F2 {} (slope {:.3})", if f2.ok { "holds" } else { "fails" }, f2.epsilon)).unwrap_or_default(),
        if r.notes.is_empty() { String::new() } else { format!("; {}", r.notes.join("; ")) }
    );
    Ok(Check {
        name: format!("admissible in d = {d}"),
        pass: r.pass(),
        detail,
    })
}

/// One paired experiment: interval lengths of a random line section of a
/// planar tessellation and of a direct one-dimensional tessellation with the
/// sectional density on a segment of the same length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionRun {
    pub segment_length: f64,
    pub section_lengths: Vec<f64>,
    pub direct_lengths: Vec<f64>,
    pub ks: f64,
    pub ks_critical: f64,
}

impl SectionRun {
    pub fn ks_pass(&self) -> bool {
        self.ks <= self.ks_critical
    }
}

pub fn section_run(f: &DensityModel, f1: &DensityModel, gamma: f64, inner: &Aabb, seed: u64) -> Result<SectionRun> {
    let g = generate_two_pass(f, gamma, inner, seed, &GenerateOptions::default())?;
    let dual = build_regular_triangulation(&g.sample.points, 2)?;
    let diagram = laguerre_diagram_from_dual(&dual, &g.sample.window)?;
    let mut rng = rng::stream(seed, &[tag::LINE]);
    let angle: f64 = rng.random_range(0.0..PI);
    let point = [
        inner.lo[0] + rng.random::<f64>() * inner.side(0),
        inner.lo[1] + rng.random::<f64>() * inner.side(1),
    ];
    let flat = Flat::new(point, [angle.cos(), angle.sin()])?;
    let section = intersect_with_flat(&diagram, &flat)?;
    let length = section.segment.1 - section.segment.0;
    let section_lengths = section.interior_lengths();

    let direct_lengths = if length > 0.0 {
        let seg = Aabb::new(&[0.0], &[length])?;
        let g1 = generate_two_pass(f1, gamma, &seg, rng::sub_seed(seed, &[tag::DIRECT_1D]), &GenerateOptions::default())?;
        let sites: Vec<(f64, f64)> = g1.sample.points.iter().map(|p| (p.v[0], p.h)).collect();
        let cells = laguerre_1d(&sites, 0.0, length);
        if cells.len() >= 3 {
            cells[1..cells.len() - 1].iter().map(|c| c.length()).collect()
        } else {
            Vec::new()
        }
    } else {
        Vec::new()
    };
    let (ks, ks_critical) = if section_lengths.is_empty() || direct_lengths.is_empty() {
        (0.0, f64::INFINITY)
    } else {
        (
            ks_statistic(&section_lengths, &direct_lengths),
            ks_critical(section_lengths.len(), direct_lengths.len(), KS_LEVEL),
        )
    };
    Ok(SectionRun {
        segment_length: length,
        section_lengths,
        direct_lengths,
        ks,
        ks_critical,
    })
}

pub fn section_runs(f: &DensityModel, gamma: f64, inner: &Aabb, runs: usize, seed: u64) -> Result<Vec<SectionRun>> {
    let f1 = f.sectional_density(2, 1)?;
    (0..runs)
        .into_par_iter()
        .map(|r| section_run(f, &f1, gamma, inner, rng::sub_seed(seed, &[r as u64])))
        .collect()
}

/// Pooled section-versus-direct comparison of interval-length moments and
/// the KS pass count.
pub fn sectional_summary(runs: &[SectionRun], min_pass_fraction: f64) -> (Vec<MomentReport>, Check) {
    let mut reports = Vec::new();
    for k in [1, 2] {
        let ratio = |pick: fn(&SectionRun) -> &Vec<f64>| {
            let num: Vec<f64> = runs.iter().map(|r| pick(r).iter().map(|x| x.powi(k)).sum()).collect();
            let den: Vec<f64> = runs.iter().map(|r| pick(r).len() as f64).collect();
            jackknife_ratio(&num, &den)
        };
        let (sec, sec_se) = ratio(|r| &r.section_lengths);
        let (dir, dir_se) = ratio(|r| &r.direct_lengths);
        let n: usize = runs.iter().map(|r| r.section_lengths.len()).sum();
        reports.push(MomentReport::new(
            format!("interval length moment {k}"),
            sec,
            (sec_se * sec_se + dir_se * dir_se).sqrt(),
            dir,
            n as u64,
            "section-vs-direct",
        ));
    }
    let passed = runs.iter().filter(|r| r.ks_pass()).count();
    let need = (min_pass_fraction * runs.len() as f64).ceil() as usize;
    let check = Check {
        name: format!("KS at level {KS_LEVEL}"),
        pass: passed >= need,
        detail: format!("{passed} of {} paired runs below the critical value (need {need})", runs.len()),
    };
    (reports, check)
}

/// Centered cube expected to hold `count` dual simplices.
pub fn window_for_count(spec: &TypicalCellSpec, count: f64) -> Result<Aabb> {
    let a0 = normalization_alpha(&spec.with_nu(0.0))?;
    Aabb::centered(spec.d, 0.5 * (count / a0).powf(1.0 / spec.d as f64))
}

/// Harvest estimates of `E Vol(Z_ν)^s` plus, for `ν = 0`, the apex
/// intensity against `α(f, γ, 0)`.
pub fn moments_battery(spec: &TypicalCellSpec, orders: &[f64], replicates: usize, inner: Aabb, seed: u64) -> Result<Vec<MomentReport>> {
    let opts = HarvestOptions {
        max_order: orders.iter().copied().fold(0.0, f64::max),
        ..HarvestOptions::default()
    };
    let window = harvest_window_in(spec, inner, &opts)?;
    let stats: Vec<_> = (0..replicates)
        .into_par_iter()
        .map(|r| harvest_replicate(spec, &window, rng::sub_seed(seed, &[r as u64])))
        .collect::<Result<_>>()?;
    let mut out: Vec<MomentReport> = orders.iter().map(|&s| empirical_typical_cell_moments(&stats, spec, s)).collect::<Result<_>>()?;
    if spec.nu == 0.0 {
        let (m, se) = apex_intensity(&stats, &window);
        out.push(MomentReport::new(
            "apex intensity",
            m,
            se,
            normalization_alpha(spec)?,
            replicates as u64,
            "harvest",
        ));
    }
    Ok(out)
}

/// Decomposition residual on the verification grid and sampler moments.
pub fn decomposition_battery(spec: &TypicalCellSpec, orders: &[f64], draws: usize, seed: u64) -> Result<(Vec<MomentReport>, Check)> {
    let dec = Decomposition::of(&spec.f)
        .ok_or_else(|| Error::NotApplicable("decomposition battery needs a beta, beta-prime or Gaussian model".into()))?;
    let grid = decomposition_grid(&spec.f, 41);
    let residual = decomposition_check(&spec.f, |p| dec.phi(p), |x| dec.psi(x), &grid);
    let check = Check {
        name: "decomposition residual".into(),
        pass: residual <= 1e-12,
        detail: format!("max residual {residual:e} on {} grid points", grid.len()),
    };
    let reports = decomposed_moment_reports(spec, draws, seed, orders)?;
    Ok((reports, check))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_names_parse() {
        assert_eq!("moments".parse::<Battery>().unwrap(), Battery::Moments);
        assert!("nope".parse::<Battery>().is_err());
    }

    #[test]
    fn intensity_counts_match_for_beta() {
        let f = DensityModel::beta(2, 1.0).unwrap();
        let reports = intensity_battery(&f, 1.0, 2, &[0.5, 1.0, 2.0], 2000, 3).unwrap();
        assert!((reports[1].target - 0.3125).abs() < 1e-12);
        for r in reports {
            assert!(r.passes(4.0), "{r:?}");
        }
    }

    #[test]
    fn section_runs_are_paired_and_reproducible() {
        let f = DensityModel::gaussian(1.0).unwrap();
        let inner = Aabb::centered(2, 3.0).unwrap();
        let a = section_runs(&f, 1.0, &inner, 4, 9).unwrap();
        let b = section_runs(&f, 1.0, &inner, 4, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.segment_length > 0.0));
        let (reports, check) = sectional_summary(&a, 0.5);
        assert_eq!(reports.len(), 2);
        assert!(check.detail.contains("of 4"));
    }

    #[test]
    fn admissibility_failure_is_reported() {
        let f = DensityModel::neg_power_law(1.5, 1.0, 0.0).unwrap();
        assert!(!admissible_battery(&f, 2).unwrap().pass);
        assert!(admissible_battery(&DensityModel::beta(2, 1.0).unwrap(), 2).unwrap().pass);
    }
}
