use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use laguerre_core::cells::{volume_moment, TypicalCellSpec};
use laguerre_core::density::{check_admissible, DensityModel, ModelSpec};
use laguerre_core::experiments::{
    admissible_battery, decomposition_battery, intensity_battery, moments_battery, section_run, section_runs,
    sectional_summary, window_for_count, Battery, BatteryReport, Check, SectionRun,
};
use laguerre_core::geometry::build_regular_triangulation;
use laguerre_core::ppp::{generate_two_pass, paraboloid_level, write_jsonl, Aabb, GenerateOptions};
use laguerre_core::tessellation::{clip_halfplane, laguerre_1d, laguerre_diagram_from_dual, polygon_area, LaguerreCell, LaguerreVertex, SectionInterval};
use laguerre_core::Error;
use serde::Serialize;

use crate::settings::Settings;
use crate::{svg, CliError};

/// Expected simplex counts that size the default windows.
const GENERATE_COUNT: f64 = 400.0;
const SECTION_COUNT: f64 = 400.0;
const HARVEST_COUNT: f64 = 80.0;

/// Replicates of the sectional battery that must pass the KS test.
const KS_PASS_FRACTION: f64 = 0.95;

fn write_file(out: &Path, name: &str, write: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    let file = fs::File::create(&path).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    write_file(out, name, |w| writeln!(w, "{text}"))
}

fn default_window(s: &Settings, f: &DensityModel, count: f64) -> Result<Aabb, CliError> {
    if let Some(w) = s.window {
        return Ok(w);
    }
    let sized = TypicalCellSpec::new(f.clone(), s.gamma, 0.0, s.d.max(2)).and_then(|spec| window_for_count(&spec, count));
    match sized {
        Ok(w) if w.d == s.d => Ok(w),
        Ok(w) => Ok(Aabb::centered(s.d, 0.5 * w.side(0).powi(2).powf(1.0 / s.d as f64))?),
        Err(_) => Ok(Aabb::centered(s.d, 2.0)?),
    }
}

/// Builds the model and refuses ones whose point process does not produce a
/// tessellation.
fn admissible_model(s: &Settings, d: usize) -> Result<DensityModel, CliError> {
    let f = s.model.build(d)?;
    if !check_admissible(&f, d)?.pass() {
        return Err(CliError::Usage(format!(
            "model {} is not admissible in d = {d}; run `verify --battery admissible` for details",
            f.model_hash()
        )));
    }
    Ok(f)
}

#[derive(Serialize)]
struct GenerateSummary<'a> {
    model: &'a ModelSpec,
    model_hash: String,
    d: usize,
    gamma: f64,
    seed: u64,
    window: Aabb,
    margin: f64,
    sites: usize,
    simplices: Option<usize>,
    cells: Option<usize>,
    pass1_cap: f64,
    weight_cap: f64,
    coverage: f64,
    attempts: usize,
    residual_bias: f64,
}

#[derive(Serialize)]
struct DiagramDump<'a> {
    view: Aabb,
    cells: &'a [LaguerreCell],
    vertices: Vec<LaguerreVertex>,
}

#[derive(Serialize)]
struct IntervalDump {
    view: Aabb,
    intervals: Vec<SectionInterval>,
}

fn clip_to(poly: &[[f64; 2]], view: &Aabb) -> Vec<[f64; 2]> {
    let mut p = poly.to_vec();
    for (a, c) in [
        ([1.0, 0.0], view.hi[0]),
        ([-1.0, 0.0], -view.lo[0]),
        ([0.0, 1.0], view.hi[1]),
        ([0.0, -1.0], -view.lo[1]),
    ] {
        p = clip_halfplane(&p, a, c);
    }
    p
}

pub fn generate(s: &Settings) -> Result<(), CliError> {
    let f = admissible_model(s, s.d)?;
    let inner = default_window(s, &f, GENERATE_COUNT)?;
    let g = generate_two_pass(&f, s.gamma, &inner, s.seed, &GenerateOptions::default())?;
    let sample = &g.sample;
    write_file(&s.out, "sites.jsonl", |w| write_jsonl(sample, w).map_err(std::io::Error::other))?;
    let view = inner.dilate(s.margin);
    let (simplices, cells) = match s.d {
        1 => {
            let sites: Vec<(f64, f64)> = sample.points.iter().map(|p| (p.v[0], p.h)).collect();
            let intervals = laguerre_1d(&sites, view.lo[0], view.hi[0]);
            let n = intervals.len();
            write_json(&s.out, "intervals.json", &IntervalDump { view, intervals })?;
            (None, Some(n))
        }
        2 => {
            let dual = build_regular_triangulation(&sample.points, 2)?;
            let diagram = laguerre_diagram_from_dual(&dual, &sample.window)?;
            let cells: Vec<LaguerreCell> = diagram
                .cells
                .iter()
                .filter_map(|c| {
                    let polygon = clip_to(&c.polygon, &view);
                    (polygon.len() >= 3 && polygon_area(&polygon) > 0.0).then(|| LaguerreCell {
                        site: c.site,
                        clipped: c.clipped || polygon != c.polygon,
                        polygon,
                    })
                })
                .collect();
            let vertices = diagram.vertices.iter().filter(|v| view.contains(&v.w)).copied().collect();
            write_json(&s.out, "dual.json", &dual)?;
            write_json(&s.out, "diagram.json", &DiagramDump { view, cells: &cells, vertices })?;
            let picture = svg::render(&cells, &dual.sites, &view);
            write_file(&s.out, "tessellation.svg", |w| w.write_all(picture.as_bytes()))?;
            (Some(dual.simplices.len()), Some(cells.len()))
        }
        _ => {
            eprintln!("note: tessellation output is available for d = 1 and d = 2 only; wrote the sites");
            (None, None)
        }
    };
    write_json(
        &s.out,
        "generate.json",
        &GenerateSummary {
            model: &s.model,
            model_hash: f.model_hash(),
            d: s.d,
            gamma: s.gamma,
            seed: s.seed,
            window: inner,
            margin: s.margin,
            sites: sample.points.len(),
            simplices,
            cells,
            pass1_cap: g.pass1_cap,
            weight_cap: sample.window.weight_cap,
            coverage: g.coverage,
            attempts: g.attempts,
            residual_bias: g.residual_bias,
        },
    )?;
    println!("wrote {} sites to {}", sample.points.len(), s.out.display());
    Ok(())
}

/// Splits `orders` into those with a finite target and failed checks for the
/// rest.
fn finite_orders(spec: &TypicalCellSpec, orders: &[f64]) -> Result<(Vec<f64>, Vec<Check>), CliError> {
    let mut keep = Vec::new();
    let mut checks = Vec::new();
    for &o in orders {
        match volume_moment(spec, o) {
            Ok(_) => keep.push(o),
            Err(Error::Divergent(msg)) => checks.push(Check {
                name: format!("E Vol^{o} finite (nu = {})", spec.nu),
                pass: false,
                detail: msg,
            }),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((keep, checks))
}

pub fn verify(s: &Settings) -> Result<BatteryReport, CliError> {
    let battery = s
        .battery
        .ok_or_else(|| CliError::Usage("verify needs --battery (intensity, admissible, sectional, moments or decomposition)".into()))?;
    let f = s.model.build(s.d)?;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    match battery {
        Battery::Intensity => {
            let f = admissible_model(s, s.d)?;
            let levels = match &s.levels {
                Some(l) => l.clone(),
                None => [0.3, 1.0, 3.0]
                    .iter()
                    .map(|&c| paraboloid_level(&f, s.gamma, s.d, c))
                    .collect::<laguerre_core::Result<_>>()?,
            };
            reports = intensity_battery(&f, s.gamma, s.d, &levels, s.replicates.unwrap_or(1000), s.seed)?;
        }
        Battery::Admissible => checks.push(admissible_battery(&f, s.d)?),
        Battery::Sectional => {
            if s.d != 2 {
                return Err(CliError::Usage("the sectional battery runs in d = 2".into()));
            }
            let f = admissible_model(s, 2)?;
            let inner = default_window(s, &f, SECTION_COUNT)?;
            let runs = section_runs(&f, s.gamma, &inner, s.replicates.unwrap_or(100), s.seed)?;
            let (r, c) = sectional_summary(&runs, KS_PASS_FRACTION);
            reports = r;
            checks.push(c);
        }
        Battery::Moments => {
            let spec = TypicalCellSpec::new(f.clone(), s.gamma, s.nu, s.d)?;
            let (orders, failed) = finite_orders(&spec, &s.orders)?;
            checks = failed;
            if !orders.is_empty() {
                let inner = default_window(s, &f, HARVEST_COUNT)?;
                reports = moments_battery(&spec, &orders, s.replicates.unwrap_or(500), inner, s.seed)?;
            }
        }
        Battery::Decomposition => {
            let spec = TypicalCellSpec::new(f.clone(), s.gamma, s.nu, s.d)?;
            let (orders, failed) = finite_orders(&spec, &s.orders)?;
            let (r, c) = decomposition_battery(&spec, &orders, s.replicates.unwrap_or(100_000), s.seed)?;
            reports = r;
            checks.push(c);
            checks.extend(failed);
        }
    }
    let report = BatteryReport {
        battery,
        model_hash: f.model_hash(),
        seed: s.seed,
        reports,
        checks,
    };
    let name = serde_json::to_value(battery).map_err(Error::from)?;
    let name = name.as_str().unwrap_or("battery");
    write_file(&s.out, &format!("{name}.csv"), |w| report.write_csv(w).map_err(std::io::Error::other))?;
    write_json(&s.out, &format!("{name}.json"), &report)?;
    print!("{}", report.summary());
    Ok(report)
}

#[derive(Serialize)]
struct SectionDump<'a> {
    model_hash: String,
    seed: u64,
    window: Aabb,
    #[serde(flatten)]
    run: &'a SectionRun,
}

pub fn section(s: &Settings) -> Result<(), CliError> {
    if s.d != 2 {
        return Err(CliError::Usage("section cuts a planar tessellation; use --d 2".into()));
    }
    let f = admissible_model(s, 2)?;
    let f1 = f.sectional_density(2, 1)?;
    let inner = default_window(s, &f, SECTION_COUNT)?;
    let run = section_run(&f, &f1, s.gamma, &inner, s.seed)?;
    write_json(
        &s.out,
        "section.json",
        &SectionDump {
            model_hash: f.model_hash(),
            seed: s.seed,
            window: inner,
            run: &run,
        },
    )?;
    write_file(&s.out, "section_lengths.csv", |w| {
        writeln!(w, "source,length")?;
        for x in &run.section_lengths {
            writeln!(w, "section,{x}")?;
        }
        for x in &run.direct_lengths {
            writeln!(w, "direct,{x}")?;
        }
        Ok(())
    })?;
    println!(
        "segment length {:.4}: {} section intervals, {} direct intervals, KS {:.4} (critical {:.4})",
        run.segment_length,
        run.section_lengths.len(),
        run.direct_lengths.len(),
        run.ks,
        run.ks_critical
    );
    Ok(())
}
