//! CSV and SVG output for sweep results.
//!
//! `results.csv` is the normative table; `curves.csv` carries the per-step
//! fidelity curves; the SVG charts are derived views.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CellResult, Scenario, ThresholdRow};
use crate::channels::NoiseKind;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 12] = [
    "scenario",
    "noise",
    "alpha",
    "epsilon",
    "seed",
    "episodes",
    "aborted",
    "mean_fidelity",
    "std_fidelity",
    "mean_steps_to_threshold",
    "std_steps_to_threshold",
    "unreached_count",
];

pub const THRESHOLDS_HEADER: [&str; 4] = ["scenario", "noise", "epsilon", "threshold_alpha"];

pub const CURVES_HEADER: [&str; 7] = ["scenario", "noise", "alpha", "epsilon", "t", "mean_fidelity", "std_fidelity"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.scenario.to_string(),
            r.noise.to_string(),
            r.alpha.to_string(),
            r.epsilon.to_string(),
            r.seed.to_string(),
            r.episodes.to_string(),
            r.aborted.to_string(),
            r.mean_fidelity.to_string(),
            r.std_fidelity.to_string(),
            opt(r.mean_steps_to_threshold),
            opt(r.std_steps_to_threshold),
            r.unreached_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves_csv(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVES_HEADER)?;
    for r in results {
        for (t, (m, s)) in r.curve_mean.iter().zip(&r.curve_std).enumerate() {
            w.write_record([
                r.scenario.to_string(),
                r.noise.to_string(),
                r.alpha.to_string(),
                r.epsilon.to_string(),
                t.to_string(),
                m.to_string(),
                s.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_thresholds_csv(path: &Path, rows: &[ThresholdRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(THRESHOLDS_HEADER)?;
    for r in rows {
        w.write_record([r.scenario.to_string(), r.noise.to_string(), r.epsilon.to_string(), opt(r.alpha)])?;
    }
    w.flush()?;
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<&str> {
    rec.get(i)
        .ok_or_else(|| Error::Results(format!("line {line}: missing column {i}")))
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let s = field(rec, i, line)?;
    s.parse()
        .map_err(|_| Error::Results(format!("line {line}: cannot parse '{s}' in column {i}")))
}

fn opt_num(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<f64>> {
    if field(rec, i, line)?.is_empty() {
        Ok(None)
    } else {
        num(rec, i, line).map(Some)
    }
}

fn check_header(rec: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    if rec.iter().ne(expected.iter().copied()) {
        return Err(Error::Results(format!("{}: unexpected header", path.display())));
    }
    Ok(())
}

fn results_from_csv(path: &Path) -> Result<Vec<CellResult>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = rdr.records();
    let head = records
        .next()
        .ok_or_else(|| Error::Results(format!("{}: empty file", path.display())))??;
    check_header(&head, &RESULTS_HEADER, path)?;
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != RESULTS_HEADER.len() {
            return Err(Error::Results(format!("line {line}: expected {} columns", RESULTS_HEADER.len())));
        }
        let scenario: Scenario = field(&rec, 0, line)?.parse()?;
        let noise: NoiseKind = field(&rec, 1, line)?.parse()?;
        out.push(CellResult {
            scenario,
            noise,
            alpha: num(&rec, 2, line)?,
            epsilon: num(&rec, 3, line)?,
            seed: num(&rec, 4, line)?,
            episodes: num(&rec, 5, line)?,
            aborted: num(&rec, 6, line)?,
            mean_fidelity: num(&rec, 7, line)?,
            std_fidelity: num(&rec, 8, line)?,
            curve_mean: Vec::new(),
            curve_std: Vec::new(),
            mean_steps_to_threshold: opt_num(&rec, 9, line)?,
            std_steps_to_threshold: opt_num(&rec, 10, line)?,
            unreached_count: num(&rec, 11, line)?,
        });
    }
    Ok(out)
}

fn attach_curves(path: &Path, results: &mut [CellResult]) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = rdr.records();
    let head = records
        .next()
        .ok_or_else(|| Error::Results(format!("{}: empty file", path.display())))??;
    check_header(&head, &CURVES_HEADER, path)?;
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        index.insert(r.id(), i);
    }
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let scenario: Scenario = field(&rec, 0, line)?.parse()?;
        let noise: NoiseKind = field(&rec, 1, line)?.parse()?;
        let alpha: f64 = num(&rec, 2, line)?;
        let epsilon: f64 = num(&rec, 3, line)?;
        let t: usize = num(&rec, 4, line)?;
        let id = super::cell_id(scenario, noise, alpha, epsilon);
        let &i = index
            .get(&id)
            .ok_or_else(|| Error::Results(format!("line {line}: curve for unknown cell {id}")))?;
        let r = &mut results[i];
        if t != r.curve_mean.len() {
            return Err(Error::Results(format!("line {line}: curve steps out of order for {id}")));
        }
        r.curve_mean.push(num(&rec, 5, line)?);
        r.curve_std.push(num(&rec, 6, line)?);
    }
    Ok(())
}

/// Reads `results.csv` and, when present, `curves.csv` from `dir`.
pub fn read_results(dir: &Path) -> Result<Vec<CellResult>> {
    let mut results = results_from_csv(&dir.join("results.csv"))?;
    let curves = dir.join("curves.csv");
    if curves.exists() {
        attach_curves(&curves, &mut results)?;
    }
    Ok(results)
}

pub(crate) fn write_cell(dir: &Path, r: &CellResult) -> Result<()> {
    let id = r.id();
    write_results_csv(&dir.join(format!("{id}.csv")), std::slice::from_ref(r))?;
    write_curves_csv(&dir.join(format!("{id}.curve.csv")), std::slice::from_ref(r))
}

pub(crate) fn read_cell(dir: &Path, id: &str) -> Result<CellResult> {
    let mut rows = results_from_csv(&dir.join(format!("{id}.csv")))?;
    if rows.len() != 1 {
        return Err(Error::Results(format!("cell file {id}.csv must hold one row")));
    }
    attach_curves(&dir.join(format!("{id}.curve.csv")), &mut rows)?;
    Ok(rows.pop().expect("one row"))
}

/// Writes results.csv, curves.csv, thresholds.csv and two charts per noise
/// kind. Returns the written paths in order.
pub fn emit_report(results: &[CellResult], thresholds: &[ThresholdRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::Results("no results to report".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let p = out_dir.join("results.csv");
    write_results_csv(&p, results)?;
    written.push(p);
    let p = out_dir.join("curves.csv");
    write_curves_csv(&p, results)?;
    written.push(p);
    let p = out_dir.join("thresholds.csv");
    write_thresholds_csv(&p, thresholds)?;
    written.push(p);

    let mut noises: Vec<NoiseKind> = results.iter().map(|r| r.noise).collect();
    noises.sort();
    noises.dedup();
    for noise in noises {
        let cells: Vec<&CellResult> = results.iter().filter(|r| r.noise == noise).collect();
        let fid = chart(
            &format!("terminal fidelity, {noise}"),
            "mean terminal fidelity",
            &series(&cells, |r| Some((r.mean_fidelity, r.std_fidelity))),
            Some((0.0, 1.0)),
        );
        let p = out_dir.join(format!("fidelity_{noise}.svg"));
        fs::write(&p, fid)?;
        written.push(p);
        let steps = chart(
            &format!("steps to threshold, {noise}"),
            "mean steps to threshold",
            &series(&cells, |r| r.mean_steps_to_threshold.zip(r.std_steps_to_threshold)),
            None,
        );
        let p = out_dir.join(format!("steps_{noise}.svg"));
        fs::write(&p, steps)?;
        written.push(p);
    }
    Ok(written)
}

struct Series {
    label: String,
    /// (α, mean, std); `None` entries break the line.
    points: Vec<(f64, Option<(f64, f64)>)>,
}

fn series(cells: &[&CellResult], metric: impl Fn(&CellResult) -> Option<(f64, f64)>) -> Vec<Series> {
    let mut keys: Vec<(Scenario, f64)> = cells.iter().map(|r| (r.scenario, r.epsilon)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(s, e)| {
            let mut pts: Vec<&&CellResult> = cells.iter().filter(|r| r.scenario == s && r.epsilon == e).collect();
            pts.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            Series {
                label: format!("{s} eps={e}"),
                points: pts
                    .iter()
                    .map(|r| (r.alpha, metric(r).filter(|(m, s)| m.is_finite() && s.is_finite())))
                    .collect(),
            }
        })
        .collect()
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn chart(title: &str, y_label: &str, series: &[Series], y_range: Option<(f64, f64)>) -> String {
    let (w, h) = (820.0, 460.0);
    let (left, right, top, bottom) = (70.0, 600.0, 40.0, 400.0);
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 0.1;
    }
    let (y0, y1) = y_range.unwrap_or_else(|| {
        let top = series
            .iter()
            .flat_map(|s| s.points.iter().filter_map(|p| p.1.map(|(m, s)| m + s)))
            .fold(1.0_f64, f64::max);
        (0.0, top.ceil())
    });
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let py = |y: f64| bottom - (y.clamp(y0, y1) - y0) / (y1 - y0) * (bottom - top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, (left + right) / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.2}</text>"#,
            px(fx),
            bottom + 18.0,
            fx
        );
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"##,
            left - 6.0,
            py(fy) + 4.0,
            fy,
            y = py(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">noise strength alpha</text>"#,
        (left + right) / 2.0,
        bottom + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (top + bottom) / 2.0
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for run in ser.points.split(|p| p.1.is_none()).filter(|r| !r.is_empty()) {
            let pts: Vec<(f64, f64, f64)> = run.iter().map(|(x, v)| (*x, v.unwrap().0, v.unwrap().1)).collect();
            let mut band = String::new();
            for &(x, m, sd) in &pts {
                let _ = write!(band, "{:.2},{:.2} ", px(x), py(m + sd));
            }
            for &(x, m, sd) in pts.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", px(x), py(m - sd));
            }
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                band.trim_end()
            );
            let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
            for &(x, m, _) in &pts {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(m));
            }
        }
        let ly = top + 14.0 * k as f64 + 6.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            right + 20.0,
            right + 40.0,
            right + 46.0,
            ly + 4.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}
