//! Minimal SVG line plots of CSV columns.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// One polyline of `ys` against `xs`; non-finite points are skipped.
pub fn line_svg(x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> String {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (*x, *y)).collect();
    let range = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = range(&mut pts.iter().map(|p| p.1));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {b} H{r} M{m} {b} V{m}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (v, x, y, anchor) in [
        (x0, MARGIN, HEIGHT - MARGIN + 18.0, "start"),
        (x1, WIDTH - MARGIN, HEIGHT - MARGIN + 18.0, "end"),
        (y0, MARGIN - 6.0, HEIGHT - MARGIN, "end"),
        (y1, MARGIN - 6.0, MARGIN + 4.0, "end"),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" font-size="11" text-anchor="{anchor}">{v:.4e}</text>"#);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{x_label}</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    if !pts.is_empty() {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="steelblue" stroke-width="1.2" fill="none"/>"#, path.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

/// One SVG per numeric column of `csv_path`, plotted against the first
/// column. Returns the files written.
pub fn plot_csv(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut rdr = csv::Reader::from_path(csv_path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", csv_path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::usage(format!("{}: {e}", csv_path.display())))?
        .iter()
        .map(String::from)
        .collect();
    if headers.len() < 2 {
        return Err(CliError::usage("need an x column and at least one value column"));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", csv_path.display())))?;
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            col.push(field.trim().parse().unwrap_or(f64::NAN));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let mut written = Vec::new();
    for (name, ys) in headers.iter().zip(&columns).skip(1) {
        if !ys.iter().any(|y| y.is_finite()) {
            continue;
        }
        let path = out_dir.join(format!("{stem}_{name}.svg"));
        std::fs::write(&path, line_svg(&headers[0], name, &columns[0], ys))?;
        written.push(path);
    }
    Ok(written)
}
