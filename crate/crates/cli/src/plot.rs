//! Scatter rendering for prediction dumps. SVG output draws one panel per
//! algorithm with points colored by predicted class and misclassified points
//! ringed; CSV output regroups rows into per-algorithm blocks separated by
//! blank lines, the layout gnuplot's `index` directive expects.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

const PALETTE: &[&str] = &[
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];

struct Row {
    x: f64,
    y: f64,
    truth: Option<usize>,
    predicted: usize,
}

type Groups = BTreeMap<String, Vec<Row>>;

fn read_predictions(path: &Path) -> Result<Groups, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x,y,true,predicted,algorithm" => {}
        other => {
            return Err(format!(
                "expected header `x,y,true,predicted,algorithm`, got {:?}",
                other.map(|(_, l)| l)
            ))
        }
    }
    let mut groups: Groups = BTreeMap::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(format!("line {}: expected 5 fields", idx + 1));
        }
        let parse = |v: &str| -> Result<f64, String> {
            v.parse().map_err(|e| format!("line {}: {e}", idx + 1))
        };
        let truth = if fields[2].is_empty() {
            None
        } else {
            Some(
                fields[2]
                    .parse::<usize>()
                    .map_err(|e| format!("line {}: {e}", idx + 1))?,
            )
        };
        groups.entry(fields[4].to_string()).or_default().push(Row {
            x: parse(fields[0])?,
            y: parse(fields[1])?,
            truth,
            predicted: fields[3]
                .parse()
                .map_err(|e| format!("line {}: {e}", idx + 1))?,
        });
    }
    if groups.is_empty() {
        return Err("predictions file has no data rows".into());
    }
    Ok(groups)
}

pub fn plot(predictions: &Path, output: &Path) -> Result<(), String> {
    let groups = read_predictions(predictions)?;
    let rendered = match output.extension().and_then(|e| e.to_str()) {
        Some("svg") => render_svg(&groups),
        _ => render_gnuplot_csv(&groups),
    };
    std::fs::write(output, rendered).map_err(|e| format!("{}: {e}", output.display()))?;
    eprintln!("wrote {}", output.display());
    Ok(())
}

fn render_gnuplot_csv(groups: &Groups) -> String {
    let mut out = String::new();
    for (name, rows) in groups {
        let _ = writeln!(out, "# algorithm: {name}");
        let _ = writeln!(out, "# x y true predicted");
        for r in rows {
            let truth = r.truth.map(|t| t.to_string()).unwrap_or_else(|| "?".into());
            let _ = writeln!(out, "{} {} {} {}", r.x, r.y, truth, r.predicted);
        }
        out.push('\n');
    }
    out
}

fn render_svg(groups: &Groups) -> String {
    let panel = 260.0;
    let margin = 34.0;
    let cols = groups.len().min(3);
    let rows_of_panels = groups.len().div_ceil(cols);
    let width = cols as f64 * (panel + margin) + margin;
    let height = rows_of_panels as f64 * (panel + margin) + margin;

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for rows in groups.values() {
        for r in rows {
            min_x = min_x.min(r.x);
            max_x = max_x.max(r.x);
            min_y = min_y.min(r.y);
            max_y = max_y.max(r.y);
        }
    }
    let pad = 0.05;
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    min_x -= pad * span_x;
    max_x += pad * span_x;
    min_y -= pad * span_y;
    max_y += pad * span_y;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (panel_idx, (name, rows)) in groups.iter().enumerate() {
        let col = panel_idx % cols;
        let row = panel_idx / cols;
        let ox = margin + col as f64 * (panel + margin);
        let oy = margin + row as f64 * (panel + margin);
        let _ = writeln!(
            svg,
            r##"<rect x="{ox:.1}" y="{oy:.1}" width="{panel:.1}" height="{panel:.1}" fill="none" stroke="#444" stroke-width="1"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="13" text-anchor="middle">{name}</text>"#,
            ox + panel / 2.0,
            oy - 8.0
        );
        for r in rows {
            let px = ox + (r.x - min_x) / (max_x - min_x) * panel;
            let py = oy + panel - (r.y - min_y) / (max_y - min_y) * panel;
            let color = PALETTE[r.predicted % PALETTE.len()];
            let wrong = r.truth.is_some_and(|t| t != r.predicted);
            let stroke = if wrong { r#" stroke="red" stroke-width="1.5""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.6" fill="{color}"{stroke}/>"#
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
