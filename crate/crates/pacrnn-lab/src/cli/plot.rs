use std::collections::BTreeSet;
use std::fmt::Write;

use super::metrics::RunLabel;
use crate::pacrnn::Variant;
use crate::trainer::EpochRecord;

/// One metrics log with its label.
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub label: RunLabel,
    pub records: Vec<EpochRecord>,
}

const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 280.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn panel(out: &mut String, x0: f64, title: &str, series: &[Series], value: impl Fn(&EpochRecord) -> f64) {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.records.iter().map(|r| (r.epoch as f64, value(r))))
        .filter(|(_, y)| y.is_finite())
        .collect();
    let max_epoch = points.iter().map(|p| p.0).fold(1.0, f64::max);
    let (mut lo, mut hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let sx = |e: f64| x0 + MARGIN + (e - 1.0).max(0.0) / (max_epoch - 1.0).max(1.0) * (PANEL_W - 1.5 * MARGIN);
    let sy = |v: f64| MARGIN + (hi - v) / (hi - lo) * (PANEL_H - 2.0 * MARGIN);
    let (left, right, top, bottom) = (x0 + MARGIN, x0 + PANEL_W - MARGIN / 2.0, MARGIN, PANEL_H - MARGIN);
    let _ = writeln!(out, r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##, right - left, bottom - top);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#, (left + right) / 2.0, top - 12.0, escape(title));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">epoch</text>"#, (left + right) / 2.0, bottom + 32.0);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{:.3}</text>"#, left - 4.0, sy(v) + 3.0, v);
    }
    let _ = writeln!(out, r#"<text x="{left}" y="{}" text-anchor="middle" font-size="10">1</text>"#, bottom + 14.0);
    let _ = writeln!(out, r#"<text x="{right}" y="{}" text-anchor="middle" font-size="10">{}</text>"#, bottom + 14.0, max_epoch);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .records
            .iter()
            .filter(|r| value(r).is_finite())
            .map(|r| format!("{:.1},{:.1}", sx(r.epoch as f64), sy(value(r))))
            .collect();
        let colour = COLOURS[i % COLOURS.len()];
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, pts.join(" "));
    }
}

/// Dev FER and dev objective against epoch, one line per series.
pub fn learning_curves_svg(title: &str, series: &[Series]) -> String {
    let legend_h = 18.0 * series.len() as f64 + 10.0;
    let (w, h) = (2.0 * PANEL_W + 20.0, PANEL_H + legend_h + 20.0);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !title.is_empty() {
        let _ = writeln!(out, r#"<title>{}</title>"#, escape(title));
    }
    panel(&mut out, 0.0, "dev frame error rate", series, |r| r.dev_fer);
    panel(&mut out, PANEL_W + 20.0, "dev objective (mean J per frame)", series, |r| r.dev_j);
    for (i, s) in series.iter().enumerate() {
        let y = PANEL_H + 14.0 + 18.0 * i as f64;
        let colour = COLOURS[i % COLOURS.len()];
        let _ = writeln!(out, r#"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="3"/>"#, MARGIN + 24.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, MARGIN + 30.0, y + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn variant_rank(name: &str) -> usize {
    Variant::ALL.iter().position(|v| v.name() == name).unwrap_or(Variant::ALL.len())
}

/// Markdown summary: final dev FER of every variant on every corpus, then
/// the per-epoch table of each log.
pub fn summary_markdown(title: &str, series: &[Series]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", if title.is_empty() { "Training summary" } else { title });
    let corpora: BTreeSet<&str> = series.iter().map(|s| s.label.corpus.as_str()).collect();
    let mut rows: Vec<&str> = series.iter().map(|s| s.label.variant.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    rows.sort_by_key(|v| (variant_rank(v), v.to_string()));
    let _ = writeln!(out, "## Final dev FER (%)\n");
    let header: Vec<&str> = corpora.iter().map(|c| if c.is_empty() { "-" } else { c }).collect();
    let _ = writeln!(out, "| model | {} |", header.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(corpora.len()));
    for v in rows {
        let cells: Vec<String> = corpora
            .iter()
            .map(|c| {
                series
                    .iter()
                    .filter(|s| s.label.variant == v && s.label.corpus == *c)
                    .filter_map(|s| s.records.last())
                    .last()
                    .map_or("".into(), |r| format!("{:.1}", 100.0 * r.dev_fer))
            })
            .collect();
        let _ = writeln!(out, "| {} | {} |", v, cells.join(" | "));
    }
    for s in series {
        let _ = writeln!(out, "\n## {}\n", s.name);
        let _ = writeln!(out, "| epoch | learning rate | momentum | train J | dev J | dev FER |");
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for r in &s.records {
            let _ = writeln!(
                out,
                "| {} | {:.6} | {:.2} | {:.4} | {:.4} | {:.4} |",
                r.epoch, r.learning_rate, r.momentum, r.train_j, r.dev_j, r.dev_fer
            );
        }
    }
    out
}

/// Number of data rows in the epoch table of `name` in a summary.
pub fn epoch_rows(summary: &str, name: &str) -> usize {
    let heading = format!("## {}", name);
    summary
        .lines()
        .skip_while(|l| *l != heading)
        .skip(4)
        .take_while(|l| l.starts_with('|'))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, fer: f64) -> EpochRecord {
        EpochRecord { epoch, learning_rate: 0.1, momentum: 0.9, train_j: -1.0, dev_j: -1.2, dev_fer: fer }
    }

    fn series(name: &str, variant: &str, corpus: &str, fers: &[f64]) -> Series {
        Series {
            name: name.into(),
            label: RunLabel { variant: variant.into(), corpus: corpus.into(), stage: "train".into() },
            records: fers.iter().enumerate().map(|(i, &f)| record(i + 1, f)).collect(),
        }
    }

    #[test]
    fn summary_has_grid_and_epoch_rows() {
        let s = vec![
            series("a", "pacrnn-dnn", "toy", &[0.9, 0.5, 0.3]),
            series("b", "dnn", "toy", &[0.9, 0.6]),
            series("c", "dnn", "other", &[0.8]),
        ];
        let md = summary_markdown("", &s);
        assert!(md.contains("| model | other | toy |"));
        let dnn = md.lines().position(|l| l.starts_with("| dnn |")).unwrap();
        let pac = md.lines().position(|l| l.starts_with("| pacrnn-dnn |")).unwrap();
        assert!(dnn < pac, "rows follow variant order");
        assert!(md.contains("| dnn | 80.0 | 60.0 |"));
        assert!(md.contains("| pacrnn-dnn |  | 30.0 |"));
        assert_eq!(epoch_rows(&md, "a"), 3);
        assert_eq!(epoch_rows(&md, "b"), 2);
    }

    #[test]
    fn svg_has_one_line_per_series() {
        let s = vec![series("a<b", "dnn", "toy", &[0.9, 0.5]), series("flat", "lstm", "toy", &[0.4])];
        let svg = learning_curves_svg("t", &s);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }
}
