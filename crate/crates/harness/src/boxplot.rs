//! Five-number boxplots rendered as plain SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{HarnessError, Result};
use crate::output::CsvTable;

/// Minimum, quartiles (linear interpolation between order statistics) and
/// maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self { min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
    }
}

/// Group key ordered numerically when both keys parse as numbers.
#[derive(Debug, Clone, PartialEq)]
struct Key(String);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self.0.parse::<f64>(), other.0.parse::<f64>()) {
            (Ok(a), Ok(b)) => a.total_cmp(&b).then_with(|| self.0.cmp(&other.0)),
            _ => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// `(group key, summary)` in key order.
pub fn grouped_summaries(table: &CsvTable, group: &str, value: &str) -> Result<Vec<(String, FiveNumber)>> {
    let gi = table.column(group)?;
    let vi = table.column(value)?;
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for (n, row) in table.rows.iter().enumerate() {
        let cell = row.get(vi).ok_or_else(|| HarnessError::Csv(format!("row {} is short", n + 1)))?;
        let v: f64 = cell.parse().map_err(|_| HarnessError::Csv(format!("row {}: {value} = {cell:?}", n + 1)))?;
        if !v.is_finite() {
            return Err(HarnessError::Csv(format!("row {}: {value} is not finite", n + 1)));
        }
        groups.entry(Key(row[gi].clone())).or_default().push(v);
    }
    if groups.is_empty() {
        return Err(HarnessError::Csv("no data rows".into()));
    }
    Ok(groups.into_iter().map(|(k, v)| (k.0, FiveNumber::of(&v).expect("nonempty"))).collect())
}

const BOX_W: f64 = 80.0;
const PITCH: f64 = 120.0;
const LEFT: f64 = 90.0;
const TOP: f64 = 40.0;
const PLOT_H: f64 = 320.0;

/// Renders the summaries. The value axis is logarithmic when every value is
/// positive and the range spans more than two decades.
pub fn render_svg(title: &str, group: &str, value: &str, boxes: &[(String, FiveNumber)]) -> String {
    let lo = boxes.iter().map(|b| b.1.min).fold(f64::INFINITY, f64::min);
    let hi = boxes.iter().map(|b| b.1.max).fold(f64::NEG_INFINITY, f64::max);
    let log = lo > 0.0 && hi / lo > 100.0;
    let t = |v: f64| if log { v.log10() } else { v };
    let (mut a, mut b) = (t(lo), t(hi));
    if b - a <= 1e-12 * (1.0 + a.abs()) {
        a -= 0.5 * (1.0 + a.abs());
        b += 0.5 * (1.0 + b.abs());
    }
    let pad = 0.05 * (b - a);
    let (a, b) = (a - pad, b + pad);
    let y = |v: f64| TOP + PLOT_H * (1.0 - (t(v) - a) / (b - a));
    let width = LEFT + PITCH * boxes.len() as f64 + 30.0;
    let height = TOP + PLOT_H + 70.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.1}" y1="{TOP:.1}" x2="{LEFT:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + PLOT_H
    );
    for i in 0..=4 {
        let tv = a + (b - a) * i as f64 / 4.0;
        let v = if log { 10f64.powf(tv) } else { tv };
        let py = y(v);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT:.1}" y2="{py:.1}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">{}{}</text>"#,
        TOP + PLOT_H / 2.0,
        escape(value),
        if log { " (log scale)" } else { "" }
    );
    for (i, (key, f)) in boxes.iter().enumerate() {
        let cx = LEFT + PITCH * (i as f64 + 0.5);
        let x0 = cx - BOX_W / 2.0;
        let _ = writeln!(s, r#"<g class="box" data-group="{}">"#, escape(key));
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(f.max),
            y(f.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(f.q1),
            y(f.min)
        );
        for v in [f.min, f.max] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
                cx - BOX_W / 4.0,
                y(v),
                cx + BOX_W / 4.0,
                y(v)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.1}" y="{:.1}" width="{BOX_W:.1}" height="{:.1}" fill="#cfe0f3" stroke="black"/>"##,
            y(f.q3),
            y(f.q1) - y(f.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x0:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            y(f.median),
            x0 + BOX_W,
            y(f.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + PLOT_H + 20.0,
            escape(key)
        );
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + PITCH * boxes.len() as f64 / 2.0,
        TOP + PLOT_H + 50.0,
        escape(group)
    );
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Default `(group, value)` columns per table kind.
pub fn default_columns(kind: &str) -> Option<(&'static str, &'static str)> {
    match kind {
        "hazard_bisection" => Some(("K", "error")),
        "linear_gaussian_singletons" | "custom" => Some(("K", "rho_max")),
        _ => None,
    }
}

pub fn emit_boxplot(csv: &[u8], group: Option<&str>, value: Option<&str>) -> Result<String> {
    let table = CsvTable::parse(csv)?;
    let (g, v) = match (group, value, default_columns(&table.kind)) {
        (Some(g), Some(v), _) => (g, v),
        (g, v, Some((dg, dv))) => (g.unwrap_or(dg), v.unwrap_or(dv)),
        _ => return Err(HarnessError::Csv(format!("no default columns for {:?}; pass --group and --value", table.kind))),
    };
    let boxes = grouped_summaries(&table, g, v)?;
    Ok(render_svg(&format!("{} by {}", v, g), g, v, &boxes))
}
