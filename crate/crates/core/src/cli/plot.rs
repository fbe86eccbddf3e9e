use std::fmt::Write as _;
use std::path::Path;

use super::{plain_out_dir, write_file, PlotArgs};
use crate::data::{self, EpochSet};
use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

/// One plotted waveform over the zoom window.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1b7837", "#b2182b", "#2166ac", "#e08214", "#762a83", "#4d4d4d"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// `sample,time_s,<label>...`, one row per window sample.
pub fn plot_csv(series: &[Series], start: usize) -> String {
    let mut s = String::from("sample,time_s");
    for x in series {
        s.push(',');
        s.push_str(&x.label.replace(',', ";"));
    }
    s.push('\n');
    let len = series.first().map_or(0, |x| x.values.len());
    for i in 0..len {
        let n = start + i;
        let _ = write!(s, "{n},{}", n as f64 / SAMPLE_RATE);
        for x in series {
            let _ = write!(s, ",{}", x.values[i]);
        }
        s.push('\n');
    }
    s
}

/// Overlaid polylines with a shared y range, a time axis in seconds and a
/// legend. Output depends only on the inputs.
pub fn plot_svg(series: &[Series], start: usize, title: &str) -> String {
    let len = series.first().map_or(0, |x| x.values.len());
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|x| x.values.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(lo < hi) {
        lo = if lo.is_finite() { lo - 1.0 } else { -1.0 };
        hi = lo + 2.0;
    }
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let px = |i: usize| MARGIN + pw * i as f64 / (len.max(2) - 1) as f64;
    let py = |v: f64| MARGIN + ph * (hi - v) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="20">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>"##
    );
    let t0 = start as f64 / SAMPLE_RATE;
    let t1 = (start + len.saturating_sub(1)) as f64 / SAMPLE_RATE;
    let bottom = HEIGHT - MARGIN + 16.0;
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{bottom}">{t0:.3} s</text>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{bottom}" text-anchor="end">{t1:.3} s</text>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(s, r#"<text x="4" y="{}">{hi:.3}</text>"#, MARGIN + 4.0);
    let _ = writeln!(s, r#"<text x="4" y="{}">{lo:.3}</text>"#, HEIGHT - MARGIN);
    for (j, x) in series.iter().enumerate() {
        let color = COLORS[j % COLORS.len()];
        let pts: Vec<String> = x
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 14.0 + 16.0 * j as f64;
        let lx = WIDTH - MARGIN - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 24.0, escape(&x.label));
    }
    s.push_str("</svg>\n");
    s
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or("denoised".into(), |s| s.to_string_lossy().into_owned())
}

pub(crate) fn cmd_plot(a: &PlotArgs) -> Result<()> {
    if !a.label.is_empty() && a.label.len() != a.denoised.len() {
        return Err(Error::Parameter(format!(
            "{} labels for {} denoised files",
            a.label.len(),
            a.denoised.len()
        )));
    }
    let mut sets: Vec<(String, EpochSet)> = vec![
        ("clean".into(), data::load_epochs(&a.clean, None)?),
        ("noisy".into(), data::load_epochs(&a.noisy, None)?),
    ];
    for (i, p) in a.denoised.iter().enumerate() {
        let label = a.label.get(i).cloned().unwrap_or_else(|| stem(p));
        sets.push((label, data::load_epochs(p, None)?));
    }
    let count = sets[0].1.len();
    if let Some((name, s)) = sets.iter().find(|(_, s)| s.len() != count) {
        return Err(Error::Dimension(format!(
            "`{name}` has {} epochs, clean has {count}",
            s.len()
        )));
    }
    if a.epoch >= count {
        return Err(Error::Parameter(format!("epoch {} out of range ({count} epochs)", a.epoch)));
    }
    let n = crate::EPOCH_LEN;
    let len = a.len.unwrap_or(n.saturating_sub(a.start));
    if len == 0 || a.start + len > n {
        return Err(Error::Parameter(format!(
            "window [{}, {}) outside the {n}-sample epoch",
            a.start,
            a.start + len
        )));
    }
    let series: Vec<Series> = sets
        .iter()
        .map(|(label, s)| Series {
            label: label.clone(),
            values: s.epoch_f64(a.epoch)[a.start..a.start + len].to_vec(),
        })
        .collect();
    let out = plain_out_dir(&a.out)?;
    let title = format!("epoch {}, samples {}..{}", a.epoch, a.start, a.start + len);
    write_file(&out.join("plot.svg"), plot_svg(&series, a.start, &title))?;
    write_file(&out.join("plot.csv"), plot_csv(&series, a.start))?;
    println!("wrote {}", out.join("plot.svg").display());
    Ok(())
}
