//! Seed-averaged learning curves with t-based confidence bands, and a
//! minimal SVG chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::train::MetricsRow;
use crate::error::{Error, Result};

pub const DEFAULT_BIN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub env: String,
    pub bin: usize,
    pub episode_start: u64,
    pub episode_end: u64,
    pub n_seeds: usize,
    pub mean: f64,
    /// Half-width of the 95% interval; empty with fewer than two seeds.
    pub ci_half_width: Option<f64>,
}

/// Mean and 95% t-interval half-width of `xs`; no interval for fewer than
/// two values.
pub fn mean_ci(xs: &[f64]) -> Result<(f64, Option<f64>)> {
    if xs.is_empty() {
        return Err(Error::NoData("no values to summarize".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Ok((mean, None));
    }
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Config(e.to_string()))?
        .inverse_cdf(0.975);
    Ok((mean, Some(t * sd / n.sqrt())))
}

/// Bins each seed's episodes by `bin` and averages across seeds. Returns the
/// rows plus warnings for groups with a single seed.
pub fn summarize(rows: &[MetricsRow], bin: usize) -> Result<(Vec<SummaryRow>, Vec<String>)> {
    if bin == 0 {
        return Err(Error::Config("bin width must be positive".into()));
    }
    if rows.is_empty() {
        return Err(Error::NoData("metrics contain no episodes".into()));
    }
    // (variant, env) -> seed -> bin -> (sum, count)
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, BTreeMap<usize, (f64, usize)>>> = BTreeMap::new();
    for r in rows {
        let b = (r.episode / bin as u64) as usize;
        let cell = groups
            .entry((r.variant.clone(), r.env.clone()))
            .or_default()
            .entry(r.seed)
            .or_default()
            .entry(b)
            .or_insert((0.0, 0));
        cell.0 += r.mean_episode_reward;
        cell.1 += 1;
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for ((variant, env), seeds) in groups {
        if seeds.len() < 2 {
            warnings.push(format!(
                "{variant}/{env}: only one seed, reporting the mean without an interval"
            ));
        }
        let bins: std::collections::BTreeSet<usize> = seeds.values().flat_map(|b| b.keys().copied()).collect();
        for b in bins {
            let values: Vec<f64> = seeds
                .values()
                .filter_map(|m| m.get(&b).map(|(s, c)| s / *c as f64))
                .collect();
            let (mean, ci) = mean_ci(&values)?;
            out.push(SummaryRow {
                variant: variant.clone(),
                env: env.clone(),
                bin: b,
                episode_start: (b * bin) as u64,
                episode_end: ((b + 1) * bin) as u64,
                n_seeds: values.len(),
                mean,
                ci_half_width: ci,
            });
        }
    }
    Ok((out, warnings))
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    if rows.is_empty() {
        w.write_record([
            "variant",
            "env",
            "bin",
            "episode_start",
            "episode_end",
            "n_seeds",
            "mean",
            "ci_half_width",
        ])
        .map_err(err)?;
    }
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|row| row.map_err(err)).collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart of the binned means with shaded intervals, one series per
/// (variant, env).
pub fn render_svg(rows: &[SummaryRow]) -> String {
    let (w, h) = (800.0, 480.0);
    let (left, right, top, bottom) = (70.0, 180.0, 30.0, 50.0);
    let mut series: BTreeMap<(String, String), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        series.entry((r.variant.clone(), r.env.clone())).or_default().push(r);
    }
    let x_of = |r: &SummaryRow| (r.episode_start + r.episode_end) as f64 / 2.0;
    let lo = |r: &SummaryRow| r.mean - r.ci_half_width.unwrap_or(0.0);
    let hi = |r: &SummaryRow| r.mean + r.ci_half_width.unwrap_or(0.0);
    let fold = |it: &mut dyn Iterator<Item = f64>| it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (mut x0, mut x1) = fold(&mut rows.iter().map(x_of));
    let (mut y0, mut y1) = fold(&mut rows.iter().flat_map(|r| [lo(r), hi(r)]));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
        l = left,
        t = top,
        b = h - bottom,
        r = w - right
    );
    for (val, y) in [(y0, py(y0)), (y1, py(y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#, left - 6.0, y + 4.0, val);
    }
    for (val, x) in [(x0, px(x0)), (x1, px(x1))] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.0}</text>"#, x, h - bottom + 18.0, val);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">episode</text>"#, (left + w - right) / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">mean episode reward</text>"#, (top + h - bottom) / 2.0, (top + h - bottom) / 2.0);
    for (i, ((variant, env), pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if pts.iter().any(|r| r.ci_half_width.is_some()) {
            let mut d = String::new();
            for (k, r) in pts.iter().enumerate() {
                let _ = write!(d, "{}{:.2} {:.2} ", if k == 0 { "M" } else { "L" }, px(x_of(r)), py(hi(r)));
            }
            for r in pts.iter().rev() {
                let _ = write!(d, "L{:.2} {:.2} ", px(x_of(r)), py(lo(r)));
            }
            let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, d);
        }
        let points: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", px(x_of(r)), py(r.mean))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, points.join(" "));
        let ly = top + 16.0 * i as f64 + 8.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - right + 10.0, w - right + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{variant} ({env})</text>"#, w - right + 36.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    fs::write(path, render_svg(rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, episode: u64, reward: f64) -> MetricsRow {
        MetricsRow {
            variant: "ippo".into(),
            env: "spread".into(),
            seed,
            global_step: episode * 25,
            episode,
            mean_episode_reward: reward,
            policy_loss: None,
            value_loss: None,
            entropy: None,
            approx_kl: None,
        }
    }

    #[test]
    fn identical_seeds_have_zero_width() {
        let rows: Vec<MetricsRow> = (0..3).flat_map(|s| (0..10).map(move |e| row(s, e, e as f64))).collect();
        let (sum, warn) = summarize(&rows, 5).unwrap();
        assert!(warn.is_empty());
        assert_eq!(sum.len(), 2);
        assert!(sum.iter().all(|r| r.ci_half_width == Some(0.0)));
        assert_eq!(sum[0].mean, 2.0);
    }

    #[test]
    fn two_constant_curves() {
        let rows: Vec<MetricsRow> = (0..4).flat_map(|e| [row(0, e, 0.0), row(1, e, 1.0)]).collect();
        let (sum, _) = summarize(&rows, 100).unwrap();
        assert_eq!(sum.len(), 1);
        assert_eq!(sum[0].mean, 0.5);
        // sd = 1/sqrt(2), n = 2: half-width = t(0.975, 1) * 0.5.
        let t1 = 12.706204736174698;
        assert!((sum[0].ci_half_width.unwrap() - 0.5 * t1).abs() < 1e-6);
    }

    #[test]
    fn single_seed_has_no_interval() {
        let rows: Vec<MetricsRow> = (0..4).map(|e| row(7, e, -1.0)).collect();
        let (sum, warn) = summarize(&rows, 2).unwrap();
        assert_eq!(warn.len(), 1);
        assert!(sum.iter().all(|r| r.ci_half_width.is_none() && r.mean == -1.0));
        assert!(summarize(&[], 2).is_err());
    }

    #[test]
    fn svg_has_band_and_line() {
        let rows: Vec<MetricsRow> = (0..2).flat_map(|s| (0..20).map(move |e| row(s, e, e as f64 + s as f64))).collect();
        let (sum, _) = summarize(&rows, 5).unwrap();
        let svg = render_svg(&sum);
        assert!(svg.starts_with("<svg") && svg.contains("<polyline") && svg.contains("fill-opacity"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_summary(&p, &sum).unwrap();
        assert_eq!(read_summary(&p).unwrap(), sum);
    }
}
