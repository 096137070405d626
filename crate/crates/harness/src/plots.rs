//! SVG figures from aggregate CSVs.

use std::path::{Path, PathBuf};

use ac_core::critic::CriticMethod;
use plotters::prelude::*;

use crate::error::{HarnessError, Result};
use crate::experiment::{read_aggregate, AggregateRow};

/// Evaluation return above which a trajectory counts as solved.
pub const SOLVED_REWARD: f64 = -180.0;

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn label(method: &str) -> String {
    method
        .parse::<CriticMethod>()
        .map(|m| m.label().to_string())
        .unwrap_or_else(|_| method.to_string())
}

/// Groups rows by method, with known methods first in their usual order.
fn by_method(rows: &[AggregateRow]) -> Vec<(String, Vec<(f64, f64, f64)>)> {
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let rank = |m: &String| {
        CriticMethod::ALL
            .iter()
            .position(|c| c.tag() == m)
            .unwrap_or(CriticMethod::ALL.len())
    };
    methods.sort_by_key(rank);
    methods
        .into_iter()
        .map(|m| {
            let pts = rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.k as f64, r.grad_proxy_mean, r.eval_reward_mean))
                .collect();
            (m, pts)
        })
        .collect()
}

fn draw(
    path: &Path,
    title: &str,
    y_desc: &str,
    series: &[(String, Vec<(f64, f64)>)],
    marker: Option<f64>,
) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| HarnessError::data(path, e.to_string());
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts.filter(|(_, y)| y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if let Some(m) = marker {
        y0 = y0.min(m);
        y1 = y1.max(m);
    }
    if x0 > x1 {
        return Err(HarnessError::data(path, "no finite points to plot"));
    }
    if x0 == x1 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-9);
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("actor updates")
        .y_desc(y_desc)
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(label(name))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    if let Some(m) = marker {
        chart
            .draw_series(LineSeries::new(vec![(x0, m), (x1, m)], BLACK.stroke_width(1)))
            .map_err(|e| plot_err(&e))?
            .label(format!("solved ({m})"))
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Writes `grad_proxy.svg` and `eval_reward.svg` into `out_dir`, one curve
/// per method found in `rows`.
pub fn emit_plots(rows: &[AggregateRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let groups = by_method(rows);
    if groups.is_empty() {
        return Err(HarnessError::data(out_dir, "no methods to plot"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let pick = |f: fn(&(f64, f64, f64)) -> (f64, f64)| -> Vec<(String, Vec<(f64, f64)>)> {
        groups
            .iter()
            .map(|(m, p)| (m.clone(), p.iter().map(f).collect()))
            .collect()
    };
    let grad = out_dir.join("grad_proxy.svg");
    draw(&grad, "Gradient norm estimate", "gradient-norm proxy", &pick(|p| (p.0, p.1)), None)?;
    let reward = out_dir.join("eval_reward.svg");
    draw(
        &reward,
        "Average evaluation reward",
        "accumulated reward",
        &pick(|p| (p.0, p.2)),
        Some(SOLVED_REWARD),
    )?;
    Ok(vec![grad, reward])
}

pub fn emit_plots_from_files(paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_aggregate(p)?);
    }
    emit_plots(&rows, out_dir)
}
