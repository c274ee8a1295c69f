use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::Result;

use super::config::{Model, PlotParams};
use super::rows::{format_sig9, ResultRow};

/// Metric drawn in the bar charts.
pub const PLOT_METRIC: &str = "mean_iou";
/// Pixel height of a bar of value 1.
pub const PLOT_HEIGHT: f64 = 300.0;

const MARGIN_LEFT: f64 = 50.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 40.0;
const BAR_WIDTH: f64 = 6.0;
const CHECKPOINT_GAP: f64 = 3.0;
const GROUP_GAP: f64 = 16.0;
const FALLBACK_COLORS: [&str; 6] = ["#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#d62728"];

/// Sweep axis inferred from the rows: sample size if it varies, else noise.
fn sweep_axis(rows: &[&ResultRow]) -> &'static str {
    let sizes: BTreeSet<usize> = rows.iter().map(|r| r.samples).collect();
    if sizes.len() > 1 {
        "samples"
    } else {
        "noise"
    }
}

/// Models in canonical order first, unknown names after in sorted order.
fn ordered_models(rows: &[&ResultRow]) -> Vec<String> {
    let names: BTreeSet<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    let mut out: Vec<String> =
        Model::ALL.iter().map(|m| m.name()).filter(|m| names.contains(m)).map(String::from).collect();
    out.extend(names.iter().filter(|n| Model::parse(n).is_none()).map(|n| n.to_string()));
    out
}

fn color<'a>(params: &'a PlotParams, models: &[String], model: &str) -> &'a str {
    params.colors.get(model).map(String::as_str).unwrap_or_else(|| {
        let i = models.iter().position(|m| m == model).unwrap_or(0);
        FALLBACK_COLORS[i % FALLBACK_COLORS.len()]
    })
}

/// Grouped bar chart of seed-averaged mean IoU by sweep value and checkpoint, plus
/// a legend file.
///
/// Bars are `rect` elements of class `bar`; a bar of value `v` is `v · PLOT_HEIGHT`
/// tall. Returns the written paths; empty input writes nothing.
pub fn emit_plots(rows: &[ResultRow], out_dir: impl AsRef<Path>, params: &PlotParams) -> Result<Vec<PathBuf>> {
    let selected: Vec<&ResultRow> = rows.iter().filter(|r| r.metric == PLOT_METRIC && r.class == "all").collect();
    if selected.is_empty() {
        warn!("no {PLOT_METRIC} rows to plot");
        return Ok(Vec::new());
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let axis = sweep_axis(&selected);
    let models = ordered_models(&selected);

    // (sweep value bits, iteration, model) -> seed values
    let mut groups: BTreeMap<(u64, usize, String), Vec<f64>> = BTreeMap::new();
    for r in &selected {
        let x = if axis == "samples" { r.samples as f64 } else { r.noise };
        groups.entry((x.to_bits(), r.iteration, r.model.clone())).or_default().push(r.value);
    }
    let xs: BTreeSet<u64> = groups.keys().map(|k| k.0).collect();
    let iterations: BTreeSet<usize> = groups.keys().map(|k| k.1).collect();

    let block = models.len() as f64 * BAR_WIDTH + CHECKPOINT_GAP;
    let group_width = iterations.len() as f64 * block;
    let width = MARGIN_LEFT + xs.len() as f64 * (group_width + GROUP_GAP) + GROUP_GAP;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;
    let base = MARGIN_TOP + PLOT_HEIGHT;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .ok();
    writeln!(svg, r#"<line class="axis" x1="{MARGIN_LEFT}" y1="{base}" x2="{width}" y2="{base}" stroke="black"/>"#)
        .ok();
    writeln!(
        svg,
        r#"<line class="axis" x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{base}" stroke="black"/>"#
    )
    .ok();
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - v * PLOT_HEIGHT;
        writeln!(svg, r#"<text x="{}" y="{y}" font-size="10" text-anchor="end">{v}</text>"#, MARGIN_LEFT - 4.0).ok();
    }
    for (gi, &xb) in xs.iter().enumerate() {
        let x0 = MARGIN_LEFT + GROUP_GAP + gi as f64 * (group_width + GROUP_GAP);
        for (ci, &it) in iterations.iter().enumerate() {
            for (mi, model) in models.iter().enumerate() {
                let Some(values) = groups.get(&(xb, it, model.clone())) else { continue };
                let value = values.iter().sum::<f64>() / values.len() as f64;
                let h = value * PLOT_HEIGHT;
                let x = x0 + ci as f64 * block + mi as f64 * BAR_WIDTH;
                writeln!(
                    svg,
                    r#"<rect class="bar" data-model="{model}" data-{axis}="{}" data-iteration="{it}" x="{x}" y="{}" width="{BAR_WIDTH}" height="{h}" fill="{}"/>"#,
                    format_sig9(f64::from_bits(xb)),
                    base - h,
                    color(params, &models, model)
                )
                .ok();
            }
        }
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
            x0 + group_width / 2.0,
            base + 14.0,
            format_sig9(f64::from_bits(xb))
        )
        .ok();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{axis}</text>"#,
        width / 2.0,
        height - 6.0
    )
    .ok();
    svg.push_str("</svg>\n");

    let chart = out_dir.join(format!("{axis}_{PLOT_METRIC}.svg"));
    fs::write(&chart, svg)?;
    let legend = out_dir.join("legend.svg");
    fs::write(&legend, legend_svg(&models, params))?;
    Ok(vec![chart, legend])
}

fn legend_svg(models: &[String], params: &PlotParams) -> String {
    let row = 18.0;
    let height = row * models.len() as f64 + 8.0;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="140" height="{height}" viewBox="0 0 140 {height}">"#
    )
    .ok();
    for (i, m) in models.iter().enumerate() {
        let y = 4.0 + i as f64 * row;
        writeln!(
            svg,
            r#"<rect class="swatch" x="4" y="{y}" width="12" height="12" fill="{}"/>"#,
            color(params, models, m)
        )
        .ok();
        writeln!(svg, r#"<text x="22" y="{}" font-size="11">{m}</text>"#, y + 10.0).ok();
    }
    svg.push_str("</svg>\n");
    svg
}
