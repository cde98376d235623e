use std::ops::Range;

use plotters::prelude::*;

use crate::metrics::{MetricStats, TrialAggregate};
use crate::runner::EpochReport;
use crate::{Error, Result};

const SIZE: (u32, u32) = (900, 560);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn chart_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Chart(format!("{e:?}"))
}

/// One line of a chart: `(x, stats)` points, drawn with a shaded band where
/// the stats have one.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, MetricStats)>,
}

fn padded(lo: f64, hi: f64) -> Range<f64> {
    if !(lo.is_finite() && hi.is_finite()) {
        return 0.0..1.0;
    }
    if hi - lo < f64::EPSILON * hi.abs().max(1.0) {
        let pad = lo.abs().max(1.0) * 0.05;
        return lo - pad..hi + pad;
    }
    let pad = (hi - lo) * 0.05;
    lo - pad..hi + pad
}

/// Lines with 1.96 x stderr bands.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series.iter().flat_map(|s| {
        s.points.iter().flat_map(|(_, st)| {
            let (lo, hi) = st.band().unwrap_or((st.mean, st.mean));
            [lo, hi]
        })
    });
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let y_lo = if y_lo >= 0.0 { 0.0 } else { y_lo };

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(chart_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(44)
            .y_label_area_size(80)
            .build_cartesian_2d(padded(x_lo, x_hi), padded(y_lo, y_hi))
            .map_err(chart_err)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(y_label)
            .draw()
            .map_err(chart_err)?;
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let banded: Vec<(f64, (f64, f64))> = s
                .points
                .iter()
                .filter_map(|(x, st)| st.band().map(|b| (*x, b)))
                .collect();
            if banded.len() == s.points.len() && banded.len() > 1 {
                let mut outline: Vec<(f64, f64)> = banded.iter().map(|(x, b)| (*x, b.0)).collect();
                outline.extend(banded.iter().rev().map(|(x, b)| (*x, b.1)));
                chart
                    .draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2).filled())))
                    .map_err(chart_err)?;
            }
            chart
                .draw_series(LineSeries::new(
                    s.points.iter().map(|(x, st)| (*x, st.mean)),
                    color.stroke_width(2),
                ))
                .map_err(chart_err)?
                .label(s.label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(s.points.iter().map(|(x, st)| Circle::new((*x, st.mean), 3, color.filled())))
                .map_err(chart_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(chart_err)?;
        root.present().map_err(chart_err)?;
    }
    Ok(svg)
}

/// Metric against epoch, one series per report set.
pub fn epoch_chart(metric: &str, sets: &[(String, &TrialAggregate)]) -> Result<String> {
    let series: Vec<Series> = sets
        .iter()
        .map(|(label, agg)| Series {
            label: label.clone(),
            points: agg
                .series(metric)
                .into_iter()
                .map(|(e, st)| (e as f64, st))
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    if series.is_empty() {
        return Err(Error::InvalidArgument(format!("no report set has metric {metric}")));
    }
    line_chart(&format!("{metric} by epoch"), "epoch", metric, &series)
}

/// Metric against data volume in MB, one series per baseline report set.
pub fn volume_chart(metric: &str, sets: &[(String, &TrialAggregate)]) -> Result<String> {
    let series: Vec<Series> = sets
        .iter()
        .map(|(label, agg)| {
            let volumes = agg.series("volume_bytes");
            let points = agg
                .series(metric)
                .into_iter()
                .filter_map(|(e, st)| {
                    volumes
                        .iter()
                        .find(|(ve, _)| *ve == e)
                        .map(|(_, v)| (v.mean / 1e6, st))
                })
                .collect();
            Series {
                label: label.clone(),
                points,
            }
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    if series.is_empty() {
        return Err(Error::InvalidArgument(format!("no report set has metric {metric}")));
    }
    line_chart(&format!("{metric} by data volume"), "volume (MB)", metric, &series)
}

const LOG_BUCKETS_PER_DECADE: f64 = 10.0;

/// Field-length distribution per epoch on a log axis (shaded by count)
/// with the maximum field length as a line.
pub fn size_distribution_chart(reports: &[EpochReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports for the size chart".into()));
    }
    let mut cells: Vec<(u32, f64, u64)> = Vec::new();
    for r in reports {
        let w = r.size_histogram.bin_width;
        let mut row: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
        for &(bin, count) in &r.size_histogram.bins {
            let len = (bin * w).max(1) as f64;
            let b = (len.log10() * LOG_BUCKETS_PER_DECADE).floor() as i64;
            *row.entry(b).or_default() += count;
        }
        cells.extend(
            row.into_iter()
                .map(|(b, c)| (r.epoch, 10f64.powf(b as f64 / LOG_BUCKETS_PER_DECADE), c)),
        );
    }
    let max_count = cells.iter().map(|c| c.2).max().unwrap_or(1).max(1) as f64;
    let y_hi = reports
        .iter()
        .map(|r| r.max_field_length as f64)
        .fold(1.0f64, f64::max)
        * 2.0;
    let y_lo = cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).clamp(1.0, y_hi / 4.0) / 2.0;
    let e_lo = reports.iter().map(|r| r.epoch).min().unwrap() as f64;
    let e_hi = reports.iter().map(|r| r.epoch).max().unwrap() as f64;

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(chart_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("Field length distribution and maximum by epoch", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(44)
            .y_label_area_size(80)
            .build_cartesian_2d(e_lo - 0.5..e_hi + 0.5, (y_lo..y_hi).log_scale())
            .map_err(chart_err)?;
        chart
            .configure_mesh()
            .x_desc("epoch")
            .y_desc("field length (bytes)")
            .draw()
            .map_err(chart_err)?;
        let base = PALETTE[0];
        chart
            .draw_series(cells.iter().map(|&(e, len, c)| {
                let shade = 0.15 + 0.85 * ((c as f64).ln_1p() / max_count.ln_1p());
                Circle::new((e as f64, len), 4, base.mix(shade).filled())
            }))
            .map_err(chart_err)?
            .label("fields per length bucket")
            .legend(move |(x, y)| Circle::new((x + 9, y), 4, base.filled()));
        let red = PALETTE[1];
        chart
            .draw_series(LineSeries::new(
                reports.iter().map(|r| (r.epoch as f64, r.max_field_length.max(1) as f64)),
                red.stroke_width(2),
            ))
            .map_err(chart_err)?
            .label("max field length")
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], red.stroke_width(2)));
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperLeft)
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(chart_err)?;
        root.present().map_err(chart_err)?;
    }
    Ok(svg)
}
