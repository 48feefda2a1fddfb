//! Evaluation report assembly and emission: CSV, JSON mirror, and simple
//! SVG line/bar charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::eval::LevelMetrics;
use crate::select::ReuseScoreTable;
use crate::Result;

/// One strategy's metrics across all exit levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategySeries {
    pub label: String,
    pub per_level: Vec<LevelMetrics>,
}

/// Provenance carried alongside the metrics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n_records: usize,
    pub hidden: usize,
    /// Number of exit levels evaluated.
    pub exit_levels: usize,
    /// Content hash of the jump bank the strategies drew from.
    pub bank_hash: Option<String>,
    /// Content hash of the evaluation corpus.
    pub corpus_hash: Option<String>,
    /// Seeds behind the corpus and the jump training, for reproduction.
    pub corpus_seed: Option<u64>,
    pub train_seed: Option<u64>,
    /// Selected single-jump level, when selection has run.
    pub ojfa_level: Option<usize>,
}

/// Per-level precision/surprisal tables for each strategy, serializable to
/// CSV, JSON, and SVG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub strategies: Vec<StrategySeries>,
    /// Reuse scores, included so the report can render the score
    /// distribution chart.
    pub score_table: Option<ReuseScoreTable>,
}

/// Output formats for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl EvalReport {
    /// CSV with schema `strategy,level,precision,surprisal,n_records`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,level,precision,surprisal,n_records\n");
        for series in &self.strategies {
            for m in &series.per_level {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    series.label, m.level, m.precision, m.surprisal, self.meta.n_records
                );
            }
        }
        out
    }
}

/// Write the requested formats into `out_dir` and return the paths written.
/// CSV lands in `metrics.csv`, JSON in `metrics.json`, and SVG in
/// `precision.svg` / `surprisal.svg` plus `sscs_softmax.svg` when the
/// report carries a score table.
pub fn emit_report(
    report: &EvalReport,
    formats: &[ReportFormat],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let write = |name: &str, contents: &str| -> Result<PathBuf> {
        let path = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(path)
    };

    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Csv => {
                written.push(write("metrics.csv", &report.to_csv())?);
            }
            ReportFormat::Json => {
                let json = serde_json::to_string_pretty(report)?;
                written.push(write("metrics.json", &json)?);
            }
            ReportFormat::Svg => {
                written.push(write(
                    "precision.svg",
                    &line_chart(report, Metric::Precision),
                )?);
                written.push(write(
                    "surprisal.svg",
                    &line_chart(report, Metric::Surprisal),
                )?);
                if let Some(table) = &report.score_table {
                    written.push(write("sscs_softmax.svg", &score_chart(table)?)?);
                }
            }
        }
    }
    Ok(written)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

enum Metric {
    Precision,
    Surprisal,
}

impl Metric {
    fn pick(&self, m: &LevelMetrics) -> f64 {
        match self {
            Metric::Precision => m.precision,
            Metric::Surprisal => m.surprisal,
        }
    }

    fn title(&self) -> &'static str {
        match self {
            Metric::Precision => "Precision by exit level",
            Metric::Surprisal => "Surprisal (nats) by exit level",
        }
    }
}

fn svg_open(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" ",
            "text-anchor=\"middle\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = (LEFT + (WIDTH - RIGHT)) / 2.0,
        title = title,
    )
}

fn axes(min_y: f64, max_y: f64, max_level: usize) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{}\" stroke=\"black\"/>",
        TOP + plot_h
    );
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let value = min_y + (max_y - min_y) * frac;
        let y = TOP + plot_h * (1.0 - frac);
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{value:.3}</text>",
            LEFT - 6.0,
            y + 4.0
        );
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>",
            LEFT + plot_w
        );
    }
    let step = (max_level / 16).max(1);
    for level in (0..=max_level).step_by(step) {
        let x = if max_level == 0 {
            LEFT
        } else {
            LEFT + plot_w * level as f64 / max_level as f64
        };
        let _ = writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{level}</text>",
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">exit level</text>",
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    s
}

fn line_chart(report: &EvalReport, metric: Metric) -> String {
    let values: Vec<Vec<f64>> = report
        .strategies
        .iter()
        .map(|s| s.per_level.iter().map(|m| metric.pick(m)).collect())
        .collect();
    let all: Vec<f64> = values.iter().flatten().cloned().collect();
    let mut min_y = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_y = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !min_y.is_finite() || !max_y.is_finite() {
        min_y = 0.0;
        max_y = 1.0;
    }
    if (max_y - min_y).abs() < 1e-12 {
        min_y -= 0.5;
        max_y += 0.5;
    }
    let pad = (max_y - min_y) * 0.05;
    min_y -= pad;
    max_y += pad;

    let max_level = report
        .strategies
        .iter()
        .flat_map(|s| s.per_level.iter().map(|m| m.level))
        .max()
        .unwrap_or(0);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;

    let mut svg = svg_open(metric.title());
    svg.push_str(&axes(min_y, max_y, max_level));
    for (idx, series) in report.strategies.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = series
            .per_level
            .iter()
            .map(|m| {
                let x = if max_level == 0 {
                    LEFT
                } else {
                    LEFT + plot_w * m.level as f64 / max_level as f64
                };
                let frac = (metric.pick(m) - min_y) / (max_y - min_y);
                let y = TOP + plot_h * (1.0 - frac);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            points.join(" ")
        );
        let ly = TOP + 16.0 * idx as f64 + 8.0;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            lx + 24.0,
            ly + 4.0,
            series.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Bar chart of the softmax-sharpened reuse scores, one bar per jump level.
fn score_chart(table: &ReuseScoreTable) -> Result<String> {
    let probs =
        crate::select::score_distribution(&table.d_scores, crate::select::SCORE_TEMPERATURE)?;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let mut svg = svg_open("Softmax of reuse scores by jump level");
    svg.push_str(&axes(
        0.0,
        1.0,
        table.levels.iter().copied().max().unwrap_or(0),
    ));
    let n = probs.len() as f64;
    let slot = plot_w / n;
    let bar_w = (slot * 0.7).max(1.0);
    for (i, (&level, &p)) in table.levels.iter().zip(&probs).enumerate() {
        let x = LEFT + slot * i as f64 + (slot - bar_w) / 2.0;
        let bar_h = plot_h * p;
        let y = TOP + plot_h - bar_h;
        let color = if level == table.chosen {
            "#d62728"
        } else {
            "#1f77b4"
        };
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{bar_h:.2}\" fill=\"{color}\"/>"
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> EvalReport {
        let series = |label: &str, base: f64| StrategySeries {
            label: label.to_string(),
            per_level: (0..4)
                .map(|level| LevelMetrics {
                    level,
                    precision: base + level as f64 * 0.1,
                    surprisal: 2.0 - base - level as f64 * 0.05,
                })
                .collect(),
        };
        EvalReport {
            meta: ReportMeta {
                n_records: 25,
                hidden: 16,
                exit_levels: 4,
                bank_hash: Some("abc".to_string()),
                ojfa_level: Some(2),
                ..ReportMeta::default()
            },
            strategies: vec![series("ojfa", 0.3), series("identity", 0.1)],
            score_table: Some(ReuseScoreTable {
                levels: vec![0, 1, 2, 3],
                d_scores: vec![0.1, 0.2, 0.6, 0.3],
                mean_cosine: vec![vec![0.0; 4]; 4],
                chosen: 2,
            }),
        }
    }

    #[test]
    fn csv_has_header_plus_one_row_per_strategy_level() {
        let report = sample_report();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert_eq!(lines[0], "strategy,level,precision,surprisal,n_records");
        assert!(lines[1].starts_with("ojfa,0,"));
        assert!(lines[1].ends_with(",25"));
    }

    #[test]
    fn csv_and_json_carry_identical_numbers() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        emit_report(
            &report,
            &[ReportFormat::Csv, ReportFormat::Json],
            dir.path(),
        )
        .unwrap();
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let json: EvalReport = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("metrics.json")).unwrap(),
        )
        .unwrap();

        let mut csv_rows = csv.trim_end().lines().skip(1);
        for series in &json.strategies {
            for m in &series.per_level {
                let row = csv_rows.next().unwrap();
                let fields: Vec<&str> = row.split(',').collect();
                assert_eq!(fields[0], series.label);
                assert_eq!(fields[1].parse::<usize>().unwrap(), m.level);
                assert_eq!(fields[2].parse::<f64>().unwrap(), m.precision);
                assert_eq!(fields[3].parse::<f64>().unwrap(), m.surprisal);
            }
        }
        assert!(csv_rows.next().is_none());
    }

    #[test]
    fn svg_is_well_formed_with_one_polyline_per_strategy() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let written = emit_report(&report, &[ReportFormat::Svg], dir.path()).unwrap();
        assert_eq!(written.len(), 3);
        for name in ["precision.svg", "surprisal.svg"] {
            let svg = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(svg.starts_with("<svg"));
            assert!(svg.trim_end().ends_with("</svg>"));
            assert_eq!(svg.matches("<polyline").count(), report.strategies.len());
            // Every opened tag family is balanced or self-closed.
            assert_eq!(svg.matches("<svg").count(), svg.matches("</svg>").count());
            assert_eq!(svg.matches("<text").count(), svg.matches("</text>").count());
        }
        let bars = std::fs::read_to_string(dir.path().join("sscs_softmax.svg")).unwrap();
        assert_eq!(bars.matches("<rect").count(), 1 + 4); // background + one bar per level
    }
}
