//! Ranking tables and the manipulability/success correlation.
//!
//! A report is a pure function of two JSONL files: the optimizer history and
//! the test results of the reported designs. [`build_report`] never looks at
//! anything else, so a report can always be regenerated from disk.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bohb::EvaluationRecord;
use crate::controller::{mean_rate, ControllerGains, TaskRate};
use crate::design::{DesignParams, DESIGN_FIELDS};
use crate::sim::TaskId;

pub const BASELINE_LABEL: &str = "Tabletop Mount";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, ReportError> {
    if xs.len() != ys.len() {
        return Err(ReportError::DegenerateInput("series lengths differ"));
    }
    if xs.len() < 2 {
        return Err(ReportError::DegenerateInput("need at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ReportError::DegenerateInput("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Binomial standard error of a success rate, in percent.
pub fn standard_error_pct(successes: usize, episodes: usize) -> f64 {
    if episodes == 0 {
        return 0.0;
    }
    let p = successes as f64 / episodes as f64;
    (p * (1.0 - p) / episodes as f64).sqrt() * 100.0
}

/// `"30 ± 4.6"` style cell.
pub fn format_rate(successes: usize, episodes: usize) -> String {
    let pct = if episodes == 0 {
        0.0
    } else {
        100.0 * successes as f64 / episodes as f64
    };
    format!("{pct:.0} ± {:.1}", standard_error_pct(successes, episodes))
}

/// Held-out evaluation of one reported design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub label: String,
    /// Optimizer design id; `None` for the baseline.
    pub design_id: Option<usize>,
    pub omega: DesignParams,
    pub feasible: bool,
    pub rates: Vec<TaskRate>,
    pub gains: Option<ControllerGains>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub omega: DesignParams,
    /// Optimizer score at the design's largest evaluated budget.
    pub score: Option<f64>,
    pub budget: Option<f64>,
    pub feasible: bool,
    pub rates: Vec<TaskRate>,
    pub mean: f64,
    pub mu: Option<f64>,
}

/// One design in optimizer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDesign {
    pub design_id: usize,
    pub omega: DesignParams,
    pub budget: f64,
    pub score: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    /// Every evaluated design, best first.
    pub ranking: Vec<RankedDesign>,
    pub tasks: Vec<TaskId>,
    pub rows: Vec<ReportRow>,
    /// Correlation between μ and mean test success over rows that have μ.
    pub pearson: Option<f64>,
    pub evaluations: usize,
}

/// Each design's record at its largest budget, ordered best first
/// (budget, then score, ties to the earlier record).
pub fn rank_designs(history: &[EvaluationRecord]) -> Vec<&EvaluationRecord> {
    let mut best: std::collections::BTreeMap<usize, &EvaluationRecord> = Default::default();
    for r in history {
        let keep = best.get(&r.design_id).is_none_or(|b| r.budget >= b.budget);
        if keep {
            best.insert(r.design_id, r);
        }
    }
    let mut out: Vec<&EvaluationRecord> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.budget
            .total_cmp(&a.budget)
            .then(b.score.total_cmp(&a.score))
            .then(a.index.cmp(&b.index))
    });
    out
}

pub fn build_report(history: &[EvaluationRecord], tests: &[TestRecord]) -> RankingReport {
    let ranked = rank_designs(history);
    let mut tasks: Vec<TaskId> = Vec::new();
    for t in tests {
        for r in &t.rates {
            if !tasks.contains(&r.task) {
                tasks.push(r.task);
            }
        }
    }
    let rows: Vec<ReportRow> = tests
        .iter()
        .map(|t| {
            let opt = t.design_id.and_then(|id| ranked.iter().find(|r| r.design_id == id));
            ReportRow {
                label: t.label.clone(),
                omega: t.omega,
                score: opt.map(|r| r.score),
                budget: opt.map(|r| r.budget),
                feasible: t.feasible,
                rates: t.rates.clone(),
                mean: mean_rate(&t.rates),
                mu: t.mu,
            }
        })
        .collect();
    let (mus, means): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| r.mu.map(|m| (m, r.mean))).unzip();
    RankingReport {
        ranking: ranked
            .iter()
            .map(|r| RankedDesign {
                design_id: r.design_id,
                omega: r.omega,
                budget: r.budget,
                score: r.score,
                feasible: r.feasible,
            })
            .collect(),
        tasks,
        pearson: pearson(&mus, &means).ok(),
        rows,
        evaluations: history.len(),
    }
}

fn rate_of(row: &ReportRow, task: TaskId) -> Option<&TaskRate> {
    row.rates.iter().find(|r| r.task == task)
}

pub fn csv_header(tasks: &[TaskId]) -> String {
    let mut h = String::from("label");
    for f in DESIGN_FIELDS {
        let _ = write!(h, ",{f}");
    }
    h.push_str(",feasible,opt_budget,opt_score");
    for t in tasks {
        let _ = write!(h, ",{t}_pct,{t}_se,{t}_episodes");
    }
    h.push_str(",mean_pct,mu");
    h
}

pub fn to_csv(report: &RankingReport) -> String {
    let mut out = csv_header(&report.tasks);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &report.rows {
        out.push_str(&row.label.replace(',', ";"));
        for v in row.omega.as_array() {
            let _ = write!(out, ",{v}");
        }
        let _ = write!(out, ",{},{},{}", row.feasible, opt(row.budget), opt(row.score));
        for t in &report.tasks {
            match rate_of(row, *t) {
                Some(r) => {
                    let _ = write!(
                        out,
                        ",{},{},{}",
                        100.0 * r.rate(),
                        standard_error_pct(r.successes, r.episodes),
                        r.episodes
                    );
                }
                None => out.push_str(",,,"),
            }
        }
        let _ = writeln!(out, ",{},{}", 100.0 * row.mean, opt(row.mu));
    }
    out
}

pub fn to_text(report: &RankingReport) -> String {
    let mut header: Vec<String> = vec!["Design".into()];
    header.extend(report.tasks.iter().map(|t| t.to_string()));
    header.extend(["Average".into(), "μ".into()]);
    let mut table: Vec<Vec<String>> = vec![header];
    for row in &report.rows {
        let mut cells = vec![row.label.clone()];
        for t in &report.tasks {
            cells.push(rate_of(row, *t).map(|r| format_rate(r.successes, r.episodes)).unwrap_or_else(|| "-".into()));
        }
        cells.push(format!("{:.1}", 100.0 * row.mean));
        cells.push(row.mu.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()));
        table.push(cells);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::from("Success rates in % (± binomial standard error)\n");
    for (i, r) in table.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    for row in &report.rows {
        let _ = writeln!(out, "{}: {}", row.label, row.omega);
    }
    match report.pearson {
        Some(r) => {
            let _ = writeln!(out, "Pearson r (μ vs average success): {r:.3}");
        }
        None => out.push_str("Pearson r (μ vs average success): n/a\n"),
    }
    let _ = writeln!(out, "Optimizer evaluations: {}", report.evaluations);
    if !report.ranking.is_empty() {
        out.push_str("Best designs by optimizer score:\n");
        for r in report.ranking.iter().take(RANKING_LINES) {
            let _ = writeln!(out, "  #{:<4} score {:.4} at budget {}  {}", r.design_id, r.score, r.budget, r.omega);
        }
    }
    out
}

const RANKING_LINES: usize = 10;

pub fn ranking_csv(report: &RankingReport) -> String {
    let mut out = String::from("rank,design_id");
    for f in DESIGN_FIELDS {
        let _ = write!(out, ",{f}");
    }
    out.push_str(",budget,score,feasible\n");
    for (i, r) in report.ranking.iter().enumerate() {
        let _ = write!(out, "{},{}", i + 1, r.design_id);
        for v in r.omega.as_array() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{},{}", r.budget, r.score, r.feasible);
    }
    out
}

/// Writes `report.csv`, `report.txt` and `report.json` into `dir`.
pub fn write_report(report: &RankingReport, dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(io_err(&p))
    };
    put("report.csv", to_csv(report))?;
    put("ranking.csv", ranking_csv(report))?;
    put("report.txt", to_text(report))?;
    put(
        "report.json",
        serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    )
}

/// Header-only outputs for an empty history.
pub fn write_empty(dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join("report.csv");
    std::fs::write(&p, csv_header(&[]) + "\n").map_err(io_err(&p))?;
    let p = dir.join("report.txt");
    std::fs::write(&p, "Design  Average  μ\n").map_err(io_err(&p))
}

pub fn read_tests(path: &Path) -> Result<Vec<TestRecord>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ReportError::Format {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_tests(path: &Path, tests: &[TestRecord]) -> Result<(), ReportError> {
    let mut text = String::new();
    for t in tests {
        text.push_str(&serde_json::to_string(t).expect("test record serializes"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_of_a_hundred() {
        assert_eq!(format_rate(30, 100), "30 ± 4.6");
        assert_eq!(format_rate(0, 100), "0 ± 0.0");
        assert_eq!(format_rate(0, 0), "0 ± 0.0");
    }

    #[test]
    fn pearson_rejects_flat_series() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(ReportError::DegenerateInput(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn csv_columns_line_up() {
        let report = RankingReport {
            ranking: vec![],
            tasks: vec![TaskId::Drawer],
            rows: vec![ReportRow {
                label: BASELINE_LABEL.into(),
                omega: DesignParams::tabletop(),
                score: None,
                budget: None,
                feasible: true,
                rates: vec![TaskRate {
                    task: TaskId::Drawer,
                    successes: 3,
                    episodes: 10,
                }],
                mean: 0.3,
                mu: Some(0.5),
            }],
            pearson: None,
            evaluations: 0,
        };
        let csv = to_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(to_text(&report).contains("30 ± 14.5"));
    }
}
