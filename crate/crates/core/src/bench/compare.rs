use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::experiment::{SummaryRow, SUMMARY_COLUMNS};
use crate::error::BenchError;

/// A parsed `summary.csv` with a display label (usually its path).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub label: String,
    pub rows: Vec<SummaryRow>,
}

fn bad(label: &str, line: usize, msg: impl std::fmt::Display) -> BenchError {
    BenchError::Compare(format!("{label}:{line}: {msg}"))
}

pub fn parse_summary(label: &str, text: &str) -> Result<SummaryTable, BenchError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| bad(label, 1, "empty summary"))?;
    if header.split(',').collect::<Vec<_>>() != SUMMARY_COLUMNS {
        return Err(bad(label, hl + 1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != SUMMARY_COLUMNS.len() {
            return Err(bad(label, i + 1, format!("expected {} fields, got {}", SUMMARY_COLUMNS.len(), f.len())));
        }
        let int = |j: usize| f[j].parse::<usize>().map_err(|e| bad(label, i + 1, format!("{}: {e}", SUMMARY_COLUMNS[j])));
        let float = |j: usize| f[j].parse::<f64>().map_err(|e| bad(label, i + 1, format!("{}: {e}", SUMMARY_COLUMNS[j])));
        rows.push(SummaryRow {
            experiment_id: f[0].to_string(),
            problem_id: f[1].to_string(),
            algorithm: f[2].to_string(),
            schedule: f[3].to_string(),
            status: f[4].to_string(),
            outer_iters: int(5)?,
            inner_iters_total: int(6)?,
            comm_rounds: int(7)?,
            final_rel_err: if f[8].is_empty() { None } else { Some(float(8)?) },
            wall_time_s: float(9)?,
            seed: f[10].parse().map_err(|e| bad(label, i + 1, format!("seed: {e}")))?,
        });
    }
    Ok(SummaryTable { label: label.to_string(), rows })
}

/// One line of the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub source: String,
    pub problem_id: String,
    pub algorithm: String,
    pub schedule: String,
    pub status: String,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub wall_time_s: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Problems where more than one row shares the smallest inner total.
    pub ties: Vec<String>,
    pub csv: String,
    pub text: String,
}

/// Side-by-side table of inner iterations, outer iterations and time across
/// summaries, marking the smallest inner-iteration total per problem.
pub fn compare_tables(summaries: &[SummaryTable]) -> Result<Comparison, BenchError> {
    if summaries.len() < 2 {
        return Err(BenchError::Compare(format!("need at least 2 summaries, got {}", summaries.len())));
    }
    let problems = |t: &SummaryTable| t.rows.iter().map(|r| r.problem_id.clone()).collect::<BTreeSet<_>>();
    let first = problems(&summaries[0]);
    if first.is_empty() {
        return Err(BenchError::Compare(format!("{} has no rows", summaries[0].label)));
    }
    for t in &summaries[1..] {
        let ids = problems(t);
        if ids != first {
            return Err(BenchError::Compare(format!(
                "problem ids differ: {} has {:?}, {} has {:?}",
                summaries[0].label, first, t.label, ids
            )));
        }
    }

    let mut rows: Vec<ComparisonRow> = Vec::new();
    for p in &first {
        for t in summaries {
            for r in t.rows.iter().filter(|r| &r.problem_id == p) {
                rows.push(ComparisonRow {
                    source: t.label.clone(),
                    problem_id: p.clone(),
                    algorithm: r.algorithm.clone(),
                    schedule: r.schedule.clone(),
                    status: r.status.clone(),
                    inner_iters: r.inner_iters_total,
                    outer_iters: r.outer_iters,
                    wall_time_s: r.wall_time_s,
                    best: false,
                });
            }
        }
    }
    let mut ties = Vec::new();
    for p in &first {
        let min = rows.iter().filter(|r| &r.problem_id == p).map(|r| r.inner_iters).min().expect("nonempty");
        let mut count = 0;
        for r in rows.iter_mut().filter(|r| &r.problem_id == p && r.inner_iters == min) {
            r.best = true;
            count += 1;
        }
        if count > 1 {
            ties.push(p.clone());
        }
    }

    let mut csv = String::from("source,problem_id,algorithm,schedule,status,inner_iters,outer_iters,wall_time_s,best\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{:.16e},{}",
            r.source, r.problem_id, r.algorithm, r.schedule, r.status, r.inner_iters, r.outer_iters, r.wall_time_s, r.best
        );
    }

    let header = ["source", "problem", "algorithm", "schedule", "status", "Inner Iter.", "Outer Iter.", "Time (s)"];
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.source.clone(),
                r.problem_id.clone(),
                r.algorithm.clone(),
                r.schedule.clone(),
                r.status.clone(),
                if r.best { format!("*{}", r.inner_iters) } else { r.inner_iters.to_string() },
                r.outer_iters.to_string(),
                format!("{:.3}", r.wall_time_s),
            ]
        })
        .collect();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for c in &cells {
        for (w, s) in width.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let mut text = String::new();
    let line = |out: &mut String, fields: &[&str]| {
        let parts: Vec<String> = fields
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(j, (f, w))| if j >= 5 { format!("{f:>w$}") } else { format!("{f:<w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut text, &header);
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut text, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for c in &cells {
        line(&mut text, &c.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let _ = writeln!(text, "* fewest inner iterations for the problem");
    for p in &ties {
        let _ = writeln!(text, "tie on {p}");
    }
    Ok(Comparison { rows, ties, csv, text })
}
