use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{
    bh_fdr, efficiency, format_p, mcnemar_exact, pair_verdicts, significance_marker, DiscordantCounts,
    EfficiencyReport, SuccessRule,
};
use crate::augment::MemoryKind;
use crate::error::Error;
use crate::matrix::{check_admissible, memory_label, read_verdicts, CellStatus, Manifest, VerdictRecord};
use crate::search::SearchMethod;
use crate::types::PricingTable;

use num_traits::ToPrimitive;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    /// Explicit baseline cell ids. Each applies to cells with the same
    /// benchmark and method; other groups fall back to their No Memory cell.
    pub baselines: Vec<String>,
    pub q: f64,
    pub pricing: PricingTable,
    /// Drop tasks missing from one side of a comparison instead of failing.
    pub allow_unpaired: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            baselines: Vec::new(),
            q: 0.05,
            pricing: PricingTable::default(),
            allow_unpaired: false,
        }
    }
}

/// Success rule used in the report: pass@N for best-of-N, the selected
/// answer for tree search.
pub fn report_rule(method: SearchMethod) -> SuccessRule {
    match method {
        SearchMethod::BestOfN => SuccessRule::PassAtN,
        _ => SuccessRule::Selected,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub id: String,
    pub benchmark: String,
    pub method: SearchMethod,
    pub memory: String,
    pub status: CellStatus,
    pub rule: SuccessRule,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub efficiency: Option<EfficiencyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub benchmark: String,
    pub method: SearchMethod,
    pub treatment: String,
    pub baseline: String,
    pub counts: DiscordantCounts,
    pub dropped: usize,
    pub p: f64,
    /// Exact p rounded to three decimals.
    pub p_display: String,
    pub marker: &'static str,
    pub bh_reject: bool,
    pub bh_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub q: f64,
    pub benchmarks: Vec<(String, bool)>,
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<Comparison>,
}

fn load_manifest(dir: &Path) -> Result<Manifest, Error> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))
}

/// Reads a run directory and computes accuracies, paired tests, BH flags and
/// efficiency metrics.
pub fn analyze(dir: &Path, options: &ReportOptions) -> Result<AnalysisReport, Error> {
    let manifest = load_manifest(dir)?;
    for b in &options.baselines {
        if !manifest.cells.iter().any(|c| &c.id == b) {
            return Err(Error::Config(format!("baseline cell `{b}` not found in {}", dir.display())));
        }
    }
    let mut records: BTreeMap<String, Vec<VerdictRecord>> = BTreeMap::new();
    let mut cells = Vec::new();
    for c in &manifest.cells {
        let rule = report_rule(c.method);
        let mut summary = CellSummary {
            id: c.id.clone(),
            benchmark: c.benchmark.clone(),
            method: c.method,
            memory: memory_label(&c.memory),
            status: c.status,
            rule,
            n: 0,
            accuracy: None,
            efficiency: None,
        };
        if let (CellStatus::Ok, Some(file)) = (c.status, &c.verdict_file) {
            let rs = read_verdicts(&dir.join(file))?;
            summary.n = rs.len();
            if !rs.is_empty() {
                let hits = rs.iter().filter(|r| rule.success(r)).count();
                summary.accuracy = Some(100.0 * hits as f64 / rs.len() as f64);
            }
            summary.efficiency = Some(efficiency(&rs, &options.pricing));
            records.insert(c.id.clone(), rs);
        }
        cells.push(summary);
    }

    let mut groups: BTreeMap<(String, SearchMethod), Vec<usize>> = BTreeMap::new();
    for (i, c) in manifest.cells.iter().enumerate() {
        groups.entry((c.benchmark.clone(), c.method)).or_default().push(i);
    }
    let mut comparisons = Vec::new();
    for ((benchmark, method), members) in &groups {
        if members.len() < 2 {
            continue;
        }
        let explicit = members.iter().find(|&&i| options.baselines.contains(&manifest.cells[i].id));
        let fallback = || {
            members
                .iter()
                .find(|&&i| manifest.cells[i].memory.iter().all(|k| *k == MemoryKind::None))
        };
        let base = explicit.or_else(fallback).copied().ok_or_else(|| {
            Error::Config(format!(
                "no baseline for {benchmark} / {}: expected a No Memory cell or --baseline <cell-id>",
                method.label()
            ))
        })?;
        let base_cell = &manifest.cells[base];
        let Some(base_records) = records.get(&base_cell.id) else { continue };
        for &i in members {
            let cell = &manifest.cells[i];
            if i == base {
                continue;
            }
            let Some(treat_records) = records.get(&cell.id) else { continue };
            let pairing = pair_verdicts(base_records, treat_records, report_rule(*method), options.allow_unpaired)?;
            let exact = mcnemar_exact(pairing.counts.b, pairing.counts.c);
            let p = exact.to_f64().unwrap_or(0.0);
            comparisons.push(Comparison {
                benchmark: benchmark.clone(),
                method: *method,
                treatment: cell.id.clone(),
                baseline: base_cell.id.clone(),
                counts: pairing.counts,
                dropped: pairing.dropped,
                p,
                p_display: format_p(&exact),
                marker: significance_marker(p),
                bh_reject: false,
                bh_threshold: 0.0,
            });
        }
    }
    let bh = bh_fdr(&comparisons.iter().map(|c| c.p).collect::<Vec<_>>(), options.q)?;
    for (i, c) in comparisons.iter_mut().enumerate() {
        c.bh_reject = bh.rejected[i];
        c.bh_threshold = bh.thresholds[i];
    }
    let benchmarks: BTreeSet<(String, bool)> =
        manifest.cells.iter().map(|c| (c.benchmark.clone(), c.serializable)).collect();
    Ok(AnalysisReport {
        q: options.q,
        benchmarks: benchmarks.into_iter().collect(),
        cells,
        comparisons,
    })
}

const METHODS: [SearchMethod; 3] = [SearchMethod::BestOfN, SearchMethod::Beam, SearchMethod::Mcts];

fn canonical_rows() -> Vec<Vec<MemoryKind>> {
    use MemoryKind::*;
    vec![vec![None], vec![RawSibling], vec![Reflection], vec![Fact], vec![Fact, Reflection]]
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (j, cell) in r.iter().enumerate() {
            if j > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if j + 1 < r.len() {
                line.push_str(&" ".repeat(widths[j] - cell.chars().count()));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "ABSENT".to_string(), |x| format!("{x:.digits$}"))
}

impl AnalysisReport {
    fn cell(&self, benchmark: &str, method: SearchMethod, label: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.benchmark == benchmark && c.method == method && c.memory == label)
    }

    fn marker_for(&self, id: &str) -> &'static str {
        self.comparisons.iter().find(|c| c.treatment == id).map_or("", |c| c.marker)
    }

    /// Aligned plain-text report: matrix, paired tests, efficiency.
    pub fn to_text(&self) -> String {
        let mut out = String::from("EXPERIMENT MATRIX (accuracy %)\n");
        let mut rows = vec![{
            let mut h = vec!["Method".to_string(), "Memory".to_string()];
            h.extend(self.benchmarks.iter().map(|(b, _)| b.clone()));
            h
        }];
        let mut labels: Vec<(Vec<MemoryKind>, String)> =
            canonical_rows().into_iter().map(|k| (k.clone(), memory_label(&k))).collect();
        for c in &self.cells {
            if !labels.iter().any(|(_, l)| *l == c.memory) {
                labels.push((Vec::new(), c.memory.clone()));
            }
        }
        for method in METHODS {
            let best: BTreeMap<&str, f64> = self
                .benchmarks
                .iter()
                .filter_map(|(b, _)| {
                    self.cells
                        .iter()
                        .filter(|c| &c.benchmark == b && c.method == method)
                        .filter_map(|c| c.accuracy)
                        .reduce(f64::max)
                        .map(|m| (b.as_str(), m))
                })
                .collect();
            let mut first = true;
            for (kinds, label) in &labels {
                let mut any_structural = false;
                let mut any_cell = false;
                let mut row = vec![
                    if first { method.label().to_string() } else { String::new() },
                    label.clone(),
                ];
                for (b, serializable) in &self.benchmarks {
                    let text = match self.cell(b, method, label) {
                        Some(c) => {
                            any_cell = true;
                            match c.accuracy {
                                Some(a) => {
                                    let v = format!("{a:.1}");
                                    let v = if best.get(b.as_str()) == Some(&a) { format!("[{v}]") } else { v };
                                    v + self.marker_for(&c.id)
                                }
                                None if c.status == CellStatus::Failed => "FAILED".to_string(),
                                None => "n/e".to_string(),
                            }
                        }
                        None => match (kinds.is_empty(), check_admissible(kinds, method, *serializable)) {
                            (false, Err(r)) => {
                                any_structural = true;
                                r.placeholder().to_string()
                            }
                            _ => "n/e".to_string(),
                        },
                    };
                    row.push(text);
                }
                if any_cell || any_structural {
                    rows.push(row);
                    first = false;
                }
            }
        }
        out.push_str(&table(&rows));
        out.push_str(
            "best-of-N reports pass@N, beam and MCTS the selected answer; [x] best in method group;\n\
             ** p<0.01, * p<0.05, † p<0.10 vs the group baseline; --- non-serializable, ∅ structurally undefined, n/e not evaluated\n",
        );

        let _ = writeln!(out, "\nMCNEMAR EXACT TESTS (two-sided, BH q={})", self.q);
        let mut rows = vec![["Benchmark", "Method", "Treatment", "Baseline", "n", "b", "c", "p", "sig", "BH"]
            .map(String::from)
            .to_vec()];
        for c in &self.comparisons {
            rows.push(vec![
                c.benchmark.clone(),
                c.method.label().to_string(),
                c.treatment.clone(),
                c.baseline.clone(),
                c.counts.n.to_string(),
                c.counts.b.to_string(),
                c.counts.c.to_string(),
                c.p_display.clone(),
                c.marker.to_string(),
                if c.bh_reject { "reject".into() } else { "-".into() },
            ]);
        }
        out.push_str(&table(&rows));
        let dropped: usize = self.comparisons.iter().map(|c| c.dropped).sum();
        if dropped > 0 {
            let _ = writeln!(out, "unpaired tasks dropped: {dropped}");
        }

        out.push_str("\nEFFICIENCY\n");
        let mut rows = vec![["Cell", "Method", "Memory", "mean steps", "skip rate", "policy $", "total $"]
            .map(String::from)
            .to_vec()];
        for c in &self.cells {
            let Some(e) = &c.efficiency else { continue };
            rows.push(vec![
                c.id.clone(),
                c.method.label().to_string(),
                c.memory.clone(),
                opt(e.mean_steps, 2),
                opt(e.skip_rate, 2),
                format!("{:.4}", e.policy_cost),
                format!("{:.4}", e.total_cost),
            ]);
        }
        out.push_str(&table(&rows));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }
}
