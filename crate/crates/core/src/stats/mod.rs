//! Paired exact statistics and efficiency metrics over verdict files.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

pub use report::{analyze, AnalysisReport, CellSummary, Comparison, ReportOptions};

use crate::error::Error;
use crate::matrix::VerdictRecord;
use crate::types::{PricingTable, Telemetry};

/// Rescues `b` (treatment right, baseline wrong) and regressions `c` over `n` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiscordantCounts {
    pub b: u64,
    pub c: u64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SuccessRule {
    /// Any trajectory correct.
    PassAtN,
    /// The selected answer correct.
    Selected,
}

impl SuccessRule {
    pub fn success(self, record: &VerdictRecord) -> bool {
        match self {
            SuccessRule::PassAtN => record.pass_at_n(),
            SuccessRule::Selected => record.selected_verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub counts: DiscordantCounts,
    /// Tasks present in only one file, dropped when unpaired tasks are allowed.
    pub dropped: usize,
}

/// Tallies discordant pairs. Unless `allow_unpaired`, both files must cover
/// the same task ids.
pub fn pair_verdicts(
    baseline: &[VerdictRecord],
    treatment: &[VerdictRecord],
    rule: SuccessRule,
    allow_unpaired: bool,
) -> Result<Pairing, Error> {
    let base: BTreeMap<&str, bool> = baseline.iter().map(|r| (r.task_id.as_str(), rule.success(r))).collect();
    let treat: BTreeMap<&str, bool> = treatment.iter().map(|r| (r.task_id.as_str(), rule.success(r))).collect();
    let bk: BTreeSet<&str> = base.keys().copied().collect();
    let tk: BTreeSet<&str> = treat.keys().copied().collect();
    let only_baseline: Vec<String> = bk.difference(&tk).map(|s| s.to_string()).collect();
    let only_treatment: Vec<String> = tk.difference(&bk).map(|s| s.to_string()).collect();
    if !allow_unpaired && !(only_baseline.is_empty() && only_treatment.is_empty()) {
        return Err(Error::TaskMismatch {
            only_baseline,
            only_treatment,
        });
    }
    let mut counts = DiscordantCounts::default();
    for id in bk.intersection(&tk) {
        counts.n += 1;
        match (base[id], treat[id]) {
            (false, true) => counts.b += 1,
            (true, false) => counts.c += 1,
            _ => {}
        }
    }
    Ok(Pairing {
        counts,
        dropped: only_baseline.len() + only_treatment.len(),
    })
}

fn binomial_row_prefix(n: u64, k: u64) -> BigUint {
    let mut term = BigUint::one();
    let mut sum = BigUint::one();
    for i in 0..k {
        term = term * BigUint::from(n - i) / BigUint::from(i + 1);
        sum += &term;
    }
    sum
}

/// Two-sided exact McNemar p-value as an exact rational:
/// `min(1, 2 * sum_{k <= min(b,c)} C(b+c, k) / 2^(b+c))`.
pub fn mcnemar_exact(b: u64, c: u64) -> BigRational {
    let n = b + c;
    if n == 0 {
        return BigRational::one();
    }
    let tail = binomial_row_prefix(n, b.min(c));
    let p = BigRational::new(BigInt::from(tail) * 2, BigInt::from(BigUint::one() << n));
    p.min(BigRational::one())
}

pub fn mcnemar_p(b: u64, c: u64) -> f64 {
    mcnemar_exact(b, c).to_f64().unwrap_or(0.0)
}

/// Rounds an exact probability to thousandths, half away from zero.
pub fn round_thousandths(p: &BigRational) -> u32 {
    let scaled = p * BigRational::from_integer(BigInt::from(1000)) + BigRational::new(BigInt::one(), BigInt::from(2));
    scaled.floor().to_integer().to_u32().unwrap_or(u32::MAX)
}

/// `0.453`-style rendering of an exact p-value.
pub fn format_p(p: &BigRational) -> String {
    let t = round_thousandths(p);
    format!("{}.{:03}", t / 1000, t % 1000)
}

/// `**` below 0.01, `*` below 0.05, `†` below 0.10.
pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.10 {
        "†"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub rejected: Vec<bool>,
    /// Step-up threshold `rank * q / m` of each input.
    pub thresholds: Vec<f64>,
    /// BH-adjusted p-values.
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg step-up procedure at rate `q`. Output is in input order.
pub fn bh_fdr(pvalues: &[f64], q: f64) -> Result<BhResult, Error> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("FDR rate {q} outside (0, 1)")));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut thresholds = vec![0.0; m];
    let mut cutoff = 0;
    for (rank0, &i) in order.iter().enumerate() {
        let t = (rank0 + 1) as f64 * q / m as f64;
        thresholds[i] = t;
        if pvalues[i] <= t {
            cutoff = rank0 + 1;
        }
    }
    let mut rejected = vec![false; m];
    for &i in &order[..cutoff] {
        rejected[i] = true;
    }
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        running = running.min(pvalues[i] * m as f64 / (rank0 + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(BhResult {
        rejected,
        thresholds,
        adjusted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub mean_steps: Option<f64>,
    /// Fraction of attempts after the first that skipped discovery.
    pub skip_rate: Option<f64>,
    pub telemetry: Telemetry,
    pub policy_cost: f64,
    pub total_cost: f64,
}

pub fn efficiency(records: &[VerdictRecord], pricing: &PricingTable) -> EfficiencyReport {
    let lengths: Vec<usize> = records.iter().flat_map(|r| r.trajectory_lengths.iter().copied()).collect();
    let mean_steps = (!lengths.is_empty()).then(|| lengths.iter().sum::<usize>() as f64 / lengths.len() as f64);
    let skip_rate = if records.is_empty() || records.iter().any(|r| r.discovery_skipped.is_none()) {
        None
    } else {
        let later: Vec<bool> = records
            .iter()
            .flat_map(|r| r.discovery_skipped.iter().flatten().skip(1).copied())
            .collect();
        (!later.is_empty()).then(|| later.iter().filter(|s| **s).count() as f64 / later.len() as f64)
    };
    let mut telemetry = Telemetry::default();
    for r in records {
        telemetry.merge(&r.telemetry);
    }
    EfficiencyReport {
        mean_steps,
        skip_rate,
        telemetry,
        policy_cost: telemetry.policy_cost(pricing),
        total_cost: telemetry.cost_estimate(pricing),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, verdicts: &[bool], lengths: &[usize], skipped: Option<&[bool]>) -> VerdictRecord {
        VerdictRecord {
            task_id: id.into(),
            cell_id: "c".into(),
            verdicts: verdicts.to_vec(),
            selected_verdict: verdicts.first().copied().unwrap_or(false),
            trajectory_lengths: lengths.to_vec(),
            discovery_skipped: skipped.map(<[bool]>::to_vec),
            final_answer: None,
            telemetry: Telemetry::default(),
        }
    }

    #[test]
    fn pairing_counts() {
        let base = [record("a", &[true], &[1], None), record("b", &[false], &[1], None), record("c", &[false], &[1], None)];
        let treat = [record("a", &[true], &[1], None), record("b", &[true], &[1], None), record("c", &[false], &[1], None)];
        let p = pair_verdicts(&base, &treat, SuccessRule::PassAtN, false).unwrap();
        assert_eq!(p.counts, DiscordantCounts { b: 1, c: 0, n: 3 });
        let same = pair_verdicts(&treat[..1], &treat[..1], SuccessRule::Selected, false).unwrap();
        assert_eq!((same.counts.b, same.counts.c), (0, 0));
    }

    #[test]
    fn mismatched_tasks() {
        let base = [record("a", &[true], &[1], None), record("x", &[true], &[1], None)];
        let treat = [record("a", &[true], &[1], None), record("y", &[true], &[1], None)];
        match pair_verdicts(&base, &treat, SuccessRule::PassAtN, false) {
            Err(Error::TaskMismatch {
                only_baseline,
                only_treatment,
            }) => {
                assert_eq!(only_baseline, ["x"]);
                assert_eq!(only_treatment, ["y"]);
            }
            other => panic!("{other:?}"),
        }
        let p = pair_verdicts(&base, &treat, SuccessRule::PassAtN, true).unwrap();
        assert_eq!((p.counts.n, p.dropped), (1, 2));
    }

    #[test]
    fn mcnemar_examples() {
        assert_eq!(mcnemar_exact(6, 0), BigRational::new(BigInt::from(1), BigInt::from(32)));
        assert!((mcnemar_p(17, 3) - 0.002576828002929687).abs() < 1e-15);
        assert!((mcnemar_p(10, 2) - 0.0385742187500).abs() < 1e-12);
        assert_eq!(mcnemar_p(1, 1), 1.0);
        assert_eq!(mcnemar_p(0, 0), 1.0);
        assert_eq!(format_p(&mcnemar_exact(5, 2)), "0.453");
    }

    #[test]
    fn markers_are_strict() {
        assert_eq!(significance_marker(0.003), "**");
        assert_eq!(significance_marker(0.031), "*");
        assert_eq!(significance_marker(0.05), "†");
        assert_eq!(significance_marker(0.10), "");
        assert_eq!(significance_marker(0.01), "*");
    }

    #[test]
    fn bh_small_cases() {
        assert_eq!(bh_fdr(&[0.001], 0.05).unwrap().rejected, [true]);
        assert_eq!(bh_fdr(&[0.5, 0.6, 0.7], 0.05).unwrap().rejected, [false; 3]);
        assert!(bh_fdr(&[], 0.05).unwrap().rejected.is_empty());
        // step-up: 0.04 passes its own threshold and carries the smaller p with it
        let r = bh_fdr(&[0.026, 0.04], 0.05).unwrap();
        assert_eq!(r.rejected, [true, true]);
        assert!(bh_fdr(&[0.1], 1.0).is_err());
    }

    #[test]
    fn efficiency_conflict_example() {
        let flags = [false, true, true, true, true];
        let r = efficiency(&[record("a", &[true; 5], &[8, 4, 3, 3, 3], Some(&flags))], &PricingTable::default());
        assert!((r.mean_steps.unwrap() - 4.2).abs() < 1e-12);
        assert_eq!(r.skip_rate, Some(1.0));
        let single = efficiency(&[record("a", &[true], &[3], Some(&[false]))], &PricingTable::default());
        assert_eq!(single.skip_rate, None);
        let absent = efficiency(&[record("a", &[true, true], &[3, 3], None)], &PricingTable::default());
        assert_eq!(absent.skip_rate, None);
    }
}
