//! Scoring against ground truth: BIC accuracy, vulnerable-version TP/FP/FN
//! with precision/recall/F1, version-distance histograms, voting-consistency
//! tables, and token-cost statistics.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repo::Repo;
use crate::types::CommitId;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("bic {bic} is not an ancestor of fix {fix}")]
    InvalidPair { bic: CommitId, fix: CommitId },
    #[error("commit {0} cannot be mapped by the ancestry provider")]
    UnmappedCommit(CommitId),
    #[error("ancestry backend failure: {0}")]
    Ancestry(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Ancestry oracle: true when `anc` is an ancestor of (or equal to) `desc`.
/// Implemented by [`Repo`] and by synthetic DAG fixtures in tests.
pub trait AncestryProvider {
    fn is_ancestor(&self, anc: &CommitId, desc: &CommitId) -> Result<bool, EvalError>;
}

impl AncestryProvider for Repo {
    fn is_ancestor(&self, anc: &CommitId, desc: &CommitId) -> Result<bool, EvalError> {
        Repo::is_ancestor(self, anc, desc).map_err(|e| EvalError::Ancestry(e.to_string()))
    }
}

/// Ordered major releases: `(tag, release commit)` in release order. A commit
/// belongs to the first release whose commit it is an ancestor of.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VersionIndex {
    entries: Vec<(String, CommitId)>,
}

impl VersionIndex {
    pub fn new(entries: Vec<(String, CommitId)>) -> Result<VersionIndex, EvalError> {
        if entries.is_empty() {
            return Err(EvalError::Parse {
                line: 0,
                reason: "version index is empty".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for (tag, _) in &entries {
            if !seen.insert(tag.clone()) {
                return Err(EvalError::Parse {
                    line: 0,
                    reason: format!("duplicate version tag {tag:?}"),
                });
            }
        }
        Ok(VersionIndex { entries })
    }

    /// `tag<TAB>release_commit`, one per line; `#` comments and blanks skipped.
    pub fn from_tsv(text: &str) -> Result<VersionIndex, EvalError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let tag = cols.next().unwrap_or("").trim();
            let commit = cols.next().unwrap_or("").trim();
            if tag.is_empty() || commit.is_empty() {
                return Err(EvalError::Parse {
                    line: i + 1,
                    reason: "want `tag<TAB>commit`".into(),
                });
            }
            let id = CommitId::new(commit).map_err(|e| EvalError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push((tag.to_string(), id));
        }
        VersionIndex::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }

    pub fn entries(&self) -> &[(String, CommitId)] {
        &self.entries
    }

    /// Index of the first release containing `commit`, or None if the commit
    /// was never released.
    pub fn release_of(
        &self,
        provider: &dyn AncestryProvider,
        commit: &CommitId,
    ) -> Result<Option<usize>, EvalError> {
        for (i, (_, release)) in self.entries.iter().enumerate() {
            if provider.is_ancestor(commit, release)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }
}

/// One curated case: the fix commit and the verified bug-inducing commit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub case_id: String,
    pub fix: CommitId,
    pub true_bic: CommitId,
    pub notes: String,
}

/// `case_id<TAB>fix<TAB>true_bic[<TAB>notes]`, one record per line.
pub fn parse_ground_truth_tsv(text: &str) -> Result<Vec<GroundTruthEntry>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_end();
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() < 3 {
            return Err(EvalError::Parse {
                line: i + 1,
                reason: "want `case_id<TAB>fix<TAB>true_bic[<TAB>notes]`".into(),
            });
        }
        let fix = CommitId::new(cols[1].trim()).map_err(|e| EvalError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let true_bic = CommitId::new(cols[2].trim()).map_err(|e| EvalError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if fix == true_bic {
            return Err(EvalError::Parse {
                line: i + 1,
                reason: "fix and true_bic must differ".into(),
            });
        }
        out.push(GroundTruthEntry {
            case_id: cols[0].trim().to_string(),
            fix,
            true_bic,
            notes: cols.get(3).map(|s| s.trim().to_string()).unwrap_or_default(),
        });
    }
    Ok(out)
}

/// Pooled or per-case confusion counts with the derived ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VersionMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl VersionMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> VersionMetrics {
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        VersionMetrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// All releases shipping the bug: those from the BIC's first release up to,
/// but excluding, the release carrying the fix.
pub fn vulnerable_versions(
    provider: &dyn AncestryProvider,
    bic: &CommitId,
    fix: &CommitId,
    index: &VersionIndex,
) -> Result<BTreeSet<String>, EvalError> {
    if !provider.is_ancestor(bic, fix)? {
        return Err(EvalError::InvalidPair {
            bic: bic.clone(),
            fix: fix.clone(),
        });
    }
    let Some(first) = index.release_of(provider, bic)? else {
        return Ok(BTreeSet::new()); // bug never shipped in an indexed release
    };
    let end = index.release_of(provider, fix)?.unwrap_or(index.len());
    Ok(index.entries[first..end]
        .iter()
        .map(|(t, _)| t.clone())
        .collect())
}

/// Per-case outcome of comparing predicted vs. true vulnerable ranges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseScore {
    pub metrics: VersionMetrics,
    pub exact_match: bool,
    /// fp as positive, fn as negative; 0 when the ranges agree.
    pub signed_distance: i64,
    /// True BIC (or prediction) maps to no indexed release.
    pub unreleased: bool,
}

pub fn score_case(
    provider: &dyn AncestryProvider,
    predicted: Option<&CommitId>,
    truth: &GroundTruthEntry,
    index: &VersionIndex,
) -> Result<CaseScore, EvalError> {
    let truth_set = vulnerable_versions(provider, &truth.true_bic, &truth.fix, index)?;
    let predicted_set = match predicted {
        Some(p) => vulnerable_versions(provider, p, &truth.fix, index)?,
        None => BTreeSet::new(),
    };
    let tp = truth_set.intersection(&predicted_set).count() as u64;
    let fp = predicted_set.difference(&truth_set).count() as u64;
    let fn_ = truth_set.difference(&predicted_set).count() as u64;
    let exact_match = predicted == Some(&truth.true_bic);
    let unreleased = index.release_of(provider, &truth.true_bic)?.is_none();
    let signed_distance = if fp > 0 { fp as i64 } else { -(fn_ as i64) };
    Ok(CaseScore {
        metrics: VersionMetrics::from_counts(tp, fp, fn_),
        exact_match,
        signed_distance,
        unreleased,
    })
}

/// Per-case inputs to dataset aggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub score: CaseScore,
    pub tokens: Option<u64>,
    /// (candidates presented to the finalizer, vote tally sorted descending)
    pub votes: Option<(usize, Vec<u32>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenStats {
    pub min: u64,
    pub median: f64,
    pub mean: f64,
    pub max: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetReport {
    pub cases: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub accuracy: f64,
    pub pooled: VersionMetrics,
    /// Signed version-distance histogram of inaccurate cases, binned by 5.
    /// Key is the bin start: 1 covers [1,5], 6 covers [6,10], -5 covers
    /// [-5,-1], and so on.
    pub distance_histogram: BTreeMap<i64, u32>,
    /// `"<candidates>:<tally>"` like `"3:(7,0,0)"` mapped to case count.
    pub voting_consistency: BTreeMap<String, u32>,
    pub token_stats: Option<TokenStats>,
    /// Cases whose true BIC never shipped in an indexed release.
    pub unreleased_cases: Vec<String>,
}

fn distance_bin(d: i64) -> i64 {
    debug_assert!(d != 0);
    if d > 0 {
        ((d - 1) / 5) * 5 + 1
    } else {
        -((((-d) - 1) / 5) * 5 + 5)
    }
}

/// Order-insensitive dataset rollup.
pub fn aggregate(records: &[CaseRecord]) -> DatasetReport {
    let cases = records.len();
    let correct = records.iter().filter(|r| r.score.exact_match).count();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    let mut histogram: BTreeMap<i64, u32> = BTreeMap::new();
    let mut voting: BTreeMap<String, u32> = BTreeMap::new();
    let mut tokens: Vec<u64> = Vec::new();
    let mut unreleased = Vec::new();
    for r in records {
        tp += r.score.metrics.tp;
        fp += r.score.metrics.fp;
        fn_ += r.score.metrics.fn_;
        if r.score.signed_distance != 0 {
            *histogram
                .entry(distance_bin(r.score.signed_distance))
                .or_default() += 1;
        }
        if let Some((n, tally)) = &r.votes {
            let tally_str = tally
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            *voting.entry(format!("{n}:({tally_str})")).or_default() += 1;
        }
        if let Some(t) = r.tokens {
            tokens.push(t);
        }
        if r.score.unreleased {
            unreleased.push(r.case_id.clone());
        }
    }
    unreleased.sort();
    let token_stats = if tokens.is_empty() {
        None
    } else {
        tokens.sort_unstable();
        let min = tokens[0];
        let max = tokens[tokens.len() - 1];
        let mean = tokens.iter().sum::<u64>() as f64 / tokens.len() as f64;
        let median = if tokens.len() % 2 == 1 {
            tokens[tokens.len() / 2] as f64
        } else {
            (tokens[tokens.len() / 2 - 1] + tokens[tokens.len() / 2]) as f64 / 2.0
        };
        Some(TokenStats {
            min,
            median,
            mean,
            max,
        })
    };
    DatasetReport {
        cases,
        correct,
        incorrect: cases - correct,
        accuracy: if cases > 0 {
            correct as f64 / cases as f64
        } else {
            0.0
        },
        pooled: VersionMetrics::from_counts(tp, fp, fn_),
        distance_histogram: histogram,
        voting_consistency: voting,
        token_stats,
        unreleased_cases: unreleased,
    }
}

/// `bin_start,bin_end,count` rows in bin order.
pub fn histogram_csv(report: &DatasetReport) -> String {
    let mut out = String::from("bin_start,bin_end,count\n");
    for (&start, &count) in &report.distance_histogram {
        let end = if start > 0 { start + 4 } else { start + 4 };
        out.push_str(&format!("{start},{end},{count}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_match_reported_arithmetic() {
        let m = VersionMetrics::from_counts(4121, 151, 146);
        assert!((m.precision * 100.0 - 96.5).abs() < 0.05);
        assert!((m.recall * 100.0 - 96.6).abs() < 0.05);
        assert!((m.f1 * 100.0 - 96.5).abs() < 0.05);

        let m = VersionMetrics::from_counts(4140, 1660, 85);
        assert!((m.precision * 100.0 - 71.4).abs() < 0.05);
        assert!((m.recall * 100.0 - 98.0).abs() < 0.05);
        assert!((m.f1 * 100.0 - 82.6).abs() < 0.05);
    }

    #[test]
    fn zero_denominators_are_zero() {
        let m = VersionMetrics::from_counts(0, 0, 0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_identity_holds() {
        for (tp, fp, fn_) in [(10, 3, 2), (1, 0, 0), (5, 5, 5), (100, 1, 99)] {
            let m = VersionMetrics::from_counts(tp, fp, fn_);
            if m.precision + m.recall > 0.0 {
                let expect = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                assert!((m.f1 - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_bins() {
        assert_eq!(distance_bin(1), 1);
        assert_eq!(distance_bin(5), 1);
        assert_eq!(distance_bin(6), 6);
        assert_eq!(distance_bin(10), 6);
        assert_eq!(distance_bin(-1), -5);
        assert_eq!(distance_bin(-5), -5);
        assert_eq!(distance_bin(-6), -10);
    }

    #[test]
    fn ground_truth_tsv_roundtrip() {
        let text = "# cases\ncase-1\taaaaaaaaaaaa\tbbbbbbbbbbbb\tverified\ncase-2\tcccccccccccc\tdddddddddddd\n";
        let entries = parse_ground_truth_tsv(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].case_id, "case-1");
        assert_eq!(entries[0].notes, "verified");
        assert_eq!(entries[1].notes, "");
    }

    #[test]
    fn ground_truth_rejects_equal_pair() {
        let text = "x\taaaaaaaaaaaa\taaaaaaaaaaaa\n";
        assert!(parse_ground_truth_tsv(text).is_err());
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let rec = |id: &str, tp, fp, fn_, exact| CaseRecord {
            case_id: id.into(),
            score: CaseScore {
                metrics: VersionMetrics::from_counts(tp, fp, fn_),
                exact_match: exact,
                signed_distance: if fp > 0 { fp as i64 } else { -(fn_ as i64) },
                unreleased: false,
            },
            tokens: Some(100),
            votes: None,
        };
        let a = vec![
            rec("a", 3, 0, 0, true),
            rec("b", 2, 4, 0, false),
            rec("c", 1, 0, 2, false),
        ];
        let mut b = a.clone();
        b.reverse();
        let ra = aggregate(&a);
        let rb = aggregate(&b);
        assert_eq!(ra.accuracy, rb.accuracy);
        assert_eq!(ra.pooled, rb.pooled);
        assert_eq!(ra.distance_histogram, rb.distance_histogram);
    }
}
