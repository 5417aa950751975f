//! Accuracy reports: per family, binned by occlusion ratio and part size,
//! with relative drops against the first bin.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use vqa3d_reason::{Family, Question};

use crate::metrics::DetectionSummary;
use crate::pipeline::{ParseConfig, PredictionSet, QuestionSet};

pub const REPORT_SCHEMA: &str = "vqa3d.report/v1";
pub const ABLATION_SCHEMA: &str = "vqa3d.ablation/v1";

/// Lower edges of the occlusion-ratio bins; the last bin is unbounded.
pub const OCCLUSION_EDGES: [f64; 7] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

/// Part-size bins from largest to smallest: `(label, lower, upper]` in
/// pixels of the largest part a question refers to.
pub const PART_SIZE_BINS: [(&str, usize, usize); 6] = [
    ("max", 300, usize::MAX),
    ("300", 150, 300),
    ("150", 100, 150),
    ("100", 50, 100),
    ("50", 20, 50),
    ("20", 0, 20),
];

/// `(acc0 − acc) / acc0`; undefined when the reference accuracy is zero.
pub fn relative_drop(acc0: f64, acc: f64) -> Option<f64> {
    (acc0 > 0.0).then(|| (acc0 - acc) / acc0)
}

pub fn occlusion_bin(ratio: f64) -> usize {
    OCCLUSION_EDGES.iter().rposition(|&e| ratio >= e).unwrap_or(0)
}

/// Questions without a referenced part fall in the smallest bin.
pub fn part_size_bin(area: Option<usize>) -> usize {
    let a = area.unwrap_or(0);
    PART_SIZE_BINS
        .iter()
        .position(|&(_, lo, hi)| a > lo && a <= hi)
        .unwrap_or(PART_SIZE_BINS.len() - 1)
}

pub fn has_part_bins(family: Family) -> bool {
    matches!(family, Family::Part | Family::OcclusionPart)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn fingerprint(config: &ParseConfig, questions: &QuestionSet) -> String {
    let text = serde_json::to_string(&(config, questions.seed, &questions.families)).expect("config serializes");
    format!("{:016x}", fnv1a(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += correct as usize;
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub label: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: Option<f64>,
    pub relative_drop: Option<f64>,
}

fn bin_stats(labels: &[String], tallies: &[Tally]) -> Vec<BinStat> {
    let acc0 = tallies[0].accuracy();
    labels
        .iter()
        .zip(tallies)
        .map(|(label, t)| BinStat {
            label: label.clone(),
            correct: t.correct,
            total: t.total,
            accuracy: t.accuracy(),
            relative_drop: acc0.zip(t.accuracy()).and_then(|(a0, a)| relative_drop(a0, a)),
        })
        .collect()
}

/// Tallies of every bin from `k` onwards.
fn cumulative(bins: &[Tally]) -> Vec<Tally> {
    let mut out = bins.to_vec();
    for k in (0..out.len().saturating_sub(1)).rev() {
        out[k].correct += out[k + 1].correct;
        out[k].total += out[k + 1].total;
    }
    out
}

pub fn occlusion_labels() -> Vec<String> {
    OCCLUSION_EDGES.iter().map(|e| format!("{}", (e * 100.0).round())).collect()
}

pub fn part_size_labels() -> Vec<String> {
    PART_SIZE_BINS.iter().map(|b| b.0.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStat {
    pub family: Family,
    pub correct: usize,
    pub total: usize,
    pub accuracy: Option<f64>,
    /// Disjoint occlusion-ratio bins `[t, t + 5%)`, the last unbounded.
    pub occlusion_bins: Vec<BinStat>,
    /// Questions with occlusion ratio at least `t`, as in the published
    /// tables whose first column covers every question.
    pub occlusion_thresholds: Vec<BinStat>,
    /// Empty for families that do not refer to parts.
    pub part_size_bins: Vec<BinStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub label: String,
    pub fingerprint: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: Option<f64>,
    /// Unweighted mean over families with questions.
    pub mean_family_accuracy: Option<f64>,
    pub ambiguous: usize,
    pub execution_errors: usize,
    pub families: Vec<FamilyStat>,
}

impl EvalReport {
    pub fn family(&self, family: Family) -> Option<&FamilyStat> {
        self.families.iter().find(|f| f.family == family)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,section,family,bin,correct,total,accuracy,relative_drop\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{},overall,all,,{},{},{},", self.label, self.correct, self.total, fmt(self.accuracy));
        for f in &self.families {
            let _ = writeln!(out, "{},family,{},,{},{},{},", self.label, f.family, f.correct, f.total, fmt(f.accuracy));
            for (section, bins) in [
                ("occlusion", &f.occlusion_bins),
                ("occlusion_at_least", &f.occlusion_thresholds),
                ("part_size", &f.part_size_bins),
            ] {
                for b in bins {
                    let _ = writeln!(
                        out,
                        "{},{section},{},{},{},{},{},{}",
                        self.label,
                        f.family,
                        b.label,
                        b.correct,
                        b.total,
                        fmt(b.accuracy),
                        fmt(b.relative_drop)
                    );
                }
            }
        }
        out
    }
}

/// Scores predictions against the answer keys in `questions`. Every
/// prediction must have an answer key and every question a prediction.
pub fn evaluate(label: &str, predictions: &PredictionSet, questions: &QuestionSet) -> Result<EvalReport> {
    let keys: HashMap<&str, &Question> = questions.questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut seen: HashMap<&str, bool> = HashMap::with_capacity(keys.len());
    let mut overall = Tally::default();
    let mut by_family: BTreeMap<Family, (Tally, Vec<Tally>, Vec<Tally>)> = BTreeMap::new();
    let (mut ambiguous, mut errors) = (0, 0);
    for p in &predictions.predictions {
        let Some(q) = keys.get(p.question.as_str()) else {
            bail!("no answer key for question `{}`", p.question);
        };
        if q.scene != p.scene {
            bail!("prediction for `{}` names scene {} but the question is about scene {}", p.question, p.scene, q.scene);
        }
        if seen.insert(q.id.as_str(), true).is_some() {
            bail!("duplicate prediction for question `{}`", q.id);
        }
        let correct = p.error.is_none() && p.answer == q.answer;
        ambiguous += p.ambiguous as usize;
        errors += p.error.is_some() as usize;
        overall.add(correct);
        let entry = by_family
            .entry(q.family)
            .or_insert_with(|| (Tally::default(), vec![Tally::default(); OCCLUSION_EDGES.len()], vec![Tally::default(); PART_SIZE_BINS.len()]));
        entry.0.add(correct);
        entry.1[occlusion_bin(q.metadata.min_occlusion)].add(correct);
        if has_part_bins(q.family) {
            entry.2[part_size_bin(q.metadata.max_part_area)].add(correct);
        }
    }
    if let Some(q) = questions.questions.iter().find(|q| !seen.contains_key(q.id.as_str())) {
        bail!("question `{}` has no prediction", q.id);
    }

    let families: Vec<FamilyStat> = questions
        .families
        .iter()
        .map(|&family| {
            let (t, occ, part) = by_family.get(&family).cloned().unwrap_or_else(|| {
                (Tally::default(), vec![Tally::default(); OCCLUSION_EDGES.len()], vec![Tally::default(); PART_SIZE_BINS.len()])
            });
            FamilyStat {
                family,
                correct: t.correct,
                total: t.total,
                accuracy: t.accuracy(),
                occlusion_bins: bin_stats(&occlusion_labels(), &occ),
                occlusion_thresholds: bin_stats(&occlusion_labels(), &cumulative(&occ)),
                part_size_bins: if has_part_bins(family) {
                    bin_stats(&part_size_labels(), &part)
                } else {
                    Vec::new()
                },
            }
        })
        .collect();
    let accs: Vec<f64> = families.iter().filter_map(|f| f.accuracy).collect();
    Ok(EvalReport {
        schema: REPORT_SCHEMA.into(),
        label: label.into(),
        fingerprint: fingerprint(&predictions.config, questions),
        correct: overall.correct,
        total: overall.total,
        accuracy: overall.accuracy(),
        mean_family_accuracy: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
        ambiguous,
        execution_errors: errors,
        families,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: Option<f64>,
    /// Accuracy minus that of the first variant.
    pub delta: Option<f64>,
    pub family_accuracy: BTreeMap<String, Option<f64>>,
    pub family_delta: BTreeMap<String, Option<f64>>,
    pub detection: Option<DetectionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema: String,
    pub variants: Vec<String>,
    pub rows: Vec<AblationRow>,
    pub reports: Vec<EvalReport>,
}

impl AblationReport {
    pub fn new(runs: Vec<(EvalReport, Option<DetectionSummary>)>) -> Self {
        let base = runs.first().map(|(r, _)| r.clone());
        let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
        let rows = runs
            .iter()
            .map(|(r, det)| {
                let fam = |rep: &EvalReport| -> BTreeMap<String, Option<f64>> {
                    rep.families.iter().map(|f| (f.family.to_string(), f.accuracy)).collect()
                };
                let mine = fam(r);
                let theirs = base.as_ref().map(fam).unwrap_or_default();
                AblationRow {
                    variant: r.label.clone(),
                    accuracy: r.accuracy,
                    delta: diff(r.accuracy, base.as_ref().and_then(|b| b.accuracy)),
                    family_delta: mine.iter().map(|(k, &v)| (k.clone(), diff(v, theirs.get(k).copied().flatten()))).collect(),
                    family_accuracy: mine,
                    detection: det.clone(),
                }
            })
            .collect();
        Self {
            schema: ABLATION_SCHEMA.into(),
            variants: runs.iter().map(|(r, _)| r.label.clone()).collect(),
            rows,
            reports: runs.into_iter().map(|(r, _)| r).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("variant,family,accuracy,delta,detected,eligible,detections,duplicates,false_positives\n");
        for r in &self.rows {
            let d = r.detection.as_ref();
            let det = |f: fn(&DetectionSummary) -> usize| d.map(|d| f(d).to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},all,{},{},{},{},{},{},{}",
                r.variant,
                fmt(r.accuracy),
                fmt(r.delta),
                det(|d| d.detected),
                det(|d| d.eligible),
                det(|d| d.detections),
                det(|d| d.duplicates),
                det(|d| d.false_positives)
            );
            for (family, acc) in &r.family_accuracy {
                let _ = writeln!(out, "{},{family},{},{},,,,,", r.variant, fmt(*acc), fmt(r.family_delta[family]));
            }
        }
        out
    }
}
