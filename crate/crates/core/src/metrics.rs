//! Confusion-based metrics for imbalanced data, PR/ROC curves and AUC.
//!
//! Abnormal is the positive class throughout. Zero-division conventions:
//! precision is 0 when nothing is predicted positive, recall is 0 when there
//! are no positives, F1 is 0 when precision + recall is 0, and a missing class
//! contributes 0 to balanced accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ClassLabel;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(labels: &[ClassLabel], decisions: &[ClassLabel]) -> Result<ConfusionCounts> {
    if labels.len() != decisions.len() {
        return Err(Error::Evaluation(format!(
            "{} labels but {} decisions",
            labels.len(),
            decisions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Evaluation("nothing to evaluate".into()));
    }
    let mut c = ConfusionCounts::default();
    for (l, d) in labels.iter().zip(decisions) {
        match (l.is_abnormal(), d.is_abnormal()) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl ScalarMetrics {
    pub const NAMES: [&'static str; 5] = ["f1", "balanced_accuracy", "precision", "recall", "accuracy"];

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "f1" => self.f1,
            "balanced_accuracy" => self.balanced_accuracy,
            "precision" => self.precision,
            "recall" => self.recall,
            "accuracy" => self.accuracy,
            _ => return None,
        })
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn scalar_metrics(c: &ConfusionCounts) -> ScalarMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ScalarMetrics {
        balanced_accuracy: 0.5 * (recall + specificity),
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `+inf` for the (0, 0) anchor.
    #[serde(with = "finite_or_inf")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

mod finite_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Cumulative (tp, fp) at each distinct score, descending; a sample is
/// predicted positive when its score is at least the threshold.
fn sweep(scores: &[f64], labels: &[ClassLabel]) -> Result<(Vec<(f64, usize, usize)>, usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite score {bad}")));
    }
    let pos = labels.iter().filter(|l| l.is_abnormal()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Evaluation("curves need both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i].is_abnormal() {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_tie {
            out.push((scores[i], tp, fp));
        }
    }
    Ok((out, pos, neg))
}

/// One `(recall, precision)` point per distinct score, thresholds descending.
pub fn pr_curve(scores: &[f64], labels: &[ClassLabel]) -> Result<Vec<PrPoint>> {
    let (steps, pos, _) = sweep(scores, labels)?;
    Ok(steps
        .into_iter()
        .map(|(threshold, tp, fp)| PrPoint {
            threshold,
            recall: tp as f64 / pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
        })
        .collect())
}

/// Step-wise area under the PR curve (average precision).
pub fn average_precision(points: &[PrPoint]) -> f64 {
    let mut prev = 0.0;
    points
        .iter()
        .map(|p| {
            let a = (p.recall - prev) * p.precision;
            prev = p.recall;
            a
        })
        .sum()
}

/// ROC points from (0, 0) to (1, 1) and the trapezoidal AUC.
pub fn roc_curve_and_auc(scores: &[f64], labels: &[ClassLabel]) -> Result<(Vec<RocPoint>, f64)> {
    let (steps, pos, neg) = sweep(scores, labels)?;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    points.extend(steps.into_iter().map(|(threshold, tp, fp)| RocPoint {
        threshold,
        fpr: fp as f64 / neg as f64,
        tpr: tp as f64 / pos as f64,
    }));
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum();
    Ok((points, auc))
}

/// Mann-Whitney form of the AUC with mid-ranks for ties: the probability that
/// a random abnormal sample outscores a random normal one, ties counting half.
pub fn auc_rank_statistic(scores: &[f64], labels: &[ClassLabel]) -> Result<f64> {
    let (_, pos, neg) = sweep(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[k]] {
            j += 1;
        }
        let mid = (k + j) as f64 / 2.0 + 1.0;
        rank_sum += order[k..=j].iter().filter(|&&i| labels[i].is_abnormal()).count() as f64 * mid;
        k = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub metrics: ScalarMetrics,
    pub auc_roc: f64,
    pub auc_pr: f64,
    /// Height of the no-skill PR line.
    pub positive_fraction: f64,
    pub pr_points: Vec<PrPoint>,
    pub roc_points: Vec<RocPoint>,
}

/// Full report from scores, the decisions made at a threshold, and true labels.
pub fn evaluate(labels: &[ClassLabel], scores: &[f64], decisions: &[ClassLabel]) -> Result<EvalReport> {
    let counts = confusion(labels, decisions)?;
    let pr_points = pr_curve(scores, labels)?;
    let (roc_points, auc_roc) = roc_curve_and_auc(scores, labels)?;
    Ok(EvalReport {
        counts,
        metrics: scalar_metrics(&counts),
        auc_roc,
        auc_pr: average_precision(&pr_points),
        positive_fraction: (counts.tp + counts.fn_) as f64 / counts.total() as f64,
        pr_points,
        roc_points,
    })
}

pub fn pr_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,recall,precision\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.recall, p.precision);
    }
    out
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    out
}

/// Side-by-side PR and ROC plots with no-skill reference lines.
pub fn curves_svg(report: &EvalReport, title: &str) -> String {
    const W: f64 = 320.0;
    const PAD: f64 = 40.0;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * (W + 2.0 * PAD),
        W + 2.0 * PAD + 20.0
    );
    let _ = write!(svg, r#"<text x="{}" y="16" font-size="13">{}</text>"#, PAD, escape(title));
    let panel = |svg: &mut String, ox: f64, name: &str, xl: &str, yl: &str, pts: &[(f64, f64)], skill: [(f64, f64); 2]| {
        let map = |(x, y): (f64, f64)| (ox + PAD + x * W, 20.0 + PAD + (1.0 - y) * W);
        let _ = write!(
            svg,
            r#"<rect x="{}" y="{}" width="{W}" height="{W}" fill="none" stroke="black"/>"#,
            ox + PAD,
            20.0 + PAD
        );
        let _ = write!(svg, r#"<text x="{}" y="{}">{}</text>"#, ox + PAD, 20.0 + PAD - 6.0, name);
        let _ = write!(svg, r#"<text x="{}" y="{}">{}</text>"#, ox + PAD + W / 2.0 - 20.0, 20.0 + 2.0 * PAD + W - 12.0, xl);
        let _ = write!(svg, r#"<text x="{}" y="{}">{}</text>"#, ox + 4.0, 20.0 + PAD + W / 2.0, yl);
        let (a, b) = (map(skill[0]), map(skill[1]));
        let _ = write!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            a.0, a.1, b.0, b.1
        );
        let path: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = write!(svg, r#"<polyline points="{}" fill="none" stroke="crimson" stroke-width="1.5"/>"#, path.join(" "));
    };
    let pr: Vec<(f64, f64)> = report.pr_points.iter().map(|p| (p.recall, p.precision)).collect();
    let roc: Vec<(f64, f64)> = report.roc_points.iter().map(|p| (p.fpr, p.tpr)).collect();
    let pf = report.positive_fraction;
    panel(
        &mut svg,
        0.0,
        &format!("Precision-recall (AP {:.3})", report.auc_pr),
        "recall",
        "precision",
        &pr,
        [(0.0, pf), (1.0, pf)],
    );
    panel(
        &mut svg,
        W + 2.0 * PAD,
        &format!("ROC (AUC {:.3})", report.auc_roc),
        "fpr",
        "tpr",
        &roc,
        [(0.0, 0.0), (1.0, 1.0)],
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean and population standard deviation of one metric over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        MeanStd {
            mean: stats::mean(values),
            std: stats::population_std(values),
        }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use ClassLabel::{Abnormal as A, Normal as N};

    fn labels(bits: &[u8]) -> Vec<ClassLabel> {
        bits.iter().map(|&b| ClassLabel::from_u8(b).unwrap()).collect()
    }

    #[test]
    fn confusion_example() {
        let l = labels(&[1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
        let d = labels(&[1, 1, 1, 0, 1, 1, 0, 0, 0, 0]);
        let c = confusion(&l, &d).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 3, fp: 2, tn: 4, fn_: 1 });
        let c = confusion(&l, &l).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion(&l, &[N; 10]).unwrap();
        assert_eq!((c.tp, c.fp), (0, 0));
        assert!(confusion(&l, &d[..3]).is_err());
    }

    #[test]
    fn metric_example() {
        let m = scalar_metrics(&ConfusionCounts { tp: 3, fp: 2, tn: 4, fn_: 1 });
        assert!((m.precision - 0.6).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.balanced_accuracy - 0.5 * (0.75 + 4.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_no_skill() {
        let m = scalar_metrics(&ConfusionCounts { tp: 4, fp: 0, tn: 6, fn_: 0 });
        assert_eq!([m.precision, m.recall, m.f1, m.balanced_accuracy, m.accuracy], [1.0; 5]);
        // Always-positive on a 10%-positive set.
        let m = scalar_metrics(&ConfusionCounts { tp: 1, fp: 9, tn: 0, fn_: 0 });
        assert!((m.accuracy - 0.1).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        // Conventions for empty denominators.
        let m = scalar_metrics(&ConfusionCounts { tp: 0, fp: 0, tn: 5, fn_: 0 });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.balanced_accuracy, 0.5);
    }

    #[test]
    fn pr_curve_cases() {
        let l = vec![A, A, N, N, N];
        let pts = pr_curve(&[0.9, 0.8, 0.3, 0.2, 0.1], &l).unwrap();
        assert!(pts.iter().any(|p| p.recall == 1.0 && p.precision == 1.0));
        assert!(pts.windows(2).all(|w| w[0].threshold > w[1].threshold));

        let pts = pr_curve(&[0.5; 5], &l).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!((pts[0].recall, pts[0].precision), (1.0, 0.4));
        assert!(pr_curve(&[0.1, 0.2], &[N, N]).is_err());
    }

    #[test]
    fn pr_no_skill_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 30_000;
        let l: Vec<_> = (0..n).map(|i| if i % 3 == 0 { A } else { N }).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let pts = pr_curve(&s, &l).unwrap();
        for p in pts.iter().filter(|p| p.recall > 0.1) {
            assert!((p.precision - 1.0 / 3.0).abs() < 0.05, "{p:?}");
        }
    }

    #[test]
    fn roc_cases() {
        let l = vec![A, A, N, N];
        let (pts, auc) = roc_curve_and_auc(&[0.9, 0.8, 0.2, 0.1], &l).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(roc_curve_and_auc(&[0.5; 4], &l).unwrap().1, 0.5);
        assert_eq!(roc_curve_and_auc(&[0.1, 0.2, 0.8, 0.9], &l).unwrap().1, 0.0);
    }

    /// O(n_pos * n_neg) concordance count.
    fn auc_pairs(scores: &[f64], labels: &[ClassLabel]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in labels.iter().enumerate() {
                if li.is_abnormal() && !lj.is_abnormal() {
                    den += 1.0;
                    num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_routes_agree_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let mut l: Vec<_> = (0..n).map(|_| if rng.random_bool(0.3) { A } else { N }).collect();
            l[0] = A;
            l[1] = N;
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
            let trap = roc_curve_and_auc(&s, &l).unwrap().1;
            let rank = auc_rank_statistic(&s, &l).unwrap();
            assert!((trap - rank).abs() < 1e-9);
            assert!((trap - auc_pairs(&s, &l)).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_transform_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l: Vec<_> = (0..40).map(|i| if i % 4 == 0 { A } else { N }).collect();
        let s: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + 1.0).collect();
        let (ra, aa) = roc_curve_and_auc(&s, &l).unwrap();
        let (rb, ab) = roc_curve_and_auc(&t, &l).unwrap();
        assert_eq!(aa, ab);
        let strip = |v: &[RocPoint]| v.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>();
        assert_eq!(strip(&ra), strip(&rb));
        let pa: Vec<_> = pr_curve(&s, &l).unwrap().iter().map(|p| (p.recall, p.precision)).collect();
        let pb: Vec<_> = pr_curve(&t, &l).unwrap().iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn svg_and_csv_render() {
        let l = vec![A, N, A, N];
        let s = [0.9, 0.4, 0.6, 0.1];
        let d: Vec<_> = s.iter().map(|&v| if v > 0.5 { A } else { N }).collect();
        let r = evaluate(&l, &s, &d).unwrap();
        assert!(curves_svg(&r, "t<1>").starts_with("<svg"));
        assert!(pr_csv(&r.pr_points).starts_with("threshold,recall,precision\n"));
        assert!(roc_csv(&r.roc_points).contains("inf,0,0"));
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest::proptest! {
        #[test]
        fn f1_between_precision_and_recall(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            let m = scalar_metrics(&ConfusionCounts { tp, fp, tn, fn_ });
            if m.precision + m.recall > 0.0 {
                proptest::prop_assert!(m.precision.min(m.recall) <= m.f1 + 1e-15);
                proptest::prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-15);
            }
        }
    }
}
