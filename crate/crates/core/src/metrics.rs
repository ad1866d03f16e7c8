//! Threshold-free and thresholded classification metrics.
//!
//! Curves are built from a descending-score threshold sweep with tied
//! scores grouped. AUC-ROC equals the probability that a random positive
//! outranks a random negative with ties counted 1/2 (the Mann-Whitney
//! statistic); AUC-PR uses the step-wise average-precision rule, which
//! differs from trapezoidal interpolation. The decision rule at a
//! threshold is `score >= threshold`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default clamp for log loss.
pub const LOG_LOSS_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    Roc,
    Pr,
}

/// One sweep point. For ROC x = false positive rate and y = true positive
/// rate; for PR x = recall and y = precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

/// Confusion counts at a fixed threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Scalar classification metrics at one threshold. A zero-denominator
/// precision or recall is reported as 0 with its flag set rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarReport {
    pub threshold: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub confusion: Confusion,
}

/// Full evaluation of one score vector against labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub brier: f64,
    pub log_loss: f64,
    pub optimal_threshold: f64,
    /// Metrics at the F1-optimal threshold.
    pub at_optimal: ScalarReport,
    /// Metrics at the default 0.5 threshold.
    pub at_default: ScalarReport,
    pub n_samples: usize,
    pub n_positive: usize,
}

fn validate_pair(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Metric("no samples".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("scores must be finite".into()));
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (labels.len() - pos, pos)
}

/// Indices grouped by distinct score, descending; each group carries
/// (score, positives, negatives).
fn score_groups(scores: &[f64], labels: &[u8]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                if labels[i] == 1 {
                    g.1 += 1;
                } else {
                    g.2 += 1;
                }
            }
            _ => groups.push((
                scores[i],
                usize::from(labels[i] == 1),
                usize::from(labels[i] != 1),
            )),
        }
    }
    groups
}

/// ROC curve and its area from a descending-score threshold sweep.
///
/// The curve starts at (0,0) with threshold +inf and ends at (1,1); the
/// area equals the tie-aware pairwise ranking probability exactly.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<(Curve, f64)> {
    validate_pair(scores, labels)?;
    let (neg, pos) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(
            "AUC-ROC needs both classes present".into(),
        ));
    }
    let groups = score_groups(scores, labels);
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    // Numerator accumulates wins + ties/2 exactly (products of counts are
    // integers, halved sums stay exact in f64).
    let mut area2 = 0.0f64;
    for (score, p, n) in groups {
        let (tp_prev, fp_prev) = (tp, fp);
        tp += p;
        fp += n;
        area2 += ((fp - fp_prev) * (tp + tp_prev)) as f64;
        points.push(CurvePoint {
            threshold: score,
            x: fp as f64 / neg as f64,
            y: tp as f64 / pos as f64,
        });
    }
    let auc = area2 / 2.0 / (pos as f64 * neg as f64);
    Ok((
        Curve {
            kind: CurveKind::Roc,
            points,
        },
        auc,
    ))
}

/// Precision-recall curve and its area by the average-precision rule
/// `AP = sum (R_k - R_{k-1}) * P_k` over the sweep.
///
/// The curve starts at the conventional (recall 0, precision 1) anchor
/// and ends at recall 1, where precision equals the positive base rate.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<(Curve, f64)> {
    validate_pair(scores, labels)?;
    let (_, pos) = class_counts(labels);
    if pos == 0 {
        return Err(Error::Metric("AUC-PR needs at least one positive".into()));
    }
    let groups = score_groups(scores, labels);
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut recall_prev = 0.0;
    for (score, p, n) in groups {
        tp += p;
        fp += n;
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - recall_prev) * precision;
        recall_prev = recall;
        points.push(CurvePoint {
            threshold: score,
            x: recall,
            y: precision,
        });
    }
    Ok((
        Curve {
            kind: CurveKind::Pr,
            points,
        },
        ap,
    ))
}

/// Threshold maximizing F1 over all candidate thresholds (the distinct
/// scores); ties break toward the higher threshold (fewer alarms).
pub fn optimize_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    validate_pair(scores, labels)?;
    let (neg, pos) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(
            "threshold optimization needs both classes present".into(),
        ));
    }
    let groups = score_groups(scores, labels);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for (score, p, n) in groups {
        tp += p;
        fp += n;
        let fn_count = pos - tp;
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_count) as f64;
        // strictly-greater keeps the first (= highest) threshold on ties
        if f1 > best.1 {
            best = (score, f1);
        }
    }
    Ok(best)
}

/// Confusion counts and derived rates at a fixed threshold
/// (`prediction = score >= threshold`).
pub fn classification_report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ScalarReport> {
    validate_pair(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, y == 1) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    let accuracy = (c.true_pos + c.true_neg) as f64 / c.total() as f64;
    let p_den = c.true_pos + c.false_pos;
    let r_den = c.true_pos + c.false_neg;
    let precision = if p_den > 0 {
        c.true_pos as f64 / p_den as f64
    } else {
        0.0
    };
    let recall = if r_den > 0 {
        c.true_pos as f64 / r_den as f64
    } else {
        0.0
    };
    let f1_den = 2 * c.true_pos + c.false_pos + c.false_neg;
    let f1 = if f1_den > 0 {
        2.0 * c.true_pos as f64 / f1_den as f64
    } else {
        0.0
    };
    Ok(ScalarReport {
        threshold,
        accuracy,
        precision,
        recall,
        f1,
        precision_degenerate: p_den == 0,
        recall_degenerate: r_den == 0,
        confusion: c,
    })
}

/// Mean squared probability error, in [0, 1].
pub fn brier(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_pair(scores, labels)?;
    if scores.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
        return Err(Error::Metric("Brier score needs probabilities in [0, 1]".into()));
    }
    let n = scores.len() as f64;
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - f64::from(y)).powi(2))
        .sum::<f64>()
        / n)
}

/// Mean negative log-likelihood with scores clamped to `[eps, 1-eps]`.
pub fn log_loss(scores: &[f64], labels: &[u8], eps: f64) -> Result<f64> {
    validate_pair(scores, labels)?;
    if scores.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
        return Err(Error::Metric("log loss needs probabilities in [0, 1]".into()));
    }
    let n = scores.len() as f64;
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let pc = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -pc.ln()
            } else {
                -(1.0 - pc).ln()
            }
        })
        .sum::<f64>()
        / n)
}

/// Bundle the full evaluation: curves' areas, calibration scores, and
/// scalar blocks at the optimized and default thresholds.
pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<EvalReport> {
    let (_, auc_roc) = roc_auc(scores, labels)?;
    let (_, auc_pr) = pr_auc(scores, labels)?;
    let (optimal_threshold, _) = optimize_threshold(scores, labels)?;
    let (_, pos) = class_counts(labels);
    Ok(EvalReport {
        auc_roc,
        auc_pr,
        brier: brier(scores, labels)?,
        log_loss: log_loss(scores, labels, LOG_LOSS_EPS)?,
        optimal_threshold,
        at_optimal: classification_report(scores, labels, optimal_threshold)?,
        at_default: classification_report(scores, labels, 0.5)?,
        n_samples: scores.len(),
        n_positive: pos,
    })
}

// ---------------------------------------------------------------------------
// Brute-force oracles (test support)
// ---------------------------------------------------------------------------

/// O(n²) pairwise AUC oracle: wins + ties/2 over all (positive, negative)
/// pairs. Kept independent of the sweep implementation.
pub fn roc_auc_bruteforce(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0u64;
    let mut ties = 0u64;
    let mut pairs = 0u64;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj == 1 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / pairs as f64
}

/// Exhaustive-grid F1 oracle over every distinct score as threshold.
pub fn max_f1_bruteforce(scores: &[f64], labels: &[u8]) -> f64 {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    distinct.dedup();
    let mut best = 0.0f64;
    for &th in &distinct {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_count = 0usize;
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= th, y == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_count += 1,
                _ => {}
            }
        }
        let den = 2 * tp + fp + fn_count;
        if den > 0 {
            best = best.max(2.0 * tp as f64 / den as f64);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_has_unit_auc() {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let (curve, auc) = roc_auc(&scores, &[1, 1, 0, 0]).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(curve.points.first().map(|p| (p.x, p.y)), Some((0.0, 0.0)));
        assert_eq!(curve.points.last().map(|p| (p.x, p.y)), Some((1.0, 1.0)));

        let (_, auc) = roc_auc(&scores, &[0, 1, 0, 1]).unwrap();
        assert_eq!(auc, 0.25);
        let (_, auc) = roc_auc(&scores, &[0, 0, 1, 1]).unwrap();
        assert_eq!(auc, 0.0);
    }

    #[test]
    fn auc_matches_bruteforce_with_ties() {
        let scores = [0.5, 0.5, 0.5, 0.2, 0.8, 0.2];
        let labels = [1, 0, 1, 0, 1, 1];
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        assert_eq!(auc, roc_auc_bruteforce(&scores, &labels));
    }

    #[test]
    fn single_class_is_a_metric_error() {
        assert!(matches!(
            roc_auc(&[0.1, 0.9], &[1, 1]),
            Err(Error::Metric(_))
        ));
        assert!(matches!(pr_auc(&[0.1, 0.9], &[0, 0]), Err(Error::Metric(_))));
    }

    #[test]
    fn pr_auc_known_cases() {
        // perfect separation
        let (_, ap) = pr_auc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(ap, 1.0);
        // constant score: AP equals the positive rate
        let (_, ap) = pr_auc(&[0.4; 8], &[1, 0, 0, 0, 1, 0, 0, 0]).unwrap();
        assert!((ap - 0.25).abs() < 1e-15);
        // single positive ranked first among 4
        let (_, ap) = pr_auc(&[0.9, 0.5, 0.4, 0.3], &[1, 0, 0, 0]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn optimal_threshold_prefers_fewer_alarms() {
        let (th, f1) = optimize_threshold(&[0.9, 0.6, 0.4], &[1, 1, 0]).unwrap();
        assert_eq!(th, 0.6);
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn reversed_ranking_maxes_f1_at_predict_all() {
        // all positives scored below all negatives: best F1 = 2 pi/(pi+1)
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [1, 1, 0, 0];
        let (_, f1) = optimize_threshold(&scores, &labels).unwrap();
        let pi = 0.5;
        assert!((f1 - 2.0 * pi / (pi + 1.0)).abs() < 1e-12);
        assert_eq!(f1, max_f1_bruteforce(&scores, &labels));
    }

    #[test]
    fn report_arithmetic() {
        // tp=3 fp=1 fn=1 tn=5
        let scores = [0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let labels = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
        let r = classification_report(&scores, &labels, 0.5).unwrap();
        assert_eq!(r.confusion.true_pos, 3);
        assert_eq!(r.confusion.false_pos, 1);
        assert_eq!(r.confusion.false_neg, 1);
        assert_eq!(r.confusion.true_neg, 5);
        assert!((r.precision - 0.75).abs() < 1e-15);
        assert!((r.recall - 0.75).abs() < 1e-15);
        assert!((r.f1 - 0.75).abs() < 1e-15);
        assert!((r.accuracy - 0.8).abs() < 1e-15);
    }

    #[test]
    fn degenerate_denominators_are_flagged_zeros() {
        let r = classification_report(&[0.1, 0.2], &[1, 0], 0.9).unwrap();
        assert_eq!(r.precision, 0.0);
        assert!(r.precision_degenerate);
        assert_eq!(r.recall, 0.0);
        assert!(!r.recall_degenerate);
    }

    #[test]
    fn brier_known_values() {
        assert_eq!(brier(&[1.0, 0.0], &[1, 0]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5, 0.5], &[1, 0]).unwrap(), 0.25);
        let b = brier(&[0.8, 0.4], &[1, 0]).unwrap();
        assert!((b - 0.10).abs() < 1e-12);
    }

    #[test]
    fn log_loss_known_values() {
        let ll = log_loss(&[0.5; 4], &[1, 0, 1, 0], LOG_LOSS_EPS).unwrap();
        assert!((ll - 0.693147).abs() < 1e-6);
        let ll = log_loss(&[0.9], &[1], LOG_LOSS_EPS).unwrap();
        assert!((ll - 0.105361).abs() < 1e-6);
        let ll = log_loss(&[1.0, 0.0], &[1, 0], LOG_LOSS_EPS).unwrap();
        assert!(ll > 0.0 && ll < 2e-15);
    }

    #[test]
    fn constant_predictor_scores_minimize_at_base_rate() {
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i < 6)).collect(); // pi = 0.3
        let mut best_brier = (f64::INFINITY, 0.0);
        let mut best_ll = (f64::INFINITY, 0.0);
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let scores = vec![p; labels.len()];
            let b = brier(&scores, &labels).unwrap();
            let l = log_loss(&scores, &labels, LOG_LOSS_EPS).unwrap();
            if b < best_brier.0 {
                best_brier = (b, p);
            }
            if l < best_ll.0 {
                best_ll = (l, p);
            }
        }
        assert!((best_brier.1 - 0.3).abs() < 0.011);
        assert!((best_ll.1 - 0.3).abs() < 0.011);
    }
}
