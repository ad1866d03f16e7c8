//! Pairwise classifier comparison: McNemar's test and Cohen's w.
//!
//! The test statistic is the uncorrected `(b - c)^2 / (b + c)` over the
//! discordant counts; a flag enables the continuity-corrected variant for
//! sensitivity analysis. P-values come from the survival function of the
//! 1-df chi-square distribution, computed via the regularized upper
//! incomplete gamma function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2×2 agreement table between two classifiers on shared labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Both correct.
    pub a: usize,
    /// A correct, B wrong.
    pub b: usize,
    /// A wrong, B correct.
    pub c: usize,
    /// Both wrong.
    pub d: usize,
}

impl ContingencyTable {
    pub fn total(&self) -> usize {
        self.a + self.b + self.c + self.d
    }
}

/// Effect-size bands for Cohen's w (boundaries inclusive upward).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectSize {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectSize {
    pub fn classify(w: f64) -> Self {
        if w >= 0.5 {
            EffectSize::Large
        } else if w >= 0.3 {
            EffectSize::Medium
        } else if w >= 0.1 {
            EffectSize::Small
        } else {
            EffectSize::Negligible
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EffectSize::Negligible => "negligible",
            EffectSize::Small => "small",
            EffectSize::Medium => "medium",
            EffectSize::Large => "large",
        }
    }
}

/// Result of one pairwise McNemar comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub model_a: String,
    pub model_b: String,
    pub table: ContingencyTable,
    pub chi2: f64,
    pub p_value: f64,
    pub cohens_w: f64,
    pub effect: EffectSize,
    pub n: usize,
}

/// Count agreement/disagreement of two prediction vectors against labels.
pub fn contingency(preds_a: &[u8], preds_b: &[u8], labels: &[u8]) -> Result<ContingencyTable> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(Error::Contract(format!(
            "prediction lengths {}/{} do not match {} labels",
            preds_a.len(),
            preds_b.len(),
            labels.len()
        )));
    }
    let mut t = ContingencyTable::default();
    for i in 0..labels.len() {
        let a_ok = preds_a[i] == labels[i];
        let b_ok = preds_b[i] == labels[i];
        match (a_ok, b_ok) {
            (true, true) => t.a += 1,
            (true, false) => t.b += 1,
            (false, true) => t.c += 1,
            (false, false) => t.d += 1,
        }
    }
    Ok(t)
}

/// McNemar's chi-square statistic and p-value (no continuity correction).
pub fn mcnemar(table: &ContingencyTable) -> Result<(f64, f64)> {
    mcnemar_with(table, false)
}

/// McNemar with an optional continuity correction
/// `(|b - c| - 1)^2 / (b + c)` (clamped at zero).
pub fn mcnemar_with(table: &ContingencyTable, continuity_correction: bool) -> Result<(f64, f64)> {
    let (b, c) = (table.b as f64, table.c as f64);
    if table.b + table.c == 0 {
        return Err(Error::Metric(
            "McNemar is degenerate: the classifiers never disagree".into(),
        ));
    }
    let num = if continuity_correction {
        ((b - c).abs() - 1.0).max(0.0).powi(2)
    } else {
        (b - c).powi(2)
    };
    let chi2 = num / (b + c);
    Ok((chi2, chi2_sf_df1(chi2)?))
}

/// Survival function of the chi-square distribution with one degree of
/// freedom: `Q(1/2, x/2)`, the regularized upper incomplete gamma.
/// Absolute error is below 1e-12 on [0, 100].
pub fn chi2_sf_df1(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chi2_sf_df1 needs x >= 0, got {x}")));
    }
    Ok(gammq(0.5, x / 2.0))
}

/// Cohen's effect size `w = sqrt(chi2 / n)`.
pub fn cohens_w(chi2: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("cohens_w needs n > 0".into()));
    }
    if !(chi2 >= 0.0) {
        return Err(Error::Domain(format!("cohens_w needs chi2 >= 0, got {chi2}")));
    }
    Ok((chi2 / n as f64).sqrt())
}

/// All unordered pairwise comparisons between named prediction vectors.
pub fn pairwise_compare(
    predictions: &[(String, Vec<u8>)],
    labels: &[u8],
) -> Result<Vec<PairwiseResult>> {
    if predictions.len() < 2 {
        return Err(Error::Contract(
            "pairwise comparison needs at least two models".into(),
        ));
    }
    for (name, preds) in predictions {
        if preds.len() != labels.len() {
            return Err(Error::Contract(format!(
                "model `{name}` has {} predictions for {} labels",
                preds.len(),
                labels.len()
            )));
        }
    }
    let mut out = Vec::new();
    for i in 0..predictions.len() {
        for j in (i + 1)..predictions.len() {
            let table = contingency(&predictions[i].1, &predictions[j].1, labels)?;
            let (chi2, p_value) = mcnemar(&table)?;
            let w = cohens_w(chi2, table.total())?;
            out.push(PairwiseResult {
                model_a: predictions[i].0.clone(),
                model_b: predictions[j].0.clone(),
                table,
                chi2,
                p_value,
                cohens_w: w,
                effect: EffectSize::classify(w),
                n: table.total(),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma (series + continued fraction)
// ---------------------------------------------------------------------------

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 500;
const LN_GAMMA_HALF: f64 = 0.5723649429247001; // ln(sqrt(pi))

/// Regularized upper incomplete gamma Q(a, x) for a = 1/2 (general in `a`
/// but only exercised at 1/2 here).
fn gammq(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series_p(a, x)
    } else {
        gamma_cf_q(a, x)
    }
}

/// P(a, x) by series expansion (converges fast for x < a + 1).
fn gamma_series_p(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - LN_GAMMA_HALF).exp()
}

/// Q(a, x) by Lentz's continued fraction (for x >= a + 1).
fn gamma_cf_q(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - LN_GAMMA_HALF).exp() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contingency_hand_enumeration() {
        // predsA=(1,0,1,0), predsB=(1,1,0,0), labels=(1,1,1,0)
        let t = contingency(&[1, 0, 1, 0], &[1, 1, 0, 0], &[1, 1, 1, 0]).unwrap();
        assert_eq!(t, ContingencyTable { a: 2, b: 1, c: 1, d: 0 });

        let same = contingency(&[1, 0], &[1, 0], &[1, 1]).unwrap();
        assert_eq!((same.b, same.c), (0, 0));

        let t = contingency(&[1; 10], &[0; 10], &[1; 10]).unwrap();
        assert_eq!((t.b, t.c), (10, 0));
    }

    #[test]
    fn mcnemar_golden_values() {
        let (chi2, p) = mcnemar(&ContingencyTable { a: 0, b: 5, c: 5, d: 0 }).unwrap();
        assert_eq!(chi2, 0.0);
        assert_eq!(p, 1.0);

        let (chi2, p) = mcnemar(&ContingencyTable { a: 0, b: 10, c: 0, d: 0 }).unwrap();
        assert_eq!(chi2, 10.0);
        assert!((p - 1.565e-3).abs() < 1e-6, "p = {p}");

        assert!(mcnemar(&ContingencyTable { a: 3, b: 0, c: 0, d: 1 }).is_err());
    }

    #[test]
    fn mcnemar_is_symmetric_in_b_and_c() {
        let t1 = ContingencyTable { a: 50, b: 13, c: 4, d: 8 };
        let t2 = ContingencyTable { a: 50, b: 4, c: 13, d: 8 };
        assert_eq!(mcnemar(&t1).unwrap(), mcnemar(&t2).unwrap());
    }

    #[test]
    fn continuity_correction_shrinks_the_statistic() {
        let t = ContingencyTable { a: 0, b: 10, c: 3, d: 0 };
        let (chi2, _) = mcnemar(&t).unwrap();
        let (chi2_cc, _) = mcnemar_with(&t, true).unwrap();
        assert!((chi2 - 49.0 / 13.0).abs() < 1e-12);
        assert!((chi2_cc - 36.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn chi2_sf_golden_values() {
        assert_eq!(chi2_sf_df1(0.0).unwrap(), 1.0);
        let p = chi2_sf_df1(3.841459).unwrap();
        assert!((p - 0.05).abs() < 1e-6, "p = {p}");
        let p = chi2_sf_df1(10.0).unwrap();
        assert!((p - 1.565e-3).abs() < 1e-6, "p = {p}");
        assert!(chi2_sf_df1(-1.0).is_err());
    }

    #[test]
    fn cohens_w_golden_values() {
        assert_eq!(cohens_w(0.0, 10).unwrap(), 0.0);
        let w = cohens_w(25.0, 100).unwrap();
        assert_eq!(w, 0.5);
        assert_eq!(EffectSize::classify(w), EffectSize::Large);
        assert_eq!(cohens_w(1.0, 4).unwrap(), 0.5);
        assert!(cohens_w(1.0, 0).is_err());
    }

    #[test]
    fn pairwise_counts_pairs() {
        let labels = vec![1, 0, 1, 0, 1, 0];
        let models: Vec<(String, Vec<u8>)> = [
            ("m1", vec![1, 0, 1, 0, 1, 0]),
            ("m2", vec![1, 1, 0, 0, 1, 0]),
            ("m3", vec![0, 0, 1, 1, 1, 0]),
            ("m4", vec![1, 0, 0, 0, 0, 1]),
        ]
        .into_iter()
        .map(|(n, p)| (n.to_string(), p))
        .collect();
        let two = pairwise_compare(&models[..2], &labels).unwrap();
        assert_eq!(two.len(), 1);
        let all = pairwise_compare(&models, &labels).unwrap();
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|r| r.model_a != r.model_b));
        assert!(pairwise_compare(&models[..1], &labels).is_err());
    }
}
