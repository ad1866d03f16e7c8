//! Report, curve, and plot emission: CSV, aligned text tables, and
//! dependency-free SVG with the plotted data embedded as comments.
//! All formats are documented in `docs/formats.md`.

use crate::metrics::{Curve, CurveKind, EvalReport};
use crate::stats::PairwiseResult;

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Curve CSV: `threshold,x,y` per sweep point.
pub fn curve_csv(curve: &Curve) -> String {
    let mut out = String::from("threshold,x,y\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", fmt(p.threshold), fmt(p.x), fmt(p.y)));
    }
    out
}

/// One-row-per-report CSV of every scalar in an [`EvalReport`].
pub const REPORT_CSV_HEADER: &str = "model,period,auc_roc,auc_pr,accuracy,precision,recall,f1,\
brier,log_loss,optimal_threshold,tp_opt,fp_opt,tn_opt,fn_opt,accuracy_default,f1_default,\
tp_default,fp_default,tn_default,fn_default,n_samples,n_positive";

pub fn report_csv_row(model: &str, period: &str, r: &EvalReport) -> String {
    let o = &r.at_optimal;
    let d = &r.at_default;
    format!(
        "{model},{period},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        fmt(r.auc_roc),
        fmt(r.auc_pr),
        fmt(o.accuracy),
        fmt(o.precision),
        fmt(o.recall),
        fmt(o.f1),
        fmt(r.brier),
        fmt(r.log_loss),
        fmt(r.optimal_threshold),
        o.confusion.true_pos,
        o.confusion.false_pos,
        o.confusion.true_neg,
        o.confusion.false_neg,
        fmt(d.accuracy),
        fmt(d.f1),
        d.confusion.true_pos,
        d.confusion.false_pos,
        d.confusion.true_neg,
        d.confusion.false_neg,
        r.n_samples,
        r.n_positive,
    )
}

/// Human-readable block mirroring the headline table layout: ranking
/// metrics and the optimized-threshold block, then calibration scores and
/// both confusion matrices.
pub fn report_table(model: &str, period: &str, r: &EvalReport) -> String {
    let o = &r.at_optimal;
    let d = &r.at_default;
    let mut s = String::new();
    s.push_str(&format!("model: {model}    test period: {period}\n"));
    s.push_str(&format!(
        "  AUC-ROC {:.4}   AUC-PR {:.4}   accuracy {:.4}   F1 {:.4}\n",
        r.auc_roc, r.auc_pr, o.accuracy, o.f1
    ));
    s.push_str(&format!(
        "  Brier {:.4}   log loss {:.4}\n",
        r.brier, r.log_loss
    ));
    s.push_str(&format!(
        "  optimized threshold {:.6} (precision {:.4}, recall {:.4})\n",
        r.optimal_threshold, o.precision, o.recall
    ));
    s.push_str(&format!(
        "  confusion @optimal   tp {:>6}  fp {:>6}  tn {:>6}  fn {:>6}\n",
        o.confusion.true_pos, o.confusion.false_pos, o.confusion.true_neg, o.confusion.false_neg
    ));
    s.push_str(&format!(
        "  confusion @0.5       tp {:>6}  fp {:>6}  tn {:>6}  fn {:>6}\n",
        d.confusion.true_pos, d.confusion.false_pos, d.confusion.true_neg, d.confusion.false_neg
    ));
    s.push_str(&format!(
        "  samples {} ({} positive)\n",
        r.n_samples, r.n_positive
    ));
    s
}

/// Pairwise matrix CSV: one row per unordered model pair.
pub const PAIRWISE_CSV_HEADER: &str = "model_a,model_b,b,c,chi2,p_value,cohens_w,effect,n";

pub fn pairwise_csv(results: &[PairwiseResult]) -> String {
    let mut out = String::from(PAIRWISE_CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model_a,
            r.model_b,
            r.table.b,
            r.table.c,
            fmt(r.chi2),
            fmt(r.p_value),
            fmt(r.cohens_w),
            r.effect.label(),
            r.n
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

const SVG_W: f64 = 480.0;
const SVG_H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"monospace\" font-size=\"11\">\n\
         <title>{title}</title>\n\
         <rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    )
}

fn plot_x(x: f64) -> f64 {
    MARGIN + x * (SVG_W - 2.0 * MARGIN)
}

fn plot_y(y: f64) -> f64 {
    SVG_H - MARGIN - y * (SVG_H - 2.0 * MARGIN)
}

/// Standalone curve plot with the sweep data embedded as a CSV comment.
pub fn curve_svg(curve: &Curve, title: &str) -> String {
    let (x_label, y_label) = match curve.kind {
        CurveKind::Roc => ("false positive rate", "true positive rate"),
        CurveKind::Pr => ("recall", "precision"),
    };
    let mut s = svg_open(title);
    s.push_str(&format!(
        "<!-- data (threshold,x,y):\n{}-->\n",
        curve_csv(curve)
    ));
    // axes
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        plot_x(0.0),
        plot_y(0.0),
        plot_x(1.0),
        plot_y(0.0)
    ));
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        plot_x(0.0),
        plot_y(0.0),
        plot_x(0.0),
        plot_y(1.0)
    ));
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{tick}</text>\n",
            plot_x(tick),
            plot_y(0.0) + 16.0
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{tick}</text>\n",
            plot_x(0.0) - 6.0,
            plot_y(tick) + 4.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        plot_x(0.5),
        SVG_H - 12.0
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{y_label}</text>\n",
        plot_y(0.5),
        plot_y(0.5)
    ));
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n",
        SVG_W / 2.0
    ));
    // diagonal reference for ROC
    if curve.kind == CurveKind::Roc {
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n",
            plot_x(0.0),
            plot_y(0.0),
            plot_x(1.0),
            plot_y(1.0)
        ));
    }
    let pts: Vec<String> = curve
        .points
        .iter()
        .map(|p| format!("{:.2},{:.2}", plot_x(p.x), plot_y(p.y)))
        .collect();
    s.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        pts.join(" ")
    ));
    s.push_str("</svg>\n");
    s
}

/// Heat-map of pairwise p-values (darker = smaller p), with the matrix
/// embedded as a CSV comment.
pub fn pairwise_svg(results: &[PairwiseResult], title: &str) -> String {
    let mut names: Vec<String> = Vec::new();
    for r in results {
        if !names.contains(&r.model_a) {
            names.push(r.model_a.clone());
        }
        if !names.contains(&r.model_b) {
            names.push(r.model_b.clone());
        }
    }
    let n = names.len();
    let mut s = svg_open(title);
    s.push_str(&format!("<!-- data:\n{}-->\n", pairwise_csv(results)));
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n",
        SVG_W / 2.0
    ));
    let grid = (SVG_W.min(SVG_H) - 2.0 * MARGIN - 40.0) / n as f64;
    let ox = MARGIN + 50.0;
    let oy = MARGIN + 10.0;
    let cell_of = |a: &str, b: &str| -> Option<&PairwiseResult> {
        results
            .iter()
            .find(|r| (r.model_a == a && r.model_b == b) || (r.model_a == b && r.model_b == a))
    };
    for (i, row) in names.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{row}</text>\n",
            ox - 6.0,
            oy + (i as f64 + 0.6) * grid
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-45 {:.1} {:.1})\">{row}</text>\n",
            ox + (i as f64 + 0.5) * grid,
            oy - 8.0,
            ox + (i as f64 + 0.5) * grid,
            oy - 8.0
        ));
        for (j, col) in names.iter().enumerate() {
            let x = ox + j as f64 * grid;
            let y = oy + i as f64 * grid;
            if i == j {
                s.push_str(&format!(
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{grid:.1}\" height=\"{grid:.1}\" \
                     fill=\"#eeeeee\" stroke=\"white\"/>\n"
                ));
                continue;
            }
            let r = cell_of(row, col).expect("complete pairwise matrix");
            // log-scale shade: p = 1 -> white, p <= 1e-6 -> dark
            let intensity = ((-r.p_value.max(1e-300).log10()) / 6.0).clamp(0.0, 1.0);
            let shade = (235.0 - intensity * 180.0) as u8;
            s.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{grid:.1}\" height=\"{grid:.1}\" \
                 fill=\"rgb({shade},{shade},255)\" stroke=\"white\"/>\n"
            ));
            s.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.1e}</text>\n",
                x + grid / 2.0,
                y + grid / 2.0 + 4.0,
                r.p_value
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate;
    use crate::stats::pairwise_compare;

    fn sample_report() -> EvalReport {
        let scores = [0.9, 0.8, 0.7, 0.4, 0.3, 0.2];
        let labels = [1, 1, 0, 1, 0, 0];
        evaluate(&scores, &labels).unwrap()
    }

    #[test]
    fn report_csv_has_matching_column_count() {
        let header_cols = REPORT_CSV_HEADER.split(',').count();
        let row = report_csv_row("tcn", "2012-06-01_2012-06-30", &sample_report());
        assert_eq!(row.trim_end().split(',').count(), header_cols);
    }

    #[test]
    fn table_contains_every_metric_block() {
        let t = report_table("bilstm", "p", &sample_report());
        for needle in ["AUC-ROC", "AUC-PR", "Brier", "log loss", "confusion @optimal", "confusion @0.5"] {
            assert!(t.contains(needle), "missing {needle} in:\n{t}");
        }
    }

    #[test]
    fn svg_plots_embed_their_data() {
        let scores = [0.9, 0.8, 0.7, 0.4, 0.3, 0.2];
        let labels = [1, 1, 0, 1, 0, 0];
        let (roc, _) = crate::metrics::roc_auc(&scores, &labels).unwrap();
        let svg = curve_svg(&roc, "roc");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<!-- data"));
        assert!(svg.contains("polyline"));

        let preds: Vec<(String, Vec<u8>)> = [
            ("a", vec![1, 1, 0, 1, 0, 0]),
            ("b", vec![1, 0, 0, 1, 1, 0]),
            ("c", vec![0, 1, 1, 1, 0, 0]),
        ]
        .into_iter()
        .map(|(n, p)| (n.to_string(), p))
        .collect();
        let pw = pairwise_compare(&preds, &labels).unwrap();
        let svg = pairwise_svg(&pw, "p-values");
        assert!(svg.contains("rect"));
        assert!(svg.contains("<!-- data"));
    }
}
