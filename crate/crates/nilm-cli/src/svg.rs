//! Self-contained SVG line chart for loss curves; no external renderer.

use nilm_core::train::LossLog;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<f64>,
}

/// Render train/validation/test loss curves from one [`LossLog`].
pub fn loss_svg(log: &LossLog) -> String {
    let series = [
        Series { label: "train", color: "#1f77b4", values: log.rows.iter().map(|r| r.train).collect() },
        Series { label: "validation", color: "#ff7f0e", values: log.rows.iter().map(|r| r.val).collect() },
        Series { label: "test", color: "#2ca02c", values: log.rows.iter().map(|r| r.test).collect() },
    ];
    let n = log.rows.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &series {
        for &v in &s.values {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() || lo == hi {
        lo = 0.0;
        hi = hi.max(1.0);
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |epoch: usize| {
        MARGIN_L + if n <= 1 { 0.0 } else { epoch as f64 / (n - 1) as f64 * plot_w }
    };
    let y = |v: f64| MARGIN_T + (hi - v) / (hi - lo) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // Axes.
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    // Horizontal gridlines with value labels.
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let yy = y(v);
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{yy:.1}\" x2=\"{}\" y2=\"{yy:.1}\" \
             stroke=\"#ddd\"/>\n",
            WIDTH - MARGIN_R
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.4}</text>\n",
            MARGIN_L - 6.0,
            yy + 4.0
        ));
    }
    // Epoch labels.
    for i in 0..=4 {
        let epoch = if n <= 1 { 0 } else { (n - 1) * i / 4 };
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            x(epoch),
            HEIGHT - MARGIN_B + 18.0,
            epoch + 1
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">epoch</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">loss</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));
    // Curves and legend.
    for (i, s) in series.iter().enumerate() {
        if s.values.iter().all(|v| !v.is_finite()) {
            continue;
        }
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(e, &v)| format!("{:.1},{:.1}", x(e), y(v)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            s.color,
            points.join(" ")
        ));
        let lx = MARGIN_L + 12.0 + i as f64 * 110.0;
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            MARGIN_T - 12.0,
            lx + 24.0,
            MARGIN_T - 12.0,
            s.color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 30.0,
            MARGIN_T - 8.0,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nilm_core::train::LossRow;

    #[test]
    fn svg_contains_three_curves_and_no_external_refs() {
        let log = LossLog {
            rows: (0..10)
                .map(|i| LossRow {
                    train: 1.0 / (i + 1) as f64,
                    val: 1.1 / (i + 1) as f64,
                    test: 1.2 / (i + 1) as f64,
                })
                .collect(),
            best_epoch: 9,
        };
        let svg = loss_svg(&log);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("train") && svg.contains("validation") && svg.contains("test"));
        assert!(!svg.contains("href"), "SVG must be self-contained");
    }

    #[test]
    fn svg_handles_single_epoch_and_flat_loss() {
        let log = LossLog {
            rows: vec![LossRow { train: 0.5, val: 0.5, test: 0.5 }],
            best_epoch: 0,
        };
        let svg = loss_svg(&log);
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
