use super::HarnessError;
use crate::data::{load_eval_csv, load_train_csv};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional (x, lo, hi) shaded band.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

/// Data range padded by 5% on both sides; degenerate ranges get a
/// magnitude-scaled pad so single points still render.
fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = (lo.abs() * 0.05).max(1e-6);
        (lo - pad, hi + pad)
    }
}

/// Self-contained SVG line chart. Identical inputs produce identical
/// bytes: every coordinate is printed with fixed precision.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
        if let Some(band) = &s.band {
            for &(x, lo, hi) in band {
                xs.push(x);
                ys.push(lo);
                ys.push(hi);
            }
        }
    }
    let (x_min, x_max) = padded_range(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_min, y_max) = padded_range(
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="24" font-family="monospace" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        xml_escape(title)
    );
    // axes
    let _ = write!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{:.1}" stroke="black"/>"#,
        HEIGHT - MARGIN_B
    );
    let _ = write!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );
    // ticks
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let yv = y_min + f * (y_max - y_min);
        let _ = write!(
            svg,
            r#"<line x1="{:.2}" y1="{:.1}" x2="{:.2}" y2="{:.1}" stroke="black"/>"#,
            px(xv),
            HEIGHT - MARGIN_B,
            px(xv),
            HEIGHT - MARGIN_B + 5.0
        );
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{:.1}" font-family="monospace" font-size="11" text-anchor="middle">{:.4}</text>"#,
            px(xv),
            HEIGHT - MARGIN_B + 18.0,
            xv
        );
        let _ = write!(
            svg,
            r#"<line x1="{:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="black"/>"#,
            MARGIN_L - 5.0,
            py(yv),
            MARGIN_L,
            py(yv)
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.2}" font-family="monospace" font-size="11" text-anchor="end">{:.4}</text>"#,
            MARGIN_L - 8.0,
            py(yv) + 4.0,
            yv
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12" text-anchor="middle">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        xml_escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="16" y="{:.1}" font-family="monospace" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        xml_escape(y_label)
    );

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if let Some(band) = &s.band {
            if band.len() > 1 {
                let mut d = String::from("M");
                for &(x, lo, _) in band {
                    let _ = write!(d, " {:.6},{:.6}", px(x), py(lo));
                }
                for &(x, _, hi) in band.iter().rev() {
                    let _ = write!(d, " {:.6},{:.6}", px(x), py(hi));
                }
                d.push_str(" Z");
                let _ = write!(
                    svg,
                    r#"<path d="{d}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#
                );
            }
        }
        if s.points.len() == 1 {
            let (x, y) = s.points[0];
            let _ = write!(
                svg,
                r#"<circle cx="{:.6}" cy="{:.6}" r="4" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        } else if !s.points.is_empty() {
            let mut d = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let _ = write!(d, "{}{:.6},{:.6}", if i == 0 { "M" } else { " L" }, px(x), py(y));
            }
            let _ = write!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
            );
        }
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12" fill="{color}">{}</text>"#,
            MARGIN_L + 8.0,
            MARGIN_T + 14.0 + 14.0 * si as f64,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Charts for one run directory: learning curve from eval.csv, the
/// objective/meta losses from train.csv, and a KL curve when the
/// analysis has produced one.
pub fn emit_plots(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let eval = load_eval_csv(&run_dir.join("eval.csv"))?;
    if eval.is_empty() {
        return Err(HarnessError::Config(format!(
            "{}: eval.csv holds no records to plot",
            run_dir.display()
        )));
    }
    let mut written = Vec::new();

    let learning = Series {
        label: "mean dense return".to_string(),
        points: eval
            .iter()
            .map(|r| (r.step as f64, r.mean_dense_return))
            .collect(),
        band: Some(
            eval.iter()
                .map(|r| {
                    (
                        r.step as f64,
                        r.mean_dense_return - r.std_dense_return,
                        r.mean_dense_return + r.std_dense_return,
                    )
                })
                .collect(),
        ),
    };
    let svg = line_chart("learning curve", "environment step", "dense return", &[learning]);
    let p = out_dir.join("learning_curve.svg");
    std::fs::write(&p, svg)?;
    written.push(p);

    let train_path = run_dir.join("train.csv");
    if train_path.exists() {
        let train = load_train_csv(&train_path)?;
        if !train.is_empty() {
            let gild = Series {
                label: "objective loss".to_string(),
                points: train
                    .iter()
                    .map(|r| (r.step as f64, r.gild_loss))
                    .collect(),
                band: None,
            };
            let meta = Series {
                label: "meta loss".to_string(),
                points: train
                    .iter()
                    .map(|r| (r.step as f64, r.meta_loss))
                    .collect(),
                band: None,
            };
            let svg = line_chart("objective and meta losses", "environment step", "loss", &[gild, meta]);
            let p = out_dir.join("losses.svg");
            std::fs::write(&p, svg)?;
            written.push(p);
        }
    }

    let kl_path = run_dir.join("kl.csv");
    if kl_path.exists() {
        let text = std::fs::read_to_string(&kl_path)?;
        let mut points = Vec::new();
        for line in text.lines().skip(1) {
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let step: f64 = it.next().unwrap_or("0").parse().unwrap_or(0.0);
            let kl: f64 = it.next().unwrap_or("0").parse().unwrap_or(0.0);
            points.push((step, kl));
        }
        if !points.is_empty() {
            let series = Series {
                label: "KL to behavior".to_string(),
                points,
                band: None,
            };
            let svg = line_chart("policy divergence from behavior", "environment step", "KL", &[series]);
            let p = out_dir.join("kl.svg");
            std::fs::write(&p, svg)?;
            written.push(p);
        }
    }
    Ok(written)
}
