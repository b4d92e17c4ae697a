//! Hand-rolled SVG figures: information curves over epochs (deeper layers in
//! darker shades, optional right-hand accuracy axis, SEM bands for
//! aggregates) and 2-D principal-component scatters of captured activations.

use crate::error::{Error, Result};
use crate::harness::{RunRecord, SweepAggregate};
use crate::probe::ActivationMatrix;
use crate::task::LabelKind;
use crate::Matrix64;

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 64.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;

#[derive(Debug, Clone)]
pub struct FigureSpec {
    /// Plot unclamped estimates (negative values visible) instead of the
    /// clamped default.
    pub show_raw: bool,
    /// Add validation accuracy on a right-hand axis, dashed.
    pub with_accuracy: bool,
    /// Restrict to these layer indices (default: all probed layers).
    pub layers: Option<Vec<usize>>,
    /// Restrict to these label kinds (default: all probed kinds).
    pub kinds: Option<Vec<LabelKind>>,
    pub title: Option<String>,
}

impl Default for FigureSpec {
    fn default() -> Self {
        FigureSpec {
            show_raw: false,
            with_accuracy: true,
            layers: None,
            kinds: None,
            title: None,
        }
    }
}

struct Series {
    label: String,
    color: String,
    dashed: bool,
    right_axis: bool,
    points: Vec<(f64, f64)>,
    /// (x, low, high) band, drawn at low opacity.
    band: Option<Vec<(f64, f64, f64)>>,
}

struct CurveFigure {
    title: String,
    series: Vec<Series>,
    y_min: f64,
    y_max: f64,
    x_max: f64,
}

/// Shade from light to dark as depth increases. `rank` in `0..total`.
fn shade(kind: LabelKind, rank: usize, total: usize) -> String {
    // (light, dark) endpoints per kind; blue for direction, orange for
    // color, purple for coarse.
    let (light, dark) = match kind {
        LabelKind::Direction => ((158, 202, 225), (8, 48, 107)),
        LabelKind::Color => ((253, 208, 162), (127, 39, 4)),
        LabelKind::Coarse => ((188, 189, 220), (63, 0, 125)),
    };
    let t = if total <= 1 {
        1.0
    } else {
        rank as f64 / (total - 1) as f64
    };
    let mix = |a: i32, b: i32| (a as f64 + t * (b - a) as f64).round() as i32;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(light.0, dark.0),
        mix(light.1, dark.1),
        mix(light.2, dark.2)
    )
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn selected_layers(all: &[usize], spec: &FigureSpec) -> Vec<usize> {
    match &spec.layers {
        None => all.to_vec(),
        Some(want) => all.iter().copied().filter(|l| want.contains(l)).collect(),
    }
}

fn selected_kinds(all: &[LabelKind], spec: &FigureSpec) -> Vec<LabelKind> {
    match &spec.kinds {
        None => all.to_vec(),
        Some(want) => all.iter().copied().filter(|k| want.contains(k)).collect(),
    }
}

/// Information curves for a single run.
pub fn render_info_curves(record: &RunRecord, spec: &FigureSpec) -> Result<String> {
    let layers = selected_layers(&record.plan.network.probe_points(), spec);
    let kinds = selected_kinds(&record.plan.probed_kinds, spec);
    if layers.is_empty() || kinds.is_empty() || record.info.is_empty() {
        return Err(Error::input("nothing selected to plot"));
    }

    let mut series = Vec::new();
    let mut y_min = 0.0f64;
    let mut y_max = 0.0f64;
    for &kind in &kinds {
        y_max = y_max.max((record.plan.task.classes(kind) as f64).log2());
        for (rank, &layer) in layers.iter().enumerate() {
            let points: Vec<(f64, f64)> = record
                .info
                .iter()
                .filter(|p| p.estimate.layer_index == layer && p.estimate.label_kind == kind)
                .map(|p| {
                    let v = if spec.show_raw {
                        p.estimate.iu_raw_bits
                    } else {
                        p.estimate.iu_bits
                    };
                    (p.estimate.epoch as f64, v)
                })
                .collect();
            if points.is_empty() {
                continue;
            }
            if spec.show_raw {
                y_min = points.iter().map(|p| p.1).fold(y_min, f64::min);
            }
            series.push(Series {
                label: format!("{kind} layer {layer}"),
                color: shade(kind, rank, layers.len()),
                dashed: false,
                right_axis: false,
                points,
                band: None,
            });
        }
    }
    if series.is_empty() {
        return Err(Error::input("selection matches no recorded estimates"));
    }
    if spec.with_accuracy && !record.metrics.is_empty() {
        series.push(Series {
            label: "val acc".into(),
            color: "#2ca02c".into(),
            dashed: true,
            right_axis: true,
            points: record
                .metrics
                .iter()
                .map(|m| (m.epoch as f64 + 1.0, m.val_acc))
                .collect(),
            band: None,
        });
    }

    let x_max = record.plan.total_epochs() as f64;
    Ok(render_curve_figure(&CurveFigure {
        title: spec
            .title
            .clone()
            .unwrap_or_else(|| format!("usable information, seed {}", record.seed)),
        series,
        y_min,
        y_max,
        x_max: x_max.max(1.0),
    }))
}

/// Mean curves with SEM bands for a seed sweep. The plan supplies layer
/// ordering and entropy ceilings.
pub fn render_aggregate_curves(
    aggregate: &SweepAggregate,
    plan: &crate::harness::ExperimentPlan,
    spec: &FigureSpec,
) -> Result<String> {
    let layers = selected_layers(&plan.network.probe_points(), spec);
    let kinds = selected_kinds(&plan.probed_kinds, spec);
    if layers.is_empty() || kinds.is_empty() || aggregate.info.is_empty() {
        return Err(Error::input("nothing selected to plot"));
    }

    let mut series = Vec::new();
    let mut y_max = 0.0f64;
    for &kind in &kinds {
        y_max = y_max.max((plan.task.classes(kind) as f64).log2());
        for (rank, &layer) in layers.iter().enumerate() {
            let mut points = Vec::new();
            let mut band = Vec::new();
            for p in aggregate
                .info
                .iter()
                .filter(|p| p.layer_index == layer && p.label_kind == kind)
            {
                points.push((p.epoch as f64, p.mean_iu_bits));
                band.push((
                    p.epoch as f64,
                    p.mean_iu_bits - p.sem_iu_bits,
                    p.mean_iu_bits + p.sem_iu_bits,
                ));
            }
            if points.is_empty() {
                continue;
            }
            series.push(Series {
                label: format!("{kind} layer {layer}"),
                color: shade(kind, rank, layers.len()),
                dashed: false,
                right_axis: false,
                points,
                band: Some(band),
            });
        }
    }
    if series.is_empty() {
        return Err(Error::input("selection matches no aggregate points"));
    }
    if spec.with_accuracy && !aggregate.accuracy.is_empty() {
        series.push(Series {
            label: "val acc".into(),
            color: "#2ca02c".into(),
            dashed: true,
            right_axis: true,
            points: aggregate
                .accuracy
                .iter()
                .map(|a| (a.epoch as f64 + 1.0, a.mean_val_acc))
                .collect(),
            band: Some(
                aggregate
                    .accuracy
                    .iter()
                    .map(|a| {
                        (
                            a.epoch as f64 + 1.0,
                            a.mean_val_acc - a.sem_val_acc,
                            a.mean_val_acc + a.sem_val_acc,
                        )
                    })
                    .collect(),
            ),
        });
    }

    let x_max = plan.total_epochs() as f64;
    Ok(render_curve_figure(&CurveFigure {
        title: spec.title.clone().unwrap_or_else(|| {
            format!("usable information, mean over {} seeds", aggregate.seeds.len())
        }),
        series,
        y_min: 0.0,
        y_max,
        x_max: x_max.max(1.0),
    }))
}

fn nice_ticks(max: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| max * i as f64 / count as f64).collect()
}

fn render_curve_figure(fig: &CurveFigure) -> String {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let y_span = (fig.y_max - fig.y_min).max(1e-9);
    let sx = |x: f64| MARGIN_L + x / fig.x_max.max(1e-9) * plot_w;
    let sy = |y: f64| MARGIN_T + (fig.y_max - y) / y_span * plot_h;
    let sy_acc = |y: f64| MARGIN_T + (1.0 - y) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        esc(&fig.title)
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
    for t in nice_ticks(fig.x_max, 5) {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(t),
            HEIGHT - MARGIN_B + 16.0,
            t
        ));
    }
    for i in 0..=4 {
        let y = fig.y_min + y_span * i as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{y:.2}</text>\n",
            MARGIN_L - 6.0,
            sy(y) + 4.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">usable information (bits)</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));

    // Zero line when raw values dip below it.
    if fig.y_min < 0.0 {
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{}\" y2=\"{:.1}\" stroke=\"#999999\" stroke-dasharray=\"2,3\"/>\n",
            sy(0.0),
            WIDTH - MARGIN_R,
            sy(0.0)
        ));
    }

    let has_right_axis = fig.series.iter().any(|s| s.right_axis);
    if has_right_axis {
        let x = WIDTH - MARGIN_R;
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{MARGIN_T}\" x2=\"{x}\" y2=\"{}\" stroke=\"#2ca02c\"/>\n",
            HEIGHT - MARGIN_B
        ));
        for i in 0..=4 {
            let v = i as f64 / 4.0;
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#2ca02c\">{v:.2}</text>\n",
                x + 6.0,
                sy_acc(v) + 4.0
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#2ca02c\" text-anchor=\"middle\" transform=\"rotate(90 {} {})\">validation accuracy</text>\n",
            WIDTH - 14.0,
            MARGIN_T + plot_h / 2.0,
            WIDTH - 14.0,
            MARGIN_T + plot_h / 2.0
        ));
    }

    for s in &fig.series {
        let project: &dyn Fn(f64) -> f64 = if s.right_axis { &sy_acc } else { &sy };
        if let Some(band) = &s.band {
            if band.len() > 1 {
                let mut d = String::from("M");
                for (x, lo, _) in band {
                    d.push_str(&format!(" {:.2},{:.2}", sx(*x), project(*lo)));
                }
                for (x, _, hi) in band.iter().rev() {
                    d.push_str(&format!(" {:.2},{:.2}", sx(*x), project(*hi)));
                }
                d.push_str(" Z");
                out.push_str(&format!(
                    "<path d=\"{d}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
                    s.color
                ));
            }
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), project(*y)))
            .collect();
        let dash = if s.dashed {
            " stroke-dasharray=\"6,4\""
        } else {
            ""
        };
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{dash}/>\n",
            pts.join(" "),
            s.color
        ));
    }

    // Legend, top-left corner of the plot area.
    let mut ly = MARGIN_T + 6.0;
    for s in &fig.series {
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
            MARGIN_L + 8.0,
            MARGIN_L + 28.0,
            s.color,
            if s.dashed { " stroke-dasharray=\"6,4\"" } else { "" }
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            MARGIN_L + 32.0,
            ly + 3.0,
            esc(&s.label)
        ));
        ly += 13.0;
    }

    out.push_str("</svg>\n");
    out
}

/// Top-2 principal components of the rows of `x` (columns centered first).
/// Deterministic: each component's largest-magnitude loading is positive.
pub fn principal_components_2d(x: &Matrix64) -> Result<Matrix64> {
    let (n, d) = x.dim();
    if d < 2 {
        return Err(Error::input(format!(
            "need at least 2 feature columns for a 2-D projection, got {d}"
        )));
    }
    if n == 0 {
        return Err(Error::input("no rows to project"));
    }
    let mean = x.sum_axis(ndarray::Axis(0)) / n as f64;
    let centered = x - &mean;
    if n == 1 {
        return Ok(Matrix64::zeros((1, 2)));
    }
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let (_, vectors) = jacobi_eigh(&cov);
    // jacobi_eigh returns descending eigenvalues; columns are eigenvectors.
    let mut basis = Matrix64::zeros((d, 2));
    for c in 0..2 {
        let col = vectors.column(c);
        let dominant = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).expect("finite"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let sign = if col[dominant] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            basis[[r, c]] = col[r] * sign;
        }
    }
    Ok(centered.dot(&basis))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
fn jacobi_eigh(m: &Matrix64) -> (Vec<f64>, Matrix64) {
    let d = m.nrows();
    let mut a = m.clone();
    let mut v = Matrix64::eye(d);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[[p, q]].abs() < 1e-18 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).expect("finite"));
    let values: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Matrix64::zeros((d, d));
    for (c, &i) in order.iter().enumerate() {
        for r in 0..d {
            vectors[[r, c]] = v[[r, i]];
        }
    }
    (values, vectors)
}

const MARKER_COLORS: [&str; 10] = [
    "#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn marker(shape: usize, x: f64, y: f64, color: &str) -> String {
    match shape % 5 {
        0 => format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>\n"),
        1 => format!(
            "<path d=\"M {a:.2},{b:.2} L {c:.2},{d:.2} M {a:.2},{d:.2} L {c:.2},{b:.2}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            a = x - 3.0, b = y - 3.0, c = x + 3.0, d = y + 3.0
        ),
        2 => format!(
            "<path d=\"M {x:.2},{:.2} L {:.2},{:.2} L {:.2},{:.2} Z\" fill=\"{color}\" fill-opacity=\"0.7\"/>\n",
            y - 3.5, x - 3.0, y + 3.0, x + 3.0, y + 3.0
        ),
        3 => format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"6\" height=\"6\" fill=\"{color}\" fill-opacity=\"0.7\"/>\n",
            x - 3.0, y - 3.0
        ),
        _ => format!(
            "<path d=\"M {x:.2},{:.2} L {:.2},{y:.2} L {x:.2},{:.2} L {:.2},{y:.2} Z\" fill=\"{color}\" fill-opacity=\"0.7\"/>\n",
            y - 4.0, x + 4.0, y + 4.0, x - 4.0
        ),
    }
}

/// Scatter of a captured layer projected onto its top two principal
/// components; marker shape encodes direction, marker color encodes the
/// color label.
pub fn render_scatter(acts: &ActivationMatrix<f64>) -> Result<String> {
    let proj = principal_components_2d(&acts.values)?;
    let n = proj.nrows();

    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for row in proj.rows() {
        x_min = x_min.min(row[0]);
        x_max = x_max.max(row[0]);
        y_min = y_min.min(row[1]);
        y_max = y_max.max(row[1]);
    }
    let pad = |lo: &mut f64, hi: &mut f64| {
        let span = (*hi - *lo).max(1e-9);
        *lo -= span * 0.08;
        *hi += span * 0.08;
    };
    pad(&mut x_min, &mut x_max);
    pad(&mut y_min, &mut y_max);

    let sx = |v: f64| MARGIN_L + (v - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
    let sy = |v: f64| MARGIN_T + (y_max - v) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">layer {} activations at epoch {} (PC1 vs PC2; shape = direction, color = color label)</text>\n",
        WIDTH / 2.0,
        acts.layer_index,
        acts.epoch
    ));
    for i in 0..n {
        let shape = acts.labels.direction[i];
        let color = MARKER_COLORS[acts.labels.color[i] % MARKER_COLORS.len()];
        out.push_str(&marker(shape, sx(proj[[i, 0]]), sy(proj[[i, 1]]), color));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::LabelFrame;
    use crate::rng::rng_from_seed;
    use crate::Scalar;

    /// Minimal well-formedness check: tags balance and attributes are quoted.
    pub(crate) fn assert_well_formed_svg(doc: &str) {
        assert!(doc.starts_with("<svg"));
        assert!(doc.contains("width="));
        assert!(doc.contains("height="));
        let mut stack: Vec<String> = Vec::new();
        let mut rest = doc;
        while let Some(start) = rest.find('<') {
            let end = rest[start..].find('>').expect("unclosed tag") + start;
            let tag = &rest[start + 1..end];
            rest = &rest[end + 1..];
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("stray </{name}>"));
                assert_eq!(open, name, "mismatched tag");
            } else if !tag.ends_with('/') {
                let name: String = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    fn toy_acts(rows: usize, width: usize) -> ActivationMatrix<f64> {
        let mut rng = rng_from_seed(3);
        let values = Matrix64::from_shape_fn((rows, width), |_| f64::standard_normal(&mut rng));
        ActivationMatrix {
            layer_index: 1,
            epoch: 7,
            values,
            labels: LabelFrame {
                direction: (0..rows).map(|i| i % 2).collect(),
                color: (0..rows).map(|i| (i / 2) % 2).collect(),
                coarse: vec![0; rows],
                direction_classes: 2,
                coarse_classes: 2,
            },
        }
    }

    #[test]
    fn scatter_is_well_formed_and_guards_width() {
        let doc = render_scatter(&toy_acts(24, 3)).unwrap();
        assert_well_formed_svg(&doc);

        let narrow = toy_acts(5, 1);
        assert!(render_scatter(&narrow).is_err());
    }

    #[test]
    fn scatter_handles_a_single_sample() {
        let doc = render_scatter(&toy_acts(1, 4)).unwrap();
        assert_well_formed_svg(&doc);
        assert!(doc.contains("<circle"));
    }

    #[test]
    fn pca_on_two_columns_preserves_geometry() {
        // Width exactly 2: projection is a rotation/reflection, so pairwise
        // distances survive.
        let x = Matrix64::from_shape_vec(
            (4, 2),
            vec![0.0, 0.0, 1.0, 0.4, 2.0, 0.9, 3.0, 1.1],
        )
        .unwrap();
        let p = principal_components_2d(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let orig = ((x[[i, 0]] - x[[j, 0]]).powi(2) + (x[[i, 1]] - x[[j, 1]]).powi(2))
                    .sqrt();
                let proj = ((p[[i, 0]] - p[[j, 0]]).powi(2) + (p[[i, 1]] - p[[j, 1]]).powi(2))
                    .sqrt();
                assert!((orig - proj).abs() < 1e-9, "({i},{j}): {orig} vs {proj}");
            }
        }
    }

    #[test]
    fn pca_first_component_follows_dominant_variance() {
        let mut rng = rng_from_seed(1);
        // Spread along a known diagonal direction in 4-D plus small noise.
        let dir = [0.5f64, 0.5, 0.5, 0.5];
        let x = Matrix64::from_shape_fn((200, 4), |(i, j)| {
            let t = (i as f64 / 200.0 - 0.5) * 10.0;
            t * dir[j] + 0.01 * f64::standard_normal(&mut rng)
        });
        let p = principal_components_2d(&x).unwrap();
        // PC1 captures nearly all the variance; PC2 stays tiny.
        let var1: f64 = p.column(0).iter().map(|v| v * v).sum::<f64>() / 199.0;
        let var2: f64 = p.column(1).iter().map(|v| v * v).sum::<f64>() / 199.0;
        assert!(var1 > 100.0 * var2, "var1 {var1} var2 {var2}");
        let a = principal_components_2d(&x).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let m = Matrix64::from_shape_vec((2, 2), vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = jacobi_eigh(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        // Columns are orthonormal.
        let g = vecs.t().dot(&vecs);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
}
