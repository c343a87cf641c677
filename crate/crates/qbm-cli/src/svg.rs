//! Static line plots as self-contained SVG.

use std::fmt::Write as _;

use crate::error::CliError;
use crate::table::ParsedCsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Axes {
    pub x: Scale,
    pub y: Scale,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

fn transform(v: f64, s: Scale) -> Option<f64> {
    match s {
        Scale::Linear => v.is_finite().then_some(v),
        Scale::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
    }
}

/// Plot `y_columns` against `x_column`. Points that are missing, or not
/// positive on a log axis, break the line.
pub fn line_plot(
    csv: &ParsedCsv,
    x_column: &str,
    y_columns: &[String],
    axes: Axes,
) -> Result<String, CliError> {
    let find = |name: &str| {
        csv.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("unknown column `{name}`")))
    };
    let xi = find(x_column)?;
    let yis = y_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;
    if yis.is_empty() {
        return Err(CliError::Usage("no columns to plot".into()));
    }
    let series: Vec<Vec<Option<(f64, f64)>>> = yis
        .iter()
        .map(|&yi| {
            csv.columns[xi]
                .iter()
                .zip(&csv.columns[yi])
                .map(|(x, y)| Some((transform((*x)?, axes.x)?, transform((*y)?, axes.y)?)))
                .collect()
        })
        .collect();
    let pts = series.iter().flatten().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() || !y0.is_finite() {
        return Err(CliError::Usage(
            "nothing plottable in the selected columns".into(),
        ));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (xs, ys) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<path d="M{xs:.2} {b} L{xs:.2} {:.2}" stroke="black"/>"#,
            b + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{xs:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            b + 20.0,
            tick_label(xv, axes.x)
        );
        let _ = writeln!(
            s,
            r#"<path d="M{} {ys:.2} L{l} {ys:.2}" stroke="black"/>"#,
            l - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 8.0,
            ys + 4.0,
            tick_label(yv, axes.y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 16.0,
        escape(x_column)
    );
    for (k, (pts, name)) in series.iter().zip(y_columns).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for p in pts {
            match p {
                Some((x, y)) => {
                    let _ = write!(
                        d,
                        "{}{:.2} {:.2} ",
                        if pen_down { "L" } else { "M" },
                        px(*x),
                        py(*y)
                    );
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" stroke="{colour}" stroke-width="1.5" fill="none"/>"#,
            d.trim_end()
        );
        let ly = t + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<path d="M{:.2} {ly:.2} L{:.2} {ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            r - 150.0,
            r - 130.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            r - 125.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick_label(v: f64, scale: Scale) -> String {
    match scale {
        Scale::Linear => format!("{v:.3}"),
        Scale::Log => format!("1e{v:.2}"),
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::parse_csv;

    fn sample() -> ParsedCsv {
        parse_csv("# x\nt,a,b\n1,1,2\n2,4,\n4,16,8\n").unwrap()
    }

    #[test]
    fn draws_every_series_with_legend() {
        let svg = line_plot(&sample(), "t", &["a".into(), "b".into()], Axes::default()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 2);
        assert!(svg.contains(">a</text>") && svg.contains(">b</text>"));
    }

    #[test]
    fn log_axes_are_straight_for_power_laws() {
        let axes = Axes {
            x: Scale::Log,
            y: Scale::Log,
        };
        let svg = line_plot(&sample(), "t", &["a".into()], axes).unwrap();
        assert!(svg.contains("1e0.00"));
    }

    #[test]
    fn unknown_column_rejected() {
        assert!(matches!(
            line_plot(&sample(), "t", &["zz".into()], Axes::default()),
            Err(CliError::Usage(_))
        ));
    }
}
