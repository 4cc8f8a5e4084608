//! Figures: a gnuplot script over the exported CSVs and a standalone SVG.
//!
//! Colors encode the spectrum kind; the first node is drawn dashed and the
//! others solid. Monte-Carlo overlays use a short dash in gray.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use floqnoise::spectra::SpectrumDataset;

use crate::pipeline::McOverlay;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 240.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PRIMARY_DASH: &str = "10,5";
const OVERLAY_DASH: &str = "3,3";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Phase,
    Amplitude,
    Cross,
}

impl Kind {
    fn color(self) -> &'static str {
        match self {
            Kind::Phase => "#1f77b4",
            Kind::Amplitude => "#2ca02c",
            Kind::Cross => "#d62728",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Kind::Phase => "pnoise",
            Kind::Amplitude => "anoise",
            Kind::Cross => "|xnoise|",
        }
    }

    /// Column in the combined spectra CSV.
    fn column(self) -> usize {
        match self {
            Kind::Phase => 2,
            Kind::Amplitude => 3,
            Kind::Cross => 5,
        }
    }
}

struct Curve {
    label: String,
    color: &'static str,
    dash: Option<&'static str>,
    points: Vec<(f64, f64)>,
}

fn curves(datasets: &[SpectrumDataset], overlays: &[McOverlay]) -> (Vec<Curve>, Vec<String>) {
    let primary = datasets.first().map(|d| d.node.clone());
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for d in datasets {
        let dash = (Some(&d.node) == primary.as_ref() && datasets.iter().any(|o| o.node != d.node))
            .then_some(PRIMARY_DASH);
        let tag = if d.nu == 1 {
            d.node.clone()
        } else {
            format!("{} (nu={})", d.node, d.nu)
        };
        let mut push = |kind: Kind, ys: &[f64]| {
            out.push(Curve {
                label: format!("{tag} {}", kind.label()),
                color: kind.color(),
                dash,
                points: d.freqs.iter().copied().zip(ys.iter().copied()).collect(),
            })
        };
        push(Kind::Phase, &d.pnoise_dbc);
        match &d.anoise_dbc {
            Some(a) => push(Kind::Amplitude, a),
            None => notes.push(format!("{tag}: anoise omitted, no amplitude modes retained (L = k)")),
        }
        push(Kind::Cross, &d.xnoise_db);
    }
    for o in overlays {
        let tag = if o.nu == 1 {
            o.node.clone()
        } else {
            format!("{} (nu={})", o.node, o.nu)
        };
        let points = o
            .spectrum
            .offsets
            .iter()
            .zip(&o.spectrum.density)
            .filter(|(f, _)| **f > 0.0)
            .map(|(f, d)| (*f, 10.0 * d.log10()))
            .collect();
        out.push(Curve {
            label: format!("{tag} Monte-Carlo"),
            color: "#555555",
            dash: Some(OVERLAY_DASH),
            points,
        });
    }
    (out, notes)
}

/// Gnuplot script and SVG document for one run.
pub fn render_plot(name: &str, datasets: &[SpectrumDataset], overlays: &[McOverlay]) -> (String, String) {
    let (curves, notes) = curves(datasets, overlays);
    (gnuplot(name, datasets, overlays, &notes), svg(name, datasets, &curves, &notes))
}

/// Write `<name>.gp` and `<name>.svg` into `dir`.
pub fn emit_plot(
    name: &str,
    datasets: &[SpectrumDataset],
    overlays: &[McOverlay],
    dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    let (gp, svg) = render_plot(name, datasets, overlays);
    std::fs::create_dir_all(dir)?;
    let paths = vec![dir.join(format!("{name}.gp")), dir.join(format!("{name}.svg"))];
    std::fs::write(&paths[0], gp)?;
    std::fs::write(&paths[1], svg)?;
    Ok(paths)
}

fn gnuplot(name: &str, datasets: &[SpectrumDataset], overlays: &[McOverlay], notes: &[String]) -> String {
    let primary = datasets.first().map(|d| d.node.as_str());
    let multi = datasets.iter().any(|d| Some(d.node.as_str()) != primary);
    let mut s = String::new();
    let _ = writeln!(s, "set terminal svg size {WIDTH},{HEIGHT} dynamic");
    let _ = writeln!(s, "set output '{name}.gnuplot.svg'");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set logscale x");
    let _ = writeln!(s, "set format x '10^{{%L}}'");
    let _ = writeln!(s, "set xlabel 'offset frequency (Hz)'");
    let _ = writeln!(s, "set ylabel 'dBc/Hz'");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set grid");
    for n in notes {
        let _ = writeln!(s, "# {n}");
    }
    let mut parts = Vec::new();
    for d in datasets {
        let dt = if multi && Some(d.node.as_str()) == primary { 2 } else { 1 };
        let file = format!("{}.spectra.csv", d.stem());
        let mut kinds = vec![Kind::Phase];
        if d.anoise_dbc.is_some() {
            kinds.push(Kind::Amplitude);
        }
        kinds.push(Kind::Cross);
        for k in kinds {
            parts.push(format!(
                "'{file}' using 1:{} skip 1 with lines lc rgb '{}' dt {dt} title '{} {}'",
                k.column(),
                k.color(),
                d.stem(),
                k.label()
            ));
        }
    }
    for o in overlays {
        parts.push(format!(
            "'{}.mc.csv' using 1:2 skip 1 with lines lc rgb '#555555' dt 3 title '{} Monte-Carlo'",
            o.stem(),
            o.stem()
        ));
    }
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

fn nice_step(span: f64) -> f64 {
    [5.0, 10.0, 20.0, 50.0, 100.0]
        .into_iter()
        .find(|s| span / s <= 10.0)
        .unwrap_or(200.0)
}

fn svg(name: &str, datasets: &[SpectrumDataset], curves: &[Curve], notes: &[String]) -> String {
    let (fmin, fmax) = datasets
        .iter()
        .flat_map(|d| d.freqs.iter())
        .fold((f64::INFINITY, 0.0f64), |a, f| (a.0.min(*f), a.1.max(*f)));
    let (fmin, fmax) = if fmin.is_finite() && fmax > fmin { (fmin, fmax) } else { (1.0, 10.0) };
    let (x0, x1) = (fmin.log10(), fmax.log10());
    let visible = |f: f64| f >= fmin && f <= fmax;
    let (mut ylo, mut yhi) = curves
        .iter()
        .flat_map(|c| c.points.iter())
        .filter(|(f, y)| visible(*f) && y.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, (_, y)| (a.0.min(*y), a.1.max(*y)));
    if !ylo.is_finite() {
        (ylo, yhi) = (-100.0, 0.0);
    }
    let step = nice_step((yhi - ylo).max(10.0));
    let (ylo, yhi) = ((ylo / step).floor() * step, (yhi / step).ceil() * step + if yhi == ylo { step } else { 0.0 });
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |f: f64| LEFT + (f.log10() - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (yhi - y) / (yhi - ylo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{} noise spectra</text>"#,
        LEFT + pw / 2.0,
        escape(name)
    );
    // grid and ticks
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"##,
            TOP + ph,
            TOP + ph + 18.0
        );
    }
    let mut y = ylo;
    while y <= yhi + 1e-9 {
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0
        );
        y += step;
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">offset frequency (Hz)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(22 {}) rotate(-90)" text-anchor="middle">dBc/Hz</text>"#,
        TOP + ph / 2.0
    );
    let _ = writeln!(
        s,
        r#"<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath>"#
    );

    for c in curves {
        let dash = c.dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        // NaN samples split the curve
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline clip-path="url(#plot)" fill="none" stroke="{}" stroke-width="1.6"{dash} points="{}"/>"#,
                    c.color,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for &(f, y) in &c.points {
            if visible(f) && y.is_finite() {
                segment.push(format!("{:.2},{:.2}", sx(f), sy(y)));
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);
    }

    let lx = LEFT + pw + 16.0;
    for (i, c) in curves.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let dash = c.dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 30.0,
            c.color,
            lx + 36.0,
            ly + 4.0,
            escape(&c.label)
        );
    }
    for (i, n) in notes.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<text x="{LEFT}" y="{}" font-size="11" fill="#444444">{}</text>"##,
            HEIGHT - 36.0 + 12.0 * i as f64 - 12.0 * notes.len().saturating_sub(1) as f64,
            escape(n)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
