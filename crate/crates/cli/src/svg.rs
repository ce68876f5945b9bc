//! Fan charts drawn as plain SVG: one panel per asset with the observed
//! backward window, quantile bands of the scenarios and a few sample paths.

use std::fmt::Write as _;

use trendgan::simulation::ScenarioSet;

const WIDTH: f64 = 800.0;
const PANEL: f64 = 260.0;
const MARGIN: f64 = 40.0;
const SAMPLE_PATHS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `history[i]` holds the observed prices of asset `i`, ending at the anchor.
pub fn fan_chart(tickers: &[String], history: &[Vec<f64>], set: &ScenarioSet) -> String {
    let a = tickers.len();
    let height = PANEL * a as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {height}" width="{WIDTH}" height="{height}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#);
    let horizon = set.horizon();
    for (i, ticker) in tickers.iter().enumerate() {
        let past = &history[i];
        let steps = past.len() + horizon;
        // per-step sorted scenario prices
        let cols: Vec<Vec<f64>> = (0..horizon)
            .map(|t| {
                let mut c: Vec<f64> = set.paths.iter().map(|p| p[(i, t)]).collect();
                c.sort_by(f64::total_cmp);
                c
            })
            .collect();
        let lo = past.iter().chain(cols.iter().flatten()).copied().fold(f64::INFINITY, f64::min);
        let hi = past.iter().chain(cols.iter().flatten()).copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let top = PANEL * i as f64;
        let px = |t: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * t as f64 / (steps - 1).max(1) as f64;
        let py = |v: f64| top + PANEL - MARGIN - (PANEL - 2.0 * MARGIN) * (v - lo) / span;
        let anchor_t = past.len() - 1;
        let fut = |t: usize| anchor_t + 1 + t;
        let points = |pts: &mut dyn Iterator<Item = (usize, f64)>| {
            pts.map(|(t, v)| format!("{:.2},{:.2}", px(t), py(v))).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(s, r#"<text x="{MARGIN}" y="{:.2}" font-size="14">{}</text>"#, top + 24.0, escape(ticker));
        for (qlo, qhi, fill) in [(0.05, 0.95, "#c6dbef"), (0.25, 0.75, "#6baed6")] {
            let upper = (0..horizon).map(|t| (fut(t), quantile(&cols[t], qhi)));
            let lower = (0..horizon).rev().map(|t| (fut(t), quantile(&cols[t], qlo)));
            let mut ring = std::iter::once((anchor_t, past[anchor_t])).chain(upper).chain(lower);
            let _ = writeln!(s, r#"<polygon points="{}" fill="{fill}" stroke="none"/>"#, points(&mut ring));
        }
        for path in set.paths.iter().take(SAMPLE_PATHS) {
            let mut pts = std::iter::once((anchor_t, past[anchor_t])).chain((0..horizon).map(|t| (fut(t), path[(i, t)])));
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#e6550d" stroke-width="0.8"/>"##,
                points(&mut pts)
            );
        }
        let mut med = std::iter::once((anchor_t, past[anchor_t])).chain((0..horizon).map(|t| (fut(t), quantile(&cols[t], 0.5))));
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##,
            points(&mut med)
        );
        let mut obs = past.iter().copied().enumerate();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            points(&mut obs)
        );
    }
    s.push_str("</svg>\n");
    s
}
