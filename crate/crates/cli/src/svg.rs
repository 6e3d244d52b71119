//! SVG renderings. Every function takes the text of a CSV table written by
//! the runner, so each figure is reproducible from a saved table.

use anyhow::{anyhow, Context};
use std::fmt::Write;

const SIZE: f64 = 480.0;
const PAD: f64 = 40.0;

/// Parses a CSV table into its header and rows.
fn table(csv_text: &str) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header = rdr.headers()?.iter().map(str::to_owned).collect();
    let rows = rdr.records().map(|r| Ok(r?.iter().map(str::to_owned).collect())).collect::<anyhow::Result<_>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> anyhow::Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| anyhow!("table has no column {name}"))
}

fn num(rows: &[Vec<String>], col: usize) -> anyhow::Result<Vec<f64>> {
    rows.iter().map(|r| r[col].parse::<f64>().with_context(|| format!("bad number {}", r[col]))).collect()
}

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn fit(xs: &[f64], ys: &[f64], equal: bool) -> Frame {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (&x, &y) in xs.iter().zip(ys) {
            lo = [lo[0].min(x), lo[1].min(y)];
            hi = [hi[0].max(x), hi[1].max(y)];
        }
        for i in 0..2 {
            if !(hi[i] > lo[i]) {
                lo[i] -= 0.5;
                hi[i] += 0.5;
            }
        }
        if equal {
            let w = (hi[0] - lo[0]).max(hi[1] - lo[1]);
            let c = [(hi[0] + lo[0]) / 2.0, (hi[1] + lo[1]) / 2.0];
            lo = [c[0] - w / 2.0, c[1] - w / 2.0];
            hi = [c[0] + w / 2.0, c[1] + w / 2.0];
        }
        Frame { lo, hi }
    }

    fn scale(&self) -> f64 {
        (SIZE - 2.0 * PAD) / (self.hi[0] - self.lo[0])
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (SIZE - 2.0 * PAD) / (self.hi[0] - self.lo[0]);
        let sy = (SIZE - 2.0 * PAD) / (self.hi[1] - self.lo[1]);
        (PAD + (x - self.lo[0]) * sx, SIZE - PAD - (y - self.lo[1]) * sy)
    }
}

fn open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n"
    )
}

/// Classification map from a table with columns `x,y,class,last_abs`.
pub fn field(csv_text: &str, title: &str) -> anyhow::Result<String> {
    let (h, rows) = table(csv_text)?;
    let (cx, cy, cc, ca) = (column(&h, "x")?, column(&h, "y")?, column(&h, "class")?, column(&h, "last_abs")?);
    let xs = num(&rows, cx)?;
    let ys = num(&rows, cy)?;
    let vals = num(&rows, ca)?;
    let frame = Frame::fit(&xs, &ys, true);
    let spacing = min_gap(&xs).min(min_gap(&ys));
    let cell = if spacing.is_finite() { spacing * frame.scale() } else { 4.0 };
    let logs: Vec<f64> = vals.iter().map(|v| v.max(1e-300).log10()).collect();
    let (lmin, lmax) = logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let mut s = open(title);
    for (i, r) in rows.iter().enumerate() {
        let (px, py) = frame.map(xs[i], ys[i]);
        let fill = if r[cc] == "outside" {
            let u = if lmax > lmin { (logs[i] - lmin) / (lmax - lmin) } else { 0.5 };
            let g = (230.0 - 150.0 * u) as u8;
            format!("rgb({g},{g},255)")
        } else {
            "rgb(200,30,30)".to_string()
        };
        writeln!(s, "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{fill}\"/>", px - cell / 2.0, py - cell / 2.0)?;
    }
    s += "</svg>\n";
    Ok(s)
}

fn min_gap(v: &[f64]) -> f64 {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 1e-9).fold(f64::INFINITY, f64::min)
}

/// Line plot of column `ycol` against `xcol`, optionally on a log axis.
pub fn line(csv_text: &str, xcol: &str, ycol: &str, log_y: bool, title: &str) -> anyhow::Result<String> {
    let (h, rows) = table(csv_text)?;
    let xs = num(&rows, column(&h, xcol)?)?;
    let mut ys = num(&rows, column(&h, ycol)?)?;
    if log_y {
        ys = ys.iter().map(|v| v.abs().max(1e-300).log10()).collect();
    }
    let frame = Frame::fit(&xs, &ys, false);
    let mut s = open(&format!("{title} ({}{ycol} vs {xcol})", if log_y { "log10 " } else { "" }));
    let pts: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let (px, py) = frame.map(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    writeln!(s, "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"{}\"/>", pts.join(" "))?;
    for p in &pts {
        let (a, b) = p.split_once(',').unwrap();
        writeln!(s, "<circle cx=\"{a}\" cy=\"{b}\" r=\"2.5\" fill=\"black\"/>")?;
    }
    let (x0, y0) = frame.map(frame.lo[0], frame.lo[1]);
    let (x1, y1) = frame.map(frame.hi[0], frame.hi[1]);
    writeln!(s, "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"gray\"/>", x1 - x0, y0 - y1)?;
    writeln!(s, "<text x=\"{x0:.2}\" y=\"{:.2}\" font-size=\"11\">{:.3}</text>", y0 + 14.0, frame.lo[0])?;
    writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{:.3}</text>", x1 - 30.0, y0 + 14.0, frame.hi[0])?;
    writeln!(s, "<text x=\"4\" y=\"{y0:.2}\" font-size=\"11\">{:.3}</text>", frame.lo[1])?;
    writeln!(s, "<text x=\"4\" y=\"{y1:.2}\" font-size=\"11\">{:.3}</text>", frame.hi[1])?;
    s += "</svg>\n";
    Ok(s)
}

/// Ball centres coloured by class (table `x,y,n,energy,class`) with the
/// polylines of the other tables (`x,y`) drawn on top.
pub fn overlay(balls_csv: &str, lines: &[(&str, &str)], title: &str) -> anyhow::Result<String> {
    let (h, rows) = table(balls_csv)?;
    let (cx, cy, cc) = (column(&h, "x")?, column(&h, "y")?, column(&h, "class")?);
    let xs = num(&rows, cx)?;
    let ys = num(&rows, cy)?;
    let mut all_x = xs.clone();
    let mut all_y = ys.clone();
    let mut polys = Vec::new();
    for (text, colour) in lines {
        let (lh, lrows) = table(text)?;
        let px = num(&lrows, column(&lh, "x")?)?;
        let py = num(&lrows, column(&lh, "y")?)?;
        all_x.extend(&px);
        all_y.extend(&py);
        polys.push((px, py, *colour));
    }
    let frame = Frame::fit(&all_x, &all_y, true);
    let mut s = open(title);
    let mut last = None;
    for (i, r) in rows.iter().enumerate() {
        let key = (r[cx].clone(), r[cy].clone());
        if last.as_ref() == Some(&key) {
            continue;
        }
        last = Some(key);
        let (px, py) = frame.map(xs[i], ys[i]);
        let fill = if r[cc] == "divergent" { "rgb(200,30,30)" } else { "rgb(180,180,220)" };
        writeln!(s, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{fill}\"/>")?;
    }
    for (px, py, colour) in polys {
        let pts: Vec<String> = px
            .iter()
            .zip(&py)
            .map(|(&x, &y)| {
                let (a, b) = frame.map(x, y);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        writeln!(s, "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>", pts.join(" "))?;
    }
    s += "</svg>\n";
    Ok(s)
}
