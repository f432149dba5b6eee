use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits.
pub fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::S(v.to_string())
    }
}

pub struct Sink<'a> {
    pub dir: PathBuf,
    pub cfg: &'a RunConfig,
    pub command: String,
    pub written: Vec<PathBuf>,
}

impl<'a> Sink<'a> {
    pub fn new(cfg: &'a RunConfig, command: &str) -> std::io::Result<Self> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Sink { dir: cfg.out.clone(), cfg, command: command.to_string(), written: Vec::new() })
    }

    fn preamble(&self, comment: &str) -> String {
        let mut s = format!("{comment} henon {VERSION} {}\n", self.command);
        for (k, v) in self.cfg.pairs() {
            s.push_str(&format!("{comment} {k} = {v}\n"));
        }
        s
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// CSV with the config as `#` comment lines, then a header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> std::io::Result<()> {
        let path = self.path(name);
        let mut f = fs::File::create(&path)?;
        f.write_all(self.preamble("#").as_bytes())?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> std::io::Result<()> {
        let path = self.path(name);
        let config: serde_json::Map<String, serde_json::Value> =
            self.cfg.pairs().into_iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v))).collect();
        let doc = serde_json::json!({
            "tool": "henon",
            "version": VERSION,
            "command": self.command,
            "config": config,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    pub fn svg(&mut self, name: &str, plot: &Plot) -> std::io::Result<()> {
        let path = self.path(name);
        let body = plot.render();
        let text = format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!--\n{}-->\n{body}", self.preamble(""));
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    pub fn report(&self) {
        for p in &self.written {
            println!("wrote {}", p.display());
        }
    }
}

pub fn read_json(path: &Path) -> Option<serde_json::Value> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Markers instead of a polyline.
    pub scatter: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), log_y: false, series: Vec::new() }
    }

    pub fn line(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.into(), points, scatter: false });
        self
    }

    pub fn scatter(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.into(), points, scatter: true });
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    fn ty(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            y.is_finite().then_some(y)
        }
    }

    pub fn render(&self) -> String {
        let (w, h, m) = (640.0, 480.0, 60.0);
        let pts: Vec<(f64, f64)> =
            self.series.iter().flat_map(|s| s.points.iter().filter_map(|(x, y)| Some((*x, self.ty(*y)?)))).filter(|(x, _)| x.is_finite()).collect();
        let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |a, p| {
            (a.0.min(p.0), a.1.max(p.0), a.2.min(p.1), a.3.max(p.1))
        });
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
        let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
        let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
        s.push_str(&format!("<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
        s.push_str(&format!(
            "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
            w - 2.0 * m,
            h - 2.0 * m
        ));
        s.push_str(&format!("<text x=\"{}\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n", w / 2.0, esc(&self.title)));
        s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n", w / 2.0, h - 15.0, esc(&self.x_label)));
        let yl = if self.log_y { format!("log10 {}", self.y_label) } else { self.y_label.clone() };
        s.push_str(&format!(
            "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 {})\">{}</text>\n",
            h / 2.0,
            h / 2.0,
            esc(&yl)
        ));
        for (v, anchor, x, y) in [(x0, "start", m, h - m + 15.0), (x1, "end", w - m, h - m + 15.0)] {
            s.push_str(&format!("<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-size=\"10\">{}</text>\n", short(v)));
        }
        for (v, y) in [(y0, h - m), (y1, m + 10.0)] {
            s.push_str(&format!("<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n", m - 4.0, short(v)));
        }
        for (i, ser) in self.series.iter().enumerate() {
            let c = COLORS[i % COLORS.len()];
            let mapped: Vec<(f64, f64)> =
                ser.points.iter().filter_map(|(x, y)| Some((sx(*x), sy(self.ty(*y)?)))).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
            if ser.scatter {
                for (x, y) in &mapped {
                    s.push_str(&format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.5\" fill=\"{c}\"/>\n"));
                }
            } else if !mapped.is_empty() {
                let d: Vec<String> = mapped.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                s.push_str(&format!("<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"1\" points=\"{}\"/>\n", d.join(" ")));
            }
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{c}\">{}</text>\n",
                w - m - 150.0,
                m + 15.0 + 14.0 * i as f64,
                esc(&ser.label)
            ));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn short(v: f64) -> String {
    format!("{v:.4e}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.000199634954333, -1e-300, 12345.678] {
            let s = fmt_f(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa: String = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn log_plot_skips_nonpositive() {
        let p = Plot::new("t", "x", "y").log_y().line("s", vec![(0.0, 1.0), (1.0, 0.0), (2.0, 0.1)]);
        let svg = p.render();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN"));
    }
}
