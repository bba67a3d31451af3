//! Sweeps over the thickness `h`, power-law fits and result files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::error::{KornError, Result};
use crate::geometry::{FunctionSpace, ShellGeometry};
use crate::mode::{
    default_n_max, mode_envelope_adaptive, EnvelopeOptions, ModeIndex, QuotientKind, ReductionPath,
    Resolution, DEFAULT_M_MAX,
};

/// Floats in emitted files: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

mod num_str {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::fmt_num(*x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

mod num_vec {
    use serde::{de::Error, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&super::fmt_num(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| s.parse().map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(with = "num_vec")]
    pub h: Vec<f64>,
    #[serde(with = "num_str")]
    pub length: f64,
    pub space: FunctionSpace,
    pub kind: QuotientKind,
    pub path: ReductionPath,
    pub resolution: Resolution,
    /// `None` uses `ceil(4 h^{-1/4})` per row.
    pub n_max: Option<usize>,
    pub m_max: usize,
    /// Number of times a truncation bound may be doubled.
    pub adaptive_rounds: usize,
    #[serde(with = "num_str")]
    pub tol: f64,
    pub seed: u64,
    /// When false every `seconds` entry is 0 so that files are reproducible.
    pub record_timings: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            h: vec![0.1, 0.05, 0.025, 0.0125],
            length: 2.0,
            space: FunctionSpace::V1,
            kind: QuotientKind::Korn,
            path: ReductionPath::Auto,
            resolution: Resolution::default(),
            n_max: None,
            m_max: DEFAULT_M_MAX,
            adaptive_rounds: 3,
            tol: 1e-10,
            seed: 1,
            record_timings: false,
        }
    }
}

pub const MIN_SWEEP_POINTS: usize = 4;

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h.len() < MIN_SWEEP_POINTS {
            return Err(KornError::Config(format!(
                "a sweep needs at least {MIN_SWEEP_POINTS} h values, got {}",
                self.h.len()
            )));
        }
        if let Some(&bad) = self.h.iter().find(|&&h| !(h > 0.0 && h < 1.0)) {
            return Err(KornError::Config(format!("h = {bad} outside (0, 1)")));
        }
        if self.h.windows(2).any(|w| w[1] >= w[0]) {
            return Err(KornError::Config(
                "h values must be strictly decreasing".into(),
            ));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(KornError::Config(format!(
                "length L = {} must be positive",
                self.length
            )));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(KornError::Config(format!(
                "tolerance {} outside (0, 1e-2]",
                self.tol
            )));
        }
        if self.n_max == Some(0) || self.m_max == 0 {
            return Err(KornError::Config(
                "truncation bounds must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Resolved configuration as ordered `key=value` pairs.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let h: Vec<String> = self.h.iter().map(|h| format!("{h}")).collect();
        vec![
            ("h".into(), h.join(",")),
            ("length".into(), format!("{}", self.length)),
            ("space".into(), self.space.as_str().into()),
            ("kind".into(), self.kind.as_str().into()),
            (
                "path".into(),
                match self.path {
                    ReductionPath::Auto => "auto",
                    ReductionPath::Axial => "axial",
                }
                .into(),
            ),
            ("nr".into(), self.resolution.nr.to_string()),
            ("dz".into(), self.resolution.dz.to_string()),
            (
                "n_max".into(),
                self.n_max.map_or_else(|| "auto".into(), |n| n.to_string()),
            ),
            ("m_max".into(), self.m_max.to_string()),
            ("adaptive_rounds".into(), self.adaptive_rounds.to_string()),
            ("tol".into(), format!("{:e}", self.tol)),
            ("seed".into(), self.seed.to_string()),
            ("record_timings".into(), self.record_timings.to_string()),
        ]
    }

    /// Set one key as spelled by [`SweepConfig::to_kv`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| KornError::Config(format!("bad value '{value}' for {what}"));
        match key {
            "h" => self.h = parse_list(value)?,
            "length" | "L" => self.length = value.parse().map_err(|_| bad(key))?,
            "space" => self.space = value.parse()?,
            "kind" => self.kind = value.parse()?,
            "path" => {
                self.path = match value {
                    "auto" | "1d" => ReductionPath::Auto,
                    "axial" | "2d" => ReductionPath::Axial,
                    _ => return Err(bad(key)),
                }
            }
            "nr" => self.resolution.nr = value.parse().map_err(|_| bad(key))?,
            "dz" => self.resolution.dz = value.parse().map_err(|_| bad(key))?,
            "n_max" => {
                self.n_max = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad(key))?)
                }
            }
            "m_max" => self.m_max = value.parse().map_err(|_| bad(key))?,
            "adaptive_rounds" => self.adaptive_rounds = value.parse().map_err(|_| bad(key))?,
            "tol" => self.tol = value.parse().map_err(|_| bad(key))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "record_timings" => self.record_timings = value.parse().map_err(|_| bad(key))?,
            _ => return Err(KornError::Config(format!("unknown sweep key '{key}'"))),
        }
        Ok(())
    }

    pub fn echo(&self) -> String {
        self.to_kv()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Git blob hash of [`SweepConfig::echo`].
    pub fn hash(&self) -> String {
        let body = self.echo();
        let mut hasher = Sha1::new();
        hasher.update(format!("blob {}\0", body.len()).as_bytes());
        hasher.update(body.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn envelope_options(&self, geom: &ShellGeometry) -> EnvelopeOptions {
        let mut opts = EnvelopeOptions::for_geometry(geom);
        opts.n_max = self.n_max.unwrap_or_else(|| default_n_max(geom.h()));
        opts.m_max = self.m_max;
        opts.resolution = self.resolution;
        opts.tol = self.tol;
        opts.path = self.path;
        opts.seed = self.seed;
        opts
    }
}

/// Comma-separated list of floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| KornError::Parse(format!("'{t}' is not a number")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(with = "num_str")]
    pub h: f64,
    #[serde(with = "num_str")]
    pub value: f64,
    pub mode_n: i64,
    pub mode_m: Option<u32>,
    #[serde(with = "num_str")]
    pub residual: f64,
    pub n_r: usize,
    pub n_z: usize,
    #[serde(with = "num_str")]
    pub seconds: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    #[serde(with = "num_str")]
    pub h: f64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    #[serde(with = "num_str")]
    pub slope: f64,
    #[serde(with = "num_str")]
    pub intercept: f64,
    /// Largest `|value / (e^intercept h^slope) - 1|` over the rows.
    #[serde(with = "num_str")]
    pub max_rel_residual: f64,
}

impl ExponentFit {
    pub fn predict(&self, h: f64) -> f64 {
        (self.intercept + self.slope * h.ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub failed: Vec<FailedRow>,
    pub fit: Option<ExponentFit>,
}

impl SweepResult {
    pub fn empty(config: SweepConfig) -> Self {
        Self {
            config,
            rows: Vec::new(),
            failed: Vec::new(),
            fit: None,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter_map(|r| r.warning.as_ref().map(|w| format!("h={}: {w}", r.h)))
            .collect()
    }
}

/// Least-squares line through `(ln h, ln value)`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 2 {
        return Err(KornError::Fit {
            row: points.len(),
            reason: "need at least two rows".into(),
        });
    }
    for (i, &(h, v)) in points.iter().enumerate() {
        if !(h > 0.0) || !(v > 0.0) || !v.is_finite() {
            return Err(KornError::Fit {
                row: i,
                reason: format!("nonpositive entry (h = {h}, value = {v})"),
            });
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(KornError::Fit {
            row: 1,
            reason: "all h values coincide".into(),
        });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fit = ExponentFit {
        slope,
        intercept,
        max_rel_residual: 0.0,
    };
    let max_rel_residual = points
        .iter()
        .map(|&(h, v)| (v / fit.predict(h) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        max_rel_residual,
        ..fit
    })
}

fn solve_row(cfg: &SweepConfig, h: f64) -> Result<SweepRow> {
    let start = Instant::now();
    let geom = ShellGeometry::new(h, cfg.length)?;
    let opts = cfg.envelope_options(&geom);
    let env = mode_envelope_adaptive(cfg.space, geom, cfg.kind, &opts, cfg.adaptive_rounds)?;
    let one_d = cfg.space.is_parity() && cfg.path == ReductionPath::Auto;
    let ModeIndex { n, m, .. } = env.extreme.mode;
    Ok(SweepRow {
        h,
        value: env.extreme.value,
        mode_n: n,
        mode_m: m,
        residual: env.extreme.residual,
        n_r: cfg.resolution.nr,
        n_z: if one_d {
            cfg.m_max + 1
        } else {
            cfg.resolution.dz
        },
        seconds: if cfg.record_timings {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
        warning: env.truncation_warning,
    })
}

/// Solve every row (concurrently) and fit the exponent over the rows that
/// succeeded. Rows that fail are returned in [`SweepResult::failed`].
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let outcomes: Vec<(f64, Result<SweepRow>)> =
        cfg.h.par_iter().map(|&h| (h, solve_row(cfg, h))).collect();
    let mut result = SweepResult::empty(cfg.clone());
    for (h, r) in outcomes {
        match r {
            Ok(row) => result.rows.push(row),
            Err(e) => result.failed.push(FailedRow {
                h,
                error: e.to_string(),
            }),
        }
    }
    let pts: Vec<(f64, f64)> = result.rows.iter().map(|r| (r.h, r.value)).collect();
    result.fit = fit_exponent(&pts).ok();
    Ok(result)
}

pub const CSV_HEADER: &str = "h,value,mode_n,mode_m,residual,n_r,n_z,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = KornError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(KornError::Config(format!(
                "unknown output format '{other}'"
            ))),
        }
    }
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

pub fn to_csv(res: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# korn sweep");
    let _ = writeln!(out, "# config_hash={}", res.config.hash());
    for (k, v) in res.config.to_kv() {
        let _ = writeln!(out, "# {k}={v}");
    }
    if let Some(fit) = &res.fit {
        let _ = writeln!(
            out,
            "# fit slope={} intercept={} max_rel_residual={}",
            fmt_num(fit.slope),
            fmt_num(fit.intercept),
            fmt_num(fit.max_rel_residual)
        );
    }
    for f in &res.failed {
        let _ = writeln!(
            out,
            "# failed h={} error={}",
            fmt_num(f.h),
            f.error.replace('\n', " ")
        );
    }
    for w in res.warnings() {
        let _ = writeln!(out, "# warning {w}");
    }
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in &res.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_num(r.h),
            fmt_num(r.value),
            r.mode_n,
            r.mode_m.map_or_else(String::new, |m| m.to_string()),
            fmt_num(r.residual),
            r.n_r,
            r.n_z,
            fmt_num(r.seconds)
        );
    }
    out
}

pub fn to_json(res: &SweepResult) -> String {
    serde_json::to_string_pretty(res).expect("sweep results serialize")
}

pub fn from_json(text: &str) -> Result<SweepResult> {
    serde_json::from_str(text).map_err(|e| KornError::Parse(e.to_string()))
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const SVG_PAD: f64 = 60.0;

/// Log-log plot with one `circle` per row and the fitted line.
pub fn to_svg(res: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>"#
    );
    let title = format!(
        "{} on {}",
        res.config.kind.as_str(),
        res.config.space.as_str()
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        SVG_W / 2.0
    );
    let pts: Vec<(f64, f64)> = res
        .rows
        .iter()
        .map(|r| (r.h.log10(), r.value.log10()))
        .collect();
    if !pts.is_empty() {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let pad = |a: f64, b: f64| {
            if b - a < 1e-12 {
                (a - 0.5, b + 0.5)
            } else {
                (a - 0.05 * (b - a), b + 0.05 * (b - a))
            }
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        let sx = |x: f64| SVG_PAD + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * SVG_PAD);
        let sy = |y: f64| SVG_H - SVG_PAD - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * SVG_PAD);
        let _ = writeln!(
            out,
            r#"<g class="axes" stroke="black" fill="none"><rect x="{SVG_PAD}" y="{SVG_PAD}" width="{}" height="{}"/></g>"#,
            SVG_W - 2.0 * SVG_PAD,
            SVG_H - 2.0 * SVG_PAD
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">log10 h</text>"#,
            SVG_W / 2.0,
            SVG_H - 20.0
        );
        let _ = writeln!(
            out,
            r#"<text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle" font-family="sans-serif" font-size="12">log10 value</text>"#,
            SVG_H / 2.0,
            SVG_H / 2.0
        );
        if let Some(fit) = &res.fit {
            let ly = |x: f64| {
                (fit.intercept + fit.slope * x * std::f64::consts::LN_10) / std::f64::consts::LN_10
            };
            let _ = writeln!(
                out,
                r#"<line class="fit" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="steelblue" stroke-width="1.5"/>"#,
                sx(x0),
                sy(ly(x0)),
                sx(x1),
                sy(ly(x1))
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">slope {:.4}</text>"#,
                SVG_PAD + 10.0,
                SVG_PAD + 20.0,
                fit.slope
            );
        }
        for &(x, y) in &pts {
            let _ = writeln!(
                out,
                r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="4" fill="crimson"/>"#,
                sx(x),
                sy(y)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn render(res: &SweepResult, format: Format) -> String {
    match format {
        Format::Csv => to_csv(res),
        Format::Json => to_json(res),
        Format::Svg => to_svg(res),
    }
}

/// Write `stem.<ext>` for each format and return the paths written.
pub fn emit(res: &SweepResult, stem: &Path, formats: &[Format]) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for f in formats {
        let path = stem.with_extension(f.extension());
        std::fs::write(&path, render(res, *f))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_slope() {
        let f = fit_exponent(&[(1.0, 1.0), (0.5, 0.5f64.powf(1.5))]).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-14);
    }

    #[test]
    fn constant_values_have_zero_slope() {
        let f = fit_exponent(&[(0.1, 3.0), (0.05, 3.0), (0.02, 3.0)]).unwrap();
        assert!(f.slope.abs() < 1e-14);
        assert!(f.max_rel_residual < 1e-14);
    }

    #[test]
    fn nonpositive_row_is_named() {
        let e = fit_exponent(&[(0.1, 1.0), (0.05, 0.0), (0.02, 1.0)]).unwrap_err();
        assert!(matches!(e, KornError::Fit { row: 1, .. }));
    }

    #[test]
    fn empty_result_is_header_only_csv() {
        let csv = to_csv(&SweepResult::empty(SweepConfig::default()));
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec![CSV_HEADER]);
    }

    #[test]
    fn config_validation() {
        let mut c = SweepConfig::default();
        assert!(c.validate().is_ok());
        c.h = vec![0.1, 0.05, 0.05, 0.01];
        assert!(c.validate().is_err());
        c.h = vec![0.1, 0.05, 0.02];
        assert!(c.validate().is_err());
        c.h = vec![1.5, 0.05, 0.02, 0.01];
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut c = SweepConfig {
            n_max: Some(9),
            kind: QuotientKind::ComponentRZ,
            ..SweepConfig::default()
        };
        let mut d = SweepConfig::default();
        for (k, v) in c.to_kv() {
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
        c.seed = 2;
        assert_ne!(c.hash(), d.hash());
        assert!(d.set("bogus", "1").is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, 1.7976931348623157e308] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }
}
