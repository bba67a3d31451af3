//! Command-line front end. [`run`] returns the process exit code:
//! 0 on success, 1 on usage or configuration errors, 2 when a verification
//! fails.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::ansatz::{ansatz_quotient, scale_search, AnsatzGenerator, PolynomialBump};
use crate::error::{KornError, Result};
use crate::experiments::{
    emit, fit_exponent, parse_list, run_sweep, Format, SweepConfig, SweepResult,
};
use crate::geometry::{FunctionSpace, ShellGeometry};
use crate::mode::QuotientKind;
use crate::rect::{self, BoundaryTag, CorpusSpec, Inequality, MeasuredConstants, REGRESSION_SLACK};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

/// Every key accepted in a config file, with its meaning.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("h", "thickness value(s), comma separated"),
    ("length", "shell length L"),
    ("space", "v0 | v1 | v2 | vstar | parity-odd | parity-even"),
    ("kind", "korn | r-theta | r-z | theta-z"),
    ("path", "auto | axial"),
    ("nr", "radial basis size"),
    ("dz", "axial basis size"),
    ("n_max", "circumferential truncation or 'auto'"),
    ("m_max", "axial-mode truncation on the parity path"),
    ("adaptive_rounds", "times a truncation bound may be doubled"),
    ("tol", "eigensolver relative residual tolerance"),
    ("seed", "seed for every randomized step"),
    ("record_timings", "true | false; false writes 0 seconds"),
    (
        "which",
        "rectangle check: basicineq100 | poltora | uest | crazy | projection | psi | sharp | all",
    ),
    ("count", "fields per corpus"),
    ("alpha", "alpha value(s) for basicineq100 and projection"),
    ("p", "rectangle length in y"),
    ("out", "output path stem for sweep files"),
    ("format", "output formats, comma separated: csv,json,svg"),
    ("exp_tol", "allowed deviation of a fitted exponent"),
    ("threads", "worker thread cap (also KORN_THREADS)"),
];

#[derive(Parser, Debug)]
#[command(
    name = "korn",
    version,
    about = "Korn constants of thin cylindrical shells"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Korn constant of one shell.
    KornConstant {
        #[command(flatten)]
        global: GlobalArgs,
        #[command(flatten)]
        shell: ShellArgs,
    },
    /// The three gradient-component constants; with four or more h values,
    /// their fitted exponents.
    ComponentRatios {
        #[command(flatten)]
        global: GlobalArgs,
        #[command(flatten)]
        shell: ShellArgs,
        /// Allowed deviation of each fitted exponent.
        #[arg(long)]
        exp_tol: Option<f64>,
    },
    /// Rayleigh quotient of the oscillating ansatz and its scale search.
    AnsatzCheck {
        #[command(flatten)]
        global: GlobalArgs,
        /// Thickness values, comma separated.
        #[arg(long)]
        h: Option<String>,
        /// Shell length L.
        #[arg(long)]
        length: Option<f64>,
        /// Allowed deviation of the fitted exponent.
        #[arg(long)]
        exp_tol: Option<f64>,
    },
    /// Inequalities on thin rectangles over a seeded corpus.
    RectangleVerify {
        #[command(flatten)]
        global: GlobalArgs,
        /// basicineq100 | poltora | uest | crazy | projection | psi | sharp | all
        #[arg(long)]
        which: Option<String>,
        /// Fields per corpus.
        #[arg(long)]
        count: Option<usize>,
        /// Thickness values, comma separated.
        #[arg(long)]
        h: Option<String>,
        /// Alpha values, comma separated.
        #[arg(long)]
        alpha: Option<String>,
        /// Rectangle length in y.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Sweep over h, fit the exponent and write result files.
    ScalingSweep {
        #[command(flatten)]
        global: GlobalArgs,
        #[command(flatten)]
        shell: ShellArgs,
        /// korn | r-theta | r-z | theta-z
        #[arg(long)]
        kind: Option<String>,
        /// Output path stem; extensions are added per format.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output formats, comma separated: csv,json,svg.
        #[arg(long)]
        format: Option<String>,
        /// Record wall-clock seconds per row.
        #[arg(long)]
        timings: bool,
        /// Allowed deviation of the fitted exponent.
        #[arg(long)]
        exp_tol: Option<f64>,
    },
    /// Run the built-in suite of elementary checks.
    Selftest {
        #[command(flatten)]
        global: GlobalArgs,
    },
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap (overrides KORN_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ShellArgs {
    /// v0 | v1 | v2 | vstar | parity-odd | parity-even
    #[arg(long)]
    space: Option<String>,
    /// Thickness value(s), comma separated.
    #[arg(long)]
    h: Option<String>,
    /// Shell length L.
    #[arg(long)]
    length: Option<f64>,
    /// Radial basis size.
    #[arg(long)]
    nr: Option<usize>,
    /// Axial basis size.
    #[arg(long)]
    dz: Option<usize>,
    /// Circumferential truncation.
    #[arg(long)]
    n_max: Option<usize>,
    /// Axial-mode truncation on the parity path.
    #[arg(long)]
    m_max: Option<usize>,
    /// auto | axial
    #[arg(long)]
    path: Option<String>,
    /// Eigensolver relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

/// Ordered key-value settings: defaults, then config file, then flags.
#[derive(Debug, Clone, Default)]
struct Settings {
    kv: Vec<(String, String)>,
}

impl Settings {
    fn set(&mut self, key: &str, value: String) -> Result<()> {
        if !CONFIG_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(KornError::Config(format!("unknown config key '{key}'")));
        }
        match self.kv.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.kv.push((key.to_string(), value)),
        }
        Ok(())
    }

    fn opt<T: ToString>(&mut self, key: &str, value: &Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v.to_string()),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.kv
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| KornError::Config(format!("missing setting '{key}'")))?;
        raw.parse()
            .map_err(|_| KornError::Config(format!("bad value '{raw}' for {key}")))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(
            self.get(key)
                .ok_or_else(|| KornError::Config(format!("missing setting '{key}'")))?,
        )
    }

    fn load_file(&mut self, path: &PathBuf) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                KornError::Parse(format!(
                    "{}:{}: expected key=value",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(k.trim(), v.trim().to_string())?;
        }
        Ok(())
    }

    fn sweep_config(&self) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::default();
        for (k, v) in &self.kv {
            if cfg.to_kv().iter().any(|(key, _)| key == k) {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    fn echo(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for (k, v) in &self.kv {
            writeln!(out, "# {k}={v}")?;
        }
        Ok(())
    }
}

fn with_defaults(pairs: &[(&str, &str)]) -> Settings {
    let mut s = Settings::default();
    s.set("seed", "1".into()).expect("known key");
    for (k, v) in pairs {
        s.set(k, v.to_string()).expect("known key");
    }
    s
}

fn apply_global(s: &mut Settings, g: &GlobalArgs) -> Result<()> {
    if let Some(path) = &g.config {
        s.load_file(path)?;
    }
    s.opt("seed", &g.seed)?;
    s.opt("threads", &g.threads)
}

fn apply_shell(s: &mut Settings, a: &ShellArgs) -> Result<()> {
    s.opt("space", &a.space)?;
    s.opt("h", &a.h)?;
    s.opt("length", &a.length)?;
    s.opt("nr", &a.nr)?;
    s.opt("dz", &a.dz)?;
    s.opt("n_max", &a.n_max)?;
    s.opt("m_max", &a.m_max)?;
    s.opt("path", &a.path)?;
    s.opt("tol", &a.tol)
}

fn configure_threads(s: &mut Settings) -> Result<()> {
    if s.get("threads").is_none() {
        if let Ok(v) = std::env::var("KORN_THREADS") {
            s.set("threads", v)?;
        }
    }
    let cap = match s.get("threads") {
        Some(v) => v.trim().parse::<usize>().map_err(|_| {
            KornError::Config(format!("threads: expected a positive integer, got {v:?}"))
        })?,
        None => return Ok(()),
    };
    if cap > 0 {
        // the global pool can only be built once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cap)
            .build_global();
    }
    Ok(())
}

/// Expected exponent of `kind` on the non-parity spaces.
pub fn expected_exponent(kind: QuotientKind) -> f64 {
    match kind {
        QuotientKind::Korn => 1.5,
        QuotientKind::ComponentRTheta => -1.5,
        QuotientKind::ComponentRZ => -1.0,
        QuotientKind::ComponentThetaZ => -0.5,
    }
}

pub const DEFAULT_EXP_TOL: f64 = 0.15;

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(out, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            match e {
                KornError::Config(_) | KornError::Parse(_) | KornError::Io(_) => EXIT_USAGE,
                _ => EXIT_VERIFY,
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::KornConstant { global, shell } => {
            let mut s = with_defaults(&[("h", "0.1"), ("length", "2"), ("space", "v1")]);
            apply_global(&mut s, &global)?;
            apply_shell(&mut s, &shell)?;
            configure_threads(&mut s)?;
            s.echo(out)?;
            shell_constants(&s, &[QuotientKind::Korn], None, out)
        }
        Command::ComponentRatios {
            global,
            shell,
            exp_tol,
        } => {
            let mut s = with_defaults(&[("h", "0.1"), ("length", "2"), ("space", "v1")]);
            apply_global(&mut s, &global)?;
            apply_shell(&mut s, &shell)?;
            s.opt("exp_tol", &exp_tol)?;
            configure_threads(&mut s)?;
            s.echo(out)?;
            let tol = s.parse::<f64>("exp_tol").unwrap_or(DEFAULT_EXP_TOL);
            shell_constants(
                &s,
                &[
                    QuotientKind::ComponentRTheta,
                    QuotientKind::ComponentRZ,
                    QuotientKind::ComponentThetaZ,
                ],
                Some(tol),
                out,
            )
        }
        Command::AnsatzCheck {
            global,
            h,
            length,
            exp_tol,
        } => {
            let mut s = with_defaults(&[("h", "0.01,0.001,0.0001"), ("length", "2")]);
            apply_global(&mut s, &global)?;
            s.opt("h", &h)?;
            s.opt("length", &length)?;
            s.opt("exp_tol", &exp_tol)?;
            configure_threads(&mut s)?;
            s.echo(out)?;
            ansatz_check(&s, out)
        }
        Command::RectangleVerify {
            global,
            which,
            count,
            h,
            alpha,
            p,
        } => {
            let mut s = with_defaults(&[
                ("which", "all"),
                ("count", "500"),
                ("h", "0.2,0.1,0.05"),
                ("alpha", "-1,0,1"),
                ("p", "3.141592653589793"),
            ]);
            apply_global(&mut s, &global)?;
            s.opt("which", &which)?;
            s.opt("count", &count)?;
            s.opt("h", &h)?;
            s.opt("alpha", &alpha)?;
            s.opt("p", &p)?;
            configure_threads(&mut s)?;
            s.echo(out)?;
            rectangle_verify(&s, out)
        }
        Command::ScalingSweep {
            global,
            shell,
            kind,
            out: stem,
            format,
            timings,
            exp_tol,
        } => {
            let mut s = with_defaults(&[
                ("h", "0.1,0.05,0.025,0.0125"),
                ("length", "2"),
                ("space", "v1"),
                ("kind", "korn"),
                ("out", "sweep"),
                ("format", "csv,json"),
            ]);
            apply_global(&mut s, &global)?;
            apply_shell(&mut s, &shell)?;
            s.opt("kind", &kind)?;
            s.opt("out", &stem.map(|p| p.display().to_string()))?;
            s.opt("format", &format)?;
            if timings {
                s.set("record_timings", "true".into())?;
            }
            s.opt("exp_tol", &exp_tol)?;
            configure_threads(&mut s)?;
            s.echo(out)?;
            scaling_sweep(&s, out)
        }
        Command::Selftest { global } => {
            let mut s = with_defaults(&[]);
            apply_global(&mut s, &global)?;
            configure_threads(&mut s)?;
            s.echo(out)?;
            selftest(out)
        }
    }
}

fn shell_constants(
    s: &Settings,
    kinds: &[QuotientKind],
    exp_tol: Option<f64>,
    out: &mut dyn Write,
) -> Result<i32> {
    let base = s.sweep_config()?;
    let mut code = EXIT_OK;
    for &kind in kinds {
        let mut cfg = SweepConfig {
            kind,
            ..base.clone()
        };
        if cfg.h.len() >= crate::experiments::MIN_SWEEP_POINTS {
            let res = run_sweep(&cfg)?;
            code = code.max(report_sweep(&res, exp_tol, out)?);
        } else {
            // single values: validate each h separately
            for &h in &base.h {
                cfg.h = vec![h];
                let geom = ShellGeometry::new(h, cfg.length)?;
                let mut opts = crate::mode::EnvelopeOptions::for_geometry(&geom);
                if let Some(n) = cfg.n_max {
                    opts.n_max = n;
                }
                opts.m_max = cfg.m_max;
                opts.resolution = cfg.resolution;
                opts.tol = cfg.tol;
                opts.path = cfg.path;
                opts.seed = cfg.seed;
                let env = crate::mode::mode_envelope_adaptive(
                    cfg.space,
                    geom,
                    kind,
                    &opts,
                    cfg.adaptive_rounds,
                )?;
                writeln!(
                    out,
                    "{} space={} h={} value={:.10e} mode={} residual={:.2e}",
                    kind.as_str(),
                    cfg.space,
                    h,
                    env.extreme.value,
                    env.extreme.mode,
                    env.extreme.residual
                )?;
                if let Some(w) = env.truncation_warning {
                    writeln!(out, "warning: {w}")?;
                }
            }
        }
    }
    Ok(code)
}

fn report_sweep(res: &SweepResult, exp_tol: Option<f64>, out: &mut dyn Write) -> Result<i32> {
    let kind = res.config.kind;
    writeln!(
        out,
        "{:>12} {:>22} {:>12} {:>10}",
        "h",
        kind.as_str(),
        "mode",
        "residual"
    )?;
    for r in &res.rows {
        let mode = match r.mode_m {
            Some(m) => format!("(m={m},n={})", r.mode_n),
            None => format!("n={}", r.mode_n),
        };
        writeln!(
            out,
            "{:>12} {:>22.12e} {:>12} {:>10.2e}",
            r.h, r.value, mode, r.residual
        )?;
    }
    for f in &res.failed {
        writeln!(out, "failed h={}: {}", f.h, f.error)?;
    }
    for w in res.warnings() {
        writeln!(out, "warning: {w}")?;
    }
    let mut code = if res.failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_VERIFY
    };
    match &res.fit {
        Some(fit) => {
            writeln!(
                out,
                "{} exponent={:.4} intercept={:.4} max_rel_residual={:.3e}",
                kind.as_str(),
                fit.slope,
                fit.intercept,
                fit.max_rel_residual
            )?;
            if let Some(tol) = exp_tol.filter(|_| !res.config.space.is_parity()) {
                let want = expected_exponent(kind);
                let ok = (fit.slope - want).abs() <= tol;
                writeln!(
                    out,
                    "{} exponent {:.4} vs {want} +/- {tol}: {}",
                    kind.as_str(),
                    fit.slope,
                    if ok { "PASS" } else { "FAIL" }
                )?;
                if !ok {
                    code = EXIT_VERIFY;
                }
            }
        }
        None => {
            writeln!(out, "no exponent: too few successful rows")?;
            code = EXIT_VERIFY;
        }
    }
    Ok(code)
}

fn scaling_sweep(s: &Settings, out: &mut dyn Write) -> Result<i32> {
    let cfg = s.sweep_config()?;
    let formats: Vec<Format> = s
        .get("format")
        .unwrap_or("csv,json")
        .split(',')
        .map(|f| f.trim().parse())
        .collect::<Result<_>>()?;
    let stem = PathBuf::from(s.get("out").unwrap_or("sweep"));
    let exp_tol = s.parse::<f64>("exp_tol").unwrap_or(DEFAULT_EXP_TOL);
    cfg.validate()?;
    let res = run_sweep(&cfg)?;
    let code = report_sweep(&res, Some(exp_tol), out)?;
    for p in emit(&res, &stem, &formats)? {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(code)
}

fn ansatz_check(s: &Settings, out: &mut dyn Write) -> Result<i32> {
    let hs = s.list("h")?;
    let length: f64 = s.parse("length")?;
    let tol = s.parse::<f64>("exp_tol").unwrap_or(DEFAULT_EXP_TOL);
    let mut pts = Vec::new();
    let mut code = EXIT_OK;
    writeln!(
        out,
        "{:>10} {:>14} {:>12} {:>12} {:>12} {:>8}",
        "h", "rayleigh", "r-theta", "r-z", "theta-z", "best"
    )?;
    for &h in &hs {
        let geom = ShellGeometry::new(h, length)?;
        let rep = ansatz_quotient(&AnsatzGenerator::optimal(geom)?)?;
        let search = scale_search(geom, Arc::new(PolynomialBump::default()))?;
        writeln!(
            out,
            "{:>10} {:>14.6e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8}",
            h,
            rep.rayleigh,
            rep.ratios[0],
            rep.ratios[1],
            rep.ratios[2],
            format!("k={},j={}", search.best.k, search.best.j)
        )?;
        if rep.support_shrunk {
            writeln!(out, "note: axial support shrunk to fit L at h={h}")?;
        }
        // the scale comparison is asymptotic; skip the largest thickness
        if h <= 1e-3 && !search.optimum_at_quarter_power() {
            writeln!(
                out,
                "FAIL: scale optimum not at a = h^(1/4), b = 1 for h={h}"
            )?;
            code = EXIT_VERIFY;
        }
        pts.push((h, rep.rayleigh));
    }
    if pts.len() >= 2 {
        let fit = fit_exponent(&pts)?;
        let ok = (fit.slope - 1.5).abs() <= tol;
        writeln!(
            out,
            "ansatz exponent={:.4} vs 1.5 +/- {tol}: {}",
            fit.slope,
            if ok { "PASS" } else { "FAIL" }
        )?;
        if !ok {
            code = EXIT_VERIFY;
        }
    }
    Ok(code)
}

fn rectangle_verify(s: &Settings, out: &mut dyn Write) -> Result<i32> {
    let which = s.get("which").unwrap_or("all").to_ascii_lowercase();
    let spec = CorpusSpec {
        seed: s.parse("seed")?,
        count: s.parse("count")?,
        h: s.list("h")?,
        p: s.parse("p")?,
        ..CorpusSpec::standard(1)
    };
    if let Some(&bad) = spec.h.iter().find(|&&h| !(h > 0.0 && h < 1.0)) {
        return Err(KornError::Config(format!("h = {bad} outside (0, 1)")));
    }
    let alphas = s.list("alpha")?;
    let persisted = MeasuredConstants::persisted();
    let slack = MeasuredConstants {
        poltora: persisted.poltora * REGRESSION_SLACK,
        crazy: persisted.crazy * REGRESSION_SLACK,
        ..persisted.clone()
    };
    let all = which == "all";
    let mut failed = false;
    writeln!(
        out,
        "{:<14} {:>7} {:>10} {:>14} {:>12}",
        "check", "fields", "violations", "min rel margin", "constant"
    )?;
    let table_row = |out: &mut dyn Write,
                     name: &str,
                     n: usize,
                     viol: usize,
                     margin: f64,
                     c: Option<f64>|
     -> Result<()> {
        writeln!(
            out,
            "{:<14} {:>7} {:>10} {:>14.4e} {:>12}",
            name,
            n,
            viol,
            margin,
            c.map_or_else(|| "-".into(), |c| format!("{c:.4}"))
        )?;
        Ok(())
    };
    for (name, ineq) in [
        ("basicineq100", Inequality::Basicineq100 { alpha: 0.0 }),
        ("poltora", Inequality::Poltora),
        ("uest", Inequality::Uest),
        ("crazy", Inequality::Crazy),
    ] {
        if !(all || which == name) {
            continue;
        }
        let r = rect::verify_corpus(&spec, ineq, &alphas, &slack)?;
        let needed = r.max_needed_constant.map(|c| match ineq {
            Inequality::Poltora | Inequality::Crazy => c * REGRESSION_SLACK,
            _ => c,
        });
        table_row(out, name, r.fields, r.violations, r.min_margin, needed)?;
        let measured = matches!(ineq, Inequality::Poltora | Inequality::Crazy);
        if measured && spec.seed != persisted.seed {
            writeln!(
                out,
                "note: {name} constant is measured on the seed-{} corpus ({:.4}); other seeds report without failing",
                persisted.seed,
                match ineq {
                    Inequality::Poltora => persisted.poltora,
                    _ => persisted.crazy,
                }
            )?;
        } else {
            failed |= r.violations > 0;
        }
    }
    if all || which == "projection" {
        let mut n = 0;
        let mut viol = 0;
        let mut worst = f64::INFINITY;
        for &h in &spec.h {
            let grid = spec.grid(h, BoundaryTag::None)?;
            for i in 0..spec.count.min(100) {
                let f = spec.field(&grid, BoundaryTag::None, i)?;
                for &a in &alphas {
                    let b = rect::projection_bounds(&f, a)?;
                    n += 1;
                    if !b.holds() {
                        viol += 1;
                    }
                    worst = worst
                        .min(1.0 - b.grad_defect / b.grad_bound)
                        .min(1.0 - b.value_defect / b.value_bound);
                }
            }
        }
        table_row(out, "projection", n, viol, worst, Some(rect::K0))?;
        failed |= viol > 0;
    }
    if all || which == "psi" {
        let r = rect::psi_limit_checks();
        writeln!(
            out,
            "psi: limit {:.15} monotone {} branch gap {:.2e}: {}",
            r.limit_at_zero,
            r.monotone_decreasing,
            r.branch_gap,
            if r.passes() { "PASS" } else { "FAIL" }
        )?;
        failed |= !r.passes();
    }
    if all || which == "sharp" {
        for (h, p) in [
            (0.1, std::f64::consts::PI),
            (0.05, std::f64::consts::PI),
            (0.1, 1.0),
        ] {
            let c = rect::sharp_harmonic_check(h, p)?;
            let ok = c.equality_holds(1e-10);
            writeln!(
                out,
                "sharp h={h} p={p:.6}: tau={:.6} lhs={:.15e} rhs={:.15e} gap={:.2e}; at tau={:.6} rhs={:.15e}: {}",
                c.tau,
                c.lhs,
                c.rhs,
                c.relative_gap,
                c.first_mode_tau,
                c.rhs_at_first_mode_tau,
                if ok { "PASS" } else { "FAIL" }
            )?;
            failed |= !ok;
        }
    }
    if !(all
        || [
            "basicineq100",
            "poltora",
            "uest",
            "crazy",
            "projection",
            "psi",
            "sharp",
        ]
        .contains(&which.as_str()))
    {
        return Err(KornError::Config(format!("unknown check '{which}'")));
    }
    Ok(if failed { EXIT_VERIFY } else { EXIT_OK })
}

/// Elementary checks with known answers; prints one line each.
pub fn selftest(out: &mut dyn Write) -> Result<i32> {
    let mut failures = 0;
    let mut check = |out: &mut dyn Write, name: &str, ok: bool| -> Result<()> {
        writeln!(out, "{} {name}", if ok { "PASS" } else { "FAIL" })?;
        if !ok {
            failures += 1;
        }
        Ok(())
    };
    use crate::rect::{GradientKind, RectField, RectGrid};

    let g = RectGrid::new(0.1, 1.0, 8, 10)?;
    let f = RectField::from_fn(g.clone(), BoundaryTag::None, |x, y| (x * y, x - y * y))?;
    let m = rect::modified_gradient(&f, GradientKind::Alpha(0.0));
    check(
        out,
        "alpha-0 gradient is the plain gradient",
        m.entry(0, 0) == &g.dx(f.u())[..] && m.entry(1, 1) == &g.dy(f.v())[..],
    )?;

    let w = rect::harmonic_projection(&f)?;
    let dev = w
        .iter()
        .zip(f.u())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(out, "harmonic projection fixes x*y", dev < 1e-9)?;

    check(out, "psi(0+) = 3", (rect::psi(1e-9) - 3.0).abs() < 1e-9)?;

    let fit = fit_exponent(&[(1.0, 1.0), (0.5, 0.5f64.powf(1.5))])?;
    check(
        out,
        "two-point fit slope 1.5",
        (fit.slope - 1.5).abs() < 1e-12,
    )?;
    let fit = fit_exponent(&[(0.1, 2.0), (0.05, 2.0)])?;
    check(out, "constant values fit slope 0", fit.slope.abs() < 1e-12)?;

    let csv = crate::experiments::to_csv(&SweepResult::empty(SweepConfig::default()));
    check(
        out,
        "empty result gives header-only csv",
        csv.lines()
            .filter(|l| !l.starts_with('#'))
            .eq([crate::experiments::CSV_HEADER]),
    )?;

    let z = RectField::from_fn(g.clone(), BoundaryTag::ZeroVAtBottom, |x, y| {
        (x + y * y, 0.0)
    })?;
    let ext = rect::even_odd_extend(&z)?;
    check(
        out,
        "even-odd extension of v = 0 keeps v = 0",
        ext.v().iter().all(|&v| v == 0.0),
    )?;

    let pg = RectGrid::periodic(0.1, std::f64::consts::PI, 8, 16)?;
    let zero = RectField::zeros(pg, BoundaryTag::PeriodicBoth);
    let mut ok = true;
    for w in [
        Inequality::Basicineq100 { alpha: 1.0 },
        Inequality::Uest,
        Inequality::Crazy,
    ] {
        ok &= rect::verify_inequalities(&zero, w)?.margin >= 0.0;
    }
    check(out, "zero field has nonnegative margins", ok)?;

    let geom = ShellGeometry::new(0.1, 1.0)?;
    let grid = crate::fields::Grid3::new(geom, 8, 16, 12)?;
    let mut worst: f64 = 0.0;
    for rm in crate::fields::RigidMotion::ALL {
        let field = crate::fields::DisplacementField::from_fn(grid.clone(), None, |r, t, z| {
            rm.eval(r, t, z)
        })?;
        let e = crate::fields::cylindrical_gradient(&field)?.symmetrize();
        worst = worst.max(e.l2_norm());
    }
    check(out, "rigid motions have zero strain", worst < 1e-10)?;

    let n = nalgebra::DMatrix::<f64>::identity(4, 4) * 2.0;
    let spec = crate::eigen::PencilSpec::new(n.clone(), n, crate::eigen::Which::Smallest);
    let r = crate::eigen::extreme_eig(&spec)?;
    check(
        out,
        "pencil N = D has eigenvalue 1",
        (r.value - 1.0).abs() < 1e-12,
    )?;

    let c = rect::sharp_harmonic_check(0.1, std::f64::consts::PI)?;
    check(
        out,
        "extremal vanishes at y = 0 and y = p",
        (std::f64::consts::PI).sin().abs() < 1e-15 && c.norm_w > 0.0,
    )?;

    check(
        out,
        "space names round-trip",
        FunctionSpace::V1.as_str().parse::<FunctionSpace>()? == FunctionSpace::V1,
    )?;

    writeln!(out, "selftest: {failures} failure(s)")?;
    Ok(if failures == 0 { EXIT_OK } else { EXIT_VERIFY })
}
