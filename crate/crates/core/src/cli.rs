//! Command-line front end: spec-file loading, report rendering and the
//! exit-code contract (0 pass, 1 check failure, 2 input error, 3 inconclusive).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, Fixture, FIXTURE_NAMES};
use crate::exprlang::{line_col, parse_expr_with_names, Expr};
use crate::geometry::{ChartSpec, MetricField};
use crate::soliton::{Analysis, IdentityReport, SamplePlan, SolitonSpec, Tolerances, TrivialityVerdict, Verdict};
use crate::spectral::{self, DichotomyReport, EigenEstimate, ManifoldTag, SolverOptions, SpectralError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "soliton", version, about = "Verify gradient Ricci solitons on a coordinate chart")]
pub struct Cli {
    /// Emit machine-readable JSON on stdout
    #[arg(long, global = true)]
    pub json: bool,
    /// Write a CSV table (residuals, verdict or convergence history)
    #[arg(long, global = true, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Override the relevant tolerance
    #[arg(long, global = true, value_name = "FLOAT")]
    pub tolerance: Option<f64>,
    /// Override the per-axis sample count of grid plans
    #[arg(long, global = true, value_name = "INT")]
    pub samples: Option<usize>,
    /// Seed for the spectral start vectors
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Suppress the human-readable report
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the identity suite on a spec file, `-` (stdin) or `catalog:<name>`
    Verify { input: String },
    /// Decide triviality from the scalar-curvature criterion
    Classify { input: String },
    /// Estimate the first Laplace eigenvalue of a torus or sphere
    Spectral {
        /// `torus` or `sphere`
        tag: String,
        /// Sphere radius (default 1)
        #[arg(long)]
        radius: Option<f64>,
        /// Torus side length (default 2π)
        #[arg(long)]
        side: Option<f64>,
        /// Grid cells per axis; the sphere uses res × 2res
        #[arg(long, default_value_t = spectral::DEFAULT_RESOLUTION)]
        res: usize,
        /// Soliton to place against the eigenvalue dichotomy (sphere only)
        #[arg(long)]
        fixture: Option<String>,
    },
    /// List or print the built-in fixtures
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogAction {
    List,
    /// Print a fixture as a spec file
    Show { name: String },
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Syntax(String),
    #[error("{key}: {message}")]
    Key { key: String, message: String },
    #[error(transparent)]
    Catalog(#[from] catalog::CatalogError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn key_err(key: impl Into<String>, message: impl Into<String>) -> InputError {
    InputError::Key { key: key.into(), message: message.into() }
}

/// Spec-file document. `S` is `String` for JSON input and a spanned string
/// for TOML, so expression diagnostics can point into the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "S: DeserializeOwned"))]
pub struct SpecFile<S = String> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<String>>,
    pub lambda: f64,
    pub potential: S,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity: Option<S>,
    pub domain: Vec<[f64; 2]>,
    /// `"i,j"` (1-based, lower triangle) to expression; missing off-diagonal
    /// entries are zero.
    pub metric: BTreeMap<String, S>,
    pub samples: SamplesFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesFile>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesFile {
    pub identity_abs: Option<f64>,
    pub identity_rel: Option<f64>,
    pub triviality: Option<f64>,
    pub cauchy_schwarz: Option<f64>,
    pub poisson_algebra: Option<f64>,
}

pub trait TextField: DeserializeOwned {
    fn text(&self) -> &str;
    fn span(&self) -> Option<Range<usize>>;
}

impl TextField for String {
    fn text(&self) -> &str {
        self
    }
    fn span(&self) -> Option<Range<usize>> {
        None
    }
}

impl TextField for toml::Spanned<String> {
    fn text(&self) -> &str {
        self.get_ref()
    }
    fn span(&self) -> Option<Range<usize>> {
        Some(self.span())
    }
}

impl SpecFile<String> {
    pub fn from_fixture(f: &Fixture) -> Self {
        let spec = &f.spec;
        let n = spec.dim();
        let mut metric = BTreeMap::new();
        for i in 0..n {
            for j in 0..=i {
                let text = &f.metric_text[i][j];
                if i == j || text != "0" {
                    metric.insert(format!("{},{}", i + 1, j + 1), text.clone());
                }
            }
        }
        let samples = match &spec.samples {
            SamplePlan::Grid { counts, margin } => {
                SamplesFile { grid: Some(counts.clone()), margin: Some(*margin), points: None }
            }
            SamplePlan::Points(p) => SamplesFile { points: Some(p.clone()), ..Default::default() },
        };
        SpecFile {
            name: Some(f.name.clone()),
            dimension: n,
            coordinates: None,
            lambda: spec.lambda,
            potential: f.potential_text.clone(),
            validity: f.validity_text.clone(),
            domain: spec.chart.domain().iter().map(|&(a, b)| [a, b]).collect(),
            metric,
            samples,
            tolerances: None,
        }
    }
}

/// Parses one expression field, mapping its diagnostic into the source file
/// when the value is a plain single-line string.
fn parse_field<S: TextField>(
    key: &str,
    field: &S,
    dim: usize,
    names: &[String],
    source: Option<&str>,
) -> Result<std::sync::Arc<Expr>, InputError> {
    let text = field.text();
    parse_expr_with_names(text, dim, names).map_err(|e| {
        let located = match (source, field.span()) {
            (Some(src), Some(span)) => {
                let raw = &src[span.clone()];
                let plain = raw.len() == text.len() + 2 && !raw.contains('\\') && !raw.contains('\n');
                plain.then(|| {
                    let (line, col) = line_col(src, span.start + 1 + e.span.start);
                    format!("line {line}, column {col}: {}", e.kind)
                })
            }
            _ => None,
        };
        let message = located.unwrap_or_else(|| format!("in `{text}` at {}", e.render(text)));
        key_err(key, message)
    })
}

fn build_spec<S: TextField>(file: &SpecFile<S>, source: Option<&str>) -> Result<SolitonSpec, InputError> {
    let n = file.dimension;
    if !(2..=8).contains(&n) {
        return Err(key_err("dimension", format!("must lie in [2, 8], got {n}")));
    }
    let names: Vec<String> = match &file.coordinates {
        Some(names) => {
            if names.len() != n {
                return Err(key_err("coordinates", format!("expected {n} names, got {}", names.len())));
            }
            for (k, name) in names.iter().enumerate() {
                let ok = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if !ok || names[..k].contains(name) {
                    return Err(key_err("coordinates", format!("invalid or repeated name `{name}`")));
                }
            }
            names.clone()
        }
        None => (1..=n).map(|i| format!("x{i}")).collect(),
    };
    if file.domain.len() != n {
        return Err(key_err("domain", format!("expected {n} intervals, got {}", file.domain.len())));
    }
    let domain: Vec<(f64, f64)> = file.domain.iter().map(|&[a, b]| (a, b)).collect();
    let validity = match &file.validity {
        Some(v) => Some(parse_field("validity", v, n, &names, source)?),
        None => None,
    };
    let chart = ChartSpec::new(names.clone(), domain, validity).map_err(|e| key_err("domain", e.to_string()))?;

    let mut entries: BTreeMap<(usize, usize), std::sync::Arc<Expr>> = BTreeMap::new();
    for (key, value) in &file.metric {
        let full_key = format!("metric.\"{key}\"");
        let parsed: Option<(usize, usize)> = key
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
        let (i, j) = match parsed {
            Some((i, j)) if (1..=n).contains(&i) && (1..=n).contains(&j) => (i.max(j) - 1, i.min(j) - 1),
            _ => return Err(key_err(full_key, format!("expected \"i,j\" with 1 <= i, j <= {n}"))),
        };
        let e = parse_field(&full_key, value, n, &names, source)?;
        if entries.insert((i, j), e).is_some() {
            return Err(key_err(full_key, "component given twice (the metric is symmetric)"));
        }
    }
    for i in 0..n {
        if !entries.contains_key(&(i, i)) {
            return Err(key_err("metric", format!("missing diagonal component \"{0},{0}\"", i + 1)));
        }
    }
    let metric = MetricField::from_fn(n, |i, j| entries.get(&(i, j)).cloned().unwrap_or_else(Expr::zero));
    let potential = parse_field("potential", &file.potential, n, &names, source)?;

    let samples = match (&file.samples.grid, &file.samples.points) {
        (Some(counts), None) => SamplePlan::Grid { counts: counts.clone(), margin: file.samples.margin.unwrap_or(0.0) },
        (None, Some(points)) => {
            if file.samples.margin.is_some() {
                return Err(key_err("samples.margin", "only meaningful with a grid"));
            }
            if let Some(p) = points.iter().find(|p| p.len() != n) {
                return Err(key_err("samples.points", format!("point {p:?} does not have {n} coordinates")));
            }
            SamplePlan::Points(points.clone())
        }
        _ => return Err(key_err("samples", "give exactly one of `grid` or `points`")),
    };
    let mut tolerances = Tolerances::default();
    if let Some(t) = &file.tolerances {
        for (name, value, slot) in [
            ("identity_abs", t.identity_abs, &mut tolerances.identity_abs),
            ("identity_rel", t.identity_rel, &mut tolerances.identity_rel),
            ("triviality", t.triviality, &mut tolerances.triviality),
            ("cauchy_schwarz", t.cauchy_schwarz, &mut tolerances.cauchy_schwarz),
            ("poisson_algebra", t.poisson_algebra, &mut tolerances.poisson_algebra),
        ] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(key_err(format!("tolerances.{name}"), "must be positive and finite"));
                }
                *slot = v;
            }
        }
    }
    let spec = SolitonSpec::new(chart, metric, potential, file.lambda, samples)
        .map_err(|e| key_err("spec", e.to_string()))?;
    Ok(spec.with_tolerances(tolerances))
}

/// Parses spec-file text: JSON when it starts with `{`, TOML otherwise.
pub fn parse_spec_text(text: &str) -> Result<SolitonSpec, InputError> {
    if text.trim_start().starts_with('{') {
        let file: SpecFile<String> =
            serde_json::from_str(text).map_err(|e| InputError::Syntax(format!("JSON: {e}")))?;
        build_spec(&file, None)
    } else {
        let file: SpecFile<toml::Spanned<String>> = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| {
                let (l, c) = line_col(text, s.start);
                format!("line {l}, column {c}: ")
            });
            InputError::Syntax(format!("{}{}", at.unwrap_or_default(), e.message()))
        })?;
        build_spec(&file, Some(text))
    }
}

/// Loads `catalog:<name>`, `-` (stdin) or a file path.
pub fn load_spec(input: &str, stdin: &mut dyn Read) -> Result<(String, SolitonSpec), InputError> {
    if let Some(name) = input.strip_prefix("catalog:") {
        return Ok((name.to_string(), catalog::fixture(name)?.spec));
    }
    let (label, text) = if input == "-" {
        let mut s = String::new();
        stdin.read_to_string(&mut s).map_err(|e| InputError::Io { path: "<stdin>".into(), message: e.to_string() })?;
        ("<stdin>".to_string(), s)
    } else {
        let s = std::fs::read_to_string(input)
            .map_err(|e| InputError::Io { path: input.to_string(), message: e.to_string() })?;
        (input.to_string(), s)
    };
    let spec = parse_spec_text(&text).map_err(|e| match e {
        InputError::Syntax(m) => InputError::Syntax(format!("{label}: {m}")),
        InputError::Key { key, message } => InputError::Key { key: format!("{label}: {key}"), message },
        other => other,
    })?;
    Ok((label, spec))
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

#[derive(Serialize)]
struct ClassifyOutput<'a> {
    source: &'a str,
    tolerance_overridden: bool,
    #[serde(flatten)]
    verdict: &'a TrivialityVerdict,
}

#[derive(Serialize)]
struct SpectralOutput<'a> {
    #[serde(flatten)]
    estimate: &'a EigenEstimate,
    dichotomy: Option<&'a DichotomyReport>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct ResidualRow<'a> {
    id: &'a str,
    max_abs_residual: f64,
    max_rel_residual: f64,
    abs_tolerance: f64,
    rel_tolerance: f64,
    pass: bool,
    skipped: bool,
    worst_point: String,
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn human(&self) -> bool {
        !self.cli.quiet && !self.cli.json
    }

    fn json<T: Serialize>(&mut self, value: &T) -> std::io::Result<()> {
        if self.cli.json {
            let text = serde_json::to_string_pretty(value).expect("reports serialize");
            writeln!(self.out, "{text}")?;
        }
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, rows: impl IntoIterator<Item = T>) -> Result<(), String> {
        let Some(path) = &self.cli.csv else { return Ok(()) };
        write_csv(path, rows).map_err(|e| format!("cannot write {}: {e}", path.display()))
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn apply_overrides(spec: &mut SolitonSpec, samples: Option<usize>) -> Result<Option<String>, InputError> {
    let Some(k) = samples else { return Ok(None) };
    if k == 0 {
        return Err(key_err("--samples", "must be positive"));
    }
    match &mut spec.samples {
        SamplePlan::Grid { counts, .. } => {
            counts.iter_mut().for_each(|c| *c = k);
            Ok(None)
        }
        SamplePlan::Points(_) => Ok(Some("--samples ignored: spec lists explicit points".to_string())),
    }
}

fn check_tolerance(t: Option<f64>) -> Result<Option<f64>, InputError> {
    match t {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(key_err("--tolerance", "must be positive and finite")),
        other => Ok(other),
    }
}

fn cmd_verify(ctx: &mut Ctx, input: &str, stdin: &mut dyn Read) -> Result<i32, InputError> {
    let (label, mut spec) = load_spec(input, stdin)?;
    let mut notes: Vec<String> = apply_overrides(&mut spec, ctx.cli.samples)?.into_iter().collect();
    if let Some(t) = check_tolerance(ctx.cli.tolerance)? {
        spec.tolerances.identity_abs = t;
        spec.tolerances.identity_rel = t;
        notes.push(format!("identity tolerances overridden to {t:e}"));
    }
    let analysis = Analysis::new(&spec).map_err(|e| key_err(label.clone(), e.to_string()))?;
    let mut report: IdentityReport = analysis.full_report();
    report.warnings.extend(notes);
    let pass = report.all_pass();

    ctx.json(&report).map_err(io_err)?;
    let rows = report.identities.iter().map(|r| ResidualRow {
        id: r.id.as_str(),
        max_abs_residual: r.max_abs_residual,
        max_rel_residual: r.max_rel_residual,
        abs_tolerance: r.abs_tolerance,
        rel_tolerance: r.rel_tolerance,
        pass: r.pass,
        skipped: r.skipped,
        worst_point: r.worst_point.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
    });
    ctx.csv(rows).map_err(|m| key_err("--csv", m))?;
    if ctx.human() {
        let out = &mut *ctx.out;
        let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(io_err);
        w(
            out,
            format!(
                "{label}: n = {}, λ = {} ({}), {} samples",
                report.dimension, report.lambda, report.kind, report.sample_count
            ),
        )?;
        w(out, format!("{:<8} {:<36} {:>11} {:>11}  {:<6} worst point", "id", "identity", "max abs", "max rel", "status"))?;
        for r in &report.identities {
            let status = if r.skipped {
                "skip"
            } else if r.pass {
                "ok"
            } else {
                "FAIL"
            };
            let worst = if r.worst_point.is_empty() || r.pass { String::new() } else { fmt_point(&r.worst_point) };
            w(
                out,
                format!(
                    "{:<8} {:<36} {:>11.3e} {:>11.3e}  {:<6} {}",
                    r.id.as_str(),
                    r.id.description(),
                    r.max_abs_residual,
                    r.max_rel_residual,
                    status,
                    worst
                ),
            )?;
            if let Some(note) = &r.note {
                if r.skipped || !r.pass {
                    w(out, format!("         {note}"))?;
                }
            }
        }
        for warning in &report.warnings {
            w(out, format!("warning: {warning}"))?;
        }
        for a in &report.assumptions {
            w(out, format!("note: {a}"))?;
        }
        w(out, if pass { "PASS".to_string() } else { "FAIL".to_string() })?;
    }
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

fn cmd_classify(ctx: &mut Ctx, input: &str, stdin: &mut dyn Read) -> Result<i32, InputError> {
    let (label, mut spec) = load_spec(input, stdin)?;
    if let Some(w) = apply_overrides(&mut spec, ctx.cli.samples)? {
        writeln!(ctx.err, "warning: {w}").map_err(io_err)?;
    }
    let overridden = check_tolerance(ctx.cli.tolerance)?;
    let tol = overridden.unwrap_or(spec.tolerances.triviality);
    let analysis = Analysis::new(&spec).map_err(|e| key_err(label.clone(), e.to_string()))?;
    let verdict = analysis.classify_triviality(tol).map_err(|e| key_err(label.clone(), e.to_string()))?;
    let output = ClassifyOutput { source: &label, tolerance_overridden: overridden.is_some(), verdict: &verdict };
    ctx.json(&output).map_err(io_err)?;
    ctx.csv([&output]).map_err(|m| key_err("--csv", m))?;
    if ctx.human() {
        let v = &verdict;
        let mut lines = vec![
            format!("{label}: {}", v.verdict),
            format!("  criterion residual max|S − λ(f + n/2)| = {:.6e}", v.criterion_residual),
            format!("  f spread                              = {:.6e}", v.f_spread),
            format!("  S spread                              = {:.6e}", v.s_spread),
            format!("  threshold tol·scale = {:e}·{:.6} = {:.6e}", v.tolerance, v.scale, v.threshold),
            format!("  samples = {}, iff violation = {}", v.sample_count, v.iff_violation),
        ];
        if overridden.is_some() {
            lines.push(format!("  tolerance overridden on the command line ({tol:e})"));
        }
        if let Some(note) = &v.note {
            lines.push(format!("  note: {note}"));
        }
        for l in lines {
            writeln!(ctx.out, "{l}").map_err(io_err)?;
        }
    }
    Ok(match verdict.verdict {
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        _ => EXIT_PASS,
    })
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    eigenvalue: f64,
    residual: f64,
    cg_iterations: usize,
}

fn cmd_spectral(
    ctx: &mut Ctx,
    tag: &str,
    radius: Option<f64>,
    side: Option<f64>,
    res: usize,
    fixture: Option<&str>,
    stdin: &mut dyn Read,
) -> Result<i32, InputError> {
    let tag = match (tag, radius, side) {
        ("sphere", r, None) => ManifoldTag::parse("sphere", r.unwrap_or(1.0))?,
        ("torus", None, s) => ManifoldTag::parse("torus", s.unwrap_or(2.0 * std::f64::consts::PI))?,
        ("sphere", _, Some(_)) => return Err(key_err("--side", "only applies to the torus")),
        ("torus", Some(_), _) => return Err(key_err("--radius", "only applies to the sphere")),
        (other, _, _) => return Err(SpectralError::UnknownTag(other.to_string()).into()),
    };
    let dichotomy_input = match fixture {
        Some(input) => {
            if matches!(tag, ManifoldTag::Torus { .. }) {
                return Err(SpectralError::NotSolitonFixture(
                    "the flat torus carries no non-steady soliton in the catalog".into(),
                )
                .into());
            }
            let (label, mut spec) = load_spec(input, stdin)?;
            apply_overrides(&mut spec, ctx.cli.samples)?;
            Some((label, spec))
        }
        None => None,
    };
    let op = spectral::build_laplacian(tag, res)?;
    let mut options = SolverOptions { seed: ctx.cli.seed, ..Default::default() };
    if let Some(t) = check_tolerance(ctx.cli.tolerance)? {
        options.tolerance = t;
    }
    let estimate = match spectral::first_eigenvalue(&op, options) {
        Ok(e) => e,
        Err(e @ SpectralError::NonConvergence { .. }) => {
            writeln!(ctx.err, "error: {e}").map_err(io_err)?;
            return Ok(EXIT_FAIL);
        }
        Err(e) => return Err(e.into()),
    };
    let dichotomy = match &dichotomy_input {
        Some((label, spec)) => {
            let analysis = Analysis::new(spec).map_err(|e| key_err(label.clone(), e.to_string()))?;
            Some(spectral::dichotomy_report(&analysis, &estimate)?)
        }
        None => None,
    };
    let mut notes = vec![
        "no compact non-trivial shrinker is available as a fixture; only the trivial branch of the dichotomy can be exhibited"
            .to_string(),
    ];
    if dichotomy.is_none() {
        notes.push("spectral-only mode: no dichotomy evaluated".to_string());
    }
    if estimate.low_resolution {
        notes.push(format!("low resolution ({res} < {})", spectral::LOW_RESOLUTION));
    }
    let output = SpectralOutput { estimate: &estimate, dichotomy: dichotomy.as_ref(), notes };
    ctx.json(&output).map_err(io_err)?;
    ctx.csv(estimate.history.iter().map(|h| HistoryRow {
        iteration: h.iteration,
        eigenvalue: h.eigenvalue,
        residual: h.residual,
        cg_iterations: h.cg_iterations,
    }))
    .map_err(|m| key_err("--csv", m))?;
    if ctx.human() {
        let e = &estimate;
        let what = match e.tag {
            ManifoldTag::Torus { side } => format!("flat torus, side {side}"),
            ManifoldTag::Sphere { radius } => format!("round sphere, radius {radius}"),
        };
        let mut lines = vec![
            format!("{what}: resolution {}, {} cells", e.resolution, e.vertices),
            format!("  λ₁ ≈ {:.10} (closed form {:.10}, relative error {:.3e})", e.eigenvalue, e.exact, e.relative_error),
            format!("  {} iterations, residual {:.3e}, seed {}", e.history.len(), e.residual, e.seed),
        ];
        if let Some(off) = e.pole_offset {
            lines.push(format!("  latitude rows offset {off:.6} rad from the poles"));
        }
        if let Some(d) = &dichotomy {
            lines.push(format!("  dichotomy: {}", d.statement));
        }
        lines.extend(output.notes.iter().map(|n| format!("  note: {n}")));
        for l in lines {
            writeln!(ctx.out, "{l}").map_err(io_err)?;
        }
    }
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct ListEntry {
    name: String,
    kind: String,
    lambda: f64,
    trivial: bool,
    dimension: usize,
    description: String,
}

fn cmd_catalog(ctx: &mut Ctx, action: &CatalogAction) -> Result<i32, InputError> {
    match action {
        CatalogAction::List => {
            let entries: Vec<ListEntry> = FIXTURE_NAMES
                .iter()
                .map(|n| {
                    let f = catalog::fixture(n).expect("default fixture");
                    ListEntry {
                        name: f.name.clone(),
                        kind: f.kind().to_string(),
                        lambda: f.spec.lambda,
                        trivial: f.expected.trivial,
                        dimension: f.spec.dim(),
                        description: f.description.clone(),
                    }
                })
                .collect();
            ctx.json(&entries).map_err(io_err)?;
            if !ctx.cli.json && !ctx.cli.quiet {
                for e in &entries {
                    let triv = if e.trivial { "trivial" } else { "non-trivial" };
                    let sign = if e.lambda > 0.0 { "λ > 0" } else { "λ < 0" };
                    writeln!(ctx.out, "{:<24} {:<10} {sign}  {:<12} {}", e.name, e.kind, triv, e.description)
                        .map_err(io_err)?;
                }
            }
        }
        CatalogAction::Show { name } => {
            let name = name.strip_prefix("catalog:").unwrap_or(name);
            let f = catalog::fixture(name)?;
            let file = SpecFile::from_fixture(&f);
            if ctx.cli.json {
                ctx.json(&file).map_err(io_err)?;
            } else {
                let body = toml::to_string(&file).expect("spec files serialize");
                write!(ctx.out, "# {}\n# {}\n{body}", f.description, f.provenance).map_err(io_err)?;
            }
        }
    }
    Ok(EXIT_PASS)
}

fn io_err(e: std::io::Error) -> InputError {
    InputError::Io { path: "<stdout>".into(), message: e.to_string() }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    let mut ctx = Ctx { cli: &cli, out, err };
    let result = match &cli.command {
        Command::Verify { input } => cmd_verify(&mut ctx, input, stdin),
        Command::Classify { input } => cmd_classify(&mut ctx, input, stdin),
        Command::Spectral { tag, radius, side, res, fixture } => {
            cmd_spectral(&mut ctx, tag, *radius, *side, *res, fixture.as_deref(), stdin)
        }
        Command::Catalog { action } => cmd_catalog(&mut ctx, action),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {e}");
            EXIT_INPUT
        }
    }
}
