//! Gradient Ricci soliton identities as residual fields over a sample set.
//!
//! [`Analysis`] evaluates the geometry once at every sample point; all the
//! checks (soliton equation, trace identity, Bianchi, Hamilton's identity,
//! the scalar-curvature and Bochner identities, the |Ric|²/|Hess f|²
//! identities under `S = λf + c`, the triviality criterion and the Poisson
//! checks) are reductions over those cached states.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{EvalError, Expr};
use crate::geometry::{bianchi_residual, ChartSpec, GeometryEngine, GeometryError, MetricField, PointGeometry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolitonError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid soliton specification: {0}")]
    InvalidSpec(String),
    #[error("operation requires a non-steady soliton (λ ≠ 0)")]
    Steady,
    #[error("S + |∇f|² − 2λf is not constant: mean {mean}, spread {spread}")]
    NotConstant { mean: f64, spread: f64 },
}

impl From<EvalError> for SolitonError {
    fn from(e: EvalError) -> Self {
        SolitonError::Geometry(e.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplePlan {
    /// Points per axis, spread uniformly over the chart domain shrunk by
    /// `margin` (a fraction of each side) at both ends, endpoints included.
    /// Points failing the validity predicate are dropped.
    Grid { counts: Vec<usize>, margin: f64 },
    /// Explicit points; each must be valid.
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub identity_abs: f64,
    pub identity_rel: f64,
    /// Relative tolerance of the triviality verdict and of constancy tests.
    pub triviality: f64,
    /// Cauchy–Schwarz slack, relative to `1 + S²`.
    pub cauchy_schwarz: f64,
    /// `|Δ(S − λf) − (ΔS − λ(nλ − S))|` bound, applied where the trace
    /// identity residual is below the same bound.
    pub poisson_algebra: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { identity_abs: 1e-8, identity_rel: 1e-8, triviality: 1e-6, cauchy_schwarz: 1e-10, poisson_algebra: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolitonKind {
    Shrinking,
    Steady,
    Expanding,
}

impl SolitonKind {
    pub fn from_lambda(lambda: f64) -> Self {
        if lambda > 0.0 {
            SolitonKind::Shrinking
        } else if lambda < 0.0 {
            SolitonKind::Expanding
        } else {
            SolitonKind::Steady
        }
    }
}

impl fmt::Display for SolitonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolitonKind::Shrinking => "shrinking",
            SolitonKind::Steady => "steady",
            SolitonKind::Expanding => "expanding",
        })
    }
}

/// Metric, potential and soliton constant on one chart, with a sample plan.
#[derive(Debug, Clone)]
pub struct SolitonSpec {
    pub chart: ChartSpec,
    pub metric: MetricField,
    pub potential: Arc<Expr>,
    pub lambda: f64,
    pub samples: SamplePlan,
    pub tolerances: Tolerances,
}

impl SolitonSpec {
    pub fn new(
        chart: ChartSpec,
        metric: MetricField,
        potential: Arc<Expr>,
        lambda: f64,
        samples: SamplePlan,
    ) -> Result<Self, SolitonError> {
        let n = chart.dim();
        if metric.dim() != n {
            return Err(SolitonError::InvalidSpec(format!("metric is {0}x{0} on a {n}-dimensional chart", metric.dim())));
        }
        if potential.min_dim() > n {
            return Err(SolitonError::InvalidSpec("potential uses an unknown coordinate".into()));
        }
        if !lambda.is_finite() {
            return Err(SolitonError::InvalidSpec("lambda must be finite".into()));
        }
        match &samples {
            SamplePlan::Grid { counts, margin } => {
                if counts.len() != n || counts.contains(&0) {
                    return Err(SolitonError::InvalidSpec(format!("grid needs {n} positive per-axis counts")));
                }
                if !(0.0..0.5).contains(margin) {
                    return Err(SolitonError::InvalidSpec("grid margin must lie in [0, 0.5)".into()));
                }
            }
            SamplePlan::Points(points) => {
                if points.is_empty() {
                    return Err(SolitonError::InvalidSpec("empty point list".into()));
                }
                for p in points {
                    if !chart.is_valid(p) {
                        return Err(SolitonError::InvalidSpec(format!("sample point {p:?} is not valid in the chart")));
                    }
                }
            }
        }
        Ok(Self { chart, metric, potential, lambda, samples, tolerances: Tolerances::default() })
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn kind(&self) -> SolitonKind {
        SolitonKind::from_lambda(self.lambda)
    }

    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        match &self.samples {
            SamplePlan::Points(points) => points.clone(),
            SamplePlan::Grid { counts, margin } => {
                let axes: Vec<Vec<f64>> = counts
                    .iter()
                    .zip(self.chart.domain())
                    .map(|(&m, &(lo, hi))| {
                        let (lo, hi) = (lo + margin * (hi - lo), hi - margin * (hi - lo));
                        if m == 1 {
                            vec![0.5 * (lo + hi)]
                        } else {
                            (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect()
                        }
                    })
                    .collect();
                let mut out = vec![Vec::new()];
                for axis in &axes {
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            axis.iter().map(move |&x| {
                                let mut p = prefix.clone();
                                p.push(x);
                                p
                            })
                        })
                        .collect();
                }
                out.retain(|p| self.chart.is_valid(p));
                out
            }
        }
    }

    /// Same spec with `f` replaced by `f + shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut s = self.clone();
        s.potential = Expr::add(self.potential.clone(), Expr::constant(shift));
        s
    }
}

fn neumaier_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut count) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum + comp) / count as f64
    }
}

fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityId {
    Eq3,
    Eq5,
    Eq6,
    Eq7norm,
    Eq8,
    Eq9,
    Eq10,
    Eq11,
    Eq12,
    Eq16,
    Thm2,
    Thm34,
}

impl IdentityId {
    pub fn as_str(self) -> &'static str {
        match self {
            IdentityId::Eq3 => "eq3",
            IdentityId::Eq5 => "eq5",
            IdentityId::Eq6 => "eq6",
            IdentityId::Eq7norm => "eq7norm",
            IdentityId::Eq8 => "eq8",
            IdentityId::Eq9 => "eq9",
            IdentityId::Eq10 => "eq10",
            IdentityId::Eq11 => "eq11",
            IdentityId::Eq12 => "eq12",
            IdentityId::Eq16 => "eq16",
            IdentityId::Thm2 => "thm2",
            IdentityId::Thm34 => "thm34",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            IdentityId::Eq3 => "Ric + Hess f = λg",
            IdentityId::Eq5 => "S + Δf = nλ",
            IdentityId::Eq6 => "∇S = 2 div Ric",
            IdentityId::Eq7norm => "S + |∇f|² = 2λf",
            IdentityId::Eq8 => "|Ric|² ≥ S²/n",
            IdentityId::Eq9 => "ΔS − g(∇S,∇f) + 2|Ric|² = 2λS",
            IdentityId::Eq10 => "½Δ|∇f|² = |Hess f|² − Ric(∇f,∇f)",
            IdentityId::Eq11 => "|Ric|² = λ²(2f − n/2) + λc",
            IdentityId::Eq12 => "|Hess f|² = λ(nλ/2 − c)",
            IdentityId::Eq16 => "|Ric|² + |Hess f|² = 2λ²f",
            IdentityId::Thm2 => "trivial ⇔ S = λ(f + n/2)",
            IdentityId::Thm34 => "Δ(S − λf) = ΔS − λ(nλ − S)",
        }
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResult {
    pub id: IdentityId,
    pub max_abs_residual: f64,
    pub max_rel_residual: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
    pub skipped: bool,
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
    pub note: Option<String>,
}

impl IdentityResult {
    /// Reduces per-point `(residual, scale)` pairs; relative residual is
    /// `|r| / (1 + scale)`.
    fn reduce(
        id: IdentityId,
        points: &[Vec<f64>],
        values: impl IntoIterator<Item = (f64, f64)>,
        abs_tolerance: f64,
        rel_tolerance: f64,
    ) -> Self {
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        let mut worst = 0usize;
        let mut nan = false;
        for (k, (r, scale)) in values.into_iter().enumerate() {
            let a = r.abs();
            if a.is_nan() {
                nan = true;
                worst = k;
                continue;
            }
            if a > max_abs {
                max_abs = a;
                worst = k;
            }
            max_rel = max_rel.max(a / (1.0 + scale.abs()));
        }
        if nan {
            max_abs = f64::NAN;
            max_rel = f64::NAN;
        }
        let pass = max_abs <= abs_tolerance && max_rel <= rel_tolerance;
        Self {
            id,
            max_abs_residual: max_abs,
            max_rel_residual: max_rel,
            worst_point: points.get(worst).cloned().unwrap_or_default(),
            pass,
            skipped: false,
            abs_tolerance,
            rel_tolerance,
            note: None,
        }
    }

    fn skipped(id: IdentityId, note: impl Into<String>, abs_tolerance: f64, rel_tolerance: f64) -> Self {
        Self {
            id,
            max_abs_residual: 0.0,
            max_rel_residual: 0.0,
            worst_point: Vec::new(),
            pass: true,
            skipped: true,
            abs_tolerance,
            rel_tolerance,
            note: Some(note.into()),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

pub const COMPACTNESS_CAVEAT: &str = "assumptions not machine-checkable: compactness";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub dimension: usize,
    pub lambda: f64,
    pub kind: SolitonKind,
    pub sample_count: usize,
    /// Hamilton constant `c` of the input potential.
    pub normalization_constant: f64,
    /// Constant added to the potential to normalize it.
    pub normalization_shift: f64,
    pub identities: Vec<IdentityResult>,
    pub warnings: Vec<String>,
    pub assumptions: Vec<String>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.identities.iter().all(|r| r.pass)
    }

    pub fn get(&self, id: IdentityId) -> Option<&IdentityResult> {
        self.identities.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonReport {
    pub c: f64,
    /// max − min of `S + |∇f|² − 2λf` over the samples.
    pub spread: f64,
    pub constant: bool,
    /// `c / (2λ)`; the normalized potential is `f + shift`.
    pub shift: f64,
    pub normalized: SolitonSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    /// Mean of `S − λf`.
    pub c_fit: f64,
    pub spread: f64,
    pub hypothesis_holds: bool,
    pub threshold: f64,
    pub eq11: Option<IdentityResult>,
    pub eq12: Option<IdentityResult>,
    pub eq16: Option<IdentityResult>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Trivial,
    NonTrivial,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Trivial => "Trivial",
            Verdict::NonTrivial => "NonTrivial",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

/// Disagreement between the criterion and f-constancy larger than this
/// multiple of the decision threshold is a theorem violation.
pub const IFF_VIOLATION_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Serialize)]
pub struct TrivialityVerdict {
    pub verdict: Verdict,
    /// max |S − λ(f + n/2)|
    pub criterion_residual: f64,
    /// max f − min f
    pub f_spread: f64,
    /// max S − min S
    pub s_spread: f64,
    /// `1 + |λ|(1 + max|f|)`
    pub scale: f64,
    pub tolerance: f64,
    pub threshold: f64,
    pub sample_count: usize,
    pub iff_violation: bool,
    pub normalization_shift: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonBranch {
    /// `ΔS = λ(nλ − S)` fails somewhere; the theorems say nothing.
    HypothesisNotSatisfied,
    /// Hypothesis holds with S constant: the trivial branch (S = nλ).
    Trivial,
    /// Hypothesis holds with S non-constant: λ is an eigenvalue of Δ and
    /// `S − λf` must be a constant other than nλ/2.
    NonTrivial,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonReport {
    /// max |ΔS − λ(nλ − S)|
    pub hypothesis_residual: f64,
    pub hypothesis_holds: bool,
    /// max |Δ(S − λf) − (ΔS − λ(nλ − S))| over points where the trace
    /// identity residual is at most the algebra tolerance.
    pub algebra_defect: f64,
    pub algebra_points: usize,
    pub algebra_holds: bool,
    pub s_spread: f64,
    pub s_minus_lambda_f_mean: f64,
    pub s_minus_lambda_f_spread: f64,
    pub branch: PoissonBranch,
    /// For the trivial branch: S = nλ. For the non-trivial branch: S − λf
    /// constant and ≠ nλ/2. `None` when the hypothesis fails.
    pub conclusion_holds: Option<bool>,
    pub assumptions: Vec<String>,
}

/// Geometry of one spec evaluated at every sample point.
pub struct Analysis {
    spec: SolitonSpec,
    points: Vec<Vec<f64>>,
    states: Vec<PointGeometry>,
}

impl Analysis {
    pub fn new(spec: &SolitonSpec) -> Result<Self, SolitonError> {
        let points = spec.sample_points();
        if points.is_empty() {
            return Err(SolitonError::InvalidSpec("sample plan has no valid points".into()));
        }
        let engine = GeometryEngine::new(&spec.metric, Some(&spec.potential))?;
        let states = points.par_iter().map(|p| engine.point(p)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { spec: spec.clone(), points, states })
    }

    pub fn spec(&self) -> &SolitonSpec {
        &self.spec
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn states(&self) -> &[PointGeometry] {
        &self.states
    }

    fn n(&self) -> f64 {
        self.spec.dim() as f64
    }

    fn f_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| pot(s).f)
    }

    /// Hamilton's identity `S + |∇f|² − 2λf = c` over the samples.
    pub fn hamilton_values(&self) -> Vec<f64> {
        let lam = self.spec.lambda;
        self.states
            .iter()
            .map(|s| {
                let p = pot(s);
                s.curvature.scalar + p.grad_f_norm_sq - 2.0 * lam * p.f
            })
            .collect()
    }

    pub fn hamilton_constant(&self) -> Result<HamiltonReport, SolitonError> {
        let lam = self.spec.lambda;
        if lam == 0.0 {
            return Err(SolitonError::Steady);
        }
        let h = self.hamilton_values();
        let c = neumaier_mean(h.iter().copied());
        let sp = spread(h.iter().copied());
        let scale = 1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let constant = sp <= self.spec.tolerances.triviality * scale;
        if !constant {
            return Err(SolitonError::NotConstant { mean: c, spread: sp });
        }
        let already = c.abs() <= 1e-9 * (1.0 + lam.abs());
        let shift = if already { 0.0 } else { c / (2.0 * lam) };
        let normalized = if already { self.spec.clone() } else { self.spec.shifted(shift) };
        Ok(HamiltonReport { c, spread: sp, constant, shift, normalized })
    }

    /// Copy of this analysis with the potential shifted by a constant;
    /// derivatives are unchanged so nothing is re-evaluated.
    pub fn shifted(&self, shift: f64) -> Analysis {
        let mut states = self.states.clone();
        for s in &mut states {
            if let Some(p) = &mut s.potential {
                p.f += shift;
            }
        }
        Analysis { spec: self.spec.shifted(shift), points: self.points.clone(), states }
    }

    /// Normalizes by the mean Hamilton constant when it is non-negligible.
    /// Returns the (possibly) shifted analysis, c, the shift, and a warning.
    fn normalize(&self) -> (Analysis, f64, f64, Option<String>) {
        let lam = self.spec.lambda;
        let h = self.hamilton_values();
        let c = neumaier_mean(h.iter().copied());
        if lam == 0.0 || c.abs() <= 1e-9 * (1.0 + lam.abs()) {
            let a = Analysis { spec: self.spec.clone(), points: self.points.clone(), states: self.states.clone() };
            return (a, c, 0.0, None);
        }
        let shift = c / (2.0 * lam);
        let warning = format!("potential was not normalized (c = {c:e}); shifted f by c/(2λ) = {shift:e}");
        (self.shifted(shift), c, shift, Some(warning))
    }

    fn tol(&self) -> Tolerances {
        self.spec.tolerances
    }

    fn reduce(&self, id: IdentityId, values: impl IntoIterator<Item = (f64, f64)>) -> IdentityResult {
        let t = self.tol();
        IdentityResult::reduce(id, &self.points, values, t.identity_abs, t.identity_rel)
    }

    fn eq3(&self) -> IdentityResult {
        let lam = self.spec.lambda;
        self.reduce(
            IdentityId::Eq3,
            self.states.iter().map(|s| {
                let r = residual_matrix(s, lam);
                let c = &s.curvature;
                let scale = (0..c.dim())
                    .flat_map(|i| (0..c.dim()).map(move |j| (i, j)))
                    .map(|(i, j)| c.ricci[(i, j)].abs() + pot(s).hess_f[(i, j)].abs() + (lam * c.g[(i, j)]).abs())
                    .fold(0.0, f64::max);
                (r.amax(), scale)
            }),
        )
    }

    fn eq5_values(&self) -> Vec<(f64, f64)> {
        let nl = self.n() * self.spec.lambda;
        self.states
            .iter()
            .map(|s| {
                let (sc, lf) = (s.curvature.scalar, pot(s).laplacian_f);
                (sc + lf - nl, sc.abs() + lf.abs() + nl.abs())
            })
            .collect()
    }

    fn eq6(&self) -> IdentityResult {
        self.reduce(
            IdentityId::Eq6,
            self.states.iter().map(|s| {
                let c = &s.curvature;
                let scale = c.grad_scalar.iter().zip(&c.div_ricci).map(|(a, b)| a.abs() + 2.0 * b.abs()).fold(0.0, f64::max);
                (bianchi_residual(c), scale)
            }),
        )
    }

    fn eq7norm(&self) -> IdentityResult {
        let lam = self.spec.lambda;
        // a steady potential cannot be normalized; only constancy is checked
        let offset = if lam == 0.0 { neumaier_mean(self.hamilton_values()) } else { 0.0 };
        let r = self.reduce(
            IdentityId::Eq7norm,
            self.states.iter().map(|s| {
                let p = pot(s);
                let sc = s.curvature.scalar;
                (
                    sc + p.grad_f_norm_sq - 2.0 * lam * p.f - offset,
                    sc.abs() + p.grad_f_norm_sq + (2.0 * lam * p.f).abs(),
                )
            }),
        );
        if lam == 0.0 {
            r.with_note(format!("steady: checked S + |∇f|² = const (mean {offset})"))
        } else {
            r
        }
    }

    fn eq8(&self) -> IdentityResult {
        let n = self.n();
        let tol = self.tol().cauchy_schwarz;
        // residual is the violation max(0, S²/n − |Ric|²) relative to 1 + S²
        let values = self.states.iter().map(|s| {
            let c = &s.curvature;
            let violation = (c.scalar * c.scalar / n - c.ricci_norm_sq).max(0.0);
            (violation / (1.0 + c.scalar * c.scalar), 0.0)
        });
        IdentityResult::reduce(IdentityId::Eq8, &self.points, values, tol, tol)
            .with_note("residual: max(0, S²/n − |Ric|²) / (1 + S²)")
    }

    fn eq9(&self) -> IdentityResult {
        let lam = self.spec.lambda;
        self.reduce(
            IdentityId::Eq9,
            self.states.iter().map(|s| {
                let c = &s.curvature;
                let p = pot(s);
                let terms = [c.laplacian_scalar, -p.grad_scalar_dot_grad_f, 2.0 * c.ricci_norm_sq, -2.0 * lam * c.scalar];
                (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
            }),
        )
    }

    fn eq10(&self) -> IdentityResult {
        self.reduce(
            IdentityId::Eq10,
            self.states.iter().map(|s| {
                let p = pot(s);
                let terms = [0.5 * p.laplacian_grad_f_norm_sq, -p.hess_f_norm_sq, p.ricci_grad_f];
                (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
            }),
        )
    }

    /// Residuals of the identities that hold on every gradient soliton,
    /// after auto-normalization of the potential.
    pub fn identity_suite(&self) -> IdentityReport {
        let (a, c, shift, warning) = self.normalize();
        let identities = vec![
            a.eq3(),
            a.reduce(IdentityId::Eq5, a.eq5_values()),
            a.eq6(),
            a.eq7norm(),
            a.eq8(),
            a.eq9(),
            a.eq10(),
        ];
        IdentityReport {
            dimension: self.spec.dim(),
            lambda: self.spec.lambda,
            kind: self.spec.kind(),
            sample_count: self.points.len(),
            normalization_constant: c,
            normalization_shift: shift,
            identities,
            warnings: warning.into_iter().collect(),
            assumptions: Vec::new(),
        }
    }

    /// Fits `S = λf + c`; when the fit is exact evaluates the |Ric|²,
    /// |Hess f|² and sum identities that follow from it.
    pub fn theorem1_pipeline(&self, tol: f64) -> Result<Theorem1Report, SolitonError> {
        let lam = self.spec.lambda;
        if lam == 0.0 {
            return Err(SolitonError::Steady);
        }
        let (a, _, _, _) = self.normalize();
        let diff: Vec<f64> = a.states.iter().map(|s| s.curvature.scalar - lam * pot(s).f).collect();
        let c_fit = neumaier_mean(diff.iter().copied());
        let sp = spread(diff.iter().copied());
        let threshold = tol * (1.0 + diff.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let hypothesis_holds = sp <= threshold;
        if !hypothesis_holds {
            return Ok(Theorem1Report {
                c_fit,
                spread: sp,
                hypothesis_holds,
                threshold,
                eq11: None,
                eq12: None,
                eq16: None,
                note: format!("S − λf is not constant (spread {sp:.3e} > {threshold:.3e}); identities skipped"),
            });
        }
        let n = self.n();
        let eq11 = a.reduce(
            IdentityId::Eq11,
            a.states.iter().map(|s| {
                let f = pot(s).f;
                let rhs = lam * lam * (2.0 * f - n / 2.0) + lam * c_fit;
                (s.curvature.ricci_norm_sq - rhs, s.curvature.ricci_norm_sq.abs() + rhs.abs())
            }),
        );
        let eq12 = a.reduce(
            IdentityId::Eq12,
            a.states.iter().map(|s| {
                let rhs = lam * (n * lam / 2.0 - c_fit);
                let h = pot(s).hess_f_norm_sq;
                (h - rhs, h + rhs.abs())
            }),
        );
        let eq16 = a.reduce(
            IdentityId::Eq16,
            a.states.iter().map(|s| {
                let lhs = s.curvature.ricci_norm_sq + pot(s).hess_f_norm_sq;
                let rhs = 2.0 * lam * lam * pot(s).f;
                (lhs - rhs, lhs.abs() + rhs.abs())
            }),
        );
        Ok(Theorem1Report {
            c_fit,
            spread: sp,
            hypothesis_holds,
            threshold,
            eq11: Some(eq11),
            eq12: Some(eq12),
            eq16: Some(eq16),
            note: format!("S − λf = {c_fit} (nλ/2 = {})", n * lam / 2.0),
        })
    }

    /// Triviality verdict from the criterion `S = λ(f + n/2)` checked
    /// against direct constancy of f.
    pub fn classify_triviality(&self, tol: f64) -> Result<TrivialityVerdict, SolitonError> {
        let lam = self.spec.lambda;
        if lam == 0.0 {
            return Err(SolitonError::Steady);
        }
        let (a, _, shift, warning) = self.normalize();
        let half_n = self.n() / 2.0;
        let criterion_residual = a
            .states
            .iter()
            .map(|s| (s.curvature.scalar - lam * (pot(s).f + half_n)).abs())
            .fold(0.0, f64::max);
        let f_spread = spread(a.f_values());
        let s_spread = spread(a.states.iter().map(|s| s.curvature.scalar));
        let max_f = a.f_values().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = 1.0 + lam.abs() * (1.0 + max_f);
        let threshold = tol * scale;
        let crit_ok = criterion_residual <= threshold;
        let const_ok = f_spread <= threshold;
        let sample_count = a.points.len();
        let (verdict, iff_violation, mut note) = if sample_count < 2 {
            (Verdict::Inconclusive, false, Some("a single sample point cannot test constancy of f".to_string()))
        } else {
            match (crit_ok, const_ok) {
                (true, true) => (Verdict::Trivial, false, None),
                (false, false) => (Verdict::NonTrivial, false, None),
                _ => {
                    let failing = if crit_ok { f_spread } else { criterion_residual };
                    let violation = failing > IFF_VIOLATION_FACTOR * threshold;
                    let msg = if crit_ok {
                        "criterion holds but f is not constant"
                    } else {
                        "f is constant but the criterion fails"
                    };
                    (Verdict::Inconclusive, violation, Some(msg.to_string()))
                }
            }
        };
        if let Some(w) = warning {
            note = Some(match note {
                Some(n) => format!("{n}; {w}"),
                None => w,
            });
        }
        Ok(TrivialityVerdict {
            verdict,
            criterion_residual,
            f_spread,
            s_spread,
            scale,
            tolerance: tol,
            threshold,
            sample_count,
            iff_violation,
            normalization_shift: shift,
            note,
        })
    }

    /// Poisson-equation checks for the scalar curvature.
    pub fn poisson_check(&self, tol: f64) -> Result<PoissonReport, SolitonError> {
        let lam = self.spec.lambda;
        if lam == 0.0 {
            return Err(SolitonError::Steady);
        }
        let (a, _, _, _) = self.normalize();
        let n = self.n();
        let algebra_tol = self.tol().poisson_algebra;
        let eq5 = a.eq5_values();
        let mut hyp_max = 0.0f64;
        let mut hyp_scale = 0.0f64;
        let mut defect = 0.0f64;
        let mut algebra_points = 0;
        for (s, (e5, _)) in a.states.iter().zip(&eq5) {
            let sc = s.curvature.scalar;
            let r1 = s.curvature.laplacian_scalar - lam * (n * lam - sc);
            hyp_max = hyp_max.max(r1.abs());
            hyp_scale = hyp_scale.max(s.curvature.laplacian_scalar.abs() + (lam * (n * lam - sc)).abs());
            if e5.abs() <= algebra_tol {
                let r2 = s.laplacian_of_combination(1.0, -lam);
                defect = defect.max((r2 - r1).abs());
                algebra_points += 1;
            }
        }
        let hypothesis_holds = hyp_max <= tol * (1.0 + hyp_scale);
        let s_values: Vec<f64> = a.states.iter().map(|s| s.curvature.scalar).collect();
        let s_spread = spread(s_values.iter().copied());
        let diff: Vec<f64> = a.states.iter().map(|s| s.curvature.scalar - lam * pot(s).f).collect();
        let diff_mean = neumaier_mean(diff.iter().copied());
        let diff_spread = spread(diff.iter().copied());
        let s_scale = 1.0 + s_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s_constant = s_spread <= tol * s_scale;

        let (branch, conclusion_holds) = if !hypothesis_holds {
            (PoissonBranch::HypothesisNotSatisfied, None)
        } else if s_constant {
            let s_mean = neumaier_mean(s_values.iter().copied());
            (PoissonBranch::Trivial, Some((s_mean - n * lam).abs() <= tol * s_scale))
        } else {
            let d_scale = 1.0 + diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let constant = diff_spread <= tol * d_scale;
            let distinct = (diff_mean - n * lam / 2.0).abs() > tol * d_scale;
            (PoissonBranch::NonTrivial, Some(constant && distinct))
        };
        Ok(PoissonReport {
            hypothesis_residual: hyp_max,
            hypothesis_holds,
            algebra_defect: defect,
            algebra_points,
            algebra_holds: defect <= algebra_tol,
            s_spread,
            s_minus_lambda_f_mean: diff_mean,
            s_minus_lambda_f_spread: diff_spread,
            branch,
            conclusion_holds,
            assumptions: vec![COMPACTNESS_CAVEAT.to_string()],
        })
    }

    /// Identity suite plus the theorem checks, as one report.
    pub fn full_report(&self) -> IdentityReport {
        let mut report = self.identity_suite();
        let t = self.tol();
        let (abs, rel) = (t.identity_abs, t.identity_rel);
        if self.spec.lambda == 0.0 {
            for id in [IdentityId::Eq11, IdentityId::Eq12, IdentityId::Eq16, IdentityId::Thm2, IdentityId::Thm34] {
                report.identities.push(IdentityResult::skipped(id, "steady soliton (λ = 0)", abs, rel));
            }
            return report;
        }
        let thm1 = self.theorem1_pipeline(t.triviality).expect("λ ≠ 0");
        match (thm1.eq11, thm1.eq12, thm1.eq16) {
            (Some(a), Some(b), Some(c)) => report.identities.extend([a, b, c]),
            _ => {
                for id in [IdentityId::Eq11, IdentityId::Eq12, IdentityId::Eq16] {
                    report.identities.push(IdentityResult::skipped(id, thm1.note.clone(), abs, rel));
                }
            }
        }

        let verdict = self.classify_triviality(t.triviality).expect("λ ≠ 0");
        let disagreement = match (verdict.criterion_residual <= verdict.threshold, verdict.f_spread <= verdict.threshold) {
            (true, false) => verdict.f_spread,
            (false, true) if verdict.sample_count >= 2 => verdict.criterion_residual,
            _ => 0.0,
        };
        let thm2 = IdentityResult {
            id: IdentityId::Thm2,
            max_abs_residual: disagreement,
            max_rel_residual: disagreement / verdict.scale,
            worst_point: Vec::new(),
            pass: !verdict.iff_violation,
            skipped: false,
            abs_tolerance: IFF_VIOLATION_FACTOR * verdict.threshold,
            rel_tolerance: IFF_VIOLATION_FACTOR * verdict.tolerance,
            note: Some(format!(
                "verdict {}: criterion residual {:e}, f spread {:e}",
                verdict.verdict, verdict.criterion_residual, verdict.f_spread
            )),
        };
        report.identities.push(thm2);

        let poisson = self.poisson_check(t.triviality).expect("λ ≠ 0");
        let thm34 = if poisson.algebra_points == 0 {
            IdentityResult::skipped(
                IdentityId::Thm34,
                "trace identity residual exceeds the algebra tolerance at every sample",
                t.poisson_algebra,
                t.poisson_algebra,
            )
        } else {
            IdentityResult {
                id: IdentityId::Thm34,
                max_abs_residual: poisson.algebra_defect,
                max_rel_residual: poisson.algebra_defect,
                worst_point: Vec::new(),
                pass: poisson.algebra_holds,
                skipped: false,
                abs_tolerance: t.poisson_algebra,
                rel_tolerance: t.poisson_algebra,
                note: Some(format!(
                    "Poisson hypothesis residual {:e} ({}), branch {:?}",
                    poisson.hypothesis_residual,
                    if poisson.hypothesis_holds { "holds" } else { "fails" },
                    poisson.branch
                )),
            }
        };
        report.identities.push(thm34);
        report.assumptions.push(COMPACTNESS_CAVEAT.to_string());
        report
    }
}

fn pot(s: &PointGeometry) -> &crate::geometry::PotentialState {
    s.potential.as_ref().expect("analysis engines carry a potential")
}

fn residual_matrix(s: &PointGeometry, lambda: f64) -> DMatrix<f64> {
    &s.curvature.ricci + &pot(s).hess_f - &s.curvature.g * lambda
}

/// `Ric + Hess f − λg` at `p`.
pub fn soliton_residual(spec: &SolitonSpec, p: &[f64]) -> Result<DMatrix<f64>, SolitonError> {
    let engine = GeometryEngine::new(&spec.metric, Some(&spec.potential))?;
    Ok(residual_matrix(&engine.point(p)?, spec.lambda))
}

/// `S + Δf − nλ` at `p`.
pub fn trace_identity_residual(spec: &SolitonSpec, p: &[f64]) -> Result<f64, SolitonError> {
    let engine = GeometryEngine::new(&spec.metric, Some(&spec.potential))?;
    let s = engine.point(p)?;
    Ok(s.curvature.scalar + pot(&s).laplacian_f - spec.dim() as f64 * spec.lambda)
}

pub fn hamilton_constant(spec: &SolitonSpec) -> Result<HamiltonReport, SolitonError> {
    Analysis::new(spec)?.hamilton_constant()
}

pub fn identity_suite(spec: &SolitonSpec) -> Result<IdentityReport, SolitonError> {
    Ok(Analysis::new(spec)?.identity_suite())
}

pub fn theorem1_pipeline(spec: &SolitonSpec, tol: f64) -> Result<Theorem1Report, SolitonError> {
    Analysis::new(spec)?.theorem1_pipeline(tol)
}

pub fn classify_triviality(spec: &SolitonSpec, tol: f64) -> Result<TrivialityVerdict, SolitonError> {
    Analysis::new(spec)?.classify_triviality(tol)
}

pub fn poisson_check(spec: &SolitonSpec, tol: f64) -> Result<PoissonReport, SolitonError> {
    Analysis::new(spec)?.poisson_check(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse_expr;

    fn flat_spec(f: &str, lambda: f64, samples: SamplePlan) -> SolitonSpec {
        let chart = ChartSpec::with_default_names(vec![(-2.0, 2.0); 2], None).unwrap();
        SolitonSpec::new(chart, MetricField::flat(2), parse_expr(f, 2).unwrap(), lambda, samples).unwrap()
    }

    #[test]
    fn negative_control_has_large_soliton_residual() {
        let spec = flat_spec("x1^3", 1.0, SamplePlan::Grid { counts: vec![3, 3], margin: 0.0 });
        let r = soliton_residual(&spec, &[1.0, 0.0]).unwrap();
        assert!((r[(0, 0)] - 5.0).abs() < 1e-14);
        assert!((r[(1, 1)] + 1.0).abs() < 1e-14);
        // trace identity residual is the metric trace of the eq3 residual
        let t = trace_identity_residual(&spec, &[1.0, 0.0]).unwrap();
        assert!((t - r.trace()).abs() < 1e-12);
        let report = identity_suite(&spec).unwrap();
        let eq3 = report.get(IdentityId::Eq3).unwrap();
        assert!(!eq3.pass && eq3.max_abs_residual > 0.1);
    }

    #[test]
    fn gaussian_is_normalized_and_passes() {
        let spec = flat_spec("0.5*(x1^2 + x2^2)", 1.0, SamplePlan::Grid { counts: vec![5, 5], margin: 0.0 });
        let h = hamilton_constant(&spec).unwrap();
        assert!(h.c.abs() < 1e-12);
        assert_eq!(h.shift, 0.0);
        assert_eq!(h.normalized.potential, spec.potential);
        let report = identity_suite(&spec).unwrap();
        assert!(report.all_pass(), "{report:#?}");
    }

    #[test]
    fn steady_input_is_rejected_by_theorem_operations() {
        let spec = flat_spec("x1", 0.0, SamplePlan::Grid { counts: vec![3, 3], margin: 0.0 });
        assert_eq!(hamilton_constant(&spec).unwrap_err(), SolitonError::Steady);
        assert_eq!(classify_triviality(&spec, 1e-6).unwrap_err(), SolitonError::Steady);
        // linear potential on flat space is a steady soliton
        let report = identity_suite(&spec).unwrap();
        assert!(report.all_pass(), "{report:#?}");
    }

    #[test]
    fn non_constant_hamilton_is_an_error() {
        let spec = flat_spec("x1^3", 1.0, SamplePlan::Grid { counts: vec![3, 3], margin: 0.0 });
        assert!(matches!(hamilton_constant(&spec), Err(SolitonError::NotConstant { .. })));
    }

    #[test]
    fn single_point_classification_is_inconclusive_without_violation() {
        let spec = flat_spec("0.5*(x1^2 + x2^2)", 1.0, SamplePlan::Points(vec![vec![0.5, 0.5]]));
        let v = classify_triviality(&spec, 1e-6).unwrap();
        assert_eq!(v.verdict, Verdict::Inconclusive);
        assert!(!v.iff_violation);
    }

    #[test]
    fn invalid_points_are_rejected() {
        let chart = ChartSpec::with_default_names(vec![(-1.0, 1.0); 2], None).unwrap();
        let err = SolitonSpec::new(chart, MetricField::flat(2), Expr::zero(), 1.0, SamplePlan::Points(vec![vec![3.0, 0.0]]));
        assert!(matches!(err, Err(SolitonError::InvalidSpec(_))));
    }

    #[test]
    fn compensated_mean() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_mean(v), 0.5);
    }
}
