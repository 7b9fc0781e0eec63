//! First nonzero Laplace–Beltrami eigenvalue on two closed surfaces with
//! known spectra: the flat square torus and the round 2-sphere.
//!
//! Both are finite-volume discretizations `K u = λ M u` with a symmetric
//! positive semidefinite stiffness `K` whose rows sum to zero and a lumped
//! diagonal mass `M` (cell areas).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::soliton::{Analysis, SolitonError, Verdict, COMPACTNESS_CAVEAT};

pub const MIN_RESOLUTION: usize = 8;
pub const DEFAULT_RESOLUTION: usize = 64;
/// Resolutions below this are valid but flagged in reports.
pub const LOW_RESOLUTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION}")]
    Resolution(usize),
    #[error("invalid manifold parameter: {0}")]
    Parameter(String),
    #[error("unknown manifold tag `{0}` (expected `torus` or `sphere`)")]
    UnknownTag(String),
    #[error("eigen solver did not converge in {iterations} iterations (last change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("dichotomy report needs a sphere eigenvalue estimate: {0}")]
    NotSolitonFixture(String),
    #[error(transparent)]
    Soliton(#[from] SolitonError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "manifold", rename_all = "lowercase")]
pub enum ManifoldTag {
    /// Flat square torus of side `side`.
    Torus { side: f64 },
    /// Round 2-sphere of radius `radius`.
    Sphere { radius: f64 },
}

impl ManifoldTag {
    pub fn parse(tag: &str, size: f64) -> Result<Self, SpectralError> {
        match tag {
            "torus" => Ok(ManifoldTag::Torus { side: size }),
            "sphere" => Ok(ManifoldTag::Sphere { radius: size }),
            other => Err(SpectralError::UnknownTag(other.to_string())),
        }
    }

    /// Closed-form first nonzero eigenvalue.
    pub fn exact_first_eigenvalue(&self) -> f64 {
        match *self {
            ManifoldTag::Torus { side } => (2.0 * std::f64::consts::PI / side).powi(2),
            ManifoldTag::Sphere { radius } => 2.0 / (radius * radius),
        }
    }

    pub fn total_volume(&self) -> f64 {
        match *self {
            ManifoldTag::Torus { side } => side * side,
            ManifoldTag::Sphere { radius } => 4.0 * std::f64::consts::PI * radius * radius,
        }
    }
}

/// Sparse symmetric stiffness in CSR form plus lumped vertex measures.
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    pub tag: ManifoldTag,
    pub resolution: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    measures: Vec<f64>,
    /// Angular distance of the first latitude row from each pole (sphere only).
    pub pole_offset: Option<f64>,
    pub low_resolution: bool,
}

impl DiscreteLaplacian {
    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn total_measure(&self) -> f64 {
        self.measures.iter().sum()
    }

    /// `(column, value)` entries of stiffness row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn stiffness(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *o = s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.stiffness(i, i)).collect()
    }
}

/// Assembles `K` from undirected edge weights `w_ij`: `K_ij = −w_ij`,
/// `K_ii = Σ_j w_ij`.
fn assemble(n: usize, edges: &[(usize, usize, f64)]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        rows[a].push((b, -w));
        rows[b].push((a, -w));
    }
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for (i, mut row) in rows.into_iter().enumerate() {
        let diag: f64 = -row.iter().map(|&(_, v)| v).sum::<f64>();
        row.push((i, diag));
        row.sort_by_key(|&(c, _)| c);
        // merge duplicate columns (tiny grids wrap onto the same neighbour)
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (c, v) in row {
            match merged.last_mut() {
                Some((lc, lv)) if *lc == c => *lv += v,
                _ => merged.push((c, v)),
            }
        }
        for (c, v) in merged {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    (row_ptr, cols, vals)
}

pub fn build_laplacian(tag: ManifoldTag, resolution: usize) -> Result<DiscreteLaplacian, SpectralError> {
    if resolution < MIN_RESOLUTION {
        return Err(SpectralError::Resolution(resolution));
    }
    let m = resolution;
    let (edges, measures, pole_offset) = match tag {
        ManifoldTag::Torus { side } => {
            if !(side > 0.0 && side.is_finite()) {
                return Err(SpectralError::Parameter(format!("torus side must be positive, got {side}")));
            }
            let h = side / m as f64;
            let idx = |i: usize, j: usize| (i % m) * m + (j % m);
            let mut edges = Vec::with_capacity(2 * m * m);
            for i in 0..m {
                for j in 0..m {
                    // face length h over centre distance h
                    edges.push((idx(i, j), idx(i + 1, j), 1.0));
                    edges.push((idx(i, j), idx(i, j + 1), 1.0));
                }
            }
            (edges, vec![h * h; m * m], None)
        }
        ManifoldTag::Sphere { radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(SpectralError::Parameter(format!("sphere radius must be positive, got {radius}")));
            }
            let (nt, np) = (m, 2 * m);
            let dt = std::f64::consts::PI / nt as f64;
            let dp = 2.0 * std::f64::consts::PI / np as f64;
            let idx = |i: usize, j: usize| i * np + (j % np);
            let mut edges = Vec::with_capacity(2 * nt * np);
            let mut measures = Vec::with_capacity(nt * np);
            for i in 0..nt {
                let (lo, hi) = (i as f64 * dt, (i + 1) as f64 * dt);
                let centre = (i as f64 + 0.5) * dt;
                let area = radius * radius * (lo.cos() - hi.cos()) * dp;
                for j in 0..np {
                    measures.push(area);
                    edges.push((idx(i, j), idx(i, j + 1), dt / (centre.sin() * dp)));
                    if i + 1 < nt {
                        edges.push((idx(i, j), idx(i + 1, j), hi.sin() * dp / dt));
                    }
                }
            }
            (edges, measures, Some(dt / 2.0))
        }
    };
    let (row_ptr, cols, vals) = assemble(measures.len(), &edges);
    Ok(DiscreteLaplacian {
        tag,
        resolution,
        row_ptr,
        cols,
        vals,
        measures,
        pole_offset,
        low_resolution: resolution < LOW_RESOLUTION,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub eigenvalue: f64,
    /// `‖K u − λ M u‖_{M⁻¹}` for the M-normalized Ritz vector
    pub residual: f64,
    /// CG iterations summed over the block
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenEstimate {
    pub tag: ManifoldTag,
    pub resolution: usize,
    pub vertices: usize,
    pub eigenvalue: f64,
    pub exact: f64,
    pub relative_error: f64,
    pub residual: f64,
    /// `|⟨u, 1⟩_M| / (‖u‖_M ‖1‖_M)` of the final iterate.
    pub constant_overlap: f64,
    pub seed: u64,
    pub low_resolution: bool,
    pub pole_offset: Option<f64>,
    pub total_measure: f64,
    pub history: Vec<IterationRecord>,
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 500, seed: 0 }
    }
}

fn m_dot(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    m.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

fn deflate(m: &[f64], u: &mut [f64]) {
    let mean = m.iter().zip(u.iter()).map(|(w, x)| w * x).sum::<f64>() / m.iter().sum::<f64>();
    for x in u.iter_mut() {
        *x -= mean;
    }
}

/// Jacobi-preconditioned CG for `(K + sM) x = b`; `x` is the warm start.
fn cg(op: &DiscreteLaplacian, shift: f64, diag: &[f64], b: &[f64], x: &mut [f64], rtol: f64, cap: usize) -> usize {
    let n = b.len();
    let m = op.measures();
    let apply = |v: &[f64], out: &mut [f64]| {
        op.apply(v, out);
        for i in 0..n {
            out[i] += shift * m[i] * v[i];
        }
    };
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut q = vec![0.0; n];
    for it in 0..cap {
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= rtol * b_norm {
            return it;
        }
        apply(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        if pq <= 0.0 {
            return it;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    cap
}

/// Block size of the subspace iteration. The discrete first eigenvalue of
/// the sphere is a nearly degenerate triplet; a block wider than the
/// cluster keeps the convergence rate at λ₁/λ_{BLOCK+1}.
const BLOCK: usize = 4;

/// M-orthonormalizes the columns by two passes of modified Gram–Schmidt.
fn m_orthonormalize(m: &[f64], cols: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for k in 0..cols.len() {
            let (done, rest) = cols.split_at_mut(k);
            let v = &mut rest[0];
            for q in done.iter() {
                let c = m_dot(m, q, v);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            let norm = m_dot(m, v, v).sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
        }
    }
}

/// Smallest nonzero eigenvalue of `K u = λ M u` by block inverse iteration
/// with Rayleigh–Ritz, constants deflated in the `M` inner product.
///
/// Solves use `K + sM` with `s` of the order of λ₁ (`8π / area`, exact for
/// the unit-area-scaled sphere). The shifted system is positive definite, so
/// CG cannot drift along the kernel, and constants remain an exact
/// eigenvector that the deflation removes.
pub fn first_eigenvalue(op: &DiscreteLaplacian, options: SolverOptions) -> Result<EigenEstimate, SpectralError> {
    let n = op.len();
    let m = op.measures();
    let shift = 8.0 * std::f64::consts::PI / op.total_measure();
    let diag: Vec<f64> = op.diagonal().iter().zip(m).map(|(d, w)| d + shift * w).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut x: Vec<Vec<f64>> =
        (0..BLOCK).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    for c in &mut x {
        deflate(m, c);
    }
    m_orthonormalize(m, &mut x);
    let mut theta = vec![f64::INFINITY; BLOCK];

    let mut history = Vec::new();
    let mut ku = vec![0.0; n];
    let cg_cap = 20 * n;
    for iteration in 1..=options.max_iterations {
        let solved: Vec<(Vec<f64>, usize)> = x
            .par_iter()
            .zip(theta.par_iter())
            .map(|(c, &t)| {
                let b: Vec<f64> = m.iter().zip(c).map(|(w, v)| w * v).collect();
                let mut sol: Vec<f64> =
                    if t.is_finite() { c.iter().map(|v| v / (t + shift)).collect() } else { vec![0.0; n] };
                let its = cg(op, shift, &diag, &b, &mut sol, 1e-12, cg_cap);
                deflate(m, &mut sol);
                (sol, its)
            })
            .collect();
        let cg_iterations = solved.iter().map(|(_, k)| k).sum();
        let mut y: Vec<Vec<f64>> = solved.into_iter().map(|(v, _)| v).collect();
        m_orthonormalize(m, &mut y);

        let ky: Vec<Vec<f64>> = y
            .iter()
            .map(|c| {
                let mut out = vec![0.0; n];
                op.apply(c, &mut out);
                out
            })
            .collect();
        let a = DMatrix::from_fn(BLOCK, BLOCK, |i, j| {
            let v: f64 = y[i].iter().zip(&ky[j]).map(|(p, q)| p * q).sum();
            let w: f64 = y[j].iter().zip(&ky[i]).map(|(p, q)| p * q).sum();
            0.5 * (v + w)
        });
        let eig = SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..BLOCK).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let new_theta: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        x = order
            .iter()
            .map(|&k| {
                let mut v = vec![0.0; n];
                for (col, coef) in y.iter().zip(eig.eigenvectors.column(k).iter()) {
                    v.iter_mut().zip(col).for_each(|(a, b)| *a += coef * b);
                }
                v
            })
            .collect();

        let u = &x[0];
        let lambda = new_theta[0];
        op.apply(u, &mut ku);
        let residual = ku
            .iter()
            .zip(u)
            .zip(m)
            .map(|((k, v), w)| {
                let r = k - lambda * w * v;
                r * r / w
            })
            .sum::<f64>()
            .sqrt();
        let change = (lambda - theta[0]).abs();
        theta = new_theta;
        history.push(IterationRecord { iteration, eigenvalue: lambda, residual, cg_iterations });
        if change <= options.tolerance * lambda.abs() && residual <= options.tolerance.sqrt() * lambda.abs() {
            let ones_norm = m.iter().sum::<f64>().sqrt();
            let overlap = m.iter().zip(u).map(|(w, v)| w * v).sum::<f64>().abs() / ones_norm;
            let exact = op.tag.exact_first_eigenvalue();
            return Ok(EigenEstimate {
                tag: op.tag,
                resolution: op.resolution,
                vertices: n,
                eigenvalue: lambda,
                exact,
                relative_error: (lambda - exact).abs() / exact,
                residual,
                constant_overlap: overlap,
                seed: options.seed,
                low_resolution: op.low_resolution,
                pole_offset: op.pole_offset,
                total_measure: op.total_measure(),
                history,
                eigenvector: x.swap_remove(0),
            });
        }
        if iteration == options.max_iterations {
            return Err(SpectralError::NonConvergence { iterations: iteration, last_change: change });
        }
    }
    Err(SpectralError::NonConvergence { iterations: options.max_iterations, last_change: f64::NAN })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyBranch {
    /// The input is not a soliton or fails the Poisson hypothesis.
    HypothesisNotSatisfied,
    /// Satisfied through triviality.
    Trivial,
    /// Non-trivial with the Poisson hypothesis: λ ≥ λ₁ is required.
    EigenvalueBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyReport {
    pub branch: DichotomyBranch,
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda_at_least_lambda1: bool,
    /// `None` when the theorem says nothing about this input.
    pub dichotomy_satisfied: Option<bool>,
    pub soliton_residual: f64,
    pub poisson_residual: f64,
    pub verdict: Verdict,
    pub statement: String,
    pub assumptions: Vec<String>,
}

/// Places a 2-sphere soliton against the eigenvalue dichotomy "trivial or
/// λ ≥ λ₁" using a spectral estimate on the same sphere.
pub fn dichotomy_report(analysis: &Analysis, estimate: &EigenEstimate) -> Result<DichotomyReport, SpectralError> {
    let radius = match estimate.tag {
        ManifoldTag::Sphere { radius } => radius,
        ManifoldTag::Torus { .. } => {
            return Err(SpectralError::NotSolitonFixture(
                "the flat torus carries no non-steady soliton in the catalog; spectral-only mode".into(),
            ))
        }
    };
    let spec = analysis.spec();
    if spec.dim() != 2 {
        return Err(SpectralError::NotSolitonFixture(format!("soliton has dimension {}, sphere grid is 2-dimensional", spec.dim())));
    }
    let lambda = spec.lambda;
    if lambda <= 0.0 || (lambda * radius * radius - 1.0).abs() > 1e-9 {
        return Err(SpectralError::NotSolitonFixture(format!(
            "λ = {lambda} is not the Einstein constant of a radius-{radius} sphere"
        )));
    }
    let tol = spec.tolerances;
    let suite = analysis.identity_suite();
    let eq3 = suite.get(crate::soliton::IdentityId::Eq3).expect("suite has eq3");
    let poisson = analysis.poisson_check(tol.triviality)?;
    let verdict = analysis.classify_triviality(tol.triviality)?;
    let lambda1 = estimate.eigenvalue;
    let above = lambda >= lambda1;
    let (branch, satisfied, statement) = if !eq3.pass || !poisson.hypothesis_holds {
        let why = if !eq3.pass { "soliton equation fails" } else { "ΔS = λ(nλ − S) fails" };
        (DichotomyBranch::HypothesisNotSatisfied, None, format!("hypothesis not satisfied ({why}), theorem silent"))
    } else if verdict.verdict == Verdict::Trivial {
        let rel = if above { "≥" } else { "<" };
        (
            DichotomyBranch::Trivial,
            Some(true),
            format!("trivial branch holds; λ = {lambda} {rel} λ₁ ≈ {lambda1}, consistent since the trivial branch is satisfied"),
        )
    } else {
        (
            DichotomyBranch::EigenvalueBound,
            Some(above),
            format!("non-trivial: requires λ ≥ λ₁; λ = {lambda}, λ₁ ≈ {lambda1}"),
        )
    };
    Ok(DichotomyReport {
        branch,
        lambda,
        lambda1,
        lambda_at_least_lambda1: above,
        dichotomy_satisfied: satisfied,
        soliton_residual: eq3.max_abs_residual,
        poisson_residual: poisson.hypothesis_residual,
        verdict: verdict.verdict,
        statement,
        assumptions: vec![COMPACTNESS_CAVEAT.to_string()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn torus_rows_sum_to_zero_and_volume_is_exact() {
        let op = build_laplacian(ManifoldTag::Torus { side: 2.0 * PI }, 64).unwrap();
        for i in 0..op.len() {
            assert_eq!(op.row_sum(i), 0.0);
        }
        assert!((op.total_measure() - 4.0 * PI * PI).abs() < 1e-9);
        assert!(!op.low_resolution);
    }

    #[test]
    fn sphere_operator_invariants() {
        let op = build_laplacian(ManifoldTag::Sphere { radius: 1.0 }, 64).unwrap();
        assert_eq!(op.len(), 64 * 128);
        assert!((op.total_measure() - 4.0 * PI).abs() < 0.01 * 4.0 * PI);
        for i in (0..op.len()).step_by(97) {
            assert!(op.row_sum(i).abs() < 1e-12);
            for (j, v) in op.row(i) {
                assert!((op.stiffness(j, i) - v).abs() < 1e-14);
            }
        }
        assert_eq!(op.pole_offset, Some(PI / 128.0));
    }

    #[test]
    fn low_resolution_flag_and_rejection() {
        let op = build_laplacian(ManifoldTag::Torus { side: 2.0 * PI }, 8).unwrap();
        assert!(op.low_resolution);
        assert_eq!(build_laplacian(ManifoldTag::Sphere { radius: 1.0 }, 4).unwrap_err(), SpectralError::Resolution(4));
        assert!(ManifoldTag::parse("klein", 1.0).is_err());
    }

    #[test]
    fn sphere_radius_scaling() {
        let op = build_laplacian(ManifoldTag::Sphere { radius: 2.0 }, 32).unwrap();
        let est = first_eigenvalue(&op, SolverOptions::default()).unwrap();
        assert!((est.eigenvalue - 0.5).abs() < 0.02 * 0.5, "{}", est.eigenvalue);
        assert!(est.constant_overlap < 1e-10);
    }

    #[test]
    fn seeded_solver_is_deterministic() {
        let op = build_laplacian(ManifoldTag::Torus { side: 3.0 }, 16).unwrap();
        let a = first_eigenvalue(&op, SolverOptions { seed: 7, ..Default::default() }).unwrap();
        let b = first_eigenvalue(&op, SolverOptions { seed: 7, ..Default::default() }).unwrap();
        assert_eq!(a.eigenvalue.to_bits(), b.eigenvalue.to_bits());
        assert_eq!(a.history, b.history);
    }
}
