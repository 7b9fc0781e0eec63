//! Curvature of a metric given by component expressions on one chart.
//!
//! [`GeometryEngine`] precomputes symbolic derivative tables of every metric
//! component (order 4) and of the potential (order 3), compiled to tapes.
//! At a point it evaluates the tables and propagates the derivatives through
//! the Levi-Civita formulas with truncated Taylor arithmetic ([`jet`]), so
//! Γ, Ric, S, ∇S and ΔS are all exact up to floating-point rounding.
//!
//! Conventions: `R(∂i, ∂j)∂k = Rˡ_kij ∂l` with `R(X,Y) = ∇X∇Y − ∇Y∇X − ∇[X,Y]`,
//! `Ric_kj = Rⁱ_kij`. The round sphere has positive Ricci curvature and the
//! contracted Bianchi identity reads `∇S = 2 div Ric`.

#![allow(clippy::needless_range_loop)]

pub mod jet;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::exprlang::{evaluate, DerivativeTable, EvalError, Expr, Tape};
use jet::{Jet, JetSpace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("symmetric eigen-decomposition did not converge")]
    EigenFailure,
}

/// One coordinate chart: dimension, coordinate names, sampling box and an
/// optional validity predicate (valid where it evaluates > 0).
#[derive(Debug, Clone)]
pub struct ChartSpec {
    dim: usize,
    names: Vec<String>,
    domain: Vec<(f64, f64)>,
    validity: Option<Arc<Expr>>,
}

impl ChartSpec {
    pub fn new(
        names: Vec<String>,
        domain: Vec<(f64, f64)>,
        validity: Option<Arc<Expr>>,
    ) -> Result<Self, GeometryError> {
        let dim = names.len();
        if dim < 2 {
            return Err(GeometryError::InvalidChart(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        if domain.len() != dim {
            return Err(GeometryError::InvalidChart(format!(
                "{} domain intervals for {dim} coordinates",
                domain.len()
            )));
        }
        for (k, &(lo, hi)) in domain.iter().enumerate() {
            if lo >= hi || !lo.is_finite() || !hi.is_finite() {
                return Err(GeometryError::InvalidChart(format!(
                    "interval for `{}` must satisfy lo < hi, got [{lo}, {hi}]",
                    names[k]
                )));
            }
        }
        if let Some(v) = &validity {
            if v.min_dim() > dim {
                return Err(GeometryError::InvalidChart("validity predicate uses an unknown coordinate".into()));
            }
        }
        Ok(Self { dim, names, domain, validity })
    }

    /// Chart with coordinates named `x1..xn`.
    pub fn with_default_names(domain: Vec<(f64, f64)>, validity: Option<Arc<Expr>>) -> Result<Self, GeometryError> {
        let names = (1..=domain.len()).map(|i| format!("x{i}")).collect();
        Self::new(names, domain, validity)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn validity(&self) -> Option<&Arc<Expr>> {
        self.validity.as_ref()
    }

    /// Whether `p` lies in the sampling box and satisfies the predicate.
    pub fn is_valid(&self, p: &[f64]) -> bool {
        if p.len() != self.dim {
            return false;
        }
        let inside = p.iter().zip(&self.domain).all(|(x, (lo, hi))| *lo <= *x && *x <= *hi);
        inside
            && match &self.validity {
                Some(v) => evaluate(v, p).map(|x| x > 0.0).unwrap_or(false),
                None => true,
            }
    }
}

/// Metric components `g_ij`, stored lower-triangular so symmetry holds by
/// construction.
#[derive(Debug, Clone)]
pub struct MetricField {
    dim: usize,
    lower: Vec<Arc<Expr>>,
}

fn tri(i: usize, j: usize) -> usize {
    let (a, b) = if i >= j { (i, j) } else { (j, i) };
    a * (a + 1) / 2 + b
}

impl MetricField {
    /// `components(i, j)` is queried for `j <= i` only.
    pub fn from_fn(dim: usize, mut components: impl FnMut(usize, usize) -> Arc<Expr>) -> Self {
        let mut lower = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                lower.push(components(i, j));
            }
        }
        Self { dim, lower }
    }

    /// `φ·δ_ij` on the first `conformal_dim` coordinates, `δ_ij` on the rest.
    pub fn conformally_flat_block(dim: usize, conformal_dim: usize, factor: Arc<Expr>) -> Self {
        Self::from_fn(dim, |i, j| match (i == j, i < conformal_dim) {
            (true, true) => factor.clone(),
            (true, false) => Expr::one(),
            _ => Expr::zero(),
        })
    }

    pub fn flat(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { Expr::one() } else { Expr::zero() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &Arc<Expr> {
        &self.lower[tri(i, j)]
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                let v = evaluate(self.get(i, j), p)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }
}

/// Christoffel symbols `Γᵏ_ij` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    values: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[(k * self.n + i) * self.n + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Curvature quantities of the metric at one point.
#[derive(Debug, Clone)]
pub struct CurvatureState {
    pub point: Vec<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub christoffel: Christoffel,
    /// `Rˡ_kij`, flattened `((l*n + k)*n + i)*n + j`.
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    /// Components `∂_i S`.
    pub grad_scalar: Vec<f64>,
    pub laplacian_scalar: f64,
    /// `|Ric|² = tr((g⁻¹Ric)²)`.
    pub ricci_norm_sq: f64,
    /// Covector `(div Ric)_i = gʲᵏ ∇_k Ric_ij`.
    pub div_ricci: Vec<f64>,
    hess_scalar: DMatrix<f64>,
    d2_scalar: DMatrix<f64>,
}

impl CurvatureState {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn riemann(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.dim();
        self.riemann[((l * n + k) * n + i) * n + j]
    }

    /// Covariant Hessian of S.
    pub fn hess_scalar(&self) -> &DMatrix<f64> {
        &self.hess_scalar
    }

    /// Eigenvalues of the (1,1) Ricci operator `g⁻¹Ric`.
    pub fn ricci_eigenvalues(&self) -> Result<Vec<f64>, GeometryError> {
        operator_eigenvalues(&self.g, &self.ricci)
    }
}

/// Potential-dependent quantities at one point.
#[derive(Debug, Clone)]
pub struct PotentialState {
    pub point: Vec<f64>,
    pub f: f64,
    /// Components `∂_i f`.
    pub grad_f: Vec<f64>,
    pub grad_f_norm_sq: f64,
    pub hess_f: DMatrix<f64>,
    pub laplacian_f: f64,
    /// `|Hess f|² = tr((g⁻¹ Hess f)²)`.
    pub hess_f_norm_sq: f64,
    /// `Δ(|∇f|²)`.
    pub laplacian_grad_f_norm_sq: f64,
    /// `Ric(∇f, ∇f)`.
    pub ricci_grad_f: f64,
    /// `g(∇S, ∇f)`.
    pub grad_scalar_dot_grad_f: f64,
    d2_f: DMatrix<f64>,
}

impl PotentialState {
    /// Eigenvalues of the (1,1) Hessian operator `g⁻¹ Hess f`.
    pub fn hessian_eigenvalues(&self, g: &DMatrix<f64>) -> Result<Vec<f64>, GeometryError> {
        operator_eigenvalues(g, &self.hess_f)
    }
}

/// Eigenvalues of `g⁻¹T` for symmetric `T`, via the congruent symmetric
/// matrix `L⁻¹ T L⁻ᵀ` where `g = LLᵀ`.
pub fn operator_eigenvalues(g: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<Vec<f64>, GeometryError> {
    let chol = g.clone().cholesky().ok_or(GeometryError::NotPositiveDefinite { point: Vec::new() })?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(GeometryError::EigenFailure)?;
    let m = &l_inv * t * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or(GeometryError::EigenFailure)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `tr((g⁻¹T)²)`.
pub fn operator_norm_sq(g_inv: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let a = g_inv * t;
    (&a * &a).trace()
}

/// Both states at one point, plus what is needed for Laplacians of linear
/// combinations of S and f.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub curvature: CurvatureState,
    pub potential: Option<PotentialState>,
}

impl PointGeometry {
    /// `Δ(a·S + b·f)` computed from the combined field's raw partials.
    pub fn laplacian_of_combination(&self, a: f64, b: f64) -> f64 {
        let c = &self.curvature;
        let n = c.dim();
        let mut grad: Vec<f64> = c.grad_scalar.iter().map(|v| a * v).collect();
        let mut second = &c.d2_scalar * a;
        if let Some(p) = &self.potential {
            for (g, df) in grad.iter_mut().zip(&p.grad_f) {
                *g += b * df;
            }
            second += &p.d2_f * b;
        }
        let hess = covariant_hessian(n, &c.christoffel, &grad, |i, j| second[(i, j)]);
        trace_with(&c.g_inv, &hess)
    }
}

// Metric table entries come in graded monomial order per component.
struct ScalarTables {
    tape: Tape,
    order: usize,
}

impl ScalarTables {
    fn new(exprs: &[&Arc<Expr>], dim: usize, order: usize, space: &JetSpace) -> Self {
        let mut roots = Vec::new();
        for e in exprs {
            let table = DerivativeTable::new(e, dim, order);
            for m in 0..space.len(order) {
                let idx: Vec<usize> = space.exponents()[m]
                    .iter()
                    .enumerate()
                    .flat_map(|(i, &d)| std::iter::repeat_n(i, d as usize))
                    .collect();
                roots.push(table.get(&idx).expect("table covers all multi-indices").clone());
            }
        }
        Self { tape: Tape::compile(dim, &roots), order }
    }
}

/// Prepared metric (and optionally potential) for repeated evaluation.
pub struct GeometryEngine {
    n: usize,
    space: JetSpace,
    metric: ScalarTables,
    potential: Option<ScalarTables>,
}

const METRIC_ORDER: usize = 4;
const POTENTIAL_ORDER: usize = 3;

impl GeometryEngine {
    pub fn new(metric: &MetricField, potential: Option<&Arc<Expr>>) -> Result<Self, GeometryError> {
        let n = metric.dim();
        if n < 2 {
            return Err(GeometryError::InvalidChart(format!("dimension must be at least 2, got {n}")));
        }
        let space = JetSpace::new(n, METRIC_ORDER);
        let comps: Vec<&Arc<Expr>> = metric.lower.iter().collect();
        if comps.iter().any(|c| c.min_dim() > n) {
            return Err(GeometryError::InvalidChart("metric component uses an unknown coordinate".into()));
        }
        let metric_tables = ScalarTables::new(&comps, n, METRIC_ORDER, &space);
        let potential = match potential {
            Some(f) => {
                if f.min_dim() > n {
                    return Err(GeometryError::InvalidChart("potential uses an unknown coordinate".into()));
                }
                Some(ScalarTables::new(&[f], n, POTENTIAL_ORDER, &space))
            }
            None => None,
        };
        Ok(Self { n, space, metric: metric_tables, potential })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn metric_jets(&self, p: &[f64]) -> Result<Vec<Vec<Jet>>, GeometryError> {
        let vals = self.metric.tape.eval(p)?;
        let per = self.space.len(self.metric.order);
        let n = self.n;
        let mut g = vec![vec![self.space.zero(0); n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                let jet = self.space.from_partials(self.metric.order, &vals[k * per..(k + 1) * per]);
                g[i][j] = jet.clone();
                g[j][i] = jet;
                k += 1;
            }
        }
        Ok(g)
    }

    pub fn christoffel(&self, p: &[f64]) -> Result<Christoffel, GeometryError> {
        Ok(self.point(p)?.curvature.christoffel)
    }

    pub fn curvature_state(&self, p: &[f64]) -> Result<CurvatureState, GeometryError> {
        Ok(self.point(p)?.curvature)
    }

    /// Full evaluation at `p`: curvature, and potential quantities when the
    /// engine was built with a potential.
    pub fn point(&self, p: &[f64]) -> Result<PointGeometry, GeometryError> {
        let n = self.n;
        let sp = &self.space;
        if p.len() != n {
            return Err(EvalError::Dimension { needed: n, got: p.len() }.into());
        }
        let not_spd = || GeometryError::NotPositiveDefinite { point: p.to_vec() };

        let g = self.metric_jets(p)?;
        let g0 = DMatrix::from_fn(n, n, |i, j| g[i][j].value());
        if g0.iter().any(|v| !v.is_finite()) {
            return Err(not_spd());
        }
        let a0 = g0.clone().cholesky().ok_or_else(not_spd)?.inverse();

        // g⁻¹ to order 3 by the terminating Neumann series of (g0 + δ)⁻¹
        let k_inv = METRIC_ORDER - 1;
        let x: Vec<Vec<Jet>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut acc = sp.zero(k_inv);
                        for l in 0..n {
                            let mut d = sp.truncate(&g[l][j], k_inv);
                            d.add_assign(&sp.constant(k_inv, g0[(l, j)]), -1.0);
                            acc.add_assign(&d, -a0[(i, l)]);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let identity = |i: usize, j: usize| sp.constant(k_inv, if i == j { 1.0 } else { 0.0 });
        let mut series: Vec<Vec<Jet>> = (0..n).map(|i| (0..n).map(|j| identity(i, j)).collect()).collect();
        for _ in 0..k_inv {
            let mut next: Vec<Vec<Jet>> = (0..n).map(|i| (0..n).map(|j| identity(i, j)).collect()).collect();
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        sp.mul_acc(&mut next[i][j], &x[i][l], &series[l][j], 1.0);
                    }
                }
            }
            series = next;
        }
        let g_inv: Vec<Vec<Jet>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut acc = sp.zero(k_inv);
                        for l in 0..n {
                            acc.add_assign(&series[i][l], a0[(l, j)]);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();

        // dg[a][b][c] = ∂_a g_bc, order 3
        let dg: Vec<Vec<Vec<Jet>>> = (0..n)
            .map(|a| (0..n).map(|b| (0..n).map(|c| sp.deriv(&g[b][c], a)).collect()).collect())
            .collect();

        // Γᵏ_ij = ½ gᵏˡ (∂_i g_jl + ∂_j g_il − ∂_l g_ij), order 3
        let k_gamma = METRIC_ORDER - 1;
        let mut gamma: Vec<Vec<Vec<Jet>>> = vec![vec![vec![sp.zero(k_gamma); n]; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let lowered: Vec<Jet> = (0..n)
                    .map(|l| {
                        let mut t = dg[i][j][l].clone();
                        t.add_assign(&dg[j][i][l], 1.0);
                        t.add_assign(&dg[l][i][j], -1.0);
                        t
                    })
                    .collect();
                for k in 0..n {
                    let mut acc = sp.zero(k_gamma);
                    for l in 0..n {
                        sp.mul_acc(&mut acc, &g_inv[k][l], &lowered[l], 0.5);
                    }
                    gamma[k][j][i] = acc.clone();
                    gamma[k][i][j] = acc;
                }
            }
        }

        // ∂_a Γᵏ_ij, order 2
        let dgamma: Vec<Vec<Vec<Vec<Jet>>>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|k| (0..n).map(|i| (0..n).map(|j| sp.deriv(&gamma[k][i][j], a)).collect()).collect())
                    .collect()
            })
            .collect();

        // Ric_jk = ∂_i Γⁱ_kj − ∂_k Γⁱ_ij + Γⁱ_im Γᵐ_kj − Γⁱ_km Γᵐ_ij, order 2
        let k_ric = METRIC_ORDER - 2;
        let gamma2: Vec<Vec<Vec<Jet>>> = gamma
            .iter()
            .map(|gk| gk.iter().map(|gki| gki.iter().map(|x| sp.truncate(x, k_ric)).collect()).collect())
            .collect();
        let mut ric: Vec<Vec<Jet>> = vec![vec![sp.zero(k_ric); n]; n];
        for j in 0..n {
            for k in 0..=j {
                let mut acc = sp.zero(k_ric);
                for i in 0..n {
                    acc.add_assign(&dgamma[i][i][k][j], 1.0);
                    acc.add_assign(&dgamma[k][i][i][j], -1.0);
                    for m in 0..n {
                        sp.mul_acc(&mut acc, &gamma2[i][i][m], &gamma2[m][k][j], 1.0);
                        sp.mul_acc(&mut acc, &gamma2[i][k][m], &gamma2[m][i][j], -1.0);
                    }
                }
                ric[k][j] = acc.clone();
                ric[j][k] = acc;
            }
        }

        // S = gʲᵏ Ric_jk, order 2
        let mut s_jet = sp.zero(k_ric);
        for j in 0..n {
            for k in 0..n {
                let ginv2 = sp.truncate(&g_inv[j][k], k_ric);
                sp.mul_acc(&mut s_jet, &ginv2, &ric[j][k], 1.0);
            }
        }

        let g_inv0 = DMatrix::from_fn(n, n, |i, j| g_inv[i][j].value());
        let gamma0 = Christoffel {
            n,
            values: (0..n * n * n).map(|q| gamma[q / (n * n)][(q / n) % n][q % n].value()).collect(),
        };
        let dgamma0 = |a: usize, k: usize, i: usize, j: usize| sp.partial(&dgamma[a][k][i][j], &[]);

        let mut riemann = vec![0.0; n * n * n * n];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut r = dgamma0(i, l, j, k) - dgamma0(j, l, i, k);
                        for m in 0..n {
                            r += gamma0.get(l, i, m) * gamma0.get(m, j, k) - gamma0.get(l, j, m) * gamma0.get(m, i, k);
                        }
                        riemann[((l * n + k) * n + i) * n + j] = r;
                    }
                }
            }
        }

        let ricci0 = DMatrix::from_fn(n, n, |i, j| ric[i][j].value());
        let scalar = s_jet.value();
        let grad_scalar: Vec<f64> = (0..n).map(|i| sp.partial(&s_jet, &[i])).collect();
        let d2_scalar = DMatrix::from_fn(n, n, |i, j| sp.partial(&s_jet, &[i, j]));
        let hess_scalar = covariant_hessian(n, &gamma0, &grad_scalar, |i, j| d2_scalar[(i, j)]);
        let laplacian_scalar = trace_with(&g_inv0, &hess_scalar);
        let ricci_norm_sq = operator_norm_sq(&g_inv0, &ricci0);

        // (div Ric)_i = gʲᵏ (∂_k Ric_ij − Γˡ_ki Ric_lj − Γˡ_kj Ric_il)
        let div_ricci: Vec<f64> = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        let mut cov = sp.partial(&ric[i][j], &[k]);
                        for l in 0..n {
                            cov -= gamma0.get(l, k, i) * ricci0[(l, j)] + gamma0.get(l, k, j) * ricci0[(i, l)];
                        }
                        acc += g_inv0[(j, k)] * cov;
                    }
                }
                acc
            })
            .collect();

        let potential = match &self.potential {
            Some(tables) => {
                let vals = tables.tape.eval(p)?;
                let f = sp.from_partials(tables.order, &vals);
                Some(potential_state(sp, p, &f, &g_inv, &gamma0, &ricci0, &grad_scalar))
            }
            None => None,
        };

        let curvature = CurvatureState {
            point: p.to_vec(),
            g: g0,
            g_inv: g_inv0,
            christoffel: gamma0,
            riemann,
            ricci: ricci0,
            scalar,
            grad_scalar,
            laplacian_scalar,
            ricci_norm_sq,
            div_ricci,
            hess_scalar,
            d2_scalar,
        };
        Ok(PointGeometry { curvature, potential })
    }
}

fn covariant_hessian(
    n: usize,
    gamma: &Christoffel,
    grad: &[f64],
    second: impl Fn(usize, usize) -> f64,
) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut v = second(i, j);
            for k in 0..n {
                v -= gamma.get(k, i, j) * grad[k];
            }
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

fn trace_with(g_inv: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    g_inv.component_mul(t).sum()
}

fn potential_state(
    sp: &JetSpace,
    p: &[f64],
    f: &Jet,
    g_inv: &[Vec<Jet>],
    gamma: &Christoffel,
    ricci: &DMatrix<f64>,
    grad_scalar: &[f64],
) -> PotentialState {
    let n = sp.dim();
    let g_inv0 = DMatrix::from_fn(n, n, |i, j| g_inv[i][j].value());
    let grad_f: Vec<f64> = (0..n).map(|i| sp.partial(f, &[i])).collect();
    let d2_f = DMatrix::from_fn(n, n, |i, j| sp.partial(f, &[i, j]));
    let hess_f = covariant_hessian(n, gamma, &grad_f, |i, j| d2_f[(i, j)]);
    let laplacian_f = trace_with(&g_inv0, &hess_f);
    let hess_f_norm_sq = operator_norm_sq(&g_inv0, &hess_f);

    // |∇f|² = gⁱʲ ∂_i f ∂_j f as an order-2 jet
    let order = 2;
    let df: Vec<Jet> = (0..n).map(|i| sp.deriv(f, i)).collect();
    let df = df.iter().map(|d| sp.truncate(d, order)).collect::<Vec<_>>();
    let mut h = sp.zero(order);
    for i in 0..n {
        let mut raised = sp.zero(order);
        for j in 0..n {
            sp.mul_acc(&mut raised, &sp.truncate(&g_inv[i][j], order), &df[j], 1.0);
        }
        sp.mul_acc(&mut h, &raised, &df[i], 1.0);
    }
    let grad_h: Vec<f64> = (0..n).map(|i| sp.partial(&h, &[i])).collect();
    let hess_h = covariant_hessian(n, gamma, &grad_h, |i, j| sp.partial(&h, &[i, j]));

    let raised: Vec<f64> = (0..n).map(|i| (0..n).map(|j| g_inv0[(i, j)] * grad_f[j]).sum()).collect();
    let mut ricci_grad_f = 0.0;
    let mut grad_scalar_dot_grad_f = 0.0;
    for i in 0..n {
        grad_scalar_dot_grad_f += raised[i] * grad_scalar[i];
        for j in 0..n {
            ricci_grad_f += ricci[(i, j)] * raised[i] * raised[j];
        }
    }

    PotentialState {
        point: p.to_vec(),
        f: f.value(),
        grad_f,
        grad_f_norm_sq: h.value(),
        hess_f,
        laplacian_f,
        hess_f_norm_sq,
        laplacian_grad_f_norm_sq: trace_with(&g_inv0, &hess_h),
        ricci_grad_f,
        grad_scalar_dot_grad_f,
        d2_f,
    }
}

/// Christoffel symbols of `m` at `p`.
pub fn christoffel(m: &MetricField, p: &[f64]) -> Result<Christoffel, GeometryError> {
    GeometryEngine::new(m, None)?.christoffel(p)
}

pub fn curvature_state(m: &MetricField, p: &[f64]) -> Result<CurvatureState, GeometryError> {
    GeometryEngine::new(m, None)?.curvature_state(p)
}

pub fn potential_state_at(m: &MetricField, f: &Arc<Expr>, p: &[f64]) -> Result<PotentialState, GeometryError> {
    let point = GeometryEngine::new(m, Some(f))?.point(p)?;
    Ok(point.potential.expect("engine built with a potential"))
}

/// Residual of the contracted Bianchi identity `∂_i S = 2 (div Ric)_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BianchiResidual {
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn bianchi_residual(state: &CurvatureState) -> f64 {
    state
        .grad_scalar
        .iter()
        .zip(&state.div_ricci)
        .map(|(ds, dr)| (ds - 2.0 * dr).abs())
        .fold(0.0, f64::max)
}

pub fn check_contracted_bianchi(m: &MetricField, p: &[f64], tol: f64) -> Result<BianchiResidual, GeometryError> {
    let residual = bianchi_residual(&curvature_state(m, p)?);
    Ok(BianchiResidual { residual, tolerance: tol, pass: residual <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse_expr;

    fn sphere_metric(n: usize, r: f64) -> MetricField {
        let sum: Vec<String> = (1..=n).map(|i| format!("x{i}^2")).collect();
        let phi = parse_expr(&format!("4*{r}^4/({r}^2 + {})^2", sum.join(" + ")), n).unwrap();
        MetricField::conformally_flat_block(n, n, phi)
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let m = MetricField::flat(3);
        let s = curvature_state(&m, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(s.christoffel.max_abs(), 0.0);
        assert_eq!(s.scalar, 0.0);
        assert_eq!(s.ricci_norm_sq, 0.0);
        assert_eq!(s.laplacian_scalar, 0.0);
        assert!(s.grad_scalar.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exponential_block_christoffel() {
        let m = MetricField::from_fn(2, |i, j| match (i, j) {
            (0, 0) => parse_expr("exp(2*x1)", 2).unwrap(),
            (1, 1) => Expr::one(),
            _ => Expr::zero(),
        });
        let g = christoffel(&m, &[0.7, 0.1]).unwrap();
        assert!((g.get(0, 0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn round_sphere_closed_forms() {
        for &(n, r) in &[(2usize, 1.0f64), (3, 2.0), (4, 1.5)] {
            let s = curvature_state(&sphere_metric(n, r), &vec![0.2; n]).unwrap();
            let expected = (n * (n - 1)) as f64 / (r * r);
            assert!((s.scalar - expected).abs() < 1e-11 * expected, "n={n}: {}", s.scalar);
            let lam = (n - 1) as f64 / (r * r);
            for i in 0..n {
                for j in 0..n {
                    assert!((s.ricci[(i, j)] - lam * s.g[(i, j)]).abs() < 1e-10);
                }
            }
            assert!((s.ricci_norm_sq - expected * expected / n as f64).abs() < 1e-9 * expected * expected);
            assert!(s.laplacian_scalar.abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_chart_centre_has_vanishing_christoffels() {
        let g = christoffel(&sphere_metric(2, 1.0), &[0.0, 0.0]).unwrap();
        assert!(g.max_abs() < 1e-15);
    }

    #[test]
    fn riemann_antisymmetry_and_ricci_trace() {
        let m = MetricField::from_fn(3, |i, j| match (i, j) {
            (0, 0) => parse_expr("1 + 0.1*x2^2 + 0.05*sin(x3)", 3).unwrap(),
            (1, 0) => parse_expr("0.03*x1*x3", 3).unwrap(),
            (1, 1) => parse_expr("exp(0.1*x1)", 3).unwrap(),
            (2, 2) => parse_expr("1 + 0.2*x1*x2", 3).unwrap(),
            _ => Expr::zero(),
        });
        let s = curvature_state(&m, &[0.3, 0.5, -0.4]).unwrap();
        let n = 3;
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        assert!((s.riemann(l, k, i, j) + s.riemann(l, k, j, i)).abs() < 1e-13);
                    }
                }
            }
        }
        for k in 0..n {
            for j in 0..n {
                let tr: f64 = (0..n).map(|i| s.riemann(i, k, i, j)).sum();
                assert!((tr - s.ricci[(k, j)]).abs() < 1e-12);
                assert!((s.ricci[(k, j)] - s.ricci[(j, k)]).abs() < 1e-13);
            }
        }
        let eig: f64 = s.ricci_eigenvalues().unwrap().iter().map(|v| v * v).sum();
        assert!((eig - s.ricci_norm_sq).abs() < 1e-12 * (1.0 + eig));
        assert!(bianchi_residual(&s) < 1e-12);
    }

    #[test]
    fn gaussian_potential_on_flat_space() {
        let lam = 0.5;
        let f = parse_expr("0.25*(x1^2 + x2^2 + x3^2)", 3).unwrap();
        let p = [1.0, -0.5, 2.0];
        let ps = potential_state_at(&MetricField::flat(3), &f, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { lam } else { 0.0 };
                assert!((ps.hess_f[(i, j)] - expected).abs() < 1e-15);
            }
        }
        assert!((ps.laplacian_f - 3.0 * lam).abs() < 1e-15);
        assert!((ps.hess_f_norm_sq - 3.0 * lam * lam).abs() < 1e-15);
        let r2: f64 = p.iter().map(|x| x * x).sum();
        assert!((ps.grad_f_norm_sq - lam * lam * r2).abs() < 1e-14);
        assert!((ps.laplacian_grad_f_norm_sq - 2.0 * 3.0 * lam * lam).abs() < 1e-14);
    }

    #[test]
    fn constant_potential_has_no_derivatives() {
        let ps = potential_state_at(&sphere_metric(2, 1.0), &Expr::constant(1.0), &[0.4, 0.1]).unwrap();
        assert_eq!(ps.grad_f_norm_sq, 0.0);
        assert_eq!(ps.hess_f_norm_sq, 0.0);
        assert_eq!(ps.laplacian_f, 0.0);
    }

    #[test]
    fn chart_rejects_degenerate_input() {
        assert!(ChartSpec::with_default_names(vec![(0.0, 1.0)], None).is_err());
        assert!(ChartSpec::with_default_names(vec![(0.0, 1.0), (2.0, 2.0)], None).is_err());
        let v = parse_expr("1 - x1^2 - x2^2", 2).unwrap();
        let c = ChartSpec::with_default_names(vec![(-1.0, 1.0), (-1.0, 1.0)], Some(v)).unwrap();
        assert!(c.is_valid(&[0.1, 0.1]));
        assert!(!c.is_valid(&[0.9, 0.9]));
    }

    #[test]
    fn non_spd_metric_is_reported_with_point() {
        let m = MetricField::from_fn(2, |i, j| if i == j { parse_expr("x1", 2).unwrap() } else { Expr::zero() });
        let err = curvature_state(&m, &[-1.0, 0.0]).unwrap_err();
        assert_eq!(err, GeometryError::NotPositiveDefinite { point: vec![-1.0, 0.0] });
    }
}
