//! Exact non-steady gradient Ricci solitons with closed-form expected values.
//!
//! Every fixture is built from expression text, so the same strings appear
//! in `catalog show` output and round-trip through the spec-file loader.

use std::sync::Arc;

use thiserror::Error;

use crate::exprlang::{parse_expr, Expr};
use crate::geometry::{ChartSpec, MetricField};
use crate::soliton::{SamplePlan, SolitonError, SolitonKind, SolitonSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("invalid fixture parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error(transparent)]
    Soliton(#[from] SolitonError),
}

/// Fraction of each chart side left unsampled at both ends.
pub const SAMPLE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EinsteinKind {
    Sphere,
    Hyperbolic,
}

#[derive(Debug, Clone)]
pub struct Expected {
    pub scalar: Arc<Expr>,
    pub c: f64,
    pub trivial: bool,
    pub ricci_norm_sq: Arc<Expr>,
    pub hess_norm_sq: Arc<Expr>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub spec: SolitonSpec,
    pub expected: Expected,
    /// How the expected values follow from the metric and potential.
    pub provenance: String,
    /// Expression text for the conformal factor or metric diagonal, kept for
    /// serialization: `metric_text[i][j]` for `j <= i`.
    pub metric_text: Vec<Vec<String>>,
    pub potential_text: String,
    pub validity_text: Option<String>,
}

impl Fixture {
    pub fn kind(&self) -> SolitonKind {
        self.spec.kind()
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn parse(text: &str, n: usize) -> Arc<Expr> {
    parse_expr(text, n).unwrap_or_else(|e| panic!("fixture expression `{text}`: {}", e.render(text)))
}

fn sum_of_squares(vars: std::ops::Range<usize>) -> String {
    vars.map(|i| format!("x{}^2", i + 1)).collect::<Vec<_>>().join(" + ")
}

fn grid_counts(n: usize) -> Vec<usize> {
    // at least 100 points, odd counts so the chart centre is sampled
    let per_axis = match n {
        2 => 11,
        3 => 5,
        4 => 5,
        _ => 3,
    };
    vec![per_axis; n]
}

struct Builder {
    n: usize,
    metric_text: Vec<Vec<String>>,
    potential_text: String,
    validity_text: Option<String>,
    domain: Vec<(f64, f64)>,
    lambda: f64,
}

impl Builder {
    /// `factor·δ` on the first `k` coordinates, `δ` on the rest.
    fn conformal(n: usize, k: usize, factor: &str) -> Vec<Vec<String>> {
        (0..n)
            .map(|i| {
                (0..=i)
                    .map(|j| match (i == j, i < k) {
                        (true, true) => factor.to_string(),
                        (true, false) => "1".to_string(),
                        _ => "0".to_string(),
                    })
                    .collect()
            })
            .collect()
    }

    fn build(
        self,
        name: String,
        description: String,
        expected: Expected,
        provenance: String,
    ) -> Result<Fixture, CatalogError> {
        let n = self.n;
        let validity = self.validity_text.as_deref().map(|t| parse(t, n));
        let chart = ChartSpec::with_default_names(self.domain, validity).map_err(SolitonError::from)?;
        let metric = MetricField::from_fn(n, |i, j| parse(&self.metric_text[i][j], n));
        let potential = parse(&self.potential_text, n);
        let samples = SamplePlan::Grid { counts: grid_counts(n), margin: SAMPLE_MARGIN };
        let spec = SolitonSpec::new(chart, metric, potential, self.lambda, samples)?;
        Ok(Fixture {
            name,
            description,
            spec,
            expected,
            provenance,
            metric_text: self.metric_text,
            potential_text: self.potential_text,
            validity_text: self.validity_text,
        })
    }
}

fn check_dim(n: usize, min: usize) -> Result<(), CatalogError> {
    if n < min || n > 8 {
        return Err(CatalogError::InvalidParameter(format!("dimension must lie in [{min}, 8], got {n}")));
    }
    Ok(())
}

fn gaussian(n: usize, lambda: f64, name: String, kind: &str) -> Result<Fixture, CatalogError> {
    let b = Builder {
        n,
        metric_text: Builder::conformal(n, n, "1"),
        potential_text: format!("{}*({})", num(lambda / 2.0), sum_of_squares(0..n)),
        validity_text: None,
        domain: vec![(-2.0, 2.0); n],
        lambda,
    };
    let expected = Expected {
        scalar: Expr::zero(),
        c: 0.0,
        trivial: false,
        ricci_norm_sq: Expr::zero(),
        hess_norm_sq: Expr::constant(n as f64 * lambda * lambda),
    };
    let provenance =
        "flat metric, f = (λ/2)|x|²: Hess f = λδ, Ric = 0, S = 0, |∇f|² = λ²|x|² = 2λf so c = 0; f is non-constant"
            .to_string();
    b.build(name, format!("Gaussian {kind} on flat R^{n}, λ = {lambda}"), expected, provenance)
}

/// Flat `Rⁿ` with `f = (λ/2)|x|²`, `λ > 0`.
pub fn gaussian_shrinker(n: usize, lambda: f64) -> Result<Fixture, CatalogError> {
    check_dim(n, 2)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CatalogError::InvalidParameter(format!("shrinker needs λ > 0, got {lambda}")));
    }
    gaussian(n, lambda, format!("gaussian-shrinker-{n}d"), "shrinker")
}

/// Flat `Rⁿ` with `f = (λ/2)|x|²`, `λ < 0`.
pub fn gaussian_expander(n: usize, lambda: f64) -> Result<Fixture, CatalogError> {
    check_dim(n, 2)?;
    if !(lambda < 0.0 && lambda.is_finite()) {
        return Err(CatalogError::InvalidParameter(format!("expander needs λ < 0, got {lambda}")));
    }
    gaussian(n, lambda, format!("gaussian-expander-{n}d"), "expander")
}

fn check_radius(r: f64) -> Result<(), CatalogError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(CatalogError::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    Ok(())
}

/// Round sphere (stereographic chart) or hyperbolic space (Poincaré ball)
/// of radius `r`, with the constant normalized potential `f = n/2`.
pub fn einstein_trivial(kind: EinsteinKind, n: usize, r: f64) -> Result<Fixture, CatalogError> {
    check_dim(n, 2)?;
    check_radius(r)?;
    let r2 = num(r * r);
    let r4 = num(r.powi(4));
    let xs = sum_of_squares(0..n);
    let nf = n as f64;
    let (sign, factor, validity, domain, name, what) = match kind {
        EinsteinKind::Sphere => (
            1.0,
            format!("4*{r4}/({r2} + {xs})^2"),
            None,
            vec![(-r, r); n],
            format!("sphere-trivial-n{n}"),
            "round sphere, stereographic chart",
        ),
        EinsteinKind::Hyperbolic => {
            // cube inscribed in the ball keeps the conformal factor bounded
            let h = r / nf.sqrt();
            (
                -1.0,
                format!("4*{r4}/({r2} - ({xs}))^2"),
                Some(format!("{r2} - ({xs})")),
                vec![(-h, h); n],
                format!("hyperbolic-trivial-n{n}"),
                "hyperbolic space, Poincaré ball chart",
            )
        }
    };
    let lambda = sign * (nf - 1.0) / (r * r);
    let b = Builder {
        n,
        metric_text: Builder::conformal(n, n, &factor),
        potential_text: num(nf / 2.0),
        validity_text: validity,
        domain,
        lambda,
    };
    let expected = Expected {
        scalar: Expr::constant(nf * lambda),
        c: 0.0,
        trivial: true,
        ricci_norm_sq: Expr::constant(nf * lambda * lambda),
        hess_norm_sq: Expr::zero(),
    };
    let sign_text = if sign > 0.0 { "" } else { "−" };
    let provenance = format!(
        "Einstein metric Ric = λg with λ = {sign_text}(n−1)/r²; S = nλ, |Ric|² = nλ², f = n/2 constant so Hess f = 0 and S − 2λf = 0 gives c = 0"
    );
    b.build(name, format!("{what}, n = {n}, r = {r}"), expected, provenance)
}

/// `S^{n−1}_r × R` with `f = λt²/2 + (n−1)/2`, `λ = (n−2)/r²`.
pub fn cylinder_shrinker(n: usize, r: f64) -> Result<Fixture, CatalogError> {
    check_dim(n, 3)?;
    check_radius(r)?;
    let k = n - 1;
    let lambda = (n as f64 - 2.0) / (r * r);
    let factor = format!("4*{}/({} + {})^2", num(r.powi(4)), num(r * r), sum_of_squares(0..k));
    let mut domain = vec![(-r, r); k];
    domain.push((-2.0, 2.0));
    let b = Builder {
        n,
        metric_text: Builder::conformal(n, k, &factor),
        potential_text: format!("{}*x{n}^2 + {}", num(lambda / 2.0), num(k as f64 / 2.0)),
        validity_text: None,
        domain,
        lambda,
    };
    let expected = Expected {
        scalar: Expr::constant(k as f64 * lambda),
        c: 0.0,
        trivial: false,
        ricci_norm_sq: Expr::constant(k as f64 * lambda * lambda),
        hess_norm_sq: Expr::constant(lambda * lambda),
    };
    let provenance = "product of a round (n−1)-sphere with Ric = λg and a line: Ric + λdt² = λg, \
        S = (n−1)λ, |∇f|² = λ²t² so S + |∇f|² − 2λf = 0"
        .to_string();
    b.build(format!("cylinder-n{n}"), format!("shrinking cylinder S^{k} x R, r = {r}"), expected, provenance)
}

/// Names of the default fixtures, in listing order.
pub const FIXTURE_NAMES: [&str; 5] =
    ["gaussian-shrinker-2d", "gaussian-expander-2d", "sphere-trivial-n2", "hyperbolic-trivial-n3", "cylinder-n3"];

pub fn fixture(name: &str) -> Result<Fixture, CatalogError> {
    match name {
        "gaussian-shrinker-2d" => gaussian_shrinker(2, 1.0),
        "gaussian-expander-2d" => gaussian_expander(2, -1.0),
        "sphere-trivial-n2" => einstein_trivial(EinsteinKind::Sphere, 2, 1.0),
        "hyperbolic-trivial-n3" => einstein_trivial(EinsteinKind::Hyperbolic, 3, 1.0),
        "cylinder-n3" => cylinder_shrinker(3, 1.0),
        _ => Err(CatalogError::UnknownFixture(name.to_string())),
    }
}

pub fn catalog() -> Vec<Fixture> {
    FIXTURE_NAMES.iter().map(|n| fixture(n).expect("default fixtures are valid")).collect()
}
