//! Shared test oracles: finite-difference geometry built only from plain
//! expression evaluation, and seeded random smooth metrics.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use soliton_core::exprlang::{evaluate, parse_expr, Expr};
use soliton_core::geometry::MetricField;

/// Inner step for metric derivatives.
pub const H_INNER: f64 = 1e-2;
/// Outer step for derivatives of quantities that are themselves finite
/// differences; larger to keep nested roundoff in check.
pub const H_OUTER: f64 = 2e-2;

fn shifted(p: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    q[k] += h;
    q
}

/// Richardson-extrapolated central first derivative of a vector-valued map.
pub fn d1<F: Fn(&[f64]) -> Vec<f64>>(f: &F, p: &[f64], k: usize, h: f64) -> Vec<f64> {
    let central = |h: f64| {
        let a = f(&shifted(p, k, h));
        let b = f(&shifted(p, k, -h));
        a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect::<Vec<f64>>()
    };
    let coarse = central(h);
    let fine = central(h / 2.0);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// Richardson-extrapolated central second derivative `∂_k∂_l` of a scalar map.
pub fn d2<F: Fn(&[f64]) -> f64>(f: &F, p: &[f64], k: usize, l: usize, h: f64) -> f64 {
    let stencil = |h: f64| {
        if k == l {
            (f(&shifted(p, k, h)) - 2.0 * f(p) + f(&shifted(p, k, -h))) / (h * h)
        } else {
            let pp = shifted(&shifted(p, k, h), l, h);
            let pm = shifted(&shifted(p, k, h), l, -h);
            let mp = shifted(&shifted(p, k, -h), l, h);
            let mm = shifted(&shifted(p, k, -h), l, -h);
            (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h)
        }
    };
    (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0
}

pub fn metric_at(m: &MetricField, p: &[f64]) -> DMatrix<f64> {
    m.evaluate(p).expect("metric evaluates")
}

/// `∂_k g_ij` flattened as `(k * n + i) * n + j`.
pub fn metric_derivatives(m: &MetricField, p: &[f64]) -> Vec<f64> {
    let n = m.dim();
    let g = |q: &[f64]| metric_at(m, q).as_slice().to_vec();
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        let dk = d1(&g, p, k, H_INNER);
        for i in 0..n {
            for j in 0..n {
                // column-major storage of the nalgebra slice
                out[(k * n + i) * n + j] = dk[j * n + i];
            }
        }
    }
    out
}

/// `Γᵏ_ij` flattened as `(k * n + i) * n + j`.
pub fn christoffel_fd(m: &MetricField, p: &[f64]) -> Vec<f64> {
    let n = m.dim();
    let g_inv = metric_at(m, p).try_inverse().expect("invertible");
    let dg = metric_derivatives(m, p);
    let d = |k: usize, i: usize, j: usize| dg[(k * n + i) * n + j];
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += g_inv[(k, l)] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                }
                out[(k * n + i) * n + j] = 0.5 * s;
            }
        }
    }
    out
}

/// Ricci tensor from `R_ij = ∂_k Γᵏ_ij − ∂_j Γᵏ_ik + Γᵏ_kl Γˡ_ij − Γᵏ_jl Γˡ_ik`.
pub fn ricci_fd(m: &MetricField, p: &[f64]) -> DMatrix<f64> {
    let n = m.dim();
    let gamma = christoffel_fd(m, p);
    let gam = |k: usize, i: usize, j: usize| gamma[(k * n + i) * n + j];
    let f = |q: &[f64]| christoffel_fd(m, q);
    let dgamma: Vec<Vec<f64>> = (0..n).map(|k| d1(&f, p, k, H_OUTER)).collect();
    let dg = |a: usize, k: usize, i: usize, j: usize| dgamma[a][(k * n + i) * n + j];
    DMatrix::from_fn(n, n, |i, j| {
        let mut s = 0.0;
        for k in 0..n {
            s += dg(k, k, i, j) - dg(j, k, i, k);
            for l in 0..n {
                s += gam(k, k, l) * gam(l, i, j) - gam(k, j, l) * gam(l, i, k);
            }
        }
        s
    })
}

pub fn scalar_fd(m: &MetricField, p: &[f64]) -> f64 {
    let g_inv = metric_at(m, p).try_inverse().expect("invertible");
    let ric = ricci_fd(m, p);
    g_inv.component_mul(&ric).sum()
}

pub fn grad_scalar_fd(m: &MetricField, p: &[f64]) -> Vec<f64> {
    let s = |q: &[f64]| vec![scalar_fd(m, q)];
    (0..m.dim()).map(|k| d1(&s, p, k, H_OUTER)[0]).collect()
}

/// Covariant Hessian of a scalar function from finite differences.
pub fn hessian_fd<F: Fn(&[f64]) -> f64>(m: &MetricField, f: &F, p: &[f64], h: f64) -> DMatrix<f64> {
    let n = m.dim();
    let gamma = christoffel_fd(m, p);
    let wrapped = |q: &[f64]| vec![f(q)];
    let grad: Vec<f64> = (0..n).map(|k| d1(&wrapped, p, k, h)[0]).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let mut s = d2(f, p, i, j, h);
        for k in 0..n {
            s -= gamma[(k * n + i) * n + j] * grad[k];
        }
        s
    })
}

pub fn laplacian_fd<F: Fn(&[f64]) -> f64>(m: &MetricField, f: &F, p: &[f64], h: f64) -> f64 {
    let g_inv = metric_at(m, p).try_inverse().expect("invertible");
    g_inv.component_mul(&hessian_fd(m, f, p, h)).sum()
}

pub fn laplacian_scalar_fd(m: &MetricField, p: &[f64]) -> f64 {
    let s = |q: &[f64]| scalar_fd(m, q);
    laplacian_fd(m, &s, p, H_OUTER)
}

pub fn potential_fn(f: &Arc<Expr>) -> impl Fn(&[f64]) -> f64 + '_ {
    move |q: &[f64]| evaluate(f, q).expect("potential evaluates")
}

/// Random smooth scalar term in `n` variables, bounded by `amp` on `[-1, 1]ⁿ`.
fn random_term(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> String {
    let k = rng.random_range(1..=n);
    let l = rng.random_range(1..=n);
    let a = rng.random_range(-amp..amp);
    let b = rng.random_range(-1.5..1.5);
    let c = rng.random_range(-1.0..1.0);
    match rng.random_range(0..5) {
        0 => format!("({a})*sin({b}*x{k} + {c})"),
        1 => format!("({a})*x{k}*x{l}"),
        2 => format!("({a})*cos({b}*x{k})*x{l}"),
        3 => format!("({a})*exp({}*x{k})/2", b / 2.0),
        _ => format!("({a})*x{k}^2*x{l}"),
    }
}

/// Text of a random symmetric perturbation of the flat metric on
/// `[-1, 1]ⁿ`; entries are `δ_ij` plus at most `terms · amp` in magnitude.
pub fn random_metric_text(rng: &mut ChaCha8Rng, n: usize, amp: f64, terms: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| {
                    let mut s = if i == j { "1".to_string() } else { "0".to_string() };
                    for _ in 0..terms {
                        s.push_str(" + ");
                        s.push_str(&random_term(rng, n, amp));
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn random_metric(seed: u64, n: usize) -> MetricField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = random_metric_text(&mut rng, n, 0.05 / 3.0, 3);
    MetricField::from_fn(n, |i, j| parse_expr(&text[i][j], n).expect("generated metric parses"))
}

/// Random smooth potential of moderate size.
pub fn random_potential(seed: u64, n: usize) -> Arc<Expr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut s = String::from("0.3*x1^2");
    for _ in 0..4 {
        s.push_str(" + ");
        s.push_str(&random_term(&mut rng, n, 0.5));
    }
    parse_expr(&s, n).expect("generated potential parses")
}

pub fn random_points(seed: u64, n: usize, count: usize, half_width: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    (0..count).map(|_| (0..n).map(|_| rng.random_range(-half_width..half_width)).collect()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
