//! Truncated multivariate Taylor arithmetic at a single point.
//!
//! A jet of order k stores the Taylor coefficients `c_α = ∂^α u / α!` for all
//! multi-indices with `|α| <= k`. Monomials are laid out graded by total
//! degree, so truncating a jet to a lower order is a prefix slice.

use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct JetSpace {
    n: usize,
    max_order: usize,
    exponents: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    // number of monomials of degree <= k
    upto: Vec<usize>,
    // (a, b, a+b) sorted by degree of a+b
    pairs: Vec<(u32, u32, u32)>,
    pairs_upto: Vec<usize>,
    // per variable: (source monomial α + e_i, target α, factor α_i + 1)
    derivs: Vec<Vec<(u32, u32, f64)>>,
    factorials: Vec<f64>,
}

fn degree(e: &[u8]) -> usize {
    e.iter().map(|&d| d as usize).sum()
}

impl JetSpace {
    pub fn new(n: usize, max_order: usize) -> Self {
        let mut exponents: Vec<Vec<u8>> = Vec::new();
        let mut upto = Vec::new();
        for d in 0..=max_order {
            let mut cur = vec![0u8; n];
            compositions(n, d, 0, &mut cur, &mut exponents);
            upto.push(exponents.len());
        }
        let index: HashMap<Vec<u8>, usize> =
            exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();

        let mut pairs = Vec::new();
        for (a, ea) in exponents.iter().enumerate() {
            for (b, eb) in exponents.iter().enumerate() {
                if degree(ea) + degree(eb) > max_order {
                    continue;
                }
                let sum: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                pairs.push((a as u32, b as u32, index[&sum] as u32));
            }
        }
        pairs.sort_by_key(|&(_, _, c)| c);
        let pairs_upto = (0..=max_order)
            .map(|k| pairs.partition_point(|&(_, _, c)| (c as usize) < upto[k]))
            .collect();

        let derivs = (0..n)
            .map(|i| {
                exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| degree(e) < max_order)
                    .map(|(t, e)| {
                        let mut s = e.clone();
                        s[i] += 1;
                        (index[&s] as u32, t as u32, s[i] as f64)
                    })
                    .collect()
            })
            .collect();

        let factorials = exponents
            .iter()
            .map(|e| e.iter().map(|&d| (1..=d as u32).product::<u32>() as f64).product())
            .collect();

        Self { n, max_order, exponents, index, upto, pairs, pairs_upto, derivs, factorials }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn len(&self, order: usize) -> usize {
        self.upto[order]
    }

    /// Index of the monomial with the given derivative multi-index
    /// (a list of coordinate indices, order irrelevant).
    pub fn monomial(&self, indices: &[usize]) -> usize {
        let mut e = vec![0u8; self.n];
        for &i in indices {
            e[i] += 1;
        }
        self.index[&e]
    }

    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exponents
    }

    pub fn zero(&self, order: usize) -> Jet {
        Jet { order, c: vec![0.0; self.upto[order]] }
    }

    pub fn constant(&self, order: usize, v: f64) -> Jet {
        let mut j = self.zero(order);
        j.c[0] = v;
        j
    }

    /// Jet from partial-derivative values listed in monomial order.
    pub fn from_partials(&self, order: usize, partials: &[f64]) -> Jet {
        let len = self.upto[order];
        Jet { order, c: partials[..len].iter().zip(&self.factorials).map(|(d, f)| d / f).collect() }
    }

    /// Partial derivative `∂^α u` at the base point.
    pub fn partial(&self, j: &Jet, indices: &[usize]) -> f64 {
        let m = self.monomial(indices);
        j.c[m] * self.factorials[m]
    }

    pub fn mul(&self, a: &Jet, b: &Jet) -> Jet {
        let order = a.order.min(b.order);
        let mut out = self.zero(order);
        self.mul_acc(&mut out, a, b, 1.0);
        out
    }

    /// `out += s * a * b`, truncated to `out.order`.
    pub fn mul_acc(&self, out: &mut Jet, a: &Jet, b: &Jet, s: f64) {
        debug_assert!(out.order <= a.order.min(b.order));
        for &(i, k, t) in &self.pairs[..self.pairs_upto[out.order]] {
            out.c[t as usize] += s * a.c[i as usize] * b.c[k as usize];
        }
    }

    /// `∂_i u`, one order lower.
    pub fn deriv(&self, a: &Jet, i: usize) -> Jet {
        assert!(a.order > 0, "cannot differentiate an order-0 jet");
        let mut out = self.zero(a.order - 1);
        let len = out.c.len();
        for &(s, t, f) in &self.derivs[i] {
            if (t as usize) < len {
                out.c[t as usize] = f * a.c[s as usize];
            }
        }
        out
    }
}

fn compositions(n: usize, d: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos == n - 1 {
        cur[pos] = d as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=d).rev() {
        cur[pos] = k as u8;
        compositions(n, d - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    order: usize,
    c: Vec<f64>,
}

impl Jet {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn add_assign(&mut self, other: &Jet, s: f64) {
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.c {
            *a *= s;
        }
    }
}

impl JetSpace {
    pub fn truncate(&self, a: &Jet, order: usize) -> Jet {
        assert!(order <= a.order);
        Jet { order, c: a.c[..self.upto[order]].to_vec() }
    }
}
