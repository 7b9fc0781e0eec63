use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::{BinaryOp, Expr, UnaryOp};

/// Exact partial derivative of `e` with respect to coordinate `i` (0-based).
pub fn differentiate(e: &Arc<Expr>, i: usize) -> Arc<Expr> {
    let mut memo = HashMap::new();
    diff_memo(e, i, &mut memo)
}

// Shared subtrees are differentiated once per call; results are shared too.
fn diff_memo(e: &Arc<Expr>, i: usize, memo: &mut HashMap<*const Expr, Arc<Expr>>) -> Arc<Expr> {
    let key = Arc::as_ptr(e);
    if let Some(d) = memo.get(&key) {
        return d.clone();
    }
    let d = match &**e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(j) => {
            if *j == i {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Unary(op, u) => {
            let du = diff_memo(u, i, memo);
            if du.is_zero() {
                Expr::zero()
            } else {
                let outer = match op {
                    UnaryOp::Neg => return cache(memo, key, Expr::neg(du)),
                    UnaryOp::Exp => e.clone(),
                    UnaryOp::Ln => return cache(memo, key, Expr::div(du, u.clone())),
                    UnaryOp::Sin => Expr::unary(UnaryOp::Cos, u.clone()),
                    UnaryOp::Cos => Expr::neg(Expr::unary(UnaryOp::Sin, u.clone())),
                    UnaryOp::Tan => Expr::pow(Expr::unary(UnaryOp::Cos, u.clone()), -2.0),
                    UnaryOp::Sinh => Expr::unary(UnaryOp::Cosh, u.clone()),
                    UnaryOp::Cosh => Expr::unary(UnaryOp::Sinh, u.clone()),
                    UnaryOp::Tanh => Expr::sub(Expr::one(), Expr::pow(e.clone(), 2.0)),
                    UnaryOp::Sqrt => {
                        let half = Expr::div(du, Expr::mul(Expr::constant(2.0), e.clone()));
                        return cache(memo, key, half);
                    }
                };
                Expr::mul(outer, du)
            }
        }
        Expr::Binary(op, a, b) => {
            let da = diff_memo(a, i, memo);
            let db = diff_memo(b, i, memo);
            match op {
                BinaryOp::Add => Expr::add(da, db),
                BinaryOp::Sub => Expr::sub(da, db),
                BinaryOp::Mul => Expr::add(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db)),
                BinaryOp::Div => {
                    if db.is_zero() {
                        Expr::div(da, b.clone())
                    } else {
                        // (a/b)' = a'/b - a*b'/b^2
                        Expr::sub(
                            Expr::div(da, b.clone()),
                            Expr::div(Expr::mul(a.clone(), db), Expr::pow(b.clone(), 2.0)),
                        )
                    }
                }
            }
        }
        Expr::Pow(u, k) => {
            let du = diff_memo(u, i, memo);
            if du.is_zero() {
                Expr::zero()
            } else {
                Expr::mul(Expr::mul(Expr::constant(*k), Expr::pow(u.clone(), k - 1.0)), du)
            }
        }
    };
    cache(memo, key, d)
}

fn cache(memo: &mut HashMap<*const Expr, Arc<Expr>>, key: *const Expr, d: Arc<Expr>) -> Arc<Expr> {
    memo.insert(key, d.clone());
    d
}

/// All mixed partials of one expression up to a fixed order.
///
/// Entries are keyed by the sorted list of differentiation indices, so the
/// table is symmetric by construction: `get(&[0, 1])` and `get(&[1, 0])`
/// return the same entry. Each entry of order k is the derivative of its
/// order k-1 prefix by the last (largest) index.
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    dim: usize,
    max_order: usize,
    entries: BTreeMap<Vec<usize>, Arc<Expr>>,
}

impl DerivativeTable {
    pub const MAX_ORDER: usize = 4;

    /// Builds the table of `e` over `dim` coordinates. `max_order` is clamped
    /// to [`Self::MAX_ORDER`].
    pub fn new(e: &Arc<Expr>, dim: usize, max_order: usize) -> Self {
        let max_order = max_order.min(Self::MAX_ORDER);
        let mut entries = BTreeMap::new();
        entries.insert(Vec::new(), e.clone());
        let mut frontier = vec![Vec::<usize>::new()];
        for _ in 0..max_order {
            let mut next = Vec::new();
            for idx in &frontier {
                let base = entries[idx].clone();
                let lo = idx.last().copied().unwrap_or(0);
                for i in lo..dim {
                    let mut key = idx.clone();
                    key.push(i);
                    let d = differentiate(&base, i);
                    entries.insert(key.clone(), d);
                    next.push(key);
                }
            }
            frontier = next;
        }
        Self { dim, max_order, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Entry for the given derivative indices in any order.
    pub fn get(&self, indices: &[usize]) -> Option<&Arc<Expr>> {
        let mut key = indices.to_vec();
        key.sort_unstable();
        self.entries.get(&key)
    }

    /// Iterates `(sorted indices, expression)` in lexicographic key order.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], &Arc<Expr>)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{evaluate, parse_expr};

    fn d(text: &str, dim: usize, i: usize) -> Arc<Expr> {
        differentiate(&parse_expr(text, dim).unwrap(), i)
    }

    #[test]
    fn polynomial_rule() {
        let e = d("x1^2 + x2^2", 2, 0);
        assert_eq!(e.to_string(), "2*x1");
    }

    #[test]
    fn chain_rule() {
        let e = d("exp(2*x1)", 1, 0);
        assert_eq!(e.to_string(), "exp(2*x1)*2");
        assert_eq!(evaluate(&e, &[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn independence_gives_zero_node() {
        assert!(d("x1^2", 2, 1).is_zero());
        assert!(d("5", 2, 0).is_zero());
    }

    #[test]
    fn table_of_bilinear() {
        let t = DerivativeTable::new(&parse_expr("x1*x2", 2).unwrap(), 2, 2);
        assert_eq!(t.get(&[0, 1]).unwrap().as_const(), Some(1.0));
        assert_eq!(t.get(&[1, 0]).unwrap().as_const(), Some(1.0));
        assert!(t.get(&[0, 0]).unwrap().is_zero());
        // 1 + 2 + 3 entries for orders 0, 1, 2
        assert_eq!(t.len(), 6);
    }

    #[test]
    fn table_of_constant() {
        let t = DerivativeTable::new(&parse_expr("5", 3).unwrap(), 3, 4);
        for (idx, e) in t.iter() {
            if idx.is_empty() {
                assert_eq!(e.as_const(), Some(5.0));
            } else {
                assert!(e.is_zero(), "{idx:?}");
            }
        }
        // C(3 + 4, 4) multi-indices of order <= 4
        assert_eq!(t.len(), 35);
    }

    #[test]
    fn table_of_exponential_fixed_point() {
        let t = DerivativeTable::new(&parse_expr("exp(x1)", 2).unwrap(), 2, 4);
        for k in 1..=4 {
            let idx = vec![0; k];
            let v = evaluate(t.get(&idx).unwrap(), &[0.3, 0.0]).unwrap();
            assert!((v - 0.3f64.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn special_function_derivatives() {
        let p = [0.4];
        let cases = [
            ("tan(x1)", 1.0 / 0.4f64.cos().powi(2)),
            ("tanh(x1)", 1.0 - 0.4f64.tanh().powi(2)),
            ("sqrt(x1)", 0.5 / 0.4f64.sqrt()),
            ("ln(x1)", 1.0 / 0.4),
            ("cosh(x1)", 0.4f64.sinh()),
            ("1/x1", -1.0 / 0.16),
        ];
        for (text, expected) in cases {
            let v = evaluate(&d(text, 1, 0), &p).unwrap();
            assert!((v - expected).abs() < 1e-12, "{text}: {v} vs {expected}");
        }
    }
}
