use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use super::{apply_pow, BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("point has {got} coordinates, expression needs at least {needed}")]
    Dimension { needed: usize, got: usize },
    #[error("domain error in `{subexpr}` at point {point:?}")]
    Domain { subexpr: String, point: Vec<f64> },
}

fn domain_error(node: &Expr, point: &[f64]) -> EvalError {
    let mut subexpr = node.to_string();
    if subexpr.len() > 120 {
        let cut = (0..=117).rev().find(|&i| subexpr.is_char_boundary(i)).unwrap_or(0);
        subexpr.truncate(cut);
        subexpr.push_str("...");
    }
    EvalError::Domain { subexpr, point: point.to_vec() }
}

/// Evaluates `e` at `p` in double precision.
pub fn evaluate(e: &Expr, p: &[f64]) -> Result<f64, EvalError> {
    let needed = e.min_dim();
    if p.len() < needed {
        return Err(EvalError::Dimension { needed, got: p.len() });
    }
    eval_rec(e, p)
}

fn eval_rec(e: &Expr, p: &[f64]) -> Result<f64, EvalError> {
    let v = match e {
        Expr::Const(c) => Some(*c),
        Expr::Var(i) => Some(p[*i]),
        Expr::Unary(op, a) => op.apply(eval_rec(a, p)?),
        Expr::Binary(op, a, b) => op.apply(eval_rec(a, p)?, eval_rec(b, p)?),
        Expr::Pow(a, k) => apply_pow(eval_rec(a, p)?, *k),
    };
    v.ok_or_else(|| domain_error(e, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Const(u64),
    Var(usize),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
    Pow(usize, u64),
}

/// A batch of expressions compiled to a straight-line program.
///
/// Structurally identical subtrees across all roots are merged, which keeps
/// evaluation of large derivative tables linear in the number of distinct
/// nodes rather than in the (much larger) tree size.
#[derive(Debug, Clone)]
pub struct Tape {
    dim: usize,
    nodes: Vec<Node>,
    // source node for domain-error reporting
    sources: Vec<Arc<Expr>>,
    roots: Vec<usize>,
}

impl Tape {
    pub fn compile<'a, I>(dim: usize, roots: I) -> Self
    where
        I: IntoIterator<Item = &'a Arc<Expr>>,
    {
        let mut tape = Tape { dim, nodes: Vec::new(), sources: Vec::new(), roots: Vec::new() };
        let mut by_ptr: HashMap<*const Expr, usize> = HashMap::new();
        let mut by_node: HashMap<Node, usize> = HashMap::new();
        let held: Vec<Arc<Expr>> = roots.into_iter().cloned().collect();
        for r in &held {
            let slot = tape.intern(r, &mut by_ptr, &mut by_node);
            tape.roots.push(slot);
        }
        tape
    }

    fn intern(
        &mut self,
        e: &Arc<Expr>,
        by_ptr: &mut HashMap<*const Expr, usize>,
        by_node: &mut HashMap<Node, usize>,
    ) -> usize {
        if let Some(&s) = by_ptr.get(&Arc::as_ptr(e)) {
            return s;
        }
        let node = match &**e {
            Expr::Const(c) => Node::Const(c.to_bits()),
            Expr::Var(i) => Node::Var(*i),
            Expr::Unary(op, a) => Node::Unary(*op, self.intern(a, by_ptr, by_node)),
            Expr::Binary(op, a, b) => {
                let a = self.intern(a, by_ptr, by_node);
                let b = self.intern(b, by_ptr, by_node);
                Node::Binary(*op, a, b)
            }
            Expr::Pow(a, k) => Node::Pow(self.intern(a, by_ptr, by_node), k.to_bits()),
        };
        let slot = *by_node.entry(node).or_insert_with(|| {
            self.nodes.push(node);
            self.sources.push(e.clone());
            self.nodes.len() - 1
        });
        by_ptr.insert(Arc::as_ptr(e), slot);
        slot
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_roots(&self) -> usize {
        self.roots.len()
    }

    /// Number of distinct nodes after merging.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of all roots at `p`, in compile order.
    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        if p.len() < self.dim {
            return Err(EvalError::Dimension { needed: self.dim, got: p.len() });
        }
        let mut slots = Vec::with_capacity(self.nodes.len());
        for (k, node) in self.nodes.iter().enumerate() {
            let v = match *node {
                Node::Const(bits) => Some(f64::from_bits(bits)),
                Node::Var(i) => p.get(i).copied(),
                Node::Unary(op, a) => op.apply(slots[a]),
                Node::Binary(op, a, b) => op.apply(slots[a], slots[b]),
                Node::Pow(a, bits) => apply_pow(slots[a], f64::from_bits(bits)),
            };
            match v {
                Some(v) => slots.push(v),
                None => return Err(domain_error(&self.sources[k], p)),
            }
        }
        Ok(self.roots.iter().map(|&r| slots[r]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse_expr, DerivativeTable};

    #[test]
    fn arithmetic() {
        let e = parse_expr("x1^2 + x2^2", 2).unwrap();
        assert_eq!(evaluate(&e, &[3.0, 4.0]).unwrap(), 25.0);
        let e = parse_expr("exp(2*x1)", 1).unwrap();
        assert_eq!(evaluate(&e, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse_expr("1 + sqrt(x1)", 1).unwrap();
        match evaluate(&e, &[-1.0]).unwrap_err() {
            EvalError::Domain { subexpr, point } => {
                assert_eq!(subexpr, "sqrt(x1)");
                assert_eq!(point, vec![-1.0]);
            }
            other => panic!("{other:?}"),
        }
        assert!(evaluate(&parse_expr("1/x1", 1).unwrap(), &[0.0]).is_err());
        assert!(evaluate(&parse_expr("ln(x1)", 1).unwrap(), &[0.0]).is_err());
        assert!(evaluate(&parse_expr("x1^0.5", 1).unwrap(), &[-2.0]).is_err());
        assert!(matches!(
            evaluate(&parse_expr("x2", 2).unwrap(), &[1.0]).unwrap_err(),
            EvalError::Dimension { needed: 2, got: 1 }
        ));
    }

    #[test]
    fn tape_matches_tree_evaluation_and_merges_nodes() {
        let e = parse_expr("4/(1 + x1^2 + x2^2)^2 * exp(sin(x1*x2))", 2).unwrap();
        let table = DerivativeTable::new(&e, 2, 4);
        let roots: Vec<_> = table.iter().map(|(_, e)| e.clone()).collect();
        let tape = Tape::compile(2, &roots);
        let tree_nodes: usize = roots.iter().map(|r| r.tree_size()).sum();
        assert!(tape.len() < tree_nodes / 4, "{} vs {}", tape.len(), tree_nodes);
        let p = [0.3, -0.7];
        let vals = tape.eval(&p).unwrap();
        for (r, v) in roots.iter().zip(vals) {
            let direct = evaluate(r, &p).unwrap();
            assert!((direct - v).abs() <= 1e-13 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn tape_reports_domain_errors() {
        let e = parse_expr("ln(x1)", 1).unwrap();
        let tape = Tape::compile(1, [&e]);
        assert!(matches!(tape.eval(&[-1.0]), Err(EvalError::Domain { .. })));
    }
}
