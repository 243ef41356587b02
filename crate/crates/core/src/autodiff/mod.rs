//! Exact derivatives of scalar programs.
//!
//! Two mechanisms compose here. [`Dual`] is forward mode with a fixed number
//! of tangent directions and nests to any order; [`Var`] records a reverse
//! tape. Spatial derivatives of network outputs are taken with duals, and
//! weight gradients of losses built from them with the tape running
//! underneath (`Dual<Dual<Var, _>, _>`).

mod dual;
mod real;
mod tape;

pub use dual::Dual;
pub use real::Real;
pub use tape::{GradientContext, Poison, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("non-finite value produced by `{op}` in term `{term}`")]
    Poisoned { term: String, op: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A scalar function that can be evaluated over any [`Real`].
pub trait ScalarFunction {
    fn eval<T: Real>(&self, x: &[T]) -> T;
}

/// Gradient of `f` at `x` by one reverse sweep.
pub fn grad<F>(f: F, x: &[f64]) -> Result<Vec<f64>, AdError>
where
    F: FnOnce(&[Var]) -> Var,
{
    let ctx = GradientContext::new();
    let xs = ctx.vars(x);
    let out = f(&xs);
    ctx.gradient(out, &xs)
}

/// Full Hessian by forward-over-reverse: one tangent sweep per row.
pub fn hessian<F: ScalarFunction>(f: &F, x: &[f64]) -> Result<Vec<Vec<f64>>, AdError> {
    let n = x.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let ctx = GradientContext::new();
        let xs = ctx.vars(x);
        let lifted: Vec<Dual<Var, 1>> = xs
            .iter()
            .enumerate()
            .map(|(j, &v)| Dual::new(v, [Var::cst(if i == j { 1.0 } else { 0.0 })]))
            .collect();
        let out = f.eval(&lifted);
        rows.push(ctx.gradient(out.eps[0], &xs)?);
    }
    Ok(rows)
}

/// Value and gradient of a loss over weights `w`.
///
/// The closure receives the live context so it can label terms with
/// [`GradientContext::set_term`]; it is free to take spatial derivatives
/// internally with [`Dual`] numbers built over the weight variables.
pub fn grad_of_derived_loss<F>(loss: F, w: &[f64]) -> Result<(f64, Vec<f64>), AdError>
where
    F: FnOnce(&GradientContext, &[Var]) -> Var,
{
    let ctx = GradientContext::new();
    let ws = ctx.vars(w);
    let out = loss(&ctx, &ws);
    let g = ctx.gradient(out, &ws)?;
    Ok((out.value(), g))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Bilinear;
    impl ScalarFunction for Bilinear {
        fn eval<T: Real>(&self, x: &[T]) -> T {
            x[0] * x[1]
        }
    }

    struct ExpFirst;
    impl ScalarFunction for ExpFirst {
        fn eval<T: Real>(&self, x: &[T]) -> T {
            x[0].exp()
        }
    }

    #[test]
    fn grad_of_square() {
        let g = grad(|x| x[0] * x[0], &[3.0]).unwrap();
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn grad_of_tanh_at_zero() {
        let g = grad(|x| x[0].tanh(), &[0.0]).unwrap();
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn hessian_of_bilinear() {
        let h = hessian(&Bilinear, &[0.3, -1.2]).unwrap();
        assert_eq!(h, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn hessian_of_exp() {
        let h = hessian(&ExpFirst, &[0.0]).unwrap();
        assert_eq!(h, vec![vec![1.0]]);
    }

    #[test]
    fn squared_norm_gradient() {
        let w = [0.5, -2.0, 3.25];
        let (v, g) = grad_of_derived_loss(
            |_, w| w.iter().fold(Var::cst(0.0), |acc, &x| acc + x * x),
            &w,
        )
        .unwrap();
        assert_eq!(v, 0.25 + 4.0 + 3.25 * 3.25);
        assert_eq!(g, vec![1.0, -4.0, 6.5]);
    }

    #[test]
    fn poisoned_term_is_reported() {
        let err = grad_of_derived_loss(
            |ctx, w| {
                ctx.set_term("pde");
                (w[0] - 1.0).ln()
            },
            &[0.5],
        )
        .unwrap_err();
        assert_eq!(
            err,
            AdError::Poisoned {
                term: "pde".into(),
                op: "ln"
            }
        );
    }

    #[test]
    fn tape_is_cleared_between_contexts() {
        {
            let ctx = GradientContext::new();
            let x = ctx.var(1.0);
            let _ = x * x + x;
            assert!(ctx.len() > 1);
        }
        let ctx = GradientContext::new();
        assert!(ctx.is_empty());
    }
}
