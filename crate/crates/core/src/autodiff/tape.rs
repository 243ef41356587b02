use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::{AdError, Real};

/// Sentinel parent index for unary nodes and leaves.
const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    b: u32,
    da: f64,
    db: f64,
}

/// First non-finite value observed on the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Poison {
    pub node: usize,
    pub op: &'static str,
    pub term: &'static str,
}

struct TapeInner {
    nodes: Vec<Node>,
    active: bool,
    term: &'static str,
    poison: Option<Poison>,
}

thread_local! {
    static TAPE: RefCell<TapeInner> = const {
        RefCell::new(TapeInner {
            nodes: Vec::new(),
            active: false,
            term: "",
            poison: None,
        })
    };
}

#[inline]
fn push(val: f64, a: u32, da: f64, b: u32, db: f64, op: &'static str) -> Var {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let idx = t.nodes.len();
        debug_assert!(t.active, "Var arithmetic outside a GradientContext");
        if !val.is_finite() && t.poison.is_none() {
            let term = t.term;
            t.poison = Some(Poison {
                node: idx,
                op,
                term,
            });
        }
        t.nodes.push(Node { a, b, da, db });
        Var {
            idx: idx as u32,
            val,
        }
    })
}

/// Reverse-mode scalar recorded on the thread-local tape.
///
/// Only valid while the [`GradientContext`] that created it is alive.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    idx: u32,
    val: f64,
}

impl Var {
    #[inline]
    fn unary(self, val: f64, d: f64, op: &'static str) -> Var {
        push(val, self.idx, d, NONE, 0.0, op)
    }

    pub fn index(&self) -> usize {
        self.idx as usize
    }
}

/// One differentiation session on the current thread.
///
/// The tape is cleared when the context is created and again when it is
/// dropped, so memory stays bounded across repeated loss evaluations.
/// Only one context may be live per thread; nested differentiation is done by
/// running [`Dual`](super::Dual) numbers over `Var`, not by nesting tapes.
pub struct GradientContext {
    _not_send: std::marker::PhantomData<*const ()>,
}

impl GradientContext {
    pub fn new() -> Self {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            assert!(
                !t.active,
                "a GradientContext is already active on this thread"
            );
            t.nodes.clear();
            t.active = true;
            t.term = "";
            t.poison = None;
        });
        Self {
            _not_send: std::marker::PhantomData,
        }
    }

    pub fn var(&self, v: f64) -> Var {
        push(v, NONE, 0.0, NONE, 0.0, "input")
    }

    pub fn vars(&self, xs: &[f64]) -> Vec<Var> {
        xs.iter().map(|&x| self.var(x)).collect()
    }

    /// Label subsequent operations; reported if a non-finite value appears.
    pub fn set_term(&self, term: &'static str) {
        TAPE.with(|t| t.borrow_mut().term = term);
    }

    pub fn poison(&self) -> Option<Poison> {
        TAPE.with(|t| t.borrow().poison.clone())
    }

    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().nodes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of `out` with respect to each of `wrt`.
    pub fn gradient(&self, out: Var, wrt: &[Var]) -> Result<Vec<f64>, AdError> {
        if let Some(p) = self.poison() {
            return Err(AdError::Poisoned {
                term: p.term.to_string(),
                op: p.op,
            });
        }
        let adj = TAPE.with(|t| {
            let t = t.borrow();
            let n = out.idx as usize + 1;
            let mut adj = vec![0.0; n];
            adj[n - 1] = 1.0;
            for i in (0..n).rev() {
                let g = adj[i];
                if g == 0.0 {
                    continue;
                }
                let node = t.nodes[i];
                if node.a != NONE {
                    adj[node.a as usize] += g * node.da;
                }
                if node.b != NONE {
                    adj[node.b as usize] += g * node.db;
                }
            }
            adj
        });
        Ok(wrt
            .iter()
            .map(|v| adj.get(v.idx as usize).copied().unwrap_or(0.0))
            .collect())
    }
}

impl Default for GradientContext {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for GradientContext {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.nodes.clear();
            t.active = false;
            t.poison = None;
        });
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: Var) -> Var {
        push(self.val + rhs.val, self.idx, 1.0, rhs.idx, 1.0, "add")
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: Var) -> Var {
        push(self.val - rhs.val, self.idx, 1.0, rhs.idx, -1.0, "sub")
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: Var) -> Var {
        push(self.val * rhs.val, self.idx, rhs.val, rhs.idx, self.val, "mul")
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: Var) -> Var {
        let q = self.val / rhs.val;
        push(q, self.idx, 1.0 / rhs.val, rhs.idx, -q / rhs.val, "div")
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0, "neg")
    }
}

impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: f64) -> Var {
        self.unary(self.val + rhs, 1.0, "add")
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: f64) -> Var {
        self.unary(self.val - rhs, 1.0, "sub")
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: f64) -> Var {
        self.unary(self.val * rhs, rhs, "mul")
    }
}

impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: f64) -> Var {
        self.unary(self.val / rhs, 1.0 / rhs, "div")
    }
}

impl AddAssign for Var {
    #[inline]
    fn add_assign(&mut self, rhs: Var) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var {
    #[inline]
    fn sub_assign(&mut self, rhs: Var) {
        *self = *self - rhs;
    }
}

impl MulAssign for Var {
    #[inline]
    fn mul_assign(&mut self, rhs: Var) {
        *self = *self * rhs;
    }
}

impl Real for Var {
    #[inline]
    fn cst(v: f64) -> Self {
        push(v, NONE, 0.0, NONE, 0.0, "const")
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e, "exp")
    }
    #[inline]
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val, "ln")
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t, "tanh")
    }
    #[inline]
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos(), "sin")
    }
    #[inline]
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin(), "cos")
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s, "sqrt")
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        self.unary(
            self.val.powf(p),
            p * self.val.powf(p - 1.0),
            "powf",
        )
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(1.0);
        }
        self.unary(
            self.val.powi(n),
            n as f64 * self.val.powi(n - 1),
            "powi",
        )
    }
}
