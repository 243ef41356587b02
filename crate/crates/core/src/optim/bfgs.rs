use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BfgsConfig {
    pub c1: f64,
    pub c2: f64,
    pub grad_tol: f64,
    /// Relative decrease below which an iteration counts as stalled.
    pub f_tol: f64,
    pub max_line_search: usize,
    /// Problems with more parameters switch to the limited-memory form.
    pub dense_limit: usize,
    pub history: usize,
    pub curvature_eps: f64,
    /// After a Wolfe point is found, probe the cubic-interpolated line
    /// minimum once and keep it if it is better.
    pub refine: bool,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-8,
            f_tol: 1e-15,
            max_line_search: 30,
            dense_limit: 2000,
            history: 20,
            curvature_eps: 1e-12,
            refine: true,
        }
    }
}

impl BfgsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.c1
            && self.c1 < self.c2
            && self.c2 < 1.0
            && self.grad_tol > 0.0
            && self.f_tol >= 0.0
            && self.max_line_search > 0
            && self.history > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid BFGS settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InverseHessian {
    /// Row-major n×n matrix; `None` until the first curvature pair sets a scale.
    Dense(Option<Vec<f64>>),
    Limited {
        s: VecDeque<Vec<f64>>,
        y: VecDeque<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfgsState {
    pub config: BfgsConfig,
    pub h: InverseHessian,
    pub f: f64,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub skipped_updates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Progress,
    Converged,
    /// No step satisfying the Wolfe conditions was found. Parameters hold
    /// the best point seen.
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub status: StepStatus,
    pub f: f64,
    pub alpha: f64,
    pub evaluations: usize,
}

impl StepReport {
    pub fn converged(&self) -> bool {
        self.status == StepStatus::Converged
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check_finite(f: f64, g: &[f64]) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::NonFinite {
            term: "loss",
            index: 0,
        });
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            term: "gradient",
            index: i,
        });
    }
    Ok(())
}

impl BfgsState {
    /// Evaluates the oracle once at `x` to seed the state.
    pub fn new<O>(config: BfgsConfig, x: &[f64], oracle: &mut O) -> Result<Self>
    where
        O: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        config.validate()?;
        let (f, g) = oracle(x)?;
        if g.len() != x.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: g.len(),
            });
        }
        check_finite(f, &g)?;
        let h = if x.len() <= config.dense_limit {
            InverseHessian::Dense(None)
        } else {
            InverseHessian::Limited {
                s: VecDeque::new(),
                y: VecDeque::new(),
            }
        };
        Ok(Self {
            config,
            h,
            f,
            g,
            iterations: 0,
            evaluations: 1,
            skipped_updates: 0,
        })
    }

    fn is_fresh(&self) -> bool {
        match &self.h {
            InverseHessian::Dense(m) => m.is_none(),
            InverseHessian::Limited { s, .. } => s.is_empty(),
        }
    }

    fn reset(&mut self) {
        self.h = match self.h {
            InverseHessian::Dense(_) => InverseHessian::Dense(None),
            InverseHessian::Limited { .. } => InverseHessian::Limited {
                s: VecDeque::new(),
                y: VecDeque::new(),
            },
        };
    }

    fn direction(&self) -> Vec<f64> {
        let g = &self.g;
        let n = g.len();
        match &self.h {
            InverseHessian::Dense(None) => g.iter().map(|v| -v).collect(),
            InverseHessian::Dense(Some(h)) => (0..n)
                .map(|i| -dot(&h[i * n..(i + 1) * n], g))
                .collect(),
            InverseHessian::Limited { s, y } => {
                let mut q = g.clone();
                let k = s.len();
                let mut a = vec![0.0; k];
                let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&s[i], &y[i])).collect();
                for i in (0..k).rev() {
                    a[i] = rho[i] * dot(&s[i], &q);
                    for (qj, yj) in q.iter_mut().zip(&y[i]) {
                        *qj -= a[i] * yj;
                    }
                }
                if k > 0 {
                    let gamma = dot(&s[k - 1], &y[k - 1]) / dot(&y[k - 1], &y[k - 1]);
                    q.iter_mut().for_each(|v| *v *= gamma);
                }
                for i in 0..k {
                    let b = rho[i] * dot(&y[i], &q);
                    for (qj, sj) in q.iter_mut().zip(&s[i]) {
                        *qj += (a[i] - b) * sj;
                    }
                }
                q.iter_mut().for_each(|v| *v = -*v);
                q
            }
        }
    }

    fn update(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= self.config.curvature_eps {
            self.skipped_updates += 1;
            return;
        }
        let history = self.config.history;
        match &mut self.h {
            InverseHessian::Dense(slot) => {
                let n = s.len();
                let h = slot.get_or_insert_with(|| {
                    let gamma = sy / dot(&y, &y);
                    let mut m = vec![0.0; n * n];
                    for i in 0..n {
                        m[i * n + i] = gamma;
                    }
                    m
                });
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
                let yhy = dot(&y, &hy);
                let c = rho * rho * yhy + rho;
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            }
            InverseHessian::Limited { s: ss, y: ys } => {
                if ss.len() == history {
                    ss.pop_front();
                    ys.pop_front();
                }
                ss.push_back(s);
                ys.push_back(y);
            }
        }
    }

    /// One quasi-Newton iteration. Oracle errors during the line search
    /// (for instance an inverted element) are treated as an infinite loss.
    pub fn step<O>(&mut self, x: &mut [f64], oracle: &mut O) -> Result<StepReport>
    where
        O: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let report = |status, f, alpha, evaluations| StepReport {
            status,
            f,
            alpha,
            evaluations,
        };
        if inf_norm(&self.g) < self.config.grad_tol {
            return Ok(report(StepStatus::Converged, self.f, 0.0, 0));
        }
        let mut evals = 0;
        let mut d = self.direction();
        let mut dg = dot(&d, &self.g);
        if dg >= 0.0 {
            self.reset();
            d = self.direction();
            dg = dot(&d, &self.g);
        }
        let fresh = self.is_fresh();
        let alpha0 = if fresh {
            (1.0 / inf_norm(&self.g)).min(1.0)
        } else {
            1.0
        };
        let ls = line_search(self.config, x, self.f, dg, &d, alpha0, oracle, &mut evals);
        self.evaluations += evals;
        match ls {
            Some((alpha, f_new, g_new)) => {
                let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
                for (xi, si) in x.iter_mut().zip(&s) {
                    *xi += si;
                }
                let y: Vec<f64> = g_new.iter().zip(&self.g).map(|(a, b)| a - b).collect();
                let f_old = self.f;
                self.f = f_new;
                self.g = g_new;
                self.update(s, y);
                self.iterations += 1;
                let rel = (f_old - f_new) / f_old.abs().max(f_new.abs()).max(1.0);
                let status = if inf_norm(&self.g) < self.config.grad_tol || rel < self.config.f_tol
                {
                    StepStatus::Converged
                } else {
                    StepStatus::Progress
                };
                Ok(report(status, f_new, alpha, evals))
            }
            None if !fresh => {
                // Stale curvature information; retry once along −g.
                self.reset();
                let r = self.step(x, oracle)?;
                Ok(StepReport {
                    evaluations: r.evaluations + evals,
                    ..r
                })
            }
            None => {
                self.iterations += 1;
                Ok(report(StepStatus::LineSearchFailed, self.f, 0.0, evals))
            }
        }
    }

    /// Iterates until convergence, line-search failure, or `max_iter`.
    pub fn minimize<O>(
        &mut self,
        x: &mut [f64],
        oracle: &mut O,
        max_iter: usize,
    ) -> Result<StepReport>
    where
        O: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let mut last = StepReport {
            status: StepStatus::Progress,
            f: self.f,
            alpha: 0.0,
            evaluations: 0,
        };
        for _ in 0..max_iter {
            last = self.step(x, oracle)?;
            if last.status != StepStatus::Progress {
                break;
            }
        }
        Ok(last)
    }
}

struct Probe {
    alpha: f64,
    f: f64,
    dg: f64,
    g: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn line_search<O>(
    cfg: BfgsConfig,
    x: &[f64],
    f0: f64,
    dg0: f64,
    d: &[f64],
    alpha0: f64,
    oracle: &mut O,
    evals: &mut usize,
) -> Option<(f64, f64, Vec<f64>)>
where
    O: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut trial = vec![0.0; x.len()];
    let mut probe = |alpha: f64| -> Probe {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(d) {
            *t = xi + alpha * di;
        }
        *evals += 1;
        match oracle(&trial) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Probe {
                alpha,
                f,
                dg: dot(&g, d),
                g,
            },
            _ => Probe {
                alpha,
                f: f64::INFINITY,
                dg: f64::NAN,
                g: Vec::new(),
            },
        }
    };
    let armijo = |p: &Probe| p.f <= f0 + cfg.c1 * p.alpha * dg0;
    let curvature = |p: &Probe| p.dg.abs() <= -cfg.c2 * dg0;

    let origin = Probe {
        alpha: 0.0,
        f: f0,
        dg: dg0,
        g: Vec::new(),
    };
    let accept = |p: Probe, probe: &mut dyn FnMut(f64) -> Probe| {
        if cfg.refine && p.dg.abs() > 1e-3 * dg0.abs() {
            let t = interpolate(&origin, &p);
            if t.is_finite() && t > 0.0 && (t - p.alpha).abs() > 1e-6 * p.alpha {
                let q = probe(t);
                if q.f < p.f && armijo(&q) && curvature(&q) {
                    return (q.alpha, q.f, q.g);
                }
            }
        }
        (p.alpha, p.f, p.g)
    };
    let mut lo = Probe {
        alpha: 0.0,
        f: f0,
        dg: dg0,
        g: Vec::new(),
    };
    let mut alpha = alpha0;
    let mut budget = cfg.max_line_search;
    // Bracketing phase.
    let mut hi = loop {
        if budget == 0 {
            return None;
        }
        budget -= 1;
        let p = probe(alpha);
        if !p.f.is_finite() {
            // Outside the admissible region: shrink toward the last good point.
            alpha = lo.alpha + 0.25 * (alpha - lo.alpha);
            if alpha - lo.alpha < 1e-20 {
                break None;
            }
            continue;
        }
        if !armijo(&p) || (lo.alpha > 0.0 && p.f >= lo.f) {
            break Some(p);
        }
        if curvature(&p) {
            return Some(accept(p, &mut probe));
        }
        if p.dg >= 0.0 {
            let old = std::mem::replace(&mut lo, p);
            break Some(old);
        }
        alpha = 2.0 * p.alpha;
        lo = p;
    }?;
    // Zoom phase between lo (satisfies Armijo, lowest so far) and hi.
    while budget > 0 {
        budget -= 1;
        let (a, b) = (lo.alpha, hi.alpha);
        let width = (b - a).abs();
        if width < 1e-16 * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
        let mut t = interpolate(&lo, &hi);
        let (min, max) = (a.min(b), a.max(b));
        let margin = 0.1 * width;
        if !(t > min + margin && t < max - margin) {
            t = 0.5 * (a + b);
        }
        let p = probe(t);
        if !p.f.is_finite() || !armijo(&p) || p.f >= lo.f {
            hi = p;
            continue;
        }
        if curvature(&p) {
            return Some(accept(p, &mut probe));
        }
        if p.dg * (hi.alpha - lo.alpha) >= 0.0 {
            hi = std::mem::replace(&mut lo, p);
        } else {
            lo = p;
        }
    }
    // Best Armijo point, even without the curvature condition.
    if lo.alpha > 0.0 {
        Some((lo.alpha, lo.f, lo.g))
    } else {
        None
    }
}

/// Cubic interpolation through two probes with slopes, falling back to a
/// quadratic when the far end has no usable slope.
fn interpolate(a: &Probe, b: &Probe) -> f64 {
    let (x0, x1) = (a.alpha, b.alpha);
    let h = x1 - x0;
    if b.f.is_finite() && b.dg.is_finite() {
        let d1 = a.dg + b.dg - 3.0 * (a.f - b.f) / (x0 - x1);
        let disc = d1 * d1 - a.dg * b.dg;
        if disc >= 0.0 {
            let d2 = h.signum() * disc.sqrt();
            let t = x1 - h * (b.dg + d2 - d1) / (b.dg - a.dg + 2.0 * d2);
            if t.is_finite() {
                return t;
            }
        }
    }
    if b.f.is_finite() {
        let denom = 2.0 * (b.f - a.f - a.dg * h);
        if denom > 0.0 {
            return x0 - a.dg * h * h / denom;
        }
    }
    x0 + 0.5 * h
}
