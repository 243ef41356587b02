//! Loss terms, their gradients, and error metrics.
//!
//! The trainable vector θ is laid out as `[w_u | w_μ | scalars]` (see
//! [`Layout`]). Each term is a per-point sum reduced over fixed-size chunks
//! in a fixed order, so values and gradients do not depend on the number of
//! worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Real};
use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::mechanics::{self, MaterialModel, Params, MAX_PARAMS};
use crate::network::{self, hess_slot, JetCache, MlpSpec};
use crate::sampling::{Face, FacePoint};
use crate::tensor::{self, Mat3};

/// Points per reduction chunk.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Obs,
    ObsStrain,
    Pde,
    BcNeumann,
    BcRobin,
    Prior,
    Tikhonov,
}

impl Term {
    pub const ALL: [Term; 7] = [
        Term::Obs,
        Term::ObsStrain,
        Term::Pde,
        Term::BcNeumann,
        Term::BcRobin,
        Term::Prior,
        Term::Tikhonov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Obs => "obs",
            Term::ObsStrain => "obs_strain",
            Term::Pde => "pde",
            Term::BcNeumann => "bc_neumann",
            Term::BcRobin => "bc_robin",
            Term::Prior => "prior",
            Term::Tikhonov => "tikhonov",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub obs: f64,
    #[serde(default)]
    pub obs_strain: f64,
    pub pde: f64,
    pub bc_neumann: f64,
    pub bc_robin: f64,
    #[serde(default)]
    pub prior: f64,
    #[serde(default)]
    pub tikhonov: f64,
}

impl LossWeights {
    pub fn get(&self, t: Term) -> f64 {
        match t {
            Term::Obs => self.obs,
            Term::ObsStrain => self.obs_strain,
            Term::Pde => self.pde,
            Term::BcNeumann => self.bc_neumann,
            Term::BcRobin => self.bc_robin,
            Term::Prior => self.prior,
            Term::Tikhonov => self.tikhonov,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            obs: self.obs * c,
            obs_strain: self.obs_strain * c,
            pde: self.pde * c,
            bc_neumann: self.bc_neumann * c,
            bc_robin: self.bc_robin * c,
            prior: self.prior * c,
            tikhonov: self.tikhonov * c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in Term::ALL {
            let v = self.get(t);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("loss weight `{}` must be finite and >= 0", t.name())));
            }
        }
        Ok(())
    }
}

/// Where a material parameter's value comes from at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSource {
    Fixed(f64),
    /// Index into the trainable scalars.
    Scalar(usize),
    /// Output of the stiffness network (parameter 0 only).
    Field,
    /// `left` scalar for x < split, `right` scalar otherwise.
    Regions { split: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PdeForm {
    /// ‖∇·P + f‖²
    #[default]
    Divergence,
    /// ‖P‖², the form printed for the PDE loss.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdePoint {
    pub x: [f64; 3],
    pub body_force: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcPoint {
    pub x: [f64; 3],
    pub normal: [f64; 3],
    pub face: Face,
    /// Boundary data: the residual is `traction − source`.
    pub source: [f64; 3],
}

impl BcPoint {
    pub fn homogeneous(p: &FacePoint) -> Self {
        Self {
            x: p.x,
            normal: p.normal,
            face: p.face,
            source: [0.0; 3],
        }
    }
}

/// One split (train or test) of every point set.
#[derive(Debug, Clone)]
pub struct PointSets {
    pub obs: ObservationSet,
    pub pde: Vec<PdePoint>,
    /// Grouped per face; each group is normalized by its own size.
    pub neumann: Vec<Vec<BcPoint>>,
    pub robin: Vec<Vec<BcPoint>>,
}

/// Offsets of the three blocks of θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_u: usize,
    pub n_mu: usize,
    pub n_scalars: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.n_u + self.n_mu + self.n_scalars
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn mu(&self) -> std::ops::Range<usize> {
        self.n_u..self.n_u + self.n_mu
    }
    pub fn scalars(&self) -> std::ops::Range<usize> {
        self.n_u + self.n_mu..self.len()
    }
}

/// Everything that defines the loss apart from the point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel {
    pub material: MaterialModel,
    pub sources: Vec<ParamSource>,
    pub u_spec: MlpSpec,
    pub mu_spec: Option<MlpSpec>,
    /// Map the stiffness network output through softplus.
    pub softplus: bool,
    pub pressure: f64,
    pub robin_k: f64,
    pub pde_form: PdeForm,
    pub weights: LossWeights,
    pub mu_prior: Option<f64>,
    pub n_scalars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub term: Term,
    pub raw: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: Vec<TermValue>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, t: Term) -> Option<&TermValue> {
        self.terms.iter().find(|v| v.term == t)
    }
}

/// Result of one evaluation: the breakdown of every computed term, the
/// objective (weighted sum over the requested terms) and its gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub objective: f64,
    pub grad: Vec<f64>,
}

#[derive(Default)]
struct Workspace {
    u1: JetCache<1>,
    u4: JetCache<4>,
    u10: JetCache<10>,
    m1: JetCache<1>,
    m4: JetCache<4>,
}

fn softplus(v: f64) -> (f64, f64) {
    // value and derivative
    let s = 1.0 / (1.0 + (-v).exp());
    let val = if v > 30.0 { v } else { v.exp().ln_1p() };
    (val, s)
}

impl PinnModel {
    pub fn layout(&self) -> Layout {
        Layout {
            n_u: self.u_spec.param_count(),
            n_mu: self.mu_spec.as_ref().map(|s| s.param_count()).unwrap_or(0),
            n_scalars: self.n_scalars,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.u_spec.validate()?;
        if self.u_spec.input_dim != 3 || self.u_spec.output_dim != 3 {
            return Err(Error::Config("displacement network must map R^3 to R^3".into()));
        }
        self.weights.validate()?;
        if self.sources.len() != self.material.param_count() {
            return Err(Error::Dimension {
                expected: self.material.param_count(),
                got: self.sources.len(),
            });
        }
        let mut field = false;
        for (q, s) in self.sources.iter().enumerate() {
            match *s {
                ParamSource::Fixed(v) if !(v > 0.0) => {
                    return Err(Error::Config(format!("fixed parameter {q} must be positive")))
                }
                ParamSource::Scalar(i) if i >= self.n_scalars => {
                    return Err(Error::Config(format!("scalar index {i} out of range")))
                }
                ParamSource::Regions { left, right, .. }
                    if left >= self.n_scalars || right >= self.n_scalars =>
                {
                    return Err(Error::Config("region scalar index out of range".into()))
                }
                ParamSource::Field if q != 0 => {
                    return Err(Error::Config("only parameter 0 may be a field".into()))
                }
                ParamSource::Field => field = true,
                _ => {}
            }
        }
        match (&self.mu_spec, field) {
            (Some(s), true) => {
                s.validate()?;
                if s.output_dim != 1 || s.input_dim != 3 {
                    return Err(Error::Config("stiffness network must map R^3 to R".into()));
                }
            }
            (None, false) => {}
            _ => {
                return Err(Error::Config(
                    "a stiffness network is required exactly when parameter 0 is a field".into(),
                ))
            }
        }
        if self.weights.prior > 0.0 && (self.mu_prior.is_none() || !field) {
            return Err(Error::Config("the prior term needs field mode and mu_prior".into()));
        }
        Ok(())
    }

    pub fn field_mode(&self) -> bool {
        self.mu_spec.is_some()
    }

    /// Terms that have data in this model and these sets.
    pub fn applicable(&self, sets: &PointSets) -> Vec<Term> {
        Term::ALL
            .into_iter()
            .filter(|t| match t {
                Term::Obs => !sets.obs.is_empty(),
                Term::ObsStrain => sets.obs.strain.is_some() && self.weights.obs_strain > 0.0,
                Term::Pde => !sets.pde.is_empty(),
                Term::BcNeumann => sets.neumann.iter().any(|g| !g.is_empty()),
                Term::BcRobin => sets.robin.iter().any(|g| !g.is_empty()),
                Term::Prior => self.field_mode() && self.mu_prior.is_some() && !sets.pde.is_empty(),
                Term::Tikhonov => self.weights.tikhonov > 0.0,
            })
            .collect()
    }

    /// Stiffness network value and spatial gradient at x (after softplus).
    fn mu_field(&self, ws: &mut Workspace, theta: &[f64], x: &[f64; 3]) -> (f64, [f64; 3], f64, f64) {
        let l = self.layout();
        let spec = self.mu_spec.as_ref().expect("field mode");
        let j = ws.m4.forward(spec, &theta[l.mu()], x)[0];
        if self.softplus {
            let (v, s) = softplus(j[0]);
            let ds = s * (1.0 - s);
            (v, [s * j[1], s * j[2], s * j[3]], s, ds)
        } else {
            (j[0], [j[1], j[2], j[3]], 1.0, 0.0)
        }
    }

    fn params_at(
        &self,
        theta: &[f64],
        x: &[f64; 3],
        field: Option<(f64, [f64; 3])>,
    ) -> (Params<f64>, [[f64; 3]; MAX_PARAMS]) {
        let sc = &theta[self.layout().scalars()];
        let mut p = [0.0; MAX_PARAMS];
        let mut dp = [[0.0; 3]; MAX_PARAMS];
        for (q, s) in self.sources.iter().enumerate() {
            p[q] = match *s {
                ParamSource::Fixed(v) => v,
                ParamSource::Scalar(i) => sc[i],
                ParamSource::Regions { split, left, right } => sc[if x[0] < split { left } else { right }],
                ParamSource::Field => {
                    let (v, g) = field.expect("field value");
                    dp[q] = g;
                    v
                }
            };
        }
        (p, dp)
    }

    /// Route parameter adjoints to the scalar block; returns the adjoint
    /// of the field value and its gradient.
    fn scatter_params(
        &self,
        x: &[f64; 3],
        pbar: &Params<f64>,
        dpbar: &[[f64; 3]; MAX_PARAMS],
        grad: &mut [f64],
    ) -> (f64, [f64; 3]) {
        let off = self.layout().scalars().start;
        let mut field = (0.0, [0.0; 3]);
        for (q, s) in self.sources.iter().enumerate() {
            match *s {
                ParamSource::Fixed(_) => {}
                ParamSource::Scalar(i) => grad[off + i] += pbar[q],
                ParamSource::Regions { split, left, right } => {
                    grad[off + if x[0] < split { left } else { right }] += pbar[q]
                }
                ParamSource::Field => field = (pbar[q], dpbar[q]),
            }
        }
        field
    }

    /// Back-propagate field adjoints through softplus and the stiffness net.
    fn mu_backward(
        &self,
        ws: &mut Workspace,
        theta: &[f64],
        bar: (f64, [f64; 3]),
        chain: (f64, f64),
        grad: &mut [f64],
    ) {
        let l = self.layout();
        let spec = self.mu_spec.as_ref().expect("field mode");
        let raw = ws.m4.output()[0];
        let (s, ds) = chain;
        let (vb, gb) = bar;
        let mut out = [0.0; 4];
        out[0] = vb * s + ds * (gb[0] * raw[1] + gb[1] * raw[2] + gb[2] * raw[3]);
        for d in 0..3 {
            out[1 + d] = gb[d] * s;
        }
        ws.m4.backward(spec, &theta[l.mu()], &[out], &mut grad[l.mu()]);
    }

    fn point_params_and_field(
        &self,
        ws: &mut Workspace,
        theta: &[f64],
        x: &[f64; 3],
    ) -> (Params<f64>, [[f64; 3]; MAX_PARAMS], (f64, f64)) {
        if self.field_mode() {
            let (v, g, s, ds) = self.mu_field(ws, theta, x);
            let (p, dp) = self.params_at(theta, x, Some((v, g)));
            (p, dp, (s, ds))
        } else {
            let (p, dp) = self.params_at(theta, x, None);
            (p, dp, (1.0, 0.0))
        }
    }

    fn obs_point(&self, ws: &mut Workspace, theta: &[f64], i: usize, obs: &ObservationSet, grad: Option<&mut [f64]>) -> f64 {
        let l = self.layout();
        let y = ws.u1.forward(&self.u_spec, &theta[..l.n_u], &obs.points[i]);
        let r: [f64; 3] = std::array::from_fn(|k| y[k][0] - obs.u[i][k]);
        if let Some(g) = grad {
            let bar: Vec<[f64; 1]> = r.iter().map(|v| [2.0 * v]).collect();
            ws.u1.backward(&self.u_spec, &theta[..l.n_u], &bar, &mut g[..l.n_u]);
        }
        tensor::dot(&r, &r)
    }

    fn strain_point(&self, ws: &mut Workspace, theta: &[f64], i: usize, obs: &ObservationSet, grad: Option<&mut [f64]>) -> f64 {
        let l = self.layout();
        let e_obs = &obs.strain.as_ref().expect("strain checked")[i];
        let y = ws.u4.forward(&self.u_spec, &theta[..l.n_u], &obs.points[i]);
        let g: Mat3<f64> = std::array::from_fn(|k| std::array::from_fn(|c| y[k][1 + c]));
        let f = mechanics::deformation_gradient(&g);
        let d = tensor::sub(&mechanics::green_lagrange(&f), e_obs);
        if let Some(grad) = grad {
            let fd = tensor::matmul(&f, &d);
            let bar: Vec<[f64; 4]> = (0..3)
                .map(|k| [0.0, 2.0 * fd[k][0], 2.0 * fd[k][1], 2.0 * fd[k][2]])
                .collect();
            ws.u4.backward(&self.u_spec, &theta[..l.n_u], &bar, &mut grad[..l.n_u]);
        }
        tensor::frobenius_sq(&d)
    }

    fn pde_point(&self, ws: &mut Workspace, theta: &[f64], i: usize, pt: &PdePoint, grad: Option<&mut [f64]>) -> Result<f64> {
        let l = self.layout();
        let (params, dparams, chain) = self.point_params_and_field(ws, theta, &pt.x);
        match self.pde_form {
            PdeForm::Divergence => {
                let y = ws.u10.forward(&self.u_spec, &theta[..l.n_u], &pt.x);
                let mut jet = mechanics::PointJet {
                    grad_u: [[0.0; 3]; 3],
                    dgrad_u: [[[0.0; 3]; 3]; 3],
                    params,
                    dparams,
                    x: pt.x,
                };
                for k in 0..3 {
                    for c in 0..3 {
                        jet.grad_u[k][c] = y[k][1 + c];
                        for j in 0..3 {
                            jet.dgrad_u[j][k][c] = y[k][4 + hess_slot(c, j)];
                        }
                    }
                }
                let jd = tensor::det(&mechanics::deformation_gradient(&jet.grad_u));
                mechanics::check_jacobian(jd, pt.x)?;
                let (div, _) = mechanics::divergence(&self.material, &jet);
                let r: [f64; 3] = std::array::from_fn(|k| div[k] + pt.body_force[k]);
                let val = tensor::dot(&r, &r);
                if !val.is_finite() {
                    return Err(Error::NonFinite { term: "pde", index: i });
                }
                if let Some(grad) = grad {
                    let rho = r.map(|v| 2.0 * v);
                    let adj = mechanics::divergence_vjp(&self.material, &jet, &rho);
                    let mut bar = vec![[0.0; 10]; 3];
                    for k in 0..3 {
                        for c in 0..3 {
                            bar[k][1 + c] = adj.grad_u[k][c];
                            for j in 0..3 {
                                bar[k][4 + hess_slot(c, j)] += adj.dgrad_u[j][k][c];
                            }
                        }
                    }
                    ws.u10.backward(&self.u_spec, &theta[..l.n_u], &bar, &mut grad[..l.n_u]);
                    let fb = self.scatter_params(&pt.x, &adj.params, &adj.dparams, grad);
                    if self.field_mode() {
                        self.mu_backward(ws, theta, fb, chain, grad);
                    }
                }
                Ok(val)
            }
            PdeForm::AsPrinted => {
                let y = ws.u4.forward(&self.u_spec, &theta[..l.n_u], &pt.x);
                let g: Mat3<f64> = std::array::from_fn(|k| std::array::from_fn(|c| y[k][1 + c]));
                let f = mechanics::deformation_gradient(&g);
                mechanics::check_jacobian(tensor::det(&f), pt.x)?;
                let n = self.material.param_count();
                let p = mechanics::piola(&self.material, &f, &params[..n], &pt.x);
                let val = tensor::frobenius_sq(&p);
                if !val.is_finite() {
                    return Err(Error::NonFinite { term: "pde", index: i });
                }
                if let Some(grad) = grad {
                    let pbar = p.map(|row| row.map(|v| 2.0 * v));
                    let (gf, gp) = mechanics::piola_vjp(&self.material, &g, &params, &pt.x, &pbar);
                    let bar: Vec<[f64; 4]> = (0..3).map(|k| [0.0, gf[k][0], gf[k][1], gf[k][2]]).collect();
                    ws.u4.backward(&self.u_spec, &theta[..l.n_u], &bar, &mut grad[..l.n_u]);
                    let fb = self.scatter_params(&pt.x, &gp, &[[0.0; 3]; MAX_PARAMS], grad);
                    if self.field_mode() {
                        self.mu_backward(ws, theta, fb, chain, grad);
                    }
                }
                Ok(val)
            }
        }
    }

    fn bc_point(
        &self,
        ws: &mut Workspace,
        theta: &[f64],
        i: usize,
        pt: &BcPoint,
        robin: bool,
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let l = self.layout();
        let (params, _, chain) = self.point_params_and_field(ws, theta, &pt.x);
        let y = ws.u4.forward(&self.u_spec, &theta[..l.n_u], &pt.x);
        let u = [y[0][0], y[1][0], y[2][0]];
        let g: Mat3<f64> = std::array::from_fn(|k| std::array::from_fn(|c| y[k][1 + c]));
        mechanics::check_jacobian(tensor::det(&mechanics::deformation_gradient(&g)), pt.x)?;
        let pressure = if robin { 0.0 } else { self.pressure };
        let tj = mechanics::traction_jacobian(&self.material, &g, &params, &pt.x, &pt.normal, pressure);
        let r: [f64; 3] = std::array::from_fn(|k| {
            tj.residual[k] + if robin { self.robin_k * u[k] } else { 0.0 } - pt.source[k]
        });
        let val = tensor::dot(&r, &r);
        if !val.is_finite() {
            let term = if robin { "bc_robin" } else { "bc_neumann" };
            return Err(Error::NonFinite { term, index: i });
        }
        if let Some(grad) = grad {
            let rb = r.map(|v| 2.0 * v);
            let mut bar = vec![[0.0; 4]; 3];
            let mut pbar = [0.0; MAX_PARAMS];
            for (i, rbi) in rb.iter().enumerate() {
                for k in 0..3 {
                    for c in 0..3 {
                        bar[k][1 + c] += rbi * tj.d_f[i][3 * k + c];
                    }
                }
                for q in 0..MAX_PARAMS {
                    pbar[q] += rbi * tj.d_params[i][q];
                }
                if robin {
                    bar[i][0] += self.robin_k * rbi;
                }
            }
            ws.u4.backward(&self.u_spec, &theta[..l.n_u], &bar, &mut grad[..l.n_u]);
            let fb = self.scatter_params(&pt.x, &pbar, &[[0.0; 3]; MAX_PARAMS], grad);
            if self.field_mode() {
                self.mu_backward(ws, theta, (fb.0, [0.0; 3]), chain, grad);
            }
        }
        Ok(val)
    }

    fn prior_point(&self, ws: &mut Workspace, theta: &[f64], x: &[f64; 3], grad: Option<&mut [f64]>) -> f64 {
        let l = self.layout();
        let spec = self.mu_spec.as_ref().expect("field mode");
        let m = ws.m1.forward(spec, &theta[l.mu()], x)[0][0];
        let (v, s) = if self.softplus { softplus(m) } else { (m, 1.0) };
        let d = v - self.mu_prior.expect("prior value");
        if let Some(grad) = grad {
            ws.m1.backward(spec, &theta[l.mu()], &[[2.0 * d * s]], &mut grad[l.mu()]);
        }
        d * d
    }

    /// Raw value (and gradient of the raw value) of one term.
    fn term_raw(&self, term: Term, theta: &[f64], sets: &PointSets, want_grad: bool) -> Result<(f64, Vec<f64>)> {
        let n = self.layout().len();
        match term {
            Term::Obs => {
                if sets.obs.is_empty() {
                    return Err(Error::EmptySet("obs"));
                }
                let idx: Vec<usize> = (0..sets.obs.len()).collect();
                let (s, g) = reduce(&idx, n, want_grad, |ws, i, g| Ok(self.obs_point(ws, theta, *i, &sets.obs, g)))?;
                Ok(normalize(s, g, sets.obs.len()))
            }
            Term::ObsStrain => {
                if sets.obs.strain.is_none() {
                    return Err(Error::MissingStrain);
                }
                if sets.obs.is_empty() {
                    return Err(Error::EmptySet("obs_strain"));
                }
                let idx: Vec<usize> = (0..sets.obs.len()).collect();
                let (s, g) = reduce(&idx, n, want_grad, |ws, i, g| Ok(self.strain_point(ws, theta, *i, &sets.obs, g)))?;
                Ok(normalize(s, g, sets.obs.len()))
            }
            Term::Pde => {
                if sets.pde.is_empty() {
                    return Err(Error::EmptySet("pde"));
                }
                let idx: Vec<usize> = (0..sets.pde.len()).collect();
                let (s, g) = reduce(&idx, n, want_grad, |ws, i, g| self.pde_point(ws, theta, *i, &sets.pde[*i], g))?;
                Ok(normalize(s, g, sets.pde.len()))
            }
            Term::BcNeumann | Term::BcRobin => {
                let robin = term == Term::BcRobin;
                let groups = if robin { &sets.robin } else { &sets.neumann };
                let mut total = 0.0;
                let mut grad = if want_grad { vec![0.0; n] } else { Vec::new() };
                for group in groups.iter().filter(|g| !g.is_empty()) {
                    let idx: Vec<usize> = (0..group.len()).collect();
                    let (s, g) = reduce(&idx, n, want_grad, |ws, i, g| self.bc_point(ws, theta, *i, &group[*i], robin, g))?;
                    let (s, g) = normalize(s, g, group.len());
                    total += s;
                    for (a, b) in grad.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Ok((total, grad))
            }
            Term::Prior => {
                if sets.pde.is_empty() {
                    return Err(Error::EmptySet("prior"));
                }
                let (s, g) = reduce(&sets.pde, n, want_grad, |ws, p, g| Ok(self.prior_point(ws, theta, &p.x, g)))?;
                Ok(normalize(s, g, sets.pde.len()))
            }
            Term::Tikhonov => {
                let w = &theta[..self.layout().n_u];
                let s = w.iter().map(|v| v * v).sum();
                let mut g = if want_grad { vec![0.0; n] } else { Vec::new() };
                if want_grad {
                    for (gi, wi) in g.iter_mut().zip(w) {
                        *gi = 2.0 * wi;
                    }
                }
                Ok((s, g))
            }
        }
    }

    /// Evaluate `terms`, returning their breakdown, the weighted objective,
    /// and (when `want_grad`) its gradient with respect to θ.
    pub fn evaluate(&self, theta: &[f64], sets: &PointSets, terms: &[Term], want_grad: bool) -> Result<Evaluation> {
        let n = self.layout().len();
        if theta.len() != n {
            return Err(Error::Dimension { expected: n, got: theta.len() });
        }
        let mut grad = if want_grad { vec![0.0; n] } else { Vec::new() };
        let mut values = Vec::with_capacity(terms.len());
        let mut objective = 0.0;
        for &t in terms {
            let lambda = self.weights.get(t);
            let (raw, g) = self.term_raw(t, theta, sets, want_grad && lambda > 0.0)?;
            if !raw.is_finite() {
                return Err(Error::NonFinite { term: t.name(), index: 0 });
            }
            let weighted = lambda * raw;
            objective += weighted;
            if want_grad && lambda > 0.0 {
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += lambda * b;
                }
            }
            values.push(TermValue { term: t, raw, weighted });
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { term: "gradient", index: 0 });
        }
        Ok(Evaluation {
            breakdown: LossBreakdown { terms: values, total: objective },
            objective,
            grad,
        })
    }

    /// Full composite loss over any scalar type, built from the generic
    /// network and mechanics code. Used as a cross-check of [`evaluate`].
    pub fn composite_loss_generic<T: Real>(&self, theta: &[T], sets: &PointSets) -> T {
        type D1<T> = Dual<T, 3>;
        type D2<T> = Dual<Dual<T, 3>, 3>;
        let l = self.layout();
        let wu = &theta[..l.n_u];
        let wmu = &theta[l.mu()];
        let sc = &theta[l.scalars()];
        let lift = |x: &[f64; 3]| -> [D1<T>; 3] { std::array::from_fn(|i| D1::variable(T::cst(x[i]), i)) };
        let lift2 = |x: &[f64; 3]| -> [D2<T>; 3] {
            std::array::from_fn(|i| {
                D2::new(
                    Dual::variable(T::cst(x[i]), i),
                    std::array::from_fn(|j| Dual::cst(if i == j { 1.0 } else { 0.0 })),
                )
            })
        };
        let w1: Vec<D1<T>> = wu.iter().map(|&w| D1::constant(w)).collect();
        let w2: Vec<D2<T>> = wu.iter().map(|&w| D2::constant(Dual::constant(w))).collect();
        let wm1: Vec<D1<T>> = wmu.iter().map(|&w| D1::constant(w)).collect();
        let sp = |v: T| -> T {
            if self.softplus {
                (v.exp() + 1.0).ln()
            } else {
                v
            }
        };
        // parameter values and gradients at x
        let params = |x: &[f64; 3]| -> (Vec<T>, Vec<[T; 3]>) {
            let mut p = Vec::new();
            let mut dp = Vec::new();
            for s in &self.sources {
                match *s {
                    ParamSource::Fixed(v) => {
                        p.push(T::cst(v));
                        dp.push([T::zero(); 3]);
                    }
                    ParamSource::Scalar(i) => {
                        p.push(sc[i]);
                        dp.push([T::zero(); 3]);
                    }
                    ParamSource::Regions { split, left, right } => {
                        p.push(sc[if x[0] < split { left } else { right }]);
                        dp.push([T::zero(); 3]);
                    }
                    ParamSource::Field => {
                        let m = network::forward_generic(self.mu_spec.as_ref().unwrap(), &wm1, &lift(x))[0];
                        let v = sp_d1(m, self.softplus);
                        p.push(v.re);
                        dp.push(v.eps);
                    }
                }
            }
            (p, dp)
        };
        let mut total = T::zero();
        let wt = &self.weights;
        let n_obs = sets.obs.len() as f64;
        if wt.obs > 0.0 && !sets.obs.is_empty() {
            let mut s = T::zero();
            for (x, u) in sets.obs.points.iter().zip(&sets.obs.u) {
                let xt = x.map(T::cst);
                let y = network::forward_generic(&self.u_spec, wu, &xt);
                for k in 0..3 {
                    s += (y[k] - u[k]).square();
                }
            }
            total += s * (wt.obs / n_obs);
        }
        if wt.obs_strain > 0.0 {
            if let Some(es) = &sets.obs.strain {
                let mut s = T::zero();
                for (x, e) in sets.obs.points.iter().zip(es) {
                    let y = network::forward_generic(&self.u_spec, &w1, &lift(x));
                    let g: Mat3<T> = std::array::from_fn(|k| y[k].eps);
                    let et = mechanics::green_lagrange(&mechanics::deformation_gradient(&g));
                    for a in 0..3 {
                        for b in 0..3 {
                            s += (et[a][b] - e[a][b]).square();
                        }
                    }
                }
                total += s * (wt.obs_strain / n_obs);
            }
        }
        if wt.pde > 0.0 && !sets.pde.is_empty() {
            let mut s = T::zero();
            for pt in &sets.pde {
                let (p, dp) = params(&pt.x);
                match self.pde_form {
                    PdeForm::Divergence => {
                        let y = network::forward_generic(&self.u_spec, &w2, &lift2(&pt.x));
                        let g: Mat3<T> = std::array::from_fn(|k| std::array::from_fn(|c| y[k].re.eps[c]));
                        let h: [Mat3<T>; 3] =
                            std::array::from_fn(|j| std::array::from_fn(|k| std::array::from_fn(|c| y[k].eps[j].eps[c])));
                        let (div, _) = mechanics::divergence_generic(&self.material, &g, &h, &p, &dp, &pt.x);
                        for k in 0..3 {
                            s += (div[k] + pt.body_force[k]).square();
                        }
                    }
                    PdeForm::AsPrinted => {
                        let y = network::forward_generic(&self.u_spec, &w1, &lift(&pt.x));
                        let g: Mat3<T> = std::array::from_fn(|k| y[k].eps);
                        let f = mechanics::deformation_gradient(&g);
                        let pk = mechanics::piola(&self.material, &f, &p, &pt.x.map(T::cst));
                        for row in pk {
                            for v in row {
                                s += v.square();
                            }
                        }
                    }
                }
            }
            total += s * (wt.pde / sets.pde.len() as f64);
        }
        for (robin, groups, lambda) in [(false, &sets.neumann, wt.bc_neumann), (true, &sets.robin, wt.bc_robin)] {
            if lambda == 0.0 {
                continue;
            }
            for group in groups.iter().filter(|g| !g.is_empty()) {
                let mut s = T::zero();
                for pt in group {
                    let (p, _) = params(&pt.x);
                    let y = network::forward_generic(&self.u_spec, &w1, &lift(&pt.x));
                    let g: Mat3<T> = std::array::from_fn(|k| y[k].eps);
                    let pressure = if robin { 0.0 } else { self.pressure };
                    let t = mechanics::traction_generic(&self.material, &g, &p, &pt.x, &pt.normal, pressure);
                    for k in 0..3 {
                        let extra = if robin { y[k].re * self.robin_k } else { T::zero() };
                        s += (t[k] + extra - pt.source[k]).square();
                    }
                }
                total += s * (lambda / group.len() as f64);
            }
        }
        if wt.prior > 0.0 && self.field_mode() {
            let mut s = T::zero();
            for pt in &sets.pde {
                let m = network::forward_generic(self.mu_spec.as_ref().unwrap(), wmu, &pt.x.map(T::cst))[0];
                s += (sp(m) - self.mu_prior.unwrap()).square();
            }
            total += s * (wt.prior / sets.pde.len() as f64);
        }
        if wt.tikhonov > 0.0 {
            let mut s = T::zero();
            for &w in wu {
                s += w.square();
            }
            total += s * wt.tikhonov;
        }
        total
    }
}

fn sp_d1<T: Real>(m: Dual<T, 3>, on: bool) -> Dual<T, 3> {
    if on {
        (m.exp() + 1.0).ln()
    } else {
        m
    }
}

fn normalize(s: f64, mut g: Vec<f64>, n: usize) -> (f64, Vec<f64>) {
    let inv = 1.0 / n as f64;
    for v in g.iter_mut() {
        *v *= inv;
    }
    (s * inv, g)
}

/// Sum a per-point function over `items` in fixed chunks, reducing the
/// chunk partials in order.
fn reduce<P, F>(items: &[P], n: usize, want_grad: bool, f: F) -> Result<(f64, Vec<f64>)>
where
    P: Sync,
    F: Fn(&mut Workspace, &P, Option<&mut [f64]>) -> Result<f64> + Sync,
{
    let parts: Vec<Result<(f64, Vec<f64>)>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::default();
            let mut g = if want_grad { vec![0.0; n] } else { Vec::new() };
            let mut s = 0.0;
            for p in chunk {
                s += f(&mut ws, p, if want_grad { Some(&mut g[..]) } else { None })?;
            }
            Ok((s, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; n] } else { Vec::new() };
    for part in parts {
        let (s, g) = part?;
        total += s;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

/// Ground truth on a test split for the error metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSet {
    pub points: Vec<[f64; 3]>,
    pub u: Vec<[f64; 3]>,
    pub strain: Option<Vec<Mat3<f64>>>,
    pub stress: Option<Vec<Mat3<f64>>>,
}

/// Ground truth for the stiffness estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum StiffnessTruth {
    /// True value of every trainable scalar, in scalar order.
    Scalars(Vec<f64>),
    /// True μ at the test collocation points.
    Field { points: Vec<[f64; 3]>, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    pub e_mu: Option<f64>,
    pub e_u: Option<f64>,
    pub e_strain: Option<f64>,
    /// Stress is undefined where the prediction has J ≤ 0; any such test
    /// point leaves `e_stress` empty.
    pub e_stress: Option<f64>,
    #[serde(default)]
    pub inverted_test_points: usize,
}

/// Displacement, its gradient and the material parameters at x.
fn predict_raw(model: &PinnModel, theta: &[f64], x: &[f64; 3]) -> ([f64; 3], Mat3<f64>, Params<f64>) {
    let mut ws = Workspace::default();
    let l = model.layout();
    let (params, _, _) = model.point_params_and_field(&mut ws, theta, x);
    let y = ws.u4.forward(&model.u_spec, &theta[..l.n_u], x);
    let u = [y[0][0], y[1][0], y[2][0]];
    let g: Mat3<f64> = std::array::from_fn(|k| std::array::from_fn(|c| y[k][1 + c]));
    (u, g, params)
}

fn cauchy_at(model: &PinnModel, s: &mechanics::DeformationState, params: &Params<f64>, x: &[f64; 3]) -> Result<Mat3<f64>> {
    let n = model.material.param_count();
    let p = mechanics::piola(&model.material, &s.f, &params[..n], x);
    if p.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { term: "stress", index: 0 });
    }
    Ok(mechanics::cauchy_stress(&p, s))
}

/// Displacement, Green-Lagrange strain, Cauchy stress and stiffness at a point.
pub type PointPrediction = ([f64; 3], Mat3<f64>, Mat3<f64>, f64);

/// Predicted displacement, strain and Cauchy stress at x.
pub fn predict_point(model: &PinnModel, theta: &[f64], x: &[f64; 3]) -> Result<PointPrediction> {
    let (u, g, params) = predict_raw(model, theta, x);
    let s = mechanics::kinematics(&g, *x)?;
    Ok((u, s.e, cauchy_at(model, &s, &params, x)?, params[0]))
}

fn relative_l2(pred: &[f64], truth: &[f64], what: &'static str) -> Result<f64> {
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::ZeroNorm(what));
    }
    let num: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((num / den).sqrt())
}

/// Relative errors of the trained model against ground truth.
///
/// Displacement, strain and stress errors are root-mean-square errors divided
/// by the root-mean-square of the truth. Scalar stiffness error is
/// |μ̃ − μ|/μ of the first trainable scalar; the field error is the RMS error
/// at the test collocation points divided by the largest true value.
pub fn error_metrics(model: &PinnModel, theta: &[f64], truth: &TruthSet, mu: Option<&StiffnessTruth>) -> Result<Metrics> {
    if truth.points.is_empty() {
        return Err(Error::EmptySet("test"));
    }
    let mut pu = Vec::new();
    let mut pe = Vec::new();
    let mut ps = Vec::new();
    let mut inverted = 0;
    for x in &truth.points {
        let (u, g, params) = predict_raw(model, theta, x);
        pu.extend(u);
        let f = mechanics::deformation_gradient(&g);
        pe.extend(mechanics::green_lagrange(&f).iter().flatten());
        match mechanics::kinematics(&g, *x) {
            Ok(s) => ps.extend(cauchy_at(model, &s, &params, x)?.iter().flatten()),
            Err(Error::InvertedElement { .. }) => inverted += 1,
            Err(e) => return Err(e),
        }
    }
    let tu: Vec<f64> = truth.u.iter().flatten().copied().collect();
    let mut m = Metrics {
        e_u: Some(relative_l2(&pu, &tu, "displacement")?),
        inverted_test_points: inverted,
        ..Metrics::default()
    };
    if let Some(e) = &truth.strain {
        let te: Vec<f64> = e.iter().flat_map(|a| a.iter().flatten().copied()).collect();
        m.e_strain = Some(relative_l2(&pe, &te, "strain")?);
    }
    if let (Some(s), 0) = (&truth.stress, inverted) {
        let ts: Vec<f64> = s.iter().flat_map(|a| a.iter().flatten().copied()).collect();
        m.e_stress = Some(relative_l2(&ps, &ts, "stress")?);
    }
    m.e_mu = match mu {
        None => None,
        Some(t) => stiffness_error(model, theta, t)?,
    };
    Ok(m)
}

/// Stiffness error alone: |μ̃ − μ|/μ for the first scalar, or the RMS field
/// error over the largest true value.
pub fn stiffness_error(model: &PinnModel, theta: &[f64], truth: &StiffnessTruth) -> Result<Option<f64>> {
    Ok(match truth {
        StiffnessTruth::Scalars(vals) => {
            let sc = &theta[model.layout().scalars()];
            match (sc.first(), vals.first()) {
                (Some(est), Some(t)) => {
                    if *t == 0.0 {
                        return Err(Error::ZeroNorm("stiffness"));
                    }
                    Some(((est - t) / t).abs())
                }
                _ => None,
            }
        }
        StiffnessTruth::Field { points, values } => {
            if points.is_empty() {
                return Err(Error::EmptySet("stiffness test"));
            }
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max <= 0.0 {
                return Err(Error::ZeroNorm("stiffness"));
            }
            let mut ws = Workspace::default();
            let mut acc = 0.0;
            for (x, v) in points.iter().zip(values) {
                let (p, _, _) = model.point_params_and_field(&mut ws, theta, x);
                acc += (p[0] - v).powi(2);
            }
            Some((acc / points.len() as f64).sqrt() / max)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::network::xavier_init;

    fn nh_model() -> PinnModel {
        PinnModel {
            material: MaterialModel::NeoHookean { mu: 10.0, kappa: 1000.0 },
            sources: vec![ParamSource::Scalar(0), ParamSource::Fixed(1000.0)],
            u_spec: MlpSpec::new(3, vec![4, 3], 3).with_input_scale([10.0, 10.0, 2.0]),
            mu_spec: None,
            softplus: false,
            pressure: -8.0,
            robin_k: 10.0,
            pde_form: PdeForm::Divergence,
            weights: LossWeights {
                obs: 1.0,
                obs_strain: 0.0,
                pde: 1.0,
                bc_neumann: 1.0,
                bc_robin: 1.0,
                prior: 0.0,
                tikhonov: 0.0,
            },
            mu_prior: None,
            n_scalars: 1,
        }
    }

    fn face_group(face: Face, xs: &[[f64; 3]]) -> Vec<BcPoint> {
        xs.iter()
            .map(|x| BcPoint {
                x: *x,
                normal: face.normal(),
                face,
                source: [0.0; 3],
            })
            .collect()
    }

    fn zero_sets() -> PointSets {
        PointSets {
            obs: ObservationSet::new(vec![[1.0, 1.0, 1.0]], vec![[0.0; 3]], Provenance::Manufactured).unwrap(),
            pde: vec![PdePoint { x: [2.0, 3.0, 1.0], body_force: [0.0; 3] }],
            neumann: vec![face_group(Face::G1, &[[0.0, 4.0, 1.0], [0.0, 6.0, 0.5]])],
            robin: vec![face_group(Face::G6, &[[3.0, 4.0, 2.0]])],
        }
    }

    fn theta_zero(m: &PinnModel) -> Vec<f64> {
        let mut t = vec![0.0; m.layout().len()];
        t[m.layout().scalars().start] = 10.0;
        t
    }

    #[test]
    fn zero_network_losses() {
        let m = nh_model();
        let sets = zero_sets();
        let e = m.evaluate(&theta_zero(&m), &sets, &m.applicable(&sets), false).unwrap();
        let v = |t| e.breakdown.get(t).unwrap().raw;
        assert_eq!(v(Term::Obs), 0.0);
        assert_eq!(v(Term::Pde), 0.0);
        assert_eq!(v(Term::BcRobin), 0.0);
        // P = 0, J = 1, F = I: residual is p n
        assert!((v(Term::BcNeumann) - 64.0).abs() < 1e-12);
    }

    #[test]
    fn single_observation_value() {
        let mut m = nh_model();
        m.weights.obs = 1.0;
        let mut sets = zero_sets();
        sets.obs.u[0] = [1.0, 0.0, 0.0];
        let e = m.evaluate(&theta_zero(&m), &sets, &[Term::Obs], false).unwrap();
        assert_eq!(e.objective, 1.0);
    }

    #[test]
    fn tikhonov_value() {
        let mut m = nh_model();
        m.weights.tikhonov = 1.0;
        let mut t = theta_zero(&m);
        t[0] = 3.0;
        t[1] = 4.0;
        let e = m.evaluate(&t, &zero_sets(), &[Term::Tikhonov], false).unwrap();
        assert_eq!(e.objective, 25.0);
    }

    #[test]
    fn missing_strain_and_empty_sets_are_errors() {
        let mut m = nh_model();
        m.weights.obs_strain = 1.0;
        let sets = zero_sets();
        assert!(matches!(
            m.evaluate(&theta_zero(&m), &sets, &[Term::ObsStrain], false),
            Err(Error::MissingStrain)
        ));
        let mut empty = zero_sets();
        empty.pde.clear();
        assert!(matches!(
            m.evaluate(&theta_zero(&m), &empty, &[Term::Pde], false),
            Err(Error::EmptySet("pde"))
        ));
    }

    #[test]
    fn metric_examples() {
        let m = nh_model();
        let mut t = theta_zero(&m);
        let sc = m.layout().scalars().start;
        t[sc] = 15.0;
        let truth = TruthSet {
            points: vec![[1.0, 2.0, 1.0]],
            u: vec![[0.0, 0.0, 0.1]],
            strain: None,
            stress: None,
        };
        let r = error_metrics(&m, &t, &truth, Some(&StiffnessTruth::Scalars(vec![10.0]))).unwrap();
        assert!((r.e_mu.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.e_u, Some(1.0));
        let zero = TruthSet {
            u: vec![[0.0; 3]],
            ..truth
        };
        assert!(matches!(error_metrics(&m, &t, &zero, None), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn fast_gradient_matches_generic_value_differences() {
        let mut m = nh_model();
        m.weights.tikhonov = 0.1;
        let mut sets = zero_sets();
        sets.obs.u[0] = [0.1, -0.05, 0.02];
        sets.pde[0].body_force = [0.3, -0.2, 0.1];
        let mut t = xavier_init(&m.u_spec, 3).0;
        t.push(12.0);
        let e = m.evaluate(&t, &sets, &m.applicable(&sets), true).unwrap();
        let v = m.composite_loss_generic(&t, &sets);
        assert!((v - e.objective).abs() < 1e-10 * (1.0 + v.abs()));
        let h = 1e-6;
        for i in 0..t.len() {
            let mut a = t.clone();
            let mut b = t.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (m.composite_loss_generic(&a, &sets) - m.composite_loss_generic(&b, &sets)) / (2.0 * h);
            assert!((fd - e.grad[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", e.grad[i]);
        }
    }

    #[test]
    fn as_printed_pde_gradient() {
        let mut m = nh_model();
        m.pde_form = PdeForm::AsPrinted;
        let sets = zero_sets();
        let mut t = xavier_init(&m.u_spec, 4).0;
        t.push(12.0);
        let e = m.evaluate(&t, &sets, &[Term::Pde], true).unwrap();
        let f = |t: &[f64]| m.evaluate(t, &sets, &[Term::Pde], false).unwrap().objective;
        let h = 1e-6;
        for i in 0..t.len() {
            let mut a = t.clone();
            let mut b = t.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - e.grad[i]).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn busy_sets(seed: u64) -> PointSets {
            let mut rng = crate::sampling::rng_for(seed, 2);
            let mut pick = |lo: f64, hi: f64| rand::Rng::random_range(&mut rng, lo..hi);
            let points: Vec<[f64; 3]> = (0..6).map(|_| [pick(0.0, 10.0), pick(0.0, 10.0), pick(0.0, 2.0)]).collect();
            let u: Vec<[f64; 3]> = (0..6).map(|_| [pick(-0.1, 0.1), pick(-0.1, 0.1), pick(-0.1, 0.1)]).collect();
            let pde = (0..5)
                .map(|_| PdePoint {
                    x: [pick(0.0, 10.0), pick(0.0, 10.0), pick(0.0, 2.0)],
                    body_force: [pick(-1.0, 1.0), pick(-1.0, 1.0), pick(-1.0, 1.0)],
                })
                .collect();
            PointSets {
                obs: ObservationSet::new(points, u, Provenance::Manufactured).unwrap(),
                pde,
                neumann: vec![face_group(Face::G1, &[[0.0, 4.0, 1.0], [0.0, 6.0, 0.5], [0.0, 1.0, 1.5]])],
                robin: vec![face_group(Face::G6, &[[3.0, 4.0, 2.0], [7.0, 2.0, 2.0]])],
            }
        }

        fn weights_theta(m: &PinnModel, seed: u64) -> Vec<f64> {
            let mut t: Vec<f64> = xavier_init(&m.u_spec, seed).0.iter().map(|w| 0.3 * w).collect();
            t.push(11.0);
            t
        }

        fn relative_gap(a: f64, b: f64) -> f64 {
            (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn terms_ignore_point_order(seed in 0u64..1000, shift in 1usize..6) {
                let m = nh_model();
                let sets = busy_sets(seed);
                let theta = weights_theta(&m, seed);
                let mut turned = sets.clone();
                turned.obs.points.rotate_left(shift);
                turned.obs.u.rotate_left(shift);
                turned.pde.rotate_left(shift % 5);
                turned.neumann[0].reverse();
                turned.robin[0].reverse();
                let terms = m.applicable(&sets);
                let a = m.evaluate(&theta, &sets, &terms, false).unwrap();
                let b = m.evaluate(&theta, &turned, &terms, false).unwrap();
                for (x, y) in a.breakdown.terms.iter().zip(&b.breakdown.terms) {
                    prop_assert_eq!(x.term, y.term);
                    prop_assert!(relative_gap(x.raw, y.raw) < 1e-12, "{:?}: {} vs {}", x.term, x.raw, y.raw);
                }
            }

            #[test]
            fn total_is_the_sum_of_weighted_terms(seed in 0u64..1000) {
                let m = nh_model();
                let sets = busy_sets(seed);
                let e = m.evaluate(&weights_theta(&m, seed), &sets, &m.applicable(&sets), false).unwrap();
                let sum: f64 = e.breakdown.terms.iter().map(|t| t.weighted).sum();
                prop_assert_eq!(e.breakdown.total, sum);
            }

            #[test]
            fn common_weight_scaling_keeps_the_gradient_direction(seed in 0u64..1000, c in 1e-3..1e3f64) {
                let m = nh_model();
                let mut scaled = m.clone();
                scaled.weights = m.weights.scaled(c);
                let sets = busy_sets(seed);
                let theta = weights_theta(&m, seed);
                let terms = m.applicable(&sets);
                let a = m.evaluate(&theta, &sets, &terms, true).unwrap();
                let b = scaled.evaluate(&theta, &sets, &terms, true).unwrap();
                prop_assert!(relative_gap(b.objective, c * a.objective) < 1e-12);
                let unit = |g: &[f64]| {
                    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    g.iter().map(|v| v / n).collect::<Vec<_>>()
                };
                for (x, y) in unit(&a.grad).iter().zip(unit(&b.grad)) {
                    prop_assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }
}
