//! Kinematics and hyperelastic constitutive laws.
//!
//! Every stress in this crate is a derivative of a strain-energy density
//! taken with [`Dual`] numbers; no law has a hand-coded stress.
//!
//! Each law exposes a small vector of differentiable parameters so that
//! stiffness values can be trainable scalars or network outputs:
//!
//! | law | parameters |
//! |-----|------------|
//! | Neo-Hookean | `mu, kappa` |
//! | Guccione | `alpha, kappa, beta` (`beta` scales `b_f, b_t, b_fs`) |
//! | Holzapfel-Ogden (one fibre) | `a, b, a_f, b_f, kappa` |
//!
//! Parameter 0 is always the stiffness that heterogeneous fields act on.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Real};
use crate::error::{Error, Result};
use crate::tensor::{self, Mat3, Vec3};

pub const MAX_PARAMS: usize = 5;

/// det F below this is treated as an inverted element.
pub const MIN_JACOBIAN: f64 = 1e-6;

pub const GUCCIONE_B_F: f64 = 18.48;
pub const GUCCIONE_B_T: f64 = 3.58;
pub const GUCCIONE_B_FS: f64 = 1.627;

/// Fibre/sheet/sheet-normal triad, possibly varying with position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiberField {
    Constant {
        f0: [f64; 3],
        s0: [f64; 3],
        n0: [f64; 3],
    },
    /// Fibre angle in the x–y plane, linear in z between the two faces.
    LinearZ {
        angle_bottom_deg: f64,
        angle_top_deg: f64,
        height: f64,
    },
}

impl Default for FiberField {
    fn default() -> Self {
        FiberField::Constant {
            f0: [1.0, 0.0, 0.0],
            s0: [0.0, 1.0, 0.0],
            n0: [0.0, 0.0, 1.0],
        }
    }
}

impl FiberField {
    pub fn varying(height: f64) -> Self {
        FiberField::LinearZ {
            angle_bottom_deg: 0.0,
            angle_top_deg: 24.0,
            height,
        }
    }

    pub fn frame<T: Real>(&self, x: &Vec3<T>) -> [Vec3<T>; 3] {
        match self {
            FiberField::Constant { f0, s0, n0 } => {
                let l = |v: &[f64; 3]| [T::cst(v[0]), T::cst(v[1]), T::cst(v[2])];
                [l(f0), l(s0), l(n0)]
            }
            FiberField::LinearZ {
                angle_bottom_deg,
                angle_top_deg,
                height,
            } => {
                let a0 = angle_bottom_deg.to_radians();
                let a1 = angle_top_deg.to_radians();
                let theta = x[2] * ((a1 - a0) / height) + a0;
                let (c, s) = (theta.cos(), theta.sin());
                [
                    [c, s, T::zero()],
                    [-s, c, T::zero()],
                    [T::zero(), T::zero(), T::one()],
                ]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MaterialModel {
    NeoHookean {
        mu: f64,
        kappa: f64,
    },
    Guccione {
        alpha: f64,
        #[serde(default = "default_b_f")]
        b_f: f64,
        #[serde(default = "default_b_t")]
        b_t: f64,
        #[serde(default = "default_b_fs")]
        b_fs: f64,
        kappa: f64,
        #[serde(default)]
        fibers: FiberField,
    },
    #[serde(rename = "holzapfel-ogden")]
    HolzapfelOgden1F {
        a: f64,
        b: f64,
        a_f: f64,
        b_f: f64,
        kappa: f64,
        #[serde(default)]
        fibers: FiberField,
    },
}

fn default_b_f() -> f64 {
    GUCCIONE_B_F
}
fn default_b_t() -> f64 {
    GUCCIONE_B_T
}
fn default_b_fs() -> f64 {
    GUCCIONE_B_FS
}

/// Fixed-capacity parameter vector for one material point.
pub type Params<T> = [T; MAX_PARAMS];

impl MaterialModel {
    pub fn guccione(alpha: f64, kappa: f64, fibers: FiberField) -> Self {
        MaterialModel::Guccione {
            alpha,
            b_f: GUCCIONE_B_F,
            b_t: GUCCIONE_B_T,
            b_fs: GUCCIONE_B_FS,
            kappa,
            fibers,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            MaterialModel::NeoHookean { .. } => &["mu", "kappa"],
            MaterialModel::Guccione { .. } => &["alpha", "kappa", "beta"],
            MaterialModel::HolzapfelOgden1F { .. } => &["a", "b", "a_f", "b_f", "kappa"],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_names().len()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|n| *n == name)
    }

    pub fn params(&self) -> Params<f64> {
        let mut p = [0.0; MAX_PARAMS];
        match *self {
            MaterialModel::NeoHookean { mu, kappa } => {
                p[0] = mu;
                p[1] = kappa;
            }
            MaterialModel::Guccione { alpha, kappa, .. } => {
                p[0] = alpha;
                p[1] = kappa;
                p[2] = 1.0;
            }
            MaterialModel::HolzapfelOgden1F {
                a,
                b,
                a_f,
                b_f,
                kappa,
                ..
            } => {
                p[0] = a;
                p[1] = b;
                p[2] = a_f;
                p[3] = b_f;
                p[4] = kappa;
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.param_count();
        let p = self.params();
        for (name, v) in self.param_names().iter().zip(&p[..n]) {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Config(format!(
                    "material parameter `{name}` must be positive, got {v}"
                )));
            }
        }
        if let MaterialModel::Guccione { b_f, b_t, b_fs, .. } = self {
            if !(*b_f > 0.0 && *b_t > 0.0 && *b_fs > 0.0) {
                return Err(Error::Config("Guccione exponents must be positive".into()));
            }
        }
        Ok(())
    }

    /// Strain-energy density W(F; p, x) in kPa.
    pub fn energy<T: Real>(&self, f: &Mat3<T>, p: &[T], x: &Vec3<T>) -> T {
        let c = tensor::gram(f);
        let j = tensor::det(f);
        match self {
            MaterialModel::NeoHookean { .. } => {
                let (mu, kappa) = (p[0], p[1]);
                let i1 = tensor::trace(&c);
                let iso = j.powf(-2.0 / 3.0) * i1 - 3.0;
                mu * iso * 0.5 + kappa * (j - 1.0).square() * 0.5
            }
            MaterialModel::Guccione {
                b_f, b_t, b_fs, fibers, ..
            } => {
                let (alpha, kappa, beta) = (p[0], p[1], p[2]);
                let [f0, s0, n0] = fibers.frame(x);
                let scale = j.powf(-2.0 / 3.0) * 0.5;
                let mut ebar = c;
                for (i, row) in ebar.iter_mut().enumerate() {
                    for (k, e) in row.iter_mut().enumerate() {
                        *e *= scale;
                        if i == k {
                            *e = *e - 0.5;
                        }
                    }
                }
                let eff = tensor::quad(&f0, &ebar, &f0);
                let ess = tensor::quad(&s0, &ebar, &s0);
                let enn = tensor::quad(&n0, &ebar, &n0);
                let esn = tensor::quad(&s0, &ebar, &n0);
                let efs = tensor::quad(&f0, &ebar, &s0);
                let efn = tensor::quad(&f0, &ebar, &n0);
                let q = eff.square() * *b_f
                    + (ess.square() + enn.square() + esn.square() * 2.0) * *b_t
                    + (efs.square() + efn.square()) * (2.0 * b_fs);
                let q = q * beta;
                alpha * 0.5 * (q.exp() - 1.0) + kappa * 0.5 * j.ln().square()
            }
            MaterialModel::HolzapfelOgden1F { fibers, .. } => {
                let (a, b, a_f, b_f, kappa) = (p[0], p[1], p[2], p[3], p[4]);
                let [f0, _, _] = fibers.frame(x);
                let i1 = tensor::trace(&c);
                let iso = j.powf(-2.0 / 3.0) * i1 - 3.0;
                let i4 = tensor::quad(&f0, &c, &f0);
                kappa * 0.5 * j.ln().square()
                    + a / (b * 2.0) * ((b * iso).exp() - 1.0)
                    + a_f / (b_f * 2.0) * ((b_f * (i4 - 1.0).square()).exp() - 1.0)
            }
        }
    }
}

/// Kinematic quantities derived from a displacement gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationState {
    pub f: Mat3<f64>,
    pub j: f64,
    pub c: Mat3<f64>,
    pub e: Mat3<f64>,
    pub cbar: Mat3<f64>,
    pub ebar: Mat3<f64>,
    pub i1: f64,
}

impl DeformationState {
    /// f0 · C f0
    pub fn i4(&self, f0: &Vec3<f64>) -> f64 {
        tensor::quad(f0, &self.c, f0)
    }
}

pub fn deformation_gradient<T: Real>(grad_u: &Mat3<T>) -> Mat3<T> {
    let mut f = *grad_u;
    for (i, row) in f.iter_mut().enumerate() {
        row[i] = row[i] + 1.0;
    }
    f
}

pub fn check_jacobian(j: f64, point: [f64; 3]) -> Result<()> {
    if j.is_nan() || j < MIN_JACOBIAN {
        return Err(Error::InvertedElement { j, point });
    }
    Ok(())
}

pub fn kinematics(grad_u: &Mat3<f64>, point: [f64; 3]) -> Result<DeformationState> {
    if grad_u.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            term: "kinematics",
            index: 0,
        });
    }
    let f = deformation_gradient(grad_u);
    let j = tensor::det(&f);
    check_jacobian(j, point)?;
    let c = tensor::gram(&f);
    let scale = j.powf(-2.0 / 3.0);
    let mut e = c;
    let mut cbar = c;
    let mut ebar = c;
    for i in 0..3 {
        for k in 0..3 {
            let delta = if i == k { 1.0 } else { 0.0 };
            e[i][k] = 0.5 * (c[i][k] - delta);
            cbar[i][k] = scale * c[i][k];
            ebar[i][k] = 0.5 * (cbar[i][k] - delta);
        }
    }
    Ok(DeformationState {
        f,
        j,
        c,
        e,
        cbar,
        ebar,
        i1: tensor::trace(&c),
    })
}

/// Green-Lagrange strain ½(FᵀF − I) for any scalar type.
pub fn green_lagrange<T: Real>(f: &Mat3<T>) -> Mat3<T> {
    let mut e = tensor::gram(f);
    for (i, row) in e.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v = *v * 0.5;
        }
        row[i] = row[i] - 0.5;
    }
    e
}

fn lift_point<T: Real>(x: &[f64; 3]) -> Vec3<T> {
    [T::cst(x[0]), T::cst(x[1]), T::cst(x[2])]
}

pub fn strain_energy(m: &MaterialModel, s: &DeformationState, x: [f64; 3]) -> Result<f64> {
    let w = m.energy(&s.f, &m.params(), &x);
    if !w.is_finite() {
        return Err(Error::NonFinite {
            term: "strain_energy",
            index: 0,
        });
    }
    Ok(w)
}

/// P = ∂W/∂F with one nine-direction forward sweep; works over any [`Real`].
pub fn piola<T: Real>(m: &MaterialModel, f: &Mat3<T>, p: &[T], x: &Vec3<T>) -> Mat3<T> {
    type D<T> = Dual<T, 9>;
    let mut fd = [[D::<T>::constant(T::zero()); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            fd[i][k] = D::variable(f[i][k], 3 * i + k);
        }
    }
    let n = m.param_count();
    let mut pd = [D::<T>::constant(T::zero()); MAX_PARAMS];
    for q in 0..n {
        pd[q] = D::constant(p[q]);
    }
    let xd = [D::constant(x[0]), D::constant(x[1]), D::constant(x[2])];
    let w = m.energy(&fd, &pd[..n], &xd);
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            out[i][k] = w.eps[3 * i + k];
        }
    }
    out
}

pub fn first_pk_stress(m: &MaterialModel, s: &DeformationState, x: [f64; 3]) -> Result<Mat3<f64>> {
    let p = piola(m, &s.f, &m.params(), &x);
    if p.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            term: "first_pk_stress",
            index: 0,
        });
    }
    Ok(p)
}

/// σ = J⁻¹ P Fᵀ
pub fn cauchy_stress(p: &Mat3<f64>, s: &DeformationState) -> Mat3<f64> {
    let mut sigma = tensor::matmul(p, &tensor::transpose(&s.f));
    for row in sigma.iter_mut() {
        for v in row.iter_mut() {
            *v /= s.j;
        }
    }
    sigma
}

/// Local second-order kinematic data at one collocation point.
///
/// `dgrad_u[j][k][l]` is ∂²u_k / ∂X_l ∂X_j, i.e. ∂F_kl/∂X_j.
/// `dparams[q][j]` is ∂p_q/∂X_j (non-zero only for field-valued parameters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointJet {
    pub grad_u: Mat3<f64>,
    pub dgrad_u: [Mat3<f64>; 3],
    pub params: Params<f64>,
    pub dparams: [[f64; 3]; MAX_PARAMS],
    pub x: [f64; 3],
}

/// Adjoint of a scalar with respect to every input of a [`PointJet`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointJetAdjoint {
    pub grad_u: Mat3<f64>,
    pub dgrad_u: [Mat3<f64>; 3],
    pub params: Params<f64>,
    pub dparams: [[f64; 3]; MAX_PARAMS],
}

/// ∇·P at one point, generic over the scalar type.
///
/// For each reference direction X_j the energy is evaluated on
/// `Dual<Dual<T, 3>, 1>`: the inner tangents pick column j of ∂W/∂F, the
/// outer tangent is the total derivative d/dX_j (through F, the parameters
/// and the explicit position dependence of fibre frames).
/// Returns (∇·P, P).
pub fn divergence_generic<T: Real>(
    m: &MaterialModel,
    grad_u: &Mat3<T>,
    dgrad_u: &[Mat3<T>; 3],
    p: &[T],
    dp: &[[T; 3]],
    x: &[f64; 3],
) -> (Vec3<T>, Mat3<T>) {
    type I<T> = Dual<T, 3>;
    type O<T> = Dual<I<T>, 1>;
    let n = m.param_count();
    let f = deformation_gradient(grad_u);
    let mut div = [T::zero(); 3];
    let mut piola_out = [[T::zero(); 3]; 3];
    for col in 0..3 {
        let mut fo = [[O::<T>::constant(I::constant(T::zero())); 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                let inner = if l == col {
                    I::variable(f[k][l], k)
                } else {
                    I::constant(f[k][l])
                };
                fo[k][l] = O::new(inner, [I::constant(dgrad_u[col][k][l])]);
            }
        }
        let mut po = [O::<T>::constant(I::constant(T::zero())); MAX_PARAMS];
        for q in 0..n {
            po[q] = O::new(I::constant(p[q]), [I::constant(dp[q][col])]);
        }
        let mut xo = [O::<T>::constant(I::constant(T::zero())); 3];
        for d in 0..3 {
            let t = if d == col { T::one() } else { T::zero() };
            xo[d] = O::new(I::constant(T::cst(x[d])), [I::constant(t)]);
        }
        let w = m.energy(&fo, &po[..n], &xo);
        for i in 0..3 {
            piola_out[i][col] = w.re.eps[i];
            div[i] += w.eps[0].eps[i];
        }
    }
    (div, piola_out)
}

pub fn divergence(m: &MaterialModel, jet: &PointJet) -> (Vec3<f64>, Mat3<f64>) {
    let n = m.param_count();
    divergence_generic(
        m,
        &jet.grad_u,
        &jet.dgrad_u,
        &jet.params[..n],
        &jet.dparams[..n],
        &jet.x,
    )
}

/// Vector-Jacobian product of ∇·P: adjoints of ρ·(∇·P) w.r.t. every jet input.
pub fn divergence_vjp(m: &MaterialModel, jet: &PointJet, rho: &Vec3<f64>) -> PointJetAdjoint {
    match m.param_count() {
        2 => divergence_vjp_g::<11>(m, jet, rho),
        3 => divergence_vjp_g::<12>(m, jet, rho),
        5 => divergence_vjp_g::<14>(m, jet, rho),
        n => unreachable!("unsupported parameter count {n}"),
    }
}

/// With A_j = ρ ⊗ e_j and Z_j = d/dX_j of every energy input:
/// ρ·(∇·P) = Σ_j D²W[A_j, Z_j]. Its gradient in (F, p) is the innermost
/// tangent of that mixed derivative, and its gradient in Z_j is D²W[A_j, ·],
/// read off the same evaluation.
fn divergence_vjp_g<const G: usize>(
    m: &MaterialModel,
    jet: &PointJet,
    rho: &Vec3<f64>,
) -> PointJetAdjoint {
    type A<const G: usize> = Dual<f64, G>;
    type B<const G: usize> = Dual<A<G>, 1>;
    type C<const G: usize> = Dual<B<G>, 1>;
    let n = m.param_count();
    debug_assert_eq!(G, 9 + n);
    let f = deformation_gradient(&jet.grad_u);
    let zero_b = B::<G>::constant(A::constant(0.0));
    let mut adj = PointJetAdjoint::default();
    for col in 0..3 {
        let mut fc = [[C::<G>::constant(zero_b); 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                let dir = if l == col { rho[k] } else { 0.0 };
                let re = B::new(A::variable(f[k][l], 3 * k + l), [A::constant(dir)]);
                let tan = B::constant(A::constant(jet.dgrad_u[col][k][l]));
                fc[k][l] = C::new(re, [tan]);
            }
        }
        let mut pc = [C::<G>::constant(zero_b); MAX_PARAMS];
        for q in 0..n {
            let re = B::constant(A::variable(jet.params[q], 9 + q));
            let tan = B::constant(A::constant(jet.dparams[q][col]));
            pc[q] = C::new(re, [tan]);
        }
        let mut xc = [C::<G>::constant(zero_b); 3];
        for d in 0..3 {
            let t = if d == col { 1.0 } else { 0.0 };
            xc[d] = C::new(B::cst(jet.x[d]), [B::cst(t)]);
        }
        let w = m.energy(&fc, &pc[..n], &xc);
        let mixed = &w.eps[0].eps[0];
        let first = &w.re.eps[0];
        for k in 0..3 {
            for l in 0..3 {
                adj.grad_u[k][l] += mixed.eps[3 * k + l];
                adj.dgrad_u[col][k][l] += first.eps[3 * k + l];
            }
        }
        for q in 0..n {
            adj.params[q] += mixed.eps[9 + q];
            adj.dparams[q][col] += first.eps[9 + q];
        }
    }
    adj
}

/// Boundary traction residual `P n + pressure · cof(F) n` and its Jacobian.
///
/// `cof(F) = J F⁻ᵀ`, so this is the follower-pressure residual; with
/// `pressure = 0` it is the plain traction used by Robin conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractionJacobian {
    pub residual: Vec3<f64>,
    /// ∂residual_i / ∂F_kl, flattened as 3k + l.
    pub d_f: [[f64; 9]; 3],
    pub d_params: [[f64; MAX_PARAMS]; 3],
}

/// Generic traction residual, used by the reference loss path.
pub fn traction_generic<T: Real>(
    m: &MaterialModel,
    grad_u: &Mat3<T>,
    p: &[T],
    x: &[f64; 3],
    normal: &[f64; 3],
    pressure: f64,
) -> Vec3<T> {
    let f = deformation_gradient(grad_u);
    let xt = lift_point(x);
    let pk = piola(m, &f, p, &xt);
    let cof = tensor::cofactor(&f);
    let nt = lift_point(normal);
    let pn = tensor::matvec(&pk, &nt);
    let cn = tensor::matvec(&cof, &nt);
    [
        pn[0] + cn[0] * pressure,
        pn[1] + cn[1] * pressure,
        pn[2] + cn[2] * pressure,
    ]
}

pub fn traction_jacobian(
    m: &MaterialModel,
    grad_u: &Mat3<f64>,
    params: &Params<f64>,
    x: &[f64; 3],
    normal: &[f64; 3],
    pressure: f64,
) -> TractionJacobian {
    match m.param_count() {
        2 => traction_jacobian_g::<11>(m, grad_u, params, x, normal, pressure),
        3 => traction_jacobian_g::<12>(m, grad_u, params, x, normal, pressure),
        5 => traction_jacobian_g::<14>(m, grad_u, params, x, normal, pressure),
        n => unreachable!("unsupported parameter count {n}"),
    }
}

fn traction_jacobian_g<const G: usize>(
    m: &MaterialModel,
    grad_u: &Mat3<f64>,
    params: &Params<f64>,
    x: &[f64; 3],
    normal: &[f64; 3],
    pressure: f64,
) -> TractionJacobian {
    type A<const G: usize> = Dual<f64, G>;
    type B<const G: usize> = Dual<A<G>, 3>;
    let n = m.param_count();
    let f = deformation_gradient(grad_u);
    let mut fb = [[B::<G>::cst(0.0); 3]; 3];
    let mut fa = [[A::<G>::cst(0.0); 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            let a = A::variable(f[k][l], 3 * k + l);
            fa[k][l] = a;
            // tangent i selects (P n)_i = Σ_l P_il n_l
            let mut eps = [A::constant(0.0); 3];
            eps[k] = A::constant(normal[l]);
            fb[k][l] = B::new(a, eps);
        }
    }
    let mut pb = [B::<G>::cst(0.0); MAX_PARAMS];
    for q in 0..n {
        pb[q] = B::constant(A::variable(params[q], 9 + q));
    }
    let xb = [B::cst(x[0]), B::cst(x[1]), B::cst(x[2])];
    let w = m.energy(&fb, &pb[..n], &xb);
    let cof = tensor::cofactor(&fa);
    let na = lift_point::<A<G>>(normal);
    let cn = tensor::matvec(&cof, &na);
    let mut out = TractionJacobian {
        residual: [0.0; 3],
        d_f: [[0.0; 9]; 3],
        d_params: [[0.0; MAX_PARAMS]; 3],
    };
    for i in 0..3 {
        let r = w.eps[i] + cn[i] * pressure;
        out.residual[i] = r.re;
        out.d_f[i].copy_from_slice(&r.eps[..9]);
        out.d_params[i][..n].copy_from_slice(&r.eps[9..9 + n]);
    }
    out
}

/// Gradient of `P : pbar` with respect to F and the parameters.
pub fn piola_vjp(
    m: &MaterialModel,
    grad_u: &Mat3<f64>,
    params: &Params<f64>,
    x: &[f64; 3],
    pbar: &Mat3<f64>,
) -> (Mat3<f64>, Params<f64>) {
    match m.param_count() {
        2 => piola_vjp_g::<11>(m, grad_u, params, x, pbar),
        3 => piola_vjp_g::<12>(m, grad_u, params, x, pbar),
        5 => piola_vjp_g::<14>(m, grad_u, params, x, pbar),
        n => unreachable!("unsupported parameter count {n}"),
    }
}

fn piola_vjp_g<const G: usize>(
    m: &MaterialModel,
    grad_u: &Mat3<f64>,
    params: &Params<f64>,
    x: &[f64; 3],
    pbar: &Mat3<f64>,
) -> (Mat3<f64>, Params<f64>) {
    type A<const G: usize> = Dual<f64, G>;
    type B<const G: usize> = Dual<A<G>, 1>;
    let n = m.param_count();
    let f = deformation_gradient(grad_u);
    let mut fb = [[B::<G>::cst(0.0); 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            fb[k][l] = B::new(A::variable(f[k][l], 3 * k + l), [A::constant(pbar[k][l])]);
        }
    }
    let mut pb = [B::<G>::cst(0.0); MAX_PARAMS];
    for q in 0..n {
        pb[q] = B::constant(A::variable(params[q], 9 + q));
    }
    let xb = [B::cst(x[0]), B::cst(x[1]), B::cst(x[2])];
    let w = m.energy(&fb, &pb[..n], &xb);
    let d = &w.eps[0].eps;
    let mut gf = [[0.0; 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            gf[k][l] = d[3 * k + l];
        }
    }
    let mut gp = [0.0; MAX_PARAMS];
    gp[..n].copy_from_slice(&d[9..9 + n]);
    (gf, gp)
}
