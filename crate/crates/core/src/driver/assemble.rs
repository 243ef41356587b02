use rand::seq::SliceRandom;

use super::config::{DataSource, ExperimentConfig, Parametrization};
use crate::data::{self, ManufacturedProblem, ObservationSet};
use crate::error::{Error, Result};
use crate::losses::{BcPoint, ParamSource, PdePoint, PinnModel, PointSets, StiffnessTruth, TruthSet};
use crate::mechanics;
use crate::network::{xavier_init, FourierSpec, MlpSpec, WeightVector};
use crate::sampling::{self, rng_for, Face, SamplingPlan, StiffnessField};
use crate::tensor::Mat3;

const TEST_SALT: u64 = 0x7465_7374;
const MU_NET_SALT: u64 = 0x6d75;
const FOURIER_SALT: u64 = 0x666f;

/// Everything one replicate needs.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub model: PinnModel,
    pub train: PointSets,
    pub test: PointSets,
    pub truth: TruthSet,
    pub stiffness_truth: Option<StiffnessTruth>,
    /// Names of the trainable scalars, in θ order.
    pub scalar_names: Vec<String>,
    pub theta0: Vec<f64>,
    pub manufactured: Option<ManufacturedProblem>,
}

pub fn manufactured_problem(cfg: &ExperimentConfig) -> Result<Option<ManufacturedProblem>> {
    match &cfg.data {
        DataSource::Manufactured { field, .. } => Ok(Some(ManufacturedProblem::new(
            field.clone(),
            cfg.truth_law().clone(),
            cfg.stiffness.clone(),
            cfg.geometry,
            cfg.loading.pressure,
            cfg.loading.robin_k,
        )?)),
        DataSource::FemImport { .. } => Ok(None),
    }
}

fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// The PINN model and the names of its trainable scalars.
pub fn build_model(cfg: &ExperimentConfig, seed: u64) -> Result<(PinnModel, Vec<String>)> {
    let ext = cfg.geometry.extent();
    let mut u_spec = MlpSpec::new(3, cfg.network.u_hidden.clone(), 3);
    let mut mu_spec = MlpSpec::new(3, cfg.network.mu_hidden.clone(), 1);
    if cfg.network.scale_inputs {
        u_spec = u_spec.with_input_scale(ext);
        mu_spec = mu_spec.with_input_scale(ext);
    }
    if let Some(f) = cfg.network.fourier {
        u_spec = u_spec.with_fourier(FourierSpec::draw(f.m, f.sigma, seed ^ FOURIER_SALT)?);
    }
    let law = &cfg.material;
    let n = law.param_count();
    let p = law.params();
    let mut sources: Vec<ParamSource> = (0..n).map(|q| ParamSource::Fixed(p[q])).collect();
    let mut names = Vec::new();
    let mut mu_prior = None;
    let mut softplus = false;
    let mut field = false;
    match &cfg.parametrization {
        Parametrization::Fixed => {}
        Parametrization::Scalars { names: chosen, .. } => {
            for (k, name) in chosen.iter().enumerate() {
                let q = law
                    .param_index(name)
                    .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
                sources[q] = ParamSource::Scalar(k);
                names.push(name.clone());
            }
        }
        Parametrization::Regions { split, .. } => {
            sources[0] = ParamSource::Regions {
                split: *split,
                left: 0,
                right: 1,
            };
            let base = law.param_names()[0];
            names.push(format!("{base}_left"));
            names.push(format!("{base}_right"));
        }
        Parametrization::Field {
            mu_prior: prior,
            softplus: sp,
        } => {
            sources[0] = ParamSource::Field;
            mu_prior = Some(*prior);
            softplus = *sp;
            field = true;
        }
    }
    let model = PinnModel {
        material: law.clone(),
        sources,
        u_spec,
        mu_spec: field.then_some(mu_spec),
        softplus,
        pressure: cfg.loading.pressure,
        robin_k: cfg.loading.robin_k,
        pde_form: cfg.pde_form,
        weights: cfg.weights,
        mu_prior,
        n_scalars: names.len(),
    };
    model.validate()?;
    Ok((model, names))
}

/// True value of trainable parameter 0 (or any scalar) when it is known.
fn truth_param(cfg: &ExperimentConfig, q: usize) -> f64 {
    match (&cfg.stiffness, q) {
        (Some(StiffnessField::Constant { mu }), 0) => *mu,
        _ => cfg.material.params()[q],
    }
}

pub fn initial_theta(cfg: &ExperimentConfig, model: &PinnModel, seed: u64) -> Result<Vec<f64>> {
    let mut theta = xavier_init(&model.u_spec, seed).0;
    if let Some(spec) = &model.mu_spec {
        let mut w: WeightVector = xavier_init(spec, seed ^ MU_NET_SALT);
        let prior = model.mu_prior.expect("field mode has a prior");
        w.0[WeightVector::output_bias_index(spec, 0)] = if model.softplus {
            softplus_inverse(prior)
        } else {
            prior
        };
        theta.extend(w.0);
    }
    match &cfg.parametrization {
        Parametrization::Scalars {
            names,
            init,
            init_factor,
        } => match init {
            Some(v) => theta.extend(v),
            None => {
                for name in names {
                    let q = cfg.material.param_index(name).expect("validated");
                    theta.push(init_factor * truth_param(cfg, q));
                }
            }
        },
        Parametrization::Regions { init, .. } => theta.extend(init),
        _ => {}
    }
    if theta.len() != model.layout().len() {
        return Err(Error::Dimension {
            expected: model.layout().len(),
            got: theta.len(),
        });
    }
    Ok(theta)
}

fn collocation(
    cfg: &ExperimentConfig,
    plan: &SamplingPlan,
    seed: u64,
    problem: Option<&ManufacturedProblem>,
) -> (Vec<PdePoint>, Vec<Vec<BcPoint>>, Vec<Vec<BcPoint>>) {
    let g = &cfg.geometry;
    let pde = sampling::sample_interior(g, plan.n_pde, &mut rng_for(seed, 2))
        .into_iter()
        .map(|x| PdePoint {
            x,
            body_force: problem.map(|p| p.body_force(&x)).unwrap_or([0.0; 3]),
        })
        .collect();
    let mut neumann = Vec::new();
    let mut robin = Vec::new();
    for face in Face::ALL {
        let n = if face.is_lateral() {
            plan.n_bc_lateral
        } else {
            plan.n_bc_top_bottom
        };
        let pts = sampling::sample_face(g, face, n, &mut rng_for(seed, 10 + face.index() as u64));
        let group: Vec<BcPoint> = pts
            .iter()
            .map(|fp| {
                let mut b = BcPoint::homogeneous(fp);
                if let Some(p) = problem {
                    b.source = if face.is_lateral() {
                        p.neumann_source(&fp.x, &fp.normal)
                    } else {
                        p.robin_source(&fp.x, &fp.normal)
                    };
                }
                b
            })
            .collect();
        if face.is_lateral() {
            neumann.push(group);
        } else {
            robin.push(group);
        }
    }
    (pde, neumann, robin)
}

fn subset(obs: ObservationSet, n: usize, seed: u64) -> Result<ObservationSet> {
    if obs.len() <= n {
        return Ok(obs);
    }
    let mut idx: Vec<usize> = (0..obs.len()).collect();
    idx.shuffle(&mut rng_for(seed, 3));
    idx.truncate(n);
    idx.sort_unstable();
    let mut out = ObservationSet::new(
        idx.iter().map(|&i| obs.points[i]).collect(),
        idx.iter().map(|&i| obs.u[i]).collect(),
        obs.provenance,
    )?;
    out.noise = obs.noise;
    if let Some(c) = &obs.clean_u {
        out.clean_u = Some(idx.iter().map(|&i| c[i]).collect());
    }
    if let Some(e) = &obs.strain {
        out = out.with_strain(idx.iter().map(|&i| e[i]).collect())?;
    }
    Ok(out)
}

fn strip_strain(mut obs: ObservationSet) -> ObservationSet {
    obs.strain = None;
    obs
}

fn manufactured_obs(
    cfg: &ExperimentConfig,
    p: &ManufacturedProblem,
    n: usize,
    seed: u64,
    resolution: Option<f64>,
) -> Result<ObservationSet> {
    match resolution {
        None => p.observe(sampling::sample_interior(&cfg.geometry, n, &mut rng_for(seed, 1))),
        Some(r) => {
            let fine = p.observe(cfg.geometry.lattice(r / 2.0)?)?;
            let pixels = data::downsample_to_pixels(&fine, r, &cfg.geometry)?;
            subset(pixels, n, seed)
        }
    }
}

/// Cauchy stress of the data-generating law at x.
pub fn truth_stress(p: &ManufacturedProblem, x: &[f64; 3]) -> Result<Mat3<f64>> {
    let s = mechanics::kinematics(&p.grad_u(x), *x)?;
    let params = p.params_at(x);
    let n = p.material.param_count();
    let piola = mechanics::piola(&p.material, &s.f, &params[..n], x);
    Ok(mechanics::cauchy_stress(&piola, &s))
}

pub fn stiffness_truth(
    cfg: &ExperimentConfig,
    test_points: &[[f64; 3]],
    problem: Option<&ManufacturedProblem>,
) -> Option<StiffnessTruth> {
    let mu_at = |x: &[f64; 3]| match (problem, &cfg.stiffness) {
        (Some(p), _) => p.params_at(x)[0],
        (None, Some(s)) => sampling::stiffness_at(s, x),
        (None, None) => cfg.material.params()[0],
    };
    match &cfg.parametrization {
        Parametrization::Fixed => None,
        Parametrization::Scalars { names, .. } => Some(StiffnessTruth::Scalars(
            names
                .iter()
                .map(|n| truth_param(cfg, cfg.material.param_index(n).expect("validated")))
                .collect(),
        )),
        Parametrization::Regions { split, .. } => {
            let (l, r) = match &cfg.stiffness {
                Some(StiffnessField::TwoRegion { left, right, .. }) => (*left, *right),
                _ => {
                    let ext = cfg.geometry.extent();
                    let y = ext[1] / 2.0;
                    let z = ext[2] / 2.0;
                    (mu_at(&[split / 2.0, y, z]), mu_at(&[(split + ext[0]) / 2.0, y, z]))
                }
            };
            Some(StiffnessTruth::Scalars(vec![l, r]))
        }
        Parametrization::Field { .. } => Some(StiffnessTruth::Field {
            points: test_points.to_vec(),
            values: test_points.iter().map(mu_at).collect(),
        }),
    }
}

/// Halves the displacement network's output layer until θ gives J > 0 at
/// every training point. With Fourier features a freshly initialised
/// network can fold the slab before training starts. Returns the number of
/// halvings.
pub fn unfold_initial_network(model: &PinnModel, theta: &mut [f64], sets: &PointSets) -> Result<usize> {
    const LIMIT: usize = 30;
    let terms = model.applicable(sets);
    let end = model.u_spec.param_count();
    let (fan_in, fan_out) = *model.u_spec.layers().last().expect("validated network has layers");
    let start = end - (fan_in + 1) * fan_out;
    let mut halvings = 0;
    loop {
        match model.evaluate(theta, sets, &terms, false) {
            Ok(_) => return Ok(halvings),
            Err(Error::InvertedElement { .. }) if halvings < LIMIT => {
                theta[start..end].iter_mut().for_each(|w| *w *= 0.5);
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Builds model, train and test sets, truth and θ0 for one LD and seed.
pub fn assemble(cfg: &ExperimentConfig, ld: f64, seed: u64) -> Result<Assembled> {
    cfg.validate()?;
    let (model, scalar_names) = build_model(cfg, seed)?;
    let mut theta0 = initial_theta(cfg, &model, seed)?;
    let problem = manufactured_problem(cfg)?;
    let test_plan = cfg.test_sampling.unwrap_or(cfg.sampling);
    let train_seed = cfg.data_seed;
    let test_seed = cfg.data_seed ^ TEST_SALT;

    let (train_obs, test_obs) = match (&cfg.data, &problem) {
        (DataSource::Manufactured {
            strain, resolution, ..
        }, Some(p)) => {
            let tr = manufactured_obs(cfg, p, cfg.sampling.n_obs, train_seed, *resolution)?;
            let te = manufactured_obs(cfg, p, test_plan.n_obs, test_seed, None)?;
            if *strain {
                (tr, te)
            } else {
                (strip_strain(tr), te)
            }
        }
        (DataSource::FemImport { path, test_path }, _) => {
            let all = data::import_fem_csv(path)?;
            match test_path {
                Some(tp) => (
                    subset(all, cfg.sampling.n_obs, train_seed)?,
                    subset(data::import_fem_csv(tp)?, test_plan.n_obs, test_seed)?,
                ),
                None => split_rows(all, cfg.sampling.n_obs, test_plan.n_obs, train_seed)?,
            }
        }
        _ => unreachable!("manufactured data always builds a problem"),
    };
    let train_obs = data::add_noise(&train_obs, ld, cfg.data_seed)?;

    let (pde, neumann, robin) = collocation(cfg, &cfg.sampling, train_seed, problem.as_ref());
    let train = PointSets {
        obs: train_obs,
        pde,
        neumann,
        robin,
    };
    let (tpde, tneumann, trobin) = collocation(cfg, &test_plan, test_seed, problem.as_ref());
    unfold_initial_network(&model, &mut theta0, &train)?;

    let stress = match &problem {
        Some(p) => Some(
            test_obs
                .points
                .iter()
                .map(|x| truth_stress(p, x))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let truth = TruthSet {
        points: test_obs.points.clone(),
        u: test_obs.u.clone(),
        strain: test_obs.strain.clone(),
        stress,
    };
    let field_points: Vec<[f64; 3]> = tpde.iter().map(|p| p.x).collect();
    let stiffness_truth = stiffness_truth(cfg, &field_points, problem.as_ref());
    let test_obs = if cfg.weights.obs_strain > 0.0 {
        test_obs
    } else {
        strip_strain(test_obs)
    };
    let test = PointSets {
        obs: test_obs,
        pde: tpde,
        neumann: tneumann,
        robin: trobin,
    };
    Ok(Assembled {
        model,
        train,
        test,
        truth,
        stiffness_truth,
        scalar_names,
        theta0,
        manufactured: problem,
    })
}

/// Disjoint random train and test rows from one imported file.
fn split_rows(all: ObservationSet, n_train: usize, n_test: usize, seed: u64) -> Result<(ObservationSet, ObservationSet)> {
    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.shuffle(&mut rng_for(seed, 4));
    if idx.len() < 2 {
        return Err(Error::EmptySet("imported observations"));
    }
    let n_train = n_train.min(idx.len() - 1);
    let n_test = n_test.min(idx.len() - n_train);
    let pick = |ids: &[usize]| -> Result<ObservationSet> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        let mut o = ObservationSet::new(
            ids.iter().map(|&i| all.points[i]).collect(),
            ids.iter().map(|&i| all.u[i]).collect(),
            all.provenance,
        )?;
        if let Some(e) = &all.strain {
            o = o.with_strain(ids.iter().map(|&i| e[i]).collect())?;
        }
        Ok(o)
    };
    Ok((pick(&idx[..n_train])?, pick(&idx[n_train..n_train + n_test])?))
}
