//! Observation data: CSV exchange, manufactured ground truth, noise and
//! resolution reduction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Real};
use crate::error::{Error, Result};
use crate::mechanics::{self, MaterialModel, Params};
use crate::sampling::{self, SlabGeometry, StiffnessField};
use crate::tensor::{self, Mat3, Vec3};

const HEADER: [&str; 6] = ["x", "y", "z", "ux", "uy", "uz"];
const STRAIN_HEADER: [&str; 6] = ["E11", "E22", "E33", "E12", "E13", "E23"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    FemImport,
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub sigma: f64,
    pub ld: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    provenance: Provenance,
    noise: Option<NoiseRecord>,
    count: usize,
    has_strain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub points: Vec<[f64; 3]>,
    pub u: Vec<[f64; 3]>,
    pub strain: Option<Vec<Mat3<f64>>>,
    pub provenance: Provenance,
    pub noise: Option<NoiseRecord>,
    /// Noise-free displacements, kept when noise has been added.
    pub clean_u: Option<Vec<[f64; 3]>>,
}

impl ObservationSet {
    pub fn new(points: Vec<[f64; 3]>, u: Vec<[f64; 3]>, provenance: Provenance) -> Result<Self> {
        if points.len() != u.len() {
            return Err(Error::Dimension {
                expected: points.len(),
                got: u.len(),
            });
        }
        Ok(Self {
            points,
            u,
            strain: None,
            provenance,
            noise: None,
            clean_u: None,
        })
    }

    pub fn with_strain(mut self, e: Vec<Mat3<f64>>) -> Result<Self> {
        if e.len() != self.points.len() {
            return Err(Error::Dimension {
                expected: self.points.len(),
                got: e.len(),
            });
        }
        self.strain = Some(e);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Displacements before any noise was added.
    pub fn clean(&self) -> &[[f64; 3]] {
        self.clean_u.as_deref().unwrap_or(&self.u)
    }

    pub fn max_displacement(&self) -> f64 {
        self.clean().iter().map(|u| tensor::dot(u, u).sqrt()).fold(0.0, f64::max)
    }

    /// Sidecar path next to a CSV file: `obs.csv` → `obs.json`.
    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = HEADER.to_vec();
        if self.strain.is_some() {
            header.extend(STRAIN_HEADER);
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.points[i]
                .iter()
                .chain(self.u[i].iter())
                .map(|v| v.to_string())
                .collect();
            if let Some(e) = &self.strain {
                let e = &e[i];
                row.extend(
                    [e[0][0], e[1][1], e[2][2], e[0][1], e[0][2], e[1][2]]
                        .iter()
                        .map(|v| v.to_string()),
                );
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        let side = Sidecar {
            provenance: self.provenance,
            noise: self.noise,
            count: self.len(),
            has_strain: self.strain.is_some(),
        };
        std::fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

/// Read an observation CSV (`x,y,z,ux,uy,uz[,E11,E22,E33,E12,E13,E23]`).
/// A sidecar JSON next to it, if present, supplies provenance and noise.
pub fn import_fem_csv(path: &Path) -> Result<ObservationSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let has_strain = match header.len() {
        6 => false,
        12 => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected 6 or 12 columns, found {}", header.len()),
            })
        }
    };
    let expected: Vec<&str> = HEADER.iter().chain(STRAIN_HEADER.iter()).take(header.len()).copied().collect();
    if header != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be {}", expected.join(",")),
        });
    }
    let mut points = Vec::new();
    let mut u = Vec::new();
    let mut strain = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| {
                let v: f64 = s.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("`{s}` is not a number"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Parse {
                        line,
                        msg: format!("non-finite value `{s}`"),
                    })
                }
            })
            .collect::<Result<_>>()?;
        points.push([vals[0], vals[1], vals[2]]);
        u.push([vals[3], vals[4], vals[5]]);
        if has_strain {
            let (e11, e22, e33, e12, e13, e23) = (vals[6], vals[7], vals[8], vals[9], vals[10], vals[11]);
            strain.push([[e11, e12, e13], [e12, e22, e23], [e13, e23, e33]]);
        }
    }
    let side_path = ObservationSet::sidecar_path(path);
    let side: Option<Sidecar> = if side_path.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(&side_path)?)?)
    } else {
        None
    };
    let mut set = ObservationSet::new(
        points,
        u,
        side.as_ref().map(|s| s.provenance).unwrap_or(Provenance::FemImport),
    )?;
    set.noise = side.and_then(|s| s.noise);
    if has_strain {
        set = set.with_strain(strain)?;
    }
    Ok(set)
}

/// Add i.i.d. N(0, σ²) to every displacement component with
/// σ = LD · max‖u‖ / 3 over the clean data.
pub fn add_noise(obs: &ObservationSet, ld: f64, seed: u64) -> Result<ObservationSet> {
    if !(ld.is_finite() && ld >= 0.0) {
        return Err(Error::Config(format!("LD must be >= 0, got {ld}")));
    }
    let clean = obs.clean().to_vec();
    let sigma = ld * obs.max_displacement() / 3.0;
    let mut out = obs.clone();
    out.u = clean.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut rng = sampling::rng_for(seed, 0x6e6f697365);
        for u in out.u.iter_mut() {
            for c in u.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }
    out.clean_u = Some(clean);
    out.noise = Some(NoiseRecord { sigma, ld, seed });
    Ok(out)
}

/// Snap observations to the nearest node of a lattice with the given spacing
/// and average all observations sharing a node.
pub fn downsample_to_pixels(obs: &ObservationSet, spacing: f64, geometry: &SlabGeometry) -> Result<ObservationSet> {
    if !(spacing > 0.0) || geometry.extent().iter().any(|e| spacing > *e) {
        return Err(Error::Invalid(format!(
            "pixel spacing {spacing} mm is not positive or exceeds the slab {:?}",
            geometry.extent()
        )));
    }
    struct Acc {
        n: usize,
        u: [f64; 3],
        clean: [f64; 3],
        e: Mat3<f64>,
    }
    let mut cells: BTreeMap<[i64; 3], Acc> = BTreeMap::new();
    let clean = obs.clean();
    for i in 0..obs.len() {
        let key = obs.points[i].map(|v| (v / spacing + 0.5).floor() as i64);
        let acc = cells.entry(key).or_insert(Acc {
            n: 0,
            u: [0.0; 3],
            clean: [0.0; 3],
            e: [[0.0; 3]; 3],
        });
        acc.n += 1;
        for d in 0..3 {
            acc.u[d] += obs.u[i][d];
            acc.clean[d] += clean[i][d];
        }
        if let Some(e) = &obs.strain {
            for r in 0..3 {
                for c in 0..3 {
                    acc.e[r][c] += e[i][r][c];
                }
            }
        }
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut u = Vec::with_capacity(cells.len());
    let mut cl = Vec::with_capacity(cells.len());
    let mut strain = Vec::with_capacity(cells.len());
    for (key, acc) in cells {
        let n = acc.n as f64;
        points.push(key.map(|k| k as f64 * spacing));
        u.push(acc.u.map(|v| v / n));
        cl.push(acc.clean.map(|v| v / n));
        strain.push(acc.e.map(|row| row.map(|v| v / n)));
    }
    let mut out = ObservationSet::new(points, u, obs.provenance)?;
    out.noise = obs.noise;
    if obs.clean_u.is_some() {
        out.clean_u = Some(cl);
    }
    if obs.strain.is_some() {
        out = out.with_strain(strain)?;
    }
    Ok(out)
}

/// `coeff · x^p0 · y^p1 · z^p2` added to displacement component `component`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub component: usize,
    pub coeff: f64,
    pub powers: [u32; 3],
}

/// Closed-form polynomial displacement field in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedField {
    pub terms: Vec<Monomial>,
}

impl ManufacturedField {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// Two simple shears (u_x ∝ y², u_z ∝ x², det F ≡ 1) plus a small
    /// volumetric part u_y ∝ y z.
    pub fn standard() -> Self {
        Self {
            terms: vec![
                Monomial {
                    component: 0,
                    coeff: 4e-3,
                    powers: [0, 2, 0],
                },
                Monomial {
                    component: 2,
                    coeff: 3e-3,
                    powers: [2, 0, 0],
                },
                Monomial {
                    component: 1,
                    coeff: 5e-4,
                    powers: [0, 1, 1],
                },
            ],
        }
    }

    pub fn eval<T: Real>(&self, x: &[T; 3]) -> [T; 3] {
        let mut u = [T::zero(); 3];
        for m in &self.terms {
            let mut t = T::cst(m.coeff);
            for d in 0..3 {
                if m.powers[d] > 0 {
                    t *= x[d].powi(m.powers[d] as i32);
                }
            }
            u[m.component] += t;
        }
        u
    }

    /// Displacement, gradient `[k][l] = ∂u_k/∂X_l` and second derivatives
    /// `[j][k][l] = ∂²u_k/∂X_l∂X_j`.
    pub fn jet(&self, x: &[f64; 3]) -> ([f64; 3], Mat3<f64>, [Mat3<f64>; 3]) {
        type D = Dual<Dual<f64, 3>, 3>;
        let xd: [D; 3] = std::array::from_fn(|i| {
            D::new(
                Dual::variable(x[i], i),
                std::array::from_fn(|j| Dual::cst(if i == j { 1.0 } else { 0.0 })),
            )
        });
        let u = self.eval(&xd);
        let mut val = [0.0; 3];
        let mut g = [[0.0; 3]; 3];
        let mut h = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            val[k] = u[k].re.re;
            for l in 0..3 {
                g[k][l] = u[k].re.eps[l];
                for j in 0..3 {
                    h[j][k][l] = u[k].eps[j].eps[l];
                }
            }
        }
        (val, g, h)
    }
}

/// A closed-form displacement field together with the material it is
/// an exact solution for, once the body force and boundary sources below
/// are included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedProblem {
    pub field: ManufacturedField,
    pub material: MaterialModel,
    /// Overrides parameter 0 of the material pointwise when present.
    #[serde(default)]
    pub stiffness: Option<StiffnessField>,
    pub geometry: SlabGeometry,
    /// Follower pressure on the lateral faces (kPa).
    pub pressure: f64,
    /// Robin spring constant on the top and bottom faces (kPa/mm).
    pub robin_k: f64,
}

impl ManufacturedProblem {
    /// Build the problem, checking det F > 0 on a probe lattice.
    pub fn new(
        field: ManufacturedField,
        material: MaterialModel,
        stiffness: Option<StiffnessField>,
        geometry: SlabGeometry,
        pressure: f64,
        robin_k: f64,
    ) -> Result<Self> {
        let p = Self {
            field,
            material,
            stiffness,
            geometry,
            pressure,
            robin_k,
        };
        p.check_admissible()?;
        Ok(p)
    }

    pub fn check_admissible(&self) -> Result<()> {
        self.material.validate()?;
        if let Some(s) = &self.stiffness {
            s.validate()?;
        }
        let spacing = self.geometry.extent().iter().copied().fold(f64::INFINITY, f64::min) / 4.0;
        for x in self.geometry.lattice(spacing)? {
            let (_, g, _) = self.field.jet(&x);
            let j = tensor::det(&mechanics::deformation_gradient(&g));
            mechanics::check_jacobian(j, x)?;
        }
        Ok(())
    }

    pub fn params_at(&self, x: &[f64; 3]) -> Params<f64> {
        let mut p = self.material.params();
        if let Some(s) = &self.stiffness {
            p[0] = sampling::stiffness_at(s, x);
        }
        p
    }

    pub fn displacement(&self, x: &[f64; 3]) -> [f64; 3] {
        self.field.eval(x)
    }

    pub fn grad_u(&self, x: &[f64; 3]) -> Mat3<f64> {
        self.field.jet(x).1
    }

    pub fn strain(&self, x: &[f64; 3]) -> Mat3<f64> {
        mechanics::green_lagrange(&mechanics::deformation_gradient(&self.grad_u(x)))
    }

    pub fn point_jet(&self, x: &[f64; 3]) -> mechanics::PointJet {
        let (_, g, h) = self.field.jet(x);
        mechanics::PointJet {
            grad_u: g,
            dgrad_u: h,
            params: self.params_at(x),
            dparams: [[0.0; 3]; mechanics::MAX_PARAMS],
            x: *x,
        }
    }

    /// f = −∇·P(u_MS). Piecewise-constant stiffness fields contribute no
    /// gradient term away from their interfaces.
    pub fn body_force(&self, x: &[f64; 3]) -> Vec3<f64> {
        let (div, _) = mechanics::divergence(&self.material, &self.point_jet(x));
        div.map(|v| -v)
    }

    fn traction(&self, x: &[f64; 3], n: &[f64; 3], pressure: f64) -> Vec3<f64> {
        let p = self.params_at(x);
        let k = self.material.param_count();
        mechanics::traction_generic(&self.material, &self.grad_u(x), &p[..k], x, n, pressure)
    }

    /// Neumann data g with `P n + p cof(F) n = g` on a lateral face.
    pub fn neumann_source(&self, x: &[f64; 3], n: &[f64; 3]) -> Vec3<f64> {
        self.traction(x, n, self.pressure)
    }

    /// Robin data g with `P n + k u = g` on a top or bottom face.
    pub fn robin_source(&self, x: &[f64; 3], n: &[f64; 3]) -> Vec3<f64> {
        let t = self.traction(x, n, 0.0);
        let u = self.displacement(x);
        [0, 1, 2].map(|i| t[i] + self.robin_k * u[i])
    }

    /// Exact observations (with strain) at the given points.
    pub fn observe(&self, points: Vec<[f64; 3]>) -> Result<ObservationSet> {
        let u = points.iter().map(|x| self.displacement(x)).collect();
        let e = points.iter().map(|x| self.strain(x)).collect();
        ObservationSet::new(points, u, Provenance::Manufactured)?.with_strain(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{rng_for, sample_interior};

    fn nh() -> MaterialModel {
        MaterialModel::NeoHookean {
            mu: 10.0,
            kappa: 1000.0,
        }
    }

    fn problem(field: ManufacturedField) -> ManufacturedProblem {
        ManufacturedProblem::new(field, nh(), None, SlabGeometry::default(), -8.0, 10.0).unwrap()
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        std::fs::write(&p, "x,y,z,ux,uy,uz\n").unwrap();
        let s = import_fem_csv(&p).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.provenance, Provenance::FemImport);
    }

    #[test]
    fn single_row_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        std::fs::write(&p, "x,y,z,ux,uy,uz\n1.0,2.0,0.5,0.01,0.02,0.00\n").unwrap();
        let s = import_fem_csv(&p).unwrap();
        assert_eq!(s.points, vec![[1.0, 2.0, 0.5]]);
        assert_eq!(s.u, vec![[0.01, 0.02, 0.0]]);
        assert!(s.strain.is_none());
    }

    #[test]
    fn bad_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        std::fs::write(&p, "x,y,z,ux,uy,uz\n1,2,0.5,0,0,0\n1,2,abc,0,0,0\n").unwrap();
        match import_fem_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "x,y,z,ux,uy,uz\n1,2,NaN,0,0,0\n").unwrap();
        assert!(matches!(import_fem_csv(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "x,y,z,ux,uy\n").unwrap();
        assert!(matches!(import_fem_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        let prob = problem(ManufacturedField::standard());
        let pts = sample_interior(&prob.geometry, 500, &mut rng_for(1, 1));
        let obs = add_noise(&prob.observe(pts).unwrap(), 0.05, 3).unwrap();
        obs.write_csv(&p).unwrap();
        let back = import_fem_csv(&p).unwrap();
        assert_eq!(back.len(), 500);
        assert_eq!(back.points, obs.points);
        assert_eq!(back.u, obs.u);
        assert_eq!(back.strain, obs.strain);
        assert_eq!(back.noise, obs.noise);
        assert_eq!(back.provenance, Provenance::Manufactured);
    }

    #[test]
    fn zero_noise_is_identity() {
        let prob = problem(ManufacturedField::standard());
        let obs = prob.observe(sample_interior(&prob.geometry, 50, &mut rng_for(1, 1))).unwrap();
        let noisy = add_noise(&obs, 0.0, 9).unwrap();
        assert_eq!(noisy.u, obs.u);
        assert_eq!(noisy.points, obs.points);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let pts: Vec<[f64; 3]> = (0..34_000).map(|i| [i as f64 * 1e-4, 0.0, 0.0]).collect();
        let u: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] * 0.1, 0.0, 0.0]).collect();
        let obs = ObservationSet::new(pts, u, Provenance::Manufactured).unwrap();
        let noisy = add_noise(&obs, 0.1, 4).unwrap();
        let sigma = noisy.noise.unwrap().sigma;
        assert!((sigma - 0.1 * obs.max_displacement() / 3.0).abs() < 1e-15);
        let d: Vec<f64> = noisy
            .u
            .iter()
            .zip(&obs.u)
            .flat_map(|(a, b)| (0..3).map(move |k| a[k] - b[k]))
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.02);
        assert!(mean.abs() < 5.0 * sigma / n.sqrt());
    }

    #[test]
    fn downsampling_lattices() {
        let g = SlabGeometry::default();
        let prob = problem(ManufacturedField::standard());
        let obs = prob.observe(g.lattice(0.2).unwrap()).unwrap();
        let same = downsample_to_pixels(&obs, 0.2, &g).unwrap();
        assert_eq!(same.len(), obs.len());
        for (a, b) in same.points.iter().zip(&obs.points) {
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() < 1e-12);
            }
        }
        let coarse = downsample_to_pixels(&obs, 0.4, &g).unwrap();
        let per_axis = |set: &ObservationSet, d: usize| {
            let mut v: Vec<i64> = set.points.iter().map(|p| (p[d] * 1e6).round() as i64).collect();
            v.sort();
            v.dedup();
            v.len()
        };
        assert_eq!(per_axis(&obs, 0), 51);
        assert_eq!(per_axis(&coarse, 0), 26);
        assert_eq!(per_axis(&coarse, 2), 6);
        assert!(downsample_to_pixels(&obs, 12.0, &g).is_err());
    }

    #[test]
    fn block_mean_of_equal_vectors() {
        let obs = ObservationSet::new(
            vec![[0.01, 0.0, 0.0], [0.02, 0.0, 0.0]],
            vec![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]],
            Provenance::FemImport,
        )
        .unwrap();
        let d = downsample_to_pixels(&obs, 0.2, &SlabGeometry::default()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.u[0], [1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_and_affine_fields_have_no_body_force() {
        let zero = problem(ManufacturedField::zero());
        assert_eq!(zero.body_force(&[1.0, 2.0, 1.0]), [0.0; 3]);
        let affine = ManufacturedField {
            terms: vec![
                Monomial {
                    component: 0,
                    coeff: 0.02,
                    powers: [0, 1, 0],
                },
                Monomial {
                    component: 2,
                    coeff: -0.01,
                    powers: [1, 0, 0],
                },
                Monomial {
                    component: 1,
                    coeff: 0.015,
                    powers: [0, 1, 0],
                },
            ],
        };
        let p = problem(affine);
        for x in [[1.0, 2.0, 0.5], [9.0, 3.0, 1.9]] {
            assert!(p.body_force(&x).iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn shear_body_force_matches_symbolic_form() {
        // u = (a y², 0, c x²) has det F = 1 and, for Neo-Hookean,
        // ∇·P = μ (2a − 8c²x/3, −(8a²y − 16ac²xy)/3, 2c).
        let (a, c, mu) = (4e-3, 3e-3, 10.0);
        let field = ManufacturedField {
            terms: vec![
                Monomial {
                    component: 0,
                    coeff: a,
                    powers: [0, 2, 0],
                },
                Monomial {
                    component: 2,
                    coeff: c,
                    powers: [2, 0, 0],
                },
            ],
        };
        let p = problem(field);
        let mut rng = rng_for(2, 0);
        for x in sample_interior(&p.geometry, 20, &mut rng) {
            let (xx, yy) = (x[0], x[1]);
            let div = [
                mu * (2.0 * a - 8.0 * c * c * xx / 3.0),
                -mu * (8.0 * a * a * yy - 16.0 * a * c * c * xx * yy) / 3.0,
                mu * 2.0 * c,
            ];
            let f = p.body_force(&x);
            for i in 0..3 {
                let rel = (f[i] + div[i]).abs() / div[i].abs().max(1e-12);
                assert!(rel < 1e-8, "component {i}: {} vs {}", f[i], -div[i]);
            }
        }
    }

    #[test]
    fn inadmissible_field_is_rejected() {
        let field = ManufacturedField {
            terms: vec![Monomial {
                component: 0,
                coeff: -0.5,
                powers: [2, 0, 0],
            }],
        };
        let r = ManufacturedProblem::new(field, nh(), None, SlabGeometry::default(), 0.0, 0.0);
        assert!(matches!(r, Err(Error::InvertedElement { .. })));
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_keeps_every_finite_value(
            rows in proptest::collection::vec(proptest::array::uniform6(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO), 1..20),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("obs.csv");
            let points: Vec<[f64; 3]> = rows.iter().map(|r| [r[0], r[1], r[2]]).collect();
            let u: Vec<[f64; 3]> = rows.iter().map(|r| [r[3], r[4], r[5]]).collect();
            let obs = ObservationSet::new(points, u, Provenance::FemImport).unwrap();
            obs.write_csv(&p).unwrap();
            let back = import_fem_csv(&p).unwrap();
            proptest::prop_assert_eq!(back.points, obs.points);
            proptest::prop_assert_eq!(back.u, obs.u);
        }
    }
}
