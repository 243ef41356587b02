use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The slab (0,L)×(0,W)×(0,H), lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlabGeometry {
    pub l: f64,
    pub w: f64,
    pub h: f64,
}

impl Default for SlabGeometry {
    fn default() -> Self {
        Self {
            l: 10.0,
            w: 10.0,
            h: 2.0,
        }
    }
}

/// Faces Γ1..Γ6: x=0, y=0, x=L, y=W, z=0, z=H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::G1, Face::G2, Face::G3, Face::G4, Face::G5, Face::G6];
    pub const LATERAL: [Face; 4] = [Face::G1, Face::G2, Face::G3, Face::G4];
    pub const TOP_BOTTOM: [Face; 2] = [Face::G5, Face::G6];

    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn normal(self) -> [f64; 3] {
        match self {
            Face::G1 => [-1.0, 0.0, 0.0],
            Face::G2 => [0.0, -1.0, 0.0],
            Face::G3 => [1.0, 0.0, 0.0],
            Face::G4 => [0.0, 1.0, 0.0],
            Face::G5 => [0.0, 0.0, -1.0],
            Face::G6 => [0.0, 0.0, 1.0],
        }
    }

    pub fn is_lateral(self) -> bool {
        !matches!(self, Face::G5 | Face::G6)
    }
}

impl SlabGeometry {
    pub fn validate(&self) -> Result<()> {
        if [self.l, self.w, self.h].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("slab dimensions must be positive: {self:?}")))
        }
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.l, self.w, self.h]
    }

    /// Fixed coordinate axis and its value on a face.
    fn face_plane(&self, face: Face) -> (usize, f64) {
        match face {
            Face::G1 => (0, 0.0),
            Face::G2 => (1, 0.0),
            Face::G3 => (0, self.l),
            Face::G4 => (1, self.w),
            Face::G5 => (2, 0.0),
            Face::G6 => (2, self.h),
        }
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        x.iter().zip(self.extent()).all(|(v, e)| (0.0..=e).contains(v))
    }

    /// Regular lattice of the given spacing covering the closed slab.
    /// Per axis the count is `round(extent / spacing) + 1`.
    pub fn lattice(&self, spacing: f64) -> Result<Vec<[f64; 3]>> {
        let e = self.extent();
        if !(spacing > 0.0) || e.iter().any(|v| spacing > *v) {
            return Err(Error::Invalid(format!(
                "lattice spacing {spacing} mm does not fit the slab {e:?}"
            )));
        }
        let n: Vec<usize> = e.iter().map(|v| (v / spacing).round() as usize + 1).collect();
        let mut pts = Vec::with_capacity(n[0] * n[1] * n[2]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    pts.push([
                        (i as f64 * spacing).min(e[0]),
                        (j as f64 * spacing).min(e[1]),
                        (k as f64 * spacing).min(e[2]),
                    ]);
                }
            }
        }
        Ok(pts)
    }
}

/// A boundary collocation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacePoint {
    pub x: [f64; 3],
    pub face: Face,
    pub normal: [f64; 3],
}

/// Seeded stream for one point set. Sets drawn from the same plan seed
/// but different `stream` ids are independent.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn sample_interior(g: &SlabGeometry, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            [
                open_unit(rng) * g.l,
                open_unit(rng) * g.w,
                open_unit(rng) * g.h,
            ]
        })
        .collect()
}

pub fn sample_face(g: &SlabGeometry, face: Face, n: usize, rng: &mut ChaCha8Rng) -> Vec<FacePoint> {
    let (axis, value) = g.face_plane(face);
    let e = g.extent();
    (0..n)
        .map(|_| {
            let mut x = [0.0; 3];
            for (d, xd) in x.iter_mut().enumerate() {
                *xd = if d == axis { value } else { open_unit(rng) * e[d] };
            }
            FacePoint {
                x,
                face,
                normal: face.normal(),
            }
        })
        .collect()
}

/// Point counts for one training (or test) set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub n_obs: usize,
    pub n_pde: usize,
    /// Per lateral face Γ1..Γ4.
    pub n_bc_lateral: usize,
    /// Per face Γ5, Γ6.
    pub n_bc_top_bottom: usize,
}

impl SamplingPlan {
    /// Point-count Settings 1–4 of the homogeneous study.
    pub fn setting(k: usize) -> Option<Self> {
        let (o, p, l, t) = match k {
            1 => (250, 1250, 25, 125),
            2 => (500, 2500, 50, 250),
            3 => (1000, 5000, 100, 500),
            4 => (2000, 10000, 200, 1000),
            _ => return None,
        };
        Some(Self {
            n_obs: o,
            n_pde: p,
            n_bc_lateral: l,
            n_bc_top_bottom: t,
        })
    }

    /// Settings of the point-count sensitivity appendix, numbered 1–3.
    pub fn sensitivity_setting(k: usize) -> Option<Self> {
        if (1..=3).contains(&k) {
            Self::setting(k + 1)
        } else {
            None
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        let (prefix, k) = name.split_at(name.len().checked_sub(1)?);
        let k: usize = k.parse().ok()?;
        match prefix {
            "setting-" => Self::setting(k),
            "sensitivity-" => Self::sensitivity_setting(k),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 || self.n_pde == 0 || self.n_bc_lateral == 0 || self.n_bc_top_bottom == 0 {
            return Err(Error::Config("all sampling counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ground-truth stiffness μ(x) in kPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StiffnessField {
    Constant {
        mu: f64,
    },
    /// `left` for x < split, `right` otherwise.
    TwoRegion {
        left: f64,
        right: f64,
        split: f64,
    },
    /// Nested closed balls around `center`; the smallest containing ball wins.
    ScarSpheres {
        background: f64,
        center: [f64; 3],
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

impl StiffnessField {
    pub fn two_region(g: &SlabGeometry) -> Self {
        StiffnessField::TwoRegion {
            left: 7.5,
            right: 15.0,
            split: g.l / 2.0,
        }
    }

    pub fn scar() -> Self {
        StiffnessField::ScarSpheres {
            background: 7.5,
            center: [3.0, 3.0, 1.0],
            radii: vec![1.0, 1.5, 2.0],
            values: vec![15.0, 12.5, 10.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StiffnessField::Constant { mu } => *mu > 0.0,
            StiffnessField::TwoRegion { left, right, .. } => *left > 0.0 && *right > 0.0,
            StiffnessField::ScarSpheres {
                background,
                radii,
                values,
                ..
            } => {
                *background > 0.0
                    && radii.len() == values.len()
                    && radii.windows(2).all(|w| w[0] < w[1])
                    && radii.iter().chain(values.iter()).all(|v| *v > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid stiffness field {self:?}")))
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            StiffnessField::Constant { mu } => *mu,
            StiffnessField::TwoRegion { left, right, .. } => left.max(*right),
            StiffnessField::ScarSpheres {
                background, values, ..
            } => values.iter().copied().fold(*background, f64::max),
        }
    }
}

pub fn stiffness_at(f: &StiffnessField, x: &[f64; 3]) -> f64 {
    match f {
        StiffnessField::Constant { mu } => *mu,
        StiffnessField::TwoRegion { left, right, split } => {
            if x[0] < *split {
                *left
            } else {
                *right
            }
        }
        StiffnessField::ScarSpheres {
            background,
            center,
            radii,
            values,
        } => {
            let r2: f64 = (0..3).map(|d| (x[d] - center[d]).powi(2)).sum();
            radii
                .iter()
                .zip(values)
                .find(|(r, _)| r2 <= *r * *r)
                .map(|(_, v)| *v)
                .unwrap_or(*background)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn face_normals_and_planes() {
        let g = SlabGeometry::default();
        let mut rng = rng_for(1, 0);
        for p in sample_face(&g, Face::G1, 20, &mut rng) {
            assert_eq!(p.x[0], 0.0);
            assert_eq!(p.normal, [-1.0, 0.0, 0.0]);
        }
        for p in sample_face(&g, Face::G6, 20, &mut rng) {
            assert_eq!(p.x[2], 2.0);
            assert_eq!(p.normal, [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn interior_points_are_strictly_inside() {
        let g = SlabGeometry::default();
        let pts = sample_interior(&g, 2500, &mut rng_for(3, 0));
        assert_eq!(pts.len(), 2500);
        assert!(pts
            .iter()
            .all(|p| p[0] > 0.0 && p[0] < 10.0 && p[1] > 0.0 && p[1] < 10.0 && p[2] > 0.0 && p[2] < 2.0));
    }

    #[test]
    fn interior_mean_is_centroid() {
        let g = SlabGeometry::default();
        let pts = sample_interior(&g, 100_000, &mut rng_for(5, 0));
        let n = pts.len() as f64;
        for (d, c) in [5.0, 5.0, 1.0].iter().enumerate() {
            let m = pts.iter().map(|p| p[d]).sum::<f64>() / n;
            assert!((m - c).abs() < 0.01 * c, "axis {d}: {m}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let g = SlabGeometry::default();
        let a = sample_interior(&g, 50, &mut rng_for(9, 2));
        let b = sample_interior(&g, 50, &mut rng_for(9, 2));
        let c = sample_interior(&g, 50, &mut rng_for(9, 3));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn named_settings() {
        let s2 = SamplingPlan::by_name("setting-2").unwrap();
        assert_eq!((s2.n_obs, s2.n_pde, s2.n_bc_lateral, s2.n_bc_top_bottom), (500, 2500, 50, 250));
        assert_eq!(SamplingPlan::by_name("sensitivity-1"), Some(s2));
        assert_eq!(SamplingPlan::by_name("setting-5"), None);
    }

    #[test]
    fn stiffness_examples() {
        let g = SlabGeometry::default();
        assert_eq!(stiffness_at(&StiffnessField::two_region(&g), &[2.0, 5.0, 1.0]), 7.5);
        assert_eq!(stiffness_at(&StiffnessField::two_region(&g), &[7.0, 5.0, 1.0]), 15.0);
        let s = StiffnessField::scar();
        assert_eq!(stiffness_at(&s, &[3.0, 3.0, 1.0]), 15.0);
        assert_eq!(stiffness_at(&s, &[9.0, 9.0, 1.0]), 7.5);
        // radii resolve to the inner region
        assert_eq!(stiffness_at(&s, &[4.0, 3.0, 1.0]), 15.0);
        assert_eq!(stiffness_at(&s, &[4.5, 3.0, 1.0]), 12.5);
        assert_eq!(stiffness_at(&s, &[4.9, 3.0, 1.0]), 10.0);
    }

    #[test]
    fn lattice_counts() {
        let g = SlabGeometry::default();
        assert_eq!(g.lattice(0.2).unwrap().len(), 51 * 51 * 11);
        assert_eq!(g.lattice(0.4).unwrap().len(), 26 * 26 * 6);
        assert!(g.lattice(3.0).is_err());
    }

    proptest! {
        #[test]
        fn scar_classification_is_nested(x in 0.0..10.0f64, y in 0.0..10.0f64, z in 0.0..2.0f64) {
            let s = StiffnessField::scar();
            let r = ((x - 3.0).powi(2) + (y - 3.0).powi(2) + (z - 1.0).powi(2)).sqrt();
            let v = stiffness_at(&s, &[x, y, z]);
            let expect = if r <= 1.0 { 15.0 } else if r <= 1.5 { 12.5 } else if r <= 2.0 { 10.0 } else { 7.5 };
            prop_assert_eq!(v, expect);
        }
    }
}
