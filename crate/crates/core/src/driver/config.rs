use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::data::ManufacturedField;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, PdeForm};
use crate::mechanics::MaterialModel;
use crate::optim::TrainSettings;
use crate::sampling::{SamplingPlan, SlabGeometry, StiffnessField};

/// Follower pressure on the lateral faces and spring stiffness on the
/// top and bottom faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Loading {
    pub pressure: f64,
    pub robin_k: f64,
}

impl Default for Loading {
    fn default() -> Self {
        Self {
            pressure: -8.0,
            robin_k: 10.0,
        }
    }
}

/// How the material parameters enter the PINN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Parametrization {
    /// Every parameter at its configured value.
    Fixed,
    /// Named parameters become trainable scalars.
    Scalars {
        names: Vec<String>,
        /// Explicit initial values; otherwise `init_factor` times the truth.
        #[serde(default)]
        init: Option<Vec<f64>>,
        #[serde(default = "default_init_factor")]
        init_factor: f64,
    },
    /// Parameter 0 is one trainable scalar on each side of `x = split`.
    Regions { split: f64, init: [f64; 2] },
    /// Parameter 0 is the output of a second network.
    Field {
        mu_prior: f64,
        #[serde(default = "yes")]
        softplus: bool,
    },
}

fn default_init_factor() -> f64 {
    1.5
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic data from a closed-form displacement that exactly solves
    /// the boundary value problem with matching body force and boundary data.
    Manufactured {
        #[serde(default = "ManufacturedField::standard")]
        field: ManufacturedField,
        /// Include Green-Lagrange strain observations.
        #[serde(default)]
        strain: bool,
        /// Observe voxel averages on a grid of this spacing (mm).
        #[serde(default)]
        resolution: Option<f64>,
    },
    /// Observations from an FEM solution in the CSV format of `data`.
    /// Body force and boundary data are taken as zero.
    FemImport {
        path: PathBuf,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
}

/// One LD value or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LdList(pub Vec<f64>);

impl<'de> Deserialize<'de> for LdList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(f64),
            Many(Vec<f64>),
        }
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(v) => LdList(vec![v]),
            OneOrMany::Many(v) => LdList(v),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub ld: LdList,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierConfig {
    pub m: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "u_hidden")]
    pub u_hidden: Vec<usize>,
    #[serde(default = "mu_hidden")]
    pub mu_hidden: Vec<usize>,
    /// Divide input coordinates by the slab extent.
    #[serde(default = "yes")]
    pub scale_inputs: bool,
    #[serde(default)]
    pub fourier: Option<FourierConfig>,
}

fn u_hidden() -> Vec<usize> {
    vec![32, 16, 8]
}
fn mu_hidden() -> Vec<usize> {
    vec![12, 8, 4]
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            u_hidden: u_hidden(),
            mu_hidden: mu_hidden(),
            scale_inputs: true,
            fourier: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    /// Lattice spacing (mm) of the exported prediction fields.
    pub spacing: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self { spacing: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub geometry: SlabGeometry,
    /// Law used inside the PINN. Its parameter values double as ground
    /// truth for trainable scalars.
    pub material: MaterialModel,
    /// Law that generated the data, when it differs from `material`.
    #[serde(default)]
    pub truth_material: Option<MaterialModel>,
    /// Heterogeneous ground truth for parameter 0.
    #[serde(default)]
    pub stiffness: Option<StiffnessField>,
    #[serde(default)]
    pub loading: Loading,
    pub parametrization: Parametrization,
    pub data: DataSource,
    pub sampling: SamplingPlan,
    #[serde(default)]
    pub test_sampling: Option<SamplingPlan>,
    pub noise: NoiseConfig,
    pub weights: LossWeights,
    #[serde(default)]
    pub pde_form: PdeForm,
    #[serde(default)]
    pub network: NetworkConfig,
    pub training: TrainSettings,
    pub seeds: Vec<u64>,
    /// Seed of the point sets and noise, shared by all replicates.
    #[serde(default)]
    pub data_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub determinism: bool,
    #[serde(default)]
    pub export: ExportConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn truth_law(&self) -> &MaterialModel {
        self.truth_material.as_ref().unwrap_or(&self.material)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("name must not be empty".into()));
        }
        self.geometry.validate()?;
        self.material.validate()?;
        if let Some(t) = &self.truth_material {
            t.validate()?;
        }
        if let Some(s) = &self.stiffness {
            s.validate()?;
        }
        self.sampling.validate()?;
        if let Some(t) = &self.test_sampling {
            t.validate()?;
        }
        self.weights.validate()?;
        self.training.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one replicate seed is required".into()));
        }
        if self.noise.ld.0.is_empty() || self.noise.ld.0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("noise.ld must hold one or more values >= 0".into()));
        }
        if !(self.export.spacing > 0.0) {
            return Err(Error::Config("export.spacing must be positive".into()));
        }
        if self.network.u_hidden.is_empty() || self.network.mu_hidden.is_empty() {
            return Err(Error::Config("network hidden layers must be non-empty".into()));
        }
        if let Some(f) = self.network.fourier {
            if f.m == 0 || !(f.sigma > 0.0) {
                return Err(Error::Config("fourier needs m >= 1 and sigma > 0".into()));
            }
        }
        let names = self.material.param_names();
        match &self.parametrization {
            Parametrization::Fixed => {}
            Parametrization::Scalars {
                names: chosen,
                init,
                init_factor,
            } => {
                if chosen.is_empty() {
                    return Err(Error::Config("scalar mode needs at least one name".into()));
                }
                for n in chosen {
                    if !names.contains(&n.as_str()) {
                        return Err(Error::Config(format!(
                            "`{n}` is not a parameter of this law (expected one of {names:?})"
                        )));
                    }
                }
                let mut sorted = chosen.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != chosen.len() {
                    return Err(Error::Config("duplicate trainable parameter".into()));
                }
                if let Some(v) = init {
                    if v.len() != chosen.len() {
                        return Err(Error::Config("init must match names in length".into()));
                    }
                }
                if !(*init_factor > 0.0) {
                    return Err(Error::Config("init_factor must be positive".into()));
                }
            }
            Parametrization::Regions { init, .. } => {
                if init.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Config("region initial values must be positive".into()));
                }
            }
            Parametrization::Field { mu_prior, .. } => {
                if !(*mu_prior > 0.0) {
                    return Err(Error::Config("mu_prior must be positive".into()));
                }
            }
        }
        if self.weights.prior > 0.0 && !matches!(self.parametrization, Parametrization::Field { .. }) {
            return Err(Error::Config("the prior weight needs field mode".into()));
        }
        if let DataSource::Manufactured {
            resolution: Some(r), ..
        } = &self.data
        {
            if !(*r > 0.0) {
                return Err(Error::Config("data.resolution must be positive".into()));
            }
        }
        if self.weights.obs_strain > 0.0 {
            let has = matches!(self.data, DataSource::Manufactured { strain: true, .. });
            let fem = matches!(self.data, DataSource::FemImport { .. });
            if !has && !fem {
                return Err(Error::Config("obs_strain weight set but data.strain is false".into()));
            }
        }
        Ok(())
    }
}

/// Applies a `dotted.key=value` override to a JSON document. The value is
/// parsed as JSON when possible and taken as a string otherwise. Unknown
/// keys are errors.
pub fn apply_override(doc: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            serde_json::Value::Object(map) => {
                if !map.contains_key(*part) {
                    return Err(Error::Config(format!("unknown key `{key}` (at `{part}`)")));
                }
                map.get_mut(*part).expect("checked")
            }
            serde_json::Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("`{part}` in `{key}` is not an index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{key}`")))?
            }
            _ => return Err(Error::Config(format!("`{key}` descends into a scalar"))),
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    unreachable!("split always yields at least one part")
}

/// Parses `text`, applies every override, and validates the result.
/// Overrides address the fully resolved document, so keys left to their
/// defaults in `text` can still be set.
pub fn config_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let parsed: ExperimentConfig = serde_json::from_str(text)?;
    let mut doc = serde_json::to_value(&parsed)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::preset;

    fn text() -> String {
        preset("two-region-field").unwrap().to_json().unwrap()
    }

    #[test]
    fn overrides_reach_nested_keys_and_arrays() {
        let c = config_with_overrides(
            &text(),
            &[
                "noise.ld=0.05".into(),
                "training.adam.lr=2e-3".into(),
                "network.u_hidden.1=20".into(),
                "name=sweep".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.noise.ld, LdList(vec![0.05]));
        assert_eq!(c.training.adam.lr, 2e-3);
        assert_eq!(c.network.u_hidden, vec![32, 20, 8]);
        assert_eq!(c.name, "sweep");
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in ["noise.sigma=1", "training.adam.learning_rate=1", "nope=1", "network.u_hidden.7=1", "name.x=1", "noise"] {
            let e = config_with_overrides(&text(), &[bad.to_string()]).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{bad}: {e}");
        }
        let mut doc: serde_json::Value = serde_json::from_str(&text()).unwrap();
        doc["extra"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn overrides_that_break_validation_fail() {
        assert!(config_with_overrides(&text(), &["noise.ld=-0.1".into()]).is_err());
        assert!(config_with_overrides(&text(), &["sampling.n_obs=0".into()]).is_err());
    }

    #[test]
    fn defaulted_keys_can_be_overridden() {
        let mut doc: serde_json::Value = serde_json::from_str(&text()).unwrap();
        doc["training"].as_object_mut().unwrap().remove("log_every");
        let c = config_with_overrides(&doc.to_string(), &["training.log_every=7".into()]).unwrap();
        assert_eq!(c.training.log_every, 7);
    }

    #[test]
    fn ld_accepts_scalar_or_list() {
        let one: NoiseConfig = serde_json::from_str(r#"{"ld":0.1}"#).unwrap();
        let many: NoiseConfig = serde_json::from_str(r#"{"ld":[0,0.05]}"#).unwrap();
        assert_eq!(one.ld.0, vec![0.1]);
        assert_eq!(many.ld.0, vec![0.0, 0.05]);
    }
}
