use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::assemble::{assemble, truth_stress, Assembled};
use super::config::{ExperimentConfig, Parametrization};
use crate::data::ManufacturedProblem;
use crate::error::{Error, Result};
use crate::losses::{error_metrics, predict_point, stiffness_error, Metrics, PinnModel, StiffnessTruth};
use crate::network::MlpSpec;
use crate::optim::{
    train, write_log_rows, LogRow, Observer, OptimizerState, Phase, PinnProblem, Problem, Split, Stage,
    TrainingRecord, LOG_HEADER,
};
use crate::sampling::{SlabGeometry, StiffnessField};
use crate::tensor::Mat3;

/// Trained state on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedCheckpoint {
    pub epoch: usize,
    pub phase: Phase,
    pub u_spec: MlpSpec,
    pub mu_spec: Option<MlpSpec>,
    pub scalar_names: Vec<String>,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub optimizer: serde_json::Value,
}

impl TrainedCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string(self)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn scalars(&self) -> &[f64] {
        &self.theta[self.theta.len() - self.scalar_names.len()..]
    }
}

/// Adds the stiffness error and the trainable scalars to each logged
/// breakdown so trajectories of the estimate end up in the loss CSV.
struct Monitored<'a> {
    inner: PinnProblem<'a>,
    stiffness: Option<&'a StiffnessTruth>,
    names: &'a [String],
}

impl Problem for Monitored<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn pretrain_dim(&self) -> usize {
        self.inner.pretrain_dim()
    }
    fn objective(&self, theta: &[f64], stage: Stage) -> Result<(f64, Vec<f64>)> {
        self.inner.objective(theta, stage)
    }
    fn scalar_range(&self) -> std::ops::Range<usize> {
        self.inner.scalar_range()
    }
    fn field_range(&self) -> std::ops::Range<usize> {
        self.inner.field_range()
    }
    fn breakdown(&self, theta: &[f64]) -> Result<Vec<(Split, String, f64, f64)>> {
        let mut rows = self.inner.breakdown(theta)?;
        let model = self.inner.model;
        if let Some(e) = self.stiffness.map(|t| stiffness_error(model, theta, t)).transpose()?.flatten() {
            rows.push((Split::Test, "e_mu".into(), e, e));
        }
        let sc = &theta[model.layout().scalars()];
        for (name, v) in self.names.iter().zip(sc) {
            rows.push((Split::Train, format!("param_{name}"), *v, *v));
        }
        Ok(rows)
    }
}

struct RunObserver<'a> {
    csv: BufWriter<File>,
    dir: &'a Path,
    a: &'a Assembled,
}

impl RunObserver<'_> {
    fn write_checkpoint(&self, name: &str, epoch: usize, phase: Phase, theta: &[f64], state: OptimizerState<'_>) -> Result<()> {
        let ck = TrainedCheckpoint {
            epoch,
            phase,
            u_spec: self.a.model.u_spec.clone(),
            mu_spec: self.a.model.mu_spec.clone(),
            scalar_names: self.a.scalar_names.clone(),
            theta: theta.to_vec(),
            optimizer: serde_json::to_value(state)?,
        };
        ck.save(&self.dir.join(name))
    }
}

impl Observer for RunObserver<'_> {
    fn rows(&mut self, rows: &[LogRow]) -> Result<()> {
        write_log_rows(&mut self.csv, rows)?;
        Ok(())
    }
    fn checkpoint(&mut self, epoch: usize, phase: Phase, theta: &[f64], state: OptimizerState<'_>) -> Result<()> {
        self.csv.flush()?;
        self.write_checkpoint("checkpoint-latest.json", epoch, phase, theta, state)
    }
    fn abort(&mut self, epoch: usize, phase: Phase, theta: &[f64]) -> Result<()> {
        self.csv.flush()?;
        self.write_checkpoint("checkpoint-abort.json", epoch, phase, theta, OptimizerState::None)
    }
}

/// Final numbers of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub ld: f64,
    pub metrics: Metrics,
    pub scalar_names: Vec<String>,
    pub scalars: Vec<f64>,
    pub truth_scalars: Option<Vec<f64>>,
    /// Region-averaged stiffness ratio left/right, for two-region runs.
    pub region_ratio: Option<f64>,
    pub final_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs: usize,
    pub evaluations: usize,
    pub wall_seconds: f64,
    pub notes: Vec<String>,
    /// (epoch, E_μ) along training, when a stiffness truth exists.
    pub e_mu_trajectory: Vec<(usize, f64)>,
}

pub fn ld_label(ld: f64) -> String {
    format!("ld-{ld:.3}")
}

pub fn replicate_dir(cfg: &ExperimentConfig, ld: f64, seed: u64) -> PathBuf {
    cfg.output_dir
        .join(&cfg.name)
        .join(ld_label(ld))
        .join(format!("seed-{seed}"))
}

/// Trains and evaluates one (LD, seed) pair, writing its run directory.
pub fn run_replicate(cfg: &ExperimentConfig, ld: f64, seed: u64) -> Result<RunSummary> {
    let start = std::time::Instant::now();
    let dir = replicate_dir(cfg, ld, seed);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), cfg.to_json()?)?;
    fs::write(
        dir.join("seeds.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "seed": seed,
            "data_seed": cfg.data_seed,
            "ld": ld,
            "replicate_seeds": cfg.seeds,
        }))?,
    )?;
    let a = assemble(cfg, ld, seed)?;
    a.train.obs.write_csv(&dir.join("observations.csv"))?;

    let problem = Monitored {
        inner: PinnProblem::new(&a.model, &a.train, Some(&a.test))?,
        stiffness: a.stiffness_truth.as_ref(),
        names: &a.scalar_names,
    };
    let mut csv = BufWriter::new(File::create(dir.join("loss.csv"))?);
    writeln!(csv, "{LOG_HEADER}")?;
    let mut obs = RunObserver { csv, dir: &dir, a: &a };
    let record = train(&problem, &cfg.training, a.theta0.clone(), &mut obs);
    obs.csv.flush()?;
    let record = record?;
    let theta = chosen_theta(&record);
    obs.write_checkpoint("checkpoint-final.json", record.epochs, Phase::Bfgs, &record.theta, OptimizerState::None)?;
    if let Some(b) = &record.best {
        obs.write_checkpoint("checkpoint-best.json", b.epoch, Phase::Bfgs, &b.theta, OptimizerState::None)?;
    }

    let metrics = error_metrics(&a.model, &theta, &a.truth, a.stiffness_truth.as_ref())?;
    let fields = predict_fields(&a.model, &theta, &cfg.geometry.lattice(cfg.export.spacing)?);
    fields.write_csv(&dir.join("fields.csv"))?;
    if let Some(p) = &a.manufactured {
        truth_fields(p, &cfg.geometry, cfg.export.spacing)?.write_csv(&dir.join("fields_truth.csv"))?;
    }
    let scalars = theta[a.model.layout().scalars()].to_vec();
    let region_ratio = match (&cfg.parametrization, &cfg.stiffness) {
        (Parametrization::Regions { .. }, _) => Some(region_ratio_scalars(&scalars)?),
        (Parametrization::Field { .. }, Some(StiffnessField::TwoRegion { split, .. })) => {
            Some(region_ratio_field(&fields, *split)?)
        }
        _ => None,
    };
    let truth_scalars = match &a.stiffness_truth {
        Some(StiffnessTruth::Scalars(v)) => Some(v.clone()),
        _ => None,
    };
    let e_mu_trajectory = record
        .rows
        .iter()
        .filter(|r| r.term == "e_mu")
        .map(|r| (r.epoch, r.raw))
        .collect();
    let mut notes = record.notes.clone();
    if metrics.inverted_test_points > 0 {
        notes.push(format!(
            "prediction has J <= 0 at {} test points; E_stress not reported",
            metrics.inverted_test_points
        ));
    }
    let final_loss = problem.objective(&theta, Stage::Full).map(|(f, _)| f).unwrap_or(f64::NAN);
    let summary = RunSummary {
        seed,
        ld,
        metrics,
        scalar_names: a.scalar_names.clone(),
        scalars,
        truth_scalars,
        region_ratio,
        final_loss,
        best_epoch: record.best.as_ref().map(|b| b.epoch),
        epochs: record.epochs,
        evaluations: record.evaluations,
        wall_seconds: start.elapsed().as_secs_f64(),
        notes,
        e_mu_trajectory,
    };
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// The best full-loss iterate when one exists, else the final one.
pub fn chosen_theta(record: &TrainingRecord) -> Vec<f64> {
    record
        .best
        .as_ref()
        .map(|b| b.theta.clone())
        .unwrap_or_else(|| record.theta.clone())
}

/// One exported point; `valid` is false where the prediction has J ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub x: [f64; 3],
    pub u: [f64; 3],
    pub strain: Mat3<f64>,
    pub stress: Mat3<f64>,
    pub mu: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldRecord {
    pub points: Vec<FieldPoint>,
}

pub const FIELD_HEADER: &str =
    "x,y,z,ux,uy,uz,E11,E22,E33,E12,E13,E23,s11,s22,s33,s12,s13,s23,mu,valid";

impl FieldRecord {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{FIELD_HEADER}")?;
        let sym = |m: &Mat3<f64>| [m[0][0], m[1][1], m[2][2], m[0][1], m[0][2], m[1][2]];
        for p in &self.points {
            let mut cols: Vec<f64> = p.x.to_vec();
            cols.extend(p.u);
            cols.extend(sym(&p.strain));
            cols.extend(sym(&p.stress));
            cols.push(p.mu);
            let text: Vec<String> = cols.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{},{}", text.join(","), u8::from(p.valid))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: line + 2,
                    msg: e.to_string(),
                })?;
            if v.len() != 20 {
                return Err(Error::Parse {
                    line: line + 2,
                    msg: format!("expected 20 columns, got {}", v.len()),
                });
            }
            let unsym = |s: &[f64]| [[s[0], s[3], s[4]], [s[3], s[1], s[5]], [s[4], s[5], s[2]]];
            points.push(FieldPoint {
                x: [v[0], v[1], v[2]],
                u: [v[3], v[4], v[5]],
                strain: unsym(&v[6..12]),
                stress: unsym(&v[12..18]),
                mu: v[18],
                valid: v[19] != 0.0,
            });
        }
        Ok(Self { points })
    }
}

/// u, E, σ and μ of the trained model at the query points. Points where
/// the predicted deformation is inadmissible are flagged, not dropped.
pub fn predict_fields(model: &PinnModel, theta: &[f64], points: &[[f64; 3]]) -> FieldRecord {
    let nan = [[f64::NAN; 3]; 3];
    FieldRecord {
        points: points
            .iter()
            .map(|x| match predict_point(model, theta, x) {
                Ok((u, e, s, mu)) => FieldPoint {
                    x: *x,
                    u,
                    strain: e,
                    stress: s,
                    mu,
                    valid: true,
                },
                Err(_) => FieldPoint {
                    x: *x,
                    u: [f64::NAN; 3],
                    strain: nan,
                    stress: nan,
                    mu: f64::NAN,
                    valid: false,
                },
            })
            .collect(),
    }
}

/// Ground-truth fields of a manufactured problem on the export lattice.
pub fn truth_fields(p: &ManufacturedProblem, g: &SlabGeometry, spacing: f64) -> Result<FieldRecord> {
    let pts = g.lattice(spacing)?;
    let mut out = Vec::with_capacity(pts.len());
    for x in pts {
        out.push(FieldPoint {
            x,
            u: p.displacement(&x),
            strain: p.strain(&x),
            stress: truth_stress(p, &x)?,
            mu: p.params_at(&x)[0],
            valid: true,
        });
    }
    Ok(FieldRecord { points: out })
}

pub fn region_ratio_scalars(s: &[f64]) -> Result<f64> {
    match s {
        [l, r, ..] if *r != 0.0 => Ok(l / r),
        [_, _, ..] => Err(Error::ZeroNorm("right region")),
        _ => Err(Error::EmptySet("region scalars")),
    }
}

/// Ratio of region-averaged μ over valid exported points, split at `x = split`.
pub fn region_ratio_field(f: &FieldRecord, split: f64) -> Result<f64> {
    let (mut l, mut nl, mut r, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for p in f.points.iter().filter(|p| p.valid) {
        if p.x[0] < split {
            l += p.mu;
            nl += 1;
        } else {
            r += p.mu;
            nr += 1;
        }
    }
    if nl == 0 {
        return Err(Error::EmptySet("left region"));
    }
    if nr == 0 {
        return Err(Error::EmptySet("right region"));
    }
    region_ratio_scalars(&[l / nl as f64, r / nr as f64])
}

/// Per-LD aggregate over replicate seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub ld: f64,
    pub runs: Vec<RunSummary>,
    pub failed: Vec<(u64, String)>,
    /// Arithmetic means of the final metrics over successful runs.
    pub mean: Metrics,
    /// Geometric mean and envelope of the E_μ trajectories.
    pub trajectory: Option<Envelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub epochs: Vec<usize>,
    pub geometric_mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Non-positive samples left out of the geometric mean.
    pub excluded: usize,
}

/// Aligns trajectories on the union of their epochs, holding each one at
/// its last value past its end (and at its first value before its start).
pub fn envelope(trajectories: &[Vec<(usize, f64)>]) -> Option<Envelope> {
    let trajs: Vec<&Vec<(usize, f64)>> = trajectories.iter().filter(|t| !t.is_empty()).collect();
    if trajs.is_empty() {
        return None;
    }
    let mut epochs: Vec<usize> = trajs.iter().flat_map(|t| t.iter().map(|p| p.0)).collect();
    epochs.sort_unstable();
    epochs.dedup();
    let mut cursor = vec![0usize; trajs.len()];
    let mut env = Envelope {
        epochs: epochs.clone(),
        geometric_mean: Vec::with_capacity(epochs.len()),
        min: Vec::with_capacity(epochs.len()),
        max: Vec::with_capacity(epochs.len()),
        excluded: 0,
    };
    for &e in &epochs {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut log_sum = 0.0;
        let mut n = 0usize;
        for (k, t) in trajs.iter().enumerate() {
            while cursor[k] + 1 < t.len() && t[cursor[k] + 1].0 <= e {
                cursor[k] += 1;
            }
            let v = t[cursor[k]].1;
            lo = lo.min(v);
            hi = hi.max(v);
            if v > 0.0 {
                log_sum += v.ln();
                n += 1;
            } else {
                env.excluded += 1;
            }
        }
        env.geometric_mean
            .push(if n > 0 { (log_sum / n as f64).exp() } else { f64::NAN });
        env.min.push(lo);
        env.max.push(hi);
    }
    Some(env)
}

fn mean_metrics(runs: &[RunSummary]) -> Metrics {
    let avg = |f: &dyn Fn(&Metrics) -> Option<f64>| {
        let v: Vec<f64> = runs.iter().filter_map(|r| f(&r.metrics)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Metrics {
        e_mu: avg(&|m| m.e_mu),
        e_u: avg(&|m| m.e_u),
        e_strain: avg(&|m| m.e_strain),
        e_stress: avg(&|m| m.e_stress),
        inverted_test_points: runs.iter().map(|r| r.metrics.inverted_test_points).sum(),
    }
}

pub fn aggregate(ld: f64, runs: Vec<RunSummary>, failed: Vec<(u64, String)>) -> ReplicateReport {
    let trajectory = envelope(&runs.iter().map(|r| r.e_mu_trajectory.clone()).collect::<Vec<_>>());
    ReplicateReport {
        ld,
        mean: mean_metrics(&runs),
        runs,
        failed,
        trajectory,
    }
}

/// Runs every LD and seed of the configuration. A failing replicate is
/// reported and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReplicateReport>> {
    cfg.validate()?;
    let root = cfg.output_dir.join(&cfg.name);
    fs::create_dir_all(&root)?;
    fs::write(root.join("config.json"), cfg.to_json()?)?;
    let mut reports = Vec::new();
    for &ld in &cfg.noise.ld.0 {
        let mut runs = Vec::new();
        let mut failed = Vec::new();
        for &seed in &cfg.seeds {
            match run_replicate(cfg, ld, seed) {
                Ok(s) => runs.push(s),
                Err(e) => failed.push((seed, e.to_string())),
            }
        }
        let report = aggregate(ld, runs, failed);
        let dir = root.join(ld_label(ld));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        reports.push(report);
    }
    fs::write(root.join("summary.json"), serde_json::to_string_pretty(&reports)?)?;
    Ok(reports)
}

/// Metrics and field export for a checkpoint under the configuration that produced it.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, ck: &TrainedCheckpoint, ld: f64, seed: u64) -> Result<(Metrics, FieldRecord)> {
    let a = assemble(cfg, ld, seed)?;
    if ck.theta.len() != a.model.layout().len() {
        return Err(Error::Dimension {
            expected: a.model.layout().len(),
            got: ck.theta.len(),
        });
    }
    let mut model = a.model.clone();
    model.u_spec = ck.u_spec.clone();
    model.mu_spec = ck.mu_spec.clone();
    let m = error_metrics(&model, &ck.theta, &a.truth, a.stiffness_truth.as_ref())?;
    let f = predict_fields(&model, &ck.theta, &cfg.geometry.lattice(cfg.export.spacing)?);
    Ok((m, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{build_model, preset};

    #[test]
    fn zero_network_predicts_rest_state() {
        let cfg = preset("iso-homogeneous-s1").unwrap();
        let (model, _) = build_model(&cfg, 1).unwrap();
        let mut theta = vec![0.0; model.layout().len()];
        *theta.last_mut().unwrap() = 10.0;
        let pts = cfg.geometry.lattice(2.0).unwrap();
        let f = predict_fields(&model, &theta, &pts);
        assert_eq!(f.points.len(), pts.len());
        for p in &f.points {
            assert!(p.valid);
            assert_eq!(p.u, [0.0; 3]);
            assert!(p.strain.iter().flatten().all(|v| *v == 0.0));
            assert!(p.stress.iter().flatten().all(|v| v.abs() < 1e-12));
            assert_eq!(p.mu, 10.0);
        }
    }

    #[test]
    fn field_csv_round_trip_keeps_invalid_rows() {
        let mut rec = FieldRecord::default();
        let m = [[1.0, 0.5, -0.25], [0.5, 2.0, 0.125], [-0.25, 0.125, 3.0]];
        rec.points.push(FieldPoint {
            x: [0.1, 0.2, 0.3],
            u: [1e-3, -2e-3, 3e-4],
            strain: m,
            stress: m,
            mu: 7.5,
            valid: true,
        });
        rec.points.push(FieldPoint {
            x: [1.0, 2.0, 0.5],
            u: [f64::NAN; 3],
            strain: [[f64::NAN; 3]; 3],
            stress: [[f64::NAN; 3]; 3],
            mu: f64::NAN,
            valid: false,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        rec.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), FIELD_HEADER);
        let back = FieldRecord::read_csv(&path).unwrap();
        assert_eq!(back.points[0], rec.points[0]);
        assert!(!back.points[1].valid && back.points[1].mu.is_nan());
    }

    #[test]
    fn region_ratios() {
        assert_eq!(region_ratio_scalars(&[7.5, 15.0]).unwrap(), 0.5);
        assert!((region_ratio_scalars(&[7.05, 14.9]).unwrap() - 0.473).abs() < 1e-3);
        assert!(region_ratio_scalars(&[1.0]).is_err());
        assert!(region_ratio_scalars(&[1.0, 0.0]).is_err());

        let point = |x: f64, mu: f64, valid: bool| FieldPoint {
            x: [x, 0.0, 0.0],
            u: [0.0; 3],
            strain: [[0.0; 3]; 3],
            stress: [[0.0; 3]; 3],
            mu,
            valid,
        };
        let f = FieldRecord {
            points: vec![
                point(1.0, 7.0, true),
                point(2.0, 8.0, true),
                point(3.0, 100.0, false),
                point(6.0, 15.0, true),
            ],
        };
        assert_eq!(region_ratio_field(&f, 5.0).unwrap(), 0.5);
        assert!(region_ratio_field(&f, 0.5).is_err());
    }

    #[test]
    fn envelope_brackets_every_trajectory() {
        let a = vec![(0, 1.0), (10, 0.5), (20, 0.1)];
        let b = vec![(0, 0.8), (15, 0.2)];
        let env = envelope(&[a.clone(), b]).unwrap();
        assert_eq!(env.epochs, vec![0, 10, 15, 20]);
        assert_eq!(env.min, vec![0.8, 0.5, 0.2, 0.1]);
        assert_eq!(env.max, vec![1.0, 0.8, 0.5, 0.2]);
        for i in 0..env.epochs.len() {
            assert!(env.min[i] <= env.geometric_mean[i] && env.geometric_mean[i] <= env.max[i]);
        }
        assert!((env.geometric_mean[1] - (0.5f64 * 0.8).sqrt()).abs() < 1e-15);

        let single = envelope(std::slice::from_ref(&a)).unwrap();
        let values: Vec<f64> = a.iter().map(|p| p.1).collect();
        assert_eq!(single.min, values);
        assert_eq!(single.max, values);
        for (g, v) in single.geometric_mean.iter().zip(&values) {
            assert!((g - v).abs() < 1e-15);
        }
        assert!(envelope(&[]).is_none());
    }

    #[test]
    fn ld_labels_are_fixed_width() {
        assert_eq!(ld_label(0.0), "ld-0.000");
        assert_eq!(ld_label(0.05), "ld-0.050");
    }

    proptest::proptest! {
        #[test]
        fn envelope_bounds_each_trajectory_pointwise(
            trajs in proptest::collection::vec(
                proptest::collection::btree_map(0usize..200, 1e-6..10.0f64, 1..15),
                1..6,
            ),
        ) {
            let trajs: Vec<Vec<(usize, f64)>> = trajs.into_iter().map(|t| t.into_iter().collect()).collect();
            let env = envelope(&trajs).unwrap();
            for t in &trajs {
                for (i, &e) in env.epochs.iter().enumerate() {
                    // the value each trajectory holds at this epoch
                    let v = t.iter().rev().find(|p| p.0 <= e).unwrap_or(&t[0]).1;
                    proptest::prop_assert!(env.min[i] <= v && v <= env.max[i]);
                    proptest::prop_assert!(env.min[i] <= env.geometric_mean[i] * (1.0 + 1e-12));
                    proptest::prop_assert!(env.geometric_mean[i] <= env.max[i] * (1.0 + 1e-12));
                }
            }
        }
    }
}
