use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, BfgsConfig, BfgsState, StepStatus};
use crate::error::{Error, Result};
use crate::losses::{PinnModel, PointSets, Term};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePlan {
    pub adam: usize,
    /// Upper bound on quasi-Newton iterations; the phase also ends on
    /// convergence or line-search failure.
    pub bfgs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    TwoPhase { pretrain: PhasePlan, train: PhasePlan },
    AdamOnly { epochs: usize },
}

impl Schedule {
    pub fn paper(n_adam: usize, n_bfgs: usize) -> Self {
        Schedule::TwoPhase {
            pretrain: PhasePlan {
                adam: 600,
                bfgs: 5000,
            },
            train: PhasePlan {
                adam: n_adam,
                bfgs: n_bfgs,
            },
        }
    }

    pub fn empty() -> Self {
        let zero = PhasePlan { adam: 0, bfgs: 0 };
        Schedule::TwoPhase {
            pretrain: zero,
            train: zero,
        }
    }

    /// Upper bound on epochs, counting one per ADAM step or BFGS iteration.
    pub fn max_epochs(&self) -> usize {
        match self {
            Schedule::TwoPhase { pretrain, train } => {
                pretrain.adam + pretrain.bfgs + train.adam + train.bfgs
            }
            Schedule::AdamOnly { epochs } => *epochs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub schedule: Schedule,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub bfgs: BfgsConfig,
    /// Gradient tolerance that ends pre-training BFGS.
    #[serde(default = "default_pretrain_tol")]
    pub pretrain_grad_tol: f64,
    /// Log every n-th epoch (and always at phase ends). Zero logs phase ends only.
    #[serde(default = "one")]
    pub log_every: usize,
    /// Checkpoint every n-th epoch; zero disables periodic checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Trainable scalars are optimized in units of `scalar_scale · |θ0_k|`
    /// rather than in physical units. Zero keeps physical units.
    #[serde(default = "default_scalar_scale")]
    pub scalar_scale: f64,
    /// Fixed factor for the stiffness-network block; 1 keeps raw units.
    #[serde(default = "default_field_scale")]
    pub field_scale: f64,
}

fn default_pretrain_tol() -> f64 {
    1e-8
}
fn one() -> usize {
    1
}
fn default_scalar_scale() -> f64 {
    10.0
}
fn default_field_scale() -> f64 {
    10.0
}

impl TrainSettings {
    pub fn new(schedule: Schedule) -> Self {
        Self {
            schedule,
            adam: AdamConfig::default(),
            bfgs: BfgsConfig::default(),
            pretrain_grad_tol: default_pretrain_tol(),
            log_every: 1,
            checkpoint_every: 0,
            scalar_scale: default_scalar_scale(),
            field_scale: default_field_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bfgs.validate()?;
        if !(self.pretrain_grad_tol > 0.0) {
            return Err(Error::Config("pretrain_grad_tol must be positive".into()));
        }
        if !(self.scalar_scale >= 0.0 && self.scalar_scale.is_finite()) {
            return Err(Error::Config("scalar_scale must be finite and non-negative".into()));
        }
        if !(self.field_scale > 0.0 && self.field_scale.is_finite()) {
            return Err(Error::Config("field_scale must be finite and positive".into()));
        }
        let a = self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0)
        {
            return Err(Error::Config(format!("invalid ADAM settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Init,
    PretrainAdam,
    PretrainBfgs,
    Adam,
    Bfgs,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::PretrainAdam => "pretrain-adam",
            Phase::PretrainBfgs => "pretrain-bfgs",
            Phase::Adam => "adam",
            Phase::Bfgs => "bfgs",
        }
    }
    fn is_pretrain(self) -> bool {
        matches!(self, Phase::PretrainAdam | Phase::PretrainBfgs)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// What the trainer optimizes. Pre-training only touches the leading
/// `pretrain_dim` entries of θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Full,
}

pub trait Problem {
    fn dim(&self) -> usize;
    fn pretrain_dim(&self) -> usize;
    /// Objective and its gradient over the full θ.
    fn objective(&self, theta: &[f64], stage: Stage) -> Result<(f64, Vec<f64>)>;
    /// Term values for logging: `(split, term, raw, weighted)`.
    fn breakdown(&self, theta: &[f64]) -> Result<Vec<(Split, String, f64, f64)>>;
    /// Indices of physical scalars that the trainer may rescale.
    fn scalar_range(&self) -> std::ops::Range<usize> {
        0..0
    }
    /// Indices of the stiffness-network weights.
    fn field_range(&self) -> std::ops::Range<usize> {
        0..0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub phase: Phase,
    pub term: String,
    pub raw: f64,
    pub weighted: f64,
    pub split: Split,
}

pub const LOG_HEADER: &str = "epoch,phase,term,raw,weighted,split";

pub fn write_log_rows<W: Write>(out: &mut W, rows: &[LogRow]) -> std::io::Result<()> {
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:e},{:e},{}",
            r.epoch,
            r.phase.name(),
            r.term,
            r.raw,
            r.weighted,
            r.split.name()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub phase: Phase,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub epoch: usize,
    pub loss: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub rows: Vec<LogRow>,
    pub spans: Vec<PhaseSpan>,
    pub epochs: usize,
    pub theta: Vec<f64>,
    /// Lowest full objective seen outside pre-training.
    pub best: Option<Best>,
    pub notes: Vec<String>,
    pub evaluations: usize,
}

/// Optimizer state handed to checkpoint hooks.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerState<'a> {
    None,
    Adam(&'a AdamState),
    Bfgs(&'a BfgsState),
}

/// Side channel for streaming logs and writing checkpoints.
pub trait Observer {
    fn rows(&mut self, _rows: &[LogRow]) -> Result<()> {
        Ok(())
    }
    fn checkpoint(
        &mut self,
        _epoch: usize,
        _phase: Phase,
        _theta: &[f64],
        _state: OptimizerState<'_>,
    ) -> Result<()> {
        Ok(())
    }
    /// Called with the last finite parameters before a poisoned run aborts.
    fn abort(&mut self, _epoch: usize, _phase: Phase, _theta: &[f64]) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;
impl Observer for NoObserver {}

struct Trainer<'a, P: Problem, O: Observer> {
    problem: &'a P,
    settings: TrainSettings,
    observer: &'a mut O,
    theta: Vec<f64>,
    /// Diagonal change of variables θ = D z used by both optimizers.
    scale: Vec<f64>,
    epoch: usize,
    record: TrainingRecord,
    /// Last θ at which the full objective was defined.
    admissible: Vec<f64>,
}

const MAX_RETREATS: usize = 40;

impl<P: Problem, O: Observer> Trainer<'_, P, O> {
    /// Objective at θ. In the full stage an inverted element pulls θ back
    /// toward the last admissible iterate by halving until J > 0 everywhere.
    fn evaluate(&mut self, phase: Phase, stage: Stage) -> Result<(f64, Vec<f64>)> {
        let mut halvings = 0;
        loop {
            self.record.evaluations += 1;
            match self.problem.objective(&self.theta, stage) {
                Ok((f, g)) if f.is_finite() => {
                    if halvings > 0 {
                        self.record.notes.push(format!(
                            "{phase}: epoch {}: step halved {halvings} times to keep J > 0",
                            self.epoch
                        ));
                    }
                    if stage == Stage::Full {
                        self.admissible.clone_from(&self.theta);
                    }
                    return Ok((f, g));
                }
                Ok(_) => return Err(Error::NonFinite { term: "loss", index: 0 }),
                Err(Error::InvertedElement { .. }) if stage == Stage::Full && halvings < MAX_RETREATS => {
                    for (t, a) in self.theta.iter_mut().zip(&self.admissible) {
                        *t = a + 0.5 * (*t - a);
                    }
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn log(&mut self, phase: Phase) -> Result<()> {
        let values = self.problem.breakdown(&self.theta)?;
        let rows: Vec<LogRow> = values
            .into_iter()
            .map(|(split, term, raw, weighted)| LogRow {
                epoch: self.epoch,
                phase,
                term,
                raw,
                weighted,
                split,
            })
            .collect();
        self.observer.rows(&rows)?;
        self.record.rows.extend(rows);
        Ok(())
    }

    fn after_epoch(&mut self, phase: Phase, state: OptimizerState<'_>) -> Result<()> {
        let s = self.settings;
        if s.log_every > 0 && self.epoch.is_multiple_of(s.log_every) {
            self.log(phase)?;
        }
        if s.checkpoint_every > 0 && self.epoch.is_multiple_of(s.checkpoint_every) {
            self.observer
                .checkpoint(self.epoch, phase, &self.theta, state)?;
        }
        Ok(())
    }

    fn end_phase(&mut self, phase: Phase, start: usize) -> Result<()> {
        self.record.spans.push(PhaseSpan {
            phase,
            start,
            end: self.epoch,
        });
        let logged = self.record.rows.last().is_some_and(|r| r.epoch == self.epoch);
        if !logged {
            self.log(phase)?;
        }
        Ok(())
    }

    fn consider_best(&mut self, phase: Phase, loss: f64, theta: &[f64], epoch: usize) {
        if phase.is_pretrain() {
            return;
        }
        if self.record.best.as_ref().is_none_or(|b| loss < b.loss) {
            self.record.best = Some(Best {
                epoch,
                loss,
                theta: theta.to_vec(),
            });
        }
    }

    fn poisoned(&mut self, phase: Phase, source: Error) -> Error {
        let _ = self.observer.abort(self.epoch, phase, &self.theta);
        Error::Training {
            epoch: self.epoch,
            phase: phase.name(),
            source: Box::new(source),
        }
    }

    fn stage_dim(&self, phase: Phase) -> (Stage, usize) {
        if phase.is_pretrain() {
            (Stage::Pretrain, self.problem.pretrain_dim())
        } else {
            (Stage::Full, self.problem.dim())
        }
    }

    fn run_adam(&mut self, phase: Phase, steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        let start = self.epoch;
        let (stage, k) = self.stage_dim(phase);
        let mut state = AdamState::new(k, self.settings.adam);
        let d = self.scale[..k].to_vec();
        let mut z: Vec<f64> = self.theta[..k].iter().zip(&d).map(|(t, d)| t / d).collect();
        for _ in 0..steps {
            let stepped = self.theta.clone();
            let (f, g) = match self.evaluate(phase, stage) {
                Ok(v) => v,
                Err(e) => return Err(self.poisoned(phase, e)),
            };
            if self.theta != stepped {
                for (z, (t, d)) in z.iter_mut().zip(self.theta[..k].iter().zip(&d)) {
                    *z = t / d;
                }
            }
            let before = self.theta.clone();
            self.consider_best(phase, f, &before, self.epoch);
            let gz: Vec<f64> = g[..k].iter().zip(&d).map(|(g, d)| g * d).collect();
            if let Err(e) = state.step(&mut z, &gz) {
                return Err(self.poisoned(phase, e));
            }
            for ((t, z), d) in self.theta[..k].iter_mut().zip(&z).zip(&d) {
                *t = z * d;
            }
            self.epoch += 1;
            self.after_epoch(phase, OptimizerState::Adam(&state))?;
        }
        // The final iterate has not been scored yet.
        if !phase.is_pretrain() {
            if let Ok((f, _)) = self.problem.objective(&self.theta, stage) {
                self.record.evaluations += 1;
                let theta = self.theta.clone();
                self.consider_best(phase, f, &theta, self.epoch);
            }
        }
        self.end_phase(phase, start)
    }

    fn run_bfgs(&mut self, phase: Phase, max_iter: usize) -> Result<()> {
        if max_iter == 0 {
            return Ok(());
        }
        let start = self.epoch;
        let (stage, k) = self.stage_dim(phase);
        let mut cfg = self.settings.bfgs;
        if phase.is_pretrain() {
            cfg.grad_tol = self.settings.pretrain_grad_tol;
        }
        if stage == Stage::Full {
            if let Err(e) = self.evaluate(phase, stage) {
                return Err(self.poisoned(phase, e));
            }
        }
        let problem = self.problem;
        let frozen = self.theta.clone();
        let d = self.scale[..k].to_vec();
        let unscale = |z: &[f64]| -> Vec<f64> {
            let mut full = frozen.clone();
            for ((t, z), d) in full.iter_mut().zip(z).zip(&d) {
                *t = z * d;
            }
            full
        };
        let mut oracle = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (f, mut g) = problem.objective(&unscale(z), stage)?;
            g.truncate(k);
            for (g, d) in g.iter_mut().zip(&d) {
                *g *= d;
            }
            Ok((f, g))
        };
        let mut x: Vec<f64> = self.theta[..k].iter().zip(&d).map(|(t, d)| t / d).collect();
        let mut state = match BfgsState::new(cfg, &x, &mut oracle) {
            Ok(s) => s,
            Err(e) => return Err(self.poisoned(phase, e)),
        };
        let theta = self.theta.clone();
        self.consider_best(phase, state.f, &theta, self.epoch);
        let mut evals_seen = state.evaluations;
        for _ in 0..max_iter {
            let report = match state.step(&mut x, &mut oracle) {
                Ok(r) => r,
                Err(e) => return Err(self.poisoned(phase, e)),
            };
            self.record.evaluations += state.evaluations - evals_seen;
            evals_seen = state.evaluations;
            if report.alpha > 0.0 {
                self.theta = unscale(&x);
                self.epoch += 1;
                let theta = self.theta.clone();
                self.consider_best(phase, state.f, &theta, self.epoch);
                self.after_epoch(phase, OptimizerState::Bfgs(&state))?;
            }
            match report.status {
                StepStatus::Progress => {}
                StepStatus::Converged => {
                    self.record
                        .notes
                        .push(format!("{phase}: converged at epoch {}", self.epoch));
                    break;
                }
                StepStatus::LineSearchFailed => {
                    self.record.notes.push(format!(
                        "{phase}: line search failed at epoch {}, f = {:e}",
                        self.epoch, state.f
                    ));
                    break;
                }
            }
        }
        self.record.evaluations += 1;
        self.end_phase(phase, start)
    }
}

/// Runs the schedule from `theta0`. Pre-training fits only the leading
/// block of θ to the observation term; the remainder is held fixed.
pub fn train<P: Problem, O: Observer>(
    problem: &P,
    settings: &TrainSettings,
    theta0: Vec<f64>,
    observer: &mut O,
) -> Result<TrainingRecord> {
    settings.validate()?;
    if theta0.len() != problem.dim() {
        return Err(Error::Dimension {
            expected: problem.dim(),
            got: theta0.len(),
        });
    }
    let mut scale = vec![1.0; theta0.len()];
    for i in problem.field_range() {
        scale[i] = settings.field_scale;
    }
    if settings.scalar_scale > 0.0 {
        for i in problem.scalar_range() {
            let m = theta0[i].abs();
            scale[i] = settings.scalar_scale * if m > 0.0 { m } else { 1.0 };
        }
    }
    let mut t = Trainer {
        problem,
        settings: *settings,
        observer,
        admissible: theta0.clone(),
        theta: theta0,
        scale,
        epoch: 0,
        record: TrainingRecord {
            rows: Vec::new(),
            spans: Vec::new(),
            epochs: 0,
            theta: Vec::new(),
            best: None,
            notes: Vec::new(),
            evaluations: 0,
        },
    };
    if settings.schedule.max_epochs() > 0 {
        t.log(Phase::Init)?;
    }
    match settings.schedule {
        Schedule::TwoPhase { pretrain, train } => {
            t.run_adam(Phase::PretrainAdam, pretrain.adam)?;
            t.run_bfgs(Phase::PretrainBfgs, pretrain.bfgs)?;
            t.run_adam(Phase::Adam, train.adam)?;
            t.run_bfgs(Phase::Bfgs, train.bfgs)?;
        }
        Schedule::AdamOnly { epochs } => t.run_adam(Phase::Adam, epochs)?,
    }
    if settings.checkpoint_every > 0 && !t.epoch.is_multiple_of(settings.checkpoint_every) {
        let phase = t.record.spans.last().map(|s| s.phase).unwrap_or(Phase::Init);
        t.observer
            .checkpoint(t.epoch, phase, &t.theta, OptimizerState::None)?;
    }
    let mut record = t.record;
    record.epochs = t.epoch;
    record.theta = t.theta;
    Ok(record)
}

/// The PINN loss as a training problem.
pub struct PinnProblem<'a> {
    pub model: &'a PinnModel,
    pub train: &'a PointSets,
    pub test: Option<&'a PointSets>,
    terms: Vec<Term>,
}

impl<'a> PinnProblem<'a> {
    pub fn new(model: &'a PinnModel, train: &'a PointSets, test: Option<&'a PointSets>) -> Result<Self> {
        model.validate()?;
        let terms = model.applicable(train);
        if !terms.contains(&Term::Obs) {
            return Err(Error::EmptySet("observations"));
        }
        Ok(Self {
            model,
            train,
            test,
            terms,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
}

impl Problem for PinnProblem<'_> {
    fn dim(&self) -> usize {
        self.model.layout().len()
    }

    fn pretrain_dim(&self) -> usize {
        self.model.layout().n_u
    }

    fn objective(&self, theta: &[f64], stage: Stage) -> Result<(f64, Vec<f64>)> {
        let terms: &[Term] = match stage {
            Stage::Pretrain => &[Term::Obs],
            Stage::Full => &self.terms,
        };
        let e = self.model.evaluate(theta, self.train, terms, true)?;
        Ok((e.objective, e.grad))
    }

    fn scalar_range(&self) -> std::ops::Range<usize> {
        self.model.layout().scalars()
    }

    fn field_range(&self) -> std::ops::Range<usize> {
        self.model.layout().mu()
    }

    fn breakdown(&self, theta: &[f64]) -> Result<Vec<(Split, String, f64, f64)>> {
        let mut out = Vec::new();
        let splits = [(Split::Train, Some(self.train)), (Split::Test, self.test)];
        for (split, sets) in splits {
            let Some(sets) = sets else { continue };
            let terms: Vec<Term> = self
                .terms
                .iter()
                .copied()
                .filter(|t| self.model.applicable(sets).contains(t))
                .collect();
            let e = match self.model.evaluate(theta, sets, &terms, false) {
                Ok(e) => e,
                // Only logged here, not optimized (pretraining, or the test
                // split): record the stress terms as NaN and keep going.
                Err(Error::InvertedElement { .. }) => {
                    let needs_j = |t: &Term| matches!(t, Term::Pde | Term::BcNeumann | Term::BcRobin);
                    let rest: Vec<Term> = terms.iter().copied().filter(|t| !needs_j(t)).collect();
                    let e = self.model.evaluate(theta, sets, &rest, false)?;
                    for t in &terms {
                        let v = e.breakdown.get(*t).map_or((f64::NAN, f64::NAN), |v| (v.raw, v.weighted));
                        out.push((split, t.name().to_string(), v.0, v.1));
                    }
                    out.push((split, "total".to_string(), f64::NAN, f64::NAN));
                    continue;
                }
                Err(e) => return Err(e),
            };
            for v in &e.breakdown.terms {
                out.push((split, v.term.name().to_string(), v.raw, v.weighted));
            }
            out.push((split, "total".to_string(), e.breakdown.total, e.breakdown.total));
        }
        Ok(out)
    }
}
