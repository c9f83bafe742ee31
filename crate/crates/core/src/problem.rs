//! Problem files, task pipelines and reports.
//!
//! A problem carries exactly one kernel source (a kernel table, an operator
//! kernel on a module, or a semigroup map), optionally a *-semigroup with an
//! action, and a task list. Running it yields a [`Report`] and an exit code:
//! 0 pass, 1 property violated, 2 undetermined, 3 input error.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::algebra::{validate_action, validate_semigroup, Action, AlgebraError, StarSemigroup};
use crate::dilation::{
    bound_constant, build_kolmogorov, build_representation, verify_linearisation, BoundForm, BoundOptions,
    DilationError, KolmogorovOptions,
};
use crate::kernels::{
    strong_positivity, twopos_diagnostics, weak_positivity, Kernel, KernelError, PositivityStatus,
    WeakPositivityOptions,
};
use crate::lifts::{
    lift_action, lift_operator_kernel, lift_semigroup_map, recover_operator_dilation, semigroup_lift_action,
    verify_factorization, LiftError, OperatorKernel, SemigroupMapT,
};
use crate::repkernel::{build_rk, rk_representation, verify_reproducing, RkError};
use crate::zspace::ZSpace;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_UNDETERMINED: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot parse problem: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid problem: {0}")]
    Schema(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dilation(#[from] DilationError),
    #[error(transparent)]
    Rk(#[from] RkError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error("cannot read or write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    CheckPositivity,
    Decompose,
    Represent,
    Bounds,
    Lift,
    Factorize,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::CheckPositivity => "check-positivity",
            Self::Decompose => "decompose",
            Self::Represent => "represent",
            Self::Bounds => "bounds",
            Self::Lift => "lift",
            Self::Factorize => "factorize",
            Self::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_owned())).ok()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupTable {
    #[serde(default)]
    pub size: Option<usize>,
    pub mult: Vec<Vec<usize>>,
    pub inv: Vec<usize>,
    #[serde(default)]
    pub unit: Option<usize>,
}

impl SemigroupTable {
    pub fn build(&self) -> Result<StarSemigroup, ProblemError> {
        if self.size.is_some_and(|n| n != self.mult.len()) {
            return Err(ProblemError::Schema("semigroup size does not match its table".into()));
        }
        Ok(StarSemigroup::new(self.mult.clone(), self.inv.clone(), self.unit)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub structural: f64,
    pub rank: f64,
    pub report: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { structural: 1e-9, rank: 1e-8, report: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    pub tolerances: Tolerances,
    /// Elements to bound; all elements when absent.
    pub bound_elements: Option<Vec<usize>>,
    pub bound_form: BoundForm,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 64,
            max_iters: 200,
            tolerances: Tolerances::default(),
            bound_elements: None,
            bound_form: BoundForm::Order,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub space: ZSpace,
    #[serde(default)]
    pub kernel: Option<Kernel>,
    #[serde(default)]
    pub operator_kernel: Option<OperatorKernel>,
    #[serde(default)]
    pub semigroup_map: Option<SemigroupMapT>,
    #[serde(default)]
    pub semigroup: Option<SemigroupTable>,
    #[serde(default)]
    pub action: Option<Action>,
    #[serde(default)]
    pub tasks: Vec<Command>,
    #[serde(default)]
    pub options: Options,
}

/// Command-line overrides applied on top of the file options.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub report_tol: Option<f64>,
    pub timestamp: bool,
}

/// The kernel every task operates on, after lifting if needed.
struct Prepared {
    kernel: Kernel,
    legend: Option<Vec<(usize, usize)>>,
    semigroup: Option<StarSemigroup>,
    action: Option<Action>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let p: ProblemFile = serde_json::from_str(text)?;
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<(), ProblemError> {
        let sources = [self.kernel.is_some(), self.operator_kernel.is_some(), self.semigroup_map.is_some()];
        match sources.iter().filter(|&&b| b).count() {
            1 => {}
            0 => return Err(ProblemError::Schema("one of kernel, operator_kernel, semigroup_map is required".into())),
            _ => {
                return Err(ProblemError::Schema(
                    "kernel, operator_kernel and semigroup_map are mutually exclusive".into(),
                ))
            }
        }
        let source_dim = if let Some(k) = &self.kernel {
            k.d()
        } else if let Some(l) = &self.operator_kernel {
            l.module.z_dim()
        } else {
            self.semigroup_map.as_ref().map_or(0, |t| t.space.dim())
        };
        if source_dim != self.space.dim() {
            return Err(ProblemError::Schema(format!(
                "space has dimension {}, kernel source has {source_dim}",
                self.space.dim()
            )));
        }
        if self.action.is_some() && self.semigroup.is_none() {
            return Err(ProblemError::Schema("action given without a semigroup".into()));
        }
        if self.semigroup_map.is_some() && self.semigroup.is_none() {
            return Err(ProblemError::Schema("semigroup_map needs a semigroup".into()));
        }
        Ok(())
    }

    fn prepare(&self) -> Result<Prepared, ProblemError> {
        let semigroup = self.semigroup.as_ref().map(SemigroupTable::build).transpose()?;
        if let Some(t) = &self.semigroup_map {
            let s = semigroup.expect("checked");
            let lifted = lift_semigroup_map(t, &s)?;
            let action = semigroup_lift_action(&s, t.q);
            return Ok(Prepared {
                kernel: lifted.kernel,
                legend: Some(lifted.legend),
                semigroup: Some(s),
                action: Some(action),
            });
        }
        if let Some(l) = &self.operator_kernel {
            let lifted = lift_operator_kernel(&l.module, l, self.options.tolerances.structural)?;
            let action = self.action.as_ref().map(|a| lift_action(a, l.module.dim()));
            return Ok(Prepared { kernel: lifted.kernel, legend: Some(lifted.legend), semigroup, action });
        }
        let kernel = self.kernel.clone().expect("checked").with_space(self.space);
        Ok(Prepared { kernel, legend: None, semigroup, action: self.action.clone() })
    }

    /// Tasks run by `command`: the command itself, or for `all` the file's task
    /// list (every applicable task when the list is empty).
    pub fn tasks_for(&self, command: Command) -> Vec<Command> {
        if command != Command::All {
            return vec![command];
        }
        let listed: Vec<Command> = self.tasks.iter().copied().filter(|&t| t != Command::All).collect();
        if !listed.is_empty() && !self.tasks.contains(&Command::All) {
            return listed;
        }
        let mut out = vec![Command::Validate, Command::CheckPositivity, Command::Decompose];
        if self.semigroup.is_some() && (self.action.is_some() || self.semigroup_map.is_some()) {
            out.extend([Command::Represent, Command::Bounds]);
        }
        if self.operator_kernel.is_some() || self.semigroup_map.is_some() {
            out.push(Command::Lift);
        }
        if self.semigroup_map.is_some() {
            out.push(Command::Factorize);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Violated,
    Undetermined,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass => EXIT_PASS,
            Self::Violated => EXIT_VIOLATED,
            Self::Undetermined => EXIT_UNDETERMINED,
        }
    }

    fn combine(self, other: Status) -> Status {
        use Status::*;
        match (self, other) {
            (Violated, _) | (_, Violated) => Violated,
            (Undetermined, _) | (_, Undetermined) => Undetermined,
            _ => Pass,
        }
    }

    fn from_defects(defects: &[f64], tol: f64) -> Status {
        if defects.iter().all(|&d| d <= tol) {
            Status::Pass
        } else {
            Status::Violated
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskReport {
    pub task: &'static str,
    pub status: Status,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub status: Status,
    pub exit_code: i32,
    pub seed: u64,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
    pub tasks: Vec<TaskReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

struct Ctx<'a> {
    problem: &'a ProblemFile,
    prep: Prepared,
    opts: Options,
}

impl Ctx<'_> {
    fn tol(&self) -> f64 {
        self.opts.tolerances.report
    }

    /// Report tolerance scaled by the kernel size, for absolute defects.
    fn scaled_tol(&self) -> f64 {
        self.tol() * self.prep.kernel.scale()
    }

    fn semigroup_and_action(&self, task: Command) -> Result<(&StarSemigroup, &Action), ProblemError> {
        match (&self.prep.semigroup, &self.prep.action) {
            (Some(s), Some(a)) => Ok((s, a)),
            _ => Err(ProblemError::Schema(format!("task {} needs a semigroup and an action", task.name()))),
        }
    }

    fn kolmogorov_options(&self) -> KolmogorovOptions {
        KolmogorovOptions {
            rank_tol: self.opts.tolerances.rank,
            structural_tol: self.opts.tolerances.structural,
            ..Default::default()
        }
    }

    fn run(&self, task: Command) -> Result<(Status, Value), ProblemError> {
        match task {
            Command::Validate => self.validate(),
            Command::CheckPositivity => self.check_positivity(),
            Command::Decompose => self.decompose(),
            Command::Represent => self.represent(),
            Command::Bounds => self.bounds(),
            Command::Lift => self.lift(),
            Command::Factorize => self.factorize(),
            Command::All => unreachable!("expanded before running"),
        }
    }

    fn validate(&self) -> Result<(Status, Value), ProblemError> {
        let k = &self.prep.kernel;
        let structural = self.opts.tolerances.structural * k.scale();
        let mut status = Status::Pass;
        let hermitian_defect = k.hermitian_defect();
        if hermitian_defect > structural {
            status = Status::Violated;
        }
        let mut out = json!({ "m": k.m(), "d": k.d(), "hermitian_defect": hermitian_defect });
        if let Some(s) = &self.prep.semigroup {
            let laws = validate_semigroup(s);
            if !laws.is_empty() {
                status = Status::Violated;
            }
            out["semigroup_violations"] = serde_json::to_value(&laws)?;
            if let Some(a) = &self.prep.action {
                let action_laws = validate_action(s, a, k.m())?;
                let invariance = k.invariance_violations(s, a, structural)?;
                if !action_laws.is_empty() || !invariance.is_empty() {
                    status = Status::Violated;
                }
                out["action_violations"] = serde_json::to_value(&action_laws)?;
                out["invariance_violations"] = serde_json::to_value(&invariance)?;
            }
        }
        if let Some(t) = &self.problem.semigroup_map {
            let s = self.prep.semigroup.as_ref().expect("checked");
            let defect = t.tensor_identity_defect(s);
            out["tensor_identity_defect"] = json!(defect);
        }
        Ok((status, out))
    }

    fn check_positivity(&self) -> Result<(Status, Value), ProblemError> {
        let k = &self.prep.kernel;
        let wopts = WeakPositivityOptions {
            restarts: self.opts.restarts,
            max_iters: self.opts.max_iters,
            seed: self.opts.seed,
            tol: self.opts.tolerances.structural,
        };
        let verdict = weak_positivity(k, &wopts);
        let strong = strong_positivity(k, self.opts.tolerances.structural);
        let status = match verdict.status {
            PositivityStatus::CertifiedPositive => Status::Pass,
            PositivityStatus::CertifiedNotPositive => Status::Violated,
            PositivityStatus::Undetermined => Status::Undetermined,
        };
        let witness_verified =
            verdict.witness.as_ref().map(|w| w.verify(k, self.opts.tolerances.structural * k.scale() / 2.0));
        Ok((
            status,
            json!({
                "verdict": verdict,
                "witness_verified": witness_verified,
                "strong": strong,
                "two_positivity": twopos_diagnostics(k, self.opts.tolerances.structural),
            }),
        ))
    }

    fn decompose(&self) -> Result<(Status, Value), ProblemError> {
        let k = &self.prep.kernel;
        let dec = build_kolmogorov(k, &self.kolmogorov_options())?;
        let lin = verify_linearisation(&dec, k)?;
        let rk = build_rk(&dec)?;
        let reproducing = verify_reproducing(&rk, k);
        let rebuilt = rk.rebuild_kernel();
        let rebuild_defect =
            rebuilt.entries().iter().zip(k.entries()).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
        let status = Status::from_defects(&[lin, reproducing, rebuild_defect], self.scaled_tol());
        let mut out = json!({
            "n": dec.n(),
            "decomposition": dec,
            "linearisation_defect": lin,
            "reproducing": {
                "reproducing_defect": reproducing,
                "rebuild_defect": rebuild_defect,
                "isometry_defect": rk.isometry_defect(),
                "space": rk,
            },
        });
        if let Some(legend) = &self.prep.legend {
            out["legend"] = serde_json::to_value(legend)?;
        }
        Ok((status, out))
    }

    fn represent(&self) -> Result<(Status, Value), ProblemError> {
        let (s, a) = self.semigroup_and_action(Command::Represent)?;
        let k = &self.prep.kernel;
        let structural = self.opts.tolerances.structural;
        let dec = build_kolmogorov(k, &self.kolmogorov_options())?;
        let rep = build_representation(&dec, k, s, a, structural)?;
        let rk = build_rk(&dec)?;
        let rho = rk_representation(&rk, k, s, a, structural)?;
        let status = Status::from_defects(
            &[rep.mult_defect, rep.star_defect, rep.intertwine_defect, rho.conjugation_defect],
            self.scaled_tol(),
        );
        Ok((
            status,
            json!({
                "n": dec.n(),
                "representation": rep,
                "rk_representation": {
                    "mult_defect": rho.rep.mult_defect,
                    "star_defect": rho.rep.star_defect,
                    "intertwine_defect": rho.rep.intertwine_defect,
                    "conjugation_defect": rho.conjugation_defect,
                },
            }),
        ))
    }

    fn bounds(&self) -> Result<(Status, Value), ProblemError> {
        let (s, a) = self.semigroup_and_action(Command::Bounds)?;
        let elements: Vec<usize> = self.opts.bound_elements.clone().unwrap_or_else(|| (0..s.size()).collect());
        if let Some(&bad) = elements.iter().find(|&&e| e >= s.size()) {
            return Err(ProblemError::Schema(format!("bound element {bad} is not in the semigroup")));
        }
        let bopts = BoundOptions {
            restarts: self.opts.restarts,
            max_iters: self.opts.max_iters,
            seed: self.opts.seed,
            tol: self.opts.tolerances.structural,
            rank_tol: self.opts.tolerances.rank,
        };
        let mut status = Status::Pass;
        let mut estimates = Vec::with_capacity(elements.len());
        for alpha in elements {
            let b = bound_constant(&self.prep.kernel, s, a, alpha, self.opts.bound_form, &bopts)?;
            if !b.is_consistent(self.opts.tolerances.structural) {
                status = status.combine(Status::Violated);
            } else if !b.upper.is_finite() {
                status = status.combine(Status::Undetermined);
            }
            // The lower end is attained by the reported witness.
            let ratio = b.witness_ratio(&self.prep.kernel, a);
            let verified = b.lower == 0.0 || (ratio.sqrt() - b.lower).abs() <= self.tol().sqrt() * (1.0 + b.lower);
            let mut v = serde_json::to_value(&b)?;
            v["witness_ratio"] = json!(ratio);
            v["witness_verified"] = json!(verified);
            estimates.push(v);
        }
        Ok((status, json!({ "estimates": estimates })))
    }

    fn lift(&self) -> Result<(Status, Value), ProblemError> {
        let k = &self.prep.kernel;
        let legend = self
            .prep
            .legend
            .as_ref()
            .ok_or_else(|| ProblemError::Schema("lift needs an operator_kernel or a semigroup_map".into()))?;
        let mut out = json!({ "kernel": k, "legend": legend });
        let mut defects = Vec::new();
        if let Some(l) = &self.problem.operator_kernel {
            let dec = build_kolmogorov(k, &self.kolmogorov_options())?;
            let rec = recover_operator_dilation(&dec, &l.module, l)?;
            defects.push(rec.max_defect);
            out["operator_dilation"] = serde_json::to_value(&rec)?;
        }
        if let Some(t) = &self.problem.semigroup_map {
            let (s, a) = self.semigroup_and_action(Command::Lift)?;
            let tensor = t.tensor_identity_defect(s);
            let invariance = k.invariance_violations(s, a, self.opts.tolerances.structural * k.scale())?;
            defects.push(tensor);
            out["tensor_identity_defect"] = json!(tensor);
            out["invariance_violations"] = serde_json::to_value(&invariance)?;
            if !invariance.is_empty() {
                defects.push(f64::INFINITY);
            }
        }
        Ok((Status::from_defects(&defects, self.scaled_tol()), out))
    }

    fn factorize(&self) -> Result<(Status, Value), ProblemError> {
        let t = self
            .problem
            .semigroup_map
            .as_ref()
            .ok_or_else(|| ProblemError::Schema("factorize needs a semigroup_map".into()))?;
        let (s, a) = self.semigroup_and_action(Command::Factorize)?;
        let k = &self.prep.kernel;
        let dec = build_kolmogorov(k, &self.kolmogorov_options())?;
        let rep = build_representation(&dec, k, s, a, self.opts.tolerances.structural)?;
        let check = verify_factorization(t, s, &dec, &rep)?;
        let status = Status::from_defects(&[check.max_defect], self.scaled_tol());
        Ok((
            status,
            json!({
                "n": dec.n(),
                "residual": check.max_defect,
                "A": check,
                "representation": rep,
            }),
        ))
    }
}

/// Runs `command` on a parsed problem. Any error maps to exit code 3.
pub fn run_problem(problem: &ProblemFile, command: Command, overrides: &Overrides) -> Result<Report, ProblemError> {
    let mut opts = problem.options.clone();
    if let Some(seed) = overrides.seed {
        opts.seed = seed;
    }
    if let Some(r) = overrides.restarts {
        opts.restarts = r;
    }
    if let Some(t) = overrides.report_tol {
        opts.tolerances.report = t;
    }
    let ctx = Ctx { problem, prep: problem.prepare()?, opts };
    let mut tasks = Vec::new();
    let mut status = Status::Pass;
    for task in problem.tasks_for(command) {
        let start = Instant::now();
        let (st, result) = ctx.run(task)?;
        status = status.combine(st);
        tasks.push(TaskReport {
            task: task.name(),
            status: st,
            result,
            elapsed_ms: overrides.timestamp.then(|| start.elapsed().as_secs_f64() * 1e3),
        });
    }
    let timestamp_unix = overrides
        .timestamp
        .then(|| std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    Ok(Report {
        tool: "wpsd",
        version: env!("CARGO_PKG_VERSION"),
        status,
        exit_code: status.exit_code(),
        seed: ctx.opts.seed,
        tolerances: ctx.opts.tolerances,
        timestamp_unix,
        tasks,
    })
}

/// Parses and runs a problem given as JSON text.
pub fn run_problem_json(text: &str, command: Command, overrides: &Overrides) -> Result<Report, ProblemError> {
    run_problem(&ProblemFile::from_json(text)?, command, overrides)
}
