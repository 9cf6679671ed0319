//! Semi-implicit Euler-Maruyama stepping.
//!
//! One step solves
//! `(I - dt L^m) u^{m+1} = u^m + H(x, t_m, D_c u^m) dB_m` on interior nodes,
//! where `L^m` is the drift operator with coefficients frozen at
//! `(x, t_m, u^m, Du^m)` and `D_c` the node-centred gradient. Dirichlet
//! nodes keep the trace of `u0`.

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, NoiseKind, NoiseModel};
use crate::error::{PnlError, Result};
use crate::field::{central_gradient_into, Field, GridSpec, Trajectory};

use super::brownian::{uniform_times, BrownianPath};
use super::initial::InitialCondition;
use super::operator::DriftOperator;
use super::solver::{bicgstab, cg, LinearOperator, Method, SolveStats};

pub const DEFAULT_C_SAFE: f64 = 0.5;
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e12;
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// The Itô system as given.
    ItoSemiImplicit,
    /// The Stratonovich system `div(A Du) dt + sigma Du o dB` through its Itô
    /// form `div((A + sigma^2/2) Du) dt + sigma Du dB`.
    StratonovichCorrected,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub model: CoefficientModel,
    pub noise: NoiseModel,
    pub scheme: Scheme,
    pub horizon: f64,
    pub steps: usize,
    pub u0: Field,
    /// Closed form of `u0`, when known.
    pub initial: Option<InitialCondition>,
    /// Frame cadence in steps; the final state is always recorded.
    pub record_every: usize,
    pub c_safe: f64,
    pub blowup_threshold: f64,
    pub solver_tol: f64,
}

impl SimConfig {
    pub fn new(
        grid: GridSpec,
        model: CoefficientModel,
        noise: NoiseModel,
        scheme: Scheme,
        horizon: f64,
        steps: usize,
        u0: Field,
    ) -> Self {
        SimConfig {
            grid,
            model,
            noise,
            scheme,
            horizon,
            steps,
            u0,
            initial: None,
            record_every: 1,
            c_safe: DEFAULT_C_SAFE,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            solver_tol: DEFAULT_SOLVER_TOL,
        }
    }

    /// Samples `u0` from a closed form and keeps the formula.
    pub fn from_initial(
        grid: GridSpec,
        model: CoefficientModel,
        noise: NoiseModel,
        scheme: Scheme,
        horizon: f64,
        steps: usize,
        initial: InitialCondition,
    ) -> Result<Self> {
        let u0 = initial.sample(&grid, model.components())?;
        let mut cfg = SimConfig::new(grid, model, noise, scheme, horizon, steps, u0);
        cfg.initial = Some(initial);
        Ok(cfg)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.horizon, self.steps)
    }

    /// `c_safe h_min^2 / L_H^2`, `+inf` without gradient dependence.
    pub fn noise_cfl_bound(&self) -> f64 {
        let lh = self.noise.lipschitz();
        if lh == 0.0 {
            f64::INFINITY
        } else {
            self.c_safe * self.grid.min_spacing().powi(2) / (lh * lh)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.dim();
        let nc = self.model.components();
        if self.model.dim() != n || self.noise.dim() != n {
            return Err(PnlError::Config(format!(
                "model and noise dimensions ({}, {}) must equal the grid dimension {n}",
                self.model.dim(),
                self.noise.dim()
            )));
        }
        if self.noise.components() != nc || self.u0.components() != nc {
            return Err(PnlError::Config("component counts of model, noise and u0 differ".into()));
        }
        if !self.u0.grid().same_as(&self.grid) {
            return Err(PnlError::Config("u0 lives on a different grid".into()));
        }
        if self.steps == 0 || !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(PnlError::Config("need steps >= 1 and a positive finite horizon".into()));
        }
        if self.record_every == 0 {
            return Err(PnlError::Config("record_every must be at least 1".into()));
        }
        if !(self.c_safe > 0.0) || !(self.solver_tol > 0.0) || !(self.blowup_threshold > 0.0) {
            return Err(PnlError::Config("c_safe, solver tolerance and blow-up threshold must be positive".into()));
        }
        let bound = self.noise_cfl_bound();
        if self.dt() > bound {
            return Err(PnlError::Stability(format!(
                "dt = {:.6e} exceeds the noise bound c_safe h^2 / L_H^2 = {} * {:.6e}^2 / {}^2 = {:.6e}; \
                 use at least {} steps",
                self.dt(),
                self.c_safe,
                self.grid.min_spacing(),
                self.noise.lipschitz(),
                bound,
                (self.horizon / bound).ceil()
            )));
        }
        if self.scheme == Scheme::StratonovichCorrected {
            if !self.model.is_linear() {
                return Err(PnlError::Config("the Stratonovich correction needs a linear drift".into()));
            }
            if self.noise.sigma().is_none() && !self.noise.is_zero() {
                return Err(PnlError::Config("the Stratonovich correction needs gradient noise".into()));
            }
        }
        Ok(())
    }

    /// Drift actually integrated: `A`, or `A + sigma^2/2` for the corrected scheme.
    pub fn drift_model(&self) -> Result<CoefficientModel> {
        match self.scheme {
            Scheme::ItoSemiImplicit => Ok(self.model.clone()),
            Scheme::StratonovichCorrected => {
                let sigma = self.noise.sigma().unwrap_or(0.0);
                self.model.shifted(0.5 * sigma * sigma)
            }
        }
    }
}

/// `I - dt L` on interior nodes, identity on Dirichlet nodes.
struct System<'a> {
    op: &'a DriftOperator,
    dt: f64,
    /// Per-entry Dirichlet mask; empty on periodic grids.
    held: &'a [bool],
    masked: &'a mut [f64],
    lx: &'a mut [f64],
    flux: &'a mut [f64],
}

impl LinearOperator for System<'_> {
    fn dim(&self) -> usize {
        self.masked.len()
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        if self.held.is_empty() {
            self.op.apply_with(x, self.lx, self.flux);
            for k in 0..x.len() {
                y[k] = x[k] - self.dt * self.lx[k];
            }
            return;
        }
        for ((m, &v), &b) in self.masked.iter_mut().zip(x).zip(self.held) {
            *m = if b { 0.0 } else { v };
        }
        self.op.apply_with(self.masked, self.lx, self.flux);
        for (((yk, &v), &l), &b) in y.iter_mut().zip(x).zip(self.lx.iter()).zip(self.held) {
            *yk = if b { v } else { v - self.dt * l };
        }
    }
}

/// Reusable single-path integrator.
pub struct Stepper {
    grid: GridSpec,
    nc: usize,
    model: CoefficientModel,
    noise: NoiseModel,
    frozen: Option<DriftOperator>,
    /// `L` applied to the boundary trace alone (frozen operators only).
    lift: Option<Vec<f64>>,
    /// Dirichlet mask; empty on periodic grids.
    boundary: Vec<bool>,
    /// `boundary` expanded to one flag per component.
    held: Vec<bool>,
    trace: Vec<f64>,
    tol: f64,
    grad: Vec<f64>,
    eta: Vec<f64>,
    scratch: Scratch,
}

#[derive(Default)]
struct Scratch {
    rhs: Vec<f64>,
    offset: Vec<f64>,
    x: Vec<f64>,
    masked: Vec<f64>,
    lx: Vec<f64>,
    flux: Vec<f64>,
    inv_diag: Vec<f64>,
    /// Step size `inv_diag` was built for (frozen operators only).
    diag_dt: Option<f64>,
}

impl Scratch {
    fn fit(&mut self, len: usize, flux_len: usize) {
        for v in [&mut self.rhs, &mut self.offset, &mut self.x, &mut self.masked, &mut self.lx] {
            v.resize(len, 0.0);
        }
        self.flux.resize(flux_len, 0.0);
    }
}

impl Stepper {
    /// `model` is the drift actually integrated; `trace` supplies the values
    /// held at Dirichlet nodes.
    pub fn new(grid: &GridSpec, model: CoefficientModel, noise: NoiseModel, trace: &[f64], tol: f64) -> Result<Self> {
        let nc = model.components();
        if trace.len() != grid.node_count() * nc {
            return Err(PnlError::ShapeMismatch("boundary trace does not match the grid".into()));
        }
        let boundary: Vec<bool> = if grid.is_periodic() {
            Vec::new()
        } else {
            (0..grid.node_count()).map(|k| grid.is_boundary_node(k)).collect()
        };
        let frozen = if model.is_frozen_in_time() { Some(DriftOperator::assemble(grid, &model, 0.0, None)?) } else { None };
        let mut s = Stepper {
            grid: grid.clone(),
            nc,
            model,
            noise,
            frozen,
            lift: None,
            held: (0..boundary.len() * nc).map(|k| boundary[k / nc]).collect(),
            boundary,
            trace: trace.to_vec(),
            tol,
            grad: vec![0.0; grid.node_count() * grid.dim() * nc],
            eta: vec![0.0; grid.node_count() * nc],
            scratch: Scratch::default(),
        };
        if let Some(op) = &s.frozen {
            s.lift = Some(s.boundary_lift(op));
        }
        Ok(s)
    }

    fn boundary_lift(&self, op: &DriftOperator) -> Vec<f64> {
        let mut out = vec![0.0; self.trace.len()];
        if self.boundary.is_empty() {
            return out;
        }
        let mut only = vec![0.0; self.trace.len()];
        for (node, &b) in self.boundary.iter().enumerate() {
            if b {
                for a in 0..self.nc {
                    only[node * self.nc + a] = self.trace[node * self.nc + a];
                }
            }
        }
        let mut flux = vec![0.0; op.flux_len()];
        op.apply_with(&only, &mut out, &mut flux);
        out
    }

    fn noise_term(&mut self, u: &[f64], t: f64, db: &[f64]) {
        let nc = self.nc;
        let n = self.grid.dim();
        let width = n * nc;
        self.eta.fill(0.0);
        if self.noise.is_zero() || db.iter().all(|v| *v == 0.0) {
            return;
        }
        let needs_grad = !matches!(self.noise.kind(), NoiseKind::Additive(_));
        if needs_grad {
            central_gradient_into(&self.grid, nc, u, &mut self.grad);
        }
        let held = |node: usize| !self.boundary.is_empty() && self.boundary[node];
        if let NoiseKind::LinearGradient { sigma } = *self.noise.kind() {
            for (node, (eta, z)) in self.eta.chunks_mut(nc).zip(self.grad.chunks(width)).enumerate() {
                if held(node) {
                    continue;
                }
                for (a, e) in eta.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, dbj) in db.iter().enumerate() {
                        acc += z[j * nc + a] * dbj;
                    }
                    *e = sigma * acc;
                }
            }
            return;
        }
        let mut x = vec![0.0; n];
        let mut h = vec![0.0; self.noise.width()];
        for node in 0..self.grid.node_count() {
            if held(node) {
                continue;
            }
            let z = &self.grad[node * width..(node + 1) * width];
            self.grid.coord(node, &mut x);
            self.noise.eval_into(&x, t, z, &mut h);
            for a in 0..nc {
                self.eta[node * nc + a] = db.iter().enumerate().map(|(j, dbj)| h[j * nc + a] * dbj).sum();
            }
        }
    }

    /// Advances `u` from `t` to `t + dt` with Brownian increment `db`.
    pub fn step(&mut self, u: &mut [f64], t: f64, dt: f64, db: &[f64]) -> Result<SolveStats> {
        if db.len() != self.noise.brownian_dim() && !self.noise.is_zero() {
            return Err(PnlError::ShapeMismatch(format!(
                "increment has {} entries, noise expects {}",
                db.len(),
                self.noise.brownian_dim()
            )));
        }
        self.noise_term(u, t, db);
        let assembled;
        let (op, lift, frozen) = match &self.frozen {
            Some(op) => (op, self.lift.as_deref().unwrap_or_default(), true),
            None => {
                assembled = DriftOperator::assemble(&self.grid, &self.model, t, Some(u))?;
                self.lift = Some(self.boundary_lift(&assembled));
                (&assembled, self.lift.as_deref().unwrap_or_default(), false)
            }
        };
        let len = u.len();
        let sc = &mut self.scratch;
        sc.fit(len, op.flux_len());
        let affine = op.offset_divergence(&mut sc.offset);
        for node in 0..self.grid.node_count() {
            let held = !self.boundary.is_empty() && self.boundary[node];
            for a in 0..self.nc {
                let k = node * self.nc + a;
                sc.rhs[k] = if held {
                    self.trace[k]
                } else {
                    let mut v = u[k] + self.eta[k];
                    if !self.boundary.is_empty() {
                        v += dt * lift[k];
                    }
                    if affine {
                        v += dt * sc.offset[k];
                    }
                    v
                };
            }
        }
        if !(frozen && sc.diag_dt == Some(dt)) {
            sc.inv_diag = op.diagonal();
            for (node, chunk) in sc.inv_diag.chunks_mut(self.nc).enumerate() {
                let held = !self.boundary.is_empty() && self.boundary[node];
                for v in chunk {
                    let diag = 1.0 - dt * *v;
                    *v = if held || !(diag > 0.0) { 1.0 } else { 1.0 / diag };
                }
            }
            sc.diag_dt = if frozen { Some(dt) } else { None };
        }
        let mut system = System {
            op,
            dt,
            held: &self.held,
            masked: &mut sc.masked,
            lx: &mut sc.lx,
            flux: &mut sc.flux,
        };
        sc.x.copy_from_slice(&sc.rhs);
        let (rhs, x, inv_diag) = (&sc.rhs, &mut sc.x, &sc.inv_diag);
        let max_iter = 10 * len;
        let stats = if op.is_symmetric() {
            cg(&mut system, inv_diag, rhs, x, self.tol, max_iter)
        } else {
            bicgstab(&mut system, inv_diag, rhs, x, self.tol, max_iter)
        };
        if !stats.converged {
            return Err(PnlError::StepFailure {
                step: 0,
                reason: format!(
                    "{:?} stopped after {} iterations at relative residual {:.3e}",
                    stats.method, stats.iterations, stats.relative_residual
                ),
            });
        }
        u.copy_from_slice(x);
        Ok(stats)
    }
}

/// One Itô step from `u` (whose boundary values are held).
pub fn step_ito(u: &Field, t: f64, dt: f64, db: &[f64], model: &CoefficientModel, noise: &NoiseModel) -> Result<Field> {
    let mut stepper = Stepper::new(u.grid(), model.clone(), noise.clone(), u.values(), DEFAULT_SOLVER_TOL)?;
    let mut v = u.values().to_vec();
    stepper.step(&mut v, t, dt, db)?;
    Field::new(u.grid().clone(), u.components(), v)
}

/// One step of the Stratonovich system with linear drift `A` and noise
/// `sigma Du o dB`, through the Itô form with drift `A + sigma^2/2`.
pub fn step_stratonovich_linear(
    u: &Field,
    t: f64,
    dt: f64,
    db: &[f64],
    model: &CoefficientModel,
    sigma: f64,
) -> Result<Field> {
    if !model.is_linear() {
        return Err(PnlError::Config("the Stratonovich correction needs a linear drift".into()));
    }
    let shifted = model.shifted(0.5 * sigma * sigma)?;
    let noise = NoiseModel::linear_gradient(u.grid().dim(), u.components(), sigma)?;
    step_ito(u, t, dt, db, &shifted, &noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowUp {
    pub step: usize,
    pub time: f64,
    /// `|u|_inf` at detection; `inf` for non-finite states.
    pub sup: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolverSummary {
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub bicgstab_steps: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub times: Vec<f64>,
    pub frames: Vec<Field>,
    pub blow_up: Option<BlowUp>,
    pub solver: SolverSummary,
}

impl SimOutcome {
    pub fn final_frame(&self) -> &Field {
        self.frames.last().expect("u0 is always recorded")
    }

    /// Recorded frames as a trajectory; fails when fewer than two frames exist.
    pub fn trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.times.clone(), self.frames.clone())
    }

    pub fn into_trajectory(self) -> Result<Trajectory> {
        Trajectory::new(self.times, self.frames)
    }
}

/// Integrates `cfg` along `path`, recording frames every `record_every`
/// steps and stopping at the first blow-up.
pub fn simulate(cfg: &SimConfig, path: &BrownianPath) -> Result<SimOutcome> {
    cfg.validate()?;
    if path.steps() != cfg.steps {
        return Err(PnlError::InvalidInput(format!(
            "path has {} steps, configuration {}",
            path.steps(),
            cfg.steps
        )));
    }
    let times = cfg.times();
    let tol = 1e-9 * cfg.horizon;
    if times.iter().zip(path.times()).any(|(a, b)| (a - b).abs() > tol) {
        return Err(PnlError::InvalidInput("path time grid differs from the configuration".into()));
    }
    if !cfg.noise.is_zero() && path.dim() != cfg.noise.brownian_dim() {
        return Err(PnlError::InvalidInput(format!(
            "path dimension {} differs from the noise dimension {}",
            path.dim(),
            cfg.noise.brownian_dim()
        )));
    }
    let mut stepper = Stepper::new(&cfg.grid, cfg.drift_model()?, cfg.noise.clone(), cfg.u0.values(), cfg.solver_tol)?;
    let mut u = cfg.u0.values().to_vec();
    let mut out = SimOutcome {
        times: vec![times[0]],
        frames: vec![cfg.u0.clone()],
        blow_up: None,
        solver: SolverSummary::default(),
    };
    for m in 0..cfg.steps {
        let dt = times[m + 1] - times[m];
        let stats = stepper.step(&mut u, times[m], dt, path.increment(m)).map_err(|e| match e {
            PnlError::StepFailure { reason, .. } => PnlError::StepFailure { step: m + 1, reason },
            other => other,
        })?;
        let s = &mut out.solver;
        s.steps += 1;
        s.total_iterations += stats.iterations;
        s.max_iterations = s.max_iterations.max(stats.iterations);
        s.max_residual = s.max_residual.max(stats.relative_residual);
        if stats.method == Method::BiCgStab {
            s.bicgstab_steps += 1;
        }
        let finite = u.iter().all(|v| v.is_finite());
        let sup = if finite { u.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) } else { f64::INFINITY };
        if !finite || sup > cfg.blowup_threshold {
            out.blow_up = Some(BlowUp { step: m + 1, time: times[m + 1], sup });
            if finite {
                out.times.push(times[m + 1]);
                out.frames.push(Field::new(cfg.grid.clone(), cfg.u0.components(), u.clone())?);
            }
            log::warn!("blow-up at step {} (t = {}), |u|_inf = {sup:e}", m + 1, times[m + 1]);
            break;
        }
        if (m + 1) % cfg.record_every == 0 || m + 1 == cfg.steps {
            out.times.push(times[m + 1]);
            out.frames.push(Field::new(cfg.grid.clone(), cfg.u0.components(), u.clone())?);
        }
    }
    Ok(out)
}

/// `x -> u0(x + B_t)` on a periodic grid, evaluated from the closed form.
pub fn exact_transport(
    initial: &InitialCondition,
    grid: &GridSpec,
    components: usize,
    path: &BrownianPath,
    t_index: usize,
) -> Result<Field> {
    if !grid.is_periodic() {
        return Err(PnlError::UnsupportedBoundary("the transport solution needs a periodic grid".into()));
    }
    if path.dim() != grid.dim() {
        return Err(PnlError::InvalidInput(format!(
            "path dimension {} differs from the grid dimension {}",
            path.dim(),
            grid.dim()
        )));
    }
    let b = path.value_at(t_index)?;
    initial.sample_shifted(grid, components, &b)
}
