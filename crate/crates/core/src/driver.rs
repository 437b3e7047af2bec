//! The adaptive loop: iterate until the discretization estimate exceeds the
//! splitting bound, then bisect the cells with the largest indicators.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::assembly::{assemble, AssembledSystem, DiscreteFunction, Scheme};
use crate::error::{Error, Result};
use crate::estimators::{
    sample_residual, sample_weight, splitting_bound, AdjointErrorProxy, CellLayout,
    DualErrorWeight, EstimatorReport, EstimatorWorkspace,
};
use crate::mesh::{bisect_cells, init_mesh, select_cells, transfer_waveform, MultiMesh};
use crate::model::{build_splitting, evaluate_qoi, Problem, Qoi, SplittingScheme};
use crate::solver::{
    dual_solve, primal_step, sup_initial_error, IterationState, LevelFactorization,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Number of refinement steps; levels `0..=levels` are recorded.
    pub levels: usize,
    pub k_max: usize,
    /// Fraction of cells bisected per level; `1` is uniform refinement.
    pub fraction: f64,
    pub scheme: Scheme,
    pub splitting: SplittingScheme,
    pub n_init: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            levels: 10,
            k_max: 20,
            fraction: 0.4,
            scheme: Scheme::ExplicitEuler,
            splitting: SplittingScheme::Jacobi,
            n_init: 32,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "refinement fraction {} is not in (0, 1]",
                self.fraction
            )));
        }
        if self.n_init < 2 {
            return Err(Error::InvalidConfig("n_init must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub level: usize,
    pub mesh: Arc<MultiMesh>,
    /// Iterations performed, `K_l`.
    pub k: usize,
    pub nu: f64,
    pub mu_total: f64,
    pub sup_e0: f64,
    pub report: EstimatorReport,
    /// `J(U_{K_l})`.
    pub j_discrete: f64,
    pub final_iterate: DiscreteFunction,
    /// `nu` after each iteration.
    pub nu_by_k: Vec<f64>,
    /// `mu_total` after each iteration.
    pub mu_by_k: Vec<f64>,
    /// `sup_t |U_k - U_{k-1}|` for `k = 1..=K_l`.
    pub iterate_differences: Vec<f64>,
    pub wall_time: Duration,
}

impl LevelRecord {
    pub fn total_cells(&self) -> usize {
        self.mesh.total_cells()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunHistory {
    pub levels: Vec<LevelRecord>,
}

/// Stop the inner loop once the discretization estimate exceeds the
/// splitting bound.
pub fn stopping_check(mu_total: f64, nu: f64) -> bool {
    nu.is_finite() && mu_total > nu
}

pub fn run(problem: &Problem, qoi: &Qoi, config: &RunConfig) -> Result<RunHistory> {
    run_with_observer(problem, qoi, config, |_, _| {})
}

/// Like [`run`], handing every assembled level system to `observer`.
pub fn run_with_observer(
    problem: &Problem,
    qoi: &Qoi,
    config: &RunConfig,
    mut observer: impl FnMut(usize, &AssembledSystem),
) -> Result<RunHistory> {
    config.validate()?;
    let splitting = build_splitting(problem.matrix(), &config.splitting)?;
    let scheme = config.scheme;
    let trial = scheme.trial();
    let times: Vec<f64> = qoi.times().collect();
    let coupling = splitting.b_hat.abs() + splitting.b_check.abs();

    let mut mesh = Arc::new(init_mesh(problem, qoi, config.n_init)?);
    let mut initial =
        DiscreteFunction::constant(Arc::clone(&mesh), trial, problem.initial().as_slice())?;
    let mut history = RunHistory::default();

    for level in 0..=config.levels {
        let start = Instant::now();
        let system = Arc::new(assemble(problem, &splitting, qoi, &mesh, scheme)?);
        observer(level, &system);
        let fac = LevelFactorization::new(Arc::clone(&system))?;

        let mut state = IterationState::new(initial.clone());
        let mut proxy = AdjointErrorProxy::new(&mesh);
        let layout = CellLayout::new(&mesh, &coupling, |i, j| proxy.knots(i, j));
        let mut workspace = EstimatorWorkspace::new(layout, problem, scheme);
        let mut nu_by_k = Vec::new();
        let mut mu_by_k = Vec::new();
        let mut differences = Vec::new();
        let mut report = None;

        for k in 1..=config.k_max {
            let next = primal_step(&fac, state.latest())?;
            let diff = sup_initial_error(&next, state.latest())?;
            if k == 1 {
                state.sup_e0 = diff;
            }
            differences.push(diff);
            let residual = sample_residual(
                &workspace.layout,
                problem,
                &splitting,
                &next,
                state.latest(),
            )?;
            workspace.push_residual(residual);
            state.primal.push(next);

            dual_solve(&fac, &mut state)?;
            let jumps = (k == 1).then_some(system.h.as_slice());
            proxy.push_front(&state.duals[0], scheme, &times, jumps);
            let weight = sample_weight(&workspace.layout, &proxy, 1, &state.duals[0]);
            workspace.push_front_weight(weight);

            let nu = splitting_bound(
                splitting.l1,
                splitting.l2,
                state.sup_e0,
                k,
                qoi,
                problem.t0(),
            );
            let rep = EstimatorReport::from_signed(
                level,
                nu,
                &workspace.layout.cells,
                workspace.signed(),
            )?;
            nu_by_k.push(nu);
            mu_by_k.push(rep.mu_total);
            let stop = stopping_check(rep.mu_total, nu);
            report = Some(rep);
            if stop {
                break;
            }
        }

        let report = report.expect("k_max is at least one");
        let final_iterate = state.latest().clone();
        let j_discrete = evaluate_qoi(qoi, &final_iterate, trial.own_side());
        let record = LevelRecord {
            level,
            mesh: Arc::clone(&mesh),
            k: state.k(),
            nu: report.nu,
            mu_total: report.mu_total,
            sup_e0: state.sup_e0,
            j_discrete,
            final_iterate: final_iterate.clone(),
            nu_by_k,
            mu_by_k,
            iterate_differences: differences,
            wall_time: start.elapsed(),
            report,
        };

        if level < config.levels {
            let chosen = select_cells(&record.report.mu_local, config.fraction)?;
            let refined = Arc::new(bisect_cells(&mesh, &chosen)?);
            initial = transfer_waveform(&final_iterate, &refined)?;
            mesh = refined;
        }
        history.levels.push(record);
    }
    Ok(history)
}
