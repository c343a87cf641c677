//! The subcommands. Each builds a [`Table`]; writing it out is the
//! caller's job.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use qbm::oracle::{discretize_bath, ClosedSystem};
use qbm::phase_space::{
    partial_transpose_form, random_pure_gaussian, CovarianceMatrix, PhaseSpaceLayout,
};
use qbm::propagator::{evolve_covariance, propagate, PropagatorPair};
use qbm::uncertainty::{
    area_lower_bounds, disentanglement_time, lambda_bound, lambda_tilde_bound, tripartite_report,
    Disentanglement, WitnessCurve,
};

use crate::config::{InitialState, Resolved};
use crate::error::CliError;
use crate::table::{Cell, Table};

/// Result of a run: the CSV plus an optional one-line summary for stdout.
#[derive(Debug, Clone)]
pub struct Report {
    pub table: Table,
    pub summary: Option<String>,
}

pub fn initial_covariance(cfg: &Resolved, seed: u64) -> Result<Option<CovarianceMatrix>, CliError> {
    let n = cfg.frequencies.len();
    let need_two = |name: &str| {
        if n == 2 {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "initial preset `{name}` needs two oscillators"
            )))
        }
    };
    let v = match &cfg.task.initial {
        None => return Ok(None),
        Some(InitialState::Vacuum) => CovarianceMatrix::vacuum(n),
        Some(InitialState::Thermal { nu }) => CovarianceMatrix::thermal(n, *nu),
        Some(InitialState::TwoModeSqueezed { r }) => {
            need_two("two-mode-squeezed")?;
            CovarianceMatrix::two_mode_squeezed(*r)
        }
        Some(InitialState::FactorizedSqueezed { r1, r2 }) => {
            need_two("factorized-squeezed")?;
            CovarianceMatrix::factorized_squeezed(*r1, *r2)
        }
        Some(InitialState::RandomPure { max_squeeze }) => {
            let layout = PhaseSpaceLayout::new(n)?;
            random_pure_gaussian(layout, *max_squeeze, &mut ChaCha8Rng::seed_from_u64(seed))
        }
        Some(InitialState::Matrix { matrix }) => {
            if matrix.len() != 2 * n || matrix.iter().any(|row| row.len() != 2 * n) {
                return Err(CliError::Config(format!(
                    "initial matrix must be {0}x{0}",
                    2 * n
                )));
            }
            let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
            CovarianceMatrix::new(DMatrix::from_row_slice(2 * n, 2 * n, &flat))?
        }
    };
    v.check_physical(1e-9)?;
    Ok(Some(v))
}

fn pairs(cfg: &Resolved) -> Result<Vec<PropagatorPair>, CliError> {
    Ok(propagate(&cfg.model()?, cfg.grid()?, &cfg.solver())?.pairs())
}

pub fn run_propagator(cfg: &Resolved, seed: u64) -> Result<Report, CliError> {
    let n = cfg.frequencies.len();
    let d = 2 * n;
    let mut header = vec!["t".to_string()];
    header.extend((0..d).flat_map(|i| (0..d).map(move |j| format!("R_{i}_{j}"))));
    header.extend((0..d).flat_map(|i| (i..d).map(move |j| format!("S_{i}_{j}"))));
    let mut table = Table::new(cfg.provenance("propagator", seed), header);
    for pp in pairs(cfg)? {
        let mut row = vec![Cell::Num(pp.t)];
        row.extend(
            (0..d)
                .flat_map(|i| (0..d).map(move |j| i * d + j))
                .map(|k| Cell::Num(pp.r[(k / d, k % d)])),
        );
        for i in 0..d {
            for j in i..d {
                row.push(Cell::Num(pp.s[(i, j)]));
            }
        }
        table.push(row);
    }
    Ok(Report {
        table,
        summary: None,
    })
}

pub fn run_bounds(cfg: &Resolved, seed: u64) -> Result<Report, CliError> {
    let n = cfg.frequencies.len();
    let v0 = initial_covariance(cfg, seed)?;
    let layout = PhaseSpaceLayout::new(n)?;
    let ot = partial_transpose_form(layout, &cfg.task.subset)?;
    let tripartite = cfg.task.tripartite;
    if tripartite && n != 3 {
        return Err(CliError::Config(
            "tripartite bounds need three oscillators".into(),
        ));
    }
    let mut header: Vec<String> = vec!["t".into()];
    if tripartite {
        header.extend((0..3).map(|p| format!("sufficiency_{p}")));
        header.extend((0..3).map(|p| format!("necessary_{p}")));
    } else {
        header.extend(["lambda_bound".into(), "lambda_tilde_bound".into()]);
        if n == 2 {
            header.extend([
                "area_pp".into(),
                "area_mm".into(),
                "area_pm".into(),
                "area_mp".into(),
            ]);
        }
    }
    if v0.is_some() {
        header.push("lambda_min".into());
    }
    let gamma = cfg.gamma;
    let rows = pairs(cfg)?
        .par_iter()
        .map(|pp| -> Result<Vec<Cell>, CliError> {
            let mut row = vec![Cell::Num(pp.t)];
            if tripartite {
                let rep = tripartite_report(pp)?;
                row.extend(
                    rep.sufficiency
                        .iter()
                        .chain(&rep.necessary)
                        .map(|&x| Cell::Num(x)),
                );
            } else {
                row.push(Cell::Num(lambda_bound(pp, &ot)?));
                row.push(Cell::Num(lambda_tilde_bound(pp, &ot)?));
                if n == 2 {
                    row.extend(area_lower_bounds(pp, gamma)?.as_array().map(Cell::Num));
                }
            }
            if let Some(v0) = &v0 {
                let v = evolve_covariance(v0, pp)?;
                row.push(Cell::Num(qbm::phase_space::min_ppt_eigenvalue(
                    v.matrix(),
                    &ot,
                )?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(cfg.provenance("bounds", seed), header);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Report {
        table,
        summary: None,
    })
}

/// Disentanglement time of one configuration: the last upward zero of
/// `lambda_bound` on the internal grid.
pub fn disentanglement(cfg: &Resolved) -> Result<Disentanglement, CliError> {
    let prop = propagate(&cfg.model()?, cfg.grid()?, &cfg.solver())?;
    let ot = partial_transpose_form(
        PhaseSpaceLayout::new(cfg.frequencies.len())?,
        &cfg.task.subset,
    )?;
    let curve = WitnessCurve::from_pairs("lambda_bound", &prop.fine_pairs(), |pp| {
        lambda_bound(pp, &ot)
    })?;
    let tol = if cfg.gamma > 0.0 {
        1e-4 / cfg.gamma
    } else {
        1e-4
    };
    Ok(disentanglement_time(&curve, tol))
}

pub fn run_tdis(cfg: &Resolved, seed: u64) -> Result<Report, CliError> {
    let Some(delta0) = cfg.delta else {
        return Err(CliError::Config(
            "tdis sweeps need the two-oscillator `model.delta` parameterization".into(),
        ));
    };
    let thetas = if cfg.task.theta_sweep.is_empty() {
        vec![cfg.temperature / cfg.norm]
    } else {
        cfg.task.theta_sweep.clone()
    };
    let deltas = if cfg.task.delta_sweep.is_empty() {
        vec![delta0]
    } else {
        cfg.task.delta_sweep.clone()
    };
    let points: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| thetas.iter().map(move |&th| (th, d)))
        .collect();
    let results = points
        .par_iter()
        .map(|&(theta, delta)| disentanglement(&cfg.at_case_point(delta, theta)?))
        .collect::<Result<Vec<_>, _>>()?;
    let header = ["theta", "delta", "t_dis_gamma", "status"]
        .map(String::from)
        .to_vec();
    let mut table = Table::new(cfg.provenance("tdis", seed), header);
    let scale = if cfg.gamma > 0.0 { cfg.gamma } else { 1.0 };
    for (&(theta, delta), r) in points.iter().zip(&results) {
        let (value, status) = match r.time() {
            Some(t) => (Cell::Num(t * scale), "crossing"),
            None => (Cell::Empty, "no-crossing"),
        };
        table.push(vec![
            Cell::Num(theta),
            Cell::Num(delta),
            value,
            Cell::Text(status.into()),
        ]);
    }
    Ok(Report {
        table,
        summary: None,
    })
}

pub fn run_oracle_check(cfg: &Resolved, seed: u64) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let v0 = initial_covariance(cfg, seed)?
        .unwrap_or_else(|| CovarianceMatrix::vacuum(cfg.frequencies.len()));
    let max_frequency = cfg.task.max_frequency.unwrap_or(5.0 * cfg.cutoff);
    let bath = discretize_bath(&model.density, cfg.task.modes, max_frequency)?;
    let warnings = bath.warnings.clone();
    let closed = ClosedSystem::new(&model.system, bath, model.counterterm);
    let reference =
        closed.reduced_trajectory(&v0, model.bath.temperature, grid.step(), grid.len())?;
    let prop = propagate(&model, grid, &cfg.solver())?;
    let header = ["t", "deviation"].map(String::from).to_vec();
    let mut table = Table::new(cfg.provenance("oracle-check", seed), header);
    let mut worst = 0.0f64;
    for (pp, vr) in prop.pairs().iter().zip(&reference) {
        let v = evolve_covariance(&v0, pp)?;
        let dev = (v.matrix() - vr.matrix()).amax();
        worst = worst.max(dev);
        table.push(vec![Cell::Num(pp.t), Cell::Num(dev)]);
    }
    let verdict = if worst < cfg.task.threshold {
        "pass"
    } else {
        "fail"
    };
    let mut summary = format!(
        "oracle-check: max deviation {worst:.3e} over {} modes, threshold {:.1e}: {verdict}",
        cfg.task.modes, cfg.task.threshold
    );
    for w in warnings {
        summary.push_str(&format!("\nwarning: {w}"));
    }
    Ok(Report {
        table,
        summary: Some(summary),
    })
}
