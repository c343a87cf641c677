//! Gaussian propagator `(R(t), S(t))` of the reduced system.
//!
//! The homogeneous solution `v` obeys
//! `v'' + W_eff^2 v + K int_0^t Gamma(t - s) v'(s) ds = 0` with `v(0) = 0`,
//! `v'(0) = I` and `K = 2 M^{-1} w w^T`. It is integrated in Volterra form
//! with cubic Hermite product integration: on every step panel `v` is the
//! Hermite interpolant of its nodal values and slopes, and the kernels are
//! integrated exactly against that interpolant. With `u = v'` and `a = v''`
//!
//! * `X(t) = u X(0) + v M^{-1} P(0)`,
//! * `P(t) = M a X(0) + M u M^{-1} P(0)`,
//!
//! and the diffusion matrix is the double integral of the response vector
//! against the noise kernel, evaluated by the same product rule in both
//! time arguments.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::case_model::{AnalyticV, ClosedFormReading};
use crate::model::{Model, ScalarKernels};
use crate::phase_space::CovarianceMatrix;
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

/// Uniform output grid `t_k = k * step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    step: f64,
    len: usize,
}

impl TimeGrid {
    pub fn uniform(t_end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad grid: t_end={t_end}, step={step}"
            )));
        }
        let intervals = (t_end / step - 1e-9).ceil().max(0.0) as usize;
        Ok(Self {
            step,
            len: intervals + 1,
        })
    }

    /// Grid through `n` points, `step` apart.
    pub fn with_len(step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || len == 0 {
            return Err(Error::InvalidParameter(format!(
                "bad grid: step={step}, len={len}"
            )));
        }
        Ok(Self { step, len })
    }

    /// Accepts explicit times if they start at 0 and are equally spaced.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::InvalidParameter("time grid must start at 0".into()));
        }
        if times.len() == 1 {
            return Self::with_len(1.0, 1);
        }
        let step = times[1];
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(
                "time grid must be strictly increasing".into(),
            ));
        }
        for (k, &t) in times.iter().enumerate() {
            if (t - k as f64 * step).abs() > 1e-9 * step.max(t) {
                return Err(Error::InvalidParameter(format!(
                    "time grid is not uniform at index {k} (t={t})"
                )));
            }
        }
        Self::with_len(step, times.len())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn t_end(&self) -> f64 {
        self.step * (self.len - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.time(k)).collect()
    }
}

/// How the homogeneous solution is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomogeneousMode {
    Numeric,
    /// Leading-order closed forms, two symmetric equal-mass oscillators only.
    Analytic(ClosedFormReading),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub mode: HomogeneousMode,
    /// Step-doubling tolerance on `v` and `v'`, relative to their sup-norm.
    pub rel_tol: f64,
    pub max_refinements: usize,
    /// Initial internal steps per period of the fastest system frequency.
    pub points_per_period: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mode: HomogeneousMode::Numeric,
            rel_tol: 1e-6,
            max_refinements: 6,
            points_per_period: 40.0,
        }
    }
}

/// `v`, `v'`, `v''` on an internal grid that refines the output grid by an
/// integer factor.
#[derive(Debug, Clone)]
pub struct HomogeneousSolution {
    grid: TimeGrid,
    stride: usize,
    h: f64,
    v: Vec<DMatrix<f64>>,
    u: Vec<DMatrix<f64>>,
    a: Vec<DMatrix<f64>>,
    refinement_error: f64,
}

impl HomogeneousSolution {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Internal steps per output step.
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Internal step.
    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn fine_len(&self) -> usize {
        self.v.len()
    }

    pub fn fine_time(&self, i: usize) -> f64 {
        self.h * i as f64
    }

    /// Step-doubling estimate of the last accepted refinement.
    pub fn refinement_error(&self) -> f64 {
        self.refinement_error
    }

    pub fn v_fine(&self, i: usize) -> &DMatrix<f64> {
        &self.v[i]
    }

    pub fn v_dot_fine(&self, i: usize) -> &DMatrix<f64> {
        &self.u[i]
    }

    pub fn v_ddot_fine(&self, i: usize) -> &DMatrix<f64> {
        &self.a[i]
    }

    /// `v` at output index `k`.
    pub fn v(&self, k: usize) -> &DMatrix<f64> {
        &self.v[k * self.stride]
    }

    pub fn v_dot(&self, k: usize) -> &DMatrix<f64> {
        &self.u[k * self.stride]
    }

    pub fn v_ddot(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k * self.stride]
    }
}

fn gl01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        w.iter().map(|w| 0.5 * w).collect(),
    )
}

fn gl12() -> &'static (Vec<f64>, Vec<f64>) {
    static G: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    G.get_or_init(|| gl01(12))
}

fn hermite(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    ]
}

// int_t^1 of each Hermite basis function.
fn hermite_tail(t: f64) -> [f64; 4] {
    let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
    [
        0.5 - 0.5 * t4 + t3 - t,
        1.0 / 12.0 - (0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2),
        0.5 + 0.5 * t4 - t3,
        -1.0 / 12.0 - 0.25 * t4 + t3 / 3.0,
    ]
}

const HERMITE_TAIL_AT_ZERO: [f64; 4] = [0.5, 1.0 / 12.0, 0.5, -1.0 / 12.0];

// Panels close to the origin are split so that each piece spans about half
// a kernel width.
fn subdivisions(lag_start: f64, h: f64, cutoff: f64) -> usize {
    if lag_start * cutoff < 30.0 {
        (2.0 * cutoff * h).ceil() as usize + 1
    } else {
        2
    }
}

/// Product-integration weights of the friction memory for one lag.
#[derive(Debug, Clone, Copy, Default)]
struct LagWeights {
    /// `int_0^1 Gamma((k - tau) h) H_b(tau) dtau`.
    memory: [f64; 4],
    /// Same for the integrated memory with its long-lag limit removed.
    integrated: [f64; 4],
}

fn lag_weights(kernels: &ScalarKernels, h: f64, lags: usize) -> Vec<LagWeights> {
    let cutoff = kernels.density().cutoff;
    let (x, w) = gl12();
    // raw[k] = (int Gamma H_b, int Gamma Hhat_b) for k = 1..=lags
    let raw: Vec<([f64; 4], [f64; 4])> = (1..=lags)
        .into_par_iter()
        .map(|k| {
            let nsub = subdivisions((k as f64 - 1.0) * h, h, cutoff);
            let mut m = [0.0; 4];
            let mut j = [0.0; 4];
            for q in 0..nsub {
                let (lo, width) = (q as f64 / nsub as f64, 1.0 / nsub as f64);
                for (xi, wi) in x.iter().zip(w) {
                    let tau = lo + width * xi;
                    let g = kernels.memory((k as f64 - tau) * h) * wi * width;
                    let hb = hermite(tau);
                    let ht = hermite_tail(tau);
                    for b in 0..4 {
                        m[b] += g * hb[b];
                        j[b] += g * ht[b];
                    }
                }
            }
            (m, j)
        })
        .collect();
    let long_lag = long_lag_memory(kernels);
    let mut out = vec![LagWeights::default(); lags + 1];
    let mut cumulative = 0.0;
    for k in 1..=lags {
        let (m, j) = raw[k - 1];
        // H0 + H2 = 1, so the panel integral of Gamma is h (m0 + m2)
        cumulative += h * (m[0] + m[2]);
        let remainder = match kernels.memory_integral_closed(k as f64 * h) {
            Some(_) if long_lag > 0.0 => -long_lag * libm::erfc(cutoff * k as f64 * h / 2.0),
            Some(v) => v,
            None => cumulative - long_lag,
        };
        let mut integrated = [0.0; 4];
        for b in 0..4 {
            integrated[b] = remainder * HERMITE_TAIL_AT_ZERO[b] - h * j[b];
        }
        out[k] = LagWeights {
            memory: m,
            integrated,
        };
    }
    out
}

// Limit of int_0^x Gamma for x -> infinity when it is handled through
// running sums; zero when the full history is kept.
fn long_lag_memory(kernels: &ScalarKernels) -> f64 {
    if kernels.is_trivial() || !kernels.density().is_ohmic() {
        0.0
    } else {
        kernels.density().memory_total()
    }
}

struct Coefficients {
    w2: DMatrix<f64>,
    k: DMatrix<f64>,
}

fn coefficients(model: &Model, kernels: &ScalarKernels) -> Coefficients {
    let n = model.n();
    let masses = model.system.masses();
    let outer = model.system.coupling_outer();
    let k = DMatrix::from_fn(n, n, |r, c| 2.0 * outer[(r, c)] / masses[r]);
    let mut w2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        model.system.frequencies().iter().map(|w| w * w),
    ));
    if !model.counterterm {
        w2 -= &k * kernels.memory(0.0);
    }
    Coefficients { w2, k }
}

fn add_scaled(acc: &mut DMatrix<f64>, scale: f64, x: &DMatrix<f64>) {
    for (a, b) in acc.iter_mut().zip(x.iter()) {
        *a += scale * b;
    }
}

type Trajectory = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

fn volterra(model: &Model, kernels: &ScalarKernels, h: f64, steps: usize) -> Result<Trajectory> {
    let n = model.n();
    let Coefficients { w2, k } = coefficients(model, kernels);
    let window = match kernels.memory_range() {
        Some(r) => ((r / h).floor() as usize + 2).min(steps.max(1)),
        None => steps.max(1),
    };
    let weights = lag_weights(kernels, h, window);
    let g_inf = long_lag_memory(kernels);
    let id = DMatrix::<f64>::identity(n, n);
    let one = &weights[1];

    let h2 = h * h;
    let a11 = &id + &w2 * (0.15 * h2) + &k * (g_inf * h / 2.0 + h * one.integrated[2]);
    let a12 = &w2 * (-h2 * h / 30.0) + &k * (-g_inf * h2 / 12.0 + h2 * one.integrated[3]);
    let a21 = &w2 * (h / 2.0) + &k * (h * one.memory[2]);
    let a22 = &id + &w2 * (-h2 / 12.0) + &k * (h2 * one.memory[3]);
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&a11);
    block.view_mut((0, n), (n, n)).copy_from(&a12);
    block.view_mut((n, 0), (n, n)).copy_from(&a21);
    block.view_mut((n, n), (n, n)).copy_from(&a22);
    let block = block.lu();
    let accel = (&id + &k * (h2 * one.memory[3])).lu();
    if !block.is_invertible() || !accel.is_invertible() {
        return Err(Error::Singular(format!("implicit step matrix at h={h}")));
    }

    let mut v = Vec::with_capacity(steps + 1);
    let mut u = Vec::with_capacity(steps + 1);
    let mut a = Vec::with_capacity(steps + 1);
    v.push(DMatrix::zeros(n, n));
    u.push(id.clone());
    a.push(DMatrix::zeros(n, n));
    // running sums over complete panels of int v, int t_{j+1} v, int (t_{j+1}-s) v
    let mut sum_a = DMatrix::zeros(n, n);
    let mut sum_ta = DMatrix::zeros(n, n);
    let mut sum_b = DMatrix::zeros(n, n);
    let mut hist_r = DMatrix::<f64>::zeros(n, n);
    let mut hist_g = DMatrix::<f64>::zeros(n, n);
    let mut hist_ga = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::zeros(2 * n, n);

    for step in 1..=steps {
        let t = h * step as f64;
        hist_r.fill(0.0);
        hist_g.fill(0.0);
        hist_ga.fill(0.0);
        for lag in 2..=step.min(window) {
            let j = step - lag;
            let lw = &weights[lag];
            let (r, g) = (&lw.integrated, &lw.memory);
            add_scaled(&mut hist_r, h * r[0], &v[j]);
            add_scaled(&mut hist_r, h2 * r[1], &u[j]);
            add_scaled(&mut hist_r, h * r[2], &v[j + 1]);
            add_scaled(&mut hist_r, h2 * r[3], &u[j + 1]);
            add_scaled(&mut hist_g, h * g[0], &v[j]);
            add_scaled(&mut hist_g, h2 * g[1], &u[j]);
            add_scaled(&mut hist_g, h * g[2], &v[j + 1]);
            add_scaled(&mut hist_g, h2 * g[3], &u[j + 1]);
            add_scaled(&mut hist_ga, h * g[0], &u[j]);
            add_scaled(&mut hist_ga, h2 * g[1], &a[j]);
            add_scaled(&mut hist_ga, h * g[2], &u[j + 1]);
            add_scaled(&mut hist_ga, h2 * g[3], &a[j + 1]);
        }
        let (vp, up, ap) = (&v[step - 1], &u[step - 1], &a[step - 1]);
        let a_known = (vp * 0.5 + up * (h / 12.0)) * h;
        let b_known = (vp * 0.35 + up * (h / 20.0)) * h2;
        let (r, g) = (&one.integrated, &one.memory);
        let lag_one_r = (vp * r[0] + up * (h * r[1])) * h;
        let lag_one_g = (vp * g[0] + up * (h * g[1])) * h;

        let poly = &sum_a * t - &sum_ta + &sum_b + &b_known;
        let rhs_v = &id * t - &w2 * poly - &k * ((&sum_a + &a_known) * g_inf + &hist_r + lag_one_r);
        let rhs_u = &id - &w2 * (&sum_a + &a_known) - &k * (&hist_g + lag_one_g);
        rhs.view_mut((0, 0), (n, n)).copy_from(&rhs_v);
        rhs.view_mut((n, 0), (n, n)).copy_from(&rhs_u);
        let sol = block
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("implicit step".into()))?;
        let vn = sol.view((0, 0), (n, n)).into_owned();
        let un = sol.view((n, 0), (n, n)).into_owned();

        let conv_known = &hist_ga + (up * g[0] + ap * (h * g[1]) + &un * g[2]) * h;
        let an = accel
            .solve(&(-(&w2 * &vn) - &k * conv_known))
            .ok_or_else(|| Error::Singular("acceleration step".into()))?;

        let panel_a = (vp + &vn) * (0.5 * h) + (up - &un) * (h2 / 12.0);
        let panel_b = &b_known + (&vn * 0.15 - &un * (h / 30.0)) * h2;
        sum_ta += &panel_a * t;
        sum_a += panel_a;
        sum_b += panel_b;
        v.push(vn);
        u.push(un);
        a.push(an);
    }
    Ok((v, u, a))
}

fn initial_step(model: &Model, grid: TimeGrid, opts: &SolverOptions) -> (usize, f64) {
    let fastest = model.system.max_frequency();
    let h0 = 2.0 * std::f64::consts::PI / (opts.points_per_period * fastest);
    let stride = (grid.step() / h0).ceil().max(1.0) as usize;
    (stride, grid.step() / stride as f64)
}

fn relative_change(coarse: &[DMatrix<f64>], fine: &[DMatrix<f64>]) -> f64 {
    let scale = fine
        .iter()
        .map(|m| m.amax())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (c - &fine[2 * i]).amax())
        .fold(0.0, f64::max)
        / scale
}

/// Homogeneous solution on `grid`, refined internally until halving the
/// step changes `v` and `v'` by less than `opts.rel_tol`.
pub fn solve_homogeneous(
    model: &Model,
    grid: TimeGrid,
    opts: &SolverOptions,
) -> Result<HomogeneousSolution> {
    let (mut stride, mut h) = initial_step(model, grid, opts);
    match opts.mode {
        HomogeneousMode::Analytic(reading) => analytic_solution(model, grid, stride, h, reading),
        HomogeneousMode::Numeric => {
            let kernels = ScalarKernels::new(model.density, model.bath.temperature)?;
            if kernels.is_trivial() {
                return Ok(free_solution(model, &kernels, grid, stride, h));
            }
            let steps = |stride: usize| stride * (grid.len() - 1);
            let mut coarse = volterra(model, &kernels, h, steps(stride))?;
            let mut last = f64::INFINITY;
            for _ in 0..=opts.max_refinements {
                let fine = volterra(model, &kernels, h / 2.0, steps(2 * stride))?;
                let err =
                    relative_change(&coarse.0, &fine.0).max(relative_change(&coarse.1, &fine.1));
                stride *= 2;
                h /= 2.0;
                last = err;
                coarse = fine;
                if err < opts.rel_tol {
                    let (v, u, a) = coarse;
                    return Ok(HomogeneousSolution {
                        grid,
                        stride,
                        h,
                        v,
                        u,
                        a,
                        refinement_error: err,
                    });
                }
            }
            Err(Error::Refinement(format!(
                "relative change {last:.3e} after {} halvings exceeds {:.1e}",
                opts.max_refinements, opts.rel_tol
            )))
        }
    }
}

// Without coupling there is no memory and `(v, v')` follows a constant
// linear flow, propagated by powers of its one-step exponential.
fn free_solution(
    model: &Model,
    kernels: &ScalarKernels,
    grid: TimeGrid,
    stride: usize,
    h: f64,
) -> HomogeneousSolution {
    let n = model.n();
    let w2 = coefficients(model, kernels).w2;
    let mut gen = DMatrix::zeros(2 * n, 2 * n);
    gen.view_mut((0, n), (n, n)).fill_with_identity();
    gen.view_mut((n, 0), (n, n)).copy_from(&(-&w2));
    let one_step = (gen * h).exp();
    let n_fine = stride * (grid.len() - 1) + 1;
    let mut state = DMatrix::zeros(2 * n, n);
    state.view_mut((n, 0), (n, n)).fill_with_identity();
    let (mut v, mut u, mut a) = (
        Vec::with_capacity(n_fine),
        Vec::with_capacity(n_fine),
        Vec::with_capacity(n_fine),
    );
    for _ in 0..n_fine {
        let vi = state.view((0, 0), (n, n)).into_owned();
        a.push(-&w2 * &vi);
        u.push(state.view((n, 0), (n, n)).into_owned());
        v.push(vi);
        state = &one_step * state;
    }
    HomogeneousSolution {
        grid,
        stride,
        h,
        v,
        u,
        a,
        refinement_error: 0.0,
    }
}

fn analytic_solution(
    model: &Model,
    grid: TimeGrid,
    stride: usize,
    h: f64,
    reading: ClosedFormReading,
) -> Result<HomogeneousSolution> {
    let sys = &model.system;
    let symmetric = sys.n() == 2
        && sys.masses()[0] == sys.masses()[1]
        && sys.weights().iter().all(|&w| w == 1.0)
        && model.density.is_ohmic()
        && model.counterterm;
    if !symmetric {
        return Err(Error::InvalidParameter(
            "closed-form mode needs two equal-mass, symmetrically coupled oscillators in an ohmic bath".into(),
        ));
    }
    let f = sys.frequencies();
    let closed = AnalyticV::new(f[0], f[1], model.density.gamma, reading)?;
    let n_fine = stride * (grid.len() - 1) + 1;
    let at = |i: usize, order: u32| {
        let m = closed.oscillator_basis(h * i as f64, order);
        DMatrix::from_column_slice(2, 2, m.as_slice())
    };
    Ok(HomogeneousSolution {
        grid,
        stride,
        h,
        v: (0..n_fine).map(|i| at(i, 0)).collect(),
        u: (0..n_fine).map(|i| at(i, 1)).collect(),
        a: (0..n_fine).map(|i| at(i, 2)).collect(),
        refinement_error: 0.0,
    })
}

/// `R` in interleaved `(X1, P1, ...)` order from `v'`, `v/M`, `M v''`.
pub fn transition_matrix(
    v: &DMatrix<f64>,
    u: &DMatrix<f64>,
    a: &DMatrix<f64>,
    masses: &[f64],
) -> Result<DMatrix<f64>> {
    let n = masses.len();
    if v.nrows() != n || u.nrows() != n || a.nrows() != n {
        return Err(Error::Dimension(format!(
            "{n} masses for a {}x{} solution",
            v.nrows(),
            v.ncols()
        )));
    }
    if masses.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Singular("mass matrix".into()));
    }
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            r[(2 * i, 2 * j)] = u[(i, j)];
            r[(2 * i, 2 * j + 1)] = v[(i, j)] / masses[j];
            r[(2 * i + 1, 2 * j)] = masses[i] * a[(i, j)];
            r[(2 * i + 1, 2 * j + 1)] = masses[i] * u[(i, j)] / masses[j];
        }
    }
    Ok(r)
}

/// `R(t)` at every output time.
pub fn classical_transition(
    hom: &HomogeneousSolution,
    masses: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    (0..hom.grid.len())
        .map(|k| transition_matrix(hom.v(k), hom.v_dot(k), hom.v_ddot(k), masses))
        .collect()
}

// C^{bb'}(rho) = int H_b(tau) H_b'(tau - rho) over tau, tau - rho in [0, 1].
fn hermite_overlap(rho: f64) -> [f64; 16] {
    static G8: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = G8.get_or_init(|| gl01(8));
    let (lo, hi) = (rho.max(0.0), (1.0 + rho).min(1.0));
    let mut c = [0.0; 16];
    if hi <= lo {
        return c;
    }
    for (xi, wi) in x.iter().zip(w) {
        let tau = lo + (hi - lo) * xi;
        let p = hermite(tau);
        let q = hermite(tau - rho);
        for b in 0..4 {
            for bp in 0..4 {
                c[4 * b + bp] += wi * (hi - lo) * p[b] * q[bp];
            }
        }
    }
    c
}

// E_k^{bb'} = int_{-1}^{1} nu((k + rho) h) C^{bb'}(rho) drho
fn noise_lag(kernels: &ScalarKernels, h: f64, k: usize) -> [f64; 16] {
    let cutoff = kernels.density().cutoff;
    let (x, w) = gl12();
    let nsub = subdivisions((k as f64 - 1.0).max(0.0) * h, h, cutoff);
    let mut e = [0.0; 16];
    for side in [-1.0, 0.0] {
        for q in 0..nsub {
            let width = 1.0 / nsub as f64;
            let lo = side + q as f64 * width;
            for (xi, wi) in x.iter().zip(w) {
                let rho = lo + width * xi;
                let nu = kernels.noise((k as f64 + rho) * h) * wi * width;
                let c = hermite_overlap(rho);
                for (e, c) in e.iter_mut().zip(c) {
                    *e += nu * c;
                }
            }
        }
    }
    e
}

fn noise_lag_table(kernels: &ScalarKernels, h: f64, max_lag: usize) -> Vec<[f64; 16]> {
    const CHUNK: usize = 64;
    const QUIET_RUN: usize = 16;
    let cutoff = kernels.density().cutoff;
    let mut table: Vec<[f64; 16]> = Vec::new();
    let mut scale = 0.0;
    let mut quiet = 0;
    let mut start = 0;
    while start <= max_lag {
        let end = (start + CHUNK).min(max_lag + 1);
        let chunk: Vec<[f64; 16]> = (start..end)
            .into_par_iter()
            .map(|k| noise_lag(kernels, h, k))
            .collect();
        for (offset, e) in chunk.into_iter().enumerate() {
            let k = start + offset;
            let size = e.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if k == 0 {
                scale = size;
            }
            table.push(e);
            if k as f64 * h * cutoff >= 26.0 && size <= 1e-15 * scale {
                quiet += 1;
                if quiet >= QUIET_RUN {
                    table.truncate(k + 1 - QUIET_RUN);
                    return table;
                }
            } else {
                quiet = 0;
            }
        }
        start = end;
    }
    table
}

/// `S` at every internal node of `hom`.
pub fn diffusion_series(model: &Model, hom: &HomogeneousSolution) -> Result<Vec<DMatrix<f64>>> {
    let n = model.n();
    let d = 2 * n;
    let n_fine = hom.fine_len();
    let mut out = Vec::with_capacity(n_fine);
    out.push(DMatrix::zeros(d, d));
    if model.density.gamma == 0.0 || n_fine == 1 {
        out.resize(n_fine, DMatrix::zeros(d, d));
        return Ok(out);
    }
    let kernels = ScalarKernels::new(model.density, model.bath.temperature)?;
    let h = hom.step();
    let table = noise_lag_table(&kernels, h, n_fine - 1);
    let masses = model.system.masses();
    let weights = model.system.weights();
    let m_inv_w: Vec<f64> = weights.iter().zip(masses).map(|(w, m)| w / m).collect();
    // response F and its derivative, interleaved, flattened by node
    let mut f = vec![0.0; n_fine * d];
    let mut fd = vec![0.0; n_fine * d];
    for i in 0..n_fine {
        let (v, u, a) = (hom.v_fine(i), hom.v_dot_fine(i), hom.v_ddot_fine(i));
        for r in 0..n {
            let (mut vx, mut ux, mut ax) = (0.0, 0.0, 0.0);
            for c in 0..n {
                vx += v[(r, c)] * m_inv_w[c];
                ux += u[(r, c)] * m_inv_w[c];
                ax += a[(r, c)] * m_inv_w[c];
            }
            f[i * d + 2 * r] = vx;
            f[i * d + 2 * r + 1] = masses[r] * ux;
            fd[i * d + 2 * r] = ux;
            fd[i * d + 2 * r + 1] = masses[r] * ax;
        }
    }
    let coef = |q: usize, b: usize, i: usize| -> f64 {
        match b {
            0 => f[q * d + i],
            1 => h * fd[q * d + i],
            2 => f[(q + 1) * d + i],
            _ => h * fd[(q + 1) * d + i],
        }
    };
    let e0 = table[0];
    let mut s = DMatrix::zeros(d, d);
    let mut y = vec![0.0; 4 * d];
    let mut cp = vec![0.0; 4 * d];
    for p in 0..n_fine - 1 {
        y.iter_mut().for_each(|x| *x = 0.0);
        for k in 1..=p.min(table.len() - 1) {
            let q = p - k;
            let e = &table[k];
            for bp in 0..4 {
                for i in 0..d {
                    let c = coef(q, bp, i);
                    if c == 0.0 {
                        continue;
                    }
                    for b in 0..4 {
                        y[b * d + i] += e[4 * b + bp] * c;
                    }
                }
            }
        }
        for b in 0..4 {
            for i in 0..d {
                cp[b * d + i] = coef(p, b, i);
            }
        }
        let h2 = h * h;
        for i in 0..d {
            for j in 0..d {
                let mut inc = 0.0;
                for b in 0..4 {
                    inc += cp[b * d + i] * y[b * d + j] + y[b * d + i] * cp[b * d + j];
                    for bp in 0..4 {
                        inc += e0[4 * b + bp] * cp[b * d + i] * cp[bp * d + j];
                    }
                }
                s[(i, j)] += h2 * inc;
            }
        }
        // keep exact symmetry against round-off drift
        let sym = (&s + s.transpose()) * 0.5;
        s = sym;
        out.push(s.clone());
    }
    Ok(out)
}

/// `S(t)` at an output time of `hom`'s grid.
pub fn diffusion_matrix(model: &Model, hom: &HomogeneousSolution, t: f64) -> Result<DMatrix<f64>> {
    let k = (t / hom.grid().step()).round();
    if !(t >= 0.0)
        || (k * hom.grid().step() - t).abs() > 1e-9 * t.max(1.0)
        || k as usize >= hom.grid().len()
    {
        return Err(Error::InvalidParameter(format!(
            "t={t} is not a node of the output grid"
        )));
    }
    let upto = k as usize * hom.stride() + 1;
    let trimmed = HomogeneousSolution {
        grid: hom.grid,
        stride: hom.stride,
        h: hom.h,
        v: hom.v[..upto].to_vec(),
        u: hom.u[..upto].to_vec(),
        a: hom.a[..upto].to_vec(),
        refinement_error: hom.refinement_error,
    };
    Ok(diffusion_series(model, &trimmed)?
        .pop()
        .expect("series has at least one entry"))
}

/// `(R(t), S(t))` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorPair {
    pub t: f64,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

impl PropagatorPair {
    pub fn identity(n: usize) -> Self {
        Self {
            t: 0.0,
            r: DMatrix::identity(2 * n, 2 * n),
            s: DMatrix::zeros(2 * n, 2 * n),
        }
    }
}

/// Homogeneous solution together with `S` on the internal grid.
#[derive(Debug, Clone)]
pub struct Propagation {
    hom: HomogeneousSolution,
    masses: Vec<f64>,
    s: Vec<DMatrix<f64>>,
}

impl Propagation {
    pub fn homogeneous(&self) -> &HomogeneousSolution {
        &self.hom
    }

    pub fn fine_pair(&self, i: usize) -> PropagatorPair {
        let r = transition_matrix(
            self.hom.v_fine(i),
            self.hom.v_dot_fine(i),
            self.hom.v_ddot_fine(i),
            &self.masses,
        )
        .expect("dimensions checked at construction");
        PropagatorPair {
            t: self.hom.fine_time(i),
            r,
            s: self.s[i].clone(),
        }
    }

    pub fn fine_pairs(&self) -> Vec<PropagatorPair> {
        (0..self.hom.fine_len())
            .map(|i| self.fine_pair(i))
            .collect()
    }

    /// Pairs on the output grid.
    pub fn pairs(&self) -> Vec<PropagatorPair> {
        (0..self.hom.grid().len())
            .map(|k| {
                let mut p = self.fine_pair(k * self.hom.stride());
                p.t = self.hom.grid().time(k);
                p
            })
            .collect()
    }
}

pub fn propagate(model: &Model, grid: TimeGrid, opts: &SolverOptions) -> Result<Propagation> {
    let hom = solve_homogeneous(model, grid, opts)?;
    let s = diffusion_series(model, &hom)?;
    Ok(Propagation {
        hom,
        masses: model.system.masses().to_vec(),
        s,
    })
}

/// `V_t = R V_0 R^T + S`.
pub fn evolve_covariance(v0: &CovarianceMatrix, pp: &PropagatorPair) -> Result<CovarianceMatrix> {
    if v0.matrix().nrows() != pp.r.nrows() {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, propagator is {}x{}",
            v0.matrix().nrows(),
            v0.matrix().nrows(),
            pp.r.nrows(),
            pp.r.nrows()
        )));
    }
    v0.check_physical(1e-9)?;
    let vt = &pp.r * v0.matrix() * pp.r.transpose() + &pp.s;
    CovarianceMatrix::new((&vt + vt.transpose()) * 0.5)
}

/// Drift `A = R' R^{-1}` and diffusion `D = S'/2 - sym(A S)` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterEqCoefficients {
    pub t: f64,
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
}

fn derivative(f: &[&DMatrix<f64>], i: usize, h: f64) -> DMatrix<f64> {
    let n = f.len();
    let d = if i >= 2 && i + 2 < n {
        (f[i - 2] - f[i - 1] * 8.0 + f[i + 1] * 8.0 - f[i + 2]) / 12.0
    } else if i == 0 {
        (f[0] * -25.0 + f[1] * 48.0 - f[2] * 36.0 + f[3] * 16.0 - f[4] * 3.0) / 12.0
    } else if i == 1 {
        (f[0] * -3.0 - f[1] * 10.0 + f[2] * 18.0 - f[3] * 6.0 + f[4]) / 12.0
    } else if i == n - 2 {
        (f[n - 1] * 3.0 + f[n - 2] * 10.0 - f[n - 3] * 18.0 + f[n - 4] * 6.0 - f[n - 5]) / 12.0
    } else {
        (f[n - 1] * 25.0 - f[n - 2] * 48.0 + f[n - 3] * 36.0 - f[n - 4] * 16.0 + f[n - 5] * 3.0)
            / 12.0
    };
    d / h
}

/// Master-equation coefficients on a uniform grid of pairs, derivatives by
/// fourth-order finite differences.
pub fn master_coefficients(pairs: &[PropagatorPair]) -> Result<Vec<MasterEqCoefficients>> {
    if pairs.len() < 5 {
        return Err(Error::InvalidParameter(
            "need at least 5 grid points for the finite differences".into(),
        ));
    }
    let h = pairs[1].t - pairs[0].t;
    for (k, p) in pairs.iter().enumerate() {
        if (p.t - pairs[0].t - k as f64 * h).abs() > 1e-9 * p.t.abs().max(h) {
            return Err(Error::InvalidParameter(
                "master-equation grid must be uniform".into(),
            ));
        }
    }
    let rs: Vec<&DMatrix<f64>> = pairs.iter().map(|p| &p.r).collect();
    let ss: Vec<&DMatrix<f64>> = pairs.iter().map(|p| &p.s).collect();
    (0..pairs.len())
        .map(|i| {
            let r_inv = pairs[i]
                .r
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("R at t={}", pairs[i].t)))?;
            let drift = derivative(&rs, i, h) * r_inv;
            let a_s = &drift * &pairs[i].s;
            let diffusion = derivative(&ss, i, h) * 0.5 - (&a_s + a_s.transpose()) * 0.5;
            Ok(MasterEqCoefficients {
                t: pairs[i].t,
                drift,
                diffusion,
            })
        })
        .collect()
}

fn covariance_rate(c: &MasterEqCoefficients, v: &DMatrix<f64>) -> DMatrix<f64> {
    let av = &c.drift * v;
    &av + av.transpose() + &c.diffusion * 2.0
}

/// Integrate `V' = A V + V A^T + 2 D` by classical Runge-Kutta with step
/// twice the coefficient spacing, so every stage lands on a grid point.
/// Returns `V` at the even-indexed coefficient times.
pub fn integrate_master(
    coeffs: &[MasterEqCoefficients],
    v0: &DMatrix<f64>,
) -> Result<Vec<(f64, DMatrix<f64>)>> {
    if coeffs.is_empty() {
        return Err(Error::InvalidParameter("no coefficients".into()));
    }
    if v0.nrows() != coeffs[0].drift.nrows() {
        return Err(Error::Dimension(
            "initial covariance does not match the coefficients".into(),
        ));
    }
    let mut v = v0.clone();
    let mut out = vec![(coeffs[0].t, v.clone())];
    let mut i = 0;
    while i + 2 < coeffs.len() {
        let step = coeffs[i + 2].t - coeffs[i].t;
        let (c0, cm, c1) = (&coeffs[i], &coeffs[i + 1], &coeffs[i + 2]);
        let k1 = covariance_rate(c0, &v);
        let k2 = covariance_rate(cm, &(&v + &k1 * (step / 2.0)));
        let k3 = covariance_rate(cm, &(&v + &k2 * (step / 2.0)));
        let k4 = covariance_rate(c1, &(&v + &k3 * step));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
        i += 2;
        out.push((coeffs[i].t, v.clone()));
    }
    Ok(out)
}
