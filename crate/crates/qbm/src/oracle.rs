//! Reference dynamics with an explicit, finite bath.
//!
//! The continuum density is replaced by `M` unit-mass oscillators on a
//! midpoint frequency grid. System plus bath form a closed quadratic
//! Hamiltonian whose flow is a matrix exponential; the reduced state is the
//! system block of the full covariance. The discretization is faithful only
//! before the bath recurrence time `2 pi / dw`.

use nalgebra::DMatrix;

use crate::model::{w_coth, SpectralDensity, SystemSpec};
use crate::phase_space::CovarianceMatrix;
use crate::propagator::PropagatorPair;
use crate::quadrature::{integrate, Tolerance};
use crate::{Error, Result};

/// Discrete bath reproducing the spectral density bin by bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BathRealization {
    pub frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
    pub masses: Vec<f64>,
    pub spacing: f64,
    /// Non-fatal concerns about the discretization.
    pub warnings: Vec<String>,
}

impl BathRealization {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Last time before the discrete bath recurs.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.spacing
    }

    /// Mode-sum noise kernel `sum c_i^2 coth(w_i/2T) cos(w_i s) / (2 m_i w_i)`.
    pub fn noise_kernel(&self, s: f64, temperature: f64) -> f64 {
        self.modes()
            .map(|(w, c, m)| c * c * w_coth(w, temperature) / (2.0 * m * w * w) * (w * s).cos())
            .sum()
    }

    /// Mode-sum friction memory `sum c_i^2 cos(w_i s) / (2 m_i w_i^2)`.
    pub fn memory_kernel(&self, s: f64) -> f64 {
        self.modes()
            .map(|(w, c, m)| c * c / (2.0 * m * w * w) * (w * s).cos())
            .sum()
    }

    fn modes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.frequencies
            .iter()
            .zip(&self.couplings)
            .zip(&self.masses)
            .map(|((&w, &c), &m)| (w, c, m))
    }
}

/// `M` modes at `w_i = (i - 1/2) dw`, `dw = w_max / M`, with
/// `c_i^2 = 2 m_i w_i int_bin I(w) dw`.
pub fn discretize_bath(
    density: &SpectralDensity,
    modes: usize,
    max_frequency: f64,
) -> Result<BathRealization> {
    if modes < 10 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10 bath modes, got {modes}"
        )));
    }
    if !(max_frequency >= 5.0 * density.cutoff) {
        return Err(Error::InvalidParameter(format!(
            "maximum bath frequency {max_frequency} is below 5 cutoffs ({})",
            5.0 * density.cutoff
        )));
    }
    let dw = max_frequency / modes as f64;
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-12,
        max_intervals: 200,
    };
    let mut frequencies = Vec::with_capacity(modes);
    let mut couplings = Vec::with_capacity(modes);
    for i in 0..modes {
        let (lo, hi) = (i as f64 * dw, (i + 1) as f64 * dw);
        let w = 0.5 * (lo + hi);
        let weight = if density.gamma == 0.0 {
            0.0
        } else {
            integrate(|x| density.eval(x), &[lo, hi], tol)?
        };
        frequencies.push(w);
        couplings.push((2.0 * w * weight).sqrt());
    }
    let mut warnings = Vec::new();
    if dw > density.gamma && density.gamma > 0.0 {
        warnings.push(format!(
            "mode spacing {dw:.4} exceeds gamma {:.4}; the bath does not resolve the damping width",
            density.gamma
        ));
    }
    Ok(BathRealization {
        frequencies,
        couplings,
        masses: vec![1.0; modes],
        spacing: dw,
        warnings,
    })
}

/// System and bath as one closed quadratic Hamiltonian
/// `H = p^T m^{-1} p / 2 + x^T K x / 2`, interleaved system-first ordering.
#[derive(Debug, Clone)]
pub struct ClosedSystem {
    bath: BathRealization,
    n: usize,
    generator: DMatrix<f64>,
}

impl ClosedSystem {
    pub fn new(system: &SystemSpec, bath: BathRealization, counterterm: bool) -> Self {
        let n = system.n();
        let dim = n + bath.len();
        let mut k = DMatrix::zeros(dim, dim);
        let mut inv_mass = vec![0.0; dim];
        let w = system.weights();
        for r in 0..n {
            k[(r, r)] = system.masses()[r] * system.frequencies()[r].powi(2);
            inv_mass[r] = 1.0 / system.masses()[r];
        }
        let shift: f64 = bath.modes().map(|(wi, c, m)| c * c / (m * wi * wi)).sum();
        if counterterm {
            for r in 0..n {
                for q in 0..n {
                    k[(r, q)] += shift * w[r] * w[q];
                }
            }
        }
        for (i, (wi, c, m)) in bath.modes().enumerate() {
            let j = n + i;
            k[(j, j)] = m * wi * wi;
            inv_mass[j] = 1.0 / m;
            for r in 0..n {
                k[(r, j)] = -c * w[r];
                k[(j, r)] = -c * w[r];
            }
        }
        let mut generator = DMatrix::zeros(2 * dim, 2 * dim);
        for a in 0..dim {
            generator[(2 * a, 2 * a + 1)] = inv_mass[a];
            for b in 0..dim {
                generator[(2 * a + 1, 2 * b)] = -k[(a, b)];
            }
        }
        Self { bath, n, generator }
    }

    pub fn bath(&self) -> &BathRealization {
        &self.bath
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    /// Block-diagonal initial covariance: `system` and a thermal bath.
    pub fn initial_covariance(
        &self,
        system: &CovarianceMatrix,
        temperature: f64,
    ) -> Result<DMatrix<f64>> {
        let s = 2 * self.n;
        if system.matrix().nrows() != s {
            return Err(Error::Dimension(format!(
                "system covariance must be {s}x{s}"
            )));
        }
        let mut v = DMatrix::zeros(self.dim(), self.dim());
        v.view_mut((0, 0), (s, s)).copy_from(system.matrix());
        for (i, var) in self.bath_variances(temperature).iter().enumerate() {
            v[(s + i, s + i)] = *var;
        }
        Ok(v)
    }

    // Thermal (x, p) variances of every bath mode, interleaved.
    fn bath_variances(&self, temperature: f64) -> Vec<f64> {
        self.bath
            .modes()
            .flat_map(|(w, _, m)| {
                let c = w_coth(w, temperature) / w;
                [c / (2.0 * m * w), m * w * c / 2.0]
            })
            .collect()
    }

    fn check_window(&self, t: f64) -> Result<()> {
        let limit = self.bath.recurrence_time();
        if t > limit {
            return Err(Error::Recurrence { t, limit });
        }
        Ok(())
    }

    /// `e^{A t} V_0 e^{A^T t}` for the full covariance.
    pub fn evolve_closed(&self, v0: &DMatrix<f64>, t: f64) -> Result<ClosedCovariance> {
        self.check_window(t)?;
        if v0.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "full covariance must be {0}x{0}",
                self.dim()
            )));
        }
        let e = (&self.generator * t).exp();
        let v = &e * v0 * e.transpose();
        Ok(ClosedCovariance {
            n: self.n,
            matrix: (&v + v.transpose()) * 0.5,
        })
    }

    /// Reduced covariance on a uniform grid starting at 0.
    pub fn reduced_trajectory(
        &self,
        system: &CovarianceMatrix,
        temperature: f64,
        step: f64,
        count: usize,
    ) -> Result<Vec<CovarianceMatrix>> {
        let s = 2 * self.n;
        if system.matrix().nrows() != s {
            return Err(Error::Dimension(format!(
                "system covariance must be {s}x{s}"
            )));
        }
        self.propagator_trajectory(temperature, step, count)?
            .iter()
            .map(|pp| {
                let v = &pp.r * system.matrix() * pp.r.transpose() + &pp.s;
                CovarianceMatrix::new((&v + v.transpose()) * 0.5)
            })
            .collect()
    }

    /// The pair (R, S) read off the closed evolution: R is the system block
    /// of the flow, S the thermal bath variance pushed into the system. The
    /// one-step exponential is formed once and only system rows are carried.
    pub fn propagator_trajectory(
        &self,
        temperature: f64,
        step: f64,
        count: usize,
    ) -> Result<Vec<PropagatorPair>> {
        self.check_window(step * count.saturating_sub(1) as f64)?;
        let s = 2 * self.n;
        let one_step = (&self.generator * step).exp();
        let bath_var = self.bath_variances(temperature);
        let mut rows = DMatrix::zeros(s, self.dim());
        rows.view_mut((0, 0), (s, s)).fill_with_identity();
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            if k > 0 {
                rows = &rows * &one_step;
            }
            let mut noise = DMatrix::zeros(s, s);
            for (j, var) in bath_var.iter().enumerate() {
                let col = rows.column(s + j);
                noise += col * col.transpose() * *var;
            }
            out.push(PropagatorPair {
                t: step * k as f64,
                r: rows.view((0, 0), (s, s)).into_owned(),
                s: (&noise + noise.transpose()) * 0.5,
            });
        }
        Ok(out)
    }
}

/// Covariance of system plus bath.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCovariance {
    n: usize,
    pub matrix: DMatrix<f64>,
}

/// Gaussian partial trace over the bath: the system block.
pub fn reduced_covariance(full: &ClosedCovariance) -> Result<CovarianceMatrix> {
    let s = 2 * full.n;
    CovarianceMatrix::new(full.matrix.view((0, 0), (s, s)).into_owned())
}
