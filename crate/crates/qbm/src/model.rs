//! System and bath specification, spectral density and the memory kernels.
//!
//! Spectral density convention:
//! `I(w) = (M gamma / pi) w (w / w_ref)^s exp(-w^2 / cutoff^2)`, normalized as
//! `I(w) = sum_i c_i^2 / (2 m_i w_i) delta(w - w_i)`. With this choice a single
//! ohmic oscillator relaxes as `exp(-gamma t / 2)` in the Markov limit. The
//! scalar kernels are
//!
//! * noise `nu(x) = int I(w) coth(w / 2T) cos(w x) dw`,
//! * dissipation `-eta(x)` with `eta(x) = int I(w) sin(w x) dw`,
//! * friction memory `Gamma(x) = int I(w) / w cos(w x) dw`, so that
//!   `Gamma'(x) = -eta(x)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::quadrature::{integrate, FilonTransform, Tolerance};
use crate::{Error, Result};

/// Parameters of the bath spectral density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensity {
    pub gamma: f64,
    pub cutoff: f64,
    pub reference_frequency: f64,
    pub exponent: f64,
    pub mass: f64,
}

impl SpectralDensity {
    pub fn new(
        gamma: f64,
        cutoff: f64,
        reference_frequency: f64,
        exponent: f64,
        mass: f64,
    ) -> Result<Self> {
        let ok = gamma >= 0.0
            && gamma.is_finite()
            && cutoff > 0.0
            && cutoff.is_finite()
            && reference_frequency > 0.0
            && exponent >= 0.0
            && mass > 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "spectral density needs gamma >= 0, cutoff > 0, reference frequency > 0, exponent >= 0, mass > 0 \
                 (got gamma={gamma}, cutoff={cutoff}, w_ref={reference_frequency}, s={exponent}, M={mass})"
            )));
        }
        Ok(Self {
            gamma,
            cutoff,
            reference_frequency,
            exponent,
            mass,
        })
    }

    pub fn ohmic(gamma: f64, cutoff: f64, mass: f64) -> Result<Self> {
        Self::new(gamma, cutoff, 1.0, 0.0, mass)
    }

    pub fn is_ohmic(&self) -> bool {
        self.exponent == 0.0
    }

    pub fn prefactor(&self) -> f64 {
        self.mass * self.gamma / PI
    }

    /// `I(w) / w`, finite at the origin.
    pub fn over_frequency(&self, w: f64) -> f64 {
        let shape = if self.exponent == 0.0 {
            1.0
        } else {
            (w / self.reference_frequency).powf(self.exponent)
        };
        self.prefactor() * shape * (-(w / self.cutoff).powi(2)).exp()
    }

    pub fn eval(&self, w: f64) -> f64 {
        w * self.over_frequency(w)
    }

    /// `I(w) coth(w / 2T)`, with the `T -> 0` limit `I(w)`.
    pub fn thermal(&self, w: f64, temperature: f64) -> f64 {
        self.over_frequency(w) * w_coth(w, temperature)
    }

    /// Upper integration limit; the Gaussian tail beyond it is below 1e-27.
    pub fn upper_limit(&self) -> f64 {
        8.0 * self.cutoff
    }

    /// `Gamma(infinity) = int_0^inf Gamma(x) dx = (pi/2) lim_{w->0} I(w)/w`.
    pub fn memory_total(&self) -> f64 {
        if self.exponent == 0.0 {
            0.5 * PI * self.prefactor()
        } else {
            0.0
        }
    }
}

/// `w coth(w / 2T)`, equal to `2T` at `w = 0` and `|w|` at `T = 0`.
pub fn w_coth(w: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return w.abs();
    }
    let x = w / (2.0 * temperature);
    if x.abs() < 1e-4 {
        2.0 * temperature * (1.0 + x * x / 3.0)
    } else {
        w / x.tanh()
    }
}

/// Masses, frequencies and coupling weights `c_ir = w_r c_i` of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    masses: Vec<f64>,
    frequencies: Vec<f64>,
    weights: Vec<f64>,
}

impl SystemSpec {
    pub fn new(masses: Vec<f64>, frequencies: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        if n == 0 || frequencies.len() != n || weights.len() != n {
            return Err(Error::InvalidParameter(format!(
                "system needs equal, nonzero numbers of masses ({}), frequencies ({}) and weights ({})",
                n,
                frequencies.len(),
                weights.len()
            )));
        }
        if masses
            .iter()
            .chain(&frequencies)
            .any(|&x| !(x > 0.0 && x.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "masses and frequencies must be positive".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "coupling weights must be finite".into(),
            ));
        }
        Ok(Self {
            masses,
            frequencies,
            weights,
        })
    }

    /// Equal coupling `w = (1, ..., 1)`.
    pub fn symmetric(masses: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        Self::new(masses, frequencies, vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `w w^T`.
    pub fn coupling_outer(&self) -> DMatrix<f64> {
        let w = DVector::from_column_slice(&self.weights);
        &w * w.transpose()
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.masses))
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.iter().copied().fold(0.0, f64::max)
    }
}

/// Thermal state of the bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathState {
    pub temperature: f64,
}

impl BathState {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok(Self { temperature })
    }
}

/// Detuning and scaled temperature of the two-oscillator model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseParams {
    pub delta: f64,
    pub theta: f64,
}

impl CaseParams {
    pub fn new(delta: f64, theta: f64) -> Result<Self> {
        if !(delta.abs() < 1.0 && theta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need |delta| < 1 and theta >= 0, got {delta}, {theta}"
            )));
        }
        Ok(Self { delta, theta })
    }

    /// `(Omega_1, Omega_2)` with `Omega_1^2 + Omega_2^2 = norm^2`.
    pub fn frequencies(&self, norm: f64) -> (f64, f64) {
        (
            norm * ((1.0 + self.delta) / 2.0).sqrt(),
            norm * ((1.0 - self.delta) / 2.0).sqrt(),
        )
    }

    pub fn temperature(&self, norm: f64) -> f64 {
        self.theta * norm
    }

    /// `Delta^2 = |Omega_1^2 - Omega_2^2|`.
    pub fn detuning_squared(&self, norm: f64) -> f64 {
        (self.delta * norm * norm).abs()
    }
}

/// Full specification of the open system.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub system: SystemSpec,
    pub density: SpectralDensity,
    pub bath: BathState,
    /// Add the frequency-renormalizing counterterm to the Hamiltonian.
    pub counterterm: bool,
}

impl Model {
    pub fn new(system: SystemSpec, density: SpectralDensity, bath: BathState) -> Self {
        Self {
            system,
            density,
            bath,
            counterterm: true,
        }
    }

    /// Two equal-mass oscillators with symmetric ohmic coupling, frequencies
    /// normalized to `Omega_1^2 + Omega_2^2 = 1`.
    pub fn two_oscillator_case(
        params: CaseParams,
        gamma: f64,
        cutoff: f64,
        mass: f64,
    ) -> Result<Self> {
        let (w1, w2) = params.frequencies(1.0);
        let system = SystemSpec::symmetric(vec![mass, mass], vec![w1, w2])?;
        let density = SpectralDensity::ohmic(gamma, cutoff, mass)?;
        Ok(Self::new(
            system,
            density,
            BathState::new(params.temperature(1.0))?,
        ))
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }
}

fn kernel_tolerance() -> Tolerance {
    Tolerance {
        abs: 1e-12,
        rel: 1e-10,
        max_intervals: 50_000,
    }
}

// Breakpoints that keep a few oscillations of cos(w x) per starting panel.
fn oscillation_breaks(upper: f64, x: f64) -> Vec<f64> {
    let pieces = ((upper * x.abs()) / (4.0 * PI)).ceil().clamp(1.0, 20_000.0) as usize;
    (0..=pieces)
        .map(|k| upper * k as f64 / pieces as f64)
        .collect()
}

/// `eta(x) = int_0^{8 cutoff} I(w) sin(w x) dw` by adaptive quadrature.
pub fn eta_quadrature(density: &SpectralDensity, x: f64) -> Result<f64> {
    if density.gamma == 0.0 || x == 0.0 {
        return Ok(0.0);
    }
    let up = density.upper_limit();
    integrate(
        |w| density.eval(w) * (w * x).sin(),
        &oscillation_breaks(up, x),
        kernel_tolerance(),
    )
}

/// `nu(x) = int_0^{8 cutoff} I(w) coth(w/2T) cos(w x) dw` by adaptive quadrature.
pub fn nu_quadrature(density: &SpectralDensity, temperature: f64, x: f64) -> Result<f64> {
    if density.gamma == 0.0 {
        return Ok(0.0);
    }
    let up = density.upper_limit();
    integrate(
        |w| density.thermal(w, temperature) * (w * x).cos(),
        &oscillation_breaks(up, x),
        kernel_tolerance(),
    )
}

/// Dissipation kernel matrix `-w w^T eta(s)`.
pub fn dissipation_kernel(model: &Model, s: f64) -> Result<DMatrix<f64>> {
    check_time(s)?;
    Ok(model.system.coupling_outer() * (-eta_quadrature(&model.density, s)?))
}

/// Noise kernel matrix `w w^T nu(s)`.
pub fn noise_kernel(model: &Model, s: f64) -> Result<DMatrix<f64>> {
    check_time(s)?;
    Ok(model.system.coupling_outer() * nu_quadrature(&model.density, model.bath.temperature, s)?)
}

fn check_time(s: f64) -> Result<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kernel time must be >= 0, got {s}"
        )));
    }
    Ok(())
}

/// Fast evaluators of the scalar kernels at arbitrary lags. Ohmic densities
/// use closed forms for the friction memory; everything else goes through a
/// Filon transform of a tabulated profile.
#[derive(Debug, Clone)]
pub struct ScalarKernels {
    density: SpectralDensity,
    temperature: f64,
    noise: Option<FilonTransform>,
    memory: Option<FilonTransform>,
    friction: Option<FilonTransform>,
}

const FILON_TOL: f64 = 1e-13;

impl ScalarKernels {
    pub fn new(density: SpectralDensity, temperature: f64) -> Result<Self> {
        let up = density.upper_limit();
        let (noise, memory, friction) = if density.gamma == 0.0 {
            (None, None, None)
        } else {
            let noise =
                FilonTransform::new(|w| density.thermal(w, temperature), 0.0, up, FILON_TOL)?;
            if density.is_ohmic() {
                (Some(noise), None, None)
            } else {
                let memory =
                    FilonTransform::new(|w| density.over_frequency(w), 0.0, up, FILON_TOL)?;
                let friction = FilonTransform::new(|w| density.eval(w), 0.0, up, FILON_TOL)?;
                (Some(noise), Some(memory), Some(friction))
            }
        };
        Ok(Self {
            density,
            temperature,
            noise,
            memory,
            friction,
        })
    }

    pub fn density(&self) -> &SpectralDensity {
        &self.density
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn is_trivial(&self) -> bool {
        self.density.gamma == 0.0
    }

    /// `nu(x)`.
    pub fn noise(&self, x: f64) -> f64 {
        self.noise.as_ref().map_or(0.0, |f| f.cosine(x))
    }

    /// `Gamma(x) = int I(w)/w cos(w x) dw`.
    pub fn memory(&self, x: f64) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        match &self.memory {
            None => {
                let l = self.density.cutoff;
                self.density.prefactor() * 0.5 * PI.sqrt() * l * (-(l * x / 2.0).powi(2)).exp()
            }
            Some(f) => f.cosine(x),
        }
    }

    /// `int_0^x Gamma`, available in closed form for ohmic densities.
    pub fn memory_integral_closed(&self, x: f64) -> Option<f64> {
        if self.is_trivial() {
            return Some(0.0);
        }
        self.memory
            .is_none()
            .then(|| 0.5 * PI * self.density.prefactor() * libm::erf(self.density.cutoff * x / 2.0))
    }

    /// Dissipation kernel `-eta(x) = Gamma'(x)`.
    pub fn dissipation(&self, x: f64) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        match &self.friction {
            None => {
                let l = self.density.cutoff;
                -self.density.prefactor()
                    * 0.25
                    * PI.sqrt()
                    * l.powi(3)
                    * x
                    * (-(l * x / 2.0).powi(2)).exp()
            }
            Some(f) => -f.sine(x),
        }
    }

    /// Lag beyond which the friction memory is negligible, if it decays fast
    /// enough to be windowed. `None` keeps full history.
    pub fn memory_range(&self) -> Option<f64> {
        if self.is_trivial() {
            Some(0.0)
        } else if self.density.is_ohmic() {
            // erfc(13/2)^... below 1e-19 relative
            Some(13.0 / self.density.cutoff)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_osc(gamma: f64, cutoff: f64, t: f64) -> Model {
        Model::two_oscillator_case(CaseParams::new(0.38, t).unwrap(), gamma, cutoff, 1.0).unwrap()
    }

    // Brute-force composite trapezoid on a very fine grid.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for k in 1..n {
            s += f(a + h * k as f64);
        }
        s * h
    }

    #[test]
    fn parameter_validation() {
        assert!(SpectralDensity::new(-1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(SpectralDensity::new(0.1, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(SpectralDensity::new(0.1, 1.0, 1.0, -0.5, 1.0).is_err());
        assert!(SystemSpec::new(vec![1.0], vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(SystemSpec::symmetric(vec![1.0, -1.0], vec![1.0, 2.0]).is_err());
        assert!(BathState::new(-0.1).is_err());
        assert!(CaseParams::new(1.0, 0.2).is_err());
    }

    #[test]
    fn case_params_expand() {
        let p = CaseParams::new(0.38, 0.7).unwrap();
        let (a, b) = p.frequencies(1.0);
        assert!((a * a + b * b - 1.0).abs() < 1e-15);
        assert!(((a * a - b * b) / (a * a + b * b) - 0.38).abs() < 1e-15);
        assert!((p.detuning_squared(1.0) - 0.38).abs() < 1e-15);
        assert_eq!(p.temperature(2.0), 1.4);
    }

    #[test]
    fn zero_coupling_gives_zero_kernels() {
        let m = two_osc(0.0, 10.0, 0.5);
        for &s in &[0.0, 0.3, 7.0] {
            assert_eq!(dissipation_kernel(&m, s).unwrap().amax(), 0.0);
            assert_eq!(noise_kernel(&m, s).unwrap().amax(), 0.0);
        }
        let k = ScalarKernels::new(m.density, 0.5).unwrap();
        assert_eq!(k.noise(1.0), 0.0);
        assert_eq!(k.memory(0.0), 0.0);
    }

    #[test]
    fn symmetric_coupling_gives_rank_one_kernels() {
        let m = two_osc(0.1, 10.0, 0.5);
        let d = dissipation_kernel(&m, 0.2).unwrap();
        assert!(d[(0, 0)] != 0.0);
        for v in d.iter() {
            assert!((v - d[(0, 0)]).abs() < 1e-15 * d[(0, 0)].abs());
        }
        assert_eq!(dissipation_kernel(&m, 0.0).unwrap().amax(), 0.0);
        assert!(dissipation_kernel(&m, -1.0).is_err());
    }

    #[test]
    fn dissipation_matches_trapezoid_oracle() {
        let m = two_osc(0.1, 50.0, 0.5);
        for &s in &[0.01, 0.04, 0.3] {
            let q = eta_quadrature(&m.density, s).unwrap();
            let oracle = trapezoid(|w| m.density.eval(w) * (w * s).sin(), 0.0, 400.0, 400_000);
            assert!(
                (q - oracle).abs() < 1e-8 * oracle.abs().max(1e-3),
                "s={s} {q} {oracle}"
            );
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let d = SpectralDensity::ohmic(0.1, 20.0, 1.3).unwrap();
        let k = ScalarKernels::new(d, 0.4).unwrap();
        for &x in &[0.0, 0.02, 0.08, 0.3] {
            let g = integrate(
                |w| d.over_frequency(w) * (w * x).cos(),
                &oscillation_breaks(160.0, x),
                kernel_tolerance(),
            )
            .unwrap();
            assert!((k.memory(x) - g).abs() < 1e-10 * k.memory(0.0), "x={x}");
            let eta = eta_quadrature(&d, x).unwrap();
            assert!(
                (k.dissipation(x) + eta).abs() < 1e-9 * k.memory(0.0) * 20.0,
                "x={x}"
            );
        }
        // Gamma integrates to M gamma / 2
        assert!((k.memory_integral_closed(50.0).unwrap() - 0.5 * 1.3 * 0.1).abs() < 1e-15);
        assert!((d.memory_total() - 0.5 * 1.3 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn filon_noise_matches_quadrature() {
        for &(t, s) in &[(0.0, 0.0), (0.21, 0.0), (5.0, 0.0), (0.5, 1.0), (0.5, 0.5)] {
            let d = SpectralDensity::new(0.05, 10.0, 1.0, s, 1.0).unwrap();
            let k = ScalarKernels::new(d, t).unwrap();
            for &x in &[0.0, 0.05, 0.7, 3.0, 25.0] {
                let q = nu_quadrature(&d, t, x).unwrap();
                let scale = nu_quadrature(&d, t, 0.0).unwrap();
                assert!(
                    (k.noise(x) - q).abs() < 1e-10 * scale,
                    "T={t} s={s} x={x}: {} vs {q}",
                    k.noise(x)
                );
            }
        }
    }

    #[test]
    fn generic_memory_path_matches_closed_form() {
        // Dual route: Filon on I(w)/w versus the Gaussian closed form.
        let d = SpectralDensity::ohmic(0.2, 7.0, 1.0).unwrap();
        let closed = ScalarKernels::new(d, 0.3).unwrap();
        let f =
            FilonTransform::new(|w| d.over_frequency(w), 0.0, d.upper_limit(), FILON_TOL).unwrap();
        for &x in &[0.0, 0.1, 0.5, 2.0, 30.0] {
            assert!((closed.memory(x) - f.cosine(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn high_temperature_noise_is_classical() {
        // nu(s) -> 2T Gamma(s) when T dominates every bath frequency
        let d = SpectralDensity::ohmic(0.1, 5.0, 1.0).unwrap();
        let t = 50.0;
        let k = ScalarKernels::new(d, t).unwrap();
        for &x in &[0.0, 0.1, 0.3] {
            let classical = 2.0 * t * k.memory(x);
            assert!(
                (k.noise(x) - classical).abs()
                    < 0.05 * classical.abs().max(1e-3 * 2.0 * t * k.memory(0.0)),
                "x={x}"
            );
        }
    }

    #[test]
    fn noise_at_origin_is_positive_semidefinite() {
        for &g in &[0.01, 0.1] {
            for &t in &[0.0, 0.2, 3.0] {
                for w in [vec![1.0, 1.0], vec![1.0, -0.4], vec![0.3, 2.0]] {
                    let system = SystemSpec::new(vec![1.0, 2.0], vec![0.7, 1.1], w).unwrap();
                    let m = Model::new(
                        system,
                        SpectralDensity::ohmic(g, 10.0, 1.0).unwrap(),
                        BathState::new(t).unwrap(),
                    );
                    let nu0 = noise_kernel(&m, 0.0).unwrap();
                    assert!(nu0.symmetric_eigenvalues().min() > -1e-12);
                }
            }
        }
    }

    #[test]
    fn parity_and_symmetry() {
        let d = SpectralDensity::new(0.1, 4.0, 1.0, 0.5, 1.0).unwrap();
        assert!(
            (nu_quadrature(&d, 0.3, 0.7).unwrap() - nu_quadrature(&d, 0.3, -0.7).unwrap()).abs()
                < 1e-14
        );
        assert!(
            (eta_quadrature(&d, 0.7).unwrap() + eta_quadrature(&d, -0.7).unwrap()).abs() < 1e-14
        );
    }

    #[test]
    fn w_coth_limits() {
        assert_eq!(w_coth(0.0, 0.5), 1.0);
        assert!((w_coth(1e-6, 0.5) - 1.0).abs() < 1e-12);
        assert_eq!(w_coth(2.0, 0.0), 2.0);
        assert!((w_coth(3.0, 0.4) - 3.0 / (3.0_f64 / 0.8).tanh()).abs() < 1e-14);
    }
}
