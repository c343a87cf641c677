//! Closed forms for two equal-mass oscillators coupled symmetrically to an
//! ohmic bath: leading-order homogeneous solutions in the `(+,-)` basis,
//! stationary diffusion integrals, the weak-damping thermal limit and the
//! high-temperature short-time expansions.

use nalgebra::{DMatrix, Matrix2};

use crate::model::{w_coth, CaseParams};
use crate::phase_space::{plus_minus_rotation, PhaseSpaceLayout};
use crate::propagator::PropagatorPair;
use crate::quadrature::{integrate, Tolerance};
use crate::{Error, Result};

/// `e^{-kappa s} (a sin(w s) + b cos(w s))` summed over two frequencies.
#[derive(Debug, Clone, Copy)]
struct DampedPair {
    kappa: f64,
    terms: [(f64, f64, f64); 2],
}

impl DampedPair {
    fn eval(&self, s: f64, order: u32) -> f64 {
        let env = (-self.kappa * s).exp();
        let mut total = 0.0;
        for &(w, a0, b0) in &self.terms {
            let (mut a, mut b) = (a0, b0);
            for _ in 0..order {
                // d/ds e^{-k s}(a sin + b cos) = e^{-k s}((-k a - w b) sin + (w a - k b) cos)
                let na = -self.kappa * a - w * b;
                let nb = w * a - self.kappa * b;
                a = na;
                b = nb;
            }
            let (sn, cs) = (w * s).sin_cos();
            total += a * sn + b * cs;
        }
        env * total
    }
}

/// Which reading of the printed leading-order solutions to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormReading {
    /// The printed expressions, with the lower-case `omega_2` in the `(-,-)`
    /// entry read as `Omega_2`.
    Verbatim,
    /// The `(-,-)` entry with the `8 gamma Omega_1` terms removed and the
    /// cosine term's sign flipped; this is the form that satisfies the
    /// equation of motion to first order in `gamma`.
    Corrected,
}

/// Leading-order homogeneous solution in the `(+,-)` basis. Normalized with
/// `v(0) = 0` and `v'(0) = I`, so that `R` holds `v'` in the position block.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticV {
    pub omega1: f64,
    pub omega2: f64,
    pub gamma: f64,
    pp: DampedPair,
    pm: DampedPair,
    mm: DampedPair,
}

/// Detuning below which the closed forms are refused.
pub const MIN_DETUNING: f64 = 1e-3;

impl AnalyticV {
    pub fn new(omega1: f64, omega2: f64, gamma: f64, reading: ClosedFormReading) -> Result<Self> {
        if !(omega1 > 0.0 && omega2 > 0.0 && gamma >= 0.0) {
            return Err(Error::InvalidParameter(
                "frequencies must be positive and gamma >= 0".into(),
            ));
        }
        let delta = (omega1 * omega1 - omega2 * omega2) / (omega1 * omega1 + omega2 * omega2);
        if delta.abs() < MIN_DETUNING {
            return Err(Error::InvalidParameter(format!(
                "detuning {delta:.2e} is below {MIN_DETUNING:.0e}; use the numeric solver near resonance"
            )));
        }
        if gamma > 0.1 * omega1.min(omega2) {
            return Err(Error::InvalidParameter(format!(
                "gamma {gamma} exceeds 0.1 of the smallest frequency; the leading-order forms do not apply"
            )));
        }
        let (w1, w2, g) = (omega1, omega2, gamma);
        let den = 4.0 * w1 * w2 * (w2 * w2 - w1 * w1);
        let k = 0.5 * g;
        let cross = 4.0 * g * w1 * w2 / den;
        let pp = DampedPair {
            kappa: k,
            terms: [
                (
                    w1,
                    w2 * (g * g - 2.0 * w1 * w1 + 2.0 * w2 * w2) / den,
                    -cross,
                ),
                (
                    w2,
                    -w1 * (g * g + 2.0 * w1 * w1 - 2.0 * w2 * w2) / den,
                    cross,
                ),
            ],
        };
        let pm = DampedPair {
            kappa: k,
            terms: [(w1, 0.5 / w1, 0.0), (w2, -0.5 / w2, 0.0)],
        };
        let mm = match reading {
            ClosedFormReading::Verbatim => DampedPair {
                kappa: k,
                terms: [
                    (
                        w1,
                        w2 * (g * g - 8.0 * g * w1 - 2.0 * w1 * w1 + 2.0 * w2 * w2) / den,
                        -cross,
                    ),
                    (
                        w2,
                        -w1 * (g * g - 8.0 * g * w1 + 2.0 * w1 * w1 - 2.0 * w2 * w2) / den,
                        cross,
                    ),
                ],
            },
            ClosedFormReading::Corrected => DampedPair {
                kappa: k,
                terms: [
                    (
                        w1,
                        w2 * (g * g - 2.0 * w1 * w1 + 2.0 * w2 * w2) / den,
                        cross,
                    ),
                    (
                        w2,
                        -w1 * (g * g + 2.0 * w1 * w1 - 2.0 * w2 * w2) / den,
                        -cross,
                    ),
                ],
            },
        };
        Ok(Self {
            omega1,
            omega2,
            gamma,
            pp,
            pm,
            mm,
        })
    }

    pub fn from_params(params: CaseParams, gamma: f64, reading: ClosedFormReading) -> Result<Self> {
        let (w1, w2) = params.frequencies(1.0);
        Self::new(w1, w2, gamma, reading)
    }

    /// `d^order v / ds^order` in the `(+,-)` basis.
    pub fn eval_derivative(&self, s: f64, order: u32) -> Matrix2<f64> {
        let pm = self.pm.eval(s, order);
        Matrix2::new(self.pp.eval(s, order), pm, pm, self.mm.eval(s, order))
    }

    pub fn eval(&self, s: f64) -> Matrix2<f64> {
        self.eval_derivative(s, 0)
    }

    /// Same quantity in the oscillator basis: `v = T^{-1} v_pm T` with
    /// `T = [[1, 1], [1, -1]] / 2`.
    pub fn oscillator_basis(&self, s: f64, order: u32) -> Matrix2<f64> {
        let t = Matrix2::new(0.5, 0.5, 0.5, -0.5);
        let t_inv = Matrix2::new(1.0, 1.0, 1.0, -1.0);
        t_inv * self.eval_derivative(s, order) * t
    }
}

/// Stationary diagonal of `S` in `(X+, P+, X-, P-)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticS {
    pub xx_plus: f64,
    pub pp_plus: f64,
    pub xx_minus: f64,
    pub pp_minus: f64,
}

impl AsymptoticS {
    pub fn as_array(&self) -> [f64; 4] {
        [self.xx_plus, self.pp_plus, self.xx_minus, self.pp_minus]
    }
}

/// Inputs of the stationary integrals.
#[derive(Debug, Clone, Copy)]
pub struct CaseBath {
    pub omega1: f64,
    pub omega2: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub cutoff: f64,
    pub mass: f64,
}

impl CaseBath {
    pub fn from_params(params: CaseParams, gamma: f64, cutoff: f64, mass: f64) -> Self {
        let (omega1, omega2) = params.frequencies(1.0);
        Self {
            omega1,
            omega2,
            gamma,
            temperature: params.temperature(1.0),
            cutoff,
            mass,
        }
    }
}

/// The double-Lorentzian weight of the stationary integrals.
fn stationary_weight(b: &CaseBath, w: f64) -> f64 {
    let g2 = b.gamma * b.gamma;
    let l1 = 2.0 * (w * w - b.omega1 * b.omega1).powi(2) + g2 * (w * w + b.omega1 * b.omega1);
    let l2 = 2.0 * (w * w - b.omega2 * b.omega2).powi(2) + g2 * (w * w + b.omega2 * b.omega2);
    // coth(w/2T) with the Gaussian cutoff; w_coth/w keeps T = 0 finite
    (-(w / b.cutoff).powi(2)).exp() * (w_coth(w, b.temperature) / w) / (l1 * l2)
}

/// Stationary diffusion integrals, with panels refined around both
/// resonances where the integrand has peaks of width ~gamma.
pub fn asymptotic_s(b: &CaseBath) -> Result<AsymptoticS> {
    if !(b.gamma > 0.0) {
        return Err(Error::InvalidParameter(
            "stationary integrals need gamma > 0".into(),
        ));
    }
    let upper = 8.0 * b.cutoff;
    let mut breaks = vec![0.0, upper];
    for &w in &[b.omega1, b.omega2] {
        for &k in &[-100.0, -10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0, 100.0] {
            let x = w + k * b.gamma;
            if x > 0.0 && x < upper {
                breaks.push(x);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-11,
        max_intervals: 20_000,
    };
    let (w1s, w2s) = (b.omega1 * b.omega1, b.omega2 * b.omega2);
    let plus = |w: f64| (-2.0 * w * w + w1s + w2s).powi(2);
    let i1p = integrate(|w| w * stationary_weight(b, w) * plus(w), &breaks, tol)?;
    let i3p = integrate(
        |w| w.powi(3) * stationary_weight(b, w) * plus(w),
        &breaks,
        tol,
    )?;
    let i1 = integrate(|w| w * stationary_weight(b, w), &breaks, tol)?;
    let i3 = integrate(|w| w.powi(3) * stationary_weight(b, w), &breaks, tol)?;
    let d4 = (w1s - w2s).powi(2);
    let pi = std::f64::consts::PI;
    let xfac = b.gamma / (b.mass * pi);
    let pfac = 4.0 * b.mass * b.gamma / pi;
    Ok(AsymptoticS {
        xx_plus: xfac * i1p,
        pp_plus: pfac * i3p,
        xx_minus: xfac * d4 * i1,
        pp_minus: pfac * d4 * i3,
    })
}

/// Weak-damping limit: the thermal state of the uncoupled pair.
pub fn weak_damping_limit(omega1: f64, omega2: f64, temperature: f64, mass: f64) -> AsymptoticS {
    let c1 = w_coth(omega1, temperature) / omega1;
    let c2 = w_coth(omega2, temperature) / omega2;
    let x = (c1 / omega1 + c2 / omega2) / (8.0 * mass);
    let p = 0.5 * mass * (omega1 * c1 + omega2 * c2);
    AsymptoticS {
        xx_plus: x,
        pp_plus: p,
        xx_minus: x,
        pp_minus: p,
    }
}

/// Leading high-temperature, short-time lower bounds for the four area
/// functions, in the order `(X+P+, X-P-, X+P-, X-P+)`.
pub fn fokker_planck_bounds(
    gamma: f64,
    temperature: f64,
    detuning_squared: f64,
    t: f64,
) -> [f64; 4] {
    let g2t2 = (gamma * temperature).powi(2);
    let d2 = detuning_squared;
    [
        0.25 * (1.0 - gamma * t + g2t2 * t.powi(4)),
        0.25 * (1.0 - gamma * t + g2t2 * d2.powi(4) * t.powi(12) / (256.0 * 81.0 * 35.0)),
        11.0 * g2t2 * d2 * d2 * t.powi(8) / 256.0,
        g2t2 * d2 * d2 * t.powi(8) / 256.0,
    ]
}

/// `S` rotated to `(X+, P+, X-, P-)`.
pub fn plus_minus_diffusion(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = plus_minus_rotation(PhaseSpaceLayout::new(2)?)?;
    Ok(&t * s * t.transpose())
}

/// Outcome of the power-law checks on the numeric short-time bounds.
#[derive(Debug, Clone)]
pub struct FokkerPlanckReport {
    pub window: (f64, f64),
    pub points: usize,
    /// Free log-log slope of `S_{X+X+} S_{P-P-} - S_{X+P-}^2`.
    pub slope_mixed: f64,
    /// Its `t^8` coefficient divided by `11 gamma^2 T^2 Delta^4 / 256`.
    pub coefficient_ratio: f64,
    /// Geometric mean over the window of the `(X+P-)` / `(X-P+)` bound ratio.
    pub mixed_pair_ratio: f64,
    /// Free log-log slope of the `(X-P-)` correction term.
    pub slope_minus_correction: f64,
    pub inconclusive: bool,
}

fn log_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let lx: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fit the short-time growth of the numeric mixed-pair bound over
/// `window = (t_lo, t_hi)`.
pub fn validate_fp_regime(
    pairs: &[PropagatorPair],
    gamma: f64,
    temperature: f64,
    detuning_squared: f64,
    window: (f64, f64),
) -> Result<FokkerPlanckReport> {
    let mut ts = Vec::new();
    let mut mixed = Vec::new();
    let mut other = Vec::new();
    let mut corr = Vec::new();
    for p in pairs.iter().filter(|p| p.t >= window.0 && p.t <= window.1) {
        let s = plus_minus_diffusion(&p.s)?;
        // (X+, P+, X-, P-) = indices 0, 1, 2, 3
        let a_pm = s[(0, 0)] * s[(3, 3)] - s[(0, 3)].powi(2);
        let a_mp = s[(2, 2)] * s[(1, 1)] - s[(2, 1)].powi(2);
        let a_mm = s[(2, 2)] * s[(3, 3)] - s[(2, 3)].powi(2);
        if a_pm > 0.0 && a_mp > 0.0 && a_mm > 0.0 {
            ts.push(p.t);
            mixed.push(a_pm);
            other.push(a_mp);
            corr.push(a_mm);
        }
    }
    let points = ts.len();
    let span = if points > 1 {
        ts[points - 1] / ts[0]
    } else {
        1.0
    };
    let inconclusive = points < 8 || span < 2.0;
    if points < 2 {
        return Ok(FokkerPlanckReport {
            window,
            points,
            slope_mixed: f64::NAN,
            coefficient_ratio: f64::NAN,
            mixed_pair_ratio: f64::NAN,
            slope_minus_correction: f64::NAN,
            inconclusive: true,
        });
    }
    let (slope_mixed, _) = log_fit(&ts, &mixed);
    let (slope_minus_correction, _) = log_fit(&ts, &corr);
    let reference = 11.0 * (gamma * temperature).powi(2) * detuning_squared.powi(2) / 256.0;
    let log_coef = ts
        .iter()
        .zip(&mixed)
        .map(|(t, y)| y.ln() - 8.0 * t.ln())
        .sum::<f64>()
        / points as f64;
    let mixed_pair_ratio = (mixed
        .iter()
        .zip(&other)
        .map(|(a, b)| (a / b).ln())
        .sum::<f64>()
        / points as f64)
        .exp();
    Ok(FokkerPlanckReport {
        window,
        points,
        slope_mixed,
        coefficient_ratio: log_coef.exp() / reference,
        mixed_pair_ratio,
        slope_minus_correction,
        inconclusive,
    })
}
