//! Uncertainty bounds and entanglement witnesses built from `(R, S)`.
//!
//! Every Gaussian state evolved by the propagator satisfies
//! `V_t >= -(i/2) R Omega R^T + S`. Adding `(i/2) Omega~` for a bipartition
//! gives a lower bound on the partial-transpose eigenvalue of any evolved
//! state, which is what the witness curves track.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::phase_space::{
    hermitian_eigenvalues, partial_transpose_form, plus_minus_rotation, symplectic_form,
    CovarianceMatrix, PhaseSpaceLayout,
};
use crate::propagator::PropagatorPair;
use crate::{Error, Result};

/// Which inequality a [`BoundMatrix`] expresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `-(i/2) R Omega R^T + S`, valid for every state.
    State,
    /// `-(i/2) R Omega~ R^T + S`, valid for factorized initial states.
    Factorized,
    /// `-(i/2)(R Omega~ R^T - Omega~) + S`; a negative eigenvalue means some
    /// factorized states become entangled.
    FactorizabilityNecessary,
    /// `-(i/2) R Omega R^T + S + (i/2) Omega~_party` for three oscillators.
    TripartiteSufficiency { party: usize },
    /// `-(i/2)(R Omega~_party R^T - Omega~_party) + S` for three oscillators.
    TripartiteNecessary { party: usize },
}

/// Hermitian matrix `re + i im` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundMatrix {
    pub t: f64,
    pub kind: BoundKind,
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl BoundMatrix {
    fn new(t: f64, kind: BoundKind, re: DMatrix<f64>, im: DMatrix<f64>) -> Self {
        Self { t, kind, re, im }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.re, &self.im)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Largest deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.re - self.re.transpose())
            .amax()
            .max((&self.im + self.im.transpose()).amax())
    }
}

fn conjugated(pp: &PropagatorPair, form: &DMatrix<f64>) -> DMatrix<f64> {
    &pp.r * form * pp.r.transpose()
}

fn check_form(pp: &PropagatorPair, form: &DMatrix<f64>) -> Result<()> {
    if form.shape() != pp.r.shape() {
        return Err(Error::Dimension(format!(
            "form is {:?}, propagator is {:?}",
            form.shape(),
            pp.r.shape()
        )));
    }
    Ok(())
}

/// `-(i/2) R form R^T + S`. Passing `Omega` gives the bound for every state,
/// passing a partial-transpose form gives the bound for factorized states.
pub fn state_bound(pp: &PropagatorPair, form: &DMatrix<f64>) -> Result<BoundMatrix> {
    check_form(pp, form)?;
    let layout = PhaseSpaceLayout::new(pp.r.nrows() / 2)?;
    let kind = if form == &symplectic_form(layout) {
        BoundKind::State
    } else {
        BoundKind::Factorized
    };
    Ok(BoundMatrix::new(
        pp.t,
        kind,
        pp.s.clone(),
        conjugated(pp, form) * -0.5,
    ))
}

fn omega_of(pp: &PropagatorPair) -> Result<DMatrix<f64>> {
    Ok(symplectic_form(PhaseSpaceLayout::new(pp.r.nrows() / 2)?))
}

/// `-(i/2)(R Omega R^T - Omega~) + S`, bounding the partial-transpose
/// eigenvalue of every evolved state from below.
pub fn entanglement_bound(pp: &PropagatorPair, omega_tilde: &DMatrix<f64>) -> Result<BoundMatrix> {
    check_form(pp, omega_tilde)?;
    let im = (conjugated(pp, &omega_of(pp)?) - omega_tilde) * -0.5;
    Ok(BoundMatrix::new(pp.t, BoundKind::State, pp.s.clone(), im))
}

/// `-(i/2)(R Omega~ R^T - Omega~) + S`.
pub fn factorizability_bound(
    pp: &PropagatorPair,
    omega_tilde: &DMatrix<f64>,
) -> Result<BoundMatrix> {
    check_form(pp, omega_tilde)?;
    let im = (conjugated(pp, omega_tilde) - omega_tilde) * -0.5;
    Ok(BoundMatrix::new(
        pp.t,
        BoundKind::FactorizabilityNecessary,
        pp.s.clone(),
        im,
    ))
}

/// Smallest eigenvalue of [`entanglement_bound`]; negative values mean
/// entangled states exist at `pp.t`.
pub fn lambda_bound(pp: &PropagatorPair, omega_tilde: &DMatrix<f64>) -> Result<f64> {
    Ok(entanglement_bound(pp, omega_tilde)?.min_eigenvalue())
}

/// Smallest eigenvalue of [`factorizability_bound`]; non-positive values
/// mean some factorized states can become entangled.
pub fn lambda_tilde_bound(pp: &PropagatorPair, omega_tilde: &DMatrix<f64>) -> Result<f64> {
    Ok(factorizability_bound(pp, omega_tilde)?.min_eigenvalue())
}

/// Areas `(dX_a)^2 (dP_b)^2 - V_{X_a P_b}^2` for the four `(+,-)` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaSet {
    pub plus_plus: f64,
    pub minus_minus: f64,
    pub plus_minus: f64,
    pub minus_plus: f64,
}

impl AreaSet {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.plus_plus,
            self.minus_minus,
            self.plus_minus,
            self.minus_plus,
        ]
    }
}

fn to_plus_minus(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != 4 {
        return Err(Error::InvalidParameter(
            "area functions need exactly two oscillators".into(),
        ));
    }
    let t = plus_minus_rotation(PhaseSpaceLayout::new(2)?)?;
    Ok(&t * m * t.transpose())
}

// (X+, P+, X-, P-) = 0, 1, 2, 3
fn areas(c: &DMatrix<f64>) -> AreaSet {
    let a = |x: usize, p: usize| c[(x, x)] * c[(p, p)] - c[(x, p)].powi(2);
    AreaSet {
        plus_plus: a(0, 1),
        minus_minus: a(2, 3),
        plus_minus: a(0, 3),
        minus_plus: a(2, 1),
    }
}

/// Area functions of a two-oscillator state. A factorized state has
/// `plus_minus >= 1/4` and `minus_plus >= 1/4`.
pub fn area_functions(v: &CovarianceMatrix) -> Result<AreaSet> {
    Ok(areas(&to_plus_minus(v.matrix())?))
}

/// Weak-coupling lower bounds on the area functions: `e^{-gamma t}/4` plus
/// the matching determinant of `S` for the diagonal pairs, the bare `S`
/// determinant for the mixed pairs.
pub fn area_lower_bounds(pp: &PropagatorPair, gamma: f64) -> Result<AreaSet> {
    let s = areas(&to_plus_minus(&pp.s)?);
    let shrink = 0.25 * (-gamma * pp.t).exp();
    Ok(AreaSet {
        plus_plus: shrink + s.plus_plus,
        minus_minus: shrink + s.minus_minus,
        ..s
    })
}

/// Both tripartite matrices for the partial transpose of one party.
#[derive(Debug, Clone, PartialEq)]
pub struct TripartiteBounds {
    pub party: usize,
    pub sufficiency: BoundMatrix,
    pub necessary: BoundMatrix,
}

/// Tripartite matrices for three oscillators; `party` is 0-based.
pub fn tripartite_bounds(pp: &PropagatorPair, party: usize) -> Result<TripartiteBounds> {
    if pp.r.nrows() != 6 {
        return Err(Error::InvalidParameter(
            "tripartite bounds need exactly three oscillators".into(),
        ));
    }
    let layout = PhaseSpaceLayout::new(3)?;
    let ot = partial_transpose_form(layout, &[party])?;
    let omega = symplectic_form(layout);
    let sufficiency = BoundMatrix::new(
        pp.t,
        BoundKind::TripartiteSufficiency { party },
        pp.s.clone(),
        (conjugated(pp, &omega) - &ot) * -0.5,
    );
    let necessary = BoundMatrix::new(
        pp.t,
        BoundKind::TripartiteNecessary { party },
        pp.s.clone(),
        (conjugated(pp, &ot) - &ot) * -0.5,
    );
    Ok(TripartiteBounds {
        party,
        sufficiency,
        necessary,
    })
}

/// Per-party minimal eigenvalues of the tripartite matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripartiteReport {
    pub t: f64,
    pub sufficiency: [f64; 3],
    pub necessary: [f64; 3],
}

impl TripartiteReport {
    /// Every party's sufficiency eigenvalue is negative.
    pub fn all_parties_negative(&self) -> bool {
        self.sufficiency.iter().all(|&x| x < 0.0)
    }

    pub fn any_party_negative(&self) -> bool {
        self.sufficiency.iter().any(|&x| x < 0.0)
    }
}

pub fn tripartite_report(pp: &PropagatorPair) -> Result<TripartiteReport> {
    let mut sufficiency = [0.0; 3];
    let mut necessary = [0.0; 3];
    for party in 0..3 {
        let b = tripartite_bounds(pp, party)?;
        sufficiency[party] = b.sufficiency.min_eigenvalue();
        necessary[party] = b.necessary.min_eigenvalue();
    }
    Ok(TripartiteReport {
        t: pp.t,
        sufficiency,
        necessary,
    })
}

/// A scalar quantity sampled on increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessCurve {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl WitnessCurve {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} times, {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "witness times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            label: label.into(),
            times,
            values,
        })
    }

    /// Evaluate `f` on every pair in parallel.
    pub fn from_pairs(
        label: impl Into<String>,
        pairs: &[PropagatorPair],
        f: impl Fn(&PropagatorPair) -> Result<f64> + Sync + Send,
    ) -> Result<Self> {
        let values = pairs.par_iter().map(&f).collect::<Result<Vec<f64>>>()?;
        Self::new(label, pairs.iter().map(|p| p.t).collect(), values)
    }

    /// Number of strict sign changes between consecutive samples.
    pub fn sign_changes(&self) -> usize {
        let signs: Vec<bool> = self
            .values
            .iter()
            .filter(|v| **v != 0.0)
            .map(|v| *v > 0.0)
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Result of searching a witness curve for its final zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disentanglement {
    /// Time of the last crossing from negative to non-negative values.
    Crossing(f64),
    /// The curve keeps one sign after its last crossing; `negative` tells
    /// whether it ends below zero (no final crossing within the grid).
    NoCrossing { negative: bool },
}

impl Disentanglement {
    pub fn time(&self) -> Option<f64> {
        match self {
            Self::Crossing(t) => Some(*t),
            Self::NoCrossing { .. } => None,
        }
    }
}

// Cubic through four samples (Newton form), evaluated at x.
fn cubic(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut c = ys.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            c[i] = (c[i] - c[i - 1]) / (xs[i] - xs[i - j]);
        }
    }
    let mut acc = c[n - 1];
    for i in (0..n - 1).rev() {
        acc = acc * (x - xs[i]) + c[i];
    }
    acc
}

/// Last zero of `curve` crossed from below, refined by bisection on the
/// local cubic interpolant to `tol`.
pub fn disentanglement_time(curve: &WitnessCurve, tol: f64) -> Disentanglement {
    let v = &curve.values;
    let n = v.len();
    if n == 0 {
        return Disentanglement::NoCrossing { negative: false };
    }
    if v[n - 1] < 0.0 {
        return Disentanglement::NoCrossing { negative: true };
    }
    let Some(i) = (0..n.saturating_sub(1))
        .rev()
        .find(|&i| v[i] < 0.0 && v[i + 1] >= 0.0)
    else {
        return Disentanglement::NoCrossing { negative: false };
    };
    let lo = i.saturating_sub(1).min(n.saturating_sub(4));
    let hi = (lo + 4).min(n);
    let (xs, ys) = (&curve.times[lo..hi], &v[lo..hi]);
    let (mut a, mut b) = (curve.times[i], curve.times[i + 1]);
    let f = |x: f64| if xs.len() >= 2 { cubic(xs, ys, x) } else { 0.0 };
    let mut fa = f(a);
    // The cubic interpolates the samples, so fa < 0 <= f(b).
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Disentanglement::Crossing(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{min_ppt_eigenvalue, CovarianceMatrix};

    fn ot2() -> DMatrix<f64> {
        partial_transpose_form(PhaseSpaceLayout::new(2).unwrap(), &[1]).unwrap()
    }

    #[test]
    fn initial_bounds() {
        let pp = PropagatorPair::identity(2);
        let omega = symplectic_form(PhaseSpaceLayout::new(2).unwrap());
        let b = state_bound(&pp, &omega).unwrap();
        assert_eq!(b.kind, BoundKind::State);
        assert_eq!(b.im, &omega * -0.5);
        // eigenvalues of -(i/2)Omega are +-1/2
        assert!((b.min_eigenvalue() + 0.5).abs() < 1e-14);
        // Omega - Omega~ is 2J on the transposed block and -iJ has
        // eigenvalues +-1
        assert!((lambda_bound(&pp, &ot2()).unwrap() + 1.0).abs() < 1e-14);
        assert!(lambda_tilde_bound(&pp, &ot2()).unwrap().abs() < 1e-14);
        assert_eq!(
            state_bound(&pp, &ot2()).unwrap().kind,
            BoundKind::Factorized
        );
    }

    #[test]
    fn vacuum_areas_are_quarter() {
        let a = area_functions(&CovarianceMatrix::vacuum(2)).unwrap();
        for x in a.as_array() {
            assert!((x - 0.25).abs() < 1e-15);
        }
        assert!(area_functions(&CovarianceMatrix::vacuum(3)).is_err());
    }

    #[test]
    fn coherent_product_has_equal_mixed_areas() {
        let v = CovarianceMatrix::factorized_squeezed(0.3, 0.3);
        let a = area_functions(&v).unwrap();
        assert!((a.plus_minus - a.minus_plus).abs() < 1e-14);
        assert!(a.plus_minus >= 0.25 - 1e-14);
    }

    #[test]
    fn squeezed_state_violates_mixed_area() {
        let v = CovarianceMatrix::two_mode_squeezed(1.2);
        let a = area_functions(&v).unwrap();
        let violated = a.plus_minus.min(a.minus_plus);
        assert!(violated < 0.25);
        // the matrix criterion agrees
        assert!(min_ppt_eigenvalue(v.matrix(), &ot2()).unwrap() < 0.0);
    }

    #[test]
    fn area_bounds_at_start() {
        let a = area_lower_bounds(&PropagatorPair::identity(2), 0.1).unwrap();
        assert_eq!(a.as_array(), [0.25, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn tripartite_shapes() {
        let pp = PropagatorPair::identity(3);
        for party in 0..3 {
            let b = tripartite_bounds(&pp, party).unwrap();
            assert!(b.necessary.im.amax() < 1e-15);
            assert!(b.sufficiency.hermiticity_error() < 1e-15);
        }
        assert!(tripartite_bounds(&PropagatorPair::identity(2), 0).is_err());
        let r = tripartite_report(&pp).unwrap();
        assert!(r.all_parties_negative());
    }

    #[test]
    fn crossing_search() {
        let times: Vec<f64> = (0..200).map(|k| 0.05 * k as f64).collect();
        let values: Vec<f64> = times
            .iter()
            .map(|t| (t - 7.3) * (1.0 + 0.1 * t) * (t - 2.0).signum())
            .collect();
        let c = WitnessCurve::new("x", times.clone(), values).unwrap();
        let t = disentanglement_time(&c, 1e-8).time().unwrap();
        assert!((t - 7.3).abs() < 1e-8, "{t}");
        assert_eq!(c.sign_changes(), 2);

        let neg = WitnessCurve::new("x", times.clone(), times.iter().map(|t| -1.0 - t).collect())
            .unwrap();
        assert_eq!(
            disentanglement_time(&neg, 1e-6),
            Disentanglement::NoCrossing { negative: true }
        );
        let pos =
            WitnessCurve::new("x", times.clone(), times.iter().map(|t| 1.0 + t).collect()).unwrap();
        assert_eq!(
            disentanglement_time(&pos, 1e-6),
            Disentanglement::NoCrossing { negative: false }
        );
        assert!(WitnessCurve::new("x", vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn cubic_interpolation_is_exact_for_cubics() {
        let xs = [0.0, 0.4, 1.1, 2.0];
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        assert!((cubic(&xs, &ys, 1.7) - f(1.7)).abs() < 1e-13);
    }
}
