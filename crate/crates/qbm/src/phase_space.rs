//! Index conventions, symplectic forms, partial transposes and covariance
//! algebra shared by the rest of the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::{Error, Result};

/// Phase-space quadrature of a single oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Position,
    Momentum,
}

/// Interleaved layout `(X_1, P_1, ..., X_N, P_N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSpaceLayout {
    n: usize,
}

impl PhaseSpaceLayout {
    pub fn new(n_oscillators: usize) -> Result<Self> {
        if n_oscillators == 0 {
            return Err(Error::InvalidParameter(
                "layout needs at least one oscillator".into(),
            ));
        }
        Ok(Self { n: n_oscillators })
    }

    pub fn n_oscillators(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Row of `(oscillator, quadrature)`, oscillators counted from 0.
    pub fn index(&self, oscillator: usize, q: Quadrature) -> usize {
        debug_assert!(oscillator < self.n);
        2 * oscillator + usize::from(q == Quadrature::Momentum)
    }

    pub fn locate(&self, index: usize) -> (usize, Quadrature) {
        let q = if index.is_multiple_of(2) {
            Quadrature::Position
        } else {
            Quadrature::Momentum
        };
        (index / 2, q)
    }

    /// Permutation matrix taking block order `(X_1..X_N, P_1..P_N)` to the
    /// interleaved order.
    pub fn block_to_interleaved(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut p = DMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            p[(2 * r, r)] = 1.0;
            p[(2 * r + 1, n + r)] = 1.0;
        }
        p
    }
}

/// Block-diagonal `Omega = diag(J, ..., J)`, `J = [[0, 1], [-1, 0]]`.
pub fn symplectic_form(layout: PhaseSpaceLayout) -> DMatrix<f64> {
    let d = layout.dim();
    let mut om = DMatrix::zeros(d, d);
    for r in 0..layout.n {
        om[(2 * r, 2 * r + 1)] = 1.0;
        om[(2 * r + 1, 2 * r)] = -1.0;
    }
    om
}

/// Momentum inversion on a subset of oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTranspose {
    subset: Vec<usize>,
    signs: DVector<f64>,
}

impl PartialTranspose {
    /// `subset` holds 0-based oscillator indices; it must be a nonempty proper
    /// subset so that it defines a bipartition.
    pub fn new(layout: PhaseSpaceLayout, subset: &[usize]) -> Result<Self> {
        let mut s: Vec<usize> = subset.to_vec();
        s.sort_unstable();
        s.dedup();
        if s.is_empty() || s.len() >= layout.n {
            return Err(Error::InvalidParameter(format!(
                "partial transpose subset {subset:?} does not define a bipartition of {} oscillators",
                layout.n
            )));
        }
        if let Some(&bad) = s.iter().find(|&&r| r >= layout.n) {
            return Err(Error::InvalidParameter(format!(
                "oscillator {bad} out of range"
            )));
        }
        let mut signs = DVector::from_element(layout.dim(), 1.0);
        for &r in &s {
            signs[2 * r + 1] = -1.0;
        }
        Ok(Self { subset: s, signs })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.signs)
    }

    /// `Lambda * m * Lambda`.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            self.signs[i] * m[(i, j)] * self.signs[j]
        })
    }
}

/// `Omega~ = Lambda Omega Lambda` for the given subset (0-based).
pub fn partial_transpose_form(layout: PhaseSpaceLayout, subset: &[usize]) -> Result<DMatrix<f64>> {
    let pt = PartialTranspose::new(layout, subset)?;
    Ok(pt.conjugate(&symplectic_form(layout)))
}

/// Real symmetric covariance of the canonical operators.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    v: DMatrix<f64>,
}

const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || !m.nrows().is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "expected an even square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

impl CovarianceMatrix {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&v)?;
        let v = (&v + v.transpose()) * 0.5;
        Ok(Self { v })
    }

    pub fn layout(&self) -> PhaseSpaceLayout {
        PhaseSpaceLayout {
            n: self.v.nrows() / 2,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.v
    }

    /// Ground state of unit-frequency, unit-mass oscillators: `V = I/2`.
    pub fn vacuum(n: usize) -> Self {
        Self {
            v: DMatrix::identity(2 * n, 2 * n) * 0.5,
        }
    }

    /// Isotropic thermal-like state `V = nu I`.
    pub fn thermal(n: usize, nu: f64) -> Self {
        Self {
            v: DMatrix::identity(2 * n, 2 * n) * nu,
        }
    }

    /// Two-mode squeezed vacuum on oscillators 0 and 1.
    pub fn two_mode_squeezed(r: f64) -> Self {
        let s = two_mode_squeezer(PhaseSpaceLayout { n: 2 }, 0, 1, r);
        Self::pure_from_symplectic(&s)
    }

    /// Product of single-mode squeezed vacua.
    pub fn factorized_squeezed(r1: f64, r2: f64) -> Self {
        let lay = PhaseSpaceLayout { n: 2 };
        let s = single_mode_squeezer(lay, 0, r1) * single_mode_squeezer(lay, 1, r2);
        Self::pure_from_symplectic(&s)
    }

    /// `V = S S^T / 2` for a symplectic `S`.
    pub fn pure_from_symplectic(s: &DMatrix<f64>) -> Self {
        let v = s * s.transpose() * 0.5;
        Self {
            v: (&v + v.transpose()) * 0.5,
        }
    }

    /// Minimum eigenvalue of `V + (i/2) Omega`.
    pub fn uncertainty_margin(&self) -> f64 {
        min_hermitian_eigenvalue(&self.v, &(symplectic_form(self.layout()) * 0.5))
    }

    /// Errors unless `V + (i/2) Omega >= -tol`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let lam = self.uncertainty_margin();
        if lam < -tol {
            return Err(Error::Unphysical { eigenvalue: lam });
        }
        Ok(())
    }

    /// Symplectic eigenvalues in ascending order (N of them).
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_eigenvalues(&self.v)
    }
}

/// Symplectic spectrum of a positive definite matrix, ascending.
pub fn symplectic_eigenvalues(v: &DMatrix<f64>) -> Vec<f64> {
    let n = v.nrows() / 2;
    let om = symplectic_form(PhaseSpaceLayout { n });
    let root = v.clone().symmetric_eigen();
    let sq = DMatrix::from_diagonal(&root.eigenvalues.map(|x| x.max(0.0).sqrt()));
    let half = &root.eigenvectors * sq * root.eigenvectors.transpose();
    // sqrt(V) (i Omega) sqrt(V) is Hermitian with eigenvalues +-nu.
    let im = &half * om * &half;
    let mut ev = hermitian_eigenvalues(&DMatrix::zeros(2 * n, 2 * n), &im);
    ev.retain(|x| *x > 0.0);
    ev.sort_by(f64::total_cmp);
    // Guard against a spurious zero pair dropping out.
    ev.resize(n, 0.0);
    ev
}

/// Eigenvalues (ascending) of the Hermitian matrix `re + i im`.
pub fn hermitian_eigenvalues(re: &DMatrix<f64>, im: &DMatrix<f64>) -> Vec<f64> {
    let h = DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
        // Symmetrize so round-off never leaks an anti-Hermitian part in.
        let a = 0.5 * (re[(i, j)] + re[(j, i)]);
        let b = 0.5 * (im[(i, j)] - im[(j, i)]);
        Complex64::new(a, b)
    });
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_hermitian_eigenvalue(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    hermitian_eigenvalues(re, im)[0]
}

/// Smallest eigenvalue of `V + (i/2) Omega~`.
pub fn min_ppt_eigenvalue(v: &DMatrix<f64>, omega_tilde: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(v)?;
    if omega_tilde.shape() != v.shape() {
        return Err(Error::Dimension(
            "covariance and form differ in size".into(),
        ));
    }
    Ok(min_hermitian_eigenvalue(v, &(omega_tilde * 0.5)))
}

/// Map `(X1, P1, X2, P2) -> (X+, P+, X-, P-)` with `X± = (X1 ± X2)/2`,
/// `P± = P1 ± P2`.
pub fn plus_minus_rotation(layout: PhaseSpaceLayout) -> Result<DMatrix<f64>> {
    if layout.n != 2 {
        return Err(Error::InvalidParameter(
            "the (+,-) rotation needs exactly two oscillators".into(),
        ));
    }
    #[rustfmt::skip]
    let t = DMatrix::from_row_slice(4, 4, &[
        0.5, 0.0,  0.5,  0.0,
        0.0, 1.0,  0.0,  1.0,
        0.5, 0.0, -0.5,  0.0,
        0.0, 1.0,  0.0, -1.0,
    ]);
    Ok(t)
}

/// Phase-space rotation of one oscillator by angle `phi`.
pub fn rotation(layout: PhaseSpaceLayout, r: usize, phi: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(layout.dim(), layout.dim());
    let (c, sn) = (phi.cos(), phi.sin());
    let (x, p) = (2 * r, 2 * r + 1);
    s[(x, x)] = c;
    s[(x, p)] = sn;
    s[(p, x)] = -sn;
    s[(p, p)] = c;
    s
}

/// `X -> e^{-r} X`, `P -> e^{r} P` on oscillator `r_osc`.
pub fn single_mode_squeezer(layout: PhaseSpaceLayout, r_osc: usize, r: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(layout.dim(), layout.dim());
    s[(2 * r_osc, 2 * r_osc)] = (-r).exp();
    s[(2 * r_osc + 1, 2 * r_osc + 1)] = r.exp();
    s
}

/// Passive mixing of oscillators `a` and `b` by angle `theta`.
pub fn beam_splitter(layout: PhaseSpaceLayout, a: usize, b: usize, theta: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(layout.dim(), layout.dim());
    let (c, sn) = (theta.cos(), theta.sin());
    for q in 0..2 {
        let (i, j) = (2 * a + q, 2 * b + q);
        s[(i, i)] = c;
        s[(i, j)] = sn;
        s[(j, i)] = -sn;
        s[(j, j)] = c;
    }
    s
}

pub fn two_mode_squeezer(layout: PhaseSpaceLayout, a: usize, b: usize, r: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(layout.dim(), layout.dim());
    let (ch, sh) = (r.cosh(), r.sinh());
    let (xa, pa, xb, pb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
    s[(xa, xa)] = ch;
    s[(xa, xb)] = sh;
    s[(xb, xb)] = ch;
    s[(xb, xa)] = sh;
    s[(pa, pa)] = ch;
    s[(pa, pb)] = -sh;
    s[(pb, pb)] = ch;
    s[(pb, pa)] = -sh;
    s
}

fn random_local(
    layout: PhaseSpaceLayout,
    r_osc: usize,
    max_squeeze: f64,
    rng: &mut impl Rng,
) -> DMatrix<f64> {
    use std::f64::consts::PI;
    rotation(layout, r_osc, rng.gen_range(0.0..2.0 * PI))
        * single_mode_squeezer(layout, r_osc, rng.gen_range(-max_squeeze..=max_squeeze))
        * rotation(layout, r_osc, rng.gen_range(0.0..2.0 * PI))
}

/// Random pure Gaussian covariance: one- and two-mode squeezers interleaved
/// with rotations and beam splitters, every squeeze parameter bounded by
/// `max_squeeze`.
pub fn random_pure_gaussian(
    layout: PhaseSpaceLayout,
    max_squeeze: f64,
    rng: &mut impl Rng,
) -> CovarianceMatrix {
    use std::f64::consts::PI;
    let n = layout.n;
    let mut s = DMatrix::identity(layout.dim(), layout.dim());
    for r in 0..n {
        s = random_local(layout, r, max_squeeze, rng) * s;
    }
    for a in 0..n {
        for b in (a + 1)..n {
            s = two_mode_squeezer(layout, a, b, rng.gen_range(-max_squeeze..=max_squeeze)) * s;
            s = beam_splitter(layout, a, b, rng.gen_range(0.0..PI)) * s;
        }
    }
    for r in 0..n {
        s = rotation(layout, r, rng.gen_range(0.0..2.0 * PI)) * s;
    }
    CovarianceMatrix::pure_from_symplectic(&s)
}

/// Random product of single-mode pure Gaussians.
pub fn random_factorized_gaussian(
    layout: PhaseSpaceLayout,
    max_squeeze: f64,
    rng: &mut impl Rng,
) -> CovarianceMatrix {
    let mut s = DMatrix::identity(layout.dim(), layout.dim());
    for r in 0..layout.n {
        s = random_local(layout, r, max_squeeze, rng) * s;
    }
    CovarianceMatrix::pure_from_symplectic(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lay(n: usize) -> PhaseSpaceLayout {
        PhaseSpaceLayout::new(n).unwrap()
    }

    fn j() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }

    fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
        let d: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut m = DMatrix::zeros(d, d);
        let mut o = 0;
        for b in blocks {
            m.view_mut((o, o), b.shape()).copy_from(b);
            o += b.nrows();
        }
        m
    }

    // Real 2n x 2n embedding of a Hermitian matrix; each eigenvalue appears twice.
    fn embedded_min_eig(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
        let n = re.nrows();
        let mut big = DMatrix::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(re);
        big.view_mut((n, n), (n, n)).copy_from(re);
        big.view_mut((0, n), (n, n)).copy_from(&(-im));
        big.view_mut((n, 0), (n, n)).copy_from(im);
        big.symmetric_eigenvalues().min()
    }

    #[test]
    fn symplectic_form_blocks() {
        assert_eq!(symplectic_form(lay(1)), j());
        assert_eq!(symplectic_form(lay(2)), block_diag(&[j(), j()]));
        for n in 1..6 {
            let om = symplectic_form(lay(n));
            assert_eq!(&om * om.transpose(), DMatrix::identity(2 * n, 2 * n));
            assert_eq!(&om * &om, -DMatrix::identity(2 * n, 2 * n));
        }
    }

    #[test]
    fn layout_index_is_bijective() {
        let l = lay(4);
        let mut seen = vec![false; l.dim()];
        for r in 0..4 {
            for q in [Quadrature::Position, Quadrature::Momentum] {
                let i = l.index(r, q);
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(l.locate(i), (r, q));
            }
        }
        assert!(PhaseSpaceLayout::new(0).is_err());
    }

    #[test]
    fn partial_transpose_flips_selected_blocks() {
        assert_eq!(
            partial_transpose_form(lay(2), &[1]).unwrap(),
            block_diag(&[j(), -j()])
        );
        assert_eq!(
            partial_transpose_form(lay(3), &[0]).unwrap(),
            block_diag(&[-j(), j(), j()])
        );
        let ot = partial_transpose_form(lay(3), &[0, 2]).unwrap();
        assert_eq!(&ot * &ot, -DMatrix::identity(6, 6));
        assert!(partial_transpose_form(lay(2), &[]).is_err());
        assert!(partial_transpose_form(lay(2), &[0, 1]).is_err());
        let pt = PartialTranspose::new(lay(3), &[1]).unwrap();
        assert_eq!(pt.matrix() * pt.matrix(), DMatrix::identity(6, 6));
    }

    #[test]
    fn ppt_eigenvalue_examples() {
        let ot = partial_transpose_form(lay(2), &[1]).unwrap();
        let vac = CovarianceMatrix::vacuum(2);
        assert!(min_ppt_eigenvalue(vac.matrix(), &ot).unwrap().abs() < 1e-12);
        let th = CovarianceMatrix::thermal(2, 1.3);
        assert!((min_ppt_eigenvalue(th.matrix(), &ot).unwrap() - 0.8).abs() < 1e-12);
        let r = 1.0_f64;
        let tms = CovarianceMatrix::two_mode_squeezed(r);
        let lam = min_ppt_eigenvalue(tms.matrix(), &ot).unwrap();
        assert!(
            (lam - ((-2.0 * r).exp() / 2.0 - 0.5)).abs() < 1e-10,
            "{lam}"
        );
        let bad = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.3, 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1.,
            ],
        );
        assert!(matches!(
            min_ppt_eigenvalue(&bad, &ot),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn complex_solver_matches_real_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let v = random_pure_gaussian(lay(3), 1.2, &mut rng);
            let ot = partial_transpose_form(lay(3), &[1]).unwrap() * 0.5;
            let a = min_hermitian_eigenvalue(v.matrix(), &ot);
            let b = embedded_min_eig(v.matrix(), &ot);
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn plus_minus_examples() {
        let t = plus_minus_rotation(lay(2)).unwrap();
        let y = &t * DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(y.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let y = &t * DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        assert_eq!(y.as_slice(), &[0.0, 0.0, 0.0, 2.0]);
        // canonical: T Omega T^T = Omega
        let om = symplectic_form(lay(2));
        assert_eq!(&t * &om * t.transpose(), om);
        // partial transpose on oscillator 2 swaps P+ and P-
        let lam = PartialTranspose::new(lay(2), &[1]).unwrap().matrix();
        let swapped = &t * &lam * t.try_inverse().unwrap();
        #[rustfmt::skip]
        let expect = DMatrix::from_row_slice(4, 4, &[
            1., 0., 0., 0.,
            0., 0., 0., 1.,
            0., 0., 1., 0.,
            0., 1., 0., 0.,
        ]);
        assert!((swapped - expect).amax() < 1e-15);
        assert!(plus_minus_rotation(lay(3)).is_err());
    }

    #[test]
    fn pure_states_saturate_uncertainty() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..4 {
            for _ in 0..10 {
                let v = random_pure_gaussian(lay(n), 1.5, &mut rng);
                assert!(v.uncertainty_margin().abs() < 1e-9);
                for nu in v.symplectic_eigenvalues() {
                    assert!((nu - 0.5).abs() < 1e-8, "{nu}");
                }
            }
        }
    }

    #[test]
    fn physicality_check_names_eigenvalue() {
        let v = CovarianceMatrix::thermal(2, 0.3);
        match v.check_physical(1e-10) {
            Err(Error::Unphysical { eigenvalue }) => assert!((eigenvalue + 0.2).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn partial_transpose_spectrum_matches(n in 2usize..5, pick in 0usize..4) {
            let l = lay(n);
            let ot = partial_transpose_form(l, &[pick % (n - 1)]).unwrap();
            prop_assert_eq!(ot.transpose(), -&ot);
            let ev = hermitian_eigenvalues(&DMatrix::zeros(2 * n, 2 * n), &ot);
            let ev0 = hermitian_eigenvalues(&DMatrix::zeros(2 * n, 2 * n), &symplectic_form(l));
            for (a, b) in ev.iter().zip(&ev0) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn ppt_eigenvalue_invariant_under_local_symplectic_orthogonal(seed in 0u64..1000, phi1 in 0.0f64..6.3, phi2 in 0.0f64..6.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = lay(2);
            let v = random_pure_gaussian(l, 1.0, &mut rng);
            let ot = partial_transpose_form(l, &[1]).unwrap();
            // local rotations are orthogonal and symplectic, and commute with Lambda up to angle sign
            let o = rotation(l, 0, phi1) * rotation(l, 1, phi2);
            let o_t = PartialTranspose::new(l, &[1]).unwrap().conjugate(&o);
            let a = min_ppt_eigenvalue(v.matrix(), &ot).unwrap();
            let vv = &o * v.matrix() * o.transpose();
            let ott = &o * &ot * o.transpose();
            let b = min_ppt_eigenvalue(&vv, &ott).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!((&o_t * &ot * o_t.transpose() - &ot).amax() < 1e-12);
        }

        #[test]
        fn random_symplectics_preserve_form(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = lay(3);
            let v = random_pure_gaussian(l, 1.5, &mut rng);
            prop_assert!(v.uncertainty_margin() > -1e-9);
            let f = random_factorized_gaussian(l, 1.5, &mut rng);
            let ot = partial_transpose_form(l, &[2]).unwrap();
            prop_assert!(min_ppt_eigenvalue(f.matrix(), &ot).unwrap() > -1e-9);
        }
    }
}
