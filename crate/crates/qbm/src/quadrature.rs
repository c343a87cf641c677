//! Adaptive Gauss-Kronrod integration, Gauss-Legendre rules and a Filon
//! evaluator for Fourier integrals of smooth profiles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
// 7-point Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-10,
            max_intervals: 4000,
        }
    }
}

struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    err: f64,
}

impl<const K: usize> PartialEq for Segment<K> {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl<const K: usize> Eq for Segment<K> {}
impl<const K: usize> PartialOrd for Segment<K> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<const K: usize> Ord for Segment<K> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn kronrod<const K: usize>(f: &mut impl FnMut(f64) -> [f64; K], a: f64, b: f64) -> Segment<K> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; K];
    let mut g = [0.0; K];
    let mut absint = [0.0; K];
    for (i, (&x, &w)) in XGK.iter().zip(&WGK).enumerate() {
        let pts: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &sgn in pts {
            let fx = f(c + sgn * h * x);
            for q in 0..K {
                k[q] += w * fx[q];
                absint[q] += w * fx[q].abs();
                if i % 2 == 1 {
                    g[q] += WG[i / 2] * fx[q];
                }
            }
        }
    }
    let mut err: f64 = 0.0;
    let mut value = [0.0; K];
    for q in 0..K {
        value[q] = k[q] * h;
        let e = ((k[q] - g[q]) * h)
            .abs()
            .max(50.0 * f64::EPSILON * absint[q] * h.abs());
        err = err.max(e);
    }
    Segment { a, b, value, err }
}

/// Adaptive 15-point Gauss-Kronrod integration of a vector-valued function
/// over the union of `[breaks[i], breaks[i+1]]`. Convergence is judged on the
/// largest component.
pub fn integrate_vec<const K: usize>(
    mut f: impl FnMut(f64) -> [f64; K],
    breaks: &[f64],
    tol: Tolerance,
) -> Result<[f64; K]> {
    assert!(breaks.len() >= 2, "need at least one interval");
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(&mut f, w[0], w[1]));
        }
    }
    let total = |h: &BinaryHeap<Segment<K>>| {
        let mut v = [0.0; K];
        let mut e = 0.0;
        for s in h.iter() {
            for q in 0..K {
                v[q] += s.value[q];
            }
            e += s.err;
        }
        (v, e)
    };
    loop {
        let (v, e) = total(&heap);
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if e <= tol.abs.max(tol.rel * scale) {
            return Ok(v);
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature(format!(
                "error estimate {e:.3e} above target after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("nonempty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            return Err(Error::Quadrature(format!("interval collapsed near {m}")));
        }
        heap.push(kronrod(&mut f, worst.a, m));
        heap.push(kronrod(&mut f, m, worst.b));
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate(mut f: impl FnMut(f64) -> f64, breaks: &[f64], tol: Tolerance) -> Result<f64> {
    integrate_vec(|x| [f(x)], breaks, tol).map(|v| v[0])
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const FILON_DEG: usize = 7;
const FILON_NODES: usize = FILON_DEG + 1;

struct FilonBasis {
    nodes: [f64; FILON_NODES],
    // Inverse Vandermonde: monomial coefficients = inv * samples.
    inv: [[f64; FILON_NODES]; FILON_NODES],
    probes: [f64; FILON_NODES - 1],
}

fn filon_basis() -> &'static FilonBasis {
    static B: OnceLock<FilonBasis> = OnceLock::new();
    B.get_or_init(|| {
        let mut nodes = [0.0; FILON_NODES];
        for (k, n) in nodes.iter_mut().enumerate() {
            // Chebyshev points of the second kind include the endpoints, so
            // neighbouring panels agree where they meet.
            *n = -(std::f64::consts::PI * k as f64 / FILON_DEG as f64).cos();
        }
        let vdm =
            nalgebra::DMatrix::from_fn(FILON_NODES, FILON_NODES, |i, j| nodes[i].powi(j as i32));
        let inv_m = vdm
            .try_inverse()
            .expect("Chebyshev Vandermonde is invertible");
        let mut inv = [[0.0; FILON_NODES]; FILON_NODES];
        for (i, row) in inv.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = inv_m[(i, j)];
            }
        }
        let mut probes = [0.0; FILON_NODES - 1];
        for (k, p) in probes.iter_mut().enumerate() {
            p.clone_from(&(0.5 * (nodes[k] + nodes[k + 1])));
        }
        FilonBasis { nodes, inv, probes }
    })
}

// Panel centred at `mid` with half-width `half`; `c` are monomial
// coefficients in the local variable `sigma` in [-1, 1].
#[derive(Debug, Clone)]
struct FilonPanel {
    mid: f64,
    half: f64,
    c: [f64; FILON_NODES],
}

/// Piecewise degree-7 representation of a profile `phi` on `[a, b]` that
/// evaluates `int phi(w) cos(w x) dw` and `int phi(w) sin(w x) dw` for any `x`
/// with moments of `tau^m e^{i theta tau}` computed exactly.
#[derive(Debug, Clone)]
pub struct FilonTransform {
    panels: Vec<FilonPanel>,
}

fn poly_eval(c: &[f64; FILON_NODES], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck)
}

impl FilonTransform {
    /// Fit `phi` on `[a, b]` with pointwise accuracy `rel_tol` relative to
    /// the largest sampled value.
    pub fn new(phi: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<Self> {
        let basis = filon_basis();
        let scale = (0..=400)
            .map(|k| phi(a + (b - a) * k as f64 / 400.0).abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let target = rel_tol * scale;
        let fit = |a: f64, w: f64| -> ([f64; FILON_NODES], f64) {
            let mid = a + 0.5 * w;
            let half = 0.5 * w;
            let mut y = [0.0; FILON_NODES];
            for (k, yk) in y.iter_mut().enumerate() {
                *yk = phi(mid + half * basis.nodes[k]);
            }
            let mut c = [0.0; FILON_NODES];
            for (i, ci) in c.iter_mut().enumerate() {
                *ci = (0..FILON_NODES).map(|j| basis.inv[i][j] * y[j]).sum();
            }
            let err = basis
                .probes
                .iter()
                .map(|&t| (poly_eval(&c, t) - phi(mid + half * t)).abs())
                .fold(0.0_f64, f64::max);
            // Below this the fit is limited by round-off, not by resolution.
            let floor = 1e3 * f64::EPSILON * y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            (c, (err - floor).max(0.0))
        };
        let mut panels = Vec::new();
        let mut stack = vec![(a, b - a, 0usize)];
        while let Some((pa, pw, depth)) = stack.pop() {
            if panels.len() > 200_000 {
                return Err(Error::Quadrature(
                    "profile needs more than 200000 Filon panels".into(),
                ));
            }
            let (c, err) = fit(pa, pw);
            if err <= target || depth >= 90 {
                if depth >= 90 && err > target && pw > 1e-12 * (b - a) {
                    return Err(Error::Quadrature(format!(
                        "profile cannot be resolved near {pa}"
                    )));
                }
                panels.push(FilonPanel {
                    mid: pa + 0.5 * pw,
                    half: 0.5 * pw,
                    c,
                });
            } else {
                let h = 0.5 * pw;
                stack.push((pa + h, h, depth + 1));
                stack.push((pa, h, depth + 1));
            }
        }
        Ok(Self { panels })
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    /// `int phi(w) e^{i w x} dw` over the fitted range.
    pub fn fourier(&self, x: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut mu = [Complex64::new(0.0, 0.0); FILON_NODES];
        for p in &self.panels {
            exp_moments(x * p.half, &mut mu);
            let inner: Complex64 = p.c.iter().zip(&mu).map(|(&c, &m)| m * c).sum();
            let (s, c) = (p.mid * x).sin_cos();
            acc += Complex64::new(c, s) * inner * p.half;
        }
        acc
    }

    pub fn cosine(&self, x: f64) -> f64 {
        self.fourier(x).re
    }

    pub fn sine(&self, x: f64) -> f64 {
        self.fourier(x).im
    }
}

/// `mu[m] = int_{-1}^1 sigma^m e^{i theta sigma} dsigma`.
fn exp_moments(theta: f64, mu: &mut [Complex64; FILON_NODES]) {
    if theta.abs() <= 4.0 {
        let z = Complex64::new(0.0, theta);
        for (m, out) in mu.iter_mut().enumerate() {
            // only even powers of sigma survive the symmetric integral
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = Complex64::new(0.0, 0.0);
            for k in 0..90 {
                if k > 0 {
                    term *= z / k as f64;
                }
                if (m + k) % 2 == 0 {
                    let add = term * (2.0 / (m + k + 1) as f64);
                    sum += add;
                    if k > 4 && add.norm() < 1e-18 * sum.norm().max(1e-300) {
                        break;
                    }
                }
            }
            *out = sum;
        }
    } else {
        let ep = Complex64::new(theta.cos(), theta.sin());
        let em = ep.conj();
        let iz = Complex64::new(0.0, theta);
        mu[0] = (ep - em) / iz;
        let mut sign = 1.0;
        for m in 1..FILON_NODES {
            mu[m] = (ep + em * sign - mu[m - 1] * m as f64) / iz;
            sign = -sign;
        }
    }
}
