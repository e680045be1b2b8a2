//! Quadrature rules for expectations over exponential gains.
//!
//! Two independent routes are provided: a fixed Gauss-Laguerre rule, whose
//! weight function e^(-x) matches the exponential law exactly, and a global
//! adaptive Gauss-Kronrod (7/15) integrator on finite panels. Expectations
//! over Rayleigh fading are computed with the former and cross-checked with
//! the latter.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Node count of the shared Gauss-Laguerre rule.
pub const LAGUERRE_NODES: usize = 200;

/// A Gauss-Laguerre rule for weight e^(-x) on [0, inf), stored as nodes and
/// natural-log weights (the largest nodes carry weights far below f64 range).
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    nodes: Vec<f64>,
    ln_weights: Vec<f64>,
}

impl GaussLaguerre {
    /// Builds an `n`-node rule. Nodes are the eigenvalues of the Laguerre
    /// Jacobi matrix, isolated by Sturm-sequence bisection and polished by
    /// Newton steps on L_n; weights are x / ((n+1) L_{n+1}(x))^2.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Laguerre rule needs at least one node");
        let diag: Vec<f64> = (0..n).map(|k| (2 * k + 1) as f64).collect();
        let off_sq: Vec<f64> = (1..n).map(|k| (k * k) as f64).collect();
        let upper = 4.0 * n as f64 + 2.0;

        let mut nodes = Vec::with_capacity(n);
        let mut ln_weights = Vec::with_capacity(n);
        for k in 0..n {
            let mut lo = 0.0_f64;
            let mut hi = upper;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count(&diag, &off_sq, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut x = 0.5 * (lo + hi);
            for _ in 0..3 {
                let (ln_n, ln_nm1) = laguerre_pair(n, x);
                // L_n' = n (L_n - L_{n-1}) / x, evaluated with a common scale.
                let scale = ln_n.1.max(ln_nm1.1);
                let pn = ln_n.0 * (ln_n.1 - scale).exp();
                let pnm1 = ln_nm1.0 * (ln_nm1.1 - scale).exp();
                let deriv = n as f64 * (pn - pnm1) / x;
                if deriv == 0.0 {
                    break;
                }
                let step = pn / deriv;
                if !step.is_finite() || step.abs() > 1e-6 * x.max(1e-3) {
                    break;
                }
                x -= step;
            }
            let (next, _) = laguerre_pair(n + 1, x);
            let ln_abs = next.0.abs().ln() + next.1;
            let ln_w = x.ln() - 2.0 * ((n + 1) as f64).ln() - 2.0 * ln_abs;
            nodes.push(x);
            ln_weights.push(ln_w);
        }
        Self { nodes, ln_weights }
    }

    /// The shared 200-node rule.
    pub fn standard() -> &'static GaussLaguerre {
        static RULE: OnceLock<GaussLaguerre> = OnceLock::new();
        RULE.get_or_init(|| GaussLaguerre::new(LAGUERRE_NODES))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn ln_weights(&self) -> &[f64] {
        &self.ln_weights
    }

    /// ∫₀^∞ f(x) e^(-x) dx.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.ln_weights)
            .map(|(&x, &lw)| {
                let w = lw.exp();
                if w == 0.0 {
                    0.0
                } else {
                    w * f(x)
                }
            })
            .sum()
    }

    /// log ∫₀^∞ e^(g(x)) e^(-x) dx, accumulated with log-sum-exp.
    pub fn log_integrate_exp<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.ln_weights)
            .map(|(&x, &lw)| lw + g(x))
            .collect();
        log_sum_exp(&terms)
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below `x`.
fn sturm_count(diag: &[f64], off_sq: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..diag.len() {
        let prev = if q == 0.0 { f64::EPSILON } else { q };
        q = diag[k] - x - off_sq[k - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Returns (L_m(x), L_{m-1}(x)) as (mantissa, ln scale) pairs so that large
/// arguments do not overflow.
fn laguerre_pair(m: usize, x: f64) -> ((f64, f64), (f64, f64)) {
    const RESCALE: f64 = 1e150;
    let ln_rescale = RESCALE.ln();
    let mut prev = 1.0;
    if m == 0 {
        return ((1.0, 0.0), (0.0, 0.0));
    }
    let mut cur = 1.0 - x;
    let mut ln_scale = 0.0;
    for k in 1..m {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            ln_scale += ln_rescale;
        }
    }
    ((cur, ln_scale), (prev, ln_scale))
}

/// Numerically stable log Σ e^(t_i). Returns -inf for an empty or all -inf input.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

// Kronrod 15-point abscissae and weights with the embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(non_finite(center, fc));
    }
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        if !f1.is_finite() {
            return Err(non_finite(center - dx, f1));
        }
        if !f2.is_finite() {
            return Err(non_finite(center + dx, f2));
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok(Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    })
}

fn non_finite(x: f64, fx: f64) -> Error {
    Error::Quadrature {
        estimate: f64::NAN,
        detail: format!("integrand is {fx} at x = {x:e}"),
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveEstimate {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Global adaptive Gauss-Kronrod integration over the panels delimited by
/// `breakpoints` (ascending). Panels with the largest error estimate are
/// bisected until the summed estimate is within `rel_tol` of the value.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    rel_tol: f64,
    max_panels: usize,
) -> Result<AdaptiveEstimate> {
    debug_assert!(breakpoints.windows(2).all(|w| w[0] < w[1]));
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        heap.push(gauss_kronrod(&mut f, w[0], w[1])?);
    }
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= rel_tol * value.abs() || error <= f64::MIN_POSITIVE {
            return Ok(AdaptiveEstimate {
                value,
                error,
                panels: heap.len(),
            });
        }
        if heap.len() >= max_panels {
            return Err(Error::Quadrature {
                estimate: value,
                detail: format!(
                    "error estimate {error:e} above tolerance after {} panels",
                    heap.len()
                ),
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            return Err(Error::Quadrature {
                estimate: value,
                detail: format!("panel [{:e}, {:e}] exhausted precision", worst.a, worst.b),
            });
        }
        heap.push(gauss_kronrod(&mut f, worst.a, mid)?);
        heap.push(gauss_kronrod(&mut f, mid, worst.b)?);
    }
}
