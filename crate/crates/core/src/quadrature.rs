//! One-dimensional building blocks: quadrature rules, collocation axes,
//! spectral differentiation matrices and compensated summation.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;

/// Neumaier-compensated accumulator. Norms are summed through this so that
/// results do not depend on how a parallel schedule splits the terms beyond
/// ordinary rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Sum of an iterator with compensation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Legendre polynomials `P_0..=P_kmax` and their first derivatives at `t`.
pub fn legendre_table(kmax: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; kmax + 1];
    let mut dp = vec![0.0; kmax + 1];
    p[0] = 1.0;
    if kmax >= 1 {
        p[1] = t;
        dp[1] = 1.0;
    }
    for k in 1..kmax {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * t * p[k] - kf * p[k - 1]) / (kf + 1.0);
        // P'_{k+1} = P'_{k-1} + (2k+1) P_k
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
    (p, dp)
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dpn = 1.0;
        for _ in 0..100 {
            let (p, dp) = legendre_table(n, x);
            dpn = dp[n];
            let dx = p[n] / dpn;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, dp) = legendre_table(n, x);
                dpn = dp[n];
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Clenshaw-Curtis weights for the `n` Chebyshev-Gauss-Lobatto points on `[-1, 1]`.
pub fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let big_n = n - 1;
    let nf = big_n as f64;
    let mut w = vec![0.0; n];
    let theta = |j: usize| PI * j as f64 / nf;
    if big_n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
    } else {
        w[0] = 1.0 / (nf * nf);
    }
    w[big_n] = w[0];
    for (j, wj) in w.iter_mut().enumerate().take(big_n).skip(1) {
        let mut v = 1.0;
        for k in 1..=(big_n - 1) / 2 {
            let kf = k as f64;
            v -= 2.0 * (2.0 * kf * theta(j)).cos() / (4.0 * kf * kf - 1.0);
        }
        if big_n % 2 == 0 {
            v -= (nf * theta(j)).cos() / (nf * nf - 1.0);
        }
        *wj = 2.0 * v / nf;
    }
    w
}

/// Differentiation matrix for polynomial interpolation on arbitrary distinct
/// nodes, built from barycentric weights.
pub fn barycentric_diff_matrix(nodes: &[f64], bary: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Chebyshev polynomial `T_k` on `[-1, 1]`.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    (k as f64 * x.clamp(-1.0, 1.0).acos()).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    /// Chebyshev-Gauss-Lobatto collocation, endpoints included.
    Lobatto,
    /// Uniform periodic grid with trigonometric differentiation.
    Periodic,
}

/// A discretized coordinate: nodes, quadrature weights and a
/// differentiation matrix. A Lobatto axis may consist of several panels
/// that each carry their own polynomial interpolant.
#[derive(Debug, Clone)]
pub struct Axis {
    kind: AxisKind,
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    diff: DMatrix<f64>,
    panels: Vec<Range<usize>>,
    bary: Vec<f64>,
}

impl Axis {
    /// Chebyshev-Gauss-Lobatto axis on `[lo, hi]` with Clenshaw-Curtis weights.
    pub fn lobatto(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2 && hi > lo);
        let half = 0.5 * (hi - lo);
        let nodes: Vec<f64> = (0..n)
            .map(|j| {
                let x = -(PI * j as f64 / (n - 1) as f64).cos();
                lo + half * (x + 1.0)
            })
            .collect();
        let weights: Vec<f64> = clenshaw_curtis_weights(n)
            .into_iter()
            .map(|w| w * half)
            .collect();
        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let diff = barycentric_diff_matrix(&nodes, &bary);
        Self {
            kind: AxisKind::Lobatto,
            lo,
            hi,
            nodes,
            weights,
            diff,
            panels: vec![0..n],
            bary,
        }
    }

    /// Uniform periodic axis on `[lo, lo + period)`.
    pub fn periodic(lo: f64, period: f64, n: usize) -> Self {
        assert!(n >= 2 && period > 0.0);
        let step = period / n as f64;
        let nodes: Vec<f64> = (0..n).map(|j| lo + step * j as f64).collect();
        let weights = vec![step; n];
        let scale = 2.0 * PI / period;
        let mut diff = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = i as isize - j as isize;
                let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let arg = PI * k as f64 / n as f64;
                let v = if n % 2 == 0 {
                    0.5 * sign / arg.tan()
                } else {
                    0.5 * sign / arg.sin()
                };
                diff[(i, j)] = v * scale;
            }
        }
        Self {
            kind: AxisKind::Periodic,
            lo,
            hi: lo + period,
            nodes,
            weights,
            diff,
            panels: vec![0..n],
            bary: Vec::new(),
        }
    }

    /// Mirror a single-panel Lobatto axis on `[0, p]` to a two-panel axis on
    /// `[-p, p]`. The node `y = 0` appears once in each panel.
    pub fn mirrored(&self) -> Self {
        assert_eq!(self.kind, AxisKind::Lobatto);
        assert_eq!(self.panels.len(), 1);
        let n = self.len();
        let mut nodes: Vec<f64> = self.nodes.iter().rev().map(|y| -y).collect();
        nodes.extend_from_slice(&self.nodes);
        let mut weights: Vec<f64> = self.weights.iter().rev().copied().collect();
        weights.extend_from_slice(&self.weights);
        let mut diff = DMatrix::zeros(2 * n, 2 * n);
        // d/dy of g(-y) at -y_i is -g'(y_i); reversing rows and columns of D and
        // negating gives the mirrored panel's matrix.
        for i in 0..n {
            for j in 0..n {
                diff[(i, j)] = -self.diff[(n - 1 - i, n - 1 - j)];
                diff[(n + i, n + j)] = self.diff[(i, j)];
            }
        }
        Self {
            kind: AxisKind::Lobatto,
            lo: -self.hi,
            hi: self.hi,
            nodes,
            weights,
            diff,
            panels: vec![0..n, n..2 * n],
            bary: Vec::new(),
        }
    }

    pub fn kind(&self) -> AxisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn diff(&self) -> &DMatrix<f64> {
        &self.diff
    }

    pub fn panels(&self) -> &[Range<usize>] {
        &self.panels
    }

    pub fn is_single_panel(&self) -> bool {
        self.panels.len() == 1
    }

    /// Barycentric interpolation weights that evaluate the single-panel
    /// Lobatto interpolant at `x`.
    pub fn interpolation_row(&self, x: f64) -> Vec<f64> {
        assert!(
            self.kind == AxisKind::Lobatto && self.is_single_panel(),
            "interpolation is defined for single-panel Lobatto axes"
        );
        let n = self.len();
        let mut row = vec![0.0; n];
        for (j, &xj) in self.nodes.iter().enumerate() {
            if (x - xj).abs() < 1e-15 * (1.0 + xj.abs()) {
                row[j] = 1.0;
                return row;
            }
        }
        let mut denom = 0.0;
        for j in 0..n {
            let t = self.bary[j] / (x - self.nodes[j]);
            row[j] = t;
            denom += t;
        }
        row.iter_mut().for_each(|v| *v /= denom);
        row
    }
}
