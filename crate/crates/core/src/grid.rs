//! Tensor-product quadrature grids with spectral differentiation matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::quad::gauss_legendre_on;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    /// Equispaced trapezoid nodes on a periodic interval.
    Periodic,
    /// Gauss–Legendre nodes on a closed interval.
    Legendre,
}

/// One coordinate axis: nodes, positive weights and an `n × n` differentiation
/// matrix stored row-major.
#[derive(Debug, Clone)]
pub struct Axis {
    pub kind: AxisKind,
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    diff: Vec<f64>,
}

impl Axis {
    pub fn periodic(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 1);
        let len = hi - lo;
        let h = len / n as f64;
        let nodes = (0..n).map(|j| lo + j as f64 * h).collect();
        let weights = vec![h; n];
        let mut diff = vec![0.0; n * n];
        let scale = 2.0 * PI / len;
        let step = 2.0 * PI / n as f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let m = i as f64 - j as f64;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let half = 0.5 * m * step;
                let v = if n % 2 == 0 {
                    0.5 * sign / half.tan()
                } else {
                    0.5 * sign / half.sin()
                };
                diff[i * n + j] = v * scale;
            }
        }
        Self { kind: AxisKind::Periodic, lo, hi, nodes, weights, diff }
    }

    pub fn legendre(lo: f64, hi: f64, n: usize) -> Self {
        let (nodes, weights) = gauss_legendre_on(lo, hi, n);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let bary: Vec<f64> = nodes
            .iter()
            .zip(&weights)
            .enumerate()
            .map(|(j, (&x, &w))| {
                let t = (x - mid) / half;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * ((1.0 - t * t) * w / half).sqrt()
            })
            .collect();
        let mut diff = vec![0.0; n * n];
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    diff[i * n + j] = v;
                    diag -= v;
                }
            }
            diff[i * n + i] = diag;
        }
        Self { kind: AxisKind::Legendre, lo, hi, nodes, weights, diff }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn diff_entry(&self, i: usize, j: usize) -> f64 {
        self.diff[i * self.len() + j]
    }

    pub fn measure(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Row-major tensor grid over up to three axes (last axis fastest).
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub axes: Vec<Axis>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl TensorGrid {
    pub fn new(axes: Vec<Axis>) -> Self {
        let shape: Vec<usize> = axes.iter().map(Axis::len).collect();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let len = shape.iter().product();
        Self { axes, shape, strides, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in 0..self.dim() {
            out[a] = flat / self.strides[a];
            flat %= self.strides[a];
        }
        out
    }

    /// Grid coordinates of a flat index.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.nodes[i])
            .collect()
    }

    /// Tensor-product quadrature weight of a flat index (no density).
    pub fn weight(&self, flat: usize) -> f64 {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.weights[i])
            .product()
    }

    /// Derivative along `axis` of grid data.
    pub fn partial(&self, axis: usize, data: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(data.len(), self.len);
        let n = self.shape[axis];
        let inner = self.strides[axis];
        let outer = self.len / (n * inner);
        let ax = &self.axes[axis];
        let mut out = vec![Complex64::new(0.0, 0.0); self.len];
        for o in 0..outer {
            let base = o * n * inner;
            for i in 0..n {
                let dst = base + i * inner;
                for j in 0..n {
                    let d = ax.diff_entry(i, j);
                    if d == 0.0 {
                        continue;
                    }
                    let src = base + j * inner;
                    for t in 0..inner {
                        out[dst + t] += data[src + t] * d;
                    }
                }
            }
        }
        out
    }
}

/// Complex values on the points of a model grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn from_values(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: Complex64, other: &GridFunction) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: Complex64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|v| v * alpha).collect() }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_differentiation_is_exact_on_resolved_modes() {
        for &n in &[16usize, 17] {
            let ax = Axis::periodic(-PI, PI, n);
            let grid = TensorGrid::new(vec![ax.clone()]);
            let f: Vec<Complex64> = ax.nodes.iter().map(|&x| Complex64::new(0.0, 5.0 * x).exp()).collect();
            let d = grid.partial(0, &f);
            for (i, &x) in ax.nodes.iter().enumerate() {
                let exact = Complex64::new(0.0, 5.0) * Complex64::new(0.0, 5.0 * x).exp();
                assert!((d[i] - exact).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn legendre_differentiation_converges_spectrally() {
        let ax = Axis::legendre(0.0, 3.0, 40);
        let grid = TensorGrid::new(vec![ax.clone()]);
        let f: Vec<Complex64> = ax.nodes.iter().map(|&x| Complex64::new((-x * x).exp(), x.sin())).collect();
        let d = grid.partial(0, &f);
        for (i, &x) in ax.nodes.iter().enumerate() {
            let exact = Complex64::new(-2.0 * x * (-x * x).exp(), x.cos());
            assert!((d[i] - exact).norm() < 1e-10, "{i}");
        }
        let total: f64 = ax.weights.iter().sum();
        assert!((total - 3.0).abs() < 1e-13);
    }

    #[test]
    fn partial_acts_along_the_requested_axis() {
        let grid = TensorGrid::new(vec![Axis::periodic(0.0, 2.0 * PI, 8), Axis::legendre(0.0, 1.0, 6)]);
        let f: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                Complex64::new(c[0].cos() * c[1] * c[1], 0.0)
            })
            .collect();
        let dx = grid.partial(0, &f);
        let dy = grid.partial(1, &f);
        for i in 0..grid.len() {
            let c = grid.coords(i);
            assert!((dx[i].re + c[0].sin() * c[1] * c[1]).abs() < 1e-12);
            assert!((dy[i].re - 2.0 * c[0].cos() * c[1]).abs() < 1e-12);
        }
        let w: f64 = (0..grid.len()).map(|i| grid.weight(i)).sum();
        assert!((w - 2.0 * PI).abs() < 1e-12);
    }
}
