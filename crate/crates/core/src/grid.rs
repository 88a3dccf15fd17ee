//! Tensor-product grids on the truncated half-plane `[-Lx, Lx] × [0, Ly]`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Strictly increasing list of nodes along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    nodes: Vec<f64>,
}

impl Axis {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Config("an axis needs at least 3 nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("axis nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::Config(format!("bad uniform axis [{lo}, {hi}] with {n} nodes")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        Self::from_nodes((0..n).map(|i| lo + i as f64 * h).collect())
    }

    /// Nodes starting at `start` with first spacing `h0`, each spacing at
    /// most `ratio` times the previous one and capped at `h_max`, ending
    /// exactly at `end`.
    fn stretched(start: f64, end: f64, h0: f64, ratio: f64, h_max: f64) -> Vec<f64> {
        let mut pts = vec![start];
        let mut h = h0;
        let mut x = start;
        while x < end {
            x += h;
            pts.push(x);
            h = (h * ratio).min(h_max);
        }
        let s = (end - start) / (x - start);
        let last = pts.len() - 1;
        for p in pts.iter_mut().skip(1) {
            *p = start + (*p - start) * s;
        }
        pts[last] = end;
        pts
    }

    /// Uniform spacing `h` on `[a, b]`, geometric stretching outside it up
    /// to `[-l, l]`.
    pub fn graded_symmetric(l: f64, a: f64, b: f64, h: f64, ratio: f64, h_max: f64) -> Result<Self> {
        if !(a < b && -l < a && b < l && h > 0.0 && ratio >= 1.0) {
            return Err(Error::Config(format!(
                "bad graded axis: window [{a}, {b}] in [-{l}, {l}], h = {h}"
            )));
        }
        let n = ((b - a) / h).ceil() as usize;
        let hh = (b - a) / n as f64;
        let mut nodes: Vec<f64> = Self::stretched(-a, l, hh, ratio, h_max).into_iter().rev().map(|v| -v).collect();
        nodes.pop();
        nodes.extend((0..n).map(|i| a + i as f64 * hh));
        nodes.extend(Self::stretched(b, l, hh, ratio, h_max));
        Self::from_nodes(nodes)
    }

    /// `[0, l]`: uniform spacing `h0` on `[0, core]`, then growing
    /// geometrically.
    pub fn graded_from_zero(l: f64, core: f64, h0: f64, ratio: f64, h_max: f64) -> Result<Self> {
        if !(l > 0.0 && h0 > 0.0 && ratio >= 1.0 && core >= 0.0 && core < l) {
            return Err(Error::Config(format!("bad graded axis on [0, {l}] with h0 = {h0}")));
        }
        let n = (core / h0).ceil() as usize;
        let mut nodes: Vec<f64> = (0..n).map(|i| i as f64 * h0).collect();
        nodes.extend(Self::stretched(n as f64 * h0, l, h0, ratio, h_max));
        Self::from_nodes(nodes)
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

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Largest spacing among intervals intersecting `[a, b]`.
    pub fn max_spacing_in(&self, a: f64, b: f64) -> f64 {
        self.nodes
            .windows(2)
            .filter(|w| w[1] >= a && w[0] <= b)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.max_spacing_in(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Dual cell widths (half intervals at the two ends).
    pub fn cell_widths(&self) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.nodes[i] - self.nodes[i - 1] } else { 0.0 };
                let right = if i + 1 < n { self.nodes[i + 1] - self.nodes[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }

    /// Index `i` with `nodes[i] <= x < nodes[i+1]`, clamped to the range.
    pub fn locate(&self, x: f64) -> usize {
        let n = self.nodes.len();
        match self.nodes.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }
}

/// Grid on `[-Lx, Lx] × [0, Ly]`; node `(i, j)` is stored at `i * ny + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x: Axis,
    pub y: Axis,
}

impl Grid2D {
    pub fn new(x: Axis, y: Axis) -> Result<Self> {
        if y.first() != 0.0 {
            return Err(Error::Config("y axis must start at 0".into()));
        }
        Ok(Self { x, y })
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny() + j
    }

    /// `(hx, hy)` in the core region `[a, b] × [0, y_core]`.
    pub fn core_spacing(&self, a: f64, b: f64, y_core: f64) -> (f64, f64) {
        (self.x.max_spacing_in(a, b), self.y.max_spacing_in(0.0, y_core))
    }
}
