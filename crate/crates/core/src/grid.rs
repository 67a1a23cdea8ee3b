//! Nearest-neighbor walks on ε-grids and the comparison of their Dirichlet
//! form with the continuum gradient energy.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::{dirichlet_norm_sq, Chain};
use crate::error::{check_len, Error, Result};

/// Regular grid `{0, ε, …, (extent−1)ε}^d` with a reflecting boundary:
/// a move that would leave the grid keeps the walker in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub dim: usize,
    pub spacing: f64,
    pub extent: usize,
}

impl GridSpec {
    pub fn new(dim: usize, spacing: f64, extent: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "grid dimension {dim} not in 1..=3"
            )));
        }
        if extent < 3 {
            return Err(Error::InvalidArgument(format!("grid extent {extent} < 3")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing {spacing} must be positive"
            )));
        }
        Ok(GridSpec {
            dim,
            spacing,
            extent,
        })
    }

    /// Grid covering `[0, 1]^d` with both endpoints on each axis.
    pub fn unit_cube(dim: usize, spacing: f64) -> Result<Self> {
        let extent = (1.0 / spacing).round() as usize + 1;
        GridSpec::new(dim, spacing, extent)
    }

    pub fn n_nodes(&self) -> usize {
        self.extent.pow(self.dim as u32)
    }

    /// Integer coordinates of node `i` (axis 0 varies slowest).
    pub fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            c[axis] = i % self.extent;
            i /= self.extent;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.extent + c)
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        self.coords(i)
            .into_iter()
            .map(|c| c as f64 * self.spacing)
            .collect()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> DVector<f64> {
        DVector::from_fn(self.n_nodes(), |i, _| f(&self.position(i)))
    }

    fn neighbor(&self, i: usize, axis: usize, forward: bool) -> Option<usize> {
        let mut c = self.coords(i);
        if forward {
            if c[axis] + 1 >= self.extent {
                return None;
            }
            c[axis] += 1;
        } else {
            if c[axis] == 0 {
                return None;
            }
            c[axis] -= 1;
        }
        Some(self.index(&c))
    }

    /// Nodes on the two outermost layers of any axis.
    fn near_boundary(&self, i: usize) -> bool {
        self.coords(i)
            .iter()
            .any(|&c| c < 2 || c + 2 >= self.extent)
    }
}

/// Walk moving to each of the `2d` neighbors with probability `1/(2d)`.
pub fn grid_walk_chain(spec: &GridSpec) -> Result<Chain> {
    let n = spec.n_nodes();
    let w = 1.0 / (2 * spec.dim) as f64;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for axis in 0..spec.dim {
            for forward in [false, true] {
                let j = spec.neighbor(i, axis, forward).unwrap_or(i);
                p[(i, j)] += w;
            }
        }
    }
    let chain = Chain::new(p)?;
    chain.mu()?;
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorCheck {
    /// Dirichlet form of the sampled field on the grid walk.
    pub dir_norm: f64,
    /// `(ε²/2d) Σ_x μ(x) ‖∇f(x)‖²` with centered-difference gradients.
    pub continuum_estimate: f64,
    /// `dir_norm / continuum_estimate`, or 1 when both vanish.
    pub ratio: f64,
}

/// Values at or below this magnitude count as zero support.
const SUPPORT_TOL: f64 = 1e-12;

/// Compares the grid Dirichlet form of `f` with `ε²/(2d)` times its gradient
/// energy, both weighted by the walk's stationary law. `f` must vanish on the
/// two outermost layers of the grid.
pub fn grid_taylor_check(f: &DVector<f64>, spec: &GridSpec) -> Result<TaylorCheck> {
    check_len("grid field", spec.n_nodes(), f.len())?;
    if let Some(i) =
        (0..spec.n_nodes()).find(|&i| spec.near_boundary(i) && f[i].abs() > SUPPORT_TOL)
    {
        return Err(Error::InvalidArgument(format!(
            "field support touches the boundary at node {:?} (value {:e})",
            spec.coords(i),
            f[i]
        )));
    }
    let chain = grid_walk_chain(spec)?;
    let dir_norm = dirichlet_norm_sq(f, &chain)?;
    let mu = chain.mu()?;
    let eps = spec.spacing;
    let mut energy = 0.0;
    for i in 0..spec.n_nodes() {
        let mut sq = 0.0;
        for axis in 0..spec.dim {
            let up = spec.neighbor(i, axis, true).map_or(f[i], |j| f[j]);
            let down = spec.neighbor(i, axis, false).map_or(f[i], |j| f[j]);
            let g = (up - down) / (2.0 * eps);
            sq += g * g;
        }
        energy += mu[i] * sq;
    }
    let continuum_estimate = eps * eps / (2 * spec.dim) as f64 * energy;
    let ratio = if dir_norm == 0.0 && continuum_estimate == 0.0 {
        1.0
    } else {
        dir_norm / continuum_estimate
    };
    Ok(TaylorCheck {
        dir_norm,
        continuum_estimate,
        ratio,
    })
}

/// Centered Gaussian bump `exp(−‖x − c‖²/(2σ²))` on the unit cube.
pub fn gaussian_bump(center: f64, sigma: f64) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| {
        let r2: f64 = x.iter().map(|xi| (xi - center).powi(2)).sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    }
}
