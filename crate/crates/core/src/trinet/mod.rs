//! Topological Laplacian and the truncated-resolvent convolution layer.
//!
//! `L = D^-sigma W D^(sigma-1)` with `W = (W_joint + I)^rho` (a matrix
//! power) and `D` its row sums. A layer computes
//! `psi(mu * sum_{i=0}^{ceil(R mu)} (mu L)^i H Theta)`, a truncation of
//! `mu (I - mu L)^-1 H Theta`, by repeated sparse products.

mod model;

pub use model::{
    accuracy, train, Checkpoint, Model, ModelConfig, TrainReport, TrainingData,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::timr::{BinaryAdjacency, TimrGraph};

/// Dense topological Laplacian together with the parameters it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct TopoLaplacian {
    pub matrix: DMatrix<f64>,
    pub sigma: f64,
    pub rho: u32,
    /// Hex digest of the source adjacency.
    pub source_hash: String,
}

fn adjacency_hash(adj: &BinaryAdjacency) -> String {
    let mut hasher = Sha256::new();
    hasher.update((adj.n() as u64).to_le_bytes());
    for (u, v) in adj.edges() {
        hasher.update((u as u64).to_le_bytes());
        hasher.update((v as u64).to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Laplacian of the joint rewired adjacency.
pub fn topo_laplacian(timr: &TimrGraph, sigma: f64, rho: u32) -> Result<TopoLaplacian> {
    laplacian_of(&timr.w_joint, sigma, rho)
}

/// Laplacian of an arbitrary symmetric 0/1 adjacency.
pub fn laplacian_of(adj: &BinaryAdjacency, sigma: f64, rho: u32) -> Result<TopoLaplacian> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::InvalidParameter(format!(
            "sigma must lie in [0, 1] (got {sigma})"
        )));
    }
    if rho == 0 {
        return Err(Error::InvalidParameter("rho must be >= 1".into()));
    }
    let n = adj.n();
    let mut base = DMatrix::<f64>::identity(n, n);
    for (u, v) in adj.edges() {
        base[(u, v)] = 1.0;
        base[(v, u)] = 1.0;
    }
    let mut w = base.clone();
    for _ in 1..rho {
        w = &w * &base;
    }
    let degrees: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let left: Vec<f64> = degrees.iter().map(|d| d.powf(-sigma)).collect();
    let right: Vec<f64> = degrees.iter().map(|d| d.powf(sigma - 1.0)).collect();
    let matrix = DMatrix::from_fn(n, n, |u, v| left[u] * w[(u, v)] * right[v]);
    Ok(TopoLaplacian {
        matrix,
        sigma,
        rho,
        source_hash: adjacency_hash(adj),
    })
}

/// Highest series power `ceil(R * mu)`.
pub fn max_power(r: f64, mu: f64) -> usize {
    // guard against 0.1 * 30 = 3.0000000000000004
    (r * mu - 1e-9).ceil().max(0.0) as usize
}

/// Element-wise activation applied after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }
}

/// Compressed sparse rows of `L` and `L^T`, used to apply the truncated
/// resolvent `mu * sum_{i=0}^{max_i} (mu L)^i`.
#[derive(Debug, Clone)]
pub struct Propagator {
    n: usize,
    mu: f64,
    max_i: usize,
    fwd: Csr,
    bwd: Csr,
}

#[derive(Debug, Clone)]
struct Csr {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<f64>, transpose: bool) -> Self {
        let n = m.nrows();
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in 0..n {
            for c in 0..m.ncols() {
                let x = if transpose { m[(c, r)] } else { m[(r, c)] };
                if x != 0.0 {
                    cols.push(c);
                    vals.push(x);
                }
            }
            offsets.push(cols.len());
        }
        Csr { offsets, cols, vals }
    }

    /// `scale * self * x`
    fn mul(&self, x: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
        let n = self.offsets.len() - 1;
        let mut out = DMatrix::zeros(n, x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            for r in 0..n {
                let mut acc = 0.0;
                for k in self.offsets[r]..self.offsets[r + 1] {
                    acc += self.vals[k] * col[self.cols[k]];
                }
                out[(r, j)] = scale * acc;
            }
        }
        out
    }
}

impl Propagator {
    pub fn new(l: &TopoLaplacian, mu: f64, r: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mu must lie in (0, 1] (got {mu})"
            )));
        }
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("R must be > 0 (got {r})")));
        }
        Ok(Propagator {
            n: l.matrix.nrows(),
            mu,
            max_i: max_power(r, mu),
            fwd: Csr::from_dense(&l.matrix, false),
            bwd: Csr::from_dense(&l.matrix, true),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_i(&self) -> usize {
        self.max_i
    }

    fn series(&self, csr: &Csr, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.nrows() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "operand has {} rows, Laplacian is {}x{0}",
                z.nrows(),
                self.n
            )));
        }
        let mut term = z.clone();
        let mut acc = z.clone();
        for _ in 0..self.max_i {
            term = csr.mul(&term, self.mu);
            acc += &term;
        }
        acc *= self.mu;
        Ok(acc)
    }

    /// `mu * sum_i (mu L)^i z`
    pub fn apply(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.series(&self.fwd, z)
    }

    /// `mu * sum_i (mu L^T)^i z`, the adjoint of [`apply`](Self::apply).
    pub fn apply_transpose(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.series(&self.bwd, z)
    }
}

/// One convolution layer `psi(mu * sum_{i<=ceil(R mu)} (mu L)^i H Theta)`.
pub fn conv_layer(
    l: &TopoLaplacian,
    h: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    mu: f64,
    r: f64,
    psi: Activation,
) -> Result<DMatrix<f64>> {
    if h.ncols() != theta.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "H is {}x{}, Theta is {}x{}",
            h.nrows(),
            h.ncols(),
            theta.nrows(),
            theta.ncols()
        )));
    }
    let prop = Propagator::new(l, mu, r)?;
    let mut out = prop.apply(&(h * theta))?;
    out.apply(|x| *x = psi.apply(*x));
    Ok(out)
}
