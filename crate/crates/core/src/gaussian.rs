//! The Gaussian variational family.
//!
//! A [`VariationalState`] holds the mean and the precision of `q = N(mu, P^{-1})`
//! in one of three layouts: a single dense block, several dense diagonal blocks,
//! or a plain vector of diagonal precisions. The covariance and the Cholesky
//! factor of every block are recomputed whenever a state is built, so they are
//! never stale.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spd::{self, LowerTriangular, SpdMatrix, TangentMatrix};

/// Shape of the posterior covariance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PosteriorStructure {
    Full,
    Diagonal,
    /// Contiguous dense blocks; sizes must sum to the dimension.
    Block(Vec<usize>),
}

impl PosteriorStructure {
    /// Block sizes for a model of dimension `dim`.
    pub fn block_sizes(&self, dim: usize) -> Result<Vec<usize>> {
        match self {
            PosteriorStructure::Full => Ok(vec![dim]),
            PosteriorStructure::Diagonal => Ok(vec![1; dim]),
            PosteriorStructure::Block(sizes) => {
                if sizes.is_empty() || sizes.contains(&0) {
                    return Err(Error::InvalidStructure(
                        "block sizes must be positive".into(),
                    ));
                }
                let total: usize = sizes.iter().sum();
                if total != dim {
                    return Err(Error::InvalidStructure(format!(
                        "block sizes sum to {total}, model dimension is {dim}"
                    )));
                }
                Ok(sizes.clone())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PosteriorStructure::Full => "full",
            PosteriorStructure::Diagonal => "diagonal",
            PosteriorStructure::Block(_) => "block",
        }
    }
}

/// One dense block of the precision with its cached inverse and factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub prec: SpdMatrix,
    pub cov: SpdMatrix,
    /// Cholesky factor of `prec`.
    pub chol: LowerTriangular,
}

impl DenseBlock {
    pub fn from_precision(prec: SpdMatrix) -> Result<Self> {
        let (cov, chol) = spd::spd_inverse(&prec)?;
        Ok(DenseBlock { prec, cov, chol })
    }

    pub fn dim(&self) -> usize {
        self.prec.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DiagonalPrecision {
    pub prec: DVector<f64>,
    pub sqrt_prec: DVector<f64>,
    pub var: DVector<f64>,
}

impl DiagonalPrecision {
    fn new(prec: DVector<f64>) -> Result<Self> {
        for (i, &p) in prec.iter().enumerate() {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: p });
            }
        }
        let sqrt_prec = prec.map(f64::sqrt);
        // Same operation order as a 1x1 dense block: invert the factor, then square.
        let var = sqrt_prec.map(|l| {
            let inv = 1.0 / l;
            inv * inv
        });
        Ok(DiagonalPrecision {
            prec,
            sqrt_prec,
            var,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layout {
    Dense(Vec<DenseBlock>),
    Diagonal(DiagonalPrecision),
}

/// Mean and precision of a Gaussian variational posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    mu: DVector<f64>,
    layout: Layout,
    structure: PosteriorStructure,
    ranges: Vec<Range<usize>>,
}

fn ranges_of(sizes: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&n| {
            let r = start..start + n;
            start += n;
            r
        })
        .collect()
}

impl VariationalState {
    /// Builds a dense-block state (`Full` or `Block`) from per-block precisions.
    pub fn from_blocks(
        mu: DVector<f64>,
        structure: PosteriorStructure,
        precisions: Vec<SpdMatrix>,
    ) -> Result<Self> {
        if structure == PosteriorStructure::Diagonal {
            let diag = DVector::from_iterator(
                precisions.len(),
                precisions.iter().map(|p| p.as_matrix()[(0, 0)]),
            );
            if precisions.iter().any(|p| p.dim() != 1) {
                return Err(Error::InvalidStructure(
                    "diagonal structure needs 1x1 blocks".into(),
                ));
            }
            return Self::diagonal(mu, diag);
        }
        let sizes = structure.block_sizes(mu.len())?;
        if sizes.len() != precisions.len() {
            return Err(Error::Dimension {
                expected: sizes.len(),
                found: precisions.len(),
            });
        }
        for (n, p) in sizes.iter().zip(&precisions) {
            if *n != p.dim() {
                return Err(Error::Dimension {
                    expected: *n,
                    found: p.dim(),
                });
            }
        }
        let blocks = precisions
            .into_iter()
            .map(DenseBlock::from_precision)
            .collect::<Result<Vec<_>>>()?;
        Ok(VariationalState {
            mu,
            layout: Layout::Dense(blocks),
            structure,
            ranges: ranges_of(&sizes),
        })
    }

    /// Full-covariance state.
    pub fn full(mu: DVector<f64>, prec: SpdMatrix) -> Result<Self> {
        Self::from_blocks(mu, PosteriorStructure::Full, vec![prec])
    }

    /// Diagonal state from the vector of precisions `sigma^{-2}`.
    pub fn diagonal(mu: DVector<f64>, prec: DVector<f64>) -> Result<Self> {
        if mu.len() != prec.len() {
            return Err(Error::Dimension {
                expected: mu.len(),
                found: prec.len(),
            });
        }
        let d = mu.len();
        Ok(VariationalState {
            mu,
            layout: Layout::Diagonal(DiagonalPrecision::new(prec)?),
            structure: PosteriorStructure::Diagonal,
            ranges: ranges_of(&vec![1; d]),
        })
    }

    /// `N(mu, variance * I)` laid out according to `structure`.
    pub fn isotropic(mu: DVector<f64>, variance: f64, structure: PosteriorStructure) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::Config(format!("initial variance must be positive, got {variance}")));
        }
        let d = mu.len();
        if structure == PosteriorStructure::Diagonal {
            return Self::diagonal(mu, DVector::from_element(d, 1.0 / variance));
        }
        let sizes = structure.block_sizes(d)?;
        let precs = sizes
            .iter()
            .map(|&n| SpdMatrix::scaled_identity(n, 1.0 / variance))
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(mu, structure, precs)
    }

    /// Restricts a dense precision to `structure` (off-block entries are dropped).
    pub fn from_dense_precision(
        mu: DVector<f64>,
        prec: &DMatrix<f64>,
        structure: PosteriorStructure,
    ) -> Result<Self> {
        let d = mu.len();
        if prec.nrows() != d || prec.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                found: prec.nrows(),
            });
        }
        if structure == PosteriorStructure::Diagonal {
            return Self::diagonal(mu, prec.diagonal());
        }
        let sizes = structure.block_sizes(d)?;
        let precs = ranges_of(&sizes)
            .into_iter()
            .map(|r| {
                SpdMatrix::new(
                    prec.view((r.start, r.start), (r.len(), r.len()))
                        .into_owned(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(mu, structure, precs)
    }

    /// Same precision, new mean.
    pub fn with_mu(&self, mu: DVector<f64>) -> Result<Self> {
        if mu.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: mu.len(),
            });
        }
        Ok(VariationalState {
            mu,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn structure(&self) -> &PosteriorStructure {
        &self.structure
    }

    /// Index ranges of the blocks (singletons for the diagonal layout).
    pub fn block_ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Dense blocks, or `None` for the diagonal layout.
    pub fn dense_blocks(&self) -> Option<&[DenseBlock]> {
        match &self.layout {
            Layout::Dense(b) => Some(b),
            Layout::Diagonal(_) => None,
        }
    }

    /// Diagonal precisions `sigma^{-2}`, or `None` for dense layouts.
    pub fn diagonal_precision(&self) -> Option<&DVector<f64>> {
        match &self.layout {
            Layout::Diagonal(d) => Some(&d.prec),
            Layout::Dense(_) => None,
        }
    }

    /// Diagonal variances `sigma^2`, or `None` for dense layouts.
    pub fn diagonal_variance(&self) -> Option<&DVector<f64>> {
        match &self.layout {
            Layout::Diagonal(d) => Some(&d.var),
            Layout::Dense(_) => None,
        }
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dense_precision(&self) -> DMatrix<f64> {
        self.assemble(|b| b.prec.as_matrix(), |d| &d.prec)
    }

    pub fn dense_covariance(&self) -> DMatrix<f64> {
        self.assemble(|b| b.cov.as_matrix(), |d| &d.var)
    }

    fn assemble<'a>(
        &'a self,
        dense: impl Fn(&'a DenseBlock) -> &'a DMatrix<f64>,
        diag: impl Fn(&'a DiagonalPrecision) -> &'a DVector<f64>,
    ) -> DMatrix<f64> {
        match &self.layout {
            Layout::Diagonal(d) => DMatrix::from_diagonal(diag(d)),
            Layout::Dense(blocks) => {
                let n = self.dim();
                let mut out = DMatrix::zeros(n, n);
                for (b, r) in blocks.iter().zip(&self.ranges) {
                    out.view_mut((r.start, r.start), (r.len(), r.len()))
                        .copy_from(dense(b));
                }
                out
            }
        }
    }

    /// Marginal variances.
    pub fn variances(&self) -> DVector<f64> {
        match &self.layout {
            Layout::Diagonal(d) => d.var.clone(),
            Layout::Dense(_) => self.dense_covariance().diagonal(),
        }
    }

    /// `log det Sigma`.
    pub fn log_det_cov(&self) -> f64 {
        match &self.layout {
            Layout::Diagonal(d) => -2.0 * d.sqrt_prec.iter().map(|v| v.ln()).sum::<f64>(),
            Layout::Dense(blocks) => -blocks.iter().map(|b| b.chol.log_det_product()).sum::<f64>(),
        }
    }

    /// `P (theta - mu)`, block by block.
    pub fn precision_times(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.layout {
            Layout::Diagonal(d) => d.prec.component_mul(v),
            Layout::Dense(blocks) => {
                let mut out = DVector::zeros(v.len());
                for (b, r) in blocks.iter().zip(&self.ranges) {
                    let part = b.prec.as_matrix() * v.rows(r.start, r.len());
                    out.rows_mut(r.start, r.len()).copy_from(&part);
                }
                out
            }
        }
    }

    /// `Sigma v`, block by block.
    pub fn covariance_times(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.layout {
            Layout::Diagonal(d) => d.var.component_mul(v),
            Layout::Dense(blocks) => {
                let mut out = DVector::zeros(v.len());
                for (b, r) in blocks.iter().zip(&self.ranges) {
                    let part = b.cov.as_matrix() * v.rows(r.start, r.len());
                    out.rows_mut(r.start, r.len()).copy_from(&part);
                }
                out
            }
        }
    }

    /// Maps a standard-normal vector to a draw: `mu + L^{-T} eps` per block.
    pub fn draw_from_noise(&self, eps: &DVector<f64>) -> DVector<f64> {
        let mut theta = self.mu.clone();
        match &self.layout {
            Layout::Diagonal(d) => {
                for i in 0..eps.len() {
                    theta[i] += eps[i] / d.sqrt_prec[i];
                }
            }
            Layout::Dense(blocks) => {
                for (b, r) in blocks.iter().zip(&self.ranges) {
                    let e = DVector::from_column_slice(&eps.as_slice()[r.clone()]);
                    let x = b.chol.solve_transpose(&e);
                    for (k, i) in r.clone().enumerate() {
                        theta[i] += x[k];
                    }
                }
            }
        }
        theta
    }

    /// `count` draws. All `d` noise coordinates of a draw are consumed in order
    /// before the next draw, whatever the layout.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..count)
            .map(|_| {
                let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                self.draw_from_noise(&eps)
            })
            .collect()
    }
}

/// `log q(theta)`.
pub fn log_pdf(state: &VariationalState, theta: &DVector<f64>) -> Result<f64> {
    check_len(state, theta)?;
    let d = state.dim() as f64;
    let delta = theta - state.mu();
    let quad = match state.layout() {
        Layout::Diagonal(diag) => delta
            .iter()
            .zip(diag.sqrt_prec.iter())
            .map(|(x, l)| (x * l) * (x * l))
            .sum::<f64>(),
        Layout::Dense(blocks) => blocks
            .iter()
            .zip(state.block_ranges())
            .map(|(b, r)| {
                let z = b.chol.as_matrix().transpose() * delta.rows(r.start, r.len());
                z.norm_squared()
            })
            .sum(),
    };
    Ok(-0.5 * d * (2.0 * PI).ln() - 0.5 * state.log_det_cov() - 0.5 * quad)
}

fn check_len(state: &VariationalState, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != state.dim() {
        return Err(Error::Dimension {
            expected: state.dim(),
            found: theta.len(),
        });
    }
    Ok(())
}

/// `grad_mu log q = P (theta - mu)`.
pub fn score_mu(state: &VariationalState, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(state, theta)?;
    Ok(state.precision_times(&(theta - state.mu())))
}

/// `grad_Sigma log q = -1/2 (P - P (theta - mu)(theta - mu)^T P)` as a dense matrix.
///
/// Entries outside the blocks are zero.
pub fn score_sigma(state: &VariationalState, theta: &DVector<f64>) -> Result<TangentMatrix> {
    let z = score_mu(state, theta)?;
    let d = state.dim();
    let mut out = DMatrix::zeros(d, d);
    let prec = state.dense_precision();
    for r in state.block_ranges() {
        for i in r.clone() {
            for j in r.clone() {
                out[(i, j)] = -0.5 * (prec[(i, j)] - z[i] * z[j]);
            }
        }
    }
    spd::symmetrize(&out)
}

/// Natural gradient in `mu`: `Sigma grad_mu`.
pub fn nat_grad_mu(cov: &SpdMatrix, grad_mu: &DVector<f64>) -> Result<DVector<f64>> {
    if cov.dim() != grad_mu.len() {
        return Err(Error::Dimension {
            expected: cov.dim(),
            found: grad_mu.len(),
        });
    }
    Ok(cov.as_matrix() * grad_mu)
}

/// Natural gradient in the precision: `-2 grad_Sigma`.
pub fn nat_grad_prec(grad_sigma: &TangentMatrix) -> TangentMatrix {
    grad_sigma.scale(-2.0)
}

/// `KL(qa || qb)` between the dense views of two states.
pub fn kl_gaussian(qa: &VariationalState, qb: &VariationalState) -> Result<f64> {
    if qa.dim() != qb.dim() {
        return Err(Error::Dimension {
            expected: qa.dim(),
            found: qb.dim(),
        });
    }
    let d = qa.dim() as f64;
    let pb = qb.dense_precision();
    let trace = (&pb * qa.dense_covariance()).trace();
    let diff = qb.mu() - qa.mu();
    let quad = diff.dot(&(&pb * &diff));
    let kl = 0.5 * (trace + quad - d + qb.log_det_cov() - qa.log_det_cov());
    Ok(kl.max(0.0))
}

/// Natural-gradient estimate of the precision part, laid out like the state.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecisionGradient {
    Blocks(Vec<TangentMatrix>),
    Diagonal(DVector<f64>),
}

/// Natural gradients `(g_mu, g_prec)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalGradientPair {
    pub g_mu: DVector<f64>,
    pub g_prec: PrecisionGradient,
}

impl NaturalGradientPair {
    pub fn zeros_like(state: &VariationalState) -> Self {
        let g_prec = match state.layout() {
            Layout::Diagonal(_) => PrecisionGradient::Diagonal(DVector::zeros(state.dim())),
            Layout::Dense(blocks) => PrecisionGradient::Blocks(
                blocks.iter().map(|b| TangentMatrix::zeros(b.dim())).collect(),
            ),
        };
        NaturalGradientPair {
            g_mu: DVector::zeros(state.dim()),
            g_prec,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &NaturalGradientPair, b: f64) -> Result<Self> {
        let g_mu = &self.g_mu * a + &other.g_mu * b;
        let g_prec = match (&self.g_prec, &other.g_prec) {
            (PrecisionGradient::Diagonal(x), PrecisionGradient::Diagonal(y)) => {
                PrecisionGradient::Diagonal(x * a + y * b)
            }
            (PrecisionGradient::Blocks(x), PrecisionGradient::Blocks(y)) if x.len() == y.len() => {
                PrecisionGradient::Blocks(
                    x.iter().zip(y).map(|(u, v)| u.combine(a, v, b)).collect(),
                )
            }
            _ => {
                return Err(Error::InvalidStructure(
                    "gradient layouts do not match".into(),
                ))
            }
        };
        Ok(NaturalGradientPair { g_mu, g_prec })
    }

    /// Dense block-diagonal view of `g_prec`.
    pub fn dense_prec(&self) -> DMatrix<f64> {
        match &self.g_prec {
            PrecisionGradient::Diagonal(v) => DMatrix::from_diagonal(v),
            PrecisionGradient::Blocks(blocks) => {
                let n: usize = blocks.iter().map(|b| b.dim()).sum();
                let mut out = DMatrix::zeros(n, n);
                let mut start = 0;
                for b in blocks {
                    out.view_mut((start, start), (b.dim(), b.dim()))
                        .copy_from(b.as_matrix());
                    start += b.dim();
                }
                out
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        let prec_ok = match &self.g_prec {
            PrecisionGradient::Diagonal(v) => v.iter().all(|x| x.is_finite()),
            PrecisionGradient::Blocks(b) => b.iter().all(|m| m.as_matrix().iter().all(|x| x.is_finite())),
        };
        prec_ok && self.g_mu.iter().all(|x| x.is_finite())
    }
}
