//! Least-squares fitting of filter slices onto OVSF codes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::repr::ReprOperator;
use crate::model::ReprMode;
use crate::ovsf::OvsfBasis;
use crate::{Error, Result};

pub const POOL_RIDGE: f64 = 1e-8;

/// `α = (1/L)·H·slice`: the exact least-squares coefficients, since the
/// codes are orthogonal with squared norm `L`.
pub fn slice_project(slice: &[f64], basis: &OvsfBasis) -> Result<Vec<f64>> {
    let mut alpha = slice.to_vec();
    basis.transform(&mut alpha)?;
    let inv = 1.0 / basis.len() as f64;
    alpha.iter_mut().for_each(|a| *a *= inv);
    Ok(alpha)
}

/// Maps α (length L) to an engine-facing slice (length Q). Column `j` is the
/// effective image of code `j`: the code itself (direct), its 3×3 crop
/// (crop4) or its pooled 3×3 image (pool4).
#[derive(Debug, Clone)]
pub struct SliceDesign {
    mode: ReprMode,
    basis: OvsfBasis,
    op: Option<ReprOperator>,
    images: Vec<Vec<f64>>,
}

impl SliceDesign {
    pub fn new(mode: ReprMode, k: usize) -> Result<Self> {
        match mode {
            ReprMode::Direct => {
                let basis = OvsfBasis::with_len(k * k)?;
                let images = basis
                    .codes()
                    .map(|c| c.iter().map(|&x| x as f64).collect())
                    .collect();
                Ok(Self {
                    mode,
                    basis,
                    op: None,
                    images,
                })
            }
            ReprMode::Crop4 | ReprMode::Pool4 => {
                if k != 3 {
                    return Err(Error::config(format!(
                        "{} mode needs K=3, got K={k}",
                        mode.as_str()
                    )));
                }
                let basis = OvsfBasis::build(4)?;
                let op = ReprOperator::build(mode)?;
                let images = basis
                    .codes()
                    .map(|c| {
                        let f: Vec<f64> = c.iter().map(|&x| x as f64).collect();
                        op.apply(&f).to_vec()
                    })
                    .collect();
                Ok(Self {
                    mode,
                    basis,
                    op: Some(op),
                    images,
                })
            }
            ReprMode::Bypass => Err(Error::config("bypass layers have no slice design")),
        }
    }

    pub fn mode(&self) -> ReprMode {
        self.mode
    }

    pub fn basis(&self) -> &OvsfBasis {
        &self.basis
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    pub fn slice_len(&self) -> usize {
        self.images[0].len()
    }

    pub fn image(&self, j: usize) -> &[f64] {
        &self.images[j]
    }

    /// Full-basis coefficients for one slice.
    pub fn fit(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() != self.slice_len() {
            return Err(Error::validation(format!(
                "slice has {} entries, expected {}",
                target.len(),
                self.slice_len()
            )));
        }
        match self.mode {
            ReprMode::Direct => slice_project(target, &self.basis),
            ReprMode::Crop4 => {
                let mut padded = vec![0.0; 16];
                for r in 0..3 {
                    padded[4 * r..4 * r + 3].copy_from_slice(&target[3 * r..3 * r + 3]);
                }
                slice_project(&padded, &self.basis)
            }
            ReprMode::Pool4 => {
                let all: Vec<usize> = (0..16).collect();
                RidgeSolver::new(self, &all)?.solve(target)
            }
            ReprMode::Bypass => unreachable!(),
        }
    }

    /// `Σ_j α_j · image_j` over the given index subset.
    pub fn synthesize(&self, alphas: &[f64], indices: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.slice_len()];
        for (&a, &j) in alphas.iter().zip(indices) {
            for (o, &e) in out.iter_mut().zip(&self.images[j]) {
                *o += a * e;
            }
        }
        out
    }

    pub fn operator(&self) -> Option<&ReprOperator> {
        self.op.as_ref()
    }
}

/// Ridge-regularised normal equations restricted to a subset of codes,
/// factored once and reused across slices.
pub struct RidgeSolver {
    design: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl RidgeSolver {
    pub fn new(design: &SliceDesign, subset: &[usize]) -> Result<Self> {
        let q = design.slice_len();
        let d = DMatrix::from_fn(q, subset.len(), |r, c| design.image(subset[c])[r]);
        let mut gram = d.transpose() * &d;
        for i in 0..subset.len() {
            gram[(i, i)] += POOL_RIDGE;
        }
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::Numerical("normal equations are singular beyond the ridge tolerance".into())
        })?;
        Ok(Self { design: d, chol })
    }

    pub fn solve(&self, target: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.design.transpose() * DVector::from_column_slice(target);
        let x = self.chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite ridge solution".into()));
        }
        Ok(x.iter().copied().collect())
    }
}

/// Fit a 3×3 filter through a 4×4 OVSF filter (basis length 16).
pub fn fit_slice_3x3(target: &[f64; 9], op: &ReprOperator, basis: &OvsfBasis) -> Result<Vec<f64>> {
    if basis.len() != 16 {
        return Err(Error::validation(format!(
            "3x3 fitting needs a length-16 basis, got {}",
            basis.len()
        )));
    }
    SliceDesign::new(op.mode, 3)?.fit(target)
}
