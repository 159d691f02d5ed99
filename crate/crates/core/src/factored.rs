//! Symmetric low-rank `L D Lᵀ` pairs and the arithmetic the integrators need.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest `n` for which [`LdlPair::to_dense`] will materialize `L D Lᵀ`.
pub const DENSE_CAP: usize = 2000;

/// `X = L D Lᵀ` with tall `L` (n×k) and symmetric `D` (k×k).
#[derive(Clone, Debug, PartialEq)]
pub struct LdlPair {
    l: DMatrix<f64>,
    d: DMatrix<f64>,
}

/// Default compression tolerance for an `n`-row factor.
pub fn default_tol(n: usize) -> f64 {
    n.max(1) as f64 * f64::EPSILON
}

fn symmetrize(d: &mut DMatrix<f64>) {
    let k = d.nrows();
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (d[(i, j)] + d[(j, i)]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
}

impl LdlPair {
    pub fn new(l: DMatrix<f64>, mut d: DMatrix<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() || d.nrows() != l.ncols() {
            return Err(Error::dim(format!(
                "core is {}x{} for a factor with {} columns",
                d.nrows(),
                d.ncols(),
                l.ncols()
            )));
        }
        symmetrize(&mut d);
        Ok(LdlPair { l, d })
    }

    /// The zero matrix of order `n` (k = 0).
    pub fn zero(n: usize) -> Self {
        LdlPair {
            l: DMatrix::zeros(n, 0),
            d: DMatrix::zeros(0, 0),
        }
    }

    /// `L Lᵀ`.
    pub fn from_factor(l: DMatrix<f64>) -> Self {
        let k = l.ncols();
        LdlPair {
            l,
            d: DMatrix::identity(k, k),
        }
    }

    /// Exact eigen-based factorization of a dense symmetric matrix. Only exact zeros are dropped.
    pub fn from_dense(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != x.ncols() {
            return Err(Error::dim("dense input is not square"));
        }
        let mut xs = x.clone();
        symmetrize(&mut xs);
        let eig = SymmetricEigen::new(xs);
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] != 0.0)
            .collect();
        let l = eig.eigenvectors.select_columns(&keep);
        let d = DMatrix::from_diagonal(&eig.eigenvalues.select_rows(&keep));
        LdlPair::new(l, d)
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn k(&self) -> usize {
        self.l.ncols()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.l, self.d)
    }

    pub fn scaled(&self, w: f64) -> Self {
        LdlPair {
            l: self.l.clone(),
            d: &self.d * w,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l.iter().chain(self.d.iter()).all(|v| v.is_finite())
    }

    /// `X·M` for a tall block `M` without forming `X`.
    pub fn mul_right(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.k() == 0 {
            return DMatrix::zeros(self.n(), m.ncols());
        }
        let ltm = self.l.tr_mul(m);
        &self.l * (&self.d * ltm)
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.to_dense_capped(DENSE_CAP)
    }

    pub fn to_dense_capped(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > cap {
            return Err(Error::DenseCap { n, cap });
        }
        if self.k() == 0 {
            return Ok(DMatrix::zeros(n, n));
        }
        let mut x = &self.l * &self.d * self.l.transpose();
        symmetrize(&mut x);
        Ok(x)
    }

    pub fn frob_norm(&self) -> f64 {
        ldl_frob_norm(self)
    }

    pub fn compress(&self, rel_tol: f64) -> Self {
        column_compress(self, rel_tol)
    }
}

/// `H(D) = [[0, D], [D, 0]]`.
pub fn swap_core(d: &DMatrix<f64>) -> DMatrix<f64> {
    let k = d.nrows();
    let mut h = DMatrix::zeros(2 * k, 2 * k);
    h.view_mut((0, k), (k, k)).copy_from(d);
    h.view_mut((k, 0), (k, k)).copy_from(d);
    h
}

/// The swap core `H(I_p)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapCore {
    pub p: usize,
}

impl SwapCore {
    pub fn to_dense(&self) -> DMatrix<f64> {
        swap_core(&DMatrix::identity(self.p, self.p))
    }
}

/// Weight applied to the core of one block of a concatenation.
#[derive(Clone, Debug)]
pub enum Weight {
    Scalar(f64),
    /// Left-multiplies the core; the product is symmetrized.
    Matrix(DMatrix<f64>),
}

impl From<f64> for Weight {
    fn from(w: f64) -> Self {
        Weight::Scalar(w)
    }
}

/// Incremental block concatenation `[L₁ | L₂ | …]`, `diag(w₁D₁, w₂D₂, …)`.
#[derive(Clone, Debug)]
pub struct LdlBuilder {
    n: usize,
    ls: Vec<DMatrix<f64>>,
    cores: Vec<DMatrix<f64>>,
}

impl LdlBuilder {
    pub fn new(n: usize) -> Self {
        LdlBuilder {
            n,
            ls: Vec::new(),
            cores: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        l: DMatrix<f64>,
        core: &DMatrix<f64>,
        weight: impl Into<Weight>,
    ) -> Result<&mut Self> {
        if l.nrows() != self.n {
            return Err(Error::dim(format!(
                "block has {} rows, expected {}",
                l.nrows(),
                self.n
            )));
        }
        if core.nrows() != l.ncols() || core.ncols() != l.ncols() {
            return Err(Error::dim(format!(
                "core is {}x{} for a block with {} columns",
                core.nrows(),
                core.ncols(),
                l.ncols()
            )));
        }
        let c = match weight.into() {
            Weight::Scalar(w) => core * w,
            Weight::Matrix(w) => {
                if w.nrows() != core.nrows() || w.ncols() != core.nrows() {
                    return Err(Error::dim("matrix weight not conformable with its core"));
                }
                let mut c = w * core;
                symmetrize(&mut c);
                c
            }
        };
        self.ls.push(l);
        self.cores.push(c);
        Ok(self)
    }

    /// Block `l` with core `w·I`.
    pub fn push_scaled_identity(&mut self, l: DMatrix<f64>, w: f64) -> Result<&mut Self> {
        let k = l.ncols();
        self.push(l, &DMatrix::identity(k, k), w)
    }

    pub fn push_pair(&mut self, x: &LdlPair, w: f64) -> Result<&mut Self> {
        self.push(x.l.clone(), &x.d, w)
    }

    pub fn width(&self) -> usize {
        self.ls.iter().map(|l| l.ncols()).sum()
    }

    pub fn block_widths(&self) -> Vec<usize> {
        self.ls.iter().map(|l| l.ncols()).collect()
    }

    pub fn build(self) -> LdlPair {
        let k = self.width();
        let mut l = DMatrix::zeros(self.n, k);
        let mut d = DMatrix::zeros(k, k);
        let mut off = 0;
        for (li, ci) in self.ls.iter().zip(&self.cores) {
            let w = li.ncols();
            l.view_mut((0, off), (self.n, w)).copy_from(li);
            d.view_mut((off, off), (w, w)).copy_from(ci);
            off += w;
        }
        LdlPair { l, d }
    }
}

/// One-shot concatenation of `(L_i, D_i, w_i)` triples.
pub fn ldl_concat(parts: &[(&DMatrix<f64>, &DMatrix<f64>, Weight)]) -> Result<LdlPair> {
    let n = match parts.first() {
        Some(p) => p.0.nrows(),
        None => return Err(Error::dim("empty concatenation")),
    };
    let mut b = LdlBuilder::new(n);
    for (l, d, w) in parts {
        b.push((*l).clone(), d, w.clone())?;
    }
    Ok(b.build())
}

/// Upper-triangular factor `R` of a thin Householder QR of `l` (min(n,k)×k).
fn thin_r(l: &DMatrix<f64>) -> DMatrix<f64> {
    l.clone().qr().r()
}

/// `‖L D Lᵀ‖_F` through the QR factor of `L`, so only a k×k product is formed.
pub fn ldl_frob_norm(x: &LdlPair) -> f64 {
    if x.k() == 0 || x.n() == 0 {
        return 0.0;
    }
    let r = thin_r(&x.l);
    (&r * &x.d * r.transpose()).norm()
}

/// `‖X − Y‖_F` via the pair `([Lx, Ly], diag(Dx, −Dy))`.
pub fn ldl_diff_norm(x: &LdlPair, y: &LdlPair) -> Result<f64> {
    if x.n() != y.n() {
        return Err(Error::dim(format!("row counts {} and {}", x.n(), y.n())));
    }
    let mut b = LdlBuilder::new(x.n());
    b.push_pair(x, 1.0)?;
    b.push_pair(y, -1.0)?;
    Ok(ldl_frob_norm(&b.build()))
}

/// Relative difference `‖X − Y‖_F / ‖Y‖_F` (absolute when `Y = 0`).
pub fn ldl_rel_diff(x: &LdlPair, y: &LdlPair) -> Result<f64> {
    let d = ldl_diff_norm(x, y)?;
    let ny = ldl_frob_norm(y);
    Ok(if ny > 0.0 { d / ny } else { d })
}

/// Truncate `x` to its numerical rank.
///
/// Column-pivoted QR of `L`, then a symmetric eigendecomposition of the projected core.
/// Eigenvalues with `|λ| ≤ rel_tol·max|λ|/√n` are dropped. At most `n` of them can go,
/// so the truncation error stays within `rel_tol·‖X‖_F`, and a second pass is a no-op.
/// The returned pair has orthonormal `L'` and diagonal `D'`.
pub fn column_compress(x: &LdlPair, rel_tol: f64) -> LdlPair {
    let n = x.n();
    if x.k() == 0 || n == 0 || x.d.iter().all(|&v| v == 0.0) {
        return LdlPair::zero(n);
    }
    let qr = x.l.clone().col_piv_qr();
    let (q, mut r, p) = qr.unpack();
    p.inv_permute_columns(&mut r);
    let mut core = &r * &x.d * r.transpose();
    symmetrize(&mut core);
    let eig = SymmetricEigen::new(core);
    let lam = &eig.eigenvalues;
    let lmax = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let theta = rel_tol.max(0.0) * lmax / (n as f64).sqrt();
    let mut keep: Vec<usize> = (0..lam.len()).filter(|&i| lam[i].abs() > theta).collect();
    keep.sort_by(|&a, &b| lam[b].abs().total_cmp(&lam[a].abs()));
    if keep.is_empty() {
        return LdlPair::zero(n);
    }
    let vk = eig.eigenvectors.select_columns(&keep);
    let l = q * vk;
    let d = DMatrix::from_diagonal(&lam.select_rows(&keep));
    LdlPair { l, d }
}
