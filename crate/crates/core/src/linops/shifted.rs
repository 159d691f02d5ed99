//! `(Âᵀ + pI)⁻¹` for `Â = α·M + δ·I − U Vᵀ` with sparse `M` and thin `U`, `V`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{ComplexField, DMatrix, LU};
use num_complex::Complex64;

use super::banded::{bandwidths, rcm_order, BandLu};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// A square sparse matrix with a stable identity and a precomputed band ordering.
#[derive(Clone, Debug)]
pub struct SparseHandle {
    id: u64,
    mat: Arc<CsrMatrix>,
    perm: Arc<Vec<usize>>,
    kl: usize,
    ku: usize,
}

impl SparseHandle {
    pub fn new(mat: CsrMatrix) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::dim(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let n = mat.nrows();
        let natural: Vec<usize> = (0..n).collect();
        let rcm = rcm_order(&mat);
        let bn = bandwidths(&mat, &natural);
        let br = bandwidths(&mat, &rcm);
        // Transposed factorization swaps the roles of kl and ku.
        let (perm, (kl, ku)) = if br.0 + br.1 < bn.0 + bn.1 {
            (rcm, br)
        } else {
            (natural, bn)
        };
        Ok(SparseHandle {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            mat: Arc::new(mat),
            perm: Arc::new(perm),
            kl: ku,
            ku: kl,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.mat
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    /// LU of `α·Mᵀ + c·I` in band ordering.
    fn factor<T: ComplexField<RealField = f64> + Copy + From<f64>>(
        &self,
        alpha: f64,
        c: T,
    ) -> std::result::Result<BandLu<T>, super::banded::SingularPivot> {
        let n = self.n();
        let mut inv = vec![0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            inv[old] = new;
        }
        let entries = self
            .mat
            .triplets()
            .map(|(i, j, v)| (inv[j], inv[i], T::from(alpha * v)))
            .chain((0..n).map(|i| (i, i, c)));
        let entries: Vec<_> = entries.collect();
        BandLu::factor(n, self.kl, self.ku, entries)
    }
}

enum Factor {
    Real(BandLu<f64>),
    Complex(BandLu<Complex64>),
}

type Key = (u64, u64, u64, u64);

const CACHE_LIMIT: usize = 512;

/// Shared cache of `α·Mᵀ + c·I` factorizations keyed by matrix identity, `α` and `c`.
#[derive(Clone, Default)]
pub struct FactorCache {
    inner: Rc<RefCell<HashMap<Key, Rc<Factor>>>>,
    hits: Rc<RefCell<(usize, usize)>>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(hits, misses)` since creation.
    pub fn stats(&self) -> (usize, usize) {
        *self.hits.borrow()
    }

    pub fn clear(&self) {
        self.inner.borrow_mut().clear();
    }

    fn get(&self, m: &SparseHandle, alpha: f64, c: Complex64) -> Result<Rc<Factor>> {
        let key = (m.id, alpha.to_bits(), c.re.to_bits(), c.im.to_bits());
        if let Some(f) = self.inner.borrow().get(&key) {
            self.hits.borrow_mut().0 += 1;
            return Ok(f.clone());
        }
        self.hits.borrow_mut().1 += 1;
        let f = if c.im == 0.0 {
            Factor::Real(
                m.factor::<f64>(alpha, c.re)
                    .map_err(|_| Error::SingularShift { shift: c })?,
            )
        } else {
            Factor::Complex(
                m.factor::<Complex64>(alpha, c)
                    .map_err(|_| Error::SingularShift { shift: c })?,
            )
        };
        let f = Rc::new(f);
        let mut map = self.inner.borrow_mut();
        if map.len() >= CACHE_LIMIT {
            map.clear();
        }
        map.insert(key, f.clone());
        Ok(f)
    }
}

enum Capacitance {
    Real(DMatrix<f64>, LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Complex(DMatrix<Complex64>, LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// `Â = α·M + δ·I − U Vᵀ`, used through `Âᵀ` and `(Âᵀ + pI)⁻¹` only.
pub struct ShiftedOperator {
    m: SparseHandle,
    alpha: f64,
    delta: f64,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    cache: FactorCache,
    caps: RefCell<HashMap<(u64, u64), Rc<Capacitance>>>,
}

fn permute_rows<T: nalgebra::Scalar + Copy>(b: &DMatrix<T>, perm: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(perm[i], j)])
}

fn unpermute_rows<T: nalgebra::Scalar + Copy>(b: &DMatrix<T>, perm: &[usize]) -> DMatrix<T> {
    let mut out = b.clone();
    for (new, &old) in perm.iter().enumerate() {
        for j in 0..b.ncols() {
            out[(old, j)] = b[(new, j)];
        }
    }
    out
}

fn band_solve<T: ComplexField<RealField = f64> + Copy>(
    lu: &BandLu<T>,
    perm: &[usize],
    b: &DMatrix<T>,
) -> DMatrix<T> {
    let mut x = permute_rows(b, perm);
    for mut col in x.column_iter_mut() {
        lu.solve_in_place(col.as_mut_slice());
    }
    unpermute_rows(&x, perm)
}

fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|v| Complex64::new(v, 0.0))
}

impl ShiftedOperator {
    pub fn new(
        m: SparseHandle,
        alpha: f64,
        delta: f64,
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        cache: FactorCache,
    ) -> Result<Self> {
        let n = m.n();
        if u.nrows() != n || v.nrows() != n || u.ncols() != v.ncols() {
            return Err(Error::dim(format!(
                "update factors {}x{} and {}x{} for n = {n}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        Ok(ShiftedOperator {
            m,
            alpha,
            delta,
            u,
            v,
            cache,
            caps: RefCell::new(HashMap::new()),
        })
    }

    /// No low-rank update.
    pub fn plain(m: SparseHandle, alpha: f64, delta: f64, cache: FactorCache) -> Self {
        let n = m.n();
        Self::new(m, alpha, delta, DMatrix::zeros(n, 0), DMatrix::zeros(n, 0), cache)
            .expect("conformable")
    }

    pub fn n(&self) -> usize {
        self.m.n()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn sparse(&self) -> &SparseHandle {
        &self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn cache(&self) -> &FactorCache {
        &self.cache
    }

    /// `Âᵀx = α·Mᵀx + δ·x − V(Uᵀx)`.
    pub fn apply_t(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut y = self.m.matrix().tr_mul_dense(x)? * self.alpha;
        y += x * self.delta;
        if self.rank() > 0 {
            y -= &self.v * self.u.tr_mul(x);
        }
        Ok(y)
    }

    /// `Âx = α·Mx + δ·x − U(Vᵀx)`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut y = self.m.matrix().mul_dense(x)? * self.alpha;
        y += x * self.delta;
        if self.rank() > 0 {
            y -= &self.u * self.v.tr_mul(x);
        }
        Ok(y)
    }

    /// Dense `Â` for oracle tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        self.m.matrix().to_dense() * self.alpha + DMatrix::identity(n, n) * self.delta
            - &self.u * self.v.transpose()
    }

    fn capacitance(&self, p: Complex64, f: &Factor) -> Result<Rc<Capacitance>> {
        let key = (p.re.to_bits(), p.im.to_bits());
        if let Some(c) = self.caps.borrow().get(&key) {
            return Ok(c.clone());
        }
        let r = self.rank();
        let cap = match f {
            Factor::Real(lu) => {
                let z = band_solve(lu, &self.m.perm, &self.v);
                let c = DMatrix::identity(r, r) - self.u.tr_mul(&z);
                Capacitance::Real(z, c.lu())
            }
            Factor::Complex(lu) => {
                let z = band_solve(lu, &self.m.perm, &to_complex(&self.v));
                let c = DMatrix::<Complex64>::identity(r, r) - to_complex(&self.u).transpose() * &z;
                Capacitance::Complex(z, c.lu())
            }
        };
        let cap = Rc::new(cap);
        self.caps.borrow_mut().insert(key, cap.clone());
        Ok(cap)
    }

    fn factor(&self, p: Complex64) -> Result<Rc<Factor>> {
        let c = Complex64::new(self.delta, 0.0) + p;
        self.cache.get(&self.m, self.alpha, c)
    }

    /// Solve `(Âᵀ + pI) y = b` for real `p`.
    pub fn solve_real(&self, p: f64, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let pc = Complex64::new(p, 0.0);
        let f = self.factor(pc)?;
        let Factor::Real(lu) = &*f else {
            unreachable!("real shift yields a real factorization")
        };
        let y0 = band_solve(lu, &self.m.perm, b);
        let y = if self.rank() == 0 {
            y0
        } else {
            let cap = self.capacitance(pc, &f)?;
            let Capacitance::Real(z, clu) = &*cap else {
                unreachable!()
            };
            let w = clu
                .solve(&self.u.tr_mul(&y0))
                .ok_or(Error::SingularUpdate { shift: pc })?;
            y0 + z * w
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularShift { shift: pc });
        }
        Ok(y)
    }

    /// Solve `(Âᵀ + pI) y = b` for a complex shift and complex right-hand side.
    pub fn solve_complex(&self, p: Complex64, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        if p.im == 0.0 {
            let re = self.solve_real(p.re, &b.map(|z| z.re))?;
            let im = self.solve_real(p.re, &b.map(|z| z.im))?;
            return Ok(DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| {
                Complex64::new(re[(i, j)], im[(i, j)])
            }));
        }
        let f = self.factor(p)?;
        let Factor::Complex(lu) = &*f else {
            unreachable!("complex shift yields a complex factorization")
        };
        let y0 = band_solve(lu, &self.m.perm, b);
        let y = if self.rank() == 0 {
            y0
        } else {
            let cap = self.capacitance(p, &f)?;
            let Capacitance::Complex(z, clu) = &*cap else {
                unreachable!()
            };
            let w = clu
                .solve(&(to_complex(&self.u).transpose() * &y0))
                .ok_or(Error::SingularUpdate { shift: p })?;
            y0 + z * w
        };
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::SingularShift { shift: p });
        }
        Ok(y)
    }

    /// Real right-hand side, any shift.
    pub fn solve(&self, p: Complex64, b: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
        if p.im == 0.0 {
            return Ok(to_complex(&self.solve_real(p.re, b)?));
        }
        self.solve_complex(p, &to_complex(b))
    }

    /// Interval `[lo, hi]` (both positive) bracketing `−Re λ(Â)` by Gershgorin discs.
    pub fn gershgorin_interval(&self) -> (f64, f64) {
        let m = self.m.matrix();
        let lr = self.u.norm() * self.v.norm();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..self.n() {
            let mut c = self.delta;
            let mut r = lr;
            for (j, v) in m.row(i) {
                if j == i {
                    c += self.alpha * v;
                } else {
                    r += (self.alpha * v).abs();
                }
            }
            lo = lo.min(-c - r);
            hi = hi.max(-c + r);
        }
        if hi <= 0.0 {
            hi = 1.0;
        }
        if !(lo > 0.0) {
            lo = hi * 1e-3;
        }
        (lo, hi)
    }
}
