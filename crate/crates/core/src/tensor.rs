//! Dense complex linear algebra for the small spaces used by measurement models.
//!
//! Three spaces appear throughout: the measured system `S` (dimension `M`), the
//! observer/apparatus `O` (dimension `M + 1`, index 0 is the ready state) and the
//! composite `O ⊗ S`. Composite basis states are indexed O-major:
//! `k = o * M + s` for `o ∈ [0, M]`, `s ∈ [0, M - 1]`.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Which Hilbert space a vector or operator lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    S,
    O,
    OS,
}

impl Space {
    /// Dimension of this space for a model with system dimension `m`.
    pub fn dim_for(self, m: usize) -> usize {
        match self {
            Space::S => m,
            Space::O => m + 1,
            Space::OS => m * (m + 1),
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Space::S => "S",
            Space::O => "O",
            Space::OS => "OS",
        };
        f.write_str(s)
    }
}

/// Recover `M` from a composite dimension `M(M+1)`.
pub fn system_dim_from_composite(dim: usize) -> Option<usize> {
    let mut m = 1usize;
    while m * (m + 1) < dim {
        m += 1;
    }
    (m * (m + 1) == dim).then_some(m)
}

/// Composite index of `|O:o⟩ ⊗ |S:s⟩` (both zero-based).
#[inline]
pub fn composite_index(m: usize, o: usize, s: usize) -> usize {
    o * m + s
}

/// Numerical tolerances shared by every check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceProfile {
    pub eq_tol: f64,
    pub residual_tol: f64,
    pub degeneracy_gap: f64,
    pub max_retries: usize,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            eq_tol: 1e-10,
            residual_tol: 1e-8,
            degeneracy_gap: 1e-6,
            max_retries: 8,
        }
    }
}

impl ToleranceProfile {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("eq_tol", self.eq_tol),
            ("residual_tol", self.residual_tol),
            ("degeneracy_gap", self.degeneracy_gap),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and strictly positive, got {v}"));
            }
        }
        if self.max_retries == 0 {
            return Err("max_retries must be at least 1".into());
        }
        if self.eq_tol > self.residual_tol {
            return Err(format!(
                "eq_tol ({}) must not exceed residual_tol ({})",
                self.eq_tol, self.residual_tol
            ));
        }
        Ok(())
    }
}

/// Dense complex vector tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    space: Space,
    data: Vec<C64>,
}

impl ComplexVector {
    pub fn new(space: Space, data: Vec<C64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidDimension("vector must have at least one entry".into()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { space, data })
    }

    pub fn zeros(space: Space, dim: usize) -> Self {
        Self {
            space,
            data: vec![ZERO; dim],
        }
    }

    /// Standard basis vector `e_index`.
    pub fn basis(space: Space, dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(space, dim);
        v.data[index] = ONE;
        v
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &ComplexVector) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            space: self.space,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &ComplexVector) -> Self {
        Self {
            space: self.space,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexVector) -> Self {
        Self {
            space: self.space,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn distance(&self, other: &ComplexVector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `|self⟩ ⊗ |other⟩` for an O-vector and an S-vector.
    pub fn kron(&self, other: &ComplexVector) -> Result<Self> {
        if self.space != Space::O || other.space != Space::S || self.dim() != other.dim() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "kron expects O (dim M+1) then S (dim M), got {}({}) and {}({})",
                self.space,
                self.dim(),
                other.space,
                other.dim()
            )));
        }
        let data = self
            .data
            .iter()
            .flat_map(|a| other.data.iter().map(move |b| a * b))
            .collect();
        Ok(Self {
            space: Space::OS,
            data,
        })
    }

    /// `|self⟩⟨self|`.
    pub fn outer_self(&self) -> ComplexOperator {
        let n = self.dim();
        ComplexOperator::from_fn(self.space, n, |r, c| self.data[r] * self.data[c].conj())
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

/// Dense square complex matrix, row-major, tagged with the space it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    space: Space,
    dim: usize,
    data: Vec<C64>,
}

impl ComplexOperator {
    pub fn new(space: Space, dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("operator dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {dim}x{dim} operator",
                data.len()
            )));
        }
        if space == Space::OS && system_dim_from_composite(dim).is_none() {
            return Err(Error::DimensionMismatch(format!(
                "composite operator dimension {dim} is not of the form M(M+1)"
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { space, dim, data })
    }

    pub fn zeros(space: Space, dim: usize) -> Self {
        Self {
            space,
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(space: Space, dim: usize) -> Self {
        Self::from_fn(space, dim, |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn diagonal(space: Space, values: &[C64]) -> Self {
        Self::from_fn(space, values.len(), |r, c| if r == c { values[r] } else { ZERO })
    }

    pub fn real_diagonal(space: Space, values: &[f64]) -> Self {
        Self::from_fn(space, values.len(), |r, c| {
            if r == c {
                C64::new(values[r], 0.0)
            } else {
                ZERO
            }
        })
    }

    pub fn from_fn(space: Space, dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { space, dim, data }
    }

    /// `|ket⟩⟨bra|` for two basis indices.
    pub fn ket_bra(space: Space, dim: usize, ket: usize, bra: usize) -> Self {
        let mut op = Self::zeros(space, dim);
        op[(ket, bra)] = ONE;
        op
    }

    /// Operator whose columns are the given vectors.
    pub fn from_columns(space: Space, columns: &[ComplexVector]) -> Result<Self> {
        let n = columns.len();
        if columns.iter().any(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch("columns must form a square matrix".into()));
        }
        Ok(Self::from_fn(space, n, |r, c| columns[c][r]))
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn with_space(mut self, space: Space) -> Self {
        self.space = space;
        self
    }

    pub fn column(&self, c: usize) -> ComplexVector {
        ComplexVector {
            space: self.space,
            data: (0..self.dim).map(|r| self[(r, c)]).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.space, self.dim, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            space: self.space,
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            space: self.space,
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            space: self.space,
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_assign_scaled(&mut self, other: &Self, factor: C64) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * factor;
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            space: self.space,
            dim: n,
            data: out,
        })
    }

    pub fn apply(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if v.dim() != self.dim || v.space() != self.space {
            return Err(Error::DimensionMismatch(format!(
                "cannot apply {}({}) operator to {}({}) vector",
                self.space,
                self.dim,
                v.space(),
                v.dim()
            )));
        }
        let n = self.dim;
        let data = (0..n)
            .map(|r| {
                self.data[r * n..(r + 1) * n]
                    .iter()
                    .zip(&v.data)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(ComplexVector {
            space: self.space,
            data,
        })
    }

    /// `⟨u|self|v⟩`.
    pub fn sandwich(&self, u: &ComplexVector, v: &ComplexVector) -> Result<C64> {
        Ok(u.inner(&self.apply(v)?))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.space, self.dim, |r, c| {
            (self[(r, c)] + self[(c, r)].conj()) * 0.5
        })
    }

    /// Largest entry of `|A - A†|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in r..self.dim {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `‖U†U − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let gram = self
            .adjoint()
            .matmul(self)
            .expect("adjoint has matching shape");
        let mut acc = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                let target = if r == c { ONE } else { ZERO };
                acc += (gram[(r, c)] - target).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        let sq = self.matmul(self).expect("same shape");
        frob_dist(&sq, self).map(|d| d <= tol).unwrap_or(false)
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// `U† · self · U`.
    pub fn conjugate_by(&self, u: &Self) -> Result<Self> {
        u.adjoint().matmul(&self.matmul(u)?)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.space != other.space {
            return Err(Error::DimensionMismatch(format!(
                "{}({}) vs {}({})",
                self.space, self.dim, other.space, other.dim
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexOperator {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexOperator {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

/// `a ⊗ b` for an O-operator and an S-operator, O-major composite indexing.
pub fn kron(a: &ComplexOperator, b: &ComplexOperator) -> Result<ComplexOperator> {
    if a.space != Space::O || b.space != Space::S || a.dim != b.dim + 1 {
        return Err(Error::DimensionMismatch(format!(
            "kron expects O (dim M+1) then S (dim M), got {}({}) and {}({})",
            a.space, a.dim, b.space, b.dim
        )));
    }
    let m = b.dim;
    let n = a.dim * m;
    let mut out = ComplexOperator::zeros(Space::OS, n);
    for o in 0..a.dim {
        for o2 in 0..a.dim {
            let x = a[(o, o2)];
            if x == ZERO {
                continue;
            }
            for s in 0..m {
                for s2 in 0..m {
                    out[(composite_index(m, o, s), composite_index(m, o2, s2))] = x * b[(s, s2)];
                }
            }
        }
    }
    Ok(out)
}

/// Frobenius distance `‖a − b‖_F`.
pub fn frob_dist(a: &ComplexOperator, b: &ComplexOperator) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Eigendecomposition of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unitary, column `j` belongs to `eigenvalues[j]`.
    pub eigenvectors: ComplexOperator,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic complex Jacobi eigensolver.
///
/// Each rotation zeroes one off-diagonal pair `(p, q)` with the unitary
/// `G = [[c, s], [-s e^{-iφ}, c e^{-iφ}]]` where `φ = arg h[p][q]`; the
/// accumulated product of rotations is the eigenvector matrix.
pub fn hermitian_eig(h: &ComplexOperator, tol: &ToleranceProfile) -> Result<HermitianEig> {
    let deviation = h.hermitian_deviation();
    if deviation > tol.eq_tol * h.frob_norm().max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    let n = h.dim;
    let mut a = h.hermitian_part();
    let mut v = ComplexOperator::identity(h.space, n);
    let scale = a.frob_norm();
    let target = f64::EPSILON * scale;

    let off_norm = |a: &ComplexOperator| -> f64 {
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    acc += a[(r, c)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::ConvergenceFailure {
                sweeps,
                off_norm: off_norm(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= f64::MIN_POSITIVE || r <= 1e-3 * target / n as f64 {
                    continue;
                }
                let phase = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let e = phase.conj();
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -e * s;
                let g_qq = e * c;

                // A ← A·G
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                // A ← G†·A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                // V ← V·G
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order on ties
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = ComplexOperator::from_fn(h.space, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// `exp(−i·h·tau)` via the eigendecomposition of `h`.
pub fn unitary_exp(h: &ComplexOperator, tau: f64, tol: &ToleranceProfile) -> Result<ComplexOperator> {
    if !tau.is_finite() {
        return Err(Error::NonFinite);
    }
    let eig = hermitian_eig(h, tol)?;
    let v = &eig.eigenvectors;
    let phases: Vec<C64> = eig
        .eigenvalues
        .iter()
        .map(|&l| C64::from_polar(1.0, -l * tau))
        .collect();
    let n = h.dim;
    Ok(ComplexOperator::from_fn(h.space, n, |r, c| {
        (0..n).map(|k| v[(r, k)] * phases[k] * v[(c, k)].conj()).sum()
    }))
}

/// Slice a composite operator by apparatus indices:
/// `blocks[m][n][(s, s')] = B[(m, s), (n, s')]`.
pub fn conditional_blocks(b: &ComplexOperator) -> Result<Vec<Vec<ComplexOperator>>> {
    if b.space != Space::OS {
        return Err(Error::WrongSpace {
            expected: Space::OS,
            found: b.space,
        });
    }
    let m = system_dim_from_composite(b.dim).ok_or_else(|| {
        Error::DimensionMismatch(format!("dimension {} is not M(M+1)", b.dim))
    })?;
    let dim_o = m + 1;
    Ok((0..dim_o)
        .map(|o| {
            (0..dim_o)
                .map(|o2| {
                    ComplexOperator::from_fn(Space::S, m, |s, s2| {
                        b[(composite_index(m, o, s), composite_index(m, o2, s2))]
                    })
                })
                .collect()
        })
        .collect())
}

/// Inverse of [`conditional_blocks`].
pub fn reassemble_blocks(blocks: &[Vec<ComplexOperator>]) -> Result<ComplexOperator> {
    let dim_o = blocks.len();
    if dim_o < 2 || blocks.iter().any(|row| row.len() != dim_o) {
        return Err(Error::DimensionMismatch("block grid must be square with side M+1 ≥ 2".into()));
    }
    let m = dim_o - 1;
    if blocks.iter().flatten().any(|blk| blk.dim != m) {
        return Err(Error::DimensionMismatch(format!("every block must be {m}x{m}")));
    }
    let mut out = ComplexOperator::zeros(Space::OS, dim_o * m);
    for (o, row) in blocks.iter().enumerate() {
        for (o2, blk) in row.iter().enumerate() {
            for s in 0..m {
                for s2 in 0..m {
                    out[(composite_index(m, o, s), composite_index(m, o2, s2))] = blk[(s, s2)];
                }
            }
        }
    }
    Ok(out)
}

/// Complex standard normal sample, `E|z|² = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed unitary from an explicit generator.
///
/// Ginibre matrix, then modified Gram–Schmidt on the columns (run twice for
/// stability). Gram–Schmidt leaves `R` with a positive real diagonal, which is
/// the phase fixing that makes the distribution exactly Haar.
pub fn haar_random_unitary_with<R: Rng + ?Sized>(space: Space, n: usize, rng: &mut R) -> ComplexOperator {
    let mut cols: Vec<Vec<C64>> = (0..n)
        .map(|_| (0..n).map(|_| complex_normal(rng)).collect())
        .collect();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let qi = &done[i];
                let proj: C64 = qi.iter().zip(rest[0].iter()).map(|(a, b)| a.conj() * b).sum();
                for (x, q) in rest[0].iter_mut().zip(qi) {
                    *x -= proj * q;
                }
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in cols[j].iter_mut() {
            *x /= norm;
        }
    }
    ComplexOperator::from_fn(space, n, |r, c| cols[c][r])
}

/// Haar-distributed `n×n` unitary, deterministic in `seed`.
pub fn haar_random_unitary(n: usize, seed: u64) -> Result<ComplexOperator> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(haar_random_unitary_with(Space::S, n, &mut rng))
}

/// Random Hermitian operator with i.i.d. complex normal entries (GUE-like).
pub fn random_hermitian<R: Rng + ?Sized>(space: Space, n: usize, rng: &mut R) -> ComplexOperator {
    let g = ComplexOperator::from_fn(space, n, |_, _| complex_normal(rng));
    g.hermitian_part()
}

/// SplitMix64 finalizer; derives independent per-trial seeds from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> ToleranceProfile {
        ToleranceProfile::default()
    }

    fn random_op(space: Space, n: usize, seed: u64) -> ComplexOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexOperator::from_fn(space, n, |_, _| complex_normal(&mut rng))
    }

    #[test]
    fn kron_identities() {
        let k = kron(&ComplexOperator::identity(Space::O, 3), &ComplexOperator::identity(Space::S, 2)).unwrap();
        assert_eq!(k, ComplexOperator::identity(Space::OS, 6));
    }

    #[test]
    fn composite_index_is_o_major() {
        // |O:1⟩⟨O:0| ⊗ I₂ with M = 2
        let a = ComplexOperator::ket_bra(Space::O, 3, 1, 0);
        let k = kron(&a, &ComplexOperator::identity(Space::S, 2)).unwrap();
        let mut nonzero = Vec::new();
        for r in 0..6 {
            for c in 0..6 {
                if k[(r, c)] != ZERO {
                    nonzero.push((r, c, k[(r, c)]));
                }
            }
        }
        assert_eq!(nonzero, vec![(2, 0, ONE), (3, 1, ONE)]);
    }

    #[test]
    fn kron_entries_match_index_arithmetic() {
        let a = random_op(Space::O, 4, 1);
        let b = random_op(Space::S, 3, 2);
        let k = kron(&a, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (o, o2) = (rng.gen_range(0..4), rng.gen_range(0..4));
            let (s, s2) = (rng.gen_range(0..3), rng.gen_range(0..3));
            let got = k[(o * 3 + s, o2 * 3 + s2)];
            assert!((got - a[(o, o2)] * b[(s, s2)]).norm() <= 1e-15);
        }
    }

    #[test]
    fn kron_rejects_bad_tags() {
        let a = ComplexOperator::identity(Space::S, 3);
        let b = ComplexOperator::identity(Space::S, 2);
        assert!(matches!(kron(&a, &b), Err(Error::DimensionMismatch(_))));
        let a = ComplexOperator::identity(Space::O, 4);
        assert!(matches!(kron(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn kron_mixed_product() {
        let (a, c) = (random_op(Space::O, 3, 10), random_op(Space::O, 3, 11));
        let (b, d) = (random_op(Space::S, 2, 12), random_op(Space::S, 2, 13));
        let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap()).unwrap();
        let rhs = kron(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap()).unwrap();
        assert!(frob_dist(&lhs, &rhs).unwrap() <= 1e-12);
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = hermitian_eig(&ComplexOperator::identity(Space::S, 3), &tol()).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert!(e.eigenvectors.is_unitary(1e-14));

        let d = ComplexOperator::real_diagonal(Space::S, &[2.0, -1.0]);
        let e = hermitian_eig(&d, &tol()).unwrap();
        assert_eq!(e.eigenvalues, vec![-1.0, 2.0]);
        assert_eq!(e.eigenvectors[(1, 0)].norm(), 1.0);
        assert_eq!(e.eigenvectors[(0, 1)].norm(), 1.0);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = random_hermitian(Space::S, 6, &mut rng);
        let e = hermitian_eig(&h, &tol()).unwrap();
        let v = &e.eigenvectors;
        let d = ComplexOperator::real_diagonal(Space::S, &e.eigenvalues);
        let recon = v.matmul(&d).unwrap().matmul(&v.adjoint()).unwrap();
        assert!(frob_dist(&recon, &h).unwrap() <= 1e-12);
        assert!(v.is_unitary(1e-12));
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let hv = h.matmul(v).unwrap();
        let vd = v.matmul(&d).unwrap();
        assert!(frob_dist(&hv, &vd).unwrap() <= 1e-10 * h.frob_norm());
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut a = ComplexOperator::identity(Space::S, 2);
        a[(0, 1)] = ONE;
        assert!(matches!(hermitian_eig(&a, &tol()), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let u = unitary_exp(&ComplexOperator::zeros(Space::O, 4), 3.7, &tol()).unwrap();
        assert!(frob_dist(&u, &ComplexOperator::identity(Space::O, 4)).unwrap() <= 1e-15);
    }

    #[test]
    fn exp_is_unitary_and_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_hermitian(Space::S, 5, &mut rng);
        let u = unitary_exp(&h, 0.37, &tol()).unwrap();
        assert!(u.unitarity_defect() <= 1e-12);
        let u1 = unitary_exp(&h, 0.2, &tol()).unwrap();
        let u2 = unitary_exp(&h, 0.17, &tol()).unwrap();
        assert!(frob_dist(&u1.matmul(&u2).unwrap(), &u).unwrap() <= 1e-10);
    }

    #[test]
    fn exp_matches_closed_form_rotation() {
        // h = iκ(|1⟩⟨0| − |0⟩⟨1|) rotates |0⟩ into |1⟩ at κτ = π/2.
        let kappa = std::f64::consts::FRAC_PI_2;
        let h = ComplexOperator::ket_bra(Space::O, 3, 1, 0)
            .sub(&ComplexOperator::ket_bra(Space::O, 3, 0, 1))
            .unwrap()
            .scale(I * kappa);
        let u = unitary_exp(&h, 1.0, &tol()).unwrap();
        let out = u.apply(&ComplexVector::basis(Space::O, 3, 0)).unwrap();
        assert!(out.distance(&ComplexVector::basis(Space::O, 3, 1)) <= 1e-12);
    }

    #[test]
    fn blocks_of_product_and_identity() {
        let b = random_op(Space::O, 3, 20);
        let p = ComplexVector::basis(Space::S, 2, 1).outer_self();
        let blocks = conditional_blocks(&kron(&b, &p).unwrap()).unwrap();
        for m in 0..3 {
            for n in 0..3 {
                assert!(frob_dist(&blocks[m][n], &p.scale(b[(m, n)])).unwrap() <= 1e-15);
            }
        }
        let blocks = conditional_blocks(&ComplexOperator::identity(Space::OS, 12)).unwrap();
        for m in 0..4 {
            for n in 0..4 {
                let expect = if m == n {
                    ComplexOperator::identity(Space::S, 3)
                } else {
                    ComplexOperator::zeros(Space::S, 3)
                };
                assert_eq!(blocks[m][n], expect);
            }
        }
    }

    #[test]
    fn blocks_reassemble_bit_exact() {
        let b = random_op(Space::OS, 20, 21);
        let blocks = conditional_blocks(&b).unwrap();
        // independent index-shuffle oracle
        for (k, z) in b.data().iter().enumerate() {
            let (r, c) = (k / 20, k % 20);
            assert_eq!(blocks[r / 4][c / 4][(r % 4, c % 4)], *z);
        }
        assert_eq!(reassemble_blocks(&blocks).unwrap(), b);
    }

    #[test]
    fn blocks_reject_non_composite() {
        let s = ComplexOperator::identity(Space::S, 3);
        assert!(conditional_blocks(&s).is_err());
    }

    #[test]
    fn haar_small_and_deterministic() {
        let u = haar_random_unitary(1, 9).unwrap();
        assert!((u[(0, 0)].norm() - 1.0).abs() <= 1e-15);
        assert_eq!(haar_random_unitary(4, 5).unwrap(), haar_random_unitary(4, 5).unwrap());
        assert_ne!(haar_random_unitary(4, 5).unwrap(), haar_random_unitary(4, 6).unwrap());
        assert!(haar_random_unitary(0, 1).is_err());
    }

    #[test]
    fn haar_unitarity_sweep() {
        let worst = (0..100)
            .map(|s| haar_random_unitary(5, s).unwrap().unitarity_defect())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "worst {worst}");
    }

    #[test]
    fn frob_dist_cases() {
        let a = random_op(Space::S, 3, 30);
        assert_eq!(frob_dist(&a, &a).unwrap(), 0.0);
        let d = frob_dist(&ComplexOperator::identity(Space::S, 2), &ComplexOperator::zeros(Space::S, 2)).unwrap();
        assert!((d - 2f64.sqrt()).abs() <= 1e-15);
        let b = random_op(Space::S, 3, 31);
        let oracle: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x.re - y.re).powi(2) + (x.im - y.im).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((frob_dist(&a, &b).unwrap() - oracle).abs() <= 1e-14);
        assert_eq!(frob_dist(&a, &b).unwrap(), frob_dist(&b, &a).unwrap());
        assert!(frob_dist(&a, &ComplexOperator::zeros(Space::O, 3)).is_err());
    }

    #[test]
    fn composite_dim_inversion() {
        assert_eq!(system_dim_from_composite(6), Some(2));
        assert_eq!(system_dim_from_composite(42), Some(6));
        assert_eq!(system_dim_from_composite(7), None);
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceProfile::default().validate().is_ok());
        let bad = ToleranceProfile {
            eq_tol: 1e-6,
            residual_tol: 1e-8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
