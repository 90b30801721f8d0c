//! Heisenberg-picture operators and their Everett-copy branch structure.
//!
//! An operator `d` acting on the apparatus alone evolves under an ideal
//! measurement into `d(t) = Σᵢ dᵢ ⊗ Pᵢ` with `dᵢ = uᵢ† d uᵢ`. This module
//! computes that form in closed form, recovers it from an arbitrary composite
//! operator without knowing the model, and checks that the recovered
//! decomposition is unique up to relabeling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{o_ket, pointer_projector, s_ket, MeasurementModel, SystemState};
use crate::tensor::{
    complex_normal, conditional_blocks, frob_dist, hermitian_eig, kron, system_dim_from_composite,
    ComplexOperator, ComplexVector, Space, ToleranceProfile, C64, ONE, ZERO,
};

/// Where a Heisenberg-picture operator came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_space: Space,
    pub model: Option<String>,
    pub duration: Option<f64>,
}

/// A composite operator, usually `U† (embedded o) U`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergOperator {
    pub op: ComplexOperator,
    pub provenance: Provenance,
}

impl HeisenbergOperator {
    /// Wrap an operator that did not come from [`evolve_operator`].
    pub fn external(op: ComplexOperator) -> Result<Self> {
        if op.space() != Space::OS {
            return Err(Error::WrongSpace {
                expected: Space::OS,
                found: op.space(),
            });
        }
        Ok(Self {
            op,
            provenance: Provenance {
                source_space: Space::OS,
                model: None,
                duration: None,
            },
        })
    }

    pub fn m(&self) -> usize {
        system_dim_from_composite(self.op.dim()).expect("composite dimension checked on construction")
    }
}

/// Lift an S- or O-operator to the composite space (`o ⊗ I` or `I ⊗ o`).
pub fn embed(model: &MeasurementModel, o: &ComplexOperator) -> Result<ComplexOperator> {
    let m = model.m();
    let expected = o.space().dim_for(m);
    if o.dim() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{} operator for m = {m} must have dimension {expected}, got {}",
            o.space(),
            o.dim()
        )));
    }
    match o.space() {
        Space::O => kron(o, &ComplexOperator::identity(Space::S, m)),
        Space::S => kron(&ComplexOperator::identity(Space::O, m + 1), o),
        Space::OS => Ok(o.clone()),
    }
}

/// `U† o U` with `o` embedded in the composite space first.
pub fn evolve_operator(model: &MeasurementModel, o: &ComplexOperator) -> Result<HeisenbergOperator> {
    let embedded = embed(model, o)?;
    Ok(HeisenbergOperator {
        op: embedded.conjugate_by(model.u())?,
        provenance: Provenance {
            source_space: o.space(),
            model: Some(model.label()),
            duration: Some(model.duration()),
        },
    })
}

/// One Everett copy: `branch_op ⊗ projector` with record value `βᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EverettBranch {
    pub branch_op: ComplexOperator,
    pub projector: ComplexOperator,
    /// Unit vector spanning the projector's range.
    pub vector: ComplexVector,
    pub record_value: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EverettDecomposition {
    pub branches: Vec<EverettBranch>,
    /// `‖B − Σ bᵢ⊗Pᵢ‖_F / ‖B‖_F`.
    pub residual: f64,
    pub canonical: bool,
}

/// Vector components smaller than this are skipped when fixing the phase.
const PHASE_ANCHOR_MIN: f64 = 1e-6;

impl EverettDecomposition {
    pub fn m(&self) -> usize {
        self.branches.len()
    }

    pub fn reconstruct(&self) -> Result<ComplexOperator> {
        let m = self.m();
        let mut out = ComplexOperator::zeros(Space::OS, m * (m + 1));
        for br in &self.branches {
            out.add_assign_scaled(&kron(&br.branch_op, &br.projector)?, ONE)?;
        }
        Ok(out)
    }

    pub fn record_values(&self) -> Vec<C64> {
        self.branches.iter().map(|b| b.record_value).collect()
    }

    /// Branch index pairs whose record values are closer than `gap`.
    pub fn degenerate_pairs(&self, gap: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.branches.len() {
            for j in i + 1..self.branches.len() {
                if (self.branches[i].record_value - self.branches[j].record_value).norm() <= gap {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Largest violation of: Hermitian idempotent projectors, pairwise
    /// orthogonal, summing to the identity.
    pub fn projector_defect(&self) -> f64 {
        let m = self.m();
        let mut worst = 0.0f64;
        let mut sum = ComplexOperator::zeros(Space::S, m);
        for (i, a) in self.branches.iter().enumerate() {
            let p = &a.projector;
            worst = worst.max(p.hermitian_deviation());
            let sq = p.matmul(p).expect("same shape");
            worst = worst.max(frob_dist(&sq, p).expect("same shape"));
            for b in &self.branches[i + 1..] {
                worst = worst.max(p.matmul(&b.projector).expect("same shape").frob_norm());
            }
            sum.add_assign_scaled(p, ONE).expect("same shape");
        }
        worst.max(frob_dist(&sum, &ComplexOperator::identity(Space::S, m)).expect("same shape"))
    }

    /// Sort branches by `(Re β, Im β)` and rotate each defining vector so its
    /// first non-negligible component is real positive.
    pub fn canonicalize(&mut self) {
        self.branches.sort_by(|a, b| {
            a.record_value
                .re
                .total_cmp(&b.record_value.re)
                .then(a.record_value.im.total_cmp(&b.record_value.im))
        });
        for br in &mut self.branches {
            if let Some(anchor) = br.vector.data().iter().find(|z| z.norm() > PHASE_ANCHOR_MIN) {
                let fix = anchor.conj() / anchor.norm();
                br.vector = br.vector.scale(fix);
            }
        }
        self.canonical = true;
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }
}

/// `bᵢ = uᵢ† b uᵢ` with the model's pointer projectors. Not canonicalized.
pub fn closed_form_branches(model: &MeasurementModel, b: &ComplexOperator) -> Result<EverettDecomposition> {
    let m = model.m();
    if b.space() != Space::O || b.dim() != m + 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected an O({}) operator, got {}({})",
            m + 1,
            b.space(),
            b.dim()
        )));
    }
    let ready = o_ket(m, 0);
    let branches = model
        .u_branches()
        .iter()
        .enumerate()
        .map(|(j, u)| {
            let branch_op = b.conjugate_by(u)?;
            let record_value = branch_op.sandwich(&ready, &ready)?;
            Ok(EverettBranch {
                branch_op,
                projector: pointer_projector(m, j + 1),
                vector: s_ket(m, j + 1),
                record_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut decomposition = EverettDecomposition {
        branches,
        residual: 0.0,
        canonical: false,
    };
    let evolved = evolve_operator(model, b)?.op;
    let norm = evolved.frob_norm();
    let diff = frob_dist(&evolved, &decomposition.reconstruct()?)?;
    decomposition.residual = if norm > 0.0 { diff / norm } else { diff };
    Ok(decomposition)
}

/// Result of [`extract_copy_structure`].
#[derive(Debug, Clone, PartialEq)]
pub enum CopyVerdict {
    CopyForm(EverettDecomposition),
    NotCopyForm { residual: f64, reason: String },
}

impl CopyVerdict {
    pub fn decomposition(&self) -> Option<&EverettDecomposition> {
        match self {
            CopyVerdict::CopyForm(d) => Some(d),
            CopyVerdict::NotCopyForm { .. } => None,
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            CopyVerdict::CopyForm(d) => d.residual,
            CopyVerdict::NotCopyForm { residual, .. } => *residual,
        }
    }
}

/// Decide whether `b` has the form `Σᵢ bᵢ ⊗ Pᵢ` with rank-one orthogonal
/// projectors `Pᵢ`, `ready` an eigenvector of every `bᵢ`, and pairwise
/// distinct eigenvalues `βᵢ`.
///
/// Every conditional block `⟨O:m|B|O:n⟩` of an in-form operator is diagonal
/// in the common eigenbasis of the `Pᵢ`. A random complex mixture of the
/// blocks, reduced to its Hermitian part, generically has a simple spectrum
/// whose eigenvectors are that basis. Up to `tol.max_retries` draws are
/// tried; a basis is accepted only if it diagonalizes every block, and a
/// rejection reports the smallest residual seen.
pub fn extract_copy_structure(
    b: &HeisenbergOperator,
    ready: &ComplexVector,
    tol: &ToleranceProfile,
    seed: u64,
) -> Result<CopyVerdict> {
    let op = &b.op;
    let m = system_dim_from_composite(op.dim())
        .ok_or_else(|| Error::DimensionMismatch(format!("dimension {} is not M(M+1)", op.dim())))?;
    if ready.space() != Space::O || ready.dim() != m + 1 {
        return Err(Error::DimensionMismatch(format!(
            "ready vector must be O({}), got {}({})",
            m + 1,
            ready.space(),
            ready.dim()
        )));
    }
    let ready_norm = ready.norm();
    if (ready_norm - 1.0).abs() > tol.eq_tol {
        return Err(Error::NotNormalized { norm: ready_norm });
    }
    let norm = op.frob_norm();
    if norm == 0.0 {
        return Ok(CopyVerdict::NotCopyForm {
            residual: 0.0,
            reason: "zero operator: every record value is 0".into(),
        });
    }

    let blocks = conditional_blocks(op)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Best fit among separated draws that failed, and the last degenerate basis.
    let mut best: Option<BasisFit> = None;
    let mut fallback = None;
    let mut accepted = None;
    for _ in 0..tol.max_retries {
        let mut mix = ComplexOperator::zeros(Space::S, m);
        for row in &blocks {
            for blk in row {
                mix.add_assign_scaled(blk, complex_normal(&mut rng))?;
            }
        }
        let eig = hermitian_eig(&mix.hermitian_part(), tol)?;
        let min_gap = eig
            .eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if min_gap <= tol.degeneracy_gap * norm {
            fallback = Some(eig.eigenvectors);
            continue;
        }
        let fit = fit_basis(op, &blocks, eig.eigenvectors, norm)?;
        if fit.within(tol) {
            accepted = Some(fit);
            break;
        }
        if best.as_ref().is_none_or(|b| fit.residual < b.residual) {
            best = Some(fit);
        }
    }
    let fit = match (accepted, best, fallback) {
        (Some(fit), _, _) => fit,
        (None, Some(best), _) => {
            return Ok(CopyVerdict::NotCopyForm {
                residual: best.residual,
                reason: format!(
                    "conditional blocks are not jointly diagonal (off-diagonal mass {:.3e} relative to ‖B‖)",
                    best.leakage
                ),
            })
        }
        // Every draw was degenerate. Still fine if the blocks are jointly diagonal.
        (None, None, Some(v)) => {
            let fit = fit_basis(op, &blocks, v, norm)?;
            if !fit.within(tol) {
                return Err(Error::RetriesExhausted {
                    retries: tol.max_retries,
                });
            }
            fit
        }
        (None, None, None) => unreachable!("max_retries ≥ 1"),
    };
    let residual = fit.residual;
    let mut decomposition = fit.decomposition;

    for (i, br) in decomposition.branches.iter_mut().enumerate() {
        let image = br.branch_op.apply(ready)?;
        let value = ready.inner(&image);
        let deviation = image.distance(&ready.scale(value)) / norm;
        if deviation > tol.residual_tol {
            return Ok(CopyVerdict::NotCopyForm {
                residual,
                reason: format!(
                    "ready state is not an eigenvector of branch operator {} (relative deviation {deviation:.3e})",
                    i + 1
                ),
            });
        }
        br.record_value = value;
    }

    let degenerate = decomposition.degenerate_pairs(tol.degeneracy_gap);
    if let Some(&(i, j)) = degenerate.first() {
        return Ok(CopyVerdict::NotCopyForm {
            residual,
            reason: format!(
                "degenerate record values: branches {} and {} share β = {}",
                i + 1,
                j + 1,
                decomposition.branches[i].record_value
            ),
        });
    }

    Ok(CopyVerdict::CopyForm(decomposition.canonicalized()))
}

struct BasisFit {
    decomposition: EverettDecomposition,
    leakage: f64,
    residual: f64,
}

impl BasisFit {
    fn within(&self, tol: &ToleranceProfile) -> bool {
        self.leakage <= tol.residual_tol && self.residual <= tol.residual_tol
    }
}

/// Read branch operators off the diagonal of `V† C[m][n] V`; everything else is leakage.
fn fit_basis(op: &ComplexOperator, blocks: &[Vec<ComplexOperator>], v: ComplexOperator, norm: f64) -> Result<BasisFit> {
    let m = v.dim();
    let v_adj = v.adjoint();
    let mut branch_ops = vec![ComplexOperator::zeros(Space::O, m + 1); m];
    let mut off_diag_sq = 0.0;
    for (o, row) in blocks.iter().enumerate() {
        for (o2, blk) in row.iter().enumerate() {
            let d = v_adj.matmul(&blk.matmul(&v)?)?;
            for r in 0..m {
                for c in 0..m {
                    if r == c {
                        branch_ops[r][(o, o2)] = d[(r, r)];
                    } else {
                        off_diag_sq += d[(r, c)].norm_sqr();
                    }
                }
            }
        }
    }
    let branches = branch_ops
        .into_iter()
        .enumerate()
        .map(|(i, branch_op)| {
            let vector = v.column(i);
            EverettBranch {
                branch_op,
                projector: vector.outer_self(),
                vector,
                record_value: ZERO,
            }
        })
        .collect();
    let mut decomposition = EverettDecomposition {
        branches,
        residual: 0.0,
        canonical: false,
    };
    decomposition.residual = frob_dist(op, &decomposition.reconstruct()?)? / norm;
    Ok(BasisFit {
        residual: decomposition.residual,
        leakage: off_diag_sq.sqrt() / norm,
        decomposition,
    })
}

/// Relabeling `π` with `d2[i] ≈ d1[π(i)]` in both projector and branch operator.
pub fn permutation_equivalent(d1: &EverettDecomposition, d2: &EverettDecomposition, tol: f64) -> Option<Vec<usize>> {
    if d1.m() != d2.m() {
        return None;
    }
    let mut used = vec![false; d1.m()];
    let mut perm = Vec::with_capacity(d2.m());
    for b2 in &d2.branches {
        let found = d1.branches.iter().enumerate().position(|(j, b1)| {
            !used[j]
                && frob_dist(&b1.projector, &b2.projector).is_ok_and(|d| d <= tol)
                && frob_dist(&b1.branch_op, &b2.branch_op).is_ok_and(|d| d <= tol)
        })?;
        used[found] = true;
        perm.push(found);
    }
    Some(perm)
}

/// `Σᵢ valuesᵢ |vᵢ⟩⟨vᵢ|`.
pub fn observable_in_basis(vectors: &[ComplexVector], values: &[f64]) -> Result<ComplexOperator> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidDimension("empty basis".into()))?;
    if vectors.len() != values.len() {
        return Err(Error::DimensionMismatch("one value per basis vector is required".into()));
    }
    let mut out = ComplexOperator::zeros(first.space(), first.dim());
    for (v, &x) in vectors.iter().zip(values) {
        out.add_assign_scaled(&v.outer_self(), C64::new(x, 0.0))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityReport {
    /// False when the evolved operator has no Everett-copy structure.
    pub applicable: bool,
    /// Extracted projectors coincide with the pointer projectors up to relabeling.
    pub projector_match: bool,
    /// `‖[a, a′]‖_F` for `a′` diagonal in the extracted basis.
    pub commutator_norm: Option<f64>,
    pub note: String,
}

/// Any observable `a′` read off from the branch structure of an evolved
/// apparatus operator commutes with the pointer observable `a`.
pub fn noncommuting_impossibility_check(
    model: &MeasurementModel,
    a: &ComplexOperator,
    d: &ComplexOperator,
    tol: &ToleranceProfile,
    seed: u64,
) -> Result<ImpossibilityReport> {
    let m = model.m();
    if a.space() != Space::S || a.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "pointer observable must be S({m}), got {}({})",
            a.space(),
            a.dim()
        )));
    }
    let mut diag = Vec::with_capacity(m);
    for r in 0..m {
        for c in 0..m {
            if r != c && a[(r, c)].norm() > tol.eq_tol {
                return Err(Error::Precondition(
                    "pointer observable must be diagonal in the |S:i⟩ basis".into(),
                ));
            }
        }
        diag.push(a[(r, r)]);
    }
    for i in 0..m {
        for j in i + 1..m {
            if (diag[i] - diag[j]).norm() <= tol.degeneracy_gap {
                return Err(Error::DegenerateSpectrum {
                    which: "alpha",
                    first: i,
                    second: j,
                });
            }
        }
    }

    let evolved = evolve_operator(model, d)?;
    let decomposition = match extract_copy_structure(&evolved, &model.ready_state(), tol, seed)? {
        CopyVerdict::CopyForm(dec) => dec,
        CopyVerdict::NotCopyForm { reason, .. } => {
            return Ok(ImpossibilityReport {
                applicable: false,
                projector_match: false,
                commutator_norm: None,
                note: format!("not applicable: evolved operator has no copy structure ({reason})"),
            })
        }
    };

    let pointer: Vec<ComplexOperator> = (1..=m).map(|i| pointer_projector(m, i)).collect();
    let mut used = vec![false; m];
    let projector_match = decomposition.branches.iter().all(|br| {
        match pointer
            .iter()
            .enumerate()
            .position(|(j, p)| !used[j] && frob_dist(p, &br.projector).is_ok_and(|x| x <= tol.residual_tol))
        {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    });

    let vectors: Vec<ComplexVector> = decomposition.branches.iter().map(|b| b.vector.clone()).collect();
    let values: Vec<f64> = (1..=m).map(|i| i as f64).collect();
    let a_prime = observable_in_basis(&vectors, &values)?;
    let commutator_norm = a.commutator(&a_prime)?.frob_norm();
    Ok(ImpossibilityReport {
        applicable: true,
        projector_match,
        commutator_norm: Some(commutator_norm),
        note: if projector_match {
            "extracted branch basis is the pointer basis".into()
        } else {
            "extracted branch basis differs from the pointer basis".into()
        },
    })
}

/// `(⟨ψ(t)|(b⊗I)|ψ(t)⟩, ⟨ψ(t_in)|b(t)|ψ(t_in)⟩)`.
pub fn expectation_pair(model: &MeasurementModel, b: &ComplexOperator, state: &SystemState) -> Result<(C64, C64)> {
    let initial = model.ready_state().kron(state.vector())?;
    let evolved_state = model.u().apply(&initial)?;
    let schrodinger = embed(model, b)?.sandwich(&evolved_state, &evolved_state)?;
    let heisenberg = evolve_operator(model, b)?.op.sandwich(&initial, &initial)?;
    Ok((schrodinger, heisenberg))
}

/// Absolute difference between the two pictures' expectation values.
pub fn expectation_consistency(model: &MeasurementModel, b: &ComplexOperator, state: &SystemState) -> Result<f64> {
    let (s, h) = expectation_pair(model, b, state)?;
    Ok((s - h).norm())
}
