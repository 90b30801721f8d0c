//! Alternative bases for the post-measurement state and the Schrödinger-picture
//! uniqueness of the measurement bases.
//!
//! An entangled state `Σ ψᵢ |O:i⟩|S:i⟩` can often be rewritten in rotated
//! bases, but the rotated bases do not satisfy M2 for the same `U`. Any pair
//! of bases that does satisfy M2 (with the same ready state) matches the
//! original bases up to a relabeling of branches and unimodular phases on the
//! system vectors.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{branch_form_in, o_ket, s_ket, BranchForm, MeasurementModel};
use crate::tensor::{
    derive_seed, haar_random_unitary_with, ComplexVector, Space, ToleranceProfile, C64, ZERO,
};

/// Overlap magnitude above which a primed vector is taken to coincide with an unprimed one.
pub const MATCH_THRESHOLD: f64 = 1.0 - 1e-6;
/// Overlap magnitude below which a primed vector is taken to be orthogonal to an unprimed one.
pub const ORTHOGONAL_THRESHOLD: f64 = 1e-6;

/// Candidate bases `|S′:i⟩` (i = 1..M) and `|O′:i⟩` (i = 0..M), stored zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPair {
    s_basis: Vec<ComplexVector>,
    o_basis: Vec<ComplexVector>,
}

fn check_orthonormal(name: &str, basis: &[ComplexVector], space: Space, dim: usize, tol: f64) -> Result<()> {
    if basis.len() != dim {
        return Err(Error::InvalidBasis(format!(
            "{name} basis needs {dim} vectors, got {}",
            basis.len()
        )));
    }
    for (i, v) in basis.iter().enumerate() {
        if v.space() != space || v.dim() != dim {
            return Err(Error::InvalidBasis(format!(
                "{name} vector {i} must be {space}({dim}), got {}({})",
                v.space(),
                v.dim()
            )));
        }
        for (j, w) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (v.inner(w) - C64::new(target, 0.0)).norm();
            if dev > tol {
                return Err(Error::InvalidBasis(format!(
                    "{name} vectors {i} and {j} violate orthonormality by {dev:e}"
                )));
            }
        }
    }
    Ok(())
}

impl BasisPair {
    pub fn new(s_basis: Vec<ComplexVector>, o_basis: Vec<ComplexVector>, tol: &ToleranceProfile) -> Result<Self> {
        let m = s_basis.len();
        if m < 2 {
            return Err(Error::InvalidBasis("system basis needs at least two vectors".into()));
        }
        check_orthonormal("system", &s_basis, Space::S, m, tol.eq_tol)?;
        check_orthonormal("apparatus", &o_basis, Space::O, m + 1, tol.eq_tol)?;
        let ready_dev = o_basis[0].distance(&o_ket(m, 0));
        if ready_dev > tol.eq_tol {
            return Err(Error::InvalidBasis(format!(
                "primed ready state differs from |O:0⟩ by {ready_dev:e}"
            )));
        }
        Ok(Self { s_basis, o_basis })
    }

    /// The model's own bases `|S:i⟩`, `|O:i⟩`.
    pub fn unprimed(m: usize) -> Self {
        Self {
            s_basis: (1..=m).map(|i| s_ket(m, i)).collect(),
            o_basis: (0..=m).map(|i| o_ket(m, i)).collect(),
        }
    }

    /// Relabel and rephase the unprimed bases:
    /// `|S′:i⟩ = aᵢ|S:π(i)⟩`, `|O′:i⟩ = |O:π(i)⟩`.
    pub fn from_witness(m: usize, witness: &EquivalenceWitness) -> Result<Self> {
        if !witness.is_valid(m, 1e-12) {
            return Err(Error::InvalidBasis("witness is not a phased permutation".into()));
        }
        let s_basis = witness
            .permutation
            .iter()
            .zip(&witness.phases)
            .map(|(&p, &a)| s_ket(m, p + 1).scale(a))
            .collect();
        let mut o_basis = vec![o_ket(m, 0)];
        o_basis.extend(witness.permutation.iter().map(|&p| o_ket(m, p + 1)));
        Ok(Self { s_basis, o_basis })
    }

    pub fn m(&self) -> usize {
        self.s_basis.len()
    }

    pub fn s_basis(&self) -> &[ComplexVector] {
        &self.s_basis
    }

    pub fn o_basis(&self) -> &[ComplexVector] {
        &self.o_basis
    }

    /// `|O′:i⟩|S′:i⟩` for branches `i = 1..M`, zero-based.
    pub fn branch_kets(&self) -> Vec<ComplexVector> {
        self.s_basis
            .iter()
            .zip(&self.o_basis[1..])
            .map(|(s, o)| o.kron(s).expect("shapes fixed at construction"))
            .collect()
    }
}

/// Hadamard-rotated bases for `M = 2`:
/// `|S′:1,2⟩ = (|S:1⟩ ± |S:2⟩)/√2`, `|O′:0⟩ = |O:0⟩`, `|O′:1,2⟩ = (|O:1⟩ ± |O:2⟩)/√2`.
pub fn hadamard_primed_bases(model: &MeasurementModel) -> Result<BasisPair> {
    if model.m() != 2 {
        return Err(Error::InvalidDimension(format!(
            "the Hadamard-rotated example needs m = 2, got {}",
            model.m()
        )));
    }
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let plus = |a: ComplexVector, b: ComplexVector| a.add(&b).scale(h);
    let minus = |a: ComplexVector, b: ComplexVector| a.sub(&b).scale(h);
    let s_basis = vec![plus(s_ket(2, 1), s_ket(2, 2)), minus(s_ket(2, 1), s_ket(2, 2))];
    let o_basis = vec![
        o_ket(2, 0),
        plus(o_ket(2, 1), o_ket(2, 2)),
        minus(o_ket(2, 1), o_ket(2, 2)),
    ];
    BasisPair::new(s_basis, o_basis, model.tolerances())
}

/// `U(|O:0⟩⊗|S′:i⟩)` for each branch.
fn evolved_primed_inputs(model: &MeasurementModel, bp: &BasisPair) -> Vec<ComplexVector> {
    let ready = model.ready_state();
    bp.s_basis
        .iter()
        .map(|s| {
            let input = ready.kron(s).expect("shapes fixed by model");
            model.u().apply(&input).expect("composite operator")
        })
        .collect()
}

/// `‖U(|O:0⟩⊗|S′:i⟩) − |O′:i⟩⊗|S′:i⟩‖` per branch.
pub fn verify_m2_for_basis(model: &MeasurementModel, bp: &BasisPair) -> Vec<f64> {
    evolved_primed_inputs(model, bp)
        .iter()
        .zip(bp.branch_kets())
        .map(|(out, target)| out.distance(&target))
        .collect()
}

/// `⟨O′:i,S′:i| U |O:0,S′:i⟩` per branch.
pub fn m2_overlaps(model: &MeasurementModel, bp: &BasisPair) -> Vec<C64> {
    evolved_primed_inputs(model, bp)
        .iter()
        .zip(bp.branch_kets())
        .map(|(out, target)| target.inner(out))
        .collect()
}

/// Expand a composite state in the branch kets `|O′:i⟩|S′:i⟩` of a basis pair.
pub fn rewrite_in_basis(psi_t: &ComplexVector, bp: &BasisPair, tol: &ToleranceProfile) -> BranchForm {
    branch_form_in(psi_t, &bp.branch_kets(), tol)
}

/// Relabeling `π` and phases `aᵢ` relating primed to unprimed bases.
///
/// `permutation[i] = j` means primed branch `i` is unprimed branch `j`
/// (both zero-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceWitness {
    pub permutation: Vec<usize>,
    pub phases: Vec<C64>,
}

impl EquivalenceWitness {
    pub fn identity(m: usize) -> Self {
        Self {
            permutation: (0..m).collect(),
            phases: vec![C64::new(1.0, 0.0); m],
        }
    }

    pub fn is_valid(&self, m: usize, tol: f64) -> bool {
        if self.permutation.len() != m || self.phases.len() != m {
            return false;
        }
        let mut seen = vec![false; m];
        for &p in &self.permutation {
            if p >= m || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        self.phases.iter().all(|a| (a.norm() - 1.0).abs() <= tol)
    }

    /// Phase angles in `(−π, π]`.
    pub fn phase_angles(&self) -> Vec<f64> {
        self.phases.iter().map(|a| principal_angle(a.arg())).collect()
    }
}

pub fn principal_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisMatch {
    Equivalent(EquivalenceWitness),
    NotEquivalent { reason: String },
}

impl BasisMatch {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, BasisMatch::Equivalent(_))
    }
}

/// Decide whether `bp` is a relabeled, rephased copy of the unprimed bases.
///
/// Each primed system vector must overlap exactly one unprimed vector with
/// magnitude above [`MATCH_THRESHOLD`] and all others below
/// [`ORTHOGONAL_THRESHOLD`]; the matching apparatus vectors must then coincide
/// with the unprimed ones within `tol` with no phase freedom.
pub fn match_to_unprimed(model: &MeasurementModel, bp: &BasisPair, tol: f64) -> BasisMatch {
    let m = model.m();
    if bp.m() != m {
        return BasisMatch::NotEquivalent {
            reason: format!("basis pair has {} branches, model has {m}", bp.m()),
        };
    }
    let mut permutation = Vec::with_capacity(m);
    let mut phases = Vec::with_capacity(m);
    let mut used = vec![false; m];
    for (i, primed) in bp.s_basis.iter().enumerate() {
        let overlaps: Vec<C64> = (1..=m).map(|j| s_ket(m, j).inner(primed)).collect();
        let (best, best_mag) = overlaps
            .iter()
            .enumerate()
            .map(|(j, z)| (j, z.norm()))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_mag <= MATCH_THRESHOLD {
            return BasisMatch::NotEquivalent {
                reason: format!(
                    "primed system vector {} has largest overlap {best_mag:.12} with any unprimed vector",
                    i + 1
                ),
            };
        }
        if let Some((j, z)) = overlaps
            .iter()
            .enumerate()
            .find(|&(j, z)| j != best && z.norm() >= ORTHOGONAL_THRESHOLD)
        {
            return BasisMatch::NotEquivalent {
                reason: format!(
                    "primed system vector {} overlaps unprimed vector {} with magnitude {:e}",
                    i + 1,
                    j + 1,
                    z.norm()
                ),
            };
        }
        if used[best] {
            return BasisMatch::NotEquivalent {
                reason: format!("unprimed branch {} matched twice", best + 1),
            };
        }
        used[best] = true;
        let a = overlaps[best];
        if (a.norm() - 1.0).abs() > tol {
            return BasisMatch::NotEquivalent {
                reason: format!("phase for primed branch {} has modulus {}", i + 1, a.norm()),
            };
        }
        permutation.push(best);
        phases.push(a);
    }
    for (i, &p) in permutation.iter().enumerate() {
        let dev = bp.o_basis[i + 1].distance(&o_ket(m, p + 1));
        if dev > tol {
            return BasisMatch::NotEquivalent {
                reason: format!(
                    "primed record state {} differs from |O:{}⟩ by {dev:e}",
                    i + 1,
                    p + 1
                ),
            };
        }
    }
    BasisMatch::Equivalent(EquivalenceWitness { permutation, phases })
}

/// Tally from [`random_basis_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub trials: usize,
    /// Pairs satisfying M2 within the search tolerance.
    pub satisfying: usize,
    /// Pairs satisfying M2 yet not equivalent to the unprimed bases.
    pub counterexamples: usize,
}

/// Random orthonormal bases with `|O′:0⟩ = |O:0⟩` held exact.
pub fn random_basis_pair(m: usize, seed: u64) -> BasisPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us = haar_random_unitary_with(Space::S, m, &mut rng);
    let uo = haar_random_unitary_with(Space::S, m, &mut rng);
    let s_basis = (0..m).map(|c| us.column(c)).collect();
    let mut o_basis = vec![o_ket(m, 0)];
    o_basis.extend((0..m).map(|c| {
        let col = uo.column(c);
        let mut data = vec![ZERO];
        data.extend_from_slice(col.data());
        ComplexVector::new(Space::O, data).expect("finite")
    }));
    BasisPair { s_basis, o_basis }
}

/// Count pairs that satisfy M2 within `tol` but are not equivalent to the
/// unprimed bases, among `trials` Haar-random basis pairs.
pub fn random_basis_search(model: &MeasurementModel, trials: usize, seed: u64, tol: f64) -> Result<SearchOutcome> {
    let candidates = (0..trials).map(|t| random_basis_pair(model.m(), derive_seed(seed, t as u64)));
    search_candidates(model, candidates, tol, trials)
}

/// Same tally over an explicit candidate set.
pub fn search_candidates(
    model: &MeasurementModel,
    candidates: impl IntoIterator<Item = BasisPair>,
    tol: f64,
    expected_trials: usize,
) -> Result<SearchOutcome> {
    if expected_trials == 0 {
        return Err(Error::InvalidDimension("at least one trial is required".into()));
    }
    let mut outcome = SearchOutcome {
        trials: 0,
        satisfying: 0,
        counterexamples: 0,
    };
    for bp in candidates {
        outcome.trials += 1;
        let worst = verify_m2_for_basis(model, &bp).into_iter().fold(0.0, f64::max);
        if worst <= tol {
            outcome.satisfying += 1;
            if !match_to_unprimed(model, &bp, tol).is_equivalent() {
                outcome.counterexamples += 1;
            }
        }
    }
    Ok(outcome)
}

/// Every relabeling of the branches combined with random phases; all of them
/// satisfy M2 exactly.
pub fn adversarial_witnesses(m: usize, seed: u64) -> Vec<EquivalenceWitness> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perms = Vec::new();
    permutations(&mut (0..m).collect::<Vec<_>>(), 0, &mut perms);
    perms
        .into_iter()
        .map(|permutation| {
            let phases = (0..m)
                .map(|_| C64::from_polar(1.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
                .collect();
            EquivalenceWitness { permutation, phases }
        })
        .collect()
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{schrodinger_evolve, SystemState};
    use crate::tensor::{I, ONE};

    fn model2() -> MeasurementModel {
        MeasurementModel::standard(2, 1.0).unwrap()
    }

    #[test]
    fn hadamard_bases_are_orthonormal() {
        let bp = hadamard_primed_bases(&model2()).unwrap();
        assert!(bp.s_basis()[0].inner(&bp.s_basis()[1]).norm() <= 1e-16);
        let overlap = s_ket(2, 1).inner(&bp.s_basis()[0]);
        assert!((overlap - C64::new(FRAC_1_SQRT_2, 0.0)).norm() <= 1e-15);
    }

    #[test]
    fn hadamard_needs_m2() {
        let model = MeasurementModel::standard(3, 1.0).unwrap();
        assert!(matches!(hadamard_primed_bases(&model), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn rewrite_in_primed_bases() {
        let model = model2();
        let psi = schrodinger_evolve(&model, &SystemState::uniform(2)).unwrap();
        let bp = hadamard_primed_bases(&model).unwrap();
        let c = rewrite_in_basis(&psi, &bp, model.tolerances());
        let c = c.coefficients().expect("branch form in primed bases");
        for z in c {
            assert!((z - C64::new(FRAC_1_SQRT_2, 0.0)).norm() <= 1e-12);
        }
    }

    #[test]
    fn primed_bases_violate_m2() {
        let model = model2();
        let bp = hadamard_primed_bases(&model).unwrap();
        let res = verify_m2_for_basis(&model, &bp);
        // branch 1: overlap 1/√2, so ‖x − y‖² = 2 − √2
        assert!((res[0] - (2.0 - 2f64.sqrt()).sqrt()).abs() <= 1e-10);
        // branch 2: U|O:0,S′:2⟩ = (|O′:1,S′:2⟩ + |O′:2,S′:1⟩)/√2 is orthogonal to the target
        assert!((res[1] - 2f64.sqrt()).abs() <= 1e-10);
        let overlaps = m2_overlaps(&model, &bp);
        assert!((overlaps[0] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() <= 1e-12);
        assert!(overlaps[1].norm() <= 1e-12);
        let unprimed = verify_m2_for_basis(&model, &BasisPair::unprimed(2));
        assert!(unprimed.iter().all(|r| *r <= 1e-10));
    }

    #[test]
    fn primed_branch_two_swaps_partners() {
        let model = model2();
        let bp = hadamard_primed_bases(&model).unwrap();
        let out = model
            .u()
            .apply(&model.ready_state().kron(&bp.s_basis()[1]).unwrap())
            .unwrap();
        let expected = bp.o_basis()[1]
            .kron(&bp.s_basis()[1])
            .unwrap()
            .add(&bp.o_basis()[2].kron(&bp.s_basis()[0]).unwrap())
            .scale(C64::new(FRAC_1_SQRT_2, 0.0));
        assert!(out.distance(&expected) <= 1e-12);
    }

    #[test]
    fn matcher_cases() {
        let model = model2();
        match match_to_unprimed(&model, &BasisPair::unprimed(2), 1e-10) {
            BasisMatch::Equivalent(w) => assert_eq!(w, EquivalenceWitness::identity(2)),
            other => panic!("{other:?}"),
        }

        let swapped = BasisPair::new(
            vec![s_ket(2, 2).scale(I), s_ket(2, 1)],
            vec![o_ket(2, 0), o_ket(2, 2), o_ket(2, 1)],
            model.tolerances(),
        )
        .unwrap();
        match match_to_unprimed(&model, &swapped, 1e-10) {
            BasisMatch::Equivalent(w) => {
                assert_eq!(w.permutation, vec![1, 0]);
                assert_eq!(w.phases, vec![I, ONE]);
                assert_eq!(w.phase_angles(), vec![std::f64::consts::FRAC_PI_2, 0.0]);
            }
            other => panic!("{other:?}"),
        }

        let bp = hadamard_primed_bases(&model).unwrap();
        assert!(!match_to_unprimed(&model, &bp, 1e-10).is_equivalent());
    }

    #[test]
    fn matcher_rejects_phased_records() {
        // system side matches but the record state carries a phase
        let model = model2();
        let bp = BasisPair::new(
            vec![s_ket(2, 1), s_ket(2, 2)],
            vec![o_ket(2, 0), o_ket(2, 1).scale(-ONE), o_ket(2, 2)],
            model.tolerances(),
        )
        .unwrap();
        assert!(!match_to_unprimed(&model, &bp, 1e-10).is_equivalent());
        assert!(verify_m2_for_basis(&model, &bp)[0] > 1.0);
    }

    #[test]
    fn basis_pair_validation() {
        let tol = ToleranceProfile::default();
        let bad_ready = BasisPair::new(
            vec![s_ket(2, 1), s_ket(2, 2)],
            vec![o_ket(2, 1), o_ket(2, 0), o_ket(2, 2)],
            &tol,
        );
        assert!(matches!(bad_ready, Err(Error::InvalidBasis(_))));
        let not_orthogonal = BasisPair::new(
            vec![s_ket(2, 1), s_ket(2, 1)],
            vec![o_ket(2, 0), o_ket(2, 1), o_ket(2, 2)],
            &tol,
        );
        assert!(not_orthogonal.is_err());
    }

    #[test]
    fn witness_round_trip() {
        for m in [2, 3, 4] {
            let model = MeasurementModel::standard(m, 1.0).unwrap();
            for w in adversarial_witnesses(m, 11) {
                let bp = BasisPair::from_witness(m, &w).unwrap();
                assert!(verify_m2_for_basis(&model, &bp).iter().all(|r| *r <= 1e-10));
                match match_to_unprimed(&model, &bp, 1e-10) {
                    BasisMatch::Equivalent(got) => {
                        assert_eq!(got.permutation, w.permutation);
                        for (a, b) in got.phases.iter().zip(&w.phases) {
                            assert!((a - b).norm() <= 1e-10);
                        }
                    }
                    other => panic!("{other:?}"),
                }
            }
        }
    }

    #[test]
    fn random_search_finds_nothing() {
        let model = model2();
        let out = random_basis_search(&model, 200, 3, 1e-6).unwrap();
        assert_eq!(out.trials, 200);
        assert_eq!(out.counterexamples, 0);
        assert!(random_basis_search(&model, 0, 3, 1e-6).is_err());
    }

    #[test]
    fn random_pairs_are_valid_bases() {
        let bp = random_basis_pair(3, 77);
        assert!(BasisPair::new(bp.s_basis().to_vec(), bp.o_basis().to_vec(), &ToleranceProfile::default()).is_ok());
    }

    #[test]
    fn principal_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(principal_angle(-PI), PI);
        assert!((principal_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
