//! Ideal measurement models: interaction Hamiltonian, evolution, and checks of
//! the measurement conditions.
//!
//! The interaction is `H = Σᵢ hᵢ ⊗ Pᵢ` with `hᵢ = iκ(|O:i⟩⟨O:0| − |O:0⟩⟨O:i|)`
//! and `Pᵢ = |S:i⟩⟨S:i|`. With `κ·duration = π/2` each `uᵢ = exp(−i hᵢ duration)`
//! rotates the ready state `|O:0⟩` onto the record state `|O:i⟩`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    complex_normal, composite_index, kron, unitary_exp, ComplexOperator, ComplexVector, Space,
    ToleranceProfile, C64, I,
};

/// Measurement conditions, named as in the literature on ideal measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    M1,
    M2,
    M3,
    #[serde(rename = "M3prime")]
    M3Prime,
    M4,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::M1 => "M1",
            Condition::M2 => "M2",
            Condition::M3 => "M3",
            Condition::M3Prime => "M3prime",
            Condition::M4 => "M4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    /// Per-index residuals; for M2 indexed by branch, for M4 by apparatus state.
    pub detail: Vec<f64>,
    /// Index pairs whose eigenvalues failed the degeneracy gap.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

/// `|S:i⟩` for `i ∈ 1..=m`.
pub fn s_ket(m: usize, i: usize) -> ComplexVector {
    assert!((1..=m).contains(&i), "system label {i} out of range 1..={m}");
    ComplexVector::basis(Space::S, m, i - 1)
}

/// `|O:i⟩` for `i ∈ 0..=m`.
pub fn o_ket(m: usize, i: usize) -> ComplexVector {
    assert!(i <= m, "apparatus label {i} out of range 0..={m}");
    ComplexVector::basis(Space::O, m + 1, i)
}

/// `|O:i⟩|S:i⟩` for `i ∈ 1..=m`.
pub fn branch_ket(m: usize, i: usize) -> ComplexVector {
    ComplexVector::basis(Space::OS, m * (m + 1), composite_index(m, i, i - 1))
}

/// `Pᵢ = |S:i⟩⟨S:i|`, `i ∈ 1..=m`.
pub fn pointer_projector(m: usize, i: usize) -> ComplexOperator {
    s_ket(m, i).outer_self()
}

/// `hᵢ = iκ(|O:i⟩⟨O:0| − |O:0⟩⟨O:i|)`, `i ∈ 1..=m`.
pub fn branch_generator(m: usize, i: usize, kappa: f64) -> ComplexOperator {
    let mut h = ComplexOperator::zeros(Space::O, m + 1);
    h[(i, 0)] = I * kappa;
    h[(0, i)] = -I * kappa;
    h
}

/// `H = Σᵢ hᵢ ⊗ Pᵢ`.
pub fn build_interaction_hamiltonian(m: usize, kappa: f64) -> Result<ComplexOperator> {
    if m < 2 {
        return Err(Error::InvalidDimension(format!("system dimension must be ≥ 2, got {m}")));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidDimension(format!("coupling must be positive, got {kappa}")));
    }
    let mut h = ComplexOperator::zeros(Space::OS, m * (m + 1));
    for i in 1..=m {
        let term = kron(&branch_generator(m, i, kappa), &pointer_projector(m, i))?;
        h.add_assign_scaled(&term, C64::new(1.0, 0.0))?;
    }
    Ok(h)
}

fn check_distinct(which: &'static str, values: &[f64], gap: f64) -> Result<()> {
    for (a, x) in values.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite);
        }
        for (b, y) in values.iter().enumerate().skip(a + 1) {
            if (x - y).abs() <= gap {
                return Err(Error::DegenerateSpectrum {
                    which,
                    first: a,
                    second: b,
                });
            }
        }
    }
    Ok(())
}

/// An ideal measurement model with its derived evolution operator.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    m: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    kappa: f64,
    duration: f64,
    hamiltonian: ComplexOperator,
    u: ComplexOperator,
    u_branches: Vec<ComplexOperator>,
    tol: ToleranceProfile,
}

impl MeasurementModel {
    /// Builds the model with `κ = π/(2·duration)` and checks M2 on the result.
    pub fn build(
        m: usize,
        duration: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        tol: &ToleranceProfile,
    ) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidDimension(format!("system dimension must be ≥ 2, got {m}")));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidDimension(format!("duration must be positive, got {duration}")));
        }
        if alpha.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "alpha needs {m} values, got {}",
                alpha.len()
            )));
        }
        if beta.len() != m + 1 {
            return Err(Error::DimensionMismatch(format!(
                "beta needs {} values, got {}",
                m + 1,
                beta.len()
            )));
        }
        check_distinct("alpha", &alpha, tol.degeneracy_gap)?;
        check_distinct("beta", &beta, tol.degeneracy_gap)?;

        let kappa = FRAC_PI_2 / duration;
        let hamiltonian = build_interaction_hamiltonian(m, kappa)?;
        let u = unitary_exp(&hamiltonian, duration, tol)?;
        let u_branches = (1..=m)
            .map(|i| unitary_exp(&branch_generator(m, i, kappa), duration, tol))
            .collect::<Result<Vec<_>>>()?;
        let model = Self {
            m,
            alpha,
            beta,
            kappa,
            duration,
            hamiltonian,
            u,
            u_branches,
            tol: *tol,
        };
        let report = verify_condition_m2(&model, tol);
        if !report.passed {
            return Err(Error::ConditionM2Violation {
                residual: report.residual,
            });
        }
        Ok(model)
    }

    /// Default eigenvalues `αᵢ = i` (i = 1..m) and `βᵢ = i` (i = 0..m).
    pub fn standard(m: usize, duration: f64) -> Result<Self> {
        Self::build(
            m,
            duration,
            default_alpha(m),
            default_beta(m),
            &ToleranceProfile::default(),
        )
    }

    /// Random distinct `α`, `β` drawn uniformly from `[-5, 5]`, separated by at least 0.1.
    pub fn random<R: Rng + ?Sized>(m: usize, duration: f64, rng: &mut R) -> Result<Self> {
        let alpha = random_distinct(m, rng);
        let beta = random_distinct(m + 1, rng);
        Self::build(m, duration, alpha, beta, &ToleranceProfile::default())
    }

    /// Same model with the evolution operator replaced; no M2 check is made.
    pub fn with_evolution(&self, u: ComplexOperator) -> Result<Self> {
        if u.space() != Space::OS || u.dim() != self.composite_dim() {
            return Err(Error::DimensionMismatch(format!(
                "replacement evolution must be OS({}), got {}({})",
                self.composite_dim(),
                u.space(),
                u.dim()
            )));
        }
        Ok(Self { u, ..self.clone() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim_o(&self) -> usize {
        self.m + 1
    }

    pub fn composite_dim(&self) -> usize {
        self.m * (self.m + 1)
    }

    pub fn ready_index(&self) -> usize {
        0
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn hamiltonian(&self) -> &ComplexOperator {
        &self.hamiltonian
    }

    pub fn u(&self) -> &ComplexOperator {
        &self.u
    }

    /// `uᵢ` for `i = 1..=m`, stored zero-based.
    pub fn u_branches(&self) -> &[ComplexOperator] {
        &self.u_branches
    }

    pub fn tolerances(&self) -> &ToleranceProfile {
        &self.tol
    }

    /// `a = Σ αᵢ Pᵢ` on S.
    pub fn pointer_observable(&self) -> ComplexOperator {
        ComplexOperator::real_diagonal(Space::S, &self.alpha)
    }

    /// `b = Σ βᵢ |O:i⟩⟨O:i|` on O.
    pub fn record_observable(&self) -> ComplexOperator {
        ComplexOperator::real_diagonal(Space::O, &self.beta)
    }

    pub fn ready_state(&self) -> ComplexVector {
        o_ket(self.m, 0)
    }

    pub fn label(&self) -> String {
        format!("m={};duration={}", self.m, self.duration)
    }
}

pub fn default_alpha(m: usize) -> Vec<f64> {
    (1..=m).map(|i| i as f64).collect()
}

pub fn default_beta(m: usize) -> Vec<f64> {
    (0..=m).map(|i| i as f64).collect()
}

pub fn random_distinct<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let x: f64 = rng.gen_range(-5.0..5.0);
        if out.iter().all(|y| (x - y).abs() >= 0.1) {
            out.push(x);
        }
    }
    out
}

/// Initial system state `Σ ψᵢ |S:i⟩`, normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    psi: ComplexVector,
}

impl SystemState {
    pub fn new(amplitudes: Vec<C64>, tol: &ToleranceProfile) -> Result<Self> {
        let psi = ComplexVector::new(Space::S, amplitudes)?;
        let norm = psi.norm();
        if (norm - 1.0).abs() > tol.eq_tol {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { psi })
    }

    pub fn uniform(m: usize) -> Self {
        let a = C64::new(1.0 / (m as f64).sqrt(), 0.0);
        Self {
            psi: ComplexVector::new(Space::S, vec![a; m]).expect("finite"),
        }
    }

    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        let raw: Vec<C64> = (0..m).map(|_| complex_normal(rng)).collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Self {
            psi: ComplexVector::new(Space::S, raw.into_iter().map(|z| z / norm).collect())
                .expect("finite"),
        }
    }

    pub fn m(&self) -> usize {
        self.psi.dim()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.psi.data()
    }

    pub fn vector(&self) -> &ComplexVector {
        &self.psi
    }
}

/// Condition M2: `U(|O:0⟩⊗|S:i⟩) = |O:i⟩⊗|S:i⟩` for every branch.
pub fn verify_condition_m2(model: &MeasurementModel, tol: &ToleranceProfile) -> ConditionReport {
    let m = model.m;
    let ready = o_ket(m, 0);
    let detail: Vec<f64> = (1..=m)
        .map(|i| {
            let input = ready.kron(&s_ket(m, i)).expect("shapes fixed by m");
            let out = model.u.apply(&input).expect("composite operator");
            out.distance(&branch_ket(m, i))
        })
        .collect();
    let residual = detail.iter().copied().fold(0.0, f64::max);
    ConditionReport {
        condition: Condition::M2,
        passed: residual <= tol.eq_tol,
        residual,
        tolerance: tol.eq_tol,
        detail,
        degenerate_pairs: Vec::new(),
    }
}

/// `U(|O:0⟩ ⊗ ψ)` for an arbitrary (not necessarily normalized) system vector.
pub fn evolve_unnormalized(model: &MeasurementModel, psi: &ComplexVector) -> Result<ComplexVector> {
    if psi.space() != Space::S || psi.dim() != model.m {
        return Err(Error::DimensionMismatch(format!(
            "expected an S({}) vector, got {}({})",
            model.m,
            psi.space(),
            psi.dim()
        )));
    }
    let initial = model.ready_state().kron(psi)?;
    model.u.apply(&initial)
}

/// Schrödinger evolution of the product state `|O:0⟩ ⊗ |S;ψ⟩`.
pub fn schrodinger_evolve(model: &MeasurementModel, state: &SystemState) -> Result<ComplexVector> {
    let norm = state.psi.norm();
    if (norm - 1.0).abs() > model.tol.eq_tol {
        return Err(Error::NotNormalized { norm });
    }
    evolve_unnormalized(model, &state.psi)
}

/// Outcome of checking a composite state for branch form.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchForm {
    /// Coefficients `cᵢ` of `Σ cᵢ |O:i⟩|S:i⟩`, zero-based by branch.
    Branches(Vec<C64>),
    NotBranchForm { residual: f64 },
}

impl BranchForm {
    pub fn coefficients(&self) -> Option<&[C64]> {
        match self {
            BranchForm::Branches(c) => Some(c),
            BranchForm::NotBranchForm { .. } => None,
        }
    }
}

/// Project onto explicit pairs `|O:i⟩|S:i⟩` (given as product kets) and test
/// whether the state is exhausted by them.
pub fn branch_form_in(psi_t: &ComplexVector, kets: &[ComplexVector], tol: &ToleranceProfile) -> BranchForm {
    let coeffs: Vec<C64> = kets.iter().map(|k| k.inner(psi_t)).collect();
    let mut recon = ComplexVector::zeros(psi_t.space(), psi_t.dim());
    for (k, c) in kets.iter().zip(&coeffs) {
        recon = recon.add(&k.scale(*c));
    }
    let residual = psi_t.distance(&recon);
    let weight: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    if residual <= tol.eq_tol && (weight - 1.0).abs() <= tol.eq_tol {
        BranchForm::Branches(coeffs)
    } else {
        BranchForm::NotBranchForm { residual }
    }
}

/// Condition M3′: is `psi_t = Σ cᵢ |O:i⟩|S:i⟩` in the model's own bases?
pub fn check_branch_form(psi_t: &ComplexVector, model: &MeasurementModel) -> BranchForm {
    let m = model.m;
    if psi_t.space() != Space::OS || psi_t.dim() != model.composite_dim() {
        return BranchForm::NotBranchForm {
            residual: f64::INFINITY,
        };
    }
    let kets: Vec<ComplexVector> = (1..=m).map(|i| branch_ket(m, i)).collect();
    branch_form_in(psi_t, &kets, &model.tol)
}

/// Condition M4: `b|O:i⟩ = βᵢ|O:i⟩` for all `i = 0..=m` with nondegenerate `βᵢ`.
///
/// The `βᵢ` are read off as `⟨O:i|b|O:i⟩`.
pub fn verify_condition_m4(model: &MeasurementModel, b: &ComplexOperator, tol: &ToleranceProfile) -> ConditionReport {
    let m = model.m;
    if b.space() != Space::O || b.dim() != m + 1 {
        return ConditionReport {
            condition: Condition::M4,
            passed: false,
            residual: f64::INFINITY,
            tolerance: tol.eq_tol,
            detail: Vec::new(),
            degenerate_pairs: Vec::new(),
        };
    }
    let mut detail = Vec::with_capacity(m + 1);
    let mut values = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let ket = o_ket(m, i);
        let image = b.apply(&ket).expect("shape checked");
        let value = ket.inner(&image);
        detail.push(image.distance(&ket.scale(value)));
        values.push(value);
    }
    let mut degenerate_pairs = Vec::new();
    for a in 0..values.len() {
        for c in a + 1..values.len() {
            if (values[a] - values[c]).norm() <= tol.degeneracy_gap {
                degenerate_pairs.push((a, c));
            }
        }
    }
    let residual = detail.iter().copied().fold(0.0, f64::max);
    ConditionReport {
        condition: Condition::M4,
        passed: residual <= tol.eq_tol && degenerate_pairs.is_empty(),
        residual,
        tolerance: tol.eq_tol,
        detail,
        degenerate_pairs,
    }
}
