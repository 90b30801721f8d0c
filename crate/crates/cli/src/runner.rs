//! The four report-producing commands.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use everett_core::ambiguity::{
    adversarial_witnesses, hadamard_primed_bases, m2_overlaps, match_to_unprimed, random_basis_search,
    rewrite_in_basis, verify_m2_for_basis, BasisMatch, BasisPair,
};
use everett_core::heisenberg::{
    closed_form_branches, evolve_operator, expectation_pair, extract_copy_structure,
    noncommuting_impossibility_check, permutation_equivalent, CopyVerdict, EverettDecomposition,
    HeisenbergOperator,
};
use everett_core::measurement::{
    check_branch_form, o_ket, random_distinct, schrodinger_evolve, verify_condition_m2, verify_condition_m4,
    BranchForm, MeasurementModel,
};
use everett_core::tensor::derive_seed;
use everett_core::{ComplexOperator, ComplexVector, Space, ToleranceProfile, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Scenario, ScenarioConfig};
use crate::matrix_io::{complex_json, complex_list_json, operator_json, vector_json};
use crate::report::{Check, VerificationReport};
use crate::CliError;

/// M2 tolerance used by the random basis search.
pub const SEARCH_TOL: f64 = 1e-6;
/// Extraction seeds compared per model in the uniqueness sweep.
pub const SEEDS_PER_MODEL: u64 = 5;
/// Cap on the number of relabelings tried in the adversarial set.
pub const MAX_ADVERSARIAL: usize = 720;

const THEOREM_SCHRODINGER: &str = "isolated measurement uniqueness theorem (Schrodinger picture)";
const THEOREM_EXPANSION: &str = "operator expansion uniqueness theorem";
const THEOREM_HEISENBERG: &str = "isolated measurement uniqueness theorem (Heisenberg picture)";
const THEOREM_NONCOMMUTING: &str = "no simultaneous measurement of noncommuting observables";

/// Conditions M1–M4, branch form and picture consistency for one scenario.
pub fn run_verify(config: &ScenarioConfig) -> Result<VerificationReport, CliError> {
    let sc = config.validate()?;
    let Scenario { model, state, tol, .. } = &sc;
    let m = model.m();
    let mut report = VerificationReport::new("verify", sc.resolved.clone());

    // M1: the apparatus has M+1 orthonormal basis states and a ready state.
    let o_basis: Vec<ComplexVector> = (0..=m).map(|i| o_ket(m, i)).collect();
    let gram_defect = gram_defect(&o_basis);
    report.push(Check::within(
        "apparatus_basis",
        "M1",
        gram_defect,
        tol.eq_tol,
        json!({"dim_o": model.dim_o(), "ready_index": model.ready_index()}),
    ));

    let m2 = verify_condition_m2(model, tol);
    report.push(Check::within("evolution_records_pointer_states", "M2", m2.residual, tol.eq_tol, json!({"per_branch": m2.detail})));
    report.push(Check::within(
        "evolution_unitary",
        "M2",
        model.u().unitarity_defect(),
        tol.eq_tol,
        json!({"norm": "frobenius ||U^dagger U - I||"}),
    ));
    let kappa_err = (model.kappa() * model.duration() - FRAC_PI_2).abs();
    report.push(Check::within(
        "coupling_quarter_turn",
        "M2",
        kappa_err,
        tol.eq_tol,
        json!({"kappa": model.kappa(), "duration": model.duration()}),
    ));

    // M3: product initial state with normalized system amplitudes.
    let norm_err = (state.vector().norm() - 1.0).abs();
    report.push(Check::within(
        "initial_product_state",
        "M3",
        norm_err,
        tol.eq_tol,
        json!({"psi": complex_list_json(state.amplitudes())}),
    ));

    let psi_t = schrodinger_evolve(model, state)?;
    let (residual, detail) = match check_branch_form(&psi_t, model) {
        BranchForm::Branches(c) => {
            let err = c
                .iter()
                .zip(state.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            (err, json!({"coefficients": complex_list_json(&c), "branch_form": true}))
        }
        BranchForm::NotBranchForm { residual } => (f64::INFINITY, json!({"branch_form": false, "residual": residual})),
    };
    report.push(Check::within("final_state_branch_form", "M3prime", residual, tol.eq_tol, detail));

    let b = model.record_observable();
    let m4 = verify_condition_m4(model, &b, tol);
    report.push(Check::verdict(
        "record_observable_nondegenerate",
        "M4",
        m4.passed,
        m4.residual,
        tol.eq_tol,
        json!({"beta": model.beta(), "degenerate_pairs": m4.degenerate_pairs}),
    ));

    let (schrodinger, heisenberg) = expectation_pair(model, &b, state)?;
    report.push(Check::within(
        "picture_consistency",
        "M2+M3 (Schrodinger vs Heisenberg expectation)",
        (schrodinger - heisenberg).norm(),
        tol.eq_tol,
        json!({"schrodinger": complex_json(schrodinger), "heisenberg": complex_json(heisenberg)}),
    ));

    let evolved = evolve_operator(model, &b)?;
    let verdict = extract_copy_structure(&evolved, &model.ready_state(), tol, sc.seed)?;
    let oracle = closed_form_branches(model, &b)?;
    let (passed, residual, detail) = copy_form_summary(&verdict, Some(&oracle), tol);
    report.push(Check::verdict("record_observable_copy_form", THEOREM_HEISENBERG, passed, residual, tol.residual_tol, detail));

    Ok(report)
}

fn gram_defect(basis: &[ComplexVector]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.inner(b) - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

fn decomposition_json(dec: &EverettDecomposition) -> Value {
    json!({
        "canonical": dec.canonical,
        "residual": dec.residual,
        "branches": dec.branches.iter().map(|b| json!({
            "record_value": complex_json(b.record_value),
            "vector": vector_json(&b.vector),
            "branch_op": operator_json(&b.branch_op),
        })).collect::<Vec<_>>(),
    })
}

fn copy_form_summary(verdict: &CopyVerdict, oracle: Option<&EverettDecomposition>, tol: &ToleranceProfile) -> (bool, f64, Value) {
    match verdict {
        CopyVerdict::CopyForm(dec) => {
            let matches = oracle.map(|o| permutation_equivalent(o, dec, tol.residual_tol).is_some());
            let mut detail = json!({
                "verdict": "CopyForm",
                "record_values": complex_list_json(&dec.record_values()),
                "projector_defect": dec.projector_defect(),
            });
            if let Some(m) = matches {
                detail["matches_closed_form"] = json!(m);
            }
            let passed = dec.residual <= tol.residual_tol && matches.unwrap_or(true);
            (passed, dec.residual, detail)
        }
        CopyVerdict::NotCopyForm { residual, reason } => (
            false,
            *residual,
            json!({"verdict": "NotCopyForm", "reason": reason}),
        ),
    }
}

/// Rotated-basis example for `M = 2` and the M2 test that rules it out.
pub fn run_demo_ambiguity(config: &ScenarioConfig) -> Result<VerificationReport, CliError> {
    if config.m != 2 {
        return Err(everett_core::Error::InvalidDimension(format!(
            "demo-ambiguity needs m = 2, got {}",
            config.m
        ))
        .into());
    }
    let mut config = config.clone();
    // The example uses equal amplitudes.
    config.psi = None;
    let sc = config.validate()?;
    let (model, tol) = (&sc.model, &sc.tol);
    let mut report = VerificationReport::new("demo-ambiguity", sc.resolved.clone());

    let psi_t = schrodinger_evolve(model, &sc.state)?;
    let unprimed = BasisPair::unprimed(2);
    let primed = hadamard_primed_bases(model)?;
    let equal = C64::new(FRAC_1_SQRT_2, 0.0);

    for (name, bp) in [("unprimed_rewrite", &unprimed), ("primed_rewrite", &primed)] {
        let (residual, detail) = match rewrite_in_basis(&psi_t, bp, tol) {
            BranchForm::Branches(c) => (
                c.iter().map(|z| (z - equal).norm()).fold(0.0, f64::max),
                json!({"coefficients": complex_list_json(&c), "expected": [FRAC_1_SQRT_2, FRAC_1_SQRT_2]}),
            ),
            BranchForm::NotBranchForm { residual } => (f64::INFINITY, json!({"branch_form": false, "residual": residual})),
        };
        report.push(Check::within(name, "M3prime", residual, tol.eq_tol, detail));
    }

    let unprimed_res = verify_m2_for_basis(model, &unprimed);
    report.push(Check::within(
        "unprimed_bases_satisfy_m2",
        "M2",
        unprimed_res.iter().copied().fold(0.0, f64::max),
        tol.eq_tol,
        json!({"per_branch": unprimed_res}),
    ));

    let primed_res = verify_m2_for_basis(model, &primed);
    let overlaps = m2_overlaps(model, &primed);
    let min_res = primed_res.iter().copied().fold(f64::INFINITY, f64::min);
    report.push(Check::verdict(
        "primed_bases_violate_m2",
        "M2",
        min_res > tol.eq_tol,
        min_res,
        tol.eq_tol,
        json!({
            "per_branch": primed_res,
            "overlaps": complex_list_json(&overlaps),
            "expected_branch1": (2.0 - 2f64.sqrt()).sqrt(),
            "expected_branch2": 2f64.sqrt(),
        }),
    ));
    report.push(Check::within(
        "primed_branch1_overlap",
        "M2",
        (overlaps[0] - equal).norm(),
        tol.eq_tol,
        json!({"overlap": complex_json(overlaps[0]), "expected": FRAC_1_SQRT_2}),
    ));

    let (passed, detail) = match match_to_unprimed(model, &primed, tol.eq_tol) {
        BasisMatch::NotEquivalent { reason } => (true, json!({"verdict": "NotEquivalent", "reason": reason})),
        BasisMatch::Equivalent(w) => (false, json!({"verdict": "Equivalent", "permutation": w.permutation})),
    };
    report.push(Check::verdict("primed_bases_not_equivalent", THEOREM_SCHRODINGER, passed, 0.0, 0.0, detail));

    let (passed, detail) = match match_to_unprimed(model, &unprimed, tol.eq_tol) {
        BasisMatch::Equivalent(w) => (
            w.permutation == [0, 1] && w.phases.iter().all(|a| (a - C64::new(1.0, 0.0)).norm() <= tol.eq_tol),
            json!({"permutation": w.permutation.iter().map(|p| p + 1).collect::<Vec<_>>(), "phase_angles": w.phase_angles()}),
        ),
        BasisMatch::NotEquivalent { reason } => (false, json!({"verdict": "NotEquivalent", "reason": reason})),
    };
    report.push(Check::verdict("unprimed_identity_witness", THEOREM_SCHRODINGER, passed, 0.0, 0.0, detail));

    Ok(report)
}

/// Per-model result of the extraction uniqueness sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionTrial {
    pub copy_form: bool,
    pub matches_closed_form: bool,
    pub seeds_agree: bool,
    pub max_residual: f64,
    /// Largest `|β_extracted − β_configured|` after matching.
    pub max_record_error: f64,
    /// Largest `‖bᵢ|O:0⟩ − βᵢ|O:0⟩‖`.
    pub max_eigen_deviation: f64,
}

impl ExtractionTrial {
    pub fn failed(&self, tol: &ToleranceProfile) -> bool {
        !(self.copy_form && self.matches_closed_form && self.seeds_agree && self.max_residual <= tol.residual_tol)
    }
}

/// Random model (distinct `β`), evolved record observable, extraction under
/// several mixing seeds.
pub fn extraction_trial(m: usize, duration: f64, seed: u64, seeds: u64, tol: &ToleranceProfile) -> Result<ExtractionTrial, everett_core::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = random_distinct(m, &mut rng);
    let beta = random_distinct(m + 1, &mut rng);
    let model = MeasurementModel::build(m, duration, alpha, beta.clone(), tol)?;
    let b = model.record_observable();
    let evolved = evolve_operator(&model, &b)?;
    let oracle = closed_form_branches(&model, &b)?;
    let ready = model.ready_state();

    let mut decs = Vec::new();
    for k in 0..seeds {
        match extract_copy_structure(&evolved, &ready, tol, derive_seed(seed, 100 + k))? {
            CopyVerdict::CopyForm(d) => decs.push(d),
            CopyVerdict::NotCopyForm { residual, .. } => {
                return Ok(ExtractionTrial {
                    copy_form: false,
                    matches_closed_form: false,
                    seeds_agree: false,
                    max_residual: residual,
                    max_record_error: f64::INFINITY,
                    max_eigen_deviation: f64::INFINITY,
                })
            }
        }
    }
    let mut trial = ExtractionTrial {
        copy_form: true,
        matches_closed_form: true,
        seeds_agree: true,
        max_residual: 0.0,
        max_record_error: 0.0,
        max_eigen_deviation: 0.0,
    };
    for d in &decs {
        trial.max_residual = trial.max_residual.max(d.residual);
        match permutation_equivalent(&oracle, d, tol.residual_tol) {
            Some(perm) => {
                for (i, &p) in perm.iter().enumerate() {
                    // closed-form branch p records β_{p+1}
                    let err = (d.branches[i].record_value - C64::new(beta[p + 1], 0.0)).norm();
                    trial.max_record_error = trial.max_record_error.max(err);
                }
            }
            None => trial.matches_closed_form = false,
        }
        for br in &d.branches {
            let image = br.branch_op.apply(&ready)?;
            let dev = image.distance(&ready.scale(br.record_value));
            trial.max_eigen_deviation = trial.max_eigen_deviation.max(dev);
        }
    }
    for i in 0..decs.len() {
        for j in i + 1..decs.len() {
            if permutation_equivalent(&decs[i], &decs[j], tol.residual_tol).is_none() {
                trial.seeds_agree = false;
            }
        }
    }
    Ok(trial)
}

/// Per-model result of the noncommuting-observables sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpossibilityTrial {
    pub applicable: bool,
    pub projector_match: bool,
    pub commutator_norm: f64,
}

/// Random model and random record-type `d̂` (diagonal, distinct eigenvalues).
pub fn impossibility_trial(m: usize, duration: f64, seed: u64, tol: &ToleranceProfile) -> Result<ImpossibilityTrial, everett_core::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = MeasurementModel::build(m, duration, random_distinct(m, &mut rng), random_distinct(m + 1, &mut rng), tol)?;
    let d = ComplexOperator::real_diagonal(Space::O, &random_distinct(m + 1, &mut rng));
    let r = noncommuting_impossibility_check(&model, &model.pointer_observable(), &d, tol, derive_seed(seed, 1))?;
    Ok(ImpossibilityTrial {
        applicable: r.applicable,
        projector_match: r.projector_match,
        commutator_norm: r.commutator_norm.unwrap_or(f64::INFINITY),
    })
}

/// Randomized falsification sweeps for the three uniqueness results.
pub fn run_sweep(config: &ScenarioConfig) -> Result<VerificationReport, CliError> {
    let sc = config.validate()?;
    let (model, tol) = (&sc.model, &sc.tol);
    let (m, duration, trials) = (model.m(), model.duration(), sc.trials);
    let mut report = VerificationReport::new("sweep", sc.resolved.clone());

    // (a) Schrödinger picture: random bases and every relabeling.
    let search = random_basis_search(model, trials, derive_seed(sc.seed, 0), SEARCH_TOL)?;
    report.push(Check::verdict(
        "random_basis_search",
        THEOREM_SCHRODINGER,
        search.counterexamples == 0,
        search.counterexamples as f64,
        0.0,
        json!({
            "trials": search.trials,
            "satisfying_m2": search.satisfying,
            "counterexamples": search.counterexamples,
            "m2_tolerance": SEARCH_TOL,
            "note": "ready state held exact: |O':0> = |O:0>",
        }),
    ));
    let witnesses: Vec<_> = adversarial_witnesses(m, derive_seed(sc.seed, 1))
        .into_iter()
        .take(MAX_ADVERSARIAL)
        .collect();
    let mut adversarial_failures = 0u64;
    for w in &witnesses {
        let bp = BasisPair::from_witness(m, w)?;
        let worst = verify_m2_for_basis(model, &bp).into_iter().fold(0.0, f64::max);
        if worst > tol.eq_tol || !match_to_unprimed(model, &bp, tol.eq_tol).is_equivalent() {
            adversarial_failures += 1;
        }
    }
    report.push(Check::verdict(
        "relabeled_bases_equivalent",
        THEOREM_SCHRODINGER,
        adversarial_failures == 0,
        adversarial_failures as f64,
        0.0,
        json!({"candidates": witnesses.len(), "failures": adversarial_failures}),
    ));

    // (b) Heisenberg picture: extraction is unique across mixing seeds.
    let base = derive_seed(sc.seed, 2);
    let extraction: Vec<ExtractionTrial> = (0..trials as u64)
        .into_par_iter()
        .map(|t| extraction_trial(m, duration, derive_seed(base, t), SEEDS_PER_MODEL, tol))
        .collect::<Result<_, _>>()?;
    let extraction_failures = extraction.iter().filter(|t| t.failed(tol)).count() as u64;
    let max_residual = extraction.iter().map(|t| t.max_residual).fold(0.0, f64::max);
    report.push(Check::verdict(
        "extraction_uniqueness",
        THEOREM_EXPANSION,
        extraction_failures == 0,
        max_residual,
        tol.residual_tol,
        json!({
            "models": extraction.len(),
            "seeds_per_model": SEEDS_PER_MODEL,
            "failures": extraction_failures,
            "max_record_error": extraction.iter().map(|t| t.max_record_error).fold(0.0, f64::max),
            "max_eigen_deviation": extraction.iter().map(|t| t.max_eigen_deviation).fold(0.0, f64::max),
        }),
    ));

    // (c) No simultaneous measurement of an observable outside the pointer basis.
    let base = derive_seed(sc.seed, 3);
    let impossibility: Vec<ImpossibilityTrial> = (0..trials as u64)
        .into_par_iter()
        .map(|t| impossibility_trial(m, duration, derive_seed(base, t), tol))
        .collect::<Result<_, _>>()?;
    let impossibility_failures = impossibility
        .iter()
        .filter(|t| !(t.applicable && t.projector_match && t.commutator_norm <= tol.eq_tol))
        .count() as u64;
    report.push(Check::verdict(
        "noncommuting_impossibility",
        THEOREM_NONCOMMUTING,
        impossibility_failures == 0,
        impossibility.iter().map(|t| t.commutator_norm).fold(0.0, f64::max),
        tol.eq_tol,
        json!({"models": impossibility.len(), "failures": impossibility_failures}),
    ));

    report.counterexamples = search.counterexamples as u64 + adversarial_failures + extraction_failures + impossibility_failures;
    Ok(report)
}

/// Standalone extraction on an operator supplied from outside.
pub fn run_decompose(
    op: ComplexOperator,
    ready: ComplexVector,
    seed: u64,
    tol: &ToleranceProfile,
) -> Result<VerificationReport, CliError> {
    tol.validate().map_err(CliError::Usage)?;
    let scenario = json!({
        "operator": operator_json(&op),
        "ready": vector_json(&ready),
        "seed": seed,
        "tolerances": {
            "eq_tol": tol.eq_tol,
            "residual_tol": tol.residual_tol,
            "degeneracy_gap": tol.degeneracy_gap,
            "max_retries": tol.max_retries,
        },
    });
    let mut report = VerificationReport::new("decompose", scenario);
    let b = HeisenbergOperator::external(op)?;
    let verdict = extract_copy_structure(&b, &ready, tol, seed)?;
    let (passed, residual, mut detail) = copy_form_summary(&verdict, None, tol);
    if let CopyVerdict::CopyForm(dec) = &verdict {
        detail["decomposition"] = decomposition_json(dec);
    }
    report.push(Check::verdict("everett_copy_form", THEOREM_EXPANSION, passed, residual, tol.residual_tol, detail));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_verify_passes() {
        let r = run_verify(&ScenarioConfig::with_m(2)).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{} failed: {}", c.name, c.residual);
        }
        assert!(r.passed());
    }

    #[test]
    fn verify_rejects_duplicate_beta() {
        let mut cfg = ScenarioConfig::with_m(2);
        cfg.beta = Some(vec![0.0, 1.0, 1.0]);
        match run_verify(&cfg) {
            Err(CliError::Config(e)) => assert!(e.to_string().contains("degenerate pair (1, 2)")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn demo_requires_m2() {
        assert!(matches!(
            run_demo_ambiguity(&ScenarioConfig::with_m(3)),
            Err(CliError::Core(everett_core::Error::InvalidDimension(_)))
        ));
    }

    #[test]
    fn demo_reports_expected_values() {
        let r = run_demo_ambiguity(&ScenarioConfig::with_m(2)).unwrap();
        assert!(r.passed(), "{}", r.to_canonical_string());
        let primed = r.check("primed_bases_violate_m2").unwrap();
        let per_branch = primed.detail["per_branch"].as_array().unwrap();
        assert!((per_branch[0].as_f64().unwrap() - (2.0 - 2f64.sqrt()).sqrt()).abs() <= 1e-10);
    }

    #[test]
    fn single_trial_sweep() {
        let mut cfg = ScenarioConfig::with_m(2);
        cfg.trials = Some(1);
        let r = run_sweep(&cfg).unwrap();
        assert!(r.passed());
        assert_eq!(r.check("random_basis_search").unwrap().detail["trials"], 1);
    }

    #[test]
    fn decompose_identity_is_not_copy_form() {
        let r = run_decompose(
            ComplexOperator::identity(Space::OS, 6),
            o_ket(2, 0),
            0,
            &ToleranceProfile::default(),
        )
        .unwrap();
        assert!(!r.passed());
    }
}
