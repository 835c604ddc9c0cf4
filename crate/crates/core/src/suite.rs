//! The acceptance battery: ten property checks spanning every module, with
//! a deterministic report and separately recorded wall-clock timings.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{haagerup_function, tree_cocycle, verify_cocycle};
use crate::construction::{
    construct_and_certify, mixing_decay, rational_to_f64, ConstructConfig, DiscrepancyTable,
    MaterializedBlock, ShiftSystem, Tolerances,
};
use crate::embedding::gns_embed;
use crate::error::Result;
use crate::group::GroupSpec;
use crate::kernel::{
    cnd_test, exp_kernel_test, frullani_constant, frullani_integral, frullani_power,
    function_to_kernel, lp_power_kernel, power_transform, random_cnd_kernel, CndFunction, Kernel,
    QuadratureConfig,
};
use crate::measure::{
    inner_product, mazur_map, mazur_map_with_exponent, normalized, power_sum, random_vector,
    FiniteMeasureSpace, LpVector,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteTolerances {
    pub cnd: f64,
    pub psd: f64,
    pub frullani_relative: f64,
    pub mazur_transfer: f64,
    pub mazur_round_trip: f64,
    pub gns_residual: f64,
    pub construction: Tolerances,
}

impl Default for SuiteTolerances {
    fn default() -> Self {
        Self {
            cnd: 1e-9,
            psd: 1e-9,
            frullani_relative: 1e-6,
            mazur_transfer: 1e-12,
            mazur_round_trip: 1e-10,
            gns_residual: 1e-8,
            construction: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Base seed; criterion `i` uses `seed + i` where it needs randomness.
    pub seed: u64,
    pub tolerances: SuiteTolerances,
    pub quadrature: QuadratureConfig,
    pub point_sets: usize,
    pub points_per_set: usize,
    pub atoms: usize,
    pub mazur_vectors: usize,
    pub construction: ConstructConfig,
    /// Mutation fixture: negates the Mazur exponent inside the transfer check.
    pub inject_mazur_sign_flip: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let seed = 20_240_601;
        let mut construction =
            ConstructConfig::new(GroupSpec::free_abelian(1).expect("rank 1"), 1.5, 4);
        construction.seed = seed + 8;
        Self {
            seed,
            tolerances: SuiteTolerances::default(),
            quadrature: QuadratureConfig::default(),
            point_sets: 20,
            points_per_set: 30,
            atoms: 8,
            mazur_vectors: 1000,
            construction,
            inject_mazur_sign_flip: false,
        }
    }
}

impl SuiteConfig {
    pub fn criterion_seed(&self, id: u32) -> u64 {
        self.seed.wrapping_add(id as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CriterionResult {
    fn new(id: u32, name: &str) -> Self {
        Self {
            id,
            name: name.into(),
            passed: true,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    fn max_metric(&mut self, key: &str, value: f64) {
        let e = self.metrics.entry(key.into()).or_insert(f64::NEG_INFINITY);
        *e = e.max(value);
    }

    fn require(&mut self, ok: bool, note: impl FnOnce() -> String) {
        if !ok {
            self.passed = false;
            if self.notes.len() < 20 {
                self.notes.push(note());
            }
        }
    }
}

/// Deterministic part of a suite run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub id: u32,
    pub seconds: f64,
    pub limit_seconds: f64,
}

impl Timing {
    pub fn within_limit(&self) -> bool {
        self.seconds <= self.limit_seconds
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub report: SuiteReport,
    pub timings: Vec<Timing>,
}

const LIMITS: [f64; 10] = [10.0, 1.0, 30.0, 5.0, 5.0, 10.0, 20.0, 120.0, 10.0, f64::INFINITY];

type Runner = fn(&SuiteConfig) -> Result<CriterionResult>;

const RUNNERS: [(u32, Runner); 9] = [
    (1, lp_kernels_cnd),
    (2, negative_control),
    (3, schoenberg_closure),
    (4, frullani_identity),
    (5, mazur_transfer),
    (6, gns_round_trip),
    (7, tree_fixture),
    (8, construction_pipeline),
    (9, mixing),
];

/// Runs a single criterion among 1 to 9.
pub fn run_criterion(id: u32, config: &SuiteConfig) -> Result<CriterionResult> {
    let (_, run) = RUNNERS
        .iter()
        .find(|(i, _)| *i == id)
        .ok_or_else(|| crate::Error::input(format!("no criterion {id}; expected 1 to 9")))?;
    run(config)
}

fn run_once(config: &SuiteConfig) -> Result<(Vec<CriterionResult>, Vec<Timing>)> {
    let mut results = Vec::new();
    let mut timings = Vec::new();
    for (id, run) in RUNNERS {
        let start = Instant::now();
        results.push(run(config)?);
        timings.push(Timing {
            id,
            seconds: start.elapsed().as_secs_f64(),
            limit_seconds: LIMITS[id as usize - 1],
        });
    }
    Ok((results, timings))
}

/// Runs criteria 1 to 9, then all of them again and compares the two
/// serialized reports byte for byte (criterion 10). The second run's
/// duration is the timing of criterion 10.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteOutcome> {
    let (mut criteria, mut timings) = run_once(config)?;
    let first = serde_json::to_string(&criteria)?;
    let start = Instant::now();
    let (again, _) = run_once(config)?;
    let second = serde_json::to_string(&again)?;
    let mut det = CriterionResult::new(10, "determinism");
    det.metric("report_bytes", first.len() as f64);
    det.require(first == second, || "second run produced a different report".into());
    criteria.push(det);
    timings.push(Timing {
        id: 10,
        seconds: start.elapsed().as_secs_f64(),
        limit_seconds: LIMITS[9],
    });
    Ok(SuiteOutcome {
        report: SuiteReport {
            config: config.clone(),
            passed: criteria.iter().all(|c| c.passed),
            criteria,
        },
        timings,
    })
}

fn lp_kernels_cnd(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(1, "lp_kernels_cnd");
    let tol = config.tolerances.cnd;
    let space = FiniteMeasureSpace::uniform(config.atoms)?;
    for p in [0.5, 1.0, 1.5, 2.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(config.criterion_seed(1));
        for set in 0..config.point_sets {
            let points = (0..config.points_per_set)
                .map(|_| random_vector(&space, p, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let report = cnd_test(&lp_power_kernel(&points)?, tol)?;
            r.max_metric("max_relative_extremal", report.extremal_value / (report.threshold / tol));
            r.require(report.is_cnd(), || {
                format!("p={p} set {set}: extremal {:e}", report.extremal_value)
            });
        }
    }
    Ok(r)
}

fn negative_control(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(2, "negative_control");
    let points = [0.0, 1.0, 2.0, 3.0];
    for p in [2.5, 3.0] {
        let k = Kernel::power_distance_on_line(&points, p)?;
        let report = cnd_test(&k, config.tolerances.cnd)?;
        r.metric(&format!("extremal_p{p}"), report.extremal_value);
        r.require(!report.is_cnd() && report.extremal_value > 0.0, || {
            format!("p={p} passed the CND test")
        });
        let witness_value = k.quadratic_form(&report.witness);
        r.require(witness_value > 0.0, || format!("p={p}: witness gives {witness_value}"));
    }
    let k = Kernel::power_distance_on_line(&points, 3.0)?;
    let q = k.quadratic_form(&[1.0, -1.0, -1.0, 1.0]);
    r.metric("form_at_1_m1_m1_1_p3", q);
    r.require(q == 20.0, || format!("c = (1,-1,-1,1) gives {q}, expected 20"));
    Ok(r)
}

fn schoenberg_closure(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(3, "schoenberg_closure");
    let tol = config.tolerances.cnd;
    for i in 0..config.point_sets as u64 {
        let k = random_cnd_kernel(15, 3, config.criterion_seed(3).wrapping_add(i))?;
        for step in 1..=9 {
            let alpha = step as f64 / 10.0;
            let report = cnd_test(&power_transform(&k, alpha)?, tol)?;
            r.max_metric("max_power_extremal", report.extremal_value);
            r.require(report.is_cnd(), || format!("kernel {i}, alpha {alpha}: not CND"));
        }
        let exp = exp_kernel_test(&k, &[0.1, 1.0, 10.0], config.tolerances.psd)?;
        for row in &exp.rows {
            r.max_metric("max_negative_exp_eigenvalue", -row.exp_min_eigenvalue);
            r.require(row.passed, || format!("kernel {i}, t {}: exp check failed", row.t));
        }
    }
    Ok(r)
}

fn frullani_identity(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(4, "frullani_identity");
    let quad = &config.quadrature;
    // Oracle: 1 / int_0^inf (1 - e^{-t}) t^{-3/2} dt by the same quadrature,
    // against alpha / Gamma(1 - alpha) and the closed value 1 / (2 sqrt(pi)).
    let oracle = 1.0 / frullani_integral(1.0, 0.5, quad)?;
    let c = frullani_constant(0.5)?;
    let exact = 0.5 / std::f64::consts::PI.sqrt();
    r.metric("c_half", c);
    r.metric("c_half_quadrature", oracle);
    r.require((oracle - c).abs() <= 1e-6 * c, || format!("quadrature oracle {oracle} vs {c}"));
    r.require((c - 0.2820948).abs() <= 1e-7, || format!("c_1/2 = {c}, expected 0.2820948"));
    r.require((c - exact).abs() <= 1e-14, || format!("c_1/2 = {c}, expected {exact}"));
    for x in [0.1, 1.0, 4.0, 10.0] {
        for alpha in [0.25, 0.5, 0.75] {
            let approx = frullani_power(x, alpha, quad)?;
            let truth = x.powf(alpha);
            let rel = (approx - truth).abs() / truth;
            r.max_metric("max_relative_error", rel);
            r.require(rel <= config.tolerances.frullani_relative, || {
                format!("x={x} alpha={alpha}: relative error {rel:e}")
            });
        }
    }
    Ok(r)
}

fn mazur_transfer(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(5, "mazur_transfer");
    let exps = [0.5, 1.0, 1.5, 2.0, 3.0];
    let space = FiniteMeasureSpace::uniform(config.atoms)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.criterion_seed(5));
    let sign = if config.inject_mazur_sign_flip { -1.0 } else { 1.0 };
    r.metric("transfer_max_defect", 0.0);
    r.metric("round_trip_max_defect", 0.0);
    for _ in 0..config.mazur_vectors {
        let raw = random_vector(&space, 1.0, &mut rng)?;
        let mut perm: Vec<usize> = (0..config.atoms).collect();
        perm.shuffle(&mut rng);
        for &p in &exps {
            let v = normalized(&LpVector::new(space.clone(), raw.values().to_vec(), p)?);
            for &q in exps.iter().filter(|q| **q != p) {
                let image = mazur_map_with_exponent(&v, sign * p / q, q);
                let transferred = power_sum(space.weights(), image.values(), q);
                let defect = (transferred - 1.0).abs();
                r.max_metric("transfer_max_defect", defect);
                r.require(defect <= config.tolerances.mazur_transfer, || {
                    format!("p={p} q={q}: |M v|_q^q = {transferred}")
                });
                let back = mazur_map(&image, q, p)?;
                let rt = back
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                r.max_metric("round_trip_max_defect", rt);
                r.require(rt <= config.tolerances.mazur_round_trip, || {
                    format!("p={p} q={q}: round trip defect {rt:e}")
                });
                let lhs = mazur_map(&v.permuted(&perm)?, p, q)?;
                let rhs = mazur_map(&v, p, q)?.permuted(&perm)?;
                r.require(lhs.values() == rhs.values(), || {
                    format!("p={p} q={q}: permutation equivariance failed")
                });
            }
        }
    }
    Ok(r)
}

fn gns_round_trip(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(6, "gns_round_trip");
    let tol = config.tolerances.cnd;
    let limit = config.tolerances.gns_residual;
    for i in 0..5u64 {
        let k = random_cnd_kernel(25, 4, config.criterion_seed(6).wrapping_add(i))?;
        let e = gns_embed(&k, tol)?;
        r.max_metric("max_residual", e.gram_residual);
        r.require(e.gram_residual <= limit, || {
            format!("random set {i}: residual {:e}", e.gram_residual)
        });
    }
    for name in ["Z", "Z^2", "F2"] {
        let spec: GroupSpec = name.parse()?;
        let psi = CndFunction::word_length(&spec, &spec.ball(8)?)?;
        for radius in 1..=4 {
            let k = function_to_kernel(&psi, &spec.ball(radius)?)?;
            let e = gns_embed(&k, tol)?;
            r.max_metric("max_residual", e.gram_residual);
            r.require(e.gram_residual <= limit, || {
                format!("{name} radius {radius}: residual {:e}", e.gram_residual)
            });
        }
    }
    Ok(r)
}

fn tree_fixture(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(7, "tree_fixture");
    let spec = GroupSpec::free(2)?;
    let ball = spec.ball(4)?;
    for p in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let action = tree_cocycle(2, p, 4)?;
        for g in ball.iter() {
            let s = action.cocycle_power_sum(g)?;
            let len = spec.word_length(g) as f64;
            r.require(s == len, || format!("p={p} g={g}: |gamma|^p = {s}, |g| = {len}"));
        }
        let c = verify_cocycle(&action, &ball, config.tolerances.construction.cocycle)?;
        r.max_metric("max_cocycle_defect", c.max_defect);
        r.require(c.passed, || format!("p={p}: cocycle defect {:e}", c.max_defect));
        if p == 1.0 || p == 1.5 {
            // psi(g h^-1) for g, h in B(e, 2) only needs gamma on B(e, 4).
            let h = haagerup_function(&action, &ball.truncate(2), config.tolerances.cnd)?;
            r.metric(&format!("psi_extremal_p{p}"), h.report.extremal_value);
            r.require(h.report.is_cnd(), || format!("p={p}: psi is not CND"));
        }
    }
    Ok(r)
}

fn construction_pipeline(config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(8, "construction_pipeline");
    let report = construct_and_certify(&config.construction)?;
    for (i, e) in report.schedule.iter().enumerate() {
        r.metric(&format!("block{}_n", i + 1), e.n as f64);
        r.metric(&format!("block{}_bound", i + 1), e.achieved_bound);
    }
    if let Some(gap) = report.materialization_gap {
        r.metric("materialization_gap", gap);
    }
    if let Some(c) = &report.cocycle {
        r.metric("cocycle_defect", c.max_defect);
    }
    r.metric("psi_extremal", report.cnd.extremal_value);
    r.require(report.materialization_gap.is_some(), || {
        "no block small enough to materialize".into()
    });
    for check in &report.checks {
        r.require(check.passed, || format!("{}: {}", check.name, check.detail));
    }
    Ok(r)
}

fn mixing(_config: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(9, "mixing_decay");
    let system = ShiftSystem::new(1)?;
    let mut table = DiscrepancyTable::new();
    for n in [1usize, 3, 5, 7, 9] {
        let block = MaterializedBlock::new(n, 1, 2 * n, 2.0)?;
        let shifts: Vec<Vec<i64>> = (0..=n as i64).map(|g| vec![g]).collect();
        for row in mixing_decay(&system, n, &shifts, &mut table)? {
            let moved = block.shift(&row.shift).apply(block.v.values());
            let vg = LpVector::new(block.space.clone(), moved, 2.0)?;
            let direct = inner_product(&block.v, &vg)?;
            let closed = rational_to_f64(&row.correlation);
            r.require(direct == closed, || {
                format!("n={n} g={:?}: direct {direct} vs closed {closed}", row.shift)
            });
        }
        let disjoint = &mixing_decay(&system, n, &[vec![n as i64]], &mut table)?[0];
        r.require(num_traits::Zero::is_zero(&disjoint.correlation), || {
            format!("n={n}: correlation at disjoint windows is not 0")
        });
        let gap = (disjoint.l2_distance - std::f64::consts::FRAC_1_SQRT_2).abs();
        r.max_metric("max_disjoint_distance_gap", gap);
        r.require(gap <= 1e-15, || format!("n={n}: distance {}", disjoint.l2_distance));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_criteria_pass() {
        let config = SuiteConfig::default();
        for run in [negative_control, frullani_identity, mixing] {
            let r = run(&config).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn sign_flip_breaks_transfer() {
        let mut config = SuiteConfig {
            mazur_vectors: 20,
            ..SuiteConfig::default()
        };
        assert!(mazur_transfer(&config).unwrap().passed);
        config.inject_mazur_sign_flip = true;
        let r = mazur_transfer(&config).unwrap();
        assert!(!r.passed);
        assert!(r.notes[0].contains("|M v|_q^q"));
    }
}
