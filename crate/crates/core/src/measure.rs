//! Finite measure spaces and discretized `L_p` vectors.
//!
//! For `p >= 1` the gauge of a vector is the norm `(sum w_i |v_i|^p)^(1/p)`.
//! For `0 < p < 1` the space is not normable and the gauge is the metric
//! `sum w_i |v_i|^p` without the root. Every gauge value carries a
//! [`GaugeConvention`] saying which of the two was used.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability space.
pub const PROBABILITY_MASS_TOL: f64 = 1e-12;

/// Atoms with positive masses. Cloning is cheap.
#[derive(Clone, Debug)]
pub struct FiniteMeasureSpace {
    weights: Arc<[f64]>,
}

impl FiniteMeasureSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("measure space needs at least one atom"));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::input(format!("atom {i} has non-positive weight {w}")));
        }
        Ok(Self {
            weights: weights.into(),
        })
    }

    /// `n` atoms of mass `1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("measure space needs at least one atom"));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    /// `n` atoms of mass 1 (counting measure).
    pub fn counting(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_MASS_TOL
    }

    /// Same atoms and weights (pointer-equal spaces short-circuit).
    pub fn same_as(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.weights, &other.weights) || self.weights == other.weights
    }
}

impl PartialEq for FiniteMeasureSpace {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeConvention {
    /// `(sum w|v|^p)^(1/p)`, used for `p >= 1`.
    Norm,
    /// `sum w|v|^p`, used for `0 < p < 1`.
    PowerSum,
}

impl GaugeConvention {
    pub fn for_exponent(p: f64) -> Self {
        if p >= 1.0 {
            GaugeConvention::Norm
        } else {
            GaugeConvention::PowerSum
        }
    }

    /// Converts a power sum `sum w|v|^p` into a gauge under this convention.
    pub fn from_power_sum(self, power_sum: f64, p: f64) -> f64 {
        match self {
            GaugeConvention::Norm => power_sum.powf(1.0 / p),
            GaugeConvention::PowerSum => power_sum,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub value: f64,
    pub convention: GaugeConvention,
    pub p: f64,
}

/// `sum w_i |v_i|^p`.
pub fn power_sum(weights: &[f64], values: &[f64], p: f64) -> f64 {
    weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * v.abs().powf(p))
        .sum()
}

/// Gauge of raw values under the convention for `p`.
pub fn gauge_of(weights: &[f64], values: &[f64], p: f64) -> f64 {
    GaugeConvention::for_exponent(p).from_power_sum(power_sum(weights, values, p), p)
}

/// An element of `L_p(mu)` over a finite measure space.
#[derive(Clone, Debug, PartialEq)]
pub struct LpVector {
    space: FiniteMeasureSpace,
    values: Vec<f64>,
    p: f64,
}

impl LpVector {
    pub fn new(space: FiniteMeasureSpace, values: Vec<f64>, p: f64) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::input(format!(
                "vector has {} values but the space has {} atoms",
                values.len(),
                space.len()
            )));
        }
        check_exponent(p)?;
        Ok(Self { space, values, p })
    }

    pub fn zeros(space: FiniteMeasureSpace, p: f64) -> Result<Self> {
        let n = space.len();
        Self::new(space, vec![0.0; n], p)
    }

    pub fn space(&self) -> &FiniteMeasureSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> LpVector {
        LpVector {
            space: self.space.clone(),
            values: self.values.iter().map(|x| c * x).collect(),
            p: self.p,
        }
    }

    pub fn add(&self, other: &LpVector) -> Result<LpVector> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &LpVector) -> Result<LpVector> {
        self.combine(other, |a, b| a - b)
    }

    fn combine(&self, other: &LpVector, op: impl Fn(f64, f64) -> f64) -> Result<LpVector> {
        if !self.space.same_as(&other.space) {
            return Err(Error::input("vectors live on different measure spaces"));
        }
        Ok(LpVector {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| op(*a, *b))
                .collect(),
            p: self.p,
        })
    }

    /// Relabels atoms: the value at atom `i` moves to atom `perm[i]`.
    /// The measure is permuted along, so gauges are preserved.
    pub fn permuted(&self, perm: &[usize]) -> Result<LpVector> {
        let n = self.values.len();
        if perm.len() != n {
            return Err(Error::input("permutation length differs from atom count"));
        }
        let mut values = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut hit = vec![false; n];
        for (i, &j) in perm.iter().enumerate() {
            if j >= n || hit[j] {
                return Err(Error::input("not a permutation"));
            }
            hit[j] = true;
            values[j] = self.values[i];
            weights[j] = self.space.weights()[i];
        }
        Ok(LpVector {
            space: FiniteMeasureSpace::new(weights)?,
            values,
            p: self.p,
        })
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::input(format!("exponent p must be positive, got {p}")));
    }
    Ok(())
}

/// Norm for `p >= 1`, power-sum metric for `0 < p < 1`.
pub fn lp_gauge(v: &LpVector) -> Gauge {
    let convention = GaugeConvention::for_exponent(v.p);
    Gauge {
        value: convention.from_power_sum(power_sum(v.space.weights(), &v.values, v.p), v.p),
        convention,
        p: v.p,
    }
}

/// `sum w_i f_i g_i` on `L_2`.
pub fn inner_product(f: &LpVector, g: &LpVector) -> Result<f64> {
    if !f.space.same_as(&g.space) {
        return Err(Error::input("inner product of vectors on different spaces"));
    }
    if f.p != 2.0 || g.p != 2.0 {
        return Err(Error::input(format!(
            "inner product needs p = 2, got {} and {}",
            f.p, g.p
        )));
    }
    Ok(f.space
        .weights()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// `v -> |v|^(p_from/p_to) sign(v)`, taking the unit sphere of `L_{p_from}`
/// onto the unit sphere of `L_{p_to}`. The output carries exponent `p_to`.
pub fn mazur_map(v: &LpVector, p_from: f64, p_to: f64) -> Result<LpVector> {
    check_exponent(p_from)?;
    check_exponent(p_to)?;
    Ok(mazur_map_with_exponent(v, p_from / p_to, p_to))
}

pub(crate) fn mazur_map_with_exponent(v: &LpVector, exponent: f64, p_to: f64) -> LpVector {
    LpVector {
        space: v.space.clone(),
        values: v.values.iter().map(|&x| mazur_scalar(x, exponent)).collect(),
        p: p_to,
    }
}

fn mazur_scalar(x: f64, exponent: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(exponent)
    }
}

/// Seeded random vector with standard normal entries.
pub fn random_vector(space: &FiniteMeasureSpace, p: f64, rng: &mut impl Rng) -> Result<LpVector> {
    let values = (0..space.len()).map(|_| rng.sample(StandardNormal)).collect();
    LpVector::new(space.clone(), values, p)
}

/// Rescales `v` onto the unit sphere of its gauge. Zero stays zero.
pub fn normalized(v: &LpVector) -> LpVector {
    let s = power_sum(v.space.weights(), &v.values, v.p);
    if s == 0.0 {
        return v.clone();
    }
    v.scaled(s.powf(-1.0 / v.p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusConfig {
    pub p_from: f64,
    pub p_to: f64,
    pub sample_count: usize,
    pub atoms: usize,
    pub seed: u64,
}

/// Empirical modulus of continuity of the Mazur map on the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusTable {
    pub config: ModulusConfig,
    pub input_convention: GaugeConvention,
    pub output_convention: GaugeConvention,
    /// Sampled `(input distance, output distance)`, sorted by input distance.
    pub samples: Vec<(f64, f64)>,
    /// Running maximum of the output distance along the sorted samples.
    pub envelope: Vec<(f64, f64)>,
}

impl ModulusTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("input_dist,output_dist\n");
        for (a, b) in &self.envelope {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }
}

/// Distance between Mazur images of a pair, measured in the target gauge.
pub fn mazur_pair_distance(x: &LpVector, y: &LpVector, p_from: f64, p_to: f64) -> Result<(f64, f64)> {
    let input = lp_gauge(&x.sub(y)?).value;
    let output = lp_gauge(&mazur_map(x, p_from, p_to)?.sub(&mazur_map(y, p_from, p_to)?)?).value;
    Ok((input, output))
}

/// Samples pairs of nearby points on the unit sphere of `L_{p_from}` over
/// `atoms` uniform atoms. Perturbation sizes are log-uniform in
/// `[1e-4, 3]` so that both small and large distances are represented.
pub fn mazur_modulus_estimate(config: &ModulusConfig) -> Result<ModulusTable> {
    if config.sample_count == 0 {
        return Err(Error::input("sample_count must be >= 1"));
    }
    check_exponent(config.p_from)?;
    check_exponent(config.p_to)?;
    let space = FiniteMeasureSpace::uniform(config.atoms)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.sample_count);
    for _ in 0..config.sample_count {
        let x = normalized(&random_vector(&space, config.p_from, &mut rng)?);
        let z = random_vector(&space, config.p_from, &mut rng)?;
        let scale = 10f64.powf(rng.random_range(-4.0..0.5));
        let y = normalized(&x.add(&z.scaled(scale))?);
        samples.push(mazur_pair_distance(&x, &y, config.p_from, config.p_to)?);
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut envelope = Vec::with_capacity(samples.len());
    let mut running = 0.0f64;
    for &(a, b) in &samples {
        running = running.max(b);
        envelope.push((a, running));
    }
    Ok(ModulusTable {
        config: config.clone(),
        input_convention: GaugeConvention::for_exponent(config.p_from),
        output_convention: GaugeConvention::for_exponent(config.p_to),
        samples,
        envelope,
    })
}

/// JSON form `{"weights":[...], "values":[...], "p":...}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpVectorJson {
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub p: f64,
}

impl From<&LpVector> for LpVectorJson {
    fn from(v: &LpVector) -> Self {
        Self {
            weights: v.space.weights().to_vec(),
            values: v.values.clone(),
            p: v.p,
        }
    }
}

impl TryFrom<LpVectorJson> for LpVector {
    type Error = Error;

    fn try_from(j: LpVectorJson) -> Result<Self> {
        LpVector::new(FiniteMeasureSpace::new(j.weights)?, j.values, j.p)
    }
}
