//! Affine isometric actions `Psi(g) v = pi(g) v + gamma(g)` on finite
//! `L_p` carriers.
//!
//! Linear parts are signed atom permutations. When a permutation only moves
//! atoms of equal weight it is an isometry of every `L_p`, for every `p`.
//! Cocycles are stored on a finite ball; identities are checked only for
//! pairs whose product stays inside the ball.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Ball, GroupElement, GroupSpec, Letter};
use crate::kernel::{cnd_test, function_to_kernel, CndFunction, CndReport};
use crate::measure::{gauge_of, power_sum, random_vector, FiniteMeasureSpace, GaugeConvention};

/// `(P v)[target[i]] = sign[i] * v[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutation {
    pub target: Vec<usize>,
    pub sign: Vec<i8>,
}

impl SignedPermutation {
    pub fn identity(n: usize) -> Self {
        Self {
            target: (0..n).collect(),
            sign: vec![1; n],
        }
    }

    pub fn new(target: Vec<usize>, sign: Vec<i8>) -> Result<Self> {
        let n = target.len();
        if sign.len() != n {
            return Err(Error::input("target and sign lengths differ"));
        }
        if sign.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::input("signs must be +1 or -1"));
        }
        let mut hit = vec![false; n];
        for &t in &target {
            if t >= n || std::mem::replace(&mut hit[t], true) {
                return Err(Error::input("target is not a permutation"));
            }
        }
        Ok(Self { target, sign })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, &x) in v.iter().enumerate() {
            out[self.target[i]] = f64::from(self.sign[i]) * x;
        }
        out
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let target = other.target.iter().map(|&j| self.target[j]).collect();
        let sign = other
            .target
            .iter()
            .zip(&other.sign)
            .map(|(&j, &s)| s * self.sign[j])
            .collect();
        Self { target, sign }
    }

    pub fn inverse(&self) -> Self {
        let n = self.len();
        let mut target = vec![0; n];
        let mut sign = vec![1; n];
        for i in 0..n {
            target[self.target[i]] = i;
            sign[self.target[i]] = self.sign[i];
        }
        Self { target, sign }
    }

    /// Every atom is sent to an atom of the same weight.
    pub fn preserves(&self, weights: &[f64]) -> bool {
        self.target
            .iter()
            .enumerate()
            .all(|(i, &j)| weights[i] == weights[j])
    }
}

/// A group acting linearly on a finite carrier through signed permutations.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRep {
    spec: GroupSpec,
    carrier: FiniteMeasureSpace,
    assignment: BTreeMap<GroupElement, SignedPermutation>,
}

impl LinearRep {
    /// Weight preservation is not enforced here; [`verify_isometry`] is the
    /// place where a non-isometric assignment is detected and reported.
    pub fn new(
        spec: GroupSpec,
        carrier: FiniteMeasureSpace,
        assignment: BTreeMap<GroupElement, SignedPermutation>,
    ) -> Result<Self> {
        for (g, perm) in &assignment {
            spec.validate(g)?;
            if perm.len() != carrier.len() {
                return Err(Error::input(format!(
                    "pi({g}) acts on {} atoms, carrier has {}",
                    perm.len(),
                    carrier.len()
                )));
            }
        }
        if let Some(perm) = assignment.get(&spec.identity()) {
            if *perm != SignedPermutation::identity(carrier.len()) {
                return Err(Error::input("pi(e) is not the identity"));
            }
        }
        Ok(Self {
            spec,
            carrier,
            assignment,
        })
    }

    /// The trivial representation on a ball.
    pub fn trivial(spec: &GroupSpec, carrier: FiniteMeasureSpace, ball: &Ball) -> Result<Self> {
        let id = SignedPermutation::identity(carrier.len());
        Self::new(
            spec.clone(),
            carrier,
            ball.iter().map(|g| (g.clone(), id.clone())).collect(),
        )
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn carrier(&self) -> &FiniteMeasureSpace {
        &self.carrier
    }

    pub fn assignment(&self) -> &BTreeMap<GroupElement, SignedPermutation> {
        &self.assignment
    }

    pub fn get(&self, g: &GroupElement) -> Option<&SignedPermutation> {
        self.assignment.get(g)
    }

    pub fn apply(&self, g: &GroupElement, v: &[f64]) -> Result<Vec<f64>> {
        self.get(g)
            .map(|p| p.apply(v))
            .ok_or_else(|| Error::input(format!("representation is not defined at {g}")))
    }

    /// Conjugates by an atom relabeling `i -> perm[i]`; the weights move along.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let n = self.carrier.len();
        let sigma = SignedPermutation::new(perm.to_vec(), vec![1; n])?;
        let sigma_inv = sigma.inverse();
        let mut weights = vec![0.0; n];
        for (i, &j) in perm.iter().enumerate() {
            weights[j] = self.carrier.weights()[i];
        }
        Ok(Self {
            spec: self.spec.clone(),
            carrier: FiniteMeasureSpace::new(weights)?,
            assignment: self
                .assignment
                .iter()
                .map(|(g, p)| (g.clone(), sigma.compose(&p.compose(&sigma_inv))))
                .collect(),
        })
    }
}

/// One summand of an affine action: a representation and a cocycle for it.
#[derive(Clone, Debug, PartialEq)]
pub struct Cocycle {
    rep: LinearRep,
    values: BTreeMap<GroupElement, Vec<f64>>,
}

impl Cocycle {
    pub fn new(rep: LinearRep, values: BTreeMap<GroupElement, Vec<f64>>) -> Result<Self> {
        for (g, v) in &values {
            rep.spec.validate(g)?;
            if v.len() != rep.carrier.len() {
                return Err(Error::input(format!(
                    "gamma({g}) has {} entries, carrier has {}",
                    v.len(),
                    rep.carrier.len()
                )));
            }
        }
        if let Some(v) = values.get(&rep.spec.identity()) {
            if v.iter().any(|x| *x != 0.0) {
                return Err(Error::input("gamma(e) must vanish"));
            }
        }
        Ok(Self { rep, values })
    }

    /// `gamma(g) = pi(g) w - w` over the representation's domain.
    pub fn coboundary(rep: LinearRep, w: &[f64]) -> Result<Self> {
        if w.len() != rep.carrier.len() {
            return Err(Error::input("coboundary vector has the wrong length"));
        }
        let values = rep
            .assignment
            .iter()
            .map(|(g, p)| {
                let mut v = p.apply(w);
                v.iter_mut().zip(w).for_each(|(a, b)| *a -= b);
                (g.clone(), v)
            })
            .collect();
        Self::new(rep, values)
    }

    pub fn zero(rep: LinearRep) -> Result<Self> {
        let n = rep.carrier.len();
        let values = rep
            .assignment
            .keys()
            .map(|g| (g.clone(), vec![0.0; n]))
            .collect();
        Self::new(rep, values)
    }

    pub fn rep(&self) -> &LinearRep {
        &self.rep
    }

    pub fn values(&self) -> &BTreeMap<GroupElement, Vec<f64>> {
        &self.values
    }

    pub fn get(&self, g: &GroupElement) -> Option<&[f64]> {
        self.values.get(g).map(Vec::as_slice)
    }

    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let rep = self.rep.relabeled(perm)?;
        let sigma = SignedPermutation::new(perm.to_vec(), vec![1; perm.len()])?;
        let values = self
            .values
            .iter()
            .map(|(g, v)| (g.clone(), sigma.apply(v)))
            .collect();
        Self::new(rep, values)
    }
}

/// A direct `p`-sum of cocycles; a single block is the common case.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineAction {
    spec: GroupSpec,
    p: f64,
    blocks: Vec<Cocycle>,
}

impl AffineAction {
    pub fn new(p: f64, blocks: Vec<Cocycle>) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::input(format!("exponent p must be positive, got {p}")));
        }
        let spec = blocks
            .first()
            .ok_or_else(|| Error::input("an action needs at least one block"))?
            .rep
            .spec
            .clone();
        if blocks.iter().any(|b| b.rep.spec != spec) {
            return Err(Error::input("blocks act by different groups"));
        }
        Ok(Self { spec, p, blocks })
    }

    pub fn single(p: f64, cocycle: Cocycle) -> Result<Self> {
        Self::new(p, vec![cocycle])
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn blocks(&self) -> &[Cocycle] {
        &self.blocks
    }

    pub fn convention(&self) -> GaugeConvention {
        GaugeConvention::for_exponent(self.p)
    }

    /// Elements on which every block has both a cocycle value and a
    /// representation.
    pub fn defined_at(&self, g: &GroupElement) -> bool {
        self.blocks
            .iter()
            .all(|b| b.values.contains_key(g) && b.rep.assignment.contains_key(g))
    }

    /// `sum_blocks sum w |gamma(g)|^p`.
    pub fn cocycle_power_sum(&self, g: &GroupElement) -> Result<f64> {
        self.blocks
            .iter()
            .map(|b| {
                b.get(g)
                    .map(|v| power_sum(b.rep.carrier.weights(), v, self.p))
                    .ok_or_else(|| Error::input(format!("cocycle is not defined at {g}")))
            })
            .sum()
    }

    /// Gauge of `gamma(g)` in the `p`-sum under the convention for `p`.
    pub fn cocycle_gauge(&self, g: &GroupElement) -> Result<f64> {
        Ok(self
            .convention()
            .from_power_sum(self.cocycle_power_sum(g)?, self.p))
    }

    /// `Psi(g) v = pi(g) v + gamma(g)`, blockwise.
    pub fn act(&self, g: &GroupElement, v: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if v.len() != self.blocks.len() {
            return Err(Error::input("vector has the wrong number of blocks"));
        }
        self.blocks
            .iter()
            .zip(v)
            .map(|(b, x)| {
                let mut y = b.rep.apply(g, x)?;
                let c = b
                    .get(g)
                    .ok_or_else(|| Error::input(format!("cocycle is not defined at {g}")))?;
                y.iter_mut().zip(c).for_each(|(a, c)| *a += c);
                Ok(y)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryWitness {
    pub element: String,
    pub vector_index: usize,
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub p: f64,
    pub convention: GaugeConvention,
    pub seed: u64,
    pub vectors: usize,
    pub tolerance: f64,
    pub max_isometry_defect: f64,
    pub isometry_witness: Option<IsometryWitness>,
    pub homomorphism_pairs_checked: usize,
    /// First pair `(g, h)` with `pi(g) pi(h) != pi(gh)`.
    pub homomorphism_failure: Option<(String, String)>,
    pub passed: bool,
}

/// Number of random probe vectors used by [`verify_isometry`].
pub const ISOMETRY_PROBES: usize = 4;

pub fn verify_isometry(rep: &LinearRep, p: f64, ball: &Ball, tol: f64, seed: u64) -> Result<IsometryReport> {
    for g in ball {
        if rep.get(g).is_none() {
            return Err(Error::input(format!("representation is not defined at {g}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = rep.carrier.weights();
    let probes = (0..ISOMETRY_PROBES)
        .map(|_| random_vector(&rep.carrier, p, &mut rng).map(|v| v.into_values()))
        .collect::<Result<Vec<_>>>()?;
    let base: Vec<f64> = probes.iter().map(|v| gauge_of(weights, v, p)).collect();

    let mut max_defect = 0.0f64;
    let mut witness = None;
    for g in ball {
        let perm = &rep.assignment[g];
        for (k, v) in probes.iter().enumerate() {
            let defect = (gauge_of(weights, &perm.apply(v), p) - base[k]).abs();
            if defect > max_defect {
                max_defect = defect;
                witness = Some(IsometryWitness {
                    element: g.to_string(),
                    vector_index: k,
                    defect,
                });
            }
        }
    }
    let mut pairs = 0;
    let mut hom_failure = None;
    'outer: for g in ball {
        for h in ball {
            let gh = rep.spec.multiply(g, h)?;
            let Some(target) = rep.get(&gh) else { continue };
            if !ball.contains(&gh) {
                continue;
            }
            pairs += 1;
            if rep.assignment[g].compose(&rep.assignment[h]) != *target {
                hom_failure = Some((g.to_string(), h.to_string()));
                break 'outer;
            }
        }
    }
    Ok(IsometryReport {
        p,
        convention: GaugeConvention::for_exponent(p),
        seed,
        vectors: ISOMETRY_PROBES,
        tolerance: tol,
        passed: max_defect <= tol && hom_failure.is_none(),
        max_isometry_defect: max_defect,
        isometry_witness: if max_defect > tol { witness } else { None },
        homomorphism_pairs_checked: pairs,
        homomorphism_failure: hom_failure,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleReport {
    pub convention: GaugeConvention,
    pub tolerance: f64,
    pub pairs_checked: usize,
    /// Largest gauge of `gamma(gh) - pi(g) gamma(h) - gamma(g)`.
    pub max_defect: f64,
    pub argmax: Option<(String, String)>,
    pub passed: bool,
}

pub fn verify_cocycle(action: &AffineAction, ball: &Ball, tol: f64) -> Result<CocycleReport> {
    for g in ball {
        if !action.defined_at(g) {
            return Err(Error::input(format!("action is not defined at {g}")));
        }
    }
    let spec = &action.spec;
    let p = action.p;
    let mut max_defect = 0.0f64;
    let mut argmax = None;
    let mut pairs = 0;
    for g in ball {
        for h in ball {
            let gh = spec.multiply(g, h)?;
            if !ball.contains(&gh) {
                continue;
            }
            pairs += 1;
            let mut total = 0.0;
            for block in &action.blocks {
                let moved = block.rep.apply(g, &block.values[h])?;
                let lhs = &block.values[&gh];
                let gg = &block.values[g];
                let diff: Vec<f64> = (0..lhs.len()).map(|i| lhs[i] - moved[i] - gg[i]).collect();
                total += power_sum(block.rep.carrier.weights(), &diff, p);
            }
            let defect = action.convention().from_power_sum(total, p);
            if defect > max_defect || argmax.is_none() {
                max_defect = max_defect.max(defect);
                argmax = Some((g.to_string(), h.to_string()));
            }
        }
    }
    Ok(CocycleReport {
        convention: action.convention(),
        tolerance: tol,
        pairs_checked: pairs,
        max_defect,
        argmax,
        passed: max_defect <= tol,
    })
}

/// The Cayley-tree cocycle on `F_k`.
///
/// Atoms are the edges of the Cayley tree inside the ball of radius
/// `radius + 1`, each oriented away from `e` and indexed by its far
/// endpoint. Generators act by left translation, with sign `-1` when the
/// image edge points back toward `e`; translations that leave the finite
/// tree are completed to a bijection, which never affects edges on
/// geodesics between points of the domain ball. `gamma(g)` is the indicator
/// of the geodesic from `e` to `g`, so `|gamma(g)|_p^p = |g|`.
pub fn tree_cocycle(rank: usize, p: f64, radius: usize) -> Result<AffineAction> {
    let spec = GroupSpec::free(rank)?;
    let outer = spec.ball(radius + 1)?;
    let domain = outer.truncate(radius);
    // Atom i is the edge ending at outer[i + 1].
    let atoms = outer.len() - 1;
    let atom_of = |x: &GroupElement| outer.index_of(x).map(|i| i - 1);
    let mut generator_perms: BTreeMap<Letter, SignedPermutation> = BTreeMap::new();
    for gen in 0..rank as u8 {
        let s = Letter::new(gen, false);
        let s_elem = GroupElement::from_word(&[s]);
        let mut target = vec![usize::MAX; atoms];
        let mut sign = vec![1i8; atoms];
        let mut taken = vec![false; atoms];
        for (i, child) in outer.elements()[1..].iter().enumerate() {
            let word = child.as_word().expect("free group element");
            let parent = GroupElement::from_word(&word[..word.len() - 1]);
            let a = spec.multiply_unchecked(&s_elem, &parent);
            let b = spec.multiply_unchecked(&s_elem, child);
            let (far, flipped) = if spec.word_length(&b) > spec.word_length(&a) {
                (b, false)
            } else {
                (a, true)
            };
            if let Some(j) = atom_of(&far) {
                target[i] = j;
                sign[i] = if flipped { -1 } else { 1 };
                taken[j] = true;
            }
        }
        let mut free_targets = (0..atoms).filter(|j| !taken[*j]);
        for t in target.iter_mut().filter(|t| **t == usize::MAX) {
            *t = free_targets.next().expect("partial injection completes to a bijection");
        }
        let perm = SignedPermutation::new(target, sign)?;
        generator_perms.insert(s.inverse(), perm.inverse());
        generator_perms.insert(s, perm);
    }

    let mut assignment: BTreeMap<GroupElement, SignedPermutation> = BTreeMap::new();
    let mut values = BTreeMap::new();
    for g in domain.iter() {
        let word = g.as_word().expect("free group element");
        let perm = match word.split_last() {
            None => SignedPermutation::identity(atoms),
            Some((last, prefix)) => {
                assignment[&GroupElement::from_word(prefix)].compose(&generator_perms[last])
            }
        };
        assignment.insert(g.clone(), perm);
        let mut gamma = vec![0.0; atoms];
        for len in 1..=word.len() {
            let vertex = GroupElement::from_word(&word[..len]);
            gamma[atom_of(&vertex).expect("geodesic stays in the ball")] = 1.0;
        }
        values.insert(g.clone(), gamma);
    }
    let rep = LinearRep::new(spec, FiniteMeasureSpace::counting(atoms)?, assignment)?;
    AffineAction::single(p, Cocycle::new(rep, values)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropernessProfile {
    pub radii: Vec<usize>,
    /// Minimum gauge of `gamma` over each sphere (`None` if empty).
    pub min_gauge: Vec<Option<f64>>,
    pub convention: GaugeConvention,
    pub strictly_increasing: bool,
    /// First radius at which the profile fails to increase.
    pub flat_at: Option<usize>,
}

impl PropernessProfile {
    /// Builds a profile over radii `1..=max_radius` from per-element gauges.
    pub fn from_gauges(
        ball: &Ball,
        max_radius: usize,
        convention: GaugeConvention,
        gauge: impl Fn(&GroupElement) -> Result<f64>,
    ) -> Result<Self> {
        let radii: Vec<usize> = (1..=max_radius).collect();
        let mut min_gauge = Vec::with_capacity(radii.len());
        for &r in &radii {
            let mut m: Option<f64> = None;
            for g in ball.sphere(r) {
                let v = gauge(g)?;
                m = Some(m.map_or(v, |m: f64| m.min(v)));
            }
            min_gauge.push(m);
        }
        let mut flat_at = None;
        let mut prev = 0.0;
        for (&r, m) in radii.iter().zip(&min_gauge) {
            match m {
                Some(v) if *v > prev => prev = *v,
                _ => {
                    flat_at = Some(r);
                    break;
                }
            }
        }
        Ok(Self {
            radii,
            min_gauge,
            convention,
            strictly_increasing: flat_at.is_none(),
            flat_at,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,min_gauge\n");
        for (r, m) in self.radii.iter().zip(&self.min_gauge) {
            match m {
                Some(v) => out.push_str(&format!("{r},{v}\n")),
                None => out.push_str(&format!("{r},\n")),
            }
        }
        out
    }
}

/// Finite-window properness proxy: the minimum of the cocycle gauge over
/// each sphere, radii `1..=max_radius`, and whether it strictly increases.
pub fn properness_profile(action: &AffineAction, max_radius: usize) -> Result<PropernessProfile> {
    let ball = action.spec.ball(max_radius)?;
    PropernessProfile::from_gauges(&ball, max_radius, action.convention(), |g| action.cocycle_gauge(g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaagerupFunction {
    pub psi: CndFunction,
    pub report: CndReport,
}

/// `psi(g) = sum w |gamma(g)|^p` (the `p`-th power of the norm, or the
/// power-sum metric when `p < 1`) on the ball of twice the radius of
/// `ball`, followed by the CND test of `psi(g h^-1)` over `ball`.
pub fn haagerup_function(action: &AffineAction, ball: &Ball, tol: f64) -> Result<HaagerupFunction> {
    let p = action.p;
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::input(format!(
            "the psi = |gamma|^p construction needs 0 < p < 2, got {p}"
        )));
    }
    let big = action.spec.ball(2 * ball.radius())?;
    let values = big
        .iter()
        .map(|g| Ok((g.clone(), action.cocycle_power_sum(g)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let psi = CndFunction::new(action.spec.clone(), values)?;
    let report = cnd_test(&function_to_kernel(&psi, ball)?, tol)?;
    Ok(HaagerupFunction { psi, report })
}

/// JSON bundle for an action: group, exponent, and per-block carrier
/// weights, permutation arrays and cocycle vectors keyed by element token.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionBundle {
    pub group: GroupSpec,
    pub p: f64,
    pub radius: usize,
    pub blocks: Vec<BlockBundle>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockBundle {
    pub weights: Vec<f64>,
    pub assignment: BTreeMap<String, SignedPermutation>,
    pub cocycle: BTreeMap<String, Vec<f64>>,
}

impl ActionBundle {
    pub fn from_action(action: &AffineAction, radius: usize) -> Self {
        Self {
            group: action.spec.clone(),
            p: action.p,
            radius,
            blocks: action
                .blocks
                .iter()
                .map(|b| BlockBundle {
                    weights: b.rep.carrier.weights().to_vec(),
                    assignment: b
                        .rep
                        .assignment
                        .iter()
                        .map(|(g, p)| (g.to_string(), p.clone()))
                        .collect(),
                    cocycle: b.values.iter().map(|(g, v)| (g.to_string(), v.clone())).collect(),
                })
                .collect(),
        }
    }

    pub fn into_action(self) -> Result<AffineAction> {
        let spec = self.group;
        let blocks = self
            .blocks
            .into_iter()
            .map(|b| {
                let assignment = b
                    .assignment
                    .into_iter()
                    .map(|(k, v)| {
                        let perm = SignedPermutation::new(v.target, v.sign)?;
                        Ok((spec.parse_element(&k)?, perm))
                    })
                    .collect::<Result<_>>()?;
                let values = b
                    .cocycle
                    .into_iter()
                    .map(|(k, v)| Ok((spec.parse_element(&k)?, v)))
                    .collect::<Result<_>>()?;
                let rep = LinearRep::new(spec.clone(), FiniteMeasureSpace::new(b.weights)?, assignment)?;
                Cocycle::new(rep, values)
            })
            .collect::<Result<Vec<_>>>()?;
        AffineAction::new(self.p, blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn shift_rep(n: usize, radius: usize) -> (GroupSpec, Ball, LinearRep) {
        // Z acting on Z/n by rotation, uniform weights.
        let spec = GroupSpec::free_abelian(1).unwrap();
        let ball = spec.ball(radius).unwrap();
        let assignment = ball
            .iter()
            .map(|g| {
                let s = g.as_vector().unwrap()[0].rem_euclid(n as i64) as usize;
                let target = (0..n).map(|i| (i + s) % n).collect();
                (g.clone(), SignedPermutation::new(target, vec![1; n]).unwrap())
            })
            .collect();
        let rep = LinearRep::new(spec.clone(), FiniteMeasureSpace::uniform(n).unwrap(), assignment).unwrap();
        (spec, ball, rep)
    }

    #[test]
    fn identity_rep_is_isometric() {
        let spec = GroupSpec::free(2).unwrap();
        let ball = spec.ball(2).unwrap();
        let rep = LinearRep::trivial(&spec, FiniteMeasureSpace::new(vec![0.2, 0.5, 0.3]).unwrap(), &ball).unwrap();
        for p in [0.5, 1.0, 2.0, 3.0] {
            assert!(verify_isometry(&rep, p, &ball, TOL, 1).unwrap().passed);
        }
    }

    #[test]
    fn rotation_is_isometric() {
        let (_, ball, rep) = shift_rep(7, 3);
        for p in [0.5, 1.0, 2.0, 3.0] {
            let r = verify_isometry(&rep, p, &ball, 1e-12, 4).unwrap();
            assert!(r.passed, "{r:?}");
            assert!(r.homomorphism_pairs_checked > 0);
        }
    }

    #[test]
    fn weight_violation_is_named() {
        let spec = GroupSpec::cyclic(2).unwrap();
        let ball = spec.ball(1).unwrap();
        let swap = SignedPermutation::new(vec![1, 0], vec![1, 1]).unwrap();
        let assignment = BTreeMap::from([
            (spec.identity(), SignedPermutation::identity(2)),
            (spec.parse_element("1").unwrap(), swap),
        ]);
        let rep = LinearRep::new(spec, FiniteMeasureSpace::new(vec![0.9, 0.1]).unwrap(), assignment).unwrap();
        let r = verify_isometry(&rep, 2.0, &ball, 1e-9, 0).unwrap();
        assert!(!r.passed);
        assert_eq!(r.isometry_witness.unwrap().element, "1");
    }

    #[test]
    fn missing_element_is_an_input_error() {
        let (spec, _, rep) = shift_rep(5, 1);
        let big = spec.ball(2).unwrap();
        assert!(matches!(verify_isometry(&rep, 2.0, &big, TOL, 0), Err(Error::Input(_))));
        let action = AffineAction::single(2.0, Cocycle::zero(rep).unwrap()).unwrap();
        assert!(matches!(verify_cocycle(&action, &big, TOL), Err(Error::Input(_))));
    }

    #[test]
    fn trivial_and_coboundary_cocycles() {
        let (_, ball, rep) = shift_rep(6, 2);
        let zero = AffineAction::single(1.5, Cocycle::zero(rep.clone()).unwrap()).unwrap();
        let r = verify_cocycle(&zero, &ball, 0.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_defect, 0.0);
        let prof = properness_profile(&zero, 2).unwrap();
        assert!(prof.min_gauge.iter().all(|m| *m == Some(0.0)));
        assert!(!prof.strictly_increasing);
        let h = haagerup_function(&zero, &ball.truncate(1), 1e-9).unwrap();
        assert!(h.report.is_cnd());
        assert!(h.psi.values().values().all(|v| *v == 0.0));

        let w = [0.3, -1.2, 2.0, 0.0, 0.7, 5.0];
        let cob = AffineAction::single(1.5, Cocycle::coboundary(rep, &w).unwrap()).unwrap();
        assert!(verify_cocycle(&cob, &ball, 1e-12).unwrap().passed);
    }

    #[test]
    fn tree_cocycle_small_cases() {
        let action = tree_cocycle(2, 1.5, 3).unwrap();
        let spec = action.spec().clone();
        assert_eq!(action.cocycle_power_sum(&spec.identity()).unwrap(), 0.0);
        let a = spec.parse_element("a").unwrap();
        assert_eq!(action.cocycle_power_sum(&a).unwrap(), 1.0);
        let ball = spec.ball(3).unwrap();
        let r = verify_cocycle(&action, &ball, 1e-12).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.max_defect, 0.0);
        let iso = verify_isometry(action.blocks()[0].rep(), 1.5, &ball, 1e-12, 3).unwrap();
        assert!(iso.passed, "{iso:?}");

        // gamma(ab * a) = pi(ab) gamma(a) + gamma(ab)
        let ab = spec.parse_element("ab").unwrap();
        let aba = spec.multiply(&ab, &a).unwrap();
        let b = &action.blocks()[0];
        let moved = b.rep().apply(&ab, b.get(&a).unwrap()).unwrap();
        let sum: Vec<f64> = moved.iter().zip(b.get(&ab).unwrap()).map(|(x, y)| x + y).collect();
        assert_eq!(sum, b.get(&aba).unwrap());
    }

    #[test]
    fn tree_norm_law_and_profile() {
        for p in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let action = tree_cocycle(2, p, 3).unwrap();
            let spec = action.spec().clone();
            for g in spec.ball(3).unwrap().iter() {
                assert_eq!(action.cocycle_power_sum(g).unwrap(), spec.word_length(g) as f64);
            }
        }
        let action = tree_cocycle(2, 2.0, 3).unwrap();
        let prof = properness_profile(&action, 3).unwrap();
        for (r, m) in prof.radii.iter().zip(&prof.min_gauge) {
            assert!((m.unwrap() - (*r as f64).sqrt()).abs() < 1e-15);
        }
        assert!(prof.strictly_increasing);
        assert!(prof.to_csv().starts_with("radius,min_gauge\n1,1\n"));
    }

    #[test]
    fn tree_haagerup_function() {
        let action = tree_cocycle(2, 1.5, 4).unwrap();
        let spec = action.spec().clone();
        let h = haagerup_function(&action, &spec.ball(2).unwrap(), 1e-9).unwrap();
        assert!(h.report.is_cnd());
        for (g, v) in h.psi.values() {
            assert_eq!(*v, spec.word_length(g) as f64);
            assert_eq!(h.psi.get(&spec.inverse(g)), Some(*v));
        }
        let p2 = tree_cocycle(2, 2.0, 2).unwrap();
        assert!(matches!(
            haagerup_function(&p2, &spec.ball(1).unwrap(), 1e-9),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn relabeling_preserves_gauges() {
        use rand::seq::SliceRandom;
        let action = tree_cocycle(2, 1.5, 2).unwrap();
        let block = &action.blocks()[0];
        let n = block.rep().carrier().len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
        let moved = AffineAction::single(1.5, block.relabeled(&perm).unwrap()).unwrap();
        let ball = action.spec().ball(2).unwrap();
        for g in ball.iter() {
            assert_eq!(action.cocycle_gauge(g).unwrap(), moved.cocycle_gauge(g).unwrap());
        }
        assert!(verify_cocycle(&moved, &ball, 1e-12).unwrap().passed);
    }

    #[test]
    fn bundle_round_trip() {
        let action = tree_cocycle(2, 1.5, 2).unwrap();
        let bundle = ActionBundle::from_action(&action, 2);
        let json = serde_json::to_string(&bundle).unwrap();
        let back: ActionBundle = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_action().unwrap(), action);
    }

    #[test]
    fn signed_permutation_algebra() {
        let a = SignedPermutation::new(vec![2, 0, 1], vec![1, -1, 1]).unwrap();
        let id = SignedPermutation::identity(3);
        assert_eq!(a.compose(&a.inverse()), id);
        assert_eq!(a.inverse().compose(&a), id);
        let v = [1.0, 2.0, 3.0];
        assert_eq!(a.compose(&a).apply(&v), a.apply(&a.apply(&v)));
        assert!(SignedPermutation::new(vec![0, 0], vec![1, 1]).is_err());
    }
}
