//! Proper affine isometric actions of `Z^d` on a finite `p`-sum of `L_p`
//! spaces, built from Bernoulli shifts.
//!
//! The probability space is `{0,1}^(Z^d)` with the fair product measure and
//! `Z^d` acting by translation. For an odd box side `n` the majority set
//! `A_n` (at least half of the bits in the box `[0, n)^d` are ones) has
//! measure exactly 1/2, and `v_n = 1_{A_n} - 1/2` is a mean-zero vector of
//! `L_2`-norm 1/2. Its Mazur image `w_n` takes the two values
//! `±(1/2)^(2/p)`, so `rho(g) w_n - w_n` is `±2 (1/2)^(2/p)` on
//! `A_n g Δ A_n` and zero elsewhere, giving
//!
//! ```text
//! sum |rho(g) w_n - w_n|^p dmu = 2^(p-2) mu(A_n g Δ A_n).
//! ```
//!
//! The discrepancy `mu(A_n g Δ A_n)` is the probability that the majorities
//! of two boxes sharing `o` of their `N = n^d` bits disagree, computed
//! exactly by summing over the number of ones in the shared bits.
//!
//! Blocks are selected per ball radius from target bounds; summing the
//! coboundaries `g -> rho(g) w_n - w_n` over the blocks gives the cocycle.

use std::collections::{BTreeMap, HashMap};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::action::{
    properness_profile, verify_cocycle, verify_isometry, AffineAction, Cocycle, CocycleReport,
    IsometryReport, LinearRep, PropernessProfile, SignedPermutation,
};
use crate::error::{Error, Result};
use crate::group::{Ball, GroupElement, GroupSpec};
use crate::kernel::{cnd_test, function_to_kernel, CndFunction, CndReport};
use crate::measure::{mazur_map, power_sum, FiniteMeasureSpace, GaugeConvention, LpVector};

/// Largest materialized configuration space, in bits (`2^20` atoms).
pub const MATERIALIZATION_BITS: usize = 20;

/// Largest box side materialized alongside the closed forms.
pub const MATERIALIZATION_MAX_N: usize = 9;

/// Default search budget for box sides.
pub const DEFAULT_N_MAX: usize = 4001;

/// Window budget: largest box, in bits, handled by the exact arithmetic.
pub const MAX_BOX_BITS: u64 = 10_000;

/// `num/den` string form of a rational.
pub fn rational_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn check_odd(n: usize) -> Result<()> {
    if n.is_multiple_of(2) {
        return Err(Error::input(format!(
            "box side must be odd for the majority set to have measure 1/2, got {n}"
        )));
    }
    Ok(())
}

fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 0..n {
        c = c * (n - k) / (k + 1);
        row.push(c.clone());
    }
    row
}

/// Exact majority discrepancies, memoized by `(box bits, overlap)`.
///
/// Binomial rows are rebuilt per query; keeping them would cost
/// `O(N^2)` bits per distinct row size.
#[derive(Debug, Default)]
pub struct DiscrepancyTable {
    values: HashMap<(u64, u64), BigRational>,
}

impl DiscrepancyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// `tail[j] = #{x in {0,1}^f : |x| >= j}` for `j = 0..=f+1`.
    fn tail(f: u64) -> Vec<BigUint> {
        let row = binomial_row(f);
        let mut tail = vec![BigUint::zero(); f as usize + 2];
        for j in (0..=f as usize).rev() {
            tail[j] = &tail[j + 1] + &row[j];
        }
        tail
    }

    /// `P(Bin(total, 1/2) >= (total + 1) / 2)`, the measure of a majority set.
    pub fn majority_mass(&mut self, total: u64) -> BigRational {
        let m = (total as usize).div_ceil(2);
        let tail = Self::tail(total);
        BigRational::new(
            BigInt::from(tail[m].clone()),
            BigInt::from(BigUint::one() << total),
        )
    }

    /// Probability that the majorities of two boxes of `total` fair bits,
    /// sharing `overlap` of them, disagree.
    pub fn discrepancy(&mut self, total: u64, overlap: u64) -> BigRational {
        debug_assert!(overlap <= total && total % 2 == 1);
        if let Some(v) = self.values.get(&(total, overlap)) {
            return v.clone();
        }
        let fresh = total - overlap;
        let threshold = total.div_ceil(2);
        let shared = binomial_row(overlap);
        let tail = Self::tail(fresh);
        let all = BigUint::one() << fresh;
        // Disagreement given s shared ones: one box reaches the threshold
        // and the other does not.
        let mut count = BigUint::zero();
        for (s, c) in shared.iter().enumerate() {
            let s = s as u64;
            if s >= threshold || threshold - s > fresh {
                continue;
            }
            let up = &tail[(threshold - s) as usize];
            count += c * up * (&all - up);
        }
        count <<= 1;
        let value = BigRational::new(
            BigInt::from(count),
            BigInt::from(BigUint::one() << (overlap + 2 * fresh)),
        );
        self.values.insert((total, overlap), value.clone());
        value
    }
}

/// The Bernoulli shift of `Z^d` with majority sets over boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSystem {
    pub dim: usize,
}

impl ShiftSystem {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("shift systems need dimension >= 1"));
        }
        Ok(Self { dim })
    }

    /// Accepts `Z` or `Z^d`; other groups have no shift model here.
    pub fn for_group(spec: &GroupSpec) -> Result<Self> {
        let dim = spec.free_abelian_rank().ok_or_else(|| {
            Error::input(format!(
                "the shift construction supports Z^d only, got {spec}"
            ))
        })?;
        Self::new(dim)
    }

    pub fn spec(&self) -> GroupSpec {
        GroupSpec::free_abelian(self.dim).expect("dim >= 1")
    }

    pub fn box_size(&self, n: usize) -> u64 {
        (n as u64).pow(self.dim as u32)
    }

    /// Bits shared by the box and its translate by `g`.
    pub fn overlap(&self, n: usize, g: &[i64]) -> u64 {
        g.iter()
            .map(|x| (n as u64).saturating_sub(x.unsigned_abs()))
            .product()
    }

    /// Largest overlap among translates of word length exactly `r`,
    /// attained by spreading `r` as evenly as possible over the axes.
    pub fn max_overlap_on_sphere(&self, n: usize, r: usize) -> u64 {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let a = r / d + usize::from(i < r % d);
                (n as u64).saturating_sub(a as u64)
            })
            .product()
    }
}

/// `A_n` over the box of side `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajoritySet {
    pub n: usize,
    pub dim: usize,
}

impl MajoritySet {
    pub fn new(n: usize, dim: usize) -> Result<Self> {
        check_odd(n)?;
        ShiftSystem::new(dim)?;
        Ok(Self { n, dim })
    }

    pub fn measure(&self, table: &mut DiscrepancyTable) -> BigRational {
        table.majority_mass((self.n as u64).pow(self.dim as u32))
    }
}

/// Exact `mu(A_n g Δ A_n)` for a translate `g` of `Z^d`.
pub fn majority_discrepancy(
    system: &ShiftSystem,
    n: usize,
    g: &[i64],
    table: &mut DiscrepancyTable,
) -> Result<BigRational> {
    check_odd(n)?;
    if g.len() != system.dim {
        return Err(Error::input(format!(
            "shift has {} coordinates, system has dimension {}",
            g.len(),
            system.dim
        )));
    }
    let total = system.box_size(n);
    if total > MAX_BOX_BITS {
        return Err(Error::resource(format!(
            "box of {total} bits exceeds the window budget of {MAX_BOX_BITS}"
        )));
    }
    Ok(table.discrepancy(total, system.overlap(n, g)))
}

/// Two-valued function: `high` on a set of measure `high_mass`, `low` on
/// the complement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoValued {
    pub high: f64,
    pub low: f64,
    pub high_mass: f64,
}

impl TwoValued {
    pub fn mean(&self) -> f64 {
        self.high * self.high_mass + self.low * (1.0 - self.high_mass)
    }

    pub fn power_sum(&self, p: f64) -> f64 {
        self.high.abs().powf(p) * self.high_mass + self.low.abs().powf(p) * (1.0 - self.high_mass)
    }
}

/// `2^(p-2)`: the block gauge per unit of discrepancy.
pub fn gauge_per_discrepancy(p: f64) -> f64 {
    2f64.powf(p - 2.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockData {
    pub n: usize,
    pub dim: usize,
    pub p: f64,
    /// `mu(A_n) = 1/2`, exact.
    pub majority_mass: BigRational,
    pub v: TwoValued,
    pub w: TwoValued,
    /// `g -> mu(A_n g Δ A_n)` on the table ball.
    pub discrepancies: BTreeMap<GroupElement, BigRational>,
}

impl BlockData {
    /// `sum |rho(g) w_n - w_n|^p` from the closed form.
    pub fn block_power_sum(&self, g: &GroupElement) -> Option<f64> {
        self.discrepancies
            .get(g)
            .map(|d| gauge_per_discrepancy(self.p) * rational_to_f64(d))
    }

    pub fn discrepancy_strings(&self) -> BTreeMap<String, String> {
        self.discrepancies
            .iter()
            .map(|(g, d)| (g.to_string(), rational_string(d)))
            .collect()
    }
}

/// Block data for side `n` with discrepancies tabulated on `ball`.
pub fn build_block(
    system: &ShiftSystem,
    n: usize,
    p: f64,
    ball: &Ball,
    table: &mut DiscrepancyTable,
) -> Result<BlockData> {
    check_odd(n)?;
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::input(format!("exponent p must be positive, got {p}")));
    }
    let mut discrepancies = BTreeMap::new();
    for g in ball {
        let coords = g
            .as_vector()
            .ok_or_else(|| Error::input(format!("{g} is not an element of Z^d")))?;
        discrepancies.insert(g.clone(), majority_discrepancy(system, n, coords, table)?);
    }
    let w_abs = 0.5f64.powf(2.0 / p);
    Ok(BlockData {
        n,
        dim: system.dim,
        p,
        majority_mass: MajoritySet::new(n, system.dim)?.measure(table),
        v: TwoValued {
            high: 0.5,
            low: -0.5,
            high_mass: 0.5,
        },
        w: TwoValued {
            high: w_abs,
            low: -w_abs,
            high_mass: 0.5,
        },
        discrepancies,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingRow {
    pub shift: Vec<i64>,
    pub discrepancy: BigRational,
    /// `<v_n, v_n . g> = 1/4 - mu(A_n g Δ A_n) / 2`.
    pub correlation: BigRational,
    /// `|v_n - v_n . g|_2 = sqrt(mu(A_n g Δ A_n))`.
    pub l2_distance: f64,
}

pub fn mixing_decay(
    system: &ShiftSystem,
    n: usize,
    shifts: &[Vec<i64>],
    table: &mut DiscrepancyTable,
) -> Result<Vec<MixingRow>> {
    let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    shifts
        .iter()
        .map(|g| {
            let d = majority_discrepancy(system, n, g, table)?;
            Ok(MixingRow {
                shift: g.clone(),
                correlation: &quarter - &d * &half,
                l2_distance: rational_to_f64(&d).sqrt(),
                discrepancy: d,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// Ball radius on which the block must be nearly invariant.
    pub k: usize,
    pub eps: f64,
    pub n: usize,
    /// `max_{|g| <= k} 2^(p-2) mu(A_n g Δ A_n)`.
    pub achieved_bound: f64,
    /// `2^(p-3)`; the gauge of a block at fully separated boxes.
    pub delta: f64,
    /// Smallest `S` with block gauge `>= delta` for all `S < |g| <= d n`.
    pub escape_radius: usize,
}

/// Largest block gauge over `B(e, k)`.
fn near_invariance_bound(
    system: &ShiftSystem,
    n: usize,
    p: f64,
    ball: &Ball,
    table: &mut DiscrepancyTable,
) -> f64 {
    let total = system.box_size(n);
    let mut overlaps: Vec<u64> = ball
        .iter()
        .map(|g| system.overlap(n, g.as_vector().expect("Z^d element")))
        .collect();
    overlaps.sort_unstable();
    overlaps.dedup();
    overlaps
        .into_iter()
        .map(|o| gauge_per_discrepancy(p) * rational_to_f64(&table.discrepancy(total, o)))
        .fold(0.0, f64::max)
}

/// Escape radius for side `n` with `delta = 2^(p-3)`, scanning word
/// lengths `1..=d n` (past `d (n - 1)` every pair of boxes is disjoint).
/// Block gauge `>= delta` is exactly `mu(A_n g Δ A_n) >= 1/2`; the smallest
/// discrepancy on a sphere sits at its largest overlap.
pub fn escape_radius(system: &ShiftSystem, n: usize, table: &mut DiscrepancyTable) -> usize {
    let total = system.box_size(n);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    (1..=system.dim * n)
        .rev()
        .find(|&r| table.discrepancy(total, system.max_overlap_on_sphere(n, r)) < half)
        .unwrap_or(0)
}

/// For each target `eps_k` the smallest odd `n <= n_max` whose block gauge
/// stays below `eps_k` on `B(e, k)`, `k = 1, 2, ...`.
///
/// The search assumes the bound is non-increasing in `n` (checked by the
/// test suite on small cases) and bisects over odd sides.
pub fn select_block_schedule(
    system: &ShiftSystem,
    eps: &[f64],
    p: f64,
    n_max: usize,
    table: &mut DiscrepancyTable,
) -> Result<Vec<ScheduleEntry>> {
    if eps.is_empty() {
        return Err(Error::input("need at least one target bound"));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::input("target bounds must be positive"));
    }
    if eps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::input("target bounds must be non-increasing"));
    }
    let spec = system.spec();
    let mut n_max = n_max.max(1);
    while system.box_size(n_max) > MAX_BOX_BITS || n_max.is_multiple_of(2) {
        n_max -= 1;
    }
    let delta = gauge_per_discrepancy(p) / 2.0;
    let mut entries = Vec::with_capacity(eps.len());
    let mut lo_side = 1;
    for (i, &target) in eps.iter().enumerate() {
        let k = i + 1;
        let ball = spec.ball(k)?;
        let bound = |n: usize, t: &mut DiscrepancyTable| near_invariance_bound(system, n, p, &ball, t);
        let best = bound(n_max, table);
        if best > target {
            return Err(Error::resource(format!(
                "no odd box side <= {n_max} reaches eps_{k} = {target}; best bound {best:e} at n = {n_max}"
            )));
        }
        // Odd sides as 2j + 1; find the smallest j with bound <= target.
        let (mut lo, mut hi) = (lo_side / 2, n_max / 2);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if bound(2 * mid + 1, table) <= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let n = 2 * lo + 1;
        lo_side = n;
        entries.push(ScheduleEntry {
            k,
            eps: target,
            n,
            achieved_bound: bound(n, table),
            delta,
            escape_radius: escape_radius(system, n, table),
        });
    }
    Ok(entries)
}

/// Explicit vectors on the torus `(Z/L)^d` of side `torus_side`, one atom per
/// configuration of its `L^d` bits. Translates by `|g_i| <= L - n` see the
/// same overlaps as on `Z^d`.
#[derive(Clone, Debug)]
pub struct MaterializedBlock {
    pub n: usize,
    pub dim: usize,
    pub torus_side: usize,
    pub space: FiniteMeasureSpace,
    /// `1_{A_n} - 1/2` in `L_2`.
    pub v: LpVector,
    /// Mazur image of `v` in `L_p`.
    pub w: LpVector,
    /// Number of configurations in `A_n`.
    pub majority_count: usize,
}

impl MaterializedBlock {
    pub fn new(n: usize, dim: usize, torus_side: usize, p: f64) -> Result<Self> {
        check_odd(n)?;
        if torus_side < n {
            return Err(Error::input("torus side must be at least the box side"));
        }
        let bits = torus_side.pow(dim as u32);
        if bits > MATERIALIZATION_BITS {
            return Err(Error::resource(format!(
                "materializing {bits} bits exceeds the cap of 2^{MATERIALIZATION_BITS} configurations"
            )));
        }
        let atoms = 1usize << bits;
        let space = FiniteMeasureSpace::uniform(atoms)?;
        let mut box_mask = 0u64;
        for c in 0..bits {
            if Self::coords(c, dim, torus_side).iter().all(|&x| x < n) {
                box_mask |= 1 << c;
            }
        }
        let threshold = n.pow(dim as u32).div_ceil(2) as u32;
        let values: Vec<f64> = (0..atoms as u64)
            .map(|w| if (w & box_mask).count_ones() >= threshold { 0.5 } else { -0.5 })
            .collect();
        let majority_count = values.iter().filter(|x| **x > 0.0).count();
        let v = LpVector::new(space.clone(), values, 2.0)?;
        let w = mazur_map(&v, 2.0, p)?;
        Ok(Self {
            n,
            dim,
            torus_side,
            space,
            v,
            w,
            majority_count,
        })
    }

    fn coords(mut c: usize, dim: usize, side: usize) -> Vec<usize> {
        (0..dim)
            .map(|_| {
                let x = c % side;
                c /= side;
                x
            })
            .collect()
    }

    /// `rho(g)`: `(rho(g) f)(omega) = f(omega . g)` with
    /// `(omega . g)_c = omega_{c + g}`.
    pub fn shift(&self, g: &[i64]) -> SignedPermutation {
        let side = self.torus_side;
        let bits = side.pow(self.dim as u32);
        // Bit c of omega . g is bit source[c] of omega.
        let source: Vec<usize> = (0..bits)
            .map(|c| {
                let x = Self::coords(c, self.dim, side);
                let mut idx = 0;
                for i in (0..self.dim).rev() {
                    let y = (x[i] as i64 + g[i]).rem_euclid(side as i64) as usize;
                    idx = idx * side + y;
                }
                idx
            })
            .collect();
        let atoms = 1usize << bits;
        let mut target = vec![0; atoms];
        for omega in 0..atoms {
            let mut moved = 0usize;
            for (c, &s) in source.iter().enumerate() {
                moved |= ((omega >> s) & 1) << c;
            }
            // value at omega . g lands on omega
            target[moved] = omega;
        }
        SignedPermutation {
            target,
            sign: vec![1; atoms],
        }
    }
}

/// The cocycle `b(g) = (+)_k rho(g) w_{n_k} - w_{n_k}`, kept in closed form
/// for every block and materialized for small ones.
#[derive(Clone, Debug)]
pub struct TruncatedCocycle {
    pub p: f64,
    pub dim: usize,
    pub radius: usize,
    pub blocks: Vec<BlockData>,
    /// `sum_k 2^(p-2) mu(A_{n_k} g Δ A_{n_k})` on `B(e, 2 radius)`.
    pub power_sums: BTreeMap<GroupElement, f64>,
    /// Blocks with `n <= 9` as explicit vectors over `B(e, 2 radius)`.
    pub materialized: Option<AffineAction>,
    pub materialized_sides: Vec<usize>,
}

impl TruncatedCocycle {
    pub fn convention(&self) -> GaugeConvention {
        GaugeConvention::for_exponent(self.p)
    }

    pub fn gauge(&self, g: &GroupElement) -> Result<f64> {
        let s = self
            .power_sums
            .get(g)
            .ok_or_else(|| Error::input(format!("cocycle is not tabulated at {g}")))?;
        Ok(self.convention().from_power_sum(*s, self.p))
    }

    /// Largest `|closed form - explicit vectors|` of the per-block power sums
    /// over the materialized blocks and `B(e, radius)`.
    pub fn materialization_gap(&self) -> Result<Option<f64>> {
        let Some(action) = &self.materialized else {
            return Ok(None);
        };
        let spec = GroupSpec::free_abelian(self.dim)?;
        let ball = spec.ball(self.radius)?;
        let mut gap = 0.0f64;
        for (block, &n) in action.blocks().iter().zip(&self.materialized_sides) {
            let data = self
                .blocks
                .iter()
                .find(|b| b.n == n)
                .expect("materialized sides come from the schedule");
            for g in ball.iter() {
                let explicit = power_sum(
                    block.rep().carrier().weights(),
                    block.get(g).expect("materialized on the ball"),
                    self.p,
                );
                let closed = data.block_power_sum(g).expect("tabulated on the ball");
                gap = gap.max((explicit - closed).abs());
            }
        }
        Ok(Some(gap))
    }
}

fn materialize(
    system: &ShiftSystem,
    n: usize,
    p: f64,
    ball: &Ball,
) -> Result<Option<Cocycle>> {
    if n > MATERIALIZATION_MAX_N {
        return Ok(None);
    }
    let side = n + ball.radius();
    if side.pow(system.dim as u32) > MATERIALIZATION_BITS {
        return Ok(None);
    }
    let block = MaterializedBlock::new(n, system.dim, side, p)?;
    let w = block.w.values();
    let mut assignment = BTreeMap::new();
    let mut values = BTreeMap::new();
    for g in ball {
        let rho = block.shift(g.as_vector().expect("Z^d element"));
        let mut b = rho.apply(w);
        b.iter_mut().zip(w).for_each(|(x, y)| *x -= y);
        values.insert(g.clone(), b);
        assignment.insert(g.clone(), rho);
    }
    let rep = LinearRep::new(system.spec(), block.space.clone(), assignment)?;
    Ok(Some(Cocycle::new(rep, values)?))
}

/// Assembles the truncated direct sum over blocks of sides `sides`.
pub fn assemble_cocycle(
    system: &ShiftSystem,
    sides: &[usize],
    p: f64,
    radius: usize,
    table: &mut DiscrepancyTable,
) -> Result<TruncatedCocycle> {
    if sides.is_empty() {
        return Err(Error::input("need at least one block"));
    }
    let spec = system.spec();
    let wide = spec.ball(2 * radius)?;
    let blocks = sides
        .iter()
        .map(|&n| build_block(system, n, p, &wide, table))
        .collect::<Result<Vec<_>>>()?;
    let power_sums = wide
        .iter()
        .map(|g| {
            let s = blocks
                .iter()
                .map(|b| b.block_power_sum(g).expect("tabulated on the wide ball"))
                .sum();
            (g.clone(), s)
        })
        .collect();
    let ball = spec.ball(radius)?;
    let mut cocycles = Vec::new();
    let mut materialized_sides = Vec::new();
    for &n in sides {
        if let Some(c) = materialize(system, n, p, &ball)? {
            cocycles.push(c);
            materialized_sides.push(n);
        }
    }
    let materialized = if cocycles.is_empty() {
        None
    } else {
        Some(AffineAction::new(p, cocycles)?)
    };
    Ok(TruncatedCocycle {
        p,
        dim: system.dim,
        radius,
        blocks,
        power_sums,
        materialized,
        materialized_sides,
    })
}

/// Tolerances used by [`construct_and_certify`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub cocycle: f64,
    pub isometry: f64,
    pub gauge_agreement: f64,
    pub cnd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cocycle: 1e-12,
            isometry: 1e-12,
            gauge_agreement: 1e-10,
            cnd: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructConfig {
    pub group: GroupSpec,
    pub p: f64,
    pub radius: usize,
    pub eps: Vec<f64>,
    pub n_max: usize,
    /// Bypasses schedule selection with fixed box sides.
    pub sides: Option<Vec<usize>>,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl ConstructConfig {
    pub fn new(group: GroupSpec, p: f64, radius: usize) -> Self {
        Self {
            group,
            p,
            radius,
            eps: vec![0.1, 0.05, 0.02],
            n_max: DEFAULT_N_MAX,
            sides: None,
            tolerances: Tolerances::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub n: usize,
    pub majority_mass: String,
    pub materialized: bool,
    /// Word-length of element -> `mu(A_n g Δ A_n)` as `num/den`.
    pub discrepancies: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub config: ConstructConfig,
    /// Set when `p` lies outside `(1, 2)` but inside `(0, 2)`.
    pub out_of_range_warning: bool,
    pub schedule: Vec<ScheduleEntry>,
    pub blocks: Vec<BlockSummary>,
    pub isometry: Vec<IsometryReport>,
    pub cocycle: Option<CocycleReport>,
    pub materialization_gap: Option<f64>,
    pub profile: PropernessProfile,
    pub psi_on_ball: BTreeMap<String, f64>,
    pub cnd: CndReport,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Runs schedule selection, assembly, isometry and cocycle verification,
/// the properness profile and the CND test of `psi(g) = |b(g)|^p`.
pub fn construct_and_certify(config: &ConstructConfig) -> Result<CertificationReport> {
    let p = config.p;
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::input(format!("p must lie in (0, 2), got {p}")));
    }
    let out_of_range_warning = !(p > 1.0 && p < 2.0);
    let system = ShiftSystem::for_group(&config.group)?;
    let mut table = DiscrepancyTable::new();
    let tol = config.tolerances;

    let schedule = match &config.sides {
        Some(sides) => {
            let spec = system.spec();
            let mut entries = Vec::new();
            for (i, &n) in sides.iter().enumerate() {
                check_odd(n)?;
                if system.box_size(n) > MAX_BOX_BITS {
                    return Err(Error::resource(format!(
                        "box side {n} exceeds the window budget of {MAX_BOX_BITS} bits"
                    ))
                    .at_stage("select_block_schedule"));
                }
                let ball = spec.ball(i + 1)?;
                let bound = near_invariance_bound(&system, n, p, &ball, &mut table);
                entries.push(ScheduleEntry {
                    k: i + 1,
                    eps: bound,
                    n,
                    achieved_bound: bound,
                    delta: gauge_per_discrepancy(p) / 2.0,
                    escape_radius: escape_radius(&system, n, &mut table),
                });
            }
            entries
        }
        None => select_block_schedule(&system, &config.eps, p, config.n_max, &mut table)
            .map_err(|e| e.at_stage("select_block_schedule"))?,
    };
    let sides: Vec<usize> = schedule.iter().map(|e| e.n).collect();
    let cocycle = assemble_cocycle(&system, &sides, p, config.radius, &mut table)
        .map_err(|e| e.at_stage("assemble_cocycle"))?;

    let mut checks = Vec::new();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let masses_ok = cocycle.blocks.iter().all(|b| b.majority_mass == half);
    checks.push(Check {
        name: "majority_mass".into(),
        passed: masses_ok,
        detail: "mu(A_n) = 1/2 exactly for every block".into(),
    });
    let escape_monotone = schedule.windows(2).all(|w| w[0].escape_radius <= w[1].escape_radius);
    checks.push(Check {
        name: "escape_radii_monotone".into(),
        passed: escape_monotone,
        detail: format!(
            "S_n = {:?}",
            schedule.iter().map(|e| e.escape_radius).collect::<Vec<_>>()
        ),
    });

    let spec = system.spec();
    let ball = spec.ball(config.radius)?;
    let mut isometry = Vec::new();
    let mut cocycle_report = None;
    let mut gap = None;
    if let Some(action) = &cocycle.materialized {
        for (block, n) in action.blocks().iter().zip(&cocycle.materialized_sides) {
            let r = verify_isometry(block.rep(), p, &ball, tol.isometry, config.seed)
                .map_err(|e| e.at_stage("verify_isometry"))?;
            checks.push(Check {
                name: format!("isometry_n{n}"),
                passed: r.passed,
                detail: format!("max defect {:e}", r.max_isometry_defect),
            });
            isometry.push(r);
        }
        let r = verify_cocycle(action, &ball, tol.cocycle).map_err(|e| e.at_stage("verify_cocycle"))?;
        checks.push(Check {
            name: "cocycle_identity".into(),
            passed: r.passed,
            detail: format!("max defect {:e} over {} pairs", r.max_defect, r.pairs_checked),
        });
        cocycle_report = Some(r);
        let g = cocycle
            .materialization_gap()
            .map_err(|e| e.at_stage("materialization"))?
            .unwrap_or(0.0);
        checks.push(Check {
            name: "closed_form_vs_materialized".into(),
            passed: g <= tol.gauge_agreement,
            detail: format!(
                "max gap {g:e} on blocks n = {:?}",
                cocycle.materialized_sides
            ),
        });
        gap = Some(g);
    }

    let profile = crate::action::PropernessProfile::from_gauges(
        &ball,
        config.radius,
        cocycle.convention(),
        |g| cocycle.gauge(g),
    )
    .map_err(|e| e.at_stage("properness_profile"))?;
    checks.push(Check {
        name: "properness_profile".into(),
        passed: profile.strictly_increasing,
        detail: match profile.flat_at {
            None => format!("strictly increasing on radii 1..={}", config.radius),
            Some(r) => format!("flat profile: no increase at radius {r}"),
        },
    });

    let psi = CndFunction::new(spec.clone(), cocycle.power_sums.clone())
        .map_err(|e| e.at_stage("haagerup_function"))?;
    let kernel = function_to_kernel(&psi, &ball).map_err(|e| e.at_stage("haagerup_function"))?;
    let cnd = cnd_test(&kernel, tol.cnd).map_err(|e| e.at_stage("haagerup_function"))?;
    checks.push(Check {
        name: "psi_cnd".into(),
        passed: cnd.is_cnd(),
        detail: format!(
            "extremal value {:e}, threshold {:e}",
            cnd.extremal_value, cnd.threshold
        ),
    });

    let blocks = cocycle
        .blocks
        .iter()
        .map(|b| BlockSummary {
            n: b.n,
            majority_mass: rational_string(&b.majority_mass),
            materialized: cocycle.materialized_sides.contains(&b.n),
            discrepancies: b.discrepancy_strings(),
        })
        .collect();
    let psi_on_ball = ball
        .iter()
        .map(|g| (g.to_string(), cocycle.power_sums[g]))
        .collect();
    Ok(CertificationReport {
        config: config.clone(),
        out_of_range_warning,
        passed: checks.iter().all(|c| c.passed),
        schedule,
        blocks,
        isometry,
        cocycle: cocycle_report,
        materialization_gap: gap,
        profile,
        psi_on_ball,
        cnd,
        checks,
    })
}

/// Properness profile of the materialized part alone (for inspection).
pub fn materialized_profile(cocycle: &TruncatedCocycle) -> Result<Option<PropernessProfile>> {
    cocycle
        .materialized
        .as_ref()
        .map(|a| properness_profile(a, cocycle.radius))
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{inner_product, lp_gauge};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    /// Brute-force oracle: enumerate all bit strings of the union window.
    fn brute_discrepancy(n: usize, g: usize) -> BigRational {
        let width = n + g;
        let maj = |bits: u64, start: usize| ((bits >> start) & ((1 << n) - 1)).count_ones() as usize > n / 2;
        let differ = (0..1u64 << width).filter(|&b| maj(b, 0) != maj(b, g)).count();
        BigRational::new(BigInt::from(differ), BigInt::from(1u64 << width))
    }

    #[test]
    fn discrepancy_examples() {
        let z = ShiftSystem::new(1).unwrap();
        let mut t = DiscrepancyTable::new();
        assert!(majority_discrepancy(&z, 5, &[0], &mut t).unwrap().is_zero());
        assert_eq!(majority_discrepancy(&z, 1, &[1], &mut t).unwrap(), q(1, 2));
        assert_eq!(majority_discrepancy(&z, 3, &[3], &mut t).unwrap(), q(1, 2));
        assert!(matches!(majority_discrepancy(&z, 4, &[1], &mut t), Err(Error::Input(_))));
    }

    #[test]
    fn discrepancy_matches_enumeration() {
        let z = ShiftSystem::new(1).unwrap();
        let mut t = DiscrepancyTable::new();
        for n in [1, 3, 5, 7] {
            for g in 0..=n + 1 {
                assert_eq!(
                    majority_discrepancy(&z, n, &[g as i64], &mut t).unwrap(),
                    brute_discrepancy(n, g),
                    "n={n} g={g}"
                );
            }
        }
    }

    #[test]
    fn majority_sets_have_half_measure() {
        let mut t = DiscrepancyTable::new();
        for n in (1..=61).step_by(2) {
            assert_eq!(MajoritySet::new(n, 1).unwrap().measure(&mut t), q(1, 2));
        }
        for n in [1, 3, 5, 7] {
            assert_eq!(MajoritySet::new(n, 2).unwrap().measure(&mut t), q(1, 2));
        }
        assert!(MajoritySet::new(2, 1).is_err());
    }

    #[test]
    fn symmetry_and_saturation() {
        let mut t = DiscrepancyTable::new();
        for dim in [1usize, 2] {
            let sys = ShiftSystem::new(dim).unwrap();
            let spec = sys.spec();
            for n in [3, 5, 9] {
                for g in spec.ball(4).unwrap().iter() {
                    let x = g.as_vector().unwrap();
                    let neg: Vec<i64> = x.iter().map(|a| -a).collect();
                    assert_eq!(
                        majority_discrepancy(&sys, n, x, &mut t).unwrap(),
                        majority_discrepancy(&sys, n, &neg, &mut t).unwrap()
                    );
                }
            }
        }
        let z = ShiftSystem::new(1).unwrap();
        for n in [3, 7, 15, 31] {
            let vals: Vec<BigRational> = (0..=n as i64 + 3)
                .map(|g| majority_discrepancy(&z, n, &[g], &mut t).unwrap())
                .collect();
            for w in vals.windows(2) {
                assert!(w[0] <= w[1]);
            }
            for v in &vals[n..] {
                assert_eq!(*v, q(1, 2));
            }
            assert!(vals[n - 1] < q(1, 2));
        }
    }

    #[test]
    fn bound_decreases_with_side() {
        let mut t = DiscrepancyTable::new();
        for g in 1..=5i64 {
            let vals: Vec<BigRational> = (1..=101)
                .step_by(2)
                .map(|n| t.discrepancy(n, (n as i64 - g).max(0) as u64))
                .collect();
            for w in vals.windows(2) {
                assert!(w[1] <= w[0], "g={g}");
            }
        }
        // Z^2: shift (1, 0) on boxes of growing side.
        let sys = ShiftSystem::new(2).unwrap();
        let vals: Vec<BigRational> = (1..=21)
            .step_by(2)
            .map(|n| majority_discrepancy(&sys, n, &[1, 0], &mut t).unwrap())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn block_descriptors() {
        let sys = ShiftSystem::new(1).unwrap();
        let ball = sys.spec().ball(2).unwrap();
        let mut t = DiscrepancyTable::new();
        let b = build_block(&sys, 5, 1.5, &ball, &mut t).unwrap();
        assert_eq!(b.v.power_sum(2.0).sqrt(), 0.5);
        assert_eq!(b.v.mean(), 0.0);
        assert_eq!(b.w.high, 0.5f64.powf(2.0 / 1.5));
        assert_eq!(b.majority_mass, q(1, 2));
        assert_eq!(b.block_power_sum(&sys.spec().identity()), Some(0.0));
    }

    #[test]
    fn closed_forms_match_materialized_vectors() {
        let sys = ShiftSystem::new(1).unwrap();
        let mut t = DiscrepancyTable::new();
        for n in [1usize, 3, 5, 7, 9] {
            let side = 2 * n + 1;
            if side > MATERIALIZATION_BITS {
                continue;
            }
            let m = MaterializedBlock::new(n, 1, side, 1.0).unwrap();
            assert_eq!(m.majority_count * 2, 1 << side);
            assert_eq!(lp_gauge(&m.v).value, 0.5);
            for p in [1.0, 1.2, 1.5, 2.0] {
                let w = mazur_map(&m.v, 2.0, p).unwrap();
                for g in 0..=(n as i64 + 1) {
                    let rho = m.shift(&[g]);
                    let moved = rho.apply(w.values());
                    let diff: Vec<f64> = moved.iter().zip(w.values()).map(|(a, b)| a - b).collect();
                    let explicit = power_sum(m.space.weights(), &diff, p);
                    let d = majority_discrepancy(&sys, n, &[g], &mut t).unwrap();
                    let closed = gauge_per_discrepancy(p) * rational_to_f64(&d);
                    assert!((explicit - closed).abs() <= 1e-10, "n={n} p={p} g={g}");
                }
            }
        }
    }

    #[test]
    fn mixing_identity_matches_materialized_inner_products() {
        let sys = ShiftSystem::new(1).unwrap();
        let mut t = DiscrepancyTable::new();
        for n in [1usize, 3, 5, 7, 9] {
            let side = 2 * n;
            let m = MaterializedBlock::new(n, 1, side.max(n), 2.0).unwrap();
            let shifts: Vec<Vec<i64>> = (0..=n as i64).map(|g| vec![g]).collect();
            let rows = mixing_decay(&sys, n, &shifts, &mut t).unwrap();
            for row in &rows {
                let moved = m.shift(&row.shift).apply(m.v.values());
                let vg = LpVector::new(m.space.clone(), moved, 2.0).unwrap();
                let ip = inner_product(&m.v, &vg).unwrap();
                assert_eq!(ip, rational_to_f64(&row.correlation), "n={n} g={:?}", row.shift);
            }
            assert_eq!(rows[0].correlation, q(1, 4));
            let last = rows.last().unwrap();
            assert!(last.correlation.is_zero());
            assert!((last.l2_distance - 0.5f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_selection() {
        let sys = ShiftSystem::new(1).unwrap();
        let mut t = DiscrepancyTable::new();
        let sat = gauge_per_discrepancy(1.5) / 2.0;
        let s = select_block_schedule(&sys, &[sat], 1.5, 101, &mut t).unwrap();
        assert_eq!(s[0].n, 1);

        let s = select_block_schedule(&sys, &[0.05], 2.0, 4001, &mut t).unwrap();
        let n = s[0].n;
        let at = |n: usize, t: &mut DiscrepancyTable| rational_to_f64(&t.discrepancy(n as u64, n as u64 - 1));
        assert!(at(n, &mut t) <= 0.05);
        assert!(at(n - 2, &mut t) > 0.05);

        let s = select_block_schedule(&sys, &[0.1, 0.05, 0.02], 1.5, 4001, &mut t).unwrap();
        for w in s.windows(2) {
            assert!(w[0].n <= w[1].n);
            assert!(w[0].escape_radius <= w[1].escape_radius);
        }
        for e in &s {
            assert_eq!(e.escape_radius, e.n - 1);
            assert!(e.achieved_bound <= e.eps);
        }

        match select_block_schedule(&sys, &[1e-6], 1.5, 51, &mut t) {
            Err(Error::Resource(msg)) => assert!(msg.contains("best bound")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(select_block_schedule(&sys, &[0.01, 0.1], 1.5, 51, &mut t).is_err());
    }

    #[test]
    fn escape_radius_in_two_dimensions() {
        let sys = ShiftSystem::new(2).unwrap();
        let mut t = DiscrepancyTable::new();
        for n in [1usize, 3, 5] {
            assert_eq!(escape_radius(&sys, n, &mut t), 2 * (n - 1));
        }
    }

    #[test]
    fn three_block_dual_path() {
        let sys = ShiftSystem::new(1).unwrap();
        let mut t = DiscrepancyTable::new();
        let c = assemble_cocycle(&sys, &[3, 5, 7], 1.5, 3, &mut t).unwrap();
        assert_eq!(c.materialized_sides, vec![3, 5, 7]);
        assert!(c.materialization_gap().unwrap().unwrap() <= 1e-10);
        let e = sys.spec().identity();
        assert_eq!(c.power_sums[&e], 0.0);
        let action = c.materialized.as_ref().unwrap();
        let ball = sys.spec().ball(3).unwrap();
        let r = verify_cocycle(action, &ball, 1e-12).unwrap();
        assert!(r.passed, "{r:?}");
        // Total gauge of the materialized sum equals the closed form.
        for g in ball.iter() {
            let explicit = action.cocycle_power_sum(g).unwrap();
            assert!((explicit - c.power_sums[g]).abs() < 1e-10);
        }
        let prof = materialized_profile(&c).unwrap().unwrap();
        assert!(prof.strictly_increasing);
    }

    #[test]
    fn certify_z() {
        let cfg = ConstructConfig::new(GroupSpec::free_abelian(1).unwrap(), 1.5, 4);
        let r = construct_and_certify(&cfg).unwrap();
        assert!(r.passed, "{:#?}", r.checks);
        assert!(!r.out_of_range_warning);
        assert!(r.profile.strictly_increasing);
    }

    #[test]
    fn certify_z2() {
        let mut cfg = ConstructConfig::new(GroupSpec::free_abelian(2).unwrap(), 1.2, 2);
        cfg.eps = vec![0.2, 0.1];
        let r = construct_and_certify(&cfg).unwrap();
        assert!(r.cnd.is_cnd());
        assert!(r.passed, "{:#?}", r.checks);
    }

    #[test]
    fn flat_profile_is_diagnosed() {
        let mut cfg = ConstructConfig::new(GroupSpec::free_abelian(1).unwrap(), 1.5, 3);
        cfg.sides = Some(vec![1]);
        let r = construct_and_certify(&cfg).unwrap();
        assert!(!r.passed);
        let check = r.checks.iter().find(|c| c.name == "properness_profile").unwrap();
        assert!(!check.passed);
        assert!(check.detail.contains("flat profile"));
    }

    #[test]
    fn z2_default_targets_exceed_budget() {
        let cfg = ConstructConfig::new(GroupSpec::free_abelian(2).unwrap(), 1.2, 2);
        match construct_and_certify(&cfg) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "select_block_schedule");
                assert!(matches!(*source, Error::Resource(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let f2 = GroupSpec::free(2).unwrap();
        assert!(matches!(
            construct_and_certify(&ConstructConfig::new(f2, 1.5, 2)),
            Err(Error::Input(_))
        ));
        let z = GroupSpec::free_abelian(1).unwrap();
        assert!(construct_and_certify(&ConstructConfig::new(z.clone(), 2.0, 2)).is_err());
        let r = construct_and_certify(&ConstructConfig::new(z, 0.8, 2)).unwrap();
        assert!(r.out_of_range_warning);
    }
}
