//! Conditionally negative definite kernels.
//!
//! A symmetric kernel `K` is CND when `c^T K c <= 0` for every `c` with
//! `sum c_i = 0`. [`cnd_test`] decides this by diagonalizing `K` restricted
//! to the mean-zero subspace, which also yields a certifying witness.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::group::{Ball, GroupElement, GroupSpec};
use crate::measure::{power_sum, LpVector};

/// Absolute symmetry tolerance, relative to `1 + max|K|`.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    labels: Vec<String>,
    matrix: DMatrix<f64>,
    distance_type: bool,
}

impl Kernel {
    pub fn new(labels: Vec<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::input(format!(
                "kernel matrix must be square, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        if labels.len() != n {
            return Err(Error::input(format!(
                "{} labels for a {n}x{n} kernel",
                labels.len()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("kernel has non-finite entries"));
        }
        let scale = 1.0 + matrix.amax();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::input(format!(
                        "kernel is not symmetric at ({}, {})",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(Self {
            labels,
            matrix,
            distance_type: false,
        })
    }

    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("kernel rows must all have length n"));
        }
        Self::new(labels, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Builds `K(i, j) = f(i, j)` with labels `0..n`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(
            (0..n).map(|i| i.to_string()).collect(),
            DMatrix::from_fn(n, n, f),
        )
    }

    /// Kernel `|x - y|^q` on points of the real line.
    pub fn power_distance_on_line(points: &[f64], q: f64) -> Result<Self> {
        let k = Self::new(
            points.iter().map(|x| x.to_string()).collect(),
            DMatrix::from_fn(points.len(), points.len(), |i, j| {
                (points[i] - points[j]).abs().powf(q)
            }),
        )?;
        k.into_distance_type()
    }

    /// Flags the kernel as distance-type after checking the zero diagonal.
    pub fn into_distance_type(mut self) -> Result<Self> {
        if let Some(i) = (0..self.len()).find(|&i| self.matrix[(i, i)] != 0.0) {
            return Err(Error::input(format!(
                "distance-type kernel has nonzero diagonal at {}",
                self.labels[i]
            )));
        }
        self.distance_type = true;
        Ok(self)
    }

    pub fn is_distance_type(&self) -> bool {
        self.distance_type
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }

    /// `1 + max|K|`, the scale used by all relative tolerances.
    pub fn scale(&self) -> f64 {
        1.0 + self.max_abs()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Entrywise map keeping labels; symmetry is preserved by construction.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Kernel {
        Kernel {
            labels: self.labels.clone(),
            matrix: self.matrix.map(f),
            distance_type: false,
        }
    }

    pub fn scaled(&self, lambda: f64) -> Kernel {
        Kernel {
            distance_type: self.distance_type,
            ..self.map(|x| lambda * x)
        }
    }

    /// Simultaneous relabeling: point `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Kernel> {
        let n = self.len();
        let mut inv = vec![usize::MAX; n];
        for (i, &j) in perm.iter().enumerate() {
            if j >= n || inv[j] != usize::MAX {
                return Err(Error::input("not a permutation"));
            }
            inv[j] = i;
        }
        if perm.len() != n {
            return Err(Error::input("permutation length differs from kernel size"));
        }
        Ok(Kernel {
            labels: inv.iter().map(|&i| self.labels[i].clone()).collect(),
            matrix: DMatrix::from_fn(n, n, |a, b| self.matrix[(inv[a], inv[b])]),
            distance_type: self.distance_type,
        })
    }

    /// `c^T K c`.
    pub fn quadratic_form(&self, c: &[f64]) -> f64 {
        let v = DVector::from_column_slice(c);
        v.dot(&(&self.matrix * &v))
    }
}

/// JSON form `{"labels":[...], "matrix":[[...],...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelJson {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub distance_type: bool,
}

impl From<&Kernel> for KernelJson {
    fn from(k: &Kernel) -> Self {
        Self {
            labels: k.labels.clone(),
            matrix: k
                .matrix
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            distance_type: k.distance_type,
        }
    }
}

impl TryFrom<KernelJson> for Kernel {
    type Error = Error;

    fn try_from(j: KernelJson) -> Result<Self> {
        let k = Kernel::from_rows(j.labels, &j.matrix)?;
        if j.distance_type {
            k.into_distance_type()
        } else {
            Ok(k)
        }
    }
}

impl Serialize for Kernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KernelJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Kernel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        KernelJson::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "CND")]
    Cnd,
    #[serde(rename = "not-CND")]
    NotCnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CndReport {
    pub verdict: Verdict,
    /// Largest `c^T K c` over unit vectors with `sum c = 0`.
    pub extremal_value: f64,
    /// Unit mean-zero vector attaining the extremal value. Empty for a
    /// single point, where the mean-zero subspace is trivial.
    pub witness: Vec<f64>,
    pub tolerance: f64,
    /// `tolerance * (1 + max|K|)`; the verdict is CND iff the extremal
    /// value does not exceed it.
    pub threshold: f64,
    /// `|P K c - lambda c|` at the witness, `P` the centering projector.
    pub eigensolver_residual: f64,
}

impl CndReport {
    pub fn is_cnd(&self) -> bool {
        self.verdict == Verdict::Cnd
    }
}

/// Orthonormal basis of `{c : sum c = 0}` in `R^n` (Helmert columns).
fn mean_zero_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n.saturating_sub(1), |i, j| {
        let k = (j + 1) as f64;
        let norm = (k * (k + 1.0)).sqrt();
        match i.cmp(&(j + 1)) {
            std::cmp::Ordering::Less => 1.0 / norm,
            std::cmp::Ordering::Equal => -k / norm,
            std::cmp::Ordering::Greater => 0.0,
        }
    })
}

/// Flips `v` so its first clearly nonzero entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-9 * max) {
        if *x < 0.0 {
            v.iter_mut().for_each(|y| *y = -*y);
        }
    }
}

pub fn cnd_test(k: &Kernel, tol: f64) -> Result<CndReport> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::input(format!("tolerance must be nonnegative, got {tol}")));
    }
    let n = k.len();
    let threshold = tol * k.scale();
    if n < 2 {
        return Ok(CndReport {
            verdict: Verdict::Cnd,
            extremal_value: 0.0,
            witness: Vec::new(),
            tolerance: tol,
            threshold,
            eigensolver_residual: 0.0,
        });
    }
    let q = mean_zero_basis(n);
    let restricted = q.transpose() * k.matrix() * &q;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let eig = SymmetricEigen::new(restricted);
    let (top, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("n >= 2");
    let mut c: Vec<f64> = (&q * eig.eigenvectors.column(top)).iter().copied().collect();
    canonical_sign(&mut c);
    let cv = DVector::from_column_slice(&c);
    let mut kc = k.matrix() * &cv;
    let mean = kc.mean();
    kc.add_scalar_mut(-mean);
    let residual = (kc - &cv * lambda).norm();
    Ok(CndReport {
        verdict: if lambda <= threshold {
            Verdict::Cnd
        } else {
            Verdict::NotCnd
        },
        extremal_value: lambda,
        witness: c,
        tolerance: tol,
        threshold,
        eigensolver_residual: residual,
    })
}

/// Smallest eigenvalue of a symmetric kernel, for positive semidefiniteness.
pub fn min_eigenvalue(k: &Kernel) -> f64 {
    if k.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(k.matrix().clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// A real function on a ball of a group, symmetric under inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct CndFunction {
    spec: GroupSpec,
    values: BTreeMap<GroupElement, f64>,
}

/// Symmetry tolerance for `psi(g) = psi(g^-1)`.
pub const FUNCTION_SYMMETRY_TOL: f64 = 1e-12;

impl CndFunction {
    pub fn new(spec: GroupSpec, values: BTreeMap<GroupElement, f64>) -> Result<Self> {
        for (g, v) in &values {
            spec.validate(g)?;
            if !v.is_finite() {
                return Err(Error::input(format!("psi({g}) is not finite")));
            }
            if let Some(w) = values.get(&spec.inverse(g)) {
                if (v - w).abs() > FUNCTION_SYMMETRY_TOL * (1.0 + v.abs()) {
                    return Err(Error::input(format!("psi({g}) = {v} differs from psi({g}^-1) = {w}")));
                }
            }
        }
        if let Some(v) = values.get(&spec.identity()) {
            if *v < 0.0 {
                return Err(Error::input(format!("psi(e) = {v} is negative")));
            }
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: &GroupSpec, ball: &Ball, f: impl Fn(&GroupElement) -> f64) -> Result<Self> {
        Self::new(spec.clone(), ball.iter().map(|g| (g.clone(), f(g))).collect())
    }

    pub fn word_length(spec: &GroupSpec, ball: &Ball) -> Result<Self> {
        Self::from_fn(spec, ball, |g| spec.word_length(g) as f64)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn values(&self) -> &BTreeMap<GroupElement, f64> {
        &self.values
    }

    pub fn get(&self, g: &GroupElement) -> Option<f64> {
        self.values.get(g).copied()
    }
}

/// `K(g, h) = psi(g h^-1)` over the elements of `ball`.
pub fn function_to_kernel(psi: &CndFunction, ball: &Ball) -> Result<Kernel> {
    let spec = psi.spec();
    let n = ball.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, g) in ball.iter().enumerate() {
        for (j, h) in ball.iter().enumerate().take(i + 1) {
            let x = spec.multiply(g, &spec.inverse(h))?;
            let v = psi
                .get(&x)
                .ok_or_else(|| Error::input(format!("psi is not defined at {x} = {g} * ({h})^-1")))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Kernel::new(ball.iter().map(|g| g.to_string()).collect(), m)
}

/// Entrywise `K^alpha` for `0 < alpha < 1` on a nonnegative kernel.
pub fn power_transform(k: &Kernel, alpha: f64) -> Result<Kernel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if let Some(x) = k.matrix().iter().find(|x| **x < 0.0) {
        return Err(Error::input(format!("power transform needs K >= 0, found entry {x}")));
    }
    let mut out = k.map(|x| x.powf(alpha));
    out.distance_type = k.distance_type;
    Ok(out)
}

/// As [`power_transform`], but `alpha = 1` returns the kernel unchanged.
pub fn power_transform_or_identity(k: &Kernel, alpha: f64) -> Result<Kernel> {
    if alpha == 1.0 {
        return Ok(k.clone());
    }
    power_transform(k, alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpKernelRow {
    pub t: f64,
    /// CND test of `1 - exp(-tK)`.
    pub one_minus_exp: CndReport,
    /// Smallest eigenvalue of `exp(-tK)`.
    pub exp_min_eigenvalue: f64,
    /// `tol * (1 + max exp(-tK))`.
    pub psd_threshold: f64,
    pub psd: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpKernelReport {
    /// CND test of the input kernel itself.
    pub input: CndReport,
    pub rows: Vec<ExpKernelRow>,
    pub passed: bool,
}

/// For each `t`, tests that `1 - exp(-tK)` is CND and `exp(-tK)` is PSD.
pub fn exp_kernel_test(k: &Kernel, t_grid: &[f64], tol: f64) -> Result<ExpKernelReport> {
    if let Some(t) = t_grid.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::input(format!("t must be positive, got {t}")));
    }
    let input = cnd_test(k, tol)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let one_minus = k.map(|x| -(-t * x).exp_m1());
        let one_minus_exp = cnd_test(&one_minus, tol)?;
        let e = k.map(|x| (-t * x).exp());
        let exp_min_eigenvalue = min_eigenvalue(&e);
        let psd_threshold = tol * e.scale();
        let psd = exp_min_eigenvalue >= -psd_threshold;
        rows.push(ExpKernelRow {
            t,
            passed: psd && one_minus_exp.is_cnd(),
            one_minus_exp,
            exp_min_eigenvalue,
            psd_threshold,
            psd,
        });
    }
    Ok(ExpKernelReport {
        passed: input.is_cnd() && rows.iter().all(|r| r.passed),
        input,
        rows,
    })
}

/// Quadrature settings for [`frullani_power`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Lower cut point; `[0, eps]` is handled by a series.
    pub eps: f64,
    /// Upper cut point is `t_max_factor / x`; the tail is closed form.
    pub t_max_factor: f64,
    /// Simpson nodes on `[ln eps, ln T]` (rounded up to odd).
    pub nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            t_max_factor: 200.0,
            nodes: 20_000,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `c_alpha = alpha / Gamma(1 - alpha)`, the normalization making
/// `c_alpha * int_0^inf (1 - e^{-t}) t^{-alpha-1} dt = 1`.
pub fn frullani_constant(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha / gamma(1.0 - alpha))
}

/// `int_0^inf (1 - e^{-tx}) t^{-alpha-1} dt`, without the constant.
pub fn frullani_integral(x: f64, alpha: f64, quad: &QuadratureConfig) -> Result<f64> {
    check_alpha(alpha)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::input(format!("x must be positive, got {x}")));
    }
    if !(quad.eps > 0.0 && quad.t_max_factor > 0.0 && quad.nodes >= 3) {
        return Err(Error::input("quadrature needs eps > 0, t_max_factor > 0, nodes >= 3"));
    }
    let eps = quad.eps;
    let t_max = quad.t_max_factor / x;
    if t_max <= eps {
        return Err(Error::input(format!("upper cut {t_max} is below eps {eps}")));
    }
    // Substituting t = e^u turns the integrand into (1 - e^{-x e^u}) e^{-alpha u},
    // smooth on the whole range.
    let intervals = (quad.nodes - 1).max(2).next_multiple_of(2);
    let (a, b) = (eps.ln(), t_max.ln());
    let h = (b - a) / intervals as f64;
    let f = |u: f64| -(-x * u.exp()).exp_m1() * (-alpha * u).exp();
    let mut body = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        body += w * f(a + i as f64 * h);
    }
    body *= h / 3.0;
    // 1 - e^{-tx} = tx - (tx)^2/2 + ... on [0, eps].
    let head = x * eps.powf(1.0 - alpha) / (1.0 - alpha)
        - x * x * eps.powf(2.0 - alpha) / (2.0 * (2.0 - alpha));
    // e^{-tx} is below e^{-t_max_factor} past the upper cut.
    let tail = t_max.powf(-alpha) / alpha;
    Ok(head + body + tail)
}

/// `c_alpha * int_0^inf (1 - e^{-tx}) t^{-alpha-1} dt`, which equals `x^alpha`.
pub fn frullani_power(x: f64, alpha: f64, quad: &QuadratureConfig) -> Result<f64> {
    Ok(frullani_constant(alpha)? * frullani_integral(x, alpha, quad)?)
}

/// Squared Euclidean distances of `n` seeded points uniform in `[-1, 1]^dim`.
pub fn random_cnd_kernel(n: usize, dim: usize, seed: u64) -> Result<Kernel> {
    if n == 0 || dim == 0 {
        return Err(Error::input("random_cnd_kernel needs n, dim >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Kernel::new(
        (0..n).map(|i| format!("x{i}")).collect(),
        DMatrix::from_fn(n, n, |i, j| {
            points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        }),
    )?
    .into_distance_type()
}

/// `K(x, y) = sum w |x - y|^p` over a set of vectors in one `L_p(mu)`: the
/// `p`-th power of the norm for `p >= 1`, the power-sum metric for `p < 1`.
pub fn lp_power_kernel(points: &[LpVector]) -> Result<Kernel> {
    let first = points
        .first()
        .ok_or_else(|| Error::input("need at least one point"))?;
    let p = first.p();
    for x in points {
        if !x.space().same_as(first.space()) || x.p() != p {
            return Err(Error::input("all points must share space and exponent"));
        }
    }
    let w = first.space().weights();
    let n = points.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d: Vec<f64> = points[i]
            .values()
            .iter()
            .zip(points[j].values())
            .map(|(a, b)| a - b)
            .collect();
        power_sum(w, &d, p)
    });
    Kernel::new((0..n).map(|i| format!("x{i}")).collect(), m)?.into_distance_type()
}
