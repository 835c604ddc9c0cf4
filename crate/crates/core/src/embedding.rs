//! Euclidean realizations of CND kernels and escape profiles of functions
//! on Cayley balls.
//!
//! A CND kernel with zero diagonal is a squared Euclidean distance: the
//! centered Gram matrix `G = -1/2 P K P` is positive semidefinite and any
//! factorization `G = X X^T` gives points with `|x_i - x_j|^2 = K(i, j)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cnd_test, CndFunction, Kernel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HilbertEmbedding {
    pub labels: Vec<String>,
    /// One row per point, columns ordered by decreasing eigenvalue.
    pub coordinates: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// `max |x_i - x_j|^2 - K(i, j)|`.
    pub gram_residual: f64,
}

impl HilbertEmbedding {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.coordinates[i]
            .iter()
            .zip(&self.coordinates[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

pub fn gns_embed(k: &Kernel, tol: f64) -> Result<HilbertEmbedding> {
    let n = k.len();
    for i in 0..n {
        if k.get(i, i) != 0.0 {
            return Err(Error::input(format!(
                "embedding needs a zero diagonal, K({0}, {0}) = {1}",
                k.labels()[i],
                k.get(i, i)
            )));
        }
    }
    if let Some(x) = k.matrix().iter().find(|x| **x < 0.0) {
        return Err(Error::input(format!("embedding needs K >= 0, found {x}")));
    }
    let report = cnd_test(k, tol)?;
    if !report.is_cnd() {
        return Err(Error::NotCnd {
            extremal_value: report.extremal_value,
            threshold: report.threshold,
            witness: report.witness,
        });
    }
    let cutoff = tol * k.scale();
    let mut centered = k.matrix().clone();
    let row_means: Vec<f64> = (0..n).map(|i| centered.row(i).mean()).collect();
    let total_mean = if n == 0 { 0.0 } else { row_means.iter().sum::<f64>() / n as f64 };
    for i in 0..n {
        for j in 0..n {
            centered[(i, j)] = -0.5 * (centered[(i, j)] - row_means[i] - row_means[j] + total_mean);
        }
    }
    let gram = (&centered + centered.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut kept = Vec::new();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        if lambda < -cutoff {
            return Err(Error::Inconsistent {
                eigenvalue: lambda,
                cutoff,
            });
        }
        if lambda > cutoff {
            kept.push(idx);
        }
    }
    let m = kept.len();
    let mut coords = DMatrix::zeros(n, m);
    for (col, &idx) in kept.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() + 1e-12 { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let s = eig.eigenvalues[idx].sqrt();
        for i in 0..n {
            coords[(i, col)] = v[i] * s;
        }
    }
    let coordinates: Vec<Vec<f64>> = coords
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut emb = HilbertEmbedding {
        labels: k.labels().to_vec(),
        coordinates,
        eigenvalues: kept.iter().map(|&i| eig.eigenvalues[i]).collect(),
        gram_residual: 0.0,
    };
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            residual = residual.max((emb.squared_distance(i, j) - k.get(i, j)).abs());
        }
    }
    emb.gram_residual = residual;
    Ok(emb)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub radius: usize,
    /// Minimum of psi over the sphere; `None` when the sphere is empty.
    pub min_psi: Option<f64>,
}

/// `r -> min { psi(g) : |g| = r }` for each requested radius.
pub fn escape_profile(psi: &CndFunction, radii: &[usize]) -> Result<Vec<EscapeRow>> {
    let max_r = radii.iter().copied().max().unwrap_or(0);
    let ball = psi.spec().ball(max_r)?;
    radii
        .iter()
        .map(|&r| {
            let mut min: Option<f64> = None;
            for g in ball.sphere(r) {
                let v = psi
                    .get(g)
                    .ok_or_else(|| Error::input(format!("psi is not defined at {g}")))?;
                min = Some(min.map_or(v, |m: f64| m.min(v)));
            }
            Ok(EscapeRow { radius: r, min_psi: min })
        })
        .collect()
}

/// Non-decreasing over the window and strictly larger at the end than at
/// radius zero.
pub fn escapes(profile: &[EscapeRow]) -> bool {
    let values: Vec<f64> = profile.iter().filter_map(|r| r.min_psi).collect();
    values.windows(2).all(|w| w[0] <= w[1])
        && values.len() >= 2
        && values.last() > values.first()
}

pub fn escape_csv(profile: &[EscapeRow]) -> String {
    let mut out = String::from("radius,min_psi\n");
    for row in profile {
        match row.min_psi {
            Some(v) => out.push_str(&format!("{},{v}\n", row.radius)),
            None => out.push_str(&format!("{},\n", row.radius)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupSpec;
    use crate::kernel::{function_to_kernel, random_cnd_kernel};

    const TOL: f64 = 1e-9;

    #[test]
    fn zero_kernel_collapses() {
        let e = gns_embed(&Kernel::from_fn(3, |_, _| 0.0).unwrap(), TOL).unwrap();
        assert_eq!(e.dimension(), 0);
        assert!(e.coordinates.iter().all(|r| r.is_empty()));
        assert_eq!(e.gram_residual, 0.0);
    }

    #[test]
    fn integer_ball_with_l1_kernel() {
        let z = GroupSpec::free_abelian(1).unwrap();
        let psi = CndFunction::word_length(&z, &z.ball(4).unwrap()).unwrap();
        let k = function_to_kernel(&psi, &z.ball(2).unwrap()).unwrap();
        let e = gns_embed(&k, TOL).unwrap();
        assert!(e.gram_residual <= 1e-8);
        for i in 0..5 {
            for j in 0..5 {
                assert!((e.squared_distance(i, j) - k.get(i, j)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn collinear_points() {
        let k = Kernel::power_distance_on_line(&[0.0, 1.0, 2.0], 2.0).unwrap();
        let e = gns_embed(&k, TOL).unwrap();
        assert_eq!(e.dimension(), 1);
        assert!((e.squared_distance(0, 1) - 1.0).abs() < 1e-12);
        assert!((e.squared_distance(1, 2) - 1.0).abs() < 1e-12);
        assert!((e.squared_distance(0, 2) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_cnd_with_witness() {
        let k = Kernel::power_distance_on_line(&[0.0, 1.0, 2.0, 3.0], 3.0).unwrap();
        match gns_embed(&k, TOL) {
            Err(Error::NotCnd { witness, .. }) => assert_eq!(witness.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
        let diag = Kernel::from_fn(2, |_, _| 1.0).unwrap();
        assert!(matches!(gns_embed(&diag, TOL), Err(Error::Input(_))));
    }

    #[test]
    fn random_points_round_trip() {
        for seed in 0..5 {
            let k = random_cnd_kernel(20, 3, seed).unwrap();
            let e = gns_embed(&k, TOL).unwrap();
            assert!(e.gram_residual <= 1e-8);
            assert!(e.dimension() <= 3);
        }
    }

    #[test]
    fn word_length_chain() {
        for spec in ["Z", "Z^2", "F2"] {
            let spec: GroupSpec = spec.parse().unwrap();
            let psi = CndFunction::word_length(&spec, &spec.ball(8).unwrap()).unwrap();
            for r in 1..=4 {
                let k = function_to_kernel(&psi, &spec.ball(r).unwrap()).unwrap();
                let e = gns_embed(&k, TOL).unwrap();
                assert!(e.gram_residual <= 1e-8, "{spec} r={r}: {}", e.gram_residual);
            }
        }
    }

    #[test]
    fn escape_profiles() {
        let f2 = GroupSpec::free(2).unwrap();
        let b = f2.ball(4).unwrap();
        let zero = CndFunction::from_fn(&f2, &b, |_| 0.0).unwrap();
        let prof = escape_profile(&zero, &[0, 1, 2, 3, 4]).unwrap();
        assert!(prof.iter().all(|r| r.min_psi == Some(0.0)));
        assert!(!escapes(&prof));
        let wl = CndFunction::word_length(&f2, &b).unwrap();
        let prof = escape_profile(&wl, &[0, 1, 2, 3, 4]).unwrap();
        for row in &prof {
            assert_eq!(row.min_psi, Some(row.radius as f64));
        }
        assert!(escapes(&prof));
        assert!(escape_csv(&prof).starts_with("radius,min_psi\n0,0\n"));
    }
}
