//! Supported initial costs `Phi`, their conjugates and proximal maps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, HjError, Result};

fn one() -> f64 {
    1.0
}

/// One branch `0.5 ||x - center||^2 + offset` of a min-of-quadratics cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBranch {
    pub center: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

/// Initial cost descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialCostSpec {
    /// `<slope, x>`.
    Linear { slope: Vec<f64> },
    /// `||x - center||^2 / (2 weight) + offset`.
    Quadratic {
        center: Vec<f64>,
        #[serde(default = "one")]
        weight: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `sqrt(<x, M x>)`, `M` symmetric positive definite, given row by row.
    EllipsoidNorm { matrix: Vec<Vec<f64>> },
    /// `0.5 ||x - shift||_1^2`.
    ShiftedL1Squared { shift: Vec<f64> },
    /// `min_j 0.5 ||x - y_j||^2 + alpha_j`.
    MinOfQuadratics { branches: Vec<QuadraticBranch> },
}

impl InitialCostSpec {
    pub fn quadratic(center: Vec<f64>, weight: f64, offset: f64) -> Self {
        Self::Quadratic { center, weight, offset }
    }

    /// Dimension implied by the descriptor, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Linear { slope } => Some(slope.len()),
            Self::Quadratic { center, .. } => Some(center.len()),
            Self::EllipsoidNorm { matrix } => Some(matrix.len()),
            Self::ShiftedL1Squared { shift } => Some(shift.len()),
            Self::MinOfQuadratics { branches } => branches.first().map(|b| b.center.len()),
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Self::MinOfQuadratics { branches } if branches.len() > 1)
    }

    /// Checks shapes against `n` and the structural invariants.
    pub fn validate(&self, n: usize) -> Result<()> {
        let finite = |v: &[f64], what: &str| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(HjError::InvalidInput(format!("{what} has non-finite entries")))
            }
        };
        match self {
            Self::Linear { slope } => {
                check_len(n, slope.len())?;
                finite(slope, "slope")
            }
            Self::Quadratic { center, weight, offset } => {
                check_len(n, center.len())?;
                finite(center, "center")?;
                if !(*weight > 0.0 && weight.is_finite()) {
                    return Err(HjError::InvalidInput(format!(
                        "quadratic weight must be positive, got {weight}"
                    )));
                }
                finite(&[*offset], "offset")
            }
            Self::EllipsoidNorm { matrix } => {
                check_len(n, matrix.len())?;
                Ellipsoid::new(rows_to_matrix(matrix)?).map(|_| ())
            }
            Self::ShiftedL1Squared { shift } => {
                check_len(n, shift.len())?;
                finite(shift, "shift")
            }
            Self::MinOfQuadratics { branches } => {
                if branches.is_empty() {
                    return Err(HjError::InvalidInput("min-of-quadratics needs at least one branch".into()));
                }
                for br in branches {
                    check_len(n, br.center.len())?;
                    finite(&br.center, "branch center")?;
                    finite(&[br.offset], "branch offset")?;
                }
                Ok(())
            }
        }
    }

    /// `Phi(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if let Some(n) = self.dim() {
            check_len(n, x.len())?;
        }
        Ok(match self {
            Self::Linear { slope } => dot(slope, x),
            Self::Quadratic { center, weight, offset } => {
                sq_dist(x, center) / (2.0 * weight) + offset
            }
            Self::EllipsoidNorm { matrix } => {
                let q: f64 = matrix.iter().zip(x).map(|(row, xi)| xi * dot(row, x)).sum();
                q.max(0.0).sqrt()
            }
            Self::ShiftedL1Squared { shift } => {
                let l1: f64 = x.iter().zip(shift).map(|(a, b)| (a - b).abs()).sum();
                0.5 * l1 * l1
            }
            Self::MinOfQuadratics { branches } => branches
                .iter()
                .map(|br| 0.5 * sq_dist(x, &br.center) + br.offset)
                .fold(f64::INFINITY, f64::min),
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(HjError::InvalidInput("empty matrix".into()));
    }
    for r in rows {
        check_len(n, r.len())?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(HjError::InvalidInput("matrix has non-finite entries".into()));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `Phi*(p)` for `Phi(x) = ||x - y||^2 / (2 lq) + alpha`.
pub fn conjugate_quadratic(p: &[f64], y: &[f64], lq: f64, alpha: f64) -> Result<f64> {
    check_len(y.len(), p.len())?;
    if !(lq > 0.0) {
        return Err(HjError::InvalidInput(format!("weight must be positive, got {lq}")));
    }
    let mut s = 0.0;
    let mut yy = 0.0;
    for (pi, yi) in p.iter().zip(y) {
        let u = pi + yi / lq;
        s += u * u;
        yy += yi * yi;
    }
    Ok(0.5 * lq * s - yy / (2.0 * lq) - alpha)
}

/// The set `{v : <v, M^-1 v> <= 1}` with `M` kept in eigen form.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    /// `None` when `M` is diagonal (the basis is the identity).
    basis: Option<DMatrix<f64>>,
}

impl Ellipsoid {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(HjError::InvalidInput("ellipsoid matrix must be square and non-empty".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(HjError::NotPositiveDefinite);
                }
            }
        }
        if m.clone().cholesky().is_none() {
            return Err(HjError::NotPositiveDefinite);
        }
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
        let (eigenvalues, basis) = if diagonal {
            (m.diagonal(), None)
        } else {
            let eig = SymmetricEigen::new(m.clone());
            (eig.eigenvalues, Some(eig.eigenvectors))
        };
        if eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(HjError::NotPositiveDefinite);
        }
        Ok(Self { matrix: m, eigenvalues, basis })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `<v, M^-1 v>`.
    pub fn gauge_sq(&self, v: &[f64]) -> f64 {
        let vt = self.to_eigen(v);
        vt.iter().zip(self.eigenvalues.iter()).map(|(c, l)| c * c / l).sum()
    }

    fn to_eigen(&self, v: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(v);
        match &self.basis {
            Some(q) => q.tr_mul(&v),
            None => v,
        }
    }

    fn from_eigen(&self, v: DVector<f64>) -> Vec<f64> {
        match &self.basis {
            Some(q) => (q * v).as_slice().to_vec(),
            None => v.as_slice().to_vec(),
        }
    }

    /// Euclidean projection onto the set; `tol` bounds `|<v, M^-1 v> - 1|`
    /// for points that start outside.
    pub fn project(&self, z: &[f64], tol: f64) -> Result<Vec<f64>> {
        check_len(self.dim(), z.len())?;
        if !(tol > 0.0) {
            return Err(HjError::InvalidInput(format!("tolerance must be positive, got {tol}")));
        }
        let zt = self.to_eigen(z);
        let lam = &self.eigenvalues;
        // g(mu) = sum z_i^2 l_i / (l_i + mu)^2 - 1 is convex and decreasing
        let g = |mu: f64| -> (f64, f64) {
            let mut g = -1.0;
            let mut dg = 0.0;
            for (zi, li) in zt.iter().zip(lam.iter()) {
                let d = li + mu;
                let w = zi * zi * li / (d * d);
                g += w;
                dg -= 2.0 * w / d;
            }
            (g, dg)
        };
        let (g0, _) = g(0.0);
        if g0 <= 0.0 {
            return Ok(z.to_vec());
        }
        let mut lo = 0.0;
        let mut hi = zt.iter().zip(lam.iter()).map(|(zi, li)| zi * zi * li).sum::<f64>().sqrt();
        let mut mu = 0.0;
        for _ in 0..200 {
            let (gm, dg) = g(mu);
            if gm.abs() <= tol {
                break;
            }
            if gm > 0.0 {
                lo = mu;
            } else {
                hi = mu;
            }
            let mut next = mu - gm / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                mu = next;
                break;
            }
            mu = next;
        }
        let vt = DVector::from_iterator(
            zt.len(),
            zt.iter().zip(lam.iter()).map(|(zi, li)| zi * li / (li + mu)),
        );
        Ok(self.from_eigen(vt))
    }
}

/// Projection of `z` onto `{v : <v, M^-1 v> <= 1}`.
pub fn project_ellipsoid(z: &[f64], m: &DMatrix<f64>, tol: f64) -> Result<Vec<f64>> {
    Ellipsoid::new(m.clone())?.project(z, tol)
}

/// `argmin_u (mu/2) ||u||_1^2 + 0.5 ||u - w||^2`, exact.
pub(crate) fn prox_half_l1_squared(w: &[f64], mu: f64) -> Vec<f64> {
    let mut mags: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    // the active set is a prefix of the sorted magnitudes; take the longest
    // prefix whose smallest entry stays above the induced threshold
    let mut sum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        let cand_sum = sum + m;
        let cand_theta = mu * cand_sum / (1.0 + mu * (k + 1) as f64);
        if m <= cand_theta {
            break;
        }
        sum = cand_sum;
        theta = cand_theta;
    }
    w.iter().map(|&v| v.signum() * (v.abs() - theta).max(0.0)).collect()
}

/// `argmin_v Phi(lambda v) + (lambda/2) ||v - z||^2` for
/// `Phi = 0.5 ||. - shift||_1^2`.
pub fn prox_shifted_l1_squared(z: &[f64], shift: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_len(shift.len(), z.len())?;
    if !(lambda > 0.0) {
        return Err(HjError::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let w: Vec<f64> = z.iter().zip(shift).map(|(zi, si)| lambda * zi - si).collect();
    let u = prox_half_l1_squared(&w, lambda);
    Ok(u.iter().zip(shift).map(|(ui, si)| (ui + si) / lambda).collect())
}

/// Prox of `Phi* / lambda` at `z` through the Moreau identity, given the prox
/// of `x -> Phi(lambda x) / lambda` (which already carries `lambda`).
pub fn moreau_v_update<F>(z: &[f64], prox_phi_scaled: F) -> Result<Vec<f64>>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>>,
{
    let u = prox_phi_scaled(z)?;
    check_len(z.len(), u.len())?;
    Ok(z.iter().zip(&u).map(|(a, b)| a - b).collect())
}

/// Splits a min-of-quadratics cost into its convex quadratic branches.
pub fn minplus_components(spec: &InitialCostSpec) -> Result<Vec<InitialCostSpec>> {
    match spec {
        InitialCostSpec::MinOfQuadratics { branches } => {
            if branches.is_empty() {
                return Err(HjError::InvalidInput("min-of-quadratics needs at least one branch".into()));
            }
            Ok(branches
                .iter()
                .map(|b| InitialCostSpec::quadratic(b.center.clone(), 1.0, b.offset))
                .collect())
        }
        other => Err(HjError::InvalidInput(format!(
            "expected a min-of-quadratics cost, got {other:?}"
        ))),
    }
}
