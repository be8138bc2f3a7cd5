//! Tridiagonal systems and the diffusion operators `A1`, `A1*`.

use crate::error::{Error, Result};
use crate::grid::StateGrid;

/// Tridiagonal matrix stored by diagonals; `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let mut y = self.diag[j] * x[j];
                if j > 0 {
                    y += self.upper[j - 1] * x[j - 1];
                }
                if j + 1 < n {
                    y += self.lower[j + 1] * x[j + 1];
                }
                y
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut t = Self::identity(n);
        t.diag.clone_from(&self.diag);
        for i in 1..n {
            t.lower[i] = self.upper[i - 1];
            t.upper[i - 1] = self.lower[i];
        }
        t
    }

    /// LU factorization without pivoting (Thomas algorithm); valid for the
    /// diagonally dominant matrices assembled here.
    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.len();
        let mut l = vec![0.0; n];
        let mut d = vec![0.0; n];
        d[0] = self.diag[0];
        for i in 1..n {
            if d[i - 1] == 0.0 || !d[i - 1].is_finite() {
                return Err(Error::InvalidArgument(format!("singular tridiagonal pivot at row {}", i - 1)));
            }
            l[i] = self.lower[i] / d[i - 1];
            d[i] = self.diag[i] - l[i] * self.upper[i - 1];
        }
        if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
            return Err(Error::InvalidArgument(format!("singular tridiagonal pivot at row {}", n - 1)));
        }
        Ok(TridiagonalLu {
            l,
            d,
            u: self.upper.clone(),
        })
    }
}

/// `A = L·U` with unit lower bidiagonal `L` and upper bidiagonal `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalLu {
    l: Vec<f64>,
    d: Vec<f64>,
    u: Vec<f64>,
}

impl TridiagonalLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut y = rhs.to_vec();
        for i in 1..n {
            y[i] -= self.l[i] * y[i - 1];
        }
        y[n - 1] /= self.d[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = (y[i] - self.u[i] * y[i + 1]) / self.d[i];
        }
        y
    }

    /// Solves `Aᵀ x = rhs` reusing the same factors.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut y = rhs.to_vec();
        y[0] /= self.d[0];
        for i in 1..n {
            y[i] = (y[i] - self.u[i - 1] * y[i - 1]) / self.d[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= self.l[i + 1] * y[i + 1];
        }
        y
    }
}

fn check_grid(grid: &StateGrid, len: usize) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "diffusion operators need at least 3 nodes (got {})",
            grid.len()
        )));
    }
    if len != grid.len() {
        return Err(Error::InvalidArgument(format!("field has {len} values for {} nodes", grid.len())));
    }
    Ok(())
}

/// `a1 = ½σ1²` at every node.
pub fn diffusion_coefficients(grid: &StateGrid, sigma1: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.sample(|x| 0.5 * sigma1(x).powi(2))
}

/// `A1 Φ = −a1·D²Φ` with central second differences; zero at the end nodes,
/// where the value field is extrapolated linearly.
pub fn apply_a1(field: &[f64], grid: &StateGrid, a1: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid, field.len())?;
    let n = field.len();
    let h2 = grid.spacing().powi(2);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = -a1[i] * (field[i + 1] - 2.0 * field[i] + field[i - 1]) / h2;
    }
    Ok(out)
}

/// `A1* Φ = −∂²(a1 Φ)` with zero-flux rows at the ends.
pub fn apply_a1_star(field: &[f64], grid: &StateGrid, a1: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid, field.len())?;
    Ok(fp_diffusion(a1, grid.spacing())
        .apply(field)
        .into_iter()
        .map(|v| -v)
        .collect())
}

/// The conservative FP diffusion matrix `L`, `(L m)_i = Δ²(a1 m)_i / h²`,
/// with zero-flux boundary rows. Columns sum to zero.
pub fn fp_diffusion(a1: &[f64], h: f64) -> Tridiagonal {
    let n = a1.len();
    let inv = 1.0 / (h * h);
    let mut t = Tridiagonal::identity(n);
    for i in 0..n {
        t.diag[i] = 0.0;
        if i > 0 {
            t.lower[i] = a1[i - 1] * inv;
            t.diag[i] -= a1[i] * inv;
        }
        if i + 1 < n {
            t.upper[i] = a1[i + 1] * inv;
            t.diag[i] -= a1[i] * inv;
        }
    }
    t
}

/// `I − dt·L` for the implicit FP diffusion step.
pub fn fp_implicit_matrix(a1: &[f64], h: f64, dt: f64) -> Tridiagonal {
    let mut t = fp_diffusion(a1, h);
    for i in 0..t.len() {
        t.lower[i] *= -dt;
        t.upper[i] *= -dt;
        t.diag[i] = 1.0 - dt * t.diag[i];
    }
    t
}

/// `I − dt·diag(a1)·D²` for the implicit HJB diffusion step, identity rows
/// at the ends.
pub fn hjb_implicit_matrix(a1: &[f64], h: f64, dt: f64) -> Tridiagonal {
    let n = a1.len();
    let c = dt / (h * h);
    let mut t = Tridiagonal::identity(n);
    for i in 1..n - 1 {
        t.lower[i] = -c * a1[i];
        t.upper[i] = -c * a1[i];
        t.diag[i] = 1.0 + 2.0 * c * a1[i];
    }
    t
}

/// Gradient operator `D`: central inside, one-sided at the ends.
pub fn gradient_matrix(n: usize, h: f64) -> Tridiagonal {
    let mut t = Tridiagonal::identity(n);
    let (c, e) = (0.5 / h, 1.0 / h);
    t.diag[0] = -e;
    t.upper[0] = e;
    t.diag[n - 1] = e;
    t.lower[n - 1] = -e;
    for i in 1..n - 1 {
        t.diag[i] = 0.0;
        t.lower[i] = -c;
        t.upper[i] = c;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_and_transposes() {
        let t = Tridiagonal {
            lower: vec![0.0, -1.0, 0.5, -0.3],
            diag: vec![4.0, 5.0, 3.0, 4.5],
            upper: vec![1.0, -2.0, 0.7, 0.0],
        };
        let lu = t.factor().unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let x = lu.solve(&b);
        let y = lu.solve_transpose(&b);
        let bx = t.apply(&x);
        let by = t.apply_transpose(&y);
        for i in 0..4 {
            assert!((bx[i] - b[i]).abs() < 1e-14);
            assert!((by[i] - b[i]).abs() < 1e-14);
        }
        assert_eq!(t.transpose().apply(&b), t.apply_transpose(&b));
    }

    #[test]
    fn constant_field_is_annihilated() {
        let g = StateGrid::new(-1.0, 1.0, 21).unwrap();
        let a1 = vec![0.3; 21];
        assert!(apply_a1(&[2.0; 21], &g, &a1).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quadratic_is_exact() {
        let g = StateGrid::new(-2.0, 2.0, 41).unwrap();
        let a1 = vec![1.0; 41];
        let f = g.sample(|x| x * x);
        let out = apply_a1(&f, &g, &a1).unwrap();
        for v in &out[1..40] {
            assert!((v + 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_tiny_grids() {
        let g = StateGrid::new(0.0, 1.0, 2).unwrap();
        assert!(apply_a1(&[0.0, 1.0], &g, &[1.0, 1.0]).is_err());
        assert!(apply_a1_star(&[0.0, 1.0], &g, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn fp_columns_sum_to_zero() {
        let a1: Vec<f64> = (0..10).map(|i| 0.1 + 0.05 * i as f64).collect();
        let l = fp_diffusion(&a1, 0.1);
        let ones = vec![1.0; 10];
        assert!(l.apply_transpose(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn adjoint_identity_on_bumps() {
        let g = StateGrid::reference();
        let a1 = diffusion_coefficients(&g, |x| 0.5 + 0.1 * x.sin());
        let bump = |c: f64, w: f64| g.sample(move |x| (-(x - c).powi(2) / w).exp());
        for (f, q) in [(bump(0.3, 0.5), bump(-0.4, 0.8)), (bump(1.0, 0.2), bump(0.5, 1.0))] {
            let af = apply_a1(&f, &g, &a1).unwrap();
            let aq = apply_a1_star(&q, &g, &a1).unwrap();
            let lhs: f64 = af.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() * g.spacing();
            let rhs: f64 = f.iter().zip(&aq).map(|(a, b)| a * b).sum::<f64>() * g.spacing();
            assert!((lhs - rhs).abs() <= 1e-8, "{lhs} vs {rhs}");
        }
    }
}
