//! Dense 3×3 tensors and finite-strain kinematics.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use thiserror::Error;

use crate::autodiff::Scalar;

/// Pivot magnitude below which a tensor is treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TensorError {
    #[error("deformation is inverted or degenerate (det = {0:e})")]
    NonPositiveDeterminant(f64),
    #[error("tensor is numerically singular (det = {0:e})")]
    Singular(f64),
}

/// Second-order tensor, nine components in row-major order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor2<T>(pub [T; 9]);

impl<T: Scalar> Tensor2<T> {
    pub fn zeros() -> Self {
        Self([T::zero(); 9])
    }

    pub fn identity() -> Self {
        let mut t = Self::zeros();
        t.0[0] = T::one();
        t.0[4] = T::one();
        t.0[8] = T::one();
        t
    }

    pub fn from_fn(f: impl FnMut(usize) -> T) -> Self {
        Self(std::array::from_fn(f))
    }

    pub fn diag(a: T, b: T, c: T) -> Self {
        let mut t = Self::zeros();
        t.0[0] = a;
        t.0[4] = b;
        t.0[8] = c;
        t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[3 * i + j]
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Tensor2<U> {
        Tensor2(std::array::from_fn(|k| f(self.0[k])))
    }

    pub fn values(&self) -> Tensor2<f64> {
        self.map(|x| x.value())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|k| self.get(k % 3, k / 3))
    }

    pub fn trace(&self) -> T {
        self.0[0] + self.0[4] + self.0[8]
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(|k| self.0[k] * s)
    }

    /// Cofactor-expansion determinant.
    pub fn det(&self) -> T {
        let a = &self.0;
        a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6])
    }

    /// Matrix of signed 2×2 minors, `cof T = det(T) T^{-T}`. Computed from the
    /// minors directly, so it is defined for singular tensors as well.
    pub fn cofactor(&self) -> Self {
        let a = &self.0;
        Self([
            a[4] * a[8] - a[5] * a[7],
            a[5] * a[6] - a[3] * a[8],
            a[3] * a[7] - a[4] * a[6],
            a[2] * a[7] - a[1] * a[8],
            a[0] * a[8] - a[2] * a[6],
            a[1] * a[6] - a[0] * a[7],
            a[1] * a[5] - a[2] * a[4],
            a[2] * a[3] - a[0] * a[5],
            a[0] * a[4] - a[1] * a[3],
        ])
    }

    /// Adjugate-based inverse; fails when `|det| <= SINGULAR_DET`.
    pub fn inverse(&self) -> Result<Self, TensorError> {
        let det = self.det();
        if !(det.value().abs() > SINGULAR_DET) {
            return Err(TensorError::Singular(det.value()));
        }
        let cof = self.cofactor();
        Ok(Self::from_fn(|k| cof.get(k % 3, k / 3) / det))
    }

    pub fn matvec(&self, v: &[T; 3]) -> [T; 3] {
        std::array::from_fn(|i| self.get(i, 0) * v[0] + self.get(i, 1) * v[1] + self.get(i, 2) * v[2])
    }

    /// Double contraction `A : B`.
    pub fn ddot(&self, other: &Self) -> T {
        let mut s = self.0[0] * other.0[0];
        for k in 1..9 {
            s += self.0[k] * other.0[k];
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x.value() * x.value()).sum::<f64>().sqrt()
    }
}

impl<T: Scalar> Index<(usize, usize)> for Tensor2<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.0[3 * i + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Tensor2<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.0[3 * i + j]
    }
}

impl<T: Scalar> Add for Tensor2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|k| self.0[k] + rhs.0[k])
    }
}

impl<T: Scalar> Sub for Tensor2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|k| self.0[k] - rhs.0[k])
    }
}

impl<T: Scalar> Mul for Tensor2<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::from_fn(|k| {
            let (i, j) = (k / 3, k % 3);
            self.get(i, 0) * rhs.get(0, j) + self.get(i, 1) * rhs.get(1, j) + self.get(i, 2) * rhs.get(2, j)
        })
    }
}

/// Invariants of the right Cauchy–Green tensor used by the constitutive laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantSet<T> {
    pub i1: T,
    pub i2: T,
    pub i3: T,
    pub j: T,
    /// `J^{-2/3} I1`
    pub i1g: T,
    /// `I2^3 / (9 J^4)`
    pub i2g: T,
}

/// `C = F^T F`. Rejects inverted deformations.
pub fn right_cauchy_green<T: Scalar>(f: &Tensor2<T>) -> Result<Tensor2<T>, TensorError> {
    let det = f.det().value();
    if !(det > 0.0) {
        return Err(TensorError::NonPositiveDeterminant(det));
    }
    Ok(f.transpose() * *f)
}

pub fn invariants<T: Scalar>(c: &Tensor2<T>) -> Result<InvariantSet<T>, TensorError> {
    let i3 = c.det();
    if !(i3.value() > 0.0) {
        return Err(TensorError::NonPositiveDeterminant(i3.value()));
    }
    let i1 = c.trace();
    let i2 = c.cofactor().trace();
    let j = i3.sqrt();
    let i1g = i1 * i3.powf(-1.0 / 3.0);
    let i2g = i2 * i2 * i2 / (i3 * i3 * 9.0);
    Ok(InvariantSet { i1, i2, i3, j, i1g, i2g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng) -> Tensor2<f64> {
        Tensor2::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    fn random_deformation(rng: &mut ChaCha8Rng) -> Tensor2<f64> {
        let f = Tensor2::identity() + random_tensor(rng).scale(0.3);
        if f.det() > 0.0 {
            f
        } else {
            random_deformation(rng)
        }
    }

    /// Symmetric Jacobi eigenvalue iteration, used as an independent oracle.
    fn sym_eigenvalues(t: &Tensor2<f64>) -> [f64; 3] {
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = t.get(i, j);
            }
        }
        for _ in 0..100 {
            let (mut p, mut q, mut best) = (0, 1, 0.0);
            for i in 0..3 {
                for j in (i + 1)..3 {
                    if a[i][j].abs() > best {
                        best = a[i][j].abs();
                        p = i;
                        q = j;
                    }
                }
            }
            if best < 1e-300 {
                break;
            }
            let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
            let (s, c) = theta.sin_cos();
            let mut r = [[0.0; 3]; 3];
            for (i, row) in r.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            r[p][p] = c;
            r[q][q] = c;
            r[p][q] = s;
            r[q][p] = -s;
            let mut tmp = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    tmp[i][j] = (0..3).map(|k| r[k][i] * a[k][j]).sum();
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = (0..3).map(|k| tmp[i][k] * r[k][j]).sum();
                }
            }
        }
        [a[0][0], a[1][1], a[2][2]]
    }

    #[test]
    fn identity_and_diagonal_cases() {
        let i = Tensor2::<f64>::identity();
        assert_eq!(right_cauchy_green(&i).unwrap(), i);
        let c = right_cauchy_green(&Tensor2::diag(2.0, 1.0, 1.0)).unwrap();
        assert_eq!(c, Tensor2::diag(4.0, 1.0, 1.0));

        let inv = invariants(&i).unwrap();
        assert_eq!((inv.i1, inv.i2, inv.j, inv.i1g, inv.i2g), (3.0, 3.0, 1.0, 3.0, 3.0));

        let inv = invariants(&c).unwrap();
        assert_eq!((inv.i1, inv.i2, inv.j), (6.0, 9.0, 2.0));
        assert!((inv.i1g - 6.0 * 2f64.powf(-2.0 / 3.0)).abs() < 1e-14);
        assert!((inv.i2g - 5.0625).abs() < 1e-14);
    }

    #[test]
    fn inverse_determinant_cofactor_basics() {
        let i = Tensor2::<f64>::identity();
        assert_eq!(i.inverse().unwrap(), i);
        assert_eq!(i.det(), 1.0);
        assert_eq!(i.cofactor(), i);
        assert_eq!(Tensor2::diag(2.0, 4.0, 5.0).det(), 40.0);
        assert_eq!(Tensor2::diag(2.0, 3.0, 5.0).cofactor(), Tensor2::diag(15.0, 10.0, 6.0));
    }

    #[test]
    fn singular_and_inverted_inputs_are_rejected() {
        let s = Tensor2([1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert!(matches!(s.inverse(), Err(TensorError::Singular(_))));
        // cofactor still defined at singular input: cof^T T = det I = 0
        let prod = s.cofactor().transpose() * s;
        assert!(prod.norm() < 1e-12);
        let inverted = Tensor2::diag(-1.0, 1.0, 1.0);
        assert!(matches!(right_cauchy_green(&inverted), Err(TensorError::NonPositiveDeterminant(_))));
    }

    #[test]
    fn random_tensor_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t = random_tensor(&mut rng) + Tensor2::identity();
            let det = t.det();
            if det.abs() < 1e-3 {
                continue;
            }
            let inv = t.inverse().unwrap();
            assert!((t * inv - Tensor2::identity()).norm() < 1e-12);
            assert!((inv * t - Tensor2::identity()).norm() < 1e-12);
            let cayley = t.cofactor().transpose() * t - Tensor2::identity().scale(det);
            assert!(cayley.norm() < 1e-12 * (1.0 + det.abs()));
            let cof_from_inv = inv.transpose().scale(det);
            assert!((t.cofactor() - cof_from_inv).norm() < 1e-12 * (1.0 + det.abs()));
        }
    }

    #[test]
    fn invariants_match_eigenvalue_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let f = random_deformation(&mut rng);
            let c = right_cauchy_green(&f).unwrap();
            assert!((c - c.transpose()).norm() == 0.0);
            let ev = sym_eigenvalues(&c);
            assert!(ev.iter().all(|&l| l > 0.0));
            let inv = invariants(&c).unwrap();
            let i1 = ev[0] + ev[1] + ev[2];
            let i2 = ev[0] * ev[1] + ev[1] * ev[2] + ev[0] * ev[2];
            let i3 = ev[0] * ev[1] * ev[2];
            assert!((inv.i1 - i1).abs() < 1e-12 * i1);
            assert!((inv.i2 - i2).abs() < 1e-12 * i2);
            assert!((inv.i3 - i3).abs() < 1e-12 * i3);
            assert!((inv.j - f.det()).abs() < 1e-12 * f.det());
        }
    }

    #[test]
    fn isochoric_invariants_are_scale_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = right_cauchy_green(&random_deformation(&mut rng)).unwrap();
            let s: f64 = rng.random_range(0.2..5.0);
            let a = invariants(&c).unwrap();
            let b = invariants(&c.scale(s * s)).unwrap();
            assert!((a.i1g - b.i1g).abs() < 1e-12 * a.i1g);
            assert!((a.i2g - b.i2g).abs() < 1e-12 * a.i2g);
        }
    }
}
