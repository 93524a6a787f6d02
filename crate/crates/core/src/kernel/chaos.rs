use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{factorial, GridKernel};
use crate::error::{ChaosError, Result};
use crate::levy::LevyModel;

/// A truncated chaos expansion `f_0 + Σ_{n=1}^{N} I_n(f_n)`.
///
/// `kernels[i]` has degree `i + 1`; missing trailing degrees are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChaos", into = "RawChaos")]
pub struct ChaosVector {
    constant: f64,
    level: u32,
    atom_count: usize,
    kernels: Vec<GridKernel>,
}

#[derive(Serialize, Deserialize)]
struct RawChaos {
    constant: f64,
    level: u32,
    atom_count: usize,
    #[serde(default)]
    kernels: Vec<GridKernel>,
}

impl TryFrom<RawChaos> for ChaosVector {
    type Error = ChaosError;

    fn try_from(raw: RawChaos) -> Result<Self> {
        ChaosVector::new(raw.constant, raw.level, raw.atom_count, raw.kernels)
    }
}

impl From<ChaosVector> for RawChaos {
    fn from(c: ChaosVector) -> Self {
        RawChaos {
            constant: c.constant,
            level: c.level,
            atom_count: c.atom_count,
            kernels: c.kernels,
        }
    }
}

impl ChaosVector {
    pub fn new(constant: f64, level: u32, atom_count: usize, kernels: Vec<GridKernel>) -> Result<Self> {
        for (i, k) in kernels.iter().enumerate() {
            if k.n() != i + 1 {
                return Err(ChaosError::InvalidKernel(format!(
                    "kernel {i} has degree {} instead of {}",
                    k.n(),
                    i + 1
                )));
            }
            if k.level() != level {
                return Err(ChaosError::LevelMismatch {
                    expected: level,
                    found: k.level(),
                });
            }
            if k.atom_count() != atom_count {
                return Err(ChaosError::ModelMismatch {
                    kernel: k.atom_count(),
                    model: atom_count,
                });
            }
        }
        Ok(ChaosVector {
            constant,
            level,
            atom_count,
            kernels,
        })
    }

    pub fn constant_only(constant: f64, level: u32, atom_count: usize) -> Self {
        ChaosVector {
            constant,
            level,
            atom_count,
            kernels: Vec::new(),
        }
    }

    /// A vector with all degrees `1..=max_degree` present and zero.
    pub fn zero(level: u32, atom_count: usize, max_degree: usize) -> Result<Self> {
        let kernels = (1..=max_degree)
            .map(|n| GridKernel::zero(n, level, atom_count))
            .collect::<Result<_>>()?;
        Self::new(0.0, level, atom_count, kernels)
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn kernels(&self) -> &[GridKernel] {
        &self.kernels
    }

    pub fn max_degree(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernel(&self, n: usize) -> Option<&GridKernel> {
        n.checked_sub(1).and_then(|i| self.kernels.get(i))
    }

    pub fn check_model(&self, model: &LevyModel) -> Result<()> {
        if self.atom_count != model.state_count() {
            return Err(ChaosError::ModelMismatch {
                kernel: self.atom_count,
                model: model.state_count(),
            });
        }
        Ok(())
    }

    fn check_compatible(&self, other: &ChaosVector) -> Result<()> {
        if self.level != other.level {
            return Err(ChaosError::LevelMismatch {
                expected: self.level,
                found: other.level,
            });
        }
        if self.atom_count != other.atom_count {
            return Err(ChaosError::ModelMismatch {
                kernel: other.atom_count,
                model: self.atom_count,
            });
        }
        Ok(())
    }

    fn map_kernels(&self, constant: f64, f: impl Fn(&GridKernel) -> GridKernel) -> ChaosVector {
        ChaosVector {
            constant,
            kernels: self.kernels.iter().map(f).collect(),
            ..*self
        }
    }

    /// `self + c * other`, padding missing degrees with zeros.
    pub fn add_scaled(&self, other: &ChaosVector, c: f64) -> Result<ChaosVector> {
        self.check_compatible(other)?;
        let degree = self.max_degree().max(other.max_degree());
        let mut kernels = Vec::with_capacity(degree);
        for n in 1..=degree {
            let base = match self.kernel(n) {
                Some(k) => k.clone(),
                None => GridKernel::zero(n, self.level, self.atom_count)?,
            };
            kernels.push(match other.kernel(n) {
                Some(k) => base.add_scaled(k, c)?,
                None => base,
            });
        }
        Ok(ChaosVector {
            constant: self.constant + c * other.constant,
            kernels,
            ..*self
        })
    }

    pub fn scale(&self, c: f64) -> ChaosVector {
        self.map_kernels(c * self.constant, |k| k.scale(c))
    }

    /// Conditional expectation given the path up to cell boundary `t_cell`.
    pub fn restrict_time(&self, t_cell: usize) -> ChaosVector {
        self.map_kernels(self.constant, |k| k.restrict_time(t_cell))
    }

    pub fn symmetrize(&self) -> ChaosVector {
        self.map_kernels(self.constant, GridKernel::symmetrize)
    }

    /// `E[F G] = f_0 g_0 + Σ n! ⟨f̃_n, g̃_n⟩`.
    pub fn inner(&self, other: &ChaosVector, model: &LevyModel) -> Result<f64> {
        self.check_model(model)?;
        self.check_compatible(other)?;
        let mut total = self.constant * other.constant;
        for (f, g) in self.kernels.iter().zip(&other.kernels) {
            total += factorial(f.n()) * f.symmetrize().inner(&g.symmetrize(), model)?;
        }
        Ok(total)
    }

    /// `E[F²]`.
    pub fn norm_sq(&self, model: &LevyModel) -> Result<f64> {
        Ok(self.inner(self, model)? + 0.0)
    }

    /// Largest coefficient difference, missing degrees counted as zero.
    pub fn max_abs_diff(&self, other: &ChaosVector) -> f64 {
        let degree = self.max_degree().max(other.max_degree());
        let mut worst = (self.constant - other.constant).abs();
        for n in 1..=degree {
            worst = worst.max(match (self.kernel(n), other.kernel(n)) {
                (Some(a), Some(b)) => a.max_abs_diff(b),
                (Some(a), None) | (None, Some(a)) => a.entries().map(|(_, v)| v.abs()).fold(0.0, f64::max),
                (None, None) => 0.0,
            });
        }
        worst
    }

    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("chaos vectors always serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::kernel::strategies::kernel;
    use crate::levy::Atom;

    fn model() -> LevyModel {
        LevyModel::new(0.8, vec![Atom { x: -1.0, lambda: 1.5 }]).unwrap()
    }

    #[test]
    fn rejects_inconsistent_kernels() {
        let k2 = GridKernel::zero(2, 2, 2).unwrap();
        assert!(ChaosVector::new(0.0, 2, 2, vec![k2.clone()]).is_err());
        let k1 = GridKernel::zero(1, 3, 2).unwrap();
        assert!(ChaosVector::new(0.0, 2, 2, vec![k1]).is_err());
    }

    #[test]
    fn add_pads_missing_degrees() {
        let a = ChaosVector::constant_only(1.0, 2, 2);
        let b = ChaosVector::new(
            2.0,
            2,
            2,
            vec![
                GridKernel::from_fn(1, 2, 2, |_| 1.0).unwrap(),
                GridKernel::from_fn(2, 2, 2, |_| 0.5).unwrap(),
            ],
        )
        .unwrap();
        let sum = a.add_scaled(&b, 2.0).unwrap();
        assert_eq!(sum.constant(), 5.0);
        assert_eq!(sum.max_degree(), 2);
        assert!(sum.kernel(2).unwrap().entries().all(|(_, v)| v == 1.0));
        let text = serde_json::to_string(&sum).unwrap();
        assert_eq!(serde_json::from_str::<ChaosVector>(&text).unwrap(), sum);
    }

    proptest! {
        #[test]
        fn restriction_is_an_orthogonal_projection(
            f1 in kernel(1, 2, 2), f2 in kernel(2, 2, 2),
            g1 in kernel(1, 2, 2), g2 in kernel(2, 2, 2),
            t_cell in 0usize..=4, c in -1.0f64..1.0,
        ) {
            let m = model();
            let f = ChaosVector::new(c, 2, 2, vec![f1, f2]).unwrap();
            let g = ChaosVector::new(0.3, 2, 2, vec![g1, g2]).unwrap().restrict_time(t_cell);
            let residual = f.add_scaled(&f.restrict_time(t_cell), -1.0).unwrap();
            prop_assert!(residual.inner(&g, &m).unwrap().abs() < 1e-12);
        }
    }
}
