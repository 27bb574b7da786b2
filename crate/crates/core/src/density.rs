//! Dense density matrices over atomic, field or joint spaces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{basis_label, Basis};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    /// Subsystem dimensions, outermost (most significant) first.
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>, dims: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let size: usize = dims.iter().product();
        if !matrix.is_square() || matrix.nrows() != size {
            return domain(format!(
                "matrix is {}x{} but dims {:?} give {size}",
                matrix.nrows(),
                matrix.ncols(),
                dims
            ));
        }
        if labels.len() != size {
            return domain(format!("{} labels for dimension {size}", labels.len()));
        }
        Ok(Self { matrix, dims, labels })
    }

    /// `|ψ><ψ|` for a state vector.
    pub fn pure(psi: &DVector<C64>, dims: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        Self::new(psi * psi.adjoint(), dims, labels)
    }

    /// Atomic operator over N qubits with basis labels filled in.
    pub fn atomic(matrix: DMatrix<C64>, n_atoms: usize, basis: Basis) -> Result<Self> {
        Self::new(matrix, vec![1 << n_atoms], atomic_labels(n_atoms, basis))
    }

    /// Field operator over Fock states `0..=cutoff`.
    pub fn field(matrix: DMatrix<C64>) -> Result<Self> {
        let d = matrix.nrows();
        Self::new(matrix, vec![d], fock_labels(d - 1))
    }

    /// Joint operator with atomic index major and Fock index minor.
    pub fn joint(matrix: DMatrix<C64>, n_atoms: usize, cutoff: usize, basis: Basis) -> Result<Self> {
        let labels = atomic_labels(n_atoms, basis)
            .into_iter()
            .flat_map(|a| (0..=cutoff).map(move |n| format!("{a}|{n}")))
            .collect();
        Self::new(matrix, vec![1 << n_atoms, cutoff + 1], labels)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `Tr ρ²`, real part.
    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ_ij ρ_ij ρ_ji
        let m = &self.matrix;
        let mut acc = 0.0;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                acc += (m[(i, j)] * m[(j, i)]).re;
            }
        }
        acc
    }

    /// `max |ρ - ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for j in 0..m.ncols() {
            for i in 0..=j {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Result<f64> {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    /// `<ψ|ρ|ψ>` for a state vector in the same basis.
    pub fn expectation_in(&self, psi: &DVector<C64>) -> Result<f64> {
        if psi.len() != self.dim() {
            return domain("state and density matrix differ in dimension");
        }
        Ok((psi.adjoint() * &self.matrix * psi)[(0, 0)].re)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DensityJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DensityJson = serde_json::from_str(text)?;
        let size: usize = raw.dims.iter().product();
        if raw.entries.len() != size * size {
            return domain(format!("{} entries for dimension {size}", raw.entries.len()));
        }
        let matrix = DMatrix::from_row_iterator(
            size,
            size,
            raw.entries.iter().map(|&[re, im]| C64::new(re, im)),
        );
        Self::new(matrix, raw.dims, raw.basis)
    }
}

pub(crate) fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return domain(format!("shapes {:?} and {:?} differ", a.shape(), b.shape()));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}

/// Wire form: `{dims, basis, entries: [[re, im], ...]}` with entries row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityJson {
    pub dims: Vec<usize>,
    pub basis: Vec<String>,
    pub entries: Vec<[f64; 2]>,
}

impl From<&DensityMatrix> for DensityJson {
    fn from(d: &DensityMatrix) -> Self {
        let n = d.dim();
        let entries = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let z = d.matrix[(i, j)];
                [z.re, z.im]
            })
            .collect();
        Self { dims: d.dims.clone(), basis: d.labels.clone(), entries }
    }
}

pub fn atomic_labels(n_atoms: usize, basis: Basis) -> Vec<String> {
    (0..1usize << n_atoms).map(|i| basis_label(i, n_atoms, basis)).collect()
}

pub fn fock_labels(cutoff: usize) -> Vec<String> {
    (0..=cutoff).map(|n| n.to_string()).collect()
}

/// Partial trace over the field of a joint operator of shape
/// `(A·D) x (A·D)` with atomic index major.
pub fn trace_out_field(joint: &DMatrix<C64>, atomic_dim: usize, field_dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(atomic_dim, atomic_dim, |i, j| {
        (0..field_dim)
            .map(|n| joint[(i * field_dim + n, j * field_dim + n)])
            .sum()
    })
}

/// Partial trace over the atoms of a joint operator.
pub fn trace_out_atoms(joint: &DMatrix<C64>, atomic_dim: usize, field_dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(field_dim, field_dim, |m, n| {
        (0..atomic_dim)
            .map(|i| joint[(i * field_dim + m, i * field_dim + n)])
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_row_major() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.75, 0.0),
                C64::new(0.1, 0.2),
                C64::new(0.1, -0.2),
                C64::new(0.25, 0.0),
            ],
        );
        let d = DensityMatrix::atomic(m, 1, Basis::Energy).unwrap();
        let text = d.to_json().unwrap();
        let raw: DensityJson = serde_json::from_str(&text).unwrap();
        assert_eq!(raw.entries[1], [0.1, 0.2]);
        assert_eq!(raw.basis, vec!["g", "e"]);
        assert_eq!(DensityMatrix::from_json(&text).unwrap(), d);
    }

    #[test]
    fn bad_shapes_are_rejected() {
        let m = DMatrix::<C64>::identity(3, 3);
        assert!(DensityMatrix::new(m, vec![2], vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn partial_traces_of_product() {
        // |+><+| ⊗ |1><1| with a 2-level field
        let mut psi = DVector::zeros(4);
        psi[1 * 2 + 1] = C64::new(1.0, 0.0);
        let joint = &psi * psi.adjoint();
        let atoms = trace_out_field(&joint, 2, 2);
        let field = trace_out_atoms(&joint, 2, 2);
        assert_eq!(atoms[(1, 1)], C64::new(1.0, 0.0));
        assert_eq!(field[(1, 1)], C64::new(1.0, 0.0));
        assert_eq!(atoms.trace(), C64::new(1.0, 0.0));
    }
}
