//! Entanglement measures on qubit registers and the protected four-qubit
//! states.
//!
//! Parties are zero-based atom positions. Spin-flip quantities act in the
//! energy basis; concurrence is basis independent because the rotation is a
//! product of single-qubit maps.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::density::DensityMatrix;
use crate::error::{domain, Result};
use crate::model::{classify_dfs, csd_state, AtomicAmplitudes, Basis, DfsClass};
use crate::C64;

/// Negative eigenvalues above this are treated as zero.
pub const CLAMP_TOL: f64 = 1e-10;

/// Pure N-qubit state; amplitudes in either basis.
pub type QubitState = AtomicAmplitudes;

fn n_qubits_of(rho: &DensityMatrix) -> Result<usize> {
    let dim = rho.dim();
    if !dim.is_power_of_two() || dim < 2 {
        return domain(format!("dimension {dim} is not a qubit register"));
    }
    Ok(dim.trailing_zeros() as usize)
}

fn check_keep(keep: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut k = keep.to_vec();
    k.sort_unstable();
    k.dedup();
    if k.is_empty() || k.len() != keep.len() || k.iter().any(|&q| q >= n) {
        return domain(format!("{keep:?} is not a nonempty set of distinct parties below {n}"));
    }
    Ok(k)
}

/// Pack the kept bits of `x` into a contiguous index, lowest party first.
fn gather(x: usize, parties: &[usize]) -> usize {
    parties.iter().enumerate().fold(0, |acc, (t, &q)| acc | (((x >> q) & 1) << t))
}

/// Trace out every party not in `keep`. Kept parties stay in ascending order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = n_qubits_of(rho)?;
    let keep = check_keep(keep, n)?;
    let rest: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let kd = 1usize << keep.len();
    let m = rho.matrix();
    let mut out = DMatrix::zeros(kd, kd);
    // Enumerate full indices; the pair contributes when the traced bits agree.
    let rest_mask: usize = rest.iter().map(|q| 1 << q).sum();
    for x in 0..rho.dim() {
        let rx = x & rest_mask;
        let a = gather(x, &keep);
        for b in 0..kd {
            let y = rx | scatter(b, &keep);
            out[(a, b)] += m[(x, y)];
        }
    }
    let labels = (0..kd)
        .map(|b| {
            let full = &rho.labels()[scatter(b, &keep)];
            let chars: Vec<char> = full.chars().collect();
            if chars.len() == n {
                keep.iter().map(|&q| chars[q]).collect()
            } else {
                b.to_string()
            }
        })
        .collect();
    DensityMatrix::new(out, vec![kd], labels)
}

fn scatter(b: usize, parties: &[usize]) -> usize {
    parties.iter().enumerate().fold(0, |acc, (t, &q)| acc | (((b >> t) & 1) << q))
}

/// Reduced state of a pure register without forming `|ψ><ψ|`.
pub fn reduced_pure(psi: &QubitState, keep: &[usize]) -> Result<DensityMatrix> {
    let n = psi.n_atoms();
    let keep = check_keep(keep, n)?;
    let c = psi.coefficients();
    let kd = 1usize << keep.len();
    let keep_mask: usize = keep.iter().map(|q| 1 << q).sum();
    let mut out = DMatrix::zeros(kd, kd);
    for x in 0..c.len() {
        if c[x].norm_sqr() == 0.0 {
            continue;
        }
        let a = gather(x, &keep);
        let base = x & !keep_mask;
        for b in 0..kd {
            let y = base | scatter(b, &keep);
            out[(a, b)] += c[x] * c[y].conj();
        }
    }
    let labels = (0..kd)
        .map(|b| {
            let full = crate::model::basis_label(scatter(b, &keep), n, psi.basis());
            let chars: Vec<char> = full.chars().collect();
            keep.iter().map(|&q| chars[q]).collect()
        })
        .collect();
    DensityMatrix::new(out, vec![kd], labels)
}

fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = h.symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

fn clamp(v: f64, what: &str) -> Result<f64> {
    if v < -CLAMP_TOL {
        return domain(format!("{what} has eigenvalue {v:.3e}"));
    }
    Ok(v.max(0.0))
}

/// Eigenvalues below this are round-off and dropped from decompositions.
const RANK_TOL: f64 = 1e-13;

/// Wootters concurrence `max(0, λ₁ - λ₂ - λ₃ - λ₄)`.
///
/// The `λ` are the singular values of `Wᵀ (σ_y⊗σ_y) W` with `ρ = W W†` from
/// the eigendecomposition; they equal the square roots of the eigenvalues of
/// `ρ (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)` without squaring round-off into `√ε` noise.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return domain(format!("concurrence needs a 4x4 matrix, got {}", rho.dim()));
    }
    let (vals, vecs) = hermitian_eigen(rho.matrix());
    let mut columns = Vec::new();
    for (t, v) in vals.into_iter().enumerate() {
        let v = clamp(v, "density matrix")?;
        if v > RANK_TOL {
            columns.push(vecs.column(t) * C64::new(v.sqrt(), 0.0));
        }
    }
    if columns.is_empty() {
        return domain("density matrix is zero");
    }
    let w = DMatrix::from_columns(&columns);
    // σ_y ⊗ σ_y reverses the basis order with signs (-1 on |00>,|11>, +1 on |01>,|10>).
    let flip = DMatrix::from_fn(4, 4, |r, c| {
        if r + c == 3 {
            C64::new(if r == 0 || r == 3 { -1.0 } else { 1.0 }, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let tau = w.transpose() * flip * &w;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let rest: f64 = lambdas.iter().skip(1).sum();
    Ok((lambdas[0] - rest).max(0.0))
}

/// 3-tangle of a pure three-qubit state, `4 det ρ₁ - C₁₂² - C₁₃²`.
pub fn three_tangle(psi: &QubitState) -> Result<f64> {
    if psi.n_atoms() != 3 {
        return domain("3-tangle needs three qubits");
    }
    let r1 = reduced_pure(psi, &[0])?;
    let m = r1.matrix();
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
    let c12 = concurrence(&reduced_pure(psi, &[0, 1])?)?;
    let c13 = concurrence(&reduced_pure(psi, &[0, 2])?)?;
    let tau = 4.0 * det - c12 * c12 - c13 * c13;
    if tau < -CLAMP_TOL || tau > 1.0 + CLAMP_TOL {
        return Err(crate::Error::Inconsistent(format!("3-tangle {tau} outside [0, 1]")));
    }
    Ok(tau.clamp(0.0, 1.0))
}

/// 3-tangle of a density matrix that must be pure (purity 1 within 1e-10).
pub fn three_tangle_of_density(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 8 {
        return domain("3-tangle needs three qubits");
    }
    if (rho.purity() - 1.0).abs() > CLAMP_TOL {
        return domain(format!("3-tangle is defined here for pure states; purity {}", rho.purity()));
    }
    let (vals, vecs) = hermitian_eigen(rho.matrix());
    let top = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let psi: Vec<C64> = vecs.column(top).iter().copied().collect();
    three_tangle(&AtomicAmplitudes::normalized(3, Basis::Energy, psi)?)
}

/// `|<ψ|σ_y^{⊗N}|ψ*>|²` for even N.
pub fn n_tangle(psi: &QubitState) -> Result<f64> {
    let n = psi.n_atoms();
    if n % 2 != 0 {
        return domain(format!("N-tangle needs an even number of qubits, got {n}"));
    }
    let e = psi.to_energy();
    let c = e.coefficients();
    let mask = (1usize << n) - 1;
    let mut overlap = C64::new(0.0, 0.0);
    for (x, cx) in c.iter().enumerate() {
        // σ_y|0> = i|1>, σ_y|1> = -i|0>
        let ones = x.count_ones() as i32;
        let zeros = n as i32 - ones;
        let phase = C64::i().powi(zeros) * (-C64::i()).powi(ones);
        overlap += c[x ^ mask].conj() * phase * cx.conj();
    }
    Ok(overlap.norm_sqr())
}

/// Mean `C²` over all pairs of a pure register.
pub fn avg_squared_concurrence(psi: &QubitState) -> Result<f64> {
    let n = psi.n_atoms();
    if n < 2 {
        return domain("pairwise concurrence needs at least two qubits");
    }
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..n {
        for b in a + 1..n {
            let c = concurrence(&reduced_pure(psi, &[a, b])?)?;
            total += c * c;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BellGem {
    /// `(|Φ⁺Ψ⁺> - |Ψ⁺Φ⁺>)/√2`
    Gem2,
    /// `(|Ψ⁻Φ⁻> + |Φ⁻Ψ⁻>)/√2`
    Gem3,
    /// `(|Ψ⁻Φ⁻> - |Φ⁻Ψ⁻>)/√2`
    Gem4,
}

impl BellGem {
    pub const ALL: [BellGem; 3] = [BellGem::Gem2, BellGem::Gem3, BellGem::Gem4];

    pub fn parse(label: &str) -> Result<Self> {
        match label {
            "gem2" => Ok(Self::Gem2),
            "gem3" => Ok(Self::Gem3),
            "gem4" => Ok(Self::Gem4),
            other => domain(format!("unknown Bell-gem label {other:?}; expected gem2, gem3 or gem4")),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Gem2 => "gem2",
            Self::Gem3 => "gem3",
            Self::Gem4 => "gem4",
        }
    }

    pub fn formula(&self) -> &'static str {
        match self {
            Self::Gem2 => "(|Phi+ Psi+> - |Psi+ Phi+>)/sqrt2",
            Self::Gem3 => "(|Psi- Phi-> + |Phi- Psi->)/sqrt2",
            Self::Gem4 => "(|Psi- Phi-> - |Phi- Psi->)/sqrt2",
        }
    }
}

#[derive(Clone, Copy)]
enum Bell {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

/// Energy-basis Bell pair; index bit 0 is the first qubit.
fn bell(b: Bell) -> [f64; 4] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    // order: gg, eg (first qubit excited), ge, ee
    match b {
        Bell::PhiPlus => [r, 0.0, 0.0, r],
        Bell::PhiMinus => [r, 0.0, 0.0, -r],
        Bell::PsiPlus => [0.0, r, r, 0.0],
        Bell::PsiMinus => [0.0, -r, r, 0.0],
    }
}

fn bell_product(first: Bell, second: Bell) -> Vec<f64> {
    let (a, b) = (bell(first), bell(second));
    (0..16).map(|x| a[x & 3] * b[x >> 2]).collect()
}

/// Four-qubit Bell-gem element in the energy basis; the first pair is qubits 1, 2.
pub fn bell_gem_state(gem: BellGem) -> QubitState {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (x, y, sign) = match gem {
        BellGem::Gem2 => ((Bell::PhiPlus, Bell::PsiPlus), (Bell::PsiPlus, Bell::PhiPlus), -1.0),
        BellGem::Gem3 => ((Bell::PsiMinus, Bell::PhiMinus), (Bell::PhiMinus, Bell::PsiMinus), 1.0),
        BellGem::Gem4 => ((Bell::PsiMinus, Bell::PhiMinus), (Bell::PhiMinus, Bell::PsiMinus), -1.0),
    };
    let u = bell_product(x.0, x.1);
    let v = bell_product(y.0, y.1);
    let coeffs = u.iter().zip(&v).map(|(a, b)| C64::new(r * (a + sign * b), 0.0)).collect();
    AtomicAmplitudes::new(4, Basis::Energy, coeffs).expect("Bell-gem elements are normalized")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureReport {
    pub measure: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl MeasureReport {
    pub fn new(measure: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        Self { measure: measure.into(), value, expected, tolerance, pass: (value - expected).abs() <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GemReport {
    pub gem: BellGem,
    pub formula: &'static str,
    pub tangle: MeasureReport,
    pub class: DfsClass,
    pub pass: bool,
}

/// 4-tangle and DFS class of each listed Bell-gem element.
pub fn verify_gem_dfs() -> Result<Vec<GemReport>> {
    BellGem::ALL
        .iter()
        .map(|&gem| {
            let psi = bell_gem_state(gem);
            let tangle = MeasureReport::new(format!("tau4[{}]", gem.label()), n_tangle(&psi)?, 1.0, 1e-10);
            let class = classify_dfs(&psi);
            let pass = tangle.pass && class == DfsClass::Global;
            Ok(GemReport { gem, formula: gem.formula(), tangle, class, pass })
        })
        .collect()
}

/// `(|+-> + |-+>)/√2` on parties `a`, `b` of a rotated-basis register.
fn balanced_pair(a: usize, b: usize) -> Vec<(usize, f64)> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    vec![(1 << a, r), (1 << b, r)]
}

/// `|±±>` on parties `a`, `b`.
fn aligned_pair(a: usize, b: usize, plus: bool) -> Vec<(usize, f64)> {
    vec![(if plus { (1 << a) | (1 << b) } else { 0 }, 1.0)]
}

fn product(x: &[(usize, f64)], y: &[(usize, f64)]) -> Vec<(usize, f64)> {
    x.iter().flat_map(|(i, a)| y.iter().map(move |(j, b)| (i | j, a * b))).collect()
}

fn residual(target: &AtomicAmplitudes, terms: &[Vec<(usize, f64)>], scale: f64) -> f64 {
    let mut acc = vec![C64::new(0.0, 0.0); target.coefficients().len()];
    for term in terms {
        for (i, a) in term {
            acc[*i] += scale * a;
        }
    }
    acc.iter().zip(target.coefficients()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// Residuals of the pair decompositions of the four-atom symmetric states
///
/// ```text
/// |2,±1> = (|±±>₁₂|Φ>₃₄ + |Φ>₁₂|±±>₃₄)/√2
/// |2, 0> = (|Φ>₁₂|Φ>₃₄ + |Φ>₁₃|Φ>₂₄ + |Φ>₁₄|Φ>₂₃)/√6,   |Φ> = (|+-> + |-+>)/√2
/// ```
pub fn pair_decomposition_check(n_atoms: usize) -> Result<Vec<MeasureReport>> {
    if n_atoms != 4 {
        return domain("pair decompositions are stated for four atoms");
    }
    let tol = 1e-12;
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for (plus, twice_s, name) in [(true, 2, "|2,+1>"), (false, -2, "|2,-1>")] {
        let terms = [
            product(&aligned_pair(0, 1, plus), &balanced_pair(2, 3)),
            product(&balanced_pair(0, 1), &aligned_pair(2, 3, plus)),
        ];
        let res = residual(&csd_state(4, twice_s)?, &terms, r2);
        out.push(MeasureReport::new(format!("residual {name}"), res, 0.0, tol));
    }
    let terms = [
        product(&balanced_pair(0, 1), &balanced_pair(2, 3)),
        product(&balanced_pair(0, 2), &balanced_pair(1, 3)),
        product(&balanced_pair(0, 3), &balanced_pair(1, 2)),
    ];
    let res = residual(&csd_state(4, 0)?, &terms, 1.0 / 6f64.sqrt());
    out.push(MeasureReport::new("residual |2,0>", res, 0.0, tol));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DVector, Matrix2};
    use proptest::prelude::*;

    fn rotated(n: usize, coeffs: &[(usize, f64)]) -> QubitState {
        let mut c = vec![C64::new(0.0, 0.0); 1 << n];
        for (i, a) in coeffs {
            c[*i] += a;
        }
        AtomicAmplitudes::normalized(n, Basis::Rotated, c).unwrap()
    }

    fn pure(psi: &QubitState) -> DensityMatrix {
        let v = DVector::from_column_slice(psi.coefficients());
        DensityMatrix::pure(&v, vec![v.len()], vec![String::new(); v.len()]).unwrap()
    }

    /// Cayley hyperdeterminant form of the 3-tangle.
    fn hyperdeterminant_tangle(psi: &QubitState) -> f64 {
        let e = psi.to_energy();
        let a = |i: usize, j: usize, k: usize| e.coefficients()[i | (j << 1) | (k << 2)];
        let d1 = a(0, 0, 0).powi(2) * a(1, 1, 1).powi(2)
            + a(0, 0, 1).powi(2) * a(1, 1, 0).powi(2)
            + a(0, 1, 0).powi(2) * a(1, 0, 1).powi(2)
            + a(1, 0, 0).powi(2) * a(0, 1, 1).powi(2);
        let d2 = a(0, 0, 0) * a(1, 1, 1) * a(0, 1, 1) * a(1, 0, 0)
            + a(0, 0, 0) * a(1, 1, 1) * a(1, 0, 1) * a(0, 1, 0)
            + a(0, 0, 0) * a(1, 1, 1) * a(1, 1, 0) * a(0, 0, 1)
            + a(0, 1, 1) * a(1, 0, 0) * a(1, 0, 1) * a(0, 1, 0)
            + a(0, 1, 1) * a(1, 0, 0) * a(1, 1, 0) * a(0, 0, 1)
            + a(1, 0, 1) * a(0, 1, 0) * a(1, 1, 0) * a(0, 0, 1);
        let d3 = a(0, 0, 0) * a(1, 1, 0) * a(1, 0, 1) * a(0, 1, 1)
            + a(1, 1, 1) * a(0, 0, 1) * a(0, 1, 0) * a(1, 0, 0);
        4.0 * (d1 - 2.0 * d2 + 4.0 * d3).norm()
    }

    fn random_state(n: usize, seed: &[f64]) -> QubitState {
        let seed: Vec<f64> = seed.iter().enumerate().map(|(i, x)| x + 0.05 * (i as f64 + 1.0).sin()).collect();
        let c = (0..1 << n)
            .map(|i| C64::new(seed[2 * i % seed.len()], seed[(2 * i + 1) % seed.len()]))
            .collect();
        AtomicAmplitudes::normalized(n, Basis::Energy, c).unwrap()
    }

    fn random_unitary(p: [f64; 4]) -> Matrix2<C64> {
        let (th, a, b, c) = (p[0], p[1], p[2], p[3]);
        let e = |x: f64| C64::from_polar(1.0, x);
        Matrix2::new(e(a) * th.cos(), e(b) * th.sin(), -e(-b + c) * th.sin(), e(-a + c) * th.cos())
    }

    fn apply_local(psi: &QubitState, q: usize, u: &Matrix2<C64>) -> QubitState {
        let mut c = psi.coefficients().to_vec();
        for x in 0..c.len() {
            if x & (1 << q) == 0 {
                let (lo, hi) = (c[x], c[x | (1 << q)]);
                c[x] = u[(0, 0)] * lo + u[(0, 1)] * hi;
                c[x | (1 << q)] = u[(1, 0)] * lo + u[(1, 1)] * hi;
            }
        }
        AtomicAmplitudes::normalized(psi.n_atoms(), psi.basis(), c).unwrap()
    }

    #[test]
    fn partial_trace_examples() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bell = rotated(2, &[(1, r), (2, r)]);
        let one = partial_trace(&pure(&bell), &[0]).unwrap();
        assert!((one.matrix() - DMatrix::identity(2, 2) * C64::new(0.5, 0.0)).norm() < 1e-15);

        // Product |+> ⊗ |-> ⊗ |+> keeps its factors.
        let prod = rotated(3, &[(0b101, 1.0)]);
        let kept = partial_trace(&pure(&prod), &[0, 2]).unwrap();
        assert_eq!(kept.matrix()[(3, 3)], C64::new(1.0, 0.0));
        assert!(partial_trace(&pure(&prod), &[3]).is_err());
        assert!(partial_trace(&pure(&prod), &[]).is_err());
        assert!(partial_trace(&pure(&prod), &[1, 1]).is_err());

        // Four atoms, |2,1>, first pair: (2|Φ><Φ| + 2|++><++|)/4.
        let rho = partial_trace(&pure(&csd_state(4, 2).unwrap()), &[0, 1]).unwrap();
        let mut expect = DMatrix::<C64>::zeros(4, 4);
        for (a, b) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            expect[(a, b)] = C64::new(0.25, 0.0);
        }
        expect[(3, 3)] = C64::new(0.5, 0.0);
        assert!((rho.matrix() - expect).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_composes() {
        let psi = random_state(4, &[0.3, -0.1, 0.7, 0.2, -0.5, 0.9, 0.05]);
        let rho = pure(&psi);
        let twice = partial_trace(&partial_trace(&rho, &[0, 1]).unwrap(), &[0]).unwrap();
        let once = partial_trace(&rho, &[0]).unwrap();
        assert!(twice.max_abs_diff(&once).unwrap() < 1e-14);
        let fast = reduced_pure(&psi, &[1, 3]).unwrap();
        assert!(fast.max_abs_diff(&partial_trace(&rho, &[1, 3]).unwrap()).unwrap() < 1e-14);
        assert!((once.trace().re - 1.0).abs() < 1e-14);
        assert!(once.min_eigenvalue() > -1e-14);
    }

    #[test]
    fn concurrence_values() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bell = rotated(2, &[(1, r), (2, r)]);
        assert!((concurrence(&pure(&bell)).unwrap() - 1.0).abs() < 1e-10);
        let prod = rotated(2, &[(3, 1.0)]);
        assert!(concurrence(&pure(&prod)).unwrap().abs() < 1e-10);
        let mixed = DensityMatrix::atomic(DMatrix::identity(4, 4) * C64::new(0.25, 0.0), 2, Basis::Energy).unwrap();
        assert!(concurrence(&mixed).unwrap().abs() < 1e-10);
        let bad = DensityMatrix::atomic(DMatrix::from_diagonal_element(4, 4, C64::new(1.0, 0.0)) - DMatrix::from_fn(4, 4, |r, c| if r == 0 && c == 0 { C64::new(1.5, 0.0) } else { C64::new(0.0, 0.0) }), 2, Basis::Energy).unwrap();
        assert!(concurrence(&bad).is_err());
        assert!(concurrence(&partial_trace(&pure(&prod), &[0]).unwrap()).is_err());
    }

    #[test]
    fn reduced_pairs_of_w_like_states() {
        for n in 3..=6 {
            for sign in [1, -1] {
                let psi = csd_state(n, sign * (n as i32 - 2)).unwrap();
                let rho = reduced_pure(&psi, &[0, 1]).unwrap();
                let c = concurrence(&rho).unwrap();
                assert!((c * c - (2.0 / n as f64).powi(2)).abs() < 1e-10);
                let avg = avg_squared_concurrence(&psi).unwrap();
                assert!((avg - (2.0 / n as f64).powi(2)).abs() < 1e-10, "n {n}: {avg}");
            }
        }
    }

    #[test]
    fn three_tangle_values() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let ghz = rotated(3, &[(0, r), (7, r)]);
        assert!((three_tangle(&ghz).unwrap() - 1.0).abs() < 1e-10);
        for s in [1, -1] {
            assert!(three_tangle(&csd_state(3, s).unwrap()).unwrap().abs() < 1e-10);
        }
        assert!(three_tangle(&rotated(3, &[(5, 1.0)])).unwrap().abs() < 1e-10);
        assert!(three_tangle(&csd_state(4, 0).unwrap()).is_err());
        assert!((three_tangle_of_density(&pure(&ghz)).unwrap() - 1.0).abs() < 1e-10);
        let mixed = DensityMatrix::atomic(DMatrix::identity(8, 8) * C64::new(0.125, 0.0), 3, Basis::Energy).unwrap();
        assert!(three_tangle_of_density(&mixed).is_err());
    }

    #[test]
    fn n_tangle_values() {
        assert!((n_tangle(&csd_state(4, 0).unwrap()).unwrap() - 1.0).abs() < 1e-10);
        for s in [2, -2] {
            assert!(n_tangle(&csd_state(4, s).unwrap()).unwrap().abs() < 1e-10);
        }
        assert!(n_tangle(&csd_state(3, 1).unwrap()).is_err());
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n_tangle(&rotated(2, &[(1, r), (2, r)])).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bell_gems_are_protected_and_maximal() {
        for report in verify_gem_dfs().unwrap() {
            assert!(report.pass, "{report:?}");
        }
        assert!(BellGem::parse("gem9").is_err());
        assert_eq!(BellGem::parse("gem3").unwrap(), BellGem::Gem3);
        let text = serde_json::to_string(&verify_gem_dfs().unwrap()).unwrap();
        assert!(text.contains("\"pass\":true"));
    }

    #[test]
    fn pair_decompositions_hold() {
        for r in pair_decomposition_check(4).unwrap() {
            assert!(r.pass, "{r:?}");
        }
        assert!(pair_decomposition_check(3).is_err());
    }

    #[test]
    fn tangles_invariant_under_atom_swaps() {
        let swap = |psi: &QubitState, a: usize, b: usize| {
            let c = psi.coefficients();
            let s = |i: usize| {
                let (x, y) = ((i >> a) & 1, (i >> b) & 1);
                i & !(1 << a) & !(1 << b) | (x << b) | (y << a)
            };
            AtomicAmplitudes::new(psi.n_atoms(), psi.basis(), (0..c.len()).map(|i| c[s(i)]).collect()).unwrap()
        };
        for psi in [csd_state(3, 1).unwrap(), csd_state(3, -3).unwrap()] {
            assert!((three_tangle(&swap(&psi, 0, 2)).unwrap() - three_tangle(&psi).unwrap()).abs() < 1e-12);
        }
        let psi = csd_state(4, 0).unwrap();
        assert!((n_tangle(&swap(&psi, 1, 3)).unwrap() - n_tangle(&psi).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn concurrence_is_local_unitary_invariant(
            seed in prop::collection::vec(-1.0f64..1.0, 8),
            u in prop::array::uniform4(-3.0f64..3.0),
            v in prop::array::uniform4(-3.0f64..3.0),
        ) {
            let psi = random_state(2, &seed);
            let moved = apply_local(&apply_local(&psi, 0, &random_unitary(u)), 1, &random_unitary(v));
            let a = concurrence(&pure(&psi)).unwrap();
            let b = concurrence(&pure(&moved)).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn residual_tangle_matches_hyperdeterminant(seed in prop::collection::vec(-1.0f64..1.0, 16)) {
            let psi = random_state(3, &seed);
            let t = three_tangle(&psi).unwrap();
            prop_assert!((t - hyperdeterminant_tangle(&psi)).abs() < 1e-9);
        }
    }
}
