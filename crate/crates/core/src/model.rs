//! Rotated-basis bookkeeping for N two-level atoms.
//!
//! The effective Hamiltonian couples the field to `S_x`, so the natural atomic
//! basis is the product basis of `sigma_x` eigenstates `|±> = (|g> ± |e>)/√2`.
//! Every product state in that basis has a collective spin eigenvalue `s`,
//! stored doubled (`2s`) so that sector keys stay integral.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::C64;

/// Tolerance on `Σ|c|² = 1` for every amplitude vector.
pub const NORM_TOL: f64 = 1e-10;

/// Squared norm allowed outside a sector before a state stops counting as
/// supported on it.
pub const SECTOR_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Product basis of `|±>`; bit set means `|+>`.
    Rotated,
    /// Product basis of `|g>, |e>`; bit set means `|e>`.
    Energy,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Rotated => f.write_str("rotated"),
            Basis::Energy => f.write_str("energy"),
        }
    }
}

/// Label of an N-atom rotated product state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RotatedBasisIndex {
    index: usize,
    n_atoms: usize,
}

impl RotatedBasisIndex {
    pub fn new(index: usize, n_atoms: usize) -> Result<Self> {
        check_atoms(n_atoms)?;
        if index >= 1usize << n_atoms {
            return domain(format!("index {index} out of range for {n_atoms} atoms"));
        }
        Ok(Self { index, n_atoms })
    }

    /// Parse a label such as `"+-+"` (atom 1 first).
    pub fn from_label(label: &str) -> Result<Self> {
        let mut index = 0;
        let mut n = 0;
        for (l, ch) in label.chars().enumerate() {
            match ch {
                '+' => index |= 1 << l,
                '-' => {}
                other => return domain(format!("bad rotated-basis symbol {other:?}")),
            }
            n += 1;
        }
        Self::new(index, n)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// `2s = (#plus) - (#minus)`.
    pub fn twice_spin(&self) -> i32 {
        twice_spin_of(self.index, self.n_atoms)
    }

    pub fn label(&self) -> String {
        basis_label(self.index, self.n_atoms, Basis::Rotated)
    }
}

pub(crate) fn check_atoms(n_atoms: usize) -> Result<()> {
    if n_atoms == 0 || n_atoms > 30 {
        return domain(format!("atom count {n_atoms} outside 1..=30"));
    }
    Ok(())
}

#[inline]
pub(crate) fn twice_spin_of(index: usize, n_atoms: usize) -> i32 {
    2 * index.count_ones() as i32 - n_atoms as i32
}

/// Sector position `k = N/2 + s` (the number of `|+>` factors) from `2s`.
#[inline]
pub(crate) fn sector_slot(twice_s: i32, n_atoms: usize) -> usize {
    ((twice_s + n_atoms as i32) / 2) as usize
}

/// Doubled collective spin eigenvalue of a rotated product state.
pub fn spin_eigenvalue(n_atoms: usize, index: usize) -> Result<i32> {
    Ok(RotatedBasisIndex::new(index, n_atoms)?.twice_spin())
}

fn check_sector(n_atoms: usize, twice_s: i32) -> Result<()> {
    check_atoms(n_atoms)?;
    let n = n_atoms as i32;
    if twice_s.abs() > n {
        return domain(format!("2s = {twice_s} outside [-{n}, {n}]"));
    }
    if (twice_s + n) % 2 != 0 {
        return domain(format!("2s = {twice_s} has the wrong parity for N = {n}"));
    }
    Ok(())
}

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of rotated product states in the sector `2s`, `N! / ((N/2+s)! (N/2-s)!)`.
pub fn degeneracy(n_atoms: usize, twice_s: i32) -> Result<u64> {
    check_sector(n_atoms, twice_s)?;
    Ok(binomial(n_atoms as u64, sector_slot(twice_s, n_atoms) as u64))
}

/// Symbol string for an atomic index, atom 1 first.
pub fn basis_label(index: usize, n_atoms: usize, basis: Basis) -> String {
    let (set, unset) = match basis {
        Basis::Rotated => ('+', '-'),
        Basis::Energy => ('e', 'g'),
    };
    (0..n_atoms)
        .map(|l| if index >> l & 1 == 1 { set } else { unset })
        .collect()
}

/// Parse an energy-basis pattern such as `"ggg"` into an index.
pub fn energy_index(pattern: &str) -> Result<usize> {
    let mut index = 0;
    for (l, ch) in pattern.chars().enumerate() {
        match ch {
            'e' => index |= 1 << l,
            'g' => {}
            other => return domain(format!("bad energy-basis symbol {other:?}")),
        }
    }
    Ok(index)
}

/// `2^N` amplitudes of an N-atom pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicAmplitudes {
    n_atoms: usize,
    basis: Basis,
    coefficients: Vec<C64>,
}

impl AtomicAmplitudes {
    pub fn new(n_atoms: usize, basis: Basis, coefficients: Vec<C64>) -> Result<Self> {
        check_atoms(n_atoms)?;
        if coefficients.len() != 1 << n_atoms {
            return domain(format!(
                "{} amplitudes given for {n_atoms} atoms",
                coefficients.len()
            ));
        }
        let norm_sqr: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm_sqr));
        }
        Ok(Self { n_atoms, basis, coefficients })
    }

    /// Rescale arbitrary (nonzero) amplitudes to unit norm.
    pub fn normalized(n_atoms: usize, basis: Basis, mut coefficients: Vec<C64>) -> Result<Self> {
        let norm = coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm * norm));
        }
        coefficients.iter_mut().for_each(|c| *c /= norm);
        Self::new(n_atoms, basis, coefficients)
    }

    /// A single basis state.
    pub fn basis_state(n_atoms: usize, basis: Basis, index: usize) -> Result<Self> {
        check_atoms(n_atoms)?;
        if index >= 1 << n_atoms {
            return domain(format!("index {index} out of range for {n_atoms} atoms"));
        }
        let mut c = vec![C64::new(0.0, 0.0); 1 << n_atoms];
        c[index] = C64::new(1.0, 0.0);
        Self::new(n_atoms, basis, c)
    }

    /// All atoms in `|g>` (energy basis).
    pub fn ground(n_atoms: usize) -> Result<Self> {
        Self::basis_state(n_atoms, Basis::Energy, 0)
    }

    /// All atoms in `|e>` (energy basis).
    pub fn excited(n_atoms: usize) -> Result<Self> {
        check_atoms(n_atoms)?;
        Self::basis_state(n_atoms, Basis::Energy, (1 << n_atoms) - 1)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<C64> {
        self.coefficients
    }

    /// Same state expressed in the rotated basis.
    pub fn to_rotated(&self) -> Self {
        rotate_basis(self, Basis::Rotated)
    }

    pub fn to_energy(&self) -> Self {
        rotate_basis(self, Basis::Energy)
    }

    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.n_atoms != other.n_atoms {
            return domain("inner product between different atom counts");
        }
        let other = rotate_basis(other, self.basis);
        Ok(self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `Σ|c_i|²` per sector, indexed by the number of `|+>` factors.
    pub fn sector_weights(&self) -> Vec<f64> {
        let rotated = self.to_rotated();
        let mut w = vec![0.0; self.n_atoms + 1];
        for (i, c) in rotated.coefficients.iter().enumerate() {
            w[i.count_ones() as usize] += c.norm_sqr();
        }
        w
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&AmplitudesJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: AmplitudesJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// Wire form: `{n_atoms, basis, amplitudes: [[re, im], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudesJson {
    pub n_atoms: usize,
    pub basis: Basis,
    pub amplitudes: Vec<[f64; 2]>,
}

impl From<&AtomicAmplitudes> for AmplitudesJson {
    fn from(a: &AtomicAmplitudes) -> Self {
        Self {
            n_atoms: a.n_atoms,
            basis: a.basis,
            amplitudes: a.coefficients.iter().map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl TryFrom<AmplitudesJson> for AtomicAmplitudes {
    type Error = Error;

    fn try_from(raw: AmplitudesJson) -> Result<Self> {
        let c = raw.amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect();
        AtomicAmplitudes::new(raw.n_atoms, raw.basis, c)
    }
}

impl Serialize for AtomicAmplitudes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AmplitudesJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AtomicAmplitudes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = AmplitudesJson::deserialize(d)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}

/// Apply the per-atom change of basis `|g> = (|+> + |->)/√2`,
/// `|e> = (|+> - |->)/√2` to every atom.
///
/// The map is real orthogonal, so `rotate_basis(rotate_basis(a, Rotated), Energy)`
/// returns `a`.
pub fn rotate_basis(a: &AtomicAmplitudes, target: Basis) -> AtomicAmplitudes {
    if a.basis == target {
        return a.clone();
    }
    let mut c = a.coefficients.clone();
    rotate_in_place(&mut c, a.n_atoms, target);
    AtomicAmplitudes { n_atoms: a.n_atoms, basis: target, coefficients: c }
}

/// In-place butterfly over every atom. `target` names the basis of the output.
pub(crate) fn rotate_in_place(c: &mut [C64], n_atoms: usize, target: Basis) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for l in 0..n_atoms {
        let bit = 1 << l;
        for i in 0..c.len() {
            if i & bit != 0 {
                continue;
            }
            let lo = c[i];
            let hi = c[i | bit];
            match target {
                // energy (g = lo, e = hi) -> rotated (- = lo, + = hi)
                Basis::Rotated => {
                    c[i] = (lo - hi) * h;
                    c[i | bit] = (lo + hi) * h;
                }
                // rotated (- = lo, + = hi) -> energy (g = lo, e = hi)
                Basis::Energy => {
                    c[i] = (hi + lo) * h;
                    c[i | bit] = (hi - lo) * h;
                }
            }
        }
    }
}

/// Completely symmetric Dicke state `|N/2, s>` in the rotated basis.
pub fn csd_state(n_atoms: usize, twice_s: i32) -> Result<AtomicAmplitudes> {
    let n = degeneracy(n_atoms, twice_s)?;
    let amp = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    let c = (0..1usize << n_atoms)
        .map(|i| {
            if twice_spin_of(i, n_atoms) == twice_s {
                amp
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    AtomicAmplitudes::new(n_atoms, Basis::Rotated, c)
}

/// Weights `b_s` on the symmetric Dicke states, `s = -N/2 ..= N/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct DickeWeights {
    n_atoms: usize,
    weights: Vec<C64>,
}

impl DickeWeights {
    pub fn new(n_atoms: usize, weights: Vec<C64>) -> Result<Self> {
        check_atoms(n_atoms)?;
        if weights.len() != n_atoms + 1 {
            return domain(format!("{} Dicke weights for {n_atoms} atoms", weights.len()));
        }
        let norm_sqr: f64 = weights.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm_sqr));
        }
        Ok(Self { n_atoms, weights })
    }

    /// Weights of the all-ground preparation, `b_s = √(n(s) / 2^N)`.
    pub fn ground(n_atoms: usize) -> Result<Self> {
        check_atoms(n_atoms)?;
        let scale = 0.5f64.powf(n_atoms as f64);
        let w = (0..=n_atoms)
            .map(|k| C64::new((binomial(n_atoms as u64, k as u64) as f64 * scale).sqrt(), 0.0))
            .collect();
        Self::new(n_atoms, w)
    }

    /// All weight on a single sector.
    pub fn sector(n_atoms: usize, twice_s: i32) -> Result<Self> {
        check_sector(n_atoms, twice_s)?;
        let mut w = vec![C64::new(0.0, 0.0); n_atoms + 1];
        w[sector_slot(twice_s, n_atoms)] = C64::new(1.0, 0.0);
        Self::new(n_atoms, w)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Indexed by `k = N/2 + s`.
    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn weight(&self, twice_s: i32) -> Result<C64> {
        check_sector(self.n_atoms, twice_s)?;
        Ok(self.weights[sector_slot(twice_s, self.n_atoms)])
    }

    /// `|b_s|²` per sector.
    pub fn sector_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|b| b.norm_sqr()).collect()
    }
}

/// Spread Dicke weights back onto the `2^N` rotated amplitudes.
pub fn dicke_expand(b: &DickeWeights) -> AtomicAmplitudes {
    let n = b.n_atoms;
    let scale: Vec<f64> = (0..=n)
        .map(|k| 1.0 / (binomial(n as u64, k as u64) as f64).sqrt())
        .collect();
    let c = (0..1usize << n)
        .map(|i| {
            let k = i.count_ones() as usize;
            b.weights[k] * scale[k]
        })
        .collect();
    AtomicAmplitudes { n_atoms: n, basis: Basis::Rotated, coefficients: c }
}

/// Projection of a state onto the symmetric sector.
#[derive(Clone, Debug)]
pub struct DickeProjection {
    /// Raw overlaps `<N/2, s|a>`; unit norm only when `residual_norm` is 0.
    pub weights: Vec<C64>,
    /// Norm of the component orthogonal to every symmetric Dicke state.
    pub residual_norm: f64,
}

impl DickeProjection {
    /// Convert to [`DickeWeights`]; fails unless the input was symmetric.
    pub fn into_weights(self, n_atoms: usize) -> Result<DickeWeights> {
        DickeWeights::new(n_atoms, self.weights)
    }
}

pub fn dicke_project(a: &AtomicAmplitudes) -> DickeProjection {
    let a = a.to_rotated();
    let n = a.n_atoms;
    let mut sums = vec![C64::new(0.0, 0.0); n + 1];
    for (i, c) in a.coefficients.iter().enumerate() {
        sums[i.count_ones() as usize] += c;
    }
    let weights: Vec<C64> = sums
        .iter()
        .enumerate()
        .map(|(k, s)| s / (binomial(n as u64, k as u64) as f64).sqrt())
        .collect();
    let expanded = dicke_expand(&DickeWeights { n_atoms: n, weights: weights.clone() });
    let residual_norm = a
        .coefficients
        .iter()
        .zip(&expanded.coefficients)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    DickeProjection { weights, residual_norm }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DfsClass {
    /// Supported on `s = 0`: with the field in vacuum the joint state is frozen.
    Global,
    /// Supported on one degenerate sector: the reduced atomic state is frozen.
    Atomic { twice_s: i32 },
    None,
}

pub fn classify_dfs(a: &AtomicAmplitudes) -> DfsClass {
    let n = a.n_atoms;
    let weights = a.sector_weights();
    let total: f64 = weights.iter().sum();
    let Some((k, _)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| total - **w < SECTOR_TOL)
    else {
        return DfsClass::None;
    };
    let twice_s = 2 * k as i32 - n as i32;
    if twice_s == 0 {
        DfsClass::Global
    } else if binomial(n as u64, k as u64) > 1 {
        DfsClass::Atomic { twice_s }
    } else {
        DfsClass::None
    }
}

/// One row of the sector table: eigenvalue, degeneracy and member labels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorRow {
    pub twice_s: i32,
    pub degeneracy: u64,
    pub members: Vec<String>,
}

/// All spin sectors of N atoms, from `s = N/2` down to `-N/2`.
pub fn sector_table(n_atoms: usize) -> Result<Vec<SectorRow>> {
    check_atoms(n_atoms)?;
    let n = n_atoms as i32;
    (0..=n)
        .rev()
        .map(|k| {
            let twice_s = 2 * k - n;
            // '+' sorts before '-', so leading `+` factors come first.
            let mut members: Vec<String> = (0..1usize << n_atoms)
                .filter(|&i| twice_spin_of(i, n_atoms) == twice_s)
                .map(|i| basis_label(i, n_atoms, Basis::Rotated))
                .collect();
            members.sort();
            Ok(SectorRow { twice_s, degeneracy: degeneracy(n_atoms, twice_s)?, members })
        })
        .collect()
}

/// Render `2s` as a half-integer string: `"1/2"`, `"-1"`, `"0"`.
pub fn format_half(twice_s: i32) -> String {
    if twice_s % 2 == 0 {
        (twice_s / 2).to_string()
    } else {
        format!("{twice_s}/2")
    }
}

/// Parse `"1/2"`, `"-3/2"`, `"1"` into `2s`.
pub fn parse_half(text: &str) -> Result<i32> {
    let text = text.trim();
    let bad = || Error::Domain(format!("bad half-integer {text:?}"));
    if let Some((num, den)) = text.split_once('/') {
        if den.trim() != "2" {
            return Err(bad());
        }
        let num: i32 = num.trim().parse().map_err(|_| bad())?;
        if num % 2 == 0 {
            return Err(bad());
        }
        Ok(num)
    } else {
        let whole: i32 = text.parse().map_err(|_| bad())?;
        Ok(2 * whole)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn idx(label: &str) -> usize {
        RotatedBasisIndex::from_label(label).unwrap().index()
    }

    #[test]
    fn spin_of_labelled_states() {
        assert_eq!(RotatedBasisIndex::from_label("++++").unwrap().twice_spin(), 4);
        assert_eq!(RotatedBasisIndex::from_label("+-").unwrap().twice_spin(), 0);
        assert_eq!(RotatedBasisIndex::from_label("+-+").unwrap().twice_spin(), 1);
        assert!(spin_eigenvalue(3, 8).is_err());
        assert_eq!(idx("+-"), 1);
    }

    #[test]
    fn degeneracies() {
        let n4: Vec<u64> = [4, 2, 0, -2, -4].iter().map(|&s| degeneracy(4, s).unwrap()).collect();
        assert_eq!(n4, vec![1, 4, 6, 4, 1]);
        assert_eq!(degeneracy(1, 1).unwrap(), 1);
        assert_eq!(degeneracy(3, 1).unwrap(), 3);
        assert!(matches!(degeneracy(3, 0), Err(Error::Domain(_))));
        assert!(degeneracy(2, 4).is_err());
    }

    #[test]
    fn degeneracies_sum_to_dimension() {
        for n in 1..=20usize {
            let total: u64 = (0..=n as i32)
                .map(|k| degeneracy(n, 2 * k - n as i32).unwrap())
                .sum();
            assert_eq!(total, 1 << n);
        }
    }

    #[test]
    fn spin_is_permutation_invariant() {
        for n in 1..=6usize {
            for i in 0..1usize << n {
                let s = twice_spin_of(i, n);
                for a in 0..n {
                    for b in a + 1..n {
                        let (ba, bb) = (i >> a & 1, i >> b & 1);
                        let swapped = (i & !(1 << a) & !(1 << b)) | (ba << b) | (bb << a);
                        assert_eq!(twice_spin_of(swapped, n), s);
                    }
                }
            }
        }
    }

    #[test]
    fn ground_state_is_uniform_in_rotated_basis() {
        for n in 1..=5 {
            let r = AtomicAmplitudes::ground(n).unwrap().to_rotated();
            let expect = 1.0 / (2f64.powi(n as i32)).sqrt();
            for c in r.coefficients() {
                assert!((c - C64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn single_atom_rotations() {
        let plus = AtomicAmplitudes::basis_state(1, Basis::Rotated, 1).unwrap();
        let e = plus.to_energy();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.coefficients()[0] - c(h)).norm() < 1e-15);
        assert!((e.coefficients()[1] - c(h)).norm() < 1e-15);

        let excited = AtomicAmplitudes::excited(1).unwrap().to_rotated();
        // |e> = (|+> - |->)/√2; index 1 is |+>.
        assert!((excited.coefficients()[1] - c(h)).norm() < 1e-15);
        assert!((excited.coefficients()[0] - c(-h)).norm() < 1e-15);
    }

    #[test]
    fn csd_examples() {
        let w = csd_state(3, 1).unwrap();
        let a = 1.0 / 3f64.sqrt();
        for label in ["++-", "+-+", "-++"] {
            assert!((w.coefficients()[idx(label)] - c(a)).norm() < 1e-15);
        }
        assert_eq!(w.coefficients().iter().filter(|c| c.norm() > 0.0).count(), 3);

        let psi_a = csd_state(4, 0).unwrap();
        for label in ["++--", "+-+-", "+--+", "-++-", "-+-+", "--++"] {
            assert!((psi_a.coefficients()[idx(label)] - c(1.0 / 6f64.sqrt())).norm() < 1e-15);
        }
        let pp = csd_state(2, 2).unwrap();
        assert_eq!(pp.coefficients()[3], c(1.0));
        assert!(csd_state(4, 1).is_err());
    }

    #[test]
    fn dicke_round_trip_and_residual() {
        let g = DickeWeights::ground(4).unwrap();
        let expanded = dicke_expand(&g);
        let direct = AtomicAmplitudes::ground(4).unwrap().to_rotated();
        for (x, y) in expanded.coefficients().iter().zip(direct.coefficients()) {
            assert!((x - y).norm() < 1e-14);
        }
        let proj = dicke_project(&direct);
        assert!(proj.residual_norm < 1e-14);
        for (x, y) in proj.weights.iter().zip(g.weights()) {
            assert!((x - y).norm() < 1e-14);
        }

        let top = DickeWeights::sector(3, 3).unwrap();
        let e = dicke_expand(&top);
        assert_eq!(e.coefficients()[idx("+++")], c(1.0));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut anti = vec![c(0.0); 4];
        anti[idx("+-")] = c(h);
        anti[idx("-+")] = c(-h);
        let anti = AtomicAmplitudes::new(2, Basis::Rotated, anti).unwrap();
        let p = dicke_project(&anti);
        assert!((p.residual_norm - 1.0).abs() < 1e-14);
        assert!(p.into_weights(2).is_err());
    }

    #[test]
    fn dfs_classes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(classify_dfs(&csd_state(3, 1).unwrap()), DfsClass::Atomic { twice_s: 1 });
        assert_eq!(classify_dfs(&csd_state(2, 2).unwrap()), DfsClass::None);
        assert_eq!(classify_dfs(&csd_state(4, 0).unwrap()), DfsClass::Global);
        assert_eq!(classify_dfs(&AtomicAmplitudes::ground(2).unwrap()), DfsClass::None);
        let mut mixed = vec![c(0.0); 8];
        mixed[idx("++-")] = c(h);
        mixed[idx("+--")] = c(h);
        let mixed = AtomicAmplitudes::new(3, Basis::Rotated, mixed).unwrap();
        assert_eq!(classify_dfs(&mixed), DfsClass::None);
    }

    #[test]
    fn sector_table_for_four_atoms() {
        let table = sector_table(4).unwrap();
        let shape: Vec<(i32, u64)> = table.iter().map(|r| (r.twice_s, r.degeneracy)).collect();
        assert_eq!(shape, vec![(4, 1), (2, 4), (0, 6), (-2, 4), (-4, 1)]);
        assert_eq!(table[0].members, vec!["++++"]);
        assert_eq!(table[1].members.len(), 4);
        assert!(table[2].members.contains(&"-+-+".to_string()));
    }

    #[test]
    fn json_round_trip() {
        let w = csd_state(3, -1).unwrap();
        let text = w.to_json().unwrap();
        assert!(text.contains("\"basis\":\"rotated\""));
        assert_eq!(AtomicAmplitudes::from_json(&text).unwrap(), w);
        let bad = r#"{"n_atoms":1,"basis":"energy","amplitudes":[[1,0],[1,0]]}"#;
        assert!(matches!(AtomicAmplitudes::from_json(bad), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn half_integers() {
        assert_eq!(parse_half("1/2").unwrap(), 1);
        assert_eq!(parse_half("-3/2").unwrap(), -3);
        assert_eq!(parse_half("-1").unwrap(), -2);
        assert!(parse_half("2/2").is_err());
        assert_eq!(format_half(-3), "-3/2");
        assert_eq!(format_half(4), "2");
    }
}
