//! Closed-form joint state of the atoms and the damped cavity mode.
//!
//! Starting from the field vacuum and atomic amplitudes `c_i` in the rotated
//! basis, the joint state at time `t` is
//!
//! ```text
//! ρ(t) = Σ_ij c_i c_j* f(t)^{(s_i - s_j)²} |-2 s_i α(t)><-2 s_j α(t)| ⊗ |i><j|
//! α(t) = i (g/k) (1 - e^{-kt/2})
//! f(t) = f₁(t) e^{2|α|²},  f₁(t) = exp(-(2g²/k) t + (4g²/k²)(1 - e^{-kt/2}))
//! ```
//!
//! Everything depends on the amplitudes only through sums over spin sectors,
//! which is why purities cost `O(N²)` once the sector weights are known.
//!
//! Public functions take dimensionless time `kt`. Passing `f64::INFINITY`
//! selects the steady state. Raw-seconds versions live in [`raw`].

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{atomic_labels, DensityMatrix};
use crate::error::{domain, Error, Result};
use crate::model::{
    basis_label, binomial, energy_index, format_half, rotate_in_place, AtomicAmplitudes, Basis,
    DickeWeights,
};
use crate::phase_space::{
    coherent_amplitudes, coherent_overlap, fock_cutoff_for, CoherentDyads, FieldState,
};
use crate::C64;

/// Smallest outcome probability accepted for conditioning.
pub const CONDITIONING_TOL: f64 = 1e-12;

/// Slack allowed on population-based decoherence estimates.
pub const ESTIMATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    n_atoms: usize,
    /// Atom-cavity coupling, s⁻¹.
    g: f64,
    /// Cavity decay rate, s⁻¹.
    k: f64,
}

impl ModelParams {
    pub fn new(n_atoms: usize, g: f64, k: f64) -> Result<Self> {
        crate::model::check_atoms(n_atoms)?;
        if !(g >= 0.0 && g.is_finite()) {
            return domain(format!("coupling g = {g} must be finite and nonnegative"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return domain(format!("decay rate k = {k} must be finite and positive"));
        }
        Ok(Self { n_atoms, g, k })
    }

    /// Parameters with `k = 1`, so that `kt` is the time in seconds.
    pub fn from_ratio(n_atoms: usize, g_over_k: f64) -> Result<Self> {
        Self::new(n_atoms, g_over_k, 1.0)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn ratio(&self) -> f64 {
        self.g / self.k
    }

    pub fn with_atoms(&self, n_atoms: usize) -> Result<Self> {
        Self::new(n_atoms, self.g, self.k)
    }
}

fn check_kt(kt: f64) -> Result<()> {
    if kt.is_nan() || kt < 0.0 {
        return domain(format!("time kt = {kt} must be nonnegative"));
    }
    Ok(())
}

/// Seconds-based forms of the decoherence quantities.
pub mod raw {
    use crate::C64;

    /// `i (g/k)(1 - e^{-kt/2})` with `t` in seconds.
    pub fn alpha(g: f64, k: f64, t: f64) -> C64 {
        C64::new(0.0, (g / k) * -(-k * t / 2.0).exp_m1())
    }

    /// `(ln f, ln f₁)` with `t` in seconds.
    pub fn ln_decoherence(g: f64, k: f64, t: f64) -> (f64, f64) {
        if g == 0.0 {
            return (0.0, 0.0);
        }
        let r2 = (g / k).powi(2);
        let x = k * t;
        if x.is_infinite() {
            return (f64::NEG_INFINITY, f64::NEG_INFINITY);
        }
        let u = -(-x / 2.0).exp_m1();
        let ln_f1 = -2.0 * r2 * x + 4.0 * r2 * u;
        // ln f = -2 (g/k)² (x - 2u - u²) = ln f₁ + 2|α|²
        let ln_f = -2.0 * r2 * (x - 2.0 * u - u * u);
        (ln_f.min(0.0), ln_f1.min(0.0))
    }
}

/// Cavity amplitude scale `α` at dimensionless time `kt`.
pub fn alpha(p: &ModelParams, kt: f64) -> Result<C64> {
    check_kt(kt)?;
    Ok(raw::alpha(p.g, p.k, kt / p.k))
}

/// Amplitude in the Hamiltonian limit, `i g t / 2`.
pub fn alpha_hamiltonian_limit(p: &ModelParams, kt: f64) -> Result<C64> {
    check_kt(kt)?;
    Ok(C64::new(0.0, p.ratio() * kt / 2.0))
}

/// The decoherence functions `f` (joint) and `f₁` (atomic) at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decoherence {
    pub f: f64,
    pub f1: f64,
    ln_f: f64,
    ln_f1: f64,
}

impl Decoherence {
    fn from_logs(ln_f: f64, ln_f1: f64) -> Self {
        Self { f: ln_f.exp(), f1: ln_f1.exp(), ln_f, ln_f1 }
    }

    /// `f^{d²}`, exact 1 at `d = 0` even in the steady state.
    pub fn joint_power(&self, d: i32) -> f64 {
        power(self.ln_f, d)
    }

    /// `f₁^{d²}`.
    pub fn atomic_power(&self, d: i32) -> f64 {
        power(self.ln_f1, d)
    }

    pub fn ln_f(&self) -> f64 {
        self.ln_f
    }

    pub fn ln_f1(&self) -> f64 {
        self.ln_f1
    }
}

#[inline]
fn power(ln_base: f64, d: i32) -> f64 {
    if d == 0 {
        1.0
    } else {
        (ln_base * (d * d) as f64).exp()
    }
}

pub fn decoherence(p: &ModelParams, kt: f64) -> Result<Decoherence> {
    check_kt(kt)?;
    let (ln_f, ln_f1) = raw::ln_decoherence(p.g, p.k, kt / p.k);
    Ok(Decoherence::from_logs(ln_f, ln_f1))
}

/// `Σ_{k,k'} w_k w_k' exp(2 (k-k')² ln_base)`.
///
/// With `ln_base = ln f` this is the joint purity, with `ln f₁` the atomic
/// purity and with `-2|α|²` the field purity.
pub fn grouped_purity(sector_weights: &[f64], ln_base: f64) -> f64 {
    let n = sector_weights.len();
    let mut total = 0.0;
    for d in 0..n {
        let lag: f64 = (0..n - d).map(|k| sector_weights[k] * sector_weights[k + d]).sum();
        if lag == 0.0 {
            continue;
        }
        let factor = power(2.0 * ln_base, d as i32);
        total += if d == 0 { lag } else { 2.0 * lag * factor };
    }
    total
}

/// Evaluate `f` at every grid point in parallel; results keep grid order.
pub fn sweep<T, F>(grid: &[f64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    grid.par_iter().map(|&x| f(x)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PurityPoint {
    pub kt: f64,
    pub global: f64,
    pub atomic: f64,
    pub field: f64,
}

/// Global, atomic and field purities along a time grid from sector weights
/// alone; no `2^N` amplitudes are touched.
pub fn purity_curve(p: &ModelParams, sector_weights: &[f64], kts: &[f64]) -> Result<Vec<PurityPoint>> {
    if sector_weights.len() != p.n_atoms + 1 {
        return domain("sector weights do not match the atom count");
    }
    kts.iter()
        .map(|&kt| {
            let dec = decoherence(p, kt)?;
            let a = alpha(p, kt)?;
            Ok(PurityPoint {
                kt,
                global: grouped_purity(sector_weights, dec.ln_f),
                atomic: grouped_purity(sector_weights, dec.ln_f1),
                field: grouped_purity(sector_weights, -2.0 * a.norm_sqr()),
            })
        })
        .collect()
}

/// Exact steady-state purity for the all-ground start,
/// `binomial(2N, N) / 4^N`.
pub fn steady_purity_uniform(n_atoms: usize) -> Result<(Ratio<u128>, f64)> {
    crate::model::check_atoms(n_atoms)?;
    if n_atoms > 60 {
        return domain("exact steady purity limited to N <= 60");
    }
    let n = n_atoms as u128;
    let sum_sq: u128 = (0..=n).map(|l| binom_u128(n, l).pow(2)).sum();
    let r = Ratio::new(sum_sq, 1u128 << (2 * n));
    Ok((r, sum_sq as f64 / (1u128 << (2 * n)) as f64))
}

fn binom_u128(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// `Γ(N + 1/2) / (√π Γ(N + 1))`, the gamma-function form of the same value.
pub fn steady_purity_gamma(n_atoms: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let n = n_atoms as f64;
    (ln_gamma(n + 0.5) - ln_gamma(n + 1.0) - 0.5 * std::f64::consts::PI.ln()).exp()
}

/// The closed-form joint state at one time, held lazily.
#[derive(Clone, Debug)]
pub struct ClosedFormState {
    params: ModelParams,
    amplitudes: AtomicAmplitudes,
    kt: f64,
    alpha: C64,
    decoherence: Decoherence,
}

impl ClosedFormState {
    pub fn new(params: ModelParams, amplitudes: &AtomicAmplitudes, kt: f64) -> Result<Self> {
        if amplitudes.n_atoms() != params.n_atoms {
            return domain(format!(
                "{} atoms in the state, {} in the parameters",
                amplitudes.n_atoms(),
                params.n_atoms
            ));
        }
        Ok(Self {
            params,
            amplitudes: amplitudes.to_rotated(),
            kt,
            alpha: alpha(&params, kt)?,
            decoherence: decoherence(&params, kt)?,
        })
    }

    /// The `kt → ∞` limit.
    pub fn steady(params: ModelParams, amplitudes: &AtomicAmplitudes) -> Result<Self> {
        Self::new(params, amplitudes, f64::INFINITY)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Rotated-basis amplitudes.
    pub fn amplitudes(&self) -> &AtomicAmplitudes {
        &self.amplitudes
    }

    pub fn kt(&self) -> f64 {
        self.kt
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn decoherence(&self) -> Decoherence {
        self.decoherence
    }

    pub fn sector_weights(&self) -> Vec<f64> {
        self.amplitudes.sector_weights()
    }

    /// Coherent amplitude `-2sα` correlated with sector slot `k`.
    fn branch_amplitude(&self, slot: usize) -> C64 {
        -(2.0 * slot as f64 - self.params.n_atoms as f64) * self.alpha
    }

    /// Cutoff from the leakage rule for the occupied sectors.
    pub fn fock_cutoff(&self) -> usize {
        let m = self
            .sector_weights()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, _)| self.branch_amplitude(k).norm_sqr())
            .fold(0.0, f64::max);
        fock_cutoff_for(m)
    }
}

fn coherent_branches(
    twice_s: &[i32],
    alpha: C64,
    cutoff: usize,
) -> Result<std::collections::HashMap<i32, Vec<C64>>> {
    let mut out = std::collections::HashMap::new();
    for &s in twice_s {
        if let std::collections::hash_map::Entry::Vacant(e) = out.entry(s) {
            e.insert(coherent_amplitudes(-(s as f64) * alpha, cutoff)?);
        }
    }
    Ok(out)
}

/// Dense joint matrix `Σ_ij a_i a_j* (σf)^{d²} |β_i><β_j| ⊗ |i><j|` over
/// an arbitrary atomic basis whose elements carry spins `twice_s`.
fn materialize(
    coeffs: &[C64],
    twice_s: &[i32],
    alpha: C64,
    dec: &Decoherence,
    sign: f64,
    cutoff: usize,
) -> Result<DMatrix<C64>> {
    let occupied: Vec<usize> = (0..coeffs.len()).filter(|&i| coeffs[i].norm_sqr() > 0.0).collect();
    let spins: Vec<i32> = occupied.iter().map(|&i| twice_s[i]).collect();
    let branches = coherent_branches(&spins, alpha, cutoff)?;
    let d = cutoff + 1;
    let dim = coeffs.len() * d;
    let mut m = DMatrix::zeros(dim, dim);
    for &j in &occupied {
        let vj = &branches[&twice_s[j]];
        for &i in &occupied {
            let vi = &branches[&twice_s[i]];
            let diff = (twice_s[i] - twice_s[j]) / 2;
            let mut coh = dec.joint_power(diff);
            if sign < 0.0 && diff % 2 != 0 {
                coh = -coh;
            }
            let pref = coeffs[i] * coeffs[j].conj() * coh;
            if pref == C64::new(0.0, 0.0) {
                continue;
            }
            for n in 0..d {
                let right = pref * vj[n].conj();
                for mm in 0..d {
                    m[(i * d + mm, j * d + n)] = vi[mm] * right;
                }
            }
        }
    }
    Ok(m)
}

fn choose_cutoff(state: &ClosedFormState, cutoff: Option<usize>) -> usize {
    cutoff.unwrap_or_else(|| state.fock_cutoff())
}

fn rotated_spins(n_atoms: usize) -> Vec<i32> {
    (0..1usize << n_atoms)
        .map(|i| crate::model::twice_spin_of(i, n_atoms))
        .collect()
}

/// Dense joint density matrix in the rotated atomic basis (atomic index
/// major). A cutoff too small for the leakage rule is an error.
pub fn closed_form_density(state: &ClosedFormState, cutoff: Option<usize>) -> Result<DensityMatrix> {
    let n = state.params.n_atoms;
    let cutoff = choose_cutoff(state, cutoff);
    let m = materialize(
        state.amplitudes.coefficients(),
        &rotated_spins(n),
        state.alpha,
        &state.decoherence,
        1.0,
        cutoff,
    )?;
    DensityMatrix::joint(m, n, cutoff, Basis::Rotated)
}

/// Steady joint state `Σ_i |c_i|² |-2s_i α_ss><-2s_i α_ss| ⊗ |i><i|`
/// (plus coherences inside each sector), `α_ss = i g/k`.
pub fn steady_state(
    c: &AtomicAmplitudes,
    p: &ModelParams,
    cutoff: Option<usize>,
) -> Result<DensityMatrix> {
    closed_form_density(&ClosedFormState::steady(*p, c)?, cutoff)
}

pub fn global_purity(state: &ClosedFormState) -> f64 {
    grouped_purity(&state.sector_weights(), state.decoherence.ln_f)
}

pub fn atomic_purity(state: &ClosedFormState) -> f64 {
    grouped_purity(&state.sector_weights(), state.decoherence.ln_f1)
}

pub fn field_purity(state: &ClosedFormState) -> f64 {
    grouped_purity(&state.sector_weights(), -2.0 * state.alpha.norm_sqr())
}

/// Reduced field state: a mixture of coherent states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherentMixture {
    /// `(weight, amplitude)`, one entry per occupied spin sector.
    pub components: Vec<(f64, C64)>,
}

impl CoherentMixture {
    pub fn purity(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|(wa, a)| self.components.iter().map(move |(wb, b)| (wa, a, wb, b)))
            .map(|(wa, a, wb, b)| wa * wb * coherent_overlap(*a, *b).norm_sqr())
            .sum()
    }

    pub fn to_dyads(&self) -> CoherentDyads {
        CoherentDyads {
            dyads: self.components.iter().map(|(w, a)| (C64::new(*w, 0.0), *a, *a)).collect(),
        }
    }
}

pub fn reduced_field(state: &ClosedFormState) -> CoherentMixture {
    let components = state
        .sector_weights()
        .into_iter()
        .enumerate()
        .filter(|(_, w)| *w > 0.0)
        .map(|(k, w)| (w, state.branch_amplitude(k)))
        .collect();
    CoherentMixture { components }
}

/// `<a†a> = 4|α|² Σ_i s_i² |c_i|²`.
pub fn mean_photon(state: &ClosedFormState) -> f64 {
    let n = state.params.n_atoms as f64;
    let moment: f64 = state
        .sector_weights()
        .iter()
        .enumerate()
        .map(|(k, w)| w * (2.0 * k as f64 - n).powi(2))
        .sum();
    state.alpha.norm_sqr() * moment
}

/// Reduced atomic state `c_i c_j* f₁^{(s_i-s_j)²}` in the requested basis.
pub fn reduced_atoms(state: &ClosedFormState, basis: Basis) -> Result<DensityMatrix> {
    let n = state.params.n_atoms;
    let dim = 1usize << n;
    let c = state.amplitudes.coefficients();
    let dec = state.decoherence;
    let slot = |i: usize| i.count_ones() as i32;
    let mut m = DMatrix::from_fn(dim, dim, |i, j| {
        c[i] * c[j].conj() * dec.atomic_power(slot(i) - slot(j))
    });
    if basis == Basis::Energy {
        to_energy_basis(&mut m, n);
    }
    DensityMatrix::atomic(m, n, basis)
}

/// `ρ → U ρ U†` with `U` the real rotated-to-energy map.
pub(crate) fn to_energy_basis(m: &mut DMatrix<C64>, n_atoms: usize) {
    let dim = m.nrows();
    for j in 0..dim {
        let mut col: Vec<C64> = m.column(j).iter().copied().collect();
        rotate_in_place(&mut col, n_atoms, Basis::Energy);
        m.column_mut(j).copy_from_slice(&col);
    }
    for i in 0..dim {
        let mut row: Vec<C64> = m.row(i).iter().copied().collect();
        rotate_in_place(&mut row, n_atoms, Basis::Energy);
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
}

/// `A[p][k] = Σ_{i in sector k} U_{p,i} c_i`: energy-basis amplitudes of each
/// sector's component. Indexed `[k][p]`.
fn sector_components_energy(c: &AtomicAmplitudes) -> Vec<Vec<C64>> {
    let n = c.n_atoms();
    let rotated = c.to_rotated();
    (0..=n)
        .map(|k| {
            let mut part: Vec<C64> = rotated
                .coefficients()
                .iter()
                .enumerate()
                .map(|(i, v)| if i.count_ones() as usize == k { *v } else { C64::new(0.0, 0.0) })
                .collect();
            rotate_in_place(&mut part, n, Basis::Energy);
            part
        })
        .collect()
}

/// Energy-basis joint level populations, indexed by energy pattern.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointPopulations {
    pub n_atoms: usize,
    pub probabilities: Vec<f64>,
}

impl JointPopulations {
    /// Probability of a pattern such as `"egg"` (atom 1 first).
    pub fn pattern(&self, pattern: &str) -> Result<f64> {
        if pattern.chars().count() != self.n_atoms {
            return domain(format!("pattern {pattern:?} does not describe {} atoms", self.n_atoms));
        }
        Ok(self.probabilities[energy_index(pattern)?])
    }

    pub fn labeled(&self) -> Vec<(String, f64)> {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| (basis_label(i, self.n_atoms, Basis::Energy), *p))
            .collect()
    }

    /// Totals by number of excited atoms, `0..=N`.
    pub fn class_totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_atoms + 1];
        for (i, p) in self.probabilities.iter().enumerate() {
            out[i.count_ones() as usize] += p;
        }
        out
    }

    /// Mean probability of a single pattern with `excited` atoms up.
    pub fn class_mean(&self, excited: usize) -> f64 {
        self.class_totals()[excited] / binomial(self.n_atoms as u64, excited as u64) as f64
    }
}

pub fn joint_populations(state: &ClosedFormState) -> JointPopulations {
    let n = state.params.n_atoms;
    let parts = sector_components_energy(&state.amplitudes);
    let dec = state.decoherence;
    let probabilities = (0..1usize << n)
        .map(|p| {
            let mut total = 0.0;
            for (k, ak) in parts.iter().enumerate() {
                for (kk, akk) in parts.iter().enumerate() {
                    total += (ak[p] * akk[p].conj()).re * dec.atomic_power(k as i32 - kk as i32);
                }
            }
            total
        })
        .collect();
    JointPopulations { n_atoms: n, probabilities }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "atoms", rename_all = "snake_case")]
pub enum DecoherenceEstimate {
    /// `f₁ = P_g - P_e`.
    One { f1: f64 },
    /// `f₁⁴` from the bunched pair `P_eee + P_ggg` and from the mixed
    /// patterns `P_eeg + P_egg` (per-pattern class means).
    Three { f1_pow4: f64, f1_pow4_mixed: f64 },
}

/// Recover powers of `f₁` from all-ground-start populations (N = 1 or 3).
pub fn decoherence_from_populations(pops: &JointPopulations) -> Result<DecoherenceEstimate> {
    let check = |v: f64, name: &str| {
        if v < -ESTIMATE_TOL || v > 1.0 + ESTIMATE_TOL || !v.is_finite() {
            Err(Error::Inconsistent(format!("{name} estimate {v} outside [0, 1]")))
        } else {
            Ok(v)
        }
    };
    match pops.n_atoms {
        1 => {
            let f1 = pops.probabilities[0] - pops.probabilities[1];
            Ok(DecoherenceEstimate::One { f1: check(f1, "f1")? })
        }
        3 => {
            let bunched = pops.probabilities[0] + pops.probabilities[7];
            let f1_pow4 = (8.0 * bunched - 5.0) / 3.0;
            let mixed = pops.class_mean(2) + pops.class_mean(1);
            let f1_pow4_mixed = 1.0 - 8.0 * mixed;
            Ok(DecoherenceEstimate::Three {
                f1_pow4: check(f1_pow4, "f1^4")?,
                f1_pow4_mixed: check(f1_pow4_mixed, "f1^4")?,
            })
        }
        n => domain(format!("population monitoring is defined for 1 or 3 atoms, not {n}")),
    }
}

/// Pure joint state `Σ_i c_i |-2 s_i α̃> ⊗ |i>` with `α̃ = i g t / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CatState {
    n_atoms: usize,
    /// Rotated amplitudes.
    amplitudes: AtomicAmplitudes,
    alpha: C64,
}

pub fn transient_pure_state(c: &AtomicAmplitudes, p: &ModelParams, kt: f64) -> Result<CatState> {
    if c.n_atoms() != p.n_atoms {
        return domain("atom counts differ");
    }
    Ok(CatState {
        n_atoms: p.n_atoms,
        amplitudes: c.to_rotated(),
        alpha: alpha_hamiltonian_limit(p, kt)?,
    })
}

impl CatState {
    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    /// Exact `||ψ||²`: distinct atomic states are orthogonal, coherent states normalized.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.coefficients().iter().map(|c| c.norm_sqr()).sum()
    }

    fn branch(&self, slot: usize) -> C64 {
        -(2.0 * slot as f64 - self.n_atoms as f64) * self.alpha
    }

    /// Unnormalized field superposition attached to an energy-basis pattern.
    pub fn field_branch(&self, pattern: usize) -> FieldState {
        let parts = sector_components_energy(&self.amplitudes);
        FieldState::Coherent(
            parts
                .iter()
                .enumerate()
                .filter(|(_, a)| a[pattern].norm() > 1e-15)
                .map(|(k, a)| (a[pattern], self.branch(k)))
                .collect(),
        )
    }

    /// `<ψ|ρ|ψ>` against the exact solution, from analytic overlaps.
    pub fn fidelity_with(&self, exact: &ClosedFormState) -> Result<f64> {
        if exact.params.n_atoms != self.n_atoms {
            return domain("atom counts differ");
        }
        let w_self = self.amplitudes.coefficients();
        let w_exact = exact.amplitudes.coefficients();
        // Group c̃_i* c_i by sector.
        let mut overlap_by_sector = vec![C64::new(0.0, 0.0); self.n_atoms + 1];
        for (i, (a, b)) in w_self.iter().zip(w_exact).enumerate() {
            overlap_by_sector[i.count_ones() as usize] += a.conj() * b;
        }
        let mut total = C64::new(0.0, 0.0);
        for (k, ok) in overlap_by_sector.iter().enumerate() {
            for (kk, okk) in overlap_by_sector.iter().enumerate() {
                let coh = exact.decoherence.joint_power(k as i32 - kk as i32);
                total += ok * okk.conj()
                    * coh
                    * coherent_overlap(self.branch(k), exact.branch_amplitude(k))
                    * coherent_overlap(exact.branch_amplitude(kk), self.branch(kk));
            }
        }
        Ok(total.re)
    }

    /// Dense joint vector (rotated basis, atomic index major).
    pub fn to_vector(&self, cutoff: usize) -> Result<DVector<C64>> {
        let d = cutoff + 1;
        let mut v = DVector::zeros(self.amplitudes.coefficients().len() * d);
        for (i, c) in self.amplitudes.coefficients().iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let field = coherent_amplitudes(self.branch(i.count_ones() as usize), cutoff)?;
            for (n, a) in field.into_iter().enumerate() {
                v[i * d + n] = c * a;
            }
        }
        Ok(v)
    }
}

/// Field state left behind by detecting the atoms in one energy pattern.
#[derive(Clone, Debug)]
pub struct ConditionalField {
    pub probability: f64,
    /// Unit-trace field operator as a sum of coherent dyads.
    pub field: CoherentDyads,
}

pub fn conditional_field_state(state: &ClosedFormState, pattern: &str) -> Result<ConditionalField> {
    let n = state.params.n_atoms;
    if pattern.chars().count() != n {
        return domain(format!("pattern {pattern:?} does not describe {n} atoms"));
    }
    let p = energy_index(pattern)?;
    let parts = sector_components_energy(&state.amplitudes);
    let dec = state.decoherence;
    let mut dyads = Vec::new();
    let mut probability = 0.0;
    for (k, ak) in parts.iter().enumerate() {
        for (kk, akk) in parts.iter().enumerate() {
            let a = ak[p] * akk[p].conj();
            if a.norm() < 1e-300 {
                continue;
            }
            let d = k as i32 - kk as i32;
            dyads.push((
                a * dec.joint_power(d),
                state.branch_amplitude(k),
                state.branch_amplitude(kk),
            ));
            probability += a.re * dec.atomic_power(d);
        }
    }
    if !(probability > CONDITIONING_TOL) {
        return Err(Error::Conditioning(format!(
            "pattern {pattern} has probability {probability:.3e}"
        )));
    }
    Ok(ConditionalField {
        probability,
        field: CoherentDyads { dyads }.scaled(1.0 / probability),
    })
}

/// Atomic state after an on/off detector sees no photon: `<0|ρ|0>`,
/// returned with its probability and normalized.
pub fn vacuum_conditioned_atoms(state: &ClosedFormState) -> Result<(f64, DensityMatrix)> {
    let n = state.params.n_atoms;
    let dim = 1usize << n;
    let c = state.amplitudes.coefficients();
    let dec = state.decoherence;
    let vac: Vec<f64> = (0..=n)
        .map(|k| (-0.5 * state.branch_amplitude(k).norm_sqr()).exp())
        .collect();
    let slot = |i: usize| i.count_ones() as usize;
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        c[i] * c[j].conj()
            * dec.joint_power(slot(i) as i32 - slot(j) as i32)
            * vac[slot(i)]
            * vac[slot(j)]
    });
    let probability = m.trace().re;
    if !(probability > CONDITIONING_TOL) {
        return Err(Error::Conditioning("vacuum outcome has zero probability".into()));
    }
    Ok((probability, DensityMatrix::atomic(m / C64::new(probability, 0.0), n, Basis::Rotated)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PreparationSign {
    /// Weights as given; coherences carry `f^{d²}`.
    Ground,
    /// `f → -f`, the all-excited counterpart of ground-start weights.
    Excited,
}

/// Joint state over the symmetric Dicke basis `|N/2, s>` ⊗ Fock.
pub fn csd_density(
    b: &DickeWeights,
    p: &ModelParams,
    kt: f64,
    sign: PreparationSign,
    cutoff: Option<usize>,
) -> Result<DensityMatrix> {
    let n = b.n_atoms();
    if n != p.n_atoms {
        return domain("atom counts differ");
    }
    let a = alpha(p, kt)?;
    let dec = decoherence(p, kt)?;
    let spins: Vec<i32> = (0..=n as i32).map(|k| 2 * k - n as i32).collect();
    let m_max = b
        .weights()
        .iter()
        .zip(&spins)
        .filter(|(w, _)| w.norm_sqr() > 0.0)
        .map(|(_, s)| (*s as f64 * a).norm_sqr())
        .fold(0.0, f64::max);
    let cutoff = cutoff.unwrap_or_else(|| fock_cutoff_for(m_max));
    let sgn = match sign {
        PreparationSign::Ground => 1.0,
        PreparationSign::Excited => -1.0,
    };
    let m = materialize(b.weights(), &spins, a, &dec, sgn, cutoff)?;
    let labels = spins
        .iter()
        .flat_map(|s| {
            let s = format_half(*s);
            (0..=cutoff).map(move |k| format!("s={s}|{k}"))
        })
        .collect();
    DensityMatrix::new(m, vec![n + 1, cutoff + 1], labels)
}

/// Rotated-basis labels for an N-atom register.
pub fn rotated_labels(n_atoms: usize) -> Vec<String> {
    atomic_labels(n_atoms, Basis::Rotated)
}
