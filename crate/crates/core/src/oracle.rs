//! Brute-force reference: fixed-step RK4 on the Lindblad master equation in a
//! truncated Fock space.
//!
//! The atomic register is held in the rotated basis, so `S_x` is diagonal and
//! every `(i, j)` atomic block of `ρ` evolves on its own under
//!
//! ```text
//! dρ_ij/dt = -i g (s_i X ρ_ij - s_j ρ_ij X) + (k/2)(2 a ρ_ij a† - a†a ρ_ij - ρ_ij a†a),  X = a + a†
//! ```
//!
//! Time is dimensionless (`kt`) throughout; the generator is divided by `k`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{trace_out_atoms, DensityMatrix};
use crate::error::{domain, Error, Result};
use crate::exact::{closed_form_density, ClosedFormState, ModelParams};
use crate::model::{twice_spin_of, AtomicAmplitudes, Basis};
use crate::C64;

/// Largest accepted difference between one double step and two single steps.
pub const STEP_DOUBLING_TOL: f64 = 1e-6;

/// Largest accepted population in the top two Fock levels.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TruncatedSpace {
    n_atoms: usize,
    fock_cutoff: usize,
}

impl TruncatedSpace {
    pub fn new(n_atoms: usize, fock_cutoff: usize) -> Result<Self> {
        crate::model::check_atoms(n_atoms)?;
        if fock_cutoff < 1 {
            return domain("Fock cutoff must be at least 1");
        }
        Ok(Self { n_atoms, fock_cutoff })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn atomic_dim(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn field_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.atomic_dim() * self.field_dim()
    }

    /// Composite index of atomic state `i` with `n` photons.
    pub fn index(&self, atomic: usize, n: usize) -> usize {
        atomic * self.field_dim() + n
    }

    /// `s_i` for each rotated basis state.
    pub fn spins(&self) -> Vec<f64> {
        (0..self.atomic_dim())
            .map(|i| twice_spin_of(i, self.n_atoms) as f64 / 2.0)
            .collect()
    }

    /// Largest step in `kt` allowed by `dt ≤ 0.05 / max(k, g √n_cut N)`.
    pub fn max_step(&self, p: &ModelParams) -> f64 {
        let rate = (p.ratio() * (self.fock_cutoff as f64).sqrt() * self.n_atoms as f64).max(1.0);
        0.05 / rate
    }

    fn check(&self, rho: &DMatrix<C64>) -> Result<()> {
        if rho.nrows() != self.dim() || rho.ncols() != self.dim() {
            return domain(format!(
                "matrix is {}x{}, space has dimension {}",
                rho.nrows(),
                rho.ncols(),
                self.dim()
            ));
        }
        Ok(())
    }
}

/// `g (a + a†) ⊗ S_x`, atomic index major.
pub fn build_effective_hamiltonian(space: &TruncatedSpace, g: f64) -> DMatrix<C64> {
    let d = space.field_dim();
    let spins = space.spins();
    let mut h = DMatrix::zeros(space.dim(), space.dim());
    for (i, s) in spins.iter().enumerate() {
        for n in 0..space.fock_cutoff {
            let v = C64::new(g * s * ((n + 1) as f64).sqrt(), 0.0);
            h[(i * d + n + 1, i * d + n)] = v;
            h[(i * d + n, i * d + n + 1)] = v;
        }
    }
    h
}

/// Annihilation operator on the joint space.
pub fn annihilation(space: &TruncatedSpace) -> DMatrix<C64> {
    let d = space.field_dim();
    let mut a = DMatrix::zeros(space.dim(), space.dim());
    for i in 0..space.atomic_dim() {
        for n in 1..d {
            a[(i * d + n - 1, i * d + n)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    a
}

/// `dρ/d(kt)` from the structured block form.
pub fn lindblad_rhs(rho: &DMatrix<C64>, space: &TruncatedSpace, p: &ModelParams) -> Result<DMatrix<C64>> {
    space.check(rho)?;
    let gen = Generator::new(space, p);
    let mut out = DMatrix::zeros(space.dim(), space.dim());
    gen.apply(rho.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// Precomputed tables for the structured right-hand side.
struct Generator {
    d: usize,
    atomic: usize,
    /// `g/k · s_i`.
    drive: Vec<f64>,
    sqrt: Vec<f64>,
}

impl Generator {
    fn new(space: &TruncatedSpace, p: &ModelParams) -> Self {
        let d = space.field_dim();
        Self {
            d,
            atomic: space.atomic_dim(),
            drive: space.spins().iter().map(|s| p.ratio() * s).collect(),
            sqrt: (0..=d).map(|n| (n as f64).sqrt()).collect(),
        }
    }

    /// Column-major `ρ` in, column-major `dρ` out.
    fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.d;
        let dim = d * self.atomic;
        for j in 0..self.atomic {
            for n in 0..d {
                let c = j * d + n;
                let col = &rho[c * dim..(c + 1) * dim];
                let left = if n > 0 { Some(&rho[(c - 1) * dim..c * dim]) } else { None };
                let right = if n + 1 < d { Some(&rho[(c + 1) * dim..(c + 2) * dim]) } else { None };
                let sj = self.drive[j];
                let sq_n = self.sqrt[n];
                let sq_n1 = self.sqrt[n + 1];
                let dst = &mut out[c * dim..(c + 1) * dim];
                for i in 0..self.atomic {
                    let si = self.drive[i];
                    let base = i * d;
                    for m in 0..d {
                        let r = base + m;
                        // X ρ
                        let mut x_rho = C64::new(0.0, 0.0);
                        if m > 0 {
                            x_rho += col[r - 1] * self.sqrt[m];
                        }
                        if m + 1 < d {
                            x_rho += col[r + 1] * self.sqrt[m + 1];
                        }
                        // ρ X
                        let mut rho_x = C64::new(0.0, 0.0);
                        if let Some(l) = left {
                            rho_x += l[r] * sq_n;
                        }
                        if let Some(rt) = right {
                            rho_x += rt[r] * sq_n1;
                        }
                        let comm = x_rho * si - rho_x * sj;
                        let mut v = C64::new(comm.im, -comm.re);
                        // a ρ a†
                        if m + 1 < d {
                            if let Some(rt) = right {
                                v += rt[r + 1] * (self.sqrt[m + 1] * sq_n1);
                            }
                        }
                        v -= col[r] * (0.5 * (m + n) as f64);
                        dst[r] = v;
                    }
                }
            }
        }
    }
}

/// Reference right-hand side `-i(H ρ - ρ H) + a ρ a† - (a†a ρ + ρ a†a)/2`
/// built from dense operators, in `kt` units.
pub fn lindblad_rhs_dense(rho: &DMatrix<C64>, space: &TruncatedSpace, p: &ModelParams) -> Result<DMatrix<C64>> {
    space.check(rho)?;
    let h = build_effective_hamiltonian(space, p.ratio());
    let a = annihilation(space);
    let ad = a.adjoint();
    let num = &ad * &a;
    let minus_i = C64::new(0.0, -1.0);
    let half = C64::new(0.5, 0.0);
    Ok((&h * rho - rho * &h) * minus_i + &a * rho * &ad - (&num * rho + rho * &num) * half)
}

/// Scratch buffers for one RK4 step.
pub struct Rk4Workspace {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4Workspace {
    pub fn new(len: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); len];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }
}

/// One classic RK4 step of the autonomous system `y' = f(y)`, in place.
pub fn rk4_step<F>(f: &F, y: &mut [C64], h: f64, w: &mut Rk4Workspace)
where
    F: Fn(&[C64], &mut [C64]),
{
    let n = y.len();
    f(y, &mut w.k1);
    for t in 0..n {
        w.tmp[t] = y[t] + w.k1[t] * (0.5 * h);
    }
    f(&w.tmp, &mut w.k2);
    for t in 0..n {
        w.tmp[t] = y[t] + w.k2[t] * (0.5 * h);
    }
    f(&w.tmp, &mut w.k3);
    for t in 0..n {
        w.tmp[t] = y[t] + w.k3[t] * h;
    }
    f(&w.tmp, &mut w.k4);
    for t in 0..n {
        y[t] += (w.k1[t] + (w.k2[t] + w.k3[t]) * 2.0 + w.k4[t]) * (h / 6.0);
    }
}

/// `steps` equal RK4 steps from `0` to `t_end`, no error control.
pub fn rk4_fixed<F>(f: &F, y0: &[C64], t_end: f64, steps: usize) -> Vec<C64>
where
    F: Fn(&[C64], &mut [C64]),
{
    let mut y = y0.to_vec();
    let mut w = Rk4Workspace::new(y.len());
    let h = t_end / steps as f64;
    for _ in 0..steps {
        rk4_step(f, &mut y, h, &mut w);
    }
    y
}

/// Richardson ratio `|y_h - y_{h/2}| / |y_{h/2} - y_{h/4}|` (max norm); close
/// to 16 for a fourth-order method in its asymptotic range.
pub fn convergence_ratio<F>(f: &F, y0: &[C64], t_end: f64, coarse_steps: usize) -> f64
where
    F: Fn(&[C64], &mut [C64]),
{
    let y1 = rk4_fixed(f, y0, t_end, coarse_steps);
    let y2 = rk4_fixed(f, y0, t_end, 2 * coarse_steps);
    let y4 = rk4_fixed(f, y0, t_end, 4 * coarse_steps);
    let diff = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    diff(&y1, &y2) / diff(&y2, &y4)
}

/// `d/d(kt)` on the joint state as a slice closure, for use with [`rk4_fixed`].
pub fn lindblad_generator(space: &TruncatedSpace, p: &ModelParams) -> impl Fn(&[C64], &mut [C64]) + Sync {
    let gen = Generator::new(space, p);
    move |y: &[C64], out: &mut [C64]| gen.apply(y, out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EvolveOptions {
    /// Step in `kt`; defaults to the stability rule.
    pub dt: Option<f64>,
    /// Skip the eigenvalue check at checkpoints (it costs a full diagonalization).
    pub skip_eigenvalues: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub kt: f64,
    pub trace_drift: f64,
    pub hermiticity_drift: f64,
    pub min_eigenvalue: Option<f64>,
    /// Populations of the two highest Fock levels, highest first.
    pub fock_tail: [f64; 2],
    pub deviation: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvolutionReport {
    pub n_atoms: usize,
    pub fock_cutoff: usize,
    pub g: f64,
    pub k: f64,
    pub dt: f64,
    pub steps: usize,
    pub checkpoints: Vec<CheckpointStats>,
    pub max_trace_drift: f64,
    pub max_hermiticity_drift: f64,
    pub min_eigenvalue: Option<f64>,
    pub max_step_discrepancy: f64,
    pub max_leakage: f64,
    pub max_deviation: Option<f64>,
}

impl EvolutionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn absorb(&mut self, stats: CheckpointStats) {
        self.max_trace_drift = self.max_trace_drift.max(stats.trace_drift);
        self.max_hermiticity_drift = self.max_hermiticity_drift.max(stats.hermiticity_drift);
        self.max_leakage = self.max_leakage.max(stats.fock_tail[0] + stats.fock_tail[1]);
        if let Some(ev) = stats.min_eigenvalue {
            self.min_eigenvalue = Some(self.min_eigenvalue.map_or(ev, |m| m.min(ev)));
        }
        if let Some(dev) = stats.deviation {
            self.max_deviation = Some(self.max_deviation.map_or(dev, |m| m.max(dev)));
        }
        self.checkpoints.push(stats);
    }
}

/// Integrate from `ρ(0)` through strictly increasing checkpoints in `kt`.
///
/// Each macro step advances by `2h` twice over: once as a single step and
/// once as two half steps. The half-step result is kept; a discrepancy above
/// [`STEP_DOUBLING_TOL`] is an error, as is top-level Fock leakage above
/// [`LEAKAGE_LIMIT`]. `on_checkpoint` sees the state and may return a
/// deviation to record. No trace renormalization is applied.
pub fn evolve<C>(
    rho0: &DensityMatrix,
    space: &TruncatedSpace,
    p: &ModelParams,
    checkpoints: &[f64],
    options: EvolveOptions,
    mut on_checkpoint: C,
) -> Result<(DensityMatrix, EvolutionReport)>
where
    C: FnMut(f64, &DMatrix<C64>) -> Result<Option<f64>>,
{
    space.check(rho0.matrix())?;
    if p.n_atoms() != space.n_atoms {
        return domain("atom counts differ");
    }
    if checkpoints.iter().any(|t| !t.is_finite() || *t < 0.0)
        || checkpoints.windows(2).any(|w| w[1] <= w[0])
    {
        return domain("checkpoints must be finite, nonnegative and strictly increasing");
    }
    let limit = space.max_step(p);
    let dt = options.dt.unwrap_or(limit);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!("dt = {dt} exceeds the stability limit {limit}")));
    }

    let gen = Generator::new(space, p);
    let f = |y: &[C64], out: &mut [C64]| gen.apply(y, out);
    let mut report = EvolutionReport {
        n_atoms: space.n_atoms,
        fock_cutoff: space.fock_cutoff,
        g: p.g(),
        k: p.k(),
        dt,
        ..Default::default()
    };
    let mut y: Vec<C64> = rho0.matrix().as_slice().to_vec();
    let mut half = y.clone();
    let mut w = Rk4Workspace::new(y.len());
    let mut now = 0.0;
    for &target in checkpoints {
        let span = target - now;
        // Macro steps of 2h with h ≤ dt landing exactly on the checkpoint.
        let macros = (span / (2.0 * dt)).ceil() as usize;
        if macros > 0 {
            let h = span / (2 * macros) as f64;
            for _ in 0..macros {
                half.copy_from_slice(&y);
                rk4_step(&f, &mut y, 2.0 * h, &mut w);
                rk4_step(&f, &mut half, h, &mut w);
                rk4_step(&f, &mut half, h, &mut w);
                let disc = y.iter().zip(&half).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                report.max_step_discrepancy = report.max_step_discrepancy.max(disc);
                if disc > STEP_DOUBLING_TOL {
                    return Err(Error::StepSize(format!(
                        "step-doubling discrepancy {disc:.3e} at kt = {now:.4}"
                    )));
                }
                std::mem::swap(&mut y, &mut half);
                report.steps += 2;
            }
        }
        now = target;
        let rho = DMatrix::from_vec(space.dim(), space.dim(), y.clone());
        let mut stats = checkpoint_stats(&rho, space, now, options.skip_eigenvalues);
        if stats.fock_tail[0] + stats.fock_tail[1] > LEAKAGE_LIMIT {
            return Err(Error::Truncation(format!(
                "Fock levels {} and {} carry {:.3e} at kt = {now}",
                space.fock_cutoff,
                space.fock_cutoff - 1,
                stats.fock_tail[0] + stats.fock_tail[1]
            )));
        }
        stats.deviation = on_checkpoint(now, &rho)?;
        report.absorb(stats);
    }
    let rho = DMatrix::from_vec(space.dim(), space.dim(), y);
    let labels = rho0.labels().to_vec();
    Ok((DensityMatrix::new(rho, rho0.dims().to_vec(), labels)?, report))
}

fn checkpoint_stats(rho: &DMatrix<C64>, space: &TruncatedSpace, kt: f64, skip_eigen: bool) -> CheckpointStats {
    let dm = DensityMatrix::new(rho.clone(), vec![space.dim()], vec![String::new(); space.dim()])
        .expect("dimension checked");
    let field = trace_out_atoms(rho, space.atomic_dim(), space.field_dim());
    let c = space.fock_cutoff;
    CheckpointStats {
        kt,
        trace_drift: (rho.trace() - C64::new(1.0, 0.0)).norm(),
        hermiticity_drift: dm.hermiticity_error(),
        min_eigenvalue: if skip_eigen { None } else { Some(dm.min_eigenvalue()) },
        fock_tail: [field[(c, c)].re, field[(c - 1, c - 1)].re],
        deviation: None,
    }
}

/// `|c><c| ⊗ |0><0|` on the truncated space.
pub fn initial_state(c: &AtomicAmplitudes, space: &TruncatedSpace) -> Result<DensityMatrix> {
    if c.n_atoms() != space.n_atoms {
        return domain("atom counts differ");
    }
    let c = c.to_rotated();
    let d = space.field_dim();
    let coeffs = c.coefficients();
    let m = DMatrix::from_fn(space.dim(), space.dim(), |r, col| {
        if r % d == 0 && col % d == 0 {
            coeffs[r / d] * coeffs[col / d].conj()
        } else {
            C64::new(0.0, 0.0)
        }
    });
    DensityMatrix::joint(m, space.n_atoms, space.fock_cutoff, Basis::Rotated)
}

/// `Tr[ρ a†a]` for a joint operator.
pub fn mean_photon(rho: &DMatrix<C64>, space: &TruncatedSpace) -> f64 {
    let d = space.field_dim();
    (0..space.dim()).map(|r| (r % d) as f64 * rho[(r, r)].re).sum()
}

/// Cutoff used for an oracle run: the closed-form rule at the latest checkpoint.
pub fn cutoff_for_run(c: &AtomicAmplitudes, p: &ModelParams, checkpoints: &[f64]) -> Result<usize> {
    let mut best = 1;
    for &kt in checkpoints {
        best = best.max(ClosedFormState::new(*p, c, kt)?.fock_cutoff());
    }
    Ok(best)
}

/// Evolve `|c><c| ⊗ |0><0|` and record the elementwise deviation from the
/// closed form at every checkpoint.
pub fn compare_with_closed_form(
    c: &AtomicAmplitudes,
    p: &ModelParams,
    checkpoints: &[f64],
    cutoff: Option<usize>,
    options: EvolveOptions,
) -> Result<(DensityMatrix, EvolutionReport)> {
    let cutoff = match cutoff {
        Some(c) => c,
        None => cutoff_for_run(c, p, checkpoints)?,
    };
    let space = TruncatedSpace::new(p.n_atoms(), cutoff)?;
    let rho0 = initial_state(c, &space)?;
    evolve(&rho0, &space, p, checkpoints, options, |kt, rho| {
        let exact = closed_form_density(&ClosedFormState::new(*p, c, kt)?, Some(cutoff))?;
        Ok(Some(crate::density::max_abs_diff(rho, exact.matrix())?))
    })
}

/// Field operator `ρ_ij(kt)` of one atomic block, started from
/// `init · |0><0|`. Depends on the block only through `s_i`, `s_j`.
pub fn evolve_component(
    twice_si: i32,
    twice_sj: i32,
    init: C64,
    space: &TruncatedSpace,
    p: &ModelParams,
    kt_end: f64,
    dt: Option<f64>,
) -> Result<DMatrix<C64>> {
    let limit = space.max_step(p);
    let dt = dt.unwrap_or(limit);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!("dt = {dt} exceeds the stability limit {limit}")));
    }
    if kt_end.is_nan() || kt_end < 0.0 {
        return domain("end time must be nonnegative");
    }
    let single = TruncatedSpace { n_atoms: 1, fock_cutoff: space.fock_cutoff };
    let d = single.field_dim();
    let (si, sj) = (p.ratio() * twice_si as f64 / 2.0, p.ratio() * twice_sj as f64 / 2.0);
    let sqrt: Vec<f64> = (0..=d).map(|n| (n as f64).sqrt()).collect();
    let f = |rho: &[C64], out: &mut [C64]| {
        for n in 0..d {
            for m in 0..d {
                let at = |mm: usize, nn: usize| rho[nn * d + mm];
                let mut x_rho = C64::new(0.0, 0.0);
                let mut rho_x = C64::new(0.0, 0.0);
                let mut jump = C64::new(0.0, 0.0);
                if m > 0 {
                    x_rho += at(m - 1, n) * sqrt[m];
                }
                if m + 1 < d {
                    x_rho += at(m + 1, n) * sqrt[m + 1];
                }
                if n > 0 {
                    rho_x += at(m, n - 1) * sqrt[n];
                }
                if n + 1 < d {
                    rho_x += at(m, n + 1) * sqrt[n + 1];
                }
                if m + 1 < d && n + 1 < d {
                    jump = at(m + 1, n + 1) * (sqrt[m + 1] * sqrt[n + 1]);
                }
                let comm = x_rho * si - rho_x * sj;
                out[n * d + m] = C64::new(comm.im, -comm.re) + jump - at(m, n) * (0.5 * (m + n) as f64);
            }
        }
    };
    let mut y = vec![C64::new(0.0, 0.0); d * d];
    y[0] = init;
    let steps = (kt_end / dt).ceil() as usize;
    let y = if steps == 0 { y } else { rk4_fixed(&f, &y, kt_end, steps) };
    Ok(DMatrix::from_vec(d, d, y))
}

/// Full joint state rebuilt block by block from [`evolve_component`].
/// Blocks sharing `(s_i, s_j)` are integrated once and rescaled; sector
/// pairs run in parallel.
pub fn evolve_by_components(
    c: &AtomicAmplitudes,
    space: &TruncatedSpace,
    p: &ModelParams,
    kt_end: f64,
    dt: Option<f64>,
) -> Result<DensityMatrix> {
    let n = space.n_atoms;
    if c.n_atoms() != n {
        return domain("atom counts differ");
    }
    let pairs: Vec<(usize, usize)> = (0..=n).flat_map(|a| (0..=n).map(move |b| (a, b))).collect();
    let blocks: Vec<DMatrix<C64>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (sa, sb) = (2 * a as i32 - n as i32, 2 * b as i32 - n as i32);
            evolve_component(sa, sb, C64::new(1.0, 0.0), space, p, kt_end, dt)
        })
        .collect::<Result<_>>()?;
    let c = c.to_rotated();
    let coeffs = c.coefficients();
    let d = space.field_dim();
    let mut m = DMatrix::zeros(space.dim(), space.dim());
    for i in 0..space.atomic_dim() {
        for j in 0..space.atomic_dim() {
            let w = coeffs[i] * coeffs[j].conj();
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            let block = &blocks[i.count_ones() as usize * (n + 1) + j.count_ones() as usize];
            for col in 0..d {
                for row in 0..d {
                    m[(i * d + row, j * d + col)] = block[(row, col)] * w;
                }
            }
        }
    }
    DensityMatrix::joint(m, n, space.fock_cutoff, Basis::Rotated)
}
