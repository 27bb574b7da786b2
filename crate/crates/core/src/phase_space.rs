//! Coherent states and Wigner maps.
//!
//! Field states held as coherent superpositions (or sums of coherent dyads)
//! are evaluated with closed-form overlaps and a closed-form Wigner kernel, so
//! amplitudes such as `8.25i` need no Fock truncation. Fock-basis operators go
//! through the displaced-parity sum instead.

use std::f64::consts::FRAC_2_PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::C64;

/// Largest coherent population allowed above the Fock cutoff.
pub const LEAKAGE_TOL: f64 = 1e-8;

/// Cutoff rule `ceil(m + 8√m + 10)` for a largest mean photon number `m`.
pub fn fock_cutoff_for(mean_photons: f64) -> usize {
    let m = mean_photons.max(0.0);
    (m + 8.0 * m.sqrt() + 10.0).ceil() as usize
}

/// Poisson tail `P(n > cutoff)` for mean `m`, summed from the top end.
pub fn poisson_tail_above(mean_photons: f64, cutoff: usize) -> f64 {
    let m = mean_photons;
    if m == 0.0 {
        return 0.0;
    }
    // Sum terms n = cutoff+1 .. until negligible, starting from log p(cutoff+1).
    let start = cutoff + 1;
    let log_p = -m + start as f64 * m.ln() - ln_factorial(start);
    let mut term = log_p.exp();
    let mut total = 0.0;
    let mut n = start;
    while term > 0.0 && (term > total * 1e-17 || (n as f64) < m) {
        total += term;
        n += 1;
        term *= m / n as f64;
        if n > start + 100_000 {
            break;
        }
    }
    total
}

fn ln_factorial(n: usize) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// Fock amplitudes `e^{-|α|²/2} αⁿ/√n!` for `n = 0..=cutoff`.
pub fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Result<Vec<C64>> {
    let leakage = poisson_tail_above(alpha.norm_sqr(), cutoff);
    if leakage > LEAKAGE_TOL {
        return Err(Error::Truncation(format!(
            "coherent amplitude {alpha} leaks {leakage:.3e} above cutoff {cutoff}"
        )));
    }
    Ok(coherent_amplitudes_unchecked(alpha, cutoff))
}

pub(crate) fn coherent_amplitudes_unchecked(alpha: C64, cutoff: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(cutoff + 1);
    let mut a = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    out.push(a);
    for n in 1..=cutoff {
        a = a * alpha / (n as f64).sqrt();
        out.push(a);
    }
    out
}

/// `<β|γ> = exp(-|β|²/2 - |γ|²/2 + β̄γ)`.
pub fn coherent_overlap(beta: C64, gamma: C64) -> C64 {
    (-0.5 * beta.norm_sqr() - 0.5 * gamma.norm_sqr() + beta.conj() * gamma).exp()
}

/// Wigner function of the dyad `|β><γ|` at phase-space point `z`,
/// `(2/π) Tr[D(z) Π D†(z) |β><γ|]`.
pub fn dyad_wigner(beta: C64, gamma: C64, z: C64) -> C64 {
    let w = 2.0 * z - beta;
    let exponent = z.conj() * beta - z * beta.conj() - 0.5 * gamma.norm_sqr() - 0.5 * w.norm_sqr()
        + gamma.conj() * w;
    exponent.exp() * FRAC_2_PI
}

/// A pure field state.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldState {
    /// Amplitudes on `|0>, ..., |cutoff>`.
    Fock(Vec<C64>),
    /// `Σ_k w_k |α_k>` as `(w_k, α_k)` pairs.
    Coherent(Vec<(C64, C64)>),
}

impl FieldState {
    pub fn norm_sqr(&self) -> f64 {
        match self {
            FieldState::Fock(a) => a.iter().map(|c| c.norm_sqr()).sum(),
            FieldState::Coherent(terms) => terms
                .iter()
                .flat_map(|(wa, a)| terms.iter().map(move |(wb, b)| (wa, a, wb, b)))
                .map(|(wa, a, wb, b)| (wa.conj() * wb * coherent_overlap(*a, *b)).re)
                .sum(),
        }
    }

    pub fn normalize(self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0) {
            return domain("cannot normalize a zero field state");
        }
        Ok(match self {
            FieldState::Fock(a) => FieldState::Fock(a.into_iter().map(|c| c / norm).collect()),
            FieldState::Coherent(t) => {
                FieldState::Coherent(t.into_iter().map(|(w, a)| (w / norm, a)).collect())
            }
        })
    }

    /// `|ψ><ψ|` as a dyad sum (coherent form) or dense matrix (Fock form).
    pub fn to_operator(&self) -> FieldOperator {
        match self {
            FieldState::Fock(a) => {
                let v = nalgebra::DVector::from_column_slice(a);
                FieldOperator::Fock(&v * v.adjoint())
            }
            FieldState::Coherent(terms) => FieldOperator::Dyads(CoherentDyads {
                dyads: terms
                    .iter()
                    .flat_map(|(wa, a)| terms.iter().map(move |(wb, b)| (*wa * wb.conj(), *a, *b)))
                    .collect(),
            }),
        }
    }

    /// Fock amplitudes up to `cutoff`.
    pub fn to_fock(&self, cutoff: usize) -> Result<Vec<C64>> {
        match self {
            FieldState::Fock(a) => {
                let mut out = a.clone();
                out.resize(cutoff + 1, C64::new(0.0, 0.0));
                Ok(out)
            }
            FieldState::Coherent(terms) => {
                let mut out = vec![C64::new(0.0, 0.0); cutoff + 1];
                for (w, a) in terms {
                    for (o, c) in out.iter_mut().zip(coherent_amplitudes(*a, cutoff)?) {
                        *o += w * c;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Field operator `Σ_k c_k |β_k><γ_k|`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoherentDyads {
    pub dyads: Vec<(C64, C64, C64)>,
}

impl CoherentDyads {
    pub fn trace(&self) -> C64 {
        self.dyads.iter().map(|(c, b, g)| c * coherent_overlap(*g, *b)).sum()
    }

    /// `Tr ρ²` via analytic overlaps.
    pub fn purity(&self) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for (c1, b1, g1) in &self.dyads {
            for (c2, b2, g2) in &self.dyads {
                // Tr(|b1><g1| |b2><g2|) = <g1|b2> <g2|b1>
                acc += c1 * c2 * coherent_overlap(*g1, *b2) * coherent_overlap(*g2, *b1);
            }
        }
        acc.re
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.dyads.iter_mut().for_each(|d| d.0 *= factor);
        self
    }

    pub fn to_fock(&self, cutoff: usize) -> Result<DMatrix<C64>> {
        let mut m = DMatrix::zeros(cutoff + 1, cutoff + 1);
        for (c, b, g) in &self.dyads {
            let kb = nalgebra::DVector::from_vec(coherent_amplitudes(*b, cutoff)?);
            let kg = nalgebra::DVector::from_vec(coherent_amplitudes(*g, cutoff)?);
            m += (&kb * kg.adjoint()) * *c;
        }
        Ok(m)
    }

    fn max_amplitude(&self) -> f64 {
        self.dyads.iter().map(|(_, b, g)| b.norm().max(g.norm())).fold(0.0, f64::max)
    }
}

/// Anything whose Wigner function can be sampled.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldOperator {
    Dyads(CoherentDyads),
    /// Dense operator on Fock states `0..=cutoff`.
    Fock(DMatrix<C64>),
}

impl FieldOperator {
    /// Complex Wigner value; the imaginary part vanishes for Hermitian input.
    pub fn wigner_at(&self, z: C64) -> C64 {
        match self {
            FieldOperator::Dyads(d) => {
                d.dyads.iter().map(|(c, b, g)| c * dyad_wigner(*b, *g, z)).sum()
            }
            FieldOperator::Fock(rho) => fock_wigner(rho, z),
        }
    }

    /// Dense Fock-basis form, materializing dyads at the leakage-rule cutoff.
    pub fn to_fock(&self) -> Result<DMatrix<C64>> {
        match self {
            FieldOperator::Fock(m) => Ok(m.clone()),
            FieldOperator::Dyads(d) => d.to_fock(fock_cutoff_for(d.max_amplitude().powi(2))),
        }
    }

    /// Radius in phase space containing the state's lobes.
    pub fn extent(&self) -> f64 {
        match self {
            FieldOperator::Dyads(d) => d.max_amplitude(),
            FieldOperator::Fock(rho) => {
                let mean: f64 = (0..rho.nrows()).map(|n| n as f64 * rho[(n, n)].re).sum();
                mean.max(0.0).sqrt()
            }
        }
    }
}

impl From<FieldState> for FieldOperator {
    fn from(s: FieldState) -> Self {
        s.to_operator()
    }
}

impl From<CoherentDyads> for FieldOperator {
    fn from(d: CoherentDyads) -> Self {
        FieldOperator::Dyads(d)
    }
}

/// Displacement matrix elements `<n|D(β)|m>` for `n, m = 0..=cutoff`.
///
/// Built column by column from `<n|D|0>` (a coherent state) and the ladder
/// relation `a† D = D (a† + β̄)`.
pub fn displacement_matrix(beta: C64, cutoff: usize) -> DMatrix<C64> {
    let d = cutoff + 1;
    let mut m = DMatrix::zeros(d, d);
    for (n, c) in coherent_amplitudes_unchecked(beta, cutoff).into_iter().enumerate() {
        m[(n, 0)] = c;
    }
    for col in 0..cutoff {
        let norm = ((col + 1) as f64).sqrt();
        for n in 0..d {
            let down = if n > 0 { m[(n - 1, col)] * (n as f64).sqrt() } else { C64::new(0.0, 0.0) };
            m[(n, col + 1)] = (down - beta.conj() * m[(n, col)]) / norm;
        }
    }
    m
}

/// `W(z) = (2/π) Σ_{mn} ρ_mn (-1)^m <n|D(2z)|m>`.
fn fock_wigner(rho: &DMatrix<C64>, z: C64) -> C64 {
    let d = rho.nrows();
    let disp = displacement_matrix(2.0 * z, d - 1);
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..d {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let mut row = C64::new(0.0, 0.0);
        for n in 0..d {
            row += rho[(m, n)] * disp[(n, m)];
        }
        acc += row * sign;
    }
    acc * FRAC_2_PI
}

/// Rectangular grid in the complex plane, `x = Re β`, `p = Im β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WignerGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub np: usize,
}

impl WignerGrid {
    pub const DEFAULT_POINTS: usize = 201;

    /// Symmetric square grid spanning `±(extent + 3)`.
    pub fn covering(extent: f64) -> Self {
        Self::square(extent + 3.0, Self::DEFAULT_POINTS)
    }

    pub fn square(half_width: f64, points: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            p_min: -half_width,
            p_max: half_width,
            nx: points,
            np: points,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        lerp(self.x_min, self.x_max, i, self.nx)
    }

    pub fn p(&self, j: usize) -> f64 {
        lerp(self.p_min, self.p_max, j, self.np)
    }

    fn cell_area(&self) -> f64 {
        let dx = (self.x_max - self.x_min) / (self.nx - 1) as f64;
        let dp = (self.p_max - self.p_min) / (self.np - 1) as f64;
        dx * dp
    }

    fn covers(&self, radius: f64) -> bool {
        let need = radius + 3.0 - 1e-12;
        -self.x_min >= need && self.x_max >= need && -self.p_min >= need && self.p_max >= need
    }
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n == 1 {
        return lo;
    }
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

/// Sampled Wigner function with summary metadata.
#[derive(Clone, Debug, Serialize)]
pub struct WignerMap {
    pub grid: WignerGrid,
    /// Row-major over `p` (outer) then `x` (inner).
    #[serde(skip)]
    pub values: Vec<f64>,
    /// Riemann sum of W over the grid.
    pub integral: f64,
    pub min: f64,
    pub max: f64,
    /// Largest imaginary residue seen while sampling.
    pub imag_residue: f64,
    /// Set when the grid does not reach `extent + 3` in every direction.
    pub coverage_warning: bool,
}

impl WignerMap {
    pub fn value(&self, ix: usize, jp: usize) -> f64 {
        self.values[jp * self.grid.nx + ix]
    }

    /// `(p, W)` along the column closest to `x`.
    pub fn column_near(&self, x: f64) -> Vec<(f64, f64)> {
        let ix = (0..self.grid.nx)
            .min_by(|&a, &b| (self.grid.x(a) - x).abs().total_cmp(&(self.grid.x(b) - x).abs()))
            .unwrap_or(0);
        (0..self.grid.np).map(|j| (self.grid.p(j), self.value(ix, j))).collect()
    }

    /// Body lines `x,p,W` with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p,W\n");
        for j in 0..self.grid.np {
            for i in 0..self.grid.nx {
                let _ = writeln!(
                    out,
                    "{:.11e},{:.11e},{:.11e}",
                    self.grid.x(i),
                    self.grid.p(j),
                    self.value(i, j)
                );
            }
        }
        out
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sample the Wigner function of `state` on `grid`; rows run in parallel.
pub fn wigner_map(state: &FieldOperator, grid: WignerGrid) -> Result<WignerMap> {
    if grid.nx < 2 || grid.np < 2 {
        return domain("Wigner grid needs at least two points per axis");
    }
    let rows: Vec<(Vec<f64>, f64)> = (0..grid.np)
        .into_par_iter()
        .map(|j| {
            let p = grid.p(j);
            let mut imag: f64 = 0.0;
            let row = (0..grid.nx)
                .map(|i| {
                    let w = state.wigner_at(C64::new(grid.x(i), p));
                    imag = imag.max(w.im.abs());
                    w.re
                })
                .collect();
            (row, imag)
        })
        .collect();
    let imag_residue = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let values: Vec<f64> = rows.into_iter().flat_map(|r| r.0).collect();
    let integral = values.iter().sum::<f64>() * grid.cell_area();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(WignerMap {
        grid,
        values,
        integral,
        min,
        max,
        imag_residue,
        coverage_warning: !grid.covers(state.extent()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(alpha: C64) -> FieldState {
        FieldState::Coherent(vec![(C64::new(1.0, 0.0), alpha), (C64::new(1.0, 0.0), -alpha)])
            .normalize()
            .unwrap()
    }

    #[test]
    fn vacuum_amplitudes() {
        let v = coherent_amplitudes(C64::new(0.0, 0.0), 5).unwrap();
        assert_eq!(v[0], C64::new(1.0, 0.0));
        assert!(v[1..].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn coherent_mean_photon_number() {
        let alpha = C64::new(1.3, -0.7);
        let cutoff = fock_cutoff_for(alpha.norm_sqr());
        let v = coherent_amplitudes(alpha, cutoff).unwrap();
        let mean: f64 = v.iter().enumerate().map(|(n, c)| n as f64 * c.norm_sqr()).sum();
        assert!((mean - alpha.norm_sqr()).abs() < 1e-8);
    }

    #[test]
    fn cat_amplitude_norm_deficit() {
        let alpha = C64::new(0.0, 2.75);
        let cutoff = fock_cutoff_for(alpha.norm_sqr());
        let v = coherent_amplitudes(alpha, cutoff).unwrap();
        let deficit = 1.0 - v.iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!(deficit < 1e-8);
        // The tail estimate agrees with the direct deficit.
        assert!((poisson_tail_above(alpha.norm_sqr(), cutoff) - deficit).abs() < 1e-12);
        assert!(matches!(coherent_amplitudes(alpha, 8), Err(Error::Truncation(_))));
    }

    #[test]
    fn poisson_tail_matches_direct_sum() {
        let m: f64 = 4.0;
        let direct: f64 = 1.0
            - (0..=6)
                .map(|n| (-m + n as f64 * m.ln() - ln_factorial(n)).exp())
                .sum::<f64>();
        assert!((poisson_tail_above(m, 6) - direct).abs() < 1e-14);
    }

    #[test]
    fn overlap_properties() {
        let a = C64::new(0.4, 1.1);
        assert!((coherent_overlap(a, a) - 1.0).norm() < 1e-15);
        let r = 1.7;
        let o = coherent_overlap(C64::new(r, 0.0), C64::new(-r, 0.0));
        assert!((o.re - (-2.0 * r * r).exp()).abs() < 1e-15);
        assert!(coherent_overlap(a, C64::new(0.3, 1.0)).norm() < 1.0);
    }

    #[test]
    fn overlap_matches_truncated_sum() {
        let pts = [C64::new(9.0, 0.0), C64::new(-3.0, 5.0), C64::new(0.0, 8.5), C64::new(2.0, -2.0)];
        for &b in &pts {
            for &g in &pts {
                let cutoff = fock_cutoff_for(b.norm_sqr().max(g.norm_sqr()));
                let vb = coherent_amplitudes(b, cutoff).unwrap();
                let vg = coherent_amplitudes(g, cutoff).unwrap();
                let sum: C64 = vb.iter().zip(&vg).map(|(x, y)| x.conj() * y).sum();
                assert!((sum - coherent_overlap(b, g)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn displacement_is_unitary_on_low_block() {
        let beta = C64::new(0.8, -0.5);
        let d = displacement_matrix(beta, 40);
        let prod = d.adjoint() * &d;
        for i in 0..10 {
            for j in 0..10 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn vacuum_wigner() {
        let vac: FieldOperator = FieldState::Coherent(vec![(C64::new(1.0, 0.0), C64::new(0.0, 0.0))]).into();
        let w0 = vac.wigner_at(C64::new(0.0, 0.0));
        assert!((w0.re - FRAC_2_PI).abs() < 1e-15);
        let z = C64::new(0.3, -0.4);
        assert!((vac.wigner_at(z).re - FRAC_2_PI * (-2.0 * z.norm_sqr()).exp()).abs() < 1e-15);
        let map = wigner_map(&vac, WignerGrid::covering(0.0)).unwrap();
        assert!((map.integral - 1.0).abs() < 2e-2);
        assert!(!map.coverage_warning);
    }

    #[test]
    fn coherent_and_fock_routes_agree() {
        let state = cat(C64::new(2.0, 0.0));
        let coherent = state.to_operator();
        let cutoff = 60;
        let fock = FieldState::Fock(state.to_fock(cutoff).unwrap()).to_operator();
        let grid = WignerGrid::square(5.0, 41);
        let a = wigner_map(&coherent, grid).unwrap();
        let b = wigner_map(&fock, grid).unwrap();
        let worst = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "max deviation {worst}");
        assert!(a.min < 0.0);
        assert!(a.imag_residue < 1e-10);
    }

    #[test]
    fn wigner_is_linear_in_mixtures() {
        let a = cat(C64::new(0.0, 1.5)).to_operator();
        let b = FieldState::Coherent(vec![(C64::new(1.0, 0.0), C64::new(1.0, 1.0))]).to_operator();
        let (FieldOperator::Dyads(da), FieldOperator::Dyads(db)) = (a.clone(), b.clone()) else {
            unreachable!()
        };
        let mut mix = da.scaled(0.3);
        mix.dyads.extend(db.scaled(0.7).dyads);
        let mix = FieldOperator::Dyads(mix);
        for z in [C64::new(0.1, 0.2), C64::new(-1.0, 1.4), C64::new(2.0, -0.3)] {
            let lhs = mix.wigner_at(z).re;
            let rhs = 0.3 * a.wigner_at(z).re + 0.7 * b.wigner_at(z).re;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn tighter_grid_tightens_integral() {
        let state = cat(C64::new(0.0, 2.0)).to_operator();
        let mut last = f64::INFINITY;
        // Trapezoid sums of Gaussians converge spectrally; below 1e-9 only rounding is left.
        for points in [11, 21, 41, 81] {
            let map = wigner_map(&state, WignerGrid::square(5.0, points)).unwrap();
            let err = (map.integral - 1.0).abs();
            assert!(err <= last || err < 1e-9, "{points}: {err} vs {last}");
            last = err;
        }
        assert!(last < 2e-2);
    }

    #[test]
    fn narrow_grid_flags_coverage() {
        let state = cat(C64::new(0.0, 4.0)).to_operator();
        let map = wigner_map(&state, WignerGrid::square(3.0, 11)).unwrap();
        assert!(map.coverage_warning);
    }
}
