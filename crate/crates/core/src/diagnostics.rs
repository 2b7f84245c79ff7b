//! Measured quantities: instantaneous frequency, fidelities, probabilities,
//! peak tracks, cross-solver overlaps, plus the closed-form predictions they
//! are compared against.

use crate::field::{ComplexField2D, C64};
use crate::model::HBAR;
use crate::series::TimeSeries;
use crate::states::BasisSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("need at least {need} snapshots in the window, found {found}")]
    TooFewSnapshots { need: usize, found: usize },
    #[error("state has zero norm at t = {0:e} s")]
    ZeroNorm(f64),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("time grids differ: {0}")]
    Time(String),
    #[error("field is zero on the requested row")]
    ZeroSlice,
}

/// Brings `f` onto the shape of `target`: a 2D field compared with a line
/// field is replaced by its y-marginal.
fn conform(f: &ComplexField2D, target_nx: usize, target_1d: bool) -> Result<std::borrow::Cow<'_, ComplexField2D>, DiagError> {
    let g = if target_1d && !f.mesh.is_1d() { std::borrow::Cow::Owned(f.marginal_x()) } else { std::borrow::Cow::Borrowed(f) };
    if g.mesh.nx != target_nx || (g.mesh.is_1d() != target_1d) {
        return Err(DiagError::Grid(format!(
            "field is {}x{}, basis/partner is {}x{}",
            f.mesh.nx,
            f.mesh.ny,
            target_nx,
            if target_1d { 1 } else { f.mesh.ny }
        )));
    }
    Ok(g)
}

/// ⟨basis_n|f⟩ for every basis member; a line basis projects the y-marginal.
pub fn project(f: &ComplexField2D, basis: &BasisSet) -> Result<(Vec<C64>, f64), DiagError> {
    let bm = basis.mesh();
    let g = conform(f, bm.nx, bm.is_1d())?;
    if !bm.is_1d() && g.mesh.ny != bm.ny {
        return Err(DiagError::Grid(format!("field is {}x{}, basis is {}x{}", g.mesh.nx, g.mesh.ny, bm.nx, bm.ny)));
    }
    let amps = basis.fields.iter().map(|b| b.inner(&g)).collect();
    Ok((amps, g.norm_sqr()))
}

/// F_n'(t) = |⟨n'|ρ(t)⟩|² / ⟨ρ(t)|ρ(t)⟩ per frame.
pub fn fidelity(series: &TimeSeries, basis: &BasisSet) -> Result<Vec<Vec<f64>>, DiagError> {
    series
        .frames
        .iter()
        .map(|fr| {
            let (amps, norm) = project(&fr.rho21, basis)?;
            if norm == 0.0 {
                return Err(DiagError::ZeroNorm(fr.t));
            }
            Ok(amps.iter().map(|a| a.norm_sqr() / norm).collect())
        })
        .collect()
}

/// P_n'(t) = |⟨n'|ρ(t)⟩|² / ⟨ρ(t0)|ρ(t0)⟩ with t0 snapped to the nearest frame.
pub fn state_probability(series: &TimeSeries, basis: &BasisSet, t0: f64) -> Result<Vec<Vec<f64>>, DiagError> {
    let k0 = series.nearest(t0).ok_or(DiagError::TooFewSnapshots { need: 1, found: 0 })?;
    let (_, norm0) = project(&series.frames[k0].rho21, basis)?;
    if norm0 == 0.0 {
        return Err(DiagError::ZeroNorm(series.frames[k0].t));
    }
    series
        .frames
        .iter()
        .map(|fr| {
            let (amps, _) = project(&fr.rho21, basis)?;
            Ok(amps.iter().map(|a| a.norm_sqr() / norm0).collect())
        })
        .collect()
}

fn weighted_median(mut v: Vec<(f64, f64)>) -> f64 {
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = v.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (x, w) in &v {
        acc += w;
        if acc >= 0.5 * total {
            return *x;
        }
    }
    v.last().map(|p| p.0).unwrap_or(f64::NAN)
}

/// ω = Re[i ∂_t ρ / ρ] at one frame from its neighbours, i.e. −∂_t arg ρ
/// by a centred difference of ln ρ, aggregated as the |ρ|²-weighted median
/// over nodes above 1% of the peak intensity.
pub fn frequency_between(prev: &ComplexField2D, cur: &ComplexField2D, next: &ComplexField2D, dt_total: f64) -> f64 {
    let peak = cur.data.iter().fold(0.0f64, |m, z| m.max(z.norm_sqr()));
    let floor = 0.01 * peak;
    let samples: Vec<(f64, f64)> = (0..cur.data.len())
        .filter_map(|p| {
            let w = cur.data[p].norm_sqr();
            if w < floor || w == 0.0 {
                return None;
            }
            let ratio = next.data[p] * prev.data[p].conj();
            if ratio.norm_sqr() == 0.0 {
                return None;
            }
            Some((-ratio.arg() / dt_total, w))
        })
        .collect();
    if samples.is_empty() {
        return f64::NAN;
    }
    weighted_median(samples)
}

/// (t, ω) for every frame in [t0, t1] that has neighbours on both sides.
pub fn instantaneous_frequency(series: &TimeSeries, window: (f64, f64)) -> Result<Vec<(f64, f64)>, DiagError> {
    let idx: Vec<usize> = (0..series.len()).filter(|&k| series.frames[k].t >= window.0 && series.frames[k].t <= window.1).collect();
    if idx.len() < 2 {
        return Err(DiagError::TooFewSnapshots { need: 2, found: idx.len() });
    }
    let f = &series.frames;
    let mut out = Vec::new();
    for &k in &idx {
        // one-sided at the ends of the series
        let (a, b) = (k.saturating_sub(1), (k + 1).min(f.len() - 1));
        if a == b {
            continue;
        }
        let w = frequency_between(&f[a].rho21, &f[k].rho21, &f[b].rho21, f[b].t - f[a].t);
        out.push((f[k].t, w));
    }
    Ok(out)
}

/// Parabolic-interpolated x of the |ρ|² maximum on the row nearest `y`.
pub fn peak_on_row(f: &ComplexField2D, y: f64) -> Result<f64, DiagError> {
    let m = f.mesh;
    let row = f.row(f.nearest_row(y));
    let (imax, vmax) = row.iter().enumerate().fold((0, 0.0), |acc, (i, z)| {
        let v = z.norm_sqr();
        if v > acc.1 {
            (i, v)
        } else {
            acc
        }
    });
    if vmax == 0.0 {
        return Err(DiagError::ZeroSlice);
    }
    if imax == 0 || imax + 1 == m.nx {
        return Ok(m.x(imax));
    }
    let (a, b, c) = (row[imax - 1].norm_sqr(), vmax, row[imax + 1].norm_sqr());
    let den = a - 2.0 * b + c;
    let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    Ok(m.x(imax) + shift.clamp(-0.5, 0.5) * m.dx)
}

pub fn track_peak(series: &TimeSeries, y_slice: f64) -> Result<Vec<(f64, f64)>, DiagError> {
    series.frames.iter().map(|fr| Ok((fr.t, peak_on_row(&fr.rho21, y_slice)?))).collect()
}

/// |⟨a|b⟩|² / (‖a‖²‖b‖²); a 2D field against a line field uses its y-marginal.
pub fn overlap(a: &ComplexField2D, b: &ComplexField2D) -> Result<f64, DiagError> {
    let (a, b) = match (a.mesh.is_1d(), b.mesh.is_1d()) {
        (false, true) => (std::borrow::Cow::Owned(a.marginal_x()), std::borrow::Cow::Borrowed(b)),
        (true, false) => (std::borrow::Cow::Borrowed(a), std::borrow::Cow::Owned(b.marginal_x())),
        _ => (std::borrow::Cow::Borrowed(a), std::borrow::Cow::Borrowed(b)),
    };
    if !a.mesh.same_shape(&b.mesh) {
        return Err(DiagError::Grid(format!("{}x{} vs {}x{}", a.mesh.nx, a.mesh.ny, b.mesh.nx, b.mesh.ny)));
    }
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    if na == 0.0 || nb == 0.0 {
        return Err(DiagError::ZeroNorm(f64::NAN));
    }
    Ok(a.inner(&b).norm_sqr() / (na * nb))
}

/// Overlap per common snapshot time. Every frame of `a` must have a partner
/// in `b` within `time_tol`.
pub fn cross_overlap(a: &TimeSeries, b: &TimeSeries, time_tol: f64) -> Result<Vec<(f64, f64)>, DiagError> {
    let mut out = Vec::with_capacity(a.len());
    for fa in &a.frames {
        let k = b.nearest(fa.t).ok_or(DiagError::Time("second series is empty".into()))?;
        let fb = &b.frames[k];
        if (fb.t - fa.t).abs() > time_tol {
            return Err(DiagError::Time(format!("no partner for t = {:e} s (closest {:e} s)", fa.t, fb.t)));
        }
        out.push((fa.t, overlap(&fa.rho21, &fb.rho21)?));
    }
    Ok(out)
}

/// Ω_A = (αΩ_c/4) √((n+1) ω_E / Δ_p), the |n⟩ → |n+1⟩ drive strength.
pub fn rabi_frequency(alpha: f64, omega_c: f64, delta_p: f64, omega_e: f64, n: usize) -> f64 {
    alpha * omega_c / 4.0 * ((n as f64 + 1.0) * omega_e / delta_p).sqrt()
}

/// Above this β the first-order quartic shift is no longer trustworthy.
pub const BETA_PERTURBATIVE_LIMIT: f64 = 0.3;

/// ω_n = (n + ½) ω_E + β (n² + n + ½) ω_E
pub fn perturbed_frequency(n: usize, beta: f64, omega_e: f64) -> f64 {
    let n = n as f64;
    (n + 0.5) * omega_e + beta * (n * n + n + 0.5) * omega_e
}

/// Matrix elements ⟨j|H_diff|n⟩ of the anti-Hermitian diffusion term
/// (energy units) towards n−2, n and n+2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionAmplitudes {
    pub down: Option<C64>,
    pub same: C64,
    pub up: C64,
}

pub fn diffusion_transition_amplitudes(n: usize, gamma: f64, delta_p: f64, omega_b: f64) -> TransitionAmplitudes {
    let pre = C64::new(0.0, gamma * HBAR * omega_b / (8.0 * delta_p));
    let nf = n as f64;
    TransitionAmplitudes {
        down: (n >= 2).then(|| pre * (nf * (nf - 1.0)).sqrt()),
        same: -pre * (2.0 * nf + 1.0),
        up: pre * ((nf + 1.0) * (nf + 2.0)).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub omega_inst: Option<f64>,
    pub fidelities: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub peak_x: Option<f64>,
    pub norm: f64,
}

/// One record per frame; probabilities are normalised at the frame nearest `t0`.
pub fn analyze(series: &TimeSeries, basis: Option<&BasisSet>, t0: f64) -> Result<Vec<DiagnosticRecord>, DiagError> {
    let n = series.len();
    let (fid, prob) = match basis {
        Some(b) if n > 0 => (fidelity(series, b)?, state_probability(series, b, t0)?),
        _ => (vec![Vec::new(); n], vec![Vec::new(); n]),
    };
    let f = &series.frames;
    Ok((0..n)
        .map(|k| {
            let omega = if n >= 2 {
                let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
                let w = frequency_between(&f[a].rho21, &f[k].rho21, &f[b].rho21, f[b].t - f[a].t);
                w.is_finite().then_some(w)
            } else {
                None
            };
            DiagnosticRecord {
                t: f[k].t,
                omega_inst: omega,
                fidelities: fid[k].clone(),
                probabilities: prob[k].clone(),
                peak_x: peak_on_row(&f[k].rho21, 0.0).ok(),
                norm: f[k].rho21.norm_sqr(),
            }
        })
        .collect())
}

/// Times at which a sampled signal changes sign (linear interpolation).
pub fn zero_crossings(samples: &[(f64, f64)]) -> Vec<f64> {
    samples
        .windows(2)
        .filter_map(|w| {
            let ((t0, a), (t1, b)) = (w[0], w[1]);
            if a == 0.0 {
                Some(t0)
            } else if a * b < 0.0 {
                Some(t0 + (t1 - t0) * a / (a - b))
            } else {
                None
            }
        })
        .collect()
}

/// Largest |value| among samples with |t − centre| ≤ half_width.
pub fn envelope_at(samples: &[(f64, f64)], centre: f64, half_width: f64) -> f64 {
    samples.iter().filter(|(t, _)| (t - centre).abs() <= half_width).fold(0.0, |m, (_, v)| m.max(v.abs()))
}

/// First time a sampled signal drops below `level` (linear interpolation).
pub fn first_below(samples: &[(f64, f64)], level: f64) -> Option<f64> {
    if samples.first().is_some_and(|s| s.1 < level) {
        return Some(samples[0].0);
    }
    samples.windows(2).find_map(|w| {
        let ((t0, a), (t1, b)) = (w[0], w[1]);
        (a >= level && b < level).then(|| t0 + (t1 - t0) * (a - level) / (a - b))
    })
}

pub type Samples = Vec<(f64, f64)>;

/// x(t) ≈ e^{−γτ} A cos(ωτ + φ), τ = t − t0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedFit {
    pub omega: f64,
    pub gamma: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// rms residual over the fitted samples
    pub rms: f64,
}

/// Least-squares damped cosine. ω is searched over (0, 5 ω_ref] and γ over
/// [0, 2 ω_ref] on a coarse grid, then refined by repeated zooming; A and φ
/// are solved linearly at each (ω, γ).
pub fn fit_damped_cosine(samples: &[(f64, f64)], t0: f64, omega_ref: f64) -> Option<DampedFit> {
    if samples.len() < 4 || omega_ref <= 0.0 {
        return None;
    }
    // returns (sse, a, b) for x ≈ e^{−γτ}(a cos ωτ + b sin ωτ)
    let solve = |w: f64, g: f64| {
        let (mut cc, mut cs, mut ss, mut cx, mut sx, mut xx) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for &(t, x) in samples {
            let tau = t - t0;
            let e = (-g * tau).exp();
            let (c, s) = (e * (w * tau).cos(), e * (w * tau).sin());
            cc += c * c;
            cs += c * s;
            ss += s * s;
            cx += c * x;
            sx += s * x;
            xx += x * x;
        }
        let det = cc * ss - cs * cs;
        if det.abs() < 1e-300 {
            return (f64::INFINITY, 0.0, 0.0);
        }
        let a = (cx * ss - sx * cs) / det;
        let b = (sx * cc - cx * cs) / det;
        ((xx - a * cx - b * sx).max(0.0), a, b)
    };
    let (nw, ng) = (200, 80);
    let (mut hw, mut hg) = (5.0 * omega_ref / nw as f64, 2.0 * omega_ref / ng as f64);
    let mut best = (f64::INFINITY, omega_ref, 0.0);
    for i in 1..=nw {
        for j in 0..=ng {
            let (w, g) = (i as f64 * hw, j as f64 * hg);
            let e = solve(w, g).0;
            if e < best.0 {
                best = (e, w, g);
            }
        }
    }
    for _ in 0..30 {
        let (w0, g0) = (best.1, best.2);
        for i in -5i32..=5 {
            for j in -5i32..=5 {
                let (w, g) = (w0 + i as f64 * hw / 5.0, (g0 + j as f64 * hg / 5.0).max(0.0));
                if w <= 0.0 {
                    continue;
                }
                let e = solve(w, g).0;
                if e < best.0 {
                    best = (e, w, g);
                }
            }
        }
        hw /= 2.0;
        hg /= 2.0;
    }
    let (sse, a, b) = solve(best.1, best.2);
    Some(DampedFit {
        omega: best.1,
        gamma: best.2,
        amplitude: a.hypot(b),
        phase: (-b).atan2(a),
        rms: (sse / samples.len() as f64).sqrt(),
    })
}

/// Interior local minima and maxima (t, value), after a centred moving
/// average over `smooth` samples on each side.
pub fn extrema(samples: &[(f64, f64)], smooth: usize) -> (Samples, Samples) {
    let n = samples.len();
    let s: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = (k.saturating_sub(smooth), (k + smooth).min(n - 1));
            samples[a..=b].iter().map(|p| p.1).sum::<f64>() / (b - a + 1) as f64
        })
        .collect();
    let (mut mins, mut maxs) = (Vec::new(), Vec::new());
    for k in 1..n.saturating_sub(1) {
        if s[k] < s[k - 1] && s[k] <= s[k + 1] {
            mins.push((samples[k].0, s[k]));
        }
        if s[k] > s[k - 1] && s[k] >= s[k + 1] {
            maxs.push((samples[k].0, s[k]));
        }
    }
    (mins, maxs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Mesh;
    use crate::series::Frame;
    use crate::states::{landau_profile, make_basis, BasisKind};

    fn rotating(psi: &ComplexField2D, omega: f64, times: &[f64]) -> TimeSeries {
        let mut s = TimeSeries::new();
        for &t in times {
            s.push(Frame::new(t, psi.scaled(C64::from_polar(1.0, -omega * t))));
        }
        s
    }

    #[test]
    fn pure_rotation_frequency_is_exact() {
        let mesh = Mesh::centered(31, 21, 1e-4, 1e-4);
        let psi = ComplexField2D::from_fn(mesh, |x, y| C64::new((-(x * x + y * y) / 1e-6).exp(), x * 1e3));
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 1e-5).collect();
        let s = rotating(&psi, 3750.0, &times);
        for (_, w) in instantaneous_frequency(&s, (0.0, 1.0)).unwrap() {
            assert!((w - 3750.0).abs() < 1e-9 * 3750.0);
        }
        let mut scaled = s.clone();
        for f in &mut scaled.frames {
            f.rho21.scale(C64::new(7.5, 0.0));
        }
        let a = instantaneous_frequency(&s, (0.0, 1.0)).unwrap();
        let b = instantaneous_frequency(&scaled, (0.0, 1.0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.1 - y.1).abs() <= 1e-10 * x.1.abs());
        }
        assert!(matches!(instantaneous_frequency(&s, (0.0, 5e-6)), Err(DiagError::TooFewSnapshots { .. })));
    }

    #[test]
    fn basis_state_fidelity_is_kronecker() {
        let mesh = Mesh::centered(91, 81, 1e-4, 1e-4);
        let l_b = 0.773e-3;
        let basis = make_basis(BasisKind::Landau { k_s: 0.0, x0: 0.0, l_b }, 3, &mesh).unwrap();
        for n in 0..=3 {
            let psi = landau_profile(n, 0.0, 0.0, l_b, &mesh).unwrap().scaled(C64::new(0.3, -2.0));
            let s = rotating(&psi, 100.0, &[0.0, 1e-4]);
            for row in fidelity(&s, &basis).unwrap() {
                for (m, f) in row.iter().enumerate() {
                    let e = if m == n { 1.0 } else { 0.0 };
                    assert!((f - e).abs() < 1e-6);
                }
            }
            let p = state_probability(&s, &basis, 0.0).unwrap();
            assert!((p[0][n] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fidelities_obey_bessel_bound() {
        let mesh = Mesh::centered(91, 81, 1e-4, 1e-4);
        let basis = make_basis(BasisKind::Landau { k_s: 0.0, x0: 0.0, l_b: 0.773e-3 }, 3, &mesh).unwrap();
        let psi = ComplexField2D::from_fn(mesh, |x, _| C64::new((-(x - 2e-4).powi(2) / 1.4e-6).exp(), 0.0));
        let s = rotating(&psi, 0.0, &[0.0]);
        let f = fidelity(&s, &basis).unwrap();
        let total: f64 = f[0].iter().sum();
        assert!(total <= 1.0 + 1e-9);
        assert!(total > 0.99, "{total}");
    }

    #[test]
    fn zero_state_is_rejected() {
        let mesh = Mesh::centered(61, 41, 1e-4, 1e-4);
        let basis = make_basis(BasisKind::Qho { l_e: 0.5e-3 }, 2, &mesh).unwrap();
        let s = rotating(&ComplexField2D::zeros(mesh), 0.0, &[0.0]);
        assert!(matches!(fidelity(&s, &basis), Err(DiagError::ZeroNorm(_))));
    }

    #[test]
    fn line_basis_projects_marginal() {
        let mesh = Mesh::centered(81, 41, 1e-4, 1e-4);
        let l_e = 0.6434e-3;
        let line = Mesh::line(81, 1e-4, mesh.x_min);
        let basis = make_basis(BasisKind::Qho { l_e }, 3, &line).unwrap();
        let psi = crate::states::qho_profile(1, l_e, &mesh).unwrap();
        let s = rotating(&psi, 0.0, &[0.0]);
        let f = fidelity(&s, &basis).unwrap();
        assert!((f[0][1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_strip_peaks_at_origin() {
        let mesh = Mesh::centered(91, 81, 1e-4, 1e-4);
        let psi = landau_profile(0, 0.0, 0.0, 0.773e-3, &mesh).unwrap();
        assert!(peak_on_row(&psi, 0.0).unwrap().abs() < mesh.dx);
        let shifted = landau_profile(0, 0.0, 0.437e-3, 0.773e-3, &mesh).unwrap();
        assert!((peak_on_row(&shifted, 0.0).unwrap() - 0.437e-3).abs() < 0.05 * mesh.dx);
        assert_eq!(peak_on_row(&ComplexField2D::zeros(mesh), 0.0), Err(DiagError::ZeroSlice));
    }

    #[test]
    fn overlap_is_phase_invariant() {
        let mesh = Mesh::centered(31, 31, 1e-4, 1e-4);
        let psi = ComplexField2D::from_fn(mesh, |x, y| C64::new(x * 1e4, (y * 1e4).sin()));
        let s = rotating(&psi, 0.0, &[0.0, 1e-5]);
        let r = rotating(&psi.scaled(C64::from_polar(2.0, 1.1)), 0.0, &[0.0, 1e-5]);
        for (_, o) in cross_overlap(&s, &s, 1e-12).unwrap() {
            assert!((o - 1.0).abs() < 1e-14);
        }
        for (_, o) in cross_overlap(&s, &r, 1e-12).unwrap() {
            assert!((o - 1.0).abs() < 1e-12);
        }
        let late = rotating(&psi, 0.0, &[5e-5]);
        assert!(matches!(cross_overlap(&s, &late, 1e-9), Err(DiagError::Time(_))));
        let other = rotating(&ComplexField2D::zeros(Mesh::centered(21, 31, 1e-4, 1e-4)), 0.0, &[0.0, 1e-5]);
        assert!(matches!(cross_overlap(&s, &other, 1e-9), Err(DiagError::Grid(_))));
    }

    #[test]
    fn closed_forms() {
        let w = rabi_frequency(0.24, 1.5e6, 4.6e6, 20e3, 0);
        assert!((w - 5934.4).abs() < 0.1);
        assert_eq!(rabi_frequency(0.0, 1.5e6, 4.6e6, 20e3, 0), 0.0);
        let r = rabi_frequency(0.24, 1.5e6, 4.6e6, 20e3, 1) / w;
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let gap = perturbed_frequency(1, 0.15, 20e3) - perturbed_frequency(0, 0.15, 20e3);
        assert!((gap - 26e3).abs() < 1e-9);
        assert_eq!(perturbed_frequency(3, 0.0, 1.0), 3.5);
        assert!((perturbed_frequency(2, 0.1, 1.0) - 3.15).abs() < 1e-12);
    }

    #[test]
    fn diffusion_amplitude_structure() {
        let a0 = diffusion_transition_amplitudes(0, 1e6, 0.83e6, 2500.0);
        assert!(a0.down.is_none());
        assert!(((a0.up / a0.same).norm() - 2f64.sqrt()).abs() < 1e-12);
        let a2 = diffusion_transition_amplitudes(2, 1e6, 0.83e6, 2500.0);
        let pre = 1e6 * HBAR * 2500.0 / (8.0 * 0.83e6);
        assert!((a2.down.unwrap().norm() / pre - 2f64.sqrt()).abs() < 1e-12);
        let a3 = diffusion_transition_amplitudes(3, 1e6, 0.83e6, 2500.0);
        let ratio = a3.down.unwrap().norm() / a3.up.norm();
        assert!((ratio - (6.0f64 / 20.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn signal_helpers() {
        let s: Vec<(f64, f64)> = (0..300).map(|k| (k as f64 * 0.01, (k as f64 * 0.01 * 3.0).cos())).collect();
        let z = zero_crossings(&s);
        assert!((z[0] - std::f64::consts::PI / 6.0).abs() < 1e-3);
        assert!((z[1] - z[0] - std::f64::consts::PI / 3.0).abs() < 1e-3);
        assert!((envelope_at(&s, 1.0, 1.1) - 1.0).abs() < 1e-3);
        assert!((first_below(&s, 0.0).unwrap() - z[0]).abs() < 1e-12);
        let (mins, maxs) = extrema(&s, 0);
        assert!((mins[0].0 - std::f64::consts::PI / 3.0).abs() < 0.01);
        assert!((maxs[0].0 - 2.0 * std::f64::consts::PI / 3.0).abs() < 0.01);
    }

    #[test]
    fn damped_cosine_fit_recovers_parameters() {
        let (w, g, a, phi) = (2600.0, 700.0, 4.7e-4, 0.3);
        let s: Vec<(f64, f64)> =
            (0..300).map(|k| 0.4e-3 + k as f64 * 1e-5).map(|t| (t, a * (-g * (t - 0.4e-3)).exp() * (w * (t - 0.4e-3) + phi).cos())).collect();
        let f = fit_damped_cosine(&s, 0.4e-3, 2500.0).unwrap();
        assert!((f.omega / w - 1.0).abs() < 1e-6, "{f:?}");
        assert!((f.gamma / g - 1.0).abs() < 1e-6);
        assert!((f.amplitude / a - 1.0).abs() < 1e-6);
        assert!((f.phase - phi).abs() < 1e-6);
        assert!(f.rms < 1e-12);
        assert!(fit_damped_cosine(&s[..3], 0.4e-3, 2500.0).is_none());
    }
}
