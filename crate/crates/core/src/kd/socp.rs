//! Dense primal-dual interior-point solver for the dual cone program
//!
//! ```text
//! maximize  λᵀω   subject to  ‖Γ_jᵀ λ‖₂ ≤ 1,  j = 1..m
//! ```
//!
//! λ is restricted to the range of the stacked Γ so the feasible set is
//! bounded whenever ω is reachable. In conic form each constraint reads
//! `s_j = (1, −H_j x) ∈ Q⁴` and the multipliers `z_j = (τ_j, v_j)` are the
//! impulses of the primal problem `min Σ‖v_j‖ s.t. Σ H_jᵀ v_j = w`.
//! Iterations use Nesterov–Todd scaling with Mehrotra predictor-corrector
//! steps; a Newton polish on the KKT system of the active cones follows.

use nalgebra::{DMatrix, DVector, Matrix3x6, Matrix4, Matrix6, Matrix6x3, Vector3, Vector4, Vector6};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for the range of the stacked control maps.
const RANK_TOL: f64 = 1e-11;

/// Newton residual at which an active-set KKT point counts as converged.
const POLISH_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub(crate) enum DualOutcome {
    Optimal { lambda: Vector6<f64>, newton_steps: usize },
    /// ω has a component outside the range of the stacked maps; `ray` is a
    /// unit direction along which the dual objective grows without bound.
    Unbounded { ray: Vector6<f64> },
}

/// Orthonormal basis of the range of `[Γ_1 … Γ_m]` and the residual of `w`
/// after projection onto it.
pub(crate) fn range_basis(gammas: &[&Matrix6x3<f64>], w: &Vector6<f64>) -> (DMatrix<f64>, Vector6<f64>) {
    let mut stacked = DMatrix::zeros(6, 3 * gammas.len());
    for (j, g) in gammas.iter().enumerate() {
        stacked.view_mut((0, 3 * j), (6, 3)).copy_from(*g);
    }
    let svd = stacked.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s_max = svd.singular_values.max();
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| s_max > 0.0 && svd.singular_values[i] > RANK_TOL * s_max)
        .collect();
    let mut q = DMatrix::zeros(6, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        q.set_column(c, &u.column(i));
    }
    let wd = DVector::from_column_slice(w.as_slice());
    let proj = &q * (q.transpose() * &wd);
    let resid = Vector6::from_iterator((wd - proj).iter().cloned());
    (q, resid)
}

/// Problem data in the coordinates of the range basis. Coordinates past
/// `rank` are identically zero.
struct ConeData {
    h: Vec<Matrix3x6<f64>>,
    w: Vector6<f64>,
    rank: usize,
}

fn jdet(u: &Vector4<f64>) -> f64 {
    u[0] * u[0] - u.fixed_rows::<3>(1).norm_squared()
}

fn jflip(u: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(u[0], -u[1], -u[2], -u[3])
}

/// Jordan product `u ∘ v`.
fn circ(u: &Vector4<f64>, v: &Vector4<f64>) -> Vector4<f64> {
    let mut out = v.fixed_rows::<3>(1) * u[0] + u.fixed_rows::<3>(1) * v[0];
    let head = u.dot(v);
    let o = out.as_mut_slice();
    Vector4::new(head, o[0], o[1], o[2])
}

/// Solves `lam ∘ x = r` for x.
fn circ_solve(lam: &Vector4<f64>, r: &Vector4<f64>) -> Vector4<f64> {
    let l1 = lam.fixed_rows::<3>(1);
    let r1 = r.fixed_rows::<3>(1);
    let x0 = (lam[0] * r[0] - l1.dot(&r1)) / jdet(lam);
    let x1 = (r1 - l1 * x0) / lam[0];
    Vector4::new(x0, x1[0], x1[1], x1[2])
}

/// Nesterov–Todd scaling of one cone: `W z = W⁻¹ s = λ`.
struct NtScaling {
    w: Matrix4<f64>,
    winv: Matrix4<f64>,
    lam: Vector4<f64>,
}

fn hyperbolic(wb: &Vector4<f64>) -> Matrix4<f64> {
    let w1 = wb.fixed_rows::<3>(1);
    let mut m = Matrix4::zeros();
    m[(0, 0)] = wb[0];
    m.fixed_view_mut::<1, 3>(0, 1).copy_from(&w1.transpose());
    m.fixed_view_mut::<3, 1>(1, 0).copy_from(&w1);
    m.fixed_view_mut::<3, 3>(1, 1)
        .copy_from(&(nalgebra::Matrix3::identity() + w1 * w1.transpose() / (1.0 + wb[0])));
    m
}

fn nt_scaling(s: &Vector4<f64>, z: &Vector4<f64>) -> NtScaling {
    let js = jdet(s).max(f64::MIN_POSITIVE).sqrt();
    let jz = jdet(z).max(f64::MIN_POSITIVE).sqrt();
    let sb = s / js;
    let zb = z / jz;
    let gamma = ((1.0 + sb.dot(&zb)) / 2.0).sqrt();
    let wb = (sb + jflip(&zb)) / (2.0 * gamma);
    let beta = (js / jz).sqrt();
    let hw = hyperbolic(&wb);
    let mut jhj = hw;
    for i in 1..4 {
        jhj[(0, i)] = -jhj[(0, i)];
        jhj[(i, 0)] = -jhj[(i, 0)];
    }
    let w = hw * beta;
    let winv = jhj / beta;
    let lam = w * z;
    NtScaling { w, winv, lam }
}

/// Largest step keeping `u + α du` in the cone (capped at a large value).
fn max_step(u: &Vector4<f64>, du: &Vector4<f64>) -> f64 {
    let a = jdet(du);
    let b = 2.0 * (u[0] * du[0] - u.fixed_rows::<3>(1).dot(&du.fixed_rows::<3>(1)));
    let c = jdet(u);
    let mut alpha = f64::INFINITY;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            alpha = -c / b;
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            for root in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
                if root > 0.0 {
                    alpha = alpha.min(root);
                }
            }
        }
    }
    if du[0] < 0.0 {
        alpha = alpha.min(-u[0] / du[0]);
    }
    alpha
}

/// `(0, −H x)` as a cone-space vector.
fn gmul(h: &Matrix3x6<f64>, x: &Vector6<f64>) -> Vector4<f64> {
    let y = h * x;
    Vector4::new(0.0, -y[0], -y[1], -y[2])
}

/// `G_jᵀ u` for a cone-space vector.
fn gtmul(h: &Matrix3x6<f64>, u: &Vector4<f64>) -> Vector6<f64> {
    -(h.transpose() * u.fixed_rows::<3>(1))
}

struct Iterate {
    x: Vector6<f64>,
    s: Vec<Vector4<f64>>,
    z: Vec<Vector4<f64>>,
}

/// Solves `Gᵀdz = −r_x`, `G dx + ds = −r_z`, `W dz + W⁻¹ ds = q` through
/// the reduced 6x6 normal equations.
fn kkt_solve_once(
    data: &ConeData,
    nt: &[NtScaling],
    rx: &Vector6<f64>,
    rz: &[Vector4<f64>],
    q: &[Vector4<f64>],
) -> Option<(Vector6<f64>, Vec<Vector4<f64>>, Vec<Vector4<f64>>)> {
    let m = data.h.len();
    let mut kkt = Matrix6::zeros();
    let mut rhs = -rx;
    let mut wq = Vec::with_capacity(m);
    let mut winv2 = Vec::with_capacity(m);
    for j in 0..m {
        let wqj = nt[j].w * q[j];
        let wi2 = nt[j].winv * nt[j].winv;
        // Gᵀ W⁻² G with G_j = [0; −H_j]
        let blk = wi2.fixed_view::<3, 3>(1, 1);
        let h = &data.h[j];
        kkt += h.transpose() * blk * h;
        rhs -= gtmul(h, &(wi2 * (rz[j] + wqj)));
        wq.push(wqj);
        winv2.push(wi2);
    }
    for i in data.rank..6 {
        kkt[(i, i)] = 1.0;
        rhs[i] = 0.0;
    }
    if !kkt.iter().chain(rhs.iter()).all(|v| v.is_finite()) {
        return None;
    }
    let d = Vector6::from_fn(|i, _| 1.0 / kkt[(i, i)].abs().sqrt().max(1e-300));
    let scaled = Matrix6::from_fn(|i, k| kkt[(i, k)] * d[i] * d[k]);
    let y = match scaled.cholesky() {
        Some(ch) => ch.solve(&rhs.component_mul(&d)),
        None => {
            let svd = scaled.svd(true, true);
            let eps = svd.singular_values.max() * 1e-15;
            svd.solve(&rhs.component_mul(&d), eps).ok()?
        }
    };
    let dx = y.component_mul(&d);
    let mut ds = Vec::with_capacity(m);
    let mut dz = Vec::with_capacity(m);
    for j in 0..m {
        let gdx = gmul(&data.h[j], &dx);
        let dzj = winv2[j] * (gdx + rz[j] + wq[j]);
        let dsj = wq[j] - nt[j].w * (nt[j].w * dzj);
        dz.push(dzj);
        ds.push(dsj);
    }
    Some((dx, ds, dz))
}

/// Newton step for `Gᵀdz = −r_x`, `G dx + ds = −r_z`,
/// `λ ∘ (W dz + W⁻¹ ds) = r_c`, with iterative refinement on the full system.
fn newton_solve(
    data: &ConeData,
    nt: &[NtScaling],
    rx: &Vector6<f64>,
    rz: &[Vector4<f64>],
    rc: &[Vector4<f64>],
) -> Option<(Vector6<f64>, Vec<Vector4<f64>>, Vec<Vector4<f64>>)> {
    let m = data.h.len();
    let q: Vec<Vector4<f64>> = (0..m).map(|j| circ_solve(&nt[j].lam, &rc[j])).collect();
    let (mut dx, mut ds, mut dz) = kkt_solve_once(data, nt, rx, rz, &q)?;
    for _ in 0..2 {
        let mut e1 = -rx;
        let mut e2 = Vec::with_capacity(m);
        let mut e3 = Vec::with_capacity(m);
        for j in 0..m {
            e1 -= gtmul(&data.h[j], &dz[j]);
            e2.push(-(rz[j] + gmul(&data.h[j], &dx) + ds[j]));
            e3.push(q[j] - nt[j].w * dz[j] - nt[j].winv * ds[j]);
        }
        for i in data.rank..6 {
            e1[i] = 0.0;
        }
        let (cx, cs, cz) = kkt_solve_once(data, nt, &(-e1), &e2, &e3)?;
        dx += cx;
        for j in 0..m {
            ds[j] += cs[j];
            dz[j] += cz[j];
        }
    }
    Some((dx, ds, dz))
}

struct IpmResult {
    x: Vector6<f64>,
    tau: Vec<f64>,
    iterations: usize,
    merit: f64,
}

fn ipm(data: &ConeData, tol: f64) -> Result<IpmResult> {
    const MAX_ITERS: usize = 100;
    let m = data.h.len();
    let e = Vector4::new(1.0, 0.0, 0.0, 0.0);
    let mut it = Iterate { x: Vector6::zeros(), s: vec![e; m], z: vec![e; m] };
    let mut best: Option<(f64, Vector6<f64>, Vec<f64>)> = None;
    let mut stall = 0;
    for iter in 0..MAX_ITERS {
        let mut rx = -data.w;
        let mut rz = Vec::with_capacity(m);
        let mut gap = 0.0;
        for j in 0..m {
            rx += gtmul(&data.h[j], &it.z[j]);
            rz.push(gmul(&data.h[j], &it.x) + it.s[j] - e);
            gap += it.s[j].dot(&it.z[j]);
        }
        for i in data.rank..6 {
            rx[i] = 0.0;
        }
        let pobj = data.w.dot(&it.x);
        let dobj: f64 = it.z.iter().map(|z| z[0]).sum();
        let scale = pobj.abs().max(dobj.abs()).max(1e-300);
        let rel_gap = gap / scale;
        let rel_res = rx.norm() / data.w.norm().max(1e-300);
        let merit = rel_gap.max(rel_res);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, it.x, it.z.iter().map(|z| z[0]).collect()));
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                break;
            }
        }
        if rel_gap <= tol && rel_res <= tol {
            let tau = it.z.iter().map(|z| z[0]).collect();
            return Ok(IpmResult { x: it.x, tau, iterations: iter, merit: rel_gap.max(rel_res) });
        }
        let nt: Vec<NtScaling> = (0..m).map(|j| nt_scaling(&it.s[j], &it.z[j])).collect();
        let mu = gap / m as f64;

        // predictor
        let rc_aff: Vec<Vector4<f64>> = nt.iter().map(|n| -circ(&n.lam, &n.lam)).collect();
        let Some((_, dsa, dza)) = newton_solve(data, &nt, &rx, &rz, &rc_aff) else {
            break;
        };
        let mut alpha_aff: f64 = 1.0;
        for j in 0..m {
            alpha_aff = alpha_aff.min(max_step(&it.s[j], &dsa[j])).min(max_step(&it.z[j], &dza[j]));
        }
        let gap_aff: f64 = (0..m)
            .map(|j| (it.s[j] + dsa[j] * alpha_aff).dot(&(it.z[j] + dza[j] * alpha_aff)))
            .sum();
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc: Vec<Vector4<f64>> = (0..m)
            .map(|j| {
                let n = &nt[j];
                let cross = circ(&(n.winv * dsa[j]), &(n.w * dza[j]));
                -circ(&n.lam, &n.lam) - cross + e * (sigma * mu)
            })
            .collect();
        let Some((dx, ds, dz)) = newton_solve(data, &nt, &rx, &rz, &rc) else {
            break;
        };
        let mut alpha_max: f64 = f64::INFINITY;
        for j in 0..m {
            alpha_max = alpha_max.min(max_step(&it.s[j], &ds[j])).min(max_step(&it.z[j], &dz[j]));
        }
        let alpha = (0.99 * alpha_max).min(1.0);
        if !(alpha > 0.0) {
            break;
        }
        it.x += dx * alpha;
        for j in 0..m {
            it.s[j] += ds[j] * alpha;
            it.z[j] += dz[j] * alpha;
        }
    }
    match best {
        Some((merit, x, tau)) if merit <= 1e-3 => Ok(IpmResult { x, tau, iterations: MAX_ITERS, merit }),
        _ => Err(Error::Socp("interior-point iterations did not converge".into())),
    }
}

/// Newton iterations on the KKT conditions with a fixed active set:
/// `Σ_j m_j H_jᵀ H_j z = w` and `‖H_j z‖ = 1` for active j.
fn polish(data: &ConeData, active: &[usize], z0: &Vector6<f64>, m0: &[f64]) -> Option<(Vector6<f64>, Vec<f64>, f64)> {
    let r = data.rank;
    let k = active.len();
    let mut z = *z0;
    let mut m = m0.to_vec();
    let residual = |z: &Vector6<f64>, m: &[f64]| -> DVector<f64> {
        let mut f = DVector::zeros(r + k);
        let mut stat = -data.w;
        for (c, &j) in active.iter().enumerate() {
            let h = &data.h[j];
            let y = h * z;
            stat += h.transpose() * y * m[c];
            f[r + c] = 0.5 * (y.norm_squared() - 1.0);
        }
        f.rows_mut(0, r).copy_from(&stat.rows(0, r));
        f
    };
    let mut f = residual(&z, &m);
    for _ in 0..100 {
        if f.norm() < 1e-15 {
            break;
        }
        let mut jac = DMatrix::zeros(r + k, r + k);
        for (c, &j) in active.iter().enumerate() {
            let h = &data.h[j];
            let hty = h.transpose() * (h * z);
            let hh = h.transpose() * h * m[c];
            let mut tl = jac.view_mut((0, 0), (r, r));
            tl += hh.view((0, 0), (r, r));
            jac.view_mut((0, r + c), (r, 1)).copy_from(&hty.rows(0, r));
            jac.view_mut((r + c, 0), (1, r)).copy_from(&hty.rows(0, r).transpose());
        }
        if !jac.iter().all(|v| v.is_finite()) {
            return None;
        }
        let svd = jac.svd(true, true);
        let eps = svd.singular_values.max() * 1e-14;
        let step = svd.solve(&(-&f), eps).ok()?;
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..30 {
            let mut z1 = z;
            for i in 0..r {
                z1[i] += t * step[i];
            }
            let m1: Vec<f64> = (0..k).map(|c| m[c] + t * step[r + c]).collect();
            let f1 = residual(&z1, &m1);
            if f1.norm() < (1.0 - 1e-4 * t) * f.norm() {
                accepted = Some((z1, m1, f1));
                break;
            }
            t *= 0.5;
        }
        let Some((z1, m1, f1)) = accepted else {
            break;
        };
        z = z1;
        m = m1;
        f = f1;
    }
    if !f.norm().is_finite() {
        return None;
    }
    Some((z, m, f.norm()))
}

enum PolishStep {
    Certified(Vector6<f64>),
    Drop(usize),
    Add(usize),
}

/// Classifies a converged equality-constrained point: a KKT certificate,
/// or the active-set change that repairs it.
fn polish_step(data: &ConeData, active: &[usize], z: &Vector6<f64>, m: &[f64]) -> PolishStep {
    let m_max = m.iter().cloned().fold(0.0, f64::max);
    let neg = (0..m.len())
        .filter(|&c| m[c] < -1e-12 * m_max.max(1e-300))
        .min_by(|&a, &b| m[a].total_cmp(&m[b]));
    if let Some(c) = neg {
        return PolishStep::Drop(active[c]);
    }
    let worst = (0..data.h.len())
        .filter(|j| !active.contains(j))
        .map(|j| (j, (data.h[j] * z).norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    match worst {
        Some((j, g)) if g > 1.0 + 1e-12 => PolishStep::Add(j),
        _ => PolishStep::Certified(*z),
    }
}

/// Active-set refinement seeded from the interior-point multipliers. Each
/// seed set is repaired by dropping negative multipliers and adding
/// violated cones until a KKT certificate is found.
fn try_polish(data: &ConeData, x: &Vector6<f64>, tau: &[f64]) -> Option<Vector6<f64>> {
    let max_tau = tau.iter().cloned().fold(0.0, f64::max);
    // candidates are time ordered, so a cluster of neighbouring cones
    // sharing one support point shows up as a single local peak in tau
    let peaks: Vec<usize> = (0..tau.len())
        .filter(|&j| (j == 0 || tau[j] >= tau[j - 1]) && (j + 1 == tau.len() || tau[j] > tau[j + 1]))
        .collect();
    let mut seeds: Vec<Vec<usize>> = Vec::new();
    for thresh in [1e-2, 1e-3, 1e-4, 1e-6, 1e-8] {
        seeds.push((0..tau.len()).filter(|&j| tau[j] > thresh * max_tau).collect());
    }
    for thresh in [1e-2, 1e-4, 1e-8] {
        seeds.push(peaks.iter().cloned().filter(|&j| tau[j] > thresh * max_tau).collect());
    }
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for mut active in seeds {
        // a generic optimum has at most `rank` active cones; larger seeds
        // come from weight smeared over neighbouring, nearly equal cones
        if active.len() > data.rank {
            active.sort_by(|&a, &b| tau[b].total_cmp(&tau[a]));
            active.truncate(data.rank);
            active.sort_unstable();
        }
        if active.is_empty() || tried.contains(&active) {
            continue;
        }
        tried.push(active.clone());
        let mut z = *x;
        let mut mult: Vec<f64> = active.iter().map(|&j| tau[j]).collect();
        for _ in 0..(2 * tau.len()).clamp(10, 60) {
            let Some((zp, mp, resid)) = polish(data, &active, &z, &mult) else {
                break;
            };
            let step = if resid <= POLISH_TOL {
                polish_step(data, &active, &zp, &mp)
            } else if active.len() > data.rank || mp.iter().any(|&v| v < 0.0) {
                // overdetermined or wrong-signed: shed the weakest cone
                let c = (0..mp.len()).min_by(|&a, &b| mp[a].total_cmp(&mp[b])).unwrap();
                PolishStep::Drop(active[c])
            } else {
                break;
            };
            match step {
                PolishStep::Certified(z) => return Some(z),
                PolishStep::Drop(j) => {
                    let c = active.iter().position(|&a| a == j).unwrap();
                    active.remove(c);
                    mult = mp;
                    mult.remove(c);
                }
                PolishStep::Add(j) => {
                    active.push(j);
                    mult = mp;
                    mult.push(tau[j].max(1e-3 * max_tau));
                }
            }
            if active.is_empty() {
                break;
            }
            if resid <= POLISH_TOL {
                z = zp;
            } else {
                // an unconverged point is no better than the interior seed
                z = *x;
                mult = active.iter().map(|&j| tau[j]).collect();
            }
        }
    }
    None
}

/// Solves the dual for unit-norm `omega_hat`.
pub(crate) fn solve_dual_unit(
    omega_hat: &Vector6<f64>,
    gammas: &[&Matrix6x3<f64>],
    tol: f64,
) -> Result<DualOutcome> {
    if gammas.is_empty() {
        return Err(Error::InvalidInput("dual needs at least one candidate time".into()));
    }
    let (q, resid) = range_basis(gammas, omega_hat);
    if resid.norm() > 1e-9 {
        return Ok(DualOutcome::Unbounded { ray: resid.normalize() });
    }
    let rank = q.ncols();
    let mut qf = Matrix6::zeros();
    qf.view_mut((0, 0), (6, rank)).copy_from(&q);
    let mut w = qf.transpose() * omega_hat;
    for i in rank..6 {
        w[i] = 0.0;
    }
    let h: Vec<Matrix3x6<f64>> = gammas.iter().map(|g| g.transpose() * qf).collect();
    let data = ConeData { h, w, rank };
    let sol = ipm(&data, tol)?;
    // a certified KKT point is optimal; the IPM iterate alone is trusted
    // only when it is itself accurate
    let x = match try_polish(&data, &sol.x, &sol.tau) {
        Some(xp) => xp,
        None if sol.merit <= 1e-6 => sol.x,
        None => return Err(Error::Socp("interior-point iterations did not converge".into())),
    };
    Ok(DualOutcome::Optimal { lambda: qf * x, newton_steps: sol.iterations })
}

/// `‖Γᵀλ‖₂` and the maximizing unit direction (None when degenerate).
pub(crate) fn contact_raw(gamma: &Matrix6x3<f64>, lambda: &Vector6<f64>) -> (f64, Option<Vector3<f64>>) {
    let y = gamma.transpose() * lambda;
    let g = y.norm();
    if g < 1e-14 {
        (g, None)
    } else {
        (g, Some(y / g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gamma(rng: &mut ChaCha8Rng) -> Matrix6x3<f64> {
        Matrix6x3::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn two_full_rank_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gs: Vec<_> = (0..4).map(|_| random_gamma(&mut rng)).collect();
        let refs: Vec<_> = gs.iter().collect();
        let w = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
        let DualOutcome::Optimal { lambda, .. } = solve_dual_unit(&w, &refs, 1e-10).unwrap() else {
            panic!("expected bounded dual");
        };
        for g in &gs {
            assert!((g.transpose() * lambda).norm() <= 1.0 + 1e-10);
        }
        // small feasible perturbations never improve the objective
        let best = lambda.dot(&w);
        for _ in 0..2000 {
            let d = Vector6::from_fn(|_, _| rng.random_range(-1e-3..1e-3));
            let cand = lambda + d;
            if gs.iter().all(|g| (g.transpose() * cand).norm() <= 1.0) {
                assert!(cand.dot(&w) <= best + 1e-12);
            }
        }
    }

    #[test]
    fn nt_scaling_identity() {
        let s = Vector4::new(2.0, 0.3, -0.5, 0.7);
        let z = Vector4::new(1.5, -0.2, 0.4, 0.1);
        let nt = nt_scaling(&s, &z);
        assert!((nt.w * z - nt.winv * s).norm() < 1e-14);
        assert!((nt.w * nt.winv - Matrix4::identity()).norm() < 1e-14);
        let lam = Vector4::new(1.2, 0.1, 0.2, -0.3);
        let r = Vector4::new(0.4, -0.1, 0.9, 0.2);
        assert!((circ(&lam, &circ_solve(&lam, &r)) - r).norm() < 1e-14);
    }

    #[test]
    fn unreachable_direction_is_unbounded() {
        let mut g = Matrix6x3::zeros();
        g[(3, 0)] = 1.0;
        g[(4, 1)] = 1.0;
        g[(5, 2)] = 1.0;
        let w = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        match solve_dual_unit(&w, &[&g], 1e-10).unwrap() {
            DualOutcome::Unbounded { ray } => assert!((ray - w).norm() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_deficient_but_reachable() {
        // only velocity rows are controllable and ω lies in them
        let mut g = Matrix6x3::zeros();
        g[(3, 0)] = 2.0;
        g[(4, 1)] = 1.0;
        g[(5, 2)] = 1.0;
        let w = Vector6::new(0.0, 0.0, 0.0, 0.6, 0.8, 0.0);
        let DualOutcome::Optimal { lambda, .. } = solve_dual_unit(&w, &[&g], 1e-10).unwrap() else {
            panic!();
        };
        // single-impulse optimum: dual value equals the impulse norm
        let dv: Vector3<f64> = Vector3::new(0.3, 0.8, 0.0);
        assert!((lambda.dot(&w) - dv.norm()).abs() < 1e-10);
        assert!(lambda.fixed_rows::<3>(0).norm() < 1e-12);
    }
}
