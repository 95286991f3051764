//! Independent brute-force and closed-form verifiers.
//!
//! Everything here recomputes its target from first principles with its own
//! loops — none of it calls into the solver modules. The stationarity
//! certificate evaluates the analytic partial derivatives of the Lagrangian
//! per block row and checks the simplex first-order condition (constant on
//! the support, no ascent direction off it), cross-validated against central
//! finite differences of an oracle-local Lagrangian implementation.

use crate::channel::{CausalityMode, ChannelSpec, EffectiveChannel};
use crate::prob::{is_zero, safe_ln, CondDist, Kahan, ProbVec};
use crate::rng::SplitMix64;
use crate::solver::SolverState;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Classical alternating-maximization channel capacity of a row-stochastic
/// kernel `p(z|x)`, in nats, with the standard upper/lower bound gap at most
/// `delta`.
pub fn ba_capacity(kernel: &CondDist, delta: f64) -> f64 {
    assert_eq!(kernel.cond_sizes().len(), 1, "kernel must be p(z|x)");
    let n_x = kernel.n_rows();
    let n_z = kernel.out_size();
    let mut q = vec![1.0 / n_x as f64; n_x];
    let mut d = vec![0.0; n_x];
    for _ in 0..1_000_000 {
        let mut qz = vec![0.0; n_z];
        for x in 0..n_x {
            for z in 0..n_z {
                qz[z] += q[x] * kernel.at(x, z);
            }
        }
        for x in 0..n_x {
            let mut acc = 0.0;
            for z in 0..n_z {
                let k = kernel.at(x, z);
                if !is_zero(k) {
                    acc += k * (k.ln() - safe_ln(qz[z]));
                }
            }
            d[x] = acc;
        }
        let upper = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lower = q
            .iter()
            .zip(&d)
            .map(|(&qx, &dx)| qx * dx.exp())
            .sum::<f64>()
            .ln();
        if upper - lower <= delta {
            return 0.5 * (upper + lower);
        }
        let mut sum = 0.0;
        for x in 0..n_x {
            q[x] *= d[x].exp();
            sum += q[x];
        }
        for qx in &mut q {
            *qx /= sum;
        }
    }
    f64::NAN
}

/// Exact optimal estimator per context: `argmin_shat sum_s p(c, s) d(s,
/// shat)`, lowest index on ties. `joint` is row-major `(context, s)`.
pub fn brute_force_estimator(
    joint: &[f64],
    n_context: usize,
    n_s: usize,
    d: &[f64],
    n_shat: usize,
) -> Vec<usize> {
    assert_eq!(joint.len(), n_context * n_s);
    let mut out = Vec::with_capacity(n_context);
    for c in 0..n_context {
        let row = &joint[c * n_s..(c + 1) * n_s];
        let mut best = 0usize;
        let mut best_val = f64::INFINITY;
        for sh in 0..n_shat {
            let mut val = 0.0;
            for s in 0..n_s {
                val += row[s] * d[s * n_shat + sh];
            }
            if val < best_val {
                best_val = val;
                best = sh;
            }
        }
        out.push(best);
    }
    out
}

/// Minimum expected distortion over deterministic transmit signals for a
/// channel without side information: `min_x E[d(S, h*(x, Z))]` with the
/// estimator conditioning on the known signal and the output. Lowest index
/// wins ties. This is the large-multiplier limit of the trade-off curve in
/// radar mode.
pub fn min_distortion_deterministic_x(spec: &ChannelSpec) -> Result<(usize, f64)> {
    if spec.n_st != 1 {
        return Err(Error::ModeViolation(
            "deterministic-signal minimum distortion requires absent side information".into(),
        ));
    }
    let mut best_x = 0usize;
    let mut best = f64::INFINITY;
    for x in 0..spec.n_x {
        let mut joint = vec![0.0; spec.n_z * spec.n_s];
        for s in 0..spec.n_s {
            for z in 0..spec.n_z {
                joint[z * spec.n_s + s] = spec.p_s[s] * spec.p_z_given_xs.at(x * spec.n_s + s, z);
            }
        }
        let est = brute_force_estimator(&joint, spec.n_z, spec.n_s, &spec.distortion, spec.n_shat);
        let mut val = Kahan::default();
        for z in 0..spec.n_z {
            for s in 0..spec.n_s {
                let p = joint[z * spec.n_s + s];
                if p > 0.0 {
                    val.add(p * spec.distortion[s * spec.n_shat + est[z]]);
                }
            }
        }
        let v = val.value();
        if v < best - 1e-15 {
            best = v;
            best_x = x;
        }
    }
    Ok((best_x, best))
}

/// First-order stationarity evidence for a solver state.
///
/// For every block row the analytic partial derivative vector is reduced to a
/// residual: the maximum on-support deviation from the row's support-averaged
/// derivative plus any off-support ascent direction, clamped at zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarityCertificate {
    /// Largest residual over all blocks.
    pub residual: f64,
    /// Residual per block name.
    pub per_block: BTreeMap<String, f64>,
    /// Worst finite-difference disagreement over the sampled coordinates
    /// (`None` if no coordinates were sampled).
    pub fd_max_rel_err: Option<f64>,
}

/// Support threshold: entries at or below it are treated as off-support when
/// checking the first-order condition.
const SUPPORT_EPS: f64 = 1e-9;

struct OracleCtx<'a> {
    eff: &'a EffectiveChannel,
    w: Vec<f64>,
    n_u: usize,
    n_v: usize,
    n_s: usize,
    n_st: usize,
    n_z: usize,
    n_fb: usize,
    n_shat: usize,
}

impl<'a> OracleCtx<'a> {
    fn new(eff: &'a EffectiveChannel, state: &SolverState) -> Self {
        let spec = &eff.spec;
        OracleCtx {
            eff,
            w: spec.state_joint(),
            n_u: eff.n_u(),
            n_v: state.qv.out_size(),
            n_s: spec.n_s,
            n_st: spec.n_st,
            n_z: spec.n_z,
            n_fb: spec.n_fb(),
            n_shat: spec.n_shat,
        }
    }

    fn pu(&self, state: &SolverState, st: usize, u: usize) -> f64 {
        match state.mode {
            CausalityMode::NonCausal => state.pu.at(st, u),
            _ => state.pu.at(0, u),
        }
    }

    /// Oracle Lagrangian: straight sixfold loop over the factorized joint.
    fn lagrangian(&self, state: &SolverState) -> f64 {
        let spec = &self.eff.spec;
        let phi = &spec.feedback_map;
        let mut acc = Kahan::default();
        for s in 0..self.n_s {
            for st in 0..self.n_st {
                let ws = self.w[s * self.n_st + st];
                for u in 0..self.n_u {
                    let pu = self.pu(state, st, u);
                    for z in 0..self.n_z {
                        let k = self.eff.kernel_row(u, st, s)[z];
                        let y = phi[z];
                        for v in 0..self.n_v {
                            let pv = state.pv.at((st * self.n_u + u) * self.n_fb + y, v);
                            let p = ws * pu * k * pv;
                            if is_zero(p) {
                                continue;
                            }
                            let mut e = 0.0;
                            for sh in 0..self.n_shat {
                                e += state.est.at((u * self.n_v + v) * self.n_z + z, sh)
                                    * spec.distortion[s * self.n_shat + sh];
                            }
                            let bracket = safe_ln(state.qu.at(z, u))
                                + safe_ln(state.qv.at(u * self.n_z + z, v))
                                - safe_ln(pu)
                                - safe_ln(pv)
                                - state.rho * e;
                            acc.add(p * bracket);
                        }
                    }
                }
            }
        }
        acc.value()
    }

    fn bracket(
        &self,
        state: &SolverState,
        s: usize,
        st: usize,
        u: usize,
        z: usize,
        v: usize,
    ) -> f64 {
        let spec = &self.eff.spec;
        let y = spec.feedback_map[z];
        let pu = self.pu(state, st, u);
        let pv = state.pv.at((st * self.n_u + u) * self.n_fb + y, v);
        let mut e = 0.0;
        for sh in 0..self.n_shat {
            e += state.est.at((u * self.n_v + v) * self.n_z + z, sh)
                * spec.distortion[s * self.n_shat + sh];
        }
        safe_ln(state.qu.at(z, u)) + safe_ln(state.qv.at(u * self.n_z + z, v))
            - safe_ln(pu)
            - safe_ln(pv)
            - state.rho * e
    }

    /// dL / d pu(u | row): the v-prior-averaged `bracket - 1` weighted by the
    /// reach mass, summed over `s_T` in the shared-row modes.
    fn grad_pu(&self, state: &SolverState, row: usize, u: usize) -> f64 {
        let spec = &self.eff.spec;
        let phi = &spec.feedback_map;
        let sts: Vec<usize> = match state.mode {
            CausalityMode::NonCausal => vec![row],
            _ => (0..self.n_st).collect(),
        };
        let mut acc = Kahan::default();
        for &st in &sts {
            for s in 0..self.n_s {
                let ws = self.w[s * self.n_st + st];
                if is_zero(ws) {
                    continue;
                }
                let krow = self.eff.kernel_row(u, st, s);
                for z in 0..self.n_z {
                    let base = ws * krow[z];
                    if is_zero(base) {
                        continue;
                    }
                    let y = phi[z];
                    for v in 0..self.n_v {
                        let pv = state.pv.at((st * self.n_u + u) * self.n_fb + y, v);
                        if is_zero(pv) {
                            continue;
                        }
                        acc.add(base * pv * (self.bracket(state, s, st, u, z, v) - 1.0));
                    }
                }
            }
        }
        acc.value()
    }

    /// dL / d pv(v | s_T, u, y').
    fn grad_pv(&self, state: &SolverState, st: usize, u: usize, y: usize, v: usize) -> f64 {
        let spec = &self.eff.spec;
        let phi = &spec.feedback_map;
        let pu = self.pu(state, st, u);
        if is_zero(pu) {
            return 0.0;
        }
        let mut acc = Kahan::default();
        for s in 0..self.n_s {
            let ws = self.w[s * self.n_st + st];
            if is_zero(ws) {
                continue;
            }
            let krow = self.eff.kernel_row(u, st, s);
            for z in 0..self.n_z {
                if phi[z] != y {
                    continue;
                }
                let base = ws * pu * krow[z];
                if is_zero(base) {
                    continue;
                }
                acc.add(base * (self.bracket(state, s, st, u, z, v) - 1.0));
            }
        }
        acc.value()
    }

    /// Joint mass over (u, z) and (u, z, v) under the current priors.
    fn masses(&self, state: &SolverState) -> (Vec<f64>, Vec<f64>) {
        let spec = &self.eff.spec;
        let phi = &spec.feedback_map;
        let mut m_uz = vec![0.0; self.n_u * self.n_z];
        let mut m_uzv = vec![0.0; self.n_u * self.n_z * self.n_v];
        for u in 0..self.n_u {
            for st in 0..self.n_st {
                let pu = self.pu(state, st, u);
                if is_zero(pu) {
                    continue;
                }
                for s in 0..self.n_s {
                    let ws = self.w[s * self.n_st + st] * pu;
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = self.eff.kernel_row(u, st, s);
                    for z in 0..self.n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        m_uz[u * self.n_z + z] += base;
                        let y = phi[z];
                        for v in 0..self.n_v {
                            m_uzv[(u * self.n_z + z) * self.n_v + v] +=
                                base * state.pv.at((st * self.n_u + u) * self.n_fb + y, v);
                        }
                    }
                }
            }
        }
        (m_uz, m_uzv)
    }

    /// Estimator linear coefficients `a[(u,v,z)][shat]`.
    fn est_coeffs(&self, state: &SolverState) -> Vec<f64> {
        let spec = &self.eff.spec;
        let phi = &spec.feedback_map;
        let mut a = vec![0.0; self.n_u * self.n_v * self.n_z * self.n_shat];
        for u in 0..self.n_u {
            for st in 0..self.n_st {
                let pu = self.pu(state, st, u);
                if is_zero(pu) {
                    continue;
                }
                for s in 0..self.n_s {
                    let ws = self.w[s * self.n_st + st] * pu;
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = self.eff.kernel_row(u, st, s);
                    for z in 0..self.n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        let y = phi[z];
                        for v in 0..self.n_v {
                            let pv = state.pv.at((st * self.n_u + u) * self.n_fb + y, v);
                            if is_zero(pv) {
                                continue;
                            }
                            for sh in 0..self.n_shat {
                                a[((u * self.n_v + v) * self.n_z + z) * self.n_shat + sh] +=
                                    base * pv * spec.distortion[s * self.n_shat + sh];
                            }
                        }
                    }
                }
            }
        }
        a
    }
}

/// Residual of a single row against the simplex stationarity condition for a
/// maximization: derivative constant on the support, no larger off it.
fn row_residual(x: &[f64], g: &[f64]) -> f64 {
    let mut mass = 0.0;
    let mut mean = 0.0;
    for (xi, gi) in x.iter().zip(g) {
        if *xi > SUPPORT_EPS {
            mass += xi;
            mean += xi * gi;
        }
    }
    if mass <= 0.0 {
        return 0.0;
    }
    let c = mean / mass;
    let mut res: f64 = 0.0;
    for (xi, gi) in x.iter().zip(g) {
        if *xi > SUPPORT_EPS {
            res = res.max((gi - c).abs());
        } else {
            res = res.max((gi - c).max(0.0));
        }
    }
    res
}

/// Computes the stationarity certificate. `fd_samples > 0` additionally
/// cross-checks that many randomly chosen interior coordinates against
/// central finite differences with step 1e-6.
pub fn stationarity_certificate(
    state: &SolverState,
    eff: &EffectiveChannel,
    fd_samples: usize,
    fd_seed: u64,
) -> StationarityCertificate {
    let ctx = OracleCtx::new(eff, state);
    let mut per_block = BTreeMap::new();

    let mut worst = 0.0f64;
    for row in 0..state.pu.n_rows() {
        let x = state.pu.row(row).to_vec();
        let g: Vec<f64> = (0..ctx.n_u).map(|u| ctx.grad_pu(state, row, u)).collect();
        worst = worst.max(row_residual(&x, &g));
    }
    per_block.insert("p_u".to_string(), worst);

    let mut worst_v = 0.0f64;
    for st in 0..ctx.n_st {
        for u in 0..ctx.n_u {
            for y in 0..ctx.n_fb {
                let x = state.pv.row((st * ctx.n_u + u) * ctx.n_fb + y).to_vec();
                let g: Vec<f64> = (0..ctx.n_v)
                    .map(|v| ctx.grad_pv(state, st, u, y, v))
                    .collect();
                worst_v = worst_v.max(row_residual(&x, &g));
            }
        }
    }
    per_block.insert("p_v".to_string(), worst_v);

    // Posterior rows: derivative m / q must be constant on the support.
    let (m_uz, m_uzv) = ctx.masses(state);
    let mut worst_qu = 0.0f64;
    for z in 0..ctx.n_z {
        let x: Vec<f64> = (0..ctx.n_u).map(|u| state.qu.at(z, u)).collect();
        let g: Vec<f64> = (0..ctx.n_u)
            .map(|u| {
                let m = m_uz[u * ctx.n_z + z];
                if is_zero(m) {
                    0.0
                } else {
                    m / state.qu.at(z, u).max(1e-300)
                }
            })
            .collect();
        worst_qu = worst_qu.max(row_residual(&x, &g));
    }
    per_block.insert("q_u".to_string(), worst_qu);

    let mut worst_qv = 0.0f64;
    for u in 0..ctx.n_u {
        for z in 0..ctx.n_z {
            let x: Vec<f64> = (0..ctx.n_v)
                .map(|v| state.qv.at(u * ctx.n_z + z, v))
                .collect();
            let g: Vec<f64> = (0..ctx.n_v)
                .map(|v| {
                    let m = m_uzv[(u * ctx.n_z + z) * ctx.n_v + v];
                    if is_zero(m) {
                        0.0
                    } else {
                        m / state.qv.at(u * ctx.n_z + z, v).max(1e-300)
                    }
                })
                .collect();
            worst_qv = worst_qv.max(row_residual(&x, &g));
        }
    }
    per_block.insert("q_v".to_string(), worst_qv);

    // Estimator rows: derivative is -rho * a(shat).
    let a = ctx.est_coeffs(state);
    let mut worst_e = 0.0f64;
    for row in 0..ctx.n_u * ctx.n_v * ctx.n_z {
        let x = state.est.row(row).to_vec();
        let g: Vec<f64> = (0..ctx.n_shat)
            .map(|sh| -state.rho * a[row * ctx.n_shat + sh])
            .collect();
        worst_e = worst_e.max(row_residual(&x, &g));
    }
    per_block.insert("estimator".to_string(), worst_e);

    let residual = per_block.values().cloned().fold(0.0, f64::max);

    let fd_max_rel_err = if fd_samples > 0 {
        Some(fd_check(state, eff, fd_samples, fd_seed))
    } else {
        None
    };

    StationarityCertificate {
        residual,
        per_block,
        fd_max_rel_err,
    }
}

enum Coord {
    Pu(usize, usize),
    Pv(usize, usize),
    Qu(usize, usize),
    Qv(usize, usize),
    Est(usize, usize),
}

/// Central finite differences on randomly sampled interior coordinates (step
/// 1e-6). Returns the worst relative disagreement, with a small absolute
/// floor so near-zero derivatives do not blow up the ratio.
fn fd_check(state: &SolverState, eff: &EffectiveChannel, samples: usize, seed: u64) -> f64 {
    const H: f64 = 1e-6;
    let ctx = OracleCtx::new(eff, state);
    let mut g = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut tried = 0usize;
    let mut attempts = 0usize;
    let (m_uz, m_uzv) = ctx.masses(state);
    let a = ctx.est_coeffs(state);
    while tried < samples && attempts < samples * 50 + 100 {
        attempts += 1;
        let block = g.next_u64() % 5;
        let (analytic, coord) = match block {
            0 => {
                let row = (g.next_u64() as usize) % state.pu.n_rows();
                let u = (g.next_u64() as usize) % ctx.n_u;
                if state.pu.at(row, u) < 1e-3 {
                    continue;
                }
                (ctx.grad_pu(state, row, u), Coord::Pu(row, u))
            }
            1 => {
                let st = (g.next_u64() as usize) % ctx.n_st;
                let u = (g.next_u64() as usize) % ctx.n_u;
                let y = (g.next_u64() as usize) % ctx.n_fb;
                let v = (g.next_u64() as usize) % ctx.n_v;
                let r = (st * ctx.n_u + u) * ctx.n_fb + y;
                if state.pv.at(r, v) < 1e-3 {
                    continue;
                }
                (ctx.grad_pv(state, st, u, y, v), Coord::Pv(r, v))
            }
            2 => {
                let z = (g.next_u64() as usize) % ctx.n_z;
                let u = (g.next_u64() as usize) % ctx.n_u;
                if state.qu.at(z, u) < 1e-3 {
                    continue;
                }
                let m = m_uz[u * ctx.n_z + z];
                (m / state.qu.at(z, u), Coord::Qu(z, u))
            }
            3 => {
                let u = (g.next_u64() as usize) % ctx.n_u;
                let z = (g.next_u64() as usize) % ctx.n_z;
                let v = (g.next_u64() as usize) % ctx.n_v;
                if state.qv.at(u * ctx.n_z + z, v) < 1e-3 {
                    continue;
                }
                let m = m_uzv[(u * ctx.n_z + z) * ctx.n_v + v];
                (
                    m / state.qv.at(u * ctx.n_z + z, v),
                    Coord::Qv(u * ctx.n_z + z, v),
                )
            }
            _ => {
                let row = (g.next_u64() as usize) % (ctx.n_u * ctx.n_v * ctx.n_z);
                let sh = (g.next_u64() as usize) % ctx.n_shat;
                if state.est.at(row, sh) < 1e-3 {
                    continue;
                }
                (-state.rho * a[row * ctx.n_shat + sh], Coord::Est(row, sh))
            }
        };
        let mut s2 = state.clone();
        let set = |s2: &mut SolverState, c: &Coord, val: f64| match *c {
            Coord::Pu(r, i) => s2.pu.row_mut(r)[i] = val,
            Coord::Pv(r, i) => s2.pv.row_mut(r)[i] = val,
            Coord::Qu(r, i) => s2.qu.row_mut(r)[i] = val,
            Coord::Qv(r, i) => s2.qv.row_mut(r)[i] = val,
            Coord::Est(r, i) => s2.est.row_mut(r)[i] = val,
        };
        let base = match coord {
            Coord::Pu(r, i) => state.pu.at(r, i),
            Coord::Pv(r, i) => state.pv.at(r, i),
            Coord::Qu(r, i) => state.qu.at(r, i),
            Coord::Qv(r, i) => state.qv.at(r, i),
            Coord::Est(r, i) => state.est.at(r, i),
        };
        set(&mut s2, &coord, base + H);
        let l_plus = ctx.lagrangian(&s2);
        set(&mut s2, &coord, base - H);
        let l_minus = ctx.lagrangian(&s2);
        let fd = (l_plus - l_minus) / (2.0 * H);
        let denom = analytic.abs().max(fd.abs()).max(1e-3);
        worst = worst.max((fd - analytic).abs() / denom);
        tried += 1;
    }
    worst
}

/// Enumerates the input prior on a simplex grid, computing posteriors and the
/// estimator exactly per grid point, and returns the best Lagrangian value
/// found. Only feasible for tiny instances without side information; the
/// free-coordinate count is capped at 6 and the evaluation count at two
/// million.
pub fn exhaustive_small_solver(eff: &EffectiveChannel, rho: f64, resolution: usize) -> Result<f64> {
    let spec = &eff.spec;
    if spec.n_st != 1 {
        return Err(Error::TooLarge(spec.n_st, 1));
    }
    let n_u = eff.n_u();
    let free_dims = n_u - 1;
    if free_dims > 6 {
        return Err(Error::TooLarge(free_dims, 6));
    }
    let grid = compositions(resolution, n_u);
    if grid.len() > 2_000_000 {
        return Err(Error::TooLarge(grid.len(), 2_000_000));
    }
    let n_s = spec.n_s;
    let n_z = spec.n_z;
    let n_shat = spec.n_shat;
    let mut best = f64::NEG_INFINITY;
    for comp in &grid {
        let pu: Vec<f64> = comp
            .iter()
            .map(|&c| c as f64 / resolution as f64)
            .collect();
        // Joint masses p(u, z, s), p(u, z), p(z).
        let mut m_uzs = vec![0.0; n_u * n_z * n_s];
        let mut m_uz = vec![0.0; n_u * n_z];
        let mut m_z = vec![0.0; n_z];
        for u in 0..n_u {
            if pu[u] == 0.0 {
                continue;
            }
            for s in 0..n_s {
                let ws = spec.p_s[s] * pu[u];
                let krow = eff.kernel_row(u, 0, s);
                for z in 0..n_z {
                    let p = ws * krow[z];
                    m_uzs[(u * n_z + z) * n_s + s] += p;
                    m_uz[u * n_z + z] += p;
                    m_z[z] += p;
                }
            }
        }
        let mut l = Kahan::default();
        for u in 0..n_u {
            if pu[u] == 0.0 {
                continue;
            }
            for z in 0..n_z {
                let m = m_uz[u * n_z + z];
                if is_zero(m) {
                    continue;
                }
                // Information part with the exact posterior q(u|z) = m / m_z.
                l.add(m * (safe_ln(m / m_z[z]) - safe_ln(pu[u])));
                // Distortion part at the exact per-(u,z) minimizer.
                let mut best_e = f64::INFINITY;
                for sh in 0..n_shat {
                    let mut e = 0.0;
                    for s in 0..n_s {
                        e += m_uzs[(u * n_z + z) * n_s + s] * spec.distortion[s * n_shat + sh];
                    }
                    best_e = best_e.min(e);
                }
                l.add(-rho * best_e);
            }
        }
        best = best.max(l.value());
    }
    Ok(best)
}

/// All length-`k` compositions of `n` (nonnegative parts summing to `n`).
fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=n {
            prefix.push(first);
            rec(n - first, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    rec(n, k, &mut prefix, &mut out);
    out
}

/// A random channel without state (`|S| = |S_T| = 1`): one Dirichlet(1)
/// output row per input. Desk-scale instances for solver verification.
pub fn random_dmc(n_x: usize, n_z: usize, seed: u64) -> ChannelSpec {
    let mut g = SplitMix64::new(seed);
    let mut rows = Vec::with_capacity(n_x * n_z);
    for _ in 0..n_x {
        rows.extend(g.dirichlet1(n_z));
    }
    ChannelSpec {
        n_s: 1,
        n_st: 1,
        n_x,
        n_z,
        n_shat: 1,
        p_s: ProbVec::new(vec![1.0]).unwrap(),
        p_st_given_s: CondDist::new(vec![1], 1, vec![1.0]).unwrap(),
        p_z_given_xs: CondDist::new(vec![n_x, 1], n_z, rows).unwrap(),
        feedback_map: vec![0; n_z],
        distortion: vec![0.0],
        labels: None,
        meta: crate::channel::Meta {
            seed: Some(seed),
            builder: Some("random-dmc".into()),
            ..Default::default()
        },
    }
}

/// A random state-dependent channel with zero-diagonal random distortion, for
/// estimation-aware solver tests.
pub fn random_sddmc(
    n_s: usize,
    n_st: usize,
    n_x: usize,
    n_z: usize,
    n_shat: usize,
    seed: u64,
    feedback: bool,
) -> ChannelSpec {
    let mut g = SplitMix64::new(seed);
    let p_s = ProbVec::new(g.dirichlet1(n_s)).unwrap();
    let mut st_rows = Vec::with_capacity(n_s * n_st);
    for _ in 0..n_s {
        st_rows.extend(g.dirichlet1(n_st));
    }
    let mut k_rows = Vec::with_capacity(n_x * n_s * n_z);
    for _ in 0..n_x * n_s {
        k_rows.extend(g.dirichlet1(n_z));
    }
    let mut d = vec![0.0; n_s * n_shat];
    for s in 0..n_s {
        for sh in 0..n_shat {
            d[s * n_shat + sh] = if s % n_shat == sh {
                0.0
            } else {
                g.uniform(0.2, 1.0)
            };
        }
    }
    ChannelSpec {
        n_s,
        n_st,
        n_x,
        n_z,
        n_shat,
        p_s,
        p_st_given_s: CondDist::new(vec![n_s], n_st, st_rows).unwrap(),
        p_z_given_xs: CondDist::new(vec![n_x, n_s], n_z, k_rows).unwrap(),
        feedback_map: if feedback {
            (0..n_z).collect()
        } else {
            vec![0; n_z]
        },
        distortion: d,
        labels: None,
        meta: crate::channel::Meta {
            seed: Some(seed),
            builder: Some("random-sddmc".into()),
            ..Default::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::expand_shannon_strategy;

    fn plain_kernel(rows: Vec<f64>, n_x: usize, n_z: usize) -> CondDist {
        CondDist::new(vec![n_x], n_z, rows).unwrap()
    }

    #[test]
    fn ba_noiseless_is_ln_n() {
        for n in 2..=4 {
            let mut rows = vec![0.0; n * n];
            for i in 0..n {
                rows[i * n + i] = 1.0;
            }
            let c = ba_capacity(&plain_kernel(rows, n, n), 1e-9);
            assert!((c - (n as f64).ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn ba_bsc_closed_form() {
        let eps: f64 = 0.1;
        let rows = vec![1.0 - eps, eps, eps, 1.0 - eps];
        let c = ba_capacity(&plain_kernel(rows, 2, 2), 1e-9);
        let hb = -(eps * eps.ln() + (1.0 - eps) * (1.0 - eps).ln());
        let want = std::f64::consts::LN_2 - hb;
        assert!((c - want).abs() < 1e-6, "got {c}, want {want}");
    }

    #[test]
    fn ba_useless_channel_is_zero() {
        let rows = vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7];
        let c = ba_capacity(&plain_kernel(rows, 3, 2), 1e-9);
        assert!(c.abs() < 1e-8);
    }

    #[test]
    fn estimator_hamming_is_map() {
        // 2 contexts, 3 states, Hamming distortion: picks the posterior mode.
        let d = vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let joint = vec![0.1, 0.3, 0.05, 0.2, 0.05, 0.3];
        let est = brute_force_estimator(&joint, 2, 3, &d, 3);
        assert_eq!(est, vec![1, 2]);
    }

    #[test]
    fn estimator_squared_error_picks_nearest_grid_point() {
        let grid = [0.0, 1.0, 2.0, 3.0];
        let mut d = vec![0.0; 16];
        for s in 0..4 {
            for sh in 0..4 {
                d[s * 4 + sh] = (grid[s] - grid[sh]) * (grid[s] - grid[sh]);
            }
        }
        let joint = vec![0.3, 0.5, 0.2, 0.0];
        let est = brute_force_estimator(&joint, 1, 4, &d, 4);
        let mass: f64 = joint.iter().sum();
        let mean: f64 = joint.iter().zip(&grid).map(|(p, g)| p * g).sum::<f64>() / mass;
        let nearest = grid
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - mean).abs().partial_cmp(&(*b - mean).abs()).unwrap()
            })
            .unwrap()
            .0;
        assert_eq!(est[0], nearest);
    }

    #[test]
    fn estimator_point_mass() {
        let d = vec![1.0, 0.0, 1.0];
        let joint = vec![1.0];
        let est = brute_force_estimator(&joint, 1, 1, &d, 3);
        assert_eq!(est, vec![1]);
    }

    #[test]
    fn min_distortion_perfect_observation() {
        // x = 0 makes z = s exactly; Hamming distortion.
        let mut spec = random_sddmc(2, 1, 2, 2, 2, 3, false);
        let rows = vec![
            1.0, 0.0, // x=0, s=0
            0.0, 1.0, // x=0, s=1
            0.5, 0.5, // x=1, s=0
            0.5, 0.5, // x=1, s=1
        ];
        spec.p_z_given_xs = CondDist::new(vec![2, 2], 2, rows).unwrap();
        spec.distortion = vec![0.0, 1.0, 1.0, 0.0];
        let (x, v) = min_distortion_deterministic_x(&spec).unwrap();
        assert_eq!(x, 0);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn min_distortion_tie_break_lowest_index() {
        let mut spec = random_sddmc(2, 1, 3, 2, 2, 4, false);
        // Channel independent of x: all x tie.
        let row = vec![0.7, 0.3, 0.4, 0.6];
        let mut rows = Vec::new();
        for _ in 0..3 {
            rows.extend_from_slice(&row);
        }
        spec.p_z_given_xs = CondDist::new(vec![3, 2], 2, rows).unwrap();
        let (x, _) = min_distortion_deterministic_x(&spec).unwrap();
        assert_eq!(x, 0);
    }

    #[test]
    fn exhaustive_grid_close_to_ba_on_binary_channel() {
        let spec = random_dmc(2, 3, 5);
        let eff =
            expand_shannon_strategy(&spec, CausalityMode::StrictlyCausal, None, false).unwrap();
        let grid_best = exhaustive_small_solver(&eff, 0.0, 60).unwrap();
        let flat = CondDist::new(
            vec![spec.n_x],
            spec.n_z,
            spec.p_z_given_xs.data().to_vec(),
        )
        .unwrap();
        let cap = ba_capacity(&flat, 1e-10);
        assert!(
            (grid_best - cap).abs() < 1e-3,
            "grid {grid_best} vs capacity {cap}"
        );
    }

    #[test]
    fn exhaustive_degenerate_channel_matches_direct() {
        // Output independent of input; only estimation matters.
        let mut spec = random_sddmc(2, 1, 2, 2, 2, 9, false);
        let row = vec![0.6, 0.4, 0.1, 0.9];
        let mut rows = row.clone();
        rows.extend_from_slice(&row);
        spec.p_z_given_xs = CondDist::new(vec![2, 2], 2, rows).unwrap();
        let eff =
            expand_shannon_strategy(&spec, CausalityMode::StrictlyCausal, None, false).unwrap();
        let rho = 2.0;
        let best = exhaustive_small_solver(&eff, rho, 50).unwrap();
        let mut joint = vec![0.0; 2 * 2];
        for s in 0..2 {
            for z in 0..2 {
                joint[z * 2 + s] = spec.p_s[s] * row[s * 2 + z];
            }
        }
        let est = brute_force_estimator(&joint, 2, 2, &spec.distortion, 2);
        let mut e = 0.0;
        for z in 0..2 {
            for s in 0..2 {
                e += joint[z * 2 + s] * spec.distortion[s * 2 + est[z]];
            }
        }
        assert!(
            (best - (-rho * e)).abs() < 1e-9,
            "best {best} vs {}",
            -rho * e
        );
    }

    #[test]
    fn explosion_guard_on_large_instances() {
        let spec = random_dmc(9, 3, 1);
        let eff =
            expand_shannon_strategy(&spec, CausalityMode::StrictlyCausal, None, false).unwrap();
        assert!(matches!(
            exhaustive_small_solver(&eff, 0.0, 50),
            Err(Error::TooLarge(_, _))
        ));
    }
}
