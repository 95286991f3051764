//! Degraded broadcast channels: degradedness check, weighted sum-rate
//! solver, region sweeps, and the radar-plus-communication special case.
//!
//! The solved problem is the scalarized boundary of the two-receiver region
//! in the regime where receiver 2 is communication-only (no distortion
//! constraint, no feedback): maximize
//!
//! ```text
//! J = sum Q [ (1-a) ln( q1(u2|z2) / b1(u2|s_T) )
//!           + a ln( q2(u1|u2,z1) q3(v1|u1,u2,z1)
//!                   / ( b2(u1|u2,s_T) b3(v1|u1,u2,s_T,y') ) )
//!           - rho1 * sum e1(s1hat|u1,u2,v1,z1) d1(s, s1hat) ]
//! ```
//!
//! over seven blocks, with the same proximal coordinate ascent as the
//! point-to-point solver. `u1` indexes mappings from transmitter side
//! information to channel inputs; at the boundary weights (`a` equal to 0 or
//! 1) the linearly-entering prior blocks take proximal steps instead of
//! multiplicative ones. The stopping bound is built like the point-to-point
//! one, from the prior-block derivatives with averages replaced by maxima;
//! tracking the weighted entropy constants gives `B = (max structure) + a`.

use crate::channel::{BCChannelSpec, CausalityMode};
use crate::prob::{is_zero, normalize, safe_ln, CondDist, JointTensor, Kahan};
use crate::rng::{derive_seed, SplitMix64};
use crate::solver::{project_simplex, CDPoint, SolveFlags, TSchedule};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Result of the statistical degradedness check.
#[derive(Debug, Clone)]
pub struct DegradedCheck {
    pub degraded: bool,
    /// Max-norm residual of the factorization through the best row-stochastic
    /// degradation kernel.
    pub residual: f64,
    /// The fitted kernel `p(z2|z1)`, rows for unreachable `z1` left uniform.
    pub witness: CondDist,
}

/// Tests whether the channel factors as `p(z1,z2|x,s_T) =
/// p(z1|x,s_T) p(z2|z1)` after marginalizing the state against `p(s|s_T)`.
///
/// The least-squares fit decouples per `z1` row and per `z2` column with a
/// shared curvature, so projected least squares reduces to one exact simplex
/// projection per row.
pub fn check_degraded(spec: &BCChannelSpec, tol: f64) -> DegradedCheck {
    let (n_x, n_s, n_st, n_z1, n_z2) = (spec.n_x, spec.n_s, spec.n_st, spec.n_z1, spec.n_z2);
    let w = spec.state_joint();
    let p_st: Vec<f64> = (0..n_st)
        .map(|st| (0..n_s).map(|s| w[s * n_st + st]).sum())
        .collect();

    let mut joint = vec![0.0; n_x * n_st * n_z1 * n_z2];
    let mut marg1 = vec![0.0; n_x * n_st * n_z1];
    for x in 0..n_x {
        for st in 0..n_st {
            if is_zero(p_st[st]) {
                continue;
            }
            for s in 0..n_s {
                let ps = w[s * n_st + st] / p_st[st];
                if is_zero(ps) {
                    continue;
                }
                let row = spec.p_z1z2_given_xs.row(x * n_s + s);
                for z1 in 0..n_z1 {
                    for z2 in 0..n_z2 {
                        let p = ps * row[z1 * n_z2 + z2];
                        joint[((x * n_st + st) * n_z1 + z1) * n_z2 + z2] += p;
                        marg1[(x * n_st + st) * n_z1 + z1] += p;
                    }
                }
            }
        }
    }

    let mut witness = vec![0.0; n_z1 * n_z2];
    for z1 in 0..n_z1 {
        let mut curvature = 0.0;
        let mut target = vec![0.0; n_z2];
        for x in 0..n_x {
            for st in 0..n_st {
                let a1 = marg1[(x * n_st + st) * n_z1 + z1];
                curvature += a1 * a1;
                for z2 in 0..n_z2 {
                    target[z2] += a1 * joint[((x * n_st + st) * n_z1 + z1) * n_z2 + z2];
                }
            }
        }
        if is_zero(curvature) {
            witness[z1 * n_z2..(z1 + 1) * n_z2].fill(1.0 / n_z2 as f64);
            continue;
        }
        for t in &mut target {
            *t /= curvature;
        }
        let proj = project_simplex(&target);
        witness[z1 * n_z2..(z1 + 1) * n_z2].copy_from_slice(&proj);
    }

    let mut residual = 0.0f64;
    for x in 0..n_x {
        for st in 0..n_st {
            for z1 in 0..n_z1 {
                let a1 = marg1[(x * n_st + st) * n_z1 + z1];
                for z2 in 0..n_z2 {
                    let lhs = joint[((x * n_st + st) * n_z1 + z1) * n_z2 + z2];
                    residual = residual.max((lhs - a1 * witness[z1 * n_z2 + z2]).abs());
                }
            }
        }
    }
    DegradedCheck {
        degraded: residual <= tol,
        residual,
        witness: CondDist::new(vec![n_z1], n_z2, witness).expect("witness rows"),
    }
}

/// Options for the weighted-sum solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcSolveOptions {
    pub delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub t_schedule: TSchedule,
    /// Common-layer auxiliary size; defaults to `min(|X||S_T|, |Z2|) + 3`.
    pub n_u2: Option<usize>,
    /// Refinement-layer auxiliary size; defaults to `|S_T| + 2`, or 1 without
    /// side information.
    pub n_v1: Option<usize>,
    pub strategy_cap: Option<usize>,
}

impl Default for BcSolveOptions {
    fn default() -> Self {
        BcSolveOptions {
            delta: 1e-3,
            max_iters: 20_000,
            seed: 0,
            t_schedule: TSchedule::default(),
            n_u2: None,
            n_v1: None,
            strategy_cap: None,
        }
    }
}

/// One solved boundary point of the weighted-sum problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionPoint {
    pub alpha: f64,
    pub rho1: f64,
    /// Private rate at receiver 1 in nats.
    pub r1_nats: f64,
    /// Common-plus-receiver-2 rate in nats; how it splits between the public
    /// and private messages is application-defined.
    pub r0r2_nats: f64,
    pub d1: f64,
    pub iterations: usize,
    pub gap: f64,
    pub l: f64,
    pub b: f64,
    pub flags: SolveFlags,
}

/// The expanded broadcast instance: strategy table for `u1` and a cached
/// receiver-1 marginal of the joint kernel.
#[derive(Debug, Clone)]
pub struct BCEffective {
    pub spec: BCChannelSpec,
    pub mode: CausalityMode,
    /// `mapping[u1][s_T]` is the transmitted input index.
    pub mapping: Vec<Vec<usize>>,
    pub truncated: bool,
    /// `k1[(x, s), z1] = sum_z2 p(z1, z2 | x, s)`.
    k1: Vec<f64>,
}

impl BCEffective {
    pub fn n_u1(&self) -> usize {
        self.mapping.len()
    }

    #[inline]
    fn k1_at(&self, x: usize, s: usize, z1: usize) -> f64 {
        self.k1[(x * self.spec.n_s + s) * self.spec.n_z1 + z1]
    }

    #[inline]
    fn kx_row(&self, x: usize, s: usize) -> &[f64] {
        self.spec.p_z1z2_given_xs.row(x * self.spec.n_s + s)
    }
}

/// Expands a broadcast spec: strictly causal mode uses the constant maps,
/// causal and non-causal modes enumerate all `|X|^|S_T|` maps.
pub fn expand_bc(
    spec: &BCChannelSpec,
    mode: CausalityMode,
    cap: Option<usize>,
    allow_truncation: bool,
) -> Result<BCEffective> {
    spec.validate()?;
    let cap = cap.unwrap_or(crate::channel::DEFAULT_STRATEGY_CAP);
    let (mapping, truncated) = match mode {
        CausalityMode::StrictlyCausal => (
            (0..spec.n_x)
                .map(|x| vec![x; spec.n_st])
                .collect::<Vec<_>>(),
            false,
        ),
        _ => {
            let total = (spec.n_x as u128).checked_pow(spec.n_st as u32);
            let total_usize = total.and_then(|t| usize::try_from(t).ok());
            let (n_u1, truncated) = match total_usize {
                Some(t) if t <= cap => (t, false),
                _ if allow_truncation => (cap, true),
                _ => {
                    return Err(Error::StrategyExplosion(
                        total_usize.unwrap_or(usize::MAX),
                        cap,
                    ))
                }
            };
            let mut maps = Vec::with_capacity(n_u1);
            for u in 0..n_u1 {
                let mut m = Vec::with_capacity(spec.n_st);
                let mut rest = u;
                for _ in 0..spec.n_st {
                    m.push(rest % spec.n_x);
                    rest /= spec.n_x;
                }
                maps.push(m);
            }
            (maps, truncated)
        }
    };
    let mut k1 = vec![0.0; spec.n_x * spec.n_s * spec.n_z1];
    for x in 0..spec.n_x {
        for s in 0..spec.n_s {
            let row = spec.p_z1z2_given_xs.row(x * spec.n_s + s);
            for z1 in 0..spec.n_z1 {
                for z2 in 0..spec.n_z2 {
                    k1[(x * spec.n_s + s) * spec.n_z1 + z1] += row[z1 * spec.n_z2 + z2];
                }
            }
        }
    }
    Ok(BCEffective {
        spec: spec.clone(),
        mode,
        mapping,
        truncated,
        k1,
    })
}

fn default_n_u2(spec: &BCChannelSpec) -> usize {
    (spec.n_x * spec.n_st).min(spec.n_z2) + 3
}

fn default_n_v1(n_st: usize) -> usize {
    if n_st == 1 {
        1
    } else {
        n_st + 2
    }
}

/// Weight below which a block is treated as entering the objective linearly
/// and updated by a proximal step instead of the multiplicative rule.
const LINEAR_EPS: f64 = 1e-9;

const REVIVAL_FLOOR: f64 = 1e-250;

fn floor_row(row: &mut [f64]) {
    let mut floored = false;
    for x in row.iter_mut() {
        if *x < REVIVAL_FLOOR {
            *x = REVIVAL_FLOOR;
            floored = true;
        }
    }
    if floored {
        let sum: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

/// Exponentiate-and-normalize a log-domain row with a max shift, then floor.
fn exp_normalize(row: &[f64], out: &mut [f64], underflow: &mut usize) {
    let m = row
        .iter()
        .cloned()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        *underflow += 1;
        let n = out.len();
        out.fill(1.0 / n as f64);
        return;
    }
    let raw: Vec<f64> = row
        .iter()
        .map(|&x| if x.is_finite() { (x - m).exp() } else { 0.0 })
        .collect();
    let (p, flag) = normalize(&raw);
    if flag {
        *underflow += 1;
    }
    out.copy_from_slice(p.as_slice());
    floor_row(out);
}

/// The seven coordinate blocks of the weighted-sum problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BCSolverState {
    pub mode: CausalityMode,
    pub alpha: f64,
    pub rho1: f64,
    /// Rows: per `s_T` (non-causal) or one shared row; out `u2`.
    pub b1: CondDist,
    /// Rows `(u2, s_T)` or `(u2)`; out `u1`.
    pub b2: CondDist,
    /// Rows `(u1, u2, s_T, y')`; out `v1`.
    pub b3: CondDist,
    /// Rows `z2`; out `u2`.
    pub q1: CondDist,
    /// Rows `(u2, z1)`; out `u1`.
    pub q2: CondDist,
    /// Rows `(u1, u2, z1)`; out `v1`.
    pub q3: CondDist,
    /// Rows `(u1, u2, v1, z1)`; out `s1hat`.
    pub e1: CondDist,
    pub iteration: usize,
    pub l_value: f64,
    pub b_value: f64,
    pub t_schedule: TSchedule,
    pub t0_resolved: Option<f64>,
    pub estimator_optimal: bool,
    pub flags: SolveFlags,
    pub b_violations: usize,
    pub monotonicity_violations: usize,
}

struct Dims {
    n_s: usize,
    n_st: usize,
    n_u1: usize,
    n_u2: usize,
    n_v1: usize,
    n_z1: usize,
    n_z2: usize,
    n_fb: usize,
    n_shat: usize,
}

impl BCSolverState {
    fn dims(&self, eff: &BCEffective) -> Dims {
        Dims {
            n_s: eff.spec.n_s,
            n_st: eff.spec.n_st,
            n_u1: eff.n_u1(),
            n_u2: self.b1.out_size(),
            n_v1: self.b3.out_size(),
            n_z1: eff.spec.n_z1,
            n_z2: eff.spec.n_z2,
            n_fb: eff.spec.n_fb(),
            n_shat: eff.spec.n_shat1,
        }
    }

    #[inline]
    fn b1_at(&self, st: usize, u2: usize) -> f64 {
        match self.mode {
            CausalityMode::NonCausal => self.b1.at(st, u2),
            _ => self.b1.at(0, u2),
        }
    }

    #[inline]
    fn b2_row_index(&self, u2: usize, st: usize, n_st: usize) -> usize {
        match self.mode {
            CausalityMode::NonCausal => u2 * n_st + st,
            _ => u2,
        }
    }

    #[inline]
    fn b3_row_index(&self, d: &Dims, u1: usize, u2: usize, st: usize, y: usize) -> usize {
        ((u1 * d.n_u2 + u2) * d.n_st + st) * d.n_fb + y
    }

    /// Estimator-weighted distortion per `((u1, u2, v1, z1), s)`.
    fn edot(&self, eff: &BCEffective) -> Vec<f64> {
        let d = self.dims(eff);
        let n_rows = d.n_u1 * d.n_u2 * d.n_v1 * d.n_z1;
        let mut out = vec![0.0; n_rows * d.n_s];
        for row in 0..n_rows {
            let e = self.e1.row(row);
            for s in 0..d.n_s {
                let dist = &eff.spec.distortion[s * d.n_shat..(s + 1) * d.n_shat];
                let mut acc = 0.0;
                for sh in 0..d.n_shat {
                    acc += e[sh] * dist[sh];
                }
                out[row * d.n_s + s] = acc;
            }
        }
        out
    }

    /// `rfold[(u2, x, s, z1)] = sum_z2 p(z1, z2|x, s) ln q1(u2|z2)`.
    fn q1_fold(&self, eff: &BCEffective) -> Vec<f64> {
        let d = self.dims(eff);
        let n_x = eff.spec.n_x;
        let mut out = vec![0.0; d.n_u2 * n_x * d.n_s * d.n_z1];
        for u2 in 0..d.n_u2 {
            let lnq1: Vec<f64> = (0..d.n_z2).map(|z2| safe_ln(self.q1.at(z2, u2))).collect();
            for x in 0..n_x {
                for s in 0..d.n_s {
                    let kx = eff.kx_row(x, s);
                    for z1 in 0..d.n_z1 {
                        let mut acc = 0.0;
                        for z2 in 0..d.n_z2 {
                            let k = kx[z1 * d.n_z2 + z2];
                            if !is_zero(k) {
                                acc += k * lnq1[z2];
                            }
                        }
                        out[((u2 * n_x + x) * d.n_s + s) * d.n_z1 + z1] = acc;
                    }
                }
            }
        }
        out
    }

    /// Refreshes the three posteriors to the exact conditionals of the
    /// current joint.
    pub fn update_posteriors(&mut self, eff: &BCEffective) {
        let d = self.dims(eff);
        let w = eff.spec.state_joint();
        let phi = &eff.spec.feedback_map;

        let mut m1 = vec![0.0; d.n_u2 * d.n_z2];
        let mut m2 = vec![0.0; d.n_u2 * d.n_z1 * d.n_u1];
        let mut m3 = vec![0.0; d.n_u1 * d.n_u2 * d.n_z1 * d.n_v1];
        for u2 in 0..d.n_u2 {
            for st in 0..d.n_st {
                let pb1 = self.b1_at(st, u2);
                if is_zero(pb1) {
                    continue;
                }
                let b2row = self.b2.row(self.b2_row_index(u2, st, d.n_st));
                for u1 in 0..d.n_u1 {
                    let pb2 = b2row[u1];
                    if is_zero(pb2) {
                        continue;
                    }
                    let x = eff.mapping[u1][st];
                    for s in 0..d.n_s {
                        let ws = w[s * d.n_st + st] * pb1 * pb2;
                        if is_zero(ws) {
                            continue;
                        }
                        let kx = eff.kx_row(x, s);
                        for z1 in 0..d.n_z1 {
                            let k1 = eff.k1_at(x, s, z1);
                            if is_zero(k1) {
                                continue;
                            }
                            let base = ws * k1;
                            m2[(u2 * d.n_z1 + z1) * d.n_u1 + u1] += base;
                            let b3row =
                                self.b3.row(self.b3_row_index(&d, u1, u2, st, phi[z1]));
                            let dst =
                                &mut m3[((u1 * d.n_u2 + u2) * d.n_z1 + z1) * d.n_v1..];
                            for v1 in 0..d.n_v1 {
                                dst[v1] += base * b3row[v1];
                            }
                            for z2 in 0..d.n_z2 {
                                m1[u2 * d.n_z2 + z2] += ws * kx[z1 * d.n_z2 + z2];
                            }
                        }
                    }
                }
            }
        }

        let mut degenerate = 0usize;
        let mut q1 = vec![0.0; d.n_z2 * d.n_u2];
        for z2 in 0..d.n_z2 {
            let col: Vec<f64> = (0..d.n_u2).map(|u2| m1[u2 * d.n_z2 + z2]).collect();
            let (p, flag) = normalize(&col);
            if flag {
                degenerate += 1;
            }
            q1[z2 * d.n_u2..(z2 + 1) * d.n_u2].copy_from_slice(p.as_slice());
        }
        self.q1 = CondDist::new(vec![d.n_z2], d.n_u2, q1).expect("posterior rows");

        let mut q2 = vec![0.0; d.n_u2 * d.n_z1 * d.n_u1];
        for row in 0..d.n_u2 * d.n_z1 {
            let (p, flag) = normalize(&m2[row * d.n_u1..(row + 1) * d.n_u1]);
            if flag {
                degenerate += 1;
            }
            q2[row * d.n_u1..(row + 1) * d.n_u1].copy_from_slice(p.as_slice());
        }
        self.q2 = CondDist::new(vec![d.n_u2, d.n_z1], d.n_u1, q2).expect("posterior rows");

        let mut q3 = vec![0.0; d.n_u1 * d.n_u2 * d.n_z1 * d.n_v1];
        for row in 0..d.n_u1 * d.n_u2 * d.n_z1 {
            let (p, flag) = normalize(&m3[row * d.n_v1..(row + 1) * d.n_v1]);
            if flag {
                degenerate += 1;
            }
            q3[row * d.n_v1..(row + 1) * d.n_v1].copy_from_slice(p.as_slice());
        }
        self.q3 =
            CondDist::new(vec![d.n_u1, d.n_u2, d.n_z1], d.n_v1, q3).expect("posterior rows");
        self.flags.degenerate_rows += degenerate;
    }

    /// One full coordinate pass: prior blocks, estimator, posterior refresh,
    /// objective and bound. Assumes the posteriors are the exact conditionals
    /// of the current priors on entry.
    ///
    /// The three prior exponents come from one fused sweep: each update's
    /// dependence on the other new priors reduces to additive row constants
    /// (killed by normalization for the multiplicative rules and by the
    /// shift-invariance of the simplex projection for the proximal ones), so
    /// the fused pass reproduces the sequential updates exactly.
    pub fn iterate(&mut self, eff: &BCEffective) {
        self.iteration += 1;
        let d = self.dims(eff);
        let w = eff.spec.state_joint();
        let p_st: Vec<f64> = (0..d.n_st)
            .map(|st| (0..d.n_s).map(|s| w[s * d.n_st + st]).sum())
            .collect();
        let phi = &eff.spec.feedback_map;
        let alpha = self.alpha;
        let rho1 = self.rho1;
        let edot = self.edot(eff);
        let rfold = self.q1_fold(eff);
        let n_x = eff.spec.n_x;

        let n_b3_rows = d.n_u1 * d.n_u2 * d.n_st * d.n_fb;
        let mut num3 = vec![0.0; n_b3_rows * d.n_v1];
        let mut den3 = vec![0.0; n_b3_rows];
        let mut num2 = vec![0.0; d.n_u2 * d.n_st * d.n_u1];
        let mut num1 = vec![0.0; d.n_st * d.n_u2];

        for u2 in 0..d.n_u2 {
            for st in 0..d.n_st {
                let b2row_idx = self.b2_row_index(u2, st, d.n_st);
                let mut row_n1 = Kahan::default();
                for u1 in 0..d.n_u1 {
                    let x = eff.mapping[u1][st];
                    let mut cell2 = Kahan::default();
                    for s in 0..d.n_s {
                        let ws = w[s * d.n_st + st];
                        if is_zero(ws) {
                            continue;
                        }
                        for z1 in 0..d.n_z1 {
                            let k1 = eff.k1_at(x, s, z1);
                            if is_zero(k1) {
                                continue;
                            }
                            let base = ws * k1;
                            let y = phi[z1];
                            let q1part = (1.0 - alpha)
                                * ws
                                * rfold[((u2 * n_x + x) * d.n_s + s) * d.n_z1 + z1];
                            let lnq2 = safe_ln(self.q2.at(u2 * d.n_z1 + z1, u1));
                            let b3_idx = self.b3_row_index(&d, u1, u2, st, y);
                            let b3row = self.b3.row(b3_idx);
                            let q3row = self.q3.row((u1 * d.n_u2 + u2) * d.n_z1 + z1);
                            den3[b3_idx] += base;
                            let mut cell_v = 0.0;
                            for v1 in 0..d.n_v1 {
                                let e = edot[(((u1 * d.n_u2 + u2) * d.n_v1 + v1) * d.n_z1
                                    + z1)
                                    * d.n_s
                                    + s];
                                let av = alpha * safe_ln(q3row[v1]) - rho1 * e;
                                num3[b3_idx * d.n_v1 + v1] += base * av;
                                let b3v = b3row[v1];
                                if !is_zero(b3v) {
                                    cell_v += b3v * (av - alpha * safe_ln(b3v));
                                }
                            }
                            cell2.add(q1part + base * (alpha * lnq2 + cell_v));
                        }
                    }
                    let cell2 = cell2.value();
                    num2[(u2 * d.n_st + st) * d.n_u1 + u1] += cell2;
                    let pb2 = self.b2.at(b2row_idx, u1);
                    if !is_zero(pb2) {
                        row_n1.add(pb2 * (cell2 - alpha * p_st[st] * safe_ln(pb2)));
                    }
                }
                num1[st * d.n_u2 + u2] = row_n1.value();
            }
        }

        let shared = !matches!(self.mode, CausalityMode::NonCausal);

        // b1 update.
        {
            let n_rows = self.b1.n_rows();
            let mut data = vec![0.0; n_rows * d.n_u2];
            let weight_lin = 1.0 - alpha;
            for r in 0..n_rows {
                let g: Vec<f64> = (0..d.n_u2)
                    .map(|u2| {
                        if shared {
                            (0..d.n_st).map(|st| num1[st * d.n_u2 + u2]).sum::<f64>()
                        } else if is_zero(p_st[r]) {
                            f64::NEG_INFINITY
                        } else {
                            num1[r * d.n_u2 + u2] / p_st[r]
                        }
                    })
                    .collect();
                let prev = self.b1.row(r).to_vec();
                let out = &mut data[r * d.n_u2..(r + 1) * d.n_u2];
                if weight_lin < LINEAR_EPS {
                    self.prox_row(&g, &prev, out);
                } else {
                    let scaled: Vec<f64> = g.iter().map(|x| x / weight_lin).collect();
                    exp_normalize(&scaled, out, &mut self.flags.underflow_rows);
                }
            }
            self.b1 = CondDist::new(self.b1.cond_sizes().to_vec(), d.n_u2, data).expect("b1");
        }

        // b2 update.
        {
            let n_rows = self.b2.n_rows();
            let mut data = vec![0.0; n_rows * d.n_u1];
            for r in 0..n_rows {
                let (u2, sts): (usize, Vec<usize>) = if shared {
                    (r, (0..d.n_st).collect())
                } else {
                    (r / d.n_st, vec![r % d.n_st])
                };
                let g: Vec<f64> = (0..d.n_u1)
                    .map(|u1| {
                        let mut acc = 0.0;
                        let mut denom = 0.0;
                        for &st in &sts {
                            acc += num2[(u2 * d.n_st + st) * d.n_u1 + u1];
                            denom += p_st[st];
                        }
                        if is_zero(denom) {
                            f64::NEG_INFINITY
                        } else {
                            acc / denom
                        }
                    })
                    .collect();
                let prev = self.b2.row(r).to_vec();
                let out = &mut data[r * d.n_u1..(r + 1) * d.n_u1];
                if alpha < LINEAR_EPS {
                    self.prox_row(&g, &prev, out);
                } else {
                    let scaled: Vec<f64> = g.iter().map(|x| x / alpha).collect();
                    exp_normalize(&scaled, out, &mut self.flags.underflow_rows);
                }
            }
            self.b2 = CondDist::new(self.b2.cond_sizes().to_vec(), d.n_u1, data).expect("b2");
        }

        // b3 update.
        {
            let mut data = vec![0.0; n_b3_rows * d.n_v1];
            for r in 0..n_b3_rows {
                if is_zero(den3[r]) {
                    data[r * d.n_v1..(r + 1) * d.n_v1].fill(1.0 / d.n_v1 as f64);
                    continue;
                }
                let g: Vec<f64> = (0..d.n_v1)
                    .map(|v1| num3[r * d.n_v1 + v1] / den3[r])
                    .collect();
                let prev = self.b3.row(r).to_vec();
                let out = &mut data[r * d.n_v1..(r + 1) * d.n_v1];
                if alpha < LINEAR_EPS {
                    self.prox_row(&g, &prev, out);
                } else {
                    let scaled: Vec<f64> = g.iter().map(|x| x / alpha).collect();
                    exp_normalize(&scaled, out, &mut self.flags.underflow_rows);
                }
            }
            self.b3 = CondDist::new(vec![d.n_u1, d.n_u2, d.n_st, d.n_fb], d.n_v1, data)
                .expect("b3");
        }

        self.update_estimator(eff);
        self.update_posteriors(eff);
        let edot = self.edot(eff);
        let rfold = self.q1_fold(eff);
        self.l_value = self.objective(eff, &edot, &rfold);
        self.b_value = self.bound(eff, &edot, &rfold);
    }

    /// Proximal ascent step on a linearly-entering row: project
    /// `prev + g / T` onto the simplex.
    fn prox_row(&mut self, g: &[f64], prev: &[f64], out: &mut [f64]) {
        if self.t0_resolved.is_none() {
            let scale = g
                .iter()
                .cloned()
                .filter(|x| x.is_finite())
                .fold(0.0f64, |a, b| a.max(b.abs()));
            self.t0_resolved = Some(scale.max(1e-8));
        }
        let t = self
            .t_schedule
            .value(self.t0_resolved.unwrap(), self.iteration)
            .max(1e-300);
        let shifted: Vec<f64> = prev
            .iter()
            .zip(g)
            .map(|(&p, &gi)| if gi.is_finite() { p + gi / t } else { p })
            .collect();
        let proj = project_simplex(&shifted);
        out.copy_from_slice(&proj);
        floor_row(out);
    }

    /// Proximal estimator update with reach-normalized coefficients and
    /// counterfactual best responses on unreachable rows, mirroring the
    /// point-to-point solver.
    pub fn update_estimator(&mut self, eff: &BCEffective) {
        let d = self.dims(eff);
        let w = eff.spec.state_joint();
        let phi = &eff.spec.feedback_map;
        let n_rows = d.n_u1 * d.n_u2 * d.n_v1 * d.n_z1;
        let mut a = vec![0.0; n_rows * d.n_shat];
        let mut mass = vec![0.0; n_rows];
        for u2 in 0..d.n_u2 {
            for st in 0..d.n_st {
                let pb1 = self.b1_at(st, u2);
                if is_zero(pb1) {
                    continue;
                }
                let b2row = self.b2.row(self.b2_row_index(u2, st, d.n_st));
                for u1 in 0..d.n_u1 {
                    let pb2 = b2row[u1];
                    if is_zero(pb2) {
                        continue;
                    }
                    let x = eff.mapping[u1][st];
                    for s in 0..d.n_s {
                        let ws = w[s * d.n_st + st] * pb1 * pb2;
                        if is_zero(ws) {
                            continue;
                        }
                        let dist = &eff.spec.distortion[s * d.n_shat..(s + 1) * d.n_shat];
                        for z1 in 0..d.n_z1 {
                            let base = ws * eff.k1_at(x, s, z1);
                            if is_zero(base) {
                                continue;
                            }
                            let b3row =
                                self.b3.row(self.b3_row_index(&d, u1, u2, st, phi[z1]));
                            for v1 in 0..d.n_v1 {
                                let bv = base * b3row[v1];
                                if is_zero(bv) {
                                    continue;
                                }
                                let row =
                                    ((u1 * d.n_u2 + u2) * d.n_v1 + v1) * d.n_z1 + z1;
                                mass[row] += bv;
                                for sh in 0..d.n_shat {
                                    a[row * d.n_shat + sh] += bv * dist[sh];
                                }
                            }
                        }
                    }
                }
            }
        }

        if self.t0_resolved.is_none() {
            let mut amax = 0.0f64;
            for row in 0..n_rows {
                if mass[row] > 0.0 {
                    for sh in 0..d.n_shat {
                        amax = amax.max(a[row * d.n_shat + sh] / mass[row]);
                    }
                }
            }
            self.t0_resolved = Some(amax.max(1e-8));
        }
        let t = self
            .t_schedule
            .value(self.t0_resolved.unwrap(), self.iteration)
            .max(1e-300);

        let mut all_optimal = true;
        let mut cf = vec![0.0; d.n_shat];
        for row in 0..n_rows {
            if is_zero(mass[row]) {
                let u1 = row / (d.n_u2 * d.n_v1 * d.n_z1);
                let u2 = (row / (d.n_v1 * d.n_z1)) % d.n_u2;
                let v1 = (row / d.n_z1) % d.n_v1;
                let z1 = row % d.n_z1;
                cf.fill(0.0);
                let mut any = false;
                for st in 0..d.n_st {
                    let x = eff.mapping[u1][st];
                    let b3v = self.b3.at(self.b3_row_index(&d, u1, u2, st, phi[z1]), v1);
                    if is_zero(b3v) {
                        continue;
                    }
                    for s in 0..d.n_s {
                        let base = w[s * d.n_st + st] * eff.k1_at(x, s, z1) * b3v;
                        if is_zero(base) {
                            continue;
                        }
                        any = true;
                        for sh in 0..d.n_shat {
                            cf[sh] += base * eff.spec.distortion[s * d.n_shat + sh];
                        }
                    }
                }
                if any {
                    let mut best = 0usize;
                    for sh in 1..d.n_shat {
                        if cf[sh] < cf[best] {
                            best = sh;
                        }
                    }
                    let r = self.e1.row_mut(row);
                    r.fill(0.0);
                    r[best] = 1.0;
                }
                continue;
            }
            let arow: Vec<f64> = a[row * d.n_shat..(row + 1) * d.n_shat]
                .iter()
                .map(|x| x / mass[row])
                .collect();
            let amin = arow.iter().cloned().fold(f64::INFINITY, f64::min);
            let prev = self.e1.row(row);
            let dot: f64 = arow.iter().zip(prev).map(|(x, p)| x * p).sum();
            if dot <= amin + 1e-12 {
                continue;
            }
            let shifted: Vec<f64> = prev
                .iter()
                .zip(&arow)
                .map(|(&p, &ai)| p - ai / t)
                .collect();
            let proj = project_simplex(&shifted);
            let new_dot: f64 = arow.iter().zip(&proj).map(|(x, p)| x * p).sum();
            if new_dot > amin + 1e-12 {
                all_optimal = false;
            }
            self.e1.row_mut(row).copy_from_slice(&proj);
        }
        self.estimator_optimal = all_optimal;
    }

    /// The weighted Lagrangian at the current state.
    pub fn compute_objective(&self, eff: &BCEffective) -> f64 {
        let edot = self.edot(eff);
        let rfold = self.q1_fold(eff);
        self.objective(eff, &edot, &rfold)
    }

    /// The stopping bound at the current state.
    pub fn compute_bound(&self, eff: &BCEffective) -> f64 {
        let edot = self.edot(eff);
        let rfold = self.q1_fold(eff);
        self.bound(eff, &edot, &rfold)
    }

    fn objective(&self, eff: &BCEffective, edot: &[f64], rfold: &[f64]) -> f64 {
        let d = self.dims(eff);
        let w = eff.spec.state_joint();
        let phi = &eff.spec.feedback_map;
        let alpha = self.alpha;
        let rho1 = self.rho1;
        let n_x = eff.spec.n_x;
        let mut acc = Kahan::default();
        for u2 in 0..d.n_u2 {
            for st in 0..d.n_st {
                let pb1 = self.b1_at(st, u2);
                if is_zero(pb1) {
                    continue;
                }
                let lnb1 = safe_ln(pb1);
                let b2row = self.b2.row(self.b2_row_index(u2, st, d.n_st));
                for u1 in 0..d.n_u1 {
                    let pb2 = b2row[u1];
                    if is_zero(pb2) {
                        continue;
                    }
                    let lnb2 = safe_ln(pb2);
                    let x = eff.mapping[u1][st];
                    for s in 0..d.n_s {
                        let ws = w[s * d.n_st + st] * pb1 * pb2;
                        if is_zero(ws) {
                            continue;
                        }
                        // Receiver-2 part, averaged over the joint output.
                        acc.add(
                            (1.0 - alpha)
                                * ws
                                * rfold[((u2 * n_x + x) * d.n_s + s) * d.n_z1..]
                                    [..d.n_z1]
                                    .iter()
                                    .sum::<f64>(),
                        );
                        for z1 in 0..d.n_z1 {
                            let k1 = eff.k1_at(x, s, z1);
                            if is_zero(k1) {
                                continue;
                            }
                            let base = ws * k1;
                            let y = phi[z1];
                            acc.add(-base * (1.0 - alpha) * lnb1);
                            let lnq2 = safe_ln(self.q2.at(u2 * d.n_z1 + z1, u1));
                            acc.add(base * alpha * (lnq2 - lnb2));
                            let b3row = self.b3.row(self.b3_row_index(&d, u1, u2, st, y));
                            let q3row = self.q3.row((u1 * d.n_u2 + u2) * d.n_z1 + z1);
                            for v1 in 0..d.n_v1 {
                                let b3v = b3row[v1];
                                if is_zero(b3v) {
                                    continue;
                                }
                                let e = edot[(((u1 * d.n_u2 + u2) * d.n_v1 + v1) * d.n_z1
                                    + z1)
                                    * d.n_s
                                    + s];
                                acc.add(
                                    base * b3v
                                        * (alpha * (safe_ln(q3row[v1]) - safe_ln(b3v))
                                            - rho1 * e),
                                );
                            }
                        }
                    }
                }
            }
        }
        acc.value()
    }

    fn bound(&self, eff: &BCEffective, edot: &[f64], rfold: &[f64]) -> f64 {
        let d = self.dims(eff);
        let w = eff.spec.state_joint();
        let phi = &eff.spec.feedback_map;
        let alpha = self.alpha;
        let rho1 = self.rho1;
        let n_x = eff.spec.n_x;
        let shared = !matches!(self.mode, CausalityMode::NonCausal);

        let mut inner = vec![f64::NEG_INFINITY; d.n_u2 * d.n_u1 * d.n_st];
        let mut buf = vec![0.0; d.n_fb * d.n_v1];
        let mut reach = vec![false; d.n_fb];
        for u2 in 0..d.n_u2 {
            for st in 0..d.n_st {
                if is_zero(self.b1_at(st, u2)) {
                    continue;
                }
                let lnb1 = safe_ln(self.b1_at(st, u2));
                let b2row = self.b2.row(self.b2_row_index(u2, st, d.n_st));
                for u1 in 0..d.n_u1 {
                    if is_zero(b2row[u1]) {
                        continue;
                    }
                    let lnb2 = safe_ln(b2row[u1]);
                    let x = eff.mapping[u1][st];
                    buf.fill(0.0);
                    reach.fill(false);
                    for s in 0..d.n_s {
                        let ws = w[s * d.n_st + st];
                        if is_zero(ws) {
                            continue;
                        }
                        for z1 in 0..d.n_z1 {
                            let k1 = eff.k1_at(x, s, z1);
                            if is_zero(k1) {
                                continue;
                            }
                            let base = ws * k1;
                            let y = phi[z1];
                            reach[y] = true;
                            // z2-averaged receiver-2 term enters as an
                            // absolute contribution, the rest is weighted by
                            // the receiver-1 marginal.
                            let q1term = (1.0 - alpha)
                                * ws
                                * rfold[((u2 * n_x + x) * d.n_s + s) * d.n_z1 + z1];
                            let common = alpha
                                * (safe_ln(self.q2.at(u2 * d.n_z1 + z1, u1)) - lnb2)
                                - (1.0 - alpha) * lnb1
                                - alpha;
                            let b3row = self.b3.row(self.b3_row_index(&d, u1, u2, st, y));
                            let q3row = self.q3.row((u1 * d.n_u2 + u2) * d.n_z1 + z1);
                            for v1 in 0..d.n_v1 {
                                if is_zero(b3row[v1]) {
                                    continue;
                                }
                                let e = edot[(((u1 * d.n_u2 + u2) * d.n_v1 + v1) * d.n_z1
                                    + z1)
                                    * d.n_s
                                    + s];
                                let f = common
                                    + alpha * (safe_ln(q3row[v1]) - safe_ln(b3row[v1]))
                                    - rho1 * e;
                                buf[y * d.n_v1 + v1] += q1term + base * f;
                            }
                        }
                    }
                    let mut sum_y = Kahan::default();
                    for y in 0..d.n_fb {
                        if !reach[y] {
                            continue;
                        }
                        let b3row = self.b3.row(self.b3_row_index(&d, u1, u2, st, y));
                        let mut best = f64::NEG_INFINITY;
                        for v1 in 0..d.n_v1 {
                            if !is_zero(b3row[v1]) {
                                best = best.max(buf[y * d.n_v1 + v1]);
                            }
                        }
                        if best.is_finite() {
                            sum_y.add(best);
                        }
                    }
                    inner[(u2 * d.n_u1 + u1) * d.n_st + st] = sum_y.value();
                }
            }
        }

        let total = if shared {
            let mut best = f64::NEG_INFINITY;
            for u2 in 0..d.n_u2 {
                if is_zero(self.b1_at(0, u2)) {
                    continue;
                }
                let b2row = self.b2.row(u2);
                for u1 in 0..d.n_u1 {
                    if is_zero(b2row[u1]) {
                        continue;
                    }
                    let mut acc = Kahan::default();
                    for st in 0..d.n_st {
                        let x = inner[(u2 * d.n_u1 + u1) * d.n_st + st];
                        if x.is_finite() {
                            acc.add(x);
                        }
                    }
                    best = best.max(acc.value());
                }
            }
            best
        } else {
            let mut acc = Kahan::default();
            for st in 0..d.n_st {
                let mut best = f64::NEG_INFINITY;
                for u2 in 0..d.n_u2 {
                    if is_zero(self.b1_at(st, u2)) {
                        continue;
                    }
                    let b2row = self.b2.row(self.b2_row_index(u2, st, d.n_st));
                    for u1 in 0..d.n_u1 {
                        if !is_zero(b2row[u1]) {
                            best = best.max(inner[(u2 * d.n_u1 + u1) * d.n_st + st]);
                        }
                    }
                }
                if best.is_finite() {
                    acc.add(best);
                }
            }
            acc.value()
        };
        total + alpha
    }

    /// `(R1, R0 + R2, D1)` of the current state, evaluated through marginal
    /// tensors of the joint.
    pub fn rates_and_distortion(&self, eff: &BCEffective) -> Result<(f64, f64, f64)> {
        let d = self.dims(eff);
        let w = eff.spec.state_joint();
        let phi = &eff.spec.feedback_map;
        let edot = self.edot(eff);

        let mut m_u2_z2 = vec![0.0; d.n_u2 * d.n_z2];
        let mut m_u2_st = vec![0.0; d.n_u2 * d.n_st];
        let mut m_u1u2z1 = vec![0.0; d.n_u1 * d.n_u2 * d.n_z1];
        let mut m_u1u2st = vec![0.0; d.n_u1 * d.n_u2 * d.n_st];
        let mut m_big = vec![0.0; d.n_v1 * d.n_st * d.n_u1 * d.n_u2 * d.n_z1];
        let mut dist = Kahan::default();

        for u2 in 0..d.n_u2 {
            for st in 0..d.n_st {
                let pb1 = self.b1_at(st, u2);
                if is_zero(pb1) {
                    continue;
                }
                let b2row = self.b2.row(self.b2_row_index(u2, st, d.n_st));
                for u1 in 0..d.n_u1 {
                    let pb2 = b2row[u1];
                    if is_zero(pb2) {
                        continue;
                    }
                    let x = eff.mapping[u1][st];
                    for s in 0..d.n_s {
                        let ws = w[s * d.n_st + st] * pb1 * pb2;
                        if is_zero(ws) {
                            continue;
                        }
                        m_u2_st[u2 * d.n_st + st] += ws;
                        m_u1u2st[(u1 * d.n_u2 + u2) * d.n_st + st] += ws;
                        let kx = eff.kx_row(x, s);
                        for z1 in 0..d.n_z1 {
                            let k1 = eff.k1_at(x, s, z1);
                            if is_zero(k1) {
                                continue;
                            }
                            let base = ws * k1;
                            m_u1u2z1[(u1 * d.n_u2 + u2) * d.n_z1 + z1] += base;
                            for z2 in 0..d.n_z2 {
                                m_u2_z2[u2 * d.n_z2 + z2] += ws * kx[z1 * d.n_z2 + z2];
                            }
                            let b3row =
                                self.b3.row(self.b3_row_index(&d, u1, u2, st, phi[z1]));
                            for v1 in 0..d.n_v1 {
                                let p = base * b3row[v1];
                                if is_zero(p) {
                                    continue;
                                }
                                m_big[(((v1 * d.n_st + st) * d.n_u1 + u1) * d.n_u2 + u2)
                                    * d.n_z1
                                    + z1] += p;
                                dist.add(
                                    p * edot[(((u1 * d.n_u2 + u2) * d.n_v1 + v1) * d.n_z1
                                        + z1)
                                        * d.n_s
                                        + s],
                                );
                            }
                        }
                    }
                }
            }
        }

        let t_u2z2 = JointTensor::new(vec![d.n_u2, d.n_z2], vec![], m_u2_z2)?;
        let t_u2st = JointTensor::new(vec![d.n_u2, d.n_st], vec![], m_u2_st)?;
        let t_u1u2z1 = JointTensor::new(vec![d.n_u1, d.n_u2, d.n_z1], vec![], m_u1u2z1)?;
        let t_u1u2st = JointTensor::new(vec![d.n_u1, d.n_u2, d.n_st], vec![], m_u1u2st)?;
        let t_big = JointTensor::new(
            vec![d.n_v1, d.n_st, d.n_u1, d.n_u2, d.n_z1],
            vec![],
            m_big,
        )?;

        let r0r2 = crate::prob::mutual_information(&t_u2z2, &[0], &[1])
            - crate::prob::mutual_information(&t_u2st, &[0], &[1]);
        let r1 = crate::prob::conditional_mutual_information(&t_u1u2z1, &[0], &[2], &[1])
            - crate::prob::conditional_mutual_information(&t_u1u2st, &[0], &[2], &[1])
            - crate::prob::conditional_mutual_information(&t_big, &[0], &[1], &[2, 3, 4]);
        Ok((r1, r0r2, dist.value()))
    }
}

/// Random initialization of the prior and estimator blocks followed by one
/// posterior pass.
pub fn init_bc_state(
    eff: &BCEffective,
    alpha: f64,
    rho1: f64,
    opts: &BcSolveOptions,
) -> Result<BCSolverState> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument("alpha must lie in [0, 1]".into()));
    }
    if rho1 < 0.0 {
        return Err(Error::InvalidArgument("rho1 must be nonnegative".into()));
    }
    let spec = &eff.spec;
    let n_u1 = eff.n_u1();
    let n_u2 = opts.n_u2.unwrap_or_else(|| default_n_u2(spec));
    let n_v1 = opts.n_v1.unwrap_or_else(|| default_n_v1(spec.n_st));
    let n_fb = spec.n_fb();
    let (b1_rows, b2_sizes) = match eff.mode {
        CausalityMode::NonCausal => (spec.n_st, vec![n_u2, spec.n_st]),
        _ => (1, vec![n_u2]),
    };
    let b2_rows: usize = b2_sizes.iter().product();
    let mut g = SplitMix64::new(opts.seed);
    let mut sample = |rows: usize, cols: usize| -> Vec<f64> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(g.dirichlet1(cols));
        }
        data
    };
    let b1 = CondDist::new(vec![b1_rows], n_u2, sample(b1_rows, n_u2))?;
    let b2 = CondDist::new(b2_sizes, n_u1, sample(b2_rows, n_u1))?;
    let b3 = CondDist::new(
        vec![n_u1, n_u2, spec.n_st, n_fb],
        n_v1,
        sample(n_u1 * n_u2 * spec.n_st * n_fb, n_v1),
    )?;
    let e1 = CondDist::new(
        vec![n_u1, n_u2, n_v1, spec.n_z1],
        spec.n_shat1,
        sample(n_u1 * n_u2 * n_v1 * spec.n_z1, spec.n_shat1),
    )?;
    let mut state = BCSolverState {
        mode: eff.mode,
        alpha,
        rho1,
        b1,
        b2,
        b3,
        q1: CondDist::uniform(vec![spec.n_z2], n_u2),
        q2: CondDist::uniform(vec![n_u2, spec.n_z1], n_u1),
        q3: CondDist::uniform(vec![n_u1, n_u2, spec.n_z1], n_v1),
        e1,
        iteration: 0,
        l_value: f64::NEG_INFINITY,
        b_value: f64::INFINITY,
        t_schedule: opts.t_schedule,
        t0_resolved: opts.t_schedule.t0,
        estimator_optimal: false,
        flags: SolveFlags {
            truncated: eff.truncated,
            ..SolveFlags::default()
        },
        b_violations: 0,
        monotonicity_violations: 0,
    };
    state.update_posteriors(eff);
    Ok(state)
}

/// Solves the weighted-sum problem from a fresh random initialization.
pub fn solve_weighted(
    eff: &BCEffective,
    alpha: f64,
    rho1: f64,
    opts: &BcSolveOptions,
) -> Result<(BCSolverState, RegionPoint)> {
    let state = init_bc_state(eff, alpha, rho1, opts)?;
    solve_weighted_from(eff, state, opts)
}

/// Continues the weighted-sum solve from a given state.
pub fn solve_weighted_from(
    eff: &BCEffective,
    mut state: BCSolverState,
    opts: &BcSolveOptions,
) -> Result<(BCSolverState, RegionPoint)> {
    if opts.delta <= 0.0 {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    state.update_posteriors(eff);
    let mut prev_l = f64::NEG_INFINITY;
    let mut converged = false;
    while state.iteration < opts.max_iters {
        state.iterate(eff);
        let gap = state.b_value - state.l_value;
        if gap < -1e-9 {
            state.b_violations += 1;
        }
        if state.l_value < prev_l - 1e-10 {
            state.monotonicity_violations += 1;
        }
        prev_l = state.l_value;
        if gap <= opts.delta && state.estimator_optimal {
            converged = true;
            break;
        }
    }
    if !converged {
        state.flags.max_iters = true;
    }
    let (r1, r0r2, d1) = state.rates_and_distortion(eff)?;
    let point = RegionPoint {
        alpha: state.alpha,
        rho1: state.rho1,
        r1_nats: r1,
        r0r2_nats: r0r2,
        d1,
        iterations: state.iteration,
        gap: state.b_value - state.l_value,
        l: state.l_value,
        b: state.b_value,
        flags: state.flags,
    };
    Ok((state, point))
}

/// Best of seeded restarts by the final objective value.
pub fn solve_weighted_best_of(
    eff: &BCEffective,
    alpha: f64,
    rho1: f64,
    opts: &BcSolveOptions,
    restarts: usize,
) -> Result<(BCSolverState, RegionPoint)> {
    let restarts = restarts.max(1);
    let mut best: Option<(BCSolverState, RegionPoint)> = None;
    for r in 0..restarts {
        let mut o = opts.clone();
        o.seed = derive_seed(opts.seed, 0xbc57, r as u64);
        let (st, pt) = solve_weighted(eff, alpha, rho1, &o)?;
        if best.as_ref().map_or(true, |(b, _)| st.l_value > b.l_value) {
            best = Some((st, pt));
        }
    }
    Ok(best.unwrap())
}

/// A swept region: the full point cloud plus, per distortion threshold, the
/// Pareto-maximal rate pairs achievable at that distortion. The slice at
/// threshold `t` pools every point with `d1 <= t`, since the region only
/// grows with the allowed distortion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSweep {
    pub points: Vec<RegionPoint>,
    pub slices: Vec<RegionSlice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSlice {
    pub d1: f64,
    pub envelope: Vec<(f64, f64)>,
}

pub fn sweep_region(
    eff: &BCEffective,
    alphas: &[f64],
    rho1s: &[f64],
    opts: &BcSolveOptions,
    restarts: usize,
) -> Result<RegionSweep> {
    if alphas.is_empty() || rho1s.is_empty() {
        return Err(Error::InvalidArgument("region grids are empty".into()));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidArgument("alpha grid outside [0, 1]".into()));
    }
    if rho1s.iter().any(|r| *r < 0.0) {
        return Err(Error::InvalidArgument("rho1 grid must be nonnegative".into()));
    }
    use rayon::prelude::*;
    let cells: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|i| (0..rho1s.len()).map(move |j| (i, j)))
        .collect();
    let results: Result<Vec<RegionPoint>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut o = opts.clone();
            o.seed = derive_seed(opts.seed, i as u64, j as u64);
            solve_weighted_best_of(eff, alphas[i], rho1s[j], &o, restarts).map(|(_, p)| p)
        })
        .collect();
    let points = results?;
    let mut ds: Vec<f64> = points.iter().map(|p| p.d1).collect();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ds.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let slices = ds
        .iter()
        .map(|&t| {
            let mut pts: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.d1 <= t + 1e-9)
                .map(|p| (p.r1_nats, p.r0r2_nats))
                .collect();
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut envelope: Vec<(f64, f64)> = Vec::new();
            for &(r1, r2) in pts.iter().rev() {
                if envelope
                    .iter()
                    .all(|&(a, b)| !(a >= r1 - 1e-12 && b >= r2 - 1e-12))
                {
                    envelope.push((r1, r2));
                }
            }
            envelope.reverse();
            RegionSlice { d1: t, envelope }
        })
        .collect();
    Ok(RegionSweep { points, slices })
}

/// The two-receiver sensing trade-off: receiver 1 in radar mode (its output
/// contains the transmit signal), receiver 2 communication-only, no side
/// information. Solves `max_{P_X} I(X; Z2) - rho1 E[d1(S, h*(X, Z1))]` by a
/// three-block coordinate ascent; the reduced problem is concave in the
/// input distribution, so the certified stationary point is the global
/// optimum.
pub fn solve_isac_tradeoff(
    spec: &BCChannelSpec,
    rho1_grid: &[f64],
    opts: &BcSolveOptions,
) -> Result<Vec<CDPoint>> {
    if spec.n_st != 1 {
        return Err(Error::ModeViolation(
            "the sensing trade-off requires absent side information".into(),
        ));
    }
    let (n_y1, n_x_comp) = spec.meta.z_composite.ok_or_else(|| {
        Error::ModeViolation("receiver 1 must be in radar mode (composite output)".into())
    })?;
    if n_x_comp != spec.n_x || n_y1 * n_x_comp != spec.n_z1 {
        return Err(Error::ModeViolation(
            "composite output shape does not match the input alphabet".into(),
        ));
    }
    for x in 0..spec.n_x {
        for s in 0..spec.n_s {
            let row = spec.p_z1z2_given_xs.row(x * spec.n_s + s);
            for z1 in 0..spec.n_z1 {
                if z1 % spec.n_x != x {
                    for z2 in 0..spec.n_z2 {
                        if row[z1 * spec.n_z2 + z2] > 0.0 {
                            return Err(Error::ModeViolation(
                                "output carries a mismatched transmit signal".into(),
                            ));
                        }
                    }
                }
            }
        }
    }
    if rho1_grid.is_empty() {
        return Err(Error::InvalidArgument("rho1 grid is empty".into()));
    }

    use rayon::prelude::*;
    let mut points: Vec<CDPoint> = rho1_grid
        .par_iter()
        .enumerate()
        .map(|(i, &rho1)| {
            let mut o = opts.clone();
            o.seed = derive_seed(opts.seed, 0x15ac, i as u64);
            solve_isac_single(spec, rho1, &o)
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.distortion.partial_cmp(&b.distortion).unwrap());
    Ok(points)
}

fn solve_isac_single(spec: &BCChannelSpec, rho1: f64, opts: &BcSolveOptions) -> Result<CDPoint> {
    let (n_x, n_s, n_z1, n_z2, n_shat) = (spec.n_x, spec.n_s, spec.n_z1, spec.n_z2, spec.n_shat1);
    let mut g = SplitMix64::new(opts.seed);
    let mut px = g.dirichlet1(n_x);
    let mut est = {
        let mut data = Vec::with_capacity(n_x * n_z1 * n_shat);
        for _ in 0..n_x * n_z1 {
            data.extend(g.dirichlet1(n_shat));
        }
        data
    };
    // Static state-weighted kernels p_s(s) p(z1|x,s) and p_s-marginalized
    // p(z2|x).
    let mut k1 = vec![0.0; n_x * n_z1 * n_s];
    let mut k2 = vec![0.0; n_x * n_z2];
    for x in 0..n_x {
        for s in 0..n_s {
            let row = spec.p_z1z2_given_xs.row(x * n_s + s);
            for z1 in 0..n_z1 {
                for z2 in 0..n_z2 {
                    let p = spec.p_s[s] * row[z1 * n_z2 + z2];
                    k1[(x * n_z1 + z1) * n_s + s] += p;
                    k2[x * n_z2 + z2] += p;
                }
            }
        }
    }

    let mut qx = vec![1.0 / n_x as f64; n_z2 * n_x];
    let mut t0: Option<f64> = opts.t_schedule.t0;
    let mut iteration = 0usize;
    let mut l = f64::NEG_INFINITY;
    let mut b = f64::INFINITY;
    let mut flags = SolveFlags::default();
    let mut est_optimal = false;

    let refresh = |px: &[f64], qx: &mut [f64], flags: &mut SolveFlags| {
        for z2 in 0..n_z2 {
            let col: Vec<f64> = (0..n_x).map(|x| px[x] * k2[x * n_z2 + z2]).collect();
            let (p, flag) = normalize(&col);
            if flag {
                flags.degenerate_rows += 1;
            }
            qx[z2 * n_x..(z2 + 1) * n_x].copy_from_slice(p.as_slice());
        }
    };
    refresh(&px, &mut qx, &mut flags);

    let edist = |est: &[f64], x: usize, z1: usize, s: usize| -> f64 {
        let mut e = 0.0;
        for sh in 0..n_shat {
            e += est[(x * n_z1 + z1) * n_shat + sh] * spec.distortion[s * n_shat + sh];
        }
        e
    };

    while iteration < opts.max_iters {
        iteration += 1;
        // Input update: px ~ exp( E[ln q(x|Z2)] - rho1 E[d] | x ).
        let mut gx = vec![0.0; n_x];
        for x in 0..n_x {
            let mut acc = Kahan::default();
            for z2 in 0..n_z2 {
                let k = k2[x * n_z2 + z2];
                if !is_zero(k) {
                    acc.add(k * safe_ln(qx[z2 * n_x + x]));
                }
            }
            for z1 in 0..n_z1 {
                for s in 0..n_s {
                    let k = k1[(x * n_z1 + z1) * n_s + s];
                    if !is_zero(k) {
                        acc.add(-rho1 * k * edist(&est, x, z1, s));
                    }
                }
            }
            gx[x] = acc.value();
        }
        let m = gx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = gx.iter().map(|&v| (v - m).exp()).collect();
        let (p, flag) = normalize(&raw);
        if flag {
            flags.underflow_rows += 1;
        }
        px.copy_from_slice(p.as_slice());
        floor_row(&mut px);

        // Estimator rows (x, z1): the coefficients already exclude the input
        // prior, so rows of currently-dead inputs are their own
        // counterfactual optimum.
        if t0.is_none() {
            let dmax = spec.distortion.iter().cloned().fold(0.0, f64::max);
            t0 = Some(dmax.max(1e-8));
        }
        let t = if opts.t_schedule.decay {
            t0.unwrap() / (1.0 + iteration as f64)
        } else {
            t0.unwrap()
        }
        .max(1e-300);
        est_optimal = true;
        for x in 0..n_x {
            for z1 in 0..n_z1 {
                let mut a = vec![0.0; n_shat];
                let mut mass = 0.0;
                for s in 0..n_s {
                    let base = k1[(x * n_z1 + z1) * n_s + s];
                    if is_zero(base) {
                        continue;
                    }
                    mass += base;
                    for sh in 0..n_shat {
                        a[sh] += base * spec.distortion[s * n_shat + sh];
                    }
                }
                if is_zero(mass) {
                    continue; // structurally unreachable cell
                }
                for ai in &mut a {
                    *ai /= mass;
                }
                let amin = a.iter().cloned().fold(f64::INFINITY, f64::min);
                let row = &mut est[(x * n_z1 + z1) * n_shat..(x * n_z1 + z1 + 1) * n_shat];
                let dot: f64 = a.iter().zip(row.iter()).map(|(ai, p)| ai * p).sum();
                if dot <= amin + 1e-12 {
                    continue;
                }
                let shifted: Vec<f64> =
                    row.iter().zip(&a).map(|(&p, &ai)| p - ai / t).collect();
                let proj = project_simplex(&shifted);
                let new_dot: f64 = a.iter().zip(&proj).map(|(ai, p)| ai * p).sum();
                if new_dot > amin + 1e-12 {
                    est_optimal = false;
                }
                row.copy_from_slice(&proj);
            }
        }

        refresh(&px, &mut qx, &mut flags);

        // Objective and the max-based bound.
        let mut acc_l = Kahan::default();
        let mut gmax = f64::NEG_INFINITY;
        for x in 0..n_x {
            let mut gx_val = Kahan::default();
            for z2 in 0..n_z2 {
                let k = k2[x * n_z2 + z2];
                if !is_zero(k) {
                    gx_val.add(k * (safe_ln(qx[z2 * n_x + x]) - safe_ln(px[x])));
                }
            }
            for z1 in 0..n_z1 {
                for s in 0..n_s {
                    let k = k1[(x * n_z1 + z1) * n_s + s];
                    if !is_zero(k) {
                        gx_val.add(-rho1 * k * edist(&est, x, z1, s));
                    }
                }
            }
            let gx_val = gx_val.value();
            if !is_zero(px[x]) {
                acc_l.add(px[x] * gx_val);
                gmax = gmax.max(gx_val);
            }
        }
        l = acc_l.value();
        b = gmax;
        if b - l <= opts.delta && est_optimal {
            break;
        }
    }
    if !(b - l <= opts.delta && est_optimal) {
        flags.max_iters = true;
    }

    let mut m_xz2 = vec![0.0; n_x * n_z2];
    for x in 0..n_x {
        for z2 in 0..n_z2 {
            m_xz2[x * n_z2 + z2] = px[x] * k2[x * n_z2 + z2];
        }
    }
    let t_xz2 = JointTensor::new(vec![n_x, n_z2], vec![], m_xz2)?;
    let rate = crate::prob::mutual_information(&t_xz2, &[0], &[1]);
    let mut dist = Kahan::default();
    for x in 0..n_x {
        if is_zero(px[x]) {
            continue;
        }
        for z1 in 0..n_z1 {
            for s in 0..n_s {
                let k = k1[(x * n_z1 + z1) * n_s + s];
                if !is_zero(k) {
                    dist.add(px[x] * k * edist(&est, x, z1, s));
                }
            }
        }
    }
    Ok(CDPoint {
        rho: rho1,
        rate_nats: rate,
        distortion: dist.value(),
        iterations: iteration,
        gap: b - l,
        l,
        b,
        mode: CausalityMode::StrictlyCausal,
        flags,
        certificate: None,
    })
}

/// Maximum of `I(X; Y2 | S)` over the input distribution, computed by a
/// per-state alternating maximization with the usual max-based upper bound.
/// Used to cross-check the composite reduction where receiver 2 also
/// observes the state.
pub fn max_conditional_mi(kernel_per_state: &[CondDist], p_s: &[f64], delta: f64) -> f64 {
    let n_x = kernel_per_state[0].n_rows();
    let mut q = vec![1.0 / n_x as f64; n_x];
    for _ in 0..1_000_000 {
        let mut d = vec![0.0; n_x];
        for (s, k) in kernel_per_state.iter().enumerate() {
            let n_z = k.out_size();
            let mut qz = vec![0.0; n_z];
            for x in 0..n_x {
                for z in 0..n_z {
                    qz[z] += q[x] * k.at(x, z);
                }
            }
            for x in 0..n_x {
                for z in 0..n_z {
                    let kx = k.at(x, z);
                    if !is_zero(kx) {
                        d[x] += p_s[s] * kx * (kx.ln() - safe_ln(qz[z]));
                    }
                }
            }
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
        for v in &mut q {
            *v /= sum;
        }
    }
    f64::NAN
}
