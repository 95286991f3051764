//! Proximal block coordinate ascent for the point-to-point
//! capacity-distortion problem.
//!
//! The objective is the Lagrangian
//!
//! ```text
//! L_rho = sum p(s,s_T,u,z,y',v) [ ln( q(u|z) q(v|u,z) / ( p(u|s_T) p(v|s_T,u,y') ) )
//!                                 - rho * sum_shat e(shat|u,v,z) d(s,shat) ]
//! ```
//!
//! maximized over five blocks: the priors `p(u|s_T)` and `p(v|s_T,u,y')`, the
//! variational posteriors `q(u|z)` and `q(v|u,z)`, and the estimator
//! `e(shat|u,v,z)`. Posteriors have closed-form updates (exact conditionals of
//! the current joint), the priors have multiplicative KKT updates computed in
//! log domain, and the estimator block — linear in the objective — takes a
//! proximal step solved exactly by Euclidean projection onto the simplex.
//!
//! Each iteration also evaluates an upper bound `B_rho` built from the
//! per-block partial derivatives with averages replaced by maxima. `B >= L`
//! holds at every state and the gap closes exactly at stationary points, so
//! `B - L <= delta` is a certified stopping rule.
//!
//! In strictly causal and causal modes the `u`-prior is a single row shared
//! across side-information symbols; the update then sums its exponent over
//! `s_T` as well, and the `s_T`-sum in `B` moves inside the maximum over `u`.

use crate::channel::{CausalityMode, EffectiveChannel};
use crate::prob::{entropy, is_zero, normalize, safe_ln, CondDist, JointTensor, Kahan};
use crate::rng::{derive_seed, SplitMix64};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Proximal constants for the estimator block: `t0 / (1 + i)` or constant
/// `t0`. With `t0 = None`, the base constant is set at the first estimator
/// update so that the proximal term starts on the order of the linear term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TSchedule {
    pub t0: Option<f64>,
    pub decay: bool,
}

impl Default for TSchedule {
    fn default() -> Self {
        TSchedule {
            t0: None,
            decay: true,
        }
    }
}

impl TSchedule {
    /// Proximal constant at iteration `i` given the resolved base.
    pub fn value(&self, resolved_t0: f64, iteration: usize) -> f64 {
        if self.decay {
            resolved_t0 / (1.0 + iteration as f64)
        } else {
            resolved_t0
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stopping threshold on `B - L`.
    pub delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub t_schedule: TSchedule,
    /// Auxiliary alphabet size; defaults to `|S_T| + 1`, or 1 when side
    /// information is absent (`V` carries no information then).
    pub n_v: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            delta: 1e-3,
            max_iters: 20_000,
            seed: 0,
            t_schedule: TSchedule::default(),
            n_v: None,
        }
    }
}

/// Non-fatal events observed during a solve.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct SolveFlags {
    /// Posterior rows with zero denominator set to uniform.
    pub degenerate_rows: usize,
    /// Prior rows whose whole exponent underflowed, set to uniform.
    pub underflow_rows: usize,
    /// Stopped on the iteration cap instead of the gap criterion.
    pub max_iters: bool,
    /// Strategy table was truncated at the cap.
    pub truncated: bool,
}

impl SolveFlags {
    pub fn tokens(&self) -> Vec<String> {
        let mut t = Vec::new();
        if self.max_iters {
            t.push("MaxIters".into());
        }
        if self.degenerate_rows > 0 {
            t.push(format!("DegenerateRow:{}", self.degenerate_rows));
        }
        if self.underflow_rows > 0 {
            t.push(format!("NumericalUnderflow:{}", self.underflow_rows));
        }
        if self.truncated {
            t.push("StrategyExplosion:truncated".into());
        }
        t
    }
}

/// Contract counters kept across a solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Iterations where `B < L - 1e-9`.
    pub b_violations: usize,
    /// Iterations where `L` dropped by more than 1e-10 from the previous
    /// pass.
    pub monotonicity_violations: usize,
    pub min_gap: f64,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            b_violations: 0,
            monotonicity_violations: 0,
            min_gap: f64::INFINITY,
        }
    }
}

/// The five coordinate blocks plus iteration bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverState {
    pub mode: CausalityMode,
    pub rho: f64,
    /// Rows: one per `s_T` in non-causal mode, a single shared row otherwise.
    pub pu: CondDist,
    /// Rows `(s_T, u, y')`.
    pub pv: CondDist,
    /// Rows `z`.
    pub qu: CondDist,
    /// Rows `(u, z)`.
    pub qv: CondDist,
    /// Rows `(u, v, z)`.
    pub est: CondDist,
    pub iteration: usize,
    pub l_value: f64,
    pub b_value: f64,
    pub t_schedule: TSchedule,
    /// Resolved proximal base constant (set on first estimator update).
    pub t0_resolved: Option<f64>,
    /// Whether the last estimator update left every row optimal for its
    /// linear subproblem.
    pub estimator_optimal: bool,
    pub flags: SolveFlags,
    pub diag: Diagnostics,
}

/// One solved trade-off point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CDPoint {
    pub rho: f64,
    pub rate_nats: f64,
    pub distortion: f64,
    pub iterations: usize,
    pub gap: f64,
    pub l: f64,
    pub b: f64,
    pub mode: CausalityMode,
    pub flags: SolveFlags,
    /// Stationarity residual, filled in by the oracle when requested.
    pub certificate: Option<f64>,
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cssv = 0.0;
    let mut tau = 0.0;
    let mut support = 0usize;
    for (j, &uj) in u.iter().enumerate() {
        cssv += uj;
        let t = (cssv - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
            support = j + 1;
        }
    }
    debug_assert!(support > 0);
    y.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Default `|V|`: side information plus one symbol, or degenerate when there
/// is no side information to describe.
pub fn default_n_v(n_st: usize) -> usize {
    if n_st == 1 {
        1
    } else {
        n_st + 1
    }
}

/// Smallest mass a prior entry can be driven to by a multiplicative update.
/// Keeping every symbol barely alive keeps it a candidate in the stopping
/// bound, so a symbol crushed early by a not-yet-adapted estimator can
/// recover instead of being silently certified away.
const REVIVAL_FLOOR: f64 = 1e-250;

fn apply_revival_floor(row: &mut [f64]) {
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

impl SolverState {
    fn pu_row_index(&self, st: usize) -> usize {
        match self.mode {
            CausalityMode::NonCausal => st,
            _ => 0,
        }
    }

    #[inline]
    fn pu_at(&self, st: usize, u: usize) -> f64 {
        self.pu.at(self.pu_row_index(st), u)
    }

    fn n_v(&self) -> usize {
        self.pv.out_size()
    }

    /// Estimator-weighted distortion `edot[(u,v,z), s] = sum_shat
    /// e(shat|u,v,z) d(s, shat)`.
    fn edot(&self, eff: &EffectiveChannel) -> Vec<f64> {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_shat) =
            (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_shat);
        let mut out = vec![0.0; n_u * n_v * n_z * n_s];
        for row in 0..n_u * n_v * n_z {
            let e = self.est.row(row);
            for s in 0..n_s {
                let mut acc = 0.0;
                let d = &spec.distortion[s * n_shat..(s + 1) * n_shat];
                for sh in 0..n_shat {
                    acc += e[sh] * d[sh];
                }
                out[row * n_s + s] = acc;
            }
        }
        out
    }

    /// Posterior updates: `q(u|z)` and `q(v|u,z)` become the exact
    /// conditionals of the current joint. Rows with zero mass fall back to
    /// uniform and are counted as degenerate.
    pub fn update_posteriors(&mut self, eff: &EffectiveChannel) {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_st) = (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_st);
        let w = spec.state_joint();
        let phi = &spec.feedback_map;
        let n_fb = spec.n_fb();

        let mut m_uz = vec![0.0; n_u * n_z];
        let mut m_uzv = vec![0.0; n_u * n_z * n_v];
        for u in 0..n_u {
            for st in 0..n_st {
                let pu = self.pu_at(st, u);
                if is_zero(pu) {
                    continue;
                }
                for s in 0..n_s {
                    let ws = w[s * n_st + st] * pu;
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = eff.kernel_row(u, st, s);
                    for z in 0..n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        m_uz[u * n_z + z] += base;
                        let pvrow = self.pv.row((st * n_u + u) * n_fb + phi[z]);
                        let dst = &mut m_uzv[(u * n_z + z) * n_v..(u * n_z + z + 1) * n_v];
                        for v in 0..n_v {
                            dst[v] += base * pvrow[v];
                        }
                    }
                }
            }
        }

        let mut degenerate = 0;
        let mut qu = vec![0.0; n_z * n_u];
        for z in 0..n_z {
            let col: Vec<f64> = (0..n_u).map(|u| m_uz[u * n_z + z]).collect();
            let (p, flag) = normalize(&col);
            if flag {
                degenerate += 1;
            }
            qu[z * n_u..(z + 1) * n_u].copy_from_slice(p.as_slice());
        }
        self.qu = CondDist::new(vec![n_z], n_u, qu).expect("posterior rows");

        let mut qv = vec![0.0; n_u * n_z * n_v];
        for u in 0..n_u {
            for z in 0..n_z {
                let row = &m_uzv[(u * n_z + z) * n_v..(u * n_z + z + 1) * n_v];
                let (p, flag) = normalize(row);
                if flag {
                    degenerate += 1;
                }
                qv[(u * n_z + z) * n_v..(u * n_z + z + 1) * n_v].copy_from_slice(p.as_slice());
            }
        }
        self.qv = CondDist::new(vec![n_u, n_z], n_v, qv).expect("posterior rows");
        self.flags.degenerate_rows += degenerate;
    }

    /// Multiplicative update of the `u`-prior. Exponents are conditional
    /// expectations of the log-ratio bracket under the previous `v`-prior;
    /// strictly causal and causal modes additionally sum over `s_T`.
    pub fn update_pu(&mut self, eff: &EffectiveChannel) {
        let edot = self.edot(eff);
        self.update_pu_with(eff, &edot);
    }

    fn update_pu_with(&mut self, eff: &EffectiveChannel, edot: &[f64]) {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_st) = (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_st);
        let w = spec.state_joint();
        let p_st: Vec<f64> = (0..n_st)
            .map(|st| (0..n_s).map(|s| w[s * n_st + st]).sum())
            .collect();
        let phi = &spec.feedback_map;
        let n_fb = spec.n_fb();
        let rho = self.rho;
        let shared = !matches!(self.mode, CausalityMode::NonCausal);

        let n_rows = self.pu.n_rows();
        let mut g = vec![f64::NEG_INFINITY; n_rows * n_u];
        for u in 0..n_u {
            let mut acc_shared = Kahan::default();
            let mut dead_shared = true;
            for st in 0..n_st {
                let mut acc = Kahan::default();
                let mut dead = true;
                // Conditional weight given (u, s_T) is P(s|s_T) K pv; the
                // shared-row variant uses w(s, s_T) unnormalized, which folds
                // in the extra P(s_T) average.
                let norm = if shared { 1.0 } else { p_st[st] };
                if is_zero(norm) {
                    continue;
                }
                for s in 0..n_s {
                    let ws = w[s * n_st + st] / norm;
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = eff.kernel_row(u, st, s);
                    for z in 0..n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        dead = false;
                        let lnqu = safe_ln(self.qu.at(z, u));
                        let pvrow = self.pv.row((st * n_u + u) * n_fb + phi[z]);
                        let qvrow = self.qv.row(u * n_z + z);
                        for v in 0..n_v {
                            let pvv = pvrow[v];
                            if is_zero(pvv) {
                                continue;
                            }
                            let e = edot[((u * n_v + v) * n_z + z) * n_s + s];
                            let bracket = lnqu + safe_ln(qvrow[v]) - safe_ln(pvv) - rho * e;
                            acc.add(base * pvv * bracket);
                        }
                    }
                }
                if shared {
                    if !dead {
                        dead_shared = false;
                        acc_shared.add(acc.value());
                    }
                } else if !dead {
                    g[st * n_u + u] = acc.value();
                }
            }
            if shared && !dead_shared {
                g[u] = acc_shared.value();
            }
        }

        let mut data = vec![0.0; n_rows * n_u];
        for r in 0..n_rows {
            let row = &g[r * n_u..(r + 1) * n_u];
            let m = row
                .iter()
                .cloned()
                .filter(|x| x.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                self.flags.underflow_rows += 1;
                data[r * n_u..(r + 1) * n_u].fill(1.0 / n_u as f64);
                continue;
            }
            let mut raw = vec![0.0; n_u];
            for (u, &gu) in row.iter().enumerate() {
                raw[u] = if gu.is_finite() { (gu - m).exp() } else { 0.0 };
            }
            let (p, flag) = normalize(&raw);
            if flag {
                self.flags.underflow_rows += 1;
            }
            let out = &mut data[r * n_u..(r + 1) * n_u];
            out.copy_from_slice(p.as_slice());
            apply_revival_floor(out);
        }
        self.pu = CondDist::new(self.pu.cond_sizes().to_vec(), n_u, data).expect("pu rows");
    }

    /// Multiplicative update of the `v`-prior, normalized per `(s_T, u, y')`
    /// row. Unreachable rows are set uniform.
    pub fn update_pv(&mut self, eff: &EffectiveChannel) {
        let edot = self.edot(eff);
        self.update_pv_with(eff, &edot);
    }

    fn update_pv_with(&mut self, eff: &EffectiveChannel, edot: &[f64]) {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_st) = (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_st);
        let w = spec.state_joint();
        let phi = &spec.feedback_map;
        let n_fb = spec.n_fb();
        let rho = self.rho;

        let mut data = vec![0.0; n_st * n_u * n_fb * n_v];
        let mut g = vec![0.0; n_fb * n_v];
        let mut denom = vec![0.0; n_fb];
        for st in 0..n_st {
            for u in 0..n_u {
                g.fill(0.0);
                denom.fill(0.0);
                for s in 0..n_s {
                    let ws = w[s * n_st + st];
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = eff.kernel_row(u, st, s);
                    for z in 0..n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        let y = phi[z];
                        denom[y] += base;
                        let qvrow = self.qv.row(u * n_z + z);
                        for v in 0..n_v {
                            let e = edot[((u * n_v + v) * n_z + z) * n_s + s];
                            g[y * n_v + v] += base * (safe_ln(qvrow[v]) - rho * e);
                        }
                    }
                }
                for y in 0..n_fb {
                    let out = &mut data[((st * n_u + u) * n_fb + y) * n_v
                        ..((st * n_u + u) * n_fb + y + 1) * n_v];
                    if is_zero(denom[y]) {
                        out.fill(1.0 / n_v as f64);
                        continue;
                    }
                    let row: Vec<f64> = (0..n_v).map(|v| g[y * n_v + v] / denom[y]).collect();
                    let m = row
                        .iter()
                        .cloned()
                        .filter(|x| x.is_finite())
                        .fold(f64::NEG_INFINITY, f64::max);
                    if !m.is_finite() {
                        self.flags.underflow_rows += 1;
                        out.fill(1.0 / n_v as f64);
                        continue;
                    }
                    let raw: Vec<f64> = row
                        .iter()
                        .map(|&x| if x.is_finite() { (x - m).exp() } else { 0.0 })
                        .collect();
                    let (p, flag) = normalize(&raw);
                    if flag {
                        self.flags.underflow_rows += 1;
                    }
                    out.copy_from_slice(p.as_slice());
                    apply_revival_floor(out);
                }
            }
        }
        self.pv = CondDist::new(vec![n_st, n_u, n_fb], n_v, data).expect("pv rows");
    }

    /// Proximal estimator update. Each `(u, v, z)` row minimizes
    /// `a . p + T_row/2 ||p - p_prev||^2` over the simplex, which is the
    /// projection of `p_prev - a / T_row`; rows already optimal for the
    /// linear term are kept unchanged.
    ///
    /// Per-row proximal constants are `T(i)` scaled by the row's reach
    /// probability, which keeps the linear and proximal terms on the same
    /// order for every row. Rows with zero reach probability carry no weight
    /// in the objective but still feed the stopping bound's candidate
    /// evaluation, so they jump directly to their counterfactual optimum —
    /// the estimate the row would want if its context became reachable.
    /// Leaving them stale would certify spurious stationary points.
    pub fn update_estimator(&mut self, eff: &EffectiveChannel) {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_st, n_shat) = (
            eff.n_u(),
            self.n_v(),
            spec.n_z,
            spec.n_s,
            spec.n_st,
            spec.n_shat,
        );
        let w = spec.state_joint();
        let phi = &spec.feedback_map;
        let n_fb = spec.n_fb();

        // a[(u,v,z)][shat] = sum_{s,s_T} p(s,s_T,u,z,v) d(s,shat), plus the
        // row reach mass sum_{s,s_T} p(s,s_T,u,z,v).
        let mut a = vec![0.0; n_u * n_v * n_z * n_shat];
        let mut mass = vec![0.0; n_u * n_v * n_z];
        for u in 0..n_u {
            for st in 0..n_st {
                let pu = self.pu_at(st, u);
                if is_zero(pu) {
                    continue;
                }
                for s in 0..n_s {
                    let ws = w[s * n_st + st] * pu;
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = eff.kernel_row(u, st, s);
                    let d = &spec.distortion[s * n_shat..(s + 1) * n_shat];
                    for z in 0..n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        let pvrow = self.pv.row((st * n_u + u) * n_fb + phi[z]);
                        for v in 0..n_v {
                            let bv = base * pvrow[v];
                            if is_zero(bv) {
                                continue;
                            }
                            mass[(u * n_v + v) * n_z + z] += bv;
                            let arow = &mut a[((u * n_v + v) * n_z + z) * n_shat
                                ..((u * n_v + v) * n_z + z + 1) * n_shat];
                            for sh in 0..n_shat {
                                arow[sh] += bv * d[sh];
                            }
                        }
                    }
                }
            }
        }

        if self.t0_resolved.is_none() {
            // Start the proximal term on the order of the reach-normalized
            // linear term.
            let mut amax = 0.0f64;
            for row_idx in 0..n_u * n_v * n_z {
                if mass[row_idx] > 0.0 {
                    for sh in 0..n_shat {
                        amax = amax.max(a[row_idx * n_shat + sh] / mass[row_idx]);
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
        let mut cf = vec![0.0; n_shat];
        for row_idx in 0..n_u * n_v * n_z {
            if is_zero(mass[row_idx]) {
                // Counterfactual best response, built without the input
                // prior: the row's optimum for any way it could be reached.
                let u = row_idx / (n_v * n_z);
                let v = (row_idx / n_z) % n_v;
                let z = row_idx % n_z;
                cf.fill(0.0);
                let mut any = false;
                for st in 0..n_st {
                    let pvv = self.pv.at((st * n_u + u) * n_fb + phi[z], v);
                    if is_zero(pvv) {
                        continue;
                    }
                    for s in 0..n_s {
                        let base = w[s * n_st + st] * eff.kernel_row(u, st, s)[z] * pvv;
                        if is_zero(base) {
                            continue;
                        }
                        any = true;
                        for sh in 0..n_shat {
                            cf[sh] += base * spec.distortion[s * n_shat + sh];
                        }
                    }
                }
                if any {
                    let mut best = 0usize;
                    for sh in 1..n_shat {
                        if cf[sh] < cf[best] {
                            best = sh;
                        }
                    }
                    let row = self.est.row_mut(row_idx);
                    row.fill(0.0);
                    row[best] = 1.0;
                }
                continue;
            }
            let arow: Vec<f64> = a[row_idx * n_shat..(row_idx + 1) * n_shat]
                .iter()
                .map(|x| x / mass[row_idx])
                .collect();
            let amin = arow.iter().cloned().fold(f64::INFINITY, f64::min);
            let prev = self.est.row(row_idx);
            let dot: f64 = arow.iter().zip(prev).map(|(x, p)| x * p).sum();
            if dot <= amin + 1e-12 {
                continue; // already the linear-term optimum; skip the solve
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
            self.est.row_mut(row_idx).copy_from_slice(&proj);
        }
        self.estimator_optimal = all_optimal;
    }

    /// The Lagrangian at the current state. Works on raw entries with no
    /// hidden normalization, so it doubles as the target for
    /// finite-difference checks.
    pub fn compute_l(&self, eff: &EffectiveChannel) -> f64 {
        let edot = self.edot(eff);
        self.compute_l_with(eff, &edot)
    }

    fn compute_l_with(&self, eff: &EffectiveChannel, edot: &[f64]) -> f64 {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_st) = (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_st);
        let w = spec.state_joint();
        let phi = &spec.feedback_map;
        let n_fb = spec.n_fb();
        let rho = self.rho;
        let mut acc = Kahan::default();
        for u in 0..n_u {
            for st in 0..n_st {
                let pu = self.pu_at(st, u);
                if is_zero(pu) {
                    continue;
                }
                let lnpu = safe_ln(pu);
                for s in 0..n_s {
                    let ws = w[s * n_st + st] * pu;
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = eff.kernel_row(u, st, s);
                    for z in 0..n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        let lnqu = safe_ln(self.qu.at(z, u));
                        let pvrow = self.pv.row((st * n_u + u) * n_fb + phi[z]);
                        let qvrow = self.qv.row(u * n_z + z);
                        for v in 0..n_v {
                            let pvv = pvrow[v];
                            if is_zero(pvv) {
                                continue;
                            }
                            let e = edot[((u * n_v + v) * n_z + z) * n_s + s];
                            let bracket =
                                lnqu + safe_ln(qvrow[v]) - lnpu - safe_ln(pvv) - rho * e;
                            acc.add(base * pvv * bracket);
                        }
                    }
                }
            }
        }
        acc.value()
    }

    /// The stopping bound `B_rho`. Maxima range over candidates with positive
    /// current mass; rows with zero reach probability contribute nothing.
    pub fn compute_b(&self, eff: &EffectiveChannel) -> f64 {
        let edot = self.edot(eff);
        self.compute_b_with(eff, &edot)
    }

    fn compute_b_with(&self, eff: &EffectiveChannel, edot: &[f64]) -> f64 {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_st) = (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_st);
        let w = spec.state_joint();
        let phi = &spec.feedback_map;
        let n_fb = spec.n_fb();
        let rho = self.rho;
        let shared = !matches!(self.mode, CausalityMode::NonCausal);

        // inner[u][st] = sum_{y'} max_v sum_{s, z in phi^-1(y')} w K [bracket - 1]
        let mut inner = vec![f64::NEG_INFINITY; n_u * n_st];
        let mut buf = vec![0.0; n_fb * n_v];
        let mut reach = vec![false; n_fb];
        for u in 0..n_u {
            for st in 0..n_st {
                if is_zero(self.pu_at(st, u)) {
                    continue;
                }
                let lnpu = safe_ln(self.pu_at(st, u));
                buf.fill(0.0);
                reach.fill(false);
                for s in 0..n_s {
                    let ws = w[s * n_st + st];
                    if is_zero(ws) {
                        continue;
                    }
                    let krow = eff.kernel_row(u, st, s);
                    for z in 0..n_z {
                        let base = ws * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        let y = phi[z];
                        reach[y] = true;
                        let lnqu = safe_ln(self.qu.at(z, u));
                        let pvrow = self.pv.row((st * n_u + u) * n_fb + y);
                        let qvrow = self.qv.row(u * n_z + z);
                        for v in 0..n_v {
                            if is_zero(pvrow[v]) {
                                continue;
                            }
                            let e = edot[((u * n_v + v) * n_z + z) * n_s + s];
                            let bracket = lnqu + safe_ln(qvrow[v])
                                - lnpu
                                - safe_ln(pvrow[v])
                                - rho * e
                                - 1.0;
                            buf[y * n_v + v] += base * bracket;
                        }
                    }
                }
                let mut sum_y = Kahan::default();
                for y in 0..n_fb {
                    if !reach[y] {
                        continue;
                    }
                    let pvrow = self.pv.row((st * n_u + u) * n_fb + y);
                    let mut best = f64::NEG_INFINITY;
                    for v in 0..n_v {
                        if !is_zero(pvrow[v]) {
                            best = best.max(buf[y * n_v + v]);
                        }
                    }
                    if best.is_finite() {
                        sum_y.add(best);
                    }
                }
                inner[u * n_st + st] = sum_y.value();
            }
        }

        let total = if shared {
            // max_u sum_{s_T} inner
            let mut best = f64::NEG_INFINITY;
            for u in 0..n_u {
                if is_zero(self.pu_at(0, u)) {
                    continue;
                }
                let mut acc = Kahan::default();
                for st in 0..n_st {
                    let x = inner[u * n_st + st];
                    if x.is_finite() {
                        acc.add(x);
                    }
                }
                best = best.max(acc.value());
            }
            best
        } else {
            // sum_{s_T} max_u inner
            let mut acc = Kahan::default();
            for st in 0..n_st {
                let mut best = f64::NEG_INFINITY;
                for u in 0..n_u {
                    if !is_zero(self.pu_at(st, u)) {
                        best = best.max(inner[u * n_st + st]);
                    }
                }
                if best.is_finite() {
                    acc.add(best);
                }
            }
            acc.value()
        };
        total + 1.0
    }

    /// The joint `p(s, s_T, u, z, v)` under the current priors. The feedback
    /// symbol is a function of `z` and not materialized as an axis.
    pub fn joint_tensor(&self, eff: &EffectiveChannel) -> Result<JointTensor> {
        let spec = &eff.spec;
        let (n_u, n_v, n_z, n_s, n_st) = (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_st);
        let w = spec.state_joint();
        let phi = &spec.feedback_map;
        let n_fb = spec.n_fb();
        let mut data = vec![0.0; n_s * n_st * n_u * n_z * n_v];
        for s in 0..n_s {
            for st in 0..n_st {
                let ws = w[s * n_st + st];
                if is_zero(ws) {
                    continue;
                }
                for u in 0..n_u {
                    let pu = self.pu_at(st, u);
                    if is_zero(pu) {
                        continue;
                    }
                    let krow = eff.kernel_row(u, st, s);
                    for z in 0..n_z {
                        let base = ws * pu * krow[z];
                        if is_zero(base) {
                            continue;
                        }
                        let pvrow = self.pv.row((st * n_u + u) * n_fb + phi[z]);
                        let idx = (((s * n_st + st) * n_u + u) * n_z + z) * n_v;
                        for v in 0..n_v {
                            data[idx + v] = base * pvrow[v];
                        }
                    }
                }
            }
        }
        JointTensor::new(
            vec![n_s, n_st, n_u, n_z, n_v],
            vec!["s".into(), "s_T".into(), "u".into(), "z".into(), "v".into()],
            data,
        )
    }

    /// Rate `I(U;Z) - I(U;S_T) - I(V;S_T|U,Z)` and expected distortion on the
    /// current joint.
    pub fn rate_and_distortion(&self, eff: &EffectiveChannel) -> Result<(f64, f64)> {
        let joint = self.joint_tensor(eff)?;
        let rate = crate::prob::mutual_information(&joint, &[2], &[3])
            - crate::prob::mutual_information(&joint, &[2], &[1])
            - crate::prob::conditional_mutual_information(&joint, &[4], &[1], &[2, 3]);

        let spec = &eff.spec;
        let edot = self.edot(eff);
        let (n_u, n_v, n_z, n_s, n_st) = (eff.n_u(), self.n_v(), spec.n_z, spec.n_s, spec.n_st);
        let mut acc = Kahan::default();
        let data = joint.data();
        for s in 0..n_s {
            for st in 0..n_st {
                for u in 0..n_u {
                    for z in 0..n_z {
                        let idx = (((s * n_st + st) * n_u + u) * n_z + z) * n_v;
                        for v in 0..n_v {
                            let p = data[idx + v];
                            if p > 0.0 {
                                acc.add(p * edot[((u * n_v + v) * n_z + z) * n_s + s]);
                            }
                        }
                    }
                }
            }
        }
        Ok((rate, acc.value()))
    }
}

/// Random initialization on the simplex (Dirichlet(1) rows) followed by one
/// posterior pass.
pub fn init_state(eff: &EffectiveChannel, rho: f64, opts: &SolveOptions) -> Result<SolverState> {
    let spec = &eff.spec;
    let n_u = eff.n_u();
    let n_v = opts.n_v.unwrap_or_else(|| default_n_v(spec.n_st));
    if n_u == 0 || n_v == 0 || spec.n_shat == 0 {
        return Err(Error::InvalidArgument("zero-size alphabet".into()));
    }
    if rho < 0.0 {
        return Err(Error::InvalidArgument("rho must be nonnegative".into()));
    }
    let n_fb = spec.n_fb();
    let pu_rows = match eff.mode {
        CausalityMode::NonCausal => spec.n_st,
        _ => 1,
    };
    let mut g = SplitMix64::new(opts.seed);
    let mut sample = |rows: usize, cols: usize| -> Vec<f64> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(g.dirichlet1(cols));
        }
        data
    };
    let pu = CondDist::new(vec![pu_rows], n_u, sample(pu_rows, n_u))?;
    let pv = CondDist::new(
        vec![spec.n_st, n_u, n_fb],
        n_v,
        sample(spec.n_st * n_u * n_fb, n_v),
    )?;
    let est = CondDist::new(
        vec![n_u, n_v, spec.n_z],
        spec.n_shat,
        sample(n_u * n_v * spec.n_z, spec.n_shat),
    )?;
    let mut state = SolverState {
        mode: eff.mode,
        rho,
        pu,
        pv,
        qu: CondDist::uniform(vec![spec.n_z], n_u),
        qv: CondDist::uniform(vec![n_u, spec.n_z], n_v),
        est,
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
        diag: Diagnostics::default(),
    };
    state.update_posteriors(eff);
    Ok(state)
}

/// Runs the block coordinate loop from a fresh random initialization.
pub fn solve(eff: &EffectiveChannel, rho: f64, opts: &SolveOptions) -> Result<(SolverState, CDPoint)> {
    let state = init_state(eff, rho, opts)?;
    solve_from(eff, state, opts)
}

/// Runs the block coordinate loop from a given state. Used for restarts that
/// chain across modes or neighboring multiplier values; the state's `rho` is
/// kept.
pub fn solve_from(
    eff: &EffectiveChannel,
    mut state: SolverState,
    opts: &SolveOptions,
) -> Result<(SolverState, CDPoint)> {
    if opts.delta <= 0.0 {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let mut prev_l = f64::NEG_INFINITY;
    let mut converged = false;
    // Chained starts may carry posteriors computed under another prior
    // configuration; align them before the first pass.
    state.update_posteriors(eff);
    while state.iteration < opts.max_iters {
        state.iteration += 1;
        let edot_old = state.edot(eff);
        state.update_pu_with(eff, &edot_old);
        state.update_pv_with(eff, &edot_old);
        state.update_estimator(eff);
        // Refresh the posteriors to the new joint before measuring: the gap
        // of the bound to the Lagrangian certifies stationarity only when
        // the variational blocks are the exact conditionals of the current
        // priors.
        state.update_posteriors(eff);
        let edot_new = state.edot(eff);
        state.l_value = state.compute_l_with(eff, &edot_new);
        state.b_value = state.compute_b_with(eff, &edot_new);
        let gap = state.b_value - state.l_value;
        if gap < -1e-9 {
            state.diag.b_violations += 1;
        }
        if state.l_value < prev_l - 1e-10 {
            state.diag.monotonicity_violations += 1;
        }
        state.diag.min_gap = state.diag.min_gap.min(gap);
        prev_l = state.l_value;
        if gap <= opts.delta && state.estimator_optimal {
            converged = true;
            break;
        }
    }
    if !converged {
        state.flags.max_iters = true;
    }
    let (rate, distortion) = state.rate_and_distortion(eff)?;
    let point = CDPoint {
        rho: state.rho,
        rate_nats: rate,
        distortion,
        iterations: state.iteration,
        gap: state.b_value - state.l_value,
        l: state.l_value,
        b: state.b_value,
        mode: state.mode,
        flags: state.flags,
        certificate: None,
    };
    Ok((state, point))
}

/// Best of `restarts` seeded runs, judged by the final Lagrangian value.
pub fn solve_best_of(
    eff: &EffectiveChannel,
    rho: f64,
    opts: &SolveOptions,
    restarts: usize,
) -> Result<(SolverState, CDPoint)> {
    let restarts = restarts.max(1);
    let mut best: Option<(SolverState, CDPoint)> = None;
    for r in 0..restarts {
        let mut o = opts.clone();
        o.seed = derive_seed(opts.seed, 0x7e57, r as u64);
        let (st, pt) = solve(eff, rho, &o)?;
        if best.as_ref().map_or(true, |(b, _)| st.l_value > b.l_value) {
            best = Some((st, pt));
        }
    }
    Ok(best.unwrap())
}

/// A swept trade-off curve: one point per multiplier, sorted by distortion.
/// Shape violations (non-monotone or non-concave beyond tolerance) are
/// reported, not repaired.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<CDPoint>,
    pub warnings: Vec<String>,
}

pub fn sweep_curve(
    eff: &EffectiveChannel,
    rho_grid: &[f64],
    opts: &SolveOptions,
    restarts: usize,
) -> Result<SweepResult> {
    if rho_grid.is_empty() {
        return Err(Error::InvalidArgument("rho grid is empty".into()));
    }
    if rho_grid.iter().any(|&r| r < 0.0) {
        return Err(Error::InvalidArgument("rho must be nonnegative".into()));
    }
    use rayon::prelude::*;
    let results: Result<Vec<CDPoint>> = rho_grid
        .par_iter()
        .enumerate()
        .map(|(i, &rho)| {
            let mut o = opts.clone();
            o.seed = derive_seed(opts.seed, i as u64, 0);
            solve_best_of(eff, rho, &o, restarts).map(|(_, p)| p)
        })
        .collect();
    let mut points = results?;
    points.sort_by(|a, b| a.distortion.partial_cmp(&b.distortion).unwrap());
    let warnings = curve_shape_warnings(&points, 1e-6);
    Ok(SweepResult { points, warnings })
}

/// Checks a distortion-sorted point list for nondecreasing rate and
/// concavity, within `tol` on discrete differences.
pub fn curve_shape_warnings(points: &[CDPoint], tol: f64) -> Vec<String> {
    let mut warnings = Vec::new();
    for w in points.windows(2) {
        if w[1].rate_nats < w[0].rate_nats - tol {
            warnings.push(format!(
                "rate not nondecreasing: R({:.6}) = {:.9} > R({:.6}) = {:.9}",
                w[0].distortion, w[0].rate_nats, w[1].distortion, w[1].rate_nats
            ));
        }
    }
    for w in points.windows(3) {
        let (d0, d1, d2) = (w[0].distortion, w[1].distortion, w[2].distortion);
        let (r0, r1, r2) = (w[0].rate_nats, w[1].rate_nats, w[2].rate_nats);
        if d2 - d0 > 1e-12 {
            let lerp = r0 + (r2 - r0) * (d1 - d0) / (d2 - d0);
            if r1 < lerp - tol {
                warnings.push(format!(
                    "rate not concave at D = {d1:.6}: {r1:.9} < chord {lerp:.9}"
                ));
            }
        }
    }
    warnings
}

/// Entropies of the auxiliary and transmit-signal distributions of a solved
/// state, with near-deterministic blocks flagged (below 1e-3 nats).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h_u_nats: f64,
    pub h_x_nats: f64,
    pub near_deterministic: Vec<String>,
}

pub fn entropy_report(state: &SolverState, eff: &EffectiveChannel) -> EntropyReport {
    let spec = &eff.spec;
    let n_u = eff.n_u();
    let w = spec.state_joint();
    let p_st: Vec<f64> = (0..spec.n_st)
        .map(|st| (0..spec.n_s).map(|s| w[s * spec.n_st + st]).sum())
        .collect();
    let mut p_u = vec![0.0; n_u];
    let mut p_x = vec![0.0; spec.n_x];
    for st in 0..spec.n_st {
        for u in 0..n_u {
            let mass = p_st[st] * state.pu_at(st, u);
            p_u[u] += mass;
            p_x[eff.mapping[u][st]] += mass;
        }
    }
    let h_u = entropy(&p_u);
    let h_x = entropy(&p_x);
    let mut near = Vec::new();
    if h_u < 1e-3 {
        near.push("U".to_string());
    }
    if h_x < 1e-3 {
        near.push("X".to_string());
    }
    EntropyReport {
        h_u_nats: h_u,
        h_x_nats: h_x,
        near_deterministic: near,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{expand_shannon_strategy, ChannelSpec};
    use crate::oracle::{ba_capacity, min_distortion_deterministic_x, random_dmc, random_sddmc};
    use crate::prob::ProbVec;

    fn expand(spec: &ChannelSpec, mode: CausalityMode) -> EffectiveChannel {
        expand_shannon_strategy(spec, mode, None, false).unwrap()
    }

    fn tight_opts(seed: u64) -> SolveOptions {
        SolveOptions {
            delta: 1e-9,
            seed,
            ..SolveOptions::default()
        }
    }

    /// Direct sixfold-loop Lagrangian, independent of the solver's own
    /// implementation.
    fn l_direct(state: &SolverState, eff: &EffectiveChannel) -> f64 {
        let spec = &eff.spec;
        let (n_u, n_v) = (eff.n_u(), state.n_v());
        let n_fb = spec.n_fb();
        let w = spec.state_joint();
        let mut total = 0.0;
        for s in 0..spec.n_s {
            for st in 0..spec.n_st {
                for u in 0..n_u {
                    let pu = match state.mode {
                        CausalityMode::NonCausal => state.pu.at(st, u),
                        _ => state.pu.at(0, u),
                    };
                    for z in 0..spec.n_z {
                        let y = spec.feedback_map[z];
                        for v in 0..n_v {
                            let pv = state.pv.at((st * n_u + u) * n_fb + y, v);
                            let p = w[s * spec.n_st + st] * pu * eff.kernel_row(u, st, s)[z] * pv;
                            if p <= 0.0 {
                                continue;
                            }
                            let mut e = 0.0;
                            for sh in 0..spec.n_shat {
                                e += state.est.at((u * n_v + v) * spec.n_z + z, sh)
                                    * spec.distortion[s * spec.n_shat + sh];
                            }
                            let bracket = (state.qu.at(z, u) * state.qv.at(u * spec.n_z + z, v)
                                / (pu * pv))
                                .ln()
                                - state.rho * e;
                            total += p * bracket;
                        }
                    }
                }
            }
        }
        total
    }

    #[test]
    fn project_simplex_examples() {
        // Already on the simplex: identity.
        let p = project_simplex(&[0.2, 0.5, 0.3]);
        for (a, b) in p.iter().zip(&[0.2, 0.5, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        // Vertex case.
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        // Hand-computed KKT: shift tau = 0.25.
        let p = project_simplex(&[0.6, 0.9]);
        assert!((p[0] - 0.35).abs() < 1e-15);
        assert!((p[1] - 0.65).abs() < 1e-15);
    }

    #[test]
    fn init_single_st_has_one_row_in_every_mode() {
        let spec = random_dmc(2, 2, 3);
        for mode in [
            CausalityMode::StrictlyCausal,
            CausalityMode::Causal,
            CausalityMode::NonCausal,
        ] {
            let eff = expand(&spec, mode);
            let st = init_state(&eff, 0.0, &tight_opts(1)).unwrap();
            assert_eq!(st.pu.n_rows(), 1);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let spec = random_sddmc(2, 2, 2, 3, 2, 7, true);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let a = init_state(&eff, 0.5, &tight_opts(42)).unwrap();
        let b = init_state(&eff, 0.5, &tight_opts(42)).unwrap();
        assert_eq!(a.pu, b.pu);
        assert_eq!(a.pv, b.pv);
        assert_eq!(a.est, b.est);
    }

    #[test]
    fn default_v_cardinality() {
        assert_eq!(default_n_v(3), 4);
        assert_eq!(default_n_v(1), 1);
        let spec = random_sddmc(3, 3, 2, 3, 3, 7, false);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let st = init_state(&eff, 0.0, &tight_opts(1)).unwrap();
        assert_eq!(st.pv.out_size(), 4);
    }

    #[test]
    fn posteriors_independent_channel_gives_marginal() {
        // All kernel rows equal: U independent of Z, so q(u|z) = p(u).
        let mut spec = random_dmc(3, 4, 5);
        let row = vec![0.1, 0.2, 0.3, 0.4];
        let mut rows = Vec::new();
        for _ in 0..3 {
            rows.extend_from_slice(&row);
        }
        spec.p_z_given_xs = CondDist::new(vec![3, 1], 4, rows).unwrap();
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut st = init_state(&eff, 0.0, &tight_opts(9)).unwrap();
        st.update_posteriors(&eff);
        for z in 0..4 {
            for u in 0..3 {
                assert!((st.qu.at(z, u) - st.pu.at(0, u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn posteriors_deterministic_channel_gives_one_hot() {
        // Identity channel: z = u.
        let mut spec = random_dmc(3, 3, 5);
        let mut rows = vec![0.0; 9];
        for u in 0..3 {
            rows[u * 3 + u] = 1.0;
        }
        spec.p_z_given_xs = CondDist::new(vec![3, 1], 3, rows).unwrap();
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut st = init_state(&eff, 0.0, &tight_opts(9)).unwrap();
        st.update_posteriors(&eff);
        for z in 0..3 {
            for u in 0..3 {
                let want = if u == z { 1.0 } else { 0.0 };
                assert!((st.qu.at(z, u) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn posteriors_match_bruteforce_bayes() {
        let spec = random_sddmc(2, 2, 2, 3, 2, 11, true);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let mut st = init_state(&eff, 0.3, &tight_opts(13)).unwrap();
        st.update_posteriors(&eff);
        // Brute-force joint over (s, s_T, u, z, v) from the factorization.
        let n_u = eff.n_u();
        let n_v = st.n_v();
        let n_fb = spec.n_fb();
        let w = spec.state_joint();
        let mut m_uz = vec![0.0; n_u * spec.n_z];
        let mut m_uzv = vec![0.0; n_u * spec.n_z * n_v];
        for s in 0..spec.n_s {
            for stt in 0..spec.n_st {
                for u in 0..n_u {
                    for z in 0..spec.n_z {
                        let y = spec.feedback_map[z];
                        for v in 0..n_v {
                            let p = w[s * spec.n_st + stt]
                                * st.pu.at(stt, u)
                                * eff.kernel_row(u, stt, s)[z]
                                * st.pv.at((stt * n_u + u) * n_fb + y, v);
                            m_uz[u * spec.n_z + z] += p / n_v as f64 * 0.0; // placeholder
                            m_uzv[(u * spec.n_z + z) * n_v + v] += p;
                        }
                    }
                }
            }
        }
        for u in 0..n_u {
            for z in 0..spec.n_z {
                m_uz[u * spec.n_z + z] =
                    (0..n_v).map(|v| m_uzv[(u * spec.n_z + z) * n_v + v]).sum();
            }
        }
        for z in 0..spec.n_z {
            let mz: f64 = (0..n_u).map(|u| m_uz[u * spec.n_z + z]).sum();
            for u in 0..n_u {
                let want = m_uz[u * spec.n_z + z] / mz;
                assert!((st.qu.at(z, u) - want).abs() < 1e-12);
                for v in 0..n_v {
                    let wv = m_uzv[(u * spec.n_z + z) * n_v + v] / m_uz[u * spec.n_z + z];
                    assert!((st.qv.at(u * spec.n_z + z, v) - wv).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn update_pu_symmetric_channel_gives_uniform() {
        let mut spec = random_dmc(3, 4, 5);
        let row = vec![0.4, 0.3, 0.2, 0.1];
        let mut rows = Vec::new();
        for _ in 0..3 {
            rows.extend_from_slice(&row);
        }
        spec.p_z_given_xs = CondDist::new(vec![3, 1], 4, rows).unwrap();
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(3);
        opts.n_v = Some(1);
        let mut st = init_state(&eff, 0.0, &opts).unwrap();
        // Symmetric configuration: the posterior carries no preference among
        // inputs, so the KKT update lands on the uniform row.
        st.qu = CondDist::uniform(vec![spec.n_z], 3);
        st.update_pu(&eff);
        for u in 0..3 {
            assert!((st.pu.at(0, u) - 1.0 / 3.0).abs() < 1e-12);
        }
        // And the solved fixed point for a fully symmetric channel is
        // uniform as well (any input distribution is optimal; the update
        // preserves the uniform one).
        st.update_posteriors(&eff);
        st.update_pu(&eff);
        for u in 0..3 {
            assert!((st.pu.at(0, u) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn update_pu_single_letter_stays_point() {
        let spec = random_dmc(1, 3, 5);
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut st = init_state(&eff, 0.0, &tight_opts(3)).unwrap();
        st.update_posteriors(&eff);
        st.update_pu(&eff);
        assert_eq!(st.pu.at(0, 0), 1.0);
    }

    #[test]
    fn solver_fixed_point_satisfies_blahut_condition() {
        // At rho = 0 with no state, the converged input distribution must
        // equalize D(K(.|u) || q_Z) over its support at the capacity value.
        let spec = random_dmc(3, 4, 21);
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(5);
        opts.delta = 1e-12;
        let (st, pt) = solve(&eff, 0.0, &opts).unwrap();
        let mut qz = vec![0.0; spec.n_z];
        for u in 0..3 {
            for z in 0..spec.n_z {
                qz[z] += st.pu.at(0, u) * spec.p_z_given_xs.at(u, z);
            }
        }
        for u in 0..3 {
            if st.pu.at(0, u) < 1e-6 {
                continue;
            }
            let mut div = 0.0;
            for z in 0..spec.n_z {
                let k = spec.p_z_given_xs.at(u, z);
                if k > 0.0 {
                    div += k * (k / qz[z]).ln();
                }
            }
            assert!(
                (div - pt.rate_nats).abs() < 1e-5,
                "divergence {div} vs rate {}",
                pt.rate_nats
            );
        }
    }

    #[test]
    fn update_pv_degenerate_v_is_point() {
        let spec = random_sddmc(2, 2, 2, 2, 2, 3, true);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let mut opts = tight_opts(3);
        opts.n_v = Some(1);
        let mut st = init_state(&eff, 0.5, &opts).unwrap();
        st.update_pv(&eff);
        for r in 0..st.pv.n_rows() {
            assert_eq!(st.pv.at(r, 0), 1.0);
        }
    }

    #[test]
    fn update_pv_uniform_inputs_stay_uniform() {
        // rho = 0 and uniform q(v|u,z) make the exponent constant in v.
        let spec = random_sddmc(2, 2, 2, 2, 2, 3, true);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let mut st = init_state(&eff, 0.0, &tight_opts(3)).unwrap();
        let n_v = st.n_v();
        st.qv = CondDist::uniform(vec![eff.n_u(), spec.n_z], n_v);
        st.update_pv(&eff);
        for r in 0..st.pv.n_rows() {
            for v in 0..n_v {
                assert!((st.pv.at(r, v) - 1.0 / n_v as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_pv_increases_lagrangian() {
        let spec = random_sddmc(3, 3, 2, 3, 3, 17, true);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let mut st = init_state(&eff, 0.7, &tight_opts(23)).unwrap();
        st.update_posteriors(&eff);
        let before = l_direct(&st, &eff);
        st.update_pv(&eff);
        let after = l_direct(&st, &eff);
        assert!(
            after >= before - 1e-12,
            "L decreased across v-update: {before} -> {after}"
        );
        assert!(after > before + 1e-9, "random init should not be stationary");
    }

    #[test]
    fn update_estimator_skip_path_keeps_one_hot() {
        let spec = random_sddmc(2, 1, 2, 2, 2, 3, false);
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(3);
        opts.n_v = Some(1);
        let mut st = init_state(&eff, 1.0, &opts).unwrap();
        // Place every estimator row at its exact optimum, then update.
        let n_rows = st.est.n_rows();
        let joint = st.joint_tensor(&eff).unwrap();
        let n_v = st.n_v();
        // Reconstruct a-vectors directly.
        for row in 0..n_rows {
            let u = row / (n_v * spec.n_z);
            let z = row % spec.n_z;
            let mut a = vec![0.0; spec.n_shat];
            for s in 0..spec.n_s {
                let p = joint.data()
                    [(((s * spec.n_st) * eff.n_u() + u) * spec.n_z + z) * n_v];
                for sh in 0..spec.n_shat {
                    a[sh] += p * spec.distortion[s * spec.n_shat + sh];
                }
            }
            let best = a
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                .unwrap()
                .0;
            let r = st.est.row_mut(row);
            r.fill(0.0);
            r[best] = 1.0;
        }
        let before = st.est.clone();
        st.update_estimator(&eff);
        assert_eq!(st.est, before);
        assert!(st.estimator_optimal);
    }

    #[test]
    fn update_estimator_huge_t_barely_moves() {
        let spec = random_sddmc(2, 1, 2, 2, 2, 3, false);
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(3);
        opts.t_schedule = TSchedule {
            t0: Some(1e15),
            decay: false,
        };
        let mut st = init_state(&eff, 1.0, &opts).unwrap();
        let before = st.est.clone();
        st.update_estimator(&eff);
        for r in 0..st.est.n_rows() {
            for sh in 0..spec.n_shat {
                assert!((st.est.at(r, sh) - before.at(r, sh)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn update_estimator_projection_example() {
        // a = (1, 0), p_prev = (0.5, 0.5), T = 1: projection of (-0.5, 0.5)
        // is the vertex (0, 1).
        let p = project_simplex(&[0.5 - 1.0, 0.5 - 0.0]);
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn lagrangian_identity_after_posterior_update() {
        let spec = random_sddmc(3, 3, 2, 4, 3, 31, true);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let mut st = init_state(&eff, 0.8, &tight_opts(37)).unwrap();
        st.update_posteriors(&eff);
        let (rate, dist) = st.rate_and_distortion(&eff).unwrap();
        let l = st.compute_l(&eff);
        assert!(
            (l - (rate - st.rho * dist)).abs() < 1e-10,
            "variational L {l} vs plain objective {}",
            rate - st.rho * dist
        );
    }

    #[test]
    fn lagrangian_degenerate_aux_is_minus_rho_distortion() {
        let spec = random_sddmc(3, 1, 2, 3, 3, 41, false);
        // Make the channel independent of everything: one shared row.
        let mut spec = spec;
        let row = vec![0.2, 0.5, 0.3];
        let mut rows = Vec::new();
        for _ in 0..spec.n_x * spec.n_s {
            rows.extend_from_slice(&row);
        }
        spec.p_z_given_xs = CondDist::new(vec![spec.n_x, spec.n_s], 3, rows).unwrap();
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(3);
        opts.n_v = Some(1);
        let rho = 2.5;
        let mut st = init_state(&eff, rho, &opts).unwrap();
        st.update_posteriors(&eff);
        // Uniform estimator: E[d] decouples from (u, v, z).
        st.est = CondDist::uniform(st.est.cond_sizes().to_vec(), spec.n_shat);
        let mut e_uniform = 0.0;
        for s in 0..spec.n_s {
            for sh in 0..spec.n_shat {
                e_uniform +=
                    spec.p_s[s] * spec.distortion[s * spec.n_shat + sh] / spec.n_shat as f64;
            }
        }
        // U independent of Z and |V| = 1: the log-ratio terms cancel.
        let st2 = {
            let mut s2 = st.clone();
            s2.update_posteriors(&eff);
            s2
        };
        let l = st2.compute_l(&eff);
        assert!((l - (-rho * e_uniform)).abs() < 1e-10, "L = {l}");
    }

    #[test]
    fn bound_dominates_lagrangian_on_random_states() {
        for seed in 0..12u64 {
            let spec = random_sddmc(2, 2, 2, 3, 2, 100 + seed, seed % 2 == 0);
            let mode = match seed % 3 {
                0 => CausalityMode::StrictlyCausal,
                1 => CausalityMode::Causal,
                _ => CausalityMode::NonCausal,
            };
            let eff = expand(&spec, mode);
            let mut st = init_state(&eff, (seed % 4) as f64, &tight_opts(seed)).unwrap();
            // Scramble the posteriors away from exactness too.
            let mut g = SplitMix64::new(seed ^ 0xabc);
            let n_v = st.n_v();
            let mut qu = Vec::new();
            for _ in 0..spec.n_z {
                qu.extend(g.dirichlet1(eff.n_u()));
            }
            st.qu = CondDist::new(vec![spec.n_z], eff.n_u(), qu).unwrap();
            let mut qv = Vec::new();
            for _ in 0..eff.n_u() * spec.n_z {
                qv.extend(g.dirichlet1(n_v));
            }
            st.qv = CondDist::new(vec![eff.n_u(), spec.n_z], n_v, qv).unwrap();
            let l = st.compute_l(&eff);
            let b = st.compute_b(&eff);
            assert!(b >= l - 1e-9, "B = {b} < L = {l} at seed {seed}");
        }
    }

    #[test]
    fn bound_equals_lagrangian_for_singleton_blocks() {
        let spec = random_sddmc(3, 1, 1, 3, 3, 51, false);
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(3);
        opts.n_v = Some(1);
        let mut st = init_state(&eff, 1.3, &opts).unwrap();
        st.update_posteriors(&eff);
        let l = st.compute_l(&eff);
        let b = st.compute_b(&eff);
        assert!((b - l).abs() < 1e-12, "B = {b}, L = {l}");
    }

    #[test]
    fn solve_bsc_capacity() {
        // BSC(0.1): C = ln 2 - H_b(0.1).
        let mut spec = random_dmc(2, 2, 0);
        let eps: f64 = 0.1;
        spec.p_z_given_xs =
            CondDist::new(vec![2, 1], 2, vec![1.0 - eps, eps, eps, 1.0 - eps]).unwrap();
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let (st, pt) = solve(&eff, 0.0, &tight_opts(7)).unwrap();
        let hb = -(eps * eps.ln() + (1.0 - eps) * (1.0 - eps).ln());
        let want = std::f64::consts::LN_2 - hb;
        assert!(
            (pt.rate_nats - want).abs() < 1e-5,
            "rate {} vs closed form {want}",
            pt.rate_nats
        );
        assert_eq!(st.diag.b_violations, 0);
        assert_eq!(st.diag.monotonicity_violations, 0);
        assert!(!pt.flags.max_iters);
    }

    #[test]
    fn solve_noiseless_quaternary() {
        let mut spec = random_dmc(4, 4, 0);
        let mut rows = vec![0.0; 16];
        for i in 0..4 {
            rows[i * 4 + i] = 1.0;
        }
        spec.p_z_given_xs = CondDist::new(vec![4, 1], 4, rows).unwrap();
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let (_, pt) = solve(&eff, 0.0, &tight_opts(7)).unwrap();
        assert!((pt.rate_nats - 4.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn solve_large_rho_matches_deterministic_signal_oracle() {
        // Observation quality depends on the known transmit signal: x = 0
        // reveals the state, x = 1 is noisy, x = 2 is useless.
        let mut spec = random_sddmc(3, 1, 3, 3, 3, 77, false);
        #[rustfmt::skip]
        let rows = vec![
            1.0, 0.0, 0.0,   0.0, 1.0, 0.0,   0.0, 0.0, 1.0, // x = 0
            0.6, 0.2, 0.2,   0.2, 0.6, 0.2,   0.2, 0.2, 0.6, // x = 1
            1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0,
            1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0,
            1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, // x = 2
        ];
        spec.p_z_given_xs = CondDist::new(vec![3, 3], 3, rows).unwrap();
        let grid = [0.0, 1.0, 2.0];
        for s in 0..3 {
            for sh in 0..3 {
                spec.distortion[s * 3 + sh] = (grid[s] - grid[sh]) * (grid[s] - grid[sh]);
            }
        }
        let spec = spec.to_radar_mode();
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(3);
        opts.delta = 1e-8;
        let (st, pt) = solve(&eff, 1e3, &opts).unwrap();
        let (bx, dmin) = min_distortion_deterministic_x(&spec).unwrap();
        assert_eq!(bx, 0);
        assert!(
            (pt.distortion - dmin).abs() < 1e-6,
            "solver {} vs oracle {dmin}",
            pt.distortion
        );
        let report = entropy_report(&st, &eff);
        assert!(report.h_x_nats < 1e-3, "H(X) = {}", report.h_x_nats);
    }

    #[test]
    fn sweep_singleton_grid_equals_solve() {
        let spec = random_dmc(3, 3, 9);
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let opts = tight_opts(11);
        let sweep = sweep_curve(&eff, &[0.0], &opts, 1).unwrap();
        let mut o = opts.clone();
        o.seed = derive_seed(derive_seed(opts.seed, 0, 0), 0x7e57, 0);
        let (_, pt) = solve(&eff, 0.0, &o).unwrap();
        assert_eq!(sweep.points.len(), 1);
        assert!((sweep.points[0].rate_nats - pt.rate_nats).abs() < 1e-15);
    }

    #[test]
    fn modes_coincide_without_side_information() {
        let spec = random_sddmc(3, 1, 3, 4, 3, 91, false);
        let sc = expand(&spec, CausalityMode::StrictlyCausal);
        let nc = expand(&spec, CausalityMode::NonCausal);
        let (_, psc) = solve(&sc, 0.4, &tight_opts(17)).unwrap();
        let (_, pnc) = solve(&nc, 0.4, &tight_opts(17)).unwrap();
        assert!((psc.rate_nats - pnc.rate_nats).abs() < 1e-8);
        assert!((psc.distortion - pnc.distortion).abs() < 1e-8);
    }

    #[test]
    fn solver_matches_ba_on_random_channels() {
        for seed in 0..5u64 {
            let spec = random_dmc(2 + (seed as usize % 4), 2 + (seed as usize % 3), 200 + seed);
            let eff = expand(&spec, CausalityMode::StrictlyCausal);
            let mut opts = tight_opts(seed);
            opts.delta = 1e-10;
            let (_, pt) = solve(&eff, 0.0, &opts).unwrap();
            let cap = ba_capacity(&flatten_kernel(&spec), 1e-10);
            assert!(
                (pt.rate_nats - cap).abs() < 1e-6,
                "seed {seed}: solver {} vs BA {cap}",
                pt.rate_nats
            );
        }
    }

    fn flatten_kernel(spec: &ChannelSpec) -> CondDist {
        CondDist::new(vec![spec.n_x], spec.n_z, spec.p_z_given_xs.data().to_vec()).unwrap()
    }

    #[test]
    fn converged_estimator_rows_agree_with_bruteforce_argmin() {
        let spec = random_sddmc(3, 2, 2, 3, 3, 55, true);
        let eff = expand(&spec, CausalityMode::NonCausal);
        let mut opts = tight_opts(5);
        opts.delta = 1e-9;
        let (st, _) = solve(&eff, 1.0, &opts).unwrap();
        let n_u = eff.n_u();
        let n_v = st.n_v();
        let n_fb = spec.n_fb();
        let w = spec.state_joint();
        for u in 0..n_u {
            for v in 0..n_v {
                for z in 0..spec.n_z {
                    let mut a = vec![0.0; spec.n_shat];
                    let mut mass = 0.0;
                    for s in 0..spec.n_s {
                        for stt in 0..spec.n_st {
                            let p = w[s * spec.n_st + stt]
                                * st.pu.at(stt, u)
                                * eff.kernel_row(u, stt, s)[z]
                                * st.pv
                                    .at((stt * n_u + u) * n_fb + spec.feedback_map[z], v);
                            mass += p;
                            for sh in 0..spec.n_shat {
                                a[sh] += p * spec.distortion[s * spec.n_shat + sh];
                            }
                        }
                    }
                    if mass < 1e-9 {
                        continue;
                    }
                    let amin = a.iter().cloned().fold(f64::INFINITY, f64::min);
                    for sh in 0..spec.n_shat {
                        if st.est.at((u * n_v + v) * spec.n_z + z, sh) > 1e-9 {
                            assert!(
                                a[sh] <= amin + 1e-9,
                                "estimator mass on non-minimizer: a[{sh}] = {} vs {amin}",
                                a[sh]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sweep_rates_nondecreasing_in_distortion() {
        let spec = random_sddmc(3, 1, 3, 4, 3, 60, false);
        let eff = expand(&spec, CausalityMode::StrictlyCausal);
        let mut opts = tight_opts(3);
        opts.delta = 1e-8;
        let grid = [0.0, 0.05, 0.2, 0.8, 3.0, 12.0, 50.0];
        let sweep = sweep_curve(&eff, &grid, &opts, 1).unwrap();
        assert!(
            sweep.warnings.is_empty(),
            "shape warnings: {:?}",
            sweep.warnings
        );
        for w in sweep.points.windows(2) {
            assert!(w[1].rate_nats >= w[0].rate_nats - 1e-6);
        }
    }
}
