//! Channel instances and the Shannon-strategy expansion.
//!
//! A [`ChannelSpec`] is a point-to-point state-dependent channel: state prior,
//! transmitter side-information kernel, output kernel `p(z|x,s)`, a feedback
//! map `y' = phi(z)`, and a distortion matrix. [`expand_shannon_strategy`]
//! replaces the encoder `x = f(u, s_T)` by letting the auxiliary symbol `u`
//! index mappings from side information to channel inputs, which removes the
//! encoder as an optimization variable at the cost of `|X|^|S_T|` mappings in
//! the causal and non-causal modes.
//!
//! [`BCChannelSpec`] is the two-receiver broadcast variant with a joint output
//! kernel `p(z1, z2|x, s)` and estimation only at receiver 1.

mod builders;

pub use builders::{
    build_awgn_bc, build_isac_bc, build_simo_channel, psk, quant, samp, samp_complex_points,
    steering_vector, AngleUnit, AwgnBcParams, IsacBcParams, SimoParams,
};

use crate::prob::{CondDist, ProbVec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How much of the side-information sequence the encoder sees: the past, the
/// past and present, or the whole block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CausalityMode {
    StrictlyCausal,
    Causal,
    NonCausal,
}

impl CausalityMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CausalityMode::StrictlyCausal => "sc",
            CausalityMode::Causal => "c",
            CausalityMode::NonCausal => "nc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sc" | "strictly-causal" => Ok(CausalityMode::StrictlyCausal),
            "c" | "causal" => Ok(CausalityMode::Causal),
            "nc" | "non-causal" | "noncausal" => Ok(CausalityMode::NonCausal),
            other => Err(Error::InvalidArgument(format!(
                "unknown causality mode '{other}' (expected sc|c|nc)"
            ))),
        }
    }
}

/// Free-form metadata carried by channel files.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_unit: Option<String>,
    /// For composite radar outputs `z = (y, x)`: `(|Y|, |X|)` with
    /// `z = y * |X| + x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_composite: Option<(usize, usize)>,
}

pub type Labels = BTreeMap<String, Vec<String>>;

/// A point-to-point state-dependent discrete memoryless channel instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub n_s: usize,
    pub n_st: usize,
    pub n_x: usize,
    pub n_z: usize,
    pub n_shat: usize,
    pub p_s: ProbVec,
    /// Rows indexed by `s`.
    pub p_st_given_s: CondDist,
    /// Rows indexed by `(x, s)` as `x * n_s + s`.
    pub p_z_given_xs: CondDist,
    /// `y' = feedback_map[z]`; constant for "no feedback".
    pub feedback_map: Vec<usize>,
    /// Row-major `n_s x n_shat`.
    pub distortion: Vec<f64>,
    pub labels: Option<Labels>,
    pub meta: Meta,
}

impl ChannelSpec {
    /// Number of feedback symbols: the image size of the feedback map.
    pub fn n_fb(&self) -> usize {
        self.feedback_map.iter().copied().max().map_or(1, |m| m + 1)
    }

    pub fn d_max(&self) -> f64 {
        self.distortion.iter().cloned().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_s.len() != self.n_s {
            return Err(Error::InvalidSpec("p_S length != |S|".into()));
        }
        if self.p_st_given_s.cond_sizes() != [self.n_s]
            || self.p_st_given_s.out_size() != self.n_st
        {
            return Err(Error::InvalidSpec("p_ST_given_S shape mismatch".into()));
        }
        if self.p_z_given_xs.cond_sizes() != [self.n_x, self.n_s]
            || self.p_z_given_xs.out_size() != self.n_z
        {
            return Err(Error::InvalidSpec("p_Z_given_XS shape mismatch".into()));
        }
        self.p_st_given_s.validate()?;
        self.p_z_given_xs.validate()?;
        if self.feedback_map.len() != self.n_z {
            return Err(Error::InvalidSpec("feedback map must be total on Z".into()));
        }
        let n_fb = self.n_fb();
        let mut seen = vec![false; n_fb];
        for &y in &self.feedback_map {
            seen[y] = true;
        }
        if !seen.into_iter().all(|s| s) {
            return Err(Error::InvalidSpec(
                "feedback symbols must be exactly the image of the map".into(),
            ));
        }
        if self.distortion.len() != self.n_s * self.n_shat {
            return Err(Error::InvalidSpec("distortion matrix shape mismatch".into()));
        }
        if self.distortion.iter().any(|&d| !d.is_finite() || d < 0.0) {
            return Err(Error::InvalidSpec(
                "distortion entries must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Joint state weight `P(s, s_T) = p_S(s) p(s_T|s)`, row-major `(s, s_T)`.
    pub fn state_joint(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_s * self.n_st];
        for s in 0..self.n_s {
            for st in 0..self.n_st {
                w[s * self.n_st + st] = self.p_s[s] * self.p_st_given_s.at(s, st);
            }
        }
        w
    }

    /// Radar-mode transform: the receiver additionally observes the transmit
    /// signal, so the output becomes the composite `z' = (z, x)` with
    /// `z' = z * |X| + x`. Feedback of the original output is preserved
    /// (monostatic); a constant map stays constant (bistatic).
    pub fn to_radar_mode(&self) -> ChannelSpec {
        let n_z2 = self.n_z * self.n_x;
        let mut kernel = vec![0.0; self.n_x * self.n_s * n_z2];
        for x in 0..self.n_x {
            for s in 0..self.n_s {
                let row = (x * self.n_s + s) * n_z2;
                for z in 0..self.n_z {
                    kernel[row + z * self.n_x + x] = self.p_z_given_xs.at(x * self.n_s + s, z);
                }
            }
        }
        let feedback_map = (0..n_z2)
            .map(|zc| self.feedback_map[zc / self.n_x])
            .collect();
        ChannelSpec {
            n_z: n_z2,
            p_z_given_xs: CondDist::new(vec![self.n_x, self.n_s], n_z2, kernel)
                .expect("radar kernel rows stay stochastic"),
            feedback_map,
            meta: Meta {
                z_composite: Some((self.n_z, self.n_x)),
                ..self.meta.clone()
            },
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&P2pSchema::from(self)).expect("spec serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: P2pSchema = serde_json::from_str(text)
            .map_err(|e| Error::InvalidSpec(format!("channel file parse error: {e}")))?;
        let spec = schema.into_spec()?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A two-receiver broadcast channel instance with estimation at receiver 1.
/// Receiver 2 is communication-only (no distortion constraint, no feedback).
#[derive(Debug, Clone, PartialEq)]
pub struct BCChannelSpec {
    pub n_s: usize,
    pub n_st: usize,
    pub n_x: usize,
    pub n_z1: usize,
    pub n_z2: usize,
    pub n_shat1: usize,
    pub p_s: ProbVec,
    pub p_st_given_s: CondDist,
    /// Rows indexed by `(x, s)`; outputs `(z1, z2)` as `z1 * n_z2 + z2`.
    pub p_z1z2_given_xs: CondDist,
    /// Feedback from receiver 1 only: `y' = feedback_map[z1]`.
    pub feedback_map: Vec<usize>,
    /// Row-major `n_s x n_shat1` distortion at receiver 1.
    pub distortion: Vec<f64>,
    pub labels: Option<Labels>,
    pub meta: Meta,
}

impl BCChannelSpec {
    pub fn n_fb(&self) -> usize {
        self.feedback_map.iter().copied().max().map_or(1, |m| m + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_s.len() != self.n_s {
            return Err(Error::InvalidSpec("p_S length != |S|".into()));
        }
        if self.p_st_given_s.cond_sizes() != [self.n_s]
            || self.p_st_given_s.out_size() != self.n_st
        {
            return Err(Error::InvalidSpec("p_ST_given_S shape mismatch".into()));
        }
        if self.p_z1z2_given_xs.cond_sizes() != [self.n_x, self.n_s]
            || self.p_z1z2_given_xs.out_size() != self.n_z1 * self.n_z2
        {
            return Err(Error::InvalidSpec("p_Z1Z2_given_XS shape mismatch".into()));
        }
        self.p_st_given_s.validate()?;
        self.p_z1z2_given_xs.validate()?;
        if self.feedback_map.len() != self.n_z1 {
            return Err(Error::InvalidSpec("feedback map must be total on Z1".into()));
        }
        if self.distortion.len() != self.n_s * self.n_shat1 {
            return Err(Error::InvalidSpec("distortion matrix shape mismatch".into()));
        }
        if self.distortion.iter().any(|&d| !d.is_finite() || d < 0.0) {
            return Err(Error::InvalidSpec(
                "distortion entries must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn state_joint(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_s * self.n_st];
        for s in 0..self.n_s {
            for st in 0..self.n_st {
                w[s * self.n_st + st] = self.p_s[s] * self.p_st_given_s.at(s, st);
            }
        }
        w
    }

    /// Marginal kernel `p(z2|x)` with the state integrated out.
    pub fn z2_marginal_kernel(&self) -> CondDist {
        let mut raw = vec![0.0; self.n_x * self.n_z2];
        for x in 0..self.n_x {
            for s in 0..self.n_s {
                let row = self.p_z1z2_given_xs.row(x * self.n_s + s);
                for z1 in 0..self.n_z1 {
                    for z2 in 0..self.n_z2 {
                        raw[x * self.n_z2 + z2] += self.p_s[s] * row[z1 * self.n_z2 + z2];
                    }
                }
            }
        }
        CondDist::from_unnormalized(vec![self.n_x], self.n_z2, &raw)
            .expect("marginal kernel shape")
            .0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BcSchema::from(self)).expect("spec serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: BcSchema = serde_json::from_str(text)
            .map_err(|e| Error::InvalidSpec(format!("channel file parse error: {e}")))?;
        let spec = schema.into_spec()?;
        spec.validate()?;
        Ok(spec)
    }
}

/// The Shannon-strategy expansion of a [`ChannelSpec`].
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    /// `mapping[u][s_T]` is the transmitted `x` index.
    pub mapping: Vec<Vec<usize>>,
    /// Rows indexed by `(u, s_T, s)`; equals `p(z | x_u(s_T), s)` exactly.
    pub kernel: CondDist,
    pub mode: CausalityMode,
    pub truncated: bool,
    pub spec: ChannelSpec,
}

impl EffectiveChannel {
    pub fn n_u(&self) -> usize {
        self.mapping.len()
    }

    #[inline]
    pub fn kernel_row(&self, u: usize, st: usize, s: usize) -> &[f64] {
        self.kernel
            .row((u * self.spec.n_st + st) * self.spec.n_s + s)
    }
}

/// Default cap on the strategy table size `|X|^|S_T|`.
pub const DEFAULT_STRATEGY_CAP: usize = 4096;

/// Expands a channel into its Shannon-strategy form.
///
/// Strictly causal mode uses the `|X|` constant maps; causal and non-causal
/// modes enumerate all `|X|^|S_T|` maps (or the first `cap` of them when
/// `allow_truncation` is set).
pub fn expand_shannon_strategy(
    spec: &ChannelSpec,
    mode: CausalityMode,
    cap: Option<usize>,
    allow_truncation: bool,
) -> Result<EffectiveChannel> {
    spec.validate()?;
    let cap = cap.unwrap_or(DEFAULT_STRATEGY_CAP);
    let (mapping, truncated) = match mode {
        CausalityMode::StrictlyCausal => (
            (0..spec.n_x).map(|x| vec![x; spec.n_st]).collect::<Vec<_>>(),
            false,
        ),
        CausalityMode::Causal | CausalityMode::NonCausal => {
            let total = (spec.n_x as u128).checked_pow(spec.n_st as u32);
            let total_usize = total.and_then(|t| usize::try_from(t).ok());
            let (n_u, truncated) = match total_usize {
                Some(t) if t <= cap => (t, false),
                _ if allow_truncation => (cap, true),
                _ => {
                    return Err(Error::StrategyExplosion(
                        total_usize.unwrap_or(usize::MAX),
                        cap,
                    ))
                }
            };
            let mut maps = Vec::with_capacity(n_u);
            for u in 0..n_u {
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
    let n_u = mapping.len();
    let mut data = Vec::with_capacity(n_u * spec.n_st * spec.n_s * spec.n_z);
    for map in &mapping {
        for st in 0..spec.n_st {
            let x = map[st];
            for s in 0..spec.n_s {
                data.extend_from_slice(spec.p_z_given_xs.row(x * spec.n_s + s));
            }
        }
    }
    let kernel = CondDist::new(vec![n_u, spec.n_st, spec.n_s], spec.n_z, data)?;
    Ok(EffectiveChannel {
        mapping,
        kernel,
        mode,
        truncated,
        spec: spec.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct P2pSizes {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "S_T")]
    st: usize,
    #[serde(rename = "X")]
    x: usize,
    #[serde(rename = "Z")]
    z: usize,
    #[serde(rename = "Shat")]
    shat: usize,
}

#[derive(Serialize, Deserialize)]
struct P2pSchema {
    sizes: P2pSizes,
    #[serde(rename = "p_S")]
    p_s: Vec<f64>,
    #[serde(rename = "p_ST_given_S")]
    p_st_given_s: Vec<f64>,
    #[serde(rename = "p_Z_given_XS")]
    p_z_given_xs: Vec<f64>,
    feedback_map: Vec<usize>,
    distortion: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
    #[serde(default)]
    meta: Meta,
}

impl From<&ChannelSpec> for P2pSchema {
    fn from(c: &ChannelSpec) -> Self {
        P2pSchema {
            sizes: P2pSizes {
                s: c.n_s,
                st: c.n_st,
                x: c.n_x,
                z: c.n_z,
                shat: c.n_shat,
            },
            p_s: c.p_s.as_slice().to_vec(),
            p_st_given_s: c.p_st_given_s.data().to_vec(),
            p_z_given_xs: c.p_z_given_xs.data().to_vec(),
            feedback_map: c.feedback_map.clone(),
            distortion: c.distortion.clone(),
            labels: c.labels.clone(),
            meta: c.meta.clone(),
        }
    }
}

impl P2pSchema {
    fn into_spec(self) -> Result<ChannelSpec> {
        Ok(ChannelSpec {
            n_s: self.sizes.s,
            n_st: self.sizes.st,
            n_x: self.sizes.x,
            n_z: self.sizes.z,
            n_shat: self.sizes.shat,
            p_s: ProbVec::new(self.p_s)?,
            p_st_given_s: CondDist::new(vec![self.sizes.s], self.sizes.st, self.p_st_given_s)?,
            p_z_given_xs: CondDist::new(
                vec![self.sizes.x, self.sizes.s],
                self.sizes.z,
                self.p_z_given_xs,
            )?,
            feedback_map: self.feedback_map,
            distortion: self.distortion,
            labels: self.labels,
            meta: self.meta,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BcSizes {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "S_T")]
    st: usize,
    #[serde(rename = "X")]
    x: usize,
    #[serde(rename = "Z1")]
    z1: usize,
    #[serde(rename = "Z2")]
    z2: usize,
    #[serde(rename = "Shat1")]
    shat1: usize,
}

#[derive(Serialize, Deserialize)]
struct BcSchema {
    sizes: BcSizes,
    #[serde(rename = "p_S")]
    p_s: Vec<f64>,
    #[serde(rename = "p_ST_given_S")]
    p_st_given_s: Vec<f64>,
    #[serde(rename = "p_Z1Z2_given_XS")]
    p_z1z2_given_xs: Vec<f64>,
    feedback_map: Vec<usize>,
    distortion: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
    #[serde(default)]
    meta: Meta,
}

impl From<&BCChannelSpec> for BcSchema {
    fn from(c: &BCChannelSpec) -> Self {
        BcSchema {
            sizes: BcSizes {
                s: c.n_s,
                st: c.n_st,
                x: c.n_x,
                z1: c.n_z1,
                z2: c.n_z2,
                shat1: c.n_shat1,
            },
            p_s: c.p_s.as_slice().to_vec(),
            p_st_given_s: c.p_st_given_s.data().to_vec(),
            p_z1z2_given_xs: c.p_z1z2_given_xs.data().to_vec(),
            feedback_map: c.feedback_map.clone(),
            distortion: c.distortion.clone(),
            labels: c.labels.clone(),
            meta: c.meta.clone(),
        }
    }
}

impl BcSchema {
    fn into_spec(self) -> Result<BCChannelSpec> {
        Ok(BCChannelSpec {
            n_s: self.sizes.s,
            n_st: self.sizes.st,
            n_x: self.sizes.x,
            n_z1: self.sizes.z1,
            n_z2: self.sizes.z2,
            n_shat1: self.sizes.shat1,
            p_s: ProbVec::new(self.p_s)?,
            p_st_given_s: CondDist::new(vec![self.sizes.s], self.sizes.st, self.p_st_given_s)?,
            p_z1z2_given_xs: CondDist::new(
                vec![self.sizes.x, self.sizes.s],
                self.sizes.z1 * self.sizes.z2,
                self.p_z1z2_given_xs,
            )?,
            feedback_map: self.feedback_map,
            distortion: self.distortion,
            labels: self.labels,
            meta: self.meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Binary symmetric channel with no side information, Hamming-style
    /// distortion on a 2-state channel whose state flips the output.
    pub(crate) fn bsc_spec(crossover: f64) -> ChannelSpec {
        // State is trivial (|S| = 1); the channel is plain BSC on x.
        let kernel = CondDist::new(
            vec![2, 1],
            2,
            vec![1.0 - crossover, crossover, crossover, 1.0 - crossover],
        )
        .unwrap();
        ChannelSpec {
            n_s: 1,
            n_st: 1,
            n_x: 2,
            n_z: 2,
            n_shat: 1,
            p_s: ProbVec::new(vec![1.0]).unwrap(),
            p_st_given_s: CondDist::new(vec![1], 1, vec![1.0]).unwrap(),
            p_z_given_xs: kernel,
            feedback_map: vec![0, 0],
            distortion: vec![0.0],
            labels: None,
            meta: Meta::default(),
        }
    }

    #[test]
    fn expand_causal_counts_all_maps() {
        let mut spec = bsc_spec(0.1);
        // Give it two side-information symbols.
        spec.n_st = 2;
        spec.p_st_given_s = CondDist::new(vec![1], 2, vec![0.5, 0.5]).unwrap();
        let eff = expand_shannon_strategy(&spec, CausalityMode::Causal, None, false).unwrap();
        assert_eq!(eff.n_u(), 4); // |X|^|S_T| = 2^2
        assert!(!eff.truncated);
    }

    #[test]
    fn expand_strictly_causal_constant_maps() {
        let mut spec = bsc_spec(0.1);
        spec.n_x = 3;
        spec.n_z = 3;
        spec.p_z_given_xs = CondDist::uniform(vec![3, 1], 3);
        spec.feedback_map = vec![0, 0, 0];
        spec.n_st = 5;
        spec.p_st_given_s = CondDist::uniform(vec![1], 5);
        let eff =
            expand_shannon_strategy(&spec, CausalityMode::StrictlyCausal, None, false).unwrap();
        assert_eq!(eff.n_u(), 3);
        for (x, map) in eff.mapping.iter().enumerate() {
            assert!(map.iter().all(|&m| m == x));
        }
    }

    #[test]
    fn expand_single_st_same_for_all_modes() {
        let spec = bsc_spec(0.2);
        for mode in [
            CausalityMode::StrictlyCausal,
            CausalityMode::Causal,
            CausalityMode::NonCausal,
        ] {
            let eff = expand_shannon_strategy(&spec, mode, None, false).unwrap();
            assert_eq!(eff.n_u(), 2);
            assert_eq!(eff.mapping, vec![vec![0], vec![1]]);
        }
    }

    #[test]
    fn expand_kernel_matches_pointwise() {
        let mut spec = bsc_spec(0.3);
        spec.n_st = 2;
        spec.p_st_given_s = CondDist::new(vec![1], 2, vec![0.4, 0.6]).unwrap();
        let eff = expand_shannon_strategy(&spec, CausalityMode::NonCausal, None, false).unwrap();
        for (u, map) in eff.mapping.iter().enumerate() {
            for st in 0..spec.n_st {
                for s in 0..spec.n_s {
                    let x = map[st];
                    assert_eq!(
                        eff.kernel_row(u, st, s),
                        spec.p_z_given_xs.row(x * spec.n_s + s)
                    );
                }
            }
        }
    }

    #[test]
    fn expand_explosion_guard() {
        let mut spec = bsc_spec(0.1);
        spec.n_st = 20;
        spec.p_st_given_s = CondDist::uniform(vec![1], 20);
        let err = expand_shannon_strategy(&spec, CausalityMode::Causal, Some(64), false);
        assert!(matches!(err, Err(Error::StrategyExplosion(_, 64))));
        let eff = expand_shannon_strategy(&spec, CausalityMode::Causal, Some(64), true).unwrap();
        assert!(eff.truncated);
        assert_eq!(eff.n_u(), 64);
    }

    #[test]
    fn strictly_causal_kernel_constant_in_st() {
        let mut spec = bsc_spec(0.25);
        spec.n_st = 3;
        spec.p_st_given_s = CondDist::uniform(vec![1], 3);
        let eff =
            expand_shannon_strategy(&spec, CausalityMode::StrictlyCausal, None, false).unwrap();
        for u in 0..eff.n_u() {
            for s in 0..spec.n_s {
                let base = eff.kernel_row(u, 0, s).to_vec();
                for st in 1..spec.n_st {
                    assert_eq!(eff.kernel_row(u, st, s), &base[..]);
                }
            }
        }
    }

    #[test]
    fn radar_mode_marginal_is_point_mass_at_x() {
        let spec = bsc_spec(0.1);
        let radar = spec.to_radar_mode();
        radar.validate().unwrap();
        assert_eq!(radar.n_z, spec.n_z * spec.n_x);
        for x in 0..spec.n_x {
            for s in 0..spec.n_s {
                let row = radar.p_z_given_xs.row(x * spec.n_s + s);
                let mut mass_per_x = vec![0.0; spec.n_x];
                for (zc, &p) in row.iter().enumerate() {
                    mass_per_x[zc % spec.n_x] += p;
                }
                for (xp, &m) in mass_per_x.iter().enumerate() {
                    if xp == x {
                        assert!((m - 1.0).abs() < 1e-12);
                    } else {
                        assert_eq!(m, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut spec = bsc_spec(0.137);
        spec.meta.seed = Some(99);
        let text = spec.to_json();
        let back = ChannelSpec::from_json(&text).unwrap();
        assert_eq!(spec, back);
    }
}
