//! Discretized Gaussian example channels.
//!
//! The builders reconstruct finite-alphabet instances of three continuous
//! models: a SIMO angle-of-arrival channel, a degraded scalar AWGN broadcast
//! channel, and a two-receiver radar-plus-communication system. Continuous
//! densities are evaluated at grid or sampled cloud points and normalized;
//! complex Gaussians use the circular convention `p(v) ~ exp(-|v - mu|^2 /
//! sigma^2)`. All sampling is driven by [`SplitMix64`], so a builder output is
//! fully determined by its parameters and seed.

use super::{BCChannelSpec, ChannelSpec, Labels, Meta};
use crate::prob::{normalize, CondDist};
use crate::rng::SplitMix64;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Unit in which angle priors and squared-error distortions are expressed.
/// Grid bounds at the interface are always degrees; `sin` is always taken in
/// radians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Degrees,
    Radians,
}

/// `N` evenly spaced points in `[a, b]`: midpoints of the `N` equal
/// subintervals, so endpoints are never emitted.
pub fn quant(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if !(a < b) && n > 1 {
        return Err(Error::InvalidArgument(format!("quant bounds {a} >= {b}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("quant needs n >= 1".into()));
    }
    Ok((0..n)
        .map(|k| a + (b - a) * (2 * k + 1) as f64 / (2 * n) as f64)
        .collect())
}

/// `n` i.i.d. uniform draws from `[a, b]`, deterministic in the seed.
pub fn samp(a: f64, b: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if a > b {
        return Err(Error::InvalidArgument(format!("samp bounds {a} > {b}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("samp needs n >= 1".into()));
    }
    let mut g = SplitMix64::new(seed);
    Ok((0..n).map(|_| g.uniform(a, b)).collect())
}

/// `n` complex `dim`-vectors sampled uniformly from the box `[lo, hi]`,
/// independently per component's real and imaginary part. Draw order is
/// point-major, then component, then re before im.
pub fn samp_complex_points(
    lo: Complex64,
    hi: Complex64,
    dim: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>> {
    if lo.re > hi.re || lo.im > hi.im {
        return Err(Error::InvalidArgument("samp box bounds inverted".into()));
    }
    if n == 0 || dim == 0 {
        return Err(Error::InvalidArgument("samp needs n, dim >= 1".into()));
    }
    let mut g = SplitMix64::new(seed);
    Ok((0..n)
        .map(|_| {
            (0..dim)
                .map(|_| Complex64::new(g.uniform(lo.re, hi.re), g.uniform(lo.im, hi.im)))
                .collect()
        })
        .collect())
}

/// Uniform linear array steering vector: component `k` is
/// `exp(j k pi sin(theta))`.
pub fn steering_vector(theta_rad: f64, n_r: usize) -> Vec<Complex64> {
    (0..n_r)
        .map(|k| (Complex64::new(0.0, k as f64 * std::f64::consts::PI * theta_rad.sin())).exp())
        .collect()
}

/// The `m` unit-modulus phase-shift-keying points `exp(j 2 pi k / m)`.
pub fn psk(m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|k| {
            Complex64::new(
                0.0,
                2.0 * std::f64::consts::PI * k as f64 / m as f64,
            )
            .exp()
        })
        .collect()
}

fn sq_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

fn fmt_complex(c: Complex64) -> String {
    format!("{:.6}{:+.6}j", c.re, c.im)
}

/// Parameters for the SIMO angle-of-arrival channel `y = h(theta) x + n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimoParams {
    /// Receive antennas.
    pub n_r: usize,
    /// Noise scale: `n ~ CN(0, sigma_n^2 I)`.
    pub sigma_n: f64,
    /// Prior scale: `theta ~ N(0, sigma_s^2)` in `angle_unit`.
    pub sigma_s: f64,
    /// Side-information scale `theta_tilde | theta ~ N(theta, sigma_st^2)`;
    /// `None` removes side information (`|S_T| = 1`).
    pub sigma_st: Option<f64>,
    /// Angle grid size over `[-90, 90]` degrees.
    pub n_theta: usize,
    /// Output cloud size.
    pub n_y: usize,
    /// Transmit constellation.
    pub x_points: Vec<Complex64>,
    /// Output cloud box half-width per real component.
    pub y_box: f64,
    pub seed: u64,
    /// Perfect feedback (`y' = z`) or none.
    pub feedback: bool,
    pub angle_unit: AngleUnit,
}

impl SimoParams {
    /// The configuration used throughout the angle-of-arrival experiments:
    /// `N_R = 8`, `sigma_n = 1.414`, `sigma_s = 0.7`, QPSK, 4 angles, 20
    /// cloud points, box 1.5, prior and distortion in radians.
    pub fn paper_default(seed: u64) -> Self {
        SimoParams {
            n_r: 8,
            sigma_n: 1.414,
            sigma_s: 0.7,
            sigma_st: None,
            n_theta: 4,
            n_y: 20,
            x_points: psk(4),
            y_box: 1.5,
            seed,
            feedback: true,
            angle_unit: AngleUnit::Radians,
        }
    }
}

/// Builds the discretized SIMO channel. States are the quantized angles, the
/// output alphabet is a sampled cloud of receive vectors, and the distortion
/// is squared angle error in the configured unit.
pub fn build_simo_channel(p: &SimoParams) -> Result<ChannelSpec> {
    if p.n_r == 0 || p.n_theta == 0 || p.n_y == 0 || p.x_points.is_empty() {
        return Err(Error::InvalidArgument("all SIMO sizes must be >= 1".into()));
    }
    let theta_deg = quant(-90.0, 90.0, p.n_theta)?;
    let theta_rad: Vec<f64> = theta_deg.iter().map(|d| d.to_radians()).collect();
    let theta_val: Vec<f64> = match p.angle_unit {
        AngleUnit::Degrees => theta_deg.clone(),
        AngleUnit::Radians => theta_rad.clone(),
    };
    let n_x = p.x_points.len();

    let raw_prior: Vec<f64> = theta_val
        .iter()
        .map(|&t| (-t * t / (2.0 * p.sigma_s * p.sigma_s)).exp())
        .collect();
    let (p_s, _) = normalize(&raw_prior);

    let (n_st, p_st_given_s) = match p.sigma_st {
        None => (1, CondDist::uniform(vec![p.n_theta], 1)),
        Some(sig) => {
            let mut raw = vec![0.0; p.n_theta * p.n_theta];
            for (i, &t) in theta_val.iter().enumerate() {
                for (j, &tt) in theta_val.iter().enumerate() {
                    raw[i * p.n_theta + j] = (-(tt - t) * (tt - t) / (2.0 * sig * sig)).exp();
                }
            }
            let (k, _) = CondDist::from_unnormalized(vec![p.n_theta], p.n_theta, &raw)?;
            (p.n_theta, k)
        }
    };

    let cloud = samp_complex_points(
        Complex64::new(-p.y_box, -p.y_box),
        Complex64::new(p.y_box, p.y_box),
        p.n_r,
        p.n_y,
        p.seed,
    )?;
    let mut raw_kernel = vec![0.0; n_x * p.n_theta * p.n_y];
    for (xi, x) in p.x_points.iter().enumerate() {
        for (si, &th) in theta_rad.iter().enumerate() {
            let hx: Vec<Complex64> = steering_vector(th, p.n_r).iter().map(|h| h * x).collect();
            let row = (xi * p.n_theta + si) * p.n_y;
            for (yi, y) in cloud.iter().enumerate() {
                let diff: Vec<Complex64> =
                    y.iter().zip(&hx).map(|(a, b)| a - b).collect();
                raw_kernel[row + yi] = (-sq_norm(&diff) / (p.sigma_n * p.sigma_n)).exp();
            }
        }
    }
    let (p_z_given_xs, _) =
        CondDist::from_unnormalized(vec![n_x, p.n_theta], p.n_y, &raw_kernel)?;

    let mut distortion = vec![0.0; p.n_theta * p.n_theta];
    for (i, &a) in theta_val.iter().enumerate() {
        for (j, &b) in theta_val.iter().enumerate() {
            distortion[i * p.n_theta + j] = (a - b) * (a - b);
        }
    }

    let feedback_map = if p.feedback {
        (0..p.n_y).collect()
    } else {
        vec![0; p.n_y]
    };

    let mut labels = Labels::new();
    labels.insert(
        "S".into(),
        theta_deg.iter().map(|d| format!("{d:.3}deg")).collect(),
    );
    labels.insert("X".into(), p.x_points.iter().map(|&c| fmt_complex(c)).collect());

    let spec = ChannelSpec {
        n_s: p.n_theta,
        n_st,
        n_x,
        n_z: p.n_y,
        n_shat: p.n_theta,
        p_s,
        p_st_given_s,
        p_z_given_xs,
        feedback_map,
        distortion,
        labels: Some(labels),
        meta: Meta {
            seed: Some(p.seed),
            builder: Some("simo".into()),
            angle_unit: Some(
                match p.angle_unit {
                    AngleUnit::Degrees => "degrees",
                    AngleUnit::Radians => "radians",
                }
                .into(),
            ),
            z_composite: None,
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Parameters for the degraded scalar AWGN broadcast channel
/// `y1 = x + s1 + n1`, `y2 = x + s1 + s2 + n2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AwgnBcParams {
    pub sigma_n1: f64,
    pub sigma_n2: f64,
    pub sigma_s1: f64,
    pub sigma_s2: f64,
    pub sigma_st: f64,
    pub n_s1: usize,
    pub n_s2: usize,
    pub n_st: usize,
    pub n_y1: usize,
    pub n_y2: usize,
    /// Cloud box half-width per real component.
    pub box_half: f64,
    /// Cloud box center; shifting it together with the constellation leaves
    /// the kernel invariant.
    pub box_center: Complex64,
    pub x_points: Vec<Complex64>,
    pub seed: u64,
    pub feedback1: bool,
    /// Build `y2` by passing `y1` through the Gaussian degradation kernel of
    /// variance `sigma_s2^2 + sigma_n2^2 - sigma_n1^2`, making the discrete
    /// channel physically degraded by construction. With `false` the two
    /// outputs are discretized independently and degradedness only holds
    /// approximately.
    pub exact_degraded: bool,
}

impl AwgnBcParams {
    /// The broadcast configuration from the numerical experiments:
    /// `sigma_n1 = sigma_n2 = 0.2`, `sigma_s1 = 0.5`,
    /// `sigma_s2 = sigma_st = 0.3`, QPSK, clouds of 5/5/4/5/5 points in the
    /// box of half-width 1.5.
    pub fn paper_default(seed: u64) -> Self {
        AwgnBcParams {
            sigma_n1: 0.2,
            sigma_n2: 0.2,
            sigma_s1: 0.5,
            sigma_s2: 0.3,
            sigma_st: 0.3,
            n_s1: 5,
            n_s2: 5,
            n_st: 4,
            n_y1: 5,
            n_y2: 5,
            box_half: 1.5,
            box_center: Complex64::new(0.0, 0.0),
            x_points: psk(4),
            seed,
            feedback1: true,
            exact_degraded: true,
        }
    }
}

pub fn build_awgn_bc(p: &AwgnBcParams) -> Result<BCChannelSpec> {
    if p.n_s1 == 0 || p.n_s2 == 0 || p.n_st == 0 || p.n_y1 == 0 || p.n_y2 == 0 {
        return Err(Error::InvalidArgument("all BC sizes must be >= 1".into()));
    }
    let lo = Complex64::new(-p.box_half, -p.box_half);
    let hi = Complex64::new(p.box_half, p.box_half);
    let scalar_cloud = |n: usize, seed: u64, center: Complex64| -> Result<Vec<Complex64>> {
        Ok(samp_complex_points(lo + center, hi + center, 1, n, seed)?
            .into_iter()
            .map(|v| v[0])
            .collect())
    };
    let zero = Complex64::new(0.0, 0.0);
    let s1 = scalar_cloud(p.n_s1, crate::rng::derive_seed(p.seed, 1, 0), zero)?;
    let s2 = scalar_cloud(p.n_s2, crate::rng::derive_seed(p.seed, 2, 0), zero)?;
    let st = scalar_cloud(p.n_st, crate::rng::derive_seed(p.seed, 3, 0), zero)?;
    let y1 = scalar_cloud(p.n_y1, crate::rng::derive_seed(p.seed, 4, 0), p.box_center)?;
    let y2 = scalar_cloud(p.n_y2, crate::rng::derive_seed(p.seed, 5, 0), p.box_center)?;

    let n_s = p.n_s1 * p.n_s2;
    let gauss = |v: Complex64, mu: Complex64, var: f64| (-(v - mu).norm_sqr() / var).exp();

    let mut raw_prior = vec![0.0; n_s];
    for (i1, &a) in s1.iter().enumerate() {
        for (i2, &b) in s2.iter().enumerate() {
            raw_prior[i1 * p.n_s2 + i2] =
                gauss(a, zero, p.sigma_s1 * p.sigma_s1) * gauss(b, zero, p.sigma_s2 * p.sigma_s2);
        }
    }
    let (p_s, _) = normalize(&raw_prior);

    let mut raw_st = vec![0.0; n_s * p.n_st];
    for (i1, &a) in s1.iter().enumerate() {
        for i2 in 0..p.n_s2 {
            for (j, &t) in st.iter().enumerate() {
                raw_st[(i1 * p.n_s2 + i2) * p.n_st + j] =
                    gauss(t, a, p.sigma_st * p.sigma_st);
            }
        }
    }
    let (p_st_given_s, _) = CondDist::from_unnormalized(vec![n_s], p.n_st, &raw_st)?;

    // Receiver-1 likelihoods.
    let n_x = p.x_points.len();
    let var1 = p.sigma_n1 * p.sigma_n1;
    let mut k1 = vec![0.0; n_x * n_s * p.n_y1];
    for (xi, &x) in p.x_points.iter().enumerate() {
        for (i1, &a) in s1.iter().enumerate() {
            for i2 in 0..p.n_s2 {
                let row = (xi * n_s + i1 * p.n_s2 + i2) * p.n_y1;
                for (yi, &y) in y1.iter().enumerate() {
                    k1[row + yi] = gauss(y, x + a, var1);
                }
            }
        }
    }
    let (k1, _) = CondDist::from_unnormalized(vec![n_x, n_s], p.n_y1, &k1)?;

    let n_z = p.n_y1 * p.n_y2;
    let mut raw_joint = vec![0.0; n_x * n_s * n_z];
    if p.exact_degraded {
        let var_w = p.sigma_s2 * p.sigma_s2 + p.sigma_n2 * p.sigma_n2 - var1;
        if var_w <= 1e-12 {
            return Err(Error::InvalidArgument(
                "exact degraded build needs sigma_s2^2 + sigma_n2^2 > sigma_n1^2".into(),
            ));
        }
        let mut w = vec![0.0; p.n_y1 * p.n_y2];
        for (i, &a) in y1.iter().enumerate() {
            for (j, &b) in y2.iter().enumerate() {
                w[i * p.n_y2 + j] = gauss(b, a, var_w);
            }
        }
        let (w, _) = CondDist::from_unnormalized(vec![p.n_y1], p.n_y2, &w)?;
        for row in 0..n_x * n_s {
            for z1 in 0..p.n_y1 {
                for z2 in 0..p.n_y2 {
                    raw_joint[row * n_z + z1 * p.n_y2 + z2] = k1.at(row, z1) * w.at(z1, z2);
                }
            }
        }
    } else {
        let var2 = p.sigma_n2 * p.sigma_n2;
        for (xi, &x) in p.x_points.iter().enumerate() {
            for (i1, &a) in s1.iter().enumerate() {
                for (i2, &b) in s2.iter().enumerate() {
                    let row = xi * n_s + i1 * p.n_s2 + i2;
                    let mut k2 = vec![0.0; p.n_y2];
                    for (yi, &y) in y2.iter().enumerate() {
                        k2[yi] = gauss(y, x + a + b, var2);
                    }
                    let (k2, _) = normalize(&k2);
                    for z1 in 0..p.n_y1 {
                        for z2 in 0..p.n_y2 {
                            raw_joint[row * n_z + z1 * p.n_y2 + z2] =
                                k1.at(row, z1) * k2[z2];
                        }
                    }
                }
            }
        }
    }
    let p_z1z2_given_xs = CondDist::new(vec![n_x, n_s], n_z, raw_joint)?;

    // Receiver 1 estimates s1 only; reconstruction alphabet is the s1 cloud.
    let mut distortion = vec![0.0; n_s * p.n_s1];
    for (i1, &a) in s1.iter().enumerate() {
        for i2 in 0..p.n_s2 {
            for (j, &g) in s1.iter().enumerate() {
                distortion[(i1 * p.n_s2 + i2) * p.n_s1 + j] = (a - g).norm_sqr();
            }
        }
    }

    let feedback_map = if p.feedback1 {
        (0..p.n_y1).collect()
    } else {
        vec![0; p.n_y1]
    };

    let mut labels = Labels::new();
    labels.insert("S1".into(), s1.iter().map(|&c| fmt_complex(c)).collect());
    labels.insert("S2".into(), s2.iter().map(|&c| fmt_complex(c)).collect());
    labels.insert("X".into(), p.x_points.iter().map(|&c| fmt_complex(c)).collect());

    let spec = BCChannelSpec {
        n_s,
        n_st: p.n_st,
        n_x,
        n_z1: p.n_y1,
        n_z2: p.n_y2,
        n_shat1: p.n_s1,
        p_s,
        p_st_given_s,
        p_z1z2_given_xs,
        feedback_map,
        distortion,
        labels: Some(labels),
        meta: Meta {
            seed: Some(p.seed),
            builder: Some("awgn-bc".into()),
            angle_unit: None,
            z_composite: None,
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Parameters for the radar-plus-communication broadcast instance
/// `y1 = h1(theta) x + n1` (sensing link, receiver knows `x`),
/// `y2 = h2 x + n2` (communication link).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsacBcParams {
    pub n_r: usize,
    pub sigma_n1: f64,
    pub sigma_n2: f64,
    pub h2: Complex64,
    pub n_theta: usize,
    pub n_y1: usize,
    pub n_y2: usize,
    pub box_half: f64,
    pub x_points: Vec<Complex64>,
    pub seed: u64,
    /// Angle prior scale in radians; `None` = uniform over the grid.
    pub theta_prior_sigma: Option<f64>,
}

impl IsacBcParams {
    /// The two-receiver instance from the numerical experiments: 8-PSK,
    /// `sigma_n1 = 0.8`, `sigma_n2 = 1`, 4 angles, clouds of 20.
    pub fn paper_default(seed: u64) -> Self {
        IsacBcParams {
            n_r: 8,
            sigma_n1: 0.8,
            sigma_n2: 1.0,
            h2: Complex64::new(1.0, 0.0),
            n_theta: 4,
            n_y1: 20,
            n_y2: 20,
            box_half: 1.5,
            x_points: psk(8),
            seed,
            theta_prior_sigma: None,
        }
    }
}

/// Builds the radar-mode broadcast instance. Receiver 1's output is the
/// composite `z1 = (y1, x)`; receiver 2 sees `y2` only, independent of the
/// state. No transmitter side information.
pub fn build_isac_bc(p: &IsacBcParams) -> Result<BCChannelSpec> {
    if p.n_r == 0 || p.n_theta == 0 || p.n_y1 == 0 || p.n_y2 == 0 || p.x_points.is_empty() {
        return Err(Error::InvalidArgument("all sizes must be >= 1".into()));
    }
    let theta_deg = quant(-90.0, 90.0, p.n_theta)?;
    let theta_rad: Vec<f64> = theta_deg.iter().map(|d| d.to_radians()).collect();
    let n_x = p.x_points.len();

    let p_s = match p.theta_prior_sigma {
        None => crate::prob::ProbVec::uniform(p.n_theta),
        Some(sig) => {
            let raw: Vec<f64> = theta_rad
                .iter()
                .map(|&t| (-t * t / (2.0 * sig * sig)).exp())
                .collect();
            normalize(&raw).0
        }
    };

    let y1 = samp_complex_points(
        Complex64::new(-p.box_half, -p.box_half),
        Complex64::new(p.box_half, p.box_half),
        p.n_r,
        p.n_y1,
        crate::rng::derive_seed(p.seed, 1, 0),
    )?;
    let y2: Vec<Complex64> = samp_complex_points(
        Complex64::new(-p.box_half, -p.box_half),
        Complex64::new(p.box_half, p.box_half),
        1,
        p.n_y2,
        crate::rng::derive_seed(p.seed, 2, 0),
    )?
    .into_iter()
    .map(|v| v[0])
    .collect();

    // Sensing-link likelihood p(y1 | x, theta).
    let var1 = p.sigma_n1 * p.sigma_n1;
    let mut k1 = vec![0.0; n_x * p.n_theta * p.n_y1];
    for (xi, x) in p.x_points.iter().enumerate() {
        for (si, &th) in theta_rad.iter().enumerate() {
            let hx: Vec<Complex64> = steering_vector(th, p.n_r).iter().map(|h| h * x).collect();
            let row = (xi * p.n_theta + si) * p.n_y1;
            for (yi, y) in y1.iter().enumerate() {
                let diff: Vec<Complex64> = y.iter().zip(&hx).map(|(a, b)| a - b).collect();
                k1[row + yi] = (-sq_norm(&diff) / var1).exp();
            }
        }
    }
    let (k1, _) = CondDist::from_unnormalized(vec![n_x, p.n_theta], p.n_y1, &k1)?;

    // Communication-link likelihood p(y2 | x), state-independent.
    let var2 = p.sigma_n2 * p.sigma_n2;
    let mut k2 = vec![0.0; n_x * p.n_y2];
    for (xi, &x) in p.x_points.iter().enumerate() {
        for (yi, &y) in y2.iter().enumerate() {
            k2[xi * p.n_y2 + yi] = (-(y - p.h2 * x).norm_sqr() / var2).exp();
        }
    }
    let (k2, _) = CondDist::from_unnormalized(vec![n_x], p.n_y2, &k2)?;

    // Composite z1 = (y1, x): z1 = y1 * |X| + x, zero unless the embedded x
    // matches the transmitted one.
    let n_z1 = p.n_y1 * n_x;
    let n_z = n_z1 * p.n_y2;
    let mut raw_joint = vec![0.0; n_x * p.n_theta * n_z];
    for xi in 0..n_x {
        for si in 0..p.n_theta {
            let row = xi * p.n_theta + si;
            for yi in 0..p.n_y1 {
                let z1 = yi * n_x + xi;
                for z2 in 0..p.n_y2 {
                    raw_joint[row * n_z + z1 * p.n_y2 + z2] =
                        k1.at(row, yi) * k2.at(xi, z2);
                }
            }
        }
    }
    let p_z1z2_given_xs = CondDist::new(vec![n_x, p.n_theta], n_z, raw_joint)?;

    let mut distortion = vec![0.0; p.n_theta * p.n_theta];
    for (i, &a) in theta_rad.iter().enumerate() {
        for (j, &b) in theta_rad.iter().enumerate() {
            distortion[i * p.n_theta + j] = (a - b) * (a - b);
        }
    }

    let mut labels = Labels::new();
    labels.insert(
        "S".into(),
        theta_deg.iter().map(|d| format!("{d:.3}deg")).collect(),
    );
    labels.insert("X".into(), p.x_points.iter().map(|&c| fmt_complex(c)).collect());

    let spec = BCChannelSpec {
        n_s: p.n_theta,
        n_st: 1,
        n_x,
        n_z1,
        n_z2: p.n_y2,
        n_shat1: p.n_theta,
        p_s,
        p_st_given_s: CondDist::uniform(vec![p.n_theta], 1),
        p_z1z2_given_xs,
        feedback_map: vec![0; n_z1],
        distortion,
        labels: Some(labels),
        meta: Meta {
            seed: Some(p.seed),
            builder: Some("isac-bc".into()),
            angle_unit: Some("radians".into()),
            z_composite: Some((p.n_y1, n_x)),
        },
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quant_examples() {
        assert_eq!(quant(0.0, 1.0, 1).unwrap(), vec![0.5]);
        assert_eq!(
            quant(-90.0, 90.0, 4).unwrap(),
            vec![-67.5, -22.5, 22.5, 67.5]
        );
        assert_eq!(quant(-1.0, 1.0, 2).unwrap(), vec![-0.5, 0.5]);
    }

    #[test]
    fn samp_degenerate_interval() {
        assert_eq!(samp(2.0, 2.0, 1, 9).unwrap(), vec![2.0]);
    }

    #[test]
    fn samp_deterministic() {
        assert_eq!(samp(0.0, 1.0, 32, 5).unwrap(), samp(0.0, 1.0, 32, 5).unwrap());
        let a = samp_complex_points(
            Complex64::new(-1.0, -1.0),
            Complex64::new(1.0, 1.0),
            3,
            8,
            17,
        )
        .unwrap();
        let b = samp_complex_points(
            Complex64::new(-1.0, -1.0),
            Complex64::new(1.0, 1.0),
            3,
            8,
            17,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn samp_mean_sanity() {
        let xs = samp(0.0, 1.0, 10_000, 123).unwrap();
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn steering_examples() {
        let v = steering_vector(0.0, 4);
        for c in &v {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert_eq!(steering_vector(1.234, 1).len(), 1);
        assert!((steering_vector(1.234, 1)[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let v = steering_vector(std::f64::consts::FRAC_PI_2, 2);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((v[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn psk_examples() {
        let b = psk(2);
        assert!((b[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((b[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let q = psk(4);
        let want = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (a, b) in q.iter().zip(&want) {
            assert!((a - b).norm() < 1e-15);
        }
        for c in psk(16) {
            assert!((c.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn simo_noise_dominates_to_uniform() {
        let mut p = SimoParams::paper_default(3);
        p.sigma_n = 1e6;
        let spec = build_simo_channel(&p).unwrap();
        let u = 1.0 / spec.n_z as f64;
        for r in 0..spec.p_z_given_xs.n_rows() {
            for &v in spec.p_z_given_xs.row(r) {
                assert!((v - u).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn simo_identical_inputs_give_identical_rows() {
        let mut p = SimoParams::paper_default(3);
        p.x_points = vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        let spec = build_simo_channel(&p).unwrap();
        for s in 0..spec.n_s {
            assert_eq!(
                spec.p_z_given_xs.row(s),
                spec.p_z_given_xs.row(spec.n_s + s)
            );
        }
    }

    #[test]
    fn simo_paper_configuration_builds() {
        let mut p = SimoParams::paper_default(7);
        p.sigma_st = Some(0.3);
        let spec = build_simo_channel(&p).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.n_s, 4);
        assert_eq!(spec.n_st, 4);
        assert_eq!(spec.n_x, 4);
        assert_eq!(spec.n_z, 20);
        assert_eq!(spec.n_fb(), 20);
    }

    #[test]
    fn awgn_bc_offset_invariance() {
        let base = AwgnBcParams::paper_default(11);
        let mut shifted = base.clone();
        let c = Complex64::new(0.35, -0.2);
        shifted.box_center = c;
        shifted.x_points = base.x_points.iter().map(|&x| x + c).collect();
        let a = build_awgn_bc(&base).unwrap();
        let b = build_awgn_bc(&shifted).unwrap();
        for r in 0..a.p_z1z2_given_xs.n_rows() {
            for (u, v) in a
                .p_z1z2_given_xs
                .row(r)
                .iter()
                .zip(b.p_z1z2_given_xs.row(r))
            {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn awgn_bc_large_sigma_s2_flattens_y2() {
        let mut p = AwgnBcParams::paper_default(11);
        p.sigma_s2 = 1e6;
        let spec = build_awgn_bc(&p).unwrap();
        // Marginal p(y2 | x, s) should be uniform over the cloud.
        let u = 1.0 / spec.n_z2 as f64;
        for r in 0..spec.p_z1z2_given_xs.n_rows() {
            let row = spec.p_z1z2_given_xs.row(r);
            for z2 in 0..spec.n_z2 {
                let m: f64 = (0..spec.n_z1).map(|z1| row[z1 * spec.n_z2 + z2]).sum();
                assert!((m - u).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn awgn_bc_paper_configuration_builds() {
        let spec = build_awgn_bc(&AwgnBcParams::paper_default(7)).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.n_s, 25);
        assert_eq!(spec.n_st, 4);
        assert_eq!(spec.n_z1, 5);
        assert_eq!(spec.n_z2, 5);
    }

    #[test]
    fn isac_bc_composite_structure() {
        let spec = build_isac_bc(&IsacBcParams::paper_default(7)).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.n_z1, 20 * 8);
        // Mass only where the embedded x matches the transmitted one.
        for x in 0..spec.n_x {
            for s in 0..spec.n_s {
                let row = spec.p_z1z2_given_xs.row(x * spec.n_s + s);
                for z1 in 0..spec.n_z1 {
                    let xp = z1 % spec.n_x;
                    let mass: f64 =
                        (0..spec.n_z2).map(|z2| row[z1 * spec.n_z2 + z2]).sum();
                    if xp != x {
                        assert_eq!(mass, 0.0);
                    }
                }
            }
        }
    }
}
