//! Learnable relative time encoding.
//!
//! A link at time `t_i` seen from a query at `t_q` is encoded through
//! `Δt = t_i − t_q` as the elementwise sum of a periodic and a non-periodic
//! component: `h_t = sin(ω_p·Δt + φ_p) + (ω_np·Δt + φ_np)`.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Whether frequencies are free per dimension or shared across dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeCodecMode {
    PerDimension,
    Scalar,
}

impl std::str::FromStr for TimeCodecMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "per-dimension" => Ok(TimeCodecMode::PerDimension),
            "scalar" => Ok(TimeCodecMode::Scalar),
            other => Err(crate::Error::config(
                "time_mode",
                format!("expected `per-dimension` or `scalar`, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for TimeCodecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TimeCodecMode::PerDimension => write!(f, "per-dimension"),
            TimeCodecMode::Scalar => write!(f, "scalar"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCodecParams {
    pub omega_p: Vec<f64>,
    pub phi_p: Vec<f64>,
    pub omega_np: Vec<f64>,
    pub phi_np: Vec<f64>,
}

impl TimeCodecParams {
    pub fn dim(&self) -> usize {
        self.omega_p.len()
    }

    pub fn zeros(d: usize) -> Self {
        TimeCodecParams {
            omega_p: vec![0.0; d],
            phi_p: vec![0.0; d],
            omega_np: vec![0.0; d],
            phi_np: vec![0.0; d],
        }
    }

    /// h_t(Δt), elementwise.
    pub fn encode(&self, dt: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        for i in 0..self.dim() {
            out[i] = (self.omega_p[i] * dt + self.phi_p[i]).sin()
                + (self.omega_np[i] * dt + self.phi_np[i]);
        }
    }

    pub fn encode_vec(&self, dt: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode(dt, &mut out);
        out
    }

    /// Accumulate ∂(upstream · h_t)/∂params into `grads`.
    pub fn accumulate_grad(&self, dt: f64, upstream: &[f64], grads: &mut TimeCodecParams) {
        debug_assert_eq!(upstream.len(), self.dim());
        for i in 0..self.dim() {
            let c = (self.omega_p[i] * dt + self.phi_p[i]).cos();
            let u = upstream[i];
            grads.omega_p[i] += u * c * dt;
            grads.phi_p[i] += u * c;
            grads.omega_np[i] += u * dt;
            grads.phi_np[i] += u;
        }
    }
}

/// Seeded initialization.
///
/// Periodic frequencies are log-spaced so representable periods run from one
/// time unit up to `span` (the dataset's time extent); phases are uniform in
/// [0, 2π); the non-periodic velocity and offset are small uniform values.
pub fn init_time_codec(
    d: usize,
    span: f64,
    mode: TimeCodecMode,
    seed: u64,
) -> Result<TimeCodecParams> {
    if d == 0 {
        return Err(Error::config("d", "time codec dimension must be >= 1"));
    }
    let span = span.max(1.0);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut p = TimeCodecParams::zeros(d);
    for i in 0..d {
        let period = match mode {
            // Geometric spacing from 1 up to span across the dimensions.
            TimeCodecMode::PerDimension if d > 1 => span.powf(i as f64 / (d as f64 - 1.0)),
            _ => span,
        };
        p.omega_p[i] = 2.0 * PI / period;
        p.phi_p[i] = rng.gen_range(0.0..2.0 * PI);
        p.omega_np[i] = rng.gen_range(-1.0..1.0) / span;
        p.phi_np[i] = rng.gen_range(-0.1..0.1);
    }
    if mode == TimeCodecMode::Scalar {
        let w = p.omega_p[0];
        let v = p.omega_np[0];
        p.omega_p.fill(w);
        p.omega_np.fill(v);
    }
    Ok(p)
}
