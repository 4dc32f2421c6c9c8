//! Radar range equations, channel-gain variances and the SINR rewards.
//!
//! Distances are in meters, powers in watts, gains dimensionless. Everything
//! here is a pure function of immutable inputs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::Point;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("no direct path from radar {0} to itself")]
    SelfPair(usize),
    #[error("radar {radar} is {range} from the target; ranges below 1 are not allowed")]
    TargetTooClose { radar: usize, range: f64 },
    #[error("invalid physics constant: {0}")]
    Invalid(String),
    #[error("ergodicity rate rho = {0} must lie in [0, 1)")]
    BadRate(f64),
    #[error("ergodicity constant m = {0} must be positive")]
    BadMixingConstant(f64),
}

/// A per-pair quantity that is either constant off the diagonal or given as a
/// full `n x n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairTable {
    Constant(f64),
    Matrix(Vec<Vec<f64>>),
}

impl PairTable {
    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Matrix(m) => m[i][j],
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Self::Constant(v) => vec![*v],
            Self::Matrix(m) => m.iter().flatten().copied().collect(),
        }
    }

    fn check_shape(&self, n: usize, name: &str) -> Result<(), PhysicsError> {
        if let Self::Matrix(m) = self {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(PhysicsError::Invalid(format!("{name} must be a {n}x{n} matrix")));
            }
        }
        Ok(())
    }
}

/// Antenna, propagation and receiver constants for the whole network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    /// Main-lobe transmit gain `G_t`.
    pub gain_tx: f64,
    /// Main-lobe receive gain `G_r`.
    pub gain_rx: f64,
    /// Side-lobe transmit gain `G_t'`.
    pub side_gain_tx: f64,
    /// Side-lobe receive gain `G_r'`.
    pub side_gain_rx: f64,
    pub wavelength: f64,
    pub max_power: f64,
    /// Receiver noise standard deviation `σ^i`, one per radar.
    pub noise_std: Vec<f64>,
    /// Noise `σ^i_κ` used by the truncated SINR. Defaults to `noise_std`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_noise_std: Option<Vec<f64>>,
    /// Radar cross section `σ^RCS_ij`.
    pub rcs: PairTable,
    /// Cross-correlation `c_ij` for `i != j`; the diagonal is always 1.
    pub cross_correlation: PairTable,
}

impl PhysicsConstants {
    pub fn n(&self) -> usize {
        self.noise_std.len()
    }

    pub fn truncated_noise(&self) -> &[f64] {
        self.truncated_noise_std.as_deref().unwrap_or(&self.noise_std)
    }

    pub fn rcs(&self, i: usize, j: usize) -> f64 {
        self.rcs.get(i, j)
    }

    pub fn cross_corr(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.cross_correlation.get(i, j)
        }
    }

    /// `σ̄^RCS = sup σ^RCS_ij`.
    pub fn rcs_sup(&self) -> f64 {
        self.rcs.values().into_iter().fold(0.0, f64::max)
    }

    /// `c̄ = sup c_ij` over all pairs, including `c_ii = 1`.
    pub fn cross_corr_sup(&self) -> f64 {
        let n = self.n();
        let mut sup: f64 = 1.0;
        for i in 0..n {
            for j in 0..n {
                sup = sup.max(self.cross_corr(i, j));
            }
        }
        sup
    }

    /// `σ_min`, the smallest of all global and truncated noise levels.
    pub fn noise_floor(&self) -> f64 {
        self.noise_std
            .iter()
            .chain(self.truncated_noise())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Positivity and finiteness checks on the constants themselves. Range
    /// conditions live in [`GeometrySnapshot::new`].
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let pos = |v: f64| v.is_finite() && v > 0.0;
        for (name, v) in [
            ("gain_tx", self.gain_tx),
            ("gain_rx", self.gain_rx),
            ("side_gain_tx", self.side_gain_tx),
            ("side_gain_rx", self.side_gain_rx),
            ("wavelength", self.wavelength),
            ("max_power", self.max_power),
        ] {
            if !pos(v) {
                errs.push(format!("physics.{name} must be positive and finite, got {v}"));
            }
        }
        let n = self.n();
        if n == 0 {
            errs.push("physics.noise_std must list one value per radar".into());
        }
        if self.noise_std.iter().any(|&s| !pos(s)) {
            errs.push("physics.noise_std entries must be positive and finite".into());
        }
        if let Some(t) = &self.truncated_noise_std {
            if t.len() != n {
                errs.push("physics.truncated_noise_std must have one value per radar".into());
            }
            if t.iter().any(|&s| !pos(s)) {
                errs.push("physics.truncated_noise_std entries must be positive and finite".into());
            }
        }
        for (table, name) in [(&self.rcs, "rcs"), (&self.cross_correlation, "cross_correlation")] {
            if let Err(e) = table.check_shape(n, name) {
                errs.push(format!("physics.{e}"));
                continue;
            }
            let vals = table.values();
            if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                errs.push(format!("physics.{name} entries must be finite and nonnegative"));
            }
            if !vals.iter().any(|v| *v > 0.0) {
                errs.push(format!("physics.{name} supremum must be positive"));
            }
        }
        errs
    }
}

/// Radar and target positions at one instant, with derived ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySnapshot {
    pub target: Point,
    pub radars: Vec<Point>,
    /// `R_i`: radar `i` to target.
    pub ranges: Vec<f64>,
}

impl GeometrySnapshot {
    /// Fails if any radar is closer than 1 to the target.
    pub fn new(radars: &[Point], target: Point) -> Result<Self, PhysicsError> {
        let ranges: Vec<f64> = radars.iter().map(|p| p.distance(&target)).collect();
        if let Some((radar, &range)) = ranges.iter().enumerate().find(|(_, &r)| r < 1.0) {
            return Err(PhysicsError::TargetTooClose { radar, range });
        }
        Ok(Self {
            target,
            radars: radars.to_vec(),
            ranges,
        })
    }

    /// `d_ij`.
    pub fn separation(&self, i: usize, j: usize) -> f64 {
        self.radars[i].distance(&self.radars[j])
    }
}

/// Target-path gain variance `h^τ_ij = G_t G_r σ^RCS_ij λ² / ((4π)³ R_i² R_j²)`.
pub fn h_target_path(pc: &PhysicsConstants, geo: &GeometrySnapshot, i: usize, j: usize) -> f64 {
    let (ri, rj) = (geo.ranges[i], geo.ranges[j]);
    pc.gain_tx * pc.gain_rx * pc.rcs(i, j) * pc.wavelength.powi(2) / ((4.0 * PI).powi(3) * ri * ri * rj * rj)
}

/// Direct-path gain variance `h^d_ij = G_t' G_r' λ² / ((4π)² d_ij²)`.
pub fn h_direct_path(pc: &PhysicsConstants, geo: &GeometrySnapshot, i: usize, j: usize) -> Result<f64, PhysicsError> {
    if i == j {
        return Err(PhysicsError::SelfPair(i));
    }
    let d = geo.separation(i, j);
    Ok(pc.side_gain_tx * pc.side_gain_rx * pc.wavelength.powi(2) / ((4.0 * PI).powi(2) * d * d))
}

/// Everything the SINR of every radar needs for one geometry, precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    /// `h^τ_ii`.
    pub own: Vec<f64>,
    /// `coupling[i][j] = c_ji (h^d_ji + h^τ_ji)` for `j != i`, zero on the diagonal.
    pub coupling: Vec<Vec<f64>>,
    /// `(σ^i)²`.
    pub noise_var: Vec<f64>,
    /// `(σ^i_κ)²`.
    pub truncated_noise_var: Vec<f64>,
}

impl ChannelGains {
    pub fn new(pc: &PhysicsConstants, geo: &GeometrySnapshot) -> Self {
        let n = geo.radars.len();
        let own = (0..n).map(|i| h_target_path(pc, geo, i, i)).collect();
        let coupling = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            let hd = h_direct_path(pc, geo, j, i).expect("distinct radars");
                            pc.cross_corr(j, i) * (hd + h_target_path(pc, geo, j, i))
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            own,
            coupling,
            noise_var: pc.noise_std.iter().map(|s| s * s).collect(),
            truncated_noise_var: pc.truncated_noise().iter().map(|s| s * s).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.own.len()
    }

    /// Global SINR of radar `i` under the joint power vector `powers`.
    pub fn sinr(&self, i: usize, powers: &[f64]) -> f64 {
        if powers[i] == 0.0 {
            return 0.0;
        }
        let interference: f64 = self.coupling[i].iter().zip(powers).map(|(c, a)| c * a).sum();
        self.own[i] * powers[i] / (self.noise_var[i] + interference)
    }

    /// SINR counting only interference from `neighborhood \ {i}` and using the
    /// truncated noise level.
    pub fn sinr_truncated(&self, i: usize, powers: &[f64], neighborhood: &[usize]) -> f64 {
        if powers[i] == 0.0 {
            return 0.0;
        }
        let interference: f64 = neighborhood.iter().map(|&j| self.coupling[i][j] * powers[j]).sum();
        self.own[i] * powers[i] / (self.truncated_noise_var[i] + interference)
    }
}

/// SINR of radar `i` computed from scratch.
pub fn sinr(pc: &PhysicsConstants, geo: &GeometrySnapshot, i: usize, powers: &[f64]) -> f64 {
    ChannelGains::new(pc, geo).sinr(i, powers)
}

/// SINR of radar `i` with interference restricted to `neighborhood`.
pub fn sinr_truncated(pc: &PhysicsConstants, geo: &GeometrySnapshot, neighborhood: &[usize], i: usize, powers: &[f64]) -> f64 {
    ChannelGains::new(pc, geo).sinr_truncated(i, powers, neighborhood)
}

/// Geometric mixing certificate `d_TV(P^t(s, ·), π) <= m ρ^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ergodicity {
    pub m: f64,
    pub rho: f64,
}

/// Which closed form of the bound constant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVariant {
    /// Keeps the `1/σ_min⁴` factor that appears while bounding the
    /// interference gap.
    #[default]
    NoiseFloor,
    /// The same closed form without the `1/σ_min⁴` factor.
    Literal,
}

impl BoundVariant {
    pub const ALL: [BoundVariant; 2] = [BoundVariant::NoiseFloor, BoundVariant::Literal];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoiseFloor => "noise-floor",
            Self::Literal => "literal",
        }
    }
}

/// `G_t G_r σ̄ λ⁴ a_max² c̄ / (4π)³ · [G_t'G_r'/(4π)² + G_t G_r σ̄/(4²π³)]`,
/// the geometry-free part shared by the gap bound and `M`.
fn attenuation_coefficient(pc: &PhysicsConstants) -> f64 {
    let rcs = pc.rcs_sup();
    let main = pc.gain_tx * pc.gain_rx;
    let side = pc.side_gain_tx * pc.side_gain_rx;
    let bracket = side / (4.0 * PI).powi(2) + main * rcs / (16.0 * PI.powi(3));
    main * rcs * pc.wavelength.powi(4) * pc.max_power.powi(2) * pc.cross_corr_sup() / (4.0 * PI).powi(3) * bracket
}

/// Upper bound on `|sinr - sinr_truncated|` when `complement_size` radars lie
/// outside the neighborhood, each at least `coverage` away.
pub fn interference_gap_bound(pc: &PhysicsConstants, complement_size: usize, coverage: f64, variant: BoundVariant) -> f64 {
    let floor = match variant {
        BoundVariant::NoiseFloor => pc.noise_floor().powi(4),
        BoundVariant::Literal => 1.0,
    };
    attenuation_coefficient(pc) / floor * complement_size as f64 / (coverage * coverage)
}

/// The Q-perturbation constant `M`.
pub fn constant_m(pc: &PhysicsConstants, erg: Ergodicity, variant: BoundVariant) -> Result<f64, PhysicsError> {
    if !(0.0..1.0).contains(&erg.rho) {
        return Err(PhysicsError::BadRate(erg.rho));
    }
    if !(erg.m > 0.0 && erg.m.is_finite()) {
        return Err(PhysicsError::BadMixingConstant(erg.m));
    }
    let floor = match variant {
        BoundVariant::NoiseFloor => pc.noise_floor().powi(4),
        BoundVariant::Literal => 1.0,
    };
    Ok(2.0 * erg.m / (1.0 - erg.rho) * attenuation_coefficient(pc) / floor)
}
