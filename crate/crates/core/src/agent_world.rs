//! Insect kinematics, the outbound random walk, and the sensory encoders.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wrap an angle into (-pi, pi]. -pi maps to pi.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("non-finite angle {theta}")));
    }
    Ok(wrap(theta))
}

pub(crate) fn wrap(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub rho: f64,
    pub phi_tn: f64,
    pub mu: f64,
    pub v_max: f64,
    pub sigma_walk: f64,
    pub outbound_speed: f64,
}

/// Step length tuned so the outbound median radius is close to 17300 steps.
pub const DEFAULT_V_MAX: f64 = 150.0;

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            rho: 2.0,
            phi_tn: FRAC_PI_4,
            mu: 1.6,
            v_max: DEFAULT_V_MAX,
            sigma_walk: 0.3,
            outbound_speed: 1.0,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::Usage(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::Usage(format!(
                "v_max must be positive, got {}",
                self.v_max
            )));
        }
        if !(self.sigma_walk >= 0.0) {
            return Err(Error::Usage(format!(
                "sigma_walk must be >= 0, got {}",
                self.sigma_walk
            )));
        }
        if !(0.0..=1.0).contains(&self.outbound_speed) {
            return Err(Error::Usage("outbound_speed must lie in [0, 1]".into()));
        }
        if !self.mu.is_finite() || !self.phi_tn.is_finite() {
            return Err(Error::Usage("mu and phi_tn must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub phi_prev: f64,
    pub speed: f64,
    pub theta: f64,
    pub step_index: u64,
}

impl AgentState {
    /// Agent at the origin facing `phi`.
    pub fn at_home(phi: f64, speed: f64) -> Self {
        let phi = wrap(phi);
        Self {
            x: 0.0,
            y: 0.0,
            phi,
            phi_prev: phi,
            speed,
            theta: phi,
            step_index: 0,
        }
    }

    /// Heading change over the last update, wrapped.
    pub fn dphi(&self) -> f64 {
        wrap(self.phi - self.phi_prev)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorRates {
    pub tb1: [f64; 4],
    pub tn_l: f64,
    pub tn_r: f64,
}

impl SensorRates {
    pub fn sense(state: &AgentState, params: &WorldParams) -> Self {
        let (tn_l, tn_r) = tn_rates(state.speed, state.dphi(), params);
        Self {
            tb1: tb1_rates(state.phi),
            tn_l,
            tn_r,
        }
    }
}

/// Preferred direction of compass cell j (north, east, south, west).
pub fn tb1_preferred(j: usize) -> f64 {
    FRAC_PI_2 - j as f64 * FRAC_PI_2
}

pub fn tb1_rates(phi: f64) -> [f64; 4] {
    let r0 = 0.5 * (1.0 + phi.sin());
    let r1 = 0.5 * (1.0 + (phi + FRAC_PI_2).sin());
    // opposing cells are written as complements so each pair sums to exactly 1
    [r0, r1, 1.0 - r0, 1.0 - r1]
}

fn clamp01(r: f64) -> f64 {
    r.clamp(0.0, 1.0)
}

/// Two-sensor optic flow for arbitrary flight direction `theta`.
pub fn tn_rates_holonomic(
    v_mag: f64,
    theta: f64,
    phi: f64,
    dphi: f64,
    params: &WorldParams,
) -> (f64, f64) {
    let l = -v_mag * (theta - phi + params.phi_tn).sin() + params.rho * dphi;
    let r = v_mag * (theta - phi - params.phi_tn).sin() - params.rho * dphi;
    (clamp01(l), clamp01(r))
}

/// Optic flow when flight direction equals heading.
pub fn tn_rates(v_mag: f64, dphi: f64, params: &WorldParams) -> (f64, f64) {
    let base = v_mag * params.phi_tn.sin();
    (
        clamp01(base + params.rho * dphi),
        clamp01(base - params.rho * dphi),
    )
}

pub fn integrate_position(state: &AgentState, params: &WorldParams) -> AgentState {
    let step = params.v_max * state.speed;
    AgentState {
        x: state.x + step * state.theta.cos(),
        y: state.y + step * state.theta.sin(),
        step_index: state.step_index + 1,
        ..*state
    }
}

fn turn(state: &AgentState, dphi: f64) -> AgentState {
    let phi = wrap(state.phi + dphi);
    AgentState {
        phi_prev: state.phi,
        phi,
        theta: phi,
        ..*state
    }
}

pub fn step_outbound<R: Rng + ?Sized>(
    state: &AgentState,
    rng: &mut R,
    params: &WorldParams,
) -> AgentState {
    let delta = if params.sigma_walk > 0.0 {
        Normal::new(0.0, params.sigma_walk)
            .expect("sigma_walk validated")
            .sample(rng)
    } else {
        0.0
    };
    let mut next = turn(state, delta);
    next.speed = params.outbound_speed;
    integrate_position(&next, params)
}

/// Heading change produced by a motor rate pair.
pub fn motor_turn(r_ml: f64, r_mr: f64, params: &WorldParams) -> f64 {
    params.mu * (r_ml - r_mr)
}

pub fn apply_motor(state: &AgentState, r_ml: f64, r_mr: f64, params: &WorldParams) -> AgentState {
    let next = turn(state, motor_turn(r_ml, r_mr, params));
    integrate_position(&next, params)
}
