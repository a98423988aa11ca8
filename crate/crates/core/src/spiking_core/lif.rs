use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub c_m: f64,
    pub g_l: f64,
    pub v_l: f64,
    pub v_th: f64,
    pub v_reset: f64,
    /// ms
    pub tau_syn: f64,
    /// ms
    pub t_ref: f64,
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_reset < self.v_th) {
            return Err(Error::Usage("v_reset must lie below v_th".into()));
        }
        if !(self.c_m > 0.0 && self.g_l > 0.0 && self.tau_syn > 0.0 && self.t_ref >= 0.0) {
            return Err(Error::Usage(
                "c_m, g_l, tau_syn must be positive and t_ref >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn tau_m(&self) -> f64 {
        self.c_m / self.g_l
    }

    fn with_tau(tau_m: f64, tau_syn: f64, t_ref: f64) -> Self {
        Self {
            c_m: 1.0,
            g_l: 1.0 / tau_m,
            v_l: 0.0,
            v_th: 1.0,
            v_reset: 0.0,
            tau_syn,
            t_ref,
        }
    }

    /// Integrator cells: a long membrane constant keeps the rate proportional to drive.
    pub fn cpu4() -> Self {
        Self::with_tau(200.0, 5.0, 1.0)
    }

    /// Steering cells: the slow membrane sums excitatory and inhibitory charge, so the
    /// output follows the difference of the input rates rather than their relative timing.
    pub fn cpu1() -> Self {
        Self::with_tau(200.0, 5.0, 2.0)
    }

    pub fn motor() -> Self {
        Self::with_tau(200.0, 5.0, 1.0)
    }
}

impl Default for LifParams {
    fn default() -> Self {
        Self::with_tau(10.0, 5.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState {
    pub v_m: f64,
    pub i_syn_exc: f64,
    pub i_syn_inh: f64,
    pub spike_count: u32,
    pub refractory_until: f64,
}

impl NeuronState {
    pub fn rest(p: &LifParams) -> Self {
        Self {
            v_m: p.v_l,
            ..Default::default()
        }
    }

    /// Read and clear the spike counter.
    pub fn take_count(&mut self) -> u32 {
        std::mem::take(&mut self.spike_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Exc,
    Inh,
}

/// Add a synaptic event of `weight` LSB scaled by `gain` to the target's currents.
pub fn deliver_spike(target: &mut NeuronState, sign: Sign, weight: f64, gain: f64) {
    match sign {
        Sign::Exc => target.i_syn_exc += gain * weight,
        Sign::Inh => target.i_syn_inh += gain * weight,
    }
}

/// Precomputed per-step factors for a fixed `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifStepper {
    pub params: LifParams,
    pub dt: f64,
    decay_syn: f64,
    decay_m: f64,
}

impl LifStepper {
    pub fn new(params: LifParams, dt: f64) -> Self {
        Self {
            params,
            dt,
            decay_syn: (-dt / params.tau_syn).exp(),
            decay_m: (-dt * params.g_l / params.c_m).exp(),
        }
    }

    /// Advance one step ending at time `t_end`; `bias` is a constant extra current.
    /// Returns true if the neuron fired.
    #[inline]
    pub fn step(&self, s: &mut NeuronState, bias: f64, t_end: f64) -> bool {
        let p = &self.params;
        let current = s.i_syn_exc - s.i_syn_inh + bias;
        s.i_syn_exc *= self.decay_syn;
        s.i_syn_inh *= self.decay_syn;
        if t_end <= s.refractory_until + 1e-9 {
            s.v_m = p.v_reset;
            return false;
        }
        let v_inf = p.v_l + current / p.g_l;
        s.v_m = v_inf + (s.v_m - v_inf) * self.decay_m;
        if s.v_m >= p.v_th {
            s.v_m = p.v_reset;
            s.spike_count += 1;
            s.refractory_until = t_end + p.t_ref;
            return true;
        }
        false
    }
}

/// One exponential-Euler step after delivering `input_events` (sign, weight, gain).
pub fn lif_step(
    state: &mut NeuronState,
    params: &LifParams,
    dt: f64,
    t_end: f64,
    input_events: &[(Sign, f64, f64)],
) -> bool {
    for &(sign, w, g) in input_events {
        deliver_spike(state, sign, w, g);
    }
    LifStepper::new(*params, dt).step(state, 0.0, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rest_is_fixed_point() {
        let p = LifParams::default();
        let mut s = NeuronState::rest(&p);
        for dt in [0.01, 0.1, 3.0] {
            lif_step(&mut s, &p, dt, 1.0, &[]);
            assert_eq!(s.v_m, p.v_l);
        }
    }

    #[test]
    fn leak_decay_closed_form() {
        let p = LifParams {
            v_th: 5.0,
            ..LifParams::default()
        };
        let mut s = NeuronState {
            v_m: p.v_l + 1.0,
            ..NeuronState::rest(&p)
        };
        let st = LifStepper::new(p, 0.1);
        for i in 1..=250 {
            st.step(&mut s, 0.0, i as f64 * 0.1);
        }
        assert_abs_diff_eq!(
            s.v_m - p.v_l,
            (-p.g_l * 25.0 / p.c_m).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn threshold_resets_and_counts() {
        let p = LifParams::default();
        let mut s = NeuronState {
            v_m: p.v_th + 0.5,
            ..NeuronState::rest(&p)
        };
        s.i_syn_exc = 10.0;
        assert!(lif_step(&mut s, &p, 0.1, 0.1, &[]));
        assert_eq!(s.v_m, p.v_reset);
        assert_eq!(s.spike_count, 1);
        assert_eq!(s.take_count(), 1);
        assert_eq!(s.spike_count, 0);
        // refractory: stays at reset
        assert!(!lif_step(&mut s, &p, 0.1, 0.2, &[]));
        assert_eq!(s.v_m, p.v_reset);
    }

    #[test]
    fn delivery_superposes() {
        let mut a = NeuronState::default();
        deliver_spike(&mut a, Sign::Exc, 0.0, 2.0);
        assert_eq!(a.i_syn_exc, 0.0);
        deliver_spike(&mut a, Sign::Exc, 3.0, 2.0);
        let one = a.i_syn_exc;
        deliver_spike(&mut a, Sign::Exc, 3.0, 2.0);
        assert_eq!(a.i_syn_exc, 2.0 * one);
        let mut b = NeuronState::default();
        deliver_spike(&mut b, Sign::Inh, 3.0, 2.0);
        assert_eq!(b.i_syn_exc - b.i_syn_inh, -one);
    }

    #[test]
    fn invalid_params() {
        assert!(LifParams {
            v_reset: 2.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LifParams {
            g_l: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LifParams::cpu1().validate().is_ok());
    }
}
