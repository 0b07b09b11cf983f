//! Non-leaky integrate-and-fire encoder.
//!
//! Every embedding neuron receives one spike from each of `M` stimulus neurons
//! at fixed times `t_j` through an exponential synaptic kernel. Its membrane
//! potential has the closed form
//!
//! ```text
//! u_i(t) = sum_{t_j <= t} W_ij (1 - exp(-(t - t_j) / tau_s))
//! ```
//!
//! and the first threshold crossing is found exactly by walking the causal
//! sets (stimulus spikes in time order) once.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Magnitude below which the `sum W - u_th` denominator of the spike-time
/// gradient is clamped.
pub const DENOM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams<T> {
    pub tau_s: T,
    pub u_th: T,
    /// Time reported for neurons that never reach threshold.
    pub t_silent: T,
}

impl<T: Scalar> NeuronParams<T> {
    /// Parameters with the silent sentinel at `t_max + 10 tau_s`.
    pub fn new(tau_s: T, u_th: T, t_max: T) -> Result<Self> {
        if !(tau_s > T::zero()) || !(u_th > T::zero()) || !t_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "neuron parameters need tau_s > 0 and u_th > 0 (tau_s = {tau_s}, u_th = {u_th})"
            )));
        }
        Ok(NeuronParams {
            tau_s,
            u_th,
            t_silent: t_max + T::lit(10.0) * tau_s,
        })
    }
}

/// Fixed presynaptic spike times, kept in neuron order together with the
/// permutation that sorts them.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusLayer<T> {
    times: Vec<T>,
    order: Vec<usize>,
    t0: T,
    t_max: T,
}

impl<T: Scalar> StimulusLayer<T> {
    pub fn new(times: Vec<T>, t0: T, t_max: T) -> Result<Self> {
        if !(t0 <= t_max) {
            return Err(Error::InvalidArgument(format!(
                "empty window [{t0}, {t_max}]"
            )));
        }
        if let Some(t) = times.iter().find(|t| !(**t >= t0 && **t <= t_max)) {
            return Err(Error::InvalidArgument(format!(
                "stimulus time {t} outside [{t0}, {t_max}]"
            )));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap().then(a.cmp(&b)));
        Ok(StimulusLayer {
            times,
            order,
            t0,
            t_max,
        })
    }

    /// `m` spike times drawn uniformly from `[t0, t_max]`.
    pub fn sample<R: Rng + ?Sized>(m: usize, t0: T, t_max: T, rng: &mut R) -> Result<Self> {
        let dist = Uniform::new_inclusive(t0.as_f64(), t_max.as_f64());
        let times = (0..m).map(|_| T::lit(dist.sample(rng))).collect();
        Self::new(times, t0, t_max)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Spike times indexed by stimulus neuron.
    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Stimulus neuron indices in ascending spike-time order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn window(&self) -> (T, T) {
        (self.t0, self.t_max)
    }

    /// `(neuron, time)` pairs in time order.
    pub fn sorted(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.order.iter().map(move |&j| (j, self.times[j]))
    }
}

/// Outcome of solving for the first threshold crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spike<T> {
    /// Spike at `time`, driven by the first `causal` stimulus spikes in time order.
    Fired {
        time: T,
        causal: usize,
    },
    Silent,
}

impl<T: Scalar> Spike<T> {
    pub fn time(&self) -> Option<T> {
        match *self {
            Spike::Fired { time, .. } => Some(time),
            Spike::Silent => None,
        }
    }

    pub fn is_silent(&self) -> bool {
        matches!(self, Spike::Silent)
    }
}

/// Closed-form membrane potential of one neuron at time `t`.
pub fn membrane_potential<T: Scalar>(
    weights: &[T],
    stimulus: &StimulusLayer<T>,
    params: &NeuronParams<T>,
    t: T,
) -> T {
    debug_assert_eq!(weights.len(), stimulus.len());
    stimulus
        .sorted()
        .take_while(|&(_, tj)| tj <= t)
        .map(|(j, tj)| weights[j] * (T::one() - (-(t - tj) / params.tau_s).exp()))
        .sum()
}

/// First threshold crossing of one neuron, or [`Spike::Silent`].
///
/// For the causal set made of the first `k` stimulus spikes, the candidate is
/// `t* = t_ref + tau_s ln( sum W_j e^{(t_j - t_ref)/tau_s} / (sum W_j - u_th) )`
/// with `t_ref` the latest spike of the set. It is accepted when the summed
/// weight exceeds threshold, `t* >= t_ref`, and `t*` precedes the next
/// stimulus spike.
pub fn spike_time<T: Scalar>(
    weights: &[T],
    stimulus: &StimulusLayer<T>,
    params: &NeuronParams<T>,
) -> Spike<T> {
    debug_assert_eq!(weights.len(), stimulus.len());
    let tau = params.tau_s;
    let order = stimulus.order();
    let times = stimulus.times();
    let mut sum_w = T::zero();
    // sum of W_j e^{(t_j - t_ref)/tau} with t_ref = latest causal spike
    let mut sum_e = T::zero();
    let mut t_ref = T::neg_infinity();
    for (k, &j) in order.iter().enumerate() {
        let tj = times[j];
        if k > 0 {
            sum_e *= ((t_ref - tj) / tau).exp();
        }
        t_ref = tj;
        sum_w += weights[j];
        sum_e += weights[j];

        let excess = sum_w - params.u_th;
        if !(excess > T::zero()) {
            continue;
        }
        let ratio = sum_e / excess;
        if !(ratio >= T::one()) {
            continue;
        }
        let t_star = t_ref + tau * ratio.ln();
        let before_next = match order.get(k + 1) {
            Some(&next) => t_star < times[next],
            None => true,
        };
        if before_next && t_star.is_finite() {
            return Spike::Fired {
                time: t_star,
                causal: k + 1,
            };
        }
    }
    Spike::Silent
}

/// Writes `d t* / d W_ik` for every stimulus neuron `k` into `out`.
///
/// Non-causal inputs and silent neurons get zero. The denominator
/// `sum_{causal} W - u_th` is clamped to at least [`DENOM_EPS`] in magnitude.
pub fn spike_time_grad_into<T: Scalar>(
    weights: &[T],
    stimulus: &StimulusLayer<T>,
    params: &NeuronParams<T>,
    spike: Spike<T>,
    out: &mut [T],
) {
    out.iter_mut().for_each(|g| *g = T::zero());
    let Spike::Fired { time, causal } = spike else {
        return;
    };
    let causal_set = &stimulus.order()[..causal];
    let sum_w: T = causal_set.iter().map(|&j| weights[j]).sum();
    let mut denom = sum_w - params.u_th;
    let eps = T::lit(DENOM_EPS);
    if denom.abs() < eps {
        denom = if denom < T::zero() { -eps } else { eps };
    }
    let tau = params.tau_s;
    let times = stimulus.times();
    for &k in causal_set {
        out[k] = tau * (((times[k] - time) / tau).exp() - T::one()) / denom;
    }
}

pub fn spike_time_grad<T: Scalar>(
    weights: &[T],
    stimulus: &StimulusLayer<T>,
    params: &NeuronParams<T>,
    spike: Spike<T>,
) -> Vec<T> {
    let mut out = vec![T::zero(); weights.len()];
    spike_time_grad_into(weights, stimulus, params, spike, &mut out);
    out
}

/// Weights of one entity's `N`-neuron population and its cached spike times.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityPopulation<T> {
    neurons: usize,
    inputs: usize,
    /// Row-major `N x M`; row `i` holds the afferent weights of neuron `i`.
    weights: Vec<T>,
    spikes: Vec<Spike<T>>,
    times: Vec<T>,
    valid: bool,
}

impl<T: Scalar> EntityPopulation<T> {
    pub fn new(neurons: usize, inputs: usize, weights: Vec<T>) -> Result<Self> {
        if weights.len() != neurons * inputs {
            return Err(Error::LengthMismatch {
                expected: neurons * inputs,
                found: weights.len(),
            });
        }
        Ok(EntityPopulation {
            neurons,
            inputs,
            weights,
            spikes: vec![Spike::Silent; neurons],
            times: vec![T::zero(); neurons],
            valid: false,
        })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Mutable access to the weights; invalidates the cached spike times.
    pub fn weights_mut(&mut self) -> &mut [T] {
        self.valid = false;
        &mut self.weights
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.weights[i * self.inputs..(i + 1) * self.inputs]
    }

    pub fn is_valid(&self) -> bool {
        self.valid
    }

    /// Recomputes every neuron's spike time.
    pub fn embed(&mut self, stimulus: &StimulusLayer<T>, params: &NeuronParams<T>) {
        for i in 0..self.neurons {
            let row = &self.weights[i * self.inputs..(i + 1) * self.inputs];
            let spike = spike_time(row, stimulus, params);
            self.times[i] = spike.time().unwrap_or(params.t_silent);
            self.spikes[i] = spike;
        }
        self.valid = true;
    }

    /// Spike-time embedding; silent neurons carry `t_silent`.
    pub fn spike_times(&self) -> &[T] {
        debug_assert!(self.valid, "spike times read from a stale population");
        &self.times
    }

    pub fn spikes(&self) -> &[Spike<T>] {
        debug_assert!(self.valid, "spike times read from a stale population");
        &self.spikes
    }

    pub fn silent_count(&self) -> usize {
        self.spikes().iter().filter(|s| s.is_silent()).count()
    }

    /// Adds `scale * d t_i / d W_i.` to row `i` of `out` for every neuron.
    pub(crate) fn accumulate_chain(
        &self,
        stimulus: &StimulusLayer<T>,
        params: &NeuronParams<T>,
        d_times: &[T],
        out: &mut [T],
        scratch: &mut [T],
    ) {
        for (i, &dt) in d_times.iter().enumerate() {
            if dt == T::zero() || self.spikes[i].is_silent() {
                continue;
            }
            spike_time_grad_into(self.row(i), stimulus, params, self.spikes[i], scratch);
            let row_out = &mut out[i * self.inputs..(i + 1) * self.inputs];
            for (o, g) in row_out.iter_mut().zip(scratch.iter()) {
                *o += dt * *g;
            }
        }
    }
}

/// Re-embeds every population and returns the `populations x N` spike-time matrix.
pub fn embed_all<T: Scalar>(
    populations: &mut [EntityPopulation<T>],
    stimulus: &StimulusLayer<T>,
    params: &NeuronParams<T>,
) -> Vec<Vec<T>> {
    populations
        .iter_mut()
        .map(|p| {
            p.embed(stimulus, params);
            p.spike_times().to_vec()
        })
        .collect()
}
