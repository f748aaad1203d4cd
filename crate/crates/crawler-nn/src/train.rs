//! Generation loop: feedforward, denormalize, measure angle error, stop on
//! tolerance or update weights by backpropagation with a scheduled learning
//! rate.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{DenormMode, Network};

/// The pair of required servo angles, in degrees, that define zero error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleTargets {
    pub servo1_deg: f64,
    pub servo2_deg: f64,
}

impl AngleTargets {
    pub fn new(servo1_deg: f64, servo2_deg: f64) -> Self {
        Self {
            servo1_deg,
            servo2_deg,
        }
    }

    /// Both targets must sit inside the mode's angle range.
    pub fn validate(&self, mode: DenormMode) -> Result<()> {
        mode.normalize(self.servo1_deg)?;
        mode.normalize(self.servo2_deg)?;
        Ok(())
    }

    /// Targets mapped into the network's [0, 1] range.
    pub fn normalized(&self, mode: DenormMode) -> Result<[f64; 2]> {
        Ok([
            mode.normalize(self.servo1_deg)?,
            mode.normalize(self.servo2_deg)?,
        ])
    }
}

/// Learning-rate schedule over generations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LrSchedule {
    /// Same rate every generation.
    Constant,
    /// Rate multiplied by `factor` each generation.
    ExponentialDecay { factor: f64 },
    /// Rate multiplied by `factor` once every `every` generations.
    StepDecay { factor: f64, every: u64 },
}

/// When the arbitrary input-neuron value is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputPolicy {
    /// One draw before the loop; every generation sees the same input.
    FixedRandom,
    /// A fresh draw at the start of each generation.
    ResamplePerGeneration,
}

/// Everything a single training run needs besides the network itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    /// Per-servo absolute angle-error threshold, degrees.
    pub tolerance_deg: f64,
    pub max_generations: u64,
    pub input_policy: InputPolicy,
    pub denorm_mode: DenormMode,
    /// Seed for the input draw(s).
    pub seed: u64,
}

impl TrainingConfig {
    /// Constant-rate, fixed-input config with the standard defaults.
    pub fn new(learning_rate: f64, tolerance_deg: f64, max_generations: u64, seed: u64) -> Self {
        Self {
            learning_rate,
            lr_schedule: LrSchedule::Constant,
            tolerance_deg,
            max_generations,
            input_policy: InputPolicy::FixedRandom,
            denorm_mode: DenormMode::PaperStated,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.tolerance_deg.is_finite() && self.tolerance_deg > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance_deg must be positive, got {}",
                self.tolerance_deg
            )));
        }
        if self.max_generations == 0 {
            return Err(Error::InvalidConfig(
                "max_generations must be at least 1".into(),
            ));
        }
        match self.lr_schedule {
            LrSchedule::Constant => {}
            LrSchedule::ExponentialDecay { factor } => {
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "exponential decay factor must lie in (0, 1], got {factor}"
                    )));
                }
            }
            LrSchedule::StepDecay { factor, every } => {
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "step decay factor must lie in (0, 1], got {factor}"
                    )));
                }
                if every == 0 {
                    return Err(Error::InvalidConfig(
                        "step decay interval must be at least 1 generation".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One row of a generation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    pub servo1_deg: f64,
    pub servo2_deg: f64,
    /// `target1 - servo1`, degrees.
    pub error1_deg: f64,
    /// `target2 - servo2`, degrees.
    pub error2_deg: f64,
    pub cost: f64,
    pub lr_used: f64,
}

/// A completed (converged or budget-exhausted) training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub records: Vec<GenerationRecord>,
    pub final_network: Network,
    pub converged: bool,
    pub generations_used: u64,
    pub config: TrainingConfig,
    pub targets: AngleTargets,
}

/// Signed per-servo errors: `target - angle`, in degrees.
pub fn angle_error(targets: &AngleTargets, angles: [f64; 2]) -> [f64; 2] {
    [
        targets.servo1_deg - angles[0],
        targets.servo2_deg - angles[1],
    ]
}

/// Half the sum of squared output errors in normalized space.
pub fn cost(targets_norm: [f64; 2], outputs: [f64; 2]) -> f64 {
    let d0 = targets_norm[0] - outputs[0];
    let d1 = targets_norm[1] - outputs[1];
    0.5 * (d0 * d0 + d1 * d1)
}

/// Cost gradient for every parameter, in the network's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    hidden_size: usize,
    values: Vec<f64>,
}

impl Gradient {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }
}

/// One gradient-descent step on the single-sample cost.
///
/// Output deltas are `(output - target) * sigmoid'(output_pre)`; hidden
/// deltas back-propagate those through the hidden->output weights. The full
/// gradient is computed at the current parameters before any of them move,
/// then every weight and bias is decremented by `lr` times its partial.
pub fn backprop_update(net: &mut Network, input: f64, targets_norm: [f64; 2], lr: f64) -> Gradient {
    let grad = analytic_gradient(net, input, targets_norm);
    net.apply_update(lr, |i| grad.values[i]);
    grad
}

/// The analytic gradient alone, without applying an update.
pub fn analytic_gradient(net: &Network, input: f64, targets_norm: [f64; 2]) -> Gradient {
    let h = net.hidden_size();
    let trace = net.feedforward(input);

    // sigmoid'(z) expressed through the activation: o * (1 - o)
    let delta_o: [f64; 2] = [
        (trace.output[0] - targets_norm[0]) * trace.output[0] * (1.0 - trace.output[0]),
        (trace.output[1] - targets_norm[1]) * trace.output[1] * (1.0 - trace.output[1]),
    ];
    let delta_h: Vec<f64> = (0..h)
        .map(|j| {
            let back = delta_o[0] * net.w_ho(0, j) + delta_o[1] * net.w_ho(1, j);
            back * trace.hidden_out[j] * (1.0 - trace.hidden_out[j])
        })
        .collect();

    let mut values = Vec::with_capacity(net.param_count());
    values.extend(delta_h.iter().map(|d| d * input)); // w_ih
    for d in &delta_o {
        values.extend(trace.hidden_out.iter().map(|a| d * a)); // w_ho row
    }
    values.extend_from_slice(&delta_h); // b_h
    values.extend_from_slice(&delta_o); // b_o
    Gradient {
        hidden_size: h,
        values,
    }
}

/// Central-difference gradient of the cost over every parameter. Independent
/// of the backpropagation path; used to cross-check it.
pub fn finite_diff_gradient(net: &Network, input: f64, targets_norm: [f64; 2], h: f64) -> Gradient {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut work = net.clone();
    let n = net.param_count();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let orig = *work.param_mut(i);
        *work.param_mut(i) = orig + h;
        let plus = cost(targets_norm, work.feedforward(input).output);
        *work.param_mut(i) = orig - h;
        let minus = cost(targets_norm, work.feedforward(input).output);
        *work.param_mut(i) = orig;
        values.push((plus - minus) / (2.0 * h));
    }
    Gradient {
        hidden_size: net.hidden_size(),
        values,
    }
}

/// Learning rate in effect at `generation` (1-based).
pub fn schedule_lr(config: &TrainingConfig, generation: u64) -> f64 {
    debug_assert!(generation >= 1);
    let base = config.learning_rate;
    match config.lr_schedule {
        LrSchedule::Constant => base,
        LrSchedule::ExponentialDecay { factor } => base * factor.powf((generation - 1) as f64),
        LrSchedule::StepDecay { factor, every } => {
            base * factor.powf(((generation - 1) / every) as f64)
        }
    }
}

/// Run the generation loop until both absolute angle errors fall within
/// `config.tolerance_deg` or the budget runs out.
///
/// Each generation: feedforward, denormalize both outputs, record angles,
/// signed errors, cost and the scheduled rate; on failure of the tolerance
/// check, normalize the targets and take one backpropagation step. The run
/// is deterministic given the network and `config.seed`.
pub fn train(
    mut net: Network,
    config: &TrainingConfig,
    targets: AngleTargets,
) -> Result<TrainingRun> {
    config.validate()?;
    targets.validate(config.denorm_mode)?;
    if !net.all_finite() {
        return Err(Error::NonFinite("initial network parameters".into()));
    }
    let targets_norm = targets.normalized(config.denorm_mode)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: f64 = rng.random();
    let mut records = Vec::new();

    for generation in 1..=config.max_generations {
        if generation > 1 && config.input_policy == InputPolicy::ResamplePerGeneration {
            input = rng.random();
        }
        let trace = net.feedforward(input);
        let angles = [
            config
                .denorm_mode
                .denormalize(trace.output[0])
                .expect("sigmoid output lies in (0, 1)"),
            config
                .denorm_mode
                .denormalize(trace.output[1])
                .expect("sigmoid output lies in (0, 1)"),
        ];
        let errors = angle_error(&targets, angles);
        let lr_used = schedule_lr(config, generation);
        records.push(GenerationRecord {
            generation,
            servo1_deg: angles[0],
            servo2_deg: angles[1],
            error1_deg: errors[0],
            error2_deg: errors[1],
            cost: cost(targets_norm, trace.output),
            lr_used,
        });

        if errors[0].abs() <= config.tolerance_deg && errors[1].abs() <= config.tolerance_deg {
            return Ok(TrainingRun {
                records,
                final_network: net,
                converged: true,
                generations_used: generation,
                config: config.clone(),
                targets,
            });
        }

        backprop_update(&mut net, input, targets_norm, lr_used);
        if !net.all_finite() {
            return Err(Error::Diverged {
                generation,
                what: "network parameters became non-finite after the update".into(),
                records,
            });
        }
    }

    Ok(TrainingRun {
        records,
        final_network: net,
        converged: false,
        generations_used: config.max_generations,
        config: config.clone(),
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{param_count, NetworkConfig};
    use proptest::prelude::*;

    fn hand_net() -> Network {
        // hidden=1, w_ih=[1], w_ho=[[1],[1]], all biases 0
        Network::from_params(1, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    /// Relative agreement with an absolute floor for near-zero entries.
    fn gradients_agree(analytic: &[f64], numeric: &[f64], rel: f64, abs_floor: f64) -> bool {
        analytic.iter().zip(numeric).all(|(a, f)| {
            let err = (a - f).abs();
            err <= abs_floor || err / a.abs().max(f.abs()) < rel
        })
    }

    #[test]
    fn angle_error_reference_rows() {
        let targets = AngleTargets::new(90.0, 120.0);
        let e = angle_error(&targets, [-73.44, -39.024]);
        assert!((e[0] - 163.44).abs() < 1e-9);
        assert!((e[1] - 159.024).abs() < 1e-9);

        assert_eq!(angle_error(&targets, [90.0, 120.0]), [0.0, 0.0]);

        // Final reference row under the fixed convention error = target - angle.
        let e = angle_error(&targets, [90.216, 120.384]);
        assert!((e[0] - -0.216).abs() < 1e-9);
        assert!((e[1] - -0.384).abs() < 1e-9);
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost([0.5, 0.5], [0.5, 0.5]), 0.0);
        assert_eq!(cost([1.0, 0.0], [0.0, 1.0]), 1.0);
        let expected = 0.5 * (0.25f64.powi(2) + (1.0f64 / 3.0).powi(2));
        assert!((cost([0.75, 1.0 / 3.0 + 0.5], [0.5, 0.5]) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_error_is_stationary() {
        let cfg = NetworkConfig::new(3, 11).unwrap();
        let mut net = Network::init(&cfg).unwrap();
        let before = net.clone();
        let outputs = net.feedforward(0.4).output;
        let grad = backprop_update(&mut net, 0.4, outputs, 0.8);
        assert!(grad.values().iter().all(|&g| g == 0.0));
        assert_eq!(net, before);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let cfg = NetworkConfig::new(4, 42).unwrap();
        let net = Network::init(&cfg).unwrap();
        let analytic = analytic_gradient(&net, 0.3, [0.9, 0.1]);
        let numeric = finite_diff_gradient(&net, 0.3, [0.9, 0.1], 1e-6);
        assert!(gradients_agree(
            analytic.values(),
            numeric.values(),
            1e-6,
            1e-10
        ));
    }

    #[test]
    fn one_step_reduces_cost() {
        let mut net = hand_net();
        let targets = [0.0, 0.0];
        let before = cost(targets, net.feedforward(0.0).output);
        backprop_update(&mut net, 0.0, targets, 1.0);
        let after = cost(targets, net.feedforward(0.0).output);
        assert!(after < before, "cost {after} not below {before}");
    }

    #[test]
    fn finite_diff_zero_at_stationary_point() {
        let net = hand_net();
        let outputs = net.feedforward(0.0).output;
        let g = finite_diff_gradient(&net, 0.0, outputs, 1e-6);
        assert!(g.values().iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn finite_diff_step_doubling_stays_second_order() {
        let cfg = NetworkConfig::new(3, 42).unwrap();
        let net = Network::init(&cfg).unwrap();
        let analytic = analytic_gradient(&net, 0.7, [0.2, 0.8]);
        let err = |h: f64| {
            finite_diff_gradient(&net, 0.7, [0.2, 0.8], h)
                .values()
                .iter()
                .zip(analytic.values())
                .map(|(f, a)| (f - a).abs())
                .fold(0.0f64, f64::max)
        };
        // Truncation error scales with h^2; allow a rounding floor on top.
        assert!(err(2e-6) <= 4.0 * err(1e-6) + 1e-9);
    }

    #[test]
    fn schedule_examples() {
        let mut cfg = TrainingConfig::new(0.8, 1.0, 20_000, 0);
        assert_eq!(schedule_lr(&cfg, 148), 0.8);

        cfg.lr_schedule = LrSchedule::ExponentialDecay { factor: 0.99 };
        assert_eq!(schedule_lr(&cfg, 1), 0.8);

        cfg.learning_rate = 0.5;
        cfg.lr_schedule = LrSchedule::StepDecay {
            factor: 0.5,
            every: 50,
        };
        assert!((schedule_lr(&cfg, 101) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        assert!(TrainingConfig::new(0.0, 1.0, 100, 0).validate().is_err());
        assert!(TrainingConfig::new(0.8, -1.0, 100, 0).validate().is_err());
        assert!(TrainingConfig::new(0.8, 1.0, 0, 0).validate().is_err());
        let mut cfg = TrainingConfig::new(0.8, 1.0, 100, 0);
        cfg.lr_schedule = LrSchedule::ExponentialDecay { factor: 1.5 };
        assert!(cfg.validate().is_err());
        cfg.lr_schedule = LrSchedule::StepDecay {
            factor: 0.5,
            every: 0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn huge_tolerance_converges_immediately() {
        let net = Network::init(&NetworkConfig::new(2, 5).unwrap()).unwrap();
        let config = TrainingConfig::new(0.8, 180.0, 100, 5);
        let run = train(net, &config, AngleTargets::new(90.0, 120.0)).unwrap();
        assert!(run.converged);
        assert_eq!(run.generations_used, 1);
        assert_eq!(run.records.len(), 1);
    }

    #[test]
    fn exhausted_budget_reports_not_converged() {
        let net = Network::init(&NetworkConfig::new(2, 5).unwrap()).unwrap();
        let config = TrainingConfig::new(0.8, 0.0001, 1, 5);
        let run = train(net, &config, AngleTargets::new(90.0, 120.0)).unwrap();
        assert!(!run.converged);
        assert_eq!(run.generations_used, 1);
        assert_eq!(run.records.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let targets = AngleTargets::new(90.0, 120.0);
        let config = TrainingConfig::new(0.8, 1.0, 20_000, 7);
        let run = |seed: u64| {
            let net = Network::init(&NetworkConfig::new(2, seed).unwrap()).unwrap();
            train(net, &config, targets).unwrap()
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_network, b.final_network);
        assert_eq!(a.converged, b.converged);
    }

    #[test]
    fn looser_tolerance_stops_no_later() {
        let targets = AngleTargets::new(90.0, 120.0);
        for seed in 0..5u64 {
            let net = Network::init(&NetworkConfig::new(2, seed).unwrap()).unwrap();
            let tight = TrainingConfig::new(0.8, 1.0, 20_000, seed);
            let loose = TrainingConfig {
                tolerance_deg: 5.0,
                ..tight.clone()
            };
            let run_tight = train(net.clone(), &tight, targets).unwrap();
            let run_loose = train(net, &loose, targets).unwrap();
            assert!(run_loose.generations_used <= run_tight.generations_used);
            // Same trajectory up to the earlier stop.
            assert_eq!(
                run_loose.records[..],
                run_tight.records[..run_loose.records.len()]
            );
        }
    }

    #[test]
    fn converged_run_satisfies_tolerance_and_cost_bound() {
        let targets = AngleTargets::new(90.0, 120.0);
        let config = TrainingConfig::new(0.8, 1.0, 20_000, 3);
        let net = Network::init(&NetworkConfig::new(2, 3).unwrap()).unwrap();
        let run = train(net, &config, targets).unwrap();
        assert!(run.converged);
        let last = run.records.last().unwrap();
        assert!(last.error1_deg.abs() <= config.tolerance_deg);
        assert!(last.error2_deg.abs() <= config.tolerance_deg);
        let tol_norm = config.tolerance_deg / config.denorm_mode.span();
        assert!(last.cost <= 0.5 * (tol_norm * tol_norm * 2.0));
        // Strictly positive cost before convergence, consecutive indexing.
        for (i, rec) in run.records.iter().enumerate() {
            assert_eq!(rec.generation, i as u64 + 1);
            if rec.generation < run.generations_used {
                assert!(rec.cost > 0.0);
            }
        }
    }

    #[test]
    fn rejects_targets_outside_mode_range() {
        let net = Network::init(&NetworkConfig::new(2, 1).unwrap()).unwrap();
        let config = TrainingConfig::new(0.8, 1.0, 10, 1);
        assert!(train(net, &config, AngleTargets::new(-10.0, 120.0)).is_err());
    }

    #[test]
    fn extreme_rate_saturates_but_stays_finite() {
        // Gradient magnitudes are bounded by the sigmoid, so even an absurd
        // rate drives the parameters into saturation rather than overflow;
        // the run must simply exhaust its budget without tripping the guard.
        let net = Network::init(&NetworkConfig::new(2, 9).unwrap()).unwrap();
        let config = TrainingConfig::new(1e308, 1e-9, 100, 9);
        let run = train(net, &config, AngleTargets::new(90.0, 120.0)).unwrap();
        assert!(!run.converged);
        assert!(run.final_network.all_finite());
    }

    #[test]
    fn divergence_guard_catches_parameter_overflow() {
        // A near-f64::MAX hidden->output weight balanced by the output bias
        // keeps output 0 unsaturated, so its delta is nonzero and the
        // back-propagated hidden-bias step overflows: lr * delta_h with
        // delta_h ~ K/32 blows past f64::MAX for K = 1.7e308, lr = 40.
        let k = 1.7e308;
        let net = Network::from_params(1, &[0.0, k, 0.0, 0.0, -k / 2.0, 0.0]).unwrap();
        let config = TrainingConfig::new(40.0, 1.0, 100, 9);
        match train(net, &config, AngleTargets::new(0.0, 90.0)) {
            Err(Error::Diverged {
                generation,
                records,
                ..
            }) => {
                assert_eq!(generation, 1);
                assert_eq!(records.len(), 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn convergence_holds_across_the_config_space() {
        // Reachable targets, hidden in 2..=25, lr in [0.1, 0.9], tolerance
        // at least 0.5 degrees: at least 95 of 100 seeded runs must converge
        // within the 20k budget.
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let targets = AngleTargets::new(90.0, 120.0);
        let mut converged = 0;
        for seed in 0..100u64 {
            let hidden = rng.random_range(2..=25usize);
            let lr = rng.random_range(0.1..=0.9);
            let tolerance = rng.random_range(0.5..=5.0);
            let net = Network::init(&NetworkConfig::new(hidden, seed).unwrap()).unwrap();
            let config = TrainingConfig::new(lr, tolerance, 20_000, seed);
            if train(net, &config, targets).unwrap().converged {
                converged += 1;
            }
        }
        assert!(
            converged >= 95,
            "only {converged}/100 sampled configs converged"
        );
    }

    #[test]
    fn resample_policy_draws_fresh_inputs() {
        let targets = AngleTargets::new(90.0, 120.0);
        let fixed = TrainingConfig::new(0.8, 1e-6, 50, 13);
        let resample = TrainingConfig {
            input_policy: InputPolicy::ResamplePerGeneration,
            ..fixed.clone()
        };
        let net = Network::init(&NetworkConfig::new(2, 13).unwrap()).unwrap();
        let a = train(net.clone(), &fixed, targets).unwrap();
        let b = train(net, &resample, targets).unwrap();
        // First generation sees the same draw under both policies.
        assert_eq!(a.records[0], b.records[0]);
        assert_ne!(a.records, b.records);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gradient_check_random_triples(
            seed in 0u64..10_000,
            hidden in 1usize..26,
            input in 0.0f64..1.0,
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
        ) {
            let cfg = NetworkConfig::new(hidden, seed).unwrap();
            let net = Network::init(&cfg).unwrap();
            let analytic = analytic_gradient(&net, input, [t1, t2]);
            let numeric = finite_diff_gradient(&net, input, [t1, t2], 1e-6);
            prop_assert_eq!(analytic.values().len(), param_count(hidden));
            prop_assert!(gradients_agree(analytic.values(), numeric.values(), 1e-6, 1e-10));
        }
    }
}
