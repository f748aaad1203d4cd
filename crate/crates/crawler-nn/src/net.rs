//! Feedforward network model: one input neuron, one sigmoid hidden layer,
//! two sigmoid output neurons, plus the linear maps between servo angles in
//! degrees and the network's (0, 1) output range.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The input layer is a single neuron carrying an arbitrary value.
pub const INPUT_SIZE: usize = 1;
/// The output layer is the two servo angles.
pub const OUTPUT_SIZE: usize = 2;

/// Binary sigmoid, computed with the branch form so large-magnitude inputs
/// saturate instead of overflowing `exp`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shape of a network: 1 input, a variable hidden layer, 2 outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    /// Seed for drawing the initial weights and biases.
    pub seed: u64,
}

impl NetworkConfig {
    /// Standard shape: `hidden_size` hidden neurons between the fixed
    /// 1-input / 2-output layers.
    pub fn new(hidden_size: usize, seed: u64) -> Result<Self> {
        Self::with_sizes(INPUT_SIZE, hidden_size, OUTPUT_SIZE, seed)
    }

    /// Full constructor; rejects any shape other than 1 input, 2 outputs,
    /// and at least one hidden neuron.
    pub fn with_sizes(
        input_size: usize,
        hidden_size: usize,
        output_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_size != INPUT_SIZE {
            return Err(Error::InvalidConfig(format!(
                "input_size must be {INPUT_SIZE}, got {input_size}"
            )));
        }
        if output_size != OUTPUT_SIZE {
            return Err(Error::InvalidConfig(format!(
                "output_size must be {OUTPUT_SIZE}, got {output_size}"
            )));
        }
        if hidden_size == 0 {
            return Err(Error::InvalidConfig(
                "hidden_size must be at least 1".into(),
            ));
        }
        Ok(Self {
            input_size,
            hidden_size,
            output_size,
            seed,
        })
    }
}

/// How the two network outputs in (0, 1) map to servo angles in degrees.
///
/// Two interpretations are supported because published generation tables for
/// this task contain negative angles that the stated linear map cannot
/// produce; both are selectable and every output records which one was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DenormMode {
    /// `y = 180 * x`, angles in [0, 180].
    PaperStated,
    /// `y = 360 * x - 180`, angles in [-180, 180].
    TableAffine,
}

impl DenormMode {
    /// Inclusive angle range in degrees.
    pub fn angle_range(self) -> (f64, f64) {
        match self {
            DenormMode::PaperStated => (0.0, 180.0),
            DenormMode::TableAffine => (-180.0, 180.0),
        }
    }

    /// Width of the angle range in degrees (180 or 360).
    pub fn span(self) -> f64 {
        let (lo, hi) = self.angle_range();
        hi - lo
    }

    /// Map an angle in degrees to the network range [0, 1].
    ///
    /// Exact inverse of [`DenormMode::denormalize`] for the same mode.
    pub fn normalize(self, angle_deg: f64) -> Result<f64> {
        let (lo, hi) = self.angle_range();
        if !angle_deg.is_finite() || angle_deg < lo || angle_deg > hi {
            return Err(Error::AngleOutOfRange {
                angle: angle_deg,
                mode: self,
                min: lo,
                max: hi,
            });
        }
        Ok(match self {
            DenormMode::PaperStated => angle_deg / 180.0,
            DenormMode::TableAffine => (angle_deg + 180.0) / 360.0,
        })
    }

    /// Map a network output in [0, 1] to an angle in degrees.
    pub fn denormalize(self, x: f64) -> Result<f64> {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(Error::NormOutOfRange(x));
        }
        Ok(match self {
            DenormMode::PaperStated => 180.0 * x,
            DenormMode::TableAffine => 360.0 * x - 180.0,
        })
    }
}

impl fmt::Display for DenormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenormMode::PaperStated => write!(f, "paper-stated"),
            DenormMode::TableAffine => write!(f, "table-affine"),
        }
    }
}

impl FromStr for DenormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-stated" => Ok(DenormMode::PaperStated),
            "table-affine" => Ok(DenormMode::TableAffine),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode {other:?} (expected paper-stated or table-affine)"
            ))),
        }
    }
}

/// The evolving learner: weights and per-neuron biases for the fixed
/// 1 -> hidden -> 2 topology.
///
/// Parameters live in one canonical order, which is also the persistence
/// layout: input->hidden weights row-major (one per hidden neuron), then
/// hidden->output weights row-major (output 0's row, then output 1's), then
/// hidden biases, then the two output biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    hidden_size: usize,
    /// Input->hidden weights, `w_ih[j]` feeds hidden neuron `j`.
    w_ih: Vec<f64>,
    /// Hidden->output weights, `w_ho[o * hidden_size + j]`.
    w_ho: Vec<f64>,
    /// Hidden biases.
    b_h: Vec<f64>,
    /// Output biases.
    b_o: [f64; 2],
}

impl Network {
    /// Draw all weights and biases i.i.d. uniform on [-1, 1] from the
    /// config's seed. The same seed yields a bit-identical network.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::init_with_rng(config, &mut rng)
    }

    /// Same as [`Network::init`] but drawing from a caller-provided source.
    /// Values are drawn in canonical parameter order.
    pub fn init_with_rng<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        // Re-check even for configs built via the validating constructors;
        // configs can also arrive from deserialized files.
        let config = NetworkConfig::with_sizes(
            config.input_size,
            config.hidden_size,
            config.output_size,
            config.seed,
        )?;
        let h = config.hidden_size;
        let dist = Uniform::new_inclusive(-1.0f64, 1.0)
            .expect("constant bounds are a valid uniform range");
        let mut draw = || dist.sample(rng);
        let w_ih = (0..h).map(|_| draw()).collect();
        let w_ho = (0..OUTPUT_SIZE * h).map(|_| draw()).collect();
        let b_h = (0..h).map(|_| draw()).collect();
        let b_o = [draw(), draw()];
        Ok(Self {
            hidden_size: h,
            w_ih,
            w_ho,
            b_h,
            b_o,
        })
    }

    /// Rebuild a network from values in canonical parameter order.
    pub fn from_params(hidden_size: usize, values: &[f64]) -> Result<Self> {
        if hidden_size == 0 {
            return Err(Error::InvalidConfig(
                "hidden_size must be at least 1".into(),
            ));
        }
        let expected = param_count(hidden_size);
        if values.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "expected {expected} parameters for hidden_size {hidden_size}, got {}",
                values.len()
            )));
        }
        let h = hidden_size;
        Ok(Self {
            hidden_size: h,
            w_ih: values[..h].to_vec(),
            w_ho: values[h..h + 2 * h].to_vec(),
            b_h: values[h + 2 * h..4 * h].to_vec(),
            b_o: [values[4 * h], values[4 * h + 1]],
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// Total number of parameters: `4 * hidden_size + 2`.
    pub fn param_count(&self) -> usize {
        param_count(self.hidden_size)
    }

    /// All parameters in canonical order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w_ih);
        out.extend_from_slice(&self.w_ho);
        out.extend_from_slice(&self.b_h);
        out.extend_from_slice(&self.b_o);
        out
    }

    /// Mutable access to one parameter by canonical index.
    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let h = self.hidden_size;
        match index {
            i if i < h => &mut self.w_ih[i],
            i if i < 3 * h => &mut self.w_ho[i - h],
            i if i < 4 * h => &mut self.b_h[i - 3 * h],
            i if i < 4 * h + 2 => &mut self.b_o[i - 4 * h],
            i => panic!("parameter index {i} out of range for hidden_size {h}"),
        }
    }

    pub fn w_ih(&self) -> &[f64] {
        &self.w_ih
    }

    /// Hidden->output weight feeding output `o` from hidden neuron `j`.
    pub fn w_ho(&self, o: usize, j: usize) -> f64 {
        self.w_ho[o * self.hidden_size + j]
    }

    pub fn b_h(&self) -> &[f64] {
        &self.b_h
    }

    pub fn b_o(&self) -> [f64; 2] {
        self.b_o
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    /// One forward pass: weighted sums plus bias at each neuron, passed
    /// through the sigmoid. Pure; the full trace is returned so callers can
    /// inspect pre-activations.
    pub fn feedforward(&self, input: f64) -> ForwardTrace {
        let hidden_pre: Vec<f64> = self
            .w_ih
            .iter()
            .zip(&self.b_h)
            .map(|(w, b)| w * input + b)
            .collect();
        let hidden_out: Vec<f64> = hidden_pre.iter().map(|&z| sigmoid(z)).collect();
        let mut output_pre = [0.0f64; 2];
        for (o, pre) in output_pre.iter_mut().enumerate() {
            let row = &self.w_ho[o * self.hidden_size..(o + 1) * self.hidden_size];
            *pre = row
                .iter()
                .zip(&hidden_out)
                .fold(self.b_o[o], |acc, (w, h)| acc + w * h);
        }
        let output = [sigmoid(output_pre[0]), sigmoid(output_pre[1])];
        ForwardTrace {
            input,
            hidden_pre,
            hidden_out,
            output_pre,
            output,
        }
    }

    pub(crate) fn apply_update<F: FnMut(usize) -> f64>(&mut self, lr: f64, mut partial: F) {
        let n = self.param_count();
        for i in 0..n {
            *self.param_mut(i) -= lr * partial(i);
        }
    }
}

/// Parameter count for a given hidden layer size.
pub fn param_count(hidden_size: usize) -> usize {
    // w_ih + w_ho + b_h + b_o
    hidden_size + OUTPUT_SIZE * hidden_size + hidden_size + OUTPUT_SIZE
}

/// Everything computed during one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: f64,
    /// Summer outputs at the hidden layer.
    pub hidden_pre: Vec<f64>,
    /// Sigmoid of `hidden_pre`.
    pub hidden_out: Vec<f64>,
    /// Summer outputs at the output layer.
    pub output_pre: [f64; 2],
    /// Sigmoid of `output_pre`; both strictly in (0, 1).
    pub output: [f64; 2],
}
