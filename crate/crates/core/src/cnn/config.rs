use serde::{Deserialize, Serialize};

use super::CnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    /// `[height (mel), width (frames)]`
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub shape: [usize; 2],
    pub stride: [usize; 2],
}

/// Two conv/ReLU/max-pool stages, two ReLU hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    /// `[mel_bands, frames, channels]`
    pub input_shape: [usize; 3],
    pub conv1: ConvSpec,
    pub pool1: PoolSpec,
    pub conv2: ConvSpec,
    pub pool2: PoolSpec,
    pub fc_width: usize,
    pub num_classes: usize,
    /// Inverted dropout on both hidden fully connected layers.
    pub dropout_p: f64,
}

impl CnnConfig {
    /// The 60x101x2 architecture with 80-filter convolutions and 5000-unit
    /// hidden layers.
    pub fn reference(num_classes: usize) -> Self {
        Self {
            input_shape: [60, 101, 2],
            conv1: ConvSpec {
                filters: 80,
                kernel: [57, 6],
                stride: [1, 1],
            },
            pool1: PoolSpec {
                shape: [4, 3],
                stride: [1, 3],
            },
            conv2: ConvSpec {
                filters: 80,
                kernel: [1, 3],
                stride: [1, 1],
            },
            pool2: PoolSpec {
                shape: [1, 3],
                stride: [1, 3],
            },
            fc_width: 5000,
            num_classes,
            dropout_p: 0.5,
        }
    }

    pub fn with_fc_width(mut self, fc_width: usize) -> Self {
        self.fc_width = fc_width;
        self
    }

    pub fn shapes(&self) -> Result<StageShapes, CnnError> {
        let [h, w, c] = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(CnnError::InvalidConfig("empty input shape".into()));
        }
        if self.num_classes < 2 {
            return Err(CnnError::InvalidConfig("num_classes must be at least 2".into()));
        }
        if self.fc_width == 0 {
            return Err(CnnError::InvalidConfig("fc_width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(CnnError::InvalidConfig("dropout_p must be in [0, 1)".into()));
        }
        let conv1 = conv_out([c, h, w], &self.conv1, "conv1")?;
        let pool1 = pool_out(conv1, &self.pool1, "pool1")?;
        let conv2 = conv_out(pool1, &self.conv2, "conv2")?;
        let pool2 = pool_out(conv2, &self.pool2, "pool2")?;
        Ok(StageShapes {
            input: [c, h, w],
            conv1,
            pool1,
            conv2,
            pool2,
            flatten: pool2.iter().product(),
        })
    }
}

/// Channel-first `[channels, height, width]` shape after every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShapes {
    pub input: [usize; 3],
    pub conv1: [usize; 3],
    pub pool1: [usize; 3],
    pub conv2: [usize; 3],
    pub pool2: [usize; 3],
    pub flatten: usize,
}

fn window_out(input: usize, size: usize, stride: usize) -> Option<usize> {
    if size == 0 || stride == 0 || size > input {
        None
    } else {
        Some((input - size) / stride + 1)
    }
}

fn conv_out(input: [usize; 3], spec: &ConvSpec, name: &str) -> Result<[usize; 3], CnnError> {
    let oh = window_out(input[1], spec.kernel[0], spec.stride[0]);
    let ow = window_out(input[2], spec.kernel[1], spec.stride[1]);
    match (oh, ow, spec.filters) {
        (Some(oh), Some(ow), f) if f > 0 => Ok([f, oh, ow]),
        _ => Err(CnnError::InvalidConfig(format!(
            "{name}: kernel {:?} stride {:?} does not fit input {:?}",
            spec.kernel, spec.stride, input
        ))),
    }
}

fn pool_out(input: [usize; 3], spec: &PoolSpec, name: &str) -> Result<[usize; 3], CnnError> {
    let oh = window_out(input[1], spec.shape[0], spec.stride[0]);
    let ow = window_out(input[2], spec.shape[1], spec.stride[1]);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok([input[0], oh, ow]),
        _ => Err(CnnError::InvalidConfig(format!(
            "{name}: window {:?} stride {:?} does not fit input {:?}",
            spec.shape, spec.stride, input
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Nesterov momentum coefficient.
    pub momentum: f64,
    /// Coefficient of the summed squared weights added to the loss.
    pub l2: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation accuracy.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            learning_rate: 0.002,
            momentum: 0.9,
            l2: 0.001,
            epochs: 30,
            early_stop_patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        if self.batch_size == 0 {
            return Err(CnnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CnnError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CnnError::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(CnnError::InvalidConfig("l2 must be non-negative".into()));
        }
        Ok(())
    }
}
