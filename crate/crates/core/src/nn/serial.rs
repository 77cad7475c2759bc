//! JSON form of [`DenseNetwork`]: versioned, with row-major weight arrays.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, DenseNetwork};
use crate::error::{Error, Result};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerJson {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    /// `input_dim * output_dim` values, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkJson {
    pub format_version: u32,
    pub layers: Vec<LayerJson>,
}

impl From<&DenseNetwork> for NetworkJson {
    fn from(net: &DenseNetwork) -> Self {
        NetworkJson {
            format_version: NETWORK_FORMAT_VERSION,
            layers: net
                .layers
                .iter()
                .map(|l| LayerJson {
                    input_dim: l.input_dim(),
                    output_dim: l.output_dim(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkJson> for DenseNetwork {
    type Error = Error;

    fn try_from(json: NetworkJson) -> Result<Self> {
        if json.format_version != NETWORK_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported network format version {}",
                json.format_version
            )));
        }
        let layers = json
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = Array2::from_shape_vec((l.input_dim, l.output_dim), l.weights)
                    .map_err(|_| Error::Model(format!("layer {i}: weight count does not match {}x{}", l.input_dim, l.output_dim)))?;
                Ok(DenseLayer {
                    weights,
                    biases: Array1::from(l.biases),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNetwork::from_layers(layers)
    }
}

impl Serialize for DenseNetwork {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let json = NetworkJson::deserialize(deserializer)?;
        DenseNetwork::try_from(json).map_err(serde::de::Error::custom)
    }
}
