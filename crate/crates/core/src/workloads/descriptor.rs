//! Network descriptors: an input tensor plus an ordered list of convolution
//! layers, each naming the layers it reads from.
//!
//! ```toml
//! schema_version = 1
//! name = "tiny"
//! source = "hand written"
//!
//! [input]
//! channels = 3
//! width = 16
//! height = 16
//! density = 1.0
//!
//! [[layers]]
//! name = "conv1"
//! in_channels = 3
//! out_channels = 8
//! width = 16
//! height = 16
//! filter = 3
//! pad = 1
//! weight_density = 0.5
//! activation_density = 1.0
//!
//! [[layers]]
//! name = "conv2"
//! inputs = ["conv1"]            # default: the previous layer
//! input_pool = [{ size = 2, stride = 2 }]
//! in_channels = 8
//! out_channels = 8
//! width = 8
//! height = 8
//! filter = 1
//! weight_density = 0.4
//! activation_density = 0.5
//! ```
//!
//! A layer with several `inputs` reads their outputs concatenated along the
//! channel dimension; `"@input"` names the network input. `input_pool` is a
//! list of max-pooling steps applied in order to that tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::{LayerShape, Requant};

pub const SCHEMA_VERSION: u32 = 1;
/// Name under which layers refer to the network input.
pub const NETWORK_INPUT: &str = "@input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub size: usize,
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
}

impl PoolSpec {
    pub fn out_extent(&self, n: usize) -> Option<usize> {
        if self.size == 0 || self.stride == 0 || n + 2 * self.pad < self.size {
            None
        } else {
            Some((n + 2 * self.pad - self.size) / self.stride + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default = "one_f64")]
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_pool: Vec<PoolSpec>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub height: usize,
    /// Square filter; `filter_w` / `filter_h` override either side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_h: Option<usize>,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default = "one")]
    pub groups: usize,
    /// Target weight density after magnitude pruning.
    pub weight_density: f64,
    /// Typical density of this layer's input activations.
    pub activation_density: f64,
    /// Density of the stored output; defaults to the first consumer's
    /// `activation_density`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requant_shift: Option<u32>,
}

fn one() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

impl LayerSpec {
    pub fn shape(&self) -> Result<LayerShape> {
        let fw = self.filter_w.or(self.filter);
        let fh = self.filter_h.or(self.filter);
        let (Some(fw), Some(fh)) = (fw, fh) else {
            return Err(Error::Descriptor(format!("layer `{}`: no filter size given", self.name)));
        };
        let shape = LayerShape::new(
            self.name.clone(),
            self.in_channels,
            self.out_channels,
            self.width,
            self.height,
            fw,
            fh,
        )
        .with_stride(self.stride)
        .with_pad(self.pad)
        .with_groups(self.groups);
        shape.validate().map_err(|e| Error::Descriptor(e.to_string()))?;
        Ok(shape)
    }

    /// Output scaling of the post-processing stage. Without an explicit
    /// shift, the shift grows with the square root of the fan-in so that
    /// chained activations stay in the 8-bit range.
    pub fn requant(&self) -> Requant {
        let fan_in = (self.in_channels / self.groups.max(1))
            * self.filter_w.or(self.filter).unwrap_or(1)
            * self.filter_h.or(self.filter).unwrap_or(1);
        let shift = self.requant_shift.unwrap_or_else(|| {
            let bits = usize::BITS - fan_in.max(1).next_power_of_two().leading_zeros() - 1;
            bits.div_ceil(2) + 6
        });
        Requant { shift, clamp_max: 127 }
    }
}

/// Where a layer reads one of its input slices from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDescriptor {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub source: String,
    pub input: InputSpec,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
}

fn check_density(what: &str, d: f64) -> Result<()> {
    if (0.0..=1.0).contains(&d) {
        Ok(())
    } else {
        Err(Error::Descriptor(format!("{what} {d} outside [0, 1]")))
    }
}

impl NetworkDescriptor {
    pub fn parse(text: &str) -> Result<Self> {
        let net: NetworkDescriptor = toml::from_str(text).map_err(|e| Error::Descriptor(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Descriptor(e.to_string()))
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Resolved input slices of layer `i`.
    pub fn sources(&self, i: usize) -> Result<Vec<Source>> {
        let layer = &self.layers[i];
        if layer.inputs.is_empty() {
            return Ok(vec![if i == 0 { Source::Input } else { Source::Layer(i - 1) }]);
        }
        layer
            .inputs
            .iter()
            .map(|n| {
                if n == NETWORK_INPUT {
                    return Ok(Source::Input);
                }
                match self.find(n) {
                    Some(j) if j < i => Ok(Source::Layer(j)),
                    Some(_) => Err(Error::Descriptor(format!(
                        "layer `{}` reads `{n}`, which comes later in the list",
                        layer.name
                    ))),
                    None => Err(Error::Descriptor(format!("layer `{}` reads unknown layer `{n}`", layer.name))),
                }
            })
            .collect()
    }

    /// Layers that read the output of layer `i`.
    pub fn consumers(&self, i: usize) -> Vec<usize> {
        (i + 1..self.layers.len())
            .filter(|&j| self.sources(j).map(|s| s.contains(&Source::Layer(i))).unwrap_or(false))
            .collect()
    }

    fn source_name(&self, s: Source) -> &str {
        match s {
            Source::Input => NETWORK_INPUT,
            Source::Layer(j) => &self.layers[j].name,
        }
    }

    fn source_dims(&self, s: Source) -> (usize, usize, usize) {
        match s {
            Source::Input => (self.input.channels, self.input.width, self.input.height),
            Source::Layer(j) => {
                let l = &self.layers[j];
                let shape = l.shape().expect("validated earlier in the chain");
                (l.out_channels, shape.out_w(), shape.out_h())
            }
        }
    }

    /// Checks the schema version, layer shapes, densities and that every
    /// layer's declared input matches what its sources produce.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Descriptor(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Descriptor(format!("network `{}` has no layers", self.name)));
        }
        let i = &self.input;
        if i.channels == 0 || i.width == 0 || i.height == 0 {
            return Err(Error::Descriptor("input dimensions must be positive".into()));
        }
        check_density("input density", i.density)?;
        for (idx, l) in self.layers.iter().enumerate() {
            if l.name == NETWORK_INPUT || self.find(&l.name) != Some(idx) {
                return Err(Error::Descriptor(format!("layer name `{}` is reserved or repeated", l.name)));
            }
            l.shape()?;
            check_density(&format!("layer `{}` weight_density", l.name), l.weight_density)?;
            check_density(&format!("layer `{}` activation_density", l.name), l.activation_density)?;
            if let Some(d) = l.output_density {
                check_density(&format!("layer `{}` output_density", l.name), d)?;
            }
            self.check_chain(idx)?;
        }
        Ok(())
    }

    fn check_chain(&self, idx: usize) -> Result<()> {
        let l = &self.layers[idx];
        let sources = self.sources(idx)?;
        let names: Vec<&str> = sources.iter().map(|&s| self.source_name(s)).collect();
        let (mut c, w0, h0) = (0, self.source_dims(sources[0]).1, self.source_dims(sources[0]).2);
        for &s in &sources {
            let (sc, sw, sh) = self.source_dims(s);
            if (sw, sh) != (w0, h0) {
                return Err(Error::Descriptor(format!(
                    "`{}` -> `{}`: concatenated inputs have different planes ({w0}x{h0} vs {sw}x{sh} from `{}`)",
                    names[0],
                    l.name,
                    self.source_name(s)
                )));
            }
            c += sc;
        }
        let (mut w, mut h) = (w0, h0);
        for p in &l.input_pool {
            match (p.out_extent(w), p.out_extent(h)) {
                (Some(pw), Some(ph)) => (w, h) = (pw, ph),
                _ => {
                    return Err(Error::Descriptor(format!(
                        "layer `{}`: pool {}x{}/{} does not fit a {w}x{h} plane",
                        l.name, p.size, p.size, p.stride
                    )))
                }
            }
        }
        if (c, w, h) != (l.in_channels, l.width, l.height) {
            return Err(Error::Descriptor(format!(
                "`{}` -> `{}`: source provides {c}x{w}x{h} but the layer expects {}x{}x{}",
                names.join("+"),
                l.name,
                l.in_channels,
                l.width,
                l.height
            )));
        }
        Ok(())
    }

    pub fn shapes(&self) -> Result<Vec<LayerShape>> {
        self.layers.iter().map(LayerSpec::shape).collect()
    }

    /// Dense multiplies of one inference pass over all layers.
    pub fn dense_multiplies(&self) -> Result<u64> {
        Ok(self.shapes()?.iter().map(LayerShape::dense_multiplies).sum())
    }

    /// Largest single-layer weight tensor at two bytes per value.
    pub fn max_weight_bytes(&self) -> Result<usize> {
        Ok(self.shapes()?.iter().map(|s| 2 * s.weight_count()).max().unwrap_or(0))
    }

    /// Largest single-layer input or output activation tensor at two bytes
    /// per value.
    pub fn max_activation_bytes(&self) -> Result<usize> {
        Ok(self
            .shapes()?
            .iter()
            .map(|s| 2 * s.input_count().max(s.output_count()))
            .max()
            .unwrap_or(0))
    }

    /// Pool applied by the post-processing unit of layer `i` before its
    /// output is stored: the leading input pool shared by every consumer.
    pub fn stored_pool(&self, i: usize) -> Option<PoolSpec> {
        let consumers = self.consumers(i);
        let first = *self.layers.get(*consumers.first()?)?.input_pool.first()?;
        consumers
            .iter()
            .all(|&j| self.layers[j].input_pool.first() == Some(&first))
            .then_some(first)
    }

    /// Density the stored output of layer `i` is synthesized at.
    pub fn output_density(&self, i: usize) -> f64 {
        let l = &self.layers[i];
        l.output_density
            .or_else(|| self.consumers(i).first().map(|&j| self.layers[j].activation_density))
            .unwrap_or(l.activation_density)
    }

    /// A copy with every channel count scaled by `factor` and rounded to a
    /// multiple of the layer's groups (and of two where the original count
    /// is even). Input channel counts follow from the scaled chain.
    pub fn scale_channels(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidArgument(format!("channel scale {factor} must be positive")));
        }
        let scale = |n: usize, multiple: usize| -> usize {
            let m = if n % 2 == 0 { multiple.max(2) } else { multiple };
            let m = if n % m == 0 { m } else { 1 };
            (((n as f64 * factor) / m as f64).round() as usize).max(1) * m
        };
        let mut net = self.clone();
        net.input.channels = scale(self.input.channels, 1);
        for i in 0..net.layers.len() {
            let groups = net.layers[i].groups;
            net.layers[i].out_channels = scale(self.layers[i].out_channels, groups);
            let c = net
                .sources(i)?
                .iter()
                .map(|&s| match s {
                    Source::Input => net.input.channels,
                    Source::Layer(j) => net.layers[j].out_channels,
                })
                .sum();
            net.layers[i].in_channels = c;
        }
        if (factor - 1.0).abs() > f64::EPSILON {
            net.name = format!("{}@{factor}", self.name);
        }
        net.validate()?;
        Ok(net)
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkDescriptor> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NetworkDescriptor::parse(&text).map_err(|e| match e {
        Error::Descriptor(msg) => Error::Descriptor(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
schema_version = 1
name = "tiny"

[input]
channels = 2
width = 8
height = 8

[[layers]]
name = "a"
in_channels = 2
out_channels = 4
width = 8
height = 8
filter = 3
pad = 1
weight_density = 0.5
activation_density = 1.0

[[layers]]
name = "b"
input_pool = [{ size = 2, stride = 2 }]
in_channels = 4
out_channels = 4
width = 4
height = 4
filter = 1
weight_density = 0.5
activation_density = 0.5

[[layers]]
name = "c"
inputs = ["b", "@input"]
in_channels = 6
out_channels = 2
width = 4
height = 4
filter = 1
weight_density = 0.5
activation_density = 0.5
"#;

    #[test]
    fn mismatched_concat_is_named() {
        let err = NetworkDescriptor::parse(TINY).unwrap_err().to_string();
        assert!(err.contains("`b`") && err.contains("`c`"), "{err}");
    }

    #[test]
    fn chain_checks_channels() {
        let text = TINY.replace("inputs = [\"b\", \"@input\"]\nin_channels = 6", "in_channels = 4");
        let net = NetworkDescriptor::parse(&text).unwrap();
        assert_eq!(net.sources(2).unwrap(), vec![Source::Layer(1)]);
        assert_eq!(net.stored_pool(0), Some(PoolSpec { size: 2, stride: 2, pad: 0 }));
        assert_eq!(net.stored_pool(1), None);
        assert_eq!(net.output_density(0), 0.5);

        let bad = text.replace("in_channels = 4\nout_channels = 2", "in_channels = 5\nout_channels = 2");
        let err = NetworkDescriptor::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("`b` -> `c`"), "{err}");
    }

    #[test]
    fn empty_layer_list_is_rejected() {
        let text = "schema_version = 1\nname = \"e\"\n[input]\nchannels = 1\nwidth = 1\nheight = 1\n";
        assert!(matches!(NetworkDescriptor::parse(text), Err(Error::Descriptor(_))));
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let text = TINY.replace("name = \"tiny\"", "name = \"tiny\"\ncolour = 3");
        let err = NetworkDescriptor::parse(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        let text = TINY.replace("schema_version = 1", "schema_version = 7");
        assert!(NetworkDescriptor::parse(&text).is_err());
    }

    #[test]
    fn default_requant_tracks_fan_in() {
        let text = TINY.replace("inputs = [\"b\", \"@input\"]\nin_channels = 6", "in_channels = 4");
        let net = NetworkDescriptor::parse(&text).unwrap();
        // 2 * 3 * 3 = 18 taps -> 5 bits -> 3 + 6.
        assert_eq!(net.layers[0].requant().shift, 9);
        assert_eq!(net.layers[1].requant().shift, 7);
    }

    #[test]
    fn scaling_keeps_the_chain_valid() {
        let text = TINY.replace("inputs = [\"b\", \"@input\"]\nin_channels = 6", "in_channels = 4");
        let net = NetworkDescriptor::parse(&text).unwrap();
        let half = net.scale_channels(0.5).unwrap();
        assert_eq!(half.layers[0].out_channels, 2);
        assert_eq!(half.layers[1].in_channels, 2);
        assert_eq!(net.scale_channels(1.0).unwrap(), net);
    }
}
