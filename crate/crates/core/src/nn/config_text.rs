//! Text format for network configurations.
//!
//! One directive per line, mirroring a layer-table row: kind first, then
//! `key=value` fields. `#` starts a comment. Example:
//!
//! ```text
//! loss mse
//! learning_rate 1e-4
//! batch_size 32
//! epochs 300
//! patience 20
//! validation_fraction 0.1
//!
//! conv2d channels=8 kernel=4x4 stride=2x2 activation=relu
//! dropout rate=0.2
//! maxpool window=2x2
//! flatten
//! dense width=32 activation=relu
//! dropout rate=0.2
//! concatenate
//! dense width=1 activation=linear
//! ```

use super::{Activation, AdamHyper, LayerSpec, LossKind, NetworkConfig};
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::path::Path;

fn bad(line_no: usize, detail: impl Into<String>) -> Error {
    Error::InvalidConfig(format!("line {}: {}", line_no, detail.into()))
}

fn parse_fields(line_no: usize, parts: &[&str]) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| bad(line_no, format!("expected key=value, got {part:?}")))?;
        map.insert(k.to_ascii_lowercase(), v.to_string());
    }
    Ok(map)
}

fn field<'a>(
    line_no: usize,
    map: &'a HashMap<String, String>,
    key: &str,
) -> Result<&'a str> {
    map.get(key).map(|s| s.as_str()).ok_or_else(|| bad(line_no, format!("missing {key}=")))
}

fn parse_usize(line_no: usize, s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| bad(line_no, format!("bad {what} {s:?}")))
}

fn parse_f64(line_no: usize, s: &str, what: &str) -> Result<f64> {
    s.parse().map_err(|_| bad(line_no, format!("bad {what} {s:?}")))
}

/// `4x4` or a bare `4` (expands to `(4, 4)`).
fn parse_pair(line_no: usize, s: &str, what: &str) -> Result<(usize, usize)> {
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse_usize(line_no, a, what)?, parse_usize(line_no, b, what)?)),
        None => {
            let v = parse_usize(line_no, s, what)?;
            Ok((v, v))
        }
    }
}

fn parse_activation(line_no: usize, map: &HashMap<String, String>) -> Result<Activation> {
    let s = field(line_no, map, "activation")?;
    Activation::parse(s).ok_or_else(|| bad(line_no, format!("unknown activation {s:?}")))
}

/// Parses a configuration from text.
pub fn parse_config(text: &str) -> Result<NetworkConfig> {
    let mut layers = Vec::new();
    let mut loss = None;
    let mut optimizer = AdamHyper::default();
    let mut batch_size = 32usize;
    let mut epochs = 100usize;
    let mut patience = 20usize;
    let mut validation_fraction = 0.1f64;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.split_once('#') {
            Some((head, _)) => head.trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap().to_ascii_lowercase();
        let rest: Vec<&str> = parts.collect();
        match head.as_str() {
            "loss" => {
                let name = rest.first().ok_or_else(|| bad(line_no, "loss needs a name"))?;
                loss = Some(
                    LossKind::parse(name).ok_or_else(|| bad(line_no, format!("unknown loss {name:?}")))?,
                );
            }
            "learning_rate" => {
                optimizer.learning_rate =
                    parse_f64(line_no, rest.first().unwrap_or(&""), "learning_rate")?
            }
            "beta1" => optimizer.beta1 = parse_f64(line_no, rest.first().unwrap_or(&""), "beta1")?,
            "beta2" => optimizer.beta2 = parse_f64(line_no, rest.first().unwrap_or(&""), "beta2")?,
            "epsilon" => {
                optimizer.epsilon = parse_f64(line_no, rest.first().unwrap_or(&""), "epsilon")?
            }
            "batch_size" => {
                batch_size = parse_usize(line_no, rest.first().unwrap_or(&""), "batch_size")?
            }
            "epochs" => epochs = parse_usize(line_no, rest.first().unwrap_or(&""), "epochs")?,
            "patience" => patience = parse_usize(line_no, rest.first().unwrap_or(&""), "patience")?,
            "validation_fraction" => {
                validation_fraction =
                    parse_f64(line_no, rest.first().unwrap_or(&""), "validation_fraction")?
            }
            "conv2d" => {
                let map = parse_fields(line_no, &rest)?;
                layers.push(LayerSpec::Conv2D {
                    channels: parse_usize(line_no, field(line_no, &map, "channels")?, "channels")?,
                    kernel: parse_pair(line_no, field(line_no, &map, "kernel")?, "kernel")?,
                    stride: match map.get("stride") {
                        Some(s) => parse_pair(line_no, s, "stride")?,
                        None => (1, 1),
                    },
                    activation: parse_activation(line_no, &map)?,
                });
            }
            "conv1d" => {
                let map = parse_fields(line_no, &rest)?;
                layers.push(LayerSpec::Conv1D {
                    channels: parse_usize(line_no, field(line_no, &map, "channels")?, "channels")?,
                    kernel: parse_usize(line_no, field(line_no, &map, "kernel")?, "kernel")?,
                    stride: match map.get("stride") {
                        Some(s) => parse_usize(line_no, s, "stride")?,
                        None => 1,
                    },
                    activation: parse_activation(line_no, &map)?,
                });
            }
            "maxpool" => {
                let map = parse_fields(line_no, &rest)?;
                layers.push(LayerSpec::MaxPool {
                    window: parse_pair(line_no, field(line_no, &map, "window")?, "window")?,
                });
            }
            "flatten" => layers.push(LayerSpec::Flatten),
            "dense" => {
                let map = parse_fields(line_no, &rest)?;
                layers.push(LayerSpec::Dense {
                    width: parse_usize(line_no, field(line_no, &map, "width")?, "width")?,
                    activation: parse_activation(line_no, &map)?,
                });
            }
            "dropout" => {
                let map = parse_fields(line_no, &rest)?;
                layers.push(LayerSpec::Dropout {
                    rate: parse_f64(line_no, field(line_no, &map, "rate")?, "rate")?,
                });
            }
            "concatenate" => layers.push(LayerSpec::Concatenate),
            other => return Err(bad(line_no, format!("unknown directive {other:?}"))),
        }
    }

    let loss = loss.ok_or_else(|| Error::InvalidConfig("missing loss directive".into()))?;
    if layers.is_empty() {
        return Err(Error::InvalidConfig("no layers".into()));
    }
    Ok(NetworkConfig { layers, loss, optimizer, batch_size, epochs, patience, validation_fraction })
}

pub fn read_config(path: &Path) -> Result<NetworkConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    parse_config(&text)
}

/// Renders a configuration back to the text format.
pub fn to_text(config: &NetworkConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("loss {}\n", config.loss.name()));
    out.push_str(&format!("learning_rate {}\n", config.optimizer.learning_rate));
    out.push_str(&format!("beta1 {}\n", config.optimizer.beta1));
    out.push_str(&format!("beta2 {}\n", config.optimizer.beta2));
    out.push_str(&format!("epsilon {}\n", config.optimizer.epsilon));
    out.push_str(&format!("batch_size {}\n", config.batch_size));
    out.push_str(&format!("epochs {}\n", config.epochs));
    out.push_str(&format!("patience {}\n", config.patience));
    out.push_str(&format!("validation_fraction {}\n\n", config.validation_fraction));
    for layer in &config.layers {
        match layer {
            LayerSpec::Conv2D { channels, kernel, stride, activation } => out.push_str(&format!(
                "conv2d channels={} kernel={}x{} stride={}x{} activation={}\n",
                channels, kernel.0, kernel.1, stride.0, stride.1, activation.name()
            )),
            LayerSpec::Conv1D { channels, kernel, stride, activation } => out.push_str(&format!(
                "conv1d channels={} kernel={} stride={} activation={}\n",
                channels, kernel, stride, activation.name()
            )),
            LayerSpec::MaxPool { window } => {
                out.push_str(&format!("maxpool window={}x{}\n", window.0, window.1))
            }
            LayerSpec::Flatten => out.push_str("flatten\n"),
            LayerSpec::Dense { width, activation } => {
                out.push_str(&format!("dense width={} activation={}\n", width, activation.name()))
            }
            LayerSpec::Dropout { rate } => out.push_str(&format!("dropout rate={rate}\n")),
            LayerSpec::Concatenate => out.push_str("concatenate\n"),
        }
    }
    out
}
