//! Network and hardware configuration files.
//!
//! Network configs are INI-like sections in layer order, Darknet-style: a
//! `[net]` header with the input dimensions followed by one section per
//! layer (`[conv]`, `[maxpool]`, `[fully_connected]`, `[softmax]`).
//! Hardware configs are flat `key = value` settings plus one `[cluster]`
//! section per cluster, each listing its PEs. Both parsers report errors
//! with file path and line number, and both configs print back to text that
//! re-parses to an equivalent value.

use std::path::Path;
use std::time::Duration;

use crate::accel::{PeClass, PeProfile, ServiceModel};
use crate::error::{Error, Result};
use crate::jobs::{ceil_div, TilingParams};
use crate::layers::Activation;
use crate::scheduler::MappingMode;
use crate::tensor::ConvParams;

/// Input description from the `[net]` section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Scale raw bytes into `[0,1]`. When false, bytes are cast as-is.
    pub normalize: bool,
}

/// One layer of the network, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        params: ConvParams,
        activation: Activation,
    },
    Maxpool {
        size: usize,
        stride: usize,
    },
    FullyConnected {
        outputs: usize,
        activation: Activation,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Maxpool { .. } => "maxpool",
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. })
    }
}

/// Shape of the data flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataShape {
    Map {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat {
        len: usize,
    },
}

impl DataShape {
    pub fn element_count(&self) -> usize {
        match *self {
            DataShape::Map {
                channels,
                height,
                width,
            } => channels * height * width,
            DataShape::Flat { len } => len,
        }
    }
}

/// Computes a layer's output shape from its input shape.
pub fn layer_output_shape(layer: &LayerSpec, input: &DataShape) -> Result<DataShape> {
    match layer {
        LayerSpec::Conv { params, .. } => match *input {
            DataShape::Map { height, width, .. } => {
                let (out_h, out_w) = params.output_dims(height, width)?;
                Ok(DataShape::Map {
                    channels: params.filters,
                    height: out_h,
                    width: out_w,
                })
            }
            DataShape::Flat { .. } => Err(Error::shape(
                "conv layer requires a feature-map input, got a flat vector".to_string(),
            )),
        },
        LayerSpec::Maxpool { size, stride } => match *input {
            DataShape::Map {
                channels,
                height,
                width,
            } => {
                if *size < 1 || *stride < 1 {
                    return Err(Error::shape("maxpool size and stride must be >= 1".to_string()));
                }
                if *size > height || *size > width {
                    return Err(Error::shape(format!(
                        "maxpool window {size} exceeds input {height}x{width}"
                    )));
                }
                Ok(DataShape::Map {
                    channels,
                    height: (height - size) / stride + 1,
                    width: (width - size) / stride + 1,
                })
            }
            DataShape::Flat { .. } => Err(Error::shape(
                "maxpool layer requires a feature-map input, got a flat vector".to_string(),
            )),
        },
        LayerSpec::FullyConnected { outputs, .. } => {
            if *outputs < 1 {
                return Err(Error::shape("fully_connected outputs must be >= 1".to_string()));
            }
            Ok(DataShape::Flat { len: *outputs })
        }
        LayerSpec::Softmax => Ok(DataShape::Flat {
            len: input.element_count(),
        }),
    }
}

/// Parsed and shape-validated network description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input: InputSpec,
    pub layers: Vec<LayerSpec>,
    /// Input shape of each layer; entry 0 is the network input shape.
    /// `shapes[i+1]` is layer i's output shape, so `shapes.len() == layers.len() + 1`.
    pub shapes: Vec<DataShape>,
}

impl NetworkConfig {
    /// Builds a config, deriving and validating the whole shape chain.
    pub fn new(input: InputSpec, layers: Vec<LayerSpec>) -> Result<Self> {
        if input.channels < 1 || input.height < 1 || input.width < 1 {
            return Err(Error::shape(format!(
                "input dimensions must be >= 1, got {}x{}x{}",
                input.channels, input.height, input.width
            )));
        }
        if layers.is_empty() {
            return Err(Error::shape("network needs at least one layer".to_string()));
        }
        let mut shapes = vec![DataShape::Map {
            channels: input.channels,
            height: input.height,
            width: input.width,
        }];
        for (idx, layer) in layers.iter().enumerate() {
            let out = layer_output_shape(layer, shapes.last().unwrap()).map_err(|e| {
                Error::shape(format!("layer {idx} ([{}]): {e}", layer.kind_name()))
            })?;
            shapes.push(out);
        }
        Ok(NetworkConfig {
            input,
            layers,
            shapes,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_conv()).count()
    }

    /// Input shape of layer `idx`.
    pub fn input_shape(&self, idx: usize) -> &DataShape {
        &self.shapes[idx]
    }

    /// Output shape of layer `idx`.
    pub fn output_shape(&self, idx: usize) -> &DataShape {
        &self.shapes[idx + 1]
    }

    /// Tile jobs one frame generates for a CONV layer, or None for other
    /// layer kinds. This drives the layer-to-cluster mapping.
    pub fn conv_job_count(&self, idx: usize, tile_size: usize) -> Option<usize> {
        match &self.layers[idx] {
            LayerSpec::Conv { params, .. } => {
                let out_positions = self.output_shape(idx).element_count() / params.filters;
                Some(ceil_div(params.filters, tile_size) * ceil_div(out_positions, tile_size))
            }
            _ => None,
        }
    }

    /// Weight-matrix dimensions (rows, cols) for a parameterized layer.
    pub fn param_dims(&self, idx: usize) -> Option<(usize, usize)> {
        match &self.layers[idx] {
            LayerSpec::Conv { params, .. } => {
                let channels = match self.input_shape(idx) {
                    DataShape::Map { channels, .. } => *channels,
                    DataShape::Flat { .. } => unreachable!("conv input is always a map"),
                };
                Some((params.filters, params.patch_rows(channels)))
            }
            LayerSpec::FullyConnected { outputs, .. } => {
                Some((*outputs, self.input_shape(idx).element_count()))
            }
            _ => None,
        }
    }

    /// Total parameter count (weights + biases) across all layers.
    pub fn parameter_count(&self) -> usize {
        (0..self.layers.len())
            .filter_map(|i| self.param_dims(i))
            .map(|(rows, cols)| rows * cols + rows)
            .sum()
    }

    /// Prints the config back to its file syntax.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        out.push_str("[net]\n");
        out.push_str(&format!("channels = {}\n", self.input.channels));
        out.push_str(&format!("height = {}\n", self.input.height));
        out.push_str(&format!("width = {}\n", self.input.width));
        out.push_str(&format!("normalize = {}\n", self.input.normalize));
        for layer in &self.layers {
            out.push('\n');
            match layer {
                LayerSpec::Conv { params, activation } => {
                    out.push_str("[conv]\n");
                    out.push_str(&format!("filters = {}\n", params.filters));
                    out.push_str(&format!("kernel = {}\n", params.kernel));
                    out.push_str(&format!("stride = {}\n", params.stride));
                    out.push_str(&format!("pad = {}\n", params.pad));
                    out.push_str(&format!("activation = {}\n", activation.name()));
                }
                LayerSpec::Maxpool { size, stride } => {
                    out.push_str("[maxpool]\n");
                    out.push_str(&format!("size = {size}\n"));
                    out.push_str(&format!("stride = {stride}\n"));
                }
                LayerSpec::FullyConnected {
                    outputs,
                    activation,
                } => {
                    out.push_str("[fully_connected]\n");
                    out.push_str(&format!("outputs = {outputs}\n"));
                    out.push_str(&format!("activation = {}\n", activation.name()));
                }
                LayerSpec::Softmax => out.push_str("[softmax]\n"),
            }
        }
        out
    }
}

/// Parsed hardware description: tile size, calibration, and the cluster/PE
/// topology to instantiate.
#[derive(Debug, Clone, PartialEq)]
pub struct HwConfig {
    pub tile_size: usize,
    pub seconds_per_mac: f64,
    pub mailbox_capacity: usize,
    pub default_mode: MappingMode,
    pub clusters: Vec<Vec<PeProfile>>,
}

impl HwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size < 1 {
            return Err(Error::shape("tile_size must be >= 1".to_string()));
        }
        if self.clusters.is_empty() {
            return Err(Error::shape("hardware config needs at least one cluster".to_string()));
        }
        for (i, pes) in self.clusters.iter().enumerate() {
            if pes.is_empty() {
                return Err(Error::shape(format!("cluster {i} has no PEs")));
            }
            for pe in pes {
                if pe.slowdown.is_nan() || pe.slowdown <= 0.0 {
                    return Err(Error::shape(format!(
                        "cluster {i}: PE slowdown must be positive, got {}",
                        pe.slowdown
                    )));
                }
            }
        }
        if !self.seconds_per_mac.is_finite() || self.seconds_per_mac < 0.0 {
            return Err(Error::shape(format!(
                "seconds_per_mac must be a nonnegative finite number, got {}",
                self.seconds_per_mac
            )));
        }
        if self.mailbox_capacity < 1 {
            return Err(Error::shape("mailbox_capacity must be >= 1".to_string()));
        }
        Ok(())
    }

    pub fn tiling(&self) -> TilingParams {
        TilingParams {
            tile_size: self.tile_size,
        }
    }

    pub fn service_model(&self) -> ServiceModel {
        ServiceModel {
            seconds_per_mac: self.seconds_per_mac,
            tile_size: self.tile_size,
        }
    }

    pub fn cluster_profiles(&self) -> Vec<Vec<PeProfile>> {
        self.clusters.clone()
    }

    pub fn capabilities(&self) -> Vec<f64> {
        self.clusters
            .iter()
            .map(|pes| pes.iter().map(|p| 1.0 / p.slowdown).sum())
            .collect()
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("tile_size = {}\n", self.tile_size));
        out.push_str(&format!("seconds_per_mac = {:e}\n", self.seconds_per_mac));
        out.push_str(&format!("mailbox_capacity = {}\n", self.mailbox_capacity));
        out.push_str(&format!("mode = {}\n", self.default_mode));
        for pes in &self.clusters {
            out.push_str("\n[cluster]\n");
            for pe in pes {
                let mut line = format!("pe = {}", pe.class.label());
                if pe.slowdown != pe.class.default_slowdown() {
                    line.push_str(&format!(" slowdown={}", pe.slowdown));
                }
                if pe.overhead > Duration::ZERO {
                    line.push_str(&format!(" overhead_us={}", pe.overhead.as_secs_f64() * 1e6));
                }
                out.push_str(&line);
                out.push('\n');
            }
        }
        out
    }
}

struct LineParser<'a> {
    path: &'a str,
}

impl<'a> LineParser<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn parse_usize(&self, line: usize, key: &str, value: &str) -> Result<usize> {
        value
            .parse::<usize>()
            .map_err(|_| self.err(line, format!("non-integer value for '{key}': '{value}'")))
    }

    fn parse_f64(&self, line: usize, key: &str, value: &str) -> Result<f64> {
        value
            .parse::<f64>()
            .map_err(|_| self.err(line, format!("non-numeric value for '{key}': '{value}'")))
    }

    fn parse_bool(&self, line: usize, key: &str, value: &str) -> Result<bool> {
        match value {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(self.err(line, format!("non-boolean value for '{key}': '{value}'"))),
        }
    }
}

/// Splits config text into (line_number, section_or_keyvalue) items,
/// dropping comments and blank lines.
enum Item<'a> {
    Section(&'a str),
    KeyValue(&'a str, &'a str),
}

fn lex_lines<'a>(parser: &LineParser<'_>, text: &'a str) -> Result<Vec<(usize, Item<'a>)>> {
    let mut items = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(parser.err(line_no, format!("malformed section header '{line}'")));
            };
            items.push((line_no, Item::Section(name.trim())));
        } else if let Some((key, value)) = line.split_once('=') {
            items.push((line_no, Item::KeyValue(key.trim(), value.trim())));
        } else {
            return Err(parser.err(line_no, format!("expected 'key = value', got '{line}'")));
        }
    }
    Ok(items)
}

/// Parses a network config from text. `path` labels error messages.
pub fn parse_network_str(path: &str, text: &str) -> Result<NetworkConfig> {
    let parser = LineParser { path };
    let items = lex_lines(&parser, text)?;
    if items.is_empty() {
        return Err(parser.err(1, "empty network config".to_string()));
    }

    // sections in order, each with its keys
    struct Section<'a> {
        name: &'a str,
        line: usize,
        keys: Vec<(usize, &'a str, &'a str)>,
    }
    let mut sections: Vec<Section> = Vec::new();
    for (line, item) in items {
        match item {
            Item::Section(name) => sections.push(Section {
                name,
                line,
                keys: Vec::new(),
            }),
            Item::KeyValue(k, v) => match sections.last_mut() {
                Some(section) => section.keys.push((line, k, v)),
                None => {
                    return Err(parser.err(line, "key outside any section; expected [net] first"))
                }
            },
        }
    }
    if sections[0].name != "net" {
        return Err(parser.err(sections[0].line, "first section must be [net]"));
    }

    // [net]
    let mut channels = None;
    let mut height = None;
    let mut width = None;
    let mut normalize = true;
    for (line, key, value) in &sections[0].keys {
        match *key {
            "channels" => channels = Some(parser.parse_usize(*line, key, value)?),
            "height" => height = Some(parser.parse_usize(*line, key, value)?),
            "width" => width = Some(parser.parse_usize(*line, key, value)?),
            "normalize" => normalize = parser.parse_bool(*line, key, value)?,
            _ => return Err(parser.err(*line, format!("unknown [net] key '{key}'"))),
        }
    }
    let net_line = sections[0].line;
    let require = |opt: Option<usize>, name: &str| {
        opt.ok_or_else(|| parser.err(net_line, format!("[net] is missing '{name}'")))
    };
    let input = InputSpec {
        channels: require(channels, "channels")?,
        height: require(height, "height")?,
        width: require(width, "width")?,
        normalize,
    };

    // layers
    let mut layers = Vec::new();
    let mut layer_lines = Vec::new();
    for section in &sections[1..] {
        let get_act = |keys: &[(usize, &str, &str)]| -> Result<Activation> {
            for (line, key, value) in keys {
                if *key == "activation" {
                    return Activation::parse(value)
                        .ok_or_else(|| parser.err(*line, format!("unknown activation '{value}'")));
                }
            }
            Ok(Activation::Linear)
        };
        let layer = match section.name {
            "conv" | "convolutional" => {
                let mut filters = None;
                let mut kernel = None;
                let mut stride = 1;
                let mut pad = 0;
                for (line, key, value) in &section.keys {
                    match *key {
                        "filters" => filters = Some(parser.parse_usize(*line, key, value)?),
                        "kernel" | "size" => kernel = Some(parser.parse_usize(*line, key, value)?),
                        "stride" => stride = parser.parse_usize(*line, key, value)?,
                        "pad" => pad = parser.parse_usize(*line, key, value)?,
                        "activation" => {}
                        _ => {
                            return Err(
                                parser.err(*line, format!("unknown [conv] key '{key}'"))
                            )
                        }
                    }
                }
                LayerSpec::Conv {
                    params: ConvParams {
                        filters: filters.ok_or_else(|| {
                            parser.err(section.line, "[conv] is missing 'filters'")
                        })?,
                        kernel: kernel.ok_or_else(|| {
                            parser.err(section.line, "[conv] is missing 'kernel'")
                        })?,
                        stride,
                        pad,
                    },
                    activation: get_act(&section.keys)?,
                }
            }
            "maxpool" => {
                let mut size = None;
                let mut stride = None;
                for (line, key, value) in &section.keys {
                    match *key {
                        "size" => size = Some(parser.parse_usize(*line, key, value)?),
                        "stride" => stride = Some(parser.parse_usize(*line, key, value)?),
                        _ => {
                            return Err(
                                parser.err(*line, format!("unknown [maxpool] key '{key}'"))
                            )
                        }
                    }
                }
                let size = size
                    .ok_or_else(|| parser.err(section.line, "[maxpool] is missing 'size'"))?;
                LayerSpec::Maxpool {
                    size,
                    stride: stride.unwrap_or(size),
                }
            }
            "fully_connected" | "connected" => {
                let mut outputs = None;
                for (line, key, value) in &section.keys {
                    match *key {
                        "outputs" | "output" => {
                            outputs = Some(parser.parse_usize(*line, key, value)?)
                        }
                        "activation" => {}
                        _ => {
                            return Err(parser
                                .err(*line, format!("unknown [fully_connected] key '{key}'")))
                        }
                    }
                }
                LayerSpec::FullyConnected {
                    outputs: outputs.ok_or_else(|| {
                        parser.err(section.line, "[fully_connected] is missing 'outputs'")
                    })?,
                    activation: get_act(&section.keys)?,
                }
            }
            "softmax" => {
                if let Some((line, key, _)) = section.keys.first() {
                    return Err(parser.err(*line, format!("unknown [softmax] key '{key}'")));
                }
                LayerSpec::Softmax
            }
            other => {
                return Err(parser.err(section.line, format!("unknown layer kind '[{other}]'")))
            }
        };
        layers.push(layer);
        layer_lines.push(section.line);
    }
    if layers.is_empty() {
        return Err(parser.err(net_line, "network config defines no layers"));
    }

    // chain shapes with line attribution
    let mut shape = DataShape::Map {
        channels: input.channels,
        height: input.height,
        width: input.width,
    };
    if input.channels < 1 || input.height < 1 || input.width < 1 {
        return Err(parser.err(net_line, "input dimensions must be >= 1"));
    }
    let mut shapes = vec![shape];
    for (layer, line) in layers.iter().zip(&layer_lines) {
        shape = layer_output_shape(layer, &shape)
            .map_err(|e| parser.err(*line, format!("{e}")))?;
        shapes.push(shape);
    }

    Ok(NetworkConfig {
        input,
        layers,
        shapes,
    })
}

/// Parses a network config file.
pub fn parse_network_cfg(path: impl AsRef<Path>) -> Result<NetworkConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_network_str(&path.display().to_string(), &text)
}

/// Parses a hardware config from text. `path` labels error messages.
pub fn parse_hw_str(path: &str, text: &str) -> Result<HwConfig> {
    let parser = LineParser { path };
    let items = lex_lines(&parser, text)?;

    let mut tile_size = None;
    let mut seconds_per_mac = 1e-9;
    let mut mailbox_capacity = 2;
    let mut default_mode = MappingMode::Sf;
    let mut clusters: Vec<Vec<PeProfile>> = Vec::new();
    let mut in_cluster = false;

    for (line, item) in items {
        match item {
            Item::Section("cluster") => {
                clusters.push(Vec::new());
                in_cluster = true;
            }
            Item::Section(other) => {
                return Err(parser.err(line, format!("unknown section '[{other}]'")))
            }
            Item::KeyValue(key, value) => {
                if in_cluster {
                    if key != "pe" {
                        return Err(
                            parser.err(line, format!("unknown [cluster] key '{key}'"))
                        );
                    }
                    clusters
                        .last_mut()
                        .expect("inside a cluster section")
                        .push(parse_pe_line(&parser, line, value)?);
                } else {
                    match key {
                        "tile_size" => {
                            tile_size = Some(parser.parse_usize(line, key, value)?)
                        }
                        "seconds_per_mac" => {
                            seconds_per_mac = parser.parse_f64(line, key, value)?
                        }
                        "mailbox_capacity" => {
                            mailbox_capacity = parser.parse_usize(line, key, value)?
                        }
                        "mode" => {
                            default_mode = MappingMode::parse(value).ok_or_else(|| {
                                parser.err(line, format!("unknown mode '{value}'"))
                            })?
                        }
                        _ => {
                            return Err(parser.err(line, format!("unknown key '{key}'")))
                        }
                    }
                }
            }
        }
    }

    let tile_size =
        tile_size.ok_or_else(|| parser.err(1, "hardware config is missing 'tile_size'"))?;
    if tile_size < 1 {
        return Err(parser.err(1, "tile_size must be >= 1"));
    }
    let hw = HwConfig {
        tile_size,
        seconds_per_mac,
        mailbox_capacity,
        default_mode,
        clusters,
    };
    hw.validate()
        .map_err(|e| parser.err(1, format!("{e}")))?;
    Ok(hw)
}

/// `pe = <kind> [slowdown=<x>] [overhead_us=<y>]`
fn parse_pe_line(parser: &LineParser<'_>, line: usize, value: &str) -> Result<PeProfile> {
    let mut tokens = value.split_whitespace();
    let kind = tokens
        .next()
        .ok_or_else(|| parser.err(line, "empty pe entry"))?;
    let class = PeClass::parse(kind)
        .ok_or_else(|| parser.err(line, format!("unknown PE kind '{kind}'")))?;
    let mut profile = PeProfile::new(class);
    for token in tokens {
        let Some((key, v)) = token.split_once('=') else {
            return Err(parser.err(line, format!("malformed pe option '{token}'")));
        };
        match key {
            "slowdown" => {
                let s = parser.parse_f64(line, key, v)?;
                if s.is_nan() || s <= 0.0 {
                    return Err(parser.err(line, format!("slowdown must be positive, got {v}")));
                }
                profile.slowdown = s;
            }
            "overhead_us" => {
                let us = parser.parse_f64(line, key, v)?;
                if us < 0.0 {
                    return Err(parser.err(line, "overhead_us must be nonnegative"));
                }
                profile.overhead = Duration::from_secs_f64(us / 1e6);
            }
            _ => return Err(parser.err(line, format!("unknown pe option '{key}'"))),
        }
    }
    Ok(profile)
}

/// Parses a hardware config file.
pub fn parse_hw_config(path: impl AsRef<Path>) -> Result<HwConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_hw_str(&path.display().to_string(), &text)
}
