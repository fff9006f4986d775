//! Multi-frame pipelined execution of the full network.
//!
//! One thread per layer, joined by bounded mailboxes, so consecutive frames
//! occupy different stages concurrently. CONV stages run a courier: im2col,
//! job generation, submission to the mapped cluster, then a blocking wait on
//! the completion board. All other stages compute on the host. A sequential
//! single-thread mode over the same compiled layers is the baseline; both
//! modes share the per-layer compute path, so outputs are identical.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};

use crate::accel::AccelRuntime;
use crate::config::{DataShape, HwConfig, LayerSpec, NetworkConfig};
use crate::error::{Error, Result};
use crate::jobs::{generate_jobs, LayerId, SharedMatrix as GenericShared, TilingParams};
use crate::layers::{activate, fully_connected, maxpool, normalize, softmax, Activation};
use crate::scheduler::{spawn_thief, static_map, MappingMode, DEFAULT_STEAL_TICK};
use crate::tensor::{
    conv_output_from_matrix, im2col, matmul_reference, ConvParams, Matrix as GenericMatrix,
    Tensor3 as GenericTensor3,
};
use crate::weights::NetParams;

type Matrix = GenericMatrix<f32>;
type Tensor3 = GenericTensor3<f32>;
type SharedMatrix = GenericShared<f32>;

/// Default bound of each inter-stage mailbox: one frame being consumed plus
/// one waiting.
pub const DEFAULT_MAILBOX_CAPACITY: usize = 2;

/// Creates a bounded synchronized FIFO: send blocks when full, receive
/// blocks when empty.
pub fn mailbox<T>(capacity: usize) -> (Sender<T>, Receiver<T>) {
    crossbeam_channel::bounded(capacity)
}

/// Raw byte frame as produced by an input source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub bytes: Vec<u8>,
}

/// Entry/exit timestamps of one frame through one stage.
#[derive(Debug, Clone, Copy)]
pub struct StageSpan {
    pub entry: Instant,
    pub exit: Instant,
}

impl StageSpan {
    pub fn duration(&self) -> Duration {
        self.exit.duration_since(self.entry)
    }

    pub fn overlaps(&self, other: &StageSpan) -> bool {
        self.entry < other.exit && other.entry < self.exit
    }
}

/// Data flowing between stages.
#[derive(Debug, Clone)]
pub enum Payload {
    Raw(RawFrame),
    Map(Tensor3),
    Flat(Vec<f32>),
}

impl Payload {
    pub fn flatten(self) -> Vec<f32> {
        match self {
            Payload::Raw(raw) => raw.bytes.iter().map(|&b| b as f32).collect(),
            Payload::Map(t) => t.into_vec(),
            Payload::Flat(v) => v,
        }
    }
}

/// One frame in flight.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u64,
    pub payload: Payload,
    pub spans: Vec<StageSpan>,
}

enum Packet {
    Frame(Frame),
    /// Poison pill: propagates shutdown downstream.
    Eos,
}

/// Final network output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub id: u64,
    pub values: Vec<f32>,
}

/// Measurements of one run.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub frames: usize,
    pub wall: Duration,
    pub throughput_fps: f64,
    pub latency_mean: Duration,
    pub per_cluster_utilization: Vec<f64>,
    pub per_cluster_busy: Vec<Duration>,
    pub per_layer_mean: Vec<Duration>,
    /// Per frame, per stage entry/exit timestamps.
    pub spans: Vec<Vec<StageSpan>>,
}

struct CompiledLayer {
    id: LayerId,
    op: LayerOp,
}

enum LayerOp {
    Conv {
        params: ConvParams,
        /// The layer's weight matrix, shared with in-flight jobs across frames.
        weights: SharedMatrix,
        /// Plain copy for the host compute path.
        weights_host: Matrix,
        bias: Vec<f32>,
        activation: Activation,
        out_h: usize,
        out_w: usize,
        cluster: usize,
    },
    Maxpool {
        size: usize,
        stride: usize,
    },
    FullyConnected {
        weights: Matrix,
        bias: Vec<f32>,
        activation: Activation,
    },
    Softmax,
}

/// Compiled network bound to weights and a started accelerator runtime.
pub struct Pipeline {
    layers: Vec<CompiledLayer>,
    runtime: AccelRuntime,
    mode: MappingMode,
    /// Cluster index per CONV layer index.
    mapping: Vec<(usize, usize)>,
    normalize_input: bool,
    input_dims: (usize, usize, usize),
    mailbox_capacity: usize,
    tiling: TilingParams,
}

impl Pipeline {
    /// Builds the pipeline: validates parameters against the network, maps
    /// CONV layers to clusters by job count, and starts the clusters.
    pub fn build(
        net: &NetworkConfig,
        hw: &HwConfig,
        mode: MappingMode,
        params: &NetParams,
    ) -> Result<Pipeline> {
        Self::build_inner(net, hw, mode, params, false)
    }

    /// Like [`Pipeline::build`] but with per-PE execution tracing enabled,
    /// for diagnostics and exactly-once verification.
    pub fn build_traced(
        net: &NetworkConfig,
        hw: &HwConfig,
        mode: MappingMode,
        params: &NetParams,
    ) -> Result<Pipeline> {
        Self::build_inner(net, hw, mode, params, true)
    }

    fn build_inner(
        net: &NetworkConfig,
        hw: &HwConfig,
        mode: MappingMode,
        params: &NetParams,
        trace_execution: bool,
    ) -> Result<Pipeline> {
        hw.validate()?;
        if params.len() != net.layer_count() {
            return Err(Error::shape(format!(
                "parameter set has {} entries for a {}-layer network",
                params.len(),
                net.layer_count()
            )));
        }
        let tiling = hw.tiling();

        // map CONV layers to clusters by per-frame job count
        let conv_jobs: Vec<(LayerId, usize)> = (0..net.layer_count())
            .filter_map(|idx| {
                net.conv_job_count(idx, hw.tile_size)
                    .map(|jobs| (LayerId(idx), jobs))
            })
            .collect();
        let assignment = static_map(&conv_jobs, &hw.capabilities());
        let mapping: Vec<(usize, usize)> = conv_jobs
            .iter()
            .zip(&assignment)
            .map(|((layer, _), cluster)| (layer.0, *cluster))
            .collect();

        let mut layers = Vec::with_capacity(net.layer_count());
        for (idx, spec) in net.layers.iter().enumerate() {
            let op = match spec {
                LayerSpec::Conv { params: p, activation } => {
                    let lp = bound_params(net, params, idx)?;
                    let (out_h, out_w) = match net.output_shape(idx) {
                        DataShape::Map { height, width, .. } => (*height, *width),
                        DataShape::Flat { .. } => unreachable!("conv output is a map"),
                    };
                    let cluster = mapping
                        .iter()
                        .find(|(layer, _)| *layer == idx)
                        .map(|(_, c)| *c)
                        .expect("every conv layer is mapped");
                    LayerOp::Conv {
                        params: *p,
                        weights: SharedMatrix::new(lp.weights.clone()),
                        weights_host: lp.weights.clone(),
                        bias: lp.bias.clone(),
                        activation: *activation,
                        out_h,
                        out_w,
                        cluster,
                    }
                }
                LayerSpec::Maxpool { size, stride } => LayerOp::Maxpool {
                    size: *size,
                    stride: *stride,
                },
                LayerSpec::FullyConnected { activation, .. } => {
                    let lp = bound_params(net, params, idx)?;
                    LayerOp::FullyConnected {
                        weights: lp.weights.clone(),
                        bias: lp.bias.clone(),
                        activation: *activation,
                    }
                }
                LayerSpec::Softmax => LayerOp::Softmax,
            };
            layers.push(CompiledLayer {
                id: LayerId(idx),
                op,
            });
        }

        let runtime = AccelRuntime::start(
            hw.cluster_profiles(),
            tiling,
            hw.service_model(),
            trace_execution,
        );

        Ok(Pipeline {
            layers,
            runtime,
            mode,
            mapping,
            normalize_input: net.input.normalize,
            input_dims: (net.input.channels, net.input.height, net.input.width),
            mailbox_capacity: hw.mailbox_capacity,
            tiling,
        })
    }

    pub fn mode(&self) -> MappingMode {
        self.mode
    }

    pub fn stage_count(&self) -> usize {
        self.layers.len()
    }

    /// Cluster assignment per CONV layer, as (layer index, cluster index).
    pub fn conv_mapping(&self) -> &[(usize, usize)] {
        &self.mapping
    }

    pub fn runtime(&self) -> &AccelRuntime {
        &self.runtime
    }

    fn ingest(&self, raw: RawFrame) -> Result<Tensor3> {
        let (c, h, w) = self.input_dims;
        if (raw.channels, raw.height, raw.width) != (c, h, w) {
            return Err(Error::shape(format!(
                "frame is {}x{}x{}, network expects {c}x{h}x{w}",
                raw.channels, raw.height, raw.width
            )));
        }
        if self.normalize_input {
            normalize(c, h, w, &raw.bytes)
        } else {
            GenericTensor3::from_vec(c, h, w, raw.bytes.iter().map(|&b| b as f32).collect())
        }
    }

    /// Runs one layer on a payload. The first layer also performs input
    /// preparation, so preprocessing cost lands inside the stage that needs
    /// it. `cpu_only` forces CONV layers onto the host compute path.
    fn apply_layer(&self, idx: usize, payload: Payload, cpu_only: bool) -> Result<Payload> {
        let payload = match payload {
            Payload::Raw(raw) => Payload::Map(self.ingest(raw)?),
            other => other,
        };
        match &self.layers[idx].op {
            LayerOp::Conv {
                params,
                weights,
                weights_host,
                bias,
                activation,
                out_h,
                out_w,
                cluster,
            } => {
                let Payload::Map(input) = payload else {
                    return Err(Error::shape("conv layer received a flat vector".to_string()));
                };
                let columns = im2col(&input, params)?;
                let product = if cpu_only {
                    matmul_reference(weights_host, &columns)?
                } else {
                    // courier: generate jobs, submit to the mapped cluster,
                    // wait for every acknowledgment (stolen jobs included)
                    let b = SharedMatrix::new(columns);
                    let c = SharedMatrix::new(Matrix::zeros(params.filters, out_h * out_w));
                    let jobs = generate_jobs(weights, &b, &c, self.layers[idx].id, self.tiling)?;
                    self.runtime.submit(*cluster, jobs)?;
                    self.runtime.wait_layer(self.layers[idx].id)?;
                    c.snapshot()
                };
                let out = conv_output_from_matrix(&product, bias, *out_h, *out_w)?;
                Ok(Payload::Map(activate(out, *activation)))
            }
            LayerOp::Maxpool { size, stride } => {
                let Payload::Map(input) = payload else {
                    return Err(Error::shape("maxpool layer received a flat vector".to_string()));
                };
                Ok(Payload::Map(maxpool(&input, *size, *stride)?))
            }
            LayerOp::FullyConnected {
                weights,
                bias,
                activation,
            } => {
                let input = payload.flatten();
                let mut out = fully_connected(&input, weights, bias)?;
                crate::layers::activate_flat(&mut out, *activation);
                Ok(Payload::Flat(out))
            }
            LayerOp::Softmax => Ok(Payload::Flat(softmax(&payload.flatten()))),
        }
    }

    /// Streams frames through the pipeline: one thread per stage, bounded
    /// mailboxes in between, inter-frame parallelism across stages. In WS
    /// mode the thief runs for the duration of the stream.
    pub fn run_stream(
        &self,
        frames: impl IntoIterator<Item = RawFrame, IntoIter: Send>,
    ) -> Result<(Vec<FrameOutput>, RunMetrics)> {
        let mut thief = if self.mode.steals() {
            Some(spawn_thief(self.runtime.cluster_cores(), DEFAULT_STEAL_TICK))
        } else {
            None
        };

        let stages = self.layers.len();
        let error_slot: Mutex<Option<Error>> = Mutex::new(None);
        let busy_before = self.runtime.busy_snapshot();
        let started = Instant::now();

        let mut outputs = Vec::new();
        let mut spans = Vec::new();
        std::thread::scope(|scope| {
            let mut rx_chain: Vec<Receiver<Packet>> = Vec::with_capacity(stages + 1);
            let (feed_tx, feed_rx) = mailbox::<Packet>(self.mailbox_capacity);
            rx_chain.push(feed_rx);
            for idx in 0..stages {
                let (tx, rx) = mailbox::<Packet>(self.mailbox_capacity);
                let stage_rx = rx_chain[idx].clone();
                let error_slot = &error_slot;
                let this = &*self;
                std::thread::Builder::new()
                    .name(format!("stage-{idx}"))
                    .spawn_scoped(scope, move || {
                        stage_loop(this, idx, stage_rx, tx, error_slot)
                    })
                    .expect("failed to spawn stage");
                rx_chain.push(rx);
            }

            // feeder: numbers the frames and applies backpressure
            let frames_iter = frames.into_iter();
            std::thread::Builder::new()
                .name("feeder".to_string())
                .spawn_scoped(scope, move || {
                    for (id, raw) in frames_iter.enumerate() {
                        let frame = Frame {
                            id: id as u64,
                            payload: Payload::Raw(raw),
                            spans: Vec::new(),
                        };
                        if feed_tx.send(Packet::Frame(frame)).is_err() {
                            return;
                        }
                    }
                    let _ = feed_tx.send(Packet::Eos);
                })
                .expect("failed to spawn feeder");

            // collect in frame order from the last mailbox
            let out_rx = rx_chain.last().expect("chain is non-empty");
            while let Ok(packet) = out_rx.recv() {
                match packet {
                    Packet::Frame(frame) => {
                        spans.push(frame.spans.clone());
                        outputs.push(FrameOutput {
                            id: frame.id,
                            values: frame.payload.flatten(),
                        });
                    }
                    Packet::Eos => break,
                }
            }
        });

        let wall = started.elapsed();
        if let Some(handle) = thief.as_mut() {
            handle.stop();
        }
        if let Some(err) = error_slot.into_inner().expect("error slot poisoned") {
            return Err(err);
        }
        let metrics = self.metrics(wall, &busy_before, outputs.len(), spans);
        Ok((outputs, metrics))
    }

    /// Processes frames one layer at a time on the calling thread. CONV
    /// layers still use the accelerator clusters unless `cpu_only` is set.
    /// No stealing happens in sequential mode.
    pub fn run_sequential(
        &self,
        frames: impl IntoIterator<Item = RawFrame>,
        cpu_only: bool,
    ) -> Result<(Vec<FrameOutput>, RunMetrics)> {
        let busy_before = self.runtime.busy_snapshot();
        let started = Instant::now();
        let mut outputs = Vec::new();
        let mut all_spans = Vec::new();
        for (id, raw) in frames.into_iter().enumerate() {
            let mut payload = Payload::Raw(raw);
            let mut spans = Vec::with_capacity(self.layers.len());
            for idx in 0..self.layers.len() {
                let entry = Instant::now();
                payload = self.apply_layer(idx, payload, cpu_only)?;
                spans.push(StageSpan {
                    entry,
                    exit: Instant::now(),
                });
            }
            outputs.push(FrameOutput {
                id: id as u64,
                values: payload.flatten(),
            });
            all_spans.push(spans);
        }
        let wall = started.elapsed();
        let metrics = self.metrics(wall, &busy_before, outputs.len(), all_spans);
        Ok((outputs, metrics))
    }

    fn metrics(
        &self,
        wall: Duration,
        busy_before: &[u64],
        frames: usize,
        spans: Vec<Vec<StageSpan>>,
    ) -> RunMetrics {
        let throughput_fps = if wall.as_secs_f64() > 0.0 && frames > 0 {
            frames as f64 / wall.as_secs_f64()
        } else {
            0.0
        };
        let latency_mean = if frames > 0 {
            let total: Duration = spans
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| s.last().unwrap().exit.duration_since(s.first().unwrap().entry))
                .sum();
            total / frames as u32
        } else {
            Duration::ZERO
        };
        let mut per_layer_mean = vec![Duration::ZERO; self.layers.len()];
        if frames > 0 {
            for frame_spans in &spans {
                for (idx, span) in frame_spans.iter().enumerate() {
                    per_layer_mean[idx] += span.duration();
                }
            }
            for d in &mut per_layer_mean {
                *d /= frames as u32;
            }
        }
        let busy_after = self.runtime.busy_snapshot();
        let per_cluster_busy = busy_after
            .iter()
            .zip(busy_before)
            .map(|(a, b)| Duration::from_nanos(a - b))
            .collect();
        RunMetrics {
            frames,
            wall,
            throughput_fps,
            latency_mean,
            per_cluster_utilization: self.runtime.utilization_since(busy_before, wall),
            per_cluster_busy,
            per_layer_mean,
            spans,
        }
    }
}

fn bound_params<'p>(
    net: &NetworkConfig,
    params: &'p NetParams,
    idx: usize,
) -> Result<&'p crate::weights::LayerParams> {
    let (rows, cols) = net
        .param_dims(idx)
        .expect("layer is parameterized");
    let lp = params[idx].as_ref().ok_or_else(|| {
        Error::shape(format!(
            "layer {idx} ([{}]) has no parameters bound",
            net.layers[idx].kind_name()
        ))
    })?;
    if lp.weights.rows() != rows || lp.weights.cols() != cols || lp.bias.len() != rows {
        return Err(Error::shape(format!(
            "layer {idx} ([{}]) parameters are {}x{} (+{} bias), expected {rows}x{cols} (+{rows})",
            net.layers[idx].kind_name(),
            lp.weights.rows(),
            lp.weights.cols(),
            lp.bias.len()
        )));
    }
    Ok(lp)
}

fn stage_loop(
    pipeline: &Pipeline,
    idx: usize,
    rx: Receiver<Packet>,
    tx: Sender<Packet>,
    error_slot: &Mutex<Option<Error>>,
) {
    let mut failed = false;
    loop {
        match rx.recv() {
            Ok(Packet::Frame(mut frame)) => {
                if failed {
                    continue; // draining after a failure; frames are dropped
                }
                let entry = Instant::now();
                let payload = std::mem::replace(&mut frame.payload, Payload::Flat(Vec::new()));
                let result = catch_unwind(AssertUnwindSafe(|| {
                    pipeline.apply_layer(idx, payload, false)
                }));
                let outcome = match result {
                    Ok(inner) => inner,
                    Err(panic) => Err(Error::WorkerPanic(panic_message(panic))),
                };
                match outcome {
                    Ok(payload) => {
                        frame.payload = payload;
                        frame.spans.push(StageSpan {
                            entry,
                            exit: Instant::now(),
                        });
                        if tx.send(Packet::Frame(frame)).is_err() {
                            return;
                        }
                    }
                    Err(err) => {
                        error_slot
                            .lock()
                            .expect("error slot poisoned")
                            .get_or_insert(err);
                        failed = true;
                        let _ = tx.send(Packet::Eos);
                    }
                }
            }
            Ok(Packet::Eos) => {
                if !failed {
                    let _ = tx.send(Packet::Eos);
                }
                return;
            }
            Err(_) => return,
        }
    }
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}
