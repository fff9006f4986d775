//! Simulated heterogeneous processing engines grouped into clusters.
//!
//! Every PE computes jobs with full numeric fidelity, then charges a
//! profile-dependent service delay, so fast/slow/vector engine classes
//! reproduce load imbalance without changing results. A cluster owns a
//! synchronized job queue; a dispatcher thread moves jobs to depth-1 feed
//! buffers in round-robin over the PEs; each PE worker runs the
//! request/compute/acknowledge loop. Completion is tracked per layer on a
//! [`CompletionBoard`] so stolen jobs that finish on a foreign cluster
//! still count toward their own layer.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};

use crate::error::{Error, Result};
use crate::jobs::{execute_job, Job as GenericJob, LayerId, TilingParams};

type Job = GenericJob<f32>;

/// Engine class label. `Fast`/`Slow` model the two FPGA engine variants,
/// `Vector` models a SIMD software engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeClass {
    Fast,
    Slow,
    Vector,
}

impl PeClass {
    /// Default service-time multiplier for the class. Calibration presets,
    /// overridable per PE in the hardware config.
    pub fn default_slowdown(self) -> f64 {
        match self {
            PeClass::Fast => 1.0,
            PeClass::Slow => 2.5,
            PeClass::Vector => 1.8,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PeClass::Fast => "f-pe",
            PeClass::Slow => "s-pe",
            PeClass::Vector => "vec",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f-pe" | "fpe" => Some(PeClass::Fast),
            "s-pe" | "spe" => Some(PeClass::Slow),
            "vec" | "neon" => Some(PeClass::Vector),
            _ => None,
        }
    }
}

impl std::fmt::Display for PeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PeClass::Fast => "F-PE",
            PeClass::Slow => "S-PE",
            PeClass::Vector => "VEC",
        };
        write!(f, "{name}")
    }
}

/// Performance profile of one processing engine.
#[derive(Debug, Clone, PartialEq)]
pub struct PeProfile {
    pub class: PeClass,
    /// Multiplier on the nominal job service time. Must be positive.
    pub slowdown: f64,
    /// Fixed extra delay charged per job.
    pub overhead: Duration,
}

impl PeProfile {
    pub fn new(class: PeClass) -> Self {
        PeProfile {
            class,
            slowdown: class.default_slowdown(),
            overhead: Duration::ZERO,
        }
    }

    pub fn with_slowdown(mut self, slowdown: f64) -> Self {
        self.slowdown = slowdown;
        self
    }

    pub fn with_overhead(mut self, overhead: Duration) -> Self {
        self.overhead = overhead;
        self
    }
}

/// Service-time model: a job is charged `2*TS^3` multiply-accumulates at a
/// configurable seconds-per-MAC rate, scaled by the PE's slowdown, plus the
/// PE's fixed overhead.
#[derive(Debug, Clone, Copy)]
pub struct ServiceModel {
    pub seconds_per_mac: f64,
    pub tile_size: usize,
}

impl ServiceModel {
    pub fn job_delay(&self, profile: &PeProfile) -> Duration {
        let ts = self.tile_size as f64;
        let nominal = 2.0 * ts * ts * ts * self.seconds_per_mac;
        let secs = nominal * profile.slowdown;
        let scaled = if secs > 0.0 {
            Duration::from_secs_f64(secs)
        } else {
            Duration::ZERO
        };
        scaled + profile.overhead
    }
}

/// Cluster status notification consumed by the work-stealing manager.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterStatus {
    Idle,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Notification {
    pub cluster: usize,
    pub status: ClusterStatus,
}

/// Recorded scheduler-visible event, for utilization studies and protocol
/// assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Idle,
    Busy,
    /// Jobs were stolen *to* this cluster from `victim`.
    Steal { victim: usize, moved: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterEvent {
    pub seq: u64,
    pub cluster: usize,
    pub kind: EventKind,
}

/// Append-only log of cluster events in global emission order.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Mutex<Vec<ClusterEvent>>,
}

impl EventLog {
    pub fn new() -> Arc<Self> {
        Arc::new(EventLog::default())
    }

    fn record(&self, cluster: usize, kind: EventKind) {
        let mut events = self.events.lock().expect("event log poisoned");
        let seq = events.len() as u64;
        events.push(ClusterEvent { seq, cluster, kind });
    }

    pub fn snapshot(&self) -> Vec<ClusterEvent> {
        self.events.lock().expect("event log poisoned").clone()
    }

    pub fn clear(&self) {
        self.events.lock().expect("event log poisoned").clear();
    }
}

/// Per-layer outstanding-job counters with blocking wait.
///
/// Counters are incremented before jobs are enqueued and decremented by the
/// acknowledgment a PE sends after finishing a job, wherever it ran.
#[derive(Debug, Default)]
pub struct CompletionBoard {
    state: Mutex<BoardState>,
    cv: Condvar,
}

#[derive(Debug, Default)]
struct BoardState {
    outstanding: HashMap<LayerId, usize>,
    acknowledged: HashMap<LayerId, u64>,
    shutdown: bool,
}

impl CompletionBoard {
    pub fn new() -> Arc<Self> {
        Arc::new(CompletionBoard::default())
    }

    /// Adds `count` outstanding jobs for the layer.
    pub fn register(&self, layer: LayerId, count: usize) {
        if count == 0 {
            return;
        }
        let mut state = self.state.lock().expect("board poisoned");
        *state.outstanding.entry(layer).or_insert(0) += count;
    }

    /// Acknowledges completion of one job of the layer.
    pub fn acknowledge(&self, layer: LayerId) {
        let mut state = self.state.lock().expect("board poisoned");
        let count = {
            let count = state
                .outstanding
                .get_mut(&layer)
                .unwrap_or_else(|| panic!("acknowledgment for unregistered {layer}"));
            assert!(*count > 0, "completion counter for {layer} went negative");
            *count -= 1;
            *count
        };
        *state.acknowledged.entry(layer).or_insert(0) += 1;
        if count == 0 {
            self.cv.notify_all();
        }
    }

    /// Blocks until the layer's counter reaches zero. Returns immediately if
    /// nothing is outstanding.
    pub fn wait(&self, layer: LayerId) -> Result<()> {
        let mut state = self.state.lock().expect("board poisoned");
        loop {
            if state.shutdown {
                return Err(Error::ShutdownDuringWait(layer.0));
            }
            if state.outstanding.get(&layer).copied().unwrap_or(0) == 0 {
                return Ok(());
            }
            state = self.cv.wait(state).expect("board poisoned");
        }
    }

    pub fn outstanding(&self, layer: LayerId) -> usize {
        let state = self.state.lock().expect("board poisoned");
        state.outstanding.get(&layer).copied().unwrap_or(0)
    }

    pub fn acknowledged(&self, layer: LayerId) -> u64 {
        let state = self.state.lock().expect("board poisoned");
        state.acknowledged.get(&layer).copied().unwrap_or(0)
    }

    /// Releases all waiters with a lifecycle error.
    pub fn shutdown(&self) {
        let mut state = self.state.lock().expect("board poisoned");
        state.shutdown = true;
        self.cv.notify_all();
    }
}

struct PeUnit {
    profile: PeProfile,
    busy_nanos: AtomicU64,
    jobs_done: AtomicU64,
}

struct ClusterInner {
    queue: VecDeque<Job>,
    /// Jobs owned by this cluster: queued + in feed buffers + executing.
    inflight: usize,
    stopped: bool,
}

/// Shared state of one cluster. The public handle is [`Cluster`]; schedulers
/// hold `Arc<ClusterCore>` references for stealing and status queries.
pub struct ClusterCore {
    id: usize,
    inner: Mutex<ClusterInner>,
    cv: Condvar,
    pes: Vec<PeUnit>,
    tiling: TilingParams,
    model: ServiceModel,
    board: Arc<CompletionBoard>,
    log: Arc<EventLog>,
    manager: Mutex<Option<Sender<Notification>>>,
    exec_trace: Option<Mutex<Vec<ExecRecord>>>,
}

/// One executed job, as seen by a PE worker. Recorded only when tracing is
/// enabled at cluster construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecRecord {
    pub pe: usize,
    pub layer: LayerId,
    pub tile_row: usize,
    pub tile_col: usize,
}

impl ClusterCore {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn pe_count(&self) -> usize {
        self.pes.len()
    }

    pub fn pe_profiles(&self) -> Vec<PeProfile> {
        self.pes.iter().map(|p| p.profile.clone()).collect()
    }

    /// Aggregate capability: sum of `1/slowdown` over the cluster's PEs.
    pub fn capability(&self) -> f64 {
        self.pes.iter().map(|p| 1.0 / p.profile.slowdown).sum()
    }

    pub fn queue_len(&self) -> usize {
        self.inner.lock().expect("cluster poisoned").queue.len()
    }

    pub fn inflight(&self) -> usize {
        self.inner.lock().expect("cluster poisoned").inflight
    }

    /// Total busy nanoseconds per PE (execution plus modeled service delay).
    pub fn pe_busy_nanos(&self) -> Vec<u64> {
        self.pes.iter().map(|p| p.busy_nanos.load(Ordering::Relaxed)).collect()
    }

    pub fn pe_jobs_done(&self) -> Vec<u64> {
        self.pes.iter().map(|p| p.jobs_done.load(Ordering::Relaxed)).collect()
    }

    pub fn exec_trace(&self) -> Vec<ExecRecord> {
        match &self.exec_trace {
            Some(trace) => trace.lock().expect("trace poisoned").clone(),
            None => Vec::new(),
        }
    }

    /// Routes this cluster's idle/busy notifications to a manager.
    pub fn attach_manager(&self, tx: Sender<Notification>) {
        *self.manager.lock().expect("manager slot poisoned") = Some(tx);
    }

    fn notify(&self, status: ClusterStatus) {
        let kind = match status {
            ClusterStatus::Idle => EventKind::Idle,
            ClusterStatus::Busy => EventKind::Busy,
        };
        self.log.record(self.id, kind);
        if let Some(tx) = self.manager.lock().expect("manager slot poisoned").as_ref() {
            let _ = tx.send(Notification {
                cluster: self.id,
                status,
            });
        }
    }

    /// Enqueues jobs on this cluster. The completion counters are bumped
    /// before the jobs become visible to any worker.
    pub fn submit(&self, jobs: Vec<Job>) -> Result<()> {
        let mut inner = self.inner.lock().expect("cluster poisoned");
        if inner.stopped {
            return Err(Error::ClusterStopped(self.id));
        }
        if jobs.is_empty() {
            return Ok(());
        }
        let mut per_layer: HashMap<LayerId, usize> = HashMap::new();
        for job in &jobs {
            *per_layer.entry(job.layer_id).or_insert(0) += 1;
        }
        for (layer, count) in per_layer {
            self.board.register(layer, count);
        }
        let was_idle = inner.inflight == 0;
        inner.inflight += jobs.len();
        if was_idle {
            self.notify(ClusterStatus::Busy);
        }
        inner.queue.extend(jobs);
        self.cv.notify_all();
        Ok(())
    }

    /// Called by a PE worker when a job leaves its feed buffer.
    fn on_buffer_freed(&self) {
        let _inner = self.inner.lock().expect("cluster poisoned");
        self.cv.notify_all();
    }

    /// Called by a PE worker after acknowledging a finished job.
    fn on_job_finished(&self) {
        let mut inner = self.inner.lock().expect("cluster poisoned");
        assert!(inner.inflight > 0, "inflight count went negative");
        inner.inflight -= 1;
        if inner.inflight == 0 {
            self.notify(ClusterStatus::Idle);
        }
    }
}

/// Atomically moves up to `quantum(queue_len)` jobs from the tail of `src`'s
/// queue to `dst`'s queue. Both cluster locks are taken in id order. Returns
/// the number of jobs moved; the head order of the victim queue and the
/// relative order of the moved jobs are preserved.
pub fn transfer_jobs(
    src: &ClusterCore,
    dst: &ClusterCore,
    quantum: impl FnOnce(usize) -> usize,
) -> usize {
    assert_ne!(src.id, dst.id, "cannot transfer jobs to the same cluster");
    // lock order: ascending cluster id, to prevent deadlock between
    // concurrent transfers
    let (mut src_guard, mut dst_guard) = if src.id < dst.id {
        let f = src.inner.lock().expect("cluster poisoned");
        let s = dst.inner.lock().expect("cluster poisoned");
        (f, s)
    } else {
        let s = dst.inner.lock().expect("cluster poisoned");
        let f = src.inner.lock().expect("cluster poisoned");
        (f, s)
    };
    let (src_inner, dst_inner) = (&mut src_guard, &mut dst_guard);
    if dst_inner.stopped {
        return 0;
    }
    let len = src_inner.queue.len();
    let take = quantum(len).min(len);
    if take == 0 {
        return 0;
    }
    let stolen = src_inner.queue.split_off(len - take);
    src_inner.inflight -= take;
    if src_inner.inflight == 0 {
        src.notify(ClusterStatus::Idle);
    }
    dst.log.record(
        dst.id,
        EventKind::Steal {
            victim: src.id,
            moved: take,
        },
    );
    let was_idle = dst_inner.inflight == 0;
    dst_inner.inflight += take;
    if was_idle {
        dst.notify(ClusterStatus::Busy);
    }
    dst_inner.queue.extend(stolen);
    dst.cv.notify_all();
    take
}

/// Running cluster: dispatcher thread plus one worker thread per PE.
pub struct Cluster {
    core: Arc<ClusterCore>,
    dispatcher: Option<JoinHandle<()>>,
    workers: Vec<JoinHandle<()>>,
}

impl Cluster {
    /// Builds and starts a cluster. Workers begin waiting for jobs
    /// immediately; a freshly started cluster reports itself idle.
    pub fn start(
        id: usize,
        profiles: Vec<PeProfile>,
        tiling: TilingParams,
        model: ServiceModel,
        board: Arc<CompletionBoard>,
        log: Arc<EventLog>,
        trace_execution: bool,
    ) -> Self {
        assert!(!profiles.is_empty(), "a cluster needs at least one PE");
        for p in &profiles {
            assert!(p.slowdown > 0.0, "PE slowdown must be positive");
        }
        let core = Arc::new(ClusterCore {
            id,
            inner: Mutex::new(ClusterInner {
                queue: VecDeque::new(),
                inflight: 0,
                stopped: false,
            }),
            cv: Condvar::new(),
            pes: profiles
                .into_iter()
                .map(|profile| PeUnit {
                    profile,
                    busy_nanos: AtomicU64::new(0),
                    jobs_done: AtomicU64::new(0),
                })
                .collect(),
            tiling,
            model,
            board,
            log,
            manager: Mutex::new(None),
            exec_trace: if trace_execution {
                Some(Mutex::new(Vec::new()))
            } else {
                None
            },
        });
        core.notify(ClusterStatus::Idle);

        // Depth-1 feed buffer per PE: one job waiting while one executes,
        // which keeps stranded work minimal when stealing occurs.
        let mut feeds = Vec::new();
        let mut workers = Vec::new();
        for pe_index in 0..core.pe_count() {
            let (tx, rx): (Sender<Job>, Receiver<Job>) = crossbeam_channel::bounded(1);
            feeds.push(tx);
            let core_ref = Arc::clone(&core);
            workers.push(
                std::thread::Builder::new()
                    .name(format!("pe-{id}.{pe_index}"))
                    .spawn(move || pe_worker_loop(core_ref, pe_index, rx))
                    .expect("failed to spawn PE worker"),
            );
        }
        let core_ref = Arc::clone(&core);
        let dispatcher = std::thread::Builder::new()
            .name(format!("dispatch-{id}"))
            .spawn(move || dispatch_loop(core_ref, feeds))
            .expect("failed to spawn dispatcher");

        Cluster {
            core,
            dispatcher: Some(dispatcher),
            workers,
        }
    }

    pub fn core(&self) -> &Arc<ClusterCore> {
        &self.core
    }

    /// Stops the cluster. Jobs already in feed buffers finish; jobs still in
    /// the queue are dropped, so callers should wait for completion first.
    pub fn stop(&mut self) {
        {
            let mut inner = self.core.inner.lock().expect("cluster poisoned");
            inner.stopped = true;
            self.core.cv.notify_all();
        }
        if let Some(handle) = self.dispatcher.take() {
            let _ = handle.join();
        }
        for handle in self.workers.drain(..) {
            let _ = handle.join();
        }
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Moves jobs from the cluster queue to per-PE feed buffers in strict
/// round-robin over the PEs, skipping a PE whose buffer is full.
fn dispatch_loop(core: Arc<ClusterCore>, feeds: Vec<Sender<Job>>) {
    let pe_count = feeds.len();
    let mut next_pe = 0usize;
    loop {
        let (job, target) = {
            let mut inner = core.inner.lock().expect("cluster poisoned");
            loop {
                if inner.stopped {
                    return; // dropping the feed senders disconnects the workers
                }
                if !inner.queue.is_empty() {
                    // one bounded attempt per PE, starting at the round-robin cursor
                    let mut found = None;
                    for offset in 0..pe_count {
                        let pe = (next_pe + offset) % pe_count;
                        if !feeds[pe].is_full() {
                            found = Some(pe);
                            break;
                        }
                    }
                    if let Some(pe) = found {
                        let job = inner.queue.pop_front().expect("queue is non-empty");
                        break (job, pe);
                    }
                }
                // woken by submit, steal-in, buffer-freed or stop
                let (guard, _) = core
                    .cv
                    .wait_timeout(inner, Duration::from_millis(1))
                    .expect("cluster poisoned");
                inner = guard;
            }
        };
        // Only this thread sends on the feed channels, so a buffer observed
        // non-full stays non-full until this send.
        feeds[target].send(job).expect("PE worker exited early");
        next_pe = (target + 1) % pe_count;
    }
}

/// Request/compute/acknowledge loop of one PE: take a job from the feed
/// buffer, check its fields, execute it, charge the modeled service delay,
/// then acknowledge the layer on the completion board.
fn pe_worker_loop(core: Arc<ClusterCore>, pe_index: usize, feed: Receiver<Job>) {
    for job in feed.iter() {
        core.on_buffer_freed();
        job.validate(core.tiling.tile_size)
            .expect("malformed job handle: protocol violation");
        let started = Instant::now();
        execute_job(&job, core.tiling);
        let delay = core.model.job_delay(&core.pes[pe_index].profile);
        if delay > Duration::ZERO {
            std::thread::sleep(delay);
        }
        let busy = started.elapsed();
        let pe = &core.pes[pe_index];
        pe.busy_nanos.fetch_add(busy.as_nanos() as u64, Ordering::Relaxed);
        pe.jobs_done.fetch_add(1, Ordering::Relaxed);
        if let Some(trace) = &core.exec_trace {
            trace.lock().expect("trace poisoned").push(ExecRecord {
                pe: pe_index,
                layer: job.layer_id,
                tile_row: job.tile_row,
                tile_col: job.tile_col,
            });
        }
        core.board.acknowledge(job.layer_id);
        core.on_job_finished();
    }
}

/// All clusters of one run plus the shared completion board and event log.
pub struct AccelRuntime {
    clusters: Vec<Cluster>,
    board: Arc<CompletionBoard>,
    log: Arc<EventLog>,
}

impl AccelRuntime {
    pub fn start(
        cluster_profiles: Vec<Vec<PeProfile>>,
        tiling: TilingParams,
        model: ServiceModel,
        trace_execution: bool,
    ) -> Self {
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let clusters = cluster_profiles
            .into_iter()
            .enumerate()
            .map(|(id, profiles)| {
                Cluster::start(
                    id,
                    profiles,
                    tiling,
                    model,
                    Arc::clone(&board),
                    Arc::clone(&log),
                    trace_execution,
                )
            })
            .collect();
        AccelRuntime {
            clusters,
            board,
            log,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, idx: usize) -> &Arc<ClusterCore> {
        self.clusters[idx].core()
    }

    pub fn cluster_cores(&self) -> Vec<Arc<ClusterCore>> {
        self.clusters.iter().map(|c| Arc::clone(c.core())).collect()
    }

    pub fn board(&self) -> &Arc<CompletionBoard> {
        &self.board
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    /// Submits jobs to a cluster's queue.
    pub fn submit(&self, cluster: usize, jobs: Vec<Job>) -> Result<()> {
        self.clusters[cluster].core().submit(jobs)
    }

    /// Blocks until every submitted job of the layer has been acknowledged,
    /// regardless of which cluster executed it.
    pub fn wait_layer(&self, layer: LayerId) -> Result<()> {
        self.board.wait(layer)
    }

    /// Snapshot of summed PE busy nanoseconds per cluster.
    pub fn busy_snapshot(&self) -> Vec<u64> {
        self.clusters
            .iter()
            .map(|c| c.core().pe_busy_nanos().iter().sum())
            .collect()
    }

    /// Per-cluster utilization over a measurement window:
    /// `(busy_after - busy_before) / (pe_count * wall)`.
    pub fn utilization_since(&self, busy_before: &[u64], wall: Duration) -> Vec<f64> {
        let after = self.busy_snapshot();
        after
            .iter()
            .zip(busy_before)
            .zip(&self.clusters)
            .map(|((b1, b0), cluster)| {
                let wall_nanos = wall.as_nanos() as f64 * cluster.core().pe_count() as f64;
                if wall_nanos <= 0.0 {
                    0.0
                } else {
                    ((b1 - b0) as f64 / wall_nanos).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    /// Releases waiters and stops all clusters.
    pub fn stop(&mut self) {
        self.board.shutdown();
        for cluster in &mut self.clusters {
            cluster.stop();
        }
    }
}

impl Drop for AccelRuntime {
    fn drop(&mut self) {
        self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobs::{generate_jobs, SharedMatrix};
    use crate::tensor::{matmul_reference, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f32> {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn make_jobs(
        rng: &mut ChaCha8Rng,
        m: usize,
        n: usize,
        k: usize,
        ts: usize,
        layer: LayerId,
    ) -> (Vec<Job>, SharedMatrix<f32>, Matrix<f32>) {
        let a = random_matrix(rng, m, k);
        let b = random_matrix(rng, k, n);
        let expect = matmul_reference(&a, &b).unwrap();
        let sa = SharedMatrix::new(a);
        let sb = SharedMatrix::new(b);
        let sc = SharedMatrix::new(Matrix::zeros(m, n));
        let jobs = generate_jobs(&sa, &sb, &sc, layer, TilingParams::new(ts).unwrap()).unwrap();
        (jobs, sc, expect)
    }

    fn no_delay(ts: usize) -> ServiceModel {
        ServiceModel {
            seconds_per_mac: 0.0,
            tile_size: ts,
        }
    }

    #[test]
    fn board_counts_and_waits() {
        let board = CompletionBoard::new();
        let layer = LayerId(2);
        assert_eq!(board.outstanding(layer), 0);
        board.wait(layer).unwrap(); // zero jobs: returns immediately

        board.register(layer, 4);
        assert_eq!(board.outstanding(layer), 4);
        for _ in 0..4 {
            board.acknowledge(layer);
        }
        assert_eq!(board.outstanding(layer), 0);
        assert_eq!(board.acknowledged(layer), 4);
        board.wait(layer).unwrap();
    }

    #[test]
    fn board_shutdown_releases_waiters() {
        let board = CompletionBoard::new();
        board.register(LayerId(0), 1);
        let waiter = {
            let board = Arc::clone(&board);
            std::thread::spawn(move || board.wait(LayerId(0)))
        };
        std::thread::sleep(Duration::from_millis(20));
        board.shutdown();
        let result = waiter.join().unwrap();
        assert!(matches!(result, Err(Error::ShutdownDuringWait(0))));
    }

    #[test]
    fn submit_to_stopped_cluster_fails() {
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let mut cluster = Cluster::start(
            0,
            vec![PeProfile::new(PeClass::Fast)],
            TilingParams::new(4).unwrap(),
            no_delay(4),
            Arc::clone(&board),
            log,
            false,
        );
        cluster.stop();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (jobs, _c, _e) = make_jobs(&mut rng, 4, 4, 4, 4, LayerId(0));
        assert!(matches!(
            cluster.core().submit(jobs),
            Err(Error::ClusterStopped(0))
        ));
    }

    #[test]
    fn empty_submit_is_noop() {
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let cluster = Cluster::start(
            0,
            vec![PeProfile::new(PeClass::Fast)],
            TilingParams::new(4).unwrap(),
            no_delay(4),
            Arc::clone(&board),
            Arc::clone(&log),
            false,
        );
        cluster.core().submit(Vec::new()).unwrap();
        std::thread::sleep(Duration::from_millis(10));
        assert_eq!(cluster.core().inflight(), 0);
        // only the initial idle notification
        let events = log.snapshot();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, EventKind::Idle);
    }

    #[test]
    fn jobs_complete_and_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let cluster = Cluster::start(
            0,
            vec![
                PeProfile::new(PeClass::Fast),
                PeProfile::new(PeClass::Slow),
                PeProfile::new(PeClass::Vector),
            ],
            TilingParams::new(8).unwrap(),
            no_delay(8),
            Arc::clone(&board),
            log,
            false,
        );
        let layer = LayerId(5);
        let (jobs, sc, expect) = make_jobs(&mut rng, 70, 50, 30, 8, layer);
        let total = jobs.len();
        cluster.core().submit(jobs).unwrap();
        board.wait(layer).unwrap();
        assert_eq!(board.acknowledged(layer), total as u64);

        let got = sc.snapshot();
        for (g, e) in got.as_slice().iter().zip(expect.as_slice()) {
            let tol = 1e-4 * g.abs().max(e.abs()).max(1.0);
            assert!((g - e).abs() <= tol);
        }
    }

    #[test]
    fn two_layers_share_one_cluster_with_separate_counters() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let cluster = Cluster::start(
            0,
            vec![PeProfile::new(PeClass::Fast), PeProfile::new(PeClass::Fast)],
            TilingParams::new(8).unwrap(),
            no_delay(8),
            Arc::clone(&board),
            log,
            false,
        );
        let (jobs0, _c0, _e0) = make_jobs(&mut rng, 32, 32, 8, 8, LayerId(0));
        let (jobs1, _c1, _e1) = make_jobs(&mut rng, 24, 16, 8, 8, LayerId(1));
        let (n0, n1) = (jobs0.len(), jobs1.len());
        // interleave both layers' jobs in one queue
        let mut mixed = Vec::new();
        let mut it0 = jobs0.into_iter();
        let mut it1 = jobs1.into_iter();
        loop {
            match (it0.next(), it1.next()) {
                (None, None) => break,
                (a, b) => {
                    mixed.extend(a);
                    mixed.extend(b);
                }
            }
        }
        cluster.core().submit(mixed).unwrap();
        board.wait(LayerId(0)).unwrap();
        board.wait(LayerId(1)).unwrap();
        assert_eq!(board.acknowledged(LayerId(0)), n0 as u64);
        assert_eq!(board.acknowledged(LayerId(1)), n1 as u64);
    }

    #[test]
    fn round_robin_dispatch_alternates_pes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let board = CompletionBoard::new();
        let log = EventLog::new();
        // jobs slow enough that dispatch order is observable
        let profiles = vec![
            PeProfile::new(PeClass::Fast).with_overhead(Duration::from_millis(60)),
            PeProfile::new(PeClass::Fast).with_overhead(Duration::from_millis(60)),
        ];
        let cluster = Cluster::start(
            0,
            profiles,
            TilingParams::new(4).unwrap(),
            no_delay(4),
            Arc::clone(&board),
            log,
            true,
        );
        // 2x2 tile grid, row-major submit order
        let (jobs, _c, _e) = make_jobs(&mut rng, 8, 8, 4, 4, LayerId(0));
        let order: Vec<(usize, usize)> = jobs.iter().map(|j| (j.tile_row, j.tile_col)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        cluster.core().submit(jobs).unwrap();
        board.wait(LayerId(0)).unwrap();

        let trace = cluster.core().exec_trace();
        let by_pe = |pe: usize| {
            trace
                .iter()
                .filter(|r| r.pe == pe)
                .map(|r| (r.tile_row, r.tile_col))
                .collect::<Vec<_>>()
        };
        assert_eq!(by_pe(0), vec![(0, 0), (1, 0)]);
        assert_eq!(by_pe(1), vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn single_pe_preserves_fifo_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let cluster = Cluster::start(
            0,
            vec![PeProfile::new(PeClass::Fast)],
            TilingParams::new(4).unwrap(),
            no_delay(4),
            Arc::clone(&board),
            log,
            true,
        );
        let (jobs, _c, _e) = make_jobs(&mut rng, 16, 4, 4, 4, LayerId(0));
        let submitted: Vec<(usize, usize)> = jobs.iter().map(|j| (j.tile_row, j.tile_col)).collect();
        cluster.core().submit(jobs).unwrap();
        board.wait(LayerId(0)).unwrap();
        let executed: Vec<(usize, usize)> = cluster
            .core()
            .exec_trace()
            .iter()
            .map(|r| (r.tile_row, r.tile_col))
            .collect();
        assert_eq!(executed, submitted);
    }

    #[test]
    fn slow_pe_executes_fewer_jobs_but_none_are_lost() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let profiles = vec![
            PeProfile::new(PeClass::Fast).with_overhead(Duration::from_micros(200)),
            PeProfile::new(PeClass::Fast).with_overhead(Duration::from_millis(2)),
        ];
        let cluster = Cluster::start(
            0,
            profiles,
            TilingParams::new(4).unwrap(),
            no_delay(4),
            Arc::clone(&board),
            log,
            false,
        );
        let (jobs, _c, _e) = make_jobs(&mut rng, 40, 40, 4, 4, LayerId(0));
        let total = jobs.len() as u64;
        cluster.core().submit(jobs).unwrap();
        board.wait(LayerId(0)).unwrap();
        let done = cluster.core().pe_jobs_done();
        assert_eq!(done.iter().sum::<u64>(), total);
        assert!(
            done[0] > done[1],
            "fast PE should complete more jobs: {done:?}"
        );
    }

    #[test]
    fn idle_worker_consumes_nothing() {
        let board = CompletionBoard::new();
        let log = EventLog::new();
        let cluster = Cluster::start(
            0,
            vec![PeProfile::new(PeClass::Fast)],
            TilingParams::new(4).unwrap(),
            no_delay(4),
            board,
            Arc::clone(&log),
            false,
        );
        std::thread::sleep(Duration::from_millis(30));
        assert_eq!(cluster.core().pe_jobs_done(), vec![0]);
        let events = log.snapshot();
        assert_eq!(events.len(), 1, "only the initial idle: {events:?}");
        assert_eq!(events[0].kind, EventKind::Idle);
    }

    #[test]
    fn transfer_moves_tail_and_preserves_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let board = CompletionBoard::new();
        let log = EventLog::new();
        // a single very slow PE keeps jobs in the queue
        let c0 = Cluster::start(
            0,
            vec![PeProfile::new(PeClass::Fast).with_overhead(Duration::from_millis(40))],
            TilingParams::new(4).unwrap(),
            no_delay(4),
            Arc::clone(&board),
            Arc::clone(&log),
            false,
        );
        let c1 = Cluster::start(
            1,
            vec![PeProfile::new(PeClass::Fast)],
            TilingParams::new(4).unwrap(),
            no_delay(4),
            Arc::clone(&board),
            Arc::clone(&log),
            false,
        );
        let (jobs, sc, expect) = make_jobs(&mut rng, 44, 4, 4, 4, LayerId(7));
        let total = jobs.len() as u64; // 11 jobs
        c0.core().submit(jobs).unwrap();
        std::thread::sleep(Duration::from_millis(5));
        let moved = transfer_jobs(c0.core(), c1.core(), |len| len.div_ceil(2));
        assert!(moved >= 1, "nothing was stolen");
        board.wait(LayerId(7)).unwrap();
        assert_eq!(board.acknowledged(LayerId(7)), total);
        // both clusters executed part of the work
        assert!(c1.core().pe_jobs_done()[0] as usize >= moved);
        let got = sc.snapshot();
        for (g, e) in got.as_slice().iter().zip(expect.as_slice()) {
            let tol = 1e-4 * g.abs().max(e.abs()).max(1.0);
            assert!((g - e).abs() <= tol);
        }
    }

    #[test]
    fn service_model_scales_with_slowdown() {
        let model = ServiceModel {
            seconds_per_mac: 1e-9,
            tile_size: 32,
        };
        let fast = model.job_delay(&PeProfile::new(PeClass::Fast));
        let slow = model.job_delay(&PeProfile::new(PeClass::Slow));
        let expect_fast = Duration::from_secs_f64(2.0 * 32768.0 * 1e-9);
        assert_eq!(fast, expect_fast);
        assert_eq!(slow, expect_fast.mul_f64(2.5));
        assert_eq!(
            model.job_delay(&PeProfile::new(PeClass::Fast).with_overhead(Duration::from_micros(5))),
            expect_fast + Duration::from_micros(5)
        );
    }

    #[test]
    fn runtime_exactly_once_over_random_schedules() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for round in 0..5 {
            let profiles = vec![
                vec![
                    PeProfile::new(PeClass::Fast)
                        .with_slowdown(rng.gen_range(0.5..3.0)),
                    PeProfile::new(PeClass::Vector)
                        .with_slowdown(rng.gen_range(0.5..3.0)),
                ],
                vec![PeProfile::new(PeClass::Slow).with_slowdown(rng.gen_range(0.5..3.0))],
            ];
            let mut runtime = AccelRuntime::start(
                profiles,
                TilingParams::new(8).unwrap(),
                ServiceModel {
                    seconds_per_mac: 1e-11,
                    tile_size: 8,
                },
                false,
            );
            let layer = LayerId(round);
            let (jobs, _c, _e) = make_jobs(&mut rng, 40, 40, 16, 8, layer);
            let total = jobs.len() as u64;
            let mut split0 = Vec::new();
            let mut split1 = Vec::new();
            let mut flags = Vec::new();
            for job in jobs {
                flags.push(job.clone());
                if rng.gen_bool(0.5) {
                    split0.push(job);
                } else {
                    split1.push(job);
                }
            }
            runtime.submit(0, split0).unwrap();
            runtime.submit(1, split1).unwrap();
            runtime.wait_layer(layer).unwrap();
            assert_eq!(runtime.board().acknowledged(layer), total);
            for job in &flags {
                assert_eq!(job.execution_count(), 1);
            }
            runtime.stop();
        }
    }
}
