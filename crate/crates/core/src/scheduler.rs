//! Layer-to-cluster mapping policies and the work-stealing thief.
//!
//! Static mapping assigns layers to clusters by workload: layers sorted by
//! job count descending go to clusters sorted by capability descending,
//! wrapping round-robin when layers outnumber clusters. The thief is one
//! thread holding a manager (status tracking), an idle book (set of idle
//! cluster ids) and a stealer that moves half of the longest non-idle
//! victim's queue to each idle cluster.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError};

use crate::accel::{transfer_jobs, ClusterCore, ClusterStatus, Notification};
use crate::error::{Error, Result};
use crate::jobs::{ceil_div, LayerId};

/// Scheduling mode for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingMode {
    /// Static mapping onto the fixed default architecture.
    Sf,
    /// Static mapping onto a custom per-model architecture.
    Sc,
    /// Work stealing on top of static mapping.
    Ws,
}

impl MappingMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sf" => Some(MappingMode::Sf),
            "sc" => Some(MappingMode::Sc),
            "ws" => Some(MappingMode::Ws),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MappingMode::Sf => "sf",
            MappingMode::Sc => "sc",
            MappingMode::Ws => "ws",
        }
    }

    pub fn steals(self) -> bool {
        matches!(self, MappingMode::Ws)
    }
}

impl std::fmt::Display for MappingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps layers to clusters by workload.
///
/// Layers sorted by job count descending are assigned to clusters sorted by
/// capability descending, round-robin when layers outnumber clusters. Ties
/// break by ascending layer index (and ascending cluster index), so the
/// mapping is deterministic. Returns the cluster index for each input
/// position.
pub fn static_map(layer_jobs: &[(LayerId, usize)], capabilities: &[f64]) -> Vec<usize> {
    assert!(!capabilities.is_empty(), "static_map needs at least one cluster");
    let mut layer_order: Vec<usize> = (0..layer_jobs.len()).collect();
    layer_order.sort_by(|&x, &y| {
        layer_jobs[y]
            .1
            .cmp(&layer_jobs[x].1)
            .then(layer_jobs[x].0.cmp(&layer_jobs[y].0))
    });
    let mut cluster_order: Vec<usize> = (0..capabilities.len()).collect();
    cluster_order.sort_by(|&x, &y| {
        capabilities[y]
            .partial_cmp(&capabilities[x])
            .expect("capability must not be NaN")
            .then(x.cmp(&y))
    });
    let mut map = vec![0usize; layer_jobs.len()];
    for (pos, &layer_idx) in layer_order.iter().enumerate() {
        map[layer_idx] = cluster_order[pos % cluster_order.len()];
    }
    map
}

/// Number of jobs stolen from a victim queue of the given length:
/// half of the remaining queue, rounded up, at least one when any exist.
pub fn steal_quantum(queue_len: usize) -> usize {
    if queue_len == 0 {
        0
    } else {
        ceil_div(queue_len, 2)
    }
}

/// Manager + idle book + stealer state. Drive it directly for scripted
/// scenarios, or spawn it on a thread with [`spawn_thief`].
pub struct Thief {
    clusters: Vec<Arc<ClusterCore>>,
    idle_book: BTreeSet<usize>,
}

impl Thief {
    pub fn new(clusters: Vec<Arc<ClusterCore>>) -> Self {
        Thief {
            clusters,
            idle_book: BTreeSet::new(),
        }
    }

    pub fn idle_book(&self) -> &BTreeSet<usize> {
        &self.idle_book
    }

    /// Manager reaction to a cluster status notification: idle clusters are
    /// recorded in the idle book, busy clusters removed. Duplicate
    /// notifications are idempotent.
    pub fn on_notify(&mut self, cluster: usize, status: ClusterStatus) -> Result<()> {
        if cluster >= self.clusters.len() {
            return Err(Error::UnknownCluster(cluster));
        }
        match status {
            ClusterStatus::Idle => {
                self.idle_book.insert(cluster);
            }
            ClusterStatus::Busy => {
                self.idle_book.remove(&cluster);
            }
        }
        Ok(())
    }

    /// One stealer activation: for each idle cluster, steal half of the
    /// longest queue among clusters not in the idle book and push the jobs
    /// to the idle cluster. Clusters that received work leave the idle
    /// book. Returns the total number of jobs moved.
    pub fn steal_round(&mut self) -> usize {
        let mut moved_total = 0;
        let idle_ids: Vec<usize> = self.idle_book.iter().copied().collect();
        for idle_id in idle_ids {
            let victim = self
                .clusters
                .iter()
                .filter(|c| c.id() != idle_id && !self.idle_book.contains(&c.id()))
                .map(|c| (c.queue_len(), c))
                .fold(None::<(usize, &Arc<ClusterCore>)>, |best, (len, c)| {
                    match best {
                        Some((best_len, _)) if best_len >= len => best,
                        _ => Some((len, c)),
                    }
                });
            let Some((len, victim)) = victim else { continue };
            if len == 0 {
                continue; // all victims empty: the cluster stays in the book
            }
            let moved = transfer_jobs(victim, &self.clusters[idle_id], steal_quantum);
            if moved > 0 {
                self.idle_book.remove(&idle_id);
                moved_total += moved;
            }
        }
        moved_total
    }

    /// Seeds the idle book from current cluster state. Used right after the
    /// manager attaches, since the initial idle notifications predate it.
    fn seed(&mut self) {
        for cluster in &self.clusters {
            if cluster.inflight() == 0 {
                self.idle_book.insert(cluster.id());
            }
        }
    }
}

/// Handle to a running thief thread. Stopping detaches the manager channel
/// from every cluster and joins the thread.
pub struct ThiefHandle {
    shutdown: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ThiefHandle {
    pub fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.join.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ThiefHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Default manager reaction interval: pending idle clusters retry a steal
/// this often even without fresh notifications.
pub const DEFAULT_STEAL_TICK: Duration = Duration::from_micros(200);

/// Starts the thief thread and routes every cluster's notifications to it.
pub fn spawn_thief(clusters: Vec<Arc<ClusterCore>>, tick: Duration) -> ThiefHandle {
    let (tx, rx) = crossbeam_channel::unbounded::<Notification>();
    for cluster in &clusters {
        cluster.attach_manager(tx.clone());
    }
    drop(tx);
    let shutdown = Arc::new(AtomicBool::new(false));
    let shutdown_flag = Arc::clone(&shutdown);
    let join = std::thread::Builder::new()
        .name("thief".to_string())
        .spawn(move || thief_loop(Thief::new(clusters), rx, shutdown_flag, tick))
        .expect("failed to spawn thief");
    ThiefHandle {
        shutdown,
        join: Some(join),
    }
}

fn thief_loop(
    mut thief: Thief,
    rx: Receiver<Notification>,
    shutdown: Arc<AtomicBool>,
    tick: Duration,
) {
    thief.seed();
    loop {
        if shutdown.load(Ordering::SeqCst) {
            break;
        }
        match rx.recv_timeout(tick) {
            Ok(n) => {
                let _ = thief.on_notify(n.cluster, n.status);
                // drain whatever else arrived so the book reflects the
                // latest notifications before stealing
                while let Ok(n) = rx.try_recv() {
                    let _ = thief.on_notify(n.cluster, n.status);
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        if !thief.idle_book.is_empty() {
            thief.steal_round();
        }
    }
}
