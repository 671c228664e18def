//! Running service: UDP receiver, session thread (sole state writer), render
//! thread, and the HTTP/WebSocket front end on its own runtime thread.

use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use peakvol_core::interaction::{ControllerSample, SessionState, StatusEvent};
use peakvol_core::net::{DropOldestQueue, Receiver, ReceiverCounts};
use peakvol_core::raycast::{render_frame_in, Camera, RenderSettings};
use peakvol_core::transfer::{TfError, TransferFunction};
use peakvol_core::volume::{
    generate_phantom, load_volume, phantom_material_tf, Histogram, Volume, VolumeError,
};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::{broadcast, oneshot};

use crate::config::{ServiceConfig, VolumeSource};
use crate::protocol::{Outbound, Snapshot};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("cannot read transfer function {path}: {source}")]
    TfIo { path: PathBuf, source: std::io::Error },
    #[error("transfer function {path}: {source}")]
    Tf { path: PathBuf, source: TfError },
    #[error("cannot bind {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("cannot start thread: {0}")]
    Spawn(std::io::Error),
}

/// Counters exposed at `/stats`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub udp: ReceiverCounts,
    pub injected: u64,
    pub processed: u64,
    pub queue_len: u64,
    pub queue_overflow: u64,
    pub state_version: u64,
    pub frames_published: u64,
    pub frame_state_version: Option<u64>,
}

impl Stats {
    /// Every accepted sample is processed and the newest state is on screen.
    pub fn is_idle(&self) -> bool {
        self.queue_len == 0
            && self.processed + self.queue_overflow == self.udp.received + self.injected
            && self.frame_state_version == Some(self.state_version)
    }
}

#[derive(Debug)]
pub struct Frame {
    pub seq: u64,
    pub state_version: u64,
    pub png: Bytes,
}

pub(crate) enum Command {
    SetTf(TransferFunction, oneshot::Sender<Arc<Snapshot>>),
}

pub(crate) struct Shared {
    pub snapshot: RwLock<Arc<Snapshot>>,
    pub frame: RwLock<Option<Arc<Frame>>>,
    pub histogram: Histogram,
    pub samples: Arc<DropOldestQueue<ControllerSample>>,
    pub commands: Mutex<mpsc::Sender<Command>>,
    pub outbound: broadcast::Sender<Outbound>,
    pub injected: AtomicU64,
    pub processed: AtomicU64,
    pub frames_published: AtomicU64,
    receiver: Mutex<Option<Receiver>>,
    // Wakes the render thread on state change or shutdown.
    dirty: (Mutex<bool>, Condvar),
    stop: AtomicBool,
}

impl Shared {
    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock"))
    }

    pub fn latest_frame(&self) -> Option<Arc<Frame>> {
        self.frame.read().expect("frame lock").clone()
    }

    pub fn inject(&self, sample: ControllerSample) {
        self.injected.fetch_add(1, Ordering::SeqCst);
        self.samples.push(sample);
    }

    pub fn stats(&self) -> Stats {
        let udp = self
            .receiver
            .lock()
            .expect("receiver lock")
            .as_ref()
            .map(Receiver::stats)
            .unwrap_or_default();
        Stats {
            udp,
            injected: self.injected.load(Ordering::SeqCst),
            processed: self.processed.load(Ordering::SeqCst),
            queue_len: self.samples.len() as u64,
            queue_overflow: self.samples.overflowed(),
            state_version: self.snapshot().version,
            frames_published: self.frames_published.load(Ordering::SeqCst),
            frame_state_version: self.latest_frame().map(|f| f.state_version),
        }
    }

    pub async fn set_tf(&self, tf: TransferFunction) -> Option<Arc<Snapshot>> {
        let (tx, rx) = oneshot::channel();
        self.commands
            .lock()
            .expect("command lock")
            .send(Command::SetTf(tf, tx))
            .ok()?;
        rx.await.ok()
    }

    fn mark_dirty(&self) {
        let (flag, cv) = &self.dirty;
        *flag.lock().expect("dirty lock") = true;
        cv.notify_all();
    }

    fn publish(&self, msg: Outbound) {
        // No subscribers is fine.
        let _ = self.outbound.send(msg);
    }
}

pub fn load_source(source: &VolumeSource) -> Result<Volume, VolumeError> {
    match source {
        VolumeSource::File(path) => load_volume(path),
        VolumeSource::Phantom(dims) => generate_phantom(*dims),
    }
}

/// Initial transfer function: the file if given, the material preset for a
/// phantom, otherwise empty.
fn initial_tf(config: &ServiceConfig) -> Result<TransferFunction, ServiceError> {
    match &config.tf_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ServiceError::TfIo {
                path: path.clone(),
                source,
            })?;
            TransferFunction::from_json(&text).map_err(|source| ServiceError::Tf {
                path: path.clone(),
                source,
            })
        }
        None if matches!(config.volume, VolumeSource::Phantom(_)) => Ok(phantom_material_tf()),
        None => Ok(TransferFunction::new()),
    }
}

pub struct ServiceHandle {
    shared: Arc<Shared>,
    http_addr: SocketAddr,
    udp_addr: SocketAddr,
    threads: Vec<JoinHandle<()>>,
    http_stop: Option<oneshot::Sender<()>>,
}

/// Starts every service context. Returns once the ports are bound.
pub fn start(config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    config.validate().map_err(ServiceError::Config)?;
    let volume = Arc::new(load_source(&config.volume)?);
    let tf = initial_tf(&config)?;
    let settings = config.render.resolve(volume.meta());
    let camera = Camera::framing(volume.meta().extent(), config.width, config.height);

    let samples = Arc::new(DropOldestQueue::new(config.queue_capacity));
    let udp_bind = SocketAddr::new(config.bind, config.udp_port);
    let receiver = Receiver::bind(udp_bind, Arc::clone(&samples)).map_err(|source| ServiceError::Bind {
        what: "UDP receiver",
        addr: udp_bind,
        source,
    })?;
    let udp_addr = receiver.local_addr();
    let http_bind = SocketAddr::new(config.bind, config.http_port);
    let listener = TcpListener::bind(http_bind)
        .and_then(|l| l.set_nonblocking(true).map(|_| l))
        .map_err(|source| ServiceError::Bind {
            what: "HTTP listener",
            addr: http_bind,
            source,
        })?;
    let http_addr = listener.local_addr().map_err(ServiceError::Spawn)?;

    let session = SessionState::new(tf, config.gains);
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (outbound, _) = broadcast::channel(256);
    let shared = Arc::new(Shared {
        snapshot: RwLock::new(Arc::new(Snapshot::capture(0, &session))),
        frame: RwLock::new(None),
        histogram: volume.histogram(),
        samples,
        commands: Mutex::new(cmd_tx),
        outbound,
        injected: AtomicU64::new(0),
        processed: AtomicU64::new(0),
        frames_published: AtomicU64::new(0),
        receiver: Mutex::new(Some(receiver)),
        dirty: (Mutex::new(true), Condvar::new()),
        stop: AtomicBool::new(false),
    });

    let mut threads = Vec::new();
    let spawn = |name: &str, f: Box<dyn FnOnce() + Send>| {
        std::thread::Builder::new()
            .name(name.into())
            .spawn(f)
            .map_err(ServiceError::Spawn)
    };
    {
        let shared = Arc::clone(&shared);
        threads.push(spawn("session", Box::new(move || session_loop(shared, session, cmd_rx)))?);
    }
    {
        let shared = Arc::clone(&shared);
        let render = RenderJob {
            volume,
            camera,
            settings,
            frame_cap: config.frame_cap,
            threads: config.render_threads,
        };
        threads.push(spawn("render", Box::new(move || render_loop(shared, render)))?);
    }
    let (http_stop, stop_rx) = oneshot::channel();
    {
        let shared = Arc::clone(&shared);
        threads.push(spawn(
            "http",
            Box::new(move || {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(2)
                    .enable_all()
                    .build()
                    .expect("tokio runtime");
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                    let app = crate::http::router(shared);
                    let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    });
                    if let Err(e) = serve.await {
                        tracing::error!("http server failed: {e}");
                    }
                });
            }),
        )?);
    }
    tracing::info!(%http_addr, %udp_addr, "service started");
    Ok(ServiceHandle {
        shared,
        http_addr,
        udp_addr,
        threads,
        http_stop: Some(http_stop),
    })
}

impl ServiceHandle {
    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn udp_addr(&self) -> SocketAddr {
        self.udp_addr
    }

    pub fn stats(&self) -> Stats {
        self.shared.stats()
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.shared.snapshot()
    }

    pub fn latest_frame(&self) -> Option<Arc<Frame>> {
        self.shared.latest_frame()
    }

    /// Same path as `POST /input/sample`.
    pub fn inject(&self, sample: ControllerSample) {
        self.shared.inject(sample)
    }

    /// Polls until [`Stats::is_idle`] holds for two consecutive reads.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut streak = 0;
        while Instant::now() < deadline {
            if self.stats().is_idle() {
                streak += 1;
                if streak == 2 {
                    return true;
                }
            } else {
                streak = 0;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        false
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.mark_dirty();
        if let Some(tx) = self.http_stop.take() {
            let _ = tx.send(());
        }
        if let Some(rx) = self.shared.receiver.lock().expect("receiver lock").take() {
            rx.shutdown();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn session_loop(shared: Arc<Shared>, mut state: SessionState, commands: mpsc::Receiver<Command>) {
    let mut version = 0u64;
    let mut publish = |state: &SessionState, events: Vec<StatusEvent>, shared: &Shared| {
        let current = shared.snapshot();
        let changed = !current.same_state(state);
        if changed {
            version += 1;
            let snap = Arc::new(Snapshot::capture(version, state));
            *shared.snapshot.write().expect("snapshot lock") = Arc::clone(&snap);
            shared.mark_dirty();
            shared.publish(Outbound::State(Arc::clone(&snap)));
        }
        let v = shared.snapshot().version;
        for event in events {
            shared.publish(Outbound::Event { version: v, event });
        }
        shared.snapshot()
    };
    while !shared.stop.load(Ordering::SeqCst) {
        while let Ok(cmd) = commands.try_recv() {
            match cmd {
                Command::SetTf(tf, reply) => {
                    let events = state.set_tf(tf);
                    let snap = publish(&state, events, &shared);
                    let _ = reply.send(snap);
                }
            }
        }
        if let Some(sample) = shared.samples.pop_timeout(Duration::from_millis(5)) {
            let events = state.process(&sample);
            publish(&state, events, &shared);
            shared.processed.fetch_add(1, Ordering::SeqCst);
        }
    }
}

struct RenderJob {
    volume: Arc<Volume>,
    camera: Camera,
    settings: RenderSettings,
    frame_cap: f64,
    threads: usize,
}

fn render_loop(shared: Arc<Shared>, job: RenderJob) {
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(job.threads)
        .thread_name(|i| format!("render-{i}"))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            tracing::error!("cannot build render pool: {e}");
            return;
        }
    };
    let min_interval = Duration::from_secs_f64(1.0 / job.frame_cap);
    let mut last_render: Option<Instant> = None;
    let mut seq = 0u64;
    loop {
        {
            let (flag, cv) = &shared.dirty;
            let mut dirty = flag.lock().expect("dirty lock");
            while !*dirty && !shared.stop.load(Ordering::SeqCst) {
                dirty = cv.wait_timeout(dirty, Duration::from_millis(100)).expect("dirty lock").0;
            }
            *dirty = false;
        }
        if shared.stop.load(Ordering::SeqCst) {
            return;
        }
        if let Some(t) = last_render {
            if let Some(wait) = min_interval.checked_sub(t.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        // Coalesce: always render the newest state.
        let snap = shared.snapshot();
        if shared.latest_frame().is_some_and(|f| f.state_version == snap.version) {
            continue;
        }
        last_render = Some(Instant::now());
        let frame = render_frame_in(
            &pool,
            &job.volume,
            &snap.tf,
            &job.camera,
            &snap.transform,
            &snap.plane,
            &job.settings,
        );
        match frame {
            Ok(fb) => {
                seq += 1;
                let frame = Arc::new(Frame {
                    seq,
                    state_version: snap.version,
                    png: Bytes::from(fb.to_png()),
                });
                *shared.frame.write().expect("frame lock") = Some(Arc::clone(&frame));
                shared.frames_published.fetch_add(1, Ordering::SeqCst);
                shared.publish(Outbound::Frame(frame));
            }
            Err(e) => tracing::error!("render failed: {e}"),
        }
    }
}
