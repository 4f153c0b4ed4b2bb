//! Loopback TCP transport: one thread per site, one connection per directed
//! edge plus one per site to the coordinator.
//!
//! Every accepted connection gets its own reader thread feeding an
//! unbounded channel, so a site blocked writing a large block to its
//! successor never stops its own inbound data from draining.

use std::collections::BTreeMap;
use std::io::{self, BufWriter, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use dcm_core::{
    decode_header, decode_message, encode_message, wire::HEADER_LEN, ColumnBlock, Payload, Schedule, SiteId,
};

use super::actors::{Coordinator, SiteActor};
use super::metrics::{ms, EdgeMetrics, RunMetrics, SiteMetrics};
use super::{coordinator_id, RunConfig, RuntimeError};

/// Upper bound on a single payload, far above any realistic block.
const MAX_PAYLOAD: u64 = 1 << 36;

type Inbound = Result<Vec<u8>, RuntimeError>;

/// Reads one frame; `None` on a clean end of stream.
fn read_frame(stream: &mut impl Read) -> Result<Option<Vec<u8>>, RuntimeError> {
    let mut frame = vec![0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match stream.read(&mut frame[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(RuntimeError::Transport("connection closed inside a frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let header = decode_header(&frame)?;
    if header.payload_len > MAX_PAYLOAD {
        return Err(RuntimeError::Transport(format!("payload of {} bytes refused", header.payload_len)));
    }
    frame.resize(HEADER_LEN + header.payload_len as usize, 0);
    stream.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(Some(frame))
}

fn spawn_reader(mut stream: TcpStream, tx: Sender<Inbound>) {
    thread::spawn(move || loop {
        match read_frame(&mut stream) {
            Ok(Some(frame)) => {
                if tx.send(Ok(frame)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    });
}

/// Accepts exactly `count` connections before `deadline`, handing each to a
/// reader thread.
fn spawn_acceptor(listener: TcpListener, count: usize, deadline: Instant, tx: Sender<Inbound>) {
    thread::spawn(move || {
        let result = (|| -> Result<(), RuntimeError> {
            listener.set_nonblocking(true)?;
            let mut accepted = 0;
            while accepted < count {
                match listener.accept() {
                    Ok((stream, _)) => {
                        stream.set_nonblocking(false)?;
                        spawn_reader(stream, tx.clone());
                        accepted += 1;
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        if Instant::now() > deadline {
                            return Err(RuntimeError::Transport(format!(
                                "only {accepted} of {count} peers connected before the deadline"
                            )));
                        }
                        thread::sleep(Duration::from_millis(1));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(())
        })();
        if let Err(e) = result {
            let _ = tx.send(Err(e));
        }
    });
}

fn connect(addr: SocketAddr) -> Result<BufWriter<TcpStream>, RuntimeError> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    Ok(BufWriter::with_capacity(1 << 16, stream))
}

struct SiteReport {
    metrics: SiteMetrics,
    /// (to, bytes, encode + write time) for each data block sent.
    sent: Vec<(SiteId, u64, f64)>,
    /// (from, decode time) for each data block received.
    received: Vec<(SiteId, f64)>,
}

fn run_site(
    mut actor: SiteActor,
    listener: TcpListener,
    peers: &[SocketAddr],
    coordinator: SocketAddr,
    deadline: Instant,
) -> Result<SiteReport, RuntimeError> {
    let site = actor.site();
    let (tx, rx) = mpsc::channel();
    spawn_acceptor(listener, actor.predecessors().len(), deadline, tx);

    let mut streams: BTreeMap<SiteId, BufWriter<TcpStream>> = BTreeMap::new();
    let coord_id = peers.len();
    streams.insert(coord_id, connect(coordinator)?);
    for &s in actor.successors() {
        streams.insert(s, connect(peers[s])?);
    }

    let mut report = SiteReport { metrics: SiteMetrics::default(), sent: Vec::new(), received: Vec::new() };
    let mut send = |msgs: Vec<dcm_core::ProtocolMessage>, report: &mut SiteReport| -> Result<(), RuntimeError> {
        for msg in msgs {
            let t0 = Instant::now();
            let bytes = encode_message(&msg)?;
            let stream = streams
                .get_mut(&msg.receiver)
                .ok_or_else(|| RuntimeError::Protocol(format!("site {site} has no link to {}", msg.receiver)))?;
            stream.write_all(&bytes)?;
            stream.flush()?;
            if matches!(msg.payload, Payload::DataBlock(_)) {
                report.sent.push((msg.receiver, bytes.len() as u64, ms(t0.elapsed())));
            }
        }
        Ok(())
    };

    let out = actor.start()?;
    send(out, &mut report)?;
    while !actor.is_finished() {
        let left = deadline.saturating_duration_since(Instant::now());
        let frame = match rx.recv_timeout(left) {
            Ok(frame) => frame?,
            Err(RecvTimeoutError::Timeout) => {
                return Err(RuntimeError::Transport(format!("site {site} timed out waiting for predecessors")))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(RuntimeError::Transport(format!("site {site} lost its predecessors")))
            }
        };
        let t0 = Instant::now();
        let msg = decode_message(&frame)?;
        report.received.push((msg.sender, ms(t0.elapsed())));
        let out = actor.handle(msg)?;
        send(out, &mut report)?;
    }
    report.metrics = actor.metrics;
    Ok(report)
}

pub(super) fn execute(
    blocks: &[ColumnBlock],
    schedule: &Schedule,
    config: &RunConfig,
) -> Result<(Coordinator, RunMetrics), RuntimeError> {
    let t = blocks.len();
    let coord_id = coordinator_id(t);
    let deadline = Instant::now() + config.deadline;
    let bind = || TcpListener::bind((Ipv4Addr::LOCALHOST, 0));

    let coord_listener = bind()?;
    let coord_addr = coord_listener.local_addr()?;
    let listeners = (0..t).map(|_| bind()).collect::<io::Result<Vec<_>>>()?;
    let peers = listeners.iter().map(TcpListener::local_addr).collect::<io::Result<Vec<_>>>()?;

    let (tx, rx) = mpsc::channel::<Inbound>();
    spawn_acceptor(coord_listener, t, deadline, tx.clone());

    let mut handles = Vec::with_capacity(t);
    for (block, listener) in blocks.iter().zip(listeners) {
        let actor = SiteActor::new(block.clone(), schedule, coord_id, config.fault);
        let peers = peers.clone();
        let tx = tx.clone();
        handles.push(thread::spawn(move || {
            let result = run_site(actor, listener, &peers, coord_addr, deadline);
            if let Err(e) = &result {
                let _ = tx.send(Err(RuntimeError::Transport(e.to_string())));
            }
            result.ok()
        }));
    }
    drop(tx);

    let mut coordinator = Coordinator::new(t);
    while !coordinator.is_complete() {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(frame) => coordinator.handle(decode_message(&frame?)?)?,
            Err(_) => return Err(coordinator.timeout(config.deadline)),
        }
    }

    let mut sites = Vec::with_capacity(t);
    let mut sent = Vec::new();
    let mut received: BTreeMap<(SiteId, SiteId), f64> = BTreeMap::new();
    for (k, h) in handles.into_iter().enumerate() {
        let report = h
            .join()
            .map_err(|_| RuntimeError::Transport(format!("site {k} panicked")))?
            .ok_or_else(|| RuntimeError::Transport(format!("site {k} failed")))?;
        sent.extend(report.sent.iter().map(|&(to, bytes, send_ms)| (k, to, bytes, send_ms)));
        for (from, decode_ms) in report.received {
            received.insert((from, k), decode_ms);
        }
        sites.push(report.metrics);
    }
    let mut edges: Vec<EdgeMetrics> = sent
        .into_iter()
        .map(|(from, to, bytes, send_ms)| EdgeMetrics {
            from,
            to,
            bytes,
            transfer_ms: send_ms + received.get(&(from, to)).copied().unwrap_or(0.0),
        })
        .collect();
    edges.sort_by_key(|e| (e.to, e.from));

    let metrics = RunMetrics {
        sites,
        data_messages: edges.len(),
        edges,
        cov_messages: coordinator.cov_messages,
        done_messages: coordinator.done_messages,
        ..RunMetrics::default()
    };
    Ok((coordinator, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_reader_handles_eof_and_truncation() {
        let msg = dcm_core::ProtocolMessage { sender: 0, receiver: 1, payload: Payload::Done };
        let bytes = encode_message(&msg).unwrap();
        let mut two = bytes.clone();
        two.extend_from_slice(&bytes);
        let mut r = two.as_slice();
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), bytes);
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), bytes);
        assert!(read_frame(&mut r).unwrap().is_none());
        let mut cut = &bytes[..5];
        assert!(read_frame(&mut cut).is_err());
    }
}
