//! Framed FIFO channel between the two parties, with per-label metering.
//!
//! Frame header (9 bytes, network byte order): payload length u32, message
//! type u8, label id u32. Payload words are little-endian.

use std::collections::BTreeMap;
use std::io::{BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread;

use crossbeam::channel::{unbounded, Receiver, Sender};
use thiserror::Error;

use crate::ring::RingWord;

pub const HEADER_BYTES: usize = 9;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("channel closed")]
    Closed,
    #[error("payload of {0} bytes does not fit a frame")]
    LengthOverflow(usize),
    #[error("expected message type {expected:?}, got {got}")]
    TypeMismatch { expected: MsgType, got: u8 },
    #[error("expected label {expected:#x}, got {got:#x}")]
    LabelMismatch { expected: u32, got: u32 },
    #[error("expected {expected} payload bytes, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    Open = 1,
    Trunc = 2,
    BeaverEf = 3,
    AggUpload = 4,
    ParamShare = 5,
    SampleShare = 6,
    Control = 7,
}

impl MsgType {
    pub const ALL: [MsgType; 7] =
        [MsgType::Open, MsgType::Trunc, MsgType::BeaverEf, MsgType::AggUpload, MsgType::ParamShare, MsgType::SampleShare, MsgType::Control];

    pub fn from_u8(v: u8) -> Option<MsgType> {
        MsgType::ALL.iter().copied().find(|m| *m as u8 == v)
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Open => "open",
            MsgType::Trunc => "trunc",
            MsgType::BeaverEf => "beaver_ef",
            MsgType::AggUpload => "agg_upload",
            MsgType::ParamShare => "param_share",
            MsgType::SampleShare => "sample_share",
            MsgType::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub label_id: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Result<Vec<u8>, TransportError> {
        let len = u32::try_from(self.payload.len()).map_err(|_| TransportError::LengthOverflow(self.payload.len()))?;
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&len.to_be_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.label_id.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }
}

/// Stable 32-bit id for a meter label.
pub fn label_id(label: &str) -> u32 {
    crc32fast::hash(label.as_bytes())
}

/// Byte pipe underneath a channel.
pub trait Link: Send {
    fn write_all(&mut self, bytes: Vec<u8>) -> Result<(), TransportError>;
    fn read_exact(&mut self, n: usize) -> Result<Vec<u8>, TransportError>;
}

pub struct MemLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

/// Two connected in-memory endpoints.
pub fn mem_pair() -> (MemLink, MemLink) {
    let (a_tx, b_rx) = unbounded();
    let (b_tx, a_rx) = unbounded();
    (MemLink { tx: a_tx, rx: a_rx, buf: Vec::new(), pos: 0 }, MemLink { tx: b_tx, rx: b_rx, buf: Vec::new(), pos: 0 })
}

impl Link for MemLink {
    fn write_all(&mut self, bytes: Vec<u8>) -> Result<(), TransportError> {
        self.tx.send(bytes).map_err(|_| TransportError::Closed)
    }

    fn read_exact(&mut self, n: usize) -> Result<Vec<u8>, TransportError> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.buf.len() {
                self.buf = self.rx.recv().map_err(|_| TransportError::Closed)?;
                self.pos = 0;
                continue;
            }
            let take = (n - out.len()).min(self.buf.len() - self.pos);
            out.extend_from_slice(&self.buf[self.pos..self.pos + take]);
            self.pos += take;
        }
        Ok(out)
    }
}

/// TCP endpoint. Writes go through a background thread so that both parties
/// can send large frames at the same time without blocking each other.
pub struct TcpLink {
    tx: Option<Sender<Vec<u8>>>,
    writer: Option<thread::JoinHandle<std::io::Result<()>>>,
    reader: BufReader<TcpStream>,
}

impl TcpLink {
    pub fn from_stream(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        let mut wstream = stream.try_clone()?;
        let (tx, rx) = unbounded::<Vec<u8>>();
        let writer = thread::spawn(move || {
            for bytes in rx {
                wstream.write_all(&bytes)?;
            }
            wstream.flush()
        });
        Ok(TcpLink { tx: Some(tx), writer: Some(writer), reader: BufReader::new(stream) })
    }

    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, TransportError> {
        Self::from_stream(TcpStream::connect(addr)?)
    }

    pub fn accept(listener: &TcpListener) -> Result<Self, TransportError> {
        let (stream, _) = listener.accept()?;
        Self::from_stream(stream)
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        drop(self.tx.take());
        if let Some(w) = self.writer.take() {
            let _ = w.join();
        }
    }
}

impl Link for TcpLink {
    fn write_all(&mut self, bytes: Vec<u8>) -> Result<(), TransportError> {
        self.tx.as_ref().ok_or(TransportError::Closed)?.send(bytes).map_err(|_| TransportError::Closed)
    }

    fn read_exact(&mut self, n: usize) -> Result<Vec<u8>, TransportError> {
        let mut out = vec![0u8; n];
        self.reader.read_exact(&mut out).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => TransportError::Closed,
            _ => TransportError::Io(e),
        })?;
        Ok(out)
    }
}

/// Counters for one label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub header_bytes_sent: u64,
    pub header_bytes_received: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
    pub rounds: u64,
    /// Payload bytes in both directions keyed by message type.
    pub by_type: BTreeMap<MsgType, u64>,
}

impl LabelStats {
    pub fn payload_bits(&self) -> u64 {
        8 * (self.bytes_sent + self.bytes_received)
    }

    pub fn header_bits(&self) -> u64 {
        8 * (self.header_bytes_sent + self.header_bytes_received)
    }

    pub fn messages(&self) -> u64 {
        self.messages_sent + self.messages_received
    }

    fn absorb(&mut self, o: &LabelStats) {
        self.bytes_sent += o.bytes_sent;
        self.bytes_received += o.bytes_received;
        self.header_bytes_sent += o.header_bytes_sent;
        self.header_bytes_received += o.header_bytes_received;
        self.messages_sent += o.messages_sent;
        self.messages_received += o.messages_received;
        self.rounds += o.rounds;
        for (k, v) in &o.by_type {
            *self.by_type.entry(*k).or_default() += v;
        }
    }
}

/// Per-label counters as seen by one endpoint. Because every frame passes
/// between the two parties, one endpoint's sent + received equals the total
/// traffic of both parties.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommMeter {
    pub labels: BTreeMap<String, LabelStats>,
}

impl CommMeter {
    fn entry(&mut self, label: &str) -> &mut LabelStats {
        if !self.labels.contains_key(label) {
            self.labels.insert(label.to_string(), LabelStats::default());
        }
        self.labels.get_mut(label).unwrap()
    }

    pub fn report(&self) -> CommReport {
        CommReport { labels: self.labels.clone() }
    }
}

/// Snapshot of a meter with label-prefix queries. Labels are `/`-separated paths.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommReport {
    pub labels: BTreeMap<String, LabelStats>,
}

fn under(label: &str, prefix: &str) -> bool {
    prefix.is_empty() || label == prefix || (label.starts_with(prefix) && label[prefix.len()..].starts_with('/'))
}

impl CommReport {
    /// Aggregate over `prefix` and all of its sub-labels.
    pub fn total(&self, prefix: &str) -> LabelStats {
        self.total_where(prefix, |_| true)
    }

    /// Aggregate over `prefix`, skipping sub-labels that contain the path segment `skip`.
    pub fn total_excluding(&self, prefix: &str, skip: &str) -> LabelStats {
        self.total_where(prefix, |l| !l.split('/').any(|seg| seg == skip))
    }

    fn total_where(&self, prefix: &str, keep: impl Fn(&str) -> bool) -> LabelStats {
        let mut acc = LabelStats::default();
        for (l, s) in &self.labels {
            if under(l, prefix) && keep(l) {
                acc.absorb(s);
            }
        }
        acc
    }

    pub fn payload_bits(&self, prefix: &str) -> u64 {
        self.total(prefix).payload_bits()
    }

    /// Payload bits under `prefix` of a single message type.
    pub fn type_bits(&self, prefix: &str, t: MsgType) -> u64 {
        8 * self.total(prefix).by_type.get(&t).copied().unwrap_or(0)
    }

    /// `key=value` lines, one per label.
    pub fn lines(&self) -> Vec<String> {
        self.labels
            .iter()
            .map(|(l, s)| {
                format!("label={} payload_bits={} header_bits={} messages={} rounds={}", l, s.payload_bits(), s.header_bits(), s.messages(), s.rounds)
            })
            .collect()
    }
}

/// Raw bytes written and read by one endpoint, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
    /// Frame types in the order this endpoint handled them.
    pub types: Vec<MsgType>,
}

/// One party's endpoint: link + meter + current label path.
pub struct Channel {
    link: Box<dyn Link>,
    meter: CommMeter,
    label: String,
    label_id: u32,
    transcript: Option<Transcript>,
}

impl Channel {
    pub fn new(link: Box<dyn Link>) -> Self {
        Channel { link, meter: CommMeter::default(), label: String::new(), label_id: label_id(""), transcript: None }
    }

    /// A connected in-memory pair (party 0 endpoint, party 1 endpoint).
    pub fn mem_pair() -> (Channel, Channel) {
        let (a, b) = mem_pair();
        (Channel::new(Box::new(a)), Channel::new(Box::new(b)))
    }

    pub fn record_transcript(&mut self) {
        self.transcript = Some(Transcript::default());
    }

    pub fn transcript(&self) -> Option<&Transcript> {
        self.transcript.as_ref()
    }

    pub fn meter(&self) -> &CommMeter {
        &self.meter
    }

    pub fn report(&self) -> CommReport {
        self.meter.report()
    }

    pub fn reset_meter(&mut self) {
        self.meter = CommMeter::default();
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Replaces the current label path, returning the previous one.
    pub fn set_label(&mut self, label: impl Into<String>) -> String {
        let label = label.into();
        self.label_id = label_id(&label);
        std::mem::replace(&mut self.label, label)
    }

    /// Appends a path segment to the current label, returning the previous label.
    pub fn push_label(&mut self, seg: &str) -> String {
        let next = if self.label.is_empty() { seg.to_string() } else { format!("{}/{}", self.label, seg) };
        self.set_label(next)
    }

    /// Counts one communication round against the current label.
    pub fn mark_round(&mut self) {
        let l = self.label.clone();
        self.meter.entry(&l).rounds += 1;
    }

    pub fn send_frame(&mut self, frame: Frame) -> Result<(), TransportError> {
        let bytes = frame.encode()?;
        let label = self.label.clone();
        let st = self.meter.entry(&label);
        st.bytes_sent += frame.payload.len() as u64;
        st.header_bytes_sent += HEADER_BYTES as u64;
        st.messages_sent += 1;
        *st.by_type.entry(frame.msg_type).or_default() += frame.payload.len() as u64;
        if let Some(t) = self.transcript.as_mut() {
            t.sent.extend_from_slice(&bytes);
            t.types.push(frame.msg_type);
        }
        self.link.write_all(bytes)
    }

    /// Receives the next frame and checks its type and label against the local state.
    pub fn recv_frame(&mut self, expected: MsgType) -> Result<Frame, TransportError> {
        let head = self.link.read_exact(HEADER_BYTES)?;
        let len = u32::from_be_bytes([head[0], head[1], head[2], head[3]]) as usize;
        let ty = head[4];
        let lid = u32::from_be_bytes([head[5], head[6], head[7], head[8]]);
        let payload = self.link.read_exact(len)?;
        if let Some(t) = self.transcript.as_mut() {
            t.received.extend_from_slice(&head);
            t.received.extend_from_slice(&payload);
            if let Some(m) = MsgType::from_u8(ty) {
                t.types.push(m);
            }
        }
        if ty != expected as u8 {
            return Err(TransportError::TypeMismatch { expected, got: ty });
        }
        if lid != self.label_id {
            return Err(TransportError::LabelMismatch { expected: self.label_id, got: lid });
        }
        let label = self.label.clone();
        let st = self.meter.entry(&label);
        st.bytes_received += len as u64;
        st.header_bytes_received += HEADER_BYTES as u64;
        st.messages_received += 1;
        *st.by_type.entry(expected).or_default() += len as u64;
        Ok(Frame { msg_type: expected, label_id: lid, payload })
    }

    fn put_words<W: RingWord>(&mut self, t: MsgType, words: &[W]) -> Result<(), TransportError> {
        let mut payload = Vec::with_capacity(words.len() * W::BYTES);
        for w in words {
            w.put_le(&mut payload);
        }
        let frame = Frame { msg_type: t, label_id: self.label_id, payload };
        self.send_frame(frame)
    }

    fn get_words<W: RingWord>(&mut self, t: MsgType, n: usize) -> Result<Vec<W>, TransportError> {
        let f = self.recv_frame(t)?;
        if f.payload.len() != n * W::BYTES {
            return Err(TransportError::SizeMismatch { expected: n * W::BYTES, got: f.payload.len() });
        }
        Ok(f.payload.chunks(W::BYTES).map(W::get_le).collect())
    }

    /// One-way send of ring words (one round).
    pub fn send_words<W: RingWord>(&mut self, t: MsgType, words: &[W]) -> Result<(), TransportError> {
        self.mark_round();
        self.put_words(t, words)
    }

    /// One-way receive of `n` ring words (one round).
    pub fn recv_words<W: RingWord>(&mut self, t: MsgType, n: usize) -> Result<Vec<W>, TransportError> {
        self.mark_round();
        self.get_words(t, n)
    }

    /// Simultaneous exchange: both parties send then receive (one round).
    pub fn exchange_words<W: RingWord>(&mut self, t: MsgType, words: &[W]) -> Result<Vec<W>, TransportError> {
        self.mark_round();
        self.put_words(t, words)?;
        self.get_words(t, words.len())
    }

    /// Sends raw bytes as a single frame (used for control messages).
    pub fn send_bytes(&mut self, t: MsgType, payload: Vec<u8>) -> Result<(), TransportError> {
        self.mark_round();
        let frame = Frame { msg_type: t, label_id: self.label_id, payload };
        self.send_frame(frame)
    }

    pub fn recv_bytes(&mut self, t: MsgType) -> Result<Vec<u8>, TransportError> {
        self.mark_round();
        Ok(self.recv_frame(t)?.payload)
    }
}

/// Connects a party over TCP. Party 0 listens on `addr`, party 1 connects to it.
pub fn tcp_channel(party: u8, addr: &str) -> Result<Channel, TransportError> {
    let link = if party == 0 {
        let listener = TcpListener::bind(addr)?;
        TcpLink::accept(&listener)?
    } else {
        let mut last = None;
        let mut link = None;
        for _ in 0..200 {
            match TcpLink::connect(addr) {
                Ok(l) => {
                    link = Some(l);
                    break;
                }
                Err(e) => {
                    last = Some(e);
                    thread::sleep(std::time::Duration::from_millis(25));
                }
            }
        }
        match link {
            Some(l) => l,
            None => return Err(last.unwrap_or(TransportError::Closed)),
        }
    };
    Ok(Channel::new(Box::new(link)))
}

/// A connected TCP pair on the loopback interface, for tests and benches.
pub fn tcp_pair() -> Result<(Channel, Channel), TransportError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let h = thread::spawn(move || TcpLink::accept(&listener));
    let b = TcpLink::connect(addr)?;
    let a = h.join().map_err(|_| TransportError::Closed)??;
    Ok((Channel::new(Box::new(a)), Channel::new(Box::new(b))))
}
