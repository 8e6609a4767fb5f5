use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use rand::Rng;

use super::protocol::{read_frame, write_frame, FrameError, Message, Status, TagReportEntry};
use super::tag::{Population, TEMPERATURE_WORD, USER_BANK};
use super::{decode_temp_word, tag_respond, ChannelParams, Epc, ReadEvent, RfidError, TemperatureReading, TEMP_WORD_RANGE};
use crate::geometry::Vec3;

/// Source of event timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    System,
    /// Starts at `start_us` and advances by `step_us` on every reading.
    Stepped { start_us: u64, step_us: u64 },
}

struct State {
    population: Population,
    clock: Clock,
    ticks: u64,
    last_ts: HashMap<u8, u64>,
}

impl State {
    fn now(&mut self) -> u64 {
        let t = match self.clock {
            Clock::System => SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0),
            Clock::Stepped { start_us, step_us } => start_us + self.ticks * step_us,
        };
        self.ticks += 1;
        t
    }

    /// Strictly increasing per antenna, even if the wall clock stalls or steps back.
    fn stamp(&mut self, antenna: u8, t: u64) -> u64 {
        let last = self.last_ts.entry(antenna).or_insert(0);
        let ts = if t > *last { t } else { *last + 1 };
        *last = ts;
        ts
    }

    fn responses(&mut self, antenna: Option<u8>, channel: &ChannelParams) -> Vec<ReadEvent> {
        let now = self.now();
        let antennas: Vec<(u8, Vec3)> =
            self.population.antennas.iter().copied().filter(|(id, _)| antenna.is_none_or(|a| a == *id)).collect();
        let mut out = Vec::new();
        for (id, pos) in antennas {
            let mut hits = Vec::new();
            for tag in self.population.tags.values() {
                let d = (tag.position - pos).norm().max(1e-3);
                if let Ok(Some(ev)) = tag_respond(tag, d, channel, id, now) {
                    hits.push(ev);
                }
            }
            if !hits.is_empty() {
                let ts = self.stamp(id, now);
                for ev in &mut hits {
                    ev.timestamp_us = ts;
                }
            }
            out.extend(hits);
        }
        out
    }

    fn reachable(&mut self, epc: &Epc, channel: &ChannelParams) -> bool {
        let Some(tag) = self.population.tags.get(epc) else { return false };
        self.population
            .antennas
            .iter()
            .any(|(id, pos)| matches!(tag_respond(tag, (tag.position - pos).norm().max(1e-3), channel, *id, 0), Ok(Some(_))))
    }
}

/// In-process simulated reader. All requests are serialized on one lock, so
/// concurrent sessions observe a consistent population.
pub struct SimReader {
    state: Mutex<State>,
    channel: ChannelParams,
}

impl SimReader {
    pub fn new(population: Population, channel: ChannelParams, clock: Clock) -> Result<Self, RfidError> {
        channel.validate()?;
        Ok(Self { state: Mutex::new(State { population, clock, ticks: 0, last_ts: HashMap::new() }), channel })
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// One inventory round on `antenna`, or on every antenna. Events are ordered by antenna, then EPC.
    pub fn inventory(&self, antenna: Option<u8>) -> Vec<ReadEvent> {
        self.lock().responses(antenna, &self.channel)
    }

    pub fn write(&self, epc: &Epc, bank: u8, wordptr: u16, word: u16) -> Status {
        let mut st = self.lock();
        if !st.reachable(epc, &self.channel) {
            return Status::TagNotFound;
        }
        match st.population.tags.get_mut(epc).unwrap().write_word(bank, wordptr, word) {
            Ok(()) => Status::Ok,
            Err(_) => Status::MemoryOverrun,
        }
    }

    pub fn read(&self, epc: &Epc, bank: u8, wordptr: u16) -> (Status, u16) {
        let mut st = self.lock();
        if !st.reachable(epc, &self.channel) {
            return (Status::TagNotFound, 0);
        }
        match st.population.tags[epc].read_word(bank, wordptr) {
            Ok(w) => (Status::Ok, w),
            Err(_) => (Status::MemoryOverrun, 0),
        }
    }

    /// Applies `f` to a tag. Returns false if the EPC is unknown.
    pub fn update_tag(&self, epc: &Epc, f: impl FnOnce(&mut super::TagRecord)) -> bool {
        match self.lock().population.tags.get_mut(epc) {
            Some(t) => {
                f(t);
                true
            }
            None => false,
        }
    }

    pub fn population(&self) -> Population {
        self.lock().population.clone()
    }

    /// The response to a request, or `None` for frames a reader never receives.
    pub fn handle(&self, msg: &Message) -> Option<Message> {
        match msg {
            Message::InventoryReq { antenna } => {
                Some(Message::TagReport { tags: self.inventory(*antenna).iter().map(TagReportEntry::from_event).collect() })
            }
            Message::WriteReq { epc, bank, wordptr, word } => Some(Message::WriteResp { status: self.write(epc, *bank, *wordptr, *word) }),
            Message::ReadReq { epc, bank, wordptr } => {
                let (status, word) = self.read(epc, *bank, *wordptr);
                Some(Message::ReadResp { status, word })
            }
            Message::TagReport { .. } | Message::WriteResp { .. } | Message::ReadResp { .. } => None,
        }
    }

    /// Serves one session until the peer disconnects or sends a malformed frame.
    pub fn serve_session<S: Read + Write>(&self, stream: &mut S) -> Result<(), FrameError> {
        loop {
            let msg = match read_frame(stream) {
                Ok(m) => m,
                Err(FrameError::Closed) => return Ok(()),
                Err(e) => return Err(e),
            };
            match self.handle(&msg) {
                Some(resp) => write_frame(stream, &resp)?,
                None => debug!("ignoring unsolicited {:#04x} frame", msg.msg_type()),
            }
        }
    }
}

/// A running TCP front end for a [`SimReader`]; one thread per connection.
pub struct ReaderServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ReaderServer {
    pub fn spawn(reader: Arc<SimReader>, addr: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(mut stream) => {
                        let reader = reader.clone();
                        std::thread::spawn(move || {
                            if let Err(e) = reader.serve_session(&mut stream) {
                                warn!("session ended: {e}");
                            }
                        });
                    }
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        });
        Ok(Self { addr, stop, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits (it only does after [`ReaderServer::shutdown`]).
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Client side of the reader protocol over any byte stream.
pub struct ReaderClient<S: Read + Write> {
    stream: S,
}

impl ReaderClient<TcpStream> {
    pub fn connect(addr: SocketAddr, timeout: Duration) -> Result<Self, RfidError> {
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(map_io)?;
        stream.set_read_timeout(Some(timeout)).map_err(map_io)?;
        stream.set_write_timeout(Some(timeout)).map_err(map_io)?;
        Ok(Self { stream })
    }
}

fn map_io(e: io::Error) -> RfidError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => RfidError::ProtocolTimeout,
        _ => RfidError::Io(e),
    }
}

fn map_frame(e: FrameError) -> RfidError {
    match e {
        FrameError::Io(e) => map_io(e),
        FrameError::Protocol(p) => RfidError::Protocol(p),
        FrameError::Closed => RfidError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "reader closed the connection")),
    }
}

impl<S: Read + Write> ReaderClient<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }

    pub fn request(&mut self, msg: &Message) -> Result<Message, RfidError> {
        write_frame(&mut self.stream, msg).map_err(map_frame)?;
        read_frame(&mut self.stream).map_err(map_frame)
    }

    pub fn inventory(&mut self, antenna: Option<u8>) -> Result<Vec<ReadEvent>, RfidError> {
        match self.request(&Message::InventoryReq { antenna })? {
            Message::TagReport { tags } => Ok(tags.iter().map(TagReportEntry::to_event).collect()),
            other => Err(unexpected(&other)),
        }
    }

    pub fn write_word(&mut self, epc: &Epc, bank: u8, wordptr: u16, word: u16) -> Result<(), RfidError> {
        match self.request(&Message::WriteReq { epc: *epc, bank, wordptr, word })? {
            Message::WriteResp { status } => status_result(status, epc),
            other => Err(unexpected(&other)),
        }
    }

    pub fn read_word(&mut self, epc: &Epc, bank: u8, wordptr: u16) -> Result<u16, RfidError> {
        match self.request(&Message::ReadReq { epc: *epc, bank, wordptr })? {
            Message::ReadResp { status, word } => status_result(status, epc).map(|_| word),
            other => Err(unexpected(&other)),
        }
    }

    /// Triggers a temperature measurement and reads it back.
    ///
    /// The trigger word is drawn outside the range of valid temperature words,
    /// so a tag that merely stores it is detected as lacking a sensor.
    pub fn trigger_temperature(&mut self, epc: &Epc, rng: &mut impl Rng) -> Result<TemperatureReading, RfidError> {
        let trigger = loop {
            let w: u16 = rng.random();
            if !TEMP_WORD_RANGE.contains(&(w as i16)) {
                break w;
            }
        };
        self.write_word(epc, USER_BANK, TEMPERATURE_WORD, trigger)?;
        let word = self.read_word(epc, USER_BANK, TEMPERATURE_WORD)?;
        if !TEMP_WORD_RANGE.contains(&(word as i16)) {
            return Err(RfidError::NotATemperatureTag(*epc));
        }
        let timestamp_us = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0);
        Ok(TemperatureReading { celsius: decode_temp_word(word), epc: *epc, timestamp_us })
    }
}

fn status_result(status: Status, epc: &Epc) -> Result<(), RfidError> {
    match status {
        Status::Ok => Ok(()),
        Status::TagNotFound => Err(RfidError::TagNotFound(*epc)),
        Status::MemoryOverrun => Err(RfidError::MemoryOverrun),
    }
}

fn unexpected(msg: &Message) -> RfidError {
    RfidError::UnexpectedResponse(msg.msg_type())
}
