//! Socket server for UI clients.
//!
//! One thread owns the session and runs the tick loop. Reader threads only
//! decode frames and queue commands, so every engine change goes through the
//! same pipeline as the REPL.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::protocol::{decode, encode, read_frame, write_frame, Inbound, Outbound};
use super::{Reply, Session};
use crate::interp::FocusId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    /// Tick rate of the live loop; 0 runs as fast as possible.
    pub tick_hz: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { tick_hz: 30.0 }
    }
}

type Clients = Arc<Mutex<BTreeMap<u64, TcpStream>>>;

enum Command {
    Joined(u64),
    Message(u64, Inbound),
    Bad(u64, String),
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Stops the loops and waits for them.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the server stops (it normally runs until killed).
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Binds and starts serving in background threads.
pub fn spawn<A: ToSocketAddrs>(session: Session, addr: A, cfg: ServerConfig) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let clients: Clients = Arc::default();
    let (tx, rx) = mpsc::channel();

    let accept = {
        let (stop, clients) = (stop.clone(), clients.clone());
        thread::spawn(move || accept_loop(listener, clients, tx, stop))
    };
    let ticker = {
        let stop = stop.clone();
        thread::spawn(move || tick_loop(session, cfg, clients, rx, stop))
    };
    Ok(ServerHandle {
        addr,
        stop,
        threads: vec![accept, ticker],
    })
}

fn accept_loop(listener: TcpListener, clients: Clients, tx: Sender<Command>, stop: Arc<AtomicBool>) {
    let mut next_id = 0u64;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                next_id += 1;
                let id = next_id;
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                // a client that stops reading is dropped rather than stalling the loop
                let _ = stream.set_write_timeout(Some(Duration::from_secs(2)));
                let Ok(reader) = stream.try_clone() else { continue };
                clients.lock().expect("client table").insert(id, stream);
                let _ = tx.send(Command::Joined(id));
                let tx = tx.clone();
                thread::spawn(move || read_loop(id, reader, tx));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn read_loop(id: u64, mut stream: TcpStream, tx: Sender<Command>) {
    loop {
        match read_frame(&mut stream) {
            Ok(Some(body)) => {
                let cmd = match decode(&body) {
                    Ok(m) => Command::Message(id, m),
                    Err(e) => Command::Bad(id, e),
                };
                if tx.send(cmd).is_err() {
                    return;
                }
            }
            Ok(None) | Err(_) => return,
        }
    }
}

fn send_to(clients: &Clients, id: Option<u64>, msg: &Outbound) {
    let body = encode(msg);
    let mut table = clients.lock().expect("client table");
    let mut dead = Vec::new();
    for (cid, stream) in table.iter_mut() {
        if id.is_some_and(|want| want != *cid) {
            continue;
        }
        if write_frame(stream, &body).is_err() {
            dead.push(*cid);
        }
    }
    for cid in dead {
        if let Some(s) = table.remove(&cid) {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
    }
}

struct Live {
    session: Session,
    paused: bool,
    sent: usize,
    pending: Vec<FocusId>,
}

impl Live {
    /// Applies one client message. Returns (to sender only, to everyone).
    fn handle(&mut self, msg: Inbound) -> (Vec<Outbound>, Vec<Outbound>) {
        let mut mine = Vec::new();
        let mut all = Vec::new();
        match msg {
            Inbound::Utterance { text, speaker } => {
                let before = self.session.speaker().to_string();
                if let Some(s) = &speaker {
                    self.session.set_speaker(s);
                }
                let (reply, focus) = self.session.submit(&text);
                self.session.set_speaker(&before);
                match (reply, focus) {
                    (Some(r), _) => all.push(Outbound::Reply { text: r.text() }),
                    (None, Some(f)) => self.pending.push(f),
                    (None, None) => {}
                }
            }
            Inbound::Reset => {
                self.reset(&mut mine, |s| s.reset());
                all.push(Outbound::Snapshot(self.session.snapshot()));
            }
            Inbound::SetSeed { seed } => {
                self.reset(&mut mine, |s| s.set_seed(seed));
                all.push(Outbound::Snapshot(self.session.snapshot()));
            }
            Inbound::Pause => self.paused = true,
            Inbound::Resume => self.paused = false,
            Inbound::PlaceObject { name, x, y } => {
                self.session.place(&name, x, y);
                all.push(Outbound::Snapshot(self.session.snapshot()));
            }
            Inbound::DumpMemory => mine.push(Outbound::Memory {
                nodes: self.session.engine().memory().dump(),
            }),
            Inbound::ListKb => mine.push(Outbound::Kb {
                text: self.session.kb().to_string(),
            }),
        }
        (mine, all)
    }

    fn reset(&mut self, mine: &mut Vec<Outbound>, f: impl FnOnce(&mut Session) -> Result<(), super::ServiceError>) {
        if let Err(e) = f(&mut self.session) {
            mine.push(Outbound::Error { message: e.to_string() });
        }
        self.sent = 0;
        self.pending.clear();
    }

    fn hello(&self) -> Outbound {
        Outbound::Hello {
            speakers: vec!["user".into(), "Ann".into(), "Rick".into()],
            seed: self.session.seed(),
            world: self.session.engine().kernel().world().clone(),
        }
    }

    /// Events not yet broadcast, plus replies for settled commands.
    fn news(&mut self) -> Vec<Outbound> {
        let events = self.session.engine().events();
        let mut out: Vec<Outbound> = events[self.sent..].iter().cloned().map(Outbound::Event).collect();
        self.sent = events.len();
        let engine = self.session.engine();
        self.pending.retain(|f| match engine.focus_status(*f) {
            Some(s) if s.is_final() => {
                out.push(Outbound::Reply {
                    text: Reply::Finished(s).text(),
                });
                false
            }
            _ => true,
        });
        out
    }
}

fn tick_loop(session: Session, cfg: ServerConfig, clients: Clients, rx: Receiver<Command>, stop: Arc<AtomicBool>) {
    let mut live = Live {
        sent: session.engine().events().len(),
        session,
        paused: false,
        pending: Vec::new(),
    };
    let period = (cfg.tick_hz > 0.0).then(|| Duration::from_secs_f64(1.0 / cfg.tick_hz));
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        while let Ok(cmd) = rx.try_recv() {
            match cmd {
                Command::Joined(id) => {
                    send_to(&clients, Some(id), &live.hello());
                    send_to(&clients, Some(id), &Outbound::Snapshot(live.session.snapshot()));
                }
                Command::Bad(id, message) => send_to(&clients, Some(id), &Outbound::Error { message }),
                Command::Message(id, m) => {
                    let (mine, all) = live.handle(m);
                    for msg in &mine {
                        send_to(&clients, Some(id), msg);
                    }
                    for msg in &all {
                        send_to(&clients, None, msg);
                    }
                }
            }
        }
        if !live.paused {
            live.session.engine_mut().step();
            for msg in live.news() {
                send_to(&clients, None, &msg);
            }
            send_to(&clients, None, &Outbound::Snapshot(live.session.snapshot()));
        }
        match period {
            Some(p) => {
                next += p;
                let now = Instant::now();
                if next > now {
                    thread::sleep(next - now);
                } else {
                    next = now;
                }
            }
            None => thread::sleep(Duration::from_millis(1)),
        }
    }
    let mut table = clients.lock().expect("client table");
    for s in table.values_mut() {
        let _ = s.flush();
        let _ = s.shutdown(std::net::Shutdown::Both);
    }
}
