use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use super::protocol::{decode_client, decode_server, encode, ClientMessage, ServerMessage};
use crate::error::{Error, Result};

/// One event read from the client side.
#[derive(Clone, Debug, PartialEq)]
pub enum Incoming {
    Message(ClientMessage),
    /// A line that did not parse; the text is the parse error.
    Malformed(String),
    Timeout,
    Closed,
}

/// Server end of a session connection.
pub trait Transport {
    fn send(&mut self, msg: &ServerMessage) -> Result<()>;
    fn recv_timeout(&mut self, timeout: Duration) -> Incoming;
}

enum Outgoing {
    Writer(Box<dyn Write + Send>),
    Channel(Sender<String>),
}

/// Newline-delimited JSON over any byte stream or over in-process channels.
pub struct LineTransport {
    incoming: Receiver<String>,
    outgoing: Outgoing,
}

impl LineTransport {
    /// Lines are read on a background thread so waits can time out cleanly.
    pub fn from_io<R, W>(reader: R, writer: W) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self {
            incoming: rx,
            outgoing: Outgoing::Writer(Box::new(writer)),
        }
    }

    pub fn tcp(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true).ok();
        let reader = stream.try_clone().map_err(|e| Error::io("<tcp>", e))?;
        Ok(Self::from_io(reader, stream))
    }
}

impl Transport for LineTransport {
    fn send(&mut self, msg: &ServerMessage) -> Result<()> {
        let line = encode(msg)?;
        match &mut self.outgoing {
            Outgoing::Writer(w) => {
                writeln!(w, "{line}")
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io("<session>", e))
            }
            Outgoing::Channel(tx) => tx
                .send(line)
                .map_err(|_| Error::io("<session>", std::io::ErrorKind::BrokenPipe.into())),
        }
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Incoming {
        match self.incoming.recv_timeout(timeout) {
            Ok(line) if line.trim().is_empty() => Incoming::Malformed("empty line".into()),
            Ok(line) => match decode_client(&line) {
                Ok(m) => Incoming::Message(m),
                Err(e) => Incoming::Malformed(e.to_string()),
            },
            Err(RecvTimeoutError::Timeout) => Incoming::Timeout,
            Err(RecvTimeoutError::Disconnected) => Incoming::Closed,
        }
    }
}

/// Client end of an in-process connection. Messages still travel as JSON text.
pub struct MemoryClient {
    to_server: Sender<String>,
    from_server: Receiver<String>,
}

impl MemoryClient {
    pub fn send(&self, msg: &ClientMessage) -> Result<()> {
        self.send_raw(&encode(msg)?)
    }

    /// Send a raw line, e.g. to exercise malformed input.
    pub fn send_raw(&self, line: &str) -> Result<()> {
        self.to_server
            .send(line.to_string())
            .map_err(|_| Error::Protocol("server hung up".into()))
    }

    /// Next server message; `None` once the server side is gone.
    pub fn recv(&self) -> Option<ServerMessage> {
        self.from_server.recv().ok().map(|l| decode_server(&l).expect("server sent valid JSON"))
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<ServerMessage> {
        self.from_server
            .recv_timeout(timeout)
            .ok()
            .map(|l| decode_server(&l).expect("server sent valid JSON"))
    }
}

/// Connected in-process transport and client.
pub fn memory_pair() -> (LineTransport, MemoryClient) {
    let (c2s_tx, c2s_rx) = channel();
    let (s2c_tx, s2c_rx) = channel();
    (
        LineTransport {
            incoming: c2s_rx,
            outgoing: Outgoing::Channel(s2c_tx),
        },
        MemoryClient {
            to_server: c2s_tx,
            from_server: s2c_rx,
        },
    )
}
