use std::net::TcpListener;

use log::{info, warn};

use super::transport::LineTransport;
use super::{Session, SessionExit};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServeOutcome {
    Finished,
    /// `max_connections` clients came and went before the stream ended.
    ConnectionsExhausted { next_batch: usize },
}

/// Accept clients one at a time on `listener` and run `session` with each until the stream
/// ends. A client that disconnects leaves the session at a batch boundary for the next one.
pub fn serve(listener: &TcpListener, session: &mut Session, max_connections: Option<usize>) -> Result<ServeOutcome> {
    let mut served = 0;
    loop {
        if max_connections.is_some_and(|m| served >= m) {
            return Ok(ServeOutcome::ConnectionsExhausted {
                next_batch: session.next_batch(),
            });
        }
        let (stream, peer) = listener.accept().map_err(|e| Error::io("<listener>", e))?;
        served += 1;
        info!("client {peer} connected at batch {}", session.next_batch());
        let mut transport = LineTransport::tcp(stream)?;
        match session.run(&mut transport) {
            Ok(SessionExit::Finished) => {
                info!("session finished after {} batches", session.n_batches());
                return Ok(ServeOutcome::Finished);
            }
            Ok(SessionExit::Disconnected { next_batch }) => {
                info!("client {peer} left; paused at batch {next_batch}");
            }
            Err(Error::Io { source, .. }) => {
                warn!("connection to {peer} failed: {source}; paused at batch {}", session.next_batch());
            }
            Err(e) => return Err(e),
        }
    }
}
