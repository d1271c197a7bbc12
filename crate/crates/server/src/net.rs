//! TCP front end: a thread per connection, frames answered in order.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use hedb_core::wire::{self, read_frame, Frame, MsgType};

use crate::ServerState;

/// Accepts connections until the listener fails.
pub fn serve(listener: TcpListener, state: Arc<ServerState>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let state = state.clone();
        thread::spawn(move || {
            if let Err(e) = handle_connection(stream, &state) {
                eprintln!("connection error: {e}");
            }
        });
    }
    Ok(())
}

/// Serves one connection. A frame-level error is answered with an ERROR
/// frame and ends the connection, since the stream can no longer be
/// resynchronised; request-level errors leave it open.
pub fn handle_connection(stream: TcpStream, state: &ServerState) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        match read_frame(&mut reader, state.max_payload()) {
            Ok(None) => return Ok(()),
            Ok(Some(frame)) => {
                for reply in state.handle(&frame) {
                    writer.write_all(&reply.to_bytes())?;
                }
                writer.flush()?;
            }
            Err(wire::WireError::Io(e)) => return Err(e),
            Err(e) => {
                let err = Frame::new(MsgType::Error, wire::encode_error(e.code(), &e.to_string()));
                writer.write_all(&err.to_bytes())?;
                writer.flush()?;
                return Ok(());
            }
        }
    }
}
