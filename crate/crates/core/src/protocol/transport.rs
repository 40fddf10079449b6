//! Ordered, reliable message channels between a TA and a device.

use std::io;
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::frame::{
    frame_decode, frame_encode, read_frame, write_frame, FrameError, Message, ReadFrameError,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("peer closed the channel")]
    Closed,
    #[error("transport I/O: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

pub trait Transport: Send {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError>;
    /// The next message, or `None` once the peer has closed the channel.
    fn recv(&mut self) -> Result<Option<Message>, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Option<Message>, TransportError> {
        (**self).recv()
    }
}

/// In-process channel carrying encoded frames.
pub struct MemoryTransport {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

pub fn memory_pair(timeout: Duration) -> (MemoryTransport, MemoryTransport) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        MemoryTransport {
            tx: Some(a_tx),
            rx: a_rx,
            timeout,
        },
        MemoryTransport {
            tx: Some(b_tx),
            rx: b_rx,
            timeout,
        },
    )
}

impl MemoryTransport {
    /// Signals end of stream to the peer while still allowing reads.
    pub fn close(&mut self) {
        self.tx = None;
    }
}

impl Transport for MemoryTransport {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        let tx = self.tx.as_ref().ok_or(TransportError::Closed)?;
        tx.send(frame_encode(msg))
            .map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Option<Message>, TransportError> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(bytes) => Ok(Some(frame_decode(&bytes)?)),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Ok(None),
        }
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> io::Result<Self> {
        Self::from_stream(TcpStream::connect(addr)?, timeout)
    }

    pub fn from_stream(stream: TcpStream, timeout: Duration) -> io::Result<Self> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn close(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Write);
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        write_frame(&mut self.stream, msg).map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => TransportError::Closed,
            _ => TransportError::Io(e),
        })
    }

    fn recv(&mut self) -> Result<Option<Message>, TransportError> {
        match read_frame(&mut self.stream) {
            Ok(m) => Ok(m),
            Err(ReadFrameError::Frame(e)) => Err(e.into()),
            Err(ReadFrameError::Io(e)) => match e.kind() {
                io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Err(TransportError::Timeout),
                io::ErrorKind::ConnectionReset | io::ErrorKind::UnexpectedEof => Ok(None),
                _ => Err(e.into()),
            },
        }
    }
}

/// What an [`Interceptor`] does with an outgoing message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Pass,
    Drop,
    Replace(Message),
    /// Drop the message and every later one.
    Cut,
}

type Policy = Box<dyn FnMut(usize, &Message) -> Action + Send>;

/// Wraps one end of a channel and lets a test adversary tamper with,
/// drop or replace what that end sends. Every message it sees is logged.
pub struct Interceptor<T> {
    inner: T,
    policy: Policy,
    sent: usize,
    cut: bool,
    log: Arc<Mutex<Vec<Message>>>,
}

impl<T: Transport> Interceptor<T> {
    pub fn new(inner: T, policy: impl FnMut(usize, &Message) -> Action + Send + 'static) -> Self {
        Self {
            inner,
            policy: Box::new(policy),
            sent: 0,
            cut: false,
            log: Arc::default(),
        }
    }

    pub fn passthrough(inner: T) -> Self {
        Self::new(inner, |_, _| Action::Pass)
    }

    /// Messages sent and received through this end, in order.
    pub fn transcript(&self) -> Arc<Mutex<Vec<Message>>> {
        Arc::clone(&self.log)
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for Interceptor<T> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.log.lock().unwrap().push(msg.clone());
        let n = self.sent;
        self.sent += 1;
        if self.cut {
            return Ok(());
        }
        match (self.policy)(n, msg) {
            Action::Pass => self.inner.send(msg),
            Action::Drop => Ok(()),
            Action::Replace(m) => self.inner.send(&m),
            Action::Cut => {
                self.cut = true;
                Ok(())
            }
        }
    }

    fn recv(&mut self) -> Result<Option<Message>, TransportError> {
        let m = self.inner.recv()?;
        if let Some(m) = &m {
            self.log.lock().unwrap().push(m.clone());
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::frame::Command;
    use std::net::TcpListener;
    use std::thread;

    #[test]
    fn memory_pair_delivers_in_order_and_signals_close() {
        let (mut a, mut b) = memory_pair(Duration::from_millis(200));
        a.send(&Message::Cmd(Command::Next)).unwrap();
        a.send(&Message::Cmd(Command::Commit)).unwrap();
        assert_eq!(b.recv().unwrap(), Some(Message::Cmd(Command::Next)));
        assert_eq!(b.recv().unwrap(), Some(Message::Cmd(Command::Commit)));
        assert!(matches!(b.recv(), Err(TransportError::Timeout)));
        drop(a);
        assert_eq!(b.recv().unwrap(), None);
    }

    #[test]
    fn tcp_roundtrip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut t = TcpTransport::from_stream(s, Duration::from_secs(5)).unwrap();
            let m = t.recv().unwrap().unwrap();
            t.send(&m).unwrap();
            t.recv().unwrap()
        });
        let mut c = TcpTransport::connect(addr, Duration::from_secs(5)).unwrap();
        let m = Message::RespData {
            index: 3,
            data: vec![1, 2, 3],
        };
        c.send(&m).unwrap();
        assert_eq!(c.recv().unwrap(), Some(m));
        c.close();
        assert_eq!(server.join().unwrap(), None);
    }

    #[test]
    fn interceptor_drops_and_replaces() {
        let (a, mut b) = memory_pair(Duration::from_millis(100));
        let mut a = Interceptor::new(a, |n, _| match n {
            0 => Action::Drop,
            1 => Action::Replace(Message::Cmd(Command::Refresh)),
            _ => Action::Cut,
        });
        for _ in 0..3 {
            a.send(&Message::Cmd(Command::Next)).unwrap();
        }
        assert_eq!(b.recv().unwrap(), Some(Message::Cmd(Command::Refresh)));
        assert!(matches!(b.recv(), Err(TransportError::Timeout)));
        assert_eq!(a.transcript().lock().unwrap().len(), 3);
    }
}
