//! Length-prefixed binary framing.
//!
//! Every message is `[length u32 BE][version u8][kind u8][protocol u8][body]`
//! where `length` counts the bytes after the prefix. All integers are
//! big-endian. A frame with an unknown version draws an ERROR reply and the
//! connection stays open; a frame larger than the negotiated maximum closes
//! it.

use std::io::{Read, Write};

use crate::error::{NetError, Result};

pub const PROTOCOL_VERSION: u8 = 1;
pub const DEFAULT_MAX_FRAME: usize = 64 * 1024 * 1024;
pub const FRAME_HEADER_BYTES: usize = 4 + 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    Hello = 1,
    HelloAck = 2,
    Query = 3,
    Response = 4,
    Error = 5,
}

impl MessageKind {
    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(MessageKind::Hello),
            2 => Ok(MessageKind::HelloAck),
            3 => Ok(MessageKind::Query),
            4 => Ok(MessageKind::Response),
            5 => Ok(MessageKind::Error),
            other => Err(NetError::BadFrame(format!("unknown message kind {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    Malformed = 1,
    Version = 2,
    Dimension = 3,
    UnsupportedProtocol = 4,
    Internal = 5,
}

impl ErrorCode {
    pub fn from_byte(b: u8) -> Self {
        match b {
            1 => ErrorCode::Malformed,
            2 => ErrorCode::Version,
            3 => ErrorCode::Dimension,
            4 => ErrorCode::UnsupportedProtocol,
            _ => ErrorCode::Internal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub version: u8,
    pub kind: MessageKind,
    /// Protocol id byte; zero for messages that are not protocol-specific.
    pub protocol: u8,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(kind: MessageKind, protocol: u8, body: Vec<u8>) -> Self {
        Frame {
            version: PROTOCOL_VERSION,
            kind,
            protocol,
            body,
        }
    }

    pub fn error(code: ErrorCode, message: &str) -> Self {
        let mut body = vec![code as u8];
        body.extend_from_slice(message.as_bytes());
        Frame::new(MessageKind::Error, 0, body)
    }

    pub fn error_payload(&self) -> (ErrorCode, String) {
        let code = self.body.first().map(|&b| ErrorCode::from_byte(b));
        let message = String::from_utf8_lossy(self.body.get(1..).unwrap_or_default()).into_owned();
        (code.unwrap_or(ErrorCode::Internal), message)
    }

    /// Total bytes on the wire including the length prefix.
    pub fn wire_len(&self) -> usize {
        FRAME_HEADER_BYTES + self.body.len()
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<()> {
    let len = (frame.body.len() + 3) as u32;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&[frame.version, frame.kind as u8, frame.protocol])?;
    w.write_all(&frame.body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. The version byte is not validated here so the caller
/// can answer unknown versions with an ERROR instead of dropping the link.
pub fn read_frame(r: &mut impl Read, max_frame: usize) -> Result<Frame> {
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len < 3 {
        return Err(NetError::BadFrame(format!("declared length {len} too short")));
    }
    if len > max_frame {
        return Err(NetError::OversizedFrame {
            got: len,
            max: max_frame,
        });
    }
    let mut head = [0u8; 3];
    r.read_exact(&mut head)?;
    let mut body = vec![0u8; len - 3];
    r.read_exact(&mut body)?;
    // Validate the kind only after the body is consumed so a bad frame
    // leaves the stream synchronized for an ERROR reply.
    Ok(Frame {
        version: head[0],
        kind: MessageKind::from_byte(head[1])?,
        protocol: head[2],
        body,
    })
}

/// The HELLO_ACK body:
/// `[version u8][server id u8][alpha u8][protocol bitmap u8][digest 32]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HelloAck {
    pub version: u8,
    pub server_id: u8,
    pub alpha: u8,
    pub protocols: u8,
    pub digest: [u8; 32],
}

impl HelloAck {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(36);
        body.extend_from_slice(&[self.version, self.server_id, self.alpha, self.protocols]);
        body.extend_from_slice(&self.digest);
        body
    }

    pub fn decode(body: &[u8]) -> Result<Self> {
        if body.len() != 36 {
            return Err(NetError::BadFrame(format!(
                "hello ack of {} bytes, expected 36",
                body.len()
            )));
        }
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&body[4..36]);
        Ok(HelloAck {
            version: body[0],
            server_id: body[1],
            alpha: body[2],
            protocols: body[3],
            digest,
        })
    }

    pub fn supports(&self, protocol: specpir_core::ProtocolId) -> bool {
        self.protocols & (1 << (protocol as u8 - 1)) != 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let frame = Frame::new(MessageKind::Query, 2, vec![1, 2, 3, 4]);
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame).unwrap();
        assert_eq!(buf.len(), frame.wire_len());
        let back = read_frame(&mut buf.as_slice(), DEFAULT_MAX_FRAME).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn oversized_frame_rejected() {
        let frame = Frame::new(MessageKind::Query, 1, vec![0; 100]);
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame).unwrap();
        assert!(matches!(
            read_frame(&mut buf.as_slice(), 50),
            Err(NetError::OversizedFrame { .. })
        ));
    }

    #[test]
    fn hello_ack_round_trip() {
        let ack = HelloAck {
            version: 1,
            server_id: 3,
            alpha: 3,
            protocols: 0b0000_0111,
            digest: [7; 32],
        };
        let back = HelloAck::decode(&ack.encode()).unwrap();
        assert_eq!(back, ack);
        assert!(back.supports(specpir_core::ProtocolId::Chor));
        assert!(!back.supports(specpir_core::ProtocolId::Raid));
    }

    #[test]
    fn error_frame_payload() {
        let frame = Frame::error(ErrorCode::Dimension, "row count mismatch");
        let (code, msg) = frame.error_payload();
        assert_eq!(code, ErrorCode::Dimension);
        assert_eq!(msg, "row count mismatch");
    }
}
