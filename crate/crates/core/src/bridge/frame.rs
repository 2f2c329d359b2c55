//! Wire format, version "1".
//!
//! A frame is one line of UTF-8 JSON (the header) terminated by `\n`,
//! followed immediately by `payload_len` bytes of little-endian `f32`.
//! Header fields: `op` (`hello` | `denoise` | `bye` | `error`), `version`
//! (hello), `sigma`, `shape`, `context` (denoise), `message` (error) and
//! `payload_len`. For denoise frames `payload_len = 4 · ∏ shape`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::BridgeError;

pub const PROTOCOL_VERSION: &str = "1";

/// Headers longer than this are rejected as malformed.
pub const MAX_HEADER_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Hello,
    Denoise,
    Bye,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default)]
    pub payload_len: usize,
}

impl FrameHeader {
    fn bare(op: Op) -> Self {
        Self { op, version: None, sigma: None, shape: None, context: None, message: None, payload_len: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub header: FrameHeader,
    pub payload: Vec<f32>,
}

impl Frame {
    pub fn hello(shape: &[usize]) -> Self {
        let mut header = FrameHeader::bare(Op::Hello);
        header.version = Some(PROTOCOL_VERSION.into());
        header.shape = Some(shape.to_vec());
        Self { header, payload: Vec::new() }
    }

    pub fn denoise(shape: &[usize], sigma: f64, context: Option<&str>, payload: Vec<f32>) -> Self {
        let mut header = FrameHeader::bare(Op::Denoise);
        header.sigma = Some(sigma);
        header.shape = Some(shape.to_vec());
        header.context = context.map(str::to_owned);
        header.payload_len = 4 * payload.len();
        Self { header, payload }
    }

    pub fn bye() -> Self {
        Self { header: FrameHeader::bare(Op::Bye), payload: Vec::new() }
    }

    pub fn error(message: impl Into<String>) -> Self {
        let mut header = FrameHeader::bare(Op::Error);
        header.message = Some(message.into());
        Self { header, payload: Vec::new() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header).expect("header serializes");
        out.push(b'\n');
        out.reserve(4 * self.payload.len());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), BridgeError> {
        w.write_all(&self.encode()).map_err(BridgeError::from_io)?;
        w.flush().map_err(BridgeError::from_io)
    }

    /// Reads one frame. `Ok(None)` on a clean end of stream before a header.
    pub fn read_from(r: &mut impl BufRead) -> Result<Option<Self>, BridgeError> {
        let Some(header) = read_header(r)? else {
            return Ok(None);
        };
        let payload = read_payload(r, header.payload_len)?;
        Ok(Some(Self { header, payload }))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, BridgeError> {
        let mut cursor = bytes;
        let frame = Self::read_from(&mut cursor)?.ok_or(BridgeError::ConnectionLost)?;
        if !cursor.is_empty() {
            return Err(BridgeError::Malformed(format!("{} trailing bytes", cursor.len())));
        }
        Ok(frame)
    }

    /// Checks the denoise-frame invariants: shape present, payload length
    /// consistent with it, all values finite.
    pub fn validate_denoise(&self) -> Result<&[usize], BridgeError> {
        let shape = self.header.shape.as_deref().ok_or_else(|| BridgeError::Malformed("missing shape".into()))?;
        if self.header.sigma.is_none() {
            return Err(BridgeError::Malformed("missing sigma".into()));
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| BridgeError::Malformed("shape overflows".into()))?;
        if self.header.payload_len != 4 * n || self.payload.len() != n {
            return Err(BridgeError::Malformed("bad payload length".into()));
        }
        if self.payload.iter().any(|v| !v.is_finite()) {
            return Err(BridgeError::NonFinite);
        }
        Ok(shape)
    }
}

pub fn read_header(r: &mut impl BufRead) -> Result<Option<FrameHeader>, BridgeError> {
    let mut line = Vec::new();
    let n = r
        .take(MAX_HEADER_BYTES as u64 + 1)
        .read_until(b'\n', &mut line)
        .map_err(BridgeError::from_io)?;
    if n == 0 {
        return Ok(None);
    }
    if line.last() != Some(&b'\n') {
        return Err(if n > MAX_HEADER_BYTES {
            BridgeError::Malformed("header too long".into())
        } else {
            BridgeError::ConnectionLost
        });
    }
    line.pop();
    serde_json::from_slice(&line).map(Some).map_err(|e| BridgeError::Malformed(e.to_string()))
}

pub fn read_payload(r: &mut impl Read, len: usize) -> Result<Vec<f32>, BridgeError> {
    if !len.is_multiple_of(4) {
        return Err(BridgeError::Malformed("bad payload length".into()));
    }
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes).map_err(BridgeError::from_io)?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigma_text() {
        let f = Frame::denoise(&[1], 80.0, None, vec![0.0]);
        let text = String::from_utf8(f.encode()[..f.encode().len() - 4].to_vec()).unwrap();
        assert!(text.contains("\"sigma\":80"), "{text}");
        assert!(text.ends_with('\n'));
        let f = Frame::denoise(&[1], 0.1 + 0.2, None, vec![0.0]);
        let back = Frame::decode(&f.encode()).unwrap();
        assert_eq!(back.header.sigma, Some(0.1 + 0.2));
    }

    #[test]
    fn latent_payload_size() {
        let f = Frame::denoise(&[4, 64, 64], 1.0, Some("prompt=a cat;guidance=7.5"), vec![0.0; 4 * 64 * 64]);
        assert_eq!(f.header.payload_len, 65_536);
        assert_eq!(f.validate_denoise().unwrap(), &[4, 64, 64]);
    }

    #[test]
    fn bad_frames() {
        let mut f = Frame::denoise(&[2, 2], 1.0, None, vec![0.0; 4]);
        f.header.payload_len = 12;
        f.payload.truncate(3);
        assert!(matches!(f.validate_denoise(), Err(BridgeError::Malformed(m)) if m == "bad payload length"));

        let nan = Frame::denoise(&[1], 1.0, None, vec![f32::NAN]);
        assert!(matches!(nan.validate_denoise(), Err(BridgeError::NonFinite)));

        assert!(matches!(Frame::decode(b"not json\n"), Err(BridgeError::Malformed(_))));
        assert!(matches!(Frame::decode(b"{\"op\":\"bye\"}"), Err(BridgeError::ConnectionLost)));
        let mut cut = Frame::denoise(&[2], 1.0, None, vec![1.0, 2.0]).encode();
        cut.truncate(cut.len() - 2);
        assert!(matches!(Frame::decode(&cut), Err(BridgeError::ConnectionLost)));
    }

    fn arb_frame() -> impl Strategy<Value = Frame> {
        (
            proptest::collection::vec(1usize..5, 1..4),
            prop_oneof![Just(80.0f64), 1e-4f64..100.0],
            proptest::option::of("[ -~]{0,40}"),
            any::<u64>(),
        )
            .prop_map(|(shape, sigma, context, seed)| {
                let n: usize = shape.iter().product();
                let payload = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f32 - 500.0) / 7.0).collect();
                Frame::denoise(&shape, sigma, context.as_deref(), payload)
            })
    }

    proptest! {
        #[test]
        fn encode_decode_identity(frame in arb_frame()) {
            let back = Frame::decode(&frame.encode()).unwrap();
            prop_assert_eq!(&back, &frame);
            prop_assert!(back.validate_denoise().is_ok());
        }
    }
}
