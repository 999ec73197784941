//! Length-prefixed framing and the typed messages exchanged between the
//! bidders, the auctioneer and the agent.
//!
//! Frame: `msg_type: u8 | payload_len: u32 BE | payload`.

use std::io::{self, Read, Write};


use crate::auction::{BidSubmission, OutcomeRequest, OutcomeResult, SessionParams, Side};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::gate::{AndRequest, AndResponse};
use crate::gm::{Ciphertext, EncryptedBitVector, PublicKey};
use crate::sorting::BidRecord;

pub const HEADER_LEN: usize = 5;
/// Frames above this size are refused before allocating.
pub const MAX_PAYLOAD_LEN: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    PubKey = 0x01,
    BidSubmit = 0x02,
    AndRequest = 0x03,
    AndResponse = 0x04,
    CmpBits = 0x05,
    KResult = 0x06,
    OutcomeRequest = 0x07,
    OutcomeResult = 0x08,
    SessionStart = 0x09,
    SessionAbort = 0x0A,
}

impl TryFrom<u8> for MsgType {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        use MsgType::*;
        Ok(match v {
            0x01 => PubKey,
            0x02 => BidSubmit,
            0x03 => AndRequest,
            0x04 => AndResponse,
            0x05 => CmpBits,
            0x06 => KResult,
            0x07 => OutcomeRequest,
            0x08 => OutcomeResult,
            0x09 => SessionStart,
            0x0A => SessionAbort,
            other => return Err(Error::Decode(format!("unknown message type 0x{other:02x}"))),
        })
    }
}

/// One untyped frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

pub fn encode_message(m: &WireMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.encoded_len());
    out.push(m.msg_type as u8);
    out.extend_from_slice(&(m.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&m.payload);
    out
}

/// Decodes exactly one frame occupying all of `raw`.
pub fn decode_message(raw: &[u8]) -> Result<WireMessage> {
    if raw.len() < HEADER_LEN {
        return Err(Error::Decode(format!("frame of {} bytes is shorter than the header", raw.len())));
    }
    let msg_type = MsgType::try_from(raw[0])?;
    let len = u32::from_be_bytes([raw[1], raw[2], raw[3], raw[4]]) as usize;
    let body = &raw[HEADER_LEN..];
    if body.len() != len {
        return Err(Error::Decode(format!("header declares {len} payload bytes, frame has {}", body.len())));
    }
    Ok(WireMessage { msg_type, payload: body.to_vec() })
}

/// Typed protocol messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    PubKey(PublicKey),
    BidSubmit(BidSubmission),
    /// Auctioneer's acknowledgement of a submission: a BID_SUBMIT frame with
    /// an empty payload.
    BidAck,
    AndRequest(AndRequest),
    AndResponse(AndResponse),
    CmpBits(Vec<Ciphertext>),
    KResult(u32),
    OutcomeRequest(OutcomeRequest),
    OutcomeResult(OutcomeResult),
    SessionStart(SessionParams),
    SessionAbort(String),
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::PubKey(_) => MsgType::PubKey,
            Message::BidSubmit(_) | Message::BidAck => MsgType::BidSubmit,
            Message::AndRequest(_) => MsgType::AndRequest,
            Message::AndResponse(_) => MsgType::AndResponse,
            Message::CmpBits(_) => MsgType::CmpBits,
            Message::KResult(_) => MsgType::KResult,
            Message::OutcomeRequest(_) => MsgType::OutcomeRequest,
            Message::OutcomeResult(_) => MsgType::OutcomeResult,
            Message::SessionStart(_) => MsgType::SessionStart,
            Message::SessionAbort(_) => MsgType::SessionAbort,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.msg_type() {
            MsgType::PubKey => "PUBKEY",
            MsgType::BidSubmit => "BID_SUBMIT",
            MsgType::AndRequest => "AND_REQUEST",
            MsgType::AndResponse => "AND_RESPONSE",
            MsgType::CmpBits => "CMP_BITS",
            MsgType::KResult => "K_RESULT",
            MsgType::OutcomeRequest => "OUTCOME_REQUEST",
            MsgType::OutcomeResult => "OUTCOME_RESULT",
            MsgType::SessionStart => "SESSION_START",
            MsgType::SessionAbort => "SESSION_ABORT",
        }
    }

    /// Every ciphertext carried by the message, in payload order.
    pub fn ciphertexts(&self) -> Vec<&Ciphertext> {
        match self {
            Message::BidSubmit(s) => s.record.bid.bits().iter().chain(s.record.id.bits()).collect(),
            Message::AndRequest(r) => r.pairs.iter().flat_map(|(a, b)| [a, b]).collect(),
            Message::AndResponse(r) => r.products.iter().collect(),
            Message::CmpBits(c) => c.iter().collect(),
            Message::OutcomeRequest(r) => r
                .seller_price
                .bits()
                .iter()
                .chain(r.buyer_price.bits())
                .chain(r.seller_ids.iter().flat_map(|v| v.bits()))
                .chain(r.buyer_ids.iter().flat_map(|v| v.bits()))
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn to_wire(&self) -> Result<WireMessage> {
        let mut w = Writer::new();
        match self {
            Message::PubKey(pk) => {
                w.biguint(pk.modulus()).biguint(pk.pseudo_residue());
            }
            Message::BidSubmit(s) => {
                w.u8(s.side as u8);
                write_ebv(&mut w, &s.record.bid)?;
                write_ebv(&mut w, &s.record.id)?;
            }
            Message::BidAck => {}
            Message::AndRequest(r) => {
                w.len_prefix(r.pairs.len())?;
                for (a, b) in &r.pairs {
                    w.biguint(a.value()).biguint(b.value());
                }
            }
            Message::AndResponse(r) => write_ciphertexts(&mut w, &r.products)?,
            Message::CmpBits(c) => write_ciphertexts(&mut w, c)?,
            Message::KResult(k) => {
                w.u32(*k);
            }
            Message::OutcomeRequest(r) => {
                write_ebv(&mut w, &r.seller_price)?;
                write_ebv(&mut w, &r.buyer_price)?;
                for ids in [&r.seller_ids, &r.buyer_ids] {
                    w.len_prefix(ids.len())?;
                    for v in ids {
                        write_ebv(&mut w, v)?;
                    }
                }
            }
            Message::OutcomeResult(r) => {
                w.u64(r.seller_price).u64(r.buyer_price);
                for ids in [&r.seller_ids, &r.buyer_ids] {
                    w.len_prefix(ids.len())?;
                    for &id in ids {
                        w.u64(id);
                    }
                }
            }
            Message::SessionStart(p) => {
                w.u32(p.bid_bits).u32(p.id_bits);
            }
            Message::SessionAbort(reason) => {
                w.bytes(reason.as_bytes());
            }
        }
        Ok(WireMessage { msg_type: self.msg_type(), payload: w.finish() })
    }

    pub fn from_wire(m: &WireMessage) -> Result<Self> {
        let mut r = Reader::new(&m.payload);
        let msg = match m.msg_type {
            MsgType::PubKey => {
                let n = r.biguint()?;
                let x = r.biguint()?;
                Message::PubKey(PublicKey::new(n, x)?)
            }
            MsgType::BidSubmit if m.payload.is_empty() => Message::BidAck,
            MsgType::BidSubmit => {
                let side = match r.u8()? {
                    0 => Side::Seller,
                    1 => Side::Buyer,
                    other => return Err(Error::Decode(format!("unknown bidder side {other}"))),
                };
                let bid = read_ebv(&mut r)?;
                let id = read_ebv(&mut r)?;
                Message::BidSubmit(BidSubmission { side, record: BidRecord { bid, id } })
            }
            MsgType::AndRequest => {
                let n = r.count(8)?;
                let mut pairs = Vec::with_capacity(n);
                for _ in 0..n {
                    let a = Ciphertext::from_raw(r.biguint()?);
                    let b = Ciphertext::from_raw(r.biguint()?);
                    pairs.push((a, b));
                }
                Message::AndRequest(AndRequest { pairs })
            }
            MsgType::AndResponse => Message::AndResponse(AndResponse { products: read_ciphertexts(&mut r)? }),
            MsgType::CmpBits => Message::CmpBits(read_ciphertexts(&mut r)?),
            MsgType::KResult => Message::KResult(r.u32()?),
            MsgType::OutcomeRequest => {
                let seller_price = read_ebv(&mut r)?;
                let buyer_price = read_ebv(&mut r)?;
                let mut lists = [Vec::new(), Vec::new()];
                for list in lists.iter_mut() {
                    let n = r.count(4)?;
                    for _ in 0..n {
                        list.push(read_ebv(&mut r)?);
                    }
                }
                let [seller_ids, buyer_ids] = lists;
                Message::OutcomeRequest(OutcomeRequest { seller_price, buyer_price, seller_ids, buyer_ids })
            }
            MsgType::OutcomeResult => {
                let seller_price = r.u64()?;
                let buyer_price = r.u64()?;
                let mut lists = [Vec::new(), Vec::new()];
                for list in lists.iter_mut() {
                    let n = r.count(8)?;
                    for _ in 0..n {
                        list.push(r.u64()?);
                    }
                }
                let [seller_ids, buyer_ids] = lists;
                Message::OutcomeResult(OutcomeResult { seller_price, buyer_price, seller_ids, buyer_ids })
            }
            MsgType::SessionStart => {
                Message::SessionStart(SessionParams { bid_bits: r.u32()?, id_bits: r.u32()? })
            }
            MsgType::SessionAbort => {
                let text = String::from_utf8_lossy(r.rest()).into_owned();
                Message::SessionAbort(text)
            }
        };
        r.expect_end()?;
        Ok(msg)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        Ok(encode_message(&self.to_wire()?))
    }

    pub fn decode(raw: &[u8]) -> Result<Self> {
        Self::from_wire(&decode_message(raw)?)
    }
}

fn write_ciphertexts(w: &mut Writer, cs: &[Ciphertext]) -> Result<()> {
    w.len_prefix(cs.len())?;
    for c in cs {
        w.biguint(c.value());
    }
    Ok(())
}

fn read_ciphertexts(r: &mut Reader<'_>) -> Result<Vec<Ciphertext>> {
    let n = r.count(4)?;
    (0..n).map(|_| Ok(Ciphertext::from_raw(r.biguint()?))).collect()
}

fn write_ebv(w: &mut Writer, v: &EncryptedBitVector) -> Result<()> {
    write_ciphertexts(w, v.bits())
}

fn read_ebv(r: &mut Reader<'_>) -> Result<EncryptedBitVector> {
    let bits = read_ciphertexts(r)?;
    if bits.is_empty() {
        return Err(Error::Decode("empty bit vector".into()));
    }
    Ok(EncryptedBitVector::from_bits(bits))
}

/// An ordered duplex message stream to one peer.
pub trait Channel {
    fn send(&mut self, msg: &Message) -> Result<()>;

    fn recv(&mut self) -> Result<Message>;

    /// Frame bytes sent plus received so far.
    fn bytes_transferred(&self) -> u64;

    /// Sends `msg` and waits for the reply, turning SESSION_ABORT into an error.
    fn request(&mut self, msg: &Message) -> Result<Message> {
        self.send(msg)?;
        match self.recv()? {
            Message::SessionAbort(reason) => Err(Error::Aborted(reason)),
            other => Ok(other),
        }
    }
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn send(&mut self, msg: &Message) -> Result<()> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message> {
        (**self).recv()
    }

    fn bytes_transferred(&self) -> u64 {
        (**self).bytes_transferred()
    }
}

/// Framed messages over any byte stream.
pub struct FramedChannel<S> {
    stream: S,
    bytes: u64,
}

impl<S: Read + Write> FramedChannel<S> {
    pub fn new(stream: S) -> Self {
        Self { stream, bytes: 0 }
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }

    pub fn send_frame(&mut self, frame: &WireMessage) -> Result<()> {
        let raw = encode_message(frame);
        self.stream.write_all(&raw)?;
        self.stream.flush()?;
        self.bytes += raw.len() as u64;
        Ok(())
    }

    pub fn recv_frame(&mut self) -> Result<WireMessage> {
        let mut header = [0u8; HEADER_LEN];
        // EOF before the first header byte is a clean close
        let mut got = 0;
        while got < HEADER_LEN {
            match self.stream.read(&mut header[got..]) {
                Ok(0) if got == 0 => return Err(Error::Closed),
                Ok(0) => return Err(Error::Decode("stream ended inside a frame header".into())),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let msg_type = MsgType::try_from(header[0])?;
        let len = u32::from_be_bytes([header[1], header[2], header[3], header[4]]) as usize;
        if len > MAX_PAYLOAD_LEN {
            return Err(Error::Decode(format!("payload of {len} bytes exceeds limit")));
        }
        let mut payload = vec![0u8; len];
        self.stream.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Decode("stream ended inside a frame payload".into()),
            _ => e.into(),
        })?;
        self.bytes += (HEADER_LEN + len) as u64;
        Ok(WireMessage { msg_type, payload })
    }
}

impl<S: Read + Write> Channel for FramedChannel<S> {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.send_frame(&msg.to_wire()?)
    }

    fn recv(&mut self) -> Result<Message> {
        Message::from_wire(&self.recv_frame()?)
    }

    fn bytes_transferred(&self) -> u64 {
        self.bytes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Channel wrapper that keeps a copy of every message in both directions.
pub struct Recording<C> {
    inner: C,
    transcript: Vec<(Direction, Message)>,
}

impl<C: Channel> Recording<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, transcript: Vec::new() }
    }

    pub fn transcript(&self) -> &[(Direction, Message)] {
        &self.transcript
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }

    pub fn into_parts(self) -> (C, Vec<(Direction, Message)>) {
        (self.inner, self.transcript)
    }
}

impl<C: Channel> Channel for Recording<C> {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.inner.send(msg)?;
        self.transcript.push((Direction::Sent, msg.clone()));
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        let msg = self.inner.recv()?;
        self.transcript.push((Direction::Received, msg.clone()));
        Ok(msg)
    }

    fn bytes_transferred(&self) -> u64 {
        self.inner.bytes_transferred()
    }
}
