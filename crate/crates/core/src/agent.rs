//! The agent: holds the secret key, answers AND requests, turns the
//! comparison-bit array into the trade index and decrypts the permuted
//! outcome.

use std::collections::VecDeque;

use rand_chacha::ChaCha20Rng;

use crate::auction::{OutcomeRequest, OutcomeResult, SessionParams};
use crate::error::{Error, Result};
use crate::gate::agent_answer_and;
use crate::gm::{keygen, Ciphertext, PublicKey, SecretKey};
use crate::wire::{Channel, Message};

/// Number of leading ones in `bits`, provided the array has the shape
/// `1...10...0`. Any other shape means the sorted sequences were corrupt.
pub fn leading_ones(bits: &[bool]) -> Result<usize> {
    let k = bits.iter().take_while(|&&b| b).count();
    if bits[k..].iter().any(|&b| b) {
        return Err(Error::violation(format!(
            "comparison bits are not a monotone prefix (first 0 at index {k} is followed by a 1)"
        )));
    }
    Ok(k)
}

pub struct Agent {
    pk: PublicKey,
    sk: SecretKey,
    rng: ChaCha20Rng,
    params: Option<SessionParams>,
    log: Vec<String>,
    and_gates: u64,
}

impl Agent {
    pub fn new(pk: PublicKey, sk: SecretKey, rng: ChaCha20Rng) -> Self {
        Self { pk, sk, rng, params: None, log: Vec::new(), and_gates: 0 }
    }

    /// Key setup: fresh key pair.
    pub fn generate(key_bits: usize, mut rng: ChaCha20Rng) -> Result<Self> {
        let (pk, sk) = keygen(key_bits, &mut rng)?;
        let mut agent = Self::new(pk, sk, rng);
        agent.note(format!("keygen bits={key_bits}"));
        Ok(agent)
    }

    pub fn pk(&self) -> &PublicKey {
        &self.pk
    }

    pub fn sk(&self) -> &SecretKey {
        &self.sk
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    pub fn into_log(self) -> Vec<String> {
        self.log
    }

    fn note(&mut self, line: String) {
        log::debug!("agent: {line}");
        self.log.push(line);
    }

    fn decrypt_all(&self, cs: &[Ciphertext]) -> Result<Vec<bool>> {
        cs.iter()
            .map(|c| self.sk.decrypt(c).map_err(|_| Error::violation("undecryptable ciphertext")))
            .collect()
    }

    /// Processes one message and returns the reply, if the message calls for one.
    pub fn handle(&mut self, msg: Message) -> Result<Option<Message>> {
        match msg {
            Message::SessionStart(p) => {
                self.note(format!("session start bid_bits={} id_bits={}", p.bid_bits, p.id_bits));
                self.params = Some(p);
                Ok(Some(Message::PubKey(self.pk.clone())))
            }
            Message::AndRequest(req) => {
                let resp = agent_answer_and(&self.sk, &self.pk, &req, &mut self.rng)?;
                self.and_gates += resp.products.len() as u64;
                Ok(Some(Message::AndResponse(resp)))
            }
            Message::CmpBits(cs) => {
                let bits = self.decrypt_all(&cs)?;
                let k = leading_ones(&bits)?;
                self.note(format!(
                    "cmp bits={} k={k} and_gates_served={}",
                    bits.len(),
                    self.and_gates
                ));
                Ok(Some(Message::KResult(k as u32)))
            }
            Message::OutcomeRequest(req) => {
                let result = self.open_outcome(&req)?;
                self.note(format!(
                    "outcome released sellers={} buyers={}",
                    result.seller_ids.len(),
                    result.buyer_ids.len()
                ));
                Ok(Some(Message::OutcomeResult(result)))
            }
            Message::SessionAbort(reason) => {
                self.note(format!("aborted by auctioneer: {reason}"));
                Err(Error::Aborted(reason))
            }
            other => Err(Error::violation(format!("agent cannot handle {}", other.kind()))),
        }
    }

    fn open_outcome(&self, req: &OutcomeRequest) -> Result<OutcomeResult> {
        let open = |v| self.sk.decrypt_value(v).map_err(|_| Error::violation("undecryptable outcome"));
        let seller_price = open(&req.seller_price)?;
        let buyer_price = open(&req.buyer_price)?;
        let mut seller_ids = req.seller_ids.iter().map(open).collect::<Result<Vec<_>>>()?;
        let mut buyer_ids = req.buyer_ids.iter().map(open).collect::<Result<Vec<_>>>()?;
        seller_ids.sort_unstable();
        buyer_ids.sort_unstable();
        Ok(OutcomeResult { seller_price, buyer_price, seller_ids, buyer_ids })
    }
}

/// Serves one session on `channel` until the auctioneer closes it.
/// On a protocol error the auctioneer is told why before returning.
pub fn serve<C: Channel>(agent: &mut Agent, channel: &mut C) -> Result<()> {
    loop {
        let msg = match channel.recv() {
            Ok(m) => m,
            Err(Error::Closed) => {
                agent.note("session closed".into());
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        match agent.handle(msg) {
            Ok(Some(reply)) => channel.send(&reply)?,
            Ok(None) => {}
            Err(Error::Aborted(reason)) => return Err(Error::Aborted(reason)),
            Err(e) => {
                agent.note(format!("abort: {e}"));
                let _ = channel.send(&Message::SessionAbort(e.to_string()));
                return Err(e);
            }
        }
    }
}

/// In-process agent behind the [`Channel`] interface. Replies are computed
/// synchronously on `send`; byte counts are those of the encoded frames.
pub struct LocalAgent {
    agent: Agent,
    outbox: VecDeque<Message>,
    bytes: u64,
}

impl LocalAgent {
    pub fn new(pk: PublicKey, sk: SecretKey, rng: ChaCha20Rng) -> Self {
        Self::from_agent(Agent::new(pk, sk, rng))
    }

    pub fn from_agent(agent: Agent) -> Self {
        Self { agent, outbox: VecDeque::new(), bytes: 0 }
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }
}

impl Channel for LocalAgent {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.bytes += msg.to_wire()?.encoded_len() as u64;
        let reply = match self.agent.handle(msg.clone()) {
            Ok(r) => r,
            Err(Error::Aborted(_)) => None,
            Err(e) => Some(Message::SessionAbort(e.to_string())),
        };
        if let Some(reply) = reply {
            self.bytes += reply.to_wire()?.encoded_len() as u64;
            self.outbox.push_back(reply);
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        self.outbox.pop_front().ok_or(Error::Closed)
    }

    fn bytes_transferred(&self) -> u64 {
        self.bytes
    }
}
