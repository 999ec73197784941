//! XOR and AND gates over encrypted bits.
//!
//! XOR is a local ciphertext product. AND needs one round trip to the agent,
//! which holds the secret key: the auctioneer splits each input into two
//! XOR shares with a private random mask, computes three of the four share
//! products itself, and asks the agent only for the product of the two
//! masked shares. The agent sees uniformly random bits.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::gm::{Ciphertext, PublicKey, SecretKey};
use crate::wire::{Channel, Message};

/// Masked operands `(E(a2), E(b2))` for a batch of AND gates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AndRequest {
    pub pairs: Vec<(Ciphertext, Ciphertext)>,
}

/// Fresh encryptions of `a2 & b2`, one per request pair, in request order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AndResponse {
    pub products: Vec<Ciphertext>,
}

/// Agent side of the AND gate: decrypt both shares, answer with a fresh
/// encryption of their AND.
pub fn agent_answer_and<R: Rng + ?Sized>(
    sk: &SecretKey,
    pk: &PublicKey,
    request: &AndRequest,
    rng: &mut R,
) -> Result<AndResponse> {
    let products = request
        .pairs
        .iter()
        .map(|(a2, b2)| {
            let a = sk.decrypt(a2).map_err(|_| Error::violation("undecryptable AND operand"))?;
            let b = sk.decrypt(b2).map_err(|_| Error::violation("undecryptable AND operand"))?;
            Ok(pk.encrypt(a && b, rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AndResponse { products })
}

/// Auctioneer-side evaluation state for one session.
pub struct GateContext<C> {
    pk: PublicKey,
    channel: C,
    rng: ChaCha20Rng,
    and_gates: u64,
    rounds: u64,
}

/// What the auctioneer keeps locally for one AND gate while the agent answers.
struct PendingAnd {
    a1b1: Ciphertext,
    a1b2: Ciphertext,
    a2b1: Ciphertext,
}

impl<C: Channel> GateContext<C> {
    pub fn new(pk: PublicKey, channel: C, rng: ChaCha20Rng) -> Self {
        Self { pk, channel, rng, and_gates: 0, rounds: 0 }
    }

    pub fn pk(&self) -> &PublicKey {
        &self.pk
    }

    pub fn channel(&self) -> &C {
        &self.channel
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.channel
    }

    pub fn into_channel(self) -> C {
        self.channel
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn and_gates(&self) -> u64 {
        self.and_gates
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Fresh encryption of a public constant.
    pub fn encrypt(&mut self, bit: bool) -> Ciphertext {
        self.pk.encrypt(bit, &mut self.rng)
    }

    pub fn xor(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.pk.xor(a, b)
    }

    pub fn and(&mut self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let mut out = self.and_batch(&[(a, b)])?;
        Ok(out.pop().expect("batch of one"))
    }

    /// Evaluates independent AND gates in a single request/response round.
    /// An empty batch is a no-op and costs no round.
    pub fn and_batch(&mut self, pairs: &[(&Ciphertext, &Ciphertext)]) -> Result<Vec<Ciphertext>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut pending = Vec::with_capacity(pairs.len());
        let mut masked = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let a1: bool = self.rng.gen();
            let b1: bool = self.rng.gen();
            let ea1 = self.encrypt(a1);
            let eb1 = self.encrypt(b1);
            let a2 = self.pk.xor(&ea1, a);
            let b2 = self.pk.xor(&eb1, b);
            let a1b2 = if a1 { b2.clone() } else { self.encrypt(false) };
            let a2b1 = if b1 { a2.clone() } else { self.encrypt(false) };
            let a1b1 = self.encrypt(a1 && b1);
            pending.push(PendingAnd { a1b1, a1b2, a2b1 });
            masked.push((a2, b2));
        }

        let reply = self.channel.request(&Message::AndRequest(AndRequest { pairs: masked }))?;
        self.rounds += 1;
        let products = match reply {
            Message::AndResponse(r) => r.products,
            other => {
                return Err(Error::violation(format!("expected AND_RESPONSE, got {}", other.kind())))
            }
        };
        if products.len() != pending.len() {
            return Err(Error::violation(format!(
                "AND_RESPONSE carries {} products for {} gates",
                products.len(),
                pending.len()
            )));
        }

        let mut out = Vec::with_capacity(products.len());
        for (p, a2b2) in pending.into_iter().zip(products) {
            self.pk.check(&a2b2)?;
            let t = self.pk.xor(&p.a1b1, &p.a1b2);
            let t = self.pk.xor(&t, &p.a2b1);
            out.push(self.pk.xor(&t, &a2b2));
        }
        self.and_gates += out.len() as u64;
        Ok(out)
    }
}
