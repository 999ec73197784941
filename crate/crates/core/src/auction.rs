//! The double auction: the plaintext trade-reduction reference and the
//! private session run by the auctioneer against the agent.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::agent::{Agent, LocalAgent};
use crate::circuits::{cmp_batch, ComparisonMode};
use crate::error::{Error, Result};
use crate::gate::GateContext;
use crate::gm::{Ciphertext, EncryptedBitVector, PublicKey, DEFAULT_KEY_BITS};
use crate::sorting::{pad_to_pow2, private_sort, BidRecord, ComparatorTrace, SortAlgorithm, SortDirection, PAD_ID};
use crate::wire::{Channel, Message};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Side {
    Seller = 0,
    Buyer = 1,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Seller => "seller",
            Side::Buyer => "buyer",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlainBid {
    pub value: u64,
    pub owner_id: u64,
}

impl PlainBid {
    pub fn new(value: u64, owner_id: u64) -> Self {
        Self { value, owner_id }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuctionOutcome {
    pub k: usize,
    pub winning_seller_ids: BTreeSet<u64>,
    pub winning_buyer_ids: BTreeSet<u64>,
    /// Paid to every winning seller; absent when nobody trades.
    pub seller_price: Option<u64>,
    /// Charged to every winning buyer; absent when nobody trades.
    pub buyer_price: Option<u64>,
}

impl AuctionOutcome {
    pub fn no_trade(k: usize) -> Self {
        Self { k, ..Self::default() }
    }
}

fn join_ids(ids: &BTreeSet<u64>) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

fn opt(v: Option<u64>) -> String {
    v.map_or_else(|| "none".to_string(), |p| p.to_string())
}

/// One `key=value` line per field.
impl fmt::Display for AuctionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "seller_price={}", opt(self.seller_price))?;
        writeln!(f, "buyer_price={}", opt(self.buyer_price))?;
        writeln!(f, "winning_sellers={}", join_ids(&self.winning_seller_ids))?;
        write!(f, "winning_buyers={}", join_ids(&self.winning_buyer_ids))
    }
}

/// Widths announced to the agent at session start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionParams {
    pub bid_bits: u32,
    pub id_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BidSubmission {
    pub side: Side,
    pub record: BidRecord,
}

/// Outcome release payload: re-randomized clearing prices and permuted winner IDs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeRequest {
    pub seller_price: EncryptedBitVector,
    pub buyer_price: EncryptedBitVector,
    pub seller_ids: Vec<EncryptedBitVector>,
    pub buyer_ids: Vec<EncryptedBitVector>,
}

/// The agent's decryption of an [`OutcomeRequest`], ID lists ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeResult {
    pub seller_price: u64,
    pub buyer_price: u64,
    pub seller_ids: Vec<u64>,
    pub buyer_ids: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionConfig {
    pub bid_bits: usize,
    pub id_bits: usize,
    pub key_bits: usize,
    pub sort: SortAlgorithm,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { bid_bits: 8, id_bits: 16, key_bits: DEFAULT_KEY_BITS, sort: SortAlgorithm::OeSort, seed: 0 }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        // bids get one guard bit while padded
        if !(1..=63).contains(&self.bid_bits) {
            return Err(Error::Precondition(format!("bid width {} outside 1..=63", self.bid_bits)));
        }
        if !(1..=64).contains(&self.id_bits) {
            return Err(Error::Precondition(format!("ID width {} outside 1..=64", self.id_bits)));
        }
        Ok(())
    }

    pub fn params(&self) -> SessionParams {
        SessionParams { bid_bits: self.bid_bits as u32, id_bits: self.id_bits as u32 }
    }

    /// Independent generator streams for the parties of an in-process session.
    pub fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

pub const AGENT_STREAM: u64 = 1;
pub const AUCTIONEER_STREAM: u64 = 2;
pub const BIDDER_STREAM: u64 = 3;

fn check_side(bids: &[PlainBid], side: Side) -> Result<()> {
    if bids.is_empty() {
        return Err(Error::Precondition(format!("no {side} bids")));
    }
    let mut seen = HashSet::new();
    for b in bids {
        if !seen.insert(b.owner_id) {
            return Err(Error::Precondition(format!("duplicate {side} id {}", b.owner_id)));
        }
    }
    Ok(())
}

/// Trade reduction on plaintext bids: sellers ascending, buyers descending,
/// `k` = number of leading positions with seller bid <= buyer bid; the first
/// `k-1` of each side trade at the `k`-th pair's bids.
pub fn mcafee_reference(sellers: &[PlainBid], buyers: &[PlainBid]) -> Result<AuctionOutcome> {
    check_side(sellers, Side::Seller)?;
    check_side(buyers, Side::Buyer)?;
    let mut s = sellers.to_vec();
    let mut b = buyers.to_vec();
    s.sort_by_key(|x| x.value);
    b.sort_by_key(|x| std::cmp::Reverse(x.value));
    let k = s.iter().zip(&b).take_while(|(s, b)| s.value <= b.value).count();
    if k < 2 {
        return Ok(AuctionOutcome::no_trade(k));
    }
    Ok(AuctionOutcome {
        k,
        winning_seller_ids: s[..k - 1].iter().map(|x| x.owner_id).collect(),
        winning_buyer_ids: b[..k - 1].iter().map(|x| x.owner_id).collect(),
        seller_price: Some(s[k - 1].value),
        buyer_price: Some(b[k - 1].value),
    })
}

/// Range checks a bidder runs before encrypting anything.
pub fn validate_bid(bid: &PlainBid, params: SessionParams) -> Result<()> {
    let fits = |v: u64, w: u32| w >= 64 || v >> w == 0;
    if !fits(bid.value, params.bid_bits) {
        return Err(Error::Precondition(format!("bid {} does not fit in {} bits", bid.value, params.bid_bits)));
    }
    if bid.owner_id == PAD_ID {
        return Err(Error::Precondition(format!("id {PAD_ID} is reserved for padding")));
    }
    if !fits(bid.owner_id, params.id_bits) {
        return Err(Error::Precondition(format!("id {} does not fit in {} bits", bid.owner_id, params.id_bits)));
    }
    Ok(())
}

/// Bidder side of bid collection: the bid and ID as bit vectors under `pk`.
pub fn encrypt_bid<R: Rng + ?Sized>(
    pk: &PublicKey,
    bid: &PlainBid,
    side: Side,
    params: SessionParams,
    rng: &mut R,
) -> Result<BidSubmission> {
    validate_bid(bid, params)?;
    let record = BidRecord {
        bid: pk.encrypt_value(bid.value, params.bid_bits as usize, rng)?,
        id: pk.encrypt_value(bid.owner_id, params.id_bits as usize, rng)?,
    };
    Ok(BidSubmission { side, record })
}

/// Submissions collected by the auctioneer during bid collection.
#[derive(Debug)]
pub struct BidBook {
    pk: PublicKey,
    params: SessionParams,
    sellers: Vec<BidRecord>,
    buyers: Vec<BidRecord>,
    ids_seen: HashSet<EncryptedBitVector>,
}

impl BidBook {
    pub fn new(pk: PublicKey, params: SessionParams) -> Self {
        Self { pk, params, sellers: Vec::new(), buyers: Vec::new(), ids_seen: HashSet::new() }
    }

    pub fn sellers(&self) -> usize {
        self.sellers.len()
    }

    pub fn buyers(&self) -> usize {
        self.buyers.len()
    }

    /// Rejects malformed records and replays of an ID ciphertext.
    pub fn accept(&mut self, sub: BidSubmission) -> Result<()> {
        let r = &sub.record;
        if r.bid.width() != self.params.bid_bits as usize || r.id.width() != self.params.id_bits as usize {
            return Err(Error::violation(format!(
                "{} submission has widths ({}, {}), session uses ({}, {})",
                sub.side,
                r.bid.width(),
                r.id.width(),
                self.params.bid_bits,
                self.params.id_bits
            )));
        }
        for c in r.bid.bits().iter().chain(r.id.bits()) {
            self.pk.check(c).map_err(|_| Error::violation("submission ciphertext outside Z_n^*"))?;
        }
        if !self.ids_seen.insert(r.id.clone()) {
            return Err(Error::violation(format!("duplicate ID ciphertext in {} submission", sub.side)));
        }
        match sub.side {
            Side::Seller => self.sellers.push(sub.record),
            Side::Buyer => self.buyers.push(sub.record),
        }
        Ok(())
    }

    pub fn into_sides(self) -> (Vec<BidRecord>, Vec<BidRecord>) {
        (self.sellers, self.buyers)
    }
}

/// Everything measured about one auctioneer session.
#[derive(Clone, Debug)]
pub struct SessionReport {
    pub outcome: AuctionOutcome,
    pub and_gates: u64,
    pub seller_sort_and_gates: u64,
    pub buyer_sort_and_gates: u64,
    /// Rounds spent inside AND gates.
    pub gate_rounds: u64,
    /// Gate rounds plus bid collection, the comparison-bit exchange and,
    /// when winners exist, the outcome release.
    pub rounds: u64,
    pub bytes_transferred: u64,
    pub seller_trace: ComparatorTrace,
    pub buyer_trace: ComparatorTrace,
    pub outcome_released: bool,
    /// Wall time of sorting, comparison and release.
    pub elapsed: Duration,
    pub log: Vec<String>,
}

/// Key setup from the auctioneer's side: announce widths, receive the key.
pub fn start_session<C: Channel>(channel: &mut C, params: SessionParams) -> Result<PublicKey> {
    match channel.request(&Message::SessionStart(params))? {
        Message::PubKey(pk) => Ok(pk),
        other => Err(Error::violation(format!("expected PUBKEY, got {}", other.kind()))),
    }
}

struct SessionLog {
    lines: Vec<String>,
}

impl SessionLog {
    fn step<C: Channel>(&mut self, ctx: &GateContext<C>, fixed_rounds: u64, what: String) {
        let line = format!(
            "{what} rounds={} and_gates={}",
            ctx.rounds() + fixed_rounds,
            ctx.and_gates()
        );
        log::info!("auctioneer: {line}");
        self.lines.push(line);
    }
}

fn sort_side<C: Channel>(
    ctx: &mut GateContext<C>,
    alg: SortAlgorithm,
    records: Vec<BidRecord>,
    dir: SortDirection,
) -> Result<(Vec<BidRecord>, ComparatorTrace)> {
    if !alg.needs_power_of_two() {
        let out = private_sort(ctx, alg, records, dir)?;
        return Ok((out.records, out.trace));
    }
    let pk = ctx.pk().clone();
    let (padded, info) = pad_to_pow2(records, dir, &pk, ctx.rng())?;
    let out = private_sort(ctx, alg, padded, dir)?;
    Ok((info.strip(out.records), out.trace))
}

fn rerandomized_shuffle<C: Channel>(ctx: &mut GateContext<C>, ids: &[BidRecord]) -> Vec<EncryptedBitVector> {
    let pk = ctx.pk().clone();
    let mut out: Vec<_> = ids.iter().map(|r| pk.rerandomize_vector(&r.id, ctx.rng())).collect();
    out.shuffle(ctx.rng());
    out
}

fn check_ids(ids: Vec<u64>, expect: usize, side: Side) -> Result<BTreeSet<u64>> {
    if ids.len() != expect {
        return Err(Error::violation(format!("agent returned {} {side} ids, expected {expect}", ids.len())));
    }
    let set: BTreeSet<u64> = ids.into_iter().collect();
    if set.len() != expect || set.contains(&PAD_ID) {
        return Err(Error::violation(format!("agent returned invalid {side} ids")));
    }
    Ok(set)
}

/// Sorting, comparison and release on already collected submissions.
pub fn run_auction<C: Channel>(
    ctx: &mut GateContext<C>,
    cfg: &SessionConfig,
    sellers: Vec<BidRecord>,
    buyers: Vec<BidRecord>,
) -> Result<SessionReport> {
    if sellers.is_empty() || buyers.is_empty() {
        return Err(Error::Precondition("both sides need at least one bid".into()));
    }
    let (m, n) = (sellers.len(), buyers.len());
    let started = Instant::now();
    let bytes_start = ctx.channel().bytes_transferred();
    let gates_start = ctx.and_gates();
    let rounds_start = ctx.rounds();
    // bid collection is one round
    let mut fixed = 1;
    let mut log = SessionLog { lines: Vec::new() };
    log.step(ctx, fixed, format!("collect sellers={m} buyers={n}"));

    let (sellers, seller_trace) = sort_side(ctx, cfg.sort, sellers, SortDirection::ASCENDING)?;
    let seller_sort_and_gates = ctx.and_gates() - gates_start;
    log.step(ctx, fixed, format!("sort side=seller alg={} comparators={}", cfg.sort, seller_trace.0.len()));
    let (buyers, buyer_trace) = sort_side(ctx, cfg.sort, buyers, SortDirection::DESCENDING)?;
    let buyer_sort_and_gates = ctx.and_gates() - gates_start - seller_sort_and_gates;
    log.step(ctx, fixed, format!("sort side=buyer alg={} comparators={}", cfg.sort, buyer_trace.0.len()));

    let t = m.min(n);
    let pairs: Vec<_> = buyers.iter().zip(&sellers).take(t).map(|(b, s)| (&b.bid, &s.bid)).collect();
    let bits: Vec<Ciphertext> = cmp_batch(ctx, &pairs, ComparisonMode::GREATER_OR_EQUAL)?;
    let k = match ctx.channel_mut().request(&Message::CmpBits(bits))? {
        Message::KResult(k) => k as usize,
        other => return Err(Error::violation(format!("expected K_RESULT, got {}", other.kind()))),
    };
    fixed += 1;
    if k > t {
        return Err(Error::violation(format!("agent reported k={k} with only {t} comparisons")));
    }
    log.step(ctx, fixed, format!("trade index k={k}"));

    let outcome = if k < 2 {
        log.step(ctx, fixed, "no trade, outcome withheld".into());
        AuctionOutcome::no_trade(k)
    } else {
        let pk = ctx.pk().clone();
        let seller_ids = rerandomized_shuffle(ctx, &sellers[..k - 1]);
        let buyer_ids = rerandomized_shuffle(ctx, &buyers[..k - 1]);
        let seller_price = pk.rerandomize_vector(&sellers[k - 1].bid, ctx.rng());
        let buyer_price = pk.rerandomize_vector(&buyers[k - 1].bid, ctx.rng());
        let req = OutcomeRequest { seller_price, buyer_price, seller_ids, buyer_ids };
        let res = match ctx.channel_mut().request(&Message::OutcomeRequest(req))? {
            Message::OutcomeResult(r) => r,
            other => return Err(Error::violation(format!("expected OUTCOME_RESULT, got {}", other.kind()))),
        };
        fixed += 1;
        if res.seller_price > res.buyer_price {
            return Err(Error::violation("released seller price exceeds buyer price"));
        }
        let outcome = AuctionOutcome {
            k,
            winning_seller_ids: check_ids(res.seller_ids, k - 1, Side::Seller)?,
            winning_buyer_ids: check_ids(res.buyer_ids, k - 1, Side::Buyer)?,
            seller_price: Some(res.seller_price),
            buyer_price: Some(res.buyer_price),
        };
        log.step(ctx, fixed, format!("outcome released winners={}", k - 1));
        outcome
    };

    Ok(SessionReport {
        outcome,
        and_gates: ctx.and_gates() - gates_start,
        seller_sort_and_gates,
        buyer_sort_and_gates,
        gate_rounds: ctx.rounds() - rounds_start,
        rounds: ctx.rounds() - rounds_start + fixed,
        bytes_transferred: ctx.channel().bytes_transferred() - bytes_start,
        seller_trace,
        buyer_trace,
        outcome_released: k >= 2,
        elapsed: started.elapsed(),
        log: log.lines,
    })
}

/// A whole session against the agent behind `channel`, with the bidders
/// simulated in-process. Submission frames are counted in the byte total.
pub fn run_session<C: Channel>(
    mut channel: C,
    cfg: &SessionConfig,
    sellers: &[PlainBid],
    buyers: &[PlainBid],
) -> Result<SessionReport> {
    cfg.validate()?;
    let params = cfg.params();
    for b in sellers.iter().chain(buyers) {
        validate_bid(b, params)?;
    }
    let pk = start_session(&mut channel, params)?;
    let mut bidder_rng = cfg.rng(BIDDER_STREAM);
    let mut book = BidBook::new(pk.clone(), params);
    let mut submission_bytes = 0u64;
    for (side, bids) in [(Side::Seller, sellers), (Side::Buyer, buyers)] {
        for b in bids {
            let sub = encrypt_bid(&pk, b, side, params, &mut bidder_rng)?;
            submission_bytes += (Message::BidSubmit(sub.clone()).to_wire()?.encoded_len()
                + Message::BidAck.to_wire()?.encoded_len()) as u64;
            book.accept(sub)?;
        }
    }
    let (s, b) = book.into_sides();
    let mut ctx = GateContext::new(pk, channel, cfg.rng(AUCTIONEER_STREAM));
    let result = run_auction(&mut ctx, cfg, s, b);
    if let Err(e) = &result {
        if !matches!(e, Error::Aborted(_) | Error::Closed | Error::Io(_)) {
            let _ = ctx.channel_mut().send(&Message::SessionAbort(e.to_string()));
        }
    }
    let mut report = result?;
    report.bytes_transferred += submission_bytes;
    Ok(report)
}

/// [`run_session`] against an in-process agent with a fresh key.
pub fn run_local_session(cfg: &SessionConfig, sellers: &[PlainBid], buyers: &[PlainBid]) -> Result<SessionReport> {
    let agent = Agent::generate(cfg.key_bits, cfg.rng(AGENT_STREAM))?;
    run_session(LocalAgent::from_agent(agent), cfg, sellers, buyers)
}
