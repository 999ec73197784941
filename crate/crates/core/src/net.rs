//! TCP transport for the three roles.
//!
//! Bidder connection: auctioneer sends SESSION_START and PUBKEY, the bidder
//! answers with one BID_SUBMIT, the auctioneer acknowledges with an empty
//! BID_SUBMIT (or SESSION_ABORT if the submission is refused).

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha20Rng;

use crate::agent::{serve, Agent};
use crate::auction::{
    encrypt_bid, run_auction, run_session, start_session, validate_bid, BidBook, BidSubmission, PlainBid,
    SessionConfig, SessionParams, SessionReport, Side, AUCTIONEER_STREAM,
};
use crate::error::{Error, Result};
use crate::gate::GateContext;
use crate::wire::{Channel, FramedChannel, Message};

pub type TcpChannel = FramedChannel<TcpStream>;

pub fn tcp_channel(stream: TcpStream) -> Result<TcpChannel> {
    stream.set_nodelay(true)?;
    Ok(FramedChannel::new(stream))
}

/// Connects, retrying refused connections until `patience` runs out.
pub fn connect_retry<A: ToSocketAddrs>(addr: A, patience: Duration) -> Result<TcpStream> {
    let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
    let give_up = Instant::now() + patience;
    loop {
        let mut last = io::Error::new(io::ErrorKind::InvalidInput, "address resolved to nothing");
        for a in &addrs {
            match TcpStream::connect(a) {
                Ok(s) => return Ok(s),
                Err(e) => last = e,
            }
        }
        if Instant::now() >= give_up {
            return Err(last.into());
        }
        thread::sleep(Duration::from_millis(50));
    }
}

/// Agent role: generates the key pair, serves one auctioneer connection
/// and returns the session log.
pub fn run_agent(listener: &TcpListener, key_bits: usize, rng: ChaCha20Rng) -> Result<Vec<String>> {
    let mut agent = Agent::generate(key_bits, rng)?;
    let (stream, peer) = listener.accept()?;
    log::info!("agent: auctioneer connected from {peer}");
    let mut channel = tcp_channel(stream)?;
    let result = serve(&mut agent, &mut channel);
    let log = agent.into_log();
    result.map(|_| log)
}

/// Bidder role: fetches the session key from the auctioneer at `addr` and
/// submits one encrypted bid. The bid is range-checked against
/// `local_params` before connecting and against the session's widths after.
pub fn submit_bid<A: ToSocketAddrs>(
    addr: A,
    bid: &PlainBid,
    side: Side,
    local_params: SessionParams,
    patience: Duration,
    rng: &mut ChaCha20Rng,
) -> Result<()> {
    validate_bid(bid, local_params)?;
    let mut ch = tcp_channel(connect_retry(addr, patience)?)?;
    let params = match ch.recv()? {
        Message::SessionStart(p) => p,
        Message::SessionAbort(r) => return Err(Error::Aborted(r)),
        other => return Err(Error::violation(format!("expected SESSION_START, got {}", other.kind()))),
    };
    let pk = match ch.recv()? {
        Message::PubKey(pk) => pk,
        Message::SessionAbort(r) => return Err(Error::Aborted(r)),
        other => return Err(Error::violation(format!("expected PUBKEY, got {}", other.kind()))),
    };
    let sub = encrypt_bid(&pk, bid, side, params, rng)?;
    match ch.request(&Message::BidSubmit(sub))? {
        Message::BidAck => Ok(()),
        other => Err(Error::violation(format!("expected acknowledgement, got {}", other.kind()))),
    }
}

/// When the auctioneer stops waiting for bidders.
#[derive(Clone, Copy, Debug)]
pub struct Collection {
    pub sellers: Option<usize>,
    pub buyers: Option<usize>,
    /// Hard limit on the collection phase.
    pub deadline: Duration,
}

impl Collection {
    fn complete(&self, book: &BidBook) -> bool {
        match (self.sellers, self.buyers) {
            (None, None) => false,
            (s, b) => s.is_none_or(|s| book.sellers() >= s) && b.is_none_or(|b| book.buyers() >= b),
        }
    }
}

type Pending = (BidSubmission, mpsc::Sender<std::result::Result<(), String>>);

fn bidder_connection(stream: TcpStream, params: SessionParams, pk: crate::gm::PublicKey, tx: mpsc::Sender<Pending>) -> Result<u64> {
    let mut ch = tcp_channel(stream)?;
    ch.send(&Message::SessionStart(params))?;
    ch.send(&Message::PubKey(pk))?;
    let sub = match ch.recv()? {
        Message::BidSubmit(s) => s,
        other => {
            let _ = ch.send(&Message::SessionAbort(format!("expected BID_SUBMIT, got {}", other.kind())));
            return Ok(ch.bytes_transferred());
        }
    };
    let (reply_tx, reply_rx) = mpsc::channel();
    if tx.send((sub, reply_tx)).is_err() {
        ch.send(&Message::SessionAbort("bid collection closed".into()))?;
        return Ok(ch.bytes_transferred());
    }
    match reply_rx.recv() {
        Ok(Ok(())) => ch.send(&Message::BidAck)?,
        Ok(Err(reason)) => ch.send(&Message::SessionAbort(reason))?,
        Err(_) => ch.send(&Message::SessionAbort("bid collection closed".into()))?,
    }
    Ok(ch.bytes_transferred())
}

/// Bid collection over TCP: accepts bidders concurrently until the expected counts
/// are in or the deadline passes. Returns the book and the bidder traffic.
pub fn collect_bids(
    listener: &TcpListener,
    pk: &crate::gm::PublicKey,
    params: SessionParams,
    plan: Collection,
) -> Result<(BidBook, u64)> {
    listener.set_nonblocking(true)?;
    let (tx, rx) = mpsc::channel::<Pending>();
    let mut book = BidBook::new(pk.clone(), params);
    let mut workers = Vec::new();
    let give_up = Instant::now() + plan.deadline;
    let mut failure = None;

    while !plan.complete(&book) && Instant::now() < give_up {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::debug!("auctioneer: bidder connected from {peer}");
                stream.set_nonblocking(false)?;
                stream.set_read_timeout(Some(plan.deadline))?;
                let (pk, tx) = (pk.clone(), tx.clone());
                workers.push(thread::spawn(move || bidder_connection(stream, params, pk, tx)));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {}
            Err(e) => return Err(e.into()),
        }
        while let Ok((sub, reply)) = rx.try_recv() {
            let side = sub.side;
            match book.accept(sub) {
                Ok(()) => {
                    let _ = reply.send(Ok(()));
                }
                Err(e) => {
                    let _ = reply.send(Err(e.to_string()));
                    failure = Some(e);
                    break;
                }
            }
            log::debug!("auctioneer: {side} bid accepted");
        }
        if failure.is_some() {
            break;
        }
        thread::sleep(Duration::from_millis(2));
    }
    drop(tx);
    drop(rx);
    let mut bytes = 0;
    for w in workers {
        match w.join() {
            Ok(Ok(b)) => bytes += b,
            Ok(Err(e)) => log::warn!("auctioneer: bidder connection failed: {e}"),
            Err(_) => log::warn!("auctioneer: bidder thread panicked"),
        }
    }
    listener.set_nonblocking(false)?;
    match failure {
        Some(e) => Err(e),
        None => Ok((book, bytes)),
    }
}

/// Auctioneer role: connects to the agent, collects bids from `bidders`,
/// runs the auction and returns the report.
pub fn run_auctioneer<A: ToSocketAddrs>(
    cfg: &SessionConfig,
    agent_addr: A,
    bidders: &TcpListener,
    plan: Collection,
    patience: Duration,
) -> Result<SessionReport> {
    cfg.validate()?;
    let mut channel = tcp_channel(connect_retry(agent_addr, patience)?)?;
    let pk = start_session(&mut channel, cfg.params())?;
    log::info!("auctioneer: session key received, collecting bids");
    let (book, bidder_bytes) = match collect_bids(bidders, &pk, cfg.params(), plan) {
        Ok(v) => v,
        Err(e) => {
            let _ = channel.send(&Message::SessionAbort(e.to_string()));
            return Err(e);
        }
    };
    let (sellers, buyers) = book.into_sides();
    let mut ctx = GateContext::new(pk, channel, cfg.rng(AUCTIONEER_STREAM));
    let result = run_auction(&mut ctx, cfg, sellers, buyers);
    if let Err(e) = &result {
        if !matches!(e, Error::Aborted(_) | Error::Closed | Error::Io(_)) {
            let _ = ctx.channel_mut().send(&Message::SessionAbort(e.to_string()));
        }
    }
    let mut report = result?;
    report.bytes_transferred += bidder_bytes;
    Ok(report)
}

/// A full session with the agent in a thread behind a loopback TCP socket.
pub fn run_loopback_session(cfg: &SessionConfig, sellers: &[PlainBid], buyers: &[PlainBid]) -> Result<SessionReport> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let key_bits = cfg.key_bits;
    let agent_rng = cfg.rng(crate::auction::AGENT_STREAM);
    let agent = thread::spawn(move || run_agent(&listener, key_bits, agent_rng));
    let channel = tcp_channel(connect_retry(addr, Duration::from_secs(5))?)?;
    let report = run_session(channel, cfg, sellers, buyers);
    let agent_result = agent.join().map_err(|_| Error::violation("agent thread panicked"))?;
    let report = report?;
    agent_result?;
    Ok(report)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::sorting::SortAlgorithm;
    use rand::SeedableRng;

    #[test]
    fn loopback_session_on_worked_example() {
        let sellers: Vec<_> = [(200, 1), (500, 2), (100, 3), (450, 4), (150, 5)]
            .iter()
            .map(|&(v, i)| PlainBid::new(v, i))
            .collect();
        let buyers: Vec<_> = [(220, 1), (180, 2), (400, 3), (300, 4), (550, 5)]
            .iter()
            .map(|&(v, i)| PlainBid::new(v, i))
            .collect();
        let cfg = SessionConfig { bid_bits: 16, id_bits: 16, key_bits: 64, sort: SortAlgorithm::OeSort, seed: 5 };
        let report = run_loopback_session(&cfg, &sellers, &buyers).unwrap();
        assert_eq!(report.outcome.to_string(), "k=3\nseller_price=200\nbuyer_price=300\nwinning_sellers=3,5\nwinning_buyers=3,5");
        assert!(report.bytes_transferred > 0);
    }

    #[test]
    fn auctioneer_with_bidders_over_tcp() {
        let agent_listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let agent_addr = agent_listener.local_addr().unwrap();
        let agent = thread::spawn(move || run_agent(&agent_listener, 64, ChaCha20Rng::seed_from_u64(1)));
        let bidders = TcpListener::bind("127.0.0.1:0").unwrap();
        let bid_addr = bidders.local_addr().unwrap();
        let params = SessionParams { bid_bits: 8, id_bits: 16 };
        let mut clients = Vec::new();
        for (i, (side, v)) in [(Side::Seller, 10), (Side::Seller, 20), (Side::Seller, 30), (Side::Buyer, 40), (Side::Buyer, 25), (Side::Buyer, 5)]
            .into_iter()
            .enumerate()
        {
            clients.push(thread::spawn(move || {
                let mut rng = ChaCha20Rng::seed_from_u64(100 + i as u64);
                submit_bid(bid_addr, &PlainBid::new(v, i as u64 + 1), side, params, Duration::from_secs(5), &mut rng)
            }));
        }
        let cfg = SessionConfig { bid_bits: 8, id_bits: 16, key_bits: 64, sort: SortAlgorithm::SeSort, seed: 2 };
        let plan = Collection { sellers: Some(3), buyers: Some(3), deadline: Duration::from_secs(20) };
        let report = run_auctioneer(&cfg, agent_addr, &bidders, plan, Duration::from_secs(5)).unwrap();
        for c in clients {
            c.join().unwrap().unwrap();
        }
        agent.join().unwrap().unwrap();
        // sellers 10,20,30 / buyers 40,25,5: k=2, seller 1 and buyer 4 trade
        assert_eq!(report.outcome.k, 2);
        assert_eq!(report.outcome.winning_seller_ids.iter().copied().collect::<Vec<_>>(), vec![1]);
        assert_eq!(report.outcome.winning_buyer_ids.iter().copied().collect::<Vec<_>>(), vec![4]);
        assert_eq!((report.outcome.seller_price, report.outcome.buyer_price), (Some(20), Some(25)));
    }

    #[test]
    fn bidder_rejects_overflow_before_connecting() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        // nothing listens on port 9 of this address; the check must fire first
        let err = submit_bid(
            "127.0.0.1:9",
            &PlainBid::new(256, 1),
            Side::Buyer,
            SessionParams { bid_bits: 8, id_bits: 16 },
            Duration::ZERO,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn unreachable_agent_is_a_connect_error() {
        let free = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = free.local_addr().unwrap();
        drop(free);
        let bidders = TcpListener::bind("127.0.0.1:0").unwrap();
        let plan = Collection { sellers: Some(1), buyers: Some(1), deadline: Duration::from_secs(1) };
        let err = run_auctioneer(&SessionConfig { key_bits: 64, ..Default::default() }, addr, &bidders, plan, Duration::from_millis(200))
            .unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
