//! Privacy-preserving double auction.
//!
//! Bidders encrypt their bids bit by bit under Goldwasser-Micali. The
//! auctioneer sorts both sides with an oblivious sorting network, evaluating
//! every comparison and swap as a boolean circuit; each AND gate takes one
//! round trip to the agent, who holds the secret key but only ever sees
//! masked bits. The agent finally learns the trade index and decrypts the
//! clearing prices and the shuffled winner IDs, nothing else.

pub mod agent;
pub mod auction;
pub mod bench;
pub mod circuits;
pub mod codec;
pub mod error;
pub mod gate;
pub mod gm;
pub mod net;
pub mod sorting;
pub mod wire;

pub use auction::{mcafee_reference, AuctionOutcome, PlainBid, SessionConfig, SessionReport, Side};
pub use error::{Error, Result};
pub use gm::{keygen, Ciphertext, EncryptedBitVector, PublicKey, SecretKey};
pub use sorting::{BidRecord, SortAlgorithm, SortDirection};
