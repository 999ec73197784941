//! Oblivious sorting of encrypted bid records.
//!
//! Each algorithm is first expanded into a fixed list of compare-exchange
//! operations that depends only on the input length. The list is then
//! scheduled into layers of wire-disjoint comparators; every layer costs
//! `L` comparison rounds plus one swap round, whatever its width.
//!
//! * selection: every pair `(i, j)`, `i < j`, in row-major order,
//!   `n(n-1)/2` comparators;
//! * bitonic: recursive bitonic sort/merge, `n/2 * k(k+1)/2` comparators
//!   for `n = 2^k`;
//! * odd-even merge: recursive merge of the even and odd subsequences,
//!   `(k^2 - k + 4) * 2^(k-2) - 1` comparators for `n = 2^k`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::{cmp_batch, cond_swap_batch, ComparisonMode};
use crate::error::{Error, Result};
use crate::gate::GateContext;
use crate::gm::{EncryptedBitVector, PublicKey};
use crate::wire::Channel;

/// An encrypted bid travelling with its encrypted owner ID.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BidRecord {
    pub bid: EncryptedBitVector,
    pub id: EncryptedBitVector,
}

/// Identifier reserved for padding records.
pub const PAD_ID: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SortDirection {
    pub ascending: bool,
}

impl SortDirection {
    /// Sellers: non-descending bids.
    pub const ASCENDING: Self = Self { ascending: true };
    /// Buyers: non-ascending bids.
    pub const DESCENDING: Self = Self { ascending: false };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortAlgorithm {
    SeSort,
    BiSort,
    OeSort,
}

impl SortAlgorithm {
    pub const ALL: [SortAlgorithm; 3] = [SortAlgorithm::SeSort, SortAlgorithm::BiSort, SortAlgorithm::OeSort];

    pub fn as_str(&self) -> &'static str {
        match self {
            SortAlgorithm::SeSort => "sesort",
            SortAlgorithm::BiSort => "bisort",
            SortAlgorithm::OeSort => "oesort",
        }
    }

    pub fn needs_power_of_two(&self) -> bool {
        !matches!(self, SortAlgorithm::SeSort)
    }
}

impl fmt::Display for SortAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SortAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sesort" => Ok(SortAlgorithm::SeSort),
            "bisort" => Ok(SortAlgorithm::BiSort),
            "oesort" => Ok(SortAlgorithm::OeSort),
            other => Err(Error::Precondition(format!("unknown sort algorithm {other:?}"))),
        }
    }
}

/// Compare-exchange on positions `low < high`: afterwards
/// `a[low] <= a[high]` when ascending, `a[low] >= a[high]` otherwise.
/// Equal elements are never exchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Comparator {
    pub low: usize,
    pub high: usize,
    pub ascending: bool,
}

/// Positions touched by the compare-exchanges of one sort, in execution order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ComparatorTrace(pub Vec<(usize, usize)>);

#[derive(Clone, Debug)]
pub struct SortOutput {
    pub records: Vec<BidRecord>,
    pub trace: ComparatorTrace,
}

fn log2_exact(alg: SortAlgorithm, n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Precondition(format!("{alg} needs a power-of-two length, got {n}")));
    }
    Ok(n.trailing_zeros())
}

pub fn comparator_count(alg: SortAlgorithm, n: usize) -> Result<u64> {
    if n == 0 {
        return Err(Error::Precondition("cannot sort an empty sequence".into()));
    }
    let n64 = n as u64;
    Ok(match alg {
        SortAlgorithm::SeSort => n64 * (n64 - 1) / 2,
        SortAlgorithm::BiSort => {
            let k = log2_exact(alg, n)? as u64;
            n64 / 2 * (k * (k + 1) / 2)
        }
        SortAlgorithm::OeSort => {
            let k = log2_exact(alg, n)? as u64;
            if k == 0 {
                0
            } else {
                (k * k - k + 4) * n64 / 4 - 1
            }
        }
    })
}

/// Expands `alg` into its comparator list for `n` inputs.
pub fn network(alg: SortAlgorithm, n: usize, dir: SortDirection) -> Result<Vec<Comparator>> {
    if n == 0 {
        return Err(Error::Precondition("cannot sort an empty sequence".into()));
    }
    let mut out = Vec::new();
    match alg {
        SortAlgorithm::SeSort => {
            for i in 0..n {
                for j in i + 1..n {
                    out.push(Comparator { low: i, high: j, ascending: dir.ascending });
                }
            }
        }
        SortAlgorithm::BiSort => {
            log2_exact(alg, n)?;
            bitonic_sort(0, n, dir.ascending, &mut out);
        }
        SortAlgorithm::OeSort => {
            log2_exact(alg, n)?;
            let idx: Vec<usize> = (0..n).collect();
            odd_even_sort(&idx, dir.ascending, &mut out);
        }
    }
    Ok(out)
}

fn bitonic_sort(lo: usize, n: usize, up: bool, out: &mut Vec<Comparator>) {
    if n <= 1 {
        return;
    }
    let m = n / 2;
    bitonic_sort(lo, m, true, out);
    bitonic_sort(lo + m, m, false, out);
    bitonic_merge(lo, n, up, out);
}

fn bitonic_merge(lo: usize, n: usize, up: bool, out: &mut Vec<Comparator>) {
    if n <= 1 {
        return;
    }
    let m = n / 2;
    for i in lo..lo + m {
        out.push(Comparator { low: i, high: i + m, ascending: up });
    }
    bitonic_merge(lo, m, up, out);
    bitonic_merge(lo + m, m, up, out);
}

fn odd_even_sort(idx: &[usize], up: bool, out: &mut Vec<Comparator>) {
    if idx.len() <= 1 {
        return;
    }
    let (first, second) = idx.split_at(idx.len() / 2);
    odd_even_sort(first, up, out);
    odd_even_sort(second, up, out);
    odd_even_merge(idx, up, out);
}

/// Merges two sorted halves of `idx` (positions, not values).
fn odd_even_merge(idx: &[usize], up: bool, out: &mut Vec<Comparator>) {
    let n = idx.len();
    if n > 2 {
        let evens: Vec<usize> = idx.iter().copied().step_by(2).collect();
        let odds: Vec<usize> = idx.iter().copied().skip(1).step_by(2).collect();
        odd_even_merge(&evens, up, out);
        odd_even_merge(&odds, up, out);
        for i in (1..n - 1).step_by(2) {
            out.push(Comparator { low: idx[i], high: idx[i + 1], ascending: up });
        }
    } else if n == 2 {
        out.push(Comparator { low: idx[0], high: idx[1], ascending: up });
    }
}

/// Groups comparators into layers; each comparator lands one layer after
/// the latest earlier comparator sharing a position with it.
pub fn layers(net: &[Comparator]) -> Vec<Vec<Comparator>> {
    let width = net.iter().map(|c| c.high + 1).max().unwrap_or(0);
    let mut depth = vec![0usize; width];
    let mut out: Vec<Vec<Comparator>> = Vec::new();
    for c in net {
        let d = depth[c.low].max(depth[c.high]);
        if out.len() <= d {
            out.push(Vec::new());
        }
        out[d].push(*c);
        depth[c.low] = d + 1;
        depth[c.high] = d + 1;
    }
    out
}

/// Runs a network on plaintext values.
pub fn apply_plain<T: Ord>(net: &[Comparator], values: &mut [T]) {
    for c in net {
        let swap = if c.ascending { values[c.low] > values[c.high] } else { values[c.high] > values[c.low] };
        if swap {
            values.swap(c.low, c.high);
        }
    }
}

fn check_uniform(records: &[BidRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Err(Error::Precondition("cannot sort an empty sequence".into()));
    };
    let (bw, iw) = (first.bid.width(), first.id.width());
    if records.iter().any(|r| r.bid.width() != bw || r.id.width() != iw) {
        return Err(Error::Dimension("records in one sort must share bid and ID widths".into()));
    }
    Ok(())
}

/// Sorts `records` by bid with the network of `alg`.
pub fn private_sort<C: Channel>(
    ctx: &mut GateContext<C>,
    alg: SortAlgorithm,
    records: Vec<BidRecord>,
    dir: SortDirection,
) -> Result<SortOutput> {
    check_uniform(&records)?;
    let net = network(alg, records.len(), dir)?;
    let mut slots = records;
    let mut trace = Vec::with_capacity(net.len());
    for layer in layers(&net) {
        let operands: Vec<_> = layer
            .iter()
            .map(|c| {
                let (lo, hi) = (&slots[c.low].bid, &slots[c.high].bid);
                if c.ascending {
                    (lo, hi)
                } else {
                    (hi, lo)
                }
            })
            .collect();
        let swaps = cmp_batch(ctx, &operands, ComparisonMode::GREATER)?;
        let items: Vec<_> = layer
            .iter()
            .zip(&swaps)
            .map(|(c, z)| (z, &slots[c.low], &slots[c.high]))
            .collect();
        let exchanged = cond_swap_batch(ctx, &items)?;
        for (c, (lo, hi)) in layer.iter().zip(exchanged) {
            slots[c.low] = lo;
            slots[c.high] = hi;
            trace.push((c.low, c.high));
        }
    }
    Ok(SortOutput { records: slots, trace: ComparatorTrace(trace) })
}

pub fn se_sort<C: Channel>(ctx: &mut GateContext<C>, records: Vec<BidRecord>, dir: SortDirection) -> Result<SortOutput> {
    private_sort(ctx, SortAlgorithm::SeSort, records, dir)
}

pub fn bi_sort<C: Channel>(ctx: &mut GateContext<C>, records: Vec<BidRecord>, dir: SortDirection) -> Result<SortOutput> {
    private_sort(ctx, SortAlgorithm::BiSort, records, dir)
}

pub fn oe_sort<C: Channel>(ctx: &mut GateContext<C>, records: Vec<BidRecord>, dir: SortDirection) -> Result<SortOutput> {
    private_sort(ctx, SortAlgorithm::OeSort, records, dir)
}

/// How a sequence was padded, so the sorted result can be cut back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PadInfo {
    pub pad_count: usize,
    /// Bids carry one extra leading guard bit while padded.
    pub guarded: bool,
}

impl PadInfo {
    /// Drops the trailing pads and the guard bit.
    pub fn strip(&self, mut sorted: Vec<BidRecord>) -> Vec<BidRecord> {
        sorted.truncate(sorted.len() - self.pad_count);
        if self.guarded {
            for r in sorted.iter_mut() {
                let bits = std::mem::replace(&mut r.bid, EncryptedBitVector::from_bits(Vec::new())).into_bits();
                r.bid = EncryptedBitVector::from_bits(bits[1..].to_vec());
            }
        }
        sorted
    }
}

/// Extends `records` to the next power of two with records that sort to the
/// losing end: bid `2^L - 1` when ascending, 0 when descending, ID
/// [`PAD_ID`].
///
/// A leading guard bit is added to every bid (0 on real records and 1 on
/// pads when ascending, the reverse when descending) so pads compare
/// strictly worse than any real bid, including ties at the extreme value.
pub fn pad_to_pow2<R: Rng + ?Sized>(
    records: Vec<BidRecord>,
    dir: SortDirection,
    pk: &PublicKey,
    rng: &mut R,
) -> Result<(Vec<BidRecord>, PadInfo)> {
    check_uniform(&records)?;
    let n = records.len();
    let target = n.next_power_of_two();
    if target == n {
        return Ok((records, PadInfo { pad_count: 0, guarded: false }));
    }
    let (bid_bits, id_bits) = (records[0].bid.width(), records[0].id.width());
    let real_guard = !dir.ascending;
    let pad_value = if dir.ascending { u64::MAX >> (64 - bid_bits) } else { 0 };

    let mut out: Vec<BidRecord> = records
        .into_iter()
        .map(|r| {
            let mut bits = vec![pk.encrypt(real_guard, rng)];
            bits.extend(r.bid.into_bits());
            BidRecord { bid: EncryptedBitVector::from_bits(bits), id: r.id }
        })
        .collect();
    for _ in n..target {
        let mut bits = vec![pk.encrypt(!real_guard, rng)];
        bits.extend(pk.encrypt_value(pad_value, bid_bits, rng)?.into_bits());
        out.push(BidRecord {
            bid: EncryptedBitVector::from_bits(bits),
            id: pk.encrypt_value(PAD_ID, id_bits, rng)?,
        });
    }
    Ok((out, PadInfo { pad_count: target - n, guarded: true }))
}
