//! Comparison and conditional-swap circuits built from XOR and AND gates.
//!
//! The comparator is a ripple chain from the least significant bit upwards:
//! `c[i+1] = x[i] ^ ((x[i] ^ c[i]) & (y[i] ^ c[i]))`, one AND per bit. With
//! initial carry 0 the final carry is `[x > y]`, with initial carry 1 it is
//! `[x >= y]`.
//!
//! The batched forms evaluate many independent instances side by side so
//! that each ripple stage (or each swap) costs one message round.

use crate::error::{Error, Result};
use crate::gate::GateContext;
use crate::gm::{Ciphertext, EncryptedBitVector};
use crate::sorting::BidRecord;
use crate::wire::Channel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComparisonMode {
    pub initial_carry: bool,
}

impl ComparisonMode {
    pub const GREATER: Self = Self { initial_carry: false };
    pub const GREATER_OR_EQUAL: Self = Self { initial_carry: true };
}

pub fn cmp<C: Channel>(
    ctx: &mut GateContext<C>,
    x: &EncryptedBitVector,
    y: &EncryptedBitVector,
    mode: ComparisonMode,
) -> Result<Ciphertext> {
    Ok(cmp_batch(ctx, &[(x, y)], mode)?.pop().expect("one comparison"))
}

/// Compares every `(x, y)` pair. All operands must share one width `L`;
/// the batch costs exactly `L` rounds and `L` AND gates per pair.
pub fn cmp_batch<C: Channel>(
    ctx: &mut GateContext<C>,
    pairs: &[(&EncryptedBitVector, &EncryptedBitVector)],
    mode: ComparisonMode,
) -> Result<Vec<Ciphertext>> {
    let Some((first, _)) = pairs.first() else {
        return Ok(Vec::new());
    };
    let width = first.width();
    if let Some((x, y)) = pairs.iter().find(|(x, y)| x.width() != width || y.width() != width) {
        return Err(Error::Dimension(format!(
            "comparison operands of widths {} and {} in a batch of width {width}",
            x.width(),
            y.width()
        )));
    }

    let mut carries: Vec<Ciphertext> = pairs.iter().map(|_| ctx.encrypt(mode.initial_carry)).collect();
    for i in 0..width {
        let operands: Vec<(Ciphertext, Ciphertext)> = pairs
            .iter()
            .zip(&carries)
            .map(|((x, y), c)| (ctx.xor(x.lsb(i), c), ctx.xor(y.lsb(i), c)))
            .collect();
        let refs: Vec<_> = operands.iter().map(|(a, b)| (a, b)).collect();
        let ands = ctx.and_batch(&refs)?;
        carries = pairs
            .iter()
            .zip(&ands)
            .map(|((x, _), t)| ctx.xor(x.lsb(i), t))
            .collect();
    }
    Ok(carries)
}

pub fn cond_swap<C: Channel>(
    ctx: &mut GateContext<C>,
    z: &Ciphertext,
    a: &BidRecord,
    b: &BidRecord,
) -> Result<(BidRecord, BidRecord)> {
    Ok(cond_swap_batch(ctx, &[(z, a, b)])?.pop().expect("one swap"))
}

/// Oblivious swap of whole records: for every bit `m = z & (a ^ b)`,
/// `a' = a ^ m`, `b' = b ^ m`. Costs one round and `L + L'` AND gates per
/// item regardless of `z`.
pub fn cond_swap_batch<C: Channel>(
    ctx: &mut GateContext<C>,
    items: &[(&Ciphertext, &BidRecord, &BidRecord)],
) -> Result<Vec<(BidRecord, BidRecord)>> {
    for (_, a, b) in items {
        if a.bid.width() != b.bid.width() || a.id.width() != b.id.width() {
            return Err(Error::Dimension(format!(
                "cannot swap records of widths ({}, {}) and ({}, {})",
                a.bid.width(),
                a.id.width(),
                b.bid.width(),
                b.id.width()
            )));
        }
    }

    let diffs: Vec<Vec<Ciphertext>> = items
        .iter()
        .map(|(_, a, b)| record_bits(a).zip(record_bits(b)).map(|(x, y)| ctx.xor(x, y)).collect())
        .collect();
    let refs: Vec<(&Ciphertext, &Ciphertext)> = items
        .iter()
        .zip(&diffs)
        .flat_map(|((z, _, _), d)| d.iter().map(move |bit| (*z, bit)))
        .collect();
    let masks = ctx.and_batch(&refs)?;

    let mut masks = masks.into_iter();
    let out = items
        .iter()
        .map(|(_, a, b)| {
            let m: Vec<Ciphertext> = masks.by_ref().take(a.bid.width() + a.id.width()).collect();
            (apply_mask(ctx, a, &m), apply_mask(ctx, b, &m))
        })
        .collect();
    Ok(out)
}

fn record_bits(r: &BidRecord) -> impl Iterator<Item = &Ciphertext> {
    r.bid.bits().iter().chain(r.id.bits())
}

fn apply_mask<C: Channel>(ctx: &GateContext<C>, r: &BidRecord, mask: &[Ciphertext]) -> BidRecord {
    let (bid_mask, id_mask) = mask.split_at(r.bid.width());
    let xor_all = |v: &EncryptedBitVector, m: &[Ciphertext]| {
        EncryptedBitVector::from_bits(v.bits().iter().zip(m).map(|(x, y)| ctx.xor(x, y)).collect())
    };
    BidRecord { bid: xor_all(&r.bid, bid_mask), id: xor_all(&r.id, id_mask) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::LocalAgent;
    use crate::gm::{keygen, SecretKey};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn setup(seed: u64) -> (GateContext<LocalAgent>, SecretKey) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pk, sk) = keygen(64, &mut rng).unwrap();
        let agent = LocalAgent::new(pk.clone(), sk.clone(), ChaCha20Rng::seed_from_u64(seed ^ 0xa5));
        (GateContext::new(pk, agent, ChaCha20Rng::seed_from_u64(seed ^ 0x5a)), sk)
    }

    fn enc(ctx: &mut GateContext<LocalAgent>, v: u64, w: usize) -> EncryptedBitVector {
        let pk = ctx.pk().clone();
        pk.encrypt_value(v, w, ctx.rng()).unwrap()
    }

    fn record(ctx: &mut GateContext<LocalAgent>, bid: u64, id: u64) -> BidRecord {
        BidRecord { bid: enc(ctx, bid, 8), id: enc(ctx, id, 16) }
    }

    fn open(sk: &SecretKey, r: &BidRecord) -> (u64, u64) {
        (sk.decrypt_value(&r.bid).unwrap(), sk.decrypt_value(&r.id).unwrap())
    }

    #[test]
    fn five_greater_than_three() {
        let (mut ctx, sk) = setup(1);
        let x = enc(&mut ctx, 5, 4);
        let y = enc(&mut ctx, 3, 4);
        assert!(sk.decrypt(&cmp(&mut ctx, &x, &y, ComparisonMode::GREATER).unwrap()).unwrap());
        assert!(!sk.decrypt(&cmp(&mut ctx, &y, &x, ComparisonMode::GREATER).unwrap()).unwrap());
    }

    #[test]
    fn equal_operands_depend_on_mode() {
        let (mut ctx, sk) = setup(2);
        for v in [0u64, 7, 200, 255] {
            let x = enc(&mut ctx, v, 8);
            let y = enc(&mut ctx, v, 8);
            assert!(!sk.decrypt(&cmp(&mut ctx, &x, &y, ComparisonMode::GREATER).unwrap()).unwrap());
            assert!(sk.decrypt(&cmp(&mut ctx, &x, &y, ComparisonMode::GREATER_OR_EQUAL).unwrap()).unwrap());
        }
    }

    #[test]
    fn comparison_uses_width_and_gates() {
        let (mut ctx, _) = setup(3);
        for w in [1usize, 4, 8, 16] {
            let x = enc(&mut ctx, 1, w);
            let y = enc(&mut ctx, 0, w);
            let before = (ctx.and_gates(), ctx.rounds());
            cmp(&mut ctx, &x, &y, ComparisonMode::GREATER).unwrap();
            assert_eq!(ctx.and_gates() - before.0, w as u64);
            assert_eq!(ctx.rounds() - before.1, w as u64);
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let (mut ctx, _) = setup(4);
        let x = enc(&mut ctx, 1, 4);
        let y = enc(&mut ctx, 1, 5);
        assert!(matches!(cmp(&mut ctx, &x, &y, ComparisonMode::GREATER), Err(Error::Dimension(_))));
        let a = record(&mut ctx, 1, 1);
        let b = BidRecord { bid: enc(&mut ctx, 1, 4), id: enc(&mut ctx, 1, 16) };
        let z = ctx.encrypt(true);
        assert!(matches!(cond_swap(&mut ctx, &z, &a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn batched_comparisons_match_plaintext() {
        let (mut ctx, sk) = setup(5);
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        let vals: Vec<(u64, u64)> = (0..40).map(|_| (rng.gen_range(0..256), rng.gen_range(0..256))).collect();
        let enc_vals: Vec<_> = vals.iter().map(|&(x, y)| (enc(&mut ctx, x, 8), enc(&mut ctx, y, 8))).collect();
        let refs: Vec<_> = enc_vals.iter().map(|(x, y)| (x, y)).collect();
        let rounds = ctx.rounds();
        let out = cmp_batch(&mut ctx, &refs, ComparisonMode::GREATER_OR_EQUAL).unwrap();
        assert_eq!(ctx.rounds() - rounds, 8);
        for (c, (x, y)) in out.iter().zip(&vals) {
            assert_eq!(sk.decrypt(c).unwrap(), x >= y);
        }
    }

    #[test]
    fn swap_zero_is_identity_and_swap_one_exchanges() {
        let (mut ctx, sk) = setup(6);
        let a = record(&mut ctx, 5, 1);
        let b = record(&mut ctx, 3, 2);
        let z0 = ctx.encrypt(false);
        let (p, q) = cond_swap(&mut ctx, &z0, &a, &b).unwrap();
        assert_eq!((open(&sk, &p), open(&sk, &q)), ((5, 1), (3, 2)));
        let z1 = ctx.encrypt(true);
        let gates = ctx.and_gates();
        let (p, q) = cond_swap(&mut ctx, &z1, &a, &b).unwrap();
        assert_eq!(ctx.and_gates() - gates, 8 + 16);
        assert_eq!((open(&sk, &p), open(&sk, &q)), ((3, 2), (5, 1)));
    }

    #[test]
    fn compare_then_swap_orders_pairs() {
        let (mut ctx, sk) = setup(7);
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..30 {
            let (x, y) = (rng.gen_range(0..256), rng.gen_range(0..256));
            let a = record(&mut ctx, x, 10);
            let b = record(&mut ctx, y, 20);
            let z = cmp(&mut ctx, &a.bid, &b.bid, ComparisonMode::GREATER).unwrap();
            let (lo, hi) = cond_swap(&mut ctx, &z, &a, &b).unwrap();
            let expect = if x > y { ((y, 20), (x, 10)) } else { ((x, 10), (y, 20)) };
            assert_eq!((open(&sk, &lo), open(&sk, &hi)), expect);
        }
    }
}
