use std::sync::OnceLock;

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use dauction::auction::{BidSubmission, OutcomeResult, SessionParams};
use dauction::gate::{AndRequest, AndResponse};
use dauction::gm::{jacobi, keygen, Ciphertext, EncryptedBitVector, PublicKey, SecretKey};
use dauction::sorting::{apply_plain, network};
use dauction::wire::Message;
use dauction::{BidRecord, Side, SortAlgorithm, SortDirection};

fn key() -> &'static (PublicKey, SecretKey) {
    static KEY: OnceLock<(PublicKey, SecretKey)> = OnceLock::new();
    KEY.get_or_init(|| keygen(128, &mut ChaCha20Rng::seed_from_u64(99)).unwrap())
}

fn euler_jacobi(a: u64, n: u64) -> i8 {
    // product of Legendre symbols over the factorization of odd n
    let mut m = n;
    let mut out = 1i8;
    let mut p = 3;
    while m > 1 {
        while m % p == 0 {
            let r = a % p;
            let l = if r == 0 {
                0
            } else {
                let e = BigUint::from(r).modpow(&BigUint::from((p - 1) / 2), &BigUint::from(p));
                if e == BigUint::from(1u32) {
                    1
                } else {
                    -1
                }
            };
            out *= l;
            m /= p;
        }
        p += 2;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn jacobi_agrees_with_euler(a in 0u64..5000, n in (1u64..2000).prop_map(|k| 2 * k + 1)) {
        prop_assert_eq!(jacobi(&BigUint::from(a), &BigUint::from(n)), euler_jacobi(a, n));
    }

    #[test]
    fn value_roundtrip(v in any::<u64>(), w in 1usize..=64, seed in any::<u64>()) {
        let (pk, sk) = key();
        let v = if w == 64 { v } else { v & ((1 << w) - 1) };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let e = pk.encrypt_value(v, w, &mut rng).unwrap();
        prop_assert_eq!(e.width(), w);
        prop_assert_eq!(sk.decrypt_value(&e).unwrap(), v);
        let r = pk.rerandomize_vector(&e, &mut rng);
        prop_assert_ne!(&r, &e);
        prop_assert_eq!(sk.decrypt_value(&r).unwrap(), v);
    }

    #[test]
    fn xor_is_homomorphic(a in any::<bool>(), b in any::<bool>(), seed in any::<u64>()) {
        let (pk, sk) = key();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (ca, cb) = (pk.encrypt(a, &mut rng), pk.encrypt(b, &mut rng));
        prop_assert_eq!(sk.decrypt(&pk.xor(&ca, &cb)).unwrap(), a ^ b);
        // ciphertexts of 1 are never squares, ciphertexts of 0 always are
        prop_assert_eq!(sk.is_residue(ca.value()), !a);
    }

    #[test]
    fn networks_sort_like_std(mut v in proptest::collection::vec(0u16..50, 1..=32), desc in any::<bool>()) {
        let dir = SortDirection { ascending: !desc };
        let mut want = v.clone();
        want.sort_unstable();
        if desc {
            want.reverse();
        }
        let n = v.len();
        let net = network(SortAlgorithm::SeSort, n, dir).unwrap();
        let mut s = v.clone();
        apply_plain(&net, &mut s);
        prop_assert_eq!(&s, &want);
        let p = n.next_power_of_two();
        v.resize(p, if desc { 0 } else { u16::MAX });
        want.resize(p, if desc { 0 } else { u16::MAX });
        for alg in [SortAlgorithm::BiSort, SortAlgorithm::OeSort] {
            let mut s = v.clone();
            apply_plain(&network(alg, p, dir).unwrap(), &mut s);
            prop_assert_eq!(&s, &want);
        }
    }

    #[test]
    fn typed_messages_roundtrip(
        bits in proptest::collection::vec(any::<bool>(), 1..20),
        ids in proptest::collection::vec(any::<u64>(), 0..6),
        k in any::<u32>(),
        reason in ".{0,40}",
        seed in any::<u64>(),
    ) {
        let (pk, _) = key();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cts: Vec<Ciphertext> = bits.iter().map(|&b| pk.encrypt(b, &mut rng)).collect();
        let ebv = EncryptedBitVector::from_bits(cts.clone());
        let msgs = vec![
            Message::PubKey(pk.clone()),
            Message::BidSubmit(BidSubmission { side: Side::Buyer, record: BidRecord { bid: ebv.clone(), id: ebv.clone() } }),
            Message::BidAck,
            Message::AndRequest(AndRequest { pairs: cts.iter().cloned().zip(cts.iter().rev().cloned()).collect() }),
            Message::AndResponse(AndResponse { products: cts.clone() }),
            Message::CmpBits(cts.clone()),
            Message::KResult(k),
            Message::OutcomeResult(OutcomeResult { seller_price: 1, buyer_price: 2, seller_ids: ids.clone(), buyer_ids: ids.clone() }),
            Message::SessionStart(SessionParams { bid_bits: k, id_bits: 16 }),
            Message::SessionAbort(reason.clone()),
        ];
        for m in msgs {
            let raw = m.encode().unwrap();
            prop_assert_eq!(raw[0], m.msg_type() as u8);
            prop_assert_eq!(Message::decode(&raw).unwrap(), m);
        }
    }
}
