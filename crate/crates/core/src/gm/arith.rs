//! Number theory used by key generation and decryption.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

fn low_u32(v: &BigUint) -> u32 {
    v.iter_u32_digits().next().unwrap_or(0)
}

/// Jacobi symbol `(a/n)` for odd `n`. Returns -1, 0 or 1.
///
/// Panics if `n` is even.
pub fn jacobi(a: &BigUint, n: &BigUint) -> i8 {
    assert!(n.is_odd(), "jacobi symbol needs an odd modulus");
    let mut a = a % n;
    let mut n = n.clone();
    let mut t = 1i8;
    while !a.is_zero() {
        let tz = a.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            a >>= tz;
            let r = low_u32(&n) & 7;
            if tz % 2 == 1 && (r == 3 || r == 5) {
                t = -t;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if low_u32(&a) & 3 == 3 && low_u32(&n) & 3 == 3 {
            t = -t;
        }
        a %= &n;
    }
    if n.is_one() {
        t
    } else {
        0
    }
}

/// Miller-Rabin with `rounds` random bases; error probability at most 4^-rounds.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    // n > 251 from here on
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Samples an odd candidate with exactly `bits` bits and the top two bits
/// set, so the product of two such values has exactly `2 * bits` bits.
pub(crate) fn prime_candidate<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> BigUint {
    let mut c = rng.gen_biguint(bits as u64);
    c.set_bit(bits as u64 - 1, true);
    c.set_bit(bits as u64 - 2, true);
    c.set_bit(0, true);
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Textbook Jacobi via Euler's criterion on each prime factor.
    fn jacobi_oracle(a: u64, n: u64) -> i8 {
        let mut m = n;
        let mut result = 1i8;
        let mut p = 3;
        while m > 1 {
            while m % p == 0 {
                m /= p;
                let am = a % p;
                let legendre = if am == 0 {
                    0
                } else if (1..p).any(|y| y * y % p == am) {
                    1
                } else {
                    -1
                };
                result *= legendre;
            }
            p += 2;
        }
        result
    }

    #[test]
    fn jacobi_matches_factor_oracle() {
        for n in (3u64..200).step_by(2) {
            for a in 0..2 * n {
                assert_eq!(
                    jacobi(&BigUint::from(a), &BigUint::from(n)),
                    jacobi_oracle(a, n),
                    "({a}/{n})"
                );
            }
        }
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let sieve_prime = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
        for n in 0u64..5000 {
            assert_eq!(
                is_probable_prime(&BigUint::from(n), 40, &mut rng),
                sieve_prime(n),
                "n = {n}"
            );
        }
    }

    #[test]
    fn carmichael_numbers_are_composite() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265] {
            assert!(!is_probable_prime(&BigUint::from(n), 40, &mut rng));
        }
    }

    #[test]
    fn candidate_has_requested_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for bits in [8usize, 17, 64, 512] {
            let c = prime_candidate(bits, &mut rng);
            assert_eq!(c.bits(), bits as u64);
            assert!(c.is_odd());
        }
    }
}
