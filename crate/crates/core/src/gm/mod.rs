//! Goldwasser-Micali bit encryption.
//!
//! A bit `m` encrypts to `y^2 * x^m mod n` for a uniformly drawn unit `y`,
//! where `x` is a non-residue modulo both prime factors of `n`. A ciphertext
//! decrypts to 0 exactly when it is a quadratic residue. Multiplying two
//! ciphertexts modulo `n` XORs their plaintexts, and multiplying by a fresh
//! encryption of 0 re-randomizes a ciphertext without touching its plaintext.
//!
//! Integers wider than one bit are carried as [`EncryptedBitVector`]s, one
//! ciphertext per bit, most significant bit first.

mod arith;

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

pub use arith::{is_probable_prime, jacobi};

/// Modulus size used when no size is requested.
pub const DEFAULT_KEY_BITS: usize = 1024;
pub const MIN_KEY_BITS: usize = 16;
/// 40 rounds bound the false-prime probability by 2^-80.
pub const MILLER_RABIN_ROUNDS: usize = 40;
/// Moduli below this size test every encryption nonce for coprimality.
pub const UNIT_CHECK_BITS: u64 = 256;

const MAX_PRIME_CANDIDATES_PER_BIT: usize = 200;
const MAX_RESIDUE_CANDIDATES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("key size of {0} bits is below the {MIN_KEY_BITS}-bit minimum")]
    KeyTooSmall(usize),
    #[error("key generation failed: {0}")]
    GenerationFailed(&'static str),
    #[error("invalid key: {0}")]
    InvalidKey(&'static str),
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("value {value} does not fit in {width} bits")]
    Overflow { value: u64, width: usize },
    #[error("bit width must be in 1..=64, got {0}")]
    InvalidWidth(usize),
}

type CryptoResult<T> = Result<T, CryptoError>;

/// Public key `(n, x)`.
#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    x: BigUint,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits, n = {}, x = {})", self.n.bits(), self.n, self.x)
    }
}

impl PublicKey {
    /// Checks everything that can be checked without the factorization:
    /// `n` odd, `x` in `[2, n-1]`, `gcd(x, n) = 1` and Jacobi `(x/n) = +1`.
    pub fn new(n: BigUint, x: BigUint) -> CryptoResult<Self> {
        if n < BigUint::from(15u32) || n.is_even() {
            return Err(CryptoError::InvalidKey("modulus must be odd and at least 15"));
        }
        if x < BigUint::from(2u32) || x >= n {
            return Err(CryptoError::InvalidKey("x outside [2, n-1]"));
        }
        if !x.gcd(&n).is_one() {
            return Err(CryptoError::InvalidKey("x shares a factor with n"));
        }
        if jacobi(&x, &n) != 1 {
            return Err(CryptoError::InvalidKey("x must have Jacobi symbol +1"));
        }
        Ok(Self { n, x })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn pseudo_residue(&self) -> &BigUint {
        &self.x
    }

    /// Range check only; `gcd(c, n) = 1` is verified at decryption.
    pub fn check(&self, c: &Ciphertext) -> CryptoResult<()> {
        if c.0.is_zero() || c.0 >= self.n {
            return Err(CryptoError::MalformedCiphertext);
        }
        Ok(())
    }

    /// Uniform unit modulo `n`: rejection sampling on `[1, n-1]`. From
    /// [`UNIT_CHECK_BITS`] up a draw sharing a factor with `n` has
    /// probability below `2^-127` and the gcd test is skipped.
    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let y = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if self.n.bits() >= UNIT_CHECK_BITS || is_coprime(&y, &self.n) {
                return y;
            }
        }
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, bit: bool, rng: &mut R) -> Ciphertext {
        let y = self.random_unit(rng);
        self.encrypt_unchecked(bit, &y)
    }

    fn encrypt_unchecked(&self, bit: bool, y: &BigUint) -> Ciphertext {
        let mut c = y * y % &self.n;
        if bit {
            c = c * &self.x % &self.n;
        }
        Ciphertext(c)
    }

    /// Encryption with caller-supplied randomness `y`.
    pub fn encrypt_with(&self, bit: bool, y: &BigUint) -> CryptoResult<Ciphertext> {
        if y.is_zero() || y >= &self.n || !y.gcd(&self.n).is_one() {
            return Err(CryptoError::InvalidKey("encryption randomness must be a unit mod n"));
        }
        Ok(self.encrypt_unchecked(bit, y))
    }

    /// Homomorphic XOR: the product decrypts to the XOR of the two plaintexts.
    pub fn xor(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        Ciphertext(&a.0 * &b.0 % &self.n)
    }

    /// Multiplies in a fresh encryption of zero.
    pub fn rerandomize<R: Rng + ?Sized>(&self, c: &Ciphertext, rng: &mut R) -> Ciphertext {
        let zero = self.encrypt(false, rng);
        self.xor(c, &zero)
    }

    pub fn encrypt_value<R: Rng + ?Sized>(
        &self,
        value: u64,
        width: usize,
        rng: &mut R,
    ) -> CryptoResult<EncryptedBitVector> {
        check_width(width)?;
        if width < 64 && value >> width != 0 {
            return Err(CryptoError::Overflow { value, width });
        }
        let bits = (0..width)
            .rev()
            .map(|i| self.encrypt((value >> i) & 1 == 1, rng))
            .collect();
        Ok(EncryptedBitVector(bits))
    }

    pub fn rerandomize_vector<R: Rng + ?Sized>(
        &self,
        v: &EncryptedBitVector,
        rng: &mut R,
    ) -> EncryptedBitVector {
        EncryptedBitVector(v.0.iter().map(|c| self.rerandomize(c, rng)).collect())
    }
}

fn is_coprime(a: &BigUint, b: &BigUint) -> bool {
    match (a.to_u128(), b.to_u128()) {
        (Some(a), Some(b)) => a.gcd(&b) == 1,
        _ => a.gcd(b).is_one(),
    }
}

fn check_width(width: usize) -> CryptoResult<()> {
    if width == 0 || width > 64 {
        return Err(CryptoError::InvalidWidth(width));
    }
    Ok(())
}

/// Secret key `(p, q)`, with `n = p * q` cached.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    p: BigUint,
    q: BigUint,
    n: BigUint,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bits)", self.n.bits())
    }
}

impl SecretKey {
    pub fn new(p: BigUint, q: BigUint) -> CryptoResult<Self> {
        if p == q {
            return Err(CryptoError::InvalidKey("p and q must be distinct"));
        }
        let mut rng = rand::thread_rng();
        for f in [&p, &q] {
            if f.is_even() || !is_probable_prime(f, MILLER_RABIN_ROUNDS, &mut rng) {
                return Err(CryptoError::InvalidKey("p and q must be odd primes"));
            }
        }
        let n = &p * &q;
        Ok(Self { p, q, n })
    }

    pub fn primes(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    /// True when `v` is a square modulo both primes.
    pub fn is_residue(&self, v: &BigUint) -> bool {
        jacobi(v, &self.p) == 1 && jacobi(v, &self.q) == 1
    }

    fn is_pseudo_residue(&self, x: &BigUint) -> bool {
        jacobi(x, &self.p) == -1 && jacobi(x, &self.q) == -1
    }

    pub fn decrypt(&self, c: &Ciphertext) -> CryptoResult<bool> {
        let v = &c.0;
        if v.is_zero() || v >= &self.n {
            return Err(CryptoError::MalformedCiphertext);
        }
        let rp = v % &self.p;
        if rp.is_zero() || (v % &self.q).is_zero() {
            return Err(CryptoError::MalformedCiphertext);
        }
        Ok(jacobi(&rp, &self.p) != 1)
    }

    pub fn decrypt_value(&self, v: &EncryptedBitVector) -> CryptoResult<u64> {
        check_width(v.width())?;
        v.0.iter().try_fold(0u64, |acc, c| Ok((acc << 1) | self.decrypt(c)? as u64))
    }

    pub fn decrypt_bits(&self, v: &EncryptedBitVector) -> CryptoResult<Vec<bool>> {
        v.0.iter().map(|c| self.decrypt(c)).collect()
    }
}

/// One encrypted bit: a unit modulo `n`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(BigUint);

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({})", self.0)
    }
}

impl Ciphertext {
    /// Wraps a raw value without validation; check it with
    /// [`PublicKey::check`] before use.
    pub fn from_raw(v: BigUint) -> Self {
        Ciphertext(v)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

/// An integer encrypted bit by bit, most significant bit first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncryptedBitVector(Vec<Ciphertext>);

impl EncryptedBitVector {
    pub fn from_bits(bits: Vec<Ciphertext>) -> Self {
        EncryptedBitVector(bits)
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[Ciphertext] {
        &self.0
    }

    pub fn into_bits(self) -> Vec<Ciphertext> {
        self.0
    }

    /// Bit at `i`, counted from the least significant end starting at 0.
    pub fn lsb(&self, i: usize) -> &Ciphertext {
        &self.0[self.0.len() - 1 - i]
    }
}

/// Generates a key pair whose modulus has exactly `key_bits` bits.
pub fn keygen<R: Rng + ?Sized>(key_bits: usize, rng: &mut R) -> CryptoResult<(PublicKey, SecretKey)> {
    if key_bits < MIN_KEY_BITS {
        return Err(CryptoError::KeyTooSmall(key_bits));
    }
    let p_bits = key_bits / 2;
    let q_bits = key_bits - p_bits;
    let p = random_prime(p_bits, rng)?;
    let mut q = random_prime(q_bits, rng)?;
    let mut tries = 0;
    while q == p {
        tries += 1;
        if tries > MAX_PRIME_CANDIDATES_PER_BIT {
            return Err(CryptoError::GenerationFailed("could not find two distinct primes"));
        }
        q = random_prime(q_bits, rng)?;
    }
    let sk = SecretKey::from_trusted(p, q);
    let two = BigUint::from(2u32);
    for _ in 0..MAX_RESIDUE_CANDIDATES {
        let x = rng.gen_biguint_range(&two, &sk.n);
        if sk.is_pseudo_residue(&x) {
            let pk = PublicKey { n: sk.n.clone(), x };
            return Ok((pk, sk));
        }
    }
    Err(CryptoError::GenerationFailed("no pseudo-residue found"))
}

/// Builds a key pair from known primes, choosing the smallest valid `x`.
pub fn keypair_from_primes(p: BigUint, q: BigUint) -> CryptoResult<(PublicKey, SecretKey)> {
    let sk = SecretKey::new(p, q)?;
    let mut x = BigUint::from(2u32);
    while x < sk.n {
        if sk.is_pseudo_residue(&x) {
            let pk = PublicKey { n: sk.n.clone(), x };
            return Ok((pk, sk));
        }
        x += 1u32;
    }
    Err(CryptoError::GenerationFailed("no pseudo-residue below n"))
}

impl SecretKey {
    fn from_trusted(p: BigUint, q: BigUint) -> Self {
        let n = &p * &q;
        Self { p, q, n }
    }
}

fn random_prime<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> CryptoResult<BigUint> {
    for _ in 0..MAX_PRIME_CANDIDATES_PER_BIT * bits {
        let c = arith::prime_candidate(bits, rng);
        if is_probable_prime(&c, MILLER_RABIN_ROUNDS, rng) {
            return Ok(c);
        }
    }
    Err(CryptoError::GenerationFailed("prime search exhausted its candidate budget"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> (PublicKey, SecretKey) {
        keypair_from_primes(7u32.into(), 11u32.into()).unwrap()
    }

    fn squares_mod(m: u64) -> Vec<u64> {
        let mut s: Vec<u64> = (1..m).map(|y| y * y % m).collect();
        s.sort();
        s.dedup();
        s
    }

    #[test]
    fn toy_key_picks_smallest_pseudo_residue() {
        let (pk, _) = toy();
        assert_eq!(pk.modulus(), &BigUint::from(77u32));
        // non-residues: mod 7 {3,5,6}, mod 11 {2,6,7,8,10}
        let nr7: Vec<u64> = (1..7).filter(|v| !squares_mod(7).contains(v)).collect();
        let nr11: Vec<u64> = (1..11).filter(|v| !squares_mod(11).contains(v)).collect();
        assert_eq!(nr7, vec![3, 5, 6]);
        assert_eq!(nr11, vec![2, 6, 7, 8, 10]);
        assert_eq!(pk.pseudo_residue(), &BigUint::from(6u32));
    }

    #[test]
    fn fixed_randomness_examples() {
        let (pk, sk) = toy();
        let two = BigUint::from(2u32);
        let c0 = pk.encrypt_with(false, &two).unwrap();
        assert_eq!(c0.value(), &BigUint::from(4u32));
        assert!(!sk.decrypt(&c0).unwrap());
        let c1 = pk.encrypt_with(true, &two).unwrap();
        assert_eq!(c1.value(), &BigUint::from(24u32));
        assert_eq!(24 % 7, 3);
        assert!(sk.decrypt(&c1).unwrap());
    }

    #[test]
    fn equal_primes_rejected() {
        assert_eq!(
            SecretKey::new(7u32.into(), 7u32.into()),
            Err(CryptoError::InvalidKey("p and q must be distinct"))
        );
        assert!(SecretKey::new(7u32.into(), 15u32.into()).is_err());
    }

    #[test]
    fn keygen_rejects_tiny_sizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(keygen(15, &mut rng).unwrap_err(), CryptoError::KeyTooSmall(15));
    }

    #[test]
    fn keygen_produces_valid_keys() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for bits in [16usize, 17, 32, 64, 128] {
            let (pk, sk) = keygen(bits, &mut rng).unwrap();
            assert_eq!(pk.modulus().bits(), bits as u64);
            assert_eq!(pk.modulus(), sk.modulus());
            let (p, q) = sk.primes();
            assert_ne!(p, q);
            assert!(sk.is_pseudo_residue(pk.pseudo_residue()));
            assert_eq!(jacobi(pk.pseudo_residue(), pk.modulus()), 1);
            PublicKey::new(pk.modulus().clone(), pk.pseudo_residue().clone()).unwrap();
            for bit in [false, true] {
                assert_eq!(sk.decrypt(&pk.encrypt(bit, &mut rng)).unwrap(), bit);
            }
        }
    }

    #[test]
    fn toy_residuosity_matches_enumeration() {
        let (pk, sk) = toy();
        let sq7 = squares_mod(7);
        let sq11 = squares_mod(11);
        for v in 1u64..77 {
            let c = Ciphertext::from_raw(BigUint::from(v));
            if v % 7 == 0 || v % 11 == 0 {
                assert_eq!(sk.decrypt(&c), Err(CryptoError::MalformedCiphertext));
                continue;
            }
            let residue = sq7.contains(&(v % 7)) && sq11.contains(&(v % 11));
            assert_eq!(sk.is_residue(&BigUint::from(v)), residue);
            // valid ciphertexts have equal residuosity mod both primes
            if sq7.contains(&(v % 7)) == sq11.contains(&(v % 11)) {
                assert_eq!(sk.decrypt(&c).unwrap(), !residue, "v = {v}");
            }
        }
        assert!(pk.check(&Ciphertext::from_raw(BigUint::zero())).is_err());
        assert!(pk.check(&Ciphertext::from_raw(77u32.into())).is_err());
    }

    #[test]
    fn fresh_encryptions_differ() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let a = pk.encrypt(false, &mut rng);
        let b = pk.encrypt(false, &mut rng);
        assert_ne!(a, b);
    }

    #[test]
    fn rerandomized_one_is_never_a_residue() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (pk, sk) = keygen(64, &mut rng).unwrap();
        let mut c = pk.encrypt(true, &mut rng);
        for _ in 0..200 {
            c = pk.rerandomize(&c, &mut rng);
            assert!(!sk.is_residue(c.value()));
        }
    }

    #[test]
    fn vector_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (pk, sk) = keygen(64, &mut rng).unwrap();
        let zero = pk.encrypt_value(0, 8, &mut rng).unwrap();
        assert_eq!(sk.decrypt_bits(&zero).unwrap(), vec![false; 8]);
        let five = pk.encrypt_value(5, 4, &mut rng).unwrap();
        assert_eq!(sk.decrypt_bits(&five).unwrap(), vec![false, true, false, true]);
        assert!(sk.decrypt(five.lsb(0)).unwrap());
        assert!(!sk.decrypt(five.lsb(1)).unwrap());
        let bid = pk.encrypt_value(200, 8, &mut rng).unwrap();
        assert_eq!(sk.decrypt_value(&bid).unwrap(), 200);
        assert_eq!(
            pk.encrypt_value(16, 4, &mut rng).unwrap_err(),
            CryptoError::Overflow { value: 16, width: 4 }
        );
        assert!(pk.encrypt_value(u64::MAX, 64, &mut rng).is_ok());
        assert_eq!(pk.encrypt_value(0, 0, &mut rng).unwrap_err(), CryptoError::InvalidWidth(0));
        let ones = EncryptedBitVector::from_bits((0..4).map(|_| pk.encrypt(true, &mut rng)).collect());
        assert_eq!(sk.decrypt_value(&ones).unwrap(), 15);
    }

    #[test]
    fn public_key_validation() {
        let n = BigUint::from(77u32);
        assert!(PublicKey::new(n.clone(), 6u32.into()).is_ok());
        // 2 is a residue mod 7, so (2/77) = -1
        assert!(PublicKey::new(n.clone(), 2u32.into()).is_err());
        assert!(PublicKey::new(n.clone(), 7u32.into()).is_err());
        assert!(PublicKey::new(n.clone(), 77u32.into()).is_err());
        assert!(PublicKey::new(78u32.into(), 5u32.into()).is_err());
    }
}
