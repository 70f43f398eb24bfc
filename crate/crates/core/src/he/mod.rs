//! Paillier additively homomorphic encryption.
//!
//! Uses the `g = N + 1` generator, so `g^m mod N^2 = 1 + m*N` and encryption is
//! a single modular exponentiation `r^N mod N^2`. Ciphertext multiplication
//! modulo `N^2` adds plaintexts modulo `N`; raising a ciphertext to a scalar
//! multiplies its plaintext.
//!
//! Every operation is counted on the [`OpMeter`] bound to the key handle that
//! performed it.

mod meter;
mod prime;

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use meter::{OpCounts, OpMeter};
pub use prime::is_probable_prime;

/// Key size used by the benchmarks.
pub const DEFAULT_KEY_BITS: usize = 512;
/// Smallest key size accepted by [`keygen`].
pub const MIN_KEY_BITS: usize = 128;

const PRIME_ATTEMPTS: usize = 100_000;
const KEYGEN_RETRIES: usize = 16;
const SAMPLE_RETRIES: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeError {
    #[error("key size must be even and at least {MIN_KEY_BITS} bits, got {0}")]
    InvalidKeySize(usize),
    #[error("prime generation failed after bounded retries")]
    KeyGeneration,
    #[error("plaintext is not smaller than the modulus")]
    PlaintextOutOfRange,
    #[error("ciphertext is bound to a different public key")]
    KeyMismatch,
    #[error("ciphertext is not a unit modulo N^2")]
    InvalidCiphertext,
    #[error("scalar must be in [1, N)")]
    InvalidScalar,
    #[error("malformed encoding: {0}")]
    Malformed(String),
}

/// Short fingerprint of a public modulus, used to bind ciphertexts to keys.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId([u8; 8]);

impl KeyId {
    fn of_modulus(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut id = [0u8; 8];
        id.copy_from_slice(&digest[..8]);
        KeyId(id)
    }

    pub fn as_bytes(&self) -> &[u8; 8] {
        &self.0
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", hex::encode(self.0))
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// A plaintext residue modulo `N`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Plaintext(#[serde(with = "biguint_hex")] BigUint);

impl Plaintext {
    pub fn new(value: BigUint) -> Self {
        Plaintext(value)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn into_value(self) -> BigUint {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl From<u64> for Plaintext {
    fn from(v: u64) -> Self {
        Plaintext(BigUint::from(v))
    }
}

impl From<BigUint> for Plaintext {
    fn from(v: BigUint) -> Self {
        Plaintext(v)
    }
}

/// A Paillier ciphertext bound to the key that produced it.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "biguint_hex")]
    value: BigUint,
    #[serde(with = "key_id_hex")]
    key: KeyId,
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> KeyId {
        self.key
    }

    /// Canonical encoding: 4-byte big-endian length, then the value as a
    /// big-endian integer left-padded to the byte width of `N^2`.
    pub fn to_bytes(&self, pk: &PublicKey) -> Vec<u8> {
        let width = pk.ciphertext_width();
        let raw = self.value.to_bytes_be();
        let mut out = Vec::with_capacity(4 + width);
        out.extend_from_slice(&(width as u32).to_be_bytes());
        out.resize(4 + width - raw.len(), 0);
        out.extend_from_slice(&raw);
        out
    }

    pub fn from_bytes(pk: &PublicKey, bytes: &[u8]) -> Result<Self, HeError> {
        let body = read_length_prefixed(bytes)?;
        if body.len() != pk.ciphertext_width() {
            return Err(HeError::Malformed(format!(
                "ciphertext width {} does not match key width {}",
                body.len(),
                pk.ciphertext_width()
            )));
        }
        let c = Ciphertext {
            value: BigUint::from_bytes_be(body),
            key: pk.id,
        };
        pk.validate(&c)?;
        Ok(c)
    }

    pub fn to_hex(&self, pk: &PublicKey) -> String {
        hex::encode(self.to_bytes(pk))
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.value.to_str_radix(16);
        let shown = &digits[..digits.len().min(16)];
        write!(f, "Ciphertext({}.., key={})", shown, self.key)
    }
}

/// Public half of a Paillier key: the modulus `N` (generator is `N + 1`).
#[derive(Clone)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    id: KeyId,
    meter: Arc<OpMeter>,
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Self {
        let n_squared = &n * &n;
        let id = KeyId::of_modulus(&n);
        PublicKey {
            n,
            n_squared,
            id,
            meter: Arc::new(OpMeter::new()),
        }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    pub fn id(&self) -> KeyId {
        self.id
    }

    pub fn meter(&self) -> &Arc<OpMeter> {
        &self.meter
    }

    /// A copy of this key that records its operations on `meter`.
    pub fn with_meter(&self, meter: Arc<OpMeter>) -> PublicKey {
        PublicKey {
            meter,
            ..self.clone()
        }
    }

    fn ciphertext_width(&self) -> usize {
        self.n_squared.bits().div_ceil(8) as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let raw = self.n.to_bytes_be();
        let mut out = Vec::with_capacity(4 + raw.len());
        out.extend_from_slice(&(raw.len() as u32).to_be_bytes());
        out.extend_from_slice(&raw);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HeError> {
        let body = read_length_prefixed(bytes)?;
        let n = BigUint::from_bytes_be(body);
        if n.bits() < MIN_KEY_BITS as u64 || n.is_even() {
            return Err(HeError::Malformed("modulus is not a valid Paillier modulus".into()));
        }
        Ok(PublicKey::from_modulus(n))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, HeError> {
        let bytes = hex::decode(s.trim()).map_err(|e| HeError::Malformed(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    /// Checks key binding, range and invertibility of a ciphertext.
    pub fn validate(&self, c: &Ciphertext) -> Result<(), HeError> {
        if c.key != self.id {
            return Err(HeError::KeyMismatch);
        }
        if c.value.is_zero() || c.value >= self.n_squared || !c.value.gcd(&self.n).is_one() {
            return Err(HeError::InvalidCiphertext);
        }
        Ok(())
    }

    fn random_unit<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<BigUint, HeError> {
        for _ in 0..SAMPLE_RETRIES {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                return Ok(r);
            }
        }
        Err(HeError::KeyGeneration)
    }

    pub fn encrypt<R: RngCore + CryptoRng>(
        &self,
        m: &Plaintext,
        rng: &mut R,
    ) -> Result<Ciphertext, HeError> {
        if m.0 >= self.n {
            return Err(HeError::PlaintextOutOfRange);
        }
        let r = self.random_unit(rng)?;
        let g_m = (BigUint::one() + &m.0 * &self.n) % &self.n_squared;
        let r_n = r.modpow(&self.n, &self.n_squared);
        self.meter.encryption();
        Ok(Ciphertext {
            value: (g_m * r_n) % &self.n_squared,
            key: self.id,
        })
    }

    pub fn encrypt_u64<R: RngCore + CryptoRng>(
        &self,
        m: u64,
        rng: &mut R,
    ) -> Result<Ciphertext, HeError> {
        self.encrypt(&Plaintext::from(m), rng)
    }

    pub fn encrypt_zero<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Ciphertext {
        self.encrypt(&Plaintext(BigUint::zero()), rng)
            .expect("zero is always in range")
    }

    /// Encrypts a fresh plaintext drawn uniformly from `[1, N - 1]`.
    pub fn encrypt_random_nonzero<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Ciphertext {
        let m = rng.gen_biguint_range(&BigUint::one(), &self.n);
        self.encrypt(&Plaintext(m), rng)
            .expect("sampled below the modulus")
    }

    /// Homomorphic addition: decrypts to `(m1 + m2) mod N`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        if a.key != self.id || b.key != self.id {
            return Err(HeError::KeyMismatch);
        }
        self.meter.multiplication();
        Ok(Ciphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            key: self.id,
        })
    }

    /// Raises `c` to `scalar`: decrypts to `(scalar * m) mod N`.
    pub fn scalar_pow(&self, c: &Ciphertext, scalar: &BigUint) -> Result<Ciphertext, HeError> {
        if c.key != self.id {
            return Err(HeError::KeyMismatch);
        }
        if scalar.is_zero() || scalar >= &self.n {
            return Err(HeError::InvalidScalar);
        }
        self.meter.exponentiation();
        Ok(Ciphertext {
            value: c.value.modpow(scalar, &self.n_squared),
            key: self.id,
        })
    }

    /// Multiplies by a fresh encryption of zero, changing the representation
    /// but not the plaintext.
    pub fn rerandomize<R: RngCore + CryptoRng>(
        &self,
        c: &Ciphertext,
        rng: &mut R,
    ) -> Result<Ciphertext, HeError> {
        let zero = self.encrypt_zero(rng);
        self.meter.rerandomization();
        self.add(c, &zero)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits, id={})", self.n.bits(), self.id)
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl Eq for PublicKey {}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PublicKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Private half of a Paillier key.
#[derive(Clone)]
pub struct PrivateKey {
    public: PublicKey,
    lambda: BigUint,
    mu: BigUint,
}

impl PrivateKey {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn with_meter(&self, meter: Arc<OpMeter>) -> PrivateKey {
        PrivateKey {
            public: self.public.with_meter(meter),
            ..self.clone()
        }
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<Plaintext, HeError> {
        let pk = &self.public;
        pk.validate(c)?;
        let u = c.value.modpow(&self.lambda, &pk.n_squared);
        let l = (u - BigUint::one()) / &pk.n;
        pk.meter.decryption();
        Ok(Plaintext((l * &self.mu) % &pk.n))
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey(id={})", self.public.id)
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

impl KeyPair {
    /// Builds a key from two distinct primes with `gcd(pq, (p-1)(q-1)) = 1`.
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self, HeError> {
        let one = BigUint::one();
        if p == q || p <= &one || q <= &one {
            return Err(HeError::KeyGeneration);
        }
        let n = p * q;
        let p1 = p - &one;
        let q1 = q - &one;
        if !n.gcd(&(&p1 * &q1)).is_one() {
            return Err(HeError::KeyGeneration);
        }
        let lambda = p1.lcm(&q1);
        let mu = lambda.modinv(&n).ok_or(HeError::KeyGeneration)?;
        let public = PublicKey::from_modulus(n);
        Ok(KeyPair {
            private: PrivateKey {
                public: public.clone(),
                lambda,
                mu,
            },
            public,
        })
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<Plaintext, HeError> {
        self.private.decrypt(c)
    }
}

/// Generates a Paillier key with a modulus of exactly `bits` bits.
pub fn keygen<R: RngCore + CryptoRng>(bits: usize, rng: &mut R) -> Result<KeyPair, HeError> {
    if bits < MIN_KEY_BITS || bits % 2 != 0 {
        return Err(HeError::InvalidKeySize(bits));
    }
    let half = (bits / 2) as u64;
    for _ in 0..KEYGEN_RETRIES {
        let p = prime::random_prime(half, PRIME_ATTEMPTS, rng).ok_or(HeError::KeyGeneration)?;
        let q = prime::random_prime(half, PRIME_ATTEMPTS, rng).ok_or(HeError::KeyGeneration)?;
        match KeyPair::from_primes(&p, &q) {
            Ok(kp) if kp.public.bits() == bits as u64 => return Ok(kp),
            _ => continue,
        }
    }
    Err(HeError::KeyGeneration)
}

fn read_length_prefixed(bytes: &[u8]) -> Result<&[u8], HeError> {
    if bytes.len() < 4 {
        return Err(HeError::Malformed("missing length prefix".into()));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let body = &bytes[4..];
    if body.len() != len {
        return Err(HeError::Malformed(format!(
            "length prefix {len} does not match body of {} bytes",
            body.len()
        )));
    }
    Ok(body)
}

pub(crate) mod biguint_hex {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 16)
            .ok_or_else(|| serde::de::Error::custom("invalid hex integer"))
    }
}

mod key_id_hex {
    use super::KeyId;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &KeyId, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<KeyId, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 8] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("key id must be 8 bytes"))?;
        Ok(KeyId(arr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn test_key() -> KeyPair {
        keygen(128, &mut rng(1)).unwrap()
    }

    #[test]
    fn keygen_produces_exact_width() {
        for bits in [128usize, 256] {
            let kp = keygen(bits, &mut rng(bits as u64)).unwrap();
            assert_eq!(kp.public.bits(), bits as u64);
        }
    }

    #[test]
    fn keygen_rejects_bad_sizes() {
        assert_eq!(keygen(64, &mut rng(0)).unwrap_err(), HeError::InvalidKeySize(64));
        assert_eq!(keygen(129, &mut rng(0)).unwrap_err(), HeError::InvalidKeySize(129));
    }

    #[test]
    fn keygen_twice_gives_distinct_moduli() {
        let mut r = rng(2);
        let a = keygen(256, &mut r).unwrap();
        let b = keygen(256, &mut r).unwrap();
        assert_ne!(a.public.modulus(), b.public.modulus());
    }

    #[test]
    fn zero_and_boundary_round_trip() {
        let kp = test_key();
        let mut r = rng(3);
        let zero = kp.public.encrypt_zero(&mut r);
        assert!(kp.decrypt(&zero).unwrap().is_zero());

        let top = kp.public.modulus() - BigUint::one();
        let c = kp.public.encrypt(&Plaintext::new(top.clone()), &mut r).unwrap();
        assert_eq!(kp.decrypt(&c).unwrap().value(), &top);
    }

    #[test]
    fn encryption_is_randomized() {
        let kp = test_key();
        let mut r = rng(4);
        let a = kp.public.encrypt_u64(5, &mut r).unwrap();
        let b = kp.public.encrypt_u64(5, &mut r).unwrap();
        assert_ne!(a.value(), b.value());
        assert_eq!(kp.decrypt(&a).unwrap(), kp.decrypt(&b).unwrap());
    }

    #[test]
    fn plaintext_out_of_range_is_rejected() {
        let kp = test_key();
        let n = kp.public.modulus().clone();
        let err = kp.public.encrypt(&Plaintext::new(n), &mut rng(5)).unwrap_err();
        assert_eq!(err, HeError::PlaintextOutOfRange);
    }

    #[test]
    fn add_and_wraparound() {
        let kp = test_key();
        let pk = &kp.public;
        let mut r = rng(6);
        let sum = pk
            .add(&pk.encrypt_u64(2, &mut r).unwrap(), &pk.encrypt_u64(3, &mut r).unwrap())
            .unwrap();
        assert_eq!(kp.decrypt(&sum).unwrap(), Plaintext::from(5));

        let zz = pk.add(&pk.encrypt_zero(&mut r), &pk.encrypt_zero(&mut r)).unwrap();
        assert!(kp.decrypt(&zz).unwrap().is_zero());

        // (N - 1) + 2 = N + 1 = 1 (mod N)
        let top = Plaintext::new(pk.modulus() - BigUint::one());
        let wrapped = pk
            .add(&pk.encrypt(&top, &mut r).unwrap(), &pk.encrypt_u64(2, &mut r).unwrap())
            .unwrap();
        assert_eq!(kp.decrypt(&wrapped).unwrap(), Plaintext::from(1));
    }

    #[test]
    fn scalar_pow_multiplies_plaintext() {
        let kp = test_key();
        let pk = &kp.public;
        let mut r = rng(7);
        let c = pk.scalar_pow(&pk.encrypt_u64(3, &mut r).unwrap(), &BigUint::from(4u32)).unwrap();
        assert_eq!(kp.decrypt(&c).unwrap(), Plaintext::from(12));

        let a = r.gen_biguint_range(&BigUint::one(), pk.modulus());
        let zero = pk.scalar_pow(&pk.encrypt_zero(&mut r), &a).unwrap();
        assert!(kp.decrypt(&zero).unwrap().is_zero());
        let one = pk.scalar_pow(&pk.encrypt_u64(1, &mut r).unwrap(), &a).unwrap();
        assert_eq!(kp.decrypt(&one).unwrap().value(), &a);

        let c = pk.encrypt_u64(1, &mut r).unwrap();
        assert_eq!(pk.scalar_pow(&c, &BigUint::zero()).unwrap_err(), HeError::InvalidScalar);
    }

    #[test]
    fn random_nonzero_never_decrypts_to_zero() {
        let kp = test_key();
        let pk = &kp.public;
        let mut r = rng(8);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let c = pk.encrypt_random_nonzero(&mut r);
            let m = kp.decrypt(&c).unwrap();
            assert!(!m.is_zero());
            seen.insert(m);
            let sum = pk.add(&pk.encrypt_zero(&mut r), &c).unwrap();
            assert!(!kp.decrypt(&sum).unwrap().is_zero());
        }
        // 200 draws from a 128-bit range: any repeat would be astronomically unlikely
        assert_eq!(seen.len(), 200);
    }

    #[test]
    fn rerandomization_changes_representation_only() {
        let kp = test_key();
        let pk = &kp.public;
        let mut r = rng(9);
        let c = pk.encrypt_u64(42, &mut r).unwrap();
        let d = pk.rerandomize(&c, &mut r).unwrap();
        assert_ne!(c.value(), d.value());
        assert_eq!(kp.decrypt(&d).unwrap(), Plaintext::from(42));
    }

    #[test]
    fn foreign_ciphertexts_are_rejected() {
        let a = test_key();
        let b = keygen(128, &mut rng(99)).unwrap();
        let mut r = rng(10);
        let c = a.public.encrypt_u64(7, &mut r).unwrap();
        assert_eq!(b.decrypt(&c).unwrap_err(), HeError::KeyMismatch);
        let d = b.public.encrypt_u64(7, &mut r).unwrap();
        assert_eq!(a.public.add(&c, &d).unwrap_err(), HeError::KeyMismatch);
    }

    #[test]
    fn meter_counts_each_operation() {
        let kp = test_key();
        let meter = Arc::new(OpMeter::new());
        let pk = kp.public.with_meter(meter.clone());
        let sk = kp.private.with_meter(meter.clone());
        let mut r = rng(11);
        let a = pk.encrypt_u64(1, &mut r).unwrap();
        let b = pk.encrypt_random_nonzero(&mut r);
        let c = pk.add(&a, &b).unwrap();
        let d = pk.rerandomize(&c, &mut r).unwrap();
        let e = pk.scalar_pow(&d, &BigUint::from(3u32)).unwrap();
        sk.decrypt(&e).unwrap();
        let counts = meter.snapshot();
        assert_eq!(counts.encryptions, 3);
        assert_eq!(counts.rerandomizations, 1);
        assert_eq!(counts.multiplications, 2);
        assert_eq!(counts.exponentiations, 1);
        assert_eq!(counts.decryptions, 1);
        // the original handle's meter saw nothing
        assert_eq!(kp.public.meter().snapshot(), OpCounts::default());
    }

    #[test]
    fn byte_encodings_are_canonical() {
        let kp = test_key();
        let pk = &kp.public;
        let c = pk.encrypt_u64(1, &mut rng(12)).unwrap();
        let bytes = c.to_bytes(pk);
        assert_eq!(bytes.len(), 4 + 32);
        assert_eq!(Ciphertext::from_bytes(pk, &bytes).unwrap(), c);
        let pk2 = PublicKey::from_bytes(&pk.to_bytes()).unwrap();
        assert_eq!(&pk2, pk);
        assert_eq!(pk2.id(), pk.id());

        let mut truncated = bytes.clone();
        truncated.pop();
        assert!(matches!(Ciphertext::from_bytes(pk, &truncated), Err(HeError::Malformed(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use std::sync::OnceLock;

        fn key() -> &'static KeyPair {
            static KEY: OnceLock<KeyPair> = OnceLock::new();
            KEY.get_or_init(|| keygen(256, &mut rng(21)).unwrap())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn add_is_plaintext_sum(a in any::<u64>(), b in any::<u64>(), seed in any::<u64>()) {
                let kp = key();
                let pk = &kp.public;
                let mut r = rng(seed);
                let c = pk.add(&pk.encrypt_u64(a, &mut r).unwrap(), &pk.encrypt_u64(b, &mut r).unwrap()).unwrap();
                let want = (BigUint::from(a) + BigUint::from(b)) % pk.modulus();
                prop_assert_eq!(kp.decrypt(&c).unwrap(), Plaintext::new(want));
            }

            #[test]
            fn scalar_pow_is_plaintext_product(m in any::<u64>(), k in 1u64.., seed in any::<u64>()) {
                let kp = key();
                let pk = &kp.public;
                let mut r = rng(seed);
                let c = pk.scalar_pow(&pk.encrypt_u64(m, &mut r).unwrap(), &BigUint::from(k)).unwrap();
                let want = (BigUint::from(m) * BigUint::from(k)) % pk.modulus();
                prop_assert_eq!(kp.decrypt(&c).unwrap(), Plaintext::new(want));
            }

            #[test]
            fn rerandomize_preserves_plaintext(m in any::<u64>(), seed in any::<u64>()) {
                let kp = key();
                let pk = &kp.public;
                let mut r = rng(seed);
                let c = pk.encrypt_u64(m, &mut r).unwrap();
                let d = pk.rerandomize(&c, &mut r).unwrap();
                prop_assert_ne!(c.value(), d.value());
                prop_assert_eq!(kp.decrypt(&d).unwrap(), Plaintext::from(m));
            }
        }
    }
}
