use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

const MILLER_RABIN_ROUNDS: usize = 40;

/// Probabilistic primality test: trial division by small primes followed by
/// Miller-Rabin with random bases.
pub fn is_probable_prime<R: RngCore + CryptoRng>(candidate: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if candidate < &two {
        return false;
    }
    if candidate == &two {
        return true;
    }
    if candidate.is_even() {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if candidate == &p {
            return true;
        }
        if (candidate % &p).is_zero() {
            return false;
        }
    }

    let one = BigUint::one();
    let n_minus_one = candidate - &one;
    let trailing = n_minus_one.trailing_zeros().unwrap_or(0);
    let odd_part = &n_minus_one >> trailing;

    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let base = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = base.modpow(&odd_part, candidate);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..trailing {
            x = x.modpow(&two, candidate);
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

/// Draws a random prime of exactly `bits` bits with the two top bits set, so
/// the product of two such primes has exactly `2 * bits` bits.
pub fn random_prime<R: RngCore + CryptoRng>(
    bits: u64,
    max_attempts: usize,
    rng: &mut R,
) -> Option<BigUint> {
    for _ in 0..max_attempts {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return Some(candidate);
        }
    }
    None
}
