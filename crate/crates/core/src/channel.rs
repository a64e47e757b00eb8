//! Noncoherent MFSK error probability and sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact binomial coefficient; orders are capped so it fits in `u128`.
fn binomial(n: u32, k: u32) -> u128 {
    let k = k.min(n - k) as u128;
    let mut c = 1u128;
    for i in 0..k {
        c = c * (n as u128 - i) / (i + 1);
    }
    c
}

const MAX_ORDER: u32 = 64;

fn check_order(m: u32) -> Result<()> {
    if m < 2 || m > MAX_ORDER || !m.is_power_of_two() {
        return Err(Error::domain(format!("MFSK order must be a power of two in 2..={MAX_ORDER}, got {m}")));
    }
    Ok(())
}

/// Symbol error probability at per-symbol SNR `rho`:
/// `(1/M) Σ_{i=2..M} (-1)^i C(M, i) exp(-(1 - 1/i) ρ)`.
pub fn mfsk_error(m: u32, rho: f64) -> Result<f64> {
    check_order(m)?;
    if !(rho >= 0.0) {
        return Err(Error::domain(format!("SNR must be non-negative, got {rho}")));
    }
    // Neumaier summation keeps the alternating terms honest.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for i in 2..=m {
        let mag = binomial(m, i) as f64 * (-(1.0 - 1.0 / i as f64) * rho).exp();
        let term = if i % 2 == 0 { mag } else { -mag };
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    let p = (sum + comp) / m as f64;
    Ok(p.clamp(0.0, (m - 1) as f64 / m as f64))
}

/// Bit error from symbol error for orthogonal signalling.
pub fn symbol_to_bit_error(m: u32, p_symbol: f64) -> f64 {
    p_symbol * (m / 2) as f64 / (m - 1) as f64
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfskErrorPoint {
    pub snr_db: f64,
    pub m: u32,
    /// Per-bit SNR, `10^(dB/10)`.
    pub rho_bit: f64,
    /// Per-symbol SNR, `log2(M) · rho_bit`.
    pub rho_symbol: f64,
    pub p_symbol: f64,
    pub p_bit: f64,
}

/// Error probabilities over an SNR grid, compared at equal energy per bit.
pub fn ber_sweep(orders: &[u32], db_lo: f64, db_hi: f64, step: f64) -> Result<Vec<MfskErrorPoint>> {
    if orders.is_empty() || !(step > 0.0) || db_hi < db_lo {
        return Err(Error::domain("sweep needs orders, a positive step and lo <= hi"));
    }
    let n = ((db_hi - db_lo) / step + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n * orders.len());
    for k in 0..n {
        let snr_db = db_lo + k as f64 * step;
        let rho_bit = db_to_linear(snr_db);
        for &m in orders {
            let rho_symbol = m.trailing_zeros() as f64 * rho_bit;
            let p_symbol = mfsk_error(m, rho_symbol)?;
            out.push(MfskErrorPoint {
                snr_db,
                m,
                rho_bit,
                rho_symbol,
                p_symbol,
                p_bit: symbol_to_bit_error(m, p_symbol),
            });
        }
    }
    Ok(out)
}

/// Noncoherent binary FSK over AWGN by simulation: the transmitted tone's
/// envelope must exceed the empty tone's. Returns the error count.
pub fn monte_carlo_bfsk(rho: f64, trials: u64, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = rho.sqrt();
    // Unit noise power per complex branch.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut errors = 0;
    for _ in 0..trials {
        let mut n = || -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        };
        let (i1, q1, i2, q2) = (amp + n(), n(), n(), n());
        if i2 * i2 + q2 * q2 > i1 * i1 + q1 * q1 {
            errors += 1;
        }
    }
    errors
}
