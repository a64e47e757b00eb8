//! Transmitter bit pipeline.
//!
//! A 5-bit location ID is line-coded chip by chip (`1 -> 01`, `0 -> 00`),
//! prefixed with the `11` start symbol and sent as an ON/OFF optical waveform
//! that repeats for as long as the LED is lit. A payload 1-chip is always
//! followed by a 0-chip, so `11` can only appear at the start symbol.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LocationId;

pub const PAYLOAD_BITS: usize = 5;
pub const PAYLOAD_CHIPS: usize = 2 * PAYLOAD_BITS;
pub const START_SYMBOL: [bool; 2] = [true, true];
pub const FRAME_CHIPS: usize = PAYLOAD_CHIPS + START_SYMBOL.len();

/// A sequence of binary chips (half-bit symbols).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Chips(pub Vec<bool>);

impl Chips {
    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&c| c).count()
    }

    /// Fraction of ON chips.
    pub fn duty_cycle(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.ones() as f64 / self.0.len() as f64
        }
    }
}

impl fmt::Display for Chips {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &c in &self.0 {
            f.write_str(if c { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Chips {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Encoding(format!("invalid chip character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Chips)
    }
}

impl From<Chips> for String {
    fn from(c: Chips) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Chips {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Vec<bool>> for Chips {
    fn from(v: Vec<bool>) -> Self {
        Chips(v)
    }
}

/// Line-code the ID, most significant bit first.
pub fn encode_manchester(id: LocationId) -> Chips {
    let bits = id.bits();
    let chips = (0..PAYLOAD_BITS)
        .rev()
        .flat_map(|k| [false, bits >> k & 1 == 1])
        .collect();
    Chips(chips)
}

fn check_pair(pair: [bool; 2], index: usize) -> Result<bool> {
    match pair {
        [false, bit] => Ok(bit),
        _ => Err(Error::InvalidCodeword { pair, index }),
    }
}

/// Prefix a valid payload with the start symbol.
pub fn frame_codeword(payload: &Chips) -> Result<Chips> {
    if payload.len() != PAYLOAD_CHIPS {
        return Err(Error::Encoding(format!(
            "payload must hold {PAYLOAD_CHIPS} chips, got {}",
            payload.len()
        )));
    }
    for (k, pair) in payload.0.chunks_exact(2).enumerate() {
        check_pair([pair[0], pair[1]], k)
            .map_err(|_| Error::Encoding(format!("chip pair {k} is not a Manchester symbol")))?;
    }
    let mut out = Vec::with_capacity(FRAME_CHIPS);
    out.extend_from_slice(&START_SYMBOL);
    out.extend_from_slice(&payload.0);
    Ok(Chips(out))
}

pub fn decode_manchester(payload: &[bool]) -> Result<LocationId> {
    if payload.len() != PAYLOAD_CHIPS {
        return Err(Error::InsufficientData(format!(
            "payload must hold {PAYLOAD_CHIPS} chips, got {}",
            payload.len()
        )));
    }
    let mut bits = 0u8;
    for (k, pair) in payload.chunks_exact(2).enumerate() {
        let bit = check_pair([pair[0], pair[1]], k)?;
        bits = bits << 1 | bit as u8;
    }
    LocationId::new(bits)
}

/// Encode and frame in one step.
pub fn codeword(id: LocationId) -> Chips {
    frame_codeword(&encode_manchester(id)).expect("encoder output is always valid")
}

/// Find the offset of a start symbol followed by a valid payload in a chip
/// stream observed from a continuously repeating transmission.
///
/// The stream must span at least two frame lengths so that one complete
/// codeword is guaranteed to lie inside it.
pub fn locate_start(stream: &[bool], frame_len: usize) -> Result<usize> {
    if frame_len != FRAME_CHIPS {
        return Err(Error::domain(format!(
            "frame length must be {FRAME_CHIPS}, got {frame_len}"
        )));
    }
    if stream.len() < 2 * frame_len {
        return Err(Error::InsufficientData(format!(
            "need {} chips to guarantee a complete codeword, got {}",
            2 * frame_len,
            stream.len()
        )));
    }
    (0..=stream.len() - frame_len)
        .find(|&off| {
            stream[off..off + 2] == START_SYMBOL
                && decode_manchester(&stream[off + 2..off + frame_len]).is_ok()
        })
        .ok_or(Error::Sync { len: stream.len() })
}

/// Decode an ID from a linear chip stream of a repeating transmission.
pub fn decode_stream(stream: &[bool]) -> Result<LocationId> {
    let off = locate_start(stream, FRAME_CHIPS)?;
    decode_manchester(&stream[off + 2..off + FRAME_CHIPS])
}

/// Piecewise-constant ON/OFF intensity. Chip `i` occupies
/// `[i / chip_rate, (i + 1) / chip_rate)` and the chip sequence repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waveform {
    pub chip_rate: f64,
    pub chips: Chips,
    /// Time at which chip 0 of the cycle starts (s).
    pub phase: f64,
    /// ON prefix sums: `on_prefix[k]` = ON chips among the first `k`.
    #[serde(skip)]
    on_prefix: Vec<u32>,
}

pub fn chips_to_waveform(chips: &Chips, chip_rate: f64) -> Result<Waveform> {
    Waveform::new(chips.clone(), chip_rate, 0.0)
}

impl Waveform {
    pub fn new(chips: Chips, chip_rate: f64, phase: f64) -> Result<Self> {
        if !(chip_rate.is_finite() && chip_rate > 0.0) {
            return Err(Error::domain(format!("chip rate must be positive, got {chip_rate}")));
        }
        if chips.is_empty() {
            return Err(Error::domain("waveform needs at least one chip"));
        }
        let mut on_prefix = Vec::with_capacity(chips.len() + 1);
        on_prefix.push(0);
        for &c in chips.as_slice() {
            on_prefix.push(on_prefix.last().unwrap() + c as u32);
        }
        Ok(Self {
            chip_rate,
            chips,
            phase,
            on_prefix,
        })
    }

    /// Constant-ON emitter.
    pub fn steady_on() -> Self {
        Self::new(Chips(vec![true]), 1.0, 0.0).expect("valid")
    }

    pub fn chip_duration(&self) -> f64 {
        1.0 / self.chip_rate
    }

    pub fn period(&self) -> f64 {
        self.chips.len() as f64 / self.chip_rate
    }

    pub fn level_at(&self, t: f64) -> bool {
        let n = self.chips.len() as f64;
        let idx = ((t - self.phase) * self.chip_rate).rem_euclid(n).floor() as usize;
        self.chips.0[idx.min(self.chips.len() - 1)]
    }

    /// Cumulative ON time since the cycle origin, in chip units.
    fn cumulative_on(&self, t: f64) -> f64 {
        let n = self.chips.len();
        let x = (t - self.phase) * self.chip_rate;
        let cycles = (x / n as f64).floor();
        let rem = x - cycles * n as f64;
        let whole = (rem.floor() as usize).min(n - 1);
        let frac = rem - whole as f64;
        cycles * self.on_prefix[n] as f64
            + self.on_prefix[whole] as f64
            + if self.chips.0[whole] { frac } else { 0.0 }
    }

    /// ON time within `[t0, t1]` (s).
    pub fn on_time(&self, t0: f64, t1: f64) -> f64 {
        (self.cumulative_on(t1) - self.cumulative_on(t0)) / self.chip_rate
    }

    /// Mean intensity over `[t0, t0 + window]`.
    pub fn mean_level(&self, t0: f64, window: f64) -> f64 {
        if window <= 0.0 {
            return self.level_at(t0) as u8 as f64;
        }
        (self.on_time(t0, t0 + window) / window).clamp(0.0, 1.0)
    }

    /// Chip boundary times within `[t0, t1)` with the level after each edge.
    pub fn edges(&self, t0: f64, t1: f64) -> Vec<(f64, bool)> {
        let first = ((t0 - self.phase) * self.chip_rate).ceil() as i64;
        let last = ((t1 - self.phase) * self.chip_rate).ceil() as i64;
        let n = self.chips.len() as i64;
        (first..last)
            .filter_map(|k| {
                let cur = self.chips.0[k.rem_euclid(n) as usize];
                let prev = self.chips.0[(k - 1).rem_euclid(n) as usize];
                (cur != prev).then(|| (self.phase + k as f64 / self.chip_rate, cur))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(bits: u8) -> LocationId {
        LocationId::new(bits).unwrap()
    }

    fn chips(s: &str) -> Chips {
        s.parse().unwrap()
    }

    #[test]
    fn manchester_examples() {
        assert_eq!(encode_manchester(id(0b11011)).to_string(), "0101000101");
        assert_eq!(encode_manchester(id(0)).to_string(), "0000000000");
        assert_eq!(encode_manchester(id(0b11111)).to_string(), "0101010101");
    }

    #[test]
    fn framing_examples() {
        assert_eq!(frame_codeword(&chips("0101000101")).unwrap().to_string(), "110101000101");
        assert_eq!(frame_codeword(&chips("0000000000")).unwrap().to_string(), "110000000000");
        assert_eq!(frame_codeword(&chips("0101010101")).unwrap().to_string(), "110101010101");
        assert!(matches!(frame_codeword(&chips("0111000101")), Err(Error::Encoding(_))));
        assert!(frame_codeword(&chips("0101")).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_manchester(chips("0101000101").as_slice()).unwrap().bits(), 0b11011);
        assert_eq!(decode_manchester(chips("0000000000").as_slice()).unwrap().bits(), 0);
        let err = decode_manchester(chips("0100001011").as_slice()).unwrap_err();
        // Pair 3 is already `10`; the trailing `11` is never reached.
        assert!(matches!(err, Error::InvalidCodeword { pair: [true, false], index: 3 }));
    }

    fn rotate_twice(word: &Chips, by: usize) -> Vec<bool> {
        let n = word.len();
        (0..2 * n).map(|k| word.0[(k + by) % n]).collect()
    }

    #[test]
    fn start_symbol_examples() {
        let word = codeword(id(0b11011));
        let stream = rotate_twice(&word, 5);
        let off = locate_start(&stream, FRAME_CHIPS).unwrap();
        assert_eq!(off, 7);
        assert_eq!(decode_stream(&stream).unwrap().bits(), 0b11011);

        let zero = codeword(id(0));
        assert_eq!(locate_start(&rotate_twice(&zero, 0), FRAME_CHIPS).unwrap(), 0);

        assert!(matches!(
            locate_start(&[false; 24], FRAME_CHIPS),
            Err(Error::Sync { len: 24 })
        ));
        assert!(matches!(
            locate_start(&[true; 12], FRAME_CHIPS),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn start_symbol_unique_per_rotation() {
        // Brute force over every id and rotation: exactly one offset in the
        // circular codeword carries `11` followed by a valid payload.
        for b in LocationId::all() {
            let word = codeword(b);
            for rot in 0..FRAME_CHIPS {
                let circ: Vec<bool> = (0..FRAME_CHIPS).map(|k| word.0[(k + rot) % FRAME_CHIPS]).collect();
                let valid: Vec<usize> = (0..FRAME_CHIPS)
                    .filter(|&off| {
                        let w: Vec<bool> = (0..FRAME_CHIPS).map(|k| circ[(off + k) % FRAME_CHIPS]).collect();
                        w[..2] == START_SYMBOL && decode_manchester(&w[2..]).is_ok()
                    })
                    .collect();
                assert_eq!(valid, vec![(FRAME_CHIPS - rot) % FRAME_CHIPS], "id {b} rot {rot}");
            }
        }
    }

    #[test]
    fn no_payload_pair_is_double_on() {
        for b in LocationId::all() {
            let p = encode_manchester(b);
            assert!(p.0.chunks_exact(2).all(|pair| !(pair[0] && pair[1])));
        }
    }

    #[test]
    fn waveform_timing() {
        let p = encode_manchester(id(3));
        assert!((chips_to_waveform(&p, 2000.0).unwrap().chip_duration() - 500e-6).abs() < 1e-15);
        assert!((chips_to_waveform(&p, 4000.0).unwrap().chip_duration() - 250e-6).abs() < 1e-15);
        assert!(chips_to_waveform(&p, 0.0).is_err());

        let one = chips_to_waveform(&chips("1"), 2000.0).unwrap();
        assert!(one.level_at(0.0) && one.level_at(499e-6));
        assert!((one.mean_level(1e-4, 3e-4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn waveform_integral_matches_sampling() {
        let w = Waveform::new(codeword(id(0b10110)), 4000.0, 3.3e-5).unwrap();
        let (t0, t1) = (1.234e-3, 4.567e-3);
        let steps = 200_000;
        let dt = (t1 - t0) / steps as f64;
        let sampled: f64 = (0..steps)
            .map(|k| w.level_at(t0 + (k as f64 + 0.5) * dt) as u8 as f64 * dt)
            .sum();
        // Midpoint sampling is off by at most dt/2 per edge.
        assert!((w.on_time(t0, t1) - sampled).abs() < 16.0 * dt);
    }

    #[test]
    fn waveform_edges() {
        let w = Waveform::new(chips("110000000000"), 1000.0, 0.0).unwrap();
        let e = w.edges(0.0005, 0.0115);
        assert_eq!(e, vec![(0.002, false)]);
        let e = w.edges(0.0, 0.0125);
        assert_eq!(e.len(), 3);
        assert_eq!(e[0], (0.0, true));
        assert!((e[2].0 - 0.012).abs() < 1e-12 && e[2].1);
    }

    proptest! {
        #[test]
        fn manchester_round_trip(bits in 0u8..32) {
            let b = id(bits);
            prop_assert_eq!(decode_manchester(encode_manchester(b).as_slice()).unwrap(), b);
            let word = codeword(b);
            prop_assert_eq!(word.len(), FRAME_CHIPS);
            for rot in 0..FRAME_CHIPS {
                prop_assert_eq!(decode_stream(&rotate_twice(&word, rot)).unwrap(), b);
            }
        }
    }
}
