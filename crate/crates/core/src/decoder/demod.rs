//! Chip clock recovery and slot voting over rolling-shutter row samples.
//!
//! Each sampled row integrates the LED over its exposure window. Rows whose
//! window sits wholly inside one chip read that chip directly; rows that
//! straddle a chip boundary locate the boundary. Boundaries fix the chip
//! phase, and the phase maps every clean row to a slot of the repeating
//! codeword.

use crate::error::{Error, Result};
use crate::model::LocationId;
use crate::txcodec::{decode_stream, Chips, FRAME_CHIPS};

/// Extra guard around the clean part of a chip, as a fraction of the chip.
const SLOT_GUARD: f64 = 0.075;

/// Normalized luminance of one row of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowSample {
    pub frame: usize,
    pub row: usize,
    /// Exposure start (s).
    pub t: f64,
    pub level: f64,
}

/// Recovered chip clock for one candidate rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clock {
    pub rate: f64,
    /// A chip boundary time (s).
    pub phase: f64,
    /// Resultant length of boundary phases, in `[0, 1]`.
    pub coherence: f64,
}

/// Chip-boundary times implied by adjacent rows that cross `theta`.
///
/// A boundary is resolved to the midpoint of the one-row interval it must
/// lie in. `samples` must be ordered by frame then row.
pub fn boundary_times(samples: &[RowSample], exposure: f64, row_time: f64, theta: f64) -> Vec<f64> {
    samples
        .windows(2)
        .filter(|w| w[0].frame == w[1].frame && w[1].row == w[0].row + 1)
        .filter_map(|w| {
            let (a, b) = (w[0].level > theta, w[1].level > theta);
            match (a, b) {
                (false, true) => Some(w[1].t + exposure * (1.0 - theta) - row_time / 2.0),
                (true, false) => Some(w[1].t + exposure * theta - row_time / 2.0),
                _ => None,
            }
        })
        .collect()
}

/// Circular mean of boundary times modulo one chip.
pub fn recover_clock(boundaries: &[f64], rate: f64) -> Result<Clock> {
    if boundaries.is_empty() {
        return Err(Error::InsufficientData("no chip boundaries observed".into()));
    }
    let (mut s, mut c) = (0.0, 0.0);
    for &b in boundaries {
        let a = std::f64::consts::TAU * (b * rate).rem_euclid(1.0);
        s += a.sin();
        c += a.cos();
    }
    let n = boundaries.len() as f64;
    let mean = s.atan2(c).rem_euclid(std::f64::consts::TAU);
    Ok(Clock {
        rate,
        phase: mean / std::f64::consts::TAU / rate,
        coherence: (s * s + c * c).sqrt() / n,
    })
}

/// ON/OFF tallies per codeword slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotVotes {
    pub on: [u32; FRAME_CHIPS],
    pub total: [u32; FRAME_CHIPS],
}

impl SlotVotes {
    /// Majority chip per slot and the weakest slot's agreement.
    pub fn chips(&self) -> Result<(Chips, f64)> {
        let mut chips = Vec::with_capacity(FRAME_CHIPS);
        let mut agreement: f64 = 1.0;
        for k in 0..FRAME_CHIPS {
            let (on, n) = (self.on[k], self.total[k]);
            if n == 0 {
                return Err(Error::InsufficientData(format!("codeword slot {k} never sampled")));
            }
            let bit = 2 * on > n;
            let agree = if bit { on } else { n - on } as f64 / n as f64;
            agreement = agreement.min(agree);
            chips.push(bit);
        }
        Ok((Chips(chips), agreement))
    }
}

/// Tally rows whose exposure lies wholly inside one chip.
pub fn slot_votes(samples: &[RowSample], clock: &Clock, exposure: f64) -> Result<SlotVotes> {
    let half = exposure * clock.rate / 2.0;
    let (lo, hi) = (half + SLOT_GUARD, 1.0 - half - SLOT_GUARD);
    if lo >= hi {
        return Err(Error::domain(format!(
            "exposure {exposure} s too long for {} Hz chips",
            clock.rate
        )));
    }
    let mut votes = SlotVotes::default();
    for s in samples {
        let pos = (s.t + exposure / 2.0 - clock.phase) * clock.rate;
        let chip = pos.floor();
        let frac = pos - chip;
        if frac < lo || frac > hi {
            continue;
        }
        let slot = (chip as i64).rem_euclid(FRAME_CHIPS as i64) as usize;
        votes.total[slot] += 1;
        votes.on[slot] += (s.level > 0.5) as u32;
    }
    Ok(votes)
}

/// Outcome of demodulating one blob.
#[derive(Debug, Clone, PartialEq)]
pub struct Demodulated {
    pub id: LocationId,
    pub clock: Clock,
    /// One codeword period as sampled, starting at slot 0.
    pub chips: Chips,
    pub agreement: f64,
}

/// Try each candidate chip rate and keep the cleanest valid decode.
pub fn demodulate(
    samples: &[RowSample],
    rates: &[f64],
    exposure: f64,
    row_time: f64,
    theta: f64,
    min_agreement: f64,
) -> Result<Demodulated> {
    let edges = boundary_times(samples, exposure, row_time, theta);
    let mut best: Option<Demodulated> = None;
    let mut last_err = Error::InsufficientData("no candidate chip rate".into());
    for &rate in rates {
        let attempt = recover_clock(&edges, rate).and_then(|clock| {
            let (chips, agreement) = slot_votes(samples, &clock, exposure)?.chips()?;
            if agreement < min_agreement {
                return Err(Error::Sync { len: FRAME_CHIPS });
            }
            let doubled: Vec<bool> = chips.0.iter().chain(&chips.0).copied().collect();
            let id = decode_stream(&doubled)?;
            Ok(Demodulated { id, clock, chips, agreement })
        });
        match attempt {
            Ok(d) => {
                let better = best.as_ref().is_none_or(|b| {
                    (d.agreement, d.clock.coherence) > (b.agreement, b.clock.coherence)
                });
                if better {
                    best = Some(d);
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txcodec::{codeword, Waveform};

    /// Row samples of a waveform as seen by a bank of frames.
    fn sample(w: &Waveform, frames: usize, rows: usize, rt: f64, e: f64, period: f64) -> Vec<RowSample> {
        let mut out = vec![];
        for f in 0..frames {
            let t0 = f as f64 * period + 0.37e-3 * f as f64;
            for r in 0..rows {
                let t = t0 + r as f64 * rt;
                out.push(RowSample { frame: f, row: r, t, level: w.mean_level(t, e) });
            }
        }
        out
    }

    #[test]
    fn boundaries_land_near_true_edges() {
        let w = Waveform::new(Chips(vec![true, false]), 4000.0, 1e-5).unwrap();
        let s = sample(&w, 1, 40, 62.5e-6, 125e-6, 0.05);
        let b = boundary_times(&s, 125e-6, 62.5e-6, 0.05);
        assert!(!b.is_empty());
        for t in b {
            let off = ((t - 1e-5) * 4000.0).rem_euclid(1.0);
            assert!(off.min(1.0 - off) * 250e-6 <= 32e-6, "{t}");
        }
    }

    #[test]
    fn every_id_demodulates_from_short_frames() {
        for id in LocationId::all() {
            let w = Waveform::new(codeword(id), 4000.0, 2.1e-4).unwrap();
            let s = sample(&w, 20, 20, 62.5e-6, 125e-6, 0.05);
            let d = demodulate(&s, &[2000.0, 4000.0], 125e-6, 62.5e-6, 0.05, 0.9).unwrap();
            assert_eq!(d.id, id);
            assert_eq!(d.clock.rate, 4000.0);
            assert_eq!(d.agreement, 1.0);
        }
    }

    #[test]
    fn slow_chips_are_not_mistaken_for_fast() {
        let id = LocationId::new(0b10011).unwrap();
        let w = Waveform::new(codeword(id), 2000.0, 0.0).unwrap();
        let s = sample(&w, 30, 60, 62.5e-6, 125e-6, 0.0503);
        let d = demodulate(&s, &[4000.0, 2000.0], 125e-6, 62.5e-6, 0.05, 0.9).unwrap();
        assert_eq!((d.id, d.clock.rate), (id, 2000.0));
    }

    #[test]
    fn steady_light_has_no_clock() {
        let w = Waveform::steady_on();
        let s = sample(&w, 5, 20, 62.5e-6, 125e-6, 0.05);
        assert!(demodulate(&s, &[4000.0], 125e-6, 62.5e-6, 0.05, 0.9).is_err());
    }
}
