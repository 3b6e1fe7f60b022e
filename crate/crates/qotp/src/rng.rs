//! Deterministic randomness plumbing.
//!
//! Every stochastic decision in the simulator consumes raw `u64` draws from a
//! [`DrawSource`]. A fresh session draws from a seeded ChaCha stream; a replay
//! feeds back the draws recorded in a transcript. Keeping the draws themselves
//! as integers makes transcripts byte-stable across platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use std::collections::VecDeque;

/// A stream of raw 64-bit draws.
pub trait DrawSource {
    fn draw(&mut self) -> u64;
}

impl<T: DrawSource + ?Sized> DrawSource for &mut T {
    fn draw(&mut self) -> u64 {
        (**self).draw()
    }
}

/// Seeded pseudorandom draw stream backing fresh session runs.
pub struct SessionRng(ChaCha8Rng);

impl SessionRng {
    pub fn from_seed(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl DrawSource for SessionRng {
    fn draw(&mut self) -> u64 {
        self.0.next_u64()
    }
}

/// Replays a recorded draw sequence; reports exhaustion instead of panicking
/// so a corrupted transcript surfaces as a comparison mismatch.
pub struct RecordedDraws {
    queue: VecDeque<u64>,
    exhausted: bool,
}

impl RecordedDraws {
    pub fn new(draws: impl IntoIterator<Item = u64>) -> Self {
        Self { queue: draws.into_iter().collect(), exhausted: false }
    }

    /// True once a draw was requested past the end of the recording.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// Number of recorded draws never consumed.
    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl DrawSource for RecordedDraws {
    fn draw(&mut self) -> u64 {
        match self.queue.pop_front() {
            Some(d) => d,
            None => {
                self.exhausted = true;
                0
            }
        }
    }
}

/// Wraps a source and logs every draw, so the session loop can attach the
/// draws consumed by each step to that step's transcript event.
pub struct Tap<S: DrawSource> {
    inner: S,
    log: Vec<u64>,
}

impl<S: DrawSource> Tap<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, log: Vec::new() }
    }

    /// Returns and clears the draws consumed since the previous call.
    pub fn take(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.log)
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: DrawSource> DrawSource for Tap<S> {
    fn draw(&mut self) -> u64 {
        let d = self.inner.draw();
        self.log.push(d);
        d
    }
}

/// Maps a raw draw to a uniform double in `[0, 1)` using the top 53 bits.
pub fn unit_f64(draw: u64) -> f64 {
    (draw >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// SplitMix64 mixing step.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derives the per-trial seed for trial `index` from an ensemble master seed.
///
/// Stable across releases: changing this function invalidates recorded
/// transcripts, so it is part of the on-disk format.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x9E3779B97F4A7C15)))
}
