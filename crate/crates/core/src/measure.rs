//! Amplitude quantum, state reduction and Born-rule sampling.

use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::swarm::Swarm;

/// Relative slack on the reduction threshold, so amplitudes equal to the
/// quantum up to rounding survive.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplitudeQuantum {
    epsilon: f64,
}

impl AmplitudeQuantum {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Domain(format!("amplitude quantum {epsilon} outside (0, 1]")));
        }
        Ok(Self { epsilon })
    }

    /// `1 / sqrt(n)` for a basis of `n` labels.
    pub fn for_size(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("empty basis".into()));
        }
        Self::new(1.0 / (n as f64).sqrt())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn keeps(&self, amplitude: Complex64) -> bool {
        amplitude.norm() >= self.epsilon * (1.0 - THRESHOLD_SLACK)
    }
}

/// Unit-norm amplitudes over basis labels `0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteState {
    amplitudes: Vec<Complex64>,
}

impl DiscreteState {
    /// Normalises `amplitudes`; fails when they are all zero.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate);
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Number of labels with a nonzero amplitude.
    pub fn term_count(&self) -> usize {
        self.amplitudes.iter().filter(|a| a.norm_sqr() > 0.0).count()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Zeroes every amplitude below the quantum and renormalises. A state with
/// nothing to drop is returned unchanged, which makes the map idempotent
/// bit for bit.
pub fn reduce(s: &DiscreteState, q: AmplitudeQuantum) -> Result<DiscreteState> {
    if s.amplitudes.iter().all(|&a| a.norm_sqr() == 0.0 || q.keeps(a)) {
        return Ok(s.clone());
    }
    let kept: Vec<Complex64> = s
        .amplitudes
        .iter()
        .map(|&a| if q.keeps(a) { a } else { Complex64::default() })
        .collect();
    if kept.iter().all(|a| a.norm_sqr() == 0.0) {
        return Err(Error::TotalReduction { epsilon: q.epsilon });
    }
    DiscreteState::new(kept)
}

/// `round(|lambda_j|^2 / eps^2)`, ties to even.
pub fn elementary_event_counts(s: &DiscreteState, q: AmplitudeQuantum) -> Vec<u64> {
    let e2 = q.epsilon * q.epsilon;
    s.amplitudes
        .iter()
        .map(|a| (a.norm_sqr() / e2).round_ties_even() as u64)
        .collect()
}

/// Draws one elementary event uniformly and returns its label.
pub fn born_measure<R: Rng + ?Sized>(s: &DiscreteState, q: AmplitudeQuantum, rng: &mut R) -> Result<usize> {
    let counts = elementary_event_counts(s, q);
    draw_from_urn(&counts, rng)
}

fn draw_from_urn<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Result<usize> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Degenerate);
    }
    let mut pick = rng.random_range(0..total);
    for (label, &c) in counts.iter().enumerate() {
        if pick < c {
            return Ok(label);
        }
        pick -= c;
    }
    unreachable!("pick below urn total")
}

/// Outcome of a position measurement on a swarm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub cell: usize,
    /// `|psi(cell)|^2` of the pre-measurement state.
    pub probability: f64,
}

/// Cell-basis state of a swarm, reduced by the quantum.
pub fn swarm_state(swarm: &Swarm, q: AmplitudeQuantum) -> Result<DiscreteState> {
    let (psi, _) = swarm.reconstruct_wavefunction()?;
    reduce(&DiscreteState::new(psi.values)?, q)
}

/// Reduces the swarm's cell-basis state, draws a cell by the Born rule and
/// collapses the swarm onto it: samples outside the outcome cell and all
/// photons are removed, so the phase in the outcome cell is kept.
pub fn measure_swarm<R: Rng + ?Sized>(
    swarm: &mut Swarm,
    q: AmplitudeQuantum,
    rng: &mut R,
) -> Result<Measurement> {
    let (psi, _) = swarm.reconstruct_wavefunction()?;
    let raw = DiscreteState::new(psi.values)?;
    let reduced = reduce(&raw, q)?;
    let cell = born_measure(&reduced, q, rng)?;
    let probability = raw.amplitudes[cell].norm_sqr();
    collapse(swarm, cell);
    Ok(Measurement { cell, probability })
}

fn collapse(swarm: &mut Swarm, cell: usize) {
    for grid in swarm.counts.iter_mut() {
        for (c, v) in grid.values.iter_mut().enumerate() {
            if c != cell {
                *v = 0.0;
            }
        }
    }
    swarm.photons.clear();
    if let Some(tags) = swarm.tags.as_mut() {
        for c in 0..swarm.counts[0].values.len() {
            if c != cell {
                tags.scale_cell(c, 0.0);
            }
        }
    }
}

/// One log line per draw.
pub fn meas_line(step: u64, label: usize, p_theory: f64) -> String {
    format!("MEAS {step} {label} {p_theory:.12}")
}

/// Result of comparing observed label frequencies with Born probabilities.
#[derive(Clone, Debug)]
pub struct BornStatistics {
    pub draws: u64,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    /// Per-label `(f - p) / sqrt(p (1 - p) / draws)`; zero where `p` is 0 or 1.
    pub z_scores: Vec<f64>,
    pub chi_square: f64,
    pub p_value: f64,
}

impl BornStatistics {
    pub fn new(observed: Vec<u64>, expected: Vec<f64>) -> Result<Self> {
        if observed.len() != expected.len() {
            return Err(Error::ShapeMismatch("observed and expected label counts differ".into()));
        }
        let draws: u64 = observed.iter().sum();
        if draws == 0 {
            return Err(Error::Domain("no draws".into()));
        }
        let n = draws as f64;
        let z_scores = observed
            .iter()
            .zip(&expected)
            .map(|(&o, &p)| {
                let var = p * (1.0 - p) / n;
                if var > 0.0 {
                    (o as f64 / n - p) / var.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut chi_square = 0.0;
        let mut bins = 0usize;
        for (&o, &p) in observed.iter().zip(&expected) {
            if p > 0.0 {
                chi_square += (o as f64 - n * p).powi(2) / (n * p);
                bins += 1;
            } else if o > 0 {
                chi_square = f64::INFINITY;
            }
        }
        let p_value = if chi_square.is_infinite() {
            0.0
        } else if bins < 2 {
            1.0
        } else {
            let dist = ChiSquared::new((bins - 1) as f64)
                .map_err(|e| Error::Domain(format!("chi-square: {e}")))?;
            1.0 - dist.cdf(chi_square)
        };
        Ok(Self {
            draws,
            observed,
            expected,
            z_scores,
            chi_square,
            p_value,
        })
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z_scores.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// Repeated Born draws from one state.
pub fn born_statistics<R: Rng + ?Sized>(
    s: &DiscreteState,
    q: AmplitudeQuantum,
    draws: u64,
    rng: &mut R,
) -> Result<BornStatistics> {
    let counts = elementary_event_counts(s, q);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Degenerate);
    }
    let mut observed = vec![0u64; s.len()];
    for _ in 0..draws {
        observed[draw_from_urn(&counts, rng)?] += 1;
    }
    BornStatistics::new(observed, s.probabilities())
}
