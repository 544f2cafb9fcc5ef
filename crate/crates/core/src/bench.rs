//! Step-time scaling with the number of independent particles.

use std::time::Instant;

use crate::dynamics::{step_stochastic, PotentialField, StepParams};
use crate::error::{Error, Result};
use crate::lattice::ComplexField;
use crate::rng::Streams;
use crate::swarm::sample_from_wavefunction;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub particles: usize,
    pub cells: usize,
    /// Median wall time of one step of all particles.
    pub seconds_per_step: f64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Coefficient of determination of the least-squares line through
    /// `(n N, seconds)`; 1 for fewer than three rows.
    pub r_squared: f64,
}

/// Times stochastic steps of `n` independent copies of `psi` for each `n`.
/// Every repeat starts from fresh swarms; the median per-step time is kept.
pub fn bench_scaling(
    psi: &ComplexField,
    potential: &PotentialField,
    params: &StepParams,
    particles: &[usize],
    samples: u64,
    steps: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport> {
    if particles.is_empty() {
        return Err(Error::Config("particle list is empty".into()));
    }
    if particles.contains(&0) || steps == 0 || repeats == 0 {
        return Err(Error::Config("particle counts, steps and repeats must be positive".into()));
    }
    let cells = psi.len();
    let mut rows = Vec::with_capacity(particles.len());
    for &n in particles {
        let mut times = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let mut swarms = (0..n)
                .map(|i| {
                    let mut s = sample_from_wavefunction(psi, samples, seed ^ (i as u64) << 20)?;
                    s.id = i as u32;
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut streams = Streams::new(seed.wrapping_add(r as u64));
            let start = Instant::now();
            for _ in 0..steps {
                for s in &mut swarms {
                    step_stochastic(s, potential, params, &mut streams)?;
                }
            }
            times.push(start.elapsed().as_secs_f64() / steps as f64);
        }
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            particles: n,
            cells,
            seconds_per_step: times[times.len() / 2],
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.particles * r.cells) as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds_per_step).collect();
    Ok(BenchReport {
        r_squared: r_squared(&xs, &ys),
        rows,
    })
}

/// R² of the least-squares line through the points.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 3 {
        return 1.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}
