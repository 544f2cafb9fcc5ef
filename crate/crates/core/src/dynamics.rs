//! Time evolution of swarms.
//!
//! Two integrators share one update structure. In each step the real-part
//! types are updated from the imaginary-part types, then the imaginary-part
//! types from the freshly updated real-part types:
//!
//! ```text
//! s1' = s1 + dt (k Lap s4 + V s2)      s2' = s2 + dt (k Lap s1' + V s3')
//! s3' = s3 + dt (k Lap s2 + V s4)      s4' = s4 + dt (k Lap s3' + V s1')
//! ```
//!
//! which keeps `psi = (s1 - s3) + i (s2 - s4)` on the symplectic-Euler
//! discretisation of `i dpsi/dt = -k Lap psi + V psi`.
//! [`step_meanfield`] applies it to expected counts; [`step_stochastic`]
//! realises it with sample events: connected photons emitted by samples of
//! type `j`, hopping, and converting to type `j + 1`; plus local creation
//! events from the potential and from the diagonal of the Laplacian.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::lattice::{laplacian_values, FieldGrid, Lattice};
use crate::par;
use crate::rng::{Epoch, Streams};
use crate::swarm::{multinomial, thin, PhotonCohort, SampleType, Swarm, SwarmState};

/// Quadrature nodes used to average conversion channels over the random
/// photon delay of the drift rule.
const DRIFT_NODES: usize = 64;

/// Tunable rates of one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepParams {
    pub dt: f64,
    /// Per-step hop probability of a connected photon.
    pub p_phot: f64,
    /// Photon emission rate per particle sample per unit time, for a
    /// swarm with unit kinetic coefficient. `None` calibrates it from the
    /// swarm's lattice so the expected dynamics match the mean-field step.
    pub r_emit: Option<f64>,
    /// Photon lifetime before conversion (at least `dt`).
    pub dt_phot: f64,
    /// Enables the mean-velocity conversion rule.
    pub drift_rule: bool,
    /// Memory constant of the per-step resampling; `None` only cancels pairs.
    pub memory: Option<f64>,
    /// Rate at which a sample of type `j` spawns a sample of type `j - 1`
    /// in its own cell, balancing the photon outflow. `None` uses the
    /// emission rate, which keeps the row sums of the Laplacian at zero.
    pub kinetic_diagonal: Option<f64>,
    /// Largest allowed sample population per swarm.
    pub population_cap: Option<u64>,
}

impl StepParams {
    /// Calibrated parameters: photons always hop, live one step and the
    /// emission rate reproduces the Laplacian coefficient.
    pub fn calibrated(dt: f64) -> Self {
        Self {
            dt,
            p_phot: 1.0,
            r_emit: None,
            dt_phot: dt,
            drift_rule: false,
            memory: None,
            kinetic_diagonal: None,
            population_cap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.0..=1.0).contains(&self.p_phot) {
            return Err(Error::Config(format!("p_phot {} outside [0, 1]", self.p_phot)));
        }
        if let Some(r) = self.r_emit {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("r_emit must be non-negative, got {r}")));
            }
        }
        if let Some(d) = self.kinetic_diagonal {
            if !d.is_finite() {
                return Err(Error::Config("kinetic_diagonal must be finite".into()));
            }
        }
        if self.dt_phot < self.dt * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "photon lifetime {} shorter than dt {}",
                self.dt_phot, self.dt
            )));
        }
        if let Some(a) = self.memory {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("memory constant must be positive, got {a}")));
            }
        }
        Ok(())
    }

    /// Number of hop steps a photon lives.
    pub fn lifetime_steps(&self) -> u32 {
        ((self.dt_phot / self.dt).round() as u32).max(1)
    }

    /// Emission and diagonal rates for one swarm.
    pub fn rates_for(&self, swarm: &Swarm) -> Rates {
        let lattice = swarm.lattice();
        let d = lattice.axes() as f64;
        let h = lattice.spacing();
        let emit = match self.r_emit {
            Some(r) => r * swarm.kinetic,
            None => {
                let hops = self.lifetime_steps() as f64 * self.p_phot;
                if hops > 0.0 {
                    2.0 * d * swarm.kinetic / (hops * h * h)
                } else {
                    0.0
                }
            }
        };
        let diagonal = match self.kinetic_diagonal {
            Some(r) => r * swarm.kinetic,
            None => emit,
        };
        Rates { emit, diagonal }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub emit: f64,
    pub diagonal: f64,
}

/// Per-cell creation/annihilation rate acting on every sample type.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub values: FieldGrid,
}

impl PotentialField {
    pub fn zero(lattice: &Arc<Lattice>) -> Self {
        Self {
            values: FieldGrid::zeros(lattice),
        }
    }

    pub fn new(values: FieldGrid) -> Result<Self> {
        if values.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("potential values must be finite".into()));
        }
        Ok(Self { values })
    }

    /// `strength * |x - center|^2` with `x` in physical units.
    pub fn harmonic(lattice: &Arc<Lattice>, strength: f64, center: &[f64]) -> Self {
        let h = lattice.spacing();
        let values = FieldGrid::from_fn(lattice, |c| {
            strength
                * c.iter()
                    .zip(center)
                    .map(|(&x, &x0)| (x as f64 * h - x0).powi(2))
                    .sum::<f64>()
        });
        Self { values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.max_abs()
    }

    fn check(&self, swarm: &Swarm) -> Result<()> {
        if self.values.spec() != swarm.lattice().spec() {
            return Err(Error::ShapeMismatch(
                "potential and swarm live on different lattices".into(),
            ));
        }
        Ok(())
    }
}

/// Largest stable `dt` for the mean-field step: `2 / (k * 4d/h^2 + max|V|)`,
/// which reduces to `h^2 / (2d)` for a free elementary particle.
pub fn stable_dt(swarm: &Swarm, potential: &PotentialField) -> f64 {
    let l = swarm.lattice();
    let kinetic = swarm.kinetic * 4.0 * l.axes() as f64 / (l.spacing() * l.spacing());
    2.0 / (kinetic + potential.max_abs())
}

/// One explicit mean-field step of the four coupled type equations,
/// followed by per-cell pair cancellation.
pub fn step_meanfield(swarm: &mut Swarm, potential: &PotentialField, params: &StepParams) -> Result<()> {
    params.validate()?;
    potential.check(swarm)?;
    let bound = stable_dt(swarm, potential);
    if params.dt > bound * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "dt = {} exceeds the stability bound {bound}",
            params.dt
        )));
    }
    let dt = params.dt;
    let k = swarm.kinetic;
    let v = &potential.values.values;
    let lattice = Arc::clone(swarm.lattice());
    // target type, Laplacian source (target - 1), potential source (target + 1)
    for targets in [
        [SampleType::PlusReal, SampleType::MinusReal],
        [SampleType::PlusImag, SampleType::MinusImag],
    ] {
        let updates: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| {
                let lap_src = &swarm.counts[t.predecessor().index()].values;
                let pot_src = &swarm.counts[t.successor().index()].values;
                let lap = laplacian_values(&lattice, lap_src);
                lap.iter()
                    .zip(pot_src)
                    .zip(v)
                    .map(|((l, p), vv)| dt * (k * l + vv * p))
                    .collect()
            })
            .collect();
        for (t, du) in targets.iter().zip(updates) {
            for (s, d) in swarm.counts[t.index()].values.iter_mut().zip(du) {
                *s += d;
            }
        }
    }
    swarm.cancel_pairs();
    Ok(())
}

/// Mean-field step for every swarm in the state.
pub fn step_meanfield_state(
    state: &mut SwarmState,
    potential: &PotentialField,
    params: &StepParams,
) -> Result<()> {
    for s in &mut state.particles {
        step_meanfield(s, potential, params)?;
    }
    state.time += params.dt;
    state.step += 1;
    Ok(())
}

/// Weights `(w0, w1, w2, w3)` of the four type-shift channels of `exp(i phi)`:
/// `w0 - w2 = cos phi`, `w1 - w3 = sin phi`, all non-negative.
pub fn phase_decomposition(phi: f64) -> [f64; 4] {
    let (s, c) = phi.sin_cos();
    [c.max(0.0), s.max(0.0), (-c).max(0.0), (-s).max(0.0)]
}

/// Mean velocity tag of the samples in `cell`; zero when untagged.
pub fn mean_velocity(swarm: &Swarm, cell: usize) -> Result<Vec<f64>> {
    if cell >= swarm.cell_count() {
        return Err(Error::Domain(format!("cell {cell} out of range")));
    }
    if swarm.cell_population(cell) == 0.0 {
        return Err(Error::Domain(format!("cell {cell} holds no samples")));
    }
    Ok(match &swarm.tags {
        Some(t) => t.mean(cell),
        None => vec![0.0; swarm.lattice().axes()],
    })
}

/// Averaged conversion-channel probabilities for photons carrying momentum
/// `p` (squared norm `p2`) and particle mass `mass`, with the delay drawn
/// uniformly from `(0, max_delay)`.
pub fn drift_channel_probs(p2: f64, mass: f64, max_delay: f64) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for i in 0..DRIFT_NODES {
        let delay = max_delay * (i as f64 + 0.5) / DRIFT_NODES as f64;
        let w = phase_decomposition(delay * p2 / mass);
        let total: f64 = w.iter().sum();
        for (a, x) in acc.iter_mut().zip(w) {
            *a += x / total / DRIFT_NODES as f64;
        }
    }
    acc
}

/// One stochastic step of the sample-event dynamics: photon emission,
/// photon hops, conversion to the successor type, local creation events,
/// pair cancellation and (optionally) resampling.
pub fn step_stochastic(
    swarm: &mut Swarm,
    potential: &PotentialField,
    params: &StepParams,
    streams: &mut Streams,
) -> Result<()> {
    params.validate()?;
    potential.check(swarm)?;
    if swarm.is_empty() && swarm.photon_population() == 0.0 {
        return Ok(());
    }
    let rates = params.rates_for(swarm);
    for sources in [
        [SampleType::PlusImag, SampleType::MinusImag],
        [SampleType::PlusReal, SampleType::MinusReal],
    ] {
        let epoch = streams.next_epoch();
        half_step(swarm, potential, params, rates, sources, &epoch);
        swarm.cancel_pairs();
    }
    if let Some(memory) = params.memory {
        let epoch = streams.next_epoch();
        swarm.resample(memory, &epoch)?;
    }
    if let Some(cap) = params.population_cap {
        let population = (swarm.population() + swarm.photon_population()) as u64;
        if population > cap {
            return Err(Error::MemoryBudget { population, cap });
        }
    }
    Ok(())
}

/// Stochastic step for every swarm in the state.
pub fn step_stochastic_state(
    state: &mut SwarmState,
    potential: &PotentialField,
    params: &StepParams,
    streams: &mut Streams,
) -> Result<()> {
    for s in &mut state.particles {
        step_stochastic(s, potential, params, streams)?;
    }
    state.time += params.dt;
    state.step += 1;
    Ok(())
}

struct CellEvents {
    emitted: [f64; 2],
    spawned: [(SampleType, f64); 2],
}

fn half_step(
    swarm: &mut Swarm,
    potential: &PotentialField,
    params: &StepParams,
    rates: Rates,
    sources: [SampleType; 2],
    epoch: &Epoch,
) {
    let dt = params.dt;
    let cells = swarm.cell_count();
    let axes = swarm.lattice().axes();
    let v = &potential.values.values;

    // emission and local creation, both read from the unchanged source types
    let events: Vec<CellEvents> = {
        let sw = &*swarm;
        par::map_cells(cells, |cell| {
            let mut emitted = [0.0; 2];
            let mut spawned = [(sources[0], 0.0); 2];
            for (i, &src) in sources.iter().enumerate() {
                let c = sw.count(src, cell);
                if c == 0.0 {
                    spawned[i] = (src.predecessor(), 0.0);
                    continue;
                }
                let mut rng = epoch.stream(cell as u64, i as u8);
                emitted[i] = thin(c, rates.emit * dt, &mut rng);
                let rate = v[cell] + rates.diagonal;
                let target = if rate >= 0.0 {
                    src.predecessor()
                } else {
                    src.successor()
                };
                spawned[i] = (target, thin(c, rate.abs() * dt, &mut rng));
            }
            CellEvents { emitted, spawned }
        })
    };

    let cell_velocity: Option<Vec<Vec<f64>>> = swarm
        .tags
        .as_ref()
        .map(|t| (0..cells).map(|c| t.mean(c)).collect());

    for (i, &src) in sources.iter().enumerate() {
        let counts: Vec<f64> = events.iter().map(|e| e.emitted[i]).collect();
        if counts.iter().all(|&c| c == 0.0) {
            continue;
        }
        let velocity = cell_velocity.as_ref().map(|vel| {
            let mut sums = vec![0.0; cells * axes];
            for cell in 0..cells {
                for a in 0..axes {
                    sums[cell * axes + a] = counts[cell] * vel[cell][a];
                }
            }
            sums
        });
        swarm.photons.push(PhotonCohort {
            kind: src,
            age: 0,
            counts,
            velocity,
        });
    }

    // hop, age and convert the photons emitted by this half's source types
    let lifetime = params.lifetime_steps();
    let mass = 0.5 / swarm.kinetic;
    let mut remaining = Vec::with_capacity(swarm.photons.len());
    let cohorts = std::mem::take(&mut swarm.photons);
    for (ci, mut cohort) in cohorts.into_iter().enumerate() {
        if !sources.contains(&cohort.kind) {
            remaining.push(cohort);
            continue;
        }
        hop_cohort(&mut cohort, swarm.lattice(), params.p_phot, epoch, 16 + (ci % 200) as u8);
        cohort.age += 1;
        if cohort.age >= lifetime {
            convert_cohort(swarm, &cohort, params, mass, epoch, 250);
        } else {
            remaining.push(cohort);
        }
    }
    swarm.photons = remaining;

    for (cell, e) in events.iter().enumerate() {
        for &(target, n) in &e.spawned {
            if n > 0.0 {
                swarm.add(target, cell, n);
                if let (Some(tags), Some(vel)) = (swarm.tags.as_mut(), cell_velocity.as_ref()) {
                    tags.add(cell, n, &vel[cell]);
                }
            }
        }
    }
}

fn hop_cohort(cohort: &mut PhotonCohort, lattice: &Arc<Lattice>, p_hop: f64, epoch: &Epoch, lane: u8) {
    if p_hop == 0.0 {
        return;
    }
    let cells = cohort.counts.len();
    let axes = lattice.axes();
    let per_link = p_hop / (2 * axes) as f64;
    let probs = vec![per_link; 2 * axes];
    let moves: Vec<Vec<(usize, f64)>> = {
        let counts = &cohort.counts;
        par::map_cells(cells, |cell| {
            let n = counts[cell];
            if n == 0.0 {
                return Vec::new();
            }
            let mut rng = epoch.stream(cell as u64, lane);
            let split = multinomial(n.round() as u64, &probs, &mut rng);
            let mut out = Vec::with_capacity(2 * axes + 1);
            for (link, &k) in lattice.links(cell).iter().zip(&split) {
                if k == 0 {
                    continue;
                }
                let arrived = if link.weight >= 1.0 {
                    k
                } else if link.weight <= 0.0 {
                    0
                } else {
                    Binomial::new(k, link.weight).expect("valid").sample(&mut rng)
                };
                out.push((link.target, arrived as f64));
            }
            out.push((cell, split[2 * axes] as f64));
            out
        })
    };
    let mut counts = vec![0.0; cells];
    let mut velocity = cohort.velocity.as_ref().map(|_| vec![0.0; cells * axes]);
    for (cell, out) in moves.iter().enumerate() {
        let n = cohort.counts[cell];
        for &(target, k) in out {
            counts[target] += k;
            if let (Some(new), Some(old)) = (velocity.as_mut(), cohort.velocity.as_ref()) {
                for a in 0..axes {
                    new[target * axes + a] += k * old[cell * axes + a] / n;
                }
            }
        }
    }
    cohort.counts = counts;
    cohort.velocity = velocity;
}

fn convert_cohort(
    swarm: &mut Swarm,
    cohort: &PhotonCohort,
    params: &StepParams,
    mass: f64,
    epoch: &Epoch,
    lane: u8,
) {
    let axes = swarm.lattice().axes();
    let base = cohort.kind.successor();
    for (cell, &n) in cohort.counts.iter().enumerate() {
        if n == 0.0 {
            continue;
        }
        let v: Vec<f64> = match &cohort.velocity {
            Some(sums) => (0..axes).map(|a| sums[cell * axes + a] / n).collect(),
            None => vec![0.0; axes],
        };
        if params.drift_rule {
            let p2: f64 = v.iter().map(|x| (mass * x).powi(2)).sum();
            let probs = drift_channel_probs(p2, mass, params.dt_phot);
            let mut rng = epoch.stream(cell as u64, lane);
            let split = multinomial(n.round() as u64, &probs[..3], &mut rng);
            for (k, &count) in split.iter().enumerate() {
                if count > 0 {
                    swarm.add(base.shift(k as i64), cell, count as f64);
                }
            }
        } else {
            swarm.add(base, cell, n);
        }
        if let Some(tags) = swarm.tags.as_mut() {
            tags.add(cell, n, &v);
        }
    }
}

/// Expected one-step change of the amplitude `(s1 - s3) + i (s2 - s4)`
/// predicted by the mean-field update, for comparison with sample averages.
pub fn meanfield_amplitudes_after(
    swarm: &Swarm,
    potential: &PotentialField,
    params: &StepParams,
) -> Result<Vec<Complex64>> {
    let mut copy = swarm.clone();
    copy.photons.clear();
    step_meanfield(&mut copy, potential, params)?;
    Ok(copy.amplitudes())
}

/// Uniform draw used by tests that need an explicit delay.
pub fn draw_delay<R: Rng + ?Sized>(max_delay: f64, rng: &mut R) -> f64 {
    max_delay * rng.random::<f64>()
}
