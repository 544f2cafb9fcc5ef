//! Discrete-sample representation of a quantum particle.
//!
//! A swarm stores, per cell, how many samples of each of the four sign/part
//! types sit there. The wave function is read off as
//! `psi = (s1 - s3) + i (s2 - s4)` divided by the swarm's scale.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::lattice::{ComplexField, FieldGrid, Lattice};
use crate::rng::{Epoch, Streams};

pub type ParticleId = u32;

/// Tolerance on `||psi|| = 1` accepted by the samplers.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Real,
    Imag,
}

/// The four sample types, numbered 1..=4 as (+,r), (+,i), (−,r), (−,i).
/// Numbering is cyclic: successor is `j + 1 mod 4` and negation `j + 2 mod 4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleType {
    PlusReal = 0,
    PlusImag = 1,
    MinusReal = 2,
    MinusImag = 3,
}

impl SampleType {
    pub const ALL: [SampleType; 4] = [
        SampleType::PlusReal,
        SampleType::PlusImag,
        SampleType::MinusReal,
        SampleType::MinusImag,
    ];

    pub fn from_index(i: usize) -> SampleType {
        Self::ALL[i % 4]
    }

    /// Parses the 1-based type number.
    pub fn from_number(n: u8) -> Result<SampleType> {
        match n {
            1..=4 => Ok(Self::ALL[(n - 1) as usize]),
            _ => Err(Error::Domain(format!("sample type number {n} not in 1..=4"))),
        }
    }

    /// Zero-based position in [`SampleType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn shift(self, k: i64) -> SampleType {
        Self::from_index((self as i64 + k).rem_euclid(4) as usize)
    }

    pub fn successor(self) -> SampleType {
        self.shift(1)
    }

    pub fn predecessor(self) -> SampleType {
        self.shift(-1)
    }

    pub fn negate(self) -> SampleType {
        self.shift(2)
    }

    pub fn sign(self) -> Sign {
        match self {
            SampleType::PlusReal | SampleType::PlusImag => Sign::Plus,
            _ => Sign::Minus,
        }
    }

    pub fn part(self) -> Part {
        match self {
            SampleType::PlusReal | SampleType::MinusReal => Part::Real,
            _ => Part::Imag,
        }
    }

    /// Amplitude contributed by one sample of this type: 1, i, −1, −i.
    pub fn unit(self) -> Complex64 {
        match self {
            SampleType::PlusReal => Complex64::new(1.0, 0.0),
            SampleType::PlusImag => Complex64::new(0.0, 1.0),
            SampleType::MinusReal => Complex64::new(-1.0, 0.0),
            SampleType::MinusImag => Complex64::new(0.0, -1.0),
        }
    }
}

impl fmt::Display for SampleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (s, p) = match self {
            SampleType::PlusReal => ('+', 'r'),
            SampleType::PlusImag => ('+', 'i'),
            SampleType::MinusReal => ('-', 'r'),
            SampleType::MinusImag => ('-', 'i'),
        };
        write!(f, "({s},{p})")
    }
}

/// One classical sample of a particle. Swarms are stored aggregated; this
/// record is used where per-sample parameters matter.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub particle: ParticleId,
    pub kind: SampleType,
    pub cell: Vec<i64>,
    /// Velocity tag (one component per axis), if any.
    pub tag: Option<Vec<f64>>,
}

/// Aggregated velocity tags: per-cell sum of tag vectors and number of
/// tagged samples.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityTags {
    pub axes: usize,
    pub sums: Vec<f64>,
    pub tagged: Vec<f64>,
}

impl VelocityTags {
    pub fn new(cells: usize, axes: usize) -> Self {
        Self {
            axes,
            sums: vec![0.0; cells * axes],
            tagged: vec![0.0; cells],
        }
    }

    pub fn mean(&self, cell: usize) -> Vec<f64> {
        let n = self.tagged[cell];
        let s = &self.sums[cell * self.axes..(cell + 1) * self.axes];
        if n > 0.0 {
            s.iter().map(|v| v / n).collect()
        } else {
            vec![0.0; self.axes]
        }
    }

    pub fn add(&mut self, cell: usize, count: f64, velocity: &[f64]) {
        if count <= 0.0 {
            return;
        }
        self.tagged[cell] += count;
        for (s, v) in self.sums[cell * self.axes..(cell + 1) * self.axes]
            .iter_mut()
            .zip(velocity)
        {
            *s += count * v;
        }
    }

    /// Keeps the per-cell mean while scaling the tagged population.
    pub fn scale_cell(&mut self, cell: usize, factor: f64) {
        self.tagged[cell] *= factor;
        for s in &mut self.sums[cell * self.axes..(cell + 1) * self.axes] {
            *s *= factor;
        }
    }
}

/// Connected-photon samples emitted in the same step with the same type.
#[derive(Clone, Debug)]
pub struct PhotonCohort {
    pub kind: SampleType,
    /// Completed hop steps since emission.
    pub age: u32,
    pub counts: Vec<f64>,
    /// Per-cell sums of the emitting cells' mean velocities.
    pub velocity: Option<Vec<f64>>,
}

impl PhotonCohort {
    pub fn population(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// The swarm of one particle.
#[derive(Clone, Debug)]
pub struct Swarm {
    pub id: ParticleId,
    lattice: Arc<Lattice>,
    /// Per-type count fields, indexed by [`SampleType::index`].
    pub counts: [FieldGrid; 4],
    pub photons: Vec<PhotonCohort>,
    /// Samples per unit wave-function amplitude.
    pub scale: f64,
    /// Coefficient of the Laplacian in this particle's kinetic term
    /// (1 for an elementary particle, `1/n` for an `n`-constituent composite).
    pub kinetic: f64,
    pub tags: Option<VelocityTags>,
}

impl Swarm {
    pub fn empty(id: ParticleId, lattice: &Arc<Lattice>, scale: f64) -> Self {
        assert!(scale > 0.0, "scale must be positive");
        Self {
            id,
            lattice: Arc::clone(lattice),
            counts: std::array::from_fn(|_| FieldGrid::zeros(lattice)),
            photons: Vec::new(),
            scale,
            kinetic: 1.0,
            tags: None,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn cell_count(&self) -> usize {
        self.lattice.cell_count()
    }

    pub fn count(&self, kind: SampleType, cell: usize) -> f64 {
        self.counts[kind.index()].values[cell]
    }

    pub fn add(&mut self, kind: SampleType, cell: usize, n: f64) {
        self.counts[kind.index()].values[cell] += n;
    }

    /// Particle samples only (photons excluded).
    pub fn population(&self) -> f64 {
        self.counts.iter().map(FieldGrid::total).sum()
    }

    pub fn cell_population(&self, cell: usize) -> f64 {
        self.counts.iter().map(|f| f.values[cell]).sum()
    }

    pub fn photon_population(&self) -> f64 {
        self.photons.iter().map(PhotonCohort::population).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.population() == 0.0
    }

    /// Unnormalised amplitude of one cell in sample units.
    pub fn raw_amplitude(&self, cell: usize) -> Complex64 {
        let c = |k: SampleType| self.count(k, cell);
        Complex64::new(
            c(SampleType::PlusReal) - c(SampleType::MinusReal),
            c(SampleType::PlusImag) - c(SampleType::MinusImag),
        )
    }

    /// Amplitudes divided by the scale, without normalisation.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        (0..self.cell_count())
            .map(|c| self.raw_amplitude(c) / self.scale)
            .collect()
    }

    /// L2-normalised wave function and the norm it was divided by.
    pub fn reconstruct_wavefunction(&self) -> Result<(ComplexField, f64)> {
        let mut psi = ComplexField::from_values(&self.lattice, self.amplitudes())?;
        let norm = psi.normalize();
        if norm == 0.0 {
            return Err(Error::EmptySwarm);
        }
        Ok((psi, norm))
    }

    /// Removes opposite-sign pairs of the same part in every cell. The
    /// reconstructed wave function is unchanged.
    pub fn cancel_pairs(&mut self) {
        for cell in 0..self.cell_count() {
            let before = self.cell_population(cell);
            for (plus, minus) in [
                (SampleType::PlusReal, SampleType::MinusReal),
                (SampleType::PlusImag, SampleType::MinusImag),
            ] {
                let a = self.count(plus, cell);
                let b = self.count(minus, cell);
                let (na, nb) = if a >= b { (a - b, 0.0) } else { (0.0, b - a) };
                self.counts[plus.index()].values[cell] = na;
                self.counts[minus.index()].values[cell] = nb;
            }
            let after = self.cell_population(cell);
            if let Some(tags) = &mut self.tags {
                if before > 0.0 {
                    tags.scale_cell(cell, after / before);
                }
            }
        }
    }

    /// Pair cancellation followed by a common rescaling of all counts (with
    /// stochastic rounding) so the population matches the memory budget
    /// `memory * sum_cells |psi|` with `psi` normalised.
    pub fn resample(&mut self, memory: f64, epoch: &Epoch) -> Result<()> {
        if !(memory > 0.0 && memory.is_finite()) {
            return Err(Error::Domain(format!("memory constant must be positive, got {memory}")));
        }
        self.cancel_pairs();
        let population = self.population();
        if population == 0.0 {
            return Ok(());
        }
        let amps: Vec<f64> = (0..self.cell_count())
            .map(|c| self.raw_amplitude(c).norm())
            .collect();
        let l2 = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let l1: f64 = amps.iter().sum();
        let budget = memory * l1 / l2;
        let factor = budget / population;
        let cells = self.cell_count();
        let rounded = crate::par::map_cells(cells, |cell| {
            let mut rng = epoch.stream(cell as u64, 0);
            std::array::from_fn::<f64, 4, _>(|k| {
                stochastic_round(self.counts[k].values[cell] * factor, &mut rng)
            })
        });
        for (cell, new) in rounded.into_iter().enumerate() {
            let before = self.cell_population(cell);
            for k in 0..4 {
                self.counts[k].values[cell] = new[k];
            }
            if let Some(tags) = &mut self.tags {
                if before > 0.0 {
                    tags.scale_cell(cell, new.iter().sum::<f64>() / before);
                }
            }
        }
        self.scale *= factor;
        Ok(())
    }

    /// Adds one explicit sample record.
    pub fn push_sample(&mut self, sample: &Sample) -> Result<()> {
        if sample.particle != self.id {
            return Err(Error::Domain(format!(
                "sample of particle {} pushed into swarm {}",
                sample.particle, self.id
            )));
        }
        let cell = self.lattice.spec().cell_index(&sample.cell)?;
        self.add(sample.kind, cell, 1.0);
        if let Some(v) = &sample.tag {
            let axes = self.lattice.axes();
            if v.len() != axes {
                return Err(Error::ShapeMismatch(format!(
                    "velocity tag has {} components, lattice has {axes} axes",
                    v.len()
                )));
            }
            let cells = self.cell_count();
            self.tags
                .get_or_insert_with(|| VelocityTags::new(cells, axes))
                .add(cell, 1.0, v);
        }
        Ok(())
    }

    /// Expected-count swarm: cell counts are exactly `scale * |Re psi|` and
    /// `scale * |Im psi|` on the needed sign, with the scale chosen so the
    /// population is `samples`. Counts are real-valued.
    pub fn from_wavefunction_exact(psi: &ComplexField, samples: f64) -> Result<Self> {
        check_normalized(psi)?;
        let l1: f64 = psi.values.iter().map(|z| z.re.abs() + z.im.abs()).sum();
        let scale = samples / l1;
        let mut swarm = Swarm::empty(0, psi.lattice(), scale);
        for (cell, z) in psi.values.iter().enumerate() {
            let (re_kind, im_kind) = signed_kinds(*z);
            swarm.add(re_kind, cell, scale * z.re.abs());
            swarm.add(im_kind, cell, scale * z.im.abs());
        }
        Ok(swarm)
    }

    /// Fills velocity tags of every sample with the local velocity
    /// `2 * kinetic * Im(conj(psi) grad psi) / |psi|^2` of the current swarm
    /// (mass `1 / (2 kinetic)`), using central differences.
    pub fn tag_velocities_from_phase(&mut self) -> Result<()> {
        let (psi, _) = self.reconstruct_wavefunction()?;
        let lattice = Arc::clone(&self.lattice);
        let axes = lattice.axes();
        let h = lattice.spacing();
        let mut tags = VelocityTags::new(self.cell_count(), axes);
        for cell in 0..self.cell_count() {
            let z = psi.values[cell];
            let pop = self.cell_population(cell);
            if pop == 0.0 || z.norm_sqr() == 0.0 {
                continue;
            }
            let links = lattice.links(cell);
            let v: Vec<f64> = (0..axes)
                .map(|a| {
                    let lo = links[2 * a];
                    let hi = links[2 * a + 1];
                    let grad = (psi.values[hi.target] * hi.weight
                        - psi.values[lo.target] * lo.weight)
                        / (2.0 * h);
                    2.0 * self.kinetic * (z.conj() * grad).im / z.norm_sqr()
                })
                .collect();
            tags.add(cell, pop, &v);
        }
        self.tags = Some(tags);
        Ok(())
    }

    /// Moves every sample to its successor type, multiplying the wave
    /// function by `i^k`.
    pub fn rotate_types(&mut self, k: i64) {
        let old = self.counts.clone();
        for kind in SampleType::ALL {
            self.counts[kind.shift(k).index()] = old[kind.index()].clone();
        }
    }
}

fn signed_kinds(z: Complex64) -> (SampleType, SampleType) {
    let re = if z.re >= 0.0 {
        SampleType::PlusReal
    } else {
        SampleType::MinusReal
    };
    let im = if z.im >= 0.0 {
        SampleType::PlusImag
    } else {
        SampleType::MinusImag
    };
    (re, im)
}

fn check_normalized(psi: &ComplexField) -> Result<()> {
    let n = psi.norm();
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Domain(format!("wave function norm {n} is not 1")));
    }
    Ok(())
}

/// `floor(x)` plus a Bernoulli draw on the fractional part; unbiased.
pub fn stochastic_round<R: Rng + ?Sized>(x: f64, rng: &mut R) -> f64 {
    let f = x.floor();
    let frac = x - f;
    if frac > 0.0 && rng.random::<f64>() < frac {
        f + 1.0
    } else {
        f
    }
}

/// Number of events when each of `count` samples independently produces
/// `mean` events on average: the integer part deterministically and the
/// fractional part as a binomial draw.
pub fn thin<R: Rng + ?Sized>(count: f64, mean: f64, rng: &mut R) -> f64 {
    if count <= 0.0 || mean <= 0.0 {
        return 0.0;
    }
    let whole = mean.floor();
    let frac = mean - whole;
    let n = count.round() as u64;
    let extra = if frac > 0.0 {
        Binomial::new(n, frac).expect("valid binomial").sample(rng) as f64
    } else {
        0.0
    };
    n as f64 * whole + extra
}

/// Splits `n` items over categories with the given probabilities by
/// sequential conditional binomials. Probabilities must sum to at most 1;
/// any remainder is reported as the last element.
pub fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = Vec::with_capacity(probs.len() + 1);
    let mut left = n;
    let mut mass = 1.0f64;
    for &p in probs {
        if left == 0 || p <= 0.0 {
            out.push(0);
            mass -= p.max(0.0);
            continue;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let k = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out.push(k);
        left -= k;
        mass -= p;
    }
    out.push(left);
    out
}

/// Draws `samples` samples with probability proportional to `|Re psi|` and
/// `|Im psi|` per cell; each lands on the type carrying its sign.
pub fn sample_from_wavefunction(psi: &ComplexField, samples: u64, seed: u64) -> Result<Swarm> {
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    check_normalized(psi)?;
    let weights: Vec<f64> = psi
        .values
        .iter()
        .flat_map(|z| [z.re.abs(), z.im.abs()])
        .collect();
    let l1: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / l1).collect();
    let mut rng = Streams::new(seed).sequential();
    let draws = multinomial(samples, &probs, &mut rng);
    let scale = samples as f64 / l1;
    let mut swarm = Swarm::empty(0, psi.lattice(), scale);
    for (cell, z) in psi.values.iter().enumerate() {
        let (re_kind, im_kind) = signed_kinds(*z);
        swarm.add(re_kind, cell, draws[2 * cell] as f64);
        swarm.add(im_kind, cell, draws[2 * cell + 1] as f64);
    }
    Ok(swarm)
}

/// Full state: the swarms of every particle plus the clock.
#[derive(Clone, Debug, Default)]
pub struct SwarmState {
    pub particles: Vec<Swarm>,
    pub time: f64,
    pub step: u64,
}

impl SwarmState {
    pub fn new(particles: Vec<Swarm>) -> Self {
        Self {
            particles,
            time: 0.0,
            step: 0,
        }
    }

    pub fn single(swarm: Swarm) -> Self {
        Self::new(vec![swarm])
    }

    pub fn get(&self, id: ParticleId) -> Result<&Swarm> {
        self.particles
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Domain(format!("no particle with id {id}")))
    }

    pub fn get_mut(&mut self, id: ParticleId) -> Result<&mut Swarm> {
        self.particles
            .iter_mut()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Domain(format!("no particle with id {id}")))
    }

    pub fn reconstruct_wavefunction(&self, id: ParticleId) -> Result<(ComplexField, f64)> {
        self.get(id)?.reconstruct_wavefunction()
    }

    pub fn cancel_pairs(&mut self) {
        for s in &mut self.particles {
            s.cancel_pairs();
        }
    }

    pub fn resample(&mut self, memory: f64, streams: &mut Streams) -> Result<()> {
        for s in &mut self.particles {
            let epoch = streams.next_epoch();
            s.resample(memory, &epoch)?;
        }
        Ok(())
    }

    pub fn population(&self) -> f64 {
        self.particles.iter().map(Swarm::population).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, LatticeSpec};

    fn lat(n: usize) -> Arc<Lattice> {
        Lattice::new(LatticeSpec::one_d(n, 1.0, Boundary::Periodic).unwrap())
    }

    #[test]
    fn type_algebra_is_cyclic() {
        for t in SampleType::ALL {
            assert_eq!(t.successor().successor().successor().successor(), t);
            assert_eq!(t.negate(), t.successor().successor());
            assert_eq!(t.successor().unit(), t.unit() * Complex64::i());
            assert_eq!(t.negate().unit(), -t.unit());
            assert_eq!(SampleType::from_number(t.number()).unwrap(), t);
            assert_eq!(t.predecessor().successor(), t);
        }
        assert_eq!(SampleType::from_number(1).unwrap(), SampleType::PlusReal);
        assert_eq!(SampleType::from_number(4).unwrap().sign(), Sign::Minus);
        assert_eq!(SampleType::from_number(2).unwrap().part(), Part::Imag);
        assert!(SampleType::from_number(0).is_err());
        assert!(SampleType::from_number(5).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let l = lat(4);
        let mut s = Swarm::empty(0, &l, 4.0);
        s.add(SampleType::PlusReal, 1, 4.0);
        let (psi, norm) = s.reconstruct_wavefunction().unwrap();
        assert!((psi.values[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((norm - 1.0).abs() < 1e-15);

        let mut s = Swarm::empty(0, &l, 1.0);
        s.add(SampleType::PlusReal, 0, 5.0);
        s.add(SampleType::MinusReal, 0, 5.0);
        s.add(SampleType::PlusReal, 2, 1.0);
        let (psi, _) = s.reconstruct_wavefunction().unwrap();
        assert_eq!(psi.values[0], Complex64::new(0.0, 0.0));

        let mut s = Swarm::empty(0, &l, 17.0);
        s.add(SampleType::PlusReal, 0, 3.0);
        s.add(SampleType::PlusImag, 1, 4.0);
        let (psi, norm) = s.reconstruct_wavefunction().unwrap();
        assert!((psi.values[0] - Complex64::new(0.6, 0.0)).norm() < 1e-15);
        assert!((psi.values[1] - Complex64::new(0.0, 0.8)).norm() < 1e-15);
        assert!((norm - 5.0 / 17.0).abs() < 1e-15);

        let empty = Swarm::empty(0, &l, 1.0);
        assert!(matches!(empty.reconstruct_wavefunction(), Err(Error::EmptySwarm)));
    }

    #[test]
    fn cancel_examples() {
        let l = lat(2);
        let mut s = Swarm::empty(0, &l, 1.0);
        for (k, n) in SampleType::ALL.iter().zip([5.0, 2.0, 3.0, 2.0]) {
            s.add(*k, 0, n);
        }
        s.add(SampleType::MinusImag, 1, 7.0);
        s.add(SampleType::PlusReal, 1, 1.0);
        s.cancel_pairs();
        let cell0: Vec<f64> = SampleType::ALL.iter().map(|k| s.count(*k, 0)).collect();
        assert_eq!(cell0, vec![2.0, 0.0, 0.0, 0.0]);
        let cell1: Vec<f64> = SampleType::ALL.iter().map(|k| s.count(*k, 1)).collect();
        assert_eq!(cell1, vec![1.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn resample_drops_fully_canceling_cells() {
        let l = lat(3);
        let mut s = Swarm::empty(0, &l, 1.0);
        s.add(SampleType::PlusReal, 0, 50.0);
        s.add(SampleType::MinusReal, 0, 50.0);
        s.add(SampleType::PlusImag, 1, 40.0);
        let mut streams = Streams::new(1);
        s.resample(40.0, &streams.next_epoch()).unwrap();
        assert_eq!(s.cell_population(0), 0.0);
        assert_eq!(s.cell_population(1), 40.0);
        assert_eq!(s.scale, 1.0);
        assert!(s.resample(0.0, &streams.next_epoch()).is_err());
    }

    #[test]
    fn sample_from_wavefunction_examples() {
        let l = lat(5);
        let mut delta = ComplexField::zeros(&l);
        delta.values[2] = Complex64::new(1.0, 0.0);
        let s = sample_from_wavefunction(&delta, 100, 3).unwrap();
        assert_eq!(s.count(SampleType::PlusReal, 2), 100.0);
        assert_eq!(s.population(), 100.0);

        delta.values[2] = Complex64::new(0.0, 1.0);
        let s = sample_from_wavefunction(&delta, 100, 3).unwrap();
        assert_eq!(s.count(SampleType::PlusImag, 2), 100.0);
        assert_eq!(s.population(), 100.0);

        delta.values[2] = Complex64::new(0.0, 2.0);
        assert!(sample_from_wavefunction(&delta, 100, 3).is_err());
        delta.values[2] = Complex64::new(0.0, 1.0);
        assert!(sample_from_wavefunction(&delta, 0, 3).is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let l = lat(16);
        let psi = ComplexField::from_fn(&l, |c| {
            Complex64::from_polar(1.0, 0.7 * c[0] as f64) * (-(c[0] as f64 - 8.0).powi(2) / 8.0).exp()
        })
        .normalized();
        let a = sample_from_wavefunction(&psi, 10_000, 11).unwrap();
        let b = sample_from_wavefunction(&psi, 10_000, 11).unwrap();
        let c = sample_from_wavefunction(&psi, 10_000, 12).unwrap();
        assert_eq!(a.counts[0].values, b.counts[0].values);
        assert_ne!(a.counts[0].values, c.counts[0].values);
        assert_eq!(a.population(), 10_000.0);
    }

    #[test]
    fn exact_swarm_reconstructs_exactly() {
        let l = lat(8);
        let psi = ComplexField::from_fn(&l, |c| Complex64::new((c[0] as f64).sin(), (c[0] as f64 * 0.3).cos()))
            .normalized();
        let s = Swarm::from_wavefunction_exact(&psi, 1000.0).unwrap();
        assert!((s.population() - 1000.0).abs() < 1e-9);
        let (back, _) = s.reconstruct_wavefunction().unwrap();
        for (a, b) in back.values.iter().zip(&psi.values) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn rotate_multiplies_by_i() {
        let l = lat(2);
        let mut s = Swarm::empty(0, &l, 1.0);
        s.add(SampleType::PlusReal, 0, 3.0);
        s.add(SampleType::MinusImag, 1, 2.0);
        let before = s.amplitudes();
        s.rotate_types(1);
        for (a, b) in s.amplitudes().iter().zip(&before) {
            assert_eq!(*a, b * Complex64::i());
        }
    }

    #[test]
    fn push_sample_tags() {
        let l = lat(4);
        let mut s = Swarm::empty(3, &l, 1.0);
        let mk = |v: f64| Sample {
            particle: 3,
            kind: SampleType::PlusReal,
            cell: vec![1],
            tag: Some(vec![v]),
        };
        s.push_sample(&mk(2.0)).unwrap();
        s.push_sample(&mk(4.0)).unwrap();
        assert_eq!(s.tags.as_ref().unwrap().mean(1), vec![3.0]);
        let wrong = Sample {
            particle: 1,
            ..mk(0.0)
        };
        assert!(s.push_sample(&wrong).is_err());
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = crate::rng::seeded(5);
        let out = multinomial(1000, &[0.2, 0.3, 0.1], &mut rng);
        assert_eq!(out.iter().sum::<u64>(), 1000);
        assert_eq!(out.len(), 4);
        let out = multinomial(10, &[0.5, 0.5], &mut rng);
        assert_eq!(out[2], 0);
    }
}
