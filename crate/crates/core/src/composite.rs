//! Composite particles, hierarchical states and exchange symmetry.
//!
//! A particle made of `n` elementary constituents lives on the lattice of
//! the sum coordinate `S = x_1 + ... + x_n`: spacing `h / n` (so `h S / n`
//! is the centre of mass), `n (N - 1) + 1` cells per axis, or `n N` when
//! periodic, and kinetic coefficient `kinetic / n`. A glued pair keeps its
//! relative coordinates in an internal state of branches. Each branch
//! fixes the sum coordinate of the first constituent to
//! `floor(n_a S / n) + offset`; the second gets the rest of `S`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, ComplexField, Lattice, LatticeSpec};
use crate::measure::{born_measure, measure_swarm, AmplitudeQuantum, DiscreteState};
use crate::swarm::{sample_from_wavefunction, stochastic_round, ParticleId, SampleType, Swarm};

/// Tolerance of the dependence scan in [`depth_class`].
pub const DEPTH_TOLERANCE: f64 = 1e-9;
/// Largest matrix accepted by [`symmetrized_amplitude`].
pub const MAX_SYMMETRIZED: usize = 8;
/// Overlap above which [`place_fermion_swarms`] refuses the input.
pub const DISJOINT_TOLERANCE: f64 = 1e-9;
/// Amplitude quantum of the branch draw in [`ParticleSystem::decay`].
const BRANCH_QUANTUM: f64 = 1e-4;

pub type TypeId = u32;

/// One relative configuration of a pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    /// Free labels reported by [`ParticleSystem::measure_correlated`],
    /// e.g. qubit values of the two constituents.
    pub labels: (i64, i64),
    /// Per-axis offset of the first constituent's sum coordinate.
    pub offset: Vec<i64>,
    pub amplitude: Complex64,
}

/// Normalised internal state of a pair.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalState {
    branches: Vec<Branch>,
}

impl InternalState {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Domain("internal state needs a branch".into()));
        }
        let axes = branches[0].offset.len();
        if branches.iter().any(|b| b.offset.len() != axes) {
            return Err(Error::ShapeMismatch("branch offsets differ in length".into()));
        }
        let norm = branches.iter().map(|b| b.amplitude.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate);
        }
        Ok(Self {
            branches: branches
                .into_iter()
                .map(|b| Branch {
                    amplitude: b.amplitude / norm,
                    ..b
                })
                .collect(),
        })
    }

    /// Single branch with the given offset.
    pub fn delta(offset: Vec<i64>) -> Self {
        Self {
            branches: vec![Branch {
                labels: (0, 0),
                offset,
                amplitude: Complex64::new(1.0, 0.0),
            }],
        }
    }

    /// Two-qubit internal state `sum a_{jk} |jk>` on a 1D lattice. The
    /// first constituent is displaced by `j` cells of its sum coordinate,
    /// so distinct branches are distinct relative configurations.
    pub fn two_qubit(amplitudes: [Complex64; 4]) -> Result<Self> {
        let mut branches = Vec::new();
        for (i, a) in amplitudes.into_iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                let (j, k) = ((i / 2) as i64, (i % 2) as i64);
                branches.push(Branch {
                    labels: (j, k),
                    offset: vec![j - k],
                    amplitude: a,
                });
            }
        }
        Self::new(branches)
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    fn same_as(&self, other: &Self) -> bool {
        self.branches.len() == other.branches.len()
            && self.branches.iter().zip(&other.branches).all(|(a, b)| {
                a.labels == b.labels
                    && a.offset == b.offset
                    && (a.amplitude - b.amplitude).norm() < 1e-12
            })
    }
}

/// Internal state supplied to [`ParticleSystem::glue`].
#[derive(Clone, Debug)]
pub enum InternalSpec {
    Uniform(InternalState),
    /// One state per composite cell; accepted only if all are equal.
    PerCell(Vec<InternalState>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleTypeSpec {
    pub id: TypeId,
    pub constituents: Vec<TypeId>,
    pub internal: Option<InternalState>,
    /// Number of elementary particles inside.
    pub multiplicity: usize,
}

/// Append-only table of particle types. Type 0 is the elementary particle.
#[derive(Clone, Debug)]
pub struct Registry {
    specs: Vec<ParticleTypeSpec>,
}

impl Default for Registry {
    fn default() -> Self {
        Self {
            specs: vec![ParticleTypeSpec {
                id: 0,
                constituents: Vec::new(),
                internal: None,
                multiplicity: 1,
            }],
        }
    }
}

impl Registry {
    pub fn elementary(&self) -> TypeId {
        0
    }

    pub fn get(&self, id: TypeId) -> Result<&ParticleTypeSpec> {
        self.specs
            .get(id as usize)
            .ok_or_else(|| Error::Domain(format!("unknown particle type {id}")))
    }

    /// Registers a composite of existing types. Constituents always precede
    /// the new type, so the constituent graph stays a tree.
    pub fn register(&mut self, constituents: Vec<TypeId>, internal: InternalState) -> Result<TypeId> {
        if constituents.len() != 2 {
            return Err(Error::Domain("composites are built from two constituents".into()));
        }
        let mut multiplicity = 0;
        for &c in &constituents {
            multiplicity += self.get(c)?.multiplicity;
        }
        let id = self.specs.len() as TypeId;
        self.specs.push(ParticleTypeSpec {
            id,
            constituents,
            internal: Some(internal),
            multiplicity,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// Lattice of the sum coordinate of `n` particles on `base`.
pub fn sum_lattice_spec(base: &LatticeSpec, n: usize) -> Result<LatticeSpec> {
    if n == 0 {
        return Err(Error::Domain("multiplicity must be positive".into()));
    }
    let dims: Vec<usize> = base
        .dims
        .iter()
        .map(|&d| {
            if base.boundary == Boundary::Periodic {
                n * d
            } else {
                n * (d - 1) + 1
            }
        })
        .collect();
    LatticeSpec::new(&dims, base.spacing / n as f64, base.boundary)
}

#[derive(Clone, Debug)]
pub struct Particle {
    pub type_id: TypeId,
    pub swarm: Swarm,
}

/// Outcome of [`ParticleSystem::measure_correlated`].
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatedOutcome {
    pub labels: (i64, i64),
    /// Composite cell on its sum lattice.
    pub composite_cell: usize,
    /// Sum coordinates of the two constituents (elementary cells for
    /// elementary constituents).
    pub constituent_coords: (Vec<i64>, Vec<i64>),
}

/// Particles of one simulation with their type registry.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    pub registry: Registry,
    base: LatticeSpec,
    lattices: HashMap<usize, Arc<Lattice>>,
    particles: BTreeMap<ParticleId, Particle>,
    next_id: ParticleId,
    /// Kinetic coefficient of an elementary particle.
    pub kinetic: f64,
}

impl ParticleSystem {
    pub fn new(base: &Arc<Lattice>) -> Self {
        let mut lattices = HashMap::new();
        lattices.insert(1, Arc::clone(base));
        Self {
            registry: Registry::default(),
            base: base.spec().clone(),
            lattices,
            particles: BTreeMap::new(),
            next_id: 0,
            kinetic: 1.0,
        }
    }

    /// Lattice of particles with `n` elementary constituents.
    pub fn lattice_for(&mut self, n: usize) -> Result<Arc<Lattice>> {
        if let Some(l) = self.lattices.get(&n) {
            return Ok(Arc::clone(l));
        }
        let l = Lattice::new(sum_lattice_spec(&self.base, n)?);
        self.lattices.insert(n, Arc::clone(&l));
        Ok(l)
    }

    pub fn add_elementary(&mut self, mut swarm: Swarm) -> Result<ParticleId> {
        if swarm.lattice().spec() != &self.base {
            return Err(Error::ShapeMismatch("swarm is not on the base lattice".into()));
        }
        let id = self.next_id;
        self.next_id += 1;
        swarm.id = id;
        swarm.kinetic = self.kinetic;
        self.particles.insert(id, Particle { type_id: 0, swarm });
        Ok(id)
    }

    /// Adds a particle of an existing type with the given swarm.
    pub fn add_particle(&mut self, type_id: TypeId, mut swarm: Swarm) -> Result<ParticleId> {
        let n = self.registry.get(type_id)?.multiplicity;
        let lattice = self.lattice_for(n)?;
        if swarm.lattice().spec() != lattice.spec() {
            return Err(Error::ShapeMismatch(format!(
                "swarm is not on the sum lattice of {n} particles"
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        swarm.id = id;
        swarm.kinetic = self.kinetic / n as f64;
        self.particles.insert(id, Particle { type_id, swarm });
        Ok(id)
    }

    pub fn get(&self, id: ParticleId) -> Result<&Particle> {
        self.particles
            .get(&id)
            .ok_or_else(|| Error::Domain(format!("unknown particle {id}")))
    }

    pub fn get_mut(&mut self, id: ParticleId) -> Result<&mut Particle> {
        self.particles
            .get_mut(&id)
            .ok_or_else(|| Error::Domain(format!("unknown particle {id}")))
    }

    pub fn ids(&self) -> Vec<ParticleId> {
        self.particles.keys().copied().collect()
    }

    pub fn multiplicity(&self, id: ParticleId) -> Result<usize> {
        Ok(self.registry.get(self.get(id)?.type_id)?.multiplicity)
    }

    /// Replaces particles `a` and `b` by one composite whose sum-coordinate
    /// wave function is the convolution of theirs, drawn with `samples`
    /// samples.
    pub fn glue(
        &mut self,
        a: ParticleId,
        b: ParticleId,
        internal: InternalSpec,
        samples: u64,
        seed: u64,
    ) -> Result<ParticleId> {
        if a == b {
            return Err(Error::Domain("cannot glue a particle to itself".into()));
        }
        let internal = match internal {
            InternalSpec::Uniform(s) => s,
            InternalSpec::PerCell(states) => {
                let first = states
                    .first()
                    .ok_or_else(|| Error::Domain("no internal state".into()))?;
                if let Some(cell) = states.iter().position(|s| !s.same_as(first)) {
                    return Err(Error::Interference(format!(
                        "internal state at composite cell {cell} differs from cell 0"
                    )));
                }
                first.clone()
            }
        };
        let (ta, tb) = (self.get(a)?.type_id, self.get(b)?.type_id);
        let (na, nb) = (self.multiplicity(a)?, self.multiplicity(b)?);
        let (psi_a, _) = self.get(a)?.swarm.reconstruct_wavefunction()?;
        let (psi_b, _) = self.get(b)?.swarm.reconstruct_wavefunction()?;
        let target = self.lattice_for(na + nb)?;
        let mut values = vec![Complex64::default(); target.cell_count()];
        let spec = target.spec().clone();
        for (ia, &za) in psi_a.values.iter().enumerate() {
            if za.norm_sqr() == 0.0 {
                continue;
            }
            let ca = psi_a.spec().coords(ia);
            for (ib, &zb) in psi_b.values.iter().enumerate() {
                if zb.norm_sqr() == 0.0 {
                    continue;
                }
                let cb = psi_b.spec().coords(ib);
                let s: Vec<i64> = ca.iter().zip(&cb).map(|(&x, &y)| (x + y) as i64).collect();
                values[spec.cell_index(&s)?] += za * zb;
            }
        }
        let phi = ComplexField::from_values(&target, values)?;
        if phi.norm() == 0.0 {
            return Err(Error::EmptySwarm);
        }
        let swarm = sample_from_wavefunction(&phi.normalized(), samples, seed)?;
        let type_id = self.registry.register(vec![ta, tb], internal)?;
        self.particles.remove(&a);
        self.particles.remove(&b);
        self.add_particle(type_id, swarm)
    }

    fn composite_parts(&self, c: ParticleId) -> Result<(ParticleTypeSpec, usize, usize)> {
        let spec = self.registry.get(self.get(c)?.type_id)?.clone();
        if spec.constituents.is_empty() {
            return Err(Error::Domain(format!("particle {c} is elementary")));
        }
        let na = self.registry.get(spec.constituents[0])?.multiplicity;
        let nb = self.registry.get(spec.constituents[1])?.multiplicity;
        Ok((spec, na, nb))
    }

    /// Sum coordinates of both constituents for composite cell `s`.
    fn split_coords(&self, s: &[usize], na: usize, nb: usize, offset: &[i64]) -> (Vec<i64>, Vec<i64>) {
        let n = (na + nb) as i64;
        let mut xa = Vec::with_capacity(s.len());
        let mut xb = Vec::with_capacity(s.len());
        for (axis, &sv) in s.iter().enumerate() {
            let sv = sv as i64;
            let a = (na as i64 * sv).div_euclid(n) + offset[axis];
            xa.push(a);
            xb.push(sv - a);
        }
        (xa, xb)
    }

    /// Splits every sample of composite `c` into its two constituents, all
    /// in the same internal branch drawn by the Born rule. The first
    /// constituent inherits the sample types and the branch phase; the
    /// second receives the same populations as positive-real samples.
    pub fn decay<R: Rng + ?Sized>(&mut self, c: ParticleId, rng: &mut R) -> Result<(ParticleId, ParticleId)> {
        let (spec, na, nb) = self.composite_parts(c)?;
        let internal = spec.internal.expect("composites carry an internal state");
        let weights = DiscreteState::new(internal.branches.iter().map(|b| b.amplitude).collect())?;
        let branch = &internal.branches[born_measure(&weights, AmplitudeQuantum::new(BRANCH_QUANTUM)?, rng)?];
        let phase = Complex64::from_polar(1.0, branch.amplitude.arg());

        let la = self.lattice_for(na)?;
        let lb = self.lattice_for(nb)?;
        let composite = self.get(c)?.swarm.clone();
        let mut sa = Swarm::empty(0, &la, composite.scale);
        let mut sb = Swarm::empty(0, &lb, composite.scale);
        let cspec = composite.lattice().spec().clone();
        for cell in 0..composite.cell_count() {
            let pop = composite.cell_population(cell);
            if pop == 0.0 {
                continue;
            }
            let (xa, xb) = self.split_coords(&cspec.coords(cell), na, nb, &branch.offset);
            let (Ok(ia), Ok(ib)) = (la.spec().cell_index(&xa), lb.spec().cell_index(&xb)) else {
                continue;
            };
            let z = composite.raw_amplitude(cell) * phase;
            let re = stochastic_round(z.re.abs(), rng);
            let im = stochastic_round(z.im.abs(), rng);
            let re_kind = if z.re >= 0.0 { SampleType::PlusReal } else { SampleType::MinusReal };
            let im_kind = if z.im >= 0.0 { SampleType::PlusImag } else { SampleType::MinusImag };
            sa.add(re_kind, ia, re);
            sa.add(im_kind, ia, im);
            sb.add(SampleType::PlusReal, ib, re + im);
        }
        self.particles.remove(&c);
        let ida = self.add_particle(spec.constituents[0], sa)?;
        let idb = self.add_particle(spec.constituents[1], sb)?;
        Ok((ida, idb))
    }

    /// Decay of a fraction of the swarm; only the whole swarm may decay.
    pub fn decay_fraction<R: Rng + ?Sized>(
        &mut self,
        c: ParticleId,
        fraction: f64,
        rng: &mut R,
    ) -> Result<Option<(ParticleId, ParticleId)>> {
        if fraction == 0.0 {
            return Ok(None);
        }
        if fraction != 1.0 {
            return Err(Error::Stability(format!(
                "decay of {fraction} of a swarm; all samples of a particle must transform together"
            )));
        }
        self.decay(c, rng).map(Some)
    }

    /// Measures the composite position, collapsing its swarm, then the
    /// internal branch, collapsing the internal state.
    pub fn measure_correlated<R: Rng + ?Sized>(
        &mut self,
        c: ParticleId,
        q: AmplitudeQuantum,
        rng: &mut R,
    ) -> Result<CorrelatedOutcome> {
        let (spec, na, nb) = self.composite_parts(c)?;
        let internal = spec.internal.expect("composites carry an internal state");
        let m = measure_swarm(&mut self.get_mut(c)?.swarm, q, rng)?;
        let weights = DiscreteState::new(internal.branches.iter().map(|b| b.amplitude).collect())?;
        let branch = internal.branches[born_measure(&weights, q, rng)?].clone();
        let coords = self.get(c)?.swarm.lattice().spec().coords(m.cell);
        let constituent_coords = self.split_coords(&coords, na, nb, &branch.offset);
        let collapsed = self.registry.register(spec.constituents.clone(), InternalState::new(vec![branch.clone()])?)?;
        self.get_mut(c)?.type_id = collapsed;
        Ok(CorrelatedOutcome {
            labels: branch.labels,
            composite_cell: m.cell,
            constituent_coords,
        })
    }

    /// True when every swarm holds one type and one internal state, which
    /// the system enforces structurally; returns the offending id otherwise.
    pub fn check_stability(&self) -> Result<()> {
        for (&id, p) in &self.particles {
            let spec = self.registry.get(p.type_id)?;
            if p.swarm.id != id || spec.constituents.is_empty() != spec.internal.is_none() {
                return Err(Error::Stability(format!("particle {id} is inconsistent")));
            }
        }
        Ok(())
    }
}

/// Full amplitude table over `n` coordinates with the factorisation into
/// conditional amplitudes `lambda_j(r_1..r_j)`.
#[derive(Clone, Debug)]
pub struct HierarchicalState {
    dims: Vec<usize>,
    amplitudes: Vec<Complex64>,
    /// `norms[j][prefix]`: norm of the amplitudes with the first `j`
    /// coordinates fixed.
    norms: Vec<Vec<f64>>,
    /// `phases[j][prefix]`: phase of the amplitudes with the first `j`
    /// coordinates fixed, summed against fixed unimodular weights. For a
    /// state of depth `p` the phase differences between levels depend only
    /// on the window, like the norms.
    phases: Vec<Vec<f64>>,
}

/// Unimodular weight of value `r` of coordinate `k` used for prefix phases.
fn phase_weight(k: usize, r: usize) -> Complex64 {
    Complex64::from_polar(1.0, 0.754_877_666 * (r + 1) as f64 + 0.569_840_291 * ((k + 1) * (k + 1)) as f64)
}

impl HierarchicalState {
    /// `amplitudes` in row-major order over `dims`; normalised here.
    pub fn new(dims: Vec<usize>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Domain("every coordinate needs at least one value".into()));
        }
        let total: usize = dims.iter().product();
        if amplitudes.len() != total {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for {total} configurations",
                amplitudes.len()
            )));
        }
        let s = DiscreteState::new(amplitudes)?;
        let amplitudes = s.amplitudes().to_vec();
        let n = dims.len();
        let mut norms = vec![Vec::new(); n + 1];
        norms[n] = amplitudes.iter().map(|a| a.norm_sqr()).collect();
        for j in (0..n).rev() {
            let d = dims[j];
            norms[j] = norms[j + 1].chunks(d).map(|c| c.iter().sum()).collect();
        }
        for level in &mut norms {
            level.iter_mut().for_each(|x| *x = x.sqrt());
        }
        let mut partial = amplitudes.clone();
        let mut phases = vec![Vec::new(); n + 1];
        phases[n] = partial.iter().map(|z| z.arg()).collect();
        for j in (0..n).rev() {
            let d = dims[j];
            partial = partial
                .chunks(d)
                .map(|c| c.iter().enumerate().map(|(r, z)| z * phase_weight(j, r)).sum())
                .collect();
            phases[j] = partial.iter().map(|z: &Complex64| z.arg()).collect();
        }
        phases[0] = vec![0.0];
        Ok(Self {
            dims,
            amplitudes,
            norms,
            phases,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    fn prefix_index(&self, r: &[usize]) -> usize {
        r.iter().zip(&self.dims).fold(0, |acc, (&x, &d)| acc * d + x)
    }

    /// `lambda_j(r_1..r_j)` for a prefix of length `j >= 1`; `None` when
    /// the prefix `r_1..r_{j-1}` has zero probability.
    pub fn conditional(&self, r: &[usize]) -> Option<Complex64> {
        let j = r.len();
        assert!(j >= 1 && j <= self.dims.len());
        let parent = self.norms[j - 1][self.prefix_index(&r[..j - 1])];
        if parent == 0.0 {
            return None;
        }
        let idx = self.prefix_index(r);
        let parent_phase = self.phases[j - 1][self.prefix_index(&r[..j - 1])];
        Some(Complex64::from_polar(
            self.norms[j][idx] / parent,
            self.phases[j][idx] - parent_phase,
        ))
    }

    /// Product of the conditional amplitudes along a full configuration.
    pub fn product(&self, r: &[usize]) -> Complex64 {
        (1..=r.len())
            .map(|j| self.conditional(&r[..j]).unwrap_or_default())
            .product()
    }
}

fn for_each_config(dims: &[usize], mut f: impl FnMut(&[usize])) {
    let mut r = vec![0; dims.len()];
    loop {
        f(&r);
        let mut k = dims.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            r[k] += 1;
            if r[k] < dims[k] {
                break;
            }
            r[k] = 0;
        }
    }
}

/// True when every conditional amplitude `lambda_j` depends only on
/// `r_{j-p}..r_j`, checked by scanning all prefixes of nonzero probability.
pub fn depth_class(h: &HierarchicalState, p: usize) -> bool {
    for j in 1..=h.dims.len() {
        let window_start = j.saturating_sub(p + 1);
        let mut seen: HashMap<Vec<usize>, Complex64> = HashMap::new();
        let mut ok = true;
        for_each_config(&h.dims[..j], |r| {
            if !ok {
                return;
            }
            let Some(lambda) = h.conditional(r) else {
                return;
            };
            let key = r[window_start..].to_vec();
            match seen.get(&key) {
                Some(prev) if (prev - lambda).norm() >= DEPTH_TOLERANCE => ok = false,
                Some(_) => {}
                None => {
                    seen.insert(key, lambda);
                }
            }
        });
        if !ok {
            return false;
        }
    }
    true
}

/// Smallest `p` for which [`depth_class`] holds.
pub fn depth(h: &HierarchicalState) -> usize {
    (0..h.dims.len())
        .find(|&p| depth_class(h, p))
        .unwrap_or(h.dims.len() - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistics {
    Fermion,
    Boson,
}

/// Occupation-number state over one-particle basis labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    pub occupations: Vec<u32>,
    pub statistics: Statistics,
}

impl FockState {
    pub fn new(occupations: Vec<u32>, statistics: Statistics) -> Result<Self> {
        if statistics == Statistics::Fermion && occupations.iter().any(|&o| o > 1) {
            return Err(Error::Domain("fermion occupation above 1".into()));
        }
        Ok(Self { occupations, statistics })
    }

    pub fn particles(&self) -> u32 {
        self.occupations.iter().sum()
    }

    /// Occupied labels, repeated by occupation.
    pub fn labels(&self) -> Vec<usize> {
        self.occupations
            .iter()
            .enumerate()
            .flat_map(|(l, &o)| std::iter::repeat_n(l, o as usize))
            .collect()
    }
}

fn determinant(m: &[Vec<Complex64>]) -> Complex64 {
    let n = m.len();
    if n == 2 {
        // negates bit for bit under a row or a column swap
        return m[0][0] * m[1][1] - m[0][1] * m[1][0];
    }
    let mut a: Vec<Vec<Complex64>> = m.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
            .expect("non-empty range");
        if a[pivot][col].norm() == 0.0 {
            return Complex64::default();
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
        }
    }
    det
}

/// Ryser inclusion-exclusion over column subsets.
fn permanent(m: &[Vec<Complex64>]) -> Complex64 {
    let n = m.len();
    let mut total = Complex64::default();
    for subset in 1u32..(1 << n) {
        let mut prod = Complex64::new(1.0, 0.0);
        for row in m {
            let s: Complex64 = (0..n).filter(|&c| subset >> c & 1 == 1).map(|c| row[c]).sum();
            prod *= s;
        }
        let sign = if (n as u32 - subset.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        total += prod * sign;
    }
    total
}

/// Determinant (fermions) or permanent (bosons) of `matrix`, times `1/sqrt(n!)`.
pub fn symmetrized_amplitude(matrix: &[Vec<Complex64>], statistics: Statistics) -> Result<Complex64> {
    let n = matrix.len();
    if n == 0 {
        return Err(Error::Domain("empty matrix".into()));
    }
    if matrix.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch("matrix is not square".into()));
    }
    if n > MAX_SYMMETRIZED {
        return Err(Error::TooLarge { n, max: MAX_SYMMETRIZED });
    }
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    let repeated = (0..n).any(|a| (a + 1..n).any(|b| matrix.iter().all(|r| r[a] == r[b])));
    let value = match statistics {
        // elimination would leave rounding residue instead of zero
        Statistics::Fermion if repeated => Complex64::default(),
        Statistics::Fermion => determinant(matrix),
        Statistics::Boson => permanent(matrix),
    };
    Ok(value / factorial.sqrt())
}

/// One-body density `n * sum |Psi(x, x_2..x_n)|^2` of the symmetrised
/// product of `states`, by brute force over all configurations.
pub fn symmetrized_density(states: &[ComplexField], statistics: Statistics) -> Result<Vec<f64>> {
    let n = states.len();
    if n == 0 {
        return Err(Error::Domain("no states".into()));
    }
    let cells = states[0].len();
    if states.iter().any(|s| s.len() != cells) {
        return Err(Error::ShapeMismatch("states on different lattices".into()));
    }
    if (cells as f64).powi(n as i32) > 1e7 {
        return Err(Error::TooLarge { n, max: MAX_SYMMETRIZED });
    }
    let dims = vec![cells; n];
    let mut density = vec![0.0; cells];
    let mut total = 0.0;
    let mut err = None;
    for_each_config(&dims, |x| {
        let m: Vec<Vec<Complex64>> = states
            .iter()
            .map(|s| x.iter().map(|&c| s.values[c]).collect())
            .collect();
        match symmetrized_amplitude(&m, statistics) {
            Ok(a) => {
                let p = a.norm_sqr();
                total += p;
                for &c in x {
                    density[c] += p;
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if total == 0.0 {
        return Err(Error::Degenerate);
    }
    Ok(density.into_iter().map(|d| d / total).collect())
}

/// How [`place_fermion_swarms`] turns a wave function into counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CountMode {
    /// Real-valued expected counts with the given population.
    Exact(f64),
    /// Multinomial draw with the given population and seed.
    Sampled { samples: u64, seed: u64 },
}

/// One swarm per one-particle state; the states must have disjoint
/// supports (`sum |phi_i| |phi_j|` below [`DISJOINT_TOLERANCE`]).
pub fn place_fermion_swarms(states: &[ComplexField], mode: CountMode) -> Result<Vec<Swarm>> {
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            if states[i].spec() != states[j].spec() {
                return Err(Error::ShapeMismatch("states on different lattices".into()));
            }
            let overlap: f64 = states[i]
                .values
                .iter()
                .zip(&states[j].values)
                .map(|(a, b)| a.norm() * b.norm())
                .sum();
            if overlap >= DISJOINT_TOLERANCE {
                return Err(Error::Disjointness { overlap });
            }
        }
    }
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let psi = s.clone().normalized();
            let mut swarm = match mode {
                CountMode::Exact(k) => Swarm::from_wavefunction_exact(&psi, k)?,
                CountMode::Sampled { samples, seed } => {
                    sample_from_wavefunction(&psi, samples, seed.wrapping_add(i as u64))?
                }
            };
            swarm.id = i as ParticleId;
            Ok(swarm)
        })
        .collect()
}

/// Per-cell sum of the normalised densities of several swarms.
pub fn union_density(swarms: &[Swarm]) -> Result<Vec<f64>> {
    let first = swarms.first().ok_or(Error::EmptySwarm)?;
    let mut out = vec![0.0; first.cell_count()];
    for s in swarms {
        let (psi, _) = s.reconstruct_wavefunction()?;
        if psi.len() != out.len() {
            return Err(Error::ShapeMismatch("swarms on different lattices".into()));
        }
        for (o, d) in out.iter_mut().zip(psi.density()) {
            *o += d;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn base(n: usize, b: Boundary) -> Arc<Lattice> {
        Lattice::new(LatticeSpec::one_d(n, 1.0, b).unwrap())
    }

    fn delta(l: &Arc<Lattice>, cell: usize, count: f64) -> Swarm {
        let mut s = Swarm::empty(0, l, 1.0);
        s.add(SampleType::PlusReal, cell, count);
        s
    }

    #[test]
    fn sum_lattice_shapes() {
        let b = LatticeSpec::one_d(8, 1.0, Boundary::Periodic).unwrap();
        let s = sum_lattice_spec(&b, 2).unwrap();
        assert_eq!(s.dims, vec![16]);
        assert_eq!(s.spacing, 0.5);
        let b = LatticeSpec::new(&[5, 4], 1.0, Boundary::Absorbing).unwrap();
        assert_eq!(sum_lattice_spec(&b, 3).unwrap().dims, vec![13, 10]);
        assert_eq!(sum_lattice_spec(&b, 1).unwrap(), b);
    }

    #[test]
    fn glue_deltas_lands_at_centre_of_mass() {
        let l = base(8, Boundary::Absorbing);
        let mut sys = ParticleSystem::new(&l);
        let a = sys.add_elementary(delta(&l, 2, 10.0)).unwrap();
        let b = sys.add_elementary(delta(&l, 5, 10.0)).unwrap();
        let cid = sys
            .glue(a, b, InternalSpec::Uniform(InternalState::delta(vec![-1])), 100, 1)
            .unwrap();
        let p = sys.get(cid).unwrap();
        assert_eq!(p.swarm.kinetic, 0.5);
        let (psi, _) = p.swarm.reconstruct_wavefunction().unwrap();
        let cell = psi.values.iter().position(|z| z.norm() > 0.0).unwrap();
        assert_eq!(cell, 7);
        assert_eq!(psi.values[7], c(1.0, 0.0));
        assert!(sys.get(a).is_err() && sys.get(b).is_err());

        let (da, db) = sys.decay(cid, &mut seeded(0)).unwrap();
        let (pa, _) = sys.get(da).unwrap().swarm.reconstruct_wavefunction().unwrap();
        let (pb, _) = sys.get(db).unwrap().swarm.reconstruct_wavefunction().unwrap();
        assert_eq!(pa.values[2], c(1.0, 0.0));
        assert_eq!(pb.values[5], c(1.0, 0.0));
        assert_eq!(sys.get(da).unwrap().swarm.kinetic, 1.0);
    }

    #[test]
    fn position_dependent_internal_state_is_rejected() {
        let l = base(4, Boundary::Periodic);
        let mut sys = ParticleSystem::new(&l);
        let a = sys.add_elementary(delta(&l, 0, 1.0)).unwrap();
        let b = sys.add_elementary(delta(&l, 1, 1.0)).unwrap();
        let states = vec![InternalState::delta(vec![0]), InternalState::delta(vec![1])];
        let err = sys.glue(a, b, InternalSpec::PerCell(states), 10, 0).unwrap_err();
        assert!(matches!(err, Error::Interference(_)));
        let same = vec![InternalState::delta(vec![0]); 3];
        assert!(sys.glue(a, b, InternalSpec::PerCell(same), 10, 0).is_ok());
    }

    #[test]
    fn partial_decay_is_forbidden() {
        let l = base(4, Boundary::Periodic);
        let mut sys = ParticleSystem::new(&l);
        let a = sys.add_elementary(delta(&l, 0, 1.0)).unwrap();
        let b = sys.add_elementary(delta(&l, 1, 1.0)).unwrap();
        let c = sys
            .glue(a, b, InternalSpec::Uniform(InternalState::delta(vec![0])), 10, 0)
            .unwrap();
        let mut rng = seeded(1);
        assert!(matches!(sys.decay_fraction(c, 0.5, &mut rng), Err(Error::Stability(_))));
        assert!(sys.decay_fraction(c, 1.0, &mut rng).unwrap().is_some());
        assert!(sys.check_stability().is_ok());
        let elementary = sys.ids()[0];
        assert!(sys.decay(elementary, &mut rng).is_err());
    }

    #[test]
    fn empty_composite_decays_to_empty_pair() {
        let l = base(4, Boundary::Periodic);
        let mut sys = ParticleSystem::new(&l);
        let t = sys.registry.register(vec![0, 0], InternalState::delta(vec![0])).unwrap();
        let cl = sys.lattice_for(2).unwrap();
        let c = sys.add_particle(t, Swarm::empty(0, &cl, 1.0)).unwrap();
        let (a, b) = sys.decay(c, &mut seeded(0)).unwrap();
        assert!(sys.get(a).unwrap().swarm.is_empty());
        assert!(sys.get(b).unwrap().swarm.is_empty());
    }

    #[test]
    fn bell_internal_state_correlates() {
        let l = base(8, Boundary::Periodic);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = AmplitudeQuantum::new(1e-3).unwrap();
        let mut rng = seeded(5);
        for (amps, agree) in [
            ([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], true),
            ([c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)], true),
            ([c(0.0, 0.0), c(h, 0.0), c(h, 0.0), c(0.0, 0.0)], false),
        ] {
            for trial in 0..200 {
                let mut sys = ParticleSystem::new(&l);
                let a = sys.add_elementary(delta(&l, 1, 50.0)).unwrap();
                let b = sys.add_elementary(delta(&l, 4, 50.0)).unwrap();
                let internal = InternalState::two_qubit(amps).unwrap();
                let cid = sys.glue(a, b, InternalSpec::Uniform(internal), 100, trial).unwrap();
                let out = sys.measure_correlated(cid, q, &mut rng).unwrap();
                assert_eq!(out.labels.0 == out.labels.1, agree);
                let again = sys.measure_correlated(cid, q, &mut rng).unwrap();
                assert_eq!(again, out);
            }
        }
    }

    #[test]
    fn depth_examples() {
        let product = HierarchicalState::new(
            vec![2, 3],
            [c(1.0, 0.0), c(2.0, 0.0)]
                .iter()
                .flat_map(|a| [c(1.0, 1.0), c(0.5, 0.0), c(0.0, -2.0)].map(|b| a * b))
                .collect(),
        )
        .unwrap();
        assert!(depth_class(&product, 0));

        // lambda_3 depends on (r_2, r_3) only
        let f = |r1: usize, r2: usize, r3: usize| {
            let a1 = [c(0.6, 0.0), c(0.8, 0.0)][r1];
            let a2 = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.6), c(0.8, 0.0)]][r1][r2];
            let a3 = [[c(0.6, 0.0), c(0.0, 0.8)], [c(0.0, 1.0), c(0.0, 0.0)]][r2][r3];
            a1 * a2 * a3
        };
        let amps: Vec<Complex64> = (0..8).map(|i| f(i >> 2, (i >> 1) & 1, i & 1)).collect();
        let h1 = HierarchicalState::new(vec![2, 2, 2], amps).unwrap();
        assert!(depth_class(&h1, 1));
        assert!(!depth_class(&h1, 0));
        assert_eq!(depth(&h1), 1);

        let mut rng = seeded(2);
        let random: Vec<Complex64> = (0..27)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let hr = HierarchicalState::new(vec![3, 3, 3], random).unwrap();
        assert!(depth_class(&hr, 2));
        assert!(!depth_class(&hr, 1));
    }

    #[test]
    fn conditional_product_reconstructs_amplitudes() {
        let mut rng = seeded(4);
        let amps: Vec<Complex64> = (0..24)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let h = HierarchicalState::new(vec![2, 3, 4], amps).unwrap();
        for_each_config(&[2, 3, 4], |r| {
            let idx = (r[0] * 3 + r[1]) * 4 + r[2];
            assert!((h.product(r) - h.amplitudes()[idx]).norm() < 1e-12);
        });
    }

    #[test]
    fn symmetrized_examples() {
        let a = c(0.3, 0.1);
        assert_eq!(symmetrized_amplitude(&[vec![a]], Statistics::Fermion).unwrap(), a);
        let (p, q, r, s) = (c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 1.0), c(3.0, -1.0));
        let m = vec![vec![p, q], vec![r, s]];
        let f = symmetrized_amplitude(&m, Statistics::Fermion).unwrap();
        assert!((f - (p * s - q * r) / 2f64.sqrt()).norm() < 1e-14);
        let b = symmetrized_amplitude(&m, Statistics::Boson).unwrap();
        assert!((b - (p * s + q * r) / 2f64.sqrt()).norm() < 1e-14);
        let pauli = vec![vec![p, p], vec![r, r]];
        assert_eq!(symmetrized_amplitude(&pauli, Statistics::Fermion).unwrap(), c(0.0, 0.0));
        let big = vec![vec![c(1.0, 0.0); 9]; 9];
        assert!(matches!(
            symmetrized_amplitude(&big, Statistics::Boson),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn permanent_of_ones_is_factorial() {
        for n in 1..=6 {
            let m = vec![vec![c(1.0, 0.0); n]; n];
            let fact: f64 = (1..=n).map(|k| k as f64).product();
            assert!((permanent(&m).re - fact).abs() < 1e-9);
        }
    }

    #[test]
    fn fermion_placement_matches_antisymmetrized_density() {
        let l = base(8, Boundary::Absorbing);
        let left = ComplexField::from_fn(&l, |x| if x[0] < 4 { c(1.0 + x[0] as f64, 0.5) } else { c(0.0, 0.0) })
            .normalized();
        let right = ComplexField::from_fn(&l, |x| if x[0] >= 4 { c(0.0, x[0] as f64 - 3.0) } else { c(0.0, 0.0) })
            .normalized();
        let swarms = place_fermion_swarms(&[left.clone(), right.clone()], CountMode::Exact(1e4)).unwrap();
        let union = union_density(&swarms).unwrap();
        let exact = symmetrized_density(&[left.clone(), right], Statistics::Fermion).unwrap();
        for (u, e) in union.iter().zip(&exact) {
            assert!((u - e).abs() < 1e-6);
        }
        let overlapping = ComplexField::from_fn(&l, |_| c(1.0, 0.0)).normalized();
        assert!(matches!(
            place_fermion_swarms(&[left, overlapping], CountMode::Exact(10.0)),
            Err(Error::Disjointness { .. })
        ));
    }
}
