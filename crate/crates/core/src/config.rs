//! Scenario files: flat `key = value` lines with dotted section names,
//! read as TOML.
//!
//! ```text
//! mode = "stochastic"
//! seed = 7
//! lattice.dims = [256]
//! lattice.boundary = "periodic"
//! init.kind = "gaussian"
//! init.center = [128.0]
//! init.width = 8.0
//! step.dt = 0.25
//! run.duration = 110.85
//! ```

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;

use crate::dynamics::{PotentialField, StepParams};
use crate::error::{Error, Result};
use crate::lattice::{relax_to_green, Boundary, ComplexField, FieldGrid, Lattice, LatticeSpec};
use crate::oracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Meanfield,
    Stochastic,
    Oracle,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meanfield" => Ok(Mode::Meanfield),
            "stochastic" => Ok(Mode::Stochastic),
            "oracle" => Ok(Mode::Oracle),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub dims: Vec<usize>,
    #[serde(default = "one")]
    pub spacing: f64,
    #[serde(default = "periodic")]
    pub boundary: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    Delta,
    PlaneWave,
    GroundState,
    File,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub kind: InitKind,
    /// Physical coordinates; defaults to the lattice centre.
    pub center: Option<Vec<f64>>,
    /// Density width of a Gaussian.
    pub width: Option<f64>,
    pub momentum: Option<Vec<f64>>,
    /// Adds the packet reflected through the lattice centre with opposite
    /// momentum.
    #[serde(default)]
    pub mirror: bool,
    /// Cell of a delta state.
    pub cell: Option<Vec<i64>>,
    /// Swarm snapshot file.
    pub path: Option<String>,
    #[serde(default = "default_samples")]
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Harmonic,
    Box,
    CoulombRelaxed,
    File,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: PotentialKind,
    #[serde(default = "one")]
    pub strength: f64,
    pub center: Option<Vec<f64>>,
    /// Width in cells of the walls of a box potential.
    #[serde(default = "one_usize")]
    pub wall: usize,
    pub path: Option<String>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Zero,
            strength: 1.0,
            center: None,
            wall: 1,
            path: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    pub dt: f64,
    #[serde(default = "one")]
    pub p_phot: f64,
    pub r_emit: Option<f64>,
    pub dt_phot: Option<f64>,
    #[serde(default)]
    pub drift_rule: bool,
    pub memory: Option<f64>,
    pub kinetic_diagonal: Option<f64>,
    pub population_cap: Option<u64>,
    /// Step of the reference integrator in oracle mode; defaults to `dt`.
    pub oracle_dt: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub duration: f64,
    /// Steps between frames; 0 writes only the first and last frame.
    #[serde(default)]
    pub frame_every: usize,
    /// Also write swarm snapshots with the four type fields.
    #[serde(default)]
    pub types: bool,
    #[serde(default)]
    pub pgm: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            duration: 0.0,
            frame_every: 0,
            types: false,
            pgm: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    #[serde(default)]
    pub stay: f64,
    #[serde(default)]
    pub absorption: f64,
    #[serde(default = "one")]
    pub source: f64,
    #[serde(default = "green_steps")]
    pub steps: usize,
}

impl Default for GreenSection {
    fn default() -> Self {
        Self {
            stay: 0.0,
            absorption: 0.0,
            source: 1.0,
            steps: green_steps(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "bench_steps")]
    pub steps: usize,
    #[serde(default = "bench_repeats")]
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            steps: bench_steps(),
            repeats: bench_repeats(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub kinetic: f64,
    pub lattice: LatticeSection,
    pub init: Option<InitSection>,
    #[serde(default)]
    pub potential: PotentialSection,
    pub step: Option<StepSection>,
    #[serde(default)]
    pub run: RunSection,
    pub measure: Option<MeasureSection>,
    #[serde(default)]
    pub green: GreenSection,
    #[serde(default)]
    pub bench: BenchSection,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn periodic() -> String {
    "periodic".into()
}
fn default_samples() -> u64 {
    100_000
}
fn default_mode() -> Mode {
    Mode::Meanfield
}
fn green_steps() -> usize {
    100_000
}
fn bench_steps() -> usize {
    5
}
fn bench_repeats() -> usize {
    5
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| {
            let line = e
                .span()
                .map(|r| s[..r.start.min(s.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        let boundary: Boundary = self.lattice.boundary.parse()?;
        LatticeSpec::new(&self.lattice.dims, self.lattice.spacing, boundary)
    }

    pub fn build_lattice(&self) -> Result<Arc<Lattice>> {
        Ok(Lattice::new(self.lattice_spec()?))
    }

    pub fn step_params(&self) -> Result<StepParams> {
        let s = self
            .step
            .as_ref()
            .ok_or_else(|| Error::Config("missing `step.dt`".into()))?;
        let p = StepParams {
            dt: s.dt,
            p_phot: s.p_phot,
            r_emit: s.r_emit,
            dt_phot: s.dt_phot.unwrap_or(s.dt),
            drift_rule: s.drift_rule,
            memory: s.memory,
            kinetic_diagonal: s.kinetic_diagonal,
            population_cap: s.population_cap,
        };
        p.validate()?;
        Ok(p)
    }

    fn init(&self) -> Result<&InitSection> {
        self.init
            .as_ref()
            .ok_or_else(|| Error::Config("missing `init.kind`".into()))
    }

    fn center(&self, lattice: &Lattice, given: Option<&Vec<f64>>) -> Result<Vec<f64>> {
        let axes = lattice.axes();
        match given {
            Some(c) if c.len() != axes => Err(Error::Config(format!(
                "center has {} coordinates for {axes} axes",
                c.len()
            ))),
            Some(c) => Ok(c.clone()),
            None => Ok(lattice
                .spec()
                .center()
                .iter()
                .map(|x| x * lattice.spacing())
                .collect()),
        }
    }

    pub fn potential(&self, lattice: &Arc<Lattice>) -> Result<PotentialField> {
        let p = &self.potential;
        match p.kind {
            PotentialKind::Zero => Ok(PotentialField::zero(lattice)),
            PotentialKind::Harmonic => {
                let c = self.center(lattice, p.center.as_ref())?;
                Ok(PotentialField::harmonic(lattice, p.strength, &c))
            }
            PotentialKind::Box => {
                let spec = lattice.spec().clone();
                let w = p.wall;
                PotentialField::new(FieldGrid::from_fn(lattice, |c| {
                    let wall = c.iter().zip(&spec.dims).any(|(&x, &d)| x < w || x + w >= d);
                    if wall {
                        p.strength
                    } else {
                        0.0
                    }
                }))
            }
            PotentialKind::CoulombRelaxed => {
                let mut src = FieldGrid::zeros(lattice);
                src.values[lattice.spec().center_cell()] = 1.0;
                let q = FieldGrid::zeros(lattice);
                let g = relax_to_green(&src, &q, 0.0, self.green.steps)?;
                if !g.converged {
                    return Err(Error::NonConvergence {
                        what: "coulomb relaxation",
                        iterations: g.iterations,
                        residual: g.last_change,
                    });
                }
                let d = crate::lattice::GreenField::diffusivity(lattice.spec(), 0.0);
                let values = g.field.values.iter().map(|f| -p.strength * f * d).collect();
                PotentialField::new(FieldGrid::from_values(lattice, values)?)
            }
            PotentialKind::File => {
                let path = p
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("`potential.path` is required".into()))?;
                let frame = crate::frame::Frame::read_file(Path::new(path))?;
                if frame.dims != lattice.spec().dims {
                    return Err(Error::ShapeMismatch("potential frame does not fit the lattice".into()));
                }
                PotentialField::new(FieldGrid::from_values(lattice, frame.values)?)
            }
        }
    }

    /// Initial normalised wave function.
    pub fn initial_state(&self, lattice: &Arc<Lattice>) -> Result<ComplexField> {
        let init = self.init()?;
        let axes = lattice.axes();
        let momentum = match &init.momentum {
            Some(k) if k.len() != axes => {
                return Err(Error::Config(format!("momentum has {} components for {axes} axes", k.len())))
            }
            Some(k) => k.clone(),
            None => vec![0.0; axes],
        };
        match init.kind {
            InitKind::Gaussian => {
                let width = init
                    .width
                    .ok_or_else(|| Error::Config("`init.width` is required for a gaussian".into()))?;
                if !(width > 0.0) {
                    return Err(Error::Config("`init.width` must be positive".into()));
                }
                let c = self.center(lattice, init.center.as_ref())?;
                let a = oracle::gaussian_packet(lattice, &c, width, &momentum);
                if !init.mirror {
                    return Ok(a);
                }
                let extent: Vec<f64> = lattice
                    .spec()
                    .dims
                    .iter()
                    .map(|&d| (d - 1) as f64 * lattice.spacing())
                    .collect();
                let mc: Vec<f64> = c.iter().zip(&extent).map(|(x, e)| e - x).collect();
                let mk: Vec<f64> = momentum.iter().map(|k| -k).collect();
                let b = oracle::gaussian_packet(lattice, &mc, width, &mk);
                let sum = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
                Ok(ComplexField::from_values(lattice, sum)?.normalized())
            }
            InitKind::Delta => {
                let cell = init
                    .cell
                    .as_ref()
                    .ok_or_else(|| Error::Config("`init.cell` is required for a delta".into()))?;
                let idx = lattice.spec().cell_index(cell)?;
                let mut psi = ComplexField::zeros(lattice);
                psi.values[idx] = num_complex::Complex64::new(1.0, 0.0);
                Ok(psi)
            }
            InitKind::PlaneWave => {
                let h = lattice.spacing();
                Ok(ComplexField::from_fn(lattice, |c| {
                    let phase: f64 = c.iter().zip(&momentum).map(|(&x, k)| k * x as f64 * h).sum();
                    num_complex::Complex64::from_polar(1.0, phase)
                })
                .normalized())
            }
            InitKind::GroundState => {
                let v = self.potential(lattice)?;
                Ok(oracle::ground_state(lattice, self.kinetic, Some(&v.values.values))?.1)
            }
            InitKind::File => {
                let path = init
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("`init.path` is required".into()))?;
                let snap = crate::frame::SwarmSnapshot::read_file(Path::new(path))?;
                Ok(snap.to_swarm(lattice)?.reconstruct_wavefunction()?.0)
            }
        }
    }

    pub fn samples(&self) -> Result<u64> {
        Ok(self.init()?.samples)
    }

    pub fn epsilon(&self, cells: usize) -> Result<crate::measure::AmplitudeQuantum> {
        match self.measure.as_ref().and_then(|m| m.epsilon) {
            Some(e) => crate::measure::AmplitudeQuantum::new(e),
            None => crate::measure::AmplitudeQuantum::for_size(cells),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"
mode = "stochastic"
seed = 3
lattice.dims = [64]
lattice.boundary = "periodic"
init.kind = "gaussian"
init.width = 4.0
init.momentum = [0.5]
step.dt = 0.25
run.duration = 1.0
"#;

    #[test]
    fn parses_flat_dotted_keys() {
        let s: Scenario = FREE.parse().unwrap();
        assert_eq!(s.mode, Mode::Stochastic);
        assert_eq!(s.seed, 3);
        let l = s.build_lattice().unwrap();
        let psi = s.initial_state(&l).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let p = s.step_params().unwrap();
        assert_eq!(p.dt_phot, 0.25);
        assert_eq!(s.potential(&l).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn unknown_key_is_named_with_its_line() {
        let text = format!("{FREE}step.dtt = 0.1\n");
        match text.parse::<Scenario>() {
            Err(Error::Parse { line, message }) => {
                assert!(message.contains("dtt"), "{message}");
                assert_eq!(line, 11);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_width_is_a_config_error() {
        let s: Scenario = FREE.replace("init.width = 4.0\n", "").parse().unwrap();
        let l = s.build_lattice().unwrap();
        assert!(matches!(s.initial_state(&l), Err(Error::Config(_))));
    }

    #[test]
    fn potentials() {
        let s: Scenario = format!("{FREE}potential.kind = \"box\"\npotential.strength = 5.0\npotential.wall = 2\n")
            .parse()
            .unwrap();
        let l = s.build_lattice().unwrap();
        let v = s.potential(&l).unwrap();
        assert_eq!(v.values.values[1], 5.0);
        assert_eq!(v.values.values[2], 0.0);
        assert_eq!(v.values.values[62], 5.0);
    }
}
