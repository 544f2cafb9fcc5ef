//! Browser demo: a 1D packet evolved by the swarm next to the reference
//! integrator, with position measurements on demand.

use qswarm::dynamics::{stable_dt, step_meanfield, step_stochastic, PotentialField, StepParams};
use qswarm::lattice::{Boundary, ComplexField, Lattice, LatticeSpec};
use qswarm::measure::{measure_swarm, AmplitudeQuantum};
use qswarm::oracle::{crank_nicolson, density_error, gaussian_packet};
use qswarm::rng::{seeded, Streams};
use qswarm::swarm::{sample_from_wavefunction, Swarm};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js(e: qswarm::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    swarm: Swarm,
    oracle: ComplexField,
    potential: PotentialField,
    params: StepParams,
    streams: Streams,
    rng: ChaCha8Rng,
    stochastic: bool,
    time: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Two packets with opposite momenta `k` on a ring of `cells`, optionally
    /// inside a harmonic well of the given strength.
    #[wasm_bindgen(constructor)]
    pub fn new(
        cells: usize,
        width: f64,
        k: f64,
        well: f64,
        samples: u32,
        seed: u32,
        stochastic: bool,
    ) -> Result<Demo, JsValue> {
        let lattice = Lattice::new(LatticeSpec::one_d(cells, 1.0, Boundary::Periodic).map_err(js)?);
        let n = cells as f64;
        let a = gaussian_packet(&lattice, &[0.35 * n], width, &[k]);
        let b = gaussian_packet(&lattice, &[0.65 * n], width, &[-k]);
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        let psi = ComplexField::from_values(&lattice, values).map_err(js)?.normalized();
        let potential = if well > 0.0 {
            PotentialField::harmonic(&lattice, well, &lattice.spec().center())
        } else {
            PotentialField::zero(&lattice)
        };
        let swarm = if stochastic {
            sample_from_wavefunction(&psi, u64::from(samples), u64::from(seed)).map_err(js)?
        } else {
            Swarm::from_wavefunction_exact(&psi, f64::from(samples)).map_err(js)?
        };
        let dt = 0.5 * stable_dt(&swarm, &potential);
        Ok(Demo {
            swarm,
            oracle: psi,
            potential,
            params: StepParams::calibrated(dt),
            streams: Streams::new(u64::from(seed)),
            rng: seeded(u64::from(seed) ^ 0x5eed),
            stochastic,
            time: 0.0,
        })
    }

    /// Advances both the swarm and the reference by `steps` steps.
    pub fn step(&mut self, steps: u32) -> Result<(), JsValue> {
        let p = &self.params;
        for _ in 0..steps {
            if self.stochastic {
                step_stochastic(&mut self.swarm, &self.potential, p, &mut self.streams).map_err(js)?;
            } else {
                step_meanfield(&mut self.swarm, &self.potential, p).map_err(js)?;
            }
        }
        let t = p.dt * f64::from(steps);
        let sub = (t / 0.05).ceil().max(1.0) as usize;
        self.oracle = crank_nicolson(&self.oracle, 1.0, Some(&self.potential.values.values), t / sub as f64, sub)
            .map_err(js)?;
        self.time += t;
        Ok(())
    }

    /// Collapses the swarm to one cell by a Born-rule draw and returns it.
    /// The reference follows the same collapse.
    pub fn measure(&mut self) -> Result<usize, JsValue> {
        let q = AmplitudeQuantum::for_size(self.swarm.cell_count()).map_err(js)?;
        let m = measure_swarm(&mut self.swarm, q, &mut self.rng).map_err(js)?;
        let lattice = self.oracle.lattice().clone();
        self.oracle = ComplexField::from_fn(&lattice, |c| {
            if c[0] == m.cell {
                1.0.into()
            } else {
                0.0.into()
            }
        });
        Ok(m.cell)
    }

    pub fn density(&self) -> Result<Vec<f64>, JsValue> {
        Ok(self.swarm.reconstruct_wavefunction().map_err(js)?.0.density())
    }

    pub fn oracle_density(&self) -> Vec<f64> {
        self.oracle.density()
    }

    /// L2 distance between the two normalised densities.
    pub fn error(&self) -> Result<f64, JsValue> {
        density_error(&self.density()?, &self.oracle.density()).map_err(js)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn population(&self) -> f64 {
        self.swarm.population()
    }
}
