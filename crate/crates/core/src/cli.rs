//! Subcommand implementations. Each returns a [`Report`] of `KEY: value`
//! lines; `main` only parses arguments and prints.

use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bench::bench_scaling;
use crate::config::{Mode, Scenario};
use crate::dynamics::{step_meanfield, step_stochastic};
use crate::error::{Error, Result};
use crate::frame::{compare_frames, write_pgm, Frame, SwarmSnapshot};
use crate::lattice::{relax_to_green, FieldGrid, GreenField};
use crate::measure::{born_measure, meas_line, measure_swarm, reduce, BornStatistics, DiscreteState};
use crate::oracle::{crank_nicolson, solve_green};
use crate::rng::Streams;
use crate::swarm::{sample_from_wavefunction, Swarm};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "QSWARM_OUT";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
}

impl Options {
    fn seed(&self, scenario: &Scenario) -> u64 {
        self.seed.unwrap_or(scenario.seed)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = match &self.out {
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("qswarm-out"), PathBuf::from),
        };
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

enum Evolver {
    Swarm(Swarm),
    Oracle(crate::lattice::ComplexField),
}

/// Runs a scenario and writes numbered density frames.
pub fn run(scenario: &Scenario, opts: &Options) -> Result<Report> {
    let mode = opts.mode.unwrap_or(scenario.mode);
    let seed = opts.seed(scenario);
    let out = opts.out_dir()?;
    let lattice = scenario.build_lattice()?;
    let potential = scenario.potential(&lattice)?;
    let params = scenario.step_params()?;
    let psi0 = scenario.initial_state(&lattice)?;
    let samples = scenario.samples()?;
    let steps = (scenario.run.duration / params.dt).round() as usize;

    let mut state = match mode {
        Mode::Meanfield => {
            let mut s = Swarm::from_wavefunction_exact(&psi0, samples as f64)?;
            s.kinetic = scenario.kinetic;
            Evolver::Swarm(s)
        }
        Mode::Stochastic => {
            let mut s = sample_from_wavefunction(&psi0, samples, seed)?;
            s.kinetic = scenario.kinetic;
            if params.drift_rule {
                s.tag_velocities_from_phase()?;
            }
            Evolver::Swarm(s)
        }
        Mode::Oracle => Evolver::Oracle(psi0.clone()),
    };
    let oracle_dt = scenario
        .step
        .as_ref()
        .and_then(|s| s.oracle_dt)
        .unwrap_or(params.dt);
    let substeps = (params.dt / oracle_dt).ceil().max(1.0) as usize;
    let mut streams = Streams::new(seed);

    let mut frames = 0usize;
    let mut emit = |state: &Evolver, step: usize| -> Result<()> {
        let time = step as f64 * params.dt;
        let density = match state {
            Evolver::Swarm(s) => s.reconstruct_wavefunction()?.0.density(),
            Evolver::Oracle(psi) => psi.density(),
        };
        let frame = Frame::from_values(&lattice, time, density)?;
        frame.write_file(&out.join(format!("frame_{frames:05}.txt")))?;
        if scenario.run.pgm {
            write_pgm(&frame, &out.join(format!("frame_{frames:05}.pgm")))?;
        }
        if let (true, Evolver::Swarm(s)) = (scenario.run.types, state) {
            SwarmSnapshot::of(s, time).write_file(&out.join(format!("swarm_{frames:05}.txt")))?;
        }
        frames += 1;
        Ok(())
    };

    emit(&state, 0)?;
    let start = Instant::now();
    for step in 1..=steps {
        match &mut state {
            Evolver::Swarm(s) => match mode {
                Mode::Meanfield => step_meanfield(s, &potential, &params)?,
                _ => step_stochastic(s, &potential, &params, &mut streams)?,
            },
            Evolver::Oracle(psi) => {
                *psi = crank_nicolson(
                    psi,
                    scenario.kinetic,
                    Some(&potential.values.values),
                    params.dt / substeps as f64,
                    substeps,
                )?;
            }
        }
        let every = scenario.run.frame_every;
        if (every > 0 && step % every == 0) || step == steps {
            emit(&state, step)?;
        }
    }
    let wall = start.elapsed().as_secs_f64();

    let mut report = Report::default();
    report.push("COMMAND", "run");
    report.push("MODE", format!("{mode:?}").to_lowercase());
    report.push("SEED", seed);
    report.push("STEPS", steps);
    report.push("FRAMES", frames);
    report.push("FINAL_TIME", steps as f64 * params.dt);
    match &state {
        Evolver::Swarm(s) => {
            let (_, norm) = s.reconstruct_wavefunction()?;
            report.push("FINAL_NORM", norm);
            report.push("POPULATION", s.population());
        }
        Evolver::Oracle(psi) => {
            report.push("FINAL_NORM", psi.norm());
            report.push("POPULATION", 0);
        }
    }
    report.push("WALL_TIME_PER_STEP", if steps > 0 { wall / steps as f64 } else { 0.0 });
    report.push("OUT", out.display());
    report.write_file(&out.join("report.txt"))?;
    Ok(report)
}

/// Born-rule statistics of position measurements on fresh copies of the
/// initial swarm.
pub fn born_test(scenario: &Scenario, draws: u64, opts: &Options) -> Result<Report> {
    if draws < 1000 {
        return Err(Error::Config(format!("born-test needs at least 1000 draws, got {draws}")));
    }
    let seed = opts.seed(scenario);
    let out = opts.out_dir()?;
    let lattice = scenario.build_lattice()?;
    let psi0 = scenario.initial_state(&lattice)?;
    let swarm = sample_from_wavefunction(&psi0, scenario.samples()?, seed)?;
    let q = scenario.epsilon(lattice.cell_count())?;
    let (psi, _) = swarm.reconstruct_wavefunction()?;
    let raw = DiscreteState::new(psi.values.clone())?;
    let reduced = reduce(&raw, q)?;
    let theory = raw.probabilities();
    let mut rng = Streams::new(seed).sequential();

    // every draw measures a fresh copy, so the reduced state is shared
    let mut observed = vec![0u64; theory.len()];
    let mut log = std::io::BufWriter::new(std::fs::File::create(out.join("meas.log"))?);
    for i in 0..draws {
        let label = born_measure(&reduced, q, &mut rng)?;
        observed[label] += 1;
        writeln!(log, "{}", meas_line(i, label, theory[label]))?;
    }
    log.flush()?;
    let mut copy = swarm.clone();
    let m = measure_swarm(&mut copy, q, &mut rng)?;
    let support = copy
        .reconstruct_wavefunction()?
        .0
        .values
        .iter()
        .filter(|z| z.norm_sqr() > 0.0)
        .count();

    let stats = BornStatistics::new(observed, theory)?;
    let mut report = Report::default();
    report.push("COMMAND", "born-test");
    report.push("SEED", seed);
    report.push("DRAWS", draws);
    report.push("EPSILON", q.epsilon());
    report.push("LABELS", stats.expected.len());
    report.push("SURVIVING_LABELS", reduced.term_count());
    for (j, (&o, &p)) in stats.observed.iter().zip(&stats.expected).enumerate() {
        if o > 0 || p > 0.0 {
            report.push(
                &format!("LABEL_{j}"),
                format!("{:.6} {:.6} {:.3}", o as f64 / draws as f64, p, stats.z_scores[j]),
            );
        }
    }
    report.push("MAX_ABS_Z", stats.max_abs_z());
    report.push("CHI_SQUARE", stats.chi_square);
    report.push("P_VALUE", stats.p_value);
    report.push("COLLAPSE_CELL", m.cell);
    report.push("COLLAPSE_SUPPORT", support);
    report.write_file(&out.join("born_report.txt"))?;
    Ok(report)
}

const GREEN_WINDOW: (f64, f64) = (3.0, 8.0);

/// Diffusion equilibrium around a central point source on a 3D lattice,
/// compared with `C / r` and with a direct solve of the same equations.
pub fn green_test(scenario: &Scenario, opts: &Options) -> Result<Report> {
    let out = opts.out_dir()?;
    let lattice = scenario.build_lattice()?;
    if lattice.axes() != 3 {
        return Err(Error::Config(format!(
            "green-test needs a 3D lattice, got {} axes",
            lattice.axes()
        )));
    }
    let g = &scenario.green;
    let spec = lattice.spec();
    let center = spec.center_cell();
    let c_coords = spec.coords(center);
    let mut source = FieldGrid::zeros(&lattice);
    source.values[center] = g.source;
    let absorption = FieldGrid::from_fn(&lattice, |_| g.absorption);
    let start = Instant::now();
    let relaxed = relax_to_green(&source, &absorption, g.stay, g.steps)?;
    let wall = start.elapsed().as_secs_f64();
    let d = GreenField::diffusivity(spec, g.stay);

    let mut report = Report::default();
    report.push("COMMAND", "green-test");
    report.push("BOUNDARY", spec.boundary);
    report.push("CONVERGED", relaxed.converged);
    report.push("ITERATIONS", relaxed.iterations);
    report.push("WALL_TIME", wall);
    let reach = c_coords
        .iter()
        .zip(&spec.dims)
        .map(|(&c, &n)| c.min(n - 1 - c))
        .min()
        .unwrap_or(0);
    if (reach as f64) < GREEN_WINDOW.1 + 1.0 {
        report.push("WARNING", "window truncated");
    }

    // potential of a unit charge: D * F / source
    let scale = if g.source != 0.0 { d / g.source } else { 0.0 };
    let direct = if g.source != 0.0 {
        Some(solve_green(&source, &absorption, g.stay)?)
    } else {
        None
    };
    let mut window = Vec::new();
    let mut profile: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for cell in 0..lattice.cell_count() {
        let coords = spec.coords(cell);
        let r = coords
            .iter()
            .zip(&c_coords)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let f = relaxed.field.values[cell] * scale;
        let e = profile.entry(r.round() as usize).or_default();
        e.0 += f;
        e.1 += 1;
        if r >= GREEN_WINDOW.0 && r <= GREEN_WINDOW.1 {
            let reference = direct.as_ref().map_or(0.0, |dv| dv.values[cell] * scale);
            window.push((r, f, reference));
        }
    }
    for (r, (sum, n)) in &profile {
        if *r as f64 <= GREEN_WINDOW.1 + 2.0 {
            report.push(&format!("PROFILE_R{r}"), sum / *n as f64);
        }
    }
    if window.is_empty() || g.source == 0.0 {
        report.push("FIT_C", 0.0);
        report.push("FIT_EXPONENT", "n/a");
        report.push("MAX_REL_DEV", 0.0);
        report.push("DIRECT_MAX_REL_DIFF", 0.0);
        report.write_file(&out.join("green_report.txt"))?;
        return Ok(report);
    }
    let c_fit = window.iter().map(|(r, f, _)| f / r).sum::<f64>()
        / window.iter().map(|(r, _, _)| 1.0 / (r * r)).sum::<f64>();
    let max_dev = window
        .iter()
        .map(|(r, f, _)| ((f - c_fit / r) / (c_fit / r)).abs())
        .fold(0.0, f64::max);
    let direct_dev = window
        .iter()
        .map(|(_, f, reference)| ((f - reference) / reference).abs())
        .fold(0.0, f64::max);
    let (lx, ly): (Vec<f64>, Vec<f64>) = window
        .iter()
        .filter(|w| w.1 > 0.0)
        .map(|(r, f, _)| (r.ln(), f.ln()))
        .unzip();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    report.push("FIT_C", c_fit);
    report.push("FIT_EXPONENT", slope);
    report.push("MAX_REL_DEV", max_dev);
    report.push("DIRECT_MAX_REL_DIFF", direct_dev);
    report.write_file(&out.join("green_report.txt"))?;
    Ok(report)
}

/// Step time against the number of identical independent particles.
pub fn bench(scenario: &Scenario, particles: &[usize], opts: &Options) -> Result<Report> {
    let out = opts.out_dir()?;
    let seed = opts.seed(scenario);
    let lattice = scenario.build_lattice()?;
    let potential = scenario.potential(&lattice)?;
    let params = scenario.step_params()?;
    let psi = scenario.initial_state(&lattice)?;
    let b = bench_scaling(
        &psi,
        &potential,
        &params,
        particles,
        scenario.samples()?,
        scenario.bench.steps,
        scenario.bench.repeats,
        seed,
    )?;
    let mut report = Report::default();
    report.push("COMMAND", "bench");
    report.push("CELLS", lattice.cell_count());
    for row in &b.rows {
        report.push(&format!("ROW_N{}", row.particles), format!("{} {:.6e}", row.particles * row.cells, row.seconds_per_step));
    }
    report.push("R_SQUARED", b.r_squared);
    report.write_file(&out.join("bench_report.txt"))?;
    Ok(report)
}

/// Density error and largest difference between the first frames of two files.
pub fn compare(a: &Path, b: &Path) -> Result<Report> {
    let fa = Frame::read_file(a)?;
    let fb = Frame::read_file(b)?;
    let c = compare_frames(&fa, &fb)?;
    let mut report = Report::default();
    report.push("COMMAND", "compare");
    report.push("TIME_A", fa.time);
    report.push("TIME_B", fb.time);
    report.push("DENSITY_ERROR", c.density_error);
    report.push("MAX_ABS_DIFF", c.max_abs_diff);
    Ok(report)
}
