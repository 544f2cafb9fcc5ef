//! Deterministic reference solvers used to judge swarm results.
//!
//! The operators here are assembled from the lattice spec alone, without
//! the precomputed neighbour tables of [`crate::lattice::Lattice`].

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, ComplexField, FieldGrid, Lattice, LatticeSpec};

/// Relative residual at which the Krylov solvers stop.
pub const SOLVER_TOLERANCE: f64 = 1e-13;
/// Residual `||H v - E v||` required of an eigenpair.
pub const EIGEN_TOLERANCE: f64 = 1e-8;
const MAX_SOLVER_ITERATIONS: usize = 20_000;
const MAX_INVERSE_ITERATIONS: usize = 5_000;

/// Nearest-neighbour operator `sum_nbr w f_nbr` on a lattice spec.
#[derive(Clone, Debug)]
struct Stencil {
    dims: Vec<usize>,
    strides: Vec<usize>,
    boundary: Boundary,
    center: Vec<f64>,
}

impl Stencil {
    fn new(spec: &LatticeSpec) -> Self {
        let d = spec.dims.len();
        let mut strides = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * spec.dims[a + 1];
        }
        Self {
            dims: spec.dims.clone(),
            strides,
            boundary: spec.boundary,
            center: spec.dims.iter().map(|&n| (n as f64 - 1.0) * 0.5).collect(),
        }
    }

    fn len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Ghost weight when stepping off the lattice from `idx` along `axis`.
    fn ghost(&self, idx: usize, axis: usize, step: i64) -> f64 {
        match self.boundary {
            Boundary::Absorbing => 0.0,
            Boundary::Reflecting => 1.0,
            Boundary::Periodic => unreachable!("periodic lattices have no ghosts"),
            Boundary::Open => {
                let (mut r_in, mut r_out) = (0.0, 0.0);
                for a in 0..self.dims.len() {
                    let x = ((idx / self.strides[a]) % self.dims[a]) as f64 - self.center[a];
                    let y = if a == axis { x + step as f64 } else { x };
                    r_in += x * x;
                    r_out += y * y;
                }
                (r_in / r_out).sqrt()
            }
        }
    }

    fn apply<T>(&self, f: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let mut out = vec![T::default(); f.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let mut acc = T::default();
            for a in 0..self.dims.len() {
                let x = (idx / self.strides[a]) % self.dims[a];
                let n = self.dims[a];
                for step in [-1i64, 1] {
                    let y = x as i64 + step;
                    if y >= 0 && (y as usize) < n {
                        let j = (idx as i64 + step * self.strides[a] as i64) as usize;
                        acc = acc + f[j] * 1.0;
                    } else if self.boundary == Boundary::Periodic {
                        let wrapped = y.rem_euclid(n as i64) as usize;
                        let j = idx - x * self.strides[a] + wrapped * self.strides[a];
                        acc = acc + f[j] * 1.0;
                    } else {
                        acc = acc + f[idx] * self.ghost(idx, a, step);
                    }
                }
            }
            *o = acc;
        }
        out
    }
}

/// Lattice Hamiltonian `H = -k Laplacian + V`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    stencil: Stencil,
    spacing: f64,
    kinetic: f64,
    potential: Vec<f64>,
}

impl Hamiltonian {
    pub fn new(spec: &LatticeSpec, kinetic: f64, potential: Option<&[f64]>) -> Result<Self> {
        let n = spec.cell_count();
        let potential = match potential {
            Some(v) if v.len() != n => {
                return Err(Error::ShapeMismatch(format!(
                    "potential has {} values for {n} cells",
                    v.len()
                )))
            }
            Some(v) => v.to_vec(),
            None => vec![0.0; n],
        };
        Ok(Self {
            stencil: Stencil::new(spec),
            spacing: spec.spacing,
            kinetic,
            potential,
        })
    }

    pub fn len(&self) -> usize {
        self.potential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potential.is_empty()
    }

    fn diagonal_kinetic(&self) -> f64 {
        self.kinetic * 2.0 * self.stencil.dims.len() as f64 / (self.spacing * self.spacing)
    }

    pub fn apply<T>(&self, f: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let nbr = self.stencil.apply(f);
        let off = -self.kinetic / (self.spacing * self.spacing);
        let diag = self.diagonal_kinetic();
        nbr.into_iter()
            .zip(f)
            .zip(&self.potential)
            .map(|((s, &x), &v)| s * off + x * (diag + v))
            .collect()
    }

    pub fn min_potential(&self) -> f64 {
        self.potential.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for a symmetric positive definite operator.
fn cg(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], tolerance: f64) -> Result<Vec<f64>> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rho = dot(&r, &r);
    for _ in 0..MAX_SOLVER_ITERATIONS {
        if rho.sqrt() / bnorm < tolerance {
            return Ok(x);
        }
        let q = apply(&p);
        let alpha = rho / dot(&p, &q);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let next = dot(&r, &r);
        let beta = next / rho;
        rho = next;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    let residual = rho.sqrt() / bnorm;
    if residual < 1e3 * tolerance {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        what: "CG",
        iterations: MAX_SOLVER_ITERATIONS,
        residual,
    })
}

/// Crank-Nicolson propagation of `psi` under `H = -kinetic Laplacian + V`:
/// `(1 + i dt H / 2) psi' = (1 - i dt H / 2) psi`, repeated `steps` times.
pub fn crank_nicolson(
    psi: &ComplexField,
    kinetic: f64,
    potential: Option<&[f64]>,
    dt: f64,
    steps: usize,
) -> Result<ComplexField> {
    let ham = Hamiltonian::new(psi.spec(), kinetic, potential)?;
    let values = crank_nicolson_values(&ham, &psi.values, dt, steps)?;
    ComplexField::from_values(psi.lattice(), values)
}

pub fn crank_nicolson_values(
    ham: &Hamiltonian,
    psi: &[Complex64],
    dt: f64,
    steps: usize,
) -> Result<Vec<Complex64>> {
    if psi.len() != ham.len() {
        return Err(Error::ShapeMismatch("state and Hamiltonian sizes differ".into()));
    }
    // (1 + i a H) x = b has the real SPD normal form (1 + a^2 H^2) x = (1 - i a H) b,
    // solved for the real and imaginary parts separately
    let a = 0.5 * dt;
    let normal = |x: &[f64]| -> Vec<f64> {
        let hhx = ham.apply(&ham.apply(x));
        x.iter().zip(&hhx).map(|(x, y)| x + a * a * y).collect()
    };
    let minus_iah = |v: &[Complex64]| -> Vec<Complex64> {
        let hv = ham.apply(v);
        v.iter().zip(&hv).map(|(x, h)| x - Complex64::new(0.0, a) * h).collect()
    };
    let mut cur = psi.to_vec();
    for _ in 0..steps {
        let rhs = minus_iah(&minus_iah(&cur));
        let re: Vec<f64> = rhs.iter().map(|z| z.re).collect();
        let im: Vec<f64> = rhs.iter().map(|z| z.im).collect();
        let xr = cg(normal, &re, SOLVER_TOLERANCE)?;
        let xi = cg(normal, &im, SOLVER_TOLERANCE)?;
        cur = xr.into_iter().zip(xi).map(|(r, i)| Complex64::new(r, i)).collect();
    }
    Ok(cur)
}

/// Lowest `count` eigenpairs of `H = -kinetic Laplacian + V`, by inverse
/// iteration with deflation against the pairs already found. Vectors are
/// unit-norm; energies ascend.
pub fn eigenstates(
    spec: &LatticeSpec,
    kinetic: f64,
    potential: Option<&[f64]>,
    count: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let ham = Hamiltonian::new(spec, kinetic, potential)?;
    let n = ham.len();
    if count == 0 || count > n {
        return Err(Error::Domain(format!("cannot extract {count} eigenstates from {n} cells")));
    }
    let shift = ham.min_potential() - 1e-3;
    let op = |x: &[f64]| -> Vec<f64> {
        ham.apply(x).into_iter().zip(x).map(|(h, v)| h - shift * v).collect()
    };
    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
    for k in 0..count {
        // deterministic start vector with overlap on every mode
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.37 * ((i * (k + 3)) as f64).sin() + 0.11 * (i as f64 * 0.71).cos())
            .collect();
        let mut energy = f64::NAN;
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            for (_, v) in &found {
                let c = dot(&x, v);
                x.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
            }
            let norm = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|a| *a /= norm);
            let hx = ham.apply(&x);
            energy = dot(&x, &hx);
            residual = hx
                .iter()
                .zip(&x)
                .map(|(h, v)| (h - energy * v).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual < EIGEN_TOLERANCE {
                break;
            }
            x = cg(op, &x, 1e-14)?;
        }
        if residual >= EIGEN_TOLERANCE {
            return Err(Error::NonConvergence {
                what: "inverse iteration",
                iterations: MAX_INVERSE_ITERATIONS,
                residual,
            });
        }
        found.push((energy, x));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(found)
}

/// Normalised Gaussian packet `exp(-|x - x0|^2 / (4 sigma^2) + i k.x)` with
/// density width `sigma`, all in physical units.
pub fn gaussian_packet(lattice: &Arc<Lattice>, center: &[f64], sigma: f64, momentum: &[f64]) -> ComplexField {
    let h = lattice.spacing();
    ComplexField::from_fn(lattice, |c| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for (a, &x) in c.iter().enumerate() {
            let x = x as f64 * h;
            r2 += (x - center[a]).powi(2);
            phase += momentum.get(a).copied().unwrap_or(0.0) * x;
        }
        Complex64::from_polar((-r2 / (4.0 * sigma * sigma)).exp(), phase)
    })
    .normalized()
}

/// Density width of a free Gaussian at time `t` under `i dpsi/dt = -k Lap psi`:
/// `sigma sqrt(1 + (k t / sigma^2)^2)`.
pub fn free_gaussian_width(sigma: f64, kinetic: f64, t: f64) -> f64 {
    sigma * (1.0 + (kinetic * t / (sigma * sigma)).powi(2)).sqrt()
}

/// Time at which the free width reaches `factor` times the initial width.
pub fn width_growth_time(sigma: f64, kinetic: f64, factor: f64) -> f64 {
    sigma * sigma * (factor * factor - 1.0).sqrt() / kinetic
}

/// Reference propagation over duration `t` with step at most `dt`.
pub fn reference_evolve(
    psi: &ComplexField,
    kinetic: f64,
    potential: Option<&[f64]>,
    t: f64,
    dt: f64,
) -> Result<ComplexField> {
    if !(dt > 0.0) || t < 0.0 {
        return Err(Error::Domain(format!("need dt > 0 and t >= 0, got dt = {dt}, t = {t}")));
    }
    let steps = (t / dt).ceil() as usize;
    if steps == 0 {
        return Ok(psi.clone());
    }
    crank_nicolson(psi, kinetic, potential, t / steps as f64, steps)
}

/// Ground state as a normalised complex field with a non-negative sum.
pub fn ground_state(
    lattice: &Arc<Lattice>,
    kinetic: f64,
    potential: Option<&[f64]>,
) -> Result<(f64, ComplexField)> {
    let (e, mut v) = eigenstates(lattice.spec(), kinetic, potential, 1)?.remove(0);
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let values = v.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
    Ok((e, ComplexField::from_values(lattice, values)?))
}

/// L2 distance between two non-negative densities, each first scaled to
/// unit total mass. Two disjoint point masses are `sqrt(2)` apart.
pub fn density_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} cells", a.len(), b.len())));
    }
    let ta: f64 = a.iter().sum();
    let tb: f64 = b.iter().sum();
    if ta <= 0.0 || tb <= 0.0 {
        return Err(Error::Domain("density with no mass".into()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x / ta - y / tb).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Direct solution of the diffusion-equilibrium equation
/// `absorption F + (1 - stay)/(2d) (2d F - sum_nbr w F) = source`.
pub fn solve_green(source: &FieldGrid, absorption: &FieldGrid, stay: f64) -> Result<FieldGrid> {
    if source.spec() != absorption.spec() {
        return Err(Error::ShapeMismatch("source and absorption lattices differ".into()));
    }
    let spec = source.spec();
    let stencil = Stencil::new(spec);
    if spec.boundary == Boundary::Periodic
        || spec.boundary == Boundary::Reflecting && absorption.values.iter().all(|&q| q == 0.0)
    {
        return Err(Error::Domain("equilibrium is singular without a sink".into()));
    }
    let hop = (1.0 - stay) / (2 * spec.axes()) as f64;
    let diag = 2.0 * spec.axes() as f64;
    let q = &absorption.values;
    let values = cg(
        |x| {
            let s = stencil.apply(x);
            (0..x.len())
                .map(|i| q[i] * x[i] + hop * (diag * x[i] - s[i]))
                .collect()
        },
        &source.values,
        1e-12,
    )?;
    debug_assert_eq!(values.len(), stencil.len());
    FieldGrid::from_values(source.lattice(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::field_laplacian;

    fn lat(dims: &[usize], h: f64, b: Boundary) -> Arc<Lattice> {
        Lattice::new(LatticeSpec::new(dims, h, b).unwrap())
    }

    #[test]
    fn stencil_matches_lattice_laplacian() {
        for b in [Boundary::Absorbing, Boundary::Reflecting, Boundary::Periodic, Boundary::Open] {
            let l = lat(&[5, 4], 0.5, b);
            let f = FieldGrid::from_fn(&l, |c| (c[0] * 3 + c[1] * c[1]) as f64 * 0.1 + 1.0);
            let lap = field_laplacian(&f);
            let h = Hamiltonian::new(l.spec(), 1.0, None).unwrap();
            let hf = h.apply(&f.values);
            for (a, b) in lap.values.iter().zip(hf) {
                assert!((a + b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crank_nicolson_preserves_norm() {
        let l = lat(&[64], 1.0, Boundary::Periodic);
        let psi = ComplexField::from_fn(&l, |c| {
            Complex64::from_polar((-(c[0] as f64 - 32.0).powi(2) / 18.0).exp(), 0.5 * c[0] as f64)
        })
        .normalized();
        let out = crank_nicolson(&psi, 1.0, None, 0.1, 50).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn crank_nicolson_is_time_reversible() {
        let l = lat(&[48], 1.0, Boundary::Absorbing);
        let v: Vec<f64> = (0..48).map(|i| 0.002 * (i as f64 - 24.0).powi(2)).collect();
        let psi = ComplexField::from_fn(&l, |c| {
            Complex64::from_polar((-(c[0] as f64 - 20.0).powi(2) / 10.0).exp(), 0.3 * c[0] as f64)
        })
        .normalized();
        let fwd = crank_nicolson(&psi, 1.0, Some(&v), 0.05, 40).unwrap();
        let conj = ComplexField::from_values(&l, fwd.values.iter().map(|z| z.conj()).collect()).unwrap();
        let back = crank_nicolson(&conj, 1.0, Some(&v), 0.05, 40).unwrap();
        let err: f64 = back
            .values
            .iter()
            .zip(&psi.values)
            .map(|(a, b)| (a.conj() - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn box_eigenvalues_match_closed_form() {
        let n = 20;
        let l = lat(&[n], 1.0, Boundary::Absorbing);
        let states = eigenstates(l.spec(), 1.0, None, 3).unwrap();
        for (k, (e, _)) in states.iter().enumerate() {
            let theta = std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64;
            let exact = 2.0 - 2.0 * theta.cos();
            assert!((e - exact).abs() < 1e-9, "{k}: {e} vs {exact}");
        }
    }

    #[test]
    fn ground_state_is_positive() {
        let l = lat(&[15], 1.0, Boundary::Absorbing);
        let (_, g) = ground_state(&l, 1.0, None).unwrap();
        assert!(g.values.iter().all(|z| z.re > 0.0));
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_error_examples() {
        assert_eq!(density_error(&[1.0, 0.0], &[2.0, 0.0]).unwrap(), 0.0);
        assert!((density_error(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(density_error(&[1.0], &[1.0, 0.0]).is_err());
        assert!(density_error(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn green_solution_is_relaxation_fixed_point() {
        let l = lat(&[9, 9], 1.0, Boundary::Absorbing);
        let mut src = FieldGrid::zeros(&l);
        src.values[l.spec().center_cell()] = 1.0;
        let q = FieldGrid::from_fn(&l, |_| 0.01);
        let direct = solve_green(&src, &q, 0.2).unwrap();
        let relaxed = crate::lattice::relax_to_green_with(&src, &q, 0.2, 100_000, 1e-12).unwrap();
        for (a, b) in direct.values.iter().zip(&relaxed.field.values) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
    }
}
