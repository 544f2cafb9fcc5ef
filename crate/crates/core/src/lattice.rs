//! Configuration-space lattice: cell indexing, neighbour links, scalar fields,
//! field diffusion and the diffusion-equilibrium construction of potentials.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;

/// Default stopping tolerance for [`relax_to_green`]: maximum per-cell
/// relative change between iterates.
pub const GREEN_TOLERANCE: f64 = 1e-6;

/// Boundary handling shared by diffusion, the Laplacian and the samplers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Mass leaving the lattice is lost; the field outside is zero.
    Absorbing,
    /// Mass attempting to leave stays in its cell (zero normal gradient).
    Reflecting,
    /// Opposite faces are identified.
    Periodic,
    /// Partially absorbing sink: of the mass leaving a boundary cell, the
    /// fraction `r_cell / r_ghost` (distances from the lattice centre) is
    /// returned. The outside field then decays like `1/r` about the centre,
    /// which emulates an unbounded domain for point-source equilibria.
    Open,
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "absorbing" => Ok(Boundary::Absorbing),
            "reflecting" => Ok(Boundary::Reflecting),
            "periodic" => Ok(Boundary::Periodic),
            "open" => Ok(Boundary::Open),
            other => Err(Error::Config(format!("unknown boundary `{other}`"))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Boundary::Absorbing => "absorbing",
            Boundary::Reflecting => "reflecting",
            Boundary::Periodic => "periodic",
            Boundary::Open => "open",
        };
        f.write_str(name)
    }
}

/// Shape, spacing and boundary of a 1–3 axis lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(dims: &[usize], spacing: f64, boundary: Boundary) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Domain(format!(
                "lattice must have 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::Domain(format!("every axis needs at least 2 cells, got {d}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Domain(format!("spacing must be positive, got {spacing}")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Domain("cell count overflows".into()))?;
        Ok(Self {
            dims: dims.to_vec(),
            spacing,
            boundary,
        })
    }

    pub fn one_d(n: usize, spacing: f64, boundary: Boundary) -> Result<Self> {
        Self::new(&[n], spacing, boundary)
    }

    pub fn axes(&self) -> usize {
        self.dims.len()
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major linear index of integer coordinates (last axis fastest).
    /// Periodic lattices wrap; other boundaries reject out-of-range input.
    pub fn cell_index(&self, coords: &[i64]) -> Result<usize> {
        if coords.len() != self.dims.len() {
            return Err(Error::Domain(format!(
                "expected {} coordinates, got {}",
                self.dims.len(),
                coords.len()
            )));
        }
        let mut index = 0usize;
        for (&c, &d) in coords.iter().zip(&self.dims) {
            let d_i = d as i64;
            let c = if self.boundary == Boundary::Periodic {
                c.rem_euclid(d_i)
            } else if (0..d_i).contains(&c) {
                c
            } else {
                return Err(Error::Domain(format!(
                    "coordinate {c} outside 0..{d} under {} boundary",
                    self.boundary
                )));
            };
            index = index * d + c as usize;
        }
        Ok(index)
    }

    /// Inverse of [`LatticeSpec::cell_index`].
    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    /// Geometric centre in cell units.
    pub fn center(&self) -> Vec<f64> {
        self.dims.iter().map(|&d| (d as f64 - 1.0) / 2.0).collect()
    }

    /// Cell closest to the geometric centre (rounding down).
    pub fn center_cell(&self) -> usize {
        let c: Vec<i64> = self.dims.iter().map(|&d| ((d - 1) / 2) as i64).collect();
        self.cell_index(&c).expect("centre is inside the lattice")
    }
}

/// One directed neighbour link. Mass hopping along the link arrives at
/// `target` scaled by `weight` (the remainder is absorbed).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub target: usize,
    pub weight: f64,
}

/// A lattice spec with its precomputed neighbour table, shared by all
/// fields defined on it.
#[derive(Debug)]
pub struct Lattice {
    spec: LatticeSpec,
    links: Vec<Link>,
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Arc<Self> {
        let n = spec.cell_count();
        let d = spec.axes();
        let center = spec.center();
        let mut links = Vec::with_capacity(n * 2 * d);
        for cell in 0..n {
            let coords = spec.coords(cell);
            for axis in 0..d {
                for step in [-1i64, 1] {
                    let c = coords[axis] as i64 + step;
                    let dim = spec.dims[axis] as i64;
                    let link = if (0..dim).contains(&c) {
                        let mut nc: Vec<i64> = coords.iter().map(|&x| x as i64).collect();
                        nc[axis] = c;
                        Link {
                            target: spec.cell_index(&nc).expect("in range"),
                            weight: 1.0,
                        }
                    } else {
                        match spec.boundary {
                            Boundary::Periodic => {
                                let mut nc: Vec<i64> = coords.iter().map(|&x| x as i64).collect();
                                nc[axis] = c.rem_euclid(dim);
                                Link {
                                    target: spec.cell_index(&nc).expect("wrapped"),
                                    weight: 1.0,
                                }
                            }
                            Boundary::Reflecting => Link {
                                target: cell,
                                weight: 1.0,
                            },
                            Boundary::Absorbing => Link {
                                target: cell,
                                weight: 0.0,
                            },
                            Boundary::Open => {
                                let r_in = distance(&coords, None, &center);
                                let r_out = distance(&coords, Some((axis, step)), &center);
                                Link {
                                    target: cell,
                                    weight: r_in / r_out,
                                }
                            }
                        }
                    };
                    links.push(link);
                }
            }
        }
        Arc::new(Self { spec, links })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn cell_count(&self) -> usize {
        self.spec.cell_count()
    }

    pub fn axes(&self) -> usize {
        self.spec.axes()
    }

    pub fn spacing(&self) -> f64 {
        self.spec.spacing
    }

    /// The `2d` outgoing links of `cell`, ordered (axis 0 −, axis 0 +, axis 1 −, ...).
    pub fn links(&self, cell: usize) -> &[Link] {
        let k = 2 * self.axes();
        &self.links[cell * k..(cell + 1) * k]
    }

    /// True when every link delivers its full mass back into the lattice.
    pub fn conserves_mass(&self) -> bool {
        matches!(self.spec.boundary, Boundary::Periodic | Boundary::Reflecting)
    }
}

fn distance(coords: &[usize], shift: Option<(usize, i64)>, center: &[f64]) -> f64 {
    coords
        .iter()
        .enumerate()
        .map(|(axis, &c)| {
            let mut x = c as f64;
            if let Some((a, s)) = shift {
                if a == axis {
                    x += s as f64;
                }
            }
            (x - center[axis]).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Per-cell real intensity over a lattice.
#[derive(Clone, Debug)]
pub struct FieldGrid {
    lattice: Arc<Lattice>,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        Self {
            lattice: Arc::clone(lattice),
            values: vec![0.0; lattice.cell_count()],
        }
    }

    pub fn from_values(lattice: &Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} cells",
                values.len(),
                lattice.cell_count()
            )));
        }
        Ok(Self {
            lattice: Arc::clone(lattice),
            values,
        })
    }

    pub fn from_fn(lattice: &Arc<Lattice>, f: impl Fn(&[usize]) -> f64) -> Self {
        let spec = lattice.spec();
        let values = (0..lattice.cell_count()).map(|i| f(&spec.coords(i))).collect();
        Self {
            lattice: Arc::clone(lattice),
            values,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.lattice.spec()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

/// Per-cell complex amplitude over a lattice.
#[derive(Clone, Debug)]
pub struct ComplexField {
    lattice: Arc<Lattice>,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        Self {
            lattice: Arc::clone(lattice),
            values: vec![Complex64::new(0.0, 0.0); lattice.cell_count()],
        }
    }

    pub fn from_values(lattice: &Arc<Lattice>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != lattice.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for {} cells",
                values.len(),
                lattice.cell_count()
            )));
        }
        Ok(Self {
            lattice: Arc::clone(lattice),
            values,
        })
    }

    pub fn from_fn(lattice: &Arc<Lattice>, f: impl Fn(&[usize]) -> Complex64) -> Self {
        let spec = lattice.spec();
        let values = (0..lattice.cell_count()).map(|i| f(&spec.coords(i))).collect();
        Self {
            lattice: Arc::clone(lattice),
            values,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.lattice.spec()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Scales to unit norm and returns the previous norm. A zero field is
    /// left untouched.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            for z in &mut self.values {
                *z /= n;
            }
        }
        n
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Redistributes every cell's mass: fraction `stay` remains, `(1 - stay)/(2d)`
/// moves along each neighbour link.
pub fn diffuse_field(f: &FieldGrid, stay: f64) -> Result<FieldGrid> {
    if !(0.0..=1.0).contains(&stay) {
        return Err(Error::Domain(format!("stay probability {stay} outside [0, 1]")));
    }
    let lattice = f.lattice();
    let hop = (1.0 - stay) / (2 * lattice.axes()) as f64;
    let values = par::map_cells(f.len(), |cell| {
        let inflow: f64 = lattice
            .links(cell)
            .iter()
            .map(|l| l.weight * f.values[l.target])
            .sum();
        stay * f.values[cell] + hop * inflow
    });
    FieldGrid::from_values(lattice, values)
}

/// Standard `2d + 1`-point Laplacian, `(sum of neighbours - 2d * centre) / h^2`,
/// with the ghost values implied by the boundary.
pub fn field_laplacian(f: &FieldGrid) -> FieldGrid {
    let values = laplacian_values(f.lattice(), &f.values);
    FieldGrid {
        lattice: Arc::clone(f.lattice()),
        values,
    }
}

pub(crate) fn laplacian_values(lattice: &Lattice, values: &[f64]) -> Vec<f64> {
    let inv_h2 = 1.0 / (lattice.spacing() * lattice.spacing());
    let diag = (2 * lattice.axes()) as f64;
    par::map_cells(values.len(), |cell| {
        let s: f64 = lattice
            .links(cell)
            .iter()
            .map(|l| l.weight * values[l.target])
            .sum();
        (s - diag * values[cell]) * inv_h2
    })
}

/// Result of a diffusion-equilibrium relaxation.
#[derive(Clone, Debug)]
pub struct GreenField {
    pub field: FieldGrid,
    pub converged: bool,
    pub iterations: usize,
    /// Maximum per-cell relative change of the final iteration.
    pub last_change: f64,
}

impl GreenField {
    /// Diffusion coefficient of the relaxation dynamics for a given stay
    /// probability: one iteration adds `(1 - p) h^2 / (2d) * Laplacian`.
    pub fn diffusivity(spec: &LatticeSpec, stay: f64) -> f64 {
        (1.0 - stay) * spec.spacing * spec.spacing / (2 * spec.axes()) as f64
    }
}

/// Iterates `F <- diffuse(F, stay) + source - absorption * F` until the
/// maximum per-cell relative change drops below [`GREEN_TOLERANCE`] or
/// `steps` iterations are spent. The fixed point satisfies
/// `D * Laplacian(F) = absorption * F - source` with `D` from
/// [`GreenField::diffusivity`].
pub fn relax_to_green(
    source: &FieldGrid,
    absorption: &FieldGrid,
    stay: f64,
    steps: usize,
) -> Result<GreenField> {
    relax_to_green_with(source, absorption, stay, steps, GREEN_TOLERANCE)
}

pub fn relax_to_green_with(
    source: &FieldGrid,
    absorption: &FieldGrid,
    stay: f64,
    steps: usize,
    tolerance: f64,
) -> Result<GreenField> {
    if steps == 0 {
        return Err(Error::Domain("relaxation needs at least one step".into()));
    }
    if !Arc::ptr_eq(source.lattice(), absorption.lattice()) && source.spec() != absorption.spec() {
        return Err(Error::ShapeMismatch("source and absorption lattices differ".into()));
    }
    if !source.is_nonnegative() {
        return Err(Error::Domain("source must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&stay) {
        return Err(Error::Domain(format!("stay probability {stay} outside [0, 1]")));
    }
    let lattice = source.lattice();
    let hop = (1.0 - stay) / (2 * lattice.axes()) as f64;
    let mut field = FieldGrid::zeros(lattice);
    let mut change = f64::INFINITY;
    for it in 1..=steps {
        let next = par::map_cells(field.len(), |cell| {
            let inflow: f64 = lattice
                .links(cell)
                .iter()
                .map(|l| l.weight * field.values[l.target])
                .sum();
            let old = field.values[cell];
            stay * old + hop * inflow + source.values[cell] - absorption.values[cell] * old
        });
        if next.iter().any(|v| !v.is_finite()) {
            // happens when absorption exceeds twice the stay probability
            return Err(Error::NonConvergence {
                what: "Green relaxation",
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        change = next
            .iter()
            .zip(&field.values)
            .filter(|(n, _)| **n != 0.0)
            .map(|(n, o)| ((n - o) / n).abs())
            .fold(0.0, f64::max);
        field.values = next;
        if change < tolerance {
            return Ok(GreenField {
                field,
                converged: true,
                iterations: it,
                last_change: change,
            });
        }
    }
    Ok(GreenField {
        field,
        converged: false,
        iterations: steps,
        last_change: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(dims: &[usize], b: Boundary) -> Arc<Lattice> {
        Lattice::new(LatticeSpec::new(dims, 1.0, b).unwrap())
    }

    #[test]
    fn cell_index_examples() {
        let spec = LatticeSpec::new(&[4, 4], 1.0, Boundary::Absorbing).unwrap();
        assert_eq!(spec.cell_index(&[0, 0]).unwrap(), 0);
        assert_eq!(spec.cell_index(&[1, 2]).unwrap(), 6);
        assert!(spec.cell_index(&[5, 1]).is_err());
        assert!(spec.cell_index(&[-1, 0]).is_err());
        let periodic = LatticeSpec::new(&[4, 4], 1.0, Boundary::Periodic).unwrap();
        assert_eq!(periodic.cell_index(&[5, 1]).unwrap(), 5);
        assert_eq!(periodic.cell_index(&[-3, 1]).unwrap(), 5);
    }

    #[test]
    fn cell_index_is_bijective() {
        let spec = LatticeSpec::new(&[3, 4, 5], 0.5, Boundary::Reflecting).unwrap();
        for i in 0..spec.cell_count() {
            let c: Vec<i64> = spec.coords(i).iter().map(|&x| x as i64).collect();
            assert_eq!(spec.cell_index(&c).unwrap(), i);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(LatticeSpec::new(&[1], 1.0, Boundary::Periodic).is_err());
        assert!(LatticeSpec::new(&[4], 0.0, Boundary::Periodic).is_err());
        assert!(LatticeSpec::new(&[2, 2, 2, 2], 1.0, Boundary::Periodic).is_err());
        assert!(LatticeSpec::new(&[], 1.0, Boundary::Periodic).is_err());
        assert_eq!("Open".parse::<Boundary>().unwrap(), Boundary::Open);
        assert!("sticky".parse::<Boundary>().is_err());
    }

    #[test]
    fn diffuse_examples() {
        let l = lat(&[5], Boundary::Periodic);
        let mut f = FieldGrid::zeros(&l);
        f.values[2] = 12.0;
        let same = diffuse_field(&f, 1.0).unwrap();
        assert_eq!(same.values, f.values);
        let spread = diffuse_field(&f, 0.5).unwrap();
        assert_eq!(&spread.values[1..4], &[3.0, 6.0, 3.0]);

        let u = FieldGrid::from_values(&l, vec![2.5; 5]).unwrap();
        for p in [0.0, 0.3, 1.0] {
            let d = diffuse_field(&u, p).unwrap();
            for v in d.values {
                assert!((v - 2.5).abs() < 1e-15);
            }
        }
        assert!(diffuse_field(&u, 1.5).is_err());
    }

    #[test]
    fn absorbing_diffusion_loses_mass_at_edges() {
        let l = lat(&[3], Boundary::Absorbing);
        let f = FieldGrid::from_values(&l, vec![1.0, 0.0, 0.0]).unwrap();
        let d = diffuse_field(&f, 0.0).unwrap();
        assert!((d.total() - 0.5).abs() < 1e-15);
        let r = lat(&[3], Boundary::Reflecting);
        let f = FieldGrid::from_values(&r, vec![1.0, 0.0, 0.0]).unwrap();
        let d = diffuse_field(&f, 0.0).unwrap();
        assert_eq!(d.values, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn laplacian_examples() {
        let l = lat(&[3], Boundary::Periodic);
        let f = FieldGrid::from_values(&l, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(field_laplacian(&f).values, vec![1.0, -2.0, 1.0]);

        let l = lat(&[4, 3], Boundary::Periodic);
        let c = FieldGrid::from_values(&l, vec![7.0; 12]).unwrap();
        assert!(field_laplacian(&c).values.iter().all(|v| v.abs() < 1e-14));

        let l = lat(&[9], Boundary::Absorbing);
        let q = FieldGrid::from_fn(&l, |c| (c[0] as f64).powi(2));
        let lap = field_laplacian(&q);
        for v in &lap.values[1..8] {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_scales_with_spacing() {
        let spec = LatticeSpec::new(&[8, 8], 0.25, Boundary::Reflecting).unwrap();
        let l = Lattice::new(spec);
        let f = FieldGrid::from_fn(&l, |c| {
            let y = c[1] as f64 * 0.25;
            3.0 * y * y
        });
        let lap = field_laplacian(&f);
        for cell in 0..64 {
            let c = l.spec().coords(cell);
            if (1..7).contains(&c[1]) {
                assert!((lap.values[cell] - 6.0).abs() < 1e-10, "{c:?}");
            }
        }
    }

    #[test]
    fn open_boundary_weights_are_fractions() {
        let l = lat(&[5, 5], Boundary::Open);
        for cell in 0..25 {
            for link in l.links(cell) {
                assert!(link.weight > 0.0 && link.weight <= 1.0);
            }
        }
        assert!(!l.conserves_mass());
    }

    #[test]
    fn green_zero_source() {
        let l = lat(&[9, 9], Boundary::Absorbing);
        let zero = FieldGrid::zeros(&l);
        let g = relax_to_green(&zero, &zero, 0.0, 10).unwrap();
        assert!(g.field.values.iter().all(|&v| v == 0.0));
        assert!(relax_to_green(&zero, &zero, 0.0, 0).is_err());
    }

    #[test]
    fn green_non_convergence_is_flagged() {
        let l = lat(&[33], Boundary::Absorbing);
        let mut s = FieldGrid::zeros(&l);
        s.values[16] = 1.0;
        let q = FieldGrid::zeros(&l);
        let g = relax_to_green(&s, &q, 0.0, 3).unwrap();
        assert!(!g.converged);
        assert_eq!(g.iterations, 3);
    }
}
