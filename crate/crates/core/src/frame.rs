//! FRAME text format and grayscale image export.
//!
//! ```text
//! FRAME v1 <d> <dim1> [<dim2> [<dim3>]] <time>
//! <N whitespace-separated values, row-major>
//! ```
//!
//! A swarm snapshot is a manifest line `SWARM v1 <particle> <scale> <time>`
//! followed by four FRAME blocks, one per sample type in type order.
//! Values are written in the shortest form that parses back to the same
//! `f64`, so a written frame reads back bit-identically.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::{FieldGrid, Lattice};
use crate::swarm::{ParticleId, Swarm};
use crate::oracle::density_error;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub dims: Vec<usize>,
    pub time: f64,
    pub values: Vec<f64>,
}

impl Frame {
    pub fn new(dims: Vec<usize>, time: f64, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Domain(format!("frames have 1 to 3 axes, got {}", dims.len())));
        }
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::ShapeMismatch(format!("{} values for {n} cells", values.len())));
        }
        Ok(Self { dims, time, values })
    }

    pub fn from_field(field: &FieldGrid, time: f64) -> Self {
        Self {
            dims: field.spec().dims.clone(),
            time,
            values: field.values.clone(),
        }
    }

    pub fn from_values(lattice: &Lattice, time: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(lattice.spec().dims.clone(), time, values)
    }

    pub fn write_into(&self, out: &mut String) {
        let _ = write!(out, "FRAME v1 {}", self.dims.len());
        for d in &self.dims {
            let _ = write!(out, " {d}");
        }
        let _ = writeln!(out, " {:?}", self.time);
        let row = *self.dims.last().expect("non-empty dims");
        for chunk in self.values.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        self.write_into(&mut s);
        f.write_str(&s)
    }
}

impl FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut reader = Reader::new(s);
        let frame = reader.frame()?;
        reader.finish()?;
        Ok(frame)
    }
}

/// Token reader that tracks line numbers for error messages.
struct Reader<'a> {
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(s: &'a str) -> Self {
        let tokens = s
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        Self { tokens, pos: 0 }
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or(self.tokens.last())
            .map_or(1, |t| t.0)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line(),
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| self.err(format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(t.1)
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let t = self.next(word)?;
        if t != word {
            self.pos -= 1;
            return Err(self.err(format!("expected `{word}`, found `{t}`")));
        }
        Ok(())
    }

    fn parse<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let t = self.next(what)?;
        t.parse().map_err(|_| {
            self.pos -= 1;
            self.err(format!("invalid {what} `{t}`"))
        })
    }

    fn frame(&mut self) -> Result<Frame> {
        self.expect("FRAME")?;
        self.expect("v1")?;
        let d: usize = self.parse("axis count")?;
        if !(1..=3).contains(&d) {
            return Err(self.err(format!("axis count {d} outside 1..=3")));
        }
        let dims = (0..d)
            .map(|_| self.parse::<usize>("dimension"))
            .collect::<Result<Vec<_>>>()?;
        let time: f64 = self.parse("time")?;
        let n: usize = dims.iter().product();
        let values = (0..n)
            .map(|_| self.parse::<f64>("value"))
            .collect::<Result<Vec<_>>>()?;
        Frame::new(dims, time, values)
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.1)
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("trailing token `{t}`"))),
        }
    }
}

/// All frames in a multi-frame text.
pub fn parse_frames(s: &str) -> Result<Vec<Frame>> {
    let mut reader = Reader::new(s);
    let mut out = Vec::new();
    while reader.peek().is_some() {
        out.push(reader.frame()?);
    }
    Ok(out)
}

/// Swarm counts with their manifest data.
#[derive(Clone, Debug, PartialEq)]
pub struct SwarmSnapshot {
    pub particle: ParticleId,
    pub scale: f64,
    pub time: f64,
    pub counts: [Frame; 4],
}

impl SwarmSnapshot {
    pub fn of(swarm: &Swarm, time: f64) -> Self {
        Self {
            particle: swarm.id,
            scale: swarm.scale,
            time,
            counts: std::array::from_fn(|k| Frame::from_field(&swarm.counts[k], time)),
        }
    }

    /// Rebuilds a swarm on `lattice`; photons and tags are not stored.
    pub fn to_swarm(&self, lattice: &std::sync::Arc<Lattice>) -> Result<Swarm> {
        let mut swarm = Swarm::empty(self.particle, lattice, self.scale);
        for (k, frame) in self.counts.iter().enumerate() {
            if frame.dims != lattice.spec().dims {
                return Err(Error::ShapeMismatch("snapshot and lattice shapes differ".into()));
            }
            swarm.counts[k] = FieldGrid::from_values(lattice, frame.values.clone())?;
        }
        Ok(swarm)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }
}

impl std::fmt::Display for SwarmSnapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = format!("SWARM v1 {} {:?} {:?}\n", self.particle, self.scale, self.time);
        for frame in &self.counts {
            frame.write_into(&mut s);
        }
        f.write_str(&s)
    }
}

impl FromStr for SwarmSnapshot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut r = Reader::new(s);
        r.expect("SWARM")?;
        r.expect("v1")?;
        let particle = r.parse("particle id")?;
        let scale = r.parse("scale")?;
        let time = r.parse("time")?;
        let counts = [r.frame()?, r.frame()?, r.frame()?, r.frame()?];
        r.finish()?;
        if counts.iter().any(|f| f.dims != counts[0].dims) {
            return Err(Error::ShapeMismatch("type frames differ in shape".into()));
        }
        Ok(Self {
            particle,
            scale,
            time,
            counts,
        })
    }
}

/// Binary portable graymap of a frame, scaled to its maximum. 1D frames
/// become one row; 3D frames show the slice through the middle of axis 0.
pub fn pgm_bytes(frame: &Frame) -> Vec<u8> {
    let (width, height, values): (usize, usize, &[f64]) = match frame.dims.as_slice() {
        [n] => (*n, 1, &frame.values),
        [h, w] => (*w, *h, &frame.values),
        [d0, h, w] => {
            let slab = h * w;
            let mid = d0 / 2;
            (*w, *h, &frame.values[mid * slab..(mid + 1) * slab])
        }
        _ => unreachable!("frames have 1 to 3 axes"),
    };
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| {
        if max > 0.0 {
            (v.abs() / max * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(frame: &Frame, path: &Path) -> Result<()> {
    std::fs::write(path, pgm_bytes(frame))?;
    Ok(())
}

/// Difference measures between two frames of equal shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameComparison {
    pub density_error: f64,
    pub max_abs_diff: f64,
}

pub fn compare_frames(a: &Frame, b: &Frame) -> Result<FrameComparison> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dims, b.dims)));
    }
    let max_abs_diff = a
        .values
        .iter()
        .zip(&b.values)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(FrameComparison {
        density_error: density_error(&a.values, &b.values)?,
        max_abs_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, LatticeSpec};
    use crate::swarm::SampleType;

    #[test]
    fn frame_round_trip_is_exact() {
        let f = Frame::new(vec![2, 3], 0.1 + 0.2, vec![1.0 / 3.0, -0.0, 1e-300, 5.5, f64::MAX, 2.0]).unwrap();
        let text = f.to_string();
        assert!(text.starts_with("FRAME v1 2 2 3 0.30000000000000004\n"));
        assert_eq!(text.parse::<Frame>().unwrap(), f);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = "FRAME v1 1 3 0.0\n1 2\nx".parse::<Frame>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = "FRAME v1 1 2 0.0\n1 2 3".parse::<Frame>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!("FRAME v2 1 2 0 1 2".parse::<Frame>().is_err());
        assert!("FRAME v1 4 2 2 2 2 0".parse::<Frame>().is_err());
    }

    #[test]
    fn multi_frame_text() {
        let a = Frame::new(vec![2], 0.0, vec![1.0, 2.0]).unwrap();
        let b = Frame::new(vec![2], 1.0, vec![3.0, 4.0]).unwrap();
        let text = format!("{a}{b}");
        assert_eq!(parse_frames(&text).unwrap(), vec![a, b]);
    }

    #[test]
    fn snapshot_round_trip() {
        let l = Lattice::new(LatticeSpec::new(&[3, 2], 1.0, Boundary::Periodic).unwrap());
        let mut s = Swarm::empty(7, &l, 2.5);
        s.add(SampleType::MinusImag, 4, 3.0);
        s.add(SampleType::PlusReal, 0, 1.0);
        let snap = SwarmSnapshot::of(&s, 1.5);
        let back: SwarmSnapshot = snap.to_string().parse().unwrap();
        assert_eq!(back, snap);
        let rebuilt = back.to_swarm(&l).unwrap();
        assert_eq!(rebuilt.amplitudes(), s.amplitudes());
        assert_eq!(rebuilt.id, 7);
    }

    #[test]
    fn pgm_shapes() {
        let f = Frame::new(vec![4], 0.0, vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let bytes = pgm_bytes(&f);
        assert!(bytes.starts_with(b"P5\n4 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 64, 128, 255]);
        let f3 = Frame::new(vec![3, 2, 2], 0.0, (0..12).map(|x| x as f64).collect()).unwrap();
        let bytes = pgm_bytes(&f3);
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 4);
    }

    #[test]
    fn comparison() {
        let a = Frame::new(vec![2], 0.0, vec![1.0, 0.0]).unwrap();
        let b = Frame::new(vec![2], 0.0, vec![0.0, 1.0]).unwrap();
        let c = compare_frames(&a, &b).unwrap();
        assert!((c.density_error - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.max_abs_diff, 1.0);
        let d = Frame::new(vec![1, 2], 0.0, vec![0.0, 1.0]).unwrap();
        assert!(compare_frames(&a, &d).is_err());
    }
}
