//! Sampled field values on a finite set of index points, with provenance.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::levybasis::{JumpTruncation, SmallJumps};

const MAGIC: &[u8; 8] = b"MIXFREAL";
const VERSION: u32 = 1;

/// Discretisation parameters of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub replicates: usize,
    /// Cell edge length on every axis.
    pub h: f64,
    pub seed: u64,
    /// Spatial window of the driving basis; derived from the kernel when `None`.
    pub window: Option<(Vec<f64>, Vec<f64>)>,
    /// Relative kernel energy allowed outside the window.
    pub energy_tail: f64,
    pub truncation: JumpTruncation,
}

impl SimulationSpec {
    pub fn new(replicates: usize, h: f64, seed: u64) -> Self {
        SimulationSpec {
            replicates,
            h,
            seed,
            window: None,
            energy_tail: 1e-4,
            truncation: JumpTruncation::default(),
        }
    }

    pub fn with_window(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.window = Some((lower, upper));
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::validation("simulation.replicates", "must be at least 1"));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::validation("simulation.h", "must be positive"));
        }
        if !(self.energy_tail > 0.0 && self.energy_tail < 1.0) {
            return Err(Error::validation("simulation.energy_tail", "must lie in (0, 1)"));
        }
        if !(self.truncation.eps > 0.0) {
            return Err(Error::validation("simulation.jump_eps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationMeta {
    pub model: String,
    pub seed: u64,
    pub h: f64,
    pub window: Option<(Vec<f64>, Vec<f64>)>,
    pub energy_tail: f64,
    pub jump_eps: f64,
    pub small_jumps: SmallJumps,
}

impl RealizationMeta {
    pub fn from_spec(model: impl Into<String>, spec: &SimulationSpec, window: Option<(Vec<f64>, Vec<f64>)>) -> Self {
        RealizationMeta {
            model: model.into(),
            seed: spec.seed,
            h: spec.h,
            window,
            energy_tail: spec.energy_tail,
            jump_eps: spec.truncation.eps,
            small_jumps: spec.truncation.small,
        }
    }
}

/// Values laid out as `[replicate][point][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    t_points: Vec<Vec<f64>>,
    q: usize,
    replicates: usize,
    values: Vec<f64>,
    pub meta: RealizationMeta,
}

impl FieldRealization {
    pub fn new(
        t_points: Vec<Vec<f64>>,
        q: usize,
        replicates: usize,
        values: Vec<f64>,
        meta: RealizationMeta,
    ) -> Result<Self> {
        if values.len() != replicates * t_points.len() * q {
            return Err(Error::DimensionMismatch {
                context: "realization values",
                expected: replicates * t_points.len() * q,
                found: values.len(),
            });
        }
        if let Some(l) = t_points.first().map(|p| p.len()) {
            if t_points.iter().any(|p| p.len() != l) {
                return Err(Error::InvalidModel("t-points have mixed dimensions".into()));
            }
        }
        Ok(FieldRealization {
            t_points,
            q,
            replicates,
            values,
            meta,
        })
    }

    pub fn t_points(&self) -> &[Vec<f64>] {
        &self.t_points
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn l(&self) -> usize {
        self.t_points.first().map(|p| p.len()).unwrap_or(0)
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn points(&self) -> usize {
        self.t_points.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, replicate: usize, point: usize) -> &[f64] {
        let start = (replicate * self.points() + point) * self.q;
        &self.values[start..start + self.q]
    }

    /// Index of the grid point equal to `t` within 1e−9 per coordinate.
    pub fn point_index(&self, t: &[f64]) -> Option<usize> {
        self.t_points
            .iter()
            .position(|p| p.len() == t.len() && p.iter().zip(t).all(|(a, b)| (a - b).abs() <= 1e-9))
    }

    pub fn require_point(&self, t: &[f64]) -> Result<usize> {
        self.point_index(t).ok_or_else(|| Error::GridCoverage(t.to_vec()))
    }

    /// Pointwise sum of two realizations on the same grid.
    pub fn add(&self, other: &FieldRealization) -> Result<FieldRealization> {
        if self.t_points != other.t_points || self.q != other.q || self.replicates != other.replicates {
            return Err(Error::InvalidModel("realizations differ in grid or shape".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(FieldRealization {
            values,
            ..self.clone()
        })
    }

    /// Realization of M·X.
    pub fn map(&self, m: &DMatrix<f64>) -> Result<FieldRealization> {
        if m.ncols() != self.q {
            return Err(Error::DimensionMismatch {
                context: "realization map",
                expected: self.q,
                found: m.ncols(),
            });
        }
        let q2 = m.nrows();
        let mut values = Vec::with_capacity(self.replicates * self.points() * q2);
        for chunk in self.values.chunks(self.q) {
            for i in 0..q2 {
                values.push((0..self.q).map(|j| m[(i, j)] * chunk[j]).sum());
            }
        }
        Ok(FieldRealization {
            q: q2,
            values,
            ..self.clone()
        })
    }

    /// CSV with columns `replicate, t0.., x0..`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["replicate".to_string()];
        header.extend((0..self.l()).map(|i| format!("t{i}")));
        header.extend((0..self.q).map(|i| format!("x{i}")));
        wr.write_record(&header).map_err(csv_err)?;
        for r in 0..self.replicates {
            for (p, t) in self.t_points.iter().enumerate() {
                let mut row = vec![r.to_string()];
                row.extend(t.iter().map(|v| fmt_f64(*v)));
                row.extend(self.value(r, p).iter().map(|v| fmt_f64(*v)));
                wr.write_record(&row).map_err(csv_err)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Little-endian binary cache; see [`FieldRealization::read_binary`].
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let l = self.l();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(l as u32).to_le_bytes())?;
        w.write_all(&(self.q as u32).to_le_bytes())?;
        w.write_all(&(self.replicates as u64).to_le_bytes())?;
        w.write_all(&(self.points() as u64).to_le_bytes())?;
        w.write_all(&self.meta.seed.to_le_bytes())?;
        for v in [self.meta.h, self.meta.energy_tail, self.meta.jump_eps] {
            w.write_all(&v.to_le_bytes())?;
        }
        let small = match self.meta.small_jumps {
            SmallJumps::Drop => 0u8,
            SmallJumps::Gaussian => 1u8,
        };
        w.write_all(&[small, self.meta.window.is_some() as u8])?;
        if let Some((lo, hi)) = &self.meta.window {
            w.write_all(&(lo.len() as u32).to_le_bytes())?;
            for v in lo.iter().chain(hi) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let name = self.meta.model.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        for p in &self.t_points {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<FieldRealization> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Io("not a realization cache file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Io(format!("unsupported cache version {version}")));
        }
        let l = read_u32(&mut r)? as usize;
        let q = read_u32(&mut r)? as usize;
        let replicates = read_u64(&mut r)? as usize;
        let points = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let h = read_f64(&mut r)?;
        let energy_tail = read_f64(&mut r)?;
        let jump_eps = read_f64(&mut r)?;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags)?;
        let window = if flags[1] == 1 {
            let n = read_u32(&mut r)? as usize;
            let lo = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            let hi = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            Some((lo, hi))
        } else {
            None
        };
        let n = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name)?;
        let model = String::from_utf8(name).map_err(|e| Error::Io(e.to_string()))?;
        let t_points = (0..points)
            .map(|_| (0..l).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let values = (0..replicates * points * q)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        FieldRealization::new(
            t_points,
            q,
            replicates,
            values,
            RealizationMeta {
                model,
                seed,
                h,
                window,
                energy_tail,
                jump_eps,
                small_jumps: if flags[0] == 1 { SmallJumps::Gaussian } else { SmallJumps::Drop },
            },
        )
    }
}

/// Fixed CSV number format: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FieldRealization {
        let spec = SimulationSpec::new(2, 0.1, 42).with_window(vec![-1.0], vec![1.0]);
        FieldRealization::new(
            vec![vec![0.0], vec![0.5]],
            2,
            2,
            (0..8).map(|i| i as f64 * 0.1 + 1.0 / 3.0).collect(),
            RealizationMeta::from_spec("test", &spec, spec.window.clone()),
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let r = sample();
        let mut buf = Vec::new();
        r.write_binary(&mut buf).unwrap();
        let back = FieldRealization::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, r);
        assert!(FieldRealization::read_binary(&b"garbage!"[..]).is_err());
    }

    #[test]
    fn csv_round_trips_digits() {
        let r = sample();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), vec!["replicate", "t0", "x0", "x1"]);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 4);
        let parsed: f64 = rows[3][3].parse().unwrap();
        assert_eq!(parsed, r.value(1, 1)[1]);
    }

    #[test]
    fn point_lookup_and_map() {
        let r = sample();
        assert_eq!(r.point_index(&[0.5]), Some(1));
        assert!(matches!(r.require_point(&[0.25]), Err(Error::GridCoverage(_))));
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let s = r.map(&m).unwrap();
        assert_eq!(s.q(), 1);
        assert!((s.value(0, 1)[0] - (r.value(0, 1)[0] + r.value(0, 1)[1])).abs() < 1e-15);
    }
}
