//! Diverging index sequences t_n ∈ R^l with ‖t_n‖_∞ → ∞.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Shape of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceKind {
    /// t_n = (start + n·step)·u with u rescaled to ‖u‖_∞ = 1.
    Ray { direction: Vec<f64> },
    /// Ray along (1, …, 1).
    Diagonal,
    /// l = 1: alternating signs (−1)^n r_n. l ≥ 2: points on the square
    /// {‖x‖_∞ = r_n} of the first two axes, turning by `angle_step` radians.
    Spiral { angle_step: f64 },
    /// Explicit points.
    Custom { points: Vec<Vec<f64>> },
}

/// A sequence with N points whose sup-norm radii are start + n·step.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    pub l: usize,
    pub count: usize,
    pub start: f64,
    pub step: f64,
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

impl SequenceSpec {
    pub fn ray(direction: Vec<f64>, start: f64, step: f64, count: usize) -> Result<Self> {
        let l = direction.len();
        SequenceSpec {
            kind: SequenceKind::Ray { direction },
            l,
            count,
            start,
            step,
        }
        .validated()
    }

    /// Ray along the first axis.
    pub fn axis(l: usize, start: f64, step: f64, count: usize) -> Result<Self> {
        let mut u = vec![0.0; l];
        if l > 0 {
            u[0] = 1.0;
        }
        SequenceSpec::ray(u, start, step, count)
    }

    pub fn diagonal(l: usize, start: f64, step: f64, count: usize) -> Result<Self> {
        SequenceSpec {
            kind: SequenceKind::Diagonal,
            l,
            count,
            start,
            step,
        }
        .validated()
    }

    pub fn spiral(l: usize, start: f64, step: f64, count: usize, angle_step: f64) -> Result<Self> {
        SequenceSpec {
            kind: SequenceKind::Spiral { angle_step },
            l,
            count,
            start,
            step,
        }
        .validated()
    }

    pub fn custom(points: Vec<Vec<f64>>) -> Result<Self> {
        let l = points.first().map_or(0, |p| p.len());
        let count = points.len();
        SequenceSpec {
            kind: SequenceKind::Custom { points },
            l,
            count,
            start: 0.0,
            step: 0.0,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        if self.l == 0 {
            return Err(Error::validation("sequence.l", "index dimension must be positive"));
        }
        if self.count == 0 {
            return Err(Error::validation("sequence.count", "at least one point is required"));
        }
        match &self.kind {
            SequenceKind::Custom { points } => {
                if points.iter().any(|p| p.len() != self.l || p.iter().any(|v| !v.is_finite())) {
                    return Err(Error::validation("sequence.points", "points must be finite and share one dimension"));
                }
            }
            SequenceKind::Ray { direction } => {
                if sup_norm(direction) == 0.0 || direction.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation("sequence.direction", "direction must be finite and nonzero"));
                }
            }
            SequenceKind::Spiral { angle_step } if !angle_step.is_finite() => {
                return Err(Error::validation("sequence.angle_step", "must be finite"));
            }
            _ => {}
        }
        if !matches!(self.kind, SequenceKind::Custom { .. })
            && (!(self.step > 0.0) || !(self.start >= 0.0) || !self.start.is_finite() || !self.step.is_finite())
        {
            return Err(Error::validation("sequence.step", "need start >= 0 and step > 0"));
        }
        Ok(self)
    }

    /// The points t_0, …, t_{N−1}.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let radius = |n: usize| self.start + n as f64 * self.step;
        match &self.kind {
            SequenceKind::Custom { points } => points.clone(),
            SequenceKind::Ray { direction } => {
                let s = sup_norm(direction);
                (0..self.count)
                    .map(|n| direction.iter().map(|u| u / s * radius(n)).collect())
                    .collect()
            }
            SequenceKind::Diagonal => (0..self.count).map(|n| vec![radius(n); self.l]).collect(),
            SequenceKind::Spiral { angle_step } => (0..self.count)
                .map(|n| {
                    let r = radius(n);
                    let mut p = vec![0.0; self.l];
                    if self.l == 1 {
                        p[0] = if n % 2 == 0 { r } else { -r };
                    } else {
                        let phi = n as f64 * angle_step;
                        let (s, c) = phi.sin_cos();
                        let m = c.abs().max(s.abs());
                        p[0] = r * c / m;
                        p[1] = r * s / m;
                    }
                    p
                })
                .collect(),
        }
    }

    /// Index beyond which ‖t_n‖_∞ is strictly increasing, if any.
    pub fn monotone_from(&self) -> Option<usize> {
        let radii: Vec<f64> = self.points().iter().map(|p| sup_norm(p)).collect();
        let mut from = radii.len().saturating_sub(1);
        while from > 0 && radii[from - 1] < radii[from] {
            from -= 1;
        }
        (radii.len() >= 2 && from + 1 < radii.len()).then_some(from)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            SequenceKind::Ray { direction } => format!("ray {direction:?}"),
            SequenceKind::Diagonal => "diagonal".into(),
            SequenceKind::Spiral { angle_step } => format!("spiral (angle step {angle_step})"),
            SequenceKind::Custom { .. } => "custom".into(),
        }
    }

    /// Axis rays in both directions, the diagonal and a spiral, all with the
    /// same radii.
    pub fn standard_shapes(l: usize, start: f64, step: f64, count: usize) -> Result<Vec<SequenceSpec>> {
        let mut out = Vec::new();
        for i in 0..l {
            for sign in [1.0, -1.0] {
                let mut u = vec![0.0; l];
                u[i] = sign;
                out.push(SequenceSpec::ray(u, start, step, count)?);
            }
        }
        out.push(SequenceSpec::diagonal(l, start, step, count)?);
        out.push(SequenceSpec::spiral(l, start, step, count, PI / 7.0)?);
        Ok(out)
    }
}

/// ‖x‖_∞.
pub fn sup(x: &[f64]) -> f64 {
    sup_norm(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_diverge_in_sup_norm() {
        for l in 1..=3 {
            for s in SequenceSpec::standard_shapes(l, 0.5, 1.0, 12).unwrap() {
                let pts = s.points();
                assert_eq!(pts.len(), 12);
                for (n, p) in pts.iter().enumerate() {
                    assert!((sup(p) - (0.5 + n as f64)).abs() < 1e-12, "{s:?}");
                }
                assert_eq!(s.monotone_from(), Some(0));
            }
        }
    }

    #[test]
    fn l1_spiral_alternates() {
        let s = SequenceSpec::spiral(1, 1.0, 1.0, 4, 0.3).unwrap();
        assert_eq!(s.points(), vec![vec![1.0], vec![-2.0], vec![3.0], vec![-4.0]]);
    }

    #[test]
    fn validation() {
        assert!(SequenceSpec::axis(1, 0.0, 0.0, 3).is_err());
        assert!(SequenceSpec::axis(1, 0.0, 1.0, 0).is_err());
        assert!(SequenceSpec::ray(vec![0.0, 0.0], 0.0, 1.0, 3).is_err());
        assert!(SequenceSpec::custom(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let c = SequenceSpec::custom(vec![vec![3.0], vec![1.0], vec![2.0], vec![5.0]]).unwrap();
        assert_eq!(c.monotone_from(), Some(1));
    }
}
