//! Axis-aligned box domains, interior sampling, line restrictions and
//! normal-cone queries.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default truncation bound for sampling on boxes with infinite faces.
pub const DEFAULT_SAMPLING_BOUND: f64 = 10.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DomainError {
    #[error("dimension mismatch: box has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate box: lower[{index}] = {lower} must be < upper[{index}] = {upper}")]
    Degenerate {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("zero direction vector")]
    ZeroDirection,
    #[error("point {0:?} lies outside the box")]
    PointOutside(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Open,
    Closed,
}

/// A non-degenerate axis-aligned box, all faces open by default.
/// Faces at +-infinity are always open.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_face: Vec<Face>,
    upper_face: Vec<Face>,
}

/// The restriction of a box to a line `t -> base + t * direction`,
/// carrying the maximal open parameter interval around 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRestriction {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    /// Open interval endpoints; may be -inf / +inf.
    pub t_lower: f64,
    pub t_upper: f64,
}

impl LineRestriction {
    pub fn point_at(&self, t: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + t * d)
            .collect()
    }
}

impl BoxDomain {
    /// All-open box; entries of `lower`/`upper` may be infinite.
    pub fn open(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DomainError> {
        let n = lower.len();
        Self::with_faces(lower, upper, vec![Face::Open; n], vec![Face::Open; n])
    }

    pub fn with_faces(
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_face: Vec<Face>,
        upper_face: Vec<Face>,
    ) -> Result<Self, DomainError> {
        if lower.len() != upper.len() {
            return Err(DomainError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for i in 0..lower.len() {
            // NaN-aware: a NaN bound is degenerate too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(lower[i] < upper[i]) {
                return Err(DomainError::Degenerate {
                    index: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
        }
        // An infinite face cannot be closed.
        let lower_face = lower
            .iter()
            .zip(lower_face)
            .map(|(l, f)| if l.is_infinite() { Face::Open } else { f })
            .collect();
        let upper_face = upper
            .iter()
            .zip(upper_face)
            .map(|(u, f)| if u.is_infinite() { Face::Open } else { f })
            .collect();
        Ok(BoxDomain {
            lower,
            upper,
            lower_face,
            upper_face,
        })
    }

    /// 1-D open interval.
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::open(vec![lo], vec![hi]).expect("non-degenerate interval")
    }

    /// The n-fold product (0, inf)^n.
    pub fn positive_orthant(n: usize) -> Self {
        Self::open(vec![0.0; n], vec![f64::INFINITY; n]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower_face(&self) -> &[Face] {
        &self.lower_face
    }

    pub fn upper_face(&self) -> &[Face] {
        &self.upper_face
    }

    /// Cartesian product of two boxes.
    pub fn product(&self, other: &BoxDomain) -> BoxDomain {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        let mut lf = self.lower_face.clone();
        lf.extend_from_slice(&other.lower_face);
        let mut uf = self.upper_face.clone();
        uf.extend_from_slice(&other.upper_face);
        BoxDomain {
            lower,
            upper,
            lower_face: lf,
            upper_face: uf,
        }
    }

    pub fn contains(&self, point: &[f64]) -> Result<bool, DomainError> {
        if point.len() != self.dim() {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        for (i, &p) in point.iter().enumerate() {
            let lo_ok = match self.lower_face[i] {
                Face::Open => p > self.lower[i],
                Face::Closed => p >= self.lower[i],
            };
            let hi_ok = match self.upper_face[i] {
                Face::Open => p < self.upper[i],
                Face::Closed => p <= self.upper[i],
            };
            if !lo_ok || !hi_ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// True if `point` is strictly inside every face.
    pub fn strictly_contains(&self, point: &[f64]) -> Result<bool, DomainError> {
        if point.len() != self.dim() {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok((0..self.dim()).all(|i| point[i] > self.lower[i] && point[i] < self.upper[i]))
    }

    /// Truncated bounds used for sampling: infinite faces are clipped to
    /// +-bound.
    pub fn truncated_bounds(&self, bound: f64) -> (Vec<f64>, Vec<f64>) {
        let lo: Vec<f64> = self.lower.iter().map(|l| l.max(-bound)).collect();
        let hi: Vec<f64> = self
            .upper
            .iter()
            .zip(&lo)
            .map(|(u, l)| u.min(bound).max(l + 1e-12))
            .collect();
        (lo, hi)
    }

    /// `count` strictly interior points, uniform over the truncated box,
    /// deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64, bound: f64) -> Vec<Vec<f64>> {
        let (lo, hi) = self.truncated_bounds(bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Uniform::new(0.0f64, 1.0f64);
        (0..count)
            .map(|_| {
                (0..self.dim())
                    .map(|i| {
                        // Shrink away from the faces so points stay strictly interior.
                        let u = unit.sample(&mut rng);
                        let w = hi[i] - lo[i];
                        lo[i] + w * (0.0005 + 0.999 * u)
                    })
                    .collect()
            })
            .collect()
    }

    /// Maximal open interval of `t` keeping `base + t * direction` strictly
    /// interior.
    pub fn restrict(
        &self,
        base: &[f64],
        direction: &[f64],
    ) -> Result<LineRestriction, DomainError> {
        if base.len() != self.dim() || direction.len() != self.dim() {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim(),
                got: base.len().max(direction.len()),
            });
        }
        if direction.iter().all(|d| *d == 0.0) {
            return Err(DomainError::ZeroDirection);
        }
        if !self.contains(base)? {
            return Err(DomainError::PointOutside(base.to_vec()));
        }
        let mut t_lo = f64::NEG_INFINITY;
        let mut t_hi = f64::INFINITY;
        for i in 0..self.dim() {
            let d = direction[i];
            if d == 0.0 {
                continue;
            }
            // lower[i] < base[i] + t d < upper[i]
            let a = (self.lower[i] - base[i]) / d;
            let b = (self.upper[i] - base[i]) / d;
            let (lo, hi) = if d > 0.0 { (a, b) } else { (b, a) };
            t_lo = t_lo.max(lo);
            t_hi = t_hi.min(hi);
        }
        Ok(LineRestriction {
            base: base.to_vec(),
            direction: direction.to_vec(),
            t_lower: t_lo,
            t_upper: t_hi,
        })
    }

    /// Normal cone membership at `point`: zero at interior points; on
    /// closed faces, a nonnegative combination of outward face normals.
    pub fn in_normal_cone(&self, point: &[f64], v: &[f64], tol: f64) -> Result<bool, DomainError> {
        if !self.contains(point)? {
            return Err(DomainError::PointOutside(point.to_vec()));
        }
        if v.len() != self.dim() {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        for i in 0..self.dim() {
            let on_lower = self.lower_face[i] == Face::Closed && point[i] <= self.lower[i] + tol;
            let on_upper = self.upper_face[i] == Face::Closed && point[i] >= self.upper[i] - tol;
            let ok = match (on_lower, on_upper) {
                (false, false) => v[i].abs() <= tol,
                (true, false) => v[i] <= tol,  // outward normal is -e_i
                (false, true) => v[i] >= -tol, // outward normal is +e_i
                (true, true) => true,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Componentwise projection of `v` onto the normal cone at `point`.
    pub fn project_normal_cone(&self, point: &[f64], v: &[f64], tol: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let on_lower =
                    self.lower_face[i] == Face::Closed && point[i] <= self.lower[i] + tol;
                let on_upper =
                    self.upper_face[i] == Face::Closed && point[i] >= self.upper[i] - tol;
                match (on_lower, on_upper) {
                    (false, false) => 0.0,
                    (true, false) => v[i].min(0.0),
                    (false, true) => v[i].max(0.0),
                    (true, true) => v[i],
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_open_and_closed_faces() {
        let b = BoxDomain::positive_orthant(2);
        assert!(b.contains(&[1.0, 1.0]).unwrap());
        assert!(!b.contains(&[0.0, 1.0]).unwrap());

        let open = BoxDomain::interval(0.0, 1.0);
        assert!(!open.contains(&[0.0]).unwrap());

        let closed =
            BoxDomain::with_faces(vec![0.0], vec![1.0], vec![Face::Closed], vec![Face::Closed])
                .unwrap();
        assert!(closed.contains(&[0.0]).unwrap());
    }

    #[test]
    fn contains_checks_dimension() {
        let b = BoxDomain::positive_orthant(2);
        assert!(matches!(
            b.contains(&[1.0]),
            Err(DomainError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_degenerate_box() {
        assert!(matches!(
            BoxDomain::open(vec![1.0], vec![1.0]),
            Err(DomainError::Degenerate { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_interior() {
        let b = BoxDomain::interval(0.0, 1.0);
        let a = b.sample(5, 42, 10.0);
        let c = b.sample(5, 42, 10.0);
        assert_eq!(a, c);
        for p in &a {
            assert!(b.contains(p).unwrap());
        }
    }

    #[test]
    fn sampling_truncates_infinite_faces() {
        let b = BoxDomain::interval(0.0, f64::INFINITY);
        for p in b.sample(3, 7, 10.0) {
            assert!(p[0] > 0.0 && p[0] < 10.0);
        }
    }

    #[test]
    fn restrict_solves_interval() {
        let b = BoxDomain::open(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let r = b.restrict(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((r.t_lower - -1.0).abs() < 1e-12);
        assert!((r.t_upper - 1.0).abs() < 1e-12);

        let b = BoxDomain::interval(0.0, f64::INFINITY);
        let r = b.restrict(&[1.0], &[1.0]).unwrap();
        assert!((r.t_lower - -1.0).abs() < 1e-12);
        assert_eq!(r.t_upper, f64::INFINITY);
    }

    #[test]
    fn restrict_rejects_zero_direction() {
        let b = BoxDomain::open(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        assert!(matches!(
            b.restrict(&[1.0, 1.0], &[0.0, 0.0]),
            Err(DomainError::ZeroDirection)
        ));
    }

    #[test]
    fn restrict_then_walk_stays_inside() {
        let b = BoxDomain::open(vec![0.0, -1.0], vec![3.0, 5.0]).unwrap();
        let r = b.restrict(&[1.0, 0.0], &[0.5, 1.5]).unwrap();
        for k in 1..50 {
            let t = r.t_lower + (r.t_upper - r.t_lower) * (k as f64) / 50.0;
            assert!(b.contains(&r.point_at(t)).unwrap(), "t = {t}");
        }
    }

    #[test]
    fn normal_cone_interior_is_zero() {
        let b = BoxDomain::positive_orthant(2);
        assert!(b.in_normal_cone(&[1.0, 1.0], &[0.0, 0.0], 1e-9).unwrap());
        assert!(!b.in_normal_cone(&[1.0, 1.0], &[0.1, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn normal_cone_on_closed_face() {
        let b = BoxDomain::with_faces(vec![0.0], vec![1.0], vec![Face::Closed], vec![Face::Closed])
            .unwrap();
        assert!(b.in_normal_cone(&[1.0], &[2.0], 1e-9).unwrap());
        assert!(!b.in_normal_cone(&[1.0], &[-2.0], 1e-9).unwrap());
        assert!(b.in_normal_cone(&[0.0], &[-2.0], 1e-9).unwrap());
    }

    #[test]
    fn normal_cone_rejects_outside_point() {
        let b = BoxDomain::interval(0.0, 1.0);
        assert!(matches!(
            b.in_normal_cone(&[2.0], &[0.0], 1e-9),
            Err(DomainError::PointOutside(_))
        ));
    }
}
