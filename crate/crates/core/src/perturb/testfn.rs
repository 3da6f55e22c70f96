use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `height · max(0, 1 − |x − center|/half_width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Tent {
    center: f64,
    half_width: f64,
    height: f64,
}

impl TryFrom<[f64; 3]> for Tent {
    type Error = Error;

    fn try_from([center, half_width, height]: [f64; 3]) -> Result<Self> {
        Tent::new(center, half_width, height)
    }
}

impl From<Tent> for [f64; 3] {
    fn from(t: Tent) -> Self {
        [t.center, t.half_width, t.height]
    }
}

impl Tent {
    pub fn new(center: f64, half_width: f64, height: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::invalid("phi.center", "must be finite"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("phi.half_width", format!("must be positive (got {half_width})")));
        }
        if !(height >= 0.0 && height.is_finite()) {
            return Err(Error::invalid("phi.height", format!("must be non-negative (got {height})")));
        }
        Ok(Tent {
            center,
            half_width,
            height,
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.height * (1.0 - (x - self.center).abs() / self.half_width).max(0.0)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn height(&self) -> f64 {
        self.height
    }
}

/// Finite sum of tents: a non-negative, continuous, compactly supported function.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestFunction {
    pieces: Vec<Tent>,
}

impl TestFunction {
    pub fn new(pieces: Vec<Tent>) -> Self {
        TestFunction { pieces }
    }

    /// `φ ≡ 0`.
    pub fn zero() -> Self {
        TestFunction::default()
    }

    pub fn tent(center: f64, half_width: f64, height: f64) -> Result<Self> {
        Ok(TestFunction::new(vec![Tent::new(center, half_width, height)?]))
    }

    pub fn pieces(&self) -> &[Tent] {
        &self.pieces
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.pieces.iter().map(|t| t.eval(x)).sum()
    }

    fn active(&self) -> impl Iterator<Item = &Tent> {
        self.pieces.iter().filter(|t| t.height > 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.active().next().is_none()
    }

    /// Closed hull of the support, `None` for `φ ≡ 0`.
    pub fn support(&self) -> Option<(f64, f64)> {
        self.active().fold(None, |acc, t| {
            let (lo, hi) = (t.center - t.half_width, t.center + t.half_width);
            Some(match acc {
                None => (lo, hi),
                Some((a, b)) => (f64::min(a, lo), f64::max(b, hi)),
            })
        })
    }

    /// Points where `φ` is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self
            .active()
            .flat_map(|t| [t.center - t.half_width, t.center, t.center + t.half_width])
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// Kinks plus a geometric ladder of points inside each tent edge. When a
    /// tent is tall, `1 − e^{−φ}` saturates within `half_width/height` of its
    /// edges and quadrature must resolve that layer.
    pub(crate) fn quadrature_breaks(&self) -> Vec<f64> {
        let mut pts = self.kinks();
        for t in self.active() {
            let floor = t.half_width / (100.0 * t.height.max(1.0));
            let mut d = 0.25 * t.half_width;
            while d > floor {
                pts.extend([t.center - t.half_width + d, t.center + t.half_width - d]);
                d *= 0.25;
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `sup φ`, attained at a kink since `φ` is piecewise linear.
    pub fn sup(&self) -> f64 {
        self.kinks().into_iter().map(|x| self.eval(x)).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tent_shape() {
        let t = Tent::new(1.0, 2.0, 3.0).unwrap();
        assert_eq!(t.eval(1.0), 3.0);
        assert_eq!(t.eval(2.0), 1.5);
        assert_eq!(t.eval(3.0), 0.0);
        assert_eq!(t.eval(-5.0), 0.0);
    }

    #[test]
    fn support_and_sup_of_sum() {
        let f = TestFunction::new(vec![Tent::new(0.0, 1.0, 1.0).unwrap(), Tent::new(0.5, 1.0, 2.0).unwrap()]);
        assert_eq!(f.support(), Some((-1.0, 1.5)));
        assert!((f.sup() - 2.5).abs() < 1e-15);
        assert!(TestFunction::zero().support().is_none());
        assert!(TestFunction::zero().is_zero());
    }

    #[test]
    fn json_is_list_of_triples() {
        let f: TestFunction = serde_json::from_str("[[0,1,1],[1,2,0.5]]").unwrap();
        assert_eq!(f.pieces().len(), 2);
        assert_eq!(serde_json::to_string(&f).unwrap(), "[[0.0,1.0,1.0],[1.0,2.0,0.5]]");
        assert!(serde_json::from_str::<TestFunction>("[[0,-1,1]]").is_err());
    }
}
