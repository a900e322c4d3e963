//! Center/aspect/height bounding boxes as emitted by the detectors.

use serde::{Deserialize, Serialize};

/// Box given by its center `(u, v)`, aspect ratio `r = width / height` and
/// height `h`, all in pixels except `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeom {
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub h: f64,
}

impl BoxGeom {
    pub fn new(u: f64, v: f64, r: f64, h: f64) -> Self {
        Self { u, v, r, h }
    }

    pub fn width(&self) -> f64 {
        self.r * self.h
    }

    pub fn area(&self) -> f64 {
        self.width() * self.h
    }

    /// `(left, top, right, bottom)` in image coordinates (y grows downward).
    pub fn ltrb(&self) -> (f64, f64, f64, f64) {
        let hw = 0.5 * self.width();
        let hh = 0.5 * self.h;
        (self.u - hw, self.v - hh, self.u + hw, self.v + hh)
    }

    pub fn intersection_area(&self, other: &BoxGeom) -> f64 {
        let (l1, t1, r1, b1) = self.ltrb();
        let (l2, t2, r2, b2) = other.ltrb();
        let w = (r1.min(r2) - l1.max(l2)).max(0.0);
        let h = (b1.min(b2) - t1.max(t2)).max(0.0);
        w * h
    }

    pub fn iou(&self, other: &BoxGeom) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Fraction of `self` that lies inside `container`.
    pub fn containment_in(&self, container: &BoxGeom) -> f64 {
        let a = self.area();
        if a <= 0.0 {
            0.0
        } else {
            self.intersection_area(container) / a
        }
    }

    /// Bottom-center point `(u, v + h/2)`.
    pub fn bottom_center(&self) -> [f64; 2] {
        [self.u, self.v + 0.5 * self.h]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_overlap_is_one_third() {
        let a = BoxGeom::new(10.0, 10.0, 1.0, 4.0);
        let b = BoxGeom::new(12.0, 10.0, 1.0, 4.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes() {
        let a = BoxGeom::new(0.0, 0.0, 1.0, 2.0);
        let b = BoxGeom::new(10.0, 0.0, 1.0, 2.0);
        assert_eq!(a.iou(&b), 0.0);
        assert_eq!(a.containment_in(&b), 0.0);
    }

    #[test]
    fn identical_boxes() {
        let a = BoxGeom::new(3.0, 4.0, 0.4, 50.0);
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        assert!((a.containment_in(&a) - 1.0).abs() < 1e-12);
    }
}
