//! Rotated rectangle IoU by convex polygon clipping.

use super::MetricsError;

/// BEV box. `length` runs along the heading `yaw_deg` (from +x toward +y),
/// `width` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedBox {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub length: f64,
    pub yaw_deg: f64,
}

impl RotatedBox {
    pub fn new(cx: f64, cy: f64, width: f64, length: f64, yaw_deg: f64) -> Self {
        Self { cx, cy, width, length, yaw_deg }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let finite = [self.cx, self.cy, self.width, self.length, self.yaw_deg].iter().all(|v| v.is_finite());
        if !finite || !(self.width > 0.0 && self.length > 0.0) {
            return Err(MetricsError::DegenerateBox(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.width * self.length
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = sin_cos_deg(self.yaw_deg);
        let (hl, hw) = (0.5 * self.length, 0.5 * self.width);
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[a, b]| [self.cx + a * c - b * s, self.cy + a * s + b * c])
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area of a simple polygon (positive for counter-clockwise).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

/// Sutherland–Hodgman: clips `subject` against the convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (dc, dp) = (cross(a, b, cur), cross(a, b, prev));
            if dc >= 0.0 {
                if dp < 0.0 {
                    output.push(intersect(prev, cur, dp, dc));
                }
                output.push(cur);
            } else if dp >= 0.0 {
                output.push(intersect(prev, cur, dp, dc));
            }
        }
    }
    output
}

/// Point on segment `p → q` where the signed distance crosses zero.
fn intersect(p: [f64; 2], q: [f64; 2], dp: f64, dq: f64) -> [f64; 2] {
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection area of two rotated boxes.
pub fn intersection_area(a: &RotatedBox, b: &RotatedBox) -> f64 {
    polygon_area(&clip_convex(&a.corners(), &b.corners())).max(0.0)
}

/// Intersection over union in `[0, 1]`.
pub fn rotated_iou(a: &RotatedBox, b: &RotatedBox) -> Result<f64, MetricsError> {
    a.validate()?;
    b.validate()?;
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes() {
        let b = RotatedBox::new(3.0, -2.0, 1.6, 4.1, 33.0);
        assert!((rotated_iou(&b, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes() {
        let a = RotatedBox::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = RotatedBox::new(5.0, 0.0, 1.0, 1.0, 45.0);
        assert_eq!(rotated_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn half_offset_unit_squares() {
        // Overlap 0.5 × 1, union 1.5.
        let a = RotatedBox::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = RotatedBox::new(0.5, 0.0, 1.0, 1.0, 0.0);
        assert!((rotated_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn right_angle_trig_is_exact() {
        assert_eq!(sin_cos_deg(90.0), (1.0, 0.0));
        assert_eq!(sin_cos_deg(-90.0), (-1.0, 0.0));
        assert_eq!(sin_cos_deg(540.0), (0.0, -1.0));
        let b = RotatedBox::new(0.0, 0.0, 2.0, 4.0, 90.0);
        let xs: Vec<f64> = b.corners().iter().map(|c| c[0]).collect();
        assert!(xs.iter().all(|x| x.abs() == 1.0));
    }

    #[test]
    fn rotated_square_inside_square() {
        // A unit square rotated 45° inside a 2×2 square: IoU = 1/4.
        let a = RotatedBox::new(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = RotatedBox::new(0.0, 0.0, 1.0, 1.0, 45.0);
        assert!((rotated_iou(&a, &b).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn crossed_rectangles() {
        // 1×3 and 3×1 crossing at the center: intersection 1, union 5.
        let a = RotatedBox::new(0.0, 0.0, 1.0, 3.0, 0.0);
        let b = RotatedBox::new(0.0, 0.0, 1.0, 3.0, 90.0);
        assert!((rotated_iou(&a, &b).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let ok = RotatedBox::new(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!(matches!(rotated_iou(&ok, &RotatedBox::new(0.0, 0.0, 0.0, 1.0, 0.0)), Err(MetricsError::DegenerateBox(_))));
        assert!(rotated_iou(&RotatedBox::new(f64::NAN, 0.0, 1.0, 1.0, 0.0), &ok).is_err());
    }
}
