//! Box arithmetic and the mapping from pixel coordinates to output-grid cells.

use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel coordinates, origin at the top-left corner.
///
/// Area is computed half-open: `(x2 - x1) * (y2 - y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box, swapping coordinates if they arrive out of order.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1: x1.min(x2),
            y1: y1.min(y2),
            x2: x1.max(x2),
            y2: y1.max(y2),
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        center_point(self)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }

    /// Clamps every coordinate into `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        BBox::new(
            self.x1.clamp(0.0, width),
            self.y1.clamp(0.0, height),
            self.x2.clamp(0.0, width),
            self.y2.clamp(0.0, height),
        )
    }

    pub fn is_within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    /// Largest axis gap between the two boxes; 0 when they touch or overlap.
    pub fn gap(&self, other: &BBox) -> f64 {
        let gx = (other.x1 - self.x2).max(self.x1 - other.x2).max(0.0);
        let gy = (other.y1 - self.y2).max(self.y1 - other.y2).max(0.0);
        gx.max(gy)
    }
}

/// Intersection over union. Returns 0 when the union has zero area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Box with the same center, scaled by `ratio` along each axis.
pub fn center_area(bbox: &BBox, ratio: f64) -> BBox {
    let (cx, cy) = center_point(bbox);
    let hw = bbox.width() * ratio / 2.0;
    let hh = bbox.height() * ratio / 2.0;
    BBox {
        x1: cx - hw,
        y1: cy - hh,
        x2: cx + hw,
        y2: cy + hh,
    }
}

pub fn center_point(bbox: &BBox) -> (f64, f64) {
    ((bbox.x1 + bbox.x2) / 2.0, (bbox.y1 + bbox.y2) / 2.0)
}

/// Output-grid geometry: `width x height` cells, each covering `stride` input pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
}

impl GridShape {
    /// Grid paired with a `width x height` input at the given stride.
    pub fn for_input(width: usize, height: usize, stride: usize) -> Self {
        Self {
            width: width.div_ceil(stride),
            height: height.div_ceil(stride),
            stride,
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Pixel coordinates of the center of cell `(cx, cy)`.
    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        let d = self.stride as f64;
        ((cx as f64 + 0.5) * d, (cy as f64 + 0.5) * d)
    }
}

/// Inclusive cell range on an output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl GridBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| (x, y)))
    }
}

/// Maps a pixel point to its containing cell, clamped to the grid.
pub fn to_grid(point: (f64, f64), shape: &GridShape) -> (usize, usize) {
    let d = shape.stride as f64;
    let gx = floor_cell(point.0 / d, shape.width);
    let gy = floor_cell(point.1 / d, shape.height);
    (gx, gy)
}

/// Rasterizes a box onto the grid. Always covers at least one cell.
pub fn box_to_grid(bbox: &BBox, shape: &GridShape) -> GridBox {
    let d = shape.stride as f64;
    let (x0, x1) = axis_span(bbox.x1 / d, bbox.x2 / d, shape.width);
    let (y0, y1) = axis_span(bbox.y1 / d, bbox.y2 / d, shape.height);
    GridBox { x0, y0, x1, y1 }
}

fn floor_cell(v: f64, len: usize) -> usize {
    let max = len.saturating_sub(1) as f64;
    v.floor().clamp(0.0, max) as usize
}

fn axis_span(lo: f64, hi: f64, len: usize) -> (usize, usize) {
    let max = len.saturating_sub(1) as f64;
    let start = lo.floor().clamp(0.0, max);
    let end = (hi.ceil() - 1.0).max(start).clamp(0.0, max);
    (start as usize, end as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0., 0., 10., 10.), &b(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&b(0., 0., 10., 10.), &b(20., 20., 30., 30.)), 0.0);
        // inter 50, union 150
        assert!((iou(&b(0., 0., 10., 10.), &b(5., 0., 15., 10.)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&b(3., 3., 3., 3.), &b(3., 3., 3., 3.)), 0.0);
    }

    #[test]
    fn center_area_examples() {
        assert_eq!(center_area(&b(0., 0., 10., 10.), 1.0), b(0., 0., 10., 10.));
        let z = center_area(&b(0., 0., 10., 10.), 0.3);
        for (got, want) in [(z.x1, 3.5), (z.y1, 3.5), (z.x2, 6.5), (z.y2, 6.5)] {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert_eq!(center_area(&b(0., 0., 10., 20.), 0.5), b(2.5, 5., 7.5, 15.));
    }

    #[test]
    fn center_point_examples() {
        assert_eq!(center_point(&b(0., 0., 10., 10.)), (5., 5.));
        assert_eq!(center_point(&b(2., 4., 6., 12.)), (4., 8.));
        assert_eq!(center_point(&b(0., 0., 0., 0.)), (0., 0.));
    }

    #[test]
    fn to_grid_examples() {
        let shape = GridShape::for_input(32, 32, 4);
        assert_eq!((shape.width, shape.height), (8, 8));
        assert_eq!(to_grid((5., 5.), &shape), (1, 1));
        assert_eq!(to_grid((0., 0.), &shape), (0, 0));
        assert_eq!(to_grid((0., 0.), &GridShape::for_input(30, 30, 3)), (0, 0));
        assert_eq!(to_grid((31.9, 31.9), &shape), (7, 7));
        assert_eq!(to_grid((32.0, 40.0), &shape), (7, 7));
    }

    #[test]
    fn box_to_grid_examples() {
        let shape = GridShape::for_input(32, 32, 4);
        assert_eq!(
            box_to_grid(&b(3.5, 3.5, 6.5, 6.5), &shape),
            GridBox { x0: 0, y0: 0, x1: 1, y1: 1 }
        );
        let single = box_to_grid(&b(0., 0., 4., 4.), &shape);
        assert_eq!(single, GridBox { x0: 0, y0: 0, x1: 0, y1: 0 });
        assert_eq!(
            box_to_grid(&b(0., 0., 32., 32.), &shape),
            GridBox { x0: 0, y0: 0, x1: 7, y1: 7 }
        );
        let tiny = box_to_grid(&b(5., 5., 5., 5.), &shape);
        assert_eq!(tiny.width() * tiny.height(), 1);
    }

    #[test]
    fn grid_shape_rounds_up() {
        let s = GridShape::for_input(65, 63, 4);
        assert_eq!((s.width, s.height), (17, 16));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..60.0f64, 0.0..60.0f64, 0.0..30.0f64, 0.0..30.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(a in arb_box(), c in arb_box()) {
            prop_assert_eq!(iou(&a, &c), iou(&c, &a));
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn self_iou_is_one(a in arb_box()) {
            prop_assume!(a.area() > 0.0);
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn center_area_preserves_center(a in arb_box(), ratio in 0.01..=1.0f64) {
            prop_assume!(a.area() > 1e-6);
            let z = center_area(&a, ratio);
            let (cx, cy) = center_point(&a);
            let (zx, zy) = center_point(&z);
            prop_assert!((cx - zx).abs() < 1e-9 && (cy - zy).abs() < 1e-9);
            prop_assert!((z.area() - a.area() * ratio * ratio).abs() < 1e-9 * a.area().max(1.0));
        }

        #[test]
        fn raster_contains_center_cell(a in arb_box()) {
            prop_assume!(a.area() > 0.0);
            let shape = GridShape::for_input(96, 96, 4);
            let gb = box_to_grid(&a, &shape);
            let (gx, gy) = to_grid(center_point(&a), &shape);
            prop_assert!(gb.contains(gx, gy));
        }
    }
}
