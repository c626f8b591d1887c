//! Bounding boxes in pixel and normalized space, plus the overlap and distance
//! primitives used by the evaluation protocol.

use core::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

static CLAMP_EVENTS: AtomicUsize = AtomicUsize::new(0);

/// Number of times [`normalize`] had to clamp a partially out-of-frame box
/// since process start.
pub fn clamp_events() -> usize {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box has non-finite coordinates")]
    NonFinite,
    #[error("box has non-positive size ({w} x {h})")]
    Degenerate { w: f64, h: f64 },
    #[error("box lies entirely outside the {width}x{height} image")]
    OutsideImage { width: u32, height: u32 },
    #[error("image dimensions must be positive")]
    EmptyImage,
}

/// Axis-aligned box in pixels, stored as (left, top, width, height) like OTB
/// annotations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Finite with strictly positive extent.
    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.w > 0.0 && self.h > 0.0
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeometryError::Degenerate {
                w: self.w,
                h: self.h,
            });
        }
        Ok(())
    }

    /// Intersection with the image rectangle, or `None` when nothing is left.
    pub fn clip_to(&self, dims: ImageDims) -> Option<BBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(dims.width as f64);
        let y1 = self.bottom().min(dims.height as f64);
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }
}

/// Box in image-relative units: center and size, each divided by the image
/// extent along its axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormBBox {
    pub cx: f64,
    pub cy: f64,
    pub nw: f64,
    pub nh: f64,
}

impl NormBBox {
    pub const fn new(cx: f64, cy: f64, nw: f64, nh: f64) -> Self {
        Self { cx, cy, nw, nh }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    /// Corner encoding `(x0, y0, x1, y1)`, still in normalized units.
    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.nw / 2.0,
            self.cy - self.nh / 2.0,
            self.cx + self.nw / 2.0,
            self.cy + self.nh / 2.0,
        ]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.nw, self.nh]
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.cx) && unit(self.cy) && unit(self.nw) && unit(self.nh) && self.nw > 0.0 && self.nh > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            Err(GeometryError::EmptyImage)
        } else {
            Ok(())
        }
    }
}

fn clamp_unit(v: f64, clamped: &mut bool) -> f64 {
    if v < 0.0 {
        *clamped = true;
        0.0
    } else if v > 1.0 {
        *clamped = true;
        1.0
    } else {
        v
    }
}

/// Pixel box to normalized center/size.
///
/// A box that only partly overlaps the image is clamped into `[0, 1]` and the
/// event is counted (see [`clamp_events`]); a box with no overlap at all is an
/// error.
pub fn normalize(b: BBox, dims: ImageDims) -> Result<NormBBox, GeometryError> {
    dims.validate()?;
    b.validate()?;
    if b.clip_to(dims).is_none() {
        return Err(GeometryError::OutsideImage {
            width: dims.width,
            height: dims.height,
        });
    }
    let (w, h) = (dims.width as f64, dims.height as f64);
    let (cx, cy) = b.center();
    let mut clamped = false;
    let out = NormBBox {
        cx: clamp_unit(cx / w, &mut clamped),
        cy: clamp_unit(cy / h, &mut clamped),
        nw: clamp_unit(b.w / w, &mut clamped),
        nh: clamp_unit(b.h / h, &mut clamped),
    };
    if clamped {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
    }
    Ok(out)
}

pub fn denormalize(n: NormBBox, dims: ImageDims) -> BBox {
    let (w, h) = (dims.width as f64, dims.height as f64);
    let bw = n.nw * w;
    let bh = n.nh * h;
    BBox::new(n.cx * w - bw / 2.0, n.cy * h - bh / 2.0, bw, bh)
}

/// Intersection over union; 0 when either box has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || !union.is_finite() {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers, in pixels.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    libm::hypot(ax - bx, ay - by)
}
