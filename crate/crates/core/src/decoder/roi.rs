//! Connected-component blob detection on a luminance raster.

use crate::shutter::FrameScan;

/// Axis-aligned pixel box, half open: `u0..u1`, `v0..v1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub u0: usize,
    pub v0: usize,
    pub u1: usize,
    pub v1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.u1 - self.u0
    }

    pub fn height(&self) -> usize {
        self.v1 - self.v0
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        (self.u0..self.u1).contains(&u) && (self.v0..self.v1).contains(&v)
    }

    /// Grow by `m` pixels on every side, clipped to `w × h`.
    pub fn expand(&self, m: usize, w: usize, h: usize) -> BBox {
        BBox {
            u0: self.u0.saturating_sub(m),
            v0: self.v0.saturating_sub(m),
            u1: (self.u1 + m).min(w),
            v1: (self.v1 + m).min(h),
        }
    }
}

/// One connected region of the thresholded raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    pub bbox: BBox,
    /// Membership mask over `bbox`, row-major.
    pub mask: Vec<bool>,
    /// Pixels above threshold (gap filling excluded).
    pub lit_pixels: usize,
}

impl Roi {
    pub fn member(&self, u: usize, v: usize) -> bool {
        self.bbox.contains(u, v) && self.mask[(v - self.bbox.v0) * self.bbox.width() + (u - self.bbox.u0)]
    }
}

/// Label 4-connected regions of pixels brighter than `threshold`.
///
/// Before labeling, dark gaps of at most `max_gap` rows between lit pixels
/// of the same column are filled, so a striped blob stays in one piece.
/// Regions with fewer than `min_pixels` lit pixels are dropped. The result
/// is sorted by lit area, largest first.
pub fn detect_rois(frame: &FrameScan, threshold: f64, max_gap: usize, min_pixels: usize) -> Vec<Roi> {
    let (w, h) = (frame.width, frame.height);
    let lit: Vec<bool> = frame.pixels.iter().map(|&p| p as f64 > threshold).collect();
    let mut mask = lit.clone();
    for u in 0..w {
        let mut last: Option<usize> = None;
        for v in 0..h {
            if lit[v * w + u] {
                if let Some(prev) = last {
                    if v - prev > 1 && v - prev - 1 <= max_gap {
                        for g in prev + 1..v {
                            mask[g * w + u] = true;
                        }
                    }
                }
                last = Some(v);
            }
        }
    }

    let mut label = vec![u32::MAX; w * h];
    let mut rois = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || label[start] != u32::MAX {
            continue;
        }
        let id = rois.len() as u32;
        let mut members = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            members.push(p);
            let (u, v) = (p % w, p / w);
            let mut visit = |q: usize| {
                if mask[q] && label[q] == u32::MAX {
                    label[q] = id;
                    stack.push(q);
                }
            };
            if u > 0 {
                visit(p - 1);
            }
            if u + 1 < w {
                visit(p + 1);
            }
            if v > 0 {
                visit(p - w);
            }
            if v + 1 < h {
                visit(p + w);
            }
        }
        let mut bb = BBox { u0: w, v0: h, u1: 0, v1: 0 };
        for &p in &members {
            let (u, v) = (p % w, p / w);
            bb.u0 = bb.u0.min(u);
            bb.v0 = bb.v0.min(v);
            bb.u1 = bb.u1.max(u + 1);
            bb.v1 = bb.v1.max(v + 1);
        }
        let mut m = vec![false; bb.width() * bb.height()];
        let mut lit_pixels = 0;
        for &p in &members {
            let (u, v) = (p % w, p / w);
            m[(v - bb.v0) * bb.width() + (u - bb.u0)] = true;
            lit_pixels += lit[p] as usize;
        }
        rois.push(Roi { bbox: bb, mask: m, lit_pixels });
    }
    rois.retain(|r| r.lit_pixels >= min_pixels);
    rois.sort_by(|a, b| {
        b.lit_pixels
            .cmp(&a.lit_pixels)
            .then((a.bbox.v0, a.bbox.u0).cmp(&(b.bbox.v0, b.bbox.u0)))
    });
    rois
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: usize, h: usize, lit: &[(usize, usize)]) -> FrameScan {
        let mut f = FrameScan::blank(w, h, 0.0, 1.0, 1.0);
        for &(u, v) in lit {
            f.pixels[v * w + u] = 1.0;
        }
        f
    }

    #[test]
    fn dark_frame_has_no_blobs() {
        assert!(detect_rois(&frame(10, 10, &[]), 0.1, 4, 1).is_empty());
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let rois = detect_rois(&frame(4, 4, &[(0, 0), (1, 1)]), 0.5, 0, 1);
        assert_eq!(rois.len(), 2);
    }

    #[test]
    fn stripes_bridge_along_readout_axis() {
        let mut lit = vec![];
        for v in [0, 1, 4, 5, 8, 9] {
            for u in 2..5 {
                lit.push((u, v));
            }
        }
        let f = frame(8, 12, &lit);
        assert_eq!(detect_rois(&f, 0.5, 1, 1).len(), 3);
        let rois = detect_rois(&f, 0.5, 2, 1);
        assert_eq!(rois.len(), 1);
        assert_eq!(rois[0].lit_pixels, 18);
        assert_eq!(rois[0].bbox, BBox { u0: 2, v0: 0, u1: 5, v1: 10 });
        assert!(rois[0].member(3, 2));
    }

    #[test]
    fn sorted_by_area_and_filtered() {
        let mut lit = vec![(0, 0)];
        for u in 4..8 {
            lit.push((u, 5));
        }
        let rois = detect_rois(&frame(10, 10, &lit), 0.5, 0, 1);
        assert_eq!(rois.iter().map(|r| r.lit_pixels).collect::<Vec<_>>(), vec![4, 1]);
        assert_eq!(detect_rois(&frame(10, 10, &lit), 0.5, 0, 2).len(), 1);
    }
}
