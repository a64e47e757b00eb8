//! Ellipse geometry from per-row chords.
//!
//! Every row of an ellipse cuts a chord whose squared length is quadratic in
//! the row coordinate and whose midpoint moves linearly with it. Row data
//! are strip areas, so the length profile is refined against the exact
//! strip integral.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};

use crate::error::{Error, Result};

/// Chord through one pixel row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowChord {
    /// Row centre, `v + 0.5`.
    pub y: f64,
    /// Strip area of the row, i.e. mean chord length over the row.
    pub length: f64,
    /// Column coordinate of the chord midpoint.
    pub mid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EllipseFit {
    /// `[u, v]` (px).
    pub center: [f64; 2],
    pub major_r: f64,
    pub minor_r: f64,
    /// Major-axis direction in the `(u, v)` plane.
    pub angle: f64,
    /// RMS strip-area residual (px²).
    pub rms: f64,
}

impl EllipseFit {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.major_r * self.minor_r
    }
}

const GN_ITERATIONS: usize = 30;

fn lstsq(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-12 {
        return Err(Error::Singular("rank-deficient chord system".into()));
    }
    svd.solve(&b, 0.0).map_err(|e| Error::Singular(e.to_string()))
}

/// Antiderivative of `sqrt(1 - x²)`.
fn g(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    (x * (1.0 - x * x).sqrt() + x.asin()) / 2.0
}

/// Antiderivative of `x sqrt(1 - x²)`.
fn g1(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    -(1.0 - x * x).powf(1.5) / 3.0
}

/// Chord profile `L(y) = l0 sqrt(1 - ((y - c) / e)²)`.
#[derive(Debug, Clone, Copy)]
struct Profile {
    c: f64,
    e: f64,
    l0: f64,
}

impl Profile {
    /// Area of the unit-high strip centred on `y`.
    fn strip(&self, y: f64) -> f64 {
        let (x0, x1) = ((y - 0.5 - self.c) / self.e, (y + 0.5 - self.c) / self.e);
        self.l0 * self.e * (g(x1) - g(x0))
    }

    /// Area-weighted mean row coordinate inside the strip.
    fn strip_centroid(&self, y: f64) -> f64 {
        let (x0, x1) = ((y - 0.5 - self.c) / self.e, (y + 0.5 - self.c) / self.e);
        let a = g(x1) - g(x0);
        if a <= 0.0 {
            return y;
        }
        self.c + self.e * (g1(x1) - g1(x0)) / a
    }
}

/// Quadratic fit of squared chord length, a starting point for refinement.
fn initial_profile(chords: &[RowChord]) -> Result<Profile> {
    let n = chords.len();
    let design = DMatrix::from_fn(n, 3, |i, j| chords[i].y.powi(j as i32));
    let rhs = DVector::from_iterator(n, chords.iter().map(|c| c.length * c.length));
    let q = lstsq(design, rhs)?;
    let (alpha, beta, gamma) = (q[0], q[1], q[2]);
    if gamma >= 0.0 {
        return Err(Error::Singular("chord lengths do not close".into()));
    }
    let c = -beta / (2.0 * gamma);
    let l0_sq = alpha - beta * beta / (4.0 * gamma);
    if l0_sq <= 0.0 {
        return Err(Error::Singular("non-positive central chord".into()));
    }
    Ok(Profile { c, e: (-l0_sq / gamma).sqrt(), l0: l0_sq.sqrt() })
}

/// Gauss-Newton on exact strip areas.
fn refine_profile(chords: &[RowChord], mut p: Profile) -> Result<(Profile, f64)> {
    let n = chords.len();
    let resid = |p: &Profile| -> DVector<f64> {
        DVector::from_iterator(n, chords.iter().map(|c| p.strip(c.y) - c.length))
    };
    let mut r = resid(&p);
    for _ in 0..GN_ITERATIONS {
        let h = 1e-6;
        let mut jac = DMatrix::zeros(n, 3);
        for j in 0..3 {
            let mut q = p;
            match j {
                0 => q.c += h,
                1 => q.e += h,
                _ => q.l0 += h,
            }
            let rq = resid(&q);
            for i in 0..n {
                jac[(i, j)] = (rq[i] - r[i]) / h;
            }
        }
        let step = lstsq(jac, -r.clone())?;
        let next = Profile { c: p.c + step[0], e: p.e + step[1], l0: p.l0 + step[2] };
        if !(next.e > 0.0 && next.l0 > 0.0) {
            break;
        }
        let rn = resid(&next);
        if rn.norm() > r.norm() {
            break;
        }
        p = next;
        r = rn;
        if step.norm() < 1e-12 {
            break;
        }
    }
    Ok((p, (r.norm_squared() / n as f64).sqrt()))
}

/// Fit an ellipse to at least five row chords.
pub fn fit_ellipse(chords: &[RowChord]) -> Result<EllipseFit> {
    let n = chords.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!("{n} chords, need at least 5")));
    }
    let (p, rms) = refine_profile(chords, initial_profile(chords)?)?;

    // Chord midpoints move linearly with the row; regress them on the
    // area centroid of each strip.
    let ys: Vec<f64> = chords.iter().map(|c| p.strip_centroid(c.y) - p.c).collect();
    let md = DMatrix::from_fn(n, 2, |i, j| ys[i].powi(j as i32));
    let mids = DVector::from_iterator(n, chords.iter().map(|c| c.mid));
    let m = lstsq(md, mids)?;
    let (m0, k) = (m[0], m[1]);

    // A du² + B du dv + C dv² = 1 with du measured from the chord midpoint
    // line and dv from the centre row.
    let qa = 4.0 / (p.l0 * p.l0);
    let qb = -2.0 * k * qa;
    let qc = 1.0 / (p.e * p.e) + qb * qb / (4.0 * qa);
    let eig = SymmetricEigen::new(Matrix2::new(qa, qb / 2.0, qb / 2.0, qc));
    let (i_lo, i_hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let axis = eig.eigenvectors.column(i_lo);
    Ok(EllipseFit {
        center: [m0, p.c],
        major_r: 1.0 / eig.eigenvalues[i_lo].sqrt(),
        minor_r: 1.0 / eig.eigenvalues[i_hi].sqrt(),
        angle: axis[1].atan2(axis[0]),
        rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shutter::EllipseProjection;

    /// Exact strip areas of an ellipse by fine quadrature.
    fn chords_of(e: &EllipseProjection) -> Vec<RowChord> {
        let [_, ev] = e.half_extents();
        let lo = (e.center_px[1] - ev).floor() as i64;
        let hi = (e.center_px[1] + ev).ceil() as i64;
        let mut out = vec![];
        for v in lo..hi {
            let steps = 2000;
            let (mut area, mut moment) = (0.0, 0.0);
            for s in 0..steps {
                let y = v as f64 + (s as f64 + 0.5) / steps as f64;
                if let Some((a, b)) = e.span_at(y) {
                    area += (b - a) / steps as f64;
                    moment += (b - a) * (a + b) / 2.0 / steps as f64;
                }
            }
            if area > 3.0 {
                out.push(RowChord { y: v as f64 + 0.5, length: area, mid: moment / area });
            }
        }
        out
    }

    #[test]
    fn recovers_axis_aligned_ellipse() {
        let e = EllipseProjection::new([300.3, 400.7], 9.76, 8.46, std::f64::consts::FRAC_PI_2);
        let f = fit_ellipse(&chords_of(&e)).unwrap();
        assert!((f.major_r - 9.76).abs() < 2e-4, "{f:?}");
        assert!((f.minor_r - 8.46).abs() < 2e-4, "{f:?}");
        assert!((f.center[0] - 300.3).abs() < 1e-3 && (f.center[1] - 400.7).abs() < 1e-3);
    }

    #[test]
    fn recovers_rotated_ellipse() {
        let e = EllipseProjection::new([50.0, 60.2], 15.0, 10.0, 0.7);
        let f = fit_ellipse(&chords_of(&e)).unwrap();
        assert!((f.major_r - 15.0).abs() < 5e-4, "{f:?}");
        assert!((f.minor_r - 10.0).abs() < 5e-4, "{f:?}");
        let d = (f.angle - 0.7).rem_euclid(std::f64::consts::PI);
        assert!(d.min(std::f64::consts::PI - d) < 2e-4, "{f:?}");
    }

    #[test]
    fn too_few_rows() {
        let c = RowChord { y: 0.5, length: 4.0, mid: 0.0 };
        assert!(fit_ellipse(&[c; 3]).is_err());
    }
}
