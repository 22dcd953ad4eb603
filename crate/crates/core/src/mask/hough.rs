//! Hough circle detection on a single slice.
//!
//! Edges come from a 3x3 Sobel operator on a percentile-stretched copy of the slice. Each edge
//! pixel votes along its gradient direction for centers at every candidate radius; the peak of
//! each radius is then scored by the fraction of its circumference that lies on edge pixels.
//! The winning circle is refined by a least-squares fit to the edge pixels of the wall band.

use image::GrayImage;
use rayon::prelude::*;

use super::Circle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HoughConfig {
    /// Sobel gradient magnitude at or above which a pixel is an edge.
    pub edge_threshold: f32,
    /// Radius search range as fractions of `min(width, height)`.
    pub r_min_frac: f64,
    pub r_max_frac: f64,
    /// Minimum circumference support for a detection.
    pub vote_floor: f64,
    /// Percentiles mapped to 0 and 255 before edge extraction.
    pub stretch: (f64, f64),
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            edge_threshold: 96.0,
            r_min_frac: 0.2,
            r_max_frac: 0.49,
            vote_floor: 0.25,
            stretch: (0.01, 0.99),
        }
    }
}

struct EdgeMap {
    w: usize,
    h: usize,
    edge: Vec<bool>,
    /// (x, y, unit gradient)
    points: Vec<(usize, usize, f64, f64)>,
}

impl EdgeMap {
    fn near_edge(&self, x: isize, y: isize) -> bool {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (px, py) = (x + dx, y + dy);
                if px >= 0
                    && py >= 0
                    && (px as usize) < self.w
                    && (py as usize) < self.h
                    && self.edge[py as usize * self.w + px as usize]
                {
                    return true;
                }
            }
        }
        false
    }

    /// Fraction of sample points on the circle that have an edge pixel in their 3x3 neighbourhood.
    fn support(&self, cx: f64, cy: f64, r: f64) -> f64 {
        let n = (std::f64::consts::TAU * r).round().max(16.0) as usize;
        let hits = (0..n)
            .filter(|&k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                let x = (cx + r * a.cos()).round() as isize;
                let y = (cy + r * a.sin()).round() as isize;
                self.near_edge(x, y)
            })
            .count();
        hits as f64 / n as f64
    }
}

fn percentile(hist: &[u64; 256], total: u64, q: f64) -> u8 {
    let rank = (q * total as f64).floor() as u64;
    let mut acc = 0;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc > rank {
            return v as u8;
        }
    }
    255
}

fn stretched(img: &GrayImage, (lo_q, hi_q): (f64, f64)) -> Vec<f32> {
    let mut hist = [0u64; 256];
    for &p in img.as_raw() {
        hist[p as usize] += 1;
    }
    let total = img.as_raw().len() as u64;
    let lo = percentile(&hist, total, lo_q) as f32;
    let hi = percentile(&hist, total, hi_q) as f32;
    if hi <= lo {
        return img.as_raw().iter().map(|&p| p as f32).collect();
    }
    let gain = 255.0 / (hi - lo);
    img.as_raw()
        .iter()
        .map(|&p| ((p as f32 - lo) * gain).clamp(0.0, 255.0))
        .collect()
}

fn sobel_edges(img: &GrayImage, cfg: &HoughConfig) -> EdgeMap {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = stretched(img, cfg.stretch);
    let at = |x: usize, y: usize| px[y * w + x];
    let mut edge = vec![false; w * h];
    let mut points = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag >= cfg.edge_threshold {
                edge[y * w + x] = true;
                points.push((x, y, (gx / mag) as f64, (gy / mag) as f64));
            }
        }
    }
    EdgeMap { w, h, edge, points }
}

struct Candidate {
    cx: f64,
    cy: f64,
    r: f64,
    support: f64,
}

/// Peak of the gradient-directed accumulator for radius `r`; ties go to the first cell in
/// raster order.
fn peak_for_radius(edges: &EdgeMap, r: usize, acc: &mut [u32]) -> Option<(usize, usize, u32)> {
    acc.fill(0);
    let rf = r as f64;
    for &(x, y, gx, gy) in &edges.points {
        for sign in [-1.0, 1.0] {
            let cx = (x as f64 + sign * rf * gx).round();
            let cy = (y as f64 + sign * rf * gy).round();
            if cx >= 0.0 && cy >= 0.0 && (cx as usize) < edges.w && (cy as usize) < edges.h {
                acc[cy as usize * edges.w + cx as usize] += 1;
            }
        }
    }
    let (idx, &best) = acc
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
    (best > 0).then_some((idx % edges.w, idx / edges.w, best))
}

/// Algebraic least-squares circle through the points.
fn fit_circle(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    // Centered coordinates keep the normal equations well conditioned.
    let (mut suu, mut svv, mut suv, mut suuu, mut svvv, mut suvv, mut svuu) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        suu += u * u;
        svv += v * v;
        suv += u * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let det = suu * svv - suv * suv;
    if det.abs() < 1e-9 {
        return None;
    }
    let b1 = 0.5 * (suuu + suvv);
    let b2 = 0.5 * (svvv + svuu);
    let uc = (b1 * svv - b2 * suv) / det;
    let vc = (suu * b2 - suv * b1) / det;
    let r = (uc * uc + vc * vc + (suu + svv) / n).sqrt();
    Some((uc + mx, vc + my, r))
}

/// Detects the container circle with the default configuration.
pub fn detect_container_circle(top_slice: &GrayImage) -> Result<Circle> {
    detect_with_config(top_slice, &HoughConfig::default())
}

pub fn detect_with_config(img: &GrayImage, cfg: &HoughConfig) -> Result<Circle> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w.min(h) < 64 {
        return Err(Error::SliceTooSmall(w, h));
    }
    let none = |best: f64| Error::NoCircleFound {
        best,
        floor: cfg.vote_floor,
    };
    let edges = sobel_edges(img, cfg);
    if edges.points.is_empty() {
        return Err(none(0.0));
    }
    let min_dim = w.min(h) as f64;
    let r_lo = (cfg.r_min_frac * min_dim).ceil().max(1.0) as usize;
    let r_hi = (cfg.r_max_frac * min_dim).floor() as usize;

    let mut candidates: Vec<Candidate> = (r_lo..=r_hi)
        .into_par_iter()
        .map_init(
            || vec![0u32; w * h],
            |acc, r| {
                peak_for_radius(&edges, r, acc).map(|(cx, cy, _)| Candidate {
                    cx: cx as f64,
                    cy: cy as f64,
                    r: r as f64,
                    support: edges.support(cx as f64, cy as f64, r as f64),
                })
            },
        )
        .flatten()
        .collect();
    candidates.sort_by(|a, b| a.r.total_cmp(&b.r));
    let best = candidates
        .iter()
        .fold(None::<&Candidate>, |acc, c| match acc {
            Some(b) if b.support >= c.support => Some(b),
            _ => Some(c),
        })
        .ok_or_else(|| none(0.0))?;
    if best.support < cfg.vote_floor {
        return Err(none(best.support));
    }

    // Radii of a wall band produce a run of near-equal detections around the same center.
    let window = (0.05 * best.r).max(3.0);
    let cluster: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| {
            c.support >= 0.9 * best.support
                && (c.r - best.r).abs() <= window
                && (c.cx - best.cx).hypot(c.cy - best.cy) <= 3.0
        })
        .collect();
    let k = cluster.len() as f64;
    let cx = cluster.iter().map(|c| c.cx).sum::<f64>() / k;
    let cy = cluster.iter().map(|c| c.cy).sum::<f64>() / k;
    let r_min = cluster.iter().map(|c| c.r).fold(f64::INFINITY, f64::min);
    let r_max = cluster.iter().map(|c| c.r).fold(0.0, f64::max);
    let r_mean = cluster.iter().map(|c| c.r).sum::<f64>() / k;

    let band: Vec<(f64, f64)> = edges
        .points
        .iter()
        .map(|&(x, y, _, _)| (x as f64, y as f64))
        .filter(|&(x, y)| {
            let d = (x - cx).hypot(y - cy);
            d >= r_min - 2.0 && d <= r_max + 2.0
        })
        .collect();
    let (fx, fy, fr) = match fit_circle(&band) {
        Some((fx, fy, fr)) if (fx - cx).hypot(fy - cy) <= 3.0 && (fr - r_mean).abs() <= window => {
            (fx, fy, fr)
        }
        _ => (cx, cy, r_mean),
    };
    Ok(Circle {
        cx: fx,
        cy: fy,
        r: fr,
        votes: best.support.clamp(0.0, 1.0),
    })
}
