use image::GrayImage;
use serde::{Deserialize, Serialize};

/// Shannon entropy of an image's 256-bin grey-value distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyResult {
    /// Entropy in bits.
    pub h: f64,
    /// Normalized histogram.
    pub p: Vec<f64>,
    /// Number of bins.
    pub m: usize,
}

/// `H = -sum p_i log2 p_i` over all pixels, background included; empty bins add nothing.
pub fn image_entropy(img: &GrayImage) -> EntropyResult {
    let mut counts = [0u64; 256];
    for &px in img.as_raw() {
        counts[px as usize] += 1;
    }
    let total = img.as_raw().len() as f64;
    let p: Vec<f64> = counts
        .iter()
        .map(|&c| if total > 0.0 { c as f64 / total } else { 0.0 })
        .collect();
    let h = p
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| -pi * pi.log2())
        .sum::<f64>()
        .max(0.0);
    EntropyResult { h, p, m: 256 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_uniform_and_coin() {
        assert_eq!(image_entropy(&GrayImage::from_pixel(16, 16, image::Luma([77]))).h, 0.0);

        let uniform = GrayImage::from_fn(16, 16, |x, y| image::Luma([(y * 16 + x) as u8]));
        assert!((image_entropy(&uniform).h - 8.0).abs() < 1e-9);

        let coin = GrayImage::from_fn(16, 16, |x, _| image::Luma([if x < 8 { 0 } else { 255 }]));
        let e = image_entropy(&coin);
        assert!((e.h - 1.0).abs() < 1e-9);
        assert!((e.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(e.m, 256);
    }
}
