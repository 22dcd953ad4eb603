use rayon::prelude::*;

use super::{image_entropy, EntropyResult, RenderedImage, Renderer, ViewParams};
use crate::error::{Error, Result};
use crate::volume::Volume;

/// 10 degree spacing over a full turn.
pub const DEFAULT_VIEWS: usize = 36;

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub azimuth_deg: f64,
    pub image: RenderedImage,
    pub entropy: EntropyResult,
    /// `(azimuth, entropy)` for every rendered view, in azimuth order.
    pub scores: Vec<(f64, f64)>,
}

/// Renders `n_views` azimuths `k * 360 / n_views` and keeps the one with the highest entropy,
/// preferring the smaller azimuth on ties.
pub fn optimal_snapshot(v: &Volume, n_views: usize, template: &ViewParams) -> Result<Snapshot> {
    if n_views == 0 {
        return Err(Error::InvalidView("n_views must be at least 1".into()));
    }
    template.validate()?;
    let renderer = Renderer::new(v, template.mode, template.threshold)?;
    let views: Vec<(f64, RenderedImage, EntropyResult)> = (0..n_views)
        .into_par_iter()
        .map(|k| {
            let azimuth = k as f64 * 360.0 / n_views as f64;
            let img = renderer.render(&template.at(azimuth))?;
            let e = image_entropy(&img);
            Ok((azimuth, img, e))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<(f64, f64)> = views.iter().map(|(a, _, e)| (*a, e.h)).collect();
    let mut best = 0;
    for (k, (_, _, e)) in views.iter().enumerate() {
        if e.h > views[best].2.h {
            best = k;
        }
    }
    let (azimuth_deg, image, entropy) = views.into_iter().nth(best).expect("n_views >= 1");
    Ok(Snapshot {
        azimuth_deg,
        image,
        entropy,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::presets;

    #[test]
    fn single_view_is_azimuth_zero() {
        let v = presets::l_slab(32, 0).generate().unwrap().volume;
        let s = optimal_snapshot(&v, 1, &ViewParams::additive().with_size(16, 32)).unwrap();
        assert_eq!(s.azimuth_deg, 0.0);
        assert_eq!(s.scores.len(), 1);
    }

    #[test]
    fn zero_views_rejected() {
        let v = presets::l_slab(32, 0).generate().unwrap().volume;
        assert!(optimal_snapshot(&v, 0, &ViewParams::additive()).is_err());
    }
}
