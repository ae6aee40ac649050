use crate::data::ImageDims;
use crate::rng::Rng;

/// Adds `N(0, sigma^2)` to every byte, rounds half away from zero, clamps to
/// `[0, 255]`.
pub fn apply_gaussian(pixels: &mut [u8], sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = Rng::new(seed);
    for p in pixels {
        let v = *p as f64 + sigma * rng.gaussian();
        *p = v.round().clamp(0.0, 255.0) as u8;
    }
}

/// In every image, forces exactly `round(rate * H * W)` distinct spatial
/// positions to black or white (all channels alike).
pub fn apply_salt_pepper(pixels: &mut [u8], dims: ImageDims, rate: f64, seed: u64) {
    let spatial = dims.spatial();
    let hits = (rate * spatial as f64).round() as usize;
    if hits == 0 {
        return;
    }
    let mut rng = Rng::new(seed);
    for img in pixels.chunks_exact_mut(dims.len()) {
        for pos in rng.sample(spatial, hits) {
            let v = if rng.below(2) == 0 { 0 } else { 255 };
            img[pos * dims.channels..(pos + 1) * dims.channels].fill(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn salt_pepper_hits_exact_count() {
        let dims = ImageDims::MNIST;
        let mut img = vec![128u8; dims.len() * 3];
        apply_salt_pepper(&mut img, dims, 0.1, 5);
        for one in img.chunks(dims.len()) {
            let changed = one.iter().filter(|&&v| v != 128).count();
            assert_eq!(changed, 78);
            assert!(one.iter().all(|&v| v == 128 || v == 0 || v == 255));
        }
    }

    #[test]
    fn salt_pepper_covers_all_channels() {
        let dims = ImageDims::new(4, 4, 3);
        let mut img = vec![100u8; dims.len()];
        apply_salt_pepper(&mut img, dims, 0.5, 1);
        let hit = img.chunks(3).filter(|px| px[0] != 100).count();
        assert_eq!(hit, 8);
        assert!(img.chunks(3).all(|px| px[0] == px[1] && px[1] == px[2]));
    }

    #[test]
    fn gaussian_clamps_and_is_seeded() {
        let mut a = vec![0u8, 255, 128, 3, 250];
        let mut b = a.clone();
        apply_gaussian(&mut a, 200.0, 9);
        apply_gaussian(&mut b, 200.0, 9);
        assert_eq!(a, b);
        let mut c = vec![7u8; 10];
        apply_gaussian(&mut c, 0.0, 9);
        assert_eq!(c, vec![7u8; 10]);
    }
}
