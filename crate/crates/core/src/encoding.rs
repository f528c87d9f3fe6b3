//! Intensity-to-latency input coding.
//!
//! Every pixel drives one input neuron that fires exactly once. Brighter
//! pixels fire earlier: a pixel at full intensity fires at step 0 and a black
//! pixel fires at `t_max`, the last simulated step.

use rand::Rng;

use crate::error::{Error, Result};

/// A grayscale image with integer intensities in `0..=i_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntensityImage {
    pixels: Vec<u16>,
    width: usize,
    height: usize,
    i_max: u16,
}

impl IntensityImage {
    pub fn new(pixels: Vec<u16>, width: usize, height: usize, i_max: u16) -> Result<Self> {
        if i_max == 0 {
            return Err(Error::Config("maximum intensity must be positive".into()));
        }
        if width * height != pixels.len() {
            return Err(Error::Structure(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some((idx, &p)) = pixels.iter().enumerate().find(|(_, &p)| p > i_max) {
            return Err(Error::InputDomain(format!(
                "pixel {idx} has intensity {p}, above maximum {i_max}"
            )));
        }
        Ok(Self { pixels, width, height, i_max })
    }

    /// Builds an 8-bit image (`i_max = 255`).
    pub fn from_u8(pixels: &[u8], width: usize, height: usize) -> Result<Self> {
        Self::new(pixels.iter().map(|&p| u16::from(p)).collect(), width, height, 255)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn i_max(&self) -> u16 {
        self.i_max
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// First-spike times of a population of neurons.
///
/// Each neuron has exactly one entry in `0..=t_max`. Neurons that never
/// emitted a real spike (silent neurons, or those given a fake spike during
/// training) hold the sentinel `t_max` and are flagged as not fired. Only
/// fired neurons deliver input to the next layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTimes {
    times: Vec<u32>,
    fired: Vec<bool>,
    t_max: u32,
}

impl SpikeTimes {
    /// Spike times where every neuron fired a real spike.
    pub fn new(times: Vec<u32>, t_max: u32) -> Result<Self> {
        let fired = vec![true; times.len()];
        Self::with_fired(times, fired, t_max)
    }

    pub fn with_fired(times: Vec<u32>, fired: Vec<bool>, t_max: u32) -> Result<Self> {
        if times.len() != fired.len() {
            return Err(Error::Structure(format!(
                "{} spike times but {} fired flags",
                times.len(),
                fired.len()
            )));
        }
        if let Some(&t) = times.iter().find(|&&t| t > t_max) {
            return Err(Error::InputDomain(format!("spike time {t} exceeds t_max {t_max}")));
        }
        if let Some(i) = (0..times.len()).find(|&i| !fired[i] && times[i] != t_max) {
            return Err(Error::InputDomain(format!(
                "neuron {i} did not fire but its time {} is not the t_max sentinel",
                times[i]
            )));
        }
        Ok(Self { times, fired, t_max })
    }

    pub(crate) fn from_parts_unchecked(times: Vec<u32>, fired: Vec<bool>, t_max: u32) -> Self {
        debug_assert_eq!(times.len(), fired.len());
        Self { times, fired, t_max }
    }

    pub fn times(&self) -> &[u32] {
        &self.times
    }

    pub fn fired(&self) -> &[bool] {
        &self.fired
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// True if no neuron emitted a real spike.
    pub fn all_silent(&self) -> bool {
        !self.fired.iter().any(|&f| f)
    }

    /// Number of real spikes emitted at or before `t`.
    pub fn count_until(&self, t: u32) -> usize {
        self.times
            .iter()
            .zip(&self.fired)
            .filter(|&(&time, &fired)| fired && time <= t)
            .count()
    }
}

/// Latency code of an image: `floor((i_max - I) / i_max * t_max)` per pixel.
pub fn encode_image(img: &IntensityImage, t_max: u32) -> Result<SpikeTimes> {
    if t_max == 0 {
        return Err(Error::Config("t_max must be at least 1".into()));
    }
    let i_max = u64::from(img.i_max);
    let times = img
        .pixels
        .iter()
        .map(|&p| {
            let p = u64::from(p);
            if p > i_max {
                return Err(Error::InputDomain(format!("intensity {p} above maximum {i_max}")));
            }
            // Exact integer floor of (i_max - p) * t_max / i_max.
            Ok(((i_max - p) * u64::from(t_max) / i_max) as u32)
        })
        .collect::<Result<Vec<_>>>()?;
    SpikeTimes::new(times, t_max)
}

/// Adds independent uniform noise in `[-J * i_max, J * i_max]` to every pixel,
/// then clamps to `[0, i_max]` and rounds to the nearest integer intensity.
pub fn add_jitter_noise<R: Rng + ?Sized>(
    img: &IntensityImage,
    level: f64,
    rng: &mut R,
) -> Result<IntensityImage> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Config(format!("jitter level {level} outside [0, 1]")));
    }
    let i_max = f64::from(img.i_max);
    let amplitude = level * i_max;
    let pixels = img
        .pixels
        .iter()
        .map(|&p| {
            let draw = if amplitude > 0.0 { rng.gen_range(-amplitude..=amplitude) } else { 0.0 };
            (f64::from(p) + draw).clamp(0.0, i_max).round() as u16
        })
        .collect();
    Ok(IntensityImage { pixels, width: img.width, height: img.height, i_max: img.i_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(p: u16) -> IntensityImage {
        IntensityImage::new(vec![p], 1, 1, 255).unwrap()
    }

    #[test]
    fn encode_extremes_and_midpoint() {
        assert_eq!(encode_image(&single(255), 256).unwrap().times(), &[0]);
        assert_eq!(encode_image(&single(0), 256).unwrap().times(), &[256]);
        // floor(155 * 256 / 255) = floor(155.607...)
        assert_eq!(encode_image(&single(100), 256).unwrap().times(), &[155]);
    }

    #[test]
    fn encoded_spikes_are_real() {
        let s = encode_image(&single(0), 256).unwrap();
        assert!(s.fired()[0]);
    }

    #[test]
    fn rejects_out_of_range_pixel() {
        assert!(matches!(
            IntensityImage::new(vec![0, 256], 2, 1, 255),
            Err(Error::InputDomain(_))
        ));
        assert!(matches!(IntensityImage::new(vec![0; 3], 2, 1, 255), Err(Error::Structure(_))));
    }

    #[test]
    fn rejects_zero_t_max() {
        assert!(matches!(encode_image(&single(3), 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_jitter_is_identity() {
        let img = IntensityImage::from_u8(&[0, 17, 128, 255], 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(add_jitter_noise(&img, 0.0, &mut rng).unwrap(), img);
    }

    #[test]
    fn full_jitter_clamps() {
        let img = IntensityImage::from_u8(&[255; 64], 8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noisy = add_jitter_noise(&img, 1.0, &mut rng).unwrap();
        assert!(noisy.pixels().iter().all(|&p| p <= 255));
    }

    #[test]
    fn jitter_bound_holds_over_many_draws() {
        // Mid-range pixel so that clamping never hides a violation.
        let img = IntensityImage::from_u8(&[128; 100], 10, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let noisy = add_jitter_noise(&img, 0.05, &mut rng).unwrap();
            for &p in noisy.pixels() {
                // 0.05 * 255 = 12.75, rounding can add at most half a level.
                assert!((f64::from(p) - 128.0).abs() <= 12.75 + 0.5);
            }
        }
    }

    #[test]
    fn jitter_rejects_bad_level() {
        let img = single(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(add_jitter_noise(&img, 1.5, &mut rng), Err(Error::Config(_))));
        assert!(matches!(add_jitter_noise(&img, -0.1, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn jitter_is_seed_deterministic() {
        let img = IntensityImage::from_u8(&[10, 90, 200, 250], 2, 2).unwrap();
        let a = add_jitter_noise(&img, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = add_jitter_noise(&img, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spike_times_validate_sentinel() {
        assert!(SpikeTimes::with_fired(vec![3], vec![false], 10).is_err());
        assert!(SpikeTimes::with_fired(vec![10], vec![false], 10).is_ok());
        assert!(SpikeTimes::new(vec![11], 10).is_err());
    }

    proptest::proptest! {
        #[test]
        fn encoding_is_monotone(a in 0u16..=255, b in 0u16..=255, t_max in 1u32..1000) {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let t_hi = encode_image(&single(hi), t_max).unwrap().times()[0];
            let t_lo = encode_image(&single(lo), t_max).unwrap().times()[0];
            proptest::prop_assert!(t_hi <= t_lo);
            proptest::prop_assert!(t_lo <= t_max);
        }
    }
}
