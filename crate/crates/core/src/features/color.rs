//! HSV statistics and greenness over a segment's colour samples.

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HsvColor {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Standard hexcone RGB to HSV. Achromatic colours get hue 0.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> HsvColor {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let mut h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    if h < 0.0 {
        h += 360.0;
    }
    if h >= 360.0 {
        h -= 360.0;
    }
    HsvColor { h, s, v: max }
}

pub const HUE_BINS: usize = 15;
pub const SAT_BINS: usize = 5;
pub const VAL_BINS: usize = 5;

/// Uniform bin over `[0, range)`; the last bin also takes the closed end.
fn bin(x: f64, range: f64, bins: usize) -> usize {
    ((x / range * bins as f64).floor() as usize).min(bins - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorFeatures {
    pub mean_hsv: [f64; 3],
    pub var_hsv: [f64; 3],
    /// 15 hue bins, then 5 saturation bins, then 5 value bins; each channel
    /// sums to 1.
    pub histogram: [f64; HUE_BINS + SAT_BINS + VAL_BINS],
    pub greenness: f64,
}

/// Statistics over every sample, each sample weighted equally.
///
/// Hue mean and variance are linear (not circular). Greenness is
/// `G - 0.39 R - 0.61 B` on the mean RGB, channels in 0..=255.
pub fn color_features<'a>(samples: impl IntoIterator<Item = &'a [u8; 3]>) -> ColorFeatures {
    let mut n = 0usize;
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    let mut rgb_sum = [0.0; 3];
    let mut histogram = [0.0; HUE_BINS + SAT_BINS + VAL_BINS];
    for rgb in samples {
        let hsv = rgb_to_hsv(*rgb);
        for (k, x) in [hsv.h, hsv.s, hsv.v].into_iter().enumerate() {
            sum[k] += x;
            sum_sq[k] += x * x;
        }
        for k in 0..3 {
            rgb_sum[k] += rgb[k] as f64;
        }
        histogram[bin(hsv.h, 360.0, HUE_BINS)] += 1.0;
        histogram[HUE_BINS + bin(hsv.s, 1.0, SAT_BINS)] += 1.0;
        histogram[HUE_BINS + SAT_BINS + bin(hsv.v, 1.0, VAL_BINS)] += 1.0;
        n += 1;
    }
    if n == 0 {
        return ColorFeatures {
            mean_hsv: [0.0; 3],
            var_hsv: [0.0; 3],
            histogram,
            greenness: 0.0,
        };
    }
    let nf = n as f64;
    let mean_hsv = sum.map(|s| s / nf);
    let mut var_hsv = [0.0; 3];
    for k in 0..3 {
        var_hsv[k] = (sum_sq[k] / nf - mean_hsv[k] * mean_hsv[k]).max(0.0);
    }
    histogram.iter_mut().for_each(|h| *h /= nf);
    let [r, g, b] = rgb_sum.map(|s| s / nf);
    ColorFeatures {
        mean_hsv,
        var_hsv,
        histogram,
        greenness: g - 0.39 * r - 0.61 * b,
    }
}
