//! DCT-domain preprocessing of RGB images: color conversion, block DCT,
//! band regrouping and per-channel normalization.

mod cache;
mod color;
mod dct;
mod regroup;
mod stats;

pub use cache::TensorCache;
pub use color::{rgb_to_ycbcr, rgb_to_ycbcr_pixel, ImageRgb, ImageYcbcr, Plane};
pub use dct::{basis_pattern, block_dct2d, block_idct2d, dct8x8, idct8x8, BLOCK};
pub use regroup::{channel_index, regroup, ungroup, FrequencyTensor, BANDS, CHANNELS, PLANES};
pub use stats::{
    compute_channel_stats, normalize, ChannelStats, StatsAccumulator, EPSILON_STD, LAYOUT,
};

use crate::error::Result;

/// Full preprocessing path for one image.
pub fn preprocess_image(img: &ImageRgb, stats: Option<&ChannelStats>) -> Result<FrequencyTensor> {
    img.check_block_aligned()?;
    let mut ycc = rgb_to_ycbcr(img);
    center_chroma(&mut ycc);
    let [y, cb, cr] = &ycc.planes;
    let coeffs = [block_dct2d(y)?, block_dct2d(cb)?, block_dct2d(cr)?];
    let t = regroup(&coeffs)?;
    match stats {
        Some(s) => normalize(&t, s),
        None => Ok(t),
    }
}

/// Removes the 128 chroma offset so achromatic content carries no chroma DC.
pub fn center_chroma(ycc: &mut ImageYcbcr) {
    for plane in &mut ycc.planes[1..] {
        plane.data.iter_mut().for_each(|v| *v -= CHROMA_OFFSET);
    }
}

pub const CHROMA_OFFSET: f64 = 128.0;

/// Mean squared coefficient per band of one plane, averaged over blocks:
/// an 8×8 grid indexed `[u][v]`.
pub fn band_energy(t: &FrequencyTensor, plane: usize) -> [[f64; BLOCK]; BLOCK] {
    let mut out = [[0.0; BLOCK]; BLOCK];
    let n = (t.height() * t.width()) as f64;
    for (u, row) in out.iter_mut().enumerate() {
        for (v, e) in row.iter_mut().enumerate() {
            let c = channel_index(plane, u, v);
            *e = t.channel(c).map(|x| x * x).sum::<f64>() / n;
        }
    }
    out
}
