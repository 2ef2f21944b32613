//! Orthonormal 8×8 DCT-II applied block-wise.
//!
//! Coefficient `(u, v)` of a block is stored at block-local row `u`, column
//! `v`, where `u` indexes vertical frequency and `v` horizontal frequency.

use std::sync::OnceLock;

use super::color::Plane;
use crate::error::{Error, Result};

pub const BLOCK: usize = 8;

/// `basis()[u][x] = alpha(u) * cos((2x + 1) u pi / 16)`.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut a = [[0.0; BLOCK]; BLOCK];
        for (u, row) in a.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / (2 * BLOCK) as f64)
                        .cos();
            }
        }
        a
    })
}

/// Pixel-domain pattern of a single unit coefficient at `(u, v)`.
pub fn basis_pattern(u: usize, v: usize) -> [f64; 64] {
    let a = basis();
    let mut out = [0.0; 64];
    for x in 0..BLOCK {
        for y in 0..BLOCK {
            out[x * BLOCK + y] = a[u][x] * a[v][y];
        }
    }
    out
}

/// Forward transform of one row-major block: `A · X · Aᵀ`.
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let a = basis();
    let mut tmp = [0.0; 64];
    // tmp = A · X
    for u in 0..BLOCK {
        for y in 0..BLOCK {
            let mut s = 0.0;
            for x in 0..BLOCK {
                s += a[u][x] * block[x * BLOCK + y];
            }
            tmp[u * BLOCK + y] = s;
        }
    }
    let mut out = [0.0; 64];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for y in 0..BLOCK {
                s += tmp[u * BLOCK + y] * a[v][y];
            }
            out[u * BLOCK + v] = s;
        }
    }
    out
}

/// Inverse transform: `Aᵀ · C · A`.
pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let a = basis();
    let mut tmp = [0.0; 64];
    for x in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for u in 0..BLOCK {
                s += a[u][x] * coeffs[u * BLOCK + v];
            }
            tmp[x * BLOCK + v] = s;
        }
    }
    let mut out = [0.0; 64];
    for x in 0..BLOCK {
        for y in 0..BLOCK {
            let mut s = 0.0;
            for v in 0..BLOCK {
                s += tmp[x * BLOCK + v] * a[v][y];
            }
            out[x * BLOCK + y] = s;
        }
    }
    out
}

fn check_dims(plane: &Plane) -> Result<()> {
    if plane.height % BLOCK != 0 || plane.width % BLOCK != 0 {
        return Err(Error::Dimension(format!(
            "plane {}x{} is not divisible into {BLOCK}x{BLOCK} blocks",
            plane.height, plane.width
        )));
    }
    Ok(())
}

pub(crate) fn read_block(plane: &Plane, bi: usize, bj: usize) -> [f64; 64] {
    let mut block = [0.0; 64];
    for x in 0..BLOCK {
        let row = (bi * BLOCK + x) * plane.width + bj * BLOCK;
        block[x * BLOCK..(x + 1) * BLOCK].copy_from_slice(&plane.data[row..row + BLOCK]);
    }
    block
}

pub(crate) fn write_block(plane: &mut Plane, bi: usize, bj: usize, block: &[f64; 64]) {
    for x in 0..BLOCK {
        let row = (bi * BLOCK + x) * plane.width + bj * BLOCK;
        plane.data[row..row + BLOCK].copy_from_slice(&block[x * BLOCK..(x + 1) * BLOCK]);
    }
}

fn map_blocks(plane: &Plane, f: fn(&[f64; 64]) -> [f64; 64]) -> Result<Plane> {
    check_dims(plane)?;
    let mut out = Plane::zeros(plane.height, plane.width);
    for bi in 0..plane.height / BLOCK {
        for bj in 0..plane.width / BLOCK {
            let block = read_block(plane, bi, bj);
            write_block(&mut out, bi, bj, &f(&block));
        }
    }
    Ok(out)
}

/// Replaces each non-overlapping 8×8 block with its DCT-II coefficients.
pub fn block_dct2d(plane: &Plane) -> Result<Plane> {
    map_blocks(plane, dct8x8)
}

pub fn block_idct2d(plane: &Plane) -> Result<Plane> {
    map_blocks(plane, idct8x8)
}
