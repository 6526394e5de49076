use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::IntegralImage;

/// A 3x3 grid of equally sized cells; `(x, y)` is the grid's top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LbpBlock {
    pub x: usize,
    pub y: usize,
    pub cell_w: usize,
    pub cell_h: usize,
}

/// Neighbor cells clockwise from the top-left, as (column, row).
const NEIGHBORS: [(usize, usize); 8] = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

impl LbpBlock {
    pub fn width(&self) -> usize {
        3 * self.cell_w
    }

    pub fn height(&self) -> usize {
        3 * self.cell_h
    }

    pub fn fits(&self, w: usize, h: usize) -> bool {
        self.cell_w > 0 && self.cell_h > 0 && self.x + self.width() <= w && self.y + self.height() <= h
    }

    /// Code of this block placed at offset `(ox, oy)`; the caller guarantees bounds.
    ///
    /// All cells share one area, so comparing cell sums is the same as
    /// comparing cell means.
    #[inline]
    pub(crate) fn code_at(&self, ii: &IntegralImage, ox: usize, oy: usize) -> u8 {
        let (cw, ch) = (self.cell_w, self.cell_h);
        let (bx, by) = (ox + self.x, oy + self.y);
        let cell = |c: usize, r: usize| {
            let x = bx + c * cw;
            let y = by + r * ch;
            ii.rect_sum(x, y, x + cw, y + ch)
        };
        let center = cell(1, 1);
        NEIGHBORS.iter().enumerate().fold(
            0u8,
            |code, (bit, &(c, r))| {
                if cell(c, r) >= center {
                    code | (1 << bit)
                } else {
                    code
                }
            },
        )
    }
}

/// Multi-block LBP code: bit `i` is set when the i-th neighbor cell (clockwise
/// from top-left) has mean intensity at least that of the center cell.
pub fn lbp_code(ii: &IntegralImage, block: &LbpBlock) -> Result<u8> {
    if !block.fits(ii.width(), ii.height()) {
        return Err(Error::invalid(format!(
            "LBP block {block:?} outside {}x{} image",
            ii.width(),
            ii.height()
        )));
    }
    Ok(block.code_at(ii, 0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{integral, GrayImage};

    fn block() -> LbpBlock {
        LbpBlock {
            x: 0,
            y: 0,
            cell_w: 2,
            cell_h: 2,
        }
    }

    #[test]
    fn bright_center_gives_zero() {
        let img = GrayImage::from_fn(6, 6, |x, y| {
            if (2..4).contains(&x) && (2..4).contains(&y) {
                200
            } else {
                10
            }
        });
        assert_eq!(lbp_code(&integral(&img), &block()).unwrap(), 0);
    }

    #[test]
    fn dark_center_gives_all_ones() {
        let img = GrayImage::from_fn(6, 6, |x, y| {
            if (2..4).contains(&x) && (2..4).contains(&y) {
                10
            } else {
                200
            }
        });
        assert_eq!(lbp_code(&integral(&img), &block()).unwrap(), 255);
    }

    #[test]
    fn ties_set_bits() {
        let img = GrayImage::filled(6, 6, 90);
        assert_eq!(lbp_code(&integral(&img), &block()).unwrap(), 255);
    }

    #[test]
    fn bit_order_is_clockwise_from_top_left() {
        // only the top-middle and left-middle cells are bright
        let img = GrayImage::from_fn(6, 6, |x, y| {
            let (c, r) = (x / 2, y / 2);
            if (c, r) == (1, 0) || (c, r) == (0, 1) {
                200
            } else if (c, r) == (1, 1) {
                100
            } else {
                0
            }
        });
        assert_eq!(lbp_code(&integral(&img), &block()).unwrap(), 0b1000_0010);
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let img = GrayImage::filled(5, 6, 1);
        assert!(matches!(
            lbp_code(&integral(&img), &block()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
