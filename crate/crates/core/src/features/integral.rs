use crate::geometry::GrayImage;

/// Summed-area table of a [`GrayImage`].
///
/// Stored with one row and column of zero padding so that any box sum is
/// four lookups without branching.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    // (width + 1) × (height + 1), entry [y+1][x+1] = Σ over [0..=x] × [0..=y]
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut table = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0.0;
            for x in 0..w {
                row_sum += img.get(x, y) as f64;
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
            }
        }
        Self { width: w, height: h, table }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over the inclusive rectangle `[0..=x] × [0..=y]`.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[(y + 1) * (self.width + 1) + x + 1]
    }

    /// Sum over columns `x0..x1` and rows `y0..y1` (half-open), clipped to the image.
    pub fn box_sum(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let cx = |v: i64| v.clamp(0, self.width as i64) as usize;
        let cy = |v: i64| v.clamp(0, self.height as i64) as usize;
        let (x0, x1, y0, y1) = (cx(x0), cx(x1), cy(y0), cy(y1));
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let s = self.width + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0] + self.table[y0 * s + x0]
    }

    /// Box of `rows × cols` pixels whose top-left pixel is `(row, col)`.
    #[inline]
    pub(crate) fn rect(&self, row: i64, col: i64, rows: i64, cols: i64) -> f64 {
        self.box_sum(col, row, col + cols, row + rows)
    }
}
