//! Minimal row-major f64 matrix with the three GEMM shapes the training
//! loops need. The multiply itself is delegated to `matrixmultiply`, which
//! is cache-blocked and deterministic for a fixed shape on a given build.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    /// Single-row matrix borrowing semantics: copies the slice.
    pub fn from_row(row: &[f64]) -> Self {
        Mat::from_vec(1, row.len(), row.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Horizontally concatenate two matrices with equal row counts.
    pub fn hconcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "hconcat row mismatch");
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            out.row_mut(i)[..self.cols].copy_from_slice(self.row(i));
            out.row_mut(i)[self.cols..].copy_from_slice(other.row(i));
        }
        out
    }

    /// Columns `[lo, hi)` as a new matrix.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Mat {
        assert!(lo <= hi && hi <= self.cols, "column slice out of range");
        let mut out = Mat::zeros(self.rows, hi - lo);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[lo..hi]);
        }
        out
    }

    /// Vertically stack two matrices with equal column counts.
    pub fn vconcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "vconcat column mismatch");
        let mut data = Vec::with_capacity((self.rows + other.rows) * self.cols);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Mat::from_vec(self.rows + other.rows, self.cols, data)
    }

    /// `self (m x k) * b (k x n)`.
    pub fn matmul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows, "matmul inner dimension mismatch");
        let mut c = Mat::zeros(self.rows, b.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                b.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                b.data.as_ptr(),
                b.cols as isize,
                1,
                0.0,
                c.data.as_mut_ptr(),
                c.cols as isize,
                1,
            );
        }
        c
    }

    /// `self (m x k) * b^T` where `b` is `n x k`.
    pub fn matmul_bt(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "matmul_bt inner dimension mismatch");
        let mut c = Mat::zeros(self.rows, b.rows);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                b.rows,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                b.data.as_ptr(),
                1,
                b.cols as isize,
                0.0,
                c.data.as_mut_ptr(),
                c.cols as isize,
                1,
            );
        }
        c
    }

    /// `self (m x k) * w` where `w` is a row-major `k x n` slice.
    pub fn matmul_slice(&self, w: &[f64], n: usize) -> Mat {
        assert_eq!(self.cols * n, w.len(), "matmul_slice shape mismatch");
        let mut c = Mat::zeros(self.rows, n);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                n,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                w.as_ptr(),
                n as isize,
                1,
                0.0,
                c.data.as_mut_ptr(),
                c.cols as isize,
                1,
            );
        }
        c
    }

    /// `self (m x k) * w^T` where `w` is a row-major `n x k` slice.
    pub fn matmul_bt_slice(&self, w: &[f64], n: usize) -> Mat {
        assert_eq!(self.cols * n, w.len(), "matmul_bt_slice shape mismatch");
        let mut c = Mat::zeros(self.rows, n);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                n,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                w.as_ptr(),
                1,
                self.cols as isize,
                0.0,
                c.data.as_mut_ptr(),
                c.cols as isize,
                1,
            );
        }
        c
    }

    /// `self^T * b` where `self` is `m x k` and `b` is `m x n`.
    pub fn matmul_at(&self, b: &Mat) -> Mat {
        assert_eq!(self.rows, b.rows, "matmul_at inner dimension mismatch");
        let mut c = Mat::zeros(self.cols, b.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                b.cols,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                b.data.as_ptr(),
                b.cols as isize,
                1,
                0.0,
                c.data.as_mut_ptr(),
                c.cols as isize,
                1,
            );
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Mat::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        let c = a.matmul(&b);
        assert_eq!(c.as_slice(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let a = Mat::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let b = Mat::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.25).collect());
        // a * b^T vs manual
        let c = a.matmul_bt(&b);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|k| a.row(i)[k] * b.row(j)[k]).sum();
                assert!((c.row(i)[j] - want).abs() < 1e-12);
            }
        }
        // a^T * d where d is 2 x 4
        let d = Mat::from_vec(2, 4, (0..8).map(|i| 1.0 - i as f64).collect());
        let e = a.matmul_at(&d);
        assert_eq!((e.rows(), e.cols()), (3, 4));
        for i in 0..3 {
            for j in 0..4 {
                let want: f64 = (0..2).map(|k| a.row(k)[i] * d.row(k)[j]).sum();
                assert!((e.row(i)[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Mat::from_vec(2, 1, vec![9.0, 8.0]);
        let c = a.hconcat(&b);
        assert_eq!(c.row(0), &[1.0, 2.0, 9.0]);
        assert_eq!(c.row(1), &[3.0, 4.0, 8.0]);
        assert_eq!(c.slice_cols(0, 2).as_slice(), a.as_slice());
        assert_eq!(c.slice_cols(2, 3).as_slice(), b.as_slice());
    }
}
