//! Tiny dense linear algebra for the low-dimensional systems the solvers
//! assemble (n + p <= 8 or so). Row-major matrices.

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
#[allow(clippy::needless_range_loop)] // index loops mirror the textbook elimination
pub(crate) fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for col in 0..n {
        let (pivot, pmax) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if pmax < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= factor * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Least-squares solution of an overdetermined `a x = b` through the
/// normal equations; adequate at desk scale.
#[allow(clippy::needless_range_loop)] // index loops mirror the textbook normal equations
pub(crate) fn lstsq(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let rows = a.len();
    if rows == 0 {
        return Some(Vec::new());
    }
    let cols = a[0].len();
    if cols == 0 {
        return Some(Vec::new());
    }
    let mut ata = vec![vec![0.0; cols]; cols];
    let mut atb = vec![0.0; cols];
    for r in 0..rows {
        for i in 0..cols {
            atb[i] += a[r][i] * b[r];
            for j in 0..cols {
                ata[i][j] += a[r][i] * a[r][j];
            }
        }
    }
    // Light Tikhonov floor keeps near-singular active sets solvable.
    for i in 0..cols {
        ata[i][i] += 1e-12;
    }
    solve_dense(&ata, &atb)
}
