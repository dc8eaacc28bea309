//! Tridiagonal kernels shared by the spectral and evolution solvers.

/// Solves `A x = b` for tridiagonal `A` (sub-diagonal `a[1..]`, diagonal `b`,
/// super-diagonal `c[..n-1]`) by the Thomas algorithm. Returns `None` on a
/// zero pivot.
pub fn solve(a: &[f64], b: &[f64], c: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut piv = b[0];
    if piv == 0.0 || !piv.is_finite() {
        return None;
    }
    cp[0] = c[0] / piv;
    dp[0] = rhs[0] / piv;
    for i in 1..n {
        piv = b[i] - a[i] * cp[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        cp[i] = if i + 1 < n { c[i] / piv } else { 0.0 };
        dp[i] = (rhs[i] - a[i] * dp[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        dp[i] -= cp[i] * dp[i + 1];
    }
    Some(dp)
}

/// Number of eigenvalues strictly below `x` of the symmetric tridiagonal
/// matrix with diagonal `d` and off-diagonal `e` (`e[i]` couples i and i+1).
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let qq = if q == 0.0 {
            f64::EPSILON * (e[i - 1].abs() + 1e-300)
        } else {
            q
        };
        q = d[i] - x - e[i - 1] * e[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k` smallest eigenvalues, ascending, by bisection on Sturm counts.
pub fn lowest_eigenvalues(d: &[f64], e: &[f64], k: usize) -> Vec<f64> {
    let n = d.len();
    let k = k.min(n);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let rad =
            if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - rad);
        hi = hi.max(d[i] + rad);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    (0..k)
        .map(|j| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let w = b - a;
                if w <= 2.0 * f64::EPSILON * a.abs().max(b.abs())
                    || w <= 1e-3 * f64::EPSILON * scale
                {
                    break;
                }
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if sturm_count(d, e, mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Eigenvector for an eigenvalue estimate `lambda` by inverse iteration.
/// Returns the unit vector and the residual `‖A x − λ x‖`.
pub fn inverse_iteration(d: &[f64], e: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = d.len();
    let scale = d.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let shift = lambda + 1e-10 * scale.min(lambda.abs().max(1e-12));
    let sub: Vec<f64> = std::iter::once(0.0).chain(e.iter().copied()).collect();
    let diag: Vec<f64> = d.iter().map(|v| v - shift).collect();
    let sup: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.01 * ((i * 7919) % 13) as f64)
        .collect();
    normalize(&mut x);
    for _ in 0..6 {
        match solve(&sub, &diag, &sup, &x) {
            Some(y) => {
                x = y;
                normalize(&mut x);
            }
            None => break,
        }
    }
    let mut res = 0.0;
    for i in 0..n {
        let mut ax = d[i] * x[i];
        if i > 0 {
            ax += e[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            ax += e[i] * x[i + 1];
        }
        res += (ax - lambda * x[i]).powi(2);
    }
    (x, res.sqrt())
}

fn normalize(x: &mut [f64]) {
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
}
