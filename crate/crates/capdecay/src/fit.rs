//! Small least-squares helpers on logarithmic axes.

#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Fit `ln y = intercept + slope * ln x` over the pairs with positive
/// finite coordinates.  Returns `None` with fewer than two usable pairs
/// or no spread in `x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut m = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite() {
            continue;
        }
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        m += 1.0;
    }
    if m < 2.0 {
        return None;
    }
    let det = m * sxx - sx * sx;
    if det.abs() < 1e-14 * (m * sxx).abs().max(1.0) {
        return None;
    }
    let slope = (m * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / m;
    Some(LineFit { slope, intercept })
}

#[derive(Debug, Clone, Copy)]
pub struct PowerLogFit {
    pub intercept: f64,
    /// Coefficient of `ln x`.
    pub log_coef: f64,
    /// Coefficient of `ln ln (1/x)`.
    pub loglog_coef: f64,
}

/// Fit `ln y = intercept + log_coef * ln x + loglog_coef * ln ln (1/x)`
/// by ridge-regularized least squares.
///
/// Only pairs with `y > 0` and `x < 1/e` enter (the second regressor
/// must be well defined and positive).  The two regressors are nearly
/// collinear on short ladders, hence the ridge; pass something like
/// `1e-9` to stabilize the normal equations without visibly biasing
/// the coefficients.
pub fn fit_power_log(xs: &[f64], ys: &[f64], ridge: f64) -> Option<PowerLogFit> {
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        if !(y > 0.0 && y.is_finite()) {
            continue;
        }
        if !(x > 0.0 && x < std::f64::consts::E.recip()) {
            continue;
        }
        let l = x.ln();
        let ll = (1.0 / x).ln().ln();
        rows.push([1.0, l, ll, y.ln()]);
    }
    if rows.len() < 3 {
        return None;
    }
    // Normal equations A^T A c = A^T b with ridge on the diagonal.
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for row in &rows {
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * row[3];
        }
    }
    for (i, row) in ata.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let c = solve3(ata, atb)?;
    Some(PowerLogFit {
        intercept: c[0],
        log_coef: c[1],
        loglog_coef: c[2],
    })
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_power() {
        let xs: Vec<f64> = (1..8).map(|k| 0.5f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn line_fit_skips_unusable_pairs() {
        let xs = [0.5, 0.25, 0.0, 0.125, -1.0];
        let ys = [2.0, 4.0, 9.0, 8.0, 3.0];
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-10);
    }

    #[test]
    fn line_fit_needs_spread() {
        assert!(fit_loglog(&[0.5, 0.5], &[1.0, 2.0]).is_none());
        assert!(fit_loglog(&[0.5], &[1.0]).is_none());
    }

    #[test]
    fn power_log_fit_separates_the_two_factors() {
        // y = x^(-1) * (ln(1/x))^2 on a geometric ladder.
        let xs: Vec<f64> = (2..12).map(|k| 0.6f64.powi(k) / 2.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.powf(-1.0) * (1.0 / x).ln().powi(2))
            .collect();
        let fit = fit_power_log(&xs, &ys, 1e-9).unwrap();
        assert!((fit.log_coef + 1.0).abs() < 0.02, "log {}", fit.log_coef);
        assert!(
            (fit.loglog_coef - 2.0).abs() < 0.05,
            "loglog {}",
            fit.loglog_coef
        );
    }

    #[test]
    fn power_log_fit_handles_pure_power() {
        let xs: Vec<f64> = (2..10).map(|k| 0.5f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 * x.powf(0.7)).collect();
        let fit = fit_power_log(&xs, &ys, 1e-9).unwrap();
        assert!((fit.log_coef - 0.7).abs() < 0.02);
        assert!(fit.loglog_coef.abs() < 0.05);
    }
}
