//! Central finite-difference gradient checking.

/// Step used for central differences.
pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` with central differences of `loss` around `point`,
/// over the coordinates accepted by `include`.
pub fn grad_check<F, I>(mut loss: F, point: &[f64], analytic: &[f64], include: I) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
    I: Fn(usize) -> bool,
{
    assert_eq!(point.len(), analytic.len(), "gradient length differs from point");
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for i in (0..x.len()).filter(|&i| include(i)) {
        x[i] = point[i] + STEP;
        let up = loss(&x);
        x[i] = point[i] - STEP;
        let down = loss(&x);
        x[i] = point[i];
        let numeric = (up - down) / (2.0 * STEP);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.checked == 1 {
            report = GradCheckReport {
                max_rel_error: err,
                worst: i,
                analytic: analytic[i],
                numeric,
                checked: report.checked,
            };
        }
    }
    report
}
