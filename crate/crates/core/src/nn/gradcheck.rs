//! Central finite-difference gradient checking.
//!
//! Piecewise-linear layers (ReLU, max-pool) have kinks where the derivative
//! jumps. A probe reports a fingerprint of its activation pattern and any
//! coordinate whose ±step evaluation changes the pattern is skipped rather
//! than compared, since the finite difference there straddles two linear
//! pieces.

pub const FD_STEP: f64 = 1e-5;

/// With the activation pattern fixed, every layer here is linear (or, for
/// the loss, quadratic) in any single coordinate, so central differences are
/// exact for any step that stays off a kink. Wide steps keep cancellation
/// error far below the tolerance for small gradients of a large objective;
/// narrower ones are tried when a wide step crosses a kink.
pub const STEP_LADDER: [f64; 5] = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5];

/// Denominator floor for relative errors of near-zero gradients.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub value: f64,
    /// Fingerprint of every discrete choice made in the forward pass.
    pub pattern: u64,
}

impl Probe {
    pub fn smooth(value: f64) -> Self {
        Probe { value, pattern: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coord: Option<usize>,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tolerance
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst_coord = other.worst_coord;
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        GradCheckReport { max_rel_error: 0.0, worst_coord: None, checked: 0, skipped: 0 }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic[i]` against `(f(x + h e_i) − f(x − h e_i)) / 2h` for each
/// `i` in `coords`.
pub fn gradient_check<F>(f: F, x: &[f64], analytic: &[f64], coords: &[usize], step: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> Probe,
{
    gradient_check_steps(f, x, analytic, coords, &[step])
}

/// Like [`gradient_check`], but each coordinate uses the first of `steps`
/// whose ±h evaluations keep the base activation pattern; it is skipped only
/// when every step crosses a kink.
pub fn gradient_check_steps<F>(mut f: F, x: &[f64], analytic: &[f64], coords: &[usize], steps: &[f64]) -> GradCheckReport
where
    F: FnMut(&[f64]) -> Probe,
{
    assert_eq!(x.len(), analytic.len(), "gradient length must match the point");
    let base = f(x).pattern;
    let mut point = x.to_vec();
    let mut report = GradCheckReport::default();
    for &i in coords {
        let orig = point[i];
        let mut numeric = None;
        for &step in steps {
            point[i] = orig + step;
            let plus = f(&point);
            point[i] = orig - step;
            let minus = f(&point);
            point[i] = orig;
            if plus.pattern == base && minus.pattern == base {
                numeric = Some((plus.value - minus.value) / (2.0 * step));
                break;
            }
        }
        let Some(numeric) = numeric else {
            report.skipped += 1;
            continue;
        };
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if report.worst_coord.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_coord = Some(i);
        }
    }
    report
}

/// Order-sensitive fingerprint of ReLU masks and pooling choices.
#[derive(Debug, Default, Clone)]
pub struct PatternHasher(std::hash::DefaultHasher);

impl PatternHasher {
    pub fn positives(&mut self, values: &[f64]) {
        use std::hash::Hasher;
        let mut word = 0u64;
        for (k, &v) in values.iter().enumerate() {
            word = (word << 1) | (v > 0.0) as u64;
            if k % 64 == 63 {
                self.0.write_u64(word);
                word = 0;
            }
        }
        self.0.write_u64(word);
        self.0.write_usize(values.len());
    }

    pub fn indices(&mut self, idx: &[usize]) {
        use std::hash::Hasher;
        for &i in idx {
            self.0.write_usize(i);
        }
    }

    pub fn finish(&self) -> u64 {
        use std::hash::Hasher;
        self.0.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let w = [0.3, -1.2, 2.5, 0.7];
        let f = |x: &[f64]| Probe::smooth(x.iter().zip(&w).map(|(a, b)| a * b).sum());
        let r = gradient_check(f, &[1.0, 2.0, -3.0, 0.5], &w, &[0, 1, 2, 3], FD_STEP);
        assert_eq!(r.checked, 4);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_detected() {
        let f = |x: &[f64]| Probe::smooth(x[0] * x[0]);
        let r = gradient_check(f, &[3.0], &[5.0], &[0], FD_STEP);
        assert!(r.max_rel_error > 0.1);
        assert_eq!(r.worst_coord, Some(0));
    }

    #[test]
    fn kink_crossings_are_skipped() {
        let f = |x: &[f64]| {
            let mut h = PatternHasher::default();
            h.positives(x);
            Probe { value: x[0].max(0.0), pattern: h.finish() }
        };
        let r = gradient_check(f, &[1e-7], &[1.0], &[0], FD_STEP);
        assert_eq!((r.checked, r.skipped), (0, 1));
        assert!(!r.passed(1e-6));
    }
}
