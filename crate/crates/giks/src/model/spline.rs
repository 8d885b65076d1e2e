use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Truncated power basis on [0,1]: `[1, t, .., t^d, (t-k_1)^d_+, ..]`.
/// Degree 2 with interior knots gives closed-form first derivatives and a
/// C1 curve including at the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineBasis {
    pub degree: usize,
    pub knots: Vec<f64>,
}

impl Default for SplineBasis {
    fn default() -> Self {
        SplineBasis { degree: 2, knots: vec![1.0 / 3.0, 2.0 / 3.0] }
    }
}

impl SplineBasis {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let basis = SplineBasis { degree, knots };
        basis.validate()?;
        Ok(basis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::Config("spline degree must be >= 1".into()));
        }
        for w in self.knots.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config("spline knots must be strictly increasing".into()));
            }
        }
        if self.knots.iter().any(|&k| !(k > 0.0 && k < 1.0)) {
            return Err(Error::Config("spline knots must lie in the open interval (0,1)".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.degree + 1 + self.knots.len()
    }

    fn check_domain(t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) || t.is_nan() {
            return Err(Error::Domain(format!("treatment {t} outside [0,1]")));
        }
        Ok(())
    }

    /// Basis vector at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        Self::check_domain(t)?;
        let mut out = Vec::with_capacity(self.dim());
        out.push(1.0);
        for p in 1..=self.degree {
            out.push(t.powi(p as i32));
        }
        for &k in &self.knots {
            let z = (t - k).max(0.0);
            out.push(z.powi(self.degree as i32));
        }
        Ok(out)
    }

    /// Element-wise d/dt of `eval`.
    pub fn deriv(&self, t: f64) -> Result<Vec<f64>> {
        Self::check_domain(t)?;
        let mut out = Vec::with_capacity(self.dim());
        out.push(0.0);
        for p in 1..=self.degree {
            out.push(p as f64 * t.powi(p as i32 - 1));
        }
        let d = self.degree as f64;
        for &k in &self.knots {
            let z = (t - k).max(0.0);
            out.push(d * z.powi(self.degree as i32 - 1));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_basis() -> SplineBasis {
        SplineBasis::default()
    }

    #[test]
    fn eval_at_zero() {
        let b = default_basis();
        assert_eq!(b.eval(0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn eval_at_half() {
        let b = default_basis();
        let v = b.eval(0.5).unwrap();
        let sixth = 0.5 - 1.0 / 3.0;
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 0.5);
        assert_eq!(v[2], 0.25);
        assert!((v[3] - sixth * sixth).abs() < 1e-15);
        assert_eq!(v[4], 0.0);
    }

    #[test]
    fn eval_at_one() {
        let b = default_basis();
        let v = b.eval(1.0).unwrap();
        let two_thirds = 1.0 - 1.0 / 3.0;
        let one_third = 1.0 - 2.0 / 3.0;
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[2], 1.0);
        assert!((v[3] - two_thirds * two_thirds).abs() < 1e-15);
        assert!((v[4] - one_third * one_third).abs() < 1e-15);
    }

    #[test]
    fn deriv_values() {
        let b = default_basis();
        assert_eq!(b.deriv(0.0).unwrap(), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        let v = b.deriv(0.5).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[2], 1.0);
        assert!((v[3] - 2.0 * (0.5 - 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(v[4], 0.0);
    }

    #[test]
    fn deriv_matches_finite_differences() {
        let b = default_basis();
        let h = 1e-5;
        for i in 0..=100 {
            let t = 0.0001 + 0.9998 * (i as f64 / 100.0);
            let fp = b.eval(t + h).unwrap();
            let fm = b.eval(t - h).unwrap();
            let d = b.deriv(t).unwrap();
            for j in 0..b.dim() {
                let fd = (fp[j] - fm[j]) / (2.0 * h);
                assert!(
                    (fd - d[j]).abs() <= 1e-6,
                    "t={t} j={j}: fd {fd} vs analytic {}",
                    d[j]
                );
            }
        }
    }

    #[test]
    fn domain_errors() {
        let b = default_basis();
        assert!(b.eval(-0.01).is_err());
        assert!(b.eval(1.01).is_err());
        assert!(b.deriv(2.0).is_err());
    }

    #[test]
    fn bad_knots_rejected() {
        assert!(SplineBasis::new(2, vec![0.5, 0.5]).is_err());
        assert!(SplineBasis::new(2, vec![0.0, 0.5]).is_err());
        assert!(SplineBasis::new(2, vec![0.5, 1.0]).is_err());
    }
}
