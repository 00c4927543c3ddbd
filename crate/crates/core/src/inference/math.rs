//! Log-density primitives for the change-point model.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

pub fn ln_factorial(w: u32) -> f64 {
    ln_gamma(f64::from(w) + 1.0)
}

/// `w ln(lambda) - lambda - ln(w!)`
pub fn poisson_logpmf(w: u32, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::Domain(format!("poisson rate must be positive, got {lambda}")));
    }
    Ok(f64::from(w) * lambda.ln() - lambda - ln_factorial(w))
}

/// `a ln(b) + (a-1) ln(x) - b x - ln(Gamma(a))`, shape/rate parameterization.
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if x <= 0.0 || shape <= 0.0 || rate <= 0.0 {
        return Err(Error::Domain(format!(
            "gamma density needs positive arguments, got x={x}, shape={shape}, rate={rate}"
        )));
    }
    Ok(shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape))
}

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    if sd <= 0.0 {
        return Err(Error::Domain(format!("normal sd must be positive, got {sd}")));
    }
    let z = (x - mean) / sd;
    Ok(-0.5 * LN_2PI - sd.ln() - 0.5 * z * z)
}

pub fn exponential_logpdf(x: f64, rate: f64) -> Result<f64> {
    if x < 0.0 || rate <= 0.0 {
        return Err(Error::Domain(format!(
            "exponential density needs x >= 0 and positive rate, got x={x}, rate={rate}"
        )));
    }
    Ok(rate.ln() - rate * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn poisson_zero_count_is_minus_lambda() {
        assert_abs_diff_eq!(poisson_logpmf(0, 2.5).unwrap(), -2.5, epsilon = 1e-12);
    }

    #[test]
    fn poisson_matches_closed_form() {
        // ln Pois(2 | 2) = 2 ln 2 - 2 - ln 2 = ln 2 - 2
        assert_abs_diff_eq!(
            poisson_logpmf(2, 2.0).unwrap(),
            2.0_f64.ln() - 2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(poisson_logpmf(1, 1.0).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn poisson_matches_recurrence_oracle() {
        // p(0) = e^-lambda, p(w) = p(w-1) * lambda / w, independent of ln-gamma.
        let lambda = 2.0f64;
        let mut pmf = (-lambda).exp();
        for w in 1..=12u32 {
            pmf *= lambda / f64::from(w);
            assert_abs_diff_eq!(
                poisson_logpmf(w, lambda).unwrap(),
                pmf.ln(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn poisson_rejects_nonpositive_rate() {
        assert!(poisson_logpmf(1, 0.0).is_err());
        assert!(poisson_logpmf(1, -3.0).is_err());
    }

    #[test]
    fn gamma_exponential_special_case() {
        // Gamma(1,1) is Exp(1): density at 1 is e^-1.
        assert_abs_diff_eq!(gamma_logpdf(1.0, 1.0, 1.0).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_matches_high_precision_value() {
        // ln Gamma(2.5) = ln(3/4) + ln(pi)/2 exactly, since Gamma(2.5) = (3/4) sqrt(pi).
        let ln_gamma_25 = (3.0f64 / 4.0).ln() + std::f64::consts::PI.ln() / 2.0;
        let expected = 1.5 * 2.5f64.ln() - 2.5 - ln_gamma_25;
        assert_abs_diff_eq!(expected, -1.4102467726616866, epsilon = 1e-12);
        assert_abs_diff_eq!(
            gamma_logpdf(2.5, 2.5, 1.0).unwrap(),
            expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn gamma_rejects_nonpositive_arguments() {
        assert!(gamma_logpdf(0.0, 1.0, 1.0).is_err());
        assert!(gamma_logpdf(1.0, 0.0, 1.0).is_err());
        assert!(gamma_logpdf(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn normal_peak_value() {
        let at_mean = normal_logpdf(0.0, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(
            at_mean,
            -(0.5 * (2.0 * std::f64::consts::PI).ln()) - 2.0f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn exponential_density() {
        assert_abs_diff_eq!(exponential_logpdf(1.0, 1.0).unwrap(), -1.0, epsilon = 1e-12);
        assert!(exponential_logpdf(-1.0, 1.0).is_err());
    }
}
