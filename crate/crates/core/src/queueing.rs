//! Closed-form steady-state analytics for a single-server queue with
//! Poisson arrivals and exponential service times (M/M/1).
//!
//! Everything here is exact arithmetic on the classical formulas. The
//! stability boundary is enforced up front: asking for a steady-state
//! quantity of a saturated queue is an error, never a NaN.

use thiserror::Error;

/// Errors raised by parameter construction and metric evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueingError {
    #[error("arrival rate must be finite and nonnegative, got {0}")]
    InvalidArrivalRate(f64),
    #[error("service rate must be finite and positive, got {0}")]
    InvalidServiceRate(f64),
    #[error(
        "saturated queue: arrival rate {arrival_rate} is not below service rate {service_rate} \
         (utilization {utilization})"
    )]
    Saturated {
        arrival_rate: f64,
        service_rate: f64,
        utilization: f64,
    },
}

/// Arrival and service rates of a single station, in jobs per unit time.
///
/// Constructing a `QueueParameters` validates the rates; it does not require
/// stability. Operations that only exist in steady state return
/// [`QueueingError::Saturated`] when `arrival_rate >= service_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParameters {
    arrival_rate: f64,
    service_rate: f64,
}

/// The standard steady-state summary of one station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateMetrics {
    /// Server utilization, rho = lambda / mu.
    pub utilization: f64,
    /// Mean number of jobs in the system (queue plus server), N.
    pub mean_in_system: f64,
    /// Mean time a job spends in the system, T.
    pub mean_response_time: f64,
    /// Mean time a job waits before service starts, W.
    pub mean_wait: f64,
    /// Mean number of jobs waiting (excluding the one in service), N_Q.
    pub mean_queue_length: f64,
    /// Probability the system is empty, P0.
    pub prob_empty: f64,
}

/// Probabilities of the states `0..n`, a truncated view of the geometric
/// steady-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    probabilities: Vec<f64>,
}

impl StateDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Total probability mass covered by the truncated range.
    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Mean of the truncated distribution, sum of i * p_i.
    pub fn truncated_mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| i as f64 * p)
            .sum()
    }
}

impl QueueParameters {
    pub fn new(arrival_rate: f64, service_rate: f64) -> Result<Self, QueueingError> {
        if !arrival_rate.is_finite() || arrival_rate < 0.0 {
            return Err(QueueingError::InvalidArrivalRate(arrival_rate));
        }
        if !service_rate.is_finite() || service_rate <= 0.0 {
            return Err(QueueingError::InvalidServiceRate(service_rate));
        }
        Ok(Self {
            arrival_rate,
            service_rate,
        })
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }

    pub fn service_rate(&self) -> f64 {
        self.service_rate
    }

    /// Offered load rho = lambda / mu. Defined for any valid rates, including
    /// saturated ones.
    pub fn utilization(&self) -> f64 {
        self.arrival_rate / self.service_rate
    }

    /// True when the queue has a steady state, i.e. lambda < mu.
    pub fn is_stable(&self) -> bool {
        self.arrival_rate < self.service_rate
    }

    fn require_stable(&self) -> Result<(), QueueingError> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(QueueingError::Saturated {
                arrival_rate: self.arrival_rate,
                service_rate: self.service_rate,
                utilization: self.utilization(),
            })
        }
    }

    /// Steady-state probability of exactly `state` jobs in the system,
    /// P_i = (1 - rho) * rho^i.
    pub fn state_probability(&self, state: usize) -> Result<f64, QueueingError> {
        self.require_stable()?;
        let rho = self.utilization();
        let power = if state <= i32::MAX as usize {
            rho.powi(state as i32)
        } else {
            0.0
        };
        Ok((1.0 - rho) * power)
    }

    /// Probabilities of states `0..states`.
    pub fn state_distribution(&self, states: usize) -> Result<StateDistribution, QueueingError> {
        self.require_stable()?;
        let rho = self.utilization();
        let base = 1.0 - rho;
        let mut probabilities = Vec::with_capacity(states);
        let mut power = 1.0;
        for _ in 0..states {
            probabilities.push(base * power);
            power *= rho;
        }
        Ok(StateDistribution { probabilities })
    }

    /// Mean number in system, N = rho / (1 - rho).
    pub fn mean_in_system(&self) -> Result<f64, QueueingError> {
        self.require_stable()?;
        let rho = self.utilization();
        Ok(rho / (1.0 - rho))
    }

    /// Mean response time, T = 1 / (mu - lambda).
    pub fn mean_response_time(&self) -> Result<f64, QueueingError> {
        self.require_stable()?;
        Ok(1.0 / (self.service_rate - self.arrival_rate))
    }

    /// Mean waiting time before service, W = rho / (mu - lambda).
    pub fn mean_wait(&self) -> Result<f64, QueueingError> {
        self.require_stable()?;
        Ok(self.utilization() / (self.service_rate - self.arrival_rate))
    }

    /// Mean queue length excluding the job in service, N_Q = lambda * W.
    pub fn mean_queue_length(&self) -> Result<f64, QueueingError> {
        Ok(self.arrival_rate * self.mean_wait()?)
    }

    /// Probability of an empty system, P0 = 1 - rho.
    pub fn prob_empty(&self) -> Result<f64, QueueingError> {
        self.require_stable()?;
        Ok(1.0 - self.utilization())
    }

    /// All steady-state quantities in one bundle.
    pub fn metrics(&self) -> Result<SteadyStateMetrics, QueueingError> {
        Ok(SteadyStateMetrics {
            utilization: self.utilization(),
            mean_in_system: self.mean_in_system()?,
            mean_response_time: self.mean_response_time()?,
            mean_wait: self.mean_wait()?,
            mean_queue_length: self.mean_queue_length()?,
            prob_empty: self.prob_empty()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(lambda: f64, mu: f64) -> QueueParameters {
        QueueParameters::new(lambda, mu).unwrap()
    }

    fn assert_close(actual: f64, expected: f64, rel_tol: f64) {
        let scale = expected.abs().max(1e-300);
        assert!(
            (actual - expected).abs() / scale <= rel_tol,
            "got {actual}, want {expected} (rel tol {rel_tol})"
        );
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(matches!(
            QueueParameters::new(-1.0, 32.0),
            Err(QueueingError::InvalidArrivalRate(_))
        ));
        assert!(matches!(
            QueueParameters::new(f64::NAN, 32.0),
            Err(QueueingError::InvalidArrivalRate(_))
        ));
        assert!(matches!(
            QueueParameters::new(5.0, 0.0),
            Err(QueueingError::InvalidServiceRate(_))
        ));
        assert!(matches!(
            QueueParameters::new(5.0, f64::INFINITY),
            Err(QueueingError::InvalidServiceRate(_))
        ));
    }

    #[test]
    fn stability_boundary() {
        assert!(params(30.0, 32.0).is_stable());
        assert!(!params(32.0, 32.0).is_stable());
        assert!(!params(33.0, 32.0).is_stable());
        assert!(params(0.0, 32.0).is_stable());
    }

    #[test]
    fn saturated_metrics_are_errors() {
        let p = params(32.0, 32.0);
        for result in [
            p.mean_in_system(),
            p.mean_response_time(),
            p.mean_wait(),
            p.mean_queue_length(),
            p.prob_empty(),
            p.state_probability(0),
        ] {
            assert!(matches!(result, Err(QueueingError::Saturated { .. })));
        }
        assert!(matches!(
            p.metrics(),
            Err(QueueingError::Saturated { utilization, .. }) if utilization == 1.0
        ));
    }

    #[test]
    fn utilization_is_exact_on_powers_of_two() {
        assert_eq!(params(5.0, 32.0).utilization(), 0.15625);
        assert_eq!(params(10.0, 32.0).utilization(), 0.3125);
        assert_eq!(params(15.0, 32.0).utilization(), 0.46875);
        assert_eq!(params(20.0, 32.0).utilization(), 0.625);
        assert_eq!(params(25.0, 32.0).utilization(), 0.78125);
        assert_eq!(params(30.0, 32.0).utilization(), 0.9375);
        assert_eq!(params(0.0, 32.0).utilization(), 0.0);
    }

    #[test]
    fn response_time_examples() {
        assert_close(
            params(5.0, 32.0).mean_response_time().unwrap(),
            1.0 / 27.0,
            1e-15,
        );
        assert_eq!(params(30.0, 32.0).mean_response_time().unwrap(), 0.5);
        assert_eq!(params(16.0, 32.0).mean_response_time().unwrap(), 0.0625);
        assert_eq!(params(0.0, 32.0).mean_response_time().unwrap(), 0.03125);
    }

    #[test]
    fn mean_in_system_examples() {
        assert_eq!(params(16.0, 32.0).mean_in_system().unwrap(), 1.0);
        assert_eq!(params(30.0, 32.0).mean_in_system().unwrap(), 15.0);
        assert_close(
            params(5.0, 32.0).mean_in_system().unwrap(),
            5.0 / 27.0,
            1e-15,
        );
        assert_eq!(params(0.0, 32.0).mean_in_system().unwrap(), 0.0);
    }

    #[test]
    fn wait_examples() {
        assert_eq!(params(0.0, 32.0).mean_wait().unwrap(), 0.0);
        assert_eq!(params(30.0, 32.0).mean_wait().unwrap(), 0.46875);
        assert_close(
            params(5.0, 32.0).mean_wait().unwrap(),
            0.15625 / 27.0,
            1e-15,
        );
    }

    #[test]
    fn queue_length_examples() {
        assert_eq!(params(0.0, 32.0).mean_queue_length().unwrap(), 0.0);
        assert_eq!(params(30.0, 32.0).mean_queue_length().unwrap(), 14.0625);
        assert_eq!(params(16.0, 32.0).mean_queue_length().unwrap(), 0.5);
    }

    #[test]
    fn state_probability_examples() {
        assert_eq!(params(16.0, 32.0).state_probability(0).unwrap(), 0.5);
        assert_eq!(params(16.0, 32.0).state_probability(2).unwrap(), 0.125);
        assert_eq!(params(5.0, 32.0).state_probability(0).unwrap(), 0.84375);
        assert_eq!(params(0.0, 32.0).state_probability(0).unwrap(), 1.0);
        assert_eq!(params(0.0, 32.0).state_probability(3).unwrap(), 0.0);
    }

    #[test]
    fn metrics_bundle_matches_individual_ops() {
        let p = params(25.0, 32.0);
        let m = p.metrics().unwrap();
        assert_eq!(m.utilization, p.utilization());
        assert_eq!(m.mean_in_system, p.mean_in_system().unwrap());
        assert_eq!(m.mean_response_time, p.mean_response_time().unwrap());
        assert_eq!(m.mean_wait, p.mean_wait().unwrap());
        assert_eq!(m.mean_queue_length, p.mean_queue_length().unwrap());
        assert_eq!(m.prob_empty, p.prob_empty().unwrap());
    }

    #[test]
    fn distribution_mass_converges() {
        for lambda in [5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
            let p = params(lambda, 32.0);
            let rho: f64 = p.utilization();
            // Truncation point where the dropped tail is below 1e-12.
            let k = (1e-12f64.ln() / rho.ln()).ceil() as usize + 1;
            let mass = p.state_distribution(k).unwrap().total_mass();
            assert!((mass - 1.0).abs() < 1e-10, "lambda {lambda}: mass {mass}");
        }
    }

    proptest! {
        #[test]
        fn littles_law_holds(lambda in 0.01f64..0.999, mu in 0.5f64..500.0) {
            let p = params(lambda * mu, mu);
            let m = p.metrics().unwrap();
            let n_from_t = p.arrival_rate() * m.mean_response_time;
            assert_close(m.mean_in_system, n_from_t, 1e-12);
        }

        #[test]
        fn response_decomposes_into_wait_plus_service(lambda in 0.0f64..0.999, mu in 0.5f64..500.0) {
            let p = params(lambda * mu, mu);
            let m = p.metrics().unwrap();
            assert_close(m.mean_response_time, m.mean_wait + 1.0 / mu, 1e-12);
        }

        #[test]
        fn queue_length_is_system_minus_utilization(lambda in 0.01f64..0.999, mu in 0.5f64..500.0) {
            let p = params(lambda * mu, mu);
            let m = p.metrics().unwrap();
            assert_close(m.mean_queue_length, m.mean_in_system - m.utilization, 1e-12);
        }

        #[test]
        fn prob_empty_complements_utilization(lambda in 0.0f64..0.999, mu in 0.5f64..500.0) {
            let p = params(lambda * mu, mu);
            let m = p.metrics().unwrap();
            assert_eq!(m.prob_empty, 1.0 - m.utilization);
            assert_eq!(m.prob_empty, p.state_probability(0).unwrap());
        }

        #[test]
        fn metrics_scale_with_rates(rho in 0.01f64..0.99, mu in 0.5f64..100.0, scale in 0.1f64..10.0) {
            let base = params(rho * mu, mu);
            let scaled = params(rho * mu * scale, mu * scale);
            // Dimensionless quantities are invariant, times scale as 1/rate.
            assert_close(scaled.utilization(), base.utilization(), 1e-12);
            assert_close(
                scaled.mean_in_system().unwrap(),
                base.mean_in_system().unwrap(),
                1e-12,
            );
            assert_close(
                scaled.mean_response_time().unwrap() * scale,
                base.mean_response_time().unwrap(),
                1e-12,
            );
        }

        #[test]
        fn response_time_grows_with_load(mu in 0.5f64..100.0, a in 0.01f64..0.98, b in 0.01f64..0.98) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            let t_lo = params(lo * mu, mu).mean_response_time().unwrap();
            let t_hi = params(hi * mu, mu).mean_response_time().unwrap();
            prop_assert!(t_hi > t_lo);
        }

        #[test]
        fn distribution_is_geometric(rho in 0.01f64..0.99, mu in 0.5f64..100.0) {
            let p = params(rho * mu, mu);
            let dist = p.state_distribution(64).unwrap();
            let probs = dist.probabilities();
            for i in 1..probs.len() {
                prop_assert!(probs[i] >= 0.0);
                assert_close(probs[i], probs[i - 1] * p.utilization(), 1e-12);
            }
        }
    }
}
