//! Seeded discrete-event simulation of the single-server FIFO queue.
//!
//! Arrivals are a Poisson process, service demands are exponential, and both
//! are generated by inverse transform from dedicated ChaCha8 substreams of
//! one seed. Reports are bit-identical across runs with the same config.

use crate::queueing::QueueParameters;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("simulation needs a positive arrival rate, got {0}")]
    ZeroArrivalRate(f64),
    #[error("total_jobs must be at least 1")]
    NoJobs,
    #[error("warmup_jobs ({warmup_jobs}) must be below total_jobs ({total_jobs})")]
    WarmupTooLarge { warmup_jobs: u64, total_jobs: u64 },
}

/// A fully specified simulation run: rates, seed, and run length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    params: QueueParameters,
    seed: u64,
    total_jobs: u64,
    warmup_jobs: u64,
}

impl SimulationConfig {
    pub fn new(
        params: QueueParameters,
        seed: u64,
        total_jobs: u64,
        warmup_jobs: u64,
    ) -> Result<Self, SimulationError> {
        if params.arrival_rate() <= 0.0 {
            return Err(SimulationError::ZeroArrivalRate(params.arrival_rate()));
        }
        if total_jobs == 0 {
            return Err(SimulationError::NoJobs);
        }
        if warmup_jobs >= total_jobs {
            return Err(SimulationError::WarmupTooLarge {
                warmup_jobs,
                total_jobs,
            });
        }
        Ok(Self {
            params,
            seed,
            total_jobs,
            warmup_jobs,
        })
    }

    pub fn params(&self) -> &QueueParameters {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total_jobs(&self) -> u64 {
        self.total_jobs
    }

    pub fn warmup_jobs(&self) -> u64 {
        self.warmup_jobs
    }
}

/// Kinds of calendar events. The declaration order matters: departures sort
/// before arrivals at equal timestamps, so a job leaving at time t never sees
/// a job arriving at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Departure,
    Arrival,
}

/// One entry in the event calendar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub job_id: u64,
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .partial_cmp(&other.time)
            .expect("event times are finite")
            .then(self.kind.cmp(&other.kind))
            .then(self.job_id.cmp(&other.job_id))
    }
}

/// Measurement summary of one run. All observed quantities come from the
/// post-warmup window only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    /// Mean time from arrival to departure.
    pub observed_response_time: f64,
    /// Mean time from arrival to start of service.
    pub observed_wait: f64,
    /// Fraction of the measurement window the server was busy.
    pub observed_utilization: f64,
    /// Time-averaged number of jobs in the system.
    pub observed_mean_in_system: f64,
    /// Completions inside the measurement window.
    pub jobs_completed: u64,
    /// Length of the measurement window in simulated time.
    pub elapsed_sim_time: f64,
    /// True when the configured rates have lambda >= mu. The measurements are
    /// still honest; they just describe a transient, not a steady state.
    pub saturated: bool,
    /// Histogram of the number of jobs left behind by each counted departure.
    /// In steady state this is the stationary distribution, by PASTA.
    pub departure_state_counts: Vec<u64>,
}

impl SimulationReport {
    /// Relative gap between the two sides of Little's law, using the run's
    /// own completion throughput: |N - X * T| / N. Zero when nothing was
    /// observed in the system.
    pub fn little_law_residual(&self) -> f64 {
        if self.observed_mean_in_system == 0.0 {
            return 0.0;
        }
        let throughput = self.jobs_completed as f64 / self.elapsed_sim_time;
        let reconstructed = throughput * self.observed_response_time;
        (self.observed_mean_in_system - reconstructed).abs() / self.observed_mean_in_system
    }
}

/// Exponential sampler: inverse transform over a dedicated RNG substream.
struct ExpSampler {
    rng: ChaCha8Rng,
    rate: f64,
}

impl ExpSampler {
    fn new(seed: u64, stream: u64, rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, rate }
    }

    fn next(&mut self) -> f64 {
        // 53-bit uniform in [0, 1); a zero draw is remapped to the smallest
        // positive subnormal so ln(u) stays finite.
        let mut u = (self.rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
        if u == 0.0 {
            u = f64::from_bits(1);
        }
        -u.ln() / self.rate
    }
}

const ARRIVAL_STREAM: u64 = 1;
const SERVICE_STREAM: u64 = 2;

struct Job {
    id: u64,
    arrival_time: f64,
    demand: f64,
}

struct InService {
    job: Job,
    start_time: f64,
}

/// Runs the configured simulation until `total_jobs` jobs have completed.
pub fn run_simulation(config: &SimulationConfig) -> SimulationReport {
    let lambda = config.params.arrival_rate();
    let mu = config.params.service_rate();
    let total = config.total_jobs;
    let warmup = config.warmup_jobs;

    let mut arrivals = ExpSampler::new(config.seed, ARRIVAL_STREAM, lambda);
    let mut services = ExpSampler::new(config.seed, SERVICE_STREAM, mu);

    let mut calendar: BinaryHeap<std::cmp::Reverse<Event>> = BinaryHeap::new();
    calendar.push(std::cmp::Reverse(Event {
        time: arrivals.next(),
        kind: EventKind::Arrival,
        job_id: 0,
    }));

    let mut waiting: VecDeque<Job> = VecDeque::new();
    let mut in_service: Option<InService> = None;
    let mut in_system: u64 = 0;
    let mut arrivals_generated: u64 = 1;
    let mut completions: u64 = 0;

    let mut clock = 0.0f64;
    let mut area_jobs = 0.0f64; // integral of in_system dt
    let mut area_busy = 0.0f64; // integral of server-busy dt
    let mut sum_response = 0.0f64;
    let mut sum_wait = 0.0f64;
    let mut departure_state_counts: Vec<u64> = Vec::new();

    // Snapshot of the accumulators at the warmup boundary. With warmup 0 the
    // boundary is the initial empty state, which these initializers describe.
    let mut mark_time = 0.0f64;
    let mut mark_area_jobs = 0.0f64;
    let mut mark_area_busy = 0.0f64;

    while completions < total {
        let std::cmp::Reverse(event) = calendar.pop().expect("calendar never runs dry");
        assert!(event.time >= clock, "event calendar went backwards");
        let dt = event.time - clock;
        area_jobs += in_system as f64 * dt;
        if in_service.is_some() {
            area_busy += dt;
        }
        clock = event.time;

        match event.kind {
            EventKind::Arrival => {
                in_system += 1;
                // The service demand is drawn at arrival, from its own
                // stream, so demand i always belongs to job i. Paired runs
                // that share a seed therefore see identical workloads even
                // when their rates differ.
                let job = Job {
                    id: event.job_id,
                    arrival_time: clock,
                    demand: services.next(),
                };
                if in_service.is_none() {
                    start_service(job, clock, &mut in_service, &mut calendar);
                } else {
                    waiting.push_back(job);
                }
                if arrivals_generated < total {
                    calendar.push(std::cmp::Reverse(Event {
                        time: clock + arrivals.next(),
                        kind: EventKind::Arrival,
                        job_id: arrivals_generated,
                    }));
                    arrivals_generated += 1;
                }
            }
            EventKind::Departure => {
                let served = in_service
                    .take()
                    .expect("departure without a job in service");
                assert_eq!(served.job.id, event.job_id, "departures must be FIFO");
                in_system -= 1;
                completions += 1;
                if completions > warmup {
                    sum_wait += served.start_time - served.job.arrival_time;
                    sum_response += clock - served.job.arrival_time;
                    let left_behind = in_system as usize;
                    if departure_state_counts.len() <= left_behind {
                        departure_state_counts.resize(left_behind + 1, 0);
                    }
                    departure_state_counts[left_behind] += 1;
                }
                if let Some(next) = waiting.pop_front() {
                    start_service(next, clock, &mut in_service, &mut calendar);
                }
                if completions == warmup {
                    mark_time = clock;
                    mark_area_jobs = area_jobs;
                    mark_area_busy = area_busy;
                }
            }
        }
    }

    let jobs_counted = total - warmup;
    let window = clock - mark_time;
    let (mean_in_system, utilization) = if window > 0.0 {
        (
            (area_jobs - mark_area_jobs) / window,
            ((area_busy - mark_area_busy) / window).clamp(0.0, 1.0),
        )
    } else {
        (0.0, 0.0)
    };

    SimulationReport {
        observed_response_time: sum_response / jobs_counted as f64,
        observed_wait: sum_wait / jobs_counted as f64,
        observed_utilization: utilization,
        observed_mean_in_system: mean_in_system,
        jobs_completed: jobs_counted,
        elapsed_sim_time: window,
        saturated: !config.params.is_stable(),
        departure_state_counts,
    }
}

fn start_service(
    job: Job,
    clock: f64,
    in_service: &mut Option<InService>,
    calendar: &mut BinaryHeap<std::cmp::Reverse<Event>>,
) {
    calendar.push(std::cmp::Reverse(Event {
        time: clock + job.demand,
        kind: EventKind::Departure,
        job_id: job.id,
    }));
    *in_service = Some(InService {
        job,
        start_time: clock,
    });
}
