//! Bounded black-box search over the physical parameter box.
//!
//! The default strategy is a seeded quasirandom sweep: a scrambled Halton
//! sequence (Cranley–Patterson rotated, one prime base per dimension)
//! scaled into the parameter box, evaluated independently — and therefore
//! safely in parallel — with a deterministic argmin reduction. Coordinate
//! descent with a shrinking per-axis sweep and a box-clamped Nelder–Mead
//! simplex are available as sequential alternatives. Failed simulations
//! score +∞ so extreme corners of the box consume budget without aborting
//! the search.

use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{n_step_eval, CalibError, TelemetrySeries};
use crate::building::{BuildingConfig, ThetaParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    Quasirandom,
    CoordinateDescent,
    NelderMead,
}

impl FromStr for SearchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quasirandom" => Ok(SearchStrategy::Quasirandom),
            "coordinate-descent" => Ok(SearchStrategy::CoordinateDescent),
            "nelder-mead-boxed" => Ok(SearchStrategy::NelderMead),
            other => Err(format!(
                "unknown strategy `{other}` (expected quasirandom, coordinate-descent, or nelder-mead-boxed)"
            )),
        }
    }
}

/// Search configuration: which parameters move, inside which box, with what
/// budget. Parameters not listed stay at the configuration's values.
#[derive(Debug, Clone)]
pub struct CalibrationSpec {
    /// (name, min, max) per searched parameter.
    pub bounds: Vec<(String, f64, f64)>,
    pub budget: usize,
    pub seed: u64,
    pub strategy: SearchStrategy,
    /// Tuning window as (start record, length); `None` means the whole
    /// series.
    pub objective_interval: Option<(usize, usize)>,
    /// Held-out windows scored after the search; must not overlap the
    /// tuning window.
    pub validation_intervals: Vec<(usize, usize)>,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            bounds: ThetaParams::default_bounds(),
            budget: 100,
            seed: 0,
            strategy: SearchStrategy::Quasirandom,
            objective_interval: None,
            validation_intervals: Vec::new(),
        }
    }
}

impl CalibrationSpec {
    /// Parse the line-based spec format: `param <name> <min> <max>`,
    /// `budget <n>`, `seed <n>`, `strategy <s>`,
    /// `objective_interval <start> <len>`, `validation_interval <start> <len>`.
    /// Omitting every `param` line searches the full default box.
    pub fn parse(text: &str) -> Result<Self, CalibError> {
        let mut spec = CalibrationSpec {
            bounds: Vec::new(),
            ..CalibrationSpec::default()
        };
        let bad = |line: usize, message: String| CalibError::Invalid(format!("line {line}: {message}"));
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let number = |token: &str| -> Result<f64, CalibError> {
                token
                    .parse()
                    .map_err(|_| bad(line_no, format!("`{token}` is not a number")))
            };
            let index = |token: &str| -> Result<usize, CalibError> {
                token
                    .parse()
                    .map_err(|_| bad(line_no, format!("`{token}` is not an index")))
            };
            match (tokens[0], tokens.len()) {
                ("param", 4) => {
                    let name = tokens[1].to_string();
                    if !ThetaParams::NAMES.contains(&name.as_str()) {
                        return Err(bad(line_no, format!("unknown parameter `{name}`")));
                    }
                    spec.bounds.push((name, number(tokens[2])?, number(tokens[3])?));
                }
                ("budget", 2) => spec.budget = index(tokens[1])?,
                ("seed", 2) => {
                    spec.seed = tokens[1]
                        .parse()
                        .map_err(|_| bad(line_no, format!("`{}` is not a seed", tokens[1])))?
                }
                ("strategy", 2) => {
                    spec.strategy = tokens[1].parse().map_err(|e| bad(line_no, e))?
                }
                ("objective_interval", 3) => {
                    spec.objective_interval = Some((index(tokens[1])?, index(tokens[2])?))
                }
                ("validation_interval", 3) => spec
                    .validation_intervals
                    .push((index(tokens[1])?, index(tokens[2])?)),
                (other, _) => return Err(bad(line_no, format!("unrecognized directive `{other}`"))),
            }
        }
        if spec.bounds.is_empty() {
            spec.bounds = ThetaParams::default_bounds();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CalibError> {
        if self.budget == 0 {
            return Err(CalibError::Invalid("budget must be at least 1".into()));
        }
        if self.bounds.is_empty() {
            return Err(CalibError::Invalid(
                "at least one parameter must be searched".into(),
            ));
        }
        let domain = ThetaParams::default_bounds();
        for (name, lo, hi) in &self.bounds {
            let Some((_, domain_lo, domain_hi)) = domain.iter().find(|(n, _, _)| n == name)
            else {
                return Err(CalibError::Invalid(format!("unknown parameter `{name}`")));
            };
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CalibError::Invalid(format!(
                    "parameter `{name}` bounds [{lo}, {hi}] must be finite with min < max"
                )));
            }
            // the search box may narrow the parameter domain but not leave it
            if lo < domain_lo || hi > domain_hi {
                return Err(CalibError::Invalid(format!(
                    "parameter `{name}` bounds [{lo}, {hi}] leave the domain [{domain_lo}, {domain_hi}]"
                )));
            }
        }
        if let Some((start, len)) = self.objective_interval {
            for &(v_start, v_len) in &self.validation_intervals {
                let disjoint = v_start + v_len <= start || start + len <= v_start;
                if !disjoint {
                    return Err(CalibError::Invalid(format!(
                        "validation interval [{v_start}, {}) overlaps the tuning interval [{start}, {})",
                        v_start + v_len,
                        start + len
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One candidate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub index: usize,
    pub theta: ThetaParams,
    /// Tuning-window MAE, K; +∞ for failed simulations.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub best_theta: ThetaParams,
    pub best_objective: f64,
    pub best_index: usize,
    /// Every evaluation, exactly `budget` entries, in evaluation order.
    pub log: Vec<Evaluation>,
    /// All candidates failed; `best_theta` falls back to the base vector.
    pub degenerate: bool,
    pub wall_clock: Duration,
}

/// Run the configured search on the telemetry's tuning window.
pub fn calibrate(
    config: &BuildingConfig,
    spec: &CalibrationSpec,
    telemetry: &TelemetrySeries,
) -> Result<CalibrationResult, CalibError> {
    calibrate_with_jobs(config, spec, telemetry, None)
}

/// As `calibrate`, with an explicit worker count for the quasirandom
/// strategy (the sequential strategies ignore it). Any job count produces
/// the same result.
pub fn calibrate_with_jobs(
    config: &BuildingConfig,
    spec: &CalibrationSpec,
    telemetry: &TelemetrySeries,
    jobs: Option<usize>,
) -> Result<CalibrationResult, CalibError> {
    spec.validate()?;
    let (start, len) = spec
        .objective_interval
        .unwrap_or((0, telemetry.len()));
    let window = telemetry.window(start, len)?;
    window.check_contiguous()?;

    let names: Vec<String> = spec.bounds.iter().map(|(n, _, _)| n.clone()).collect();
    let lower: Vec<f64> = spec.bounds.iter().map(|(_, lo, _)| *lo).collect();
    let upper: Vec<f64> = spec.bounds.iter().map(|(_, _, hi)| *hi).collect();
    let base = config.theta;

    let objective = |point: &[f64]| -> f64 {
        let mut theta = base;
        for (name, value) in names.iter().zip(point) {
            theta.set(name, *value);
        }
        match n_step_eval(config, &theta, &window, window.len()) {
            Ok(report) if report.mae.is_finite() => report.mae,
            _ => f64::INFINITY,
        }
    };

    let started = Instant::now();
    let points = match spec.strategy {
        SearchStrategy::Quasirandom => {
            let candidates = quasirandom_points(&lower, &upper, spec.budget, spec.seed);
            evaluate_parallel(&candidates, &objective, jobs)
        }
        SearchStrategy::CoordinateDescent => {
            coordinate_descent(&lower, &upper, spec.budget, &objective)
        }
        SearchStrategy::NelderMead => nelder_mead(&lower, &upper, spec.budget, &objective),
    };
    let wall_clock = started.elapsed();

    let log: Vec<Evaluation> = points
        .into_iter()
        .enumerate()
        .map(|(index, (point, objective))| {
            let mut theta = base;
            for (name, value) in names.iter().zip(&point) {
                theta.set(name, *value);
            }
            Evaluation {
                index,
                theta,
                objective,
            }
        })
        .collect();

    // deterministic argmin: ties break toward the lowest candidate index
    let mut best_index = 0;
    for eval in &log {
        if eval.objective < log[best_index].objective {
            best_index = eval.index;
        }
    }
    let degenerate = !log[best_index].objective.is_finite();
    Ok(CalibrationResult {
        best_theta: if degenerate { base } else { log[best_index].theta },
        best_objective: log[best_index].objective,
        best_index,
        log,
        degenerate,
        wall_clock,
    })
}

fn evaluate_parallel(
    candidates: &[Vec<f64>],
    objective: &(impl Fn(&[f64]) -> f64 + Sync),
    jobs: Option<usize>,
) -> Vec<(Vec<f64>, f64)> {
    let run = || {
        candidates
            .par_iter()
            .map(|point| (point.clone(), objective(point)))
            .collect()
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(run),
        None => run(),
    }
}

const HALTON_PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical-inverse (van der Corput) value of `n` in the given base.
fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut digit_weight = 1.0 / base as f64;
    while n > 0 {
        result += (n % base) as f64 * digit_weight;
        n /= base;
        digit_weight /= base as f64;
    }
    result
}

/// Low-discrepancy points in the box: Halton sequence with a seeded
/// Cranley–Patterson rotation per dimension.
fn quasirandom_points(lower: &[f64], upper: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let dims = lower.len();
    assert!(dims <= HALTON_PRIMES.len(), "at most 8 searched parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dims)
                .map(|d| {
                    let u = (radical_inverse(i as u64 + 1, HALTON_PRIMES[d]) + shifts[d]).fract();
                    lower[d] + u * (upper[d] - lower[d])
                })
                .collect()
        })
        .collect()
}

/// Cyclic per-axis sweeps that halve around the incumbent each full cycle.
fn coordinate_descent(
    lower: &[f64],
    upper: &[f64],
    budget: usize,
    objective: &impl Fn(&[f64]) -> f64,
) -> Vec<(Vec<f64>, f64)> {
    const SWEEP: usize = 5;
    let dims = lower.len();
    let mut log = Vec::with_capacity(budget);
    let evaluate = |point: &[f64], log: &mut Vec<(Vec<f64>, f64)>| -> f64 {
        let value = objective(point);
        log.push((point.to_vec(), value));
        value
    };

    let mut current: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| (lo + hi) / 2.0)
        .collect();
    let mut current_value = evaluate(&current, &mut log);
    let mut half_width: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| (hi - lo) / 2.0)
        .collect();

    'outer: loop {
        for d in 0..dims {
            let lo = (current[d] - half_width[d]).max(lower[d]);
            let hi = (current[d] + half_width[d]).min(upper[d]);
            for s in 0..SWEEP {
                if log.len() >= budget {
                    break 'outer;
                }
                let x = lo + (hi - lo) * s as f64 / (SWEEP - 1) as f64;
                let mut trial = current.clone();
                trial[d] = x;
                let value = evaluate(&trial, &mut log);
                if value < current_value {
                    current = trial;
                    current_value = value;
                }
            }
        }
        for w in half_width.iter_mut() {
            *w /= 2.0;
        }
    }
    log
}

/// Nelder–Mead with every trial point clamped into the box; runs until the
/// evaluation budget is spent.
fn nelder_mead(
    lower: &[f64],
    upper: &[f64],
    budget: usize,
    objective: &impl Fn(&[f64]) -> f64,
) -> Vec<(Vec<f64>, f64)> {
    let dims = lower.len();
    let mut log = Vec::with_capacity(budget);
    let clamp = |point: &mut Vec<f64>| {
        for d in 0..dims {
            point[d] = point[d].clamp(lower[d], upper[d]);
        }
    };
    let evaluate = |point: Vec<f64>, log: &mut Vec<(Vec<f64>, f64)>| -> (Vec<f64>, f64) {
        let value = objective(&point);
        log.push((point.clone(), value));
        (point, value)
    };

    let midpoint: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| (lo + hi) / 2.0)
        .collect();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dims + 1);
    for i in 0..=dims {
        if log.len() >= budget {
            return log;
        }
        let mut vertex = midpoint.clone();
        if i > 0 {
            vertex[i - 1] = (vertex[i - 1] + 0.25 * (upper[i - 1] - lower[i - 1]))
                .clamp(lower[i - 1], upper[i - 1]);
        }
        simplex.push(evaluate(vertex, &mut log));
    }

    while log.len() < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex.len() - 1;
        let centroid: Vec<f64> = (0..dims)
            .map(|d| simplex[..worst].iter().map(|(p, _)| p[d]).sum::<f64>() / worst as f64)
            .collect();
        let blend = |alpha: f64| -> Vec<f64> {
            let mut point: Vec<f64> = (0..dims)
                .map(|d| centroid[d] + alpha * (centroid[d] - simplex[worst].0[d]))
                .collect();
            clamp(&mut point);
            point
        };

        let (reflected, f_reflected) = evaluate(blend(1.0), &mut log);
        if f_reflected < simplex[0].1 {
            if log.len() >= budget {
                simplex[worst] = (reflected, f_reflected);
                break;
            }
            let (expanded, f_expanded) = evaluate(blend(2.0), &mut log);
            simplex[worst] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[worst - 1].1 {
            simplex[worst] = (reflected, f_reflected);
        } else {
            if log.len() >= budget {
                break;
            }
            let (contracted, f_contracted) = evaluate(blend(-0.5), &mut log);
            if f_contracted < simplex[worst].1 {
                simplex[worst] = (contracted, f_contracted);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    if log.len() >= budget {
                        return log;
                    }
                    let mut point: Vec<f64> = vertex
                        .0
                        .iter()
                        .zip(&best)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    clamp(&mut point);
                    *vertex = evaluate(point, &mut log);
                }
            }
        }
    }
    log.truncate(budget);
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(4, 2), 0.125);
    }

    #[test]
    fn quasirandom_points_stay_in_box_and_spread() {
        let lower = [0.0, 10.0, -5.0];
        let upper = [1.0, 20.0, 5.0];
        let points = quasirandom_points(&lower, &upper, 64, 17);
        assert_eq!(points.len(), 64);
        for point in &points {
            for d in 0..3 {
                assert!(point[d] >= lower[d] && point[d] <= upper[d]);
            }
        }
        // coverage: each dimension's quarters all get visited
        for d in 0..3 {
            let mut quarters = [false; 4];
            for point in &points {
                let u = (point[d] - lower[d]) / (upper[d] - lower[d]);
                quarters[(u * 4.0).min(3.0) as usize] = true;
            }
            assert!(quarters.iter().all(|&q| q), "dimension {d} poorly covered");
        }
    }

    #[test]
    fn quasirandom_points_are_seed_deterministic() {
        let lower = [0.0; 4];
        let upper = [1.0; 4];
        assert_eq!(
            quasirandom_points(&lower, &upper, 32, 5),
            quasirandom_points(&lower, &upper, 32, 5)
        );
        assert_ne!(
            quasirandom_points(&lower, &upper, 32, 5),
            quasirandom_points(&lower, &upper, 32, 6)
        );
    }

    fn bowl(center: &[f64]) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
        move |x: &[f64]| {
            x.iter()
                .zip(center)
                .map(|(xi, ci)| (xi - ci) * (xi - ci))
                .sum()
        }
    }

    #[test]
    fn coordinate_descent_reaches_bowl_minimum() {
        let lower = [0.0, 0.0];
        let upper = [4.0, 4.0];
        let center = [3.1, 0.7];
        let log = coordinate_descent(&lower, &upper, 60, &bowl(&center));
        assert_eq!(log.len(), 60);
        let best = log
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(best.1 < 0.02, "best objective {} too far from 0", best.1);
        for (point, _) in &log {
            assert!(point.iter().zip(&lower).all(|(x, lo)| x >= lo));
            assert!(point.iter().zip(&upper).all(|(x, hi)| x <= hi));
        }
    }

    #[test]
    fn nelder_mead_reaches_bowl_minimum_within_box() {
        let lower = [-2.0, -2.0, -2.0];
        let upper = [2.0, 2.0, 2.0];
        let center = [1.2, -0.4, 0.9];
        let log = nelder_mead(&lower, &upper, 80, &bowl(&center));
        assert_eq!(log.len(), 80);
        let best = log.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!(best.1 < 0.01, "best objective {} too far from 0", best.1);
        for (point, _) in &log {
            assert!(point.iter().zip(&lower).all(|(x, lo)| x >= lo));
            assert!(point.iter().zip(&upper).all(|(x, hi)| x <= hi));
        }
    }

    #[test]
    fn strategies_survive_infinite_objectives() {
        // half the box is poisoned: the log keeps the sentinel and the
        // argmin skips it
        let lower = [0.0, 0.0];
        let upper = [1.0, 1.0];
        let poisoned = |x: &[f64]| {
            if x[0] > 0.5 {
                f64::INFINITY
            } else {
                x[0] * x[0] + x[1] * x[1]
            }
        };
        for log in [
            evaluate_parallel(&quasirandom_points(&lower, &upper, 40, 3), &poisoned, Some(2)),
            coordinate_descent(&lower, &upper, 40, &poisoned),
            nelder_mead(&lower, &upper, 40, &poisoned),
        ] {
            assert_eq!(log.len(), 40);
            assert!(log.iter().any(|(_, v)| v.is_infinite()));
            let best = log.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            assert!(best.1.is_finite());
        }
    }

    #[test]
    fn parallel_and_serial_evaluation_agree() {
        let lower = [0.0; 3];
        let upper = [1.0; 3];
        let points = quasirandom_points(&lower, &upper, 50, 11);
        let f = bowl(&[0.5, 0.5, 0.5]);
        let serial = evaluate_parallel(&points, &f, Some(1));
        let parallel = evaluate_parallel(&points, &f, Some(8));
        assert_eq!(serial, parallel);
    }

    #[test]
    fn spec_parsing_and_validation() {
        let text = "\
# tuning spec
param exterior_wall_conductivity 0.01 1.0
param shuffle_probability 0.0 1.0
budget 25
seed 9
strategy coordinate-descent
objective_interval 0 72
validation_interval 72 72
";
        let spec = CalibrationSpec::parse(text).unwrap();
        assert_eq!(spec.bounds.len(), 2);
        assert_eq!(spec.budget, 25);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.strategy, SearchStrategy::CoordinateDescent);
        assert_eq!(spec.objective_interval, Some((0, 72)));

        let overlapping = "objective_interval 0 72\nvalidation_interval 36 72\n";
        assert!(CalibrationSpec::parse(overlapping).is_err());

        let unknown = "param not_a_parameter 0 1\n";
        assert!(CalibrationSpec::parse(unknown).is_err());

        let inverted = "param shuffle_probability 1.0 0.0\n";
        assert!(CalibrationSpec::parse(inverted).is_err());

        let outside_domain = "param shuffle_probability 0.0 2.0\n";
        assert!(CalibrationSpec::parse(outside_domain).is_err());
    }
}
