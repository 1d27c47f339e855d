//! Closed-form steady state of the three-dimensional backoff chain and the coupled
//! `(tau, p)` fixed point.
//!
//! A state is `(i, j, h)`: backoff stage `i`, residual counter `j` and a contention flag
//! `h` that is `0` while the sector's CBAP is running and `-1` while contention is
//! suspended. Head-of-line states `(i, 0, 0)` are the transmission attempts.

use crate::error::{Error, Result};
use crate::params::{BackoffWindows, WindowConvention};
use crate::sector::Transitions;

/// The two suspension-weighted inverse decrement factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eta {
    /// Weight of a counter state `j >= 2`, including its suspended companion.
    pub eta: f64,
    /// Weight of the `j = 1` state.
    pub eta_prime: f64,
}

pub fn eta_terms(p_b: f64, p_f: f64, p_h: f64, p_h_prime: f64) -> Result<Eta> {
    let decrement = 1.0 - p_b - p_h;
    let decrement_prime = 1.0 - p_b - p_h_prime;
    if !(decrement > 0.0 && decrement_prime > 0.0) {
        return Err(Error::SaturationInfeasible {
            decrement: decrement.min(decrement_prime),
        });
    }
    if p_f.is_nan() || p_f >= 1.0 {
        return Err(Error::InvalidParameter(format!("p_f must be below 1, got {p_f}")));
    }
    let resume = 1.0 - p_f;
    Ok(Eta {
        eta: (1.0 + p_h / resume) / decrement,
        eta_prime: (1.0 + p_h_prime / resume) / decrement_prime,
    })
}

/// `sum_{z=0}^{terms-1} ratio^z`, summed term by term so `ratio = 1` needs no special case.
pub fn geometric_sum(ratio: f64, terms: u32) -> f64 {
    let mut sum = 0.0;
    let mut power = 1.0;
    for _ in 0..terms {
        sum += power;
        power *= ratio;
    }
    sum
}

/// Normalization constant `b_{0,0,0}` for doubling windows `W_i = 2^i W0`.
pub fn b000_closed_form(p: f64, w0: u32, m: u32, eta: Eta) -> Result<f64> {
    let w0 = w0 as f64;
    let Eta { eta, eta_prime } = eta;
    let bracket = 1.0
        + (w0 - 1.0) / w0 * (eta_prime + eta * (w0 - 2.0) / 2.0) * (1.0 - p.powi(m as i32 + 1))
        + p * geometric_sum(p, m) * (1.0 + eta_prime - 1.5 * eta)
        + p / (2.0 * w0) * geometric_sum(p / 2.0, m) * (eta - eta_prime)
        + eta * p * w0 * geometric_sum(2.0 * p, m);
    normalize(bracket)
}

/// Normalization constant for arbitrary stage widths, summed stage by stage.
pub fn b000_stagewise(p: f64, windows: &BackoffWindows, eta: Eta) -> Result<f64> {
    let m = windows.m;
    let counter_mass = |width: u64| {
        let w = width as f64;
        eta.eta_prime * (w - 1.0) / w + eta.eta * (w - 1.0) * (w - 2.0) / (2.0 * w)
    };
    let mut bracket = 1.0 + (1.0 - p.powi(m as i32 + 1)) * counter_mass(windows.width(0));
    for stage in 1..=m {
        bracket += p.powi(stage as i32) * (1.0 + counter_mass(windows.width(stage)));
    }
    normalize(bracket)
}

fn normalize(bracket: f64) -> Result<f64> {
    if !(bracket.is_finite() && bracket >= 1.0) {
        return Err(Error::InternalConsistency(format!(
            "normalization bracket {bracket} is below 1"
        )));
    }
    Ok(1.0 / bracket)
}

/// Picks the closed form when it applies and the stage sum otherwise.
pub fn b000_for(p: f64, windows: &BackoffWindows, eta: Eta) -> Result<f64> {
    match windows.convention {
        WindowConvention::Doubling => b000_closed_form(p, windows.w0, windows.m, eta),
        WindowConvention::DoublingMinusOne => b000_stagewise(p, windows, eta),
    }
}

/// Transmission probability: total mass of the head-of-line states.
pub fn tau_of(p: f64, b000: f64, m: u32) -> f64 {
    b000 * geometric_sum(p, m + 1)
}

/// Probability that at least one of the other `n_k - 1` stations transmits.
pub fn collision_probability(tau: f64, n_k: usize) -> f64 {
    1.0 - (1.0 - tau).powi(n_k as i32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSolution {
    pub tau: f64,
    pub p: f64,
    pub b000: f64,
    /// Busy-channel probability; the same expression as `p` at saturation.
    pub p_b: f64,
    pub eta: f64,
    pub eta_prime: f64,
    pub iterations: usize,
    /// `|G(tau)|` at the returned point.
    pub residual: f64,
    /// Final bisection bracket, with `G(lo) >= 0 >= G(hi)`.
    pub bracket: (f64, f64),
}

struct Evaluation {
    g: f64,
    p: f64,
    b000: f64,
    eta: Eta,
}

fn evaluate(tau: f64, n_k: usize, tr: &Transitions, windows: &BackoffWindows) -> Result<Evaluation> {
    let p = collision_probability(tau, n_k);
    let eta = eta_terms(p, tr.p_f, tr.p_h, tr.p_h_prime)?;
    let b000 = b000_for(p, windows, eta)?;
    Ok(Evaluation {
        g: tau_of(p, b000, windows.m) - tau,
        p,
        b000,
        eta,
    })
}

const TAU_FLOOR: f64 = 1e-12;

/// Solves `tau = tau_of(p(tau), b000(tau))` by bisection.
///
/// The upper end of the search interval is pulled in so that `1 - p - p'_H` stays
/// positive; `G` tends to `-tau` there because `b000` vanishes.
pub fn solve_fixed_point(
    n_k: usize,
    tr: &Transitions,
    windows: &BackoffWindows,
    opts: &SolverOptions,
) -> Result<FixedPointSolution> {
    windows.validate()?;
    if n_k == 0 {
        return Err(Error::InvalidParameter("sector has no stations".into()));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if n_k == 1 {
        let eta = eta_terms(0.0, tr.p_f, tr.p_h, tr.p_h_prime)?;
        let b000 = b000_for(0.0, windows, eta)?;
        return Ok(FixedPointSolution {
            tau: b000,
            p: 0.0,
            b000,
            p_b: 0.0,
            eta: eta.eta,
            eta_prime: eta.eta_prime,
            iterations: 0,
            residual: 0.0,
            bracket: (b000, b000),
        });
    }

    let others = (n_k - 1) as f64;
    let ceiling = 1.0 - (tr.p_h_prime + TAU_FLOOR).powf(1.0 / others);
    let (mut lo, mut hi) = (TAU_FLOOR, ceiling.min(1.0 - TAU_FLOOR));
    let g_lo = evaluate(lo, n_k, tr, windows)?.g;
    let g_hi = evaluate(hi, n_k, tr, windows)?.g;
    if !(g_lo >= 0.0 && g_hi <= 0.0) {
        return Err(Error::NoFixedPoint { lo, hi });
    }

    for iteration in 1..=opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let eval = evaluate(mid, n_k, tr, windows)?;
        if eval.g >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let exhausted = hi - lo <= 4.0 * f64::EPSILON * hi;
        if eval.g.abs() <= opts.tol && (hi - lo <= opts.tol || exhausted) {
            return Ok(FixedPointSolution {
                tau: mid,
                p: eval.p,
                b000: eval.b000,
                p_b: eval.p,
                eta: eval.eta.eta,
                eta_prime: eval.eta.eta_prime,
                iterations: iteration,
                residual: eval.g.abs(),
                bracket: (lo, hi),
            });
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: opts.max_iter,
        lo,
        hi,
    })
}

/// Whether a state is in an active CBAP (`h = 0`) or suspended (`h = -1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Contention,
    Suspended,
}

/// Stationary probabilities `b_{i,j,h}`, stored stage by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateVector {
    widths: Vec<u64>,
    contention: Vec<Vec<f64>>,
    /// Index 0 of every stage is unused and kept at zero: transmission states have no
    /// suspended companion.
    suspended: Vec<Vec<f64>>,
}

impl SteadyStateVector {
    pub fn zeros(widths: &[u64]) -> Self {
        SteadyStateVector {
            widths: widths.to_vec(),
            contention: widths.iter().map(|&w| vec![0.0; w as usize]).collect(),
            suspended: widths.iter().map(|&w| vec![0.0; w as usize]).collect(),
        }
    }

    pub fn widths(&self) -> &[u64] {
        &self.widths
    }

    pub fn max_stage(&self) -> u32 {
        self.widths.len() as u32 - 1
    }

    pub fn get(&self, stage: u32, counter: u64, phase: Phase) -> f64 {
        let (i, j) = (stage as usize, counter as usize);
        match phase {
            Phase::Contention => self.contention[i][j],
            Phase::Suspended => self.suspended[i][j],
        }
    }

    pub fn set(&mut self, stage: u32, counter: u64, phase: Phase, value: f64) {
        let (i, j) = (stage as usize, counter as usize);
        match phase {
            Phase::Contention => self.contention[i][j] = value,
            Phase::Suspended => {
                assert!(j >= 1, "transmission states are never suspended");
                self.suspended[i][j] = value
            }
        }
    }

    /// Iterates over `(stage, counter, phase, probability)` for every state that exists.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u64, Phase, f64)> + '_ {
        self.widths.iter().enumerate().flat_map(move |(i, &w)| {
            let contention = (0..w).map(move |j| (i as u32, j, Phase::Contention, self.contention[i][j as usize]));
            let suspended = (1..w).map(move |j| (i as u32, j, Phase::Suspended, self.suspended[i][j as usize]));
            contention.chain(suspended)
        })
    }

    pub fn total(&self) -> f64 {
        self.entries().map(|(_, _, _, v)| v).sum()
    }

    /// Mass of the transmission states `(i, 0, 0)`, which is `tau`.
    pub fn head_of_line(&self) -> f64 {
        self.contention.iter().map(|stage| stage[0]).sum()
    }

    pub fn suspended_mass(&self) -> f64 {
        self.suspended.iter().flatten().sum()
    }

    pub fn max_abs_diff(&self, other: &SteadyStateVector) -> f64 {
        assert_eq!(self.widths, other.widths, "vectors index different chains");
        self.entries()
            .zip(other.entries())
            .map(|(a, b)| (a.3 - b.3).abs())
            .fold(0.0, f64::max)
    }
}

/// Reconstructs every `b_{i,j,h}` for a given collision probability `p` and busy
/// probability `p_b`.
pub fn steady_state_from(
    p: f64,
    p_b: f64,
    tr: &Transitions,
    windows: &BackoffWindows,
) -> Result<SteadyStateVector> {
    windows.validate()?;
    let eta = eta_terms(p_b, tr.p_f, tr.p_h, tr.p_h_prime)?;
    let b000 = b000_for(p, windows, eta)?;
    let m = windows.m;
    let decrement = 1.0 - p_b - tr.p_h;
    let decrement_prime = 1.0 - p_b - tr.p_h_prime;
    let suspend_ratio = tr.p_h / tr.p_r;
    let suspend_ratio_prime = tr.p_h_prime / tr.p_r;
    let head_total = tau_of(p, b000, m);

    let widths = windows.widths();
    let mut vector = SteadyStateVector::zeros(&widths);
    for (stage, &width) in (0..=m).zip(&widths) {
        let head = b000 * p.powi(stage as i32);
        // Probability flow into the stage per chain step.
        let inflow = if stage == 0 {
            (1.0 - p) * head_total
        } else {
            p * b000 * p.powi(stage as i32 - 1)
        };
        let w = width as f64;
        vector.set(stage, 0, Phase::Contention, head);
        if width >= 2 {
            let b1 = inflow * (w - 1.0) / (decrement_prime * w);
            vector.set(stage, 1, Phase::Contention, b1);
            vector.set(stage, 1, Phase::Suspended, b1 * suspend_ratio_prime);
        }
        for j in 2..width {
            let bj = inflow * (w - j as f64) / (decrement * w);
            vector.set(stage, j, Phase::Contention, bj);
            vector.set(stage, j, Phase::Suspended, bj * suspend_ratio);
        }
    }
    Ok(vector)
}

pub fn steady_state_vector(
    sol: &FixedPointSolution,
    tr: &Transitions,
    windows: &BackoffWindows,
) -> Result<SteadyStateVector> {
    steady_state_from(sol.p, sol.p_b, tr, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn eta_degenerate_cases() {
        let e = eta_terms(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!((e.eta, e.eta_prime), (1.0, 1.0));
        let e = eta_terms(0.5, 0.3, 0.0, 0.0).unwrap();
        assert_eq!((e.eta, e.eta_prime), (2.0, 2.0));
    }

    #[test]
    fn eta_matches_exact_rational_evaluation() {
        // Second route: the same expression in exact rationals.
        let r = |n: i64, d: i64| Ratio::new(n as i128, d as i128);
        let (p_b, p_f, p_h, p_hp) = (r(3, 10), r(6, 10), r(1, 10_000), r(2, 1_000));
        let one = r(1, 1);
        let exact = (one + p_h / (one - p_f)) / (one - p_b - p_h);
        let exact_prime = (one + p_hp / (one - p_f)) / (one - p_b - p_hp);
        let to_f = |x: Ratio<i128>| *x.numer() as f64 / *x.denom() as f64;

        let e = eta_terms(0.3, 0.6, 1e-4, 2e-3).unwrap();
        assert_relative_eq!(e.eta, to_f(exact), max_relative = 1e-14);
        assert_relative_eq!(e.eta_prime, to_f(exact_prime), max_relative = 1e-14);
        assert!((e.eta - 1.429_132_7).abs() < 1e-7);
        assert!((e.eta_prime - 1.439_828_1).abs() < 1e-7);
    }

    #[test]
    fn eta_rejects_vanishing_decrement() {
        assert!(matches!(
            eta_terms(0.99, 0.0, 0.0, 0.02),
            Err(Error::SaturationInfeasible { .. })
        ));
        assert!(eta_terms(0.2, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn b000_without_collisions() {
        let eta = eta_terms(0.0, 0.0, 0.0, 0.0).unwrap();
        for m in 0..6 {
            for w0 in [2u32, 4, 7, 16] {
                let w = w0 as f64;
                let expected = 1.0 / (1.0 + (w - 1.0) / w * (1.0 + (w - 2.0) / 2.0));
                assert_relative_eq!(b000_closed_form(0.0, w0, m, eta).unwrap(), expected, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn b000_at_half_is_finite_and_uses_limit() {
        let eta = eta_terms(0.5, 0.0, 0.0, 0.0).unwrap();
        let (w0, m) = (8u32, 4u32);
        let b = b000_closed_form(0.5, w0, m, eta).unwrap();
        assert!(b.is_finite() && b > 0.0 && b <= 1.0);
        assert_eq!(geometric_sum(1.0, m), m as f64);
        // Nudging p across 1/2 moves the result continuously.
        let below = b000_closed_form(0.5 - 1e-9, w0, m, eta).unwrap();
        assert_relative_eq!(b, below, max_relative = 1e-7);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau_of(0.0, 0.3, 5), 0.3);
        assert_eq!(tau_of(0.7, 0.3, 0), 0.3);
        assert_relative_eq!(tau_of(0.5, 0.1, 5), 0.196875, max_relative = 1e-15);
        assert_eq!(tau_of(1.0, 0.1, 3), 0.4);
    }

    #[test]
    fn lone_station_has_no_contention() {
        let windows = BackoffWindows::new(7, 5);
        let tr = Transitions::new(1.25e-4, 1.75e-3, 0.6).unwrap();
        let sol = solve_fixed_point(1, &tr, &windows, &SolverOptions::default()).unwrap();
        assert_eq!(sol.p, 0.0);
        let eta = eta_terms(0.0, 0.6, 1.25e-4, 1.75e-3).unwrap();
        assert_eq!(sol.tau, b000_closed_form(0.0, 7, 5, eta).unwrap());
    }

    /// Stage-by-stage sum over every state, written independently of the closed form.
    fn brute_force_b000(p: f64, p_b: f64, widths: &[u64]) -> f64 {
        let m = widths.len() - 1;
        let hol: f64 = (0..=m).map(|i| p.powi(i as i32)).sum();
        let mut total = 0.0;
        for (i, &w) in widths.iter().enumerate() {
            let inflow = if i == 0 { (1.0 - p) * hol } else { p.powi(i as i32) };
            total += p.powi(i as i32);
            for j in 1..w {
                total += inflow * (w - j) as f64 / (w as f64 * (1.0 - p_b));
            }
        }
        1.0 / total
    }

    #[test]
    fn matches_finite_retry_fixed_point_without_suspension() {
        let windows = BackoffWindows::new(7, 5);
        let tr = Transitions::always_contending();
        let n_k = 10;
        let sol = solve_fixed_point(n_k, &tr, &windows, &SolverOptions::default()).unwrap();

        // Damped iteration on the brute-force normalization.
        let f = |tau: f64| {
            let p = 1.0 - (1.0 - tau).powi(n_k as i32 - 1);
            let b000 = brute_force_b000(p, p, &windows.widths());
            b000 * (0..=5).map(|i| p.powi(i)).sum::<f64>()
        };
        let mut tau = 0.1;
        for _ in 0..10_000 {
            let next = 0.5 * tau + 0.5 * f(tau);
            if (next - tau).abs() < 1e-13 {
                tau = next;
                break;
            }
            tau = next;
        }
        assert_relative_eq!(sol.tau, tau, max_relative = 1e-8);
        assert_relative_eq!(sol.p, 1.0 - (1.0 - tau).powi(9), max_relative = 1e-8);
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn no_suspension_reduces_to_plain_csma_normalization() {
        let windows = BackoffWindows::new(8, 3);
        for p in [0.1, 0.3, 0.5, 0.7] {
            let eta = eta_terms(p, 0.0, 0.0, 0.0).unwrap();
            assert_relative_eq!(eta.eta, 1.0 / (1.0 - p), max_relative = 1e-15);
            let closed = b000_closed_form(p, 8, 3, eta).unwrap();
            assert_relative_eq!(closed, brute_force_b000(p, p, &windows.widths()), max_relative = 1e-12);
        }
    }

    #[test]
    fn stagewise_agrees_with_closed_form_for_doubling() {
        for &(w0, m) in &[(2u32, 0u32), (4, 1), (7, 5), (8, 3), (31, 5)] {
            let windows = BackoffWindows::new(w0, m);
            for p in [0.0, 0.1, 0.3, 0.5, 0.8] {
                let eta = eta_terms(p, 0.6, 0.01, 0.05).unwrap();
                assert_relative_eq!(
                    b000_closed_form(p, w0, m, eta).unwrap(),
                    b000_stagewise(p, &windows, eta).unwrap(),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn steady_state_sums_to_one_with_tau_on_head_of_line() {
        let tr = Transitions::new(1.25e-4, 1.75e-3, 0.6).unwrap();
        for convention in [WindowConvention::Doubling, WindowConvention::DoublingMinusOne] {
            let windows = BackoffWindows::new(7, 5).with_convention(convention);
            let sol = solve_fixed_point(20, &tr, &windows, &SolverOptions::default()).unwrap();
            let v = steady_state_vector(&sol, &tr, &windows).unwrap();
            assert!((v.total() - 1.0).abs() < 1e-9);
            assert!((v.head_of_line() - sol.tau).abs() <= sol.residual + 1e-15);
            for i in 1..=5 {
                assert_relative_eq!(
                    v.get(i, 0, Phase::Contention),
                    sol.p.powi(i as i32) * sol.b000,
                    max_relative = 1e-12
                );
            }
            assert!(v.entries().all(|(_, _, _, x)| x >= 0.0));
        }
    }

    #[test]
    fn no_collisions_keeps_mass_in_stage_zero() {
        let windows = BackoffWindows::new(4, 2);
        let tr = Transitions::new(0.01, 0.05, 0.6).unwrap();
        let v = steady_state_from(0.0, 0.0, &tr, &windows).unwrap();
        let stage0: f64 = v.entries().filter(|e| e.0 == 0).map(|e| e.3).sum();
        assert!((stage0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heavier_contention_raises_collision_probability() {
        let windows = BackoffWindows::new(7, 5);
        let tr = Transitions::new(1.25e-4, 1.75e-3, 0.6).unwrap();
        let opts = SolverOptions::default();
        let ten = solve_fixed_point(10, &tr, &windows, &opts).unwrap();
        let twenty = solve_fixed_point(20, &tr, &windows, &opts).unwrap();
        assert!(twenty.p > ten.p);
        assert!(twenty.tau < ten.tau);
        assert!(twenty.residual <= 1e-10);
        assert_eq!(twenty.p, twenty.p_b);
    }

    #[test]
    fn reports_convergence_failure_with_bracket() {
        let windows = BackoffWindows::new(7, 5);
        let tr = Transitions::always_contending();
        let opts = SolverOptions { tol: 1e-10, max_iter: 5 };
        match solve_fixed_point(10, &tr, &windows, &opts) {
            Err(Error::ConvergenceFailure { iterations, lo, hi }) => {
                assert_eq!(iterations, 5);
                assert!(lo < hi);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn fixed_point_is_consistent(
            n_k in 2usize..80,
            w0 in 2u32..40,
            m in 0u32..7,
            cbap in 100u64..20_000,
        ) {
            let frame = 14.0;
            let tr = Transitions::new(1.0 / cbap as f64, (frame / cbap as f64).min(0.5), 0.5).unwrap();
            let windows = BackoffWindows::new(w0, m);
            let sol = solve_fixed_point(n_k, &tr, &windows, &SolverOptions::default()).unwrap();
            prop_assert!(sol.tau > 0.0 && sol.tau < 1.0);
            prop_assert!(sol.p >= 0.0 && sol.p < 1.0);
            prop_assert!(sol.b000 > 0.0 && sol.b000 <= 1.0);
            prop_assert!(sol.residual <= 1e-10);
            prop_assert!((sol.p - collision_probability(sol.tau, n_k)).abs() <= 1e-15);
            let (lo, hi) = sol.bracket;
            let g = |tau: f64| evaluate(tau, n_k, &tr, &windows).unwrap().g;
            prop_assert!(g(lo) * g(hi) <= 0.0);
        }
    }
}
