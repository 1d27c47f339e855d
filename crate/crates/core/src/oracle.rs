//! Brute-force ground truth: the full transition matrix over every `(i, j, h)` state and
//! its stationary distribution. Only meant for small windows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::{b000_for, eta_terms, tau_of, Phase, SteadyStateVector};
use crate::params::{BackoffWindows, WindowConvention};
use crate::sector::Transitions;

pub const ORACLE_STATE_LIMIT: usize = 100_000;
/// Chains up to this size are solved directly; larger ones by power iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 2_000;
pub const ORACLE_TOL: f64 = 1e-12;

/// Sparse rows of a row-stochastic matrix over the backoff states.
#[derive(Debug, Clone)]
pub struct ExplicitChain {
    widths: Vec<u64>,
    contention_offset: Vec<usize>,
    suspended_offset: Vec<usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn state_count(widths: &[u64]) -> usize {
    widths.iter().map(|&w| 2 * w as usize - 1).sum()
}

impl ExplicitChain {
    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    pub fn widths(&self) -> &[u64] {
        &self.widths
    }

    pub fn index(&self, stage: u32, counter: u64, phase: Phase) -> usize {
        let i = stage as usize;
        match phase {
            Phase::Contention => self.contention_offset[i] + counter as usize,
            Phase::Suspended => {
                assert!(counter >= 1, "transmission states are never suspended");
                self.suspended_offset[i] + counter as usize - 1
            }
        }
    }

    pub fn row(&self, state: usize) -> &[(usize, f64)] {
        &self.rows[state]
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .iter()
            .find(|&&(col, _)| col == to)
            .map_or(0.0, |&(_, prob)| prob)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|e| e.1).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.state_count();
        let mut dense = DMatrix::zeros(n, n);
        for (from, row) in self.rows.iter().enumerate() {
            for &(to, prob) in row {
                dense[(from, to)] += prob;
            }
        }
        dense
    }

    fn to_vector(&self, pi: &[f64]) -> SteadyStateVector {
        let mut vector = SteadyStateVector::zeros(&self.widths);
        for (stage, &width) in self.widths.iter().enumerate() {
            let stage = stage as u32;
            for j in 0..width {
                vector.set(stage, j, Phase::Contention, pi[self.index(stage, j, Phase::Contention)]);
                if j >= 1 {
                    vector.set(stage, j, Phase::Suspended, pi[self.index(stage, j, Phase::Suspended)]);
                }
            }
        }
        vector
    }
}

/// Builds the chain for collision probability `p`. The busy-channel probability equals
/// `p`. A collision at the last stage drops the packet and the next one starts at the
/// head of line, state `(0, 0, 0)`.
pub fn build_chain(p: f64, tr: &Transitions, windows: &BackoffWindows) -> Result<ExplicitChain> {
    windows.validate()?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1), got {p}")));
    }
    let widths = windows.widths();
    let states = state_count(&widths);
    if states > ORACLE_STATE_LIMIT {
        return Err(Error::ChainTooLarge {
            states,
            limit: ORACLE_STATE_LIMIT,
        });
    }
    let decrement = 1.0 - p - tr.p_h;
    let decrement_prime = 1.0 - p - tr.p_h_prime;
    if decrement < 0.0 || decrement_prime < 0.0 {
        return Err(Error::SaturationInfeasible {
            decrement: decrement.min(decrement_prime),
        });
    }

    let mut contention_offset = Vec::with_capacity(widths.len());
    let mut suspended_offset = Vec::with_capacity(widths.len());
    let mut next = 0;
    for &w in &widths {
        contention_offset.push(next);
        next += w as usize;
        suspended_offset.push(next);
        next += w as usize - 1;
    }
    let mut chain = ExplicitChain {
        widths: widths.clone(),
        contention_offset,
        suspended_offset,
        rows: vec![Vec::new(); states],
    };

    let m = windows.m;
    let w_first = widths[0] as f64;
    for (stage, &width) in (0..=m).zip(&widths) {
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        let c = |j: u64| chain.index(stage, j, Phase::Contention);
        let s = |j: u64| chain.index(stage, j, Phase::Suspended);

        // Transmission state: success restarts at stage 0, collision moves one stage up.
        let from = c(0);
        for j in 0..widths[0] {
            edges.push((from, chain.index(0, j, Phase::Contention), (1.0 - p) / w_first));
        }
        if stage < m {
            let next_width = widths[stage as usize + 1];
            for j in 0..next_width {
                edges.push((from, chain.index(stage + 1, j, Phase::Contention), p / next_width as f64));
            }
        } else {
            edges.push((from, chain.index(0, 0, Phase::Contention), p));
        }

        for j in 1..width {
            let leave = if j == 1 { tr.p_h_prime } else { tr.p_h };
            edges.push((c(j), s(j), leave));
            edges.push((c(j), c(j), p));
            edges.push((c(j), c(j - 1), 1.0 - p - leave));
            edges.push((s(j), s(j), tr.p_f));
            edges.push((s(j), c(j), tr.p_r));
        }

        for (from, to, prob) in edges {
            if prob > 0.0 {
                let row = &mut chain.rows[from];
                match row.iter_mut().find(|e| e.0 == to) {
                    Some(entry) => entry.1 += prob,
                    None => row.push((to, prob)),
                }
            }
        }
    }
    for row in &mut chain.rows {
        row.sort_by_key(|e| e.0);
    }
    Ok(chain)
}

/// `|| pi P - pi ||_1`.
pub fn stationarity_residual(chain: &ExplicitChain, pi: &[f64]) -> f64 {
    let next = step(chain, pi);
    next.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

fn step(chain: &ExplicitChain, pi: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; pi.len()];
    for (from, row) in chain.rows.iter().enumerate() {
        let mass = pi[from];
        if mass != 0.0 {
            for &(to, prob) in row {
                next[to] += mass * prob;
            }
        }
    }
    next
}

/// Solves `pi (P - I) = 0` with one balance equation replaced by `sum(pi) = 1`.
pub fn stationary_direct(chain: &ExplicitChain, tol: f64) -> Result<Vec<f64>> {
    let n = chain.state_count();
    let mut system = chain.to_dense().transpose();
    for k in 0..n {
        system[(k, k)] -= 1.0;
    }
    for col in 0..n {
        system[(n - 1, col)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::OracleFailure("transition system is singular".into()))?;
    let pi = clean(solution.iter().copied().collect(), tol)?;
    check_residual(chain, &pi, tol)?;
    Ok(pi)
}

/// Lazy power iteration `pi <- (pi + pi P) / 2`, which is aperiodic for any chain.
pub fn stationary_power(chain: &ExplicitChain, tol: f64, max_sweeps: usize) -> Result<Vec<f64>> {
    let n = chain.state_count();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..max_sweeps {
        let moved = step(chain, &pi);
        let residual: f64 = moved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual <= tol {
            let total: f64 = moved.iter().sum();
            return Ok(moved.into_iter().map(|x| x / total).collect());
        }
        for (x, y) in pi.iter_mut().zip(moved) {
            *x = 0.5 * (*x + y);
        }
    }
    Err(Error::OracleFailure(format!(
        "power iteration did not reach residual {tol:e} in {max_sweeps} sweeps"
    )))
}

fn clean(mut pi: Vec<f64>, tol: f64) -> Result<Vec<f64>> {
    for x in &mut pi {
        if *x < 0.0 {
            if *x < -tol {
                return Err(Error::OracleFailure(format!("negative stationary mass {x:e}")));
            }
            *x = 0.0;
        }
    }
    Ok(pi)
}

fn check_residual(chain: &ExplicitChain, pi: &[f64], tol: f64) -> Result<()> {
    let residual = stationarity_residual(chain, pi);
    if residual > tol.max(1e-10) {
        return Err(Error::OracleFailure(format!("stationary residual {residual:e} exceeds {tol:e}")));
    }
    Ok(())
}

pub fn stationary_distribution(chain: &ExplicitChain, tol: f64) -> Result<SteadyStateVector> {
    let pi = if chain.state_count() <= DIRECT_SOLVE_LIMIT {
        stationary_direct(chain, tol)?
    } else {
        stationary_power(chain, tol, 5_000_000)?
    };
    Ok(chain.to_vector(&pi))
}

/// One point of the closed-form validation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub w0: u32,
    pub m: u32,
    pub p: f64,
    pub p_h: f64,
    pub p_h_prime: f64,
    pub p_f: f64,
    pub convention: WindowConvention,
}

impl GridPoint {
    pub fn windows(&self) -> BackoffWindows {
        BackoffWindows::new(self.w0, self.m).with_convention(self.convention)
    }

    pub fn transitions(&self) -> Result<Transitions> {
        Transitions::new(self.p_h, self.p_h_prime, self.p_f)
    }
}

/// Cartesian grid with `p'_H` in {p_H, 5 p_H}; duplicate points at `p_H = 0` are dropped.
pub fn grid(
    w0s: &[u32],
    ms: &[u32],
    ps: &[f64],
    p_hs: &[f64],
    p_fs: &[f64],
    convention: WindowConvention,
) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &w0 in w0s {
        for &m in ms {
            for &p in ps {
                for &p_h in p_hs {
                    let mut primes = vec![p_h, 5.0 * p_h];
                    primes.dedup();
                    for p_h_prime in primes {
                        for &p_f in p_fs {
                            points.push(GridPoint {
                                w0,
                                m,
                                p,
                                p_h,
                                p_h_prime,
                                p_f,
                                convention,
                            });
                        }
                    }
                }
            }
        }
    }
    points
}

/// `W0` in {4, 8}, `m` in {1, 2, 3}, `p` in {0.1, 0.3, 0.5}, `p_H` in {0, 0.01},
/// `p_f` in {0, 0.6}.
pub fn default_grid() -> Vec<GridPoint> {
    grid(
        &[4, 8],
        &[1, 2, 3],
        &[0.1, 0.3, 0.5],
        &[0.0, 0.01],
        &[0.0, 0.6],
        WindowConvention::Doubling,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRow {
    pub point: GridPoint,
    pub closed_b000: f64,
    pub oracle_b000: f64,
    pub b000_rel_err: f64,
    pub closed_tau: f64,
    pub oracle_tau: f64,
    pub tau_rel_err: f64,
    /// Largest entrywise difference between the reconstructed and oracle vectors.
    pub max_abs_diff: f64,
}

impl ValidationRow {
    pub fn worst_rel_err(&self) -> f64 {
        self.b000_rel_err.max(self.tau_rel_err)
    }
}

/// Compares the closed form (with `p_b = p`) against the oracle at one grid point.
pub fn validate_point(point: &GridPoint) -> Result<ValidationRow> {
    let windows = point.windows();
    let tr = point.transitions()?;
    let eta = eta_terms(point.p, tr.p_f, tr.p_h, tr.p_h_prime)?;
    let closed_b000 = b000_for(point.p, &windows, eta)?;
    let closed_tau = tau_of(point.p, closed_b000, windows.m);
    let reconstructed = crate::markov::steady_state_from(point.p, point.p, &tr, &windows)?;

    let chain = build_chain(point.p, &tr, &windows)?;
    let oracle = stationary_distribution(&chain, ORACLE_TOL)?;
    let oracle_b000 = oracle.get(0, 0, Phase::Contention);
    let oracle_tau = oracle.head_of_line();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    Ok(ValidationRow {
        point: *point,
        closed_b000,
        oracle_b000,
        b000_rel_err: rel(closed_b000, oracle_b000),
        closed_tau,
        oracle_tau,
        tau_rel_err: rel(closed_tau, oracle_tau),
        max_abs_diff: reconstructed.max_abs_diff(&oracle),
    })
}
