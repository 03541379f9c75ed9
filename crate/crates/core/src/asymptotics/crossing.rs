//! Grid scan plus bisection for crossings of a CDF with a rejection curve.

use crate::procedures::RejectionCurve;

const LINEAR_POINTS: usize = 10_000;
// Log-spaced points from end·1e-15 up, 20 per decade.
const LOG_POINTS: i32 = 300;
const MAX_BISECTIONS: usize = 200;

/// How ψ = F − r behaves at the right end of the curve's finite domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndState {
    /// F stays strictly above the curve: the sup is the domain end.
    Above,
    /// F meets the curve at the domain end within tolerance.
    Touching,
    Below,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    /// Interior down-crossings (ψ from ≥ 0 to < 0), ascending.
    pub crossings: Vec<f64>,
    pub end: f64,
    pub end_state: EndState,
}

impl Scan {
    /// sup{u : F(u) ≥ r(u)}, 0 when only the origin qualifies.
    pub fn sup(&self) -> f64 {
        match self.end_state {
            EndState::Above | EndState::Touching => self.end,
            EndState::Below => self.crossings.last().copied().unwrap_or(0.0),
        }
    }

    /// Right crossings, counting a touch at the domain end.
    pub fn right_crossings(&self) -> Vec<f64> {
        let mut v = self.crossings.clone();
        if self.end_state == EndState::Touching {
            v.push(self.end);
        }
        v
    }
}

pub fn grid(end: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (1..=LINEAR_POINTS)
        .map(|j| end * j as f64 / LINEAR_POINTS as f64)
        .chain((1..=LOG_POINTS).map(|k| end * 10f64.powf(-k as f64 / 20.0)))
        .collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

pub fn scan<F: Fn(f64) -> f64>(f: F, curve: &RejectionCurve) -> Scan {
    let end = curve.domain_end().min(1.0);
    let psi = |u: f64| f(u) - curve.value(u);
    let pts = grid(end);
    let mut vals: Vec<f64> = pts.iter().map(|&u| psi(u)).collect();

    let last = vals.len() - 1;
    let tol = 1e-12 * curve.value(end).abs().max(1.0);
    let end_state = if vals[last] > tol {
        EndState::Above
    } else if vals[last] >= -tol {
        vals[last] = 0.0;
        EndState::Touching
    } else {
        EndState::Below
    };

    let crossings = (0..last)
        .filter(|&k| vals[k] >= 0.0 && vals[k + 1] < 0.0)
        .map(|k| bisect(&psi, pts[k], pts[k + 1]))
        .collect();
    Scan {
        crossings,
        end,
        end_state,
    }
}

// Largest point with ψ ≥ 0 in [lo, hi], given ψ(lo) ≥ 0 > ψ(hi).
fn bisect<P: Fn(f64) -> f64>(psi: &P, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if psi(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
