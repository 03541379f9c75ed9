//! Central-difference oracle for directional derivatives of the level and
//! threshold functionals at G.

use serde::Serialize;

use super::{asymptotic_curve, level_of, sup_crossing};
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::procedures::ProcedureSpec;

const STEP: f64 = 1e-5;

/// A continuous direction H tabulated on a grid and linearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Direction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Direction {
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::Validation("direction needs matching grids of length >= 2".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation("direction grid must be strictly increasing".into()));
        }
        Ok(Direction { grid, values })
    }

    /// Equal to 1 on [center − width/2, center + width/2], falling linearly
    /// to 0 at center ± width, on [0,1]. Flat at the center so that small
    /// shifts of the evaluation point leave H unchanged.
    pub fn plateau(center: f64, width: f64) -> Self {
        let n = 4001;
        let knots = [center - width, center - 0.5 * width, center + 0.5 * width, center + width];
        let mut pts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        pts.extend(knots.iter().filter(|x| (0.0..=1.0).contains(*x)));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let values = pts
            .iter()
            .map(|&x| (2.0 - 2.0 * (x - center).abs() / width).clamp(0.0, 1.0))
            .collect();
        Direction { grid: pts, values }
    }

    pub fn constant(c: f64) -> Self {
        Direction {
            grid: vec![0.0, 1.0],
            values: vec![c, c],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return self.values[0];
        }
        if x >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let k = g.partition_point(|&v| v <= x);
        let (x0, x1) = (g[k - 1], g[k]);
        let w = (x - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Functional {
    /// F ↦ 𝒜(F)
    Level,
    /// F ↦ 𝒯(F) = 𝒰(F, 𝒜(F))
    Threshold,
}

fn evaluate(model: &MixtureModel, spec: &ProcedureSpec, h: &Direction, t: f64, which: Functional) -> Result<f64> {
    let f = |u: f64| model.cdf(u) + t * h.eval(u);
    let level = level_of(f, model.pi0(), spec)?;
    match which {
        Functional::Level => Ok(level),
        Functional::Threshold => {
            let curve = asymptotic_curve(model, spec, level)?;
            Ok(sup_crossing(f, &curve))
        }
    }
}

/// (Φ(G + εH) − Φ(G − εH)) / 2ε with ε = 1e-5.
pub fn numeric_functional_derivative(
    model: &MixtureModel,
    spec: &ProcedureSpec,
    direction: &Direction,
    which: Functional,
) -> Result<f64> {
    numeric_functional_derivative_with_step(model, spec, direction, which, STEP)
}

/// Same with an explicit ε. The step must be small against the flat part of
/// the direction, or the perturbed crossing leaves it.
pub fn numeric_functional_derivative_with_step(
    model: &MixtureModel,
    spec: &ProcedureSpec,
    direction: &Direction,
    which: Functional,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Validation(format!("step must be positive, got {step}")));
    }
    let inconclusive = |e: Error| Error::OracleInconclusive(format!("perturbed evaluation failed: {e}"));
    let up = evaluate(model, spec, direction, step, which).map_err(inconclusive)?;
    let down = evaluate(model, spec, direction, -step, which).map_err(inconclusive)?;
    if which == Functional::Threshold && (up == 0.0 || down == 0.0) {
        return Err(Error::OracleInconclusive("perturbed threshold collapsed to 0".into()));
    }
    Ok((up - down) / (2.0 * step))
}
