//! Benchmark-free synthetic objectives: pure deterministic functions of the
//! assignment, used for optimizer validation and reproducibility checks
//! where real timing noise would only get in the way.

use serde::{Deserialize, Serialize};

use crate::tunables::{ComponentSpec, TunableAssignment, TunableDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    /// `(x - 0.7)^2` on `[0,1]`; smooth, optimum at 0.7.
    Quadratic1d,
    /// `sin(5.5 pi x + 1) + sin(7.5 pi y + 0.5)` on the unit square; jagged,
    /// many local minima.
    Sinusoid2d,
}

impl Surface {
    pub fn dimension(&self) -> usize {
        match self {
            Surface::Quadratic1d => 1,
            Surface::Sinusoid2d => 2,
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Surface::Quadratic1d => (point[0] - 0.7) * (point[0] - 0.7),
            Surface::Sinusoid2d => {
                use std::f64::consts::PI;
                (5.5 * PI * point[0] + 1.0).sin() + (7.5 * PI * point[1] + 0.5).sin()
            }
        }
    }

    /// Minimum over an `n x n` evaluation grid (or `n` points in 1-D) — the
    /// independent optimum oracle for convergence checks.
    pub fn grid_minimum(&self, n: usize) -> f64 {
        let steps = |i: usize| i as f64 / (n - 1) as f64;
        match self.dimension() {
            1 => (0..n)
                .map(|i| self.eval(&[steps(i)]))
                .fold(f64::INFINITY, f64::min),
            _ => {
                let mut best = f64::INFINITY;
                for i in 0..n {
                    for j in 0..n {
                        best = best.min(self.eval(&[steps(i), steps(j)]));
                    }
                }
                best
            }
        }
    }

    /// Built-in search space: one real tunable per coordinate on `[0,1]`,
    /// so unit-cube points and assignments coincide.
    pub fn component_spec(&self) -> ComponentSpec {
        let mut spec = ComponentSpec::new(3, "synthetic");
        let names = ["x", "y"];
        for (i, name) in names.iter().take(self.dimension()).enumerate() {
            spec = spec.with_tunable(TunableDef::real(name, i as u32 + 1, 0.0, 1.0, 0.5));
        }
        spec.with_metric(1, "objective", "value")
    }

    /// Evaluate at an assignment produced from [`Surface::component_spec`].
    pub fn eval_assignment(&self, assignment: &TunableAssignment) -> f64 {
        let coords: Vec<f64> = ["x", "y"]
            .iter()
            .take(self.dimension())
            .map(|name| {
                assignment
                    .get(name)
                    .and_then(|v| v.as_f64())
                    .expect("assignment validated against the synthetic spec")
            })
            .collect();
        self.eval(&coords)
    }
}
