//! Potential families `a(x)` and sampled checks of their decay hypotheses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Grid};
use crate::point::{self, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `a ≡ a∞`.
    Constant,
    /// `a∞ + A(1+|x|)^{−m}`.
    SlowDecay {
        #[serde(rename = "A")]
        amplitude: f64,
        m: f64,
    },
    /// `a∞ + A(1+|x|)^{−m}(1 + ε e^{−η̃|x|} g(x/|x|))` with `g(θ) = θ₁`.
    Angular {
        #[serde(rename = "A")]
        amplitude: f64,
        m: f64,
        eps: f64,
        eta_tilde_family: f64,
    },
    /// `a∞ + A e^{−b|x|}`. Decays too fast to be admissible; used as a negative control.
    Exponential {
        #[serde(rename = "A")]
        amplitude: f64,
        rate: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub a_inf: f64,
    #[serde(flatten)]
    pub family: Family,
}

impl Potential {
    pub fn new(a_inf: f64, family: Family) -> Result<Self> {
        if !(a_inf.is_finite() && a_inf > 0.0) {
            return Err(Error::Domain(format!("a_inf = {a_inf} must be positive")));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} = {v} must be positive")))
            }
        };
        match family {
            Family::Constant => {}
            Family::SlowDecay { amplitude, m } => {
                positive("A", amplitude)?;
                positive("m", m)?;
            }
            Family::Angular { amplitude, m, eps, eta_tilde_family } => {
                positive("A", amplitude)?;
                positive("m", m)?;
                positive("eta_tilde_family", eta_tilde_family)?;
                if !(eps.abs() < 1.0) {
                    return Err(Error::Domain(format!(
                        "|eps| = {} must be below 1 to keep a > a_inf",
                        eps.abs()
                    )));
                }
            }
            Family::Exponential { amplitude, rate } => {
                positive("A", amplitude)?;
                positive("rate", rate)?;
            }
        }
        Ok(Self { a_inf, family })
    }

    pub fn constant(a_inf: f64) -> Result<Self> {
        Self::new(a_inf, Family::Constant)
    }

    pub fn slow_decay(a_inf: f64, amplitude: f64, m: f64) -> Result<Self> {
        Self::new(a_inf, Family::SlowDecay { amplitude, m })
    }

    pub fn angular(a_inf: f64, amplitude: f64, m: f64, eps: f64, eta_tilde: f64) -> Result<Self> {
        Self::new(a_inf, Family::Angular { amplitude, m, eps, eta_tilde_family: eta_tilde })
    }

    pub fn exponential(a_inf: f64, amplitude: f64, rate: f64) -> Result<Self> {
        Self::new(a_inf, Family::Exponential { amplitude, rate })
    }

    /// Revalidates a deserialized potential.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.a_inf, self.family)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let r = point::norm(x);
        match self.family {
            Family::Constant => self.a_inf,
            Family::SlowDecay { amplitude, m } => self.a_inf + amplitude * (1.0 + r).powf(-m),
            Family::Angular { amplitude, m, eps, eta_tilde_family } => {
                let g = if r > 0.0 { x[0] / r } else { 0.0 };
                self.a_inf
                    + amplitude
                        * (1.0 + r).powf(-m)
                        * (1.0 + eps * (-eta_tilde_family * r).exp() * g)
            }
            Family::Exponential { amplitude, rate } => {
                self.a_inf + amplitude * (-rate * r).exp()
            }
        }
    }

    /// `inf_{ℝ^N} a`. Every family approaches `a∞` from above, so this is `a∞`.
    pub fn a0(&self) -> f64 {
        self.a_inf
    }

    pub fn is_radial(&self) -> bool {
        match self.family {
            Family::Angular { eps, .. } => eps == 0.0,
            _ => true,
        }
    }

    /// Node values of `a` on a grid.
    pub fn sample(&self, grid: Grid) -> Field {
        Field::from_fn(grid, |x| self.eval(x))
    }

    /// Minimum of `a` over the grid nodes.
    pub fn min_on_grid(&self, grid: Grid) -> f64 {
        self.sample(grid).min()
    }

    /// Radius beyond which `(a − a∞)e^{ηr}` is increasing along every ray,
    /// or `None` when it never is.
    pub fn slow_decay_onset(&self, eta: f64) -> Option<f64> {
        match self.family {
            Family::Constant => None,
            Family::SlowDecay { m, .. } | Family::Angular { m, .. } => {
                Some((m / eta - 1.0).max(0.0))
            }
            Family::Exponential { rate, .. } => (eta > rate).then_some(0.0),
        }
    }
}

/// Unit directions used to probe a potential: equally spaced angles in the
/// plane, a Fibonacci lattice in 3-D, `±e₁` on the line.
pub fn directions(dim: usize, count: usize) -> Vec<Point> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|j| point::polar(2.0 * std::f64::consts::PI * j as f64 / count as f64))
            .collect(),
        _ => fibonacci_sphere(count),
    }
}

pub fn fibonacci_sphere(count: usize) -> Vec<Point> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|j| {
            let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * j as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowDecayEntry {
    pub eta: f64,
    pub onset: Option<f64>,
    /// `min over rays` of `(a(rθ) − a∞)e^{ηr}` at each sampled radius.
    pub samples: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowDecayReport {
    pub radii: Vec<f64>,
    pub entries: Vec<SlowDecayEntry>,
}

impl SlowDecayReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

/// Sampled proxy for `lim (a(x) − a∞)e^{η|x|} = ∞`: passes for `η` when the
/// weighted excess is strictly increasing over `radii` along every probed ray.
pub fn check_slow_decay(
    pot: &Potential,
    dim: usize,
    eta_list: &[f64],
    radii: &[f64],
) -> Result<SlowDecayReport> {
    if radii.is_empty() {
        return Err(Error::Domain("empty radii list".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("radii must be increasing".into()));
    }
    let rays = directions(dim, 16);
    let entries = eta_list
        .iter()
        .map(|&eta| {
            let mut passed = true;
            let mut samples = vec![f64::INFINITY; radii.len()];
            for theta in &rays {
                let vals: Vec<f64> = radii
                    .iter()
                    .map(|&r| (pot.eval(&point::scale(theta, r)) - pot.a_inf) * (eta * r).exp())
                    .collect();
                if vals.iter().any(|&v| !(v > 0.0)) || vals.windows(2).any(|w| w[1] <= w[0]) {
                    passed = false;
                }
                for (s, v) in samples.iter_mut().zip(&vals) {
                    *s = s.min(*v);
                }
            }
            SlowDecayEntry { eta, onset: pot.slow_decay_onset(eta), samples, passed }
        })
        .collect();
    Ok(SlowDecayReport { radii: radii.to_vec(), entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub eta_tilde: f64,
    pub radii: Vec<f64>,
    /// `osc(ρ) = max a(ρθ) − min a(ρθ)` over the probed directions.
    pub oscillation: Vec<f64>,
    /// `osc(ρ)e^{η̃ρ}`.
    pub weighted: Vec<f64>,
    pub passed: bool,
}

/// Sampled proxy for `(a(ρθ₁) − a(ρθ₂))e^{η̃ρ} → 0`: passes when the weighted
/// oscillation is nonincreasing over `radii`.
pub fn check_angular_oscillation(
    pot: &Potential,
    dim: usize,
    eta_tilde: f64,
    radii: &[f64],
    sample_count: usize,
) -> Result<OscillationReport> {
    if sample_count < 8 {
        return Err(Error::Domain(format!("{sample_count} directions, need at least 8")));
    }
    let rays = directions(dim, sample_count);
    let oscillation: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let (lo, hi) = rays.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                let a = pot.eval(&point::scale(t, r));
                (lo.min(a), hi.max(a))
            });
            // Differences at the rounding level of `a` itself are not oscillation.
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
                0.0
            } else {
                hi - lo
            }
        })
        .collect();
    let weighted: Vec<f64> =
        radii.iter().zip(&oscillation).map(|(&r, &o)| o * (eta_tilde * r).exp()).collect();
    let passed = weighted.windows(2).all(|w| w[1] <= w[0]);
    Ok(OscillationReport { eta_tilde, radii: radii.to_vec(), oscillation, weighted, passed })
}
