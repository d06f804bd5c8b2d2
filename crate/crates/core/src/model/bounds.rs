//! Lower and upper bounds on the blended weights `φ_i · n_j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::membership::{Asymptote, MembershipFamily};
use super::TSModel;
use crate::error::{Error, Result};
use crate::matrix_rows;

/// Premise interval and sampling used for the product bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub domain: [f64; 2],
    pub grid_density: usize,
    /// Asymptotic limits folded into the bounds for kinds that have them.
    #[serde(default = "both_asymptotes")]
    pub asymptotes: Vec<Asymptote>,
}

fn both_asymptotes() -> Vec<Asymptote> {
    vec![Asymptote::NegInf, Asymptote::PosInf]
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            domain: [-50.0, 50.0],
            grid_density: 10001,
            asymptotes: both_asymptotes(),
        }
    }
}

impl BoundsConfig {
    pub(crate) fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let [lo, hi] = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            out.push(format!("bounds domain [{lo}, {hi}] is empty or not finite"));
        }
        if self.grid_density < 100 {
            out.push(format!(
                "bounds grid_density must be >= 100 (got {})",
                self.grid_density
            ));
        }
        out
    }

    /// Uniform grid over the domain, endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.domain, self.grid_density)
    }
}

/// `count` evenly spaced points, endpoints exact.
pub fn uniform_grid([lo, hi]: [f64; 2], count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| {
            if k + 1 == count {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// `d_lower[i][j] ≤ φ_i(v)·n_j(v) ≤ d_upper[i][j]` over the sampled domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipBounds {
    #[serde(with = "matrix_rows")]
    pub d_lower: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub d_upper: DMatrix<f64>,
    pub domain_used: [f64; 2],
    pub grid_density: usize,
    pub asymptotes: Vec<Asymptote>,
    /// `true` when plant and filter read the same premise signal.
    pub joint: bool,
}

impl MembershipBounds {
    pub fn shape(&self) -> (usize, usize) {
        self.d_upper.shape()
    }
}

struct Extremes {
    lo: DMatrix<f64>,
    hi: DMatrix<f64>,
}

impl Extremes {
    fn new(p: usize, c: usize) -> Self {
        Self {
            lo: DMatrix::from_element(p, c, f64::INFINITY),
            hi: DMatrix::from_element(p, c, f64::NEG_INFINITY),
        }
    }

    fn absorb(&mut self, phi: &[f64], nf: &[f64]) {
        for (i, a) in phi.iter().enumerate() {
            for (j, b) in nf.iter().enumerate() {
                let d = a * b;
                self.lo[(i, j)] = self.lo[(i, j)].min(d);
                self.hi[(i, j)] = self.hi[(i, j)].max(d);
            }
        }
    }
}

/// Golden-section search for a local extremum of `f` on `[a, b]`.
fn golden_extremum(f: &dyn Fn(f64) -> Result<f64>, (mut a, mut b): (f64, f64), maximize: bool) -> Result<f64> {
    let sgn = if maximize { -1.0 } else { 1.0 };
    let g = |v: f64| f(v).map(|x| sgn * x);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (g(x1)?, g(x2)?);
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = g(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = g(x2)?;
        }
    }
    Ok(sgn * f1.min(f2))
}

fn family_samples(
    fam: &MembershipFamily,
    grid: &[f64],
    asymptotes: &[Asymptote],
) -> Result<Vec<Vec<f64>>> {
    let mut out = grid
        .iter()
        .map(|&v| fam.evaluate(v))
        .collect::<Result<Vec<_>>>()?;
    for &side in asymptotes {
        if let Some(l) = fam.limit(side) {
            out.push(l);
        }
    }
    Ok(out)
}

/// Grid-sampled bounds on the products of plant and filter weights.
///
/// When both families read the same premise signal the products are
/// sampled jointly and the extremal grid cells are refined by a
/// golden-section search; otherwise each family is sampled on its own and the
/// bounds are the products of the per-family extremes.
pub fn membership_product_bounds(model: &TSModel, config: &BoundsConfig) -> Result<MembershipBounds> {
    let [lo, hi] = config.domain;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Domain(format!("empty bounds domain [{lo}, {hi}]")));
    }
    if config.grid_density < 100 {
        return Err(Error::Domain(format!(
            "grid_density must be >= 100 (got {})",
            config.grid_density
        )));
    }
    let grid = config.grid();
    let (p, c) = (model.p_rules(), model.filter_rule_count);
    let joint = model.plant_premise == model.filter_premise;
    let mut ext = Extremes::new(p, c);

    if joint {
        let mut arg_lo = vec![0usize; p * c];
        let mut arg_hi = vec![0usize; p * c];
        for (k, &v) in grid.iter().enumerate() {
            let (phi, nf) = (model.plant_weights(v)?, model.filter_weights(v)?);
            for i in 0..p {
                for j in 0..c {
                    let d = phi[i] * nf[j];
                    if d < ext.lo[(i, j)] {
                        ext.lo[(i, j)] = d;
                        arg_lo[i * c + j] = k;
                    }
                    if d > ext.hi[(i, j)] {
                        ext.hi[(i, j)] = d;
                        arg_hi[i * c + j] = k;
                    }
                }
            }
        }
        // Interior extrema fall between grid points; polish them locally.
        for i in 0..p {
            for j in 0..c {
                let f = |v: f64| -> Result<f64> {
                    Ok(model.plant_weights(v)?[i] * model.filter_weights(v)?[j])
                };
                let cell = |k: usize| (grid[k.saturating_sub(1)], grid[(k + 1).min(grid.len() - 1)]);
                let lo = golden_extremum(&f, cell(arg_lo[i * c + j]), false)?;
                let hi = golden_extremum(&f, cell(arg_hi[i * c + j]), true)?;
                ext.lo[(i, j)] = ext.lo[(i, j)].min(lo);
                ext.hi[(i, j)] = ext.hi[(i, j)].max(hi);
            }
        }
        // Both families must admit the limit for a joint asymptotic sample.
        for &side in &config.asymptotes {
            if let (Some(a), Some(b)) = (
                model.plant_memberships.limit(side),
                model.filter_memberships.limit(side),
            ) {
                ext.absorb(&a, &b);
            }
        }
    } else {
        let ps = family_samples(&model.plant_memberships, &grid, &config.asymptotes)?;
        let fs = family_samples(&model.filter_memberships, &grid, &config.asymptotes)?;
        let range = |rows: &[Vec<f64>], k: usize| {
            rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
                (a.min(r[k]), b.max(r[k]))
            })
        };
        for i in 0..p {
            let (plo, phi) = range(&ps, i);
            for j in 0..c {
                let (flo, fhi) = range(&fs, j);
                ext.lo[(i, j)] = (plo * flo).max(0.0);
                ext.hi[(i, j)] = (phi * fhi).min(1.0);
            }
        }
    }

    // Rounding can push a product a hair outside [0, 1].
    let d_lower = ext.lo.map(|x| x.clamp(0.0, 1.0));
    let d_upper = ext.hi.map(|x| x.clamp(0.0, 1.0));
    Ok(MembershipBounds {
        d_lower,
        d_upper,
        domain_used: config.domain,
        grid_density: config.grid_density,
        asymptotes: config.asymptotes.clone(),
        joint,
    })
}
