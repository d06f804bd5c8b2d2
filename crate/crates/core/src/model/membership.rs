//! Normalized membership functions and rule families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for the normalization and range checks of a family.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// One normalized membership function of a scalar premise variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MembershipFunction {
    /// `offset - scale / (1 + exp(-sign * (v - center)))`.
    Sigmoid {
        offset: f64,
        scale: f64,
        center: f64,
        sign: f64,
    },
    /// `1 - sum` of the listed (non-complement) members of the same family.
    Complement { of: Vec<usize> },
    /// Piecewise-linear interpolation over a strictly increasing grid.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

/// Which side of the premise axis an asymptotic limit is taken on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Asymptote {
    #[serde(rename = "-inf")]
    NegInf,
    #[serde(rename = "+inf")]
    PosInf,
}

impl MembershipFunction {
    fn eval_base(&self, v: f64) -> Result<f64> {
        match self {
            Self::Sigmoid {
                offset,
                scale,
                center,
                sign,
            } => Ok(offset - scale * logistic(sign * (v - center))),
            Self::Tabulated { grid, values } => interpolate(grid, values, v),
            Self::Complement { .. } => unreachable!("complements are resolved by the family"),
        }
    }

    fn limit_base(&self, side: Asymptote) -> Option<f64> {
        match self {
            Self::Sigmoid {
                offset,
                scale,
                sign,
                ..
            } => {
                let goes_up = matches!(side, Asymptote::PosInf) == (*sign > 0.0);
                Some(if goes_up { offset - scale } else { *offset })
            }
            _ => None,
        }
    }

    /// Closed interval on which the function is defined.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Self::Tabulated { grid, .. } => (grid[0], grid[grid.len() - 1]),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn interpolate(grid: &[f64], values: &[f64], v: f64) -> Result<f64> {
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if !(lo..=hi).contains(&v) {
        return Err(Error::OutsideDomain { value: v, lo, hi });
    }
    let k = grid.partition_point(|&g| g <= v).clamp(1, grid.len() - 1);
    let (g0, g1) = (grid[k - 1], grid[k]);
    let s = (v - g0) / (g1 - g0);
    Ok(values[k - 1] + s * (values[k] - values[k - 1]))
}

/// An ordered family of memberships that must sum to one everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MembershipFamily(pub Vec<MembershipFunction>);

impl MembershipFamily {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Structural checks; returns one message per problem found.
    pub fn structural_findings(&self, label: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.0.is_empty() {
            out.push(format!("{label}: membership family is empty"));
        }
        for (k, f) in self.0.iter().enumerate() {
            match f {
                MembershipFunction::Sigmoid {
                    offset,
                    scale,
                    center,
                    sign,
                } => {
                    if ![offset, scale, center].iter().all(|x| x.is_finite()) {
                        out.push(format!("{label}[{k}]: sigmoid parameters must be finite"));
                    }
                    if *sign != 1.0 && *sign != -1.0 {
                        out.push(format!("{label}[{k}]: sigmoid sign must be +1 or -1"));
                    }
                }
                MembershipFunction::Complement { of } => {
                    if of.is_empty() {
                        out.push(format!("{label}[{k}]: complement-of list is empty"));
                    }
                    for &j in of {
                        match self.0.get(j) {
                            None => out.push(format!(
                                "{label}[{k}]: complement refers to missing member {j}"
                            )),
                            Some(MembershipFunction::Complement { .. }) => out.push(format!(
                                "{label}[{k}]: complement may not refer to another complement ({j})"
                            )),
                            Some(_) if j == k => {
                                out.push(format!("{label}[{k}]: complement refers to itself"))
                            }
                            Some(_) => {}
                        }
                    }
                }
                MembershipFunction::Tabulated { grid, values } => {
                    if grid.len() < 2 || grid.len() != values.len() {
                        out.push(format!(
                            "{label}[{k}]: tabulated membership needs >= 2 points and matching value count"
                        ));
                    } else if grid.windows(2).any(|w| w[1] <= w[0]) {
                        out.push(format!("{label}[{k}]: tabulated grid must be strictly increasing"));
                    }
                }
            }
        }
        out
    }

    /// Evaluate all members at premise value `v`.
    pub fn evaluate(&self, v: f64) -> Result<Vec<f64>> {
        let mut vals = vec![0.0; self.0.len()];
        for (k, f) in self.0.iter().enumerate() {
            if !matches!(f, MembershipFunction::Complement { .. }) {
                vals[k] = f.eval_base(v)?;
            }
        }
        self.fill_complements(&mut vals);
        Ok(vals)
    }

    /// Limits at `±∞`, if every member admits one.
    pub fn limit(&self, side: Asymptote) -> Option<Vec<f64>> {
        let mut vals = vec![0.0; self.0.len()];
        for (k, f) in self.0.iter().enumerate() {
            if !matches!(f, MembershipFunction::Complement { .. }) {
                vals[k] = f.limit_base(side)?;
            }
        }
        self.fill_complements(&mut vals);
        Some(vals)
    }

    fn fill_complements(&self, vals: &mut [f64]) {
        for (k, f) in self.0.iter().enumerate() {
            if let MembershipFunction::Complement { of } = f {
                vals[k] = 1.0 - of.iter().map(|&j| vals[j]).sum::<f64>();
            }
        }
    }

    /// Intersection of the members' domains.
    pub fn domain(&self) -> (f64, f64) {
        self.0.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |acc, f| {
            let (lo, hi) = f.domain();
            (acc.0.max(lo), acc.1.min(hi))
        })
    }

    /// Range and normalization checks over the given premise samples.
    pub fn normalization_findings(&self, label: &str, samples: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        for &v in samples {
            let vals = match self.evaluate(v) {
                Ok(vals) => vals,
                Err(e) => {
                    out.push(format!("{label}: {e}"));
                    break;
                }
            };
            let sum: f64 = vals.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                out.push(format!(
                    "{label}: membership family not normalized at premise {v}: sum = {sum:.15}"
                ));
                break;
            }
            if let Some((k, x)) = vals
                .iter()
                .enumerate()
                .find(|(_, x)| **x < -NORMALIZATION_TOL || **x > 1.0 + NORMALIZATION_TOL)
            {
                out.push(format!(
                    "{label}[{k}]: membership value {x} outside [0, 1] at premise {v}"
                ));
                break;
            }
        }
        out
    }
}
