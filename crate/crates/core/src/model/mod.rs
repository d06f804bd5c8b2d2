//! Takagi-Sugeno plant, mismatched filter template, and delay parameters.
//!
//! Models are ingested from a JSON document (see [`ModelDocument`]) and
//! validated once; a [`TSModel`] is immutable afterwards.

mod bounds;
pub mod membership;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_rows;

pub use bounds::{membership_product_bounds, uniform_grid, BoundsConfig, MembershipBounds};
pub use membership::{Asymptote, MembershipFamily, MembershipFunction};

/// Shared shape of every rule: state `n`, measurement `m_y`, disturbance
/// `p_w`, estimated signal `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m_y: usize,
    pub p_w: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRule {
    #[serde(rename = "A", with = "matrix_rows")]
    pub a: DMatrix<f64>,
    #[serde(rename = "A_tau", with = "matrix_rows")]
    pub a_tau: DMatrix<f64>,
    #[serde(rename = "B", with = "matrix_rows")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "matrix_rows")]
    pub c: DMatrix<f64>,
    #[serde(rename = "C_tau", with = "matrix_rows")]
    pub c_tau: DMatrix<f64>,
    #[serde(rename = "D", with = "matrix_rows")]
    pub d: DMatrix<f64>,
    #[serde(rename = "E", with = "matrix_rows")]
    pub e: DMatrix<f64>,
    #[serde(rename = "E_tau", with = "matrix_rows")]
    pub e_tau: DMatrix<f64>,
}

impl PlantRule {
    fn dims(&self) -> Dims {
        Dims {
            n: self.a.nrows(),
            m_y: self.c.nrows(),
            p_w: self.b.ncols(),
            q: self.e.nrows(),
        }
    }

    fn shape_findings(&self, k: usize) -> Vec<String> {
        let d = self.dims();
        let expect = [
            ("A", &self.a, d.n, d.n),
            ("A_tau", &self.a_tau, d.n, d.n),
            ("B", &self.b, d.n, d.p_w),
            ("C", &self.c, d.m_y, d.n),
            ("C_tau", &self.c_tau, d.m_y, d.n),
            ("D", &self.d, d.m_y, d.p_w),
            ("E", &self.e, d.q, d.n),
            ("E_tau", &self.e_tau, d.q, d.n),
        ];
        let mut out = Vec::new();
        for (name, m, r, c) in expect {
            if m.shape() != (r, c) {
                out.push(format!(
                    "plant_rules[{k}].{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                ));
            }
            if m.iter().any(|x| !x.is_finite()) {
                out.push(format!("plant_rules[{k}].{name} has non-finite entries"));
            }
        }
        out
    }
}

/// Signal the premise variable of a rule family is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiseSignal {
    #[default]
    Time,
    PlantState(usize),
    FilterState(usize),
}

/// Delay trajectory realized in simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayProfile {
    /// `(h/2)(1 + sin(ω t))` with `ω = ρ/h`, so the peak rate is `ρ/2`.
    #[default]
    Default,
    Constant {
        tau: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        frequency: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    pub h: f64,
    pub rho: f64,
    #[serde(default)]
    pub profile: DelayProfile,
}

/// Raw, unvalidated model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub dims: DimsDecl,
    pub delay: DelayParams,
    pub upsilon: f64,
    #[serde(default)]
    pub plant_premise: PremiseSignal,
    #[serde(default)]
    pub filter_premise: PremiseSignal,
    pub plant_rules: Vec<PlantRule>,
    pub plant_memberships: MembershipFamily,
    pub filter_rule_count: usize,
    pub filter_memberships: MembershipFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
}

/// `n` is required; the other sizes are inferred from the matrices and,
/// when declared, must agree with them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsDecl {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_y: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
}

/// A validated T-S fuzzy plant with its mismatched filter template.
#[derive(Debug, Clone, PartialEq)]
pub struct TSModel {
    pub name: String,
    pub dims: Dims,
    pub delay: DelayParams,
    pub upsilon: f64,
    pub plant_premise: PremiseSignal,
    pub filter_premise: PremiseSignal,
    pub plant_rules: Vec<PlantRule>,
    pub plant_memberships: MembershipFamily,
    pub filter_rule_count: usize,
    pub filter_memberships: MembershipFamily,
    pub bounds: BoundsConfig,
}

impl TSModel {
    pub fn p_rules(&self) -> usize {
        self.plant_rules.len()
    }

    pub fn plant_weights(&self, premise: f64) -> Result<Vec<f64>> {
        self.plant_memberships.evaluate(premise)
    }

    pub fn filter_weights(&self, premise: f64) -> Result<Vec<f64>> {
        self.filter_memberships.evaluate(premise)
    }

    /// Copy with the design parameters replaced; the result is revalidated.
    pub fn with_parameters(&self, h: f64, rho: f64, upsilon: f64) -> Result<Self> {
        let mut doc = ModelDocument::from(self.clone());
        doc.delay.h = h;
        doc.delay.rho = rho;
        doc.upsilon = upsilon;
        TSModel::try_from(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self.clone()))?)
    }
}

/// Parse and validate a model document.
pub fn load_model(source: &str) -> Result<TSModel> {
    let doc: ModelDocument =
        serde_json::from_str(source).map_err(|e| Error::Schema(e.to_string()))?;
    TSModel::try_from(doc)
}

pub fn load_model_file(path: impl AsRef<std::path::Path>) -> Result<TSModel> {
    load_model(&std::fs::read_to_string(path)?)
}

/// Plant and filter weights at a common scalar premise value.
pub fn evaluate_memberships(model: &TSModel, premise: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((model.plant_weights(premise)?, model.filter_weights(premise)?))
}

fn validate(doc: &ModelDocument) -> Vec<String> {
    let mut out = Vec::new();
    let d = &doc.delay;
    if !(d.h > 0.0 && d.h.is_finite()) {
        out.push(format!("delay bound h must be > 0 (got {})", d.h));
    }
    if !(d.rho < 1.0) || !d.rho.is_finite() {
        out.push(format!("delay derivative bound must be < 1 (got rho = {})", d.rho));
    }
    if !doc.upsilon.is_finite() {
        out.push("upsilon must be finite".into());
    }
    if doc.plant_rules.is_empty() {
        out.push("at least one plant rule is required".into());
    }
    if doc.filter_rule_count == 0 {
        out.push("filter_rule_count must be >= 1".into());
    }
    if doc.plant_memberships.len() != doc.plant_rules.len() {
        out.push(format!(
            "plant_memberships has {} entries but there are {} plant rules",
            doc.plant_memberships.len(),
            doc.plant_rules.len()
        ));
    }
    if doc.filter_memberships.len() != doc.filter_rule_count {
        out.push(format!(
            "filter_memberships has {} entries but filter_rule_count is {}",
            doc.filter_memberships.len(),
            doc.filter_rule_count
        ));
    }
    if doc.dims.n == 0 {
        out.push("dims.n must be >= 1".into());
    }

    if let Some(first) = doc.plant_rules.first() {
        let reference = first.dims();
        if reference.n != doc.dims.n {
            out.push(format!(
                "plant_rules[0].A is {}x{} but dims.n = {}",
                first.a.nrows(),
                first.a.ncols(),
                doc.dims.n
            ));
        }
        for (k, rule) in doc.plant_rules.iter().enumerate() {
            out.extend(rule.shape_findings(k));
            if rule.dims() != reference {
                out.push(format!(
                    "plant_rules[{k}] has dims {:?}, plant_rules[0] has {:?}",
                    rule.dims(),
                    reference
                ));
            }
        }
        for (decl, inferred, name) in [
            (doc.dims.m_y, reference.m_y, "m_y"),
            (doc.dims.p_w, reference.p_w, "p_w"),
            (doc.dims.q, reference.q, "q"),
        ] {
            if let Some(v) = decl {
                if v != inferred {
                    out.push(format!("dims.{name} = {v} but matrices imply {inferred}"));
                }
            }
        }
    }

    for (sig, label) in [
        (doc.plant_premise, "plant_premise"),
        (doc.filter_premise, "filter_premise"),
    ] {
        let idx = match sig {
            PremiseSignal::Time => None,
            PremiseSignal::PlantState(i) | PremiseSignal::FilterState(i) => Some(i),
        };
        if let Some(i) = idx {
            if i >= doc.dims.n {
                out.push(format!("{label} refers to state {i} but n = {}", doc.dims.n));
            }
        }
    }

    let bounds = doc.bounds.clone().unwrap_or_default();
    out.extend(bounds.findings());

    let structural: Vec<String> = doc
        .plant_memberships
        .structural_findings("plant_memberships")
        .into_iter()
        .chain(doc.filter_memberships.structural_findings("filter_memberships"))
        .collect();
    if structural.is_empty() {
        for (fam, label) in [
            (&doc.plant_memberships, "plant_memberships"),
            (&doc.filter_memberships, "filter_memberships"),
        ] {
            let (lo, hi) = fam.domain();
            let [blo, bhi] = bounds.domain;
            if blo < lo || bhi > hi {
                out.push(format!(
                    "{label}: bounds domain [{blo}, {bhi}] exceeds membership domain [{lo}, {hi}]"
                ));
                continue;
            }
            out.extend(fam.normalization_findings(label, &validation_samples(fam, &bounds)));
        }
    }
    out.extend(structural);
    out
}

fn validation_samples(fam: &MembershipFamily, bounds: &BoundsConfig) -> Vec<f64> {
    let [lo, hi] = bounds.domain;
    let count = bounds.grid_density.clamp(2, 2001);
    let mut samples: Vec<f64> = (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect();
    for f in &fam.0 {
        if let MembershipFunction::Tabulated { grid, .. } = f {
            samples.extend(grid.iter().copied().filter(|g| (lo..=hi).contains(g)));
        }
    }
    samples
}

impl TryFrom<ModelDocument> for TSModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let findings = validate(&doc);
        if !findings.is_empty() {
            return Err(Error::Validation(findings));
        }
        let dims = doc.plant_rules[0].dims();
        Ok(TSModel {
            name: doc.name,
            dims,
            delay: doc.delay,
            upsilon: doc.upsilon,
            plant_premise: doc.plant_premise,
            filter_premise: doc.filter_premise,
            plant_rules: doc.plant_rules,
            plant_memberships: doc.plant_memberships,
            filter_rule_count: doc.filter_rule_count,
            filter_memberships: doc.filter_memberships,
            bounds: doc.bounds.unwrap_or_default(),
        })
    }
}

impl From<TSModel> for ModelDocument {
    fn from(m: TSModel) -> Self {
        ModelDocument {
            name: m.name,
            dims: DimsDecl {
                n: m.dims.n,
                m_y: Some(m.dims.m_y),
                p_w: Some(m.dims.p_w),
                q: Some(m.dims.q),
            },
            delay: m.delay,
            upsilon: m.upsilon,
            plant_premise: m.plant_premise,
            filter_premise: m.filter_premise,
            plant_rules: m.plant_rules,
            plant_memberships: m.plant_memberships,
            filter_rule_count: m.filter_rule_count,
            filter_memberships: m.filter_memberships,
            bounds: Some(m.bounds),
        }
    }
}

/// Bundled model documents.
pub mod fixtures {
    pub const EXAMPLE1: &str = include_str!("../../fixtures/example1.json");
    pub const EXAMPLE2: &str = include_str!("../../fixtures/example2.json");

    pub fn example1() -> super::TSModel {
        super::load_model(EXAMPLE1).expect("bundled example 1 is valid")
    }

    pub fn example2() -> super::TSModel {
        super::load_model(EXAMPLE2).expect("bundled example 2 is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_loads_with_expected_dims() {
        let m = fixtures::example1();
        assert_eq!(
            m.dims,
            Dims {
                n: 2,
                m_y: 1,
                p_w: 1,
                q: 1
            }
        );
        assert_eq!((m.delay.h, m.delay.rho, m.upsilon), (0.5, 0.2, 1.0));
        assert_eq!((m.p_rules(), m.filter_rule_count), (2, 2));
    }

    #[test]
    fn example2_has_three_plant_rules_two_filter_rules() {
        let m = fixtures::example2();
        assert_eq!((m.p_rules(), m.filter_rule_count), (3, 2));
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(fixtures::EXAMPLE1).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn rho_at_or_above_one_is_rejected() {
        let err = load_model(&edit(|v| v["delay"]["rho"] = 1.2.into())).unwrap_err();
        assert!(err.to_string().contains("delay derivative bound must be < 1"));
    }

    #[test]
    fn mismatched_rule_shapes_are_reported() {
        let doc = edit(|v| {
            v["plant_rules"][0]["A"] = serde_json::json!([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        });
        match load_model(&doc).unwrap_err() {
            Error::Validation(f) => assert!(f.iter().any(|s| s.contains("plant_rules[0].A is 3x2"))),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_field_is_a_schema_error() {
        let doc = edit(|v| {
            v.as_object_mut().unwrap().remove("upsilon");
        });
        assert!(matches!(load_model(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn unnormalized_family_fails_validation() {
        let doc = edit(|v| {
            v["plant_memberships"][1] =
                serde_json::json!({"kind": "sigmoid", "offset": 0.5, "scale": 0.0, "center": 0.0, "sign": 1.0});
        });
        let err = load_model(&doc).unwrap_err().to_string();
        assert!(err.contains("not normalized"), "{err}");
    }

    #[test]
    fn declared_dims_must_match() {
        let doc = edit(|v| v["dims"]["q"] = 2.into());
        assert!(load_model(&doc).unwrap_err().to_string().contains("dims.q = 2"));
    }

    #[test]
    fn serialization_round_trips() {
        for m in [fixtures::example1(), fixtures::example2()] {
            let back = load_model(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn example1_limits() {
        let m = fixtures::example1();
        let (phi, nf) = evaluate_memberships(&m, 100.0).unwrap();
        assert!((phi[0] - 0.5).abs() < 1e-12 && (phi[1] - 0.5).abs() < 1e-12);
        let (_, nf_lo) = evaluate_memberships(&m, -100.0).unwrap();
        assert!((nf_lo[0] - 0.7).abs() < 1e-12 && (nf_lo[1] - 0.3).abs() < 1e-12);
        assert!((nf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
