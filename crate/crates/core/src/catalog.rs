//! Built-in geometry catalog.
//!
//! Spans projectively flat and curved charts, with and without Killing
//! tensors: flat charts in two and three dimensions, the round sphere and
//! hyperbolic plane in conformal coordinates, a Liouville-type metric with an
//! irreducible rank-2 first integral, and a generically perturbed flat metric
//! with no symmetries.  Every entry also exists in a representative-changed
//! variant (suffix `+pc`, one-form `Υ = x dy`), which shares its projective
//! class.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{AffineStructure, Field};
use crate::jet::Jet;
use crate::killing::KillingCandidate;

/// A named chart geometry with its sampling box and default jet order.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub structure: Arc<AffineStructure>,
    /// Chart bounding box, per axis.
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub jet_order: usize,
}

impl CatalogEntry {
    pub fn n(&self) -> usize {
        self.structure.n()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(self.box_lo.iter().zip(&self.box_hi))
            .all(|(x, (lo, hi))| x >= lo && x <= hi)
    }
}

fn conformal_factor_field(sign: f64) -> Field {
    // 4 / (1 + sign (x^2 + y^2))^2
    Field::from_fn(move |v| {
        let order = v[0].order();
        let one = Jet::constant(2, order, 1.0);
        let r2 = v[0].mul(&v[0])?.add(&v[1].mul(&v[1])?)?;
        let den = one.add(&r2.scale(sign))?;
        Jet::constant(2, order, 4.0).div(&den.mul(&den)?)
    })
}

fn liouville_f(v: &[Jet]) -> crate::error::Result<Jet> {
    // f(x) = 1 + x^2
    Jet::constant(2, v[0].order(), 1.0).add(&v[0].mul(&v[0])?)
}

fn liouville_g(v: &[Jet]) -> crate::error::Result<Jet> {
    // g(y) = 1 + y^4
    let y2 = v[1].mul(&v[1])?;
    Jet::constant(2, v[0].order(), 1.0).add(&y2.mul(&y2)?)
}

fn liouville_conformal() -> Field {
    Field::from_fn(|v| liouville_f(v)?.add(&liouville_g(v)?))
}

fn diagonal_metric(n: usize, factor: Field) -> Vec<Field> {
    let mut g = vec![Field::Zero; n * n];
    for i in 0..n {
        g[i * n + i] = factor.clone();
    }
    g
}

/// Names of all built-in geometries, each with a `+pc` variant.
pub fn names() -> Vec<String> {
    let base = [
        "flat2",
        "flat3",
        "sphere2",
        "hyperbolic2",
        "liouville",
        "perturbed2",
    ];
    let mut out = Vec::with_capacity(base.len() * 2);
    for b in base {
        out.push(b.to_string());
        out.push(format!("{b}+pc"));
    }
    out
}

fn base_entry(name: &str) -> Result<CatalogEntry> {
    let (structure, bbox): (AffineStructure, f64) = match name {
        "flat2" => (AffineStructure::flat(2, "flat2"), 0.8),
        "flat3" => (AffineStructure::flat(3, "flat3"), 0.8),
        "sphere2" => (
            AffineStructure::from_metric(
                2,
                "sphere2",
                diagonal_metric(2, conformal_factor_field(1.0)),
            ),
            0.8,
        ),
        "hyperbolic2" => (
            AffineStructure::from_metric(
                2,
                "hyperbolic2",
                diagonal_metric(2, conformal_factor_field(-1.0)),
            ),
            0.6,
        ),
        "liouville" => (
            AffineStructure::from_metric(2, "liouville", diagonal_metric(2, liouville_conformal())),
            0.8,
        ),
        "perturbed2" => {
            let factor = Field::from_fn(|v| {
                // 1 + 0.3 x^2 y
                let t = v[0].mul(&v[0])?.mul(&v[1])?.scale(0.3);
                Jet::constant(2, v[0].order(), 1.0).add(&t)
            });
            (
                AffineStructure::from_metric(2, "perturbed2", diagonal_metric(2, factor)),
                0.8,
            )
        }
        other => return Err(Error::Config(format!("unknown catalog geometry `{other}`"))),
    };
    let n = structure.n();
    Ok(CatalogEntry {
        name: name.to_string(),
        structure: Arc::new(structure),
        box_lo: vec![-bbox; n],
        box_hi: vec![bbox; n],
        jet_order: 6,
    })
}

/// Standard representative change `Υ = x dy`.
pub fn standard_upsilon(n: usize) -> Vec<Field> {
    let mut ups = vec![Field::Zero; n];
    ups[1] = Field::from_fn(|v| Ok(v[0].clone()));
    ups
}

/// Look up a geometry by name (`<base>` or `<base>+pc`).
pub fn get(name: &str) -> Result<CatalogEntry> {
    if let Some(base) = name.strip_suffix("+pc") {
        let entry = base_entry(base)?;
        let changed = entry
            .structure
            .projective_change(standard_upsilon(entry.n()), name);
        Ok(CatalogEntry {
            name: name.to_string(),
            structure: Arc::new(changed),
            box_lo: entry.box_lo,
            box_hi: entry.box_hi,
            jet_order: entry.jet_order,
        })
    } else {
        base_entry(name)
    }
}

/// The base (unchanged) entry backing a name, used when a weighted candidate
/// needs the metric that defines the projective class.
pub fn base_of(name: &str) -> Result<CatalogEntry> {
    base_entry(name.strip_suffix("+pc").unwrap_or(name))
}

/// The Liouville first-integral candidate: classical
/// `k = (f+g) diag(g, -f)`, the rank-2 Killing tensor of
/// `(g(y) p_x^2 - f(x) p_y^2)/(f+g)`, density-lifted.
pub fn liouville_rank2(structure: &AffineStructure) -> Result<KillingCandidate> {
    let kxx = Field::from_fn(|v| {
        let fg = liouville_f(v)?.add(&liouville_g(v)?)?;
        fg.mul(&liouville_g(v)?)
    });
    let kyy = Field::from_fn(|v| {
        let fg = liouville_f(v)?.add(&liouville_g(v)?)?;
        fg.mul(&liouville_f(v)?)?.neg().into_ok()
    });
    KillingCandidate::lift_classical(structure, 2, vec![kxx, Field::Zero, Field::Zero, kyy])
}

trait IntoOk: Sized {
    fn into_ok(self) -> Result<Self> {
        Ok(self)
    }
}
impl IntoOk for Jet {}

/// The metric itself as a rank-2 candidate (`∇g = 0` makes it Killing).
pub fn metric_rank2(structure: &AffineStructure) -> Result<KillingCandidate> {
    let metric = structure
        .metric_fields()
        .ok_or_else(|| Error::Config("metric candidate needs a metric".into()))?
        .to_vec();
    KillingCandidate::lift_classical(structure, 2, metric)
}

/// The rotation field about the chart origin, lowered and lifted; Killing
/// for every rotationally symmetric conformal factor (round sphere and
/// hyperbolic disk alike).
pub fn rotation_field(structure: &AffineStructure) -> Result<KillingCandidate> {
    KillingCandidate::lower_vector(
        structure,
        vec![
            Field::from_fn(|v| Ok(v[1].neg())),
            Field::from_fn(|v| Ok(v[0].clone())),
        ],
    )
}

/// The three classical Killing fields of the round sphere in stereographic
/// coordinates: the rotation about the projection axis and the two
/// rotations that act as conformal translations.
pub fn sphere_killing_fields(structure: &AffineStructure) -> Result<Vec<KillingCandidate>> {
    let v1 = vec![
        Field::from_fn(|v| Ok(v[1].neg())),
        Field::from_fn(|v| Ok(v[0].clone())),
    ];
    let v2 = vec![
        Field::from_fn(|v| {
            // (1 + x^2 - y^2)/2
            let x2 = v[0].mul(&v[0])?;
            let y2 = v[1].mul(&v[1])?;
            Jet::constant(2, v[0].order(), 1.0)
                .add(&x2)?
                .sub(&y2)?
                .scale(0.5)
                .into_ok()
        }),
        Field::from_fn(|v| v[0].mul(&v[1])),
    ];
    let v3 = vec![
        Field::from_fn(|v| v[0].mul(&v[1])),
        Field::from_fn(|v| {
            let x2 = v[0].mul(&v[0])?;
            let y2 = v[1].mul(&v[1])?;
            Jet::constant(2, v[0].order(), 1.0)
                .sub(&x2)?
                .add(&y2)?
                .scale(0.5)
                .into_ok()
        }),
    ];
    Ok(vec![
        KillingCandidate::lower_vector(structure, v1)?,
        KillingCandidate::lower_vector(structure, v2)?,
        KillingCandidate::lower_vector(structure, v3)?,
    ])
}
