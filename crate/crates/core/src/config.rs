//! Geometry configuration files.
//!
//! Line-based `key = value` text with expression-string fields:
//!
//! ```text
//! # a metric chart
//! name = my-sphere
//! dim = 2
//! coords = x y
//! g_0_0 = 4/(1+x^2+y^2)^2
//! g_1_1 = 4/(1+x^2+y^2)^2
//! box = -0.8 0.8
//! jet_order = 6
//! # optional representative change
//! upsilon_1 = x
//! ```
//!
//! Exactly one of the metric (`g_a_b`) or connection (`gamma_a_b_c`,
//! symmetric in `a b`) families must be present.  Metric entries may name
//! either triangle; giving both with different expressions is a schema
//! error.  Expressions are parsed eagerly so syntax errors surface with
//! byte offsets into the value.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::catalog::CatalogEntry;
use crate::error::{Error, Result};
use crate::expr::{parse, same_tree, Expr};
use crate::geometry::{AffineStructure, Field};

/// Parsed and validated geometry configuration.
#[derive(Debug, Clone)]
pub struct GeometryConfig {
    pub name: String,
    pub dim: usize,
    pub coords: Vec<String>,
    /// Dense `n*n` metric expressions, when metric-backed.
    pub metric: Option<Vec<Expr>>,
    /// Dense `n*n*n` connection expressions, when connection-backed.
    pub gamma: Option<Vec<Expr>>,
    /// Optional representative-change one-form.
    pub upsilon: Option<Vec<Expr>>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub jet_order: usize,
}

fn parse_kv(src: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if out.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }
    Ok(out)
}

/// Parse configuration text into a validated [`GeometryConfig`].
pub fn parse_config(src: &str) -> Result<GeometryConfig> {
    let kv = parse_kv(src)?;
    let name = kv
        .get("name")
        .cloned()
        .ok_or_else(|| Error::Config("missing `name`".into()))?;
    let dim: usize = kv
        .get("dim")
        .ok_or_else(|| Error::Config("missing `dim`".into()))?
        .parse()
        .map_err(|_| Error::Config("`dim` must be a positive integer".into()))?;
    if dim == 0 {
        return Err(Error::Config("`dim` must be positive".into()));
    }
    let coords: Vec<String> = kv
        .get("coords")
        .map(|s| s.split_whitespace().map(|t| t.to_string()).collect())
        .unwrap_or_else(|| {
            ["x", "y", "z", "w"][..dim.min(4)]
                .iter()
                .map(|s| s.to_string())
                .collect()
        });
    if coords.len() != dim {
        return Err(Error::Config(format!(
            "expected {dim} coordinate names, got {}",
            coords.len()
        )));
    }

    let jet_order: usize = match kv.get("jet_order") {
        Some(s) => s
            .parse()
            .map_err(|_| Error::Config("`jet_order` must be an integer".into()))?,
        None => 6,
    };

    let parse_pair = |s: &str| -> Result<(f64, f64)> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Config("box entries need two numbers".into()));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| Error::Config("bad box number".into()))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| Error::Config("bad box number".into()))?;
        if lo >= hi {
            return Err(Error::Config("box lower bound must be below upper".into()));
        }
        Ok((lo, hi))
    };
    let mut box_lo = vec![-0.8; dim];
    let mut box_hi = vec![0.8; dim];
    if let Some(s) = kv.get("box") {
        let (lo, hi) = parse_pair(s)?;
        box_lo = vec![lo; dim];
        box_hi = vec![hi; dim];
    }
    for (k, v) in &kv {
        if let Some(axis) = k.strip_prefix("box_") {
            let a: usize = axis
                .parse()
                .map_err(|_| Error::Config(format!("bad box axis in `{k}`")))?;
            if a >= dim {
                return Err(Error::Config(format!("box axis {a} out of range")));
            }
            let (lo, hi) = parse_pair(v)?;
            box_lo[a] = lo;
            box_hi[a] = hi;
        }
    }

    let mut metric: Vec<Option<Expr>> = vec![None; dim * dim];
    let mut has_metric = false;
    let mut gamma: Vec<Option<Expr>> = vec![None; dim * dim * dim];
    let mut has_gamma = false;
    for (k, v) in &kv {
        if let Some(rest) = k.strip_prefix("g_") {
            let idx: Vec<&str> = rest.split('_').collect();
            if idx.len() != 2 {
                return Err(Error::Config(format!("bad metric key `{k}`")));
            }
            let a: usize = idx[0]
                .parse()
                .map_err(|_| Error::Config(format!("bad metric index in `{k}`")))?;
            let b: usize = idx[1]
                .parse()
                .map_err(|_| Error::Config(format!("bad metric index in `{k}`")))?;
            if a >= dim || b >= dim {
                return Err(Error::Config(format!("metric index out of range in `{k}`")));
            }
            let e = parse(v, &coords)?;
            has_metric = true;
            metric[a * dim + b] = Some(e);
        } else if let Some(rest) = k.strip_prefix("gamma_") {
            let idx: Vec<&str> = rest.split('_').collect();
            if idx.len() != 3 {
                return Err(Error::Config(format!("bad connection key `{k}`")));
            }
            let a: usize = idx[0]
                .parse()
                .map_err(|_| Error::Config("bad index".into()))?;
            let b: usize = idx[1]
                .parse()
                .map_err(|_| Error::Config("bad index".into()))?;
            let c: usize = idx[2]
                .parse()
                .map_err(|_| Error::Config("bad index".into()))?;
            if a >= dim || b >= dim || c >= dim {
                return Err(Error::Config(format!(
                    "connection index out of range in `{k}`"
                )));
            }
            let e = parse(v, &coords)?;
            has_gamma = true;
            gamma[(a * dim + b) * dim + c] = Some(e);
        }
    }
    if has_metric && has_gamma {
        return Err(Error::Config(
            "give either metric components or connection components, not both".into(),
        ));
    }
    if !has_metric && !has_gamma {
        return Err(Error::Config(
            "one of metric (g_a_b) or connection (gamma_a_b_c) components is required".into(),
        ));
    }

    let metric = if has_metric {
        let mut full = Vec::with_capacity(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                let ab = metric[a * dim + b].clone();
                let ba = metric[b * dim + a].clone();
                let e = match (ab, ba) {
                    (Some(x), Some(y)) => {
                        if !same_tree(&x, &y) {
                            return Err(Error::Config(format!(
                                "metric must be symmetric: g_{a}_{b} differs from g_{b}_{a}"
                            )));
                        }
                        x
                    }
                    (Some(x), None) | (None, Some(x)) => x,
                    (None, None) => parse("0", &coords)?,
                };
                full.push(e);
            }
        }
        Some(full)
    } else {
        None
    };

    let gamma = if has_gamma {
        let mut full = Vec::with_capacity(dim * dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                for c in 0..dim {
                    let abc = gamma[(a * dim + b) * dim + c].clone();
                    let bac = gamma[(b * dim + a) * dim + c].clone();
                    let e = match (abc, bac) {
                        (Some(x), Some(y)) => {
                            if !same_tree(&x, &y) {
                                return Err(Error::Config(format!(
                                    "connection must be symmetric: gamma_{a}_{b}_{c} differs from gamma_{b}_{a}_{c}"
                                )));
                            }
                            x
                        }
                        (Some(x), None) | (None, Some(x)) => x,
                        (None, None) => parse("0", &coords)?,
                    };
                    full.push(e);
                }
            }
        }
        Some(full)
    } else {
        None
    };

    let upsilon = {
        let mut ups: Vec<Option<Expr>> = vec![None; dim];
        let mut any = false;
        for (k, v) in &kv {
            if let Some(axis) = k.strip_prefix("upsilon_") {
                let a: usize = axis
                    .parse()
                    .map_err(|_| Error::Config(format!("bad upsilon key `{k}`")))?;
                if a >= dim {
                    return Err(Error::Config(format!("upsilon index {a} out of range")));
                }
                ups[a] = Some(parse(v, &coords)?);
                any = true;
            }
        }
        if any {
            let zero = parse("0", &coords)?;
            Some(
                ups.into_iter()
                    .map(|e| e.unwrap_or_else(|| zero.clone()))
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        }
    };

    Ok(GeometryConfig {
        name,
        dim,
        coords,
        metric,
        gamma,
        upsilon,
        box_lo,
        box_hi,
        jet_order,
    })
}

/// Load a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<GeometryConfig> {
    let src = std::fs::read_to_string(path)?;
    parse_config(&src)
}

impl GeometryConfig {
    /// Build the runnable catalog entry (applying the representative change
    /// when an `upsilon` one-form is configured).
    pub fn to_entry(&self) -> Result<CatalogEntry> {
        let exprs_to_fields = |exprs: &[Expr]| -> Vec<Field> {
            exprs
                .iter()
                .map(|e| Field::Expr(Arc::new(e.clone())))
                .collect()
        };
        let base = if let Some(m) = &self.metric {
            AffineStructure::from_metric(self.dim, &self.name, exprs_to_fields(m))
        } else if let Some(g) = &self.gamma {
            AffineStructure::from_gamma(self.dim, &self.name, exprs_to_fields(g))
        } else {
            return Err(Error::Config("no connection data".into()));
        };
        let structure = if let Some(ups) = &self.upsilon {
            let base = Arc::new(base);
            Arc::new(base.projective_change(exprs_to_fields(ups), &format!("{}+pc", self.name)))
        } else {
            Arc::new(base)
        };
        Ok(CatalogEntry {
            name: self.name.clone(),
            structure,
            box_lo: self.box_lo.clone(),
            box_hi: self.box_hi.clone(),
            jet_order: self.jet_order,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_style_config_loads() {
        let cfg = parse_config(
            "name = sphere2\ndim = 2\ncoords = x y\n\
             g_0_0 = 4/(1+x^2+y^2)^2\ng_1_1 = 4/(1+x^2+y^2)^2\n",
        )
        .unwrap();
        assert_eq!(cfg.dim, 2);
        let entry = cfg.to_entry().unwrap();
        let gamma = entry.structure.gamma_jets(&[0.0, 0.0], 1).unwrap();
        assert!(gamma.value().norm() < 1e-13);
    }

    #[test]
    fn flat_connection_config() {
        let cfg = parse_config("name = flat2\ndim = 2\ngamma_0_0_0 = 0\n").unwrap();
        assert!(cfg.metric.is_none());
        let entry = cfg.to_entry().unwrap();
        assert_eq!(entry.n(), 2);
    }

    #[test]
    fn asymmetric_metric_rejected() {
        let r = parse_config("name = bad\ndim = 2\ng_0_0 = 1\ng_1_1 = 1\ng_0_1 = x\ng_1_0 = y\n");
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn both_metric_and_connection_rejected() {
        let r = parse_config("name = bad\ndim = 2\ng_0_0 = 1\ngamma_0_0_0 = 0\n");
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn syntax_error_reported() {
        let r = parse_config("name = bad\ndim = 2\ng_0_0 = 1+\ng_1_1 = 1\n");
        assert!(matches!(r, Err(Error::Syntax { .. })));
    }

    #[test]
    fn unknown_variable_rejected() {
        let r = parse_config("name = bad\ndim = 2\ng_0_0 = 1+q\ng_1_1 = 1\n");
        assert!(matches!(r, Err(Error::Name { .. })));
    }

    #[test]
    fn upsilon_applies_representative_change() {
        let cfg = parse_config("name = flat2\ndim = 2\ngamma_0_0_0 = 0\nupsilon_1 = x\n").unwrap();
        let entry = cfg.to_entry().unwrap();
        let gamma = entry.structure.gamma_jets(&[0.5, 0.2], 0).unwrap();
        // Upsilon = (0, x): gamma'_{11}^1 = 2*Upsilon_1 = 2x = 1.0 at x=0.5
        assert!((gamma.get(&[1, 1, 1]).value() - 1.0).abs() < 1e-15);
    }
}
