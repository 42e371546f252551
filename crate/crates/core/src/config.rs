//! JSON system definitions. Every error carries the JSON pointer of the
//! offending value.
//!
//! ```json
//! {
//!   "name": "flat", "n": 3, "k": 3, "mode": "form",
//!   "coefficients": { "1,2,3": "1" },
//!   "hamiltonians": ["x1", "x2"],
//!   "params": {}, "domain": [[-1, 1], [-1, 1], [-1, 1]], "aliases": []
//! }
//! ```
//!
//! Optional keys: `base_point`, `casimirs`, `invariants` (name → expression),
//! `measure_density`, `companion` (`mode`, `coefficients`, `hamiltonians`)
//! and `route_sign`.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::dynamics::{Route, Structure, SystemSpec};
use crate::error::{Error, Result};
use crate::expr::{parse, Params, ScalarField, Symbols};
use crate::exterior::{FormField, MultiIndex, MultiVectorField};
use crate::sample::DomainBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Form,
    Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteDocument {
    pub mode: Mode,
    pub coefficients: BTreeMap<String, String>,
    pub hamiltonians: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigDocument {
    pub name: String,
    pub n: usize,
    pub k: usize,
    #[serde(flatten)]
    pub primary: RouteDocument,
    pub params: BTreeMap<String, f64>,
    pub domain: Vec<(f64, f64)>,
    pub aliases: Vec<String>,
    pub base_point: Option<Vec<f64>>,
    pub casimirs: Vec<String>,
    pub invariants: BTreeMap<String, String>,
    pub measure_density: Option<String>,
    pub companion: Option<RouteDocument>,
    pub route_sign: f64,
}

fn fail(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn child(pointer: &str, key: &str) -> String {
    format!("{pointer}/{}", escape(key))
}

struct Object<'a> {
    map: &'a Map<String, Value>,
    pointer: String,
}

impl<'a> Object<'a> {
    fn new(value: &'a Value, pointer: &str, allowed: &[&str]) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| fail(pointer, "expected an object"))?;
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(fail(child(pointer, k), "unknown key"));
        }
        Ok(Object {
            map,
            pointer: pointer.into(),
        })
    }

    fn at(&self, key: &str) -> String {
        child(&self.pointer, key)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn required(&self, key: &str) -> Result<&'a Value> {
        self.get(key)
            .ok_or_else(|| fail(self.at(key), "missing required key"))
    }

    fn string(&self, key: &str) -> Result<String> {
        self.required(key)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| fail(self.at(key), "expected a string"))
    }

    fn count(&self, key: &str) -> Result<usize> {
        self.required(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| fail(self.at(key), "expected a non-negative integer"))
    }

    fn strings(&self, key: &str) -> Result<Vec<String>> {
        let Some(v) = self.get(key) else {
            return Ok(Vec::new());
        };
        let items = v
            .as_array()
            .ok_or_else(|| fail(self.at(key), "expected an array of strings"))?;
        items
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| fail(format!("{}/{i}", self.at(key)), "expected a string"))
            })
            .collect()
    }

    fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let items = v
            .as_array()
            .ok_or_else(|| fail(self.at(key), "expected an array of numbers"))?;
        items
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_f64()
                    .ok_or_else(|| fail(format!("{}/{i}", self.at(key)), "expected a number"))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn string_map(&self, key: &str) -> Result<BTreeMap<String, String>> {
        let Some(v) = self.get(key) else {
            return Ok(BTreeMap::new());
        };
        let map = v
            .as_object()
            .ok_or_else(|| fail(self.at(key), "expected an object of strings"))?;
        map.iter()
            .map(|(k, s)| {
                s.as_str()
                    .map(|s| (k.clone(), s.to_string()))
                    .ok_or_else(|| fail(child(&self.at(key), k), "expected a string"))
            })
            .collect()
    }
}

fn route_document(obj: &Object<'_>) -> Result<RouteDocument> {
    let mode = match obj.string("mode")?.as_str() {
        "form" => Mode::Form,
        "tensor" => Mode::Tensor,
        other => {
            return Err(fail(
                obj.at("mode"),
                format!("expected \"form\" or \"tensor\", found \"{other}\""),
            ))
        }
    };
    let coefficients = obj.string_map("coefficients")?;
    if obj.get("coefficients").is_none() {
        return Err(fail(obj.at("coefficients"), "missing required key"));
    }
    Ok(RouteDocument {
        mode,
        coefficients,
        hamiltonians: obj.strings("hamiltonians")?,
    })
}

const ROUTE_KEYS: [&str; 3] = ["mode", "coefficients", "hamiltonians"];
const TOP_KEYS: [&str; 15] = [
    "name",
    "n",
    "k",
    "mode",
    "coefficients",
    "hamiltonians",
    "params",
    "domain",
    "aliases",
    "base_point",
    "casimirs",
    "invariants",
    "measure_density",
    "companion",
    "route_sign",
];

impl ConfigDocument {
    /// Parses and shape-checks a document; expressions are compiled by
    /// [`ConfigDocument::to_system`].
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| fail("", format!("malformed JSON: {e}")))?;
        let top = Object::new(&value, "", &TOP_KEYS)?;
        let name = top.string("name")?;
        let n = top.count("n")?;
        let k = top.count("k")?;
        let primary = route_document(&top)?;
        let params = match top.get("params") {
            None => BTreeMap::new(),
            Some(v) => {
                let map = v
                    .as_object()
                    .ok_or_else(|| fail(top.at("params"), "expected an object of numbers"))?;
                map.iter()
                    .map(|(k, x)| {
                        x.as_f64()
                            .map(|x| (k.clone(), x))
                            .ok_or_else(|| fail(child(&top.at("params"), k), "expected a number"))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let domain_value = top.required("domain")?;
        let rows = domain_value
            .as_array()
            .ok_or_else(|| fail(top.at("domain"), "expected an array of [lo, hi] pairs"))?;
        let domain = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let p = format!("{}/{i}", top.at("domain"));
                match r.as_array().map(|a| a.as_slice()) {
                    Some([lo, hi]) => match (lo.as_f64(), hi.as_f64()) {
                        (Some(lo), Some(hi)) if lo < hi => Ok((lo, hi)),
                        (Some(_), Some(_)) => Err(fail(p, "need lo < hi")),
                        _ => Err(fail(p, "bounds must be numbers")),
                    },
                    _ => Err(fail(p, "expected [lo, hi]")),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let companion = match top.get("companion") {
            None => None,
            Some(v) => Some(route_document(&Object::new(
                v,
                &top.at("companion"),
                &ROUTE_KEYS,
            )?)?),
        };
        let route_sign = match top.get("route_sign") {
            None => 1.0,
            Some(v) => match v.as_f64() {
                Some(s) if s == 1.0 || s == -1.0 => s,
                _ => return Err(fail(top.at("route_sign"), "expected 1 or -1")),
            },
        };
        let measure_density = match top.get("measure_density") {
            None => None,
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| fail(top.at("measure_density"), "expected a string"))?
                    .to_string(),
            ),
        };
        let doc = ConfigDocument {
            name,
            n,
            k,
            primary,
            params,
            domain,
            aliases: top.strings("aliases")?,
            base_point: top.numbers("base_point")?,
            casimirs: top.strings("casimirs")?,
            invariants: top.string_map("invariants")?,
            measure_density,
            companion,
            route_sign,
        };
        doc.check_shape()?;
        Ok(doc)
    }

    fn check_shape(&self) -> Result<()> {
        let (n, k) = (self.n, self.k);
        if n == 0 || n > crate::exterior::MAX_DIM {
            return Err(fail(
                "/n",
                format!("dimension must be in 1..={}", crate::exterior::MAX_DIM),
            ));
        }
        if k < 2 || k > n {
            return Err(fail("/k", format!("need 2 ≤ k ≤ n, found k = {k}")));
        }
        if self.domain.len() != n {
            return Err(fail(
                "/domain",
                format!("expected {n} intervals, found {}", self.domain.len()),
            ));
        }
        if !self.aliases.is_empty() && self.aliases.len() != n {
            return Err(fail(
                "/aliases",
                format!("expected {n} names, found {}", self.aliases.len()),
            ));
        }
        if let Some(b) = &self.base_point {
            if b.len() != n {
                return Err(fail(
                    "/base_point",
                    format!("expected {n} entries, found {}", b.len()),
                ));
            }
        }
        if self.primary.hamiltonians.len() + 1 != k {
            return Err(fail(
                "/hamiltonians",
                format!(
                    "k = {k} needs {} Hamiltonians, found {}",
                    k - 1,
                    self.primary.hamiltonians.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn symbols(&self) -> Symbols {
        Symbols::new(self.n)
            .with_aliases(&self.aliases)
            .with_params(self.params.keys())
    }

    /// Compiles every expression and validates the resulting system.
    pub fn to_system(&self) -> Result<SystemSpec> {
        let symbols = self.symbols();
        let n = self.n;
        let scalar = |text: &str, pointer: String| -> Result<ScalarField> {
            ScalarField::parse(text, &symbols).map_err(|e| fail(pointer, e.to_string()))
        };
        let route = |doc: &RouteDocument, prefix: &str| -> Result<Route> {
            let mut terms = Vec::new();
            let mut degree = None;
            for (key, text) in &doc.coefficients {
                let p = child(&format!("{prefix}/coefficients"), key);
                let index =
                    MultiIndex::parse_in(key, n).map_err(|e| fail(p.clone(), e.to_string()))?;
                if *degree.get_or_insert(index.degree()) != index.degree() {
                    return Err(fail(
                        p,
                        "all multi-indices of a route must have the same degree",
                    ));
                }
                let expr = parse(text, &symbols).map_err(|e| fail(p, e.to_string()))?;
                terms.push((index, expr));
            }
            let k = degree.ok_or_else(|| {
                fail(format!("{prefix}/coefficients"), "needs at least one entry")
            })?;
            if doc.hamiltonians.len() + 1 != k {
                return Err(fail(
                    format!("{prefix}/hamiltonians"),
                    format!(
                        "degree {k} needs {} Hamiltonians, found {}",
                        k.saturating_sub(1),
                        doc.hamiltonians.len()
                    ),
                ));
            }
            let hams = doc
                .hamiltonians
                .iter()
                .enumerate()
                .map(|(i, h)| scalar(h, format!("{prefix}/hamiltonians/{i}")))
                .collect::<Result<Vec<_>>>()?;
            let structure = match doc.mode {
                Mode::Form => Structure::Form(FormField::from_terms(n, k, terms)?),
                Mode::Tensor => Structure::Tensor(MultiVectorField::from_terms(n, k, terms)?),
            };
            Ok(Route {
                structure,
                hamiltonians: hams,
            })
        };
        let primary = route(&self.primary, "")?;
        if primary.degree() != self.k {
            return Err(fail(
                "/coefficients",
                format!(
                    "coefficients have degree {}, but k = {}",
                    primary.degree(),
                    self.k
                ),
            ));
        }
        let companion = self
            .companion
            .as_ref()
            .map(|c| route(c, "/companion"))
            .transpose()?;
        if let Some(c) = &companion {
            if c.structure.kind() == primary.structure.kind() {
                return Err(fail("/companion/mode", "companion must use the other mode"));
            }
        }
        let casimirs = self
            .casimirs
            .iter()
            .enumerate()
            .map(|(i, c)| scalar(c, format!("/casimirs/{i}")))
            .collect::<Result<Vec<_>>>()?;
        let invariants = self
            .invariants
            .iter()
            .map(|(name, e)| Ok((name.clone(), scalar(e, child("/invariants", name))?)))
            .collect::<Result<Vec<_>>>()?;
        let measure_density = self
            .measure_density
            .as_deref()
            .map(|m| scalar(m, "/measure_density".into()))
            .transpose()?;
        let domain =
            DomainBox::new(self.domain.clone()).map_err(|e| fail("/domain", e.to_string()))?;
        let base_point = self
            .base_point
            .clone()
            .unwrap_or_else(|| self.domain.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
        let spec = SystemSpec {
            name: self.name.clone(),
            n,
            hamiltonian_names: (1..self.k).map(|i| format!("H{i}")).collect(),
            primary,
            companion,
            route_sign: self.route_sign,
            casimirs,
            invariants,
            measure_density,
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect::<Params>(),
            domain,
            aliases: self.aliases.clone(),
            base_point,
        };
        spec.validate().map_err(|e| match e {
            Error::OutsideDomain { .. } => fail("/base_point", e.to_string()),
            other => fail("", other.to_string()),
        })?;
        Ok(spec)
    }
}

/// Parses and compiles a JSON system definition.
pub fn load_system(text: &str) -> Result<SystemSpec> {
    ConfigDocument::parse(text)?.to_system()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: &str = r#"{
        "name": "flat", "n": 3, "k": 3, "mode": "form",
        "coefficients": {"1,2,3": "a"},
        "hamiltonians": ["x1", "y"],
        "params": {"a": 2.0},
        "domain": [[-1, 1], [-1, 1], [-1, 1]],
        "aliases": ["x", "y", "z"],
        "companion": {"mode": "tensor", "coefficients": {"1,2,3": "1/a"}, "hamiltonians": ["x", "y"]},
        "route_sign": -1
    }"#;

    fn pointer_of(text: &str) -> String {
        match load_system(text) {
            Err(Error::Config { pointer, .. }) => pointer,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn loads_flat_system() {
        let sys = load_system(FLAT).unwrap();
        assert_eq!((sys.n, sys.k()), (3, 3));
        let r = crate::dynamics::vector_field_of(&sys, &[0.1, 0.2, 0.3]).unwrap();
        assert!(r.agreement_residual.unwrap() < 1e-15);
        assert_eq!(r.x, vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn errors_carry_pointers() {
        assert_eq!(
            pointer_of(&FLAT.replace("\"1,2,3\": \"a\"", "\"1,3,2\": \"a\"")),
            "/coefficients/1,3,2"
        );
        assert_eq!(
            pointer_of(&FLAT.replace("\"y\"]", "\"w\"]")),
            "/hamiltonians/1"
        );
        assert_eq!(pointer_of(&FLAT.replace("\"n\": 3", "\"n\": \"3\"")), "/n");
        assert_eq!(
            pointer_of(&FLAT.replace("[-1, 1], [-1, 1]]", "[1, -1], [-1, 1]]")),
            "/domain/1"
        );
        assert_eq!(
            pointer_of(&FLAT.replace("\"mode\": \"tensor\"", "\"mode\": \"form\"")),
            "/companion/mode"
        );
        assert_eq!(
            pointer_of(&FLAT.replace("\"route_sign\"", "\"sign\"")),
            "/sign"
        );
        assert_eq!(
            pointer_of(&FLAT.replace(
                "\"hamiltonians\": [\"x1\", \"y\"]",
                "\"hamiltonians\": [\"x1\"]"
            )),
            "/hamiltonians"
        );
        assert_eq!(pointer_of("[1, 2"), "");
    }

    #[test]
    fn open_forms_rejected() {
        let open = r#"{"name": "open", "n": 2, "k": 2, "mode": "form",
            "coefficients": {"1,2": "x1"}, "hamiltonians": ["x1"],
            "domain": [[-1, 1], [-1, 1]], "base_point": [0.5, 0.5]}"#;
        assert!(load_system(open).is_ok());
        let open3 = r#"{"name": "open", "n": 3, "k": 2, "mode": "form",
            "coefficients": {"1,2": "x3"}, "hamiltonians": ["x1"],
            "domain": [[-1, 1], [-1, 1], [-1, 1]]}"#;
        assert_eq!(pointer_of(open3), "");
    }
}
