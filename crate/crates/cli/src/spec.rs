//! Problem specifications: the JSON schema, flag shorthands and resolution.

use std::fs;

use polycap::capacity::TargetSet;
use polycap::{FamilySpec, Mode, RectangularSet, TestFunctionPhi, TreeSpec, Vertex, Weight};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

/// A user input error tied to one field of the problem specification.
#[derive(Debug)]
pub struct SchemaError {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for SchemaError {}

pub fn schema(field: &'static str, message: impl ToString) -> SchemaError {
    SchemaError {
        field,
        message: message.to_string(),
    }
}

/// Target of a capacity problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetDesc {
    /// `full-boundary`.
    Named(String),
    /// A rectangular set given by its boxes; the target is its boundary cells.
    Boxes(Vec<Vertex>),
    /// Explicit vertices and cells.
    Points(TargetSet),
}

impl TargetDesc {
    pub fn resolve(&self, tree: &TreeSpec) -> Result<TargetSet, SchemaError> {
        match self {
            TargetDesc::Named(n) if n == "full-boundary" => Ok(TargetSet::full_boundary(tree)),
            TargetDesc::Named(n) => Err(schema("target", format!("unknown target '{n}'"))),
            TargetDesc::Boxes(b) => {
                let set = RectangularSet::new(tree, b.clone()).map_err(|e| schema("target", e))?;
                Ok(TargetSet::from_rect(tree, &set))
            }
            TargetDesc::Points(p) => {
                p.check(tree).map_err(|e| schema("target", e))?;
                Ok(p.clone())
            }
        }
    }
}

/// Everything a run depends on. Reports echo the resolved spec, and feeding
/// the echo back through `--spec` reproduces the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Weight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetDesc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<TestFunctionPhi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_ceiling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximal_budget: Option<usize>,
}

impl ProblemSpec {
    pub fn load(path: &str) -> Result<Self, SchemaError> {
        let text = if path == "-" {
            std::io::read_to_string(std::io::stdin()).map_err(|e| schema("spec", e))?
        } else {
            fs::read_to_string(path).map_err(|e| schema("spec", format!("{path}: {e}")))?
        };
        serde_json::from_str(&text).map_err(|e| schema("spec", e))
    }

    pub fn tree(&self) -> Result<&TreeSpec, SchemaError> {
        self.tree.as_ref().ok_or_else(|| schema("tree", "required"))
    }
}

/// JSON given inline, or read from a file with `@path`.
fn json_or_file(field: &'static str, text: &str) -> Result<Option<Value>, SchemaError> {
    if let Some(path) = text.strip_prefix('@') {
        let body = fs::read_to_string(path).map_err(|e| schema(field, format!("{path}: {e}")))?;
        return serde_json::from_str(&body)
            .map(Some)
            .map_err(|e| schema(field, e));
    }
    let t = text.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        return serde_json::from_str(text)
            .map(Some)
            .map_err(|e| schema(field, e));
    }
    Ok(None)
}

/// `key=v1,v2,key2=v3`: values without a key extend the previous key.
fn key_values(field: &'static str, text: &str) -> Result<Vec<(String, Vec<String>)>, SchemaError> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.split_once('=') {
            Some((k, v)) => out.push((k.trim().replace('-', "_"), vec![v.trim().to_string()])),
            None => match out.last_mut() {
                Some((_, vals)) => vals.push(tok.to_string()),
                None => return Err(schema(field, format!("expected key=value, got '{tok}'"))),
            },
        }
    }
    Ok(out)
}

fn scalar(v: &str) -> Value {
    if let Ok(i) = v.parse::<u64>() {
        return Value::Number(i.into());
    }
    if let Some(n) = v.parse::<f64>().ok().and_then(Number::from_f64) {
        return Value::Number(n);
    }
    match v {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(v.to_string()),
    }
}

/// `name:key=value,...` into a JSON object tagged by `tag`. Keys listed in
/// `arrays` always become arrays; other keys become arrays only when they
/// carry several values.
fn tagged_shorthand(
    field: &'static str,
    tag: &str,
    text: &str,
    arrays: &[&str],
) -> Result<Value, SchemaError> {
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut obj = Map::new();
    obj.insert(tag.into(), Value::String(name.trim().to_string()));
    for (k, vals) in key_values(field, rest)? {
        let v = if vals.len() == 1 && !arrays.contains(&k.as_str()) {
            scalar(&vals[0])
        } else {
            Value::Array(vals.iter().map(|v| scalar(v)).collect())
        };
        obj.insert(k, v);
    }
    Ok(Value::Object(obj))
}

fn numbers<T: std::str::FromStr>(
    field: &'static str,
    vals: &[String],
) -> Result<Vec<T>, SchemaError> {
    vals.iter()
        .map(|v| {
            v.parse()
                .map_err(|_| schema(field, format!("'{v}' is not a number")))
        })
        .collect()
}

/// `d=2,n=3,4` or `n=3` or `{"depths":[3,4]}`.
pub fn parse_tree(text: &str) -> Result<TreeSpec, SchemaError> {
    if let Some(v) = json_or_file("tree", text)? {
        return serde_json::from_value(v).map_err(|e| schema("tree", e));
    }
    let mut dim: Option<usize> = None;
    let mut depths: Option<Vec<u32>> = None;
    for (k, vals) in key_values("tree", text)? {
        match k.as_str() {
            "d" => {
                dim = Some(
                    numbers::<usize>("tree", &vals)?
                        .first()
                        .copied()
                        .unwrap_or(0),
                )
            }
            "n" => depths = Some(numbers("tree", &vals)?),
            other => return Err(schema("tree", format!("unknown key '{other}'"))),
        }
    }
    let mut depths = depths.ok_or_else(|| schema("tree", "missing n"))?;
    match dim {
        Some(d) if depths.len() == 1 => depths = vec![depths[0]; d],
        Some(d) if d != depths.len() => {
            return Err(schema(
                "tree",
                format!("d={d} but {} depths given", depths.len()),
            ))
        }
        _ => {}
    }
    TreeSpec::new(depths).map_err(|e| schema("tree", e))
}

/// `s=0.5` (all axes), `s=0.5,0` (per axis) or a JSON weight.
pub fn parse_weight(text: &str, dim: usize) -> Result<Weight, SchemaError> {
    if let Some(v) = json_or_file("weight", text)? {
        return serde_json::from_value(v).map_err(|e| schema("weight", e));
    }
    let kv = key_values("weight", text)?;
    let [(k, vals)] = kv.as_slice() else {
        return Err(schema("weight", "expected s=..."));
    };
    if k != "s" {
        return Err(schema("weight", format!("unknown key '{k}'")));
    }
    let mut s: Vec<f64> = numbers("weight", vals)?;
    if s.len() == 1 {
        s = vec![s[0]; dim];
    }
    Weight::polynomial(s).map_err(|e| schema("weight", e))
}

pub fn parse_measure(text: &str) -> Result<Value, SchemaError> {
    match json_or_file("measure", text)? {
        Some(v) => Ok(v),
        None => tagged_shorthand("measure", "gen", text, &["cell"]),
    }
}

pub fn parse_target(text: &str) -> Result<TargetDesc, SchemaError> {
    match json_or_file("target", text)? {
        Some(v) => serde_json::from_value(v).map_err(|e| schema("target", e)),
        None => Ok(TargetDesc::Named(text.trim().to_string())),
    }
}

pub fn parse_family(text: &str) -> Result<FamilySpec, SchemaError> {
    let v = match json_or_file("family", text)? {
        Some(v) => v,
        None => tagged_shorthand("family", "gen", text, &[])?,
    };
    serde_json::from_value(v).map_err(|e| schema("family", e))
}

pub fn parse_phi(text: &str) -> Result<TestFunctionPhi, SchemaError> {
    let v = match json_or_file("phi", text)? {
        Some(v) => v,
        None => tagged_shorthand("phi", "kind", text, &["a", "b", "values"])?,
    };
    serde_json::from_value(v).map_err(|e| schema("phi", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_shorthands() {
        assert_eq!(parse_tree("d=1,n=3").unwrap().depths(), &[3]);
        assert_eq!(parse_tree("d=2,n=3").unwrap().depths(), &[3, 3]);
        assert_eq!(parse_tree("d=2,n=3,4").unwrap().depths(), &[3, 4]);
        assert_eq!(parse_tree("n=2,5").unwrap().depths(), &[2, 5]);
        assert_eq!(parse_tree(r#"{"depths":[1,2]}"#).unwrap().depths(), &[1, 2]);
        assert!(parse_tree("d=3,n=3,4").is_err());
        assert!(parse_tree("x=1").is_err());
    }

    #[test]
    fn weight_shorthands() {
        assert_eq!(parse_weight("s=0", 2).unwrap(), Weight::unit(2));
        assert_eq!(
            parse_weight("s=0.5,0", 2).unwrap(),
            Weight::polynomial(vec![0.5, 0.0]).unwrap()
        );
        assert!(parse_weight("s=1.5", 1).is_err());
        assert!(parse_weight(r#"{"type":"table","axes":[[1,2]]}"#, 1).is_ok());
    }

    #[test]
    fn tagged_shorthands() {
        assert_eq!(
            parse_measure("md").unwrap(),
            serde_json::json!({"gen": "md"})
        );
        assert_eq!(
            parse_measure("atom-cell:cell=1,2,mass=0.5").unwrap(),
            serde_json::json!({"gen": "atom-cell", "cell": [1, 2], "mass": 0.5})
        );
        assert_eq!(
            parse_family("single-boxes:max-level=2").unwrap(),
            FamilySpec::single_boxes(2)
        );
        assert_eq!(
            parse_family("random-unions:k=3,count=10,seed=4").unwrap(),
            FamilySpec::random_unions(3, 10, 4)
        );
        assert_eq!(
            parse_phi("product-power:a=1,1").unwrap(),
            TestFunctionPhi::product_power(vec![1.0, 1.0])
        );
        assert_eq!(
            parse_phi("product-log:b=3").unwrap(),
            TestFunctionPhi::product_log(vec![3.0])
        );
    }

    #[test]
    fn targets() {
        let t = parse_tree("d=1,n=3").unwrap();
        assert_eq!(
            parse_target("full-boundary")
                .unwrap()
                .resolve(&t)
                .unwrap()
                .len(),
            4
        );
        assert_eq!(
            parse_target(r#"["1:0"]"#)
                .unwrap()
                .resolve(&t)
                .unwrap()
                .cells
                .len(),
            2
        );
        let p = parse_target(r#"{"vertices":["2:1"],"cells":[[3]]}"#)
            .unwrap()
            .resolve(&t)
            .unwrap();
        assert_eq!((p.vertices.len(), p.cells.len()), (1, 1));
        assert!(parse_target("nowhere").unwrap().resolve(&t).is_err());
    }
}
