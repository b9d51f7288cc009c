//! Tool catalog: normalized tool definitions and the two relationship
//! graphs derived from them.
//!
//! The directed dependency graph links a tool whose output field can feed a
//! required parameter of another tool (matched by name and semantic type).
//! The undirected sharing graph links tools that take identically named
//! parameters but have no dependency edge in either direction. Both graphs
//! keep deterministic, sorted orderings so downstream sampling is
//! reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textutil::to_lower_snake;

/// One input parameter of a tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParameter {
    pub name: String,
    pub semantic_type: String,
    pub required: bool,
    #[serde(default)]
    pub description: String,
}

/// One field of a tool's output schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputField {
    pub name: String,
    pub semantic_type: String,
    #[serde(default)]
    pub description: String,
}

/// A normalized tool definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ToolParameter>,
    #[serde(default)]
    pub output_schema: Vec<OutputField>,
    #[serde(default)]
    pub domain_tag: String,
}

impl Tool {
    pub fn parameter(&self, name: &str) -> Option<&ToolParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn output_field(&self, name: &str) -> Option<&OutputField> {
        self.output_schema.iter().find(|f| f.name == name)
    }

    pub fn required_parameters(&self) -> impl Iterator<Item = &ToolParameter> {
        self.parameters.iter().filter(|p| p.required)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("tool record has no name")]
    MissingName,
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("malformed schema: {0}")]
    MalformedSchema(String),
    #[error("duplicate tool `{0}` in catalog")]
    DuplicateTool(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
}

/// Result of normalizing a raw record. Missing descriptions are flagged,
/// never invented; refinement is a curation step outside this module.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedTool {
    pub tool: Tool,
    /// Required parameters that arrived without a description.
    pub missing_descriptions: Vec<String>,
}

/// Normalize a loosely structured tool record into a [`Tool`].
///
/// Accepts both flat records (`parameters` as a list of objects) and
/// function-calling-schema records (`parameters.properties` plus a
/// `required` list). Parameter and field names are canonicalized to
/// `lower_snake_case`.
pub fn normalize_tool(raw: &serde_json::Value) -> Result<NormalizedTool, CatalogError> {
    let obj = raw
        .as_object()
        .ok_or_else(|| CatalogError::MalformedSchema("record is not an object".into()))?;
    let name_raw = obj
        .get("name")
        .and_then(|v| v.as_str())
        .unwrap_or_default();
    let name = to_lower_snake(name_raw);
    if name.is_empty() {
        return Err(CatalogError::MissingName);
    }
    let description = obj
        .get("description")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .trim()
        .to_string();

    let parameters = parse_parameters(obj.get("parameters"))?;
    let mut seen = BTreeSet::new();
    for p in &parameters {
        if !seen.insert(p.name.clone()) {
            return Err(CatalogError::DuplicateParameter(p.name.clone()));
        }
    }

    let output_schema = parse_output_schema(
        obj.get("returns")
            .or_else(|| obj.get("output_schema"))
            .or_else(|| obj.get("outputs")),
    )?;
    let mut seen_out = BTreeSet::new();
    for f in &output_schema {
        if !seen_out.insert(f.name.clone()) {
            return Err(CatalogError::MalformedSchema(format!(
                "duplicate output field `{}`",
                f.name
            )));
        }
    }

    let domain_tag = obj
        .get("domain_tag")
        .or_else(|| obj.get("domain"))
        .or_else(|| obj.get("category"))
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();

    let missing_descriptions = parameters
        .iter()
        .filter(|p| p.required && p.description.is_empty())
        .map(|p| p.name.clone())
        .collect();

    Ok(NormalizedTool {
        tool: Tool {
            name,
            description,
            parameters,
            output_schema,
            domain_tag,
        },
        missing_descriptions,
    })
}

fn parse_parameters(value: Option<&serde_json::Value>) -> Result<Vec<ToolParameter>, CatalogError> {
    let Some(value) = value else {
        return Ok(Vec::new());
    };
    match value {
        serde_json::Value::Array(items) => items
            .iter()
            .map(|item| {
                let obj = item.as_object().ok_or_else(|| {
                    CatalogError::MalformedSchema("parameter entry is not an object".into())
                })?;
                let name_raw = obj
                    .get("name")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| CatalogError::MalformedSchema("parameter without name".into()))?;
                Ok(ToolParameter {
                    name: to_lower_snake(name_raw),
                    semantic_type: type_of(obj.get("type").or_else(|| obj.get("semantic_type"))),
                    required: obj.get("required").and_then(|v| v.as_bool()).unwrap_or(true),
                    description: str_of(obj.get("description")),
                })
            })
            .collect(),
        serde_json::Value::Object(schema) => {
            // Function-calling style: {"type": "object", "properties": {...}, "required": [...]}
            let props = schema
                .get("properties")
                .and_then(|v| v.as_object())
                .ok_or_else(|| {
                    CatalogError::MalformedSchema("parameters object lacks properties".into())
                })?;
            let required: BTreeSet<String> = schema
                .get("required")
                .and_then(|v| v.as_array())
                .map(|a| {
                    a.iter()
                        .filter_map(|v| v.as_str())
                        .map(to_lower_snake)
                        .collect()
                })
                .unwrap_or_default();
            Ok(props
                .iter()
                .map(|(key, prop)| {
                    let name = to_lower_snake(key);
                    ToolParameter {
                        required: required.contains(&name),
                        semantic_type: type_of(prop.get("type")),
                        description: str_of(prop.get("description")),
                        name,
                    }
                })
                .collect())
        }
        _ => Err(CatalogError::MalformedSchema(
            "parameters is neither a list nor an object".into(),
        )),
    }
}

fn parse_output_schema(value: Option<&serde_json::Value>) -> Result<Vec<OutputField>, CatalogError> {
    let Some(value) = value else {
        return Ok(Vec::new());
    };
    match value {
        serde_json::Value::Array(items) => items
            .iter()
            .map(|item| {
                let obj = item.as_object().ok_or_else(|| {
                    CatalogError::MalformedSchema("output field entry is not an object".into())
                })?;
                let name_raw = obj.get("name").and_then(|v| v.as_str()).ok_or_else(|| {
                    CatalogError::MalformedSchema("output field without name".into())
                })?;
                Ok(OutputField {
                    name: to_lower_snake(name_raw),
                    semantic_type: type_of(obj.get("type").or_else(|| obj.get("semantic_type"))),
                    description: str_of(obj.get("description")),
                })
            })
            .collect(),
        serde_json::Value::Object(schema) => {
            let props = schema
                .get("properties")
                .and_then(|v| v.as_object())
                .ok_or_else(|| {
                    CatalogError::MalformedSchema("returns object lacks properties".into())
                })?;
            Ok(props
                .iter()
                .map(|(key, prop)| OutputField {
                    name: to_lower_snake(key),
                    semantic_type: type_of(prop.get("type")),
                    description: str_of(prop.get("description")),
                })
                .collect())
        }
        _ => Err(CatalogError::MalformedSchema(
            "returns is neither a list nor an object".into(),
        )),
    }
}

fn type_of(value: Option<&serde_json::Value>) -> String {
    value
        .and_then(|v| v.as_str())
        .unwrap_or("string")
        .trim()
        .to_lowercase()
}

fn str_of(value: Option<&serde_json::Value>) -> String {
    value
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .trim()
        .to_string()
}

/// An immutable set of tools keyed by canonical name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ToolCatalog {
    tools: BTreeMap<String, Tool>,
}

impl ToolCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tool: Tool) -> Result<(), CatalogError> {
        if tool.name.is_empty() {
            return Err(CatalogError::MissingName);
        }
        if self.tools.contains_key(&tool.name) {
            return Err(CatalogError::DuplicateTool(tool.name));
        }
        self.tools.insert(tool.name.clone(), tool);
        Ok(())
    }

    pub fn from_tools(tools: impl IntoIterator<Item = Tool>) -> Result<Self, CatalogError> {
        let mut catalog = Self::new();
        for tool in tools {
            catalog.insert(tool)?;
        }
        Ok(catalog)
    }

    /// Ingest a JSON Lines catalog, one raw tool record per line.
    /// Returns the catalog plus per-tool missing-description flags.
    pub fn from_jsonl(text: &str) -> Result<(Self, Vec<NormalizedTool>), CatalogError> {
        let mut catalog = Self::new();
        let mut normalized = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let raw: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| CatalogError::MalformedSchema(format!("bad JSON line: {e}")))?;
            let norm = normalize_tool(&raw)?;
            catalog.insert(norm.tool.clone())?;
            normalized.push(norm);
        }
        Ok((catalog, normalized))
    }

    pub fn get(&self, name: &str) -> Option<&Tool> {
        self.tools.get(name)
    }

    /// Tool names in sorted order.
    pub fn ids(&self) -> Vec<&str> {
        self.tools.keys().map(|k| k.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tool> {
        self.tools.values()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

/// A directed edge: some output field of `producer` feeds a required
/// parameter of `consumer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub producer: String,
    pub consumer: String,
    /// Binding annotation: producer output field -> consumer parameter.
    pub output_field: String,
    pub parameter: String,
}

/// Directed tool dependency graph.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<String>,
    /// Sorted by (producer, consumer); at most one edge per ordered pair.
    pub edges: Vec<DependencyEdge>,
}

impl DependencyGraph {
    pub fn has_edge(&self, producer: &str, consumer: &str) -> bool {
        self.edges
            .iter()
            .any(|e| e.producer == producer && e.consumer == consumer)
    }

    pub fn successors<'a>(&'a self, tool: &'a str) -> impl Iterator<Item = &'a DependencyEdge> {
        self.edges.iter().filter(move |e| e.producer == tool)
    }

    pub fn edge(&self, producer: &str, consumer: &str) -> Option<&DependencyEdge> {
        self.edges
            .iter()
            .find(|e| e.producer == producer && e.consumer == consumer)
    }
}

/// An undirected edge between tools that share parameter names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharingEdge {
    pub a: String,
    pub b: String,
    pub shared: BTreeSet<String>,
}

/// Undirected parameter-sharing graph.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SharingGraph {
    pub nodes: BTreeSet<String>,
    /// Sorted by (a, b) with a < b.
    pub edges: Vec<SharingEdge>,
}

impl SharingGraph {
    pub fn has_edge(&self, x: &str, y: &str) -> bool {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        self.edges.iter().any(|e| e.a == a && e.b == b)
    }

    pub fn edge(&self, x: &str, y: &str) -> Option<&SharingEdge> {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        self.edges.iter().find(|e| e.a == a && e.b == b)
    }
}

/// The pair of relationship graphs derived from a catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolGraphs {
    pub dependency: DependencyGraph,
    pub sharing: SharingGraph,
}

/// Manual corrections applied on top of inferred dependency edges.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphOverrides {
    #[serde(default)]
    pub add: Vec<DependencyEdge>,
    /// (producer, consumer) pairs to drop.
    #[serde(default)]
    pub remove: Vec<(String, String)>,
}

/// Build the dependency and sharing graphs for a catalog.
///
/// A dependency edge (a, b) exists iff some output field of `a` matches a
/// required parameter of `b` by name and semantic type. A sharing edge
/// {a, b} exists iff the tools have at least one identically named
/// parameter and no dependency edge in either direction.
pub fn build_graphs(catalog: &ToolCatalog) -> ToolGraphs {
    build_graphs_with_overrides(catalog, &GraphOverrides::default())
        .expect("empty overrides cannot fail")
}

/// Same as [`build_graphs`], with manual edge corrections applied before
/// the sharing graph is derived.
pub fn build_graphs_with_overrides(
    catalog: &ToolCatalog,
    overrides: &GraphOverrides,
) -> Result<ToolGraphs, CatalogError> {
    let nodes: BTreeSet<String> = catalog.ids().iter().map(|s| s.to_string()).collect();

    let mut dep_edges: Vec<DependencyEdge> = Vec::new();
    for producer in catalog.iter() {
        for consumer in catalog.iter() {
            if producer.name == consumer.name {
                continue;
            }
            let binding = producer.output_schema.iter().find_map(|field| {
                consumer
                    .required_parameters()
                    .find(|p| p.name == field.name && p.semantic_type == field.semantic_type)
                    .map(|p| (field.name.clone(), p.name.clone()))
            });
            if let Some((output_field, parameter)) = binding {
                dep_edges.push(DependencyEdge {
                    producer: producer.name.clone(),
                    consumer: consumer.name.clone(),
                    output_field,
                    parameter,
                });
            }
        }
    }

    for (producer, consumer) in &overrides.remove {
        dep_edges.retain(|e| !(e.producer == *producer && e.consumer == *consumer));
    }
    for edge in &overrides.add {
        let producer = catalog
            .get(&edge.producer)
            .ok_or_else(|| CatalogError::UnknownTool(edge.producer.clone()))?;
        let consumer = catalog
            .get(&edge.consumer)
            .ok_or_else(|| CatalogError::UnknownTool(edge.consumer.clone()))?;
        if edge.producer == edge.consumer {
            return Err(CatalogError::MalformedSchema("self-edge in overrides".into()));
        }
        if producer.output_field(&edge.output_field).is_none() {
            return Err(CatalogError::MalformedSchema(format!(
                "override references unknown output field `{}` of `{}`",
                edge.output_field, edge.producer
            )));
        }
        if consumer.parameter(&edge.parameter).is_none() {
            return Err(CatalogError::MalformedSchema(format!(
                "override references unknown parameter `{}` of `{}`",
                edge.parameter, edge.consumer
            )));
        }
        if !dep_edges
            .iter()
            .any(|e| e.producer == edge.producer && e.consumer == edge.consumer)
        {
            dep_edges.push(edge.clone());
        }
    }
    dep_edges.sort_by(|x, y| (&x.producer, &x.consumer).cmp(&(&y.producer, &y.consumer)));

    let has_dep = |a: &str, b: &str| {
        dep_edges
            .iter()
            .any(|e| (e.producer == a && e.consumer == b) || (e.producer == b && e.consumer == a))
    };

    let tools: Vec<&Tool> = catalog.iter().collect();
    let mut share_edges: Vec<SharingEdge> = Vec::new();
    for (i, a) in tools.iter().enumerate() {
        for b in tools.iter().skip(i + 1) {
            if has_dep(&a.name, &b.name) {
                continue;
            }
            let names_a: BTreeSet<&str> = a.parameters.iter().map(|p| p.name.as_str()).collect();
            let shared: BTreeSet<String> = b
                .parameters
                .iter()
                .filter(|p| names_a.contains(p.name.as_str()))
                .map(|p| p.name.clone())
                .collect();
            if !shared.is_empty() {
                share_edges.push(SharingEdge {
                    a: a.name.clone(),
                    b: b.name.clone(),
                    shared,
                });
            }
        }
    }
    share_edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));

    Ok(ToolGraphs {
        dependency: DependencyGraph {
            nodes: nodes.clone(),
            edges: dep_edges,
        },
        sharing: SharingGraph {
            nodes,
            edges: share_edges,
        },
    })
}

/// What an atomic plan is built from: one tool, a dependent pair, or a
/// parameter-sharing pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    Isolated,
    Serial,
    Parallel,
}

impl fmt::Display for SelectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SelectionKind::Isolated => "isolated",
            SelectionKind::Serial => "serial",
            SelectionKind::Parallel => "parallel",
        };
        f.write_str(s)
    }
}

/// Relation between the selected tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    None,
    Causal,
    Independent,
}

/// One or two tool ids sampled from the graphs, plus their relation.
/// Serial selections are directed (producer first); parallel selections
/// are stored in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSelection {
    pub kind: SelectionKind,
    pub tools: Vec<String>,
    pub relation: Relation,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("no {0} candidates: the required graph has no edges")]
    EmptyGraph(SelectionKind),
}

/// Sample a tool selection of the given kind. Deterministic for a fixed
/// seed: candidates are enumerated in sorted order before sampling.
pub fn sample_selection(
    graphs: &ToolGraphs,
    kind: SelectionKind,
    rng_seed: u64,
) -> Result<ToolSelection, SelectionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    match kind {
        SelectionKind::Isolated => {
            let nodes: Vec<&String> = graphs.dependency.nodes.iter().collect();
            let tool = nodes
                .choose(&mut rng)
                .ok_or(SelectionError::EmptyGraph(kind))?;
            Ok(ToolSelection {
                kind,
                tools: vec![(*tool).clone()],
                relation: Relation::None,
            })
        }
        SelectionKind::Serial => {
            let edge = graphs
                .dependency
                .edges
                .choose(&mut rng)
                .ok_or(SelectionError::EmptyGraph(kind))?;
            Ok(ToolSelection {
                kind,
                tools: vec![edge.producer.clone(), edge.consumer.clone()],
                relation: Relation::Causal,
            })
        }
        SelectionKind::Parallel => {
            let edge = graphs
                .sharing
                .edges
                .choose(&mut rng)
                .ok_or(SelectionError::EmptyGraph(kind))?;
            Ok(ToolSelection {
                kind,
                tools: vec![edge.a.clone(), edge.b.clone()],
                relation: Relation::Independent,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tool(name: &str, params: &[(&str, &str, bool)], outputs: &[(&str, &str)]) -> Tool {
        Tool {
            name: name.into(),
            description: format!("demo tool {name}"),
            parameters: params
                .iter()
                .map(|(n, t, req)| ToolParameter {
                    name: (*n).into(),
                    semantic_type: (*t).into(),
                    required: *req,
                    description: format!("{n} input"),
                })
                .collect(),
            output_schema: outputs
                .iter()
                .map(|(n, t)| OutputField {
                    name: (*n).into(),
                    semantic_type: (*t).into(),
                    description: format!("{n} output"),
                })
                .collect(),
            domain_tag: "test".into(),
        }
    }

    fn flight_catalog() -> ToolCatalog {
        ToolCatalog::from_tools([
            tool(
                "search_flight",
                &[("city", "string", true)],
                &[("flight_id", "string")],
            ),
            tool("book_flight", &[("flight_id", "string", true)], &[]),
            tool("check_weather", &[("city", "string", true)], &[]),
        ])
        .unwrap()
    }

    #[test]
    fn normalize_keeps_all_parameters() {
        let raw = serde_json::json!({
            "name": "book_hotel",
            "description": "Book a hotel room in a given city.",
            "parameters": [
                {"name": "app", "type": "string", "required": true, "description": "app to use"},
                {"name": "city_slot", "type": "string", "required": true, "description": "city"},
                {"name": "hotel_slot", "type": "string", "required": true, "description": "hotel"},
                {"name": "check_in_date_slot", "type": "date", "required": true, "description": "check-in"},
                {"name": "departure_date_slot", "type": "date", "required": true, "description": "check-out"},
                {"name": "number_slot", "type": "number", "required": true, "description": "rooms"},
                {"name": "payment_method_slot", "type": "string", "required": false, "description": "payment"},
                {"name": "filter_detail_slot", "type": "string", "required": false, "description": "filters"}
            ],
            "returns": [{"name": "booking_id", "type": "string", "description": "order id"}]
        });
        let norm = normalize_tool(&raw).unwrap();
        assert_eq!(norm.tool.name, "book_hotel");
        assert_eq!(norm.tool.parameters.len(), 8);
        assert!(norm.missing_descriptions.is_empty());
    }

    #[test]
    fn normalize_rejects_empty_name() {
        let raw = serde_json::json!({"name": "", "description": "x"});
        assert_eq!(normalize_tool(&raw).unwrap_err(), CatalogError::MissingName);
    }

    #[test]
    fn normalize_rejects_duplicate_parameter() {
        let raw = serde_json::json!({
            "name": "t",
            "description": "x",
            "parameters": [
                {"name": "x", "type": "string"},
                {"name": "x", "type": "string"}
            ]
        });
        assert_eq!(
            normalize_tool(&raw).unwrap_err(),
            CatalogError::DuplicateParameter("x".into())
        );
    }

    #[test]
    fn normalize_flags_missing_descriptions() {
        let raw = serde_json::json!({
            "name": "t",
            "description": "x",
            "parameters": [{"name": "city", "type": "string", "required": true}]
        });
        let norm = normalize_tool(&raw).unwrap();
        assert_eq!(norm.missing_descriptions, vec!["city".to_string()]);
    }

    #[test]
    fn normalize_accepts_function_calling_schema() {
        let raw = serde_json::json!({
            "name": "SearchLocation",
            "description": "Search nearby places.",
            "parameters": {
                "type": "object",
                "properties": {
                    "searchInfo": {"type": "string", "description": "what to search"},
                    "orderType": {"type": "string", "description": "sort order"}
                },
                "required": ["search_info"]
            }
        });
        let norm = normalize_tool(&raw).unwrap();
        assert_eq!(norm.tool.name, "search_location");
        let p = norm.tool.parameter("search_info").unwrap();
        assert!(p.required);
        assert!(!norm.tool.parameter("order_type").unwrap().required);
    }

    #[test]
    fn dependency_edge_from_output_to_required_parameter() {
        let graphs = build_graphs(&flight_catalog());
        assert!(graphs.dependency.has_edge("search_flight", "book_flight"));
        let edge = graphs.dependency.edge("search_flight", "book_flight").unwrap();
        assert_eq!(edge.output_field, "flight_id");
        assert_eq!(edge.parameter, "flight_id");
    }

    #[test]
    fn sharing_edge_from_common_parameter() {
        let graphs = build_graphs(&flight_catalog());
        let edge = graphs.sharing.edge("check_weather", "search_flight").unwrap();
        assert!(edge.shared.contains("city"));
        // book_flight has no parameter overlap with check_weather
        assert!(!graphs.sharing.has_edge("book_flight", "check_weather"));
    }

    #[test]
    fn single_tool_catalog_has_edgeless_graphs() {
        let catalog =
            ToolCatalog::from_tools([tool("solo", &[("x", "string", true)], &[])]).unwrap();
        let graphs = build_graphs(&catalog);
        assert!(graphs.dependency.edges.is_empty());
        assert!(graphs.sharing.edges.is_empty());
    }

    #[test]
    fn no_pair_in_both_graphs() {
        let graphs = build_graphs(&crate::entities::demo_catalog());
        for dep in &graphs.dependency.edges {
            assert!(
                !graphs.sharing.has_edge(&dep.producer, &dep.consumer),
                "pair ({}, {}) is in both graphs",
                dep.producer,
                dep.consumer
            );
        }
    }

    #[test]
    fn build_graphs_is_pure() {
        let catalog = flight_catalog();
        let a = serde_json::to_string(&build_graphs(&catalog)).unwrap();
        let b = serde_json::to_string(&build_graphs(&catalog)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overrides_add_and_remove_edges() {
        let catalog = flight_catalog();
        let overrides = GraphOverrides {
            add: vec![],
            remove: vec![("search_flight".into(), "book_flight".into())],
        };
        let graphs = build_graphs_with_overrides(&catalog, &overrides).unwrap();
        assert!(!graphs.dependency.has_edge("search_flight", "book_flight"));
        // with the dependency removed, the pair may now share parameters
        // (they do not share any here, so no sharing edge either)
        assert!(!graphs.sharing.has_edge("search_flight", "book_flight"));
    }

    #[test]
    fn selection_is_deterministic_per_seed() {
        let graphs = build_graphs(&flight_catalog());
        let a = sample_selection(&graphs, SelectionKind::Isolated, 7).unwrap();
        let b = sample_selection(&graphs, SelectionKind::Isolated, 7).unwrap();
        assert_eq!(a, b);
        let serial = sample_selection(&graphs, SelectionKind::Serial, 0).unwrap();
        assert_eq!(serial.tools, vec!["search_flight", "book_flight"]);
        assert_eq!(serial.relation, Relation::Causal);
    }

    #[test]
    fn selection_errors_on_empty_graph() {
        let catalog =
            ToolCatalog::from_tools([tool("solo", &[("x", "string", true)], &[])]).unwrap();
        let graphs = build_graphs(&catalog);
        assert_eq!(
            sample_selection(&graphs, SelectionKind::Serial, 1).unwrap_err(),
            SelectionError::EmptyGraph(SelectionKind::Serial)
        );
    }

    #[test]
    fn seed_sweep_observes_every_sharing_edge() {
        // catalog with exactly two sharing edges
        let catalog = ToolCatalog::from_tools([
            tool("a", &[("city", "string", true)], &[]),
            tool("b", &[("city", "string", true)], &[]),
            tool("c", &[("date", "string", true), ("city", "string", false)], &[]),
        ])
        .unwrap();
        let graphs = build_graphs(&catalog);
        assert_eq!(graphs.sharing.edges.len(), 3);
        let mut seen = BTreeSet::new();
        for seed in 0..1000 {
            let sel = sample_selection(&graphs, SelectionKind::Parallel, seed).unwrap();
            seen.insert(sel.tools.clone());
        }
        assert_eq!(seen.len(), graphs.sharing.edges.len());
    }
}
