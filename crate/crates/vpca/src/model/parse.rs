//! Line-oriented instance file format.
//!
//! ```text
//! budget <B>
//! node <name> cost <b> capacity <c>
//! flow <name> rate <r> path <name1>,<name2>,...
//! ```
//!
//! A `#` at the start of a line or after whitespace begins a comment; a `#`
//! inside a token is part of the token (virtual-node names use `name#k`).
//! Blank lines are ignored and sections may appear in any order. Node and
//! flow ids are assigned densely in first-appearance order.

use std::collections::HashMap;

use super::{format_quantity, Flow, FlowId, Instance, ModelError, Node, NodeId};

struct Token<'a> {
    column: usize, // 1-based
    text: &'a str,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { column: s + 1, text: &line[s..i] });
            }
        } else if ch == '#' && start.is_none() {
            return tokens; // comment to end of line
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token { column: s + 1, text: &line[s..] });
    }
    tokens
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Syntax { line, column, message: message.into() }
}

fn semantic(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Semantic { line, message: message.into() }
}

fn parse_number(line: usize, tok: &Token<'_>, what: &str) -> Result<f64, ModelError> {
    let value: f64 = tok
        .text
        .parse()
        .map_err(|_| syntax(line, tok.column, format!("expected a number for {what}, got `{}`", tok.text)))?;
    if !value.is_finite() {
        return Err(syntax(line, tok.column, format!("{what} must be finite")));
    }
    Ok(value)
}

fn expect_keyword(line: usize, tok: Option<&Token<'_>>, keyword: &str) -> Result<(), ModelError> {
    match tok {
        Some(t) if t.text == keyword => Ok(()),
        Some(t) => Err(syntax(line, t.column, format!("expected `{keyword}`, got `{}`", t.text))),
        None => Err(syntax(line, 1, format!("expected `{keyword}` before end of line"))),
    }
}

struct RawFlow {
    line: usize,
    name: String,
    rate: f64,
    path: Vec<(usize, String)>, // (column, node name)
}

/// Parse an instance document. All instance invariants are checked.
pub fn parse_instance(text: &str) -> Result<Instance, ModelError> {
    let mut budget: Option<(usize, f64)> = None;
    let mut nodes: Vec<Node> = Vec::new();
    let mut node_ids: HashMap<String, NodeId> = HashMap::new();
    let mut node_lines: HashMap<String, usize> = HashMap::new();
    let mut raw_flows: Vec<RawFlow> = Vec::new();
    let mut flow_lines: HashMap<String, usize> = HashMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens = tokenize(raw_line);
        let Some(first) = tokens.first() else { continue };
        match first.text {
            "budget" => {
                if tokens.len() != 2 {
                    return Err(syntax(line, first.column, "expected `budget <B>`"));
                }
                let value = parse_number(line, &tokens[1], "budget")?;
                if budget.replace((line, value)).is_some() {
                    return Err(semantic(line, "duplicate budget line"));
                }
            }
            "node" => {
                if tokens.len() != 6 {
                    return Err(syntax(line, first.column, "expected `node <name> cost <b> capacity <c>`"));
                }
                let name = tokens[1].text.to_string();
                expect_keyword(line, tokens.get(2), "cost")?;
                let cost = parse_number(line, &tokens[3], "cost")?;
                expect_keyword(line, tokens.get(4), "capacity")?;
                let capacity = parse_number(line, &tokens[5], "capacity")?;
                if node_ids.contains_key(&name) {
                    return Err(semantic(
                        line,
                        format!("duplicate node `{name}` (first declared on line {})", node_lines[&name]),
                    ));
                }
                let id = NodeId(nodes.len() as u32);
                node_ids.insert(name.clone(), id);
                node_lines.insert(name.clone(), line);
                nodes.push(Node { id, name, cost, capacity });
            }
            "flow" => {
                if tokens.len() != 6 {
                    return Err(syntax(
                        line,
                        first.column,
                        "expected `flow <name> rate <r> path <n1>,<n2>,...`",
                    ));
                }
                let name = tokens[1].text.to_string();
                expect_keyword(line, tokens.get(2), "rate")?;
                let rate = parse_number(line, &tokens[3], "rate")?;
                expect_keyword(line, tokens.get(4), "path")?;
                let path_tok = &tokens[5];
                let mut path = Vec::new();
                let mut col = path_tok.column;
                for part in path_tok.text.split(',') {
                    if part.is_empty() {
                        return Err(syntax(line, col, "empty node name in path"));
                    }
                    path.push((col, part.to_string()));
                    col += part.len() + 1;
                }
                if let Some(&prev) = flow_lines.get(&name) {
                    return Err(semantic(
                        line,
                        format!("duplicate flow `{name}` (first declared on line {prev})"),
                    ));
                }
                flow_lines.insert(name.clone(), line);
                raw_flows.push(RawFlow { line, name, rate, path });
            }
            other => {
                return Err(syntax(
                    line,
                    first.column,
                    format!("unknown directive `{other}` (expected budget, node, or flow)"),
                ));
            }
        }
    }

    let Some((_, budget)) = budget else {
        return Err(semantic(text.lines().count().max(1), "missing budget line"));
    };

    let mut flows = Vec::with_capacity(raw_flows.len());
    for (i, raw) in raw_flows.into_iter().enumerate() {
        let mut path = Vec::with_capacity(raw.path.len());
        for (_col, node_name) in &raw.path {
            let Some(&id) = node_ids.get(node_name) else {
                return Err(semantic(
                    raw.line,
                    format!("flow `{}` references unknown node `{node_name}`", raw.name),
                ));
            };
            path.push(id);
        }
        flows.push(Flow { id: FlowId(i as u32), name: raw.name, rate: raw.rate, path });
    }

    Instance::new(nodes, flows, budget).map_err(|e| match e {
        e @ (ModelError::Syntax { .. } | ModelError::Semantic { .. }) => e,
        other => ModelError::Semantic { line: 0, message: other.to_string() },
    })
}

/// Serialize in the canonical order (budget, nodes, flows; both by id).
pub fn serialize_instance(instance: &Instance) -> String {
    let mut out = String::new();
    out.push_str(&format!("budget {}\n", format_quantity(instance.budget())));
    for node in instance.nodes() {
        out.push_str(&format!(
            "node {} cost {} capacity {}\n",
            node.name,
            format_quantity(node.cost),
            format_quantity(node.capacity)
        ));
    }
    for flow in instance.flows() {
        let path: Vec<&str> = flow
            .path
            .iter()
            .map(|&v| instance.node(v).name.as_str())
            .collect();
        out.push_str(&format!(
            "flow {} rate {} path {}\n",
            flow.name,
            format_quantity(flow.rate),
            path.join(",")
        ));
    }
    out
}

impl Instance {
    pub fn parse(text: &str) -> Result<Instance, ModelError> {
        parse_instance(text)
    }

    pub fn to_text(&self) -> String {
        serialize_instance(self)
    }
}
