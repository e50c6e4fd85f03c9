use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{unquote, Environment, Snapshots};
use crate::error::EnvError;
use crate::types::{Action, Observation, StateHandle, FINAL_ANSWER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(n) if n.fract() == 0.0 && n.abs() < 1e15 => write!(f, "{}", *n as i64),
            Cell::Num(n) => write!(f, "{n}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// Read-only relational world queried through a small S-expression language:
///
/// ```text
/// (select "Table" (col1 "col 2") (= col "v") (> col 3))
/// ```
///
/// Columns may be `*`. Filters use `=`, `!=`, `<`, `>`, `<=`, `>=`.
#[derive(Debug, Clone)]
pub struct ToySqlWorld {
    id: String,
    tables: BTreeMap<String, Table>,
    snapshots: Snapshots,
}

impl ToySqlWorld {
    pub fn new(id: impl Into<String>, tables: BTreeMap<String, Table>) -> Self {
        ToySqlWorld {
            id: id.into(),
            tables,
            snapshots: Snapshots::default(),
        }
    }

    fn table(&self, name: &str) -> Result<&Table, String> {
        self.tables.get(name).ok_or_else(|| format!("no such table: {name}"))
    }

    fn run(&self, action: &Action) -> Observation {
        let tool = action.tool_name.as_str();
        let result = match tool {
            "LIST_TABLES" => Ok(format!(
                "tables: {}",
                self.tables.keys().cloned().collect::<Vec<_>>().join(", ")
            )),
            "SCHEMA" => self
                .table(unquote(&action.arguments))
                .map(|t| format!("columns: {}", t.columns.join(", "))),
            "QUERY" => self.query(&action.arguments),
            FINAL_ANSWER => return Observation::ok(tool, ""),
            other => Err(format!("unknown tool {other}")),
        };
        match result {
            Ok(content) => Observation::ok(tool, content),
            Err(message) => Observation::error(tool, message),
        }
    }

    fn query(&self, text: &str) -> Result<String, String> {
        let expr = parse(text)?;
        let Sexp::List(items) = expr else {
            return Err("query must be a list".into());
        };
        let mut items = items.into_iter();
        match items.next() {
            Some(Sexp::Atom(a)) if a.eq_ignore_ascii_case("select") => {}
            _ => return Err("query must start with select".into()),
        }
        let table_name = items.next().and_then(Sexp::into_atom).ok_or("missing table name")?;
        let table = self.table(&table_name)?;
        let column = |name: &str| {
            table
                .columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| format!("no such column: {name} in {table_name}"))
        };
        let projection: Vec<usize> = match items.next() {
            Some(Sexp::Atom(a)) if a == "*" => (0..table.columns.len()).collect(),
            Some(Sexp::List(cols)) if !cols.is_empty() => cols
                .into_iter()
                .map(|c| c.into_atom().ok_or("column names must be atoms".to_string()).and_then(|n| column(&n)))
                .collect::<Result<_, _>>()?,
            _ => return Err("missing column list".into()),
        };
        let mut filters = Vec::new();
        for f in items {
            let Sexp::List(parts) = f else {
                return Err("filter must be a list".into());
            };
            let [op, col, value]: [Sexp; 3] = parts.try_into().map_err(|_| "filter needs (op column value)")?;
            let op = op.into_atom().ok_or("bad operator")?;
            if !["=", "!=", "<", ">", "<=", ">="].contains(&op.as_str()) {
                return Err(format!("unknown operator {op}"));
            }
            let col = column(&col.into_atom().ok_or("bad filter column")?)?;
            let value = value.into_atom().ok_or("bad filter value")?;
            filters.push((op, col, value));
        }
        let rows: Vec<&Vec<Cell>> = table
            .rows
            .iter()
            .filter(|row| filters.iter().all(|(op, col, v)| compare(&row[*col], op, v)))
            .collect();
        if rows.is_empty() {
            return Ok("(no rows)".into());
        }
        let mut out = projection
            .iter()
            .map(|&i| table.columns[i].as_str())
            .collect::<Vec<_>>()
            .join(" | ");
        for row in rows {
            out.push('\n');
            out.push_str(&projection.iter().map(|&i| row[i].to_string()).collect::<Vec<_>>().join(" | "));
        }
        Ok(out)
    }
}

fn compare(cell: &Cell, op: &str, value: &str) -> bool {
    let ord = match (cell, value.parse::<f64>()) {
        (Cell::Num(n), Ok(v)) => n.partial_cmp(&v),
        _ => Some(cell.to_string().as_str().cmp(value)),
    };
    let Some(ord) = ord else { return false };
    match op {
        "=" => ord.is_eq(),
        "!=" => ord.is_ne(),
        "<" => ord.is_lt(),
        ">" => ord.is_gt(),
        "<=" => ord.is_le(),
        ">=" => ord.is_ge(),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    fn into_atom(self) -> Option<String> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' => {
                chars.next();
                tokens.push(Token::Open);
            }
            ')' => {
                chars.next();
                tokens.push(Token::Close);
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(ch) => s.push(ch),
                        None => return Err("unterminated string".into()),
                    }
                }
                tokens.push(Token::Atom(s));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut s = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' {
                        break;
                    }
                    s.push(ch);
                    chars.next();
                }
                tokens.push(Token::Atom(s));
            }
        }
    }
    Ok(tokens)
}

fn parse(text: &str) -> Result<Sexp, String> {
    let tokens = tokenize(text)?;
    let mut pos = 0;
    let expr = parse_expr(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err("trailing input after query".into());
    }
    Ok(expr)
}

fn parse_expr(tokens: &[Token], pos: &mut usize) -> Result<Sexp, String> {
    match tokens.get(*pos) {
        None => Err("empty query".into()),
        Some(Token::Close) => Err("unexpected ')'".into()),
        Some(Token::Atom(a)) => {
            *pos += 1;
            Ok(Sexp::Atom(a.clone()))
        }
        Some(Token::Open) => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => return Err("unbalanced '('".into()),
                    Some(Token::Close) => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(parse_expr(tokens, pos)?),
                }
            }
        }
    }
}

impl Environment for ToySqlWorld {
    fn id(&self) -> &str {
        &self.id
    }

    fn serializable(&self) -> bool {
        true
    }

    fn reset(&mut self) -> StateHandle {
        self.snapshots.root(&self.id)
    }

    fn step(&mut self, state: &StateHandle, action: &Action) -> Result<(StateHandle, Observation), EnvError> {
        let next = self.snapshots.advance(state, action)?;
        Ok((next, self.run(action)))
    }

    fn fork(&mut self, state: &StateHandle) -> Result<StateHandle, EnvError> {
        self.snapshots.check(state)?;
        Ok(state.clone())
    }
}
