//! Attribute-relation (ARFF) text files: numeric attributes followed by one
//! nominal class attribute.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetError, Instance, LabelSet, Result};

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.chars()
            .any(|c| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '\'' | '"' | '%' | '\\'))
}

fn quote(s: &str) -> String {
    if needs_quotes(s) {
        format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
    } else {
        s.to_string()
    }
}

/// Renders a dataset as ARFF text.
pub fn write_arff_string(d: &Dataset) -> Result<String> {
    if d.is_empty() {
        return Err(DatasetError::Empty);
    }
    d.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "@RELATION {}", quote(&d.relation));
    for name in &d.feature_names {
        let _ = writeln!(out, "@ATTRIBUTE {} numeric", quote(name));
    }
    let labels: Vec<String> = d.label_set.names().iter().map(|l| quote(l)).collect();
    let _ = writeln!(out, "@ATTRIBUTE class {{{}}}", labels.join(","));
    out.push_str("@DATA\n");
    for inst in &d.instances {
        for v in &inst.features {
            let _ = write!(out, "{v:.16e},");
        }
        out.push_str(&labels[inst.label]);
        out.push('\n');
    }
    Ok(out)
}

pub fn export_arff(d: &Dataset, path: &Path) -> Result<()> {
    let text = write_arff_string(d)?;
    std::fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_arff(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_arff_at(&text, path)
}

pub fn parse_arff(text: &str) -> Result<Dataset> {
    parse_arff_at(text, Path::new("<memory>"))
}

/// Splits on commas (or, for headers, whitespace) while honouring quotes.
fn tokens(line: &str, sep: fn(char) -> bool) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted: Option<char> = None;
    let mut had_token = false;
    while let Some(c) = chars.next() {
        match quoted {
            Some(q) => {
                if c == '\\' {
                    if let Some(n) = chars.next() {
                        cur.push(n);
                    }
                } else if c == q {
                    quoted = None;
                } else {
                    cur.push(c);
                }
            }
            None => {
                if c == '\'' || c == '"' {
                    quoted = Some(c);
                    had_token = true;
                } else if sep(c) {
                    if had_token || !cur.is_empty() {
                        out.push(std::mem::take(&mut cur));
                        had_token = false;
                    }
                } else {
                    cur.push(c);
                }
            }
        }
    }
    if quoted.is_some() {
        return Err("unterminated quote".into());
    }
    if had_token || !cur.is_empty() {
        out.push(cur);
    }
    Ok(out.into_iter().map(|t| t.trim().to_string()).collect())
}

fn parse_arff_at(text: &str, path: &Path) -> Result<Dataset> {
    let err = |line: usize, reason: String| DatasetError::Parse {
        path: PathBuf::from(path),
        line,
        reason,
    };

    let mut relation = String::new();
    let mut attributes: Vec<(String, Option<Vec<String>>)> = Vec::new();
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut in_data = false;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if in_data {
            let cells = tokens(line, |c| c == ',').map_err(|e| err(line_no, e))?;
            rows.push((line_no, cells));
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            let rest = tokens(&line[9..], char::is_whitespace).map_err(|e| err(line_no, e))?;
            relation = rest.join(" ");
        } else if lower.starts_with("@attribute") {
            let rest = line[10..].trim();
            if let Some(brace) = rest.find('{') {
                let name = tokens(&rest[..brace], char::is_whitespace).map_err(|e| err(line_no, e))?;
                let close = rest.rfind('}').ok_or_else(|| err(line_no, "missing '}'".into()))?;
                let values = tokens(&rest[brace + 1..close], |c| c == ',').map_err(|e| err(line_no, e))?;
                attributes.push((name.join(" "), Some(values)));
            } else {
                let parts = tokens(rest, char::is_whitespace).map_err(|e| err(line_no, e))?;
                if parts.len() != 2 {
                    return Err(err(line_no, format!("cannot parse attribute {rest:?}")));
                }
                let ty = parts[1].to_ascii_lowercase();
                if !matches!(ty.as_str(), "numeric" | "real" | "integer") {
                    return Err(err(line_no, format!("unsupported attribute type {ty:?}")));
                }
                attributes.push((parts[0].clone(), None));
            }
        } else if lower.starts_with("@data") {
            in_data = true;
        } else {
            return Err(err(line_no, format!("unexpected header line {line:?}")));
        }
    }

    let (_, class_values) = attributes
        .pop()
        .ok_or_else(|| err(0, "no attributes".into()))?;
    let class_values = class_values.ok_or_else(|| err(0, "last attribute must be nominal".into()))?;
    if attributes.iter().any(|(_, nominal)| nominal.is_some()) {
        return Err(err(0, "only the last attribute may be nominal".into()));
    }
    let label_set = LabelSet::new(class_values)?;
    let feature_names: Vec<String> = attributes.into_iter().map(|(n, _)| n).collect();
    let dim = feature_names.len();

    let mut instances = Vec::with_capacity(rows.len());
    for (line_no, cells) in rows {
        if cells.len() != dim + 1 {
            return Err(err(line_no, format!("expected {} values, got {}", dim + 1, cells.len())));
        }
        let features = cells[..dim]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| err(line_no, format!("bad number {c:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let label = label_set
            .index_of(&cells[dim])
            .ok_or_else(|| err(line_no, format!("unknown class {:?}", cells[dim])))?;
        instances.push(Instance { features, label });
    }
    Dataset::new(relation, feature_names, label_set, instances)
}
