//! CPLEX LP format export and a matching reader.
//!
//! The writer is deterministic: variables appear sorted by name, constraints
//! sorted by id, and numbers use Rust's shortest round-trip formatting, so
//! identical models produce byte-identical files. A comment on the first
//! line records the instance dimensions; the reader requires it, since LP
//! text alone cannot say how to interpret the variables as a tree model.
//!
//! The reader covers the subset the writer produces (a `Maximize` section,
//! labeled constraints, `Bounds`, `Binaries`, `End`), is insensitive to line
//! breaks inside expressions, and accepts `<`/`>` as synonyms for `<=`/`>=`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::mio::{LinearConstraint, MioModel, MioVariable, ModelMeta, Sense, VarKind};

/// Serializes a model to CPLEX LP text.
pub fn emit_lp(model: &MioModel) -> String {
    let m = &model.meta;
    let mut out = String::with_capacity(64 * model.constraints.len() + 24 * model.variables.len());
    out.push_str(&format!(
        "\\ minleaf model n={} p={} k={} depth={} n_min={} objective={}\n",
        m.n, m.p, m.k, m.depth, m.n_min, m.objective
    ));
    out.push_str("Maximize\n obj:");
    push_expr(&mut out, &model.objective_terms, model);
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        out.push(' ');
        out.push_str(&c.id);
        out.push(':');
        push_expr(&mut out, &c.terms, model);
        out.push(' ');
        out.push_str(&c.sense.to_string());
        out.push(' ');
        out.push_str(&format_number(c.rhs));
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        if v.kind == VarKind::Continuous {
            out.push_str(&format!(
                " {} <= {} <= {}\n",
                format_number(v.lo),
                v.name,
                format_number(v.hi)
            ));
        }
    }
    out.push_str("Binaries\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary {
            out.push(' ');
            out.push_str(&v.name);
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

fn format_number(v: f64) -> String {
    // Rust's Display for f64 prints the shortest string that parses back to
    // the same value, which is exactly what a lossless round trip needs.
    format!("{v}")
}

fn push_expr(out: &mut String, terms: &[(usize, f64)], model: &MioModel) {
    for (pos, &(var, coef)) in terms.iter().enumerate() {
        if coef < 0.0 {
            out.push_str(" -");
        } else if pos > 0 {
            out.push_str(" +");
        }
        let mag = coef.abs();
        out.push(' ');
        if mag != 1.0 {
            out.push_str(&format_number(mag));
            out.push(' ');
        }
        out.push_str(&model.variables[var].name);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Number(f64),
    Colon,
    Plus,
    Minus,
    Le,
    Ge,
    EqSign,
}

fn tokenize(text: &str, line_offset: usize) -> Result<Vec<(Token, usize)>> {
    let mut tokens = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('\\').next().unwrap_or("");
        let lineno = line_offset + lineno + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut pos = 0;
        while pos < chars.len() {
            let c = chars[pos];
            if c.is_whitespace() {
                pos += 1;
            } else if c == ':' {
                tokens.push((Token::Colon, lineno));
                pos += 1;
            } else if c == '+' {
                tokens.push((Token::Plus, lineno));
                pos += 1;
            } else if c == '-' {
                tokens.push((Token::Minus, lineno));
                pos += 1;
            } else if c == '<' || c == '>' || c == '=' {
                let tok = match c {
                    '<' => Token::Le,
                    '>' => Token::Ge,
                    _ => Token::EqSign,
                };
                pos += 1;
                if pos < chars.len() && chars[pos] == '=' {
                    pos += 1;
                }
                tokens.push((tok, lineno));
            } else if c.is_ascii_digit() || c == '.' {
                let start = pos;
                while pos < chars.len()
                    && (chars[pos].is_ascii_digit() || chars[pos] == '.' || chars[pos] == 'e' || chars[pos] == 'E')
                {
                    // A sign directly after an exponent marker belongs to the number.
                    pos += 1;
                    if pos < chars.len()
                        && (chars[pos] == '+' || chars[pos] == '-')
                        && (chars[pos - 1] == 'e' || chars[pos - 1] == 'E')
                    {
                        pos += 1;
                    }
                }
                let text: String = chars[start..pos].iter().collect();
                let value = text.parse::<f64>().map_err(|_| Error::LpParse {
                    line: lineno,
                    message: format!("invalid number {text:?}"),
                })?;
                tokens.push((Token::Number(value), lineno));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = pos;
                while pos < chars.len()
                    && (chars[pos].is_ascii_alphanumeric() || chars[pos] == '_' || chars[pos] == '.')
                {
                    pos += 1;
                }
                tokens.push((Token::Name(chars[start..pos].iter().collect()), lineno));
            } else {
                return Err(Error::LpParse {
                    line: lineno,
                    message: format!("unexpected character {c:?}"),
                });
            }
        }
    }
    Ok(tokens)
}

/// `(name, coefficient)` terms, then the index just past the expression.
fn parse_expr(
    tokens: &[(Token, usize)],
    mut pos: usize,
) -> Result<(Vec<(String, f64)>, usize)> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut pending: Option<f64> = None;
    while pos < tokens.len() {
        match &tokens[pos].0 {
            Token::Plus if pending.is_none() => {
                pos += 1;
            }
            Token::Minus if pending.is_none() => {
                sign = -sign;
                pos += 1;
            }
            Token::Number(v) if pending.is_none() => {
                pending = Some(*v);
                pos += 1;
            }
            Token::Name(name) => {
                let coef = sign * pending.take().unwrap_or(1.0);
                terms.push((name.clone(), coef));
                sign = 1.0;
                pos += 1;
            }
            _ => break,
        }
    }
    if let Some(v) = pending {
        return Err(Error::LpParse {
            line: tokens[pos.saturating_sub(1)].1,
            message: format!("dangling coefficient {v} without a variable"),
        });
    }
    Ok((terms, pos))
}

fn parse_rhs(tokens: &[(Token, usize)], mut pos: usize) -> Result<(f64, usize)> {
    let mut sign = 1.0;
    while pos < tokens.len() {
        match &tokens[pos].0 {
            Token::Minus => {
                sign = -sign;
                pos += 1;
            }
            Token::Plus => {
                pos += 1;
            }
            Token::Number(v) => return Ok((sign * v, pos + 1)),
            _ => break,
        }
    }
    let line = tokens.get(pos).or_else(|| tokens.last()).map_or(0, |t| t.1);
    Err(Error::LpParse {
        line,
        message: "expected a right-hand side value".into(),
    })
}

fn parse_meta(text: &str) -> Result<ModelMeta> {
    for line in text.lines() {
        let trimmed = line.trim();
        let Some(rest) = trimmed.strip_prefix("\\ minleaf model ") else {
            continue;
        };
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for pair in rest.split_whitespace() {
            if let Some((key, value)) = pair.split_once('=') {
                fields.insert(key, value);
            }
        }
        let get = |key: &str| -> Result<&str> {
            fields.get(key).copied().ok_or_else(|| Error::LpParse {
                line: 1,
                message: format!("metadata comment is missing {key:?}"),
            })
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| Error::LpParse {
                line: 1,
                message: format!("metadata field {key:?} is not an integer"),
            })
        };
        return Ok(ModelMeta {
            n: int("n")?,
            p: int("p")?,
            k: int("k")?,
            depth: int("depth")?,
            n_min: int("n_min")?,
            objective: get("objective")?.parse()?,
        });
    }
    Err(Error::LpParse {
        line: 1,
        message: "missing \"minleaf model\" metadata comment".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Maximize,
    SubjectTo,
    Bounds,
    Binaries,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "maximize" | "max" | "maximise" => Some(Section::Maximize),
        "subject to" | "st" | "s.t." | "such that" => Some(Section::SubjectTo),
        "bounds" | "bound" => Some(Section::Bounds),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "end" => Some(Section::End),
        _ => None,
    }
}

/// Parses LP text produced by [`emit_lp`] back into a model.
pub fn parse_lp(text: &str) -> Result<MioModel> {
    let meta = parse_meta(text)?;

    // Slice the file into sections, remembering starting line numbers.
    let mut sections: Vec<(Section, String, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('\\').next().unwrap_or("");
        if let Some(section) = section_of(line) {
            sections.push((section, String::new(), lineno + 1));
        } else if matches!(
            line.trim().to_ascii_lowercase().as_str(),
            "minimize" | "min" | "minimise"
        ) {
            return Err(Error::LpParse {
                line: lineno + 1,
                message: "only maximization models are supported".into(),
            });
        } else if matches!(
            line.trim().to_ascii_lowercase().as_str(),
            "generals" | "general" | "integers" | "semi-continuous" | "sos"
        ) {
            return Err(Error::LpParse {
                line: lineno + 1,
                message: format!("unsupported section {:?}", line.trim()),
            });
        } else if let Some((_, body, _)) = sections.last_mut() {
            // Keep blank lines so token line numbers stay aligned with the
            // file.
            body.push_str(raw);
            body.push('\n');
        } else if line.trim().is_empty() {
            continue;
        } else {
            return Err(Error::LpParse {
                line: lineno + 1,
                message: "content before the first section header".into(),
            });
        }
    }

    let mut objective: Option<Vec<(String, f64)>> = None;
    let mut rows: Vec<(String, Vec<(String, f64)>, Sense, f64)> = Vec::new();
    let mut bounds: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut binaries: BTreeSet<String> = BTreeSet::new();

    for (section, body, start) in &sections {
        match section {
            Section::Maximize => {
                let tokens = tokenize(body, *start)?;
                let mut pos = 0;
                // Optional "label:" prefix.
                if tokens.len() >= 2
                    && matches!(tokens[0].0, Token::Name(_))
                    && tokens[1].0 == Token::Colon
                {
                    pos = 2;
                }
                let (terms, end) = parse_expr(&tokens, pos)?;
                if end != tokens.len() {
                    return Err(Error::LpParse {
                        line: tokens[end].1,
                        message: "unexpected token after the objective".into(),
                    });
                }
                objective = Some(terms);
            }
            Section::SubjectTo => {
                let tokens = tokenize(body, *start)?;
                let mut pos = 0;
                while pos < tokens.len() {
                    let id = match &tokens[pos].0 {
                        Token::Name(name) if tokens.get(pos + 1).map(|t| &t.0) == Some(&Token::Colon) => {
                            name.clone()
                        }
                        _ => {
                            return Err(Error::LpParse {
                                line: tokens[pos].1,
                                message: "expected a labeled constraint (\"id: expr\")".into(),
                            })
                        }
                    };
                    pos += 2;
                    let (terms, next) = parse_expr(&tokens, pos)?;
                    pos = next;
                    let sense = match tokens.get(pos).map(|t| &t.0) {
                        Some(Token::Le) => Sense::Le,
                        Some(Token::Ge) => Sense::Ge,
                        Some(Token::EqSign) => Sense::Eq,
                        _ => {
                            return Err(Error::LpParse {
                                line: tokens.get(pos).or_else(|| tokens.last()).map_or(0, |t| t.1),
                                message: format!("constraint {id:?} is missing a comparison"),
                            })
                        }
                    };
                    pos += 1;
                    let (rhs, next) = parse_rhs(&tokens, pos)?;
                    pos = next;
                    rows.push((id, terms, sense, rhs));
                }
            }
            Section::Bounds => {
                for (off, line) in body.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let lineno = start + off;
                    let tokens = tokenize(line, lineno)?;
                    parse_bound_line(&tokens, lineno, &mut bounds)?;
                }
            }
            Section::Binaries => {
                let tokens = tokenize(body, *start)?;
                for (token, lineno) in tokens {
                    match token {
                        Token::Name(name) => {
                            binaries.insert(name);
                        }
                        other => {
                            return Err(Error::LpParse {
                                line: lineno,
                                message: format!("unexpected token {other:?} in Binaries"),
                            })
                        }
                    }
                }
            }
            Section::End => {}
        }
    }

    let objective_terms = objective.ok_or_else(|| Error::LpParse {
        line: 1,
        message: "missing Maximize section".into(),
    })?;

    // Assemble the variable table: binaries are [0,1] integers, everything
    // else is continuous with the declared or default bounds.
    let mut names: BTreeSet<String> = BTreeSet::new();
    names.extend(binaries.iter().cloned());
    names.extend(bounds.keys().cloned());
    names.extend(objective_terms.iter().map(|(n, _)| n.clone()));
    for (_, terms, _, _) in &rows {
        names.extend(terms.iter().map(|(n, _)| n.clone()));
    }
    let variables: Vec<MioVariable> = names
        .iter()
        .map(|name| {
            if binaries.contains(name) {
                MioVariable {
                    name: name.clone(),
                    kind: VarKind::Binary,
                    lo: 0.0,
                    hi: 1.0,
                }
            } else {
                let (lo, hi) = bounds.get(name).copied().unwrap_or((0.0, f64::INFINITY));
                MioVariable {
                    name: name.clone(),
                    kind: VarKind::Continuous,
                    lo,
                    hi,
                }
            }
        })
        .collect();
    let index: HashMap<&str, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let map_terms = |terms: Vec<(String, f64)>| -> Vec<(usize, f64)> {
        terms.into_iter().map(|(n, c)| (index[n.as_str()], c)).collect()
    };

    let mut constraints: Vec<LinearConstraint> = rows
        .into_iter()
        .map(|(id, terms, sense, rhs)| LinearConstraint {
            id,
            terms: map_terms(terms),
            sense,
            rhs,
        })
        .collect();
    constraints.sort_by(|a, b| a.id.cmp(&b.id));

    Ok(MioModel {
        meta,
        objective_terms: map_terms(objective_terms),
        variables,
        constraints,
    })
}

fn parse_bound_line(
    tokens: &[(Token, usize)],
    lineno: usize,
    bounds: &mut BTreeMap<String, (f64, f64)>,
) -> Result<()> {
    let err = |message: &str| Error::LpParse {
        line: lineno,
        message: message.into(),
    };
    let signed = |pos: usize| -> Option<(f64, usize)> {
        match tokens.get(pos).map(|t| &t.0) {
            Some(Token::Number(v)) => Some((*v, pos + 1)),
            Some(Token::Minus) => match tokens.get(pos + 1).map(|t| &t.0) {
                Some(Token::Number(v)) => Some((-v, pos + 2)),
                _ => None,
            },
            _ => None,
        }
    };
    // "lo <= name <= hi"
    if let Some((lo, pos)) = signed(0) {
        if tokens.get(pos).map(|t| &t.0) != Some(&Token::Le) {
            return Err(err("expected <= after the lower bound"));
        }
        let Some(Token::Name(name)) = tokens.get(pos + 1).map(|t| &t.0) else {
            return Err(err("expected a variable name"));
        };
        let name = name.clone();
        match tokens.get(pos + 2).map(|t| &t.0) {
            None => {
                bounds.entry(name).or_insert((0.0, f64::INFINITY)).0 = lo;
                return Ok(());
            }
            Some(Token::Le) => {
                let Some((hi, end)) = signed(pos + 3) else {
                    return Err(err("expected an upper bound"));
                };
                if end != tokens.len() {
                    return Err(err("unexpected tokens after the bound"));
                }
                bounds.insert(name, (lo, hi));
                return Ok(());
            }
            _ => return Err(err("malformed bound")),
        }
    }
    // "name <= hi" / "name >= lo" / "name = v" / "name free"
    let Some(Token::Name(name)) = tokens.first().map(|t| &t.0) else {
        return Err(err("expected a bound declaration"));
    };
    let name = name.clone();
    match tokens.get(1).map(|t| &t.0) {
        Some(Token::Name(kw)) if kw.eq_ignore_ascii_case("free") => {
            bounds.insert(name, (f64::NEG_INFINITY, f64::INFINITY));
            Ok(())
        }
        Some(Token::Le) => {
            let Some((hi, end)) = signed(2) else {
                return Err(err("expected an upper bound"));
            };
            if end != tokens.len() {
                return Err(err("unexpected tokens after the bound"));
            }
            bounds.entry(name).or_insert((0.0, f64::INFINITY)).1 = hi;
            Ok(())
        }
        Some(Token::Ge) => {
            let Some((lo, end)) = signed(2) else {
                return Err(err("expected a lower bound"));
            };
            if end != tokens.len() {
                return Err(err("unexpected tokens after the bound"));
            }
            bounds.entry(name).or_insert((0.0, f64::INFINITY)).0 = lo;
            Ok(())
        }
        Some(Token::EqSign) => {
            let Some((v, end)) = signed(2) else {
                return Err(err("expected a value"));
            };
            if end != tokens.len() {
                return Err(err("unexpected tokens after the bound"));
            }
            bounds.insert(name, (v, v));
            Ok(())
        }
        _ => Err(err("malformed bound")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{compute_epsilon, Dataset};
    use crate::mio::{build_mio, Objective};
    use proptest::prelude::*;

    fn tiny_model(objective: Objective) -> MioModel {
        let (ds, eps) = crate::mio::tests::four_point_instance();
        build_mio(&ds, &eps, 1, 1, objective).unwrap()
    }

    #[test]
    fn emitted_text_has_the_expected_shape() {
        let model = tiny_model(Objective::LeafAccuracy);
        let text = emit_lp(&model);
        assert!(text.starts_with(
            "\\ minleaf model n=4 p=2 k=2 depth=1 n_min=1 objective=leaf_accuracy\n"
        ));
        assert!(text.contains("Maximize\n obj: Q\n"));
        assert!(text.contains(" assign_0: z_0_0 + z_0_1 = 1\n"));
        assert!(text.contains(" min_size_0: z_0_0 + z_1_0 + z_2_0 + z_3_0 - l_0 >= 0\n"));
        assert!(text.contains(" 0 <= Q <= 1\n"));
        assert!(text.contains("Binaries\n a_0_0\n"));
        assert!(text.trim_end().ends_with("End"));
        // Zero coefficients are omitted and coefficient-1 terms print bare.
        assert!(text.contains(" route_r_0_1_0: 0.1 a_0_0 - b_0 - z_0_1 >= -1\n"));
        assert!(text.contains(" route_l_2_0_0: 0.9 a_0_0 + a_1_0 - b_0 + 2 z_2_0 <= 2\n"));
    }

    #[test]
    fn emit_is_deterministic() {
        let a = emit_lp(&tiny_model(Objective::LeafAccuracy));
        let b = emit_lp(&tiny_model(Objective::LeafAccuracy));
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_both_objectives() {
        for objective in [Objective::LeafAccuracy, Objective::Misclassification] {
            let model = tiny_model(objective);
            let parsed = parse_lp(&emit_lp(&model)).unwrap();
            assert_eq!(parsed, model);
        }
    }

    #[test]
    fn round_trip_survives_reformatting() {
        let model = tiny_model(Objective::LeafAccuracy);
        let text = emit_lp(&model);
        // Splitting expressions across lines must not change the parse.
        let reflowed = text.replace(" + ", "\n + ");
        let parsed = parse_lp(&reflowed).unwrap();
        assert_eq!(parsed, model);
    }

    #[test]
    fn rejects_missing_metadata() {
        let model = tiny_model(Objective::LeafAccuracy);
        let text = emit_lp(&model);
        let stripped: String = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        match parse_lp(&stripped) {
            Err(Error::LpParse { message, .. }) => assert!(message.contains("metadata")),
            other => panic!("expected LpParse, got {other:?}"),
        }
    }

    #[test]
    fn rejects_minimization_and_reports_the_line() {
        let text = "\\ minleaf model n=1 p=1 k=2 depth=1 n_min=1 objective=leaf_accuracy\nMinimize\n obj: x\nEnd\n";
        match parse_lp(text) {
            Err(Error::LpParse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("maximization"));
            }
            other => panic!("expected LpParse, got {other:?}"),
        }
    }

    #[test]
    fn rejects_garbage_with_a_line_number() {
        let model = tiny_model(Objective::LeafAccuracy);
        let mut text = emit_lp(&model);
        text = text.replace("Subject To\n", "Subject To\n ???\n");
        // The injected line sits behind the metadata comment, Maximize, the
        // objective and the Subject To header.
        match parse_lp(&text) {
            Err(Error::LpParse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected LpParse, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_random_instances(
            raw in prop::collection::vec(prop::collection::vec(0u8..=4, 2), 3..8),
            labels in prop::collection::vec(0usize..2, 8),
            depth in 1usize..3,
            objective in prop::bool::ANY,
        ) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|&v| v as f64 / 4.0).collect()).collect();
            let n = rows.len();
            let ds = Dataset::with_classes(rows, labels[..n].to_vec(), 2).unwrap();
            let eps = compute_epsilon(&ds);
            let objective = if objective { Objective::LeafAccuracy } else { Objective::Misclassification };
            let model = build_mio(&ds, &eps, depth, 1, objective).unwrap();
            let parsed = parse_lp(&emit_lp(&model)).unwrap();
            prop_assert_eq!(parsed, model);
        }
    }
}
