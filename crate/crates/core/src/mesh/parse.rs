use super::{BoundaryEdge, BoundaryTag, Mesh, MeshError, Triangle};

struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

fn tokenize(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (pos, ch) in content.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push(Token { text: &content[s..pos], column: s + 1 });
                }
            } else if start.is_none() {
                start = Some(pos);
            }
        }
        if let Some(s) = start {
            tokens.push(Token { text: &content[s..], column: s + 1 });
        }
        if !tokens.is_empty() {
            out.push(Line { number: k + 1, tokens });
        }
    }
    out
}

fn err(line: usize, column: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, column, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: &Line<'_>, k: usize, what: &str) -> Result<T, MeshError> {
    let tok = &line.tokens[k];
    tok.text.parse().map_err(|_| err(line.number, tok.column, format!("invalid {what} `{}`", tok.text)))
}

fn expect_len(line: &Line<'_>, n: usize, what: &str) -> Result<(), MeshError> {
    if line.tokens.len() != n {
        let col = line.tokens.get(n).map_or(line.tokens[0].column, |t| t.column);
        return Err(err(line.number, col, format!("expected {n} fields for {what}, found {}", line.tokens.len())));
    }
    Ok(())
}

fn parse_tag(line: &Line<'_>, k: usize) -> Result<BoundaryTag, MeshError> {
    let tok = &line.tokens[k];
    if tok.text == "neumann" {
        return Ok(BoundaryTag::Neumann);
    }
    if let Some(id) = tok.text.strip_prefix("contact:") {
        return id
            .parse()
            .map(BoundaryTag::Contact)
            .map_err(|_| err(line.number, tok.column + 8, format!("invalid contact id `{id}`")));
    }
    Err(err(line.number, tok.column, format!("unknown boundary tag `{}`", tok.text)))
}

/// Parse the plain-text mesh format and validate the result.
///
/// ```text
/// vanroos-mesh 1
/// nodes N        # N lines: x y
/// triangles M    # M lines: i j k region
/// bedges K       # K lines: i j contact:<id>|neumann
/// ```
pub fn load_mesh(text: &str) -> Result<Mesh, MeshError> {
    let lines = tokenize(text);
    let mut it = lines.iter().peekable();
    let header = it.next().ok_or_else(|| err(1, 1, "empty mesh file"))?;
    if header.tokens.len() != 2 || header.tokens[0].text != "vanroos-mesh" {
        return Err(err(header.number, 1, "expected header `vanroos-mesh 1`"));
    }
    if header.tokens[1].text != "1" {
        return Err(err(
            header.number,
            header.tokens[1].column,
            format!("unsupported mesh format version `{}`", header.tokens[1].text),
        ));
    }

    let mut nodes: Option<Vec<[f64; 2]>> = None;
    let mut triangles: Option<Vec<Triangle>> = None;
    let mut bedges: Option<Vec<BoundaryEdge>> = None;
    let mut region_names: Vec<String> = Vec::new();

    while let Some(line) = it.next() {
        let kw = &line.tokens[0];
        expect_len(line, 2, "a section header")?;
        let count: usize = parse_num(line, 1, "section count")?;
        let mut body = Vec::with_capacity(count);
        for _ in 0..count {
            match it.next() {
                Some(l) => body.push(l),
                None => {
                    return Err(err(
                        line.number,
                        line.tokens[1].column,
                        format!("section `{}` declares {count} entries but the file ends early", kw.text),
                    ))
                }
            }
        }
        let duplicate = || err(line.number, kw.column, format!("duplicate section `{}`", kw.text));
        match kw.text {
            "nodes" => {
                if nodes.is_some() {
                    return Err(duplicate());
                }
                let mut v = Vec::with_capacity(count);
                for l in body {
                    expect_len(l, 2, "a node")?;
                    let x: f64 = parse_num(l, 0, "coordinate")?;
                    let y: f64 = parse_num(l, 1, "coordinate")?;
                    if !x.is_finite() || !y.is_finite() {
                        return Err(err(l.number, 1, "non-finite coordinate"));
                    }
                    v.push([x, y]);
                }
                nodes = Some(v);
            }
            "triangles" => {
                if triangles.is_some() {
                    return Err(duplicate());
                }
                let mut v = Vec::with_capacity(count);
                for l in body {
                    expect_len(l, 4, "a triangle")?;
                    let a = parse_num(l, 0, "node index")?;
                    let b = parse_num(l, 1, "node index")?;
                    let c = parse_num(l, 2, "node index")?;
                    let name = l.tokens[3].text;
                    let region = match region_names.iter().position(|r| r == name) {
                        Some(r) => r,
                        None => {
                            region_names.push(name.to_string());
                            region_names.len() - 1
                        }
                    };
                    v.push(Triangle { nodes: [a, b, c], region });
                }
                triangles = Some(v);
            }
            "bedges" => {
                if bedges.is_some() {
                    return Err(duplicate());
                }
                let mut v = Vec::with_capacity(count);
                for l in body {
                    expect_len(l, 3, "a boundary edge")?;
                    let a = parse_num(l, 0, "node index")?;
                    let b = parse_num(l, 1, "node index")?;
                    v.push(BoundaryEdge { nodes: [a, b], tag: parse_tag(l, 2)? });
                }
                bedges = Some(v);
            }
            other => return Err(err(line.number, kw.column, format!("unknown section `{other}`"))),
        }
    }
    let last = lines.last().map_or(1, |l| l.number);
    let nodes = nodes.ok_or_else(|| err(last, 1, "missing `nodes` section"))?;
    let triangles = triangles.ok_or_else(|| err(last, 1, "missing `triangles` section"))?;
    let bedges = bedges.ok_or_else(|| err(last, 1, "missing `bedges` section"))?;
    Mesh::new(nodes, triangles, bedges, region_names)
}
