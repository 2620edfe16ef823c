//! Result-table emission: the fixed CSV schema and an aligned pretty format.
//! Numbers use the shortest round-trip representation; missing fields stay
//! empty.

use tfde::experiment::ResultRow;

pub const CSV_HEADER: &str =
    "lambda,alpha,beta,M,N,omega,solver,precond,avg_iters,cpu_seconds,final_relres,error_inf,error_l2";

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn fields(row: &ResultRow) -> Vec<String> {
    vec![
        num(row.lambda),
        num(row.alpha),
        row.beta.map(|b| format!("{b}")).unwrap_or_default(),
        format!("{}", row.m),
        row.steps.map(|n| format!("{n}")).unwrap_or_default(),
        num(row.omega),
        row.solver.to_string(),
        row.precond.clone(),
        num(row.avg_iters),
        num(row.cpu_seconds),
        num(row.final_relres),
        num(row.error_inf),
        num(row.error_l2),
    ]
}

/// Quotes a field when it holds a comma or quote, doubling inner quotes.
fn quoted(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

fn split_csv_line(line: &str) -> Result<Vec<String>, String> {
    let mut parts = Vec::new();
    let mut cell = String::new();
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cell.push('"');
                } else {
                    in_quotes = false;
                }
            }
            '"' => in_quotes = true,
            ',' if !in_quotes => parts.push(std::mem::take(&mut cell)),
            _ => cell.push(c),
        }
    }
    if in_quotes {
        return Err(format!("unterminated quote in {line:?}"));
    }
    parts.push(cell);
    Ok(parts)
}

pub fn csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = fields(row).iter().map(|c| quoted(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Right-aligned columns, two spaces apart, same schema as the CSV.
pub fn pretty(rows: &[ResultRow]) -> String {
    let mut table: Vec<Vec<String>> =
        vec![CSV_HEADER.split(',').map(str::to_string).collect()];
    table.extend(rows.iter().map(fields));
    let columns = table[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            for _ in cell.len()..widths[c] {
                out.push(' ');
            }
            out.push_str(cell);
        }
        out.push('\n');
    }
    out
}

/// Reads back what [`csv`] wrote. The problem id and column label are not
/// part of the schema and come back empty.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv input")?;
    if header != CSV_HEADER {
        return Err(format!("unexpected csv header {header:?}"));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts = split_csv_line(line).map_err(|e| format!("csv line {}: {e}", idx + 2))?;
        if parts.len() != 13 {
            return Err(format!("csv line {}: expected 13 fields, got {}", idx + 2, parts.len()));
        }
        let field = |pos: usize| -> Result<f64, String> {
            let s = &parts[pos];
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|e| format!("csv line {}, field {}: {e}", idx + 2, pos + 1))
            }
        };
        let solver = match parts[6].as_str() {
            "cg" => "cg",
            "gmres" => "gmres",
            "mg" => "mg",
            other => return Err(format!("csv line {}: unknown solver {other:?}", idx + 2)),
        };
        rows.push(ResultRow {
            problem: 0,
            lambda: field(0)?,
            alpha: field(1)?,
            beta: if parts[2].is_empty() {
                None
            } else {
                Some(parts[2].parse().map_err(|e| format!("csv line {}: {e}", idx + 2))?)
            },
            m: parts[3].parse().map_err(|e| format!("csv line {}: {e}", idx + 2))?,
            steps: if parts[4].is_empty() {
                None
            } else {
                Some(parts[4].parse().map_err(|e| format!("csv line {}: {e}", idx + 2))?)
            },
            label: String::new(),
            solver,
            precond: parts[7].to_string(),
            omega: field(5)?,
            avg_iters: field(8)?,
            cpu_seconds: field(9)?,
            final_relres: field(10)?,
            error_inf: field(11)?,
            error_l2: field(12)?,
            failure: None,
        });
    }
    Ok(rows)
}
