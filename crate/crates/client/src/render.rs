//! Plain-text rendering of decrypted answers.

use hedb_core::circuits::OpCounts;
use hedb_core::query::QueryKind;
use hedb_core::sql::QueryResult;

use crate::Answer;

pub const NO_MATCH: &str = "(no match)";

/// Left-aligned columns separated by ` | `, with a dashed rule under the
/// header.
pub fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&rule.join("-+-"));
    for row in rows {
        out.push('\n');
        out.push_str(&line(row));
    }
    out
}

pub fn render_answer(a: &Answer) -> String {
    let ast = a.query.ast();
    match &a.result {
        QueryResult::Record(_) if a.result.is_empty_record() => NO_MATCH.to_string(),
        QueryResult::Record(values) => {
            let headers: Vec<String> = a
                .query
                .schema()
                .columns()
                .iter()
                .map(|c| c.name().to_string())
                .collect();
            render_table(&headers, &[values.iter().map(ToString::to_string).collect()])
        }
        QueryResult::Count(c) => render_table(&["count".to_string()], &[vec![c.to_string()]]),
        QueryResult::Avg { sum, count } => match a.result.average() {
            None => NO_MATCH.to_string(),
            Some(avg) => render_table(
                &[
                    format!("avg({})", ast.target.as_deref().unwrap_or("")),
                    "sum".to_string(),
                    "count".to_string(),
                ],
                &[vec![format!("{avg:.2}"), sum.to_string(), count.to_string()]],
            ),
        },
        QueryResult::Ack => match ast.kind {
            QueryKind::Update => "UPDATE applied".to_string(),
            _ => "DELETE applied".to_string(),
        },
    }
}

pub fn render_counts(c: &OpCounts) -> String {
    format!(
        "additions {}  multiplications {}  recrypts {}  total {}",
        c.additions,
        c.multiplications,
        c.recrypts,
        c.total()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_align() {
        let t = render_table(
            &["name".into(), "age".into()],
            &[vec!["Bob".into(), "30".into()], vec!["Alexandra".into(), "7".into()]],
        );
        assert_eq!(
            t,
            "name      | age\n----------+----\nBob       | 30\nAlexandra | 7"
        );
    }
}
