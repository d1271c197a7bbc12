//! Line-oriented interactive shell.
//!
//! Statements run with match number 1. `\next` re-issues the last SELECT
//! with the next match number, `\count` counts the rows its predicate
//! matches, `\ops` prints the counters of the last statement and `\quit`
//! leaves. A failing statement prints an error and the shell carries on.

use std::io::{self, BufRead, Read, Write};

use hedb_core::query::QueryKind;
use hedb_core::sql::{self, QueryAst};

use crate::render::{render_answer, render_counts};
use crate::{describe_error, Session};

pub const PROMPT: &str = "hedb> ";

struct LastSelect {
    ast: QueryAst,
    n: u64,
}

pub fn run_shell<S: Read + Write>(
    session: &mut Session<S>,
    input: impl BufRead,
    out: &mut (impl Write + ?Sized),
) -> io::Result<()> {
    let mut last: Option<LastSelect> = None;
    write!(out, "{PROMPT}")?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        let cmd = line.trim();
        match cmd {
            "" => {}
            "\\quit" | "\\q" => break,
            "\\ops" => match session.last_counts() {
                Some(c) => writeln!(out, "{}", render_counts(&c))?,
                None => writeln!(out, "no statement has run yet")?,
            },
            "\\next" => match &mut last {
                Some(sel) => {
                    sel.n += 1;
                    let text = sql::render(&sel.ast);
                    run(session, &text, sel.n, out)?;
                }
                None => writeln!(out, "no SELECT to continue")?,
            },
            "\\count" => match &last {
                Some(sel) => {
                    let count = QueryAst {
                        kind: QueryKind::Count,
                        ..sel.ast.clone()
                    };
                    run(session, &sql::render(&count), 1, out)?;
                }
                None => writeln!(out, "no SELECT to count")?,
            },
            c if c.starts_with('\\') => writeln!(out, "unknown command {c}; try \\next \\count \\ops \\quit")?,
            text => {
                if let Ok(ast) = sql::parse(text) {
                    if ast.kind == QueryKind::Select {
                        last = Some(LastSelect { ast, n: 1 });
                    }
                }
                run(session, text, 1, out)?;
            }
        }
        write!(out, "{PROMPT}")?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(())
}

fn run<S: Read + Write>(session: &mut Session<S>, text: &str, n: u64, out: &mut (impl Write + ?Sized)) -> io::Result<()> {
    match session.query(text, n) {
        Ok(answer) => {
            if answer.query.kind() == QueryKind::Select && n > 1 {
                writeln!(out, "match {n}:")?;
            }
            writeln!(out, "{}", render_answer(&answer))
        }
        Err(e) => writeln!(out, "{}", describe_error(Some(text), &e)),
    }
}
