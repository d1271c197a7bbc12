use crate::query::QueryKind;

use super::{CmpOp, Condition, Literal, QueryAst, SqlError};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Number(u64),
    Str(String),
    Sym(&'static str),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    at: usize,
}

const SYMBOLS: [&str; 15] = [
    "!=", "<=", ">=", "<>", "*", "(", ")", ",", "=", "<", ">", ";", "-", "+", ".",
];

fn syntax(at: usize, message: impl Into<String>) -> SqlError {
    SqlError::Syntax {
        offset: at,
        message: message.into(),
    }
}

fn unsupported(at: usize, feature: impl Into<String>) -> SqlError {
    SqlError::Unsupported {
        offset: at,
        feature: feature.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Word(text[start..i].to_string()),
                at: start,
            });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                return Err(syntax(i, "malformed number"));
            }
            let v = text[start..i]
                .parse()
                .map_err(|_| syntax(start, "integer literal too large"))?;
            out.push(Token {
                tok: Tok::Number(v),
                at: start,
            });
        } else if c == b'\'' {
            let start = i;
            let mut s = String::new();
            i += 1;
            loop {
                let Some(rel) = text[i..].find('\'') else {
                    return Err(syntax(start, "unterminated string literal"));
                };
                s.push_str(&text[i..i + rel]);
                i += rel + 1;
                if bytes.get(i) == Some(&b'\'') {
                    s.push('\'');
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                at: start,
            });
        } else if let Some(sym) = SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            out.push(Token {
                tok: Tok::Sym(sym),
                at: i,
            });
            i += sym.len();
        } else {
            let ch = text[i..].chars().next().expect("in bounds");
            return Err(syntax(i, format!("unexpected character {ch:?}")));
        }
    }
    out.push(Token {
        tok: Tok::End,
        at: text.len(),
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Words that name SQL features outside the subset.
const UNSUPPORTED_WORDS: [&str; 22] = [
    "AND", "OR", "NOT", "JOIN", "INNER", "LEFT", "RIGHT", "OUTER", "ORDER", "GROUP", "LIMIT",
    "HAVING", "LIKE", "IN", "BETWEEN", "IS", "UNION", "DISTINCT", "SUM", "MIN", "MAX", "OFFSET",
];

const UNSUPPORTED_STATEMENTS: [&str; 7] = ["INSERT", "CREATE", "DROP", "ALTER", "WITH", "BEGIN", "REPLACE"];

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn describe(t: &Token) -> String {
        match &t.tok {
            Tok::Word(w) => format!("{w:?}"),
            Tok::Number(n) => n.to_string(),
            Tok::Str(_) => "string literal".into(),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::End => "end of input".into(),
        }
    }

    /// Error for an unexpected token, flagging known out-of-subset features.
    fn unexpected(&self, wanted: &str) -> SqlError {
        let t = self.peek();
        if let Tok::Word(w) = &t.tok {
            let upper = w.to_ascii_uppercase();
            if UNSUPPORTED_WORDS.contains(&upper.as_str()) {
                return unsupported(t.at, upper);
            }
        }
        if let Tok::Sym(s @ ("!=" | "<=" | ">=" | "<>")) = &t.tok {
            return unsupported(t.at, format!("operator {s}"));
        }
        syntax(t.at, format!("expected {wanted}, found {}", Self::describe(t)))
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(kw))
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), SqlError> {
        if self.peek().tok == Tok::Sym(match_sym(sym)) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{sym}'")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SqlError> {
        match &self.peek().tok {
            Tok::Word(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn literal(&mut self) -> Result<Literal, SqlError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Number(v) => {
                self.bump();
                Ok(Literal::Uint(v))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Literal::Str(s))
            }
            Tok::Sym("-") => Err(unsupported(t.at, "signed literals")),
            _ => Err(self.unexpected("literal")),
        }
    }

    fn table_then_where(&mut self) -> Result<(String, Condition), SqlError> {
        let table = self.ident("table name")?;
        if self.peek().tok == Tok::Sym(",") {
            return Err(unsupported(self.peek().at, "multiple tables"));
        }
        if self.peek().tok == Tok::End || self.peek().tok == Tok::Sym(";") {
            return Err(unsupported(self.peek().at, "statements without a WHERE predicate"));
        }
        self.expect_kw("WHERE")?;
        Ok((table, self.condition()?))
    }

    fn condition(&mut self) -> Result<Condition, SqlError> {
        let column = self.ident("column name")?;
        let op = match self.peek().tok {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym(">") => CmpOp::Gt,
            _ => return Err(self.unexpected("'=', '<' or '>'")),
        };
        self.bump();
        let literal = self.literal()?;
        Ok(Condition { column, op, literal })
    }

    fn finish(&mut self) -> Result<(), SqlError> {
        if self.peek().tok == Tok::Sym(";") {
            self.bump();
        }
        if self.peek().tok != Tok::End {
            return Err(self.unexpected("end of statement"));
        }
        Ok(())
    }

    fn statement(&mut self) -> Result<QueryAst, SqlError> {
        let start = self.peek().clone();
        let ast = if self.is_kw("SELECT") {
            self.bump();
            self.select()?
        } else if self.is_kw("UPDATE") {
            self.bump();
            self.update()?
        } else if self.is_kw("DELETE") {
            self.bump();
            self.expect_kw("FROM")?;
            let (table, predicate) = self.table_then_where()?;
            QueryAst {
                kind: QueryKind::Delete,
                table,
                predicate,
                assignments: Vec::new(),
                target: None,
            }
        } else {
            if let Tok::Word(w) = &start.tok {
                let upper = w.to_ascii_uppercase();
                if UNSUPPORTED_STATEMENTS.contains(&upper.as_str()) {
                    return Err(unsupported(start.at, format!("{upper} statements")));
                }
            }
            return Err(self.unexpected("SELECT, UPDATE or DELETE"));
        };
        self.finish()?;
        Ok(ast)
    }

    fn select(&mut self) -> Result<QueryAst, SqlError> {
        let (kind, target) = if self.peek().tok == Tok::Sym("*") {
            self.bump();
            (QueryKind::Select, None)
        } else if self.is_kw("COUNT") {
            self.bump();
            self.expect_sym("(")?;
            self.expect_sym("*")?;
            self.expect_sym(")")?;
            (QueryKind::Count, None)
        } else if self.is_kw("AVG") {
            self.bump();
            self.expect_sym("(")?;
            let col = self.ident("column name")?;
            self.expect_sym(")")?;
            (QueryKind::Avg, Some(col))
        } else if let Tok::Word(_) = self.peek().tok {
            let at = self.peek().at;
            let e = self.unexpected("'*', COUNT or AVG");
            return Err(match e {
                SqlError::Syntax { .. } => unsupported(at, "column lists"),
                other => other,
            });
        } else {
            return Err(self.unexpected("'*', COUNT or AVG"));
        };
        self.expect_kw("FROM")?;
        let (table, predicate) = self.table_then_where()?;
        Ok(QueryAst {
            kind,
            table,
            predicate,
            assignments: Vec::new(),
            target,
        })
    }

    fn update(&mut self) -> Result<QueryAst, SqlError> {
        let table = self.ident("table name")?;
        self.expect_kw("SET")?;
        let mut assignments = Vec::new();
        loop {
            let col = self.ident("column name")?;
            self.expect_sym("=")?;
            assignments.push((col, self.literal()?));
            if self.peek().tok == Tok::Sym(",") {
                self.bump();
            } else {
                break;
            }
        }
        if self.peek().tok == Tok::End {
            return Err(unsupported(self.peek().at, "statements without a WHERE predicate"));
        }
        self.expect_kw("WHERE")?;
        let predicate = self.condition()?;
        Ok(QueryAst {
            kind: QueryKind::Update,
            table,
            predicate,
            assignments,
            target: None,
        })
    }
}

fn match_sym(s: &str) -> &'static str {
    SYMBOLS.iter().find(|x| **x == s).copied().expect("known symbol")
}

/// Parses one statement.
pub fn parse(text: &str) -> Result<QueryAst, SqlError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.statement()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::render;
    use proptest::prelude::*;

    fn cond(column: &str, op: CmpOp, literal: Literal) -> Condition {
        Condition {
            column: column.into(),
            op,
            literal,
        }
    }

    #[test]
    fn select_by_name() {
        let ast = parse("SELECT * FROM patients WHERE name = 'Bob'").unwrap();
        assert_eq!(ast.kind, QueryKind::Select);
        assert_eq!(ast.table, "patients");
        assert_eq!(ast.predicate, cond("name", CmpOp::Eq, Literal::Str("Bob".into())));
    }

    #[test]
    fn delete_with_gt() {
        let ast = parse("delete from t where age > 30;").unwrap();
        assert_eq!(ast.kind, QueryKind::Delete);
        assert_eq!(ast.predicate, cond("age", CmpOp::Gt, Literal::Uint(30)));
    }

    #[test]
    fn aggregates_and_update() {
        let c = parse("SELECT COUNT(*) FROM t WHERE a < 3").unwrap();
        assert_eq!(c.kind, QueryKind::Count);
        let a = parse("Select Avg(age) From t Where name = 'B*'").unwrap();
        assert_eq!(a.kind, QueryKind::Avg);
        assert_eq!(a.target.as_deref(), Some("age"));
        let u = parse("UPDATE t SET a = 1, b = 'x''y' WHERE a = 2").unwrap();
        assert_eq!(
            u.assignments,
            vec![
                ("a".to_string(), Literal::Uint(1)),
                ("b".to_string(), Literal::Str("x'y".into()))
            ]
        );
    }

    #[test]
    fn unsupported_features() {
        for (q, at) in [
            ("SELECT * FROM t WHERE a = 1 OR b = 2", 28),
            ("SELECT * FROM t WHERE a = 1 AND b = 2", 28),
            ("SELECT a FROM t WHERE a = 1", 7),
            ("SELECT * FROM t JOIN u WHERE a = 1", 16),
            ("SELECT * FROM t WHERE a <= 1", 24),
            ("SELECT * FROM t WHERE a LIKE 'x'", 24),
            ("SELECT * FROM t", 15),
            ("INSERT INTO t VALUES (1)", 0),
            ("SELECT SUM(a) FROM t WHERE a = 1", 7),
            ("SELECT * FROM t WHERE a = -1", 26),
        ] {
            match parse(q) {
                Err(SqlError::Unsupported { offset, .. }) => assert_eq!(offset, at, "{q}"),
                other => panic!("{q}: {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        for (q, at) in [
            ("SELECT * FROM t WHERE a = 'open", 26),
            ("SELECT * FORM t WHERE a = 1", 9),
            ("SELECT * FROM t WHERE a = 1 garbage", 28),
            ("SELECT * FROM t WHERE a = 99999999999999999999999", 26),
            ("SELECT * FROM t WHERE a = 1 #", 28),
            ("", 0),
        ] {
            match parse(q) {
                Err(SqlError::Syntax { offset, .. }) => assert_eq!(offset, at, "{q}"),
                other => panic!("{q}: {other:?}"),
            }
        }
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_]{0,6}".prop_filter("not a keyword", |s| {
            !["select", "from", "where", "set", "count", "avg", "update", "delete"]
                .contains(&s.as_str())
        })
    }

    fn literal() -> impl Strategy<Value = Literal> {
        prop_oneof![
            any::<u64>().prop_map(Literal::Uint),
            "[ -~]{0,6}".prop_map(Literal::Str),
        ]
    }

    fn ast() -> impl Strategy<Value = QueryAst> {
        let op = prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Lt), Just(CmpOp::Gt)];
        let kind = prop_oneof![
            Just(QueryKind::Select),
            Just(QueryKind::Update),
            Just(QueryKind::Delete),
            Just(QueryKind::Count),
            Just(QueryKind::Avg),
        ];
        (
            kind,
            ident(),
            ident(),
            op,
            literal(),
            proptest::collection::vec((ident(), literal()), 1..4),
            ident(),
        )
            .prop_map(|(kind, table, column, op, lit, sets, target)| QueryAst {
                kind,
                table,
                predicate: Condition {
                    column,
                    op,
                    literal: lit,
                },
                assignments: if kind == QueryKind::Update { sets } else { Vec::new() },
                target: (kind == QueryKind::Avg).then_some(target),
            })
    }

    proptest! {
        #[test]
        fn parse_inverts_render(a in ast()) {
            prop_assert_eq!(parse(&render(&a)).unwrap(), a);
        }
    }
}
