//! Line-oriented subgraph stream format.
//!
//! ```text
//! # comment
//! ?hide cFriends
//! ?const user u9
//! friends(u1,u2)
//! cFriends(u2)
//! ---
//! ```
//!
//! Every block ends at a `---` line; content after the last separator forms
//! a final block. Arguments are constants typed by position. `?hide pred`
//! marks a target predicate as the query set for the block, and
//! `?const type name` declares a constant that occurs in no atom.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use crate::db::Database;
use crate::error::{Error, Result};
use crate::logic::text::{tokenize, Parser, RawTerm, Tok};
use crate::logic::Schema;

fn stream_err(block: usize, line: usize, msg: impl Into<String>) -> Error {
    Error::Stream {
        block,
        line,
        msg: msg.into(),
    }
}

/// Lazily parses one [`Database`] per block.
pub struct StreamReader<R> {
    lines: std::io::Lines<R>,
    schema: Arc<Schema>,
    block: usize,
    line: usize,
    done: bool,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(reader: R, schema: Arc<Schema>) -> Self {
        StreamReader {
            lines: reader.lines(),
            schema,
            block: 0,
            line: 0,
            done: false,
        }
    }

    fn read_block(&mut self) -> Result<Option<Database>> {
        let block = self.block + 1;
        let mut db = Database::new(self.schema.clone());
        let mut content = false;
        loop {
            let raw = match self.lines.next() {
                None => {
                    self.done = true;
                    return Ok(content.then_some(db));
                }
                Some(r) => r?,
            };
            self.line += 1;
            let text = raw.trim();
            if text == "---" {
                return Ok(Some(db));
            }
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            content = true;
            if let Some(rest) = text.strip_prefix('?') {
                self.directive(&mut db, rest, block)?;
            } else {
                self.atom(&mut db, text, block)?;
            }
        }
    }

    fn directive(&self, db: &mut Database, rest: &str, block: usize) -> Result<()> {
        let bad = || stream_err(block, self.line, format!("unknown directive `?{rest}`"));
        let (keyword, args) = rest.split_once(char::is_whitespace).ok_or_else(bad)?;
        match keyword {
            "hide" => {
                let pred = args.trim();
                let id = self.schema.lookup(pred).ok_or_else(|| {
                    Error::Schema(format!("block {block}, line {}: unknown predicate `{pred}`", self.line))
                })?;
                if !self.schema.is_target(id) {
                    return Err(stream_err(block, self.line, format!("`{pred}` is not a target predicate")));
                }
                db.hide(id);
            }
            "const" => {
                let (ty, name) = args.trim().split_once(char::is_whitespace).ok_or_else(bad)?;
                let ty = self
                    .schema
                    .type_id(ty)
                    .ok_or_else(|| stream_err(block, self.line, format!("unknown type `{ty}`")))?;
                let name = match tokenize(name.trim(), self.line)?.as_slice() {
                    [Tok::Ident(n)] | [Tok::Quoted(n)] => n.clone(),
                    _ => return Err(bad()),
                };
                db.add_constant(ty, &name);
            }
            _ => return Err(bad()),
        }
        Ok(())
    }

    fn atom(&self, db: &mut Database, text: &str, block: usize) -> Result<()> {
        let line = self.line;
        let malformed = |e: Error| stream_err(block, line, format!("malformed atom `{text}`: {e}"));
        let mut p = Parser::new(tokenize(text, line).map_err(malformed)?, line);
        let atom = p.atom().map_err(malformed)?;
        if atom.negated || !p.at_end() {
            return Err(stream_err(block, line, format!("malformed atom `{text}`")));
        }
        let id = self.schema.lookup(&atom.name).ok_or_else(|| {
            Error::Schema(format!("block {block}, line {line}: unknown predicate `{}`", atom.name))
        })?;
        let arity = self.schema.predicate(id).arity();
        if arity != atom.args.len() {
            return Err(stream_err(
                block,
                line,
                format!("`{}` expects {arity} arguments, got {}", atom.name, atom.args.len()),
            ));
        }
        let args: Vec<&str> = atom
            .args
            .iter()
            .map(|t| match t {
                RawTerm::Var(s) | RawTerm::Const(s) => s.as_str(),
            })
            .collect();
        db.insert(&atom.name, &args)?;
        Ok(())
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<Database>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_block() {
            Ok(Some(db)) => {
                self.block += 1;
                Some(Ok(db))
            }
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_stream(path: &Path, schema: Arc<Schema>) -> Result<StreamReader<BufReader<File>>> {
    Ok(StreamReader::new(BufReader::new(File::open(path)?), schema))
}

fn stream_constant(name: &str) -> String {
    if !name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Writes one block, terminated by `---`.
pub fn write_block(out: &mut impl Write, db: &Database) -> Result<()> {
    let schema = db.schema();
    for &p in db.hidden_predicates() {
        writeln!(out, "?hide {}", schema.predicate(p).name)?;
    }
    let mut covered = HashSet::new();
    for a in db.atoms() {
        for (&c, &ty) in a.args.iter().zip(&schema.predicate(a.pred).arg_types) {
            covered.insert((ty, c));
        }
    }
    for t in 0..schema.num_types() {
        let ty = crate::logic::TypeId(t as u32);
        for &c in db.domain(ty) {
            if !covered.contains(&(ty, c)) {
                writeln!(out, "?const {} {}", schema.type_name(ty), stream_constant(db.const_name(c)))?;
            }
        }
    }
    for a in db.atoms() {
        let args: Vec<String> = a.args.iter().map(|&c| stream_constant(db.const_name(c))).collect();
        writeln!(out, "{}({})", schema.predicate(a.pred).name, args.join(","))?;
    }
    writeln!(out, "---")?;
    Ok(())
}

pub fn write_stream<'a>(out: &mut impl Write, dbs: impl IntoIterator<Item = &'a Database>) -> Result<()> {
    for db in dbs {
        write_block(out, db)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Role;

    fn schema() -> Arc<Schema> {
        let mut s = Schema::new();
        s.add_predicate("e", &["a", "b"], Role::Evidence).unwrap();
        s.add_predicate("q", &["b"], Role::Target).unwrap();
        Arc::new(s)
    }

    fn read(text: &str) -> Vec<Result<Database>> {
        StreamReader::new(text.as_bytes(), schema()).collect()
    }

    #[test]
    fn blocks_are_split_on_separator() {
        let dbs = read("e(x,y)\n---\nq(y)\n");
        assert_eq!(dbs.len(), 2);
        let dbs = read("e(x,y)\n---\nq(y)\n---\n");
        assert_eq!(dbs.len(), 2);
    }

    #[test]
    fn constants_are_typed_by_position() {
        let s = schema();
        let db = read("e(a,b)\nq(b)\n").remove(0).unwrap();
        assert_eq!(db.num_atoms(), 2);
        let names = |t: &str| -> Vec<String> {
            db.domain(s.type_id(t).unwrap())
                .iter()
                .map(|&c| db.const_name(c).to_string())
                .collect()
        };
        assert_eq!(names("a"), ["a"]);
        assert_eq!(names("b"), ["b"]);
    }

    #[test]
    fn empty_block_is_valid() {
        let dbs = read("---\ne(a,b)\n");
        assert_eq!(dbs.len(), 2);
        assert!(dbs[0].as_ref().unwrap().is_empty());
        assert!(read("# only a comment\n").is_empty());
    }

    #[test]
    fn errors_carry_block_and_line() {
        let dbs = read("e(a,b)\n---\n# c\ne(a,\n");
        match dbs.last().unwrap() {
            Err(Error::Stream { block: 2, line: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read("zz(a)\n")[0], Err(Error::Schema(_))));
        assert!(matches!(read("q(a,b)\n")[0], Err(Error::Stream { .. })));
    }

    #[test]
    fn hide_directive() {
        let s = schema();
        let db = read("?hide q\ne(a,b)\n").remove(0).unwrap();
        assert_eq!(db.hidden_predicates(), &[s.lookup("q").unwrap()]);
        assert!(read("?hide e\n")[0].is_err());
    }

    #[test]
    fn roundtrip() {
        let s = schema();
        let mut a = Database::new(s.clone());
        a.insert("e", &["x 1", "y"]).unwrap();
        a.insert("q", &["Y\"q"]).unwrap();
        a.add_constant(s.type_id("b").unwrap(), "lonely");
        a.hide(s.lookup("q").unwrap());
        let b = Database::new(s.clone());
        let mut buf = Vec::new();
        write_stream(&mut buf, [&a, &b]).unwrap();
        let back: Vec<Database> = StreamReader::new(buf.as_slice(), s.clone())
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(back, vec![a.clone(), b]);
        let ty = s.type_id("b").unwrap();
        let dom = |d: &Database| -> HashSet<String> {
            d.domain(ty).iter().map(|&c| d.const_name(c).to_string()).collect()
        };
        assert_eq!(dom(&back[0]), dom(&a));
    }
}
