//! Rendering programs into surface tokens and parsing them back.
//!
//! A document reads `# <description> <define> x = <body> ;` where the
//! description is the prefix-order walk of the tree in language-neutral words
//! and the body is the same tree in the language's keywords.

use super::ast::{Expr, Program};
use super::spec::{LanguageSpec, Op, INPUT_WORD};
use super::LangError;

pub const INPUT_VAR: &str = "x";

fn push_list(out: &mut Vec<String>, l: &[i64]) {
    out.push("[".into());
    out.extend(l.iter().map(i64::to_string));
    out.push("]".into());
}

fn render_expr(e: &Expr, lang: &LanguageSpec, out: &mut Vec<String>) {
    match e {
        Expr::Input => out.push(INPUT_VAR.into()),
        Expr::Int(i) => out.push(i.to_string()),
        Expr::List(l) => push_list(out, l),
        Expr::Apply(op, args) => {
            out.push("(".into());
            out.push(lang.keyword(*op).to_string());
            args.iter().for_each(|a| render_expr(a, lang, out));
            out.push(")".into());
        }
    }
}

fn describe_expr(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Input => out.push(INPUT_WORD.into()),
        Expr::Int(i) => out.push(i.to_string()),
        Expr::List(l) => push_list(out, l),
        Expr::Apply(op, args) => {
            out.push(op.name().into());
            args.iter().for_each(|a| describe_expr(a, out));
        }
    }
}

/// Body tokens only.
pub fn render_body(program: &Program, lang: &LanguageSpec) -> Vec<String> {
    let mut out = Vec::new();
    render_expr(&program.body, lang, &mut out);
    out
}

pub fn describe(program: &Program) -> Vec<String> {
    let mut out = Vec::new();
    describe_expr(&program.body, &mut out);
    out
}

/// Task prompt: everything up to and including `=`.
pub fn render_prompt(program: &Program, lang: &LanguageSpec) -> Vec<String> {
    let mut out = vec!["#".to_string()];
    out.extend(describe(program));
    out.push(lang.keyword(Op::Define).to_string());
    out.push(INPUT_VAR.into());
    out.push("=".into());
    out
}

/// Completion that solves the prompt: body then `;`.
pub fn render_completion(program: &Program, lang: &LanguageSpec) -> Vec<String> {
    let mut out = render_body(program, lang);
    out.push(";".into());
    out
}

/// A full document, without BOS/EOS framing.
pub fn render_document(program: &Program, lang: &LanguageSpec) -> Vec<String> {
    let mut out = render_prompt(program, lang);
    out.extend(render_completion(program, lang));
    out
}

struct Parser<'a, S: AsRef<str>> {
    tokens: &'a [S],
    pos: usize,
    lang: &'a LanguageSpec,
}

impl<'a, S: AsRef<str>> Parser<'a, S> {
    fn next(&mut self) -> Result<&'a str, LangError> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| LangError::Parse("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(t.as_ref())
    }

    fn literal(tok: &str) -> Result<i64, LangError> {
        match tok.parse::<i64>() {
            Ok(v) if (0..100).contains(&v) => Ok(v),
            _ => Err(LangError::Parse(format!("unexpected token {tok:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, LangError> {
        let tok = self.next()?.to_string();
        match tok.as_str() {
            INPUT_VAR => Ok(Expr::Input),
            "[" => {
                let mut items = Vec::new();
                loop {
                    let t = self.next()?;
                    if t == "]" {
                        return Ok(Expr::List(items));
                    }
                    items.push(Self::literal(t)?);
                }
            }
            "(" => {
                let kw = self.next()?;
                let op = self
                    .lang
                    .op_for_keyword(kw)
                    .filter(|op| *op != Op::Define)
                    .ok_or_else(|| LangError::Parse(format!("{kw:?} is not a {} keyword", self.lang.id)))?;
                let args = (0..op.arity()).map(|_| self.expr()).collect::<Result<Vec<_>, _>>()?;
                match self.next()? {
                    ")" => Ok(Expr::Apply(op, args)),
                    t => Err(LangError::Parse(format!("expected ')', found {t:?}"))),
                }
            }
            t => Self::literal(t).map(Expr::Int),
        }
    }
}

/// Parses a body rendered in `lang`. A trailing `;` is accepted; anything
/// else after the expression is an error.
pub fn parse_body<S: AsRef<str>>(tokens: &[S], lang: &LanguageSpec) -> Result<Program, LangError> {
    let mut p = Parser { tokens, pos: 0, lang };
    let body = p.expr()?;
    match &tokens[p.pos..] {
        [] => Ok(Program { body }),
        [t] if t.as_ref() == ";" => Ok(Program { body }),
        rest => Err(LangError::Parse(format!("{} trailing tokens", rest.len()))),
    }
}
