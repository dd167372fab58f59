//! Program trees, the reference interpreter and the shared AST distribution.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Op, Ty};
use super::LangError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    /// The single list-valued program input `x`.
    Input,
    Int(i64),
    List(Vec<i64>),
    Apply(Op, Vec<Expr>),
}

/// A one-argument function `x -> body`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Program {
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    List(Vec<i64>),
}

pub const DEFAULT_STEP_CAP: u64 = 100_000;

impl Expr {
    pub fn ops(&self, out: &mut BTreeSet<Op>) {
        if let Expr::Apply(op, args) = self {
            out.insert(*op);
            args.iter().for_each(|a| a.ops(out));
        }
    }

    pub fn op_count(&self) -> usize {
        match self {
            Expr::Apply(_, args) => 1 + args.iter().map(Expr::op_count).sum::<usize>(),
            _ => 0,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Apply(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn uses_input(&self) -> bool {
        match self {
            Expr::Input => true,
            Expr::Apply(_, args) => args.iter().any(Expr::uses_input),
            _ => false,
        }
    }
}

impl Program {
    pub fn ops(&self) -> BTreeSet<Op> {
        let mut out = BTreeSet::new();
        self.body.ops(&mut out);
        out
    }
}

struct Interp {
    steps: u64,
    cap: u64,
}

impl Interp {
    fn charge(&mut self, n: u64) -> Result<(), LangError> {
        self.steps += n;
        if self.steps > self.cap {
            Err(LangError::Diverges { cap: self.cap })
        } else {
            Ok(())
        }
    }

    fn int(&mut self, e: &Expr, input: &Value) -> Result<i64, LangError> {
        match self.eval(e, input)? {
            Value::Int(i) => Ok(i),
            Value::List(_) => Err(LangError::Type("expected integer, found list".into())),
        }
    }

    fn list(&mut self, e: &Expr, input: &Value) -> Result<Vec<i64>, LangError> {
        match self.eval(e, input)? {
            Value::List(l) => Ok(l),
            Value::Int(_) => Err(LangError::Type("expected list, found integer".into())),
        }
    }

    fn eval(&mut self, e: &Expr, input: &Value) -> Result<Value, LangError> {
        self.charge(1)?;
        let args = match e {
            Expr::Input => return Ok(input.clone()),
            Expr::Int(i) => return Ok(Value::Int(*i)),
            Expr::List(l) => return Ok(Value::List(l.clone())),
            Expr::Apply(op, args) => {
                if args.len() != op.arity() {
                    return Err(LangError::Type(format!(
                        "{op} takes {} arguments, got {}",
                        op.arity(),
                        args.len()
                    )));
                }
                (op, args)
            }
        };
        let overflow = || LangError::Overflow;
        match args {
            (Op::Length, a) => {
                let l = self.list(&a[0], input)?;
                Ok(Value::Int(l.len() as i64))
            }
            (Op::Sum, a) => {
                let l = self.list(&a[0], input)?;
                self.charge(l.len() as u64)?;
                l.iter()
                    .try_fold(0i64, |acc, v| acc.checked_add(*v))
                    .map(Value::Int)
                    .ok_or_else(overflow)
            }
            (Op::Max, a) => {
                let l = self.list(&a[0], input)?;
                self.charge(l.len() as u64)?;
                Ok(Value::Int(l.into_iter().max().unwrap_or(0)))
            }
            (Op::Reverse, a) => {
                let mut l = self.list(&a[0], input)?;
                self.charge(l.len() as u64)?;
                l.reverse();
                Ok(Value::List(l))
            }
            (Op::Sort, a) => {
                let mut l = self.list(&a[0], input)?;
                self.charge(l.len() as u64)?;
                l.sort_unstable();
                Ok(Value::List(l))
            }
            (Op::MapAdd, a) => {
                let k = self.int(&a[0], input)?;
                let l = self.list(&a[1], input)?;
                self.charge(l.len() as u64)?;
                l.into_iter()
                    .map(|v| v.checked_add(k).ok_or_else(overflow))
                    .collect::<Result<_, _>>()
                    .map(Value::List)
            }
            (Op::FilterGt, a) => {
                let k = self.int(&a[0], input)?;
                let l = self.list(&a[1], input)?;
                self.charge(l.len() as u64)?;
                Ok(Value::List(l.into_iter().filter(|v| *v > k).collect()))
            }
            (Op::Take, a) => {
                let n = self.int(&a[0], input)?;
                let mut l = self.list(&a[1], input)?;
                l.truncate(n.max(0) as usize);
                Ok(Value::List(l))
            }
            (Op::Add, a) => {
                let x = self.int(&a[0], input)?;
                let y = self.int(&a[1], input)?;
                x.checked_add(y).map(Value::Int).ok_or_else(overflow)
            }
            (Op::Mul, a) => {
                let x = self.int(&a[0], input)?;
                let y = self.int(&a[1], input)?;
                x.checked_mul(y).map(Value::Int).ok_or_else(overflow)
            }
            (Op::IfLt, a) => {
                let x = self.int(&a[0], input)?;
                let y = self.int(&a[1], input)?;
                // Both branches are evaluated so ill-typed programs fail regardless of input.
                let then = self.eval(&a[2], input)?;
                let other = self.eval(&a[3], input)?;
                match (&then, &other) {
                    (Value::Int(_), Value::Int(_)) | (Value::List(_), Value::List(_)) => {}
                    _ => return Err(LangError::Type("IF_LT branches differ in type".into())),
                }
                Ok(if x < y { then } else { other })
            }
            (Op::Range, a) => {
                let n = self.int(&a[0], input)?.max(0);
                self.charge(n as u64)?;
                Ok(Value::List((0..n).collect()))
            }
            (Op::Define, _) => Err(LangError::Type("DEFINE is not an expression".into())),
        }
    }
}

/// Evaluates `program` with `x` bound to `input`, charging one step per node
/// and one per list element processed.
pub fn interpret(program: &Program, input: &Value, step_cap: u64) -> Result<Value, LangError> {
    Interp { steps: 0, cap: step_cap }.eval(&program.body, input)
}

/// The AST distribution shared by every language; only `banned` varies.
#[derive(Debug, Clone)]
pub struct AstSampler {
    pub max_depth: usize,
    pub max_list_len: usize,
    pub max_ops: usize,
    pub banned: BTreeSet<Op>,
}

/// Probability that a node at the given depth is a leaf.
const LEAF_PROB: [f64; 6] = [0.0, 0.45, 0.6, 0.75, 0.9, 1.0];

impl Default for AstSampler {
    fn default() -> Self {
        AstSampler { max_depth: 5, max_list_len: 8, max_ops: 6, banned: BTreeSet::new() }
    }
}

impl AstSampler {
    pub fn with_banned(banned: BTreeSet<Op>) -> Self {
        AstSampler { banned, ..Default::default() }
    }

    pub fn random_literal<R: Rng>(&self, rng: &mut R) -> i64 {
        if rng.gen_bool(0.5) {
            rng.gen_range(0..10)
        } else {
            rng.gen_range(0..100)
        }
    }

    pub fn random_list<R: Rng>(&self, rng: &mut R) -> Vec<i64> {
        let n = rng.gen_range(0..=self.max_list_len);
        (0..n).map(|_| rng.gen_range(0..100)).collect()
    }

    fn leaf<R: Rng>(&self, ty: Ty, rng: &mut R) -> Expr {
        match ty {
            Ty::Int => Expr::Int(self.random_literal(rng)),
            Ty::List => {
                if rng.gen_bool(0.8) {
                    Expr::Input
                } else {
                    Expr::List(self.random_list(rng))
                }
            }
            Ty::Any => unreachable!("leaves are always concretely typed"),
        }
    }

    fn expr<R: Rng>(&self, ty: Ty, depth: usize, rng: &mut R) -> Expr {
        let depth_limit = depth.min(self.max_depth);
        if rng.gen_bool(LEAF_PROB[depth_limit.min(LEAF_PROB.len() - 1)]) || depth >= self.max_depth {
            return self.leaf(ty, rng);
        }
        let candidates: Vec<Op> = Op::SEMANTIC
            .into_iter()
            .filter(|op| !self.banned.contains(op))
            .filter(|op| op.result_type() == ty || op.result_type() == Ty::Any)
            .collect();
        if candidates.is_empty() {
            return self.leaf(ty, rng);
        }
        let op = candidates[rng.gen_range(0..candidates.len())];
        let args = op
            .arg_types()
            .iter()
            .map(|t| {
                let t = if *t == Ty::Any { ty } else { *t };
                self.expr(t, depth + 1, rng)
            })
            .collect();
        Expr::Apply(op, args)
    }

    /// One program from the distribution: rooted at an operation, uses the
    /// input, respects the op budget and runs on `check_inputs` without error.
    pub fn sample<R: Rng>(&self, rng: &mut R, check_inputs: &[Value]) -> Program {
        loop {
            let ty = if rng.gen_bool(0.5) { Ty::Int } else { Ty::List };
            let body = self.expr(ty, 0, rng);
            if !body.uses_input() || body.op_count() > self.max_ops || body.depth() > self.max_depth {
                continue;
            }
            let program = Program { body };
            if check_inputs
                .iter()
                .all(|inp| interpret(&program, inp, DEFAULT_STEP_CAP).is_ok())
            {
                return program;
            }
        }
    }
}

/// Inputs every corpus program must evaluate on.
pub fn standard_check_inputs() -> Vec<Value> {
    vec![
        Value::List(vec![]),
        Value::List(vec![7]),
        Value::List(vec![3, 1, 4, 1, 5]),
        Value::List(vec![99, 98, 97, 96, 95, 94, 93, 92]),
    ]
}
