use std::collections::HashMap;
use std::f64::consts::PI;

use super::ir::{CircuitIR, GateKind, GateOp};
use super::lexer::{tokenize, Tok, Token};
use super::QasmError;

/// Constant angle expression. `Var` refers to a formal parameter of a `gate` definition.
#[derive(Debug, Clone)]
enum Expr {
    Num(f64),
    Pi,
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

impl Expr {
    // IEEE semantics: `1/0` evaluates to inf rather than erroring. Non-finite
    // angles are caught by execution validation.
    fn eval(&self, env: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => PI,
            Expr::Var(i) => env[*i],
            Expr::Neg(e) => -e.eval(env),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(env);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct BodyOp {
    name: String,
    params: Vec<Expr>,
    qargs: Vec<usize>,
    line: usize,
}

#[derive(Debug, Clone)]
struct GateDef {
    num_params: usize,
    num_qubits: usize,
    body: Vec<BodyOp>,
    opaque: bool,
}

#[derive(Debug, Clone)]
struct Register {
    offset: usize,
    size: usize,
}

/// Reference to a qubit operand: a whole register or one element.
#[derive(Debug, Clone)]
enum Arg {
    Whole { name: String, offset: usize, size: usize },
    Single(usize),
}

const MAX_INLINE_DEPTH: usize = 64;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    qregs: HashMap<String, Register>,
    cregs: HashMap<String, usize>,
    num_qubits: usize,
    gates: HashMap<String, GateDef>,
    ops: Vec<GateOp>,
}

/// Parses OpenQASM 2.0 source into a circuit with all parameters literal.
pub fn parse_qasm(source_id: &str, text: &str) -> Result<CircuitIR, QasmError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        qregs: HashMap::new(),
        cregs: HashMap::new(),
        num_qubits: 0,
        gates: HashMap::new(),
        ops: Vec::new(),
    };
    while !p.at_end() {
        p.statement()?;
    }
    if p.num_qubits == 0 {
        return Err(QasmError::syntax(p.last_line(), "no qreg declared"));
    }
    Ok(CircuitIR::new(source_id, p.num_qubits, p.ops))
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn last_line(&self) -> usize {
        self.tokens.last().map_or(1, |t| t.line)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map_or_else(|| self.last_line(), |t| t.line)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Result<Tok, QasmError> {
        let line = self.line();
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| QasmError::syntax(line, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t.tok.clone())
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), QasmError> {
        let line = self.line();
        match self.next()? {
            ref t if *t == tok => Ok(()),
            t => Err(QasmError::syntax(line, format!("expected {what}, found {}", describe(&t)))),
        }
    }

    fn ident(&mut self) -> Result<String, QasmError> {
        let line = self.line();
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            t => Err(QasmError::syntax(line, format!("expected identifier, found {}", describe(&t)))),
        }
    }

    fn integer(&mut self) -> Result<usize, QasmError> {
        let line = self.line();
        match self.next()? {
            Tok::Number { integral: Some(v), .. } => usize::try_from(v)
                .map_err(|_| QasmError::syntax(line, "integer too large")),
            t => Err(QasmError::syntax(line, format!("expected integer, found {}", describe(&t)))),
        }
    }

    fn statement(&mut self) -> Result<(), QasmError> {
        let line = self.line();
        let head = self.ident()?;
        match head.as_str() {
            "OPENQASM" => {
                match self.next()? {
                    Tok::Number { value, .. } if (2.0..3.0).contains(&value) => {}
                    _ => return Err(QasmError::syntax(line, "only OpenQASM 2.x is supported")),
                }
                self.expect(Tok::Semi, "`;`")
            }
            "include" => {
                match self.next()? {
                    Tok::Str(_) => {}
                    t => {
                        return Err(QasmError::syntax(line, format!("expected file name, found {}", describe(&t))))
                    }
                }
                self.expect(Tok::Semi, "`;`")
            }
            "qreg" => {
                let (name, size) = self.reg_decl()?;
                if size == 0 {
                    return Err(QasmError::syntax(line, "register size must be positive"));
                }
                if self.qregs.contains_key(&name) {
                    return Err(QasmError::syntax(line, format!("duplicate qreg `{name}`")));
                }
                self.qregs.insert(
                    name,
                    Register {
                        offset: self.num_qubits,
                        size,
                    },
                );
                self.num_qubits += size;
                Ok(())
            }
            "creg" => {
                let (name, size) = self.reg_decl()?;
                self.cregs.insert(name, size);
                Ok(())
            }
            "gate" => self.gate_def(false),
            "opaque" => self.gate_def(true),
            "if" => Err(QasmError::syntax(line, "classical control flow is not supported")),
            "measure" => {
                let src = self.qarg()?;
                self.expect(Tok::Arrow, "`->`")?;
                self.carg()?;
                self.expect(Tok::Semi, "`;`")?;
                for q in self.expand_args(&[src], line)?.into_iter().flatten() {
                    self.ops.push(GateOp::fixed(GateKind::Measure, &[q]));
                }
                Ok(())
            }
            "reset" => {
                let arg = self.qarg()?;
                self.expect(Tok::Semi, "`;`")?;
                for q in self.expand_args(&[arg], line)?.into_iter().flatten() {
                    self.ops.push(GateOp::fixed(GateKind::Reset, &[q]));
                }
                Ok(())
            }
            "barrier" => {
                let args = self.qarg_list()?;
                self.expect(Tok::Semi, "`;`")?;
                let mut qubits = Vec::new();
                for a in &args {
                    match a {
                        Arg::Single(q) => qubits.push(*q),
                        Arg::Whole { offset, size, .. } => qubits.extend(*offset..offset + size),
                    }
                }
                qubits.dedup();
                ensure_distinct(&qubits, line)?;
                self.ops.push(GateOp::fixed(GateKind::Barrier, &qubits));
                Ok(())
            }
            _ => self.gate_call(head, line),
        }
    }

    fn reg_decl(&mut self) -> Result<(String, usize), QasmError> {
        let name = self.ident()?;
        self.expect(Tok::LBracket, "`[`")?;
        let size = self.integer()?;
        self.expect(Tok::RBracket, "`]`")?;
        self.expect(Tok::Semi, "`;`")?;
        Ok((name, size))
    }

    fn qarg(&mut self) -> Result<Arg, QasmError> {
        let line = self.line();
        let name = self.ident()?;
        let reg = self
            .qregs
            .get(&name)
            .cloned()
            .ok_or_else(|| QasmError::syntax(line, format!("unknown qreg `{name}`")))?;
        if self.eat(&Tok::LBracket) {
            let index = self.integer()?;
            self.expect(Tok::RBracket, "`]`")?;
            if index >= reg.size {
                return Err(QasmError::QubitOutOfRange {
                    register: name,
                    index,
                    size: reg.size,
                    line,
                });
            }
            Ok(Arg::Single(reg.offset + index))
        } else {
            Ok(Arg::Whole {
                name,
                offset: reg.offset,
                size: reg.size,
            })
        }
    }

    fn carg(&mut self) -> Result<(), QasmError> {
        let line = self.line();
        let name = self.ident()?;
        let size = *self
            .cregs
            .get(&name)
            .ok_or_else(|| QasmError::syntax(line, format!("unknown creg `{name}`")))?;
        if self.eat(&Tok::LBracket) {
            let index = self.integer()?;
            self.expect(Tok::RBracket, "`]`")?;
            if index >= size {
                return Err(QasmError::syntax(line, format!("bit index {index} out of range for `{name}`")));
            }
        }
        Ok(())
    }

    fn qarg_list(&mut self) -> Result<Vec<Arg>, QasmError> {
        let mut args = vec![self.qarg()?];
        while self.eat(&Tok::Comma) {
            args.push(self.qarg()?);
        }
        Ok(args)
    }

    /// Applies register broadcasting: whole-register operands iterate in lockstep.
    fn expand_args(&self, args: &[Arg], line: usize) -> Result<Vec<Vec<usize>>, QasmError> {
        let mut width = None;
        for a in args {
            if let Arg::Whole { name, size, .. } = a {
                match width {
                    None => width = Some(*size),
                    Some(w) if w != *size => {
                        return Err(QasmError::syntax(
                            line,
                            format!("register `{name}` size mismatch in broadcast"),
                        ))
                    }
                    _ => {}
                }
            }
        }
        let rows = width.unwrap_or(1);
        Ok((0..rows)
            .map(|i| {
                args.iter()
                    .map(|a| match a {
                        Arg::Single(q) => *q,
                        Arg::Whole { offset, .. } => offset + i,
                    })
                    .collect()
            })
            .collect())
    }

    fn gate_def(&mut self, opaque: bool) -> Result<(), QasmError> {
        let line = self.line();
        let name = self.ident()?;
        let mut formals = Vec::new();
        if self.eat(&Tok::LParen) && !self.eat(&Tok::RParen) {
            formals.push(self.ident()?);
            while self.eat(&Tok::Comma) {
                formals.push(self.ident()?);
            }
            self.expect(Tok::RParen, "`)`")?;
        }
        let mut qformals = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            qformals.push(self.ident()?);
        }
        let mut body = Vec::new();
        if opaque {
            self.expect(Tok::Semi, "`;`")?;
        } else {
            self.expect(Tok::LBrace, "`{`")?;
            while !self.eat(&Tok::RBrace) {
                let op_line = self.line();
                let op_name = self.ident()?;
                let params = if op_name != "barrier" && self.eat(&Tok::LParen) {
                    self.expr_list(&formals)?
                } else {
                    Vec::new()
                };
                let mut qargs = Vec::new();
                loop {
                    let l = self.line();
                    let q = self.ident()?;
                    let idx = qformals
                        .iter()
                        .position(|f| *f == q)
                        .ok_or_else(|| QasmError::syntax(l, format!("unknown gate argument `{q}`")))?;
                    qargs.push(idx);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::Semi, "`;`")?;
                if op_name == "barrier" {
                    continue;
                }
                ensure_distinct(&qargs, op_line)?;
                body.push(BodyOp {
                    name: op_name,
                    params,
                    qargs,
                    line: op_line,
                });
            }
        }
        // The builtin kinds always win over a redefinition (e.g. a pasted qelib1 body).
        if GateKind::from_gate_name(&name).is_none() {
            if self.gates.contains_key(&name) {
                return Err(QasmError::syntax(line, format!("gate `{name}` defined twice")));
            }
            self.gates.insert(
                name,
                GateDef {
                    num_params: formals.len(),
                    num_qubits: qformals.len(),
                    body,
                    opaque,
                },
            );
        }
        Ok(())
    }

    fn expr_list(&mut self, formals: &[String]) -> Result<Vec<Expr>, QasmError> {
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        out.push(self.expr(formals)?);
        while self.eat(&Tok::Comma) {
            out.push(self.expr(formals)?);
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(out)
    }

    fn expr(&mut self, formals: &[String]) -> Result<Expr, QasmError> {
        let mut lhs = self.term(formals)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term(formals)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self, formals: &[String]) -> Result<Expr, QasmError> {
        let mut lhs = self.unary(formals)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary(formals)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self, formals: &[String]) -> Result<Expr, QasmError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary(formals)?)));
        }
        if self.eat(&Tok::Plus) {
            return self.unary(formals);
        }
        let base = self.primary(formals)?;
        if self.eat(&Tok::Caret) {
            let exp = self.unary(formals)?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self, formals: &[String]) -> Result<Expr, QasmError> {
        let line = self.line();
        match self.next()? {
            Tok::Number { value, .. } => Ok(Expr::Num(value)),
            Tok::LParen => {
                let e = self.expr(formals)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "pi" => Ok(Expr::Pi),
            Tok::Ident(name) => {
                if let Some(i) = formals.iter().position(|f| *f == name) {
                    return Ok(Expr::Var(i));
                }
                if let Some(f) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "`(`")?;
                    let arg = self.expr(formals)?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                Err(QasmError::syntax(line, format!("unknown identifier `{name}` in expression")))
            }
            t => Err(QasmError::syntax(line, format!("expected expression, found {}", describe(&t)))),
        }
    }

    fn gate_call(&mut self, name: String, line: usize) -> Result<(), QasmError> {
        let params = if self.eat(&Tok::LParen) {
            self.expr_list(&[])?
        } else {
            Vec::new()
        };
        let values: Vec<f64> = params.iter().map(|e| e.eval(&[])).collect();
        let args = self.qarg_list()?;
        self.expect(Tok::Semi, "`;`")?;
        for qubits in self.expand_args(&args, line)? {
            ensure_distinct(&qubits, line)?;
            let mut emitted = Vec::new();
            self.emit(&name, &values, &qubits, line, 0, &mut emitted)?;
            self.ops.extend(emitted);
        }
        Ok(())
    }

    fn emit(
        &self,
        name: &str,
        params: &[f64],
        qubits: &[usize],
        line: usize,
        depth: usize,
        out: &mut Vec<GateOp>,
    ) -> Result<(), QasmError> {
        if let Some(kind) = GateKind::from_gate_name(name) {
            let arity = kind.qubit_arity().unwrap_or(qubits.len());
            if params.len() != kind.param_arity() {
                return Err(QasmError::syntax(
                    line,
                    format!("`{name}` takes {} parameter(s), got {}", kind.param_arity(), params.len()),
                ));
            }
            if qubits.len() != arity {
                return Err(QasmError::syntax(
                    line,
                    format!("`{name}` acts on {arity} qubit(s), got {}", qubits.len()),
                ));
            }
            out.push(GateOp::with_angles(kind, qubits, params));
            return Ok(());
        }
        let def = match self.gates.get(name) {
            Some(d) if !d.opaque => d,
            _ => return Err(QasmError::UnsupportedGate(name.to_string())),
        };
        if depth >= MAX_INLINE_DEPTH {
            return Err(QasmError::syntax(line, format!("gate `{name}` nests too deeply")));
        }
        if params.len() != def.num_params || qubits.len() != def.num_qubits {
            return Err(QasmError::syntax(line, format!("wrong number of arguments to `{name}`")));
        }
        for op in &def.body {
            let values: Vec<f64> = op.params.iter().map(|e| e.eval(params)).collect();
            let actual: Vec<usize> = op.qargs.iter().map(|&i| qubits[i]).collect();
            self.emit(&op.name, &values, &actual, op.line, depth + 1, out)?;
        }
        Ok(())
    }
}

fn ensure_distinct(qubits: &[usize], line: usize) -> Result<(), QasmError> {
    for (i, q) in qubits.iter().enumerate() {
        if qubits[..i].contains(q) {
            return Err(QasmError::syntax(line, format!("qubit {q} used twice in one operation")));
        }
    }
    Ok(())
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number { value, .. } => format!("number {value}"),
        Tok::Str(s) => format!("string \"{s}\""),
        other => format!("{other:?}"),
    }
}
