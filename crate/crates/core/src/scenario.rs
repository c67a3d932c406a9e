//! Concrete syntax: the expression grammar for F and ψ, the scenario file
//! format, task execution and the JSON report.
//!
//! Expression grammar (whitespace insensitive, `^` binds tightest):
//!
//! ```text
//! expr     := ('+'|'-')? term (('+'|'-') term)*
//! term     := factor ('*' factor)*
//! factor   := base ('^' nat)?
//! base     := rational | 'y' | 'z'nat | 'exp' '(' ('+'|'-')? int? '*'? 'y' ')' | '(' expr ')'
//! rational := int ('/' posint)?
//! ```

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::exec::Exec;
use crate::exprs::{Coordinate, Expr, Point};
use crate::geometry::{
    build_metric, builtin_f, check_closed_form, curvature_derivatives, evaluate_tensor, FSelector,
    MetricField,
};
use crate::invariants::{alpha, classify, verify_alpha_as_curvature, PsiProfile};
use crate::models::{normalize_to_standard, standard_model, tensor_components, ModelJet};
use crate::scalar::{float_json, format_rational, parse_rational, scalar_json, Rational, Scalar};
use crate::stabilizer::{
    construct_orbit_map, is_closed_under_bracket, manifold_isometry_dims, okp_dim, okp_formula,
    okp_orbit_rank, random_xi, stabilizer_dim, stated_orbit_condition, true_orbit_condition,
    OrbitVariant,
};

/// Largest accepted exponent after `^`.
pub const MAX_EXPONENT: u32 = 64;
/// Largest accepted parenthesis nesting.
pub const MAX_DEPTH: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    Semantic,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{kind_name} error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub kind: ErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
    kind_name: &'static str,
}

impl ParseError {
    fn new(kind: ErrorKind, (line, column): (usize, usize), message: impl Into<String>) -> Self {
        let kind_name = match kind {
            ErrorKind::Syntax => "syntax",
            ErrorKind::Semantic => "semantic",
        };
        ParseError {
            kind,
            line,
            column,
            message: message.into(),
            kind_name,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "'{n}'"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Sym(c) => write!(f, "'{c}'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, (usize, usize))>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut line, mut col) = (1, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push((Tok::Int(s.parse().unwrap()), pos));
        } else if c.is_ascii_alphabetic() {
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else if "+-*/^()".contains(c) {
            i += 1;
            out.push((Tok::Sym(c), pos));
        } else {
            return Err(ParseError::new(
                ErrorKind::Syntax,
                pos,
                format!("unexpected character {c:?}"),
            ));
        }
        col += i - start;
    }
    out.push((Tok::End, (line, col)));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, (usize, usize))>,
    pos: usize,
    depth: usize,
    max_z: Option<usize>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn at(&self) -> (usize, usize) {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::new(ErrorKind::Syntax, self.at(), msg))
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected '{c}', found {}", self.peek()))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut negate = false;
        if let Tok::Sym(c @ ('+' | '-')) = *self.peek() {
            negate = c == '-';
            self.bump();
        }
        let first = self.term()?;
        let mut acc = if negate { -first } else { first };
        while let Tok::Sym(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let t = self.term()?;
            acc = if c == '+' { &acc + &t } else { &acc - &t };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        while *self.peek() == Tok::Sym('*') {
            self.bump();
            let f = self.factor()?;
            acc = &acc * &f;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if *self.peek() != Tok::Sym('^') {
            return Ok(base);
        }
        self.bump();
        let at = self.at();
        match self.bump() {
            Tok::Int(n) => match n.to_u32().filter(|&e| e <= MAX_EXPONENT) {
                Some(e) => Ok(base.pow(e)),
                None => Err(ParseError::new(
                    ErrorKind::Semantic,
                    at,
                    format!("exponent {n} exceeds {MAX_EXPONENT}"),
                )),
            },
            t => Err(ParseError::new(
                ErrorKind::Syntax,
                at,
                format!("expected exponent, found {t}"),
            )),
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let at = self.at();
        match self.bump() {
            Tok::Int(n) => {
                if *self.peek() != Tok::Sym('/') {
                    return Ok(Expr::constant(Rational::from_integer(n)));
                }
                self.bump();
                let dat = self.at();
                match self.bump() {
                    Tok::Int(d) if d.is_zero() => Err(ParseError::new(
                        ErrorKind::Semantic,
                        dat,
                        "zero denominator",
                    )),
                    Tok::Int(d) => Ok(Expr::constant(Rational::new(n, d))),
                    t => Err(ParseError::new(
                        ErrorKind::Syntax,
                        dat,
                        format!("expected denominator, found {t}"),
                    )),
                }
            }
            Tok::Ident(name) if name == "exp" => self.exp_argument(),
            Tok::Ident(name) => match Coordinate::parse_name(&name) {
                Some(Coordinate::Y) => Ok(Expr::var(Coordinate::Y)),
                Some(Coordinate::Z(i)) => {
                    if self.max_z.is_some_and(|p| i as usize > p) {
                        return Err(ParseError::new(
                            ErrorKind::Semantic,
                            at,
                            format!("{name} exceeds the declared p={}", self.max_z.unwrap()),
                        ));
                    }
                    Ok(Expr::var(Coordinate::Z(i)))
                }
                _ => Err(ParseError::new(
                    ErrorKind::Syntax,
                    at,
                    format!("unknown identifier '{name}'"),
                )),
            },
            Tok::Sym('(') => {
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return Err(ParseError::new(ErrorKind::Syntax, at, "nesting too deep"));
                }
                let e = self.expr()?;
                self.expect(')')?;
                self.depth -= 1;
                Ok(e)
            }
            t => Err(ParseError::new(
                ErrorKind::Syntax,
                at,
                format!("expected a number, variable, exp or '(', found {t}"),
            )),
        }
    }

    /// After `exp`: `( [sign] [int] ['*'] y )`.
    fn exp_argument(&mut self) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let start = self.at();
        let mut sign = 1i64;
        if let Tok::Sym(c @ ('+' | '-')) = *self.peek() {
            sign = if c == '-' { -1 } else { 1 };
            self.bump();
        }
        let mut m = BigInt::one();
        if let Tok::Int(n) = self.peek().clone() {
            self.bump();
            m = n;
            if *self.peek() == Tok::Sym('*') {
                self.bump();
            }
        }
        let semantic = || {
            ParseError::new(
                ErrorKind::Semantic,
                start,
                "exp argument must be an integer multiple of y",
            )
        };
        match self.peek().clone() {
            Tok::Ident(v) if v == "y" => {
                self.bump();
            }
            _ => return Err(semantic()),
        }
        if *self.peek() != Tok::Sym(')') {
            return Err(semantic());
        }
        self.bump();
        let m = (m * sign)
            .to_i64()
            .filter(|m| m.abs() <= 1 << 20)
            .ok_or_else(semantic)?;
        Ok(Expr::exp_y(m))
    }
}

fn parse_with(text: &str, max_z: Option<usize>) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        depth: 0,
        max_z,
    };
    if *p.peek() == Tok::End {
        return p.syntax("empty expression");
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.syntax(format!("unexpected {}", p.peek()));
    }
    Ok(e)
}

/// Parses an expression in y and z_1, z_2, ….
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    parse_with(text, None)
}

/// As [`parse_expression`], rejecting z_i with i > p.
pub fn parse_expression_for(text: &str, p: usize) -> Result<Expr, ParseError> {
    parse_with(text, Some(p))
}

/// Random expression in the grammar class, for round-trip fuzzing.
pub fn sample_expression<R: Rng>(rng: &mut R, p: usize) -> Expr {
    let nterms = rng.gen_range(0..=4);
    let mut e = Expr::zero();
    for _ in 0..nterms {
        let c = Rational::new(
            rng.gen_range(-9i64..=9).into(),
            rng.gen_range(1i64..=6).into(),
        );
        let mut t = Expr::constant(c);
        if rng.gen_bool(0.7) {
            t = &t * &Expr::var(Coordinate::Y).pow(rng.gen_range(1..=4));
        }
        for i in 1..=p as u16 {
            if rng.gen_bool(0.3) {
                t = &t * &Expr::var(Coordinate::Z(i)).pow(rng.gen_range(1..=3));
            }
        }
        if rng.gen_bool(0.4) {
            t = &t * &Expr::exp_y(rng.gen_range(-3i64..=3));
        }
        e = &e + &t;
    }
    e
}

/// Which family of metrics a scenario studies.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// M_{6+4p,k}.
    Mk(usize),
    /// 𝒩_{6+4p,ψ}, with the source text of ψ.
    Npsi(String),
    /// g_{6+4p,F} for an arbitrary F.
    F(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Curvature {
        order: usize,
        check_closed_form: bool,
    },
    Model {
        k: Option<usize>,
    },
    StabDim {
        k: Option<usize>,
        affine: bool,
    },
    VerifyIsometryDims,
    Alpha {
        nu: usize,
    },
    ClassifyPsi,
    OrbitMap {
        k: Option<usize>,
        variant: OrbitVariant,
        xi: Option<Vec<Scalar>>,
        seed: u64,
    },
    Okp {
        k: usize,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Curvature { .. } => "curvature",
            Task::Model { .. } => "model",
            Task::StabDim { .. } => "stabdim",
            Task::VerifyIsometryDims => "verify-thm15",
            Task::Alpha { .. } => "alpha",
            Task::ClassifyPsi => "classify-psi",
            Task::OrbitMap { .. } => "orbit-map",
            Task::Okp { .. } => "okp",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub p: usize,
    pub family: Family,
    pub point: Point,
    /// Sorted by task number.
    pub tasks: Vec<(u32, Task)>,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing mandatory key '{0}'")]
    Missing(&'static str),
    #[error("{0}")]
    Range(String),
    #[error("in {key}: {source}")]
    Expression { key: String, source: ParseError },
}

fn line_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Line {
        line,
        message: message.into(),
    }
}

/// Parses `name=value,name=value` into a dense vector on the affine space
/// (coordinates x, y, z_i, yt, zt_i).
pub fn parse_vector(text: &str, p: usize) -> Result<Vec<Scalar>, String> {
    let h = 3 + 2 * p;
    let mut v = vec![Scalar::zero(); h];
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .or_else(|| part.split_once(':'))
            .ok_or(format!("expected name=value, got '{part}'"))?;
        let c = Coordinate::parse_name(name.trim())
            .filter(|c| c.is_valid(p))
            .ok_or(format!("unknown coordinate '{name}'"))?;
        let i = c.index(p);
        if i >= h {
            return Err(format!("{name} is not in the affine span"));
        }
        v[i] =
            Scalar::Exact(parse_rational(value.trim()).ok_or(format!("bad rational '{value}'"))?);
    }
    Ok(v)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parses `name key=value ...`.
pub fn parse_task(text: &str, p: usize) -> Result<Task, String> {
    let mut words = text.split_whitespace();
    let name = words.next().ok_or("empty task")?;
    let mut params: BTreeMap<&str, &str> = BTreeMap::new();
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or(format!("expected key=value, got '{w}'"))?;
        params.insert(k, v);
    }
    let mut take = |k: &str| params.remove(k);
    let num = |v: Option<&str>, k: &str| -> Result<Option<usize>, String> {
        v.map(|s| {
            s.parse::<usize>()
                .map_err(|_| format!("{k} must be a non-negative integer"))
        })
        .transpose()
    };
    let task = match name {
        "curvature" => Task::Curvature {
            order: num(take("order"), "order")?.unwrap_or(0),
            check_closed_form: take("check_closed_form")
                .map(|s| parse_bool(s).ok_or("check_closed_form must be true/false"))
                .transpose()?
                .unwrap_or(false),
        },
        "model" => Task::Model {
            k: num(take("k"), "k")?,
        },
        "stabdim" => Task::StabDim {
            k: num(take("k"), "k")?,
            affine: take("affine")
                .map(|s| parse_bool(s).ok_or("affine must be true/false"))
                .transpose()?
                .unwrap_or(false),
        },
        "verify-thm15" => Task::VerifyIsometryDims,
        "alpha" => Task::Alpha {
            nu: num(take("nu"), "nu")?.ok_or("alpha needs nu")?,
        },
        "classify-psi" => Task::ClassifyPsi,
        "orbit-map" => Task::OrbitMap {
            k: num(take("k"), "k")?,
            variant: match take("variant").unwrap_or("X") {
                "X" | "x" => OrbitVariant::X,
                "Y" | "y" => OrbitVariant::Y,
                v => return Err(format!("unknown variant '{v}'")),
            },
            xi: take("xi").map(|s| parse_vector(s, p)).transpose()?,
            seed: take("seed")
                .map(|s| s.parse().map_err(|_| "seed must be an integer"))
                .transpose()?
                .unwrap_or(0),
        },
        "okp" => Task::Okp {
            k: num(take("k"), "k")?.ok_or("okp needs k")?,
        },
        other => return Err(format!("unknown task '{other}'")),
    };
    if let Some(k) = params.keys().next() {
        return Err(format!("unknown parameter '{k}' for {name}"));
    }
    Ok(task)
}

/// Line-oriented `key=value` format. `[point]` and `[task]` section headers
/// prefix the keys that follow; `[scenario]` clears the prefix. `#` starts a
/// comment.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut prefix = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(section) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            prefix = match section.trim() {
                "scenario" => String::new(),
                "point" => "point.".into(),
                "task" | "tasks" => "task.".into(),
                s => return Err(line_err(line_no, format!("unknown section [{s}]"))),
            };
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| line_err(line_no, "expected key=value"))?;
        let key = format!("{prefix}{}", k.trim());
        let known = matches!(key.as_str(), "p" | "family" | "k" | "psi" | "F")
            || key.starts_with("point.")
            || key.starts_with("task.");
        if !known {
            return Err(line_err(line_no, format!("unknown key '{key}'")));
        }
        if values
            .insert(key.clone(), (line_no, v.trim().to_string()))
            .is_some()
        {
            return Err(line_err(line_no, format!("duplicate key '{key}'")));
        }
    }

    let (pl, ptext) = values.remove("p").ok_or(ScenarioError::Missing("p"))?;
    let p: usize = ptext
        .parse()
        .ok()
        .filter(|&p| p >= 1)
        .ok_or_else(|| line_err(pl, "p must be a positive integer"))?;
    let (fl, ftext) = values
        .remove("family")
        .ok_or(ScenarioError::Missing("family"))?;
    let mut take = |k: &str| values.remove(k);
    let family = match ftext.as_str() {
        "Mk" => {
            let (kl, ktext) = take("k").ok_or(ScenarioError::Missing("k"))?;
            let k: usize = ktext
                .parse()
                .map_err(|_| line_err(kl, "k must be a non-negative integer"))?;
            if k > p + 2 {
                return Err(ScenarioError::Range(format!(
                    "k={k} out of range: k ≤ p+2={}",
                    p + 2
                )));
            }
            Family::Mk(k)
        }
        "Npsi" => {
            let (_, psi) = take("psi").ok_or(ScenarioError::Missing("psi"))?;
            let e = parse_expression(&psi).map_err(|source| ScenarioError::Expression {
                key: "psi".into(),
                source,
            })?;
            PsiProfile::new(p, e).map_err(|e| ScenarioError::Range(e.to_string()))?;
            Family::Npsi(psi)
        }
        "F" => {
            let (_, f) = take("F").ok_or(ScenarioError::Missing("F"))?;
            parse_expression_for(&f, p).map_err(|source| ScenarioError::Expression {
                key: "F".into(),
                source,
            })?;
            Family::F(f)
        }
        other => {
            return Err(line_err(
                fl,
                format!("unknown family '{other}' (expected Mk, Npsi or F)"),
            ))
        }
    };
    for stray in ["k", "psi", "F"] {
        if let Some((l, _)) = values.remove(stray) {
            return Err(line_err(
                l,
                format!("key '{stray}' does not apply to this family"),
            ));
        }
    }

    let mut point = Point::origin();
    let mut tasks = Vec::new();
    for (key, (line, v)) in values {
        if let Some(name) = key.strip_prefix("point.") {
            let c = Coordinate::parse_name(name)
                .filter(|c| c.is_valid(p))
                .ok_or_else(|| line_err(line, format!("unknown coordinate '{name}' for p={p}")))?;
            point.set(
                c,
                parse_rational(&v).ok_or_else(|| line_err(line, format!("bad rational '{v}'")))?,
            );
        } else if let Some(n) = key.strip_prefix("task.") {
            let n: u32 = n
                .parse()
                .map_err(|_| line_err(line, format!("task index '{n}' is not a number")))?;
            tasks.push((n, parse_task(&v, p).map_err(|m| line_err(line, m))?));
        }
    }
    tasks.sort_by_key(|(n, _)| *n);
    Ok(ScenarioConfig {
        p,
        family,
        point,
        tasks,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub status: Status,
    /// Headline value.
    pub value: Value,
    pub values: BTreeMap<String, Value>,
    pub residuals: BTreeMap<String, Value>,
}

impl TaskResult {
    fn new(task: &str, status: Status, value: Value) -> Self {
        TaskResult {
            task: task.into(),
            status,
            value,
            values: BTreeMap::new(),
            residuals: BTreeMap::new(),
        }
    }

    fn error(task: &str, message: impl fmt::Display) -> Self {
        let mut r = TaskResult::new(task, Status::Error, Value::Null);
        r.values.insert("error".into(), json!(message.to_string()));
        r
    }

    fn with(mut self, k: &str, v: Value) -> Self {
        self.values.insert(k.into(), v);
        self
    }

    fn residual(mut self, k: &str, v: f64) -> Self {
        self.residuals.insert(k.into(), float_json(v));
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: Value,
    pub results: Vec<TaskResult>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.status == Status::Pass)
    }
}

/// Everything a task needs besides its own parameters.
#[derive(Clone, Debug)]
pub struct Context {
    pub p: usize,
    pub family: Family,
    pub point: Point,
    pub tolerance: f64,
    pub exec: Exec,
}

impl Context {
    pub fn from_config(cfg: &ScenarioConfig, exec: Exec) -> Self {
        Context {
            p: cfg.p,
            family: cfg.family.clone(),
            point: cfg.point.clone(),
            tolerance: crate::models::TOLERANCE,
            exec,
        }
    }

    /// Model order natural for the family: k for M_k, p+2 otherwise.
    pub fn default_k(&self) -> usize {
        match self.family {
            Family::Mk(k) => k,
            _ => self.p + 2,
        }
    }

    pub fn psi(&self) -> Result<PsiProfile, String> {
        match &self.family {
            Family::Npsi(text) => {
                let e = parse_expression(text).map_err(|e| e.to_string())?;
                PsiProfile::new(self.p, e).map_err(|e| e.to_string())
            }
            _ => Err("task needs family Npsi".into()),
        }
    }

    pub fn f(&self) -> Result<Expr, String> {
        let sel = match &self.family {
            Family::Mk(k) => FSelector::for_k(self.p, *k),
            Family::Npsi(_) => FSelector::Psi(self.psi()?.psi),
            Family::F(text) => {
                return parse_expression_for(text, self.p).map_err(|e| e.to_string())
            }
        };
        builtin_f(self.p, &sel).map_err(|e| e.to_string())
    }

    pub fn metric(&self) -> Result<MetricField, String> {
        build_metric(self.p, self.f()?).map_err(|e| e.to_string())
    }

    pub fn scenario_json(&self) -> Value {
        let mut s = serde_json::Map::new();
        s.insert("p".into(), json!(self.p));
        match &self.family {
            Family::Mk(k) => {
                s.insert("family".into(), json!("Mk"));
                s.insert("k".into(), json!(k));
            }
            Family::Npsi(t) => {
                s.insert("family".into(), json!("Npsi"));
                s.insert("psi".into(), json!(t));
            }
            Family::F(t) => {
                s.insert("family".into(), json!("F"));
                s.insert("F".into(), json!(t));
            }
        }
        s.insert("point".into(), point_json(&self.point));
        Value::Object(s)
    }
}

pub fn point_json(pt: &Point) -> Value {
    Value::Object(
        pt.entries()
            .map(|(c, v)| (c.name(), json!(format_rational(v))))
            .collect(),
    )
}

fn components_json(t: &crate::tensor::SparseTensor<Scalar>, p: usize) -> Value {
    Value::Object(
        tensor_components(t, p)
            .into_iter()
            .map(|(k, v)| (k, scalar_json(&v)))
            .collect(),
    )
}

fn status_of(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn check_k(ctx: &Context, k: usize) -> Result<(), String> {
    if k > ctx.p + 2 {
        Err(format!("k={k} out of range: k ≤ p+2={}", ctx.p + 2))
    } else {
        Ok(())
    }
}

/// Runs one task. Never panics on bad input; problems become `error` results.
pub fn execute(task: &Task, ctx: &Context) -> TaskResult {
    match run_task(task, ctx) {
        Ok(r) => r,
        Err(e) => TaskResult::error(task.name(), e),
    }
}

fn run_task(task: &Task, ctx: &Context) -> Result<TaskResult, String> {
    let p = ctx.p;
    let name = task.name();
    Ok(match task {
        Task::Curvature {
            order,
            check_closed_form: check,
        } => {
            let g = ctx.metric()?;
            let tensors = curvature_derivatives(&g, *order);
            let t = &tensors[*order];
            let at = evaluate_tensor(t, &ctx.point);
            let mut r = TaskResult::new(name, Status::Pass, json!(at.len()))
                .with("order", json!(order))
                .with("symbolic_components", json!(t.len()))
                .with("components", components_json(&at, p));
            if *check {
                let report = check_closed_form(&g, *order);
                let rows: Vec<Value> = report
                    .rows
                    .iter()
                    .map(|row| {
                        let mut o = json!({"k": row.k, "pass": row.pass, "components": row.components});
                        if let Some((i, got, want)) = &row.first_difference {
                            o["first_difference"] = json!({"index": i, "computed": got.to_string(), "expected": want.to_string()});
                        }
                        o
                    })
                    .collect();
                r = r.with("closed_form", Value::Array(rows));
                r.status = status_of(report.all_pass());
            }
            r
        }
        Task::Model { k } => {
            let k = k.unwrap_or_else(|| ctx.default_k());
            check_k(ctx, k)?;
            let g = ctx.metric()?;
            let m = ModelJet::new(g, k).extract(&ctx.point);
            let r =
                TaskResult::new(name, Status::Pass, json!(k)).with("exact", json!(m.is_exact()));
            match normalize_to_standard(&m, k) {
                Ok(n) => {
                    let ok = n.residual.exact && n.residual.max_abs == 0.0
                        || !n.residual.exact && n.residual.max_abs < ctx.tolerance;
                    let mut r = r
                        .with("normalized", json!(true))
                        .with("alpha", scalar_json(&n.alpha))
                        .with("epsilon0", scalar_json(&n.epsilon0))
                        .with("map", n.map.to_json())
                        .residual("isomorphism", n.residual.max_abs);
                    r.status = status_of(ok);
                    r
                }
                Err(e) => {
                    let mut r = r
                        .with("normalized", json!(false))
                        .with("reason", json!(e.to_string()));
                    r.status = Status::Fail;
                    r
                }
            }
        }
        Task::StabDim { k, affine } => {
            let k = k.unwrap_or_else(|| ctx.default_k());
            check_k(ctx, k)?;
            let m = standard_model(p, k).map_err(|e| e.to_string())?;
            let res = if *affine {
                stabilizer_dim(&m.to_affine(), ctx.exec)
            } else {
                stabilizer_dim(&m, ctx.exec)
            }
            .map_err(|e| e.to_string())?;
            let closed = is_closed_under_bracket(&res, ctx.exec);
            TaskResult::new(name, status_of(closed), json!(res.dim))
                .with("p", json!(p))
                .with("k", json!(k))
                .with("affine", json!(affine))
                .with("closed_under_bracket", json!(closed))
        }
        Task::VerifyIsometryDims => {
            let table = manifold_isometry_dims(p, ctx.exec).map_err(|e| e.to_string())?;
            TaskResult::new(name, status_of(table.all_pass()), table.to_json())
        }
        Task::Alpha { nu } => {
            let prof = ctx.psi()?;
            let a = alpha(&prof, *nu).map_err(|e| e.to_string())?;
            let check =
                verify_alpha_as_curvature(&prof, *nu, &ctx.point).map_err(|e| e.to_string())?;
            TaskResult::new(name, status_of(check.pass()), scalar_json(&check.expected))
                .with("nu", json!(nu))
                .with("numerator", json!(a.numerator.to_string()))
                .with("denominator", json!(a.denominator.to_string()))
                .with("curvature", scalar_json(&check.observed))
                .residual("relative_error", check.relative_error)
        }
        Task::ClassifyPsi => {
            let prof = ctx.psi()?;
            let v = classify(&prof);
            TaskResult::new(name, Status::Pass, json!(v.label())).with("verdict", v.to_json())
        }
        Task::OrbitMap {
            k,
            variant,
            xi,
            seed,
        } => {
            let k = k.unwrap_or_else(|| ctx.default_k());
            check_k(ctx, k)?;
            let xi = match xi {
                Some(v) => v.clone(),
                None => {
                    use rand::SeedableRng;
                    random_xi(&mut rand_chacha::ChaCha8Rng::seed_from_u64(*seed), p)
                }
            };
            if xi.len() != 3 + 2 * p {
                return Err(format!(
                    "ξ has {} components, expected {}",
                    xi.len(),
                    3 + 2 * p
                ));
            }
            let r = TaskResult::new(name, Status::Pass, Value::Null)
                .with("variant", json!(format!("{variant:?}")))
                .with("xi", Value::Array(xi.iter().map(scalar_json).collect()))
                .with(
                    "stated_condition",
                    json!(stated_orbit_condition(p, k, &xi, *variant)),
                )
                .with(
                    "true_condition",
                    json!(true_orbit_condition(p, k, &xi, *variant)),
                );
            match construct_orbit_map(p, k, &xi, *variant) {
                Ok(m) => TaskResult {
                    value: json!(true),
                    ..r
                }
                .with("map", m.map.to_json())
                .residual("isometry", m.check.residual.max_abs),
                Err(e) => TaskResult {
                    value: json!(false),
                    status: Status::Fail,
                    ..r
                }
                .with("reason", json!(e.to_string())),
            }
        }
        Task::Okp { k } => {
            if *k > p {
                return Err(format!("okp needs k ≤ p={p}"));
            }
            let dim = okp_dim(p, *k).map_err(|e| e.to_string())?;
            let rank = okp_orbit_rank(p, *k).map_err(|e| e.to_string())?;
            let formula = okp_formula(p, *k);
            TaskResult::new(
                name,
                status_of(dim == formula && rank + k + 1 == 2 * p),
                json!(dim),
            )
            .with("formula", json!(formula))
            .with("orbit_rank", json!(rank))
            .with("orbit_formula", json!(2 * p - k - 1))
        }
    })
}

/// Runs every task of a scenario; independent tasks run concurrently and the
/// report keeps task order.
pub fn run_scenario(cfg: &ScenarioConfig, exec: Exec) -> Report {
    run_in(cfg, &Context::from_config(cfg, exec))
}

/// As [`run_scenario`] with an explicit context (tolerance, executor).
pub fn run_in(cfg: &ScenarioConfig, ctx: &Context) -> Report {
    let results = ctx.exec.map(&cfg.tasks, |(_, t)| execute(t, ctx));
    Report {
        scenario: ctx.scenario_json(),
        results,
    }
}

/// Deterministic pretty JSON (keys sorted).
pub fn emit_report(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn parse_report(text: &str) -> Result<Report, serde_json::Error> {
    serde_json::from_str(text)
}

/// Exact or float rendering for human tables.
pub fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses `name=value` point bindings.
pub fn parse_point(bindings: &[String], p: usize) -> Result<Point, String> {
    let mut pt = Point::origin();
    for b in bindings {
        let (name, value) = b
            .split_once('=')
            .ok_or(format!("expected coord=value, got '{b}'"))?;
        let c = Coordinate::parse_name(name.trim())
            .filter(|c| c.is_valid(p))
            .ok_or(format!("unknown coordinate '{name}' for p={p}"))?;
        pt.set(
            c,
            parse_rational(value.trim()).ok_or(format!("bad rational '{value}'"))?,
        );
    }
    Ok(pt)
}
