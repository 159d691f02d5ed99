//! Peer coefficient sets, the text file format and the auxiliary-variable transform.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Implicit,
    Rosenbrock,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Implicit => "implicit",
            Kind::Rosenbrock => "rosenbrock",
        })
    }
}

impl FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit" => Ok(Kind::Implicit),
            "rosenbrock" => Ok(Kind::Rosenbrock),
            o => Err(Error::InvalidCoefficients(format!("unknown kind `{o}`"))),
        }
    }
}

/// `X_{k,i} = Σ b_ij X_{k−1,j} + τ Σ a_ij F_{k−1,j} + τ Σ_{j≤i} g_ij F_{k,j}` with nodes `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeerCoefficients {
    pub kind: Kind,
    pub s: usize,
    /// Declared order; informational.
    pub order: usize,
    pub c: DVector<f64>,
    pub b: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

/// `G⁻¹`, `A·G⁻¹` and `B·G⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedCoefficients {
    pub g_inv: DMatrix<f64>,
    pub bold_a: DMatrix<f64>,
    pub bold_b: DMatrix<f64>,
}

pub const BUILTIN_NAMES: [&str; 3] = ["implicit-1", "implicit-2", "rosenbrock-1"];

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidCoefficients(msg.into())
}

impl PeerCoefficients {
    pub fn new(
        kind: Kind,
        order: usize,
        c: DVector<f64>,
        b: DMatrix<f64>,
        a: DMatrix<f64>,
        g: DMatrix<f64>,
    ) -> Result<Self> {
        let p = PeerCoefficients {
            kind,
            s: c.len(),
            order,
            c,
            b,
            a,
            g,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.s;
        if s == 0 {
            return Err(invalid("stage count must be positive"));
        }
        if self.c.len() != s {
            return Err(invalid(format!("c has {} entries, expected {s}", self.c.len())));
        }
        for (name, m) in [("b", &self.b), ("a", &self.a), ("g", &self.g)] {
            if m.shape() != (s, s) {
                return Err(invalid(format!(
                    "{name} is {}x{}, expected {s}x{s}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let all = self
            .c
            .iter()
            .chain(self.b.iter())
            .chain(self.a.iter())
            .chain(self.g.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coefficient"));
        }
        if self.c[s - 1] != 1.0 {
            return Err(invalid(format!("last node c_s = {} must equal 1", self.c[s - 1])));
        }
        for i in 0..s {
            for j in i + 1..s {
                if self.g[(i, j)] != 0.0 {
                    return Err(invalid(format!(
                        "g is not lower triangular: g[{}][{}] = {}",
                        i + 1,
                        j + 1,
                        self.g[(i, j)]
                    )));
                }
            }
            if self.g[(i, i)] == 0.0 {
                return Err(invalid(format!("g is singular: g[{0}][{0}] = 0", i + 1)));
            }
        }
        if self.kind == Kind::Rosenbrock && self.gamma().is_none() {
            return Err(invalid("rosenbrock sets need a constant diagonal of g"));
        }
        Ok(())
    }

    /// Common diagonal of `G`, if constant.
    pub fn gamma(&self) -> Option<f64> {
        let g0 = self.g[(0, 0)];
        (0..self.s).all(|i| self.g[(i, i)] == g0).then_some(g0)
    }

    pub fn is_one_step(&self) -> bool {
        self.s == 1
    }

    /// Built-in tabulated sets.
    pub fn builtin(name: &str) -> Result<Self> {
        let one = || DMatrix::from_element(1, 1, 1.0);
        match name {
            "implicit-1" => Self::new(
                Kind::Implicit,
                1,
                DVector::from_element(1, 1.0),
                one(),
                DMatrix::zeros(1, 1),
                one(),
            ),
            "rosenbrock-1" => Self::new(
                Kind::Rosenbrock,
                1,
                DVector::from_element(1, 1.0),
                one(),
                one(),
                one(),
            ),
            "implicit-2" => {
                let c = DVector::from_vec(vec![0.4831632475943920, 1.0]);
                let b = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        -0.3045407685048590,
                        1.3045407685048591,
                        -0.3045407685048590,
                        1.3045407685048591,
                    ],
                );
                let g = DMatrix::from_row_slice(
                    2,
                    2,
                    &[0.2584183762028040, 0.0, 0.4376001712448750, 0.2584183762028040],
                );
                let a = complete_a(&c, &b, &g, 2)?;
                Self::new(Kind::Implicit, 2, c, b, a, g)
            }
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parse the line-oriented text format.
    pub fn parse(ctx: &str, text: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            context: ctx.to_string(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, "peer-coefficients 1")) => {}
            Some((ln, l)) => return Err(perr(ln, format!("expected `peer-coefficients 1`, got `{l}`"))),
            None => return Err(perr(1, "empty file".into())),
        }
        let (hl, header) = lines.next().ok_or_else(|| perr(2, "missing kind line".into()))?;
        let (mut kind, mut s, mut order) = (None, None, None);
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| perr(hl, format!("expected key=value, got `{tok}`")))?;
            match k {
                "kind" => kind = Some(v.parse::<Kind>().map_err(|e| perr(hl, e.to_string()))?),
                "s" => s = Some(v.parse::<usize>().map_err(|_| perr(hl, format!("bad s `{v}`")))?),
                "order" => {
                    order = Some(v.parse::<usize>().map_err(|_| perr(hl, format!("bad order `{v}`")))?)
                }
                _ => return Err(perr(hl, format!("unknown key `{k}`"))),
            }
        }
        let kind = kind.ok_or_else(|| perr(hl, "missing kind".into()))?;
        let s = s.ok_or_else(|| perr(hl, "missing s".into()))?;
        let order = order.ok_or_else(|| perr(hl, "missing order".into()))?;
        if s == 0 {
            return Err(perr(hl, "s must be positive".into()));
        }

        let mut blocks: [(char, Option<(usize, Vec<f64>)>); 4] =
            [('c', None), ('b', None), ('a', None), ('g', None)];
        let mut cur: Option<usize> = None;
        for (ln, l) in lines {
            let mut rest = l;
            if let Some((label, tail)) = l.split_once(':') {
                let label = label.trim();
                let idx = blocks
                    .iter()
                    .position(|(c, _)| label.len() == 1 && label.starts_with(*c))
                    .ok_or_else(|| perr(ln, format!("unknown block `{label}`")))?;
                if blocks[idx].1.is_some() {
                    return Err(perr(ln, format!("duplicate block `{label}`")));
                }
                blocks[idx].1 = Some((ln, Vec::new()));
                cur = Some(idx);
                rest = tail;
            }
            let idx = cur.ok_or_else(|| perr(ln, "values before any block label".into()))?;
            let vals = &mut blocks[idx].1.as_mut().unwrap().1;
            for t in rest.split_whitespace() {
                vals.push(t.parse::<f64>().map_err(|_| perr(ln, format!("bad number `{t}`")))?);
            }
        }
        let take = |i: usize, want: usize, required: bool| -> Result<Option<Vec<f64>>> {
            match &blocks[i].1 {
                Some((ln, v)) if v.len() == want => Ok(Some(v.clone())),
                Some((ln, v)) => Err(perr(
                    *ln,
                    format!("block `{}` has {} values, expected {want}", blocks[i].0, v.len()),
                )),
                None if required => Err(perr(0, format!("missing block `{}`", blocks[i].0))),
                None => Ok(None),
            }
        };
        let c = DVector::from_vec(take(0, s, true)?.unwrap());
        let b = DMatrix::from_row_slice(s, s, &take(1, s * s, true)?.unwrap());
        let a = take(2, s * s, false)?
            .map(|v| DMatrix::from_row_slice(s, s, &v))
            .unwrap_or_else(|| DMatrix::zeros(s, s));
        let g = DMatrix::from_row_slice(s, s, &take(3, s * s, true)?.unwrap());
        Self::new(kind, order, c, b, a, g)
    }

    pub fn to_text(&self) -> String {
        let mut t = String::from("peer-coefficients 1\n");
        let _ = writeln!(t, "kind={} s={} order={}", self.kind, self.s, self.order);
        let _ = writeln!(t, "c:");
        let row: Vec<String> = self.c.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(t, "{}", row.join(" "));
        for (name, m) in [("b", &self.b), ("a", &self.a), ("g", &self.g)] {
            let _ = writeln!(t, "{name}:");
            for i in 0..self.s {
                let row: Vec<String> = (0..self.s).map(|j| format!("{:?}", m[(i, j)])).collect();
                let _ = writeln!(t, "{}", row.join(" "));
            }
        }
        t
    }

    pub fn transform(&self) -> Result<TransformedCoefficients> {
        let g_inv = lower_inverse(&self.g)?;
        Ok(TransformedCoefficients {
            bold_a: &self.a * &g_inv,
            bold_b: &self.b * &g_inv,
            g_inv,
        })
    }

    /// Residuals `c^l − B(c−1)^l − l·A(c−1)^{l−1} − l·G c^{l−1}` for `l = 0..=p`, one column per `l`.
    pub fn stage_order_defect(&self, p: usize) -> DMatrix<f64> {
        defects(&self.c, &self.b, &self.a, &self.g, p)
    }
}

fn powv(v: &DVector<f64>, l: usize) -> DVector<f64> {
    v.map(|x| x.powi(l as i32))
}

fn defects(c: &DVector<f64>, b: &DMatrix<f64>, a: &DMatrix<f64>, g: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let s = c.len();
    let cm1 = c.map(|x| x - 1.0);
    let mut out = DMatrix::zeros(s, p + 1);
    for l in 0..=p {
        let mut r = powv(c, l) - b * powv(&cm1, l);
        if l > 0 {
            let lf = l as f64;
            r -= a * powv(&cm1, l - 1) * lf + g * powv(c, l - 1) * lf;
        }
        out.set_column(l, &r);
    }
    out
}

/// The unique `A` meeting the stage-order conditions `l = 1..=p` for given `c`, `B`, `G` (requires `p = s`).
pub fn complete_a(c: &DVector<f64>, b: &DMatrix<f64>, g: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>> {
    let s = c.len();
    if p != s {
        return Err(invalid(format!("completion needs p = s, got p = {p}, s = {s}")));
    }
    let cm1 = c.map(|x| x - 1.0);
    // V[l−1][j] = l·(c_j − 1)^{l−1}
    let v = DMatrix::from_fn(p, s, |l, j| (l + 1) as f64 * cm1[j].powi(l as i32));
    let lu = v.lu();
    let mut a = DMatrix::zeros(s, s);
    for i in 0..s {
        let rhs = DVector::from_fn(p, |l, _| {
            let l = l + 1;
            let mut r = c[i].powi(l as i32);
            for j in 0..s {
                r -= b[(i, j)] * cm1[j].powi(l as i32) + l as f64 * g[(i, j)] * c[j].powi(l as i32 - 1);
            }
            r
        });
        let row = lu
            .solve(&rhs)
            .ok_or_else(|| invalid("order conditions are singular for these nodes"))?;
        a.set_row(i, &row.transpose());
    }
    Ok(a)
}

/// Inverse of a nonsingular lower-triangular matrix by forward substitution.
pub fn lower_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = g.nrows();
    let mut inv = DMatrix::zeros(s, s);
    for col in 0..s {
        for i in col..s {
            if g[(i, i)] == 0.0 {
                return Err(invalid("g is singular"));
            }
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                acc -= g[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = acc / g[(i, i)];
        }
    }
    Ok(inv)
}
