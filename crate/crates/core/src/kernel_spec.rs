//! Textual kernel specifications.
//!
//! Two surface forms, both expanded into [`KernelSpec`] before anything is
//! built:
//!
//! * JSON: `{"kind": "A", "k": 3, "s": 2}`, `{"kind": "frame"}`,
//!   `{"kind": "Q", "k": 4, "l": 2}`, `{"kind": "constant", "k": 3, "c": 1}`,
//!   `{"kind": "S-trace", "blocks": [{"m": 0, "entries": [[..]]}, ..]}` (or
//!   `"blocks": "a2-decomposition"`, or `"random": {"count", "size", "seed"}`),
//!   and the combinators `{"sum": [..]}`, `{"product": [..]}`,
//!   `{"scale": c, "kernel": ..}`, `{"shift": c, "kernel": ..}`,
//!   `{"lift": {"kernel": .., "n": 4, "perms": [[3, 4], [4, 3]]}}`,
//!   `{"symmetrize": ..}`.
//! * Compact: `A2:k=3`, `V1:k=3,d=4`, `A:k=3,s=0.5`, `frame`, `Q:k=4,l=2`,
//!   `const:k=3,c=2`, `S-trace:count=3,size=3,seed=1`, `S-trace:a2`.
//!   A leading `-` negates.
//!
//! The dimension `d` may be left out and supplied when building.

use serde_json::{json, Map, Value};

use crate::energy::{closed_form_max, jensen_bound, squared_volume_at_sigma, ClosedForm};
use crate::error::{Error, Result};
use crate::gegenbauer::VolumeKind;
use crate::kernels::{
    add_constant, constant, kernel_a_pow, kernel_a_pow_singular, kernel_frame, kernel_v_pow, kernel_v_pow_singular,
    lift, product, scale, sum, symmetrize, MultiKernel,
};
use crate::linalg::SquareMatrix;
use crate::sampling::stream_rng;
use crate::scalar::{falling_factorial, Scalar};
use crate::sdp::{a2_decomposition_blocks, q_kernel, random_psd_blocks, trace_kernel, trace_kernel_unsymmetrized, PsdCoefficientMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceBlocks {
    Explicit(Vec<(usize, Vec<Vec<f64>>)>),
    Random { count: usize, size: usize, seed: u64 },
    A2Decomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `A^s` or `V^s`. Non-positive `s`, or `distinct`, evaluates energies
    /// over distinct tuples only.
    Volume { kind: VolumeKind, k: usize, s: f64, d: Option<usize>, distinct: bool },
    Frame { d: Option<usize> },
    Constant { k: usize, c: f64, d: Option<usize> },
    Q { k: usize, l: usize, d: Option<usize> },
    Trace { symmetrized: bool, blocks: TraceBlocks, d: Option<usize> },
    Sum(Vec<KernelSpec>),
    Product(Vec<KernelSpec>),
    Scale { c: f64, kernel: Box<KernelSpec> },
    Shift { c: f64, kernel: Box<KernelSpec> },
    Lift { kernel: Box<KernelSpec>, n: usize, perms: Vec<Vec<usize>> },
    Symmetrize(Box<KernelSpec>),
}

fn field_err(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Parse(format!("kernel field `{field}`: {reason}"))
}

fn get_usize(obj: &Map<String, Value>, key: &str) -> Result<Option<usize>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_u64().map(|n| Some(n as usize)).ok_or_else(|| field_err(key, "expected a nonnegative integer")),
    }
}

fn need_usize(obj: &Map<String, Value>, key: &str) -> Result<usize> {
    get_usize(obj, key)?.ok_or_else(|| field_err(key, "missing"))
}

fn get_f64(obj: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| field_err(key, "expected a number")),
    }
}

fn need_f64(obj: &Map<String, Value>, key: &str) -> Result<f64> {
    get_f64(obj, key)?.ok_or_else(|| field_err(key, "missing"))
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(field_err(k, "unknown field")),
        None => Ok(()),
    }
}

fn parse_f64(field: &str, text: &str) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|_| field_err(field, format!("`{text}` is not a number")))
}

fn parse_usize(field: &str, text: &str) -> Result<usize> {
    text.trim().parse::<usize>().map_err(|_| field_err(field, format!("`{text}` is not a nonnegative integer")))
}

fn matrix_rows(field: &str, v: &Value) -> Result<Vec<Vec<f64>>> {
    let rows = v.as_array().ok_or_else(|| field_err(field, "expected an array of rows"))?;
    rows.iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| field_err(field, "expected an array of rows"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| field_err(field, "entries must be numbers")))
                .collect()
        })
        .collect()
}

impl KernelSpec {
    /// JSON if the text starts with `{`, the compact form otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.starts_with('{') {
            let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("kernel JSON: {e}")))?;
            Self::from_json(&v)
        } else {
            Self::parse_compact(text)
        }
    }

    pub fn parse_compact(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix('-') {
            return Ok(Self::Scale { c: -1.0, kernel: Box::new(Self::parse_compact(rest)?) });
        }
        let (name, params) = match text.split_once(':') {
            Some((n, p)) => (n.trim(), p.trim()),
            None => (text, ""),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut flags: Vec<String> = Vec::new();
        for item in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None => flags.push(item.to_string()),
            }
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let check = |allowed: &[&str]| -> Result<()> {
            if let Some((k, _)) = pairs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
                return Err(field_err(k, format!("not accepted by `{name}`")));
            }
            Ok(())
        };
        let d = get("d").map(|v| parse_usize("d", v)).transpose()?;
        let need = |key: &str| get(key).ok_or_else(|| field_err(key, format!("`{name}` needs `{key}=`")));
        let spec = match name {
            "frame" => {
                check(&["d"])?;
                Self::Frame { d }
            }
            "Q" => {
                check(&["k", "l", "d"])?;
                Self::Q { k: parse_usize("k", need("k")?)?, l: parse_usize("l", need("l")?)?, d }
            }
            "const" | "constant" => {
                check(&["k", "c", "d"])?;
                Self::Constant { k: parse_usize("k", need("k")?)?, c: parse_f64("c", need("c")?)?, d }
            }
            "S-trace" | "Y-trace" => {
                let blocks = if flags.iter().any(|f| f == "a2") {
                    check(&["d"])?;
                    TraceBlocks::A2Decomposition
                } else {
                    check(&["count", "size", "seed", "d"])?;
                    TraceBlocks::Random {
                        count: parse_usize("count", need("count")?)?,
                        size: parse_usize("size", need("size")?)?,
                        seed: get("seed").map(|v| parse_usize("seed", v)).transpose()?.unwrap_or(0) as u64,
                    }
                };
                Self::Trace { symmetrized: name == "S-trace", blocks, d }
            }
            _ => {
                let (kind, power) = match name.chars().next() {
                    Some('A') => (VolumeKind::A, &name[1..]),
                    Some('V') => (VolumeKind::V, &name[1..]),
                    _ => return Err(field_err("kind", format!("unknown kernel `{name}`"))),
                };
                check(&["k", "s", "d"])?;
                let s = match (power.is_empty(), get("s")) {
                    (false, None) => parse_f64("s", power)?,
                    (true, Some(v)) => parse_f64("s", v)?,
                    (false, Some(_)) => return Err(field_err("s", "power given twice")),
                    (true, None) => return Err(field_err("s", format!("`{name}` needs a power, e.g. {name}2"))),
                };
                Self::Volume { kind, k: parse_usize("k", need("k")?)?, s, d, distinct: flags.iter().any(|f| f == "distinct") }
            }
        };
        if let Some(f) = flags.iter().find(|f| !matches!(f.as_str(), "a2" | "distinct")) {
            return Err(field_err(f, "unknown flag"));
        }
        Ok(spec)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| field_err("kernel", "expected an object"))?;
        let list = |key: &str, v: &Value| -> Result<Vec<Self>> {
            let items = v.as_array().ok_or_else(|| field_err(key, "expected an array of kernels"))?;
            if items.is_empty() {
                return Err(field_err(key, "needs at least one kernel"));
            }
            items.iter().map(Self::from_json).collect()
        };
        let inner = |key: &str| -> Result<Box<Self>> {
            Ok(Box::new(Self::from_json(obj.get(key).ok_or_else(|| field_err(key, "missing"))?)?))
        };
        if let Some(v) = obj.get("sum") {
            check_keys(obj, &["sum"])?;
            return Ok(Self::Sum(list("sum", v)?));
        }
        if let Some(v) = obj.get("product") {
            check_keys(obj, &["product"])?;
            return Ok(Self::Product(list("product", v)?));
        }
        if obj.contains_key("scale") {
            check_keys(obj, &["scale", "kernel"])?;
            return Ok(Self::Scale { c: need_f64(obj, "scale")?, kernel: inner("kernel")? });
        }
        if obj.contains_key("shift") {
            check_keys(obj, &["shift", "kernel"])?;
            return Ok(Self::Shift { c: need_f64(obj, "shift")?, kernel: inner("kernel")? });
        }
        if let Some(v) = obj.get("symmetrize") {
            check_keys(obj, &["symmetrize"])?;
            return Ok(Self::Symmetrize(Box::new(Self::from_json(v)?)));
        }
        if let Some(v) = obj.get("lift") {
            check_keys(obj, &["lift"])?;
            let l = v.as_object().ok_or_else(|| field_err("lift", "expected an object"))?;
            check_keys(l, &["kernel", "n", "perms"])?;
            let base = Self::from_json(l.get("kernel").ok_or_else(|| field_err("lift.kernel", "missing"))?)?;
            let perms = l
                .get("perms")
                .ok_or_else(|| field_err("lift.perms", "missing"))?
                .as_array()
                .ok_or_else(|| field_err("lift.perms", "expected an array of permutations"))?
                .iter()
                .map(|p| {
                    p.as_array()
                        .ok_or_else(|| field_err("lift.perms", "expected an array of permutations"))?
                        .iter()
                        .map(|i| i.as_u64().map(|i| i as usize).ok_or_else(|| field_err("lift.perms", "indices must be integers")))
                        .collect()
                })
                .collect::<Result<Vec<Vec<usize>>>>()?;
            return Ok(Self::Lift { kernel: Box::new(base), n: need_usize(l, "n")?, perms });
        }
        let kind = obj.get("kind").and_then(Value::as_str).ok_or_else(|| field_err("kind", "missing or not a string"))?;
        let d = get_usize(obj, "d")?;
        match kind {
            "A" | "V" => {
                check_keys(obj, &["kind", "k", "s", "d", "distinct"])?;
                let distinct = match obj.get("distinct") {
                    None => false,
                    Some(v) => v.as_bool().ok_or_else(|| field_err("distinct", "expected a boolean"))?,
                };
                Ok(Self::Volume {
                    kind: if kind == "A" { VolumeKind::A } else { VolumeKind::V },
                    k: need_usize(obj, "k")?,
                    s: need_f64(obj, "s")?,
                    d,
                    distinct,
                })
            }
            "frame" => {
                check_keys(obj, &["kind", "d"])?;
                Ok(Self::Frame { d })
            }
            "constant" => {
                check_keys(obj, &["kind", "k", "c", "d"])?;
                Ok(Self::Constant { k: need_usize(obj, "k")?, c: need_f64(obj, "c")?, d })
            }
            "Q" => {
                check_keys(obj, &["kind", "k", "l", "d"])?;
                Ok(Self::Q { k: need_usize(obj, "k")?, l: need_usize(obj, "l")?, d })
            }
            "S-trace" | "Y-trace" => {
                check_keys(obj, &["kind", "blocks", "random", "d"])?;
                let blocks = match (obj.get("blocks"), obj.get("random")) {
                    (Some(Value::String(s)), None) if s == "a2-decomposition" => TraceBlocks::A2Decomposition,
                    (Some(Value::Array(items)), None) => TraceBlocks::Explicit(
                        items
                            .iter()
                            .map(|b| {
                                let b = b.as_object().ok_or_else(|| field_err("blocks", "expected objects"))?;
                                check_keys(b, &["m", "entries"])?;
                                let rows = matrix_rows("blocks.entries", b.get("entries").unwrap_or(&Value::Null))?;
                                Ok((need_usize(b, "m")?, rows))
                            })
                            .collect::<Result<_>>()?,
                    ),
                    (None, Some(Value::Object(r))) => {
                        check_keys(r, &["count", "size", "seed"])?;
                        TraceBlocks::Random {
                            count: need_usize(r, "count")?,
                            size: need_usize(r, "size")?,
                            seed: get_usize(r, "seed")?.unwrap_or(0) as u64,
                        }
                    }
                    _ => return Err(field_err("blocks", "give either `blocks` (array or \"a2-decomposition\") or `random`")),
                };
                Ok(Self::Trace { symmetrized: kind == "S-trace", blocks, d })
            }
            other => Err(field_err("kind", format!("unknown kind `{other}`"))),
        }
    }

    /// Canonical JSON form; `from_json(to_json())` reproduces the spec.
    pub fn to_json(&self) -> Value {
        let with_d = |mut v: Value, d: &Option<usize>| {
            if let Some(d) = d {
                v["d"] = json!(d);
            }
            v
        };
        match self {
            Self::Volume { kind, k, s, d, distinct } => {
                let name = match kind {
                    VolumeKind::A => "A",
                    VolumeKind::V => "V",
                };
                let mut v = json!({"kind": name, "k": k, "s": s});
                if *distinct {
                    v["distinct"] = json!(true);
                }
                with_d(v, d)
            }
            Self::Frame { d } => with_d(json!({"kind": "frame"}), d),
            Self::Constant { k, c, d } => with_d(json!({"kind": "constant", "k": k, "c": c}), d),
            Self::Q { k, l, d } => with_d(json!({"kind": "Q", "k": k, "l": l}), d),
            Self::Trace { symmetrized, blocks, d } => {
                let kind = if *symmetrized { "S-trace" } else { "Y-trace" };
                let v = match blocks {
                    TraceBlocks::A2Decomposition => json!({"kind": kind, "blocks": "a2-decomposition"}),
                    TraceBlocks::Explicit(b) => json!({
                        "kind": kind,
                        "blocks": b.iter().map(|(m, e)| json!({"m": m, "entries": e})).collect::<Vec<_>>(),
                    }),
                    TraceBlocks::Random { count, size, seed } => {
                        json!({"kind": kind, "random": {"count": count, "size": size, "seed": seed}})
                    }
                };
                with_d(v, d)
            }
            Self::Sum(items) => json!({"sum": items.iter().map(Self::to_json).collect::<Vec<_>>()}),
            Self::Product(items) => json!({"product": items.iter().map(Self::to_json).collect::<Vec<_>>()}),
            Self::Scale { c, kernel } => json!({"scale": c, "kernel": kernel.to_json()}),
            Self::Shift { c, kernel } => json!({"shift": c, "kernel": kernel.to_json()}),
            Self::Lift { kernel, n, perms } => json!({"lift": {"kernel": kernel.to_json(), "n": n, "perms": perms}}),
            Self::Symmetrize(kernel) => json!({"symmetrize": kernel.to_json()}),
        }
    }

    /// Builds the kernel; `d` fills in any dimension the spec leaves out.
    pub fn build<T: Scalar>(&self, d: Option<usize>) -> Result<MultiKernel<T>> {
        let dim = |own: &Option<usize>| {
            own.or(d).ok_or_else(|| field_err("d", "dimension not given in the kernel or on the command line"))
        };
        match self {
            Self::Volume { kind, k, s, d: own, distinct } => {
                let d = dim(own)?;
                let singular = *s <= 0.0;
                let s = T::c(*s);
                let kernel = match (kind, singular) {
                    (VolumeKind::A, false) => kernel_a_pow(*k, d, s)?,
                    (VolumeKind::A, true) => kernel_a_pow_singular(*k, d, s)?,
                    (VolumeKind::V, false) => kernel_v_pow(*k, d, s)?,
                    (VolumeKind::V, true) => kernel_v_pow_singular(*k, d, s)?,
                };
                if *distinct {
                    let mut flags = kernel.flags();
                    flags.singular = true;
                    Ok(kernel.set_flags(flags))
                } else {
                    Ok(kernel)
                }
            }
            Self::Frame { d: own } => kernel_frame(dim(own)?),
            Self::Constant { k, c, d: own } => constant(*k, dim(own)?, T::c(*c)),
            Self::Q { k, l, d: own } => q_kernel(*k, *l, dim(own)?),
            Self::Trace { symmetrized, blocks, d: own } => {
                let d = dim(own)?;
                let blocks: Vec<PsdCoefficientMatrix<T>> = match blocks {
                    TraceBlocks::A2Decomposition => a2_decomposition_blocks(d)?,
                    TraceBlocks::Random { count, size, seed } => {
                        random_psd_blocks(*count, *size, &mut stream_rng(*seed, 0))?
                    }
                    TraceBlocks::Explicit(b) => b
                        .iter()
                        .map(|(m, rows)| {
                            let rows: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(|x| T::c(*x)).collect()).collect();
                            let mat = SquareMatrix::from_rows(&rows)
                                .ok_or_else(|| field_err("blocks.entries", format!("block m={m} is not square")))?;
                            PsdCoefficientMatrix::new(*m, mat)
                        })
                        .collect::<Result<_>>()?,
                };
                if *symmetrized {
                    trace_kernel(&blocks, d)
                } else {
                    trace_kernel_unsymmetrized(&blocks, d)
                }
            }
            Self::Sum(items) => sum(&items.iter().map(|s| s.build(d)).collect::<Result<Vec<_>>>()?),
            Self::Product(items) => product(&items.iter().map(|s| s.build(d)).collect::<Result<Vec<_>>>()?),
            Self::Scale { c, kernel } => Ok(scale(&kernel.build(d)?, T::c(*c))),
            Self::Shift { c, kernel } => Ok(add_constant(&kernel.build(d)?, T::c(*c))),
            Self::Lift { kernel, n, perms } => lift(&kernel.build(d)?, *n, perms),
            Self::Symmetrize(kernel) => Ok(symmetrize(&kernel.build(d)?)),
        }
    }

    /// `I_K(σ)` when it has a closed form: `A²`, `V²` and the frame potential.
    pub fn sigma_closed_form(&self, d: usize) -> Option<f64> {
        match self {
            Self::Volume { kind, k, s, d: own, distinct: false } if *s == 2.0 && own.is_none_or(|o| o == d) => {
                let cf = match kind {
                    VolumeKind::A => ClosedForm::A2,
                    VolumeKind::V => ClosedForm::V2,
                };
                closed_form_max(cf, d, *k).ok()
            }
            Self::Frame { d: own } if own.is_none_or(|o| o == d) => closed_form_max(ClosedForm::FrameMin, d, 2).ok(),
            _ => None,
        }
    }

    /// Known maximum of the discrete energy over `n` points on `S^{d-1}`:
    /// the regular simplex (`n = d + 1`) for `A^s`, `V^s` with `0 < s <= 2`
    /// (Jensen bound, equal to the closed form at `s = 2`), and an orthonormal
    /// basis (`n = d`) for `V^s` with `s >= 2`.
    pub fn known_discrete_max(&self, n: usize, d: usize) -> Option<f64> {
        let Self::Volume { kind, k, s, d: own, distinct: false } = self else {
            return None;
        };
        if own.is_some_and(|o| o != d) || *s <= 0.0 {
            return None;
        }
        let (k, s) = (*k, *s);
        if matches!(kind, VolumeKind::V) && s >= 2.0 && n == d && k <= d {
            return Some(falling_factorial::<f64>(d, k) / (d as f64).powi(k as i32));
        }
        if s <= 2.0 && n == d + 1 {
            let b = squared_volume_at_sigma(*kind, d, k).ok()?;
            return jensen_bound(b, k, n, |x| x.powf(s / 2.0)).ok();
        }
        None
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}
