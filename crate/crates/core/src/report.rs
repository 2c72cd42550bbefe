//! The combined centeredness report and its JSON and table renderings.

use std::collections::BTreeMap;
use std::io;
use std::time::Instant;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::builtins::ShiftInstance;
use crate::centered::{
    check_condition, check_quasinormal_composition, check_weakly_centered, generation_criterion, ConditionVerdict,
    Status, Tag,
};
use crate::classify::{structural_type, ClassifyOptions, TypeVerdict};
use crate::discrete::DiscreteWco;
use crate::error::Result;
use crate::oracle::{brute_force_centered, materialize, OracleVerdict, DEFAULT_RANK_TOL, SPECTRAL_LIMIT};
use crate::transfer::radon_nikodym;
use crate::tree::TruncationWindow;

pub const SCHEMA: u32 = 1;

/// What a report is computed for: a wco, and the weighted shift it came from
/// when there is one.
pub struct Subject {
    pub name: String,
    pub wco: DiscreteWco,
    pub shift: Option<(ShiftInstance, TruncationWindow)>,
    pub base: String,
    pub depth: usize,
}

impl Subject {
    pub fn from_shift(inst: ShiftInstance) -> Result<Self> {
        let (window, wco) = inst.wco()?;
        Ok(Subject {
            name: inst.name.clone(),
            base: inst.base.to_string(),
            depth: inst.depth,
            wco,
            shift: Some((inst, window)),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub n_max: usize,
    pub tol: f64,
    pub rank_tol: f64,
    pub oracle: bool,
    pub classify: bool,
    pub timings: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            n_max: 3,
            tol: 1e-9,
            rank_tol: DEFAULT_RANK_TOL,
            oracle: true,
            classify: false,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Overall {
    Centered,
    NotCentered,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowInfo {
    pub base: String,
    pub depth: usize,
    /// Points where `h_{n_max}` is known.
    pub interior_count: usize,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CenteredReport {
    pub schema: u32,
    pub instance: String,
    pub window: WindowInfo,
    pub n_max: usize,
    pub tol: f64,
    pub verdict: Overall,
    pub conditions: Vec<ConditionVerdict>,
    pub classification: Option<TypeVerdict>,
    pub oracle: Option<OracleVerdict>,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

impl CenteredReport {
    pub fn condition(&self, tag: Tag) -> Option<&ConditionVerdict> {
        self.conditions.iter().find(|c| c.tag == tag)
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Overall::Centered => 0,
            Overall::NotCentered => 1,
            Overall::Inconclusive => 2,
        }
    }
}

struct Clock {
    on: bool,
    laps: BTreeMap<String, f64>,
}

impl Clock {
    fn time<T>(&mut self, what: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.on {
            *self.laps.entry(what.to_owned()).or_default() += start.elapsed().as_secs_f64() * 1e3;
        }
        out
    }
}

/// Runs every applicable check and assembles the report.
///
/// The generation criterion is run for weighted shifts, quasinormality for
/// composition operators. The oracle is skipped on windows larger than
/// [`SPECTRAL_LIMIT`].
pub fn full_report(subject: &Subject, opts: &ReportOptions) -> Result<CenteredReport> {
    let wco = &subject.wco;
    let mut clock = Clock {
        on: opts.timings,
        laps: BTreeMap::new(),
    };
    let mut conditions = Vec::new();
    let mut diagnostics = Vec::new();
    for tag in Tag::CONDITIONS {
        conditions.push(clock.time(tag.as_str(), || check_condition(wco, tag, opts.n_max, opts.tol))?);
    }
    conditions.push(clock.time("weak", || check_weakly_centered(wco, opts.tol))?);
    conditions.push(clock.time("quasinormal", || check_quasinormal_composition(wco, opts.n_max, opts.tol))?);
    if let Some((inst, window)) = &subject.shift {
        conditions.push(clock.time("generation", || generation_criterion(&inst.shift, window, opts.tol))?);
    }

    let oracle = if opts.oracle && wco.len() <= SPECTRAL_LIMIT {
        let verdict = clock.time("oracle", || {
            let op = materialize(wco)?;
            brute_force_centered(&op, opts.n_max.min(op.valid_order), opts.tol)
        });
        match verdict {
            Ok(v) => Some(v),
            Err(e) => {
                diagnostics.push(format!("oracle skipped: {e}"));
                None
            }
        }
    } else {
        if opts.oracle {
            diagnostics.push(format!("oracle skipped: window has more than {SPECTRAL_LIMIT} points"));
        }
        None
    };

    // (C)–(H) are equivalent; on a closed window with at least two orders a
    // disagreement indicates a bug, not a counterexample.
    let equivalent: Vec<&ConditionVerdict> = conditions
        .iter()
        .filter(|c| matches!(c.tag, Tag::C | Tag::D | Tag::E | Tag::F | Tag::G | Tag::H))
        .collect();
    let decided = equivalent.iter().all(|c| matches!(c.status, Status::Pass | Status::Fail));
    if wco.is_closed() && opts.n_max >= 2 && decided {
        let fails: Vec<&str> = equivalent.iter().filter(|c| c.failed()).map(|c| c.tag.as_str()).collect();
        if !fails.is_empty() && fails.len() != equivalent.len() {
            diagnostics.push(format!(
                "internal error: equivalent conditions disagree on a closed window (failing: {})",
                fails.join(", ")
            ));
        }
    }

    let counted = conditions.iter().filter(|c| c.tag != Tag::Quasinormal);
    let any_fail = counted.clone().any(|c| c.failed()) || oracle.as_ref().is_some_and(|o| !o.pass);
    let all_pass = counted.clone().all(|c| c.passed());
    let verdict = if any_fail {
        Overall::NotCentered
    } else if all_pass {
        Overall::Centered
    } else {
        Overall::Inconclusive
    };

    let classification = match (&subject.shift, opts.classify, verdict) {
        (Some((inst, _)), true, Overall::Centered) => {
            let copts = ClassifyOptions {
                n_max: opts.n_max,
                tol: opts.tol,
                rank_tol: opts.rank_tol,
                stability: true,
            };
            match clock.time("classify", || structural_type(inst, &copts)) {
                Ok(v) => Some(v),
                Err(e) => {
                    diagnostics.push(format!("classification failed: {e}"));
                    None
                }
            }
        }
        _ => None,
    };

    let interior_count = radon_nikodym(wco, opts.n_max)
        .map(|h| h.values.iter().filter(|v| v.is_some()).count())
        .unwrap_or(0);
    Ok(CenteredReport {
        schema: SCHEMA,
        instance: subject.name.clone(),
        window: WindowInfo {
            base: subject.base.clone(),
            depth: subject.depth,
            interior_count,
            size: wco.len(),
        },
        n_max: opts.n_max,
        tol: opts.tol,
        verdict,
        conditions,
        classification,
        oracle,
        diagnostics,
        timings_ms: opts.timings.then_some(clock.laps),
    })
}

/// Pretty JSON with every float written as `d.dddddddddddddddde±x`
/// (17 significant digits) and non-finite floats as `null`.
struct FixedFloat(PrettyFormatter<'static>);

macro_rules! delegate {
    ($($name:ident$(($arg:ident: $ty:ty))?),*) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)?) -> io::Result<()> {
            self.0.$name(w $(, $arg)?)
        })*
    };
}

impl Formatter for FixedFloat {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate!(
        begin_array,
        end_array,
        begin_array_value(first: bool),
        end_array_value,
        begin_object,
        end_object,
        begin_object_key(first: bool),
        begin_object_value,
        end_object_value
    );
}

/// Deterministic JSON rendering.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloat(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

/// Human-readable summary; lossy.
pub fn to_table(report: &CenteredReport) -> String {
    let mut s = format!(
        "instance {}  window base={} depth={} size={} interior={}  n_max={}\n",
        report.instance,
        report.window.base,
        report.window.depth,
        report.window.size,
        report.window.interior_count,
        report.n_max
    );
    s += &format!("{:<12} {:<15} {:>10} {:>8}  witness\n", "condition", "status", "residual", "points");
    for c in &report.conditions {
        let status = serde_json::to_value(c.status).expect("serializable");
        let witness = c
            .witness
            .as_ref()
            .map(|w| {
                let other = w.other.as_ref().map(|o| format!(" / {o}")).unwrap_or_default();
                format!("{}{} n={} lhs={} rhs={}", w.point, other, w.n, w.lhs, w.rhs)
            })
            .or_else(|| c.note.clone())
            .unwrap_or_default();
        s += &format!(
            "{:<12} {:<15} {:>10} {:>8}  {}\n",
            c.tag.as_str(),
            status.as_str().unwrap_or(""),
            sci(c.residual),
            c.points,
            witness
        );
    }
    if let Some(o) = &report.oracle {
        s += &format!(
            "oracle       {:<15} commutator={} relative={} phase_defect={}\n",
            if o.pass { "PASS" } else { "FAIL" },
            sci(o.max_commutator),
            sci(o.max_relative_commutator),
            sci(o.phase_defect)
        );
    }
    if let Some(c) = &report.classification {
        s += &type_table(c);
    }
    for d in &report.diagnostics {
        s += &format!("note: {d}\n");
    }
    s += &format!("verdict: {}\n", serde_json::to_value(report.verdict).expect("serializable").as_str().unwrap_or(""));
    s
}

pub fn type_table(v: &TypeVerdict) -> String {
    let mut s = format!("type {}", v.label);
    if let Some(w) = &v.window {
        s += &format!("  (window base={} depth={} size={})", w.base, w.depth, w.size);
    }
    if let Some(st) = v.stable {
        s += &format!("  stable={st}");
    }
    s.push('\n');
    for e in &v.evidence {
        s += &format!("  {}: {}\n", e.criterion, e.data);
    }
    s
}
