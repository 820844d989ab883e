//! Text templates for rendering a [`SimProgram`].
//!
//! A template file is a list of `@@` directives, each section holding the
//! lines emitted for one statement form:
//!
//! ```text
//! @@ template NAME        display name
//! @@ indent N             spaces per nesting level
//! @@ prologue             before the body
//! @@ delay                once per delay; {DIST}
//! @@ branch_open          before the cases of a branch
//! @@ case_first           first case (optional, defaults to `case`); {THRESHOLD}
//! @@ case                 middle cases; {THRESHOLD} = cumulative probability
//! @@ case_last            last case; {THRESHOLD} = cumulative of the cases before it
//! @@ branch_close         after the last case
//! @@ epilogue             after the body
//! ```
//!
//! Every section may use `{INDENT}`. Text outside placeholders is copied
//! verbatim, so the engine is agnostic to the target language.

use std::path::Path;

use thiserror::Error;

use super::ir::{Block, SimProgram, Stmt};
use crate::model::fmt_f64;

const FIG4: &str = include_str!("../../templates/fig4.tpl");
const PSEUDOCODE: &str = include_str!("../../templates/pseudocode.tpl");

pub const BUILTIN_TEMPLATES: [&str; 2] = ["fig4", "pseudocode"];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no template named '{name}'")]
    TemplateNotFound { name: String },
    #[error("placeholder {{{placeholder}}} cannot be resolved in section {section}")]
    UnresolvedPlaceholder {
        section: &'static str,
        placeholder: String,
    },
    #[error("line {line}: {message}")]
    InvalidTemplate { line: usize, message: String },
    #[error("template is missing section {section}")]
    MissingSection { section: &'static str },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TemplateError {
    pub fn code(&self) -> &'static str {
        match self {
            TemplateError::TemplateNotFound { .. } => "TemplateNotFound",
            TemplateError::UnresolvedPlaceholder { .. } => "UnresolvedPlaceholder",
            TemplateError::InvalidTemplate { .. } => "InvalidTemplate",
            TemplateError::MissingSection { .. } => "MissingSection",
            TemplateError::Io { .. } => "Io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderTemplate {
    pub name: String,
    pub indent: String,
    pub prologue: String,
    pub epilogue: String,
    pub delay: String,
    pub branch_open: String,
    pub case_first: String,
    pub case: String,
    pub case_last: String,
    pub branch_close: String,
}

const SECTIONS: [&str; 8] = [
    "prologue",
    "epilogue",
    "delay",
    "branch_open",
    "case_first",
    "case",
    "case_last",
    "branch_close",
];

fn allowed(section: &str) -> &'static [&'static str] {
    match section {
        "delay" => &["INDENT", "DIST"],
        "case_first" | "case" | "case_last" => &["INDENT", "THRESHOLD"],
        _ => &["INDENT"],
    }
}

/// Splits `pattern` into literal text and `{NAME}` placeholders.
fn placeholders(pattern: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let bytes = pattern.as_bytes();
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < bytes.len() {
            if bytes[i] == b'{' {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_uppercase() || bytes[j] == b'_') {
                    j += 1;
                }
                if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                    let span = (i, j + 1);
                    i = j + 1;
                    return Some(span);
                }
            }
            i += 1;
        }
        None
    })
}

impl RenderTemplate {
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "fig4" => FIG4,
            "pseudocode" => PSEUDOCODE,
            _ => return None,
        };
        Some(Self::parse(text).expect("builtin templates are well formed"))
    }

    /// A builtin name, or else a path to a template file.
    pub fn load(name_or_path: &str) -> Result<Self, TemplateError> {
        if let Some(t) = Self::builtin(name_or_path) {
            return Ok(t);
        }
        let path = Path::new(name_or_path);
        if !path.is_file() {
            return Err(TemplateError::TemplateNotFound {
                name: name_or_path.to_string(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut name = String::from("custom");
        let mut indent = None;
        let mut sections: [Option<String>; 8] = Default::default();
        let mut current: Option<usize> = None;

        for (n, line) in text.lines().enumerate() {
            let Some(directive) = line.strip_prefix("@@") else {
                match current {
                    Some(i) => {
                        let s = sections[i].get_or_insert_with(String::new);
                        s.push_str(line);
                        s.push('\n');
                    }
                    None if line.trim().is_empty() => {}
                    None => {
                        return Err(TemplateError::InvalidTemplate {
                            line: n + 1,
                            message: "text before the first section".into(),
                        })
                    }
                }
                continue;
            };
            let mut words = directive.split_whitespace();
            let bad = |message: String| TemplateError::InvalidTemplate {
                line: n + 1,
                message,
            };
            match (words.next(), words.next(), words.next()) {
                (Some("template"), Some(v), None) => name = v.to_string(),
                (Some("indent"), Some(v), None) => {
                    let width: usize = v
                        .parse()
                        .map_err(|_| bad(format!("bad indent width '{v}'")))?;
                    indent = Some(" ".repeat(width));
                }
                (Some(section), None, None) => {
                    let i = SECTIONS
                        .iter()
                        .position(|s| *s == section)
                        .ok_or_else(|| bad(format!("unknown section '{section}'")))?;
                    if sections[i].is_some() {
                        return Err(bad(format!("section '{section}' appears twice")));
                    }
                    sections[i] = Some(String::new());
                    current = Some(i);
                }
                _ => return Err(bad(format!("unrecognized directive '{}'", line.trim()))),
            }
        }

        let mut take = |i: usize| {
            sections[i].take().ok_or(TemplateError::MissingSection {
                section: SECTIONS[i],
            })
        };
        let prologue = take(0)?;
        let epilogue = take(1)?;
        let delay = take(2)?;
        let branch_open = take(3)?;
        let case_first = take(4).ok();
        let case = take(5)?;
        let t = RenderTemplate {
            name,
            indent: indent.unwrap_or_else(|| "  ".into()),
            prologue,
            epilogue,
            delay,
            branch_open,
            case_first: case_first.unwrap_or_else(|| case.clone()),
            case,
            case_last: take(6)?,
            branch_close: take(7)?,
        };
        t.check()?;
        Ok(t)
    }

    fn sections(&self) -> [(&'static str, &str); 8] {
        [
            ("prologue", &self.prologue),
            ("epilogue", &self.epilogue),
            ("delay", &self.delay),
            ("branch_open", &self.branch_open),
            ("case_first", &self.case_first),
            ("case", &self.case),
            ("case_last", &self.case_last),
            ("branch_close", &self.branch_close),
        ]
    }

    /// Every placeholder must be resolvable in the section that uses it.
    pub fn check(&self) -> Result<(), TemplateError> {
        for (section, pattern) in self.sections() {
            for (a, b) in placeholders(pattern) {
                let key = &pattern[a + 1..b - 1];
                if !allowed(section).contains(&key) {
                    return Err(TemplateError::UnresolvedPlaceholder {
                        section,
                        placeholder: key.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn substitute(out: &mut String, pattern: &str, indent: &str, dist: &str, threshold: &str) {
    let mut last = 0;
    for (a, b) in placeholders(pattern) {
        out.push_str(&pattern[last..a]);
        match &pattern[a + 1..b - 1] {
            "INDENT" => out.push_str(indent),
            "DIST" => out.push_str(dist),
            "THRESHOLD" => out.push_str(threshold),
            // rejected by RenderTemplate::check
            other => unreachable!("unchecked placeholder {other}"),
        }
        last = b;
    }
    out.push_str(&pattern[last..]);
}

pub fn render(ir: &SimProgram, template: &RenderTemplate) -> Result<String, TemplateError> {
    template.check()?;
    let mut out = String::new();
    substitute(&mut out, &template.prologue, "", "", "");
    render_block(&mut out, &ir.body, template, 1);
    substitute(&mut out, &template.epilogue, "", "", "");
    Ok(out)
}

fn render_block(out: &mut String, block: &Block, t: &RenderTemplate, depth: usize) {
    let indent = t.indent.repeat(depth);
    for stmt in block {
        match stmt {
            Stmt::Delay(d) => substitute(out, &t.delay, &indent, &d.to_string(), ""),
            Stmt::Branch(cases) => {
                substitute(out, &t.branch_open, &indent, "", "");
                let mut cumulative = 0.0;
                let last = cases.len() - 1;
                for (i, case) in cases.iter().enumerate() {
                    let (pattern, threshold) = if i == last {
                        (&t.case_last, cumulative)
                    } else {
                        cumulative += case.probability;
                        (if i == 0 { &t.case_first } else { &t.case }, cumulative)
                    };
                    substitute(out, pattern, &indent, "", &fmt_f64(threshold));
                    render_block(out, &case.body, t, depth + 1);
                }
                substitute(out, &t.branch_close, &indent, "", "");
            }
        }
    }
}
