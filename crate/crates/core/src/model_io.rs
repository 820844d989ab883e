//! XML encoding of simulation models.
//!
//! The parser is strict: unknown elements or attributes are errors, so typos
//! such as `prob` for `p` cannot slip through. It only checks structure;
//! probability sums and reachability are left to [`crate::validate`].
//!
//! ```xml
//! <sts name="CreditAdd" timeUnit="ms" start="5" stop="5">
//!   <state id="5"/>
//!   <state id="5a"/>
//!   <overhead>
//!     <in kind="constant" value="1"/>
//!     <out kind="exponential" mean="2"/>
//!   </overhead>
//!   <transition from="5" to="5a" p="1"><delay kind="uniform" min="0" max="4"/></transition>
//! </sts>
//! ```

use std::fmt;
use std::fmt::Write as _;

use roxmltree::{Document, Node, TextPos};
use thiserror::Error;

use crate::model::{
    fmt_f64, DelayDistribution, Overheads, StateId, StsModel, Transition, TIME_UNIT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorCode {
    InvalidEncoding,
    MalformedXml,
    DuplicateAttribute,
    WrongRoot,
    UnknownElement,
    UnknownAttribute,
    MissingAttribute,
    NonNumeric,
    UnknownDelayKind,
    InvalidTimeUnit,
    MissingElement,
    DuplicateElement,
    UnexpectedText,
}

impl ParseErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParseErrorCode::InvalidEncoding => "InvalidEncoding",
            ParseErrorCode::MalformedXml => "MalformedXml",
            ParseErrorCode::DuplicateAttribute => "DuplicateAttribute",
            ParseErrorCode::WrongRoot => "WrongRoot",
            ParseErrorCode::UnknownElement => "UnknownElement",
            ParseErrorCode::UnknownAttribute => "UnknownAttribute",
            ParseErrorCode::MissingAttribute => "MissingAttribute",
            ParseErrorCode::NonNumeric => "NonNumeric",
            ParseErrorCode::UnknownDelayKind => "UnknownDelayKind",
            ParseErrorCode::InvalidTimeUnit => "InvalidTimeUnit",
            ParseErrorCode::MissingElement => "MissingElement",
            ParseErrorCode::DuplicateElement => "DuplicateElement",
            ParseErrorCode::UnexpectedText => "UnexpectedText",
        }
    }
}

impl fmt::Display for ParseErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parse failure. `line` and `column` are 1-based, or 0 when unknown.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub code: ParseErrorCode,
    pub message: String,
}

impl ParseError {
    fn at(pos: TextPos, code: ParseErrorCode, message: impl Into<String>) -> Self {
        Self {
            line: pos.row,
            column: pos.col,
            code,
            message: message.into(),
        }
    }
}

pub fn parse_model(bytes: &[u8]) -> Result<StsModel, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError {
        line: 0,
        column: 0,
        code: ParseErrorCode::InvalidEncoding,
        message: format!("document is not UTF-8: {e}"),
    })?;
    parse_model_str(text)
}

pub fn parse_model_str(text: &str) -> Result<StsModel, ParseError> {
    let doc = Document::parse(text).map_err(|e| {
        let code = match e {
            roxmltree::Error::DuplicatedAttribute(..) => ParseErrorCode::DuplicateAttribute,
            _ => ParseErrorCode::MalformedXml,
        };
        ParseError::at(e.pos(), code, e.to_string())
    })?;
    Reader { doc: &doc }.model()
}

struct Reader<'a, 'input> {
    doc: &'a Document<'input>,
}

impl<'a, 'input> Reader<'a, 'input> {
    fn pos(&self, node: Node) -> TextPos {
        self.doc.text_pos_at(node.range().start)
    }

    fn err(&self, node: Node, code: ParseErrorCode, message: impl Into<String>) -> ParseError {
        ParseError::at(self.pos(node), code, message)
    }

    fn allow_attrs(&self, node: Node, allowed: &[&str]) -> Result<(), ParseError> {
        for a in node.attributes() {
            if a.namespace().is_some() || !allowed.contains(&a.name()) {
                return Err(self.err(
                    node,
                    ParseErrorCode::UnknownAttribute,
                    format!(
                        "unknown attribute '{}' on <{}>",
                        a.name(),
                        node.tag_name().name()
                    ),
                ));
            }
        }
        Ok(())
    }

    fn attr(&self, node: Node<'a, 'input>, name: &str) -> Result<&'a str, ParseError> {
        node.attribute(name).ok_or_else(|| {
            self.err(
                node,
                ParseErrorCode::MissingAttribute,
                format!("<{}> is missing attribute '{name}'", node.tag_name().name()),
            )
        })
    }

    fn number(&self, node: Node<'a, 'input>, name: &str) -> Result<f64, ParseError> {
        let raw = self.attr(node, name)?;
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(
                node,
                ParseErrorCode::NonNumeric,
                format!("attribute '{name}' is not a finite number: '{raw}'"),
            )),
        }
    }

    /// Element children, rejecting stray text and foreign namespaces.
    fn children(&self, node: Node<'a, 'input>) -> Result<Vec<Node<'a, 'input>>, ParseError> {
        let mut out = Vec::new();
        for c in node.children() {
            if c.is_text() {
                if c.text().is_some_and(|t| !t.trim().is_empty()) {
                    return Err(self.err(
                        c,
                        ParseErrorCode::UnexpectedText,
                        format!("unexpected text inside <{}>", node.tag_name().name()),
                    ));
                }
            } else if c.is_element() {
                if c.tag_name().namespace().is_some() {
                    return Err(self.unknown_element(c));
                }
                out.push(c);
            }
        }
        Ok(out)
    }

    fn unknown_element(&self, node: Node) -> ParseError {
        self.err(
            node,
            ParseErrorCode::UnknownElement,
            format!("unknown element <{}>", node.tag_name().name()),
        )
    }

    fn model(&self) -> Result<StsModel, ParseError> {
        let root = self.doc.root_element();
        if root.tag_name().name() != "sts" || root.tag_name().namespace().is_some() {
            return Err(self.err(
                root,
                ParseErrorCode::WrongRoot,
                format!(
                    "root element must be <sts>, found <{}>",
                    root.tag_name().name()
                ),
            ));
        }
        self.allow_attrs(root, &["name", "timeUnit", "start", "stop"])?;
        let name = self.attr(root, "name")?.to_string();
        let unit = self.attr(root, "timeUnit")?;
        if unit != TIME_UNIT {
            return Err(self.err(
                root,
                ParseErrorCode::InvalidTimeUnit,
                format!("timeUnit must be \"{TIME_UNIT}\", found \"{unit}\""),
            ));
        }
        let start = StateId::new(self.attr(root, "start")?);
        let stop = self
            .attr(root, "stop")?
            .split_whitespace()
            .map(StateId::new)
            .collect();

        let mut states = Vec::new();
        let mut transitions = Vec::new();
        let mut overheads = None;
        for child in self.children(root)? {
            match child.tag_name().name() {
                "state" => {
                    self.allow_attrs(child, &["id"])?;
                    self.leaf(child)?;
                    states.push(StateId::new(self.attr(child, "id")?));
                }
                "transition" => transitions.push(self.transition(child)?),
                "overhead" => {
                    if overheads.is_some() {
                        return Err(self.err(
                            child,
                            ParseErrorCode::DuplicateElement,
                            "<sts> has more than one <overhead>",
                        ));
                    }
                    overheads = Some(self.overhead(child)?);
                }
                _ => return Err(self.unknown_element(child)),
            }
        }

        Ok(StsModel {
            name,
            states,
            start,
            stop,
            transitions,
            overheads,
        })
    }

    fn leaf(&self, node: Node<'a, 'input>) -> Result<(), ParseError> {
        match self.children(node)?.first() {
            Some(&c) => Err(self.unknown_element(c)),
            None => Ok(()),
        }
    }

    fn transition(&self, node: Node<'a, 'input>) -> Result<Transition, ParseError> {
        self.allow_attrs(node, &["from", "to", "p", "label"])?;
        let from = StateId::new(self.attr(node, "from")?);
        let to = StateId::new(self.attr(node, "to")?);
        let probability = self.number(node, "p")?;
        let label = node.attribute("label").map(str::to_string);
        let mut delay = None;
        for c in self.children(node)? {
            if c.tag_name().name() != "delay" {
                return Err(self.unknown_element(c));
            }
            if delay.is_some() {
                return Err(self.err(
                    c,
                    ParseErrorCode::DuplicateElement,
                    "<transition> has more than one <delay>",
                ));
            }
            delay = Some(self.delay(c)?);
        }
        let delay = delay.ok_or_else(|| {
            self.err(
                node,
                ParseErrorCode::MissingElement,
                "<transition> requires a <delay> child",
            )
        })?;
        Ok(Transition {
            from,
            to,
            probability,
            delay,
            label,
        })
    }

    fn overhead(&self, node: Node<'a, 'input>) -> Result<Overheads, ParseError> {
        self.allow_attrs(node, &[])?;
        let mut inbound = None;
        let mut outbound = None;
        for c in self.children(node)? {
            let slot = match c.tag_name().name() {
                "in" => &mut inbound,
                "out" => &mut outbound,
                _ => return Err(self.unknown_element(c)),
            };
            if slot.is_some() {
                return Err(self.err(
                    c,
                    ParseErrorCode::DuplicateElement,
                    format!("<overhead> has more than one <{}>", c.tag_name().name()),
                ));
            }
            *slot = Some(self.delay(c)?);
        }
        let missing = |name: &str| {
            self.err(
                node,
                ParseErrorCode::MissingElement,
                format!("<overhead> requires an <{name}> child"),
            )
        };
        Ok(Overheads {
            inbound: inbound.ok_or_else(|| missing("in"))?,
            outbound: outbound.ok_or_else(|| missing("out"))?,
        })
    }

    fn delay(&self, node: Node<'a, 'input>) -> Result<DelayDistribution, ParseError> {
        self.leaf(node)?;
        let kind = self.attr(node, "kind")?;
        let d = match kind {
            "constant" => {
                self.allow_attrs(node, &["kind", "value"])?;
                DelayDistribution::Constant {
                    value: self.number(node, "value")?,
                }
            }
            "uniform" => {
                self.allow_attrs(node, &["kind", "min", "max"])?;
                DelayDistribution::Uniform {
                    min: self.number(node, "min")?,
                    max: self.number(node, "max")?,
                }
            }
            "exponential" => {
                self.allow_attrs(node, &["kind", "mean"])?;
                DelayDistribution::Exponential {
                    mean: self.number(node, "mean")?,
                }
            }
            "truncated_normal" => {
                self.allow_attrs(node, &["kind", "mean", "sd"])?;
                DelayDistribution::TruncatedNormal {
                    mean: self.number(node, "mean")?,
                    sd: self.number(node, "sd")?,
                }
            }
            other => {
                return Err(self.err(
                    node,
                    ParseErrorCode::UnknownDelayKind,
                    format!("unknown delay kind '{other}'"),
                ))
            }
        };
        Ok(d)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

fn delay_attrs(d: &DelayDistribution) -> String {
    let mut s = format!("kind=\"{}\"", d.kind());
    for (name, v) in d.params() {
        let _ = write!(s, " {name}=\"{}\"", fmt_f64(v));
    }
    s
}

/// Canonical encoding: fixed attribute order, two-space indentation,
/// overhead after the states, transitions in document order.
pub fn serialize_model(model: &StsModel) -> String {
    let mut out = String::new();
    let stop: Vec<&str> = model.stop.iter().map(StateId::as_str).collect();
    let _ = writeln!(
        out,
        "<sts name=\"{}\" timeUnit=\"{TIME_UNIT}\" start=\"{}\" stop=\"{}\">",
        escape(&model.name),
        escape(model.start.as_str()),
        escape(&stop.join(" "))
    );
    for s in &model.states {
        let _ = writeln!(out, "  <state id=\"{}\"/>", escape(s.as_str()));
    }
    if let Some(o) = &model.overheads {
        out.push_str("  <overhead>\n");
        let _ = writeln!(out, "    <in {}/>", delay_attrs(&o.inbound));
        let _ = writeln!(out, "    <out {}/>", delay_attrs(&o.outbound));
        out.push_str("  </overhead>\n");
    }
    for t in &model.transitions {
        let _ = write!(
            out,
            "  <transition from=\"{}\" to=\"{}\" p=\"{}\"",
            escape(t.from.as_str()),
            escape(t.to.as_str()),
            fmt_f64(t.probability)
        );
        if let Some(label) = &t.label {
            let _ = write!(out, " label=\"{}\"", escape(label));
        }
        let _ = writeln!(out, "><delay {}/></transition>", delay_attrs(&t.delay));
    }
    out.push_str("</sts>\n");
    out
}
