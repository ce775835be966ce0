//! Minimal strict XML reader and writer for the wire formats.
//!
//! This is deliberately not a general XML library. It supports exactly the
//! subset the advertisement and message documents use: an optional
//! declaration, elements without attributes (except the fixed namespace
//! attribute on the root), and character data with the five predefined
//! entities plus numeric character references. Comments, CDATA sections,
//! doctypes and processing instructions other than the leading declaration
//! are rejected, which keeps the canonical form byte-stable.

use std::borrow::Cow;
use std::fmt;

/// The declaration every canonical document starts with.
pub const XML_DECL: &str = "<?xml version=\"1.0\"?>";

/// A low-level syntax error with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlError {
    pub message: String,
    pub offset: usize,
}

impl fmt::Display for XmlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

impl std::error::Error for XmlError {}

fn err<T>(message: impl Into<String>, offset: usize) -> Result<T, XmlError> {
    Err(XmlError {
        message: message.into(),
        offset,
    })
}

/// One parse event. Text events carry already-unescaped character data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlEvent {
    /// The `<?xml ...?>` declaration. Only valid as the first event.
    Decl,
    Start {
        name: String,
        attrs: Vec<(String, String)>,
    },
    End {
        name: String,
    },
    /// A self-closing element, `<Name/>`.
    Empty {
        name: String,
        attrs: Vec<(String, String)>,
    },
    Text(String),
}

/// Pull parser over a complete document held in memory.
pub struct XmlReader<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> XmlReader<'a> {
    pub fn new(src: &'a str) -> Self {
        XmlReader { src, pos: 0 }
    }

    /// Byte offset of the next unread input, for error reporting.
    pub fn offset(&self) -> usize {
        self.pos
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self, n: usize) {
        self.pos += n;
    }

    /// Returns the next event, or `None` at end of input.
    pub fn next_event(&mut self) -> Result<Option<XmlEvent>, XmlError> {
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        if self.rest().starts_with('<') {
            self.read_markup().map(Some)
        } else {
            self.read_text().map(Some)
        }
    }

    fn read_markup(&mut self) -> Result<XmlEvent, XmlError> {
        let rest = self.rest();
        if rest.starts_with("<?") {
            return self.read_decl();
        }
        if rest.starts_with("<!") {
            return err(
                "comments, CDATA and doctype declarations are not supported",
                self.pos,
            );
        }
        if rest.starts_with("</") {
            return self.read_end_tag();
        }
        self.read_start_tag()
    }

    fn read_decl(&mut self) -> Result<XmlEvent, XmlError> {
        let start = self.pos;
        match self.rest().find("?>") {
            Some(i) => {
                self.bump(i + 2);
                Ok(XmlEvent::Decl)
            }
            None => err("unterminated declaration", start),
        }
    }

    fn read_end_tag(&mut self) -> Result<XmlEvent, XmlError> {
        self.bump(2); // </
        let name = self.read_name()?;
        self.skip_ws();
        if !self.rest().starts_with('>') {
            return err("expected '>' in end tag", self.pos);
        }
        self.bump(1);
        Ok(XmlEvent::End { name })
    }

    fn read_start_tag(&mut self) -> Result<XmlEvent, XmlError> {
        self.bump(1); // <
        let name = self.read_name()?;
        let mut attrs = Vec::new();
        loop {
            let had_ws = self.skip_ws();
            let rest = self.rest();
            if rest.starts_with("/>") {
                self.bump(2);
                return Ok(XmlEvent::Empty { name, attrs });
            }
            if rest.starts_with('>') {
                self.bump(1);
                return Ok(XmlEvent::Start { name, attrs });
            }
            if rest.is_empty() {
                return err("unterminated start tag", self.pos);
            }
            if !had_ws {
                return err("expected whitespace before attribute", self.pos);
            }
            attrs.push(self.read_attr()?);
        }
    }

    fn read_attr(&mut self) -> Result<(String, String), XmlError> {
        let name = self.read_name()?;
        self.skip_ws();
        if !self.rest().starts_with('=') {
            return err("expected '=' in attribute", self.pos);
        }
        self.bump(1);
        self.skip_ws();
        let quote = match self.rest().chars().next() {
            Some(q @ ('"' | '\'')) => q,
            _ => return err("expected quoted attribute value", self.pos),
        };
        self.bump(1);
        let value_start = self.pos;
        match self.rest().find(quote) {
            Some(i) => {
                let raw = &self.src[value_start..value_start + i];
                if raw.contains('<') {
                    return err("'<' not allowed in attribute value", value_start);
                }
                let value = unescape(raw, value_start)?;
                self.bump(i + 1);
                Ok((name, value))
            }
            None => err("unterminated attribute value", value_start),
        }
    }

    fn read_name(&mut self) -> Result<String, XmlError> {
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !is_name_char(*c))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if end == 0 {
            return err("expected a name", self.pos);
        }
        let name = &rest[..end];
        let first = name.chars().next().unwrap();
        if !(first.is_ascii_alphabetic() || first == '_') {
            return err("invalid name start character", self.pos);
        }
        self.bump(end);
        Ok(name.to_string())
    }

    fn read_text(&mut self) -> Result<XmlEvent, XmlError> {
        let start = self.pos;
        let end = self.rest().find('<').map(|i| start + i).unwrap_or(self.src.len());
        let raw = &self.src[start..end];
        let text = unescape(raw, start)?;
        // Line-end normalization: bare CR and CRLF both read as LF.
        let text = if text.contains('\r') {
            text.replace("\r\n", "\n").replace('\r', "\n")
        } else {
            text
        };
        self.pos = end;
        Ok(XmlEvent::Text(text))
    }

    fn skip_ws(&mut self) -> bool {
        let before = self.pos;
        while let Some(c) = self.rest().chars().next() {
            if c == ' ' || c == '\t' || c == '\n' || c == '\r' {
                self.bump(c.len_utf8());
            } else {
                break;
            }
        }
        self.pos != before
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, ':' | '_' | '.' | '-')
}

/// True when `s` is empty or all XML whitespace.
pub fn is_whitespace(s: &str) -> bool {
    s.chars().all(|c| matches!(c, ' ' | '\t' | '\n' | '\r'))
}

fn unescape(raw: &str, base: usize) -> Result<String, XmlError> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '&' => {
                let rest = &raw[i + 1..];
                let semi = match rest.find(';') {
                    Some(n) if n <= 10 => n,
                    _ => return err("invalid entity reference", base + i),
                };
                let entity = &rest[..semi];
                let decoded = decode_entity(entity)
                    .ok_or_else(|| XmlError {
                        message: format!("unknown entity '&{entity};'"),
                        offset: base + i,
                    })?;
                check_char(decoded, base + i)?;
                out.push(decoded);
                // Skip the entity body and the semicolon.
                for _ in 0..semi + 1 {
                    chars.next();
                }
            }
            _ => {
                check_char(c, base + i)?;
                out.push(c);
            }
        }
    }
    Ok(out)
}

fn check_char(c: char, offset: usize) -> Result<(), XmlError> {
    if c < ' ' && !matches!(c, '\t' | '\n' | '\r') {
        return err(format!("control character U+{:04X} not allowed", c as u32), offset);
    }
    Ok(())
}

fn decode_entity(entity: &str) -> Option<char> {
    match entity {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        _ => {
            let digits = entity.strip_prefix('#')?;
            let code = if let Some(hex) = digits.strip_prefix('x') {
                u32::from_str_radix(hex, 16).ok()?
            } else {
                digits.parse::<u32>().ok()?
            };
            char::from_u32(code)
        }
    }
}

/// Escapes character data for element content.
pub fn escape_text(s: &str) -> Cow<'_, str> {
    if !s.contains(['&', '<', '>']) {
        return Cow::Borrowed(s);
    }
    let mut out = String::with_capacity(s.len() + 8);
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    Cow::Owned(out)
}

/// Builds canonical documents: declaration, then one root element on a
/// single line with no whitespace between elements.
pub struct XmlWriter {
    out: String,
}

impl XmlWriter {
    pub fn new_document() -> Self {
        let mut out = String::with_capacity(256);
        out.push_str(XML_DECL);
        out.push('\n');
        XmlWriter { out }
    }

    pub fn open_root(&mut self, name: &str, xmlns_attr: &str, xmlns_uri: &str) {
        self.out.push('<');
        self.out.push_str(name);
        self.out.push(' ');
        self.out.push_str(xmlns_attr);
        self.out.push_str("=\"");
        self.out.push_str(xmlns_uri);
        self.out.push_str("\">");
    }

    pub fn open(&mut self, name: &str) {
        self.out.push('<');
        self.out.push_str(name);
        self.out.push('>');
    }

    pub fn close(&mut self, name: &str) {
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push('>');
    }

    pub fn leaf(&mut self, name: &str, text: &str) {
        self.open(name);
        self.out.push_str(&escape_text(text));
        self.close(name);
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Parses a decimal with no sign, no leading zeros and no surrounding
/// whitespace. The only zero spelling accepted is `"0"`.
pub fn parse_canonical_u64(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if s.len() > 1 && s.starts_with('0') {
        return None;
    }
    s.parse::<u64>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(src: &str) -> Result<Vec<XmlEvent>, XmlError> {
        let mut r = XmlReader::new(src);
        let mut out = Vec::new();
        while let Some(ev) = r.next_event()? {
            out.push(ev);
        }
        Ok(out)
    }

    #[test]
    fn reads_simple_document() {
        let evs = events("<?xml version=\"1.0\"?>\n<a><b>hi</b></a>").unwrap();
        assert_eq!(evs.len(), 6);
        assert_eq!(evs[0], XmlEvent::Decl);
        assert_eq!(
            evs[2],
            XmlEvent::Start {
                name: "a".into(),
                attrs: vec![]
            }
        );
        assert_eq!(evs[4], XmlEvent::Text("hi".into()));
    }

    #[test]
    fn reads_attributes_and_self_closing() {
        let evs = events("<a x=\"1\" y='2'/>").unwrap();
        assert_eq!(
            evs,
            vec![XmlEvent::Empty {
                name: "a".into(),
                attrs: vec![("x".into(), "1".into()), ("y".into(), "2".into())]
            }]
        );
    }

    #[test]
    fn unescapes_entities() {
        let evs = events("<a>x &amp; y &lt;z&gt; &#65; &#x42;</a>").unwrap();
        assert_eq!(evs[1], XmlEvent::Text("x & y <z> A B".into()));
    }

    #[test]
    fn rejects_bare_ampersand() {
        assert!(events("<a>x & y</a>").is_err());
    }

    #[test]
    fn rejects_comments() {
        assert!(events("<a><!-- no --></a>").is_err());
    }

    #[test]
    fn rejects_control_characters() {
        assert!(events("<a>\u{1}</a>").is_err());
        assert!(events("<a>&#1;</a>").is_err());
    }

    #[test]
    fn normalizes_line_ends() {
        let evs = events("<a>x\r\ny\rz</a>").unwrap();
        assert_eq!(evs[1], XmlEvent::Text("x\ny\nz".into()));
    }

    #[test]
    fn escape_round_trips() {
        let original = "a & b <c> 'd' \"e\"";
        let escaped = escape_text(original);
        let evs = events(&format!("<a>{escaped}</a>")).unwrap();
        assert_eq!(evs[1], XmlEvent::Text(original.into()));
    }

    #[test]
    fn canonical_u64_rules() {
        assert_eq!(parse_canonical_u64("0"), Some(0));
        assert_eq!(parse_canonical_u64("12"), Some(12));
        assert_eq!(parse_canonical_u64("007"), None);
        assert_eq!(parse_canonical_u64("-3"), None);
        assert_eq!(parse_canonical_u64("+3"), None);
        assert_eq!(parse_canonical_u64(" 12"), None);
        assert_eq!(parse_canonical_u64(""), None);
        assert_eq!(parse_canonical_u64("18446744073709551616"), None);
        assert_eq!(parse_canonical_u64("18446744073709551615"), Some(u64::MAX));
    }
}
