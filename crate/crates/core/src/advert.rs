//! Document advertisements and the rating element they carry.
//!
//! An advertisement announces one shared document to the network. Its
//! canonical XML form is what travels inside query responses and what is
//! persisted on disk, so serialization is byte-deterministic: fixed child
//! order, no whitespace between elements, UTF-8 throughout.
//!
//! ```text
//! <?xml version="1.0"?>
//! <r2p2p:DocumentAdvertisement xmlns:r2p2p="urn:r2p2p"><Id>urn:r2p2p:n1:doc-1</Id>
//!   <Title>...</Title><Summary>...</Summary><Author>...</Author>
//!   <ContentHash>...</ContentHash><Revision>1</Revision>
//!   <Rating><Citations>12</Citations><Level>C</Level><Descriptor>G</Descriptor></Rating>
//! </r2p2p:DocumentAdvertisement>
//! ```
//!
//! (shown wrapped here; the canonical form puts the whole root element on
//! one line). The `<Rating>` element is optional. Parsing is strict: unknown
//! or duplicated elements are rejected, codes outside the closed sets are
//! rejected, and numbers must be in canonical decimal form.

use std::fmt;

use crate::xml::{self, XmlEvent, XmlReader, XmlWriter};

/// Namespace attribute carried by every root element.
pub const NS_ATTR: &str = "xmlns:r2p2p";
/// Namespace URI for all wire documents.
pub const NS_URI: &str = "urn:r2p2p";

const ROOT: &str = "r2p2p:DocumentAdvertisement";

/// Audience level code. `A` is the most introductory audience and `D`
/// the most advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    A,
    B,
    C,
    D,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::A, Level::B, Level::C, Level::D];

    pub fn from_code(code: char) -> Result<Level, CodeError> {
        match code {
            'A' => Ok(Level::A),
            'B' => Ok(Level::B),
            'C' => Ok(Level::C),
            'D' => Ok(Level::D),
            other => Err(CodeError::UnknownLevel(other)),
        }
    }

    pub fn code(self) -> char {
        match self {
            Level::A => 'A',
            Level::B => 'B',
            Level::C => 'C',
            Level::D => 'D',
        }
    }

    /// Position in the A..D scale, 0 through 3.
    pub fn ordinal(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Document-kind code: `E` basics, `F` tutorial, `G` research paper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Descriptor {
    E,
    F,
    G,
}

impl Descriptor {
    pub const ALL: [Descriptor; 3] = [Descriptor::E, Descriptor::F, Descriptor::G];

    pub fn from_code(code: char) -> Result<Descriptor, CodeError> {
        match code {
            'E' => Ok(Descriptor::E),
            'F' => Ok(Descriptor::F),
            'G' => Ok(Descriptor::G),
            other => Err(CodeError::UnknownDescriptor(other)),
        }
    }

    pub fn code(self) -> char {
        match self {
            Descriptor::E => 'E',
            Descriptor::F => 'F',
            Descriptor::G => 'G',
        }
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// A code character outside one of the closed sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CodeError {
    #[error("level code {0:?} is not one of A, B, C, D")]
    UnknownLevel(char),
    #[error("descriptor code {0:?} is not one of E, F, G")]
    UnknownDescriptor(char),
}

/// The rating attached to an advertised document: citation count,
/// intended audience level, and document kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RatingElement {
    pub citations: u64,
    pub level: Level,
    pub descriptor: Descriptor,
}

impl RatingElement {
    pub fn new(citations: u64, level: Level, descriptor: Descriptor) -> Self {
        RatingElement {
            citations,
            level,
            descriptor,
        }
    }

    /// Builds a rating from raw code characters, rejecting anything
    /// outside the closed sets.
    pub fn from_codes(citations: u64, level: char, descriptor: char) -> Result<Self, CodeError> {
        Ok(RatingElement {
            citations,
            level: Level::from_code(level)?,
            descriptor: Descriptor::from_code(descriptor)?,
        })
    }
}

/// Metadata advertising one shared document.
///
/// `revision` starts at 1 and increments once per rating revision; the
/// id, title, author and content hash never change after publication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentAdvertisement {
    pub id: String,
    pub title: String,
    pub summary: String,
    pub author_id: String,
    pub content_hash: String,
    pub rating: Option<RatingElement>,
    pub revision: u64,
}

/// A field value that breaks the advertisement invariants.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvariantError {
    #[error("id {0}")]
    InvalidId(String),
    #[error("title {0}")]
    InvalidTitle(String),
    #[error("summary {0}")]
    InvalidSummary(String),
    #[error("author {0}")]
    InvalidAuthor(String),
    #[error("content hash {0}")]
    InvalidContentHash(String),
    #[error("revision must be at least 1")]
    InvalidRevision,
}

fn id_char_ok(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, ':' | '.' | '_' | '-')
}

fn has_control(s: &str, allow: &[char]) -> bool {
    s.chars().any(|c| c < ' ' && !allow.contains(&c))
}

impl DocumentAdvertisement {
    /// Builds an advertisement, validating every field.
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        summary: impl Into<String>,
        author_id: impl Into<String>,
        content_hash: impl Into<String>,
        rating: Option<RatingElement>,
        revision: u64,
    ) -> Result<Self, InvariantError> {
        let adv = DocumentAdvertisement {
            id: id.into(),
            title: title.into(),
            summary: summary.into(),
            author_id: author_id.into(),
            content_hash: content_hash.into(),
            rating,
            revision,
        };
        adv.validate()?;
        Ok(adv)
    }

    /// Checks every field invariant. Ids are restricted to URN-safe
    /// characters because they become file names in the store.
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.id.is_empty() || !self.id.chars().all(id_char_ok) {
            return Err(InvariantError::InvalidId(
                "must be non-empty and use only alphanumerics, ':', '.', '_', '-'".into(),
            ));
        }
        if self.title.is_empty() {
            return Err(InvariantError::InvalidTitle("must be non-empty".into()));
        }
        if has_control(&self.title, &[]) {
            return Err(InvariantError::InvalidTitle(
                "must not contain control characters".into(),
            ));
        }
        if has_control(&self.summary, &['\n', '\t']) {
            return Err(InvariantError::InvalidSummary(
                "must not contain control characters other than tab and newline".into(),
            ));
        }
        if self.author_id.is_empty() || has_control(&self.author_id, &[]) {
            return Err(InvariantError::InvalidAuthor(
                "must be non-empty with no control characters".into(),
            ));
        }
        if self.content_hash.is_empty()
            || !self
                .content_hash
                .bytes()
                .all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
        {
            return Err(InvariantError::InvalidContentHash(
                "must be non-empty lowercase hex".into(),
            ));
        }
        if self.revision == 0 {
            return Err(InvariantError::InvalidRevision);
        }
        Ok(())
    }
}

/// Why an advertisement document failed to parse.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed xml: {0}")]
    MalformedXml(String),
    #[error("element <{element}> has invalid code {found:?}")]
    InvalidCode { element: &'static str, found: String },
    #[error("invalid citations value {0:?}")]
    InvalidCitations(String),
    #[error("missing element <{0}>")]
    MissingField(&'static str),
    #[error("invalid revision value {0:?}")]
    InvalidRevision(String),
    #[error("element <{element}> is invalid: {reason}")]
    InvalidField {
        element: &'static str,
        reason: String,
    },
    #[error("unexpected element <{0}>")]
    UnexpectedElement(String),
    #[error("duplicate element <{0}>")]
    DuplicateElement(String),
}

impl From<xml::XmlError> for ParseError {
    fn from(e: xml::XmlError) -> Self {
        ParseError::MalformedXml(e.to_string())
    }
}

/// Renders the canonical XML form. Equal advertisements always produce
/// byte-identical output. The input must satisfy the type invariants.
pub fn serialize_advertisement(adv: &DocumentAdvertisement) -> String {
    let mut w = XmlWriter::new_document();
    w.open_root(ROOT, NS_ATTR, NS_URI);
    w.leaf("Id", &adv.id);
    w.leaf("Title", &adv.title);
    w.leaf("Summary", &adv.summary);
    w.leaf("Author", &adv.author_id);
    w.leaf("ContentHash", &adv.content_hash);
    w.leaf("Revision", &adv.revision.to_string());
    if let Some(rating) = &adv.rating {
        write_rating(&mut w, rating);
    }
    w.close(ROOT);
    w.finish()
}

fn write_rating(w: &mut XmlWriter, rating: &RatingElement) {
    w.open("Rating");
    w.leaf("Citations", &rating.citations.to_string());
    w.leaf("Level", &rating.level.to_string());
    w.leaf("Descriptor", &rating.descriptor.to_string());
    w.close("Rating");
}

/// Parses an advertisement document, enforcing the full set of
/// structural and field invariants. Inverse of [`serialize_advertisement`]
/// on its image; also accepts insignificant whitespace between elements
/// and any child order.
pub fn parse_advertisement(input: &str) -> Result<DocumentAdvertisement, ParseError> {
    let mut reader = XmlReader::new(input);
    expect_root(&mut reader, ROOT)?;

    let mut id = None;
    let mut title = None;
    let mut summary = None;
    let mut author = None;
    let mut content_hash = None;
    let mut revision = None;
    let mut rating = None;
    let mut saw_rating = false;

    loop {
        match next_in_element(&mut reader)? {
            Elem::Child { name, text } => {
                let slot = match name.as_str() {
                    "Id" => &mut id,
                    "Title" => &mut title,
                    "Summary" => &mut summary,
                    "Author" => &mut author,
                    "ContentHash" => &mut content_hash,
                    "Revision" => &mut revision,
                    "Rating" => return Err(ParseError::MalformedXml(
                        "element <Rating> cannot be read as text".into(),
                    )),
                    _ => return Err(ParseError::UnexpectedElement(name)),
                };
                if slot.is_some() {
                    return Err(ParseError::DuplicateElement(name));
                }
                *slot = Some(text);
            }
            Elem::Container { name } => {
                if name != "Rating" {
                    return Err(ParseError::UnexpectedElement(name));
                }
                if saw_rating {
                    return Err(ParseError::DuplicateElement(name));
                }
                saw_rating = true;
                rating = Some(parse_rating_children(&mut reader)?);
            }
            Elem::Close(name) => {
                if name == ROOT {
                    break;
                }
                return Err(ParseError::MalformedXml(format!(
                    "mismatched end tag </{name}>"
                )));
            }
        }
    }
    expect_document_end(&mut reader)?;

    let id = id.ok_or(ParseError::MissingField("Id"))?;
    let title = title.ok_or(ParseError::MissingField("Title"))?;
    let summary = summary.ok_or(ParseError::MissingField("Summary"))?;
    let author = author.ok_or(ParseError::MissingField("Author"))?;
    let content_hash = content_hash.ok_or(ParseError::MissingField("ContentHash"))?;
    let revision_text = revision.ok_or(ParseError::MissingField("Revision"))?;

    let revision = xml::parse_canonical_u64(&revision_text)
        .filter(|r| *r >= 1)
        .ok_or(ParseError::InvalidRevision(revision_text))?;

    DocumentAdvertisement::new(id, title, summary, author, content_hash, rating, revision)
        .map_err(invariant_to_parse)
}

fn invariant_to_parse(e: InvariantError) -> ParseError {
    let (element, reason) = match &e {
        InvariantError::InvalidId(r) => ("Id", r.clone()),
        InvariantError::InvalidTitle(r) => ("Title", r.clone()),
        InvariantError::InvalidSummary(r) => ("Summary", r.clone()),
        InvariantError::InvalidAuthor(r) => ("Author", r.clone()),
        InvariantError::InvalidContentHash(r) => ("ContentHash", r.clone()),
        InvariantError::InvalidRevision => ("Revision", "must be at least 1".into()),
    };
    ParseError::InvalidField { element, reason }
}

/// Pulls just the `<Rating>` subtree out of an advertisement document
/// without materializing the other fields. Returns `None` when the
/// advertisement carries no rating. Content after the rating subtree is
/// not scanned, so extraction from a long document stops early.
pub fn extract_rating(input: &str) -> Result<Option<RatingElement>, ParseError> {
    let mut reader = XmlReader::new(input);
    expect_root(&mut reader, ROOT)?;
    let mut depth = 0usize;
    loop {
        match reader.next_event()? {
            None => return Err(ParseError::MalformedXml("unexpected end of input".into())),
            Some(XmlEvent::Decl) => {
                return Err(ParseError::MalformedXml("misplaced declaration".into()))
            }
            Some(XmlEvent::Start { name, attrs }) => {
                if depth == 0 && name == "Rating" {
                    no_attrs(&name, &attrs)?;
                    return parse_rating_children(&mut reader).map(Some);
                }
                depth += 1;
            }
            Some(XmlEvent::Empty { name, .. }) => {
                if depth == 0 && name == "Rating" {
                    return Err(ParseError::MissingField("Citations"));
                }
            }
            Some(XmlEvent::End { name }) => {
                if depth == 0 {
                    if name == ROOT {
                        return Ok(None);
                    }
                    return Err(ParseError::MalformedXml(format!(
                        "mismatched end tag </{name}>"
                    )));
                }
                depth -= 1;
            }
            Some(XmlEvent::Text(_)) => {}
        }
    }
}

fn parse_rating_children(reader: &mut XmlReader<'_>) -> Result<RatingElement, ParseError> {
    let mut citations = None;
    let mut level = None;
    let mut descriptor = None;
    loop {
        match next_in_element(reader)? {
            Elem::Child { name, text } => {
                let slot = match name.as_str() {
                    "Citations" => &mut citations,
                    "Level" => &mut level,
                    "Descriptor" => &mut descriptor,
                    _ => return Err(ParseError::UnexpectedElement(name)),
                };
                if slot.is_some() {
                    return Err(ParseError::DuplicateElement(name));
                }
                *slot = Some(text);
            }
            Elem::Container { name } => return Err(ParseError::UnexpectedElement(name)),
            Elem::Close(name) => {
                if name == "Rating" {
                    break;
                }
                return Err(ParseError::MalformedXml(format!(
                    "mismatched end tag </{name}>"
                )));
            }
        }
    }

    let citations_text = citations.ok_or(ParseError::MissingField("Citations"))?;
    let level_text = level.ok_or(ParseError::MissingField("Level"))?;
    let descriptor_text = descriptor.ok_or(ParseError::MissingField("Descriptor"))?;

    let citations = xml::parse_canonical_u64(&citations_text)
        .ok_or(ParseError::InvalidCitations(citations_text))?;
    let level = single_code(&level_text)
        .and_then(|c| Level::from_code(c).ok())
        .ok_or(ParseError::InvalidCode {
            element: "Level",
            found: level_text,
        })?;
    let descriptor = single_code(&descriptor_text)
        .and_then(|c| Descriptor::from_code(c).ok())
        .ok_or(ParseError::InvalidCode {
            element: "Descriptor",
            found: descriptor_text,
        })?;

    Ok(RatingElement::new(citations, level, descriptor))
}

fn single_code(text: &str) -> Option<char> {
    let mut chars = text.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

// -- shared strict-parsing plumbing, also used by the message codec --

pub(crate) enum Elem {
    /// A leaf child element and its unescaped text content.
    Child { name: String, text: String },
    /// A non-leaf child element was opened (its events are still unread).
    Container { name: String },
    /// The enclosing element's end tag.
    Close(String),
}

/// Reads the next child of the current element: either a complete leaf,
/// the start of a container element (only `Rating` qualifies here), or
/// the enclosing end tag. Whitespace-only text between children is
/// skipped; anything else is rejected.
pub(crate) fn next_in_element(reader: &mut XmlReader<'_>) -> Result<Elem, ParseError> {
    loop {
        match reader.next_event()? {
            None => return Err(ParseError::MalformedXml("unexpected end of input".into())),
            Some(XmlEvent::Decl) => {
                return Err(ParseError::MalformedXml("misplaced declaration".into()))
            }
            Some(XmlEvent::Text(t)) => {
                if xml::is_whitespace(&t) {
                    continue;
                }
                return Err(ParseError::MalformedXml(
                    "character data not allowed between elements".into(),
                ));
            }
            Some(XmlEvent::End { name }) => return Ok(Elem::Close(name)),
            Some(XmlEvent::Empty { name, attrs }) => {
                no_attrs(&name, &attrs)?;
                if name == "Rating" {
                    return Err(ParseError::MissingField("Citations"));
                }
                return Ok(Elem::Child {
                    name,
                    text: String::new(),
                });
            }
            Some(XmlEvent::Start { name, attrs }) => {
                no_attrs(&name, &attrs)?;
                if is_container(&name) {
                    return Ok(Elem::Container { name });
                }
                let text = read_leaf_text(reader, &name)?;
                return Ok(Elem::Child { name, text });
            }
        }
    }
}

fn is_container(name: &str) -> bool {
    name == "Rating"
}

fn no_attrs(name: &str, attrs: &[(String, String)]) -> Result<(), ParseError> {
    if attrs.is_empty() {
        Ok(())
    } else {
        Err(ParseError::MalformedXml(format!(
            "attributes not allowed on <{name}>"
        )))
    }
}

/// Collects the text content of a leaf element up to its end tag.
fn read_leaf_text(reader: &mut XmlReader<'_>, name: &str) -> Result<String, ParseError> {
    let mut text = String::new();
    loop {
        match reader.next_event()? {
            None => return Err(ParseError::MalformedXml("unexpected end of input".into())),
            Some(XmlEvent::Text(t)) => text.push_str(&t),
            Some(XmlEvent::End { name: end }) => {
                if end == name {
                    return Ok(text);
                }
                return Err(ParseError::MalformedXml(format!(
                    "mismatched end tag </{end}>"
                )));
            }
            Some(XmlEvent::Start { name: inner, .. })
            | Some(XmlEvent::Empty { name: inner, .. }) => {
                return Err(ParseError::UnexpectedElement(inner))
            }
            Some(XmlEvent::Decl) => {
                return Err(ParseError::MalformedXml("misplaced declaration".into()))
            }
        }
    }
}

/// Consumes the optional declaration and the root start tag, checking
/// the element name and the fixed namespace attribute.
pub(crate) fn expect_root(reader: &mut XmlReader<'_>, root: &str) -> Result<(), ParseError> {
    let mut saw_decl = false;
    loop {
        match reader.next_event()? {
            None => return Err(ParseError::MalformedXml("empty document".into())),
            Some(XmlEvent::Decl) => {
                if saw_decl {
                    return Err(ParseError::MalformedXml("duplicate declaration".into()));
                }
                saw_decl = true;
            }
            Some(XmlEvent::Text(t)) => {
                if xml::is_whitespace(&t) {
                    continue;
                }
                return Err(ParseError::MalformedXml(
                    "character data before root element".into(),
                ));
            }
            Some(XmlEvent::Start { name, attrs }) => {
                if name != root {
                    return Err(ParseError::UnexpectedElement(name));
                }
                let ok = attrs.len() == 1 && attrs[0].0 == NS_ATTR && attrs[0].1 == NS_URI;
                if !ok {
                    return Err(ParseError::MalformedXml(format!(
                        "root element must carry exactly {NS_ATTR}=\"{NS_URI}\""
                    )));
                }
                return Ok(());
            }
            Some(XmlEvent::Empty { .. }) => {
                return Err(ParseError::MalformedXml("root element is empty".into()))
            }
            Some(XmlEvent::End { name }) => {
                return Err(ParseError::MalformedXml(format!(
                    "unexpected end tag </{name}>"
                )))
            }
        }
    }
}

/// Asserts that nothing but whitespace follows the root element.
pub(crate) fn expect_document_end(reader: &mut XmlReader<'_>) -> Result<(), ParseError> {
    loop {
        match reader.next_event()? {
            None => return Ok(()),
            Some(XmlEvent::Text(t)) if xml::is_whitespace(&t) => continue,
            Some(_) => {
                return Err(ParseError::MalformedXml(
                    "content after root element".into(),
                ))
            }
        }
    }
}
