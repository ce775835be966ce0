//! Wire messages and the responder logic shared by the in-process
//! simulator and the TCP transport.
//!
//! Three message kinds travel between peers: `QueryRequest`,
//! `QueryResponse`, and `Hello`. Each is a canonical XML document in the
//! `urn:r2p2p` namespace. A responding peer answers a query with the raw
//! canonical XML of every matching advertisement and performs no
//! relevance work at all; rating extraction and sorting happen on the
//! peer that issued the query.

pub mod sim;
pub mod tcp;

use std::fmt;

use crate::advert::{self, Elem, ParseError, NS_ATTR, NS_URI};
use crate::store::Store;
use crate::xml::{self, XmlReader, XmlWriter};

/// Version spoken by this implementation. Any mismatch aborts a session.
pub const PROTOCOL_VERSION: u32 = 1;

const QUERY_REQUEST_ROOT: &str = "r2p2p:QueryRequest";
const QUERY_RESPONSE_ROOT: &str = "r2p2p:QueryResponse";
const HELLO_ROOT: &str = "r2p2p:Hello";

/// Opaque peer identifier, unique within a network instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(String);

impl PeerId {
    pub fn new(id: impl Into<String>) -> Self {
        PeerId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PeerId {
    fn from(s: &str) -> Self {
        PeerId(s.to_string())
    }
}

/// A keyword search fanned out to peers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRequest {
    pub query_id: String,
    pub keywords: Vec<String>,
}

/// A responder's answer: the canonical advertisement XML of every local
/// match, echoing the request's query id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResponse {
    pub query_id: String,
    pub advertisements: Vec<String>,
}

/// Session handshake carrying the sender's identity and version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub peer_id: PeerId,
    pub protocol_version: u32,
}

/// Envelope for everything that crosses the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    QueryRequest(QueryRequest),
    QueryResponse(QueryResponse),
    Hello(Hello),
}

impl Message {
    /// Short human form for traces and logs.
    pub fn summary(&self) -> String {
        match self {
            Message::QueryRequest(q) => format!(
                "QueryRequest id={} keywords=[{}]",
                q.query_id,
                q.keywords.join(",")
            ),
            Message::QueryResponse(r) => format!(
                "QueryResponse id={} adverts={} bytes={}",
                r.query_id,
                r.advertisements.len(),
                r.advertisements.iter().map(String::len).sum::<usize>()
            ),
            Message::Hello(h) => {
                format!("Hello peer={} version={}", h.peer_id, h.protocol_version)
            }
        }
    }
}

/// Renders a message in canonical XML. Deterministic for equal inputs.
pub fn serialize_message(msg: &Message) -> String {
    let mut w = XmlWriter::new_document();
    match msg {
        Message::QueryRequest(q) => {
            w.open_root(QUERY_REQUEST_ROOT, NS_ATTR, NS_URI);
            w.leaf("QueryId", &q.query_id);
            for keyword in &q.keywords {
                w.leaf("Keyword", keyword);
            }
            w.close(QUERY_REQUEST_ROOT);
        }
        Message::QueryResponse(r) => {
            w.open_root(QUERY_RESPONSE_ROOT, NS_ATTR, NS_URI);
            w.leaf("QueryId", &r.query_id);
            for advert in &r.advertisements {
                w.leaf("Advertisement", advert);
            }
            w.close(QUERY_RESPONSE_ROOT);
        }
        Message::Hello(h) => {
            w.open_root(HELLO_ROOT, NS_ATTR, NS_URI);
            w.leaf("PeerId", h.peer_id.as_str());
            w.leaf("ProtocolVersion", &h.protocol_version.to_string());
            w.close(HELLO_ROOT);
        }
    }
    w.finish()
}

/// Parses one wire message, strictly.
pub fn parse_message(input: &str) -> Result<Message, ParseError> {
    let mut reader = XmlReader::new(input);
    let root = peek_root_name(input)?;
    match root.as_str() {
        QUERY_REQUEST_ROOT => {
            advert::expect_root(&mut reader, QUERY_REQUEST_ROOT)?;
            let (query_id, values) = parse_id_and_repeats(&mut reader, QUERY_REQUEST_ROOT, "Keyword")?;
            for keyword in &values {
                text_field_ok("Keyword", keyword)?;
            }
            Ok(Message::QueryRequest(QueryRequest {
                query_id,
                keywords: values,
            }))
        }
        QUERY_RESPONSE_ROOT => {
            advert::expect_root(&mut reader, QUERY_RESPONSE_ROOT)?;
            let (query_id, values) =
                parse_id_and_repeats(&mut reader, QUERY_RESPONSE_ROOT, "Advertisement")?;
            Ok(Message::QueryResponse(QueryResponse {
                query_id,
                advertisements: values,
            }))
        }
        HELLO_ROOT => {
            advert::expect_root(&mut reader, HELLO_ROOT)?;
            let mut peer_id = None;
            let mut version = None;
            loop {
                match advert::next_in_element(&mut reader)? {
                    Elem::Child { name, text } => match name.as_str() {
                        "PeerId" => set_once(&mut peer_id, "PeerId", text)?,
                        "ProtocolVersion" => set_once(&mut version, "ProtocolVersion", text)?,
                        _ => return Err(ParseError::UnexpectedElement(name)),
                    },
                    Elem::Container { name } => return Err(ParseError::UnexpectedElement(name)),
                    Elem::Close(name) => {
                        if name == HELLO_ROOT {
                            break;
                        }
                        return Err(ParseError::MalformedXml(format!(
                            "mismatched end tag </{name}>"
                        )));
                    }
                }
            }
            advert::expect_document_end(&mut reader)?;
            let peer_id = peer_id.ok_or(ParseError::MissingField("PeerId"))?;
            text_field_ok("PeerId", &peer_id)?;
            if peer_id.is_empty() {
                return Err(ParseError::InvalidField {
                    element: "PeerId",
                    reason: "must be non-empty".into(),
                });
            }
            let version_text = version.ok_or(ParseError::MissingField("ProtocolVersion"))?;
            let version = xml::parse_canonical_u64(&version_text)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or(ParseError::InvalidField {
                    element: "ProtocolVersion",
                    reason: format!("{version_text:?} is not a canonical version number"),
                })?;
            Ok(Message::Hello(Hello {
                peer_id: PeerId::new(peer_id),
                protocol_version: version,
            }))
        }
        other => Err(ParseError::UnexpectedElement(other.to_string())),
    }
}

fn peek_root_name(input: &str) -> Result<String, ParseError> {
    let mut reader = XmlReader::new(input);
    loop {
        match reader.next_event()? {
            None => return Err(ParseError::MalformedXml("empty document".into())),
            Some(xml::XmlEvent::Decl) => continue,
            Some(xml::XmlEvent::Text(t)) if xml::is_whitespace(&t) => continue,
            Some(xml::XmlEvent::Start { name, .. }) => return Ok(name),
            Some(_) => return Err(ParseError::MalformedXml("expected root element".into())),
        }
    }
}

fn set_once(slot: &mut Option<String>, name: &'static str, text: String) -> Result<(), ParseError> {
    if slot.is_some() {
        return Err(ParseError::DuplicateElement(name.to_string()));
    }
    *slot = Some(text);
    Ok(())
}

fn text_field_ok(element: &'static str, text: &str) -> Result<(), ParseError> {
    if text.chars().any(|c| c < ' ') {
        return Err(ParseError::InvalidField {
            element,
            reason: "must not contain control characters".into(),
        });
    }
    Ok(())
}

/// Reads `<QueryId>` (exactly once) plus zero or more `repeat` children,
/// keeping the repeats in document order.
fn parse_id_and_repeats(
    reader: &mut XmlReader<'_>,
    root: &str,
    repeat: &'static str,
) -> Result<(String, Vec<String>), ParseError> {
    let mut query_id = None;
    let mut values = Vec::new();
    loop {
        match advert::next_in_element(reader)? {
            Elem::Child { name, text } => {
                if name == "QueryId" {
                    set_once(&mut query_id, "QueryId", text)?;
                } else if name == repeat {
                    values.push(text);
                } else {
                    return Err(ParseError::UnexpectedElement(name));
                }
            }
            Elem::Container { name } => return Err(ParseError::UnexpectedElement(name)),
            Elem::Close(name) => {
                if name == root {
                    break;
                }
                return Err(ParseError::MalformedXml(format!(
                    "mismatched end tag </{name}>"
                )));
            }
        }
    }
    advert::expect_document_end(reader)?;
    let query_id = query_id.ok_or(ParseError::MissingField("QueryId"))?;
    if query_id.is_empty() {
        return Err(ParseError::InvalidField {
            element: "QueryId",
            reason: "must be non-empty".into(),
        });
    }
    text_field_ok("QueryId", &query_id)?;
    Ok((query_id, values))
}

/// A session-fatal protocol violation; the connection is closed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("protocol version mismatch: local {local}, remote {remote}")]
    VersionMismatch { local: u32, remote: u32 },
}

/// The responder: answers queries by string matching against the local
/// store and never touches relevance computation. `QueryRequest` yields
/// a `QueryResponse` with every local match serialized; `Hello` yields a
/// `Hello` reply when versions agree; a stray `QueryResponse` yields no
/// reply.
pub fn handle_message(
    msg: &Message,
    store: &Store,
    local_id: &PeerId,
    local_version: u32,
) -> Result<Option<Message>, ProtocolError> {
    match msg {
        Message::QueryRequest(req) => {
            let advertisements = store
                .match_query(&req.keywords)
                .iter()
                .map(crate::advert::serialize_advertisement)
                .collect();
            Ok(Some(Message::QueryResponse(QueryResponse {
                query_id: req.query_id.clone(),
                advertisements,
            })))
        }
        Message::Hello(hello) => {
            if hello.protocol_version != local_version {
                return Err(ProtocolError::VersionMismatch {
                    local: local_version,
                    remote: hello.protocol_version,
                });
            }
            Ok(Some(Message::Hello(Hello {
                peer_id: local_id.clone(),
                protocol_version: local_version,
            })))
        }
        Message::QueryResponse(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advert::{RatingElement, serialize_advertisement};
    use crate::store::{Credential, CredentialRegistry, DigestAlgorithm, Role, Store};

    fn test_store() -> Store {
        let mut registry = CredentialRegistry::new(DigestAlgorithm::Sha256);
        registry.insert_token("alice", Role::Author, "s");
        let mut store = Store::in_memory("n1", registry, DigestAlgorithm::Sha256);
        let cred = Credential::new("alice", "s", Role::Author);
        store
            .publish_document(
                "Basics of Image Processing",
                "",
                b"1",
                Some(RatingElement::from_codes(3, 'A', 'E').unwrap()),
                &cred,
            )
            .unwrap();
        store
            .publish_document("Image Processing Research", "", b"2", None, &cred)
            .unwrap();
        store
            .publish_document("Graph Theory", "", b"3", None, &cred)
            .unwrap();
        store
    }

    fn kw(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn message_codec_round_trips() {
        let messages = [
            Message::QueryRequest(QueryRequest {
                query_id: "q-1".into(),
                keywords: kw(&["image", "processing"]),
            }),
            Message::QueryRequest(QueryRequest {
                query_id: "q-2".into(),
                keywords: vec![],
            }),
            Message::QueryResponse(QueryResponse {
                query_id: "q-1".into(),
                advertisements: vec!["<?xml version=\"1.0\"?>\n<x/>".into()],
            }),
            Message::Hello(Hello {
                peer_id: PeerId::new("peer-1"),
                protocol_version: PROTOCOL_VERSION,
            }),
        ];
        for msg in messages {
            let xml = serialize_message(&msg);
            assert_eq!(parse_message(&xml).unwrap(), msg, "{xml}");
            // Canonical form is a fixed point.
            assert_eq!(serialize_message(&parse_message(&xml).unwrap()), xml);
        }
    }

    #[test]
    fn embedded_advertisement_payloads_survive_the_envelope() {
        let store = test_store();
        let adverts: Vec<String> = store.advertisements().map(serialize_advertisement).collect();
        let msg = Message::QueryResponse(QueryResponse {
            query_id: "q".into(),
            advertisements: adverts.clone(),
        });
        let decoded = parse_message(&serialize_message(&msg)).unwrap();
        let Message::QueryResponse(resp) = decoded else {
            panic!("wrong variant")
        };
        assert_eq!(resp.advertisements, adverts);
        for payload in &resp.advertisements {
            crate::advert::parse_advertisement(payload).unwrap();
        }
    }

    #[test]
    fn parse_rejects_unknown_roots_and_missing_fields() {
        assert!(matches!(
            parse_message("<?xml version=\"1.0\"?>\n<r2p2p:Other xmlns:r2p2p=\"urn:r2p2p\"></r2p2p:Other>"),
            Err(ParseError::UnexpectedElement(_))
        ));
        assert_eq!(
            parse_message(
                "<r2p2p:QueryRequest xmlns:r2p2p=\"urn:r2p2p\"><Keyword>x</Keyword></r2p2p:QueryRequest>"
            ),
            Err(ParseError::MissingField("QueryId"))
        );
    }

    #[test]
    fn query_yields_all_matches() {
        let store = test_store();
        let req = Message::QueryRequest(QueryRequest {
            query_id: "q-9".into(),
            keywords: kw(&["image", "processing"]),
        });
        let reply = handle_message(&req, &store, &PeerId::new("n1"), PROTOCOL_VERSION)
            .unwrap()
            .unwrap();
        let Message::QueryResponse(resp) = reply else {
            panic!("expected response")
        };
        assert_eq!(resp.query_id, "q-9");
        assert_eq!(resp.advertisements.len(), 2);
        for payload in &resp.advertisements {
            crate::advert::parse_advertisement(payload).unwrap();
        }
    }

    #[test]
    fn query_with_no_matches_yields_empty_response() {
        let store = test_store();
        let req = Message::QueryRequest(QueryRequest {
            query_id: "q-0".into(),
            keywords: kw(&["nonexistent"]),
        });
        let Some(Message::QueryResponse(resp)) =
            handle_message(&req, &store, &PeerId::new("n1"), PROTOCOL_VERSION).unwrap()
        else {
            panic!("expected response")
        };
        assert!(resp.advertisements.is_empty());
    }

    #[test]
    fn hello_version_gate() {
        let store = test_store();
        let me = PeerId::new("n1");
        let good = Message::Hello(Hello {
            peer_id: PeerId::new("n2"),
            protocol_version: PROTOCOL_VERSION,
        });
        let reply = handle_message(&good, &store, &me, PROTOCOL_VERSION).unwrap().unwrap();
        assert_eq!(
            reply,
            Message::Hello(Hello {
                peer_id: me.clone(),
                protocol_version: PROTOCOL_VERSION
            })
        );

        let bad = Message::Hello(Hello {
            peer_id: PeerId::new("n2"),
            protocol_version: PROTOCOL_VERSION + 1,
        });
        assert_eq!(
            handle_message(&bad, &store, &me, PROTOCOL_VERSION),
            Err(ProtocolError::VersionMismatch {
                local: PROTOCOL_VERSION,
                remote: PROTOCOL_VERSION + 1
            })
        );
    }

    #[test]
    fn stray_response_gets_no_reply() {
        let store = test_store();
        let msg = Message::QueryResponse(QueryResponse {
            query_id: "q".into(),
            advertisements: vec![],
        });
        assert_eq!(
            handle_message(&msg, &store, &PeerId::new("n1"), PROTOCOL_VERSION).unwrap(),
            None
        );
    }
}
