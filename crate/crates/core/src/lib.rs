//! Rated-resource peer-to-peer file sharing.
//!
//! Every shared document is announced through an XML advertisement that may
//! carry a `<Rating>` element (citation count, audience level, document
//! kind). Responding peers answer keyword queries with raw advertisement
//! XML and do no ranking work; the querying peer extracts the ratings,
//! deduplicates by advertisement id, and sorts the results relative to its
//! own user profile. Publishing and rating revision are gated by a
//! credential registry.
//!
//! Module map:
//!
//! - [`advert`] — the advertisement data model and its canonical XML form
//! - [`relevance`] — code tables, user profiles and the ranking comparator
//! - [`store`] — per-node document store with credential checks
//! - [`network`] — wire messages, responder logic, simulator and TCP transport
//! - [`queryengine`] — the querying peer's collect/dedupe/sort pipeline
//! - [`config`] — node configuration file handling

pub mod advert;
pub mod config;
pub mod network;
pub mod queryengine;
pub mod relevance;
pub mod store;
pub mod xml;

pub use advert::{
    parse_advertisement, serialize_advertisement, Descriptor, DocumentAdvertisement, Level,
    RatingElement,
};
pub use network::{Message, PeerId, PROTOCOL_VERSION};
pub use queryengine::{SearchOutcome, SearchResult};
pub use relevance::{relevance_key, sort_results, RelevanceKey, UserProfile};
pub use store::{Credential, Role, Store};
