//! Per-node document store with credential-gated publishing and rating
//! revision.
//!
//! Publishing and revising require a credential that checks out against
//! the node's registry: authors and raters may publish, and a rating may
//! be revised only by the record's owner or by a rater. Readers can do
//! neither. Every check happens before any state changes, so a denied or
//! failed call leaves the store untouched, in memory and on disk.
//!
//! On-disk layout, one directory per node:
//!
//! ```text
//! <dir>/records/<id>.xml   canonical advertisement
//! <dir>/records/<id>.bin   document bytes
//! <dir>/credentials.txt    principal_id<TAB>role<TAB>token_digest
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::advert::{
    parse_advertisement, serialize_advertisement, CodeError, DocumentAdvertisement,
    InvariantError, RatingElement,
};

/// What a principal is allowed to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// May publish documents and revise ratings on its own documents.
    Author,
    /// May publish documents and revise ratings on any document.
    Rater,
    /// May only search and download.
    Reader,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Author, Role::Rater, Role::Reader];

    pub fn name(self) -> &'static str {
        match self {
            Role::Author => "author",
            Role::Rater => "rater",
            Role::Reader => "reader",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A caller's claimed identity: who they are, their secret, and the role
/// they claim. All three must match the registry exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub principal_id: String,
    pub token: String,
    pub role: Role,
}

impl Credential {
    pub fn new(principal_id: impl Into<String>, token: impl Into<String>, role: Role) -> Self {
        Credential {
            principal_id: principal_id.into(),
            token: token.into(),
            role,
        }
    }
}

/// Content digest used for document hashes and tokens at rest. Named in
/// the node configuration and fixed per network so hashes compare equal
/// across peers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DigestAlgorithm {
    #[default]
    Sha256,
}

impl DigestAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            DigestAlgorithm::Sha256 => "sha256",
        }
    }

    pub fn from_name(name: &str) -> Option<DigestAlgorithm> {
        match name {
            "sha256" => Some(DigestAlgorithm::Sha256),
            _ => None,
        }
    }

    /// Lowercase hex digest of `bytes`.
    pub fn digest_hex(self, bytes: &[u8]) -> String {
        match self {
            DigestAlgorithm::Sha256 => {
                let digest = Sha256::digest(bytes);
                let mut out = String::with_capacity(digest.len() * 2);
                for b in digest {
                    out.push_str(&format!("{b:02x}"));
                }
                out
            }
        }
    }
}

/// The principal table: who exists, their role, and the digest of their
/// token. Tokens are never stored in the clear.
#[derive(Debug, Clone, Default)]
pub struct CredentialRegistry {
    digest: DigestAlgorithm,
    entries: BTreeMap<String, (Role, String)>,
}

impl CredentialRegistry {
    pub fn new(digest: DigestAlgorithm) -> Self {
        CredentialRegistry {
            digest,
            entries: BTreeMap::new(),
        }
    }

    /// Registers a principal from a plain token, digesting it.
    pub fn insert_token(&mut self, principal_id: impl Into<String>, role: Role, token: &str) {
        let digest = self.digest.digest_hex(token.as_bytes());
        self.entries.insert(principal_id.into(), (role, digest));
    }

    /// Registers a principal from an already-digested token.
    pub fn insert_digest(
        &mut self,
        principal_id: impl Into<String>,
        role: Role,
        token_digest: impl Into<String>,
    ) {
        self.entries
            .insert(principal_id.into(), (role, token_digest.into()));
    }

    /// Parses the `credentials.txt` format: one principal per line,
    /// `principal_id<TAB>role<TAB>token_digest`, `#` comment lines and
    /// blank lines ignored.
    pub fn parse(text: &str, digest: DigestAlgorithm) -> Result<Self, StoreError> {
        let mut registry = CredentialRegistry::new(digest);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (principal, role, token_digest) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(p), Some(r), Some(t), None) if !p.is_empty() && !t.is_empty() => (p, r, t),
                _ => {
                    return Err(StoreError::BadCredentialFile {
                        line: lineno + 1,
                        reason: "expected principal_id<TAB>role<TAB>token_digest".into(),
                    })
                }
            };
            let role = Role::from_name(role).ok_or_else(|| StoreError::BadCredentialFile {
                line: lineno + 1,
                reason: format!("unknown role {role:?}"),
            })?;
            if registry.entries.contains_key(principal) {
                return Err(StoreError::BadCredentialFile {
                    line: lineno + 1,
                    reason: format!("duplicate principal {principal:?}"),
                });
            }
            registry.insert_digest(principal, role, token_digest);
        }
        Ok(registry)
    }

    /// Checks a credential against the table. The principal must exist,
    /// the token digest must match exactly, and the claimed role must
    /// equal the registered role.
    pub fn verify(&self, cred: &Credential) -> Result<Role, StoreError> {
        let (role, token_digest) = self
            .entries
            .get(&cred.principal_id)
            .ok_or_else(|| StoreError::Unauthorized("unknown principal".into()))?;
        if self.digest.digest_hex(cred.token.as_bytes()) != *token_digest {
            return Err(StoreError::Unauthorized("token mismatch".into()));
        }
        if cred.role != *role {
            return Err(StoreError::Unauthorized(format!(
                "principal is registered as {role}, not {}",
                cred.role
            )));
        }
        Ok(*role)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One stored document: its advertisement, the raw bytes, and who
/// published it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub advertisement: DocumentAdvertisement,
    pub content: Vec<u8>,
    pub owner: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("invalid rating: {0}")]
    InvalidRating(#[from] CodeError),
    #[error("document not found: {0}")]
    NotFound(String),
    #[error("invalid document: {0}")]
    InvalidDocument(#[from] InvariantError),
    #[error("corrupt record {id}: {reason}")]
    CorruptRecord { id: String, reason: String },
    #[error("credential file line {line}: {reason}")]
    BadCredentialFile { line: usize, reason: String },
    #[error("storage: {0}")]
    Io(#[from] io::Error),
}

/// Document and advertisement store for one node.
///
/// Reads may run concurrently behind a shared reference; publish and
/// revise take `&mut self` and are atomic. With a directory attached,
/// every accepted mutation is persisted before it becomes visible.
#[derive(Debug)]
pub struct Store {
    namespace: String,
    digest: DigestAlgorithm,
    registry: CredentialRegistry,
    records: BTreeMap<String, DocumentRecord>,
    next_seq: u64,
    dir: Option<PathBuf>,
}

impl Store {
    /// A store without persistence, for simulations and tests.
    pub fn in_memory(
        namespace: impl Into<String>,
        registry: CredentialRegistry,
        digest: DigestAlgorithm,
    ) -> Store {
        let namespace = namespace.into();
        assert!(
            !namespace.is_empty()
                && namespace
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')),
            "store namespace must be a plain identifier"
        );
        Store {
            namespace,
            digest,
            registry,
            records: BTreeMap::new(),
            next_seq: 1,
            dir: None,
        }
    }

    /// Opens (or initializes) a directory-backed store, loading every
    /// record and verifying content hashes.
    pub fn open(
        dir: impl Into<PathBuf>,
        namespace: impl Into<String>,
        registry: CredentialRegistry,
        digest: DigestAlgorithm,
    ) -> Result<Store, StoreError> {
        let dir = dir.into();
        let mut store = Store::in_memory(namespace, registry, digest);
        fs::create_dir_all(dir.join("records"))?;

        let mut max_seq = 0u64;
        let mut entries: Vec<PathBuf> = fs::read_dir(dir.join("records"))?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "xml"))
            .collect();
        entries.sort();

        for xml_path in entries {
            let xml = fs::read_to_string(&xml_path)?;
            let adv = parse_advertisement(&xml).map_err(|e| StoreError::CorruptRecord {
                id: xml_path.display().to_string(),
                reason: e.to_string(),
            })?;
            let content = fs::read(xml_path.with_extension("bin")).map_err(|e| {
                StoreError::CorruptRecord {
                    id: adv.id.clone(),
                    reason: format!("content bytes unreadable: {e}"),
                }
            })?;
            if digest.digest_hex(&content) != adv.content_hash {
                return Err(StoreError::CorruptRecord {
                    id: adv.id.clone(),
                    reason: "content hash mismatch".into(),
                });
            }
            if let Some(seq) = store.sequence_of(&adv.id) {
                max_seq = max_seq.max(seq);
            }
            let owner = adv.author_id.clone();
            store.records.insert(
                adv.id.clone(),
                DocumentRecord {
                    advertisement: adv,
                    content,
                    owner,
                },
            );
        }
        store.next_seq = max_seq + 1;
        store.dir = Some(dir);
        Ok(store)
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn digest_algorithm(&self) -> DigestAlgorithm {
        self.digest
    }

    /// Swaps in a new credential table, e.g. after the credentials file
    /// changed. Records are untouched.
    pub fn reload_credentials(&mut self, registry: CredentialRegistry) {
        self.registry = registry;
    }

    fn sequence_of(&self, id: &str) -> Option<u64> {
        let prefix = format!("urn:r2p2p:{}:doc-", self.namespace);
        id.strip_prefix(&prefix)?.parse().ok()
    }

    fn fresh_id(&self) -> String {
        format!("urn:r2p2p:{}:doc-{}", self.namespace, self.next_seq)
    }

    /// Publishes a new document. The caller must hold the author or
    /// rater role; the advertisement gets a fresh id, revision 1, and a
    /// content hash computed here.
    pub fn publish_document(
        &mut self,
        title: &str,
        summary: &str,
        content: &[u8],
        rating: Option<RatingElement>,
        cred: &Credential,
    ) -> Result<DocumentAdvertisement, StoreError> {
        let role = self.registry.verify(cred)?;
        if role == Role::Reader {
            return Err(StoreError::Unauthorized(
                "reader role may not publish".into(),
            ));
        }
        let adv = DocumentAdvertisement::new(
            self.fresh_id(),
            title,
            summary,
            cred.principal_id.clone(),
            self.digest.digest_hex(content),
            rating,
            1,
        )?;
        let record = DocumentRecord {
            advertisement: adv.clone(),
            content: content.to_vec(),
            owner: cred.principal_id.clone(),
        };
        self.persist(&record)?;
        self.records.insert(adv.id.clone(), record);
        self.next_seq += 1;
        Ok(adv)
    }

    /// Replaces the rating on an existing record and bumps its revision
    /// by exactly one. Allowed for the record's owner and for raters;
    /// id, title, author and content hash never change.
    pub fn revise_rating(
        &mut self,
        adv_id: &str,
        new_rating: RatingElement,
        cred: &Credential,
    ) -> Result<DocumentAdvertisement, StoreError> {
        let role = self.registry.verify(cred)?;
        if role == Role::Reader {
            return Err(StoreError::Unauthorized("reader role may not revise".into()));
        }
        let record = self
            .records
            .get(adv_id)
            .ok_or_else(|| StoreError::NotFound(adv_id.to_string()))?;
        if role != Role::Rater && record.owner != cred.principal_id {
            return Err(StoreError::Unauthorized(
                "only the owner or a rater may revise this rating".into(),
            ));
        }
        let mut updated = record.clone();
        updated.advertisement.rating = Some(new_rating);
        updated.advertisement.revision += 1;
        self.persist(&updated)?;
        let adv = updated.advertisement.clone();
        self.records.insert(adv_id.to_string(), updated);
        Ok(adv)
    }

    /// Advertisements whose title or summary contains every keyword as a
    /// whole token, case-insensitively. An empty keyword list matches
    /// nothing. Results come back in id order, latest revision only.
    pub fn match_query(&self, keywords: &[String]) -> Vec<DocumentAdvertisement> {
        if keywords.is_empty() {
            return Vec::new();
        }
        let wanted: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
        self.records
            .values()
            .filter(|record| {
                let adv = &record.advertisement;
                let mut tokens = tokenize(&adv.title);
                tokens.extend(tokenize(&adv.summary));
                wanted.iter().all(|k| tokens.iter().any(|t| t == k))
            })
            .map(|record| record.advertisement.clone())
            .collect()
    }

    /// Exact-id fetch, for downloading after a search.
    pub fn lookup(&self, adv_id: &str) -> Result<&DocumentRecord, StoreError> {
        self.records
            .get(adv_id)
            .ok_or_else(|| StoreError::NotFound(adv_id.to_string()))
    }

    pub fn advertisements(&self) -> impl Iterator<Item = &DocumentAdvertisement> {
        self.records.values().map(|r| &r.advertisement)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes a record to disk atomically (temp file + rename), bytes
    /// first so an interrupted write never leaves an advertisement
    /// pointing at missing content.
    fn persist(&self, record: &DocumentRecord) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let records = dir.join("records");
        let base = records.join(&record.advertisement.id);
        write_atomic(&base.with_extension("bin"), &record.content)?;
        write_atomic(
            &base.with_extension("xml"),
            serialize_advertisement(&record.advertisement).as_bytes(),
        )?;
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Splits text into lowercase alphanumeric tokens; everything else is a
/// separator.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}
