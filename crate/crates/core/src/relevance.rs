//! User-relative relevance ordering of search results.
//!
//! What counts as relevant depends on who is asking: an undergraduate
//! looking for image processing material wants the basics, a professor
//! wants current research. The rating carried by an advertisement encodes
//! three signals (citations, audience level, document kind) and this
//! module turns them into a strict total order relative to the searching
//! user's profile:
//!
//! 1. rated documents before unrated ones,
//! 2. documents matching the desired kind before mismatches,
//! 3. smaller distance between the document's audience level and the
//!    user's level first,
//! 4. more citations first,
//! 5. advertisement id as the final tie-break.
//!
//! The composition is lexicographic, so every earlier signal strictly
//! dominates the later ones, and the id tie-break makes the order total
//! and reproducible on every node.

use std::cmp::Reverse;

use crate::advert::{Descriptor, DocumentAdvertisement, Level, RatingElement};

/// The four recognized user kinds, each mapped to one audience level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UserEntity {
    BTechStudent,
    MTechStudent,
    ResearchScholar,
    Professor,
}

impl UserEntity {
    pub const ALL: [UserEntity; 4] = [
        UserEntity::BTechStudent,
        UserEntity::MTechStudent,
        UserEntity::ResearchScholar,
        UserEntity::Professor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UserEntity::BTechStudent => "B-Tech Student",
            UserEntity::MTechStudent => "M-Tech Student",
            UserEntity::ResearchScholar => "Research Scholar (PhD)",
            UserEntity::Professor => "Professor",
        }
    }

    pub fn from_name(name: &str) -> Result<UserEntity, UnknownEntity> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| UnknownEntity(name.to_string()))
    }
}

/// The three recognized document kinds, each mapped to one descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DocType {
    Basics,
    Tutorial,
    ResearchPaper,
}

impl DocType {
    pub const ALL: [DocType; 3] = [DocType::Basics, DocType::Tutorial, DocType::ResearchPaper];

    pub fn name(self) -> &'static str {
        match self {
            DocType::Basics => "Basics",
            DocType::Tutorial => "Tutorial",
            DocType::ResearchPaper => "Research paper",
        }
    }

    pub fn from_name(name: &str) -> Result<DocType, UnknownDocType> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| UnknownDocType(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown user entity {0:?}")]
pub struct UnknownEntity(pub String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown document type {0:?}")]
pub struct UnknownDocType(pub String);

/// User kind to audience level. Bijective with [`decode_level`].
pub fn level_code(entity: UserEntity) -> Level {
    match entity {
        UserEntity::BTechStudent => Level::A,
        UserEntity::MTechStudent => Level::B,
        UserEntity::ResearchScholar => Level::C,
        UserEntity::Professor => Level::D,
    }
}

/// Audience level back to the user kind it stands for.
pub fn decode_level(level: Level) -> UserEntity {
    match level {
        Level::A => UserEntity::BTechStudent,
        Level::B => UserEntity::MTechStudent,
        Level::C => UserEntity::ResearchScholar,
        Level::D => UserEntity::Professor,
    }
}

/// Document kind to descriptor. Bijective with [`decode_descriptor`].
pub fn descriptor_code(doc_type: DocType) -> Descriptor {
    match doc_type {
        DocType::Basics => Descriptor::E,
        DocType::Tutorial => Descriptor::F,
        DocType::ResearchPaper => Descriptor::G,
    }
}

/// Descriptor back to the document kind it stands for.
pub fn decode_descriptor(descriptor: Descriptor) -> DocType {
    match descriptor {
        Descriptor::E => DocType::Basics,
        Descriptor::F => DocType::Tutorial,
        Descriptor::G => DocType::ResearchPaper,
    }
}

/// The searching user: their audience level, and optionally the kind of
/// document they are after. No desired kind means every rated document
/// counts as a kind match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserProfile {
    pub level: Level,
    pub desired_descriptor: Option<Descriptor>,
}

impl UserProfile {
    pub fn new(level: Level, desired_descriptor: Option<Descriptor>) -> Self {
        UserProfile {
            level,
            desired_descriptor,
        }
    }
}

/// The sort key for one search result. Derived ordering is lexicographic
/// over the fields in declaration order, which is exactly the ranking
/// rule; ascending key order is best-first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelevanceKey {
    /// `false` for rated documents, so they sort before unrated ones.
    pub unrated: bool,
    /// `false` when the profile has no desired kind or it matches.
    pub descriptor_mismatch: bool,
    /// `|document level - profile level|` on the A..D scale, 0 to 3.
    pub level_distance: u8,
    /// Citations wrapped for descending order; 0 for unrated documents.
    pub citations: Reverse<u64>,
    /// Advertisement id, making the order total.
    pub tiebreak_id: String,
}

/// Computes the sort key for one result. Pure; the caller decides where
/// and how often this runs (per the load contract, only ever on the
/// querying peer).
pub fn relevance_key(
    rating: Option<&RatingElement>,
    adv_id: &str,
    profile: &UserProfile,
) -> RelevanceKey {
    match rating {
        None => RelevanceKey {
            unrated: true,
            descriptor_mismatch: false,
            level_distance: 0,
            citations: Reverse(0),
            tiebreak_id: adv_id.to_string(),
        },
        Some(r) => RelevanceKey {
            unrated: false,
            descriptor_mismatch: profile
                .desired_descriptor
                .is_some_and(|want| want != r.descriptor),
            level_distance: r.level.ordinal().abs_diff(profile.level.ordinal()),
            citations: Reverse(r.citations),
            tiebreak_id: adv_id.to_string(),
        },
    }
}

/// Sorts `(advertisement, source)` pairs into ascending key order. The
/// output is a permutation of the input; the sort is stable, so entries
/// with equal keys keep their input order.
pub fn sort_results<S>(
    mut results: Vec<(DocumentAdvertisement, S)>,
    profile: &UserProfile,
) -> Vec<(DocumentAdvertisement, S)> {
    results.sort_by_cached_key(|(adv, _)| relevance_key(adv.rating.as_ref(), &adv.id, profile));
    results
}
