//! The querying peer's pipeline: fan a query out, gather the responses,
//! extract ratings, deduplicate by advertisement id, and sort locally.
//!
//! Everything that costs relevance work happens here, on the issuing
//! node. Responders only ever string-match and serialize. Malformed
//! advertisement payloads coming back from the network are skipped and
//! counted rather than failing the search; a decentralized network has
//! to tolerate bad actors.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use crate::advert::{parse_advertisement, serialize_advertisement, DocumentAdvertisement};
use crate::network::{PeerId, QueryRequest, QueryResponse};
use crate::relevance::{relevance_key, RelevanceKey, UserProfile};

/// One ranked search hit: the winning advertisement for its id, every
/// peer that returned a copy, and the locally computed sort key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub advertisement: DocumentAdvertisement,
    pub sources: BTreeSet<PeerId>,
    pub key: RelevanceKey,
}

/// Two peers returned the same advertisement id at the same revision with
/// different bytes. The search still succeeds; the lexicographically
/// smallest canonical XML wins so every querying peer picks the same copy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConflictWarning {
    pub id: String,
    pub revision: u64,
}

/// Counters for one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Responses that arrived before the timeout.
    pub responses_collected: usize,
    /// Advertisement payloads seen across all responses.
    pub payloads_seen: usize,
    /// Payloads that failed to parse and were skipped.
    pub skipped_payloads: u64,
    /// Relevance keys computed (one per deduplicated result).
    pub keys_computed: u64,
    /// Responses discarded for echoing the wrong query id.
    pub mismatched_responses: usize,
}

/// Everything a search produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOutcome {
    pub query_id: String,
    pub results: Vec<SearchResult>,
    pub conflicts: Vec<ConflictWarning>,
    pub stats: SearchStats,
}

/// Collapses copies of the same advertisement id down to one entry,
/// keeping the highest revision and the union of sources. Equal-revision
/// copies must be byte-identical in canonical form; otherwise a
/// [`ConflictWarning`] is recorded and the smallest canonical XML wins.
/// Output is unsorted (id order).
pub fn dedupe(
    items: Vec<(DocumentAdvertisement, PeerId)>,
) -> (Vec<(DocumentAdvertisement, BTreeSet<PeerId>)>, Vec<ConflictWarning>) {
    struct Entry {
        advertisement: DocumentAdvertisement,
        canonical: String,
        sources: BTreeSet<PeerId>,
    }

    let mut groups: BTreeMap<String, Entry> = BTreeMap::new();
    let mut conflicts: BTreeSet<ConflictWarning> = BTreeSet::new();

    for (adv, source) in items {
        let canonical = serialize_advertisement(&adv);
        match groups.get_mut(&adv.id) {
            None => {
                groups.insert(
                    adv.id.clone(),
                    Entry {
                        canonical,
                        sources: BTreeSet::from([source]),
                        advertisement: adv,
                    },
                );
            }
            Some(entry) => {
                entry.sources.insert(source);
                let current = entry.advertisement.revision;
                if adv.revision > current {
                    entry.advertisement = adv;
                    entry.canonical = canonical;
                } else if adv.revision == current && canonical != entry.canonical {
                    conflicts.insert(ConflictWarning {
                        id: adv.id.clone(),
                        revision: adv.revision,
                    });
                    if canonical < entry.canonical {
                        entry.advertisement = adv;
                        entry.canonical = canonical;
                    }
                }
            }
        }
    }

    let deduped = groups
        .into_values()
        .map(|e| (e.advertisement, e.sources))
        .collect();
    (deduped, conflicts.into_iter().collect())
}

/// The local half of a search: parses every payload from the collected
/// responses, deduplicates, computes one relevance key per surviving
/// advertisement, and sorts ascending by key. Order of the incoming
/// responses never affects the output.
pub fn assemble_results(
    query_id: &str,
    responses: Vec<(PeerId, QueryResponse)>,
    profile: &UserProfile,
) -> SearchOutcome {
    let mut stats = SearchStats::default();
    let mut hits: Vec<(DocumentAdvertisement, PeerId)> = Vec::new();

    for (peer, response) in responses {
        if response.query_id != query_id {
            stats.mismatched_responses += 1;
            continue;
        }
        stats.responses_collected += 1;
        for payload in &response.advertisements {
            stats.payloads_seen += 1;
            match parse_advertisement(payload) {
                Ok(adv) => hits.push((adv, peer.clone())),
                Err(_) => stats.skipped_payloads += 1,
            }
        }
    }

    let (deduped, conflicts) = dedupe(hits);
    let mut results: Vec<SearchResult> = deduped
        .into_iter()
        .map(|(advertisement, sources)| {
            stats.keys_computed += 1;
            let key = relevance_key(advertisement.rating.as_ref(), &advertisement.id, profile);
            SearchResult {
                advertisement,
                sources,
                key,
            }
        })
        .collect();
    results.sort_by(|a, b| a.key.cmp(&b.key));

    SearchOutcome {
        query_id: query_id.to_string(),
        results,
        conflicts,
        stats,
    }
}

/// Transport abstraction for issuing one query and collecting whatever
/// responses arrive in time, in arrival order.
pub trait QueryTransport {
    fn broadcast_query(
        &mut self,
        request: &QueryRequest,
        timeout: Duration,
    ) -> Vec<(PeerId, QueryResponse)>;
}

/// Full search against a transport: build the request, fan out, and run
/// the local pipeline on what came back. Transport losses reduce recall
/// but never fail the search.
pub fn search(
    transport: &mut dyn QueryTransport,
    query_id: String,
    keywords: Vec<String>,
    profile: &UserProfile,
    timeout: Duration,
) -> SearchOutcome {
    let request = QueryRequest {
        query_id: query_id.clone(),
        keywords,
    };
    let responses = transport.broadcast_query(&request, timeout);
    assemble_results(&query_id, responses, profile)
}

/// Machine-diffable output: one result per line,
/// `rank<TAB>id<TAB>citations<TAB>level<TAB>descriptor<TAB>title`, ranks
/// from 1, `-` for the rating columns of unrated documents. Byte
/// deterministic for a fixed result list.
pub fn render_lines(results: &[SearchResult]) -> String {
    let mut out = String::new();
    for (index, result) in results.iter().enumerate() {
        let adv = &result.advertisement;
        let (citations, level, descriptor) = match &adv.rating {
            Some(r) => (r.citations.to_string(), r.level.to_string(), r.descriptor.to_string()),
            None => ("-".to_string(), "-".to_string(), "-".to_string()),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            index + 1,
            adv.id,
            citations,
            level,
            descriptor,
            adv.title
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advert::{Descriptor, Level, RatingElement};

    fn adv(id: &str, revision: u64, rating: Option<RatingElement>) -> DocumentAdvertisement {
        DocumentAdvertisement::new(id, format!("title {id}"), "", "a", "00", rating, revision)
            .unwrap()
    }

    fn peer(name: &str) -> PeerId {
        PeerId::new(name)
    }

    fn profile() -> UserProfile {
        UserProfile::new(Level::C, Some(Descriptor::G))
    }

    #[test]
    fn dedupe_keeps_max_revision_and_unions_sources() {
        let (deduped, conflicts) = dedupe(vec![
            (adv("urn:a", 1, None), peer("p1")),
            (adv("urn:a", 2, None), peer("p2")),
        ]);
        assert!(conflicts.is_empty());
        assert_eq!(deduped.len(), 1);
        assert_eq!(deduped[0].0.revision, 2);
        assert_eq!(deduped[0].1, BTreeSet::from([peer("p1"), peer("p2")]));
    }

    #[test]
    fn dedupe_of_nothing_is_nothing() {
        let (deduped, conflicts) = dedupe(vec![]);
        assert!(deduped.is_empty());
        assert!(conflicts.is_empty());
    }

    #[test]
    fn same_revision_different_bytes_warns_and_picks_smallest() {
        let a = adv("urn:a", 1, None);
        let mut b = a.clone();
        b.summary = "zzz".into();
        let smaller = if serialize_advertisement(&a) < serialize_advertisement(&b) {
            a.clone()
        } else {
            b.clone()
        };
        // Winner does not depend on arrival order.
        for items in [
            vec![(a.clone(), peer("p1")), (b.clone(), peer("p2"))],
            vec![(b.clone(), peer("p2")), (a.clone(), peer("p1"))],
        ] {
            let (deduped, conflicts) = dedupe(items);
            assert_eq!(conflicts, vec![ConflictWarning { id: "urn:a".into(), revision: 1 }]);
            assert_eq!(deduped[0].0, smaller);
            assert_eq!(deduped[0].1.len(), 2);
        }
    }

    #[test]
    fn dedupe_is_idempotent_under_source_flattening() {
        let items = vec![
            (adv("urn:a", 1, None), peer("p1")),
            (adv("urn:a", 2, None), peer("p2")),
            (adv("urn:b", 1, None), peer("p1")),
        ];
        let (once, _) = dedupe(items);
        let flattened: Vec<(DocumentAdvertisement, PeerId)> = once
            .iter()
            .flat_map(|(a, sources)| sources.iter().map(move |s| (a.clone(), s.clone())))
            .collect();
        let (twice, conflicts) = dedupe(flattened);
        assert_eq!(once, twice);
        assert!(conflicts.is_empty());
    }

    fn response(query_id: &str, advs: &[&DocumentAdvertisement]) -> QueryResponse {
        QueryResponse {
            query_id: query_id.into(),
            advertisements: advs.iter().map(|a| serialize_advertisement(a)).collect(),
        }
    }

    #[test]
    fn assemble_dedupes_across_peers_at_max_revision() {
        let rev1 = adv("urn:a", 1, None);
        let mut rev2 = rev1.clone();
        rev2.revision = 2;
        rev2.rating = Some(RatingElement::new(4, Level::C, Descriptor::G));
        let outcome = assemble_results(
            "q",
            vec![
                (peer("p1"), response("q", &[&rev1])),
                (peer("p2"), response("q", &[&rev2])),
            ],
            &profile(),
        );
        assert_eq!(outcome.results.len(), 1);
        let result = &outcome.results[0];
        assert_eq!(result.advertisement.revision, 2);
        assert_eq!(result.sources, BTreeSet::from([peer("p1"), peer("p2")]));
        assert_eq!(outcome.stats.keys_computed, 1);
    }

    #[test]
    fn assemble_with_no_responses_is_empty() {
        let outcome = assemble_results("q", vec![], &profile());
        assert!(outcome.results.is_empty());
        assert_eq!(outcome.stats, SearchStats::default());
    }

    #[test]
    fn assemble_orders_like_the_comparator() {
        let docs = [
            adv("urn:d1", 1, Some(RatingElement::new(10, Level::C, Descriptor::G))),
            adv("urn:d2", 1, Some(RatingElement::new(50, Level::C, Descriptor::G))),
            adv("urn:d3", 1, Some(RatingElement::new(100, Level::C, Descriptor::F))),
            adv("urn:d4", 1, Some(RatingElement::new(50, Level::D, Descriptor::G))),
        ];
        let outcome = assemble_results(
            "q",
            vec![(peer("p1"), response("q", &docs.iter().collect::<Vec<_>>()))],
            &profile(),
        );
        let ids: Vec<&str> = outcome
            .results
            .iter()
            .map(|r| r.advertisement.id.as_str())
            .collect();
        assert_eq!(ids, ["urn:d2", "urn:d1", "urn:d4", "urn:d3"]);
    }

    #[test]
    fn corrupt_payloads_are_skipped_not_fatal() {
        let good = adv("urn:good", 1, None);
        let mut resp = response("q", &[&good]);
        resp.advertisements.push("!corrupt!<not xml".into());
        resp.advertisements.push("<r2p2p:DocumentAdvertisement".into());
        let outcome = assemble_results("q", vec![(peer("p1"), resp)], &profile());
        assert_eq!(outcome.results.len(), 1);
        assert_eq!(outcome.stats.skipped_payloads, 2);
        assert_eq!(outcome.stats.payloads_seen, 3);
    }

    #[test]
    fn responses_with_wrong_query_id_are_discarded() {
        let good = adv("urn:good", 1, None);
        let outcome = assemble_results(
            "q-expected",
            vec![(peer("p1"), response("q-other", &[&good]))],
            &profile(),
        );
        assert!(outcome.results.is_empty());
        assert_eq!(outcome.stats.mismatched_responses, 1);
    }

    #[test]
    fn arrival_order_never_changes_the_outcome() {
        let d1 = adv("urn:d1", 1, Some(RatingElement::new(1, Level::A, Descriptor::E)));
        let d2 = adv("urn:d2", 1, Some(RatingElement::new(2, Level::B, Descriptor::F)));
        let forward = assemble_results(
            "q",
            vec![
                (peer("p1"), response("q", &[&d1])),
                (peer("p2"), response("q", &[&d2])),
            ],
            &profile(),
        );
        let backward = assemble_results(
            "q",
            vec![
                (peer("p2"), response("q", &[&d2])),
                (peer("p1"), response("q", &[&d1])),
            ],
            &profile(),
        );
        assert_eq!(forward.results, backward.results);
    }

    #[test]
    fn lines_format_is_exact() {
        let rated = adv("urn:d1", 1, Some(RatingElement::new(12, Level::C, Descriptor::G)));
        let unrated = adv("urn:d2", 1, None);
        let outcome = assemble_results(
            "q",
            vec![(peer("p1"), response("q", &[&rated, &unrated]))],
            &profile(),
        );
        assert_eq!(
            render_lines(&outcome.results),
            "1\turn:d1\t12\tC\tG\ttitle urn:d1\n2\turn:d2\t-\t-\t-\ttitle urn:d2\n"
        );
        assert_eq!(render_lines(&[]), "");
    }
}
