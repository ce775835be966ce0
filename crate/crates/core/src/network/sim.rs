//! Deterministic in-process network simulator.
//!
//! Single-threaded, driven by a seeded event queue: identical seeds and
//! workloads produce identical delivery orders, identical message traces,
//! and identical search results. The fault policy can delay responses,
//! drop them (probabilistically or for a fixed set of peers), and corrupt
//! individual advertisement payloads; corruption is counted so tests can
//! check the querying peer's skip counter against it exactly.
//!
//! Each peer carries two counters. `messages_handled` counts messages the
//! peer processed as a responder; `relevance_key_calls` counts relevance
//! keys computed on the peer's behalf. Responders never compute keys, so
//! the second counter stays at zero on every peer that only answers
//! queries. That is the load contract this simulator exists to observe.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{handle_message, Message, PeerId, QueryRequest, QueryResponse, PROTOCOL_VERSION};
use crate::queryengine::{self, SearchOutcome};
use crate::relevance::UserProfile;
use crate::store::Store;

/// Loss and delay knobs for a simulated run.
#[derive(Debug, Clone)]
pub struct FaultPolicy {
    /// Probability that a response is dropped in transit.
    pub response_drop_prob: f64,
    /// Probability that each advertisement payload in a delivered
    /// response is replaced with garbage.
    pub payload_corrupt_prob: f64,
    /// Responses from these peers are always dropped.
    pub force_drop_responses_from: BTreeSet<PeerId>,
    /// Per-hop delay is drawn uniformly from `1..=max_delay` ticks.
    pub max_delay: u64,
}

impl Default for FaultPolicy {
    fn default() -> Self {
        FaultPolicy {
            response_drop_prob: 0.0,
            payload_corrupt_prob: 0.0,
            force_drop_responses_from: BTreeSet::new(),
            max_delay: 3,
        }
    }
}

/// Per-peer observability counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeerMetrics {
    /// Messages this peer processed as a responder.
    pub messages_handled: u64,
    /// Relevance keys computed on this peer's behalf as a query issuer.
    pub relevance_key_calls: u64,
}

/// One simulated node: identity, its store, and counters.
#[derive(Debug)]
pub struct SimPeer {
    pub id: PeerId,
    pub store: Store,
    pub metrics: PeerMetrics,
    next_query_seq: u64,
}

/// A delivered message, kept for invariant checks.
#[derive(Debug, Clone)]
pub struct DeliveredMessage {
    pub tick: u64,
    pub from: PeerId,
    pub to: PeerId,
    pub message: Message,
}

enum SimEvent {
    DeliverRequest { from: PeerId, to: PeerId, msg: Message },
    DeliverResponse { from: PeerId, to: PeerId, msg: Message },
}

/// The simulated network. Must be driven from a single context.
pub struct SimNetwork {
    rng: ChaCha8Rng,
    policy: FaultPolicy,
    peers: BTreeMap<PeerId, SimPeer>,
    clock: u64,
    next_seq: u64,
    trace: Vec<String>,
    delivered: Vec<DeliveredMessage>,
    corrupted_payloads: u64,
    dropped_responses: u64,
}

impl SimNetwork {
    pub fn new(seed: u64, policy: FaultPolicy) -> Self {
        SimNetwork {
            rng: ChaCha8Rng::seed_from_u64(seed),
            policy,
            peers: BTreeMap::new(),
            clock: 0,
            next_seq: 0,
            trace: Vec::new(),
            delivered: Vec::new(),
            corrupted_payloads: 0,
            dropped_responses: 0,
        }
    }

    /// Registers a peer. Panics on duplicate ids; the network needs them
    /// unique.
    pub fn add_peer(&mut self, id: impl Into<PeerId>, store: Store) {
        let id = id.into();
        let previous = self.peers.insert(
            id.clone(),
            SimPeer {
                id: id.clone(),
                store,
                metrics: PeerMetrics::default(),
                next_query_seq: 1,
            },
        );
        assert!(previous.is_none(), "duplicate peer id {id}");
    }

    pub fn peer(&self, id: &PeerId) -> &SimPeer {
        &self.peers[id]
    }

    pub fn peer_mut(&mut self, id: &PeerId) -> &mut SimPeer {
        self.peers.get_mut(id).expect("unknown peer")
    }

    pub fn peer_ids(&self) -> Vec<PeerId> {
        self.peers.keys().cloned().collect()
    }

    /// The full message trace so far, one line per network transition.
    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    /// Every message actually delivered, in delivery order.
    pub fn delivered(&self) -> &[DeliveredMessage] {
        &self.delivered
    }

    /// Advertisement payloads corrupted so far. Only payloads inside
    /// responses that were actually collected count, so this equals the
    /// sum of the issuers' skipped-payload counters.
    pub fn corrupted_payload_count(&self) -> u64 {
        self.corrupted_payloads
    }

    pub fn dropped_response_count(&self) -> u64 {
        self.dropped_responses
    }

    /// Issues a query from `issuer` to every other peer, pumps the event
    /// queue, and runs the full local pipeline (parse, dedupe, rank) on
    /// the issuer's behalf. Responses arriving after `timeout` ticks are
    /// lost. Returns the issuer's search outcome.
    pub fn search_from(
        &mut self,
        issuer: &PeerId,
        keywords: &[&str],
        profile: &UserProfile,
        timeout: u64,
    ) -> SearchOutcome {
        assert!(timeout > 0, "timeout must be positive");
        let targets: Vec<PeerId> = self.peers.keys().filter(|p| *p != issuer).cloned().collect();
        let query_id = {
            let peer = self.peer_mut(issuer);
            let seq = peer.next_query_seq;
            peer.next_query_seq += 1;
            format!("q-{}-{}", peer.id, seq)
        };
        let request = QueryRequest {
            query_id: query_id.clone(),
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
        };
        let issue_tick = self.clock;
        let deadline = issue_tick + timeout;
        self.push_trace(format!(
            "t={issue_tick} issue {issuer} {} targets={}",
            Message::QueryRequest(request.clone()).summary(),
            targets.len()
        ));

        let mut events: BinaryHeap<Reverse<(u64, u64)>> = BinaryHeap::new();
        let mut pending: BTreeMap<(u64, u64), SimEvent> = BTreeMap::new();
        let mut schedule = |events: &mut BinaryHeap<Reverse<(u64, u64)>>,
                            pending: &mut BTreeMap<(u64, u64), SimEvent>,
                            seq: &mut u64,
                            tick: u64,
                            ev: SimEvent| {
            let key = (tick, *seq);
            *seq += 1;
            events.push(Reverse(key));
            pending.insert(key, ev);
        };

        for target in &targets {
            let delay = self.draw_delay();
            schedule(
                &mut events,
                &mut pending,
                &mut self.next_seq,
                issue_tick + delay,
                SimEvent::DeliverRequest {
                    from: issuer.clone(),
                    to: target.clone(),
                    msg: Message::QueryRequest(request.clone()),
                },
            );
        }

        let mut collected: Vec<(PeerId, QueryResponse)> = Vec::new();
        let mut last_tick = issue_tick;

        while let Some(Reverse(key)) = events.pop() {
            let (tick, _) = key;
            last_tick = last_tick.max(tick);
            let event = pending.remove(&key).expect("event bookkeeping");
            match event {
                SimEvent::DeliverRequest { from, to, msg } => {
                    self.push_trace(format!("t={tick} deliver {from}->{to} {}", msg.summary()));
                    self.record_delivery(tick, &from, &to, &msg);
                    let reply = {
                        let peer = self.peer_mut(&to);
                        peer.metrics.messages_handled += 1;
                        handle_message(&msg, &peer.store, &peer.id, PROTOCOL_VERSION)
                            .expect("simulated requests never violate the protocol")
                    };
                    if let Some(reply) = reply {
                        if self.should_drop_response(&to) {
                            self.dropped_responses += 1;
                            self.push_trace(format!(
                                "t={tick} drop {to}->{from} {}",
                                reply.summary()
                            ));
                            continue;
                        }
                        let delay = self.draw_delay();
                        schedule(
                            &mut events,
                            &mut pending,
                            &mut self.next_seq,
                            tick + delay,
                            SimEvent::DeliverResponse {
                                from: to,
                                to: from,
                                msg: reply,
                            },
                        );
                    }
                }
                SimEvent::DeliverResponse { from, to, msg } => {
                    if tick > deadline {
                        self.push_trace(format!("t={tick} expire {from}->{to} {}", msg.summary()));
                        continue;
                    }
                    let Message::QueryResponse(mut resp) = msg else {
                        unreachable!("responders only send query responses here");
                    };
                    self.corrupt_payloads(&mut resp, tick, &from, &to);
                    let msg = Message::QueryResponse(resp.clone());
                    self.push_trace(format!("t={tick} deliver {from}->{to} {}", msg.summary()));
                    self.record_delivery(tick, &from, &to, &msg);
                    collected.push((from, resp));
                }
            }
        }

        self.clock = last_tick.max(deadline);
        let outcome = queryengine::assemble_results(&query_id, collected, profile);
        self.peer_mut(issuer).metrics.relevance_key_calls += outcome.stats.keys_computed;
        self.push_trace(format!(
            "t={} complete {issuer} id={query_id} results={} skipped={}",
            self.clock,
            outcome.results.len(),
            outcome.stats.skipped_payloads
        ));
        outcome
    }

    fn draw_delay(&mut self) -> u64 {
        let max = self.policy.max_delay.max(1);
        self.rng.gen_range(1..=max)
    }

    fn should_drop_response(&mut self, responder: &PeerId) -> bool {
        if self.policy.force_drop_responses_from.contains(responder) {
            return true;
        }
        self.policy.response_drop_prob > 0.0
            && self.rng.gen::<f64>() < self.policy.response_drop_prob
    }

    fn corrupt_payloads(&mut self, resp: &mut QueryResponse, tick: u64, from: &PeerId, to: &PeerId) {
        if self.policy.payload_corrupt_prob <= 0.0 {
            return;
        }
        for (index, payload) in resp.advertisements.iter_mut().enumerate() {
            if self.rng.gen::<f64>() < self.policy.payload_corrupt_prob {
                *payload = format!("!corrupt!{payload}");
                self.corrupted_payloads += 1;
                self.trace
                    .push(format!("t={tick} corrupt {from}->{to} payload={index}"));
            }
        }
    }

    fn record_delivery(&mut self, tick: u64, from: &PeerId, to: &PeerId, msg: &Message) {
        self.delivered.push(DeliveredMessage {
            tick,
            from: from.clone(),
            to: to.clone(),
            message: msg.clone(),
        });
    }

    fn push_trace(&mut self, line: String) {
        self.trace.push(line);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advert::RatingElement;
    use crate::store::{Credential, CredentialRegistry, DigestAlgorithm, Role};

    fn author() -> Credential {
        Credential::new("author", "secret", Role::Author)
    }

    fn seeded_store(namespace: &str, titles: &[&str]) -> Store {
        let mut registry = CredentialRegistry::new(DigestAlgorithm::Sha256);
        registry.insert_token("author", Role::Author, "secret");
        let mut store = Store::in_memory(namespace, registry, DigestAlgorithm::Sha256);
        for (i, title) in titles.iter().enumerate() {
            let rating = RatingElement::from_codes(i as u64, 'A', 'E').unwrap();
            store
                .publish_document(title, "", title.as_bytes(), Some(rating), &author())
                .unwrap();
        }
        store
    }

    fn three_peer_net(seed: u64, policy: FaultPolicy) -> SimNetwork {
        let mut net = SimNetwork::new(seed, policy);
        net.add_peer(PeerId::new("client"), seeded_store("client", &[]));
        net.add_peer(PeerId::new("peer-1"), seeded_store("peer-1", &["alpha doc one", "beta doc"]));
        net.add_peer(PeerId::new("peer-2"), seeded_store("peer-2", &["alpha doc two"]));
        net.add_peer(PeerId::new("peer-3"), seeded_store("peer-3", &["gamma doc"]));
        net
    }

    fn any_profile() -> UserProfile {
        UserProfile::new(crate::advert::Level::A, None)
    }

    #[test]
    fn all_peers_respond_within_timeout() {
        let mut net = three_peer_net(7, FaultPolicy::default());
        let outcome = net.search_from(&PeerId::new("client"), &["doc"], &any_profile(), 100);
        assert_eq!(outcome.stats.responses_collected, 3);
        assert_eq!(outcome.results.len(), 4);
    }

    #[test]
    fn forced_drop_removes_one_response() {
        let mut policy = FaultPolicy::default();
        policy.force_drop_responses_from.insert(PeerId::new("peer-2"));
        let mut net = three_peer_net(7, policy);
        let outcome = net.search_from(&PeerId::new("client"), &["doc"], &any_profile(), 100);
        assert_eq!(outcome.stats.responses_collected, 2);
        assert_eq!(net.dropped_response_count(), 1);
        assert!(outcome.results.iter().all(|r| !r.advertisement.id.contains("peer-2")));
    }

    #[test]
    fn empty_peer_set_yields_empty_result() {
        let mut net = SimNetwork::new(1, FaultPolicy::default());
        net.add_peer(PeerId::new("solo"), seeded_store("solo", &[]));
        let outcome = net.search_from(&PeerId::new("solo"), &["doc"], &any_profile(), 10);
        assert!(outcome.results.is_empty());
        assert_eq!(outcome.stats.responses_collected, 0);
    }

    #[test]
    fn equal_seeds_produce_equal_traces() {
        let run = |seed| {
            let mut policy = FaultPolicy::default();
            policy.response_drop_prob = 0.3;
            policy.payload_corrupt_prob = 0.2;
            let mut net = three_peer_net(seed, policy);
            for issuer in ["client", "peer-1", "client"] {
                net.search_from(&PeerId::new(issuer), &["doc"], &any_profile(), 50);
            }
            net.trace().to_vec()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn responders_never_compute_relevance_keys() {
        let mut net = three_peer_net(3, FaultPolicy::default());
        let client = PeerId::new("client");
        net.search_from(&client, &["doc"], &any_profile(), 100);
        net.search_from(&client, &["alpha"], &any_profile(), 100);
        assert!(net.peer(&client).metrics.relevance_key_calls > 0);
        for id in ["peer-1", "peer-2", "peer-3"] {
            let peer = net.peer(&PeerId::new(id));
            assert_eq!(peer.metrics.relevance_key_calls, 0, "{id}");
            assert!(peer.metrics.messages_handled > 0, "{id}");
        }
    }

    #[test]
    fn delivered_responses_echo_known_query_ids_and_parse() {
        let mut net = three_peer_net(11, FaultPolicy::default());
        let client = PeerId::new("client");
        net.search_from(&client, &["doc"], &any_profile(), 100);
        let mut known_requests = BTreeSet::new();
        for record in net.delivered() {
            match &record.message {
                Message::QueryRequest(q) => {
                    known_requests.insert(q.query_id.clone());
                }
                Message::QueryResponse(r) => {
                    assert!(known_requests.contains(&r.query_id));
                    for payload in &r.advertisements {
                        let adv = crate::advert::parse_advertisement(payload).unwrap();
                        assert_eq!(&crate::advert::serialize_advertisement(&adv), payload);
                    }
                }
                Message::Hello(_) => {}
            }
        }
    }

    #[test]
    fn corruption_count_matches_skipped_payloads() {
        let mut policy = FaultPolicy::default();
        policy.payload_corrupt_prob = 0.5;
        let mut net = three_peer_net(99, policy);
        let client = PeerId::new("client");
        let mut skipped = 0;
        for _ in 0..10 {
            skipped += net.search_from(&client, &["doc"], &any_profile(), 100).stats.skipped_payloads;
        }
        assert!(net.corrupted_payload_count() > 0);
        assert_eq!(skipped, net.corrupted_payload_count());
    }
}
