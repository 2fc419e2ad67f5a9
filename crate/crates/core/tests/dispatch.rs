mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use amod_core::bev::RgbImage;
use amod_core::dispatch::*;
use amod_core::dynamics::VehicleState;
use amod_core::fleet::{FleetSnapshot, PassengerRequest, RequestId, VehicleId, VehicleRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rules_match_reimplementation_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let s = common::random_snapshot(&mut rng);
        let t_max = [0.0, 25.0, 40.0][rng.gen_range(0..3)];
        for rule in DispatchRule::ALL {
            let got = rule.apply(&s, t_max);
            assert_eq!(got.pairs, common::oracle_rule(rule.name(), &s, t_max), "{rule} on {s:?}");
            assert!(got.is_distinct());
            assert!(got.reasoning.is_empty());
            assert_eq!(rule.apply(&s, t_max), got, "rule must be deterministic");
        }
    }
}

#[test]
fn mixed_first_without_limit_is_distance_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let s = common::random_snapshot(&mut rng);
        assert_eq!(dispatch_mixed_first(&s, f64::INFINITY), dispatch_distance_first(&s));
    }
}

fn snapshot(vehicles: &[(u32, [f64; 2], f64)], requests: &[(u32, [f64; 2], f64)], now: f64) -> FleetSnapshot {
    let mut s = FleetSnapshot { sim_time: now, ..Default::default() };
    for &(id, p, idle) in vehicles {
        s.vehicles.insert(VehicleId(id), VehicleRecord::idle(VehicleId(id), idle));
        s.states.insert(VehicleId(id), VehicleState::new(p[0], p[1], 0.0, 0.0));
    }
    for &(id, p, t) in requests {
        s.requests.insert(RequestId(id), PassengerRequest::new(RequestId(id), p, [0.0, 0.0], t));
    }
    s
}

fn pairs(p: &[(u32, u32)]) -> Vec<(VehicleId, RequestId)> {
    p.iter().map(|(v, r)| (VehicleId(*v), RequestId(*r))).collect()
}

#[test]
fn rule_examples() {
    let s = snapshot(&[(0, [0.0, 0.0], 0.0), (1, [10.0, 0.0], 0.0)], &[(0, [1.0, 0.0], 0.0), (1, [9.0, 0.0], 0.0)], 0.0);
    assert_eq!(dispatch_distance_first(&s).pairs, pairs(&[(0, 0), (1, 1)]));

    let s = snapshot(&[(0, [0.0, 0.0], 0.0)], &[(0, [5.0, 0.0], 0.0), (1, [0.0, 2.0], 0.0), (2, [9.0, 0.0], 0.0)], 0.0);
    assert_eq!(dispatch_distance_first(&s).pairs, pairs(&[(0, 1)]));

    let s = snapshot(&[(3, [4.0, 0.0], 0.0), (2, [-4.0, 0.0], 0.0)], &[(0, [0.0, 0.0], 0.0)], 0.0);
    assert_eq!(dispatch_distance_first(&s).pairs, pairs(&[(2, 0)]));

    // Longest idle vehicle picks first even though the other one is closer.
    let s = snapshot(&[(0, [0.0, 0.0], 0.0), (1, [9.0, 0.0], 5.0)], &[(0, [10.0, 0.0], 0.0)], 20.0);
    assert_eq!(dispatch_idle_first(&s).pairs, pairs(&[(0, 0)]));

    let s = snapshot(&[(0, [0.0, 0.0], 0.0)], &[(0, [1.0, 0.0], 3.0), (1, [50.0, 0.0], 1.0)], 10.0);
    assert_eq!(dispatch_fcfs(&s).pairs, pairs(&[(0, 1)]));

    // Waiting 30 s and 45 s with a 40 s limit: the overdue one goes first.
    let s = snapshot(&[(0, [0.0, 0.0], 0.0)], &[(0, [1.0, 0.0], 30.0), (1, [60.0, 0.0], 15.0)], 60.0);
    assert_eq!(dispatch_mixed_first(&s, 40.0).pairs, pairs(&[(0, 1)]));
    assert_eq!(dispatch_mixed_first(&s, 50.0).pairs, pairs(&[(0, 0)]));
}

#[test]
fn rule_names_round_trip() {
    for rule in DispatchRule::ALL {
        assert_eq!(rule.name().parse::<DispatchRule>().unwrap(), rule);
    }
    assert!("nearest".parse::<DispatchRule>().is_err());
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    unit((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn item(rng: &mut ChaCha8Rng, tag: usize) -> MemoryItem {
    MemoryItem {
        bev: RgbImage::new(4, 3, [tag as u8, 10, 20]),
        human_message: format!("scene {tag}"),
        ai_message: format!("<pairs>[[{tag},{tag}]]</pairs>"),
        embedding: SceneEmbedding { image: random_unit(rng, 8), text: random_unit(rng, 8) },
    }
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn top_k_matches_full_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let items: Vec<MemoryItem> = (0..20).map(|i| item(&mut rng, i)).collect();
    for trial in 0..10 {
        let query = SceneEmbedding { image: random_unit(&mut rng, 8), text: random_unit(&mut rng, 8) };
        let omega = [0.5, 0.0, 1.0, 0.3][trial % 4];
        let mut oracle: Vec<(f64, usize)> = items
            .iter()
            .enumerate()
            .map(|(i, m)| (omega * cos(&m.embedding.image, &query.image) + (1.0 - omega) * cos(&m.embedding.text, &query.text), i))
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for k in [0, 1, 3, 5, 25] {
            let got = retrieve_top_k(&items, &query, k, omega).unwrap();
            let got_idx: Vec<usize> = got.iter().map(|r| r.index).collect();
            let want: Vec<usize> = oracle.iter().take(k).map(|o| o.1).collect();
            assert_eq!(got_idx, want);
            assert!(got.windows(2).all(|w| w[0].score >= w[1].score));
            for (g, o) in got.iter().zip(&oracle) {
                assert!((g.score - o.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn retrieval_ties_keep_storage_order() {
    let e = SceneEmbedding { image: vec![1.0, 0.0], text: vec![0.0, 1.0] };
    let items: Vec<MemoryItem> = (0..4)
        .map(|i| MemoryItem { bev: RgbImage::new(1, 1, [0, 0, 0]), human_message: i.to_string(), ai_message: String::new(), embedding: e.clone() })
        .collect();
    let got = retrieve_top_k(&items, &e, 3, 0.5).unwrap();
    assert_eq!(got.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn similarity_constructions() {
    let a = SceneEmbedding { image: vec![1.0, 0.0, 0.0], text: vec![0.0, 0.6, 0.8] };
    let b = SceneEmbedding { image: vec![0.0, 1.0, 0.0], text: vec![0.0, 0.6, 0.8] };
    assert_eq!(similarity(&a, &b, 0.5).unwrap(), 0.5);
    assert!((similarity(&a, &a, 0.3).unwrap() - 1.0).abs() < 1e-15);
    let neg = SceneEmbedding { image: vec![-1.0, 0.0, 0.0], text: vec![0.0, -0.6, -0.8] };
    assert!((similarity(&a, &neg, 0.5).unwrap() + 1.0).abs() < 1e-15);
    let zero = SceneEmbedding { image: vec![0.0; 3], text: vec![0.0, 0.6, 0.8] };
    assert_eq!(similarity(&a, &zero, 0.5), Err(EmbeddingError::DegenerateEmbedding));
}

proptest! {
    #[test]
    fn similarity_is_symmetric_and_bounded(
        seed in any::<u64>(),
        omega in 0.0f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = SceneEmbedding { image: random_unit(&mut rng, 16), text: random_unit(&mut rng, 16) };
        let b = SceneEmbedding { image: random_unit(&mut rng, 16), text: random_unit(&mut rng, 16) };
        let ab = similarity(&a, &b, omega).unwrap();
        let ba = similarity(&b, &a, omega).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }
}

#[test]
fn memory_round_trips_through_disk() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mem = MemoryContainer::new();
    for i in 0..3 {
        mem.push(item(&mut rng, i)).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    mem.save(dir.path()).unwrap();
    let loaded = MemoryContainer::load(dir.path()).unwrap();
    assert_eq!(loaded.items(), mem.items());
}

#[test]
fn memory_rejects_bad_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mem = MemoryContainer::new();
    mem.push(item(&mut rng, 0)).unwrap();
    let mut wrong_dim = item(&mut rng, 1);
    wrong_dim.embedding.text = random_unit(&mut rng, 5);
    assert!(mem.push(wrong_dim).is_err());
    let mut not_unit = item(&mut rng, 2);
    not_unit.embedding.image[0] += 0.1;
    assert!(matches!(mem.push(not_unit), Err(EmbeddingError::NotUnitNorm(_))));
    assert_eq!(mem.len(), 1);
}

#[test]
fn hash_embedder_is_deterministic_and_unit() {
    let e = HashEmbedder::default();
    let img = RgbImage::new(16, 16, [30, 60, 90]);
    let a = e.embed_scene(&img, "Vehicle 3 at (1.0, 2.0)");
    let b = e.embed_scene(&img, "Vehicle 3 at (1.0, 2.0)");
    assert_eq!(a, b);
    for v in [&a.image, &a.text] {
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

fn fig6_snapshot() -> FleetSnapshot {
    snapshot(
        &[(6, [0.0, 0.0], 0.0), (8, [40.0, 0.0], 3.0)],
        &[(17, [10.0, 5.0], 12.0), (18, [-20.0, 0.0], 2.0)],
        60.0,
    )
}

fn run_model(client: &ScriptedChatClient, memory: &mut MemoryContainer) -> DispatchOutcome {
    let bev = RgbImage::new(32, 32, [40, 40, 40]);
    dispatch_via_model(&fig6_snapshot(), &bev, client, memory, &HashEmbedder::default(), &ModelParams::default())
}

#[test]
fn scripted_reply_is_decoded_and_remembered() {
    let client = ScriptedChatClient::texts(["CAV 6 is closest to passenger 17.\n<pairs>[[6,17]]</pairs>"]);
    let mut memory = MemoryContainer::new();
    let out = run_model(&client, &mut memory);
    assert_eq!(out.fallback, None);
    assert_eq!(out.decision.pairs, pairs(&[(6, 17)]));
    assert!(out.decision.reasoning.contains("closest"));
    assert_eq!(memory.len(), 1);
    let sent = client.received();
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0].turns.len(), 1);
    assert!(sent[0].turns[0].image.is_some());
}

#[test]
fn timeout_and_garbage_fall_back_to_mixed_first() {
    let client = ScriptedChatClient::new([
        ScriptedResponse::Error { error: "timeout".into() },
        ScriptedResponse::Text { text: "I cannot decide.".into() },
    ]);
    let mut memory = MemoryContainer::new();
    let expected = dispatch_mixed_first(&fig6_snapshot(), 40.0);
    for _ in 0..3 {
        let out = run_model(&client, &mut memory);
        assert!(out.fallback.is_some());
        assert_eq!(out.decision, expected);
    }
    assert!(memory.is_empty());
}

#[test]
fn invalid_model_pairs_are_filtered() {
    let mut s = fig6_snapshot();
    s.vehicles.get_mut(&VehicleId(8)).unwrap().free = false;
    let got = filter_valid_pairs(&s, &pairs(&[(8, 17), (6, 99), (6, 17), (6, 18)]));
    assert_eq!(got, pairs(&[(6, 17)]));
}

#[test]
fn memories_become_few_shot_turns() {
    let client = ScriptedChatClient::texts(["<pairs>[[6,17]]</pairs>", "<pairs>[[8,18]]</pairs>", "<pairs>[]</pairs>"]);
    let mut memory = MemoryContainer::new();
    run_model(&client, &mut memory);
    run_model(&client, &mut memory);
    run_model(&client, &mut memory);
    let sent = client.received();
    assert_eq!(sent[2].turns.len(), 5);
    assert_eq!(sent[2].turns[0].role, Role::User);
    assert_eq!(sent[2].turns[1].role, Role::Assistant);
    assert_eq!(memory.len(), 3);
}

/// Serves one canned HTTP response and hands back the raw request.
fn one_shot_server(status: &str, body: &str, delay: Duration) -> (String, std::thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (status, body) = (status.to_string(), body.to_string());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream);
        let mut head = String::new();
        let mut length = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            head.push_str(&line);
            if line == "\r\n" {
                break;
            }
        }
        let mut payload = vec![0u8; length];
        reader.read_exact(&mut payload).unwrap();
        std::thread::sleep(delay);
        let mut stream = reader.into_inner();
        let reply = format!("HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len());
        let _ = stream.write_all(reply.as_bytes());
        head + &String::from_utf8(payload).unwrap()
    });
    (url, handle)
}

fn small_request() -> ChatRequest {
    ChatRequest {
        system: "sys".into(),
        turns: vec![ChatTurn { role: Role::User, text: "hello".into(), image: Some(RgbImage::new(2, 2, [1, 2, 3])) }],
    }
}

#[test]
fn http_client_speaks_chat_completions() {
    let (url, server) = one_shot_server("200 OK", r#"{"choices":[{"message":{"content":"<pairs>[[1,2]]</pairs>"}}]}"#, Duration::ZERO);
    let mut client = HttpChatClient::new(url, "test-model");
    client.api_key = Some("secret".into());
    assert_eq!(client.complete(&small_request()).unwrap(), "<pairs>[[1,2]]</pairs>");
    let raw = server.join().unwrap();
    assert!(raw.starts_with("POST /v1/chat/completions"));
    assert!(raw.to_ascii_lowercase().contains("authorization: bearer secret"));
    let body: serde_json::Value = serde_json::from_str(&raw[raw.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
    let url = body["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
    assert!(url.starts_with("data:image/png;base64,"));
}

#[test]
fn http_client_reports_failures() {
    let (url, server) = one_shot_server("500 Internal Server Error", "{}", Duration::ZERO);
    assert!(matches!(HttpChatClient::new(url, "m").complete(&small_request()), Err(ChatError::Transport(_))));
    server.join().unwrap();

    let (url, server) = one_shot_server("200 OK", r#"{"choices":[]}"#, Duration::ZERO);
    assert!(matches!(HttpChatClient::new(url, "m").complete(&small_request()), Err(ChatError::Protocol(_))));
    server.join().unwrap();

    let (url, server) = one_shot_server("200 OK", "{}", Duration::from_millis(800));
    let mut client = HttpChatClient::new(url, "m");
    client.timeout = Duration::from_millis(200);
    assert_eq!(client.complete(&small_request()), Err(ChatError::Timeout));
    server.join().unwrap();
}
