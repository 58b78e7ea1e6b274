use std::collections::BTreeSet;
use std::sync::Arc;

use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

use spatial_env::harness::LoadedScene;
use spatial_env::pipeline::{verify, QuestionInput};
use spatial_env::protocol::{Response, SceneInfo};
use spatial_env::question::{AliasTable, RegionOntology, TemplateExtractor};
use spatial_env::scene::{generate_synthetic_scene, GeneratorSpec, MIN_VISIBILITY};
use spatial_env::tasks::ContextRef;
use spatial_env::wire::to_canonical_string;
use spatial_env_service::{http_router, serve_lines, serve_tcp, Service, ServiceConfig};

fn service_with_scene() -> (Arc<Service>, SceneInfo) {
    let svc = Service::new(ServiceConfig::default());
    let scene = generate_synthetic_scene(&GeneratorSpec::default(), 4).unwrap();
    let info = svc.insert_scene(LoadedScene::new(scene, MIN_VISIBILITY));
    (Arc::new(svc), info)
}

fn verify_line(id: usize, info: &SceneInfo) -> String {
    let label = info.labels.iter().nth(id % info.labels.len()).unwrap();
    json!({
        "id": format!("q{id}"),
        "op": "verify",
        "payload": {
            "task": "object_counting",
            "context": {"scene_id": info.scene_id},
            "question": {"text": format!("How many {label}s are in the room?")}
        }
    })
    .to_string()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn pipelined_requests_get_one_response_each() {
    let (svc, info) = service_with_scene();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_tcp(svc, listener, async {
        let _ = stop_rx.await;
    }));

    let stream = TcpStream::connect(addr).await.unwrap();
    let (r, mut w) = stream.into_split();
    let n = 1000;
    let writer = tokio::spawn(async move {
        for i in 0..n {
            w.write_all(verify_line(i, &info).as_bytes()).await.unwrap();
            w.write_all(b"\n").await.unwrap();
        }
        w.write_all(b"this is not json\n").await.unwrap();
        w.shutdown().await.unwrap();
    });
    let mut lines = BufReader::new(r).lines();
    let mut ids = Vec::new();
    while let Some(line) = lines.next_line().await.unwrap() {
        let resp: Response = serde_json::from_str(&line).unwrap();
        ids.push(resp.id);
    }
    writer.await.unwrap();
    stop_tx.send(()).unwrap();
    server.await.unwrap().unwrap();

    assert_eq!(ids.len(), n + 1);
    let unique: BTreeSet<&String> = ids.iter().collect();
    assert_eq!(unique.len(), n + 1);
    assert!(unique.contains(&String::new()));
    for i in 0..n {
        assert!(unique.contains(&format!("q{i}")));
    }
}

#[tokio::test]
async fn verdicts_match_library_encoding() {
    let (svc, info) = service_with_scene();
    let scene = generate_synthetic_scene(&GeneratorSpec::default(), 4).unwrap();
    let loaded = LoadedScene::new(scene, MIN_VISIBILITY);
    let (ont, al) = (RegionOntology::default(), AliasTable::default());

    let input: Vec<u8> = (0..20).flat_map(|i| format!("{}\n", verify_line(i, &info)).into_bytes()).collect();
    let (client, server_end) = tokio::io::duplex(1 << 20);
    let (mut out_r, out_w) = tokio::io::split(client);
    serve_lines(svc, BufReader::new(&input[..]), server_end).await.unwrap();
    drop(out_w);
    let mut raw = String::new();
    tokio::io::AsyncReadExt::read_to_string(&mut out_r, &mut raw).await.unwrap();

    for line in raw.lines() {
        let resp: Value = serde_json::from_str(line).unwrap();
        let i: usize = resp["id"].as_str().unwrap()[1..].parse().unwrap();
        let label = info.labels.iter().nth(i % info.labels.len()).unwrap();
        let expected = verify(
            &QuestionInput::Text(format!("How many {label}s are in the room?")),
            "object_counting",
            &ContextRef::scene(&info.scene_id),
            loaded.env(&ont, &al),
            &TemplateExtractor,
        );
        let got = to_canonical_string(&resp["result"]).unwrap();
        assert_eq!(got, to_canonical_string(&expected).unwrap());
        // The response line embeds the verdict bytes verbatim.
        assert!(line.contains(&got));
    }
    assert_eq!(raw.lines().count(), 20);
}

#[tokio::test]
async fn http_routes_answer() {
    let (svc, _) = service_with_scene();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(async move { axum::serve(listener, http_router(svc)).await });

    async fn http(addr: std::net::SocketAddr, request: String) -> String {
        let mut s = TcpStream::connect(addr).await.unwrap();
        s.write_all(request.as_bytes()).await.unwrap();
        let mut out = String::new();
        tokio::io::AsyncReadExt::read_to_string(&mut s, &mut out).await.unwrap();
        out
    }
    let health = http(addr, "GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n".into()).await;
    assert!(health.starts_with("HTTP/1.1 200") && health.ends_with("ok"));

    let body = r#"[{"id":"a","op":"ping"},{"id":"b","op":"nope"}]"#;
    let req = format!(
        "POST /v1/rpc HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let resp = http(addr, req).await;
    let json_part = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
    let answers: Vec<Response> = serde_json::from_str(json_part).unwrap();
    assert_eq!(answers[0].id, "a");
    assert!(answers[0].ok);
    assert_eq!(answers[1].id, "b");
    assert!(!answers[1].ok);
    server.abort();
}
