use std::net::SocketAddr;
use std::sync::Arc;

use spatial_env::pipeline::QuestionInput;
use spatial_env::protocol::{Call, ErrorCode, FeasiblePayload};
use spatial_env::question::{render_question, sample_params, PoolView, RegionOntology};
use spatial_env::scene::{generate_synthetic_scene, GeneratorSpec, MIN_VISIBILITY};
use spatial_env::tasks::ContextRef;
use spatial_env_client::{ClientError, EnvClient};
use spatial_env_service::{serve_tcp, Service, ServiceConfig};

fn start_server() -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let svc = Arc::new(Service::new(ServiceConfig::default()));
            serve_tcp(svc, listener, std::future::pending()).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

#[test]
fn environment_loop_over_tcp() {
    let mut c = EnvClient::connect(start_server()).unwrap();
    assert_eq!(c.ping().unwrap().engine, "spatial-env");

    let spec = GeneratorSpec::default();
    let info = c.gen_scene(2, spec.clone()).unwrap();
    let ctx = ContextRef::pair(&info.scene_id, info.frames[0], info.frames[1]);
    let feasible = c.feasible(&ctx).unwrap();
    assert!(!feasible.is_empty());

    // Local copy of the same scene to author questions against.
    let scene = generate_synthetic_scene(&spec, 2).unwrap();
    let pools = spatial_env::scene::build_grounded_pools(&scene, MIN_VISIBILITY);
    let ontology = RegionOntology::default();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);

    let mut verified = 0;
    for _ in 0..20 {
        let s = c.sample_task("loop", None, Some(ctx.clone())).unwrap();
        assert!(feasible.contains(&s.task));
        let view = PoolView::new(&scene, &pools, &ctx);
        let Some(params) = sample_params(s.task, &view, &ontology, &mut rng) else { continue };
        let text = render_question(s.task, &params).unwrap();
        let verdict = c.verify(s.task.id(), &ctx, QuestionInput::Text(text.clone())).unwrap();
        let output = format!("<observation>Objects sit left of the wall.</observation><question>{text}</question>");
        let rq = c.score_questioner(&output, &verdict).unwrap();
        assert!(rq.r_q >= 0.0);
        if verdict.valid {
            let solved = c.solve(s.task.id(), &ctx, params).unwrap();
            assert_eq!(Some(&solved.ground_truth), verdict.ground_truth.as_ref());
            let ra = c.score_solver("<answer>???</answer>", &verdict).unwrap();
            assert!(ra.r_a <= 0.1 + 1e-12);
            verified += 1;
        }
        let u = c.update_stats("loop", s.task, 0.5, 1.0, !verdict.valid).unwrap();
        assert!(u.stats.n >= 1.0);
    }
    assert!(verified > 0);
}

#[test]
fn batches_keep_request_order() {
    let mut c = EnvClient::connect(start_server()).unwrap();
    let info = c.gen_scene(5, GeneratorSpec::default()).unwrap();
    let mut calls = Vec::new();
    for i in 0..200 {
        calls.push(if i % 3 == 0 {
            Call::Ping
        } else {
            Call::Feasible(FeasiblePayload {
                context: ContextRef::single(&info.scene_id, info.frames[i % info.frames.len()]),
            })
        });
    }
    let responses = c.batch(&calls).unwrap();
    assert_eq!(responses.len(), calls.len());
    for (i, r) in responses.iter().enumerate() {
        assert!(r.ok, "{i}: {:?}", r.error);
        assert_eq!(r.result.as_ref().unwrap().get("engine").is_some(), i % 3 == 0);
    }
}

#[test]
fn remote_errors_surface_with_codes() {
    let mut c = EnvClient::connect(start_server()).unwrap();
    let err = c.feasible(&ContextRef::scene("missing")).unwrap_err();
    match err {
        ClientError::Remote(e) => assert_eq!(e.code, ErrorCode::UnknownScene),
        other => panic!("unexpected {other}"),
    }
}
