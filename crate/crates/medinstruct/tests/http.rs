mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::{dead_endpoint, Reply, Stub};
use medinstruct::runner::{
    http_generate, infer_schemes, run_eval, ApiStyle, DecodingParams, EvalOptions, HttpBackend,
    HttpConfig, HttpError,
};
use medinstruct::synth::{dataset, records};
use medinstruct_core::schema::Split;
use medinstruct_core::template::{render_prompt, RESPONSE_HEADER};
use serde_json::json;

fn config(url: &str) -> HttpConfig {
    let mut c = HttpConfig::new(url);
    c.backoff = Duration::from_millis(5);
    c.timeout = Duration::from_secs(5);
    c
}

#[test]
fn request_and_response_shapes() {
    let stub = Stub::scripted(vec![(200, r#"{"text":"Neutral"}"#.into())]);
    let req = DecodingParams::default().request("Premise: a\nHypothesis: b");
    assert_eq!(http_generate(&req, &config(&stub.url)).unwrap(), "Neutral");
    let got = stub.requests();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].method, "POST");
    assert_eq!(
        got[0].json(),
        json!({
            "prompt": "Premise: a\nHypothesis: b",
            "max_new_tokens": 512,
            "temperature": 0.0,
            "stop": ["###"],
        })
    );
    assert!(got[0]
        .header("content-type")
        .unwrap()
        .starts_with("application/json"));
    assert!(got[0].header("authorization").is_none());
}

#[test]
fn bearer_token_sent_when_configured() {
    let stub = Stub::scripted(vec![(200, r#"{"text":"x"}"#.into())]);
    let mut c = config(&stub.url);
    c.token = Some("s3cret".into());
    http_generate(&DecodingParams::default().request("p"), &c).unwrap();
    assert_eq!(
        stub.requests()[0].header("authorization"),
        Some("Bearer s3cret")
    );
}

#[test]
fn retries_through_server_errors() {
    let stub = Stub::scripted(vec![
        (500, "oops".into()),
        (500, "oops".into()),
        (200, r#"{"text":"ok"}"#.into()),
    ]);
    assert_eq!(
        http_generate(&DecodingParams::default().request("p"), &config(&stub.url)).unwrap(),
        "ok"
    );
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn gives_up_after_max_attempts_with_backoff() {
    let stub = Stub::scripted(vec![(503, "down".into())]);
    let mut c = config(&stub.url);
    c.backoff = Duration::from_millis(40);
    let start = Instant::now();
    let err = http_generate(&DecodingParams::default().request("p"), &c).unwrap_err();
    assert!(
        matches!(err, HttpError::Exhausted { attempts: 3, .. }),
        "{err}"
    );
    assert_eq!(stub.requests().len(), 3);
    // Two waits: 40 ms, then 80 ms.
    assert!(start.elapsed() >= Duration::from_millis(120));
}

#[test]
fn client_errors_and_bad_json_are_not_retried() {
    let stub = Stub::scripted(vec![(400, "{}".into())]);
    let err =
        http_generate(&DecodingParams::default().request("p"), &config(&stub.url)).unwrap_err();
    assert_eq!(err, HttpError::Status(400));
    assert_eq!(stub.requests().len(), 1);

    let stub = Stub::scripted(vec![(200, "not json".into())]);
    let err =
        http_generate(&DecodingParams::default().request("p"), &config(&stub.url)).unwrap_err();
    assert!(matches!(err, HttpError::BadResponse(_)));
    assert_eq!(stub.requests().len(), 1);

    let stub = Stub::scripted(vec![(200, r#"{"txt":"x"}"#.into())]);
    assert!(http_generate(&DecodingParams::default().request("p"), &config(&stub.url)).is_err());
}

#[test]
fn timeout_is_retried() {
    let stub = Stub::spawn(|_, i| {
        let r = Reply::text("late ok");
        if i == 0 {
            r.delayed(Duration::from_millis(800))
        } else {
            r
        }
    });
    let mut c = config(&stub.url);
    c.timeout = Duration::from_millis(250);
    assert_eq!(
        http_generate(&DecodingParams::default().request("p"), &c).unwrap(),
        "late ok"
    );
    assert_eq!(stub.requests().len(), 2);
}

#[test]
fn dead_endpoint_exhausts() {
    let err = http_generate(
        &DecodingParams::default().request("p"),
        &config(&dead_endpoint()),
    )
    .unwrap_err();
    assert!(matches!(err, HttpError::Exhausted { attempts: 3, .. }));
}

#[test]
fn chat_adapter_shape() {
    let stub = Stub::scripted(vec![(
        200,
        r#"{"choices":[{"message":{"role":"assistant","content":"Entailment"}}]}"#.into(),
    )]);
    let mut c = config(&stub.url);
    c.api = ApiStyle::Chat;
    c.model = Some("m".into());
    let text = HttpBackend::new(c)
        .send(&DecodingParams::default().request("hello"))
        .unwrap();
    assert_eq!(text, "Entailment");
    assert_eq!(
        stub.requests()[0].json(),
        json!({
            "model": "m",
            "messages": [{"role": "user", "content": "hello"}],
            "max_tokens": 512,
            "temperature": 0.0,
            "stop": ["###"],
        })
    );
}

#[test]
fn eval_over_http_never_sends_gold() {
    let mut recs = records(dataset("ncbi-disease").unwrap(), Split::Test, 20, 4);
    recs.extend(records(dataset("mednli").unwrap(), Split::Test, 20, 4));
    let prompts: BTreeMap<String, String> = recs
        .iter()
        .map(|r| (render_prompt(r, false), r.output.clone()))
        .collect();
    // Answers with the gold output, looked up by prompt.
    let lookup = prompts.clone();
    let stub = Stub::spawn(move |req, _| {
        let prompt = req.json()["prompt"].as_str().unwrap().to_string();
        Reply::text(lookup.get(&prompt).map(String::as_str).unwrap_or(""))
    });
    let schemes = infer_schemes(&recs).unwrap();
    let backend = HttpBackend::new(config(&stub.url));
    let options = EvalOptions {
        parallelism: 4,
        ..EvalOptions::default()
    };
    let out = run_eval(&recs, &schemes, &backend, &options).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.report.correct, 40);

    let sent = stub.requests();
    assert_eq!(sent.len(), recs.len());
    for req in sent {
        let prompt = req.json()["prompt"].as_str().unwrap().to_string();
        assert!(prompt.ends_with(RESPONSE_HEADER));
        // Every prompt is an eval rendering: nothing follows the response header.
        let gold = prompts.get(&prompt).expect("prompt is an eval rendering");
        if gold.contains('\n') {
            assert!(!prompt.contains(gold.as_str()));
        }
    }
}
