use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;

use nbeval::corpus::{load_bundle, shipped_corpus_root, TemplateBundle};
use nbeval::gateway::{
    build_prompt, extract_code, Adapter, DefectProfile, ModelClient, ModelConfig, QueryContext, RetryPolicy,
    Temperature, TransportError,
};
use nbeval::template::{instantiate_question, QuestionInstance};

fn sum_even() -> (TemplateBundle, QuestionInstance) {
    let bundle = load_bundle(&shipped_corpus_root(), "sum_even_ints_inclusive").unwrap();
    let valuation = bundle.question.parameter_set(3).unwrap().remove(0);
    let instance = instantiate_question(&bundle.question, 0, &valuation).unwrap();
    (bundle, instance)
}

fn config(adapter: Adapter, temperature: Temperature) -> ModelConfig {
    ModelConfig {
        model_name: "test-model".into(),
        adapter,
        temperature,
        max_tokens: 256,
        retry: RetryPolicy {
            max_attempts: 3,
            backoff_ms: vec![5],
        },
    }
}

/// Serves one canned response per connection and reports each request body.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<serde_json::Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            tx.send(serde_json::from_slice(&request).unwrap()).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), rx)
}

fn http(endpoint: String) -> Adapter {
    Adapter::HttpChat {
        endpoint,
        api_key_env: None,
        max_in_flight: 1,
        requests_per_second: None,
        timeout_seconds: 10,
    }
}

#[test]
fn http_retries_rate_limit_then_succeeds() {
    let (bundle, instance) = sum_even();
    let ok = serde_json::json!({
        "id": "cmpl-1",
        "model": "test-model",
        "choices": [{"message": {"role": "assistant", "content": "```python\ndef f(x):\n  return x\n```"}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 5}
    })
    .to_string();
    let (endpoint, requests) = serve(vec![(429, "{}".into()), (200, ok)]);
    let client = ModelClient::new(config(http(endpoint), Temperature::Default)).unwrap();
    let prompt = build_prompt(&instance);
    let ctx = QueryContext {
        instance: &instance,
        oracle: &bundle.oracle,
        round: 0,
    };
    let response = client.query(&prompt, ctx).unwrap();
    assert_eq!(response.attempt_count, 2);
    assert_eq!(extract_code(&response.text, Some("f")), Some("def f(x):\n  return x"));
    assert_eq!(response.transport_metadata["finish_reason"], "stop");
    assert_eq!(response.transport_metadata["http_status"], 200);

    for _ in 0..2 {
        let body = requests.recv().unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["content"], prompt.as_str());
        assert!(body.get("temperature").is_none(), "default temperature must be omitted: {body}");
    }
}

#[test]
fn http_sends_explicit_temperature_and_gives_up_on_client_errors() {
    let (bundle, instance) = sum_even();
    let (endpoint, requests) = serve(vec![(400, "{\"error\": \"bad\"}".into())]);
    let client = ModelClient::new(config(http(endpoint), Temperature::Value(0.0))).unwrap();
    let ctx = QueryContext {
        instance: &instance,
        oracle: &bundle.oracle,
        round: 0,
    };
    let err = client.query("hi", ctx).unwrap_err();
    assert!(matches!(err, TransportError::Rejected { .. }), "{err}");
    assert_eq!(requests.recv().unwrap()["temperature"], 0.0);
}

#[test]
fn http_exhausts_retries_on_server_errors() {
    let (bundle, instance) = sum_even();
    let (endpoint, _requests) = serve(vec![(503, "{}".into()), (500, "{}".into()), (502, "{}".into())]);
    let client = ModelClient::new(config(http(endpoint), Temperature::Default)).unwrap();
    let ctx = QueryContext {
        instance: &instance,
        oracle: &bundle.oracle,
        round: 0,
    };
    assert!(matches!(client.query("hi", ctx), Err(TransportError::Exhausted { .. })));
}

#[test]
fn missing_api_key_is_a_config_error() {
    let adapter = Adapter::HttpChat {
        endpoint: "http://127.0.0.1:9/".into(),
        api_key_env: Some("NBEVAL_TEST_KEY_THAT_IS_NOT_SET".into()),
        max_in_flight: 1,
        requests_per_second: None,
        timeout_seconds: 1,
    };
    assert!(matches!(
        ModelClient::new(config(adapter, Temperature::Default)),
        Err(TransportError::Config(_))
    ));
}

#[test]
fn local_command_echo() {
    let (bundle, instance) = sum_even();
    let client = ModelClient::new(config(
        Adapter::LocalCommand {
            command: vec!["cat".into()],
        },
        Temperature::Default,
    ))
    .unwrap();
    let prompt = build_prompt(&instance);
    let ctx = QueryContext {
        instance: &instance,
        oracle: &bundle.oracle,
        round: 1,
    };
    let response = client.query(&prompt, ctx).unwrap();
    assert_eq!(response.text, prompt);
    assert_eq!(response.attempt_count, 1);
}

#[test]
fn perfect_mock_returns_the_model_solution() {
    let (bundle, instance) = sum_even();
    let client = ModelClient::new(config(
        Adapter::Mock {
            profile: DefectProfile::perfect(),
        },
        Temperature::Value(0.7),
    ))
    .unwrap();
    let ctx = QueryContext {
        instance: &instance,
        oracle: &bundle.oracle,
        round: 0,
    };
    let response = client.query(&build_prompt(&instance), ctx).unwrap();
    let code = extract_code(&response.text, Some("sum_even_ints_inclusive")).unwrap();
    let p1 = instance.valuation.int("p1").unwrap();
    let p2 = instance.valuation.int("p2").unwrap();
    assert!(code.contains(&format!("lst[{p1} : {p2} + 1]")), "{code}");
}
