//! Chat-completions backend (OpenAI-compatible wire format).

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::backend::{Backend, BackendError, ModelRequest, ModelTurn, ToolCallRequest, ToolSpec};
use super::trajectory::Step;
use super::truncate_middle;

pub struct HttpChatBackend {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(endpoint: String, model: String, api_key: String) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(600))
            .build();
        Self {
            endpoint,
            model,
            api_key,
            agent,
        }
    }
}

fn tool_schema(spec: &ToolSpec) -> Value {
    let mut props = Map::new();
    let mut required = Vec::new();
    for (name, desc, req) in spec.params {
        props.insert(
            (*name).to_string(),
            json!({"type": "string", "description": desc}),
        );
        if *req {
            required.push(*name);
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": {"type": "object", "properties": props, "required": required},
        }
    })
}

/// Replays the trajectory as a chat history. Each maximal run of thinking
/// and tool-call steps becomes one assistant message; tool results follow as
/// `tool` messages keyed by the step index of their call.
pub fn build_messages(request: &ModelRequest<'_>) -> Vec<Value> {
    let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
    let mut pending: Option<(String, Vec<Value>)> = None;
    let mut last_call_id = String::new();

    let flush = |pending: &mut Option<(String, Vec<Value>)>, messages: &mut Vec<Value>| {
        if let Some((content, calls)) = pending.take() {
            let mut m = json!({"role": "assistant", "content": content});
            if !calls.is_empty() {
                m["tool_calls"] = Value::Array(calls);
            }
            messages.push(m);
        }
    };

    for record in &request.trajectory.steps {
        match &record.step {
            Step::PhasePrompt { text } => {
                flush(&mut pending, &mut messages);
                messages.push(json!({"role": "user", "content": text}));
            }
            Step::Thinking { text } => {
                let p = pending.get_or_insert_with(Default::default);
                if !p.0.is_empty() {
                    p.0.push('\n');
                }
                p.0.push_str(text);
            }
            Step::ToolCall { tool, args } => {
                let p = pending.get_or_insert_with(Default::default);
                last_call_id = format!("call_{}", record.index);
                p.1.push(json!({
                    "id": last_call_id,
                    "type": "function",
                    "function": {"name": tool, "arguments": serde_json::to_string(args).unwrap_or_default()},
                }));
            }
            Step::ToolResult {
                output, exit_code, ..
            } => {
                flush(&mut pending, &mut messages);
                let shown = truncate_middle(output, request.output_limit);
                messages.push(json!({
                    "role": "tool",
                    "tool_call_id": last_call_id,
                    "content": format!("exit_code: {exit_code}\n{shown}"),
                }));
            }
            Step::FinalMessage { text } => {
                let p = pending.get_or_insert_with(Default::default);
                if !p.0.is_empty() {
                    p.0.push('\n');
                }
                p.0.push_str(text);
                flush(&mut pending, &mut messages);
            }
        }
    }
    flush(&mut pending, &mut messages);
    messages
}

fn arg_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a chat-completions response. A reply without tool calls is the
/// final message; with tool calls, any text content is recorded as thinking.
pub fn parse_response(body: &Value) -> Result<ModelTurn, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("response has no choices[0].message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let reasoning = message
        .get("reasoning_content")
        .and_then(Value::as_str)
        .map(str::to_string);

    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for c in calls {
            let name = c
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| BackendError::Protocol("tool call without a name".into()))?;
            let raw = c
                .pointer("/function/arguments")
                .and_then(Value::as_str)
                .unwrap_or("{}");
            let parsed: Value = serde_json::from_str(raw)
                .map_err(|e| BackendError::Protocol(format!("tool arguments: {e}")))?;
            let args = parsed
                .as_object()
                .map(|o| o.iter().map(|(k, v)| (k.clone(), arg_string(v))).collect())
                .unwrap_or_default();
            tool_calls.push(ToolCallRequest {
                tool: name.to_string(),
                args,
            });
        }
    }

    if tool_calls.is_empty() {
        Ok(ModelTurn {
            thinking: reasoning,
            tool_calls,
            final_message: Some(content),
        })
    } else {
        let thinking = match (reasoning, content.is_empty()) {
            (Some(r), true) => Some(r),
            (Some(r), false) => Some(format!("{r}\n{content}")),
            (None, false) => Some(content),
            (None, true) => None,
        };
        Ok(ModelTurn {
            thinking,
            tool_calls,
            final_message: None,
        })
    }
}

impl Backend for HttpChatBackend {
    fn complete(&mut self, request: &ModelRequest<'_>) -> Result<ModelTurn, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": build_messages(request),
            "tools": request.tools.iter().map(tool_schema).collect::<Vec<_>>(),
        });
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let value: Value = resp
            .into_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        parse_response(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::Trajectory;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn serve_once(response: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.to_ascii_lowercase();
                if let Some(v) = l.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if l.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                response.len(),
                response
            )
            .unwrap();
            format!("{auth}\n{}", String::from_utf8(body).unwrap())
        });
        (url, handle)
    }

    #[test]
    fn tool_call_round_trip_over_local_server() {
        let (url, handle) = serve_once(
            r#"{"choices":[{"message":{"content":"checking","tool_calls":[{"id":"c1","type":"function","function":{"name":"bash","arguments":"{\"cmd\":\"ls -la\",\"timeout_secs\":5}"}}]}}]}"#,
        );
        let mut backend = HttpChatBackend::new(url, "m1".into(), "secret".into());
        let mut t = Trajectory::new("s", "analyzer");
        t.push(Step::PhasePrompt {
            text: "Analyse".into(),
        });
        let tools = crate::toolkit::specs_for(&["bash"]);
        let req = ModelRequest {
            role: "analyzer",
            system_prompt: "sys",
            trajectory: &t,
            new_input: "Analyse",
            tools: &tools,
            output_limit: 100,
        };
        let turn = backend.complete(&req).unwrap();
        assert_eq!(turn.thinking.as_deref(), Some("checking"));
        assert_eq!(turn.tool_calls[0].args["cmd"], "ls -la");
        assert_eq!(turn.tool_calls[0].args["timeout_secs"], "5");
        let seen = handle.join().unwrap();
        assert!(seen.contains("Bearer secret"));
        assert!(seen.contains("\"model\":\"m1\""));
        assert!(seen.contains("\"name\":\"bash\""));
    }

    #[test]
    fn text_only_reply_is_final() {
        let turn =
            parse_response(&json!({"choices":[{"message":{"content":"all done"}}]})).unwrap();
        assert_eq!(turn.final_message.as_deref(), Some("all done"));
        assert!(parse_response(&json!({"nope": 1})).is_err());
    }

    #[test]
    fn history_groups_calls_with_results() {
        let mut t = Trajectory::new("s", "r");
        t.push(Step::PhasePrompt { text: "p".into() });
        t.push(Step::Thinking { text: "hmm".into() });
        t.push(Step::ToolCall {
            tool: "bash".into(),
            args: [("cmd".to_string(), "ls".to_string())].into(),
        });
        t.push(Step::ToolResult {
            output: "x".repeat(500),
            exit_code: 0,
            truncated: true,
        });
        let req = ModelRequest {
            role: "r",
            system_prompt: "sys",
            trajectory: &t,
            new_input: "",
            tools: &[],
            output_limit: 100,
        };
        let m = build_messages(&req);
        assert_eq!(m.len(), 4);
        assert_eq!(m[2]["role"], "assistant");
        assert_eq!(m[2]["tool_calls"][0]["id"], "call_2");
        assert_eq!(m[3]["tool_call_id"], "call_2");
        assert!(m[3]["content"].as_str().unwrap().len() < 300);
    }
}
