use std::io::Read;
use std::time::{Duration, Instant};

use super::{NetworkPolicy, ToolError, ToolOutput};

/// Bytes of a fetched body kept.
pub const FETCH_CAP: usize = 512 * 1024;

pub fn web_fetch(url: &str, policy: NetworkPolicy, cap: usize) -> Result<ToolOutput, ToolError> {
    if policy != NetworkPolicy::Enabled {
        return Err(ToolError::NetworkDisabled);
    }
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(ToolError::FetchFailure(format!("unsupported url {url}")));
    }
    let start = Instant::now();
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(60))
        .build();
    let resp = agent
        .get(url)
        .call()
        .map_err(|e| ToolError::FetchFailure(e.to_string()))?;
    let mut body = Vec::new();
    resp.into_reader()
        .take(cap as u64 + 1)
        .read_to_end(&mut body)
        .map_err(|e| ToolError::FetchFailure(e.to_string()))?;
    let truncated = body.len() > cap;
    body.truncate(cap);
    Ok(ToolOutput {
        stdout: String::from_utf8_lossy(&body).into_owned(),
        stderr: String::new(),
        exit_code: 0,
        duration_ms: start.elapsed().as_millis() as u64,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;

    fn serve(body: Vec<u8>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/doc", listener.local_addr().unwrap());
        std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut r = BufReader::new(s.try_clone().unwrap());
            let mut line = String::new();
            while r.read_line(&mut line).unwrap() > 0 && line != "\r\n" {
                line.clear();
            }
            let _ = write!(
                s,
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            let _ = s.write_all(&body);
        });
        url
    }

    #[test]
    fn disabled_policy_blocks() {
        assert!(matches!(
            web_fetch("http://127.0.0.1:1/", NetworkPolicy::Disabled, 10),
            Err(ToolError::NetworkDisabled)
        ));
    }

    #[test]
    fn local_fixture_body_returned() {
        let url = serve(b"known bytes".to_vec());
        let out = web_fetch(&url, NetworkPolicy::Enabled, 1024).unwrap();
        assert_eq!(out.stdout, "known bytes");
        assert!(!out.truncated);
    }

    #[test]
    fn oversized_body_truncated() {
        let url = serve(vec![b'z'; 5000]);
        let out = web_fetch(&url, NetworkPolicy::Enabled, 100).unwrap();
        assert_eq!(out.stdout.len(), 100);
        assert!(out.truncated);
    }
}
