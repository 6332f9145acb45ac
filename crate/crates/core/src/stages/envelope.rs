//! Structured final messages: the last fenced ```json block of a message.

use serde::de::DeserializeOwned;

/// Body of the last ```json fenced block, or the whole message when it is
/// a bare JSON object.
pub fn json_block(message: &str) -> Option<&str> {
    let mut found = None;
    let mut rest = message;
    let mut offset = 0;
    while let Some(i) = rest.find("```json") {
        let body_start = offset + i + "```json".len();
        let tail = &message[body_start..];
        let Some(end) = tail.find("```") else { break };
        found = Some(tail[..end].trim());
        offset = body_start + end + 3;
        rest = &message[offset..];
    }
    found.or_else(|| {
        let t = message.trim();
        (t.starts_with('{') && t.ends_with('}')).then_some(t)
    })
}

pub fn parse<T: DeserializeOwned>(message: &str) -> Result<T, String> {
    let block = json_block(message).ok_or_else(|| "no json block".to_string())?;
    serde_json::from_str(block).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn last_block_wins() {
        let m = "text\n```json\n{\"a\":1}\n```\nmore\n```json\n{\"a\":2}\n```\n";
        let v: Value = parse(m).unwrap();
        assert_eq!(v["a"], 2);
    }

    #[test]
    fn bare_object_and_failures() {
        let v: Value = parse(" {\"b\": true} ").unwrap();
        assert_eq!(v["b"], true);
        assert!(parse::<Value>("no block").is_err());
        assert!(parse::<Value>("```json\n{oops\n```").is_err());
    }
}
