#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("response contained no code")]
pub struct EmptyCode;

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Drops leading blank lines and trailing whitespace; keeps the first code
/// line's indentation.
fn trim_code(text: &str) -> &str {
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            start += line.len();
        } else {
            break;
        }
    }
    text[start..].trim_end()
}

/// Returns the body of the first fenced block (``` with optional language
/// tag), or the whole response trimmed when there is no fence.
pub fn extract_code(response: &str) -> Result<String, EmptyCode> {
    let mut lines = response.split_inclusive('\n');
    let mut offset = 0;
    let mut body_start = None;
    for line in lines.by_ref() {
        offset += line.len();
        if is_fence(line) {
            body_start = Some(offset);
            break;
        }
    }
    let code = match body_start {
        None => trim_code(response),
        Some(start) => {
            let mut end = response.len();
            let mut pos = start;
            for line in lines {
                if is_fence(line) {
                    end = pos;
                    break;
                }
                pos += line.len();
            }
            trim_code(&response[start..end])
        }
    };
    if code.is_empty() {
        Err(EmptyCode)
    } else {
        Ok(code.to_string())
    }
}
