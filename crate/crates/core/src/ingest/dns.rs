/// Extracts the first question name of a DNS query message.
///
/// Returns `None` for responses, messages without questions, compressed or
/// malformed names and the root name. The result is lowercase with no
/// trailing dot.
pub fn query_name(message: &[u8]) -> Option<String> {
    if message.len() < 12 {
        return None;
    }
    let is_response = message[2] & 0x80 != 0;
    let qdcount = u16::from_be_bytes([message[4], message[5]]);
    if is_response || qdcount == 0 {
        return None;
    }
    let mut pos = 12;
    let mut labels: Vec<String> = Vec::new();
    let mut total = 0usize;
    loop {
        let len = *message.get(pos)? as usize;
        pos += 1;
        if len == 0 {
            break;
        }
        // Pointers (0xC0) and reserved label types never appear in a well-formed question.
        if len & 0xC0 != 0 {
            return None;
        }
        let label = message.get(pos..pos + len)?;
        if !label.iter().all(|b| b.is_ascii_graphic()) {
            return None;
        }
        total += len + 1;
        if total > 255 {
            return None;
        }
        labels.push(String::from_utf8_lossy(label).to_ascii_lowercase());
        pos += len;
    }
    // QTYPE + QCLASS must follow.
    message.get(pos..pos + 4)?;
    if labels.is_empty() {
        return None;
    }
    Some(labels.join("."))
}
