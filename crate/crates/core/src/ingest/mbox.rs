use chrono::{DateTime, Utc};
use mailparse::{DispositionType, MailHeaderMap, ParsedMail};
use serde::{Deserialize, Serialize};

use super::{normalize_line_endings, Email, IngestError, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchiveFormat {
    Mbox,
    Csv,
    Empty,
}

/// A message that was framed correctly but carried no usable text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedMessage {
    pub id: String,
    pub offset: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedArchive {
    pub emails: Vec<Email>,
    pub skipped: Vec<SkippedMessage>,
}

impl ParsedArchive {
    pub fn parsed_count(&self) -> usize {
        self.emails.len() + self.skipped.len()
    }
}

/// Auto-detects the archive format from its leading bytes.
pub fn detect_format(bytes: &[u8]) -> ArchiveFormat {
    let start = skip_bom(bytes);
    if start.iter().all(|b| b.is_ascii_whitespace()) {
        ArchiveFormat::Empty
    } else if start.starts_with(b"From ") {
        ArchiveFormat::Mbox
    } else {
        ArchiveFormat::Csv
    }
}

fn skip_bom(bytes: &[u8]) -> &[u8] {
    bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes)
}

/// Parses an mbox archive, or a two-column (subject, body) CSV when the
/// input does not start with an mbox `From ` line.
pub fn parse_archive(bytes: &[u8]) -> Result<ParsedArchive, IngestError> {
    match detect_format(bytes) {
        ArchiveFormat::Empty => Ok(ParsedArchive::default()),
        ArchiveFormat::Mbox => parse_mbox(bytes),
        ArchiveFormat::Csv => parse_csv(skip_bom(bytes)),
    }
}

fn message_id(ordinal: usize) -> String {
    format!("msg-{ordinal:06}")
}

/// A message as framed in the archive: byte offset of its `From ` line and
/// the raw RFC 5322 bytes that follow it.
struct Framed {
    offset: usize,
    raw: Vec<u8>,
}

fn split_lines(bytes: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        if pos >= bytes.len() {
            return None;
        }
        let start = pos;
        let end = match bytes[pos..].iter().position(|&b| b == b'\n') {
            Some(i) => pos + i + 1,
            None => bytes.len(),
        };
        pos = end;
        Some((start, &bytes[start..end]))
    })
}

fn strip_eol(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

fn is_header_line(line: &[u8]) -> bool {
    let line = strip_eol(line);
    if line.first().is_some_and(|b| *b == b' ' || *b == b'\t') {
        return true;
    }
    match line.iter().position(|&b| b == b':') {
        Some(0) | None => false,
        Some(colon) => line[..colon].iter().all(|b| b.is_ascii_graphic()),
    }
}

fn frame(bytes: &[u8]) -> Result<Vec<Framed>, IngestError> {
    let mut messages: Vec<Framed> = Vec::new();
    let mut prev_blank = true;
    for (offset, line) in split_lines(bytes) {
        let content = strip_eol(line);
        if prev_blank && content.starts_with(b"From ") {
            let sender = content[5..].split(|b| *b == b' ').next().unwrap_or_default();
            if sender.is_empty() {
                return Err(IngestError::Framing {
                    offset,
                    reason: "separator line has no sender".into(),
                });
            }
            if let Some(last) = messages.last_mut() {
                trim_separator_blank(&mut last.raw);
            }
            messages.push(Framed {
                offset,
                raw: Vec::new(),
            });
        } else {
            let Some(current) = messages.last_mut() else {
                return Err(IngestError::Framing {
                    offset,
                    reason: "content before the first separator line".into(),
                });
            };
            if current.raw.is_empty() && !is_header_line(line) {
                return Err(IngestError::Framing {
                    offset,
                    reason: "message does not begin with a header block".into(),
                });
            }
            // mboxrd quoting: ">From " lines lose one level of '>'.
            let gt = content.iter().take_while(|b| **b == b'>').count();
            if gt > 0 && content[gt..].starts_with(b"From ") {
                current.raw.extend_from_slice(&line[1..]);
            } else {
                current.raw.extend_from_slice(line);
            }
        }
        prev_blank = content.is_empty();
    }
    if let Some(last) = messages.last_mut() {
        trim_separator_blank(&mut last.raw);
    }
    Ok(messages)
}

// The blank line preceding a separator belongs to the framing, not the body.
fn trim_separator_blank(raw: &mut Vec<u8>) {
    for eol in [&b"\r\n"[..], b"\n"] {
        if raw.ends_with(eol) {
            let without = raw.len() - eol.len();
            if raw[..without].ends_with(b"\n") {
                raw.truncate(without);
            }
            return;
        }
    }
}

fn first_text_plain(mail: &ParsedMail<'_>) -> Option<Result<String, mailparse::MailParseError>> {
    let mime = mail.ctype.mimetype.to_ascii_lowercase();
    if mime.starts_with("multipart/") {
        return mail.subparts.iter().find_map(first_text_plain);
    }
    let attachment = mail.get_content_disposition().disposition == DispositionType::Attachment;
    if mime == "text/plain" && !attachment {
        Some(mail.get_body())
    } else {
        None
    }
}

fn parse_mbox(bytes: &[u8]) -> Result<ParsedArchive, IngestError> {
    let mut out = ParsedArchive::default();
    for (ordinal, framed) in frame(bytes)?.into_iter().enumerate() {
        let id = message_id(ordinal);
        let mail = mailparse::parse_mail(&framed.raw).map_err(|e| IngestError::Framing {
            offset: framed.offset,
            reason: e.to_string(),
        })?;
        let body = match first_text_plain(&mail) {
            Some(Ok(body)) => body,
            Some(Err(e)) => {
                out.skipped.push(SkippedMessage {
                    id,
                    offset: framed.offset,
                    reason: format!("undecodable text/plain part: {e}"),
                });
                continue;
            }
            None => {
                out.skipped.push(SkippedMessage {
                    id,
                    offset: framed.offset,
                    reason: "no text/plain part".into(),
                });
                continue;
            }
        };
        let subject = mail.headers.get_first_value("Subject").unwrap_or_default();
        let sent_at = mail
            .headers
            .get_first_value("Date")
            .and_then(|d| mailparse::dateparse(&d).ok())
            .and_then(|ts| DateTime::<Utc>::from_timestamp(ts, 0));
        out.emails.push(Email {
            id,
            subject: subject.trim().to_string(),
            body: normalize_body(&body),
            sent_at,
            split: Split::Unassigned,
        });
    }
    Ok(out)
}

fn normalize_body(body: &str) -> String {
    let mut body = normalize_line_endings(body);
    while body.ends_with('\n') {
        body.pop();
    }
    body
}

fn parse_csv(bytes: &[u8]) -> Result<ParsedArchive, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut out = ParsedArchive::default();
    let mut ordinal = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::Csv {
            offset: e.position().map(|p| p.byte()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let offset = record.position().map(|p| p.byte()).unwrap_or(0);
        if record.len() != 2 {
            return Err(IngestError::Csv {
                offset,
                reason: format!("expected 2 columns (subject, body), found {}", record.len()),
            });
        }
        if row == 0
            && record[0].trim().eq_ignore_ascii_case("subject")
            && record[1].trim().eq_ignore_ascii_case("body")
        {
            continue;
        }
        out.emails.push(Email {
            id: message_id(ordinal),
            subject: record[0].trim().to_string(),
            body: normalize_body(&record[1]),
            sent_at: None,
            split: Split::Unassigned,
        });
        ordinal += 1;
    }
    Ok(out)
}
