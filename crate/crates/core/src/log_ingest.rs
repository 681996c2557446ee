//! Parsing of raw W3C extended (IIS) access log text into structured records.
//!
//! Log files are line oriented: `#`-prefixed directive lines (a `#Fields:`
//! directive re-binds the column order for subsequent lines) and
//! whitespace-delimited record lines of 17 fields. Malformed lines are
//! skipped with a recorded reason, never aborting the file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use flate2::bufread::GzDecoder;
use thiserror::Error;

/// gzip magic bytes, used to auto-detect compressed inputs.
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// The 17 fields of an IIS W3C extended log record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Date,
    Time,
    ClientIp,
    Username,
    SiteName,
    ComputerName,
    ServerIp,
    ServerPort,
    Method,
    UriStem,
    UriQuery,
    Status,
    TimeTaken,
    Version,
    Host,
    UserAgent,
    Referer,
}

impl Field {
    pub const COUNT: usize = 17;

    /// W3C field name as written in a `#Fields:` directive.
    pub fn name(self) -> &'static str {
        match self {
            Field::Date => "date",
            Field::Time => "time",
            Field::ClientIp => "c-ip",
            Field::Username => "cs-username",
            Field::SiteName => "s-sitename",
            Field::ComputerName => "s-computername",
            Field::ServerIp => "s-ip",
            Field::ServerPort => "s-port",
            Field::Method => "cs-method",
            Field::UriStem => "cs-uri-stem",
            Field::UriQuery => "cs-uri-query",
            Field::Status => "sc-status",
            Field::TimeTaken => "time-taken",
            Field::Version => "cs-version",
            Field::Host => "cs-host",
            Field::UserAgent => "cs(User-Agent)",
            Field::Referer => "cs(Referer)",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        let all = [
            Field::Date,
            Field::Time,
            Field::ClientIp,
            Field::Username,
            Field::SiteName,
            Field::ComputerName,
            Field::ServerIp,
            Field::ServerPort,
            Field::Method,
            Field::UriStem,
            Field::UriQuery,
            Field::Status,
            Field::TimeTaken,
            Field::Version,
            Field::Host,
            Field::UserAgent,
            Field::Referer,
        ];
        all.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }
}

/// Binding of token positions to the 17 record fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldOrder(Vec<Field>);

impl Default for FieldOrder {
    /// The IIS default order: `date time c-ip cs-username s-sitename
    /// s-computername s-ip s-port cs-method cs-uri-stem cs-uri-query
    /// sc-status time-taken cs-version cs-host cs(User-Agent) cs(Referer)`.
    fn default() -> FieldOrder {
        FieldOrder(vec![
            Field::Date,
            Field::Time,
            Field::ClientIp,
            Field::Username,
            Field::SiteName,
            Field::ComputerName,
            Field::ServerIp,
            Field::ServerPort,
            Field::Method,
            Field::UriStem,
            Field::UriQuery,
            Field::Status,
            Field::TimeTaken,
            Field::Version,
            Field::Host,
            Field::UserAgent,
            Field::Referer,
        ])
    }
}

impl FieldOrder {
    /// Builds an order from directive field names. All 17 known fields must
    /// be present exactly once.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Option<FieldOrder> {
        let mut fields = Vec::new();
        for name in names {
            let field = Field::from_name(name)?;
            if fields.contains(&field) {
                return None;
            }
            fields.push(field);
        }
        if fields.len() == Field::COUNT {
            Some(FieldOrder(fields))
        } else {
            None
        }
    }

    pub fn fields(&self) -> &[Field] {
        &self.0
    }
}

/// One parsed 17-field log record. `"-"` denotes an absent value and is
/// stored verbatim (never as an empty string); user-agent `+` separators are
/// kept undecoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    /// `date` + `time` as seconds since the Unix epoch (UTC assumed).
    pub timestamp: i64,
    pub c_ip: String,
    pub cs_username: String,
    pub s_sitename: String,
    pub s_computername: String,
    pub s_ip: String,
    pub s_port: u16,
    pub cs_method: String,
    pub cs_uri_stem: String,
    pub cs_uri_query: String,
    pub sc_status: u16,
    pub time_taken: i64,
    pub cs_version: String,
    pub cs_host: String,
    pub cs_user_agent: String,
    pub cs_referer: String,
}

impl LogRecord {
    pub fn date_string(&self) -> String {
        let (date, _) = split_timestamp(self.timestamp);
        date
    }

    pub fn time_string(&self) -> String {
        let (_, time) = split_timestamp(self.timestamp);
        time
    }

    fn field_token(&self, field: Field) -> String {
        match field {
            Field::Date => self.date_string(),
            Field::Time => self.time_string(),
            Field::ClientIp => self.c_ip.clone(),
            Field::Username => self.cs_username.clone(),
            Field::SiteName => self.s_sitename.clone(),
            Field::ComputerName => self.s_computername.clone(),
            Field::ServerIp => self.s_ip.clone(),
            Field::ServerPort => self.s_port.to_string(),
            Field::Method => self.cs_method.clone(),
            Field::UriStem => self.cs_uri_stem.clone(),
            Field::UriQuery => self.cs_uri_query.clone(),
            Field::Status => self.sc_status.to_string(),
            Field::TimeTaken => self.time_taken.to_string(),
            Field::Version => self.cs_version.clone(),
            Field::Host => self.cs_host.clone(),
            Field::UserAgent => self.cs_user_agent.clone(),
            Field::Referer => self.cs_referer.clone(),
        }
    }

    /// Renders the record as a single space-delimited log line in the given
    /// field order. Re-parsing the result with the same order yields an
    /// identical record.
    pub fn to_line(&self, order: &FieldOrder) -> String {
        order
            .fields()
            .iter()
            .map(|&f| self.field_token(f))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Counters describing one parsed input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub lines_total: u64,
    pub records_ok: u64,
    pub lines_skipped: u64,
    pub directive_lines: u64,
    /// Skip reason -> count, deterministic iteration order.
    pub skip_reasons: BTreeMap<String, u64>,
    /// Records whose timestamp went backwards relative to the previous
    /// record (a warning, not an error).
    pub out_of_order: u64,
}

impl ParseReport {
    pub fn is_consistent(&self) -> bool {
        let reason_sum: u64 = self.skip_reasons.values().sum();
        self.lines_total == self.records_ok + self.lines_skipped + self.directive_lines
            && reason_sum == self.lines_skipped
    }

    fn skip(&mut self, reason: &str) {
        self.lines_skipped += 1;
        *self.skip_reasons.entry(reason.to_string()).or_insert(0) += 1;
    }
}

/// Effect of a directive line on subsequent parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectiveEffect {
    /// Informational directive, e.g. `#Software:`.
    None,
    /// A usable `#Fields:` directive; subsequent lines bind to this order.
    ReplaceOrder(FieldOrder),
    /// A `#Fields:` directive whose names are not the 17 known fields;
    /// subsequent lines cannot be bound until a usable directive appears.
    UnusableFields,
}

/// Outcome of parsing one physical log line.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLine {
    Record(Box<LogRecord>),
    Directive(DirectiveEffect),
    Skip { reason: &'static str },
}

/// Parses one physical line under the given field order.
pub fn parse_log_line(line: &str, order: &FieldOrder) -> ParsedLine {
    let trimmed = line.trim_end_matches(['\r', '\n']);
    if trimmed.starts_with('#') {
        return ParsedLine::Directive(parse_directive(trimmed));
    }
    if trimmed.trim().is_empty() {
        return ParsedLine::Skip { reason: "blank-line" };
    }

    // Runs of spaces or tabs delimit tokens; IIS writes single spaces but
    // tab-delimited exports exist.
    let tokens: Vec<&str> = trimmed.split(['\t', ' ']).filter(|t| !t.is_empty()).collect();
    if tokens.len() != order.fields().len() {
        return ParsedLine::Skip { reason: "field-count-mismatch" };
    }

    let mut date: Option<&str> = None;
    let mut time: Option<&str> = None;
    let mut rec = LogRecord {
        timestamp: 0,
        c_ip: String::new(),
        cs_username: String::new(),
        s_sitename: String::new(),
        s_computername: String::new(),
        s_ip: String::new(),
        s_port: 0,
        cs_method: String::new(),
        cs_uri_stem: String::new(),
        cs_uri_query: String::new(),
        sc_status: 0,
        time_taken: 0,
        cs_version: String::new(),
        cs_host: String::new(),
        cs_user_agent: String::new(),
        cs_referer: String::new(),
    };

    for (&field, &token) in order.fields().iter().zip(&tokens) {
        match field {
            Field::Date => date = Some(token),
            Field::Time => time = Some(token),
            Field::ClientIp => rec.c_ip = token.to_string(),
            Field::Username => rec.cs_username = token.to_string(),
            Field::SiteName => rec.s_sitename = token.to_string(),
            Field::ComputerName => rec.s_computername = token.to_string(),
            Field::ServerIp => rec.s_ip = token.to_string(),
            Field::ServerPort => match token.parse::<u16>() {
                Ok(p) if p > 0 => rec.s_port = p,
                _ => return ParsedLine::Skip { reason: "bad-port" },
            },
            Field::Method => rec.cs_method = token.to_string(),
            Field::UriStem => rec.cs_uri_stem = token.to_string(),
            Field::UriQuery => rec.cs_uri_query = token.to_string(),
            Field::Status => match token.parse::<u16>() {
                Ok(s) => rec.sc_status = s,
                Err(_) => return ParsedLine::Skip { reason: "bad-status" },
            },
            Field::TimeTaken => match token.parse::<i64>() {
                Ok(t) => rec.time_taken = t,
                Err(_) => return ParsedLine::Skip { reason: "bad-time-taken" },
            },
            Field::Version => rec.cs_version = token.to_string(),
            Field::Host => rec.cs_host = token.to_string(),
            Field::UserAgent => rec.cs_user_agent = token.to_string(),
            Field::Referer => rec.cs_referer = token.to_string(),
        }
    }

    match parse_timestamp(date.unwrap_or(""), time.unwrap_or("")) {
        Some(ts) => rec.timestamp = ts,
        None => return ParsedLine::Skip { reason: "bad-timestamp" },
    }
    ParsedLine::Record(Box::new(rec))
}

fn parse_directive(line: &str) -> DirectiveEffect {
    let body = &line[1..];
    if let Some((name, rest)) = body.split_once(':') {
        if name.trim().eq_ignore_ascii_case("Fields") {
            return match FieldOrder::from_names(rest.split_ascii_whitespace()) {
                Some(order) => DirectiveEffect::ReplaceOrder(order),
                None => DirectiveEffect::UnusableFields,
            };
        }
    }
    DirectiveEffect::None
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("read error at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Streaming record reader over a line-oriented input.
///
/// Single pass, file order preserved; memory use is independent of file
/// length. Records are immutable once emitted and safe to hand across
/// threads.
pub struct RecordReader<R> {
    input: R,
    order: Option<FieldOrder>,
    report: ParseReport,
    byte_offset: u64,
    last_timestamp: Option<i64>,
    buf: Vec<u8>,
    done: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(input: R) -> RecordReader<R> {
        RecordReader::with_field_order(input, FieldOrder::default())
    }

    pub fn with_field_order(input: R, order: FieldOrder) -> RecordReader<R> {
        RecordReader {
            input,
            order: Some(order),
            report: ParseReport::default(),
            byte_offset: 0,
            last_timestamp: None,
            buf: Vec::new(),
            done: false,
        }
    }

    pub fn report(&self) -> &ParseReport {
        &self.report
    }

    pub fn into_report(self) -> ParseReport {
        self.report
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<LogRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(n) => self.byte_offset += n as u64,
                Err(e) => {
                    self.done = true;
                    return Some(Err(IngestError::Io { offset: self.byte_offset, source: e }));
                }
            }
            self.report.lines_total += 1;

            let line = match std::str::from_utf8(&self.buf) {
                Ok(s) => s,
                Err(_) => {
                    self.report.skip("invalid-utf8");
                    continue;
                }
            };

            let effective = self.order.clone().unwrap_or_default();
            match parse_log_line(line, &effective) {
                ParsedLine::Record(rec) => {
                    if self.order.is_none() {
                        // An unusable #Fields directive is in force; the
                        // default order cannot be trusted here.
                        self.report.skip("no-field-order");
                        continue;
                    }
                    if let Some(prev) = self.last_timestamp {
                        if rec.timestamp < prev {
                            self.report.out_of_order += 1;
                        }
                    }
                    self.last_timestamp = Some(rec.timestamp);
                    self.report.records_ok += 1;
                    return Some(Ok(*rec));
                }
                ParsedLine::Directive(effect) => {
                    self.report.directive_lines += 1;
                    match effect {
                        DirectiveEffect::None => {}
                        DirectiveEffect::ReplaceOrder(order) => self.order = Some(order),
                        DirectiveEffect::UnusableFields => self.order = None,
                    }
                }
                ParsedLine::Skip { reason } => {
                    if self.order.is_none() {
                        self.report.skip("no-field-order");
                    } else {
                        self.report.skip(reason);
                    }
                }
            }
        }
    }
}

/// Parses a whole input, collecting records and the final report.
pub fn parse_log_file<R: BufRead>(input: R) -> Result<(Vec<LogRecord>, ParseReport), IngestError> {
    let mut reader = RecordReader::new(input);
    let mut records = Vec::new();
    for item in reader.by_ref() {
        records.push(item?);
    }
    Ok((records, reader.into_report()))
}

/// Opens a log file for reading, transparently decompressing gzip inputs
/// (detected by magic bytes, not extension).
pub fn open_log_input(path: &Path) -> Result<Box<dyn BufRead + Send>, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::Open { path: path.to_path_buf(), source: e })?;
    let mut reader = BufReader::new(file);
    let is_gzip = reader
        .fill_buf()
        .map(|buf| buf.len() >= 2 && buf[..2] == GZIP_MAGIC)
        .map_err(|e| IngestError::Open { path: path.to_path_buf(), source: e })?;
    if is_gzip {
        Ok(Box::new(BufReader::new(GzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Parses a log file from disk (gzip-aware).
pub fn parse_log_path(path: &Path) -> Result<(Vec<LogRecord>, ParseReport), IngestError> {
    parse_log_file(open_log_input(path)?)
}

/// Parses `"YYYY-MM-DD"` + `"HH:MM:SS"` into seconds since the Unix epoch.
pub fn parse_timestamp(date: &str, time: &str) -> Option<i64> {
    let mut date_parts = date.split('-');
    let year: i64 = date_parts.next()?.parse().ok()?;
    let month: u32 = date_parts.next()?.parse().ok()?;
    let day: u32 = date_parts.next()?.parse().ok()?;
    if date_parts.next().is_some() {
        return None;
    }
    if !(1..=12).contains(&month) || day < 1 || day > days_in_month(year, month) {
        return None;
    }

    let mut time_parts = time.split(':');
    let hour: i64 = time_parts.next()?.parse().ok()?;
    let minute: i64 = time_parts.next()?.parse().ok()?;
    let second: i64 = time_parts.next()?.parse().ok()?;
    if time_parts.next().is_some() {
        return None;
    }
    if !(0..24).contains(&hour) || !(0..60).contains(&minute) || !(0..60).contains(&second) {
        return None;
    }

    Some(days_from_civil(year, month, day) * 86_400 + hour * 3_600 + minute * 60 + second)
}

/// Renders an epoch timestamp back into `("YYYY-MM-DD", "HH:MM:SS")`.
pub fn split_timestamp(ts: i64) -> (String, String) {
    let days = ts.div_euclid(86_400);
    let secs = ts.rem_euclid(86_400);
    let (y, m, d) = civil_from_days(days);
    (
        format!("{y:04}-{m:02}-{d:02}"),
        format!("{:02}:{:02}:{:02}", secs / 3_600, (secs / 60) % 60, secs % 60),
    )
}

fn is_leap_year(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i64, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(y) => 29,
        2 => 28,
        _ => 0,
    }
}

// Proleptic Gregorian day arithmetic (days relative to 1970-01-01).
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = if m > 2 { m - 3 } else { m + 9 } as i64;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1_460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}
