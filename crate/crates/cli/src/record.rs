use std::io::Write;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// A reported quantity with no pass/fail meaning.
    Info,
    Pass,
    /// A failed bound, verification or refused solve.
    Fail,
    /// An operational error inside one scenario.
    Error,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Info => "info",
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Error => "error",
        }
    }

    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub key: String,
    pub value: f64,
    pub margin: Option<f64>,
    pub status: Status,
}

/// Outputs of one command on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub scenario_id: String,
    pub scenario_hash: String,
    pub command: String,
    pub status: Status,
    pub wall_time_s: f64,
    pub entries: Vec<Entry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ResultRecord {
    pub fn new(
        scenario_id: impl Into<String>,
        scenario_hash: impl Into<String>,
        command: &str,
    ) -> Self {
        ResultRecord {
            scenario_id: scenario_id.into(),
            scenario_hash: scenario_hash.into(),
            command: command.to_string(),
            status: Status::Info,
            wall_time_s: 0.0,
            entries: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn info(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, value, None, Status::Info);
    }

    pub fn check(&mut self, key: impl Into<String>, value: f64, margin: f64, pass: bool) {
        self.push(key, value, Some(margin), Status::from_pass(pass));
    }

    pub fn push(
        &mut self,
        key: impl Into<String>,
        value: f64,
        margin: Option<f64>,
        status: Status,
    ) {
        self.entries.push(Entry {
            key: key.into(),
            value,
            margin,
            status,
        });
    }

    pub fn error(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.push(key, f64::NAN, None, Status::Error);
        self.notes.push(message.into());
    }

    /// Worst entry status, never better than `Info`.
    pub fn finish(&mut self) {
        self.status = self
            .entries
            .iter()
            .map(|e| e.status)
            .max()
            .unwrap_or(Status::Info);
    }
}

/// Long-format plot data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub quantity: String,
    pub value: f64,
}

pub const CSV_HEADER: [&str; 6] = ["scenario_id", "command", "key", "value", "margin", "status"];

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Debug keeps full precision and switches to exponent form for tiny values.
        format!("{v:?}")
    }
}

pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        for e in &r.entries {
            w.write_record([
                r.scenario_id.as_str(),
                r.command.as_str(),
                e.key.as_str(),
                &num(e.value),
                &e.margin.map(num).unwrap_or_default(),
                e.status.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(records: &[ResultRecord], mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, records)?;
    writeln!(out)
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["t", "quantity", "value"])?;
    for r in rows {
        w.write_record([num(r.t), r.quantity.clone(), num(r.value)])?;
    }
    w.flush()?;
    Ok(())
}

/// Exit code for a batch: 1 if anything errored, 2 if any check failed, 0
/// otherwise.
pub fn exit_code(records: &[ResultRecord]) -> u8 {
    match records.iter().map(|r| r.status).max() {
        Some(Status::Error) => 1,
        Some(Status::Fail) => 2,
        _ => 0,
    }
}
