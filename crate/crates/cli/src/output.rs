use std::fmt::Display;
use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    /// One JSON object per line.
    Json,
}

pub struct Out {
    format: Format,
}

impl Out {
    pub fn new(format: Format) -> Self {
        Self { format }
    }

    pub fn is_json(&self) -> bool {
        self.format == Format::Json
    }

    /// Emits one record: `text` for humans, `record` as a JSON line.
    pub fn emit(&self, text: impl Display, record: &impl Serialize) {
        let mut stdout = std::io::stdout().lock();
        let _ = match self.format {
            Format::Text => writeln!(stdout, "{}", text.to_string().trim_end()),
            Format::Json => writeln!(
                stdout,
                "{}",
                serde_json::to_string(record).expect("records serialize")
            ),
        };
    }

    pub fn error(&self, kind: &str, message: &str) {
        match self.format {
            Format::Text => eprintln!("error ({kind}): {message}"),
            Format::Json => eprintln!("{}", json!({"error": kind, "message": message})),
        }
    }
}

pub fn tagged(command: &str, body: impl Serialize) -> Value {
    let mut v = serde_json::to_value(body).expect("records serialize");
    if let Value::Object(map) = &mut v {
        map.insert("command".into(), command.into());
    }
    v
}
