//! One machine-readable summary line per run, written to stderr.

use serde_json::{Map, Value};

pub struct RunSummary {
    started: std::time::Instant,
    fields: Map<String, Value>,
}

impl RunSummary {
    pub fn start(subcommand: &str) -> Self {
        let mut fields = Map::new();
        fields.insert("subcommand".into(), subcommand.into());
        Self {
            started: std::time::Instant::now(),
            fields,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.fields.insert(key.into(), value.into());
    }

    pub fn emit(mut self) {
        let wall = self.started.elapsed().as_secs_f64();
        self.fields.insert("wall_seconds".into(), wall.into());
        eprintln!("{}", Value::Object(self.fields));
    }

    pub fn wall_seconds(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }
}
