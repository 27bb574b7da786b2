use std::fmt::Write as _;

/// Twelve significant digits, exponent form; identical across runs and locales.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

/// CSV text with `\n` line endings.
#[derive(Clone, Debug, Default)]
pub struct Csv {
    pub header: String,
    pub body: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Self { header: columns.join(","), body: String::new() }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        let fields: Vec<String> = fields.into_iter().map(quote).collect();
        let _ = writeln!(self.body, "{}", fields.join(","));
    }

    pub fn rows(&self) -> usize {
        self.body.lines().count()
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header, self.body)
    }
}

/// RFC 4180 quoting for fields holding a comma or a quote.
fn quote(field: String) -> String {
    if field.contains([',', '"']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field
    }
}
