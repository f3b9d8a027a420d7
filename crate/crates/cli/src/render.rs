//! Plain-text views of the JSON reports.

use permclear_core::Matrix;
use std::fmt::Write;

#[derive(Default)]
pub struct Table {
    out: String,
}

impl Table {
    pub fn new(title: &str) -> Self {
        let mut t = Self::default();
        let _ = writeln!(t.out, "{title}");
        let _ = writeln!(t.out, "{}", "-".repeat(title.chars().count()));
        t
    }

    pub fn row(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.out, "{key:<28} {value}");
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.row(key, format_num(value))
    }

    pub fn matrix(&mut self, key: &str, m: &Matrix) -> &mut Self {
        let _ = writeln!(self.out, "{key}");
        for i in 0..m.nrows() {
            let cells: Vec<String> = (0..m.ncols()).map(|j| format!("{:>10.6}", m[(i, j)])).collect();
            let _ = writeln!(self.out, "  {}", cells.join(" "));
        }
        self
    }

    pub fn line(&mut self, text: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.out, "{text}");
        self
    }

    pub fn finish(&mut self) -> String {
        std::mem::take(&mut self.out)
    }
}

fn format_num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e6).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.3e}")
    }
}
