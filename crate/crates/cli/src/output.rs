//! Byte-stable CSV output.

use std::fmt::Write as _;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Nine significant digits, plain decimal where reasonable.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(command: &str, config_hash: &str, seed: u64, header: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "# ehrelay {VERSION} command={command} config-sha256={config_hash} seed={seed}"
        );
        text.push_str(&header.join(","));
        text.push('\n');
        Csv {
            text,
            columns: header.len(),
        }
    }

    /// Adds a `# note` line after the existing comment lines.
    pub fn note(&mut self, text: &str) {
        let at: usize = self
            .text
            .split_inclusive('\n')
            .take_while(|l| l.starts_with('#'))
            .map(str::len)
            .sum();
        self.text.insert_str(at, &format!("# note: {text}\n"));
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Aligns a CSV table into columns, keeping its comment line.
pub fn pretty(csv: &str) -> String {
    let (comments, rows): (Vec<&str>, Vec<&str>) = csv.lines().partition(|l| l.starts_with('#'));
    let cells: Vec<Vec<&str>> = rows.iter().map(|r| r.split(',').collect()).collect();
    let cols = cells.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            cells
                .iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for c in comments {
        out.push_str(c);
        out.push('\n');
    }
    for r in cells {
        let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notes_follow_the_provenance_line() {
        let mut c = Csv::new("x", "ab", 3, &["a"]);
        c.note("one");
        c.note("two");
        c.row(&["1".into()]);
        let t = c.into_string();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("# ehrelay"));
        assert_eq!(&lines[1..], ["# note: one", "# note: two", "a", "1"]);
    }

    #[test]
    fn pretty_aligns_columns() {
        let t = pretty("# head\na,bb\n100,2\n");
        assert_eq!(t, "# head\n  a  bb\n100   2\n");
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.0), "1.00000000");
        assert_eq!(num(0.713603091), "0.713603091");
        assert_eq!(num(-0.0022912), "-0.00229120000");
        assert_eq!(num(12345.678912), "12345.6789");
        assert_eq!(num(1e-9), "1.00000000e-9");
    }
}
