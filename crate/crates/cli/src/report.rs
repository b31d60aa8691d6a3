//! CSV assembly. Every report opens with `# command=... seed=...` and one
//! `# key=value` line per problem parameter.

use mconvex_core::{XRational, XReal};

pub(crate) struct Report {
    preamble: String,
    body: String,
    trailer: String,
}

impl Report {
    pub(crate) fn new(command: &str, seed: u64, params: &[(&str, String)]) -> Self {
        let mut preamble = format!("# command={command} seed={seed}\n");
        for (k, v) in params {
            preamble.push_str(&format!("# {k}={v}\n"));
        }
        Report { preamble, body: String::new(), trailer: String::new() }
    }

    pub(crate) fn preamble(&self) -> String {
        self.preamble.clone()
    }

    pub(crate) fn header(&mut self, cols: &[&str]) {
        self.body.push_str(&cols.join(","));
        self.body.push('\n');
    }

    pub(crate) fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().map(quote).collect();
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    /// A `#` line after the table.
    pub(crate) fn comment(&mut self, text: &str) {
        self.trailer.push_str(&format!("# {text}\n"));
    }

    pub(crate) fn finish(self) -> String {
        self.preamble + &self.body + &self.trailer
    }
}

fn quote(cell: String) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "+inf".into()
    } else {
        "-inf".into()
    }
}

pub(crate) fn fmt_xreal(v: &XReal) -> String {
    match v {
        XReal::Finite(f) => fmt_f64(*f),
        other => other.to_string(),
    }
}

pub(crate) fn fmt_xrational(v: &XRational) -> String {
    v.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "+inf");
        assert_eq!(fmt_xreal(&XReal::NegInf), "-inf");
    }

    #[test]
    fn quoting() {
        let mut r = Report::new("eig", 3, &[("u", "1,2".into())]);
        r.header(&["a", "b"]);
        r.row(["x,y".to_string(), "q\"".to_string()]);
        assert_eq!(r.finish(), "# command=eig seed=3\n# u=1,2\na,b\n\"x,y\",\"q\"\"\"\n");
    }
}
