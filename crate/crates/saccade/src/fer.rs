//! FER2013 CSV: header `emotion,pixels,Usage`, one image per row with 2304
//! space-separated bytes, routed by the Usage column.

use std::path::Path;

use saccade_core::data::{Dataset, Split};

use crate::error::{Error, Result};

pub const SIDE: usize = 48;
pub const CLASSES: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct FerSplits {
    pub train: Dataset,
    pub public_test: Dataset,
    pub private_test: Dataset,
}

#[derive(Default)]
struct Acc {
    pixels: Vec<f32>,
    labels: Vec<usize>,
}

pub fn parse_fer_csv(text: &str, what: &str) -> Result<FerSplits> {
    let err = |line: usize, detail: String| Error::Parse {
        what: what.into(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "emotion,pixels,Usage" => {}
        Some((_, h)) => return Err(err(1, format!("expected header 'emotion,pixels,Usage', found '{}'", h.trim()))),
        None => return Err(err(1, "empty file".into())),
    }
    let (mut train, mut public, mut private) = (Acc::default(), Acc::default(), Acc::default());
    for (i, line) in lines {
        let n = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, ',');
        let (Some(label), Some(pixels), Some(usage)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(err(n, "expected 3 comma-separated fields".into()));
        };
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| err(n, format!("bad emotion '{label}'")))?;
        if label >= CLASSES {
            return Err(err(n, format!("emotion {label} outside 0..{CLASSES}")));
        }
        let acc = match usage.trim() {
            "Training" => &mut train,
            "PublicTest" => &mut public,
            "PrivateTest" => &mut private,
            other => return Err(err(n, format!("unknown Usage '{other}'"))),
        };
        let start = acc.pixels.len();
        for tok in pixels.split_ascii_whitespace() {
            let v: u8 = tok.parse().map_err(|_| err(n, format!("bad pixel '{tok}'")))?;
            acc.pixels.push(v as f32 / 255.0);
        }
        let got = acc.pixels.len() - start;
        if got != SIDE * SIDE {
            return Err(err(n, format!("{got} pixels, expected {}", SIDE * SIDE)));
        }
        acc.labels.push(label);
    }
    let make = |a: Acc, split| Dataset::new("fer2013", split, SIDE, CLASSES, a.pixels, a.labels);
    Ok(FerSplits {
        train: make(train, Split::Train)?,
        public_test: make(public, Split::Val)?,
        private_test: make(private, Split::Test)?,
    })
}

pub fn load_fer_csv(path: &Path) -> Result<FerSplits> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fer_csv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: usize, pixels: &str, usage: &str) -> String {
        format!("{label},{pixels},{usage}\n")
    }

    #[test]
    fn zero_row_goes_to_train() {
        let zeros = vec!["0"; 2304].join(" ");
        let csv = format!("emotion,pixels,Usage\n{}", row(3, &zeros, "Training"));
        let s = parse_fer_csv(&csv, "t").unwrap();
        assert_eq!(s.train.len(), 1);
        assert_eq!(s.train.labels(), &[3]);
        assert!(s.train.image(0).iter().all(|&v| v == 0.0));
        assert!(s.public_test.is_empty() && s.private_test.is_empty());
    }

    #[test]
    fn pixels_are_row_major() {
        let px: Vec<String> = (0..2304).map(|i| (i % 256).to_string()).collect();
        let csv = format!("emotion,pixels,Usage\n{}", row(0, &px.join(" "), "PublicTest"));
        let s = parse_fer_csv(&csv, "t").unwrap();
        let img = s.public_test.image(0);
        assert_eq!(img[1], 1.0 / 255.0);
        assert_eq!(img[48], 48.0 / 255.0);
    }

    #[test]
    fn routing_and_errors() {
        let zeros = vec!["0"; 2304].join(" ");
        let csv = format!(
            "emotion,pixels,Usage\n{}{}{}",
            row(1, &zeros, "Training"),
            row(2, &zeros, "PrivateTest"),
            row(6, &zeros, "PublicTest")
        );
        let s = parse_fer_csv(&csv, "t").unwrap();
        assert_eq!((s.train.len(), s.public_test.len(), s.private_test.len()), (1, 1, 1));
        assert_eq!(s.private_test.labels(), &[2]);

        let short = format!("emotion,pixels,Usage\n{}{}", row(1, &zeros, "Training"), row(1, "0 0", "Training"));
        match parse_fer_csv(&short, "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
