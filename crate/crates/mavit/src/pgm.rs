//! Plain (ASCII) portable graymap output.

use std::fmt::Write;

/// Binary grid as a `P2` image with maxval 1: selected cells are white.
pub fn binary_grid(side: usize, cells: &[bool]) -> String {
    assert_eq!(cells.len(), side * side, "grid is not square");
    let mut out = format!("P2\n{side} {side}\n1\n");
    for row in cells.chunks(side) {
        let line: Vec<&str> = row.iter().map(|&c| if c { "1" } else { "0" }).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

/// Pixel values of a `P2` image, for checking what was written.
pub fn parse(text: &str) -> Option<(usize, usize, Vec<u32>)> {
    let mut tok = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tok.next()? != "P2" {
        return None;
    }
    let w: usize = tok.next()?.parse().ok()?;
    let h: usize = tok.next()?.parse().ok()?;
    let _max: u32 = tok.next()?.parse().ok()?;
    let px: Vec<u32> = tok.map(|t| t.parse().ok()).collect::<Option<_>>()?;
    (px.len() == w * h).then_some((w, h, px))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cells = [true, false, false, true];
        let (w, h, px) = parse(&binary_grid(2, &cells)).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(px, [1, 0, 0, 1]);
    }
}
