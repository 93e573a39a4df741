//! Embedded monochrome bitmap atlas for a slab-serif monospace face,
//! lowercase a-z. Each glyph is an 8x12 cell: rows 0-2 ascenders, rows 3-8
//! the x-height band, row 8 the baseline, rows 9-11 descenders. `#` is ink.

const GLYPH_W: usize = 8;
const GLYPH_H: usize = 12;

#[rustfmt::skip]
const ATLAS: [(&str, [&str; 12]); 26] = [
    ("a", [
        "........",
        "........",
        "........",
        ".#####..",
        "....##..",
        ".#####..",
        "##..##..",
        "##..##..",
        ".###.##.",
        "........",
        "........",
        "........",
    ]),
    ("b", [
        "###.....",
        ".##.....",
        ".##.....",
        ".##.##..",
        ".###.##.",
        ".##..##.",
        ".##..##.",
        ".###.##.",
        "###.##..",
        "........",
        "........",
        "........",
    ]),
    ("c", [
        "........",
        "........",
        "........",
        ".#####..",
        "##...##.",
        "##......",
        "##......",
        "##...##.",
        ".#####..",
        "........",
        "........",
        "........",
    ]),
    ("d", [
        "....###.",
        "....##..",
        "....##..",
        ".##.##..",
        "##.###..",
        "##..##..",
        "##..##..",
        "##.###..",
        ".##.###.",
        "........",
        "........",
        "........",
    ]),
    ("e", [
        "........",
        "........",
        "........",
        ".####...",
        "##..##..",
        "######..",
        "##......",
        "##...#..",
        ".####...",
        "........",
        "........",
        "........",
    ]),
    ("f", [
        "..####..",
        ".##..#..",
        ".##.....",
        "#####...",
        ".##.....",
        ".##.....",
        ".##.....",
        ".##.....",
        "####....",
        "........",
        "........",
        "........",
    ]),
    ("g", [
        "........",
        "........",
        "........",
        ".###.##.",
        "##..##..",
        "##..##..",
        "##..##..",
        ".#####..",
        "....##..",
        "##..##..",
        ".####...",
        "........",
    ]),
    ("h", [
        "###.....",
        ".##.....",
        ".##.....",
        ".##.##..",
        ".###.##.",
        ".##..##.",
        ".##..##.",
        ".##..##.",
        "###.###.",
        "........",
        "........",
        "........",
    ]),
    ("i", [
        "..##....",
        "........",
        "........",
        ".###....",
        "..##....",
        "..##....",
        "..##....",
        "..##....",
        "######..",
        "........",
        "........",
        "........",
    ]),
    ("j", [
        "....##..",
        "........",
        "........",
        "..####..",
        "....##..",
        "....##..",
        "....##..",
        "....##..",
        "....##..",
        "##..##..",
        ".####...",
        "........",
    ]),
    ("k", [
        "###.....",
        ".##.....",
        ".##.....",
        ".##..##.",
        ".##.##..",
        ".####...",
        ".##.##..",
        ".##..##.",
        "###..###",
        "........",
        "........",
        "........",
    ]),
    ("l", [
        ".###....",
        "..##....",
        "..##....",
        "..##....",
        "..##....",
        "..##....",
        "..##....",
        "..##....",
        "######..",
        "........",
        "........",
        "........",
    ]),
    ("m", [
        "........",
        "........",
        "........",
        "###.##..",
        "##.##.##",
        "##.##.##",
        "##.##.##",
        "##.##.##",
        "##.##.##",
        "........",
        "........",
        "........",
    ]),
    ("n", [
        "........",
        "........",
        "........",
        "##.##...",
        "###.##..",
        "##..##..",
        "##..##..",
        "##..##..",
        "##..###.",
        "........",
        "........",
        "........",
    ]),
    ("o", [
        "........",
        "........",
        "........",
        ".####...",
        "##..##..",
        "##..##..",
        "##..##..",
        "##..##..",
        ".####...",
        "........",
        "........",
        "........",
    ]),
    ("p", [
        "........",
        "........",
        "........",
        "###.##..",
        ".###.##.",
        ".##..##.",
        ".##..##.",
        ".###.##.",
        ".##.##..",
        ".##.....",
        "###.....",
        "........",
    ]),
    ("q", [
        "........",
        "........",
        "........",
        ".##.###.",
        "##.###..",
        "##..##..",
        "##..##..",
        "##.###..",
        ".##.##..",
        "....##..",
        "...####.",
        "........",
    ]),
    ("r", [
        "........",
        "........",
        "........",
        "###.##..",
        ".###.##.",
        ".##.....",
        ".##.....",
        ".##.....",
        "####....",
        "........",
        "........",
        "........",
    ]),
    ("s", [
        "........",
        "........",
        "........",
        ".#####..",
        "##......",
        ".####...",
        "....##..",
        "....##..",
        "#####...",
        "........",
        "........",
        "........",
    ]),
    ("t", [
        ".##.....",
        ".##.....",
        ".##.....",
        "#####...",
        ".##.....",
        ".##.....",
        ".##.....",
        ".##..#..",
        "..###...",
        "........",
        "........",
        "........",
    ]),
    ("u", [
        "........",
        "........",
        "........",
        "##..##..",
        "##..##..",
        "##..##..",
        "##..##..",
        "##..##..",
        ".###.##.",
        "........",
        "........",
        "........",
    ]),
    ("v", [
        "........",
        "........",
        "........",
        "##...##.",
        "##...##.",
        ".##.##..",
        ".##.##..",
        "..###...",
        "...#....",
        "........",
        "........",
        "........",
    ]),
    ("w", [
        "........",
        "........",
        "........",
        "##.#..##",
        "##.##.##",
        "##.##.##",
        ".######.",
        ".##..##.",
        ".#...#..",
        "........",
        "........",
        "........",
    ]),
    ("x", [
        "........",
        "........",
        "........",
        "##...##.",
        ".##.##..",
        "..###...",
        "..###...",
        ".##.##..",
        "##...##.",
        "........",
        "........",
        "........",
    ]),
    ("y", [
        "........",
        "........",
        "........",
        "##..##..",
        "##..##..",
        "##..##..",
        "##..##..",
        ".#####..",
        "....##..",
        "##..##..",
        ".####...",
        "........",
    ]),
    ("z", [
        "........",
        "........",
        "........",
        "######..",
        "...##...",
        "..##....",
        ".##.....",
        "##...#..",
        "######..",
        "........",
        "........",
        "........",
    ]),
];

/// Ink mask for one lowercase letter: `GLYPH_H` rows of `GLYPH_W` booleans.
pub struct Glyph {
    pub width: usize,
    pub height: usize,
    mask: Vec<bool>,
}

impl Glyph {
    pub fn ink(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }
}

/// Look up the atlas glyph for a character; space has no ink and returns
/// `None`, any other character outside a-z is absent from the atlas.
pub fn glyph(c: char) -> Option<&'static Glyph> {
    use std::sync::OnceLock;
    static PARSED: OnceLock<Vec<Glyph>> = OnceLock::new();
    let parsed = PARSED.get_or_init(|| {
        ATLAS
            .iter()
            .map(|(_, rows)| {
                let mut mask = Vec::with_capacity(GLYPH_W * GLYPH_H);
                for row in rows {
                    assert_eq!(row.len(), GLYPH_W, "atlas row width");
                    for b in row.bytes() {
                        mask.push(b == b'#');
                    }
                }
                Glyph {
                    width: GLYPH_W,
                    height: GLYPH_H,
                    mask,
                }
            })
            .collect()
    });
    if c.is_ascii_lowercase() {
        Some(&parsed[c as usize - 'a' as usize])
    } else {
        None
    }
}

pub const fn cell_size() -> (usize, usize) {
    (GLYPH_W, GLYPH_H)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_lowercase_coverage() {
        for c in 'a'..='z' {
            let g = glyph(c).unwrap();
            assert_eq!((g.width, g.height), (8, 12));
            let ink_count = (0..12)
                .flat_map(|r| (0..8).map(move |c| (r, c)))
                .filter(|&(r, c)| g.ink(r, c))
                .count();
            assert!(ink_count >= 8, "glyph {c} has almost no ink");
        }
        assert!(glyph(' ').is_none());
        assert!(glyph('A').is_none());
    }

    #[test]
    fn glyphs_are_pairwise_distinct() {
        for a in 'a'..='z' {
            for b in (a..='z').skip(1) {
                let ga = glyph(a).unwrap();
                let gb = glyph(b).unwrap();
                let same = (0..12)
                    .all(|r| (0..8).all(|c| ga.ink(r, c) == gb.ink(r, c)));
                assert!(!same, "glyphs {a} and {b} are identical");
            }
        }
    }
}
