// temporary specimen renderer
use unspell::synthrender::{render_line, Background, RenderStyle};

fn main() {
    let style = RenderStyle {
        pitch: 16,
        glyph_height: 22,
        colour: vec![0.0],
        background: Background::Solid(vec![1.0]),
        noise_sigma: 0.0,
        jitter: 0,
    };
    let lines = ["abcdefghijklm", "nopqrstuvwxyz", "the quick fox", "jumps over it"];
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for text in lines {
        let rec = render_line(text, 13, &style, &[], 1);
        rows.push(rec.image.to_u8());
    }
    // also one noisy sample
    let noisy = RenderStyle {
        pitch: 16,
        glyph_height: 22,
        colour: vec![0.12],
        background: Background::Procedural { grain: 0.02 },
        noise_sigma: 0.03,
        jitter: 1,
    };
    let rec = render_line("reading works", 13, &noisy, &[], 7);
    rows.push(rec.image.to_u8());
    let w = 13 * 16;
    let h = 32 * rows.len();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in rows {
        out.extend(r);
    }
    std::fs::write("/tmp/specimen/sheet.pgm", out).unwrap();
    println!("written");
}
