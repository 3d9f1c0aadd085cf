//! Render a synthetic corpus whose writers vary in rotation, tempo and entry
//! corner, print each writer's style factors and save a trace grid as SVG.
//!
//! cargo run --release --example synth_corpus -- [out.svg]

use handstyle::trace_io::{render_traces_svg, Letter, SynthCorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth_corpus.svg".into());
    let mut cfg = SynthCorpusConfig {
        letters: "ACHOSX".chars().map(|c| Letter::from_char(c).unwrap()).collect(),
        n_writers: 4,
        seed: 11,
        ..SynthCorpusConfig::default()
    };
    cfg.set_styles(["rotation", "tempo", "corner"])?;
    for i in 0..cfg.n_writers {
        let s = cfg.writer_style(i);
        println!(
            "{}  {:<13} tempo {:.2}  corner {:?}",
            SynthCorpusConfig::writer_id(i),
            s.rotation.name(),
            s.tempo,
            s.start_corner
        );
    }
    let traces = cfg.generate()?;
    for t in traces.iter().filter(|t| t.letter.as_char() == 'O') {
        println!("{} O: {} points over {:.2}s", t.writer_id, t.points.len(), t.duration());
    }
    let refs: Vec<_> = traces.iter().collect();
    std::fs::write(&out, render_traces_svg(&refs, 6))?;
    println!("wrote {out}");
    Ok(())
}
