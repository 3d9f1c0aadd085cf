//! Quantize a synthetic letter into direction-change and speed codes, decode
//! it back to a trace and check that re-encoding reproduces the codes.
//!
//! cargo run --release --example codec_round_trip -- [letter] [levels]

use handstyle::codec::{decode, encode, QuantizerConfig};
use handstyle::trace_io::{synth_trace, Letter, Rotation, SynthStyleSpec};

fn main() -> handstyle::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let letter = Letter::parse(args.first().map_or("S", |s| s.as_str()))?;
    let levels = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);

    let spec = SynthStyleSpec {
        jitter: 0.03,
        seed: 4,
        ..SynthStyleSpec::new(letter, Rotation::Clockwise)
    };
    let trace = synth_trace(&spec)?;
    let q = QuantizerConfig::calibrate([&trace], levels)?;
    let fs = encode(&trace, &q)?;
    println!("{} points, {} frames, v_max {:.3}", trace.points.len(), fs.len(), q.v_max);
    println!("dir   {:?}", fs.dir_codes());
    println!("speed {:?}", fs.speed_codes());

    let back = decode(&fs, &q)?;
    let again = encode(&back, &q)?;
    println!("re-encoded codes identical: {}", again.frames == fs.frames);
    let end = |t: &handstyle::trace_io::Trace| {
        let p = t.points.last().unwrap();
        (p.x, p.y)
    };
    // Decoding places every step at its bin centre, so position drifts
    // while the codes stay exact.
    println!("end point original {:.3?}, decoded {:.3?}", end(&trace), end(&back));
    Ok(())
}
