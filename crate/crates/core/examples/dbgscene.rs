use viseme_core::codec::*;
use viseme_core::image::MultiImage;

fn main() {
    let img = MultiImage::load(std::path::Path::new("/tmp/viseme-smoke/scene.pgm"), None).unwrap();
    let result = encode(&img, &EncodeConfig { precision: 4.0, ..Default::default() }).unwrap();
    let (back, claims) = synthesize_with_labels(&result.sentence, &result.alphabet).unwrap();
    let simple: Vec<_> = result.sentence.items.iter().filter_map(|i| match i {
        SentenceItem::Simple { letter, pose } => Some((letter, pose)),
        _ => None,
    }).collect();
    let w = 128usize;
    let mut worst: Vec<(i32, usize, usize)> = Vec::new();
    for y in 0..128usize {
        for x in 0..128usize {
            let d = (img.sample(0, x as u32, y as u32) as i32 - back.sample(0, x as u32, y as u32) as i32).abs();
            worst.push((d, x, y));
        }
    }
    worst.sort_unstable_by(|a, b| b.0.cmp(&a.0));
    for q in [0, 164, 820, 1638, 4096] {
        println!("error percentile {:5.1}%: {}", 100.0 * q as f64 / 16384.0, worst[q].0);
    }
    for &(d, x, y) in worst.iter().take(8) {
        let wi = claims[y * w + x] as usize;
        let (_, pose) = simple[wi];
        let dist = ((x as f64 - pose.x_g).powi(2) + (y as f64 - pose.y_g).powi(2)).sqrt();
        let bp = pose.bands[0];
        println!(
            "err {d:3} at ({x:3},{y:3}) word {wi:4} dist {dist:5.1} surf {:4} lu {:9.4} zc {:7.2} txz {:6.3} tyz {:6.3} orig {} got {}",
            pose.surface, bp.lambda_u, bp.z_center, bp.theta_xz, bp.theta_yz,
            img.sample(0, x as u32, y as u32), back.sample(0, x as u32, y as u32)
        );
    }
}
