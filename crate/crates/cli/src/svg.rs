//! Minimal SVG emission for curve and tour plots.

pub fn polyline_document(points: &[(f64, f64)], width: f64, height: f64) -> String {
    let mut path = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            path.push(' ');
        }
        path.push_str(&format!("{x:.3},{y:.3}"));
    }
    let mut dots = String::new();
    for (x, y) in points {
        dots.push_str(&format!(
            "  <circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{:.3}\" fill=\"#c33\"/>\n",
            (width.max(height) / 200.0).max(0.5)
        ));
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width:.3} {height:.3}\">\n  \
         <polyline points=\"{path}\" fill=\"none\" stroke=\"#226\" stroke-width=\"{:.3}\"/>\n{dots}</svg>\n",
        (width.max(height) / 400.0).max(0.25)
    )
}

/// Vertex count of a polyline document, for sanity checks.
#[cfg(test)]
pub fn polyline_vertex_count(svg: &str) -> usize {
    svg.split("points=\"")
        .nth(1)
        .and_then(|s| s.split('"').next())
        .map(|p| p.split_whitespace().count())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_count_matches_input() {
        let pts: Vec<(f64, f64)> = (0..64).map(|i| (i as f64, (i * 7 % 13) as f64)).collect();
        let svg = polyline_document(&pts, 64.0, 13.0);
        assert_eq!(polyline_vertex_count(&svg), 64);
        assert!(svg.starts_with("<svg"));
    }
}
