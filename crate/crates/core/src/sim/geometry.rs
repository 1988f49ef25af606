use crate::se2::Point2;

fn cross(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: &Point2, a: &Point2, b: &Point2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Closed-segment intersection test; touching counts.
pub fn segments_intersect(p1: &Point2, p2: &Point2, q1: &Point2, q2: &Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

pub fn point_segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Nearest point of segment `ab` to `p`.
pub fn closest_point_on_segment(p: &Point2, a: &Point2, b: &Point2) -> Point2 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return *a;
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    Point2::new(a.x + t * dx, a.y + t * dy)
}

pub fn segment_segment_distance(a1: &Point2, a2: &Point2, b1: &Point2, b2: &Point2) -> f64 {
    if segments_intersect(a1, a2, b1, b2) {
        return 0.0;
    }
    point_segment_distance(a1, b1, b2)
        .min(point_segment_distance(a2, b1, b2))
        .min(point_segment_distance(b1, a1, a2))
        .min(point_segment_distance(b2, a1, a2))
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Resamples a polyline so consecutive points are at most `spacing` apart.
/// Original vertices are kept.
pub fn densify(points: &[Point2], spacing: f64) -> Vec<Point2> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    let mut out = vec![*first];
    for w in points.windows(2) {
        let len = w[0].distance(&w[1]);
        let n = (len / spacing).ceil().max(1.0) as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            out.push(Point2::new(
                w[0].x + t * (w[1].x - w[0].x),
                w[0].y + t * (w[1].y - w[0].y),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn intersections() {
        assert!(segments_intersect(&p(0., 0.), &p(2., 2.), &p(0., 2.), &p(2., 0.)));
        assert!(!segments_intersect(&p(0., 0.), &p(1., 0.), &p(0., 1.), &p(1., 1.)));
        assert!(segments_intersect(&p(0., 0.), &p(1., 0.), &p(1., 0.), &p(1., 1.)));
        assert!(!segments_intersect(&p(0., 0.), &p(1., 0.), &p(2., 0.), &p(3., 0.)));
        assert!(segments_intersect(&p(0., 0.), &p(2., 0.), &p(1., 0.), &p(3., 0.)));
    }

    #[test]
    fn distances() {
        assert!((point_segment_distance(&p(1., 1.), &p(0., 0.), &p(2., 0.)) - 1.0).abs() < 1e-12);
        assert!((point_segment_distance(&p(3., 0.), &p(0., 0.), &p(2., 0.)) - 1.0).abs() < 1e-12);
        assert_eq!(segment_segment_distance(&p(0., 0.), &p(2., 2.), &p(0., 2.), &p(2., 0.)), 0.0);
        assert!((segment_segment_distance(&p(0., 0.), &p(1., 0.), &p(0., 1.), &p(1., 1.)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn densify_keeps_vertices_and_spacing() {
        let pts = vec![p(0., 0.), p(1., 0.), p(1., 0.6)];
        let d = densify(&pts, 0.25);
        assert_eq!(d.first(), Some(&p(0., 0.)));
        assert_eq!(d.last(), Some(&p(1., 0.6)));
        assert!(d.contains(&p(1., 0.)));
        assert!(d.windows(2).all(|w| w[0].distance(&w[1]) <= 0.25 + 1e-12));
        assert!((polyline_length(&d) - 1.6).abs() < 1e-12);
    }
}
