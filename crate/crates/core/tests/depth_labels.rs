use tempdepth::depthlabel::*;
use tempdepth::Error;

const RADIUS: f64 = 12.0;
const CENTER: f64 = 15.5;
const BASE: f64 = 100.0;

/// Image bounds matching the grid, so vertex coordinates are cell units.
fn unit_bounds() -> ImageBounds {
    ImageBounds { width: 32.0, height: 32.0 }
}

fn radius_of(r: usize, c: usize) -> f64 {
    ((c as f64 + 0.5 - CENTER).powi(2) + (r as f64 + 0.5 - CENTER).powi(2)).sqrt()
}

fn height(rho: f64) -> f64 {
    (RADIUS * RADIUS - rho * rho).max(0.0).sqrt()
}

/// Hemisphere of radius 12 seen from above, one vertex per chosen cell centre.
fn hemisphere(keep: impl Fn(usize, usize) -> bool) -> VertexSet {
    let mut v = Vec::new();
    for r in 0..32 {
        for c in 0..32 {
            let rho = radius_of(r, c);
            if rho <= RADIUS && keep(r, c) {
                v.push([c as f64 + 0.5, r as f64 + 0.5, BASE - height(rho)]);
            }
        }
    }
    VertexSet::new(v)
}

fn disk_cells() -> Vec<(usize, usize)> {
    (0..32)
        .flat_map(|r| (0..32).map(move |c| (r, c)))
        .filter(|&(r, c)| radius_of(r, c) <= RADIUS)
        .collect()
}

fn rim_radius() -> f64 {
    disk_cells().iter().map(|&(r, c)| radius_of(r, c)).fold(0.0, f64::max)
}

/// Normalized analytic nearness at a cell.
fn oracle(r: usize, c: usize) -> f64 {
    let h_min = height(rim_radius());
    (height(radius_of(r, c)) - h_min) / (RADIUS - h_min)
}

#[test]
fn dense_hemisphere_matches_analytic_depth() {
    let d = generate_living_depth(&hemisphere(|_, _| true), &unit_bounds()).unwrap();
    let g = d.values();
    assert_eq!(d.kind(), LabelKind::Living);
    assert_eq!(g.get(15, 15), 1.0);
    let disk = disk_cells();
    for r in 0..32 {
        for c in 0..32 {
            let expected = if disk.contains(&(r, c)) { oracle(r, c) } else { 0.0 };
            assert!((g.get(r, c) - expected).abs() < 1e-12, "cell ({r}, {c})");
        }
    }
    assert_eq!(g.min(), 0.0);
    assert_eq!(g.max(), 1.0);
}

#[test]
fn sparse_hemisphere_fills_holes_close_to_analytic() {
    let rim = rim_radius();
    let v = hemisphere(|r, c| radius_of(r, c) > rim - 1.5 || (r + c) % 3 == 0);
    assert!(v.len() < disk_cells().len());
    let d = generate_living_depth(&v, &unit_bounds()).unwrap();
    let g = d.values();
    assert_eq!(g.get(15, 15), 1.0);
    // Every hole has a splatted neighbour, so one averaging pass fills it
    // with a value bracketed by the exact neighbouring depths.
    let kept: Vec<(usize, usize)> = disk_cells()
        .into_iter()
        .filter(|&(r, c)| radius_of(r, c) > rim - 1.5 || (r + c) % 3 == 0)
        .collect();
    for (r, c) in disk_cells() {
        let got = g.get(r, c);
        if kept.contains(&(r, c)) {
            assert!((got - oracle(r, c)).abs() < 1e-12);
            continue;
        }
        let neighbours: Vec<f64> = kept
            .iter()
            .filter(|&&(rr, cc)| rr.abs_diff(r) <= 1 && cc.abs_diff(c) <= 1)
            .map(|&(rr, cc)| oracle(rr, cc))
            .collect();
        assert!(!neighbours.is_empty());
        let lo = neighbours.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = neighbours.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(got >= lo - 1e-12 && got <= hi + 1e-12, "cell ({r}, {c}): {got} not in [{lo}, {hi}]");
        assert!((got - oracle(r, c)).abs() < 0.15);
    }
    let mask = mask_from_depth(&d, 0.0);
    assert!(disk_cells().iter().filter(|&&(r, c)| radius_of(r, c) < rim).all(|&(r, c)| mask.contains(r, c)));
}

#[test]
fn threshold_mask_is_hull_without_rim() {
    let v = hemisphere(|_, _| true);
    let d = generate_living_depth(&v, &unit_bounds()).unwrap();
    let mask = mask_from_depth(&d, 0.0);
    let hull = hull_mask(&v, &unit_bounds()).unwrap();
    let rim = rim_radius();
    let disk = disk_cells();
    for r in 0..32 {
        for c in 0..32 {
            let in_disk = disk.contains(&(r, c));
            assert_eq!(hull.contains(r, c), in_disk, "hull ({r}, {c})");
            let on_rim = in_disk && (radius_of(r, c) - rim).abs() < 1e-12;
            assert_eq!(mask.contains(r, c), in_disk && !on_rim, "mask ({r}, {c})");
        }
    }
    assert_eq!(hull.count(), disk.len());

    let top = mask_from_depth(&d, 1.0);
    assert!(top.count() <= 1);
    assert_eq!(mask_from_depth(&spoof_depth(), 0.0).count(), 0);
}

#[test]
fn translation_in_depth_cancels() {
    let v = synthesize_face_surface(&FaceSurfaceParams::default()).unwrap();
    let bounds = ImageBounds::default();
    let a = generate_living_depth(&v, &bounds).unwrap();
    for dz in [-250.0, 37.5, 1000.0] {
        let b = generate_living_depth(&v.translated(0.0, 0.0, dz), &bounds).unwrap();
        for (x, y) in a.values().as_slice().iter().zip(b.values().as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn synthetic_faces() {
    let params = FaceSurfaceParams::default();
    let v = synthesize_face_surface(&params).unwrap();
    assert_eq!(v.len(), params.grid_size * params.grid_size);
    assert_eq!(v, synthesize_face_surface(&params).unwrap());

    let jittered = FaceSurfaceParams { jitter: Some((7, 1.5)), ..params };
    assert_eq!(
        synthesize_face_surface(&jittered).unwrap(),
        synthesize_face_surface(&jittered).unwrap()
    );
    assert_ne!(synthesize_face_surface(&jittered).unwrap(), v);

    let d = generate_living_depth(&v, &ImageBounds::default()).unwrap();
    let g = d.values();
    assert_eq!((g.min(), g.max()), (0.0, 1.0));
    // a centred dome peaks in the middle of the grid
    assert!(g.get(15, 15) > 0.95 && g.get(16, 16) > 0.95);

    let flat = FaceSurfaceParams { amplitude: 0.0, ..params };
    let err = generate_living_depth(&synthesize_face_surface(&flat).unwrap(), &ImageBounds::default());
    assert!(matches!(err, Err(Error::DegenerateExtent(_))));
}

#[test]
fn maps_round_trip_through_text() {
    let v = synthesize_face_surface(&FaceSurfaceParams::default()).unwrap();
    let d = generate_living_depth(&v, &ImageBounds::default()).unwrap();
    assert_eq!(DepthMap::from_csv(&d.to_csv()).unwrap(), d);
    assert_eq!(DepthMap::from_json(&d.to_json()).unwrap(), d);
    let m = mask_from_depth(&d, 0.0);
    assert_eq!(FaceMask::from_csv(&m.to_csv()).unwrap(), m);
    assert_eq!(FaceMask::from_json(&m.to_json()).unwrap(), m);
    let s = spoof_depth();
    assert_eq!(DepthMap::from_csv(&s.to_csv()).unwrap().kind(), LabelKind::Spoof);
}
