use geotopo::metrics::{tiv_all, LatencyMatrix};
use geotopo::*;

fn eq_km(km: f64) -> GeoPoint {
    GeoPoint::new(0.0, (km / EARTH_RADIUS_KM).to_degrees()).unwrap()
}

fn grid() -> DensityGrid {
    DensityGrid::new(2, 3, (40.0, 55.0, -5.0, 20.0), vec![1.0, 2.0, 3.0, 3.0, 2.0, 1.0]).unwrap()
}

#[test]
fn stages_survive_their_file_formats() {
    let g = generate_pfp(&PfpParams { node_count: 150, ..Default::default() }, 11).unwrap();
    let params = EmbeddingParams { max_locations: 6, patience: 300, ..Default::default() };
    let e = initial_embedding(&g, &grid(), &params, 12).unwrap();
    let (e, stats) = optimize_embedding(&g, e, &params, 13).unwrap();
    assert_eq!(stats.trailing_unchanged, 300);
    let h = build_border_graph(&g, &e, 300.0).unwrap();

    let mut buf = Vec::new();
    g.write(&mut buf).unwrap();
    let g2 = AsGraph::read(&buf[..]).unwrap();
    assert_eq!(g, g2);
    buf.clear();
    e.write(&mut buf).unwrap();
    let e2 = Embedding::read(&buf[..], g2.node_count()).unwrap();
    buf.clear();
    h.write(&mut buf, &e, true).unwrap();
    let h2 = BorderGraph::read(&buf[..], &g2, &e2, 300.0).unwrap();
    assert_eq!(h.inter_edges().len(), h2.inter_edges().len());

    let devices: Vec<EndDevice> = (0..25)
        .map(|i| EndDevice::new(format!("d{i}"), GeoPoint::new(41.0 + i as f64 * 0.5, -4.0 + i as f64).unwrap()))
        .collect();
    let direct = Model { graph: g, embedding: e, border: h };
    let reread = Model { graph: g2, embedding: e2, border: h2 };
    let a = LatencyModel::new(&direct, devices.clone(), RoutingParams::default(), 14).unwrap();
    let b = LatencyModel::new(&reread, devices, RoutingParams::default(), 14).unwrap();
    assert_eq!(a.latency_matrix().unwrap(), b.latency_matrix().unwrap());
}

#[test]
fn hot_potato_detour_shows_up_as_a_tiv() {
    let mut g = AsGraph::new(3);
    g.add_edge(0, 1).unwrap();
    g.add_edge(1, 2).unwrap();
    let e = Embedding::from_points(vec![
        vec![eq_km(0.0), eq_km(2000.0)],
        vec![eq_km(-100.0), eq_km(2100.0)],
        vec![eq_km(2300.0)],
    ])
    .unwrap();
    let model = Model::build(g, e, 300.0).unwrap();
    let devices = vec![
        EndDevice::new("a", eq_km(0.0)),
        EndDevice::new("b", eq_km(2300.0)),
        EndDevice::new("c", eq_km(2000.0)),
    ];
    let params = RoutingParams { h_max: 20.0, ..Default::default() };
    let lm = LatencyModel::new(&model, devices, params, 1).unwrap();
    assert!(lm.attachments().iter().all(|a| !a.fallback));
    let m = LatencyMatrix::from_dense(3, lm.latency_matrix().unwrap()).unwrap();
    // a -> b detours through the far side of AS1 (2500 km); via c it is 2000 + 300.
    let s = tiv_severity(&m, 0, 1).unwrap();
    assert!((s - 2500.0 / 2300.0).abs() < 1e-9, "{s}");
    let violated: Vec<_> = tiv_all(&m).into_iter().filter(|t| t.2 > 1.0 + 1e-9).collect();
    // Collinear legs can round to a severity of 1 + ulp; only the detour is material.
    assert_eq!(violated.len(), 1, "{violated:?}");
    assert_eq!((violated[0].0, violated[0].1), (0, 1));
}
