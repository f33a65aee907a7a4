use perpetual_lab::plot::{loglog_slope, render, PlotSpec, Series};

#[test]
fn empty_series_is_an_error() {
    let spec = PlotSpec::log_log("t", "x", "y");
    assert!(render(&[], &spec).is_err());
    assert!(render(&[Series::new("a", vec![])], &spec).is_err());
}

#[test]
fn power_law_slope_in_legend() {
    let pts: Vec<(f64, f64)> = (1..=12)
        .map(|i| {
            let x = 2f64.powi(i);
            (x, 3.0 * x.powf(1.37))
        })
        .collect();
    assert!((loglog_slope(&pts).unwrap() - 1.37).abs() < 1e-6);
    let svg = render(&[Series::new("p", pts)], &PlotSpec::log_log("t", "x", "y")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let slope: f64 = doc.descendants().find_map(|n| n.attribute("data-slope")).unwrap().parse().unwrap();
    assert!((slope - 1.37).abs() < 1e-6);
}

#[test]
fn linear_axes_carry_no_slope() {
    let svg = render(
        &[Series::new("p", vec![(0.0, 1.0), (1.0, -2.0)])],
        &PlotSpec { title: "a < b".into(), x_label: "x".into(), y_label: "y".into(), log_x: false, log_y: false },
    )
    .unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert!(doc.descendants().all(|n| n.attribute("data-slope").is_none()));
}
