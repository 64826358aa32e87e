//! `simulate`: relative-depth series for the real, print, replay and rotated scenes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tempdepth::geometry::{ratio_variance, simulate_sequence, AttackScene, FrameEstimate, Scene};

use crate::config::RunConfig;
use crate::plot::{LinePlot, Series};
use crate::{write_output, CliError};

pub const CSV_NAME: &str = "simulate.csv";
pub const SVG_NAME: &str = "simulate.svg";

/// One CSV row; empty cells stand for a missing ratio or closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub scene_type: String,
    pub frame: usize,
    pub du_l: f64,
    pub du_m: f64,
    pub du_r: f64,
    pub ratio: Option<f64>,
    pub degenerate_flat: bool,
    pub closed_form_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSeries {
    pub scene: Scene,
    pub series: Vec<FrameEstimate>,
    pub variance: Option<f64>,
}

/// The sweep in output order, each scene paired with its shake schedule.
pub fn scenes(cfg: &RunConfig) -> Vec<(Scene, Vec<f64>)> {
    let parallel = AttackScene { theta: 0.0, ..cfg.attack };
    let rotated = AttackScene {
        theta: cfg.rotation_theta,
        ..cfg.attack
    };
    vec![
        (Scene::Real(cfg.real), Vec::new()),
        (Scene::Print(parallel), cfg.dv_schedule.clone()),
        (Scene::Replay(parallel), cfg.dv_schedule.clone()),
        (Scene::Rotated(rotated), Vec::new()),
    ]
}

pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SceneSeries>, CliError> {
    scenes(cfg)
        .into_par_iter()
        .map(|(scene, schedule)| {
            let series = simulate_sequence(&scene, cfg.frames, &schedule)
                .map_err(|e| CliError::Data(format!("{} scene: {e}", scene.name())))?;
            let variance = ratio_variance(&series);
            Ok(SceneSeries { scene, series, variance })
        })
        .collect()
}

pub fn rows(results: &[SceneSeries]) -> Vec<SimulationRow> {
    results
        .iter()
        .flat_map(|r| {
            r.series.iter().map(move |s| SimulationRow {
                scene_type: r.scene.name().to_string(),
                frame: s.frame,
                du_l: s.flow.du_l,
                du_m: s.flow.du_m,
                du_r: s.flow.du_r,
                ratio: s.estimate.ratio(),
                degenerate_flat: s.estimate.is_flat(),
                closed_form_ratio: s.closed_form,
            })
        })
        .collect()
}

pub fn to_csv(rows: &[SimulationRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Vec<SimulationRow>, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Data(format!("simulate csv row {}: {e}", i + 1))))
        .collect()
}

pub fn plot(results: &[SceneSeries]) -> LinePlot {
    let mut plot = LinePlot {
        title: "Estimated relative depth per frame".into(),
        x_label: "frame".into(),
        y_label: "estimated d1/d2".into(),
        ..LinePlot::default()
    };
    for r in results {
        let points: Vec<(f64, f64)> = r
            .series
            .iter()
            .filter_map(|s| s.estimate.ratio().map(|v| (s.frame as f64, v)))
            .collect();
        if points.is_empty() {
            plot.notes.push(format!("{}: flat (no ratio)", r.scene.name()));
        } else {
            plot.series.push(Series {
                name: r.scene.name().into(),
                points,
            });
        }
    }
    plot
}

/// Runs the sweep and writes the CSV and SVG into `cfg.out`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<SceneSeries>, CliError> {
    let results = run_sweep(cfg)?;
    write_output(&cfg.out, CSV_NAME, &to_csv(&rows(&results))?)?;
    write_output(&cfg.out, SVG_NAME, &plot(&results).to_svg())?;
    Ok(results)
}
