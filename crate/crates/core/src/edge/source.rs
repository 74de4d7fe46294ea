use std::path::{Path, PathBuf};

use crate::frame::{GrayImage, MonitorFrame};
use crate::sim::{self, render_frame_with, RenderOptions, Scenario, VitalState};

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("source exhausted")]
    Exhausted,
    #[error("{0}")]
    Failed(String),
}

/// Anything that yields monitor frames.
pub trait FrameSource: Send {
    fn next_frame(&mut self) -> Result<MonitorFrame, SourceError>;
}

impl<F> FrameSource for F
where
    F: FnMut() -> Result<MonitorFrame, SourceError> + Send,
{
    fn next_frame(&mut self) -> Result<MonitorFrame, SourceError> {
        self()
    }
}

/// Renders a simulated monitor. The first frame shows the state at
/// scenario time 0; each later frame advances the simulation by `period`.
pub struct SimSource {
    scenario: Scenario,
    state: VitalState,
    period: f64,
    started: bool,
    pub options: RenderOptions,
}

impl SimSource {
    pub fn new(scenario: Scenario, period: f64) -> Result<Self, sim::ConfigError> {
        let state = sim::init_scenario(&scenario)?;
        Ok(SimSource {
            scenario,
            state,
            period,
            started: false,
            options: RenderOptions::default(),
        })
    }

    pub fn with_options(mut self, options: RenderOptions) -> Self {
        self.options = options;
        self
    }

    pub fn state(&self) -> &VitalState {
        &self.state
    }

    /// Advances the simulation without rendering.
    pub fn advance(&mut self) -> &VitalState {
        if self.started {
            self.state = sim::step(&self.state, &self.scenario, self.period);
        }
        self.started = true;
        &self.state
    }
}

impl FrameSource for SimSource {
    fn next_frame(&mut self) -> Result<MonitorFrame, SourceError> {
        self.advance();
        render_frame_with(&self.state, &self.options)
            .map_err(|e| SourceError::Failed(e.to_string()))
    }
}

/// Replays PGM files from a directory in name order. Frame `k` is stamped
/// `start_time + k * period`.
pub struct PgmDirSource {
    files: Vec<PathBuf>,
    next: usize,
    start_time: f64,
    period: f64,
}

impl PgmDirSource {
    pub fn open(dir: &Path, start_time: f64, period: f64) -> std::io::Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
            .collect();
        files.sort();
        Ok(PgmDirSource {
            files,
            next: 0,
            start_time,
            period,
        })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for PgmDirSource {
    fn next_frame(&mut self) -> Result<MonitorFrame, SourceError> {
        let path = self.files.get(self.next).ok_or(SourceError::Exhausted)?;
        let t = self.start_time + self.next as f64 * self.period;
        self.next += 1;
        let file = std::fs::File::open(path)
            .map_err(|e| SourceError::Failed(format!("{}: {e}", path.display())))?;
        let img = GrayImage::read_pgm(std::io::BufReader::new(file))
            .map_err(|e| SourceError::Failed(format!("{}: {e}", path.display())))?;
        Ok(MonitorFrame::new(img, t))
    }
}
