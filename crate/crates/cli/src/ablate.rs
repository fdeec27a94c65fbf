//! The component grid: clipped ray sampling (CRS), object-centric density
//! bias (OCDB) and scene preservation (SP), switched on in five
//! combinations.

use std::fmt;

use boxfield_core::layout::SceneLayout;
use boxfield_core::optimize::{Init, NoObserver, RunObserver};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::pipeline::{build_targets, fresh_state, train};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSwitches {
    pub crs: bool,
    pub ocdb: bool,
    pub sp: bool,
}

impl AblationSwitches {
    pub fn label(&self) -> String {
        let on: Vec<&str> = [(self.crs, "CRS"), (self.ocdb, "OCDB"), (self.sp, "SP")]
            .into_iter()
            .filter_map(|(b, n)| b.then_some(n))
            .collect();
        if on.is_empty() {
            "none".into()
        } else {
            on.join("+")
        }
    }

    /// `cfg` with this row's components. Rows without the bias start from
    /// the uni-sphere blob; rows without SP train with `alpha = 0`.
    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut c = cfg.clone();
        c.optimizer.clipped_rays = self.crs;
        c.init = if self.ocdb {
            Init::ObjectCentric
        } else {
            Init::UniSphere
        };
        if !self.sp {
            c.optimizer.alpha = 0.0;
        }
        c
    }
}

/// The five rows, in table order.
pub fn ablation_rows() -> [AblationSwitches; 5] {
    let row = |crs, ocdb, sp| AblationSwitches { crs, ocdb, sp };
    [
        row(false, false, false),
        row(true, false, false),
        row(false, true, false),
        row(true, true, false),
        row(true, true, true),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub switches: AblationSwitches,
    pub grad_norm_step1: f64,
    pub outside_box_opacity: f64,
    pub target_loss: f64,
}

/// Runs every row from the same seed and layout.
pub fn run_ablation(
    cfg: &RunConfig,
    layout: &SceneLayout,
    mut observer_for: impl FnMut(&AblationSwitches) -> Result<Option<Box<dyn RunObserver<f64>>>, CliError>,
) -> Result<Vec<AblationRow>, CliError> {
    if !(cfg.optimizer.alpha > 0.0) {
        return Err(CliError::Input("ablation needs alpha > 0 for its SP row".into()));
    }
    let boxes = layout
        .world_boxes::<f64>()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let targets = build_targets(&cfg.oracle, &boxes, &cfg.optimizer.render)?;
    let mut rows = Vec::new();
    for switches in ablation_rows() {
        let row_cfg = switches.apply(cfg);
        let mut state = fresh_state(&row_cfg, layout.clone())?;
        let mut observer = observer_for(&switches)?;
        let records = match observer.as_deref_mut() {
            Some(o) => train(&mut state, &row_cfg, &targets, o)?,
            None => train(&mut state, &row_cfg, &targets, &mut NoObserver)?,
        };
        let first = records.iter().find(|r| r.step == 1);
        let last = records.last().expect("step-0 metrics are always recorded");
        rows.push(AblationRow {
            label: switches.label(),
            switches,
            grad_norm_step1: first.and_then(|r| r.grad_norm).unwrap_or(0.0),
            outside_box_opacity: last.outside_box_opacity,
            target_loss: last.target_loss.unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

/// Plain-text table of the grid.
pub struct AblationTable<'a>(pub &'a [AblationRow]);

impl fmt::Display for AblationTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "x" } else { "-" };
        writeln!(
            f,
            "{:<4} {:<4} {:<3}  {:>14}  {:>16}  {:>12}",
            "CRS", "OCDB", "SP", "grad_norm@1", "outside_opacity", "target_loss"
        )?;
        for r in self.0 {
            writeln!(
                f,
                "{:<4} {:<4} {:<3}  {:>14.6e}  {:>16.6}  {:>12.6}",
                mark(r.switches.crs),
                mark(r.switches.ocdb),
                mark(r.switches.sp),
                r.grad_norm_step1,
                r.outside_box_opacity,
                r.target_loss
            )?;
        }
        Ok(())
    }
}
