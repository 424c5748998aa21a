//! End-to-end inference: encode, filter, partition, run the network, merge.

use crate::encoding::{encode_and_partition, DEFAULT_PARTITION_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Lasso, Point3};
use crate::network::{Network, Real};

/// Selected cloud indices plus the selection probability of every point.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Ascending source indices with probability above 0.5.
    pub selected: Vec<usize>,
    /// One entry per cloud point; points dropped by the intention filter hold 0.
    pub probabilities: Vec<f64>,
}

impl Selection {
    fn empty(n: usize) -> Selection {
        Selection {
            selected: Vec::new(),
            probabilities: vec![0.0; n],
        }
    }

    /// Probabilities of the selected points, aligned with `selected`.
    pub fn selected_probabilities(&self) -> Vec<f64> {
        self.selected.iter().map(|&i| self.probabilities[i]).collect()
    }
}

pub fn predict_selection<T: Real>(
    points: &[Point3],
    camera: &CameraPose,
    lasso: &Lasso,
    net: &Network<T>,
) -> Result<Selection> {
    predict_selection_with_threshold(points, camera, lasso, net, DEFAULT_PARTITION_THRESHOLD)
}

pub fn predict_selection_with_threshold<T: Real>(
    points: &[Point3],
    camera: &CameraPose,
    lasso: &Lasso,
    net: &Network<T>,
    thre: usize,
) -> Result<Selection> {
    let (partitions, _) = match encode_and_partition(points, camera, lasso, thre) {
        Ok(v) => v,
        Err(Error::EmptyIntentionArea) => return Ok(Selection::empty(points.len())),
        Err(e) => return Err(e),
    };
    let mut out = Selection::empty(points.len());
    for part in &partitions {
        let pred = net.predict(part)?;
        for (p, &rho) in part.points.iter().zip(&pred.probabilities) {
            out.probabilities[p.source_index] = rho;
        }
    }
    out.selected = (0..points.len()).filter(|&i| out.probabilities[i] > 0.5).collect();
    Ok(out)
}
