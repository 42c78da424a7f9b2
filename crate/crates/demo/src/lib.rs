//! Browser bindings: generate a synthetic scene, look at its direction map,
//! decode it back and score the result, and clean up raw count regressions.

use dirseg::metrics::mpq;
use dirseg::reconstruct::{
    assign_classes, connected_components, decode_maps, postprocess_counts as round_counts,
};
use dirseg::render::{direction_rgb, overlay_rgb};
use dirseg::synth::generate;
use dirseg::{
    Connectivity, CountVector, InstanceMap, PanopticResult, PqAggregation, ReconstructionConfig,
    SynthBundle, SynthConfig,
};
use wasm_bindgen::prelude::*;

fn rgba(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}

/// One synthetic image and its decoded reconstructions.
#[wasm_bindgen]
pub struct Scene {
    bundle: SynthBundle,
    truth: PanopticResult,
    decoded: PanopticResult,
    naive: PanopticResult,
}

#[wasm_bindgen]
impl Scene {
    /// Out-of-range arguments are clamped; a scene that cannot be packed
    /// falls back to fewer nuclei.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u32, nuclei: u32, touching: bool, eight_connected: bool) -> Scene {
        let size = size.clamp(24, 256) as usize;
        let mut cfg = SynthConfig {
            seed: seed as u64,
            height: size,
            width: size,
            n_nuclei: nuclei.min(200) as usize,
            allow_touching: touching,
            ..Default::default()
        };
        let bundle = loop {
            match generate(&cfg) {
                Ok(b) => break b,
                Err(_) => cfg.n_nuclei /= 2,
            }
        };
        let connectivity = if eight_connected {
            Connectivity::Eight
        } else {
            Connectivity::Four
        };
        let recon = ReconstructionConfig {
            connectivity,
            n_directions: cfg.n_directions,
        };
        let truth = assign_classes(&bundle.instances, &bundle.classes)
            .expect("generated maps are consistent");
        let decoded = decode_maps(&bundle.classes, &bundle.directions, &recon)
            .expect("generated maps are consistent");

        let mut plain = InstanceMap::new(size, size);
        for (i, comp) in connected_components(&bundle.classes.foreground(), connectivity)
            .iter()
            .enumerate()
        {
            for &(r, c) in comp {
                plain.set(r, c, i as u16 + 1);
            }
        }
        let naive =
            assign_classes(&plain, &bundle.classes).expect("components cover foreground only");
        Scene {
            bundle,
            truth,
            decoded,
            naive,
        }
    }

    pub fn size(&self) -> u32 {
        self.bundle.instances.width() as u32
    }

    pub fn nuclei(&self) -> u32 {
        self.truth.per_instance_class.len() as u32
    }

    pub fn truth_rgba(&self) -> Vec<u8> {
        rgba(&overlay_rgb(&self.truth.instances, Some(&self.truth.classes)).unwrap())
    }

    pub fn directions_rgba(&self) -> Vec<u8> {
        rgba(&direction_rgb(&self.bundle.directions))
    }

    pub fn decoded_rgba(&self) -> Vec<u8> {
        rgba(&overlay_rgb(&self.decoded.instances, Some(&self.decoded.classes)).unwrap())
    }

    pub fn naive_rgba(&self) -> Vec<u8> {
        rgba(&overlay_rgb(&self.naive.instances, Some(&self.naive.classes)).unwrap())
    }

    pub fn decoded_instances(&self) -> u32 {
        self.decoded.per_instance_class.len() as u32
    }

    pub fn naive_instances(&self) -> u32 {
        self.naive.per_instance_class.len() as u32
    }

    /// mPQ of the direction-based decode against the ground truth; NaN if undefined.
    pub fn decoded_mpq(&self) -> f64 {
        score(&self.truth, &self.decoded)
    }

    /// mPQ of plain connected components against the ground truth; NaN if undefined.
    pub fn naive_mpq(&self) -> f64 {
        score(&self.truth, &self.naive)
    }
}

fn score(truth: &PanopticResult, pred: &PanopticResult) -> f64 {
    mpq(&[(truth.clone(), pred.clone())], PqAggregation::Pooled)
        .ok()
        .and_then(|r| r.mpq)
        .unwrap_or(f64::NAN)
}

/// Clamps and rounds six comma-separated raw counts.
///
/// Returns the cleaned counts joined by commas, or a message starting with
/// `error:`.
#[wasm_bindgen]
pub fn postprocess_counts(raw: &str) -> String {
    let parsed: Result<Vec<f64>, _> = raw.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = match parsed {
        Ok(v) => v,
        Err(e) => return format!("error: {e}"),
    };
    let Ok(arr) = <[f64; 6]>::try_from(values.as_slice()) else {
        return format!("error: expected 6 values, got {}", values.len());
    };
    match round_counts(&CountVector(arr)) {
        Ok(c) => {
            c.0.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        Err(e) => format!("error: {e}"),
    }
}
