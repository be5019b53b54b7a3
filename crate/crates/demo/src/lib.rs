//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page offers three views: a histogram of noisy releases of one clipped
//! coordinate, the privacy-loss curve of that release against a neighbouring
//! input, and ROC/PR curves for pasted scores. The computations are plain
//! functions so they can be tested natively; the exported wrappers only
//! translate errors.

use ldpfraud::ldp::{clip_l1, MechanismConfig};
use ldpfraud::metrics::{auc_roc, average_precision};
use ldpfraud::rng::stream;
use wasm_bindgen::prelude::*;

/// Binned one-dimensional releases with the Laplace expectation for overlay.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    centre: f64,
    counts: Vec<f64>,
    expected: Vec<f64>,
}

#[wasm_bindgen]
impl Histogram {
    #[wasm_bindgen(getter)]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[wasm_bindgen(getter)]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// The input after clipping, which is where the noise is centred.
    #[wasm_bindgen(getter)]
    pub fn centre(&self) -> f64 {
        self.centre
    }

    #[wasm_bindgen(getter)]
    pub fn counts(&self) -> Vec<f64> {
        self.counts.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn expected(&self) -> Vec<f64> {
        self.expected.clone()
    }
}

/// Points of the ROC and precision/recall curves plus their areas.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    fpr: Vec<f64>,
    tpr: Vec<f64>,
    recall: Vec<f64>,
    precision: Vec<f64>,
    auc_roc: f64,
    auc_pr: f64,
}

#[wasm_bindgen]
impl Curves {
    #[wasm_bindgen(getter)]
    pub fn fpr(&self) -> Vec<f64> {
        self.fpr.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn tpr(&self) -> Vec<f64> {
        self.tpr.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn recall(&self) -> Vec<f64> {
        self.recall.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn precision(&self) -> Vec<f64> {
        self.precision.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn auc_roc(&self) -> f64 {
        self.auc_roc
    }

    #[wasm_bindgen(getter)]
    pub fn auc_pr(&self) -> f64 {
        self.auc_pr
    }
}

fn noisy_mechanism(epsilon: f64) -> Result<MechanismConfig, String> {
    let mech = MechanismConfig::new(epsilon, 1).map_err(|e| e.to_string())?;
    if mech.noise_free() {
        return Err("an infinite budget releases the clipped value unchanged".into());
    }
    Ok(mech)
}

fn laplace_cdf(x: f64, mu: f64, b: f64) -> f64 {
    if x < mu {
        0.5 * ((x - mu) / b).exp()
    } else {
        1.0 - 0.5 * (-(x - mu) / b).exp()
    }
}

/// Releases `value` `samples` times at budget `epsilon` and bins the outputs
/// over the clipped centre ± 5 noise scales.
pub fn release_histogram(epsilon: f64, value: f64, samples: usize, bins: usize, seed: u64) -> Result<Histogram, String> {
    let mech = noisy_mechanism(epsilon)?;
    if samples == 0 || bins == 0 {
        return Err("samples and bins must be positive".into());
    }
    let centre = clip_l1(&[value], mech.clip_radius())[0];
    let b = mech.scale();
    let (lo, hi) = (centre - 5.0 * b, centre + 5.0 * b);
    let width = (hi - lo) / bins as f64;
    let mut rng = stream(seed, &[]);
    let mut counts = vec![0.0; bins];
    for _ in 0..samples {
        let o = mech.perturb(&[value], &mut rng).map_err(|e| e.to_string())?[0];
        if (lo..hi).contains(&o) {
            counts[(((o - lo) / width) as usize).min(bins - 1)] += 1.0;
        }
    }
    let expected = (0..bins)
        .map(|i| {
            let a = lo + i as f64 * width;
            samples as f64 * (laplace_cdf(a + width, centre, b) - laplace_cdf(a, centre, b))
        })
        .collect();
    Ok(Histogram {
        lo,
        hi,
        centre,
        counts,
        expected,
    })
}

/// `log p(o | z) − log p(o | z′)` for one-dimensional inputs at `points`
/// evenly spaced outputs in `[lo, hi]`. Both inputs are clipped first.
pub fn privacy_loss(epsilon: f64, z: f64, z_alt: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    let mech = noisy_mechanism(epsilon)?;
    if points < 2 || !(hi > lo) {
        return Err("need at least two points over a non-empty range".into());
    }
    let r = mech.clip_radius();
    let (a, c) = (clip_l1(&[z], r), clip_l1(&[z_alt], r));
    (0..points)
        .map(|i| {
            let o = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            mech.log_density_ratio(&a, &c, &[o]).map_err(|e| e.to_string())
        })
        .collect()
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("cannot read {what} `{t}`")))
        .collect()
}

/// Parses comma- or whitespace-separated scores and 0/1 labels and traces
/// both curves over every distinct threshold.
pub fn curves(scores: &str, labels: &str) -> Result<Curves, String> {
    let scores: Vec<f64> = parse_list(scores, "score")?;
    let labels: Vec<u8> = parse_list(labels, "label")?;
    if labels.iter().any(|&l| l > 1) {
        return Err("labels must be 0 or 1".into());
    }
    let auc_roc = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
    let auc_pr = average_precision(&scores, &labels).map_err(|e| e.to_string())?;

    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Curves {
        fpr: vec![0.0],
        tpr: vec![0.0],
        recall: Vec::new(),
        precision: Vec::new(),
        auc_roc,
        auc_pr,
    };
    let (mut tp, mut fp) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        let group_ends = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if group_ends {
            out.fpr.push(fp / neg);
            out.tpr.push(tp / pos);
            out.recall.push(tp / pos);
            out.precision.push(tp / (tp + fp));
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = releaseHistogram)]
pub fn release_histogram_js(epsilon: f64, value: f64, samples: usize, bins: usize, seed: u64) -> Result<Histogram, JsError> {
    release_histogram(epsilon, value, samples, bins, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = privacyLoss)]
pub fn privacy_loss_js(epsilon: f64, z: f64, z_alt: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    privacy_loss(epsilon, z, z_alt, lo, hi, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rankingCurves)]
pub fn curves_js(scores: &str, labels: &str) -> Result<Curves, JsError> {
    curves(scores, labels).map_err(|e| JsError::new(&e))
}
