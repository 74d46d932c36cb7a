//! Local scattering function estimation for non-stationary fading channels.
//!
//! The pipeline runs from a sampled time-variant frequency response through
//! a multitaper LSF estimate per stationarity region, noise thresholding,
//! delay and Doppler marginals, RMS spreads, and finally a truncated
//! bi-modal Gaussian fit of the pooled spreads. [`synth`] generates inputs
//! with known multipath content.

pub mod container;
pub mod dispersion;
pub mod error;
pub mod grid;
pub mod lsf;
pub mod marginal;
pub mod mixfit;
pub mod synth;
pub mod taper;

pub use container::{read_container, write_container, LsfDump};
pub use dispersion::{coherence, rms_spreads, CoherenceReport, SpreadSeries};
pub use error::{Error, FormatError, Result};
pub use grid::{link_index, GridParams, TimeVariantFrequencyResponse};
pub use lsf::{combine_links, estimate_all_links, estimate_lsf, LocalScatteringFunction, RegionSpec};
pub use marginal::{dsd, pdp, threshold_lsf, MarginalKind, MarginalProfile, ThresholdConfig, ThresholdReport};
pub use mixfit::{fit_mixture, ks_gof, mixture_cdf, mixture_pdf, FitConfig, MixtureFit};
pub use synth::{preset, synthesize, PathSpec, PresetName, Trajectory};
pub use taper::{build_taper_set, compute_dpss, DpssFamily, TaperSet};
