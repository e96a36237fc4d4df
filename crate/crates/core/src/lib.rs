//! Return maps near a reversible bifocal homoclinic network: the local and
//! global transitions, spirals on the cross-sections, symmetric orbit search
//! and the symbolic dynamics of the first-return map.

pub mod error;
pub mod geometry;
pub mod global;
pub mod linalg;
pub mod local;
pub mod orbit;
pub mod params;
pub mod real;
pub mod search;
pub mod spiral;
pub mod symbolic;

pub use error::{Error, Result};
pub use geometry::{bipolar, cartesian, involution, BipolarPoint, InPoint, OutPoint, Point4, SigmaPoint};
pub use global::{global_map_s, global_map_u, return_map, return_map_inverse, trace_orbit, OrbitStop, OrbitTrace, Passage, ReturnResult};
pub use local::{flight_time, local_map, local_map_inverse, trajectory_through_vo, Trajectory4};
pub use orbit::{
    approximate_switching_point, find_reversible_periodic, find_secondary_homoclinics, verify_superhomoclinic, ConvergenceReport,
    HomoclinicPoint, PeriodicPoint, SwitchingPoint,
};
pub use params::{validate_params, BranchParams, ModelParams, ValidationReport};
pub use real::{Dd, Real, Wide};
pub use search::chain::{estimate_area_ratio, refine_nested_disk, AreaRatio, ChainExport, DiskChain, Region};
pub use search::target::PairSlot;
pub use spiral::{classify_spiral, find_spiral_line_intersections, image_spiral, IntersectionPoint, SpiralReport, SpiralSamples};
pub use symbolic::{
    coding_map, entropy_lower_bound, verify_semiconjugacy, verify_switching_sweep, CodingResult, EntropyBound, Itinerary, SweepReport,
};
