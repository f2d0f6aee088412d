//! CSV artifacts with header rows and `.` decimals.

use std::fmt::Write as _;

use beamosd_core::array::AngleGrid;
use beamosd_core::beamformer::BeamformerBank;
use beamosd_core::spatial::SpatialSpectrum;

use crate::Result;

/// `angle_deg,gain_real,gain_imag,gain_abs`, one row per grid angle.
pub fn beampattern(bank: &BeamformerBank, beam: usize, freq: f64, angles: &AngleGrid) -> Result<String> {
    let mut s = String::from("angle_deg,gain_real,gain_imag,gain_abs\n");
    for j in 0..angles.len() {
        let g = bank.beampattern(beam, freq, angles.angle(j))?;
        writeln!(s, "{},{},{},{}", angles.angle_deg(j), g.re, g.im, g.norm()).unwrap();
    }
    Ok(s)
}

/// `frame_index`, the SRP value at each grid angle, then the raw and
/// smoothed DOA in degrees.
pub fn srp(spectrum: &SpatialSpectrum, angles: &AngleGrid) -> String {
    let mut s = String::from("frame_index");
    for j in 0..spectrum.num_angles {
        write!(s, ",p{j:03}").unwrap();
    }
    s.push_str(",doa_deg_raw,doa_deg_smoothed\n");
    for t in 0..spectrum.num_frames() {
        write!(s, "{t}").unwrap();
        for p in spectrum.frame(t) {
            write!(s, ",{p}").unwrap();
        }
        let raw = angles.angle_deg(spectrum.doa_raw[t]);
        writeln!(s, ",{},{}", raw, spectrum.doa_smoothed[t].to_degrees()).unwrap();
    }
    s
}
