#pragma once

#include "demofuse/ekf.hpp"
#include "demofuse/streams.hpp"

namespace demofuse {

/// Fused simultaneous marker observations only, no filtering; detection gaps
/// stay unsampled.
Trajectory baseline_marker_only(const std::vector<MeasurementEvent>& events,
                                const RigConfig& rig);

/// Initialize from the first fused observation, then predict-only dead
/// reckoning on the IMU stream.
Trajectory baseline_imu_only(const std::vector<MeasurementEvent>& events,
                             const RigConfig& rig, const NoiseParams& noise);

}  // namespace demofuse
