#pragma once

#include "catnet/encoder.hpp"
#include "catnet/image.hpp"

#include <optional>
#include <string>
#include <utility>

namespace catnet {

/// One scene-in-scene record: concentric center / surrounding / global rasters.
struct SceneSample {
  std::string id;
  int label = -1;
  RgbImage center;
  RgbImage surrounding;
  RgbImage global;
  std::optional<std::pair<double, double>> geo;  // (lon, lat) degrees
};

/// A sample after uniform resizing and patch flattening, ready for the encoder.
struct PreparedSample {
  std::string id;
  int label = -1;
  PatchMat center;
  PatchMat surrounding;
  PatchMat global;

  const PatchMat& branch(Branch b) const {
    return b == Branch::center ? center : (b == Branch::surrounding ? surrounding : global);
  }
};

PreparedSample prepare_sample(const SceneSample& sample, const EncoderConfig& config);

}  // namespace catnet
