#include "catnet/sample.hpp"

namespace catnet {

PreparedSample prepare_sample(const SceneSample& sample, const EncoderConfig& config) {
  require(!sample.center.empty() && !sample.surrounding.empty() && !sample.global.empty(),
          "sample " + sample.id + ": all three rasters are required");
  PreparedSample p;
  p.id = sample.id;
  p.label = sample.label;
  p.center = to_patches(sample.center, config.input_resize, config.patch_size);
  p.surrounding = to_patches(sample.surrounding, config.input_resize, config.patch_size);
  p.global = to_patches(sample.global, config.input_resize, config.patch_size);
  return p;
}

}  // namespace catnet
