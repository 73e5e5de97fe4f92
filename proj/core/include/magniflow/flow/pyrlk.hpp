#pragma once

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"

namespace magniflow {

struct PyrLkOptions {
  int levels = 3;
  int window = 9;       // odd, >= 3
  int iterations = 8;   // Gauss-Newton refinements per level
  // Windows whose smallest structure-tensor eigenvalue (per pixel of window)
  // falls below this are treated as textureless and get zero flow.
  double min_eigenvalue = 1e-7;
};

// Dense coarse-to-fine Lucas-Kanade on luminance. Returns flow f with
// frame_b(p + f(p)) ~= frame_a(p).
FlowField estimate_flow_pyrlk(const ImageBuffer& frame_a, const ImageBuffer& frame_b,
                              const PyrLkOptions& options = {});

}  // namespace magniflow
